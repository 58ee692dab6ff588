//! Run configuration: inputs, resources, seeds and thresholds.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::clean::BotRules;
use crate::content::coherence::CoherenceParams;
use crate::content::lda::{LdaConfig, Weighting};
use crate::content::{StopWords, DEFAULT_COVID_VARIANTS};
use crate::engagement::EventCalendar;
use crate::error::{Error, Result};
use crate::geo::{load_population, CaseSeries, PolygonIndex};
use crate::ingest::{DateWindow, Keyword, KeywordFilter};
use crate::sentiment::{Category, EmojiCategoryTable, EventName, SentimentLexicon, ShareWeighting};
use crate::states::State;
use crate::temporal::ClockTable;

/// Everything a run needs. Every field has a default, so a config file only
/// lists what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub compensation_inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    pub window: DateWindow,
    /// Restrict state-level outputs to these states.
    pub states: Option<Vec<State>>,
    pub seed: u64,
    /// Worker threads; all cores when absent. Does not affect outputs.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    /// Keyword list; the 2020 crawler list when absent.
    pub keywords: Option<Vec<Keyword>>,
    pub resources: Resources,
    pub geocoder: GeocoderConfig,
    pub bots: BotRules,
    pub engagement: EngagementConfig,
    pub topics: TopicsConfig,
    pub sentiment: SentimentConfig,
    pub stats: StatsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            compensation_inputs: Vec::new(),
            out_dir: PathBuf::from("out"),
            window: DateWindow::collection_2020(),
            states: None,
            seed: 2020,
            workers: None,
            keywords: None,
            resources: Resources::default(),
            geocoder: GeocoderConfig::default(),
            bots: BotRules::default(),
            engagement: EngagementConfig::default(),
            topics: TopicsConfig::default(),
            sentiment: SentimentConfig::default(),
            stats: StatsConfig::default(),
        }
    }
}

/// Optional resource files. Bundled defaults cover the state clock table,
/// stop words, the emoji table and the lexicon.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resources {
    pub state_clock: Option<PathBuf>,
    pub calendar: Option<PathBuf>,
    pub emoji_table: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub boundaries: Option<PathBuf>,
    pub population: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub geocoder_cache: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeocoderConfig {
    /// Reverse-geocoding endpoint; only used when `offline` is false.
    pub endpoint: Option<String>,
    /// Contact identifier sent with remote requests; kept out of manifests.
    #[serde(skip_serializing)]
    pub contact: Option<String>,
    pub offline: bool,
    pub pace_ms: u64,
}

impl Default for GeocoderConfig {
    fn default() -> Self {
        GeocoderConfig { endpoint: None, contact: None, offline: true, pace_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngagementConfig {
    pub weeks_before: u32,
    pub weeks_after: u32,
    /// States per anchor table, ranked by business-hour volume.
    pub top_states: usize,
}

impl Default for EngagementConfig {
    fn default() -> Self {
        EngagementConfig { weeks_before: 5, weeks_after: 3, top_states: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    pub candidates: Vec<usize>,
    pub repeats: usize,
    pub elbow_threshold: f64,
    pub passes: usize,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub weighting: Weighting,
    pub top_n: usize,
    pub window: usize,
    pub min_token_len: usize,
    pub tag_limit: Option<usize>,
    pub covid_variants: Vec<String>,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        TopicsConfig {
            candidates: vec![2, 4, 6, 8, 10, 12, 14],
            repeats: 10,
            elbow_threshold: 0.05,
            passes: 500,
            alpha: None,
            beta: 0.01,
            weighting: Weighting::TfidfScaled,
            top_n: 10,
            window: 110,
            min_token_len: 2,
            tag_limit: Some(100),
            covid_variants: DEFAULT_COVID_VARIANTS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TopicsConfig {
    pub fn lda(&self, k: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            alpha: self.alpha,
            beta: self.beta,
            passes: self.passes,
            weighting: self.weighting,
            ..LdaConfig::new(k, seed)
        }
    }

    pub fn coherence(&self) -> CoherenceParams {
        CoherenceParams { top_n: self.top_n, window: self.window }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentimentConfig {
    pub subjectivity_thresholds: Vec<f64>,
    pub polarity_thresholds: Vec<f64>,
    pub weighting: ShareWeighting,
    pub event_window_days: u32,
    /// Share components fed to the MANOVA.
    pub manova_components: Vec<Category>,
    /// Per-event state lists overriding the defaults.
    pub event_states: BTreeMap<EventName, Vec<State>>,
}

impl Default for SentimentConfig {
    fn default() -> Self {
        let grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        SentimentConfig {
            subjectivity_thresholds: grid.clone(),
            polarity_thresholds: grid,
            weighting: ShareWeighting::Occurrence,
            event_window_days: 7,
            manova_components: vec![Category::Positive, Category::Neutral],
            event_states: BTreeMap::new(),
        }
    }
}

impl SentimentConfig {
    pub fn states_for(&self, event: EventName) -> Vec<State> {
        self.event_states.get(&event).cloned().unwrap_or_else(|| event.default_states())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub r_threshold: f64,
    pub p_threshold: f64,
    /// Date of the case snapshot used for normalization; window end when absent.
    pub snapshot: Option<NaiveDate>,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { r_threshold: 0.8, p_threshold: 0.001, snapshot: None }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    /// Load a TOML config; relative paths inside it resolve against the
    /// config file's directory.
    pub fn from_path(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::resource(path, e))?;
        let mut cfg = RunConfig::from_toml(&text).map_err(|e| Error::resource(path, e))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.iter_mut().for_each(fix);
        self.compensation_inputs.iter_mut().for_each(fix);
        fix(&mut self.out_dir);
        let r = &mut self.resources;
        for p in [
            &mut r.state_clock,
            &mut r.calendar,
            &mut r.emoji_table,
            &mut r.lexicon,
            &mut r.stopwords,
            &mut r.boundaries,
            &mut r.population,
            &mut r.cases,
            &mut r.geocoder_cache,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn keyword_filter(&self) -> Result<KeywordFilter> {
        match &self.keywords {
            Some(k) => KeywordFilter::new(k.clone()),
            None => Ok(KeywordFilter::default_2020()),
        }
    }

    pub fn snapshot_date(&self) -> NaiveDate {
        self.stats.snapshot.unwrap_or(self.window.end)
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::InvalidInput("no input files".into()));
        }
        let t = &self.topics;
        if t.candidates.is_empty() || t.candidates.windows(2).any(|w| w[0] >= w[1]) || t.candidates[0] == 0 {
            return Err(Error::InvalidInput("topic candidates must be positive and strictly ascending".into()));
        }
        if t.repeats == 0 || t.passes == 0 || t.top_n == 0 || t.window == 0 {
            return Err(Error::InvalidInput("topic repeats, passes, top_n and window must be positive".into()));
        }
        if self.sentiment.manova_components.is_empty() {
            return Err(Error::InvalidInput("manova_components is empty".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidInput("workers must be positive".into()));
        }
        self.keyword_filter()?;
        Ok(())
    }
}

/// Parsed resources, loaded once at startup so a bad file fails the run
/// before any work is done.
#[derive(Debug, Clone)]
pub struct LoadedResources {
    pub clock: ClockTable,
    pub calendar: Option<EventCalendar>,
    pub emoji: EmojiCategoryTable,
    pub lexicon: SentimentLexicon,
    pub stopwords: StopWords,
    pub boundaries: Option<PolygonIndex>,
    pub population: Option<BTreeMap<State, u64>>,
    pub cases: Option<CaseSeries>,
}

impl LoadedResources {
    pub fn load(cfg: &RunConfig) -> Result<LoadedResources> {
        for p in cfg.inputs.iter().chain(&cfg.compensation_inputs) {
            if !p.is_file() {
                return Err(Error::resource(p, "input file not found"));
            }
        }
        let r = &cfg.resources;
        let population = match &r.population {
            Some(p) => {
                let f = std::fs::File::open(p).map_err(|e| Error::resource(p, e))?;
                Some(load_population(f).map_err(|e| Error::resource(p, e))?)
            }
            None => None,
        };
        Ok(LoadedResources {
            clock: r.state_clock.as_deref().map_or_else(|| Ok(ClockTable::default_2020()), ClockTable::from_path)?,
            calendar: r.calendar.as_deref().map(EventCalendar::from_path).transpose()?,
            emoji: r
                .emoji_table
                .as_deref()
                .map_or_else(|| Ok(EmojiCategoryTable::default_table()), EmojiCategoryTable::from_path)?,
            lexicon: r
                .lexicon
                .as_deref()
                .map_or_else(|| Ok(SentimentLexicon::default_english()), SentimentLexicon::from_path)?,
            stopwords: r.stopwords.as_deref().map_or_else(|| Ok(StopWords::default_english()), StopWords::from_path)?,
            boundaries: r.boundaries.as_deref().map(PolygonIndex::from_path).transpose()?,
            population,
            cases: r.cases.as_deref().map(CaseSeries::from_path).transpose()?,
        })
    }
}
