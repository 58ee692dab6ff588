//! End-to-end runs: every subcommand recomputes what it needs from the raw
//! inputs, writes its tables into a staging directory, and moves them into
//! the output directory only when everything succeeded.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::clean::{build_activities, detect_bots, remove_bot_tweets, user_activity_table, BotReport, RemovalCounts};
use crate::config::{LoadedResources, RunConfig};
use crate::content::coherence::{coherence_cv, select_topic_count};
use crate::content::lda::train_lda;
use crate::content::{variant_group, Corpus, Preprocessor, TagKind, TagTable};
use crate::engagement::{top_states_by_business_volume, weekly_window_series, write_report_csv, Anchor, ReportKind};
use crate::error::{Error, Result};
use crate::geo::{
    build_state_stats, county_density_table, normalize, state_counts, write_gps_points, Basis, CountyResolver,
    RemoteGeocoder,
};
use crate::ingest::{apply_geo_filter, ingest_files, IngestCounters, IngestOptions, KeywordCorpus, StateLocator, TweetRecord};
use crate::sentiment::{
    daily_sentiment_series, derive_case_events, emoji_frequency, event_manova, event_sentiment, polarity_ratio_grid,
    score_text, write_daily_csv, write_emoji_frequency_csv, write_event_csv, write_grid_csv, EventDates, EventName,
    EventSentiment,
};
use crate::states::State;
use crate::stats::{pairwise_state_correlations, pearson};
use crate::temporal::{
    assign_phase, build_histograms, localize, workweek_gap_table, write_gap_csv, GroupBy, GroupKey, Localized,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Subcommand {
    Ingest,
    Clean,
    Volumes,
    Engagement,
    Geo,
    Topics,
    Sentiment,
    Events,
    Stats,
    All,
}

impl Subcommand {
    pub const STAGES: [Subcommand; 9] = [
        Subcommand::Ingest,
        Subcommand::Clean,
        Subcommand::Volumes,
        Subcommand::Engagement,
        Subcommand::Geo,
        Subcommand::Topics,
        Subcommand::Sentiment,
        Subcommand::Events,
        Subcommand::Stats,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Subcommand::Ingest => "ingest",
            Subcommand::Clean => "clean",
            Subcommand::Volumes => "volumes",
            Subcommand::Engagement => "engagement",
            Subcommand::Geo => "geo",
            Subcommand::Topics => "topics",
            Subcommand::Sentiment => "sentiment",
            Subcommand::Events => "events",
            Subcommand::Stats => "stats",
            Subcommand::All => "all",
        }
    }
}

impl fmt::Display for Subcommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Subcommand {
    type Err = Error;

    fn from_str(s: &str) -> Result<Subcommand> {
        Subcommand::STAGES
            .into_iter()
            .chain([Subcommand::All])
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown subcommand {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ArtifactInfo {
    pub sha256: String,
    /// Data rows (CSV lines after the header, NDJSON lines); absent for JSON.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub artifacts: BTreeMap<String, ArtifactInfo>,
    pub counters: IngestCounters,
    pub skipped_stages: Vec<String>,
    pub notices: Vec<String>,
    pub manifest: PathBuf,
}

const STAGING: &str = ".geotweet-staging";
pub const MANIFEST: &str = "manifest.json";

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn file_digest(path: &Path) -> Result<Value> {
    let bytes = fs::read(path).map_err(|e| Error::resource(path, e))?;
    Ok(json!({"path": path.display().to_string(), "sha256": hex_sha256(&bytes), "bytes": bytes.len()}))
}

struct Staging {
    dir: PathBuf,
    artifacts: BTreeMap<String, ArtifactInfo>,
}

impl Staging {
    fn create(out_dir: &Path) -> Result<Staging> {
        let dir = out_dir.join(STAGING);
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir_all(&dir)?;
        Ok(Staging { dir, artifacts: BTreeMap::new() })
    }

    fn put(&mut self, rel: &str, bytes: &[u8], rows: Option<u64>) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        self.artifacts.insert(rel.to_string(), ArtifactInfo { sha256: hex_sha256(bytes), rows });
        Ok(())
    }

    fn csv(&mut self, rel: &str, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
        let mut buf = Vec::new();
        write(&mut buf)?;
        let rows = buf.iter().filter(|&&b| b == b'\n').count().saturating_sub(1) as u64;
        self.put(rel, &buf, Some(rows))
    }

    fn json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.put(rel, &buf, None)
    }

    fn ndjson(&mut self, rel: &str, records: &[TweetRecord]) -> Result<()> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r)?;
            buf.push(b'\n');
        }
        self.put(rel, &buf, Some(records.len() as u64))
    }

    /// Move every staged file into `out_dir`.
    fn commit(&self, out_dir: &Path) -> Result<()> {
        for rel in self.artifacts.keys() {
            let dest = out_dir.join(rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::rename(self.dir.join(rel), dest)?;
        }
        fs::remove_dir_all(&self.dir)?;
        Ok(())
    }

    fn discard(&self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// Corpus after ingest and cleaning, shared by every stage.
struct Prepared {
    keyword: KeywordCorpus,
    counters: IngestCounters,
    bots: BotReport,
    removal: RemovalCounts,
    geo_records: usize,
    records: Vec<TweetRecord>,
}

fn prepare(cfg: &RunConfig, res: &LoadedResources, notices: &mut Vec<String>) -> Result<Prepared> {
    let opts = IngestOptions { filter: cfg.keyword_filter()?, window: cfg.window };
    let mut keyword = ingest_files(&cfg.inputs, &cfg.compensation_inputs, &opts)?;
    let bots = detect_bots(build_activities(&keyword.records).values(), &cfg.bots);
    let mut counters = keyword.counters.clone();
    let locator = res.boundaries.as_ref().map(|b| b as &dyn StateLocator);
    let geo = apply_geo_filter(std::mem::take(&mut keyword.records), locator, &mut counters);
    let geo_records = geo.len();
    let (mut records, removal) = remove_bot_tweets(geo, &bots);
    if let Some(states) = &cfg.states {
        let keep: BTreeSet<State> = states.iter().copied().collect();
        let before = records.len();
        records.retain(|r| r.state().is_some_and(|s| keep.contains(&s)));
        notices.push(format!("state filter kept {} of {} records", records.len(), before));
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Prepared { keyword, counters, bots, removal, geo_records, records })
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    res: &'a LoadedResources,
    data: &'a Prepared,
    localized: Vec<Localized<'a>>,
    out: Staging,
    notices: Vec<String>,
    skipped: Vec<String>,
    explicit: bool,
    events: Option<Vec<EventSentiment>>,
}

impl Ctx<'_> {
    /// A stage that cannot run: an error when asked for directly, a recorded
    /// skip inside `all`.
    fn unavailable(&mut self, stage: &str, why: &str) -> Result<()> {
        if self.explicit {
            return Err(Error::Precondition(format!("{stage}: {why}")));
        }
        self.skipped.push(format!("{stage}: {why}"));
        Ok(())
    }

    fn ingest(&mut self) -> Result<()> {
        let data = self.data;
        self.out.ndjson("ingest/records.ndjson", &data.records)?;
        self.out.json("ingest/counters.json", &data.counters)?;
        self.out.csv("ingest/daily_sources.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["date", "primary", "compensation"])?;
            for (date, src) in &data.keyword.per_day {
                csv.write_record([date.to_string(), src.primary.to_string(), src.compensation.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })
    }

    fn clean(&mut self) -> Result<()> {
        let data = self.data;
        self.out.csv("clean/bots.csv", |w| data.bots.write_csv(w))?;
        let activity = user_activity_table(&data.records);
        self.out.csv("clean/user_activity.csv", |w| activity.write_csv(w))?;
        let summary = json!({
            "flagged_users": data.bots.flagged.len(),
            "volume_rule_users": data.bots.volume_count,
            "regularity_rule_users": data.bots.regularity_count,
            "removed_tweets": {"volume": data.removal.volume, "regularity": data.removal.regularity},
            "records_before": data.geo_records,
            "records_after": data.records.len(),
            "users_after": activity.users,
            "share_users_at_most_5_tweets": activity.cumulative_at_most(5),
        });
        self.out.json("clean/summary.json", &summary)
    }

    fn volumes(&mut self) -> Result<()> {
        let window = self.cfg.window;
        let none = BTreeSet::new();
        let all = build_histograms(&self.localized, GroupBy::All, &window, &none);
        let by_state = build_histograms(&self.localized, GroupBy::State, &window, &none);
        self.out.csv("volumes/daily_all.csv", |w| all.write_daily_csv(w, &window))?;
        self.out.csv("volumes/daily_state.csv", |w| by_state.write_daily_csv(w, &window))?;
        self.out.csv("volumes/matrix_all.csv", |w| all.write_matrix_csv(w))?;
        self.out.csv("volumes/matrix_state.csv", |w| by_state.write_matrix_csv(w))?;
        let mut gaps = Vec::new();
        for (key, m) in all.matrices.iter().chain(&by_state.matrices) {
            match workweek_gap_table(m) {
                Ok(rows) => gaps.push((*key, rows)),
                Err(e) => self.notices.push(format!("workweek gap for {key} skipped: {e}")),
            }
        }
        self.out.csv("volumes/workweek_gap.csv", |w| write_gap_csv(w, &gaps))?;
        let mut phases: BTreeMap<(String, GroupKey), u64> = BTreeMap::new();
        for l in &self.localized {
            if let Ok(p) = assign_phase(l.local.date()) {
                *phases.entry((p.to_string(), GroupKey::All)).or_default() += 1;
                *phases.entry((p.to_string(), GroupKey::State(l.state))).or_default() += 1;
            }
        }
        self.out.csv("volumes/phase_counts.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["phase", "state", "count"])?;
            for ((phase, key), n) in &phases {
                csv.write_record([phase.clone(), key.to_string(), n.to_string()])?;
            }
            csv.flush()?;
            Ok(())
        })
    }

    fn engagement(&mut self) -> Result<()> {
        let Some(cal) = &self.res.calendar else {
            return self.unavailable("engagement", "needs an event calendar (resources.calendar)");
        };
        let ec = &self.cfg.engagement;
        let allowed = |s: &State| self.cfg.states.as_ref().is_none_or(|v| v.contains(s));
        for anchor in [Anchor::Lockdown, Anchor::Reopen] {
            let top: Vec<State> = top_states_by_business_volume(&self.localized, cal, anchor)
                .into_iter()
                .map(|(s, _)| s)
                .filter(|s| allowed(s))
                .take(ec.top_states)
                .collect();
            if top.is_empty() {
                self.notices.push(format!("engagement: no state has a {} date", anchor.as_str()));
                continue;
            }
            let mut first = Vec::new();
            let mut weekly = Vec::new();
            let mut ordered: Vec<State> = cal.states().filter(|s| allowed(s)).collect();
            ordered.sort_by_key(|s| s.abbr());
            for s in &top {
                first.extend(weekly_window_series(&self.localized, *s, cal, anchor, 0, 0)?);
            }
            for s in ordered {
                if cal.anchor(s, anchor).is_some() {
                    weekly.extend(weekly_window_series(&self.localized, s, cal, anchor, ec.weeks_before, ec.weeks_after)?);
                }
            }
            let a = anchor.as_str();
            self.out.csv(&format!("engagement/{a}_hourly.csv"), |w| write_report_csv(w, &first, ReportKind::Hourly))?;
            self.out.csv(&format!("engagement/{a}_daily.csv"), |w| write_report_csv(w, &first, ReportKind::Daily))?;
            self.out.csv(&format!("engagement/{a}_weekly_hourly.csv"), |w| {
                write_report_csv(w, &weekly, ReportKind::Hourly)
            })?;
            self.out.csv(&format!("engagement/{a}_weekly_daily.csv"), |w| {
                write_report_csv(w, &weekly, ReportKind::Daily)
            })?;
        }
        Ok(())
    }

    fn geo(&mut self) -> Result<()> {
        let records = &self.data.records;
        let counts = state_counts(records);
        let total: u64 = counts.values().sum();
        self.out.csv("geo/state_counts.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["state", "count", "share"])?;
            for (s, n) in &counts {
                csv.write_record([s.abbr().to_string(), n.to_string(), format!("{:.6}", *n as f64 / total as f64)])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        self.out.csv("geo/gps_points.csv", |w| write_gps_points(w, records))?;

        match &self.res.population {
            Some(pop) => {
                let empty = Default::default();
                let cases = self.res.cases.as_ref().unwrap_or(&empty);
                let stats = build_state_stats(&counts, pop, cases, self.cfg.snapshot_date());
                let tables: Vec<_> = Basis::ALL.iter().map(|b| normalize(&stats, *b).ok()).collect();
                self.out.csv("geo/state_normalized.csv", |w| {
                    let mut csv = csv::Writer::from_writer(w);
                    let mut header = vec!["state", "tweets", "population", "cases", "deaths"];
                    header.extend(Basis::ALL.iter().map(|b| b.as_str()));
                    csv.write_record(&header)?;
                    for s in &stats {
                        let mut row = vec![
                            s.state.abbr().to_string(),
                            s.tweet_count.to_string(),
                            s.population.to_string(),
                            s.cum_cases.to_string(),
                            s.cum_deaths.to_string(),
                        ];
                        for t in &tables {
                            let rate = t.as_ref().and_then(|t| t.rates.get(&s.state));
                            row.push(rate.map(|r| format!("{r:.6}")).unwrap_or_default());
                        }
                        csv.write_record(&row)?;
                    }
                    csv.flush()?;
                    Ok(())
                })?;
                let xs: Vec<f64> = stats.iter().map(|s| s.tweet_count as f64).collect();
                let ys: Vec<f64> = stats.iter().map(|s| s.population as f64).collect();
                match pearson(&xs, &ys) {
                    Ok(r) => self.out.json("geo/population_correlation.json", &r)?,
                    Err(e) => self.notices.push(format!("population correlation skipped: {e}")),
                }
            }
            None => self.notices.push("geo: no population table, normalized rates skipped".into()),
        }

        let resolver = match (&self.res.boundaries, self.cfg.geocoder.offline, &self.cfg.geocoder.endpoint) {
            (index, false, Some(endpoint)) => {
                let contact = self.cfg.geocoder.contact.clone().unwrap_or_default();
                let remote = RemoteGeocoder::new(endpoint.clone(), contact)
                    .with_pace(Duration::from_millis(self.cfg.geocoder.pace_ms));
                Some(CountyResolver::with_remote(index.clone(), remote))
            }
            (Some(index), _, _) => Some(CountyResolver::offline(index.clone())),
            (None, _, _) => None,
        };
        let Some(resolver) = resolver else {
            self.notices.push("geo: no county boundaries or geocoder, county table skipped".into());
            return Ok(());
        };
        if let Some(cache) = &self.cfg.resources.geocoder_cache {
            if cache.is_file() {
                resolver.load_cache(fs::File::open(cache).map_err(|e| Error::resource(cache, e))?)?;
            }
        }
        let density = county_density_table(records, &resolver);
        if resolver.remote_failures() > 0 {
            self.notices.push(format!("geo: {} remote lookups failed over to polygons", resolver.remote_failures()));
        }
        self.out.csv("geo/county_density.csv", |w| density.write_csv(w))?;
        if let Some(cache) = &self.cfg.resources.geocoder_cache {
            let mut buf = Vec::new();
            resolver.save_cache(&mut buf)?;
            fs::write(cache, buf).map_err(|e| Error::resource(cache, e))?;
        }
        Ok(())
    }

    fn topics(&mut self) -> Result<()> {
        let tc = &self.cfg.topics;
        let records = &self.data.records;
        let texts = || records.iter().map(|r| r.text.as_str());
        let hashtags = TagTable::build(texts(), TagKind::Hashtag);
        let mentions = TagTable::build(texts(), TagKind::Mention);
        let (grouped, share) = variant_group(&hashtags, "covid19", &tc.covid_variants);
        self.out.csv("topics/hashtags.csv", |w| grouped.write_csv(w, tc.tag_limit))?;
        self.out.csv("topics/mentions.csv", |w| mentions.write_csv(w, tc.tag_limit))?;
        self.out.json(
            "topics/tags_summary.json",
            &json!({
                "tweets": hashtags.tweets,
                "hashtags_per_tweet": hashtags.per_tweet(),
                "mentions_per_tweet": mentions.per_tweet(),
                "covid19_group_share": share,
                "covid19_variants": tc.covid_variants,
            }),
        )?;

        let pre = Preprocessor { stopwords: self.res.stopwords.clone(), min_len: tc.min_token_len };
        let corpus = Corpus::from_texts(records.iter().map(|r| (r.tweet_id.as_str(), r.text.as_str())), &pre);
        if corpus.is_empty() {
            self.notices.push("topics: no document survived preprocessing".into());
            return Ok(());
        }
        if corpus.dropped > 0 {
            self.notices.push(format!("topics: {} empty documents dropped", corpus.dropped));
        }
        let base = tc.lda(tc.candidates[0], self.cfg.seed);
        let params = tc.coherence();
        let selection = select_topic_count(&corpus, &tc.candidates, tc.repeats, tc.elbow_threshold, &base, &params)?;
        self.out.csv("topics/coherence_curve.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["k", "mean", "std"])?;
            for p in &selection.curve {
                csv.write_record([p.k.to_string(), format!("{:.6}", p.mean), format!("{:.6}", p.std)])?;
            }
            csv.flush()?;
            Ok(())
        })?;
        let cfg = crate::content::lda::LdaConfig {
            k: selection.chosen,
            stream: (tc.candidates.len() * tc.repeats) as u64,
            ..base
        };
        let model = train_lda(&corpus, &cfg)?;
        let coherence = coherence_cv(&model, &corpus, &params);
        let top = model.all_top_words(tc.top_n);
        self.out.csv("topics/topics.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            let mut header = vec!["rank".to_string()];
            header.extend((1..=model.k).map(|t| format!("topic_{t}")));
            csv.write_record(&header)?;
            for rank in 0..tc.top_n {
                let mut row = vec![(rank + 1).to_string()];
                row.extend(top.iter().map(|t| t.get(rank).map(|&w| corpus.vocabulary[w].clone()).unwrap_or_default()));
                csv.write_record(&row)?;
            }
            csv.flush()?;
            Ok(())
        })?;
        self.out.json(
            "topics/model.json",
            &json!({
                "chosen_k": selection.chosen,
                "lda": cfg,
                "alpha": cfg.alpha(),
                "documents": corpus.len(),
                "dropped_documents": corpus.dropped,
                "vocabulary": corpus.vocab_size(),
                "tokens": corpus.token_count(),
                "coherence": coherence,
            }),
        )
    }

    fn sentiment(&mut self) -> Result<()> {
        let sc = &self.cfg.sentiment;
        let records = &self.data.records;
        let scores: Vec<_> = records.iter().map(|r| score_text(&r.text, &self.res.lexicon)).collect();
        let grid = polarity_ratio_grid(&scores, &sc.subjectivity_thresholds, &sc.polarity_thresholds)?;
        self.out.csv("sentiment/polarity_grid.csv", |w| write_grid_csv(w, &grid))?;
        let freq = emoji_frequency(records.iter().map(|r| r.text.as_str()), &self.res.emoji);
        self.out.csv("sentiment/emoji_frequency.csv", |w| write_emoji_frequency_csv(w, &freq))?;
        let window = self.cfg.window;
        let mut daily = daily_sentiment_series(&self.localized, &self.res.emoji, GroupBy::All, &window, sc.weighting);
        daily.extend(daily_sentiment_series(&self.localized, &self.res.emoji, GroupBy::State, &window, sc.weighting));
        self.out.csv("sentiment/daily.csv", |w| write_daily_csv(w, &daily))?;
        let partition: BTreeMap<String, usize> =
            self.res.emoji.partition().into_iter().map(|(c, n)| (c.to_string(), n)).collect();
        let mut totals = BTreeMap::new();
        for (_, c, n) in &freq {
            *totals.entry(c.to_string()).or_insert(0u64) += n;
        }
        self.out.json(
            "sentiment/summary.json",
            &json!({
                "tweets": records.len(),
                "tweets_with_lexicon_match": scores.iter().filter(|s| s.matched > 0).count(),
                "emoji_occurrences": totals,
                "emoji_table": partition,
                "weighting": sc.weighting,
            }),
        )
    }

    fn event_dates(&self) -> Result<Option<EventDates>> {
        match (&self.res.cases, &self.res.calendar) {
            (None, None) => Ok(None),
            (Some(cases), cal) => derive_case_events(cases, cal.as_ref()).map(Some),
            (None, Some(cal)) => derive_case_events(&Default::default(), Some(cal)).map(Some),
        }
    }

    fn compute_events(&mut self) -> Result<Option<(EventDates, Vec<EventSentiment>)>> {
        let Some(dates) = self.event_dates()? else { return Ok(None) };
        let sc = &self.cfg.sentiment;
        let empty = BTreeMap::new();
        let results: Vec<EventSentiment> = EventName::ALL
            .iter()
            .map(|&e| {
                event_sentiment(
                    &self.localized,
                    &self.res.emoji,
                    e,
                    dates.get(&e).unwrap_or(&empty),
                    &sc.states_for(e),
                    sc.event_window_days,
                    sc.weighting,
                )
            })
            .collect();
        self.events = Some(results.clone());
        Ok(Some((dates, results)))
    }

    fn events(&mut self) -> Result<()> {
        let Some((dates, results)) = self.compute_events()? else {
            return self.unavailable("events", "needs a case series or an event calendar");
        };
        self.out.csv("events/event_dates.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["event", "state", "date"])?;
            for (e, per_state) in &dates {
                for (s, d) in per_state {
                    csv.write_record([e.as_str(), s.abbr(), &d.to_string()])?;
                }
            }
            csv.flush()?;
            Ok(())
        })?;
        self.out.csv("events/event_sentiment.csv", |w| write_event_csv(w, &results))?;
        self.out.csv("events/per_state.csv", |w| {
            let mut csv = csv::Writer::from_writer(w);
            csv.write_record(["event", "state", "pos", "neu", "neg"])?;
            for r in &results {
                for (s, sh) in &r.per_state {
                    let mut row = vec![r.event.to_string(), s.abbr().to_string()];
                    row.extend(sh.iter().map(|x| format!("{x:.6}")));
                    csv.write_record(&row)?;
                }
            }
            csv.flush()?;
            Ok(())
        })?;
        for r in &results {
            for (s, why) in &r.excluded {
                self.notices.push(format!("events: {} excluded {} ({:?})", r.event, s, why));
            }
        }
        Ok(())
    }

    fn stats(&mut self) -> Result<()> {
        let window = self.cfg.window;
        let hist = build_histograms(&self.localized, GroupBy::State, &window, &BTreeSet::new());
        let series: BTreeMap<State, Vec<f64>> = hist
            .daily
            .keys()
            .filter_map(|k| match k {
                GroupKey::State(s) => Some((*s, hist.dense_daily(*k, &window).into_iter().map(|c| c as f64).collect())),
                GroupKey::All => None,
            })
            .collect();
        let sc = &self.cfg.stats;
        match pairwise_state_correlations(&series, sc.r_threshold, sc.p_threshold) {
            Ok(report) => {
                self.out.csv("stats/correlation_matrix.csv", |w| report.write_matrix_csv(w))?;
                self.out.json(
                    "stats/correlation_summary.json",
                    &json!({
                        "states": series.len(),
                        "pairs": report.pairs.len(),
                        "qualifying": report.qualifying,
                        "qualifying_fraction": report.qualifying_fraction,
                        "excluded_constant": report.excluded,
                        "r_threshold": sc.r_threshold,
                        "p_threshold": sc.p_threshold,
                    }),
                )?;
            }
            Err(Error::Precondition(why)) => self.unavailable("stats", &why)?,
            Err(e) => return Err(e),
        }
        let results = match self.events.clone() {
            Some(r) => Some(r),
            None => self.compute_events()?.map(|(_, r)| r),
        };
        let Some(results) = results else {
            self.notices.push("stats: no event dates, MANOVA skipped".into());
            return Ok(());
        };
        // Too few states per event is a property of the data, not a failure.
        match event_manova(&results, &self.cfg.sentiment.manova_components) {
            Ok(m) => self.out.json(
                "stats/manova.json",
                &json!({
                    "test": "wilks",
                    "components": self.cfg.sentiment.manova_components,
                    "events": results.iter().filter(|r| !r.per_state.is_empty()).map(|r| r.event.as_str()).collect::<Vec<_>>(),
                    "result": m,
                }),
            )?,
            Err(e @ (Error::Precondition(_) | Error::DegenerateCovariance)) => {
                self.notices.push(format!("stats: MANOVA skipped: {e}"))
            }
            Err(e) => return Err(e),
        }
        Ok(())
    }
}

fn config_hash(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    Ok(hex_sha256(&serde_json::to_vec(&c)?))
}

fn resource_digests(cfg: &RunConfig) -> Result<BTreeMap<&'static str, Value>> {
    let r = &cfg.resources;
    let mut out = BTreeMap::new();
    for (name, path) in [
        ("state_clock", &r.state_clock),
        ("calendar", &r.calendar),
        ("emoji_table", &r.emoji_table),
        ("lexicon", &r.lexicon),
        ("stopwords", &r.stopwords),
        ("boundaries", &r.boundaries),
        ("population", &r.population),
        ("cases", &r.cases),
    ] {
        if let Some(p) = path {
            out.insert(name, file_digest(p)?);
        }
    }
    Ok(out)
}

/// Run `sub` with `cfg`. Artifacts land under `cfg.out_dir` together with
/// `manifest.json`; on error nothing from this run is left behind.
pub fn run(sub: Subcommand, cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let res = LoadedResources::load(cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    fs::create_dir_all(&cfg.out_dir)?;
    let staging = Staging::create(&cfg.out_dir)?;
    let result = pool.install(|| run_stages(sub, cfg, &res, staging));
    match result {
        Ok(summary) => Ok(summary),
        Err((e, staging)) => {
            staging.discard();
            Err(e)
        }
    }
}

fn run_stages(
    sub: Subcommand,
    cfg: &RunConfig,
    res: &LoadedResources,
    staging: Staging,
) -> std::result::Result<RunSummary, (Error, Staging)> {
    let mut notices = Vec::new();
    let data = match prepare(cfg, res, &mut notices) {
        Ok(d) => d,
        Err(e) => return Err((e, staging)),
    };
    let (localized, dropped) = localize(&data.records, &res.clock);
    if dropped > 0 {
        notices.push(format!("{dropped} records without a local clock dropped from time-based tables"));
    }
    let mut ctx = Ctx {
        cfg,
        res,
        data: &data,
        localized,
        out: staging,
        notices,
        skipped: Vec::new(),
        explicit: sub != Subcommand::All,
        events: None,
    };
    let stages: Vec<Subcommand> = if sub == Subcommand::All { Subcommand::STAGES.to_vec() } else { vec![sub] };
    let outcome = (|| -> Result<()> {
        for stage in stages {
            match stage {
                Subcommand::Ingest => ctx.ingest()?,
                Subcommand::Clean => ctx.clean()?,
                Subcommand::Volumes => ctx.volumes()?,
                Subcommand::Engagement => ctx.engagement()?,
                Subcommand::Geo => ctx.geo()?,
                Subcommand::Topics => ctx.topics()?,
                Subcommand::Sentiment => ctx.sentiment()?,
                Subcommand::Events => ctx.events()?,
                Subcommand::Stats => ctx.stats()?,
                Subcommand::All => unreachable!(),
            }
        }
        Ok(())
    })();
    let Ctx { out, notices, skipped, .. } = ctx;
    if let Err(e) = outcome {
        return Err((e, out));
    }
    match finish(sub, cfg, &data, out, notices, skipped) {
        Ok(s) => Ok(s),
        Err((e, out)) => Err((e, out)),
    }
}

fn finish(
    sub: Subcommand,
    cfg: &RunConfig,
    data: &Prepared,
    out: Staging,
    notices: Vec<String>,
    skipped: Vec<String>,
) -> std::result::Result<RunSummary, (Error, Staging)> {
    let manifest = (|| -> Result<Value> {
        let inputs: Vec<Value> = cfg.inputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?;
        let compensation: Vec<Value> = cfg.compensation_inputs.iter().map(|p| file_digest(p)).collect::<Result<_>>()?;
        Ok(json!({
            "tool": "geotweet",
            "version": env!("CARGO_PKG_VERSION"),
            "subcommand": sub.as_str(),
            "config_sha256": config_hash(cfg)?,
            "seed": cfg.seed,
            "lda_streams": {
                "selection": "candidate_index * repeats + repeat",
                "final_model": cfg.topics.candidates.len() * cfg.topics.repeats,
            },
            "inputs": inputs,
            "compensation_inputs": compensation,
            "resources": resource_digests(cfg)?,
            "ingest_counters": data.counters,
            "counters_reconcile": data.counters.reconciles(),
            "cleaning": {
                "bot_users": data.bots.flagged.len(),
                "removed_volume": data.removal.volume,
                "removed_regularity": data.removal.regularity,
                "analysis_records": data.records.len(),
            },
            "artifacts": out.artifacts,
            "skipped_stages": skipped,
            "notices": notices,
        }))
    })();
    let manifest = match manifest {
        Ok(m) => m,
        Err(e) => return Err((e, out)),
    };
    let path = cfg.out_dir.join(MANIFEST);
    let written = (|| -> Result<()> {
        out.commit(&cfg.out_dir)?;
        let mut f = fs::File::create(&path)?;
        serde_json::to_writer_pretty(&mut f, &manifest)?;
        f.write_all(b"\n")?;
        Ok(())
    })();
    if let Err(e) = written {
        return Err((e, out));
    }
    Ok(RunSummary {
        artifacts: out.artifacts,
        counters: data.counters.clone(),
        skipped_stages: skipped,
        notices,
        manifest: path,
    })
}
