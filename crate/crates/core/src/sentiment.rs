//! Lexicon scoring, emoji sentiment classes, daily series and event windows.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::ops::{Add, AddAssign};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::engagement::{Anchor, EventCalendar};
use crate::error::{Error, Result};
use crate::geo::CaseSeries;
use crate::ingest::DateWindow;
use crate::states::State;
use crate::stats::{manova_one_way, ManovaResult};
use crate::temporal::{GroupBy, GroupKey, Localized};

const DEFAULT_LEXICON: &str = include_str!("../data/lexicon_en.csv");
const DEFAULT_EMOJI_TABLE: &str = include_str!("../data/emoji_categories.csv");

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentimentLexicon {
    entries: HashMap<String, (f64, f64)>,
}

impl SentimentLexicon {
    pub fn default_english() -> SentimentLexicon {
        SentimentLexicon::from_csv(DEFAULT_LEXICON.as_bytes()).expect("bundled lexicon parses")
    }

    /// `word,polarity,subjectivity` CSV. Polarity must lie in [-1, 1] and
    /// subjectivity in [0, 1].
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<SentimentLexicon> {
        #[derive(Deserialize)]
        struct Row {
            word: String,
            polarity: f64,
            subjectivity: f64,
        }
        let mut entries = HashMap::new();
        for row in csv::Reader::from_reader(r).deserialize::<Row>() {
            let row = row?;
            if !(-1.0..=1.0).contains(&row.polarity) || !(0.0..=1.0).contains(&row.subjectivity) {
                return Err(Error::InvalidInput(format!("lexicon entry {:?} out of range", row.word)));
            }
            entries.insert(row.word.trim().to_lowercase(), (row.polarity, row.subjectivity));
        }
        Ok(SentimentLexicon { entries })
    }

    pub fn from_path(path: &Path) -> Result<SentimentLexicon> {
        let f = std::fs::File::open(path).map_err(|e| Error::resource(path, e))?;
        SentimentLexicon::from_csv(f).map_err(|e| Error::resource(path, e))
    }

    pub fn insert(&mut self, word: &str, polarity: f64, subjectivity: f64) -> Result<()> {
        if !(-1.0..=1.0).contains(&polarity) || !(0.0..=1.0).contains(&subjectivity) {
            return Err(Error::InvalidInput(format!("lexicon entry {word:?} out of range")));
        }
        self.entries.insert(word.to_lowercase(), (polarity, subjectivity));
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<(f64, f64)> {
        self.entries.get(&word.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SentimentScore {
    pub polarity: f64,
    pub subjectivity: f64,
    pub matched: usize,
}

/// Mean polarity and subjectivity over the words found in the lexicon;
/// (0, 0) when nothing matches.
pub fn score_text(text: &str, lexicon: &SentimentLexicon) -> SentimentScore {
    let lower = text.to_lowercase();
    let (mut pol, mut subj, mut n) = (0.0, 0.0, 0usize);
    for word in lower.split(|c: char| !(c.is_alphanumeric() || c == '\'')) {
        let word = word.trim_matches('\'');
        if word.is_empty() {
            continue;
        }
        if let Some((p, s)) = lexicon.entries.get(word) {
            pol += p;
            subj += s;
            n += 1;
        }
    }
    if n == 0 {
        return SentimentScore::default();
    }
    SentimentScore {
        polarity: (pol / n as f64).clamp(-1.0, 1.0),
        subjectivity: (subj / n as f64).clamp(0.0, 1.0),
        matched: n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridCell {
    pub s: f64,
    pub p: f64,
    pub candidates: u64,
    pub positives: u64,
    pub negatives: u64,
    /// `None` when both counts are zero; infinite when only negatives are.
    pub ratio: Option<f64>,
}

/// Positive-to-negative ratio for every (subjectivity, polarity) threshold
/// pair. A tweet is a candidate when its subjectivity exceeds `s`; it is
/// positive above `p` and negative below `-p`.
pub fn polarity_ratio_grid(scores: &[SentimentScore], subj_thresholds: &[f64], pol_thresholds: &[f64]) -> Result<Vec<GridCell>> {
    if let Some(s) = subj_thresholds.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::InvalidInput(format!("subjectivity threshold {s} outside [0, 1]")));
    }
    if let Some(p) = pol_thresholds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidInput(format!("polarity threshold {p} outside [0, 1]")));
    }
    let mut cells = Vec::with_capacity(subj_thresholds.len() * pol_thresholds.len());
    for &s in subj_thresholds {
        let candidates: Vec<f64> = scores.iter().filter(|x| x.subjectivity > s).map(|x| x.polarity).collect();
        for &p in pol_thresholds {
            let positives = candidates.iter().filter(|&&x| x > p).count() as u64;
            let negatives = candidates.iter().filter(|&&x| x < -p).count() as u64;
            let ratio = match (positives, negatives) {
                (0, 0) => None,
                (_, 0) => Some(f64::INFINITY),
                (a, b) => Some(a as f64 / b as f64),
            };
            cells.push(GridCell { s, p, candidates: candidates.len() as u64, positives, negatives, ratio });
        }
    }
    Ok(cells)
}

pub fn write_grid_csv<W: Write>(w: W, cells: &[GridCell]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["s", "p", "ratio"])?;
    for c in cells {
        let ratio = match c.ratio {
            None => String::new(),
            Some(r) if r.is_infinite() => "inf".to_string(),
            Some(r) => format!("{r:.6}"),
        };
        out.write_record([format!("{}", c.s), format!("{}", c.p), ratio])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Positive,
    Neutral,
    Negative,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Positive, Category::Neutral, Category::Negative];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Positive => "positive",
            Category::Neutral => "neutral",
            Category::Negative => "negative",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Category> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" | "pos" => Ok(Category::Positive),
            "neutral" | "neu" => Ok(Category::Neutral),
            "negative" | "neg" => Ok(Category::Negative),
            other => Err(Error::InvalidInput(format!("unknown emoji category {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EmojiCounts {
    pub positive: u64,
    pub neutral: u64,
    pub negative: u64,
}

impl EmojiCounts {
    pub fn get(&self, c: Category) -> u64 {
        match c {
            Category::Positive => self.positive,
            Category::Neutral => self.neutral,
            Category::Negative => self.negative,
        }
    }

    pub fn bump(&mut self, c: Category) {
        match c {
            Category::Positive => self.positive += 1,
            Category::Neutral => self.neutral += 1,
            Category::Negative => self.negative += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.positive + self.neutral + self.negative
    }

    /// Percentages in category order, `None` without any emoji.
    pub fn shares(&self) -> Option<[f64; 3]> {
        let t = self.total();
        (t > 0).then(|| Category::ALL.map(|c| 100.0 * self.get(c) as f64 / t as f64))
    }
}

impl AddAssign for EmojiCounts {
    fn add_assign(&mut self, o: EmojiCounts) {
        self.positive += o.positive;
        self.neutral += o.neutral;
        self.negative += o.negative;
    }
}

impl Add for EmojiCounts {
    type Output = EmojiCounts;

    fn add(mut self, o: EmojiCounts) -> EmojiCounts {
        self += o;
        self
    }
}

fn is_variation_selector(c: char) -> bool {
    c == '\u{FE0F}' || c == '\u{FE0E}'
}

/// Facial emoji sequences and their sentiment class. Variation selectors are
/// ignored on both sides, so `☺` and `☺️` are the same key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmojiCategoryTable {
    entries: HashMap<Vec<char>, Category>,
    max_len: usize,
}

impl EmojiCategoryTable {
    pub fn default_table() -> EmojiCategoryTable {
        EmojiCategoryTable::from_csv(DEFAULT_EMOJI_TABLE.as_bytes()).expect("bundled emoji table parses")
    }

    /// `codepoint,category` CSV where the codepoint column holds hex scalars
    /// separated by spaces or dashes. A sequence listed under two different
    /// categories is rejected.
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<EmojiCategoryTable> {
        let mut table = EmojiCategoryTable::default();
        for rec in csv::Reader::from_reader(r).records() {
            let rec = rec?;
            let (Some(cp), Some(cat)) = (rec.get(0), rec.get(1)) else {
                return Err(Error::InvalidInput("emoji table rows need two columns".into()));
            };
            let seq = parse_codepoints(cp)?;
            table.insert(&seq, cat.parse()?)?;
        }
        Ok(table)
    }

    pub fn from_path(path: &Path) -> Result<EmojiCategoryTable> {
        let f = std::fs::File::open(path).map_err(|e| Error::resource(path, e))?;
        EmojiCategoryTable::from_csv(f).map_err(|e| Error::resource(path, e))
    }

    pub fn insert(&mut self, seq: &str, category: Category) -> Result<()> {
        let key: Vec<char> = seq.chars().filter(|&c| !is_variation_selector(c)).collect();
        if key.is_empty() {
            return Err(Error::InvalidInput("empty emoji sequence".into()));
        }
        match self.entries.get(&key) {
            Some(&c) if c != category => {
                return Err(Error::InvalidInput(format!("emoji {seq} listed as both {c} and {category}")));
            }
            _ => {}
        }
        self.max_len = self.max_len.max(key.len());
        self.entries.insert(key, category);
        Ok(())
    }

    pub fn category(&self, seq: &str) -> Option<Category> {
        let key: Vec<char> = seq.chars().filter(|&c| !is_variation_selector(c)).collect();
        self.entries.get(&key).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Every sequence with its category, sorted by sequence.
    pub fn entries(&self) -> Vec<(String, Category)> {
        let mut v: Vec<_> = self.entries.iter().map(|(k, &c)| (k.iter().collect(), c)).collect();
        v.sort();
        v
    }

    /// Each category's share of the table, checking that no sequence
    /// belongs to two of them.
    pub fn partition(&self) -> BTreeMap<Category, usize> {
        let mut out = BTreeMap::new();
        for &c in self.entries.values() {
            *out.entry(c).or_insert(0) += 1;
        }
        out
    }

    /// Known sequences in `text`, longest match first at each position.
    pub fn scan(&self, text: &str) -> Vec<(String, Category)> {
        let chars: Vec<char> = text.chars().filter(|&c| !is_variation_selector(c)).collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let longest = self.max_len.min(chars.len() - i);
            let hit = (1..=longest).rev().find_map(|n| self.entries.get(&chars[i..i + n]).map(|&c| (n, c)));
            match hit {
                Some((n, c)) => {
                    out.push((chars[i..i + n].iter().collect(), c));
                    i += n;
                }
                None => i += 1,
            }
        }
        out
    }
}

fn parse_codepoints(field: &str) -> Result<String> {
    field
        .split(|c: char| c.is_whitespace() || c == '-')
        .filter(|s| !s.is_empty())
        .map(|hex| {
            let hex = hex.trim_start_matches("U+").trim_start_matches("u+");
            u32::from_str_radix(hex, 16)
                .ok()
                .and_then(char::from_u32)
                .ok_or_else(|| Error::InvalidInput(format!("bad codepoint {hex:?}")))
        })
        .collect()
}

pub fn classify_emojis(text: &str, table: &EmojiCategoryTable) -> EmojiCounts {
    let mut counts = EmojiCounts::default();
    for (_, c) in table.scan(text) {
        counts.bump(c);
    }
    counts
}

/// Occurrences of each known emoji, most frequent first.
pub fn emoji_frequency<'a>(
    texts: impl IntoIterator<Item = &'a str>,
    table: &EmojiCategoryTable,
) -> Vec<(String, Category, u64)> {
    let mut counts: BTreeMap<(String, Category), u64> = BTreeMap::new();
    for t in texts {
        for key in table.scan(t) {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let mut out: Vec<_> = counts.into_iter().map(|((e, c), n)| (e, c, n)).collect();
    out.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    out
}

pub fn write_emoji_frequency_csv<W: Write>(w: W, rows: &[(String, Category, u64)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["emoji", "category", "count"])?;
    for (e, c, n) in rows {
        out.write_record([e.as_str(), c.as_str(), &n.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShareWeighting {
    /// Every emoji occurrence counts once.
    #[default]
    Occurrence,
    /// Every tweet with emojis contributes its own shares with equal weight.
    Tweet,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct ShareAcc {
    weights: [f64; 3],
    emojis: u64,
}

impl ShareAcc {
    fn add(&mut self, counts: EmojiCounts, weighting: ShareWeighting) {
        let total = counts.total();
        if total == 0 {
            return;
        }
        self.emojis += total;
        for c in Category::ALL {
            let n = counts.get(c) as f64;
            self.weights[c.index()] += match weighting {
                ShareWeighting::Occurrence => n,
                ShareWeighting::Tweet => n / total as f64,
            };
        }
    }

    fn shares(&self) -> Option<[f64; 3]> {
        let t: f64 = self.weights.iter().sum();
        (t > 0.0).then(|| self.weights.map(|w| 100.0 * w / t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DailyShares {
    pub date: NaiveDate,
    pub group: GroupKey,
    pub emojis: u64,
    /// Positive, neutral and negative percentages; `None` on emoji-free days.
    pub shares: Option<[f64; 3]>,
}

/// Per group and local date, the share of each emoji class. Every day of
/// `window` is emitted for every group, with `None` shares when the day has
/// no emoji.
pub fn daily_sentiment_series(
    localized: &[Localized<'_>],
    table: &EmojiCategoryTable,
    group_by: GroupBy,
    window: &DateWindow,
    weighting: ShareWeighting,
) -> Vec<DailyShares> {
    let mut acc: BTreeMap<GroupKey, BTreeMap<NaiveDate, ShareAcc>> = BTreeMap::new();
    if group_by == GroupBy::All {
        acc.insert(GroupKey::All, BTreeMap::new());
    }
    for l in localized {
        let date = l.local.date();
        if !window.contains(date) {
            continue;
        }
        let key = match group_by {
            GroupBy::All => GroupKey::All,
            GroupBy::State => GroupKey::State(l.state),
        };
        let days = acc.entry(key).or_default();
        days.entry(date).or_default().add(classify_emojis(&l.record.text, table), weighting);
    }
    let mut out = Vec::new();
    for (group, days) in &acc {
        for date in window.days() {
            let a = days.get(&date).copied().unwrap_or_default();
            out.push(DailyShares { date, group: *group, emojis: a.emojis, shares: a.shares() });
        }
    }
    out
}

pub fn write_daily_csv<W: Write>(w: W, rows: &[DailyShares]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["date", "state", "pos", "neu", "neg"])?;
    for r in rows {
        let mut rec = vec![r.date.to_string(), r.group.to_string()];
        match r.shares {
            Some(s) => rec.extend(s.iter().map(|x| format!("{x:.6}"))),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventName {
    FirstCase,
    Case100,
    Case1000,
    FirstDeath,
    Death100,
    Death1000,
    Lockdown,
    Reopen,
}

impl EventName {
    pub const ALL: [EventName; 8] = [
        EventName::FirstCase,
        EventName::Case100,
        EventName::Case1000,
        EventName::FirstDeath,
        EventName::Death100,
        EventName::Death1000,
        EventName::Lockdown,
        EventName::Reopen,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventName::FirstCase => "first_case",
            EventName::Case100 => "case_100",
            EventName::Case1000 => "case_1000",
            EventName::FirstDeath => "first_death",
            EventName::Death100 => "death_100",
            EventName::Death1000 => "death_1000",
            EventName::Lockdown => "lockdown",
            EventName::Reopen => "reopen",
        }
    }

    /// States whose tweets are pooled for this event by default.
    pub fn default_states(self) -> Vec<State> {
        use State::*;
        match self {
            EventName::Reopen => vec![TX, GA, TN, CO, AL, MS, ID, AK, MT],
            _ => vec![CA, TX, FL, NY, GA, PA, IL, MD, VA, AZ],
        }
    }
}

impl fmt::Display for EventName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventName {
    type Err = Error;

    fn from_str(s: &str) -> Result<EventName> {
        EventName::ALL
            .into_iter()
            .find(|e| e.as_str() == s.trim())
            .ok_or_else(|| Error::InvalidInput(format!("unknown event {s:?}")))
    }
}

/// First date where the cumulative value reaches `threshold`.
pub fn first_crossing(series: &[(NaiveDate, u64)], threshold: u64) -> Result<Option<NaiveDate>> {
    for w in series.windows(2) {
        if w[1].1 < w[0].1 {
            return Err(Error::InvalidInput(format!("cumulative series decreases on {}", w[1].0)));
        }
    }
    Ok(series.iter().find(|(_, v)| *v >= threshold).map(|(d, _)| *d))
}

/// Event dates by event and state.
pub type EventDates = BTreeMap<EventName, BTreeMap<State, NaiveDate>>;

/// Case and death milestones from cumulative counts, plus lockdown and
/// reopen dates from the calendar. Thresholds never reached leave the event
/// undefined for that state.
pub fn derive_case_events(series: &CaseSeries, calendar: Option<&EventCalendar>) -> Result<EventDates> {
    let mut out = EventDates::new();
    let milestones = [
        (EventName::FirstCase, EventName::FirstDeath, 1),
        (EventName::Case100, EventName::Death100, 100),
        (EventName::Case1000, EventName::Death1000, 1000),
    ];
    for (&state, rows) in &series.by_state {
        let cases: Vec<_> = rows.iter().map(|r| (r.date, r.cases)).collect();
        let deaths: Vec<_> = rows.iter().map(|r| (r.date, r.deaths)).collect();
        for (case_event, death_event, thr) in milestones {
            let c = first_crossing(&cases, thr).map_err(|e| Error::InvalidInput(format!("{state} cases: {e}")))?;
            let d = first_crossing(&deaths, thr).map_err(|e| Error::InvalidInput(format!("{state} deaths: {e}")))?;
            if let Some(date) = c {
                out.entry(case_event).or_default().insert(state, date);
            }
            if let Some(date) = d {
                out.entry(death_event).or_default().insert(state, date);
            }
        }
    }
    if let Some(cal) = calendar {
        for state in cal.states() {
            for (event, anchor) in [(EventName::Lockdown, Anchor::Lockdown), (EventName::Reopen, Anchor::Reopen)] {
                if let Some(date) = cal.anchor(state, anchor) {
                    out.entry(event).or_default().insert(state, date);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    NoEventDate,
    NoEmojis,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventSentiment {
    pub event: EventName,
    /// Percent shares per included state.
    pub per_state: Vec<(State, [f64; 3])>,
    pub excluded: Vec<(State, Exclusion)>,
    pub mean: Option<[f64; 3]>,
    /// Population standard deviation across states.
    pub std: Option<[f64; 3]>,
}

impl EventSentiment {
    pub fn n_states(&self) -> usize {
        self.per_state.len()
    }
}

/// Emoji class shares per state over `[date, date + window_days)` on each
/// state's local calendar, then their mean and spread across states.
pub fn event_sentiment(
    localized: &[Localized<'_>],
    table: &EmojiCategoryTable,
    event: EventName,
    dates: &BTreeMap<State, NaiveDate>,
    states: &[State],
    window_days: u32,
    weighting: ShareWeighting,
) -> EventSentiment {
    let mut acc: BTreeMap<State, ShareAcc> = BTreeMap::new();
    let mut excluded = Vec::new();
    let mut windows = BTreeMap::new();
    for &s in states {
        match dates.get(&s) {
            Some(&d) => {
                windows.insert(s, (d, d + Duration::days(window_days as i64)));
                acc.insert(s, ShareAcc::default());
            }
            None => excluded.push((s, Exclusion::NoEventDate)),
        }
    }
    for l in localized {
        let Some(&(start, end)) = windows.get(&l.state) else { continue };
        let date = l.local.date();
        if date >= start && date < end {
            acc.get_mut(&l.state).expect("window implies accumulator").add(classify_emojis(&l.record.text, table), weighting);
        }
    }
    let mut per_state = Vec::new();
    for &s in states {
        let Some(a) = acc.get(&s) else { continue };
        match a.shares() {
            Some(sh) => per_state.push((s, sh)),
            None => excluded.push((s, Exclusion::NoEmojis)),
        }
    }
    let (mean, std) = if per_state.is_empty() {
        (None, None)
    } else {
        let n = per_state.len() as f64;
        let mean: [f64; 3] = std::array::from_fn(|c| per_state.iter().map(|(_, s)| s[c]).sum::<f64>() / n);
        let std: [f64; 3] =
            std::array::from_fn(|c| (per_state.iter().map(|(_, s)| (s[c] - mean[c]).powi(2)).sum::<f64>() / n).sqrt());
        (Some(mean), Some(std))
    };
    EventSentiment { event, per_state, excluded, mean, std }
}

pub fn write_event_csv<W: Write>(w: W, results: &[EventSentiment]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["event", "category", "mean", "std", "n_states"])?;
    for r in results {
        for c in Category::ALL {
            let fmt = |v: Option<[f64; 3]>| v.map(|a| format!("{:.6}", a[c.index()])).unwrap_or_default();
            out.write_record([
                r.event.as_str(),
                c.as_str(),
                &fmt(r.mean),
                &fmt(r.std),
                &r.n_states().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// One-way MANOVA across events, each state's shares on `components` being
/// one observation. The three shares sum to 100, so using all of them makes
/// the within-group scatter singular; the usual choice is positive and
/// neutral.
pub fn event_manova(results: &[EventSentiment], components: &[Category]) -> Result<ManovaResult> {
    let groups: Vec<Vec<Vec<f64>>> = results
        .iter()
        .filter(|r| !r.per_state.is_empty())
        .map(|r| {
            r.per_state
                .iter()
                .map(|(_, s)| components.iter().map(|c| s[c.index()] / 100.0).collect())
                .collect()
        })
        .collect();
    manova_one_way(&groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{GeoTag, SourceCorpus, TweetRecord};
    use crate::temporal::{localize, ClockTable};
    use chrono::{TimeZone, Utc};
    use proptest::prelude::*;

    fn fixture_lexicon() -> SentimentLexicon {
        let mut lex = SentimentLexicon::default();
        lex.insert("joy", 0.8, 0.9).unwrap();
        lex.insert("meh", -0.2, 0.3).unwrap();
        lex.insert("Awful", -1.0, 1.0).unwrap();
        lex
    }

    #[test]
    fn score_examples() {
        let lex = fixture_lexicon();
        assert_eq!(score_text("", &lex), SentimentScore::default());
        let s = score_text("JOY", &lex);
        assert_eq!((s.polarity, s.subjectivity), (0.8, 0.9));
        let s = score_text("joy, meh!", &lex);
        assert!((s.polarity - 0.3).abs() < 1e-12);
        assert!((score_text("awful", &lex).polarity + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lexicon_rejects_out_of_range() {
        assert!(SentimentLexicon::from_csv("word,polarity,subjectivity\nx,1.5,0.2\n".as_bytes()).is_err());
        assert!(SentimentLexicon::from_csv("word,polarity,subjectivity\nx,0.5,-0.1\n".as_bytes()).is_err());
        assert!(SentimentLexicon::default_english().len() > 100);
    }

    fn sc(p: f64, s: f64) -> SentimentScore {
        SentimentScore { polarity: p, subjectivity: s, matched: 1 }
    }

    #[test]
    fn grid_fixture_ratio() {
        // seven candidates above s=0.5: four positive and two negative at p=0.3
        let scores = [
            sc(0.9, 0.9),
            sc(0.5, 0.8),
            sc(0.4, 0.6),
            sc(0.35, 0.7),
            sc(-0.6, 0.9),
            sc(-0.4, 0.55),
            sc(0.2, 0.9),
            sc(-0.9, 0.5),
            sc(0.8, 0.1),
            sc(-0.8, 0.2),
        ];
        let g = polarity_ratio_grid(&scores, &[0.5], &[0.3]).unwrap();
        assert_eq!((g[0].candidates, g[0].positives, g[0].negatives), (7, 4, 2));
        assert_eq!(g[0].ratio, Some(2.0));
    }

    #[test]
    fn grid_symmetric_and_sentinels() {
        let scores = [sc(0.5, 0.9), sc(-0.5, 0.9), sc(0.2, 0.4), sc(-0.2, 0.4)];
        for c in polarity_ratio_grid(&scores, &[0.0, 0.3], &[0.0, 0.1]).unwrap() {
            assert_eq!(c.ratio, Some(1.0));
        }
        let g = polarity_ratio_grid(&[sc(0.5, 0.9)], &[0.0], &[0.1, 0.9]).unwrap();
        assert_eq!(g[0].ratio, Some(f64::INFINITY));
        assert_eq!(g[1].ratio, None);
        let mut buf = Vec::new();
        write_grid_csv(&mut buf, &g).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "s,p,ratio\n0,0.1,inf\n0,0.9,\n");
        assert!(polarity_ratio_grid(&[], &[1.2], &[0.1]).is_err());
    }

    #[test]
    fn emoji_examples() {
        let t = EmojiCategoryTable::default_table();
        assert_eq!(t.category("😂"), Some(Category::Positive));
        assert_eq!(t.category("🤔"), Some(Category::Neutral));
        assert_eq!(t.category("😷"), Some(Category::Negative));
        assert_eq!(t.category("☺️"), Some(Category::Positive));
        assert_eq!(t.category("🦠"), None);
        let c = classify_emojis("stay home 😷😷 🤔 lol 😂 🦠 ☠️", &t);
        assert_eq!(c, EmojiCounts { positive: 1, neutral: 1, negative: 3 });
        assert_eq!(t.partition().values().sum::<usize>(), t.len());
    }

    #[test]
    fn longest_match_wins() {
        let t = EmojiCategoryTable::default_table();
        let scan = t.scan("\u{1F635}\u{200D}\u{1F4AB}\u{1F636}\u{200D}\u{1F32B}\u{FE0F}");
        assert_eq!(scan.len(), 2);
        assert_eq!(scan[0].1, Category::Negative);
        assert_eq!(scan[1].1, Category::Neutral);
    }

    #[test]
    fn conflicting_table_rejected() {
        let csv = "codepoint,category\n1F602,positive\n1F602 FE0F,negative\n";
        assert!(EmojiCategoryTable::from_csv(csv.as_bytes()).is_err());
        let csv = "codepoint,category\n1F602,positive\n1F602,positive\n";
        assert_eq!(EmojiCategoryTable::from_csv(csv.as_bytes()).unwrap().len(), 1);
    }

    #[test]
    fn shares_arithmetic() {
        let c = EmojiCounts { positive: 3, neutral: 0, negative: 1 };
        assert_eq!(c.shares(), Some([75.0, 0.0, 25.0]));
        assert_eq!(EmojiCounts::default().shares(), None);
    }

    #[test]
    fn crossings() {
        let d = |i: u32| NaiveDate::from_ymd_opt(2020, 3, i).unwrap();
        let s = [(d(1), 0), (d(2), 0), (d(3), 1), (d(4), 5)];
        assert_eq!(first_crossing(&s, 1).unwrap(), Some(d(3)));
        let s = [(d(1), 50), (d(2), 100), (d(3), 800)];
        assert_eq!(first_crossing(&s, 100).unwrap(), Some(d(2)));
        assert_eq!(first_crossing(&s, 1000).unwrap(), None);
        assert!(first_crossing(&[(d(1), 5), (d(2), 4)], 1).is_err());
    }

    fn tweet(id: u64, state: State, day: u32, text: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.to_string(),
            user_id: "u".into(),
            created_at_utc: Utc.with_ymd_and_hms(2020, 3, day, 18, 0, 0).unwrap(),
            text: text.into(),
            geo: GeoTag { country_code: Some("US".into()), state: Some(state), ..Default::default() },
            is_retweet: false,
            source_corpus: SourceCorpus::Primary,
        }
    }

    #[test]
    fn daily_series_and_events() {
        let records = vec![
            tweet(1, State::CA, 20, "😂😂😂 😷"),
            tweet(2, State::NY, 20, "😂"),
            tweet(3, State::NY, 22, "😷"),
            tweet(4, State::TX, 22, "no emoji"),
        ];
        let (loc, _) = localize(&records, &ClockTable::default_2020());
        let table = EmojiCategoryTable::default_table();
        let window = DateWindow::new(
            NaiveDate::from_ymd_opt(2020, 3, 20).unwrap(),
            NaiveDate::from_ymd_opt(2020, 3, 22).unwrap(),
        )
        .unwrap();
        let rows = daily_sentiment_series(&loc, &table, GroupBy::All, &window, ShareWeighting::Occurrence);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].shares, Some([80.0, 0.0, 20.0]));
        assert_eq!(rows[1].shares, None);
        let tw = daily_sentiment_series(&loc, &table, GroupBy::All, &window, ShareWeighting::Tweet);
        assert_eq!(tw[0].shares, Some([87.5, 0.0, 12.5]));
        let by_state = daily_sentiment_series(&loc, &table, GroupBy::State, &window, ShareWeighting::Occurrence);
        assert_eq!(by_state.len(), 9);

        let date = NaiveDate::from_ymd_opt(2020, 3, 20).unwrap();
        let dates: BTreeMap<_, _> = [(State::CA, date), (State::NY, date), (State::TX, date)].into();
        let ev = event_sentiment(
            &loc,
            &table,
            EventName::Lockdown,
            &dates,
            &[State::CA, State::NY, State::TX, State::FL],
            1,
            ShareWeighting::Occurrence,
        );
        assert_eq!(ev.n_states(), 2);
        assert_eq!(ev.excluded, vec![(State::FL, Exclusion::NoEventDate), (State::TX, Exclusion::NoEmojis)]);
        let mean = ev.mean.unwrap();
        assert!((mean[0] - 87.5).abs() < 1e-12);
        assert!((ev.std.unwrap()[0] - 12.5).abs() < 1e-12);
        assert!((mean.iter().sum::<f64>() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn two_state_spread() {
        let records = vec![tweet(1, State::CA, 20, "😂"), tweet(2, State::NY, 20, "😷")];
        let (loc, _) = localize(&records, &ClockTable::default_2020());
        let date = NaiveDate::from_ymd_opt(2020, 3, 20).unwrap();
        let dates: BTreeMap<_, _> = [(State::CA, date), (State::NY, date)].into();
        let table = EmojiCategoryTable::default_table();
        let ev = event_sentiment(&loc, &table, EventName::FirstCase, &dates, &[State::CA, State::NY], 7, ShareWeighting::Occurrence);
        assert_eq!(ev.mean.unwrap()[0], 50.0);
        assert_eq!(ev.std.unwrap()[0], 50.0);
    }

    proptest! {
        #[test]
        fn classify_is_additive(a in "[a-z 😂🤔😷☠\u{FE0F}]{0,20}", b in "[a-z 😂🤔😷]{0,20}") {
            let t = EmojiCategoryTable::default_table();
            let joined = format!("{a} {b}");
            prop_assert_eq!(classify_emojis(&joined, &t), classify_emojis(&a, &t) + classify_emojis(&b, &t));
            let swapped = format!("{b} {a}");
            prop_assert_eq!(classify_emojis(&swapped, &t), classify_emojis(&joined, &t));
        }

        #[test]
        fn grid_counts_monotone(
            pts in proptest::collection::vec((-1.0f64..=1.0, 0.0f64..=1.0), 0..60),
        ) {
            let scores: Vec<_> = pts.iter().map(|&(p, s)| sc(p, s)).collect();
            let ss = [0.0, 0.2, 0.5, 0.8];
            let ps = [0.0, 0.1, 0.3, 0.6];
            let g = polarity_ratio_grid(&scores, &ss, &ps).unwrap();
            for i in 0..ss.len() {
                for j in 0..ps.len() {
                    let c = &g[i * ps.len() + j];
                    if i > 0 {
                        let prev = &g[(i - 1) * ps.len() + j];
                        prop_assert!(c.candidates <= prev.candidates);
                        prop_assert!(c.positives <= prev.positives && c.negatives <= prev.negatives);
                    }
                    if j > 0 {
                        let prev = &g[i * ps.len() + j - 1];
                        prop_assert!(c.positives <= prev.positives && c.negatives <= prev.negatives);
                    }
                }
            }
        }

        #[test]
        fn score_ranges(text in "[a-z ]{0,40}") {
            let s = score_text(&text, &SentimentLexicon::default_english());
            prop_assert!((-1.0..=1.0).contains(&s.polarity));
            prop_assert!((0.0..=1.0).contains(&s.subjectivity));
        }
    }
}
