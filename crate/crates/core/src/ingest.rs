//! Tweet archive ingestion: NDJSON parsing, keyword filtering, US geotag
//! acceptance and merging of the gap-compensation corpus.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, TimeZone, Utc};
use flate2::read::MultiGzDecoder;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::states::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceCorpus {
    Primary,
    Compensation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeoPrecision {
    ExactGps,
    BoundingPlace,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Option<GeoPoint> {
        let valid = lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && (-180.0..=180.0).contains(&lon);
        valid.then_some(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoTag {
    pub country_code: Option<String>,
    pub state: Option<State>,
    pub county: Option<String>,
    /// Raw `place.full_name`, kept for state resolution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place_name: Option<String>,
    pub point: Option<GeoPoint>,
    pub precision: GeoPrecision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub created_at_utc: DateTime<Utc>,
    pub text: String,
    pub geo: GeoTag,
    pub is_retweet: bool,
    pub source_corpus: SourceCorpus,
}

impl TweetRecord {
    pub fn state(&self) -> Option<State> {
        self.geo.state
    }
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateWindow {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<DateWindow> {
        if end < start {
            return Err(Error::InvalidInput(format!("window end {end} precedes start {start}")));
        }
        Ok(DateWindow { start, end })
    }

    /// Jan 25 to May 10, 2020.
    pub fn collection_2020() -> DateWindow {
        DateWindow {
            start: NaiveDate::from_ymd_opt(2020, 1, 25).unwrap(),
            end: NaiveDate::from_ymd_opt(2020, 5, 10).unwrap(),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.start.iter_days().take_while(move |d| *d <= self.end)
    }

    pub fn len_days(&self) -> i64 {
        (self.end - self.start).num_days() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyword {
    pub term: String,
    /// Active on and after this date; always active when absent.
    #[serde(default)]
    pub effective: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordFilter {
    keywords: Vec<Keyword>,
}

impl KeywordFilter {
    pub fn new(keywords: Vec<Keyword>) -> Result<KeywordFilter> {
        let keywords: Vec<Keyword> = keywords
            .into_iter()
            .filter(|k| !k.term.trim().is_empty())
            .map(|k| Keyword {
                term: k.term.to_lowercase(),
                effective: k.effective,
            })
            .collect();
        if keywords.is_empty() {
            return Err(Error::InvalidInput("keyword set is empty".into()));
        }
        Ok(KeywordFilter { keywords })
    }

    /// The crawler's keyword list, with the COVID-19 names added on Feb 11, 2020.
    pub fn default_2020() -> KeywordFilter {
        let added = NaiveDate::from_ymd_opt(2020, 2, 11);
        let base = ["coronavirus", "wuhan", "corona", "ncov"]
            .into_iter()
            .map(|t| Keyword { term: t.into(), effective: None });
        let later = [
            "COVID19",
            "COVIDー19",
            "coronapocalypse",
            "Coronavid19",
            "Covid_19",
            "COVID-19",
            "covid",
        ]
        .into_iter()
        .map(|t| Keyword { term: t.into(), effective: added });
        KeywordFilter::new(base.chain(later).collect()).expect("non-empty")
    }

    pub fn keywords(&self) -> &[Keyword] {
        &self.keywords
    }
}

/// Case-insensitive substring match against keywords active on `tweet_date`.
pub fn keyword_match(text: &str, filter: &KeywordFilter, tweet_date: NaiveDate) -> bool {
    let lowered = text.to_lowercase();
    filter.keywords.iter().any(|k| {
        k.effective.is_none_or(|d| tweet_date >= d) && lowered.contains(k.term.as_str())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Malformed,
    MissingField,
    BadTimestamp,
    OutOfWindow,
}

impl SkipReason {
    pub fn as_str(self) -> &'static str {
        match self {
            SkipReason::Malformed => "malformed",
            SkipReason::MissingField => "missing_field",
            SkipReason::BadTimestamp => "bad_timestamp",
            SkipReason::OutOfWindow => "out_of_window",
        }
    }
}

fn str_field(v: &Value, keys: &[&str]) -> Option<String> {
    keys.iter().find_map(|k| match v.get(*k)? {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    })
}

fn parse_timestamp(v: &Value) -> Option<DateTime<Utc>> {
    if let Some(s) = v.get("created_at").or_else(|| v.get("created_at_utc")).and_then(Value::as_str) {
        if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
            return Some(dt.with_timezone(&Utc));
        }
        // Twitter's native format: "Wed Mar 18 17:03:05 +0000 2020"
        if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
            return Some(dt.with_timezone(&Utc));
        }
        return None;
    }
    let ms = match v.get("timestamp_ms")? {
        Value::String(s) => s.parse::<i64>().ok()?,
        Value::Number(n) => n.as_i64()?,
        _ => return None,
    };
    Utc.timestamp_millis_opt(ms).single()
}

fn parse_point(v: &Value) -> Option<GeoPoint> {
    let coords = match v.get("coordinates")? {
        Value::Object(o) => o.get("coordinates")?,
        other => other,
    };
    let arr = coords.as_array()?;
    if arr.len() != 2 {
        return None;
    }
    // GeoJSON order is [lon, lat].
    GeoPoint::new(arr[1].as_f64()?, arr[0].as_f64()?)
}

/// Parse one NDJSON line into a record. Geotags are extracted but not yet
/// filtered; see [`accept_us_geotag`].
pub fn parse_tweet_json(line: &str, source: SourceCorpus) -> Result<TweetRecord, SkipReason> {
    let v: Value = serde_json::from_str(line).map_err(|_| SkipReason::Malformed)?;
    if !v.is_object() {
        return Err(SkipReason::Malformed);
    }
    let tweet_id = str_field(&v, &["tweet_id", "id_str", "id"]).ok_or(SkipReason::MissingField)?;
    let user_id = str_field(&v, &["user_id"])
        .or_else(|| v.get("user").and_then(|u| str_field(u, &["id_str", "id"])))
        .ok_or(SkipReason::MissingField)?;
    let text = v
        .get("full_text")
        .or_else(|| v.get("text"))
        .and_then(Value::as_str)
        .ok_or(SkipReason::MissingField)?
        .to_string();
    let created_at_utc = parse_timestamp(&v).ok_or(SkipReason::BadTimestamp)?;

    let mut geo = GeoTag::default();
    if let Some(place) = v.get("place").filter(|p| p.is_object()) {
        geo.country_code = str_field(place, &["country_code"]);
        geo.place_name = str_field(place, &["full_name"]);
        if geo.place_name.is_some() || geo.country_code.is_some() {
            geo.precision = GeoPrecision::BoundingPlace;
        }
    }
    if let Some(point) = parse_point(&v) {
        geo.point = Some(point);
        geo.precision = GeoPrecision::ExactGps;
    }
    if let Some(name) = &geo.place_name {
        if geo.country_code.as_deref() == Some("US") {
            geo.state = state_from_place_name(name);
        }
    }

    let is_retweet = v.get("retweeted_status").is_some_and(|r| !r.is_null()) || text.starts_with("RT @");

    Ok(TweetRecord {
        tweet_id,
        user_id,
        created_at_utc,
        text,
        geo,
        is_retweet,
        source_corpus: source,
    })
}

/// "City, XX" resolves through the abbreviation; "Texas, USA" or "Texas"
/// through the full name. Anything else is unresolved.
pub fn state_from_place_name(full_name: &str) -> Option<State> {
    let name = full_name.trim();
    if let Some((head, tail)) = name.rsplit_once(',') {
        let tail = tail.trim();
        if tail.len() == 2 && tail.chars().all(|c| c.is_ascii_uppercase()) {
            return State::from_abbr(tail);
        }
        if tail.eq_ignore_ascii_case("USA") || tail.eq_ignore_ascii_case("United States") {
            return State::from_name(head);
        }
    }
    State::from_name(name)
}

/// Resolves a GPS point to a state when the place name is not enough.
pub trait StateLocator {
    fn locate_state(&self, point: GeoPoint) -> Option<State>;
}

/// True iff the record is tagged in the US and a state (50 + DC) resolves,
/// either from the place name or, failing that, from the GPS point.
/// Fills `record.geo.state` on success.
pub fn accept_us_geotag(record: &mut TweetRecord, locator: Option<&dyn StateLocator>) -> bool {
    if record.geo.country_code.as_deref() != Some("US") {
        record.geo.state = None;
        return false;
    }
    let state = record
        .geo
        .place_name
        .as_deref()
        .and_then(state_from_place_name)
        .or_else(|| locator?.locate_state(record.geo.point?));
    record.geo.state = state;
    state.is_some()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DaySources {
    pub primary: u64,
    pub compensation: u64,
}

#[derive(Debug, Clone, Default)]
pub struct MergeOutput {
    pub records: Vec<TweetRecord>,
    pub duplicates: u64,
    /// Per UTC date, how many surviving records came from each corpus.
    pub per_day: BTreeMap<NaiveDate, DaySources>,
}

/// Union keyed by tweet id. Earlier records win, and every primary record
/// precedes every compensation record.
pub fn merge_corpora(primary: Vec<TweetRecord>, compensation: Vec<TweetRecord>) -> MergeOutput {
    let mut seen = HashSet::with_capacity(primary.len() + compensation.len());
    let mut out = MergeOutput::default();
    for rec in primary.into_iter().chain(compensation) {
        if !seen.insert(rec.tweet_id.clone()) {
            out.duplicates += 1;
            continue;
        }
        let day = out.per_day.entry(rec.created_at_utc.date_naive()).or_default();
        match rec.source_corpus {
            SourceCorpus::Primary => day.primary += 1,
            SourceCorpus::Compensation => day.compensation += 1,
        }
        out.records.push(rec);
    }
    out
}

/// Stage counters. They reconcile: `output_records = input_lines - skipped
/// - retweets - keyword_rejections - duplicates - geo_rejections`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestCounters {
    pub input_lines: u64,
    pub skipped: BTreeMap<SkipReason, u64>,
    pub retweets: u64,
    pub keyword_rejections: u64,
    pub duplicates: u64,
    pub geo_rejections: u64,
    pub output_records: u64,
}

impl IngestCounters {
    pub fn skipped_total(&self) -> u64 {
        self.skipped.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        let removed = self.skipped_total()
            + self.retweets
            + self.keyword_rejections
            + self.duplicates
            + self.geo_rejections;
        self.input_lines.checked_sub(removed) == Some(self.output_records)
    }

    fn absorb(&mut self, other: &IngestCounters) {
        self.input_lines += other.input_lines;
        for (reason, n) in &other.skipped {
            *self.skipped.entry(*reason).or_default() += n;
        }
        self.retweets += other.retweets;
        self.keyword_rejections += other.keyword_rejections;
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub filter: KeywordFilter,
    pub window: DateWindow,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            filter: KeywordFilter::default_2020(),
            window: DateWindow::collection_2020(),
        }
    }
}

enum LineOutcome {
    Keep(TweetRecord),
    Skip(SkipReason),
    Retweet,
    Keyword,
}

fn classify_line(line: &str, source: SourceCorpus, opts: &IngestOptions) -> LineOutcome {
    let rec = match parse_tweet_json(line, source) {
        Ok(rec) => rec,
        Err(reason) => return LineOutcome::Skip(reason),
    };
    let date = rec.created_at_utc.date_naive();
    if !opts.window.contains(date) {
        return LineOutcome::Skip(SkipReason::OutOfWindow);
    }
    if rec.is_retweet {
        return LineOutcome::Retweet;
    }
    if !keyword_match(&rec.text, &opts.filter, date) {
        return LineOutcome::Keyword;
    }
    LineOutcome::Keep(rec)
}

/// Parse, drop retweets and keyword misses. Blank lines are not counted.
pub fn filter_lines<S: AsRef<str> + Sync>(
    lines: &[S],
    source: SourceCorpus,
    opts: &IngestOptions,
) -> (Vec<TweetRecord>, IngestCounters) {
    let outcomes: Vec<LineOutcome> = lines
        .par_iter()
        .filter(|l| !l.as_ref().trim().is_empty())
        .map(|l| classify_line(l.as_ref(), source, opts))
        .collect();
    let mut counters = IngestCounters::default();
    let mut kept = Vec::new();
    for outcome in outcomes {
        counters.input_lines += 1;
        match outcome {
            LineOutcome::Keep(rec) => kept.push(rec),
            LineOutcome::Skip(reason) => *counters.skipped.entry(reason).or_default() += 1,
            LineOutcome::Retweet => counters.retweets += 1,
            LineOutcome::Keyword => counters.keyword_rejections += 1,
        }
    }
    (kept, counters)
}

/// Open a text file, decompressing when it carries the gzip magic bytes.
pub fn open_text(path: &Path) -> Result<Box<dyn BufRead>> {
    let mut file = File::open(path).map_err(|e| Error::resource(path, e))?;
    let mut magic = [0u8; 2];
    let n = file.read(&mut magic)?;
    let file = File::open(path)?;
    if n == 2 && magic == [0x1f, 0x8b] {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(file))))
    } else {
        Ok(Box::new(BufReader::new(file)))
    }
}

pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let reader = open_text(path)?;
    reader.lines().collect::<std::io::Result<Vec<_>>>().map_err(Error::from)
}

/// Output of the keyword stage: the merged, deduplicated corpus before geo filtering.
#[derive(Debug, Clone, Default)]
pub struct KeywordCorpus {
    pub records: Vec<TweetRecord>,
    pub counters: IngestCounters,
    pub per_day: BTreeMap<NaiveDate, DaySources>,
}

pub fn ingest_lines<S: AsRef<str> + Sync>(
    primary: &[S],
    compensation: &[S],
    opts: &IngestOptions,
) -> KeywordCorpus {
    let (p, pc) = filter_lines(primary, SourceCorpus::Primary, opts);
    let (c, cc) = filter_lines(compensation, SourceCorpus::Compensation, opts);
    let mut counters = IngestCounters::default();
    counters.absorb(&pc);
    counters.absorb(&cc);
    let merged = merge_corpora(p, c);
    counters.duplicates = merged.duplicates;
    counters.output_records = merged.records.len() as u64;
    KeywordCorpus {
        records: merged.records,
        counters,
        per_day: merged.per_day,
    }
}

pub fn ingest_files(
    primary: &[impl AsRef<Path>],
    compensation: &[impl AsRef<Path>],
    opts: &IngestOptions,
) -> Result<KeywordCorpus> {
    let mut p = Vec::new();
    for path in primary {
        p.extend(read_lines(path.as_ref())?);
    }
    let mut c = Vec::new();
    for path in compensation {
        c.extend(read_lines(path.as_ref())?);
    }
    Ok(ingest_lines(&p, &c, opts))
}

/// Keep US-tagged records with a resolvable state; updates the geo counter.
pub fn apply_geo_filter(
    records: Vec<TweetRecord>,
    locator: Option<&dyn StateLocator>,
    counters: &mut IngestCounters,
) -> Vec<TweetRecord> {
    let before = records.len() as u64;
    let kept: Vec<TweetRecord> = records
        .into_iter()
        .filter_map(|mut r| accept_us_geotag(&mut r, locator).then_some(r))
        .collect();
    counters.geo_rejections += before - kept.len() as u64;
    counters.output_records = kept.len() as u64;
    kept
}

pub fn write_records(path: &Path, records: &[TweetRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records(path: &Path) -> Result<Vec<TweetRecord>> {
    let reader = open_text(path)?;
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, m, d).unwrap()
    }

    fn line(id: &str, extra: &str) -> String {
        format!(
            r#"{{"tweet_id":"{id}","user_id":"u1","created_at":"2020-03-01T12:00:00Z","text":"corona news"{extra}}}"#
        )
    }

    #[test]
    fn place_maps_to_bounding_place_state() {
        let l = line("1", r#","place":{"country_code":"US","full_name":"Denver, CO","place_type":"city"}"#);
        let rec = parse_tweet_json(&l, SourceCorpus::Primary).unwrap();
        assert_eq!(rec.geo.state, Some(State::CO));
        assert_eq!(rec.geo.precision, GeoPrecision::BoundingPlace);
    }

    #[test]
    fn coordinates_swap_to_lat_lon() {
        let l = line("1", r#","coordinates":[-122.41,37.77]"#);
        let rec = parse_tweet_json(&l, SourceCorpus::Primary).unwrap();
        assert_eq!(rec.geo.point, Some(GeoPoint { lat: 37.77, lon: -122.41 }));
        assert_eq!(rec.geo.precision, GeoPrecision::ExactGps);

        let l = line("2", r#","coordinates":{"type":"Point","coordinates":[-122.41,37.77]}"#);
        let rec = parse_tweet_json(&l, SourceCorpus::Primary).unwrap();
        assert_eq!(rec.geo.point.unwrap().lat, 37.77);
    }

    #[test]
    fn truncated_line_is_malformed() {
        let l = line("1", "");
        assert_eq!(
            parse_tweet_json(&l[..l.len() - 5], SourceCorpus::Primary),
            Err(SkipReason::Malformed)
        );
        assert_eq!(parse_tweet_json("[1,2]", SourceCorpus::Primary), Err(SkipReason::Malformed));
    }

    #[test]
    fn twitter_native_fields() {
        let l = r#"{"id_str":"99","user":{"id_str":"7"},"created_at":"Wed Mar 18 17:03:05 +0000 2020","text":"hi","retweeted_status":{"id":1}}"#;
        let rec = parse_tweet_json(l, SourceCorpus::Primary).unwrap();
        assert_eq!(rec.tweet_id, "99");
        assert_eq!(rec.user_id, "7");
        assert!(rec.is_retweet);
        assert_eq!(rec.created_at_utc.to_rfc3339(), "2020-03-18T17:03:05+00:00");
        let rt = line("3", "").replace("corona news", "RT @cdc: corona news");
        assert!(parse_tweet_json(&rt, SourceCorpus::Primary).unwrap().is_retweet);
    }

    #[test]
    fn keyword_examples() {
        let f = KeywordFilter::default_2020();
        assert!(keyword_match("Wuhan update", &f, date(1, 26)));
        assert!(keyword_match("Wuhan update", &f, date(5, 1)));
        assert!(!keyword_match("covid19 spike", &f, date(2, 1)));
        assert!(keyword_match("covid19 spike", &f, date(2, 11)));
        assert!(!keyword_match("hello world", &f, date(3, 1)));
        // substring semantics
        assert!(keyword_match("#CoronavirusOutbreak", &f, date(1, 30)));
        assert!(keyword_match("COVIDー19", &f, date(3, 1)));
    }

    #[test]
    fn empty_keyword_set_rejected() {
        assert!(KeywordFilter::new(vec![]).is_err());
    }

    fn rec_with_place(cc: &str, name: &str) -> TweetRecord {
        let l = line(
            "1",
            &format!(r#","place":{{"country_code":"{cc}","full_name":"{name}"}}"#),
        );
        parse_tweet_json(&l, SourceCorpus::Primary).unwrap()
    }

    #[test]
    fn us_geotag_acceptance() {
        let mut gb = rec_with_place("GB", "London, England");
        assert!(!accept_us_geotag(&mut gb, None));

        let mut ny = rec_with_place("US", "Manhattan, NY");
        assert!(accept_us_geotag(&mut ny, None));
        assert_eq!(ny.geo.state, Some(State::NY));

        let mut pr = rec_with_place("US", "Puerto Rico, USA");
        assert!(!accept_us_geotag(&mut pr, None));

        let mut tx = rec_with_place("US", "Texas, USA");
        assert!(accept_us_geotag(&mut tx, None));
        assert_eq!(tx.geo.state, Some(State::TX));

        let mut dc = rec_with_place("US", "Washington, DC");
        assert!(accept_us_geotag(&mut dc, None));
        assert_eq!(dc.geo.state, Some(State::DC));

        let mut odd = rec_with_place("US", "Somewhere, XY");
        assert!(!accept_us_geotag(&mut odd, None));
    }

    struct Everywhere(State);
    impl StateLocator for Everywhere {
        fn locate_state(&self, _: GeoPoint) -> Option<State> {
            Some(self.0)
        }
    }

    #[test]
    fn gps_point_falls_back_to_locator() {
        let l = line("1", r#","place":{"country_code":"US","full_name":"United States"},"coordinates":[-100.0,40.0]"#);
        let mut rec = parse_tweet_json(&l, SourceCorpus::Primary).unwrap();
        assert!(!accept_us_geotag(&mut rec.clone(), None));
        assert!(accept_us_geotag(&mut rec, Some(&Everywhere(State::KS))));
        assert_eq!(rec.geo.state, Some(State::KS));
    }

    fn rec(id: &str, source: SourceCorpus) -> TweetRecord {
        let mut r = parse_tweet_json(&line(id, ""), source).unwrap();
        r.source_corpus = source;
        r
    }

    fn ids(out: &MergeOutput) -> Vec<&str> {
        out.records.iter().map(|r| r.tweet_id.as_str()).collect()
    }

    #[test]
    fn merge_prefers_primary() {
        use SourceCorpus::*;
        let out = merge_corpora(
            vec![rec("A", Primary), rec("B", Primary)],
            vec![rec("B", Compensation), rec("C", Compensation)],
        );
        assert_eq!(ids(&out), ["A", "B", "C"]);
        assert_eq!(out.records[1].source_corpus, Primary);
        assert_eq!(out.duplicates, 1);
        let day = &out.per_day[&date(3, 1)];
        assert_eq!((day.primary, day.compensation), (2, 1));

        let out = merge_corpora(vec![], vec![rec("C", Compensation)]);
        assert_eq!(ids(&out), ["C"]);

        let out = merge_corpora(vec![rec("A", Primary), rec("A", Primary), rec("A", Primary)], vec![]);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.duplicates, 2);
    }

    #[test]
    fn merge_is_idempotent() {
        use SourceCorpus::*;
        let once = merge_corpora(vec![rec("A", Primary), rec("B", Primary)], vec![rec("C", Compensation)]);
        let twice = merge_corpora(once.records.clone(), once.records.clone());
        assert_eq!(once.records, twice.records);
    }

    #[test]
    fn counters_reconcile() {
        let lines = vec![
            line("1", r#","place":{"country_code":"US","full_name":"Austin, TX"}"#),
            line("1", r#","place":{"country_code":"US","full_name":"Austin, TX"}"#),
            line("2", r#","place":{"country_code":"GB","full_name":"London"}"#),
            line("3", "").replace("corona news", "nothing here"),
            line("4", "").replace("corona news", "RT @x corona"),
            "{not json".to_string(),
            String::new(),
            line("5", "").replace("2020-03-01", "2019-03-01"),
        ];
        let kc = ingest_lines(&lines, &Vec::<String>::new(), &IngestOptions::default());
        let mut counters = kc.counters.clone();
        let kept = apply_geo_filter(kc.records, None, &mut counters);
        assert_eq!(kept.len(), 1);
        assert_eq!(counters.input_lines, 7);
        assert_eq!(counters.skipped[&SkipReason::Malformed], 1);
        assert_eq!(counters.skipped[&SkipReason::OutOfWindow], 1);
        assert_eq!(counters.retweets, 1);
        assert_eq!(counters.keyword_rejections, 1);
        assert_eq!(counters.duplicates, 1);
        assert_eq!(counters.geo_rejections, 1);
        assert!(counters.reconciles());
    }

    #[test]
    fn canonical_roundtrip_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![rec_with_place("US", "Denver, CO")];
        let path = dir.path().join("out.ndjson");
        write_records(&path, &recs).unwrap();
        assert_eq!(read_records(&path).unwrap(), recs);

        let gz = dir.path().join("in.ndjson.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::fast());
        enc.write_all(line("9", "").as_bytes()).unwrap();
        enc.finish().unwrap();
        let lines = read_lines(&gz).unwrap();
        assert_eq!(lines.len(), 1);
        assert!(lines[0].contains("\"9\""));
    }
}
