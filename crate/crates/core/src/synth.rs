//! Deterministic synthetic corpus for tests, demos and benchmarks.
//!
//! Two states (NY and TX) with a planted lockdown and reopen calendar,
//! case series crossing the event thresholds, five county polygons, a
//! regular-interval bot account, and a sprinkling of lines every ingest
//! stage must reject.

use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime, NaiveTime};
use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::Result;
use crate::geo::{CountyShape, PolygonIndex};
use crate::ingest::{DateWindow, GeoPoint};
use crate::states::State;
use crate::temporal::ClockTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthSpec {
    /// Lines in the primary file.
    pub tweets: usize,
    /// Lines in the compensation file.
    pub compensation: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec { tweets: 5000, compensation: 300, seed: 7 }
    }
}

/// What was planted, so tests can check the pipeline against it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynthTruth {
    pub malformed: u64,
    pub out_of_window: u64,
    pub retweets: u64,
    pub off_keyword: u64,
    pub non_us: u64,
    pub duplicates: u64,
    pub bot_user: String,
    pub bot_tweets: u64,
    pub gps_tweets: u64,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub primary: Vec<String>,
    pub compensation: Vec<String>,
    pub calendar_csv: String,
    pub population_csv: String,
    pub cases_csv: String,
    pub counties_geojson: String,
    pub truth: SynthTruth,
}

pub const SYNTH_STATES: [State; 2] = [State::NY, State::TX];

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

pub fn synth_calendar() -> Vec<(State, NaiveDate, Option<NaiveDate>)> {
    vec![(State::NY, d(2020, 3, 22), None), (State::TX, d(2020, 4, 2), Some(d(2020, 5, 1)))]
}

/// Days with no primary coverage, filled by the compensation file.
pub fn synth_gap() -> DateWindow {
    DateWindow { start: d(2020, 3, 1), end: d(2020, 3, 3) }
}

const COUNTIES: &str = r#"{"type":"FeatureCollection","features":[
{"type":"Feature","properties":{"NAME":"New York","STUSPS":"NY"},"geometry":{"type":"Polygon","coordinates":[[[-74.02,40.70],[-73.97,40.71],[-73.93,40.80],[-73.91,40.87],[-73.94,40.88],[-74.01,40.76],[-74.02,40.70]]]}},
{"type":"Feature","properties":{"NAME":"Kings","STUSPS":"NY"},"geometry":{"type":"Polygon","coordinates":[[[-74.04,40.57],[-73.86,40.57],[-73.86,40.70],[-73.96,40.70],[-73.96,40.64],[-74.04,40.64],[-74.04,40.57]]]}},
{"type":"Feature","properties":{"NAME":"Albany","STUSPS":"NY"},"geometry":{"type":"Polygon","coordinates":[[[-74.27,42.42],[-73.68,42.42],[-73.68,42.82],[-74.27,42.82],[-74.27,42.42]],[[-73.85,42.62],[-73.75,42.62],[-73.75,42.70],[-73.85,42.70],[-73.85,42.62]]]}},
{"type":"Feature","properties":{"NAME":"Travis","STUSPS":"TX"},"geometry":{"type":"Polygon","coordinates":[[[-98.17,30.02],[-97.37,30.02],[-97.37,30.63],[-97.80,30.50],[-98.17,30.63],[-98.17,30.02]]]}},
{"type":"Feature","properties":{"NAME":"Harris","STUSPS":"TX"},"geometry":{"type":"MultiPolygon","coordinates":[[[[-95.96,29.50],[-94.91,29.50],[-94.91,30.17],[-95.96,30.17],[-95.96,29.50]]],[[[-94.85,29.55],[-94.75,29.55],[-94.80,29.65],[-94.85,29.55]]]]}}
]}"#;

pub fn synth_counties_geojson() -> &'static str {
    COUNTIES
}

const PLACES_NY: [&str; 4] = ["Manhattan, NY", "Brooklyn, NY", "Albany, NY", "New York, USA"];
const PLACES_TX: [&str; 4] = ["Austin, TX", "Houston, TX", "Dallas, TX", "Texas, USA"];
const HOME: [&str; 16] = [
    "home", "school", "work", "remote", "zoom", "kids", "online", "lockdown", "quarantine", "family", "stay",
    "office", "meeting", "teacher", "class", "homework",
];
const HEALTH: [&str; 16] = [
    "test", "hospital", "cases", "death", "nurse", "doctor", "mask", "vaccine", "ventilator", "symptoms", "spread",
    "patients", "health", "outbreak", "virus", "emergency",
];
const MOOD: [&str; 12] = [
    "good", "great", "happy", "safe", "hope", "thank", "bad", "sad", "scary", "worried", "terrible", "sick",
];
const EMOJI: [&str; 8] = ["😂", "😷", "🤔", "😭", "😊", "🙏", "😡", "😍"];
const DIURNAL: [f64; 24] = [
    1.0, 0.6, 0.4, 0.3, 0.3, 0.5, 1.0, 2.0, 3.0, 3.5, 3.5, 3.5, 3.5, 3.5, 3.5, 3.5, 3.5, 3.5, 4.0, 4.5, 4.5, 4.0, 3.0,
    2.0,
];

fn twitter_time(t: NaiveDateTime) -> String {
    t.format("%a %b %d %H:%M:%S +0000 %Y").to_string()
}

struct Gen<'a> {
    rng: ChaCha8Rng,
    clock: ClockTable,
    index: &'a PolygonIndex,
    next_id: u64,
}

impl Gen<'_> {
    fn id(&mut self) -> String {
        self.next_id += 1;
        format!("{}", 1_220_000_000_000_000_000u64 + self.next_id * 7919)
    }

    fn utc_from_local(&self, state: State, local: NaiveDateTime) -> NaiveDateTime {
        let rule = self.clock.rule(state).expect("synthetic states have clock rules");
        let mut offset = rule.std_offset;
        if rule.observes_dst && local.date() >= rule.dst_start && local.date() < rule.dst_end {
            offset += 1;
        }
        local - Duration::hours(offset as i64)
    }

    fn local_time(&mut self, state: State, date: NaiveDate) -> NaiveDateTime {
        let lockdown = synth_calendar().iter().find(|c| c.0 == state).map(|c| c.1).unwrap();
        let workday = chrono::Datelike::weekday(&date).number_from_monday() <= 5;
        let mut w = DIURNAL;
        if workday {
            let factor = if date >= lockdown { 1.15 } else { 0.55 };
            for x in &mut w[8..=16] {
                *x *= factor;
            }
        }
        let hour = WeightedIndex::new(w).unwrap().sample(&mut self.rng) as u32;
        let t = NaiveTime::from_hms_opt(hour, self.rng.gen_range(0..60), self.rng.gen_range(0..60)).unwrap();
        date.and_time(t)
    }

    fn text(&mut self, date: NaiveDate, keyword: bool) -> String {
        let block: &[&str] = if self.rng.gen_bool(0.5) { &HOME } else { &HEALTH };
        let n = self.rng.gen_range(5..=10);
        let mut words: Vec<String> = (0..n).map(|_| block.choose(&mut self.rng).unwrap().to_string()).collect();
        if self.rng.gen_bool(0.6) {
            words.push(MOOD.choose(&mut self.rng).unwrap().to_string());
        }
        if keyword {
            let term = if date >= d(2020, 2, 11) && self.rng.gen_bool(0.5) { "COVID19" } else { "coronavirus" };
            let at = self.rng.gen_range(0..=words.len());
            words.insert(at, term.to_string());
        }
        match self.rng.gen_range(0..10) {
            0 if keyword => words.push("#COVID19".into()),
            1 if keyword => words.push("#covid_19".into()),
            2 => words.push("#StayHome".into()),
            3 => words.insert(0, "@CDCgov".into()),
            _ => {}
        }
        let mut text = words.join(" ");
        if self.rng.gen_bool(0.35) {
            for _ in 0..self.rng.gen_range(1..=3) {
                text.push_str(EMOJI.choose(&mut self.rng).unwrap());
            }
        }
        if self.rng.gen_bool(0.1) {
            text.push_str(" https://t.co/abc123");
        }
        text
    }

    fn gps_point(&mut self, state: State) -> GeoPoint {
        let shapes: Vec<&CountyShape> = self.index.shapes().iter().filter(|s| s.state == Some(state)).collect();
        let shape = *shapes.choose(&mut self.rng).unwrap();
        let (min_lon, min_lat, max_lon, max_lat) = shape.bbox();
        loop {
            // four decimals, as a phone would report
            let p = GeoPoint {
                lat: (self.rng.gen_range(min_lat..max_lat) * 1e4).round() / 1e4,
                lon: (self.rng.gen_range(min_lon..max_lon) * 1e4).round() / 1e4,
            };
            if shape.contains(p) {
                return p;
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn tweet(
        &mut self,
        id: &str,
        user: &str,
        utc: NaiveDateTime,
        text: &str,
        place: Option<(&str, &str)>,
        point: Option<GeoPoint>,
        retweet: bool,
    ) -> String {
        let mut v = json!({
            "id_str": id,
            "created_at": twitter_time(utc),
            "user": {"id_str": user},
            "full_text": text,
        });
        if let Some((cc, name)) = place {
            v["place"] = json!({"country_code": cc, "full_name": name, "place_type": "city"});
        }
        if let Some(p) = point {
            v["coordinates"] = json!({"type": "Point", "coordinates": [p.lon, p.lat]});
        }
        if retweet {
            v["retweeted_status"] = json!({"id_str": "1"});
        }
        v.to_string()
    }
}

fn place_for(state: State, rng: &mut ChaCha8Rng) -> &'static str {
    match state {
        State::NY => PLACES_NY.choose(rng).unwrap(),
        _ => PLACES_TX.choose(rng).unwrap(),
    }
}

/// Build the corpus. The same spec always yields the same bytes.
pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    let index = PolygonIndex::from_geojson(COUNTIES).expect("bundled counties parse");
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(spec.seed), clock: ClockTable::default_2020(), index: &index, next_id: 0 };
    let window = DateWindow::collection_2020();
    let gap = synth_gap();
    // the last day is left out so no evening tweet spills past the window in UTC
    let days: Vec<NaiveDate> = window.days().filter(|day| !gap.contains(*day) && *day < window.end).collect();
    let mut truth = SynthTruth { bot_user: "bot_clockwork".into(), ..Default::default() };

    let n = spec.tweets;
    let bot = if n >= 2000 { 1010 } else { 0 };
    let noise = n / 100;
    let mut kinds: Vec<u8> = Vec::with_capacity(n);
    kinds.extend(std::iter::repeat_n(1, noise)); // malformed
    kinds.extend(std::iter::repeat_n(2, noise)); // out of window
    kinds.extend(std::iter::repeat_n(3, 3 * noise)); // retweet
    kinds.extend(std::iter::repeat_n(4, 3 * noise)); // off keyword
    kinds.extend(std::iter::repeat_n(5, 2 * noise)); // outside the US
    kinds.extend(std::iter::repeat_n(6, bot));
    kinds.resize(n, 0);
    kinds.shuffle(&mut g.rng);

    let users: Vec<String> = (0..400).map(|i| format!("u{i:04}")).collect();
    let mut bot_time = d(2020, 4, 10).and_hms_opt(0, 0, 0).unwrap();
    let bot_steps = [600, 1200, 1800, 600, 1200];
    let mut bot_i = 0;
    let mut primary = Vec::with_capacity(n);
    let mut kept_ids = Vec::new();
    for kind in kinds {
        let state = if g.rng.gen_bool(0.55) { State::NY } else { State::TX };
        let date = *days.choose(&mut g.rng).unwrap();
        let local = g.local_time(state, date);
        let utc = g.utc_from_local(state, local);
        let user = users.choose(&mut g.rng).unwrap().clone();
        let id = g.id();
        let line = match kind {
            1 => {
                truth.malformed += 1;
                format!("{{\"id_str\": \"{id}\", \"full_text\": \"coronavirus")
            }
            2 => {
                truth.out_of_window += 1;
                let early = d(2020, 1, 10).and_time(local.time());
                let text = g.text(early.date(), true);
                let place = place_for(state, &mut g.rng);
                g.tweet(&id, &user, early, &text, Some(("US", place)), None, false)
            }
            3 => {
                truth.retweets += 1;
                let text = format!("RT @someone: {}", g.text(date, true));
                let place = place_for(state, &mut g.rng);
                let flagged = g.rng.gen_bool(0.5);
                g.tweet(&id, &user, utc, &text, Some(("US", place)), None, flagged)
            }
            4 => {
                truth.off_keyword += 1;
                let text = g.text(date, false);
                let place = place_for(state, &mut g.rng);
                g.tweet(&id, &user, utc, &text, Some(("US", place)), None, false)
            }
            5 => {
                truth.non_us += 1;
                let text = g.text(date, true);
                g.tweet(&id, &user, utc, &text, Some(("CA", "Toronto, Ontario")), None, false)
            }
            6 => {
                truth.bot_tweets += 1;
                bot_time += Duration::seconds(bot_steps[bot_i % bot_steps.len()]);
                bot_i += 1;
                let text = format!("coronavirus update {} cases reported", bot_i);
                g.tweet(&id, "bot_clockwork", bot_time, &text, Some(("US", "Houston, TX")), None, false)
            }
            _ => {
                let text = g.text(date, true);
                let gps = g.rng.gen_bool(0.15);
                let point = gps.then(|| g.gps_point(state));
                if gps {
                    truth.gps_tweets += 1;
                }
                kept_ids.push((id.clone(), user.clone(), utc, text.clone(), state));
                let place = place_for(state, &mut g.rng);
                g.tweet(&id, &user, utc, &text, Some(("US", place)), point, false)
            }
        };
        primary.push(line);
    }

    let mut compensation = Vec::with_capacity(spec.compensation);
    let gap_days: Vec<NaiveDate> = gap.days().collect();
    for i in 0..spec.compensation {
        if i % 2 == 0 && !kept_ids.is_empty() {
            truth.duplicates += 1;
            let (id, user, utc, text, state) = kept_ids[g.rng.gen_range(0..kept_ids.len())].clone();
            let place = place_for(state, &mut g.rng);
            compensation.push(g.tweet(&id, &user, utc, &text, Some(("US", place)), None, false));
        } else {
            let state = if g.rng.gen_bool(0.55) { State::NY } else { State::TX };
            let date = *gap_days.choose(&mut g.rng).unwrap();
            let local = g.local_time(state, date);
            let utc = g.utc_from_local(state, local);
            let user = users.choose(&mut g.rng).unwrap().clone();
            let id = g.id();
            let text = g.text(date, true);
            let place = place_for(state, &mut g.rng);
            compensation.push(g.tweet(&id, &user, utc, &text, Some(("US", place)), None, false));
        }
    }
    // Duplicate ids can repeat inside the compensation file too.
    let mut seen = std::collections::HashSet::new();
    truth.duplicates = compensation
        .iter()
        .filter_map(|l| serde_json::from_str::<Value>(l).ok())
        .filter_map(|v| v["id_str"].as_str().map(str::to_string))
        .filter(|id| kept_ids.iter().any(|k| &k.0 == id) || !seen.insert(id.clone()))
        .count() as u64;

    SynthCorpus {
        primary,
        compensation,
        calendar_csv: calendar_csv(),
        population_csv: "state,population\nNY,19453561\nTX,28995881\n".into(),
        cases_csv: cases_csv(&window),
        counties_geojson: COUNTIES.to_string(),
        truth,
    }
}

fn calendar_csv() -> String {
    let mut s = String::from("state,lockdown_date,reopen_date\n");
    for (state, lock, reopen) in synth_calendar() {
        s.push_str(&format!("{},{},{}\n", state.abbr(), lock, reopen.map(|r| r.to_string()).unwrap_or_default()));
    }
    s
}

fn cases_csv(window: &DateWindow) -> String {
    let mut s = String::from("date,state,fips,cases,deaths\n");
    let starts = [(State::NY, d(2020, 3, 1), d(2020, 3, 14)), (State::TX, d(2020, 3, 4), d(2020, 3, 17))];
    for day in window.days() {
        for (state, first_case, first_death) in starts {
            let grow = |start: NaiveDate, rate: f64, cap: f64| -> u64 {
                if day < start {
                    0
                } else {
                    rate.powi((day - start).num_days() as i32).min(cap).floor() as u64
                }
            };
            let cases = grow(first_case, 1.32, 350_000.0);
            let deaths = grow(first_death, 1.25, 25_000.0).min(cases);
            s.push_str(&format!("{day},{},{},{cases},{deaths}\n", state.name(), state.fips()));
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthPaths {
    pub primary: PathBuf,
    pub compensation: PathBuf,
    pub calendar: PathBuf,
    pub population: PathBuf,
    pub cases: PathBuf,
    pub counties: PathBuf,
}

/// Write the corpus and its resource files into `dir`.
pub fn write_bundle(dir: &Path, corpus: &SynthCorpus) -> Result<SynthPaths> {
    std::fs::create_dir_all(dir)?;
    let paths = SynthPaths {
        primary: dir.join("tweets.ndjson"),
        compensation: dir.join("compensation.ndjson"),
        calendar: dir.join("calendar.csv"),
        population: dir.join("population.csv"),
        cases: dir.join("cases.csv"),
        counties: dir.join("counties.geojson"),
    };
    let lines = |v: &[String]| v.iter().map(|l| format!("{l}\n")).collect::<String>();
    std::fs::write(&paths.primary, lines(&corpus.primary))?;
    std::fs::write(&paths.compensation, lines(&corpus.compensation))?;
    std::fs::write(&paths.calendar, &corpus.calendar_csv)?;
    std::fs::write(&paths.population, &corpus.population_csv)?;
    std::fs::write(&paths.cases, &corpus.cases_csv)?;
    std::fs::write(&paths.counties, &corpus.counties_geojson)?;
    Ok(paths)
}
