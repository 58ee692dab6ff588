//! Local time conversion, observation phases and daily / hour-of-week histograms.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::ops::{Add, AddAssign};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DateWindow, TweetRecord};
use crate::states::State;

/// Fixed-offset clock with an optional daylight-saving interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateClockRule {
    pub state: State,
    pub std_offset: i32,
    pub observes_dst: bool,
    pub dst_start: NaiveDate,
    pub dst_end: NaiveDate,
}

const DEFAULT_CLOCK_RULES: &str = include_str!("../data/state_clock.csv");

#[derive(Debug, Clone)]
pub struct ClockTable {
    rules: HashMap<State, StateClockRule>,
}

#[derive(Debug, Deserialize)]
struct ClockRow {
    state: String,
    std_offset: i32,
    observes_dst: bool,
    dst_start: NaiveDate,
    dst_end: NaiveDate,
}

impl ClockTable {
    /// Dominant-zone table for 2020 shipped with the crate.
    pub fn default_2020() -> ClockTable {
        ClockTable::from_csv(DEFAULT_CLOCK_RULES.as_bytes()).expect("bundled clock table parses")
    }

    pub fn from_csv<R: std::io::Read>(r: R) -> Result<ClockTable> {
        let mut rules = HashMap::new();
        for row in csv::Reader::from_reader(r).deserialize::<ClockRow>() {
            let row = row?;
            let state: State = row.state.parse()?;
            let rule = StateClockRule {
                state,
                std_offset: row.std_offset,
                observes_dst: row.observes_dst,
                dst_start: row.dst_start,
                dst_end: row.dst_end,
            };
            if rules.insert(state, rule).is_some() {
                return Err(Error::InvalidInput(format!("duplicate clock rule for {state}")));
            }
        }
        Ok(ClockTable { rules })
    }

    pub fn from_path(path: &Path) -> Result<ClockTable> {
        let f = std::fs::File::open(path).map_err(|e| Error::resource(path, e))?;
        ClockTable::from_csv(f).map_err(|e| Error::resource(path, e))
    }

    pub fn rule(&self, state: State) -> Option<&StateClockRule> {
        self.rules.get(&state)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Local wall-clock position of a tweet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LocalTime {
    pub datetime: NaiveDateTime,
    pub utc_offset: i32,
}

impl LocalTime {
    pub fn date(&self) -> NaiveDate {
        self.datetime.date()
    }

    pub fn hour(&self) -> u32 {
        self.datetime.hour()
    }

    /// 1 = Monday ... 7 = Sunday.
    pub fn weekday(&self) -> u32 {
        self.datetime.weekday().number_from_monday()
    }
}

/// Daylight saving is decided on the local standard-time date: the whole
/// start date counts as DST.
pub fn to_local(created_at_utc: DateTime<Utc>, state: State, table: &ClockTable) -> Result<LocalTime> {
    let rule = table
        .rule(state)
        .ok_or_else(|| Error::UnknownState(state.abbr().to_string()))?;
    let standard = created_at_utc.naive_utc() + Duration::hours(rule.std_offset as i64);
    let std_date = standard.date();
    let dst = rule.observes_dst && std_date >= rule.dst_start && std_date < rule.dst_end;
    let offset = rule.std_offset + i32::from(dst);
    Ok(LocalTime {
        datetime: standard + Duration::hours(i64::from(dst)),
        utc_offset: offset,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    P1,
    P2,
    P3,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::P1, Phase::P2, Phase::P3];

    /// Inclusive date bounds.
    pub fn bounds(self) -> (NaiveDate, NaiveDate) {
        let d = |m, d| NaiveDate::from_ymd_opt(2020, m, d).unwrap();
        match self {
            Phase::P1 => (d(1, 25), d(2, 24)),
            Phase::P2 => (d(2, 25), d(3, 14)),
            Phase::P3 => (d(3, 15), d(5, 10)),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

pub fn assign_phase(local_date: NaiveDate) -> Result<Phase> {
    Phase::ALL
        .into_iter()
        .find(|p| {
            let (lo, hi) = p.bounds();
            lo <= local_date && local_date <= hi
        })
        .ok_or(Error::OutOfWindow(local_date))
}

/// Business hours, 8:00 to 16:59.
pub const BUSINESS_HOURS: std::ops::RangeInclusive<usize> = 8..=16;

/// Tweet counts by weekday (row 0 = Monday) and local hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[derive(Default)]
pub struct HourWeekMatrix {
    counts: [[u64; 24]; 7],
}


impl HourWeekMatrix {
    pub fn new() -> HourWeekMatrix {
        HourWeekMatrix::default()
    }

    pub fn from_counts(counts: [[u64; 24]; 7]) -> HourWeekMatrix {
        HourWeekMatrix { counts }
    }

    pub fn counts(&self) -> &[[u64; 24]; 7] {
        &self.counts
    }

    /// `day` is 1 (Monday) through 7 (Sunday).
    pub fn get(&self, day: u32, hour: usize) -> u64 {
        self.counts[day as usize - 1][hour]
    }

    pub fn set(&mut self, day: u32, hour: usize, value: u64) {
        self.counts[day as usize - 1][hour] = value;
    }

    pub fn record(&mut self, day: u32, hour: usize) {
        self.counts[day as usize - 1][hour] += 1;
    }

    pub fn record_local(&mut self, t: &LocalTime) {
        self.record(t.weekday(), t.hour() as usize);
    }

    pub fn day_total(&self, day: u32) -> u64 {
        self.counts[day as usize - 1].iter().sum()
    }

    pub fn workday_total(&self) -> u64 {
        (1..=5).map(|d| self.day_total(d)).sum()
    }

    pub fn weekend_total(&self) -> u64 {
        (6..=7).map(|d| self.day_total(d)).sum()
    }

    pub fn total(&self) -> u64 {
        self.workday_total() + self.weekend_total()
    }

    pub fn workday_hour(&self, hour: usize) -> u64 {
        (1..=5).map(|d| self.get(d, hour)).sum()
    }

    pub fn weekend_hour(&self, hour: usize) -> u64 {
        (6..=7).map(|d| self.get(d, hour)).sum()
    }

    pub fn business_count(&self, day: u32) -> u64 {
        BUSINESS_HOURS.map(|h| self.get(day, h)).sum()
    }

    pub fn business_total(&self) -> u64 {
        (1..=7).map(|d| self.business_count(d)).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.total() == 0
    }
}

impl AddAssign<&HourWeekMatrix> for HourWeekMatrix {
    fn add_assign(&mut self, rhs: &HourWeekMatrix) {
        for (row, other) in self.counts.iter_mut().zip(rhs.counts.iter()) {
            for (c, o) in row.iter_mut().zip(other.iter()) {
                *c += o;
            }
        }
    }
}

impl Add for HourWeekMatrix {
    type Output = HourWeekMatrix;

    fn add(mut self, rhs: HourWeekMatrix) -> HourWeekMatrix {
        self += &rhs;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupKey {
    All,
    State(State),
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("ALL"),
            GroupKey::State(s) => f.write_str(s.abbr()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GroupBy {
    All,
    State,
}

/// A record placed on its state's local clock.
#[derive(Debug, Clone, Copy)]
pub struct Localized<'a> {
    pub record: &'a TweetRecord,
    pub state: State,
    pub local: LocalTime,
}

/// Attach local time to every record with a known state. Records without
/// a state or a clock rule are dropped; the count is returned.
pub fn localize<'a>(records: &'a [TweetRecord], table: &ClockTable) -> (Vec<Localized<'a>>, u64) {
    let mut dropped = 0;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let Some(state) = r.state() else {
            dropped += 1;
            continue;
        };
        match to_local(r.created_at_utc, state, table) {
            Ok(local) => out.push(Localized { record: r, state, local }),
            Err(_) => dropped += 1,
        }
    }
    (out, dropped)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histograms {
    pub daily: BTreeMap<GroupKey, BTreeMap<NaiveDate, u64>>,
    pub matrices: BTreeMap<GroupKey, HourWeekMatrix>,
}

impl Histograms {
    pub fn matrix(&self, key: GroupKey) -> HourWeekMatrix {
        self.matrices.get(&key).copied().unwrap_or_default()
    }

    /// Daily counts for `key` with every window date present (zeros filled).
    pub fn dense_daily(&self, key: GroupKey, window: &DateWindow) -> Vec<u64> {
        let series = self.daily.get(&key);
        window
            .days()
            .map(|d| series.and_then(|s| s.get(&d)).copied().unwrap_or(0))
            .collect()
    }

    pub fn write_daily_csv<W: Write>(&self, w: W, window: &DateWindow) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["date", "state", "count"])?;
        for key in self.daily.keys() {
            for (day, count) in window.days().zip(self.dense_daily(*key, window)) {
                csv.write_record([day.to_string(), key.to_string(), count.to_string()])?;
            }
        }
        csv.flush()?;
        Ok(())
    }

    pub fn write_matrix_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["state", "weekday", "hour", "count"])?;
        for (key, m) in &self.matrices {
            for day in 1..=7u32 {
                for hour in 0..24 {
                    csv.write_record([
                        key.to_string(),
                        day.to_string(),
                        hour.to_string(),
                        m.get(day, hour).to_string(),
                    ])?;
                }
            }
        }
        csv.flush()?;
        Ok(())
    }
}

/// Daily series and hour-of-week matrix per group, over the local dates in
/// `window` minus `excluded` dates.
pub fn build_histograms(
    localized: &[Localized<'_>],
    group_by: GroupBy,
    window: &DateWindow,
    excluded: &BTreeSet<NaiveDate>,
) -> Histograms {
    let mut h = Histograms::default();
    if group_by == GroupBy::All {
        h.daily.insert(GroupKey::All, BTreeMap::new());
        h.matrices.insert(GroupKey::All, HourWeekMatrix::new());
    }
    for l in localized {
        let date = l.local.date();
        if !window.contains(date) || excluded.contains(&date) {
            continue;
        }
        let key = match group_by {
            GroupBy::All => GroupKey::All,
            GroupBy::State => GroupKey::State(l.state),
        };
        *h.daily.entry(key).or_default().entry(date).or_default() += 1;
        h.matrices.entry(key).or_default().record_local(&l.local);
    }
    h
}

/// Matrix of one state's records whose local date lies in `window`.
pub fn state_matrix(localized: &[Localized<'_>], state: State, window: &DateWindow) -> HourWeekMatrix {
    let mut m = HourWeekMatrix::new();
    for l in localized.iter().filter(|l| l.state == state && window.contains(l.local.date())) {
        m.record_local(&l.local);
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapRow {
    pub hour: usize,
    pub gap: f64,
}

impl GapRow {
    /// `+` when the weekend share is higher, `-` when lower, `0` when equal.
    pub fn sign(&self) -> &'static str {
        if self.gap > 0.0 {
            "+"
        } else if self.gap < 0.0 {
            "-"
        } else {
            "0"
        }
    }
}

/// Per hour: weekend share of weekend tweets minus workday share of workday tweets.
pub fn workweek_gap_table(m: &HourWeekMatrix) -> Result<Vec<GapRow>> {
    let (we, wd) = (m.weekend_total(), m.workday_total());
    if we == 0 || wd == 0 {
        return Err(Error::Precondition("workday and weekend totals must be positive".into()));
    }
    Ok((0..24)
        .map(|hour| {
            // exact integer numerator, one rounding step
            let num = m.weekend_hour(hour) as i128 * wd as i128 - m.workday_hour(hour) as i128 * we as i128;
            GapRow { hour, gap: num as f64 / (we as i128 * wd as i128) as f64 }
        })
        .collect())
}

pub fn write_gap_csv<W: Write>(w: W, tables: &[(GroupKey, Vec<GapRow>)]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["state", "hour", "gap", "sign"])?;
    for (group, rows) in tables {
        for r in rows {
            csv.write_record([group.to_string(), r.hour.to_string(), format!("{:.9}", r.gap), r.sign().into()])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use proptest::prelude::*;

    fn utc(m: u32, d: u32, h: u32) -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, m, d, h, 0, 0).unwrap()
    }

    #[test]
    fn shipped_table_covers_every_state() {
        let t = ClockTable::default_2020();
        assert_eq!(t.len(), 51);
        assert!(!t.rule(State::AZ).unwrap().observes_dst);
        assert!(!t.rule(State::HI).unwrap().observes_dst);
        assert_eq!(t.rule(State::MI).unwrap().std_offset, -5);
        assert!(State::ALL.iter().all(|s| t.rule(*s).is_some()));
    }

    #[test]
    fn local_conversion_examples() {
        let t = ClockTable::default_2020();
        let ny_winter = to_local(utc(2, 1, 18), State::NY, &t).unwrap();
        assert_eq!((ny_winter.hour(), ny_winter.utc_offset), (13, -5));
        let ny_spring = to_local(utc(3, 20, 18), State::NY, &t).unwrap();
        assert_eq!((ny_spring.hour(), ny_spring.utc_offset), (14, -4));
        let az = to_local(utc(4, 1, 18), State::AZ, &t).unwrap();
        assert_eq!((az.hour(), az.utc_offset), (11, -7));
        // Feb 1 2020 was a Saturday
        assert_eq!(ny_winter.weekday(), 6);
    }

    #[test]
    fn dst_applies_to_whole_start_date() {
        let t = ClockTable::default_2020();
        // 05:00Z Mar 8 is 00:00 EST Mar 8, already treated as DST
        let l = to_local(utc(3, 8, 5), State::NY, &t).unwrap();
        assert_eq!((l.date().day(), l.hour(), l.utc_offset), (8, 1, -4));
        let l = to_local(utc(3, 8, 4), State::NY, &t).unwrap();
        assert_eq!((l.date().day(), l.hour(), l.utc_offset), (7, 23, -5));
    }

    #[test]
    fn unknown_state_errors() {
        let t = ClockTable::from_csv("state,std_offset,observes_dst,dst_start,dst_end\n".as_bytes()).unwrap();
        assert!(to_local(utc(2, 1, 0), State::NY, &t).is_err());
    }

    #[test]
    fn phase_boundaries() {
        let d = |m, d| NaiveDate::from_ymd_opt(2020, m, d).unwrap();
        assert_eq!(assign_phase(d(2, 24)).unwrap(), Phase::P1);
        assert_eq!(assign_phase(d(2, 25)).unwrap(), Phase::P2);
        assert_eq!(assign_phase(d(3, 14)).unwrap(), Phase::P2);
        assert_eq!(assign_phase(d(3, 15)).unwrap(), Phase::P3);
        assert!(assign_phase(d(1, 24)).is_err());
        assert!(assign_phase(d(5, 11)).is_err());
        // partition of the whole window
        for day in DateWindow::collection_2020().days() {
            let hits = Phase::ALL
                .iter()
                .filter(|p| (p.bounds().0..=p.bounds().1).contains(&day))
                .count();
            assert_eq!(hits, 1);
        }
    }

    fn tweet_at(ts: DateTime<Utc>, state: State) -> TweetRecord {
        TweetRecord {
            tweet_id: ts.timestamp().to_string(),
            user_id: "u".into(),
            created_at_utc: ts,
            text: String::new(),
            geo: crate::ingest::GeoTag { state: Some(state), ..Default::default() },
            is_retweet: false,
            source_corpus: crate::ingest::SourceCorpus::Primary,
        }
    }

    #[test]
    fn histogram_examples() {
        let table = ClockTable::default_2020();
        let window = DateWindow::collection_2020();
        let none = BTreeSet::new();
        let h = build_histograms(&[], GroupBy::All, &window, &none);
        assert!(h.matrix(GroupKey::All).is_zero());

        // Tue Mar 3 2020 09:30 EST = 14:30Z
        let r = vec![tweet_at(Utc.with_ymd_and_hms(2020, 3, 3, 14, 30, 0).unwrap(), State::NY)];
        let (loc, dropped) = localize(&r, &table);
        assert_eq!(dropped, 0);
        let m = build_histograms(&loc, GroupBy::All, &window, &none).matrix(GroupKey::All);
        assert_eq!(m.get(2, 9), 1);
        assert_eq!(m.total(), 1);
    }

    #[test]
    fn excluded_dates_are_skipped() {
        let table = ClockTable::default_2020();
        let r = vec![tweet_at(utc(3, 27, 18), State::CA), tweet_at(utc(3, 28, 18), State::CA)];
        let (loc, _) = localize(&r, &table);
        let excluded: BTreeSet<_> = [NaiveDate::from_ymd_opt(2020, 3, 27).unwrap()].into();
        let h = build_histograms(&loc, GroupBy::State, &DateWindow::collection_2020(), &excluded);
        assert_eq!(h.matrix(GroupKey::State(State::CA)).total(), 1);
    }

    #[test]
    fn gap_examples() {
        let mut m = HourWeekMatrix::new();
        for h in 0..24 {
            m.set(6, h, 1);
            m.set(7, h, 1);
        }
        m.set(1, 17, 10);
        let rows = workweek_gap_table(&m).unwrap();
        for r in &rows {
            let want = if r.hour == 17 { 1.0 / 24.0 - 1.0 } else { 1.0 / 24.0 };
            assert!((r.gap - want).abs() < 1e-15, "hour {}", r.hour);
        }
        assert_eq!(rows[17].sign(), "-");

        let mut noon = HourWeekMatrix::new();
        noon.set(6, 12, 10);
        noon.set(6, 3, 1);
        noon.set(2, 3, 5);
        noon.set(2, 12, 5);
        assert!(workweek_gap_table(&noon).unwrap()[12].gap > 0.0);

        assert!(workweek_gap_table(&HourWeekMatrix::new()).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = HourWeekMatrix> {
        proptest::collection::vec(0u64..50, 168).prop_map(|v| {
            let mut m = HourWeekMatrix::new();
            for (k, c) in v.into_iter().enumerate() {
                m.set(k as u32 / 24 + 1, k % 24, c);
            }
            m
        })
    }

    proptest! {
        #[test]
        fn gaps_sum_to_zero(mut m in matrix_strategy()) {
            m.record(1, 0);
            m.record(6, 0);
            let total: f64 = workweek_gap_table(&m).unwrap().iter().map(|r| r.gap).sum();
            prop_assert!(total.abs() < 1e-12);
        }

        #[test]
        fn matrix_additivity(a in matrix_strategy(), b in matrix_strategy()) {
            let sum = a + b;
            prop_assert_eq!(sum.total(), a.total() + b.total());
            for d in 1..=7 {
                prop_assert_eq!(sum.day_total(d), a.day_total(d) + b.day_total(d));
            }
        }

        #[test]
        fn to_local_is_monotone(s1 in 0i64..(106 * 86_400), s2 in 0i64..(106 * 86_400), idx in 0usize..51) {
            let t = ClockTable::default_2020();
            let start = utc(1, 25, 0);
            let (u1, u2) = (start + Duration::seconds(s1.min(s2)), start + Duration::seconds(s1.max(s2)));
            let st = State::ALL[idx];
            prop_assert!(to_local(u1, st, &t).unwrap().datetime <= to_local(u2, st, &t).unwrap().datetime);
        }

        #[test]
        fn disjoint_windows_sum(split in 0i64..100, hours in proptest::collection::vec(0i64..(105 * 24), 0..60)) {
            let table = ClockTable::default_2020();
            let recs: Vec<_> = hours.iter().map(|h| tweet_at(utc(1, 26, 0) + Duration::hours(*h), State::TX)).collect();
            let (loc, _) = localize(&recs, &table);
            let all = DateWindow::collection_2020();
            let mid = all.start + Duration::days(split);
            let w1 = DateWindow::new(all.start, mid).unwrap();
            let w2 = DateWindow::new(mid + Duration::days(1), all.end).unwrap();
            let none = BTreeSet::new();
            let m = |w: &DateWindow| build_histograms(&loc, GroupBy::All, w, &none).matrix(GroupKey::All);
            prop_assert_eq!(m(&w1) + m(&w2), m(&all));
            prop_assert_eq!(m(&all).total() as usize, loc.iter().filter(|l| all.contains(l.local.date())).count());
        }
    }
}
