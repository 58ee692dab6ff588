//! Work-engagement indices.
//!
//! For hour `i`, `H(i)` compares the share of weekend tweets posted at `i`
//! against the share of workday tweets posted at `i`:
//!
//! ```text
//! H(i) = (weekend_i / T_weekend) / (workday_i / T_workday) - 1
//! ```
//!
//! For workday `j`, `D(j)` compares the business-hour share of the weekend
//! against the business-hour share of day `j`:
//!
//! ```text
//! D(j) = (weekend_business / T_weekend) / (business_j / T_j) - 1
//! ```
//!
//! Zero means no difference from the weekend baseline; positive values mean
//! relatively less weekday activity. A value is `None` (missing) whenever
//! its denominator share is zero; `-1.0` is reserved for a zero weekend
//! numerator.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DateWindow;
use crate::states::State;
use crate::temporal::{state_matrix, HourWeekMatrix, Localized, BUSINESS_HOURS};

/// `num_a / den_a` divided by `num_b / den_b`, minus one, from integers.
fn ratio_minus_one(num_a: u64, den_a: u64, num_b: u64, den_b: u64) -> Option<f64> {
    if den_a == 0 || num_b == 0 || den_b == 0 {
        return None;
    }
    let lhs = num_a as i128 * den_b as i128;
    let rhs = den_a as i128 * num_b as i128;
    Some((lhs - rhs) as f64 / rhs as f64)
}

/// `H(i)` for local hour `hour` (0..24).
pub fn hourly_engagement(m: &HourWeekMatrix, hour: usize) -> Option<f64> {
    ratio_minus_one(m.weekend_hour(hour), m.weekend_total(), m.workday_hour(hour), m.workday_total())
}

/// `D(j)` for `day` in 1 (Monday) ..= 5 (Friday).
pub fn daily_engagement(m: &HourWeekMatrix, day: u32) -> Option<f64> {
    assert!((1..=5).contains(&day), "daily engagement is defined for Monday..Friday");
    let weekend_business = m.business_count(6) + m.business_count(7);
    ratio_minus_one(weekend_business, m.weekend_total(), m.business_count(day), m.day_total(day))
}

/// Mean and population standard deviation over the defined cells.
pub fn mean_std(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return (None, None);
    }
    let n = defined.len() as f64;
    let mean = defined.iter().sum::<f64>() / n;
    let var = defined.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (Some(mean), Some(var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Lockdown,
    Reopen,
}

impl Anchor {
    pub fn as_str(self) -> &'static str {
        match self {
            Anchor::Lockdown => "lockdown",
            Anchor::Reopen => "reopen",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEvents {
    pub lockdown: Option<NaiveDate>,
    pub reopen: Option<NaiveDate>,
}

/// Stay-at-home and reopening dates per state.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventCalendar {
    entries: BTreeMap<State, StateEvents>,
}

impl EventCalendar {
    pub fn insert(&mut self, state: State, events: StateEvents) -> Result<()> {
        if let (Some(l), Some(r)) = (events.lockdown, events.reopen) {
            if r <= l {
                return Err(Error::InvalidInput(format!("{state}: reopen {r} is not after lockdown {l}")));
            }
        }
        self.entries.insert(state, events);
        Ok(())
    }

    pub fn get(&self, state: State) -> Option<&StateEvents> {
        self.entries.get(&state)
    }

    pub fn anchor(&self, state: State, anchor: Anchor) -> Option<NaiveDate> {
        let e = self.entries.get(&state)?;
        match anchor {
            Anchor::Lockdown => e.lockdown,
            Anchor::Reopen => e.reopen,
        }
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        self.entries.keys().copied()
    }

    /// CSV with header `state,lockdown_date,reopen_date`; empty cells allowed.
    pub fn from_csv<R: std::io::Read>(r: R) -> Result<EventCalendar> {
        let mut cal = EventCalendar::default();
        let mut rdr = csv::Reader::from_reader(r);
        for row in rdr.records() {
            let row = row?;
            let state: State = row.get(0).unwrap_or_default().parse()?;
            let date = |i: usize| -> Result<Option<NaiveDate>> {
                match row.get(i).map(str::trim).filter(|s| !s.is_empty()) {
                    None => Ok(None),
                    Some(s) => s
                        .parse()
                        .map(Some)
                        .map_err(|_| Error::InvalidInput(format!("bad date {s:?}"))),
                }
            };
            cal.insert(state, StateEvents { lockdown: date(1)?, reopen: date(2)? })?;
        }
        Ok(cal)
    }

    pub fn from_path(path: &Path) -> Result<EventCalendar> {
        let f = std::fs::File::open(path).map_err(|e| Error::resource(path, e))?;
        EventCalendar::from_csv(f).map_err(|e| Error::resource(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngagementReport {
    pub state: State,
    pub anchor: Option<Anchor>,
    /// Week offset from the anchor week.
    pub offset: i64,
    pub window: DateWindow,
    /// Business-hour tweets in the window.
    pub n_tweets: u64,
    /// `H(8)` ..= `H(16)`.
    pub hourly: Vec<Option<f64>>,
    /// `D(1)` ..= `D(5)`.
    pub daily: Vec<Option<f64>>,
    pub hourly_mean: Option<f64>,
    pub hourly_std: Option<f64>,
    pub daily_mean: Option<f64>,
    pub daily_std: Option<f64>,
}

impl EngagementReport {
    pub fn from_matrix(state: State, window: DateWindow, m: &HourWeekMatrix) -> EngagementReport {
        let hourly: Vec<_> = BUSINESS_HOURS.map(|h| hourly_engagement(m, h)).collect();
        let daily: Vec<_> = (1..=5).map(|d| daily_engagement(m, d)).collect();
        let (hourly_mean, hourly_std) = mean_std(&hourly);
        let (daily_mean, daily_std) = mean_std(&daily);
        EngagementReport {
            state,
            anchor: None,
            offset: 0,
            window,
            n_tweets: m.business_total(),
            hourly,
            daily,
            hourly_mean,
            hourly_std,
            daily_mean,
            daily_std,
        }
    }
}

/// Seven-day windows starting on the anchor date plus whole-week offsets
/// `-weeks_before ..= weeks_after`.
pub fn anchor_windows(anchor_date: NaiveDate, weeks_before: u32, weeks_after: u32) -> Vec<(i64, DateWindow)> {
    (-(weeks_before as i64)..=weeks_after as i64)
        .map(|k| {
            let start = anchor_date + Duration::days(7 * k);
            (k, DateWindow { start, end: start + Duration::days(6) })
        })
        .collect()
}

pub fn weekly_window_series(
    localized: &[Localized<'_>],
    state: State,
    calendar: &EventCalendar,
    anchor: Anchor,
    weeks_before: u32,
    weeks_after: u32,
) -> Result<Vec<EngagementReport>> {
    let date = calendar
        .anchor(state, anchor)
        .ok_or_else(|| Error::Precondition(format!("no {} date for {state}", anchor.as_str())))?;
    Ok(anchor_windows(date, weeks_before, weeks_after)
        .into_iter()
        .map(|(offset, window)| {
            let m = state_matrix(localized, state, &window);
            let mut r = EngagementReport::from_matrix(state, window, &m);
            r.anchor = Some(anchor);
            r.offset = offset;
            r
        })
        .collect())
}

/// States ranked by business-hour volume in their own first anchor week,
/// ties broken by abbreviation. States without the anchor are left out.
pub fn top_states_by_business_volume(
    localized: &[Localized<'_>],
    calendar: &EventCalendar,
    anchor: Anchor,
) -> Vec<(State, u64)> {
    let mut ranked: Vec<(State, u64)> = calendar
        .states()
        .filter_map(|s| {
            let start = calendar.anchor(s, anchor)?;
            let window = DateWindow { start, end: start + Duration::days(6) };
            Some((s, state_matrix(localized, s, &window).business_total()))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.abbr().cmp(b.0.abbr())));
    ranked
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Per-column mean and std across reports, like the table footers.
pub fn column_summary(rows: &[Vec<Option<f64>>]) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
    let width = rows.first().map_or(0, Vec::len);
    (0..width)
        .map(|c| mean_std(&rows.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .unzip()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Hourly,
    Daily,
}

/// Columns: state, date, offset, n_tweets, values..., avg, std; followed by
/// `Avg.` and `Std.` footer rows.
pub fn write_report_csv<W: Write>(w: W, reports: &[EngagementReport], kind: ReportKind) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    let mut header: Vec<String> = vec!["state".into(), "date".into(), "offset".into(), "n_tweets".into()];
    match kind {
        ReportKind::Hourly => header.extend(BUSINESS_HOURS.map(|h| format!("{h}:00"))),
        ReportKind::Daily => header.extend(["Mon", "Tue", "Wed", "Thu", "Fri"].map(String::from)),
    }
    header.extend(["avg".into(), "std".into()]);
    csv.write_record(&header)?;
    let values = |r: &EngagementReport| match kind {
        ReportKind::Hourly => (r.hourly.clone(), r.hourly_mean, r.hourly_std),
        ReportKind::Daily => (r.daily.clone(), r.daily_mean, r.daily_std),
    };
    let mut rows = Vec::new();
    for r in reports {
        let (vals, mean, std) = values(r);
        let mut rec = vec![r.state.to_string(), r.window.start.to_string(), r.offset.to_string(), r.n_tweets.to_string()];
        rec.extend(vals.iter().map(|v| fmt_cell(*v)));
        rec.extend([fmt_cell(mean), fmt_cell(std)]);
        csv.write_record(&rec)?;
        rows.push(vals);
    }
    if !rows.is_empty() {
        let (avg, std) = column_summary(&rows);
        for (label, line) in [("Avg.", avg), ("Std.", std)] {
            let mut rec = vec![label.to_string(), String::new(), String::new(), String::new()];
            rec.extend(line.iter().map(|v| fmt_cell(*v)));
            rec.extend([String::new(), String::new()]);
            csv.write_record(&rec)?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn uniform(c: u64) -> HourWeekMatrix {
        HourWeekMatrix::from_counts([[c; 24]; 7])
    }

    #[test]
    fn identical_profiles_give_zero() {
        let m = uniform(3);
        for h in 0..24 {
            assert_eq!(hourly_engagement(&m, h), Some(0.0));
        }
        for d in 1..=5 {
            assert_eq!(daily_engagement(&m, d), Some(0.0));
        }
    }

    #[test]
    fn twenty_vs_ten_percent() {
        // weekend: 20 of 100 at hour 9; workday: 10 of 100 at hour 9
        let mut m = HourWeekMatrix::new();
        m.set(6, 9, 20);
        m.set(6, 0, 80);
        m.set(1, 9, 10);
        m.set(1, 0, 90);
        assert_eq!(hourly_engagement(&m, 9), Some(1.0));
    }

    #[test]
    fn zero_weekend_hour_is_minus_one_and_zero_workday_is_missing() {
        let mut m = uniform(2);
        m.set(6, 10, 0);
        m.set(7, 10, 0);
        assert_eq!(hourly_engagement(&m, 10), Some(-1.0));
        for d in 1..=5 {
            m.set(d, 11, 0);
        }
        assert_eq!(hourly_engagement(&m, 11), None);
    }

    #[test]
    fn daily_examples() {
        // weekend business fraction 0.4, Monday business fraction 0.2
        let mut m = HourWeekMatrix::new();
        m.set(6, 9, 4);
        m.set(6, 20, 6);
        m.set(1, 9, 2);
        m.set(1, 20, 8);
        assert_eq!(daily_engagement(&m, 1), Some(1.0));
        assert_eq!(daily_engagement(&m, 2), None);

        let mut z = uniform(1);
        for h in BUSINESS_HOURS {
            z.set(6, h, 0);
            z.set(7, h, 0);
        }
        for d in 1..=5 {
            assert_eq!(daily_engagement(&z, d), Some(-1.0));
        }
    }

    #[test]
    fn mean_std_skips_missing() {
        let (m, s) = mean_std(&[Some(1.0), None, Some(3.0)]);
        assert_eq!(m, Some(2.0));
        assert_eq!(s, Some(1.0));
        assert_eq!(mean_std(&[None]), (None, None));
    }

    #[test]
    fn windows_around_anchor() {
        let ca = NaiveDate::from_ymd_opt(2020, 3, 19).unwrap();
        let ws = anchor_windows(ca, 5, 3);
        assert_eq!(ws.len(), 9);
        let zero = ws.iter().find(|(k, _)| *k == 0).unwrap().1;
        assert_eq!(zero.start, ca);
        assert_eq!(zero.end, NaiveDate::from_ymd_opt(2020, 3, 25).unwrap());
        assert_eq!(ws[0].1.start, ca - Duration::days(35));
    }

    #[test]
    fn calendar_validation() {
        let csv = "state,lockdown_date,reopen_date\nCA,2020-03-19,\nTX,2020-04-02,2020-05-01\n";
        let cal = EventCalendar::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(cal.anchor(State::CA, Anchor::Reopen), None);
        assert_eq!(cal.anchor(State::TX, Anchor::Reopen), NaiveDate::from_ymd_opt(2020, 5, 1));
        let bad = "state,lockdown_date,reopen_date\nCA,2020-03-19,2020-03-01\n";
        assert!(EventCalendar::from_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn missing_anchor_is_an_error() {
        let cal = EventCalendar::default();
        assert!(weekly_window_series(&[], State::CA, &cal, Anchor::Lockdown, 1, 1).is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = HourWeekMatrix> {
        proptest::collection::vec(0u64..40, 168).prop_map(|v| {
            let mut m = HourWeekMatrix::new();
            for (k, c) in v.into_iter().enumerate() {
                m.set(k as u32 / 24 + 1, k % 24, c);
            }
            m
        })
    }

    proptest! {
        #[test]
        fn defined_values_are_at_least_minus_one(m in matrix_strategy()) {
            for h in 0..24 {
                if let Some(v) = hourly_engagement(&m, h) { prop_assert!(v >= -1.0); }
            }
            for d in 1..=5 {
                if let Some(v) = daily_engagement(&m, d) { prop_assert!(v >= -1.0); }
            }
        }

        #[test]
        fn non_business_permutation_keeps_daily(m in matrix_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut p = m;
            for d in 1..=7 {
                let mut off: Vec<u64> = (0..24).filter(|h| !BUSINESS_HOURS.contains(h)).map(|h| m.get(d, h)).collect();
                off.shuffle(&mut rng);
                for (h, v) in (0..24).filter(|h| !BUSINESS_HOURS.contains(h)).zip(off) {
                    p.set(d, h, v);
                }
            }
            for d in 1..=5 {
                prop_assert_eq!(daily_engagement(&m, d), daily_engagement(&p, d));
            }
        }
    }
}
