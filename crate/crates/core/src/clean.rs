//! Bot removal by posting volume and posting-interval regularity.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::TweetRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserActivity {
    pub user_id: String,
    pub tweet_count: u64,
    pub sorted_timestamps: Vec<DateTime<Utc>>,
    /// Gap between consecutive tweets, floored to whole seconds.
    pub interval_histogram: BTreeMap<i64, u64>,
}

impl UserActivity {
    pub fn new(user_id: impl Into<String>, mut timestamps: Vec<DateTime<Utc>>) -> UserActivity {
        timestamps.sort_unstable();
        let interval_histogram = interval_histogram(&timestamps);
        UserActivity {
            user_id: user_id.into(),
            tweet_count: timestamps.len() as u64,
            sorted_timestamps: timestamps,
            interval_histogram,
        }
    }

    /// Combine two partial activities of the same user.
    pub fn merge(self, other: UserActivity) -> UserActivity {
        debug_assert_eq!(self.user_id, other.user_id);
        let mut ts = self.sorted_timestamps;
        ts.extend(other.sorted_timestamps);
        UserActivity::new(self.user_id, ts)
    }

    /// Share of intervals covered by the three most frequent interval values.
    /// Ties prefer the shorter interval. `None` without any interval.
    pub fn top3_coverage(&self) -> Option<f64> {
        let total: u64 = self.interval_histogram.values().sum();
        if total == 0 {
            return None;
        }
        let mut buckets: Vec<(i64, u64)> = self.interval_histogram.iter().map(|(k, v)| (*k, *v)).collect();
        buckets.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let top: u64 = buckets.iter().take(3).map(|b| b.1).sum();
        Some(top as f64 / total as f64)
    }
}

fn interval_histogram(sorted: &[DateTime<Utc>]) -> BTreeMap<i64, u64> {
    let mut hist = BTreeMap::new();
    for pair in sorted.windows(2) {
        let ms = (pair[1] - pair[0]).num_milliseconds();
        *hist.entry(ms.div_euclid(1000)).or_default() += 1;
    }
    hist
}

/// Per-user activity, keyed by user id.
pub fn build_activities<'a>(records: impl IntoIterator<Item = &'a TweetRecord>) -> BTreeMap<String, UserActivity> {
    let mut stamps: HashMap<&str, Vec<DateTime<Utc>>> = HashMap::new();
    for r in records {
        stamps.entry(r.user_id.as_str()).or_default().push(r.created_at_utc);
    }
    stamps
        .into_iter()
        .map(|(user, ts)| (user.to_string(), UserActivity::new(user, ts)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BotRules {
    /// Rule (a): more than this many tweets.
    pub cap: u64,
    /// Rule (b) applies above this many tweets...
    pub floor: u64,
    /// ...when the top three intervals cover at least this share.
    pub coverage: f64,
}

impl Default for BotRules {
    fn default() -> Self {
        BotRules { cap: 5000, floor: 1000, coverage: 0.90 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BotRule {
    Volume,
    Regularity,
}

impl BotRule {
    pub fn as_str(self) -> &'static str {
        match self {
            BotRule::Volume => "volume",
            BotRule::Regularity => "regularity",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BotFlag {
    pub user_id: String,
    pub tweet_count: u64,
    pub rule: BotRule,
    pub top3_coverage: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct BotReport {
    pub flagged: BTreeMap<String, BotFlag>,
    pub volume_count: u64,
    pub regularity_count: u64,
}

impl BotReport {
    pub fn is_bot(&self, user_id: &str) -> bool {
        self.flagged.contains_key(user_id)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["user_id", "tweet_count", "rule", "top3_coverage"])?;
        for f in self.flagged.values() {
            csv.write_record([
                f.user_id.clone(),
                f.tweet_count.to_string(),
                f.rule.as_str().to_string(),
                f.top3_coverage.map(|c| format!("{c:.6}")).unwrap_or_default(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// A user is attributed to the first rule it matches.
pub fn classify_user(activity: &UserActivity, rules: &BotRules) -> Option<BotRule> {
    if activity.tweet_count > rules.cap {
        return Some(BotRule::Volume);
    }
    if activity.tweet_count > rules.floor {
        if let Some(cov) = activity.top3_coverage() {
            if cov >= rules.coverage - 1e-12 {
                return Some(BotRule::Regularity);
            }
        }
    }
    None
}

pub fn detect_bots<'a>(activities: impl IntoIterator<Item = &'a UserActivity>, rules: &BotRules) -> BotReport {
    let mut report = BotReport::default();
    for a in activities {
        let Some(rule) = classify_user(a, rules) else { continue };
        match rule {
            BotRule::Volume => report.volume_count += 1,
            BotRule::Regularity => report.regularity_count += 1,
        }
        report.flagged.insert(
            a.user_id.clone(),
            BotFlag {
                user_id: a.user_id.clone(),
                tweet_count: a.tweet_count,
                rule,
                top3_coverage: a.top3_coverage(),
            },
        );
    }
    report
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RemovalCounts {
    pub volume: u64,
    pub regularity: u64,
}

impl RemovalCounts {
    pub fn total(&self) -> u64 {
        self.volume + self.regularity
    }
}

pub fn remove_bot_tweets(records: Vec<TweetRecord>, bots: &BotReport) -> (Vec<TweetRecord>, RemovalCounts) {
    let mut removed = RemovalCounts::default();
    let kept = records
        .into_iter()
        .filter(|r| match bots.flagged.get(&r.user_id) {
            Some(flag) => {
                match flag.rule {
                    BotRule::Volume => removed.volume += 1,
                    BotRule::Regularity => removed.regularity += 1,
                }
                false
            }
            None => true,
        })
        .collect();
    (kept, removed)
}

/// For each distinct per-user tweet count, the fraction of users with it.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ActivityTable {
    pub fractions: BTreeMap<u64, f64>,
    pub users: u64,
}

impl ActivityTable {
    /// Fraction of users with at most `n` tweets.
    pub fn cumulative_at_most(&self, n: u64) -> f64 {
        self.fractions.range(..=n).map(|(_, f)| f).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["tweet_count", "user_fraction"])?;
        for (count, frac) in &self.fractions {
            csv.write_record([count.to_string(), format!("{frac:.9}")])?;
        }
        csv.flush()?;
        Ok(())
    }
}

pub fn user_activity_table<'a>(records: impl IntoIterator<Item = &'a TweetRecord>) -> ActivityTable {
    let mut per_user: HashMap<&str, u64> = HashMap::new();
    for r in records {
        *per_user.entry(r.user_id.as_str()).or_default() += 1;
    }
    let users = per_user.len() as u64;
    let mut by_count: BTreeMap<u64, u64> = BTreeMap::new();
    for c in per_user.values() {
        *by_count.entry(*c).or_default() += 1;
    }
    let fractions = by_count
        .into_iter()
        .map(|(c, n)| (c, n as f64 / users as f64))
        .collect();
    ActivityTable { fractions, users }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, TimeZone};
    use proptest::prelude::*;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).unwrap()
    }

    /// `n` tweets whose gaps cycle through `gaps` (seconds).
    fn user(id: &str, n: usize, gaps: &[i64]) -> UserActivity {
        let mut t = t0();
        let mut ts = vec![t];
        for k in 1..n {
            t += Duration::seconds(gaps[(k - 1) % gaps.len()]);
            ts.push(t);
        }
        UserActivity::new(id, ts)
    }

    /// Gaps that never repeat, so no bucket exceeds one.
    fn diverse(n: usize) -> Vec<i64> {
        (0..n as i64).map(|k| 100 + k).collect()
    }

    #[test]
    fn volume_boundary_is_strict() {
        let rules = BotRules::default();
        let at_cap = user("a", 5000, &diverse(5000));
        let over = user("b", 5001, &diverse(5001));
        assert_eq!(classify_user(&at_cap, &rules), None);
        assert_eq!(classify_user(&over, &rules), Some(BotRule::Volume));
    }

    #[test]
    fn constant_interval_user_is_regular() {
        let u = user("c", 1200, &[60]);
        assert_eq!(u.top3_coverage(), Some(1.0));
        assert_eq!(classify_user(&u, &BotRules::default()), Some(BotRule::Regularity));
        let report = detect_bots([&u], &BotRules::default());
        assert_eq!(report.regularity_count, 1);
        assert_eq!(report.volume_count, 0);
    }

    #[test]
    fn histogram_floors_to_seconds() {
        let ts = vec![
            t0(),
            t0() + Duration::milliseconds(90_400),
            t0() + Duration::milliseconds(90_400 + 90_600),
        ];
        let u = UserActivity::new("x", ts);
        assert_eq!(u.interval_histogram.get(&90), Some(&2));
        assert_eq!(u.interval_histogram.values().sum::<u64>(), u.tweet_count - 1);
    }

    #[test]
    fn top3_ties_prefer_short_intervals() {
        // four buckets of equal size: 10, 20, 30, 40
        let u = user("t", 9, &[40, 30, 20, 10]);
        assert_eq!(u.top3_coverage(), Some(6.0 / 8.0));
    }

    #[test]
    fn merge_equals_whole() {
        let whole = user("m", 50, &[5, 7, 11]);
        let (a, b) = whole.sorted_timestamps.split_at(20);
        let merged = UserActivity::new("m", b.to_vec()).merge(UserActivity::new("m", a.to_vec()));
        assert_eq!(merged, whole);
    }

    fn tweet(id: usize, user: &str) -> TweetRecord {
        TweetRecord {
            tweet_id: id.to_string(),
            user_id: user.into(),
            created_at_utc: t0() + Duration::minutes(id as i64),
            text: String::new(),
            geo: Default::default(),
            is_retweet: false,
            source_corpus: crate::ingest::SourceCorpus::Primary,
        }
    }

    #[test]
    fn removal_counts() {
        let recs: Vec<_> = (0..10).map(|i| tweet(i, if i < 3 { "bot" } else { "human" })).collect();
        let empty = BotReport::default();
        let (kept, removed) = remove_bot_tweets(recs.clone(), &empty);
        assert_eq!(kept, recs);
        assert_eq!(removed.total(), 0);

        let mut report = BotReport::default();
        report.flagged.insert(
            "bot".into(),
            BotFlag { user_id: "bot".into(), tweet_count: 3, rule: BotRule::Volume, top3_coverage: None },
        );
        let (kept, removed) = remove_bot_tweets(recs.clone(), &report);
        assert_eq!(kept.len(), 7);
        assert_eq!(removed.volume, 3);

        report.flagged.insert(
            "human".into(),
            BotFlag { user_id: "human".into(), tweet_count: 7, rule: BotRule::Regularity, top3_coverage: None },
        );
        let (kept, removed) = remove_bot_tweets(recs, &report);
        assert!(kept.is_empty());
        assert_eq!(removed.regularity, 7);
    }

    #[test]
    fn activity_fractions() {
        let recs = vec![tweet(1, "a"), tweet(2, "b"), tweet(3, "c"), tweet(4, "c")];
        let t = user_activity_table(&recs);
        assert_eq!(t.fractions[&1], 2.0 / 3.0);
        assert_eq!(t.fractions[&2], 1.0 / 3.0);
        assert!((t.cumulative_at_most(10) - 1.0).abs() < 1e-12);

        let single = user_activity_table(&recs[..1]);
        assert_eq!(single.fractions[&1], 1.0);
    }

    #[test]
    fn bot_csv_header() {
        let u = user("c", 1200, &[60]);
        let mut buf = Vec::new();
        detect_bots([&u], &BotRules::default()).write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "user_id,tweet_count,rule,top3_coverage\nc,1200,regularity,1.000000\n");
    }

    proptest! {
        #[test]
        fn shift_and_reorder_invariance(
            gaps in proptest::collection::vec(1i64..400, 5..80),
            shift in -100_000i64..100_000,
            floor in 0u64..40,
        ) {
            let rules = BotRules { cap: 60, floor, coverage: 0.5 };
            let base = user("p", gaps.len() + 1, &gaps);
            let shifted: Vec<_> = base.sorted_timestamps.iter().rev().map(|t| *t + Duration::seconds(shift)).collect();
            let moved = UserActivity::new("p", shifted);
            prop_assert_eq!(classify_user(&base, &rules), classify_user(&moved, &rules));
            prop_assert_eq!(&base.interval_histogram, &moved.interval_histogram);
        }
    }
}
