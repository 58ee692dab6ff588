//! State shares and normalized volumes, county resolution of GPS points.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Mutex, RwLock};
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::ingest::{GeoPoint, GeoPrecision, StateLocator, TweetRecord};
use crate::states::State;

/// Percentage of tweets per state. Percentages sum to 100.
pub fn state_share_table(records: &[TweetRecord]) -> Result<BTreeMap<State, f64>> {
    let counts = state_counts(records);
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(counts
        .into_iter()
        .map(|(s, c)| (s, 100.0 * c as f64 / total as f64))
        .collect())
}

pub fn state_counts(records: &[TweetRecord]) -> BTreeMap<State, u64> {
    let mut counts = BTreeMap::new();
    for s in records.iter().filter_map(TweetRecord::state) {
        *counts.entry(s).or_default() += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateStats {
    pub state: State,
    pub population: u64,
    pub cum_cases: u64,
    pub cum_deaths: u64,
    pub tweet_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Per1000Residents,
    PerCase,
    PerDeath,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Per1000Residents, Basis::PerCase, Basis::PerDeath];

    pub fn as_str(self) -> &'static str {
        match self {
            Basis::Per1000Residents => "per_1000_residents",
            Basis::PerCase => "per_case",
            Basis::PerDeath => "per_death",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NormalizedTable {
    pub rates: BTreeMap<State, f64>,
    /// States left out because their denominator is zero.
    pub excluded: Vec<State>,
}

pub fn normalize(stats: &[StateStats], basis: Basis) -> Result<NormalizedTable> {
    let mut table = NormalizedTable::default();
    for s in stats {
        let (scale, denom) = match basis {
            Basis::Per1000Residents => (1000.0, s.population),
            Basis::PerCase => (1.0, s.cum_cases),
            Basis::PerDeath => (1.0, s.cum_deaths),
        };
        if denom == 0 {
            table.excluded.push(s.state);
        } else {
            table.rates.insert(s.state, s.tweet_count as f64 * scale / denom as f64);
        }
    }
    if table.rates.is_empty() {
        return Err(Error::Precondition(format!("no state has a positive {} denominator", basis.as_str())));
    }
    Ok(table)
}

/// State populations from a `state,population` CSV.
pub fn load_population<R: Read>(r: R) -> Result<BTreeMap<State, u64>> {
    #[derive(Deserialize)]
    struct Row {
        state: String,
        population: u64,
    }
    let mut out = BTreeMap::new();
    for row in csv::Reader::from_reader(r).deserialize::<Row>() {
        let row = row?;
        let state: State = row.state.parse()?;
        if row.population == 0 {
            return Err(Error::InvalidInput(format!("{state}: population must be positive")));
        }
        out.insert(state, row.population);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRow {
    pub date: NaiveDate,
    pub cases: u64,
    pub deaths: u64,
}

/// Cumulative cases and deaths per state, sorted by date.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CaseSeries {
    pub by_state: BTreeMap<State, Vec<CaseRow>>,
}

impl CaseSeries {
    /// `date,state,cases,deaths` CSV (extra columns such as `fips` ignored).
    /// Rows naming places outside the 50 states and DC are skipped.
    pub fn from_csv<R: Read>(r: R) -> Result<CaseSeries> {
        #[derive(Deserialize)]
        struct Row {
            date: NaiveDate,
            state: String,
            cases: u64,
            deaths: u64,
        }
        let mut series = CaseSeries::default();
        for row in csv::Reader::from_reader(r).deserialize::<Row>() {
            let row = row?;
            let Some(state) = State::parse_loose(&row.state) else { continue };
            if row.deaths > row.cases {
                return Err(Error::InvalidInput(format!("{state} {}: deaths exceed cases", row.date)));
            }
            series.by_state.entry(state).or_default().push(CaseRow {
                date: row.date,
                cases: row.cases,
                deaths: row.deaths,
            });
        }
        for rows in series.by_state.values_mut() {
            rows.sort_by_key(|r| r.date);
        }
        Ok(series)
    }

    pub fn from_path(path: &Path) -> Result<CaseSeries> {
        let f = std::fs::File::open(path).map_err(|e| Error::resource(path, e))?;
        CaseSeries::from_csv(f).map_err(|e| Error::resource(path, e))
    }

    /// Latest cumulative row on or before `date`.
    pub fn snapshot(&self, state: State, date: NaiveDate) -> Option<CaseRow> {
        self.by_state
            .get(&state)?
            .iter()
            .take_while(|r| r.date <= date)
            .last()
            .copied()
    }
}

/// Join tweet counts with population and case snapshots. States missing from
/// the population table are skipped.
pub fn build_state_stats(
    tweet_counts: &BTreeMap<State, u64>,
    population: &BTreeMap<State, u64>,
    cases: &CaseSeries,
    snapshot: NaiveDate,
) -> Vec<StateStats> {
    tweet_counts
        .iter()
        .filter_map(|(state, count)| {
            let population = *population.get(state)?;
            let snap = cases.snapshot(*state, snapshot);
            Some(StateStats {
                state: *state,
                population,
                cum_cases: snap.map_or(0, |r| r.cases),
                cum_deaths: snap.map_or(0, |r| r.deaths),
                tweet_count: *count,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Geometry

/// Where a point lies relative to a ring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RingSide {
    Inside,
    Outside,
    OnEdge,
}

/// (lon, lat) pairs; closing vertex optional.
pub type Ring = Vec<(f64, f64)>;

fn on_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> bool {
    let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
    cross == 0.0
        && p.0 >= a.0.min(b.0)
        && p.0 <= a.0.max(b.0)
        && p.1 >= a.1.min(b.1)
        && p.1 <= a.1.max(b.1)
}

/// Even-odd ray casting towards +x. Points on an edge are reported as such.
pub fn ring_side(p: (f64, f64), ring: &[(f64, f64)]) -> RingSide {
    let n = ring.len();
    if n < 3 {
        return RingSide::Outside;
    }
    let mut inside = false;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        if on_segment(p, a, b) {
            return RingSide::OnEdge;
        }
        if (a.1 > p.1) != (b.1 > p.1) {
            let x_cross = (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0;
            if p.0 < x_cross {
                inside = !inside;
            }
        }
    }
    if inside {
        RingSide::Inside
    } else {
        RingSide::Outside
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub outer: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    /// Boundary points (outer or hole edges) count as inside.
    pub fn contains(&self, p: (f64, f64)) -> bool {
        match ring_side(p, &self.outer) {
            RingSide::Outside => false,
            RingSide::OnEdge => true,
            RingSide::Inside => self.holes.iter().all(|h| ring_side(p, h) != RingSide::Inside),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyShape {
    pub county: String,
    pub state: Option<State>,
    pub polygons: Vec<Polygon>,
    bbox: (f64, f64, f64, f64),
}

impl CountyShape {
    pub fn new(county: impl Into<String>, state: Option<State>, polygons: Vec<Polygon>) -> CountyShape {
        let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in polygons.iter().flat_map(|p| p.outer.iter()) {
            bbox = (bbox.0.min(*x), bbox.1.min(*y), bbox.2.max(*x), bbox.3.max(*y));
        }
        CountyShape { county: county.into(), state, polygons, bbox }
    }

    /// `(min_lon, min_lat, max_lon, max_lat)` of the outer rings.
    pub fn bbox(&self) -> (f64, f64, f64, f64) {
        self.bbox
    }

    pub fn contains(&self, point: GeoPoint) -> bool {
        let p = (point.lon, point.lat);
        let (x0, y0, x1, y1) = self.bbox;
        if p.0 < x0 || p.0 > x1 || p.1 < y0 || p.1 > y1 {
            return false;
        }
        self.polygons.iter().any(|poly| poly.contains(p))
    }
}

/// County boundaries; lookups return the first containing shape in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolygonIndex {
    shapes: Vec<CountyShape>,
}

const COUNTY_KEYS: &[&str] = &["county", "NAME", "name", "NAMELSAD"];
const STATE_KEYS: &[&str] = &["state", "STATE", "STATE_NAME", "STUSPS", "STATEFP"];

fn parse_ring(v: &Value) -> Option<Ring> {
    v.as_array()?
        .iter()
        .map(|pt| {
            let pt = pt.as_array()?;
            Some((pt.first()?.as_f64()?, pt.get(1)?.as_f64()?))
        })
        .collect()
}

fn parse_polygon(v: &Value) -> Option<Polygon> {
    let rings: Vec<Ring> = v.as_array()?.iter().map(parse_ring).collect::<Option<_>>()?;
    let mut rings = rings.into_iter();
    Some(Polygon { outer: rings.next()?, holes: rings.collect() })
}

impl PolygonIndex {
    pub fn new(shapes: Vec<CountyShape>) -> PolygonIndex {
        PolygonIndex { shapes }
    }

    /// GeoJSON FeatureCollection of Polygon / MultiPolygon features with
    /// county and state name properties.
    pub fn from_geojson(text: &str) -> Result<PolygonIndex> {
        let doc: Value = serde_json::from_str(text)?;
        let features = doc
            .get("features")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::InvalidInput("geojson without features".into()))?;
        let mut shapes = Vec::with_capacity(features.len());
        for (i, f) in features.iter().enumerate() {
            let bad = |what: &str| Error::InvalidInput(format!("feature {i}: {what}"));
            let props = f.get("properties").cloned().unwrap_or(Value::Null);
            let county = COUNTY_KEYS
                .iter()
                .find_map(|k| props.get(*k)?.as_str())
                .ok_or_else(|| bad("no county name"))?;
            let state = STATE_KEYS.iter().find_map(|k| State::parse_loose(props.get(*k)?.as_str()?));
            let geom = f.get("geometry").ok_or_else(|| bad("no geometry"))?;
            let coords = geom.get("coordinates").ok_or_else(|| bad("no coordinates"))?;
            let polygons = match geom.get("type").and_then(Value::as_str) {
                Some("Polygon") => vec![parse_polygon(coords).ok_or_else(|| bad("bad polygon"))?],
                Some("MultiPolygon") => coords
                    .as_array()
                    .ok_or_else(|| bad("bad multipolygon"))?
                    .iter()
                    .map(parse_polygon)
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| bad("bad multipolygon"))?,
                _ => return Err(bad("unsupported geometry type")),
            };
            shapes.push(CountyShape::new(county, state, polygons));
        }
        Ok(PolygonIndex { shapes })
    }

    pub fn from_path(path: &Path) -> Result<PolygonIndex> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::resource(path, e))?;
        PolygonIndex::from_geojson(&text).map_err(|e| Error::resource(path, e))
    }

    pub fn lookup(&self, point: GeoPoint) -> Option<&CountyShape> {
        self.shapes.iter().find(|s| s.contains(point))
    }

    pub fn shapes(&self) -> &[CountyShape] {
        &self.shapes
    }
}

impl StateLocator for PolygonIndex {
    fn locate_state(&self, point: GeoPoint) -> Option<State> {
        self.lookup(point)?.state
    }
}

// ---------------------------------------------------------------------------
// County resolution

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolutionMethod {
    RemoteGeocoder,
    PolygonLookup,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountyResolution {
    pub point: GeoPoint,
    pub county: Option<String>,
    pub state: Option<State>,
    pub method: ResolutionMethod,
}

/// Coordinates rounded to four decimals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(i64, i64);

impl CacheKey {
    pub fn of(p: GeoPoint) -> CacheKey {
        CacheKey((p.lat * 1e4).round() as i64, (p.lon * 1e4).round() as i64)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct CachedCounty {
    county: Option<String>,
    state: Option<State>,
}

/// Reverse geocoding over HTTP, paced to one request per interval.
#[derive(Debug)]
pub struct RemoteGeocoder {
    endpoint: String,
    contact: String,
    pace: Duration,
    retries: u32,
    last_request: Mutex<Option<Instant>>,
}

impl RemoteGeocoder {
    pub fn new(endpoint: impl Into<String>, contact: impl Into<String>) -> RemoteGeocoder {
        RemoteGeocoder {
            endpoint: endpoint.into(),
            contact: contact.into(),
            pace: Duration::from_secs(1),
            retries: 2,
            last_request: Mutex::new(None),
        }
    }

    pub fn with_pace(mut self, pace: Duration) -> RemoteGeocoder {
        self.pace = pace;
        self
    }

    fn wait_turn(&self) {
        let mut last = self.last_request.lock().unwrap();
        if let Some(t) = *last {
            let elapsed = t.elapsed();
            if elapsed < self.pace {
                std::thread::sleep(self.pace - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    /// Parse a reverse-lookup response body: `{"address": {"county": .., "state": ..}}`.
    pub fn parse_response(body: &Value) -> (Option<String>, Option<State>) {
        let addr = body.get("address");
        let field = |k: &str| addr.and_then(|a| a.get(k)).and_then(Value::as_str);
        let state = field("state").and_then(State::parse_loose);
        let county = field("county").map(str::to_string).filter(|_| state.is_some());
        (county, state)
    }

    pub fn reverse(&self, point: GeoPoint) -> Result<(Option<String>, Option<State>)> {
        let mut last_err = None;
        for _ in 0..=self.retries {
            self.wait_turn();
            let resp = ureq::get(&self.endpoint)
                .query("format", "jsonv2")
                .query("lat", &point.lat.to_string())
                .query("lon", &point.lon.to_string())
                .query("email", &self.contact)
                .set("User-Agent", &format!("geotweet ({})", self.contact))
                .call();
            let body = resp
                .map_err(|e| e.to_string())
                .and_then(|r| r.into_string().map_err(|e| e.to_string()))
                .and_then(|s| serde_json::from_str::<Value>(&s).map_err(|e| e.to_string()));
            match body {
                Ok(body) => return Ok(RemoteGeocoder::parse_response(&body)),
                Err(e) => last_err = Some(e),
            }
        }
        Err(Error::Geocoder(last_err.unwrap_or_default()))
    }
}

/// Cache first, then the remote geocoder (if configured) or the polygon index.
#[derive(Debug, Default)]
pub struct CountyResolver {
    index: Option<PolygonIndex>,
    remote: Option<RemoteGeocoder>,
    cache: RwLock<HashMap<CacheKey, CachedCounty>>,
    remote_failures: Mutex<u64>,
}

impl CountyResolver {
    pub fn offline(index: PolygonIndex) -> CountyResolver {
        CountyResolver { index: Some(index), ..Default::default() }
    }

    pub fn with_remote(index: Option<PolygonIndex>, remote: RemoteGeocoder) -> CountyResolver {
        CountyResolver { index, remote: Some(remote), ..Default::default() }
    }

    pub fn index(&self) -> Option<&PolygonIndex> {
        self.index.as_ref()
    }

    pub fn remote_failures(&self) -> u64 {
        *self.remote_failures.lock().unwrap()
    }

    fn polygon(&self, point: GeoPoint) -> CachedCounty {
        match self.index.as_ref().and_then(|i| i.lookup(point)) {
            Some(shape) if shape.state.is_some() => CachedCounty {
                county: Some(shape.county.clone()),
                state: shape.state,
            },
            _ => CachedCounty { county: None, state: None },
        }
    }

    pub fn resolve(&self, point: GeoPoint) -> CountyResolution {
        let key = CacheKey::of(point);
        if let Some(hit) = self.cache.read().unwrap().get(&key) {
            return CountyResolution {
                point,
                county: hit.county.clone(),
                state: hit.state,
                method: ResolutionMethod::Cache,
            };
        }
        let (found, method) = match &self.remote {
            Some(remote) => match remote.reverse(point) {
                Ok((county, state)) => (CachedCounty { county, state }, ResolutionMethod::RemoteGeocoder),
                Err(_) => {
                    *self.remote_failures.lock().unwrap() += 1;
                    (self.polygon(point), ResolutionMethod::PolygonLookup)
                }
            },
            None => (self.polygon(point), ResolutionMethod::PolygonLookup),
        };
        self.cache.write().unwrap().insert(key, found.clone());
        CountyResolution { point, county: found.county, state: found.state, method }
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// `lat_e4,lon_e4,county,state`, sorted by key.
    pub fn save_cache<W: Write>(&self, w: W) -> Result<()> {
        let cache = self.cache.read().unwrap();
        let mut keys: Vec<_> = cache.keys().copied().collect();
        keys.sort();
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["lat_e4", "lon_e4", "county", "state"])?;
        for k in keys {
            let v = &cache[&k];
            csv.write_record([
                k.0.to_string(),
                k.1.to_string(),
                v.county.clone().unwrap_or_default(),
                v.state.map(|s| s.abbr().to_string()).unwrap_or_default(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn load_cache<R: Read>(&self, r: R) -> Result<()> {
        let mut cache = self.cache.write().unwrap();
        for row in csv::Reader::from_reader(r).records() {
            let row = row?;
            let num = |i: usize| -> Result<i64> {
                row.get(i)
                    .unwrap_or_default()
                    .parse()
                    .map_err(|_| Error::InvalidInput("bad cache key".into()))
            };
            let county = row.get(2).filter(|s| !s.is_empty()).map(str::to_string);
            let state = row.get(3).and_then(State::parse_loose);
            cache.insert(CacheKey(num(0)?, num(1)?), CachedCounty { county, state });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CountyDensity {
    pub counts: BTreeMap<(State, String), u64>,
    pub unresolved: u64,
    pub gps_records: u64,
}

impl CountyDensity {
    pub fn resolved(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["state", "county", "count"])?;
        for ((state, county), n) in &self.counts {
            csv.write_record([state.abbr(), county.as_str(), &n.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Count exact-GPS records per (state, county).
pub fn county_density_table(records: &[TweetRecord], resolver: &CountyResolver) -> CountyDensity {
    let mut out = CountyDensity::default();
    for r in records.iter().filter(|r| r.geo.precision == GeoPrecision::ExactGps) {
        let Some(point) = r.geo.point else { continue };
        out.gps_records += 1;
        let res = resolver.resolve(point);
        match (res.county, res.state.or(r.state())) {
            (Some(county), Some(state)) => *out.counts.entry((state, county)).or_default() += 1,
            _ => out.unresolved += 1,
        }
    }
    out
}

pub fn write_gps_points<W: Write>(w: W, records: &[TweetRecord]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(["tweet_id", "lat", "lon", "state"])?;
    for r in records.iter().filter(|r| r.geo.precision == GeoPrecision::ExactGps) {
        if let Some(p) = r.geo.point {
            csv.write_record([
                r.tweet_id.clone(),
                format!("{:.6}", p.lat),
                format!("{:.6}", p.lon),
                r.state().map(|s| s.abbr().to_string()).unwrap_or_default(),
            ])?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{GeoTag, SourceCorpus};

    fn tweet(state: State, point: Option<GeoPoint>) -> TweetRecord {
        TweetRecord {
            tweet_id: "1".into(),
            user_id: "u".into(),
            created_at_utc: chrono::DateTime::from_timestamp(1_583_000_000, 0).unwrap(),
            text: String::new(),
            geo: GeoTag {
                country_code: Some("US".into()),
                state: Some(state),
                precision: if point.is_some() { GeoPrecision::ExactGps } else { GeoPrecision::BoundingPlace },
                point,
                ..Default::default()
            },
            is_retweet: false,
            source_corpus: SourceCorpus::Primary,
        }
    }

    #[test]
    fn shares() {
        assert!(state_share_table(&[]).is_err());
        let one = state_share_table(&[tweet(State::CA, None)]).unwrap();
        assert_eq!(one[&State::CA], 100.0);
        let mut recs = vec![tweet(State::CA, None); 3];
        recs.push(tweet(State::NY, None));
        let t = state_share_table(&recs).unwrap();
        assert_eq!((t[&State::CA], t[&State::NY]), (75.0, 25.0));
        recs.reverse();
        assert_eq!(state_share_table(&recs).unwrap(), t);
    }

    fn stats(tweets: u64, pop: u64, cases: u64, deaths: u64) -> StateStats {
        StateStats { state: State::WA, population: pop, cum_cases: cases, cum_deaths: deaths, tweet_count: tweets }
    }

    #[test]
    fn normalization() {
        let t = normalize(&[stats(2000, 4_000_000, 1, 0)], Basis::Per1000Residents).unwrap();
        assert_eq!(t.rates[&State::WA], 0.5);
        let t = normalize(&[stats(500, 1, 100, 0)], Basis::PerCase).unwrap();
        assert_eq!(t.rates[&State::WA], 5.0);
        assert!(normalize(&[stats(500, 1, 100, 0)], Basis::PerDeath).is_err());
        let mut ny = stats(10, 1, 10, 2);
        ny.state = State::NY;
        let t = normalize(&[stats(500, 1, 100, 0), ny], Basis::PerDeath).unwrap();
        assert_eq!(t.excluded, vec![State::WA]);
        assert_eq!(t.rates[&State::NY], 5.0);
    }

    #[test]
    fn case_snapshot() {
        let csv = "date,state,fips,cases,deaths\n2020-03-01,Washington,53,10,1\n2020-03-03,Washington,53,30,2\n2020-03-01,Guam,66,1,0\n";
        let s = CaseSeries::from_csv(csv.as_bytes()).unwrap();
        let d = |day| NaiveDate::from_ymd_opt(2020, 3, day).unwrap();
        assert_eq!(s.snapshot(State::WA, d(2)).unwrap().cases, 10);
        assert_eq!(s.snapshot(State::WA, d(9)).unwrap().cases, 30);
        assert!(s.snapshot(State::WA, NaiveDate::from_ymd_opt(2020, 2, 1).unwrap()).is_none());
        assert_eq!(s.by_state.len(), 1);
    }

    fn square(x0: f64, y0: f64, side: f64) -> Ring {
        vec![(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side), (x0, y0)]
    }

    #[test]
    fn ring_edges_count_as_inside() {
        let sq = square(0.0, 0.0, 2.0);
        assert_eq!(ring_side((1.0, 1.0), &sq), RingSide::Inside);
        assert_eq!(ring_side((2.0, 1.0), &sq), RingSide::OnEdge);
        assert_eq!(ring_side((0.0, 0.0), &sq), RingSide::OnEdge);
        assert_eq!(ring_side((3.0, 1.0), &sq), RingSide::Outside);
        let donut = Polygon { outer: square(0.0, 0.0, 4.0), holes: vec![square(1.0, 1.0, 2.0)] };
        assert!(!donut.contains((2.0, 2.0)));
        assert!(donut.contains((1.0, 2.0)));
        assert!(donut.contains((0.5, 0.5)));
    }

    const FIXTURE: &str = r#"{"type":"FeatureCollection","features":[
        {"type":"Feature","properties":{"county":"Test County","state":"CO"},
         "geometry":{"type":"Polygon","coordinates":[[[-105,39],[-104,39],[-104,40],[-105,40],[-105,39]]]}},
        {"type":"Feature","properties":{"NAME":"Split","STATE_NAME":"Texas"},
         "geometry":{"type":"MultiPolygon","coordinates":[[[[-100,30],[-99,30],[-99,31],[-100,30]]],[[[-98,30],[-97,30],[-97,31],[-98,30]]]]}}
    ]}"#;

    #[test]
    fn geojson_lookup_and_cache() {
        let index = PolygonIndex::from_geojson(FIXTURE).unwrap();
        assert_eq!(index.shapes().len(), 2);
        let resolver = CountyResolver::offline(index);
        let p = GeoPoint::new(39.5, -104.5).unwrap();
        let first = resolver.resolve(p);
        assert_eq!(first.county.as_deref(), Some("Test County"));
        assert_eq!(first.state, Some(State::CO));
        assert_eq!(first.method, ResolutionMethod::PolygonLookup);
        let second = resolver.resolve(p);
        assert_eq!(second.method, ResolutionMethod::Cache);
        assert_eq!(second.county, first.county);

        let nowhere = resolver.resolve(GeoPoint::new(0.0, 0.0).unwrap());
        assert_eq!(nowhere.county, None);

        let tx = resolver.resolve(GeoPoint::new(30.2, -97.5).unwrap());
        assert_eq!((tx.county.as_deref(), tx.state), (Some("Split"), Some(State::TX)));

        let mut buf = Vec::new();
        resolver.save_cache(&mut buf).unwrap();
        let reloaded = CountyResolver::default();
        reloaded.load_cache(buf.as_slice()).unwrap();
        let hit = reloaded.resolve(p);
        assert_eq!((hit.method, hit.county.as_deref()), (ResolutionMethod::Cache, Some("Test County")));
    }

    #[test]
    fn density_conservation() {
        let index = PolygonIndex::from_geojson(FIXTURE).unwrap();
        let resolver = CountyResolver::offline(index);
        assert_eq!(county_density_table(&[], &resolver), CountyDensity::default());
        let inside = GeoPoint::new(39.2, -104.2);
        let recs = vec![
            tweet(State::CO, inside),
            tweet(State::CO, GeoPoint::new(39.3, -104.3)),
            tweet(State::CO, GeoPoint::new(39.4, -104.4)),
            tweet(State::CO, GeoPoint::new(10.0, 10.0)),
            tweet(State::CO, None),
        ];
        let d = county_density_table(&recs, &resolver);
        assert_eq!(d.counts[&(State::CO, "Test County".to_string())], 3);
        assert_eq!(d.unresolved, 1);
        assert_eq!(d.gps_records, 4);
        assert_eq!(d.resolved() + d.unresolved, d.gps_records);
    }

    #[test]
    fn remote_response_parsing() {
        let body: Value = serde_json::from_str(
            r#"{"address":{"county":"Denver County","state":"Colorado","country_code":"us"}}"#,
        )
        .unwrap();
        assert_eq!(
            RemoteGeocoder::parse_response(&body),
            (Some("Denver County".into()), Some(State::CO))
        );
        let foreign: Value = serde_json::from_str(r#"{"address":{"county":"Kent","state":"England"}}"#).unwrap();
        assert_eq!(RemoteGeocoder::parse_response(&foreign), (None, None));
    }

    #[test]
    fn unreachable_remote_falls_back_to_polygons() {
        let index = PolygonIndex::from_geojson(FIXTURE).unwrap();
        let remote = RemoteGeocoder::new("http://127.0.0.1:9/reverse", "test@example.org").with_pace(Duration::ZERO);
        let resolver = CountyResolver::with_remote(Some(index), remote);
        let r = resolver.resolve(GeoPoint::new(39.5, -104.5).unwrap());
        assert_eq!(r.method, ResolutionMethod::PolygonLookup);
        assert_eq!(r.county.as_deref(), Some("Test County"));
        assert_eq!(resolver.remote_failures(), 1);
    }
}
