//! Pearson correlation with t-test p-values and one-way MANOVA (Wilks' lambda).

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::states::State;

const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + 7.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

const CF_EPS: f64 = 1e-12;
const CF_TINY: f64 = 1e-300;
const CF_MAX_ITER: usize = 10_000;

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    assert!(a > 0.0 && b > 0.0, "beta parameters must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Two-sided p-value of Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Upper tail `P(F > f)` of the F distribution.
pub fn f_survival(f: f64, df1: f64, df2: f64) -> f64 {
    if f <= 0.0 {
        return 1.0;
    }
    regularized_incomplete_beta(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub n: usize,
    /// Absent below three observations.
    pub p_value: Option<f64>,
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!("series lengths differ: {} vs {}", x.len(), y.len())));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Precondition("need at least two observations".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ConstantSeries);
    }
    let denom = match (sxx * syy).sqrt() {
        d if d.is_finite() && d > 0.0 => d,
        _ => sxx.sqrt() * syy.sqrt(),
    };
    let r = (sxy / denom).clamp(-1.0, 1.0);
    let p_value = (n >= 3).then(|| {
        let df = (n - 2) as f64;
        if r.abs() >= 1.0 {
            0.0
        } else {
            student_t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df)
        }
    });
    Ok(CorrelationResult { r, n, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairResult {
    pub a: State,
    pub b: State,
    /// `None` when either series is constant.
    pub result: Option<CorrelationResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairwiseReport {
    pub pairs: Vec<PairResult>,
    /// Qualifying pairs over all unordered pairs (excluded pairs count as non-qualifying).
    pub qualifying_fraction: f64,
    pub qualifying: usize,
    pub excluded: usize,
}

impl PairwiseReport {
    /// Symmetric matrix as CSV: `state,<states...>` with `1` on the diagonal.
    pub fn write_matrix_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut states: Vec<State> = self.pairs.iter().flat_map(|p| [p.a, p.b]).collect();
        states.sort();
        states.dedup();
        let mut lookup = BTreeMap::new();
        for p in &self.pairs {
            let r = p.result.map(|c| c.r);
            lookup.insert((p.a, p.b), r);
            lookup.insert((p.b, p.a), r);
        }
        let mut csv = csv::Writer::from_writer(w);
        let mut header = vec!["state".to_string()];
        header.extend(states.iter().map(|s| s.abbr().to_string()));
        csv.write_record(&header)?;
        for a in &states {
            let mut row = vec![a.abbr().to_string()];
            for b in &states {
                let cell = if a == b { Some(1.0) } else { lookup.get(&(*a, *b)).copied().flatten() };
                row.push(cell.map(|r| format!("{r:.6}")).unwrap_or_default());
            }
            csv.write_record(&row)?;
        }
        csv.flush()?;
        Ok(())
    }
}

/// Correlate every unordered pair of state series; a pair qualifies when
/// `r > r_threshold` and `p < p_threshold`.
pub fn pairwise_state_correlations(
    series: &BTreeMap<State, Vec<f64>>,
    r_threshold: f64,
    p_threshold: f64,
) -> Result<PairwiseReport> {
    if series.len() < 2 {
        return Err(Error::Precondition("need at least two states".into()));
    }
    let states: Vec<&State> = series.keys().collect();
    let mut pairs = Vec::new();
    let (mut qualifying, mut excluded) = (0, 0);
    for (i, a) in states.iter().enumerate() {
        for b in &states[i + 1..] {
            let result = match pearson(&series[*a], &series[*b]) {
                Ok(r) => Some(r),
                Err(Error::ConstantSeries) => {
                    excluded += 1;
                    None
                }
                Err(e) => return Err(e),
            };
            if let Some(c) = result {
                if c.r > r_threshold && c.p_value.is_some_and(|p| p < p_threshold) {
                    qualifying += 1;
                }
            }
            pairs.push(PairResult { a: **a, b: **b, result });
        }
    }
    let total = pairs.len();
    Ok(PairwiseReport {
        pairs,
        qualifying_fraction: qualifying as f64 / total as f64,
        qualifying,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ManovaResult {
    pub wilks_lambda: f64,
    pub approx_f: f64,
    pub df1: f64,
    pub df2: f64,
    pub p_value: f64,
    pub groups: usize,
    pub observations: usize,
    pub dims: usize,
}

/// Within-group and between-group scatter matrices.
pub fn scatter_matrices(groups: &[Vec<Vec<f64>>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = groups.iter().flat_map(|g| g.first()).map(Vec::len).next().unwrap_or(0);
    let n: usize = groups.iter().map(Vec::len).sum();
    let mut grand = vec![0.0; k];
    for obs in groups.iter().flatten() {
        for (g, v) in grand.iter_mut().zip(obs) {
            *g += v / n as f64;
        }
    }
    let mut within = DMatrix::zeros(k, k);
    let mut between = DMatrix::zeros(k, k);
    for g in groups {
        let m = g.len() as f64;
        let mean: Vec<f64> = (0..k).map(|d| g.iter().map(|o| o[d]).sum::<f64>() / m).collect();
        for obs in g {
            for i in 0..k {
                for j in 0..k {
                    within[(i, j)] += (obs[i] - mean[i]) * (obs[j] - mean[j]);
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                between[(i, j)] += m * (mean[i] - grand[i]) * (mean[j] - grand[j]);
            }
        }
    }
    (within, between)
}

/// `det(W) / det(W + B)`.
pub fn wilks_lambda(groups: &[Vec<Vec<f64>>]) -> Result<f64> {
    let (w, b) = scatter_matrices(groups);
    let det_w = w.determinant();
    let diag: f64 = w.diagonal().iter().product();
    if !(diag > 0.0) || det_w / diag < 1e-12 {
        return Err(Error::DegenerateCovariance);
    }
    let det_t = (&w + &b).determinant();
    Ok((det_w / det_t).clamp(0.0, 1.0))
}

/// One-way MANOVA with Rao's F approximation of Wilks' lambda.
pub fn manova_one_way(groups: &[Vec<Vec<f64>>]) -> Result<ManovaResult> {
    let g = groups.len();
    if g < 2 {
        return Err(Error::Precondition("need at least two groups".into()));
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::Precondition("empty group".into()));
    }
    let p = groups[0][0].len();
    if groups.iter().flatten().any(|o| o.len() != p) {
        return Err(Error::Precondition("observations differ in dimension".into()));
    }
    if p < 2 {
        return Err(Error::Precondition("observation dimension must be at least 2".into()));
    }
    let n: usize = groups.iter().map(Vec::len).sum();
    if n <= g + p {
        return Err(Error::Precondition(format!(
            "{n} observations are too few for {g} groups in {p} dimensions"
        )));
    }
    let lambda = wilks_lambda(groups)?;

    let (pf, q) = (p as f64, (g - 1) as f64);
    let s = {
        let denom = pf * pf + q * q - 5.0;
        if denom > 0.0 {
            ((pf * pf * q * q - 4.0) / denom).sqrt()
        } else {
            1.0
        }
    };
    let w = n as f64 - 1.0 - (pf + g as f64) / 2.0;
    let df1 = pf * q;
    let df2 = w * s - (pf * q - 2.0) / 2.0;
    let root = lambda.powf(1.0 / s);
    let approx_f = if root > 0.0 { ((1.0 - root) / root) * (df2 / df1) } else { f64::INFINITY };
    let p_value = if approx_f.is_finite() { f_survival(approx_f, df1, df2) } else { 0.0 };
    Ok(ManovaResult {
        wilks_lambda: lambda,
        approx_f: approx_f.max(0.0),
        df1,
        df2,
        p_value,
        groups: g,
        observations: n,
        dims: p,
    })
}
