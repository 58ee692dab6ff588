//! Python bindings: run the pipeline and call the core kernels from Python.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use geotweet::config::RunConfig;
use geotweet::content::coherence::{coherence_cv, CoherenceParams};
use geotweet::content::lda::{train_lda, LdaConfig};
use geotweet::content::{Corpus, Preprocessor};
use geotweet::engagement::{daily_engagement, hourly_engagement, mean_std};
use geotweet::pipeline::{self, Subcommand};
use geotweet::sentiment::{classify_emojis, score_text, Category, EmojiCategoryTable, SentimentLexicon};
use geotweet::stats;
use geotweet::synth::{generate, write_bundle, SynthSpec};
use geotweet::temporal::HourWeekMatrix;

fn py_err(e: geotweet::Error) -> PyErr {
    match e {
        geotweet::Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Run configuration. Build one from TOML or from scratch and call `run`.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: RunConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (inputs, out_dir, seed=None))]
    fn new(inputs: Vec<PathBuf>, out_dir: PathBuf, seed: Option<u64>) -> Self {
        let mut inner = RunConfig { inputs, out_dir, ..Default::default() };
        if let Some(s) = seed {
            inner.seed = s;
        }
        PyRunConfig { inner }
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        RunConfig::from_toml(text).map(|inner| PyRunConfig { inner }).map_err(py_err)
    }

    /// Relative paths in the file resolve against its directory.
    #[staticmethod]
    fn from_path(path: PathBuf) -> PyResult<Self> {
        RunConfig::from_path(&path).map(|inner| PyRunConfig { inner }).map_err(py_err)
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.inner.seed = seed;
    }

    #[getter]
    fn out_dir(&self) -> PathBuf {
        self.inner.out_dir.clone()
    }

    #[setter]
    fn set_out_dir(&mut self, dir: PathBuf) {
        self.inner.out_dir = dir;
    }

    #[getter]
    fn inputs(&self) -> Vec<PathBuf> {
        self.inner.inputs.clone()
    }

    /// Override topic selection, mainly to keep small runs fast.
    #[pyo3(signature = (candidates, repeats, passes))]
    fn set_topic_search(&mut self, candidates: Vec<usize>, repeats: usize, passes: usize) {
        let t = &mut self.inner.topics;
        t.candidates = candidates;
        t.repeats = repeats;
        t.passes = passes;
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// Run a subcommand (`ingest`, ..., `all`) and return the summary.
    fn run(&self, py: Python<'_>, subcommand: &str) -> PyResult<PyRunSummary> {
        let sub: Subcommand = subcommand.parse().map_err(py_err)?;
        let cfg = self.inner.clone();
        let summary = py.detach(move || pipeline::run(sub, &cfg)).map_err(py_err)?;
        Ok(PyRunSummary {
            artifacts: summary.artifacts.into_iter().map(|(k, v)| (k, v.sha256)).collect(),
            counters: serde_json::to_string(&summary.counters).unwrap_or_default(),
            reconciles: summary.counters.reconciles(),
            skipped_stages: summary.skipped_stages,
            notices: summary.notices,
            manifest: summary.manifest,
        })
    }
}

#[pyclass(name = "RunSummary", get_all, skip_from_py_object)]
struct PyRunSummary {
    /// Artifact path relative to the output directory mapped to its SHA-256.
    artifacts: BTreeMap<String, String>,
    /// Ingest counters as JSON.
    counters: String,
    reconciles: bool,
    skipped_stages: Vec<String>,
    notices: Vec<String>,
    manifest: PathBuf,
}

type IndexRow = (Vec<Option<f64>>, Option<f64>, Option<f64>);

fn matrix_from(counts: Vec<Vec<u64>>) -> PyResult<HourWeekMatrix> {
    if counts.len() != 7 || counts.iter().any(|r| r.len() != 24) {
        return Err(PyValueError::new_err("expected 7 rows (Mon..Sun) of 24 hourly counts"));
    }
    let mut m = [[0u64; 24]; 7];
    for (dst, src) in m.iter_mut().zip(&counts) {
        dst.copy_from_slice(src);
    }
    Ok(HourWeekMatrix::from_counts(m))
}

/// H(i) for business hours 8..=16 plus mean and std; `None` marks undefined cells.
#[pyfunction]
fn hourly_index(counts: Vec<Vec<u64>>) -> PyResult<IndexRow> {
    let m = matrix_from(counts)?;
    let vals: Vec<_> = (8..=16).map(|h| hourly_engagement(&m, h)).collect();
    let (mean, std) = mean_std(&vals);
    Ok((vals, mean, std))
}

/// D(j) for Monday..Friday plus mean and std.
#[pyfunction]
fn daily_index(counts: Vec<Vec<u64>>) -> PyResult<IndexRow> {
    let m = matrix_from(counts)?;
    let vals: Vec<_> = (1..=5).map(|d| daily_engagement(&m, d)).collect();
    let (mean, std) = mean_std(&vals);
    Ok((vals, mean, std))
}

/// Pearson r and two-sided p-value (`None` below three points).
#[pyfunction]
fn pearson(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, Option<f64>)> {
    let r = stats::pearson(&x, &y).map_err(py_err)?;
    Ok((r.r, r.p_value))
}

/// One-way MANOVA; each group is a list of observation vectors.
/// Returns (wilks_lambda, approx_f, df1, df2, p_value).
#[pyfunction]
fn manova(groups: Vec<Vec<Vec<f64>>>) -> PyResult<(f64, f64, f64, f64, f64)> {
    let m = stats::manova_one_way(&groups).map_err(py_err)?;
    Ok((m.wilks_lambda, m.approx_f, m.df1, m.df2, m.p_value))
}

/// Emoji occurrences per sentiment category with the bundled table.
#[pyfunction]
fn classify_emoji(text: &str) -> BTreeMap<&'static str, u64> {
    let counts = classify_emojis(text, &EmojiCategoryTable::default_table());
    Category::ALL.iter().map(|c| (c.as_str(), counts.get(*c))).collect()
}

/// (polarity, subjectivity, matched words) with the bundled lexicon.
#[pyfunction]
fn sentiment_score(text: &str) -> (f64, f64, usize) {
    let s = score_text(text, &SentimentLexicon::default_english());
    (s.polarity, s.subjectivity, s.matched)
}

/// Fit LDA on raw texts; returns the top words per topic and the mean coherence.
#[pyfunction]
#[pyo3(signature = (texts, k, seed=2020, passes=500, top_n=10))]
fn fit_topics(
    py: Python<'_>,
    texts: Vec<String>,
    k: usize,
    seed: u64,
    passes: usize,
    top_n: usize,
) -> PyResult<(Vec<Vec<String>>, f64)> {
    py.detach(move || {
        let ids: Vec<String> = (0..texts.len()).map(|i| i.to_string()).collect();
        let corpus =
            Corpus::from_texts(ids.iter().map(String::as_str).zip(texts.iter().map(String::as_str)), &Preprocessor::default());
        let model = train_lda(&corpus, &LdaConfig { passes, ..LdaConfig::new(k, seed) }).map_err(py_err)?;
        let coherence = coherence_cv(&model, &corpus, &CoherenceParams { top_n, ..Default::default() });
        let words = model
            .all_top_words(top_n)
            .into_iter()
            .map(|t| t.into_iter().map(|w| corpus.vocabulary[w].clone()).collect())
            .collect();
        Ok((words, coherence.mean))
    })
}

/// Write the synthetic two-state corpus and its resource files into `dir`.
/// Returns the file paths by role.
#[pyfunction]
#[pyo3(signature = (dir, tweets=5000, compensation=300, seed=7))]
fn write_synthetic(dir: PathBuf, tweets: usize, compensation: usize, seed: u64) -> PyResult<BTreeMap<&'static str, PathBuf>> {
    let corpus = generate(&SynthSpec { tweets, compensation, seed });
    let p = write_bundle(&dir, &corpus).map_err(py_err)?;
    Ok(BTreeMap::from([
        ("primary", p.primary),
        ("compensation", p.compensation),
        ("calendar", p.calendar),
        ("population", p.population),
        ("cases", p.cases),
        ("counties", p.counties),
    ]))
}

#[pymodule]
pub fn geotweet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<PyRunSummary>()?;
    m.add_function(wrap_pyfunction!(hourly_index, m)?)?;
    m.add_function(wrap_pyfunction!(daily_index, m)?)?;
    m.add_function(wrap_pyfunction!(pearson, m)?)?;
    m.add_function(wrap_pyfunction!(manova, m)?)?;
    m.add_function(wrap_pyfunction!(classify_emoji, m)?)?;
    m.add_function(wrap_pyfunction!(sentiment_score, m)?)?;
    m.add_function(wrap_pyfunction!(fit_topics, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic, m)?)?;
    Ok(())
}
