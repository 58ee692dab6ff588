//! Latent Dirichlet allocation by collapsed Gibbs sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{tfidf, Corpus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Raw tokens.
    Bow,
    /// Each distinct term repeated `max(1, round(10 * tfidf))` times.
    TfidfScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub k: usize,
    /// Symmetric document-topic prior; `50 / k` when absent.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub passes: usize,
    pub seed: u64,
    /// Independent random stream for this chain.
    pub stream: u64,
    pub weighting: Weighting,
}

impl LdaConfig {
    pub fn new(k: usize, seed: u64) -> LdaConfig {
        LdaConfig {
            k,
            alpha: None,
            beta: 0.01,
            passes: 500,
            seed,
            stream: 0,
            weighting: Weighting::TfidfScaled,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }
}

/// Token sequences fed to the sampler under `weighting`.
pub fn sampler_tokens(corpus: &Corpus, weighting: Weighting) -> Result<Vec<Vec<usize>>> {
    match weighting {
        Weighting::Bow => Ok(corpus.documents.clone()),
        Weighting::TfidfScaled => Ok(tfidf(corpus)?
            .into_iter()
            .map(|doc| {
                doc.into_iter()
                    .flat_map(|(w, weight)| {
                        let reps = ((weight * 10.0).round() as usize).max(1);
                        std::iter::repeat_n(w, reps)
                    })
                    .collect()
            })
            .collect()),
    }
}

/// Sampler state. Count matrices are flat: `word_topic[w * k + t]`,
/// `doc_topic[d * k + t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicModel {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub vocab_size: usize,
    pub tokens: Vec<Vec<usize>>,
    pub assignments: Vec<Vec<u32>>,
    word_topic: Vec<u32>,
    doc_topic: Vec<u32>,
    topic_totals: Vec<u64>,
}

impl TopicModel {
    fn init(tokens: Vec<Vec<usize>>, vocab_size: usize, cfg: &LdaConfig, rng: &mut ChaCha8Rng) -> TopicModel {
        let k = cfg.k;
        let mut m = TopicModel {
            k,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            vocab_size,
            assignments: Vec::with_capacity(tokens.len()),
            word_topic: vec![0; vocab_size * k],
            doc_topic: vec![0; tokens.len() * k],
            topic_totals: vec![0; k],
            tokens: Vec::new(),
        };
        for (d, doc) in tokens.iter().enumerate() {
            let z: Vec<u32> = doc.iter().map(|_| rng.gen_range(0..k as u32)).collect();
            for (&w, &t) in doc.iter().zip(&z) {
                m.word_topic[w * k + t as usize] += 1;
                m.doc_topic[d * k + t as usize] += 1;
                m.topic_totals[t as usize] += 1;
            }
            m.assignments.push(z);
        }
        m.tokens = tokens;
        m
    }

    fn sweep(&mut self, rng: &mut ChaCha8Rng, probs: &mut [f64]) {
        let k = self.k;
        let vbeta = self.vocab_size as f64 * self.beta;
        for d in 0..self.tokens.len() {
            for i in 0..self.tokens[d].len() {
                let w = self.tokens[d][i];
                let old = self.assignments[d][i] as usize;
                self.word_topic[w * k + old] -= 1;
                self.doc_topic[d * k + old] -= 1;
                self.topic_totals[old] -= 1;

                let wt = &self.word_topic[w * k..(w + 1) * k];
                let dt = &self.doc_topic[d * k..(d + 1) * k];
                let mut acc = 0.0;
                for t in 0..k {
                    acc += (dt[t] as f64 + self.alpha) * (wt[t] as f64 + self.beta)
                        / (self.topic_totals[t] as f64 + vbeta);
                    probs[t] = acc;
                }
                let u = rng.gen::<f64>() * acc;
                let new = probs.iter().position(|&c| u < c).unwrap_or(k - 1);

                self.word_topic[w * k + new] += 1;
                self.doc_topic[d * k + new] += 1;
                self.topic_totals[new] += 1;
                self.assignments[d][i] = new as u32;
            }
        }
    }

    pub fn num_docs(&self) -> usize {
        self.tokens.len()
    }

    pub fn word_topic_count(&self, w: usize, t: usize) -> u32 {
        self.word_topic[w * self.k + t]
    }

    pub fn doc_topic_count(&self, d: usize, t: usize) -> u32 {
        self.doc_topic[d * self.k + t]
    }

    pub fn topic_total(&self, t: usize) -> u64 {
        self.topic_totals[t]
    }

    /// Rebuild every count from the assignments and compare with the
    /// incrementally maintained ones.
    pub fn verify_bookkeeping(&self) -> bool {
        let k = self.k;
        let mut wt = vec![0u32; self.vocab_size * k];
        let mut dt = vec![0u32; self.tokens.len() * k];
        let mut tt = vec![0u64; k];
        for (d, (doc, z)) in self.tokens.iter().zip(&self.assignments).enumerate() {
            for (&w, &t) in doc.iter().zip(z) {
                wt[w * k + t as usize] += 1;
                dt[d * k + t as usize] += 1;
                tt[t as usize] += 1;
            }
        }
        wt == self.word_topic && dt == self.doc_topic && tt == self.topic_totals
    }

    /// Rows are topics; each row is the topic's word counts normalized to
    /// sum to one (uniform for an empty topic).
    pub fn topic_word_distribution(&self) -> Vec<Vec<f64>> {
        (0..self.k)
            .map(|t| {
                let total = self.topic_totals[t];
                (0..self.vocab_size)
                    .map(|w| {
                        if total == 0 {
                            1.0 / self.vocab_size as f64
                        } else {
                            self.word_topic_count(w, t) as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Posterior mean of each document's topic proportions.
    pub fn doc_topic_distribution(&self) -> Vec<Vec<f64>> {
        (0..self.tokens.len())
            .map(|d| {
                let len = self.tokens[d].len() as f64;
                let denom = len + self.k as f64 * self.alpha;
                (0..self.k)
                    .map(|t| (self.doc_topic_count(d, t) as f64 + self.alpha) / denom)
                    .collect()
            })
            .collect()
    }

    /// The `n` most frequent words of topic `t`, ties by lower index.
    pub fn top_words(&self, t: usize, n: usize) -> Vec<usize> {
        let mut words: Vec<usize> = (0..self.vocab_size).collect();
        words.sort_by(|&a, &b| {
            self.word_topic_count(b, t)
                .cmp(&self.word_topic_count(a, t))
                .then(a.cmp(&b))
        });
        words.truncate(n);
        words
    }

    pub fn all_top_words(&self, n: usize) -> Vec<Vec<usize>> {
        (0..self.k).map(|t| self.top_words(t, n)).collect()
    }
}

/// Train one chain, calling `observer(sweep, model)` after every sweep
/// (sweeps counted from 1).
pub fn train_lda_observed(
    corpus: &Corpus,
    cfg: &LdaConfig,
    mut observer: impl FnMut(usize, &TopicModel),
) -> Result<TopicModel> {
    if cfg.k == 0 {
        return Err(Error::Precondition("topic count must be positive".into()));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(cfg.beta > 0.0) || !(cfg.alpha() > 0.0) {
        return Err(Error::Precondition("priors must be positive".into()));
    }
    let tokens = sampler_tokens(corpus, cfg.weighting)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(cfg.stream);
    let mut model = TopicModel::init(tokens, corpus.vocab_size(), cfg, &mut rng);
    let mut probs = vec![0.0; cfg.k];
    for sweep in 1..=cfg.passes {
        model.sweep(&mut rng, &mut probs);
        observer(sweep, &model);
    }
    Ok(model)
}

pub fn train_lda(corpus: &Corpus, cfg: &LdaConfig) -> Result<TopicModel> {
    train_lda_observed(corpus, cfg, |_, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planted(docs: usize, len: usize, seed: u64) -> Corpus {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Corpus::from_tokens(
            (0..docs)
                .map(|d| {
                    let block = if d % 2 == 0 { "a" } else { "b" };
                    let toks = (0..len).map(|_| format!("{block}{:02}", rng.gen_range(0..20))).collect();
                    (d.to_string(), toks)
                })
                .collect(),
        )
    }

    #[test]
    fn deterministic_for_seed() {
        let c = planted(40, 10, 1);
        let cfg = LdaConfig { passes: 20, ..LdaConfig::new(3, 42) };
        let a = train_lda(&c, &cfg).unwrap();
        let b = train_lda(&c, &cfg).unwrap();
        assert_eq!(a.assignments, b.assignments);
        let other = train_lda(&c, &LdaConfig { stream: 1, ..cfg }).unwrap();
        assert_ne!(a.assignments, other.assignments);
    }

    #[test]
    fn single_topic_is_unigram() {
        let c = planted(30, 8, 2);
        let cfg = LdaConfig { passes: 3, weighting: Weighting::Bow, ..LdaConfig::new(1, 0) };
        let m = train_lda(&c, &cfg).unwrap();
        let mut counts = vec![0.0; c.vocab_size()];
        for w in c.documents.iter().flatten() {
            counts[*w] += 1.0;
        }
        let total = c.token_count() as f64;
        let dist = &m.topic_word_distribution()[0];
        for (p, n) in dist.iter().zip(&counts) {
            assert_eq!(*p, n / total);
        }
    }

    #[test]
    fn distributions_are_normalized() {
        let c = planted(20, 6, 3);
        let m = train_lda(&c, &LdaConfig { passes: 5, ..LdaConfig::new(4, 9) }).unwrap();
        for row in m.topic_word_distribution().iter().chain(&m.doc_topic_distribution()) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn bookkeeping_holds_every_sweep() {
        let c = planted(20, 6, 4);
        let mut checked = 0;
        train_lda_observed(&c, &LdaConfig { passes: 10, ..LdaConfig::new(3, 5) }, |_, m| {
            assert!(m.verify_bookkeeping());
            checked += 1;
        })
        .unwrap();
        assert_eq!(checked, 10);
    }

    #[test]
    fn scaled_tfidf_multiplicities() {
        let c = Corpus::from_tokens(vec![
            ("0".into(), vec!["x".into(), "y".into()]),
            ("1".into(), vec!["x".into()]),
        ]);
        let toks = sampler_tokens(&c, Weighting::TfidfScaled).unwrap();
        let (x, y) = (c.word_index("x").unwrap(), c.word_index("y").unwrap());
        // x is everywhere (weight 0, kept once); y weighs ln 2 -> round(6.93) = 7
        assert_eq!(toks[0].iter().filter(|w| **w == x).count(), 1);
        assert_eq!(toks[0].iter().filter(|w| **w == y).count(), 7);
        assert_eq!(toks[1], vec![x]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = planted(4, 3, 5);
        assert!(train_lda(&c, &LdaConfig::new(0, 1)).is_err());
        let empty = Corpus::from_tokens(vec![]);
        assert!(train_lda(&empty, &LdaConfig::new(2, 1)).is_err());
    }
}
