//! Sliding-window NPMI / cosine topic coherence and topic-count selection.

use rayon::prelude::*;
use serde::Serialize;

use super::lda::{train_lda, LdaConfig};
use super::Corpus;
use crate::error::{Error, Result};

pub const NPMI_EPSILON: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CoherenceParams {
    pub top_n: usize,
    pub window: usize,
}

impl Default for CoherenceParams {
    fn default() -> Self {
        CoherenceParams { top_n: 10, window: 110 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub per_topic: Vec<f64>,
    pub mean: f64,
    /// Top words that never occur in the reference corpus.
    pub missing_words: usize,
    pub windows: u64,
}

/// Occurrence and co-occurrence counts of a fixed word set over boolean windows.
struct WindowCounts {
    slot: Vec<Option<usize>>,
    single: Vec<u64>,
    pair: Vec<u64>,
    width: usize,
    windows: u64,
}

impl WindowCounts {
    fn collect(words: &[usize], docs: &[Vec<usize>], vocab_size: usize, window: usize) -> WindowCounts {
        let mut slot = vec![None; vocab_size];
        let mut width = 0;
        for &w in words {
            if w < vocab_size && slot[w].is_none() {
                slot[w] = Some(width);
                width += 1;
            }
        }
        let mut c = WindowCounts { slot, single: vec![0; width], pair: vec![0; width * width], width, windows: 0 };
        let mut present = vec![false; width];
        let mut hits = Vec::new();
        for doc in docs {
            let size = window.max(1).min(doc.len().max(1));
            let starts = if doc.len() <= size { 1 } else { doc.len() - size + 1 };
            for s in 0..starts {
                hits.clear();
                for &w in &doc[s..(s + size).min(doc.len())] {
                    if let Some(i) = c.slot.get(w).copied().flatten() {
                        if !present[i] {
                            present[i] = true;
                            hits.push(i);
                        }
                    }
                }
                c.windows += 1;
                for &a in &hits {
                    c.single[a] += 1;
                    for &b in &hits {
                        c.pair[a * width + b] += 1;
                    }
                }
                for &a in &hits {
                    present[a] = false;
                }
            }
        }
        c
    }

    fn count(&self, w: usize) -> u64 {
        self.slot.get(w).copied().flatten().map_or(0, |i| self.single[i])
    }

    fn npmi(&self, a: usize, b: usize) -> f64 {
        let (Some(Some(i)), Some(Some(j))) = (self.slot.get(a).copied(), self.slot.get(b).copied()) else {
            return 0.0;
        };
        let (ci, cj) = (self.single[i], self.single[j]);
        if ci == 0 || cj == 0 || self.windows == 0 {
            return 0.0;
        }
        let n = self.windows as f64;
        let (pi, pj) = (ci as f64 / n, cj as f64 / n);
        let pij = self.pair[i * self.width + j] as f64 / n + NPMI_EPSILON;
        ((pij / (pi * pj)).ln() / -pij.ln()).clamp(-1.0, 1.0)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Score word lists against `docs`. Each word gets a vector of NPMI values
/// against every word of its topic; the word's score is the cosine between
/// that vector and the topic's summed vector. Topic score is the mean over
/// words, and the report mean is over topics.
pub fn coherence_of_topics(
    topics: &[Vec<usize>],
    docs: &[Vec<usize>],
    vocab_size: usize,
    window: usize,
) -> CoherenceReport {
    let all: Vec<usize> = topics.iter().flatten().copied().collect();
    let counts = WindowCounts::collect(&all, docs, vocab_size, window);
    let missing_words = all.iter().filter(|&&w| counts.count(w) == 0).count();
    let per_topic: Vec<f64> = topics
        .iter()
        .map(|words| {
            if words.is_empty() {
                return 0.0;
            }
            let vectors: Vec<Vec<f64>> = words
                .iter()
                .map(|&a| words.iter().map(|&b| counts.npmi(a, b)).collect())
                .collect();
            let mut total = vec![0.0; words.len()];
            for v in &vectors {
                for (t, x) in total.iter_mut().zip(v) {
                    *t += x;
                }
            }
            vectors.iter().map(|v| cosine(v, &total)).sum::<f64>() / words.len() as f64
        })
        .collect();
    let mean = if per_topic.is_empty() { 0.0 } else { per_topic.iter().sum::<f64>() / per_topic.len() as f64 };
    CoherenceReport { per_topic, mean, missing_words, windows: counts.windows }
}

pub fn coherence_cv(model: &super::lda::TopicModel, corpus: &Corpus, params: &CoherenceParams) -> CoherenceReport {
    coherence_of_topics(&model.all_top_words(params.top_n), &corpus.documents, corpus.vocab_size(), params.window)
}

/// Smallest candidate whose relative gain to the next one falls below
/// `threshold`; the last candidate when the curve never flattens.
pub fn elbow_choice(candidates: &[usize], scores: &[f64], threshold: f64) -> usize {
    assert_eq!(candidates.len(), scores.len());
    for i in 0..candidates.len().saturating_sub(1) {
        let delta = scores[i + 1] - scores[i];
        let gain = if scores[i] == 0.0 {
            if delta > 0.0 { f64::INFINITY } else { 0.0 }
        } else {
            delta / scores[i].abs()
        };
        if gain < threshold {
            return candidates[i];
        }
    }
    *candidates.last().expect("at least one candidate")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicSelection {
    pub chosen: usize,
    pub curve: Vec<CurvePoint>,
}

/// Mean coherence over `repeats` chains per candidate. Chain `r` of
/// candidate index `i` uses random stream `i * repeats + r` of `base.seed`,
/// so results do not depend on scheduling.
pub fn select_topic_count(
    corpus: &Corpus,
    candidates: &[usize],
    repeats: usize,
    threshold: f64,
    base: &LdaConfig,
    params: &CoherenceParams,
) -> Result<TopicSelection> {
    if candidates.is_empty() || repeats == 0 {
        return Err(Error::Precondition("need candidates and at least one repeat".into()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("candidates must be strictly ascending".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..candidates.len()).flat_map(|i| (0..repeats).map(move |r| (i, r))).collect();
    let scores: Vec<f64> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let cfg = LdaConfig { k: candidates[i], stream: (i * repeats + r) as u64, ..*base };
            let model = train_lda(corpus, &cfg)?;
            Ok(coherence_cv(&model, corpus, params).mean)
        })
        .collect::<Result<_>>()?;
    let curve: Vec<CurvePoint> = candidates
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let s = &scores[i * repeats..(i + 1) * repeats];
            let mean = s.iter().sum::<f64>() / repeats as f64;
            let std = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / repeats as f64).sqrt();
            CurvePoint { k, mean, std }
        })
        .collect();
    let means: Vec<f64> = curve.iter().map(|p| p.mean).collect();
    Ok(TopicSelection { chosen: elbow_choice(candidates, &means, threshold), curve })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elbow_examples() {
        assert_eq!(elbow_choice(&[4, 6, 8, 10], &[0.30, 0.40, 0.45, 0.46], 0.05), 8);
        assert_eq!(elbow_choice(&[4, 6, 8, 10], &[0.1, 0.2, 0.4, 0.8], 0.05), 10);
        assert_eq!(elbow_choice(&[4, 6, 8, 10], &[0.3, 0.3, 0.3, 0.3], 0.05), 4);
        assert_eq!(elbow_choice(&[7], &[0.1], 0.05), 7);
    }

    #[test]
    fn always_cooccurring_words_score_one() {
        let docs = vec![vec![0, 1, 2], vec![2, 1, 0], vec![0, 2, 1, 3]];
        let r = coherence_of_topics(&[vec![0, 1, 2]], &docs, 4, 110);
        assert!((r.per_topic[0] - 1.0).abs() < 1e-12);
        assert_eq!(r.windows, 3);
    }

    #[test]
    fn short_documents_form_one_window() {
        let docs = vec![vec![0, 1], vec![2; 5]];
        let r = coherence_of_topics(&[vec![0, 2]], &docs, 3, 110);
        assert_eq!(r.windows, 2);
        // long document slides: 5 tokens, window 3 -> 3 windows
        let r = coherence_of_topics(&[vec![0, 2]], &docs, 3, 3);
        assert_eq!(r.windows, 1 + 3);
    }

    #[test]
    fn missing_words_are_reported() {
        let docs = vec![vec![0, 1], vec![1, 0]];
        let r = coherence_of_topics(&[vec![0, 1, 5]], &docs, 6, 110);
        assert_eq!(r.missing_words, 1);
        assert!(r.per_topic[0] >= -1.0 && r.per_topic[0] <= 1.0);
    }

    #[test]
    fn disjoint_words_score_lower() {
        let docs: Vec<Vec<usize>> = (0..20).map(|i| if i % 2 == 0 { vec![0, 1] } else { vec![2, 3] }).collect();
        let good = coherence_of_topics(&[vec![0, 1], vec![2, 3]], &docs, 4, 110);
        let bad = coherence_of_topics(&[vec![0, 2], vec![1, 3]], &docs, 4, 110);
        assert!(good.mean > bad.mean);
    }
}
