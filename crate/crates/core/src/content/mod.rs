//! Hashtags, mentions, text preprocessing, TF-IDF and topic modeling.

pub mod coherence;
pub mod lda;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TagKind {
    Hashtag,
    Mention,
}

impl TagKind {
    fn sigil(self) -> char {
        match self {
            TagKind::Hashtag => '#',
            TagKind::Mention => '@',
        }
    }
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[#@](\w+)").unwrap())
}

/// Tags of `kind` in order of appearance, lowercased and without the sigil.
/// A mention sigil directly after a word character (as in an email
/// address) does not start a mention.
pub fn extract_tags(text: &str, kind: TagKind) -> Vec<String> {
    let sigil = kind.sigil();
    tag_regex()
        .captures_iter(text)
        .filter_map(|cap| {
            let whole = cap.get(0)?;
            if !whole.as_str().starts_with(sigil) {
                return None;
            }
            if kind == TagKind::Mention {
                let prev = text[..whole.start()].chars().next_back();
                if prev.is_some_and(|c| c.is_alphanumeric() || c == '_') {
                    return None;
                }
            }
            Some(cap[1].to_lowercase())
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TagTable {
    pub kind: TagKind,
    pub entries: BTreeMap<String, u64>,
    pub total: u64,
    /// Number of tweets scanned.
    pub tweets: u64,
}

impl TagTable {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, kind: TagKind) -> TagTable {
        let mut entries = BTreeMap::new();
        let mut tweets = 0;
        for text in texts {
            tweets += 1;
            for tag in extract_tags(text, kind) {
                *entries.entry(tag).or_default() += 1;
            }
        }
        let total = entries.values().sum();
        TagTable { kind, entries, total, tweets }
    }

    pub fn per_tweet(&self) -> f64 {
        if self.tweets == 0 {
            0.0
        } else {
            self.total as f64 / self.tweets as f64
        }
    }

    pub fn share(&self, tag: &str) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.entries.get(tag).copied().unwrap_or(0) as f64 / self.total as f64
    }

    /// Descending by count, ties alphabetical.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.entries.iter().map(|(k, c)| (k.as_str(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }

    pub fn write_csv<W: Write>(&self, w: W, limit: Option<usize>) -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["tag", "count", "share"])?;
        for (tag, count) in self.ranked().into_iter().take(limit.unwrap_or(usize::MAX)) {
            csv.write_record([tag.to_string(), count.to_string(), format!("{:.6}", self.share(tag))])?;
        }
        csv.flush()?;
        Ok(())
    }
}

pub const DEFAULT_COVID_VARIANTS: &[&str] = &["covid_19", "coronavid19", "covid-19", "covidー19"];

/// Fold `variants` into `canonical`. Returns the grouped table and the
/// canonical tag's share of all tags.
pub fn variant_group(table: &TagTable, canonical: &str, variants: &[impl AsRef<str>]) -> (TagTable, f64) {
    let variants: HashSet<String> = variants.iter().map(|v| v.as_ref().to_lowercase()).collect();
    let mut entries = BTreeMap::new();
    for (tag, count) in &table.entries {
        let key = if variants.contains(tag) { canonical } else { tag.as_str() };
        *entries.entry(key.to_string()).or_default() += count;
    }
    let grouped = TagTable { kind: table.kind, entries, total: table.total, tweets: table.tweets };
    let share = grouped.share(canonical);
    (grouped, share)
}

const DEFAULT_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopWords(HashSet<String>);

impl StopWords {
    pub fn default_english() -> StopWords {
        StopWords::parse(DEFAULT_STOPWORDS)
    }

    /// One word per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> StopWords {
        StopWords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn from_path(path: &Path) -> Result<StopWords> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::resource(path, e))?;
        Ok(StopWords::parse(&text))
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub stopwords: StopWords,
    pub min_len: usize,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor { stopwords: StopWords::default_english(), min_len: 2 }
    }
}

fn url_or_mention_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"https?://\S+|www\.\S+|@\w+").unwrap())
}

impl Preprocessor {
    /// Lowercase, drop URLs and mentions, split on anything that is not a
    /// letter or digit (so hashtag sigils vanish and the word stays), drop
    /// stop words and short tokens, then Porter-stem.
    pub fn tokens(&self, text: &str) -> Vec<String> {
        let lowered = text.to_lowercase();
        let cleaned = url_or_mention_regex().replace_all(&lowered, " ");
        cleaned
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| t.chars().count() >= self.min_len && !self.stopwords.contains(t))
            .map(porter_stemmer::stem)
            .filter(|t| !t.is_empty())
            .collect()
    }
}

pub fn preprocess(text: &str, pre: &Preprocessor) -> Vec<String> {
    pre.tokens(text)
}

/// Documents as vocabulary indices. The vocabulary is sorted, so it does
/// not depend on document order.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub documents: Vec<Vec<usize>>,
    pub vocabulary: Vec<String>,
    pub doc_ids: Vec<String>,
    index: HashMap<String, usize>,
    /// Documents dropped because no token survived preprocessing.
    pub dropped: usize,
}

impl Corpus {
    pub fn from_tokens(docs: Vec<(String, Vec<String>)>) -> Corpus {
        let vocab: BTreeSet<&str> = docs.iter().flat_map(|(_, t)| t.iter().map(String::as_str)).collect();
        let vocabulary: Vec<String> = vocab.into_iter().map(str::to_string).collect();
        let index: HashMap<String, usize> = vocabulary.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        let mut documents = Vec::with_capacity(docs.len());
        let mut doc_ids = Vec::with_capacity(docs.len());
        let mut dropped = 0;
        for (id, tokens) in docs {
            if tokens.is_empty() {
                dropped += 1;
                continue;
            }
            documents.push(tokens.iter().map(|t| index[t]).collect());
            doc_ids.push(id);
        }
        Corpus { documents, vocabulary, doc_ids, index, dropped }
    }

    pub fn from_texts<'a>(texts: impl IntoIterator<Item = (&'a str, &'a str)>, pre: &Preprocessor) -> Corpus {
        Corpus::from_tokens(texts.into_iter().map(|(id, text)| (id.to_string(), pre.tokens(text))).collect())
    }

    pub fn word_index(&self, w: &str) -> Option<usize> {
        self.index.get(w).copied()
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }
}

/// Per-document `(term, weight)` pairs sorted by term, with
/// `weight = tf * ln(D / df)` and raw term counts as `tf`.
pub fn tfidf(corpus: &Corpus) -> Result<Vec<Vec<(usize, f64)>>> {
    if corpus.vocab_size() == 0 || corpus.is_empty() {
        return Err(Error::InvalidInput("empty vocabulary".into()));
    }
    let d = corpus.len() as f64;
    let mut df = vec![0u64; corpus.vocab_size()];
    let tf: Vec<BTreeMap<usize, u64>> = corpus
        .documents
        .iter()
        .map(|doc| {
            let mut counts = BTreeMap::new();
            for &w in doc {
                *counts.entry(w).or_default() += 1;
            }
            counts
        })
        .collect();
    for counts in &tf {
        for &w in counts.keys() {
            df[w] += 1;
        }
    }
    Ok(tf
        .into_iter()
        .map(|counts| {
            counts
                .into_iter()
                .map(|(w, c)| (w, c as f64 * (d / df[w] as f64).ln()))
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tag_extraction() {
        assert_eq!(extract_tags("#COVID19 is here", TagKind::Hashtag), ["covid19"]);
        assert_eq!(extract_tags("@WHO and @who", TagKind::Mention), ["who", "who"]);
        assert!(extract_tags("email a@b.com", TagKind::Mention).is_empty());
        assert_eq!(extract_tags("(@cdc) #a #b", TagKind::Mention), ["cdc"]);
        assert_eq!(extract_tags("#a #b #a", TagKind::Hashtag), ["a", "b", "a"]);
        assert!(extract_tags("#COVID19", TagKind::Mention).is_empty());
    }

    #[test]
    fn variant_folding() {
        let t = TagTable::build(["#covid19 #covid19 #covid19 #Covid_19 #covid_19 #stayhome"], TagKind::Hashtag);
        let (g, share) = variant_group(&t, "covid19", DEFAULT_COVID_VARIANTS);
        assert_eq!(g.entries["covid19"], 5);
        assert_eq!(g.total, 6);
        assert_eq!(share, 5.0 / 6.0);
        let (same, _) = variant_group(&t, "covid19", &[] as &[&str]);
        assert_eq!(same.entries, t.entries);
    }

    #[test]
    fn preprocessing_examples() {
        let p = Preprocessor::default();
        assert_eq!(p.tokens("virus"), ["viru"]);
        assert_eq!(p.tokens("president"), ["presid"]);
        assert_eq!(p.tokens("family"), ["famili"]);
        assert!(p.tokens("The the THE").is_empty());
        assert_eq!(
            p.tokens("RT @cdc: Wash your hands! https://t.co/xyz #StayHome a"),
            ["rt", "wash", "hand", "stayhom"]
        );
    }

    fn corpus(docs: &[&[&str]]) -> Corpus {
        Corpus::from_tokens(
            docs.iter()
                .enumerate()
                .map(|(i, d)| (i.to_string(), d.iter().map(|s| s.to_string()).collect()))
                .collect(),
        )
    }

    #[test]
    fn tfidf_examples() {
        let c = corpus(&[&["a", "b"], &["a"]]);
        let w = tfidf(&c).unwrap();
        let a = c.word_index("a").unwrap();
        let b = c.word_index("b").unwrap();
        assert_eq!(w[0], vec![(a, 0.0), (b, 2f64.ln())]);
        assert_eq!(w[1], vec![(a, 0.0)]);

        let doubled = corpus(&[&["a", "b", "b"], &["a"]]);
        assert_eq!(tfidf(&doubled).unwrap()[0][1].1, 2.0 * 2f64.ln());

        assert!(tfidf(&corpus(&[])).is_err());
    }

    #[test]
    fn empty_documents_are_dropped() {
        let c = corpus(&[&["a"], &[], &["b"]]);
        assert_eq!(c.len(), 2);
        assert_eq!(c.dropped, 1);
        assert_eq!(c.doc_ids, ["0", "2"]);
    }

    proptest! {
        #[test]
        fn tfidf_ignores_document_order(docs in proptest::collection::vec(proptest::collection::vec(0u8..6, 1..6), 1..8)) {
            let named: Vec<(String, Vec<String>)> = docs.iter().enumerate()
                .map(|(i, d)| (i.to_string(), d.iter().map(|w| format!("w{w}")).collect()))
                .collect();
            let fwd = Corpus::from_tokens(named.clone());
            let mut rev_docs = named;
            rev_docs.reverse();
            let rev = Corpus::from_tokens(rev_docs);
            let keyed = |c: &Corpus| -> BTreeMap<(String, String), u64> {
                let w = tfidf(c).unwrap();
                c.doc_ids.iter().zip(w).flat_map(|(id, ws)| {
                    ws.into_iter().map(|(t, x)| ((id.clone(), c.vocabulary[t].clone()), x.to_bits())).collect::<Vec<_>>()
                }).collect()
            };
            prop_assert_eq!(keyed(&fwd), keyed(&rev));
        }

        #[test]
        fn tag_counts_ignore_tweet_order(tags in proptest::collection::vec("[a-c]{1,3}", 0..20)) {
            let texts: Vec<String> = tags.chunks(3).map(|c| c.iter().map(|t| format!("#{t} @{t}")).collect::<Vec<_>>().join(" ")).collect();
            let fwd = TagTable::build(texts.iter().map(String::as_str), TagKind::Hashtag);
            let rev = TagTable::build(texts.iter().rev().map(String::as_str), TagKind::Hashtag);
            prop_assert_eq!(fwd, rev);
        }
    }
}
