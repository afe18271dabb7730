//! Text featurization: downcased tokenization, optional stopword removal,
//! contiguous n-grams and tf / tf-idf / binary weighting into sparse vectors.
//!
//! The tf-idf weight is `count * (ln((1 + n_docs) / (1 + df)) + 1)`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use thiserror::Error;

/// Stoplist shipped in `resources/stopwords.txt`.
pub const DEFAULT_STOPWORDS: &str = include_str!("../../../resources/stopwords.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TextRepError {
    #[error("invalid n-gram range {n_min}..={n_max} (need 1 <= n_min <= n_max <= 3)")]
    InvalidRange { n_min: usize, n_max: usize },
    #[error("unknown weighting scheme {0:?}")]
    UnknownWeighting(String),
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("invalid token pattern: {0}")]
    Pattern(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Weighting {
    Tf,
    TfIdf,
    Binary,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Tf => "tf",
            Weighting::TfIdf => "tf-idf",
            Weighting::Binary => "binary",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Weighting {
    type Err = TextRepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tf" => Ok(Weighting::Tf),
            "tf-idf" | "tfidf" => Ok(Weighting::TfIdf),
            "binary" => Ok(Weighting::Binary),
            other => Err(TextRepError::UnknownWeighting(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RepresentationConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub weighting: Weighting,
    pub remove_stopwords: bool,
}

impl RepresentationConfig {
    pub fn new(n_min: usize, n_max: usize, weighting: Weighting, remove_stopwords: bool) -> Result<Self, TextRepError> {
        if !(1 <= n_min && n_min <= n_max && n_max <= 3) {
            return Err(TextRepError::InvalidRange { n_min, n_max });
        }
        Ok(Self { n_min, n_max, weighting, remove_stopwords })
    }
}

/// Splits lowercased text into tokens.
#[derive(Debug, Clone, Default)]
pub enum Tokenizer {
    /// Maximal runs of alphanumeric characters.
    #[default]
    AlphanumericRuns,
    /// Every match of the pattern is a token.
    Pattern(Regex),
}

impl Tokenizer {
    pub fn pattern(rule: &str) -> Result<Self, TextRepError> {
        Regex::new(rule).map(Tokenizer::Pattern).map_err(|e| TextRepError::Pattern(e.to_string()))
    }

    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        match self {
            Tokenizer::AlphanumericRuns => lower
                .split(|c: char| !c.is_alphanumeric())
                .filter(|t| !t.is_empty())
                .map(str::to_string)
                .collect(),
            Tokenizer::Pattern(re) => re.find_iter(&lower).map(|m| m.as_str().to_string()).collect(),
        }
    }
}

/// Lowercases `text` and returns its maximal alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    Tokenizer::AlphanumericRuns.tokenize(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Stoplist(HashSet<String>);

impl Stoplist {
    /// One lowercase token per line; blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn english() -> Self {
        Self::parse(DEFAULT_STOPWORDS)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Stoplist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self(iter.into_iter().map(Into::into).collect())
    }
}

/// Counts every contiguous n-gram for `n` in `n_min..=n_max`, joined by single spaces.
///
/// Stopwords are removed before windowing, so n-grams may span a removed token.
pub fn extract_ngrams(
    tokens: &[String],
    n_min: usize,
    n_max: usize,
    remove_stopwords: bool,
    stoplist: &Stoplist,
) -> HashMap<String, usize> {
    let kept: Vec<&str> = tokens
        .iter()
        .map(String::as_str)
        .filter(|t| !(remove_stopwords && stoplist.contains(t)))
        .collect();
    let mut counts = HashMap::new();
    for n in n_min.max(1)..=n_max {
        for window in kept.windows(n) {
            *counts.entry(window.join(" ")).or_insert(0) += 1;
        }
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VocabEntry {
    pub index: usize,
    pub df: usize,
}

/// N-gram index built from a training corpus; indices follow lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    terms: Vec<String>,
    entries: HashMap<String, VocabEntry>,
    n_docs: usize,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn get(&self, term: &str) -> Option<VocabEntry> {
        self.entries.get(term).copied()
    }

    pub fn term(&self, index: usize) -> Option<&str> {
        self.terms.get(index).map(String::as_str)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// `ln((1 + n_docs) / (1 + df)) + 1`.
    pub fn idf(&self, index: usize) -> f64 {
        let df = self.entries[&self.terms[index]].df;
        ((1 + self.n_docs) as f64 / (1 + df) as f64).ln() + 1.0
    }

    /// Builds the vocabulary from already-extracted per-document n-gram counts.
    pub fn from_document_counts<'a>(docs: impl IntoIterator<Item = &'a HashMap<String, usize>>) -> Result<Self, TextRepError> {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for counts in docs {
            n_docs += 1;
            for g in counts.keys() {
                *df.entry(g.as_str()).or_insert(0) += 1;
            }
        }
        if n_docs == 0 {
            return Err(TextRepError::EmptyCorpus);
        }
        let terms: Vec<String> = df.keys().map(|s| s.to_string()).collect();
        let entries = df
            .values()
            .zip(&terms)
            .enumerate()
            .map(|(index, (&df, t))| (t.clone(), VocabEntry { index, df }))
            .collect();
        Ok(Self { terms, entries, n_docs })
    }
}

/// Sparse feature vector with strictly increasing indices and no explicit zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    pub dim: usize,
}

impl SparseVector {
    pub fn new(dim: usize) -> Self {
        Self { indices: Vec::new(), values: Vec::new(), dim }
    }

    /// Builds from unsorted pairs; zero values are dropped.
    pub fn from_pairs(dim: usize, mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let (indices, values) = pairs.into_iter().filter(|p| p.1 != 0.0).unzip();
        Self { indices, values, dim }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| dense[i] * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Raw n-gram counts of one document restricted to a vocabulary.
pub fn count_vector(counts: &HashMap<String, usize>, vocab: &Vocabulary) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = counts
        .iter()
        .filter_map(|(g, &c)| vocab.get(g).map(|e| (e.index, c)))
        .collect();
    out.sort_unstable();
    out
}

/// Applies a weighting scheme to in-vocabulary counts.
pub fn weight_counts(counts: &[(usize, usize)], vocab: &Vocabulary, weighting: Weighting) -> SparseVector {
    let (indices, values) = counts
        .iter()
        .map(|&(i, c)| {
            let v = match weighting {
                Weighting::Tf => c as f64,
                Weighting::Binary => 1.0,
                Weighting::TfIdf => c as f64 * vocab.idf(i),
            };
            (i, v)
        })
        .unzip();
    SparseVector { indices, values, dim: vocab.len() }
}

/// Featurizer bound to a tokenizer and stoplist.
#[derive(Debug, Clone, Default)]
pub struct Featurizer {
    pub tokenizer: Tokenizer,
    pub stoplist: Stoplist,
}

impl Featurizer {
    pub fn new(tokenizer: Tokenizer, stoplist: Stoplist) -> Self {
        Self { tokenizer, stoplist }
    }

    /// Default tokenizer with the shipped English stoplist.
    pub fn english() -> Self {
        Self::new(Tokenizer::AlphanumericRuns, Stoplist::english())
    }

    pub fn ngrams(&self, text: &str, config: &RepresentationConfig) -> HashMap<String, usize> {
        extract_ngrams(
            &self.tokenizer.tokenize(text),
            config.n_min,
            config.n_max,
            config.remove_stopwords,
            &self.stoplist,
        )
    }

    pub fn build_vocabulary<S: AsRef<str>>(&self, corpus: &[S], config: &RepresentationConfig) -> Result<Vocabulary, TextRepError> {
        let counts: Vec<_> = corpus.iter().map(|d| self.ngrams(d.as_ref(), config)).collect();
        Vocabulary::from_document_counts(&counts)
    }

    pub fn vectorize(&self, doc: &str, vocab: &Vocabulary, config: &RepresentationConfig) -> SparseVector {
        weight_counts(&count_vector(&self.ngrams(doc, config), vocab), vocab, config.weighting)
    }
}

/// Builds a vocabulary over `corpus` with the default tokenizer.
pub fn build_vocabulary<S: AsRef<str>>(
    corpus: &[S],
    config: &RepresentationConfig,
    stoplist: &Stoplist,
) -> Result<Vocabulary, TextRepError> {
    Featurizer::new(Tokenizer::AlphanumericRuns, stoplist.clone()).build_vocabulary(corpus, config)
}

pub fn vectorize(doc: &str, vocab: &Vocabulary, config: &RepresentationConfig, stoplist: &Stoplist) -> SparseVector {
    Featurizer::new(Tokenizer::AlphanumericRuns, stoplist.clone()).vectorize(doc, vocab, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::hash_map::DefaultHasher;
    use std::hash::{Hash, Hasher};

    fn toks(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn cfg(n_min: usize, n_max: usize, w: Weighting, stop: bool) -> RepresentationConfig {
        RepresentationConfig::new(n_min, n_max, w, stop).unwrap()
    }

    #[test]
    fn tokenizes_on_alphanumeric_runs() {
        assert_eq!(tokenize("The Cat sat."), toks(&["the", "cat", "sat"]));
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("won't stop-2x"), toks(&["won", "t", "stop", "2x"]));
        assert_eq!(tokenize("ÉCOLE, naïve"), toks(&["école", "naïve"]));
    }

    #[test]
    fn pattern_tokenizer() {
        let t = Tokenizer::pattern(r"[a-z']+").unwrap();
        assert_eq!(t.tokenize("Won't STOP-2x"), toks(&["won't", "stop", "x"]));
        assert!(Tokenizer::pattern("(").is_err());
    }

    #[test]
    fn ngram_windows() {
        let none = Stoplist::default();
        let g = extract_ngrams(&toks(&["a", "b", "c"]), 1, 2, false, &none);
        let mut keys: Vec<_> = g.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["a", "a b", "b", "b c", "c"]);
        assert!(extract_ngrams(&toks(&["a", "b"]), 3, 3, false, &none).is_empty());
    }

    #[test]
    fn stopwords_removed_before_windowing() {
        let stop: Stoplist = ["the"].into_iter().collect();
        let g = extract_ngrams(&toks(&["the", "cat", "the", "cat"]), 2, 2, true, &stop);
        assert_eq!(g.len(), 1);
        assert_eq!(g["cat cat"], 1);
    }

    #[test]
    fn vocabulary_counts_documents() {
        let stop = Stoplist::default();
        let v = build_vocabulary(&["a b", "a c"], &cfg(1, 1, Weighting::Tf, false), &stop).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.get("a"), Some(VocabEntry { index: 0, df: 2 }));
        assert_eq!(v.get("b"), Some(VocabEntry { index: 1, df: 1 }));
        assert_eq!(v.get("c"), Some(VocabEntry { index: 2, df: 1 }));
        let again = build_vocabulary(&["a b", "a c"], &cfg(1, 1, Weighting::Tf, false), &stop).unwrap();
        assert_eq!(v, again);
        let empty: [&str; 0] = [];
        assert_eq!(build_vocabulary(&empty, &cfg(1, 1, Weighting::Tf, false), &stop), Err(TextRepError::EmptyCorpus));
    }

    #[test]
    fn tfidf_and_binary_values() {
        let stop = Stoplist::default();
        let c = cfg(1, 1, Weighting::TfIdf, false);
        let v = build_vocabulary(&["a b", "a c"], &c, &stop).unwrap();
        let x = vectorize("a b", &v, &c, &stop);
        assert_eq!(x.indices, vec![0, 1]);
        assert!((x.values[0] - 1.0).abs() < 1e-12);
        assert!((x.values[1] - ((1.5f64).ln() + 1.0)).abs() < 1e-12);
        assert!((x.values[1] - 1.4055).abs() < 1e-4);

        let b = vectorize("a b a", &v, &cfg(1, 1, Weighting::Binary, false), &stop);
        assert_eq!(b.values, vec![1.0, 1.0]);
        let tf = vectorize("a b a", &v, &cfg(1, 1, Weighting::Tf, false), &stop);
        assert_eq!(tf.values, vec![2.0, 1.0]);
    }

    #[test]
    fn unseen_ngrams_are_dropped() {
        let stop = Stoplist::default();
        let c = cfg(3, 3, Weighting::Tf, false);
        let v = build_vocabulary(&["x y z w"], &c, &stop).unwrap();
        assert!(vectorize("p q r", &v, &c, &stop).indices.is_empty());
        assert!(vectorize("", &v, &c, &stop).indices.is_empty());
    }

    #[test]
    fn rejects_bad_ranges() {
        assert!(RepresentationConfig::new(2, 1, Weighting::Tf, false).is_err());
        assert!(RepresentationConfig::new(0, 1, Weighting::Tf, false).is_err());
        assert!(RepresentationConfig::new(1, 4, Weighting::Tf, false).is_err());
        assert_eq!("tf-idf".parse::<Weighting>(), Ok(Weighting::TfIdf));
        assert!("bm25".parse::<Weighting>().is_err());
    }

    #[test]
    fn shipped_stoplist_loads() {
        let s = Stoplist::english();
        assert!(s.len() > 100);
        assert!(s.contains("the") && s.contains("and"));
    }

    fn vocab_hash(v: &Vocabulary) -> u64 {
        let mut h = DefaultHasher::new();
        v.terms.hash(&mut h);
        for t in &v.terms {
            v.entries[t].hash(&mut h);
        }
        v.n_docs.hash(&mut h);
        h.finish()
    }

    fn word() -> impl Strategy<Value = String> {
        prop::sample::select(vec!["the", "a", "cat", "dog", "and", "runs", "is", "blue", "x1"])
            .prop_map(str::to_string)
    }

    proptest! {
        #[test]
        fn vector_invariants(
            train in proptest::collection::vec(proptest::collection::vec(word(), 0..12), 1..8),
            dev in proptest::collection::vec(proptest::collection::vec(word(), 0..12), 1..5),
            n_min in 1usize..=3, span in 0usize..3, w in 0usize..3, stop in any::<bool>(),
        ) {
            let n_max = (n_min + span).min(3);
            let weighting = [Weighting::Tf, Weighting::TfIdf, Weighting::Binary][w];
            let c = cfg(n_min, n_max, weighting, stop);
            let f = Featurizer::english();
            let train: Vec<String> = train.iter().map(|d| d.join(" ")).collect();
            let vocab = f.build_vocabulary(&train, &c).unwrap();
            let before = vocab_hash(&vocab);
            for e in vocab.entries.values() {
                prop_assert!(e.df >= 1 && e.df <= vocab.n_docs());
            }
            for doc in train.iter().chain(dev.iter().map(|d| d.join(" ")).collect::<Vec<_>>().iter()) {
                let x = f.vectorize(doc, &vocab, &c);
                prop_assert!(x.indices.windows(2).all(|p| p[0] < p[1]));
                prop_assert!(x.indices.iter().all(|&i| i < vocab.len()));
                prop_assert!(x.values.iter().all(|v| v.is_finite() && *v > 0.0));
                match weighting {
                    Weighting::Binary => prop_assert!(x.values.iter().all(|&v| v == 1.0)),
                    Weighting::Tf => prop_assert!(x.values.iter().all(|&v| v.fract() == 0.0)),
                    Weighting::TfIdf => {}
                }
                prop_assert_eq!(&x, &f.vectorize(doc, &vocab, &c));
            }
            prop_assert_eq!(before, vocab_hash(&vocab));
            if stop && n_min == 1 {
                for t in vocab.terms() {
                    if !t.contains(' ') {
                        prop_assert!(!f.stoplist.contains(t));
                    }
                }
            }
        }
    }
}
