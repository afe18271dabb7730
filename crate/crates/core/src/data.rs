//! Labelled corpora: TSV loading and writing, deterministic dev splits,
//! a synthetic planted-feature generator and the benchmark dataset manifest.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use thiserror::Error;

/// Manifest shipped in `datasets/manifest`.
pub const MANIFEST: &str = include_str!("../../../datasets/manifest");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("corpus file is empty")]
    EmptyFile,
    #[error("corpus has {0} documents; need at least 2 to split")]
    TooSmall(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabeledCorpus {
    pub documents: Vec<(String, String)>,
    /// Distinct labels in first-appearance order.
    pub labels: Vec<String>,
}

impl LabeledCorpus {
    pub fn from_documents(documents: Vec<(String, String)>) -> Self {
        let mut labels: Vec<String> = Vec::new();
        for (_, l) in &documents {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
        Self { documents, labels }
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn texts(&self) -> Vec<&str> {
        self.documents.iter().map(|(t, _)| t.as_str()).collect()
    }

    /// Concatenates two corpora; labels keep first-appearance order.
    pub fn concat(&self, other: &LabeledCorpus) -> LabeledCorpus {
        let mut docs = self.documents.clone();
        docs.extend(other.documents.iter().cloned());
        LabeledCorpus::from_documents(docs)
    }

    /// Writes `label<TAB>text` lines with `\t`, `\n`, `\r` and `\\` escaped.
    pub fn write_tsv(&self, mut out: impl Write) -> io::Result<()> {
        for (text, label) in &self.documents {
            writeln!(out, "{}\t{}", escape_field(label), escape_field(text))?;
        }
        Ok(())
    }

    pub fn save_tsv(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf)?;
        fs::write(path, buf)
    }
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(o) => return Err(format!("unknown escape \\{o}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Parses TSV text: one `label<TAB>text` document per line.
pub fn parse_tsv(content: &str) -> Result<LabeledCorpus, DataError> {
    if content.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let mut docs = Vec::new();
    for (i, raw) in content.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            continue;
        }
        let malformed = |reason: String| DataError::Malformed { line: i + 1, reason };
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| malformed("missing tab between label and text".into()))?;
        let label = unescape_field(label).map_err(malformed)?;
        if label.is_empty() {
            return Err(malformed("empty label".into()));
        }
        docs.push((unescape_field(text).map_err(malformed)?, label));
    }
    if docs.is_empty() {
        return Err(DataError::EmptyFile);
    }
    Ok(LabeledCorpus::from_documents(docs))
}

pub fn load_tsv(path: impl AsRef<Path>) -> Result<LabeledCorpus, DataError> {
    parse_tsv(&fs::read_to_string(path)?)
}

/// Shuffles with `seed` and puts the first `ceil(dev_fraction * n)` documents
/// in the dev split (at least one, leaving at least one for training).
pub fn split_corpus(
    corpus: &LabeledCorpus,
    dev_fraction: f64,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus), DataError> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(DataError::InvalidParameter(format!("dev fraction {dev_fraction} not in (0,1)")));
    }
    let n = corpus.len();
    if n < 2 {
        return Err(DataError::TooSmall(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = ((dev_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
    let pick = |idx: &[usize]| {
        LabeledCorpus::from_documents(idx.iter().map(|&i| corpus.documents[i].clone()).collect())
    };
    Ok((pick(&order[n_dev..]), pick(&order[..n_dev])))
}

/// Parameters of [`synthetic_corpus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_docs: usize,
    pub n_classes: usize,
    pub vocab_size: usize,
    /// Probability that a document carries its class markers.
    pub signal_strength: f64,
    pub seed: u64,
}

/// Generates a corpus where labels are uniform and each document has 20 to 50
/// tokens from a shared pool. With probability `signal_strength` a document
/// also gets its class marker token (`marker<k>`) and a class cue bigram
/// (`cue<k> cue<k+1>`): the cue words are shared between classes, so only
/// their order identifies the class.
pub fn synthetic_corpus(spec: &SyntheticSpec) -> Result<LabeledCorpus, DataError> {
    if spec.n_classes < 2 {
        return Err(DataError::InvalidParameter("need at least 2 classes".into()));
    }
    if !(0.0..=1.0).contains(&spec.signal_strength) {
        return Err(DataError::InvalidParameter("signal strength must be in [0,1]".into()));
    }
    if spec.vocab_size == 0 || spec.n_docs == 0 {
        return Err(DataError::InvalidParameter("vocab size and document count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let pool: Vec<String> = (0..spec.vocab_size).map(|i| format!("w{i}")).collect();
    let docs = (0..spec.n_docs)
        .map(|_| {
            let k = rng.random_range(0..spec.n_classes);
            let len = rng.random_range(20..=50);
            let mut tokens: Vec<String> =
                (0..len).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect();
            if rng.random_bool(spec.signal_strength) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, format!("marker{k}"));
                let at = rng.random_range(0..=tokens.len());
                let next = (k + 1) % spec.n_classes;
                tokens.insert(at, format!("cue{k} cue{next}"));
            }
            (tokens.join(" "), format!("class{k}"))
        })
        .collect();
    Ok(LabeledCorpus::from_documents(docs))
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub slug: String,
    pub url: String,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Whether dev is carved from the training data rather than provided.
    pub derived_dev: bool,
    #[serde(default)]
    pub groups: Vec<String>,
    pub preparation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct DatasetManifest {
    #[serde(rename = "dataset")]
    pub datasets: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn parse(text: &str) -> Result<Self, DataError> {
        toml::from_str(text).map_err(|e| DataError::Manifest(e.to_string()))
    }

    pub fn builtin() -> Self {
        Self::parse(MANIFEST).expect("shipped manifest parses")
    }

    pub fn get(&self, slug: &str) -> Option<&DatasetEntry> {
        self.datasets.iter().find(|d| d.slug == slug)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_simple_tsv() {
        let c = parse_tsv("pos\tgood movie\nneg\tbad plot\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.labels, ["pos", "neg"]);
        assert_eq!(c.documents[0], ("good movie".to_string(), "pos".to_string()));
    }

    #[test]
    fn reports_malformed_line() {
        let err = parse_tsv("pos\tok\nno tab here\n").unwrap_err();
        assert!(matches!(err, DataError::Malformed { line: 2, .. }), "{err}");
        assert!(matches!(parse_tsv(""), Err(DataError::EmptyFile)));
    }

    #[test]
    fn loads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.tsv");
        let corpus = LabeledCorpus::from_documents(vec![
            ("tab\there\nnewline \\n literal".into(), "a".into()),
            (String::new(), "b".into()),
        ]);
        corpus.save_tsv(&path).unwrap();
        assert_eq!(load_tsv(&path).unwrap(), corpus);
        assert!(load_tsv(dir.path().join("missing.tsv")).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let corpus = LabeledCorpus::from_documents(
            (0..10).map(|i| (format!("doc {i}"), format!("l{}", i % 2))).collect(),
        );
        let (train, dev) = split_corpus(&corpus, 0.2, 1).unwrap();
        assert_eq!(dev.len(), 2);
        assert_eq!(train.len(), 8);
        for d in &dev.documents {
            assert!(!train.documents.contains(d));
        }
        assert_eq!(split_corpus(&corpus, 0.2, 1).unwrap(), (train, dev));
        let tiny = LabeledCorpus::from_documents(vec![("x".into(), "a".into())]);
        assert!(matches!(split_corpus(&tiny, 0.2, 1), Err(DataError::TooSmall(1))));
        assert!(split_corpus(&corpus, 1.0, 1).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_planted() {
        let spec = SyntheticSpec { n_docs: 50, n_classes: 3, vocab_size: 100, signal_strength: 1.0, seed: 9 };
        let a = synthetic_corpus(&spec).unwrap();
        assert_eq!(a, synthetic_corpus(&spec).unwrap());
        for (text, label) in &a.documents {
            let k = label.trim_start_matches("class");
            assert!(text.split(' ').any(|t| t == format!("marker{k}")));
            let n = text.split(' ').count();
            assert!((23..=53).contains(&n));
        }
        let none = synthetic_corpus(&SyntheticSpec { signal_strength: 0.0, ..spec }).unwrap();
        assert!(none.documents.iter().all(|(t, _)| !t.contains("marker")));
        assert!(synthetic_corpus(&SyntheticSpec { n_classes: 1, ..spec }).is_err());
        assert!(synthetic_corpus(&SyntheticSpec { signal_strength: 1.5, ..spec }).is_err());
    }

    #[test]
    fn manifest_matches_published_counts() {
        let m = DatasetManifest::builtin();
        assert_eq!(m.datasets.len(), 8);
        let sst = m.get("sst2").unwrap();
        assert_eq!((sst.train, sst.dev, sst.test), (6920, 872, 1821));
        let imdb = m.get("imdb").unwrap();
        assert_eq!((imdb.train, imdb.dev, imdb.test), (20000, 5000, 25000));
        let expected = [
            ("elec", 20000, 5000, 25000),
            ("convote", 1175, 113, 411),
            ("20n-all", 9052, 2262, 7532),
            ("20n-science", 1899, 474, 1579),
            ("20n-religion", 686, 171, 570),
            ("20n-graphics", 942, 235, 784),
        ];
        for (slug, tr, dv, te) in expected {
            let d = m.get(slug).unwrap();
            assert_eq!((d.train, d.dev, d.test), (tr, dv, te), "{slug}");
        }
        let sci = m.get("20n-science").unwrap();
        let mut groups = sci.groups.clone();
        groups.dedup();
        assert_eq!(groups.len(), 4);
    }

    proptest! {
        #[test]
        fn tsv_round_trip(docs in proptest::collection::vec(("[a-z]{1,5}", "(\\PC|[\t\n\r\\\\]){0,30}"), 1..10)) {
            let corpus = LabeledCorpus::from_documents(
                docs.into_iter().map(|(l, t)| (t, l)).collect(),
            );
            let mut buf = Vec::new();
            corpus.write_tsv(&mut buf).unwrap();
            let back = parse_tsv(std::str::from_utf8(&buf).unwrap()).unwrap();
            prop_assert_eq!(back, corpus);
        }

        #[test]
        fn split_is_a_permutation(n in 2usize..60, frac in 0.01f64..0.99, seed in any::<u64>()) {
            let corpus = LabeledCorpus::from_documents(
                (0..n).map(|i| (format!("d{i}"), "x".to_string())).collect(),
            );
            let (train, dev) = split_corpus(&corpus, frac, seed).unwrap();
            prop_assert_eq!(train.len() + dev.len(), n);
            prop_assert!(!train.is_empty() && !dev.is_empty());
            let mut all: Vec<_> = train.documents.iter().chain(&dev.documents).cloned().collect();
            all.sort();
            let mut orig = corpus.documents.clone();
            orig.sort();
            prop_assert_eq!(all, orig);
        }
    }
}
