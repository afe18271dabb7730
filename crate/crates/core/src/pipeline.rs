//! Wiring between assignments and the featurize, train, score pipeline.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::data::LabeledCorpus;
use crate::logreg::{self, Example, Fit, LogregError, Penalty, StrengthConvention, TrainConfig};
use crate::smbo::Objective;
use crate::space::{n_span_node, Assignment, Value};
use crate::textrep::{count_vector, weight_counts, Featurizer, RepresentationConfig, TextRepError, Vocabulary, Weighting};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("assignment has no value for {0:?}")]
    MissingHyperparameter(String),
    #[error("bad value for {name:?}: {value}")]
    BadValue { name: String, value: String },
    #[error(transparent)]
    TextRep(#[from] TextRepError),
    #[error(transparent)]
    Logreg(#[from] LogregError),
}

/// The seven hyperparameters of one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TextClassifierConfig {
    pub representation: RepresentationConfig,
    pub training: TrainConfig,
}

impl fmt::Display for TextClassifierConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = &self.representation;
        let t = &self.training;
        write!(
            f,
            "n={}..{} {} stopwords={} {} strength={} tolerance={}",
            r.n_min, r.n_max, r.weighting, r.remove_stopwords, t.penalty, t.strength, t.tolerance
        )
    }
}

fn get<'a>(a: &'a Assignment, name: &str) -> Result<&'a Value, PipelineError> {
    a.get(name).ok_or_else(|| PipelineError::MissingHyperparameter(name.to_string()))
}

fn bad(name: &str, v: &Value) -> PipelineError {
    PipelineError::BadValue { name: name.to_string(), value: v.to_string() }
}

impl TextClassifierConfig {
    /// Reads the hyperparameters from an assignment.
    ///
    /// `n_max` comes from an `n_max` node when the space has one, otherwise
    /// from `n_min` plus the active `n_span...` offset node (or equals `n_min`
    /// when there is none).
    pub fn from_assignment(a: &Assignment) -> Result<Self, PipelineError> {
        let int = |name: &str| -> Result<usize, PipelineError> {
            let v = get(a, name)?;
            v.as_int().filter(|i| *i >= 0).map(|i| i as usize).ok_or_else(|| bad(name, v))
        };
        let real = |name: &str| -> Result<f64, PipelineError> {
            let v = get(a, name)?;
            v.as_f64().ok_or_else(|| bad(name, v))
        };
        let choice = |name: &str| -> Result<(&str, &Value), PipelineError> {
            let v = get(a, name)?;
            v.as_choice().map(|s| (s, v)).ok_or_else(|| bad(name, v))
        };
        let n_min = int("n_min")?;
        let n_max = if a.get("n_max").is_some() {
            int("n_max")?
        } else {
            let span = a
                .values
                .iter()
                .find(|(k, _)| k.starts_with("n_span"))
                .map(|(k, _)| int(k))
                .transpose()?;
            n_min + span.unwrap_or(0)
        };
        let (w, wv) = choice("weighting")?;
        let weighting: Weighting = w.parse().map_err(|_| bad("weighting", wv))?;
        let (s, sv) = choice("remove_stopwords")?;
        let remove_stopwords = match s {
            "true" | "True" | "T" => true,
            "false" | "False" | "F" => false,
            _ => return Err(bad("remove_stopwords", sv)),
        };
        let (r, rv) = choice("regularizer")?;
        let penalty: Penalty = r.parse().map_err(|_| bad("regularizer", rv))?;
        Ok(Self {
            representation: RepresentationConfig::new(n_min, n_max, weighting, remove_stopwords)?,
            training: TrainConfig::new(penalty, real("strength")?, real("tolerance")?)?,
        })
    }

    /// Encodes the config as an assignment of the built-in space.
    pub fn to_assignment(&self) -> Assignment {
        let r = &self.representation;
        let t = &self.training;
        let n_min = r.n_min as i64;
        [
            ("n_min".to_string(), Value::Int(n_min)),
            (n_span_node(n_min), Value::Int(r.n_max as i64 - n_min)),
            ("weighting".into(), Value::Choice(r.weighting.to_string())),
            ("remove_stopwords".into(), Value::Choice(r.remove_stopwords.to_string())),
            ("regularizer".into(), Value::Choice(t.penalty.to_string())),
            ("strength".into(), Value::Real(t.strength)),
            ("tolerance".into(), Value::Real(t.tolerance)),
        ]
        .into_iter()
        .collect()
    }
}

/// Label indices for a training corpus, extended with labels only seen in
/// evaluation data (the model never predicts those).
pub fn label_set(train: &LabeledCorpus, others: &[&LabeledCorpus]) -> Vec<String> {
    let mut labels = train.labels.clone();
    for c in others {
        for l in &c.labels {
            if !labels.contains(l) {
                labels.push(l.clone());
            }
        }
    }
    labels
}

/// Per-document in-vocabulary n-gram counts for one representation shape.
#[derive(Debug)]
struct Counted {
    vocab: Vocabulary,
    train: Vec<Vec<(usize, usize)>>,
    eval: Vec<Vec<(usize, usize)>>,
}

type ShapeKey = (usize, usize, bool);

/// Result of training on one split and scoring another.
#[derive(Debug, Clone)]
pub struct Scored {
    pub accuracy: f64,
    pub fit: Fit,
    pub n_features: usize,
}

/// Featurizes, trains and scores configurations on a fixed train/eval pair.
///
/// N-gram counts are cached per `(n_min, n_max, remove_stopwords)`; the
/// weighting is applied per call. Results do not depend on cache state.
#[derive(Debug)]
pub struct TextTask {
    train: LabeledCorpus,
    eval: LabeledCorpus,
    labels: Vec<String>,
    featurizer: Featurizer,
    pub convention: StrengthConvention,
    pub max_iterations: usize,
    cache: HashMap<ShapeKey, Arc<Counted>>,
}

impl TextTask {
    pub fn new(train: LabeledCorpus, eval: LabeledCorpus, featurizer: Featurizer) -> Self {
        let labels = label_set(&train, &[&eval]);
        Self {
            train,
            eval,
            labels,
            featurizer,
            convention: StrengthConvention::LossWeight,
            max_iterations: 1000,
            cache: HashMap::new(),
        }
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    fn counted(&mut self, r: &RepresentationConfig) -> Result<Arc<Counted>, PipelineError> {
        let key = (r.n_min, r.n_max, r.remove_stopwords);
        if let Some(c) = self.cache.get(&key) {
            return Ok(c.clone());
        }
        let grams = |corpus: &LabeledCorpus| -> Vec<HashMap<String, usize>> {
            corpus.documents.iter().map(|(t, _)| self.featurizer.ngrams(t, r)).collect()
        };
        let train_grams = grams(&self.train);
        let vocab = Vocabulary::from_document_counts(&train_grams)?;
        let train = train_grams.iter().map(|g| count_vector(g, &vocab)).collect();
        let eval = grams(&self.eval).iter().map(|g| count_vector(g, &vocab)).collect();
        let counted = Arc::new(Counted { vocab, train, eval });
        self.cache.insert(key, counted.clone());
        Ok(counted)
    }

    fn examples(&self, corpus: &LabeledCorpus, counts: &[Vec<(usize, usize)>], vocab: &Vocabulary, w: Weighting) -> Vec<Example> {
        corpus
            .documents
            .iter()
            .zip(counts)
            .map(|((_, label), c)| Example {
                x: weight_counts(c, vocab, w),
                label: self.labels.iter().position(|l| l == label).expect("label set covers corpus"),
            })
            .collect()
    }

    /// Trains on the train split and returns accuracy on the eval split.
    pub fn score(&mut self, config: &TextClassifierConfig) -> Result<Scored, PipelineError> {
        let counted = self.counted(&config.representation)?;
        let w = config.representation.weighting;
        let train = self.examples(&self.train, &counted.train, &counted.vocab, w);
        let eval = self.examples(&self.eval, &counted.eval, &counted.vocab, w);
        let training = TrainConfig {
            convention: self.convention,
            max_iterations: self.max_iterations,
            ..config.training
        };
        let fit = logreg::train(&train, &training, counted.vocab.len(), &self.labels)?;
        let accuracy = logreg::evaluate_accuracy(&fit.model, &eval)?;
        Ok(Scored { accuracy, fit, n_features: counted.vocab.len() })
    }
}

impl Objective for TextTask {
    type Error = PipelineError;

    fn evaluate(&mut self, assignment: &Assignment) -> Result<f64, PipelineError> {
        let config = TextClassifierConfig::from_assignment(assignment)?;
        let scored = self.score(&config)?;
        log::debug!(
            "{config}: accuracy {} ({} features, {} iterations{})",
            scored.accuracy,
            scored.n_features,
            scored.fit.iterations,
            if scored.fit.converged { "" } else { ", not converged" }
        );
        Ok(scored.accuracy)
    }
}
