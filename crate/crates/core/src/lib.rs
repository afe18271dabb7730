//! Joint search over text representations and logistic regression
//! hyperparameters with a tree-structured Parzen estimator.
//!
//! The pieces, bottom up:
//!
//! - [`space`]: tree-structured hyperparameter spaces and assignments.
//! - [`tpe`]: the Parzen-estimator surrogate and expected-improvement ranking.
//! - [`smbo`]: the suggest, evaluate, record loop.
//! - [`textrep`]: tokenization, n-grams, vocabulary and weighting.
//! - [`logreg`]: regularized multinomial logistic regression.
//! - [`data`]: TSV corpora, splits, synthetic data, dataset manifest.
//! - [`pipeline`]: turns an assignment into a dev-set accuracy.

pub mod data;
pub mod logreg;
pub mod pipeline;
pub mod smbo;
pub mod space;
pub mod textrep;
pub mod tpe;

pub use data::LabeledCorpus;
pub use logreg::{Model, Penalty, TrainConfig};
pub use pipeline::{TextClassifierConfig, TextTask};
pub use smbo::{Objective, RunState, Trial};
pub use space::{text_rep_space, Assignment, ConfigSpace, ParamDomain, ParamNode, Value};
pub use textrep::{Featurizer, RepresentationConfig, Weighting};
pub use tpe::{TpeParams, TrialRecord};
