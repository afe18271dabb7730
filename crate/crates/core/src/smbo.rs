//! Sequential model-based optimization loop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::space::{Assignment, ConfigSpace};
use crate::tpe::{self, TpeError, TpeParams, TrialRecord};

/// Something that scores an assignment; higher is better.
///
/// Implementations must be deterministic: the same assignment always yields
/// the same value.
pub trait Objective {
    type Error: std::fmt::Display;

    fn evaluate(&mut self, assignment: &Assignment) -> Result<f64, Self::Error>;
}

impl<F, E> Objective for F
where
    F: FnMut(&Assignment) -> Result<f64, E>,
    E: std::fmt::Display,
{
    type Error = E;

    fn evaluate(&mut self, assignment: &Assignment) -> Result<f64, E> {
        self(assignment)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Value(f64),
    /// The objective errored or returned a non-finite value.
    Failed(String),
}

impl Outcome {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Outcome::Value(v) => Some(v),
            Outcome::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// 1-based trial index.
    pub index: usize,
    pub assignment: Assignment,
    pub outcome: Outcome,
    /// Surrogate split quantile used to pick this trial (`None` for prior samples).
    pub y_star: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Incumbent {
    pub trial: usize,
    pub assignment: Assignment,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    pub history: Vec<Trial>,
    /// Best successful trial; the first one wins ties.
    pub incumbent: Option<Incumbent>,
    pub budget: usize,
    pub seed: u64,
}

impl RunState {
    /// Successful trials as surrogate training records.
    pub fn records(&self) -> Vec<TrialRecord> {
        self.history
            .iter()
            .filter_map(|t| {
                t.outcome.value().map(|y| TrialRecord { assignment: t.assignment.clone(), y })
            })
            .collect()
    }

    pub fn best_so_far_curve(&self) -> Result<Vec<(usize, Option<f64>)>, SmboError> {
        best_so_far_curve(self)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SmboError {
    #[error("trial budget must be at least 1")]
    ZeroBudget,
    #[error("run history is empty")]
    EmptyHistory,
    #[error(transparent)]
    Tpe(#[from] TpeError),
}

/// Runs exactly `budget` trials of suggest, evaluate, record.
///
/// Failed evaluations are kept in the history and excluded from surrogate
/// fitting. `on_trial` is called after every trial with the updated state.
pub fn run<O, R>(
    space: &ConfigSpace,
    objective: &mut O,
    budget: usize,
    params: &TpeParams,
    rng: &mut R,
    mut on_trial: impl FnMut(&Trial, &RunState),
) -> Result<RunState, SmboError>
where
    O: Objective + ?Sized,
    R: Rng + ?Sized,
{
    if budget == 0 {
        return Err(SmboError::ZeroBudget);
    }
    params.validate()?;
    let mut state = RunState { history: Vec::with_capacity(budget), incumbent: None, budget, seed: params.seed };
    let mut records: Vec<TrialRecord> = Vec::new();
    for index in 1..=budget {
        // Failed trials still count toward the startup phase.
        let suggestion = if state.history.len() < params.n_startup {
            tpe::Suggestion { assignment: space.sample_prior(rng), y_star: None, score: None }
        } else {
            tpe::suggest_detailed(space, &records, params, rng)?
        };
        let outcome = match objective.evaluate(&suggestion.assignment) {
            Ok(y) if y.is_finite() => Outcome::Value(y),
            Ok(y) => Outcome::Failed(format!("non-finite objective {y}")),
            Err(e) => Outcome::Failed(e.to_string()),
        };
        match &outcome {
            Outcome::Value(y) => {
                records.push(TrialRecord { assignment: suggestion.assignment.clone(), y: *y });
                if state.incumbent.as_ref().is_none_or(|inc| *y > inc.y) {
                    state.incumbent =
                        Some(Incumbent { trial: index, assignment: suggestion.assignment.clone(), y: *y });
                }
            }
            Outcome::Failed(msg) => log::warn!("trial {index} failed: {msg}"),
        }
        let trial = Trial { index, assignment: suggestion.assignment, outcome, y_star: suggestion.y_star };
        log::info!(
            "trial {index}: y = {:?}, split y* = {:?}, incumbent = {:?}",
            trial.outcome.value(),
            trial.y_star,
            state.incumbent.as_ref().map(|i| i.y)
        );
        state.history.push(trial);
        on_trial(state.history.last().unwrap(), &state);
    }
    Ok(state)
}

/// [`run`] with an RNG seeded from `params.seed`.
pub fn run_seeded<O: Objective + ?Sized>(
    space: &ConfigSpace,
    objective: &mut O,
    budget: usize,
    params: &TpeParams,
    on_trial: impl FnMut(&Trial, &RunState),
) -> Result<RunState, SmboError> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    run(space, objective, budget, params, &mut rng, on_trial)
}

/// Running maximum of the objective, one entry per trial.
///
/// Failed trials carry the previous maximum; entries before the first
/// success are `None`.
pub fn best_so_far_curve(state: &RunState) -> Result<Vec<(usize, Option<f64>)>, SmboError> {
    if state.history.is_empty() {
        return Err(SmboError::EmptyHistory);
    }
    Ok(running_max(state.history.iter().map(|t| t.outcome.value()))
        .into_iter()
        .enumerate()
        .map(|(i, v)| (i + 1, v))
        .collect())
}

pub fn running_max(values: impl IntoIterator<Item = Option<f64>>) -> Vec<Option<f64>> {
    let mut best: Option<f64> = None;
    values
        .into_iter()
        .map(|v| {
            if let Some(v) = v {
                best = Some(best.map_or(v, |b| b.max(v)));
            }
            best
        })
        .collect()
}
