//! Tree-structured Parzen estimator.
//!
//! Trial history is split at a quantile `y_star` into a below population
//! (`y < y_star`) and an above population (`y >= y_star`). Each population
//! gets one density estimator per node, fitted from the trials where that
//! node was active. Candidates are drawn from the above densities and ranked
//! by `1 / (gamma + (p_below / p_above) * (1 - gamma))`, which is proportional
//! to expected improvement over `y_star`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::space::{Assignment, ConfigSpace, ParamDomain, Value};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TpeError {
    #[error("trial history is empty")]
    EmptyHistory,
    #[error("node {node:?}: observation {value} outside domain")]
    ObservationOutOfDomain { node: String, value: String },
    #[error("degenerate density: p_above is zero")]
    DegenerateDensity,
    #[error("no density model for active node {0:?}")]
    MissingModel(String),
    #[error("invalid TPE parameters: {0}")]
    InvalidParams(String),
    #[error("candidate enumeration needs a fully discrete space")]
    NotEnumerable,
    #[error("{0}")]
    Space(#[from] crate::space::SpaceError),
}

/// One evaluated point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub assignment: Assignment,
    pub y: f64,
}

/// How candidates are produced in [`suggest`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateSource {
    /// Draw `n_candidates` points from the above densities.
    #[default]
    Sample,
    /// Score every assignment of a fully discrete space.
    Enumerate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpeParams {
    /// Fraction of trials in the below population, `p(y < y_star)`.
    pub gamma: f64,
    pub n_candidates: usize,
    /// Trials drawn from the prior before the surrogate is used.
    pub n_startup: usize,
    /// Pseudo-count added to every categorical choice.
    pub smoothing: f64,
    pub seed: u64,
    pub candidates: CandidateSource,
}

impl Default for TpeParams {
    fn default() -> Self {
        Self {
            gamma: 0.15,
            n_candidates: 64,
            n_startup: 10,
            smoothing: 1.0,
            seed: 0,
            candidates: CandidateSource::Sample,
        }
    }
}

impl TpeParams {
    pub fn validate(&self) -> Result<(), TpeError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TpeError::InvalidParams(format!("gamma {} not in (0,1)", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(TpeError::InvalidParams("n_candidates must be positive".into()));
        }
        if !(self.smoothing > 0.0 && self.smoothing.is_finite()) {
            return Err(TpeError::InvalidParams(format!(
                "smoothing {} must be positive",
                self.smoothing
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistorySplit {
    pub below: Vec<TrialRecord>,
    pub above: Vec<TrialRecord>,
    pub y_star: f64,
}

/// Splits `history` so that the below population holds the
/// `max(1, floor(gamma * t))` lowest values (none when `t < 2`).
///
/// Values tied with `y_star` are moved to the above population, so every
/// below value is strictly less than `y_star`.
pub fn split_history(history: &[TrialRecord], gamma: f64) -> Result<HistorySplit, TpeError> {
    if history.is_empty() {
        return Err(TpeError::EmptyHistory);
    }
    let t = history.len();
    let mut sorted: Vec<&TrialRecord> = history.iter().collect();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y));
    let mut n_below = if t >= 2 { ((gamma * t as f64).floor() as usize).max(1) } else { 0 };
    n_below = n_below.min(t - 1);
    let y_star = sorted[n_below].y;
    while n_below > 0 && sorted[n_below - 1].y >= y_star {
        n_below -= 1;
    }
    let below = sorted[..n_below].iter().map(|r| (*r).clone()).collect();
    let above = sorted[n_below..].iter().map(|r| (*r).clone()).collect();
    Ok(HistorySplit { below, above, y_star })
}

/// Categorical distribution with weight proportional to `smoothing + count`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenCategorical {
    pub weights: Vec<f64>,
    pub smoothing: f64,
}

impl ParzenCategorical {
    pub fn probability(&self, index: usize) -> f64 {
        self.weights[index]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return i;
            }
        }
        self.weights.len() - 1
    }
}

/// Fits a reweighted categorical over a discrete domain (categorical or integer range).
pub fn fit_categorical(
    observations: &[Value],
    domain: &ParamDomain,
    smoothing: f64,
) -> Result<ParzenCategorical, TpeError> {
    let k = domain.cardinality().ok_or_else(|| TpeError::ObservationOutOfDomain {
        node: String::new(),
        value: "continuous domain".into(),
    })?;
    let mut counts = vec![0.0; k];
    for obs in observations {
        let i = domain.index_of(obs).ok_or_else(|| TpeError::ObservationOutOfDomain {
            node: String::new(),
            value: obs.to_string(),
        })?;
        counts[i] += 1.0;
    }
    let total = smoothing * k as f64 + observations.len() as f64;
    let weights = counts.iter().map(|c| (smoothing + c) / total).collect();
    Ok(ParzenCategorical { weights, smoothing })
}

/// Equally weighted mixture of Gaussians truncated to `[lo, hi]`, one per
/// observation plus a prior component at the midpoint with width `hi - lo`.
///
/// All coordinates are estimation coordinates (log10 for log-scale nodes).
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenContinuous {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
    /// Probability mass of each untruncated component inside `[lo, hi]`.
    masses: Vec<f64>,
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl ParzenContinuous {
    /// Number of mixture components, including the prior one.
    pub fn n_components(&self) -> usize {
        self.centers.len()
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&x) {
            return 0.0;
        }
        let n = self.centers.len() as f64;
        self.centers
            .iter()
            .zip(&self.widths)
            .zip(&self.masses)
            .map(|((&mu, &sigma), &mass)| normal_pdf((x - mu) / sigma) / (sigma * mass))
            .sum::<f64>()
            / n
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = rng.random_range(0..self.centers.len());
        let (mu, sigma) = (self.centers[k], self.widths[k]);
        // Each component keeps at least ~a third of its mass inside the bounds.
        for _ in 0..10_000 {
            let z: f64 = StandardNormal.sample(rng);
            let x = mu + sigma * z;
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

/// Fits a truncated-Gaussian mixture. Each observation's width is the larger
/// of the distances to its neighbors, with the bounds acting as outermost
/// neighbors, clipped to `[1e-3 * (hi - lo), hi - lo]`.
pub fn fit_continuous(observations: &[f64], lo: f64, hi: f64) -> Result<ParzenContinuous, TpeError> {
    if let Some(x) = observations.iter().find(|x| !(lo..=hi).contains(*x)) {
        return Err(TpeError::ObservationOutOfDomain {
            node: String::new(),
            value: x.to_string(),
        });
    }
    let range = hi - lo;
    let mut centers = observations.to_vec();
    centers.sort_by(f64::total_cmp);
    let mut widths: Vec<f64> = (0..centers.len())
        .map(|i| {
            let left = if i == 0 { lo } else { centers[i - 1] };
            let right = centers.get(i + 1).copied().unwrap_or(hi);
            (centers[i] - left).max(right - centers[i]).clamp(1e-3 * range, range)
        })
        .collect();
    centers.push(0.5 * (lo + hi));
    widths.push(range);
    let masses = centers
        .iter()
        .zip(&widths)
        .map(|(&mu, &sigma)| normal_cdf((hi - mu) / sigma) - normal_cdf((lo - mu) / sigma))
        .collect();
    Ok(ParzenContinuous { centers, widths, lo, hi, masses })
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeModel {
    Categorical(ParzenCategorical),
    Continuous(ParzenContinuous),
}

/// Per-node density estimators for one population, aligned with the space's nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct ParzenModel {
    pub nodes: Vec<Option<NodeModel>>,
}

impl ParzenModel {
    /// Fits every node from the records where it is active.
    pub fn fit(space: &ConfigSpace, records: &[TrialRecord], smoothing: f64) -> Result<Self, TpeError> {
        let with_node = |e: TpeError, name: &str| match e {
            TpeError::ObservationOutOfDomain { value, .. } => {
                TpeError::ObservationOutOfDomain { node: name.to_string(), value }
            }
            other => other,
        };
        let nodes = space
            .nodes()
            .iter()
            .map(|node| {
                let obs: Vec<&Value> =
                    records.iter().filter_map(|r| r.assignment.get(&node.name)).collect();
                let model = match &node.domain {
                    d @ ParamDomain::Continuous { .. } => {
                        let (lo, hi) = d.estimation_bounds().unwrap();
                        let xs = obs
                            .iter()
                            .map(|v| match v {
                                Value::Real(x) => Ok(d.to_estimation(*x)),
                                other => Err(TpeError::ObservationOutOfDomain {
                                    node: node.name.clone(),
                                    value: other.to_string(),
                                }),
                            })
                            .collect::<Result<Vec<_>, _>>()?;
                        NodeModel::Continuous(fit_continuous(&xs, lo, hi).map_err(|e| with_node(e, &node.name))?)
                    }
                    d => {
                        let owned: Vec<Value> = obs.into_iter().cloned().collect();
                        NodeModel::Categorical(
                            fit_categorical(&owned, d, smoothing).map_err(|e| with_node(e, &node.name))?,
                        )
                    }
                };
                Ok(Some(model))
            })
            .collect::<Result<Vec<_>, TpeError>>()?;
        Ok(Self { nodes })
    }

    /// Log density of one node's value.
    fn node_log_density(&self, space: &ConfigSpace, pos: usize, value: &Value) -> Result<f64, TpeError> {
        let node = &space.nodes()[pos];
        let model = self
            .nodes
            .get(pos)
            .and_then(|m| m.as_ref())
            .ok_or_else(|| TpeError::MissingModel(node.name.clone()))?;
        Ok(match (model, value) {
            (NodeModel::Categorical(c), v) => node
                .domain
                .index_of(v)
                .map(|i| c.probability(i).ln())
                .unwrap_or(f64::NEG_INFINITY),
            (NodeModel::Continuous(c), Value::Real(x)) => c.density(node.domain.to_estimation(*x)).ln(),
            (NodeModel::Continuous(_), _) => f64::NEG_INFINITY,
        })
    }
}

/// Log of [`path_density`].
pub fn log_path_density(space: &ConfigSpace, models: &ParzenModel, a: &Assignment) -> Result<f64, TpeError> {
    let mut total = 0.0;
    for (pos, node) in space.nodes().iter().enumerate() {
        if let Some(v) = a.get(&node.name) {
            total += models.node_log_density(space, pos, v)?;
        }
    }
    Ok(total)
}

/// Product of per-node densities over the nodes active in `a`. Continuous
/// nodes are evaluated in estimation coordinates.
pub fn path_density(space: &ConfigSpace, models: &ParzenModel, a: &Assignment) -> Result<f64, TpeError> {
    space.validate_assignment(a).map_err(|v| TpeError::Space(crate::space::SpaceError::InvalidAssignment(v)))?;
    log_path_density(space, models, a).map(f64::exp)
}

/// `(gamma + (p_below / p_above) * (1 - gamma))^-1`.
pub fn ei_score(p_below: f64, p_above: f64, gamma: f64) -> Result<f64, TpeError> {
    if p_above <= 0.0 || !p_above.is_finite() {
        return Err(TpeError::DegenerateDensity);
    }
    Ok(1.0 / (gamma + (p_below / p_above) * (1.0 - gamma)))
}

/// [`ei_score`] from log densities; avoids underflow of long path products.
pub fn ei_score_log(log_below: f64, log_above: f64, gamma: f64) -> Result<f64, TpeError> {
    if log_above == f64::NEG_INFINITY || log_above.is_nan() {
        return Err(TpeError::DegenerateDensity);
    }
    let ratio = (log_below - log_above).exp();
    Ok(1.0 / (gamma + ratio * (1.0 - gamma)))
}

/// Draws one assignment from the above densities, root to leaf.
pub fn sample_candidate<R: Rng + ?Sized>(
    space: &ConfigSpace,
    above: &ParzenModel,
    rng: &mut R,
) -> Result<Assignment, TpeError> {
    let mut a = Assignment::new();
    for (pos, node) in space.nodes().iter().enumerate() {
        if !space.is_active_given(node, &a) {
            continue;
        }
        let model = above
            .nodes
            .get(pos)
            .and_then(|m| m.as_ref())
            .ok_or_else(|| TpeError::MissingModel(node.name.clone()))?;
        let v = match model {
            NodeModel::Categorical(c) => node.domain.value_at(c.sample(rng)).unwrap(),
            NodeModel::Continuous(c) => Value::Real(node.domain.from_estimation(c.sample(rng))),
        };
        a.insert(node.name.clone(), v);
    }
    Ok(a)
}

/// Outcome of one [`suggest_detailed`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    pub assignment: Assignment,
    /// Split quantile of the surrogate, `None` for prior samples.
    pub y_star: Option<f64>,
    /// Acquisition score of the chosen candidate, `None` for prior samples.
    pub score: Option<f64>,
}

pub fn suggest<R: Rng + ?Sized>(
    space: &ConfigSpace,
    history: &[TrialRecord],
    params: &TpeParams,
    rng: &mut R,
) -> Result<Assignment, TpeError> {
    suggest_detailed(space, history, params, rng).map(|s| s.assignment)
}

/// Proposes the next assignment to evaluate.
///
/// With fewer than `n_startup` trials this is a prior sample. Otherwise the
/// history is split, both populations are fitted and the best-scoring
/// candidate is returned (the first one on ties). A degenerate above density
/// falls back to a prior sample.
pub fn suggest_detailed<R: Rng + ?Sized>(
    space: &ConfigSpace,
    history: &[TrialRecord],
    params: &TpeParams,
    rng: &mut R,
) -> Result<Suggestion, TpeError> {
    params.validate()?;
    if history.is_empty() || history.len() < params.n_startup {
        return Ok(Suggestion { assignment: space.sample_prior(rng), y_star: None, score: None });
    }
    let split = split_history(history, params.gamma)?;
    let below = ParzenModel::fit(space, &split.below, params.smoothing)?;
    let above = ParzenModel::fit(space, &split.above, params.smoothing)?;

    let candidates = match params.candidates {
        CandidateSource::Sample => (0..params.n_candidates)
            .map(|_| sample_candidate(space, &above, rng))
            .collect::<Result<Vec<_>, _>>()?,
        CandidateSource::Enumerate => space.enumerate().ok_or(TpeError::NotEnumerable)?,
    };

    let mut best: Option<(f64, Assignment)> = None;
    for candidate in candidates {
        let lb = log_path_density(space, &below, &candidate)?;
        let la = log_path_density(space, &above, &candidate)?;
        let score = match ei_score_log(lb, la, params.gamma) {
            Ok(s) => s,
            Err(TpeError::DegenerateDensity) => continue,
            Err(e) => return Err(e),
        };
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, candidate));
        }
    }
    match best {
        Some((score, assignment)) => Ok(Suggestion {
            assignment,
            y_star: Some(split.y_star),
            score: Some(score),
        }),
        None => {
            log::warn!("all candidates had degenerate above density; using a prior sample");
            Ok(Suggestion { assignment: space.sample_prior(rng), y_star: Some(split.y_star), score: None })
        }
    }
}
