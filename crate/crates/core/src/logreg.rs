//! Multinomial logistic regression with an l1 or squared-l2 penalty.
//!
//! The objective is `penalty(w) + C * sum_i -log softmax(W x_i + b)[y_i]`
//! with `penalty = ||w||_1` or `0.5 * ||w||_2^2`. Per-class intercepts are
//! not penalized. Both penalties are minimized by an orthant-wise limited
//! memory quasi-Newton method, which is plain L-BFGS when no l1 term is present.

use std::collections::VecDeque;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::data::{escape_field, unescape_field};
use crate::textrep::SparseVector;

#[derive(Debug, Error)]
pub enum LogregError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("label index {label} out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("non-finite value in objective")]
    NonFinite,
    #[error("empty dataset")]
    EmptyData,
    #[error("need at least one class label")]
    NoLabels,
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("unknown penalty {0:?}")]
    UnknownPenalty(String),
    #[error("malformed model file at line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Penalty {
    L1,
    L2,
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        })
    }
}

impl FromStr for Penalty {
    type Err = LogregError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "l1" | "ℓ1" => Ok(Penalty::L1),
            "l2" | "ℓ2" => Ok(Penalty::L2),
            other => Err(LogregError::UnknownPenalty(other.to_string())),
        }
    }
}

/// How `strength` enters the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum StrengthConvention {
    /// `penalty + strength * loss` (strength is the inverse regularization `C`).
    #[default]
    LossWeight,
    /// `strength * penalty + loss`.
    PenaltyWeight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub penalty: Penalty,
    pub strength: f64,
    /// Stop when `||grad||_inf <= tolerance * ||grad at w = 0||_inf`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub convention: StrengthConvention,
}

impl TrainConfig {
    pub fn new(penalty: Penalty, strength: f64, tolerance: f64) -> Result<Self, LogregError> {
        let c = Self {
            penalty,
            strength,
            tolerance,
            max_iterations: 1000,
            convention: StrengthConvention::LossWeight,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), LogregError> {
        if !(1e-5..=1e5).contains(&self.strength) {
            return Err(LogregError::InvalidConfig(format!(
                "strength {} outside [1e-5, 1e5]",
                self.strength
            )));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(LogregError::InvalidConfig(format!(
                "tolerance {} outside (0, 1)",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(LogregError::InvalidConfig("max_iterations must be positive".into()));
        }
        Ok(())
    }

    /// `(loss weight, penalty weight)`.
    fn weights(&self) -> (f64, f64) {
        match self.convention {
            StrengthConvention::LossWeight => (self.strength, 1.0),
            StrengthConvention::PenaltyWeight => (1.0, self.strength),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub x: SparseVector,
    /// Index into the label set.
    pub label: usize,
}

/// Training data with its feature dimension and class count.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub data: &'a [Example],
    pub dim: usize,
    pub n_classes: usize,
}

impl Problem<'_> {
    /// Length of the flat parameter vector: per class `dim` weights then one intercept.
    pub fn n_params(&self) -> usize {
        self.n_classes * (self.dim + 1)
    }

    fn check(&self) -> Result<(), LogregError> {
        for ex in self.data {
            if ex.x.dim != self.dim {
                return Err(LogregError::DimensionMismatch { expected: self.dim, got: ex.x.dim });
            }
            if ex.label >= self.n_classes {
                return Err(LogregError::LabelOutOfRange { label: ex.label, n_classes: self.n_classes });
            }
        }
        Ok(())
    }

    fn is_intercept(&self, j: usize) -> bool {
        j % (self.dim + 1) == self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// False for l1: the gradient covers the smooth loss only and the solver
    /// handles the non-differentiable penalty.
    pub gradient_includes_penalty: bool,
}

/// Weighted loss and its gradient, without any penalty.
fn loss_and_gradient(w: &[f64], problem: &Problem, loss_weight: f64, grad: &mut [f64]) -> f64 {
    let stride = problem.dim + 1;
    let k = problem.n_classes;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut scores = vec![0.0; k];
    let mut total = 0.0;
    for ex in problem.data {
        for (c, s) in scores.iter_mut().enumerate() {
            let row = &w[c * stride..(c + 1) * stride];
            *s = ex.x.dot(row) + row[problem.dim];
        }
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let lse = max + sum.ln();
        total += lse - scores[ex.label];
        for (c, &s) in scores.iter().enumerate() {
            let p = (s - lse).exp();
            let r = loss_weight * (p - if c == ex.label { 1.0 } else { 0.0 });
            if r == 0.0 {
                continue;
            }
            let row = &mut grad[c * stride..(c + 1) * stride];
            for (i, v) in ex.x.iter() {
                row[i] += r * v;
            }
            row[problem.dim] += r;
        }
    }
    loss_weight * total
}

fn penalty_value(w: &[f64], problem: &Problem, penalty: Penalty) -> f64 {
    w.iter()
        .enumerate()
        .filter(|(j, _)| !problem.is_intercept(*j))
        .map(|(_, v)| match penalty {
            Penalty::L1 => v.abs(),
            Penalty::L2 => 0.5 * v * v,
        })
        .sum()
}

/// Objective value and gradient at flat weights `w` (see [`Problem::n_params`]).
pub fn objective_and_gradient(w: &[f64], problem: &Problem, config: &TrainConfig) -> Result<Evaluation, LogregError> {
    if w.len() != problem.n_params() {
        return Err(LogregError::DimensionMismatch { expected: problem.n_params(), got: w.len() });
    }
    problem.check()?;
    let (loss_weight, penalty_weight) = config.weights();
    let mut gradient = vec![0.0; w.len()];
    let loss = loss_and_gradient(w, problem, loss_weight, &mut gradient);
    let value = penalty_weight * penalty_value(w, problem, config.penalty) + loss;
    if config.penalty == Penalty::L2 {
        for (j, g) in gradient.iter_mut().enumerate() {
            if !problem.is_intercept(j) {
                *g += penalty_weight * w[j];
            }
        }
    }
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        return Err(LogregError::NonFinite);
    }
    Ok(Evaluation { value, gradient, gradient_includes_penalty: config.penalty == Penalty::L2 })
}

/// Trained per-class weights. Scores are `w_o . x + b_o`.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub labels: Vec<String>,
    pub weights: Vec<Vec<f64>>,
    pub intercepts: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: Model,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
}

impl Model {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn zeros(labels: Vec<String>, dim: usize) -> Self {
        let k = labels.len();
        Self { labels, weights: vec![vec![0.0; dim]; k], intercepts: vec![0.0; k] }
    }

    fn from_flat(labels: Vec<String>, dim: usize, w: &[f64]) -> Self {
        let stride = dim + 1;
        let weights = w.chunks(stride).map(|r| r[..dim].to_vec()).collect();
        let intercepts = w.chunks(stride).map(|r| r[dim]).collect();
        Self { labels, weights, intercepts }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.intercepts)
            .flat_map(|(w, b)| w.iter().copied().chain(std::iter::once(*b)))
            .collect()
    }

    pub fn scores(&self, x: &SparseVector) -> Vec<f64> {
        self.weights.iter().zip(&self.intercepts).map(|(w, b)| x.dot(w) + b).collect()
    }

    /// Index of the highest-scoring class; ties go to the earliest label.
    pub fn predict_index(&self, x: &SparseVector) -> usize {
        let scores = self.scores(x);
        let mut best = 0;
        for (i, s) in scores.iter().enumerate() {
            if *s > scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn predict(&self, x: &SparseVector) -> &str {
        &self.labels[self.predict_index(x)]
    }

    /// Writes the model as text:
    ///
    /// ```text
    /// textsmbo-model 1
    /// classes <K>
    /// dim <N>
    /// label <escaped label>      (K lines)
    /// <intercept> <w_1> ... <w_N> (K lines)
    /// ```
    pub fn write_to(&self, mut out: impl Write) -> Result<(), LogregError> {
        writeln!(out, "textsmbo-model 1")?;
        writeln!(out, "classes {}", self.labels.len())?;
        writeln!(out, "dim {}", self.dim())?;
        for l in &self.labels {
            writeln!(out, "label {}", escape_field(l))?;
        }
        for (w, b) in self.weights.iter().zip(&self.intercepts) {
            write!(out, "{b}")?;
            for v in w {
                write!(out, " {v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_from(input: impl BufRead) -> Result<Self, LogregError> {
        let mut lines = input.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, String), LogregError> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(LogregError::Format { line: 0, reason: format!("missing {what}") }),
            }
        };
        let bad = |line: usize, reason: &str| LogregError::Format { line, reason: reason.to_string() };
        let (n, header) = next("header")?;
        if header != "textsmbo-model 1" {
            return Err(bad(n, "unknown header"));
        }
        let mut field = |key: &str| -> Result<usize, LogregError> {
            let (n, l) = next(key)?;
            l.strip_prefix(key)
                .and_then(|r| r.trim().parse().ok())
                .ok_or_else(|| bad(n, &format!("expected `{key} <count>`")))
        };
        let k = field("classes")?;
        let dim = field("dim")?;
        let mut labels = Vec::with_capacity(k);
        for _ in 0..k {
            let (n, l) = next("label")?;
            let raw = l.strip_prefix("label ").ok_or_else(|| bad(n, "expected `label <name>`"))?;
            labels.push(unescape_field(raw).map_err(|e| bad(n, &e))?);
        }
        let mut weights = Vec::with_capacity(k);
        let mut intercepts = Vec::with_capacity(k);
        for _ in 0..k {
            let (n, l) = next("weights")?;
            let vals = l
                .split(' ')
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(n, "non-numeric weight"))?;
            if vals.len() != dim + 1 {
                return Err(bad(n, "wrong number of weights"));
            }
            intercepts.push(vals[0]);
            weights.push(vals[1..].to_vec());
        }
        Ok(Self { labels, weights, intercepts })
    }
}

const HISTORY: usize = 10;

/// Steepest-descent direction for `F = smooth + sum_j l1_j |w_j|`.
fn pseudo_gradient(w: &[f64], g: &[f64], l1: &[f64], out: &mut [f64]) {
    for j in 0..w.len() {
        out[j] = if l1[j] == 0.0 {
            g[j]
        } else if w[j] > 0.0 {
            g[j] + l1[j]
        } else if w[j] < 0.0 {
            g[j] - l1[j]
        } else if g[j] + l1[j] < 0.0 {
            g[j] + l1[j]
        } else if g[j] - l1[j] > 0.0 {
            g[j] - l1[j]
        } else {
            0.0
        };
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Two-loop recursion: returns `-H * v`.
fn lbfgs_direction(v: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = v.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y, rho) in memory.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = memory.back() {
        let scale = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|qi| *qi *= scale);
    }
    for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|qi| *qi = -*qi);
    q
}

/// Fits the model from `w = 0`. Deterministic: no randomization or shuffling.
///
/// Hitting `max_iterations` (or a line search that cannot make progress)
/// returns the current model with `converged = false`.
pub fn train(data: &[Example], config: &TrainConfig, dim: usize, labels: &[String]) -> Result<Fit, LogregError> {
    config.validate()?;
    if data.is_empty() {
        return Err(LogregError::EmptyData);
    }
    if labels.is_empty() {
        return Err(LogregError::NoLabels);
    }
    let problem = Problem { data, dim, n_classes: labels.len() };
    problem.check()?;
    let n = problem.n_params();
    let (loss_weight, penalty_weight) = config.weights();

    // Coordinates whose penalty is handled by the orthant-wise machinery.
    let l1: Vec<f64> = (0..n)
        .map(|j| {
            if config.penalty == Penalty::L1 && !problem.is_intercept(j) {
                penalty_weight
            } else {
                0.0
            }
        })
        .collect();
    let smooth = |w: &[f64], g: &mut [f64]| -> f64 {
        let mut f = loss_and_gradient(w, &problem, loss_weight, g);
        if config.penalty == Penalty::L2 {
            for j in 0..w.len() {
                if !problem.is_intercept(j) {
                    f += 0.5 * penalty_weight * w[j] * w[j];
                    g[j] += penalty_weight * w[j];
                }
            }
        }
        f
    };
    let l1_term = |w: &[f64]| -> f64 { w.iter().zip(&l1).map(|(x, c)| c * x.abs()).sum() };

    let mut w = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut f = smooth(&w, &mut g);
    let mut objective = f + l1_term(&w);
    let mut pg = vec![0.0; n];
    pseudo_gradient(&w, &g, &l1, &mut pg);
    let initial_norm = inf_norm(&pg);
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(HISTORY);
    let mut converged = initial_norm == 0.0;
    let mut iterations = 0;
    let mut w_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    while !converged && iterations < config.max_iterations {
        if inf_norm(&pg) <= config.tolerance * initial_norm {
            converged = true;
            break;
        }
        iterations += 1;
        let mut d = lbfgs_direction(&pg, &memory);
        for j in 0..n {
            if l1[j] > 0.0 && d[j] * pg[j] >= 0.0 {
                d[j] = 0.0;
            }
        }
        if dot(&d, &pg) >= 0.0 {
            memory.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let orthant: Vec<f64> = (0..n)
            .map(|j| if w[j] != 0.0 { w[j].signum() } else { -pg[j].signum() })
            .collect();

        let mut step = if memory.is_empty() { 1.0 / d.iter().map(|v| v * v).sum::<f64>().sqrt() } else { 1.0 };
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..n {
                let x = w[j] + step * d[j];
                w_new[j] = if l1[j] > 0.0 && x * orthant[j] <= 0.0 { 0.0 } else { x };
            }
            let f_new = smooth(&w_new, &mut g_new);
            let obj_new = f_new + l1_term(&w_new);
            let decrease: f64 = (0..n).map(|j| pg[j] * (w_new[j] - w[j])).sum();
            if obj_new.is_finite() && obj_new <= objective + 1e-4 * decrease {
                accepted = obj_new < objective;
                if accepted {
                    let s: Vec<f64> = (0..n).map(|j| w_new[j] - w[j]).collect();
                    let y: Vec<f64> = (0..n).map(|j| g_new[j] - g[j]).collect();
                    let sy = dot(&s, &y);
                    if sy > 1e-12 * dot(&y, &y).max(f64::MIN_POSITIVE) {
                        if memory.len() == HISTORY {
                            memory.pop_front();
                        }
                        memory.push_back((s, y, 1.0 / sy));
                    }
                    std::mem::swap(&mut w, &mut w_new);
                    std::mem::swap(&mut g, &mut g_new);
                    f = f_new;
                    objective = obj_new;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            log::debug!("line search made no progress after {iterations} iterations");
            break;
        }
        pseudo_gradient(&w, &g, &l1, &mut pg);
    }
    if !converged && inf_norm(&pg) <= config.tolerance * initial_norm {
        converged = true;
    }
    if !f.is_finite() {
        return Err(LogregError::NonFinite);
    }
    if !converged {
        log::warn!("logistic regression did not converge in {iterations} iterations");
    }
    Ok(Fit { model: Model::from_flat(labels.to_vec(), dim, &w), converged, iterations, objective })
}

/// Fraction of examples whose predicted class matches the label.
pub fn evaluate_accuracy(model: &Model, data: &[Example]) -> Result<f64, LogregError> {
    if data.is_empty() {
        return Err(LogregError::EmptyData);
    }
    let correct = data.iter().filter(|ex| model.predict_index(&ex.x) == ex.label).count();
    Ok(correct as f64 / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn labels(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    fn sv(dim: usize, pairs: &[(usize, f64)]) -> SparseVector {
        SparseVector::from_pairs(dim, pairs.to_vec())
    }

    fn random_problem(rng: &mut ChaCha8Rng, n: usize, dim: usize, k: usize) -> Vec<Example> {
        (0..n)
            .map(|_| {
                let mut pairs = Vec::new();
                for i in 0..dim {
                    if rng.random_bool(0.4) {
                        pairs.push((i, rng.random_range(-2.0..2.0)));
                    }
                }
                Example { x: sv(dim, &pairs), label: rng.random_range(0..k) }
            })
            .collect()
    }

    fn toy() -> Vec<Example> {
        vec![
            Example { x: sv(2, &[(0, 1.0)]), label: 0 },
            Example { x: sv(2, &[(1, 1.0)]), label: 1 },
        ]
    }

    #[test]
    fn zero_weights_two_classes() {
        let data = vec![Example { x: sv(3, &[(0, 2.0), (2, -1.0)]), label: 1 }];
        let problem = Problem { data: &data, dim: 3, n_classes: 2 };
        let c = 3.0;
        let cfg = TrainConfig::new(Penalty::L2, c, 1e-4).unwrap();
        let e = objective_and_gradient(&[0.0; 8], &problem, &cfg).unwrap();
        assert!((e.value - c * 2f64.ln()).abs() < 1e-12);
        // True class is 1: its block starts at index 4.
        assert!((e.gradient[4] + c * 0.5 * 2.0).abs() < 1e-12);
        assert!((e.gradient[6] - c * 0.5).abs() < 1e-12);
        assert!((e.gradient[0] - c * 0.5 * 2.0).abs() < 1e-12);
        assert!(e.gradient_includes_penalty);
    }

    #[test]
    fn loss_is_linear_in_strength() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data = random_problem(&mut rng, 10, 4, 3);
        let problem = Problem { data: &data, dim: 4, n_classes: 3 };
        let w: Vec<f64> = (0..15).map(|_| rng.random_range(-1.0..1.0)).collect();
        for penalty in [Penalty::L1, Penalty::L2] {
            let a = TrainConfig::new(penalty, 2.0, 1e-4).unwrap();
            let b = TrainConfig::new(penalty, 4.0, 1e-4).unwrap();
            let pen = penalty_value(&w, &problem, penalty);
            let va = objective_and_gradient(&w, &problem, &a).unwrap().value - pen;
            let vb = objective_and_gradient(&w, &problem, &b).unwrap().value - pen;
            assert!((vb - 2.0 * va).abs() < 1e-9 * vb.abs());
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..25 {
            let dim = rng.random_range(1..=8);
            let k = rng.random_range(2..=4);
            let data = random_problem(&mut rng, 12, dim, k);
            let problem = Problem { data: &data, dim, n_classes: k };
            let w: Vec<f64> = (0..problem.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
            for penalty in [Penalty::L1, Penalty::L2] {
                let cfg = TrainConfig::new(penalty, rng.random_range(0.1..5.0), 1e-4).unwrap();
                let smooth = |w: &[f64]| {
                    let e = objective_and_gradient(w, &problem, &cfg).unwrap();
                    if e.gradient_includes_penalty { e.value } else { e.value - penalty_value(w, &problem, penalty) }
                };
                let g = objective_and_gradient(&w, &problem, &cfg).unwrap().gradient;
                let h = 1e-6;
                let fd: Vec<f64> = (0..w.len())
                    .map(|j| {
                        let mut p = w.clone();
                        let mut m = w.clone();
                        p[j] += h;
                        m[j] -= h;
                        (smooth(&p) - smooth(&m)) / (2.0 * h)
                    })
                    .collect();
                let err: f64 = g.iter().zip(&fd).fold(0.0, |a, (x, y)| a.max((x - y).abs()));
                let scale = inf_norm(&g).max(inf_norm(&fd));
                assert!(err / scale <= 1e-5, "relative error {}", err / scale);
            }
        }
    }

    #[test]
    fn separable_toy_reaches_full_accuracy() {
        let cfg = TrainConfig::new(Penalty::L2, 100.0, 1e-4).unwrap();
        let fit = train(&toy(), &cfg, 2, &labels(2)).unwrap();
        assert_eq!(evaluate_accuracy(&fit.model, &toy()).unwrap(), 1.0);
        assert_eq!(fit.model.predict(&sv(2, &[(0, 1.0)])), "c0");
    }

    #[test]
    fn tiny_l1_strength_gives_zero_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = random_problem(&mut rng, 30, 6, 3);
        let cfg = TrainConfig::new(Penalty::L1, 1e-5, 1e-4).unwrap();
        // At w = 0 the loss gradient is at most C * max|x| < 1, so zero is optimal.
        let bound = 1e-5 * data.iter().map(|e| e.x.max_abs()).fold(0.0, f64::max) * data.len() as f64;
        assert!(bound < 1.0);
        let fit = train(&data, &cfg, 6, &labels(3)).unwrap();
        assert!(fit.model.weights.iter().flatten().all(|w| w.abs() < 1e-3));
        assert!(fit.model.weights.iter().flatten().all(|w| *w == 0.0));
    }

    #[test]
    fn training_decreases_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let data = random_problem(&mut rng, 40, 5, 3);
        let problem = Problem { data: &data, dim: 5, n_classes: 3 };
        for penalty in [Penalty::L1, Penalty::L2] {
            let cfg = TrainConfig::new(penalty, 1.0, 1e-5).unwrap();
            let at_zero = objective_and_gradient(&[0.0; 18], &problem, &cfg).unwrap().value;
            let fit = train(&data, &cfg, 5, &labels(3)).unwrap();
            let at_fit = objective_and_gradient(&fit.model.to_flat(), &problem, &cfg).unwrap().value;
            assert!(at_fit <= at_zero);
            assert!((at_fit - fit.objective).abs() <= 1e-9 * at_fit.abs().max(1.0));
            assert!(fit.converged);
        }
    }

    #[test]
    fn tighter_tolerance_never_worse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let data = random_problem(&mut rng, 50, 8, 3);
            for penalty in [Penalty::L1, Penalty::L2] {
                let strength = 10f64.powf(rng.random_range(-2.0..3.0));
                let loose = train(&data, &TrainConfig::new(penalty, strength, 1e-3).unwrap(), 8, &labels(3)).unwrap();
                let tight = train(&data, &TrainConfig::new(penalty, strength, 1e-5).unwrap(), 8, &labels(3)).unwrap();
                assert!(tight.objective <= loose.objective + 1e-8);
            }
        }
    }

    #[test]
    fn objective_is_convex() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data = random_problem(&mut rng, 20, 5, 3);
        let problem = Problem { data: &data, dim: 5, n_classes: 3 };
        for penalty in [Penalty::L1, Penalty::L2] {
            let cfg = TrainConfig::new(penalty, 2.0, 1e-4).unwrap();
            for _ in 0..50 {
                let a: Vec<f64> = (0..18).map(|_| rng.random_range(-3.0..3.0)).collect();
                let b: Vec<f64> = (0..18).map(|_| rng.random_range(-3.0..3.0)).collect();
                let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
                let f = |w: &[f64]| objective_and_gradient(w, &problem, &cfg).unwrap().value;
                assert!(f(&mid) <= 0.5 * (f(&a) + f(&b)) + 1e-9);
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = random_problem(&mut rng, 30, 6, 2);
        let cfg = TrainConfig::new(Penalty::L1, 3.0, 1e-5).unwrap();
        let a = train(&data, &cfg, 6, &labels(2)).unwrap();
        let b = train(&data, &cfg, 6, &labels(2)).unwrap();
        let bits = |m: &Model| m.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.model), bits(&b.model));
    }

    #[test]
    fn penalty_weight_convention_matches_inverse_strength() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data = random_problem(&mut rng, 30, 4, 2);
        let c = TrainConfig::new(Penalty::L2, 4.0, 1e-8).unwrap();
        let lambda = TrainConfig { strength: 0.25, convention: StrengthConvention::PenaltyWeight, ..c };
        let a = train(&data, &c, 4, &labels(2)).unwrap().model.to_flat();
        let b = train(&data, &lambda, 4, &labels(2)).unwrap().model.to_flat();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-5, "{x} vs {y}");
        }
    }

    #[test]
    fn prediction_rules() {
        let m = Model {
            labels: labels(2),
            weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            intercepts: vec![0.0, 0.0],
        };
        assert_eq!(m.predict(&sv(2, &[(0, 1.0)])), "c0");
        assert_eq!(Model::zeros(labels(3), 4).predict(&sv(4, &[(1, 2.0)])), "c0");

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = Model {
            labels: labels(3),
            weights: (0..3).map(|_| (0..5).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
            intercepts: vec![0.1, -0.2, 0.3],
        };
        let shift: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut shifted = m.clone();
        for w in &mut shifted.weights {
            w.iter_mut().zip(&shift).for_each(|(a, b)| *a += b);
        }
        for ex in random_problem(&mut rng, 50, 5, 3) {
            assert_eq!(m.predict(&ex.x), shifted.predict(&ex.x));
        }
    }

    #[test]
    fn accuracy_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let data = random_problem(&mut rng, 60, 5, 3);
        let fit = train(&data, &TrainConfig::new(Penalty::L2, 1.0, 1e-4).unwrap(), 5, &labels(3)).unwrap();
        let mut confusion = [[0usize; 3]; 3];
        for ex in &data {
            confusion[ex.label][fit.model.predict_index(&ex.x)] += 1;
        }
        let diag: usize = (0..3).map(|i| confusion[i][i]).sum();
        assert_eq!(evaluate_accuracy(&fit.model, &data).unwrap(), diag as f64 / 60.0);
        assert!(evaluate_accuracy(&fit.model, &[]).is_err());

        let balanced: Vec<Example> = (0..10).map(|i| Example { x: sv(5, &[]), label: i % 2 }).collect();
        assert_eq!(evaluate_accuracy(&Model::zeros(labels(2), 5), &balanced).unwrap(), 0.5);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = TrainConfig::new(Penalty::L2, 1.0, 1e-4).unwrap();
        assert!(matches!(train(&[], &cfg, 2, &labels(2)), Err(LogregError::EmptyData)));
        assert!(matches!(train(&toy(), &cfg, 3, &labels(2)), Err(LogregError::DimensionMismatch { .. })));
        assert!(matches!(train(&toy(), &cfg, 2, &labels(1)), Err(LogregError::LabelOutOfRange { .. })));
        assert!(TrainConfig::new(Penalty::L2, 0.0, 1e-4).is_err());
        assert!(TrainConfig::new(Penalty::L2, 1.0, 1.0).is_err());
        let problem = Problem { data: &[], dim: 2, n_classes: 2 };
        assert!(objective_and_gradient(&[0.0; 5], &problem, &cfg).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Model {
            labels: vec!["pos".into(), "neg\tx\\y".into()],
            weights: (0..2).map(|_| (0..4).map(|_| rng.random_range(-1e3..1e3)).collect()).collect(),
            intercepts: vec![1e-300, -0.1],
        };
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(Model::read_from(&buf[..]).unwrap(), m);
        assert!(Model::read_from(&b"nope\n"[..]).is_err());
    }
}
