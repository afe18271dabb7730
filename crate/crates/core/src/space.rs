//! Tree-structured hyperparameter spaces.
//!
//! A [`ConfigSpace`] is a forest of [`ParamNode`]s. Roots are always active;
//! a child is active when its parent is active and holds one of the child's
//! activating values. An [`Assignment`] holds a value for exactly the active
//! nodes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Space description shipped in `spaces/default.space`.
pub const DEFAULT_SPACE: &str = include_str!("../../../spaces/default.space");

/// Scale used to sample and model a continuous parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log10,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamDomain {
    Categorical(Vec<String>),
    /// Inclusive integer range.
    IntRange { lo: i64, hi: i64 },
    Continuous { lo: f64, hi: f64, scale: Scale },
}

impl ParamDomain {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, ParamDomain::Continuous { .. })
    }

    /// Number of distinct values of a discrete domain.
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ParamDomain::Categorical(c) => Some(c.len()),
            ParamDomain::IntRange { lo, hi } => Some((hi - lo + 1) as usize),
            ParamDomain::Continuous { .. } => None,
        }
    }

    /// Position of `value` among the discrete values, if it belongs to the domain.
    pub fn index_of(&self, value: &Value) -> Option<usize> {
        match (self, value) {
            (ParamDomain::Categorical(c), Value::Choice(s)) => c.iter().position(|x| x == s),
            (ParamDomain::IntRange { lo, hi }, Value::Int(v)) if lo <= v && v <= hi => {
                Some((v - lo) as usize)
            }
            _ => None,
        }
    }

    /// Inverse of [`ParamDomain::index_of`].
    pub fn value_at(&self, index: usize) -> Option<Value> {
        match self {
            ParamDomain::Categorical(c) => c.get(index).map(|s| Value::Choice(s.clone())),
            ParamDomain::IntRange { lo, hi } => {
                let v = lo + index as i64;
                (v <= *hi).then_some(Value::Int(v))
            }
            ParamDomain::Continuous { .. } => None,
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (ParamDomain::Continuous { lo, hi, .. }, Value::Real(v)) => {
                v.is_finite() && lo <= v && v <= hi
            }
            _ => self.index_of(value).is_some(),
        }
    }

    /// Bounds of a continuous domain in estimation coordinates (log10 for log scale).
    pub fn estimation_bounds(&self) -> Option<(f64, f64)> {
        match *self {
            ParamDomain::Continuous { lo, hi, scale } => Some(match scale {
                Scale::Linear => (lo, hi),
                Scale::Log10 => (lo.log10(), hi.log10()),
            }),
            _ => None,
        }
    }

    /// Maps a real value into estimation coordinates.
    pub fn to_estimation(&self, x: f64) -> f64 {
        match self {
            ParamDomain::Continuous { scale: Scale::Log10, .. } => x.log10(),
            _ => x,
        }
    }

    /// Maps estimation coordinates back to the natural value, clamped to the bounds.
    pub fn from_estimation(&self, z: f64) -> f64 {
        match *self {
            ParamDomain::Continuous { lo, hi, scale } => {
                let x = match scale {
                    Scale::Linear => z,
                    Scale::Log10 => 10f64.powf(z),
                };
                x.clamp(lo, hi)
            }
            _ => z,
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            ParamDomain::Categorical(c) => {
                if c.is_empty() {
                    return Err("categorical domain has no choices".into());
                }
                let mut seen = HashSet::new();
                if let Some(dup) = c.iter().find(|x| !seen.insert(*x)) {
                    return Err(format!("duplicate choice {dup:?}"));
                }
            }
            ParamDomain::IntRange { lo, hi } => {
                if lo > hi {
                    return Err(format!("integer range lo {lo} > hi {hi}"));
                }
            }
            ParamDomain::Continuous { lo, hi, scale } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(format!("continuous bounds must satisfy lo < hi (got {lo}, {hi})"));
                }
                if *scale == Scale::Log10 && *lo <= 0.0 {
                    return Err(format!("log10 scale requires lo > 0 (got {lo})"));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for ParamDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamDomain::Categorical(c) => write!(f, "{{{}}}", c.join(",")),
            ParamDomain::IntRange { lo, hi } => {
                let vals: Vec<String> = (*lo..=*hi).map(|v| v.to_string()).collect();
                write!(f, "{{{}}}", vals.join(","))
            }
            ParamDomain::Continuous { lo, hi, scale } => match scale {
                Scale::Linear => write!(f, "[{lo}, {hi}]"),
                Scale::Log10 => write!(f, "[{lo}, {hi}] (log10)"),
            },
        }
    }
}

/// A concrete hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Real(f64),
    Choice(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Real(v) => Some(v),
            Value::Int(v) => Some(v as f64),
            Value::Choice(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match *self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_choice(&self) -> Option<&str> {
        match self {
            Value::Choice(s) => Some(s),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Real(v) => write!(f, "{v}"),
            Value::Choice(s) => f.write_str(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamNode {
    pub name: String,
    pub domain: ParamDomain,
    pub condition: Option<Condition>,
}

impl ParamNode {
    pub fn new(name: impl Into<String>, domain: ParamDomain) -> Self {
        Self { name: name.into(), domain, condition: None }
    }

    pub fn when(mut self, parent: impl Into<String>, values: Vec<Value>) -> Self {
        self.condition = Some(Condition { parent: parent.into(), values });
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpaceError {
    #[error("duplicate node name {0:?}")]
    DuplicateName(String),
    #[error("node {0:?}: condition cycle")]
    Cycle(String),
    #[error("node {node:?}: condition references missing parent {parent:?}")]
    MissingParent { node: String, parent: String },
    #[error("node {node:?}: invalid domain: {reason}")]
    InvalidDomain { node: String, reason: String },
    #[error("node {node:?}: invalid condition: {reason}")]
    InvalidCondition { node: String, reason: String },
    #[error("space has no nodes")]
    Empty,
    #[error("cannot parse space description: {0}")]
    Parse(String),
    #[error("invalid assignment: {}", join_violations(.0))]
    InvalidAssignment(Vec<Violation>),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// A single reason an assignment is not valid for a space.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingActive(String),
    ExtraneousInactive(String),
    UnknownNode(String),
    OutOfDomain { node: String, value: Value, domain: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingActive(n) => write!(f, "{n}: missing active node"),
            Violation::ExtraneousInactive(n) => write!(f, "{n}: extraneous inactive node"),
            Violation::UnknownNode(n) => write!(f, "{n}: unknown node"),
            Violation::OutOfDomain { node, value, domain } => {
                write!(f, "{node} = {value} out of domain {domain}")
            }
        }
    }
}

/// One concrete point in a space, keyed by node name.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment {
    pub values: BTreeMap<String, Value>,
}

impl Assignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.values.get(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Value) -> Option<Value> {
        self.values.insert(name.into(), value)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl<S: Into<String>> FromIterator<(S, Value)> for Assignment {
    fn from_iter<I: IntoIterator<Item = (S, Value)>>(iter: I) -> Self {
        Self { values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect() }
    }
}

/// A validated forest of hyperparameter nodes in topological order.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigSpace {
    nodes: Vec<ParamNode>,
    index: HashMap<String, usize>,
}

impl ConfigSpace {
    /// Validates `nodes` and orders them so every parent precedes its children.
    ///
    /// Nodes keep their relative input order where the condition forest allows it.
    pub fn define(nodes: Vec<ParamNode>) -> Result<Self, SpaceError> {
        if nodes.is_empty() {
            return Err(SpaceError::Empty);
        }
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if by_name.insert(n.name.as_str(), i).is_some() {
                return Err(SpaceError::DuplicateName(n.name.clone()));
            }
            n.domain
                .validate()
                .map_err(|reason| SpaceError::InvalidDomain { node: n.name.clone(), reason })?;
        }
        for n in &nodes {
            let Some(cond) = &n.condition else { continue };
            if cond.parent == n.name {
                return Err(SpaceError::Cycle(n.name.clone()));
            }
            let Some(&p) = by_name.get(cond.parent.as_str()) else {
                return Err(SpaceError::MissingParent {
                    node: n.name.clone(),
                    parent: cond.parent.clone(),
                });
            };
            let parent = &nodes[p];
            if !parent.domain.is_discrete() {
                return Err(SpaceError::InvalidCondition {
                    node: n.name.clone(),
                    reason: format!("parent {:?} is continuous", parent.name),
                });
            }
            if cond.values.is_empty() {
                return Err(SpaceError::InvalidCondition {
                    node: n.name.clone(),
                    reason: "no activating values".into(),
                });
            }
            if let Some(v) = cond.values.iter().find(|v| !parent.domain.contains(v)) {
                return Err(SpaceError::InvalidCondition {
                    node: n.name.clone(),
                    reason: format!("activating value {v} not in parent domain {}", parent.domain),
                });
            }
        }

        // Repeatedly emit the first node whose parent has been emitted.
        let mut placed = vec![false; nodes.len()];
        let mut order = Vec::with_capacity(nodes.len());
        while order.len() < nodes.len() {
            let next = (0..nodes.len()).find(|&i| {
                !placed[i]
                    && nodes[i]
                        .condition
                        .as_ref()
                        .is_none_or(|c| placed[by_name[c.parent.as_str()]])
            });
            match next {
                Some(i) => {
                    placed[i] = true;
                    order.push(i);
                }
                None => {
                    let stuck = (0..nodes.len()).find(|&i| !placed[i]).unwrap();
                    return Err(SpaceError::Cycle(nodes[stuck].name.clone()));
                }
            }
        }
        let mut slots: Vec<Option<ParamNode>> = nodes.into_iter().map(Some).collect();
        let nodes: Vec<ParamNode> = order.into_iter().map(|i| slots[i].take().unwrap()).collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.name.clone(), i)).collect();
        Ok(Self { nodes, index })
    }

    /// Parses the structured text space description (see `spaces/default.space`).
    pub fn from_toml_str(text: &str) -> Result<Self, SpaceError> {
        let file: SpaceFile = toml::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        let nodes = file
            .node
            .into_iter()
            .map(NodeSpec::into_node)
            .collect::<Result<Vec<_>, _>>()?;
        Self::define(nodes)
    }

    pub fn to_toml_string(&self) -> String {
        let file = SpaceFile { node: self.nodes.iter().map(NodeSpec::from_node).collect() };
        toml::to_string(&file).expect("space description serializes")
    }

    pub fn nodes(&self) -> &[ParamNode] {
        &self.nodes
    }

    pub fn node(&self, name: &str) -> Option<&ParamNode> {
        self.index.get(name).map(|&i| &self.nodes[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_fully_discrete(&self) -> bool {
        self.nodes.iter().all(|n| n.domain.is_discrete())
    }

    /// Whether `node` is active given the (partial) values assigned so far.
    ///
    /// Nodes are visited in topological order, so a parent's value is always
    /// present when its child is examined, unless the parent itself is inactive.
    pub fn is_active_given(&self, node: &ParamNode, values: &Assignment) -> bool {
        match &node.condition {
            None => true,
            Some(c) => values.get(&c.parent).is_some_and(|pv| c.values.contains(pv)),
        }
    }

    /// Samples every active node uniformly (log-uniformly on log10 scale).
    pub fn sample_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> Assignment {
        let mut a = Assignment::new();
        for node in &self.nodes {
            if !self.is_active_given(node, &a) {
                continue;
            }
            let v = match &node.domain {
                ParamDomain::Categorical(c) => Value::Choice(c[rng.random_range(0..c.len())].clone()),
                ParamDomain::IntRange { lo, hi } => Value::Int(rng.random_range(*lo..=*hi)),
                d @ ParamDomain::Continuous { .. } => {
                    let (lo, hi) = d.estimation_bounds().unwrap();
                    let z = lo + (hi - lo) * rng.random::<f64>();
                    Value::Real(d.from_estimation(z))
                }
            };
            a.insert(node.name.clone(), v);
        }
        a
    }

    /// Checks that `a` covers exactly the active nodes with in-domain values.
    ///
    /// Activation is evaluated from `a`'s own values; all problems are reported.
    pub fn validate_assignment(&self, a: &Assignment) -> Result<(), Vec<Violation>> {
        let mut violations = Vec::new();
        for name in a.values.keys() {
            if !self.index.contains_key(name) {
                violations.push(Violation::UnknownNode(name.clone()));
            }
        }
        let mut seen = Assignment::new();
        for node in &self.nodes {
            let active = self.is_active_given(node, &seen);
            match (active, a.get(&node.name)) {
                (true, None) => violations.push(Violation::MissingActive(node.name.clone())),
                (false, Some(_)) => {
                    violations.push(Violation::ExtraneousInactive(node.name.clone()))
                }
                (true, Some(v)) => {
                    if !node.domain.contains(v) {
                        violations.push(Violation::OutOfDomain {
                            node: node.name.clone(),
                            value: v.clone(),
                            domain: node.domain.to_string(),
                        });
                    }
                    seen.insert(node.name.clone(), v.clone());
                }
                (false, None) => {}
            }
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(violations)
        }
    }

    /// Nodes on the relevant path of a valid assignment, in space order.
    pub fn active_nodes(&self, a: &Assignment) -> Result<Vec<&ParamNode>, SpaceError> {
        self.validate_assignment(a).map_err(SpaceError::InvalidAssignment)?;
        Ok(self.nodes.iter().filter(|n| a.get(&n.name).is_some()).collect())
    }

    /// Enumerates every valid assignment of a fully discrete space, depth first
    /// in space order with domain values in declaration order.
    ///
    /// Returns `None` when the space has a continuous node.
    pub fn enumerate(&self) -> Option<Vec<Assignment>> {
        if !self.is_fully_discrete() {
            return None;
        }
        let mut out = Vec::new();
        self.enumerate_from(0, Assignment::new(), &mut out);
        Some(out)
    }

    fn enumerate_from(&self, pos: usize, partial: Assignment, out: &mut Vec<Assignment>) {
        let Some(node) = self.nodes.get(pos) else {
            out.push(partial);
            return;
        };
        if !self.is_active_given(node, &partial) {
            self.enumerate_from(pos + 1, partial, out);
            return;
        }
        let n = node.domain.cardinality().unwrap();
        for i in 0..n {
            let mut next = partial.clone();
            next.insert(node.name.clone(), node.domain.value_at(i).unwrap());
            self.enumerate_from(pos + 1, next, out);
        }
    }

    /// Converts a raw parsed value to the type the node's domain expects
    /// (integers are accepted for continuous nodes, booleans for categorical ones).
    pub fn coerce(&self, name: &str, raw: Value) -> Value {
        match (self.node(name).map(|n| &n.domain), raw) {
            (Some(ParamDomain::Continuous { .. }), Value::Int(v)) => Value::Real(v as f64),
            (_, v) => v,
        }
    }

    /// Reads an assignment from a TOML table, coercing values to node domains.
    pub fn assignment_from_toml(&self, table: &toml::Table) -> Result<Assignment, SpaceError> {
        let mut a = Assignment::new();
        for (k, v) in table {
            let raw = match v {
                toml::Value::Integer(i) => Value::Int(*i),
                toml::Value::Float(f) => Value::Real(*f),
                toml::Value::String(s) => Value::Choice(s.clone()),
                toml::Value::Boolean(b) => Value::Choice(b.to_string()),
                other => {
                    return Err(SpaceError::Parse(format!(
                        "{k}: unsupported value {other}"
                    )))
                }
            };
            a.insert(k.clone(), self.coerce(k, raw));
        }
        Ok(a)
    }
}

/// The text representation and classifier space: n-gram range (as n_min plus
/// an offset child per n_min value), weighting, stopword removal,
/// regularizer, strength and convergence tolerance.
pub fn text_rep_space() -> ConfigSpace {
    let choices = |xs: &[&str]| ParamDomain::Categorical(xs.iter().map(|s| s.to_string()).collect());
    let mut nodes = vec![ParamNode::new("n_min", ParamDomain::IntRange { lo: 1, hi: 3 })];
    for k in 1..=3 {
        nodes.push(
            ParamNode::new(n_span_node(k), ParamDomain::IntRange { lo: 0, hi: 3 - k })
                .when("n_min", vec![Value::Int(k)]),
        );
    }
    nodes.extend([
        ParamNode::new("weighting", choices(&["tf", "tf-idf", "binary"])),
        ParamNode::new("remove_stopwords", choices(&["true", "false"])),
        ParamNode::new("regularizer", choices(&["l1", "l2"])),
        ParamNode::new(
            "strength",
            ParamDomain::Continuous { lo: 1e-5, hi: 1e5, scale: Scale::Log10 },
        ),
        ParamNode::new(
            "tolerance",
            ParamDomain::Continuous { lo: 1e-5, hi: 1e-3, scale: Scale::Log10 },
        ),
    ]);
    ConfigSpace::define(nodes).expect("built-in space is valid")
}

/// Name of the n-gram span node active under `n_min = k`.
pub fn n_span_node(k: i64) -> String {
    format!("n_span|n_min={k}")
}

#[derive(Debug, Serialize, Deserialize)]
struct SpaceFile {
    node: Vec<NodeSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum NodeType {
    Categorical,
    Int,
    Continuous,
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeSpec {
    name: String,
    #[serde(rename = "type")]
    kind: NodeType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    choices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lo: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hi: Option<toml::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    condition: Option<ConditionSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ConditionSpec {
    parent: String,
    values: Vec<Value>,
}

impl NodeSpec {
    fn into_node(self) -> Result<ParamNode, SpaceError> {
        let bad = |reason: &str| SpaceError::InvalidDomain {
            node: self.name.clone(),
            reason: reason.to_string(),
        };
        let int_bound = |v: &Option<toml::Value>, which: &str| match v {
            Some(toml::Value::Integer(i)) => Ok(*i),
            _ => Err(bad(&format!("int node needs integer `{which}`"))),
        };
        let real_bound = |v: &Option<toml::Value>, which: &str| match v {
            Some(toml::Value::Integer(i)) => Ok(*i as f64),
            Some(toml::Value::Float(f)) => Ok(*f),
            _ => Err(bad(&format!("continuous node needs numeric `{which}`"))),
        };
        let domain = match self.kind {
            NodeType::Categorical => ParamDomain::Categorical(
                self.choices.clone().ok_or_else(|| bad("categorical node needs `choices`"))?,
            ),
            NodeType::Int => ParamDomain::IntRange {
                lo: int_bound(&self.lo, "lo")?,
                hi: int_bound(&self.hi, "hi")?,
            },
            NodeType::Continuous => ParamDomain::Continuous {
                lo: real_bound(&self.lo, "lo")?,
                hi: real_bound(&self.hi, "hi")?,
                scale: self.scale.unwrap_or_default(),
            },
        };
        Ok(ParamNode {
            name: self.name,
            domain,
            condition: self.condition.map(|c| Condition { parent: c.parent, values: c.values }),
        })
    }

    fn from_node(node: &ParamNode) -> Self {
        let (kind, choices, lo, hi, scale) = match &node.domain {
            ParamDomain::Categorical(c) => (NodeType::Categorical, Some(c.clone()), None, None, None),
            ParamDomain::IntRange { lo, hi } => (
                NodeType::Int,
                None,
                Some(toml::Value::Integer(*lo)),
                Some(toml::Value::Integer(*hi)),
                None,
            ),
            ParamDomain::Continuous { lo, hi, scale } => (
                NodeType::Continuous,
                None,
                Some(toml::Value::Float(*lo)),
                Some(toml::Value::Float(*hi)),
                Some(*scale),
            ),
        };
        Self {
            name: node.name.clone(),
            kind,
            choices,
            lo,
            hi,
            scale,
            condition: node
                .condition
                .as_ref()
                .map(|c| ConditionSpec { parent: c.parent.clone(), values: c.values.clone() }),
        }
    }
}
