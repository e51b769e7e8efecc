//! Structural causal models over additive-noise assignments.
//!
//! An [`Scm`] is an ordered list of nodes, each assigning its value from its
//! parents plus an independent noise draw. The module covers validation,
//! topological evaluation order, seeded forward sampling, abduction of latent
//! values (oracle or residual), `do`-interventions on protected roots, and
//! forward prediction — the three-step counterfactual generation pipeline.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, ChiSquared, Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CstError, Result};
use crate::model::DecisionModel;

/// Whether a node is a protected attribute or an ordinary covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Protected,
    Covariate,
}

/// Noise distribution family with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "family")]
pub enum NoiseFamily {
    Normal { mean: f64, std: f64 },
    Poisson { lambda: f64 },
    ChiSquared { df: f64 },
    Bernoulli { p: f64 },
    /// Degenerate distribution at zero (used for intervened nodes).
    PointMass,
}

/// A scaled noise distribution: `scale * draw(family)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub family: NoiseFamily,
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl NoiseSpec {
    pub fn new(family: NoiseFamily) -> Self {
        Self { family, scale: 1.0 }
    }

    pub fn scaled(family: NoiseFamily, scale: f64) -> Self {
        Self { family, scale }
    }

    pub fn point_mass() -> Self {
        Self::new(NoiseFamily::PointMass)
    }

    /// Parameter-range check; `None` means the parameters are valid.
    pub fn parameter_violation(&self) -> Option<String> {
        match self.family {
            NoiseFamily::Normal { std, .. } if std < 0.0 => {
                Some(format!("normal std must be >= 0, got {std}"))
            }
            NoiseFamily::Poisson { lambda } if lambda <= 0.0 || lambda.is_nan() => {
                Some(format!("poisson lambda must be > 0, got {lambda}"))
            }
            NoiseFamily::ChiSquared { df } if df <= 0.0 || df.is_nan() => {
                Some(format!("chi-squared df must be > 0, got {df}"))
            }
            NoiseFamily::Bernoulli { p } if !(0.0..=1.0).contains(&p) => {
                Some(format!("bernoulli p must lie in [0,1], got {p}"))
            }
            _ => None,
        }
    }

    /// Expected value, including the scale factor.
    pub fn mean(&self) -> f64 {
        let base = match self.family {
            NoiseFamily::Normal { mean, .. } => mean,
            NoiseFamily::Poisson { lambda } => lambda,
            NoiseFamily::ChiSquared { df } => df,
            NoiseFamily::Bernoulli { p } => p,
            NoiseFamily::PointMass => 0.0,
        };
        self.scale * base
    }

    /// Draw `n` independent values.
    pub fn sample_vec(&self, n: usize, rng: &mut ChaCha8Rng, node: &str) -> Result<Vec<f64>> {
        if let Some(reason) = self.parameter_violation() {
            return Err(CstError::InvalidNoise {
                node: node.to_string(),
                reason,
            });
        }
        let invalid = |e: String| CstError::InvalidNoise {
            node: node.to_string(),
            reason: e,
        };
        let mut out = Vec::with_capacity(n);
        match self.family {
            NoiseFamily::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| invalid(e.to_string()))?;
                out.extend((0..n).map(|_| self.scale * d.sample(rng)));
            }
            NoiseFamily::Poisson { lambda } => {
                let d = Poisson::new(lambda).map_err(|e| invalid(e.to_string()))?;
                out.extend((0..n).map(|_| self.scale * d.sample(rng)));
            }
            NoiseFamily::ChiSquared { df } => {
                let d = ChiSquared::new(df).map_err(|e| invalid(e.to_string()))?;
                out.extend((0..n).map(|_| self.scale * d.sample(rng)));
            }
            NoiseFamily::Bernoulli { p } => {
                let d = Bernoulli::new(p).map_err(|e| invalid(e.to_string()))?;
                out.extend((0..n).map(|_| self.scale * f64::from(u8::from(d.sample(rng)))));
            }
            NoiseFamily::PointMass => out.resize(n, 0.0),
        }
        Ok(out)
    }
}

/// Link applied to the linear predictor (noise included inside the link).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Link {
    #[default]
    Identity,
    Exp,
}

/// Structural assignment of a node from its parents.
///
/// Under the additive-noise assumption the realized value is
/// `link(intercept + Σ coef·parent + noise)` for the linear form, and
/// `coefficient·factor·indicator + intercept + Σ coef·parent + noise` for the
/// random-penalty form (a per-record random multiplier gated by a parent
/// indicator, as in the loan generation equations).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum Assignment {
    Linear {
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        terms: BTreeMap<String, f64>,
        #[serde(default)]
        link: Link,
    },
    RandomPenalty {
        coefficient: f64,
        factor: NoiseSpec,
        indicator: String,
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        terms: BTreeMap<String, f64>,
    },
}

impl Assignment {
    pub fn root() -> Self {
        Assignment::Linear {
            intercept: 0.0,
            terms: BTreeMap::new(),
            link: Link::Identity,
        }
    }

    pub fn constant(value: f64) -> Self {
        Assignment::Linear {
            intercept: value,
            terms: BTreeMap::new(),
            link: Link::Identity,
        }
    }

    pub fn linear<I: IntoIterator<Item = (String, f64)>>(intercept: f64, terms: I) -> Self {
        Assignment::Linear {
            intercept,
            terms: terms.into_iter().collect(),
            link: Link::Identity,
        }
    }

    pub fn log_linear<I: IntoIterator<Item = (String, f64)>>(intercept: f64, terms: I) -> Self {
        Assignment::Linear {
            intercept,
            terms: terms.into_iter().collect(),
            link: Link::Exp,
        }
    }

    pub fn link(&self) -> Link {
        match self {
            Assignment::Linear { link, .. } => *link,
            Assignment::RandomPenalty { .. } => Link::Identity,
        }
    }

    /// Parent names referenced by the assignment (terms plus indicator).
    pub fn referenced_parents(&self) -> BTreeSet<&str> {
        let mut out: BTreeSet<&str> = match self {
            Assignment::Linear { terms, .. } => terms.keys().map(String::as_str).collect(),
            Assignment::RandomPenalty {
                terms, indicator, ..
            } => {
                let mut s: BTreeSet<&str> = terms.keys().map(String::as_str).collect();
                s.insert(indicator.as_str());
                s
            }
        };
        out.retain(|p| !p.is_empty());
        out
    }
}

/// One node of the SCM: name, kind, parents, assignment, and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub name: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub parents: Vec<String>,
    pub assignment: Assignment,
    pub noise: NoiseSpec,
}

impl NodeSpec {
    /// Protected root node `name <- noise`.
    pub fn protected_root(name: impl Into<String>, noise: NoiseSpec) -> Self {
        Self {
            name: name.into(),
            kind: NodeKind::Protected,
            parents: Vec::new(),
            assignment: Assignment::root(),
            noise,
        }
    }

    /// Covariate node with an explicit assignment.
    pub fn covariate(
        name: impl Into<String>,
        parents: &[&str],
        assignment: Assignment,
        noise: NoiseSpec,
    ) -> Self {
        Self {
            name: name.into(),
            kind: NodeKind::Covariate,
            parents: parents.iter().map(|p| p.to_string()).collect(),
            assignment,
            noise,
        }
    }

    fn is_root(&self) -> bool {
        self.parents.is_empty()
    }
}

/// A structural violation found by [`Scm::validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Offending node (or edge set, for cycles).
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

/// A `do`-intervention forcing protected root nodes to fixed values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intervention {
    pub assignments: BTreeMap<String, f64>,
}

impl Intervention {
    pub fn new<I, S>(assignments: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self {
            assignments: assignments
                .into_iter()
                .map(|(k, v)| (k.into(), v))
                .collect(),
        }
    }

    pub fn single(target: impl Into<String>, value: f64) -> Self {
        Self::new([(target.into(), value)])
    }

    pub fn targets(&self) -> impl Iterator<Item = &str> {
        self.assignments.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }
}

impl std::str::FromStr for Intervention {
    type Err = CstError;

    /// Parse `"A=0"` or `"A=0,B=1"`.
    fn from_str(s: &str) -> Result<Self> {
        let mut assignments = BTreeMap::new();
        for part in s.split(',') {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, value) = part.split_once('=').ok_or_else(|| {
                CstError::Other(format!("intervention '{part}' is not of the form NAME=VALUE"))
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                CstError::Other(format!("intervention value '{value}' is not a number"))
            })?;
            assignments.insert(name.trim().to_string(), value);
        }
        if assignments.is_empty() {
            return Err(CstError::EmptyIntervention);
        }
        Ok(Self { assignments })
    }
}

impl fmt::Display for Intervention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .assignments
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Latent values abducted or sampled for one node across all records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLatents {
    /// Realized noise value per record, in the node's units (scale applied).
    pub noise: Vec<f64>,
    /// Realized random-penalty factor per record, where the node has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<f64>>,
}

/// Per-record latent values for every stochastic node of an SCM.
///
/// Replaying the SCM forward with a `LatentRecord` reproduces the dataset it
/// was sampled from (or abducted on) exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LatentRecord {
    len: usize,
    nodes: BTreeMap<String, NodeLatents>,
}

impl LatentRecord {
    pub fn with_len(len: usize) -> Self {
        Self {
            len,
            nodes: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn insert(&mut self, node: impl Into<String>, latents: NodeLatents) -> Result<()> {
        if latents.noise.len() != self.len {
            return Err(CstError::ShapeMismatch(format!(
                "latents carry {} records, expected {}",
                latents.noise.len(),
                self.len
            )));
        }
        if let Some(f) = &latents.factors {
            if f.len() != self.len {
                return Err(CstError::ShapeMismatch(format!(
                    "penalty factors carry {} records, expected {}",
                    f.len(),
                    self.len
                )));
            }
        }
        self.nodes.insert(node.into(), latents);
        Ok(())
    }

    pub fn node(&self, name: &str) -> Option<&NodeLatents> {
        self.nodes.get(name)
    }

    pub fn noise(&self, name: &str) -> Result<&[f64]> {
        self.nodes
            .get(name)
            .map(|l| l.noise.as_slice())
            .ok_or_else(|| CstError::MissingLatents(name.to_string()))
    }
}

/// Mode of the abduction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AbductionMode {
    /// Return the stored latents from generation (synthetic data only).
    Oracle,
    /// Recover latents as residuals from the deterministic assignment parts.
    Residual,
}

/// An additive-noise structural causal model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scm {
    pub nodes: Vec<NodeSpec>,
}

impl Scm {
    pub fn new(nodes: Vec<NodeSpec>) -> Self {
        Self { nodes }
    }

    /// Construct and validate in one step.
    pub fn validated(nodes: Vec<NodeSpec>) -> Result<Self> {
        let scm = Self::new(nodes);
        scm.ensure_valid()?;
        Ok(scm)
    }

    pub fn node(&self, name: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn node_names(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.name.as_str())
    }

    pub fn protected_names(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Protected)
            .map(|n| n.name.as_str())
            .collect()
    }

    /// Check every structural invariant; an empty list means the model is valid.
    ///
    /// Violations are data, not failures: each one names the offending node or
    /// edge set so a caller can report all of them at once.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert(node.name.as_str()) {
                violations.push(Violation {
                    subject: node.name.clone(),
                    message: "duplicate node name".into(),
                });
            }
        }
        let names: BTreeSet<&str> = self.nodes.iter().map(|n| n.name.as_str()).collect();
        for node in &self.nodes {
            for parent in &node.parents {
                if !names.contains(parent.as_str()) {
                    violations.push(Violation {
                        subject: node.name.clone(),
                        message: format!("parent '{parent}' is not a declared node"),
                    });
                }
                if parent == &node.name {
                    violations.push(Violation {
                        subject: node.name.clone(),
                        message: "node lists itself as a parent".into(),
                    });
                }
            }
            if node.kind == NodeKind::Protected && !node.is_root() {
                violations.push(Violation {
                    subject: node.name.clone(),
                    message: "protected node is not a root".into(),
                });
            }
            let declared: BTreeSet<&str> = node.parents.iter().map(String::as_str).collect();
            for referenced in node.assignment.referenced_parents() {
                if !declared.contains(referenced) {
                    violations.push(Violation {
                        subject: node.name.clone(),
                        message: format!(
                            "assignment references '{referenced}' which is not a declared parent"
                        ),
                    });
                }
            }
            if let Some(reason) = node.noise.parameter_violation() {
                violations.push(Violation {
                    subject: node.name.clone(),
                    message: reason,
                });
            }
            if let Assignment::RandomPenalty { factor, .. } = &node.assignment {
                if let Some(reason) = factor.parameter_violation() {
                    violations.push(Violation {
                        subject: node.name.clone(),
                        message: format!("penalty factor: {reason}"),
                    });
                }
            }
        }
        if let Err(cycle) = self.topo_indices() {
            violations.push(cycle);
        }
        violations
    }

    fn ensure_valid(&self) -> Result<()> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            let rendered: Vec<String> = violations.iter().map(Violation::to_string).collect();
            Err(CstError::InvalidScm(rendered.join("; ")))
        }
    }

    /// Kahn's algorithm with declaration-order tie-breaking, as indices.
    fn topo_indices(&self) -> std::result::Result<Vec<usize>, Violation> {
        let n = self.nodes.len();
        let index_of: BTreeMap<&str, usize> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| (node.name.as_str(), i))
            .collect();
        let mut indegree = vec![0usize; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, node) in self.nodes.iter().enumerate() {
            for parent in &node.parents {
                if let Some(&p) = index_of.get(parent.as_str()) {
                    if p != i {
                        indegree[i] += 1;
                        children[p].push(i);
                    }
                } // unresolved parents are reported by validate(), not here
            }
            if node.parents.iter().any(|p| p == &node.name) {
                indegree[i] += 1; // self-loop counts as a cycle
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        loop {
            // smallest declaration index among ready nodes
            let next = (0..n).find(|&i| !placed[i] && indegree[i] == 0);
            match next {
                Some(i) => {
                    placed[i] = true;
                    order.push(i);
                    for &c in &children[i] {
                        indegree[c] -= 1;
                    }
                }
                None => break,
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            let stuck: Vec<&str> = (0..n)
                .filter(|&i| !placed[i])
                .map(|i| self.nodes[i].name.as_str())
                .collect();
            Err(Violation {
                subject: format!("{{{}}}", stuck.join(",")),
                message: "cycle".into(),
            })
        }
    }

    /// Node names in dependency order (parents before children, declaration
    /// order breaking ties).
    pub fn topological_order(&self) -> Result<Vec<String>> {
        let order = self
            .topo_indices()
            .map_err(|v| CstError::InvalidScm(v.to_string()))?;
        Ok(order
            .into_iter()
            .map(|i| self.nodes[i].name.clone())
            .collect())
    }

    /// All nodes reachable from `roots` by directed edges, including the roots.
    pub fn descendants_of<'a, I: IntoIterator<Item = &'a str>>(&self, roots: I) -> BTreeSet<String> {
        let mut reached: BTreeSet<String> = roots.into_iter().map(str::to_string).collect();
        loop {
            let mut grew = false;
            for node in &self.nodes {
                if reached.contains(&node.name) {
                    continue;
                }
                if node.parents.iter().any(|p| reached.contains(p)) {
                    reached.insert(node.name.clone());
                    grew = true;
                }
            }
            if !grew {
                return reached;
            }
        }
    }
}

/// Validate an SCM, returning all violations (empty = valid).
pub fn validate_scm(scm: &Scm) -> Vec<Violation> {
    scm.validate()
}

/// Dependency order of a valid SCM.
pub fn topological_order(scm: &Scm) -> Result<Vec<String>> {
    scm.topological_order()
}

// One independent ChaCha stream per (node, purpose) pair keeps draws
// order-independent across nodes for a fixed seed.
fn node_rng(seed: u64, node_index: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node_index as u64 * 2 + purpose);
    rng
}

/// Deterministic part of a node's assignment on the link scale: intercept,
/// penalty term, and linear terms, with no noise and no link applied.
///
/// `factors` substitutes the random-penalty multiplier; when absent the
/// factor's expected value is used, the documented approximation that keeps
/// the ANM residual form well-defined for penalty nodes.
fn deterministic_predictor(
    node: &NodeSpec,
    columns: &BTreeMap<&str, &[f64]>,
    factors: Option<&[f64]>,
    n: usize,
) -> Result<Vec<f64>> {
    let fetch = |name: &str| -> Result<&[f64]> {
        columns
            .get(name)
            .copied()
            .ok_or_else(|| CstError::MissingColumn(name.to_string()))
    };
    let (intercept, terms) = match &node.assignment {
        Assignment::Linear {
            intercept, terms, ..
        } => (*intercept, terms),
        Assignment::RandomPenalty {
            intercept, terms, ..
        } => (*intercept, terms),
    };
    let mut out = vec![intercept; n];
    if let Assignment::RandomPenalty {
        coefficient,
        factor,
        indicator,
        ..
    } = &node.assignment
    {
        let gate = fetch(indicator)?;
        let mean = factor.mean();
        for (i, v) in out.iter_mut().enumerate() {
            let f = factors.map_or(mean, |fs| fs[i]);
            *v += coefficient * f * gate[i];
        }
    }
    for (parent, coef) in terms {
        let col = fetch(parent)?;
        for (v, p) in out.iter_mut().zip(col) {
            *v += coef * p;
        }
    }
    Ok(out)
}

/// Evaluate one node's assignment for all records, substituting `noise` for
/// the additive noise term and applying the link.
fn evaluate_node(
    node: &NodeSpec,
    columns: &BTreeMap<&str, &[f64]>,
    noise: &[f64],
    factors: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let mut out = deterministic_predictor(node, columns, factors, noise.len())?;
    match node.assignment.link() {
        Link::Identity => {
            for (v, u) in out.iter_mut().zip(noise) {
                *v += u;
            }
        }
        Link::Exp => {
            for (v, u) in out.iter_mut().zip(noise) {
                *v = (*v + u).exp();
            }
        }
    }
    Ok(out)
}

/// Draw an `n`-record dataset from the SCM under `seed`.
///
/// Returns the covariate/protected columns (no decisions) together with every
/// latent draw made, so oracle abduction can replay the exact counterfactuals.
/// Identical `(scm, n, seed)` inputs give bit-identical output.
pub fn sample_dataset(scm: &Scm, n: usize, seed: u64) -> Result<(Dataset, LatentRecord)> {
    scm.ensure_valid()?;
    if n == 0 {
        return Err(CstError::Other("sample size must be >= 1".into()));
    }
    let mut latents = LatentRecord::with_len(n);
    for (idx, node) in scm.nodes.iter().enumerate() {
        let noise = node
            .noise
            .sample_vec(n, &mut node_rng(seed, idx, 0), &node.name)?;
        let factors = match &node.assignment {
            Assignment::RandomPenalty { factor, .. } => {
                Some(factor.sample_vec(n, &mut node_rng(seed, idx, 1), &node.name)?)
            }
            _ => None,
        };
        latents.insert(node.name.clone(), NodeLatents { noise, factors })?;
    }
    let data = predict(scm, &latents)?;
    Ok((data, latents))
}

/// Abduction step: recover per-record latent values given the evidence.
///
/// `Oracle` hands back the stored generation draws; `Residual` computes
/// `Û = g(X) − f(parents)` with `g = ln` under the exp link and identity
/// otherwise. Protected roots abduct to their observed values.
pub fn abduct(
    scm: &Scm,
    data: &Dataset,
    mode: AbductionMode,
    stored: Option<&LatentRecord>,
) -> Result<LatentRecord> {
    scm.ensure_valid()?;
    match mode {
        AbductionMode::Oracle => {
            let stored = stored.ok_or_else(|| {
                CstError::Other("oracle abduction requires stored latents".into())
            })?;
            if stored.len() != data.n_rows() {
                return Err(CstError::ShapeMismatch(format!(
                    "stored latents cover {} records, dataset has {}",
                    stored.len(),
                    data.n_rows()
                )));
            }
            for node in &scm.nodes {
                if stored.node(&node.name).is_none() {
                    return Err(CstError::MissingLatents(node.name.clone()));
                }
            }
            Ok(stored.clone())
        }
        AbductionMode::Residual => {
            let n = data.n_rows();
            let mut columns: BTreeMap<&str, &[f64]> = BTreeMap::new();
            for node in &scm.nodes {
                columns.insert(node.name.as_str(), data.column(&node.name)?);
            }
            let mut latents = LatentRecord::with_len(n);
            for node in &scm.nodes {
                let observed = columns[node.name.as_str()];
                let predictor = deterministic_predictor(node, &columns, None, n)?;
                let mut noise = Vec::with_capacity(n);
                match node.assignment.link() {
                    Link::Identity => {
                        for (x, f) in observed.iter().zip(&predictor) {
                            noise.push(x - f);
                        }
                    }
                    Link::Exp => {
                        for (record, (x, f)) in observed.iter().zip(&predictor).enumerate() {
                            if *x <= 0.0 {
                                return Err(CstError::NonPositiveExpTarget {
                                    node: node.name.clone(),
                                    record,
                                    value: *x,
                                });
                            }
                            noise.push(x.ln() - f);
                        }
                    }
                }
                latents.insert(node.name.clone(), NodeLatents { noise, factors: None })?;
            }
            Ok(latents)
        }
    }
}

/// Action step: replace each targeted protected root's assignment with a
/// constant and its noise with a point mass. The input model is untouched.
pub fn intervene(scm: &Scm, intervention: &Intervention) -> Result<Scm> {
    if intervention.is_empty() {
        return Err(CstError::EmptyIntervention);
    }
    let mut out = scm.clone();
    for (target, value) in &intervention.assignments {
        let node = out
            .nodes
            .iter_mut()
            .find(|n| &n.name == target)
            .ok_or_else(|| CstError::InvalidInterventionTarget(target.clone()))?;
        if node.kind != NodeKind::Protected || !node.is_root() {
            return Err(CstError::InvalidInterventionTarget(target.clone()));
        }
        node.assignment = Assignment::constant(*value);
        node.noise = NoiseSpec::point_mass();
    }
    Ok(out)
}

/// Prediction step: evaluate assignments in topological order, substituting
/// the supplied latents for every noise draw.
///
/// Nodes with point-mass noise (e.g. intervened roots) need no latent entry;
/// every other node must be covered.
pub fn predict(scm: &Scm, latents: &LatentRecord) -> Result<Dataset> {
    scm.ensure_valid()?;
    let order = scm
        .topo_indices()
        .map_err(|v| CstError::InvalidScm(v.to_string()))?;
    let n = latents.len();
    let zeros = vec![0.0; n];
    let mut computed: Vec<Option<Vec<f64>>> = vec![None; scm.nodes.len()];
    for idx in order {
        let node = &scm.nodes[idx];
        let stored = latents.node(&node.name);
        // Point-mass noise is identically zero, so intervened roots never pick
        // up latents stored for their pre-intervention assignment.
        let noise: &[f64] = if node.noise.family == NoiseFamily::PointMass {
            &zeros
        } else {
            match stored {
                Some(l) => {
                    if l.noise.len() != n {
                        return Err(CstError::ShapeMismatch(format!(
                            "latents for '{}' cover {} records, expected {}",
                            node.name,
                            l.noise.len(),
                            n
                        )));
                    }
                    &l.noise
                }
                None => return Err(CstError::MissingLatents(node.name.clone())),
            }
        };
        let factors = stored.and_then(|l| l.factors.as_deref());
        let mut columns: BTreeMap<&str, &[f64]> = BTreeMap::new();
        for parent in &node.parents {
            let p = scm
                .node_index(parent)
                .ok_or_else(|| CstError::MissingColumn(parent.clone()))?;
            columns.insert(
                parent.as_str(),
                computed[p].as_deref().expect("topological order"),
            );
        }
        computed[idx] = Some(evaluate_node(node, &columns, noise, factors)?);
    }
    let mut data = Dataset::new();
    for (node, values) in scm.nodes.iter().zip(computed) {
        data.insert_column(node.name.clone(), values.expect("all nodes evaluated"))?;
    }
    Ok(data)
}

/// Record-aligned counterfactual of a dataset under an intervention, with the
/// classifier re-applied to the counterfactual covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualDataset {
    pub data: Dataset,
    pub intervention: Intervention,
}

/// Full abduction → action → prediction pipeline over a dataset,
/// re-applying `model` for the decision column.
///
/// Columns with no directed path from any intervened node are copied from the
/// factual dataset verbatim, which both skips dead work and makes the
/// null-effect guarantee exact rather than up to rounding.
pub fn generate_counterfactual_dataset(
    scm: &Scm,
    data: &Dataset,
    intervention: &Intervention,
    model: &dyn DecisionModel,
    mode: AbductionMode,
    stored: Option<&LatentRecord>,
) -> Result<CounterfactualDataset> {
    let latents = abduct(scm, data, mode, stored)?;
    let intervened = intervene(scm, intervention)?;
    let predicted = predict(&intervened, &latents)?;
    let affected = scm.descendants_of(intervention.targets());

    let mut out = Dataset::new();
    for name in data.column_names() {
        if scm.node(name).is_some() && affected.contains(name) {
            out.insert_column(name, predicted.column(name)?.to_vec())?;
        } else if scm.node(name).is_some() || name != model.output() {
            out.insert_column(name, data.column(name)?.to_vec())?;
        } else {
            // decision column: placeholder, recomputed below
            out.insert_column(name, vec![0.0; data.n_rows()])?;
        }
    }
    for node in &scm.nodes {
        if !out.has_column(&node.name) {
            out.insert_column(node.name.clone(), predicted.column(&node.name)?.to_vec())?;
        }
    }
    let decisions = model.apply(&out)?;
    out.insert_column(model.output().to_string(), decisions)?;
    Ok(CounterfactualDataset {
        data: out,
        intervention: intervention.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearThresholdModel;
    use approx::assert_relative_eq;

    fn unit_normal() -> NoiseSpec {
        NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: 1.0 })
    }

    /// Worked-example chain: X1 root, X2 <- a·X1, X3 <- b1·X1 + b2·X2.
    fn chain_scm(a: f64, b1: f64, b2: f64) -> Scm {
        Scm::new(vec![
            NodeSpec::protected_root("X1", unit_normal()),
            NodeSpec::covariate(
                "X2",
                &["X1"],
                Assignment::linear(0.0, [("X1".into(), a)]),
                unit_normal(),
            ),
            NodeSpec::covariate(
                "X3",
                &["X1", "X2"],
                Assignment::linear(0.0, [("X1".into(), b1), ("X2".into(), b2)]),
                unit_normal(),
            ),
        ])
    }

    #[test]
    fn validate_accepts_chain() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("A", unit_normal()),
            NodeSpec::covariate(
                "X1",
                &["A"],
                Assignment::linear(0.0, [("A".into(), 1.0)]),
                unit_normal(),
            ),
            NodeSpec::covariate(
                "X2",
                &["X1"],
                Assignment::linear(0.0, [("X1".into(), 1.0)]),
                unit_normal(),
            ),
        ]);
        assert!(scm.validate().is_empty());
    }

    #[test]
    fn validate_reports_two_cycle() {
        let scm = Scm::new(vec![
            NodeSpec::covariate(
                "X1",
                &["X2"],
                Assignment::linear(0.0, [("X2".into(), 1.0)]),
                unit_normal(),
            ),
            NodeSpec::covariate(
                "X2",
                &["X1"],
                Assignment::linear(0.0, [("X1".into(), 1.0)]),
                unit_normal(),
            ),
        ]);
        let violations = scm.validate();
        assert!(violations
            .iter()
            .any(|v| v.message == "cycle" && v.subject == "{X1,X2}"));
    }

    #[test]
    fn validate_rejects_protected_non_root() {
        let mut node = NodeSpec::protected_root("G", unit_normal());
        node.parents = vec!["X1".into()];
        let scm = Scm::new(vec![
            NodeSpec::protected_root("X1", unit_normal()),
            node,
        ]);
        let violations = scm.validate();
        assert!(violations
            .iter()
            .any(|v| v.subject == "G" && v.message.contains("not a root")));
    }

    #[test]
    fn validate_rejects_unknown_parent_and_bad_noise() {
        let scm = Scm::new(vec![NodeSpec::covariate(
            "X",
            &["ghost"],
            Assignment::linear(0.0, [("ghost".into(), 1.0)]),
            NoiseSpec::new(NoiseFamily::Poisson { lambda: -1.0 }),
        )]);
        let violations = scm.validate();
        assert!(violations.iter().any(|v| v.message.contains("ghost")));
        assert!(violations.iter().any(|v| v.message.contains("lambda")));
    }

    #[test]
    fn topological_order_of_fig1_graph() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("A", unit_normal()),
            NodeSpec::covariate(
                "X1",
                &["A"],
                Assignment::linear(0.0, [("A".into(), 1.0)]),
                unit_normal(),
            ),
            NodeSpec::covariate(
                "X2",
                &["A", "X1"],
                Assignment::linear(0.0, [("A".into(), 1.0), ("X1".into(), 1.0)]),
                unit_normal(),
            ),
        ]);
        assert_eq!(scm.topological_order().unwrap(), vec!["A", "X1", "X2"]);
    }

    #[test]
    fn topological_order_breaks_ties_by_declaration() {
        // law-school shape: two roots R, G feeding UGPA and LSAT.
        let scm = Scm::new(vec![
            NodeSpec::protected_root("R", unit_normal()),
            NodeSpec::protected_root("G", unit_normal()),
            NodeSpec::covariate(
                "UGPA",
                &["R", "G"],
                Assignment::linear(0.0, [("R".into(), 1.0), ("G".into(), 1.0)]),
                unit_normal(),
            ),
            NodeSpec::covariate(
                "LSAT",
                &["R", "G"],
                Assignment::log_linear(0.0, [("R".into(), 1.0), ("G".into(), 1.0)]),
                unit_normal(),
            ),
        ]);
        assert_eq!(
            scm.topological_order().unwrap(),
            vec!["R", "G", "UGPA", "LSAT"]
        );
    }

    #[test]
    fn topological_order_singleton() {
        let scm = Scm::new(vec![NodeSpec::protected_root("A", unit_normal())]);
        assert_eq!(scm.topological_order().unwrap(), vec!["A"]);
    }

    #[test]
    fn noiseless_linear_sampling_is_exact() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root(
                "A",
                NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 }),
            ),
            NodeSpec::covariate(
                "X",
                &["A"],
                Assignment::linear(0.0, [("A".into(), 2.0)]),
                NoiseSpec::point_mass(),
            ),
        ]);
        let (data, _) = sample_dataset(&scm, 200, 7).unwrap();
        let a = data.column("A").unwrap();
        let x = data.column("X").unwrap();
        for (ai, xi) in a.iter().zip(x) {
            assert_eq!(*xi, 2.0 * ai);
        }
    }

    #[test]
    fn sampling_is_deterministic_and_replayable() {
        let scm = chain_scm(2.0, 1.0, 3.0);
        let (d1, l1) = sample_dataset(&scm, 64, 99).unwrap();
        let (d2, _) = sample_dataset(&scm, 64, 99).unwrap();
        assert_eq!(d1, d2);
        // forward replay with the stored latents reproduces the data exactly
        let replayed = predict(&scm, &l1).unwrap();
        assert_eq!(replayed, d1);
    }

    #[test]
    fn residual_abduction_matches_worked_example() {
        // X2 <- 2·X1 + U2; observed (X1, X2) = (3, 10) gives U2-hat = 4.
        let scm = chain_scm(2.0, 1.0, 3.0);
        let data = Dataset::from_columns([
            ("X1", vec![3.0]),
            ("X2", vec![10.0]),
            ("X3", vec![0.0]),
        ])
        .unwrap();
        let latents = abduct(&scm, &data, AbductionMode::Residual, None).unwrap();
        assert_eq!(latents.noise("X2").unwrap(), &[4.0]);
        assert_eq!(latents.noise("X1").unwrap(), &[3.0]); // root abducts to itself
    }

    #[test]
    fn residual_round_trip_reproduces_data() {
        let scm = chain_scm(1.5, -0.5, 2.0);
        let (data, _) = sample_dataset(&scm, 256, 3).unwrap();
        let latents = abduct(&scm, &data, AbductionMode::Residual, None).unwrap();
        let replayed = predict(&scm, &latents).unwrap();
        for name in ["X1", "X2", "X3"] {
            let a = data.column(name).unwrap();
            let b = replayed.column(name).unwrap();
            for (x, y) in a.iter().zip(b) {
                assert_relative_eq!(x, y, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn exp_link_round_trip_and_nonpositive_error() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("R", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
            NodeSpec::covariate(
                "L",
                &["R"],
                Assignment::log_linear(1.0, [("R".into(), -0.2)]),
                NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: 0.3 }),
            ),
        ]);
        let (data, _) = sample_dataset(&scm, 100, 5).unwrap();
        let latents = abduct(&scm, &data, AbductionMode::Residual, None).unwrap();
        let replayed = predict(&scm, &latents).unwrap();
        let a = data.column("L").unwrap();
        let b = replayed.column("L").unwrap();
        for (x, y) in a.iter().zip(b) {
            assert_relative_eq!(x, y, max_relative = 1e-9);
        }

        let bad = Dataset::from_columns([("R", vec![0.0]), ("L", vec![-1.0])]).unwrap();
        let err = abduct(&scm, &bad, AbductionMode::Residual, None).unwrap_err();
        assert!(matches!(err, CstError::NonPositiveExpTarget { .. }));
    }

    #[test]
    fn intervene_replaces_target_and_rejects_covariates() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("A", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.45 })),
            NodeSpec::covariate(
                "X1",
                &["A"],
                Assignment::linear(0.0, [("A".into(), -1.0)]),
                unit_normal(),
            ),
        ]);
        let done = intervene(&scm, &Intervention::single("A", 0.0)).unwrap();
        assert_eq!(done.node("A").unwrap().assignment, Assignment::constant(0.0));
        assert_eq!(done.node("A").unwrap().noise, NoiseSpec::point_mass());
        assert_eq!(done.node("X1").unwrap(), scm.node("X1").unwrap());
        // original untouched
        assert_ne!(scm.node("A").unwrap().noise, NoiseSpec::point_mass());

        let err = intervene(&scm, &Intervention::single("X1", 0.0)).unwrap_err();
        assert!(matches!(err, CstError::InvalidInterventionTarget(_)));
    }

    #[test]
    fn joint_intervention_fixes_both_roots() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("R", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.2 })),
            NodeSpec::protected_root("G", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
            NodeSpec::covariate(
                "X",
                &["R", "G"],
                Assignment::linear(0.0, [("R".into(), 1.0), ("G".into(), 2.0)]),
                unit_normal(),
            ),
        ]);
        let done = intervene(&scm, &Intervention::new([("R", 0.0), ("G", 0.0)])).unwrap();
        assert_eq!(done.node("R").unwrap().assignment, Assignment::constant(0.0));
        assert_eq!(done.node("G").unwrap().assignment, Assignment::constant(0.0));
    }

    #[test]
    fn prediction_matches_worked_counterfactual_formula() {
        // do(X1 := x1): X3-cf = b1·x1 + b2·(a·x1 + U2-hat) + U3-hat
        let (a, b1, b2) = (2.0, 0.7, -1.3);
        let scm = chain_scm(a, b1, b2);
        let data = Dataset::from_columns([
            ("X1", vec![3.0]),
            ("X2", vec![10.0]),
            ("X3", vec![-4.0]),
        ])
        .unwrap();
        let latents = abduct(&scm, &data, AbductionMode::Residual, None).unwrap();
        let u2 = latents.noise("X2").unwrap()[0];
        let u3 = latents.noise("X3").unwrap()[0];
        let x1 = 5.5;
        let done = intervene(&scm, &Intervention::single("X1", x1)).unwrap();
        let cf = predict(&done, &latents).unwrap();
        let expected = b1 * x1 + b2 * (a * x1 + u2) + u3;
        assert_relative_eq!(cf.column("X3").unwrap()[0], expected, max_relative = 1e-12);
    }

    #[test]
    fn counterfactual_dataset_identity_intervention_keeps_decisions() {
        let scm = Scm::new(vec![
            NodeSpec::protected_root("A", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
            NodeSpec::covariate(
                "X",
                &["A"],
                Assignment::linear(1.0, [("A".into(), -2.0)]),
                unit_normal(),
            ),
        ]);
        let (mut data, latents) = sample_dataset(&scm, 128, 11).unwrap();
        let model = LinearThresholdModel::new([("X", 1.0)], 1.0, "Y");
        let y = model.apply(&data).unwrap();
        data.insert_column("Y", y.clone()).unwrap();

        // intervene at each record's factual value: split by group and check both
        for a_value in [0.0, 1.0] {
            let cf = generate_counterfactual_dataset(
                &scm,
                &data,
                &Intervention::single("A", a_value),
                &model,
                AbductionMode::Oracle,
                Some(&latents),
            )
            .unwrap();
            let a = data.column("A").unwrap();
            for i in 0..data.n_rows() {
                if a[i] == a_value {
                    assert_eq!(
                        cf.data.value("X", i).unwrap(),
                        data.value("X", i).unwrap(),
                        "factual fixed point at record {i}"
                    );
                    assert_eq!(cf.data.value("Y", i).unwrap(), y[i]);
                }
            }
        }
    }

    #[test]
    fn counterfactual_null_effect_is_bitwise_exact() {
        // A has no edge into X: the counterfactual must copy X verbatim.
        let scm = Scm::new(vec![
            NodeSpec::protected_root("A", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
            NodeSpec::covariate(
                "X",
                &[],
                Assignment::root(),
                NoiseSpec::scaled(NoiseFamily::Normal { mean: 3.0, std: 2.0 }, 1.0),
            ),
        ]);
        let (mut data, _) = sample_dataset(&scm, 300, 21).unwrap();
        let model = LinearThresholdModel::new([("X", 1.0)], 3.0, "Y");
        let y = model.apply(&data).unwrap();
        data.insert_column("Y", y).unwrap();
        let cf = generate_counterfactual_dataset(
            &scm,
            &data,
            &Intervention::single("A", 0.0),
            &model,
            AbductionMode::Residual,
            None,
        )
        .unwrap();
        assert_eq!(cf.data.column("X").unwrap(), data.column("X").unwrap());
        assert_eq!(cf.data.column("Y").unwrap(), data.column("Y").unwrap());
        // protected column carries the intervened value
        assert!(cf.data.column("A").unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn intervention_parses_from_flag_syntax() {
        let iv: Intervention = "A=0, B=1.5".parse().unwrap();
        assert_eq!(iv.assignments["A"], 0.0);
        assert_eq!(iv.assignments["B"], 1.5);
        assert!("A".parse::<Intervention>().is_err());
        assert!("".parse::<Intervention>().is_err());
    }
}
