//! Search-space partitioning and k-NN control/test group construction.
//!
//! The control group is built around the complainant's factual covariates
//! inside the protected search space; the test group is built around the
//! complainant's counterfactual covariates inside the non-protected search
//! space. Search is exact (linear scan with a bounded heap); ties at equal
//! distance break by ascending record index so audits are reproducible.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::data::Dataset;
use crate::error::{CstError, Result};
use crate::metric::{CovariateMatrix, DistanceContext};

/// Protected-group membership test: every listed attribute must match its
/// protected value (an intersectional spec when more than one is listed).
#[derive(Debug, Clone, PartialEq)]
pub struct ProtectedSpec {
    pub attributes: Vec<(String, f64)>,
}

impl ProtectedSpec {
    pub fn new<I, S>(attributes: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self {
            attributes: attributes
                .into_iter()
                .map(|(name, value)| (name.into(), value))
                .collect(),
        }
    }

    pub fn describe(&self) -> String {
        self.attributes
            .iter()
            .map(|(n, v)| format!("{n}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Record indices split into the control (protected) and test (non-protected)
/// search spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpaces {
    pub control: Vec<usize>,
    pub test: Vec<usize>,
}

/// Partition a dataset by the protected spec: records matching every
/// protected value form the control space, all others the test space.
pub fn partition_search_spaces(data: &Dataset, spec: &ProtectedSpec) -> Result<SearchSpaces> {
    if spec.attributes.is_empty() {
        return Err(CstError::InvalidSchema("protected spec is empty".into()));
    }
    let columns: Vec<(&[f64], f64)> = spec
        .attributes
        .iter()
        .map(|(name, value)| Ok((data.column(name)?, *value)))
        .collect::<Result<_>>()?;
    let mut control = Vec::new();
    let mut test = Vec::new();
    for i in 0..data.n_rows() {
        if columns.iter().all(|(col, value)| col[i] == *value) {
            control.push(i);
        } else {
            test.push(i);
        }
    }
    if control.is_empty() {
        return Err(CstError::EmptySearchSpace {
            side: "control",
            spec: spec.describe(),
        });
    }
    if test.is_empty() {
        return Err(CstError::EmptySearchSpace {
            side: "test",
            spec: spec.describe(),
        });
    }
    Ok(SearchSpaces { control, test })
}

/// Neighbors of a search center, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborSet {
    /// `(record index, distance)` pairs, distance ascending, indices distinct.
    pub entries: Vec<(usize, f64)>,
    /// Set when the search space held fewer than `k` eligible records.
    pub short: bool,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|(i, _)| *i)
    }
}

// Max-heap candidate ordered by (distance, index); the heap keeps the k
// lexicographically smallest pairs, which is exactly the ascending-distance,
// ascending-index tie-break rule.
#[derive(PartialEq)]
struct Candidate {
    distance: f64,
    index: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Exact top-k search for `center` within `space`.
///
/// `exclude` drops one record (the complainant itself, when it lives in the
/// searched space); `max_distance` optionally filters candidates before
/// ranking. Returns fewer than `k` entries, flagged `short`, when the space
/// cannot fill the group.
pub fn get_top_k(
    center: &[f64],
    space: &[usize],
    k: usize,
    ctx: &DistanceContext,
    candidates: &CovariateMatrix,
    exclude: Option<usize>,
    max_distance: Option<f64>,
) -> Result<NeighborSet> {
    if k == 0 {
        return Err(CstError::InvalidConfig("k must be >= 1".into()));
    }
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
    for &index in space {
        if exclude == Some(index) {
            continue;
        }
        let distance = ctx.distance(center, candidates.row(index));
        if max_distance.is_some_and(|m| distance > m) {
            continue;
        }
        if heap.len() < k {
            heap.push(Candidate { distance, index });
        } else if let Some(worst) = heap.peek() {
            let candidate = Candidate { distance, index };
            if candidate.cmp(worst) == Ordering::Less {
                heap.pop();
                heap.push(candidate);
            }
        }
    }
    let short = heap.len() < k;
    let entries: Vec<(usize, f64)> = heap
        .into_sorted_vec()
        .into_iter()
        .map(|c| (c.index, c.distance))
        .collect();
    Ok(NeighborSet { entries, short })
}

/// Prepared per-audit search state: distance context, candidate covariates
/// (always factual), and the test-center source.
pub struct NeighborhoodIndex<'a> {
    ctx: &'a DistanceContext,
    spaces: &'a SearchSpaces,
    candidates: CovariateMatrix,
    /// Covariates the test centers are drawn from; `None` reuses the factual
    /// candidates (standard situation testing).
    test_centers: Option<CovariateMatrix>,
    k: usize,
    max_distance: Option<f64>,
}

impl<'a> NeighborhoodIndex<'a> {
    pub fn new(
        ctx: &'a DistanceContext,
        spaces: &'a SearchSpaces,
        factual: &Dataset,
        counterfactual: Option<&Dataset>,
        k: usize,
        max_distance: Option<f64>,
    ) -> Result<Self> {
        let candidates = ctx.extract(factual)?;
        let test_centers = match counterfactual {
            Some(cf) => {
                if cf.n_rows() != factual.n_rows() {
                    return Err(CstError::ShapeMismatch(format!(
                        "counterfactual dataset has {} rows, factual has {}",
                        cf.n_rows(),
                        factual.n_rows()
                    )));
                }
                Some(ctx.extract(cf)?)
            }
            None => None,
        };
        Ok(Self {
            ctx,
            spaces,
            candidates,
            test_centers,
            k,
            max_distance,
        })
    }

    /// Control and test groups for complainant `c` (a control-space index).
    ///
    /// The control group searches the protected space around the factual
    /// covariates of `c`, excluding `c` itself; the test group searches the
    /// non-protected space around the test center (counterfactual covariates
    /// when present), which is never a member of that space.
    pub fn build_groups(&self, c: usize) -> Result<(NeighborSet, NeighborSet)> {
        let control_center = self.candidates.row(c);
        let control = get_top_k(
            control_center,
            &self.spaces.control,
            self.k,
            self.ctx,
            &self.candidates,
            Some(c),
            self.max_distance,
        )?;
        let test_center = match &self.test_centers {
            Some(m) => m.row(c),
            None => control_center,
        };
        let test = get_top_k(
            test_center,
            &self.spaces.test,
            self.k,
            self.ctx,
            &self.candidates,
            None,
            self.max_distance,
        )?;
        Ok((control, test))
    }
}
