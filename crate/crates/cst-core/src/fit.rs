//! Ordinary least squares fitting of linear (and log-linear) ANM nodes.
//!
//! Each node with parents and a linear-form assignment is regressed on
//! `[1, parents...]`; exp-link nodes are fitted on the natural log of the
//! target (which must be strictly positive). The fitted SCM keeps the
//! skeleton's structure with coefficients filled in and the node noise set to
//! a zero-mean normal at the residual standard deviation.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{CstError, Result};
use crate::scm::{Assignment, Link, NoiseFamily, NoiseSpec, Scm};

/// One fitted coefficient with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    /// `"(intercept)"` or the parent name.
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// Per-node fit diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFit {
    pub coefficients: Vec<Coefficient>,
    /// Residuals on the link scale (log scale for exp-link nodes).
    pub residuals: Vec<f64>,
    pub residual_std: f64,
}

impl NodeFit {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Residual table and coefficient estimates for every fitted node.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FitReport {
    pub nodes: BTreeMap<String, NodeFit>,
}

fn ols(node: &str, design: &DMatrix<f64>, target: &DVector<f64>) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = design.nrows();
    let p = design.ncols();
    if n <= p {
        return Err(CstError::RankDeficient(node.to_string()));
    }
    let xtx = design.transpose() * design;
    let xty = design.transpose() * target;
    let inv = xtx
        .clone()
        .try_inverse()
        .ok_or_else(|| CstError::RankDeficient(node.to_string()))?;
    // guard against a numerically singular normal matrix that still inverted
    let svd = xtx.svd(false, false);
    let (max_sv, min_sv) = (
        svd.singular_values.max(),
        svd.singular_values.min(),
    );
    if min_sv <= max_sv * 1e-12 {
        return Err(CstError::RankDeficient(node.to_string()));
    }
    let beta = &inv * xty;
    let fitted = design * &beta;
    let residuals = target - fitted;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let std_errors =
        DVector::from_iterator(p, (0..p).map(|j| (sigma2 * inv[(j, j)]).sqrt()));
    Ok((beta, std_errors, residuals))
}

/// Fit every linear-assignment node that has parents, returning the completed
/// SCM and the fit report. Nodes without parents and random-penalty nodes are
/// left untouched.
pub fn fit_linear_anm(skeleton: &Scm, data: &Dataset) -> Result<(Scm, FitReport)> {
    let mut fitted = skeleton.clone();
    let mut report = FitReport::default();
    let n = data.n_rows();
    for node in &mut fitted.nodes {
        let (terms, link) = match &node.assignment {
            Assignment::Linear { terms: _, link, .. } if !node.parents.is_empty() => {
                (node.parents.clone(), *link)
            }
            _ => continue,
        };
        let observed = data.column(&node.name)?;
        let mut target = Vec::with_capacity(n);
        match link {
            Link::Identity => target.extend_from_slice(observed),
            Link::Exp => {
                for (record, &x) in observed.iter().enumerate() {
                    if x <= 0.0 {
                        return Err(CstError::NonPositiveExpTarget {
                            node: node.name.clone(),
                            record,
                            value: x,
                        });
                    }
                    target.push(x.ln());
                }
            }
        }
        let p = terms.len() + 1;
        let mut design = DMatrix::zeros(n, p);
        for i in 0..n {
            design[(i, 0)] = 1.0;
        }
        for (j, parent) in terms.iter().enumerate() {
            let col = data.column(parent)?;
            for i in 0..n {
                design[(i, j + 1)] = col[i];
            }
        }
        let target = DVector::from_vec(target);
        let (beta, std_errors, residuals) = ols(&node.name, &design, &target)?;

        let mut coefficients = vec![Coefficient {
            term: "(intercept)".into(),
            estimate: beta[0],
            std_error: std_errors[0],
        }];
        let mut fitted_terms = BTreeMap::new();
        for (j, parent) in terms.iter().enumerate() {
            coefficients.push(Coefficient {
                term: parent.clone(),
                estimate: beta[j + 1],
                std_error: std_errors[j + 1],
            });
            fitted_terms.insert(parent.clone(), beta[j + 1]);
        }
        node.assignment = Assignment::Linear {
            intercept: beta[0],
            terms: fitted_terms,
            link,
        };
        let residual_std = {
            let dof = (n - p) as f64;
            (residuals.iter().map(|r| r * r).sum::<f64>() / dof).sqrt()
        };
        node.noise = NoiseSpec::new(NoiseFamily::Normal {
            mean: 0.0,
            std: residual_std,
        });
        report.nodes.insert(
            node.name.clone(),
            NodeFit {
                coefficients,
                residuals: residuals.iter().copied().collect(),
                residual_std,
            },
        );
    }
    Ok((fitted, report))
}
