//! Decision models (the audited classifier `b`).

use crate::data::Dataset;
use crate::error::{CstError, Result};

/// A binary decision rule over named covariate columns.
pub trait DecisionModel: Send + Sync {
    /// Covariate columns consumed, in the order expected by [`decide`](Self::decide).
    fn inputs(&self) -> &[String];

    /// Name of the decision column this model produces.
    fn output(&self) -> &str;

    /// Positive-outcome decision for one record's input values.
    fn decide(&self, values: &[f64]) -> bool;

    /// Apply the rule to every record, yielding a 0/1 column.
    fn apply(&self, data: &Dataset) -> Result<Vec<f64>> {
        let columns: Vec<&[f64]> = self
            .inputs()
            .iter()
            .map(|name| data.column(name))
            .collect::<Result<_>>()?;
        let mut buf = vec![0.0; columns.len()];
        let mut out = Vec::with_capacity(data.n_rows());
        for row in 0..data.n_rows() {
            for (b, col) in buf.iter_mut().zip(&columns) {
                *b = col[row];
            }
            out.push(f64::from(u8::from(self.decide(&buf))));
        }
        Ok(out)
    }
}

/// Linear score with a strict threshold: positive iff `Σ wᵢ·xᵢ > threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearThresholdModel {
    inputs: Vec<String>,
    weights: Vec<f64>,
    threshold: f64,
    output: String,
}

impl LinearThresholdModel {
    pub fn new<I, S>(weights: I, threshold: f64, output: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let (inputs, weights): (Vec<String>, Vec<f64>) = weights
            .into_iter()
            .map(|(name, w)| (name.into(), w))
            .unzip();
        Self {
            inputs,
            weights,
            threshold,
            output: output.into(),
        }
    }

    pub fn from_pairs(pairs: &[(String, f64)], threshold: f64, output: &str) -> Result<Self> {
        if pairs.is_empty() {
            return Err(CstError::ClassifierInput(
                "linear threshold model needs at least one weight".into(),
            ));
        }
        Ok(Self::new(
            pairs.iter().map(|(n, w)| (n.clone(), *w)),
            threshold,
            output,
        ))
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn weights(&self) -> impl Iterator<Item = (&str, f64)> {
        self.inputs
            .iter()
            .map(String::as_str)
            .zip(self.weights.iter().copied())
    }
}

impl DecisionModel for LinearThresholdModel {
    fn inputs(&self) -> &[String] {
        &self.inputs
    }

    fn output(&self) -> &str {
        &self.output
    }

    fn decide(&self, values: &[f64]) -> bool {
        debug_assert_eq!(values.len(), self.weights.len());
        let score: f64 = self
            .weights
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum();
        score > self.threshold
    }
}
