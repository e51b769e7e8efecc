//! Mixed-type per-attribute distances and the averaged tuple distance.
//!
//! Categorical attributes use the mismatch indicator (0 when equal, 1
//! otherwise); continuous, ordinal, and interval attributes use the Manhattan
//! distance normalized by the attribute's observed range over the factual
//! dataset. The tuple distance is the mean of the per-attribute distances
//! across the relevant attributes — protected and decision columns never
//! enter it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CstError, Result};

/// Measurement kind of an attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    Continuous,
    Ordinal,
    Interval,
    Categorical,
}

impl AttributeKind {
    pub fn is_categorical(self) -> bool {
        self == AttributeKind::Categorical
    }
}

/// Role of an attribute in the audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeRole {
    /// Relevant decision attribute (enters the distance).
    Relevant,
    /// Protected attribute (partitions the search spaces).
    Protected,
    /// The classifier's decision column.
    Decision,
}

/// One attribute's declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub kind: AttributeKind,
    pub role: AttributeRole,
    /// Value marking control-group membership (protected attributes only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_value: Option<f64>,
}

impl AttributeSpec {
    pub fn relevant(name: impl Into<String>, kind: AttributeKind) -> Self {
        Self {
            name: name.into(),
            kind,
            role: AttributeRole::Relevant,
            protected_value: None,
        }
    }

    pub fn protected(name: impl Into<String>, protected_value: f64) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical,
            role: AttributeRole::Protected,
            protected_value: Some(protected_value),
        }
    }

    pub fn decision(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical,
            role: AttributeRole::Decision,
            protected_value: None,
        }
    }
}

/// Typed schema for a dataset: attribute kinds, roles, and the designated
/// positive decision value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSchema {
    pub attributes: Vec<AttributeSpec>,
    /// Value of the decision column denoting the positive outcome.
    pub positive_decision: f64,
}

impl AttributeSchema {
    pub fn new(attributes: Vec<AttributeSpec>, positive_decision: f64) -> Self {
        Self {
            attributes,
            positive_decision,
        }
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn relevant(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes
            .iter()
            .filter(|a| a.role == AttributeRole::Relevant)
    }

    pub fn protected(&self) -> impl Iterator<Item = &AttributeSpec> {
        self.attributes
            .iter()
            .filter(|a| a.role == AttributeRole::Protected)
    }

    /// The single decision attribute.
    pub fn decision(&self) -> Result<&AttributeSpec> {
        let mut found = self
            .attributes
            .iter()
            .filter(|a| a.role == AttributeRole::Decision);
        let first = found
            .next()
            .ok_or_else(|| CstError::InvalidSchema("no decision attribute declared".into()))?;
        if found.next().is_some() {
            return Err(CstError::InvalidSchema(
                "more than one decision attribute declared".into(),
            ));
        }
        Ok(first)
    }

    /// Structural checks plus presence of every declared column in `data`.
    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        self.decision()?;
        for attr in &self.attributes {
            if !data.has_column(&attr.name) {
                return Err(CstError::MissingColumn(attr.name.clone()));
            }
            if attr.role == AttributeRole::Protected && attr.protected_value.is_none() {
                return Err(CstError::InvalidSchema(format!(
                    "protected attribute '{}' has no protected value",
                    attr.name
                )));
            }
        }
        Ok(())
    }

    /// True where the decision column carries a negative outcome.
    pub fn negative_outcomes(&self, data: &Dataset) -> Result<Vec<bool>> {
        let decision = self.decision()?;
        let column = data.column(&decision.name)?;
        Ok(column.iter().map(|&v| v != self.positive_decision).collect())
    }
}

/// Observed `[min, max]` of one attribute over the factual dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeRange {
    pub min: f64,
    pub max: f64,
}

impl AttributeRange {
    pub fn width(&self) -> f64 {
        self.max - self.min
    }

    /// A constant column has no usable range.
    pub fn is_degenerate(&self) -> bool {
        self.width() == 0.0
    }
}

/// Ranges of all non-categorical attributes, computed once over `D`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RangeTable {
    ranges: BTreeMap<String, AttributeRange>,
}

impl RangeTable {
    pub fn get(&self, name: &str) -> Option<AttributeRange> {
        self.ranges.get(name).copied()
    }

    /// Names of degenerate (constant) attributes, for diagnostics.
    pub fn degenerate(&self) -> Vec<&str> {
        self.ranges
            .iter()
            .filter(|(_, r)| r.is_degenerate())
            .map(|(n, _)| n.as_str())
            .collect()
    }
}

/// Per-attribute min/max over the factual dataset. Ranges are computed on `D`
/// only and reused for counterfactual search centers, which may fall outside
/// them — per-attribute distances above 1 are allowed rather than clamped.
pub fn attribute_ranges(data: &Dataset, schema: &AttributeSchema) -> Result<RangeTable> {
    if data.is_empty() {
        return Err(CstError::Other("cannot take ranges of an empty dataset".into()));
    }
    let mut ranges = BTreeMap::new();
    for attr in &schema.attributes {
        if attr.kind.is_categorical() {
            continue;
        }
        let column = data.column(&attr.name)?;
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in column {
            min = min.min(v);
            max = max.max(v);
        }
        ranges.insert(attr.name.clone(), AttributeRange { min, max });
    }
    Ok(RangeTable { ranges })
}

/// Normalization applied to non-categorical attribute distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    #[default]
    DatasetMinMax,
    None,
}

/// Distance configuration (the per-kind distance functions are fixed).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DistanceSpec {
    #[serde(default)]
    pub normalization: Normalization,
}

/// Distance between two values of a single attribute.
///
/// Categorical: mismatch indicator. Otherwise `|v - v'| / (max - min)` when a
/// range is supplied, raw `|v - v'|` when not (unnormalized mode). Degenerate
/// ranges admit only equal values.
pub fn per_attribute_distance(
    kind: AttributeKind,
    v: f64,
    v_other: f64,
    range: Option<AttributeRange>,
) -> Result<f64> {
    if kind.is_categorical() {
        return Ok(if v == v_other { 0.0 } else { 1.0 });
    }
    match range {
        Some(r) if r.is_degenerate() => {
            if v == v_other {
                Ok(0.0)
            } else {
                Err(CstError::DegenerateRange(format!("{v} vs {v_other}")))
            }
        }
        Some(r) => Ok((v - v_other).abs() / r.width()),
        None => Ok((v - v_other).abs()),
    }
}

/// Tuple distance: mean per-attribute distance across the relevant attributes.
///
/// `x` and `x_other` are full-width tuples ordered as `schema.attributes`;
/// only `Relevant` entries contribute. Degenerate attributes contribute 0.
pub fn tuple_distance(
    x: &[f64],
    x_other: &[f64],
    schema: &AttributeSchema,
    ranges: &RangeTable,
    spec: DistanceSpec,
) -> Result<f64> {
    if x.len() != schema.attributes.len() || x_other.len() != schema.attributes.len() {
        return Err(CstError::ShapeMismatch(format!(
            "tuples must have {} attributes",
            schema.attributes.len()
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (i, attr) in schema.attributes.iter().enumerate() {
        if attr.role != AttributeRole::Relevant {
            continue;
        }
        count += 1;
        if attr.kind.is_categorical() {
            total += per_attribute_distance(attr.kind, x[i], x_other[i], None)?;
            continue;
        }
        let range = match spec.normalization {
            Normalization::DatasetMinMax => ranges.get(&attr.name),
            Normalization::None => None,
        };
        if range.is_some_and(|r| r.is_degenerate()) {
            continue; // constant attribute carries no information
        }
        total += per_attribute_distance(attr.kind, x[i], x_other[i], range)?;
    }
    if count == 0 {
        return Err(CstError::InvalidSchema(
            "no relevant attributes to measure distance over".into(),
        ));
    }
    Ok(total / count as f64)
}

/// Precompiled distance evaluator over the relevant attributes.
///
/// Extracting the relevant columns once and folding the normalization into a
/// per-attribute reciprocal keeps the audit's k-NN scans cheap.
#[derive(Debug, Clone)]
pub struct DistanceContext {
    attrs: Vec<AttrCtx>,
    warnings: Vec<String>,
}

#[derive(Debug, Clone)]
struct AttrCtx {
    name: String,
    categorical: bool,
    /// 1/(max-min) under min-max normalization, 1 when unnormalized,
    /// 0 for degenerate attributes (they contribute no distance).
    inv_width: f64,
}

impl DistanceContext {
    pub fn new(schema: &AttributeSchema, ranges: &RangeTable, spec: DistanceSpec) -> Result<Self> {
        let mut attrs = Vec::new();
        let mut warnings = Vec::new();
        for attr in schema.relevant() {
            let categorical = attr.kind.is_categorical();
            let inv_width = if categorical {
                1.0
            } else {
                match spec.normalization {
                    Normalization::None => 1.0,
                    Normalization::DatasetMinMax => {
                        let range = ranges.get(&attr.name).ok_or_else(|| {
                            CstError::Other(format!("no range computed for '{}'", attr.name))
                        })?;
                        if range.is_degenerate() {
                            warnings.push(format!(
                                "attribute '{}' is constant; it contributes no distance",
                                attr.name
                            ));
                            0.0
                        } else {
                            1.0 / range.width()
                        }
                    }
                }
            };
            attrs.push(AttrCtx {
                name: attr.name.clone(),
                categorical,
                inv_width,
            });
        }
        if attrs.is_empty() {
            return Err(CstError::InvalidSchema(
                "no relevant attributes to measure distance over".into(),
            ));
        }
        Ok(Self { attrs, warnings })
    }

    /// Build a context straight from a dataset (ranges computed internally).
    pub fn from_dataset(
        data: &Dataset,
        schema: &AttributeSchema,
        spec: DistanceSpec,
    ) -> Result<Self> {
        let ranges = attribute_ranges(data, schema)?;
        Self::new(schema, &ranges, spec)
    }

    pub fn n_attributes(&self) -> usize {
        self.attrs.len()
    }

    /// Degenerate-attribute diagnostics collected at construction.
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Distance between two relevant-attribute vectors (same layout as
    /// [`extract`](Self::extract) rows).
    #[inline]
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut total = 0.0;
        for (i, attr) in self.attrs.iter().enumerate() {
            if attr.categorical {
                if a[i] != b[i] {
                    total += 1.0;
                }
            } else {
                total += (a[i] - b[i]).abs() * attr.inv_width;
            }
        }
        total / self.attrs.len() as f64
    }

    /// Row-major matrix of the relevant attribute columns of `data`.
    pub fn extract(&self, data: &Dataset) -> Result<CovariateMatrix> {
        let columns: Vec<&[f64]> = self
            .attrs
            .iter()
            .map(|a| data.column(&a.name))
            .collect::<Result<_>>()?;
        let width = columns.len();
        let rows = data.n_rows();
        let mut values = vec![0.0; rows * width];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                values[i * width + j] = v;
            }
        }
        Ok(CovariateMatrix { values, width, rows })
    }
}

/// Dense row-major view of the relevant covariates.
#[derive(Debug, Clone)]
pub struct CovariateMatrix {
    values: Vec<f64>,
    width: usize,
    rows: usize,
}

impl CovariateMatrix {
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_attr_schema() -> AttributeSchema {
        AttributeSchema::new(
            vec![
                AttributeSpec::relevant("u", AttributeKind::Continuous),
                AttributeSpec::relevant("v", AttributeKind::Continuous),
                AttributeSpec::protected("a", 1.0),
                AttributeSpec::decision("y"),
            ],
            1.0,
        )
    }

    #[test]
    fn ranges_match_scan() {
        let data = Dataset::from_columns([
            ("u", vec![1.0, 5.0, 3.0]),
            ("v", vec![4.0, 4.0, 4.0]),
            ("a", vec![1.0, 0.0, 1.0]),
            ("y", vec![0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let table = attribute_ranges(&data, &two_attr_schema()).unwrap();
        assert_eq!(table.get("u").unwrap(), AttributeRange { min: 1.0, max: 5.0 });
        assert!(table.get("v").unwrap().is_degenerate());
        assert_eq!(table.degenerate(), vec!["v"]);
        assert!(table.get("a").is_none()); // categorical: no range
    }

    #[test]
    fn per_attribute_cases() {
        let r = AttributeRange { min: 0.0, max: 1.0 };
        assert_eq!(
            per_attribute_distance(AttributeKind::Categorical, 3.0, 3.0, None).unwrap(),
            0.0
        );
        assert_eq!(
            per_attribute_distance(AttributeKind::Categorical, 3.0, 4.0, None).unwrap(),
            1.0
        );
        assert_relative_eq!(
            per_attribute_distance(AttributeKind::Continuous, 0.2, 0.5, Some(r)).unwrap(),
            0.3
        );
        // hand-evaluated normalized Manhattan distance on the loan scale
        let loan = AttributeRange { min: 0.0, max: 200_000.0 };
        assert_relative_eq!(
            per_attribute_distance(AttributeKind::Continuous, 35_000.0, 50_796.0, Some(loan))
                .unwrap(),
            0.07898,
            max_relative = 1e-12
        );
        let degenerate = AttributeRange { min: 4.0, max: 4.0 };
        assert!(per_attribute_distance(AttributeKind::Continuous, 4.0, 5.0, Some(degenerate))
            .is_err());
        assert_eq!(
            per_attribute_distance(AttributeKind::Continuous, 4.0, 4.0, Some(degenerate)).unwrap(),
            0.0
        );
    }

    #[test]
    fn tuple_distance_is_mean_of_components() {
        let schema = AttributeSchema::new(
            vec![
                AttributeSpec::relevant("c", AttributeKind::Categorical),
                AttributeSpec::relevant("m", AttributeKind::Continuous),
                AttributeSpec::protected("a", 1.0),
                AttributeSpec::decision("y"),
            ],
            1.0,
        );
        let data = Dataset::from_columns([
            ("c", vec![0.0, 1.0]),
            ("m", vec![0.0, 10.0]),
            ("a", vec![1.0, 0.0]),
            ("y", vec![0.0, 1.0]),
        ])
        .unwrap();
        let ranges = attribute_ranges(&data, &schema).unwrap();
        // per-attribute distances 1 (mismatch) and 0.3 -> mean 0.65
        let d = tuple_distance(
            &[0.0, 3.0, 1.0, 0.0],
            &[1.0, 6.0, 0.0, 1.0],
            &schema,
            &ranges,
            DistanceSpec::default(),
        )
        .unwrap();
        assert_relative_eq!(d, 0.65);
        // identity
        let z = tuple_distance(
            &[0.0, 3.0, 1.0, 0.0],
            &[0.0, 3.0, 0.0, 1.0], // differs only on protected/decision
            &schema,
            &ranges,
            DistanceSpec::default(),
        )
        .unwrap();
        assert_eq!(z, 0.0);
    }

    #[test]
    fn context_agrees_with_independent_expression() {
        // duplicate-implementation oracle on random pairs
        let schema = two_attr_schema();
        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let n = 60;
        let u: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
        let data = Dataset::from_columns([
            ("u", u.clone()),
            ("v", v.clone()),
            ("a", vec![0.0; n]),
            ("y", vec![0.0; n]),
        ])
        .unwrap();
        let ranges = attribute_ranges(&data, &schema).unwrap();
        let ctx = DistanceContext::new(&schema, &ranges, DistanceSpec::default()).unwrap();
        let matrix = ctx.extract(&data).unwrap();
        let (ur, vr) = (ranges.get("u").unwrap(), ranges.get("v").unwrap());
        for _ in 0..100 {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let expected = ((u[i] - u[j]).abs() / (ur.max - ur.min)
                + (v[i] - v[j]).abs() / (vr.max - vr.min))
                / 2.0;
            let got = ctx.distance(matrix.row(i), matrix.row(j));
            assert_relative_eq!(got, expected, max_relative = 1e-12);
            // symmetry
            assert_eq!(got, ctx.distance(matrix.row(j), matrix.row(i)));
        }
    }
}
