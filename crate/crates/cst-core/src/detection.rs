//! Δp statistics, Wald confidence intervals, discrimination decisions, and
//! the CST / ST / CF audit runners.
//!
//! For every complainant (each record of the control search space, regardless
//! of its own decision), the runner builds the control and test groups,
//! compares negative-decision rates, attaches a Wald interval, and decides
//! potential discrimination (`Δp > τ`) and statistical validity (the interval
//! excludes τ from below). Per-complainant work is independent and fans out
//! across a rayon pool; rows are emitted in ascending complainant order, so
//! reports are identical regardless of worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::Dataset;
use crate::error::{CstError, Result};
use crate::metric::{attribute_ranges, AttributeSchema, DistanceContext, DistanceSpec};
use crate::neighborhood::{
    partition_search_spaces, NeighborSet, NeighborhoodIndex, ProtectedSpec, SearchSpaces,
};
use crate::scm::{CounterfactualDataset, Intervention};

/// Which variance formula backs the Wald interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// The difference form `(p_c(1-p_c) - p_t(1-p_t)) / k`, with a negative
    /// radicand clamped to zero and flagged.
    #[default]
    AsWritten,
    /// Conventional two-proportion sum `p_c(1-p_c)/k + p_t(1-p_t)/k`.
    StandardSum,
}

/// Audit configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    /// Group size.
    pub k: usize,
    /// Significance level.
    pub alpha: f64,
    /// Minimum deviation counted as discrimination.
    pub tau: f64,
    /// Count the search centers into the rates (denominators become k+1).
    pub include_centers: bool,
    pub variance_mode: VarianceMode,
    /// Optional maximum-allowed distance constraint on group members.
    pub max_distance: Option<f64>,
    pub distance: DistanceSpec,
    /// Intervention behind the counterfactual dataset; also selects the
    /// protected attributes used to partition the search spaces.
    pub intervention: Option<Intervention>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            k: 15,
            alpha: 0.05,
            tau: 0.0,
            include_centers: false,
            variance_mode: VarianceMode::default(),
            max_distance: None,
            distance: DistanceSpec::default(),
            intervention: None,
        }
    }
}

impl AuditConfig {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(CstError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CstError::InvalidConfig(format!(
                "alpha must lie in (0,1), got {}",
                self.alpha
            )));
        }
        if self.tau < 0.0 || self.tau.is_nan() {
            return Err(CstError::InvalidConfig(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Proportion of negative decisions in a group, optionally counting the
/// search center (which turns the denominator into `|group| + 1`).
pub fn negative_rate(
    group: &NeighborSet,
    negative: &[bool],
    include_center: bool,
    center_negative: Option<bool>,
) -> Result<f64> {
    let mut count = group.indices().filter(|&i| negative[i]).count();
    let mut denom = group.len();
    if include_center {
        let center = center_negative.ok_or_else(|| {
            CstError::InvalidConfig("include_centers set without a center decision".into())
        })?;
        count += usize::from(center);
        denom += 1;
    }
    if denom == 0 {
        return Err(CstError::Other("empty group with centers excluded".into()));
    }
    Ok(count as f64 / denom as f64)
}

/// A Wald confidence interval around Δp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaldCi {
    pub lower: f64,
    pub upper: f64,
    /// Set when the as-written radicand was negative and clamped to zero.
    pub clamped: bool,
}

impl WaldCi {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn z_quantile(alpha: f64) -> f64 {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(1.0 - alpha / 2.0)
}

/// Two-sided Wald interval `[Δp - w, Δp + w]` with
/// `w = z_{α/2} · sqrt(variance)` per the configured variance mode.
pub fn wald_ci(p_c: f64, p_t: f64, k: usize, alpha: f64, mode: VarianceMode) -> WaldCi {
    let delta_p = p_c - p_t;
    let k = k.max(1) as f64;
    let (variance, clamped) = match mode {
        VarianceMode::AsWritten => {
            let radicand = (p_c * (1.0 - p_c) - p_t * (1.0 - p_t)) / k;
            if radicand < 0.0 {
                (0.0, true)
            } else {
                (radicand, false)
            }
        }
        VarianceMode::StandardSum => {
            ((p_c * (1.0 - p_c) + p_t * (1.0 - p_t)) / k, false)
        }
    };
    let w = z_quantile(alpha) * variance.sqrt();
    WaldCi {
        lower: delta_p - w,
        upper: delta_p + w,
        clamped,
    }
}

/// Outcome of the discrimination decision for one complainant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    /// `Δp > τ`.
    pub discriminated: bool,
    /// Discriminated and the Wald interval excludes τ from below.
    pub significant: bool,
}

/// Apply the discrimination and statistical-validity rules.
///
/// Significance is one-sided (`ci.lower > τ`), matching the alternative
/// hypothesis that the true difference exceeds τ.
pub fn decide(delta_p: f64, ci: Option<&WaldCi>, tau: f64) -> Decision {
    let discriminated = delta_p > tau;
    let significant = discriminated && ci.is_some_and(|ci| ci.lower > tau);
    Decision {
        discriminated,
        significant,
    }
}

/// Diagnostic flags attached to a complainant's row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RowFlags {
    pub short_control: bool,
    pub short_test: bool,
    pub clamped_ci: bool,
}

impl RowFlags {
    pub fn any(&self) -> bool {
        self.short_control || self.short_test || self.clamped_ci
    }

    /// Stable semicolon-joined rendering for the report CSV.
    pub fn render(&self) -> String {
        let mut parts = Vec::new();
        if self.short_control {
            parts.push("short-ctr");
        }
        if self.short_test {
            parts.push("short-tst");
        }
        if self.clamped_ci {
            parts.push("clamped-ci");
        }
        parts.join(";")
    }
}

/// Per-complainant audit outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplainantResult {
    /// Record index of the complainant in the factual dataset.
    pub index: usize,
    pub p_c: f64,
    pub p_t: f64,
    pub delta_p: f64,
    pub ci: Option<WaldCi>,
    pub discriminated: bool,
    pub significant: bool,
    /// Denominators actually used for `p_c` / `p_t`.
    pub control_size: usize,
    pub test_size: usize,
    pub flags: RowFlags,
    /// A recorded (non-fatal) per-complainant failure.
    pub error: Option<String>,
}

/// Audit method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditMethod {
    Cst,
    St,
    Cf,
}

impl AuditMethod {
    pub fn label(&self, include_centers: bool) -> &'static str {
        match self {
            AuditMethod::Cst if include_centers => "CST",
            AuditMethod::Cst => "CST (w/o)",
            AuditMethod::St => "ST",
            AuditMethod::Cf => "CF",
        }
    }
}

impl std::fmt::Display for AuditMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AuditMethod::Cst => "cst",
            AuditMethod::St => "st",
            AuditMethod::Cf => "cf",
        };
        f.write_str(s)
    }
}

/// Run-level counts over all complainants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: AuditMethod,
    /// Group size (0 for CF, which is k-independent).
    pub k: usize,
    pub include_centers: bool,
    /// Number of complainants audited (`|D_c|`).
    pub complainants: usize,
    pub discriminated: usize,
    pub significant: usize,
    /// `100 · discriminated / complainants`.
    pub pct_discriminated: f64,
}

/// Full audit output: one row per complainant plus the run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub rows: Vec<ComplainantResult>,
    pub summary: RunSummary,
}

impl DiscriminationReport {
    pub fn discriminated_indices(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.discriminated)
            .map(|r| r.index)
            .collect()
    }

    /// Degenerate-attribute and short-group diagnostics, aggregated.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        let short = self
            .rows
            .iter()
            .filter(|r| r.flags.short_control || r.flags.short_test)
            .count();
        if short > 0 {
            out.push(format!("{short} complainant(s) had short groups"));
        }
        let clamped = self.rows.iter().filter(|r| r.flags.clamped_ci).count();
        if clamped > 0 {
            out.push(format!("{clamped} confidence interval(s) clamped at zero radicand"));
        }
        let failed = self.rows.iter().filter(|r| r.error.is_some()).count();
        if failed > 0 {
            out.push(format!("{failed} complainant(s) failed and were recorded"));
        }
        out
    }
}

fn summarize(
    method: AuditMethod,
    k: usize,
    include_centers: bool,
    rows: &[ComplainantResult],
) -> RunSummary {
    let complainants = rows.len();
    let discriminated = rows.iter().filter(|r| r.discriminated).count();
    let significant = rows.iter().filter(|r| r.significant).count();
    let pct = if complainants == 0 {
        0.0
    } else {
        100.0 * discriminated as f64 / complainants as f64
    };
    RunSummary {
        method,
        k,
        include_centers,
        complainants,
        discriminated,
        significant,
        pct_discriminated: pct,
    }
}

/// Resolve the protected spec used to partition the search spaces: the
/// intervened attributes when an intervention is known, every schema-declared
/// protected attribute otherwise.
fn protected_spec(
    schema: &AttributeSchema,
    intervention: Option<&Intervention>,
) -> Result<ProtectedSpec> {
    let mut attributes = Vec::new();
    match intervention {
        Some(iv) => {
            for target in iv.targets() {
                let attr = schema.attribute(target).ok_or_else(|| {
                    CstError::InvalidSchema(format!(
                        "intervention target '{target}' is not in the schema"
                    ))
                })?;
                let value = attr.protected_value.ok_or_else(|| {
                    CstError::InvalidSchema(format!(
                        "attribute '{target}' has no protected value"
                    ))
                })?;
                attributes.push((attr.name.clone(), value));
            }
        }
        None => {
            for attr in schema.protected() {
                let value = attr.protected_value.ok_or_else(|| {
                    CstError::InvalidSchema(format!(
                        "attribute '{}' has no protected value",
                        attr.name
                    ))
                })?;
                attributes.push((attr.name.clone(), value));
            }
        }
    }
    if attributes.is_empty() {
        return Err(CstError::InvalidSchema(
            "no protected attributes to partition on".into(),
        ));
    }
    Ok(ProtectedSpec::new(attributes))
}

struct AuditState<'a> {
    index: NeighborhoodIndex<'a>,
    negative: Vec<bool>,
    /// Center decisions for the test rate (counterfactual outcomes for CST).
    center_test_negative: Option<Vec<bool>>,
    spaces: &'a SearchSpaces,
}

fn audit_complainant(c: usize, state: &AuditState<'_>, cfg: &AuditConfig) -> ComplainantResult {
    let failed = |message: String| ComplainantResult {
        index: c,
        p_c: f64::NAN,
        p_t: f64::NAN,
        delta_p: f64::NAN,
        ci: None,
        discriminated: false,
        significant: false,
        control_size: 0,
        test_size: 0,
        flags: RowFlags::default(),
        error: Some(message),
    };
    let (control, test) = match state.index.build_groups(c) {
        Ok(groups) => groups,
        Err(e) => return failed(e.to_string()),
    };
    let center_control = cfg.include_centers.then(|| state.negative[c]);
    let center_test = match (&state.center_test_negative, cfg.include_centers) {
        (Some(cf), true) => Some(cf[c]),
        _ => None,
    };
    let p_c = match negative_rate(&control, &state.negative, cfg.include_centers, center_control) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let p_t = match negative_rate(&test, &state.negative, cfg.include_centers, center_test) {
        Ok(p) => p,
        Err(e) => return failed(e.to_string()),
    };
    let delta_p = p_c - p_t;
    let control_size = control.len() + usize::from(cfg.include_centers);
    let test_size = test.len() + usize::from(cfg.include_centers);
    // The interval formula carries a single group size; under short groups
    // the smaller effective denominator is the conservative choice.
    let ci_k = control_size.min(test_size);
    let ci = wald_ci(p_c, p_t, ci_k, cfg.alpha, cfg.variance_mode);
    let decision = decide(delta_p, Some(&ci), cfg.tau);
    ComplainantResult {
        index: c,
        p_c,
        p_t,
        delta_p,
        ci: Some(ci),
        discriminated: decision.discriminated,
        significant: decision.significant,
        control_size,
        test_size,
        flags: RowFlags {
            short_control: control.short,
            short_test: test.short,
            clamped_ci: ci.clamped,
        },
        error: None,
    }
}

fn run_knn_audit(
    data: &Dataset,
    counterfactual: Option<&CounterfactualDataset>,
    schema: &AttributeSchema,
    cfg: &AuditConfig,
    method: AuditMethod,
) -> Result<DiscriminationReport> {
    cfg.validate()?;
    schema.check_against(data)?;
    let include_centers = match method {
        AuditMethod::St => false, // standard situation testing always excludes them
        _ => cfg.include_centers,
    };
    let effective = AuditConfig {
        include_centers,
        ..cfg.clone()
    };

    let intervention = counterfactual
        .map(|cf| &cf.intervention)
        .or(cfg.intervention.as_ref());
    let spec = protected_spec(schema, intervention)?;
    let spaces = partition_search_spaces(data, &spec)?;

    let ranges = attribute_ranges(data, schema)?;
    let ctx = DistanceContext::new(schema, &ranges, cfg.distance)?;
    let index = NeighborhoodIndex::new(
        &ctx,
        &spaces,
        data,
        counterfactual.map(|cf| &cf.data),
        cfg.k,
        cfg.max_distance,
    )?;

    let negative = schema.negative_outcomes(data)?;
    let center_test_negative = match counterfactual {
        Some(cf) => Some(schema.negative_outcomes(&cf.data)?),
        None => None,
    };
    let state = AuditState {
        index,
        negative,
        center_test_negative,
        spaces: &spaces,
    };

    let rows: Vec<ComplainantResult> = state
        .spaces
        .control
        .par_iter()
        .map(|&c| audit_complainant(c, &state, &effective))
        .collect();

    let summary = summarize(method, cfg.k, include_centers, &rows);
    Ok(DiscriminationReport { rows, summary })
}

/// Counterfactual situation testing: control groups around the factual
/// complainants, test groups around their counterfactuals.
pub fn run_cst(
    data: &Dataset,
    counterfactual: &CounterfactualDataset,
    schema: &AttributeSchema,
    cfg: &AuditConfig,
) -> Result<DiscriminationReport> {
    if counterfactual.data.n_rows() != data.n_rows() {
        return Err(CstError::ShapeMismatch(
            "counterfactual dataset is not aligned with the factual dataset".into(),
        ));
    }
    run_knn_audit(data, Some(counterfactual), schema, cfg, AuditMethod::Cst)
}

/// Standard situation testing: both groups are built around the factual
/// complainant and the search centers are always excluded from the rates.
pub fn run_st(
    data: &Dataset,
    schema: &AttributeSchema,
    cfg: &AuditConfig,
) -> Result<DiscriminationReport> {
    run_knn_audit(data, None, schema, cfg, AuditMethod::St)
}

/// Counterfactual fairness baseline: a complainant is flagged iff the factual
/// negative decision flips positive in the counterfactual. The reported rates
/// are the negative-outcome indicators of the two center decisions; no
/// interval applies (the comparison is k-independent).
pub fn run_cf(
    data: &Dataset,
    counterfactual: &CounterfactualDataset,
    schema: &AttributeSchema,
) -> Result<DiscriminationReport> {
    schema.check_against(data)?;
    if counterfactual.data.n_rows() != data.n_rows() {
        return Err(CstError::ShapeMismatch(
            "counterfactual dataset is not aligned with the factual dataset".into(),
        ));
    }
    let spec = protected_spec(schema, Some(&counterfactual.intervention))?;
    let spaces = partition_search_spaces(data, &spec)?;
    let negative = schema.negative_outcomes(data)?;
    let cf_negative = schema.negative_outcomes(&counterfactual.data)?;
    let rows: Vec<ComplainantResult> = spaces
        .control
        .iter()
        .map(|&c| {
            let p_c = f64::from(u8::from(negative[c]));
            let p_t = f64::from(u8::from(cf_negative[c]));
            let discriminated = negative[c] && !cf_negative[c];
            ComplainantResult {
                index: c,
                p_c,
                p_t,
                delta_p: p_c - p_t,
                ci: None,
                discriminated,
                significant: false,
                control_size: 1,
                test_size: 1,
                flags: RowFlags::default(),
                error: None,
            }
        })
        .collect();
    let summary = summarize(AuditMethod::Cf, 0, true, &rows);
    Ok(DiscriminationReport { rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn group(indices: &[usize]) -> NeighborSet {
        NeighborSet {
            entries: indices.iter().map(|&i| (i, 0.0)).collect(),
            short: false,
        }
    }

    #[test]
    fn negative_rate_counts() {
        // decisions [0,0,1] as negativity [true,true,false]
        let negative = vec![true, true, false];
        let g = group(&[0, 1, 2]);
        assert_relative_eq!(
            negative_rate(&g, &negative, false, None).unwrap(),
            2.0 / 3.0
        );
        assert_relative_eq!(
            negative_rate(&g, &negative, true, Some(true)).unwrap(),
            3.0 / 4.0
        );
        let empty = group(&[]);
        assert_eq!(negative_rate(&empty, &negative, true, Some(false)).unwrap(), 0.0);
        assert!(negative_rate(&g, &negative, true, None).is_err());
        assert!(negative_rate(&empty, &negative, false, None).is_err());
    }

    #[test]
    fn wald_golden_and_degenerate_cases() {
        // golden row: p_c = 1, p_t = 0 collapses to [1, 1]
        for mode in [VarianceMode::AsWritten, VarianceMode::StandardSum] {
            for k in [1, 15, 50] {
                let ci = wald_ci(1.0, 0.0, k, 0.05, mode);
                assert_eq!((ci.lower, ci.upper), (1.0, 1.0));
                assert!(!ci.clamped);
            }
        }
        // algebraic zero of the as-written radicand
        let ci = wald_ci(0.5, 0.5, 10, 0.05, VarianceMode::AsWritten);
        assert_eq!((ci.lower, ci.upper), (0.0, 0.0));
        assert!(!ci.clamped);
        // negative radicand (p_t nearer 1/2 than p_c) clamps and flags
        let ci = wald_ci(0.9, 0.5, 10, 0.05, VarianceMode::AsWritten);
        assert!(ci.clamped);
        assert_eq!(ci.width(), 0.0);
        assert_relative_eq!(ci.lower, 0.4);
        let ci = wald_ci(0.9, 0.5, 10, 0.05, VarianceMode::StandardSum);
        assert!(!ci.clamped);
        assert!(ci.width() > 0.0);
        // zero width whenever both proportions are extreme
        for p_c in [0.0, 1.0] {
            for p_t in [0.0, 1.0] {
                let ci = wald_ci(p_c, p_t, 20, 0.05, VarianceMode::AsWritten);
                assert_eq!(ci.width(), 0.0, "p_c={p_c}, p_t={p_t}");
                assert!(!ci.clamped);
            }
        }
    }

    #[test]
    fn wald_standard_sum_hand_value() {
        // w = 1.959964 * sqrt(0.8125*0.1875/16) with p_t = 0
        let ci = wald_ci(0.8125, 0.0, 16, 0.05, VarianceMode::StandardSum);
        let w = (ci.upper - ci.lower) / 2.0;
        let expected = 1.959964 * (0.8125_f64 * 0.1875 / 16.0).sqrt();
        assert_relative_eq!(w, expected, max_relative = 1e-6);
        assert_relative_eq!(w, 0.1913, epsilon = 1e-4);
        assert_relative_eq!(
            (ci.upper + ci.lower) / 2.0,
            0.8125,
            max_relative = 1e-12
        );
    }

    #[test]
    fn z_quantile_matches_reference() {
        assert_relative_eq!(z_quantile(0.05), 1.959964, max_relative = 1e-6);
    }

    #[test]
    fn decision_rules() {
        let ci = WaldCi { lower: 0.36, upper: 0.77, clamped: false };
        let d = decide(0.56, Some(&ci), 0.0);
        assert!(d.discriminated && d.significant);

        let ci = WaldCi { lower: -0.04, upper: 0.16, clamped: false };
        let d = decide(0.06, Some(&ci), 0.0);
        assert!(d.discriminated && !d.significant);

        let d = decide(0.0, None, 0.0);
        assert!(!d.discriminated && !d.significant);
    }
}
