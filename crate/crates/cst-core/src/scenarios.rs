//! Built-in benchmark scenarios: the synthetic loan application setting and
//! the law-school admissions setting, with their threshold classifiers.

use crate::data::Dataset;
use crate::error::{CstError, Result};
use crate::fit::{fit_linear_anm, FitReport};
use crate::metric::{AttributeKind, AttributeSchema, AttributeSpec};
use crate::model::{DecisionModel, LinearThresholdModel};
use crate::scm::{
    sample_dataset, Assignment, LatentRecord, NodeKind, NodeSpec, NoiseFamily, NoiseSpec, Scm,
};

/// A generated scenario: dataset with decisions, the generating SCM, and all
/// latent draws (enabling oracle abduction).
#[derive(Debug, Clone)]
pub struct ScenarioData {
    pub dataset: Dataset,
    pub scm: Scm,
    pub latents: LatentRecord,
}

// ── Loan scenario ─────────────────────────────────────────────────────

pub const LOAN_DEFAULT_N: usize = 5000;

/// Loan-scenario SCM: gender gates per-record random penalties on annual
/// salary and account balance.
///
/// `A ~ Ber(0.45)`;
/// `X1 <- (-1500)·Poi(10)·A + U1` with `U1 ~ 10000·Poi(10)`;
/// `X2 <- (-300)·ChiSq(4)·A + 0.3·X1 + U2` with `U2 ~ 2500·N(0,1)`.
pub fn loan_scm() -> Scm {
    Scm::new(vec![
        NodeSpec::protected_root("A", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.45 })),
        NodeSpec {
            name: "X1".into(),
            kind: NodeKind::Covariate,
            parents: vec!["A".into()],
            assignment: Assignment::RandomPenalty {
                coefficient: -1500.0,
                factor: NoiseSpec::new(NoiseFamily::Poisson { lambda: 10.0 }),
                indicator: "A".into(),
                intercept: 0.0,
                terms: Default::default(),
            },
            noise: NoiseSpec::scaled(NoiseFamily::Poisson { lambda: 10.0 }, 10_000.0),
        },
        NodeSpec {
            name: "X2".into(),
            kind: NodeKind::Covariate,
            parents: vec!["X1".into(), "A".into()],
            assignment: Assignment::RandomPenalty {
                coefficient: -300.0,
                factor: NoiseSpec::new(NoiseFamily::ChiSquared { df: 4.0 }),
                indicator: "A".into(),
                intercept: 0.0,
                terms: [("X1".to_string(), 0.3)].into(),
            },
            noise: NoiseSpec::scaled(NoiseFamily::Normal { mean: 0.0, std: 1.0 }, 2_500.0),
        },
    ])
}

/// Loan decision rule: approve iff `X1 + 5·X2 > 225000` (strict).
pub fn loan_classifier(x1: f64, x2: f64) -> bool {
    x1 + 5.0 * x2 > 225_000.0
}

pub fn loan_model() -> LinearThresholdModel {
    LinearThresholdModel::new([("X1", 1.0), ("X2", 5.0)], 225_000.0, "Y")
}

pub fn loan_schema() -> AttributeSchema {
    AttributeSchema::new(
        vec![
            AttributeSpec::protected("A", 1.0),
            AttributeSpec::relevant("X1", AttributeKind::Continuous),
            AttributeSpec::relevant("X2", AttributeKind::Continuous),
            AttributeSpec::decision("Y"),
        ],
        1.0,
    )
}

/// Sample the loan dataset with decisions and keep every latent draw.
pub fn generate_loan(n: usize, seed: u64) -> Result<ScenarioData> {
    let scm = loan_scm();
    let (mut dataset, latents) = sample_dataset(&scm, n, seed)?;
    let decisions = loan_model().apply(&dataset)?;
    dataset.insert_column("Y", decisions)?;
    Ok(ScenarioData {
        dataset,
        scm,
        latents,
    })
}

// ── Law-school scenario ───────────────────────────────────────────────

/// Admission cutoff: 60% of 3.93 UGPA plus 40% of 46.1 LSAT, kept unrounded.
pub const LAW_CUTOFF: f64 = 0.6 * 3.93 + 0.4 * 46.1;

/// Admission rule: admit iff `0.6·UGPA + 0.4·LSAT > 20.798` (strict).
pub fn law_classifier(ugpa: f64, lsat: f64) -> bool {
    0.6 * ugpa + 0.4 * lsat > LAW_CUTOFF
}

pub fn law_model() -> LinearThresholdModel {
    LinearThresholdModel::new([("UGPA", 0.6), ("LSAT", 0.4)], LAW_CUTOFF, "Y")
}

pub fn law_schema() -> AttributeSchema {
    AttributeSchema::new(
        vec![
            AttributeSpec::protected("R", 1.0),
            AttributeSpec::protected("G", 1.0),
            AttributeSpec::relevant("UGPA", AttributeKind::Continuous),
            AttributeSpec::relevant("LSAT", AttributeKind::Continuous),
            AttributeSpec::decision("Y"),
        ],
        1.0,
    )
}

/// Law-school graph skeleton with unknown (zero) coefficients, ready for OLS.
pub fn law_skeleton() -> Scm {
    Scm::new(vec![
        NodeSpec::protected_root("R", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
        NodeSpec::protected_root("G", NoiseSpec::new(NoiseFamily::Bernoulli { p: 0.5 })),
        NodeSpec::covariate(
            "UGPA",
            &["R", "G"],
            Assignment::linear(0.0, [("R".into(), 0.0), ("G".into(), 0.0)]),
            NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: 1.0 }),
        ),
        NodeSpec::covariate(
            "LSAT",
            &["R", "G"],
            Assignment::log_linear(0.0, [("R".into(), 0.0), ("G".into(), 0.0)]),
            NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: 1.0 }),
        ),
    ])
}

/// Fitted law-school scenario.
#[derive(Debug, Clone)]
pub struct LawSchoolScenario {
    pub scm: Scm,
    pub fit: FitReport,
    /// Records dropped because LSAT was non-positive (log-link requirement).
    pub dropped_nonpositive_lsat: usize,
    pub cutoff: f64,
}

/// Ingest a prepared admissions dataset (columns `UGPA`, `LSAT`, `R`, `G`):
/// drop non-positive LSAT records, fit the graph skeleton by OLS, and apply
/// the cutoff classifier.
///
/// Returns the fitted scenario and the decision-augmented dataset (aligned to
/// the post-drop record set).
pub fn build_law_school(data: &Dataset) -> Result<(LawSchoolScenario, Dataset)> {
    for column in ["UGPA", "LSAT", "R", "G"] {
        if !data.has_column(column) {
            return Err(CstError::MissingColumn(column.to_string()));
        }
    }
    let lsat = data.column("LSAT")?;
    let keep: Vec<bool> = lsat.iter().map(|&v| v > 0.0).collect();
    let dropped = keep.iter().filter(|&&k| !k).count();
    let data = if dropped > 0 { data.filter(&keep)? } else { data.clone() };

    let (scm, fit) = fit_linear_anm(&law_skeleton(), &data)?;
    let mut dataset = data;
    let decisions = law_model().apply(&dataset)?;
    dataset.insert_column("Y", decisions)?;
    Ok((
        LawSchoolScenario {
            scm,
            fit,
            dropped_nonpositive_lsat: dropped,
            cutoff: LAW_CUTOFF,
        },
        dataset,
    ))
}

/// Rename survey-style columns (case-insensitive `ugpa`, `lsat`, `race`,
/// `gender`/`sex`) to the canonical `UGPA`, `LSAT`, `R`, `G`.
pub fn normalize_law_columns(data: &mut Dataset) -> Result<()> {
    let targets: Vec<(String, &str)> = data
        .column_names()
        .filter_map(|name| {
            let canonical = match name.to_ascii_lowercase().as_str() {
                "ugpa" => "UGPA",
                "lsat" => "LSAT",
                "race" => "R",
                "gender" | "sex" => "G",
                _ => return None,
            };
            (name != canonical).then(|| (name.to_string(), canonical))
        })
        .collect();
    for (from, to) in targets {
        data.rename_column(&from, to)?;
    }
    Ok(())
}

// Synthetic fallback coefficients. These are toolkit defaults for exercising
// the pipeline without the survey file, not published values.
pub const LAW_SYNTH_P_NONWHITE: f64 = 0.161;
pub const LAW_SYNTH_P_FEMALE: f64 = 0.438;
pub const LAW_SYNTH_UGPA: (f64, f64, f64, f64) = (3.35, -0.25, -0.06, 0.35); // b_U, β1, λ1, σ1
pub const LAW_SYNTH_LSAT: (f64, f64, f64, f64) = (3.64, -0.10, -0.03, 0.11); // b_L, β2, λ2, σ2

/// Synthetic law-school generator (same graph shape) used when the survey
/// CSV is unavailable.
pub fn law_synthetic_scm() -> Scm {
    let (b_u, beta1, lambda1, sigma1) = LAW_SYNTH_UGPA;
    let (b_l, beta2, lambda2, sigma2) = LAW_SYNTH_LSAT;
    Scm::new(vec![
        NodeSpec::protected_root(
            "R",
            NoiseSpec::new(NoiseFamily::Bernoulli { p: LAW_SYNTH_P_NONWHITE }),
        ),
        NodeSpec::protected_root(
            "G",
            NoiseSpec::new(NoiseFamily::Bernoulli { p: LAW_SYNTH_P_FEMALE }),
        ),
        NodeSpec::covariate(
            "UGPA",
            &["R", "G"],
            Assignment::linear(b_u, [("R".into(), beta1), ("G".into(), lambda1)]),
            NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: sigma1 }),
        ),
        NodeSpec::covariate(
            "LSAT",
            &["R", "G"],
            Assignment::log_linear(b_l, [("R".into(), beta2), ("G".into(), lambda2)]),
            NoiseSpec::new(NoiseFamily::Normal { mean: 0.0, std: sigma2 }),
        ),
    ])
}

/// Sample a synthetic law-school dataset with decisions.
pub fn generate_law_school_synthetic(n: usize, seed: u64) -> Result<ScenarioData> {
    let scm = law_synthetic_scm();
    let (mut dataset, latents) = sample_dataset(&scm, n, seed)?;
    let decisions = law_model().apply(&dataset)?;
    dataset.insert_column("Y", decisions)?;
    Ok(ScenarioData {
        dataset,
        scm,
        latents,
    })
}

// ── Shared helpers ────────────────────────────────────────────────────

/// Fraction of negative decisions among records matching `filter`
/// (`None` = whole dataset).
pub fn rejection_rate(
    data: &Dataset,
    schema: &AttributeSchema,
    filter: Option<(&str, f64)>,
) -> Result<f64> {
    let negative = schema.negative_outcomes(data)?;
    let mask: Vec<bool> = match filter {
        Some((column, value)) => data.column(column)?.iter().map(|&v| v == value).collect(),
        None => vec![true; data.n_rows()],
    };
    let total = mask.iter().filter(|&&m| m).count();
    if total == 0 {
        return Err(CstError::Other("no records match the filter".into()));
    }
    let rejected = negative
        .iter()
        .zip(&mask)
        .filter(|(n, m)| **n && **m)
        .count();
    Ok(rejected as f64 / total as f64)
}

/// Fraction of records matching `value` on `column`.
pub fn group_share(data: &Dataset, column: &str, value: f64) -> Result<f64> {
    let col = data.column(column)?;
    if col.is_empty() {
        return Err(CstError::Other("empty dataset".into()));
    }
    Ok(col.iter().filter(|&&v| v == value).count() as f64 / col.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{
        abduct, generate_counterfactual_dataset, AbductionMode, Intervention,
    };
    use approx::assert_relative_eq;

    #[test]
    fn loan_classifier_cases() {
        assert!(!loan_classifier(225_000.0, 0.0)); // boundary is strict
        assert!(loan_classifier(0.0, 45_001.0));
        assert!(!loan_classifier(35_000.0, 7_048.0)); // the illustrative complainant
        assert!(loan_classifier(100_000.0, 30_000.0));
    }

    #[test]
    fn law_classifier_cases() {
        assert!(law_classifier(4.0, 48.0)); // 21.6 > 20.798
        assert!(!law_classifier(3.93, 46.1)); // exactly the cutoff, strict
        assert!(!law_classifier(0.0, 0.0));
    }

    #[test]
    fn law_decision_is_monotone() {
        for &(u, l) in &[(2.0, 40.0), (3.9, 46.0), (3.93, 46.2), (1.0, 52.0)] {
            let base = law_classifier(u, l);
            if base {
                assert!(law_classifier(u + 0.5, l));
                assert!(law_classifier(u, l + 1.0));
            }
        }
    }

    #[test]
    fn loan_generation_structure() {
        let loan = generate_loan(400, 13).unwrap();
        assert!(loan.scm.validate().is_empty());
        let a = loan.dataset.column("A").unwrap();
        let x1 = loan.dataset.column("X1").unwrap();
        let u1 = loan.latents.noise("X1").unwrap();
        for i in 0..400 {
            if a[i] == 0.0 {
                assert_eq!(x1[i], u1[i], "male salary is the raw draw at {i}");
            }
        }
        // decisions follow the threshold rule
        let x2 = loan.dataset.column("X2").unwrap();
        let y = loan.dataset.column("Y").unwrap();
        for i in 0..400 {
            assert_eq!(y[i] == 1.0, loan_classifier(x1[i], x2[i]));
        }
    }

    #[test]
    fn loan_oracle_round_trip_identities() {
        let loan = generate_loan(600, 4242).unwrap();
        let cf = generate_counterfactual_dataset(
            &loan.scm,
            &loan.dataset,
            &Intervention::single("A", 0.0),
            &loan_model(),
            AbductionMode::Oracle,
            Some(&loan.latents),
        )
        .unwrap();
        let a = loan.dataset.column("A").unwrap();
        let x1 = loan.dataset.column("X1").unwrap();
        let x2 = loan.dataset.column("X2").unwrap();
        let y = loan.dataset.column("Y").unwrap();
        let x1_cf = cf.data.column("X1").unwrap();
        let x2_cf = cf.data.column("X2").unwrap();
        let y_cf = cf.data.column("Y").unwrap();
        let p = loan.latents.node("X1").unwrap().factors.as_ref().unwrap();
        let u2 = loan.latents.noise("X2").unwrap();
        for i in 0..600 {
            if a[i] == 1.0 {
                // female: the salary penalty is refunded and the balance
                // re-derives from the counterfactual salary
                assert_relative_eq!(
                    x1_cf[i],
                    x1[i] + 1500.0 * p[i],
                    max_relative = 1e-12
                );
                assert_relative_eq!(
                    x2_cf[i],
                    0.3 * x1_cf[i] + u2[i],
                    max_relative = 1e-12
                );
            } else {
                // males are fixed points in both worlds
                assert_eq!(x1_cf[i], x1[i]);
                assert_eq!(x2_cf[i], x2[i]);
                assert_eq!(y_cf[i], y[i]);
            }
        }
    }

    #[test]
    fn loan_oracle_vs_residual_abduction() {
        // On a small seeded sample: oracle U1 is the stored draw, while the
        // residual form absorbs the gap between the realized penalty and its
        // expected value -15000·A.
        let loan = generate_loan(10, 99).unwrap();
        let oracle =
            abduct(&loan.scm, &loan.dataset, AbductionMode::Oracle, Some(&loan.latents)).unwrap();
        let residual = abduct(&loan.scm, &loan.dataset, AbductionMode::Residual, None).unwrap();
        let a = loan.dataset.column("A").unwrap();
        let p = loan.latents.node("X1").unwrap().factors.as_ref().unwrap();
        let u1 = loan.latents.noise("X1").unwrap();
        for i in 0..10 {
            assert_eq!(oracle.noise("X1").unwrap()[i], u1[i]);
            let expected = u1[i] + a[i] * (15_000.0 - 1500.0 * p[i]);
            assert_relative_eq!(
                residual.noise("X1").unwrap()[i],
                expected,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn law_synthetic_builds_and_recovers() {
        let synth = generate_law_school_synthetic(4000, 7).unwrap();
        assert!(synth.scm.validate().is_empty());
        let (scenario, dataset) = build_law_school(&synth.dataset).unwrap();
        assert_eq!(scenario.dropped_nonpositive_lsat, 0);
        assert_eq!(dataset.n_rows(), 4000);
        assert!(dataset.has_column("Y"));
        // coefficients land near the generating values even at n=4000
        let ugpa = &scenario.fit.nodes["UGPA"];
        let c = ugpa.coefficient("R").unwrap();
        assert!((c.estimate - LAW_SYNTH_UGPA.1).abs() < 5.0 * c.std_error);
    }

    #[test]
    fn law_build_drops_nonpositive_lsat() {
        let mut synth = generate_law_school_synthetic(200, 3).unwrap();
        let mut lsat = synth.dataset.column("LSAT").unwrap().to_vec();
        lsat[0] = 0.0;
        lsat[5] = -2.0;
        synth.dataset.insert_column("LSAT", lsat).unwrap();
        let (scenario, dataset) = build_law_school(&synth.dataset).unwrap();
        assert_eq!(scenario.dropped_nonpositive_lsat, 2);
        assert_eq!(dataset.n_rows(), 198);
    }

    #[test]
    fn rejection_rate_helper() {
        let data = Dataset::from_columns([
            ("A", vec![1.0, 1.0, 0.0, 0.0]),
            ("Y", vec![0.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let schema = AttributeSchema::new(
            vec![AttributeSpec::protected("A", 1.0), AttributeSpec::decision("Y")],
            1.0,
        );
        assert_relative_eq!(
            rejection_rate(&data, &schema, Some(("A", 1.0))).unwrap(),
            0.5
        );
        assert_relative_eq!(rejection_rate(&data, &schema, None).unwrap(), 0.25);
        assert_relative_eq!(group_share(&data, "A", 1.0).unwrap(), 0.5);
    }
}
