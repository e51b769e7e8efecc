//! Shared benchmark fixtures: the loan scenario at benchmark scale with its
//! counterfactual dataset prebuilt.

use cst_core::detection::AuditConfig;
use cst_core::metric::AttributeSchema;
use cst_core::scenarios::{generate_loan, loan_model, loan_schema, ScenarioData};
use cst_core::scm::{
    generate_counterfactual_dataset, AbductionMode, CounterfactualDataset, Intervention,
};

pub struct LoanFixture {
    pub loan: ScenarioData,
    pub counterfactual: CounterfactualDataset,
    pub schema: AttributeSchema,
}

pub fn loan_fixture(n: usize, seed: u64) -> LoanFixture {
    let loan = generate_loan(n, seed).expect("loan generation");
    let counterfactual = generate_counterfactual_dataset(
        &loan.scm,
        &loan.dataset,
        &Intervention::single("A", 0.0),
        &loan_model(),
        AbductionMode::Oracle,
        Some(&loan.latents),
    )
    .expect("counterfactual generation");
    LoanFixture {
        loan,
        counterfactual,
        schema: loan_schema(),
    }
}

pub fn audit_config(k: usize) -> AuditConfig {
    let mut cfg = AuditConfig::with_k(k);
    cfg.intervention = Some(Intervention::single("A", 0.0));
    cfg
}
