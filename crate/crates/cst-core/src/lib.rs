//! Counterfactual situation testing toolkit.
//!
//! Detects potential individual discrimination in a dataset of classifier
//! decisions by comparing, for each protected-group complainant, a control
//! group of similar protected records against a test group of non-protected
//! records gathered around the complainant's *counterfactual* — the record it
//! would have been under a `do`-intervention on the protected attribute(s),
//! generated from a user-supplied structural causal model via abduction,
//! action, and prediction. Standard situation testing and the counterfactual
//! fairness check are included as baselines.
//!
//! Modules:
//! - [`scm`] / [`fit`]: structural causal models, counterfactual generation,
//!   and OLS coefficient fitting;
//! - [`metric`]: mixed-type per-attribute distances and the tuple distance;
//! - [`neighborhood`]: search-space partitioning and exact k-NN groups;
//! - [`detection`]: Δp, Wald intervals, decisions, and the audit runners;
//! - [`scenarios`]: the built-in loan and law-school benchmark settings;
//! - [`report`]: stable CSV report serialization.

pub mod data;
pub mod detection;
pub mod error;
pub mod fit;
pub mod metric;
pub mod model;
pub mod neighborhood;
pub mod report;
pub mod scenarios;
pub mod scm;

pub use data::{Dataset, ValueMaps};
pub use detection::{
    decide, negative_rate, run_cf, run_cst, run_st, wald_ci, AuditConfig, AuditMethod,
    ComplainantResult, Decision, DiscriminationReport, RunSummary, VarianceMode, WaldCi,
};
pub use error::{CstError, Result};
pub use fit::{fit_linear_anm, FitReport};
pub use metric::{
    attribute_ranges, per_attribute_distance, tuple_distance, AttributeKind, AttributeRange,
    AttributeRole, AttributeSchema, AttributeSpec, DistanceContext, DistanceSpec, Normalization,
    RangeTable,
};
pub use model::{DecisionModel, LinearThresholdModel};
pub use neighborhood::{
    get_top_k, partition_search_spaces, NeighborSet, NeighborhoodIndex, ProtectedSpec,
    SearchSpaces,
};
pub use scm::{
    abduct, generate_counterfactual_dataset, intervene, predict, sample_dataset, topological_order,
    validate_scm, AbductionMode, Assignment, CounterfactualDataset, Intervention, LatentRecord,
    Link, NodeKind, NodeLatents, NodeSpec, NoiseFamily, NoiseSpec, Scm, Violation,
};
