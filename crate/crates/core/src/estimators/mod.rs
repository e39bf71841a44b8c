//! Decomposition estimators: weighting (joint and interposed orderings) and
//! the coefficient-combination regression estimator.

mod confounder;
mod regression;
mod weighting;
mod weights;

use serde::Serialize;

pub use confounder::ConfounderModel;
pub use regression::decompose_regression;
pub use weighting::{
    decompose, decompose_interposed, estimate_counterfactual_mean, estimate_observed_disparity,
    outcome_design, WeightingFit,
};
pub use weights::{compute_balancing_weights, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Weighting,
    WeightingDifferential,
    Regression,
    WeightingInterposed,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Weighting => "weighting",
            EstimatorKind::WeightingDifferential => "weighting_differential",
            EstimatorKind::Regression => "regression",
            EstimatorKind::WeightingInterposed => "weighting_interposed",
        }
    }
}

/// Options shared by the estimators.
#[derive(Debug, Clone, Copy, Default)]
pub struct EstimatorOptions {
    /// Add group × mediator terms to the outcome model.
    pub differential: bool,
    /// Seed for Monte Carlo integration over continuous confounders.
    pub seed: u64,
}

/// Decomposition for one comparison group against the reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEstimate {
    pub level: String,
    pub code: u32,
    pub tau: f64,
    pub delta: f64,
    pub zeta: f64,
    pub pct_reduction: Option<f64>,
    /// Mean outcome of the group had its mediators followed the reference
    /// group's law; absent for the regression estimator.
    pub counterfactual_mean: Option<f64>,
    /// Balancing weights capped by trimming in this group.
    pub trimmed: usize,
}

impl GroupEstimate {
    pub(crate) fn new(
        level: String,
        code: u32,
        tau: f64,
        delta: f64,
        counterfactual_mean: Option<f64>,
        trimmed: usize,
    ) -> Self {
        let zeta = tau - delta;
        GroupEstimate {
            level,
            code,
            tau,
            delta,
            zeta,
            pct_reduction: pct_reduction(delta, tau),
            counterfactual_mean,
            trimmed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionEstimate {
    pub estimator: EstimatorKind,
    pub reference: String,
    pub groups: Vec<GroupEstimate>,
    /// Trimmed weights in the reference group.
    pub reference_trimmed: usize,
    /// Positivity diagnostics raised while binding the configuration.
    pub diagnostics: Vec<String>,
}

impl DecompositionEstimate {
    pub fn group(&self, level: &str) -> Option<&GroupEstimate> {
        self.groups.iter().find(|g| g.level == level)
    }
}

/// Percent of the disparity removed, `100 δ / τ`; `None` when τ = 0.
pub fn pct_reduction(delta: f64, tau: f64) -> Option<f64> {
    (tau != 0.0).then(|| 100.0 * delta / tau)
}
