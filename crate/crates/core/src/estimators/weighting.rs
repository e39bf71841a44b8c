use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{validate_config, AnalysisConfig, Binding};
use crate::data::ObservationTable;
use crate::design::{DesignSpec, Overlay, RowRef};
use crate::error::{Error, Result};
use crate::glm::{fit_linear_model, fit_multinomial_logit, GroupMembershipModel, LinearModel};
use crate::stats::weighted_mean;

use super::{
    compute_balancing_weights, ConfounderModel, DecompositionEstimate, EstimatorKind,
    EstimatorOptions, GroupEstimate, WeightVector,
};

/// Outcome model design: group, confounders, mediators and covariates as
/// main effects, the configured interactions, and group × mediator terms
/// when `differential` is set.
pub fn outcome_design(
    config: &AnalysisConfig,
    binding: &Binding,
    table: &ObservationTable,
    differential: bool,
) -> DesignSpec {
    let name = |c: usize| table.column_at(c).name.clone();
    let group = name(binding.group);
    let mut spec = DesignSpec::with_intercept()
        .main(&group)
        .reference(&group, binding.reference);
    for &c in binding
        .confounders()
        .iter()
        .chain(&binding.mediators)
        .chain(&binding.covariates)
    {
        spec = spec.main(&name(c));
    }
    for [a, b] in &config.interactions {
        spec = spec.interaction(a, b);
    }
    if differential {
        let meds: Vec<String> = if config.differential.is_empty() {
            vec![name(binding.mediators[0])]
        } else {
            config.differential.clone()
        };
        for m in meds {
            spec = spec.interaction(&group, &m);
        }
    }
    spec
}

fn group_design(binding: &Binding, table: &ObservationTable) -> DesignSpec {
    let covs: Vec<String> = binding
        .covariates
        .iter()
        .map(|&c| table.column_at(c).name.clone())
        .collect();
    DesignSpec::with_intercept().mains(&covs)
}

/// Self-normalized weighted outcome mean of one group.
fn standardized_mean(w: &WeightVector, y: &[f64]) -> f64 {
    let ys: Vec<f64> = w.rows.iter().map(|&i| y[i]).collect();
    weighted_mean(&ys, &w.weights)
}

/// τ̂: weighted outcome mean of group `r` minus that of the reference.
pub fn estimate_observed_disparity(
    w_r: &WeightVector,
    w_0: &WeightVector,
    table: &ObservationTable,
    outcome_col: usize,
) -> Result<f64> {
    let y = table
        .column_at(outcome_col)
        .as_numeric()
        .ok_or_else(|| Error::config("the outcome must be numeric"))?;
    if w_r.rows.is_empty() || w_0.rows.is_empty() {
        return Err(Error::estimation("empty group"));
    }
    Ok(standardized_mean(w_r, y) - standardized_mean(w_0, y))
}

/// Counterfactual mean for group `r`: for each reference row, the outcome
/// model at group `r`, the row's own mediators and covariates, integrated
/// over the confounder law at `r`; then the Ŵ₀-weighted mean over those rows.
pub fn estimate_counterfactual_mean(
    om: &LinearModel,
    cm: &ConfounderModel,
    w0: &WeightVector,
    table: &ObservationTable,
    r: u32,
    seed: u64,
) -> Result<f64> {
    if w0.rows.is_empty() {
        return Err(Error::estimation("reference group is empty"));
    }
    let mut buf = vec![0.0; om.design().n_cols()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(w0.rows.len());
    for &row in &w0.rows {
        let base = RowRef { table, row };
        if !cm.is_exact() {
            rng.set_stream(((r as u64) << 40) | row as u64);
            rng.set_word_pos(0);
        }
        let v = cm.integrate(&base, r, &mut rng, |overrides| {
            om.predict_with(
                &Overlay {
                    base: &base,
                    overrides,
                },
                &mut buf,
            )
        })?;
        values.push(v);
    }
    Ok(weighted_mean(&values, &w0.weights))
}

/// Nuisance fits shared by every comparison group of a weighting run.
pub struct WeightingFit<'a> {
    table: &'a ObservationTable,
    binding: Binding,
    kind: EstimatorKind,
    group_model: GroupMembershipModel,
    weights: Vec<WeightVector>,
    means: Vec<f64>,
    outcome: LinearModel,
    confounders: ConfounderModel,
    seed: u64,
}

impl<'a> WeightingFit<'a> {
    pub fn new(
        config: &AnalysisConfig,
        table: &'a ObservationTable,
        opts: &EstimatorOptions,
        interposed: bool,
    ) -> Result<Self> {
        let binding = validate_config(config, table)?;
        let kind = match (interposed, opts.differential) {
            (true, _) => EstimatorKind::WeightingInterposed,
            (false, true) => EstimatorKind::WeightingDifferential,
            (false, false) => EstimatorKind::Weighting,
        };
        let group_name = table.column_at(binding.group).name.clone();
        let group_model =
            fit_multinomial_logit(table, &group_name, &group_design(&binding, table), None)?;
        let weights = (0..binding.levels.len() as u32)
            .map(|l| {
                compute_balancing_weights(&group_model, table, binding.group, l, config.weight_trim)
            })
            .collect::<Result<Vec<_>>>()?;
        let y = table.column_at(binding.outcome).as_numeric().unwrap_or(&[]);
        let means = weights.iter().map(|w| standardized_mean(w, y)).collect();
        let outcome_name = table.column_at(binding.outcome).name.clone();
        let outcome = fit_linear_model(
            table,
            &outcome_name,
            &outcome_design(config, &binding, table, opts.differential),
        )?;
        let confounders = if interposed {
            ConfounderModel::fit_interposed(table, &binding, config)?
        } else {
            ConfounderModel::fit_joint(table, &binding, config)?
        };
        Ok(WeightingFit {
            table,
            binding,
            kind,
            group_model,
            weights,
            means,
            outcome,
            confounders,
            seed: opts.seed,
        })
    }

    pub fn binding(&self) -> &Binding {
        &self.binding
    }

    pub fn group_model(&self) -> &GroupMembershipModel {
        &self.group_model
    }

    pub fn outcome_model(&self) -> &LinearModel {
        &self.outcome
    }

    pub fn confounder_model(&self) -> &ConfounderModel {
        &self.confounders
    }

    pub fn weights(&self, level: u32) -> &WeightVector {
        &self.weights[level as usize]
    }

    /// Decomposition of group `r` against the reference; all zero when `r`
    /// is the reference itself.
    pub fn estimate(&self, r: u32) -> Result<GroupEstimate> {
        let reference = self.binding.reference;
        let label = self
            .binding
            .levels
            .get(r as usize)
            .ok_or_else(|| Error::config(format!("group level {r} does not exist")))?
            .clone();
        let trimmed = self.weights[r as usize].trimmed;
        if r == reference {
            let mut g =
                GroupEstimate::new(label, r, 0.0, 0.0, Some(self.means[r as usize]), trimmed);
            g.zeta = 0.0;
            return Ok(g);
        }
        let tau = self.means[r as usize] - self.means[reference as usize];
        let cf = estimate_counterfactual_mean(
            &self.outcome,
            &self.confounders,
            &self.weights[reference as usize],
            self.table,
            r,
            self.seed,
        )?;
        let delta = self.means[r as usize] - cf;
        Ok(GroupEstimate::new(label, r, tau, delta, Some(cf), trimmed))
    }

    pub fn decomposition(&self) -> Result<DecompositionEstimate> {
        let groups = self
            .binding
            .comparison_levels()
            .into_iter()
            .map(|r| self.estimate(r))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecompositionEstimate {
            estimator: self.kind,
            reference: self.binding.levels[self.binding.reference as usize].clone(),
            groups,
            reference_trimmed: self.weights[self.binding.reference as usize].trimmed,
            diagnostics: self
                .binding
                .diagnostics
                .iter()
                .map(|d| d.to_string())
                .collect(),
        })
    }
}

/// Weighting estimator with confounders integrated jointly given group and
/// covariates.
pub fn decompose(
    config: &AnalysisConfig,
    table: &ObservationTable,
    opts: &EstimatorOptions,
) -> Result<DecompositionEstimate> {
    WeightingFit::new(config, table, opts, false)?.decomposition()
}

/// Weighting estimator for the ordering in which the first mediator
/// precedes the post-exposure confounders.
pub fn decompose_interposed(
    config: &AnalysisConfig,
    table: &ObservationTable,
    opts: &EstimatorOptions,
) -> Result<DecompositionEstimate> {
    WeightingFit::new(config, table, opts, true)?.decomposition()
}
