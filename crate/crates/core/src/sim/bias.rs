use serde::Serialize;

use crate::config::{AnalysisConfig, Scenario};
use crate::error::{Error, Result};
use crate::estimators::{decompose, decompose_interposed, DecompositionEstimate, EstimatorOptions};

use super::generate::generate;
use super::model::StructuralModel;

/// Estimates from one generated dataset with and without conditioning on
/// the latent confounder.
#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalBias {
    pub without_latent: DecompositionEstimate,
    pub with_latent: DecompositionEstimate,
    /// Per comparison group: δ̂ without the latent minus δ̂ with it.
    pub delta_bias: Vec<f64>,
    pub zeta_bias: Vec<f64>,
}

/// Runs the weighting estimator for `config.scenario` twice on one draw of
/// `n` units: as configured, and with the latent variable added to the
/// pre-exposure confounders (plus `latent_interactions` in the outcome
/// model). The difference estimates the bias from omitting it.
pub fn empirical_bias(
    model: &StructuralModel,
    config: &AnalysisConfig,
    n: usize,
    seed: u64,
    latent_interactions: &[[String; 2]],
    opts: &EstimatorOptions,
) -> Result<EmpiricalBias> {
    let latent = model
        .roles
        .latent
        .clone()
        .ok_or_else(|| Error::config("the model declares no latent confounder"))?;
    let mut with = config.clone();
    with.confounders_pre.push(latent);
    with.interactions
        .extend(latent_interactions.iter().cloned());

    let data = generate(model, n, seed, true)?;
    let run = |cfg: &AnalysisConfig| {
        let table = data.coerce(&cfg.schema())?;
        match cfg.scenario {
            Scenario::JointMediators => decompose(cfg, &table, opts),
            Scenario::InterposedConfounder => decompose_interposed(cfg, &table, opts),
        }
    };
    let without_latent = run(config)?;
    let with_latent = run(&with)?;
    let diff = |f: fn(&crate::estimators::GroupEstimate) -> f64| {
        without_latent
            .groups
            .iter()
            .zip(&with_latent.groups)
            .map(|(a, b)| f(a) - f(b))
            .collect()
    };
    Ok(EmpiricalBias {
        delta_bias: diff(|g| g.delta),
        zeta_bias: diff(|g| g.zeta),
        without_latent,
        with_latent,
    })
}
