//! Partial-R² sensitivity analysis for unmeasured mediator–outcome
//! confounding: bias formulas, grid sweeps, contours and covariate
//! benchmarks.

use serde::Serialize;

use crate::config::{validate_config, AnalysisConfig, Binding};
use crate::data::{Column, ObservationTable};
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::estimators::{DecompositionEstimate, GroupEstimate};
use crate::glm::{fit_linear_model, LinearModel};
use crate::inference::GroupIntervals;
use crate::stats::{mean, sd};

/// Normal quantile used for the confidence-interval contour.
pub const Z_95: f64 = 1.96;

/// Inputs of the bias formula for one comparison group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityInputs {
    pub level: String,
    /// Standard error of the mediator-score coefficient in the outcome
    /// regression given group, confounders and covariates.
    pub se_gamma_dm: f64,
    /// Residual degrees of freedom of that regression.
    pub df: f64,
    /// Absolute covariate-adjusted group gap in the mediator score.
    pub mediator_gap: f64,
    /// The same gap with its sign.
    pub signed_gap: f64,
    pub tau: f64,
    pub delta: f64,
    pub zeta: f64,
    pub delta_se: Option<f64>,
    pub zeta_se: Option<f64>,
}

impl SensitivityInputs {
    /// Inputs from plain numbers, mainly for synthetic checks.
    pub fn synthetic(se_gamma_dm: f64, df: f64, gap: f64, delta: f64, zeta: f64) -> Self {
        SensitivityInputs {
            level: String::new(),
            se_gamma_dm,
            df,
            mediator_gap: gap.abs(),
            signed_gap: gap,
            tau: delta + zeta,
            delta,
            zeta,
            delta_se: None,
            zeta_se: None,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.se_gamma_dm > 0.0) || !(self.df >= 1.0) || !(self.mediator_gap >= 0.0) {
            return Err(Error::Domain(
                "sensitivity inputs need se > 0, df >= 1 and gap >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Partial R² from a t statistic and residual degrees of freedom.
pub fn partial_r2(t: f64, df: f64) -> f64 {
    t * t / (t * t + df)
}

/// |bias| of δ and ζ implied by the two partial R² sensitivity parameters.
pub fn compute_bias(r2_yu: f64, r2_udm: f64, inputs: &SensitivityInputs) -> Result<f64> {
    if !(0.0..1.0).contains(&r2_yu) || !(0.0..1.0).contains(&r2_udm) {
        return Err(Error::Domain(format!(
            "partial R² values must lie in [0, 1); got ({r2_yu}, {r2_udm})"
        )));
    }
    inputs.check()?;
    Ok(bias_unchecked(r2_yu, r2_udm, inputs))
}

#[inline]
fn bias_unchecked(r2_yu: f64, r2_udm: f64, inputs: &SensitivityInputs) -> f64 {
    inputs.se_gamma_dm * (r2_yu * r2_udm / (1.0 - r2_udm) * inputs.df).sqrt() * inputs.mediator_gap
}

/// Bias of δ when the effect of U on Y varies over strata z of the
/// confounders: Σ_c P(c) gap_c β Σ_z γ_z P(z | reference, c).
///
/// `strata_probs[c][z]` is P(z | reference, c); `gaps[c]` the mediator gap
/// between the compared groups at c; `p_c[c]` the covariate distribution.
pub fn compute_modified_bias(
    gamma_u_by_z: &[f64],
    beta_dm: f64,
    strata_probs: &[Vec<f64>],
    gaps: &[f64],
    p_c: &[f64],
) -> Result<f64> {
    if strata_probs.len() != gaps.len() || gaps.len() != p_c.len() {
        return Err(Error::Domain(
            "one stratum distribution and gap per covariate cell".into(),
        ));
    }
    let mut total = 0.0;
    for ((probs, gap), pc) in strata_probs.iter().zip(gaps).zip(p_c) {
        if probs.len() != gamma_u_by_z.len() {
            return Err(Error::Domain("one effect per stratum is required".into()));
        }
        let s: f64 = probs.iter().sum();
        if (s - 1.0).abs() > 1e-8 {
            return Err(Error::Domain(format!(
                "stratum probabilities sum to {s}, not 1"
            )));
        }
        let gamma: f64 = gamma_u_by_z.iter().zip(probs).map(|(g, p)| g * p).sum();
        total += pc * gap * beta_dm * gamma;
    }
    Ok(total)
}

/// Direction in which |bias| is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasDirection {
    /// δ moves toward zero and ζ away by the same amount.
    DeltaTowardZero,
    /// ζ moves toward zero and δ away.
    ZetaTowardZero,
}

/// Adjusted (δ, ζ) after removing a bias of magnitude `bias`; the sum is
/// unchanged.
pub fn adjusted_estimates(
    delta: f64,
    zeta: f64,
    bias: f64,
    direction: BiasDirection,
) -> (f64, f64) {
    let s = match direction {
        BiasDirection::DeltaTowardZero => sign(delta),
        BiasDirection::ZetaTowardZero => -sign(zeta),
    };
    (delta - s * bias, zeta + s * bias)
}

/// Adjusted estimates for both directions.
pub fn adjusted_both(estimate: &GroupEstimate, bias: f64) -> [(f64, f64); 2] {
    [
        adjusted_estimates(
            estimate.delta,
            estimate.zeta,
            bias,
            BiasDirection::DeltaTowardZero,
        ),
        adjusted_estimates(
            estimate.delta,
            estimate.zeta,
            bias,
            BiasDirection::ZetaTowardZero,
        ),
    ]
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub r2_yu: f64,
    pub r2_udm: f64,
    pub bias: f64,
    /// δ moved toward zero by `bias`; ζ moved the opposite way.
    pub delta_adj: f64,
    pub zeta_adj: f64,
    /// δ reached or passed zero.
    pub zero_cross: bool,
    /// δ's fixed-width interval covers zero.
    pub ci_cross: bool,
    /// ζ, moved toward zero by `bias`, reached or passed zero.
    pub zeta_zero_cross: bool,
    pub zeta_ci_cross: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityGrid {
    pub inputs: SensitivityInputs,
    pub resolution: usize,
    pub r2_max: f64,
    /// Row-major over `r2_yu` (outer) then `r2_udm`.
    pub points: Vec<GridPoint>,
    /// Per grid value of r2_yu, the r2_udm at which the bias equals |δ|.
    pub zero_contour: Vec<(f64, f64)>,
    pub ci_contour: Vec<(f64, f64)>,
    pub zeta_zero_contour: Vec<(f64, f64)>,
    pub zeta_ci_contour: Vec<(f64, f64)>,
}

/// Evaluates the bias over `[0, r2_max]²` with `resolution` points per axis.
pub fn sensitivity_grid(
    inputs: &SensitivityInputs,
    resolution: usize,
    r2_max: f64,
) -> Result<SensitivityGrid> {
    if resolution < 2 {
        return Err(Error::Domain("grid resolution must be at least 2".into()));
    }
    if !(r2_max > 0.0 && r2_max < 1.0) {
        return Err(Error::Domain("r2_max must lie in (0, 1)".into()));
    }
    inputs.check()?;
    let axis: Vec<f64> = (0..resolution)
        .map(|i| r2_max * i as f64 / (resolution - 1) as f64)
        .collect();
    let delta_half = inputs.delta_se.map_or(0.0, |s| Z_95 * s);
    let zeta_half = inputs.zeta_se.map_or(0.0, |s| Z_95 * s);
    let mut points = Vec::with_capacity(resolution * resolution);
    for &a in &axis {
        for &b in &axis {
            let bias = bias_unchecked(a, b, inputs);
            let (delta_adj, zeta_adj) = adjusted_estimates(
                inputs.delta,
                inputs.zeta,
                bias,
                BiasDirection::DeltaTowardZero,
            );
            let zeta_moved = inputs.zeta.abs() - bias;
            points.push(GridPoint {
                r2_yu: a,
                r2_udm: b,
                bias,
                delta_adj,
                zeta_adj,
                zero_cross: bias >= inputs.delta.abs(),
                ci_cross: delta_adj.abs() <= delta_half || bias >= inputs.delta.abs(),
                zeta_zero_cross: zeta_moved <= 0.0,
                zeta_ci_cross: zeta_moved <= zeta_half,
            });
        }
    }
    let contour = |target: f64| -> Vec<(f64, f64)> {
        axis.iter()
            .filter_map(|&a| contour_r2_udm(a, target, inputs).map(|b| (a, b)))
            .filter(|&(_, b)| b <= r2_max)
            .collect()
    };
    Ok(SensitivityGrid {
        inputs: inputs.clone(),
        resolution,
        r2_max,
        zero_contour: contour(inputs.delta.abs()),
        ci_contour: contour((inputs.delta.abs() - delta_half).max(0.0)),
        zeta_zero_contour: contour(inputs.zeta.abs()),
        zeta_ci_contour: contour((inputs.zeta.abs() - zeta_half).max(0.0)),
        points,
    })
}

/// r2_udm solving bias(r2_yu, r2_udm) = target, if any.
fn contour_r2_udm(r2_yu: f64, target: f64, inputs: &SensitivityInputs) -> Option<f64> {
    if target == 0.0 {
        return Some(0.0);
    }
    let scale = inputs.se_gamma_dm * inputs.mediator_gap;
    if r2_yu == 0.0 || scale == 0.0 {
        return None;
    }
    // target² = scale² df r2_yu k with k = t / (1 − t)
    let k = target * target / (scale * scale * inputs.df * r2_yu);
    Some(k / (1.0 + k))
}

/// The t at which bias(t, t) equals `target`, or `None` beyond `r2_max`.
pub fn diagonal_crossing(inputs: &SensitivityInputs, target: f64, r2_max: f64) -> Option<f64> {
    if target <= 0.0 {
        return Some(0.0);
    }
    let scale = inputs.se_gamma_dm * inputs.mediator_gap * inputs.df.sqrt();
    if scale <= 0.0 {
        return None;
    }
    // bias(t, t) = scale · t / √(1 − t)  ⇒  t² + K² t − K² = 0
    let k2 = (target / scale).powi(2);
    let t = 0.5 * (-k2 + (k2 * k2 + 4.0 * k2).sqrt());
    (t <= r2_max).then_some(t)
}

/// Diagonal crossings for δ and ζ, point and interval versions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalSummary {
    pub level: String,
    pub delta_zero: Option<f64>,
    pub delta_ci: Option<f64>,
    pub zeta_zero: Option<f64>,
    pub zeta_ci: Option<f64>,
}

pub fn diagonal_summary(inputs: &SensitivityInputs, r2_max: f64) -> DiagonalSummary {
    let ci = |est: f64, se: Option<f64>| {
        se.and_then(|s| diagonal_crossing(inputs, (est.abs() - Z_95 * s).max(0.0), r2_max))
    };
    DiagonalSummary {
        level: inputs.level.clone(),
        delta_zero: diagonal_crossing(inputs, inputs.delta.abs(), r2_max),
        delta_ci: ci(inputs.delta, inputs.delta_se),
        zeta_zero: diagonal_crossing(inputs, inputs.zeta.abs(), r2_max),
        zeta_ci: ci(inputs.zeta, inputs.zeta_se),
    }
}

fn unique_name(table: &ObservationTable, stem: &str) -> String {
    let mut name = stem.to_string();
    while table.index_of(&name).is_some() {
        name.push('_');
    }
    name
}

fn names(table: &ObservationTable, cols: &[usize]) -> Vec<String> {
    cols.iter()
        .map(|&c| table.column_at(c).name.clone())
        .collect()
}

fn group_spec(table: &ObservationTable, binding: &Binding) -> DesignSpec {
    let group = table.column_at(binding.group).name.clone();
    DesignSpec::with_intercept()
        .main(&group)
        .reference(&group, binding.reference)
}

/// Main-effects outcome regression of Y on group, X, mediators and C.
fn main_outcome_model(table: &ObservationTable, binding: &Binding) -> Result<LinearModel> {
    let spec = group_spec(table, binding)
        .mains(&names(table, &binding.confounders()))
        .mains(&names(table, &binding.mediators))
        .mains(&names(table, &binding.covariates));
    fit_linear_model(table, &table.column_at(binding.outcome).name, &spec)
}

/// Composite mediator score: the mediators' fitted contribution to the
/// outcome, scaled to unit sample variance.
pub fn mediator_score(table: &ObservationTable, binding: &Binding) -> Result<Vec<f64>> {
    let om = main_outcome_model(table, binding)?;
    let cols: Vec<usize> = binding
        .mediators
        .iter()
        .flat_map(|&m| om.design().main_columns(m).unwrap_or(0..0))
        .collect();
    let x = om.design().matrix(table)?;
    let p = om.design().n_cols();
    let coef = om.coefficients();
    let raw: Vec<f64> = x
        .chunks_exact(p)
        .map(|row| cols.iter().map(|&j| coef[j] * row[j]).sum())
        .collect();
    let s = sd(&raw);
    if !(s > 0.0) || cols.iter().all(|&j| coef[j] == 0.0) {
        return Err(Error::estimation(
            "mediator score is degenerate (all mediator coefficients zero)",
        ));
    }
    let m = mean(&raw);
    Ok(raw.into_iter().map(|v| (v - m) / s).collect())
}

/// Builds bias-formula inputs for every group of `estimate`.
pub fn prepare_sensitivity_inputs(
    table: &ObservationTable,
    config: &AnalysisConfig,
    estimate: &DecompositionEstimate,
    intervals: Option<&[GroupIntervals]>,
) -> Result<Vec<SensitivityInputs>> {
    let binding = validate_config(config, table)?;
    let score = mediator_score(table, &binding)?;
    let score_name = unique_name(table, "mediator_score");
    let t = table
        .clone()
        .with_column(Column::numeric(score_name.clone(), score))?;
    let outcome = table.column_at(binding.outcome).name.clone();

    let y_model = fit_linear_model(
        &t,
        &outcome,
        &group_spec(table, &binding)
            .mains(&names(table, &binding.confounders()))
            .mains(&names(table, &binding.covariates))
            .main(&score_name),
    )?;
    let j = y_model.design().names().len() - 1;
    let se = y_model.std_errors()[j];
    let df = y_model.df() as f64;

    let gap_model = fit_linear_model(
        &t,
        &score_name,
        &group_spec(table, &binding).mains(&names(table, &binding.covariates)),
    )?;

    estimate
        .groups
        .iter()
        .map(|g| {
            let col = gap_model
                .design()
                .level_column(binding.group, g.code)
                .ok_or_else(|| {
                    Error::estimation(format!("no gap coefficient for `{}`", g.level))
                })?;
            let gap = gap_model.coefficients()[col];
            let iv = intervals.and_then(|iv| iv.iter().find(|i| i.level == g.level));
            Ok(SensitivityInputs {
                level: g.level.clone(),
                se_gamma_dm: se,
                df,
                mediator_gap: gap.abs(),
                signed_gap: gap,
                tau: g.tau,
                delta: g.delta,
                zeta: g.zeta,
                delta_se: iv.map(|i| i.delta.se),
                zeta_se: iv.map(|i| i.zeta.se),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkPoint {
    pub covariate: String,
    pub r2_y: f64,
    pub r2_dm: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Benchmarks {
    pub points: Vec<BenchmarkPoint>,
    /// Covariates that could not be benchmarked, with the reason.
    pub skipped: Vec<(String, String)>,
}

/// Partial R² of the design columns `cols` in `full`, from the residual
/// sums of squares with and without them. For a single column this equals
/// t²/(t² + df).
fn block_partial_r2(
    table: &ObservationTable,
    response: &str,
    reduced_spec: &DesignSpec,
    full: &LinearModel,
    cols: &[usize],
) -> Result<f64> {
    if cols.len() == 1 {
        return Ok(partial_r2(full.t_stat(cols[0]), full.df() as f64));
    }
    let reduced = fit_linear_model(table, response, reduced_spec)?;
    Ok((reduced.rss() - full.rss()) / reduced.rss())
}

/// Partial-R² benchmarks of each observed covariate: its share of outcome
/// variance given everything else, and its partial R² with the mediator
/// score given group, confounders and the other covariates. Each is
/// emitted at multiplier 1 and with r2_dm doubled.
pub fn benchmark_covariates(
    table: &ObservationTable,
    config: &AnalysisConfig,
) -> Result<Benchmarks> {
    let binding = validate_config(config, table)?;
    let score = mediator_score(table, &binding)?;
    let score_name = unique_name(table, "mediator_score");
    let t = table
        .clone()
        .with_column(Column::numeric(score_name.clone(), score))?;
    let outcome = table.column_at(binding.outcome).name.clone();
    let x = names(table, &binding.confounders());
    let meds = names(table, &binding.mediators);
    let covs = names(table, &binding.covariates);

    let mut out = Benchmarks::default();
    for (k, cov) in covs.iter().enumerate() {
        let others: Vec<String> = covs
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .map(|(_, c)| c.clone())
            .collect();
        let y_reduced = group_spec(table, &binding)
            .mains(&x)
            .mains(&meds)
            .mains(&others);
        let y_full = y_reduced.clone().main(cov);
        let s_reduced = group_spec(table, &binding).mains(&x).mains(&others);
        let s_full = s_reduced.clone().main(cov);
        let result = (|| -> Result<(f64, f64)> {
            let ym = fit_linear_model(&t, &outcome, &y_full)?;
            let col = binding.covariates[k];
            let ycols: Vec<usize> = ym.design().main_columns(col).unwrap_or(0..0).collect();
            let r2_y = block_partial_r2(&t, &outcome, &y_reduced, &ym, &ycols)?;
            let sm = fit_linear_model(&t, &score_name, &s_full)?;
            let scols: Vec<usize> = sm.design().main_columns(col).unwrap_or(0..0).collect();
            let r2_dm = block_partial_r2(&t, &score_name, &s_reduced, &sm, &scols)?;
            Ok((r2_y, r2_dm))
        })();
        match result {
            Ok((r2_y, r2_dm)) => {
                for m in [1.0, 2.0] {
                    out.points.push(BenchmarkPoint {
                        covariate: cov.clone(),
                        r2_y,
                        r2_dm: (m * r2_dm).min(1.0 - f64::EPSILON),
                        multiplier: m,
                    });
                }
            }
            Err(e @ Error::RankDeficient { .. }) => out.skipped.push((cov.clone(), e.to_string())),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic() -> SensitivityInputs {
        SensitivityInputs::synthetic(0.1, 400.0, 0.5, -0.3, -0.2)
    }

    #[test]
    fn bias_vanishes_on_axes() {
        let s = synthetic();
        assert_eq!(compute_bias(0.0, 0.3, &s).unwrap(), 0.0);
        assert_eq!(compute_bias(0.3, 0.0, &s).unwrap(), 0.0);
        assert!(compute_bias(0.3, 1.0, &s).is_err());
    }

    #[test]
    fn adjustment_preserves_sum_and_magnitude() {
        for b in [0.0, 0.05, 0.3, 1.2] {
            for dir in [
                BiasDirection::DeltaTowardZero,
                BiasDirection::ZetaTowardZero,
            ] {
                let (d, z) = adjusted_estimates(-0.3, -0.2, b, dir);
                assert!((d + z + 0.5).abs() < 1e-15);
                assert!(((d + 0.3).abs() - (z + 0.2).abs()).abs() < 1e-15);
            }
        }
        let (d, _) = adjusted_estimates(-0.3, -0.2, 0.1, BiasDirection::DeltaTowardZero);
        assert!((d + 0.2).abs() < 1e-15);
    }

    #[test]
    fn diagonal_crossing_solves_the_closed_form() {
        let s = synthetic();
        let t = diagonal_crossing(&s, 0.3, 0.5).unwrap();
        let b = compute_bias(t, t, &s).unwrap();
        assert!((b - 0.3).abs() < 1e-12);
        assert!(diagonal_crossing(&s, 0.3, 0.1).is_none());
    }

    #[test]
    fn grid_is_monotone_and_contours_lie_on_target() {
        let s = synthetic();
        let g = sensitivity_grid(&s, 21, 0.5).unwrap();
        for i in 0..21 {
            for j in 1..21 {
                assert!(g.points[i * 21 + j].bias >= g.points[i * 21 + j - 1].bias);
                assert!(g.points[j * 21 + i].bias >= g.points[(j - 1) * 21 + i].bias);
            }
        }
        for &(a, b) in &g.zero_contour {
            assert!((compute_bias(a, b, &s).unwrap() - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn modified_bias_collapses_with_equal_strata_effects() {
        let probs = vec![vec![0.3, 0.7], vec![0.6, 0.4]];
        let b = compute_modified_bias(&[0.5, 0.5], 0.4, &probs, &[0.2, 0.1], &[0.5, 0.5]).unwrap();
        assert!((b - 0.5 * 0.4 * 0.15).abs() < 1e-15);
        let zero =
            compute_modified_bias(&[0.1, 0.9], 0.0, &probs, &[0.2, 0.1], &[0.5, 0.5]).unwrap();
        assert_eq!(zero, 0.0);
        let bad = compute_modified_bias(&[0.1, 0.9], 0.4, &[vec![0.3, 0.6]], &[0.2], &[1.0]);
        assert!(matches!(bad, Err(Error::Domain(_))));
    }

    #[test]
    fn partial_r2_known_t() {
        assert!((partial_r2(2.0, 96.0) - 0.04).abs() < 1e-15);
    }
}
