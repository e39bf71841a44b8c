use crate::config::{validate_config, AnalysisConfig, XCombination};
use crate::data::ObservationTable;
use crate::design::DesignSpec;
use crate::error::{Error, Result};
use crate::glm::{fit_linear_model, LinearModel};

use super::{DecompositionEstimate, EstimatorKind, EstimatorOptions, GroupEstimate};

/// Regression estimator: fits Y on (group, C), on (group, X, C) and on
/// (group, X, mediators, C), then combines the group and confounder
/// coefficients of the three fits.
pub fn decompose_regression(
    config: &AnalysisConfig,
    table: &ObservationTable,
    opts: &EstimatorOptions,
) -> Result<DecompositionEstimate> {
    if opts.differential || !config.interactions.is_empty() {
        return Err(Error::config(
            "the regression estimator supports main effects only",
        ));
    }
    let binding = validate_config(config, table)?;
    let name = |c: usize| table.column_at(c).name.clone();
    let group = name(binding.group);
    let outcome = name(binding.outcome);
    let names = |cols: &[usize]| cols.iter().map(|&c| name(c)).collect::<Vec<_>>();
    let x = binding.confounders();
    let base = DesignSpec::with_intercept()
        .main(&group)
        .reference(&group, binding.reference);

    let covs = names(&binding.covariates);
    let total = fit_linear_model(table, &outcome, &base.clone().mains(&covs))?;
    let with_x = fit_linear_model(
        table,
        &outcome,
        &base.clone().mains(&names(&x)).mains(&covs),
    )?;
    let full = fit_linear_model(
        table,
        &outcome,
        &base
            .mains(&names(&x))
            .mains(&names(&binding.mediators))
            .mains(&covs),
    )?;

    let x_cols = |m: &LinearModel| -> Vec<usize> {
        x.iter()
            .flat_map(|&c| m.design().main_columns(c).unwrap_or(0..0))
            .collect()
    };
    let (gx, ax) = (x_cols(&with_x), x_cols(&full));
    if gx.len() > 1 && config.regression_x_rule.is_none() {
        return Err(Error::config(
            "several confounder columns need regression_x_rule = \"mean_difference\"",
        ));
    }

    let codes = &table.column_at(binding.group).as_factor().unwrap().codes;
    let design_rows = with_x.design().matrix(table)?;
    let p = with_x.design().n_cols();
    let x_means = |level: u32| -> Vec<f64> {
        let mut sum = vec![0.0; gx.len()];
        let mut n = 0.0;
        for (i, &g) in codes.iter().enumerate() {
            if g == level {
                n += 1.0;
                for (s, &j) in sum.iter_mut().zip(&gx) {
                    *s += design_rows[i * p + j];
                }
            }
        }
        sum.into_iter().map(|s| s / n).collect()
    };

    let group_coef = |m: &LinearModel, r: u32| -> Result<f64> {
        m.design()
            .level_column(binding.group, r)
            .map(|j| m.coefficients()[j])
            .ok_or_else(|| Error::estimation(format!("no coefficient for group level {r}")))
    };

    let mut groups = Vec::new();
    for r in binding.comparison_levels() {
        let phi = group_coef(&total, r)?;
        let gamma = group_coef(&with_x, r)?;
        let alpha = group_coef(&full, r)?;
        let ratio = match gx.len() {
            0 => 0.0,
            1 => {
                let g = with_x.coefficients()[gx[0]];
                if g == 0.0 {
                    return Err(Error::estimation("confounder coefficient is zero"));
                }
                full.coefficients()[ax[0]] / g
            }
            _ => {
                let Some(XCombination::MeanDifference) = config.regression_x_rule else {
                    unreachable!()
                };
                let (mr, m0) = (x_means(r), x_means(binding.reference));
                let diff: Vec<f64> = mr.iter().zip(&m0).map(|(a, b)| a - b).collect();
                let dot = |m: &LinearModel, cols: &[usize]| -> f64 {
                    cols.iter()
                        .zip(&diff)
                        .map(|(&j, d)| m.coefficients()[j] * d)
                        .sum()
                };
                let den = dot(&with_x, &gx);
                if den == 0.0 {
                    return Err(Error::estimation(
                        "confounder contribution at the mean difference is zero",
                    ));
                }
                dot(&full, &ax) / den
            }
        };
        let delta = gamma - alpha + (1.0 - ratio) * (phi - gamma);
        groups.push(GroupEstimate::new(
            binding.levels[r as usize].clone(),
            r,
            phi,
            delta,
            None,
            0,
        ));
    }
    Ok(DecompositionEstimate {
        estimator: EstimatorKind::Regression,
        reference: binding.levels[binding.reference as usize].clone(),
        groups,
        reference_trimmed: 0,
        diagnostics: binding.diagnostics.iter().map(|d| d.to_string()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn table() -> ObservationTable {
        let n = 300u32;
        let r: Vec<u32> = (0..n).map(|i| i % 3).collect();
        let c: Vec<f64> = (0..n).map(|i| ((i * 31) % 17) as f64 / 17.0).collect();
        let x: Vec<f64> = (0..n)
            .map(|i| ((i * 13) % 11) as f64 / 11.0 + 0.2 * (i % 3) as f64)
            .collect();
        let d: Vec<f64> = (0..n)
            .map(|i| 0.5 * (i % 3) as f64 + x[i as usize] + ((i * 7) % 5) as f64 / 5.0)
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let k = i as usize;
                0.3 * (i % 3) as f64 + d[k] + 0.5 * x[k] + c[k] + ((i * 3) % 7) as f64 / 7.0
            })
            .collect();
        ObservationTable::from_columns(vec![
            Column::categorical("r", vec!["a".into(), "b".into(), "c".into()], r),
            Column::numeric("c", c),
            Column::numeric("x", x),
            Column::numeric("d", d),
            Column::numeric("y", y),
        ])
        .unwrap()
    }

    #[test]
    fn identity_and_tau_equals_total_coefficient() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["d"]);
        cfg.covariates = vec!["c".into()];
        cfg.confounders_pre = vec!["x".into()];
        let est = decompose_regression(&cfg, &t, &EstimatorOptions::default()).unwrap();
        assert_eq!(est.groups.len(), 2);
        for g in &est.groups {
            assert!((g.tau - g.delta - g.zeta).abs() < 1e-12);
        }
    }

    #[test]
    fn without_confounders_reduces_to_coefficient_difference() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["d"]);
        cfg.covariates = vec!["c".into()];
        let est = decompose_regression(&cfg, &t, &EstimatorOptions::default()).unwrap();
        let full = fit_linear_model(
            &t,
            "y",
            &DesignSpec::with_intercept().main("r").main("d").main("c"),
        )
        .unwrap();
        let alpha = full.coefficient("r[b]").unwrap();
        let g = est.group("b").unwrap();
        assert!((g.zeta - alpha).abs() < 1e-10);
    }

    #[test]
    fn vector_confounders_need_a_rule() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["d"]);
        cfg.confounders_pre = vec!["x".into(), "c".into()];
        assert!(matches!(
            decompose_regression(&cfg, &t, &EstimatorOptions::default()),
            Err(Error::Config(_))
        ));
        cfg.regression_x_rule = Some(XCombination::MeanDifference);
        let est = decompose_regression(&cfg, &t, &EstimatorOptions::default()).unwrap();
        assert!(est.groups.iter().all(|g| g.delta.is_finite()));
    }
}
