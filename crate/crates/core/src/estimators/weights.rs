use serde::Serialize;

use crate::data::ObservationTable;
use crate::design::RowRef;
use crate::error::{Error, Result};
use crate::glm::GroupMembershipModel;
use crate::stats::quantile;

const MIN_PROPENSITY: f64 = 1e-12;

/// Balancing weights P̂(R=r) / P̂(R=r | c) for the rows of one group.
#[derive(Debug, Clone, Serialize)]
pub struct WeightVector {
    pub level: u32,
    /// Table rows belonging to the group, ascending.
    pub rows: Vec<usize>,
    pub weights: Vec<f64>,
    /// Number of weights capped by trimming.
    pub trimmed: usize,
}

impl WeightVector {
    pub fn mean(&self) -> f64 {
        self.weights.iter().sum::<f64>() / self.weights.len() as f64
    }
}

/// Computes balancing weights for group level `r` from a fitted group
/// model. `trim` caps weights at that within-group quantile.
pub fn compute_balancing_weights(
    gm: &GroupMembershipModel,
    table: &ObservationTable,
    group_col: usize,
    r: u32,
    trim: Option<f64>,
) -> Result<WeightVector> {
    let codes = &table
        .column_at(group_col)
        .as_factor()
        .ok_or_else(|| Error::config("group column must be categorical"))?
        .codes;
    let rows: Vec<usize> = (0..codes.len()).filter(|&i| codes[i] == r).collect();
    if rows.is_empty() {
        return Err(Error::estimation(format!("group level {r} has no rows")));
    }
    let marginal = rows.len() as f64 / codes.len() as f64;
    let mut buf = vec![0.0; gm.design().n_cols()];
    let mut probs = vec![0.0; gm.n_classes()];
    let mut weights = Vec::with_capacity(rows.len());
    for &row in &rows {
        gm.predict_with(&RowRef { table, row }, &mut buf, &mut probs)?;
        let p = probs[r as usize];
        if !(p >= MIN_PROPENSITY) {
            return Err(Error::Positivity(format!(
                "fitted group probability {p:e} at row {} is below {MIN_PROPENSITY:e}",
                row + 1
            )));
        }
        weights.push(marginal / p);
    }
    let mut trimmed = 0;
    if let Some(q) = trim {
        let cap = quantile(&weights, q);
        for w in weights.iter_mut() {
            if *w > cap {
                *w = cap;
                trimmed += 1;
            }
        }
    }
    Ok(WeightVector {
        level: r,
        rows,
        weights,
        trimmed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::design::DesignSpec;
    use crate::glm::fit_multinomial_logit;

    fn cell_table() -> ObservationTable {
        // group A: 80 at c=0, 20 at c=1; group B: 20 at c=0, 80 at c=1
        let mut r = Vec::new();
        let mut c = Vec::new();
        for (g, n0, n1) in [(0u32, 80, 20), (1, 20, 80)] {
            r.extend(std::iter::repeat_n(g, n0 + n1));
            c.extend(std::iter::repeat_n(0.0, n0));
            c.extend(std::iter::repeat_n(1.0, n1));
        }
        ObservationTable::from_columns(vec![
            Column::categorical("r", vec!["A".into(), "B".into()], r),
            Column::numeric("c", c),
        ])
        .unwrap()
    }

    #[test]
    fn saturated_model_weights_match_cell_counts() {
        let t = cell_table();
        let gm =
            fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept().main("c"), None).unwrap();
        let w = compute_balancing_weights(&gm, &t, 0, 0, None).unwrap();
        assert!((w.weights[0] - 0.625).abs() < 1e-8);
        assert!((w.weights[99] - 2.5).abs() < 1e-8);
        assert!((w.mean() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn intercept_only_weights_are_one() {
        let t = cell_table();
        let gm = fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept(), None).unwrap();
        let w = compute_balancing_weights(&gm, &t, 0, 1, None).unwrap();
        assert!(w.weights.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn trimming_caps_and_reports() {
        let t = cell_table();
        let gm =
            fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept().main("c"), None).unwrap();
        let w = compute_balancing_weights(&gm, &t, 0, 0, Some(0.5)).unwrap();
        assert_eq!(w.trimmed, 20);
        assert!(w.weights.iter().all(|&x| x <= 0.625 + 1e-8));
    }
}
