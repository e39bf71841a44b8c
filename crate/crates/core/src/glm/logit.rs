use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::data::ObservationTable;
use crate::design::{Design, DesignSpec, RowRef, ValueSource};
use crate::error::{Error, Result};
use crate::glm::linalg::{householder_qr, Scaling};

pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 30;
const SEPARATION_PROB: f64 = 1e-10;
/// Accepted when the line search cannot improve the likelihood any more.
const FLOOR_SCORE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    /// Largest absolute score component on the internally scaled design.
    pub max_score: f64,
    pub log_likelihood: Vec<f64>,
}

/// Multinomial logistic regression with one linear predictor per non-base
/// class.
#[derive(Debug, Clone)]
pub struct MultinomialLogit {
    design: Design,
    n_classes: usize,
    base: u32,
    /// `n_classes × p`, base row all zero.
    coefficients: Vec<f64>,
    report: ConvergenceReport,
}

/// Group-membership model P(R = r | covariates).
pub type GroupMembershipModel = MultinomialLogit;

impl MultinomialLogit {
    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn base(&self) -> u32 {
        self.base
    }

    /// Coefficients for `class` on the original design scale.
    pub fn class_coefficients(&self, class: u32) -> &[f64] {
        let p = self.design.n_cols();
        &self.coefficients[class as usize * p..(class as usize + 1) * p]
    }

    pub fn report(&self) -> &ConvergenceReport {
        &self.report
    }

    /// Writes P(class | row) for every class into `out`.
    #[inline]
    pub fn predict_with<S: ValueSource + ?Sized>(
        &self,
        src: &S,
        buf: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        self.design.fill(src, buf)?;
        let p = buf.len();
        let mut max = f64::NEG_INFINITY;
        for (k, o) in out.iter_mut().enumerate().take(self.n_classes) {
            let eta: f64 = buf
                .iter()
                .zip(&self.coefficients[k * p..(k + 1) * p])
                .map(|(x, b)| x * b)
                .sum();
            *o = eta;
            max = max.max(eta);
        }
        let mut total = 0.0;
        for o in out.iter_mut().take(self.n_classes) {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut().take(self.n_classes) {
            *o /= total;
        }
        Ok(())
    }

    pub fn predict_row<S: ValueSource + ?Sized>(&self, src: &S) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.design.n_cols()];
        let mut out = vec![0.0; self.n_classes];
        self.predict_with(src, &mut buf, &mut out)?;
        Ok(out)
    }

    /// Row-major `n × n_classes` fitted probabilities.
    pub fn predict(&self, table: &ObservationTable) -> Result<Vec<f64>> {
        let k = self.n_classes;
        let mut buf = vec![0.0; self.design.n_cols()];
        let mut out = vec![0.0; table.n_rows() * k];
        for (row, chunk) in out.chunks_exact_mut(k).enumerate() {
            self.predict_with(&RowRef { table, row }, &mut buf, chunk)?;
        }
        Ok(out)
    }
}

/// Fits P(response | design) by Newton–Raphson with step halving, starting
/// from all-zero coefficients. `base` defaults to level 0.
pub fn fit_multinomial_logit(
    table: &ObservationTable,
    response: &str,
    spec: &DesignSpec,
    base: Option<u32>,
) -> Result<MultinomialLogit> {
    let col = table.require(response)?;
    let factor = table
        .column_at(col)
        .as_factor()
        .ok_or_else(|| Error::config(format!("response `{response}` must be categorical")))?;
    let design = spec.compile(table)?;
    fit_codes(
        table,
        &factor.codes,
        factor.levels.len(),
        base.unwrap_or(0),
        design,
    )
}

pub(crate) fn fit_codes(
    table: &ObservationTable,
    codes: &[u32],
    n_classes: usize,
    base: u32,
    design: Design,
) -> Result<MultinomialLogit> {
    if n_classes < 2 {
        return Err(Error::estimation(
            "multinomial logit needs at least two classes",
        ));
    }
    let n = table.n_rows();
    let p = design.n_cols();
    let mut class_counts = vec![0usize; n_classes];
    for &c in codes {
        class_counts[c as usize] += 1;
    }
    if let Some(empty) = class_counts.iter().position(|&c| c == 0) {
        return Err(Error::estimation(format!(
            "response class {empty} has no observations"
        )));
    }

    let x = design.matrix(table)?;
    let scaling = Scaling::fit(&x, n, p, design.has_intercept());
    let mut z = x;
    scaling.apply(&mut z, p);
    let qr = householder_qr(&z, n, p, None);
    if !qr.dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: qr
                .dependent
                .iter()
                .map(|&j| design.names()[j].clone())
                .collect(),
        });
    }

    let free: Vec<u32> = (0..n_classes as u32).filter(|&k| k != base).collect();
    let data = Compressed::new(&z, codes, n, p, n_classes);
    let theta = newton(&data, &free, n_classes, p)?;

    let mut coefficients = vec![0.0; n_classes * p];
    for (f, &k) in free.iter().enumerate() {
        let b = scaling.unscale(&theta.0[f * p..(f + 1) * p], design.has_intercept());
        coefficients[k as usize * p..(k as usize + 1) * p].copy_from_slice(&b);
    }
    Ok(MultinomialLogit {
        design,
        n_classes,
        base,
        coefficients,
        report: theta.1,
    })
}

/// Rows with identical design vectors pooled into per-class counts.
struct Compressed {
    rows: Vec<f64>,
    counts: Vec<f64>,
    totals: Vec<f64>,
    p: usize,
    k: usize,
}

impl Compressed {
    fn new(z: &[f64], codes: &[u32], n: usize, p: usize, k: usize) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
        let mut rows = Vec::new();
        let mut counts = Vec::new();
        let mut totals = Vec::new();
        for i in 0..n {
            let row = &z[i * p..(i + 1) * p];
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let u = *index.entry(key).or_insert_with(|| {
                rows.extend_from_slice(row);
                counts.extend(std::iter::repeat_n(0.0, k));
                totals.push(0.0);
                totals.len() - 1
            });
            counts[u * k + codes[i] as usize] += 1.0;
            totals[u] += 1.0;
        }
        Compressed {
            rows,
            counts,
            totals,
            p,
            k,
        }
    }

    fn n_unique(&self) -> usize {
        self.totals.len()
    }

    /// Log-likelihood and fitted probabilities (`n_unique × k`).
    fn evaluate(&self, theta: &[f64], free: &[u32]) -> (f64, Vec<f64>, f64) {
        let (p, k) = (self.p, self.k);
        let mut probs = vec![0.0; self.n_unique() * k];
        let mut ll = 0.0;
        let mut min_prob = f64::INFINITY;
        for u in 0..self.n_unique() {
            let row = &self.rows[u * p..(u + 1) * p];
            let pr = &mut probs[u * k..(u + 1) * k];
            pr.iter_mut().for_each(|v| *v = 0.0);
            for (f, &c) in free.iter().enumerate() {
                pr[c as usize] = row
                    .iter()
                    .zip(&theta[f * p..(f + 1) * p])
                    .map(|(a, b)| a * b)
                    .sum();
            }
            let max = pr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + pr.iter().map(|e| (e - max).exp()).sum::<f64>().ln();
            for (c, v) in pr.iter_mut().enumerate() {
                let logp = *v - lse;
                let cnt = self.counts[u * k + c];
                if cnt > 0.0 {
                    ll += cnt * logp;
                }
                *v = logp.exp();
                min_prob = min_prob.min(*v);
            }
        }
        (ll, probs, min_prob)
    }

    /// Score and negative Hessian with respect to the free-class coefficients.
    fn derivatives(&self, probs: &[f64], free: &[u32]) -> (Vec<f64>, Vec<f64>) {
        let (p, k) = (self.p, self.k);
        let q = free.len() * p;
        let mut g = vec![0.0; q];
        let mut h = vec![0.0; q * q];
        for u in 0..self.n_unique() {
            let row = &self.rows[u * p..(u + 1) * p];
            let pr = &probs[u * k..(u + 1) * k];
            let nu = self.totals[u];
            for (f, &cf) in free.iter().enumerate() {
                let resid = self.counts[u * k + cf as usize] - nu * pr[cf as usize];
                for a in 0..p {
                    g[f * p + a] += row[a] * resid;
                }
                for (e, &ce) in free.iter().enumerate().skip(f) {
                    let kron = if f == e { 1.0 } else { 0.0 };
                    let w = nu * pr[cf as usize] * (kron - pr[ce as usize]);
                    if w == 0.0 {
                        continue;
                    }
                    for a in 0..p {
                        let wa = w * row[a];
                        let base = (f * p + a) * q + e * p;
                        for b in 0..p {
                            h[base + b] += wa * row[b];
                        }
                    }
                }
            }
        }
        // mirror the upper block triangle
        for i in 0..q {
            for j in 0..i {
                let (fi, fj) = (i / p, j / p);
                if fi > fj {
                    h[i * q + j] = h[j * q + i];
                }
            }
        }
        (g, h)
    }
}

fn newton(
    data: &Compressed,
    free: &[u32],
    _n_classes: usize,
    p: usize,
) -> Result<(Vec<f64>, ConvergenceReport)> {
    let q = free.len() * p;
    let mut theta = vec![0.0; q];
    let (mut ll, mut probs, mut min_prob) = data.evaluate(&theta, free);
    let mut trace = vec![ll];
    let mut max_score = f64::INFINITY;

    for iteration in 0..=MAX_ITERATIONS {
        let (g, h) = data.derivatives(&probs, free);
        max_score = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if max_score < SCORE_TOLERANCE {
            return Ok((
                theta,
                ConvergenceReport {
                    iterations: iteration,
                    max_score,
                    log_likelihood: trace,
                },
            ));
        }
        if min_prob < SEPARATION_PROB {
            return Err(Error::Separation {
                iteration,
                min_prob,
            });
        }
        if iteration == MAX_ITERATIONS {
            break;
        }
        let hm = DMatrix::from_row_slice(q, q, &h);
        let step = match hm.cholesky() {
            Some(ch) => ch.solve(&DVector::from_column_slice(&g)),
            None => {
                return Err(Error::Separation {
                    iteration,
                    min_prob,
                })
            }
        };

        // near the optimum the gain is below the rounding error of `ll`
        let slack = 64.0 * f64::EPSILON * (1.0 + ll.abs());
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + scale * s)
                .collect();
            let (ll_new, probs_new, min_new) = data.evaluate(&cand, free);
            if ll_new.is_finite() && ll_new >= ll - slack {
                accepted = Some((cand, ll_new, probs_new, min_new));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((cand, ll_new, probs_new, min_new)) => {
                theta = cand;
                ll = ll_new;
                probs = probs_new;
                min_prob = min_new;
                trace.push(ll);
            }
            None if max_score < FLOOR_SCORE_TOLERANCE => {
                return Ok((
                    theta,
                    ConvergenceReport {
                        iterations: iteration,
                        max_score,
                        log_likelihood: trace,
                    },
                ));
            }
            None => break,
        }
    }
    Err(Error::NonConvergence {
        iterations: trace.len() - 1,
        max_score,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn two_level(codes: Vec<u32>, c: Vec<f64>) -> ObservationTable {
        ObservationTable::from_columns(vec![
            Column::categorical("r", vec!["a".into(), "b".into()], codes),
            Column::numeric("c", c),
        ])
        .unwrap()
    }

    #[test]
    fn intercept_only_balanced() {
        let codes: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let t = two_level(codes, vec![0.0; 100]);
        let m = fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept(), None).unwrap();
        let p = m.predict(&t).unwrap();
        for row in p.chunks(2) {
            assert!((row[0] - 0.5).abs() < 1e-12 && (row[1] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_binary_covariate_matches_cell_proportions() {
        // c=0: 30 a, 10 b; c=1: 5 a, 15 b
        let mut codes = Vec::new();
        let mut c = Vec::new();
        for (cv, na, nb) in [(0.0, 30, 10), (1.0, 5, 15)] {
            codes.extend(std::iter::repeat_n(0, na));
            codes.extend(std::iter::repeat_n(1, nb));
            c.extend(std::iter::repeat_n(cv, na + nb));
        }
        let t = two_level(codes, c);
        let m =
            fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept().main("c"), None).unwrap();
        let p = m.predict(&t).unwrap();
        assert!((p[1] - 0.25).abs() < 1e-8);
        assert!((p[2 * 45 + 1] - 0.75).abs() < 1e-8);
        assert!(m.report().max_score < SCORE_TOLERANCE);
        let ll = &m.report().log_likelihood;
        assert!(ll.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn complete_separation_is_reported() {
        let codes = vec![0, 0, 0, 1, 1, 1];
        let c = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let t = two_level(codes, c);
        let r = fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept().main("c"), None);
        assert!(
            matches!(
                r,
                Err(Error::Separation { .. }) | Err(Error::NonConvergence { .. })
            ),
            "{r:?}"
        );
    }

    #[test]
    fn empty_class_is_rejected() {
        let t = ObservationTable::from_columns(vec![Column::categorical(
            "r",
            vec!["a".into(), "b".into(), "c".into()],
            vec![0, 1, 0, 1],
        )])
        .unwrap();
        assert!(fit_multinomial_logit(&t, "r", &DesignSpec::with_intercept(), None).is_err());
    }
}
