use crate::data::ObservationTable;
use crate::design::{Design, DesignSpec, RowRef, ValueSource};
use crate::error::{Error, Result};
use crate::glm::linalg::{householder_qr, sandwich, Scaling};

/// Ordinary least squares fit.
#[derive(Debug, Clone)]
pub struct LinearModel {
    design: Design,
    coefficients: Vec<f64>,
    std_errors: Vec<f64>,
    residuals: Vec<f64>,
    rss: f64,
    df: usize,
}

impl LinearModel {
    pub fn design(&self) -> &Design {
        &self.design
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn std_errors(&self) -> &[f64] {
        &self.std_errors
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// Residual degrees of freedom, `n − p`.
    pub fn df(&self) -> usize {
        self.df
    }

    /// Unbiased residual standard deviation.
    pub fn residual_sd(&self) -> f64 {
        (self.rss / self.df as f64).sqrt()
    }

    pub fn t_stat(&self, j: usize) -> f64 {
        self.coefficients[j] / self.std_errors[j]
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.design
            .names()
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }

    /// Prediction using a caller-provided design buffer of length `n_cols`.
    #[inline]
    pub fn predict_with<S: ValueSource + ?Sized>(&self, src: &S, buf: &mut [f64]) -> Result<f64> {
        self.design.fill(src, buf)?;
        Ok(buf.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum())
    }

    pub fn predict_row<S: ValueSource + ?Sized>(&self, src: &S) -> Result<f64> {
        let mut buf = vec![0.0; self.design.n_cols()];
        self.predict_with(src, &mut buf)
    }

    pub fn predict(&self, table: &ObservationTable) -> Result<Vec<f64>> {
        let mut buf = vec![0.0; self.design.n_cols()];
        (0..table.n_rows())
            .map(|row| self.predict_with(&RowRef { table, row }, &mut buf))
            .collect()
    }
}

/// Least squares via Householder QR on the centered and scaled design.
/// Coefficients and standard errors are reported on the original scale.
pub fn fit_linear_model(
    table: &ObservationTable,
    response: &str,
    spec: &DesignSpec,
) -> Result<LinearModel> {
    let col = table.require(response)?;
    let y = table
        .column_at(col)
        .as_numeric()
        .ok_or_else(|| Error::config(format!("response `{response}` must be numeric")))?;
    let design = spec.compile(table)?;
    fit_with_design(table, y, design)
}

fn fit_with_design(table: &ObservationTable, y: &[f64], design: Design) -> Result<LinearModel> {
    let n = table.n_rows();
    let p = design.n_cols();
    if n <= p {
        return Err(Error::estimation(format!(
            "linear model needs more rows ({n}) than design columns ({p})"
        )));
    }
    let x = design.matrix(table)?;
    let scaling = Scaling::fit(&x, n, p, design.has_intercept());
    let mut z = x.clone();
    scaling.apply(&mut z, p);
    let qr = householder_qr(&z, n, p, Some(y));
    if !qr.dependent.is_empty() {
        return Err(Error::RankDeficient {
            columns: qr
                .dependent
                .iter()
                .map(|&j| design.names()[j].clone())
                .collect(),
        });
    }
    let beta_scaled = qr.solve();
    let coefficients = scaling.unscale(&beta_scaled, design.has_intercept());

    let residuals: Vec<f64> = x
        .chunks_exact(p)
        .zip(y)
        .map(|(row, yi)| {
            yi - row
                .iter()
                .zip(&coefficients)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let df = n - p;
    let sigma2 = rss / df as f64;
    let cov_scaled = qr.inverse_gram();
    let cov = sandwich(&scaling.jacobian(design.has_intercept()), &cov_scaled, p);
    let std_errors = (0..p)
        .map(|j| (sigma2 * cov[j * p + j]).max(0.0).sqrt())
        .collect();

    Ok(LinearModel {
        design,
        coefficients,
        std_errors,
        residuals,
        rss,
        df,
    })
}
