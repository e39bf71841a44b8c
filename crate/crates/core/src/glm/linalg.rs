//! Dense kernels used by the fitters: Householder QR with rank detection,
//! triangular solves, and column standardization.

/// Column-wise centering and scaling of a row-major design. The intercept
/// column (if any) is column 0 and is left untouched.
#[derive(Debug, Clone)]
pub(crate) struct Scaling {
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Scaling {
    pub fn fit(x: &[f64], n: usize, p: usize, intercept: bool) -> Scaling {
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        if n == 0 {
            return Scaling { center, scale };
        }
        let first = usize::from(intercept);
        for j in first..p {
            let mean = (0..n).map(|i| x[i * p + j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (x[i * p + j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd > 0.0 && sd.is_finite() {
                center[j] = if intercept { mean } else { 0.0 };
                scale[j] = if intercept {
                    sd
                } else {
                    (var + mean * mean).sqrt()
                };
            }
        }
        Scaling { center, scale }
    }

    pub fn apply(&self, x: &mut [f64], p: usize) {
        for row in x.chunks_exact_mut(p) {
            for ((v, c), s) in row.iter_mut().zip(&self.center).zip(&self.scale) {
                *v = (*v - c) / s;
            }
        }
    }

    /// Maps coefficients on the scaled design back to the original one.
    pub fn unscale(&self, beta: &[f64], intercept: bool) -> Vec<f64> {
        let mut out: Vec<f64> = beta.iter().zip(&self.scale).map(|(b, s)| b / s).collect();
        if intercept {
            out[0] = beta[0];
            for j in 1..beta.len() {
                out[0] -= beta[j] * self.center[j] / self.scale[j];
            }
        }
        out
    }

    /// Linear map `A` with `beta_original = A beta_scaled`, row-major.
    pub fn jacobian(&self, intercept: bool) -> Vec<f64> {
        let p = self.scale.len();
        let mut a = vec![0.0; p * p];
        for j in 0..p {
            a[j * p + j] = 1.0 / self.scale[j];
        }
        if intercept {
            a[0] = 1.0;
            for j in 1..p {
                a[j] = -self.center[j] / self.scale[j];
            }
        }
        a
    }
}

/// Result of a Householder factorization `X = QR`.
pub(crate) struct Qr {
    pub p: usize,
    /// Upper triangular factor, row-major `p × p`.
    pub r: Vec<f64>,
    /// `Qᵀy` (first `p` entries) when a response was supplied.
    pub qty: Vec<f64>,
    /// Columns whose pivot is negligible relative to their norm.
    pub dependent: Vec<usize>,
}

/// Householder QR of a row-major `n × p` matrix, optionally transforming a
/// response alongside.
pub(crate) fn householder_qr(x: &[f64], n: usize, p: usize, y: Option<&[f64]>) -> Qr {
    // column-major working copy
    let mut a = vec![0.0; n * p];
    for i in 0..n {
        for j in 0..p {
            a[j * n + i] = x[i * p + j];
        }
    }
    let norms: Vec<f64> = (0..p)
        .map(|j| {
            a[j * n..(j + 1) * n]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut qty: Vec<f64> = y.map(|v| v.to_vec()).unwrap_or_default();
    let mut v = vec![0.0; n];
    let mut dependent = Vec::new();

    for k in 0..p.min(n) {
        let col = &a[k * n..(k + 1) * n];
        let alpha = col[k..].iter().map(|t| t * t).sum::<f64>().sqrt();
        if alpha <= 1e-9 * norms[k] || norms[k] == 0.0 {
            dependent.push(k);
            continue;
        }
        let alpha = if col[k] > 0.0 { -alpha } else { alpha };
        v[k..].copy_from_slice(&col[k..]);
        v[k] -= alpha;
        let vnorm2: f64 = v[k..].iter().map(|t| t * t).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        for j in k..p {
            let cj = &mut a[j * n..(j + 1) * n];
            let dot: f64 = v[k..].iter().zip(&cj[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vv) in cj[k..].iter_mut().zip(&v[k..]) {
                *c -= f * vv;
            }
        }
        if !qty.is_empty() {
            let dot: f64 = v[k..].iter().zip(&qty[k..]).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vv) in qty[k..].iter_mut().zip(&v[k..]) {
                *c -= f * vv;
            }
        }
    }
    for k in n..p {
        dependent.push(k);
    }
    let mut r = vec![0.0; p * p];
    for i in 0..p.min(n) {
        for j in i..p {
            r[i * p + j] = a[j * n + i];
        }
    }
    qty.truncate(p.min(qty.len()));
    Qr {
        p,
        r,
        qty,
        dependent,
    }
}

impl Qr {
    /// Solves `R b = Qᵀy`.
    pub fn solve(&self) -> Vec<f64> {
        back_substitute(&self.r, self.p, &self.qty)
    }

    /// `(RᵀR)⁻¹ = R⁻¹R⁻ᵀ`, row-major.
    pub fn inverse_gram(&self) -> Vec<f64> {
        let p = self.p;
        let mut rinv = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|t| *t = 0.0);
            e[j] = 1.0;
            let col = back_substitute(&self.r, p, &e);
            for i in 0..p {
                rinv[i * p + j] = col[i];
            }
        }
        let mut g = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                g[i * p + j] = (0..p).map(|k| rinv[i * p + k] * rinv[j * p + k]).sum();
            }
        }
        g
    }
}

fn back_substitute(r: &[f64], p: usize, b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r[i * p + j] * x[j]).sum();
        x[i] = (b[i] - s) / r[i * p + i];
    }
    x
}

/// `A M Aᵀ` for row-major square matrices.
pub(crate) fn sandwich(a: &[f64], m: &[f64], p: usize) -> Vec<f64> {
    let mut am = vec![0.0; p * p];
    for i in 0..p {
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..p {
                am[i * p + j] += aik * m[k * p + j];
            }
        }
    }
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            out[i * p + j] = (0..p).map(|k| am[i * p + k] * a[j * p + k]).sum();
        }
    }
    out
}
