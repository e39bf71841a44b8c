use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::Scenario;
use crate::error::{Error, Result};

use super::generate::{chunk_rng, CHUNK};
use super::model::{Compiled, StructuralModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OracleMethod {
    McInterventional,
    ExactSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleSe {
    pub tau: f64,
    pub delta: f64,
    pub zeta: f64,
}

/// True decomposition of group `group` against the reference group 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult {
    pub group: u32,
    pub tau: f64,
    pub delta: f64,
    pub zeta: f64,
    pub counterfactual_mean: f64,
    /// Monte Carlo standard errors; `None` for exact summation.
    pub se: Option<OracleSe>,
    pub method: OracleMethod,
    pub n_mc: Option<usize>,
}

fn check_group(m: &Compiled, r: u32) -> Result<()> {
    if r as usize >= m.n_groups {
        return Err(Error::Model(format!(
            "group {r} does not exist; the model has {} groups",
            m.n_groups
        )));
    }
    Ok(())
}

/// Interventional truth by simulation. Each simulated unit keeps its
/// covariates and is realized three times: under group `r`, under the
/// reference group, and under group `r` with its mediators replaced by the
/// reference-group draw (post-exposure confounders regenerated downstream
/// of that draw in the interposed scenario). Outcomes enter through their
/// conditional mean.
pub fn oracle_truth_mc(
    model: &StructuralModel,
    r: u32,
    n_mc: usize,
    seed: u64,
) -> Result<OracleResult> {
    let m = model.compile()?;
    check_group(&m, r)?;
    if n_mc < 2 {
        return Err(Error::Model(
            "at least two Monte Carlo units are required".into(),
        ));
    }
    if r == 0 {
        return Ok(reference_result(
            0.0,
            OracleMethod::McInterventional,
            Some(n_mc),
        ));
    }
    let nv = m.names.len();
    let redraw: Vec<usize> = match m.scenario {
        Scenario::JointMediators => Vec::new(),
        Scenario::InterposedConfounder => m
            .order
            .iter()
            .copied()
            .filter(|i| m.x_post.contains(i))
            .collect(),
    };

    // per chunk: sums and sums of squares of (y_r, y_0, y_cf) differences
    let sums: Vec<Result<[f64; 7]>> = (0..n_mc.div_ceil(CHUNK))
        .into_par_iter()
        .map(|k| {
            let rows = CHUNK.min(n_mc - k * CHUNK);
            let mut rng = chunk_rng(seed, k);
            let mut scratch = Vec::new();
            let (mut vr, mut v0, mut vcf) = (vec![0.0; nv], vec![0.0; nv], vec![0.0; nv]);
            let mut acc = [0.0; 7];
            for _ in 0..rows {
                for &i in &m.order {
                    if m.covariates.contains(&i) {
                        vr[i] = m.laws[i].draw(&vr, &mut rng, &mut scratch);
                        v0[i] = vr[i];
                    }
                }
                m.laws[m.group].probabilities(&vr, &mut scratch);
                if scratch[0] <= 0.0 || scratch[r as usize] <= 0.0 {
                    return Err(Error::Positivity(format!(
                        "a covariate cell has no probability of group {} ",
                        if scratch[0] <= 0.0 { 0 } else { r }
                    )));
                }
                realize(&m, &mut vr, r as f64, &mut rng, &mut scratch);
                realize(&m, &mut v0, 0.0, &mut rng, &mut scratch);
                vcf.copy_from_slice(&vr);
                for &d in &m.mediators {
                    vcf[d] = v0[d];
                }
                for &x in &redraw {
                    vcf[x] = m.laws[x].draw(&vcf, &mut rng, &mut scratch);
                }
                let yr = m.laws[m.outcome].mean(&vr, &mut scratch);
                let y0 = m.laws[m.outcome].mean(&v0, &mut scratch);
                let ycf = m.laws[m.outcome].mean(&vcf, &mut scratch);
                let (t, d, z) = (yr - y0, yr - ycf, ycf - y0);
                for (a, x) in acc.iter_mut().zip([t, d, z, t * t, d * d, z * z, ycf]) {
                    *a += x;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = [0.0; 7];
    for s in sums {
        for (t, x) in total.iter_mut().zip(s?) {
            *t += x;
        }
    }
    let n = n_mc as f64;
    let se = |s: f64, ss: f64| {
        let mean = s / n;
        ((ss / n - mean * mean).max(0.0) * n / (n - 1.0) / n).sqrt()
    };
    Ok(OracleResult {
        group: r,
        tau: total[0] / n,
        delta: total[1] / n,
        zeta: total[2] / n,
        counterfactual_mean: total[6] / n,
        se: Some(OracleSe {
            tau: se(total[0], total[3]),
            delta: se(total[1], total[4]),
            zeta: se(total[2], total[5]),
        }),
        method: OracleMethod::McInterventional,
        n_mc: Some(n_mc),
    })
}

/// Draws everything downstream of the covariates with the group forced
/// to `r`.
fn realize(
    m: &Compiled,
    v: &mut [f64],
    r: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
    scratch: &mut Vec<f64>,
) {
    for &i in &m.order {
        if m.covariates.contains(&i) || i == m.outcome {
            continue;
        }
        v[i] = if i == m.group {
            r
        } else {
            m.laws[i].draw(v, rng, scratch)
        };
    }
}

fn reference_result(mean: f64, method: OracleMethod, n_mc: Option<usize>) -> OracleResult {
    OracleResult {
        group: 0,
        tau: 0.0,
        delta: 0.0,
        zeta: 0.0,
        counterfactual_mean: mean,
        se: n_mc.map(|_| OracleSe {
            tau: 0.0,
            delta: 0.0,
            zeta: 0.0,
        }),
        method,
        n_mc,
    }
}

/// Upper bound on enumerated configurations.
const MAX_CONFIGURATIONS: f64 = 5e6;

type Idx = Vec<u16>;

#[derive(Debug, Clone, Copy, Default)]
struct Mass {
    p: f64,
    py: f64,
}

impl Mass {
    fn add(&mut self, p: f64, py: f64) {
        self.p += p;
        self.py += py;
    }
}

/// Observed joint law of one (covariate cell, group) slice, keyed by
/// (pre-exposure confounders, post-exposure confounders, mediators).
type Slice = BTreeMap<(Idx, Idx, Idx), Mass>;

/// Evaluates the identification formula for `scenario` by exact summation
/// over the model's observed joint law (the latent confounder, if any, is
/// summed out). Every variable other than the outcome must be discrete.
pub fn oracle_truth_exact(
    model: &StructuralModel,
    r: u32,
    scenario: Scenario,
) -> Result<OracleResult> {
    let m = model.compile()?;
    check_group(&m, r)?;
    let (p_c, slices) = enumerate(&m)?;
    let get = |c: &Idx, g: u32| -> Result<&Slice> {
        slices.get(&(c.clone(), g as u16)).ok_or_else(|| {
            Error::Positivity(format!("covariate cell {c:?} has no members of group {g}"))
        })
    };

    let (mut mean_r, mut mean_0, mut cf) = (0.0, 0.0, 0.0);
    for (c, &pc) in &p_c {
        let s0 = get(c, 0)?;
        let (p0, e0) = total(s0);
        mean_0 += pc * e0 / p0;
        if r == 0 {
            continue;
        }
        let sr = get(c, r)?;
        let (pr, er) = total(sr);
        mean_r += pc * er / pr;

        let mut p_dm: BTreeMap<&Idx, f64> = BTreeMap::new();
        for ((_, _, dm), mass) in s0 {
            *p_dm.entry(dm).or_default() += mass.p;
        }
        let ey = |x1: &Idx, x2: &Idx, dm: &Idx| -> Result<f64> {
            match sr.get(&(x1.clone(), x2.clone(), dm.clone())) {
                Some(mass) if mass.p > 0.0 => Ok(mass.py / mass.p),
                _ => Err(Error::Positivity(format!(
                    "group {r} never shows confounders {x1:?}{x2:?} with mediators {dm:?} in covariate cell {c:?}"
                ))),
            }
        };

        let mut acc = 0.0;
        match scenario {
            Scenario::JointMediators => {
                let mut p_x: BTreeMap<(&Idx, &Idx), f64> = BTreeMap::new();
                for ((x1, x2, _), mass) in sr {
                    *p_x.entry((x1, x2)).or_default() += mass.p;
                }
                for ((x1, x2), px) in p_x {
                    let mut inner = 0.0;
                    for (&dm, &pdm) in &p_dm {
                        inner += pdm / p0 * ey(x1, x2, dm)?;
                    }
                    acc += px / pr * inner;
                }
            }
            Scenario::InterposedConfounder => {
                let mut p_x1: BTreeMap<&Idx, f64> = BTreeMap::new();
                let mut p_x1d: BTreeMap<(&Idx, u16), f64> = BTreeMap::new();
                let mut p_x1dx2: BTreeMap<(&Idx, u16), BTreeMap<&Idx, f64>> = BTreeMap::new();
                for ((x1, x2, dm), mass) in sr {
                    *p_x1.entry(x1).or_default() += mass.p;
                    *p_x1d.entry((x1, dm[0])).or_default() += mass.p;
                    *p_x1dx2
                        .entry((x1, dm[0]))
                        .or_default()
                        .entry(x2)
                        .or_default() += mass.p;
                }
                for (x1, px1) in p_x1 {
                    let mut inner = 0.0;
                    for (&dm, &pdm) in &p_dm {
                        let key = (x1, dm[0]);
                        let (Some(&pd), Some(x2s)) = (p_x1d.get(&key), p_x1dx2.get(&key)) else {
                            return Err(Error::Positivity(format!(
                                "group {r} never shows the first mediator at {} with confounders {x1:?} in covariate cell {c:?}",
                                dm[0]
                            )));
                        };
                        let mut over_x2 = 0.0;
                        for (&x2, &px2) in x2s {
                            over_x2 += px2 / pd * ey(x1, x2, dm)?;
                        }
                        inner += pdm / p0 * over_x2;
                    }
                    acc += px1 / pr * inner;
                }
            }
        }
        cf += pc * acc;
    }
    if r == 0 {
        return Ok(reference_result(mean_0, OracleMethod::ExactSum, None));
    }
    let tau = mean_r - mean_0;
    let delta = mean_r - cf;
    Ok(OracleResult {
        group: r,
        tau,
        delta,
        zeta: tau - delta,
        counterfactual_mean: cf,
        se: None,
        method: OracleMethod::ExactSum,
        n_mc: None,
    })
}

fn total(s: &Slice) -> (f64, f64) {
    s.values()
        .fold((0.0, 0.0), |(p, py), m| (p + m.p, py + m.py))
}

type Enumerated = (BTreeMap<Idx, f64>, BTreeMap<(Idx, u16), Slice>);

/// Enumerates every configuration with positive probability and
/// aggregates it into the observed joint law.
fn enumerate(m: &Compiled) -> Result<Enumerated> {
    let mut count = 1.0;
    for (i, law) in m.laws.iter().enumerate() {
        if i == m.outcome {
            continue;
        }
        let support = law.support().ok_or_else(|| {
            Error::Domain(format!(
                "exact summation needs discrete variables; `{}` is continuous",
                m.names[i]
            ))
        })?;
        count *= support.len() as f64;
    }
    if count > MAX_CONFIGURATIONS {
        return Err(Error::Domain(format!(
            "the model has {count} configurations, more than exact summation allows"
        )));
    }
    let order: Vec<usize> = m
        .order
        .iter()
        .copied()
        .filter(|&i| i != m.outcome)
        .collect();
    let mut state = Walk {
        m,
        order: &order,
        v: vec![0.0; m.names.len()],
        idx: vec![0u16; m.names.len()],
        p_c: BTreeMap::new(),
        slices: BTreeMap::new(),
    };
    state.visit(0, 1.0);
    Ok((state.p_c, state.slices))
}

struct Walk<'a> {
    m: &'a Compiled,
    order: &'a [usize],
    v: Vec<f64>,
    idx: Vec<u16>,
    p_c: BTreeMap<Idx, f64>,
    slices: BTreeMap<(Idx, u16), Slice>,
}

impl Walk<'_> {
    fn visit(&mut self, depth: usize, p: f64) {
        if p == 0.0 {
            return;
        }
        let m = self.m;
        if depth == self.order.len() {
            let pick = |cols: &[usize]| cols.iter().map(|&i| self.idx[i]).collect::<Idx>();
            let c = pick(&m.covariates);
            let key = (pick(&m.x_pre), pick(&m.x_post), pick(&m.mediators));
            let ey = m.laws[m.outcome].mean(&self.v, &mut Vec::new());
            *self.p_c.entry(c.clone()).or_default() += p;
            self.slices
                .entry((c, self.idx[m.group]))
                .or_default()
                .entry(key)
                .or_default()
                .add(p, p * ey);
            return;
        }
        let i = self.order[depth];
        let mut probs = Vec::new();
        m.laws[i].probabilities(&self.v, &mut probs);
        let support = m.laws[i].support().unwrap().to_vec();
        for (k, (&s, &pk)) in support.iter().zip(&probs).enumerate() {
            self.v[i] = s;
            self.idx[i] = k as u16;
            self.visit(depth + 1, p * pk);
        }
    }
}
