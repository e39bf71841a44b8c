//! Nonparametric percentile bootstrap over whole-pipeline replicates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::ObservationTable;
use crate::error::{Error, Result};
use crate::estimators::DecompositionEstimate;
use crate::stats::{quantile_sorted, sd};

/// Replicates may fail (e.g. separation in a resample); more than this
/// fraction of failures fails the run.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    /// Resample within group levels, preserving group sizes.
    pub stratified: bool,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 1000,
            seed: 0,
            level: 0.95,
            stratified: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
    pub failures: usize,
    /// Up to the first five failure messages.
    pub failure_messages: Vec<String>,
    /// One vector per successful replicate, in replicate order.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

impl BootstrapResult {
    pub fn successes(&self) -> usize {
        self.values.len()
    }

    fn column(&self, q: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.iter().map(|r| r[q]).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Percentile interval of quantity `q` at `level`.
    pub fn interval_at(&self, q: usize, level: f64) -> Interval {
        let v = self.column(q);
        let a = (1.0 - level) / 2.0;
        Interval {
            se: sd(&v),
            lo: quantile_sorted(&v, a),
            hi: quantile_sorted(&v, 1.0 - a),
        }
    }

    pub fn interval(&self, q: usize) -> Interval {
        self.interval_at(q, self.level)
    }
}

/// Row indices of a bootstrap resample. Stratified resampling draws each
/// stratum's rows from that stratum only.
pub fn resample_indices(strata: Option<&[u32]>, n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    match strata {
        None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        Some(codes) => {
            let k = codes.iter().map(|&c| c as usize + 1).max().unwrap_or(0);
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
            for (i, &c) in codes.iter().enumerate() {
                groups[c as usize].push(i);
            }
            let mut out = Vec::with_capacity(n);
            for g in &groups {
                for _ in 0..g.len() {
                    out.push(g[rng.random_range(0..g.len())]);
                }
            }
            out
        }
    }
}

/// Runs `statistic` on `replicates` resamples of `table`. The statistic
/// receives the resampled table and the replicate index; replicate `b`
/// always sees the same resample regardless of thread scheduling.
pub fn bootstrap<F>(
    table: &ObservationTable,
    strata: Option<&[u32]>,
    opts: &BootstrapOptions,
    statistic: F,
) -> Result<BootstrapResult>
where
    F: Fn(&ObservationTable, u64) -> Result<Vec<f64>> + Sync,
{
    if opts.replicates < 2 {
        return Err(Error::Inference(
            "at least two replicates are required".into(),
        ));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::Inference("level must lie in (0, 1)".into()));
    }
    let strata = if opts.stratified { strata } else { None };
    let n = table.n_rows();
    let outcomes: Vec<Result<Vec<f64>>> = (0..opts.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(b + 1);
            let rows = resample_indices(strata, n, &mut rng);
            statistic(&table.take(&rows), b)
        })
        .collect();

    let mut values = Vec::with_capacity(opts.replicates);
    let mut failures = 0;
    let mut failure_messages = Vec::new();
    for o in outcomes {
        match o {
            Ok(v) if v.iter().all(|x| x.is_finite()) => values.push(v),
            Ok(_) => {
                failures += 1;
                if failure_messages.len() < 5 {
                    failure_messages.push("non-finite statistic".to_string());
                }
            }
            Err(e) => {
                failures += 1;
                if failure_messages.len() < 5 {
                    failure_messages.push(e.to_string());
                }
            }
        }
    }
    if failures as f64 > MAX_FAILURE_FRACTION * opts.replicates as f64 {
        return Err(Error::Inference(format!(
            "{failures} of {} bootstrap replicates failed; first: {}",
            opts.replicates,
            failure_messages.first().map_or("", |s| s.as_str())
        )));
    }
    Ok(BootstrapResult {
        replicates: opts.replicates,
        seed: opts.seed,
        level: opts.level,
        failures,
        failure_messages,
        values,
    })
}

/// Bootstrap intervals for one comparison group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupIntervals {
    pub level: String,
    pub tau: Interval,
    pub delta: Interval,
    pub zeta: Interval,
}

/// Flattens a decomposition into `[τ, δ, ζ]` per group.
pub fn flatten(est: &DecompositionEstimate) -> Vec<f64> {
    est.groups
        .iter()
        .flat_map(|g| [g.tau, g.delta, g.zeta])
        .collect()
}

/// Bootstraps a whole decomposition. `estimator` is re-run on every
/// resample with a replicate-specific seed derived from `opts.seed`.
pub fn bootstrap_decomposition<F>(
    table: &ObservationTable,
    group_col: usize,
    point: &DecompositionEstimate,
    opts: &BootstrapOptions,
    estimator: F,
) -> Result<(BootstrapResult, Vec<GroupIntervals>)>
where
    F: Fn(&ObservationTable, u64) -> Result<DecompositionEstimate> + Sync,
{
    let codes = table
        .column_at(group_col)
        .as_factor()
        .ok_or_else(|| Error::config("group column must be categorical"))?
        .codes
        .clone();
    let expected: Vec<&str> = point.groups.iter().map(|g| g.level.as_str()).collect();
    let result = bootstrap(table, Some(&codes), opts, |t, b| {
        let est = estimator(t, opts.seed.wrapping_add(b + 1))?;
        let levels: Vec<&str> = est.groups.iter().map(|g| g.level.as_str()).collect();
        if levels != expected {
            return Err(Error::Inference("resample lost a group level".into()));
        }
        Ok(flatten(&est))
    })?;
    let intervals = point
        .groups
        .iter()
        .enumerate()
        .map(|(k, g)| GroupIntervals {
            level: g.level.clone(),
            tau: result.interval(3 * k),
            delta: result.interval(3 * k + 1),
            zeta: result.interval(3 * k + 2),
        })
        .collect();
    Ok((result, intervals))
}
