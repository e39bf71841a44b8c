use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{AnalysisConfig, Binding};
use crate::data::ObservationTable;
use crate::design::{DesignSpec, Overlay, ValueSource};
use crate::error::{Error, Result};
use crate::glm::{fit_codes, fit_linear_model, LinearModel, MultinomialLogit};

/// Conditional law of the confounders X given group and covariates (and,
/// for the interposed ordering, earlier confounders and the first
/// mediator). Fully categorical blocks are integrated exactly over their
/// observed joint cells; blocks with a continuous column are integrated by
/// seeded Monte Carlo draws.
#[derive(Debug, Clone)]
pub struct ConfounderModel {
    group_col: usize,
    stages: Vec<Stage>,
    draws: usize,
}

#[derive(Debug, Clone)]
enum Stage {
    Joint(CellModel),
    Sequential(Vec<Step>),
}

#[derive(Debug, Clone)]
enum Step {
    Gaussian {
        col: usize,
        model: LinearModel,
        sd: f64,
    },
    Cells(CellModel),
}

/// Multinomial model over the observed joint cells of some categorical
/// columns.
#[derive(Debug, Clone)]
struct CellModel {
    cols: Vec<usize>,
    cells: Vec<Vec<f64>>,
    /// `None` when only one cell is observed.
    model: Option<MultinomialLogit>,
}

impl CellModel {
    fn fit(table: &ObservationTable, cols: &[usize], spec: &DesignSpec) -> Result<CellModel> {
        let n = table.n_rows();
        let tuples: Vec<Vec<u32>> = (0..n)
            .map(|row| {
                cols.iter()
                    .map(|&c| table.column_at(c).value_f64(row) as u32)
                    .collect()
            })
            .collect();
        let mut index: BTreeMap<Vec<u32>, u32> = tuples.iter().map(|t| (t.clone(), 0)).collect();
        for (k, v) in index.values_mut().enumerate() {
            *v = k as u32;
        }
        let cells: Vec<Vec<f64>> = index
            .keys()
            .map(|t| t.iter().map(|&c| c as f64).collect())
            .collect();
        let model = if cells.len() > 1 {
            let codes: Vec<u32> = tuples.iter().map(|t| index[t]).collect();
            Some(fit_codes(
                table,
                &codes,
                cells.len(),
                0,
                spec.compile(table)?,
            )?)
        } else {
            None
        };
        Ok(CellModel {
            cols: cols.to_vec(),
            cells,
            model,
        })
    }

    fn probabilities<S: ValueSource + ?Sized>(&self, src: &S, out: &mut Vec<f64>) -> Result<()> {
        out.clear();
        out.resize(self.cells.len(), 1.0);
        if let Some(m) = &self.model {
            let mut buf = vec![0.0; m.design().n_cols()];
            m.predict_with(src, &mut buf, out)?;
        }
        Ok(())
    }

    fn push_cell(&self, k: usize, fixed: &mut Vec<(usize, f64)>) {
        for (&c, &v) in self.cols.iter().zip(&self.cells[k]) {
            fixed.push((c, v));
        }
    }
}

/// Column roles a confounder model is fitted for.
enum Ordering {
    Joint,
    Interposed,
}

impl ConfounderModel {
    /// Joint ordering: all of X given group and covariates.
    pub fn fit_joint(
        table: &ObservationTable,
        binding: &Binding,
        config: &AnalysisConfig,
    ) -> Result<Self> {
        Self::fit(table, binding, config, Ordering::Joint)
    }

    /// Interposed ordering: X₁ given group and covariates, then X₂ given
    /// group, X₁, the first mediator and covariates.
    pub fn fit_interposed(
        table: &ObservationTable,
        binding: &Binding,
        config: &AnalysisConfig,
    ) -> Result<Self> {
        Self::fit(table, binding, config, Ordering::Interposed)
    }

    fn fit(
        table: &ObservationTable,
        binding: &Binding,
        config: &AnalysisConfig,
        ordering: Ordering,
    ) -> Result<Self> {
        if config.draws < 1 {
            return Err(Error::config("draws must be at least 1"));
        }
        let name = |c: usize| table.column_at(c).name.clone();
        let group = name(binding.group);
        let covs: Vec<String> = binding.covariates.iter().map(|&c| name(c)).collect();
        let base_spec = |extra: &[String]| {
            let mut spec = DesignSpec::with_intercept()
                .main(&group)
                .reference(&group, binding.reference)
                .mains(extra)
                .mains(&covs);
            if config.confounder_interactions {
                for c in &covs {
                    spec = spec.interaction(&group, c);
                }
            }
            spec
        };

        let mut blocks: Vec<(Vec<usize>, Vec<String>)> = Vec::new();
        match ordering {
            Ordering::Joint => {
                let x = binding.confounders();
                if !x.is_empty() {
                    blocks.push((x, Vec::new()));
                }
            }
            Ordering::Interposed => {
                let (pre, post) = (&binding.confounders_pre, &binding.confounders_post);
                if post.is_empty() && !pre.is_empty() {
                    return Err(Error::config(
                        "the interposed estimator needs post-exposure confounders",
                    ));
                }
                if !pre.is_empty() {
                    blocks.push((pre.clone(), Vec::new()));
                }
                if !post.is_empty() {
                    let mut extra: Vec<String> = pre.iter().map(|&c| name(c)).collect();
                    extra.push(name(binding.mediators[0]));
                    blocks.push((post.clone(), extra));
                }
            }
        }

        let mut stages = Vec::with_capacity(blocks.len());
        for (cols, extra) in blocks {
            if cols.iter().all(|&c| table.column_at(c).is_categorical()) {
                stages.push(Stage::Joint(CellModel::fit(
                    table,
                    &cols,
                    &base_spec(&extra),
                )?));
                continue;
            }
            let mut steps = Vec::with_capacity(cols.len());
            let mut preceding = extra.clone();
            for &c in &cols {
                let spec = base_spec(&preceding);
                if table.column_at(c).is_categorical() {
                    steps.push(Step::Cells(CellModel::fit(table, &[c], &spec)?));
                } else {
                    let model = fit_linear_model(table, &name(c), &spec)?;
                    let sd = model.residual_sd();
                    steps.push(Step::Gaussian { col: c, model, sd });
                }
                preceding.push(name(c));
            }
            stages.push(Stage::Sequential(steps));
        }
        Ok(ConfounderModel {
            group_col: binding.group,
            stages,
            draws: config.draws,
        })
    }

    /// True when every block is integrated by exact summation.
    pub fn is_exact(&self) -> bool {
        self.stages.iter().all(|s| matches!(s, Stage::Joint(_)))
    }

    pub fn draws(&self) -> usize {
        self.draws
    }

    /// Averages `f` over X drawn from its fitted law at group `r`, with the
    /// remaining values taken from `base`. `f` receives the column overrides
    /// (group and confounders) to apply to `base`.
    pub fn integrate<S, F>(&self, base: &S, r: u32, rng: &mut ChaCha8Rng, mut f: F) -> Result<f64>
    where
        S: ValueSource + ?Sized,
        F: FnMut(&[(usize, f64)]) -> Result<f64>,
    {
        let mut fixed = vec![(self.group_col, r as f64)];
        self.recurse(base, 0, false, &mut fixed, rng, &mut f)
    }

    fn recurse<S: ValueSource + ?Sized>(
        &self,
        base: &S,
        stage: usize,
        sampling: bool,
        fixed: &mut Vec<(usize, f64)>,
        rng: &mut ChaCha8Rng,
        f: &mut dyn FnMut(&[(usize, f64)]) -> Result<f64>,
    ) -> Result<f64> {
        let Some(s) = self.stages.get(stage) else {
            return f(fixed);
        };
        let mark = fixed.len();
        let mut probs = Vec::new();
        match s {
            Stage::Joint(cells) => {
                cells.probabilities(
                    &Overlay {
                        base,
                        overrides: fixed,
                    },
                    &mut probs,
                )?;
                if sampling {
                    let k = sample_index(&probs, rng);
                    cells.push_cell(k, fixed);
                    let v = self.recurse(base, stage + 1, true, fixed, rng, f);
                    fixed.truncate(mark);
                    return v;
                }
                let mut total = 0.0;
                for (k, &p) in probs.iter().enumerate() {
                    cells.push_cell(k, fixed);
                    total += p * self.recurse(base, stage + 1, false, fixed, rng, f)?;
                    fixed.truncate(mark);
                }
                Ok(total)
            }
            Stage::Sequential(steps) => {
                let reps = if sampling { 1 } else { self.draws };
                let mut total = 0.0;
                for _ in 0..reps {
                    for step in steps {
                        let src = Overlay {
                            base,
                            overrides: fixed,
                        };
                        match step {
                            Step::Gaussian { col, model, sd } => {
                                let z: f64 = rng.sample(StandardNormal);
                                let v = model.predict_row(&src)? + sd * z;
                                fixed.push((*col, v));
                            }
                            Step::Cells(cells) => {
                                cells.probabilities(&src, &mut probs)?;
                                let k = sample_index(&probs, rng);
                                cells.push_cell(k, fixed);
                            }
                        }
                    }
                    total += self.recurse(base, stage + 1, true, fixed, rng, f)?;
                    fixed.truncate(mark);
                }
                Ok(total / reps as f64)
            }
        }
    }
}

fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::validate_config;
    use crate::data::Column;
    use crate::design::RowRef;
    use rand::SeedableRng;

    fn table() -> ObservationTable {
        let n = 400;
        let r: Vec<u32> = (0..n).map(|i| (i % 2) as u32).collect();
        let c: Vec<u32> = (0..n).map(|i| ((i / 2) % 2) as u32).collect();
        let x1: Vec<u32> = (0..n).map(|i| ((i / 4) % 2) as u32).collect();
        let x2: Vec<u32> = (0..n).map(|i| ((i * 7 / 3) % 3) as u32).collect();
        let z: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..n).map(|i| i as f64 * 0.01).collect();
        let lv = |k: usize| (0..k).map(|i| i.to_string()).collect::<Vec<_>>();
        ObservationTable::from_columns(vec![
            Column::categorical("r", lv(2), r),
            Column::categorical("c", lv(2), c),
            Column::categorical("x1", lv(2), x1),
            Column::categorical("x2", lv(3), x2),
            Column::numeric("z", z),
            Column::numeric("y", y),
        ])
        .unwrap()
    }

    #[test]
    fn categorical_probabilities_sum_to_one() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["z"]);
        cfg.confounders_pre = vec!["x1".into(), "x2".into()];
        cfg.covariates = vec!["c".into()];
        let b = validate_config(&cfg, &t).unwrap();
        let cm = ConfounderModel::fit_joint(&t, &b, &cfg).unwrap();
        assert!(cm.is_exact());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for row in [0, 1, 2, 3] {
            for r in 0..2 {
                let total = cm
                    .integrate(&RowRef { table: &t, row }, r, &mut rng, |_| Ok(1.0))
                    .unwrap();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn interposed_without_post_confounders_is_rejected() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["z"]);
        cfg.confounders_pre = vec!["x1".into()];
        let b = validate_config(&cfg, &t).unwrap();
        assert!(matches!(
            ConfounderModel::fit_interposed(&t, &b, &cfg),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn continuous_block_averages_draws() {
        let t = table();
        let mut cfg = AnalysisConfig::new("r", "y", &["x1"]);
        cfg.confounders_pre = vec!["z".into()];
        cfg.draws = 50;
        let b = validate_config(&cfg, &t).unwrap();
        let cm = ConfounderModel::fit_joint(&t, &b, &cfg).unwrap();
        assert!(!cm.is_exact());
        let mut calls = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        cm.integrate(&RowRef { table: &t, row: 0 }, 1, &mut rng, |_| {
            calls += 1;
            Ok(0.0)
        })
        .unwrap();
        assert_eq!(calls, 50);
    }
}
