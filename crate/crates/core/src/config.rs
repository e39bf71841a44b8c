//! Analysis configuration: binds table columns to causal roles and runs the
//! empirical positivity screen.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationTable, TableSchema};
use crate::error::{Error, Result};

/// Ordering of the post-exposure confounder relative to the intervened mediators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Confounders precede all mediators; mediators are intervened jointly.
    #[default]
    JointMediators,
    /// The first mediator precedes the post-exposure confounders, which
    /// precede the remaining mediators.
    InterposedConfounder,
}

/// How the regression estimator collapses a vector of confounder
/// coefficients into the scalar ratio it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum XCombination {
    /// Ratio of the two models' confounder contributions evaluated at the
    /// difference in confounder means between the compared groups.
    MeanDifference,
}

fn default_true() -> bool {
    true
}
fn default_min_cell() -> usize {
    10
}
fn default_draws() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub group: String,
    /// Ordered group levels; first-seen order when absent.
    #[serde(default)]
    pub group_levels: Option<Vec<String>>,
    /// Reference level label; the first level when absent.
    #[serde(default)]
    pub reference: Option<String>,
    pub outcome: String,
    pub mediators: Vec<String>,
    #[serde(default)]
    pub confounders_pre: Vec<String>,
    #[serde(default)]
    pub confounders_post: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Columns to read as categorical (the group column always is).
    #[serde(default)]
    pub categorical: Vec<String>,
    /// Declared level orderings for categorical columns.
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub scenario: Scenario,
    /// Mediators whose outcome effect varies by group when differential
    /// effects are requested. Empty means the first mediator.
    #[serde(default)]
    pub differential: Vec<String>,
    /// Extra two-way interactions in the outcome model.
    #[serde(default)]
    pub interactions: Vec<[String; 2]>,
    /// Add group × covariate terms to the confounder models.
    #[serde(default = "default_true")]
    pub confounder_interactions: bool,
    #[serde(default)]
    pub regression_x_rule: Option<XCombination>,
    /// Upper percentile (0–1) at which balancing weights are capped.
    #[serde(default)]
    pub weight_trim: Option<f64>,
    #[serde(default = "default_min_cell")]
    pub min_cell: usize,
    /// Monte Carlo draws per reference row for continuous confounders.
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl AnalysisConfig {
    /// Minimal configuration; everything else takes its default.
    pub fn new(group: &str, outcome: &str, mediators: &[&str]) -> Self {
        AnalysisConfig {
            group: group.to_string(),
            group_levels: None,
            reference: None,
            outcome: outcome.to_string(),
            mediators: mediators.iter().map(|s| s.to_string()).collect(),
            confounders_pre: Vec::new(),
            confounders_post: Vec::new(),
            covariates: Vec::new(),
            categorical: Vec::new(),
            levels: BTreeMap::new(),
            scenario: Scenario::JointMediators,
            differential: Vec::new(),
            interactions: Vec::new(),
            confounder_interactions: true,
            regression_x_rule: None,
            weight_trim: None,
            min_cell: default_min_cell(),
            draws: default_draws(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    /// X: pre-exposure then post-exposure confounders.
    pub fn confounders(&self) -> Vec<String> {
        self.confounders_pre
            .iter()
            .chain(&self.confounders_post)
            .cloned()
            .collect()
    }

    /// Every column the analysis reads.
    pub fn bound_columns(&self) -> Vec<String> {
        let mut cols = vec![self.group.clone(), self.outcome.clone()];
        cols.extend(self.mediators.iter().cloned());
        cols.extend(self.confounders());
        cols.extend(self.covariates.iter().cloned());
        cols
    }

    pub fn is_categorical(&self, name: &str) -> bool {
        name == self.group || self.categorical.iter().any(|c| c == name)
    }

    /// Ingestion schema for the bound columns.
    pub fn schema(&self) -> TableSchema {
        let mut schema = TableSchema::new();
        for col in self.bound_columns() {
            schema = if col == self.group {
                let levels = self
                    .group_levels
                    .clone()
                    .or_else(|| self.levels.get(&col).cloned());
                schema.categorical(&col, levels)
            } else if self.is_categorical(&col) {
                schema.categorical(&col, self.levels.get(&col).cloned())
            } else {
                schema.numeric(&col)
            };
        }
        schema
    }

    /// Rejects overlapping or malformed role assignments.
    pub fn check_roles(&self) -> Result<()> {
        if self.mediators.is_empty() {
            return Err(Error::config("at least one mediator is required"));
        }
        let roles: [(&str, Vec<&String>); 6] = [
            ("group", vec![&self.group]),
            ("outcome", vec![&self.outcome]),
            ("mediators", self.mediators.iter().collect()),
            ("confounders_pre", self.confounders_pre.iter().collect()),
            ("confounders_post", self.confounders_post.iter().collect()),
            ("covariates", self.covariates.iter().collect()),
        ];
        let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
        for (role, cols) in &roles {
            for c in cols {
                if let Some(prev) = owner.insert(c.as_str(), role) {
                    return Err(Error::config(format!(
                        "column `{c}` is assigned to both {prev} and {role}"
                    )));
                }
            }
        }
        if self.scenario == Scenario::InterposedConfounder && self.confounders_post.is_empty() {
            return Err(Error::config(
                "the interposed-confounder scenario requires confounders_post",
            ));
        }
        if self.is_categorical(&self.outcome) && self.outcome != self.group {
            return Err(Error::config("the outcome must be numeric"));
        }
        for m in &self.differential {
            if !self.mediators.contains(m) {
                return Err(Error::config(format!(
                    "differential term `{m}` is not a mediator"
                )));
            }
        }
        let known: HashSet<&str> = owner.keys().copied().collect();
        for [a, b] in &self.interactions {
            for v in [a, b] {
                if !known.contains(v.as_str()) || v == &self.outcome {
                    return Err(Error::config(format!(
                        "interaction term `{v}` is not a bound predictor"
                    )));
                }
            }
        }
        if let Some(p) = self.weight_trim {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::config("weight_trim must lie in (0, 1)"));
            }
        }
        if self.draws < 1 {
            return Err(Error::config("draws must be at least 1"));
        }
        Ok(())
    }
}

/// A failed positivity check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PositivityIssue {
    SmallGroup {
        level: String,
        count: usize,
        min_cell: usize,
    },
    EmptyCell {
        level: String,
        cell: Vec<(String, String)>,
    },
}

impl fmt::Display for PositivityIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PositivityIssue::SmallGroup {
                level,
                count,
                min_cell,
            } => write!(f, "group `{level}` has {count} rows (< {min_cell})"),
            PositivityIssue::EmptyCell { level, cell } => {
                let cell: Vec<String> = cell.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, "no rows for group `{level}` at ({})", cell.join(", "))
            }
        }
    }
}

/// Column indices for each role, resolved against a specific table.
#[derive(Debug, Clone)]
pub struct Binding {
    pub group: usize,
    pub levels: Vec<String>,
    pub reference: u32,
    pub outcome: usize,
    pub mediators: Vec<usize>,
    pub confounders_pre: Vec<usize>,
    pub confounders_post: Vec<usize>,
    pub covariates: Vec<usize>,
    pub group_counts: Vec<usize>,
    pub diagnostics: Vec<PositivityIssue>,
}

impl Binding {
    pub fn confounders(&self) -> Vec<usize> {
        self.confounders_pre
            .iter()
            .chain(&self.confounders_post)
            .copied()
            .collect()
    }

    /// Comparison levels in level order.
    pub fn comparison_levels(&self) -> Vec<u32> {
        (0..self.levels.len() as u32)
            .filter(|&l| l != self.reference)
            .collect()
    }

    /// Errors when the positivity screen raised anything.
    pub fn require_positivity(&self) -> Result<()> {
        if self.diagnostics.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.diagnostics.iter().map(|d| d.to_string()).collect();
            Err(Error::Positivity(msgs.join("; ")))
        }
    }
}

/// Resolves roles against the table and performs the positivity screen.
/// Empty group levels are always an error; small groups and empty
/// (group × categorical-covariate) cells are reported as diagnostics.
pub fn validate_config(config: &AnalysisConfig, table: &ObservationTable) -> Result<Binding> {
    config.check_roles()?;
    let resolve =
        |cols: &[String]| -> Result<Vec<usize>> { cols.iter().map(|c| table.require(c)).collect() };
    let group = table.require(&config.group)?;
    let factor = table.column_at(group).as_factor().ok_or_else(|| {
        Error::config(format!(
            "group column `{}` must be categorical",
            config.group
        ))
    })?;
    let outcome = table.require(&config.outcome)?;
    if table.column_at(outcome).is_categorical() {
        return Err(Error::config("the outcome must be numeric"));
    }
    let reference = match &config.reference {
        Some(label) => factor.level_index(label).ok_or_else(|| {
            Error::config(format!("reference level `{label}` is not a group level"))
        })?,
        None => 0,
    };
    if factor.levels.len() < 2 {
        return Err(Error::config("the group column needs at least two levels"));
    }

    let mut counts = vec![0usize; factor.levels.len()];
    for &k in &factor.codes {
        counts[k as usize] += 1;
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Positivity(format!(
            "group level `{}` has no rows",
            factor.levels[empty]
        )));
    }

    let mut diagnostics = Vec::new();
    for (level, &count) in factor.levels.iter().zip(&counts) {
        if count < config.min_cell {
            diagnostics.push(PositivityIssue::SmallGroup {
                level: level.clone(),
                count,
                min_cell: config.min_cell,
            });
        }
    }

    let covariates = resolve(&config.covariates)?;
    let cat_covs: Vec<usize> = covariates
        .iter()
        .copied()
        .filter(|&c| table.column_at(c).is_categorical())
        .collect();
    if !cat_covs.is_empty() {
        let cell_of = |row: usize| -> Vec<u32> {
            cat_covs
                .iter()
                .map(|&c| table.column_at(c).as_factor().unwrap().codes[row])
                .collect()
        };
        let mut cells: BTreeSet<Vec<u32>> = BTreeSet::new();
        let mut present: HashSet<(u32, Vec<u32>)> = HashSet::new();
        for row in 0..table.n_rows() {
            let cell = cell_of(row);
            present.insert((factor.codes[row], cell.clone()));
            cells.insert(cell);
        }
        for (l, level) in factor.levels.iter().enumerate() {
            for cell in &cells {
                if !present.contains(&(l as u32, cell.clone())) {
                    let described = cat_covs
                        .iter()
                        .zip(cell)
                        .map(|(&c, &k)| {
                            let col = table.column_at(c);
                            (
                                col.name.clone(),
                                col.as_factor().unwrap().levels[k as usize].clone(),
                            )
                        })
                        .collect();
                    diagnostics.push(PositivityIssue::EmptyCell {
                        level: level.clone(),
                        cell: described,
                    });
                }
            }
        }
    }

    Ok(Binding {
        group,
        levels: factor.levels.clone(),
        reference,
        outcome,
        mediators: resolve(&config.mediators)?,
        confounders_pre: resolve(&config.confounders_pre)?,
        confounders_post: resolve(&config.confounders_post)?,
        covariates,
        group_counts: counts,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn crossed_table(per_group: usize) -> ObservationTable {
        let mut r = Vec::new();
        let mut c = Vec::new();
        let mut y = Vec::new();
        for g in 0..4u32 {
            for i in 0..per_group {
                r.push(g);
                c.push((i % 2) as u32);
                y.push(i as f64);
            }
        }
        ObservationTable::from_columns(vec![
            Column::categorical("r", (0..4).map(|g| g.to_string()).collect(), r),
            Column::categorical("c", vec!["0".into(), "1".into()], c),
            Column::numeric("y", y.clone()),
            Column::numeric("d", y),
        ])
        .unwrap()
    }

    fn config() -> AnalysisConfig {
        let mut cfg = AnalysisConfig::new("r", "y", &["d"]);
        cfg.covariates = vec!["c".into()];
        cfg.categorical = vec!["c".into()];
        cfg
    }

    #[test]
    fn fully_crossed_design_is_valid() {
        let b = validate_config(&config(), &crossed_table(100)).unwrap();
        assert!(b.diagnostics.is_empty());
        assert_eq!(b.group_counts, vec![100; 4]);
        assert_eq!(b.comparison_levels(), vec![1, 2, 3]);
    }

    #[test]
    fn empty_group_level_is_a_positivity_error() {
        let t = crossed_table(20);
        let factor = t.column("r").unwrap().as_factor().unwrap().clone();
        let mut levels = factor.levels.clone();
        levels.push("4".into());
        let t = t
            .with_column(Column::categorical("r", levels, factor.codes))
            .unwrap();
        assert!(matches!(
            validate_config(&config(), &t),
            Err(Error::Positivity(_))
        ));
    }

    #[test]
    fn missing_cell_is_listed() {
        let t = crossed_table(20);
        // group 2 only at c=1
        let r = t.column("r").unwrap().as_factor().unwrap().codes.clone();
        let mut c = t.column("c").unwrap().as_factor().unwrap().codes.clone();
        for (ri, ci) in r.iter().zip(c.iter_mut()) {
            if *ri == 2 {
                *ci = 1;
            }
        }
        let t = t
            .with_column(Column::categorical("c", vec!["0".into(), "1".into()], c))
            .unwrap();
        let b = validate_config(&config(), &t).unwrap();
        assert_eq!(
            b.diagnostics,
            vec![PositivityIssue::EmptyCell {
                level: "2".into(),
                cell: vec![("c".into(), "0".into())]
            }]
        );
        assert!(matches!(b.require_positivity(), Err(Error::Positivity(_))));
    }

    #[test]
    fn overlapping_roles_are_rejected() {
        let mut cfg = config();
        cfg.confounders_pre = vec!["c".into()];
        assert!(matches!(cfg.check_roles(), Err(Error::Config(_))));
        let mut cfg = config();
        cfg.mediators.push("y".into());
        assert!(matches!(cfg.check_roles(), Err(Error::Config(_))));
    }

    #[test]
    fn interposed_requires_post_confounders() {
        let mut cfg = config();
        cfg.scenario = Scenario::InterposedConfounder;
        assert!(cfg.check_roles().is_err());
        cfg.confounders_post = vec!["x2".into()];
        assert!(cfg.check_roles().is_ok());
    }

    #[test]
    fn small_group_is_a_diagnostic() {
        let b = validate_config(&config(), &crossed_table(6)).unwrap();
        assert_eq!(b.diagnostics.len(), 4);
    }

    #[test]
    fn parses_toml() {
        let cfg = AnalysisConfig::from_toml_str(
            r#"
            group = "r"
            reference = "0"
            outcome = "y"
            mediators = ["d", "m"]
            confounders_pre = ["x1"]
            covariates = ["c"]
            categorical = ["c", "x1"]
            scenario = "interposed_confounder"
            confounders_post = ["x2"]
            interactions = [["x1", "d"]]
            weight_trim = 0.99
            "#,
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::InterposedConfounder);
        assert_eq!(cfg.min_cell, 10);
        assert_eq!(cfg.draws, 200);
        assert!(cfg.confounder_interactions);
        assert!(AnalysisConfig::from_toml_str("group = 1").is_err());
    }
}
