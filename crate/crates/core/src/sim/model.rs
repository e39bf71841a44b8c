//! Declarative structural models: variables with parent-dependent laws,
//! bound to causal roles.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    pub group: String,
    pub outcome: String,
    pub mediators: Vec<String>,
    #[serde(default)]
    pub confounders_pre: Vec<String>,
    #[serde(default)]
    pub confounders_post: Vec<String>,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Unobserved mediator–outcome confounder.
    #[serde(default)]
    pub latent: Option<String>,
}

/// `coef · a · b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub a: String,
    pub b: String,
    pub coef: f64,
}

/// intercept + Σ coef·value + Σ effect[level index] + Σ interactions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPredictor {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
    /// Additive effect per support index of a discrete parent.
    #[serde(default)]
    pub level_effects: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
}

impl LinearPredictor {
    pub fn constant(intercept: f64) -> Self {
        LinearPredictor {
            intercept,
            ..Default::default()
        }
    }

    pub fn coef(mut self, var: &str, value: f64) -> Self {
        self.coefficients.insert(var.to_string(), value);
        self
    }

    pub fn levels(mut self, var: &str, effects: Vec<f64>) -> Self {
        self.level_effects.insert(var.to_string(), effects);
        self
    }

    pub fn interact(mut self, a: &str, b: &str, coef: f64) -> Self {
        self.interactions.push(Interaction {
            a: a.to_string(),
            b: b.to_string(),
            coef,
        });
        self
    }

    fn parents(&self) -> Vec<String> {
        let mut p: Vec<String> = self.coefficients.keys().cloned().collect();
        p.extend(self.level_effects.keys().cloned());
        for i in &self.interactions {
            p.push(i.a.clone());
            p.push(i.b.clone());
        }
        p
    }
}

/// Conditional law of a variable given its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum Law {
    /// Conditional probability table; one row per configuration of the
    /// (discrete) parents, the last parent varying fastest.
    Table {
        support: Vec<f64>,
        #[serde(default)]
        parents: Vec<String>,
        probs: Vec<Vec<f64>>,
    },
    /// Multinomial logit with the first support value as base; one
    /// predictor per remaining value.
    Logit {
        support: Vec<f64>,
        predictors: Vec<LinearPredictor>,
    },
    Gaussian {
        mean: LinearPredictor,
        sd: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(flatten)]
    pub law: Law,
}

/// A generative model over named variables with causal roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuralModel {
    #[serde(default)]
    pub scenario: Scenario,
    pub roles: Roles,
    pub variables: Vec<Variable>,
}

impl StructuralModel {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let m: StructuralModel = toml::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
        m.compile()?;
        Ok(m)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Model(format!("cannot read {}: {e}", path.as_ref().display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn variable_mut(&mut self, name: &str) -> Option<&mut Variable> {
        self.variables.iter_mut().find(|v| v.name == name)
    }

    /// Validates the model and resolves names to indices.
    pub(crate) fn compile(&self) -> Result<Compiled> {
        Compiled::new(self)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CPred {
    intercept: f64,
    terms: Vec<(usize, f64)>,
    levels: Vec<(usize, Vec<f64>, Vec<f64>)>,
    inter: Vec<(usize, usize, f64)>,
}

impl CPred {
    #[inline]
    fn eval(&self, v: &[f64]) -> f64 {
        let mut s = self.intercept;
        for &(i, c) in &self.terms {
            s += c * v[i];
        }
        for (i, support, effects) in &self.levels {
            let k = support_index(support, v[*i]);
            s += effects[k];
        }
        for &(a, b, c) in &self.inter {
            s += c * v[a] * v[b];
        }
        s
    }
}

#[inline]
fn support_index(support: &[f64], x: f64) -> usize {
    support.iter().position(|&s| s == x).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub(crate) enum CLaw {
    Table {
        support: Vec<f64>,
        parents: Vec<(usize, Vec<f64>)>,
        probs: Vec<Vec<f64>>,
    },
    Logit {
        support: Vec<f64>,
        predictors: Vec<CPred>,
    },
    Gaussian {
        mean: CPred,
        sd: f64,
    },
}

impl CLaw {
    pub fn support(&self) -> Option<&[f64]> {
        match self {
            CLaw::Table { support, .. } | CLaw::Logit { support, .. } => Some(support),
            CLaw::Gaussian { .. } => None,
        }
    }

    /// Probabilities over the support given parent values.
    pub fn probabilities(&self, v: &[f64], out: &mut Vec<f64>) {
        out.clear();
        match self {
            CLaw::Table { parents, probs, .. } => {
                let mut row = 0;
                for (i, support) in parents {
                    row = row * support.len() + support_index(support, v[*i]);
                }
                out.extend_from_slice(&probs[row]);
            }
            CLaw::Logit { predictors, .. } => {
                out.push(0.0);
                out.extend(predictors.iter().map(|p| p.eval(v)));
                let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for e in out.iter_mut() {
                    *e = (*e - max).exp();
                    total += *e;
                }
                for e in out.iter_mut() {
                    *e /= total;
                }
            }
            CLaw::Gaussian { .. } => unreachable!("continuous law has no probability vector"),
        }
    }

    pub fn mean(&self, v: &[f64], scratch: &mut Vec<f64>) -> f64 {
        match self {
            CLaw::Gaussian { mean, .. } => mean.eval(v),
            _ => {
                self.probabilities(v, scratch);
                self.support()
                    .unwrap()
                    .iter()
                    .zip(scratch.iter())
                    .map(|(s, p)| s * p)
                    .sum()
            }
        }
    }

    pub fn draw(&self, v: &[f64], rng: &mut ChaCha8Rng, scratch: &mut Vec<f64>) -> f64 {
        match self {
            CLaw::Gaussian { mean, sd } => {
                let z: f64 = rng.sample(StandardNormal);
                mean.eval(v) + sd * z
            }
            _ => {
                self.probabilities(v, scratch);
                let u: f64 = rng.random();
                let support = self.support().unwrap();
                let mut acc = 0.0;
                for (k, &p) in scratch.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return support[k];
                    }
                }
                support[support.len() - 1]
            }
        }
    }
}

/// Index-resolved model.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub names: Vec<String>,
    pub laws: Vec<CLaw>,
    /// Topological order.
    pub order: Vec<usize>,
    pub scenario: Scenario,
    pub group: usize,
    pub n_groups: usize,
    pub outcome: usize,
    pub mediators: Vec<usize>,
    pub x_pre: Vec<usize>,
    pub x_post: Vec<usize>,
    pub covariates: Vec<usize>,
    pub latent: Option<usize>,
}

impl Compiled {
    fn new(model: &StructuralModel) -> Result<Self> {
        let err = |m: String| Error::Model(m);
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, v) in model.variables.iter().enumerate() {
            if index.insert(v.name.as_str(), i).is_some() {
                return Err(err(format!("variable `{}` is declared twice", v.name)));
            }
        }
        let find = |name: &str| -> Result<usize> {
            index
                .get(name)
                .copied()
                .ok_or_else(|| Error::Model(format!("unknown variable `{name}`")))
        };
        let n = model.variables.len();

        let supports: Vec<Option<Vec<f64>>> = model
            .variables
            .iter()
            .map(|v| match &v.law {
                Law::Table { support, .. } | Law::Logit { support, .. } => Some(support.clone()),
                Law::Gaussian { .. } => None,
            })
            .collect();
        let discrete_parent = |name: &str| -> Result<(usize, Vec<f64>)> {
            let i = find(name)?;
            supports[i]
                .clone()
                .map(|s| (i, s))
                .ok_or_else(|| Error::Model(format!("`{name}` must be discrete to index levels")))
        };
        let compile_pred = |p: &LinearPredictor| -> Result<CPred> {
            let terms = p
                .coefficients
                .iter()
                .map(|(k, &c)| Ok((find(k)?, c)))
                .collect::<Result<Vec<_>>>()?;
            let mut levels = Vec::new();
            for (k, effects) in &p.level_effects {
                let (i, s) = discrete_parent(k)?;
                if effects.len() != s.len() {
                    return Err(Error::Model(format!(
                        "level effects of `{k}` need {} entries",
                        s.len()
                    )));
                }
                levels.push((i, s, effects.clone()));
            }
            let inter = p
                .interactions
                .iter()
                .map(|t| Ok((find(&t.a)?, find(&t.b)?, t.coef)))
                .collect::<Result<Vec<_>>>()?;
            Ok(CPred {
                intercept: p.intercept,
                terms,
                levels,
                inter,
            })
        };

        let mut laws = Vec::with_capacity(n);
        let mut parents = Vec::with_capacity(n);
        for v in &model.variables {
            let (law, pnames) = match &v.law {
                Law::Table {
                    support,
                    parents: ps,
                    probs,
                } => {
                    check_support(&v.name, support)?;
                    let ps = ps
                        .iter()
                        .map(|p| discrete_parent(p))
                        .collect::<Result<Vec<_>>>()?;
                    let rows: usize = ps.iter().map(|(_, s)| s.len()).product();
                    if probs.len() != rows {
                        return Err(err(format!(
                            "`{}` needs {rows} probability rows, found {}",
                            v.name,
                            probs.len()
                        )));
                    }
                    for row in probs {
                        let total: f64 = row.iter().sum();
                        if row.len() != support.len()
                            || row.iter().any(|&p| !(p >= 0.0))
                            || (total - 1.0).abs() > 1e-9
                        {
                            return Err(err(format!(
                                "`{}` has a probability row that is not a distribution over its support",
                                v.name
                            )));
                        }
                    }
                    let names: Vec<String> = ps
                        .iter()
                        .map(|(i, _)| model.variables[*i].name.clone())
                        .collect();
                    (
                        CLaw::Table {
                            support: support.clone(),
                            parents: ps,
                            probs: probs.clone(),
                        },
                        names,
                    )
                }
                Law::Logit {
                    support,
                    predictors,
                } => {
                    check_support(&v.name, support)?;
                    if predictors.len() + 1 != support.len() {
                        return Err(err(format!(
                            "`{}` needs {} predictors",
                            v.name,
                            support.len() - 1
                        )));
                    }
                    let names = predictors.iter().flat_map(|p| p.parents()).collect();
                    (
                        CLaw::Logit {
                            support: support.clone(),
                            predictors: predictors
                                .iter()
                                .map(&compile_pred)
                                .collect::<Result<_>>()?,
                        },
                        names,
                    )
                }
                Law::Gaussian { mean, sd } => {
                    if !(sd.is_finite() && *sd >= 0.0) {
                        return Err(err(format!("`{}` has an invalid sd {sd}", v.name)));
                    }
                    (
                        CLaw::Gaussian {
                            mean: compile_pred(mean)?,
                            sd: *sd,
                        },
                        mean.parents(),
                    )
                }
            };
            let mut ps = pnames.iter().map(|p| find(p)).collect::<Result<Vec<_>>>()?;
            ps.sort_unstable();
            ps.dedup();
            laws.push(law);
            parents.push(ps);
        }

        let order = topological_order(&parents)
            .ok_or_else(|| err("the model's dependencies contain a cycle".into()))?;

        let roles = &model.roles;
        let group = find(&roles.group)?;
        let outcome = find(&roles.outcome)?;
        let list = |names: &[String]| names.iter().map(|s| find(s)).collect::<Result<Vec<_>>>();
        let mediators = list(&roles.mediators)?;
        let x_pre = list(&roles.confounders_pre)?;
        let x_post = list(&roles.confounders_post)?;
        let covariates = list(&roles.covariates)?;
        let latent = roles.latent.as_deref().map(find).transpose()?;

        let mut role_of = vec![None; n];
        let mut assign = |i: usize, role: &'static str| -> Result<()> {
            if let Some(prev) = role_of[i].replace(role) {
                return Err(Error::Model(format!(
                    "`{}` is both {prev} and {role}",
                    model.variables[i].name
                )));
            }
            Ok(())
        };
        assign(group, "group")?;
        assign(outcome, "outcome")?;
        for &i in &mediators {
            assign(i, "mediator")?;
        }
        for &i in x_pre.iter().chain(&x_post) {
            assign(i, "confounder")?;
        }
        for &i in &covariates {
            assign(i, "covariate")?;
        }
        if let Some(u) = latent {
            assign(u, "latent")?;
        }
        if let Some(i) = role_of.iter().position(|r| r.is_none()) {
            return Err(err(format!(
                "variable `{}` has no role",
                model.variables[i].name
            )));
        }
        if mediators.is_empty() {
            return Err(err("at least one mediator is required".into()));
        }

        let group_support = supports[group]
            .clone()
            .ok_or_else(|| err("the group variable must be discrete".into()))?;
        if group_support.len() < 2
            || group_support
                .iter()
                .enumerate()
                .any(|(k, &s)| s != k as f64)
        {
            return Err(err(
                "the group support must be 0, 1, …, K−1 with K ≥ 2".into()
            ));
        }

        let is_cov = |i: usize| covariates.contains(&i);
        for &i in covariates.iter().chain([group].iter()).chain(latent.iter()) {
            if let Some(&p) = parents[i].iter().find(|&&p| !is_cov(p)) {
                return Err(err(format!(
                    "`{}` may depend on covariates only, not `{}`",
                    model.variables[i].name, model.variables[p].name
                )));
            }
        }
        if parents.iter().any(|ps| ps.contains(&outcome)) {
            return Err(err("nothing may depend on the outcome".into()));
        }

        let ancestors = ancestor_sets(&parents, &order);
        let has_ancestor = |i: usize, set: &[usize]| set.iter().any(|&a| ancestors[i][a]);
        match model.scenario {
            Scenario::JointMediators => {
                for &x in x_pre.iter().chain(&x_post) {
                    if has_ancestor(x, &mediators) {
                        return Err(err(format!(
                            "confounder `{}` depends on a mediator; use the interposed scenario",
                            model.variables[x].name
                        )));
                    }
                }
            }
            Scenario::InterposedConfounder => {
                if x_post.is_empty() {
                    return Err(err(
                        "the interposed scenario needs post-exposure confounders".into(),
                    ));
                }
                for &x in &x_pre {
                    if has_ancestor(x, &mediators) {
                        return Err(err(format!(
                            "pre-exposure confounder `{}` depends on a mediator",
                            model.variables[x].name
                        )));
                    }
                }
                for &x in &x_post {
                    if has_ancestor(x, &mediators[1..]) {
                        return Err(err(format!(
                            "post-exposure confounder `{}` may depend only on the first mediator",
                            model.variables[x].name
                        )));
                    }
                }
                if has_ancestor(mediators[0], &x_post) {
                    return Err(err(
                        "the first mediator must precede the post-exposure confounders".into(),
                    ));
                }
            }
        }
        if let Some(u) = latent {
            if let Some(&x) = x_post.iter().find(|&&x| ancestors[u][x]) {
                return Err(err(format!(
                    "the latent confounder must precede `{}`",
                    model.variables[x].name
                )));
            }
        }

        Ok(Compiled {
            names: model.variables.iter().map(|v| v.name.clone()).collect(),
            laws,
            order,
            scenario: model.scenario,
            group,
            n_groups: group_support.len(),
            outcome,
            mediators,
            x_pre,
            x_post,
            covariates,
            latent,
        })
    }
}

fn check_support(name: &str, support: &[f64]) -> Result<()> {
    let mut s = support.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    if support.is_empty() || s.len() != support.len() || support.iter().any(|x| !x.is_finite()) {
        return Err(Error::Model(format!(
            "`{name}` needs a nonempty support of distinct finite values"
        )));
    }
    Ok(())
}

fn topological_order(parents: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(|p| p.len()).collect();
    let mut children = vec![Vec::new(); n];
    for (i, ps) in parents.iter().enumerate() {
        for &p in ps {
            if p == i {
                return None;
            }
            children[p].push(i);
        }
    }
    // declaration order among ready nodes keeps draws stable
    let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(pos) = ready
        .iter()
        .enumerate()
        .min_by_key(|(_, &v)| v)
        .map(|(k, _)| k)
    {
        let i = ready.swap_remove(pos);
        order.push(i);
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(c);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn ancestor_sets(parents: &[Vec<usize>], order: &[usize]) -> Vec<Vec<bool>> {
    let n = parents.len();
    let mut anc = vec![vec![false; n]; n];
    for &i in order {
        for &p in &parents[i] {
            anc[i][p] = true;
            for a in 0..n {
                if anc[p][a] {
                    anc[i][a] = true;
                }
            }
        }
    }
    anc
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
[roles]
group = "r"
outcome = "y"
mediators = ["d"]
covariates = ["c"]

[[variables]]
name = "c"
law = "table"
support = [0, 1]
probs = [[0.5, 0.5]]

[[variables]]
name = "r"
law = "table"
support = [0, 1]
parents = ["c"]
probs = [[0.7, 0.3], [0.4, 0.6]]

[[variables]]
name = "d"
law = "logit"
support = [0, 1]
predictors = [{ intercept = -0.5, coefficients = { c = 0.4 }, level_effects = { r = [0.0, 1.0] } }]

[[variables]]
name = "y"
law = "gaussian"
sd = 1.0
mean = { intercept = 0.0, coefficients = { d = 1.0, c = 0.5 } }
"#;

    #[test]
    fn parses_and_orders() {
        let m = StructuralModel::from_toml_str(SMALL).unwrap();
        let c = m.compile().unwrap();
        assert_eq!(c.order, vec![0, 1, 2, 3]);
        let again = StructuralModel::from_toml_str(&m.to_toml_string().unwrap()).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn rejects_cycles_and_bad_tables() {
        let cyc = SMALL
            .replace(
                "coefficients = { d = 1.0, c = 0.5 }",
                "coefficients = { d = 1.0 }",
            )
            .replace("coefficients = { c = 0.4 }", "coefficients = { y = 0.4 }");
        assert!(StructuralModel::from_toml_str(&cyc).is_err());
        let bad = SMALL.replace("[[0.7, 0.3], [0.4, 0.6]]", "[[0.7, 0.2], [0.4, 0.6]]");
        assert!(matches!(
            StructuralModel::from_toml_str(&bad),
            Err(Error::Model(_))
        ));
    }

    #[test]
    fn joint_scenario_rejects_confounder_after_mediator() {
        let text = SMALL.replace(
            "covariates = [\"c\"]",
            "covariates = [\"c\"]\nconfounders_post = [\"x\"]",
        ) + r#"
[[variables]]
name = "x"
law = "gaussian"
sd = 1.0
mean = { coefficients = { d = 1.0 } }
"#;
        assert!(StructuralModel::from_toml_str(&text).is_err());
    }
}
