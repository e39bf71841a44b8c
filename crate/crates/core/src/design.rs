//! Model formulas: terms over named columns, expanded into a numeric design
//! with reference-coded indicators for categorical columns.

use std::collections::BTreeMap;
use std::ops::Range;

use crate::data::ObservationTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Term {
    Main(String),
    Interaction(String, String),
}

/// Symbolic design: an optional intercept plus main effects and two-way
/// interactions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesignSpec {
    pub intercept: bool,
    pub terms: Vec<Term>,
    /// Reference level code per categorical column; the lowest observed
    /// level otherwise.
    pub references: BTreeMap<String, u32>,
}

impl DesignSpec {
    pub fn with_intercept() -> Self {
        DesignSpec {
            intercept: true,
            ..Default::default()
        }
    }

    pub fn main(mut self, name: &str) -> Self {
        self.terms.push(Term::Main(name.to_string()));
        self
    }

    pub fn mains<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        for n in names {
            self.terms.push(Term::Main(n.as_ref().to_string()));
        }
        self
    }

    pub fn interaction(mut self, a: &str, b: &str) -> Self {
        self.terms
            .push(Term::Interaction(a.to_string(), b.to_string()));
        self
    }

    pub fn reference(mut self, name: &str, level: u32) -> Self {
        self.references.insert(name.to_string(), level);
        self
    }

    /// Resolves column names and categorical expansions against a table.
    pub fn compile(&self, table: &ObservationTable) -> Result<Design> {
        let mut factors: BTreeMap<String, Factor> = BTreeMap::new();
        let mut factor_of = |name: &str| -> Result<Factor> {
            if let Some(f) = factors.get(name) {
                return Ok(f.clone());
            }
            let col = table
                .index_of(name)
                .ok_or_else(|| Error::config(format!("design column `{name}` not found")))?;
            let f = match table.column_at(col).as_factor() {
                None => Factor::Numeric { col },
                Some(fac) => {
                    let mut observed = vec![false; fac.levels.len()];
                    for &k in &fac.codes {
                        observed[k as usize] = true;
                    }
                    let reference = match self.references.get(name) {
                        Some(&r) => {
                            if !observed.get(r as usize).copied().unwrap_or(false) {
                                return Err(Error::estimation(format!(
                                    "reference level of `{name}` has no rows"
                                )));
                            }
                            r
                        }
                        None => observed.iter().position(|&o| o).unwrap_or(0) as u32,
                    };
                    let levels = (0..fac.levels.len() as u32)
                        .filter(|&l| l != reference && observed[l as usize])
                        .collect();
                    Factor::Categorical {
                        col,
                        levels,
                        observed,
                        labels: fac.levels.clone(),
                    }
                }
            };
            factors.insert(name.to_string(), f.clone());
            Ok(f)
        };

        let mut names = Vec::new();
        if self.intercept {
            names.push("(intercept)".to_string());
        }
        let mut terms = Vec::with_capacity(self.terms.len());
        for t in &self.terms {
            let start = names.len();
            let compiled = match t {
                Term::Main(n) => {
                    let f = factor_of(n)?;
                    names.extend(f.column_names(n));
                    CompiledTerm::Main(f)
                }
                Term::Interaction(a, b) => {
                    let fa = factor_of(a)?;
                    let fb = factor_of(b)?;
                    for na in fa.column_names(a) {
                        for nb in fb.column_names(b) {
                            names.push(format!("{na}:{nb}"));
                        }
                    }
                    CompiledTerm::Interaction(fa, fb)
                }
            };
            terms.push((compiled, start..names.len()));
        }
        Ok(Design {
            intercept: self.intercept,
            terms,
            names,
        })
    }
}

#[derive(Debug, Clone)]
enum Factor {
    Numeric {
        col: usize,
    },
    Categorical {
        col: usize,
        /// Non-reference observed levels, one indicator each.
        levels: Vec<u32>,
        observed: Vec<bool>,
        labels: Vec<String>,
    },
}

impl Factor {
    fn width(&self) -> usize {
        match self {
            Factor::Numeric { .. } => 1,
            Factor::Categorical { levels, .. } => levels.len(),
        }
    }

    fn column_names(&self, name: &str) -> Vec<String> {
        match self {
            Factor::Numeric { .. } => vec![name.to_string()],
            Factor::Categorical { levels, labels, .. } => levels
                .iter()
                .map(|&l| format!("{name}[{}]", labels[l as usize]))
                .collect(),
        }
    }

    fn col(&self) -> usize {
        match self {
            Factor::Numeric { col } | Factor::Categorical { col, .. } => *col,
        }
    }

    #[inline]
    fn fill<S: ValueSource + ?Sized>(&self, src: &S, out: &mut [f64]) -> Result<()> {
        match self {
            Factor::Numeric { col } => out[0] = src.value(*col),
            Factor::Categorical {
                col,
                levels,
                observed,
                labels,
            } => {
                let code = src.value(*col) as usize;
                if !observed.get(code).copied().unwrap_or(false) {
                    return Err(Error::Prediction(format!(
                        "level `{}` was not seen when the model was fitted",
                        labels.get(code).map_or("?", |s| s.as_str())
                    )));
                }
                for (slot, &l) in out.iter_mut().zip(levels) {
                    *slot = if l as usize == code { 1.0 } else { 0.0 };
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum CompiledTerm {
    Main(Factor),
    Interaction(Factor, Factor),
}

/// Anything that can supply a value for a table column index. Categorical
/// columns report their level code.
pub trait ValueSource {
    fn value(&self, col: usize) -> f64;
}

/// One row of a table.
#[derive(Clone, Copy)]
pub struct RowRef<'a> {
    pub table: &'a ObservationTable,
    pub row: usize,
}

impl ValueSource for RowRef<'_> {
    #[inline]
    fn value(&self, col: usize) -> f64 {
        self.table.column_at(col).value_f64(self.row)
    }
}

/// A row with some columns replaced.
pub struct Overlay<'a, S: ValueSource + ?Sized> {
    pub base: &'a S,
    pub overrides: &'a [(usize, f64)],
}

impl<S: ValueSource + ?Sized> ValueSource for Overlay<'_, S> {
    #[inline]
    fn value(&self, col: usize) -> f64 {
        for &(c, v) in self.overrides {
            if c == col {
                return v;
            }
        }
        self.base.value(col)
    }
}

/// A compiled design bound to the column layout of the table it was
/// compiled against.
#[derive(Debug, Clone)]
pub struct Design {
    intercept: bool,
    terms: Vec<(CompiledTerm, Range<usize>)>,
    names: Vec<String>,
}

impl Design {
    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn has_intercept(&self) -> bool {
        self.intercept
    }

    /// Writes the design row for `src` into `out` (length `n_cols`).
    #[inline]
    pub fn fill<S: ValueSource + ?Sized>(&self, src: &S, out: &mut [f64]) -> Result<()> {
        if self.intercept {
            out[0] = 1.0;
        }
        for (term, range) in &self.terms {
            let slot = &mut out[range.clone()];
            match term {
                CompiledTerm::Main(f) => f.fill(src, slot)?,
                CompiledTerm::Interaction(a, b) => {
                    let (wa, wb) = (a.width(), b.width());
                    let mut ea = [0.0; 32];
                    let mut eb = [0.0; 32];
                    let mut va;
                    let mut vb;
                    let ea: &mut [f64] = if wa <= 32 {
                        &mut ea[..wa]
                    } else {
                        va = vec![0.0; wa];
                        &mut va
                    };
                    let eb: &mut [f64] = if wb <= 32 {
                        &mut eb[..wb]
                    } else {
                        vb = vec![0.0; wb];
                        &mut vb
                    };
                    a.fill(src, ea)?;
                    b.fill(src, eb)?;
                    for (i, x) in ea.iter().enumerate() {
                        for (j, z) in eb.iter().enumerate() {
                            slot[i * wb + j] = x * z;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Row-major `n_rows × n_cols` design matrix.
    pub fn matrix(&self, table: &ObservationTable) -> Result<Vec<f64>> {
        let p = self.n_cols();
        let mut m = vec![0.0; table.n_rows() * p];
        for (row, chunk) in m
            .chunks_exact_mut(p.max(1))
            .enumerate()
            .take(table.n_rows())
        {
            self.fill(&RowRef { table, row }, chunk)?;
        }
        Ok(m)
    }

    /// Design columns of the main effect of `col`.
    pub fn main_columns(&self, col: usize) -> Option<Range<usize>> {
        self.terms.iter().find_map(|(t, r)| match t {
            CompiledTerm::Main(f) if f.col() == col => Some(r.clone()),
            _ => None,
        })
    }

    /// Design column of the indicator for `level` of the categorical `col`.
    pub fn level_column(&self, col: usize, level: u32) -> Option<usize> {
        self.terms.iter().find_map(|(t, r)| match t {
            CompiledTerm::Main(Factor::Categorical { col: c, levels, .. }) if *c == col => {
                levels.iter().position(|&l| l == level).map(|i| r.start + i)
            }
            _ => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;

    fn table() -> ObservationTable {
        ObservationTable::from_columns(vec![
            Column::categorical(
                "g",
                vec!["a".into(), "b".into(), "c".into()],
                vec![0, 1, 2, 1],
            ),
            Column::numeric("x", vec![1.0, 2.0, 3.0, 4.0]),
        ])
        .unwrap()
    }

    #[test]
    fn expands_reference_coded_indicators_and_interactions() {
        let t = table();
        let d = DesignSpec::with_intercept()
            .main("g")
            .main("x")
            .interaction("g", "x")
            .reference("g", 1)
            .compile(&t)
            .unwrap();
        assert_eq!(
            d.names(),
            &["(intercept)", "g[a]", "g[c]", "x", "g[a]:x", "g[c]:x"]
        );
        let m = d.matrix(&t).unwrap();
        assert_eq!(&m[0..6], &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        assert_eq!(&m[12..18], &[1.0, 0.0, 1.0, 3.0, 0.0, 3.0]);
        assert_eq!(d.level_column(0, 2), Some(2));
        assert_eq!(d.level_column(0, 1), None);
        assert_eq!(d.main_columns(1), Some(3..4));
    }

    #[test]
    fn overlay_overrides_values() {
        let t = table();
        let d = DesignSpec::with_intercept()
            .main("g")
            .main("x")
            .compile(&t)
            .unwrap();
        let mut out = vec![0.0; d.n_cols()];
        let base = RowRef { table: &t, row: 0 };
        d.fill(
            &Overlay {
                base: &base,
                overrides: &[(0, 2.0), (1, 9.0)],
            },
            &mut out,
        )
        .unwrap();
        assert_eq!(out, vec![1.0, 0.0, 1.0, 9.0]);
    }

    #[test]
    fn unseen_level_is_a_prediction_error() {
        let t = ObservationTable::from_columns(vec![Column::categorical(
            "g",
            vec!["a".into(), "b".into(), "c".into()],
            vec![0, 1, 1],
        )])
        .unwrap();
        let d = DesignSpec::with_intercept().main("g").compile(&t).unwrap();
        let mut out = vec![0.0; d.n_cols()];
        let base = RowRef { table: &t, row: 0 };
        let r = d.fill(
            &Overlay {
                base: &base,
                overrides: &[(0, 2.0)],
            },
            &mut out,
        );
        assert!(matches!(r, Err(Error::Prediction(_))));
    }
}
