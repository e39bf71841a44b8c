//! Tabular observations: typed columns, CSV ingestion with complete-case
//! deletion, and row resampling.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell spellings treated as missing.
const MISSING_TOKENS: [&str; 5] = ["", "NA", "NaN", "nan", "."];

/// A categorical column: level labels plus one code per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub levels: Vec<String>,
    pub codes: Vec<u32>,
}

impl Factor {
    /// Index of a level label.
    pub fn level_index(&self, label: &str) -> Option<u32> {
        self.levels
            .iter()
            .position(|l| l == label)
            .map(|i| i as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    Categorical(Factor),
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(f) => f.codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, values: Vec<f64>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, codes: Vec<u32>) -> Self {
        Column {
            name: name.into(),
            data: ColumnData::Categorical(Factor { levels, codes }),
        }
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical(_) => None,
        }
    }

    pub fn as_factor(&self) -> Option<&Factor> {
        match &self.data {
            ColumnData::Numeric(_) => None,
            ColumnData::Categorical(f) => Some(f),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.data, ColumnData::Categorical(_))
    }

    /// Numeric view of a cell; categorical cells yield their level code.
    pub fn value_f64(&self, row: usize) -> f64 {
        match &self.data {
            ColumnData::Numeric(v) => v[row],
            ColumnData::Categorical(f) => f.codes[row] as f64,
        }
    }
}

/// Declared type of a column to ingest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnType {
    Numeric,
    /// Levels are taken in first-seen order unless declared.
    Categorical {
        levels: Option<Vec<String>>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TableSchema {
    pub columns: Vec<(String, ColumnType)>,
}

impl TableSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn numeric(mut self, name: &str) -> Self {
        self.columns.push((name.to_string(), ColumnType::Numeric));
        self
    }

    pub fn categorical(mut self, name: &str, levels: Option<Vec<String>>) -> Self {
        self.columns
            .push((name.to_string(), ColumnType::Categorical { levels }));
        self
    }

    pub fn get(&self, name: &str) -> Option<&ColumnType> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

/// Immutable column-major table. All columns have the same length and no
/// missing cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    columns: Vec<Column>,
    n_rows: usize,
}

/// Result of reading a CSV file.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub table: ObservationTable,
    /// Rows removed because a bound column was missing.
    pub dropped_rows: usize,
}

impl ObservationTable {
    pub fn from_columns(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, |c| c.data.len());
        let mut seen = HashMap::new();
        for c in &columns {
            if c.data.len() != n_rows {
                return Err(Error::config(format!(
                    "column `{}` has {} rows, expected {}",
                    c.name,
                    c.data.len(),
                    n_rows
                )));
            }
            if seen.insert(c.name.clone(), ()).is_some() {
                return Err(Error::config(format!("duplicate column `{}`", c.name)));
            }
            if let ColumnData::Categorical(f) = &c.data {
                if let Some(bad) = f.codes.iter().find(|&&k| k as usize >= f.levels.len()) {
                    return Err(Error::config(format!(
                        "column `{}` has code {} outside its {} levels",
                        c.name,
                        bad,
                        f.levels.len()
                    )));
                }
            }
        }
        Ok(ObservationTable { columns, n_rows })
    }

    pub fn empty() -> Self {
        ObservationTable {
            columns: Vec::new(),
            n_rows: 0,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_at(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::config(format!("column `{name}` not found")))
    }

    /// Appends a column, replacing any column of the same name.
    pub fn with_column(mut self, column: Column) -> Result<Self> {
        if !self.columns.is_empty() && column.data.len() != self.n_rows {
            return Err(Error::config(format!(
                "column `{}` has {} rows, expected {}",
                column.name,
                column.data.len(),
                self.n_rows
            )));
        }
        if self.columns.is_empty() {
            self.n_rows = column.data.len();
        }
        match self.index_of(&column.name) {
            Some(i) => self.columns[i] = column,
            None => self.columns.push(column),
        }
        Ok(self)
    }

    /// New table made of the given rows (repeats allowed).
    pub fn take(&self, rows: &[usize]) -> ObservationTable {
        let columns = self
            .columns
            .iter()
            .map(|c| Column {
                name: c.name.clone(),
                data: match &c.data {
                    ColumnData::Numeric(v) => {
                        ColumnData::Numeric(rows.iter().map(|&i| v[i]).collect())
                    }
                    ColumnData::Categorical(f) => ColumnData::Categorical(Factor {
                        levels: f.levels.clone(),
                        codes: rows.iter().map(|&i| f.codes[i]).collect(),
                    }),
                },
            })
            .collect();
        ObservationTable {
            columns,
            n_rows: rows.len(),
        }
    }

    /// Converts columns to the declared types. Numeric columns declared
    /// categorical become factors whose labels are the shortest round-trip
    /// spelling of each value; undeclared levels are ordered numerically.
    pub fn coerce(&self, schema: &TableSchema) -> Result<ObservationTable> {
        let mut out = self.clone();
        for (name, ty) in &schema.columns {
            let idx = out.require(name)?;
            let col = &out.columns[idx];
            let replaced = match (ty, &col.data) {
                (ColumnType::Numeric, ColumnData::Numeric(_)) => None,
                (ColumnType::Numeric, ColumnData::Categorical(_)) => {
                    return Err(Error::config(format!(
                        "column `{name}` is categorical but declared numeric"
                    )))
                }
                (ColumnType::Categorical { levels }, ColumnData::Numeric(v)) => {
                    let labels: Vec<String> = v.iter().map(|x| format_level(*x)).collect();
                    let levels = match levels {
                        Some(l) => l.clone(),
                        None => {
                            let mut distinct: Vec<f64> = v.clone();
                            distinct.sort_by(|a, b| a.total_cmp(b));
                            distinct.dedup();
                            distinct.into_iter().map(format_level).collect()
                        }
                    };
                    let codes = encode_labels(name, &labels, &levels)?;
                    Some(ColumnData::Categorical(Factor { levels, codes }))
                }
                (
                    ColumnType::Categorical {
                        levels: Some(levels),
                    },
                    ColumnData::Categorical(f),
                ) => {
                    if &f.levels == levels {
                        None
                    } else {
                        let labels: Vec<String> = f
                            .codes
                            .iter()
                            .map(|&k| f.levels[k as usize].clone())
                            .collect();
                        let codes = encode_labels(name, &labels, levels)?;
                        Some(ColumnData::Categorical(Factor {
                            levels: levels.clone(),
                            codes,
                        }))
                    }
                }
                (ColumnType::Categorical { levels: None }, ColumnData::Categorical(_)) => None,
            };
            if let Some(data) = replaced {
                out.columns[idx].data = data;
            }
        }
        Ok(out)
    }

    /// Writes the table as CSV. Numeric cells are written with 17
    /// significant digits unless every value in the column is integral.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str()))?;
        let integral: Vec<bool> = self
            .columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Numeric(v) => v.iter().all(|x| x.fract() == 0.0 && x.abs() < 1e15),
                ColumnData::Categorical(_) => false,
            })
            .collect();
        let mut record = Vec::with_capacity(self.columns.len());
        for row in 0..self.n_rows {
            record.clear();
            for (c, &int) in self.columns.iter().zip(&integral) {
                record.push(match &c.data {
                    ColumnData::Numeric(v) if int => format_level(v[row]),
                    ColumnData::Numeric(v) => format_number(v[row]),
                    ColumnData::Categorical(f) => f.levels[f.codes[row] as usize].clone(),
                });
            }
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shortest round-trip spelling, used for level labels and integral values.
pub fn format_level(x: f64) -> String {
    if x == 0.0 {
        // avoid "-0"
        return "0".to_string();
    }
    format!("{x}")
}

/// Fixed 17-significant-digit spelling for numeric output.
pub fn format_number(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn encode_labels(name: &str, labels: &[String], levels: &[String]) -> Result<Vec<u32>> {
    let index: HashMap<&str, u32> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u32))
        .collect();
    labels
        .iter()
        .enumerate()
        .map(|(row, l)| {
            index.get(l.as_str()).copied().ok_or_else(|| Error::Ingest {
                row: row + 1,
                column: name.to_string(),
                message: format!("value `{l}` is not a declared level"),
            })
        })
        .collect()
}

enum Builder {
    Numeric(Vec<f64>),
    Categorical {
        levels: Vec<String>,
        index: HashMap<String, u32>,
        fixed: bool,
        codes: Vec<u32>,
    },
}

/// Reads CSV data. Only the schema's columns are kept; rows with a missing
/// cell in any of them are dropped and counted.
pub fn read_table<R: Read>(reader: R, schema: &TableSchema) -> Result<Ingested> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut positions = Vec::with_capacity(schema.columns.len());
    for (name, _) in &schema.columns {
        let pos = headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::config(format!("column `{name}` not found in header")))?;
        positions.push(pos);
    }
    let mut builders: Vec<Builder> = schema
        .columns
        .iter()
        .map(|(_, ty)| match ty {
            ColumnType::Numeric => Builder::Numeric(Vec::new()),
            ColumnType::Categorical { levels } => {
                let levels = levels.clone().unwrap_or_default();
                let index = levels
                    .iter()
                    .enumerate()
                    .map(|(i, l)| (l.clone(), i as u32))
                    .collect();
                Builder::Categorical {
                    fixed: !levels.is_empty(),
                    levels,
                    index,
                    codes: Vec::new(),
                }
            }
        })
        .collect();

    let mut dropped = 0usize;
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cells: Vec<&str> = positions
            .iter()
            .map(|&p| record.get(p).map(str::trim).unwrap_or(""))
            .collect();
        if cells.iter().any(|c| MISSING_TOKENS.contains(c)) {
            dropped += 1;
            continue;
        }
        for ((b, cell), (name, _)) in builders.iter_mut().zip(&cells).zip(&schema.columns) {
            match b {
                Builder::Numeric(v) => {
                    let x: f64 = cell.parse().map_err(|_| Error::Ingest {
                        row,
                        column: name.clone(),
                        message: format!("cannot parse `{cell}` as a number"),
                    })?;
                    v.push(x);
                }
                Builder::Categorical {
                    levels,
                    index,
                    fixed,
                    codes,
                } => {
                    let code = match index.get(*cell) {
                        Some(&k) => k,
                        None if *fixed => {
                            return Err(Error::Ingest {
                                row,
                                column: name.clone(),
                                message: format!("value `{cell}` is not a declared level"),
                            })
                        }
                        None => {
                            let k = levels.len() as u32;
                            levels.push(cell.to_string());
                            index.insert(cell.to_string(), k);
                            k
                        }
                    };
                    codes.push(code);
                }
            }
        }
    }
    let columns = builders
        .into_iter()
        .zip(&schema.columns)
        .map(|(b, (name, _))| match b {
            Builder::Numeric(v) => Column::numeric(name.clone(), v),
            Builder::Categorical { levels, codes, .. } => {
                Column::categorical(name.clone(), levels, codes)
            }
        })
        .collect();
    Ok(Ingested {
        table: ObservationTable::from_columns(columns)?,
        dropped_rows: dropped,
    })
}

/// Loads a CSV file with a header row.
pub fn load_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Ingested> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.as_ref().display())))?;
    read_table(std::io::BufReader::new(file), schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> TableSchema {
        TableSchema::new()
            .numeric("y")
            .categorical("r", None)
            .numeric("c")
    }

    #[test]
    fn parses_small_csv() {
        let csv = "y,r,c\n1.5,a,0\n2,b,1\n3,a,1\n4,b,0\n";
        let t = read_table(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.table.n_rows(), 4);
        assert_eq!(t.dropped_rows, 0);
        let r = t.table.column("r").unwrap().as_factor().unwrap();
        assert_eq!(r.levels, vec!["a", "b"]);
        assert_eq!(r.codes, vec![0, 1, 0, 1]);
    }

    #[test]
    fn drops_rows_with_missing_bound_cells() {
        let csv = "y,r,c,unused\n1,a,0,\n,b,1,3\n3,a,1,NA\n4,b,0,1\n";
        let t = read_table(csv.as_bytes(), &schema()).unwrap();
        assert_eq!(t.table.n_rows(), 3);
        assert_eq!(t.dropped_rows, 1);
    }

    #[test]
    fn undeclared_level_is_an_ingestion_error() {
        let s = TableSchema::new()
            .numeric("y")
            .categorical("r", Some(vec!["a".into(), "b".into()]));
        let csv = "y,r\n1,a\n2,z\n";
        match read_table(csv.as_bytes(), &s) {
            Err(Error::Ingest { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "r");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
    }

    #[test]
    fn unparseable_number_names_row_and_column() {
        let csv = "y,r,c\n1,a,0\nfoo,b,1\n";
        match read_table(csv.as_bytes(), &schema()) {
            Err(Error::Ingest { row: 2, column, .. }) => assert_eq!(column, "y"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_config_error() {
        let csv = "y,r\n1,a\n";
        assert!(matches!(
            read_table(csv.as_bytes(), &schema()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn coerce_numeric_to_categorical() {
        let t =
            ObservationTable::from_columns(vec![Column::numeric("c", vec![1.0, 0.0, 1.0, 2.0])])
                .unwrap();
        let s = TableSchema::new().categorical("c", None);
        let t = t.coerce(&s).unwrap();
        let f = t.column("c").unwrap().as_factor().unwrap();
        assert_eq!(f.levels, vec!["0", "1", "2"]);
        assert_eq!(f.codes, vec![1, 0, 1, 2]);
    }

    #[test]
    fn take_repeats_rows() {
        let t = ObservationTable::from_columns(vec![Column::numeric("y", vec![1.0, 2.0, 3.0])])
            .unwrap();
        let s = t.take(&[2, 2, 0]);
        assert_eq!(
            s.column("y").unwrap().as_numeric().unwrap(),
            &[3.0, 3.0, 1.0]
        );
    }

    #[test]
    fn csv_round_trip_is_deterministic() {
        let csv = "y,r,c\n1.25,a,0\n2,b,1\n";
        let t = read_table(csv.as_bytes(), &schema()).unwrap().table;
        let mut a = Vec::new();
        let mut b = Vec::new();
        t.write_csv(&mut a).unwrap();
        t.write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let back = read_table(a.as_slice(), &schema()).unwrap().table;
        assert_eq!(back, t);
    }
}
