//! Columnar sample view consumed by the estimators: one column per state
//! variable plus a designated action column.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Result, TercError};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Discrete(Vec<i64>),
    Real(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Discrete(v) => v.len(),
            Column::Real(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Column::Discrete(_))
    }

    /// Real-valued view (discrete symbols cast to f64), used by the neural path.
    /// Integral values become a discrete column, anything else stays real.
    pub fn from_reals(values: Vec<f64>) -> Column {
        if values
            .iter()
            .all(|v| v.is_finite() && v.fract() == 0.0 && v.abs() < i64::MAX as f64)
        {
            Column::Discrete(values.iter().map(|&v| v as i64).collect())
        } else {
            Column::Real(values)
        }
    }

    pub fn as_real(&self) -> Vec<f64> {
        match self {
            Column::Discrete(v) => v.iter().map(|&x| x as f64).collect(),
            Column::Real(v) => v.clone(),
        }
    }
}

pub const QUANTIZE_BINS: usize = 32;

/// Uniform quantization into `QUANTIZE_BINS` bins over the observed range.
/// Constant columns map to symbol 0.
pub fn quantize(values: &[f64]) -> Vec<i64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let width = (hi - lo) / QUANTIZE_BINS as f64;
    values
        .iter()
        .map(|&x| (((x - lo) / width) as i64).min(QUANTIZE_BINS as i64 - 1))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTable {
    names: Vec<String>,
    columns: Vec<Column>,
    action_idx: usize,
}

impl SampleTable {
    pub fn new(names: Vec<String>, columns: Vec<Column>, action: &str) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(TercError::InvalidArgument(format!(
                "{} names vs {} columns",
                names.len(),
                columns.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.clone()) {
                return Err(TercError::InvalidArgument(format!(
                    "duplicate column name {name:?}"
                )));
            }
        }
        let n = columns.first().map(|c| c.len()).unwrap_or(0);
        if n == 0 {
            return Err(TercError::InvalidArgument("empty table".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(TercError::InvalidArgument("ragged columns".into()));
        }
        let action_idx = names
            .iter()
            .position(|x| x == action)
            .ok_or_else(|| TercError::UnknownColumn(action.to_string()))?;
        Ok(SampleTable {
            names,
            columns,
            action_idx,
        })
    }

    pub fn n(&self) -> usize {
        self.columns[0].len()
    }

    pub fn action_name(&self) -> &str {
        &self.names[self.action_idx]
    }

    /// Variable column names, excluding the action.
    pub fn variable_names(&self) -> Vec<String> {
        self.names
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.action_idx)
            .map(|(_, n)| n.clone())
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        let idx = self
            .names
            .iter()
            .position(|x| x == name)
            .ok_or_else(|| TercError::UnknownColumn(name.to_string()))?;
        Ok(&self.columns[idx])
    }

    /// Discrete symbols for one column; errors on real columns.
    pub fn discrete(&self, name: &str) -> Result<&[i64]> {
        match self.column(name)? {
            Column::Discrete(v) => Ok(v),
            Column::Real(_) => Err(TercError::ContinuousColumn(name.to_string())),
        }
    }

    /// Discrete symbols for one column, quantizing real columns on the fly.
    pub fn discrete_or_quantized(&self, name: &str) -> Result<Vec<i64>> {
        match self.column(name)? {
            Column::Discrete(v) => Ok(v.clone()),
            Column::Real(v) => Ok(quantize(v)),
        }
    }

    /// Real view of the named columns, row-major.
    pub fn real_rows(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        let cols: Vec<Vec<f64>> = names
            .iter()
            .map(|n| self.column(n).map(Column::as_real))
            .collect::<Result<_>>()?;
        let n = self.n();
        Ok((0..n).map(|r| cols.iter().map(|c| c[r]).collect()).collect())
    }

    /// Copy of the table with an extra discrete column appended.
    pub fn with_column(&self, name: &str, values: Vec<i64>) -> Result<SampleTable> {
        if values.len() != self.n() {
            return Err(TercError::InvalidArgument(format!(
                "column {name:?} has {} rows, table has {}",
                values.len(),
                self.n()
            )));
        }
        let mut names = self.names.clone();
        names.push(name.to_string());
        let mut columns = self.columns.clone();
        columns.push(Column::Discrete(values));
        SampleTable::new(names, columns, self.action_name())
    }

    /// Copy with only the named variables (plus the action column).
    pub fn project(&self, variables: &[String]) -> Result<SampleTable> {
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for v in variables {
            names.push(v.clone());
            columns.push(self.column(v)?.clone());
        }
        names.push(self.action_name().to_string());
        columns.push(self.columns[self.action_idx].clone());
        SampleTable::new(names, columns, self.action_name())
    }

    /// Read a CSV file with a header row; a column named `action` (or the
    /// given override) is the action. Columns whose values all parse as
    /// integers become discrete, the rest real.
    pub fn from_csv(path: &Path, action: &str) -> Result<SampleTable> {
        let file = std::fs::File::open(path)?;
        let mut lines = std::io::BufReader::new(file).lines();
        let header = lines
            .next()
            .ok_or_else(|| TercError::InvalidArgument("empty csv".into()))??;
        let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); names.len()];
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != names.len() {
                return Err(TercError::InvalidArgument(format!(
                    "csv row has {} fields, header has {}",
                    fields.len(),
                    names.len()
                )));
            }
            for (i, f) in fields.iter().enumerate() {
                raw[i].push(f.trim().to_string());
            }
        }
        let columns: Vec<Column> = raw
            .iter()
            .map(|vals| {
                if let Ok(ints) = vals.iter().map(|v| v.parse::<i64>()).collect::<std::result::Result<Vec<_>, _>>() {
                    Ok(Column::Discrete(ints))
                } else {
                    let reals = vals
                        .iter()
                        .map(|v| {
                            v.parse::<f64>().map_err(|_| {
                                TercError::InvalidArgument(format!("bad csv value {v:?}"))
                            })
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Column::Real(reals))
                }
            })
            .collect::<Result<_>>()?;
        SampleTable::new(names, columns, action)
    }

    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "{}", self.names.join(","))?;
        for r in 0..self.n() {
            let row: Vec<String> = self
                .columns
                .iter()
                .map(|c| match c {
                    Column::Discrete(v) => v[r].to_string(),
                    Column::Real(v) => format!("{}", v[r]),
                })
                .collect();
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }
}
