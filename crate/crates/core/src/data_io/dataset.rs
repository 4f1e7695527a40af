use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats_core::Matrix;

/// Column-to-role mapping for a delimited data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub choice: String,
    pub outcome: String,
    pub alternatives: usize,
    /// One-based; defaults to the last alternative.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_alternative: Option<usize>,
    pub z: Vec<String>,
    pub x: Vec<String>,
    /// Precomputed normalized wages, one column per alternative.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub wage: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labor: Option<LaborSchema>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proxy: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// Realized earnings and hours plus the regressors of the two first-stage equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaborSchema {
    pub earnings: String,
    pub hours: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub earnings_extra: Vec<String>,
    #[serde(default)]
    pub hours_extra: Vec<String>,
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let j = self.alternatives;
        if j < 2 {
            return Err(Error::Schema("at least two alternatives are required".into()));
        }
        if let Some(b) = self.base_alternative {
            if b == 0 || b > j {
                return Err(Error::Schema(format!("base_alternative {b} outside 1..={j}")));
            }
        }
        if self.z.is_empty() || self.x.is_empty() {
            return Err(Error::Schema("z and x must each list at least one column".into()));
        }
        if !self.wage.is_empty() && self.wage.len() != j {
            return Err(Error::Schema(format!("wage lists {} columns, expected {j}", self.wage.len())));
        }
        if !self.wage.is_empty() && self.labor.is_some() {
            return Err(Error::Schema("give either wage columns or a labor block, not both".into()));
        }
        for list in [&self.z, &self.x, &self.wage, &self.proxy] {
            let mut seen = std::collections::BTreeSet::new();
            if let Some(d) = list.iter().find(|c| !seen.insert(c.as_str())) {
                return Err(Error::Schema(format!("column '{d}' listed twice in one role")));
            }
        }
        Ok(())
    }

    /// Zero-based base alternative.
    pub fn base(&self) -> usize {
        self.base_alternative.unwrap_or(self.alternatives) - 1
    }

    /// Every referenced column once, in canonical order.
    pub fn columns(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        let mut push = |c: &String| {
            if !out.contains(c) {
                out.push(c.clone());
            }
        };
        push(&self.choice);
        push(&self.outcome);
        self.z.iter().for_each(&mut push);
        self.x.iter().for_each(&mut push);
        self.wage.iter().for_each(&mut push);
        if let Some(l) = &self.labor {
            push(&l.earnings);
            push(&l.hours);
            l.covariates.iter().for_each(&mut push);
            l.earnings_extra.iter().for_each(&mut push);
            l.hours_extra.iter().for_each(&mut push);
        }
        self.proxy.iter().for_each(&mut push);
        if let Some(g) = &self.group {
            push(g);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaborData {
    pub earnings: Vec<f64>,
    pub hours: Vec<f64>,
    pub covariates: Matrix,
    pub earnings_extra: Matrix,
    pub hours_extra: Matrix,
}

/// Columns that appear in only one of the two equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    pub z_only: Vec<String>,
    pub x_only: Vec<String>,
}

impl Exclusions {
    pub fn from_schema(schema: &Schema) -> Self {
        Self {
            z_only: schema.z.iter().filter(|c| !schema.x.contains(c)).cloned().collect(),
            x_only: schema.x.iter().filter(|c| !schema.z.contains(c)).cloned().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: Schema,
    pub z: Matrix,
    pub x: Matrix,
    /// Zero-based chosen alternative.
    pub choice: Vec<usize>,
    pub outcome: Vec<u8>,
    pub wage: Option<Matrix>,
    pub labor: Option<LaborData>,
    pub proxy: Option<Matrix>,
    pub group: Option<Vec<String>>,
    pub exclusions: Exclusions,
    /// Source line of each retained row (empty for generated data).
    pub source_lines: Vec<usize>,
    /// Lines dropped because a required cell was empty.
    pub dropped_lines: Vec<usize>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.choice.len()
    }

    pub fn alternatives(&self) -> usize {
        self.schema.alternatives
    }

    pub fn base(&self) -> usize {
        self.schema.base()
    }

    pub fn z_names(&self) -> &[String] {
        &self.schema.z
    }

    pub fn x_names(&self) -> &[String] {
        &self.schema.x
    }

    /// Check internal consistency of a dataset assembled in code.
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        let n = self.n();
        let j = self.alternatives();
        let rows_ok = self.outcome.len() == n
            && self.z.rows() == n
            && self.x.rows() == n
            && self.z.cols() == self.schema.z.len()
            && self.x.cols() == self.schema.x.len()
            && self.wage.as_ref().is_none_or(|w| w.rows() == n && w.cols() == j)
            && self.proxy.as_ref().is_none_or(|p| p.rows() == n && p.cols() == self.schema.proxy.len())
            && self.group.as_ref().is_none_or(|g| g.len() == n);
        if !rows_ok {
            return Err(Error::Shape("dataset columns disagree on row count or width".into()));
        }
        if let Some(i) = self.choice.iter().position(|&c| c >= j) {
            return Err(Error::Range {
                line: i + 1,
                column: self.schema.choice.clone(),
                message: format!("choice outside 1..={j}"),
            });
        }
        if let Some(i) = self.outcome.iter().position(|&m| m > 1) {
            return Err(Error::Range {
                line: i + 1,
                column: self.schema.outcome.clone(),
                message: "outcome must be 0 or 1".into(),
            });
        }
        Ok(())
    }

    /// Values of a named column, if the dataset holds it.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let s = &self.schema;
        if name == s.choice {
            return Some(self.choice.iter().map(|&c| (c + 1) as f64).collect());
        }
        if name == s.outcome {
            return Some(self.outcome.iter().map(|&m| f64::from(m)).collect());
        }
        if let Some(k) = s.z.iter().position(|c| c == name) {
            return Some(self.z.column(k));
        }
        if let Some(k) = s.x.iter().position(|c| c == name) {
            return Some(self.x.column(k));
        }
        if let (Some(k), Some(w)) = (s.wage.iter().position(|c| c == name), &self.wage) {
            return Some(w.column(k));
        }
        if let (Some(ls), Some(l)) = (&s.labor, &self.labor) {
            if name == ls.earnings {
                return Some(l.earnings.clone());
            }
            if name == ls.hours {
                return Some(l.hours.clone());
            }
            for (names, m) in [
                (&ls.covariates, &l.covariates),
                (&ls.earnings_extra, &l.earnings_extra),
                (&ls.hours_extra, &l.hours_extra),
            ] {
                if let Some(k) = names.iter().position(|c| c == name) {
                    return Some(m.column(k));
                }
            }
        }
        if let (Some(k), Some(p)) = (s.proxy.iter().position(|c| c == name), &self.proxy) {
            return Some(p.column(k));
        }
        None
    }

    /// Rows `idx` in the given order (repeats allowed).
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Dataset {
            schema: self.schema.clone(),
            z: self.z.select_rows(idx),
            x: self.x.select_rows(idx),
            choice: idx.iter().map(|&i| self.choice[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
            wage: self.wage.as_ref().map(|w| w.select_rows(idx)),
            labor: self.labor.as_ref().map(|l| LaborData {
                earnings: pick(&l.earnings),
                hours: pick(&l.hours),
                covariates: l.covariates.select_rows(idx),
                earnings_extra: l.earnings_extra.select_rows(idx),
                hours_extra: l.hours_extra.select_rows(idx),
            }),
            proxy: self.proxy.as_ref().map(|p| p.select_rows(idx)),
            group: self.group.as_ref().map(|g| idx.iter().map(|&i| g[i].clone()).collect()),
            exclusions: self.exclusions.clone(),
            source_lines: if self.source_lines.len() == self.n() {
                idx.iter().map(|&i| self.source_lines[i]).collect()
            } else {
                Vec::new()
            },
            dropped_lines: Vec::new(),
        }
    }

    /// Rows whose group column equals `value`.
    pub fn filter_group(&self, value: &str) -> Result<Dataset> {
        let g = self
            .group
            .as_ref()
            .ok_or_else(|| Error::Config("group filter set but the schema has no group column".into()))?;
        let idx: Vec<usize> = (0..self.n()).filter(|&i| g[i] == value).collect();
        if idx.is_empty() {
            return Err(Error::Input(format!("no rows in group '{value}'")));
        }
        Ok(self.select_rows(&idx))
    }
}

/// Read and validate a comma-separated file with a header row.
pub fn load_dataset(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_dataset(file, schema)
}

pub fn read_dataset<R: std::io::Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, column: String::new(), message: e.to_string() })?
        .clone();
    let index: BTreeMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    let cols = schema.columns();
    for c in &cols {
        if !index.contains_key(c.as_str()) {
            return Err(Error::Schema(format!("column '{c}' not found in the header")));
        }
    }
    let group_col = schema.group.as_deref();
    let mut numeric: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut group = Vec::new();
    let mut source_lines = Vec::new();
    let mut dropped_lines = Vec::new();
    let j = schema.alternatives;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { line, column: String::new(), message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let cell = |c: &str| rec.get(index[c]).unwrap_or("").trim();
        if cols.iter().any(|c| cell(c).is_empty()) {
            dropped_lines.push(line);
            continue;
        }
        let mut row = Vec::with_capacity(cols.len());
        for c in &cols {
            if Some(c.as_str()) == group_col {
                continue;
            }
            let text = cell(c);
            let v: f64 = text.parse().map_err(|_| Error::Parse {
                line,
                column: c.clone(),
                message: format!("'{text}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, column: c.clone(), message: "non-finite value".into() });
            }
            row.push((c.as_str(), v));
        }
        let choice = row.iter().find(|(c, _)| *c == schema.choice).map(|r| r.1).unwrap_or(0.0);
        if choice.fract() != 0.0 || choice < 1.0 || choice > j as f64 {
            return Err(Error::Range {
                line,
                column: schema.choice.clone(),
                message: format!("choice {choice} outside 1..={j}"),
            });
        }
        let outcome = row.iter().find(|(c, _)| *c == schema.outcome).map(|r| r.1).unwrap_or(0.0);
        if outcome != 0.0 && outcome != 1.0 {
            return Err(Error::Range {
                line,
                column: schema.outcome.clone(),
                message: format!("outcome {outcome} is not 0 or 1"),
            });
        }
        for (c, v) in row {
            numeric.entry(c).or_default().push(v);
        }
        if let Some(g) = group_col {
            group.push(cell(g).to_string());
        }
        source_lines.push(line);
    }
    let n = source_lines.len();
    if n == 0 {
        return Err(Error::Input("no complete rows in the data file".into()));
    }
    let get = |c: &str| numeric.get(c).cloned().unwrap_or_default();
    let block = |names: &[String]| Matrix::from_fn(n, names.len(), |i, k| numeric[names[k].as_str()][i]);
    let data = Dataset {
        schema: schema.clone(),
        z: block(&schema.z),
        x: block(&schema.x),
        choice: get(&schema.choice).iter().map(|&c| c as usize - 1).collect(),
        outcome: get(&schema.outcome).iter().map(|&m| m as u8).collect(),
        wage: (!schema.wage.is_empty()).then(|| block(&schema.wage)),
        labor: schema.labor.as_ref().map(|l| LaborData {
            earnings: get(&l.earnings),
            hours: get(&l.hours),
            covariates: block(&l.covariates),
            earnings_extra: block(&l.earnings_extra),
            hours_extra: block(&l.hours_extra),
        }),
        proxy: (!schema.proxy.is_empty()).then(|| block(&schema.proxy)),
        group: group_col.map(|_| group),
        exclusions: Exclusions::from_schema(schema),
        source_lines,
        dropped_lines,
    };
    data.validate()?;
    Ok(data)
}

/// Write the schema's columns in canonical order.
pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_dataset(file, data)
}

pub fn write_dataset<W: std::io::Write>(writer: W, data: &Dataset) -> Result<()> {
    let cols = data.schema.columns();
    let group_col = data.schema.group.as_deref();
    let values: Vec<Option<Vec<f64>>> = cols
        .iter()
        .map(|c| if Some(c.as_str()) == group_col { None } else { data.column(c) })
        .collect();
    if let Some(k) = values.iter().zip(&cols).position(|(v, c)| v.is_none() && Some(c.as_str()) != group_col) {
        return Err(Error::Schema(format!("dataset has no values for column '{}'", cols[k])));
    }
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(&cols).map_err(io)?;
    for i in 0..data.n() {
        let rec: Vec<String> = values
            .iter()
            .map(|v| match v {
                Some(col) => format!("{}", col[i]),
                None => data.group.as_ref().map_or(String::new(), |g| g[i].clone()),
            })
            .collect();
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
