//! Column-oriented tabular data model with typed roles, splitting, k-fold,
//! intersectional sensitive attributes and temporal slicing.
//!
//! Datasets are immutable after construction; every operation returns a new
//! value and is deterministic given its seed.

mod csv_io;
mod encode;

pub use csv_io::{load_csv, read_schema_json, write_csv, write_schema_json};
pub use encode::{encode, EncodingMap, SourceEncoding};

use crate::error::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Target,
    Sensitive,
    Stratum,
    Slice,
    Latent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: Kind,
    pub role: Role,
}

impl ColumnSchema {
    pub fn new(name: impl Into<String>, kind: Kind, role: Role) -> Self {
        Self {
            name: name.into(),
            kind,
            role,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Class ids index into `classes`; classes are interned in first-appearance order.
    Categorical {
        ids: Vec<u32>,
        classes: Vec<String>,
    },
}

impl ColumnData {
    pub fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { ids, .. } => ids.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub schema: ColumnSchema,
    pub data: ColumnData,
}

impl Column {
    pub fn numeric(name: &str, role: Role, values: Vec<f64>) -> Self {
        Self {
            schema: ColumnSchema::new(name, Kind::Numeric, role),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn categorical(name: &str, role: Role, values: &[&str]) -> Self {
        let mut classes: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(values.len());
        for v in values {
            let id = match classes.iter().position(|c| c == v) {
                Some(i) => i as u32,
                None => {
                    classes.push((*v).to_string());
                    (classes.len() - 1) as u32
                }
            };
            ids.push(id);
        }
        Self {
            schema: ColumnSchema::new(name, Kind::Categorical, role),
            data: ColumnData::Categorical { ids, classes },
        }
    }

    pub fn name(&self) -> &str {
        &self.schema.name
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            _ => None,
        }
    }

    /// Value of row `i` rendered as a field string.
    pub fn render(&self, i: usize) -> String {
        match &self.data {
            ColumnData::Numeric(v) => format_num(v[i]),
            ColumnData::Categorical { ids, classes } => classes[ids[i] as usize].clone(),
        }
    }
}

pub(crate) fn format_num(v: f64) -> String {
    format!("{v}")
}

/// Group memberships extracted from a column, used by every fairness metric.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    pub ids: Vec<u32>,
    pub labels: Vec<String>,
}

impl Groups {
    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    columns: Vec<Column>,
    weights: Vec<f64>,
    n_rows: usize,
}

impl TabularDataset {
    pub fn new(columns: Vec<Column>) -> Result<Self> {
        let n_rows = columns.first().map(|c| c.data.len()).unwrap_or(0);
        Self::with_weights(columns, vec![1.0; n_rows])
    }

    pub fn with_weights(columns: Vec<Column>, weights: Vec<f64>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidSchema(
                "dataset needs at least one column".into(),
            ));
        }
        let n_rows = columns[0].data.len();
        for c in &columns {
            if c.data.len() != n_rows {
                return Err(Error::InvalidSchema(format!(
                    "column '{}' has {} rows, expected {}",
                    c.name(),
                    c.data.len(),
                    n_rows
                )));
            }
        }
        for (i, c) in columns.iter().enumerate() {
            if columns[..i].iter().any(|p| p.name() == c.name()) {
                return Err(Error::DuplicateColumn(c.name().to_string()));
            }
        }
        let targets: Vec<&Column> = columns
            .iter()
            .filter(|c| c.schema.role == Role::Target)
            .collect();
        if targets.len() > 1 {
            return Err(Error::InvalidSchema("more than one target column".into()));
        }
        if let Some(t) = targets.first() {
            match &t.data {
                ColumnData::Numeric(v) => {
                    if let Some(bad) = v.iter().find(|x| **x != 0.0 && **x != 1.0) {
                        return Err(Error::InvalidSchema(format!(
                            "target '{}' contains non-binary value {}",
                            t.name(),
                            bad
                        )));
                    }
                }
                ColumnData::Categorical { .. } => {
                    return Err(Error::InvalidSchema(format!(
                        "target '{}' must be numeric 0/1",
                        t.name()
                    )));
                }
            }
        }
        if weights.len() != n_rows {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: n_rows,
            });
        }
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidSchema(
                "weights must be finite and >= 0".into(),
            ));
        }
        if n_rows > 0 && !weights.iter().any(|w| *w > 0.0) {
            return Err(Error::InvalidSchema(
                "at least one weight must be > 0".into(),
            ));
        }
        Ok(Self {
            columns,
            weights,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn require_column(&self, name: &str) -> Result<&Column> {
        self.column(name)
            .ok_or_else(|| Error::NoSuchColumn(name.to_string()))
    }

    pub fn schema(&self) -> Vec<ColumnSchema> {
        self.columns.iter().map(|c| c.schema.clone()).collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.schema.role == Role::Feature)
            .map(|c| c.name().to_string())
            .collect()
    }

    pub fn sensitive_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.schema.role == Role::Sensitive)
            .map(|c| c.name().to_string())
            .collect()
    }

    pub fn target_name(&self) -> Result<&str> {
        self.columns
            .iter()
            .find(|c| c.schema.role == Role::Target)
            .map(|c| c.name())
            .ok_or_else(|| Error::InvalidSchema("dataset has no target column".into()))
    }

    /// Target labels as 0/1.
    pub fn target(&self) -> Result<Vec<u8>> {
        let name = self.target_name()?.to_string();
        let col = self.require_column(&name)?;
        match &col.data {
            ColumnData::Numeric(v) => Ok(v.iter().map(|x| (*x == 1.0) as u8).collect()),
            _ => Err(Error::InvalidSchema("target must be numeric".into())),
        }
    }

    /// Group memberships of a column. Categorical columns map classes
    /// directly; numeric columns with few distinct values (<= 32) are treated
    /// as discrete groups in ascending value order.
    pub fn groups(&self, name: &str) -> Result<Groups> {
        let col = self.require_column(name)?;
        match &col.data {
            ColumnData::Categorical { ids, classes } => Ok(Groups {
                ids: ids.clone(),
                labels: classes.clone(),
            }),
            ColumnData::Numeric(v) => {
                let mut distinct: Vec<f64> = v.clone();
                distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distinct.dedup();
                if distinct.len() > 32 {
                    return Err(Error::InvalidSchema(format!(
                        "numeric column '{name}' has {} distinct values; too many for grouping",
                        distinct.len()
                    )));
                }
                let ids = v
                    .iter()
                    .map(|x| distinct.iter().position(|d| d == x).unwrap() as u32)
                    .collect();
                Ok(Groups {
                    ids,
                    labels: distinct.iter().map(|d| format_num(*d)).collect(),
                })
            }
        }
    }

    /// New dataset with the given rows, preserving order of `idx`.
    pub fn select_rows(&self, idx: &[usize]) -> Result<Self> {
        let columns = self
            .columns
            .iter()
            .map(|c| {
                let data = match &c.data {
                    ColumnData::Numeric(v) => {
                        ColumnData::Numeric(idx.iter().map(|i| v[*i]).collect())
                    }
                    ColumnData::Categorical { ids, classes } => ColumnData::Categorical {
                        ids: idx.iter().map(|i| ids[*i]).collect(),
                        classes: classes.clone(),
                    },
                };
                Column {
                    schema: c.schema.clone(),
                    data,
                }
            })
            .collect();
        Self::with_weights(columns, idx.iter().map(|i| self.weights[*i]).collect())
    }

    pub fn with_role(&self, name: &str, role: Role) -> Result<Self> {
        self.require_column(name)?;
        let mut ds = self.clone();
        for c in &mut ds.columns {
            if c.name() == name {
                c.schema.role = role;
            }
        }
        Ok(ds)
    }

    pub fn without_column(&self, name: &str) -> Result<Self> {
        self.require_column(name)?;
        let columns = self
            .columns
            .iter()
            .filter(|c| c.name() != name)
            .cloned()
            .collect();
        Self::with_weights(columns, self.weights.clone())
    }

    pub fn with_column(&self, column: Column) -> Result<Self> {
        let mut columns = self.columns.clone();
        columns.push(column);
        Self::with_weights(columns, self.weights.clone())
    }

    pub fn with_weights_replaced(&self, weights: Vec<f64>) -> Result<Self> {
        Self::with_weights(self.columns.clone(), weights)
    }

    /// Append `other`'s rows. Schemas must match name-for-name; categorical
    /// class ids are remapped onto this dataset's interning.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.columns.len() != other.columns.len() {
            return Err(Error::InvalidSchema("concat: column count mismatch".into()));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        for (a, b) in self.columns.iter().zip(other.columns.iter()) {
            if a.schema != b.schema {
                return Err(Error::InvalidSchema(format!(
                    "concat: schema mismatch on '{}'",
                    a.name()
                )));
            }
            let data = match (&a.data, &b.data) {
                (ColumnData::Numeric(x), ColumnData::Numeric(y)) => {
                    let mut v = x.clone();
                    v.extend_from_slice(y);
                    ColumnData::Numeric(v)
                }
                (
                    ColumnData::Categorical {
                        ids: xi,
                        classes: xc,
                    },
                    ColumnData::Categorical {
                        ids: yi,
                        classes: yc,
                    },
                ) => {
                    let mut classes = xc.clone();
                    let map: Vec<u32> = yc
                        .iter()
                        .map(|c| match classes.iter().position(|k| k == c) {
                            Some(i) => i as u32,
                            None => {
                                classes.push(c.clone());
                                (classes.len() - 1) as u32
                            }
                        })
                        .collect();
                    let mut ids = xi.clone();
                    ids.extend(yi.iter().map(|i| map[*i as usize]));
                    ColumnData::Categorical { ids, classes }
                }
                _ => return Err(Error::InvalidSchema("concat: kind mismatch".into())),
            };
            columns.push(Column {
                schema: a.schema.clone(),
                data,
            });
        }
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Self::with_weights(columns, weights)
    }

    /// Deterministic disjoint train/test partition with `|test| = round(f*n)`.
    pub fn split(
        &self,
        test_fraction: f64,
        seed: u64,
        stratify_on: Option<&str>,
    ) -> Result<(Self, Self)> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::DegenerateSplit {
                n: self.n_rows,
                fraction: test_fraction,
            });
        }
        let n = self.n_rows;
        let test_n = (test_fraction * n as f64).round() as usize;
        if n < 2 || test_n == 0 || test_n >= n {
            return Err(Error::DegenerateSplit {
                n,
                fraction: test_fraction,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut test_idx: Vec<usize> = Vec::with_capacity(test_n);
        match stratify_on {
            None => {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng);
                test_idx.extend_from_slice(&idx[..test_n]);
            }
            Some(col) => {
                let groups = self.groups(col)?;
                let k = groups.n_groups();
                let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
                for (i, g) in groups.ids.iter().enumerate() {
                    members[*g as usize].push(i);
                }
                // Largest-remainder allocation keeps per-class test fractions
                // within one row of the global fraction while the total is
                // exactly round(f*n).
                let quotas: Vec<f64> = members
                    .iter()
                    .map(|m| test_fraction * m.len() as f64)
                    .collect();
                let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
                let mut rest = test_n as i64 - counts.iter().sum::<usize>() as i64;
                let mut order: Vec<usize> = (0..k).collect();
                order.sort_by(|a, b| {
                    let fa = quotas[*a] - quotas[*a].floor();
                    let fb = quotas[*b] - quotas[*b].floor();
                    fb.partial_cmp(&fa).unwrap().then(a.cmp(b))
                });
                let mut pos = 0;
                while rest > 0 {
                    let g = order[pos % k];
                    if counts[g] < members[g].len() {
                        counts[g] += 1;
                        rest -= 1;
                    }
                    pos += 1;
                }
                for (g, m) in members.iter().enumerate() {
                    let mut idx = m.clone();
                    idx.shuffle(&mut rng);
                    test_idx.extend_from_slice(&idx[..counts[g]]);
                }
            }
        }
        test_idx.sort_unstable();
        let in_test: Vec<bool> = {
            let mut mask = vec![false; n];
            for i in &test_idx {
                mask[*i] = true;
            }
            mask
        };
        let train_idx: Vec<usize> = (0..n).filter(|i| !in_test[*i]).collect();
        Ok((self.select_rows(&train_idx)?, self.select_rows(&test_idx)?))
    }

    /// `k` (train, validation) pairs; validation folds are disjoint, cover all
    /// rows and differ in size by at most one.
    pub fn kfold(&self, k: usize, seed: u64) -> Result<Vec<(Self, Self)>> {
        let n = self.n_rows;
        if k < 2 || n < k {
            return Err(Error::BadK { k, n });
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let base = n / k;
        let extra = n % k;
        let mut folds: Vec<Vec<usize>> = Vec::with_capacity(k);
        let mut at = 0;
        for f in 0..k {
            let size = base + usize::from(f < extra);
            let mut fold: Vec<usize> = idx[at..at + size].to_vec();
            fold.sort_unstable();
            folds.push(fold);
            at += size;
        }
        let mut pairs = Vec::with_capacity(k);
        for f in 0..k {
            let mut train: Vec<usize> = Vec::with_capacity(n - folds[f].len());
            for (g, fold) in folds.iter().enumerate() {
                if g != f {
                    train.extend_from_slice(fold);
                }
            }
            train.sort_unstable();
            pairs.push((self.select_rows(&train)?, self.select_rows(&folds[f])?));
        }
        Ok(pairs)
    }

    /// Add a sensitive column whose classes are the observed tuples of the
    /// named sensitive attributes. Original columns are retained.
    pub fn intersect_sensitive(&self, attrs: &[&str]) -> Result<Self> {
        if attrs.len() < 2 {
            return Err(Error::InvalidSchema(
                "intersect needs at least two attributes".into(),
            ));
        }
        let mut parts: Vec<(&Vec<u32>, &Vec<String>)> = Vec::new();
        for a in attrs {
            let col = self.require_column(a)?;
            if col.schema.role != Role::Sensitive {
                return Err(Error::NotSensitive((*a).to_string()));
            }
            match &col.data {
                ColumnData::Categorical { ids, classes } => parts.push((ids, classes)),
                _ => {
                    return Err(Error::InvalidSchema(format!(
                        "sensitive column '{a}' must be categorical"
                    )))
                }
            }
        }
        let name = attrs.join("\u{d7}"); // ×
        let mut classes: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(self.n_rows);
        for row in 0..self.n_rows {
            let label = parts
                .iter()
                .map(|(ids, classes)| classes[ids[row] as usize].as_str())
                .collect::<Vec<_>>()
                .join("\u{d7}");
            let id = match classes.iter().position(|c| *c == label) {
                Some(i) => i as u32,
                None => {
                    classes.push(label);
                    (classes.len() - 1) as u32
                }
            };
            ids.push(id);
        }
        self.with_column(Column {
            schema: ColumnSchema::new(name, Kind::Categorical, Role::Sensitive),
            data: ColumnData::Categorical { ids, classes },
        })
    }

    /// Partition by a slice-role column, ordered by slice value (numeric
    /// ascending, categorical lexicographic). Row order is preserved within
    /// each slice, so concatenating the slices in original-index order
    /// reproduces the dataset.
    pub fn slice_by(&self, name: &str) -> Result<Vec<(String, Self)>> {
        let col = self
            .require_column(name)
            .map_err(|_| Error::NoSliceColumn(name.into()))?;
        if col.schema.role != Role::Slice {
            return Err(Error::NoSliceColumn(name.to_string()));
        }
        let keyed: Vec<(String, Vec<usize>)> = match &col.data {
            ColumnData::Numeric(v) => {
                let mut distinct: Vec<f64> = v.clone();
                distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
                distinct.dedup();
                distinct
                    .iter()
                    .map(|d| {
                        (
                            format_num(*d),
                            v.iter()
                                .enumerate()
                                .filter(|(_, x)| *x == d)
                                .map(|(i, _)| i)
                                .collect(),
                        )
                    })
                    .collect()
            }
            ColumnData::Categorical { ids, classes } => {
                let mut order: Vec<usize> = (0..classes.len()).collect();
                order.sort_by(|a, b| classes[*a].cmp(&classes[*b]));
                order
                    .iter()
                    .filter_map(|c| {
                        let idx: Vec<usize> = ids
                            .iter()
                            .enumerate()
                            .filter(|(_, id)| **id as usize == *c)
                            .map(|(i, _)| i)
                            .collect();
                        if idx.is_empty() {
                            None
                        } else {
                            Some((classes[*c].clone(), idx))
                        }
                    })
                    .collect()
            }
        };
        keyed
            .into_iter()
            .map(|(key, idx)| Ok((key, self.select_rows(&idx)?)))
            .collect()
    }
}
