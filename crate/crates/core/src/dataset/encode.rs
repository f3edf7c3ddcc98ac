//! Quartile binning for numeric features and one-hot expansion for
//! categoricals. The map is fitted on a row mask only, so a train-fitted map
//! can be applied to held-out data without leakage.

use super::{Column, ColumnData, ColumnSchema, Kind, Role, TabularDataset};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SourceEncoding {
    /// Bin edges in non-decreasing order; `cuts.len() + 1` bins.
    /// A value below the first cut falls in bin 1, at or above the last cut
    /// in the last bin.
    Numeric { cuts: Vec<f64> },
    /// One indicator per class; unseen classes map to all-zero indicators.
    Categorical { classes: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingEntry {
    pub source: String,
    pub encoding: SourceEncoding,
    pub indicators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EncodingMap {
    pub entries: Vec<EncodingEntry>,
    /// Degenerate-fit notes (constant columns and the like).
    pub warnings: Vec<String>,
}

/// 25/50/75 empirical percentiles with linear interpolation.
fn quartile_cuts(sorted: &[f64]) -> Vec<f64> {
    let m = sorted.len();
    [0.25, 0.5, 0.75]
        .iter()
        .map(|q| {
            let h = q * (m - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        })
        .collect()
}

fn bin_of(cuts: &[f64], v: f64) -> usize {
    cuts.iter().take_while(|c| v >= **c).count()
}

impl EncodingMap {
    /// Fit on the masked rows of every feature column.
    pub fn fit(ds: &TabularDataset, fit_rows: &[bool]) -> Result<Self> {
        if fit_rows.len() != ds.n_rows() {
            return Err(Error::LengthMismatch {
                left: fit_rows.len(),
                right: ds.n_rows(),
            });
        }
        if !fit_rows.iter().any(|b| *b) {
            return Err(Error::InvalidSchema("empty fit mask".into()));
        }
        let mut map = EncodingMap::default();
        for col in ds.columns() {
            if col.schema.role != Role::Feature {
                continue;
            }
            match &col.data {
                ColumnData::Numeric(values) => {
                    let mut fit: Vec<f64> = values
                        .iter()
                        .zip(fit_rows)
                        .filter(|(_, m)| **m)
                        .map(|(v, _)| *v)
                        .collect();
                    fit.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let mut distinct = fit.clone();
                    distinct.dedup();
                    let cuts = match distinct.len() {
                        0 => unreachable!("non-empty mask"),
                        1 => {
                            map.warnings.push(format!(
                                "column '{}' is constant on the fit rows",
                                col.name()
                            ));
                            Vec::new()
                        }
                        2 | 3 => {
                            // too few distinct values for quartiles: one bin
                            // per distinct value, edges at midpoints
                            distinct.windows(2).map(|w| (w[0] + w[1]) / 2.0).collect()
                        }
                        _ => quartile_cuts(&fit),
                    };
                    let indicators = (1..=cuts.len() + 1)
                        .map(|i| format!("{}=q{}", col.name(), i))
                        .collect();
                    map.entries.push(EncodingEntry {
                        source: col.name().to_string(),
                        encoding: SourceEncoding::Numeric { cuts },
                        indicators,
                    });
                }
                ColumnData::Categorical { ids, classes } => {
                    let mut seen = vec![false; classes.len()];
                    for (id, m) in ids.iter().zip(fit_rows) {
                        if *m {
                            seen[*id as usize] = true;
                        }
                    }
                    let observed: Vec<String> = classes
                        .iter()
                        .zip(&seen)
                        .filter(|(_, s)| **s)
                        .map(|(c, _)| c.clone())
                        .collect();
                    if observed.len() == 1 {
                        map.warnings.push(format!(
                            "column '{}' is constant on the fit rows",
                            col.name()
                        ));
                    }
                    let indicators = observed
                        .iter()
                        .map(|c| format!("{}={}", col.name(), c))
                        .collect();
                    map.entries.push(EncodingEntry {
                        source: col.name().to_string(),
                        encoding: SourceEncoding::Categorical { classes: observed },
                        indicators,
                    });
                }
            }
        }
        Ok(map)
    }

    fn entry(&self, source: &str) -> Option<&EncodingEntry> {
        self.entries.iter().find(|e| e.source == source)
    }

    /// Expand every mapped feature column into its indicators. Feature
    /// columns that already carry this map's indicator names pass through
    /// unchanged, which makes application idempotent on encoded data.
    /// Non-feature columns always pass through.
    pub fn apply(&self, ds: &TabularDataset) -> Result<(TabularDataset, Vec<String>)> {
        let indicator_names: Vec<&String> = self
            .entries
            .iter()
            .flat_map(|e| e.indicators.iter())
            .collect();
        let mut warnings = Vec::new();
        let mut columns: Vec<Column> = Vec::new();
        for col in ds.columns() {
            if col.schema.role != Role::Feature {
                columns.push(col.clone());
                continue;
            }
            if let Some(entry) = self.entry(col.name()) {
                let n = ds.n_rows();
                let mut indicators: Vec<Vec<f64>> = vec![vec![0.0; n]; entry.indicators.len()];
                match (&entry.encoding, &col.data) {
                    (SourceEncoding::Numeric { cuts }, ColumnData::Numeric(values)) => {
                        for (row, v) in values.iter().enumerate() {
                            indicators[bin_of(cuts, *v)][row] = 1.0;
                        }
                    }
                    (
                        SourceEncoding::Categorical { classes },
                        ColumnData::Categorical {
                            ids,
                            classes: ds_classes,
                        },
                    ) => {
                        // class-id in this dataset -> indicator slot, if fitted
                        let slot: Vec<Option<usize>> = ds_classes
                            .iter()
                            .map(|c| classes.iter().position(|k| k == c))
                            .collect();
                        let mut unseen = false;
                        for (row, id) in ids.iter().enumerate() {
                            match slot[*id as usize] {
                                Some(s) => indicators[s][row] = 1.0,
                                None => unseen = true,
                            }
                        }
                        if unseen {
                            warnings.push(format!(
                                "column '{}' contains classes unseen at fit time; \
                                 mapped to all-zero indicators",
                                col.name()
                            ));
                        }
                    }
                    _ => {
                        return Err(Error::EncodingMismatch(format!(
                            "column '{}' kind differs from the fitted encoding",
                            col.name()
                        )))
                    }
                }
                for (name, values) in entry.indicators.iter().zip(indicators) {
                    columns.push(Column {
                        schema: ColumnSchema::new(name.clone(), Kind::Numeric, Role::Feature),
                        data: ColumnData::Numeric(values),
                    });
                }
            } else if indicator_names.iter().any(|n| *n == col.name()) {
                columns.push(col.clone());
            } else {
                return Err(Error::EncodingMismatch(format!(
                    "feature column '{}' is neither a mapped source nor an indicator",
                    col.name()
                )));
            }
        }
        Ok((
            TabularDataset::with_weights(columns, ds.weights().to_vec())?,
            warnings,
        ))
    }
}

/// Fit on the masked rows and apply to the whole dataset.
pub fn encode(ds: &TabularDataset, fit_rows: &[bool]) -> Result<(TabularDataset, EncodingMap)> {
    let map = EncodingMap::fit(ds, fit_rows)?;
    let (encoded, _) = map.apply(ds)?;
    Ok((encoded, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Column;

    fn all(n: usize) -> Vec<bool> {
        vec![true; n]
    }

    #[test]
    fn uniform_ranks_quartiles() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, (1..=8).map(|v| v as f64).collect()),
            Column::numeric(
                "y",
                Role::Target,
                vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0],
            ),
        ])
        .unwrap();
        let (enc, map) = encode(&ds, &all(8)).unwrap();
        assert_eq!(map.entries[0].indicators.len(), 4);
        // bins {1,2},{3,4},{5,6},{7,8}
        for (bin, expect) in [
            (1, [1.0, 2.0]),
            (2, [3.0, 4.0]),
            (3, [5.0, 6.0]),
            (4, [7.0, 8.0]),
        ] {
            let col = enc
                .column(&format!("x=q{bin}"))
                .unwrap()
                .as_numeric()
                .unwrap();
            let members: Vec<f64> = (0..8)
                .filter(|r| col[*r] == 1.0)
                .map(|r| (r + 1) as f64)
                .collect();
            assert_eq!(members, expect, "bin {bin}");
        }
    }

    #[test]
    fn one_hot_rows_sum_to_one() {
        let ds = TabularDataset::new(vec![
            Column::categorical("c", Role::Feature, &["red", "blue", "red"]),
            Column::numeric("y", Role::Target, vec![0.0, 1.0, 1.0]),
        ])
        .unwrap();
        let (enc, _) = encode(&ds, &all(3)).unwrap();
        let red = enc.column("c=red").unwrap().as_numeric().unwrap();
        let blue = enc.column("c=blue").unwrap().as_numeric().unwrap();
        for r in 0..3 {
            assert_eq!(red[r] + blue[r], 1.0);
        }
    }

    #[test]
    fn below_min_cut_falls_in_first_bin() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, (1..=8).map(|v| v as f64).collect()),
            Column::numeric("y", Role::Target, vec![0.0; 8]),
        ])
        .unwrap();
        let fit: Vec<bool> = (0..8).map(|i| i >= 2).collect(); // fit on 3..=8
        let map = EncodingMap::fit(&ds, &fit).unwrap();
        let (enc, _) = map.apply(&ds).unwrap();
        let q1 = enc.column("x=q1").unwrap().as_numeric().unwrap();
        assert_eq!(q1[0], 1.0, "test value below min cut lands in bin 1");
        assert_eq!(q1[1], 1.0);
    }

    #[test]
    fn constant_column_single_indicator_with_warning() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, vec![5.0, 5.0, 5.0]),
            Column::numeric("y", Role::Target, vec![0.0, 1.0, 0.0]),
        ])
        .unwrap();
        let (enc, map) = encode(&ds, &all(3)).unwrap();
        assert_eq!(map.warnings.len(), 1);
        let q1 = enc.column("x=q1").unwrap().as_numeric().unwrap();
        assert!(q1.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn few_distinct_values_bin_per_value() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0]),
            Column::numeric("y", Role::Target, vec![0.0; 6]),
        ])
        .unwrap();
        let (enc, map) = encode(&ds, &all(6)).unwrap();
        assert_eq!(map.entries[0].indicators.len(), 3);
        let q2 = enc.column("x=q2").unwrap().as_numeric().unwrap();
        assert_eq!(q2, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn unseen_class_all_zero_with_warning() {
        let train = TabularDataset::new(vec![
            Column::categorical("c", Role::Feature, &["red", "blue"]),
            Column::numeric("y", Role::Target, vec![0.0, 1.0]),
        ])
        .unwrap();
        let map = EncodingMap::fit(&train, &all(2)).unwrap();
        let test = TabularDataset::new(vec![
            Column::categorical("c", Role::Feature, &["green"]),
            Column::numeric("y", Role::Target, vec![0.0]),
        ])
        .unwrap();
        let (enc, warnings) = map.apply(&test).unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(enc.column("c=red").unwrap().as_numeric().unwrap()[0], 0.0);
        assert_eq!(enc.column("c=blue").unwrap().as_numeric().unwrap()[0], 0.0);
    }

    #[test]
    fn reapplying_map_to_encoded_data_is_identity() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, (1..=8).map(|v| v as f64).collect()),
            Column::categorical(
                "c",
                Role::Feature,
                &["a", "b", "a", "b", "a", "b", "a", "b"],
            ),
            Column::numeric("y", Role::Target, vec![0.0; 8]),
        ])
        .unwrap();
        let (enc, map) = encode(&ds, &all(8)).unwrap();
        let (again, warnings) = map.apply(&enc).unwrap();
        assert_eq!(enc, again);
        assert!(warnings.is_empty());
    }

    #[test]
    fn map_serde_round_trip() {
        let ds = TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, (1..=8).map(|v| v as f64).collect()),
            Column::numeric("y", Role::Target, vec![0.0; 8]),
        ])
        .unwrap();
        let (_, map) = encode(&ds, &all(8)).unwrap();
        let json = serde_json::to_string(&map).unwrap();
        let back: EncodingMap = serde_json::from_str(&json).unwrap();
        assert_eq!(map, back);
    }
}
