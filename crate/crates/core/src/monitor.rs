//! Fairness through time: per-slice drift evaluation, stress shocks,
//! surrogate-target retraining and exact Shapley attribution deltas.

use crate::dataset::{Column, ColumnData, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::{
    flip_sensitivity, group_confusion, group_metric_difference, labels_at, MetricKind, Scorer,
};
use crate::report;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const MAX_EXACT_FEATURES: usize = 12;

// ---------------------------------------------------------------------------
// Drift evaluation over slices
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftRow {
    pub model_id: String,
    pub context: String,
    /// Signed demographic parity (binary sensitive) or max pairwise gap.
    pub dp: Option<f64>,
    pub accuracy: Option<f64>,
    pub auc: Option<f64>,
    /// |DP| < 0.01, the table's "good" marker.
    pub bold: bool,
    /// |DP| > 0.1, the table's "bad" marker.
    pub underline: bool,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DriftReport {
    pub rows: Vec<DriftRow>,
}

impl DriftReport {
    pub fn push(
        &mut self,
        model_id: &str,
        context: &str,
        dp: Option<f64>,
        accuracy: Option<f64>,
        auc: Option<f64>,
    ) -> Result<()> {
        if self
            .rows
            .iter()
            .any(|r| r.model_id == model_id && r.context == context)
        {
            return Err(Error::InvalidSchema(format!(
                "duplicate drift context '{context}' for model '{model_id}'"
            )));
        }
        let abs = dp.map(f64::abs);
        self.rows.push(DriftRow {
            model_id: model_id.to_string(),
            context: context.to_string(),
            dp,
            accuracy,
            auc,
            bold: abs.is_some_and(|v| v < 0.01),
            underline: abs.is_some_and(|v| v > 0.1),
        });
        Ok(())
    }

    pub fn to_text_table(&self) -> String {
        let mut rows = vec![vec![
            "model".to_string(),
            "context".to_string(),
            "dp".to_string(),
            "accuracy".to_string(),
            "auc".to_string(),
            "flag".to_string(),
        ]];
        for r in &self.rows {
            let flag = if r.bold {
                "ok(|dp|<0.01)"
            } else if r.underline {
                "alert(|dp|>0.1)"
            } else {
                ""
            };
            rows.push(vec![
                r.model_id.clone(),
                r.context.clone(),
                report::fmt_opt(r.dp),
                report::fmt_opt(r.accuracy),
                report::fmt_opt(r.auc),
                flag.to_string(),
            ]);
        }
        report::text_table(&rows)
    }
}

/// Evaluate a model's demographic parity and performance on each slice.
pub fn evaluate_over_slices(
    model: &dyn Scorer,
    model_id: &str,
    slices: &[(String, TabularDataset)],
    sensitive: &str,
    tau: f64,
) -> Result<DriftReport> {
    let mut report = DriftReport::default();
    for (key, slice) in slices {
        let scores = model.score(slice)?;
        let yhat = labels_at(&scores, tau);
        let groups = slice.groups(sensitive)?;
        let w = slice.weights();
        let (dp, accuracy, auc) = match slice.target() {
            Ok(y) => {
                let conf = group_confusion(&y, &yhat, &groups, w)?;
                let dp = group_metric_difference(MetricKind::Dp, &conf);
                let (mut correct, mut total) = (0.0, 0.0);
                for c in &conf.cells {
                    correct += c.tp + c.tn;
                    total += c.total();
                }
                let auc = crate::metrics::auc_by_group(&scores, &y, &groups, w)?.overall;
                (dp.value(), Some(correct / total), auc)
            }
            Err(_) => {
                // unlabeled slice: DP is still observable
                let y0 = vec![0u8; slice.n_rows()];
                let conf = group_confusion(&y0, &yhat, &groups, w)?;
                (
                    group_metric_difference(MetricKind::Dp, &conf).value(),
                    None,
                    None,
                )
            }
        };
        report.push(model_id, key, dp, accuracy, auc)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Stress shocks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShockScope {
    Overall,
    Conditioned { sensitive: String, class: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub column: String,
    /// In units of the column's standard deviation on the reference data.
    pub magnitude: f64,
    /// +1 or -1.
    pub sign: f64,
    pub scope: ShockScope,
}

impl ShockSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnitude > 0.0) {
            return Err(Error::InvalidSchema("shock magnitude must be > 0".into()));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::InvalidSchema("shock sign must be +1 or -1".into()));
        }
        Ok(())
    }

    /// Parse `column:+1.0sd` or `column:-0.5sd:class`.
    pub fn parse(text: &str, sensitive: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() < 2 || parts.len() > 3 {
            return Err(Error::InvalidSchema(format!("bad shock spec '{text}'")));
        }
        let mag = parts[1].trim_end_matches("sd");
        let value: f64 = mag
            .parse()
            .map_err(|_| Error::InvalidSchema(format!("bad shock magnitude '{}'", parts[1])))?;
        let spec = ShockSpec {
            column: parts[0].to_string(),
            magnitude: value.abs(),
            sign: if value < 0.0 { -1.0 } else { 1.0 },
            scope: match parts.get(2) {
                Some(class) => ShockScope::Conditioned {
                    sensitive: sensitive.to_string(),
                    class: (*class).to_string(),
                },
                None => ShockScope::Overall,
            },
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Shift a raw numeric column by `sign * magnitude * sigma`, for all rows or
/// only the rows of one sensitive class. Unaffected rows are bit-identical.
pub fn apply_shock(ds: &TabularDataset, spec: &ShockSpec) -> Result<TabularDataset> {
    spec.validate()?;
    let col = ds.require_column(&spec.column)?;
    let values = col
        .as_numeric()
        .ok_or_else(|| Error::NonNumericColumn(spec.column.clone()))?;
    let n = ds.n_rows() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sigma = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let affected: Vec<bool> = match &spec.scope {
        ShockScope::Overall => vec![true; ds.n_rows()],
        ShockScope::Conditioned { sensitive, class } => {
            let groups = ds.groups(sensitive)?;
            let class_id = groups
                .labels
                .iter()
                .position(|l| l == class)
                .ok_or_else(|| Error::UnknownClass(class.clone()))?;
            groups
                .ids
                .iter()
                .map(|id| *id as usize == class_id)
                .collect()
        }
    };
    let delta = spec.sign * spec.magnitude * sigma;
    let shocked: Vec<f64> = values
        .iter()
        .zip(&affected)
        .map(|(v, hit)| if *hit { v + delta } else { *v })
        .collect();
    let columns = ds
        .columns()
        .iter()
        .map(|c| {
            if c.name() == spec.column {
                Column {
                    schema: c.schema.clone(),
                    data: ColumnData::Numeric(shocked.clone()),
                }
            } else {
                c.clone()
            }
        })
        .collect();
    TabularDataset::with_weights(columns, ds.weights().to_vec())
}

// ---------------------------------------------------------------------------
// Surrogate targets
// ---------------------------------------------------------------------------

/// Thresholded predictions of an individually fair model on a new slice,
/// intended as the retraining target once real labels are unavailable. The
/// model must ignore the sensitive column (flip sensitivity exactly zero).
pub fn surrogate_targets(
    individual_model: &dyn Scorer,
    new_slice: &TabularDataset,
    sensitive: &str,
    tau: f64,
) -> Result<Vec<u8>> {
    let sensitivity = flip_sensitivity(individual_model, new_slice, sensitive, tau)?;
    if sensitivity > 0.0 {
        return Err(Error::NotIndividuallyFair(sensitivity));
    }
    Ok(labels_at(&individual_model.score(new_slice)?, tau))
}

// ---------------------------------------------------------------------------
// Exact Shapley attribution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShapleyAttribution {
    pub features: Vec<String>,
    pub contributions: Vec<f64>,
    /// Mean model score over the background rows.
    pub baseline: f64,
    pub instance_score: f64,
}

/// Interventional Shapley values by exact coalition enumeration. The value
/// of a coalition is the mean score over hybrid rows that take the
/// instance's values on the coalition and a background row's elsewhere.
pub fn shapley_exact(
    model: &dyn Scorer,
    names: &[String],
    instance: &[f64],
    background: &[Vec<f64>],
) -> Result<ShapleyAttribution> {
    let d = names.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(d, MAX_EXACT_FEATURES));
    }
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    if instance.len() != d {
        return Err(Error::LengthMismatch {
            left: instance.len(),
            right: d,
        });
    }
    let masks = 1usize << d;
    let mut value = vec![0.0; masks];
    let mut hybrid = vec![0.0; d];
    for (mask, slot) in value.iter_mut().enumerate() {
        let mut sum = 0.0;
        for row in background {
            for j in 0..d {
                hybrid[j] = if mask & (1 << j) != 0 {
                    instance[j]
                } else {
                    row[j]
                };
            }
            sum += model.score_row(names, &hybrid)?;
        }
        *slot = sum / background.len() as f64;
    }
    // Shapley kernel weights |T|! (d-|T|-1)! / d!
    let mut fact = vec![1.0; d + 1];
    for i in 1..=d {
        fact[i] = fact[i - 1] * i as f64;
    }
    let weight: Vec<f64> = (0..d)
        .map(|t| fact[t] * fact[d - t - 1] / fact[d])
        .collect();
    let mut contributions = vec![0.0; d];
    for mask in 0..masks {
        let t = (mask as u32).count_ones() as usize;
        for j in 0..d {
            if mask & (1 << j) == 0 {
                contributions[j] += weight[t] * (value[mask | (1 << j)] - value[mask]);
            }
        }
    }
    Ok(ShapleyAttribution {
        features: names.to_vec(),
        contributions,
        baseline: value[0],
        instance_score: value[masks - 1],
    })
}

// ---------------------------------------------------------------------------
// Cross-model Shapley deltas
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrendVerdict {
    Improvement,
    Stagnation,
    Decline,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeltaShapleyReport {
    pub features: Vec<String>,
    pub mean_first: Vec<f64>,
    pub mean_second: Vec<f64>,
    pub delta: Vec<f64>,
    pub sensitive: String,
    pub deprived_class: String,
    /// Mean sensitive-feature attribution over deprived rows, per model.
    pub deprived_sensitive_first: f64,
    pub deprived_sensitive_second: f64,
    pub deprived_sensitive_delta: f64,
    pub verdict: TrendVerdict,
}

impl DeltaShapleyReport {
    pub fn to_text_table(&self) -> String {
        let mut rows = vec![vec![
            "feature".to_string(),
            "mean phi (first)".to_string(),
            "mean phi (second)".to_string(),
            "delta".to_string(),
        ]];
        for (j, f) in self.features.iter().enumerate() {
            let marker = if *f == self.sensitive {
                " *sensitive*"
            } else {
                ""
            };
            rows.push(vec![
                format!("{f}{marker}"),
                report::fmt(self.mean_first[j]),
                report::fmt(self.mean_second[j]),
                report::fmt(self.delta[j]),
            ]);
        }
        let mut out = report::text_table(&rows);
        out.push_str(&format!(
            "deprived class '{}': sensitive-feature delta {} -> {:?}\n",
            self.deprived_class,
            report::fmt(self.deprived_sensitive_delta),
            self.verdict
        ));
        out
    }
}

/// Threshold below which the sensitive-attribution shift counts as noise.
pub const STAGNATION_BAND: f64 = 0.005;

fn seeded_sample(n: usize, take: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.truncate(take.min(n));
    idx.sort_unstable();
    idx
}

/// Mean per-feature attributions of two models over a seeded row sample,
/// their difference, and the deprived class's sensitive-feature trend.
///
/// Both models must consume the same feature view, and that view must
/// include the sensitive column.
pub fn group_delta_shapley(
    first: &dyn Scorer,
    second: &dyn Scorer,
    ds: &TabularDataset,
    sensitive: &str,
    background_n: usize,
    sample_n: usize,
    seed: u64,
) -> Result<DeltaShapleyReport> {
    let mut names = first.input_columns();
    let other = second.input_columns();
    let res = {
        let mut a = names.clone();
        let mut b = other.clone();
        a.sort();
        b.sort();
        a != b
    };
    if res {
        return Err(Error::ViewMismatch(format!("{names:?} vs {other:?}")));
    }
    if !names.contains(&sensitive.to_string()) {
        return Err(Error::ViewMismatch(format!(
            "sensitive column '{sensitive}' is not part of the models' view"
        )));
    }
    names.sort();
    let d = names.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(d, MAX_EXACT_FEATURES));
    }
    let cols: Vec<&[f64]> = names
        .iter()
        .map(|f| {
            ds.column(f)
                .and_then(|c| c.as_numeric())
                .ok_or_else(|| Error::ViewMismatch(format!("column '{f}' missing or not numeric")))
        })
        .collect::<Result<Vec<_>>>()?;
    let row_of = |i: usize| -> Vec<f64> { cols.iter().map(|c| c[i]).collect() };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background: Vec<Vec<f64>> = seeded_sample(ds.n_rows(), background_n.max(1), &mut rng)
        .into_iter()
        .map(row_of)
        .collect();
    let sample = seeded_sample(ds.n_rows(), sample_n.max(1), &mut rng);

    // deprived class: lower weighted base rate of the target
    let groups = ds.groups(sensitive)?;
    let y = ds.target()?;
    let w = ds.weights();
    let k = groups.n_groups();
    let mut pos = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for i in 0..ds.n_rows() {
        let g = groups.ids[i] as usize;
        tot[g] += w[i];
        pos[g] += w[i] * f64::from(y[i]);
    }
    let deprived = (0..k)
        .min_by(|a, b| {
            (pos[*a] / tot[*a])
                .partial_cmp(&(pos[*b] / tot[*b]))
                .unwrap()
                .then(a.cmp(b))
        })
        .expect("at least one group");
    let deprived_class = groups.labels[deprived].clone();
    let s_at = names.iter().position(|n| n == sensitive).unwrap();

    let mut mean_first = vec![0.0; d];
    let mut mean_second = vec![0.0; d];
    let mut dep_first = 0.0;
    let mut dep_second = 0.0;
    let mut dep_n = 0usize;
    for &i in &sample {
        let instance = row_of(i);
        let a1 = shapley_exact(first, &names, &instance, &background)?;
        let a2 = shapley_exact(second, &names, &instance, &background)?;
        for j in 0..d {
            mean_first[j] += a1.contributions[j] / sample.len() as f64;
            mean_second[j] += a2.contributions[j] / sample.len() as f64;
        }
        if groups.ids[i] as usize == deprived {
            dep_first += a1.contributions[s_at];
            dep_second += a2.contributions[s_at];
            dep_n += 1;
        }
    }
    if dep_n == 0 {
        return Err(Error::EmptyGroup(deprived_class));
    }
    dep_first /= dep_n as f64;
    dep_second /= dep_n as f64;
    let dep_delta = dep_second - dep_first;
    let verdict = if dep_delta.abs() <= STAGNATION_BAND {
        TrendVerdict::Stagnation
    } else if dep_delta > 0.0 {
        TrendVerdict::Decline
    } else {
        TrendVerdict::Improvement
    };
    let delta = mean_second
        .iter()
        .zip(&mean_first)
        .map(|(b, a)| b - a)
        .collect();
    Ok(DeltaShapleyReport {
        features: names,
        mean_first,
        mean_second,
        delta,
        sensitive: sensitive.to_string(),
        deprived_class,
        deprived_sensitive_first: dep_first,
        deprived_sensitive_second: dep_second,
        deprived_sensitive_delta: dep_delta,
        verdict,
    })
}

/// The feature with the largest mean absolute attribution under a model,
/// the default shock target.
pub fn most_important_feature(
    model: &dyn Scorer,
    ds: &TabularDataset,
    background_n: usize,
    sample_n: usize,
    seed: u64,
) -> Result<(String, f64)> {
    let mut names = model.input_columns();
    names.sort();
    let d = names.len();
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures(d, MAX_EXACT_FEATURES));
    }
    let cols: Vec<&[f64]> = names
        .iter()
        .map(|f| {
            ds.column(f)
                .and_then(|c| c.as_numeric())
                .ok_or_else(|| Error::ViewMismatch(format!("column '{f}' missing")))
        })
        .collect::<Result<Vec<_>>>()?;
    let row_of = |i: usize| -> Vec<f64> { cols.iter().map(|c| c[i]).collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background: Vec<Vec<f64>> = seeded_sample(ds.n_rows(), background_n.max(1), &mut rng)
        .into_iter()
        .map(row_of)
        .collect();
    let sample = seeded_sample(ds.n_rows(), sample_n.max(1), &mut rng);
    let mut mean_abs = vec![0.0; d];
    for &i in &sample {
        let attribution = shapley_exact(model, &names, &row_of(i), &background)?;
        for j in 0..d {
            mean_abs[j] += attribution.contributions[j].abs() / sample.len() as f64;
        }
    }
    let best = (0..d)
        .max_by(|a, b| {
            mean_abs[*a]
                .partial_cmp(&mean_abs[*b])
                .unwrap()
                .then(b.cmp(a))
        })
        .unwrap();
    Ok((names[best].clone(), mean_abs[best]))
}
