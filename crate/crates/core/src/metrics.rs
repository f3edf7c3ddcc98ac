//! Observational fairness and performance metrics for binary classifiers.
//!
//! All rate computations use weighted counts. Zero denominators never become
//! silent zeros: affected groups are flagged and excluded from gaps. For
//! sensitive attributes with more than two classes every "difference" metric
//! is the maximum pairwise absolute gap; the binary case is reported signed
//! as `rate(group_0) - rate(group_1)` in class-id order.

use crate::dataset::{ColumnData, Groups, Role, TabularDataset};
use crate::error::{Error, Result};
use crate::report;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Anything that can score rows of a dataset in [0,1].
pub trait Scorer {
    /// Names of the input columns the model reads.
    fn input_columns(&self) -> Vec<String>;

    /// Score every row of the dataset.
    fn score(&self, ds: &TabularDataset) -> Result<Vec<f64>>;

    /// Score one raw row; `names` aligns with `values`.
    fn score_row(&self, names: &[String], values: &[f64]) -> Result<f64>;
}

pub fn labels_at(scores: &[f64], tau: f64) -> Vec<u8> {
    scores.iter().map(|s| u8::from(*s > tau)).collect()
}

// ---------------------------------------------------------------------------
// Confusion counts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: f64,
    pub fp: f64,
    pub tn: f64,
    pub fn_: f64,
}

impl Confusion {
    pub fn total(&self) -> f64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupConfusion {
    pub labels: Vec<String>,
    pub cells: Vec<Confusion>,
}

pub fn group_confusion(
    y: &[u8],
    yhat: &[u8],
    groups: &Groups,
    w: &[f64],
) -> Result<GroupConfusion> {
    let n = y.len();
    for (len, _) in [
        (yhat.len(), "yhat"),
        (groups.ids.len(), "groups"),
        (w.len(), "w"),
    ] {
        if len != n {
            return Err(Error::LengthMismatch {
                left: len,
                right: n,
            });
        }
    }
    let mut cells = vec![Confusion::default(); groups.n_groups()];
    for i in 0..n {
        let cell = &mut cells[groups.ids[i] as usize];
        match (y[i], yhat[i]) {
            (1, 1) => cell.tp += w[i],
            (0, 1) => cell.fp += w[i],
            (0, 0) => cell.tn += w[i],
            (1, 0) => cell.fn_ += w[i],
            _ => {
                return Err(Error::UnparsableValue {
                    row: i,
                    col: "labels".into(),
                    value: format!("({}, {})", y[i], yhat[i]),
                })
            }
        }
    }
    if let Some(empty) = cells.iter().position(|c| c.total() == 0.0) {
        return Err(Error::EmptyGroup(groups.labels[empty].clone()));
    }
    Ok(GroupConfusion {
        labels: groups.labels.clone(),
        cells,
    })
}

// ---------------------------------------------------------------------------
// Group difference metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Acceptance-rate gap (demographic parity).
    Dp,
    /// False-negative-rate gap (equality of opportunity).
    Eopp,
    /// False-positive-rate gap (predictive equality).
    Pe,
    /// max(FPR gap, FNR gap).
    Eodds,
    /// Precision gap (predictive parity).
    Pp,
    /// P(Y=1 | Yhat=0) gap (the negative side of sufficiency).
    SuffNeg,
    /// Accuracy gap.
    Acc,
}

impl MetricKind {
    pub fn key(&self) -> &'static str {
        match self {
            MetricKind::Dp => "dp_diff",
            MetricKind::Eopp => "eopp_diff",
            MetricKind::Pe => "pe_diff",
            MetricKind::Eodds => "eodds_diff",
            MetricKind::Pp => "pp_diff",
            MetricKind::SuffNeg => "suff_neg_diff",
            MetricKind::Acc => "acc_diff",
        }
    }
}

/// Outcome of a per-group rate comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub labels: Vec<String>,
    /// Per-group rate; `None` when the denominator vanished.
    pub per_group: Vec<Option<f64>>,
    /// `rate(group_0) - rate(group_1)` when exactly two groups are defined.
    pub signed: Option<f64>,
    /// Maximum pairwise absolute gap over defined groups.
    pub max_abs: Option<f64>,
    /// Groups excluded because their rate was undefined.
    pub undefined: Vec<String>,
}

impl GapResult {
    fn from_rates(labels: Vec<String>, per_group: Vec<Option<f64>>) -> Self {
        let defined: Vec<f64> = per_group.iter().flatten().copied().collect();
        let undefined = labels
            .iter()
            .zip(&per_group)
            .filter(|(_, r)| r.is_none())
            .map(|(l, _)| l.clone())
            .collect();
        let max_abs = if defined.len() >= 2 {
            let mut max = 0.0f64;
            for i in 0..defined.len() {
                for j in i + 1..defined.len() {
                    max = max.max((defined[i] - defined[j]).abs());
                }
            }
            Some(max)
        } else {
            None
        };
        let signed = if labels.len() == 2 {
            match (per_group[0], per_group[1]) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            }
        } else {
            None
        };
        GapResult {
            labels,
            per_group,
            signed,
            max_abs,
            undefined,
        }
    }

    /// The headline value: signed for binary attributes, max-abs otherwise.
    pub fn value(&self) -> Option<f64> {
        self.signed.or(self.max_abs)
    }

    pub fn abs_value(&self) -> Option<f64> {
        self.value().map(f64::abs)
    }
}

fn rate(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else {
        None
    }
}

pub fn group_metric_difference(kind: MetricKind, conf: &GroupConfusion) -> GapResult {
    if kind == MetricKind::Eodds {
        let pe = group_metric_difference(MetricKind::Pe, conf);
        let eopp = group_metric_difference(MetricKind::Eopp, conf);
        let pick = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => Some(if x.abs() >= y.abs() { x } else { y }),
            (x, y) => x.or(y),
        };
        let mut undefined = pe.undefined.clone();
        for u in &eopp.undefined {
            if !undefined.contains(u) {
                undefined.push(u.clone());
            }
        }
        return GapResult {
            labels: conf.labels.clone(),
            per_group: vec![None; conf.labels.len()],
            signed: pick(pe.signed, eopp.signed),
            max_abs: match (pe.max_abs, eopp.max_abs) {
                (Some(a), Some(b)) => Some(a.max(b)),
                (a, b) => a.or(b),
            },
            undefined,
        };
    }
    let per_group: Vec<Option<f64>> = conf
        .cells
        .iter()
        .map(|c| match kind {
            MetricKind::Dp => rate(c.tp + c.fp, c.total()),
            MetricKind::Eopp => rate(c.fn_, c.tp + c.fn_),
            MetricKind::Pe => rate(c.fp, c.fp + c.tn),
            MetricKind::Pp => rate(c.tp, c.tp + c.fp),
            MetricKind::SuffNeg => rate(c.fn_, c.fn_ + c.tn),
            MetricKind::Acc => rate(c.tp + c.tn, c.total()),
            MetricKind::Eodds => unreachable!(),
        })
        .collect();
    GapResult::from_rates(conf.labels.clone(), per_group)
}

/// min over ordered group pairs of PPR_a / PPR_b, and the 4/5-rule verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EightyPercent {
    pub min_ratio: Option<f64>,
    pub pass: Option<bool>,
    pub undefined: Vec<String>,
}

pub fn eighty_percent_check(conf: &GroupConfusion) -> EightyPercent {
    let pprs: Vec<Option<f64>> = conf
        .cells
        .iter()
        .map(|c| rate(c.tp + c.fp, c.total()))
        .collect();
    let undefined: Vec<String> = conf
        .labels
        .iter()
        .zip(&pprs)
        .filter(|(_, p)| matches!(p, Some(v) if *v == 0.0) || p.is_none())
        .map(|(l, _)| l.clone())
        .collect();
    if !undefined.is_empty() {
        return EightyPercent {
            min_ratio: None,
            pass: None,
            undefined,
        };
    }
    let defined: Vec<f64> = pprs.iter().flatten().copied().collect();
    if defined.len() < 2 {
        return EightyPercent {
            min_ratio: None,
            pass: None,
            undefined,
        };
    }
    let mut min_ratio = f64::INFINITY;
    for a in &defined {
        for b in &defined {
            if a != b || std::ptr::eq(a, b) {
                min_ratio = min_ratio.min(a / b);
            }
        }
    }
    EightyPercent {
        min_ratio: Some(min_ratio),
        pass: Some(min_ratio >= 0.8),
        undefined,
    }
}

// ---------------------------------------------------------------------------
// Conditional demographic parity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumDp {
    pub stratum: String,
    pub weight_share: f64,
    pub gap: Option<f64>,
    pub missing_groups: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdpResult {
    /// Weight-share average of per-stratum absolute gaps (defined strata,
    /// shares renormalised over them).
    pub mean_abs: Option<f64>,
    pub max_abs: Option<f64>,
    pub table: Vec<StratumDp>,
}

pub fn cdp_difference(
    yhat: &[u8],
    groups: &Groups,
    strata: &Groups,
    w: &[f64],
) -> Result<CdpResult> {
    let n = yhat.len();
    if groups.ids.len() != n || strata.ids.len() != n || w.len() != n {
        return Err(Error::LengthMismatch {
            left: groups.ids.len(),
            right: n,
        });
    }
    let total_w: f64 = w.iter().sum();
    let mut table = Vec::new();
    for (si, stratum) in strata.labels.iter().enumerate() {
        let idx: Vec<usize> = (0..n).filter(|i| strata.ids[*i] as usize == si).collect();
        if idx.is_empty() {
            continue;
        }
        let weight: f64 = idx.iter().map(|i| w[*i]).sum();
        // per-group acceptance restricted to the stratum
        let mut acc = vec![0.0; groups.n_groups()];
        let mut tot = vec![0.0; groups.n_groups()];
        for i in &idx {
            let g = groups.ids[*i] as usize;
            tot[g] += w[*i];
            if yhat[*i] == 1 {
                acc[g] += w[*i];
            }
        }
        let rates: Vec<Option<f64>> = acc.iter().zip(&tot).map(|(a, t)| rate(*a, *t)).collect();
        let missing: Vec<String> = groups
            .labels
            .iter()
            .zip(&rates)
            .filter(|(_, r)| r.is_none())
            .map(|(l, _)| l.clone())
            .collect();
        let defined: Vec<f64> = rates.iter().flatten().copied().collect();
        let gap = if defined.len() >= 2 {
            let mut max = 0.0f64;
            for i in 0..defined.len() {
                for j in i + 1..defined.len() {
                    max = max.max((defined[i] - defined[j]).abs());
                }
            }
            Some(max)
        } else {
            None
        };
        table.push(StratumDp {
            stratum: stratum.clone(),
            weight_share: weight / total_w,
            gap,
            missing_groups: missing,
        });
    }
    let defined: Vec<&StratumDp> = table.iter().filter(|s| s.gap.is_some()).collect();
    let (mean_abs, max_abs) = if defined.is_empty() {
        (None, None)
    } else {
        let share: f64 = defined.iter().map(|s| s.weight_share).sum();
        let mean = defined
            .iter()
            .map(|s| s.weight_share / share * s.gap.unwrap().abs())
            .sum::<f64>();
        let max = defined
            .iter()
            .map(|s| s.gap.unwrap().abs())
            .fold(0.0, f64::max);
        (Some(mean), Some(max))
    };
    Ok(CdpResult {
        mean_abs,
        max_abs,
        table,
    })
}

// ---------------------------------------------------------------------------
// Similarity-based (individual) metrics
// ---------------------------------------------------------------------------

/// Z-score columns over the evaluation rows; constant columns are dropped.
fn standardize(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let d = x[0].len();
    let mut keep = Vec::new();
    for j in 0..d {
        let mean = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
        if var > 0.0 {
            keep.push((j, mean, var.sqrt()));
        }
    }
    x.iter()
        .map(|r| keep.iter().map(|(j, m, s)| (r[*j] - m) / s).collect())
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// 1 minus the mean gap between each decision and the mean decision of its
/// k nearest neighbours (self excluded, Euclidean distance on z-scored
/// features, ties at the k-th distance broken by lowest row index).
pub fn consistency(x: &[Vec<f64>], yhat: &[u8], k: usize) -> Result<f64> {
    let n = x.len();
    if yhat.len() != n {
        return Err(Error::LengthMismatch {
            left: yhat.len(),
            right: n,
        });
    }
    if n <= k || k == 0 {
        return Err(Error::InvalidSchema(format!(
            "consistency needs n > k (n={n}, k={k})"
        )));
    }
    let z = standardize(x);
    let mut total_gap = 0.0;
    let mut dist_idx: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        dist_idx.clear();
        for j in 0..n {
            if j != i {
                dist_idx.push((sq_dist(&z[i], &z[j]), j));
            }
        }
        dist_idx.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let mean_nn = dist_idx[..k]
            .iter()
            .map(|(_, j)| f64::from(yhat[*j]))
            .sum::<f64>()
            / k as f64;
        total_gap += (f64::from(yhat[i]) - mean_nn).abs();
    }
    Ok(1.0 - total_gap / n as f64)
}

/// Cross-group decision difference weighted by feature-space similarity:
/// `(1/(n1*n0)) * sum_{i in g1, j in g0} exp(-dist(x_i,x_j)) * |yhat_i - yhat_j|`.
pub fn similarity_disparity(x: &[Vec<f64>], yhat: &[u8], groups: &Groups) -> Result<f64> {
    let n = x.len();
    if yhat.len() != n || groups.ids.len() != n {
        return Err(Error::LengthMismatch {
            left: yhat.len(),
            right: n,
        });
    }
    if groups.n_groups() != 2 {
        return Err(Error::NonBinarySensitive("similarity_disparity".into()));
    }
    let z = standardize(x);
    let g1: Vec<usize> = (0..n).filter(|i| groups.ids[*i] == 1).collect();
    let g0: Vec<usize> = (0..n).filter(|i| groups.ids[*i] == 0).collect();
    if g0.is_empty() || g1.is_empty() {
        let missing = if g0.is_empty() { 0 } else { 1 };
        return Err(Error::EmptyGroup(groups.labels[missing].clone()));
    }
    let mut sum = 0.0;
    for i in &g1 {
        for j in &g0 {
            let delta = (f64::from(yhat[*i]) - f64::from(yhat[*j])).abs();
            if delta > 0.0 {
                sum += (-sq_dist(&z[*i], &z[*j]).sqrt()).exp() * delta;
            }
        }
    }
    Ok(sum / (g1.len() as f64 * g0.len() as f64))
}

// ---------------------------------------------------------------------------
// Score-based metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceResult {
    pub labels: Vec<String>,
    pub per_group_mean: Vec<Option<f64>>,
    pub gap: Option<f64>,
    pub undefined: Vec<String>,
}

/// Mean score within Y=class per group (class balance); the gap is the
/// maximum pairwise absolute difference.
pub fn score_balance(
    scores: &[f64],
    y: &[u8],
    groups: &Groups,
    class: u8,
    w: &[f64],
) -> Result<BalanceResult> {
    let n = scores.len();
    if y.len() != n || groups.ids.len() != n || w.len() != n {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    let mut num = vec![0.0; groups.n_groups()];
    let mut den = vec![0.0; groups.n_groups()];
    for i in 0..n {
        if y[i] == class {
            let g = groups.ids[i] as usize;
            num[g] += w[i] * clamp_score(scores[i]);
            den[g] += w[i];
        }
    }
    let per_group_mean: Vec<Option<f64>> =
        num.iter().zip(&den).map(|(a, b)| rate(*a, *b)).collect();
    let res = GapResult::from_rates(groups.labels.clone(), per_group_mean.clone());
    Ok(BalanceResult {
        labels: groups.labels.clone(),
        per_group_mean,
        gap: res.max_abs,
        undefined: res.undefined,
    })
}

fn clamp_score(s: f64) -> f64 {
    s.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub mean_score: f64,
    pub positive_rate: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub group: String,
    /// Non-empty bins only.
    pub bins: Vec<CalibrationBin>,
    /// max over bins of |positive rate - mean score|.
    pub within_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub curves: Vec<CalibrationCurve>,
    /// max within-group miscalibration across groups.
    pub max_within_gap: Option<f64>,
    /// max cross-group positive-rate gap at equal bins (both non-empty).
    pub cross_gap: Option<f64>,
}

pub fn calibration_within_groups(
    scores: &[f64],
    y: &[u8],
    groups: &Groups,
    bins: usize,
    w: &[f64],
) -> Result<CalibrationResult> {
    let n = scores.len();
    if y.len() != n || groups.ids.len() != n || w.len() != n {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    if bins < 2 {
        return Err(Error::InvalidSchema("calibration needs bins >= 2".into()));
    }
    let k = groups.n_groups();
    let mut weight = vec![vec![0.0; bins]; k];
    let mut score_sum = vec![vec![0.0; bins]; k];
    let mut pos_sum = vec![vec![0.0; bins]; k];
    for i in 0..n {
        let s = clamp_score(scores[i]);
        let b = ((s * bins as f64).floor() as usize).min(bins - 1);
        let g = groups.ids[i] as usize;
        weight[g][b] += w[i];
        score_sum[g][b] += w[i] * s;
        pos_sum[g][b] += w[i] * f64::from(y[i]);
    }
    let mut curves = Vec::with_capacity(k);
    for g in 0..k {
        let mut gbins = Vec::new();
        let mut within: Option<f64> = None;
        for b in 0..bins {
            if weight[g][b] > 0.0 {
                let mean_score = score_sum[g][b] / weight[g][b];
                let positive_rate = pos_sum[g][b] / weight[g][b];
                let gap = (positive_rate - mean_score).abs();
                within = Some(within.map_or(gap, |x: f64| x.max(gap)));
                gbins.push(CalibrationBin {
                    lo: b as f64 / bins as f64,
                    hi: (b + 1) as f64 / bins as f64,
                    mean_score,
                    positive_rate,
                    weight: weight[g][b],
                });
            }
        }
        curves.push(CalibrationCurve {
            group: groups.labels[g].clone(),
            bins: gbins,
            within_gap: within,
        });
    }
    let max_within_gap = curves
        .iter()
        .filter_map(|c| c.within_gap)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        });
    let mut cross_gap: Option<f64> = None;
    for b in 0..bins {
        let rates: Vec<f64> = (0..k)
            .filter(|g| weight[*g][b] > 0.0)
            .map(|g| pos_sum[g][b] / weight[g][b])
            .collect();
        for i in 0..rates.len() {
            for j in i + 1..rates.len() {
                let gap = (rates[i] - rates[j]).abs();
                cross_gap = Some(cross_gap.map_or(gap, |x| x.max(gap)));
            }
        }
    }
    Ok(CalibrationResult {
        curves,
        max_within_gap,
        cross_gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub labels: Vec<String>,
    pub per_group: Vec<Option<f64>>,
    pub gap: Option<f64>,
    pub overall: Option<f64>,
    pub undefined: Vec<String>,
}

/// Weighted Mann-Whitney AUC, ties counted half.
fn weighted_auc(scores: &[f64], y: &[u8], w: &[f64], idx: &[usize]) -> Option<f64> {
    let mut order: Vec<usize> = idx.to_vec();
    order.sort_by(|a, b| scores[*a].partial_cmp(&scores[*b]).unwrap());
    let w_pos: f64 = idx.iter().filter(|i| y[**i] == 1).map(|i| w[*i]).sum();
    let w_neg: f64 = idx.iter().filter(|i| y[**i] == 0).map(|i| w[*i]).sum();
    if w_pos <= 0.0 || w_neg <= 0.0 {
        return None;
    }
    let mut neg_below = 0.0;
    let mut auc_num = 0.0;
    let mut at = 0;
    while at < order.len() {
        let mut end = at;
        while end < order.len() && scores[order[end]] == scores[order[at]] {
            end += 1;
        }
        let tied_neg: f64 = order[at..end]
            .iter()
            .filter(|i| y[**i] == 0)
            .map(|i| w[*i])
            .sum();
        let tied_pos_w: f64 = order[at..end]
            .iter()
            .filter(|i| y[**i] == 1)
            .map(|i| w[*i])
            .sum();
        auc_num += tied_pos_w * (neg_below + 0.5 * tied_neg);
        neg_below += tied_neg;
        at = end;
    }
    Some(auc_num / (w_pos * w_neg))
}

pub fn auc_by_group(scores: &[f64], y: &[u8], groups: &Groups, w: &[f64]) -> Result<AucResult> {
    let n = scores.len();
    if y.len() != n || groups.ids.len() != n || w.len() != n {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: n,
        });
    }
    let mut per_group = Vec::with_capacity(groups.n_groups());
    for g in 0..groups.n_groups() {
        let idx: Vec<usize> = (0..n).filter(|i| groups.ids[*i] as usize == g).collect();
        per_group.push(weighted_auc(scores, y, w, &idx));
    }
    let res = GapResult::from_rates(groups.labels.clone(), per_group.clone());
    let all: Vec<usize> = (0..n).collect();
    Ok(AucResult {
        labels: groups.labels.clone(),
        per_group,
        gap: res.max_abs,
        overall: weighted_auc(scores, y, w, &all),
        undefined: res.undefined,
    })
}

// ---------------------------------------------------------------------------
// Flip-based blindness audit
// ---------------------------------------------------------------------------

/// Mean decision change when the binary sensitive column is flipped and
/// nothing else. Zero for any model that does not read the column.
pub fn flip_sensitivity(
    model: &dyn Scorer,
    ds: &TabularDataset,
    s_column: &str,
    tau: f64,
) -> Result<f64> {
    let col = ds.require_column(s_column)?;
    let flipped_col = match &col.data {
        ColumnData::Categorical { ids, classes } => {
            if classes.len() != 2 {
                return Err(Error::NonBinarySensitive(s_column.to_string()));
            }
            let mut c = col.clone();
            c.data = ColumnData::Categorical {
                ids: ids.iter().map(|i| 1 - *i).collect(),
                classes: classes.clone(),
            };
            c
        }
        ColumnData::Numeric(values) => {
            if values.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(Error::NonBinarySensitive(s_column.to_string()));
            }
            let mut c = col.clone();
            c.data = ColumnData::Numeric(values.iter().map(|v| 1.0 - v).collect());
            c
        }
    };
    let flipped_cols = ds
        .columns()
        .iter()
        .map(|c| {
            if c.name() == s_column {
                flipped_col.clone()
            } else {
                c.clone()
            }
        })
        .collect();
    let flipped = TabularDataset::with_weights(flipped_cols, ds.weights().to_vec())?;
    let base = labels_at(&model.score(ds)?, tau);
    let alt = labels_at(&model.score(&flipped)?, tau);
    let changed: f64 = base.iter().zip(&alt).map(|(a, b)| f64::from(a != b)).sum();
    Ok(changed / base.len() as f64)
}

// ---------------------------------------------------------------------------
// Incompatibility diagnostic
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub pair: String,
    pub jointly_satisfiable: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncompatibilityReport {
    pub base_rates: Vec<f64>,
    pub labels: Vec<String>,
    pub max_base_rate_gap: f64,
    pub pairs: Vec<PairVerdict>,
}

/// Compare per-group base rates P(Y=1 | A) and flag the criterion pairs that
/// cannot hold together when they differ.
pub fn incompatibility_report(
    y: &[u8],
    groups: &Groups,
    w: &[f64],
    tolerance: f64,
) -> Result<IncompatibilityReport> {
    let n = y.len();
    if groups.ids.len() != n || w.len() != n {
        return Err(Error::LengthMismatch {
            left: groups.ids.len(),
            right: n,
        });
    }
    let k = groups.n_groups();
    let mut pos = vec![0.0; k];
    let mut tot = vec![0.0; k];
    for i in 0..n {
        let g = groups.ids[i] as usize;
        tot[g] += w[i];
        pos[g] += w[i] * f64::from(y[i]);
    }
    if let Some(empty) = tot.iter().position(|t| *t == 0.0) {
        return Err(Error::EmptyGroup(groups.labels[empty].clone()));
    }
    let base_rates: Vec<f64> = pos.iter().zip(&tot).map(|(p, t)| p / t).collect();
    let mut gap = 0.0f64;
    for i in 0..k {
        for j in i + 1..k {
            gap = gap.max((base_rates[i] - base_rates[j]).abs());
        }
    }
    let unequal = gap > tolerance;
    let verdict = |pair: &str, reason_unequal: &str| PairVerdict {
        pair: pair.to_string(),
        jointly_satisfiable: !unequal,
        reason: if unequal {
            reason_unequal.to_string()
        } else {
            "group base rates are equal; no obstruction".to_string()
        },
    };
    let pairs = vec![
        verdict(
            "independence-separation",
            "base rates differ: with a binary target dependent on both the score and the \
             sensitive attribute, separation and independence are incompatible",
        ),
        verdict(
            "independence-sufficiency",
            "base rates differ: sufficiency and independence cannot hold simultaneously \
             when the target depends on the sensitive attribute",
        ),
        verdict(
            "separation-sufficiency",
            "base rates differ: under strict positivity of the joint (A, S, Y) \
             distribution, separation and sufficiency are incompatible (positivity is \
             assumed, not verified, since score support is continuous)",
        ),
    ];
    Ok(IncompatibilityReport {
        base_rates,
        labels: groups.labels.clone(),
        max_base_rate_gap: gap,
        pairs,
    })
}

// ---------------------------------------------------------------------------
// Full report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset_id: String,
    pub model_id: String,
    pub sensitive: String,
    pub stratum: Option<String>,
    /// Distance convention for the similarity metrics.
    pub distance: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    /// Defined metric values under stable keys.
    pub values: BTreeMap<String, f64>,
    /// Metrics that could not be computed, with the reason.
    pub undefined: BTreeMap<String, String>,
    /// Per-group rate breakdowns per metric key.
    pub per_group: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MetricsReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn insert_gap(&mut self, key: &str, gap: &GapResult) {
        match gap.value() {
            Some(v) => {
                self.values.insert(key.to_string(), v);
            }
            None => {
                self.undefined.insert(
                    key.to_string(),
                    format!("undefined for groups: {}", gap.undefined.join(", ")),
                );
            }
        }
        let mut breakdown = BTreeMap::new();
        for (label, rate) in gap.labels.iter().zip(&gap.per_group) {
            if let Some(r) = rate {
                breakdown.insert(label.clone(), *r);
            }
        }
        if !breakdown.is_empty() {
            self.per_group.insert(key.to_string(), breakdown);
        }
    }

    pub fn to_text_table(&self) -> String {
        let mut rows = vec![vec!["metric".to_string(), "value".to_string()]];
        for (k, v) in &self.values {
            rows.push(vec![k.clone(), report::fmt(*v)]);
        }
        for (k, reason) in &self.undefined {
            rows.push(vec![k.clone(), format!("n/a ({reason})")]);
        }
        report::text_table(&rows)
    }
}

/// Options for [`evaluate_predictions`].
#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub tau: f64,
    pub knn_k: usize,
    pub calibration_bins: usize,
    /// The O(n^2) similarity metrics are skipped when false.
    pub with_similarity: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            tau: 0.5,
            knn_k: 5,
            calibration_bins: 10,
            with_similarity: false,
        }
    }
}

/// Assemble the full metric suite for one model's predictions on one dataset.
///
/// `x` (standardised internally) is only needed for the similarity metrics;
/// `scores` only for the score-based ones.
pub fn evaluate_predictions(
    meta: ReportMeta,
    y: &[u8],
    yhat: &[u8],
    scores: Option<&[f64]>,
    groups: &Groups,
    w: &[f64],
    strata: Option<&Groups>,
    x: Option<&[Vec<f64>]>,
    options: &EvalOptions,
) -> Result<MetricsReport> {
    let mut rep = MetricsReport {
        meta,
        ..Default::default()
    };
    rep.meta.distance = "euclidean on z-scored features".into();
    let conf = group_confusion(y, yhat, groups, w)?;
    for kind in [
        MetricKind::Dp,
        MetricKind::Eopp,
        MetricKind::Pe,
        MetricKind::Eodds,
        MetricKind::Pp,
        MetricKind::SuffNeg,
        MetricKind::Acc,
    ] {
        rep.insert_gap(kind.key(), &group_metric_difference(kind, &conf));
    }
    // acceptance ratio flavour of DP + the 80% rule
    let dp = group_metric_difference(MetricKind::Dp, &conf);
    let defined: Vec<f64> = dp.per_group.iter().flatten().copied().collect();
    if defined.len() >= 2 {
        let max = defined.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let min = defined.iter().fold(f64::INFINITY, |a, b| a.min(*b));
        if max > 0.0 {
            rep.values.insert("dp_ratio".into(), min / max);
        }
    }
    let rule = eighty_percent_check(&conf);
    match rule.min_ratio {
        Some(r) => {
            rep.values.insert("rule_80_ratio".into(), r);
        }
        None => {
            rep.undefined.insert(
                "rule_80_ratio".into(),
                format!("zero acceptance in groups: {}", rule.undefined.join(", ")),
            );
        }
    }
    // overall performance
    let (mut tp, mut fp, mut tn, mut fneg) = (0.0, 0.0, 0.0, 0.0);
    for c in &conf.cells {
        tp += c.tp;
        fp += c.fp;
        tn += c.tn;
        fneg += c.fn_;
    }
    let total = tp + fp + tn + fneg;
    rep.values.insert("accuracy".into(), (tp + tn) / total);
    rep.values.insert("positive_rate".into(), (tp + fp) / total);
    if tp + fp > 0.0 {
        rep.values.insert("precision".into(), tp / (tp + fp));
    }
    if tp + fneg > 0.0 {
        rep.values.insert("recall".into(), tp / (tp + fneg));
    }
    if 2.0 * tp + fp + fneg > 0.0 {
        rep.values
            .insert("f1".into(), 2.0 * tp / (2.0 * tp + fp + fneg));
    }

    if let Some(strata) = strata {
        let cdp = cdp_difference(yhat, groups, strata, w)?;
        if let (Some(mean), Some(max)) = (cdp.mean_abs, cdp.max_abs) {
            rep.values.insert("cdp_mean".into(), mean);
            rep.values.insert("cdp_max".into(), max);
        } else {
            rep.undefined
                .insert("cdp_mean".into(), "no stratum with two groups".into());
        }
    }

    if let Some(scores) = scores {
        let pos = score_balance(scores, y, groups, 1, w)?;
        match pos.gap {
            Some(g) => {
                rep.values.insert("balance_pos_gap".into(), g);
            }
            None => {
                rep.undefined
                    .insert("balance_pos_gap".into(), "a group lacks positives".into());
            }
        }
        let neg = score_balance(scores, y, groups, 0, w)?;
        match neg.gap {
            Some(g) => {
                rep.values.insert("balance_neg_gap".into(), g);
            }
            None => {
                rep.undefined
                    .insert("balance_neg_gap".into(), "a group lacks negatives".into());
            }
        }
        let cal = calibration_within_groups(scores, y, groups, options.calibration_bins, w)?;
        if let Some(g) = cal.max_within_gap {
            rep.values.insert("calibration_gap".into(), g);
        }
        let auc = auc_by_group(scores, y, groups, w)?;
        if let Some(a) = auc.overall {
            rep.values.insert("auc".into(), a);
        }
        match auc.gap {
            Some(g) => {
                rep.values.insert("auc_gap".into(), g);
            }
            None => {
                rep.undefined.insert(
                    "auc_gap".into(),
                    format!("groups without both classes: {}", auc.undefined.join(", ")),
                );
            }
        }
    }

    if let Some(x) = x {
        if options.with_similarity {
            rep.values
                .insert("consistency".into(), consistency(x, yhat, options.knn_k)?);
            if groups.n_groups() == 2 {
                rep.values.insert(
                    "similarity_disparity".into(),
                    similarity_disparity(x, yhat, groups)?,
                );
            }
        }
    }
    Ok(rep)
}

/// Numeric feature matrix (row major) of a dataset's feature columns.
pub fn feature_matrix(ds: &TabularDataset) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut names = Vec::new();
    let mut cols: Vec<&[f64]> = Vec::new();
    for c in ds.columns() {
        if c.schema.role != Role::Feature {
            continue;
        }
        match c.as_numeric() {
            Some(v) => {
                names.push(c.name().to_string());
                cols.push(v);
            }
            None => return Err(Error::UnencodedData(c.name().to_string())),
        }
    }
    let rows = (0..ds.n_rows())
        .map(|r| cols.iter().map(|c| c[r]).collect())
        .collect();
    Ok((names, rows))
}
