//! Per-group surrogate rule extraction and worldview evidence.
//!
//! One unconstrained tree is fitted inside each sensitive class so minority
//! decision logic is not drowned out; its positive-decision leaves become
//! rules, each rule is then applied to every group, and the per-group
//! positive-rate gaps of the rules are the evidence: small gaps fit the
//! what-you-see-is-what-you-get reading of the data, large gaps point at
//! direct discrimination and the we-are-all-equal reading.

use crate::dataset::TabularDataset;
use crate::error::{Error, Result};
use crate::fftree::{self, FFTreeModel, GrowthConfig, Node};
use crate::report;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    /// value > threshold
    Gt,
    /// value <= threshold
    Le,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub op: Op,
    pub threshold: f64,
}

impl Condition {
    fn holds(&self, v: f64) -> bool {
        match self.op {
            Op::Gt => v > self.threshold,
            Op::Le => v <= self.threshold,
        }
    }

    fn render(&self) -> String {
        let op = match self.op {
            Op::Gt => ">",
            Op::Le => "<=",
        };
        format!("{} {} {}", self.feature, op, report::fmt(self.threshold))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRule {
    pub origin_group: String,
    pub conditions: Vec<Condition>,
    pub leaf_id: usize,
    pub train_support: f64,
    pub train_pos_rate: f64,
}

impl DecisionRule {
    pub fn render(&self) -> String {
        let conds = if self.conditions.is_empty() {
            "TRUE".to_string()
        } else {
            self.conditions
                .iter()
                .map(Condition::render)
                .collect::<Vec<_>>()
                .join(" AND ")
        };
        format!("IF {conds} THEN positive")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub max_leaves: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Minimum rows a sensitive class needs before tracing.
    pub min_rows: usize,
    /// Emit one rule per leaf instead of positive-decision leaves only.
    pub all_leaves: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            max_leaves: 8,
            max_depth: 4,
            min_samples_leaf: 20,
            min_rows: 50,
            all_leaves: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupSurrogate {
    pub group: String,
    pub rules: Vec<DecisionRule>,
    pub accuracy: f64,
    pub f1: f64,
    #[serde(skip)]
    pub model: Option<FFTreeModel>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceResult {
    pub per_group: Vec<GroupSurrogate>,
}

fn leaf_rules(model: &FFTreeModel, origin: &str, all_leaves: bool) -> Vec<DecisionRule> {
    let mut rules = Vec::new();
    let mut stack: Vec<(usize, Vec<Condition>)> = vec![(0, Vec::new())];
    while let Some((at, path)) = stack.pop() {
        match &model.nodes[at] {
            Node::Leaf { pos_rate, weight } => {
                if all_leaves || *pos_rate > 0.5 {
                    rules.push(DecisionRule {
                        origin_group: origin.to_string(),
                        conditions: simplify(&path),
                        leaf_id: at,
                        train_support: *weight,
                        train_pos_rate: *pos_rate,
                    });
                }
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            } => {
                let mut l = path.clone();
                l.push(Condition {
                    feature: feature.clone(),
                    op: Op::Le,
                    threshold: *threshold,
                });
                let mut r = path;
                r.push(Condition {
                    feature: feature.clone(),
                    op: Op::Gt,
                    threshold: *threshold,
                });
                stack.push((*left, l));
                stack.push((*right, r));
            }
        }
    }
    rules.sort_by_key(|r| r.leaf_id);
    rules
}

/// Merge repeated tests on one feature: the tightest lower and upper bound.
fn simplify(path: &[Condition]) -> Vec<Condition> {
    let mut out: Vec<Condition> = Vec::new();
    for c in path {
        if let Some(existing) = out
            .iter_mut()
            .find(|e| e.feature == c.feature && e.op == c.op)
        {
            existing.threshold = match c.op {
                Op::Gt => existing.threshold.max(c.threshold),
                Op::Le => existing.threshold.min(c.threshold),
            };
        } else {
            out.push(c.clone());
        }
    }
    out
}

/// Fit an unconstrained surrogate tree inside each sensitive class and
/// extract its positive-decision rules.
pub fn trace(
    ds: &TabularDataset,
    sensitive: &str,
    config: &SurrogateConfig,
) -> Result<TraceResult> {
    let groups = ds.groups(sensitive)?;
    let y = ds.target()?;
    let mut per_group = Vec::new();
    for (gi, label) in groups.labels.iter().enumerate() {
        let idx: Vec<usize> = (0..ds.n_rows())
            .filter(|i| groups.ids[*i] as usize == gi)
            .collect();
        if idx.len() < config.min_rows {
            return Err(Error::GroupTooSmall {
                group: label.clone(),
                rows: idx.len(),
                min: config.min_rows,
            });
        }
        let sub = ds.select_rows(&idx)?;
        let growth = GrowthConfig {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
            min_samples_split: 2 * config.min_samples_leaf,
            min_group_count: 1,
            max_leaves: Some(config.max_leaves),
        };
        let model = fftree::fit(&sub, &[], &growth)?;
        let yhat = model.predict_label(&sub, 0.5)?;
        let (mut tp, mut tn, mut fp, mut fneg) = (0.0, 0.0, 0.0, 0.0);
        for (k, i) in idx.iter().enumerate() {
            match (y[*i], yhat[k]) {
                (1, 1) => tp += 1.0,
                (0, 0) => tn += 1.0,
                (0, 1) => fp += 1.0,
                _ => fneg += 1.0,
            }
        }
        let accuracy = (tp + tn) / idx.len() as f64;
        let f1 = if 2.0 * tp + fp + fneg > 0.0 {
            2.0 * tp / (2.0 * tp + fp + fneg)
        } else {
            0.0
        };
        per_group.push(GroupSurrogate {
            group: label.clone(),
            rules: leaf_rules(&model, label, config.all_leaves),
            accuracy,
            f1,
            model: Some(model),
        });
    }
    Ok(TraceResult { per_group })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleContrast {
    pub rule: DecisionRule,
    pub group_labels: Vec<String>,
    /// Weighted count of rows satisfying the rule within each group.
    pub sizes: Vec<f64>,
    /// Weighted positive rate among the satisfiers; None for empty groups.
    pub priors: Vec<Option<f64>>,
    /// Max pairwise |prior difference| over groups with defined priors.
    pub max_delta: Option<f64>,
}

/// Apply every rule to every group of the dataset.
pub fn g_contrast(
    rules: &[DecisionRule],
    ds: &TabularDataset,
    sensitive: &str,
) -> Result<Vec<RuleContrast>> {
    let groups = ds.groups(sensitive)?;
    let y = ds.target()?;
    let w = ds.weights();
    // resolve feature columns once
    let mut contrasts = Vec::with_capacity(rules.len());
    for rule in rules {
        let views: Vec<(&[f64], &Condition)> = rule
            .conditions
            .iter()
            .map(|c| {
                let col = ds
                    .column(&c.feature)
                    .ok_or_else(|| Error::UnknownColumn(c.feature.clone()))?;
                col.as_numeric()
                    .map(|v| (v, c))
                    .ok_or_else(|| Error::UnknownColumn(c.feature.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        let k = groups.n_groups();
        let mut size = vec![0.0; k];
        let mut pos = vec![0.0; k];
        for i in 0..ds.n_rows() {
            if views.iter().all(|(v, c)| c.holds(v[i])) {
                let g = groups.ids[i] as usize;
                size[g] += w[i];
                pos[g] += w[i] * f64::from(y[i]);
            }
        }
        let priors: Vec<Option<f64>> = size
            .iter()
            .zip(&pos)
            .map(|(s, p)| if *s > 0.0 { Some(p / s) } else { None })
            .collect();
        let defined: Vec<f64> = priors.iter().flatten().copied().collect();
        let max_delta = if defined.len() >= 2 {
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
        contrasts.push(RuleContrast {
            rule: rule.clone(),
            group_labels: groups.labels.clone(),
            sizes: size,
            priors,
            max_delta,
        });
    }
    Ok(contrasts)
}

/// Rules in "IF ... THEN positive" form with per-group size and prior.
pub fn contrast_table(contrasts: &[RuleContrast]) -> String {
    let mut rows = Vec::new();
    let mut header = vec!["rule".to_string(), "origin".to_string()];
    if let Some(first) = contrasts.first() {
        for label in &first.group_labels {
            header.push(format!("size[{label}]"));
            header.push(format!("prior[{label}]"));
        }
    }
    header.push("\u{394}prior".to_string());
    rows.push(header);
    for c in contrasts {
        let mut row = vec![c.rule.render(), c.rule.origin_group.clone()];
        for (size, prior) in c.sizes.iter().zip(&c.priors) {
            row.push(format!("{size:.0}"));
            row.push(report::fmt_opt(*prior));
        }
        row.push(report::fmt_opt(c.max_delta));
        rows.push(row);
    }
    report::text_table(&rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WorldviewClass {
    Wysiwyg,
    Wae,
    Undefined,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuleVerdict {
    pub rule: String,
    pub origin_group: String,
    pub delta: Option<f64>,
    pub total_size: f64,
    pub class: WorldviewClass,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorldviewReport {
    pub threshold: f64,
    pub min_size: usize,
    pub rules: Vec<RuleVerdict>,
    /// Size-weighted share of evidence per worldview; undefined rules are
    /// excluded from the numerators, so the shares sum to at most one.
    pub wysiwyg_share: f64,
    pub wae_share: f64,
    pub max_delta: Option<f64>,
    pub summary: Vec<String>,
    /// (group, accuracy, f1) carried over from the trace step.
    pub surrogate_quality: Vec<(String, f64, f64)>,
}

/// Classify each contrasted rule and aggregate the evidence.
pub fn evaluate_worldview(
    contrasts: &[RuleContrast],
    threshold: f64,
    min_size: usize,
) -> Result<WorldviewReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidSchema(format!(
            "threshold {threshold} out of (0,1)"
        )));
    }
    let mut rules = Vec::with_capacity(contrasts.len());
    let mut total_size = 0.0;
    let mut wysiwyg_size = 0.0;
    let mut wae_size = 0.0;
    let mut max_delta: Option<f64> = None;
    for c in contrasts {
        // groups entering the comparison must carry at least min_size rows
        let eligible: Vec<f64> = c
            .sizes
            .iter()
            .zip(&c.priors)
            .filter(|(s, p)| **s >= min_size as f64 && p.is_some())
            .map(|(_, p)| p.unwrap())
            .collect();
        let delta = if eligible.len() >= 2 {
            let mut max = 0.0f64;
            for i in 0..eligible.len() {
                for j in i + 1..eligible.len() {
                    max = max.max((eligible[i] - eligible[j]).abs());
                }
            }
            Some(max)
        } else {
            None
        };
        let size: f64 = c.sizes.iter().sum();
        total_size += size;
        let class = match delta {
            Some(d) if d <= threshold => {
                wysiwyg_size += size;
                WorldviewClass::Wysiwyg
            }
            Some(_) => {
                wae_size += size;
                WorldviewClass::Wae
            }
            None => WorldviewClass::Undefined,
        };
        if let Some(d) = delta {
            max_delta = Some(max_delta.map_or(d, |m| m.max(d)));
        }
        rules.push(RuleVerdict {
            rule: c.rule.render(),
            origin_group: c.rule.origin_group.clone(),
            delta,
            total_size: size,
            class,
        });
    }
    let (wysiwyg_share, wae_share) = if total_size > 0.0 {
        (wysiwyg_size / total_size, wae_size / total_size)
    } else {
        (0.0, 0.0)
    };
    let mut summary = Vec::new();
    if rules.is_empty() {
        summary.push("no evidence: the contrast list is empty".to_string());
    } else if wysiwyg_share == 0.0 && wae_share == 0.0 {
        summary.push("no evidence: every rule lacked two groups of sufficient size".to_string());
    } else {
        let dominant = if wysiwyg_share >= wae_share {
            "WYSIWYG"
        } else {
            "WAE"
        };
        summary.push(format!(
            "evidence predominantly supports the {dominant} worldview \
             (WYSIWYG share {:.2}, WAE share {:.2})",
            wysiwyg_share, wae_share
        ));
        let counter_class = if dominant == "WYSIWYG" {
            WorldviewClass::Wae
        } else {
            WorldviewClass::Wysiwyg
        };
        let counter = rules
            .iter()
            .filter(|r| r.class == counter_class)
            .max_by(|a, b| a.total_size.partial_cmp(&b.total_size).unwrap());
        match counter {
            Some(r) => summary.push(format!(
                "strongest counter-evidence: {} (prior gap {}, size {:.0})",
                r.rule,
                report::fmt_opt(r.delta),
                r.total_size
            )),
            None => summary.push("no counter-evidence among sized rules".to_string()),
        }
    }
    Ok(WorldviewReport {
        threshold,
        min_size,
        rules,
        wysiwyg_share,
        wae_share,
        max_delta,
        summary,
        surrogate_quality: Vec::new(),
    })
}

impl WorldviewReport {
    pub fn to_text(&self) -> String {
        let mut rows = vec![vec![
            "rule".to_string(),
            "origin".to_string(),
            "Δprior".to_string(),
            "size".to_string(),
            "evidence".to_string(),
        ]];
        for r in &self.rules {
            rows.push(vec![
                r.rule.clone(),
                r.origin_group.clone(),
                report::fmt_opt(r.delta),
                format!("{:.0}", r.total_size),
                format!("{:?}", r.class).to_uppercase(),
            ]);
        }
        let mut out = report::text_table(&rows);
        for (group, acc, f1) in &self.surrogate_quality {
            out.push_str(&format!(
                "surrogate[{group}]: accuracy {:.3}, f1 {:.3}{}\n",
                acc,
                f1,
                if *acc < 0.7 {
                    "  (low surrogate quality)"
                } else {
                    ""
                }
            ));
        }
        for line in &self.summary {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Run the three steps end to end on one dataset.
pub fn fairview(
    ds: &TabularDataset,
    sensitive: &str,
    config: &SurrogateConfig,
    threshold: f64,
    min_size: usize,
) -> Result<(TraceResult, Vec<RuleContrast>, WorldviewReport)> {
    let traced = trace(ds, sensitive, config)?;
    let rules: Vec<DecisionRule> = traced
        .per_group
        .iter()
        .flat_map(|g| g.rules.iter().cloned())
        .collect();
    let contrasts = g_contrast(&rules, ds, sensitive)?;
    let mut report = evaluate_worldview(&contrasts, threshold, min_size)?;
    report.surrogate_quality = traced
        .per_group
        .iter()
        .map(|g| (g.group.clone(), g.accuracy, g.f1))
        .collect();
    Ok((traced, contrasts, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Column, Role};

    /// Two groups, outcome driven purely by x > 5 (indirect disparity only).
    fn fair_ds(n_per: usize) -> TabularDataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for i in 0..n_per {
            // group a sits higher on x but the rule is shared
            let xa = (i % 10) as f64 + 1.0;
            x.push(xa);
            y.push(f64::from(xa > 5.0));
            g.push("a");
            let xb = (i % 8) as f64;
            x.push(xb);
            y.push(f64::from(xb > 5.0));
            g.push("b");
        }
        TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, x),
            Column::numeric("y", Role::Target, y),
            Column::categorical("s", Role::Sensitive, &g),
        ])
        .unwrap()
    }

    /// Outcome depends on the group directly: same x, shifted rule.
    fn direct_ds(n_per: usize) -> TabularDataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut g = Vec::new();
        for i in 0..n_per {
            let xv = (i % 10) as f64;
            x.push(xv);
            y.push(f64::from(xv > 3.0));
            g.push("a");
            x.push(xv);
            y.push(f64::from(xv > 7.0));
            g.push("b");
        }
        TabularDataset::new(vec![
            Column::numeric("x", Role::Feature, x),
            Column::numeric("y", Role::Target, y),
            Column::categorical("s", Role::Sensitive, &g),
        ])
        .unwrap()
    }

    fn config() -> SurrogateConfig {
        SurrogateConfig {
            max_leaves: 4,
            max_depth: 3,
            min_samples_leaf: 5,
            min_rows: 20,
            all_leaves: false,
        }
    }

    #[test]
    fn trace_builds_one_surrogate_per_class() {
        let ds = fair_ds(100);
        let traced = trace(&ds, "s", &config()).unwrap();
        assert_eq!(traced.per_group.len(), 2);
        for g in &traced.per_group {
            assert!(g.accuracy > 0.95, "surrogate accuracy {}", g.accuracy);
            assert!(!g.rules.is_empty());
            for r in &g.rules {
                assert!(r.train_pos_rate > 0.5);
            }
        }
    }

    #[test]
    fn trace_rejects_small_groups() {
        let ds = fair_ds(5);
        let err = trace(&ds, "s", &config()).unwrap_err();
        assert_eq!(err.name(), "GroupTooSmall");
    }

    #[test]
    fn own_group_prior_matches_leaf_rate() {
        let ds = fair_ds(100);
        let traced = trace(&ds, "s", &config()).unwrap();
        let g0 = &traced.per_group[0];
        let contrasts = g_contrast(&g0.rules, &ds, "s").unwrap();
        for (rule, contrast) in g0.rules.iter().zip(&contrasts) {
            let own = contrast
                .group_labels
                .iter()
                .position(|l| *l == rule.origin_group)
                .unwrap();
            assert!(
                (contrast.priors[own].unwrap() - rule.train_pos_rate).abs() < 1e-12,
                "prior {:?} vs leaf rate {}",
                contrast.priors[own],
                rule.train_pos_rate
            );
        }
    }

    #[test]
    fn unmatched_rule_has_empty_size() {
        let ds = fair_ds(50);
        let rule = DecisionRule {
            origin_group: "a".into(),
            conditions: vec![Condition {
                feature: "x".into(),
                op: Op::Gt,
                threshold: 99.0,
            }],
            leaf_id: 0,
            train_support: 0.0,
            train_pos_rate: 1.0,
        };
        let contrasts = g_contrast(&[rule], &ds, "s").unwrap();
        assert_eq!(contrasts[0].sizes, vec![0.0, 0.0]);
        assert_eq!(contrasts[0].priors, vec![None, None]);
        assert!(contrasts[0].max_delta.is_none());
    }

    #[test]
    fn unknown_column_errors() {
        let ds = fair_ds(50);
        let rule = DecisionRule {
            origin_group: "a".into(),
            conditions: vec![Condition {
                feature: "zz".into(),
                op: Op::Gt,
                threshold: 0.0,
            }],
            leaf_id: 0,
            train_support: 0.0,
            train_pos_rate: 1.0,
        };
        assert_eq!(
            g_contrast(&[rule], &ds, "s").unwrap_err().name(),
            "UnknownColumn"
        );
    }

    #[test]
    fn shared_rule_data_reads_wysiwyg() {
        let ds = fair_ds(200);
        let (_, _, report) = fairview(&ds, "s", &config(), 0.05, 10).unwrap();
        assert!(
            report.wysiwyg_share > 0.9,
            "wysiwyg share {}",
            report.wysiwyg_share
        );
        assert!(report.summary[0].contains("WYSIWYG"));
    }

    #[test]
    fn group_dependent_rule_reads_wae() {
        let ds = direct_ds(200);
        let (_, _, report) = fairview(&ds, "s", &config(), 0.05, 10).unwrap();
        assert!(report.wae_share > 0.5, "wae share {}", report.wae_share);
        assert!(report.max_delta.unwrap() > 0.3);
        assert!(report.summary[0].contains("WAE"));
    }

    #[test]
    fn relabeling_groups_leaves_worldview_unchanged() {
        let ds = direct_ds(100);
        let (_, contrasts, report) = fairview(&ds, "s", &config(), 0.05, 10).unwrap();
        // swap the group axis of the contrasts: deltas invariant
        let swapped: Vec<RuleContrast> = contrasts
            .iter()
            .map(|c| RuleContrast {
                rule: c.rule.clone(),
                group_labels: c.group_labels.iter().rev().cloned().collect(),
                sizes: c.sizes.iter().rev().copied().collect(),
                priors: c.priors.iter().rev().copied().collect(),
                max_delta: c.max_delta,
            })
            .collect();
        let report2 = evaluate_worldview(&swapped, 0.05, 10).unwrap();
        assert_eq!(report.wysiwyg_share, report2.wysiwyg_share);
        assert_eq!(report.wae_share, report2.wae_share);
        for (a, b) in report.rules.iter().zip(&report2.rules) {
            assert_eq!(a.class, b.class);
            assert_eq!(a.delta, b.delta);
        }
    }

    #[test]
    fn single_group_all_undefined() {
        let contrasts = vec![RuleContrast {
            rule: DecisionRule {
                origin_group: "a".into(),
                conditions: Vec::new(),
                leaf_id: 0,
                train_support: 10.0,
                train_pos_rate: 0.8,
            },
            group_labels: vec!["a".into()],
            sizes: vec![50.0],
            priors: vec![Some(0.8)],
            max_delta: None,
        }];
        let report = evaluate_worldview(&contrasts, 0.05, 10).unwrap();
        assert_eq!(report.rules[0].class, WorldviewClass::Undefined);
        assert_eq!(report.wysiwyg_share, 0.0);
        assert!(report.summary[0].contains("no evidence"));
    }

    #[test]
    fn empty_contrasts_report() {
        let report = evaluate_worldview(&[], 0.05, 10).unwrap();
        assert!(report.summary[0].contains("no evidence"));
        assert_eq!(report.wysiwyg_share + report.wae_share, 0.0);
    }

    #[test]
    fn threshold_domain_checked() {
        assert!(evaluate_worldview(&[], 0.0, 10).is_err());
        assert!(evaluate_worldview(&[], 1.0, 10).is_err());
    }
}
