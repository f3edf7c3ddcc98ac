//! Fairness-constrained decision tree.
//!
//! Greedy entropy induction where every candidate split must satisfy the
//! configured fairness constraints locally: the split's provisional
//! prediction assigns the positive label to the branch with the higher
//! weighted positive rate, the constraint gap is computed over groups
//! present at the node, and candidates whose gap exceeds delta have their
//! information gain forced to zero. Sensitive columns are never tested, so
//! blindness holds structurally, and because every split is individually
//! compliant the tree can be pruned without losing fairness.

use crate::dataset::{ColumnData, Groups, Role, TabularDataset};
use crate::error::{Error, Result};
use crate::metrics::Scorer;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Dp,
    Pp,
    Eopp,
    Pe,
}

impl Criterion {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dp" => Ok(Criterion::Dp),
            "pp" => Ok(Criterion::Pp),
            "eopp" => Ok(Criterion::Eopp),
            "pe" => Ok(Criterion::Pe),
            other => Err(Error::BadConfig(format!("unknown criterion '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessConstraint {
    pub criterion: Criterion,
    pub sensitive: String,
    pub delta: f64,
}

impl FairnessConstraint {
    pub fn new(criterion: Criterion, sensitive: impl Into<String>, delta: f64) -> Self {
        Self {
            criterion,
            sensitive: sensitive.into(),
            delta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::BadConfig(format!(
                "delta {} out of [0,1]",
                self.delta
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    /// Rows a group needs at a node before it enters a constraint gap.
    pub min_group_count: usize,
    /// Upper bound on leaves; the weakest splits are pruned back when the
    /// depth-first growth overshoots. None = unbounded.
    pub max_leaves: Option<usize>,
}

impl Default for GrowthConfig {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_leaf: 50,
            min_samples_split: 100,
            min_group_count: 1,
            max_leaves: None,
        }
    }
}

impl GrowthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_split < 2 * self.min_samples_leaf {
            return Err(Error::BadConfig(
                "min_samples_split must be >= 2 * min_samples_leaf".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(Error::BadConfig("max_depth must be >= 1".into()));
        }
        Ok(())
    }
}

/// Shannon entropy (base 2) of a binary count pair, with 0*log(0) = 0.
fn entropy(pos: f64, neg: f64) -> f64 {
    let total = pos + neg;
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for c in [pos, neg] {
        if c > 0.0 {
            let p = c / total;
            h -= p * p.log2();
        }
    }
    h
}

/// Entropy reduction of a binary split, in bits.
pub fn information_gain(parent: (f64, f64), left: (f64, f64), right: (f64, f64)) -> Result<f64> {
    let eps = 1e-9;
    if (left.0 + right.0 - parent.0).abs() > eps || (left.1 + right.1 - parent.1).abs() > eps {
        return Err(Error::CountMismatch);
    }
    let n = parent.0 + parent.1;
    if n <= 0.0 {
        return Err(Error::CountMismatch);
    }
    let nl = left.0 + left.1;
    let nr = right.0 + right.1;
    Ok(entropy(parent.0, parent.1)
        - nl / n * entropy(left.0, left.1)
        - nr / n * entropy(right.0, right.1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub feature: String,
    /// Rows with value > threshold take the right branch. Indicator columns
    /// use threshold 0.5, i.e. the `== 1` test.
    pub threshold: f64,
    pub ig: f64,
    /// Evaluated constraint gaps, None where undefined (vacuously satisfied).
    pub constraint_values: Vec<Option<f64>>,
    /// Which branch the local prediction marks positive.
    pub positive_branch: Branch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: String,
        threshold: f64,
        left: usize,
        right: usize,
        weight: f64,
        ig: f64,
        constraint_values: Vec<Option<f64>>,
        positive_branch: Branch,
    },
    Leaf {
        pos_rate: f64,
        weight: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "wire::ModelWire", try_from = "wire::ModelWire")]
pub struct FFTreeModel {
    pub constraints: Vec<FairnessConstraint>,
    pub config: GrowthConfig,
    /// Feature columns the tree may read, in dataset order.
    pub features: Vec<String>,
    /// Name of an encoding map file this model expects, if any.
    pub encoding_ref: Option<String>,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

/// On-disk model layout: a `meta` block plus a flat node table with explicit
/// ids. Round-trips bit-exactly.
mod wire {
    use super::{Branch, FFTreeModel, FairnessConstraint, GrowthConfig, Node};
    use serde::{Deserialize, Serialize};

    #[derive(Serialize, Deserialize)]
    pub struct MetaWire {
        pub constraints: Vec<FairnessConstraint>,
        pub config: GrowthConfig,
        pub features: Vec<String>,
        pub encoding_ref: Option<String>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct NodeWire {
        pub id: usize,
        pub kind: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub feature: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub threshold: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub left: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub right: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub pos_rate: Option<f64>,
        pub weight: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub ig: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub constraint_values: Option<Vec<Option<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none")]
        pub positive_branch: Option<Branch>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct ModelWire {
        pub meta: MetaWire,
        pub nodes: Vec<NodeWire>,
    }

    impl From<FFTreeModel> for ModelWire {
        fn from(model: FFTreeModel) -> Self {
            let nodes = model
                .nodes
                .iter()
                .enumerate()
                .map(|(id, node)| match node {
                    Node::Leaf { pos_rate, weight } => NodeWire {
                        id,
                        kind: "leaf".into(),
                        feature: None,
                        threshold: None,
                        left: None,
                        right: None,
                        pos_rate: Some(*pos_rate),
                        weight: *weight,
                        ig: None,
                        constraint_values: None,
                        positive_branch: None,
                    },
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        weight,
                        ig,
                        constraint_values,
                        positive_branch,
                    } => NodeWire {
                        id,
                        kind: "split".into(),
                        feature: Some(feature.clone()),
                        threshold: Some(*threshold),
                        left: Some(*left),
                        right: Some(*right),
                        pos_rate: None,
                        weight: *weight,
                        ig: Some(*ig),
                        constraint_values: Some(constraint_values.clone()),
                        positive_branch: Some(*positive_branch),
                    },
                })
                .collect();
            ModelWire {
                meta: MetaWire {
                    constraints: model.constraints,
                    config: model.config,
                    features: model.features,
                    encoding_ref: model.encoding_ref,
                },
                nodes,
            }
        }
    }

    impl TryFrom<ModelWire> for FFTreeModel {
        type Error = String;

        fn try_from(wire: ModelWire) -> Result<Self, String> {
            let count = wire.nodes.len();
            let mut nodes = vec![None; count];
            for n in wire.nodes {
                if n.id >= count {
                    return Err(format!("node id {} out of range", n.id));
                }
                let node = match n.kind.as_str() {
                    "leaf" => Node::Leaf {
                        pos_rate: n.pos_rate.ok_or("leaf without pos_rate")?,
                        weight: n.weight,
                    },
                    "split" => Node::Split {
                        feature: n.feature.ok_or("split without feature")?,
                        threshold: n.threshold.ok_or("split without threshold")?,
                        left: n.left.ok_or("split without left")?,
                        right: n.right.ok_or("split without right")?,
                        weight: n.weight,
                        ig: n.ig.unwrap_or(0.0),
                        constraint_values: n.constraint_values.unwrap_or_default(),
                        positive_branch: n.positive_branch.unwrap_or(Branch::Right),
                    },
                    other => return Err(format!("unknown node kind '{other}'")),
                };
                if nodes[n.id].replace(node).is_some() {
                    return Err(format!("duplicate node id {}", n.id));
                }
            }
            let nodes: Vec<Node> = nodes
                .into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or("missing node ids")?;
            for node in &nodes {
                if let Node::Split { left, right, .. } = node {
                    if *left >= count || *right >= count {
                        return Err("child id out of range".into());
                    }
                }
            }
            Ok(FFTreeModel {
                constraints: wire.meta.constraints,
                config: wire.meta.config,
                features: wire.meta.features,
                encoding_ref: wire.meta.encoding_ref,
                nodes,
            })
        }
    }
}

struct FitContext<'a> {
    features: Vec<(&'a str, &'a [f64])>,
    y: Vec<u8>,
    w: &'a [f64],
    /// Group vectors per constraint, aligned with `constraints`.
    constraint_groups: Vec<Groups>,
    constraints: &'a [FairnessConstraint],
    config: &'a GrowthConfig,
}

/// Local constraint gap for a proposed bipartition of the node rows.
///
/// The provisional prediction assigns 1 to the branch with the higher
/// weighted positive rate (ties: more positives, then left). Groups with
/// fewer than `min_group_count` rows at the node are excluded; with fewer
/// than two eligible groups or all denominators empty the value is
/// undefined and the constraint is vacuously satisfied.
pub fn local_constraint_value(
    go_right: &[bool],
    criterion: Criterion,
    y: &[u8],
    w: &[f64],
    groups: &Groups,
    rows: &[usize],
    min_group_count: usize,
) -> Option<f64> {
    let mut left = (0.0, 0.0); // (pos, neg) weighted
    let mut right = (0.0, 0.0);
    for (k, &i) in rows.iter().enumerate() {
        let target = if go_right[k] { &mut right } else { &mut left };
        if y[i] == 1 {
            target.0 += w[i];
        } else {
            target.1 += w[i];
        }
    }
    let positive_branch = pick_positive_branch(left, right);
    let mut gaps: Vec<f64> = Vec::new();
    for g in 0..groups.n_groups() {
        let mut count = 0usize;
        // weighted joint of (yhat_local, y) inside the group
        let (mut tp, mut fp, mut tn, mut fneg) = (0.0, 0.0, 0.0, 0.0);
        for (k, &i) in rows.iter().enumerate() {
            if groups.ids[i] as usize != g {
                continue;
            }
            count += 1;
            let predicted_pos = match positive_branch {
                Branch::Right => go_right[k],
                Branch::Left => !go_right[k],
            };
            match (y[i] == 1, predicted_pos) {
                (true, true) => tp += w[i],
                (false, true) => fp += w[i],
                (false, false) => tn += w[i],
                (true, false) => fneg += w[i],
            }
        }
        if count < min_group_count || count == 0 {
            continue;
        }
        let rate = match criterion {
            Criterion::Dp => {
                let total = tp + fp + tn + fneg;
                if total > 0.0 {
                    Some((tp + fp) / total)
                } else {
                    None
                }
            }
            Criterion::Pp => {
                if tp + fp > 0.0 {
                    Some(tp / (tp + fp))
                } else {
                    None
                }
            }
            Criterion::Pe => {
                if fp + tn > 0.0 {
                    Some(fp / (fp + tn))
                } else {
                    None
                }
            }
            Criterion::Eopp => {
                if tp + fneg > 0.0 {
                    Some(fneg / (tp + fneg))
                } else {
                    None
                }
            }
        };
        if let Some(r) = rate {
            gaps.push(r);
        }
    }
    if gaps.len() < 2 {
        return None;
    }
    let mut max = 0.0f64;
    for i in 0..gaps.len() {
        for j in i + 1..gaps.len() {
            max = max.max((gaps[i] - gaps[j]).abs());
        }
    }
    Some(max)
}

fn pick_positive_branch(left: (f64, f64), right: (f64, f64)) -> Branch {
    let rate = |(pos, neg): (f64, f64)| {
        if pos + neg > 0.0 {
            pos / (pos + neg)
        } else {
            0.0
        }
    };
    let (rl, rr) = (rate(left), rate(right));
    if rr > rl {
        Branch::Right
    } else if rl > rr {
        Branch::Left
    } else if right.0 > left.0 {
        Branch::Right
    } else {
        Branch::Left
    }
}

/// Per-constraint running counts of the (group, label, branch) joint while a
/// threshold sweep moves rows from the right branch to the left.
struct ConstraintSweep<'a> {
    groups: &'a Groups,
    /// weighted [group][y][branch(0=left,1=right)]
    joint: Vec<[[f64; 2]; 2]>,
    /// row counts [group][branch]
    rows: Vec<[usize; 2]>,
}

impl<'a> ConstraintSweep<'a> {
    fn new(groups: &'a Groups, y: &[u8], w: &[f64], rows: &[usize]) -> Self {
        let k = groups.n_groups();
        let mut sweep = Self {
            groups,
            joint: vec![[[0.0; 2]; 2]; k],
            rows: vec![[0usize; 2]; k],
        };
        for &i in rows {
            let g = groups.ids[i] as usize;
            sweep.joint[g][y[i] as usize][1] += w[i];
            sweep.rows[g][1] += 1;
        }
        sweep
    }

    fn move_left(&mut self, i: usize, y: u8, w: f64) {
        let g = self.groups.ids[i] as usize;
        self.joint[g][y as usize][1] -= w;
        self.joint[g][y as usize][0] += w;
        self.rows[g][1] -= 1;
        self.rows[g][0] += 1;
    }

    /// Criterion gap for the current bipartition given which branch the
    /// local prediction marks positive. Mirrors [`local_constraint_value`].
    fn gap(
        &self,
        criterion: Criterion,
        positive_branch: Branch,
        min_group_count: usize,
    ) -> Option<f64> {
        let positive = match positive_branch {
            Branch::Left => 0,
            Branch::Right => 1,
        };
        let mut rates: Vec<f64> = Vec::with_capacity(self.joint.len());
        for (g, cell) in self.joint.iter().enumerate() {
            let count = self.rows[g][0] + self.rows[g][1];
            if count < min_group_count || count == 0 {
                continue;
            }
            let tp = cell[1][positive];
            let fp = cell[0][positive];
            let fneg = cell[1][1 - positive];
            let tn = cell[0][1 - positive];
            let rate = match criterion {
                Criterion::Dp => {
                    let total = tp + fp + tn + fneg;
                    (total > 0.0).then(|| (tp + fp) / total)
                }
                Criterion::Pp => (tp + fp > 0.0).then(|| tp / (tp + fp)),
                Criterion::Pe => (fp + tn > 0.0).then(|| fp / (fp + tn)),
                Criterion::Eopp => (tp + fneg > 0.0).then(|| fneg / (tp + fneg)),
            };
            if let Some(r) = rate {
                rates.push(r);
            }
        }
        if rates.len() < 2 {
            return None;
        }
        let mut max = 0.0f64;
        for i in 0..rates.len() {
            for j in i + 1..rates.len() {
                max = max.max((rates[i] - rates[j]).abs());
            }
        }
        Some(max)
    }
}

impl<'a> FitContext<'a> {
    /// One ascending threshold sweep per feature: rows migrate from the
    /// right branch to the left in distinct-value blocks, and every
    /// aggregate (entropy counts, per-constraint joints) updates in O(1)
    /// per row. Candidate thresholds are the midpoints of consecutive
    /// distinct values, so indicator columns get the single `> 0.5` test.
    fn find_best_split(&self, rows: &[usize]) -> Result<Option<SplitCandidate>> {
        let pos: f64 = rows
            .iter()
            .filter(|i| self.y[**i] == 1)
            .map(|i| self.w[*i])
            .sum();
        let neg: f64 = rows
            .iter()
            .filter(|i| self.y[**i] == 0)
            .map(|i| self.w[*i])
            .sum();
        let mut best: Option<SplitCandidate> = None;
        let mut order: Vec<usize> = Vec::with_capacity(rows.len());
        for (name, values) in self.features.iter() {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap());
            let mut sweeps: Vec<ConstraintSweep> = self
                .constraint_groups
                .iter()
                .map(|g| ConstraintSweep::new(g, &self.y, self.w, rows))
                .collect();
            let mut left = (0.0, 0.0);
            let mut right = (pos, neg);
            let mut n_left = 0usize;
            let mut at = 0usize;
            while at < order.len() {
                // move the whole block of equal values to the left branch
                let block_value = values[order[at]];
                while at < order.len() && values[order[at]] == block_value {
                    let i = order[at];
                    let wi = self.w[i];
                    if self.y[i] == 1 {
                        left.0 += wi;
                        right.0 -= wi;
                    } else {
                        left.1 += wi;
                        right.1 -= wi;
                    }
                    for sweep in &mut sweeps {
                        sweep.move_left(i, self.y[i], wi);
                    }
                    n_left += 1;
                    at += 1;
                }
                if at >= order.len() {
                    break; // everything on one side: no candidate here
                }
                let threshold = (block_value + values[order[at]]) / 2.0;
                let n_right = order.len() - n_left;
                if n_left < self.config.min_samples_leaf || n_right < self.config.min_samples_leaf {
                    continue;
                }
                // same formula as information_gain; the branch counts sum to
                // the parent by construction here
                let total = pos + neg;
                let mut ig = entropy(pos, neg)
                    - (left.0 + left.1) / total * entropy(left.0, left.1)
                    - (right.0 + right.1) / total * entropy(right.0, right.1);
                let positive_branch = pick_positive_branch(left, right);
                let mut constraint_values = Vec::with_capacity(self.constraints.len());
                for (ci, c) in self.constraints.iter().enumerate() {
                    let value =
                        sweeps[ci].gap(c.criterion, positive_branch, self.config.min_group_count);
                    if let Some(v) = value {
                        if v > c.delta {
                            ig = 0.0;
                        }
                    }
                    constraint_values.push(value);
                }
                if ig <= 0.0 {
                    continue;
                }
                let candidate = SplitCandidate {
                    feature: name.to_string(),
                    threshold,
                    ig,
                    constraint_values,
                    positive_branch,
                };
                let better = match &best {
                    None => true,
                    Some(b) => {
                        ig > b.ig
                            || (ig == b.ig
                                && (candidate.feature < b.feature
                                    || (candidate.feature == b.feature
                                        && candidate.threshold < b.threshold)))
                    }
                };
                if better {
                    best = Some(candidate);
                }
            }
        }
        Ok(best)
    }

    fn grow(&self, rows: Vec<usize>, depth: usize, nodes: &mut Vec<Node>) -> Result<usize> {
        let weight: f64 = rows.iter().map(|i| self.w[*i]).sum();
        let pos: f64 = rows
            .iter()
            .filter(|i| self.y[**i] == 1)
            .map(|i| self.w[*i])
            .sum();
        let pos_rate = if weight > 0.0 { pos / weight } else { 0.0 };
        let make_leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf { pos_rate, weight });
            nodes.len() - 1
        };
        if depth >= self.config.max_depth
            || rows.len() < self.config.min_samples_split
            || pos_rate == 0.0
            || pos_rate == 1.0
        {
            return Ok(make_leaf(nodes));
        }
        let split = match self.find_best_split(&rows)? {
            Some(s) => s,
            None => return Ok(make_leaf(nodes)),
        };
        let values = self
            .features
            .iter()
            .find(|(n, _)| *n == split.feature)
            .map(|(_, v)| *v)
            .unwrap();
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|i| values[**i] <= split.threshold);
        let id = nodes.len();
        nodes.push(Node::Leaf { pos_rate, weight }); // placeholder
        let left = self.grow(left_rows, depth + 1, nodes)?;
        let right = self.grow(right_rows, depth + 1, nodes)?;
        nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            weight,
            ig: split.ig,
            constraint_values: split.constraint_values,
            positive_branch: split.positive_branch,
        };
        Ok(id)
    }
}

fn numeric_groups(ds: &TabularDataset, name: &str) -> Result<Groups> {
    ds.groups(name)
}

fn build_context<'a>(
    ds: &'a TabularDataset,
    constraints: &'a [FairnessConstraint],
    config: &'a GrowthConfig,
) -> Result<FitContext<'a>> {
    config.validate()?;
    for c in constraints {
        c.validate()?;
        let col = ds
            .column(&c.sensitive)
            .ok_or_else(|| Error::NoSensitiveColumn(c.sensitive.clone()))?;
        if col.schema.role != Role::Sensitive {
            return Err(Error::NoSensitiveColumn(c.sensitive.clone()));
        }
    }
    let mut features = Vec::new();
    for col in ds.columns() {
        if col.schema.role != Role::Feature {
            continue;
        }
        if constraints.iter().any(|c| c.sensitive == col.name()) {
            continue;
        }
        match &col.data {
            ColumnData::Numeric(v) => features.push((col.name(), v.as_slice())),
            ColumnData::Categorical { .. } => {
                return Err(Error::UnencodedData(col.name().to_string()))
            }
        }
    }
    if features.is_empty() {
        return Err(Error::InvalidSchema("no usable feature columns".into()));
    }
    let constraint_groups = constraints
        .iter()
        .map(|c| numeric_groups(ds, &c.sensitive))
        .collect::<Result<Vec<_>>>()?;
    Ok(FitContext {
        features,
        y: ds.target()?,
        w: ds.weights(),
        constraint_groups,
        constraints,
        config,
    })
}

/// Best constraint-satisfying split for the given rows, or `None` when no
/// candidate retains positive information gain.
pub fn find_best_split(
    ds: &TabularDataset,
    rows: &[usize],
    constraints: &[FairnessConstraint],
    config: &GrowthConfig,
) -> Result<Option<SplitCandidate>> {
    build_context(ds, constraints, config)?.find_best_split(rows)
}

/// Grow a tree on the dataset's feature columns.
///
/// Sensitive-role columns and columns named by a constraint are never used
/// as split candidates. Categorical feature columns must have been encoded.
pub fn fit(
    ds: &TabularDataset,
    constraints: &[FairnessConstraint],
    config: &GrowthConfig,
) -> Result<FFTreeModel> {
    let ctx = build_context(ds, constraints, config)?;
    let mut nodes = Vec::new();
    ctx.grow((0..ds.n_rows()).collect(), 0, &mut nodes)?;
    let mut model = FFTreeModel {
        constraints: constraints.to_vec(),
        config: config.clone(),
        features: ctx.features.iter().map(|(n, _)| n.to_string()).collect(),
        encoding_ref: None,
        nodes,
    };
    if let Some(max_leaves) = config.max_leaves {
        model = prune_to_leaf_budget(model, max_leaves);
    }
    Ok(model)
}

/// Remove the weakest splits (smallest weighted IG, ties by node id) until
/// the leaf count fits the budget.
fn prune_to_leaf_budget(mut model: FFTreeModel, max_leaves: usize) -> FFTreeModel {
    loop {
        let leaves = model
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count();
        if leaves <= max_leaves.max(1) {
            return model;
        }
        // candidates: internal nodes whose both children are leaves
        let mut weakest: Option<(f64, usize)> = None;
        for (id, node) in model.nodes.iter().enumerate() {
            if let Node::Split {
                left,
                right,
                ig,
                weight,
                ..
            } = node
            {
                let both_leaves = matches!(model.nodes[*left], Node::Leaf { .. })
                    && matches!(model.nodes[*right], Node::Leaf { .. });
                if both_leaves {
                    let key = ig * weight;
                    if weakest.is_none_or(|(w, _)| key < w) {
                        weakest = Some((key, id));
                    }
                }
            }
        }
        match weakest {
            Some((_, id)) => model = prune(&model, id).expect("collapsible node"),
            None => return model,
        }
    }
}

impl FFTreeModel {
    fn leaf_for_row(&self, values: &[f64]) -> &Node {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { .. } => return &self.nodes[at],
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    let fi = self.features.iter().position(|f| f == feature).unwrap();
                    at = if values[fi] > *threshold {
                        *right
                    } else {
                        *left
                    };
                }
            }
        }
    }

    fn feature_views<'b>(&self, ds: &'b TabularDataset) -> Result<Vec<&'b [f64]>> {
        self.features
            .iter()
            .map(|f| {
                let col = ds
                    .column(f)
                    .ok_or_else(|| Error::EncodingMismatch(format!("missing column '{f}'")))?;
                col.as_numeric()
                    .ok_or_else(|| Error::EncodingMismatch(format!("column '{f}' not numeric")))
            })
            .collect()
    }

    /// Leaf positive rates for every row.
    pub fn predict_score(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        let views = self.feature_views(ds)?;
        let mut out = Vec::with_capacity(ds.n_rows());
        let mut buf = vec![0.0; self.features.len()];
        for r in 0..ds.n_rows() {
            for (j, v) in views.iter().enumerate() {
                buf[j] = v[r];
            }
            match self.leaf_for_row(&buf) {
                Node::Leaf { pos_rate, .. } => out.push(*pos_rate),
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    /// `1 { score > tau }` labels.
    pub fn predict_label(&self, ds: &TabularDataset, tau: f64) -> Result<Vec<u8>> {
        Ok(crate::metrics::labels_at(&self.predict_score(ds)?, tau))
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        fn rec(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + rec(nodes, *left).max(rec(nodes, *right)),
            }
        }
        rec(&self.nodes, 0)
    }

    /// True when no internal node tests any of the given columns.
    pub fn avoids_columns(&self, names: &[String]) -> bool {
        self.nodes.iter().all(|n| match n {
            Node::Split { feature, .. } => !names.contains(feature),
            Node::Leaf { .. } => true,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl Scorer for FFTreeModel {
    fn input_columns(&self) -> Vec<String> {
        self.features.clone()
    }

    fn score(&self, ds: &TabularDataset) -> Result<Vec<f64>> {
        self.predict_score(ds)
    }

    fn score_row(&self, names: &[String], values: &[f64]) -> Result<f64> {
        let mut buf = vec![0.0; self.features.len()];
        for (j, f) in self.features.iter().enumerate() {
            let at = names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| Error::EncodingMismatch(format!("missing input '{f}'")))?;
            buf[j] = values[at];
        }
        match self.leaf_for_row(&buf) {
            Node::Leaf { pos_rate, .. } => Ok(*pos_rate),
            _ => unreachable!(),
        }
    }
}

/// Per-node compliance table from recomputing every internal node's
/// constraint gaps on the training data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditRow {
    pub node: usize,
    pub feature: String,
    pub rows: usize,
    pub values: Vec<Option<f64>>,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub pass: bool,
}

pub fn audit_compliance(model: &FFTreeModel, ds: &TabularDataset) -> Result<AuditReport> {
    let y = ds.target()?;
    let w = ds.weights();
    let groups = model
        .constraints
        .iter()
        .map(|c| ds.groups(&c.sensitive))
        .collect::<Result<Vec<_>>>()?;
    let views = model.feature_views(ds)?;
    let mut rows_at: Vec<Vec<usize>> = vec![Vec::new(); model.nodes.len()];
    rows_at[0] = (0..ds.n_rows()).collect();
    let mut report = Vec::new();
    let mut pass = true;
    // nodes were laid out parent-before-children
    for id in 0..model.nodes.len() {
        let rows = std::mem::take(&mut rows_at[id]);
        if let Node::Split {
            feature,
            threshold,
            left,
            right,
            ..
        } = &model.nodes[id]
        {
            let fi = model.features.iter().position(|f| f == feature).unwrap();
            let values = views[fi];
            let go_right: Vec<bool> = rows.iter().map(|i| values[*i] > *threshold).collect();
            let mut vals = Vec::with_capacity(model.constraints.len());
            let mut node_pass = true;
            for (ci, c) in model.constraints.iter().enumerate() {
                let v = local_constraint_value(
                    &go_right,
                    c.criterion,
                    &y,
                    w,
                    &groups[ci],
                    &rows,
                    model.config.min_group_count,
                );
                if let Some(v) = v {
                    if v > c.delta + 1e-12 {
                        node_pass = false;
                    }
                }
                vals.push(v);
            }
            pass &= node_pass;
            report.push(AuditRow {
                node: id,
                feature: feature.clone(),
                rows: rows.len(),
                values: vals,
                pass: node_pass,
            });
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for (k, i) in rows.iter().enumerate() {
                if go_right[k] {
                    r.push(*i);
                } else {
                    l.push(*i);
                }
            }
            rows_at[*left] = l;
            rows_at[*right] = r;
        }
    }
    Ok(AuditReport { rows: report, pass })
}

/// Replace the subtree at `node_id` by a leaf carrying its aggregate
/// weighted positive rate.
pub fn prune(model: &FFTreeModel, node_id: usize) -> Result<FFTreeModel> {
    match model.nodes.get(node_id) {
        Some(Node::Split { .. }) => {}
        _ => return Err(Error::BadNodeId(node_id)),
    }
    fn aggregate(nodes: &[Node], at: usize) -> (f64, f64) {
        match &nodes[at] {
            Node::Leaf { pos_rate, weight } => (pos_rate * weight, *weight),
            Node::Split { left, right, .. } => {
                let (pl, wl) = aggregate(nodes, *left);
                let (pr, wr) = aggregate(nodes, *right);
                (pl + pr, wl + wr)
            }
        }
    }
    fn in_subtree(nodes: &[Node], root: usize, keep: &mut Vec<bool>) {
        keep[root] = false;
        if let Node::Split { left, right, .. } = &nodes[root] {
            in_subtree(nodes, *left, keep);
            in_subtree(nodes, *right, keep);
        }
    }
    let (pos_w, weight) = aggregate(&model.nodes, node_id);
    let pos_rate = if weight > 0.0 { pos_w / weight } else { 0.0 };
    let mut keep = vec![true; model.nodes.len()];
    in_subtree(&model.nodes, node_id, &mut keep);
    keep[node_id] = true;

    let mut remap = vec![usize::MAX; model.nodes.len()];
    let mut nodes = Vec::new();
    for (id, node) in model.nodes.iter().enumerate() {
        if keep[id] {
            remap[id] = nodes.len();
            nodes.push(if id == node_id {
                Node::Leaf { pos_rate, weight }
            } else {
                node.clone()
            });
        }
    }
    for node in &mut nodes {
        if let Node::Split { left, right, .. } = node {
            *left = remap[*left];
            *right = remap[*right];
        }
    }
    Ok(FFTreeModel {
        nodes,
        ..model.clone()
    })
}
