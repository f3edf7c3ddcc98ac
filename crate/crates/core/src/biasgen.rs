//! Synthetic tabular data with controllable bias.
//!
//! One binary sensitive attribute `A`, a gamma-distributed resource `R`, a
//! binomial context variable `Q` and a latent suitability score `S` drive a
//! binary outcome `Y`. Historical bias shifts `R`, `Q` or `S` by group;
//! measurement bias produces skewed proxies `P_R` and `P_S`; representation
//! bias undersamples one group; omission bias drops `R` from the model view.

use crate::dataset::{Column, ColumnData, ColumnSchema, Kind, Role, TabularDataset};
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

fn default_one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UndersampleMode {
    #[default]
    None,
    Random,
    /// Keep the lowest-R individuals of the undersampled group.
    LowR,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasSpec {
    pub n: usize,
    pub seed: u64,
    /// Bernoulli proportion of group A=1.
    #[serde(alias = "p_A")]
    pub p_a: f64,
    /// Gamma shape/scale of the resource noise.
    #[serde(alias = "k_R")]
    pub k_r: f64,
    #[serde(alias = "theta_R")]
    pub theta_r: f64,
    /// Binomial trials for Q.
    #[serde(alias = "K")]
    pub k: u32,
    #[serde(alias = "alpha_RQ")]
    pub alpha_rq: f64,
    #[serde(alias = "alpha_R")]
    pub alpha_r: f64,
    #[serde(alias = "alpha_Q")]
    pub alpha_q: f64,
    #[serde(alias = "sigma_S")]
    pub sigma_s: f64,
    /// Historical bias magnitudes.
    #[serde(alias = "beta_h_R")]
    pub beta_h_r: f64,
    #[serde(alias = "beta_h_Q")]
    pub beta_h_q: f64,
    #[serde(alias = "beta_h_Y")]
    pub beta_h_y: f64,
    /// Measurement bias magnitudes.
    #[serde(alias = "beta_m_R")]
    pub beta_m_r: f64,
    #[serde(alias = "beta_m_Y")]
    pub beta_m_y: f64,
    /// Proxy noise.
    #[serde(alias = "sigma_PR")]
    pub sigma_pr: f64,
    #[serde(alias = "sigma_PS")]
    pub sigma_ps: f64,
    /// Representation bias: retained share of group A=1 relative to A=0.
    pub p_u: f64,
    pub undersample_mode: UndersampleMode,
    #[serde(alias = "omit_R")]
    pub omit_r: bool,
    /// Algorithmic / deployment score shifts.
    pub beta_alg: f64,
    pub beta_dep: f64,
}

impl Default for BiasSpec {
    fn default() -> Self {
        Self {
            n: 10_000,
            seed: 0,
            p_a: 0.5,
            k_r: 3.0,
            theta_r: 1.0,
            k: 3,
            alpha_rq: 1.0,
            alpha_r: 1.0,
            alpha_q: 1.0,
            sigma_s: 0.5,
            beta_h_r: 0.0,
            beta_h_q: 0.0,
            beta_h_y: 0.0,
            beta_m_r: 0.0,
            beta_m_y: 0.0,
            sigma_pr: 0.1,
            sigma_ps: 0.1,
            p_u: default_one(),
            undersample_mode: UndersampleMode::None,
            omit_r: false,
            beta_alg: 0.0,
            beta_dep: 0.0,
        }
    }
}

impl BiasSpec {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::BadSpec(what.to_string()))
            }
        };
        check(self.n >= 2, "n must be >= 2")?;
        check(self.p_a > 0.0 && self.p_a < 1.0, "p_a must lie in (0,1)")?;
        check(
            self.k_r > 0.0 && self.theta_r > 0.0,
            "gamma shape/scale must be > 0",
        )?;
        check(self.k >= 1, "binomial trials must be >= 1")?;
        check(self.sigma_s > 0.0, "sigma_s must be > 0")?;
        check(
            self.sigma_pr >= 0.0 && self.sigma_ps >= 0.0,
            "proxy sigmas must be >= 0",
        )?;
        check(
            self.beta_h_r >= 0.0
                && self.beta_h_q >= 0.0
                && self.beta_h_y >= 0.0
                && self.beta_m_r >= 0.0
                && self.beta_m_y >= 0.0,
            "bias magnitudes must be >= 0",
        )?;
        check(self.p_u > 0.0 && self.p_u <= 1.0, "p_u must lie in (0,1]")?;
        check(
            self.beta_alg >= 0.0 && self.beta_dep >= 0.0,
            "score shifts must be >= 0",
        )?;
        Ok(())
    }
}

/// The raw generated columns plus the labelling threshold that was used.
#[derive(Debug, Clone)]
pub struct GeneratedSample {
    pub dataset: TabularDataset,
    /// Empirical mean of the generated P_S column; Y and P_Y threshold on it.
    pub threshold_used: f64,
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Draw the full sample. Deterministic given the spec (including its seed).
pub fn generate(spec: &BiasSpec) -> Result<GeneratedSample> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gamma = Gamma::new(spec.k_r, spec.theta_r).map_err(|e| Error::BadSpec(e.to_string()))?;
    let noise_s = Normal::new(0.0, spec.sigma_s).map_err(|e| Error::BadSpec(e.to_string()))?;

    let mut a = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut q = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    let mut p_r = Vec::with_capacity(n);
    let mut p_s = Vec::with_capacity(n);
    for _ in 0..n {
        let ai = f64::from(rng.gen_bool(spec.p_a));
        let ri = -spec.beta_h_r * ai + gamma.sample(&mut rng);
        let pq = sigmoid(-(spec.alpha_rq * ri - spec.beta_h_q * ai));
        let mut qi = 0.0;
        for _ in 0..spec.k {
            qi += f64::from(rng.gen_bool(pq));
        }
        let si =
            spec.alpha_r * ri - spec.alpha_q * qi - spec.beta_h_y * ai + noise_s.sample(&mut rng);
        let pri = ri - spec.beta_m_r * ai + sample_noise(&mut rng, spec.sigma_pr)?;
        let psi = si - spec.beta_m_y * ai + sample_noise(&mut rng, spec.sigma_ps)?;
        a.push(ai);
        r.push(ri);
        q.push(qi);
        s.push(si);
        p_r.push(pri);
        p_s.push(psi);
    }
    let threshold = p_s.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = s.iter().map(|v| f64::from(*v > threshold)).collect();
    let p_y: Vec<f64> = p_s.iter().map(|v| f64::from(*v > threshold)).collect();

    let a_col = Column {
        schema: ColumnSchema::new("A", Kind::Categorical, Role::Sensitive),
        data: ColumnData::Categorical {
            ids: a.iter().map(|v| *v as u32).collect(),
            classes: vec!["0".into(), "1".into()],
        },
    };
    let dataset = TabularDataset::new(vec![
        a_col,
        Column::numeric("R", Role::Feature, r),
        Column::numeric("Q", Role::Feature, q),
        Column::numeric("S", Role::Latent, s),
        Column::numeric("P_R", Role::Latent, p_r),
        Column::numeric("P_S", Role::Latent, p_s),
        Column::numeric("Y", Role::Target, y),
        Column::numeric("P_Y", Role::Latent, p_y),
    ])?;
    Ok(GeneratedSample {
        dataset,
        threshold_used: threshold,
    })
}

fn sample_noise(rng: &mut ChaCha8Rng, sigma: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::BadSpec(e.to_string()))?;
    Ok(normal.sample(rng))
}

/// Undersample the A=1 group down to `round(p_u * count(A=0))` rows.
/// `random` keeps a uniform subset; `low_r` keeps the rows with the smallest
/// R values (ties broken by row index). Original row order is preserved, so
/// `p_u = 1` is the identity.
pub fn apply_representation_bias(
    sample: &GeneratedSample,
    p_u: f64,
    mode: UndersampleMode,
    seed: u64,
) -> Result<GeneratedSample> {
    if !(p_u > 0.0 && p_u <= 1.0) {
        return Err(Error::BadSpec(format!("p_u={p_u} out of (0,1]")));
    }
    if mode == UndersampleMode::None {
        return Err(Error::BadSpec("undersample mode must not be none".into()));
    }
    let ds = &sample.dataset;
    let groups = ds.groups("A")?;
    let ones: Vec<usize> = (0..ds.n_rows())
        .filter(|i| groups.labels[groups.ids[*i] as usize] == "1")
        .collect();
    let zeros = ds.n_rows() - ones.len();
    let keep_n = (p_u * zeros as f64).round() as usize;
    if keep_n == 0 {
        return Err(Error::TooFewRows(p_u));
    }
    if keep_n >= ones.len() {
        return Ok(sample.clone());
    }
    let kept: Vec<usize> = match mode {
        UndersampleMode::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = ones.clone();
            use rand::seq::SliceRandom;
            shuffled.shuffle(&mut rng);
            let mut kept: Vec<usize> = shuffled[..keep_n].to_vec();
            kept.sort_unstable();
            kept
        }
        UndersampleMode::LowR => {
            let r = ds.require_column("R")?.as_numeric().unwrap();
            let mut by_r = ones.clone();
            by_r.sort_by(|i, j| r[*i].partial_cmp(&r[*j]).unwrap().then(i.cmp(j)));
            let mut kept: Vec<usize> = by_r[..keep_n].to_vec();
            kept.sort_unstable();
            kept
        }
        UndersampleMode::None => unreachable!(),
    };
    let mut keep_mask = vec![false; ds.n_rows()];
    for i in 0..ds.n_rows() {
        if groups.labels[groups.ids[i] as usize] == "0" {
            keep_mask[i] = true;
        }
    }
    for i in &kept {
        keep_mask[*i] = true;
    }
    let idx: Vec<usize> = (0..ds.n_rows()).filter(|i| keep_mask[*i]).collect();
    Ok(GeneratedSample {
        dataset: ds.select_rows(&idx)?,
        threshold_used: sample.threshold_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LabelChoice {
    #[default]
    TrueY,
    ProxyY,
}

/// Project the generated columns into a model-facing view.
///
/// The feature set becomes `{R or P_R or nothing} ∪ {Q} ∪ {A if exposed}`;
/// the target is `Y` or `P_Y`; everything else is kept with the latent role
/// so downstream evaluation can compare against the truth. When `expose_a`
/// is false, `A` keeps the sensitive role (the blinded training view).
pub fn project_view(
    sample: &GeneratedSample,
    use_proxy_r: bool,
    omit_r: bool,
    label: LabelChoice,
    expose_a: bool,
) -> Result<TabularDataset> {
    if use_proxy_r && omit_r {
        return Err(Error::BadSpec(
            "cannot both use the proxy of R and omit R".into(),
        ));
    }
    let ds = &sample.dataset;
    let mut columns = Vec::new();
    for col in ds.columns() {
        let mut col = col.clone();
        if col.name() == "A" && expose_a {
            // hand the sensitive attribute to the model as a numeric 0/1 input
            if let ColumnData::Categorical { ids, .. } = &col.data {
                col.data = ColumnData::Numeric(ids.iter().map(|i| f64::from(*i)).collect());
            }
        }
        col.schema.role = match col.name() {
            "A" => {
                if expose_a {
                    Role::Feature
                } else {
                    Role::Sensitive
                }
            }
            "R" => {
                if use_proxy_r || omit_r {
                    Role::Latent
                } else {
                    Role::Feature
                }
            }
            "P_R" => {
                if use_proxy_r {
                    Role::Feature
                } else {
                    Role::Latent
                }
            }
            "Q" => Role::Feature,
            "Y" => {
                if label == LabelChoice::TrueY {
                    Role::Target
                } else {
                    Role::Latent
                }
            }
            "P_Y" => {
                if label == LabelChoice::ProxyY {
                    Role::Target
                } else {
                    Role::Latent
                }
            }
            _ => Role::Latent,
        };
        columns.push(col);
    }
    TabularDataset::with_weights(columns, ds.weights().to_vec())
}

/// Additive group score shift: `out_i = scores_i - beta * a_i`
/// (algorithmic bias when applied to model scores, deployment bias when
/// applied to decisions).
pub fn inject_score_bias(scores: &[f64], a: &[f64], beta: f64) -> Result<Vec<f64>> {
    if scores.len() != a.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: a.len(),
        });
    }
    Ok(scores.iter().zip(a).map(|(s, ai)| s - beta * ai).collect())
}

/// Sidecar metadata written next to generated CSVs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSidecar {
    pub spec: BiasSpec,
    pub threshold_used: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(ds: &TabularDataset, name: &str) -> Vec<f64> {
        ds.require_column(name)
            .unwrap()
            .as_numeric()
            .unwrap()
            .to_vec()
    }

    fn group_mask(ds: &TabularDataset, class: &str) -> Vec<bool> {
        let g = ds.groups("A").unwrap();
        g.ids
            .iter()
            .map(|id| g.labels[*id as usize] == class)
            .collect()
    }

    fn mean_where(v: &[f64], mask: &[bool]) -> f64 {
        let mut sum = 0.0;
        let mut n = 0.0;
        for (x, m) in v.iter().zip(mask) {
            if *m {
                sum += x;
                n += 1.0;
            }
        }
        sum / n
    }

    #[test]
    fn unbiased_groups_share_resource_law() {
        let spec = BiasSpec {
            n: 20_000,
            seed: 11,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let r = column(&sample.dataset, "R");
        let m1 = group_mask(&sample.dataset, "1");
        let m0 = group_mask(&sample.dataset, "0");
        let gap = mean_where(&r, &m1) - mean_where(&r, &m0);
        // pooled 3*SE for Gamma(3,1): sd = sqrt(3), per-group n ~ 10k
        let se = (3.0f64 / 10_000.0 + 3.0 / 10_000.0).sqrt();
        assert!(gap.abs() < 3.0 * se, "gap {gap}, 3se {}", 3.0 * se);
    }

    #[test]
    fn historical_bias_shifts_resource_mean() {
        let spec = BiasSpec {
            n: 20_000,
            seed: 5,
            beta_h_r: 1.5,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let r = column(&sample.dataset, "R");
        let m1 = group_mask(&sample.dataset, "1");
        let m0 = group_mask(&sample.dataset, "0");
        let gap = mean_where(&r, &m1) - mean_where(&r, &m0);
        let se = (2.0f64 * 3.0 / 10_000.0).sqrt();
        assert!((gap + 1.5).abs() < 3.0 * se, "gap {gap}");
    }

    #[test]
    fn labels_match_threshold_rule_exactly() {
        let spec = BiasSpec {
            n: 500,
            seed: 2,
            beta_m_y: 0.7,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let s = column(&sample.dataset, "S");
        let ps = column(&sample.dataset, "P_S");
        let y = column(&sample.dataset, "Y");
        let py = column(&sample.dataset, "P_Y");
        for i in 0..500 {
            assert_eq!(y[i], f64::from(s[i] > sample.threshold_used));
            assert_eq!(py[i], f64::from(ps[i] > sample.threshold_used));
        }
        // threshold is the empirical mean of P_S
        let mean = ps.iter().sum::<f64>() / 500.0;
        assert!((mean - sample.threshold_used).abs() < 1e-12);
    }

    #[test]
    fn zero_proxy_noise_makes_proxy_label_exact() {
        let spec = BiasSpec {
            n: 2_000,
            seed: 9,
            sigma_ps: 0.0,
            beta_m_y: 0.0,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        assert_eq!(column(&sample.dataset, "Y"), column(&sample.dataset, "P_Y"));
        let s = column(&sample.dataset, "S");
        let ps = column(&sample.dataset, "P_S");
        assert_eq!(s, ps);
    }

    #[test]
    fn both_labels_occur() {
        let sample = generate(&BiasSpec {
            n: 2_000,
            seed: 13,
            ..Default::default()
        })
        .unwrap();
        let py = column(&sample.dataset, "P_Y");
        let rate = py.iter().sum::<f64>() / py.len() as f64;
        assert!(rate > 0.0 && rate < 1.0);
    }

    #[test]
    fn generate_is_deterministic() {
        let spec = BiasSpec {
            n: 300,
            seed: 42,
            beta_h_r: 1.0,
            ..Default::default()
        };
        assert_eq!(
            generate(&spec).unwrap().dataset,
            generate(&spec).unwrap().dataset
        );
    }

    #[test]
    fn resource_gap_monotone_in_historical_bias() {
        let mut last = f64::INFINITY;
        for beta in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let spec = BiasSpec {
                n: 20_000,
                seed: 7,
                beta_h_r: beta,
                ..Default::default()
            };
            let sample = generate(&spec).unwrap();
            let r = column(&sample.dataset, "R");
            let gap = mean_where(&r, &group_mask(&sample.dataset, "1"))
                - mean_where(&r, &group_mask(&sample.dataset, "0"));
            assert!(
                gap <= last + 1e-9,
                "gap {gap} not below {last} at beta {beta}"
            );
            last = gap;
        }
    }

    #[test]
    fn undersampling_counts_and_low_r_property() {
        let spec = BiasSpec {
            n: 4_000,
            seed: 3,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let n0 = group_mask(&sample.dataset, "0")
            .iter()
            .filter(|b| **b)
            .count();
        let out = apply_representation_bias(&sample, 0.5, UndersampleMode::LowR, 1).unwrap();
        let kept1 = group_mask(&out.dataset, "1").iter().filter(|b| **b).count();
        assert_eq!(kept1, (0.5 * n0 as f64).round() as usize);

        // kept A=1 rows all have R below every dropped A=1 row
        let r_full = column(&sample.dataset, "R");
        let m1_full = group_mask(&sample.dataset, "1");
        let r_out = column(&out.dataset, "R");
        let m1_out = group_mask(&out.dataset, "1");
        let max_kept = r_out
            .iter()
            .zip(&m1_out)
            .filter(|(_, m)| **m)
            .map(|(r, _)| *r)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut ones_r: Vec<f64> = r_full
            .iter()
            .zip(&m1_full)
            .filter(|(_, m)| **m)
            .map(|(r, _)| *r)
            .collect();
        ones_r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let min_dropped = ones_r[kept1];
        assert!(max_kept <= min_dropped);
    }

    #[test]
    fn undersampling_identity_at_full_retention() {
        let spec = BiasSpec {
            n: 1_000,
            seed: 8,
            p_a: 0.4,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let out = apply_representation_bias(&sample, 1.0, UndersampleMode::Random, 4).unwrap();
        assert_eq!(out.dataset, sample.dataset);
    }

    #[test]
    fn low_r_mode_lowers_group_mean_vs_random() {
        let spec = BiasSpec {
            n: 5_000,
            seed: 21,
            ..Default::default()
        };
        let sample = generate(&spec).unwrap();
        let low = apply_representation_bias(&sample, 0.5, UndersampleMode::LowR, 2).unwrap();
        let rnd = apply_representation_bias(&sample, 0.5, UndersampleMode::Random, 2).unwrap();
        let mean = |s: &GeneratedSample| {
            let r = column(&s.dataset, "R");
            mean_where(&r, &group_mask(&s.dataset, "1"))
        };
        assert!(mean(&low) < mean(&rnd));
    }

    #[test]
    fn view_projection_roles() {
        let sample = generate(&BiasSpec {
            n: 50,
            seed: 1,
            ..Default::default()
        })
        .unwrap();
        let omitted = project_view(&sample, false, true, LabelChoice::TrueY, true).unwrap();
        assert_eq!(omitted.feature_names(), vec!["A", "Q"]);

        let proxy = project_view(&sample, true, false, LabelChoice::ProxyY, true).unwrap();
        assert_eq!(proxy.feature_names(), vec!["A", "Q", "P_R"]);
        assert_eq!(proxy.target_name().unwrap(), "P_Y");
        // true Y stays available for evaluation
        assert_eq!(proxy.require_column("Y").unwrap().schema.role, Role::Latent);

        let ftu = project_view(&sample, false, false, LabelChoice::TrueY, false).unwrap();
        assert_eq!(ftu.feature_names(), vec!["R", "Q"]);
        assert_eq!(ftu.sensitive_names(), vec!["A"]);
    }

    #[test]
    fn score_bias_injection() {
        let a = vec![0.0, 1.0, 1.0, 0.0];
        let scores = vec![0.5; 4];
        assert_eq!(inject_score_bias(&scores, &a, 0.0).unwrap(), scores);
        let out = inject_score_bias(&scores, &a, 0.2).unwrap();
        assert_eq!(out, vec![0.5, 0.3, 0.3, 0.5]);
        // thresholding at 0.4 flips only A=1 rows
        let before: Vec<bool> = scores.iter().map(|s| *s > 0.4).collect();
        let after: Vec<bool> = out.iter().map(|s| *s > 0.4).collect();
        for i in 0..4 {
            assert_eq!(before[i] != after[i], a[i] == 1.0);
        }
        assert!(inject_score_bias(&scores, &a[..2], 0.1).is_err());
    }

    #[test]
    fn spec_defaults_round_trip_json() {
        let spec = BiasSpec::default();
        let json = serde_json::to_string(&spec).unwrap();
        let back: BiasSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(format!("{spec:?}"), format!("{back:?}"));
        // partial configs fall back to defaults
        let partial: BiasSpec = serde_json::from_str(r#"{"n": 5, "beta_h_r": 1.5}"#).unwrap();
        assert_eq!(partial.n, 5);
        assert_eq!(partial.beta_h_r, 1.5);
        assert_eq!(partial.k_r, 3.0);
        // the mixed-case spellings parse too
        let aliased: BiasSpec =
            serde_json::from_str(r#"{"n": 9, "beta_h_R": 2.0, "sigma_PS": 0.0, "K": 5}"#).unwrap();
        assert_eq!(aliased.beta_h_r, 2.0);
        assert_eq!(aliased.sigma_ps, 0.0);
        assert_eq!(aliased.k, 5);
    }
}
