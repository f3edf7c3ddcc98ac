//! Scripted experiment pipelines shared by the `repro` subcommand and the
//! acceptance suite.

use fairtab::biasgen::{self, BiasSpec, LabelChoice};
use fairtab::dataset::{
    self, Column, ColumnData, ColumnSchema, Groups, Kind, Role, TabularDataset,
};
use fairtab::error::{Error, Result};
use fairtab::fftree::{self, Criterion, FairnessConstraint, GrowthConfig};
use fairtab::metrics::{
    self, group_confusion, group_metric_difference, labels_at, MetricKind, Scorer,
};
use fairtab::mitigate::{self, fit_threshold_policy, LinearConfig, PolicyKind, PolicyModel};
use fairtab::monitor::{self, ShockScope, ShockSpec};
use fairtab::report;
use std::path::Path;

/// Replace the target column of a dataset with new 0/1 labels.
pub fn replace_target(ds: &TabularDataset, labels: &[u8]) -> Result<TabularDataset> {
    if labels.len() != ds.n_rows() {
        return Err(Error::LengthMismatch {
            left: labels.len(),
            right: ds.n_rows(),
        });
    }
    let target = ds.target_name()?.to_string();
    let columns = ds
        .columns()
        .iter()
        .map(|c| {
            if c.name() == target {
                Column {
                    schema: c.schema.clone(),
                    data: ColumnData::Numeric(labels.iter().map(|v| f64::from(*v)).collect()),
                }
            } else {
                c.clone()
            }
        })
        .collect();
    TabularDataset::with_weights(columns, ds.weights().to_vec())
}

fn signed_dp(yhat: &[u8], groups: &Groups, w: &[f64]) -> Result<f64> {
    let y0 = vec![0u8; yhat.len()];
    let conf = group_confusion(&y0, yhat, groups, w)?;
    group_metric_difference(MetricKind::Dp, &conf)
        .value()
        .ok_or_else(|| Error::EmptyGroup("dp".into()))
}

fn tpr_gap(y: &[u8], yhat: &[u8], groups: &Groups, w: &[f64]) -> Result<f64> {
    let conf = group_confusion(y, yhat, groups, w)?;
    // FNR gap equals the TPR gap in magnitude
    group_metric_difference(MetricKind::Eopp, &conf)
        .abs_value()
        .ok_or_else(|| Error::EmptyGroup("eopp".into()))
}

fn accuracy(y: &[u8], yhat: &[u8]) -> f64 {
    let correct = y.iter().zip(yhat).filter(|(a, b)| a == b).count();
    correct as f64 / y.len() as f64
}

// ---------------------------------------------------------------------------
// Criterion 5: bias/mitigation interaction on synthetic data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub name: String,
    /// Signed acceptance gap on held-out data.
    pub dp: f64,
    /// |TPR gap| against the evaluation labels.
    pub tpr_gap: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct MitigationScenario {
    /// Historical bias on R, evaluated against the true labels.
    pub historical: Vec<StrategyOutcome>,
    /// Measurement bias on Y (training on the proxy), evaluated against the
    /// true latent labels.
    pub measurement: Vec<StrategyOutcome>,
}

impl MitigationScenario {
    pub fn outcome<'a>(rows: &'a [StrategyOutcome], name: &str) -> &'a StrategyOutcome {
        rows.iter()
            .find(|r| r.name == name)
            .expect("strategy present")
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (title, rows) in [
            ("historical bias on R (beta_h_R = 1.5)", &self.historical),
            (
                "measurement bias on Y (beta_m_Y = 1.5), scored against true Y",
                &self.measurement,
            ),
        ] {
            out.push_str(title);
            out.push('\n');
            let mut table = vec![vec![
                "strategy".to_string(),
                "dp".to_string(),
                "|tpr gap|".to_string(),
                "accuracy".to_string(),
            ]];
            for r in rows {
                table.push(vec![
                    r.name.clone(),
                    report::fmt(r.dp),
                    report::fmt(r.tpr_gap),
                    report::fmt(r.accuracy),
                ]);
            }
            out.push_str(&report::text_table(&table));
            out.push('\n');
        }
        out
    }
}

struct MitigationRun {
    exposed_train: TabularDataset,
    exposed_test: TabularDataset,
    groups_test: Groups,
    /// Evaluation labels on the test side (true Y).
    truth_test: Vec<u8>,
}

fn linear_cfg() -> LinearConfig {
    LinearConfig::default()
}

fn split_views(
    sample: &biasgen::GeneratedSample,
    label: LabelChoice,
    seed: u64,
) -> Result<MitigationRun> {
    let exposed = biasgen::project_view(sample, false, false, label, true)?;
    let (exposed_train, exposed_test) = exposed.split(0.3, seed, Some("A"))?;
    let groups_test = exposed_test.groups("A")?;
    let truth_test: Vec<u8> = exposed_test
        .require_column("Y")?
        .as_numeric()
        .expect("Y numeric")
        .iter()
        .map(|v| (*v == 1.0) as u8)
        .collect();
    Ok(MitigationRun {
        exposed_train,
        exposed_test,
        groups_test,
        truth_test,
    })
}

fn run_strategies(run: &MitigationRun, epsilon: f64, seed: u64) -> Result<Vec<StrategyOutcome>> {
    let w_test = run.exposed_test.weights().to_vec();
    let mut rows = Vec::new();
    let mut push = |name: &str, yhat: &[u8]| -> Result<()> {
        rows.push(StrategyOutcome {
            name: name.to_string(),
            dp: signed_dp(yhat, &run.groups_test, &w_test)?,
            tpr_gap: tpr_gap(&run.truth_test, yhat, &run.groups_test, &w_test)?,
            accuracy: accuracy(&run.truth_test, yhat),
        });
        Ok(())
    };

    // unmitigated: sees A
    let unmitigated = mitigate::fit_linear_score(&run.exposed_train, &linear_cfg())?;
    let scores_test = unmitigated.score(&run.exposed_test)?;
    push("unmitigated", &labels_at(&scores_test, 0.5))?;

    // blinding
    let ftu_train = mitigate::ftu(&run.exposed_train, "A")?;
    let ftu_model = mitigate::fit_linear_score(&ftu_train, &linear_cfg())?;
    push("ftu", &labels_at(&ftu_model.score(&run.exposed_test)?, 0.5))?;

    // group thresholds on the unmitigated scores
    let scores_train = unmitigated.score(&run.exposed_train)?;
    let y_train = run.exposed_train.target()?;
    let groups_train = run.exposed_train.groups("A")?;
    let dp_policy = fit_threshold_policy(
        PolicyKind::Dp,
        &scores_train,
        Some(&y_train),
        &groups_train,
        None,
        epsilon,
    )?;
    push(
        "thresh_dp",
        &mitigate::apply_policy(&dp_policy, &scores_test, &run.groups_test, None, seed)?,
    )?;

    let eopp_policy = fit_threshold_policy(
        PolicyKind::Eopp,
        &scores_train,
        Some(&y_train),
        &groups_train,
        None,
        epsilon,
    )?;
    push(
        "thresh_eopp",
        &mitigate::apply_policy(&eopp_policy, &scores_test, &run.groups_test, None, seed)?,
    )?;
    Ok(rows)
}

/// The two bias/mitigation interaction experiments.
pub fn mitigation_scenario(seed: u64) -> Result<MitigationScenario> {
    // (a) historical bias on the resource
    let hist_spec = BiasSpec {
        n: 20_000,
        seed,
        beta_h_r: 1.5,
        ..Default::default()
    };
    let hist = biasgen::generate(&hist_spec)?;
    let hist_run = split_views(&hist, LabelChoice::TrueY, seed ^ 0x5eed)?;
    let historical = run_strategies(&hist_run, 0.005, seed)?;

    // (b) measurement bias on the label: train on P_Y, evaluate against Y
    let meas_spec = BiasSpec {
        n: 20_000,
        seed: seed ^ 1,
        beta_m_y: 1.5,
        ..Default::default()
    };
    let meas = biasgen::generate(&meas_spec)?;
    let meas_run = split_views(&meas, LabelChoice::ProxyY, seed ^ 0xbeef)?;
    let measurement = run_strategies(&meas_run, 0.005, seed)?;

    Ok(MitigationScenario {
        historical,
        measurement,
    })
}

// ---------------------------------------------------------------------------
// Criterion 8: worldview separation on synthetic data
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FairviewScenario {
    pub historical: fairtab::contrast::WorldviewReport,
    pub measurement: fairtab::contrast::WorldviewReport,
}

impl FairviewScenario {
    pub fn render(&self) -> String {
        format!(
            "historical bias on R:\n{}\nmeasurement bias on Y:\n{}",
            self.historical.to_text(),
            self.measurement.to_text()
        )
    }
}

pub fn fairview_config() -> fairtab::contrast::SurrogateConfig {
    fairtab::contrast::SurrogateConfig {
        max_leaves: 6,
        max_depth: 3,
        min_samples_leaf: 300,
        min_rows: 50,
        all_leaves: false,
    }
}

pub fn fairview_scenario(seed: u64) -> Result<FairviewScenario> {
    let config = fairview_config();

    let hist_spec = BiasSpec {
        n: 60_000,
        seed,
        beta_h_r: 1.5,
        ..Default::default()
    };
    let hist = biasgen::generate(&hist_spec)?;
    // the observed decisions are the true labels here
    let hist_view = biasgen::project_view(&hist, false, false, LabelChoice::TrueY, false)?;
    let (_, _, historical) = fairtab::contrast::fairview(&hist_view, "A", &config, 0.05, 50)?;

    let meas_spec = BiasSpec {
        n: 60_000,
        seed: seed ^ 1,
        beta_m_y: 1.5,
        ..Default::default()
    };
    let meas = biasgen::generate(&meas_spec)?;
    // the observed decisions are the biased proxy labels
    let meas_view = biasgen::project_view(&meas, false, false, LabelChoice::ProxyY, false)?;
    let (_, _, measurement) = fairtab::contrast::fairview(&meas_view, "A", &config, 0.05, 50)?;

    Ok(FairviewScenario {
        historical,
        measurement,
    })
}

// ---------------------------------------------------------------------------
// Criterion 9: two-slice drift, shocks, surrogate retraining, delta Shapley
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DriftScenario {
    /// |DP| of the slice-1 policy model per slice.
    pub dp_slice1: f64,
    pub dp_slice2: f64,
    /// |DP| under equal-magnitude shocks on the most important feature.
    pub dp_overall_shock: f64,
    pub dp_conditioned_shock: f64,
    /// |DP| on slice 2 after retraining on surrogate targets.
    pub dp_retrained: f64,
    pub shapley: monitor::DeltaShapleyReport,
    pub shock_target: String,
}

impl DriftScenario {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut table = vec![vec!["context".to_string(), "|dp|".to_string()]];
        for (k, v) in [
            ("slice 1 (fit)", self.dp_slice1),
            ("slice 2 (drifted)", self.dp_slice2),
            (
                &format!("overall shock on {}", self.shock_target),
                self.dp_overall_shock,
            ),
            (
                &format!("conditioned shock on {}", self.shock_target),
                self.dp_conditioned_shock,
            ),
            ("slice 2 after surrogate retrain", self.dp_retrained),
        ] {
            table.push(vec![k.to_string(), report::fmt(v)]);
        }
        out.push_str(&report::text_table(&table));
        out.push('\n');
        out.push_str(&self.shapley.to_text_table());
        out
    }
}

pub fn drift_scenario(seed: u64) -> Result<DriftScenario> {
    let n = 12_000;
    let slice1_spec = BiasSpec {
        n,
        seed,
        beta_h_r: 1.5,
        ..Default::default()
    };
    let slice2_spec = BiasSpec {
        n,
        seed: seed ^ 2,
        beta_h_r: 2.5,
        ..Default::default()
    };
    let slice1 = biasgen::project_view(
        &biasgen::generate(&slice1_spec)?,
        false,
        false,
        LabelChoice::TrueY,
        true,
    )?;
    let slice2 = biasgen::project_view(
        &biasgen::generate(&slice2_spec)?,
        false,
        false,
        LabelChoice::TrueY,
        true,
    )?;

    // slice-1 group-mitigated model: scores + DP thresholds
    let base = mitigate::fit_linear_score(&slice1, &linear_cfg())?;
    let scores1 = base.score(&slice1)?;
    let y1 = slice1.target()?;
    let groups1 = slice1.groups("A")?;
    let policy1 = fit_threshold_policy(PolicyKind::Dp, &scores1, Some(&y1), &groups1, None, 0.005)?;
    let psi1 = PolicyModel::new(base.clone(), policy1, "A")?;

    let dp_of = |ds: &TabularDataset| -> Result<f64> {
        let decisions = labels_at(&psi1.score(ds)?, 0.5);
        Ok(signed_dp(&decisions, &ds.groups("A")?, ds.weights())?.abs())
    };
    let dp_slice1 = dp_of(&slice1)?;
    let dp_slice2 = dp_of(&slice2)?;

    // shock target: largest mean |phi| under the unmitigated base model
    let (shock_target, _) = monitor::most_important_feature(&base, &slice1, 64, 64, seed)?;
    let overall = monitor::apply_shock(
        &slice1,
        &ShockSpec {
            column: shock_target.clone(),
            magnitude: 1.0,
            sign: -1.0,
            scope: ShockScope::Overall,
        },
    )?;
    let conditioned = monitor::apply_shock(
        &slice1,
        &ShockSpec {
            column: shock_target.clone(),
            magnitude: 1.0,
            sign: -1.0,
            scope: ShockScope::Conditioned {
                sensitive: "A".into(),
                class: "1".into(),
            },
        },
    )?;
    let dp_overall_shock = dp_of(&overall)?;
    let dp_conditioned_shock = dp_of(&conditioned)?;

    // individually fair slice-1 model: blinded view
    let ftu_view = mitigate::ftu(&slice1, "A")?;
    let phi1 = mitigate::fit_linear_score(&ftu_view, &linear_cfg())?;
    let targets = monitor::surrogate_targets(&phi1, &slice2, "A", 0.5)?;

    // retrain the group model on slice 2 against the surrogate targets
    let slice2_surrogate = replace_target(&slice2, &targets)?;
    let base2 = mitigate::fit_linear_score(&slice2_surrogate, &linear_cfg())?;
    let scores2 = base2.score(&slice2)?;
    let groups2 = slice2.groups("A")?;
    let policy2 = fit_threshold_policy(
        PolicyKind::Dp,
        &scores2,
        Some(&targets),
        &groups2,
        None,
        0.005,
    )?;
    let psi2 = PolicyModel::new(base2, policy2, "A")?;
    let decisions2 = labels_at(&psi2.score(&slice2)?, 0.5);
    let dp_retrained = signed_dp(&decisions2, &groups2, slice2.weights())?.abs();

    // attribution drift between the two mitigated decision models
    let shapley = monitor::group_delta_shapley(&psi1, &psi2, &slice2, "A", 96, 160, seed ^ 7)?;

    Ok(DriftScenario {
        dp_slice1,
        dp_slice2,
        dp_overall_shock,
        dp_conditioned_shock,
        dp_retrained,
        shapley,
        shock_target,
    })
}

// ---------------------------------------------------------------------------
// Adult census pipeline (criteria 1-3)
// ---------------------------------------------------------------------------

pub fn adult_schema() -> Vec<ColumnSchema> {
    let numeric = [
        "age",
        "fnlwgt",
        "education-num",
        "capital-gain",
        "capital-loss",
        "hours-per-week",
    ];
    let categorical = [
        "workclass",
        "education",
        "marital-status",
        "occupation",
        "relationship",
        "race",
        "native-country",
    ];
    let mut schema = Vec::new();
    for c in numeric {
        schema.push(ColumnSchema::new(c, Kind::Numeric, Role::Feature));
    }
    for c in categorical {
        schema.push(ColumnSchema::new(c, Kind::Categorical, Role::Feature));
    }
    schema.push(ColumnSchema::new("sex", Kind::Categorical, Role::Sensitive));
    schema.push(ColumnSchema::new("income", Kind::Numeric, Role::Target));
    schema
}

const ADULT_RAW_COLUMNS: [&str; 15] = [
    "age",
    "workclass",
    "fnlwgt",
    "education",
    "education-num",
    "marital-status",
    "occupation",
    "relationship",
    "race",
    "sex",
    "capital-gain",
    "capital-loss",
    "hours-per-week",
    "native-country",
    "income",
];

/// Parse the raw UCI `adult.data` file (no header, comma-space separators,
/// `>50K`/`<=50K` labels) into a dataset matching [`adult_schema`].
pub fn load_adult_raw(path: &Path) -> Result<TabularDataset> {
    let text = std::fs::read_to_string(path)?;
    let mut clean = String::with_capacity(text.len());
    clean.push_str(&ADULT_RAW_COLUMNS.join(","));
    clean.push('\n');
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != ADULT_RAW_COLUMNS.len() {
            continue;
        }
        let mut row = Vec::with_capacity(fields.len());
        for (name, value) in ADULT_RAW_COLUMNS.iter().zip(&fields) {
            if *name == "income" {
                row.push(if value.starts_with(">50K") { "1" } else { "0" }.to_string());
            } else {
                row.push((*value).to_string());
            }
        }
        clean.push_str(&row.join(","));
        clean.push('\n');
    }
    let tmp = std::env::temp_dir().join(format!("adult-clean-{}.csv", std::process::id()));
    std::fs::write(&tmp, clean)?;
    let ds = dataset::load_csv(&tmp, &adult_schema());
    let _ = std::fs::remove_file(&tmp);
    ds
}

#[derive(Debug, Clone)]
pub struct AdultFold {
    pub accuracy: f64,
    /// Signed validation DP on sex.
    pub dp: f64,
    pub audit_pass: bool,
    pub flip_sensitivity: f64,
    pub splits_on_sensitive: bool,
}

#[derive(Debug, Clone)]
pub struct AdultDeltaResult {
    pub delta: f64,
    pub folds: Vec<AdultFold>,
    pub median_accuracy: f64,
    pub median_abs_dp: f64,
}

#[derive(Debug, Clone)]
pub struct AdultScenario {
    pub results: Vec<AdultDeltaResult>,
    pub n_rows: usize,
}

impl AdultScenario {
    pub fn result(&self, delta: f64) -> &AdultDeltaResult {
        self.results
            .iter()
            .find(|r| r.delta == delta)
            .expect("delta present")
    }

    pub fn render(&self) -> String {
        let mut table = vec![vec![
            "delta".to_string(),
            "median accuracy".to_string(),
            "median |dp|".to_string(),
            "audits".to_string(),
        ]];
        for r in &self.results {
            table.push(vec![
                format!("{:.2}", r.delta),
                report::fmt(r.median_accuracy),
                report::fmt(r.median_abs_dp),
                if r.folds
                    .iter()
                    .all(|f| f.audit_pass && !f.splits_on_sensitive)
                {
                    "pass".to_string()
                } else {
                    "FAIL".to_string()
                },
            ]);
        }
        format!(
            "adult (n={}), 5-fold medians per delta\n{}",
            self.n_rows,
            report::text_table(&table)
        )
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Quartile+one-hot encoding fitted per fold, FFTree with FC = DP on sex,
/// 5-fold medians of validation accuracy and DP, plus the structural audits.
pub fn run_adult(ds: &TabularDataset, deltas: &[f64], seed: u64) -> Result<AdultScenario> {
    let folds = ds.kfold(5, seed)?;
    let config = GrowthConfig::default();
    let mut results = Vec::new();
    for delta in deltas {
        let constraint = FairnessConstraint::new(Criterion::Dp, "sex", *delta);
        let mut fold_rows = Vec::new();
        for (train, validation) in &folds {
            let (train_encoded, map) = dataset::encode(train, &vec![true; train.n_rows()])?;
            let (validation_encoded, _) = map.apply(validation)?;
            let model = fftree::fit(&train_encoded, std::slice::from_ref(&constraint), &config)?;
            let yhat = model.predict_label(&validation_encoded, 0.5)?;
            let y = validation_encoded.target()?;
            let groups = validation_encoded.groups("sex")?;
            let conf = group_confusion(&y, &yhat, &groups, validation_encoded.weights())?;
            let dp = group_metric_difference(MetricKind::Dp, &conf)
                .value()
                .unwrap_or(f64::NAN);
            let audit = fftree::audit_compliance(&model, &train_encoded)?;
            let flip = metrics::flip_sensitivity(&model, &validation_encoded, "sex", 0.5)?;
            fold_rows.push(AdultFold {
                accuracy: accuracy(&y, &yhat),
                dp,
                audit_pass: audit.pass,
                flip_sensitivity: flip,
                splits_on_sensitive: !model.avoids_columns(&["sex".to_string()]),
            });
        }
        let mut accs: Vec<f64> = fold_rows.iter().map(|f| f.accuracy).collect();
        let mut dps: Vec<f64> = fold_rows.iter().map(|f| f.dp.abs()).collect();
        results.push(AdultDeltaResult {
            delta: *delta,
            median_accuracy: median(&mut accs),
            median_abs_dp: median(&mut dps),
            folds: fold_rows,
        });
    }
    Ok(AdultScenario {
        results,
        n_rows: ds.n_rows(),
    })
}

pub fn adult_scenario(raw: &Path, deltas: &[f64], seed: u64) -> Result<AdultScenario> {
    let ds = load_adult_raw(raw)?;
    run_adult(&ds, deltas, seed)
}
