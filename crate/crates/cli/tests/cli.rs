//! End-to-end CLI behaviour: exit codes, determinism, file outputs.

use std::fs;
use std::path::{Path, PathBuf};

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["fairtab".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    fairtab_cli::run(argv)
}

fn dir() -> tempfile::TempDir {
    tempfile::tempdir().unwrap()
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_spec(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("spec.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["no-such-command"]), 2);
    assert_eq!(run(&["generate"]), 2); // missing required flags
    assert_eq!(run(&["--help"]), 0);
}

#[test]
fn domain_errors_exit_1() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 0}"#); // invalid spec
    let out = d.path().join("d.csv");
    assert_eq!(
        run(&[
            "generate",
            "--config",
            &path_str(&spec),
            "--out",
            &path_str(&out),
            "--seed",
            "7"
        ]),
        1
    );
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 500, "beta_h_r": 1.0}"#);
    let out1 = d.path().join("d1.csv");
    let out2 = d.path().join("d2.csv");
    for out in [&out1, &out2] {
        assert_eq!(
            run(&[
                "generate",
                "--config",
                &path_str(&spec),
                "--out",
                &path_str(out),
                "--seed",
                "7"
            ]),
            0
        );
    }
    assert_eq!(fs::read(&out1).unwrap(), fs::read(&out2).unwrap());
    // sidecar records the spec and the labelling threshold
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.path().join("d1.csv.meta.json")).unwrap())
            .unwrap();
    assert!(meta["report"]["threshold_used"].is_number());
    assert!(meta["config_hash"].is_string());
}

/// generate -> train (fftree with a DP constraint) -> evaluate -> compare
#[test]
fn full_pipeline_through_the_cli() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 3000, "beta_h_r": 1.5}"#);
    let data = d.path().join("d.csv");
    assert_eq!(
        run(&[
            "generate",
            "--config",
            &path_str(&spec),
            "--out",
            &path_str(&data),
            "--seed",
            "3"
        ]),
        0
    );

    // constrained tree on the generated view
    let model = d.path().join("tree.json");
    assert_eq!(
        run(&[
            "train",
            "--data",
            &path_str(&data),
            "--model",
            "fftree",
            "--constraint",
            "dp:0.1:A",
            "--min-samples-leaf",
            "20",
            "--min-samples-split",
            "40",
            "--out",
            &path_str(&model),
        ]),
        0
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(parsed["type"], "fftree");

    // a linear baseline
    let linear = d.path().join("linear.json");
    assert_eq!(
        run(&[
            "train",
            "--data",
            &path_str(&data),
            "--model",
            "linear",
            "--out",
            &path_str(&linear),
        ]),
        0
    );

    // evaluate both against the sensitive attribute
    let rep_tree = d.path().join("tree-report.json");
    let rep_linear = d.path().join("linear-report.json");
    for (model_path, report_path) in [(&model, &rep_tree), (&linear, &rep_linear)] {
        assert_eq!(
            run(&[
                "evaluate",
                "--data",
                &path_str(&data),
                "--model",
                &path_str(model_path),
                "--sensitive",
                "A",
                "--out",
                &path_str(report_path),
                "--format",
                "json",
            ]),
            0
        );
        let report: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(report_path).unwrap()).unwrap();
        assert!(report["report"]["values"]["accuracy"].is_number());
        assert!(report["report"]["values"]["dp_diff"].is_number());
        assert!(report["report"]["values"]["flip_sensitivity"].is_number());
    }

    // the constrained tree never reads A: flip sensitivity is exactly 0
    let tree_report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&rep_tree).unwrap()).unwrap();
    assert_eq!(tree_report["report"]["values"]["flip_sensitivity"], 0.0);

    let comparison = d.path().join("comparison.json");
    assert_eq!(
        run(&[
            "compare",
            &path_str(&rep_tree),
            &path_str(&rep_linear),
            "--phi-key",
            "dp_diff",
            "--pi-key",
            "accuracy",
            "--Phi",
            "0.2",
            "--out",
            &path_str(&comparison),
        ]),
        0
    );
    let comparison: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&comparison).unwrap()).unwrap();
    assert!(comparison["report"]["rows"].as_array().unwrap().len() == 2);
}

#[test]
fn train_reports_missing_sensitive_column() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 400}"#);
    let data = d.path().join("d.csv");
    run(&[
        "generate",
        "--config",
        &path_str(&spec),
        "--out",
        &path_str(&data),
        "--seed",
        "1",
    ]);
    let model = d.path().join("m.json");
    let code = run(&[
        "train",
        "--data",
        &path_str(&data),
        "--model",
        "fftree",
        "--constraint",
        "dp:0.1:gender",
        "--out",
        &path_str(&model),
    ]);
    assert_eq!(code, 1, "NoSensitiveColumn is a domain error");
}

#[test]
fn encode_emits_map_and_round_trips() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 300}"#);
    let data = d.path().join("d.csv");
    run(&[
        "generate",
        "--config",
        &path_str(&spec),
        "--out",
        &path_str(&data),
        "--seed",
        "2",
    ]);
    let out = d.path().join("encoded.csv");
    let map = d.path().join("map.json");
    assert_eq!(
        run(&[
            "encode",
            "--data",
            &path_str(&data),
            "--out",
            &path_str(&out),
            "--map-out",
            &path_str(&map)
        ]),
        0
    );
    let map: fairtab::dataset::EncodingMap =
        serde_json::from_str(&fs::read_to_string(&map).unwrap()).unwrap();
    assert!(!map.entries.is_empty());
    // encoded file reloads through its schema sidecar
    let schema =
        fairtab::dataset::read_schema_json(&out.with_extension("csv.schema.json")).unwrap();
    let encoded = fairtab::dataset::load_csv(&out, &schema).unwrap();
    assert!(encoded.feature_names().iter().any(|f| f.contains("=q")));
}

#[test]
fn mitigate_methods_produce_outputs() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 2000, "beta_h_r": 1.0}"#);
    let data = d.path().join("d.csv");
    run(&[
        "generate",
        "--config",
        &path_str(&spec),
        "--out",
        &path_str(&data),
        "--seed",
        "5",
    ]);

    // sampling requires a seed
    let sampled = d.path().join("sampled.csv");
    assert_eq!(
        run(&[
            "mitigate",
            "--data",
            &path_str(&data),
            "--method",
            "sampling",
            "--sensitive",
            "A",
            "--out",
            &path_str(&sampled)
        ]),
        1
    );
    assert_eq!(
        run(&[
            "mitigate",
            "--data",
            &path_str(&data),
            "--method",
            "sampling",
            "--sensitive",
            "A",
            "--seed",
            "9",
            "--out",
            &path_str(&sampled)
        ]),
        0
    );
    assert!(sampled.exists());

    // massaging with the internal ranker
    let massaged = d.path().join("massaged.csv");
    assert_eq!(
        run(&[
            "mitigate",
            "--data",
            &path_str(&data),
            "--method",
            "massaging",
            "--sensitive",
            "A",
            "--out",
            &path_str(&massaged)
        ]),
        0
    );

    // threshold policy from a linear model
    let linear = d.path().join("linear.json");
    run(&[
        "train",
        "--data",
        &path_str(&data),
        "--model",
        "linear",
        "--out",
        &path_str(&linear),
    ]);
    let policy = d.path().join("policy.json");
    assert_eq!(
        run(&[
            "mitigate",
            "--data",
            &path_str(&data),
            "--method",
            "thresh-dp",
            "--sensitive",
            "A",
            "--model",
            &path_str(&linear),
            "--epsilon",
            "0.02",
            "--out",
            &path_str(&policy)
        ]),
        0
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&policy).unwrap()).unwrap();
    assert_eq!(parsed["report"]["kind"], "dp");
    assert!(parsed["report"]["achieved_gap"].as_f64().unwrap() <= 0.02);

    // evaluating through the policy must reproduce a small acceptance gap
    let report = d.path().join("policy-report.json");
    assert_eq!(
        run(&[
            "evaluate",
            "--data",
            &path_str(&data),
            "--model",
            &path_str(&linear),
            "--policy",
            &path_str(&policy),
            "--sensitive",
            "A",
            "--out",
            &path_str(&report),
            "--format",
            "json",
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let dp = report["report"]["values"]["dp_diff"].as_f64().unwrap();
    assert!(dp.abs() <= 0.02 + 1e-9, "policy-evaluated dp {dp}");
}

#[test]
fn monitor_shock_and_shapley_run() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 1500, "beta_h_r": 1.2}"#);
    let data = d.path().join("d.csv");
    run(&[
        "generate",
        "--config",
        &path_str(&spec),
        "--out",
        &path_str(&data),
        "--seed",
        "4",
    ]);
    let linear = d.path().join("linear.json");
    run(&[
        "train",
        "--data",
        &path_str(&data),
        "--model",
        "linear",
        "--out",
        &path_str(&linear),
    ]);

    let shock_report = d.path().join("shock.json");
    assert_eq!(
        run(&[
            "monitor",
            "shock",
            "--data",
            &path_str(&data),
            "--model",
            &path_str(&linear),
            "--shock",
            "R:-1.0sd:1",
            "--sensitive",
            "A",
            "--out",
            &path_str(&shock_report)
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&shock_report).unwrap()).unwrap();
    assert_eq!(report["report"]["rows"].as_array().unwrap().len(), 2);

    // most-important-feature mode (no second model)
    assert_eq!(
        run(&[
            "monitor",
            "shapley",
            "--data",
            &path_str(&data),
            "--model",
            &path_str(&linear),
            "--sensitive",
            "A",
            "--background",
            "32",
            "--sample",
            "32",
            "--seed",
            "11"
        ]),
        0
    );
}

#[test]
fn generate_applies_representation_bias_from_config() {
    let d = dir();
    let spec = write_spec(
        d.path(),
        r#"{"n": 1000, "p_a": 0.5, "p_u": 0.5, "undersample_mode": "low_r"}"#,
    );
    let data = d.path().join("d.csv");
    assert_eq!(
        run(&[
            "generate",
            "--config",
            &path_str(&spec),
            "--out",
            &path_str(&data),
            "--seed",
            "6"
        ]),
        0
    );
    let schema = fairtab::dataset::read_schema_json(&d.path().join("d.csv.schema.json")).unwrap();
    let ds = fairtab::dataset::load_csv(&data, &schema).unwrap();
    assert!(
        ds.n_rows() < 1000,
        "undersampling must drop rows, kept {}",
        ds.n_rows()
    );
    let groups = ds.groups("A").unwrap();
    let ones = groups
        .ids
        .iter()
        .filter(|id| groups.labels[**id as usize] == "1")
        .count();
    let zeros = ds.n_rows() - ones;
    assert_eq!(ones, (0.5 * zeros as f64).round() as usize);
}

#[test]
fn fairview_cli_prints_rules_with_group_columns() {
    let d = dir();
    let spec = write_spec(d.path(), r#"{"n": 4000, "beta_h_r": 1.5}"#);
    let data = d.path().join("d.csv");
    run(&[
        "generate",
        "--config",
        &path_str(&spec),
        "--out",
        &path_str(&data),
        "--seed",
        "2",
    ]);
    let out = d.path().join("worldview.json");
    assert_eq!(
        run(&[
            "fairview",
            "--data",
            &path_str(&data),
            "--sensitive",
            "A",
            "--max-leaves",
            "4",
            "--depth",
            "3",
            "--out",
            &path_str(&out)
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["report"]["rules"]
        .as_array()
        .map(|r| !r.is_empty())
        .unwrap_or(false));
    assert!(
        report["report"]["surrogate_quality"]
            .as_array()
            .unwrap()
            .len()
            == 2
    );
}

#[test]
fn monitor_slices_reports_per_year() {
    use fairtab::dataset::{Column, Role, TabularDataset};
    let d = dir();
    // two-year panel with a drifting feature
    let n = 400;
    let ds = TabularDataset::new(vec![
        Column::numeric(
            "year",
            Role::Slice,
            (0..n).map(|i| 2018.0 + (i % 2) as f64).collect(),
        ),
        Column::numeric(
            "x",
            Role::Feature,
            (0..n)
                .map(|i| (i % 10) as f64 + (i % 2) as f64 * 3.0)
                .collect(),
        ),
        Column::numeric(
            "A",
            Role::Sensitive,
            (0..n).map(|i| ((i / 2) % 2) as f64).collect(),
        ),
        Column::numeric(
            "y",
            Role::Target,
            (0..n).map(|i| f64::from(i % 10 > 4)).collect(),
        ),
    ])
    .unwrap();
    let data = d.path().join("panel.csv");
    fairtab::dataset::write_csv(&ds, &data).unwrap();
    fairtab::dataset::write_schema_json(&d.path().join("panel.csv.schema.json"), &ds.schema())
        .unwrap();
    let model = d.path().join("m.json");
    assert_eq!(
        run(&[
            "train",
            "--data",
            &path_str(&data),
            "--model",
            "linear",
            "--out",
            &path_str(&model)
        ]),
        0
    );
    let out = d.path().join("slices.json");
    assert_eq!(
        run(&[
            "monitor",
            "slices",
            "--data",
            &path_str(&data),
            "--model",
            &path_str(&model),
            "--slice-col",
            "year",
            "--sensitive",
            "A",
            "--out",
            &path_str(&out)
        ]),
        0
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let rows = report["report"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["context"], "2018");
    assert_eq!(rows[1]["context"], "2019");
    assert!(rows[0]["accuracy"].is_number());
}

/// The census pipeline parses the raw UCI layout (no header, comma-space
/// separators, string income labels) and runs the full 5-fold protocol.
#[test]
fn adult_pipeline_handles_raw_format() {
    let d = dir();
    let raw = d.path().join("adult.data");
    let mut lines = String::new();
    for i in 0..400 {
        let sex = if i % 2 == 0 { "Male" } else { "Female" };
        let income = if (i / 2) % 2 == 0 { ">50K" } else { "<=50K" };
        let workclass = ["Private", "State-gov", "?"][i % 3];
        lines.push_str(&format!(
            "{}, {workclass}, {}, Bachelors, 13, Never-married, Adm-clerical, \
             Not-in-family, White, {sex}, {}, 0, {}, United-States, {income}\n",
            20 + i % 40,
            10000 + i * 7,
            i % 2000,
            20 + i % 50
        ));
    }
    fs::write(&raw, lines).unwrap();
    let ds = fairtab_cli::scenarios::load_adult_raw(&raw).unwrap();
    assert_eq!(ds.n_rows(), 400);
    assert_eq!(ds.sensitive_names(), vec!["sex"]);
    // the "?" marker stays an ordinary category
    let workclass = ds.groups("workclass").unwrap();
    assert!(workclass.labels.contains(&"?".to_string()));

    let scenario = fairtab_cli::scenarios::run_adult(&ds, &[0.2], 1).unwrap();
    assert_eq!(scenario.results.len(), 1);
    assert_eq!(scenario.results[0].folds.len(), 5);
    assert!(scenario.results[0].median_accuracy.is_finite());
    assert!(scenario.results[0].folds.iter().all(|f| f.audit_pass));
}

#[test]
fn repro_scenarios_print_tables() {
    // smallest scenario end-to-end through the CLI surface
    assert_eq!(run(&["repro", "--scenario", "drift", "--seed", "42"]), 0);
    assert_eq!(run(&["repro", "--scenario", "nope", "--seed", "1"]), 1);
}
