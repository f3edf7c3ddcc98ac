//! Command-line front-end: generate, encode, train, evaluate, mitigate,
//! compare, fairview, monitor and scripted reproduction pipelines.
//!
//! Exit codes: 0 success, 1 domain error (the error name is printed on
//! stderr), 2 usage error. Outputs are written atomically and every report
//! embeds a hash of the invocation that produced it.

pub mod scenarios;

use clap::{Args, Parser, Subcommand};
use fairtab::biasgen::{self, BiasSpec, GenerateSidecar};
use fairtab::compare::{self, EvaluatedModel, Family};
use fairtab::contrast::{fairview, SurrogateConfig};
use fairtab::dataset::{self, TabularDataset};
use fairtab::error::Error;
use fairtab::fftree::{self, Criterion, FFTreeModel, FairnessConstraint, GrowthConfig};
use fairtab::metrics::{self, EvalOptions, MetricsReport, ReportMeta, Scorer};
use fairtab::mitigate::{self, LinearConfig, LinearScoreModel, PolicyKind};
use fairtab::monitor::{self, ShockSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(
    name = "fairtab",
    version,
    about = "fairness toolkit for tabular binary classification"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct DataArgs {
    /// Input CSV (RFC-4180, header row required).
    #[arg(long)]
    data: PathBuf,
    /// Schema JSON; defaults to `<data>.schema.json`.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<TabularDataset, Error> {
        let schema_path = match &self.schema {
            Some(p) => p.clone(),
            None => {
                let mut p = self.data.clone().into_os_string();
                p.push(".schema.json");
                PathBuf::from(p)
            }
        };
        let schema = dataset::read_schema_json(&schema_path)?;
        dataset::load_csv(&self.data, &schema)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a synthetic biased dataset from a spec file.
    Generate {
        /// BiasSpec JSON; missing fields take the documented defaults.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: u64,
    },
    /// Quartile-bin and one-hot encode the feature columns.
    Encode {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        out: PathBuf,
        /// Where to store the fitted encoding map.
        #[arg(long)]
        map_out: PathBuf,
    },
    /// Fit a model.
    Train {
        #[command(flatten)]
        data: DataArgs,
        /// fftree | linear
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        /// Repeatable, format KIND:DELTA:COLUMN (e.g. dp:0.05:gender).
        #[arg(long = "constraint")]
        constraints: Vec<String>,
        /// Quartile+one-hot encode before fitting; writes the map next to
        /// the model.
        #[arg(long)]
        encode: bool,
        #[arg(long, default_value_t = 8)]
        max_depth: usize,
        #[arg(long, default_value_t = 50)]
        min_samples_leaf: usize,
        #[arg(long, default_value_t = 100)]
        min_samples_split: usize,
        #[arg(long, default_value_t = 400)]
        iterations: usize,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
    },
    /// Compute the metric suite for a model on a dataset.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        sensitive: String,
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        /// Post-processing policy applied to the model scores; decisions
        /// come from the policy instead of the plain tau threshold.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Seed for randomized (equalized-odds) policies.
        #[arg(long)]
        policy_seed: Option<u64>,
        /// Also compute the O(n^2) similarity metrics.
        #[arg(long)]
        with_similarity: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Transform a dataset or fit a post-processing policy.
    Mitigate {
        #[command(flatten)]
        data: DataArgs,
        /// suppression | ftu | massaging | reweighing | sampling |
        /// thresh-dp | thresh-eopp | thresh-eodds | thresh-cdp
        #[arg(long)]
        method: String,
        #[arg(long)]
        sensitive: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.15)]
        corr_threshold: f64,
        /// Score model for ranking/threshold methods; massaging trains its
        /// own ranker when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        stratum: Option<String>,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Required by the resampling method.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank evaluation reports on the fairness-performance plane.
    Compare {
        /// Evaluation report JSON files.
        reports: Vec<PathBuf>,
        #[arg(long, default_value = "dp_diff")]
        phi_key: String,
        #[arg(long, default_value = "f1")]
        pi_key: String,
        #[arg(long = "Phi")]
        phi_bound: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Per-group rule extraction and worldview evidence.
    Fairview {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        sensitive: String,
        #[arg(long, default_value_t = 0.05)]
        threshold: f64,
        #[arg(long, default_value_t = 10)]
        min_size: usize,
        #[arg(long, default_value_t = 8)]
        max_leaves: usize,
        #[arg(long, default_value_t = 4)]
        depth: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Temporal fairness monitoring.
    Monitor {
        #[command(subcommand)]
        sub: MonitorCommand,
    },
    /// Scripted experiment pipelines.
    Repro {
        /// mitigation | fairview | drift | adult
        #[arg(long)]
        scenario: String,
        #[arg(long)]
        seed: u64,
        /// Raw UCI census file (adult scenario only).
        #[arg(long)]
        adult_data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
enum MonitorCommand {
    /// Evaluate a model per temporal slice.
    Slices {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        slice_col: String,
        #[arg(long)]
        sensitive: String,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Stress-test fairness under a feature shock.
    Shock {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        /// column:+1.0sd or column:-0.5sd:class
        #[arg(long)]
        shock: String,
        #[arg(long)]
        sensitive: String,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Exact Shapley attributions; with two models, their deltas.
    Shapley {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        model2: Option<PathBuf>,
        #[arg(long)]
        sensitive: String,
        #[arg(long, default_value_t = 128)]
        background: usize,
        #[arg(long, default_value_t = 256)]
        sample: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Emit surrogate retraining targets from an individually fair model.
    Retrain {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        individual_model: PathBuf,
        #[arg(long)]
        sensitive: String,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Model container written by `train` and consumed everywhere else.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelFile {
    Fftree(FFTreeModel),
    Linear(LinearScoreModel),
}

impl ModelFile {
    pub fn load(path: &Path) -> Result<Self, Error> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn as_scorer(&self) -> &dyn Scorer {
        match self {
            ModelFile::Fftree(m) => m,
            ModelFile::Linear(m) => m,
        }
    }
}

/// Atomic write: temp file in the target directory, then rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), Error> {
    let tmp = path.with_extension("tmp~");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn config_hash(argv: &[String]) -> String {
    let mut hasher = Sha256::new();
    for a in argv {
        hasher.update(a.as_bytes());
        hasher.update([0]);
    }
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Serialize)]
struct ReportFile<'a, T: Serialize> {
    config_hash: &'a str,
    command: &'a str,
    report: &'a T,
}

fn write_report<T: Serialize>(
    path: &Path,
    hash: &str,
    command: &str,
    report: &T,
) -> Result<(), Error> {
    let file = ReportFile {
        config_hash: hash,
        command,
        report,
    };
    write_atomic(path, serde_json::to_string_pretty(&file)?.as_bytes())
}

fn write_dataset(ds: &TabularDataset, path: &Path) -> Result<(), Error> {
    // CSV plus a schema sidecar so downstream commands reload it exactly
    let tmp = path.with_extension("tmp~");
    dataset::write_csv(ds, &tmp)?;
    std::fs::rename(&tmp, path)?;
    let mut schema_path = path.to_path_buf().into_os_string();
    schema_path.push(".schema.json");
    dataset::write_schema_json(&PathBuf::from(schema_path), &ds.schema())?;
    Ok(())
}

fn parse_constraint(text: &str) -> Result<FairnessConstraint, Error> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::BadConfig(format!(
            "constraint '{text}' is not KIND:DELTA:COLUMN"
        )));
    }
    let delta: f64 = parts[1]
        .parse()
        .map_err(|_| Error::BadConfig(format!("bad delta '{}'", parts[1])))?;
    Ok(FairnessConstraint::new(
        Criterion::parse(parts[0])?,
        parts[2],
        delta,
    ))
}

/// Run the CLI against an argument vector; returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap distinguishes help/version (success) from usage errors
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let hash = config_hash(&argv);
    match dispatch(cli.command, &hash) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.name());
            1
        }
    }
}

fn dispatch(command: Command, hash: &str) -> Result<(), Error> {
    match command {
        Command::Generate { config, out, seed } => {
            let text = std::fs::read_to_string(&config)?;
            let mut spec: BiasSpec = serde_json::from_str(&text)?;
            spec.seed = seed;
            let mut sample = biasgen::generate(&spec)?;
            if spec.undersample_mode != biasgen::UndersampleMode::None && spec.p_u < 1.0 {
                sample = biasgen::apply_representation_bias(
                    &sample,
                    spec.p_u,
                    spec.undersample_mode,
                    seed,
                )?;
            }
            write_dataset(&sample.dataset, &out)?;
            let sidecar = GenerateSidecar {
                spec,
                threshold_used: sample.threshold_used,
            };
            let mut meta = out.into_os_string();
            meta.push(".meta.json");
            write_report(&PathBuf::from(meta), hash, "generate", &sidecar)?;
            Ok(())
        }
        Command::Encode { data, out, map_out } => {
            let ds = data.load()?;
            let (encoded, map) = dataset::encode(&ds, &vec![true; ds.n_rows()])?;
            write_dataset(&encoded, &out)?;
            write_atomic(&map_out, serde_json::to_string_pretty(&map)?.as_bytes())?;
            Ok(())
        }
        Command::Train {
            data,
            model,
            out,
            constraints,
            encode,
            max_depth,
            min_samples_leaf,
            min_samples_split,
            iterations,
            learning_rate,
        } => {
            let mut ds = data.load()?;
            let mut encoding_ref = None;
            if encode {
                let (encoded, map) = dataset::encode(&ds, &vec![true; ds.n_rows()])?;
                let map_path = out.with_extension("encoding.json");
                write_atomic(&map_path, serde_json::to_string_pretty(&map)?.as_bytes())?;
                encoding_ref = Some(map_path.display().to_string());
                ds = encoded;
            }
            let file = match model.as_str() {
                "fftree" => {
                    let constraints = constraints
                        .iter()
                        .map(|c| parse_constraint(c))
                        .collect::<Result<Vec<_>, _>>()?;
                    let config = GrowthConfig {
                        max_depth,
                        min_samples_leaf,
                        min_samples_split,
                        ..GrowthConfig::default()
                    };
                    let mut fitted = fftree::fit(&ds, &constraints, &config)?;
                    fitted.encoding_ref = encoding_ref;
                    ModelFile::Fftree(fitted)
                }
                "linear" => {
                    let config = LinearConfig {
                        iterations,
                        learning_rate,
                        l2: 0.0,
                    };
                    ModelFile::Linear(mitigate::fit_linear_score(&ds, &config)?)
                }
                other => return Err(Error::BadConfig(format!("unknown model family '{other}'"))),
            };
            write_atomic(&out, serde_json::to_string_pretty(&file)?.as_bytes())?;
            Ok(())
        }
        Command::Evaluate {
            data,
            model,
            sensitive,
            stratum,
            tau,
            policy,
            policy_seed,
            with_similarity,
            out,
            format,
        } => {
            let ds = data.load()?;
            let model = ModelFile::load(&model)?;
            let scorer = model.as_scorer();
            let scores = scorer.score(&ds)?;
            let yhat = match &policy {
                Some(policy_path) => {
                    // accept both the bare policy and the report wrapper
                    let value: serde_json::Value =
                        serde_json::from_str(&std::fs::read_to_string(policy_path)?)?;
                    let policy: mitigate::ThresholdPolicy =
                        serde_json::from_value(value.get("report").cloned().unwrap_or(value))?;
                    let randomized = policy.entries.iter().any(|e| e.t_lo != e.t_hi);
                    let seed = match (randomized, policy_seed) {
                        (true, None) => {
                            return Err(Error::BadConfig(
                                "randomized policies require --policy-seed".into(),
                            ))
                        }
                        (_, seed) => seed.unwrap_or(0),
                    };
                    let groups = ds.groups(&sensitive)?;
                    let strata = match &stratum {
                        Some(s) => Some(ds.groups(s)?),
                        None => None,
                    };
                    mitigate::apply_policy(&policy, &scores, &groups, strata.as_ref(), seed)?
                }
                None => metrics::labels_at(&scores, tau),
            };
            let y = ds.target()?;
            let groups = ds.groups(&sensitive)?;
            let strata = match &stratum {
                Some(s) => Some(ds.groups(s)?),
                None => None,
            };
            let meta = ReportMeta {
                dataset_id: data.data.display().to_string(),
                model_id: String::new(),
                sensitive: sensitive.clone(),
                stratum: stratum.clone(),
                distance: String::new(),
            };
            let options = EvalOptions {
                tau,
                with_similarity,
                ..EvalOptions::default()
            };
            let x = if with_similarity {
                Some(metrics::feature_matrix(&ds)?.1)
            } else {
                None
            };
            let mut report = metrics::evaluate_predictions(
                meta,
                &y,
                &yhat,
                Some(&scores),
                &groups,
                ds.weights(),
                strata.as_ref(),
                x.as_deref(),
                &options,
            )?;
            if groups.n_groups() == 2 {
                report.values.insert(
                    "flip_sensitivity".into(),
                    metrics::flip_sensitivity(scorer, &ds, &sensitive, tau)?,
                );
            }
            match format {
                Format::Table => print!("{}", report.to_text_table()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(out) = out {
                write_report(&out, hash, "evaluate", &report)?;
            }
            Ok(())
        }
        Command::Mitigate {
            data,
            method,
            sensitive,
            out,
            corr_threshold,
            model,
            stratum,
            epsilon,
            seed,
        } => {
            let ds = data.load()?;
            match method.as_str() {
                "suppression" => {
                    let (suppressed, summary) =
                        mitigate::suppress(&ds, &sensitive, corr_threshold)?;
                    write_dataset(&suppressed, &out)?;
                    let mut meta = out.into_os_string();
                    meta.push(".meta.json");
                    write_report(&PathBuf::from(meta), hash, "mitigate", &summary)?;
                }
                "ftu" => {
                    write_dataset(&mitigate::ftu(&ds, &sensitive)?, &out)?;
                }
                "massaging" => {
                    let scores = match model {
                        Some(path) => ModelFile::load(&path)?.as_scorer().score(&ds)?,
                        None => {
                            let ranker = mitigate::fit_linear_score(&ds, &LinearConfig::default())?;
                            ranker.score(&ds)?
                        }
                    };
                    let (massaged, summary) = mitigate::massage(&ds, &sensitive, &scores)?;
                    write_dataset(&massaged, &out)?;
                    let mut meta = out.into_os_string();
                    meta.push(".meta.json");
                    write_report(&PathBuf::from(meta), hash, "mitigate", &summary)?;
                }
                "reweighing" => {
                    let (table, _) = mitigate::reweigh(&ds, &sensitive)?;
                    write_report(&out, hash, "mitigate", &table)?;
                }
                "sampling" => {
                    let seed =
                        seed.ok_or_else(|| Error::BadConfig("sampling requires --seed".into()))?;
                    write_dataset(&mitigate::resample(&ds, &sensitive, seed)?, &out)?;
                    let mut meta = out.into_os_string();
                    meta.push(".meta.json");
                    write_report(
                        &PathBuf::from(meta),
                        hash,
                        "mitigate",
                        &serde_json::json!({"method": "sampling", "sensitive": sensitive, "seed": seed}),
                    )?;
                }
                kind @ ("thresh-dp" | "thresh-eopp" | "thresh-eodds" | "thresh-cdp") => {
                    let model_path = model.ok_or_else(|| {
                        Error::BadConfig("threshold methods require --model".into())
                    })?;
                    let scorer = ModelFile::load(&model_path)?;
                    let scores = scorer.as_scorer().score(&ds)?;
                    let groups = ds.groups(&sensitive)?;
                    let y = ds.target().ok();
                    let strata = match &stratum {
                        Some(s) => Some(ds.groups(s)?),
                        None => None,
                    };
                    let kind = match kind {
                        "thresh-dp" => PolicyKind::Dp,
                        "thresh-eopp" => PolicyKind::Eopp,
                        "thresh-eodds" => PolicyKind::Eodds,
                        _ => PolicyKind::Cdp,
                    };
                    let policy = mitigate::fit_threshold_policy(
                        kind,
                        &scores,
                        y.as_deref(),
                        &groups,
                        strata.as_ref(),
                        epsilon,
                    )?;
                    write_report(&out, hash, "mitigate", &policy)?;
                    if !policy.achievable {
                        eprintln!(
                            "warning: epsilon {epsilon} unattainable; best gap {}",
                            policy.achieved_gap
                        );
                    }
                }
                other => return Err(Error::BadConfig(format!("unknown method '{other}'"))),
            }
            Ok(())
        }
        Command::Compare {
            reports,
            phi_key,
            pi_key,
            phi_bound,
            beta,
            out,
            format,
        } => {
            if reports.is_empty() {
                return Err(Error::BadConfig("compare needs at least one report".into()));
            }
            let mut models = Vec::new();
            for path in &reports {
                let value: serde_json::Value =
                    serde_json::from_str(&std::fs::read_to_string(path)?)?;
                let report: MetricsReport =
                    serde_json::from_value(value.get("report").cloned().unwrap_or(value))?;
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().to_string())
                    .unwrap_or_else(|| path.display().to_string());
                models.push(EvaluatedModel {
                    id,
                    family: Family::None,
                    metrics: report,
                });
            }
            let report = compare::compare(&models, &phi_key, &pi_key, phi_bound, beta)?;
            match format {
                Format::Table => print!("{}", report.to_text_table()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            match &report.winner {
                Some(winner) => println!("winner: {winner}"),
                None => println!("winner: none (empty feasible set)"),
            }
            if let Some(out) = out {
                write_report(&out, hash, "compare", &report)?;
            }
            Ok(())
        }
        Command::Fairview {
            data,
            sensitive,
            threshold,
            min_size,
            max_leaves,
            depth,
            out,
            format,
        } => {
            let ds = data.load()?;
            let config = SurrogateConfig {
                max_leaves,
                max_depth: depth,
                ..SurrogateConfig::default()
            };
            let (_, contrasts, report) = fairview(&ds, &sensitive, &config, threshold, min_size)?;
            match format {
                Format::Table => {
                    print!("{}", fairtab::contrast::contrast_table(&contrasts));
                    print!("{}", report.to_text())
                }
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(out) = out {
                write_report(&out, hash, "fairview", &report)?;
            }
            Ok(())
        }
        Command::Monitor { sub } => dispatch_monitor(sub, hash),
        Command::Repro {
            scenario,
            seed,
            adult_data,
            out,
        } => {
            let text = match scenario.as_str() {
                "mitigation" => scenarios::mitigation_scenario(seed)?.render(),
                "fairview" => scenarios::fairview_scenario(seed)?.render(),
                "drift" => scenarios::drift_scenario(seed)?.render(),
                "adult" => {
                    let raw = adult_data.ok_or_else(|| {
                        Error::BadConfig("adult scenario requires --adult-data".into())
                    })?;
                    scenarios::adult_scenario(&raw, &[0.05, 0.10, 0.15, 0.20], seed)?.render()
                }
                other => return Err(Error::BadConfig(format!("unknown scenario '{other}'"))),
            };
            print!("{text}");
            if let Some(out) = out {
                write_atomic(&out, text.as_bytes())?;
            }
            Ok(())
        }
    }
}

fn dispatch_monitor(sub: MonitorCommand, hash: &str) -> Result<(), Error> {
    match sub {
        MonitorCommand::Slices {
            data,
            model,
            slice_col,
            sensitive,
            tau,
            out,
            format,
        } => {
            let ds = data.load()?;
            let slices = ds.slice_by(&slice_col)?;
            let model = ModelFile::load(&model)?;
            let report = monitor::evaluate_over_slices(
                model.as_scorer(),
                "model",
                &slices,
                &sensitive,
                tau,
            )?;
            match format {
                Format::Table => print!("{}", report.to_text_table()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(out) = out {
                write_report(&out, hash, "monitor slices", &report)?;
            }
            Ok(())
        }
        MonitorCommand::Shock {
            data,
            model,
            shock,
            sensitive,
            tau,
            out,
            format,
        } => {
            let ds = data.load()?;
            let spec = ShockSpec::parse(&shock, &sensitive)?;
            let shocked = monitor::apply_shock(&ds, &spec)?;
            let model = ModelFile::load(&model)?;
            let slices = vec![
                ("reference".to_string(), ds),
                (format!("shock {shock}"), shocked),
            ];
            let report = monitor::evaluate_over_slices(
                model.as_scorer(),
                "model",
                &slices,
                &sensitive,
                tau,
            )?;
            match format {
                Format::Table => print!("{}", report.to_text_table()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            if let Some(out) = out {
                write_report(&out, hash, "monitor shock", &report)?;
            }
            Ok(())
        }
        MonitorCommand::Shapley {
            data,
            model,
            model2,
            sensitive,
            background,
            sample,
            seed,
            out,
            format,
        } => {
            let ds = data.load()?;
            let first = ModelFile::load(&model)?;
            match model2 {
                Some(second_path) => {
                    let second = ModelFile::load(&second_path)?;
                    let report = monitor::group_delta_shapley(
                        first.as_scorer(),
                        second.as_scorer(),
                        &ds,
                        &sensitive,
                        background,
                        sample,
                        seed,
                    )?;
                    match format {
                        Format::Table => print!("{}", report.to_text_table()),
                        Format::Json => {
                            println!("{}", serde_json::to_string_pretty(&report)?)
                        }
                    }
                    if let Some(out) = out {
                        write_report(&out, hash, "monitor shapley", &report)?;
                    }
                }
                None => {
                    let (name, weight) = monitor::most_important_feature(
                        first.as_scorer(),
                        &ds,
                        background,
                        sample,
                        seed,
                    )?;
                    println!("most important feature: {name} (mean |phi| {weight:.4})");
                }
            }
            Ok(())
        }
        MonitorCommand::Retrain {
            data,
            individual_model,
            sensitive,
            tau,
            out,
        } => {
            let ds = data.load()?;
            let model = ModelFile::load(&individual_model)?;
            let targets = monitor::surrogate_targets(model.as_scorer(), &ds, &sensitive, tau)?;
            let retargeted = scenarios::replace_target(&ds, &targets)?;
            write_dataset(&retargeted, &out)?;
            Ok(())
        }
    }
}
