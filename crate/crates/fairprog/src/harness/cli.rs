//! Command-line interface. Every subcommand reads a JSON config file and
//! accepts `--seed` (override) and `--out` (output directory, defaulting to
//! `$FAIRPROG_OUT` or `./out`).

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::classifier::{train_classifier, Classifier, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::{
    emit_report, probe_fairness, realism_check, render_grid, MetricsReport, REPORT_FORMAT,
};
use crate::reprogram::{build_generator, generator_forward, train_reprogram, Generator, ReprogramConfig};
use crate::tabular::{encode, load_csv, Schema};
use crate::util::sub_seed;
use crate::vae::{train_vae, VaeModel, VaeTrainConfig};

use super::{
    make_baselines, make_synth_pair, run_scenario, run_sweep, ArtifactSource, DataRef, PairSpec,
    ScenarioSpec, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "fairprog",
    about = "Reprogram a frozen classifier + autoencoder pipeline to new tabular datasets and tasks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file for this subcommand.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to $FAIRPROG_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a CSV against a schema descriptor; write the cleaned data
    /// and the cleaning report.
    Ingest(Common),
    /// Train and freeze the base classifier on a dataset.
    TrainClassifier(Common),
    /// Train and freeze the autoencoder on a dataset.
    TrainVae(Common),
    /// Reprogram saved frozen artifacts onto a target dataset.
    Reprogram(Common),
    /// Evaluate a saved generator: accuracy, realism, fairness probe.
    Evaluate(Common),
    /// Run one full transfer scenario (SDST/SDDT/DDST/DDDT).
    RunScenario(Common),
    /// Run a hyperparameter sweep over a scenario.
    Sweep(Common),
    /// Combine saved reports into one JSON file and a results grid.
    Report(Common),
    /// Generate the built-in synthetic dataset pair as CSV + schema files.
    Synth(Common),
    /// Train direct baselines for a list of (dataset, label) pairs.
    Baselines(Common),
}

/// Entry point used by the binary; returns the process exit status.
pub fn cli(argv: Vec<String>) -> i32 {
    let parsed = match Cli::try_parse_from(&argv) {
        Ok(p) => p,
        Err(e) => {
            // Clap renders its own message (also for --help/--version).
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(parsed.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn out_dir(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os("FAIRPROG_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load_config<T: for<'de> Deserialize<'de>>(common: &Common, command: &str) -> Result<T> {
    let path = common.config.as_ref().ok_or_else(|| {
        Error::Config(vec![format!("{command} requires --config <file>")])
    })?;
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| {
        Error::Config(vec![format!("{}: {e}", path.display())])
    })
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(c) => ingest(&c),
        Command::TrainClassifier(c) => train_classifier_cmd(&c),
        Command::TrainVae(c) => train_vae_cmd(&c),
        Command::Reprogram(c) => reprogram_cmd(&c),
        Command::Evaluate(c) => evaluate_cmd(&c),
        Command::RunScenario(c) => run_scenario_cmd(&c),
        Command::Sweep(c) => sweep_cmd(&c),
        Command::Report(c) => report_cmd(&c),
        Command::Synth(c) => synth_cmd(&c),
        Command::Baselines(c) => baselines_cmd(&c),
    }
}

#[derive(Deserialize)]
struct IngestConfig {
    csv: PathBuf,
    schema: PathBuf,
    #[serde(default)]
    strict: bool,
}

fn ingest(common: &Common) -> Result<()> {
    let config: IngestConfig = load_config(common, "ingest")?;
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let schema = Schema::from_json_file(&config.schema)?;
    let (data, report) = load_csv(&config.csv, &schema, config.strict)?;
    data.to_csv_file(&out.join("cleaned.csv"))?;
    std::fs::write(
        out.join("ingest_report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    println!(
        "ingest: kept {} of {} rows ({} rejected, {} ignored columns) -> {}",
        report.rows_kept,
        report.rows_read,
        report.rejected.len(),
        report.ignored_columns.len(),
        out.display()
    );
    Ok(())
}

fn default_split() -> (f64, f64, f64) {
    (0.7, 0.15, 0.15)
}

#[derive(Deserialize)]
struct TrainClassifierConfig {
    data: DataRef,
    #[serde(default = "default_split")]
    split: (f64, f64, f64),
    #[serde(default)]
    train: TrainConfig,
    #[serde(default)]
    seed: u64,
}

fn train_classifier_cmd(common: &Common) -> Result<()> {
    let mut config: TrainClassifierConfig = load_config(common, "train-classifier")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let data = config.data.materialize()?;
    let (train, val, test) = data.split(config.split, sub_seed(config.seed, "split"))?;
    let classifier = train_classifier(&train, &val, &config.train, config.seed)?;
    let path = out.join("classifier.json");
    classifier.save(&path)?;
    let test_acc = crate::classifier::accuracy(&classifier, &test)?;
    println!(
        "{:<24}{:<10}{:<10}",
        config.data.id(),
        format!("{:.1}", classifier.val_accuracy() * 100.0),
        format!("{:.1}", test_acc * 100.0)
    );
    println!("classifier -> {}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct TrainVaeConfig {
    data: DataRef,
    #[serde(default = "default_split")]
    split: (f64, f64, f64),
    #[serde(default)]
    vae: VaeTrainConfig,
    #[serde(default)]
    seed: u64,
}

fn train_vae_cmd(common: &Common) -> Result<()> {
    let mut config: TrainVaeConfig = load_config(common, "train-vae")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let data = config.data.materialize()?;
    let (train, val, _) = data.split(config.split, sub_seed(config.seed, "split"))?;
    let (model, report) = train_vae(&train, &val, &config.vae, config.seed)?;
    let path = out.join("vae.json");
    model.save(&path)?;
    let mut curve = String::from("epoch,train_loss,val_loss\n");
    for (epoch, train_loss, val_loss) in &report.curve {
        curve.push_str(&format!("{epoch},{train_loss},{val_loss}\n"));
    }
    std::fs::write(out.join("elbo_curve.csv"), curve)?;
    let worst = report
        .reconstruction_tv
        .iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    if let Some((column, tv)) = worst {
        println!(
            "vae: final val loss {:.4}, worst reconstruction tv {:.3} ({column})",
            report.final_val_loss, tv
        );
    }
    println!("vae -> {}", path.display());
    Ok(())
}

#[derive(Deserialize)]
struct ReprogramCmdConfig {
    classifier: PathBuf,
    vae: PathBuf,
    target: DataRef,
    #[serde(default = "default_scenario_id")]
    scenario_id: String,
    #[serde(default)]
    reprogram: ReprogramConfig,
    #[serde(default = "default_split")]
    split: (f64, f64, f64),
    #[serde(default)]
    seed: u64,
}

fn default_scenario_id() -> String {
    "custom".to_string()
}

fn reprogram_cmd(common: &Common) -> Result<()> {
    let mut config: ReprogramCmdConfig = load_config(common, "reprogram")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;

    let classifier = Classifier::load(&config.classifier)?;
    let vae = VaeModel::load(&config.vae)?;
    let target = config.target.materialize()?;
    let (train, val, _) = target.split(config.split, sub_seed(config.seed, "split-target"))?;

    let baseline = train_classifier(
        &train,
        &val,
        &TrainConfig::default(),
        sub_seed(config.seed, "baseline"),
    )?;

    // The generator needs the base schema; recover it from the classifier's
    // fingerprint by trusting the autoencoder checkpoint pair.
    if classifier.schema_fingerprint() != vae.schema_fingerprint() {
        return Err(Error::Schema(
            "classifier and autoencoder were trained on different schemas".into(),
        ));
    }
    let base_schema = base_schema_for(&vae, &target)?;
    let generator = build_generator(
        &vae,
        &base_schema,
        target.schema(),
        sub_seed(config.seed, "generator"),
    )?;

    let mut rc = config.reprogram.clone();
    rc.seed = config.seed;
    let result = train_reprogram(
        generator,
        &classifier,
        &train,
        &val,
        &rc,
        &config.scenario_id,
        baseline.val_accuracy(),
    )?;
    result.report.save(&out.join("report.json"))?;
    result.generator.save(&out.join("generator.json"))?;
    println!(
        "reprogram [{}]: accuracy {:.3} (baseline {:.3}), realism {}, probe {:.3}",
        result.report.scenario,
        result.report.accuracy,
        result.report.baseline_accuracy,
        if result.report.realism_pass { "pass" } else { "fail" },
        result.report.fairness_probe_accuracy
    );
    println!("report -> {}", out.join("report.json").display());
    Ok(())
}

/// Checkpoints embed only a schema fingerprint, so this command can wire a
/// generator only when the target schema IS the base schema (same-dataset
/// transfers). Cross-schema transfers go through run-scenario, whose config
/// carries both dataset references.
fn base_schema_for(vae: &VaeModel, target: &crate::tabular::Dataset) -> Result<Schema> {
    if vae.schema_fingerprint() == target.schema().fingerprint() {
        return Ok(target.schema().clone());
    }
    Err(Error::Schema(
        "target schema differs from the autoencoder's base schema; use run-scenario, which \
         carries both dataset references"
            .into(),
    ))
}

#[derive(Deserialize)]
struct EvaluateConfig {
    generator: PathBuf,
    classifier: PathBuf,
    data: DataRef,
    #[serde(default)]
    seed: u64,
}

fn evaluate_cmd(common: &Common) -> Result<()> {
    let mut config: EvaluateConfig = load_config(common, "evaluate")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;

    let generator = Generator::load(&config.generator)?;
    let classifier = Classifier::load(&config.classifier)?;
    let data = config.data.materialize()?;
    if data.schema() != generator.target_schema() {
        return Err(Error::Schema(
            "data schema does not match the generator's target schema".into(),
        ));
    }

    let enc = encode(&data);
    let generated = generator_forward(&generator, &enc.generator_inputs())?;
    let feature_width = generator.base_feature_width();
    let inputs = if classifier.includes_protected() {
        generated.clone()
    } else {
        generated.gather_columns(&[0..feature_width])
    };
    let accuracy = crate::classifier::accuracy_on_matrix(&classifier, &inputs, &enc.labels())?;
    let realism = realism_check(
        &data,
        &generated,
        generator.base_schema(),
        generator.d1_columns(),
        crate::metrics::DEFAULT_TV_THRESHOLD,
        crate::metrics::DEFAULT_NUMERIC_BINS,
    )?;
    let features = generated.gather_columns(&[0..feature_width]);
    let s_bits: Vec<usize> = enc.protected_bits().iter().map(|&b| b as usize).collect();
    let probe = probe_fairness(&features, &s_bits, sub_seed(config.seed, "evaluate-probe"))?;

    let report = MetricsReport {
        format: REPORT_FORMAT.to_string(),
        scenario: "evaluate".into(),
        mode: "evaluate".into(),
        gamma: f64::NAN,
        delta: f64::NAN,
        learning_rate: f64::NAN,
        seed: config.seed,
        accuracy,
        baseline_accuracy: f64::NAN,
        column_tv: realism.columns.clone(),
        realism_threshold: realism.threshold,
        realism_pass: realism.pass,
        fairness_probe_accuracy: probe,
        selected_epoch: 0,
        wall_clock_secs: 0.0,
    };
    report.save(&out.join("evaluation.json"))?;
    println!(
        "evaluate: accuracy {accuracy:.3}, realism {}, probe {probe:.3}",
        if realism.pass { "pass" } else { "fail" }
    );
    Ok(())
}

#[derive(Deserialize)]
struct ScenarioCmdConfig {
    #[serde(flatten)]
    scenario: ScenarioSpec,
    #[serde(default)]
    artifacts: ArtifactSource,
}

fn run_scenario_cmd(common: &Common) -> Result<()> {
    let mut config: ScenarioCmdConfig = load_config(common, "run-scenario")?;
    if let Some(seed) = common.seed {
        config.scenario.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let output = run_scenario(&config.scenario, &config.artifacts, &out)?;
    println!(
        "{} [{}]: accuracy {:.3} (baseline {:.3}), realism {}, probe {:.3}",
        output.report.scenario,
        output.report.mode,
        output.report.accuracy,
        output.report.baseline_accuracy,
        if output.report.realism_pass { "pass" } else { "fail" },
        output.report.fairness_probe_accuracy
    );
    println!("run dir -> {}", output.run_dir.display());
    Ok(())
}

#[derive(Deserialize)]
struct SweepCmdConfig {
    scenario: ScenarioSpec,
    sweep: SweepSpec,
    #[serde(default)]
    artifacts: ArtifactSource,
}

fn sweep_cmd(common: &Common) -> Result<()> {
    let mut config: SweepCmdConfig = load_config(common, "sweep")?;
    if let Some(seed) = common.seed {
        config.scenario.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let output = run_sweep(&config.sweep, &config.scenario, &config.artifacts, &out)?;
    for failure in &output.failures {
        eprintln!("failed grid point: {failure}");
    }
    if let Some(best) = output.best {
        let r = &output.reports[best];
        println!(
            "best: gamma={} delta={} seed={} -> accuracy {:.3}, realism {}, probe {:.3}",
            r.gamma,
            r.delta,
            r.seed,
            r.accuracy,
            if r.realism_pass { "pass" } else { "fail" },
            r.fairness_probe_accuracy
        );
    }
    if !output.reports.is_empty() {
        print!("{}", render_grid(&output.reports)?);
    }
    println!("sweep outputs -> {}", out.display());
    Ok(())
}

#[derive(Deserialize)]
struct ReportConfig {
    reports: Vec<PathBuf>,
}

fn report_cmd(common: &Common) -> Result<()> {
    let config: ReportConfig = load_config(common, "report")?;
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let mut reports = Vec::new();
    for path in &config.reports {
        reports.push(MetricsReport::load(path)?);
    }
    emit_report(&reports, &out.join("reports.json"), &out.join("grid.txt"))?;
    print!("{}", render_grid(&reports)?);
    println!("combined -> {}", out.display());
    Ok(())
}

fn synth_cmd(common: &Common) -> Result<()> {
    let mut pair: PairSpec = match &common.config {
        Some(_) => load_config(common, "synth")?,
        None => PairSpec::default(),
    };
    if let Some(seed) = common.seed {
        pair.seed = seed;
    }
    let out = out_dir(common);
    std::fs::create_dir_all(&out)?;
    let (source, target) = make_synth_pair(&pair)?;
    source.to_csv_file(&out.join("source.csv"))?;
    target.to_csv_file(&out.join("target.csv"))?;
    source.schema().to_json_file(&out.join("source_schema.json"))?;
    target.schema().to_json_file(&out.join("target_schema.json"))?;
    println!(
        "synth: {} source rows, {} target rows (bias {}) -> {}",
        source.len(),
        target.len(),
        pair.bias_strength,
        out.display()
    );
    Ok(())
}

#[derive(Deserialize)]
struct BaselinesConfig {
    datasets: Vec<DataRef>,
    #[serde(default = "default_split")]
    split: (f64, f64, f64),
    #[serde(default)]
    seed: u64,
}

fn baselines_cmd(common: &Common) -> Result<()> {
    let mut config: BaselinesConfig = load_config(common, "baselines")?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out = out_dir(common);
    let (_, table) = make_baselines(&config.datasets, config.split, config.seed, &out)?;
    print!("{table}");
    println!("baselines -> {}", out.display());
    Ok(())
}
