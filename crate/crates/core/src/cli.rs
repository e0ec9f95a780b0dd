//! The `iaa` command-line frontend.
//!
//! Every subcommand writes its artifacts to `<out>/<command>-<hash>/` along
//! with a `run.json` manifest. `<out>` comes from `--out`, else the `IAA_OUT`
//! environment variable, else `./out`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::augment::{augmented_giaa, subsample_giaa, SubsampleConfig};
use crate::dataset::{
    build_giaa_counted, build_piaa, ingest_annotations, materialize_sets, split_images, split_users_disjoint,
    write_annotations_csv, write_features_csv, AnnotationTable, SplitManifest, SplitRatios,
};
use crate::error::{Error, Result};
use crate::metrics::{aggregate_distribution, demographic_gini, gini_impurity, group_emd, plcc, srocc, MetricsReport};
use crate::model::{evaluate, init_model, train_from, EvalMode, ModelParams, TrainConfig};
use crate::output::{bar_chart_svg, scatter_svg, sha256_file, RunDir};
use crate::scale::ScoreScale;
use crate::schema::TraitSchema;
use crate::synth::{
    gen_population, run_disjoint_sweep, run_transfer_experiment, PopulationConfig, SweepEntry, SweepSpec, TransferSpec,
};
use crate::theory::verify_theorem;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "IAA_OUT";

#[derive(Parser, Debug)]
#[command(name = "iaa", version, about = "Group and individual aesthetic-assessment tooling")]
struct Cli {
    /// Output directory [default: $IAA_OUT or ./out]
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Validate an annotation CSV and summarize it
    Ingest(DataArgs),
    /// Split images (and optionally users) into train/val/test
    Split(SplitArgs),
    /// Build GIAA or PIAA samples for one split set
    Build(BuildArgs),
    /// Draw sub-sampled GIAA groups
    Augment(AugmentArgs),
    /// Train a predictor on the training set of a split
    Train(TrainArgs),
    /// Evaluate a trained predictor on the test set of a split
    Eval(EvalArgs),
    /// Demographic split statistics
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Randomized check of the group-versus-individual loss inequality
    VerifyTheorem(TheoremArgs),
    /// Generate a synthetic population and optionally run an experiment on it
    Synth(SynthArgs),
    /// Summarize a sweep report and draw its charts
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    /// Annotation CSV: image_id,user_id,score,<trait columns>
    #[arg(long)]
    annotations: PathBuf,
    /// Trait schema: preset name or TOML file
    #[arg(long, default_value = "para")]
    schema: String,
    /// Score scale: preset name or JSON file
    #[arg(long, default_value = "para")]
    scale: String,
    /// Feature sidecar CSV: image_id,x1,...,xk
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Train, val and test fractions
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Hold out the raters with these labels of a field as test users
    #[arg(long, requires = "test_values")]
    disjoint_field: Option<String>,
    #[arg(long, value_delimiter = ',')]
    test_values: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Kind {
    Giaa,
    Piaa,
    Sgiaa,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SetName {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug, Serialize)]
struct BuildArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Giaa)]
    kind: Kind,
    #[arg(long, value_enum, default_value_t = SetName::Train)]
    set: SetName,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SubsampleArgs {
    #[arg(long, default_value_t = 4)]
    samples_per_image: usize,
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    /// Largest group size [default: all raters of the image]
    #[arg(long)]
    k_max: Option<usize>,
}

impl SubsampleArgs {
    fn config(&self, seed: u64) -> SubsampleConfig {
        SubsampleConfig {
            samples_per_image: self.samples_per_image,
            k_min: self.k_min,
            k_max: self.k_max.unwrap_or(usize::MAX),
            seed,
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Restrict to the training set of this split manifest
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    subsample: SubsampleArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = Kind::Giaa)]
    kind: Kind,
    /// TOML training configuration; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    subsample: SubsampleArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Giaa,
    Piaa,
}

#[derive(Args, Debug, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Giaa)]
    mode: ModeArg,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
enum AnalyzeCmd {
    /// Group EMD of every one-label-versus-rest user split
    Emd(AnalyzeArgs),
    /// Record-weighted Gini impurity per demographic field
    Gini(AnalyzeArgs),
}

#[derive(Args, Debug, Serialize)]
struct AnalyzeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Fields to analyze [default: every categorical field]
    #[arg(long, value_delimiter = ',')]
    field: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct TheoremArgs {
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Experiment {
    None,
    Transfer,
    Sweep,
}

#[derive(Args, Debug, Serialize)]
struct SynthArgs {
    /// Population TOML [default: the built-in heterogeneous population]
    #[arg(long)]
    config: Option<PathBuf>,
    /// Population seed, used when no config file is given
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Experiment::None)]
    experiment: Experiment,
    /// TOML experiment settings (splits and training)
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Sweep fields [default: every categorical field]
    #[arg(long, value_delimiter = ',')]
    fields: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// A sweep or `analyze emd` JSON array
    #[arg(long)]
    input: PathBuf,
    /// Skip the SVG charts
    #[arg(long)]
    no_svg: bool,
}

/// Parse `argv` (including the program name), run the subcommand and return
/// the process exit code: 0 on success, 1 on a pipeline error (reported as
/// JSON on stderr), 2 on a usage error.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match execute(&cli.command, &out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            1
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Ingest(_) => "ingest",
        Command::Split(_) => "split",
        Command::Build(_) => "build",
        Command::Augment(_) => "augment",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Analyze(AnalyzeCmd::Emd(_)) => "analyze-emd",
        Command::Analyze(AnalyzeCmd::Gini(_)) => "analyze-gini",
        Command::VerifyTheorem(_) => "verify-theorem",
        Command::Synth(_) => "synth",
        Command::Report(_) => "report",
    }
}

fn open_run(command: &Command, out: &Path, files: &[&Path], seed: Option<u64>) -> Result<RunDir> {
    let mut inputs = BTreeMap::new();
    for f in files {
        inputs.insert(f.display().to_string(), sha256_file(f)?);
    }
    RunDir::create(out, command_name(command), serde_json::to_value(command)?, inputs, seed)
}

fn finish(run: RunDir) -> Result<i32> {
    let path = run.finish()?;
    println!("{}", path.display());
    Ok(0)
}

impl DataArgs {
    fn files(&self) -> Vec<&Path> {
        let mut v = vec![self.annotations.as_path()];
        for s in [&self.schema, &self.scale] {
            if Path::new(s).is_file() {
                v.push(Path::new(s));
            }
        }
        v.extend(self.features.as_deref());
        v
    }

    fn load(&self) -> Result<AnnotationTable> {
        ingest_annotations(
            &self.annotations,
            &TraitSchema::resolve(&self.schema)?,
            &ScoreScale::resolve(&self.scale)?,
            self.features.as_deref(),
        )
    }
}

fn load_manifest(path: &Path) -> Result<SplitManifest> {
    let m: SplitManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    m.validate()?;
    Ok(m)
}

fn load_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(toml::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn categorical_fields(schema: &TraitSchema) -> Vec<String> {
    schema
        .fields()
        .iter()
        .filter(|f| matches!(f.kind, crate::schema::FieldKind::Categorical { .. }))
        .map(|f| f.name.clone())
        .collect()
}

#[derive(Serialize)]
struct TableSummary {
    scale: String,
    schema: String,
    counts: BTreeMap<String, usize>,
    trait_dim: usize,
    mean_scores: BTreeMap<String, f64>,
}

fn summarize(table: &AnnotationTable) -> TableSummary {
    let counts = [
        ("images", table.images().len()),
        ("raters", table.raters().len()),
        ("records", table.records().len()),
        ("feature_dim", table.feature_dim()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let mean_scores = table
        .records_by_image()
        .map(|(img, recs)| (img.id.clone(), recs.iter().map(|r| r.score).sum::<f64>() / recs.len() as f64))
        .collect();
    TableSummary {
        scale: table.scale().name().to_string(),
        schema: table.schema().name().to_string(),
        counts,
        trait_dim: table.schema().total_dim(),
        mean_scores,
    }
}

fn execute(command: &Command, out: &Path) -> Result<i32> {
    match command {
        Command::Ingest(a) => {
            let table = a.load()?;
            let mut run = open_run(command, out, &a.files(), None)?;
            run.write_json("summary.json", &summarize(&table))?;
            finish(run)
        }
        Command::Split(a) => {
            let table = a.data.load()?;
            let ratios = SplitRatios::new(a.ratios[0], a.ratios[1], a.ratios[2])?;
            let images = split_images(&table, ratios, a.seed)?;
            let manifest = match &a.disjoint_field {
                Some(field) => {
                    let values: BTreeSet<String> = a.test_values.iter().cloned().collect();
                    SplitManifest::disjoint(images, split_users_disjoint(&table, field, &values)?)
                }
                None => SplitManifest::shared(images, &table),
            };
            let mut run = open_run(command, out, &a.data.files(), Some(a.seed))?;
            run.write_json("manifest.json", &manifest)?;
            finish(run)
        }
        Command::Build(a) => {
            let table = a.data.load()?;
            let manifest = load_manifest(&a.manifest)?;
            let sets = materialize_sets(&table, &manifest)?;
            let set = match a.set {
                SetName::Train => &sets.train,
                SetName::Val => &sets.val,
                SetName::Test => &sets.test,
            };
            let mut files = a.data.files();
            files.push(&a.manifest);
            let mut run = open_run(command, out, &files, Some(manifest.seed))?;
            let mut summary = BTreeMap::new();
            match a.kind {
                Kind::Giaa => {
                    let (samples, dropped) = build_giaa_counted(set, None)?;
                    summary.insert("samples", samples.len());
                    summary.insert("dropped_images", dropped);
                    run.write_json("samples.json", &samples)?;
                }
                Kind::Piaa => {
                    let samples = build_piaa(set, None)?;
                    summary.insert("samples", samples.len());
                    run.write_json("samples.json", &samples)?;
                }
                Kind::Sgiaa => {
                    return Err(Error::InvalidConfig("use the augment subcommand for sgiaa samples".into()));
                }
            }
            run.write_json("summary.json", &summary)?;
            finish(run)
        }
        Command::Augment(a) => {
            let table = a.data.load()?;
            let mut files = a.data.files();
            let source = match &a.manifest {
                Some(m) => {
                    files.push(m);
                    materialize_sets(&table, &load_manifest(m)?)?.train
                }
                None => table,
            };
            let sub = subsample_giaa(&source, None, &a.subsample.config(a.seed))?;
            let mut run = open_run(command, out, &files, Some(a.seed))?;
            run.write_json("samples.json", &sub.samples)?;
            run.write_json(
                "summary.json",
                &serde_json::json!({ "samples": sub.samples.len(), "skipped_images": sub.skipped }),
            )?;
            finish(run)
        }
        Command::Train(a) => {
            let table = a.data.load()?;
            let manifest = load_manifest(&a.manifest)?;
            let mut cfg: TrainConfig = load_toml(a.config.as_deref())?;
            if let Some(v) = a.epochs {
                cfg.epochs = v;
            }
            if let Some(v) = a.hidden {
                cfg.hidden = v;
            }
            if let Some(v) = a.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = a.momentum {
                cfg.momentum = v;
            }
            if let Some(v) = a.batch_size {
                cfg.batch_size = v;
            }
            if let Some(v) = a.seed {
                cfg.seed = v;
            }
            cfg.validate()?;
            let train_set = materialize_sets(&table, &manifest)?.train;
            let init = init_model(
                table.feature_dim(),
                table.schema().total_dim(),
                cfg.hidden,
                table.scale().bin_count(),
                cfg.seed,
            )?;
            let outcome = match a.kind {
                Kind::Giaa => train_from(init, &build_giaa_counted(&train_set, None)?.0, &cfg)?,
                Kind::Piaa => train_from(init, &build_piaa(&train_set, None)?, &cfg)?,
                Kind::Sgiaa => train_from(init, &augmented_giaa(&train_set, &a.subsample.config(cfg.seed))?, &cfg)?,
            };
            let mut files = a.data.files();
            files.push(&a.manifest);
            files.extend(a.config.as_deref());
            let mut run = open_run(command, out, &files, Some(cfg.seed))?;
            run.write_json("model.json", &outcome.params.to_checkpoint())?;
            run.write_json("train_config.json", &cfg)?;
            let mut history = String::from("epoch,mean_loss\n");
            for (e, l) in outcome.history.iter().enumerate() {
                history.push_str(&format!("{e},{l:.16e}\n"));
            }
            run.write_text("history.csv", &history)?;
            finish(run)
        }
        Command::Eval(a) => {
            let table = a.data.load()?;
            let manifest = load_manifest(&a.manifest)?;
            let params = ModelParams::from_json(&std::fs::read_to_string(&a.model)?)?;
            let mode = match a.mode {
                ModeArg::Giaa => EvalMode::Giaa,
                ModeArg::Piaa => EvalMode::Piaa,
            };
            let rep = evaluate(&params, &table, &manifest, mode)?;
            let report = MetricsReport {
                scale: table.scale().name().to_string(),
                counts: [("samples".to_string(), rep.samples)].into(),
                metrics: [
                    ("srocc".to_string(), rep.srocc),
                    ("plcc".to_string(), rep.plcc),
                    ("emd_loss_mean".to_string(), rep.emd_loss_mean),
                ]
                .into(),
            };
            let mut files = a.data.files();
            files.push(&a.manifest);
            files.push(&a.model);
            let mut run = open_run(command, out, &files, Some(manifest.seed))?;
            run.write_json("eval.json", &serde_json::json!({ "mode": mode, "report": report }))?;
            finish(run)
        }
        Command::Analyze(AnalyzeCmd::Emd(a)) => {
            let table = a.data.load()?;
            let fields = if a.field.is_empty() { categorical_fields(table.schema()) } else { a.field.clone() };
            let mut entries = Vec::new();
            for field in &fields {
                for label in table.schema().field(field)?.labels() {
                    let values: BTreeSet<String> = [label.clone()].into();
                    let mut entry = SweepEntry {
                        field: field.clone(),
                        test_values: vec![label],
                        group_emd: None,
                        test_srocc: None,
                        train_users: 0,
                        test_users: 0,
                        skipped: None,
                    };
                    match split_users_disjoint(&table, field, &values)
                        .and_then(|u| Ok((group_emd(&table, &u.train, &u.test)?, u)))
                    {
                        Ok((emd, u)) => {
                            entry.group_emd = Some(emd);
                            entry.train_users = u.train.len();
                            entry.test_users = u.test.len();
                        }
                        Err(e @ Error::EmptySide(_)) => entry.skipped = Some(e.to_string()),
                        Err(e) => return Err(e),
                    }
                    entries.push(entry);
                }
            }
            let mut run = open_run(command, out, &a.data.files(), None)?;
            run.write_json("emd.json", &entries)?;
            finish(run)
        }
        Command::Analyze(AnalyzeCmd::Gini(a)) => {
            let table = a.data.load()?;
            let fields = if a.field.is_empty() { categorical_fields(table.schema()) } else { a.field.clone() };
            let pooled = aggregate_distribution(&table, None).map(|d| gini_impurity(&d)).ok_or(Error::EmptyResult)?;
            let mut per_field = BTreeMap::new();
            for f in &fields {
                per_field.insert(f.clone(), demographic_gini(&table, f)?);
            }
            let mut run = open_run(command, out, &a.data.files(), None)?;
            run.write_json(
                "gini.json",
                &serde_json::json!({ "scale": table.scale().name(), "pooled": pooled, "fields": per_field }),
            )?;
            finish(run)
        }
        Command::VerifyTheorem(a) => {
            let sweep = verify_theorem(a.trials, a.seed);
            let mut run = open_run(command, out, &[], Some(a.seed))?;
            run.write_json("theorem.json", &sweep)?;
            println!(
                "trials {} scalar_trials {} violations {} max(giaa - piaa) {:e}",
                sweep.trials, sweep.scalar_trials, sweep.violations, sweep.max_gap
            );
            finish(run)?;
            if sweep.violations > 0 {
                eprintln!(
                    "{}",
                    serde_json::json!({ "error": "TheoremViolation", "message": format!("{} violation(s)", sweep.violations) })
                );
                return Ok(1);
            }
            Ok(0)
        }
        Command::Synth(a) => {
            let config = match &a.config {
                Some(p) => PopulationConfig::from_toml_str(&std::fs::read_to_string(p)?)?,
                None => PopulationConfig::heterogeneous(a.seed),
            };
            let table = gen_population(&config)?;
            let mut files: Vec<&Path> = a.config.iter().map(PathBuf::as_path).collect();
            files.extend(a.spec.as_deref());
            let mut run = open_run(command, out, &files, Some(config.seed))?;
            let mut csv = Vec::new();
            write_annotations_csv(&table, &mut csv)?;
            run.write_text("annotations.csv", &String::from_utf8_lossy(&csv))?;
            let mut csv = Vec::new();
            write_features_csv(&table, &mut csv)?;
            run.write_text("features.csv", &String::from_utf8_lossy(&csv))?;
            run.write_text("schema.toml", &table.schema().to_toml_string())?;
            run.write_json("scale.json", table.scale())?;
            run.write_json("population.json", &config)?;
            match a.experiment {
                Experiment::None => {}
                Experiment::Transfer => {
                    let spec: TransferSpec = load_toml(a.spec.as_deref())?;
                    run.write_json("transfer.json", &run_transfer_experiment(&config, &spec)?)?;
                }
                Experiment::Sweep => {
                    let spec: SweepSpec = load_toml(a.spec.as_deref())?;
                    let fields = if a.fields.is_empty() { categorical_fields(table.schema()) } else { a.fields.clone() };
                    run.write_json("sweep.json", &run_disjoint_sweep(&config, &fields, &spec)?)?;
                }
            }
            finish(run)
        }
        Command::Report(a) => {
            let entries: Vec<SweepEntry> = serde_json::from_str(&std::fs::read_to_string(&a.input)?)?;
            let mut run = open_run(command, out, &[&a.input], None)?;
            let bars: Vec<(String, f64)> = entries
                .iter()
                .filter_map(|e| e.group_emd.map(|v| (format!("{}={}", e.field, e.test_values.join("+")), v)))
                .collect();
            let pairs: Vec<(f64, f64)> = entries.iter().filter_map(|e| e.group_emd.zip(e.test_srocc)).collect();
            let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.iter().cloned().unzip();
            let correlation = |f: fn(&[f64], &[f64]) -> Result<f64>| f(&xs, &ys).ok();
            run.write_json(
                "report.json",
                &serde_json::json!({
                    "splits": entries.len(),
                    "with_emd": bars.len(),
                    "with_srocc": pairs.len(),
                    "plcc_emd_srocc": correlation(plcc),
                    "srocc_emd_srocc": correlation(srocc),
                }),
            )?;
            if !a.no_svg {
                run.write_text("emd_bars.svg", &bar_chart_svg("Group EMD per demographic split", "group EMD", &bars))?;
                if !pairs.is_empty() {
                    run.write_text("emd_vs_srocc.svg", &scatter_svg("Group EMD vs test SROCC", "group EMD", "SROCC", &pairs))?;
                }
            }
            finish(run)
        }
    }
}

