//! Command-line frontend for the rating toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 training
//! divergence. Results go to standard output or files; diagnostics to the
//! error stream. Every flag can also be supplied by a `--config` file of
//! flat `key = value` lines (flag names without the leading dashes); values
//! given on the command line win. The effective configuration is echoed
//! into every report.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use lcr_core::dataset::{load_ratings_path, Format, RatingDataset, Scale};
use lcr_core::error::LcrError;
use lcr_core::eval::{
    benchmark_runtime, run_comparison, sweep_components, sweep_train_size, weight_trace,
    write_reports, EvalReport,
};
use lcr_core::lcr::{component_targets, decompose, dump_decomposition, normalize_weights};
use lcr_core::model::ModelSpec;
use lcr_core::serialize::{load_model_from_path, save_model_to_path};
use lcr_core::synth;
use lcr_core::{Hyperparams, LcrConfig};

#[derive(Parser)]
#[command(
    name = "lcr",
    version,
    about = "Train and evaluate rating predictors built on latent-component decomposition"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse a rating file, report statistics, optionally filter, export and
    /// split it.
    Ingest(IngestArgs),
    /// Train one model and write it to a model file.
    Train(TrainArgs),
    /// Score a saved model against a probe rating file.
    Eval(EvalArgs),
    /// Train several models on repeated seeded splits and report RMSE.
    Compare(CompareArgs),
    /// RMSE as a function of the component count.
    SweepComponents(SweepComponentsArgs),
    /// RMSE of the component model and the baseline as the train share grows.
    SweepTrainsize(SweepTrainsizeArgs),
    /// Record per-epoch component weights during decomposition.
    WeightsTrace(WeightsTraceArgs),
    /// Wall-clock comparison of component training against the baseline.
    Bench(BenchArgs),
    /// Write the per-rating weight and component-target table.
    DumpDecomposition(DumpArgs),
    /// Generate a seeded synthetic rating file.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Rating file to read.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Input layout: ml100k, ml1m or csv.
    #[arg(long)]
    format: Option<String>,
    /// Inclusive rating bounds.
    #[arg(long, value_name = "MIN:MAX")]
    scale: Option<String>,
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every random choice (splits, init, visit order).
    #[arg(long)]
    seed: Option<u64>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct HyperArgs {
    /// Latent factors per model.
    #[arg(long)]
    factors: Option<usize>,
    /// L2 regularization strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// SGD learning rate.
    #[arg(long)]
    gamma: Option<f64>,
    /// Training epochs (decomposition phase for the component model).
    #[arg(long)]
    epochs: Option<usize>,
    /// Retraining epochs for the component model; defaults to --epochs, 0
    /// skips retraining.
    #[arg(long)]
    retrain_epochs: Option<usize>,
    /// Number of latent components.
    #[arg(long)]
    components: Option<usize>,
    /// Clamp predictions to the rating scale.
    #[arg(long, value_name = "on|off")]
    clamp: Option<String>,
    /// Worker threads for component retraining (env LCR_THREADS sets the
    /// default; 1 is fully sequential).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Drop users with fewer ratings than this before anything else.
    #[arg(long)]
    min_degree: Option<u32>,
    /// Write the (filtered) ratings as canonical CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hold out a probe share and export both sides (requires --train-out
    /// and --probe-out).
    #[arg(long)]
    split: Option<f64>,
    /// Destination for the train side of --split.
    #[arg(long)]
    train_out: Option<PathBuf>,
    /// Destination for the probe side of --split.
    #[arg(long)]
    probe_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Model kind: bmf, lcr, mbmf or slopeone.
    #[arg(long)]
    model: Option<String>,
    /// Destination model file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Saved model to score.
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Clamp predictions to the rating scale before scoring.
    #[arg(long, value_name = "on|off")]
    clamp: Option<String>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Comma-separated model kinds to compare.
    #[arg(long)]
    model: Option<String>,
    /// Train share of each holdout split.
    #[arg(long)]
    split: Option<f64>,
    /// Number of independently seeded repetitions.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct SweepComponentsArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Train share of the (single, shared) holdout split.
    #[arg(long)]
    split: Option<f64>,
    /// Comma-separated component counts, e.g. 2,3,4,5.
    #[arg(long)]
    c_values: Option<String>,
    /// Write the sweep as tab-separated columns.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepTrainsizeArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Comma-separated train shares, e.g. 0.3,0.5,0.8.
    #[arg(long)]
    ratios: Option<String>,
    /// Write the sweep as tab-separated columns.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WeightsTraceArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Number of individually tracked ratings.
    #[arg(long)]
    sample: Option<usize>,
    /// Write per-epoch mean weights as tab-separated columns.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Comma-separated component counts to time.
    #[arg(long)]
    c_values: Option<String>,
    /// Timing repetitions per point (the median is reported).
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Destination TSV (standard output if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// Shape preset: ml100k or ml1m.
    #[arg(long)]
    preset: Option<String>,
    /// Flat key=value file supplying defaults for any flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Override the preset's user count.
    #[arg(long)]
    users: Option<usize>,
    /// Override the preset's item count.
    #[arg(long)]
    items: Option<usize>,
    /// Override the preset's rating count.
    #[arg(long)]
    ratings: Option<usize>,
    /// Override the preset's minimum ratings per user.
    #[arg(long)]
    min_degree: Option<usize>,
    /// Override the preset's user-activity log-normal sigma.
    #[arg(long)]
    activity_sd: Option<f64>,
    /// Override the preset's item-popularity log-normal sigma.
    #[arg(long)]
    popularity_sd: Option<f64>,
    /// Override the preset's latent rank.
    #[arg(long)]
    latent_dims: Option<usize>,
    /// Override the preset's latent spectrum decay.
    #[arg(long)]
    latent_decay: Option<f64>,
    /// Override the preset's latent standard deviation.
    #[arg(long)]
    latent_sd: Option<f64>,
    /// Override the preset's bias standard deviation.
    #[arg(long)]
    bias_sd: Option<f64>,
    /// Override the preset's noise standard deviation.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Override the preset's heavy-tail noise fraction.
    #[arg(long)]
    outlier_frac: Option<f64>,
    /// Override the preset's heavy-tail noise multiplier.
    #[arg(long)]
    outlier_scale: Option<f64>,
    /// Destination CSV file.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Core(LcrError),
}

impl From<LcrError> for CliError {
    fn from(e: LcrError) -> Self {
        CliError::Core(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = Result<T, CliError>;

/// Layered option lookup: command line first, then the config file. Every
/// resolved value is recorded for the report echo.
struct Resolver {
    file: HashMap<String, String>,
    effective: BTreeMap<String, String>,
}

impl Resolver {
    fn new(config: Option<&Path>) -> CliResult<Resolver> {
        let mut file = HashMap::new();
        if let Some(path) = config {
            let text = fs::read_to_string(path).map_err(LcrError::Io)?;
            for (ln, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line
                    .split_once('=')
                    .ok_or_else(|| usage(format!("{}:{}: expected key = value", path.display(), ln + 1)))?;
                file.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        Ok(Resolver {
            file,
            effective: BTreeMap::new(),
        })
    }

    fn lookup<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| usage(format!("config value {key} = {raw:?} is malformed"))),
        }
    }

    fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        let v = match flag {
            Some(v) => v,
            None => self.lookup(key)?.unwrap_or(default),
        };
        self.effective.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.lookup(key)?,
        };
        if let Some(v) = &v {
            self.effective.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    fn require<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> CliResult<T> {
        self.get_opt(key, flag)?
            .ok_or_else(|| usage(format!("missing required --{key}")))
    }

    fn config_echo(&self) -> Vec<(String, String)> {
        self.effective
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }
}

fn parse_on_off(v: &str) -> CliResult<bool> {
    match v {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(usage(format!("expected on or off, got {other:?}"))),
    }
}

/// `on`/`off` wrapper so clamp flags flow through the generic resolver.
#[derive(Clone, Copy)]
struct OnOff(bool);

impl FromStr for OnOff {
    type Err = String;
    fn from_str(s: &str) -> Result<OnOff, String> {
        match s {
            "on" => Ok(OnOff(true)),
            "off" => Ok(OnOff(false)),
            other => Err(format!("expected on or off, got {other:?}")),
        }
    }
}

impl Display for OnOff {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(if self.0 { "on" } else { "off" })
    }
}

struct ScaleArg(Scale);

impl FromStr for ScaleArg {
    type Err = String;
    fn from_str(s: &str) -> Result<ScaleArg, String> {
        let (min, max) = s.split_once(':').ok_or("expected MIN:MAX")?;
        let min: f64 = min.trim().parse().map_err(|_| "bad scale minimum")?;
        let max: f64 = max.trim().parse().map_err(|_| "bad scale maximum")?;
        Scale::new(min, max).map(ScaleArg).map_err(|e| e.to_string())
    }
}

impl Display for ScaleArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.0.min, self.0.max)
    }
}

fn parse_usize_list(raw: &str) -> CliResult<Vec<usize>> {
    raw.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| usage(format!("bad list entry {t:?}"))))
        .collect()
}

fn parse_f64_list(raw: &str) -> CliResult<Vec<f64>> {
    raw.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| usage(format!("bad list entry {t:?}"))))
        .collect()
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Resolve the data flags and load the dataset.
fn load_data(r: &mut Resolver, d: &DataArgs) -> CliResult<(RatingDataset, String)> {
    let path: String = r.require("data", d.data.clone().map(|p| p.display().to_string()))?;
    let format: String = r.get("format", d.format.clone(), "ml100k".to_string())?;
    let format = Format::from_name(&format)?;
    let scale = r
        .get(
            "scale",
            d.scale.as_deref().map(str::parse::<ScaleArg>).transpose().map_err(usage)?,
            ScaleArg(Scale::default()),
        )?
        .0;
    let ds = load_ratings_path(&path, format, scale)?;
    Ok((ds, dataset_name(Path::new(&path))))
}

fn resolve_seed(r: &mut Resolver, d: &DataArgs) -> CliResult<u64> {
    r.get("seed", d.seed, 42)
}

fn resolve_threads(r: &mut Resolver, flag: Option<usize>) -> CliResult<usize> {
    if let Some(t) = flag {
        r.effective.insert("threads".into(), t.to_string());
        return Ok(t.max(1));
    }
    if let Some(t) = r.lookup::<usize>("threads")? {
        r.effective.insert("threads".into(), t.to_string());
        return Ok(t.max(1));
    }
    let t = std::env::var("LCR_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(1)
        .max(1);
    r.effective.insert("threads".into(), t.to_string());
    Ok(t)
}

/// Resolve the shared hyperparameter flags into a component-model config.
fn resolve_config(r: &mut Resolver, h: &HyperArgs, seed: u64) -> CliResult<LcrConfig> {
    let defaults = Hyperparams::default();
    let factors = r.get("factors", h.factors, defaults.factors)?;
    let lambda = r.get("lambda", h.lambda, defaults.lambda)?;
    let gamma = r.get("gamma", h.gamma, defaults.gamma)?;
    let epochs = r.get("epochs", h.epochs, defaults.epochs)?;
    let retrain = r.get("retrain-epochs", h.retrain_epochs, epochs)?;
    let components = r.get("components", h.components, 5)?;
    let clamp = r
        .get(
            "clamp",
            h.clamp.as_deref().map(parse_on_off).transpose()?.map(OnOff),
            OnOff(defaults.clamp_output),
        )?
        .0;
    let threads = resolve_threads(r, h.threads)?;
    let hyper = Hyperparams {
        factors,
        lambda,
        gamma,
        epochs,
        use_biases: true,
        seed,
        clamp_output: clamp,
    };
    let mut config = LcrConfig::new(components, hyper);
    config.retrain_epochs = retrain;
    config.threads = threads;
    Ok(config)
}

fn spec_from_name(name: &str, config: &LcrConfig) -> CliResult<ModelSpec> {
    match name {
        "bmf" => Ok(ModelSpec::Bmf {
            hyper: config.base.clone(),
        }),
        "lcr" => Ok(ModelSpec::Lcr {
            config: config.clone(),
        }),
        "mbmf" => Ok(ModelSpec::Mbmf {
            components: config.components,
            hyper: config.base.clone(),
            threads: config.threads,
        }),
        "slopeone" => Ok(ModelSpec::SlopeOne),
        other => Err(usage(format!(
            "unknown model {other:?} (expected bmf, lcr, mbmf or slopeone)"
        ))),
    }
}

fn emit_reports(reports: &[EvalReport], dest: Option<&Path>) -> CliResult<()> {
    let text = write_reports(reports);
    match dest {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Core(e.into())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_series_tsv(report: &EvalReport, name: &str, dest: Option<&Path>) -> CliResult<()> {
    let series = report
        .series(name)
        .ok_or_else(|| CliError::Core(LcrError::data("report has no series to export")))?;
    let mut text = String::new();
    text.push_str(&series.columns.join("\t"));
    text.push('\n');
    for row in &series.rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join("\t"));
        text.push('\n');
    }
    match dest {
        Some(path) => fs::write(path, text).map_err(|e| CliError::Core(e.into()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn write_csv(ds: &RatingDataset, path: &Path) -> CliResult<()> {
    let mut out = String::new();
    for &(u, i, rating) in ds.triples() {
        let user = ds.user_id(u);
        let item = ds.item_id(i);
        if user.contains([',', '\n']) || item.contains([',', '\n']) {
            return Err(CliError::Core(LcrError::data(format!(
                "id {user:?}/{item:?} cannot be written as CSV"
            ))));
        }
        out.push_str(&format!("{user},{item},{rating}\n"));
    }
    fs::write(path, out).map_err(|e| CliError::Core(e.into()))
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (mut ds, name) = load_data(&mut r, &a.data)?;
    let min_degree = r.get("min-degree", a.min_degree, 1)?;
    if min_degree > 1 {
        ds = ds.filter_min_degree(min_degree)?;
    }
    let seed = resolve_seed(&mut r, &a.data)?;
    if let Some(out) = r.get_opt::<String>("out", a.out.map(|p| p.display().to_string()))? {
        write_csv(&ds, Path::new(&out))?;
    }
    let split = r.get_opt("split", a.split)?;
    let mut report = EvalReport::new("ingest", &name, split, seed);
    if let Some(ratio) = split {
        let train_out: String = r.require("train-out", a.train_out.map(|p| p.display().to_string()))?;
        let probe_out: String = r.require("probe-out", a.probe_out.map(|p| p.display().to_string()))?;
        let parts = ds.split_holdout(ratio, seed)?;
        write_csv(&parts.train, Path::new(&train_out))?;
        write_csv(&parts.probe, Path::new(&probe_out))?;
        report.config.push(("train_len".into(), parts.train.len().to_string()));
        report.config.push(("probe_len".into(), parts.probe.len().to_string()));
    }
    let stats = ds.user_degree_stats();
    report.config.extend(r.config_echo());
    report.config.push(("users".into(), ds.n_users().to_string()));
    report.config.push(("items".into(), ds.n_items().to_string()));
    report.config.push(("ratings".into(), ds.len().to_string()));
    report.config.push(("global_mean".into(), ds.global_mean().to_string()));
    report.config.push(("mean_degree".into(), stats.mean.to_string()));
    let mut hist = lcr_core::eval::Series {
        name: "degree_histogram".into(),
        columns: vec!["degree".into(), "users".into()],
        rows: Vec::new(),
    };
    for (&degree, &count) in &stats.histogram {
        hist.rows.push(vec![f64::from(degree), f64::from(count)]);
    }
    report.series.push(hist);
    emit_reports(&[report], a.data.report.as_deref())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let model_name: String = r.get("model", a.model, "lcr".to_string())?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let spec = spec_from_name(&model_name, &config)?;
    let out: String = r.require("out", a.out.map(|p| p.display().to_string()))?;
    let t0 = std::time::Instant::now();
    let model = spec.fit(&ds)?;
    let train_s = t0.elapsed().as_secs_f64();
    save_model_to_path(&model, Path::new(&out))?;
    let mut report = EvalReport::new(&model_name, &name, None, seed);
    report.wall_time_s = vec![("train".into(), train_s)];
    report.config = r.config_echo();
    emit_reports(&[report], a.data.report.as_deref())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let model_file: String = r.require("model-file", a.model_file.map(|p| p.display().to_string()))?;
    let (probe, name) = load_data(&mut r, &a.data)?;
    let clamp = r
        .get(
            "clamp",
            a.clamp.as_deref().map(parse_on_off).transpose()?.map(OnOff),
            OnOff(true),
        )?
        .0;
    let seed = resolve_seed(&mut r, &a.data)?;
    let model = load_model_from_path(Path::new(&model_file))?;
    let t0 = std::time::Instant::now();
    let value = lcr_core::eval::rmse(&model, &probe, clamp)?;
    let mut report = EvalReport::new(model.kind.name(), &name, None, seed);
    report.rmse = Some(value);
    report.wall_time_s = vec![("eval".into(), t0.elapsed().as_secs_f64())];
    report.config = r.config_echo();
    emit_reports(&[report], a.data.report.as_deref())
}

fn cmd_compare(a: CompareArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let models: String = r.get("model", a.model, "lcr,bmf".to_string())?;
    let split = r.get("split", a.split, 0.8)?;
    let reps = r.get("reps", a.reps, 5)?;
    let specs = models
        .split(',')
        .map(|m| spec_from_name(m.trim(), &config))
        .collect::<CliResult<Vec<_>>>()?;
    let clamp = config.base.clamp_output;
    let mut reports = run_comparison(&ds, &name, &specs, split, reps, seed, clamp)?;
    for report in &mut reports {
        let model = report.model.clone();
        report.config = r.config_echo();
        report.config.push(("evaluated-model".into(), model));
    }
    emit_reports(&reports, a.data.report.as_deref())
}

fn cmd_sweep_components(a: SweepComponentsArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let split = r.get("split", a.split, 0.8)?;
    let c_values = parse_usize_list(&r.get("c-values", a.c_values, "2,3,4,5,6,7,8".to_string())?)?;
    let clamp = config.base.clamp_output;
    let mut report = sweep_components(&ds, &name, &config, &c_values, split, seed, clamp)?;
    report.config = r.config_echo();
    let out = r.get_opt::<String>("out", a.out.map(|p| p.display().to_string()))?;
    write_series_tsv(&report, "sweep", out.as_deref().map(Path::new))?;
    if out.is_some() || a.data.report.is_some() {
        emit_reports(&[report], a.data.report.as_deref())?;
    }
    Ok(())
}

fn cmd_sweep_trainsize(a: SweepTrainsizeArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let ratios = parse_f64_list(&r.get("ratios", a.ratios, "0.3,0.4,0.5,0.6,0.7,0.8".to_string())?)?;
    let clamp = config.base.clamp_output;
    let mut report = sweep_train_size(&ds, &name, &config, &ratios, seed, clamp)?;
    report.config = r.config_echo();
    let out = r.get_opt::<String>("out", a.out.map(|p| p.display().to_string()))?;
    write_series_tsv(&report, "sweep", out.as_deref().map(Path::new))?;
    if out.is_some() || a.data.report.is_some() {
        emit_reports(&[report], a.data.report.as_deref())?;
    }
    Ok(())
}

fn cmd_weights_trace(a: WeightsTraceArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let sample = r.get("sample", a.sample, 100)?;
    let (mut report, _) = weight_trace(&ds, &name, &config, sample)?;
    report.config = r.config_echo();
    if let Some(out) = r.get_opt::<String>("out", a.out.map(|p| p.display().to_string()))? {
        write_series_tsv(&report, "mean_weights", Some(Path::new(&out)))?;
    }
    emit_reports(&[report], a.data.report.as_deref())
}

fn cmd_bench(a: BenchArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, name) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let c_values = parse_usize_list(&r.get("c-values", a.c_values, "2,3,4,5".to_string())?)?;
    let runs = r.get("runs", a.runs, 3)?;
    let mut report = benchmark_runtime(&ds, &name, &config, &c_values, runs)?;
    report.config = r.config_echo();
    emit_reports(&[report], a.data.report.as_deref())
}

fn cmd_dump(a: DumpArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.data.config.as_deref())?;
    let (ds, _) = load_data(&mut r, &a.data)?;
    let seed = resolve_seed(&mut r, &a.data)?;
    let config = resolve_config(&mut r, &a.hyper, seed)?;
    let (_, table) = decompose(&ds, &config)?;
    let mut cr = normalize_weights(&table)?;
    component_targets(&ds, &mut cr);
    let mut buf = Vec::new();
    dump_decomposition(&ds, &cr, &mut buf)?;
    match r.get_opt::<String>("out", a.out.map(|p| p.display().to_string()))? {
        Some(path) => fs::write(path, buf).map_err(|e| CliError::Core(e.into()))?,
        None => std::io::stdout().write_all(&buf).map_err(|e| CliError::Core(e.into()))?,
    }
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> CliResult<()> {
    let mut r = Resolver::new(a.config.as_deref())?;
    let preset: String = r.get("preset", a.preset, "ml100k".to_string())?;
    let seed = r.get("seed", a.seed, 42)?;
    let mut cfg = match preset.as_str() {
        "ml100k" => synth::ml100k_like(seed),
        "ml1m" => synth::ml1m_like(seed),
        other => return Err(usage(format!("unknown preset {other:?} (expected ml100k or ml1m)"))),
    };
    if let Some(v) = r.get_opt("users", a.users)? {
        cfg.users = v;
    }
    if let Some(v) = r.get_opt("items", a.items)? {
        cfg.items = v;
    }
    if let Some(v) = r.get_opt("ratings", a.ratings)? {
        cfg.ratings = v;
    }
    if let Some(v) = r.get_opt("min-degree", a.min_degree)? {
        cfg.min_degree = v;
    }
    if let Some(v) = r.get_opt("activity-sd", a.activity_sd)? {
        cfg.activity_sd = v;
    }
    if let Some(v) = r.get_opt("popularity-sd", a.popularity_sd)? {
        cfg.popularity_sd = v;
    }
    if let Some(v) = r.get_opt("latent-dims", a.latent_dims)? {
        cfg.latent_dims = v;
    }
    if let Some(v) = r.get_opt("latent-decay", a.latent_decay)? {
        cfg.latent_decay = v;
    }
    if let Some(v) = r.get_opt("latent-sd", a.latent_sd)? {
        cfg.latent_sd = v;
    }
    if let Some(v) = r.get_opt("bias-sd", a.bias_sd)? {
        cfg.bias_sd = v;
    }
    if let Some(v) = r.get_opt("noise-sd", a.noise_sd)? {
        cfg.noise_sd = v;
    }
    if let Some(v) = r.get_opt("outlier-frac", a.outlier_frac)? {
        cfg.outlier_frac = v;
    }
    if let Some(v) = r.get_opt("outlier-scale", a.outlier_scale)? {
        cfg.outlier_scale = v;
    }
    let out: String = r.require("out", a.out.map(|p| p.display().to_string()))?;
    let records = synth::generate_records(&cfg)?;
    let mut text = String::with_capacity(records.len() * 12);
    for rec in &records {
        text.push_str(&format!("{},{},{}\n", rec.user, rec.item, rec.rating));
    }
    fs::write(&out, text).map_err(LcrError::Io)?;
    eprintln!(
        "wrote {} ratings ({} users, {} items) to {}",
        records.len(),
        cfg.users,
        cfg.items,
        out
    );
    Ok(())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.cmd {
        Cmd::Ingest(a) => cmd_ingest(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::SweepComponents(a) => cmd_sweep_components(a),
        Cmd::SweepTrainsize(a) => cmd_sweep_trainsize(a),
        Cmd::WeightsTrace(a) => cmd_weights_trace(a),
        Cmd::Bench(a) => cmd_bench(a),
        Cmd::DumpDecomposition(a) => cmd_dump(a),
        Cmd::GenData(a) => cmd_gen_data(a),
    }
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            match e {
                LcrError::Divergence(_) => 3,
                _ => 2,
            }
        }
    }
}

fn main() {
    std::process::exit(run());
}
