//! Evaluation protocol: RMSE, repeated-holdout comparisons, sweeps over
//! component count and training share, weight-convergence traces and runtime
//! benchmarks, all assembled into plain-text reports.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bmf;
use crate::dataset::RatingDataset;
use crate::error::{LcrError, Result};
use crate::lcr::{decompose_traced, train_lcr, LcrConfig, WeightTrace};
use crate::model::{ModelSpec, TrainedModel};

/// Root mean square error of the model over a probe set, scored by external
/// ids so differing index spaces are immaterial. `clamp` snaps every score
/// to the model's scale first (the default protocol).
pub fn rmse(model: &TrainedModel, probe: &RatingDataset, clamp: bool) -> Result<f64> {
    if probe.is_empty() {
        return Err(LcrError::data("empty probe set"));
    }
    let mut se = 0.0;
    for &(u, i, r) in probe.triples() {
        let mut p = model.score(probe.user_id(u), probe.item_id(i));
        if clamp {
            p = model.scale.clamp(p);
        }
        let e = p - r;
        se += e * e;
    }
    Ok((se / probe.len() as f64).sqrt())
}

/// Standard error of the mean; 0 for fewer than two samples.
pub fn std_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// A named numeric table inside a report (sweep points, trace rows, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    fn new(name: &str, columns: &[&str]) -> Series {
        Series {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

/// One experiment's results. Serialized as a key/value text document; a run
/// writes one document per report, concatenated.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub model: String,
    pub dataset: String,
    pub split_ratio: Option<f64>,
    pub seed: u64,
    pub rmse: Option<f64>,
    pub stderr: Option<f64>,
    pub wall_time_s: Vec<(String, f64)>,
    pub config: Vec<(String, String)>,
    pub series: Vec<Series>,
}

impl EvalReport {
    pub fn new(model: &str, dataset: &str, split_ratio: Option<f64>, seed: u64) -> EvalReport {
        EvalReport {
            model: model.to_string(),
            dataset: dataset.to_string(),
            split_ratio,
            seed,
            rmse: None,
            stderr: None,
            wall_time_s: Vec::new(),
            config: Vec::new(),
            series: Vec::new(),
        }
    }

    pub fn series(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Render as the stable text layout. Floats use the shortest exact
    /// representation, so re-parsing reproduces them bit for bit.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("[report]\n");
        out.push_str(&format!("model = {}\n", self.model));
        out.push_str(&format!("dataset = {}\n", self.dataset));
        if let Some(r) = self.split_ratio {
            out.push_str(&format!("split_ratio = {r}\n"));
        }
        out.push_str(&format!("seed = {}\n", self.seed));
        if let Some(r) = self.rmse {
            out.push_str(&format!("rmse = {r}\n"));
        }
        if let Some(s) = self.stderr {
            out.push_str(&format!("stderr = {s}\n"));
        }
        for (phase, t) in &self.wall_time_s {
            out.push_str(&format!("wall_time_s.{phase} = {t}\n"));
        }
        if !self.config.is_empty() {
            out.push_str("[config]\n");
            for (k, v) in &self.config {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        for s in &self.series {
            out.push_str(&format!("[series {}]\n", s.name));
            out.push_str(&format!("columns = {}\n", s.columns.join(" ")));
            for row in &s.rows {
                let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                out.push_str(&format!("row = {}\n", vals.join(" ")));
            }
        }
        out
    }
}

/// Concatenate reports into one run manifest.
pub fn write_reports(reports: &[EvalReport]) -> String {
    reports
        .iter()
        .map(EvalReport::to_text)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parse a manifest produced by [`write_reports`].
pub fn parse_reports(text: &str) -> Result<Vec<EvalReport>> {
    enum At {
        Nowhere,
        Report,
        Config,
        Series,
    }
    let bad = |line: usize, msg: &str| LcrError::Format(format!("report line {line}: {msg}"));
    let mut reports: Vec<EvalReport> = Vec::new();
    let mut at = At::Nowhere;
    for (ln, raw) in text.lines().enumerate() {
        let ln = ln + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line == "[report]" {
            reports.push(EvalReport::new("", "", None, 0));
            at = At::Report;
            continue;
        }
        if line == "[config]" {
            if reports.is_empty() {
                return Err(bad(ln, "section before [report]"));
            }
            at = At::Config;
            continue;
        }
        if let Some(name) = line.strip_prefix("[series ").and_then(|s| s.strip_suffix(']')) {
            let r = reports.last_mut().ok_or_else(|| bad(ln, "section before [report]"))?;
            r.series.push(Series {
                name: name.to_string(),
                columns: Vec::new(),
                rows: Vec::new(),
            });
            at = At::Series;
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| bad(ln, "expected key = value"))?;
        let r = reports.last_mut().ok_or_else(|| bad(ln, "entry before [report]"))?;
        let num = |v: &str| v.parse::<f64>().map_err(|_| bad(ln, "bad number"));
        match at {
            At::Nowhere => return Err(bad(ln, "entry before [report]")),
            At::Report => match key {
                "model" => r.model = value.to_string(),
                "dataset" => r.dataset = value.to_string(),
                "split_ratio" => r.split_ratio = Some(num(value)?),
                "seed" => {
                    r.seed = value.parse().map_err(|_| bad(ln, "bad seed"))?;
                }
                "rmse" => r.rmse = Some(num(value)?),
                "stderr" => r.stderr = Some(num(value)?),
                _ => {
                    if let Some(phase) = key.strip_prefix("wall_time_s.") {
                        r.wall_time_s.push((phase.to_string(), num(value)?));
                    } else {
                        return Err(bad(ln, "unknown report field"));
                    }
                }
            },
            At::Config => r.config.push((key.to_string(), value.to_string())),
            At::Series => {
                let s = r.series.last_mut().expect("series section without series");
                match key {
                    "columns" => {
                        s.columns = value.split_whitespace().map(|c| c.to_string()).collect()
                    }
                    "row" => {
                        let row: std::result::Result<Vec<f64>, _> =
                            value.split_whitespace().map(|v| v.parse::<f64>()).collect();
                        let row = row.map_err(|_| bad(ln, "bad number in row"))?;
                        if row.len() != s.columns.len() {
                            return Err(bad(ln, "row width does not match columns"));
                        }
                        s.rows.push(row);
                    }
                    _ => return Err(bad(ln, "unknown series field")),
                }
            }
        }
    }
    Ok(reports)
}

/// Repeated seeded holdout: every repetition draws a fresh split (seed +
/// rep) shared by all models, trains each model with that same per-rep seed
/// and scores it on the probe side. One report per model with mean RMSE and
/// standard error.
pub fn run_comparison(
    ds: &RatingDataset,
    dataset_name: &str,
    specs: &[ModelSpec],
    ratio: f64,
    reps: usize,
    seed: u64,
    clamp: bool,
) -> Result<Vec<EvalReport>> {
    if reps == 0 {
        return Err(LcrError::data("need at least one repetition"));
    }
    if specs.is_empty() {
        return Err(LcrError::data("no models requested"));
    }
    let mut splits = Vec::with_capacity(reps);
    for rep in 0..reps {
        splits.push(ds.split_holdout(ratio, seed.wrapping_add(rep as u64))?);
    }
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut rmses = Vec::with_capacity(reps);
        let mut train_s = 0.0;
        let mut eval_s = 0.0;
        let mut per_rep = Series::new("reps", &["rep", "rmse"]);
        for (rep, split) in splits.iter().enumerate() {
            let seeded = spec.with_seed(seed.wrapping_add(rep as u64));
            let t0 = Instant::now();
            let trained = seeded.fit(&split.train)?;
            train_s += t0.elapsed().as_secs_f64();
            let t1 = Instant::now();
            let r = rmse(&trained, &split.probe, clamp)?;
            eval_s += t1.elapsed().as_secs_f64();
            per_rep.rows.push(vec![rep as f64, r]);
            rmses.push(r);
        }
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        let mut report = EvalReport::new(spec.name(), dataset_name, Some(ratio), seed);
        report.rmse = Some(mean);
        report.stderr = Some(std_error(&rmses));
        report.wall_time_s = vec![("train".into(), train_s), ("eval".into(), eval_s)];
        report.config = spec.describe();
        report.config.push(("reps".into(), reps.to_string()));
        report.series.push(per_rep);
        out.push(report);
    }
    Ok(out)
}

/// RMSE as a function of the component count, all points sharing one split.
pub fn sweep_components(
    ds: &RatingDataset,
    dataset_name: &str,
    base: &LcrConfig,
    c_values: &[usize],
    ratio: f64,
    seed: u64,
    clamp: bool,
) -> Result<EvalReport> {
    if c_values.is_empty() {
        return Err(LcrError::data("empty component list"));
    }
    let split = ds.split_holdout(ratio, seed)?;
    let mut series = Series::new("sweep", &["c", "rmse"]);
    let t0 = Instant::now();
    for &c in c_values {
        let mut config = base.clone();
        config.components = c;
        config.seed = seed;
        config.base.seed = seed;
        let trained = ModelSpec::Lcr { config }.fit(&split.train)?;
        series.rows.push(vec![c as f64, rmse(&trained, &split.probe, clamp)?]);
    }
    let mut report = EvalReport::new("lcr", dataset_name, Some(ratio), seed);
    report.wall_time_s = vec![("sweep".into(), t0.elapsed().as_secs_f64())];
    report.config = ModelSpec::Lcr { config: base.clone() }.describe();
    report.config.retain(|(k, _)| k != "components" && k != "seed");
    report.series.push(series);
    Ok(report)
}

/// RMSE of the decomposition and the plain baseline as the train share
/// grows; splits are matched at every ratio.
pub fn sweep_train_size(
    ds: &RatingDataset,
    dataset_name: &str,
    base: &LcrConfig,
    ratios: &[f64],
    seed: u64,
    clamp: bool,
) -> Result<EvalReport> {
    if ratios.is_empty() {
        return Err(LcrError::data("empty ratio list"));
    }
    let mut series = Series::new("sweep", &["ratio", "rmse_lcr", "rmse_bmf"]);
    let t0 = Instant::now();
    for &ratio in ratios {
        let split = ds.split_holdout(ratio, seed)?;
        let mut config = base.clone();
        config.seed = seed;
        config.base.seed = seed;
        let lcr = ModelSpec::Lcr { config }.fit(&split.train)?;
        let mut hyper = base.base.clone();
        hyper.seed = seed;
        let bmf = ModelSpec::Bmf { hyper }.fit(&split.train)?;
        series.rows.push(vec![
            ratio,
            rmse(&lcr, &split.probe, clamp)?,
            rmse(&bmf, &split.probe, clamp)?,
        ]);
    }
    let mut report = EvalReport::new("lcr,bmf", dataset_name, None, seed);
    report.wall_time_s = vec![("sweep".into(), t0.elapsed().as_secs_f64())];
    report.config = ModelSpec::Lcr { config: base.clone() }.describe();
    report.series.push(series);
    Ok(report)
}

/// Decompose while recording weights: a seeded sample of ratings is tracked
/// individually per epoch, alongside the all-ratings mean weight per
/// component. Returns the raw trace next to the report.
pub fn weight_trace(
    train: &RatingDataset,
    dataset_name: &str,
    config: &LcrConfig,
    sample_size: usize,
) -> Result<(EvalReport, WeightTrace)> {
    if sample_size == 0 {
        return Err(LcrError::data("sample size must be >= 1"));
    }
    let take = sample_size.min(train.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sample: Vec<u32> = rand::seq::index::sample(&mut rng, train.len(), take)
        .into_iter()
        .map(|x| x as u32)
        .collect();
    sample.sort_unstable();
    let t0 = Instant::now();
    let (_, _, trace) = decompose_traced(train, config, &sample)?;
    let elapsed = t0.elapsed().as_secs_f64();
    let c = config.components;
    let w_cols: Vec<String> = (1..=c).map(|a| format!("w_{a}")).collect();
    let mut mean_cols = vec!["epoch".to_string()];
    mean_cols.extend(w_cols.iter().cloned());
    let mut mean_series = Series {
        name: "mean_weights".into(),
        columns: mean_cols,
        rows: Vec::new(),
    };
    for (epoch, means) in trace.mean_weights.iter().enumerate() {
        let mut row = vec![epoch as f64];
        row.extend_from_slice(means);
        mean_series.rows.push(row);
    }
    let mut sample_cols = vec!["epoch".to_string(), "rating_idx".to_string()];
    sample_cols.extend(w_cols);
    let mut sample_series = Series {
        name: "sample_weights".into(),
        columns: sample_cols,
        rows: Vec::new(),
    };
    for (epoch, row) in trace.sample_weights.iter().enumerate() {
        for (s, chunk) in row.chunks(c).enumerate() {
            let mut r = vec![epoch as f64, f64::from(trace.sample_indices[s])];
            r.extend_from_slice(chunk);
            sample_series.rows.push(r);
        }
    }
    let mut report = EvalReport::new("lcr", dataset_name, None, config.seed);
    report.wall_time_s = vec![("decompose".into(), elapsed)];
    report.config = ModelSpec::Lcr { config: config.clone() }.describe();
    report.config.push(("sample".into(), take.to_string()));
    report.series.push(mean_series);
    report.series.push(sample_series);
    Ok((report, trace))
}

/// Wall-clock comparison on the full dataset: the plain baseline once, then
/// the decomposition at each component count, each the median of `runs`
/// timings. Training is forced single-threaded so the ratios reflect work,
/// not parallelism.
pub fn benchmark_runtime(
    ds: &RatingDataset,
    dataset_name: &str,
    config: &LcrConfig,
    c_values: &[usize],
    runs: usize,
) -> Result<EvalReport> {
    if runs == 0 {
        return Err(LcrError::data("need at least one timing run"));
    }
    let mut bmf_times = Vec::with_capacity(runs);
    let mut hyper = config.base.clone();
    hyper.seed = config.seed;
    for _ in 0..runs {
        let t0 = Instant::now();
        let model = bmf::fit(ds, &hyper)?;
        bmf_times.push(t0.elapsed().as_secs_f64());
        std::hint::black_box(&model);
    }
    let bmf_s = median(&mut bmf_times);
    let mut series = Series::new("bench", &["c", "lcr_s", "ratio"]);
    for &c in c_values {
        let mut cfg = config.clone();
        cfg.components = c;
        cfg.threads = 1;
        let mut times = Vec::with_capacity(runs);
        for _ in 0..runs {
            let t0 = Instant::now();
            let model = train_lcr(ds, &cfg)?;
            times.push(t0.elapsed().as_secs_f64());
            std::hint::black_box(&model);
        }
        let lcr_s = median(&mut times);
        series.rows.push(vec![c as f64, lcr_s, lcr_s / bmf_s]);
    }
    let mut report = EvalReport::new("lcr", dataset_name, None, config.seed);
    report.wall_time_s = vec![("bmf".into(), bmf_s)];
    report.config = ModelSpec::Lcr { config: config.clone() }.describe();
    report.config.retain(|(k, _)| k != "components");
    report.config.push(("runs".into(), runs.to_string()));
    report.series.push(series);
    Ok(report)
}
