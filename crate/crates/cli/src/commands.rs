use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dlvsim::fixtures::{ar1_panel, FactorFixture, VarSvFixture};
use dlvsim::metrics::{full_report, render_table, MetricsConfig, ScoreReport};
use dlvsim::models::{
    save_checkpoint, load_checkpoint, var_fit, Checkpoint, Discriminator, Generator, Normalizer, QmleHead, SimModel, TcnModel,
};
use dlvsim::numerics::Tensor;
use dlvsim::panel::{load_panel, to_log, GridLabel, LogPanel, WindowSet, DEFAULT_FLOOR};
use dlvsim::pca::{fit_pca, CompressionMap};
use dlvsim::rng::{derive_seed, seeded};
use dlvsim::sampling::{sample_model, GeneratedSet, SamplingConfig};
use dlvsim::training::{train_gan, train_qmle, train_tcn, EvalRecord, Method, TrainError, TrainLog, TrainOutcome};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{DataKind, ModelSection, RunConfig};
use crate::CliError;

/// Stream index of the model-initialization RNG, kept apart from the
/// streams training derives from the same seed.
const INIT_STREAM: u64 = 0x1d1d;

pub const HISTORY_FILE: &str = "history.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const LAST_CHECKPOINT_FILE: &str = "last.ckpt";
pub const SCORES_FILE: &str = "scores.json";

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    text.push('\n');
    let mut f = create(path)?;
    f.write_all(text.as_bytes()).and_then(|_| f.flush()).map_err(|e| CliError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_log_panel(path: &Path, lp: &LogPanel, source: &str, floored: usize) -> Result<(), CliError> {
    let mut f = create(path)?;
    lp.write_csv(&mut f)?;
    f.flush().map_err(|e| CliError::io(path, e))?;
    write_json(&path.with_extension("json"), &lp.sidecar(source, floored))
}

fn parse_grid(grid: &[String]) -> Result<Vec<GridLabel>, CliError> {
    grid.iter().map(|g| GridLabel::parse(g).map_err(CliError::Input)).collect()
}

fn select_log(lp: LogPanel, keep: &[GridLabel]) -> Result<LogPanel, CliError> {
    if keep.is_empty() {
        return Ok(lp);
    }
    let idx = keep
        .iter()
        .map(|k| lp.labels().iter().position(|l| l.to_string() == k.to_string()).ok_or_else(|| CliError::Input(format!("grid filter names unknown label {k}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let v = lp.values();
    let data = (0..v.rows()).flat_map(|t| idx.iter().map(move |&j| v.get(t, j))).collect();
    let values = Tensor::matrix(v.rows(), idx.len(), data).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(LogPanel::from_log_values(lp.times().to_vec(), keep.to_vec(), values, lp.floor())?)
}

/// Loads a data file as a log panel with the floor applied; returns the
/// number of floored raw values as well.
fn load_history(data: &Path, kind: DataKind, floor: f64, grid: &[String]) -> Result<(LogPanel, usize), CliError> {
    let keep = parse_grid(grid)?;
    match kind {
        DataKind::Dlv => {
            let mut panel = load_panel(data, floor)?;
            if !keep.is_empty() {
                panel = panel.select(&keep)?;
            }
            Ok((to_log(&panel, floor)?, panel.floored_count()))
        }
        DataKind::LogDlv => Ok((select_log(LogPanel::load(data, floor)?, &keep)?, 0)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub rows: usize,
    pub n_x: usize,
    pub floored_count: usize,
    pub labels: Vec<String>,
    /// Per-column minimum and maximum of the log values.
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Loads a raw DLV CSV and writes `panel.csv`, its `panel.json` sidecar and
/// `summary.json` into `out`.
pub fn cmd_ingest(data: &Path, floor: f64, grid: &[String], out: &Path) -> Result<IngestSummary, CliError> {
    let (lp, floored) = load_history(data, DataKind::Dlv, floor, grid)?;
    write_log_panel(&out.join("panel.csv"), &lp, &data.display().to_string(), floored)?;
    let v = lp.values();
    let col = |j: usize| v.column(j);
    let summary = IngestSummary {
        rows: lp.len(),
        n_x: lp.dim(),
        floored_count: floored,
        labels: lp.labels().iter().map(ToString::to_string).collect(),
        min: (0..lp.dim()).map(|j| col(j).into_iter().fold(f64::INFINITY, f64::min)).collect(),
        max: (0..lp.dim()).map(|j| col(j).into_iter().fold(f64::NEG_INFINITY, f64::max)).collect(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Synthetic panels for experiments and tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixtureKind {
    /// Four-dimensional VAR(1) with stochastic volatility.
    VarSv,
    /// 8 × 4 grid driven by five latent factors.
    Factor,
    /// Univariate AR(1) with φ = 0.95.
    Ar1,
}

impl std::str::FromStr for FixtureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "var-sv" => Ok(FixtureKind::VarSv),
            "factor" => Ok(FixtureKind::Factor),
            "ar1" => Ok(FixtureKind::Ar1),
            _ => Err(format!("unknown fixture {s:?}; expected var-sv, factor or ar1")),
        }
    }
}

pub const AR1_PHI: f64 = 0.95;

pub fn fixture_panel(kind: FixtureKind, seed: u64, length: Option<usize>) -> LogPanel {
    match kind {
        FixtureKind::VarSv => {
            let d = VarSvFixture::default();
            VarSvFixture { length: length.unwrap_or(d.length), ..d }.generate(seed)
        }
        FixtureKind::Factor => {
            let d = FactorFixture::default();
            FactorFixture { length: length.unwrap_or(d.length), ..d }.generate(seed)
        }
        FixtureKind::Ar1 => ar1_panel(AR1_PHI, -1.0, 0.05, length.unwrap_or(VarSvFixture::default().length), seed),
    }
}

/// Writes a synthetic log panel to `out` (plus a `.json` sidecar).
pub fn cmd_fixture(kind: FixtureKind, seed: u64, length: Option<usize>, out: &Path) -> Result<LogPanel, CliError> {
    let lp = fixture_panel(kind, seed, length);
    write_log_panel(out, &lp, &format!("fixture:{kind:?}:{seed}"), 0)?;
    Ok(lp)
}

/// Row label of a run in reports.
pub fn run_label(cfg: &RunConfig) -> String {
    let base = match (&cfg.model, cfg.train.method) {
        (ModelSection::Generator { .. }, Method::WganGp) => "WGAN-GP".to_string(),
        (ModelSection::Generator { .. }, _) => "GAN".to_string(),
        (ModelSection::Qmle { .. }, _) => "qMLE".to_string(),
        (ModelSection::Var { order }, _) => format!("VAR({order})"),
        (ModelSection::Tcn { .. }, Method::WganGp) => "TCN (WGAN-GP)".to_string(),
        (ModelSection::Tcn { .. }, _) => "TCN".to_string(),
    };
    if cfg.compression.enabled {
        format!("{base}, N_P={}", cfg.compression.components)
    } else {
        base
    }
}

/// What a training run leaves behind besides its files.
#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub dir: PathBuf,
    pub label: String,
    pub log: TrainLog,
    /// Scores of the selected checkpoint.
    pub scores: Option<ScoreReport>,
    pub best: SimModel,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    label: &'a str,
    model: &'a str,
    updates: usize,
    stopped_early: bool,
    best_update: Option<usize>,
    per_metric_best_update: Vec<(&'static str, Option<usize>)>,
    scores: Option<&'a ScoreReport>,
}

/// Trains the configured model. Writes into the output directory:
/// `config.json`, `history.csv`, `train_log.jsonl`, `checkpoint.ckpt`
/// (selected parameters), `last.ckpt`, `scores.json` and `summary.json`.
/// A non-finite loss writes `nonfinite.ckpt` and fails with exit code 3.
pub fn cmd_train(config: &Path) -> Result<TrainSummary, CliError> {
    let cfg = RunConfig::load(config)?;
    train_run(&cfg)
}

/// [`cmd_train`] on an already validated config.
pub fn train_run(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let out = &cfg.output;
    let (hist, _) = load_history(&cfg.data, cfg.data_kind, cfg.floor, &cfg.grid)?;
    let cm = if cfg.compression.enabled { Some(fit_pca(hist.values(), cfg.compression.components)?) } else { None };
    let values = match &cm {
        Some(cm) => cm.compress(hist.values())?,
        None => hist.values().clone(),
    };
    let lags = cfg.model.lags();
    let windows = WindowSet::with_fraction(values.clone(), lags, cfg.split.seed, cfg.split.train_fraction)?;

    write_json(&out.join("config.json"), cfg)?;
    write_log_panel(&out.join(HISTORY_FILE), &hist, &cfg.data.display().to_string(), 0)?;

    let scfg = cfg.sampling.to_core(cfg.floor);
    let mut hook = |m: &SimModel, _update: usize| score_model(m, cm.as_ref(), &hist, &scfg, &cfg.metrics).map_err(|e| e.to_string());
    let mut rng = seeded(derive_seed(cfg.train.seed, INIT_STREAM));
    let result = match &cfg.model {
        ModelSection::Generator { representation, generator, discriminator, noise_dim, .. } => {
            let norm = Normalizer::fit(&windows, *representation);
            let mut g = Generator::new(generator, norm.clone(), *noise_dim, &mut rng)?;
            let mut d = Discriminator::new(discriminator, norm, &mut rng)?;
            train_gan(&mut g, &mut d, &windows, &cfg.train, &mut hook)
        }
        ModelSection::Qmle { representation, net, .. } => {
            let norm = Normalizer::fit(&windows, *representation);
            let mut q = QmleHead::new(net, norm, &mut rng)?;
            train_qmle(&mut q, &windows, &cfg.train, &mut hook)
        }
        ModelSection::Var { order } => {
            let model = SimModel::Var(var_fit(&values, *order)?);
            let (scores, error) = match hook(&model, 0) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e)),
            };
            let mut log = TrainLog { records: vec![EvalRecord { update: 0, loss_d: None, loss_g: None, val_nll: None, scores, error }], ..TrainLog::default() };
            log.select_best();
            Ok(TrainOutcome { log, last: model.clone(), best: model, discriminator: None })
        }
        ModelSection::Tcn { discriminator, .. } => {
            let spec = cfg.model.tcn_spec(values.cols()).expect("tcn section");
            let mut t = TcnModel::new(spec, &mut rng)?;
            let norm = Normalizer::fit(&windows, dlvsim::models::Representation::Levels);
            let mut d = Discriminator::new(discriminator, norm, &mut rng)?;
            train_tcn(&mut t, &mut d, &windows, &cfg.train, &mut hook)
        }
    };

    let meta = |update: Option<usize>| {
        json!({
            "history": HISTORY_FILE,
            "floor": cfg.floor,
            "apply_floor": cfg.sampling.apply_floor,
            "label": run_label(cfg),
            "update": update,
        })
    };
    let checkpoint = |model: SimModel, disc: Option<Discriminator>, update: Option<usize>| Checkpoint {
        model,
        discriminator: disc,
        compression: cm.clone(),
        meta: meta(update),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(TrainError::NonFinite { update, what, snapshot }) => {
            save_checkpoint(&out.join("nonfinite.ckpt"), &checkpoint(*snapshot, None, Some(update)))?;
            return Err(CliError::Numeric(format!("non-finite {what} at update {update}; snapshot in {}", out.join("nonfinite.ckpt").display())));
        }
        Err(e) => return Err(e.into()),
    };

    let log = &outcome.log;
    let mut f = create(&out.join("train_log.jsonl"))?;
    log.write_jsonl(&mut f).and_then(|_| f.flush()).map_err(|e| CliError::io(&out.join("train_log.jsonl"), e))?;
    let best_update = log.best.map(|i| log.records[i].update);
    save_checkpoint(&out.join(CHECKPOINT_FILE), &checkpoint(outcome.best.clone(), outcome.discriminator.clone(), best_update))?;
    save_checkpoint(&out.join(LAST_CHECKPOINT_FILE), &checkpoint(outcome.last.clone(), outcome.discriminator.clone(), Some(log.updates)))?;

    let label = run_label(cfg);
    let scores = log.best.and_then(|i| log.records[i].scores.clone()).map(|mut s| {
        s.model = label.clone();
        s
    });
    if let Some(s) = &scores {
        write_json(&out.join(SCORES_FILE), s)?;
    }
    let summary = RunSummary {
        label: &label,
        model: cfg.model.kind(),
        updates: log.updates,
        stopped_early: log.stopped_early,
        best_update,
        per_metric_best_update: ScoreReport::NAMES
            .iter()
            .zip(log.per_metric_best.iter().chain(std::iter::repeat(&None)))
            .map(|(n, i)| (*n, i.map(|i| log.records[i].update)))
            .collect(),
        scores: scores.as_ref(),
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(TrainSummary { dir: out.clone(), label, log: outcome.log.clone(), scores, best: outcome.best })
}

/// Samples from `model` and scores the paths against `hist`.
pub fn score_model(
    model: &SimModel,
    cm: Option<&CompressionMap>,
    hist: &LogPanel,
    scfg: &SamplingConfig,
    metrics: &MetricsConfig,
) -> Result<ScoreReport, CliError> {
    let set = sample_model(model, cm, hist, scfg)?;
    if set.is_empty() {
        return Err(CliError::Numeric(format!("all {} paths failed", scfg.paths)));
    }
    Ok(full_report(hist.values(), &set.paths, metrics)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GenerateRequest {
    pub paths: usize,
    pub length: Option<usize>,
    pub seed: u64,
}

/// Samples paths from a checkpoint into `out` (`path_NNN.csv` plus
/// `manifest.json`). Initial states come from `hist`, or from the history
/// saved next to the checkpoint.
pub fn cmd_generate(checkpoint: &Path, hist: Option<&Path>, req: &GenerateRequest, out: &Path) -> Result<GeneratedSet, CliError> {
    let ckpt = load_checkpoint(checkpoint)?;
    let floor = ckpt.meta.get("floor").and_then(|v| v.as_f64()).unwrap_or(DEFAULT_FLOOR);
    let apply_floor = ckpt.meta.get("apply_floor").and_then(|v| v.as_bool()).unwrap_or(true);
    let hist_path = match hist {
        Some(p) => p.to_path_buf(),
        None => {
            let name = ckpt.meta.get("history").and_then(|v| v.as_str()).unwrap_or(HISTORY_FILE);
            checkpoint.parent().unwrap_or(Path::new(".")).join(name)
        }
    };
    let hist = LogPanel::load(&hist_path, floor)?;
    let scfg = SamplingConfig { paths: req.paths, length: req.length, seed: req.seed, floor: apply_floor.then_some(floor) };
    if scfg.paths == 0 {
        return Err(CliError::Input("--m must be at least 1".into()));
    }
    let set = sample_model(&ckpt.model, ckpt.compression.as_ref(), &hist, &scfg)?;
    set.write_dir(out)?;
    if set.is_empty() {
        return Err(CliError::Numeric(format!("all {} paths failed; see {}", req.paths, out.join("manifest.json").display())));
    }
    Ok(set)
}

/// Reads generated paths: a directory with `manifest.json`, or a single
/// log-panel CSV treated as one path.
pub fn load_generated(path: &Path) -> Result<(String, Vec<Tensor>), CliError> {
    if path.is_dir() {
        let set = GeneratedSet::read_dir(path)?;
        Ok((set.model, set.paths))
    } else {
        let lp = LogPanel::load(path, DEFAULT_FLOOR)?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Ok((name, vec![lp.values().clone()]))
    }
}

/// Scores generated paths against a historical log panel. Writes the
/// report as JSON to `out` when given.
pub fn cmd_evaluate(hist: &Path, gen: &Path, metrics: Option<&Path>, out: Option<&Path>) -> Result<ScoreReport, CliError> {
    let cfg: MetricsConfig = match metrics {
        Some(p) => read_json(p)?,
        None => MetricsConfig::default(),
    };
    let hist = LogPanel::load(hist, DEFAULT_FLOOR)?;
    let (model, paths) = load_generated(gen)?;
    if paths.is_empty() {
        return Err(CliError::Numeric(format!("{} holds no paths", gen.display())));
    }
    let mut report = full_report(hist.values(), &paths, &cfg)?;
    report.model = model;
    if let Some(out) = out {
        write_json(out, &report)?;
    }
    Ok(report)
}

/// Comparison table over runs. Each entry is a run directory (its
/// `scores.json` is used) or a score-report JSON file. Writes
/// `report.txt` and `report.csv` into `out` when given.
pub fn cmd_report(runs: &[PathBuf], out: Option<&Path>) -> Result<String, CliError> {
    if runs.is_empty() {
        return Err(CliError::Input("report needs at least one run".into()));
    }
    let mut rows = Vec::new();
    for run in runs {
        let file = if run.is_dir() { run.join(SCORES_FILE) } else { run.clone() };
        let report: ScoreReport = read_json(&file)?;
        let name = if report.model.is_empty() {
            run.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
        } else {
            report.model.clone()
        };
        rows.push((name, report));
    }
    let table = render_table(&rows);
    if let Some(out) = out {
        let txt = out.join("report.txt");
        let mut f = create(&txt)?;
        f.write_all(table.as_bytes()).and_then(|_| f.flush()).map_err(|e| CliError::io(&txt, e))?;
        let csv_path = out.join("report.csv");
        let csv_err = |e: csv::Error| CliError::Input(format!("{}: {e}", csv_path.display()));
        let mut w = csv::Writer::from_writer(create(&csv_path)?);
        w.write_record(std::iter::once("model").chain(ScoreReport::NAMES)).map_err(csv_err)?;
        for (name, r) in &rows {
            let cells = r.values().map(|v| v.to_string());
            w.write_record(std::iter::once(name.as_str()).chain(cells.iter().map(String::as_str))).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(&csv_path, e))?;
    }
    Ok(table)
}
