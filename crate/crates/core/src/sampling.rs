//! Recursive path generation.
//!
//! Conditional models start from a historical state drawn uniformly over
//! the admissible dates and iterate `x̃_{t+1} = g(z_{t+1}, s̃_t)`, rolling
//! their own outputs into the state. Compressed models run the recursion
//! in principal-component space and decompress every step for output.
//! Each path draws its start index and noise from its own stream
//! `derive_seed(seed, i)`, so paths do not depend on each other or on how
//! they are batched.

use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::{Generator, ModelError, QmleHead, SimModel, TcnModel, VarModel};
use crate::numerics::Tensor;
use crate::panel::{index_times, read_matrix_csv, state_at, write_matrix_csv, GridLabel, LogPanel, PanelError, DEFAULT_FLOOR};
use crate::pca::CompressionMap;
use crate::rng::{derive_seed, normal_vec, seeded, Rng};

pub const DEFAULT_PATHS: usize = 40;

#[derive(Debug, thiserror::Error)]
pub enum SamplingError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("{0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
}

impl From<crate::numerics::NumericsError> for SamplingError {
    fn from(e: crate::numerics::NumericsError) -> Self {
        SamplingError::Model(ModelError::Numerics(e))
    }
}

/// A model mapping batched states and noise to next values.
pub trait ConditionalModel: Sync {
    fn value_dim(&self) -> usize;
    /// Past rows in the state besides the current one.
    fn lags(&self) -> usize;
    fn noise_dim(&self) -> usize;
    /// `states: [B, (lags + 1) · value_dim]` newest first, `z: [B, noise_dim]`.
    fn step(&self, states: &Tensor, z: &Tensor) -> Result<Tensor, ModelError>;
}

impl ConditionalModel for Generator {
    fn value_dim(&self) -> usize {
        Generator::value_dim(self)
    }

    fn lags(&self) -> usize {
        Generator::lags(self)
    }

    fn noise_dim(&self) -> usize {
        Generator::noise_dim(self)
    }

    fn step(&self, states: &Tensor, z: &Tensor) -> Result<Tensor, ModelError> {
        self.forward(z, states)
    }
}

impl ConditionalModel for QmleHead {
    fn value_dim(&self) -> usize {
        QmleHead::value_dim(self)
    }

    fn lags(&self) -> usize {
        QmleHead::lags(self)
    }

    fn noise_dim(&self) -> usize {
        QmleHead::value_dim(self)
    }

    fn step(&self, states: &Tensor, z: &Tensor) -> Result<Tensor, ModelError> {
        self.sample(states, z)
    }
}

impl ConditionalModel for VarModel {
    fn value_dim(&self) -> usize {
        self.dim()
    }

    fn lags(&self) -> usize {
        self.order() - 1
    }

    fn noise_dim(&self) -> usize {
        self.dim()
    }

    fn step(&self, states: &Tensor, z: &Tensor) -> Result<Tensor, ModelError> {
        let n = self.dim();
        if states.cols() != self.order() * n {
            return Err(ModelError::Dimension { what: "VAR state", expected: self.order() * n, got: states.cols() });
        }
        let mut out = Vec::with_capacity(states.rows() * n);
        for i in 0..states.rows() {
            out.extend(self.step_flat(states.row(i), z.row(i)));
        }
        Ok(Tensor::matrix(states.rows(), n, out)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub paths: usize,
    /// Rows per path; the historical length when unset.
    pub length: Option<usize>,
    pub seed: u64,
    /// DLV floor re-applied to outputs in log space; `None` disables it.
    pub floor: Option<f64>,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { paths: DEFAULT_PATHS, length: None, seed: 0, floor: Some(DEFAULT_FLOOR) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathInfo {
    /// Position among the requested paths.
    pub index: usize,
    pub seed: u64,
    /// Historical row the path starts from (conditional models only).
    pub start: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathFailure {
    pub index: usize,
    pub step: usize,
    pub reason: String,
}

/// Generated paths with their provenance. Paths that produced non-finite
/// values are left out and listed in `failures`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedSet {
    pub model: String,
    pub labels: Vec<GridLabel>,
    pub paths: Vec<Tensor>,
    pub info: Vec<PathInfo>,
    pub failures: Vec<PathFailure>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    model: String,
    length: usize,
    labels: Vec<String>,
    paths: Vec<ManifestPath>,
    failures: Vec<PathFailure>,
}

#[derive(Serialize, Deserialize)]
struct ManifestPath {
    file: String,
    #[serde(flatten)]
    info: PathInfo,
}

impl GeneratedSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn path_len(&self) -> usize {
        self.paths.first().map_or(0, Tensor::rows)
    }

    /// Writes `path_NNN.csv` files and `manifest.json` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), SamplingError> {
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |source| SamplingError::Io { path: p, source }
        };
        std::fs::create_dir_all(dir).map_err(io(dir))?;
        let mut entries = Vec::new();
        for (values, info) in self.paths.iter().zip(&self.info) {
            let file = format!("path_{:03}.csv", info.index);
            let p = dir.join(&file);
            let f = std::fs::File::create(&p).map_err(io(&p))?;
            write_matrix_csv(std::io::BufWriter::new(f), "t", &index_times(values.rows()), &self.labels, values)?;
            entries.push(ManifestPath { file, info: info.clone() });
        }
        let manifest = Manifest {
            model: self.model.clone(),
            length: self.path_len(),
            labels: self.labels.iter().map(ToString::to_string).collect(),
            paths: entries,
            failures: self.failures.clone(),
        };
        let p = dir.join("manifest.json");
        let json = serde_json::to_string_pretty(&manifest).map_err(|e| SamplingError::Manifest(e.to_string()))?;
        std::fs::write(&p, json + "\n").map_err(io(&p))
    }

    pub fn read_dir(dir: &Path) -> Result<Self, SamplingError> {
        let p = dir.join("manifest.json");
        let text = std::fs::read_to_string(&p).map_err(|source| SamplingError::Io { path: p.display().to_string(), source })?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| SamplingError::Manifest(e.to_string()))?;
        let labels = manifest.labels.iter().map(|l| GridLabel::parse(l).map_err(SamplingError::Manifest)).collect::<Result<Vec<_>, _>>()?;
        let mut paths = Vec::new();
        let mut info = Vec::new();
        for entry in manifest.paths {
            let p = dir.join(&entry.file);
            let f = std::fs::File::open(&p).map_err(|source| SamplingError::Io { path: p.display().to_string(), source })?;
            let (_, file_labels, values) = read_matrix_csv(std::io::BufReader::new(f))?;
            if file_labels != labels {
                return Err(SamplingError::Manifest(format!("{} has different columns", entry.file)));
            }
            paths.push(values);
            info.push(entry.info);
        }
        Ok(Self { model: manifest.model, labels, paths, info, failures: manifest.failures })
    }
}

/// One path in progress.
struct Walker {
    info: PathInfo,
    rng: Rng,
    /// Newest-first state in model space.
    state: Vec<f64>,
    rows: Vec<f64>,
    failed: Option<PathFailure>,
}

fn floored(v: &mut [f64], floor: Option<f64>) {
    if let Some(f) = floor {
        let lf = f.ln();
        v.iter_mut().for_each(|x| *x = x.max(lf));
    }
}

/// Samples `cfg.paths` paths of `cfg.length` rows from a conditional model.
/// With `cm` the model works on compressed values and outputs are
/// decompressed; otherwise it works directly on the panel columns. Row 0
/// of every path is its historical starting row (decompressed after
/// compression when `cm` is given).
pub fn sample_paths(model: &dyn ConditionalModel, cm: Option<&CompressionMap>, hist: &LogPanel, cfg: &SamplingConfig) -> Result<GeneratedSet, SamplingError> {
    let space = match cm {
        Some(cm) => cm.compress(hist.values()).map_err(|e| SamplingError::Invalid(e.to_string()))?,
        None => hist.values().clone(),
    };
    if model.value_dim() != space.cols() {
        return Err(ModelError::Dimension { what: "model value", expected: space.cols(), got: model.value_dim() }.into());
    }
    let lags = model.lags();
    let t = space.rows();
    if t < lags + 1 {
        return Err(SamplingError::Invalid(format!("history has {t} rows, the state needs {}", lags + 1)));
    }
    let length = cfg.length.unwrap_or(hist.len());
    if length == 0 {
        return Err(SamplingError::Invalid("path length must be positive".into()));
    }
    let decode = |p: &[f64]| -> Result<Vec<f64>, SamplingError> {
        match cm {
            Some(cm) => Ok(cm.decompress(&Tensor::matrix(1, p.len(), p.to_vec())?).map_err(|e| SamplingError::Invalid(e.to_string()))?.into_data()),
            None => Ok(p.to_vec()),
        }
    };
    let mut walkers = Vec::with_capacity(cfg.paths);
    for index in 0..cfg.paths {
        let seed = derive_seed(cfg.seed, index as u64);
        let mut rng = seeded(seed);
        let start = rng.random_range(lags..t);
        let state = state_at(&space, start, lags);
        let mut first = decode(space.row(start))?;
        floored(&mut first, cfg.floor);
        walkers.push(Walker { info: PathInfo { index, seed, start: Some(start) }, rng, state, rows: first, failed: None });
    }
    let n_out = hist.dim();
    let chunk = walkers.len().div_ceil(rayon::current_num_threads().max(1)).max(1);
    walkers.par_chunks_mut(chunk).try_for_each(|group| run_group(model, cm, group, length, cfg.floor))?;
    let mut set = GeneratedSet { model: String::new(), labels: hist.labels().to_vec(), paths: Vec::new(), info: Vec::new(), failures: Vec::new() };
    for w in walkers {
        match w.failed {
            Some(f) => set.failures.push(f),
            None => {
                set.paths.push(Tensor::matrix(length, n_out, w.rows)?);
                set.info.push(w.info);
            }
        }
    }
    Ok(set)
}

fn run_group(model: &dyn ConditionalModel, cm: Option<&CompressionMap>, group: &mut [Walker], length: usize, floor: Option<f64>) -> Result<(), SamplingError> {
    let n = model.value_dim();
    let sd = (model.lags() + 1) * n;
    let nz = model.noise_dim();
    for step in 1..length {
        let alive: Vec<usize> = (0..group.len()).filter(|&i| group[i].failed.is_none()).collect();
        if alive.is_empty() {
            break;
        }
        let mut s = Vec::with_capacity(alive.len() * sd);
        let mut z = Vec::with_capacity(alive.len() * nz);
        for &i in &alive {
            s.extend_from_slice(&group[i].state);
            z.extend(normal_vec(&mut group[i].rng, nz));
        }
        let next = model.step(&Tensor::matrix(alive.len(), sd, s)?, &Tensor::matrix(alive.len(), nz, z)?)?;
        let out = match cm {
            Some(cm) => cm.decompress(&next).map_err(|e| SamplingError::Invalid(e.to_string()))?,
            None => next.clone(),
        };
        for (r, &i) in alive.iter().enumerate() {
            let w = &mut group[i];
            let x = next.row(r);
            let mut row = out.row(r).to_vec();
            if let Some(bad) = row.iter().chain(x).position(|v| !v.is_finite()) {
                w.failed = Some(PathFailure { index: w.info.index, step, reason: format!("non-finite value in output column {}", bad % row.len().max(1)) });
                continue;
            }
            floored(&mut row, floor);
            // Explicit models feed the floored output back into the state.
            let fed: &[f64] = if cm.is_some() { x } else { &row };
            w.state.copy_within(0..sd - n, n);
            w.state[..n].copy_from_slice(fed);
            w.rows.extend_from_slice(&row);
        }
    }
    Ok(())
}

/// Unconditional TCN paths: each path slides its own i.i.d. noise sequence
/// through the receptive field.
pub fn sample_tcn_paths(model: &TcnModel, labels: &[GridLabel], cfg: &SamplingConfig, length: usize) -> Result<GeneratedSet, SamplingError> {
    let spec = model.spec();
    if labels.len() != spec.output_dim {
        return Err(ModelError::Dimension { what: "TCN output", expected: labels.len(), got: spec.output_dim }.into());
    }
    if length == 0 {
        return Err(SamplingError::Invalid("path length must be positive".into()));
    }
    let rf = model.receptive_field();
    let results: Vec<Result<(PathInfo, Result<Tensor, PathFailure>), SamplingError>> = (0..cfg.paths)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(cfg.seed, index as u64);
            let mut rng = seeded(seed);
            let noise = Tensor::matrix(length + rf - 1, spec.noise_dim, normal_vec(&mut rng, (length + rf - 1) * spec.noise_dim))?;
            let mut out = model.forward_sequence(&noise, 1)?;
            let info = PathInfo { index, seed, start: None };
            if let Some(bad) = out.data().iter().position(|v| !v.is_finite()) {
                let step = bad / spec.output_dim;
                return Ok((info, Err(PathFailure { index, step, reason: "non-finite TCN output".into() })));
            }
            floored(out.data_mut(), cfg.floor);
            Ok((info, Ok(out)))
        })
        .collect();
    let mut set = GeneratedSet { model: "tcn".into(), labels: labels.to_vec(), paths: Vec::new(), info: Vec::new(), failures: Vec::new() };
    for r in results {
        let (info, path) = r?;
        match path {
            Ok(p) => {
                set.paths.push(p);
                set.info.push(info);
            }
            Err(f) => set.failures.push(f),
        }
    }
    Ok(set)
}

/// Dispatches on the checkpointed model kind.
pub fn sample_model(model: &SimModel, cm: Option<&CompressionMap>, hist: &LogPanel, cfg: &SamplingConfig) -> Result<GeneratedSet, SamplingError> {
    let mut set = match model {
        SimModel::Generator(g) => sample_paths(g, cm, hist, cfg)?,
        SimModel::Qmle(q) => sample_paths(q, cm, hist, cfg)?,
        SimModel::Var(v) => sample_paths(v, cm, hist, cfg)?,
        SimModel::Tcn(t) => {
            let length = cfg.length.unwrap_or(hist.len());
            let set = sample_tcn_paths(t, hist.labels(), cfg, length)?;
            if cm.is_some() {
                return Err(SamplingError::Invalid("TCN models are not compressed".into()));
            }
            set
        }
    };
    set.model = model.kind().to_string();
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::plain_normalizer;
    use crate::models::NetConfig;
    use crate::panel::GridLabel;

    fn labels(n: usize) -> Vec<GridLabel> {
        (0..n).map(|i| GridLabel::new(1.0 + i as f64 * 0.1, 20).unwrap()).collect()
    }

    fn hist() -> LogPanel {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![(i as f64 * 0.3).sin(), (i as f64 * 0.2).cos()]).collect();
        LogPanel::from_rows_indexed(labels(2), Tensor::from_rows(&rows).unwrap(), 0.01).unwrap()
    }

    #[test]
    fn identity_var_keeps_initial_state() {
        let m = VarModel::from_parts(&[Tensor::eye(2)], &[0.0, 0.0], &Tensor::zeros(&[2, 2])).unwrap();
        let h = hist();
        let set = sample_paths(&m, None, &h, &SamplingConfig { paths: 3, length: Some(12), seed: 4, floor: None }).unwrap();
        for (p, info) in set.paths.iter().zip(&set.info) {
            let start = info.start.unwrap();
            for t in 0..12 {
                assert_eq!(p.row(t), h.values().row(start));
            }
        }
    }

    #[test]
    fn batching_does_not_change_paths() {
        let g = Generator::new(&NetConfig::default(), plain_normalizer(2, 1), None, &mut seeded(1)).unwrap();
        let h = hist();
        let cfg = SamplingConfig { paths: 6, length: Some(20), seed: 9, floor: None };
        let all = sample_paths(&g, None, &h, &cfg).unwrap();
        for k in 0..6 {
            let mut one = sample_paths(&g, None, &h, &SamplingConfig { paths: k + 1, ..cfg.clone() }).unwrap();
            assert_eq!(one.paths.pop().unwrap(), all.paths[k]);
        }
    }

    #[test]
    fn floor_applies_to_outputs() {
        let m = VarModel::from_parts(&[Tensor::zeros(&[2, 2])], &[-10.0, 0.0], &Tensor::zeros(&[2, 2])).unwrap();
        let set = sample_paths(&m, None, &hist(), &SamplingConfig { paths: 2, length: Some(5), seed: 0, floor: Some(0.01) }).unwrap();
        for p in &set.paths {
            for t in 1..5 {
                assert_eq!(p.get(t, 0), 0.01f64.ln());
            }
        }
    }

    #[test]
    fn exploding_paths_are_reported() {
        let m = VarModel::from_parts(&[Tensor::full(&[2, 2], 1e200)], &[0.0, 0.0], &Tensor::zeros(&[2, 2])).unwrap();
        let set = sample_paths(&m, None, &hist(), &SamplingConfig { paths: 3, length: Some(10), seed: 0, floor: None }).unwrap();
        assert!(set.paths.len() + set.failures.len() == 3);
        assert!(!set.failures.is_empty());
    }

    #[test]
    fn directory_round_trip() {
        let m = VarModel::from_parts(&[Tensor::eye(2).scale(0.5)], &[0.0, 0.1], &Tensor::eye(2).scale(0.01)).unwrap();
        let mut set = sample_paths(&m, None, &hist(), &SamplingConfig { paths: 2, length: Some(7), seed: 3, floor: None }).unwrap();
        set.model = "var".into();
        let dir = tempfile::tempdir().unwrap();
        set.write_dir(dir.path()).unwrap();
        assert_eq!(GeneratedSet::read_dir(dir.path()).unwrap(), set);
    }
}
