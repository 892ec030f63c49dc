//! Scores comparing a historical panel with a set of generated paths:
//! binned density distance, skewness and kurtosis gaps, autocorrelation
//! gaps on levels and returns, and cross-correlation gaps on levels and
//! returns.
//!
//! Historical data is a `T × N` matrix; generated data is a slice of
//! `T_gen × N` path matrices.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;

pub const DEFAULT_BIN_SIZE: usize = 20;
pub const DEFAULT_ACF_X_LAGS: usize = 32;
pub const DEFAULT_ACF_R_LAGS: usize = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no generated data")]
    Empty,
    #[error("dimension {dim} has zero variance")]
    ZeroVariance { dim: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("need more than {need} observations, got {have}")]
    TooShort { need: usize, have: usize },
    #[error("expected {expected} columns, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("{metric}: {source}")]
    InMetric { metric: &'static str, source: Box<MetricsError> },
}

fn named<T>(metric: &'static str, r: Result<T, MetricsError>) -> Result<T, MetricsError> {
    r.map_err(|e| MetricsError::InMetric { metric, source: Box::new(e) })
}

fn check_paths(n: usize, gen: &[Tensor]) -> Result<(), MetricsError> {
    if gen.is_empty() || gen.iter().all(|p| p.rows() == 0) {
        return Err(MetricsError::Empty);
    }
    for p in gen {
        if p.cols() != n {
            return Err(MetricsError::Shape { expected: n, got: p.cols() });
        }
    }
    Ok(())
}

/// Equal-frequency bin edges per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    /// Interior edges of each dimension, ascending; `edges[j].len() + 1` bins.
    pub edges: Vec<Vec<f64>>,
}

/// Interior edges putting about `bin_size` sorted values in each bin.
fn quantile_edges(sorted: &[f64], bin_size: usize) -> Vec<f64> {
    let t = sorted.len();
    let k = t.div_ceil(bin_size.max(1)).max(1);
    (1..k).map(|i| sorted[((i * t) as f64 / k as f64).round() as usize]).collect()
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

impl Binning {
    /// `⌈T / bin_size⌉` bins per column of `hist`.
    pub fn fit(hist: &Tensor, bin_size: usize) -> Self {
        let edges = (0..hist.cols()).map(|j| quantile_edges(&sorted(hist.column(j)), bin_size)).collect();
        Self { edges }
    }

    pub fn n_bins(&self, dim: usize) -> usize {
        self.edges[dim].len() + 1
    }

    /// Bin of `v` in dimension `dim`; values beyond the outer edges land in
    /// the first or last bin.
    pub fn bin_of(&self, dim: usize, v: f64) -> usize {
        self.edges[dim].partition_point(|e| *e <= v)
    }

    /// Probability mass per bin of `values` in dimension `dim`.
    pub fn epdf(&self, dim: usize, values: impl IntoIterator<Item = f64>) -> Vec<f64> {
        let mut counts = vec![0usize; self.n_bins(dim)];
        let mut total = 0usize;
        for v in values {
            counts[self.bin_of(dim, v)] += 1;
            total += 1;
        }
        counts.into_iter().map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Mean over dimensions of `Σ_B |f̂_h(B) - f̂_g(B)|`, with the generated
/// density pooled over all paths.
pub fn epdf_distance(hist: &Tensor, gen: &[Tensor], bin_size: usize) -> Result<f64, MetricsError> {
    let n = hist.cols();
    check_paths(n, gen)?;
    let bins = Binning::fit(hist, bin_size);
    let mut total = 0.0;
    for j in 0..n {
        let fh = bins.epdf(j, hist.column(j));
        let fg = bins.epdf(j, gen.iter().flat_map(|p| (0..p.rows()).map(move |i| p.get(i, j))));
        total += l1(&fh, &fg);
    }
    Ok(total / n as f64)
}

/// Same distance with a single binning of all values pooled across
/// dimensions.
pub fn epdf_distance_pooled(hist: &Tensor, gen: &[Tensor], bin_size: usize) -> Result<f64, MetricsError> {
    check_paths(hist.cols(), gen)?;
    let flat = Tensor::matrix(hist.numel(), 1, hist.data().to_vec()).expect("flattened");
    let bins = Binning::fit(&flat, bin_size);
    let fh = bins.epdf(0, hist.data().iter().copied());
    let fg = bins.epdf(0, gen.iter().flat_map(|p| p.data().iter().copied()));
    Ok(l1(&fh, &fg))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    #[default]
    Skew,
    Kurtosis,
}

/// Which sample moment estimator to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MomentEstimator {
    /// Plain `g1 = m3 / m2^{3/2}` and `g2 = m4 / m2² - 3`.
    #[default]
    Plain,
    /// Adjusted Fisher–Pearson skewness and bias-corrected excess kurtosis.
    Adjusted,
}

/// Sample skewness or excess kurtosis.
pub fn sample_moment(values: &[f64], moment: Moment, estimator: MomentEstimator) -> Option<f64> {
    let n = values.len() as f64;
    if values.len() < 4 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let tol = 1e-12 * mean.abs().max(f64::MIN_POSITIVE);
    if !(m2 > tol * tol) {
        return None;
    }
    let g1 = m3 / m2.powf(1.5);
    let g2 = m4 / (m2 * m2) - 3.0;
    Some(match (moment, estimator) {
        (Moment::Skew, MomentEstimator::Plain) => g1,
        (Moment::Kurtosis, MomentEstimator::Plain) => g2,
        (Moment::Skew, MomentEstimator::Adjusted) => g1 * (n * (n - 1.0)).sqrt() / (n - 2.0),
        (Moment::Kurtosis, MomentEstimator::Adjusted) => (n - 1.0) / ((n - 2.0) * (n - 3.0)) * ((n + 1.0) * g2 + 6.0),
    })
}

/// Mean over dimensions of `|moment(hist_j) - moment(gen_j)|`. With
/// `pooled` the generated moment is taken on the stacked paths, otherwise
/// it is the mean of per-path moments.
pub fn moment_score(hist: &Tensor, gen: &[Tensor], moment: Moment, estimator: MomentEstimator, pooled: bool) -> Result<f64, MetricsError> {
    let n = hist.cols();
    check_paths(n, gen)?;
    let mut total = 0.0;
    for j in 0..n {
        let h = sample_moment(&hist.column(j), moment, estimator).ok_or(MetricsError::ZeroVariance { dim: j })?;
        let g = if pooled {
            let stacked: Vec<f64> = gen.iter().flat_map(|p| p.column(j)).collect();
            sample_moment(&stacked, moment, estimator).ok_or(MetricsError::ZeroVariance { dim: j })?
        } else {
            let mut acc = 0.0;
            for p in gen {
                acc += sample_moment(&p.column(j), moment, estimator).ok_or(MetricsError::ZeroVariance { dim: j })?;
            }
            acc / gen.len() as f64
        };
        total += (h - g).abs();
    }
    Ok(total / n as f64)
}

/// Sample autocorrelations at lags `1..=n_lags`.
pub fn acf(series: &[f64], n_lags: usize) -> Result<Vec<f64>, MetricsError> {
    let t = series.len();
    if t <= n_lags {
        return Err(MetricsError::TooShort { need: n_lags, have: t });
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let d: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(MetricsError::ConstantSeries);
    }
    Ok((1..=n_lags).map(|k| d[..t - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / denom).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Levels,
    Returns,
}

fn differenced(values: &Tensor) -> Tensor {
    let (t, n) = values.dims2();
    if t < 2 {
        return Tensor::zeros(&[0, n]);
    }
    let mut out = Vec::with_capacity((t - 1) * n);
    for i in 1..t {
        out.extend(values.row(i).iter().zip(values.row(i - 1)).map(|(a, b)| a - b));
    }
    Tensor::matrix(t - 1, n, out).expect("returns shape")
}

fn target_of(values: &Tensor, target: Target) -> Tensor {
    match target {
        Target::Levels => values.clone(),
        Target::Returns => differenced(values),
    }
}

/// Frobenius norm over (dimension, lag) of the historical ACF minus the
/// mean generated ACF, divided by the dimension count when `per_dim`.
pub fn acf_score(hist: &Tensor, gen: &[Tensor], target: Target, n_lags: usize, per_dim: bool) -> Result<f64, MetricsError> {
    let n = hist.cols();
    check_paths(n, gen)?;
    let h = target_of(hist, target);
    let paths: Vec<Tensor> = gen.iter().map(|p| target_of(p, target)).collect();
    let mut sq = 0.0;
    for j in 0..n {
        let rh = acf(&h.column(j), n_lags)?;
        let mut mean = vec![0.0; n_lags];
        for p in &paths {
            for (m, r) in mean.iter_mut().zip(acf(&p.column(j), n_lags)?) {
                *m += r;
            }
        }
        for (a, m) in rh.iter().zip(&mean) {
            sq += (a - m / paths.len() as f64).powi(2);
        }
    }
    let norm = sq.sqrt();
    Ok(if per_dim { norm / n as f64 } else { norm })
}

/// Accumulated first and second moments of row vectors.
struct CovAcc {
    n: usize,
    count: usize,
    shift: Vec<f64>,
    sum: Vec<f64>,
    cross: Vec<f64>,
}

impl CovAcc {
    /// Rows are accumulated after subtracting `shift`; a rough centre keeps
    /// the one-pass sums well conditioned.
    fn new(shift: Vec<f64>) -> Self {
        let n = shift.len();
        Self { n, count: 0, shift, sum: vec![0.0; n], cross: vec![0.0; n * n] }
    }

    fn add(&mut self, values: &Tensor) {
        let n = self.n;
        let shift = &self.shift;
        let mut d = vec![0.0; n];
        for i in 0..values.rows() {
            for (k, (v, s)) in values.row(i).iter().zip(shift.iter()).enumerate() {
                d[k] = v - s;
            }
            for a in 0..n {
                self.sum[a] += d[a];
                for b in a..n {
                    self.cross[a * n + b] += d[a] * d[b];
                }
            }
        }
        self.count += values.rows();
    }

    fn correlation(&self) -> Result<Tensor, MetricsError> {
        let n = self.n;
        if self.count < 2 {
            return Err(MetricsError::TooShort { need: 1, have: self.count });
        }
        let c = self.count as f64;
        let mut cov = vec![0.0; n * n];
        for a in 0..n {
            for b in a..n {
                let v = self.cross[a * n + b] / c - self.sum[a] * self.sum[b] / (c * c);
                cov[a * n + b] = v;
                cov[b * n + a] = v;
            }
        }
        let sd: Vec<f64> = (0..n).map(|a| cov[a * n + a].max(0.0).sqrt()).collect();
        for (a, s) in sd.iter().enumerate() {
            let scale = self.shift[a].abs().max((self.cross[a * n + a] / c).sqrt()).max(f64::MIN_POSITIVE);
            if !(*s > 1e-12 * scale) {
                return Err(MetricsError::ZeroVariance { dim: a });
            }
        }
        let mut out = vec![0.0; n * n];
        for a in 0..n {
            for b in 0..n {
                out[a * n + b] = if a == b { 1.0 } else { (cov[a * n + b] / (sd[a] * sd[b])).clamp(-1.0, 1.0) };
            }
        }
        Ok(Tensor::matrix(n, n, out).expect("square"))
    }
}

fn column_means(values: &Tensor) -> Vec<f64> {
    let r = values.rows().max(1) as f64;
    (0..values.cols()).map(|j| values.column(j).iter().sum::<f64>() / r).collect()
}

/// Pearson correlation matrix of the columns.
pub fn cross_corr(values: &Tensor) -> Result<Tensor, MetricsError> {
    let mut acc = CovAcc::new(column_means(values));
    acc.add(values);
    acc.correlation()
}

fn pooled_cross_corr(paths: &[Tensor]) -> Result<Tensor, MetricsError> {
    let mut acc = CovAcc::new(column_means(&paths[0]));
    for p in paths {
        acc.add(p);
    }
    acc.correlation()
}

/// Frobenius norm of the historical minus generated correlation matrix.
/// Generated rows are pooled over paths; returns are differenced within
/// each path before pooling.
pub fn cross_corr_score(hist: &Tensor, gen: &[Tensor], target: Target) -> Result<f64, MetricsError> {
    check_paths(hist.cols(), gen)?;
    let h = cross_corr(&target_of(hist, target))?;
    let paths: Vec<Tensor> = gen.iter().map(|p| target_of(p, target)).collect();
    let g = pooled_cross_corr(&paths)?;
    Ok(h.data().iter().zip(g.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub bin_size: usize,
    /// One binning over all dimensions instead of one per dimension.
    pub pooled_bins: bool,
    pub acf_x_lags: usize,
    pub acf_r_lags: usize,
    /// Divide the ACF norms by the dimension count.
    pub acf_per_dim: bool,
    pub moment_estimator: MomentEstimator,
    /// Generated moments from the stacked paths rather than averaged per path.
    pub pooled_moments: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            bin_size: DEFAULT_BIN_SIZE,
            pooled_bins: false,
            acf_x_lags: DEFAULT_ACF_X_LAGS,
            acf_r_lags: DEFAULT_ACF_R_LAGS,
            acf_per_dim: true,
            moment_estimator: MomentEstimator::Plain,
            pooled_moments: true,
        }
    }
}

/// The seven scores of one generated set against one historical panel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub epdf_distance: f64,
    pub skew_score: f64,
    pub kurt_score: f64,
    pub acf_x_score: f64,
    pub acf_r_score: f64,
    pub cc_x_score: f64,
    pub cc_r_score: f64,
    #[serde(default)]
    pub model: String,
    #[serde(default)]
    pub paths: usize,
    #[serde(default)]
    pub path_len: usize,
    #[serde(default)]
    pub acf_x_lags: usize,
    #[serde(default)]
    pub acf_r_lags: usize,
}

impl ScoreReport {
    pub const NAMES: [&'static str; 7] = ["epdf", "skew", "kurt", "acf_x", "acf_r", "cc_x", "cc_r"];

    pub fn values(&self) -> [f64; 7] {
        [self.epdf_distance, self.skew_score, self.kurt_score, self.acf_x_score, self.acf_r_score, self.cc_x_score, self.cc_r_score]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            epdf_distance: v[0],
            skew_score: v[1],
            kurt_score: v[2],
            acf_x_score: v[3],
            acf_r_score: v[4],
            cc_x_score: v[5],
            cc_r_score: v[6],
            model: String::new(),
            paths: 0,
            path_len: 0,
            acf_x_lags: 0,
            acf_r_lags: 0,
        }
    }
}

/// All seven scores; errors name the failing metric.
pub fn full_report(hist: &Tensor, gen: &[Tensor], cfg: &MetricsConfig) -> Result<ScoreReport, MetricsError> {
    check_paths(hist.cols(), gen)?;
    let epdf = if cfg.pooled_bins {
        named("epdf", epdf_distance_pooled(hist, gen, cfg.bin_size))?
    } else {
        named("epdf", epdf_distance(hist, gen, cfg.bin_size))?
    };
    let mut r = ScoreReport::from_values([
        epdf,
        named("skew", moment_score(hist, gen, Moment::Skew, cfg.moment_estimator, cfg.pooled_moments))?,
        named("kurt", moment_score(hist, gen, Moment::Kurtosis, cfg.moment_estimator, cfg.pooled_moments))?,
        named("acf_x", acf_score(hist, gen, Target::Levels, cfg.acf_x_lags, cfg.acf_per_dim))?,
        named("acf_r", acf_score(hist, gen, Target::Returns, cfg.acf_r_lags, cfg.acf_per_dim))?,
        named("cc_x", cross_corr_score(hist, gen, Target::Levels))?,
        named("cc_r", cross_corr_score(hist, gen, Target::Returns))?,
    ]);
    r.paths = gen.len();
    r.path_len = gen[0].rows();
    r.acf_x_lags = cfg.acf_x_lags;
    r.acf_r_lags = cfg.acf_r_lags;
    Ok(r)
}

/// Aligned comparison table, one row per named report, with the best
/// (smallest) entry of each column marked by `*`.
pub fn render_table(rows: &[(String, ScoreReport)]) -> String {
    let mut best = [f64::INFINITY; 7];
    for (_, r) in rows {
        for (b, v) in best.iter_mut().zip(r.values()) {
            *b = b.min(v);
        }
    }
    let name_w = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = String::new();
    let _ = write!(out, "{:<name_w$}", "model");
    for h in ScoreReport::NAMES {
        let _ = write!(out, " {h:>11}");
    }
    out.push('\n');
    for (name, r) in rows {
        let _ = write!(out, "{name:<name_w$}");
        for (j, v) in r.values().iter().enumerate() {
            let mark = if *v == best[j] && rows.len() > 1 { "*" } else { " " };
            let _ = write!(out, " {:>10.4}{mark}", v);
        }
        out.push('\n');
    }
    out
}
