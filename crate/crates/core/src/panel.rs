//! Option-surface panels: ingest, flooring, log transform and lag windows.
//!
//! CSV layout is one header line `date,K=<strike>|M=<days>,...` followed by
//! one row per observation date. Dates are opaque tokens that must be
//! strictly increasing under string order (ISO dates satisfy this).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::numerics::Tensor;
use crate::rng;

pub const DEFAULT_FLOOR: f64 = 0.01;
pub const TRAIN_FRACTION: f64 = 0.85;

#[derive(Debug, thiserror::Error)]
pub enum PanelError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header column {column}: {msg}")]
    Header { column: usize, msg: String },
    #[error("duplicate grid label {0}")]
    DuplicateLabel(String),
    #[error("line {line}: date {date:?} does not follow {prev:?}")]
    NonMonotoneDate { line: usize, prev: String, date: String },
    #[error("line {line}, column {column}: cannot parse {cell:?} as a finite number")]
    NonNumeric { line: usize, column: String, cell: String },
    #[error("line {line}: expected {expected} cells, found {found}")]
    RaggedRow { line: usize, expected: usize, found: usize },
    #[error("floor must be positive, got {0}")]
    InvalidFloor(f64),
    #[error("need at least {need} rows, have {have}")]
    TooShort { need: usize, have: usize },
    #[error("grid filter names unknown label {0}")]
    UnknownLabel(String),
    #[error("{0}")]
    Invalid(String),
}

/// One grid point of the option surface.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridLabel {
    pub relative_strike: f64,
    pub maturity_days: u32,
}

impl GridLabel {
    pub fn new(relative_strike: f64, maturity_days: u32) -> Result<Self, PanelError> {
        if !(relative_strike > 0.0 && relative_strike.is_finite()) || maturity_days == 0 {
            return Err(PanelError::Invalid(format!(
                "grid label needs positive strike and maturity, got K={relative_strike} M={maturity_days}"
            )));
        }
        Ok(Self { relative_strike, maturity_days })
    }

    /// Parses `K=<strike>|M=<days>`.
    pub fn parse(text: &str) -> Result<Self, String> {
        let (k, m) = text.trim().split_once('|').ok_or_else(|| format!("{text:?} is not of the form K=<k>|M=<m>"))?;
        let k = k.trim().strip_prefix("K=").ok_or_else(|| format!("{text:?}: strike part must start with K="))?;
        let m = m.trim().strip_prefix("M=").ok_or_else(|| format!("{text:?}: maturity part must start with M="))?;
        let k: f64 = k.parse().map_err(|_| format!("{text:?}: bad strike"))?;
        let m: u32 = m.parse().map_err(|_| format!("{text:?}: bad maturity"))?;
        Self::new(k, m).map_err(|e| e.to_string())
    }

    fn same_point(&self, other: &Self) -> bool {
        self.maturity_days == other.maturity_days && (self.relative_strike - other.relative_strike).abs() < 1e-9
    }
}

impl fmt::Display for GridLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let short = format!("{:.2}", self.relative_strike);
        let k = if short.parse::<f64>().ok() == Some(self.relative_strike) { short } else { self.relative_strike.to_string() };
        write!(f, "K={}|M={}", k, self.maturity_days)
    }
}

/// The full grid of relative strikes 0.80..1.15 by maturities 20/40/60/120.
pub fn reference_grid() -> Vec<GridLabel> {
    let strikes = [0.80, 0.85, 0.90, 0.95, 1.00, 1.05, 1.10, 1.15];
    let maturities = [20, 40, 60, 120];
    maturities
        .iter()
        .flat_map(|&m| strikes.iter().map(move |&k| GridLabel { relative_strike: k, maturity_days: m }))
        .collect()
}

fn check_labels(labels: &[GridLabel]) -> Result<(), PanelError> {
    for (i, a) in labels.iter().enumerate() {
        if labels[..i].iter().any(|b| b.same_point(a)) {
            return Err(PanelError::DuplicateLabel(a.to_string()));
        }
    }
    Ok(())
}

fn check_times(times: &[String]) -> Result<(), PanelError> {
    for (i, w) in times.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(PanelError::NonMonotoneDate { line: i + 3, prev: w[0].clone(), date: w[1].clone() });
        }
    }
    Ok(())
}

/// Raw DLV levels, floored.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    times: Vec<String>,
    labels: Vec<GridLabel>,
    values: Tensor,
    floor: f64,
    floored: usize,
}

impl Panel {
    /// Builds a panel, flooring every value at `floor`.
    pub fn new(times: Vec<String>, labels: Vec<GridLabel>, values: Tensor, floor: f64) -> Result<Self, PanelError> {
        if !(floor > 0.0) {
            return Err(PanelError::InvalidFloor(floor));
        }
        check_labels(&labels)?;
        check_times(&times)?;
        if values.rank() != 2 || values.rows() != times.len() || values.cols() != labels.len() {
            return Err(PanelError::Invalid(format!(
                "values of shape {:?} do not match {} dates by {} labels",
                values.shape(),
                times.len(),
                labels.len()
            )));
        }
        let mut values = values;
        let mut floored = 0;
        for v in values.data_mut() {
            if *v < floor {
                *v = floor;
                floored += 1;
            }
        }
        Ok(Self { times, labels, values, floor, floored })
    }

    pub fn from_reader(reader: impl Read, floor: f64) -> Result<Self, PanelError> {
        if !(floor > 0.0) {
            return Err(PanelError::InvalidFloor(floor));
        }
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
        let mut records = rdr.records();
        let header = records.next().ok_or_else(|| PanelError::Invalid("empty file".into()))??;
        if header.len() < 2 {
            return Err(PanelError::Header { column: 1, msg: "need a date column and at least one grid column".into() });
        }
        let labels = header
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, h)| GridLabel::parse(h).map_err(|msg| PanelError::Header { column: i + 1, msg }))
            .collect::<Result<Vec<_>, _>>()?;
        check_labels(&labels)?;
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();

        let mut times = Vec::new();
        let mut data = Vec::new();
        for (i, rec) in records.enumerate() {
            let rec = rec?;
            let line = i + 2;
            if rec.len() == 1 && rec[0].is_empty() {
                continue;
            }
            if rec.len() != labels.len() + 1 {
                return Err(PanelError::RaggedRow { line, expected: labels.len() + 1, found: rec.len() });
            }
            let date = rec[0].to_string();
            if let Some(prev) = times.last() {
                if &date <= prev {
                    return Err(PanelError::NonMonotoneDate { line, prev: prev.clone(), date });
                }
            }
            for (j, cell) in rec.iter().skip(1).enumerate() {
                let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| PanelError::NonNumeric {
                    line,
                    column: names[j].clone(),
                    cell: cell.to_string(),
                })?;
                data.push(v);
            }
            times.push(date);
        }
        let n = labels.len();
        let values = Tensor::matrix(times.len(), n, data).map_err(|e| PanelError::Invalid(e.to_string()))?;
        Self::new(times, labels, values, floor)
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn labels(&self) -> &[GridLabel] {
        &self.labels
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Number of cells raised to the floor on construction.
    pub fn floored_count(&self) -> usize {
        self.floored
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Keeps only the listed grid points, in the given order.
    pub fn select(&self, keep: &[GridLabel]) -> Result<Panel, PanelError> {
        let idx = keep
            .iter()
            .map(|k| self.labels.iter().position(|l| l.same_point(k)).ok_or_else(|| PanelError::UnknownLabel(k.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let mut data = Vec::with_capacity(self.len() * idx.len());
        for t in 0..self.len() {
            let row = self.values.row(t);
            data.extend(idx.iter().map(|&j| row[j]));
        }
        let values = Tensor::matrix(self.len(), idx.len(), data).map_err(|e| PanelError::Invalid(e.to_string()))?;
        let floored = self.floored;
        let mut p = Panel::new(self.times.clone(), keep.to_vec(), values, self.floor)?;
        p.floored = floored;
        Ok(p)
    }
}

pub fn load_panel(path: impl AsRef<Path>, floor: f64) -> Result<Panel, PanelError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| PanelError::Io { path: path.display().to_string(), source })?;
    Panel::from_reader(std::io::BufReader::new(file), floor)
}

/// Natural logs of floored DLV levels; also used for generated paths.
#[derive(Clone, Debug, PartialEq)]
pub struct LogPanel {
    times: Vec<String>,
    labels: Vec<GridLabel>,
    values: Tensor,
    floor: f64,
}

pub fn to_log(panel: &Panel, floor: f64) -> Result<LogPanel, PanelError> {
    if !(floor > 0.0) {
        return Err(PanelError::InvalidFloor(floor));
    }
    let values = panel.values.map(|v| v.max(floor).ln());
    Ok(LogPanel { times: panel.times.clone(), labels: panel.labels.clone(), values, floor })
}

impl LogPanel {
    /// Wraps values that are already in log space.
    pub fn from_log_values(times: Vec<String>, labels: Vec<GridLabel>, values: Tensor, floor: f64) -> Result<Self, PanelError> {
        if !(floor > 0.0) {
            return Err(PanelError::InvalidFloor(floor));
        }
        check_labels(&labels)?;
        check_times(&times)?;
        if values.rank() != 2 || values.rows() != times.len() || values.cols() != labels.len() {
            return Err(PanelError::Invalid(format!("log values of shape {:?} do not match labels/dates", values.shape())));
        }
        if !values.all_finite() {
            return Err(PanelError::Invalid("log panel contains non-finite values".into()));
        }
        let lf = floor.ln();
        let values = values.map(|v| v.max(lf));
        Ok(Self { times, labels, values, floor })
    }

    /// Same as [`LogPanel::from_log_values`] with dates `0, 1, ...`
    /// zero-padded so they sort.
    pub fn from_rows_indexed(labels: Vec<GridLabel>, values: Tensor, floor: f64) -> Result<Self, PanelError> {
        let times = index_times(values.rows());
        Self::from_log_values(times, labels, values, floor)
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn labels(&self) -> &[GridLabel] {
        &self.labels
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    /// Exponentiates back to DLV levels, re-applying the floor.
    pub fn to_panel(&self) -> Result<Panel, PanelError> {
        Panel::new(self.times.clone(), self.labels.clone(), self.values.map(f64::exp), self.floor)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), PanelError> {
        write_matrix_csv(out, "date", &self.times, &self.labels, &self.values)
    }

    pub fn read_csv(reader: impl Read, floor: f64) -> Result<Self, PanelError> {
        let (times, labels, values) = read_matrix_csv(reader)?;
        Self::from_log_values(times, labels, values, floor)
    }

    /// Reads a log-space CSV written by [`LogPanel::write_csv`].
    pub fn load(path: impl AsRef<Path>, floor: f64) -> Result<Self, PanelError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| PanelError::Io { path: path.display().to_string(), source })?;
        Self::read_csv(std::io::BufReader::new(file), floor)
    }

    pub fn sidecar(&self, source: &str, floored_count: usize) -> PanelSidecar {
        PanelSidecar {
            kind: "log_panel".into(),
            floor: self.floor,
            rows: self.len(),
            labels: self.labels.iter().map(ToString::to_string).collect(),
            source: source.to_string(),
            floored_count,
        }
    }
}

/// Metadata written next to a log-panel CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PanelSidecar {
    pub kind: String,
    pub floor: f64,
    pub rows: usize,
    pub labels: Vec<String>,
    pub source: String,
    pub floored_count: usize,
}

pub(crate) fn index_times(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{i:06}")).collect()
}

/// Writes a labeled matrix; the first column holds `keys`.
pub fn write_matrix_csv(out: impl Write, key: &str, keys: &[String], labels: &[GridLabel], values: &Tensor) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![key.to_string()];
    header.extend(labels.iter().map(ToString::to_string));
    w.write_record(&header)?;
    for (t, k) in keys.iter().enumerate() {
        let mut rec = vec![k.clone()];
        // `{:?}` prints the shortest form that round-trips exactly.
        rec.extend(values.row(t).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| PanelError::Io { path: "<csv output>".into(), source })?;
    Ok(())
}

/// Reads the format of [`write_matrix_csv`] with no value constraints.
pub fn read_matrix_csv(reader: impl Read) -> Result<(Vec<String>, Vec<GridLabel>, Tensor), PanelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
    let mut records = rdr.records();
    let header = records.next().ok_or_else(|| PanelError::Invalid("empty file".into()))??;
    let labels = header
        .iter()
        .enumerate()
        .skip(1)
        .map(|(i, h)| GridLabel::parse(h).map_err(|msg| PanelError::Header { column: i + 1, msg }))
        .collect::<Result<Vec<_>, _>>()?;
    check_labels(&labels)?;
    let mut keys = Vec::new();
    let mut data = Vec::new();
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != labels.len() + 1 {
            return Err(PanelError::RaggedRow { line, expected: labels.len() + 1, found: rec.len() });
        }
        keys.push(rec[0].to_string());
        for (j, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| PanelError::NonNumeric {
                line,
                column: header[j + 1].to_string(),
                cell: cell.to_string(),
            })?;
            data.push(v);
        }
    }
    let values = Tensor::matrix(keys.len(), labels.len(), data).map_err(|e| PanelError::Invalid(e.to_string()))?;
    Ok((keys, labels, values))
}

/// One-step differences `x[t+1] - x[t]` of a `T × N` matrix.
pub fn returns_of(values: &Tensor) -> Result<Tensor, PanelError> {
    let (t, n) = values.dims2();
    if t < 2 {
        return Err(PanelError::TooShort { need: 2, have: t });
    }
    let mut data = Vec::with_capacity((t - 1) * n);
    for i in 0..t - 1 {
        let (a, b) = (values.row(i), values.row(i + 1));
        data.extend(a.iter().zip(b).map(|(x, y)| y - x));
    }
    Tensor::matrix(t - 1, n, data).map_err(|e| PanelError::Invalid(e.to_string()))
}

pub fn log_returns(lp: &LogPanel) -> Result<Tensor, PanelError> {
    returns_of(&lp.values)
}

/// State vector `[x_t, x_{t-1}, ..., x_{t-lags}]` (most recent first).
pub fn state_at(values: &Tensor, t: usize, lags: usize) -> Vec<f64> {
    let mut s = Vec::with_capacity((lags + 1) * values.cols());
    for k in 0..=lags {
        s.extend_from_slice(values.row(t - k));
    }
    s
}

/// (state, next value) training pairs with a seeded train/validation split.
///
/// Pair `i` has its state ending at row `lags + i` and its target at the
/// following row; windows are always contiguous, only their assignment to
/// the two splits is random.
#[derive(Clone, Debug)]
pub struct WindowSet {
    lags: usize,
    values: Tensor,
    is_train: Vec<bool>,
}

pub fn make_windows(lp: &LogPanel, lags: usize, split_seed: u64) -> Result<WindowSet, PanelError> {
    WindowSet::from_values(lp.values().clone(), lags, split_seed)
}

impl WindowSet {
    pub fn from_values(values: Tensor, lags: usize, split_seed: u64) -> Result<Self, PanelError> {
        Self::with_fraction(values, lags, split_seed, TRAIN_FRACTION)
    }

    pub fn with_fraction(values: Tensor, lags: usize, split_seed: u64, train_fraction: f64) -> Result<Self, PanelError> {
        let t = values.rows();
        if t < lags + 2 {
            return Err(PanelError::TooShort { need: lags + 2, have: t });
        }
        let n = t - lags - 1;
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(if n > 1 { 1 } else { 0 }, n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::seeded(split_seed));
        let mut is_train = vec![false; n];
        for &i in &order[..n_train] {
            is_train[i] = true;
        }
        Ok(Self { lags, values, is_train })
    }

    pub fn lags(&self) -> usize {
        self.lags
    }

    pub fn len(&self) -> usize {
        self.is_train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_train.is_empty()
    }

    /// Dimension of one observation.
    pub fn value_dim(&self) -> usize {
        self.values.cols()
    }

    pub fn state_dim(&self) -> usize {
        (self.lags + 1) * self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Row index at which pair `i`'s state ends.
    pub fn end_of(&self, i: usize) -> usize {
        self.lags + i
    }

    pub fn is_train(&self, i: usize) -> bool {
        self.is_train[i]
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_train[i]).collect()
    }

    pub fn validation_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.is_train[i]).collect()
    }

    pub fn state(&self, i: usize) -> Vec<f64> {
        state_at(&self.values, self.end_of(i), self.lags)
    }

    pub fn target(&self, i: usize) -> &[f64] {
        self.values.row(self.end_of(i) + 1)
    }

    /// Stacked states `[B, state_dim]` and targets `[B, value_dim]`.
    pub fn batch(&self, pairs: &[usize]) -> (Tensor, Tensor) {
        let mut s = Vec::with_capacity(pairs.len() * self.state_dim());
        let mut x = Vec::with_capacity(pairs.len() * self.value_dim());
        for &i in pairs {
            s.extend(self.state(i));
            x.extend_from_slice(self.target(i));
        }
        (
            Tensor::matrix(pairs.len(), self.state_dim(), s).expect("state batch shape"),
            Tensor::matrix(pairs.len(), self.value_dim(), x).expect("target batch shape"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "date,K=1.00|M=20,K=0.90|M=40\n2020-01-01,0.2,0.3\n2020-01-02,0.25,0.31\n2020-01-03,0.22,0.29\n";

    #[test]
    fn loads_well_formed_file() {
        let p = Panel::from_reader(SMALL.as_bytes(), DEFAULT_FLOOR).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dim(), 2);
        assert_eq!(p.labels()[1], GridLabel { relative_strike: 0.9, maturity_days: 40 });
        assert_eq!(p.floored_count(), 0);
    }

    #[test]
    fn negative_value_is_floored_and_counted() {
        let text = "date,K=1.00|M=20\n1,-0.05\n2,0.5\n";
        let p = Panel::from_reader(text.as_bytes(), DEFAULT_FLOOR).unwrap();
        assert_eq!(p.values().data()[0], 0.01);
        assert_eq!(p.floored_count(), 1);
    }

    #[test]
    fn duplicate_label_is_named() {
        let text = "date,K=1.00|M=20,K=1.00|M=20\n1,0.1,0.2\n";
        let err = Panel::from_reader(text.as_bytes(), DEFAULT_FLOOR).unwrap_err();
        assert!(matches!(err, PanelError::DuplicateLabel(ref l) if l == "K=1.00|M=20"), "{err}");
    }

    #[test]
    fn non_monotone_dates_and_bad_cells() {
        let text = "date,K=1.00|M=20\n2,0.1\n1,0.2\n";
        assert!(matches!(Panel::from_reader(text.as_bytes(), 0.01), Err(PanelError::NonMonotoneDate { line: 3, .. })));
        let text = "date,K=1.00|M=20\n1,abc\n";
        let err = Panel::from_reader(text.as_bytes(), 0.01).unwrap_err();
        assert!(matches!(err, PanelError::NonNumeric { line: 2, ref column, .. } if column == "K=1.00|M=20"));
        let text = "date,K=1.00|M=20\n1,NaN\n";
        assert!(matches!(Panel::from_reader(text.as_bytes(), 0.01), Err(PanelError::NonNumeric { .. })));
    }

    #[test]
    fn bad_header_is_reported() {
        let text = "date,strike1\n1,0.1\n";
        assert!(matches!(Panel::from_reader(text.as_bytes(), 0.01), Err(PanelError::Header { column: 2, .. })));
    }

    #[test]
    fn log_transform_values() {
        let labels = vec![GridLabel::new(1.0, 20).unwrap()];
        let v = Tensor::matrix(3, 1, vec![0.01, 1.0, 0.003]).unwrap();
        let p = Panel::new(index_times(3), labels, v, 0.001).unwrap();
        let lp = to_log(&p, DEFAULT_FLOOR).unwrap();
        let d = lp.values().data();
        assert!((d[0] - (-4.605170185988091)).abs() < 1e-12);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.01f64.ln());
    }

    #[test]
    fn returns_of_small_panel() {
        let labels = vec![GridLabel::new(1.0, 20).unwrap()];
        let lp = LogPanel::from_rows_indexed(labels, Tensor::matrix(3, 1, vec![0.0, 0.1, 0.3]).unwrap(), 0.01).unwrap();
        let r = log_returns(&lp).unwrap();
        assert!((r.data()[0] - 0.1).abs() < 1e-15 && (r.data()[1] - 0.2).abs() < 1e-15);
        let one = LogPanel::from_rows_indexed(vec![GridLabel::new(1.0, 20).unwrap()], Tensor::zeros(&[1, 1]), 0.01).unwrap();
        assert!(matches!(log_returns(&one), Err(PanelError::TooShort { .. })));
    }

    #[test]
    fn window_counts_and_split() {
        let v = Tensor::matrix(10, 1, (0..10).map(f64::from).collect()).unwrap();
        let w = WindowSet::from_values(v.clone(), 1, 3).unwrap();
        assert_eq!(w.len(), 8);
        assert_eq!(w.state(0), vec![1.0, 0.0]);
        assert_eq!(w.target(0), &[2.0]);
        let again = WindowSet::from_values(v.clone(), 1, 3).unwrap();
        assert_eq!(w.train_indices(), again.train_indices());
        let w0 = WindowSet::from_values(v.clone(), 0, 3).unwrap();
        assert_eq!(w0.state(4), vec![4.0]);
        assert!(WindowSet::from_values(Tensor::zeros(&[2, 1]), 1, 0).is_err());
    }

    #[test]
    fn label_display_round_trips() {
        for l in reference_grid() {
            assert_eq!(GridLabel::parse(&l.to_string()).unwrap(), l);
        }
        assert_eq!(GridLabel::new(0.875, 30).unwrap().to_string(), "K=0.875|M=30");
        assert_eq!(reference_grid().len(), 32);
    }

    #[test]
    fn log_panel_csv_round_trip() {
        let labels = vec![GridLabel::new(1.0, 20).unwrap(), GridLabel::new(1.1, 20).unwrap()];
        let lp = LogPanel::from_rows_indexed(labels, Tensor::matrix(2, 2, vec![-1.25, 0.1, 0.3333333333333333, -4.0]).unwrap(), 0.01)
            .unwrap();
        let mut buf = Vec::new();
        lp.write_csv(&mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lp.csv");
        std::fs::write(&path, &buf).unwrap();
        assert_eq!(LogPanel::load(&path, 0.01).unwrap(), lp);
    }
}
