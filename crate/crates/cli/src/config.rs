//! Run configuration: one JSON file describing data, model, training,
//! sampling and evaluation for a single run.

use std::path::{Path, PathBuf};

use dlvsim::metrics::MetricsConfig;
use dlvsim::models::{Activation, NetConfig, Representation, TcnSpec};
use dlvsim::panel::{GridLabel, DEFAULT_FLOOR};
use dlvsim::pca::DEFAULT_COMPONENTS;
use dlvsim::sampling::{SamplingConfig, DEFAULT_PATHS};
use dlvsim::training::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_TRAIN_FRACTION: f64 = 0.85;

/// How the data file is encoded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Raw DLV levels; floored and logged on load.
    #[default]
    Dlv,
    /// A log-panel CSV as written by `ingest` or `fixture`.
    LogDlv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: PathBuf,
    pub data_kind: DataKind,
    /// Columns to keep, as `K=<strike>|M=<days>` labels; all when empty.
    pub grid: Vec<String>,
    pub floor: f64,
    pub model: ModelSection,
    pub compression: CompressionSection,
    pub train: TrainConfig,
    pub split: SplitSection,
    pub sampling: SamplingSection,
    pub metrics: MetricsConfig,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            data_kind: DataKind::Dlv,
            grid: Vec::new(),
            floor: DEFAULT_FLOOR,
            model: ModelSection::default(),
            compression: CompressionSection::default(),
            train: TrainConfig::default(),
            split: SplitSection::default(),
            sampling: SamplingSection::default(),
            metrics: MetricsConfig::default(),
            output: PathBuf::from("run"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSection {
    /// Conditional generator trained adversarially (GAN or WGAN-GP).
    Generator {
        #[serde(default = "one")]
        lags: usize,
        #[serde(default)]
        representation: Representation,
        #[serde(default)]
        generator: NetConfig,
        #[serde(default = "critic_net")]
        discriminator: NetConfig,
        /// Noise dimension; the value dimension when unset.
        #[serde(default)]
        noise_dim: Option<usize>,
    },
    Qmle {
        #[serde(default = "one")]
        lags: usize,
        #[serde(default)]
        representation: Representation,
        #[serde(default)]
        net: NetConfig,
    },
    Var {
        #[serde(default = "one")]
        order: usize,
    },
    /// Unconditional TCN; the discriminator scores (previous, next) pairs.
    Tcn {
        #[serde(default = "tcn_width")]
        width: usize,
        #[serde(default = "tcn_noise")]
        noise_dim: usize,
        #[serde(default = "two")]
        kernel_size: usize,
        /// Dilations `1, 2, …, 128` when unset.
        #[serde(default)]
        dilations: Option<Vec<usize>>,
        #[serde(default = "leaky")]
        activation: Activation,
        #[serde(default = "critic_net")]
        discriminator: NetConfig,
        #[serde(default = "one")]
        lags: usize,
    },
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

fn tcn_width() -> usize {
    32
}

fn tcn_noise() -> usize {
    3
}

fn leaky() -> Activation {
    Activation::LeakyRelu
}

fn critic_net() -> NetConfig {
    NetConfig { activation: Activation::Softplus, ..NetConfig::default() }
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection::Generator {
            lags: 1,
            representation: Representation::Levels,
            generator: NetConfig::default(),
            discriminator: critic_net(),
            noise_dim: None,
        }
    }
}

impl ModelSection {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSection::Generator { .. } => "generator",
            ModelSection::Qmle { .. } => "qmle",
            ModelSection::Var { .. } => "var",
            ModelSection::Tcn { .. } => "tcn",
        }
    }

    /// Lags of the conditioning state (VAR order minus one).
    pub fn lags(&self) -> usize {
        match self {
            ModelSection::Generator { lags, .. } | ModelSection::Qmle { lags, .. } | ModelSection::Tcn { lags, .. } => *lags,
            ModelSection::Var { order } => order.saturating_sub(1),
        }
    }

    pub fn tcn_spec(&self, output_dim: usize) -> Option<TcnSpec> {
        let ModelSection::Tcn { width, noise_dim, kernel_size, dilations, activation, .. } = self else { return None };
        let mut spec = TcnSpec::standard(*noise_dim, output_dim, *width);
        if let Some(d) = dilations {
            spec.dilations = d.clone();
            spec.channels = vec![*width; d.len()];
        }
        spec.kernel_size = *kernel_size;
        spec.activation = *activation;
        Some(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionSection {
    pub enabled: bool,
    pub components: usize,
}

impl Default for CompressionSection {
    fn default() -> Self {
        Self { enabled: false, components: DEFAULT_COMPONENTS }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { train_fraction: DEFAULT_TRAIN_FRACTION, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub paths: usize,
    /// Rows per path; the history length when unset.
    pub length: Option<usize>,
    pub seed: u64,
    /// Re-apply the data floor to generated values.
    pub apply_floor: bool,
}

impl Default for SamplingSection {
    fn default() -> Self {
        Self { paths: DEFAULT_PATHS, length: None, seed: 0, apply_floor: true }
    }
}

impl SamplingSection {
    pub fn to_core(&self, floor: f64) -> SamplingConfig {
        SamplingConfig { paths: self.paths, length: self.length, seed: self.seed, floor: self.apply_floor.then_some(floor) }
    }
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> CliError {
    CliError::Config { field: field.into(), msg: msg.into() }
}

impl RunConfig {
    /// Parses and validates a config file. Relative `data` paths are
    /// resolved against the file's directory and relative `output` paths
    /// against `DLVSIM_OUTPUT_ROOT` (or the file's directory when unset).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.is_relative() && !cfg.data.as_os_str().is_empty() {
            cfg.data = base.join(&cfg.data);
        }
        if cfg.output.is_relative() {
            let root = std::env::var_os(crate::OUTPUT_ROOT_VAR).map(PathBuf::from).unwrap_or_else(|| base.to_path_buf());
            cfg.output = root.join(&cfg.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the filesystem; errors carry the field path.
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            invalid(if field == "." { "(root)".to_string() } else { field }, e.into_inner().to_string())
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.data.as_os_str().is_empty() {
            return Err(invalid("data", "required"));
        }
        if !self.data.is_file() {
            return Err(invalid("data", format!("{} does not exist", self.data.display())));
        }
        if !(self.floor > 0.0) {
            return Err(invalid("floor", "must be positive"));
        }
        for (i, g) in self.grid.iter().enumerate() {
            GridLabel::parse(g).map_err(|m| invalid(format!("grid[{i}]"), m))?;
        }
        self.train.validate().map_err(|e| {
            let msg = e.to_string();
            let detail = msg.trim_start_matches("invalid training config: ");
            match detail.split_once(": ") {
                Some((field, m)) => invalid(format!("train.{field}"), m),
                None => invalid("train", detail),
            }
        })?;
        let method = self.train.method;
        match &self.model {
            ModelSection::Generator { generator, discriminator, noise_dim, .. } => {
                if method == Method::Qmle {
                    return Err(invalid("train.method", "generator models train with gan or wgan_gp"));
                }
                check_net("model.generator", generator)?;
                check_net("model.discriminator", discriminator)?;
                if *noise_dim == Some(0) {
                    return Err(invalid("model.noise_dim", "must be at least 1"));
                }
            }
            ModelSection::Qmle { net, .. } => {
                if method != Method::Qmle {
                    return Err(invalid("train.method", "qmle models train with qmle"));
                }
                check_net("model.net", net)?;
            }
            ModelSection::Var { order } => {
                if *order == 0 {
                    return Err(invalid("model.order", "must be at least 1"));
                }
            }
            ModelSection::Tcn { width, noise_dim, kernel_size, dilations, discriminator, lags, .. } => {
                if method == Method::Qmle {
                    return Err(invalid("train.method", "TCN models train with gan or wgan_gp"));
                }
                if *width == 0 || *noise_dim == 0 {
                    return Err(invalid("model.width", "width and noise_dim must be at least 1"));
                }
                if *kernel_size == 0 {
                    return Err(invalid("model.kernel_size", "must be at least 1"));
                }
                if dilations.as_ref().is_some_and(|d| d.is_empty() || d.contains(&0)) {
                    return Err(invalid("model.dilations", "need at least one positive dilation"));
                }
                if *lags == 0 {
                    return Err(invalid("model.lags", "the pair discriminator needs at least one lag"));
                }
                if self.compression.enabled {
                    return Err(invalid("compression.enabled", "TCN models run on the full grid"));
                }
                check_net("model.discriminator", discriminator)?;
            }
        }
        if self.compression.enabled && self.compression.components == 0 {
            return Err(invalid("compression.components", "must be at least 1"));
        }
        if !(self.split.train_fraction > 0.0 && self.split.train_fraction <= 1.0) {
            return Err(invalid("split.train_fraction", "must lie in (0, 1]"));
        }
        if self.sampling.paths == 0 {
            return Err(invalid("sampling.paths", "must be at least 1"));
        }
        if self.sampling.length.is_some_and(|l| l < 2) {
            return Err(invalid("sampling.length", "must be at least 2"));
        }
        if self.metrics.bin_size == 0 {
            return Err(invalid("metrics.bin_size", "must be at least 1"));
        }
        Ok(())
    }
}

fn check_net(field: &str, net: &NetConfig) -> Result<(), CliError> {
    if net.hidden_widths.contains(&0) {
        return Err(invalid(format!("{field}.hidden_widths"), "widths must be positive"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_is_reported_with_its_path() {
        let err = RunConfig::from_json(r#"{"train": {"lr_generatr": 1e-3}}"#).unwrap_err();
        match err {
            CliError::Config { field, .. } => assert_eq!(field, "train.lr_generatr"),
            e => panic!("{e}"),
        }
        let err = RunConfig::from_json(r#"{"sampling": {"paths": "many"}}"#).unwrap_err();
        assert!(matches!(err, CliError::Config { ref field, .. } if field == "sampling.paths"), "{err}");
    }

    #[test]
    fn defaults_follow_the_protocol() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg.sampling.paths, 40);
        assert_eq!(cfg.sampling.length, None);
        assert_eq!(cfg.compression.components, 5);
        assert_eq!(cfg.split.train_fraction, 0.85);
        assert_eq!(cfg.train.eval_every, 100);
        assert_eq!(cfg.model.kind(), "generator");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let data = dir.path().join("d.csv");
        std::fs::write(&data, "x").unwrap();
        let mut cfg = RunConfig { data, ..RunConfig::default() };
        cfg.train.lr_generator = -1.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config { ref field, .. }) if field == "train.lr_generator"));
        cfg.train.lr_generator = 1e-4;
        cfg.train.method = Method::Qmle;
        assert!(matches!(cfg.validate(), Err(CliError::Config { ref field, .. }) if field == "train.method"));
        cfg.train.method = Method::Gan;
        cfg.sampling.paths = 0;
        assert!(matches!(cfg.validate(), Err(CliError::Config { ref field, .. }) if field == "sampling.paths"));
    }

    #[test]
    fn model_sections_parse_by_kind() {
        let cfg = RunConfig::from_json(r#"{"model": {"kind": "var", "order": 2}}"#).unwrap();
        assert_eq!(cfg.model, ModelSection::Var { order: 2 });
        assert_eq!(cfg.model.lags(), 1);
        let cfg = RunConfig::from_json(r#"{"model": {"kind": "tcn", "dilations": [1, 2, 4]}}"#).unwrap();
        assert_eq!(cfg.model.tcn_spec(4).unwrap().receptive_field(), 8);
        assert!(RunConfig::from_json(r#"{"model": {"kind": "mmd"}}"#).is_err());
    }
}
