//! Generators, discriminators and baselines.

pub mod checkpoint;
pub mod conditional;
pub mod mlp;
pub mod normalize;
pub mod tcn;
pub mod var;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, SimModel};
pub use conditional::{plain_normalizer, Discriminator, Generator, NetConfig, QmleHead};
pub use mlp::{Activation, Mlp, MlpSpec};
pub use normalize::{Normalizer, Representation};
pub use tcn::{TcnModel, TcnSpec};
pub use var::{var_fit, VarModel};

use crate::numerics::NumericsError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("{what} dimension: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("parameter count: expected {expected}, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("singular system: {0}")]
    Singular(String),
    #[error(transparent)]
    Numerics(NumericsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint format: {0}")]
    Format(String),
}
