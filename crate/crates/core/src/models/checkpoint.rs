//! Checkpoint files: an 8-byte magic, a little-endian `u64` header length,
//! a JSON header describing the model, then every parameter as a
//! little-endian `f64`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::conditional::{Discriminator, Generator, QmleHead};
use super::tcn::TcnModel;
use super::var::VarModel;
use super::ModelError;
use crate::pca::CompressionMap;

pub const MAGIC: &[u8; 8] = b"DLVCKPT1";

/// A model that can generate paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimModel {
    Generator(Generator),
    Qmle(QmleHead),
    Var(VarModel),
    Tcn(TcnModel),
}

impl SimModel {
    pub fn kind(&self) -> &'static str {
        match self {
            SimModel::Generator(_) => "generator",
            SimModel::Qmle(_) => "qmle",
            SimModel::Var(_) => "var",
            SimModel::Tcn(_) => "tcn",
        }
    }

    fn take_params(&mut self) -> Vec<f64> {
        match self {
            SimModel::Generator(g) => g.mlp_mut().take_params(),
            SimModel::Qmle(q) => q.mlp_mut().take_params(),
            SimModel::Var(v) => v.take_params(),
            SimModel::Tcn(t) => t.take_params(),
        }
    }

    fn put_params(&mut self, p: Vec<f64>) -> Result<(), ModelError> {
        match self {
            SimModel::Generator(g) => g.mlp_mut().set_params(p),
            SimModel::Qmle(q) => q.mlp_mut().set_params(p),
            SimModel::Var(v) => v.put_params(p),
            SimModel::Tcn(t) => t.set_params(p),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SimModel,
    pub discriminator: Option<Discriminator>,
    pub compression: Option<CompressionMap>,
    /// Free-form provenance (training method, update count, seed).
    pub meta: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: SimModel,
    discriminator: Option<Discriminator>,
    compression: Option<CompressionMap>,
    meta: serde_json::Value,
    param_counts: Vec<usize>,
}

impl Checkpoint {
    pub fn new(model: SimModel) -> Self {
        Self { model, discriminator: None, compression: None, meta: serde_json::Value::Null }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let mut model = self.model.clone();
        let mut disc = self.discriminator.clone();
        let mut blocks = vec![model.take_params()];
        if let Some(d) = disc.as_mut() {
            blocks.push(d.mlp_mut().take_params());
        }
        let header = Header {
            model,
            discriminator: disc,
            compression: self.compression.clone(),
            meta: self.meta.clone(),
            param_counts: blocks.iter().map(Vec::len).collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Format(e.to_string()))?;
        let total: usize = blocks.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(16 + json.len() + 8 * total);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in blocks.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let fmt = |m: &str| ModelError::Format(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(fmt("missing checkpoint magic"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16usize.saturating_add(hlen)).ok_or_else(|| fmt("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| ModelError::Format(e.to_string()))?;
        let mut rest = &bytes[16 + hlen..];
        let total: usize = header.param_counts.iter().sum();
        if rest.len() != 8 * total {
            return Err(ModelError::Format(format!("expected {} parameter bytes, found {}", 8 * total, rest.len())));
        }
        let mut blocks = Vec::new();
        for &n in &header.param_counts {
            let (chunk, tail) = rest.split_at(8 * n);
            blocks.push(chunk.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect::<Vec<f64>>());
            rest = tail;
        }
        let mut blocks = blocks.into_iter();
        let mut model = header.model;
        model.put_params(blocks.next().ok_or_else(|| fmt("missing model parameters"))?)?;
        let mut discriminator = header.discriminator;
        if let Some(d) = discriminator.as_mut() {
            d.mlp_mut().set_params(blocks.next().ok_or_else(|| fmt("missing discriminator parameters"))?)?;
        }
        Ok(Self { model, discriminator, compression: header.compression, meta: header.meta })
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), ModelError> {
    let io = |source| ModelError::Io { path: path.display().to_string(), source };
    let bytes = ckpt.to_bytes()?;
    let mut f = std::fs::File::create(path).map_err(io)?;
    f.write_all(&bytes).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let io = |source| ModelError::Io { path: path.display().to_string(), source };
    let mut bytes = Vec::new();
    std::fs::File::open(path).map_err(io)?.read_to_end(&mut bytes).map_err(io)?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::conditional::{plain_normalizer, NetConfig};
    use crate::numerics::Tensor;
    use crate::rng::seeded;

    #[test]
    fn generator_round_trip_is_exact() {
        let mut rng = seeded(9);
        let net = NetConfig { spectral_norm: true, ..NetConfig::default() };
        let g = Generator::new(&net, plain_normalizer(3, 1), None, &mut rng).unwrap();
        let d = Discriminator::new(&net, plain_normalizer(3, 1), &mut rng).unwrap();
        let mut ck = Checkpoint::new(SimModel::Generator(g));
        ck.discriminator = Some(d);
        ck.meta = serde_json::json!({"updates": 7});
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn var_round_trip_and_corruption() {
        let a = Tensor::from_rows(&[vec![0.5, 0.1], vec![0.0, 0.3]]).unwrap();
        let s = Tensor::from_rows(&[vec![0.02, 0.01], vec![0.01, 0.03]]).unwrap();
        let m = VarModel::from_parts(&[a], &[0.1, -0.2], &s).unwrap();
        let ck = Checkpoint::new(SimModel::Var(m));
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
