//! Versioned binary parameter checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "CURECKPT"
//! version      u32      1
//! kind         u8       0 linear, 1 logistic, 2 mlp
//! activation   u8       0 tanh, 1 relu
//! input_dim    u32
//! class_count  u32
//! hidden_units u32
//! l2_coeff     f64
//! seed         u64
//! epochs       u32
//! final_loss   f64
//! created_at   u64      seconds since the Unix epoch
//! count        u64
//! values       count × f64
//! ```

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{Activation, ModelError, ModelKind, ModelSpec, ParamVector};

pub const MAGIC: &[u8; 8] = b"CURECKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {found}, expected {expected}")]
    Version { expected: u32, found: u32 },
    #[error("checkpoint truncated")]
    Truncated,
    #[error("{0} trailing bytes after checkpoint payload")]
    TrailingBytes(usize),
    #[error("invalid field in checkpoint: {0}")]
    InvalidField(&'static str),
    #[error("checkpoint spec {found:?} does not match expected {expected:?}")]
    SpecMismatch { expected: Box<ModelSpec>, found: Box<ModelSpec> },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrainingMeta {
    pub seed: u64,
    pub epochs: u32,
    pub final_loss: f64,
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub params: ParamVector,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn new(spec: ModelSpec, params: ParamVector, meta: TrainingMeta) -> Result<Self, CheckpointError> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(ModelError::ParamLength {
                expected: spec.param_count(),
                found: params.len(),
            }
            .into());
        }
        Ok(Self { spec, params, meta })
    }

    pub fn encode(&self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::with_capacity(72 + 8 * self.params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match s.kind {
            ModelKind::LinearRegression => 0,
            ModelKind::LogisticRegression => 1,
            ModelKind::Mlp => 2,
        });
        out.push(match s.activation {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        });
        for v in [s.input_dim, s.class_count, s.hidden_units] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&s.l2_coeff.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&self.meta.epochs.to_le_bytes());
        out.extend_from_slice(&self.meta.final_loss.to_le_bytes());
        out.extend_from_slice(&self.meta.created_at.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u64).to_le_bytes());
        for v in self.params.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let kind = match r.take(1)?[0] {
            0 => ModelKind::LinearRegression,
            1 => ModelKind::LogisticRegression,
            2 => ModelKind::Mlp,
            _ => return Err(CheckpointError::InvalidField("model kind")),
        };
        let activation = match r.take(1)?[0] {
            0 => Activation::Tanh,
            1 => Activation::Relu,
            _ => return Err(CheckpointError::InvalidField("activation")),
        };
        let spec = ModelSpec {
            kind,
            input_dim: r.u32()? as usize,
            class_count: r.u32()? as usize,
            hidden_units: r.u32()? as usize,
            l2_coeff: r.f64()?,
            activation,
        };
        let meta = TrainingMeta {
            seed: r.u64()?,
            epochs: r.u32()?,
            final_loss: r.f64()?,
            created_at: r.u64()?,
        };
        let count = usize::try_from(r.u64()?).map_err(|_| CheckpointError::InvalidField("count"))?;
        if count.checked_mul(8).is_none_or(|b| b > bytes.len() - r.pos) {
            return Err(CheckpointError::Truncated);
        }
        let values = (0..count).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        let params = spec.params(values)?;
        Self::new(spec, params, meta)
    }

    /// Fails with `SpecMismatch` unless the stored spec equals `expected`.
    pub fn require_spec(&self, expected: &ModelSpec) -> Result<(), CheckpointError> {
        if &self.spec != expected {
            return Err(CheckpointError::SpecMismatch {
                expected: Box::new(expected.clone()),
                found: Box::new(self.spec.clone()),
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(CheckpointError::Truncated)?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint.encode()).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a checkpoint, optionally insisting on a particular model spec.
pub fn load_checkpoint(path: &Path, expected: Option<&ModelSpec>) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let ck = Checkpoint::decode(&bytes)?;
    if let Some(spec) = expected {
        ck.require_spec(spec)?;
    }
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let spec = ModelSpec::mlp(3, 4, 2, 1e-3);
        let values: Vec<f64> = (0..spec.param_count())
            .map(|i| (i as f64 * 0.7311).sin() / 3.0 + f64::EPSILON * i as f64)
            .collect();
        let params = spec.params(values).unwrap();
        let meta = TrainingMeta {
            seed: 5,
            epochs: 15,
            final_loss: 0.123_456_789,
            created_at: 1_700_000_000,
        };
        Checkpoint::new(spec, params, meta).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let bytes = ck.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back.encode(), bytes);
        for (a, b) in ck.params.as_slice().iter().zip(back.params.as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert_eq!(back, ck);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path, Some(&ck.spec)).unwrap(), ck);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..8], b"CURECKPT");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(bytes[12], 2);
        assert_eq!(bytes.len(), 8 + 4 + 2 + 12 + 8 + 8 + 4 + 8 + 8 + 8 + 8 * sample().params.len());
    }

    #[test]
    fn rejects_corruption() {
        let mut bytes = sample().encode();
        bytes[8] = 7;
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::Version { expected: 1, found: 7 })
        ));

        let mut bytes = sample().encode();
        bytes[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bytes), Err(CheckpointError::BadMagic)));

        let bytes = sample().encode();
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated)
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::decode(&long), Err(CheckpointError::TrailingBytes(1))));
        assert!(matches!(Checkpoint::decode(b"CURE"), Err(CheckpointError::Truncated)));
    }

    #[test]
    fn spec_mismatch_rejected() {
        let ck = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&path, &ck).unwrap();
        let other = ModelSpec::mlp(3, 5, 2, 1e-3);
        assert!(matches!(
            load_checkpoint(&path, Some(&other)),
            Err(CheckpointError::SpecMismatch { .. })
        ));
    }
}
