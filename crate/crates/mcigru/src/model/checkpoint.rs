use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MciGru, ModelConfig};
use crate::error::{Error, Result};
use crate::numkernel::{Matrix, Parameterized, Precision, Real};

pub const CHECKPOINT_FORMAT: &str = "mcigru-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

/// Serialized model: config echo plus every tensor's shape and values.
/// Values are widened to `f64`, which is exact for both precisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub precision: Precision,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn from_model<T: Real>(model: &MciGru<T>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: model.config.clone(),
            precision: T::PRECISION,
            params: model
                .params()
                .iter()
                .map(|p| ParamRecord {
                    name: p.name.clone(),
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                    values: p.value.as_slice().iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn into_model<T: Real>(self) -> Result<MciGru<T>> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unexpected format tag {:?}", self.format)));
        }
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let mut model = MciGru::<T>::new(self.config)?;
        let slots = model.params_mut();
        if slots.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint holds {} tensors, the config builds {}",
                self.params.len(),
                slots.len()
            )));
        }
        for (slot, rec) in slots.into_iter().zip(self.params) {
            if slot.name != rec.name || slot.value.shape() != (rec.rows, rec.cols) {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {}x{} does not match expected {} {:?}",
                    rec.name,
                    rec.rows,
                    rec.cols,
                    slot.name,
                    slot.value.shape()
                )));
            }
            let values = rec.values.into_iter().map(T::lit).collect();
            slot.value = Matrix::from_vec(rec.rows, rec.cols, values)
                .map_err(|e| Error::Checkpoint(format!("tensor {}: {e}", rec.name)))?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

impl<T: Real> MciGru<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Checkpoint::from_model(self).save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::load(path)?.into_model()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        let m = MciGru::<f32>::new(ModelConfig {
            seed: 4,
            ..ModelConfig::default()
        })
        .unwrap();
        m.save(&path).unwrap();
        let back = MciGru::<f32>::load(&path).unwrap();
        for (a, b) in m.params().iter().zip(back.params()) {
            let bits = |x: &[f32]| x.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(a.value.as_slice()), bits(b.value.as_slice()));
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let m = MciGru::<f64>::new(ModelConfig::default()).unwrap();
        let mut c = Checkpoint::from_model(&m);
        c.version = 99;
        assert!(matches!(c.into_model::<f64>(), Err(Error::Checkpoint(_))));
    }
}
