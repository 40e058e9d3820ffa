//! Binary checkpoints for trained models.
//!
//! Layout (little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 8     | magic `DFLKCKPT`                          |
//! | 4     | format version                            |
//! | 4     | header length `h`                         |
//! | h     | JSON header (kind, shapes, model checksum)|
//! | 8     | parameter count `n`                       |
//! | 8 n   | parameters as `f64`                       |
//! | 32    | SHA-256 of everything above               |

use std::fs;
use std::path::Path;

use difflink_core::diffusion::{DiffusionModel, ScheduleParams, VarianceSchedule};
use difflink_core::nn::{Mlp, MlpConfig};
use difflink_core::pipelines::{BaselineDnn, ConstellationDdpm};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::results::write_atomic;

pub const MAGIC: &[u8; 8] = b"DFLKCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("incompatible checkpoint: file has format version {found}, this build reads version {supported}")]
    Incompatible { found: u32, supported: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ddpm,
    Dnn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    order: usize,
    network: MlpConfig,
    model_checksum: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schedule: Option<ScheduleParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    data_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    snr_range_db: Option<[f64; 2]>,
}

#[derive(Debug, Clone)]
pub enum Checkpoint {
    Ddpm(ConstellationDdpm),
    Dnn(BaselineDnn),
}

impl Checkpoint {
    pub fn kind(&self) -> ModelKind {
        match self {
            Checkpoint::Ddpm(_) => ModelKind::Ddpm,
            Checkpoint::Dnn(_) => ModelKind::Dnn,
        }
    }

    pub fn order(&self) -> usize {
        match self {
            Checkpoint::Ddpm(m) => m.order,
            Checkpoint::Dnn(m) => m.order(),
        }
    }

    pub fn checksum(&self) -> String {
        match self {
            Checkpoint::Ddpm(m) => m.checksum(),
            Checkpoint::Dnn(m) => m.checksum(),
        }
    }

    fn net(&self) -> &Mlp {
        match self {
            Checkpoint::Ddpm(m) => m.model.denoiser(),
            Checkpoint::Dnn(m) => m.net(),
        }
    }

    fn header(&self) -> Header {
        let mut h = Header {
            kind: self.kind(),
            order: self.order(),
            network: self.net().config().clone(),
            model_checksum: self.checksum(),
            schedule: None,
            data_scale: None,
            snr_range_db: None,
        };
        match self {
            Checkpoint::Ddpm(m) => {
                h.schedule = Some(m.model.schedule().params());
                h.data_scale = Some(m.model.data_scale());
            }
            Checkpoint::Dnn(m) => {
                let (lo, hi) = m.snr_range();
                h.snr_range_db = Some([lo, hi]);
            }
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        let params = self.net().flat_params();
        let mut out = Vec::with_capacity(64 + header.len() + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in &params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |m: &str| CheckpointError::Corrupt(m.to_string());
        if bytes.len() < 16 + 32 {
            return Err(corrupt("file too short"));
        }
        if &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic; not a difflink checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(CheckpointError::Incompatible {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("SHA-256 mismatch"));
        }
        let header_len = u32::from_le_bytes(body[12..16].try_into().unwrap()) as usize;
        let rest = &body[16..];
        if rest.len() < header_len + 8 {
            return Err(corrupt("header length exceeds file"));
        }
        let header: Header =
            serde_json::from_slice(&rest[..header_len]).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
        let rest = &rest[header_len..];
        let n = u64::from_le_bytes(rest[..8].try_into().unwrap()) as usize;
        let data = &rest[8..];
        if n.checked_mul(8) != Some(data.len()) {
            return Err(corrupt("parameter block length mismatch"));
        }
        let params: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let invalid = |e: difflink_core::Error| CheckpointError::Corrupt(e.to_string());
        let net = Mlp::from_flat_params(header.network.clone(), &params).map_err(invalid)?;
        let ckpt = match header.kind {
            ModelKind::Ddpm => {
                let (Some(sched), Some(scale)) = (header.schedule, header.data_scale) else {
                    return Err(corrupt("diffusion checkpoint without schedule"));
                };
                let model = DiffusionModel::from_parts(VarianceSchedule::from_params(sched).map_err(invalid)?, net, scale)
                    .map_err(invalid)?;
                Checkpoint::Ddpm(ConstellationDdpm::new(model, header.order).map_err(invalid)?)
            }
            ModelKind::Dnn => {
                let Some([lo, hi]) = header.snr_range_db else {
                    return Err(corrupt("baseline checkpoint without SNR range"));
                };
                Checkpoint::Dnn(BaselineDnn::from_parts(net, header.order, lo, hi).map_err(invalid)?)
            }
        };
        if ckpt.checksum() != header.model_checksum {
            return Err(corrupt("model checksum does not match the stored parameters"));
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, &self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Conventional file name for a model of `kind` on `order`-QAM.
pub fn default_file_name(kind: ModelKind, order: usize) -> String {
    match kind {
        ModelKind::Ddpm => format!("ddpm-{order}qam.ckpt"),
        ModelKind::Dnn => format!("dnn-{order}qam.ckpt"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use difflink_core::pipelines::{train_dnn_baseline, BaselineConfig};

    fn dnn() -> Checkpoint {
        let cfg = BaselineConfig {
            order: 4,
            hidden_width: 8,
            hidden_layers: 2,
            epochs: 1,
            samples_per_epoch: 512,
            ..BaselineConfig::default()
        };
        Checkpoint::Dnn(train_dnn_baseline(&cfg, 1).unwrap().0)
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = dnn().to_bytes();
        for len in (0..bytes.len()).step_by(7) {
            assert!(Checkpoint::from_bytes(&bytes[..len]).is_err());
        }
    }

    #[test]
    fn flipped_bits_are_detected() {
        let bytes = dnn().to_bytes();
        for pos in [20, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let mut b = bytes.clone();
            b[pos] ^= 0x10;
            assert!(matches!(Checkpoint::from_bytes(&b), Err(CheckpointError::Corrupt(_))));
        }
    }

    #[test]
    fn version_mismatch_names_both_versions() {
        let mut b = dnn().to_bytes();
        b[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&b).unwrap_err();
        assert!(matches!(err, CheckpointError::Incompatible { found: 7, supported: 1 }));
        let msg = err.to_string();
        assert!(msg.contains('7') && msg.contains('1'));
    }
}
