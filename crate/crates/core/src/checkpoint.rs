//! Versioned JSON model checkpoints.
//!
//! A checkpoint stores the architecture, a hash of it, and flat parameter
//! arrays for all five networks. The target branch's parameters are the EMA
//! state, so saving them preserves training semantics across a reload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::byol::towers::{Architecture, ByolTowers};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Hex digest of the canonical JSON encoding of an architecture. Parameters
/// transfer between two models exactly when their hashes agree.
pub fn topology_hash(arch: &Architecture) -> Result<String> {
    let bytes = serde_json::to_vec(arch).map_err(|e| Error::Serde(e.to_string()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TowerParams {
    pub online_encoder: Vec<f64>,
    pub online_projector: Vec<f64>,
    pub online_predictor: Vec<f64>,
    pub target_encoder: Vec<f64>,
    pub target_projector: Vec<f64>,
}

/// Optimizer buffers, layered the same way as the parameter arrays. Present
/// only when the writer had them; evaluation and scoring never need them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSnapshot {
    pub encoder_velocity: Vec<f64>,
    pub projector_velocity: Vec<f64>,
    pub predictor_velocity: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub architecture: Architecture,
    pub topology_hash: String,
    pub steps_trained: u64,
    pub params: TowerParams,
    #[serde(default)]
    pub optimizer: Option<OptimizerSnapshot>,
}

impl Checkpoint {
    pub fn from_towers(towers: &ByolTowers, steps_trained: u64) -> Result<Self> {
        let architecture = towers.architecture();
        let params = TowerParams {
            online_encoder: towers.online_encoder.flatten_params(),
            online_projector: towers.online_projector.flatten_params(),
            online_predictor: towers.online_predictor.flatten_params(),
            target_encoder: towers.target_encoder.flatten_params(),
            target_projector: towers.target_projector.flatten_params(),
        };
        for (name, arr) in params.named() {
            if !arr.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{name} holds non-finite parameters; refusing to checkpoint"
                )));
            }
        }
        Ok(Checkpoint {
            version: CHECKPOINT_VERSION,
            topology_hash: topology_hash(&architecture)?,
            architecture,
            steps_trained,
            params,
            optimizer: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))?;
        fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 0,
                message: format!(
                    "unsupported checkpoint version {} (this build reads {})",
                    ckpt.version, CHECKPOINT_VERSION
                ),
            });
        }
        ckpt.architecture.validate()?;
        let recomputed = topology_hash(&ckpt.architecture)?;
        if recomputed != ckpt.topology_hash {
            return Err(Error::TopologyMismatch {
                expected: ckpt.topology_hash.clone(),
                got: recomputed,
            });
        }
        for (name, arr) in ckpt.params.named() {
            if !arr.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "{name} holds non-finite parameters in {}",
                    path.display()
                )));
            }
        }
        Ok(ckpt)
    }

    /// Errors unless this checkpoint was written for exactly `arch`.
    pub fn expect_architecture(&self, arch: &Architecture) -> Result<()> {
        let expected = topology_hash(arch)?;
        if expected != self.topology_hash {
            return Err(Error::TopologyMismatch {
                expected,
                got: self.topology_hash.clone(),
            });
        }
        Ok(())
    }

    /// Rebuilds the five networks and loads the stored parameters into them.
    pub fn to_towers(&self) -> Result<ByolTowers> {
        // The init values are irrelevant; load_flat overwrites every weight
        // and bias and validates the array lengths against the topology.
        let mut rng = seeded(0, "checkpoint-load");
        let mut towers = ByolTowers::init(&self.architecture, &mut rng)?;
        towers.online_encoder.load_flat(&self.params.online_encoder)?;
        towers.online_projector.load_flat(&self.params.online_projector)?;
        towers.online_predictor.load_flat(&self.params.online_predictor)?;
        towers.target_encoder.load_flat(&self.params.target_encoder)?;
        towers.target_projector.load_flat(&self.params.target_projector)?;
        Ok(towers)
    }
}

impl TowerParams {
    fn named(&self) -> [(&'static str, &[f64]); 5] {
        [
            ("online_encoder", &self.online_encoder),
            ("online_projector", &self.online_projector),
            ("online_predictor", &self.online_predictor),
            ("target_encoder", &self.target_encoder),
            ("target_projector", &self.target_projector),
        ]
    }
}
