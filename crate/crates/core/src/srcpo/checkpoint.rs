//! Binary checkpoints: magic, little-endian u32 version, then a bincode
//! payload holding a config fingerprint and the full [`RunState`].

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{Experiment, ExperimentConfig, RunError, RunState};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"SRCPO1";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint is truncated")]
    Truncated,
    #[error("checkpoint payload is corrupt: {0}")]
    Decode(String),
    #[error("checkpoint was written for a different configuration")]
    Mismatch,
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Serialize, Deserialize)]
struct Payload {
    fingerprint: [u8; 32],
    state: RunState,
}

/// Hash of everything that shapes the run. Epoch count, output directory
/// and logging cadence are excluded so a run can be extended.
pub fn fingerprint(config: &ExperimentConfig) -> [u8; 32] {
    let mut c = config.clone();
    c.epochs = 0;
    c.out_dir = None;
    c.log_every = 0;
    Sha256::digest(format!("{c:?}").as_bytes()).into()
}

pub fn encode(config: &ExperimentConfig, state: &RunState) -> Result<Vec<u8>, CheckpointError> {
    let payload = Payload {
        fingerprint: fingerprint(config),
        state: state.clone(),
    };
    let body = bincode::serialize(&payload).map_err(|e| CheckpointError::Decode(e.to_string()))?;
    let mut out = Vec::with_capacity(body.len() + 10);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn decode(config: &ExperimentConfig, bytes: &[u8]) -> Result<RunState, CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() {
        return Err(if CHECKPOINT_MAGIC.starts_with(bytes) {
            CheckpointError::Truncated
        } else {
            CheckpointError::Magic
        });
    }
    let (magic, rest) = bytes.split_at(CHECKPOINT_MAGIC.len());
    if magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Magic);
    }
    if rest.len() < 4 {
        return Err(CheckpointError::Truncated);
    }
    let (version, body) = rest.split_at(4);
    let version = u32::from_le_bytes(version.try_into().expect("four bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    let payload: Payload = bincode::deserialize(body).map_err(|e| match *e {
        bincode::ErrorKind::Io(ref io) if io.kind() == std::io::ErrorKind::UnexpectedEof => CheckpointError::Truncated,
        other => CheckpointError::Decode(other.to_string()),
    })?;
    if payload.fingerprint != fingerprint(config) {
        return Err(CheckpointError::Mismatch);
    }
    Ok(payload.state)
}

impl Experiment {
    pub fn save_checkpoint(&self, path: &Path) -> Result<(), RunError> {
        let bytes = encode(&self.config, &self.state)?;
        let mut file = std::fs::File::create(path).map_err(CheckpointError::from)?;
        file.write_all(&bytes).map_err(CheckpointError::from)?;
        Ok(())
    }

    /// Replaces the run state with a saved one for the same configuration.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<(), RunError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(CheckpointError::from)?;
        self.restore(&bytes)
    }

    pub fn checkpoint_bytes(&self) -> Result<Vec<u8>, RunError> {
        Ok(encode(&self.config, &self.state)?)
    }

    pub fn restore(&mut self, bytes: &[u8]) -> Result<(), RunError> {
        let state = decode(&self.config, bytes)?;
        if state.policies.len() != self.grid.len() {
            return Err(CheckpointError::Mismatch.into());
        }
        self.state = state;
        Ok(())
    }
}
