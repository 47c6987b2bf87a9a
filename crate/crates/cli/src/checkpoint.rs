//! Network checkpoint files: versioned JSON with a topology header and
//! all parameter plus optimizer state, bit-exact across a round trip.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spil_core::NetworkParams;

use crate::CliError;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// Copy of the parameter topology, for inspection without decoding.
    pub topology: Vec<usize>,
    pub params: NetworkParams,
}

pub fn save_checkpoint(path: &Path, params: &NetworkParams) -> Result<(), CliError> {
    let doc = Checkpoint {
        version: CHECKPOINT_VERSION,
        topology: params.topology.clone(),
        params: params.clone(),
    };
    let text = serde_json::to_string(&doc)
        .map_err(|e| CliError::Io(format!("encode {}: {e}", path.display())))?;
    fs::write(path, text).map_err(|e| CliError::Io(format!("write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("read {}: {e}", path.display())))?;
    let doc: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("decode {}: {e}", path.display())))?;
    if doc.version != CHECKPOINT_VERSION {
        return Err(CliError::Io(format!(
            "{}: unsupported checkpoint version {}",
            path.display(),
            doc.version
        )));
    }
    if doc.topology != doc.params.topology {
        return Err(CliError::Io(format!(
            "{}: topology header does not match parameters",
            path.display()
        )));
    }
    Ok(doc.params)
}
