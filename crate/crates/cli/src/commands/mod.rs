pub mod bench;
pub mod eval;
pub mod forecast;
pub mod generate;
pub mod train;

use crate::errjson::UsageError;
use std::path::Path;

/// Load and hash a checkpoint, mapping a missing path to a usage error on
/// the `checkpoint` field.
pub fn load_checkpoint(
    path: Option<&Path>,
) -> anyhow::Result<(zerocast_core::network::checkpoint::Checkpoint, String)> {
    let path = path.ok_or_else(|| {
        UsageError::new("a checkpoint path is required for this command", &["checkpoint"])
    })?;
    if !path.exists() {
        return Err(UsageError::new(
            format!("checkpoint '{}' does not exist", path.display()),
            &["checkpoint"],
        ));
    }
    let bytes = std::fs::read(path)?;
    let hash = {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        format!("{:x}", hasher.finalize())
    };
    let ckpt = zerocast_core::network::checkpoint::Checkpoint::load(path)?;
    Ok((ckpt, hash))
}
