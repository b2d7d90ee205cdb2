//! Checkpoint serialization.
//!
//! Single file: an 8-byte magic, a little-endian u64 manifest length, a
//! JSON manifest and one contiguous little-endian float32 blob. The
//! manifest lists every array as `{name, shape, dtype, offset}` (offset in
//! bytes into the blob) and carries the model config, format version and
//! training-stream seed; optimizer moments ride along under `opt.*` names
//! so a resumed run continues bit-exactly.

use super::{ModelConfig, ModelParams};
use crate::error::{Error, Result};
use indexmap::IndexMap;
use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"ZCFCST01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlobEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
}

/// Where a training run stood when the checkpoint was written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainState {
    pub round: u64,
    pub opt_step: u64,
    pub next_sample_index: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    seed: u64,
    entries: Vec<BlobEntry>,
    train_state: Option<TrainState>,
}

/// Everything persisted for a model.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub seed: u64,
    pub model: ModelParams<f32>,
    /// Optimizer arrays (`opt.m.<param>`, `opt.v.<param>`), present only on
    /// resumable checkpoints.
    pub optimizer: IndexMap<String, ArrayD<f32>>,
    pub train_state: Option<TrainState>,
}

impl Checkpoint {
    pub fn new(config: ModelConfig, seed: u64, model: ModelParams<f32>) -> Self {
        Checkpoint {
            config,
            seed,
            model,
            optimizer: IndexMap::new(),
            train_state: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut entries = Vec::new();
        let mut blob: Vec<u8> = Vec::new();
        let mut append = |name: &str, arr: &ArrayD<f32>, entries: &mut Vec<BlobEntry>| {
            let offset = blob.len() as u64;
            for v in arr.iter() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(BlobEntry {
                name: format!("model.{name}"),
                shape: arr.shape().to_vec(),
                dtype: "f32".into(),
                offset,
            });
        };
        for (name, arr) in &self.model.arrays {
            append(name, arr, &mut entries);
        }
        // Optimizer arrays keep their full names.
        for (name, arr) in &self.optimizer {
            let offset = blob.len() as u64;
            for v in arr.iter() {
                blob.extend_from_slice(&v.to_le_bytes());
            }
            entries.push(BlobEntry {
                name: name.clone(),
                shape: arr.shape().to_vec(),
                dtype: "f32".into(),
                offset,
            });
        }
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            entries,
            train_state: self.train_state,
        };
        let manifest_bytes = serde_json::to_vec(&manifest)?;

        let mut file = fs::File::create(path)?;
        file.write_all(MAGIC)?;
        file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&manifest_bytes)?;
        file.write_all(&blob)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let mut file = fs::File::open(path)?;
        let mut magic = [0u8; 8];
        file.read_exact(&mut magic)
            .map_err(|_| Error::Checkpoint("file too short for magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let mut lenbuf = [0u8; 8];
        file.read_exact(&mut lenbuf)?;
        let mlen = u64::from_le_bytes(lenbuf) as usize;
        let mut manifest_bytes = vec![0u8; mlen];
        file.read_exact(&mut manifest_bytes)?;
        let manifest: Manifest = serde_json::from_slice(&manifest_bytes)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} unsupported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let mut blob = Vec::new();
        file.read_to_end(&mut blob)?;

        let mut model = IndexMap::new();
        let mut optimizer = IndexMap::new();
        for entry in &manifest.entries {
            if entry.dtype != "f32" {
                return Err(Error::Checkpoint(format!(
                    "entry '{}' has dtype {}, expected f32",
                    entry.name, entry.dtype
                )));
            }
            let count: usize = entry.shape.iter().product();
            let start = entry.offset as usize;
            let end = start + 4 * count;
            if end > blob.len() {
                return Err(Error::Checkpoint(format!(
                    "entry '{}' extends past the blob",
                    entry.name
                )));
            }
            let mut data = Vec::with_capacity(count);
            for chunk in blob[start..end].chunks_exact(4) {
                data.push(f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]));
            }
            let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), data)
                .map_err(|e| Error::Checkpoint(format!("entry '{}': {e}", entry.name)))?;
            if let Some(name) = entry.name.strip_prefix("model.") {
                model.insert(name.to_string(), arr);
            } else {
                optimizer.insert(entry.name.clone(), arr);
            }
        }

        let model = ModelParams { arrays: model };
        model.validate_shapes(&manifest.config)?;
        Ok(Checkpoint {
            config: manifest.config,
            seed: manifest.seed,
            model,
            optimizer,
            train_state: manifest.train_state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_bit_exactly() {
        let config = ModelConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let model = ModelParams::<f32>::init(&config, &mut rng);
        let mut ckpt = Checkpoint::new(config, 42, model);
        ckpt.train_state = Some(TrainState {
            round: 7,
            opt_step: 7,
            next_sample_index: 112,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back.seed, 42);
        assert_eq!(back.train_state, ckpt.train_state);
        assert_eq!(back.model.arrays.len(), ckpt.model.arrays.len());
        for (name, arr) in &ckpt.model.arrays {
            let b = back.model.get(name);
            assert_eq!(arr.shape(), b.shape());
            for (x, y) in arr.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{name}");
            }
        }
    }

    #[test]
    fn load_rejects_wrong_shapes() {
        let config = ModelConfig::desk();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let model = ModelParams::<f32>::init(&config, &mut rng);
        let mut bad = Checkpoint::new(config, 1, model);
        // Claim a different config than the arrays were built for.
        bad.config.d_model = 32;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        bad.save(&path).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn rejects_garbage_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(Checkpoint::load(&path).is_err());
    }
}
