//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes      | content                                          |
//! |------------|--------------------------------------------------|
//! | 8          | magic `ENDODPTH`                                 |
//! | 4          | format version (`u32`)                           |
//! | 8          | header length `L` (`u64`)                        |
//! | L          | UTF-8 JSON header: metadata and tensor directory |
//! | remainder  | tensor data as consecutive `f64` values          |
//!
//! Each directory entry gives a tensor's name, NCHW shape and element
//! offset into the data section.

use super::depth::DepthNetSpec;
use super::params::ParamStore;
use super::pose::PoseNetSpec;
use super::prior::PriorNetSpec;
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::priors::AblationConfig;
use endodepth_tensor::optim::Adam;
use endodepth_tensor::{Shape, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"ENDODPTH";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamMeta {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// `model` for depth/pose checkpoints, `prior` for prior networks.
    pub kind: String,
    pub stage: Option<String>,
    pub ablation: Option<AblationConfig>,
    pub epoch: usize,
    pub loss_weights: Option<LossWeights>,
    pub depth: Option<DepthNetSpec>,
    pub pose: Option<PoseNetSpec>,
    pub prior: Option<PriorNetSpec>,
    pub optimizers: BTreeMap<String, AdamMeta>,
    pub notes: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: [usize; 4],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    tensors: Vec<Entry>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Self {
            meta,
            tensors: BTreeMap::new(),
        }
    }

    pub fn add_params(&mut self, prefix: &str, store: &ParamStore) {
        self.tensors.extend(store.export(prefix));
    }

    pub fn restore_params(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        store.import(prefix, &self.tensors)
    }

    pub fn add_adam(&mut self, prefix: &str, adam: &Adam) {
        self.meta.optimizers.insert(
            prefix.to_string(),
            AdamMeta {
                step: adam.steps(),
                beta1: adam.beta1,
                beta2: adam.beta2,
                eps: adam.eps,
            },
        );
        for (name, (m, v)) in adam.moments() {
            self.tensors.insert(format!("{prefix}m.{name}"), m.clone());
            self.tensors.insert(format!("{prefix}v.{name}"), v.clone());
        }
    }

    pub fn adam(&self, prefix: &str) -> Option<Adam> {
        let meta = self.meta.optimizers.get(prefix)?;
        let mprefix = format!("{prefix}m.");
        let mut moments = BTreeMap::new();
        for (k, m) in self.tensors.range(mprefix.clone()..) {
            let Some(name) = k.strip_prefix(&mprefix) else { break };
            if let Some(v) = self.tensors.get(&format!("{prefix}v.{name}")) {
                moments.insert(name.to_string(), (m.clone(), v.clone()));
            }
        }
        Some(Adam::restore(meta.step, meta.beta1, meta.beta2, meta.eps, moments))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            let s = t.shape();
            entries.push(Entry {
                name: name.clone(),
                shape: [s.n, s.c, s.h, s.w],
                offset,
            });
            offset += t.len();
        }
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })
        .map_err(|e| Error::InvalidInput(format!("serialising checkpoint header: {e}")))?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in self.tensors.values() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Checkpoint {
            path: origin.to_path_buf(),
            reason,
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not an endodepth checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(format!("corrupt header: {e}")))?;
        let data = &bytes[20 + hlen..];
        if data.len() % 8 != 0 {
            return Err(bad("data section is not a whole number of f64 values".into()));
        }
        let mut tensors = BTreeMap::new();
        for e in header.tensors {
            let shape = Shape::new(e.shape[0], e.shape[1], e.shape[2], e.shape[3]);
            let (start, end) = (8 * e.offset, 8 * (e.offset + shape.len()));
            let raw = data
                .get(start..end)
                .ok_or_else(|| bad(format!("tensor {} extends past end of file", e.name)))?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(e.name, Tensor::from_vec(shape, values));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        let bytes = self.to_bytes()?;
        // write-then-rename so a crash never leaves a half-written checkpoint
        let tmp = path.with_extension("tmp");
        std::fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming to {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::Checkpoint {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use endodepth_tensor::gradcheck::random_tensor;

    #[test]
    fn bytes_round_trip_exactly() {
        let mut ck = Checkpoint::new(CheckpointMeta {
            kind: "model".into(),
            stage: Some("2".into()),
            ablation: Some(AblationConfig::DLPE),
            epoch: 3,
            ..Default::default()
        });
        ck.tensors.insert("a".into(), random_tensor(Shape::new(2, 3, 4, 5), 1, -1.0, 1.0));
        ck.tensors.insert("b".into(), Tensor::scalar(f64::MIN_POSITIVE));
        let mut adam = Adam::default();
        let mut p = Tensor::scalar(1.0);
        adam.begin_step();
        adam.update("w", &mut p, &Tensor::scalar(0.3), 0.1);
        ck.add_adam("opt.", &adam);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap(), Path::new("x")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.adam("opt.").unwrap(), adam);
    }

    #[test]
    fn corrupt_files_are_rejected_with_path() {
        let e = Checkpoint::from_bytes(b"garbage garbage garbage", Path::new("w.ckpt")).unwrap_err();
        assert!(e.to_string().contains("w.ckpt"));
        let mut bytes = Checkpoint::default().to_bytes().unwrap();
        bytes.truncate(bytes.len() - 3);
        assert!(Checkpoint::from_bytes(&bytes, Path::new("t")).is_err());
    }
}
