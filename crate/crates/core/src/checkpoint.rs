//! Checkpoint container.
//!
//! Byte layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8 | magic `CRSNCKPT` |
//! | 4 | container version (`u32`) |
//! | 8 | header length `n` (`u64`) |
//! | n | UTF-8 JSON header |
//! | … | every array of `header.arrays`, in order, as raw `f32` |
//!
//! Array names are `param/<name>`, `adam.m/<name>` and `adam.v/<name>`.

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CrossNetError, Result};
use crate::model::CrossNetConfig;
use crate::optim::AdamState;
use crate::params::ParameterStore;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"CRSNCKPT";
pub const CONTAINER_VERSION: u32 = 1;

const PARAM: &str = "param/";
const MOMENT1: &str = "adam.m/";
const MOMENT2: &str = "adam.v/";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Iterations completed.
    pub iteration: u64,
    pub model: CrossNetConfig,
    /// Echo of the training configuration, if any.
    pub train: Option<serde_json::Value>,
    pub params: ParameterStore,
    pub optimizer: Option<AdamState>,
}

#[derive(Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    iteration: u64,
    store_version: u32,
    model: CrossNetConfig,
    train: Option<serde_json::Value>,
    adam_step: Option<u64>,
    arrays: Vec<ArrayEntry>,
}

fn bad(msg: impl Into<String>) -> CrossNetError {
    CrossNetError::Checkpoint(msg.into())
}

impl Checkpoint {
    fn arrays(&self) -> Vec<(String, &Tensor)> {
        let mut out: Vec<(String, &Tensor)> = self.params.iter().map(|(n, t)| (format!("{PARAM}{n}"), t)).collect();
        if let Some(st) = &self.optimizer {
            out.extend(st.m.iter().map(|(n, t)| (format!("{MOMENT1}{n}"), t)));
            out.extend(st.v.iter().map(|(n, t)| (format!("{MOMENT2}{n}"), t)));
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let arrays = self.arrays();
        let header = Header {
            iteration: self.iteration,
            store_version: self.params.format_version(),
            model: self.model.clone(),
            train: self.train.clone(),
            adam_step: self.optimizer.as_ref().map(|s| s.step),
            arrays: arrays
                .iter()
                .map(|(n, t)| ArrayEntry {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        w.write_all(MAGIC)?;
        w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in arrays {
            for v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CONTAINER_VERSION {
            return Err(bad(format!("unsupported container version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = usize::try_from(u64::from_le_bytes(b8)).map_err(|_| bad("header too large"))?;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json)?;
        if header.store_version != crate::params::FORMAT_VERSION {
            return Err(bad(format!("parameter layout version {} is not supported", header.store_version)));
        }
        let mut params = ParameterStore::new();
        let mut m = ParameterStore::new();
        let mut v = ParameterStore::new();
        for entry in header.arrays {
            let n: usize = entry.shape.iter().product();
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let t = Tensor::new(entry.shape, data)?;
            let (store, name) = if let Some(n) = entry.name.strip_prefix(PARAM) {
                (&mut params, n)
            } else if let Some(n) = entry.name.strip_prefix(MOMENT1) {
                (&mut m, n)
            } else if let Some(n) = entry.name.strip_prefix(MOMENT2) {
                (&mut v, n)
            } else {
                return Err(bad(format!("unknown array `{}`", entry.name)));
            };
            store.insert(name, t);
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after the last array"));
        }
        header.model.check_params(&params)?;
        let optimizer = header.adam_step.map(|step| AdamState { step, m, v });
        Ok(Self {
            iteration: header.iteration,
            model: header.model,
            train: header.train,
            params,
            optimizer,
        })
    }

    /// Writes to a sibling temporary file and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(std::fs::File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| bad(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(&mut BufReader::new(f))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{FlowNetConfig, FlowNetVariant};
    use crate::model::init_params;

    fn small() -> CrossNetConfig {
        CrossNetConfig {
            scale_factor: 4,
            flow: FlowNetConfig {
                variant: FlowNetVariant::Plain,
                base_channels: 2,
            },
            ..CrossNetConfig::default()
        }
    }

    #[test]
    fn round_trip() {
        let model = small();
        let params = init_params(&model, 3);
        let mut m = ParameterStore::new();
        m.insert("flow.conv1.bias", Tensor::full(&[2], 0.5));
        let mut v = ParameterStore::new();
        v.insert("flow.conv1.bias", Tensor::full(&[2], 0.25));
        let ck = Checkpoint {
            iteration: 42,
            model,
            train: Some(serde_json::json!({"seed": 1})),
            params,
            optimizer: Some(AdamState { step: 42, m, v }),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/ck.bin");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_fail() {
        let ck = Checkpoint {
            iteration: 0,
            model: small(),
            train: None,
            params: init_params(&small(), 0),
            optimizer: None,
        };
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        assert_eq!(Checkpoint::read_from(&mut bytes.as_slice()).unwrap(), ck);
        let mut truncated = bytes.clone();
        truncated.pop();
        assert!(Checkpoint::read_from(&mut truncated.as_slice()).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Checkpoint::read_from(&mut magic.as_slice()).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::read_from(&mut extra.as_slice()).is_err());
    }
}
