//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `COMETSCK`, little-endian `u32` format version,
//! little-endian `u64` manifest byte length, a JSON manifest listing
//! `{name, shape, dtype}` per entry, then the raw little-endian payloads
//! concatenated in manifest order. Tensors are 2-D; opaque byte blobs (for
//! embedded configuration) use dtype `u8` with a 1-D shape.

use indexmap::IndexMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use crate::adam::{Adam, AdamConfig};
use crate::error::{NnError, Result};
use crate::params::ParamSet;
use crate::scalar::Scalar;

pub const MAGIC: [u8; 8] = *b"COMETSCK";
pub const VERSION: u32 = 1;

/// One stored entry.
#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Array2<f32>),
    F64(Array2<f64>),
    Bytes(Vec<u8>),
}

impl TensorData {
    fn dtype(&self) -> &'static str {
        match self {
            TensorData::F32(_) => "f32",
            TensorData::F64(_) => "f64",
            TensorData::Bytes(_) => "u8",
        }
    }

    fn shape(&self) -> Vec<usize> {
        match self {
            TensorData::F32(a) => vec![a.nrows(), a.ncols()],
            TensorData::F64(a) => vec![a.nrows(), a.ncols()],
            TensorData::Bytes(b) => vec![b.len()],
        }
    }

}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

/// In-memory checkpoint: ordered, uniquely named entries.
#[derive(Debug, Default)]
pub struct Checkpoint {
    entries: IndexMap<String, TensorData>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, data: TensorData) -> Result<()> {
        if self.entries.contains_key(name) {
            return Err(NnError::Checkpoint(format!("duplicate entry `{name}`")));
        }
        self.entries.insert(name.to_string(), data);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorData> {
        self.entries.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn bytes_entry(&self, name: &str) -> Result<&[u8]> {
        match self.get(name) {
            Some(TensorData::Bytes(b)) => Ok(b),
            Some(other) => Err(NnError::Checkpoint(format!(
                "entry `{name}` has dtype {}, expected u8",
                other.dtype()
            ))),
            None => Err(NnError::Checkpoint(format!("missing entry `{name}`"))),
        }
    }

    pub fn f64_entry(&self, name: &str) -> Result<&Array2<f64>> {
        match self.get(name) {
            Some(TensorData::F64(a)) => Ok(a),
            Some(other) => Err(NnError::Checkpoint(format!(
                "entry `{name}` has dtype {}, expected f64",
                other.dtype()
            ))),
            None => Err(NnError::Checkpoint(format!("missing entry `{name}`"))),
        }
    }

    /// Serialize to the container format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let manifest: Vec<ManifestEntry> = self
            .entries
            .iter()
            .map(|(name, data)| ManifestEntry {
                name: name.clone(),
                shape: data.shape(),
                dtype: data.dtype().to_string(),
            })
            .collect();
        let manifest_bytes = serde_json::to_vec(&manifest)
            .map_err(|e| NnError::Checkpoint(format!("manifest encode: {e}")))?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        file.write_all(&MAGIC)?;
        file.write_all(&VERSION.to_le_bytes())?;
        file.write_all(&(manifest_bytes.len() as u64).to_le_bytes())?;
        file.write_all(&manifest_bytes)?;
        for data in self.entries.values() {
            match data {
                TensorData::F32(a) => {
                    for v in a.iter() {
                        file.write_all(&v.to_le_bytes())?;
                    }
                }
                TensorData::F64(a) => {
                    for v in a.iter() {
                        file.write_all(&v.to_le_bytes())?;
                    }
                }
                TensorData::Bytes(b) => file.write_all(b)?,
            }
        }
        file.flush()?;
        Ok(())
    }

    /// Read and validate a container file.
    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        read_exact(&mut file, &mut magic, "magic")?;
        if magic != MAGIC {
            return Err(NnError::Checkpoint(format!(
                "bad magic {magic:?}; not a checkpoint file"
            )));
        }
        let mut version = [0u8; 4];
        read_exact(&mut file, &mut version, "version")?;
        let version = u32::from_le_bytes(version);
        if version != VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported format version {version} (supported: {VERSION})"
            )));
        }
        let mut len = [0u8; 8];
        read_exact(&mut file, &mut len, "manifest length")?;
        let manifest_len = u64::from_le_bytes(len) as usize;
        let mut manifest_bytes = vec![0u8; manifest_len];
        read_exact(&mut file, &mut manifest_bytes, "manifest")?;
        let manifest: Vec<ManifestEntry> = serde_json::from_slice(&manifest_bytes)
            .map_err(|e| NnError::Checkpoint(format!("manifest decode: {e}")))?;
        let mut entries = IndexMap::new();
        for entry in manifest {
            let count: usize = entry.shape.iter().product();
            let data = match entry.dtype.as_str() {
                "f32" => {
                    let (r, c) = dims2(&entry)?;
                    let mut buf = vec![0u8; count * 4];
                    read_exact(&mut file, &mut buf, &entry.name)?;
                    let values: Vec<f32> = buf
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    TensorData::F32(array2_from(values, r, c, &entry.name)?)
                }
                "f64" => {
                    let (r, c) = dims2(&entry)?;
                    let mut buf = vec![0u8; count * 8];
                    read_exact(&mut file, &mut buf, &entry.name)?;
                    let values: Vec<f64> = buf
                        .chunks_exact(8)
                        .map(|b| {
                            f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]])
                        })
                        .collect();
                    TensorData::F64(array2_from(values, r, c, &entry.name)?)
                }
                "u8" => {
                    let mut buf = vec![0u8; count];
                    read_exact(&mut file, &mut buf, &entry.name)?;
                    TensorData::Bytes(buf)
                }
                other => {
                    return Err(NnError::Checkpoint(format!(
                        "entry `{}` has unknown dtype `{other}`",
                        entry.name
                    )))
                }
            };
            if entries.insert(entry.name.clone(), data).is_some() {
                return Err(NnError::Checkpoint(format!(
                    "duplicate entry `{}`",
                    entry.name
                )));
            }
        }
        let mut trailing = [0u8; 1];
        if file.read(&mut trailing)? != 0 {
            return Err(NnError::Checkpoint(
                "trailing bytes after final payload".into(),
            ));
        }
        Ok(Self { entries })
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            NnError::Checkpoint(format!("truncated file while reading {what}"))
        } else {
            NnError::Io(e)
        }
    })
}

fn dims2(entry: &ManifestEntry) -> Result<(usize, usize)> {
    if entry.shape.len() != 2 {
        return Err(NnError::Checkpoint(format!(
            "entry `{}` has rank {} shape; tensors are 2-D",
            entry.name,
            entry.shape.len()
        )));
    }
    Ok((entry.shape[0], entry.shape[1]))
}

fn array2_from<T>(values: Vec<T>, r: usize, c: usize, name: &str) -> Result<Array2<T>> {
    Array2::from_shape_vec((r, c), values)
        .map_err(|e| NnError::Checkpoint(format!("entry `{name}`: {e}")))
}

/// Store every parameter of a set under `param.<name>` entries, plus a
/// `param.trainable` JSON blob recording the flags.
pub fn pack_param_set<S: Scalar>(ck: &mut Checkpoint, params: &ParamSet<S>) -> Result<()> {
    let mut trainable = Vec::new();
    for (name, p) in params.iter() {
        let data = match S::DTYPE {
            "f32" => TensorData::F32(p.values.mapv(|v| v.as_f64() as f32)),
            _ => TensorData::F64(p.values.mapv(Scalar::as_f64)),
        };
        ck.insert(&format!("param.{name}"), data)?;
        trainable.push((name.to_string(), p.trainable));
    }
    let blob = serde_json::to_vec(&trainable)
        .map_err(|e| NnError::Checkpoint(format!("trainable flags encode: {e}")))?;
    ck.insert("param.trainable", TensorData::Bytes(blob))?;
    Ok(())
}

/// Fill an initialized parameter set from `param.<name>` entries. Every
/// target parameter must be present with an identical shape.
pub fn unpack_param_set<S: Scalar>(ck: &Checkpoint, params: &mut ParamSet<S>) -> Result<()> {
    for name in params.names() {
        let key = format!("param.{name}");
        let values: Array2<f64> = match ck.get(&key) {
            Some(TensorData::F32(a)) => a.mapv(f64::from),
            Some(TensorData::F64(a)) => a.clone(),
            Some(TensorData::Bytes(_)) => {
                return Err(NnError::Checkpoint(format!(
                    "entry `{key}` is a byte blob, expected tensor"
                )))
            }
            None => {
                return Err(NnError::Checkpoint(format!(
                    "checkpoint is missing parameter `{name}`"
                )))
            }
        };
        let target = params.get_mut(&name)?;
        if values.dim() != target.values.dim() {
            return Err(NnError::Shape {
                op: format!("load parameter `{name}`"),
                expected: format!("{:?}", target.values.dim()),
                actual: format!("{:?}", values.dim()),
            });
        }
        target.values = values.mapv(S::from_f64);
    }
    Ok(())
}

/// Store optimizer moments under `<prefix>.step`, `<prefix>.m.<name>`,
/// `<prefix>.v.<name>`.
pub fn pack_adam(ck: &mut Checkpoint, prefix: &str, adam: &Adam) -> Result<()> {
    let (step, entries) = adam.export();
    ck.insert(
        &format!("{prefix}.step"),
        TensorData::Bytes(step.to_le_bytes().to_vec()),
    )?;
    for (name, m, v) in entries {
        ck.insert(&format!("{prefix}.m.{name}"), TensorData::F64(m))?;
        ck.insert(&format!("{prefix}.v.{name}"), TensorData::F64(v))?;
    }
    Ok(())
}

/// Rebuild an optimizer from [`pack_adam`] entries.
pub fn unpack_adam(ck: &Checkpoint, prefix: &str, config: AdamConfig) -> Result<Adam> {
    let step_bytes = ck.bytes_entry(&format!("{prefix}.step"))?;
    if step_bytes.len() != 8 {
        return Err(NnError::Checkpoint(format!(
            "`{prefix}.step` must be 8 bytes, found {}",
            step_bytes.len()
        )));
    }
    let step = u64::from_le_bytes(step_bytes.try_into().expect("length checked"));
    let m_prefix = format!("{prefix}.m.");
    let mut entries = Vec::new();
    let names: Vec<String> = ck
        .names()
        .filter_map(|n| n.strip_prefix(&m_prefix).map(str::to_string))
        .collect();
    for name in names {
        let m = ck.f64_entry(&format!("{prefix}.m.{name}"))?.clone();
        let v = ck.f64_entry(&format!("{prefix}.v.{name}"))?.clone();
        entries.push((name, m, v));
    }
    Ok(Adam::restore(config, step, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn sample_checkpoint() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.insert("a", TensorData::F32(array![[1.5f32, -2.0], [0.25, 4.0]]))
            .unwrap();
        ck.insert("b", TensorData::F64(array![[3.141592653589793]]))
            .unwrap();
        ck.insert("meta.config", TensorData::Bytes(b"{\"k\":1}".to_vec()))
            .unwrap();
        ck
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        let ck = sample_checkpoint();
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(ck.get("a"), loaded.get("a"));
        assert_eq!(ck.get("b"), loaded.get("b"));
        assert_eq!(ck.get("meta.config"), loaded.get("meta.config"));
        assert_eq!(loaded.names().count(), 3);
    }

    #[test]
    fn corrupted_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        sample_checkpoint().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        sample_checkpoint().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("truncated"), "{err}");
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        sample_checkpoint().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        let err = Checkpoint::load(&path).unwrap_err();
        assert!(err.to_string().contains("trailing"), "{err}");
    }

    #[test]
    fn param_set_roundtrip_and_shape_mismatch() {
        let mut params: ParamSet<f32> = ParamSet::new();
        params.insert("g.w", array![[1.0f32, 2.0]], true).unwrap();
        params.insert("g.u", array![[0.6f32, 0.8]], false).unwrap();
        let mut ck = Checkpoint::new();
        pack_param_set(&mut ck, &params).unwrap();

        let mut target = params.clone();
        target.get_mut("g.w").unwrap().values = array![[0.0f32, 0.0]];
        unpack_param_set(&ck, &mut target).unwrap();
        assert_eq!(target, params);

        // A skeleton with a different shape must be rejected.
        let mut wrong: ParamSet<f32> = ParamSet::new();
        wrong
            .insert("g.w", array![[0.0f32, 0.0], [0.0, 0.0]], true)
            .unwrap();
        wrong.insert("g.u", array![[0.0f32, 0.0]], false).unwrap();
        let err = unpack_param_set(&ck, &mut wrong).unwrap_err();
        assert!(matches!(err, NnError::Shape { .. }), "{err}");
    }

    #[test]
    fn adam_roundtrip_through_file() {
        use crate::params::GradientMap;
        let mut params: ParamSet<f32> = ParamSet::new();
        params.insert("w", array![[1.0f32, -1.0]], true).unwrap();
        let mut adam = Adam::new(AdamConfig::default());
        let mut grads = GradientMap::new();
        grads.accumulate("w", &array![[0.5f32, 0.25]]);
        adam.step(&mut params, &grads, "").unwrap();

        let mut ck = Checkpoint::new();
        pack_adam(&mut ck, "opt", &adam).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("opt.ck");
        ck.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        let restored = unpack_adam(&loaded, "opt", AdamConfig::default()).unwrap();
        assert_eq!(restored.step_count(), 1);
        let (_, entries) = restored.export();
        let (_, want) = adam.export();
        assert_eq!(entries, want);
    }
}
