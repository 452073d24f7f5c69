//! Named learnable parameter collections and the "GHRC" checkpoint format.
//!
//! Parameters are registered in a fixed order and initialized from a
//! per-name seed derived from the global seed, so initialization does not
//! depend on registration order and identical (seed, config) pairs produce
//! bit-identical stores.

use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

const GHRC_MAGIC: &[u8; 4] = b"GHRC";
const GHRC_VERSION: u8 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: expected GHRC")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    VersionMismatch(u8),
    #[error("truncated checkpoint: {0}")]
    Truncated(String),
    #[error("checkpoint is missing tensors: {0:?}")]
    MissingTensor(Vec<String>),
    #[error("checkpoint has unexpected tensors: {0:?}")]
    UnexpectedTensor(Vec<String>),
    #[error("checkpoint shapes disagree with the model config: {0:?}")]
    ShapeMismatch(Vec<String>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CheckpointError>;

/// 64-bit FNV-1a; used to derive stable per-name seeds and config
/// fingerprints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Ordered collection of named f32 parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor<f32>)>,
    index: HashMap<String, usize>,
    seed: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            entries: Vec::new(),
            index: HashMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn rng_for(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(name.as_bytes()))
    }

    /// Registers a weight matrix initialized uniform(-a, a) with
    /// a = sqrt(6 / (fan_in + fan_out)).
    pub fn register_matrix(&mut self, name: &str, rows: usize, cols: usize) {
        let a = (6.0 / (rows + cols) as f64).sqrt() as f32;
        let mut rng = self.rng_for(name);
        let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect();
        self.insert(name, Tensor::new(vec![rows, cols], data).unwrap());
    }

    /// Registers a zero-initialized bias vector.
    pub fn register_bias(&mut self, name: &str, len: usize) {
        self.insert(name, Tensor::zeros(&[len]));
    }

    /// Registers an embedding table initialized normal(0, 0.02).
    pub fn register_embedding(&mut self, name: &str, shape: &[usize]) {
        let normal = Normal::new(0.0f64, 0.02).unwrap();
        let mut rng = self.rng_for(name);
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
        self.insert(name, Tensor::new(shape.to_vec(), data).unwrap());
    }

    fn insert(&mut self, name: &str, t: Tensor<f32>) {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name {name}"
        );
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    /// First tensor holding a NaN/Inf, if any.
    pub fn first_non_finite(&self) -> Option<(&str, usize)> {
        for (n, t) in self.iter() {
            if let Err(crate::tensor::TensorError::NonFinite { index, .. }) = t.check_finite() {
                return Some((n, index));
            }
        }
        None
    }

    // ---- GHRC serialization ----

    pub fn to_ghrc_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(GHRC_MAGIC);
        out.push(GHRC_VERSION);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a GHRC buffer into an ordered name → tensor list. Validates
    /// magic, version, and total length; a truncated buffer is rejected
    /// without producing a partial result.
    pub fn from_ghrc_bytes(buf: &[u8]) -> Result<Vec<(String, Tensor<f32>)>> {
        let need = |pos: usize, n: usize| -> Result<()> {
            if pos + n > buf.len() {
                Err(CheckpointError::Truncated(format!(
                    "need {n} bytes at offset {pos}, file has {}",
                    buf.len()
                )))
            } else {
                Ok(())
            }
        };
        need(0, 5)?;
        if &buf[..4] != GHRC_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if buf[4] != GHRC_VERSION {
            return Err(CheckpointError::VersionMismatch(buf[4]));
        }
        let mut pos = 5usize;
        need(pos, 4)?;
        let count = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
        pos += 4;
        let mut entries = Vec::with_capacity(count);
        for _ in 0..count {
            need(pos, 2)?;
            let name_len = u16::from_le_bytes(buf[pos..pos + 2].try_into().unwrap()) as usize;
            pos += 2;
            need(pos, name_len)?;
            let name = String::from_utf8(buf[pos..pos + name_len].to_vec())
                .map_err(|e| CheckpointError::Truncated(format!("bad name: {e}")))?;
            pos += name_len;
            need(pos, 1)?;
            let rank = buf[pos] as usize;
            pos += 1;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                need(pos, 4)?;
                shape.push(u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize);
                pos += 4;
            }
            let n: usize = shape.iter().product();
            need(pos, n * 4)?;
            let mut data = Vec::with_capacity(n);
            for i in 0..n {
                data.push(f32::from_le_bytes(
                    buf[pos + i * 4..pos + i * 4 + 4].try_into().unwrap(),
                ));
            }
            pos += n * 4;
            let t = Tensor::new(shape, data)
                .map_err(|e| CheckpointError::Truncated(format!("bad tensor {name}: {e}")))?;
            entries.push((name, t));
        }
        if pos != buf.len() {
            return Err(CheckpointError::Truncated(format!(
                "{} trailing bytes",
                buf.len() - pos
            )));
        }
        Ok(entries)
    }

    /// Writes the checkpoint atomically (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_ghrc_bytes();
        let tmp = path.with_extension("ghrc.tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    /// Loads a checkpoint into this store. Every registered parameter must be
    /// present with a matching shape, and the file must not carry extras;
    /// on any mismatch the store is left untouched.
    pub fn load(&mut self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        self.load_bytes(&buf)
    }

    pub fn load_bytes(&mut self, buf: &[u8]) -> Result<()> {
        let entries = Self::from_ghrc_bytes(buf)?;
        let mut seen: HashMap<&str, &Tensor<f32>> = HashMap::new();
        for (n, t) in &entries {
            seen.insert(n.as_str(), t);
        }
        let missing: Vec<String> = self
            .entries
            .iter()
            .filter(|(n, _)| !seen.contains_key(n.as_str()))
            .map(|(n, _)| n.clone())
            .collect();
        if !missing.is_empty() {
            return Err(CheckpointError::MissingTensor(missing));
        }
        let unexpected: Vec<String> = entries
            .iter()
            .filter(|(n, _)| !self.index.contains_key(n))
            .map(|(n, _)| n.clone())
            .collect();
        if !unexpected.is_empty() {
            return Err(CheckpointError::UnexpectedTensor(unexpected));
        }
        let mismatched: Vec<String> = self
            .entries
            .iter()
            .filter(|(n, t)| seen[n.as_str()].shape() != t.shape())
            .map(|(n, t)| {
                format!(
                    "{n}: model {:?} vs checkpoint {:?}",
                    t.shape(),
                    seen[n.as_str()].shape()
                )
            })
            .collect();
        if !mismatched.is_empty() {
            return Err(CheckpointError::ShapeMismatch(mismatched));
        }
        for (n, t) in entries {
            let i = self.index[&n];
            self.entries[i].1 = t;
        }
        Ok(())
    }
}

/// Registers store tensors as differentiable leaves on a tape, caching the
/// `Var` per name so a parameter used twice is one tape leaf (its gradient
/// contributions accumulate). The scalar cast makes the same forward code
/// run in f32 for training and f64 for gradient checking.
pub struct Binder<'s, S: crate::tensor::Scalar> {
    store: Option<&'s ParamStore>,
    bound: HashMap<String, crate::tensor::Var>,
    _marker: std::marker::PhantomData<S>,
}

impl<'s, S: crate::tensor::Scalar> Binder<'s, S> {
    pub fn new(store: &'s ParamStore) -> Self {
        Binder {
            store: Some(store),
            bound: HashMap::new(),
            _marker: std::marker::PhantomData,
        }
    }

    /// A binder whose parameters were already leafed onto the tape by the
    /// caller (gradient checking registers its own f64 leaves).
    pub fn prebound(pairs: impl IntoIterator<Item = (String, crate::tensor::Var)>) -> Self {
        Binder {
            store: None,
            bound: pairs.into_iter().collect(),
            _marker: std::marker::PhantomData,
        }
    }

    /// Var for a named parameter, leafing it onto the tape on first use.
    /// Panics on unregistered names: parameter sets are derived from the same
    /// config on both sides, so a miss is a bug, not an input error.
    pub fn leaf(&mut self, tape: &mut crate::tensor::Tape<S>, name: &str) -> crate::tensor::Var {
        if let Some(&v) = self.bound.get(name) {
            return v;
        }
        let t = self
            .store
            .and_then(|s| s.get(name))
            .unwrap_or_else(|| panic!("unregistered parameter {name:?}"));
        let v = tape.param(t.cast::<S>());
        self.bound.insert(name.to_string(), v);
        v
    }

    /// Name → Var pairs bound so far; used to collect named gradients.
    pub fn bound(&self) -> &HashMap<String, crate::tensor::Var> {
        &self.bound
    }
}
