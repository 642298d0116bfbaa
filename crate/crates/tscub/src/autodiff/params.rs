//! Named parameter store, adaptive-moment updates, and checkpoint I/O.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Adaptive-moment (Adam) hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

struct ParamEntry {
    name: String,
    value: Tensor,
    grad: Tensor,
    m: Tensor,
    v: Tensor,
}

/// Ordered collection of named parameter tensors with gradient accumulators
/// and per-parameter optimizer state. Registration order is the checkpoint
/// order, so identical runs produce identical checkpoint bytes.
#[derive(Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<usize> {
        if self.by_name.contains_key(name) {
            return Err(Error::InvalidArgument(format!(
                "parameter {name} registered twice"
            )));
        }
        let slot = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.to_string(),
            grad: Tensor::zeros(value.shape()),
            m: Tensor::zeros(value.shape()),
            v: Tensor::zeros(value.shape()),
            value,
        });
        self.by_name.insert(name.to_string(), slot);
        Ok(slot)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn slot(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name}")))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.entries[self.slot(name)?].value)
    }

    pub fn value_by_slot(&self, slot: usize) -> &Tensor {
        &self.entries[slot].value
    }

    pub fn value_mut_by_slot(&mut self, slot: usize) -> &mut Tensor {
        &mut self.entries[slot].value
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor> {
        Ok(&self.entries[self.slot(name)?].grad)
    }

    pub fn grad_by_slot(&self, slot: usize) -> &Tensor {
        &self.entries[slot].grad
    }

    pub(crate) fn accumulate_grad(&mut self, slot: usize, g: &Tensor) {
        self.entries[slot].grad.add_assign(g);
    }

    pub fn zero_grads(&mut self) {
        for e in &mut self.entries {
            e.grad.data_mut().fill(0.0);
        }
    }

    /// Snapshot of every gradient, in registration order.
    pub fn grads_snapshot(&self) -> Vec<Tensor> {
        self.entries.iter().map(|e| e.grad.clone()).collect()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.value.numel()).sum()
    }

    /// One adaptive-moment update from the accumulated gradients.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for e in &mut self.entries {
            e.grad.check_finite("adam_step")?;
            let g = e.grad.data();
            let m = e.m.data_mut();
            let v = e.v.data_mut();
            let w = e.value.data_mut();
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                w[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// He-normal initialized tensor: std = sqrt(2 / fan_in).
pub fn he_normal(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("valid std");
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = normal.sample(rng);
    }
    t
}

/// Uniform tensor in `[-bound, bound]`.
pub fn uniform_init(shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.gen_range(-bound..=bound);
    }
    t
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"TSCK";
const CHECKPOINT_VERSION: u32 = 1;

/// Serialize parameter values (with an opaque metadata blob) to bytes.
/// Values are written as little-endian f64 bit patterns, so a round trip is
/// bit-exact.
pub fn checkpoint_to_bytes(store: &ParamStore, meta: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    out.extend_from_slice(meta);
    out.extend_from_slice(&(store.entries.len() as u32).to_le_bytes());
    for e in &store.entries {
        out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
        out.extend_from_slice(e.name.as_bytes());
        out.push(e.value.shape().len() as u8);
        for &d in e.value.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in e.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Parse checkpoint bytes back into a store (fresh optimizer state) and the
/// metadata blob.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(ParamStore, Vec<u8>)> {
    let mut cur = std::io::Cursor::new(bytes);
    let mut magic = [0u8; 4];
    cur.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut cur)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u64(&mut cur)? as usize;
    let mut meta = vec![0u8; meta_len];
    cur.read_exact(&mut meta)
        .map_err(|_| Error::Checkpoint("truncated metadata".into()))?;
    let count = read_u32(&mut cur)? as usize;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u32(&mut cur)? as usize;
        let mut name = vec![0u8; name_len];
        cur.read_exact(&mut name)
            .map_err(|_| Error::Checkpoint("truncated name".into()))?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("bad name".into()))?;
        let mut ndim = [0u8; 1];
        cur.read_exact(&mut ndim)
            .map_err(|_| Error::Checkpoint("truncated rank".into()))?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            shape.push(read_u64(&mut cur)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = vec![0.0f64; numel];
        for v in &mut data {
            let mut buf = [0u8; 8];
            cur.read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint("truncated values".into()))?;
            *v = f64::from_le_bytes(buf);
        }
        store.register(&name, Tensor::from_vec(&shape, data)?)?;
    }
    Ok((store, meta))
}

pub fn save_checkpoint(store: &ParamStore, meta: &[u8], path: &Path) -> Result<()> {
    let bytes = checkpoint_to_bytes(store, meta);
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(&bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    checkpoint_from_bytes(&bytes)
}

fn read_u32(cur: &mut std::io::Cursor<&[u8]>) -> Result<u32> {
    let mut buf = [0u8; 4];
    cur.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated u32".into()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(cur: &mut std::io::Cursor<&[u8]>) -> Result<u64> {
    let mut buf = [0u8; 8];
    cur.read_exact(&mut buf)
        .map_err(|_| Error::Checkpoint("truncated u64".into()))?;
    Ok(u64::from_le_bytes(buf))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn register_rejects_duplicates() {
        let mut s = ParamStore::new();
        s.register("w", Tensor::zeros(&[2, 2])).unwrap();
        assert!(s.register("w", Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut s = ParamStore::new();
        let slot = s.register("w", Tensor::filled(&[3], 1.0)).unwrap();
        s.accumulate_grad(slot, &Tensor::filled(&[3], 0.5));
        s.adam_step(&AdamConfig::default()).unwrap();
        for &v in s.value("w").unwrap().data() {
            assert!(v < 1.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = ParamStore::new();
        s.register("a.w", he_normal(&[4, 3, 2, 2], 12, &mut rng))
            .unwrap();
        s.register("a.b", uniform_init(&[4], 0.3, &mut rng)).unwrap();
        // Exercise awkward bit patterns.
        s.register(
            "odd",
            Tensor::from_vec(&[3], vec![-0.0, f64::MIN_POSITIVE, 1.0 / 3.0]).unwrap(),
        )
        .unwrap();

        let meta = br#"{"kind":"test"}"#;
        let bytes = checkpoint_to_bytes(&s, meta);
        let (loaded, got_meta) = checkpoint_from_bytes(&bytes).unwrap();
        assert_eq!(got_meta, meta);
        assert_eq!(loaded.len(), s.len());
        for name in ["a.w", "a.b", "odd"] {
            let a = s.value(name).unwrap();
            let b = loaded.value(name).unwrap();
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // Byte-identical re-serialization.
        assert_eq!(bytes, checkpoint_to_bytes(&loaded, meta));
    }

    #[test]
    fn checkpoint_rejects_corruption() {
        let s = ParamStore::new();
        let mut bytes = checkpoint_to_bytes(&s, b"");
        bytes[0] = b'X';
        assert!(checkpoint_from_bytes(&bytes).is_err());
        assert!(checkpoint_from_bytes(&[1, 2, 3]).is_err());
    }
}
