//! Named parameter storage and the `OWT1` weight file codec.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "OWT1" | u32 count | count × ( u16 name_len | name | u8 rank | rank × u32 dim | f32 data… )
//! ```

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{Result, Tensor, TensorError};

const MAGIC: &[u8; 4] = b"OWT1";

/// Ordered map of parameter name to tensor. Iteration order is insertion
/// order, which is also the on-disk order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    entries: IndexMap<String, Tensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or replaces a tensor. Names must be non-empty ASCII and fit a
    /// u16 length prefix.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        validate_name(&name)?;
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| TensorError::MissingWeight(name.to_string()))
    }

    pub fn get_opt(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Copies every entry of `other` into `self`, replacing same-named ones.
    pub fn extend(&mut self, other: WeightStore) {
        self.entries.extend(other.entries);
    }
}

fn validate_name(name: &str) -> Result<()> {
    if name.is_empty() || !name.is_ascii() || name.len() > u16::MAX as usize {
        return Err(TensorError::InvalidName(name.to_string()));
    }
    Ok(())
}

pub fn save_weights(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, tensor) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(tensor.rank() as u8);
        for &d in tensor.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in tensor.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.error(format!(
                "truncated: need {n} bytes for {what}, {} left",
                self.bytes.len() - self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn error(&self, reason: String) -> TensorError {
        TensorError::Decode {
            offset: self.pos,
            reason,
        }
    }
}

/// Decodes an `OWT1` file. Any defect fails the whole load; no partial store
/// is returned.
pub fn load_weights(bytes: &[u8]) -> Result<WeightStore> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(TensorError::Decode {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let count = cur.u32("entry count")?;
    let mut store = WeightStore::new();
    for _ in 0..count {
        let name_at = cur.pos;
        let name_len = cur.u16("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .ok()
            .filter(|n| !n.is_empty() && n.is_ascii())
            .ok_or_else(|| TensorError::Decode {
                offset: name_at,
                reason: "name must be non-empty ASCII".into(),
            })?
            .to_string();
        if store.contains(&name) {
            return Err(TensorError::Decode {
                offset: name_at,
                reason: format!("duplicate name `{name}`"),
            });
        }
        let rank = cur.u8("rank")? as usize;
        if rank == 0 || rank > Tensor::MAX_RANK {
            return Err(cur.error(format!("rank {rank} outside 1..=4")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = cur.u32("dimension")? as usize;
            if d == 0 {
                return Err(cur.error("zero dimension".into()));
            }
            dims.push(d);
        }
        let n_bytes = dims
            .iter()
            .try_fold(4usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| cur.error(format!("dims {dims:?} overflow")))?;
        let raw = cur.take(n_bytes, "tensor data")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.entries.insert(name, Tensor::new(dims, data)?);
    }
    if cur.pos != bytes.len() {
        return Err(cur.error(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }
    Ok(store)
}

/// Deterministic seeded initializer for untrained runs and tests: uniform in
/// ±1/√fan_in, biases zero.
pub struct WeightInit {
    rng: Xoshiro256PlusPlus,
}

impl WeightInit {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, dims: Vec<usize>, bound: f32) -> Tensor {
        let n = dims.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        Tensor::new(dims, data).expect("positive dims")
    }

    /// Weight tensor whose first dimension is the output size and the rest the
    /// fan-in.
    pub fn fan_in(&mut self, dims: Vec<usize>) -> Tensor {
        let fan_in: usize = dims[1..].iter().product::<usize>().max(1);
        self.uniform(dims, 1.0 / (fan_in as f32).sqrt())
    }
}
