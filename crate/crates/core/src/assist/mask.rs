use super::{AssistError, ImportanceMatrix, Result};

/// Length-`p` bit vector with `k` contiguous ones marking the selected
/// frequency patch-rows.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpectralAttentionMask {
    bits: Vec<bool>,
}

impl SpectralAttentionMask {
    /// Mask over `p` rows with ones on `[start, start + k)`.
    pub fn window(p: usize, start: usize, k: usize) -> Result<Self> {
        if k == 0 || k > p {
            return Err(AssistError::KOutOfRange { k, p });
        }
        if start + k > p {
            return Err(AssistError::InvalidMask(format!(
                "window [{start}, {}) exceeds {p} rows",
                start + k
            )));
        }
        Ok(Self {
            bits: (0..p).map(|i| i >= start && i < start + k).collect(),
        })
    }

    /// Wraps raw bits without validation; see [`validate`](Self::validate).
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn k(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Index of the first set bit (0 for an empty mask).
    pub fn window_start(&self) -> usize {
        self.bits.iter().position(|&b| b).unwrap_or(0)
    }

    /// Checks for at least one set bit and that all set bits are contiguous.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if k == 0 {
            return Err(AssistError::InvalidMask("no band selected".into()));
        }
        let start = self.window_start();
        if !self.bits[start..start + k].iter().all(|&b| b) {
            return Err(AssistError::InvalidMask(format!(
                "selected bands are not contiguous: {self}"
            )));
        }
        Ok(())
    }

    /// `⌈p/8⌉` bytes, MSB first; bit `i` is patch-row `i`.
    pub fn to_wire(&self) -> Vec<u8> {
        let mut out = vec![0u8; self.bits.len().div_ceil(8)];
        for (i, _) in self.bits.iter().enumerate().filter(|(_, &b)| b) {
            out[i / 8] |= 0x80 >> (i % 8);
        }
        out
    }

    /// Decodes `p` bits and validates the result.
    pub fn from_wire(bytes: &[u8], p: usize) -> Result<Self> {
        if bytes.len() != p.div_ceil(8) {
            return Err(AssistError::InvalidMask(format!(
                "{} mask bytes for p = {p}",
                bytes.len()
            )));
        }
        let bits = (0..p).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect();
        // padding bits past p must be clear
        let spare = bytes.len() * 8 - p;
        if spare > 0 && bytes[bytes.len() - 1] & ((1u8 << spare) - 1) != 0 {
            return Err(AssistError::InvalidMask("padding bits set".into()));
        }
        let mask = Self { bits };
        mask.validate()?;
        Ok(mask)
    }
}

impl std::fmt::Display for SpectralAttentionMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Picks the `k` adjacent rows of the importance matrix with the largest
/// total; ties go to the smallest start.
pub fn select_band_window(imp: &ImportanceMatrix, k: usize) -> Result<SpectralAttentionMask> {
    let p = imp.patches();
    if k == 0 || k > p {
        return Err(AssistError::KOutOfRange { k, p });
    }
    let rows = imp.row_sums();
    // each window summed afresh; a running sum drifts and can flip near-ties
    let mut best_start = 0;
    let mut best: f64 = rows[..k].iter().sum();
    for s in 1..=p - k {
        let window: f64 = rows[s..s + k].iter().sum();
        if window > best {
            best = window;
            best_start = s;
        }
    }
    SpectralAttentionMask::window(p, best_start, k)
}
