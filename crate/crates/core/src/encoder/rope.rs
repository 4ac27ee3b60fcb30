//! Rotary position embeddings.
//!
//! Each head vector is split in halves; element `i` is rotated together with
//! element `i + head_dim/2` by angle `pos · theta^(−2i/head_dim)`.

use crate::error::{invalid, Result};
use crate::tensor::Real;

#[derive(Debug, Clone)]
pub struct RopeTable<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> RopeTable<T> {
    pub fn new(theta: f64, head_dim: usize, max_pos: usize) -> Result<Self> {
        if head_dim == 0 || head_dim % 2 != 0 {
            return invalid(format!("rotary embedding needs an even head_dim, got {head_dim}"));
        }
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(max_pos * half);
        let mut sin = Vec::with_capacity(max_pos * half);
        for p in 0..max_pos {
            for i in 0..half {
                let freq = theta.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = p as f64 * freq;
                cos.push(T::lit(angle.cos()));
                sin.push(T::lit(angle.sin()));
            }
        }
        Ok(RopeTable { half, cos, sin })
    }

    pub fn rotate(&self, v: &mut [T], pos: usize) {
        let h = self.half;
        let c = &self.cos[pos * h..(pos + 1) * h];
        let s = &self.sin[pos * h..(pos + 1) * h];
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] - b * s[i];
            v[i + h] = a * s[i] + b * c[i];
        }
    }

    /// Inverse (transpose) rotation; used to pull gradients back through [`Self::rotate`].
    pub fn rotate_back(&self, v: &mut [T], pos: usize) {
        let h = self.half;
        let c = &self.cos[pos * h..(pos + 1) * h];
        let s = &self.sin[pos * h..(pos + 1) * h];
        for i in 0..h {
            let (a, b) = (v[i], v[i + h]);
            v[i] = a * c[i] + b * s[i];
            v[i + h] = -a * s[i] + b * c[i];
        }
    }
}

/// Rotate `x` laid out as `[L × n_heads × head_dim]`; `positions` has length `L`.
pub fn rope_apply<T: Real>(
    x: &[T],
    n_heads: usize,
    head_dim: usize,
    positions: &[usize],
    theta: f64,
) -> Result<Vec<T>> {
    if x.len() != positions.len() * n_heads * head_dim {
        return invalid("rope input length does not match [L × heads × head_dim]");
    }
    let max_pos = positions.iter().copied().max().map_or(0, |p| p + 1);
    let table = RopeTable::new(theta, head_dim, max_pos)?;
    let mut out = x.to_vec();
    for (i, &p) in positions.iter().enumerate() {
        for h in 0..n_heads {
            let off = (i * n_heads + h) * head_dim;
            table.rotate(&mut out[off..off + head_dim], p);
        }
    }
    Ok(out)
}
