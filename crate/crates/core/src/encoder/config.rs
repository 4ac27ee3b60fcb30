use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    /// Local layers attend to `|i − j| ≤ local_window`.
    pub local_window: usize,
    /// Layer `ℓ` is global iff `ℓ % global_period == 0`.
    pub global_period: usize,
    pub rope_theta_local: f64,
    pub rope_theta_global: f64,
    pub norm_eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    Local,
    Global,
}

impl EncoderConfig {
    /// Small model used in tests and desk-scale runs.
    pub fn toy(vocab_size: usize) -> Self {
        EncoderConfig {
            n_layers: 2,
            d_model: 64,
            n_heads: 8,
            head_dim: 8,
            d_ff: 128,
            vocab_size,
            max_len: 8192,
            local_window: 128,
            global_period: 3,
            rope_theta_local: 10_000.0,
            rope_theta_global: 10_000.0,
            norm_eps: 1e-5,
        }
    }

    /// Inner width of the attention projections, `n_heads · head_dim`.
    pub fn attn_dim(&self) -> usize {
        self.n_heads * self.head_dim
    }

    pub fn layer_kind(&self, layer: usize) -> AttentionKind {
        if layer % self.global_period == 0 {
            AttentionKind::Global
        } else {
            AttentionKind::Local
        }
    }

    pub fn rope_theta(&self, kind: AttentionKind) -> f64 {
        match kind {
            AttentionKind::Local => self.rope_theta_local,
            AttentionKind::Global => self.rope_theta_global,
        }
    }

    /// Shape consistency. Sliced models satisfy this but not [`Self::validate_elastic`].
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_layers == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return bad("layer count and widths must be positive");
        }
        if self.head_dim == 0 || self.head_dim % 2 != 0 {
            return bad("head_dim must be positive and even");
        }
        if self.vocab_size == 0 || self.max_len == 0 {
            return bad("vocab_size and max_len must be positive");
        }
        if self.global_period == 0 {
            return bad("global_period must be at least 1");
        }
        if self.local_window > self.max_len {
            return bad("local_window exceeds max_len");
        }
        if !(self.rope_theta_local > 1.0 && self.rope_theta_global > 1.0) {
            return bad("rope thetas must exceed 1");
        }
        if !(self.norm_eps > 0.0) {
            return bad("norm_eps must be positive");
        }
        Ok(())
    }

    /// Full elastic model: every quarter granularity slices to whole heads and units.
    pub fn validate_elastic(&self) -> Result<()> {
        self.validate()?;
        if self.n_heads % 4 != 0 || self.d_ff % 4 != 0 {
            return Err(Error::InvalidConfig(
                "n_heads and d_ff must be divisible by 4".into(),
            ));
        }
        if self.attn_dim() != self.d_model {
            return Err(Error::InvalidConfig(
                "n_heads · head_dim must equal d_model".into(),
            ));
        }
        Ok(())
    }
}

/// Fractions of attention heads and MLP units kept by a nested sub-network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Granularity {
    pub f_head: f64,
    pub f_mlp: f64,
}

pub const FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

impl Granularity {
    pub const FULL: Granularity = Granularity {
        f_head: 1.0,
        f_mlp: 1.0,
    };

    pub fn new(f_head: f64, f_mlp: f64) -> Result<Self> {
        for f in [f_head, f_mlp] {
            if !FRACTIONS.contains(&f) {
                return Err(Error::InvalidArgument(format!(
                    "granularity fraction {f} not in {{0.25, 0.5, 0.75, 1.0}}"
                )));
            }
        }
        Ok(Granularity { f_head, f_mlp })
    }

    /// All 16 `(f_head, f_mlp)` pairs.
    pub fn grid() -> Vec<Granularity> {
        FRACTIONS
            .iter()
            .flat_map(|&h| FRACTIONS.iter().map(move |&m| Granularity { f_head: h, f_mlp: m }))
            .collect()
    }

    pub fn is_full(&self) -> bool {
        self.f_head == 1.0 && self.f_mlp == 1.0
    }

    pub fn kept_heads(&self, n_heads: usize) -> Result<usize> {
        kept(self.f_head, n_heads, "heads")
    }

    pub fn kept_ff(&self, d_ff: usize) -> Result<usize> {
        kept(self.f_mlp, d_ff, "MLP units")
    }
}

fn kept(f: f64, n: usize, what: &str) -> Result<usize> {
    let k = f * n as f64;
    if !(f > 0.0 && f <= 1.0) || k.fract() != 0.0 || k < 1.0 {
        return Err(Error::InvalidArgument(format!(
            "fraction {f} of {n} {what} is not a whole positive count"
        )));
    }
    Ok(k as usize)
}
