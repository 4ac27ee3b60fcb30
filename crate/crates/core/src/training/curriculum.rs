use serde::{Deserialize, Serialize};

use crate::encoder::{Granularity, FRACTIONS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSpec {
    pub grid: Vec<Granularity>,
    /// First token count at which the grid is used; `None` never enables it.
    pub enable_from_token: Option<u64>,
}

impl CurriculumSpec {
    /// Full granularity throughout.
    pub fn disabled() -> Self {
        CurriculumSpec {
            grid: vec![Granularity::FULL],
            enable_from_token: None,
        }
    }

    /// Vary the attention head fraction, MLP at full width.
    pub fn heads(enable_from_token: Option<u64>) -> Self {
        CurriculumSpec {
            grid: FRACTIONS.iter().map(|&f| Granularity { f_head: f, f_mlp: 1.0 }).collect(),
            enable_from_token,
        }
    }

    /// Vary the MLP fraction, all heads kept.
    pub fn mlp(enable_from_token: Option<u64>) -> Self {
        CurriculumSpec {
            grid: FRACTIONS.iter().map(|&f| Granularity { f_head: 1.0, f_mlp: f }).collect(),
            enable_from_token,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidConfig("curriculum grid is empty".into()));
        }
        for g in &self.grid {
            Granularity::new(g.f_head, g.f_mlp).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    pub fn next_granularity(&self, step: u64, tokens_seen: u64) -> Granularity {
        match self.enable_from_token {
            Some(start) if tokens_seen >= start => {
                self.grid[(step % self.grid.len() as u64) as usize]
            }
            _ => Granularity::FULL,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        CurriculumSpec {
            grid: self.grid.clone(),
            enable_from_token: self
                .enable_from_token
                .map(|t| (t as f64 * factor).round() as u64),
        }
    }
}
