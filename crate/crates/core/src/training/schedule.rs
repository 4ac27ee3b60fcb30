use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleShape {
    /// Warmup, constant plateau, then `1 − √u` decay.
    Wsd,
    /// Warmup straight into a half-cosine decay.
    WarmupCosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Stable,
    Decay,
    Done,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub shape: ScheduleShape,
    pub peak_lr: f64,
    pub warmup_tokens: u64,
    /// Ignored by the cosine shape.
    #[serde(default)]
    pub stable_tokens: u64,
    pub decay_tokens: u64,
    #[serde(default)]
    pub min_lr: f64,
}

impl ScheduleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_lr >= 0.0 && self.peak_lr > self.min_lr && self.peak_lr.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "schedule needs peak_lr > min_lr >= 0 (got {} and {})",
                self.peak_lr, self.min_lr
            )));
        }
        Ok(())
    }

    fn plateau(&self) -> u64 {
        match self.shape {
            ScheduleShape::Wsd => self.stable_tokens,
            ScheduleShape::WarmupCosine => 0,
        }
    }

    pub fn decay_start(&self) -> u64 {
        self.warmup_tokens + self.plateau()
    }

    pub fn end(&self) -> u64 {
        self.decay_start() + self.decay_tokens
    }

    pub fn phase(&self, tokens_seen: u64) -> Phase {
        if tokens_seen < self.warmup_tokens {
            Phase::Warmup
        } else if tokens_seen < self.decay_start() {
            Phase::Stable
        } else if tokens_seen < self.end() {
            Phase::Decay
        } else {
            Phase::Done
        }
    }

    pub fn lr_at(&self, tokens_seen: u64) -> f64 {
        let (peak, min) = (self.peak_lr, self.min_lr);
        match self.phase(tokens_seen) {
            Phase::Warmup => peak * tokens_seen as f64 / self.warmup_tokens as f64,
            Phase::Stable => peak,
            Phase::Done => min,
            Phase::Decay => {
                let u = (tokens_seen - self.decay_start()) as f64 / self.decay_tokens as f64;
                let frac = match self.shape {
                    ScheduleShape::Wsd => 1.0 - u.sqrt(),
                    ScheduleShape::WarmupCosine => 0.5 * (1.0 + (std::f64::consts::PI * u).cos()),
                };
                min + (peak - min) * frac
            }
        }
    }

    /// Multiply every token count by `factor`, keeping the shape. Phase
    /// boundaries are rounded cumulatively so they land on the scaled
    /// positions of the original boundaries.
    pub fn scaled(&self, factor: f64) -> ScheduleSpec {
        let s = |t: u64| (t as f64 * factor).round() as u64;
        let warmup = s(self.warmup_tokens);
        let decay_start = s(self.warmup_tokens + self.stable_tokens).max(warmup);
        let end = s(self.warmup_tokens + self.stable_tokens + self.decay_tokens).max(decay_start);
        ScheduleSpec {
            warmup_tokens: warmup,
            stable_tokens: decay_start - warmup,
            decay_tokens: end - decay_start,
            ..self.clone()
        }
    }
}
