//! Stage presets. Token counts are at full scale; use
//! [`RunConfig::scaled_to`] for desk-sized runs.

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};

use super::curriculum::CurriculumSpec;
use super::optim::AdamConfig;
use super::run::{DataSection, RunConfig, StageSection};
use super::schedule::{ScheduleShape, ScheduleSpec};

const B: u64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    PretrainShort,
    PretrainLong,
    AnnealMatryoshka,
    AdaptLang,
    AdaptDomainLegal,
    AdaptDomainBiomed,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::PretrainShort,
        Preset::PretrainLong,
        Preset::AnnealMatryoshka,
        Preset::AdaptLang,
        Preset::AdaptDomainLegal,
        Preset::AdaptDomainBiomed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::PretrainShort => "pretrain-short",
            Preset::PretrainLong => "pretrain-long",
            Preset::AnnealMatryoshka => "anneal-matryoshka",
            Preset::AdaptLang => "adapt-lang",
            Preset::AdaptDomainLegal => "adapt-domain-legal",
            Preset::AdaptDomainBiomed => "adapt-domain-biomed",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown preset {name}")))
    }

    /// The preset applied to a desk-scale elastic model over `vocab_size` tokens.
    pub fn run_config(self, vocab_size: usize) -> RunConfig {
        // One WSD curve spans all three pre-training stages.
        let pretrain = ScheduleSpec {
            shape: ScheduleShape::Wsd,
            peak_lr: 1e-3,
            warmup_tokens: 3 * B,
            stable_tokens: 6_100 * B - 3 * B - 100 * B,
            decay_tokens: 100 * B,
            min_lr: 0.0,
        };
        let cosine = |peak_lr: f64, warmup: u64, decay: u64| ScheduleSpec {
            shape: ScheduleShape::WarmupCosine,
            peak_lr,
            warmup_tokens: warmup,
            stable_tokens: 0,
            decay_tokens: decay,
            min_lr: 0.0,
        };
        let (schedule, start, end, seq_len, long_rope, mlm, epochs, curriculum) = match self {
            Preset::PretrainShort => (pretrain, 0, 5_500 * B, 1024, false, (0.3, 0.1), None, CurriculumSpec::disabled()),
            Preset::PretrainLong => (pretrain, 5_500 * B, 6_000 * B, 8192, true, (0.3, 0.1), None, CurriculumSpec::disabled()),
            Preset::AnnealMatryoshka => {
                let decay_start = pretrain.decay_start();
                (pretrain, decay_start, 6_100 * B, 8192, true, (0.3, 0.1), None, CurriculumSpec::heads(Some(decay_start)))
            }
            Preset::AdaptLang => (
                ScheduleSpec {
                    shape: ScheduleShape::Wsd,
                    peak_lr: 4e-4,
                    warmup_tokens: 3 * B,
                    stable_tokens: 615 * B - 3 * B - 100 * B,
                    decay_tokens: 100 * B,
                    min_lr: 0.0,
                },
                0,
                615 * B,
                8192,
                true,
                (0.3, 0.1),
                None,
                CurriculumSpec::disabled(),
            ),
            Preset::AdaptDomainLegal => (cosine(3e-3, 9 * B, 81 * B), 0, 90 * B, 8192, true, (0.3, 0.3), Some(10), CurriculumSpec::disabled()),
            Preset::AdaptDomainBiomed => (
                cosine(2e-3, 2_400_000_000, 45_900_000_000),
                0,
                48_300_000_000,
                8192,
                true,
                (0.1, 0.1),
                Some(2),
                CurriculumSpec::disabled(),
            ),
        };
        let mut model = EncoderConfig::toy(vocab_size);
        model.max_len = model.max_len.max(seq_len);
        model.rope_theta_global = if long_rope { 160_000.0 } else { 10_000.0 };
        RunConfig {
            model,
            data: DataSection {
                seq_len,
                batch_size: 8,
                mlm_ws: mlm.0,
                mlm_decay: mlm.1,
                train: None,
                heldout: None,
                vocab: None,
            },
            schedule,
            curriculum,
            optimizer: AdamConfig::default(),
            stage: StageSection {
                name: self.name().to_string(),
                start_tokens: start,
                end_tokens: end,
                epochs,
            },
        }
    }
}
