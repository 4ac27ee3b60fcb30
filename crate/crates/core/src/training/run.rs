use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{apply_mlm, unmask, PackedRow};
use crate::encoder::{
    batch_loss_and_grad, mlm_loss, Checkpoint, EncoderConfig, Granularity, ParamSet,
};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};
use crate::tokenizer::Vocab;

use super::curriculum::CurriculumSpec;
use super::optim::{stable_adamw_step, AdamConfig, OptState};
use super::schedule::{Phase, ScheduleSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    pub seq_len: usize,
    pub batch_size: usize,
    /// Masking rate during warmup and stable phases.
    pub mlm_ws: f64,
    /// Masking rate once the schedule decays.
    pub mlm_decay: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heldout: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSection {
    pub name: String,
    /// Schedule position at which this stage begins.
    pub start_tokens: u64,
    /// Schedule position at which this stage stops.
    pub end_tokens: u64,
    /// Passes over the training rows; `None` cycles until `end_tokens`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: EncoderConfig,
    pub data: DataSection,
    pub schedule: ScheduleSpec,
    pub curriculum: CurriculumSpec,
    pub optimizer: AdamConfig,
    pub stage: StageSection,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        self.model.validate_elastic()?;
        self.schedule.validate()?;
        self.curriculum.validate()?;
        self.optimizer.validate()?;
        let d = &self.data;
        if d.seq_len < 8 || d.seq_len > self.model.max_len {
            return bad(format!("seq_len {} must lie in [8, max_len]", d.seq_len));
        }
        if d.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        for p in [d.mlm_ws, d.mlm_decay] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("masking rate {p} must lie in (0, 1)"));
            }
        }
        if self.stage.end_tokens <= self.stage.start_tokens {
            return bad("stage must end after it starts".into());
        }
        if self.stage.epochs == Some(0) {
            return bad("epochs must be positive".into());
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(json).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Shrink the stage to `tokens` tokens, scaling every schedule and
    /// curriculum token count by the same factor so the curve keeps its shape.
    pub fn scaled_to(&self, tokens: u64) -> RunConfig {
        let f = tokens as f64 / (self.stage.end_tokens - self.stage.start_tokens) as f64;
        let start = (self.stage.start_tokens as f64 * f).round() as u64;
        RunConfig {
            schedule: self.schedule.scaled(f),
            curriculum: self.curriculum.scaled(f),
            stage: StageSection {
                start_tokens: start,
                end_tokens: start + tokens,
                ..self.stage.clone()
            },
            ..self.clone()
        }
    }

    pub fn mlm_rate(&self, tokens_seen: u64) -> f64 {
        match self.schedule.phase(tokens_seen) {
            Phase::Warmup | Phase::Stable => self.data.mlm_ws,
            Phase::Decay | Phase::Done => self.data.mlm_decay,
        }
    }
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub tokens: u64,
    pub lr: f64,
    pub f_head: f64,
    pub f_mlp: f64,
    pub loss: f64,
}

/// Everything needed to resume training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState<T> {
    pub config: EncoderConfig,
    pub params: ParamSet<T>,
    pub opt: OptState<T>,
    pub tokens_seen: u64,
}

impl<T: Real> TrainState<T> {
    pub fn new(config: EncoderConfig, params: ParamSet<T>, hyper: AdamConfig) -> Self {
        let opt = OptState::new(&config, hyper);
        TrainState {
            config,
            params,
            opt,
            tokens_seen: 0,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint<T> {
        let mut ck = Checkpoint::new(self.config.clone(), self.params.clone());
        for (prefix, set) in [("opt.m.", &self.opt.m), ("opt.v.", &self.opt.v)] {
            for (name, t) in set.named() {
                ck.extra.push((format!("{prefix}{name}"), t.clone()));
            }
        }
        ck.meta = serde_json::json!({
            "tokens_seen": self.tokens_seen,
            "step": self.opt.step,
            "optimizer": self.opt.hyper,
        });
        ck
    }

    /// Rebuild from a checkpoint. Plain model checkpoints get fresh optimizer
    /// moments and `tokens_seen = 0`.
    pub fn from_checkpoint(ck: Checkpoint<T>, default_hyper: AdamConfig) -> Result<Self> {
        let mut state = TrainState::new(ck.config.clone(), ck.params, default_hyper);
        if ck.extra.is_empty() {
            return Ok(state);
        }
        let names = state.params.names();
        let mut moments = ck.extra.into_iter();
        for set in [&mut state.opt.m, &mut state.opt.v] {
            let mut tensors: Vec<Tensor<T>> = Vec::new();
            for name in &names {
                let (got, t) = moments
                    .next()
                    .ok_or_else(|| Error::Format("checkpoint has partial optimizer state".into()))?;
                if !got.ends_with(name.as_str()) || !got.starts_with("opt.") {
                    return Err(Error::Format(format!("unexpected optimizer tensor {got}")));
                }
                tensors.push(t);
            }
            *set = ParamSet::from_tensors(&state.config, tensors)?;
        }
        let meta = &ck.meta;
        let field = |k: &str| {
            meta.get(k)
                .and_then(|v| v.as_u64())
                .ok_or_else(|| Error::Format(format!("checkpoint meta lacks {k}")))
        };
        state.tokens_seen = field("tokens_seen")?;
        state.opt.step = field("step")?;
        state.opt.hyper = serde_json::from_value(meta["optimizer"].clone())
            .map_err(|e| Error::Format(format!("bad optimizer meta: {e}")))?;
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>, default_hyper: AdamConfig) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?, default_hyper)
    }
}

fn mlm_seed(seed: u64, step: u64, row: usize) -> u64 {
    seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (row as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Fresh MLM targets for `row`, restoring original ids first if it was
/// already masked.
fn remask(row: &PackedRow, rate: f64, seed: u64, vocab: &Vocab) -> Result<PackedRow> {
    if row.mask_positions.is_empty() {
        apply_mlm(row, rate, seed, vocab)
    } else {
        apply_mlm(&unmask(row), rate, seed, vocab)
    }
}

/// Train from `state.tokens_seen` (raised to the stage start if behind it)
/// until the stage ends or its epochs run out.
///
/// Masks are drawn per step at the rate the schedule phase calls for. Each
/// step's record is passed to `on_step` as it happens.
pub fn train_run<T: Real>(
    run: &RunConfig,
    state: &mut TrainState<T>,
    rows: &[PackedRow],
    vocab: &Vocab,
    seed: u64,
    mut on_step: impl FnMut(&MetricRecord) -> Result<()>,
) -> Result<Vec<MetricRecord>> {
    run.validate()?;
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no training rows".into()));
    }
    if state.config != run.model {
        return Err(Error::InvalidConfig("run model section differs from the state's model".into()));
    }
    if vocab.size() != run.model.vocab_size {
        return Err(Error::InvalidConfig(format!(
            "vocab has {} tokens, model expects {}",
            vocab.size(),
            run.model.vocab_size
        )));
    }
    state.tokens_seen = state.tokens_seen.max(run.stage.start_tokens);

    let b = run.data.batch_size;
    let mut order: Vec<usize> = Vec::new();
    let mut cursor = 0;
    let mut epoch = 0u32;
    let mut log = Vec::new();
    while state.tokens_seen < run.stage.end_tokens {
        let mut batch = Vec::with_capacity(b);
        let step = state.opt.step;
        let rate = run.mlm_rate(state.tokens_seen);
        while batch.len() < b {
            if cursor == order.len() {
                if run.stage.epochs.is_some_and(|e| epoch >= e) {
                    break;
                }
                order = (0..rows.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64)));
                cursor = 0;
                epoch += 1;
            }
            let i = order[cursor];
            cursor += 1;
            batch.push(remask(&rows[i], rate, mlm_seed(seed, step, batch.len()), vocab)?);
        }
        if batch.is_empty() {
            break;
        }
        if batch.iter().all(|r| r.mask_positions.is_empty()) {
            // nothing to score; count the tokens and move on
            state.tokens_seen += batch.iter().map(|r| r.token_count() as u64).sum::<u64>();
            continue;
        }
        let g = run.curriculum.next_granularity(step, state.tokens_seen);
        let lr = run.schedule.lr_at(state.tokens_seen);
        let (loss, grads) = batch_loss_and_grad(&state.config, &state.params, &batch, g)?;
        stable_adamw_step(&mut state.params, &grads, &mut state.opt, lr)?;
        state.tokens_seen += batch.iter().map(|r| r.token_count() as u64).sum::<u64>();
        let rec = MetricRecord {
            step,
            tokens: state.tokens_seen,
            lr,
            f_head: g.f_head,
            f_mlp: g.f_mlp,
            loss: loss.to_f64().unwrap(),
        };
        on_step(&rec)?;
        log.push(rec);
    }
    Ok(log)
}

/// Held-out masked-LM loss with masks fixed by `seed`, so different models
/// and granularities are scored on identical targets.
pub fn heldout_loss<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    rows: &[PackedRow],
    rate: f64,
    vocab: &Vocab,
    seed: u64,
    g: Granularity,
) -> Result<f64> {
    let masked = rows
        .iter()
        .enumerate()
        .map(|(i, r)| remask(r, rate, mlm_seed(seed, u64::MAX, i), vocab))
        .collect::<Result<Vec<_>>>()?;
    Ok(mlm_loss(config, params, &masked, g)?.to_f64().unwrap())
}
