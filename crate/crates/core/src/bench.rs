//! Inference throughput across granularities.
//!
//! Every measurement slices the model with [`slice_params`] first, so the
//! timed network is physically smaller; there is no separate fast path.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PackedRow;
use crate::encoder::{forward_hidden, slice_params, EncoderConfig, Granularity, ParamSet};
use crate::error::{invalid, Error, Result};
use crate::tensor::Real;

/// Reference samples/s at 8,192 tokens for the head fractions 0.25..1.0,
/// measured on a single H100 at 308M parameters. Comparison only.
pub const REFERENCE_SAMPLES_PER_S: [(f64, f64); 4] = [(0.25, 34.2), (0.5, 23.4), (0.75, 17.7), (1.0, 14.2)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub f_head: f64,
    pub f_mlp: f64,
    pub seq_len: usize,
    pub batch: usize,
    pub samples_per_s: f64,
    pub wall_ms_p50: f64,
    pub wall_ms_p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub environment: String,
    pub repeats: usize,
    pub warmup_iters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub seq_len: usize,
    pub batch: usize,
    pub repeats: usize,
    pub warmup_iters: usize,
    pub seed: u64,
}

impl BenchSettings {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 5 {
            return invalid(format!("need at least 5 repeats, got {}", self.repeats));
        }
        if self.seq_len == 0 || self.batch == 0 {
            return invalid("seq_len and batch must be positive");
        }
        Ok(())
    }
}

pub fn environment() -> String {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!(
        "{}-{} cpus={cpus} timing=single-thread",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Linear-interpolation percentile of sorted samples.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Forward-only timing of the sub-network at `g` on uniform random
/// single-segment rows.
pub fn throughput<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    g: Granularity,
    s: &BenchSettings,
) -> Result<BenchRow> {
    s.validate()?;
    if s.seq_len > config.max_len {
        return invalid(format!("seq_len {} exceeds max_len {}", s.seq_len, config.max_len));
    }
    let (small, small_cfg) = slice_params(params, config, g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let batch: Vec<PackedRow> = (0..s.batch)
        .map(|_| {
            PackedRow::unpacked(
                (0..s.seq_len)
                    .map(|_| rng.gen_range(0..config.vocab_size as u32))
                    .collect(),
            )
        })
        .collect();
    let run = || -> Result<()> {
        for row in &batch {
            let h = forward_hidden(&small_cfg, &small, row, Granularity::FULL)?;
            std::hint::black_box(&h);
        }
        Ok(())
    };
    for _ in 0..s.warmup_iters {
        run()?;
    }
    let mut ms = Vec::with_capacity(s.repeats);
    for _ in 0..s.repeats {
        let t = Instant::now();
        run()?;
        ms.push(t.elapsed().as_secs_f64() * 1e3);
    }
    ms.sort_by(f64::total_cmp);
    let p50 = percentile(&ms, 0.5);
    Ok(BenchRow {
        f_head: g.f_head,
        f_mlp: g.f_mlp,
        seq_len: s.seq_len,
        batch: s.batch,
        samples_per_s: s.batch as f64 / (p50.max(1e-6) / 1e3),
        wall_ms_p50: p50,
        wall_ms_p90: percentile(&ms, 0.9),
    })
}

pub fn bench_grid<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    grid: &[Granularity],
    s: &BenchSettings,
) -> Result<BenchReport> {
    let rows = grid
        .iter()
        .map(|&g| throughput(config, params, g, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        rows,
        environment: environment(),
        repeats: s.repeats,
        warmup_iters: s.warmup_iters,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupRow {
    pub f_head: f64,
    pub f_mlp: f64,
    pub seq_len: usize,
    pub batch: usize,
    pub samples_per_s: f64,
    /// `samples_per_s / samples_per_s(1, 1)` at the same seq_len and batch.
    pub speedup: f64,
    /// The same ratio from the reference measurements, for head-only slices.
    pub reference_speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedupReport {
    pub rows: Vec<SpeedupRow>,
}

pub fn reference_speedup(f_head: f64, f_mlp: f64) -> Option<f64> {
    if f_mlp != 1.0 {
        return None;
    }
    let full = REFERENCE_SAMPLES_PER_S[3].1;
    REFERENCE_SAMPLES_PER_S
        .iter()
        .find(|(f, _)| *f == f_head)
        .map(|(_, s)| s / full)
}

/// Ratios against the full-granularity row with matching seq_len and batch.
pub fn speedup_report(report: &BenchReport) -> Result<SpeedupReport> {
    let rows = report
        .rows
        .iter()
        .map(|r| {
            let base = report
                .rows
                .iter()
                .find(|b| b.f_head == 1.0 && b.f_mlp == 1.0 && b.seq_len == r.seq_len && b.batch == r.batch)
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "no full-granularity baseline for seq_len {} batch {}",
                        r.seq_len, r.batch
                    ))
                })?;
            Ok(SpeedupRow {
                f_head: r.f_head,
                f_mlp: r.f_mlp,
                seq_len: r.seq_len,
                batch: r.batch,
                samples_per_s: r.samples_per_s,
                speedup: r.samples_per_s / base.samples_per_s,
                reference_speedup: reference_speedup(r.f_head, r.f_mlp),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeedupReport { rows })
}

impl SpeedupReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>6} {:>7} {:>5} {:>12} {:>8} {:>10}",
            "heads", "mlp", "seq", "batch", "samples/s", "speedup", "reference"
        );
        for r in &self.rows {
            let reference = r.reference_speedup.map_or("-".to_string(), |v| format!("{v:.2}x"));
            let _ = writeln!(
                out,
                "{:>6.2} {:>6.2} {:>7} {:>5} {:>12.3} {:>7.2}x {:>10}",
                r.f_head, r.f_mlp, r.seq_len, r.batch, r.samples_per_s, r.speedup, reference
            );
        }
        out
    }
}
