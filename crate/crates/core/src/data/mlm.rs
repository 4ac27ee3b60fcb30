use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::tokenizer::{Special, Vocab};

use super::packing::{PackedRow, IGNORE_LABEL};

/// Share of selected positions replaced by MASK; the remainder splits evenly
/// between a random regular token and the original token.
pub const MASK_SHARE: f64 = 0.8;
pub const RANDOM_SHARE: f64 = 0.1;

/// Select MLM targets in `row`.
///
/// Every position whose id is not a special token is selected independently
/// with probability `p`. Any masks already on the row are discarded; `row.ids`
/// must hold the original (unmasked) ids.
pub fn apply_mlm(row: &PackedRow, p: f64, seed: u64, vocab: &Vocab) -> Result<PackedRow> {
    if !(p > 0.0 && p < 1.0) {
        return invalid(format!("masking probability {p} must lie in (0, 1)"));
    }
    let regular = vocab.regular_ids();
    let mask_id = vocab.special(Special::Mask);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = row.clone();
    out.labels = vec![IGNORE_LABEL; row.seq_len()];
    out.mask_positions.clear();
    for (i, &id) in row.ids.iter().enumerate() {
        if vocab.is_special(id) {
            continue;
        }
        if rng.gen::<f64>() >= p {
            continue;
        }
        out.labels[i] = id as i32;
        out.mask_positions.push(i as u32);
        let r: f64 = rng.gen();
        if r < MASK_SHARE {
            out.ids[i] = mask_id;
        } else if r < MASK_SHARE + RANDOM_SHARE {
            out.ids[i] = regular[rng.gen_range(0..regular.len())];
        }
    }
    Ok(out)
}

/// Undo masking: put the original ids back and clear the targets.
pub fn unmask(row: &PackedRow) -> PackedRow {
    let mut out = row.clone();
    for &p in &row.mask_positions {
        out.ids[p as usize] = row.labels[p as usize] as u32;
    }
    out.labels.fill(IGNORE_LABEL);
    out.mask_positions.clear();
    out
}
