//! Document packing into fixed-length rows and the attention layout those rows
//! imply.

use crate::error::{invalid, Error, Result};
use crate::tokenizer::{Special, Vocab};

/// Label value at positions that carry no MLM target.
pub const IGNORE_LABEL: i32 = -1;

/// One packed row of `seq_len` ids.
///
/// Each document occupies `BOS doc EOS`; `boundaries` holds the exclusive end
/// offset of every such segment. Positions past the last boundary are PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedRow {
    pub ids: Vec<u32>,
    pub boundaries: Vec<u32>,
    pub mask_positions: Vec<u32>,
    /// Length `seq_len`; original id at masked positions, [`IGNORE_LABEL`] elsewhere.
    pub labels: Vec<i32>,
}

impl PackedRow {
    pub fn seq_len(&self) -> usize {
        self.ids.len()
    }

    /// A single-segment row with no PAD and no masks.
    pub fn unpacked(ids: Vec<u32>) -> Self {
        let n = ids.len();
        PackedRow {
            labels: vec![IGNORE_LABEL; n],
            ids,
            boundaries: vec![n as u32],
            mask_positions: Vec::new(),
        }
    }

    pub fn content_len(&self) -> usize {
        self.boundaries.last().copied().unwrap_or(0) as usize
    }

    pub fn layout(&self) -> Result<SegmentLayout> {
        SegmentLayout::from_boundaries(&self.boundaries, self.seq_len())
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.seq_len();
        if self.labels.len() != l {
            return Err(Error::Shape(format!(
                "labels length {} != seq_len {l}",
                self.labels.len()
            )));
        }
        self.layout()?;
        let mut prev = None;
        for &p in &self.mask_positions {
            if p as usize >= l || prev.is_some_and(|q| q >= p) {
                return invalid("mask positions must be increasing and inside the row");
            }
            prev = Some(p);
        }
        let labelled = self.labels.iter().filter(|&&v| v != IGNORE_LABEL).count();
        if labelled != self.mask_positions.len()
            || self
                .mask_positions
                .iter()
                .any(|&p| self.labels[p as usize] == IGNORE_LABEL)
        {
            return invalid("labels and mask positions disagree");
        }
        Ok(())
    }

    /// Number of non-PAD positions.
    pub fn token_count(&self) -> usize {
        self.content_len()
    }
}

/// Greedy first-fit packing in arrival order.
///
/// Documents longer than `seq_len − 2` are split into `seq_len − 2` chunks,
/// each packed as its own document.
pub fn pack_documents(streams: &[Vec<u32>], seq_len: usize, vocab: &Vocab) -> Result<Vec<PackedRow>> {
    if seq_len < 8 {
        return invalid(format!("sequence length {seq_len} is below 8"));
    }
    if streams.iter().any(Vec::is_empty) {
        return invalid("token streams must be non-empty");
    }
    let bos = vocab.special(Special::Bos);
    let eos = vocab.special(Special::Eos);
    let pad = vocab.special(Special::Pad);
    let cap = seq_len - 2;

    let mut rows: Vec<(Vec<u32>, Vec<u32>)> = Vec::new();
    for stream in streams {
        for chunk in stream.chunks(cap) {
            let need = chunk.len() + 2;
            let slot = rows.iter().position(|(ids, _)| seq_len - ids.len() >= need);
            let (ids, bounds) = match slot {
                Some(i) => &mut rows[i],
                None => {
                    rows.push((Vec::with_capacity(seq_len), Vec::new()));
                    rows.last_mut().unwrap()
                }
            };
            ids.push(bos);
            ids.extend_from_slice(chunk);
            ids.push(eos);
            bounds.push(ids.len() as u32);
        }
    }
    Ok(rows
        .into_iter()
        .map(|(mut ids, boundaries)| {
            ids.resize(seq_len, pad);
            PackedRow {
                ids,
                boundaries,
                mask_positions: Vec::new(),
                labels: vec![IGNORE_LABEL; seq_len],
            }
        })
        .collect())
}

/// Block-diagonal attention structure of a row: contiguous segments, then PAD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentLayout {
    seq_len: usize,
    segments: Vec<(usize, usize)>,
    segment_of: Vec<Option<u32>>,
}

impl SegmentLayout {
    pub fn from_boundaries(boundaries: &[u32], seq_len: usize) -> Result<Self> {
        let mut segments = Vec::with_capacity(boundaries.len());
        let mut segment_of = vec![None; seq_len];
        let mut start = 0usize;
        for (k, &b) in boundaries.iter().enumerate() {
            let end = b as usize;
            if end <= start || end > seq_len {
                return invalid(format!(
                    "boundaries must be strictly increasing within the row, got {boundaries:?}"
                ));
            }
            segment_of[start..end].fill(Some(k as u32));
            segments.push((start, end));
            start = end;
        }
        Ok(SegmentLayout {
            seq_len,
            segments,
            segment_of,
        })
    }

    /// One segment spanning the whole row.
    pub fn single(seq_len: usize) -> Self {
        SegmentLayout {
            seq_len,
            segments: vec![(0, seq_len)],
            segment_of: vec![Some(0); seq_len],
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn segments(&self) -> &[(usize, usize)] {
        &self.segments
    }

    /// `(start, end)` of the segment holding position `i`, or `None` for PAD.
    pub fn segment_range(&self, i: usize) -> Option<(usize, usize)> {
        self.segment_of[i].map(|k| self.segments[k as usize])
    }

    /// Position of `i` within its document; PAD positions report 0.
    pub fn position_in_segment(&self, i: usize) -> usize {
        self.segment_range(i).map_or(0, |(s, _)| i - s)
    }

    pub fn allowed(&self, i: usize, j: usize) -> bool {
        matches!((self.segment_of[i], self.segment_of[j]), (Some(a), Some(b)) if a == b)
    }

    /// Dense `L × L` predicate, row-major.
    pub fn to_matrix(&self) -> Vec<bool> {
        let l = self.seq_len;
        let mut m = vec![false; l * l];
        for &(s, e) in &self.segments {
            for i in s..e {
                m[i * l + s..i * l + e].fill(true);
            }
        }
        m
    }
}

/// Allowed-attention predicate for a packed row.
pub fn boundary_mask(row: &PackedRow) -> Result<SegmentLayout> {
    row.layout()
}
