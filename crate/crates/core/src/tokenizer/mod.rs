//! Byte-level BPE vocabularies, overlap measurement and embedding transplant.

mod bpe;
mod transplant;
mod vocab;

pub use bpe::{decode, decode_bytes, encode, encode_bytes, train_bpe, MIN_PAIR_COUNT};
pub use transplant::{build_transplant_plan, transplant_embeddings, TransplantPlan};
pub use vocab::{vocab_overlap, Special, Vocab};
