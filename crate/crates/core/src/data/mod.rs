//! Document curation, packing into fixed-length rows, MLM target selection and
//! the packed-batch file format.

mod document;
mod mlm;
mod packfile;
mod packing;

pub use document::{
    dedup_exact, dedup_key, default_domain_mapping, domain_select, filter_domain,
    format_translation_pair, quality_filter, read_ndjson, write_ndjson, Document, DomainMapping,
    DEFAULT_QUALITY_THRESHOLD, DOMAIN_CLASSES,
};
pub use mlm::{apply_mlm, unmask, MASK_SHARE, RANDOM_SHARE};
pub use packfile::{PackFile, PACK_MAGIC, PACK_VERSION};
pub use packing::{boundary_mask, pack_documents, PackedRow, SegmentLayout, IGNORE_LABEL};
