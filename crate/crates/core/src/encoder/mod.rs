//! The elastic encoder: token embeddings, alternating local/global rotary
//! attention confined to document segments, GeGLU feed-forward blocks, and a
//! tied LM head. Attention heads and MLP units can be sliced to nested
//! prefixes at run time or exported as a smaller standalone model.

mod checkpoint;
mod config;
mod layer;
mod model;
mod params;
mod rope;
mod slice;

pub use checkpoint::{Checkpoint, ELEN_MAGIC, ELEN_VERSION};
pub use config::{AttentionKind, EncoderConfig, Granularity, FRACTIONS};
pub use layer::{attention_block, geglu_ffn};
pub use model::{batch_loss_and_grad, forward_hidden, forward_mlm, mlm_loss, mlm_loss_and_grad, ForwardTrace};
pub use params::{is_norm_name, param_shapes, used_indices, LayerParams, ParamSet, INIT_STD};
pub use rope::{rope_apply, RopeTable};
pub use slice::slice_params;
