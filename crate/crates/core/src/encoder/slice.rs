use crate::error::Result;
use crate::tensor::Real;

use super::config::{EncoderConfig, Granularity};
use super::params::{LayerParams, ParamSet};

/// Physically extract the sub-network selected by `g` as a standalone model.
///
/// Running the result at full granularity computes the same function as
/// running the original at `g`.
pub fn slice_params<T: Real>(
    params: &ParamSet<T>,
    config: &EncoderConfig,
    g: Granularity,
) -> Result<(ParamSet<T>, EncoderConfig)> {
    params.check_shapes(config)?;
    let kh = g.kept_heads(config.n_heads)?;
    let kf = g.kept_ff(config.d_ff)?;
    let d = config.d_model;
    let inner = kh * config.head_dim;
    let sliced = ParamSet {
        tok_emb: params.tok_emb.clone(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerParams {
                attn_norm: l.attn_norm.clone(),
                wq: l.wq.block(d, inner),
                wk: l.wk.block(d, inner),
                wv: l.wv.block(d, inner),
                wo: l.wo.block(inner, d),
                ffn_norm: l.ffn_norm.clone(),
                w_gate: l.w_gate.block(d, kf),
                w_up: l.w_up.block(d, kf),
                w_down: l.w_down.block(kf, d),
            })
            .collect(),
        final_norm: params.final_norm.clone(),
    };
    let cfg = EncoderConfig {
        n_heads: kh,
        d_ff: kf,
        ..config.clone()
    };
    Ok((sliced, cfg))
}
