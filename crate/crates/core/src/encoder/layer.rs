//! Pre-norm attention and GeGLU blocks with nested slicing, forward and
//! backward.
//!
//! A granularity keeps the first `f_head · H` heads (column prefix of Wq/Wk/Wv,
//! row prefix of Wo) and the first `f_mlp · d_ff` units (column prefix of
//! Wgate/Wup, row prefix of Wdown). Nothing is rescaled after slicing.

use crate::data::SegmentLayout;
use crate::error::Result;
use crate::tensor::{
    accum_xt_dy, dot, gelu, gelu_grad, matmul, matmul_wt, rms_norm, rms_norm_backward, Real,
};

use super::config::{AttentionKind, EncoderConfig, Granularity};
use super::params::LayerParams;
use super::rope::RopeTable;

/// Per-call context shared by every layer of one forward pass.
pub(crate) struct RowContext<'a, T> {
    pub layout: &'a SegmentLayout,
    pub positions: Vec<usize>,
    pub rope_local: RopeTable<T>,
    pub rope_global: RopeTable<T>,
}

impl<'a, T: Real> RowContext<'a, T> {
    pub fn new(config: &EncoderConfig, layout: &'a SegmentLayout) -> Result<Self> {
        let positions: Vec<usize> = (0..layout.seq_len())
            .map(|i| layout.position_in_segment(i))
            .collect();
        let max_pos = positions.iter().copied().max().map_or(1, |p| p + 1);
        Ok(RowContext {
            layout,
            positions,
            rope_local: RopeTable::new(config.rope_theta_local, config.head_dim, max_pos)?,
            rope_global: RopeTable::new(config.rope_theta_global, config.head_dim, max_pos)?,
        })
    }

    fn rope(&self, kind: AttentionKind) -> &RopeTable<T> {
        match kind {
            AttentionKind::Local => &self.rope_local,
            AttentionKind::Global => &self.rope_global,
        }
    }

    /// Key range `[lo, hi)` visible from query `i`, or `None` for PAD.
    fn key_range(&self, i: usize, kind: AttentionKind, window: usize) -> Option<(usize, usize)> {
        let (s, e) = self.layout.segment_range(i)?;
        Some(match kind {
            AttentionKind::Global => (s, e),
            AttentionKind::Local => (s.max(i.saturating_sub(window)), e.min(i + window + 1)),
        })
    }
}

pub(crate) struct AttnCache<T> {
    x: Vec<T>,
    inv: Vec<T>,
    h: Vec<T>,
    // head-major [kh][n][hd], after rotation
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    lse: Vec<T>,
    // token-major [n × kh·hd]
    ctx: Vec<T>,
    kh: usize,
    kind: AttentionKind,
}

fn to_head_major<T: Real>(t: &[T], n: usize, kh: usize, hd: usize) -> Vec<T> {
    let inner = kh * hd;
    let mut out = vec![T::zero(); n * inner];
    for i in 0..n {
        for h in 0..kh {
            out[(h * n + i) * hd..(h * n + i + 1) * hd]
                .copy_from_slice(&t[i * inner + h * hd..i * inner + (h + 1) * hd]);
        }
    }
    out
}

fn to_token_major<T: Real>(t: &[T], n: usize, kh: usize, hd: usize) -> Vec<T> {
    let inner = kh * hd;
    let mut out = vec![T::zero(); n * inner];
    for h in 0..kh {
        for i in 0..n {
            out[i * inner + h * hd..i * inner + (h + 1) * hd]
                .copy_from_slice(&t[(h * n + i) * hd..(h * n + i + 1) * hd]);
        }
    }
    out
}

pub(crate) fn attention_forward<T: Real>(
    x: &[T],
    p: &LayerParams<T>,
    g: Granularity,
    kind: AttentionKind,
    config: &EncoderConfig,
    ctx_row: &RowContext<'_, T>,
) -> Result<(Vec<T>, AttnCache<T>)> {
    let n = ctx_row.layout.seq_len();
    let d = config.d_model;
    let hd = config.head_dim;
    let a = config.attn_dim();
    let kh = g.kept_heads(config.n_heads)?;
    let inner = kh * hd;
    let eps = T::lit(config.norm_eps);
    let scale = T::one() / T::from_usize(hd).unwrap().sqrt();

    let (h, inv) = rms_norm(x, n, d, &p.attn_norm.data, eps);
    let mut q = to_head_major(&matmul(&h, n, d, &p.wq.data, a, inner), n, kh, hd);
    let mut k = to_head_major(&matmul(&h, n, d, &p.wk.data, a, inner), n, kh, hd);
    let v = to_head_major(&matmul(&h, n, d, &p.wv.data, a, inner), n, kh, hd);
    let rope = ctx_row.rope(kind);
    for hh in 0..kh {
        for i in 0..n {
            let off = (hh * n + i) * hd;
            rope.rotate(&mut q[off..off + hd], ctx_row.positions[i]);
            rope.rotate(&mut k[off..off + hd], ctx_row.positions[i]);
        }
    }

    let mut ctx = vec![T::zero(); n * inner];
    let mut lse = vec![T::zero(); kh * n];
    let mut scores: Vec<T> = Vec::new();
    for hh in 0..kh {
        let qh = &q[hh * n * hd..(hh + 1) * n * hd];
        let kh_ = &k[hh * n * hd..(hh + 1) * n * hd];
        let vh = &v[hh * n * hd..(hh + 1) * n * hd];
        for i in 0..n {
            let Some((lo, hi)) = ctx_row.key_range(i, kind, config.local_window) else {
                continue;
            };
            let qi = &qh[i * hd..(i + 1) * hd];
            scores.clear();
            let mut m = T::neg_infinity();
            for j in lo..hi {
                let s = dot(qi, &kh_[j * hd..(j + 1) * hd]) * scale;
                m = m.max(s);
                scores.push(s);
            }
            let mut sum = T::zero();
            let out = &mut ctx[i * inner + hh * hd..i * inner + (hh + 1) * hd];
            for (s, j) in scores.iter().zip(lo..hi) {
                let w = (*s - m).exp();
                sum += w;
                for (o, &vv) in out.iter_mut().zip(&vh[j * hd..(j + 1) * hd]) {
                    *o += w * vv;
                }
            }
            for o in out.iter_mut() {
                *o /= sum;
            }
            lse[hh * n + i] = m + sum.ln();
        }
    }

    let o = matmul(&ctx, n, inner, &p.wo.data, d, d);
    let out: Vec<T> = x.iter().zip(&o).map(|(&a, &b)| a + b).collect();
    Ok((
        out,
        AttnCache {
            x: x.to_vec(),
            inv,
            h,
            q,
            k,
            v,
            lse,
            ctx,
            kh,
            kind,
        },
    ))
}

pub(crate) fn attention_backward<T: Real>(
    c: &AttnCache<T>,
    dout: &[T],
    p: &LayerParams<T>,
    grads: &mut LayerParams<T>,
    config: &EncoderConfig,
    ctx_row: &RowContext<'_, T>,
) -> Vec<T> {
    let n = ctx_row.layout.seq_len();
    let d = config.d_model;
    let hd = config.head_dim;
    let a = config.attn_dim();
    let kh = c.kh;
    let inner = kh * hd;
    let scale = T::one() / T::from_usize(hd).unwrap().sqrt();

    accum_xt_dy(&c.ctx, n, inner, dout, d, &mut grads.wo.data, d);
    let dctx = matmul_wt(dout, n, d, &p.wo.data, d, inner);

    let mut dq = vec![T::zero(); n * inner];
    let mut dk = vec![T::zero(); n * inner];
    let mut dv = vec![T::zero(); n * inner];
    let mut probs: Vec<T> = Vec::new();
    for hh in 0..kh {
        let base = hh * n * hd;
        for i in 0..n {
            let Some((lo, hi)) = ctx_row.key_range(i, c.kind, config.local_window) else {
                continue;
            };
            let qi = &c.q[base + i * hd..base + (i + 1) * hd];
            let dci = &dctx[i * inner + hh * hd..i * inner + (hh + 1) * hd];
            let ci = &c.ctx[i * inner + hh * hd..i * inner + (hh + 1) * hd];
            let lse = c.lse[hh * n + i];
            let delta = dot(dci, ci);
            probs.clear();
            for j in lo..hi {
                let s = dot(qi, &c.k[base + j * hd..base + (j + 1) * hd]) * scale;
                probs.push((s - lse).exp());
            }
            let mut dqi = vec![T::zero(); hd];
            for (&pj, j) in probs.iter().zip(lo..hi) {
                let vj = &c.v[base + j * hd..base + (j + 1) * hd];
                let ds = pj * (dot(dci, vj) - delta) * scale;
                let kj = &c.k[base + j * hd..base + (j + 1) * hd];
                for t in 0..hd {
                    dqi[t] += ds * kj[t];
                    dk[base + j * hd + t] += ds * qi[t];
                    dv[base + j * hd + t] += pj * dci[t];
                }
            }
            for t in 0..hd {
                dq[base + i * hd + t] += dqi[t];
            }
        }
    }
    let rope = ctx_row.rope(c.kind);
    for hh in 0..kh {
        for i in 0..n {
            let off = (hh * n + i) * hd;
            rope.rotate_back(&mut dq[off..off + hd], ctx_row.positions[i]);
            rope.rotate_back(&mut dk[off..off + hd], ctx_row.positions[i]);
        }
    }
    let dq = to_token_major(&dq, n, kh, hd);
    let dk = to_token_major(&dk, n, kh, hd);
    let dv = to_token_major(&dv, n, kh, hd);
    accum_xt_dy(&c.h, n, d, &dq, inner, &mut grads.wq.data, a);
    accum_xt_dy(&c.h, n, d, &dk, inner, &mut grads.wk.data, a);
    accum_xt_dy(&c.h, n, d, &dv, inner, &mut grads.wv.data, a);
    let mut dh = matmul_wt(&dq, n, inner, &p.wq.data, a, d);
    for (w, dy) in [(&p.wk, &dk), (&p.wv, &dv)] {
        for (x, y) in dh.iter_mut().zip(matmul_wt(dy, n, inner, &w.data, a, d)) {
            *x += y;
        }
    }
    let dx_norm = rms_norm_backward(
        &c.x,
        n,
        d,
        &p.attn_norm.data,
        &c.inv,
        &dh,
        &mut grads.attn_norm.data,
    );
    dout.iter().zip(dx_norm).map(|(&a, b)| a + b).collect()
}

pub(crate) struct FfnCache<T> {
    x: Vec<T>,
    inv: Vec<T>,
    h: Vec<T>,
    a: Vec<T>,
    b: Vec<T>,
    z: Vec<T>,
    kf: usize,
}

pub(crate) fn ffn_forward<T: Real>(
    x: &[T],
    n: usize,
    p: &LayerParams<T>,
    g: Granularity,
    config: &EncoderConfig,
) -> Result<(Vec<T>, FfnCache<T>)> {
    let d = config.d_model;
    let f = config.d_ff;
    let kf = g.kept_ff(f)?;
    let (h, inv) = rms_norm(x, n, d, &p.ffn_norm.data, T::lit(config.norm_eps));
    let a = matmul(&h, n, d, &p.w_gate.data, f, kf);
    let b = matmul(&h, n, d, &p.w_up.data, f, kf);
    let z: Vec<T> = a.iter().zip(&b).map(|(&a, &b)| gelu(a) * b).collect();
    let y = matmul(&z, n, kf, &p.w_down.data, d, d);
    let out = x.iter().zip(&y).map(|(&a, &b)| a + b).collect();
    Ok((
        out,
        FfnCache {
            x: x.to_vec(),
            inv,
            h,
            a,
            b,
            z,
            kf,
        },
    ))
}

pub(crate) fn ffn_backward<T: Real>(
    c: &FfnCache<T>,
    dout: &[T],
    n: usize,
    p: &LayerParams<T>,
    grads: &mut LayerParams<T>,
    config: &EncoderConfig,
) -> Vec<T> {
    let d = config.d_model;
    let f = config.d_ff;
    let kf = c.kf;
    accum_xt_dy(&c.z, n, kf, dout, d, &mut grads.w_down.data, d);
    let dz = matmul_wt(dout, n, d, &p.w_down.data, d, kf);
    let mut da = vec![T::zero(); n * kf];
    let mut db = vec![T::zero(); n * kf];
    for t in 0..n * kf {
        da[t] = dz[t] * c.b[t] * gelu_grad(c.a[t]);
        db[t] = dz[t] * gelu(c.a[t]);
    }
    accum_xt_dy(&c.h, n, d, &da, kf, &mut grads.w_gate.data, f);
    accum_xt_dy(&c.h, n, d, &db, kf, &mut grads.w_up.data, f);
    let mut dh = matmul_wt(&da, n, kf, &p.w_gate.data, f, d);
    for (x, y) in dh.iter_mut().zip(matmul_wt(&db, n, kf, &p.w_up.data, f, d)) {
        *x += y;
    }
    let dx_norm = rms_norm_backward(&c.x, n, d, &p.ffn_norm.data, &c.inv, &dh, &mut grads.ffn_norm.data);
    dout.iter().zip(dx_norm).map(|(&a, b)| a + b).collect()
}

/// Pre-norm attention sub-block with residual, on an `[L × d_model]` input.
pub fn attention_block<T: Real>(
    x: &[T],
    layer: &LayerParams<T>,
    g: Granularity,
    layout: &SegmentLayout,
    kind: AttentionKind,
    config: &EncoderConfig,
) -> Result<Vec<T>> {
    let ctx = RowContext::new(config, layout)?;
    Ok(attention_forward(x, layer, g, kind, config, &ctx)?.0)
}

/// Pre-norm GeGLU sub-block with residual, on an `[L × d_model]` input.
pub fn geglu_ffn<T: Real>(
    x: &[T],
    layer: &LayerParams<T>,
    g: Granularity,
    config: &EncoderConfig,
) -> Result<Vec<T>> {
    let n = x.len() / config.d_model;
    Ok(ffn_forward(x, n, layer, g, config)?.0)
}
