use crate::data::{PackedRow, SegmentLayout, IGNORE_LABEL};
use crate::error::{invalid, Error, Result};
use crate::tensor::{dot, rms_norm, rms_norm_backward, Real, Tensor};

use super::config::{EncoderConfig, Granularity};
use super::layer::{
    attention_backward, attention_forward, ffn_backward, ffn_forward, AttnCache, FfnCache,
    RowContext,
};
use super::params::ParamSet;

#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    /// `[L × V]`.
    pub logits: Tensor<T>,
    /// Residual stream after the embedding and after every layer, each `[L × d_model]`.
    pub hidden_states: Vec<Tensor<T>>,
}

struct RowPass<'a, T> {
    ctx: RowContext<'a, T>,
    caches: Vec<(AttnCache<T>, FfnCache<T>)>,
    hidden_states: Vec<Tensor<T>>,
    last: Vec<T>,
    normed: Vec<T>,
    inv: Vec<T>,
}

fn check_ids(config: &EncoderConfig, ids: &[u32]) -> Result<()> {
    if let Some(bad) = ids.iter().find(|&&i| i as usize >= config.vocab_size) {
        return Err(Error::InvalidArgument(format!(
            "token id {bad} outside vocabulary of {}",
            config.vocab_size
        )));
    }
    if ids.len() > config.max_len {
        return invalid(format!("row of {} exceeds max_len {}", ids.len(), config.max_len));
    }
    Ok(())
}

fn run_layers<'a, T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    ids: &[u32],
    layout: &'a SegmentLayout,
    g: Granularity,
    keep_caches: bool,
) -> Result<RowPass<'a, T>> {
    config.validate()?;
    check_ids(config, ids)?;
    if layout.seq_len() != ids.len() {
        return Err(Error::Shape("layout length differs from row length".into()));
    }
    let n = ids.len();
    let d = config.d_model;
    let ctx = RowContext::new(config, layout)?;
    let mut x = Vec::with_capacity(n * d);
    for &id in ids {
        x.extend_from_slice(params.tok_emb.row(id as usize));
    }
    let mut hidden_states = vec![Tensor::from_vec(&[n, d], x.clone())];
    let mut caches = Vec::new();
    for (l, p) in params.layers.iter().enumerate() {
        let kind = config.layer_kind(l);
        let (x1, ac) = attention_forward(&x, p, g, kind, config, &ctx)?;
        let (x2, fc) = ffn_forward(&x1, n, p, g, config)?;
        if keep_caches {
            caches.push((ac, fc));
        }
        x = x2;
        hidden_states.push(Tensor::from_vec(&[n, d], x.clone()));
    }
    let (normed, inv) = rms_norm(&x, n, d, &params.final_norm.data, T::lit(config.norm_eps));
    Ok(RowPass {
        ctx,
        caches,
        hidden_states,
        last: x,
        normed,
        inv,
    })
}

/// Full masked-LM forward pass at granularity `g`.
pub fn forward_mlm<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    row: &PackedRow,
    g: Granularity,
) -> Result<ForwardTrace<T>> {
    let layout = row.layout()?;
    let pass = run_layers(config, params, &row.ids, &layout, g, false)?;
    let n = row.seq_len();
    let v = config.vocab_size;
    let d = config.d_model;
    let mut logits = Vec::with_capacity(n * v);
    for i in 0..n {
        let hi = &pass.normed[i * d..(i + 1) * d];
        for t in 0..v {
            logits.push(dot(hi, params.tok_emb.row(t)));
        }
    }
    Ok(ForwardTrace {
        logits: Tensor::from_vec(&[n, v], logits),
        hidden_states: pass.hidden_states,
    })
}

/// Encoder output without the LM head: final-norm hidden states, `[L × d_model]`.
pub fn forward_hidden<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    row: &PackedRow,
    g: Granularity,
) -> Result<Tensor<T>> {
    let layout = row.layout()?;
    let pass = run_layers(config, params, &row.ids, &layout, g, false)?;
    Ok(Tensor::from_vec(&[row.seq_len(), config.d_model], pass.normed))
}

/// Sum of cross-entropies over the row's masked positions, and its gradient
/// scaled by `grad_scale`, accumulated into `grads`. Returns `(loss_sum, count)`.
pub(crate) fn row_loss_and_grad<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    row: &PackedRow,
    g: Granularity,
    grad_scale: T,
    grads: &mut ParamSet<T>,
) -> Result<(T, usize)> {
    let layout = row.layout()?;
    if row.labels.len() != row.seq_len() {
        return Err(Error::Shape("labels length differs from row length".into()));
    }
    let targets: Vec<(usize, usize)> = row
        .labels
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != IGNORE_LABEL)
        .map(|(i, &l)| (i, l as usize))
        .collect();
    if targets.is_empty() {
        return Ok((T::zero(), 0));
    }
    if let Some(&(_, bad)) = targets.iter().find(|(_, l)| *l >= config.vocab_size) {
        return invalid(format!("label {bad} outside vocabulary"));
    }
    let pass = run_layers(config, params, &row.ids, &layout, g, true)?;
    let n = row.seq_len();
    let d = config.d_model;
    let v = config.vocab_size;

    let mut loss = T::zero();
    let mut dnormed = vec![T::zero(); n * d];
    let mut logits = vec![T::zero(); v];
    for &(i, label) in &targets {
        let hi = &pass.normed[i * d..(i + 1) * d];
        let mut m = T::neg_infinity();
        for (t, l) in logits.iter_mut().enumerate() {
            *l = dot(hi, params.tok_emb.row(t));
            m = m.max(*l);
        }
        let sum: T = logits.iter().map(|&l| (l - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - logits[label];
        // d loss / d logit = softmax − onehot
        let dhi = &mut dnormed[i * d..(i + 1) * d];
        for (t, &l) in logits.iter().enumerate() {
            let mut dl = (l - lse).exp();
            if t == label {
                dl -= T::one();
            }
            let dl = dl * grad_scale;
            if dl == T::zero() {
                continue;
            }
            let e = params.tok_emb.row(t);
            let ge = grads.tok_emb.row_mut(t);
            for k in 0..d {
                dhi[k] += dl * e[k];
                ge[k] += dl * hi[k];
            }
        }
    }

    let mut dx = rms_norm_backward(
        &pass.last,
        n,
        d,
        &params.final_norm.data,
        &pass.inv,
        &dnormed,
        &mut grads.final_norm.data,
    );
    for (l, (ac, fc)) in pass.caches.iter().enumerate().rev() {
        let p = &params.layers[l];
        let gl = &mut grads.layers[l];
        let dmid = ffn_backward(fc, &dx, n, p, gl, config);
        dx = attention_backward(ac, &dmid, p, gl, config, &pass.ctx);
    }
    for (i, &id) in row.ids.iter().enumerate() {
        let ge = grads.tok_emb.row_mut(id as usize);
        for (g, &x) in ge.iter_mut().zip(&dx[i * d..(i + 1) * d]) {
            *g += x;
        }
    }
    Ok((loss, targets.len()))
}

/// Mean cross-entropy over masked positions and its exact gradient.
pub fn mlm_loss_and_grad<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    row: &PackedRow,
    g: Granularity,
) -> Result<(T, ParamSet<T>)> {
    batch_loss_and_grad(config, params, std::slice::from_ref(row), g)
}

/// Mean cross-entropy over all masked positions of a batch. Rows are processed
/// in parallel and reduced in row order.
pub fn batch_loss_and_grad<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    rows: &[PackedRow],
    g: Granularity,
) -> Result<(T, ParamSet<T>)> {
    use rayon::prelude::*;

    let total: usize = rows
        .iter()
        .map(|r| r.labels.iter().filter(|&&l| l != IGNORE_LABEL).count())
        .sum();
    if total == 0 {
        return invalid("no masked positions to score");
    }
    let scale = T::one() / T::from_usize(total).unwrap();
    let parts: Vec<Result<(T, ParamSet<T>)>> = rows
        .par_iter()
        .map(|row| {
            let mut grads = ParamSet::zeros(config);
            let (loss, _) = row_loss_and_grad(config, params, row, g, scale, &mut grads)?;
            Ok((loss, grads))
        })
        .collect();
    let mut loss = T::zero();
    let mut grads: Option<ParamSet<T>> = None;
    for part in parts {
        let (l, gr) = part?;
        loss += l;
        match grads.as_mut() {
            None => grads = Some(gr),
            Some(acc) => acc.add_assign(&gr),
        }
    }
    let loss = loss * scale;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, grads.unwrap()))
}

/// Mean masked-LM loss without gradients.
pub fn mlm_loss<T: Real>(
    config: &EncoderConfig,
    params: &ParamSet<T>,
    rows: &[PackedRow],
    g: Granularity,
) -> Result<T> {
    use rayon::prelude::*;

    let parts: Vec<Result<(T, usize)>> = rows
        .par_iter()
        .map(|row| {
            let targets: Vec<(usize, usize)> = row
                .labels
                .iter()
                .enumerate()
                .filter(|(_, &l)| l != IGNORE_LABEL)
                .map(|(i, &l)| (i, l as usize))
                .collect();
            if targets.is_empty() {
                return Ok((T::zero(), 0));
            }
            let layout = row.layout()?;
            let pass = run_layers(config, params, &row.ids, &layout, g, false)?;
            let d = config.d_model;
            let mut loss = T::zero();
            for &(i, label) in &targets {
                let hi = &pass.normed[i * d..(i + 1) * d];
                let logits: Vec<T> = (0..config.vocab_size)
                    .map(|t| dot(hi, params.tok_emb.row(t)))
                    .collect();
                let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + logits.iter().map(|&l| (l - m).exp()).sum::<T>().ln();
                loss += lse - logits[label];
            }
            Ok((loss, targets.len()))
        })
        .collect();
    let mut loss = T::zero();
    let mut count = 0;
    for p in parts {
        let (l, c) = p?;
        loss += l;
        count += c;
    }
    if count == 0 {
        return invalid("no masked positions to score");
    }
    Ok(loss / T::from_usize(count).unwrap())
}
