//! Independent reference implementations used by the integration and
//! acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use elastic_core::data::{Document, PackedRow, IGNORE_LABEL};
use elastic_core::encoder::{EncoderConfig, ParamSet};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Quadratic dedup: keep a document unless an earlier kept one has the same
/// whitespace-normalized text.
pub fn dedup_oracle(docs: &[Document]) -> Vec<Document> {
    let norm = |t: &str| t.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut kept: Vec<Document> = Vec::new();
    for d in docs {
        if !kept.iter().any(|k| norm(&k.text) == norm(&d.text)) {
            kept.push(d.clone());
        }
    }
    kept
}

/// Argmax with explicit tie check over every class.
pub fn domain_oracle(probs: &BTreeMap<String, f64>, mapping: &BTreeMap<String, String>) -> Option<String> {
    for (class, &p) in probs {
        let unique_max = probs.iter().all(|(c, &q)| c == class || q < p);
        if unique_max {
            for (domain, mapped) in mapping {
                if mapped == class {
                    return Some(domain.clone());
                }
            }
            return None;
        }
    }
    None
}

/// `allowed(i, j)` by direct comparison of segment indices.
pub fn same_segment_oracle(boundaries: &[u32], seq_len: usize, i: usize, j: usize) -> bool {
    assert!(i < seq_len && j < seq_len);
    let seg = |p: usize| boundaries.iter().position(|&b| p < b as usize);
    match (seg(i), seg(j)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Piecewise learning-rate formulas evaluated directly.
pub fn lr_oracle(
    cosine: bool,
    peak: f64,
    min: f64,
    warmup: u64,
    stable: u64,
    decay: u64,
    t: u64,
) -> f64 {
    let t = t as f64;
    let (w, s, d) = (warmup as f64, stable as f64, decay as f64);
    if t < w {
        return peak * t / w;
    }
    let s = if cosine { 0.0 } else { s };
    if t < w + s {
        return peak;
    }
    if t >= w + s + d {
        return min;
    }
    let u = (t - w - s) / d;
    if cosine {
        min + (peak - min) * 0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    } else {
        min + (peak - min) * (1.0 - u.sqrt())
    }
}

/// Straight-line masked-LM forward in f64, written directly from the model
/// definition: nested loops, no shared kernels, rotary angles computed per
/// element. Returns `[L × V]` logits row by row.
pub fn reference_logits(
    config: &EncoderConfig,
    params: &ParamSet<f64>,
    ids: &[u32],
    boundaries: &[u32],
    f_head: f64,
    f_mlp: f64,
) -> Vec<Vec<f64>> {
    let n = ids.len();
    let d = config.d_model;
    let hd = config.head_dim;
    let kh = (f_head * config.n_heads as f64).round() as usize;
    let kf = (f_mlp * config.d_ff as f64).round() as usize;
    let a = config.n_heads * hd;
    let seg_of = |p: usize| boundaries.iter().position(|&b| p < b as usize);
    let seg_start = |p: usize| -> usize {
        let s = seg_of(p).unwrap();
        if s == 0 { 0 } else { boundaries[s - 1] as usize }
    };

    let norm = |v: &[f64], scale: &[f64]| -> Vec<f64> {
        let ms = v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
        let r = 1.0 / (ms + config.norm_eps).sqrt();
        v.iter().zip(scale).map(|(x, s)| x * r * s).collect()
    };
    let rotate = |v: &mut [f64], pos: usize, theta: f64| {
        let half = v.len() / 2;
        for i in 0..half {
            let ang = pos as f64 / theta.powf(2.0 * i as f64 / v.len() as f64);
            let (x, y) = (v[i], v[i + half]);
            v[i] = x * ang.cos() - y * ang.sin();
            v[i + half] = x * ang.sin() + y * ang.cos();
        }
    };
    let gelu = |x: f64| {
        0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x * x * x)).tanh())
    };

    let mut x: Vec<Vec<f64>> = ids
        .iter()
        .map(|&t| params.tok_emb.data[t as usize * d..(t as usize + 1) * d].to_vec())
        .collect();
    for (l, p) in params.layers.iter().enumerate() {
        let global = l % config.global_period == 0;
        let theta = if global { config.rope_theta_global } else { config.rope_theta_local };
        let h: Vec<Vec<f64>> = x.iter().map(|r| norm(r, &p.attn_norm.data)).collect();
        let proj = |w: &[f64], head: usize, i: usize| -> Vec<f64> {
            (0..hd)
                .map(|c| (0..d).map(|k| h[i][k] * w[k * a + head * hd + c]).sum())
                .collect()
        };
        let mut attn_out = vec![vec![0.0; d]; n];
        for i in 0..n {
            if seg_of(i).is_none() {
                continue;
            }
            let mut concat = vec![0.0; kh * hd];
            for head in 0..kh {
                let mut q = proj(&p.wq.data, head, i);
                rotate(&mut q, i - seg_start(i), theta);
                let mut scores = Vec::new();
                for j in 0..n {
                    let same = seg_of(j) == seg_of(i);
                    let near = global || i.abs_diff(j) <= config.local_window;
                    if !(same && near) {
                        continue;
                    }
                    let mut k = proj(&p.wk.data, head, j);
                    rotate(&mut k, j - seg_start(j), theta);
                    let s: f64 = q.iter().zip(&k).map(|(u, v)| u * v).sum::<f64>() / (hd as f64).sqrt();
                    scores.push((j, s));
                }
                let m = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = scores.iter().map(|s| (s.1 - m).exp()).sum();
                for &(j, s) in &scores {
                    let v = proj(&p.wv.data, head, j);
                    for c in 0..hd {
                        concat[head * hd + c] += (s - m).exp() / z * v[c];
                    }
                }
            }
            for o in 0..d {
                attn_out[i][o] = (0..kh * hd).map(|r| concat[r] * p.wo.data[r * d + o]).sum();
            }
        }
        for i in 0..n {
            for o in 0..d {
                x[i][o] += attn_out[i][o];
            }
        }
        for row in x.iter_mut() {
            let h = norm(row, &p.ffn_norm.data);
            let f = config.d_ff;
            let act: Vec<f64> = (0..kf)
                .map(|u| {
                    let gate: f64 = (0..d).map(|k| h[k] * p.w_gate.data[k * f + u]).sum();
                    let up: f64 = (0..d).map(|k| h[k] * p.w_up.data[k * f + u]).sum();
                    gelu(gate) * up
                })
                .collect();
            for o in 0..d {
                row[o] += (0..kf).map(|u| act[u] * p.w_down.data[u * d + o]).sum::<f64>();
            }
        }
    }
    x.iter()
        .map(|r| {
            let h = norm(r, &params.final_norm.data);
            (0..config.vocab_size)
                .map(|t| (0..d).map(|k| h[k] * params.tok_emb.data[t * d + k]).sum())
                .collect()
        })
        .collect()
}

/// Random packed row: `segments` contiguous documents covering `content`
/// positions, PAD (id 0) after that, and `masks` labelled positions inside
/// the content.
pub fn random_row(
    rng: &mut ChaCha8Rng,
    vocab_size: usize,
    seq_len: usize,
    segments: usize,
    content: usize,
    masks: usize,
) -> PackedRow {
    assert!(segments >= 1 && segments <= content && content <= seq_len && masks <= content);
    let mut cuts: Vec<u32> = rand::seq::index::sample(rng, content - 1, segments - 1)
        .into_iter()
        .map(|c| c as u32 + 1)
        .collect();
    cuts.push(content as u32);
    cuts.sort_unstable();
    let mut ids: Vec<u32> = (0..content).map(|_| rng.gen_range(0..vocab_size as u32)).collect();
    ids.resize(seq_len, 0);
    let mut mask_positions: Vec<u32> = rand::seq::index::sample(rng, content, masks)
        .into_iter()
        .map(|p| p as u32)
        .collect();
    mask_positions.sort_unstable();
    let mut labels = vec![IGNORE_LABEL; seq_len];
    for &p in &mask_positions {
        labels[p as usize] = rng.gen_range(0..vocab_size as i32);
    }
    let row = PackedRow { ids, boundaries: cuts, mask_positions, labels };
    row.validate().unwrap();
    row
}
