//! Embedding transplant from a source vocabulary to a new one.
//!
//! Tokens whose byte strings exist in both vocabularies keep their source row
//! verbatim. Every other target token is initialized as the mean of the source
//! rows of its source tokenization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::bpe::encode_bytes;
use super::vocab::Vocab;

#[derive(Debug, Clone, PartialEq)]
pub struct TransplantPlan {
    pub src_size: usize,
    pub dst_size: usize,
    /// `(src_id, dst_id)` for byte-identical tokens.
    pub shared: Vec<(u32, u32)>,
    /// `(dst_id, recipe)`; the recipe is the source tokenization of the token bytes.
    pub fresh: Vec<(u32, Vec<u32>)>,
    pub overlap: f64,
}

pub fn build_transplant_plan(src: &Vocab, dst: &Vocab) -> TransplantPlan {
    let mut shared = Vec::new();
    let mut fresh = Vec::new();
    for (dst_id, bytes) in dst.tokens().iter().enumerate() {
        match src.id_of(bytes) {
            Some(src_id) => shared.push((src_id, dst_id as u32)),
            None => fresh.push((dst_id as u32, encode_bytes(src, bytes))),
        }
    }
    let overlap = shared.len() as f64 / dst.size() as f64;
    TransplantPlan {
        src_size: src.size(),
        dst_size: dst.size(),
        shared,
        fresh,
        overlap,
    }
}

/// Build the `[dst_size × d]` embedding matrix for the target vocabulary.
///
/// Rows with an empty recipe are drawn from `N(0, σ²)` where `σ` is the mean
/// source row norm divided by `√d`.
pub fn transplant_embeddings<T: Real>(
    plan: &TransplantPlan,
    src_emb: &Tensor<T>,
    seed: u64,
) -> Result<Tensor<T>> {
    if src_emb.shape.len() != 2 || src_emb.rows() != plan.src_size {
        return Err(Error::Shape(format!(
            "source embedding has shape {:?}, expected [{} × d]",
            src_emb.shape, plan.src_size
        )));
    }
    let d = src_emb.cols();
    let mut out = Tensor::zeros(&[plan.dst_size, d]);
    for &(s, t) in &plan.shared {
        out.row_mut(t as usize).copy_from_slice(src_emb.row(s as usize));
    }

    let mean_norm = (0..plan.src_size)
        .map(|r| {
            let row = src_emb.row(r);
            row.iter().map(|&v| v * v).sum::<T>().sqrt().to_f64().unwrap()
        })
        .sum::<f64>()
        / plan.src_size.max(1) as f64;
    let sigma = mean_norm / (d as f64).sqrt();
    let normal = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for (t, recipe) in &plan.fresh {
        let row = out.row_mut(*t as usize);
        if recipe.is_empty() {
            for v in row.iter_mut() {
                *v = T::lit(normal.sample(&mut rng));
            }
            continue;
        }
        for &s in recipe {
            if s as usize >= plan.src_size {
                return Err(Error::Shape(format!("recipe id {s} outside source vocab")));
            }
            for (o, &v) in row.iter_mut().zip(src_emb.row(s as usize)) {
                *o += v;
            }
        }
        let n = T::from_usize(recipe.len()).unwrap();
        for o in row.iter_mut() {
            *o /= n;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{train_bpe, vocab_overlap};

    fn emb(rows: usize, d: usize) -> Tensor<f32> {
        Tensor::from_vec(
            &[rows, d],
            (0..rows * d).map(|i| ((i * 7919) % 113) as f32 * 0.01 - 0.5).collect(),
        )
    }

    #[test]
    fn identity_plan_is_bit_identical() {
        let v = train_bpe(&["hello hello world world"], 270).unwrap();
        let plan = build_transplant_plan(&v, &v);
        assert!(plan.fresh.is_empty());
        assert_eq!(plan.overlap, 1.0);
        let e = emb(v.size(), 5);
        let out = transplant_embeddings(&plan, &e, 0).unwrap();
        assert_eq!(out, e);
    }

    #[test]
    fn fresh_token_is_mean_of_its_source_pieces() {
        let src = Vocab::byte_level();
        let dst = train_bpe(&["ab ab ab"], 263).unwrap();
        let ab = dst.id_of(b"ab").unwrap();
        let plan = build_transplant_plan(&src, &dst);
        let (_, recipe) = plan.fresh.iter().find(|(t, _)| *t == ab).unwrap();
        assert_eq!(recipe, &vec![b'a' as u32, b'b' as u32]);

        let e = emb(src.size(), 4);
        let out = transplant_embeddings(&plan, &e, 0).unwrap();
        for k in 0..4 {
            let expect = (e.row(b'a' as usize)[k] + e.row(b'b' as usize)[k]) / 2.0;
            assert_eq!(out.row(ab as usize)[k], expect);
        }
        assert!((plan.overlap - vocab_overlap(&src, &dst)).abs() == 0.0);
    }

    #[test]
    fn empty_recipe_draws_from_matched_gaussian() {
        let plan = TransplantPlan {
            src_size: 2,
            dst_size: 1,
            shared: vec![],
            fresh: vec![(0, vec![])],
            overlap: 0.0,
        };
        let e = Tensor::from_vec(&[2, 4096], vec![0.5f64; 2 * 4096]);
        let out = transplant_embeddings(&plan, &e, 3).unwrap();
        // mean row norm = 0.5·√d → σ = 0.5
        let var: f64 = out.data.iter().map(|v| v * v).sum::<f64>() / 4096.0;
        assert!((var.sqrt() - 0.5).abs() < 0.03, "std {}", var.sqrt());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let v = Vocab::byte_level();
        let plan = build_transplant_plan(&v, &v);
        assert!(transplant_embeddings(&plan, &emb(10, 3), 0).is_err());
    }
}
