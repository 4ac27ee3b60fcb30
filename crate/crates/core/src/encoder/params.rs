use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

use super::config::{EncoderConfig, Granularity};

pub const INIT_STD: f64 = 0.02;

/// Weights of one encoder layer. Projections are `[in × out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub ffn_norm: Tensor<T>,
    pub w_gate: Tensor<T>,
    pub w_up: Tensor<T>,
    pub w_down: Tensor<T>,
}

/// All encoder weights. The LM head is tied to `tok_emb`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tok_emb: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_norm: Tensor<T>,
}

const LAYER_FIELDS: [&str; 9] = [
    "attn_norm", "wq", "wk", "wv", "wo", "ffn_norm", "w_gate", "w_up", "w_down",
];

impl<T> LayerParams<T> {
    fn fields(&self) -> [&Tensor<T>; 9] {
        [
            &self.attn_norm,
            &self.wq,
            &self.wk,
            &self.wv,
            &self.wo,
            &self.ffn_norm,
            &self.w_gate,
            &self.w_up,
            &self.w_down,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.attn_norm,
            &mut self.wq,
            &mut self.wk,
            &mut self.wv,
            &mut self.wo,
            &mut self.ffn_norm,
            &mut self.w_gate,
            &mut self.w_up,
            &mut self.w_down,
        ]
    }
}

/// Canonical tensor shapes, in canonical order.
pub fn param_shapes(config: &EncoderConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.d_model;
    let a = config.attn_dim();
    let f = config.d_ff;
    let mut out = vec![("tok_emb".to_string(), vec![config.vocab_size, d])];
    for l in 0..config.n_layers {
        let shapes = [
            vec![d],
            vec![d, a],
            vec![d, a],
            vec![d, a],
            vec![a, d],
            vec![d],
            vec![d, f],
            vec![d, f],
            vec![f, d],
        ];
        for (name, shape) in LAYER_FIELDS.iter().zip(shapes) {
            out.push((format!("layers.{l}.{name}"), shape));
        }
    }
    out.push(("final_norm".to_string(), vec![d]));
    out
}

pub fn is_norm_name(name: &str) -> bool {
    name.ends_with("norm")
}

impl<T: Real> ParamSet<T> {
    /// Build from tensors in canonical order.
    pub fn from_tensors(config: &EncoderConfig, tensors: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = param_shapes(config);
        if tensors.len() != shapes.len() {
            return Err(Error::Shape(format!(
                "expected {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if &t.shape != shape {
                return Err(Error::Shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape
                )));
            }
        }
        let mut it = tensors.into_iter();
        let tok_emb = it.next().unwrap();
        let mut layers = Vec::with_capacity(config.n_layers);
        for _ in 0..config.n_layers {
            layers.push(LayerParams {
                attn_norm: it.next().unwrap(),
                wq: it.next().unwrap(),
                wk: it.next().unwrap(),
                wv: it.next().unwrap(),
                wo: it.next().unwrap(),
                ffn_norm: it.next().unwrap(),
                w_gate: it.next().unwrap(),
                w_up: it.next().unwrap(),
                w_down: it.next().unwrap(),
            });
        }
        let final_norm = it.next().unwrap();
        Ok(ParamSet {
            tok_emb,
            layers,
            final_norm,
        })
    }

    pub fn zeros(config: &EncoderConfig) -> Self {
        let tensors = param_shapes(config)
            .iter()
            .map(|(_, s)| Tensor::zeros(s))
            .collect();
        ParamSet::from_tensors(config, tensors).expect("canonical shapes")
    }

    /// Gaussian init (std 0.02, truncated at ±3σ) for matrices; unit norm scales.
    pub fn init(config: &EncoderConfig, seed: u64) -> Self {
        Self::init_with_std(config, seed, INIT_STD)
    }

    pub fn init_with_std(config: &EncoderConfig, seed: u64, std: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("positive std");
        let tensors = param_shapes(config)
            .iter()
            .map(|(name, shape)| {
                if is_norm_name(name) {
                    return Tensor::filled(shape, T::one());
                }
                let n = shape.iter().product();
                let data = (0..n)
                    .map(|_| loop {
                        let v: f64 = normal.sample(&mut rng);
                        if v.abs() <= 3.0 * std {
                            break T::lit(v);
                        }
                    })
                    .collect();
                Tensor::from_vec(shape, data)
            })
            .collect();
        ParamSet::from_tensors(config, tensors).expect("canonical shapes")
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.tok_emb];
        for l in &self.layers {
            out.extend(l.fields());
        }
        out.push(&self.final_norm);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.tok_emb];
        for l in &mut self.layers {
            out.extend(l.fields_mut());
        }
        out.push(&mut self.final_norm);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = vec!["tok_emb".to_string()];
        for l in 0..self.layers.len() {
            out.extend(LAYER_FIELDS.iter().map(|f| format!("layers.{l}.{f}")));
        }
        out.push("final_norm".to_string());
        out
    }

    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        self.names().into_iter().zip(self.tensors()).collect()
    }

    pub fn check_shapes(&self, config: &EncoderConfig) -> Result<()> {
        let shapes = param_shapes(config);
        let tensors = self.tensors();
        if tensors.len() != shapes.len() {
            return Err(Error::Shape("layer count does not match config".into()));
        }
        for ((name, shape), t) in shapes.iter().zip(tensors) {
            if &t.shape != shape {
                return Err(Error::Shape(format!(
                    "{name}: expected {shape:?}, got {:?}",
                    t.shape
                )));
            }
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.all_finite())
    }

    pub fn add_assign(&mut self, other: &ParamSet<T>) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            for x in &mut t.data {
                *x *= s;
            }
        }
    }

    pub fn convert<U: Real>(&self) -> ParamSet<U> {
        ParamSet {
            tok_emb: self.tok_emb.convert(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: l.attn_norm.convert(),
                    wq: l.wq.convert(),
                    wk: l.wk.convert(),
                    wv: l.wv.convert(),
                    wo: l.wo.convert(),
                    ffn_norm: l.ffn_norm.convert(),
                    w_gate: l.w_gate.convert(),
                    w_up: l.w_up.convert(),
                    w_down: l.w_down.convert(),
                })
                .collect(),
            final_norm: self.final_norm.convert(),
        }
    }
}

/// Flat indices of every parameter read by the forward pass at `g`, per
/// tensor in canonical order.
pub fn used_indices(config: &EncoderConfig, g: Granularity) -> Result<Vec<(String, Vec<usize>)>> {
    let kh = g.kept_heads(config.n_heads)?;
    let kf = g.kept_ff(config.d_ff)?;
    let inner = kh * config.head_dim;
    let a = config.attn_dim();
    let d = config.d_model;
    let f = config.d_ff;
    let cols = |rows: usize, stride: usize, keep: usize| -> Vec<usize> {
        (0..rows)
            .flat_map(|r| (0..keep).map(move |c| r * stride + c))
            .collect()
    };
    let prefix_rows = |keep: usize, stride: usize| -> Vec<usize> { (0..keep * stride).collect() };
    Ok(param_shapes(config)
        .into_iter()
        .map(|(name, shape)| {
            let field = name.rsplit('.').next().unwrap().to_string();
            let all: usize = shape.iter().product();
            let idx = match field.as_str() {
                "wq" | "wk" | "wv" => cols(d, a, inner),
                "wo" => prefix_rows(inner, d),
                "w_gate" | "w_up" => cols(d, f, kf),
                "w_down" => prefix_rows(kf, d),
                _ => (0..all).collect(),
            };
            (name, idx)
        })
        .collect())
}
