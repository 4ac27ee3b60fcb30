//! Dense row-major tensors and the handful of kernels the encoder needs.
//!
//! Matrices are stored `[rows × cols]` row-major. Weight matrices follow the
//! `x · W` convention (`W` is `[in × out]`), so slicing the output features of a
//! projection means taking a column prefix and slicing its input features
//! means taking a row prefix. All kernels take an explicit row stride so that
//! prefix slices can be read in place without copying.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// On-disk element type tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::F32 => 0,
            DType::F64 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::F32),
            1 => Some(DType::F64),
            _ => None,
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

/// Floating-point element type. `f32` is the default; `f64` exists for
/// gradient checking.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    const DTYPE: DType;

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("representable literal")
    }

    fn write_le(self, out: &mut Vec<u8>);

    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape {shape:?}"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row count of a 2-D tensor.
    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    /// Column count of a 2-D tensor.
    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[T] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Copy of the leading `rows × cols` block of a 2-D tensor.
    pub fn block(&self, rows: usize, cols: usize) -> Self {
        let stride = self.cols();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            data.extend_from_slice(&self.data[r * stride..r * stride + cols]);
        }
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn convert<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| U::from_f64(v.to_f64().unwrap()).unwrap())
                .collect(),
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// `x[n × d] · w[0..d, 0..cols]` where `w` has row stride `stride`.
pub fn matmul<T: Real>(x: &[T], n: usize, d: usize, w: &[T], stride: usize, cols: usize) -> Vec<T> {
    debug_assert_eq!(x.len(), n * d);
    debug_assert!(cols <= stride && w.len() >= d * stride);
    let mut out = vec![T::zero(); n * cols];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let oi = &mut out[i * cols..(i + 1) * cols];
        for (p, &xv) in xi.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let wp = &w[p * stride..p * stride + cols];
            for (o, &wv) in oi.iter_mut().zip(wp) {
                *o += xv * wv;
            }
        }
    }
    out
}

/// `dy[n × cols] · w[0..d, 0..cols]ᵀ`, the input gradient of [`matmul`].
pub fn matmul_wt<T: Real>(
    dy: &[T],
    n: usize,
    cols: usize,
    w: &[T],
    stride: usize,
    d: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); n * d];
    for i in 0..n {
        let dyi = &dy[i * cols..(i + 1) * cols];
        let oi = &mut out[i * d..(i + 1) * d];
        for (p, o) in oi.iter_mut().enumerate() {
            *o = dot(dyi, &w[p * stride..p * stride + cols]);
        }
    }
    out
}

/// `dw[0..d, 0..cols] += xᵀ · dy`, the weight gradient of [`matmul`].
pub fn accum_xt_dy<T: Real>(
    x: &[T],
    n: usize,
    d: usize,
    dy: &[T],
    cols: usize,
    dw: &mut [T],
    stride: usize,
) {
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let dyi = &dy[i * cols..(i + 1) * cols];
        for (p, &xv) in xi.iter().enumerate() {
            if xv == T::zero() {
                continue;
            }
            let row = &mut dw[p * stride..p * stride + cols];
            for (g, &dv) in row.iter_mut().zip(dyi) {
                *g += xv * dv;
            }
        }
    }
}

/// Normalized-and-scaled rows: `y = x / rms(x) ⊙ scale`. Returns `(y, inv_rms)`.
pub fn rms_norm<T: Real>(x: &[T], n: usize, d: usize, scale: &[T], eps: T) -> (Vec<T>, Vec<T>) {
    let mut y = vec![T::zero(); n * d];
    let mut inv = Vec::with_capacity(n);
    let dn = T::from_usize(d).unwrap();
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let ms = dot(xi, xi) / dn;
        let r = T::one() / (ms + eps).sqrt();
        inv.push(r);
        for ((o, &xv), &s) in y[i * d..(i + 1) * d].iter_mut().zip(xi).zip(scale) {
            *o = xv * r * s;
        }
    }
    (y, inv)
}

/// Backward of [`rms_norm`]: returns `dx` and accumulates into `dscale`.
pub fn rms_norm_backward<T: Real>(
    x: &[T],
    n: usize,
    d: usize,
    scale: &[T],
    inv: &[T],
    dy: &[T],
    dscale: &mut [T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); n * d];
    let dn = T::from_usize(d).unwrap();
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        let dyi = &dy[i * d..(i + 1) * d];
        let r = inv[i];
        // g = dy ⊙ scale; dx = r·g − r³/d · (g·x) x
        let mut gx = T::zero();
        for k in 0..d {
            let g = dyi[k] * scale[k];
            gx += g * xi[k];
            dscale[k] += dyi[k] * xi[k] * r;
        }
        let c = r * r * r * gx / dn;
        for k in 0..d {
            dx[i * d + k] = r * dyi[k] * scale[k] - c * xi[k];
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
pub fn gelu<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::lit(GELU_C);
    let a = T::lit(GELU_A);
    let half = T::lit(0.5);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let dinner = c * (T::one() + T::lit(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * dinner
}
