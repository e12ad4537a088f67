//! Dense f64 tensors with explicit forward/backward pairs.
//!
//! There is no computational-graph engine in this crate: every layer that
//! needs gradients implements its backward pass by hand, and each backward
//! is validated against central finite differences (see [`crate::gradcheck`]).
//! Training and tests run in f64; checkpoints store f32.

use std::sync::atomic::{AtomicU64, Ordering};
use thiserror::Error;

/// Floor applied to probabilities before taking logs, so degenerate
/// predictions produce a large finite loss instead of infinity.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    DimensionMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} implies {expected} elements, got {actual}")]
    ShapeDataMismatch {
        shape: Vec<usize>,
        expected: usize,
        actual: usize,
    },
    #[error("label {label} out of range for distribution of size {size}")]
    LabelOutOfRange { label: usize, size: usize },
    #[error("{op}: expected rank-{expected} tensor, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
}

// Live/peak byte counters over tensor buffers. The throughput benchmark
// reports the peak as its memory estimate; it is an allocation-counter
// approximation, not an OS RSS measurement.
static LIVE_BYTES: AtomicU64 = AtomicU64::new(0);
static PEAK_BYTES: AtomicU64 = AtomicU64::new(0);

fn track_alloc(bytes: u64) {
    let live = LIVE_BYTES.fetch_add(bytes, Ordering::Relaxed) + bytes;
    PEAK_BYTES.fetch_max(live, Ordering::Relaxed);
}

fn track_dealloc(bytes: u64) {
    LIVE_BYTES.fetch_sub(bytes, Ordering::Relaxed);
}

/// Bytes currently held by live tensor buffers.
pub fn live_tensor_bytes() -> u64 {
    LIVE_BYTES.load(Ordering::Relaxed)
}

/// High-water mark of [`live_tensor_bytes`] since start or the last reset.
pub fn peak_tensor_bytes() -> u64 {
    PEAK_BYTES.load(Ordering::Relaxed)
}

/// Resets the peak to the current live count.
pub fn reset_peak_tensor_bytes() {
    PEAK_BYTES.store(LIVE_BYTES.load(Ordering::Relaxed), Ordering::Relaxed);
}

/// Dense real tensor, row-major.
#[derive(Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        track_alloc((self.data.len() * 8) as u64);
        Tensor {
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
    }
}

impl Drop for Tensor {
    fn drop(&mut self) {
        track_dealloc((self.data.len() * 8) as u64);
    }
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                expected,
                actual: data.len(),
            });
        }
        track_alloc((data.len() * 8) as u64);
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        track_alloc((n * 8) as u64);
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        track_alloc((data.len() * 8) as u64);
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.shape[1] + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.shape[1] + col] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.shape[1];
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.shape[1];
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn is_matrix(&self) -> bool {
        self.shape.len() == 2
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), TensorError> {
        if self.shape != other.shape {
            return Err(TensorError::DimensionMismatch {
                op: "add_assign",
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Little-endian f64 bytes of the buffer, used for parameter digests.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len() * 8);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// Named value/gradient pair. `grad` always has the same shape as `value`
/// and is zeroed at the start of every optimizer step cycle.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape().to_vec());
        Parameter {
            name: name.into(),
            value,
            grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Standard matrix product of `a` [m×k] and `b` [k×n].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor, TensorError> {
    if !a.is_matrix() {
        return Err(TensorError::RankMismatch {
            op: "matmul",
            expected: 2,
            shape: a.shape().to_vec(),
        });
    }
    if !b.is_matrix() || a.cols() != b.rows() {
        return Err(TensorError::DimensionMismatch {
            op: "matmul",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out.data[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Ok(out)
}

/// Gradients of `matmul(a, b)` given upstream `d_out` [m×n]:
/// `dA = d_out·Bᵀ`, `dB = Aᵀ·d_out`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, d_out: &Tensor) -> (Tensor, Tensor) {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut da = Tensor::zeros(vec![m, k]);
    let mut db = Tensor::zeros(vec![k, n]);
    for i in 0..m {
        let drow = &d_out.data[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b.data[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += drow[j] * brow[j];
            }
            da.data[i * k + p] = acc;
        }
    }
    for p in 0..k {
        let dbrow = &mut db.data[p * n..(p + 1) * n];
        for i in 0..m {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let drow = &d_out.data[i * n..(i + 1) * n];
            for j in 0..n {
                dbrow[j] += av * drow[j];
            }
        }
    }
    (da, db)
}

/// Transpose of a matrix.
pub fn transpose(a: &Tensor) -> Tensor {
    let (m, n) = (a.rows(), a.cols());
    let mut out = Tensor::zeros(vec![n, m]);
    for i in 0..m {
        for j in 0..n {
            out.data[j * m + i] = a.data[i * n + j];
        }
    }
    out
}

/// Row-wise softmax with max-subtraction, stable for entries of any
/// finite magnitude. Each output row is nonnegative and sums to 1.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let (m, n) = (x.rows(), x.cols());
    let mut out = Tensor::zeros(vec![m, n]);
    for i in 0..m {
        softmax_into(x.row(i), out.row_mut(i));
    }
    out
}

/// Softmax of a single logit slice into `out`. Rows that are entirely
/// `-inf` (fully masked attention rows) produce all zeros.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits.iter()) {
        let e = (l - max).exp();
        *o = e;
        sum += e;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, &mut out);
    out
}

/// Backward through a softmax row: given probabilities `p` and upstream
/// `d_p`, returns d_logits = p ⊙ (d_p − Σ d_p·p).
pub fn softmax_row_backward(p: &[f64], d_p: &[f64], d_logits: &mut [f64]) {
    let dot: f64 = p.iter().zip(d_p.iter()).map(|(a, b)| a * b).sum();
    for ((dl, &pi), &dpi) in d_logits.iter_mut().zip(p.iter()).zip(d_p.iter()) {
        *dl = pi * (dpi - dot);
    }
}

/// Zero-mean unit-variance normalization of `x` followed by an affine
/// gain/bias, with `eps` stabilizing the variance. Biased variance (divide
/// by d) as is conventional for this sublayer.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + eps).sqrt();
    x.iter()
        .zip(gain.iter().zip(bias.iter()))
        .map(|(&v, (&g, &b))| g * (v - mean) * inv_std + b)
        .collect()
}

/// Backward of [`layer_norm`]. Accumulates gain/bias gradients and returns
/// d_x.
pub fn layer_norm_backward(
    x: &[f64],
    gain: &[f64],
    eps: f64,
    d_y: &[f64],
    d_gain: &mut [f64],
    d_bias: &mut [f64],
) -> Vec<f64> {
    let d = x.len() as f64;
    let mean = x.iter().sum::<f64>() / d;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
    let inv_std = 1.0 / (var + eps).sqrt();

    // xhat_i = (x_i − μ)·inv_std;  y_i = g_i·xhat_i + b_i
    let mut sum_dxhat = 0.0;
    let mut sum_dxhat_xhat = 0.0;
    let mut dxhat = vec![0.0; x.len()];
    for i in 0..x.len() {
        let xhat = (x[i] - mean) * inv_std;
        d_gain[i] += d_y[i] * xhat;
        d_bias[i] += d_y[i];
        dxhat[i] = d_y[i] * gain[i];
        sum_dxhat += dxhat[i];
        sum_dxhat_xhat += dxhat[i] * xhat;
    }
    (0..x.len())
        .map(|i| {
            let xhat = (x[i] - mean) * inv_std;
            inv_std * (dxhat[i] - sum_dxhat / d - xhat * sum_dxhat_xhat / d)
        })
        .collect()
}

/// Cross-entropy −ln(max(ŷ[y], floor)) of a probability vector against a
/// true label index. The floor is [`PROB_FLOOR`].
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64, TensorError> {
    if label >= probs.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            size: probs.len(),
        });
    }
    Ok(-(probs[label].max(PROB_FLOOR)).ln())
}

/// Gradient of softmax-then-cross-entropy with respect to the logits:
/// d_logits = p − onehot(label), scaled by `upstream`.
pub fn softmax_cross_entropy_backward(probs: &[f64], label: usize, upstream: f64) -> Vec<f64> {
    let mut d = probs.iter().map(|&p| p * upstream).collect::<Vec<_>>();
    d[label] -= upstream;
    d
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smooth GELU (tanh form). Smoothness keeps finite-difference gradient
/// checks tight.
pub fn gelu(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654; // sqrt(2/π)
    0.5 * x * (1.0 + (C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_derivative(x: f64) -> f64 {
    const C: f64 = 0.7978845608028654;
    let u = C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity() {
        let i2 = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        let c = matmul(&i2, &b).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0]);
        assert_eq!(c.shape(), &[2, 1]);
    }

    #[test]
    fn matmul_hand_arithmetic() {
        let a = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::matrix(2, 1, vec![5.0, 6.0]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.data(), &[17.0, 39.0]);
    }

    #[test]
    fn matmul_shape_mismatch_names_both_shapes() {
        let a = Tensor::zeros(vec![2, 3]);
        let b = Tensor::zeros(vec![2, 3]);
        let err = matmul(&a, &b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]"), "message was: {msg}");
        match err {
            TensorError::DimensionMismatch { lhs, rhs, .. } => {
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let x = Tensor::matrix(2, 2, vec![0.0, 0.0, 10000.0, 10000.0]).unwrap();
        let p = softmax_rows(&x);
        for r in 0..2 {
            assert!((p.at(r, 0) - 0.5).abs() < 1e-15);
            assert!((p.at(r, 1) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_direct_evaluation() {
        // row [ln 2, 0] → [2/3, 1/3]
        let x = Tensor::matrix(1, 2, vec![2.0_f64.ln(), 0.0]).unwrap();
        let p = softmax_rows(&x);
        assert!((p.at(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.at(0, 1) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn softmax_rows_sum_to_one_under_large_magnitudes() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..12);
            let logits: Vec<f64> = (0..n).map(|_| rng.gen_range(-1e4..1e4)).collect();
            let p = softmax(&logits);
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn layer_norm_constant_vector_collapses_to_zero() {
        let y = layer_norm(&[3.0, 3.0, 3.0], &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0], 1e-5);
        for v in y {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_two_point_hand_case() {
        // x=[1,−1]: mean 0, biased variance 1 → normalized exactly x as ε→0.
        let y = layer_norm(&[1.0, -1.0], &[1.0, 1.0], &[0.0, 0.0], 1e-12);
        assert!((y[0] - 1.0).abs() < 1e-6);
        assert!((y[1] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn layer_norm_gain_annihilation() {
        let y = layer_norm(&[0.3, -2.0, 7.5], &[0.0, 0.0, 0.0], &[4.0, 4.0, 4.0], 1e-5);
        for v in y {
            assert!((v - 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn cross_entropy_perfect_uniform_and_floor() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let u = cross_entropy(&[0.25; 4], 2).unwrap();
        assert!((u - 4.0_f64.ln()).abs() < 1e-12);
        assert!((u - 1.386294).abs() < 1e-6);
        let floored = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!(floored.is_finite());
        assert!((floored - (-PROB_FLOOR.ln())).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(TensorError::LabelOutOfRange { label: 2, size: 2 })
        ));
    }

    #[test]
    fn matmul_associativity_on_random_chains() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let (m, k, n, p) = (
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
                rng.gen_range(1..6),
            );
            let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng, r: usize, c: usize| {
                Tensor::matrix(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap()
            };
            let a = rand_mat(&mut rng, m, k);
            let b = rand_mat(&mut rng, k, n);
            let c = rand_mat(&mut rng, n, p);
            let left = matmul(&matmul(&a, &b).unwrap(), &c).unwrap();
            let right = matmul(&a, &matmul(&b, &c).unwrap()).unwrap();
            for (l, r) in left.data().iter().zip(right.data().iter()) {
                let denom = l.abs().max(r.abs()).max(1.0);
                assert!((l - r).abs() / denom < 1e-9);
            }
        }
    }

    #[test]
    fn parameter_grad_matches_value_shape() {
        let p = Parameter::new("w", Tensor::zeros(vec![3, 4]));
        assert_eq!(p.grad.shape(), p.value.shape());
        assert!(p.grad.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn memory_counter_tracks_alloc_and_drop() {
        let before = live_tensor_bytes();
        let t = Tensor::zeros(vec![128]);
        assert_eq!(live_tensor_bytes(), before + 1024);
        drop(t);
        assert_eq!(live_tensor_bytes(), before);
        assert!(peak_tensor_bytes() >= before + 1024);
    }
}
