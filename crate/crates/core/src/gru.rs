//! Single-layer GRU with a linear read-out, hand-derived backpropagation
//! through time, and the MSE training objective.
//!
//! Gate equations, with `h` the previous hidden state:
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = (1 − z) ⊙ h + z ⊙ h̃
//! ```
//!
//! A window is consumed oldest row first from `h = 0`, and the prediction is
//! `W_o h_L + b_o`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Features, N_FEATURES};
use crate::error::{Error, Result};

/// Dense row-major matrix. Vectors are stored as `n × 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `out[i] += Σ_j self[i, j] · x[j]`
    fn mul_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out[j] += Σ_i self[i, j] · y[i]`
    fn t_mul_acc(&self, y: &[f64], out: &mut [f64]) {
        for (yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * yi;
            }
        }
    }

    /// `self += a ⊗ b`
    fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        for (ai, row) in a.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            for (w, bj) in row.iter_mut().zip(b) {
                *w += ai * bj;
            }
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// GRU cell weights plus the linear output head.
///
/// Gradients share this type so the optimizer can walk both in lockstep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_z: Matrix,
    pub u_z: Matrix,
    pub b_z: Vec<f64>,
    pub w_r: Matrix,
    pub u_r: Matrix,
    pub b_r: Vec<f64>,
    pub w_h: Matrix,
    pub u_h: Matrix,
    pub b_h: Vec<f64>,
    pub w_o: Matrix,
    pub b_o: Vec<f64>,
}

/// Names of the parameter tensors in storage order.
pub const TENSOR_NAMES: [&str; 11] = [
    "w_z", "u_z", "b_z", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h", "w_o", "b_o",
];

impl GruParams {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let (i, h) = (input_size, hidden_size);
        Self {
            input_size,
            hidden_size,
            w_z: Matrix::zeros(h, i),
            u_z: Matrix::zeros(h, h),
            b_z: vec![0.0; h],
            w_r: Matrix::zeros(h, i),
            u_r: Matrix::zeros(h, h),
            b_r: vec![0.0; h],
            w_h: Matrix::zeros(h, i),
            u_h: Matrix::zeros(h, h),
            b_h: vec![0.0; h],
            w_o: Matrix::zeros(i, h),
            b_o: vec![0.0; i],
        }
    }

    /// Same shapes as `self`, all zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size)
    }

    pub fn tensors(&self) -> [&[f64]; 11] {
        [
            self.w_z.as_slice(),
            self.u_z.as_slice(),
            &self.b_z,
            self.w_r.as_slice(),
            self.u_r.as_slice(),
            &self.b_r,
            self.w_h.as_slice(),
            self.u_h.as_slice(),
            &self.b_h,
            self.w_o.as_slice(),
            &self.b_o,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.w_z.as_mut_slice(),
            self.u_z.as_mut_slice(),
            &mut self.b_z,
            self.w_r.as_mut_slice(),
            self.u_r.as_mut_slice(),
            &mut self.b_r,
            self.w_h.as_mut_slice(),
            self.u_h.as_mut_slice(),
            &mut self.b_h,
            self.w_o.as_mut_slice(),
            &mut self.b_o,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flat row-major copy of every tensor in `TENSOR_NAMES` order.
    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors().concat()
    }

    pub fn flat_get(&self, mut index: usize) -> f64 {
        for t in self.tensors() {
            if index < t.len() {
                return t[index];
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn flat_set(&mut self, mut index: usize, value: f64) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t[index] = value;
                return;
            }
            index -= t.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Checks tensor shapes against `input_size` and `hidden_size`.
    pub fn validate(&self) -> Result<()> {
        let (i, h) = (self.input_size, self.hidden_size);
        let expect = [
            ("w_z", self.w_z.shape(), (h, i)),
            ("u_z", self.u_z.shape(), (h, h)),
            ("w_r", self.w_r.shape(), (h, i)),
            ("u_r", self.u_r.shape(), (h, h)),
            ("w_h", self.w_h.shape(), (h, i)),
            ("u_h", self.u_h.shape(), (h, h)),
            ("w_o", self.w_o.shape(), (i, h)),
            ("b_z", (self.b_z.len(), 1), (h, 1)),
            ("b_r", (self.b_r.len(), 1), (h, 1)),
            ("b_h", (self.b_h.len(), 1), (h, 1)),
            ("b_o", (self.b_o.len(), 1), (i, 1)),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {}x{}, expected {}x{}",
                    got.0, got.1, want.0, want.1
                )));
            }
        }
        if !self.is_finite() {
            return Err(Error::ShapeMismatch("parameters contain non-finite values".into()));
        }
        Ok(())
    }

    /// Euclidean norm over every parameter.
    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub(crate) fn scale_in_place(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// Uniform `[-1/√hidden, 1/√hidden]` weights, zero biases.
pub fn init_params(input_size: usize, hidden_size: usize, seed: u64) -> Result<GruParams> {
    if input_size == 0 || hidden_size == 0 {
        return Err(Error::InvalidConfig("GRU sizes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 1.0 / (hidden_size as f64).sqrt();
    let mut params = GruParams::zeros(input_size, hidden_size);
    for m in [
        &mut params.w_z,
        &mut params.u_z,
        &mut params.w_r,
        &mut params.u_r,
        &mut params.w_h,
        &mut params.u_h,
        &mut params.w_o,
    ] {
        m.as_mut_slice().iter_mut().for_each(|w| *w = rng.random_range(-k..=k));
    }
    Ok(params)
}

/// Intermediate values of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    candidate: Vec<f64>,
}

fn step(x: &[f64], h_prev: &[f64], p: &GruParams) -> (Vec<f64>, StepCache) {
    let n = p.hidden_size;
    let mut a_z = p.b_z.clone();
    p.w_z.mul_acc(x, &mut a_z);
    p.u_z.mul_acc(h_prev, &mut a_z);
    let z: Vec<f64> = a_z.into_iter().map(sigmoid).collect();

    let mut a_r = p.b_r.clone();
    p.w_r.mul_acc(x, &mut a_r);
    p.u_r.mul_acc(h_prev, &mut a_r);
    let r: Vec<f64> = a_r.into_iter().map(sigmoid).collect();

    let gated: Vec<f64> = r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let mut a_h = p.b_h.clone();
    p.w_h.mul_acc(x, &mut a_h);
    p.u_h.mul_acc(&gated, &mut a_h);
    let candidate: Vec<f64> = a_h.into_iter().map(f64::tanh).collect();

    let h_next = (0..n).map(|j| (1.0 - z[j]) * h_prev[j] + z[j] * candidate[j]).collect();
    (
        h_next,
        StepCache {
            h_prev: h_prev.to_vec(),
            z,
            r,
            candidate,
        },
    )
}

pub fn cell_forward(x: &[f64], h_prev: &[f64], params: &GruParams) -> Result<Vec<f64>> {
    if x.len() != params.input_size || h_prev.len() != params.hidden_size {
        return Err(Error::ShapeMismatch(format!(
            "cell expects x[{}] and h[{}], got x[{}] and h[{}]",
            params.input_size,
            params.hidden_size,
            x.len(),
            h_prev.len()
        )));
    }
    Ok(step(x, h_prev, params).0)
}

/// Applies the output head to a hidden state.
pub fn head(h: &[f64], params: &GruParams) -> Vec<f64> {
    let mut out = params.b_o.clone();
    params.w_o.mul_acc(h, &mut out);
    out
}

fn check_window(window: &[Features], params: &GruParams) -> Result<()> {
    if params.input_size != N_FEATURES {
        return Err(Error::ShapeMismatch(format!(
            "model input size {} differs from the {N_FEATURES} modelled features",
            params.input_size
        )));
    }
    if window.is_empty() {
        return Err(Error::ShapeMismatch("empty input window".into()));
    }
    Ok(())
}

fn forward_cached(window: &[Features], params: &GruParams) -> (Features, Vec<StepCache>, Vec<f64>) {
    let mut h = vec![0.0; params.hidden_size];
    let mut caches = Vec::with_capacity(window.len());
    for x in window {
        let (next, cache) = step(x, &h, params);
        caches.push(cache);
        h = next;
    }
    let out = head(&h, params);
    ([out[0], out[1], out[2]], caches, h)
}

/// One-step prediction from a scaled `L × 3` window.
pub fn forward_window(window: &[Features], params: &GruParams) -> Result<Features> {
    check_window(window, params)?;
    Ok(forward_cached(window, params).0)
}

/// Same as [`forward_window`] but checks the window has exactly `lookback` rows.
pub fn forward_window_checked(window: &[Features], lookback: usize, params: &GruParams) -> Result<Features> {
    if window.len() != lookback {
        return Err(Error::ShapeMismatch(format!(
            "window has {} rows, expected {lookback}",
            window.len()
        )));
    }
    forward_window(window, params)
}

pub fn loss_mse(prediction: &Features, target: &Features) -> f64 {
    prediction.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / N_FEATURES as f64
}

/// Loss and exact gradients of `loss_mse(forward_window(window), target)`.
pub fn backprop_window(window: &[Features], target: &Features, params: &GruParams) -> Result<(f64, GruParams)> {
    check_window(window, params)?;
    let mut grads = params.zeros_like();
    let loss = accumulate_gradients(window, target, params, &mut grads);
    Ok((loss, grads))
}

/// Adds this sample's gradients into `grads` and returns its loss.
pub(crate) fn accumulate_gradients(
    window: &[Features],
    target: &Features,
    p: &GruParams,
    grads: &mut GruParams,
) -> f64 {
    let n = p.hidden_size;
    let (pred, caches, h_last) = forward_cached(window, p);
    let loss = loss_mse(&pred, target);

    let d_pred: Vec<f64> = (0..N_FEATURES)
        .map(|k| 2.0 * (pred[k] - target[k]) / N_FEATURES as f64)
        .collect();
    grads.w_o.add_outer(&d_pred, &h_last);
    grads.b_o.iter_mut().zip(&d_pred).for_each(|(g, d)| *g += d);

    let mut dh = vec![0.0; n];
    p.w_o.t_mul_acc(&d_pred, &mut dh);

    let mut d_prev = vec![0.0; n];
    let mut da_z = vec![0.0; n];
    let mut da_r = vec![0.0; n];
    let mut da_h = vec![0.0; n];
    let mut d_gated = vec![0.0; n];
    let mut gated = vec![0.0; n];

    for (x, c) in window.iter().zip(&caches).rev() {
        for j in 0..n {
            let d_cand = dh[j] * c.z[j];
            let d_z = dh[j] * (c.candidate[j] - c.h_prev[j]);
            d_prev[j] = dh[j] * (1.0 - c.z[j]);
            da_h[j] = d_cand * (1.0 - c.candidate[j] * c.candidate[j]);
            da_z[j] = d_z * c.z[j] * (1.0 - c.z[j]);
            gated[j] = c.r[j] * c.h_prev[j];
        }

        grads.w_h.add_outer(&da_h, x);
        grads.u_h.add_outer(&da_h, &gated);
        grads.b_h.iter_mut().zip(&da_h).for_each(|(g, d)| *g += d);

        d_gated.iter_mut().for_each(|v| *v = 0.0);
        p.u_h.t_mul_acc(&da_h, &mut d_gated);
        for j in 0..n {
            let d_r = d_gated[j] * c.h_prev[j];
            d_prev[j] += d_gated[j] * c.r[j];
            da_r[j] = d_r * c.r[j] * (1.0 - c.r[j]);
        }

        grads.w_z.add_outer(&da_z, x);
        grads.u_z.add_outer(&da_z, &c.h_prev);
        grads.b_z.iter_mut().zip(&da_z).for_each(|(g, d)| *g += d);
        grads.w_r.add_outer(&da_r, x);
        grads.u_r.add_outer(&da_r, &c.h_prev);
        grads.b_r.iter_mut().zip(&da_r).for_each(|(g, d)| *g += d);

        p.u_z.t_mul_acc(&da_z, &mut d_prev);
        p.u_r.t_mul_acc(&da_r, &mut d_prev);
        std::mem::swap(&mut dh, &mut d_prev);
    }
    loss
}
