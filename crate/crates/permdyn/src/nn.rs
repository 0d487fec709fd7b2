//! Linear layers, ReLU, and MSE loss with explicit backward passes.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{col_sums_acc, gemm_abt_acc, gemm_atb_acc, Tensor2};

/// Weights and bias of one dense layer, plus gradient buffers of matching
/// shape. `w` is `[in×out]` row-major; gradients accumulate until
/// [`LinearParams::zero_grads`] is called at the start of an optimizer step.
#[derive(Debug, Clone)]
pub struct LinearParams {
    pub w: Tensor2,
    pub b: Vec<f64>,
    pub gw: Tensor2,
    pub gb: Vec<f64>,
}

impl LinearParams {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        LinearParams {
            w: Tensor2::zeros(n_in, n_out),
            b: vec![0.0; n_out],
            gw: Tensor2::zeros(n_in, n_out),
            gb: vec![0.0; n_out],
        }
    }

    /// Uniform(-a, a) with a = sqrt(6/(in+out)), biases zero.
    pub fn glorot(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut p = LinearParams::zeros(n_in, n_out);
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        for v in p.w.data_mut() {
            *v = rng.random_range(-a..a);
        }
        p
    }

    pub fn n_in(&self) -> usize {
        self.w.rows()
    }

    pub fn n_out(&self) -> usize {
        self.w.cols()
    }

    pub fn param_count(&self) -> usize {
        self.w.rows() * self.w.cols() + self.b.len()
    }

    pub fn zero_grads(&mut self) {
        self.gw.fill(0.0);
        self.gb.fill(0.0);
    }
}

/// `out[b,o] = Σ_i x[b,i]·w[i,o] + b[o]`.
pub fn linear_forward(x: &Tensor2, p: &LinearParams) -> Result<Tensor2> {
    if x.cols() != p.n_in() {
        return Err(Error::ShapeMismatch {
            op: "linear_forward",
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: p.n_in(),
            right_cols: p.n_out(),
        });
    }
    let mut out = x.matmul(&p.w)?;
    for row in out.data_mut().chunks_exact_mut(p.b.len()) {
        for (v, bias) in row.iter_mut().zip(&p.b) {
            *v += bias;
        }
    }
    Ok(out)
}

/// Accumulates `gw += xᵀ·g_out`, `gb += column sums of g_out`; returns
/// `g_in = g_out·wᵀ`.
pub fn linear_backward(x: &Tensor2, p: &mut LinearParams, g_out: &Tensor2) -> Result<Tensor2> {
    if x.rows() != g_out.rows() || x.cols() != p.n_in() || g_out.cols() != p.n_out() {
        return Err(Error::ShapeMismatch {
            op: "linear_backward",
            left_rows: x.rows(),
            left_cols: x.cols(),
            right_rows: g_out.rows(),
            right_cols: g_out.cols(),
        });
    }
    gemm_atb_acc(
        x.rows(), p.n_in(), p.n_out(),
        x.data(), g_out.data(), p.gw.data_mut(),
    );
    col_sums_acc(p.n_out(), g_out.data(), &mut p.gb);
    let mut g_in = Tensor2::zeros(x.rows(), x.cols());
    gemm_abt_acc(
        g_out.rows(), p.n_out(), p.n_in(),
        g_out.data(), p.w.data(), g_in.data_mut(),
    );
    Ok(g_in)
}

/// Elementwise `max(x, 0)`.
pub fn relu(x: &Tensor2) -> Tensor2 {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Passes gradient where `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward(x: &Tensor2, g_out: &Tensor2) -> Tensor2 {
    debug_assert_eq!(x.rows(), g_out.rows());
    debug_assert_eq!(x.cols(), g_out.cols());
    let mut g_in = g_out.clone();
    for (g, xv) in g_in.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *g = 0.0;
        }
    }
    g_in
}

/// Applies the ReLU mask of `x` in place on a gradient buffer.
pub(crate) fn relu_mask_inplace(x: &Tensor2, g: &mut Tensor2) {
    for (gv, xv) in g.data_mut().iter_mut().zip(x.data()) {
        if *xv <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// Mean over all elements of `(pred-target)²`, with its gradient
/// `2(pred-target)/count`.
pub fn mse_loss(pred: &Tensor2, target: &Tensor2) -> Result<(f64, Tensor2)> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::ShapeMismatch {
            op: "mse_loss",
            left_rows: pred.rows(),
            left_cols: pred.cols(),
            right_rows: target.rows(),
            right_cols: target.cols(),
        });
    }
    let count = (pred.rows() * pred.cols()) as f64;
    let mut grad = Tensor2::zeros(pred.rows(), pred.cols());
    let mut loss = 0.0;
    for ((g, p), t) in grad.data_mut().iter_mut().zip(pred.data()).zip(target.data()) {
        let d = p - t;
        loss += d * d;
        *g = 2.0 * d / count;
    }
    Ok((loss / count, grad))
}
