//! The permutational layer: an inner dense network applied to all N² ordered
//! pairs of object features, pooled over the second index.
//!
//! For an input set `x_1..x_N`, the layer computes
//! `y_i = pool_j f(x_i, x_j)` where `f` is the inner network and `pool` is
//! average, sum, or elementwise max. Every ordered pair, including the
//! self-pair `(i,i)`, goes through the same weights, which is what makes the
//! layer permutation-equivariant and size-agnostic.
//!
//! The first inner layer is evaluated in split form: with `w = [w_a; w_b]`
//! stacked over the two concatenation halves, `w·concat(x_i,x_j) =
//! w_a·x_i + w_b·x_j`, so the two `[N×F]` products are computed once and the
//! N² pair rows are assembled by addition. This is algebraically identical to
//! materializing `concat(x_i, x_j)` (see [`pair_expand`]) and multiplying.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::LinearParams;
use crate::tensor::{col_sums_acc, gemm, gemm_abt_acc, gemm_atb_acc, Tensor2};

/// Permutation-invariant reduction over the second pair index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Average,
    Sum,
    Max,
}

/// Shape of one permutational layer.
///
/// `inner_widths` lists the hidden widths of the inner network; an empty list
/// means a single linear map (the Perm-x,1 case). `output_relu` controls
/// whether the inner network's last layer is followed by ReLU; layers feeding
/// further layers use `true`, the network's output layer uses `false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermLayerConfig {
    pub n_in: usize,
    pub n_out: usize,
    pub inner_widths: Vec<usize>,
    pub pooling: Pooling,
    pub output_relu: bool,
}

/// A set of objects; row `i` of `features` holds object `i`. Any row
/// permutation denotes the same set.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectSet {
    pub features: Tensor2,
}

impl ObjectSet {
    pub fn new(features: Tensor2) -> Self {
        ObjectSet { features }
    }

    pub fn n_objects(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }
}

/// `B` object sets of identical size, packed as `[(B·N)×F]` with set-major
/// row order.
#[derive(Debug, Clone)]
pub struct SetBatch {
    pub n_sets: usize,
    pub n_objects: usize,
    pub features: Tensor2,
}

impl SetBatch {
    pub fn new(n_sets: usize, n_objects: usize, features: Tensor2) -> Result<Self> {
        if features.rows() != n_sets * n_objects {
            return Err(Error::LengthMismatch {
                op: "SetBatch::new",
                expected: n_sets * n_objects,
                got: features.rows(),
            });
        }
        Ok(SetBatch { n_sets, n_objects, features })
    }

    pub fn from_set(set: &ObjectSet) -> Self {
        SetBatch {
            n_sets: 1,
            n_objects: set.n_objects(),
            features: set.features.clone(),
        }
    }
}

/// All ordered feature pairs of a set: row `i·N + j` is `concat(x_i, x_j)`,
/// self-pairs included.
pub fn pair_expand(set: &ObjectSet) -> Result<Tensor2> {
    let n = set.n_objects();
    if n == 0 {
        return Err(Error::EmptyObjectSet);
    }
    let f = set.n_features();
    let mut out = Tensor2::zeros(n * n, 2 * f);
    for i in 0..n {
        for j in 0..n {
            let row = out.row_mut(i * n + j);
            row[..f].copy_from_slice(set.features.row(i));
            row[f..].copy_from_slice(set.features.row(j));
        }
    }
    Ok(out)
}

/// One permutational layer: configuration plus the inner network's layers.
#[derive(Debug, Clone)]
pub struct PermLayer {
    pub config: PermLayerConfig,
    pub inner: Vec<LinearParams>,
}

impl PermLayer {
    pub fn new(config: PermLayerConfig, rng: &mut ChaCha8Rng) -> Self {
        let mut dims = vec![2 * config.n_in];
        dims.extend_from_slice(&config.inner_widths);
        dims.push(config.n_out);
        let inner = dims
            .windows(2)
            .map(|d| LinearParams::glorot(d[0], d[1], rng))
            .collect();
        PermLayer { config, inner }
    }

    pub fn param_count(&self) -> usize {
        self.inner.iter().map(|p| p.param_count()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.inner {
            p.zero_grads();
        }
    }

    /// Whether inner layer `idx` is followed by ReLU.
    fn has_relu(&self, idx: usize) -> bool {
        idx + 1 < self.inner.len() || self.config.output_relu
    }
}

/// Forward intermediates needed by [`perm_backward`].
#[derive(Debug, Clone)]
pub struct PermCache {
    n_sets: usize,
    n_objects: usize,
    n_out: usize,
    input: Tensor2,
    /// Post-activation of each inner layer on the `B·N²` pair rows.
    acts: Vec<Tensor2>,
    /// Argmax pair index `j` per (set, object, output feature); max pooling only.
    argmax: Vec<u32>,
}

impl PermCache {
    /// Number of pair rows the inner network was evaluated on.
    pub fn pair_rows(&self) -> usize {
        self.n_sets * self.n_objects * self.n_objects
    }
}

/// Applies the layer to every set in the batch. Returns pooled outputs
/// `[(B·N)×n_out]` and the cache for the backward pass.
pub fn perm_forward_batch(layer: &PermLayer, batch: &SetBatch) -> Result<(Tensor2, PermCache)> {
    let (b, n, f) = (batch.n_sets, batch.n_objects, batch.features.cols());
    if n == 0 || b == 0 {
        return Err(Error::EmptyObjectSet);
    }
    if f != layer.config.n_in {
        return Err(Error::ShapeMismatch {
            op: "perm_forward",
            left_rows: batch.features.rows(),
            left_cols: f,
            right_rows: 2 * layer.config.n_in,
            right_cols: layer.config.n_out,
        });
    }
    let first = &layer.inner[0];
    let h = first.n_out();
    let rows = b * n;
    let pair_rows = rows * n;

    // Split first layer: a = x·w_a, bb = x·w_b over object rows.
    let mut half_i = Tensor2::zeros(rows, h);
    let mut half_j = Tensor2::zeros(rows, h);
    let w = first.w.data();
    gemm(rows, f, h, batch.features.data(), &w[..f * h], half_i.data_mut());
    gemm(rows, f, h, batch.features.data(), &w[f * h..], half_j.data_mut());

    // Assemble pair rows (s,i,j) = half_i[s,i] + half_j[s,j] + bias.
    let mut act = Tensor2::zeros(pair_rows, h);
    {
        let out = act.data_mut();
        for s in 0..b {
            for i in 0..n {
                let ai = half_i.row(s * n + i);
                for j in 0..n {
                    let row = &mut out[((s * n + i) * n + j) * h..((s * n + i) * n + j) * h + h];
                    let bj = half_j.row(s * n + j);
                    for (k, rv) in row.iter_mut().enumerate() {
                        *rv = ai[k] + bj[k] + first.b[k];
                    }
                }
            }
        }
    }
    if layer.has_relu(0) {
        for v in act.data_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }

    let mut acts = Vec::with_capacity(layer.inner.len());
    acts.push(act);
    for (idx, lin) in layer.inner.iter().enumerate().skip(1) {
        let prev = acts.last().unwrap();
        let mut next = Tensor2::zeros(pair_rows, lin.n_out());
        gemm(pair_rows, lin.n_in(), lin.n_out(), prev.data(), lin.w.data(), next.data_mut());
        for row in next.data_mut().chunks_exact_mut(lin.n_out()) {
            for (v, bias) in row.iter_mut().zip(&lin.b) {
                *v += bias;
            }
        }
        if layer.has_relu(idx) {
            for v in next.data_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        acts.push(next);
    }

    // Pool over j: rows for (s,i) are consecutive.
    let n_out = layer.config.n_out;
    let last = acts.last().unwrap();
    let mut pooled = Tensor2::zeros(rows, n_out);
    let mut argmax = Vec::new();
    match layer.config.pooling {
        Pooling::Average | Pooling::Sum => {
            let scale = if layer.config.pooling == Pooling::Average {
                1.0 / n as f64
            } else {
                1.0
            };
            for r in 0..rows {
                let dst = pooled.row_mut(r);
                for j in 0..n {
                    let src = last.row(r * n + j);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
                for d in dst.iter_mut() {
                    *d *= scale;
                }
            }
        }
        Pooling::Max => {
            argmax = vec![0u32; rows * n_out];
            for r in 0..rows {
                let dst = pooled.row_mut(r);
                dst.copy_from_slice(last.row(r * n));
                for j in 1..n {
                    let src = last.row(r * n + j);
                    for (k, s) in src.iter().enumerate() {
                        // Strict > keeps the smallest tied j.
                        if *s > dst[k] {
                            dst[k] = *s;
                            argmax[r * n_out + k] = j as u32;
                        }
                    }
                }
            }
        }
    }

    let cache = PermCache {
        n_sets: b,
        n_objects: n,
        n_out,
        input: batch.features.clone(),
        acts,
        argmax,
    };
    Ok((pooled, cache))
}

/// Single-set convenience wrapper around [`perm_forward_batch`].
pub fn perm_forward(layer: &PermLayer, set: &ObjectSet) -> Result<(ObjectSet, PermCache)> {
    let batch = SetBatch::from_set(set);
    let (pooled, cache) = perm_forward_batch(layer, &batch)?;
    Ok((ObjectSet::new(pooled), cache))
}

/// Distributes the pooled gradient back onto pair rows.
pub(crate) fn pool_backward(layer: &PermLayer, cache: &PermCache, g_out: &Tensor2) -> Tensor2 {
    let (n, n_out) = (cache.n_objects, cache.n_out);
    let rows = cache.n_sets * n;
    let mut g_pairs = Tensor2::zeros(rows * n, n_out);
    match layer.config.pooling {
        Pooling::Average | Pooling::Sum => {
            let scale = if layer.config.pooling == Pooling::Average {
                1.0 / n as f64
            } else {
                1.0
            };
            for r in 0..rows {
                let src = g_out.row(r);
                for j in 0..n {
                    let dst = g_pairs.row_mut(r * n + j);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d = s * scale;
                    }
                }
            }
        }
        Pooling::Max => {
            for r in 0..rows {
                for k in 0..n_out {
                    let j = cache.argmax[r * n_out + k] as usize;
                    g_pairs.set(r * n + j, k, g_out.get(r, k));
                }
            }
        }
    }
    g_pairs
}

/// Backward pass. Accumulates inner-network parameter gradients and returns
/// the gradient with respect to the layer input `[(B·N)×n_in]`.
pub fn perm_backward_batch(
    layer: &mut PermLayer,
    cache: &PermCache,
    g_out: &Tensor2,
) -> Result<Tensor2> {
    let (b, n) = (cache.n_sets, cache.n_objects);
    let rows = b * n;
    if g_out.rows() != rows
        || g_out.cols() != cache.n_out
        || cache.n_out != layer.config.n_out
        || cache.input.cols() != layer.config.n_in
        || cache.acts.len() != layer.inner.len()
    {
        return Err(Error::StaleCache);
    }

    let mut g = pool_backward(layer, cache, g_out);

    // Hidden inner layers, last to second.
    for idx in (1..layer.inner.len()).rev() {
        if layer.has_relu(idx) {
            // Mask from the post-activation: post > 0 iff pre > 0.
            crate::nn::relu_mask_inplace(&cache.acts[idx], &mut g);
        }
        let lin = &mut layer.inner[idx];
        let x = &cache.acts[idx - 1];
        gemm_atb_acc(
            x.rows(), lin.n_in(), lin.n_out(),
            x.data(), g.data(), lin.gw.data_mut(),
        );
        col_sums_acc(lin.n_out(), g.data(), &mut lin.gb);
        let mut g_prev = Tensor2::zeros(x.rows(), lin.n_in());
        gemm_abt_acc(
            g.rows(), lin.n_out(), lin.n_in(),
            g.data(), lin.w.data(), g_prev.data_mut(),
        );
        g = g_prev;
    }

    // First layer in split form.
    if layer.has_relu(0) {
        crate::nn::relu_mask_inplace(&cache.acts[0], &mut g);
    }
    let first = &mut layer.inner[0];
    let f = layer.config.n_in;
    let h = first.n_out();

    // Reduce pair gradients to the i and j slots: g_i[s,i] = Σ_j g[(s,i,j)],
    // g_j[s,j] = Σ_i g[(s,i,j)], both in ascending sweep order.
    let mut g_half_i = Tensor2::zeros(rows, h);
    let mut g_half_j = Tensor2::zeros(rows, h);
    for s in 0..b {
        for i in 0..n {
            let gi = g_half_i.row_mut(s * n + i);
            for j in 0..n {
                let src = g.row((s * n + i) * n + j);
                for (d, v) in gi.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
        for j in 0..n {
            let gj = g_half_j.row_mut(s * n + j);
            for i in 0..n {
                let src = g.row((s * n + i) * n + j);
                for (d, v) in gj.iter_mut().zip(src) {
                    *d += v;
                }
            }
        }
    }

    {
        let gw = first.gw.data_mut();
        gemm_atb_acc(rows, f, h, cache.input.data(), g_half_i.data(), &mut gw[..f * h]);
        gemm_atb_acc(rows, f, h, cache.input.data(), g_half_j.data(), &mut gw[f * h..]);
    }
    col_sums_acc(h, g.data(), &mut first.gb);

    let mut g_in = Tensor2::zeros(rows, f);
    let w = first.w.data();
    gemm_abt_acc(rows, h, f, g_half_i.data(), &w[..f * h], g_in.data_mut());
    gemm_abt_acc(rows, h, f, g_half_j.data(), &w[f * h..], g_in.data_mut());
    Ok(g_in)
}

/// Single-set convenience wrapper around [`perm_backward_batch`].
pub fn perm_backward(layer: &mut PermLayer, cache: &PermCache, g_out: &Tensor2) -> Result<Tensor2> {
    perm_backward_batch(layer, cache, g_out)
}
