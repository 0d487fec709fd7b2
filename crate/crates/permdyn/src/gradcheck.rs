//! Central-difference gradient checking.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

/// Compares an analytic gradient against central differences on a random
/// subsample of parameters and returns the worst relative error
/// `|a-n| / max(|a|, |n|, 1e-8)`.
///
/// `loss` must be deterministic in `params`. At least `min(n_probe, len)`
/// coordinates are probed; pass `n_probe >= params.len()` to probe all.
pub fn gradcheck<F>(
    mut loss: F,
    params: &mut [f64],
    analytic: &[f64],
    eps: f64,
    n_probe: usize,
    seed: u64,
) -> f64
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(params.len(), analytic.len());
    let n = params.len();
    let mut indices: Vec<usize> = (0..n).collect();
    if n_probe < n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(n_probe);
        indices.sort_unstable();
    }
    let mut worst = 0.0f64;
    for &i in &indices {
        let saved = params[i];
        params[i] = saved + eps;
        let f_plus = loss(params);
        params[i] = saved - eps;
        let f_minus = loss(params);
        params[i] = saved;
        let numeric = (f_plus - f_minus) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{linear_backward, linear_forward, mse_loss, LinearParams};
    use crate::tensor::Tensor2;

    #[test]
    fn constant_function_has_zero_gradient_both_ways() {
        let mut params = vec![0.3, -0.7, 1.1];
        let analytic = vec![0.0; 3];
        let worst = gradcheck(|_| 42.0, &mut params, &analytic, 1e-5, 10, 0);
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn single_linear_layer_with_mse_passes_tightly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut p = LinearParams::glorot(4, 3, &mut rng);
        let x = Tensor2::from_vec(2, 4, (0..8).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let target = Tensor2::from_vec(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

        // Analytic gradient.
        let pred = linear_forward(&x, &p).unwrap();
        let (_, g_pred) = mse_loss(&pred, &target).unwrap();
        p.zero_grads();
        linear_backward(&x, &mut p, &g_pred).unwrap();
        let mut analytic = p.gw.data().to_vec();
        analytic.extend_from_slice(&p.gb);

        let mut flat = p.w.data().to_vec();
        flat.extend_from_slice(&p.b);
        let n_w = p.w.data().len();
        let x2 = x.clone();
        let t2 = target.clone();
        let worst = gradcheck(
            |ps| {
                let mut q = LinearParams::zeros(4, 3);
                q.w = Tensor2::from_vec(4, 3, ps[..n_w].to_vec()).unwrap();
                q.b = ps[n_w..].to_vec();
                let pred = linear_forward(&x2, &q).unwrap();
                mse_loss(&pred, &t2).unwrap().0
            },
            &mut flat,
            &analytic,
            1e-5,
            usize::MAX,
            0,
        );
        assert!(worst < 1e-6, "worst {worst}");
    }
}
