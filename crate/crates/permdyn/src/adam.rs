//! Adam optimizer over a flat parameter vector.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        AdamState {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update with bias correction. `params` and `grads` must have the
/// same length as the state; non-finite gradients are rejected with the index
/// of the offending parameter.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::LengthMismatch {
            op: "adam_step",
            expected: state.m.len(),
            got: if params.len() != state.m.len() {
                params.len()
            } else {
                grads.len()
            },
        });
    }
    if lr <= 0.0 {
        return Err(Error::InvalidConfig(format!("learning rate {lr} must be > 0")));
    }
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient { index });
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t as i32);
    let bc2 = 1.0 - state.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_sign() {
        let mut params = vec![0.0, 0.0, 0.0];
        let grads = vec![0.3, -2.0, 5.0];
        let mut s = AdamState::new(3);
        adam_step(&mut params, &grads, &mut s, 0.01).unwrap();
        // With epsilon << |g|, the bias-corrected first step is -lr·sign(g).
        for (p, g) in params.iter().zip(&grads) {
            assert!((p + 0.01 * g.signum()).abs() < 1e-6, "{p} vs sign {g}");
        }
        assert_eq!(s.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![1.5, -0.5];
        let grads = vec![0.0, 0.0];
        let mut s = AdamState::new(2);
        adam_step(&mut params, &grads, &mut s, 0.1).unwrap();
        assert_eq!(params, vec![1.5, -0.5]);
        assert_eq!(s.t, 1);
    }

    /// Hand-rolled scalar Adam, written independently of the implementation.
    fn scalar_adam_oracle(w0: f64, lr: f64, steps: usize) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut w, mut m, mut v) = (w0, 0.0, 0.0);
        for t in 1..=steps {
            let g = 2.0 * w; // d/dw w²
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
        }
        w
    }

    #[test]
    fn three_steps_on_quadratic_match_scalar_oracle() {
        let mut params = vec![1.0];
        let mut s = AdamState::new(1);
        for _ in 0..3 {
            let grads = vec![2.0 * params[0]];
            adam_step(&mut params, &grads, &mut s, 0.1).unwrap();
        }
        let want = scalar_adam_oracle(1.0, 0.1, 3);
        assert!((params[0] - want).abs() < 1e-12, "{} vs {}", params[0], want);
    }

    #[test]
    fn step_is_bitwise_deterministic() {
        let run = || {
            let mut params = vec![0.25, -0.75, 1.0];
            let grads = vec![0.1, 0.2, -0.3];
            let mut s = AdamState::new(3);
            adam_step(&mut params, &grads, &mut s, 1e-3).unwrap();
            (params, s.m, s.v)
        };
        let (p1, m1, v1) = run();
        let (p2, m2, v2) = run();
        assert_eq!(p1.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   p2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(m1, m2);
        assert_eq!(v1, v2);
    }

    #[test]
    fn rejects_length_mismatch_and_nonfinite() {
        let mut params = vec![0.0; 2];
        let mut s = AdamState::new(2);
        assert!(adam_step(&mut params, &[0.0; 3], &mut s, 0.1).is_err());
        let err = adam_step(&mut params, &[0.0, f64::NAN], &mut s, 0.1).unwrap_err();
        assert!(err.to_string().contains("index 1"), "{err}");
    }
}
