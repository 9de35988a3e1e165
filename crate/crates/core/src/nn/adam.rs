//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// Per-parameter first/second moment state plus the step counter.
pub struct AdamState<S: Scalar = f64> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> AdamState<S> {
    pub fn new(params: &[(String, Tensor<S>)], lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            t: 0,
            m: params.iter().map(|(_, p)| vec![S::zero(); p.len()]).collect(),
            v: params.iter().map(|(_, p)| vec![S::zero(); p.len()]).collect(),
        }
    }

    pub fn with_defaults(params: &[(String, Tensor<S>)], lr: f64) -> Self {
        Self::new(params, lr, 0.9, 0.999, 1e-8)
    }

    /// One update over all parameters. Gradients are read, not cleared; a
    /// parameter without a gradient is treated as having zero gradient.
    /// A non-finite gradient aborts, naming the parameter path.
    pub fn step(&mut self, params: &[(String, Tensor<S>)]) -> Result<()> {
        assert_eq!(params.len(), self.m.len(), "optimizer state does not match parameter list");
        self.t += 1;
        let b1: S = c(self.beta1);
        let b2: S = c(self.beta2);
        let lr: S = c(self.lr);
        let eps: S = c(self.eps);
        let corr1: S = c(1.0 - self.beta1.powi(self.t as i32));
        let corr2: S = c(1.0 - self.beta2.powi(self.t as i32));

        for (i, (name, p)) in params.iter().enumerate() {
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let mut bad = false;
            let updated = p.update_with_grad(|data, grad| {
                for j in 0..data.len() {
                    let g = grad[j];
                    if !g.is_finite() {
                        bad = true;
                        return;
                    }
                    m[j] = b1 * m[j] + (S::one() - b1) * g;
                    v[j] = b2 * v[j] + (S::one() - b2) * g * g;
                    let m_hat = m[j] / corr1;
                    let v_hat = v[j] / corr2;
                    data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            });
            if bad {
                return Err(Error::numeric(format!("non-finite gradient in parameter {name}")));
            }
            if !updated {
                // zero gradient: moments decay, then the usual update
                for j in 0..m.len() {
                    m[j] = b1 * m[j];
                    v[j] = b2 * v[j];
                }
                let mut data_update = vec![S::zero(); m.len()];
                for j in 0..m.len() {
                    let m_hat = m[j] / corr1;
                    let v_hat = v[j] / corr2;
                    data_update[j] = lr * m_hat / (v_hat.sqrt() + eps);
                }
                p.update_data(|data| {
                    for (d, u) in data.iter_mut().zip(&data_update) {
                        *d -= *u;
                    }
                });
            }
        }
        Ok(())
    }

    /// Raw moment vectors, in parameter order (checkpointing).
    pub fn moments(&self) -> (&[Vec<S>], &[Vec<S>]) {
        (&self.m, &self.v)
    }

    pub fn restore_moments(&mut self, m: Vec<Vec<S>>, v: Vec<Vec<S>>, t: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn param(data: Vec<f64>) -> (String, Tensor<f64>) {
        let n = data.len();
        ("p".to_string(), Tensor::from_vec(data, &[n]).requires_grad())
    }

    fn set_grad(p: &Tensor<f64>, g: &[f64]) {
        p.zero_grad();
        let t = Tensor::from_vec(g.to_vec(), p.shape());
        // drive the gradient through a sum so the accumulator fills
        let loss = p.mul(&t).sum_all();
        loss.backward();
    }

    #[test]
    fn zero_gradient_first_step_is_noop() {
        let params = vec![param(vec![1.0, -2.0])];
        let mut adam = AdamState::with_defaults(&params, 1e-3);
        set_grad(&params[0].1, &[0.0, 0.0]);
        adam.step(&params).unwrap();
        assert_eq!(params[0].1.to_vec(), vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_magnitude_is_learning_rate() {
        // closed form: bias correction makes the first update
        // lr * g/|g| / (1 + eps/|g|), which is lr*sign(g) up to eps.
        let params = vec![param(vec![0.5])];
        let mut adam = AdamState::new(&params, 1e-3, 0.9, 0.999, 1e-8);
        set_grad(&params[0].1, &[0.1]);
        adam.step(&params).unwrap();
        let delta = params[0].1.to_vec()[0] - 0.5;
        let expected = -1e-3 * 0.1 / (0.1 + 1e-8);
        assert!((delta - expected).abs() < 1e-9, "delta {delta} vs {expected}");
    }

    #[test]
    fn lr_zero_never_moves_parameters() {
        let params = vec![param(vec![1.0, 2.0, 3.0])];
        let mut adam = AdamState::with_defaults(&params, 0.0);
        for step in 0..5 {
            set_grad(&params[0].1, &[0.3 * step as f64, -1.0, 2.5]);
            adam.step(&params).unwrap();
        }
        assert_eq!(params[0].1.to_vec(), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn converges_on_quadratic() {
        // 200 steps of Adam on f(x) = x^2 from x=1, lr 0.05
        let params = vec![param(vec![1.0])];
        let mut adam = AdamState::with_defaults(&params, 0.05);
        for _ in 0..200 {
            params[0].1.zero_grad();
            let loss = params[0].1.square().sum_all();
            loss.backward();
            adam.step(&params).unwrap();
        }
        let x = params[0].1.to_vec()[0];
        assert!(x.abs() < 0.05, "did not converge: {x}");
    }

    #[test]
    fn nan_gradient_reports_parameter_path() {
        let params = vec![("encoder.0.weight".to_string(),
            Tensor::from_vec(vec![1.0], &[1]).requires_grad())];
        let mut adam = AdamState::with_defaults(&params, 1e-3);
        set_grad(&params[0].1, &[f64::NAN]);
        let err = adam.step(&params).unwrap_err();
        assert!(err.to_string().contains("encoder.0.weight"), "{err}");
    }
}
