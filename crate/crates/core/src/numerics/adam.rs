use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// Adam optimizer over a fixed, ordered group of parameter tensors.
///
/// Moment buffers are allocated on the first step and bound positionally to
/// the parameters passed then; later steps must pass the same group.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
            shapes: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update to every tensor in `params` from its gradient
    /// buffer, then zeroes the gradients.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if self.shapes.is_empty() {
            self.shapes = params.iter().map(|p| p.shape().to_vec()).collect();
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        } else if self.shapes.len() != params.len()
            || self.shapes.iter().zip(params.iter()).any(|(s, p)| s != p.shape())
        {
            return Err(Error::Contract(
                "adam step called with a different parameter group".into(),
            ));
        }
        if let Some(i) = params.iter().position(|p| p.grad().is_none()) {
            return Err(Error::Contract(format!("parameter {i} has no gradient")));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bias1 = 1.0 - beta1.powi(self.step as i32);
        let bias2 = 1.0 - beta2.powi(self.step as i32);

        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let (grad, data) = p.grad_and_data_mut();
            let grad = grad.expect("checked above");
            for k in 0..data.len() {
                let g = grad[k];
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let m_hat = m[k] / bias1;
                let v_hat = v[k] / bias2;
                data[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_with_grad(p: f64, g: f64) -> Tensor {
        let mut t = Tensor::scalar(p);
        t.accumulate_grad(&[g]).unwrap();
        t
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m = 0.4, v = 0.016; bias-corrected m̂ = 4, v̂ = 16 => Δ = lr * 4 / (4 + 1e-8)
        let mut p = scalar_with_grad(1.0, 4.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        let expected = 1.0 - 1e-3 * 4.0 / (4.0 + 1e-8);
        assert!((p.data()[0] - expected).abs() < 1e-15);
        assert_eq!(p.grad().unwrap(), &[0.0]);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = scalar_with_grad(0.7, 0.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        assert_eq!(p.data()[0], 0.7);
    }

    #[test]
    fn repeated_grads_move_monotonically() {
        let mut p = scalar_with_grad(0.0, -2.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut p]).unwrap();
        let after_one = p.data()[0];
        p.accumulate_grad(&[-2.0]).unwrap();
        adam.step(&mut [&mut p]).unwrap();
        let after_two = p.data()[0];
        assert!(0.0 < after_one && after_one < after_two);
        assert_eq!(adam.steps_taken(), 2);
        assert!(adam.second_moments()[0][0] >= 0.0);
    }

    #[test]
    fn missing_grad_is_a_contract_error() {
        let mut p = Tensor::scalar(1.0);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(matches!(adam.step(&mut [&mut p]), Err(Error::Contract(_))));
    }

    #[test]
    fn group_shape_is_pinned() {
        let mut a = scalar_with_grad(1.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut [&mut a]).unwrap();
        let mut b = Tensor::row(&[1.0, 2.0]);
        b.accumulate_grad(&[1.0, 1.0]).unwrap();
        assert!(adam.step(&mut [&mut b]).is_err());
    }
}
