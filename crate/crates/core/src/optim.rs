//! Adam optimizer with bias correction.

use std::collections::BTreeMap;

use crate::tensor::{Tensor, TensorError};

/// Moment accumulators and hyper-parameters of one Adam instance.
///
/// Accumulators are zero-initialized the first time a parameter name is
/// seen and always match the parameter's shape. The dual-step training
/// schedule runs two independent instances, one per loss.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamState {
    /// Defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(learning_rate: f64) -> Self {
        AdamState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// First- and second-moment accumulators for a parameter, if it has
    /// been stepped at least once.
    pub fn moments(&self, name: &str) -> Option<&(Tensor, Tensor)> {
        self.moments.get(name)
    }

    /// One bias-corrected update over a parameter set.
    ///
    /// Every entry is (name, parameter, gradient); all entries share the
    /// same step count. Deterministic given inputs.
    pub fn step(
        &mut self,
        entries: &mut [(&str, &mut Tensor, &Tensor)],
    ) -> Result<(), TensorError> {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);

        for (name, param, grad) in entries.iter_mut() {
            if param.shape() != grad.shape() {
                return Err(TensorError::ShapeMismatch {
                    primitive: "adam_step",
                    detail: format!(
                        "parameter `{name}` has shape {:?} but gradient has {:?}",
                        param.shape(),
                        grad.shape()
                    ),
                });
            }
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| {
                    (
                        Tensor::zeros(param.shape().to_vec()),
                        Tensor::zeros(param.shape().to_vec()),
                    )
                });
            assert_eq!(m.shape(), param.shape(), "moment shape drifted for `{name}`");

            let g = grad.data();
            let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
            let m_data = m.data_mut();
            let v_data = v.data_mut();
            let p_data = param.data_mut();
            for i in 0..g.len() {
                m_data[i] = b1 * m_data[i] + (1.0 - b1) * g[i];
                v_data[i] = b2 * v_data[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m_data[i] / bias1;
                let v_hat = v_data[i] / bias2;
                p_data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::new(1e-4);
        let mut p = Tensor::from_vec(vec![1.0, -2.0, 3.0]);
        let g = Tensor::zeros(vec![3]);
        let before = p.clone();
        state.step(&mut [("p", &mut p, &g)]).unwrap();
        assert_eq!(p, before);
        let (m, v) = state.moments("p").unwrap();
        assert!(m.data().iter().all(|&x| x == 0.0));
        assert!(v.data().iter().all(|&x| x == 0.0));
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // Hand evaluation of the recurrence: m=0.1, v=0.001, m_hat=1,
        // v_hat=1, update = lr / (1 + eps).
        let mut state = AdamState::new(1e-4);
        let mut p = Tensor::scalar(0.0);
        let g = Tensor::scalar(1.0);
        state.step(&mut [("p", &mut p, &g)]).unwrap();
        let expected = -1e-4 / (1.0 + 1e-8);
        assert!((p.scalar_value() - expected).abs() < 1e-18);
    }

    #[test]
    fn constant_positive_gradient_descends_monotonically() {
        let mut state = AdamState::new(1e-3);
        let mut p = Tensor::scalar(1.0);
        let g = Tensor::scalar(1.0);
        let mut last = p.scalar_value();
        for _ in 0..2 {
            state.step(&mut [("p", &mut p, &g)]).unwrap();
            assert!(p.scalar_value() < last);
            last = p.scalar_value();
        }
    }

    #[test]
    fn gradient_shape_mismatch_is_an_error() {
        let mut state = AdamState::new(1e-4);
        let mut p = Tensor::zeros(vec![2, 2]);
        let g = Tensor::zeros(vec![4]);
        let err = state.step(&mut [("p", &mut p, &g)]).unwrap_err();
        assert!(matches!(err, TensorError::ShapeMismatch { .. }));
    }
}
