use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-5, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers for bias-corrected Adam, one pair per parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let first: Vec<_> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState { config, second: first.clone(), first, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update in place.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != params.len() {
            return Err(Error::shape(format!(
                "adam tracks {} tensors, got {} params and {} grads",
                self.first.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.first[i].shape() {
                return Err(Error::shape(format!(
                    "tensor {i}: param {:?}, grad {:?}, moments {:?}",
                    p.shape(),
                    g.shape(),
                    self.first[i].shape()
                )));
            }
        }

        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let b1 = T::from_f64(c.beta1);
        let b2 = T::from_f64(c.beta2);
        let corr1 = T::from_f64(1.0 - c.beta1.powi(t));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(t));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        let one = T::one();

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for (((pv, &gv), mv), vv) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mv = b1 * *mv + (one - b1) * gv;
                *vv = b2 * *vv + (one - b2) * gv * gv;
                let m_hat = *mv / corr1;
                let v_hat = *vv / corr2;
                *pv = *pv - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_state(lr: f64) -> (Vec<Tensor<f64>>, AdamState<f64>) {
        let params = vec![Tensor::scalar(1.0)];
        let cfg = AdamConfig { lr, ..AdamConfig::default() };
        let state = AdamState::new(cfg, &params);
        (params, state)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut params, mut state) = scalar_state(0.1);
        state.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        let delta = 1.0 - params[0].item();
        assert!((delta - 0.1).abs() < 0.1 * 1e-7);
        assert!(delta < 0.1);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let (mut params, mut state) = scalar_state(0.1);
        for _ in 0..5 {
            state.step(&mut params, &[Tensor::scalar(0.0)]).unwrap();
        }
        assert_eq!(params[0].item(), 1.0);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn two_steps_match_scalar_recurrence() {
        // Independent scalar recurrence written out by hand.
        let (lr, b1, b2, eps) = (0.1f64, 0.9f64, 0.999f64, 1e-8f64);
        let mut theta = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=2 {
            let g = 1.0;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            theta -= lr * mh / (vh.sqrt() + eps);
            expected.push(theta);
        }

        let (mut params, mut state) = scalar_state(lr);
        let mut got = Vec::new();
        for _ in 0..2 {
            state.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
            got.push(params[0].item());
        }
        assert!(got[0] < 1.0 && got[1] < got[0]);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let (mut params, mut state) = scalar_state(0.1);
        let err = state.step(&mut params, &[Tensor::vector(vec![1.0, 2.0])]);
        assert!(err.is_err());
        assert_eq!(state.step_count(), 0);
    }
}
