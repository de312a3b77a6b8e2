use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::tensor::{Real, Tensor};

/// Adam hyperparameters (Keras defaults).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
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

/// First and second moment estimates. Moments are allocated lazily on the
/// first step, so a fresh state holds no tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T: Real> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T: Real>(
    params: &mut [&mut Tensor<T>],
    grads: &[&Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<(), TrainError> {
    if params.len() != grads.len() {
        return Err(TrainError::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(TrainError::Shape(format!(
                "parameter {i} has shape {:?}, gradient {:?}",
                p.shape(),
                g.shape()
            )));
        }
    }
    if state.m.is_empty() {
        state.m = params.iter().map(|p| p.zeros_like()).collect();
        state.v = state.m.clone();
    } else if state.m.len() != params.len()
        || state.m.iter().zip(params.iter()).any(|(m, p)| m.shape() != p.shape())
    {
        return Err(TrainError::Shape("optimizer moments do not match parameters".into()));
    }

    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
    let (ob1, ob2) = (T::from_f64(1.0 - beta1), T::from_f64(1.0 - beta2));
    let step_size = T::from_f64(lr / c1);
    let inv_sqrt_c2 = T::from_f64(1.0 / c2.sqrt());
    let eps = T::from_f64(eps);

    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        for (((pi, &gi), mi), vi) in p
            .data_mut()
            .iter_mut()
            .zip(g.data())
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1 * *mi + ob1 * gi;
            *vi = b2 * *vi + ob2 * gi * gi;
            // lr * m_hat / (sqrt(v_hat) + eps)
            *pi -= step_size * *mi / (vi.sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(g: &[f64], steps: usize, cfg: AdamConfig) -> (Vec<f64>, Vec<f64>) {
        let mut p = Tensor::<f64>::zeros(&[g.len()]).unwrap();
        let grad = Tensor::from_vec(&[g.len()], g.to_vec()).unwrap();
        let mut state = AdamState::new(cfg);
        let mut last = vec![0.0; g.len()];
        for _ in 0..steps {
            let before = p.data().to_vec();
            adam_step(&mut [&mut p], &[&grad], &mut state).unwrap();
            last = p.data().iter().zip(&before).map(|(a, b)| a - b).collect();
        }
        (p.into_data(), last)
    }

    #[test]
    fn zero_gradient_is_noop() {
        let (p, _) = run(&[0.0, 0.0], 5, AdamConfig::default());
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let (_, step) = run(&[3.0, -0.02, 150.0], 1, AdamConfig::default());
        for (s, sign) in step.iter().zip([-1.0, 1.0, -1.0]) {
            assert!((s - sign * 1e-3).abs() < 1e-8, "{s}");
        }
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let (_, step) = run(&[0.7], 5000, AdamConfig::default());
        assert!((step[0].abs() - 1e-3).abs() < 1e-6, "{}", step[0]);
    }

    #[test]
    fn zero_lr_is_identity() {
        let cfg = AdamConfig { lr: 0.0, ..Default::default() };
        let (p, _) = run(&[1.0, -2.0], 3, cfg);
        assert_eq!(p, vec![0.0, 0.0]);
    }

    #[test]
    fn large_gradient_scale_invariance() {
        let g: Vec<f64> = vec![0.5, -1.5, 2.0];
        let g100: Vec<f64> = g.iter().map(|x| x * 100.0).collect();
        let (a, _) = run(&g, 1, AdamConfig::default());
        let (b, _) = run(&g100, 1, AdamConfig::default());
        for (x, y) in a.iter().zip(&b) {
            assert!(((x - y) / y).abs() < 1e-4);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut p = Tensor::<f32>::zeros(&[2]).unwrap();
        let g = Tensor::<f32>::zeros(&[3]).unwrap();
        let mut s = AdamState::new(AdamConfig::default());
        assert!(adam_step(&mut [&mut p], &[&g], &mut s).is_err());
    }
}
