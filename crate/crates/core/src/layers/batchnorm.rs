use super::{dims4, LayerError};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T: Real> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    /// Weight of the current batch in the running average.
    pub momentum: f64,
    pub eps: f64,
}

/// Running statistics produced by a training-mode pass.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T: Real> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

/// Everything the backward pass needs from a training-mode pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T: Real> {
    shape: [usize; 4],
    x_hat: Vec<T>,
    inv_std: Vec<f64>,
    gamma: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormGrads<T: Real> {
    pub d_input: Tensor<T>,
    pub d_gamma: Tensor<T>,
    pub d_beta: Tensor<T>,
}

impl<T: Real> BatchNormParams<T> {
    /// gamma = 1, beta = 0, running statistics (0, 1).
    pub fn new(channels: usize) -> Self {
        let ones = Tensor::create(&[channels], T::one()).expect("channels >= 1");
        let zeros = Tensor::zeros(&[channels]).expect("channels >= 1");
        Self {
            gamma: ones.clone(),
            beta: zeros.clone(),
            running_mean: zeros,
            running_var: ones,
            momentum: DEFAULT_MOMENTUM,
            eps: DEFAULT_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn apply_running_stats(&mut self, stats: RunningStats<T>) {
        self.running_mean = stats.mean;
        self.running_var = stats.var;
    }

    fn check_input(&self, shape: &[usize]) -> Result<[usize; 4], LayerError> {
        let dims = dims4(shape, "batchnorm input")?;
        if dims[1] != self.channels() {
            return Err(LayerError::Shape(format!(
                "batchnorm input has {} channels, parameters have {}",
                dims[1],
                self.channels()
            )));
        }
        Ok(dims)
    }
}

/// Normalize with batch statistics (population variance) and return the
/// updated running statistics.
pub fn batchnorm_train<T: Real>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
) -> Result<(Tensor<T>, BatchNormCache<T>, RunningStats<T>), LayerError> {
    let [n, c, h, w] = params.check_input(input.shape())?;
    let plane = h * w;
    let count = n * plane;
    if count < 2 {
        return Err(LayerError::DegenerateBatch(count));
    }
    let x = input.data();
    let mut mean = vec![0.0f64; c];
    let mut var = vec![0.0f64; c];
    for ch in 0..c {
        let mut s = 0.0;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            s += x[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
        }
        let m = s / count as f64;
        let mut sq = 0.0;
        for b in 0..n {
            let off = (b * c + ch) * plane;
            sq += x[off..off + plane]
                .iter()
                .map(|v| (v.as_f64() - m).powi(2))
                .sum::<f64>();
        }
        mean[ch] = m;
        var[ch] = sq / count as f64;
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + params.eps).sqrt()).collect();

    let mut out = input.zeros_like();
    let mut x_hat = vec![T::zero(); x.len()];
    let gamma = params.gamma.data();
    let beta = params.beta.data();
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let (m, s) = (mean[ch], inv_std[ch]);
            let (g, be) = (gamma[ch], beta[ch]);
            for i in off..off + plane {
                let xh = T::from_f64((x[i].as_f64() - m) * s);
                x_hat[i] = xh;
                out.data_mut()[i] = g * xh + be;
            }
        }
    }

    let mom = params.momentum;
    let blend = |running: &Tensor<T>, batch: &[f64]| -> Vec<T> {
        running
            .data()
            .iter()
            .zip(batch)
            .map(|(r, b)| T::from_f64((1.0 - mom) * r.as_f64() + mom * b))
            .collect()
    };
    let stats = RunningStats {
        mean: Tensor::from_vec(&[c], blend(&params.running_mean, &mean)).expect("c >= 1"),
        var: Tensor::from_vec(&[c], blend(&params.running_var, &var)).expect("c >= 1"),
    };
    let cache = BatchNormCache {
        shape: [n, c, h, w],
        x_hat,
        inv_std,
        gamma: gamma.to_vec(),
    };
    Ok((out, cache, stats))
}

/// Normalize with the running statistics. Never mutates `params`.
pub fn batchnorm_infer<T: Real>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
) -> Result<Tensor<T>, LayerError> {
    let [n, c, h, w] = params.check_input(input.shape())?;
    let plane = h * w;
    let scale: Vec<f64> = (0..c)
        .map(|ch| params.gamma.data()[ch].as_f64() / (params.running_var.data()[ch].as_f64() + params.eps).sqrt())
        .collect();
    let mut out = input.zeros_like();
    let x = input.data();
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let m = params.running_mean.data()[ch].as_f64();
            let be = params.beta.data()[ch].as_f64();
            let s = scale[ch];
            for i in off..off + plane {
                out.data_mut()[i] = T::from_f64((x[i].as_f64() - m) * s + be);
            }
        }
    }
    Ok(out)
}

pub fn batchnorm_grad<T: Real>(
    cache: &BatchNormCache<T>,
    upstream: &Tensor<T>,
) -> Result<BatchNormGrads<T>, LayerError> {
    if upstream.shape() != cache.shape {
        return Err(LayerError::Cache(format!(
            "batchnorm cache was recorded for {:?}, upstream is {:?}",
            cache.shape,
            upstream.shape()
        )));
    }
    let [n, c, h, w] = cache.shape;
    let plane = h * w;
    let count = (n * plane) as f64;
    let u = upstream.data();
    let mut d_gamma = vec![0.0f64; c];
    let mut d_beta = vec![0.0f64; c];
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            for i in off..off + plane {
                let ui = u[i].as_f64();
                d_beta[ch] += ui;
                d_gamma[ch] += ui * cache.x_hat[i].as_f64();
            }
        }
    }
    let mut d_input = upstream.zeros_like();
    for b in 0..n {
        for ch in 0..c {
            let off = (b * c + ch) * plane;
            let k = cache.gamma[ch].as_f64() * cache.inv_std[ch] / count;
            for i in off..off + plane {
                let v = k
                    * (count * u[i].as_f64()
                        - d_beta[ch]
                        - cache.x_hat[i].as_f64() * d_gamma[ch]);
                d_input.data_mut()[i] = T::from_f64(v);
            }
        }
    }
    let to_tensor = |v: Vec<f64>| Tensor::from_vec(&[c], v.into_iter().map(T::from_f64).collect()).expect("c >= 1");
    Ok(BatchNormGrads {
        d_input,
        d_gamma: to_tensor(d_gamma),
        d_beta: to_tensor(d_beta),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::random_normal;

    fn channel_values(t: &Tensor<f64>, ch: usize) -> Vec<f64> {
        let [n, c, h, w] = dims4(t.shape(), "t").unwrap();
        let mut v = Vec::new();
        for b in 0..n {
            let off = (b * c + ch) * h * w;
            v.extend_from_slice(&t.data()[off..off + h * w]);
        }
        v
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::<f64>::create(&[2, 1, 3, 3], 4.2).unwrap();
        let mut p = BatchNormParams::new(1);
        p.beta.data_mut()[0] = 0.3;
        let (y, _, _) = batchnorm_train(&x, &p).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.3).abs() < 1e-12));
    }

    #[test]
    fn two_values_normalize_to_unit() {
        let x = Tensor::<f64>::from_vec(&[2, 1, 1, 1], vec![0.0, 2.0]).unwrap();
        let mut p = BatchNormParams::new(1);
        p.eps = 1e-12;
        let (y, _, stats) = batchnorm_train(&x, &p).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-9);
        assert!((y.data()[1] - 1.0).abs() < 1e-9);
        // running <- 0.9 * (0, 1) + 0.1 * (1, 1)
        assert!((stats.mean.data()[0] - 0.1).abs() < 1e-12);
        assert!((stats.var.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_element_batch_is_degenerate() {
        let x = Tensor::<f32>::zeros(&[1, 2, 1, 1]).unwrap();
        assert_eq!(
            batchnorm_train(&x, &BatchNormParams::new(2)).unwrap_err(),
            LayerError::DegenerateBatch(1)
        );
    }

    #[test]
    fn normalized_input_is_nearly_fixed() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let p = BatchNormParams::new(1);
        let (y, _, _) = batchnorm_train(&x, &p).unwrap();
        let factor = 1.0 / (1.0 + p.eps).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * factor).abs() < 1e-12);
        }
    }

    #[test]
    fn pre_affine_statistics() {
        let mut rng = RngStream::new(8);
        let x: Tensor<f64> = random_normal(&mut rng, &[3, 4, 5, 5], 2.0, 3.0).unwrap();
        let (y, _, _) = batchnorm_train(&x, &BatchNormParams::new(4)).unwrap();
        for ch in 0..4 {
            let v = channel_values(&y, ch);
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64;
            assert!(m.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn infer_with_default_stats() {
        let mut rng = RngStream::new(9);
        let x: Tensor<f64> = random_normal(&mut rng, &[2, 3, 2, 2], 0.0, 1.0).unwrap();
        let p = BatchNormParams::new(3);
        let y = batchnorm_infer(&x, &p).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b / (1.0 + p.eps).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn infer_matches_train_with_batch_stats() {
        let mut rng = RngStream::new(10);
        let x: Tensor<f64> = random_normal(&mut rng, &[2, 2, 3, 3], 1.0, 2.0).unwrap();
        let mut p = BatchNormParams::new(2);
        p.gamma = random_normal(&mut rng, &[2], 1.0, 0.5).unwrap();
        p.beta = random_normal(&mut rng, &[2], 0.0, 0.5).unwrap();
        p.momentum = 1.0;
        let (y_train, _, stats) = batchnorm_train(&x, &p).unwrap();
        p.apply_running_stats(stats);
        let y_infer = batchnorm_infer(&x, &p).unwrap();
        for (a, b) in y_train.data().iter().zip(y_infer.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gamma_outputs_beta() {
        let mut rng = RngStream::new(11);
        let x: Tensor<f64> = random_normal(&mut rng, &[1, 2, 3, 3], 0.0, 1.0).unwrap();
        let mut p = BatchNormParams::new(2);
        p.gamma = Tensor::zeros(&[2]).unwrap();
        p.beta = Tensor::from_vec(&[2], vec![0.5, -0.25]).unwrap();
        let y = batchnorm_infer(&x, &p).unwrap();
        for ch in 0..2 {
            assert!(channel_values(&y, ch).iter().all(|&v| v == p.beta.data()[ch]));
        }
    }

    #[test]
    fn grad_basics() {
        let mut rng = RngStream::new(12);
        let x: Tensor<f64> = random_normal(&mut rng, &[2, 2, 3, 3], 0.0, 1.0).unwrap();
        let p = BatchNormParams::new(2);
        let (_, cache, _) = batchnorm_train(&x, &p).unwrap();
        let g = batchnorm_grad(&cache, &x.zeros_like()).unwrap();
        assert!(g.d_input.data().iter().all(|&v| v == 0.0));
        assert!(g.d_gamma.data().iter().all(|&v| v == 0.0));

        let up: Tensor<f64> = random_normal(&mut rng, &[2, 2, 3, 3], 0.0, 1.0).unwrap();
        let g = batchnorm_grad(&cache, &up).unwrap();
        for ch in 0..2 {
            let s: f64 = channel_values(&up, ch).iter().sum();
            assert!((g.d_beta.data()[ch] - s).abs() < 1e-12);
        }

        let wrong = Tensor::<f64>::zeros(&[2, 2, 3, 2]).unwrap();
        assert!(matches!(batchnorm_grad(&cache, &wrong), Err(LayerError::Cache(_))));
    }
}
