use super::{dims4, LayerError};
use crate::tensor::{Real, Tensor};

/// Argmax bookkeeping for [`maxpool2_grad`].
#[derive(Debug, Clone, PartialEq)]
pub struct PoolCache {
    input_shape: [usize; 4],
    /// Flat input offset of the winner for every output element.
    argmax: Vec<usize>,
}

impl PoolCache {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    pub fn input_shape(&self) -> [usize; 4] {
        self.input_shape
    }
}

/// 2x2 max pooling with stride 2. Ties go to the first cell in row-major
/// order.
pub fn maxpool2<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, PoolCache), LayerError> {
    let [n, c, h, w] = dims4(input.shape(), "maxpool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(LayerError::Shape(format!(
            "maxpool2 needs even spatial extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[n, c, oh, ow]).map_err(|e| LayerError::Shape(e.to_string()))?;
    let mut argmax = Vec::with_capacity(out.len());
    let x = input.data();
    let y = out.data_mut();
    let mut k = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let top = base + 2 * oy * w + 2 * ox;
                let mut best = top;
                for cand in [top + 1, top + w, top + w + 1] {
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                y[k] = x[best];
                argmax.push(best);
                k += 1;
            }
        }
    }
    Ok((
        out,
        PoolCache {
            input_shape: [n, c, h, w],
            argmax,
        },
    ))
}

pub fn maxpool2_grad<T: Real>(cache: &PoolCache, upstream: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, c, h, w] = cache.input_shape;
    if upstream.shape() != [n, c, h / 2, w / 2] {
        return Err(LayerError::Cache(format!(
            "pool cache was recorded for input {:?}, upstream is {:?}",
            cache.input_shape,
            upstream.shape()
        )));
    }
    let mut d = Tensor::zeros(&cache.input_shape).map_err(|e| LayerError::Shape(e.to_string()))?;
    let dx = d.data_mut();
    for (&idx, &u) in cache.argmax.iter().zip(upstream.data()) {
        dx[idx] += u;
    }
    Ok(d)
}

/// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
pub fn upsample_nn<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, c, h, w] = dims4(input.shape(), "upsample_nn")?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[n, c, oh, ow]).map_err(|e| LayerError::Shape(e.to_string()))?;
    let x = input.data();
    let y = out.data_mut();
    for plane in 0..n * c {
        let src = &x[plane * h * w..(plane + 1) * h * w];
        let dst = &mut y[plane * oh * ow..(plane + 1) * oh * ow];
        for iy in 0..h {
            let row = &mut dst[2 * iy * ow..(2 * iy + 1) * ow];
            for ix in 0..w {
                let v = src[iy * w + ix];
                row[2 * ix] = v;
                row[2 * ix + 1] = v;
            }
            let (first, second) = dst[2 * iy * ow..(2 * iy + 2) * ow].split_at_mut(ow);
            second.copy_from_slice(first);
        }
    }
    Ok(out)
}

/// Each input cell receives the sum of its four replicated upstream cells.
pub fn upsample_nn_grad<T: Real>(upstream: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, c, oh, ow] = dims4(upstream.shape(), "upsample_nn_grad")?;
    if oh % 2 != 0 || ow % 2 != 0 {
        return Err(LayerError::Shape(format!(
            "upsample gradient needs even extents, got {oh}x{ow}"
        )));
    }
    let (h, w) = (oh / 2, ow / 2);
    let mut d = Tensor::zeros(&[n, c, h, w]).map_err(|e| LayerError::Shape(e.to_string()))?;
    let u = upstream.data();
    let dx = d.data_mut();
    for plane in 0..n * c {
        let src = &u[plane * oh * ow..(plane + 1) * oh * ow];
        let dst = &mut dx[plane * h * w..(plane + 1) * h * w];
        for iy in 0..h {
            for ix in 0..w {
                let t = 2 * iy * ow + 2 * ix;
                dst[iy * w + ix] = src[t] + src[t + 1] + src[t + ow] + src[t + ow + 1];
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::random_normal;

    #[test]
    fn window_max_and_argmax() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (y, cache) = maxpool2(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(cache.argmax(), &[3]);
        let g = maxpool2_grad(&cache, &Tensor::create(&[1, 1, 1, 1], 2.5).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn ties_break_to_first_cell() {
        // Every assignment of values from {0, 1} to a window: the winner is the
        // first maximal cell in row-major order.
        for bits in 0u32..16 {
            let vals: Vec<f64> = (0..4).map(|i| ((bits >> i) & 1) as f64).collect();
            let x = Tensor::from_vec(&[1, 1, 2, 2], vals.clone()).unwrap();
            let (_, cache) = maxpool2(&x).unwrap();
            let max = vals.iter().cloned().fold(f64::MIN, f64::max);
            let first = vals.iter().position(|&v| v == max).unwrap();
            assert_eq!(cache.argmax()[0], first, "bits {bits:04b}");
        }
        let x = Tensor::<f32>::create(&[1, 2, 4, 4], 0.7).unwrap();
        let (y, cache) = maxpool2(&x).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.7));
        for (k, &idx) in cache.argmax().iter().enumerate() {
            let plane = k / 4;
            let (oy, ox) = ((k % 4) / 2, k % 2);
            assert_eq!(idx, plane * 16 + 2 * oy * 4 + 2 * ox);
        }
    }

    #[test]
    fn odd_extent_rejected() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 4]).unwrap();
        assert!(maxpool2(&x).is_err());
    }

    #[test]
    fn upsample_replicates() {
        let x = Tensor::<f32>::from_vec(&[1, 1, 1, 1], vec![3.0]).unwrap();
        assert_eq!(upsample_nn(&x).unwrap().data(), &[3.0; 4]);
        let x = Tensor::<f32>::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(
            upsample_nn(&x).unwrap().data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]
        );
    }

    #[test]
    fn pool_inverts_upsample() {
        let mut rng = RngStream::new(21);
        let x: Tensor<f32> = random_normal(&mut rng, &[2, 3, 3, 5], 0.0, 1.0).unwrap();
        let (y, _) = maxpool2(&upsample_nn(&x).unwrap()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn pool_grad_conserves_mass() {
        let mut rng = RngStream::new(22);
        let x: Tensor<f64> = random_normal(&mut rng, &[2, 2, 4, 6], 0.0, 1.0).unwrap();
        let (_, cache) = maxpool2(&x).unwrap();
        let up: Tensor<f64> = random_normal(&mut rng, &[2, 2, 2, 3], 0.0, 1.0).unwrap();
        let g = maxpool2_grad(&cache, &up).unwrap();
        assert!((g.sum() - up.sum()).abs() < 1e-12);
    }

    #[test]
    fn upsample_grad_sums_blocks() {
        let up = Tensor::<f64>::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(upsample_nn_grad(&up).unwrap().data(), &[10.0]);
    }
}
