use super::{dims4, LayerError};
use crate::tensor::{Real, Tensor};

pub fn relu<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|x| if x > T::zero() { x } else { T::zero() })
}

/// Upstream passes where the forward input was strictly positive.
pub fn relu_grad<T: Real>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    if input.shape() != upstream.shape() {
        return Err(LayerError::Shape(format!(
            "relu upstream {:?} does not match input {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    let mut out = upstream.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(input.data()) {
        if x <= T::zero() {
            *o = T::zero();
        }
    }
    Ok(out)
}

fn check_two_channels(shape: &[usize]) -> Result<[usize; 4], LayerError> {
    let dims = dims4(shape, "softmax")?;
    if dims[1] != 2 {
        return Err(LayerError::Shape(format!(
            "softmax expects exactly 2 channels, got {}",
            dims[1]
        )));
    }
    Ok(dims)
}

/// Per-pixel softmax over the channel axis of `[N, 2, H, W]` logits.
pub fn softmax_channels<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, _, h, w] = check_two_channels(logits.shape())?;
    let plane = h * w;
    let z = logits.data();
    let mut out = logits.zeros_like();
    let p = out.data_mut();
    for b in 0..n {
        let base = b * 2 * plane;
        for i in 0..plane {
            let (a, c) = (z[base + i], z[base + plane + i]);
            let m = a.max(c);
            let ea = (a - m).exp();
            let ec = (c - m).exp();
            let s = ea + ec;
            p[base + i] = ea / s;
            p[base + plane + i] = ec / s;
        }
    }
    Ok(out)
}

/// Gradient with respect to the logits, given the softmax output.
pub fn softmax_channels_grad<T: Real>(probs: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, _, h, w] = check_two_channels(probs.shape())?;
    if upstream.shape() != probs.shape() {
        return Err(LayerError::Shape(format!(
            "softmax upstream {:?} does not match {:?}",
            upstream.shape(),
            probs.shape()
        )));
    }
    let plane = h * w;
    let p = probs.data();
    let u = upstream.data();
    let mut out = probs.zeros_like();
    let d = out.data_mut();
    for b in 0..n {
        let base = b * 2 * plane;
        for i in 0..plane {
            let (i0, i1) = (base + i, base + plane + i);
            let dot = p[i0] * u[i0] + p[i1] * u[i1];
            d[i0] = p[i0] * (u[i0] - dot);
            d[i1] = p[i1] * (u[i1] - dot);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let x = Tensor::<f32>::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = relu_grad(&x, &Tensor::create(&[3], 5.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[0.0, 0.0, 5.0]);
    }

    #[test]
    fn relu_all_negative() {
        let x = Tensor::<f64>::create(&[2, 2], -0.5).unwrap();
        assert!(relu(&x).data().iter().all(|&v| v == 0.0));
        let g = relu_grad(&x, &Tensor::create(&[2, 2], 1.0).unwrap()).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    fn pair(a: f64, b: f64) -> (f64, f64) {
        let z = Tensor::from_vec(&[1, 2, 1, 1], vec![a, b]).unwrap();
        let p = softmax_channels(&z).unwrap();
        (p.data()[0], p.data()[1])
    }

    #[test]
    fn softmax_closed_forms() {
        assert_eq!(pair(0.3, 0.3), (0.5, 0.5));
        let (a, b) = pair(2f64.ln(), 0.0);
        assert!((a - 2.0 / 3.0).abs() < 1e-15 && (b - 1.0 / 3.0).abs() < 1e-15);
        let (a, b) = pair(50.0, -50.0);
        assert!(a.is_finite() && b.is_finite());
        assert!((a - 1.0).abs() < 1e-15 && b < 1e-40);
        let z = Tensor::<f32>::from_vec(&[1, 2, 1, 1], vec![1000.0, -1000.0]).unwrap();
        let p = softmax_channels(&z).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_needs_two_channels() {
        let z = Tensor::<f32>::zeros(&[1, 3, 2, 2]).unwrap();
        assert!(matches!(softmax_channels(&z), Err(LayerError::Shape(_))));
    }
}
