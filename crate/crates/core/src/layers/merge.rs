use super::{dims4, LayerError};
use crate::tensor::{Real, Tensor};

/// Stack `a` (encoder skip) then `b` (decoder path) along the channel axis.
pub fn concat_channels<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    let [n, ca, h, w] = dims4(a.shape(), "concat lhs")?;
    let [nb, cb, hb, wb] = dims4(b.shape(), "concat rhs")?;
    if (n, h, w) != (nb, hb, wb) {
        return Err(LayerError::Shape(format!(
            "concat operands disagree on batch/spatial size: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let plane = h * w;
    let mut data = Vec::with_capacity(n * (ca + cb) * plane);
    for i in 0..n {
        data.extend_from_slice(&a.data()[i * ca * plane..(i + 1) * ca * plane]);
        data.extend_from_slice(&b.data()[i * cb * plane..(i + 1) * cb * plane]);
    }
    Tensor::from_vec(&[n, ca + cb, h, w], data).map_err(|e| LayerError::Shape(e.to_string()))
}

/// Split a tensor into its first `channels` channels and the remainder.
pub fn split_channels<T: Real>(x: &Tensor<T>, channels: usize) -> Result<(Tensor<T>, Tensor<T>), LayerError> {
    let [n, c, h, w] = dims4(x.shape(), "split")?;
    if channels == 0 || channels >= c {
        return Err(LayerError::Shape(format!(
            "cannot split {c} channels at {channels}"
        )));
    }
    let plane = h * w;
    let (ca, cb) = (channels, c - channels);
    let mut a = Vec::with_capacity(n * ca * plane);
    let mut b = Vec::with_capacity(n * cb * plane);
    for i in 0..n {
        let img = &x.data()[i * c * plane..(i + 1) * c * plane];
        a.extend_from_slice(&img[..ca * plane]);
        b.extend_from_slice(&img[ca * plane..]);
    }
    let wrap = |e: crate::tensor::TensorError| LayerError::Shape(e.to_string());
    Ok((
        Tensor::from_vec(&[n, ca, h, w], a).map_err(wrap)?,
        Tensor::from_vec(&[n, cb, h, w], b).map_err(wrap)?,
    ))
}

/// Gradient of [`concat_channels`]: the upstream split at `encoder_channels`.
pub fn concat_channels_grad<T: Real>(
    upstream: &Tensor<T>,
    encoder_channels: usize,
) -> Result<(Tensor<T>, Tensor<T>), LayerError> {
    split_channels(upstream, encoder_channels)
}

/// Elementwise sum. The gradient with respect to either operand is the
/// upstream itself.
pub fn residual_add<T: Real>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>, LayerError> {
    if x.shape() != y.shape() {
        return Err(LayerError::Shape(format!(
            "residual operands differ: {:?} vs {:?}",
            x.shape(),
            y.shape()
        )));
    }
    let mut out = x.clone();
    for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
        *o += v;
    }
    Ok(out)
}
