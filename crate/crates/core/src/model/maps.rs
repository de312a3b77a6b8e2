use thiserror::Error;

use crate::tensor::{Real, Tensor};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("probability {value} at offset {offset} is outside [0, 1]")]
    NotProbability { offset: usize, value: f64 },
    #[error("mask value {value} at offset {offset} is not 0 or 1")]
    NotBinary { offset: usize, value: f64 },
    #[error("threshold {0} must lie in (0, 1)")]
    Threshold(f64),
    #[error("shape error: {0}")]
    Shape(String),
}

/// Foreground probabilities, `[N, H, W]`, every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap<T: Real = f32>(Tensor<T>);

/// Binary segmentation, `[N, H, W]`, every value exactly 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask<T: Real = f32>(Tensor<T>);

impl<T: Real> ProbMap<T> {
    pub fn new(t: Tensor<T>) -> Result<Self, MapError> {
        if let Some((offset, &v)) = t
            .data()
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= T::zero() && v <= T::one()))
        {
            return Err(MapError::NotProbability {
                offset,
                value: v.as_f64(),
            });
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn data(&self) -> &[T] {
        self.0.data()
    }
}

impl<T: Real> LabelMask<T> {
    pub fn new(t: Tensor<T>) -> Result<Self, MapError> {
        if let Some((offset, &v)) = t
            .data()
            .iter()
            .enumerate()
            .find(|(_, &v)| v != T::zero() && v != T::one())
        {
            return Err(MapError::NotBinary {
                offset,
                value: v.as_f64(),
            });
        }
        Ok(Self(t))
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<T> {
        self.0
    }

    pub fn shape(&self) -> &[usize] {
        self.0.shape()
    }

    pub fn data(&self) -> &[T] {
        self.0.data()
    }

    pub fn foreground(&self) -> usize {
        self.0.data().iter().filter(|&&v| v == T::one()).count()
    }

    pub fn cast<U: Real>(&self) -> LabelMask<U> {
        LabelMask(self.0.cast())
    }
}

/// 1 where `prob > threshold` (strict), else 0.
pub fn predict_mask<T: Real>(probs: &ProbMap<T>, threshold: f64) -> Result<LabelMask<T>, MapError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(MapError::Threshold(threshold));
    }
    let th = T::from_f64(threshold);
    Ok(LabelMask(probs.0.map(|p| if p > th { T::one() } else { T::zero() })))
}

fn dims_last2(shape: &[usize]) -> Result<(usize, usize, usize), MapError> {
    match shape {
        [h, w] => Ok((1, *h, *w)),
        [lead @ .., h, w] => Ok((lead.iter().product(), *h, *w)),
        _ => Err(MapError::Shape(format!("need at least 2 dims, got {shape:?}"))),
    }
}

/// Mean-pool the two trailing axes by `factor`.
pub fn shrink_mean<T: Real>(t: &Tensor<T>, factor: usize) -> Result<Tensor<T>, MapError> {
    if factor == 1 {
        return Ok(t.clone());
    }
    let (planes, h, w) = dims_last2(t.shape())?;
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(MapError::Shape(format!(
            "{h}x{w} not divisible by shrink factor {factor}"
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let scale = 1.0 / (factor * factor) as f64;
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &t.data()[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        s += src[(oy * factor + dy) * w + ox * factor + dx].as_f64();
                    }
                }
                out.push(T::from_f64(s * scale));
            }
        }
    }
    let mut shape = t.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    Tensor::from_vec(&shape, out).map_err(|e| MapError::Shape(e.to_string()))
}

/// Shrink a mask by majority vote (mean > 0.5).
pub fn shrink_mask<T: Real>(mask: &LabelMask<T>, factor: usize) -> Result<LabelMask<T>, MapError> {
    let pooled = shrink_mean(mask.tensor(), factor)?;
    Ok(LabelMask(pooled.map(|v| {
        if v > T::from_f64(0.5) {
            T::one()
        } else {
            T::zero()
        }
    })))
}

/// Nearest-neighbour expansion of the two trailing axes by `factor`.
pub fn expand_nearest<T: Real>(t: &Tensor<T>, factor: usize) -> Result<Tensor<T>, MapError> {
    if factor == 1 {
        return Ok(t.clone());
    }
    let (planes, h, w) = dims_last2(t.shape())?;
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(planes * oh * ow);
    for p in 0..planes {
        let src = &t.data()[p * h * w..(p + 1) * h * w];
        for oy in 0..oh {
            for ox in 0..ow {
                out.push(src[(oy / factor) * w + ox / factor]);
            }
        }
    }
    let mut shape = t.shape().to_vec();
    let r = shape.len();
    shape[r - 2] = oh;
    shape[r - 1] = ow;
    Tensor::from_vec(&shape, out).map_err(|e| MapError::Shape(e.to_string()))
}
