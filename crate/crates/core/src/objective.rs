//! Overlap losses (soft Jaccard distance, soft Dice) with analytic gradients,
//! and the evaluation metrics Dice / MSE / MAE.
//!
//! Loss sums run over every pixel of the whole batch.

use thiserror::Error;

use crate::model::{LabelMask, ProbMap, LossKind};
use crate::tensor::{Real, Tensor};

pub const DEFAULT_SMOOTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("shape mismatch: prediction {pred:?} vs truth {truth:?}")]
    Shape { pred: Vec<usize>, truth: Vec<usize> },
}

/// Loss value and its gradient with respect to the foreground probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T: Real> {
    pub value: f64,
    pub d_prob: Tensor<T>,
}

fn check(pred: &[usize], truth: &[usize]) -> Result<(), ObjectiveError> {
    if pred != truth {
        return Err(ObjectiveError::Shape {
            pred: pred.to_vec(),
            truth: truth.to_vec(),
        });
    }
    Ok(())
}

/// `(sum p*t, sum p, sum t)` accumulated in f64.
fn overlap_sums<T: Real>(pred: &[T], truth: &[T]) -> (f64, f64, f64) {
    let mut inter = 0.0;
    let mut sp = 0.0;
    let mut st = 0.0;
    for (&p, &t) in pred.iter().zip(truth) {
        let (p, t) = (p.as_f64(), t.as_f64());
        inter += p * t;
        sp += p;
        st += t;
    }
    (inter, sp, st)
}

/// `1 - (I + s) / (P + T - I + s)` with `I = sum p*t`.
pub fn jaccard_loss<T: Real>(
    pred: &ProbMap<T>,
    truth: &LabelMask<T>,
    smooth: f64,
) -> Result<LossValue<T>, ObjectiveError> {
    check(pred.shape(), truth.shape())?;
    let (inter, sp, st) = overlap_sums(pred.data(), truth.data());
    let num = inter + smooth;
    let den = sp + st - inter + smooth;
    let value = 1.0 - num / den;
    let den2 = den * den;
    let d_prob = Tensor::from_vec(
        pred.shape(),
        truth
            .data()
            .iter()
            .map(|&t| {
                let t = t.as_f64();
                T::from_f64(-(t * den - num * (1.0 - t)) / den2)
            })
            .collect(),
    )
    .expect("shape checked");
    Ok(LossValue { value, d_prob })
}

/// `1 - (2I + s) / (P + T + s)`.
pub fn dice_loss<T: Real>(
    pred: &ProbMap<T>,
    truth: &LabelMask<T>,
    smooth: f64,
) -> Result<LossValue<T>, ObjectiveError> {
    check(pred.shape(), truth.shape())?;
    let (inter, sp, st) = overlap_sums(pred.data(), truth.data());
    let num = 2.0 * inter + smooth;
    let den = sp + st + smooth;
    let value = 1.0 - num / den;
    let den2 = den * den;
    let d_prob = Tensor::from_vec(
        pred.shape(),
        truth
            .data()
            .iter()
            .map(|&t| T::from_f64(-(2.0 * t.as_f64() * den - num) / den2))
            .collect(),
    )
    .expect("shape checked");
    Ok(LossValue { value, d_prob })
}

pub fn loss<T: Real>(
    kind: LossKind,
    pred: &ProbMap<T>,
    truth: &LabelMask<T>,
    smooth: f64,
) -> Result<LossValue<T>, ObjectiveError> {
    match kind {
        LossKind::Jaccard => jaccard_loss(pred, truth, smooth),
        LossKind::Dice => dice_loss(pred, truth, smooth),
    }
}

/// `2|A ∩ B| / (|A| + |B|)`, and 1 when both masks are empty.
pub fn dice_coefficient<T: Real>(pred: &LabelMask<T>, truth: &LabelMask<T>) -> Result<f64, ObjectiveError> {
    check(pred.shape(), truth.shape())?;
    let (inter, a, b) = overlap_sums(pred.data(), truth.data());
    if a + b == 0.0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter / (a + b))
}

pub fn mse<T: Real>(pred: &ProbMap<T>, truth: &LabelMask<T>) -> Result<f64, ObjectiveError> {
    check(pred.shape(), truth.shape())?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| (p.as_f64() - t.as_f64()).powi(2))
        .sum();
    Ok(s / pred.data().len() as f64)
}

pub fn mae<T: Real>(pred: &ProbMap<T>, truth: &LabelMask<T>) -> Result<f64, ObjectiveError> {
    check(pred.shape(), truth.shape())?;
    let s: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(&p, &t)| (p.as_f64() - t.as_f64()).abs())
        .sum();
    Ok(s / pred.data().len() as f64)
}
