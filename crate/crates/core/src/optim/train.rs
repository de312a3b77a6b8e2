use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{adam_step, AdamState, TrainError};
use crate::augment::{augment_pair, AugmentConfig};
use crate::model::{expand_nearest, predict_mask, shrink_mask, shrink_mean, LabelMask, Network, ProbMap};
use crate::objective::{dice_coefficient, loss, mae, mse, DEFAULT_SMOOTH};
use crate::rng::{derive_seed, RngStream};
use crate::tensor::Tensor;

/// Stream tag separating the per-cycle shuffles from per-sample augmentation.
const SHUFFLE_TAG: u64 = 0x5348_5546;
/// Slices per inference forward pass.
const INFER_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainPlan {
    pub epochs: u64,
    pub batch_size: usize,
    pub samples_per_epoch: usize,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// Save a checkpoint every this many epochs; 0 saves only the final one.
    pub checkpoint_every: u64,
    /// Also evaluate the (unaugmented) training split after every epoch.
    pub log_train_metrics: bool,
    /// When false, `wall_seconds` is logged as 0 so that run logs are
    /// byte-reproducible.
    pub record_wall_time: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 16,
            samples_per_epoch: 5500,
            seed: 0,
            augment: AugmentConfig::default(),
            checkpoint_every: 1,
            log_train_metrics: true,
            record_wall_time: true,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 || self.batch_size == 0 || self.samples_per_epoch == 0 {
            return Err(TrainError::Config(
                "epochs, batch_size and samples_per_epoch must be positive".into(),
            ));
        }
        self.augment.validate()?;
        Ok(())
    }
}

/// One slice: `[H, W]` image in `[0, 1]` and its optional mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub case: String,
    pub image: Tensor<f32>,
    pub mask: Option<LabelMask<f32>>,
}

/// Machine-readable record of one epoch (one JSON line in the run log).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: u64,
    pub mean_loss: f64,
    pub val_dice: Option<f64>,
    pub val_mse: Option<f64>,
    pub val_mae: Option<f64>,
    pub wall_seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_dice: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_mse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_mae: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub dice: f64,
    pub mse: f64,
    pub mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    pub case: String,
    pub slices: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Per-case rows and their mean / sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: Vec<CaseMetrics>,
    pub mean: Metrics,
    pub std: Metrics,
}

impl EvalReport {
    fn from_cases(cases: Vec<CaseMetrics>) -> Self {
        let n = cases.len() as f64;
        let mean = |f: fn(&Metrics) -> f64| cases.iter().map(|c| f(&c.metrics)).sum::<f64>() / n;
        let std = |f: fn(&Metrics) -> f64, m: f64| {
            if cases.len() < 2 {
                return 0.0;
            }
            (cases.iter().map(|c| (f(&c.metrics) - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        let m = Metrics {
            dice: mean(|m| m.dice),
            mse: mean(|m| m.mse),
            mae: mean(|m| m.mae),
        };
        let s = Metrics {
            dice: std(|m| m.dice, m.dice),
            mse: std(|m| m.mse, m.mse),
            mae: std(|m| m.mae, m.mae),
        };
        Self {
            cases,
            mean: m,
            std: s,
        }
    }

    /// Plain-text table with Dice / MSE / MAE columns.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<16} {:>6} {:>10} {:>10} {:>10}\n", "case", "slices", "Dice", "MSE", "MAE");
        for c in &self.cases {
            out += &format!(
                "{:<16} {:>6} {:>10.4} {:>10.4} {:>10.4}\n",
                c.case, c.slices, c.metrics.dice, c.metrics.mse, c.metrics.mae
            );
        }
        out += &format!(
            "{:<16} {:>6} {:>10.4} {:>10.4} {:>10.4}\n",
            "mean", "", self.mean.dice, self.mean.mse, self.mean.mae
        );
        out += &format!(
            "{:<16} {:>6} {:>10.4} {:>10.4} {:>10.4}\n",
            "std", "", self.std.dice, self.std.mse, self.std.mae
        );
        out
    }
}

fn image_size(s: &Sample) -> Result<(usize, usize), TrainError> {
    match *s.image.shape() {
        [h, w] => Ok((h, w)),
        _ => Err(TrainError::Data(format!(
            "case {}: expected an [H, W] slice, got {:?}",
            s.case,
            s.image.shape()
        ))),
    }
}

fn check_sizes(net: &Network<f32>, samples: &[Sample]) -> Result<(), TrainError> {
    let expect = net.config().input_size;
    for s in samples {
        let size = image_size(s)?;
        if size != expect {
            return Err(TrainError::Data(format!(
                "case {}: slice is {}x{}, network expects {}x{}",
                s.case, size.0, size.1, expect.0, expect.1
            )));
        }
        if let Some(m) = &s.mask {
            if m.shape() != s.image.shape() {
                return Err(TrainError::Data(format!("case {}: mask and image sizes differ", s.case)));
            }
        }
    }
    Ok(())
}

fn require_mask(s: &Sample) -> Result<&LabelMask<f32>, TrainError> {
    s.mask
        .as_ref()
        .ok_or_else(|| TrainError::Data(format!("case {} has no mask", s.case)))
}

/// Source slice index for each of the `count` samples of an epoch: the
/// training set is cycled, reshuffled at the start of every cycle.
pub fn epoch_order(n: usize, count: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order = Vec::with_capacity(count);
    let mut cycle = 0u64;
    while order.len() < count {
        let mut perm: Vec<usize> = (0..n).collect();
        RngStream::new(derive_seed(&[seed, epoch, SHUFFLE_TAG, cycle])).shuffle(&mut perm);
        let take = (count - order.len()).min(n);
        order.extend_from_slice(&perm[..take]);
        cycle += 1;
    }
    order
}

/// Augmented pair for sample `index` of `epoch`. The stream depends only on
/// `(seed, epoch, index)`, so results are independent of scheduling.
pub fn augmented_sample(
    sample: &Sample,
    augment: &AugmentConfig,
    seed: u64,
    epoch: u64,
    index: u64,
) -> Result<(Tensor<f32>, LabelMask<f32>), TrainError> {
    let mask = require_mask(sample)?;
    if !augment.any_enabled() {
        return Ok((sample.image.clone(), mask.clone()));
    }
    let mut rng = RngStream::new(derive_seed(&[seed, epoch, index]));
    Ok(augment_pair(&sample.image, mask, &mut rng, augment)?)
}

/// Stack `[H, W]` slices into `[N, 1, h, w]` at network resolution.
fn stack_images(images: &[&Tensor<f32>], factor: usize) -> Result<Tensor<f32>, TrainError> {
    let mut data = Vec::new();
    let mut hw = (0, 0);
    for img in images {
        let s = shrink_mean(img, factor)?;
        hw = (s.shape()[0], s.shape()[1]);
        data.extend_from_slice(s.data());
    }
    Tensor::from_vec(&[images.len(), 1, hw.0, hw.1], data).map_err(|e| TrainError::Shape(e.to_string()))
}

fn stack_masks(masks: &[LabelMask<f32>], factor: usize) -> Result<LabelMask<f32>, TrainError> {
    let mut data = Vec::new();
    let mut hw = (0, 0);
    for m in masks {
        let s = shrink_mask(m, factor)?;
        hw = (s.shape()[0], s.shape()[1]);
        data.extend_from_slice(s.data());
    }
    let t = Tensor::from_vec(&[masks.len(), hw.0, hw.1], data).map_err(|e| TrainError::Shape(e.to_string()))?;
    Ok(LabelMask::new(t)?)
}

/// Train for one epoch and return its mean loss (weighted by batch size).
pub fn train_epoch(
    net: &mut Network<f32>,
    train: &[Sample],
    plan: &TrainPlan,
    state: &mut AdamState<f32>,
    epoch: u64,
) -> Result<f64, TrainError> {
    if train.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    plan.validate()?;
    check_sizes(net, train)?;
    let factor = net.config().shrink_factor;
    let kind = net.config().loss;
    let order = epoch_order(train.len(), plan.samples_per_epoch, plan.seed, epoch);
    let mut total = 0.0;
    for (b, chunk) in order.chunks(plan.batch_size).enumerate() {
        let base = b * plan.batch_size;
        let pairs: Vec<(Tensor<f32>, LabelMask<f32>)> = chunk
            .par_iter()
            .enumerate()
            .map(|(j, &src)| augmented_sample(&train[src], &plan.augment, plan.seed, epoch, (base + j) as u64))
            .collect::<Result<_, _>>()?;
        let images: Vec<&Tensor<f32>> = pairs.iter().map(|p| &p.0).collect();
        let masks: Vec<LabelMask<f32>> = pairs.iter().map(|p| p.1.clone()).collect();
        let x = stack_images(&images, factor)?;
        let t = stack_masks(&masks, factor)?;
        let (p, cache) = net.forward_train(&x)?;
        let l = loss(kind, &p, &t, DEFAULT_SMOOTH)?;
        if !l.value.is_finite() {
            return Err(TrainError::Data(format!("non-finite loss in epoch {epoch}, batch {b}")));
        }
        let grads = net.backward(&cache, &l.d_prob)?;
        let g = grads.tensors();
        adam_step(&mut net.parameters_mut(), &g, state)?;
        total += l.value * chunk.len() as f64;
    }
    Ok(total / plan.samples_per_epoch as f64)
}

/// Inference-mode foreground probabilities for `[H, W]` slices, at the
/// resolution of the input slices.
pub fn predict_slices(net: &Network<f32>, images: &[&Tensor<f32>]) -> Result<Vec<ProbMap<f32>>, TrainError> {
    let factor = net.config().shrink_factor;
    let chunks: Vec<&[&Tensor<f32>]> = images.chunks(INFER_CHUNK).collect();
    let per_chunk: Vec<Vec<ProbMap<f32>>> = chunks
        .par_iter()
        .map(|chunk| {
            let x = stack_images(chunk, factor)?;
            let p = net.forward_infer(&x)?;
            let full = expand_nearest(p.tensor(), factor)?;
            let (h, w) = (full.shape()[1], full.shape()[2]);
            let plane = h * w;
            (0..chunk.len())
                .map(|i| {
                    let t = Tensor::from_vec(&[h, w], full.data()[i * plane..(i + 1) * plane].to_vec())
                        .map_err(|e| TrainError::Shape(e.to_string()))?;
                    Ok(ProbMap::new(t)?)
                })
                .collect::<Result<Vec<_>, TrainError>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(per_chunk.into_iter().flatten().collect())
}

fn stack_plain(items: &[Tensor<f32>]) -> Tensor<f32> {
    let (h, w) = (items[0].shape()[0], items[0].shape()[1]);
    let data: Vec<f32> = items.iter().flat_map(|t| t.data().iter().copied()).collect();
    Tensor::from_vec(&[items.len(), h, w], data).expect("equal slice sizes")
}

/// Metrics of one case from per-slice probabilities and truths: Dice of the
/// 0.5-thresholded masks pooled over all slices, MSE / MAE of the
/// probabilities.
pub fn case_metrics(probs: &[ProbMap<f32>], truths: &[&LabelMask<f32>]) -> Result<Metrics, TrainError> {
    let p = ProbMap::new(stack_plain(&probs.iter().map(|p| p.tensor().clone()).collect::<Vec<_>>()))?;
    let t = LabelMask::new(stack_plain(
        &truths.iter().map(|t| t.tensor().clone()).collect::<Vec<_>>(),
    ))?;
    let pred = predict_mask(&p, 0.5)?;
    Ok(Metrics {
        dice: dice_coefficient(&pred, &t)?,
        mse: mse(&p, &t)?,
        mae: mae(&p, &t)?,
    })
}

/// Infer-mode evaluation grouped by case (in order of first appearance).
pub fn evaluate(net: &Network<f32>, samples: &[Sample]) -> Result<EvalReport, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::Data("evaluation set is empty".into()));
    }
    check_sizes(net, samples)?;
    for s in samples {
        require_mask(s)?;
    }
    let images: Vec<&Tensor<f32>> = samples.iter().map(|s| &s.image).collect();
    let probs = predict_slices(net, &images)?;
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        let g = *index.entry(&s.case).or_insert_with(|| {
            groups.push((s.case.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }
    let cases = groups
        .into_iter()
        .map(|(case, idx)| {
            let p: Vec<ProbMap<f32>> = idx.iter().map(|&i| probs[i].clone()).collect();
            let t: Vec<&LabelMask<f32>> = idx.iter().map(|&i| samples[i].mask.as_ref().expect("checked")).collect();
            Ok(CaseMetrics {
                case,
                slices: idx.len(),
                metrics: case_metrics(&p, &t)?,
            })
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    Ok(EvalReport::from_cases(cases))
}

/// One training epoch followed by validation (and optionally training-set)
/// metrics.
pub fn run_epoch(
    net: &mut Network<f32>,
    train: &[Sample],
    validation: &[Sample],
    plan: &TrainPlan,
    state: &mut AdamState<f32>,
    epoch: u64,
) -> Result<EpochReport, TrainError> {
    let start = Instant::now();
    let mean_loss = train_epoch(net, train, plan, state, epoch)?;
    let val = if validation.is_empty() {
        None
    } else {
        Some(evaluate(net, validation)?.mean)
    };
    let tr = if plan.log_train_metrics {
        Some(evaluate(net, train)?.mean)
    } else {
        None
    };
    let wall_seconds = if plan.record_wall_time {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    };
    Ok(EpochReport {
        epoch,
        mean_loss,
        val_dice: val.map(|m| m.dice),
        val_mse: val.map(|m| m.mse),
        val_mae: val.map(|m| m.mae),
        wall_seconds,
        train_dice: tr.map(|m| m.dice),
        train_mse: tr.map(|m| m.mse),
        train_mae: tr.map(|m| m.mae),
    })
}

/// Deterministic case-level split: the sorted case ids are shuffled with
/// `seed` and the last `validation_fraction` of them (at least one when two
/// or more cases exist) form the validation split.
pub fn split_cases(samples: &[Sample], validation_fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut ids: Vec<&str> = samples.iter().map(|s| s.case.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    RngStream::new(derive_seed(&[seed, SHUFFLE_TAG])).shuffle(&mut ids);
    let mut n_val = (ids.len() as f64 * validation_fraction).round() as usize;
    if n_val == 0 && ids.len() >= 2 && validation_fraction > 0.0 {
        n_val = 1;
    }
    n_val = n_val.min(ids.len().saturating_sub(1));
    let val: Vec<&str> = ids[ids.len() - n_val..].to_vec();
    samples
        .iter()
        .cloned()
        .partition(|s| !val.contains(&s.case.as_str()))
}
