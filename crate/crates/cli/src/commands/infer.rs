use std::fs;
use std::path::Path;
use std::time::Instant;

use myoseg::dataio::{read_volume, write_overlay, write_volume, Dtype, VolumeHeader};
use myoseg::model::{predict_mask, LabelMask};
use myoseg::optim::predict_slices;
use myoseg::tensor::Tensor;

use super::open_checkpoint;
use crate::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct InferSummary {
    pub slices: usize,
    pub wall_seconds: f64,
}

fn slice(t: &Tensor<f32>, k: usize) -> Tensor<f32> {
    let (h, w) = (t.shape()[1], t.shape()[2]);
    Tensor::from_vec(&[h, w], t.data()[k * h * w..(k + 1) * h * w].to_vec()).expect("slice of a volume")
}

/// Writes `probabilities.vol` (f32), `mask.vol` (u8) and one PPM overlay per
/// slice under `out`.
pub fn infer(checkpoint: &Path, volume: &Path, out: &Path, truth: Option<&Path>) -> CliResult<InferSummary> {
    let ck = open_checkpoint(checkpoint)?;
    let read = |p: &Path| {
        if !p.is_file() {
            return Err(CliError::Usage(format!("volume {} does not exist", p.display())));
        }
        read_volume(p).map_err(|e| CliError::Runtime(format!("{} ({}): {e}", p.display(), e.code())))
    };
    let (vol, header) = read(volume)?;
    let [w, h, s] = header.dims;
    let want = ck.network.config().input_size;
    if (h, w) != want {
        return Err(CliError::Usage(format!(
            "volume slices are {h}x{w}, the network expects {}x{}",
            want.0, want.1
        )));
    }
    let truth = truth.map(read).transpose()?.map(|(t, _)| t);
    if let Some(t) = &truth {
        if t.shape() != vol.shape() {
            return Err(CliError::Usage("truth volume does not match the image volume".into()));
        }
    }
    fs::create_dir_all(out).map_err(CliError::runtime)?;

    let start = Instant::now();
    let slices: Vec<Tensor<f32>> = (0..s).map(|k| slice(&vol, k)).collect();
    let refs: Vec<&Tensor<f32>> = slices.iter().collect();
    let probs = predict_slices(&ck.network, &refs).map_err(CliError::runtime)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut prob_data = Vec::with_capacity(vol.len());
    let mut mask_data = Vec::with_capacity(vol.len());
    for (k, p) in probs.iter().enumerate() {
        let m = predict_mask(p, 0.5).map_err(CliError::runtime)?;
        prob_data.extend_from_slice(p.data());
        mask_data.extend_from_slice(m.data());
        let reference = match &truth {
            Some(t) => LabelMask::new(slice(t, k)).map_err(|e| CliError::Usage(format!("truth volume: {e}")))?,
            None => m.clone(),
        };
        let image = slices[k].map(|v| v.clamp(0.0, 1.0));
        write_overlay(&out.join(format!("slice{k:02}_overlay.ppm")), &image, &reference, &m)
            .map_err(CliError::runtime)?;
    }
    let shape = vol.shape().to_vec();
    let pv = Tensor::from_vec(&shape, prob_data).expect("volume shape");
    let mv = Tensor::from_vec(&shape, mask_data).expect("volume shape");
    let mut ph = VolumeHeader::for_tensor(&pv, Dtype::F32).map_err(CliError::runtime)?;
    ph.spacing = header.spacing;
    ph.slice_thickness = header.slice_thickness;
    let mh = VolumeHeader {
        dtype: Dtype::U8,
        ..ph.clone()
    };
    write_volume(&out.join("probabilities.vol"), &pv, &ph).map_err(CliError::runtime)?;
    write_volume(&out.join("mask.vol"), &mv, &mh).map_err(CliError::runtime)?;
    Ok(InferSummary { slices: s, wall_seconds })
}
