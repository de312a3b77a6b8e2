//! Binary PGM (P5) and PPM (P6) exports for qualitative inspection.

use std::fs;
use std::path::Path;

use super::DataError;
use crate::model::LabelMask;
use crate::tensor::Tensor;

/// Pixels where prediction and truth are both foreground.
pub const AGREEMENT_RGB: [u8; 3] = [255, 255, 0];
/// Pixels where exactly one of prediction and truth is foreground.
pub const DISAGREEMENT_RGB: [u8; 3] = [255, 0, 255];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OverlayCounts {
    pub agreement: usize,
    pub disagreement: usize,
}

fn dims(t: &Tensor<f32>) -> Result<(usize, usize), DataError> {
    match *t.shape() {
        [h, w] => Ok((h, w)),
        _ => Err(DataError::Shape(format!("expected an [H, W] image, got {:?}", t.shape()))),
    }
}

/// `round(v * 255)` for `v` in `[0, 1]`.
fn to_byte(v: f32) -> Result<u8, DataError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(DataError::Domain(format!("pixel value {v} outside [0, 1]")));
    }
    Ok((v as f64 * 255.0).round() as u8)
}

pub fn encode_pgm(image: &Tensor<f32>) -> Result<Vec<u8>, DataError> {
    let (h, w) = dims(image)?;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in image.data() {
        out.push(to_byte(v)?);
    }
    Ok(out)
}

pub fn write_pgm(path: &Path, image: &Tensor<f32>) -> Result<(), DataError> {
    let bytes = encode_pgm(image)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn encode_overlay(
    image: &Tensor<f32>,
    truth: &LabelMask<f32>,
    pred: &LabelMask<f32>,
) -> Result<(Vec<u8>, OverlayCounts), DataError> {
    let (h, w) = dims(image)?;
    if truth.shape() != image.shape() || pred.shape() != image.shape() {
        return Err(DataError::Shape(format!(
            "image {:?}, truth {:?} and prediction {:?} differ",
            image.shape(),
            truth.shape(),
            pred.shape()
        )));
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let mut counts = OverlayCounts::default();
    for ((&v, &t), &p) in image.data().iter().zip(truth.data()).zip(pred.data()) {
        let g = to_byte(v)?;
        let rgb = match (t > 0.5, p > 0.5) {
            (true, true) => {
                counts.agreement += 1;
                AGREEMENT_RGB
            }
            (false, false) => [g, g, g],
            _ => {
                counts.disagreement += 1;
                DISAGREEMENT_RGB
            }
        };
        out.extend_from_slice(&rgb);
    }
    Ok((out, counts))
}

/// Grayscale image with agreement and disagreement pixels tinted.
pub fn write_overlay(
    path: &Path,
    image: &Tensor<f32>,
    truth: &LabelMask<f32>,
    pred: &LabelMask<f32>,
) -> Result<OverlayCounts, DataError> {
    let (bytes, counts) = encode_overlay(image, truth, pred)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))?;
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(v: &[f32]) -> LabelMask<f32> {
        LabelMask::new(Tensor::from_vec(&[2, 3], v.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn pgm_levels() {
        for (v, b) in [(1.0, 255u8), (0.0, 0), (0.5, 128)] {
            let img = Tensor::create(&[2, 3], v).unwrap();
            let bytes = encode_pgm(&img).unwrap();
            assert!(bytes.starts_with(b"P5\n3 2\n255\n"));
            assert!(bytes[11..].iter().all(|&x| x == b));
            assert_eq!(bytes.len(), 11 + 6);
        }
        let bad = Tensor::create(&[1, 1], 1.5).unwrap();
        assert_eq!(encode_pgm(&bad).unwrap_err().code(), "domain");
    }

    #[test]
    fn overlay_counts_are_set_algebra() {
        let img = Tensor::create(&[2, 3], 0.25).unwrap();
        let t = mask(&[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let p = mask(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let (bytes, c) = encode_overlay(&img, &t, &p).unwrap();
        assert_eq!(c, OverlayCounts { agreement: 2, disagreement: 2 });
        let px = &bytes[11..];
        assert_eq!(&px[0..3], &AGREEMENT_RGB);
        assert_eq!(&px[3..6], &DISAGREEMENT_RGB);
        assert_eq!(&px[9..12], &[64, 64, 64]);
        let (_, c) = encode_overlay(&img, &t, &t).unwrap();
        assert_eq!(c.disagreement, 0);
        let empty = mask(&[0.0; 6]);
        let (_, c) = encode_overlay(&img, &t, &empty).unwrap();
        assert_eq!(c.disagreement, t.foreground());
    }
}
