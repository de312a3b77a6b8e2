//! Dataset manifest: a JSON list of cases. Slice paths are relative to the
//! manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_volume, DataError};
use crate::model::LabelMask;
use crate::optim::Sample;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceRecord {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseRecord {
    pub id: String,
    pub seed: u64,
    pub slices: Vec<SliceRecord>,
    /// Optional whole-case image volume (`[W, H, slices]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<String>,
}

pub fn write_manifest(path: &Path, cases: &[CaseRecord]) -> Result<(), DataError> {
    let mut json = serde_json::to_string_pretty(cases).expect("manifest serializes");
    json.push('\n');
    fs::write(path, json).map_err(|e| DataError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<CaseRecord>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let cases: Vec<CaseRecord> =
        serde_json::from_str(&text).map_err(|e| DataError::Manifest(format!("{}: {e}", path.display())))?;
    if cases.is_empty() {
        return Err(DataError::Manifest(format!("{} lists no cases", path.display())));
    }
    Ok(cases)
}

fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn read_slice(path: &Path) -> Result<Tensor<f32>, DataError> {
    let (t, header) = read_volume(path)?;
    let [w, h, s] = header.dims;
    if s != 1 {
        return Err(DataError::DimMismatch(format!(
            "{}: slice files hold one slice, found {s}",
            path.display()
        )));
    }
    t.reshape(&[h, w]).map_err(|e| DataError::DimMismatch(e.to_string()))
}

/// Load every slice listed in `manifest`, in manifest order.
pub fn load_samples(manifest: &Path) -> Result<Vec<Sample>, DataError> {
    let cases = read_manifest(manifest)?;
    let dir = base_dir(manifest);
    let mut out = Vec::new();
    for case in &cases {
        for s in &case.slices {
            let image = read_slice(&dir.join(&s.image))?;
            let mask = match &s.mask {
                Some(m) => {
                    let t = read_slice(&dir.join(m))?;
                    if t.shape() != image.shape() {
                        return Err(DataError::DimMismatch(format!("{m}: mask and image sizes differ")));
                    }
                    Some(LabelMask::new(t).map_err(|e| DataError::Domain(format!("{m}: {e}")))?)
                }
                None => None,
            };
            out.push(Sample {
                case: case.id.clone(),
                image,
                mask,
            });
        }
    }
    Ok(out)
}
