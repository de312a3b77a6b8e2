//! ```text
//! "MYOVOL01"        8 bytes
//! header length     u32, little endian
//! header            UTF-8 JSON {dims: [W, H, S], spacing, slice_thickness, dtype}
//! payload           little endian, slice-major then row-major
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;
use crate::tensor::Tensor;

pub const VOLUME_MAGIC: &[u8; 8] = b"MYOVOL01";
/// In-plane pixel spacing in mm.
pub const DEFAULT_SPACING: [f64; 2] = [1.36, 1.36];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    U8,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }

    fn parse(s: &str) -> Result<Self, DataError> {
        match s {
            "f32" => Ok(Dtype::F32),
            "u8" => Ok(Dtype::U8),
            other => Err(DataError::UnknownDtype(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    /// `[W, H, slices]`.
    pub dims: [usize; 3],
    pub spacing: [f64; 2],
    pub slice_thickness: Option<f64>,
    pub dtype: Dtype,
}

impl VolumeHeader {
    /// Header describing `tensor` (`[S, H, W]`).
    pub fn for_tensor(tensor: &Tensor<f32>, dtype: Dtype) -> Result<Self, DataError> {
        let [s, h, w] = shape3(tensor.shape())?;
        Ok(Self {
            dims: [w, h, s],
            spacing: DEFAULT_SPACING,
            slice_thickness: None,
            dtype,
        })
    }

    pub fn voxels(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn payload_bytes(&self) -> u64 {
        self.voxels() as u64 * self.dtype.size() as u64
    }
}

fn shape3(shape: &[usize]) -> Result<[usize; 3], DataError> {
    <[usize; 3]>::try_from(shape)
        .map_err(|_| DataError::DimMismatch(format!("volume tensors are [S, H, W], got {shape:?}")))
}

pub fn encode_volume(tensor: &Tensor<f32>, header: &VolumeHeader) -> Result<Vec<u8>, DataError> {
    let [s, h, w] = shape3(tensor.shape())?;
    if header.dims != [w, h, s] {
        return Err(DataError::DimMismatch(format!(
            "header dims {:?} do not match tensor [S, H, W] = {:?}",
            header.dims,
            tensor.shape()
        )));
    }
    let json = serde_json::to_vec(header).expect("header serializes");
    let mut out = Vec::with_capacity(12 + json.len() + header.payload_bytes() as usize);
    out.extend_from_slice(VOLUME_MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    match header.dtype {
        Dtype::F32 => {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Dtype::U8 => {
            for &v in tensor.data() {
                if !(0.0..=255.0).contains(&v) || v.fract() != 0.0 {
                    return Err(DataError::Domain(format!("{v} is not representable as u8")));
                }
                out.push(v as u8);
            }
        }
    }
    Ok(out)
}

pub fn decode_volume(bytes: &[u8]) -> Result<(Tensor<f32>, VolumeHeader), DataError> {
    if bytes.len() < 8 || &bytes[..8] != VOLUME_MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(DataError::CorruptHeader("missing header length".into()));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < hlen {
        return Err(DataError::CorruptHeader(format!(
            "header claims {hlen} bytes, only {} present",
            body.len()
        )));
    }
    let raw: serde_json::Value =
        serde_json::from_slice(&body[..hlen]).map_err(|e| DataError::CorruptHeader(e.to_string()))?;
    if let Some(d) = raw.get("dtype").and_then(|d| d.as_str()) {
        Dtype::parse(d)?;
    }
    if let Some(dims) = raw.get("dims").and_then(|d| d.as_array()) {
        if dims.len() != 3 {
            return Err(DataError::DimMismatch(format!("expected 3 dims, header has {}", dims.len())));
        }
    }
    let header: VolumeHeader =
        serde_json::from_value(raw).map_err(|e| DataError::CorruptHeader(e.to_string()))?;
    if header.dims.contains(&0) {
        return Err(DataError::DimMismatch(format!("dims {:?} must be positive", header.dims)));
    }
    let expected = header
        .dims
        .iter()
        .try_fold(header.dtype.size() as u64, |acc, &d| acc.checked_mul(d as u64))
        .ok_or_else(|| DataError::DimMismatch(format!("dims {:?} overflow", header.dims)))?;
    let payload = &body[hlen..];
    if payload.len() as u64 != expected {
        return Err(DataError::PayloadMismatch {
            expected,
            actual: payload.len() as u64,
        });
    }
    let data: Vec<f32> = match header.dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect(),
        Dtype::U8 => payload.iter().map(|&b| b as f32).collect(),
    };
    let [w, h, s] = header.dims;
    let tensor = Tensor::from_vec(&[s, h, w], data).map_err(|e| DataError::DimMismatch(e.to_string()))?;
    Ok((tensor, header))
}

pub fn write_volume(path: &Path, tensor: &Tensor<f32>, header: &VolumeHeader) -> Result<(), DataError> {
    let bytes = encode_volume(tensor, header)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn read_volume(path: &Path) -> Result<(Tensor<f32>, VolumeHeader), DataError> {
    decode_volume(&fs::read(path).map_err(|e| DataError::io(path, e))?)
}
