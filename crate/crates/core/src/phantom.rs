//! Synthetic short-axis slices: a bright blood pool inside a mid-gray
//! annular "myocardium" on a darker noisy background. The mask is the
//! annulus.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{write_manifest, write_volume, CaseRecord, DataError, Dtype, SliceRecord, VolumeHeader};
use crate::model::LabelMask;
use crate::rng::{derive_seed, RngStream};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum PhantomError {
    #[error("invalid phantom config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomConfig {
    pub image_size: usize,
    /// Inner radius range as a fraction of the image size.
    pub inner_radius_range: (f64, f64),
    /// Ring thickness range as a fraction of the image size.
    pub thickness_range: (f64, f64),
    /// Maximum centre offset from the image centre, as a fraction of size.
    pub center_jitter: f64,
    pub background: f64,
    pub myocardium: f64,
    pub blood_pool: f64,
    pub noise_std: f64,
    pub slices_per_case: usize,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            inner_radius_range: (0.08, 0.15),
            thickness_range: (0.05, 0.12),
            center_jitter: 0.10,
            background: 0.2,
            myocardium: 0.5,
            blood_pool: 0.9,
            noise_std: 0.05,
            slices_per_case: 13,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<(), PhantomError> {
        let bad = |m: String| Err(PhantomError::Config(m));
        let ordered = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi;
        if self.image_size < 8 {
            return bad(format!("image_size {} must be >= 8", self.image_size));
        }
        if !ordered(self.inner_radius_range) || !ordered(self.thickness_range) {
            return bad("radius and thickness ranges need 0 < lo <= hi".into());
        }
        if self.inner_radius_range.1 + self.thickness_range.1 + self.center_jitter >= 0.5 {
            return bad("inner radius + thickness + jitter must stay below half the image".into());
        }
        if !(0.0..0.5).contains(&self.center_jitter) {
            return bad("center_jitter must lie in [0, 0.5)".into());
        }
        for v in [self.background, self.myocardium, self.blood_pool] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("intensity {v} outside [0, 1]"));
            }
        }
        if !(self.noise_std >= 0.0) || self.slices_per_case == 0 {
            return bad("noise_std must be >= 0 and slices_per_case >= 1".into());
        }
        Ok(())
    }
}

/// Ring geometry in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annulus {
    pub cx: f64,
    pub cy: f64,
    pub r_inner: f64,
    pub r_outer: f64,
}

pub fn sample_annulus(rng: &mut RngStream, config: &PhantomConfig) -> Annulus {
    let s = config.image_size as f64;
    let c = (s - 1.0) / 2.0;
    let j = config.center_jitter * s;
    let cx = c + rng.uniform(-j, j);
    let cy = c + rng.uniform(-j, j);
    let r_inner = s * rng.uniform(config.inner_radius_range.0, config.inner_radius_range.1);
    let r_outer = r_inner + s * rng.uniform(config.thickness_range.0, config.thickness_range.1);
    Annulus {
        cx,
        cy,
        r_inner,
        r_outer,
    }
}

/// Image and mask for a fixed geometry; `rng` drives only the noise.
pub fn render_phantom(
    annulus: &Annulus,
    config: &PhantomConfig,
    rng: &mut RngStream,
) -> (Tensor<f32>, LabelMask<f32>) {
    let n = config.image_size;
    let mut img = Vec::with_capacity(n * n);
    let mut mask = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let r = ((x as f64 - annulus.cx).powi(2) + (y as f64 - annulus.cy).powi(2)).sqrt();
            let (level, m) = if r <= annulus.r_inner {
                (config.blood_pool, 0.0)
            } else if r <= annulus.r_outer {
                (config.myocardium, 1.0)
            } else {
                (config.background, 0.0)
            };
            let noise = if config.noise_std > 0.0 {
                config.noise_std * rng.standard_normal()
            } else {
                0.0
            };
            img.push((level + noise).clamp(0.0, 1.0) as f32);
            mask.push(m);
        }
    }
    let image = Tensor::from_vec(&[n, n], img).expect("size >= 8");
    let mask = LabelMask::new(Tensor::from_vec(&[n, n], mask).expect("size >= 8")).expect("binary");
    (image, mask)
}

pub fn generate_phantom(rng: &mut RngStream, config: &PhantomConfig) -> (Tensor<f32>, LabelMask<f32>) {
    let a = sample_annulus(rng, config);
    render_phantom(&a, config, rng)
}

/// Write `n_cases` cases under `out_dir` plus `manifest.json`. Slice `k` of
/// case `i` uses the seed `derive_seed([derive_seed([seed, i]), k])`.
pub fn generate_dataset(
    n_cases: usize,
    seed: u64,
    out_dir: &Path,
    config: &PhantomConfig,
    write_volumes: bool,
) -> Result<Vec<CaseRecord>, PhantomError> {
    config.validate()?;
    if n_cases == 0 {
        return Err(PhantomError::Config("need at least one case".into()));
    }
    let mkdir = |p: &Path| fs::create_dir_all(p).map_err(|e| DataError::Io {
        path: p.display().to_string(),
        source: e,
    });
    mkdir(out_dir)?;
    let mut records = Vec::with_capacity(n_cases);
    for i in 0..n_cases {
        let id = format!("case{i:03}");
        let case_seed = derive_seed(&[seed, i as u64]);
        mkdir(&out_dir.join(&id))?;
        let mut slices = Vec::with_capacity(config.slices_per_case);
        let mut volume = Vec::new();
        for k in 0..config.slices_per_case {
            let mut rng = RngStream::new(derive_seed(&[case_seed, k as u64]));
            let (image, mask) = generate_phantom(&mut rng, config);
            let n = config.image_size;
            let image = image.reshape(&[1, n, n]).expect("same size");
            let mask = mask.into_tensor().reshape(&[1, n, n]).expect("same size");
            let rec = SliceRecord {
                image: format!("{id}/slice{k:02}_image.vol"),
                mask: Some(format!("{id}/slice{k:02}_mask.vol")),
            };
            let ih = VolumeHeader::for_tensor(&image, Dtype::F32)?;
            write_volume(&out_dir.join(&rec.image), &image, &ih)?;
            let mh = VolumeHeader::for_tensor(&mask, Dtype::U8)?;
            write_volume(&out_dir.join(rec.mask.as_ref().expect("set")), &mask, &mh)?;
            if write_volumes {
                volume.extend_from_slice(image.data());
            }
            slices.push(rec);
        }
        let volume_path = if write_volumes {
            let n = config.image_size;
            let t = Tensor::from_vec(&[config.slices_per_case, n, n], volume).expect("slices >= 1");
            let path = format!("{id}/volume.vol");
            write_volume(&out_dir.join(&path), &t, &VolumeHeader::for_tensor(&t, Dtype::F32)?)?;
            Some(path)
        } else {
            None
        };
        records.push(CaseRecord {
            id,
            seed: case_seed,
            slices,
            volume: volume_path,
        });
    }
    write_manifest(&out_dir.join("manifest.json"), &records)?;
    Ok(records)
}

/// Number of 4-connected components of pixels equal to `value`.
pub fn count_components(data: &[f32], h: usize, w: usize, value: f32) -> usize {
    let mut seen = vec![false; h * w];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || data[start] != value {
            continue;
        }
        count += 1;
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = (i / w, i % w);
            let mut visit = |j: usize| {
                if !seen[j] && data[j] == value {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
    }
    count
}
