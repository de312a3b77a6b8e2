use serde::{Deserialize, Serialize};

use super::bspline::BSplineImage;
use super::AugmentError;
use crate::model::LabelMask;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// Maximum shift as a fraction of the image extent along each axis.
    pub shift_frac: f64,
    pub max_rotation_deg: f64,
    /// Scale factor range `(lo, hi)`.
    pub zoom_range: (f64, f64),
    /// Per-pixel standard deviation of the smoothed displacement field, in pixels.
    pub elastic_mu: f64,
    /// Standard deviation of the Gaussian smoothing kernel, in pixels.
    pub elastic_sigma: f64,
    pub shift: bool,
    pub rotation: bool,
    pub zoom: bool,
    pub elastic: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            shift_frac: 0.10,
            max_rotation_deg: 10.0,
            zoom_range: (0.5, 2.0),
            elastic_mu: 10.0,
            elastic_sigma: 20.0,
            shift: true,
            rotation: true,
            zoom: true,
            elastic: true,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            shift: false,
            rotation: false,
            zoom: false,
            elastic: false,
            ..Default::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.shift || self.rotation || self.zoom || self.elastic
    }

    pub fn validate(&self) -> Result<(), AugmentError> {
        let bad = |m: String| Err(AugmentError::Config(m));
        if !(0.0..1.0).contains(&self.shift_frac) {
            return bad(format!("shift_frac {} must lie in [0, 1)", self.shift_frac));
        }
        if !(self.max_rotation_deg >= 0.0) {
            return bad("max_rotation_deg must be >= 0".into());
        }
        let (lo, hi) = self.zoom_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("zoom range ({lo}, {hi}) must satisfy 0 < lo <= hi"));
        }
        if !(self.elastic_sigma > 0.0) || !(self.elastic_mu >= 0.0) {
            return bad("elastic_sigma must be > 0 and elastic_mu >= 0".into());
        }
        Ok(())
    }
}

/// Interpolation used by [`apply_transform`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    BSpline,
    Nearest,
}

/// A sampled geometric transform. Maps output pixels to source coordinates:
/// inverse shift, rotation and zoom about the image centre, then the
/// displacement field at the output pixel is added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub dx: f64,
    pub dy: f64,
    pub angle_deg: f64,
    pub zoom: f64,
    /// `[2, H, W]`: x offsets then y offsets, in pixels.
    pub displacement: Option<Tensor<f32>>,
}

impl TransformSpec {
    pub fn identity() -> Self {
        Self {
            dx: 0.0,
            dy: 0.0,
            angle_deg: 0.0,
            zoom: 1.0,
            displacement: None,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.dx == 0.0
            && self.dy == 0.0
            && self.angle_deg == 0.0
            && self.zoom == 1.0
            && self
                .displacement
                .as_ref()
                .is_none_or(|d| d.data().iter().all(|&v| v == 0.0))
    }

    /// Source coordinate `(x, y)` read by output pixel `(ox, oy)`.
    pub fn source(&self, ox: usize, oy: usize, height: usize, width: usize) -> (f64, f64) {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        let vx = ox as f64 - cx - self.dx;
        let vy = oy as f64 - cy - self.dy;
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        // rotate by -angle
        let ux = c * vx + s * vy;
        let uy = -s * vx + c * vy;
        let mut x = cx + ux / self.zoom;
        let mut y = cy + uy / self.zoom;
        if let Some(d) = &self.displacement {
            let plane = height * width;
            let i = oy * width + ox;
            x += d.data()[i] as f64;
            y += d.data()[plane + i] as f64;
        }
        (x, y)
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    for v in &mut k {
        *v /= s;
    }
    k
}

/// Half-sample symmetric index folding (`-1 -> 0`, `n -> n - 1`).
fn reflect(k: isize, n: usize) -> usize {
    let n = n as isize;
    let mut k = k.rem_euclid(2 * n);
    if k >= n {
        k = 2 * n - 1 - k;
    }
    k as usize
}

fn smooth_separable(field: &[f64], h: usize, w: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                acc += kv * field[y * w + reflect(x as isize + j as isize - r, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (j, kv) in kernel.iter().enumerate() {
                acc += kv * tmp[reflect(y as isize + j as isize - r, h) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Smoothed white-noise displacement field, rescaled so that each component
/// has standard deviation `mu` away from the borders.
pub fn elastic_field(rng: &mut RngStream, height: usize, width: usize, mu: f64, sigma: f64) -> Tensor<f32> {
    let kernel = gaussian_kernel(sigma);
    // std of a unit white-noise field after 2-D separable smoothing
    let gain: f64 = kernel.iter().map(|k| k * k).sum::<f64>();
    let scale = if gain > 0.0 { mu / gain } else { 0.0 };
    let mut data = Vec::with_capacity(2 * height * width);
    for _ in 0..2 {
        let noise: Vec<f64> = (0..height * width).map(|_| rng.standard_normal()).collect();
        let smooth = smooth_separable(&noise, height, width, &kernel);
        data.extend(smooth.into_iter().map(|v| (v * scale) as f32));
    }
    Tensor::from_vec(&[2, height, width], data).expect("non-empty field")
}

/// Draw a transform for an image of `(height, width)`.
pub fn sample_transform(rng: &mut RngStream, config: &AugmentConfig, size: (usize, usize)) -> TransformSpec {
    let (h, w) = size;
    let mut spec = TransformSpec::identity();
    if config.shift {
        let mx = config.shift_frac * w as f64;
        let my = config.shift_frac * h as f64;
        spec.dx = rng.uniform(-mx, mx);
        spec.dy = rng.uniform(-my, my);
    }
    if config.rotation {
        let a = config.max_rotation_deg;
        spec.angle_deg = rng.uniform(-a, a);
    }
    if config.zoom {
        spec.zoom = rng.uniform(config.zoom_range.0, config.zoom_range.1);
    }
    if config.elastic {
        spec.displacement = Some(elastic_field(rng, h, w, config.elastic_mu, config.elastic_sigma));
    }
    spec
}

fn image_dims(image: &Tensor<f32>) -> Result<(usize, usize), AugmentError> {
    match *image.shape() {
        [h, w] => Ok((h, w)),
        _ => Err(AugmentError::Shape(format!("expected an [H, W] image, got {:?}", image.shape()))),
    }
}

/// Warp `image` (`[H, W]`) by pulling every output pixel from its source
/// coordinate. Out-of-bounds reads return `fill`.
pub fn apply_transform(
    image: &Tensor<f32>,
    spec: &TransformSpec,
    interp: Interpolation,
    fill: f64,
) -> Result<Tensor<f32>, AugmentError> {
    let (h, w) = image_dims(image)?;
    if let Some(d) = &spec.displacement {
        if d.shape() != [2, h, w] {
            return Err(AugmentError::Shape(format!(
                "displacement field {:?} does not match image [{h}, {w}]",
                d.shape()
            )));
        }
    }
    let mut out = Vec::with_capacity(h * w);
    match interp {
        Interpolation::BSpline => {
            let spline = BSplineImage::new(image);
            for oy in 0..h {
                for ox in 0..w {
                    let (x, y) = spec.source(ox, oy, h, w);
                    out.push(spline.sample(x, y, fill) as f32);
                }
            }
        }
        Interpolation::Nearest => {
            let src = image.data();
            for oy in 0..h {
                for ox in 0..w {
                    let (x, y) = spec.source(ox, oy, h, w);
                    let (rx, ry) = (x.round(), y.round());
                    let v = if rx >= 0.0 && ry >= 0.0 && rx < w as f64 && ry < h as f64 {
                        src[ry as usize * w + rx as usize]
                    } else {
                        fill as f32
                    };
                    out.push(v);
                }
            }
        }
    }
    Ok(Tensor::from_vec(&[h, w], out).expect("same size"))
}

/// Mean of the outermost ring of pixels.
pub fn border_mean(image: &Tensor<f32>) -> f64 {
    let (h, w) = match *image.shape() {
        [h, w] => (h, w),
        _ => return 0.0,
    };
    let d = image.data();
    let mut s = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if y == 0 || x == 0 || y == h - 1 || x == w - 1 {
                s += d[y * w + x] as f64;
                n += 1;
            }
        }
    }
    s / n as f64
}

/// Sample one transform and apply it to an image (B-spline, border-mean
/// fill) and its mask (nearest, zero fill).
pub fn augment_pair(
    image: &Tensor<f32>,
    mask: &LabelMask<f32>,
    rng: &mut RngStream,
    config: &AugmentConfig,
) -> Result<(Tensor<f32>, LabelMask<f32>), AugmentError> {
    let (h, w) = image_dims(image)?;
    if mask.shape() != [h, w] {
        return Err(AugmentError::Shape(format!(
            "mask {:?} does not match image [{h}, {w}]",
            mask.shape()
        )));
    }
    let spec = sample_transform(rng, config, (h, w));
    if spec.is_identity() {
        return Ok((image.clone(), mask.clone()));
    }
    let img = apply_transform(image, &spec, Interpolation::BSpline, border_mean(image))?;
    let m = apply_transform(mask.tensor(), &spec, Interpolation::Nearest, 0.0)?;
    let m = LabelMask::new(m).map_err(|e| AugmentError::Shape(e.to_string()))?;
    Ok((img, m))
}
