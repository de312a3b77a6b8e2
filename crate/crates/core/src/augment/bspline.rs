//! Cubic B-spline interpolation with a recursive prefilter (mirror
//! boundary), so that the spline passes through the original samples.

use crate::tensor::{Real, Tensor};

const POLE: f64 = -0.267_949_192_431_122_7; // sqrt(3) - 2
const TOLERANCE: f64 = 1e-12;

fn initial_causal(c: &[f64]) -> f64 {
    let n = c.len();
    let horizon = (TOLERANCE.ln() / POLE.abs().ln()).ceil() as usize;
    if horizon < n {
        let mut zn = POLE;
        let mut sum = c[0];
        for &v in &c[1..horizon] {
            sum += zn * v;
            zn *= POLE;
        }
        sum
    } else {
        let mut zn = POLE;
        let iz = 1.0 / POLE;
        let mut z2n = POLE.powi(n as i32 - 1);
        let mut sum = c[0] + z2n * c[n - 1];
        z2n *= z2n * iz;
        for &v in &c[1..n - 1] {
            sum += (zn + z2n) * v;
            zn *= POLE;
            z2n *= iz;
        }
        sum / (1.0 - zn * zn)
    }
}

fn initial_anticausal(c: &[f64]) -> f64 {
    let n = c.len();
    (POLE / (POLE * POLE - 1.0)) * (POLE * c[n - 2] + c[n - 1])
}

/// In-place conversion of samples to B-spline coefficients.
fn prefilter_line(c: &mut [f64]) {
    let n = c.len();
    if n < 2 {
        return;
    }
    let gain = (1.0 - POLE) * (1.0 - 1.0 / POLE);
    for v in c.iter_mut() {
        *v *= gain;
    }
    c[0] = initial_causal(c);
    for k in 1..n {
        c[k] += POLE * c[k - 1];
    }
    c[n - 1] = initial_anticausal(c);
    for k in (0..n - 1).rev() {
        c[k] = POLE * (c[k + 1] - c[k]);
    }
}

/// Whole-sample mirror of an arbitrary index into `0..n`.
fn mirror(k: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut k = k.rem_euclid(period);
    if k >= n as isize {
        k = period - k;
    }
    k as usize
}

fn weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    let u = 1.0 - t;
    [
        u * u * u / 6.0,
        (4.0 - 6.0 * t2 + 3.0 * t3) / 6.0,
        (1.0 + 3.0 * t + 3.0 * t2 - 3.0 * t3) / 6.0,
        t3 / 6.0,
    ]
}

/// A single-channel image prepared for cubic B-spline sampling.
#[derive(Debug, Clone)]
pub struct BSplineImage {
    width: usize,
    height: usize,
    samples: Vec<f64>,
    coeffs: Vec<f64>,
}

impl BSplineImage {
    /// `image` is `[H, W]`.
    pub fn new<T: Real>(image: &Tensor<T>) -> Self {
        let (height, width) = match *image.shape() {
            [h, w] => (h, w),
            _ => panic!("BSplineImage expects an [H, W] image, got {:?}", image.shape()),
        };
        let samples: Vec<f64> = image.data().iter().map(|v| v.as_f64()).collect();
        let mut coeffs = samples.clone();
        for row in coeffs.chunks_exact_mut(width) {
            prefilter_line(row);
        }
        let mut col = vec![0.0; height];
        for x in 0..width {
            for y in 0..height {
                col[y] = coeffs[y * width + x];
            }
            prefilter_line(&mut col);
            for y in 0..height {
                coeffs[y * width + x] = col[y];
            }
        }
        Self {
            width,
            height,
            samples,
            coeffs,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn in_bounds(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= (self.width - 1) as f64 && y <= (self.height - 1) as f64
    }

    /// Spline value at a real coordinate (mirror extension outside).
    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        let (fx, fy) = (x.floor(), y.floor());
        let wx = weights(x - fx);
        let wy = weights(y - fy);
        let (ix, iy) = (fx as isize - 1, fy as isize - 1);
        let mut acc = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            let row = mirror(iy + j as isize, self.height) * self.width;
            let mut line = 0.0;
            for (i, wxi) in wx.iter().enumerate() {
                line += wxi * self.coeffs[row + mirror(ix + i as isize, self.width)];
            }
            acc += wyj * line;
        }
        acc
    }

    /// Interpolated value, `fill` outside the image. On-grid coordinates
    /// return the stored sample exactly.
    pub fn sample(&self, x: f64, y: f64, fill: f64) -> f64 {
        if !self.in_bounds(x, y) {
            return fill;
        }
        if x.fract() == 0.0 && y.fract() == 0.0 {
            return self.samples[y as usize * self.width + x as usize];
        }
        self.evaluate(x, y)
    }
}

/// Cubic B-spline value of `image` (`[H, W]`) at `(x, y)`.
pub fn bspline_sample<T: Real>(image: &Tensor<T>, x: f64, y: f64) -> f64 {
    BSplineImage::new(image).evaluate(x, y)
}
