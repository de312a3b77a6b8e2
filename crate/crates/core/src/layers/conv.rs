use serde::{Deserialize, Serialize};

use super::{dims4, LayerError};
use crate::tensor::{Real, Tensor};

/// Per-side zero padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Padding {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding {
    pub const NONE: Padding = Padding {
        top: 0,
        bottom: 0,
        left: 0,
        right: 0,
    };

    /// Padding that keeps the spatial size for a stride-1 `k x k` kernel.
    /// Even kernels put the extra row/column at the bottom/right.
    pub fn same(k: usize) -> Padding {
        let before = (k - 1) / 2;
        let after = k - 1 - before;
        Padding {
            top: before,
            bottom: after,
            left: before,
            right: after,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T: Real> {
    /// `[out_ch, in_ch, kh, kw]`
    pub weights: Tensor<T>,
    /// `[out_ch]`
    pub bias: Tensor<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn new(weights: Tensor<T>, bias: Tensor<T>) -> Result<Self, LayerError> {
        let [out_ch, _, kh, kw] = dims4(weights.shape(), "conv weights")?;
        if !(1..=3).contains(&kh) || !(1..=3).contains(&kw) {
            return Err(LayerError::Shape(format!(
                "kernel {kh}x{kw} not supported (1, 2 or 3 per axis)"
            )));
        }
        if bias.shape() != [out_ch] {
            return Err(LayerError::Shape(format!(
                "bias shape {:?} does not match {out_ch} output channels",
                bias.shape()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn zeros(out_ch: usize, in_ch: usize, k: usize) -> Result<Self, LayerError> {
        let weights = Tensor::zeros(&[out_ch, in_ch, k, k])
            .map_err(|e| LayerError::Shape(e.to_string()))?;
        let bias = Tensor::zeros(&[out_ch]).map_err(|e| LayerError::Shape(e.to_string()))?;
        Self::new(weights, bias)
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn kernel(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads<T: Real> {
    pub d_input: Tensor<T>,
    pub d_weights: Tensor<T>,
    pub d_bias: Tensor<T>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    cin: usize,
    h: usize,
    w: usize,
    cout: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    pad: Padding,
}

impl Geometry {
    fn new<T: Real>(
        input: &[usize],
        params: &ConvParams<T>,
        pad: Padding,
    ) -> Result<Self, LayerError> {
        let [n, cin, h, w] = dims4(input, "conv2d input")?;
        if cin != params.in_channels() {
            return Err(LayerError::Shape(format!(
                "conv2d input has {cin} channels, weights expect {}",
                params.in_channels()
            )));
        }
        let (kh, kw) = params.kernel();
        let ph = h + pad.top + pad.bottom;
        let pw = w + pad.left + pad.right;
        if ph < kh || pw < kw {
            return Err(LayerError::Shape(format!(
                "padded input {ph}x{pw} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok(Self {
            n,
            cin,
            h,
            w,
            cout: params.out_channels(),
            kh,
            kw,
            oh: ph - kh + 1,
            ow: pw - kw + 1,
            pad,
        })
    }

    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// A 1x1 unpadded kernel reads the input plane directly as its column matrix.
    fn direct(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == Padding::NONE
    }

    /// Valid output-column range `[lo, hi)` for kernel column `kx`.
    fn x_range(&self, kx: usize) -> (usize, usize) {
        let lo = self.pad.left.saturating_sub(kx);
        let hi = (self.w + self.pad.left).saturating_sub(kx).min(self.ow);
        (lo.min(hi), hi)
    }
}

fn im2col<T: Real>(g: &Geometry, x: &[T], cols: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.cin {
        let src = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = g.x_range(kx);
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    let iy = oy + ky;
                    if iy < g.pad.top || iy - g.pad.top >= g.h {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = iy - g.pad.top;
                    line[..xlo].fill(T::zero());
                    line[xhi..].fill(T::zero());
                    if xhi > xlo {
                        let ix0 = xlo + kx - g.pad.left;
                        line[xlo..xhi].copy_from_slice(&src[iy * g.w + ix0..iy * g.w + ix0 + (xhi - xlo)]);
                    }
                }
            }
        }
    }
}

fn col2im<T: Real>(g: &Geometry, cols: &[T], dx: &mut [T]) {
    let plane = g.out_plane();
    for ci in 0..g.cin {
        let dst = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let (xlo, xhi) = g.x_range(kx);
                if xhi <= xlo {
                    continue;
                }
                for oy in 0..g.oh {
                    let iy = oy + ky;
                    if iy < g.pad.top || iy - g.pad.top >= g.h {
                        continue;
                    }
                    let iy = iy - g.pad.top;
                    let ix0 = xlo + kx - g.pad.left;
                    let out = &mut dst[iy * g.w + ix0..iy * g.w + ix0 + (xhi - xlo)];
                    for (o, &c) in out.iter_mut().zip(&src[oy * g.ow + xlo..oy * g.ow + xhi]) {
                        *o += c;
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation plus bias.
pub fn conv2d<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    pad: Padding,
) -> Result<Tensor<T>, LayerError> {
    let g = Geometry::new(input.shape(), params, pad)?;
    let plane = g.out_plane();
    let k = g.k();
    let mut out = Tensor::zeros(&[g.n, g.cout, g.oh, g.ow]).map_err(|e| LayerError::Shape(e.to_string()))?;
    let mut cols = if g.direct() { Vec::new() } else { vec![T::zero(); k * plane] };
    let in_image = g.cin * g.h * g.w;
    let out_image = g.cout * plane;
    let w = params.weights.data();
    let bias = params.bias.data();
    for n in 0..g.n {
        let x = &input.data()[n * in_image..(n + 1) * in_image];
        let b: &[T] = if g.direct() {
            x
        } else {
            im2col(&g, x, &mut cols);
            &cols
        };
        let y = &mut out.data_mut()[n * out_image..(n + 1) * out_image];
        for (o, row) in y.chunks_exact_mut(plane).enumerate() {
            row.fill(bias[o]);
        }
        T::gemm(
            g.cout,
            k,
            plane,
            T::one(),
            w,
            (k as isize, 1),
            b,
            (plane as isize, 1),
            T::one(),
            y,
            (plane as isize, 1),
        );
    }
    Ok(out)
}

/// Gradients of `sum(upstream * conv2d(input))` with respect to the input,
/// weights and bias.
pub fn conv2d_grad<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    pad: Padding,
    upstream: &Tensor<T>,
) -> Result<ConvGrads<T>, LayerError> {
    let g = Geometry::new(input.shape(), params, pad)?;
    if upstream.shape() != [g.n, g.cout, g.oh, g.ow] {
        return Err(LayerError::Shape(format!(
            "conv2d upstream {:?} does not match output [{}, {}, {}, {}]",
            upstream.shape(),
            g.n,
            g.cout,
            g.oh,
            g.ow
        )));
    }
    let plane = g.out_plane();
    let k = g.k();
    let in_image = g.cin * g.h * g.w;
    let out_image = g.cout * plane;
    let mut d_input = input.zeros_like();
    let mut d_weights = params.weights.zeros_like();
    let mut d_bias = params.bias.zeros_like();
    let mut cols = if g.direct() { Vec::new() } else { vec![T::zero(); k * plane] };
    let mut d_cols = vec![T::zero(); k * plane];
    let w = params.weights.data();

    for n in 0..g.n {
        let x = &input.data()[n * in_image..(n + 1) * in_image];
        let dy = &upstream.data()[n * out_image..(n + 1) * out_image];
        for (db, row) in d_bias.data_mut().iter_mut().zip(dy.chunks_exact(plane)) {
            *db += row.iter().copied().sum::<T>();
        }
        let b: &[T] = if g.direct() {
            x
        } else {
            im2col(&g, x, &mut cols);
            &cols
        };
        // dW += dY * cols^T
        T::gemm(
            g.cout,
            plane,
            k,
            T::one(),
            dy,
            (plane as isize, 1),
            b,
            (1, plane as isize),
            T::one(),
            d_weights.data_mut(),
            (k as isize, 1),
        );
        let dx = &mut d_input.data_mut()[n * in_image..(n + 1) * in_image];
        if g.direct() {
            // dX = W^T * dY
            T::gemm(
                k,
                g.cout,
                plane,
                T::one(),
                w,
                (1, k as isize),
                dy,
                (plane as isize, 1),
                T::zero(),
                dx,
                (plane as isize, 1),
            );
        } else {
            T::gemm(
                k,
                g.cout,
                plane,
                T::one(),
                w,
                (1, k as isize),
                dy,
                (plane as isize, 1),
                T::zero(),
                &mut d_cols,
                (plane as isize, 1),
            );
            col2im(&g, &d_cols, dx);
        }
    }
    Ok(ConvGrads {
        d_input,
        d_weights,
        d_bias,
    })
}
