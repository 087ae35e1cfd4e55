use ndarray::{Array2, ArrayD, ArrayView2, Axis, IxDyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Param, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

pub fn conv_out_size(input: usize, g: &ConvGeometry) -> Option<usize> {
    let padded = input + 2 * g.padding;
    if padded < g.kernel || g.stride == 0 {
        return None;
    }
    Some((padded - g.kernel) / g.stride + 1)
}

/// Output columns `xo` whose input column `xo·s + kw − p` lies inside `0..w`.
fn valid_range(kw: usize, g: &ConvGeometry, w: usize, ow: usize) -> std::ops::Range<usize> {
    let (s, p) = (g.stride, g.padding);
    let lo = if kw >= p { 0 } else { (p - kw).div_ceil(s) };
    let hi = if w + p > kw { ((w + p - kw - 1) / s + 1).min(ow) } else { 0 };
    lo..hi.max(lo)
}

/// Unfolds `x` (`n × c × h × w`, row-major) into a `(c·k·k) × (n·oh·ow)` matrix.
pub fn im2col<T: Real>(
    x: &[T],
    (n, c, h, w): (usize, usize, usize, usize),
    g: &ConvGeometry,
    (oh, ow): (usize, usize),
) -> Array2<T> {
    let k = g.kernel;
    let cols = n * oh * ow;
    let mut out = vec![T::zero(); c * k * k * cols];
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let dst_row = &mut out[row * cols..(row + 1) * cols];
                let xs = valid_range(kw, g, w, ow);
                let x0 = (xs.start * g.stride + kw) - g.padding;
                for ni in 0..n {
                    let src = &x[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for y in 0..oh {
                        let iy = (y * g.stride + kh) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize || xs.is_empty() {
                            continue;
                        }
                        let src_row = &src[iy as usize * w..(iy as usize + 1) * w];
                        let dst = &mut dst_row[(ni * oh + y) * ow + xs.start..(ni * oh + y) * ow + xs.end];
                        if g.stride == 1 {
                            dst.copy_from_slice(&src_row[x0..x0 + dst.len()]);
                        } else {
                            for (d, s) in dst.iter_mut().zip(src_row[x0..].iter().step_by(g.stride)) {
                                *d = *s;
                            }
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((c * k * k, cols), out).expect("im2col shape")
}

/// Adjoint of [`im2col`]: scatters columns back, summing overlaps.
pub fn col2im<T: Real>(
    cols: ArrayView2<T>,
    (n, c, h, w): (usize, usize, usize, usize),
    g: &ConvGeometry,
    (oh, ow): (usize, usize),
) -> Vec<T> {
    let k = g.kernel;
    let cols = cols.as_standard_layout();
    let data = cols.as_slice().expect("standard layout");
    let ncols = n * oh * ow;
    let mut out = vec![T::zero(); n * c * h * w];
    for ci in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ci * k + kh) * k + kw;
                let src_row = &data[row * ncols..(row + 1) * ncols];
                let xs = valid_range(kw, g, w, ow);
                if xs.is_empty() {
                    continue;
                }
                let x0 = (xs.start * g.stride + kw) - g.padding;
                for ni in 0..n {
                    let dst = &mut out[(ni * c + ci) * h * w..(ni * c + ci + 1) * h * w];
                    for y in 0..oh {
                        let iy = (y * g.stride + kh) as isize - g.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst_row = &mut dst[iy as usize * w..(iy as usize + 1) * w];
                        let src = &src_row[(ni * oh + y) * ow + xs.start..(ni * oh + y) * ow + xs.end];
                        for (d, &s) in dst_row[x0..].iter_mut().step_by(g.stride).zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `(a, n, s)` → `(n, a, s)`.
fn swap_leading<T: Copy>(data: &[T], a: usize, n: usize, s: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(data.len());
    for ni in 0..n {
        for ai in 0..a {
            let start = (ai * n + ni) * s;
            out.extend_from_slice(&data[start..start + s]);
        }
    }
    out
}

pub(crate) fn uniform_param<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    shape: &[usize],
    fan_in: usize,
) -> Param<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::lit(rng.random_range(-bound..bound)))
        .collect();
    Param::new(ArrayD::from_shape_vec(IxDyn(shape), data).expect("param shape"))
}

fn dims4(x: &ArrayD<impl Sized>) -> (usize, usize, usize, usize) {
    let s = x.shape();
    assert_eq!(s.len(), 4, "expected a 4-d tensor, got shape {s:?}");
    (s[0], s[1], s[2], s[3])
}

#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
    /// `(out, in·k·k)`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Array2<T>, (usize, usize, usize))>,
}

impl<T: Real> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
    ) -> Self {
        let fan_in = in_channels * geometry.kernel * geometry.kernel;
        Self {
            in_channels,
            out_channels,
            geometry,
            weight: uniform_param(rng, &[out_channels, fan_in], fan_in),
            bias: uniform_param(rng, &[out_channels], fan_in),
            cache: None,
        }
    }

    fn run(&self, x: &ArrayD<T>) -> (ArrayD<T>, Array2<T>, (usize, usize, usize)) {
        let (n, c, h, w) = dims4(x);
        assert_eq!(c, self.in_channels, "conv input channels");
        let oh = conv_out_size(h, &self.geometry).expect("conv height");
        let ow = conv_out_size(w, &self.geometry).expect("conv width");
        let x = x.as_standard_layout();
        let cols = im2col(x.as_slice().unwrap(), (n, c, h, w), &self.geometry, (oh, ow));
        let weight: ArrayView2<T> = self.weight.value.view().into_dimensionality().unwrap();
        let mut out: Array2<T> = weight.dot(&cols);
        for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(self.bias.value.iter()) {
            row.mapv_inplace(|v| v + b);
        }
        let data = swap_leading(out.as_slice().unwrap(), self.out_channels, n, oh * ow);
        let y = ArrayD::from_shape_vec(IxDyn(&[n, self.out_channels, oh, ow]), data).unwrap();
        (y, cols, (n, h, w))
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        self.run(x).0
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        let (y, cols, dims) = self.run(x);
        self.cache = Some((cols, dims));
        y
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let (cols, (n, h, w)) = self.cache.take().expect("conv backward without forward");
        let (gn, go, oh, ow) = dims4(grad);
        debug_assert_eq!((gn, go), (n, self.out_channels));
        let grad = grad.as_standard_layout();
        let g2 = swap_leading(grad.as_slice().unwrap(), n, self.out_channels, oh * ow);
        let g2 = Array2::from_shape_vec((self.out_channels, n * oh * ow), g2).unwrap();

        let dw = g2.dot(&cols.t());
        self.weight.grad += &dw.into_dyn();
        let db = g2.sum_axis(Axis(1));
        self.bias.grad += &db.into_dyn();

        let weight: ArrayView2<T> = self.weight.value.view().into_dimensionality().unwrap();
        let dcols = weight.t().dot(&g2);
        let dx = col2im(
            dcols.view(),
            (n, self.in_channels, h, w),
            &self.geometry,
            (oh, ow),
        );
        ArrayD::from_shape_vec(IxDyn(&[n, self.in_channels, h, w]), dx).unwrap()
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}

/// Transposed convolution with an explicit output size, so decoders can
/// mirror encoders whose strides do not divide the input evenly.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub geometry: ConvGeometry,
    pub out_size: (usize, usize),
    /// `(out·k·k, in)`
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<(Array2<T>, (usize, usize, usize))>,
}

impl<T: Real> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        in_channels: usize,
        out_channels: usize,
        geometry: ConvGeometry,
        out_size: (usize, usize),
    ) -> Self {
        let kk = geometry.kernel * geometry.kernel;
        let fan_in = in_channels * kk;
        Self {
            in_channels,
            out_channels,
            geometry,
            out_size,
            weight: uniform_param(rng, &[out_channels * kk, in_channels], fan_in),
            bias: uniform_param(rng, &[out_channels], fan_in),
            cache: None,
        }
    }

    fn run(&self, x: &ArrayD<T>) -> (ArrayD<T>, Array2<T>, (usize, usize, usize)) {
        let (n, c, h, w) = dims4(x);
        assert_eq!(c, self.in_channels, "transposed conv input channels");
        let (oh, ow) = self.out_size;
        debug_assert_eq!(conv_out_size(oh, &self.geometry), Some(h));
        let x = x.as_standard_layout();
        let xr = swap_leading(x.as_slice().unwrap(), n, c, h * w);
        let xr = Array2::from_shape_vec((c, n * h * w), xr).unwrap();
        let weight: ArrayView2<T> = self.weight.value.view().into_dimensionality().unwrap();
        let cols = weight.dot(&xr);
        let mut y = col2im(
            cols.view(),
            (n, self.out_channels, oh, ow),
            &self.geometry,
            (h, w),
        );
        let plane = oh * ow;
        for (i, chunk) in y.chunks_mut(plane).enumerate() {
            let b = self.bias.value[i % self.out_channels];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        let y = ArrayD::from_shape_vec(IxDyn(&[n, self.out_channels, oh, ow]), y).unwrap();
        (y, xr, (n, h, w))
    }

    pub fn infer(&self, x: &ArrayD<T>) -> ArrayD<T> {
        self.run(x).0
    }

    pub fn forward_train(&mut self, x: &ArrayD<T>) -> ArrayD<T> {
        let (y, xr, dims) = self.run(x);
        self.cache = Some((xr, dims));
        y
    }

    pub fn backward(&mut self, grad: &ArrayD<T>) -> ArrayD<T> {
        let (xr, (n, h, w)) = self.cache.take().expect("transposed conv backward without forward");
        let (oh, ow) = self.out_size;
        let grad = grad.as_standard_layout();
        let gcols = im2col(
            grad.as_slice().unwrap(),
            (n, self.out_channels, oh, ow),
            &self.geometry,
            (h, w),
        );
        let dw = gcols.dot(&xr.t());
        self.weight.grad += &dw.into_dyn();
        let db = grad.sum_axis(Axis(3)).sum_axis(Axis(2)).sum_axis(Axis(0));
        self.bias.grad += &db;

        let weight: ArrayView2<T> = self.weight.value.view().into_dimensionality().unwrap();
        let dxr = weight.t().dot(&gcols);
        let dx = swap_leading(dxr.as_slice().unwrap(), self.in_channels, n, h * w);
        ArrayD::from_shape_vec(IxDyn(&[n, self.in_channels, h, w]), dx).unwrap()
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
