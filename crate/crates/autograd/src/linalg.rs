//! Matrix products and the image-layout operations that build convolutions.
//!
//! Images use the NHWC layout `[batch, height, width, channels]`.

use crate::graph::{Function, Var};
use crate::tensor::Tensor;

/// `C = op(A) · op(B)` for row-major matrices, where `op` optionally transposes.
/// Returns the `[m, n]` result.
pub fn gemm(a: &Tensor, b: &Tensor, ta: bool, tb: bool) -> Tensor {
    assert_eq!(a.rank(), 2, "gemm lhs must be a matrix, got {:?}", a.shape());
    assert_eq!(b.rank(), 2, "gemm rhs must be a matrix, got {:?}", b.shape());
    let (ar, ac) = (a.shape()[0], a.shape()[1]);
    let (br, bc) = (b.shape()[0], b.shape()[1]);
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "gemm inner dimension mismatch: {:?} x {:?}", a.shape(), b.shape());
    let mut out = vec![0.0; m * n];
    gemm_raw(a.data(), ac, ta, b.data(), bc, tb, m, k, n, &mut out, false);
    Tensor::new(&[m, n], out)
}

/// Raw row-major product on slices; `lda`/`ldb` are the stored row lengths.
/// With `accumulate` the result is added into `c`.
#[allow(clippy::too_many_arguments)]
pub fn gemm_raw(
    a: &[f64],
    lda: usize,
    ta: bool,
    b: &[f64],
    ldb: usize,
    tb: bool,
    m: usize,
    k: usize,
    n: usize,
    c: &mut [f64],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    let (rsa, csa) = if ta { (1, lda as isize) } else { (lda as isize, 1) };
    let (rsb, csb) = if tb { (1, ldb as isize) } else { (ldb as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: strides and extents describe in-bounds views of the slices,
    // which the callers guarantee by construction of m, k, n and lda/ldb.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

struct MatMul {
    ta: bool,
    tb: bool,
}

impl Function for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(&self, g: &Var, x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        let (a, b) = (&x[0], &x[1]);
        let (ga, gb) = match (self.ta, self.tb) {
            (false, false) => (
                a.requires_grad().then(|| g.matmul_t(b, false, true)),
                b.requires_grad().then(|| a.matmul_t(g, true, false)),
            ),
            (true, false) => (
                a.requires_grad().then(|| b.matmul_t(g, false, true)),
                b.requires_grad().then(|| a.matmul_t(g, false, false)),
            ),
            (false, true) => (
                a.requires_grad().then(|| g.matmul_t(b, false, false)),
                b.requires_grad().then(|| g.matmul_t(a, true, false)),
            ),
            (true, true) => (
                a.requires_grad().then(|| b.matmul_t(g, true, true)),
                b.requires_grad().then(|| g.matmul_t(a, true, true)),
            ),
        };
        vec![ga, gb]
    }
}

/// Geometry of a stride-1, zero-padded ("same") square convolution window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub kernel: usize,
}

impl ConvGeometry {
    fn from_shape(shape: &[usize], kernel: usize) -> Self {
        assert_eq!(shape.len(), 4, "expected NHWC image, got {shape:?}");
        assert!(kernel % 2 == 1, "kernel size must be odd");
        ConvGeometry {
            batch: shape[0],
            height: shape[1],
            width: shape[2],
            channels: shape[3],
            kernel,
        }
    }

    fn cols_shape(&self) -> [usize; 2] {
        [
            self.batch * self.height * self.width,
            self.kernel * self.kernel * self.channels,
        ]
    }

    fn image_shape(&self) -> [usize; 4] {
        [self.batch, self.height, self.width, self.channels]
    }

    /// Visit (image offset, column offset) pairs for every in-bounds tap.
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize)) {
        let ConvGeometry {
            batch,
            height,
            width,
            channels,
            kernel,
        } = *self;
        let r = (kernel / 2) as isize;
        let row_len = kernel * kernel * channels;
        for b in 0..batch {
            for y in 0..height {
                for x in 0..width {
                    let row = ((b * height + y) * width + x) * row_len;
                    for ky in 0..kernel {
                        let sy = y as isize + ky as isize - r;
                        if sy < 0 || sy >= height as isize {
                            continue;
                        }
                        for kx in 0..kernel {
                            let sx = x as isize + kx as isize - r;
                            if sx < 0 || sx >= width as isize {
                                continue;
                            }
                            let src = ((b * height + sy as usize) * width + sx as usize) * channels;
                            let dst = row + (ky * kernel + kx) * channels;
                            f(src, dst);
                        }
                    }
                }
            }
        }
    }
}

fn im2col_raw(x: &Tensor, geo: &ConvGeometry) -> Tensor {
    let mut cols = vec![0.0; geo.cols_shape().iter().product()];
    let c = geo.channels;
    let data = x.data();
    geo.for_each_tap(|src, dst| cols[dst..dst + c].copy_from_slice(&data[src..src + c]));
    Tensor::new(&geo.cols_shape(), cols)
}

fn col2im_raw(cols: &Tensor, geo: &ConvGeometry) -> Tensor {
    let mut img = vec![0.0; geo.image_shape().iter().product()];
    let c = geo.channels;
    let data = cols.data();
    geo.for_each_tap(|src, dst| {
        for (o, v) in img[src..src + c].iter_mut().zip(&data[dst..dst + c]) {
            *o += v;
        }
    });
    Tensor::new(&geo.image_shape(), img)
}

struct Im2Col(ConvGeometry);
impl Function for Im2Col {
    fn name(&self) -> &'static str {
        "im2col"
    }
    fn backward(&self, g: &Var, _x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        vec![Some(g.col2im(self.0))]
    }
}

struct Col2Im(ConvGeometry);
impl Function for Col2Im {
    fn name(&self) -> &'static str {
        "col2im"
    }
    fn backward(&self, g: &Var, _x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        vec![Some(g.im2col(self.0.kernel))]
    }
}

fn upsample2_raw(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = vec![0.0; b * 4 * h * w * c];
    let d = x.data();
    for bi in 0..b {
        for y in 0..2 * h {
            for xx in 0..2 * w {
                let src = ((bi * h + y / 2) * w + xx / 2) * c;
                let dst = ((bi * 2 * h + y) * 2 * w + xx) * c;
                out[dst..dst + c].copy_from_slice(&d[src..src + c]);
            }
        }
    }
    Tensor::new(&[b, 2 * h, 2 * w, c], out)
}

fn sumpool2_raw(x: &Tensor) -> Tensor {
    let s = x.shape();
    let (b, h, w, c) = (s[0], s[1], s[2], s[3]);
    assert!(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial size, got {s:?}");
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; b * ho * wo * c];
    let d = x.data();
    for bi in 0..b {
        for y in 0..h {
            for xx in 0..w {
                let src = ((bi * h + y) * w + xx) * c;
                let dst = ((bi * ho + y / 2) * wo + xx / 2) * c;
                for k in 0..c {
                    out[dst + k] += d[src + k];
                }
            }
        }
    }
    Tensor::new(&[b, ho, wo, c], out)
}

struct Upsample2;
impl Function for Upsample2 {
    fn name(&self) -> &'static str {
        "upsample2"
    }
    fn backward(&self, g: &Var, _x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        vec![Some(g.sum_pool2())]
    }
}

struct SumPool2;
impl Function for SumPool2 {
    fn name(&self) -> &'static str {
        "sum_pool2"
    }
    fn backward(&self, g: &Var, _x: &[Var], _out: &Var) -> Vec<Option<Var>> {
        vec![Some(g.upsample2())]
    }
}

impl Var {
    /// Matrix product of two rank-2 variables.
    pub fn matmul(&self, other: &Var) -> Var {
        self.matmul_t(other, false, false)
    }

    /// Matrix product with optional transposition of either operand.
    pub fn matmul_t(&self, other: &Var, ta: bool, tb: bool) -> Var {
        let v = gemm(self.value(), other.value(), ta, tb);
        Var::from_op(v, vec![self.clone(), other.clone()], Box::new(MatMul { ta, tb }))
    }

    /// Unfold `kernel × kernel` neighbourhoods of an NHWC image into rows
    /// `[B·H·W, k·k·C]` (zero padding, stride 1).
    pub fn im2col(&self, kernel: usize) -> Var {
        let geo = ConvGeometry::from_shape(self.shape(), kernel);
        let v = im2col_raw(self.value(), &geo);
        Var::from_op(v, vec![self.clone()], Box::new(Im2Col(geo)))
    }

    /// Adjoint of [`Var::im2col`]: fold rows back, summing overlapping taps.
    pub fn col2im(&self, geo: ConvGeometry) -> Var {
        assert_eq!(self.shape(), geo.cols_shape(), "col2im shape mismatch");
        let v = col2im_raw(self.value(), &geo);
        Var::from_op(v, vec![self.clone()], Box::new(Col2Im(geo)))
    }

    /// Nearest-neighbour 2× upsampling of an NHWC image.
    pub fn upsample2(&self) -> Var {
        let v = upsample2_raw(self.value());
        Var::from_op(v, vec![self.clone()], Box::new(Upsample2))
    }

    /// Sum over non-overlapping 2×2 blocks of an NHWC image.
    pub fn sum_pool2(&self) -> Var {
        let v = sumpool2_raw(self.value());
        Var::from_op(v, vec![self.clone()], Box::new(SumPool2))
    }

    pub fn avg_pool2(&self) -> Var {
        self.sum_pool2().scale(0.25)
    }

    /// Same-padded stride-1 convolution: `x [B,H,W,Cin]`, `weight [k·k·Cin, Cout]`.
    pub fn conv2d(&self, weight: &Var, kernel: usize) -> Var {
        let s = self.shape().to_vec();
        let out_ch = weight.shape()[1];
        let cols = if kernel == 1 {
            self.reshape(&[s[0] * s[1] * s[2], s[3]])
        } else {
            self.im2col(kernel)
        };
        cols.matmul(weight).reshape(&[s[0], s[1], s[2], out_ch])
    }
}
