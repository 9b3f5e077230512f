//! Raw numeric kernels shared by the field queries and the fused renderer:
//! triplane bilinear sampling, the decoder MLP, and ray compositing, each with
//! a hand-written backward pass.

use crate::triplane::Aggregation;
use tripatch_autograd::{gemm_raw, sigmoid, softplus};

/// Bilinear footprint of one plane lookup.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Footprint {
    /// Offsets (in values) of the four corner texels: (y0,x0), (y0,x1), (y1,x0), (y1,x1).
    pub corners: [usize; 4],
    pub wx: f64,
    pub wy: f64,
    /// d(fractional column)/du, zero where u is clamped.
    pub du: f64,
    /// d(fractional row)/dv, zero where v is clamped.
    pub dv: f64,
}

/// Grid coordinate of `u ∈ [-1, 1]` on `n` nodes (corner-aligned), clamped.
/// Returns (base index, fraction, derivative scale).
#[inline]
pub(crate) fn grid_coord(u: f64, n: usize) -> (usize, f64, f64) {
    let scale = (n - 1) as f64 * 0.5;
    let inside = u > -1.0 && u < 1.0;
    let uc = u.clamp(-1.0, 1.0);
    let f = (uc + 1.0) * scale;
    let i0 = (f.floor() as usize).min(n - 2);
    (i0, f - i0 as f64, if inside { scale } else { 0.0 })
}

/// The two coordinates each plane reads from a 3D point: xy, xz, yz.
#[inline]
pub(crate) fn plane_axes(plane: usize) -> (usize, usize) {
    match plane {
        0 => (0, 1),
        1 => (0, 2),
        _ => (1, 2),
    }
}

/// One scene's feature planes in the packed `[N, N, 3C]` layout.
#[derive(Clone, Copy)]
pub(crate) struct PlaneView<'a> {
    pub data: &'a [f64],
    pub n: usize,
    pub c: usize,
}

impl<'a> PlaneView<'a> {
    #[inline]
    pub fn footprint(&self, plane: usize, u: f64, v: f64) -> Footprint {
        let (x0, wx, du) = grid_coord(u, self.n);
        let (y0, wy, dv) = grid_coord(v, self.n);
        let stride = 3 * self.c;
        let base = plane * self.c;
        let at = |y: usize, x: usize| (y * self.n + x) * stride + base;
        Footprint {
            corners: [at(y0, x0), at(y0, x0 + 1), at(y0 + 1, x0), at(y0 + 1, x0 + 1)],
            wx,
            wy,
            du,
            dv,
        }
    }

    /// Decoder input for point `x`; `out` has length C (sum) or 3C (concat).
    pub fn sample(&self, x: &[f64; 3], agg: Aggregation, out: &mut [f64]) {
        out.fill(0.0);
        let c = self.c;
        for p in 0..3 {
            let (a, b) = plane_axes(p);
            let fp = self.footprint(p, x[a], x[b]);
            let w = bilinear_weights(&fp);
            let dst = match agg {
                Aggregation::Sum => &mut out[..c],
                Aggregation::Concat => &mut out[p * c..(p + 1) * c],
            };
            for (k, o) in dst.iter_mut().enumerate() {
                *o += w[0] * self.data[fp.corners[0] + k]
                    + w[1] * self.data[fp.corners[1] + k]
                    + w[2] * self.data[fp.corners[2] + k]
                    + w[3] * self.data[fp.corners[3] + k];
            }
        }
    }

    /// Backward of [`PlaneView::sample`]: scatter into `d_planes` (same
    /// layout as `data`) and return the gradient with respect to the point.
    pub fn backward(
        &self,
        x: &[f64; 3],
        agg: Aggregation,
        d_feat: &[f64],
        d_planes: Option<&mut [f64]>,
        want_point: bool,
    ) -> [f64; 3] {
        let c = self.c;
        let mut dx = [0.0; 3];
        let mut d_planes = d_planes;
        for p in 0..3 {
            let (a, b) = plane_axes(p);
            let fp = self.footprint(p, x[a], x[b]);
            let w = bilinear_weights(&fp);
            let g = match agg {
                Aggregation::Sum => &d_feat[..c],
                Aggregation::Concat => &d_feat[p * c..(p + 1) * c],
            };
            if let Some(dp) = d_planes.as_deref_mut() {
                for (corner, wk) in fp.corners.iter().zip(w) {
                    for (k, gk) in g.iter().enumerate() {
                        dp[corner + k] += wk * gk;
                    }
                }
            }
            if want_point && (fp.du != 0.0 || fp.dv != 0.0) {
                let [f00, f01, f10, f11] = fp.corners;
                let (mut gu, mut gv) = (0.0, 0.0);
                for (k, gk) in g.iter().enumerate() {
                    let (v00, v01, v10, v11) = (
                        self.data[f00 + k],
                        self.data[f01 + k],
                        self.data[f10 + k],
                        self.data[f11 + k],
                    );
                    gu += gk * ((1.0 - fp.wy) * (v01 - v00) + fp.wy * (v11 - v10));
                    gv += gk * ((1.0 - fp.wx) * (v10 - v00) + fp.wx * (v11 - v01));
                }
                dx[a] += gu * fp.du;
                dx[b] += gv * fp.dv;
            }
        }
        dx
    }
}

#[inline]
fn bilinear_weights(fp: &Footprint) -> [f64; 4] {
    [
        (1.0 - fp.wx) * (1.0 - fp.wy),
        fp.wx * (1.0 - fp.wy),
        (1.0 - fp.wx) * fp.wy,
        fp.wx * fp.wy,
    ]
}

#[inline]
pub(crate) fn inside_cube(x: &[f64; 3]) -> bool {
    x.iter().all(|v| v.abs() <= 1.0)
}

/// Borrowed decoder weights, row-major `[in, out]` matrices.
#[derive(Clone, Copy)]
pub(crate) struct DecoderView<'a> {
    pub in_dim: usize,
    pub hidden: usize,
    pub slope: f64,
    pub w1: &'a [f64],
    pub b1: &'a [f64],
    pub w2: &'a [f64],
    pub b2: &'a [f64],
    pub wd: &'a [f64],
    pub bd: &'a [f64],
    pub wc1: &'a [f64],
    pub bc1: &'a [f64],
    pub wc2: &'a [f64],
    pub bc2: &'a [f64],
}

/// Decoder gradient buffers, laid out like [`DecoderView`].
#[derive(Clone, Debug, Default)]
pub(crate) struct DecoderGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub wd: Vec<f64>,
    pub bd: Vec<f64>,
    pub wc1: Vec<f64>,
    pub bc1: Vec<f64>,
    pub wc2: Vec<f64>,
    pub bc2: Vec<f64>,
}

impl DecoderGrads {
    pub fn zeros(in_dim: usize, hidden: usize) -> Self {
        DecoderGrads {
            w1: vec![0.0; in_dim * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * hidden],
            b2: vec![0.0; hidden],
            wd: vec![0.0; hidden],
            bd: vec![0.0; 1],
            wc1: vec![0.0; hidden * hidden],
            bc1: vec![0.0; hidden],
            wc2: vec![0.0; hidden * 3],
            bc2: vec![0.0; 3],
        }
    }

    pub fn into_vec(self) -> Vec<Vec<f64>> {
        vec![
            self.w1, self.b1, self.w2, self.b2, self.wd, self.bd, self.wc1, self.bc1, self.wc2,
            self.bc2,
        ]
    }
}

/// Hidden activations of a decoder pass over `n` rows.
#[derive(Default)]
pub(crate) struct DecoderActs {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub hc: Vec<f64>,
    pub raw_d: Vec<f64>,
    pub raw_c: Vec<f64>,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
    scratch_c: Vec<f64>,
}

fn linear(x: &[f64], n: usize, i: usize, w: &[f64], b: &[f64], o: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(n * o, 0.0);
    gemm_raw(x, i, false, w, o, false, n, i, o, out, false);
    for row in out.chunks_exact_mut(o) {
        for (v, bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
}

fn leaky_inplace(v: &mut [f64], slope: f64) {
    for x in v {
        if *x <= 0.0 {
            *x *= slope;
        }
    }
}

/// Multiply a gradient by the leaky-rectifier slope, read off the activation sign.
fn leaky_backward_inplace(grad: &mut [f64], act: &[f64], slope: f64) {
    for (g, a) in grad.iter_mut().zip(act) {
        if *a <= 0.0 {
            *g *= slope;
        }
    }
}

fn add_column_sums(g: &[f64], cols: usize, acc: &mut [f64]) {
    for row in g.chunks_exact(cols) {
        for (a, v) in acc.iter_mut().zip(row) {
            *a += v;
        }
    }
}

impl<'a> DecoderView<'a> {
    pub fn forward(&self, feats: &[f64], n: usize, acts: &mut DecoderActs) {
        let (i, h) = (self.in_dim, self.hidden);
        linear(feats, n, i, self.w1, self.b1, h, &mut acts.h1);
        leaky_inplace(&mut acts.h1, self.slope);
        linear(&acts.h1, n, h, self.w2, self.b2, h, &mut acts.h2);
        leaky_inplace(&mut acts.h2, self.slope);
        linear(&acts.h2, n, h, self.wd, self.bd, 1, &mut acts.raw_d);
        linear(&acts.h2, n, h, self.wc1, self.bc1, h, &mut acts.hc);
        leaky_inplace(&mut acts.hc, self.slope);
        linear(&acts.hc, n, h, self.wc2, self.bc2, 3, &mut acts.raw_c);
    }

    /// Backward from gradients on the raw heads. Accumulates weight gradients
    /// into `grads` and writes input gradients into `d_feats` when given.
    pub fn backward(
        &self,
        feats: &[f64],
        n: usize,
        acts: &mut DecoderActs,
        d_raw_d: &[f64],
        d_raw_c: &[f64],
        grads: Option<&mut DecoderGrads>,
        d_feats: Option<&mut [f64]>,
    ) {
        let (i, h, s) = (self.in_dim, self.hidden, self.slope);
        let mut d_hc = std::mem::take(&mut acts.scratch_a);
        let mut d_h2 = std::mem::take(&mut acts.scratch_b);
        let mut d_h1 = std::mem::take(&mut acts.scratch_c);
        d_hc.clear();
        d_hc.resize(n * h, 0.0);
        d_h2.clear();
        d_h2.resize(n * h, 0.0);
        d_h1.clear();
        d_h1.resize(n * h, 0.0);

        // colour branch
        gemm_raw(d_raw_c, 3, false, self.wc2, 3, true, n, 3, h, &mut d_hc, false);
        leaky_backward_inplace(&mut d_hc, &acts.hc, s);
        // shared trunk receives both heads
        gemm_raw(d_raw_d, 1, false, self.wd, 1, true, n, 1, h, &mut d_h2, false);
        gemm_raw(&d_hc, h, false, self.wc1, h, true, n, h, h, &mut d_h2, true);
        leaky_backward_inplace(&mut d_h2, &acts.h2, s);
        gemm_raw(&d_h2, h, false, self.w2, h, true, n, h, h, &mut d_h1, false);
        leaky_backward_inplace(&mut d_h1, &acts.h1, s);

        if let Some(g) = grads {
            gemm_raw(&acts.hc, h, true, d_raw_c, 3, false, h, n, 3, &mut g.wc2, true);
            add_column_sums(d_raw_c, 3, &mut g.bc2);
            gemm_raw(&acts.h2, h, true, &d_hc, h, false, h, n, h, &mut g.wc1, true);
            add_column_sums(&d_hc, h, &mut g.bc1);
            gemm_raw(&acts.h2, h, true, d_raw_d, 1, false, h, n, 1, &mut g.wd, true);
            add_column_sums(d_raw_d, 1, &mut g.bd);
            gemm_raw(&acts.h1, h, true, &d_h2, h, false, h, n, h, &mut g.w2, true);
            add_column_sums(&d_h2, h, &mut g.b2);
            gemm_raw(feats, i, true, &d_h1, h, false, i, n, h, &mut g.w1, true);
            add_column_sums(&d_h1, h, &mut g.b1);
        }
        if let Some(df) = d_feats {
            gemm_raw(&d_h1, h, false, self.w1, h, true, n, h, i, df, false);
        }
        acts.scratch_a = d_hc;
        acts.scratch_b = d_h2;
        acts.scratch_c = d_h1;
    }
}

/// Field outputs from raw decoder heads.
#[inline]
pub(crate) fn activate(raw_d: f64, raw_c: &[f64], inside: bool) -> (f64, [f64; 3]) {
    let sigma = if inside { softplus(raw_d) } else { 0.0 };
    (sigma, [sigmoid(raw_c[0]), sigmoid(raw_c[1]), sigmoid(raw_c[2])])
}

/// Quadrature result for a single ray.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct Composite {
    pub color: [f64; 3],
    pub opacity: f64,
    pub depth: f64,
}

/// Sample distances: one per equal-width bin of `[near, far]`, at offset
/// `offsets[k] ∈ [0, 1)` inside bin `k` (0.5 = bin midpoint).
pub(crate) fn sample_distances(near: f64, far: f64, offsets: &[f64], out: &mut Vec<f64>) -> f64 {
    let s = offsets.len();
    let delta = (far - near) / s as f64;
    out.clear();
    out.extend(
        offsets
            .iter()
            .enumerate()
            .map(|(k, off)| near + (k as f64 + off) * delta),
    );
    delta
}

/// Front-to-back compositing with per-sample opacity `1 - exp(-σ δ)`.
pub(crate) fn composite(
    sigma: &[f64],
    color: &[[f64; 3]],
    ts: &[f64],
    delta: f64,
    background: [f64; 3],
    weights: &mut Vec<f64>,
) -> Composite {
    weights.clear();
    let mut trans = 1.0;
    let mut out = [0.0; 3];
    let mut wsum = 0.0;
    let mut depth = 0.0;
    for k in 0..sigma.len() {
        let survive = (-sigma[k] * delta).exp();
        let w = trans * (1.0 - survive);
        weights.push(w);
        for ch in 0..3 {
            out[ch] += w * color[k][ch];
        }
        wsum += w;
        depth += w * ts[k];
        trans *= survive;
    }
    for ch in 0..3 {
        out[ch] += trans * background[ch];
    }
    let far = ts.last().copied().unwrap_or(0.0);
    Composite {
        color: out,
        opacity: wsum,
        depth: if wsum > 0.0 { depth / wsum } else { far },
    }
}

/// Backward of [`composite`] for a colour gradient `g`. Writes per-sample
/// gradients for σ and colour and returns the gradient for the step length.
pub(crate) fn composite_backward(
    sigma: &[f64],
    color: &[[f64; 3]],
    delta: f64,
    background: [f64; 3],
    g: [f64; 3],
    d_sigma: &mut [f64],
    d_color: &mut [[f64; 3]],
) -> f64 {
    let s = sigma.len();
    // transmittance before each sample
    let mut trans = vec![1.0; s + 1];
    for k in 0..s {
        trans[k + 1] = trans[k] * (-sigma[k] * delta).exp();
    }
    let dot = |c: &[f64; 3]| g[0] * c[0] + g[1] * c[1] + g[2] * c[2];
    // remaining colour after sample k, projected on g
    let mut remaining = trans[s] * dot(&background);
    let mut d_delta = 0.0;
    for k in (0..s).rev() {
        let w = trans[k] - trans[k + 1];
        let d_tau = trans[k + 1] * dot(&color[k]) - remaining;
        d_sigma[k] = d_tau * delta;
        d_delta += d_tau * sigma[k];
        for ch in 0..3 {
            d_color[k][ch] = w * g[ch];
        }
        remaining += w * dot(&color[k]);
    }
    d_delta
}

/// Per-ray scratch space for the fused renderer.
#[derive(Default)]
pub(crate) struct RayScratch {
    pub ts: Vec<f64>,
    pub points: Vec<[f64; 3]>,
    pub feats: Vec<f64>,
    pub acts: DecoderActs,
    pub sigma: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub inside: Vec<bool>,
    pub weights: Vec<f64>,
    pub d_sigma: Vec<f64>,
    pub d_color: Vec<[f64; 3]>,
    pub d_raw_d: Vec<f64>,
    pub d_raw_c: Vec<f64>,
    pub d_feats: Vec<f64>,
}

/// Everything needed to shade samples of one scene.
#[derive(Clone, Copy)]
pub(crate) struct FieldKernel<'a> {
    pub planes: PlaneView<'a>,
    pub decoder: DecoderView<'a>,
    pub aggregation: Aggregation,
}

/// Gradient destinations for a backward pass through [`FieldKernel`].
pub(crate) struct FieldGrads<'g> {
    pub decoder: Option<&'g mut DecoderGrads>,
    pub planes: Option<&'g mut [f64]>,
    pub want_points: bool,
}

impl<'a> FieldKernel<'a> {
    /// Evaluate σ and colour at `scratch.points`, filling `sigma`/`color`.
    pub fn shade(&self, scratch: &mut RayScratch) {
        let n = scratch.points.len();
        let in_dim = self.decoder.in_dim;
        scratch.feats.clear();
        scratch.feats.resize(n * in_dim, 0.0);
        scratch.inside.clear();
        for (k, x) in scratch.points.iter().enumerate() {
            self.planes.sample(
                x,
                self.aggregation,
                &mut scratch.feats[k * in_dim..(k + 1) * in_dim],
            );
            scratch.inside.push(inside_cube(x));
        }
        self.decoder.forward(&scratch.feats, n, &mut scratch.acts);
        scratch.sigma.clear();
        scratch.color.clear();
        for k in 0..n {
            let (s, c) = activate(
                scratch.acts.raw_d[k],
                &scratch.acts.raw_c[3 * k..3 * k + 3],
                scratch.inside[k],
            );
            scratch.sigma.push(s);
            scratch.color.push(c);
        }
    }

    /// Backward from `d_sigma`/`d_color` (already in scratch) through the
    /// activations, decoder and plane lookups. Returns per-point gradients
    /// when `grads.want_points`.
    pub fn shade_backward(&self, scratch: &mut RayScratch, grads: &mut FieldGrads<'_>) -> Vec<[f64; 3]> {
        let n = scratch.points.len();
        let in_dim = self.decoder.in_dim;
        scratch.d_raw_d.clear();
        scratch.d_raw_c.clear();
        for k in 0..n {
            let ds = if scratch.inside[k] {
                scratch.d_sigma[k] * sigmoid(scratch.acts.raw_d[k])
            } else {
                0.0
            };
            scratch.d_raw_d.push(ds);
            for ch in 0..3 {
                let c = scratch.color[k][ch];
                scratch.d_raw_c.push(scratch.d_color[k][ch] * c * (1.0 - c));
            }
        }
        let need_feats = grads.planes.is_some() || grads.want_points;
        if need_feats {
            scratch.d_feats.clear();
            scratch.d_feats.resize(n * in_dim, 0.0);
        }
        let d_raw_d = std::mem::take(&mut scratch.d_raw_d);
        let d_raw_c = std::mem::take(&mut scratch.d_raw_c);
        self.decoder.backward(
            &scratch.feats,
            n,
            &mut scratch.acts,
            &d_raw_d,
            &d_raw_c,
            grads.decoder.as_deref_mut(),
            if need_feats {
                Some(&mut scratch.d_feats[..])
            } else {
                None
            },
        );
        scratch.d_raw_d = d_raw_d;
        scratch.d_raw_c = d_raw_c;
        let mut d_points = Vec::new();
        if need_feats {
            for (k, x) in scratch.points.iter().enumerate() {
                let dx = self.planes.backward(
                    x,
                    self.aggregation,
                    &scratch.d_feats[k * in_dim..(k + 1) * in_dim],
                    grads.planes.as_deref_mut(),
                    grads.want_points,
                );
                if grads.want_points {
                    d_points.push(dx);
                }
            }
        }
        d_points
    }
}
