//! Triplane scene representation and point queries.
//!
//! Features live in one packed `[N, N, 3C]` tensor (channels-last). Channels
//! `[0, C)` are the xy plane, `[C, 2C)` the xz plane and `[2C, 3C)` the yz
//! plane. A plane lookup maps its first coordinate to the column and its
//! second to the row, with grid nodes at the corners of `[-1, 1]²`.

use crate::error::{Error, Result};
use crate::kernel::{self, DecoderView, FieldGrads, FieldKernel, PlaneView, RayScratch};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tripatch_autograd::{Function, Tensor, Var};

/// Default probe length for occupancy tests: one quadrature step across the cube at 96 samples.
pub const DEFAULT_PROBE_STEP: f64 = 2.0 / 96.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Sum,
    Concat,
}

impl Aggregation {
    /// Decoder input width for `channels` features per plane.
    pub fn input_dim(self, channels: usize) -> usize {
        match self {
            Aggregation::Sum => channels,
            Aggregation::Concat => 3 * channels,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    Xy,
    Xz,
    Yz,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::Xy, Plane::Xz, Plane::Yz];

    fn index(self) -> usize {
        match self {
            Plane::Xy => 0,
            Plane::Xz => 1,
            Plane::Yz => 2,
        }
    }

    /// The (u, v) coordinates this plane reads from a point.
    pub fn project(self, x: [f64; 3]) -> [f64; 2] {
        let (a, b) = kernel::plane_axes(self.index());
        [x[a], x[b]]
    }
}

/// Three axis-aligned N×N feature planes with C channels each over `[-1, 1]³`.
#[derive(Clone, Debug, PartialEq)]
pub struct TriplaneGrid {
    resolution: usize,
    channels: usize,
    features: Tensor,
}

impl TriplaneGrid {
    /// Wrap a packed `[N, N, 3C]` feature tensor.
    pub fn new(features: Tensor) -> Result<Self> {
        let s = features.shape();
        if s.len() != 3 || s[0] != s[1] || s[2] % 3 != 0 || s[2] == 0 {
            return Err(Error::InvalidInput(format!(
                "triplane features must be [N, N, 3C], got {s:?}"
            )));
        }
        if s[0] < 2 {
            return Err(Error::InvalidInput("triplane resolution must be >= 2".into()));
        }
        if !features.all_finite() {
            return Err(Error::InvalidInput("triplane features must be finite".into()));
        }
        Ok(TriplaneGrid {
            resolution: s[0],
            channels: s[2] / 3,
            features,
        })
    }

    pub fn zeros(resolution: usize, channels: usize) -> Result<Self> {
        Self::new(Tensor::zeros(&[resolution, resolution, 3 * channels]))
    }

    /// Assemble from three `[N, N, C]` planes in xy, xz, yz order.
    pub fn from_planes(xy: &Tensor, xz: &Tensor, yz: &Tensor) -> Result<Self> {
        if xy.shape() != xz.shape() || xy.shape() != yz.shape() {
            return Err(Error::InvalidInput(format!(
                "plane shapes differ: {:?}, {:?}, {:?}",
                xy.shape(),
                xz.shape(),
                yz.shape()
            )));
        }
        if xy.rank() != 3 {
            return Err(Error::InvalidInput("planes must be [N, N, C]".into()));
        }
        Self::new(Tensor::concat(&[xy, xz, yz], 2))
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// The packed `[N, N, 3C]` tensor.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn into_features(self) -> Tensor {
        self.features
    }

    /// One plane as an `[N, N, C]` tensor.
    pub fn plane(&self, plane: Plane) -> Tensor {
        self.features
            .narrow(2, plane.index() * self.channels, self.channels)
    }

    pub(crate) fn view(&self) -> PlaneView<'_> {
        PlaneView {
            data: self.features.data(),
            n: self.resolution,
            c: self.channels,
        }
    }
}

/// Bilinear lookup in an `[N, N, C]` plane at `uv ∈ [-1, 1]²` (clamped).
/// `uv[0]` selects the column and `uv[1]` the row.
pub fn bilinear_sample(plane: &Tensor, uv: [f64; 2]) -> Result<Vec<f64>> {
    if !(uv[0].is_finite() && uv[1].is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite uv {uv:?}")));
    }
    let s = plane.shape();
    if s.len() != 3 || s[0] != s[1] || s[0] < 2 {
        return Err(Error::InvalidInput(format!("plane must be [N, N, C], got {s:?}")));
    }
    let (n, c) = (s[0], s[2]);
    let (x0, wx, _) = kernel::grid_coord(uv[0], n);
    let (y0, wy, _) = kernel::grid_coord(uv[1], n);
    let d = plane.data();
    let at = |y: usize, x: usize, k: usize| d[(y * n + x) * c + k];
    Ok((0..c)
        .map(|k| {
            (1.0 - wy) * ((1.0 - wx) * at(y0, x0, k) + wx * at(y0, x0 + 1, k))
                + wy * ((1.0 - wx) * at(y0 + 1, x0, k) + wx * at(y0 + 1, x0 + 1, k))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub hidden: usize,
    pub negative_slope: f64,
    pub aggregation: Aggregation,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            hidden: 64,
            negative_slope: 0.2,
            aggregation: Aggregation::Sum,
        }
    }
}

/// Names of the decoder tensors, in storage order.
pub const DECODER_TENSORS: [&str; 10] = [
    "shared1.weight",
    "shared1.bias",
    "shared2.weight",
    "shared2.bias",
    "density.weight",
    "density.bias",
    "rgb1.weight",
    "rgb1.bias",
    "rgb2.weight",
    "rgb2.bias",
];

/// Decoder MLP: two shared layers, a density head and a two-layer colour head.
/// Weight matrices are stored `[in, out]`.
#[derive(Clone, Debug)]
pub struct FieldDecoderParams {
    config: DecoderConfig,
    channels: usize,
    tensors: Vec<Var>,
}

impl FieldDecoderParams {
    fn shapes(input: usize, hidden: usize) -> [Vec<usize>; 10] {
        [
            vec![input, hidden],
            vec![hidden],
            vec![hidden, hidden],
            vec![hidden],
            vec![hidden, 1],
            vec![1],
            vec![hidden, hidden],
            vec![hidden],
            vec![hidden, 3],
            vec![3],
        ]
    }

    /// Uniform `±1/sqrt(fan_in)` weights and zero biases.
    pub fn init(channels: usize, config: DecoderConfig, rng: &mut impl Rng) -> Self {
        let input = config.aggregation.input_dim(channels);
        let tensors = Self::shapes(input, config.hidden)
            .iter()
            .map(|shape| {
                let t = if shape.len() == 2 {
                    let bound = 1.0 / (shape[0] as f64).sqrt();
                    Tensor::uniform(shape, -bound, bound, rng)
                } else {
                    Tensor::zeros(shape)
                };
                Var::param(t)
            })
            .collect();
        FieldDecoderParams {
            config,
            channels,
            tensors,
        }
    }

    /// Build from tensors in [`DECODER_TENSORS`] order.
    pub fn from_tensors(channels: usize, config: DecoderConfig, tensors: Vec<Tensor>) -> Result<Self> {
        let input = config.aggregation.input_dim(channels);
        let shapes = Self::shapes(input, config.hidden);
        if tensors.len() != shapes.len() {
            return Err(Error::Config(format!(
                "decoder expects {} tensors, got {}",
                shapes.len(),
                tensors.len()
            )));
        }
        for ((t, s), name) in tensors.iter().zip(&shapes).zip(DECODER_TENSORS) {
            if t.shape() != s.as_slice() {
                return Err(Error::Config(format!(
                    "decoder tensor {name} has shape {:?}, expected {s:?}",
                    t.shape()
                )));
            }
        }
        Ok(FieldDecoderParams {
            config,
            channels,
            tensors: tensors.into_iter().map(Var::param).collect(),
        })
    }

    pub fn config(&self) -> &DecoderConfig {
        &self.config
    }

    /// Feature channels per plane this decoder consumes.
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn input_dim(&self) -> usize {
        self.config.aggregation.input_dim(self.channels)
    }

    pub fn vars(&self) -> &[Var] {
        &self.tensors
    }

    pub fn vars_mut(&mut self) -> &mut [Var] {
        &mut self.tensors
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.value().len()).sum()
    }

    pub(crate) fn check_grid(&self, grid: &TriplaneGrid) -> Result<()> {
        if grid.channels() != self.channels {
            return Err(Error::Config(format!(
                "grid has {} channels per plane but the decoder expects {}",
                grid.channels(),
                self.channels
            )));
        }
        Ok(())
    }

    pub(crate) fn view(&self) -> DecoderView<'_> {
        let tensors: Vec<&Tensor> = self.tensors.iter().map(|v| v.value()).collect();
        decoder_view_from(&tensors, self.input_dim(), &self.config)
    }

    /// Raw decoder outputs `(density logit, colour logits)` for one input vector.
    pub fn decode_raw(&self, input: &[f64]) -> Result<(f64, [f64; 3])> {
        if input.len() != self.input_dim() {
            return Err(Error::Config(format!(
                "decoder input has {} values, expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut acts = kernel::DecoderActs::default();
        self.view().forward(input, 1, &mut acts);
        Ok((acts.raw_d[0], [acts.raw_c[0], acts.raw_c[1], acts.raw_c[2]]))
    }
}

/// Colour and density at a point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub color: [f64; 3],
    pub density: f64,
}

fn check_point(x: [f64; 3]) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("non-finite point {x:?}")))
    }
}

/// The aggregated decoder input at `x`.
pub fn decoder_input(grid: &TriplaneGrid, aggregation: Aggregation, x: [f64; 3]) -> Result<Vec<f64>> {
    check_point(x)?;
    let mut out = vec![0.0; aggregation.input_dim(grid.channels())];
    grid.view().sample(&x, aggregation, &mut out);
    Ok(out)
}

/// Colour and density of the field at `x`.
pub fn query_field(grid: &TriplaneGrid, dec: &FieldDecoderParams, x: [f64; 3]) -> Result<FieldSample> {
    dec.check_grid(grid)?;
    let input = decoder_input(grid, dec.config.aggregation, x)?;
    let (raw_d, raw_c) = dec.decode_raw(&input)?;
    let (density, color) = kernel::activate(raw_d, &raw_c, kernel::inside_cube(&x));
    Ok(FieldSample { color, density })
}

/// Opacity of a short probe segment at `x`: `1 - exp(-σ(x) · probe_step)`.
pub fn occupancy_at(
    grid: &TriplaneGrid,
    dec: &FieldDecoderParams,
    x: [f64; 3],
    probe_step: f64,
) -> Result<f64> {
    if !(probe_step > 0.0) {
        return Err(Error::InvalidInput(format!("probe_step must be > 0, got {probe_step}")));
    }
    let s = query_field(grid, dec, x)?;
    Ok(opacity_of(s.density, probe_step))
}

pub(crate) fn opacity_of(density: f64, step: f64) -> f64 {
    -(-density * step).exp_m1()
}

/// Anything that can be shaded at a batch of points.
pub trait RadianceField {
    /// Densities and colours at `points`.
    fn shade(&self, points: &[[f64; 3]], density: &mut Vec<f64>, color: &mut Vec<[f64; 3]>);

    fn sample(&self, x: [f64; 3]) -> FieldSample {
        let (mut d, mut c) = (Vec::new(), Vec::new());
        self.shade(&[x], &mut d, &mut c);
        FieldSample {
            color: c[0],
            density: d[0],
        }
    }
}

/// A triplane and its decoder viewed as a radiance field.
#[derive(Clone, Copy)]
pub struct TriplaneField<'a> {
    pub grid: &'a TriplaneGrid,
    pub decoder: &'a FieldDecoderParams,
}

impl<'a> TriplaneField<'a> {
    pub fn new(grid: &'a TriplaneGrid, decoder: &'a FieldDecoderParams) -> Result<Self> {
        decoder.check_grid(grid)?;
        Ok(TriplaneField { grid, decoder })
    }

    pub(crate) fn kernel(&self) -> FieldKernel<'a> {
        FieldKernel {
            planes: self.grid.view(),
            decoder: self.decoder.view(),
            aggregation: self.decoder.config.aggregation,
        }
    }
}

impl RadianceField for TriplaneField<'_> {
    fn shade(&self, points: &[[f64; 3]], density: &mut Vec<f64>, color: &mut Vec<[f64; 3]>) {
        let mut scratch = RayScratch::default();
        scratch.points.extend_from_slice(points);
        self.kernel().shade(&mut scratch);
        *density = scratch.sigma;
        *color = scratch.color;
    }
}

/// Differentiable field query. Inputs are the packed planes `[N, N, 3C]`, the
/// decoder tensors and points `[P, 3]`; the result is `[P, 4]` holding
/// (σ, r, g, b) per point. First-order only.
pub fn query_field_var(
    planes: &Var,
    dec: &FieldDecoderParams,
    points: &Var,
) -> Result<Var> {
    let ps = planes.shape();
    if ps.len() != 3 || ps[0] != ps[1] || ps[2] != 3 * dec.channels() {
        return Err(Error::Config(format!(
            "planes {ps:?} do not match decoder with {} channels",
            dec.channels()
        )));
    }
    if points.shape().len() != 2 || points.shape()[1] != 3 {
        return Err(Error::InvalidInput(format!(
            "points must be [P, 3], got {:?}",
            points.shape()
        )));
    }
    let n = ps[0];
    let op = FieldQuery {
        n,
        channels: dec.channels(),
        config: dec.config,
    };
    let mut scratch = RayScratch::default();
    scratch.points = points
        .value()
        .data()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    op.kernel(planes.value(), &dec.tensors.iter().map(|v| v.value()).collect::<Vec<_>>())
        .shade(&mut scratch);
    let out: Vec<f64> = scratch
        .sigma
        .iter()
        .zip(&scratch.color)
        .flat_map(|(s, c)| [*s, c[0], c[1], c[2]])
        .collect();
    let mut inputs = vec![planes.clone()];
    inputs.extend(dec.tensors.iter().cloned());
    inputs.push(points.clone());
    Ok(Var::from_op(
        Tensor::new(&[scratch.points.len(), 4], out),
        inputs,
        Box::new(op),
    ))
}

struct FieldQuery {
    n: usize,
    channels: usize,
    config: DecoderConfig,
}

pub(crate) fn decoder_view_from<'a>(
    tensors: &[&'a Tensor],
    input: usize,
    config: &DecoderConfig,
) -> DecoderView<'a> {
    DecoderView {
        in_dim: input,
        hidden: config.hidden,
        slope: config.negative_slope,
        w1: tensors[0].data(),
        b1: tensors[1].data(),
        w2: tensors[2].data(),
        b2: tensors[3].data(),
        wd: tensors[4].data(),
        bd: tensors[5].data(),
        wc1: tensors[6].data(),
        bc1: tensors[7].data(),
        wc2: tensors[8].data(),
        bc2: tensors[9].data(),
    }
}

impl FieldQuery {
    fn kernel<'a>(&self, planes: &'a Tensor, dec: &[&'a Tensor]) -> FieldKernel<'a> {
        FieldKernel {
            planes: PlaneView {
                data: planes.data(),
                n: self.n,
                c: self.channels,
            },
            decoder: decoder_view_from(
                dec,
                self.config.aggregation.input_dim(self.channels),
                &self.config,
            ),
            aggregation: self.config.aggregation,
        }
    }
}

impl Function for FieldQuery {
    fn name(&self) -> &'static str {
        "query_field"
    }

    fn supports_higher_order(&self) -> bool {
        false
    }

    fn backward(&self, grad: &Var, inputs: &[Var], _output: &Var) -> Vec<Option<Var>> {
        let planes = inputs[0].value();
        let dec: Vec<&Tensor> = inputs[1..11].iter().map(|v| v.value()).collect();
        let points = &inputs[11];
        let kernel = self.kernel(planes, &dec);
        let mut scratch = RayScratch::default();
        scratch.points = points
            .value()
            .data()
            .chunks_exact(3)
            .map(|p| [p[0], p[1], p[2]])
            .collect();
        kernel.shade(&mut scratch);
        let g = grad.value().data();
        scratch.d_sigma = g.chunks_exact(4).map(|r| r[0]).collect();
        scratch.d_color = g.chunks_exact(4).map(|r| [r[1], r[2], r[3]]).collect();

        let want_dec = inputs[1..11].iter().any(|v| v.requires_grad());
        let mut dec_grads = want_dec.then(|| {
            kernel::DecoderGrads::zeros(kernel.decoder.in_dim, kernel.decoder.hidden)
        });
        let mut plane_grads = inputs[0]
            .requires_grad()
            .then(|| vec![0.0; planes.len()]);
        let mut fg = FieldGrads {
            decoder: dec_grads.as_mut(),
            planes: plane_grads.as_deref_mut(),
            want_points: points.requires_grad(),
        };
        let d_points = kernel.shade_backward(&mut scratch, &mut fg);

        let mut out: Vec<Option<Var>> = Vec::with_capacity(12);
        out.push(plane_grads.map(|g| Var::constant(Tensor::new(planes.shape(), g))));
        match dec_grads {
            Some(dg) => out.extend(
                dg.into_vec()
                    .into_iter()
                    .zip(&dec)
                    .map(|(g, t)| Some(Var::constant(Tensor::new(t.shape(), g)))),
            ),
            None => out.extend(std::iter::repeat_n(None, 10)),
        }
        out.push(points.requires_grad().then(|| {
            Var::constant(Tensor::new(
                points.shape(),
                d_points.into_iter().flatten().collect(),
            ))
        }));
        out
    }
}
