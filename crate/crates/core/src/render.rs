//! Patch ray generation and volume rendering by quadrature.
//!
//! Each ray's interval `[t_n, t_f]` is split into equal bins of width
//! `δ = (t_f - t_n) / S`; one sample sits in each bin (at the midpoint, or at
//! a random offset when jittered) and every sample's opacity is
//! `1 - exp(-σ δ)`.

use crate::camera::{apply3, DecomposedPose};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::kernel::{self, DecoderGrads, FieldGrads, FieldKernel, PlaneView, RayScratch};
use crate::triplane::{
    decoder_view_from, DecoderConfig, FieldDecoderParams, RadianceField, TriplaneField,
    TriplaneGrid,
};
use rand::Rng;
use tripatch_autograd::{Function, Tensor, Var};

pub const DEFAULT_NEAR: f64 = 0.05;
/// The cube diagonal.
pub const DEFAULT_FAR: f64 = 2.0 * 1.732_050_807_568_877_2;
pub const DEFAULT_SAMPLES: usize = 96;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: [f64; 3],
    pub direction: [f64; 3],
    pub near: f64,
    pub far: f64,
}

impl Ray {
    /// A ray with unit direction, clipped to the scene cube.
    pub fn through_cube(origin: [f64; 3], direction: [f64; 3]) -> Result<Ray> {
        let n = norm(direction);
        if !(n > 0.0 && n.is_finite()) || origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "ray needs a finite origin and non-zero direction, got {origin:?}, {direction:?}"
            )));
        }
        let d = [direction[0] / n, direction[1] / n, direction[2] / n];
        let b = cube_bounds(origin, d, DEFAULT_NEAR, DEFAULT_FAR);
        Ok(Ray {
            origin,
            direction: d,
            near: b.near,
            far: b.far,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.near >= 0.0 && self.near < self.far && self.far.is_finite()) {
            return Err(Error::InvalidRay {
                near: self.near,
                far: self.far,
            });
        }
        Ok(())
    }

    pub fn at(&self, t: f64) -> [f64; 3] {
        [
            self.origin[0] + t * self.direction[0],
            self.origin[1] + t * self.direction[1],
            self.origin[2] + t * self.direction[2],
        ]
    }
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

/// Ray interval clipped to `[-1, 1]³`, with the slab axis that fixed each end.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Bounds {
    pub near: f64,
    pub far: f64,
    pub near_axis: Option<usize>,
    pub far_axis: Option<usize>,
}

/// Intersect with the cube and clamp to `[near_min, far_max]`. Rays that miss
/// the cube keep the unclipped interval (nothing is visible along them).
pub(crate) fn cube_bounds(o: [f64; 3], d: [f64; 3], near_min: f64, far_max: f64) -> Bounds {
    let fallback = Bounds {
        near: near_min,
        far: far_max,
        near_axis: None,
        far_axis: None,
    };
    let (mut enter, mut exit) = (f64::NEG_INFINITY, f64::INFINITY);
    let (mut enter_axis, mut exit_axis) = (0, 0);
    for i in 0..3 {
        if d[i].abs() < 1e-15 {
            if o[i].abs() > 1.0 {
                return fallback;
            }
            continue;
        }
        let t1 = (-1.0 - o[i]) / d[i];
        let t2 = (1.0 - o[i]) / d[i];
        let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
        if lo > enter {
            enter = lo;
            enter_axis = i;
        }
        if hi < exit {
            exit = hi;
            exit_axis = i;
        }
    }
    let (near, near_axis) = if enter > near_min {
        (enter, Some(enter_axis))
    } else {
        (near_min, None)
    };
    let (far, far_axis) = if exit < far_max {
        (exit, Some(exit_axis))
    } else {
        (far_max, None)
    };
    if near >= far {
        return fallback;
    }
    Bounds {
        near,
        far,
        near_axis,
        far_axis,
    }
}

/// Pixel-centre coordinate of index `i` out of `h`, spanning `[-1, 1]`.
pub fn pixel_center(i: usize, h: usize) -> f64 {
    (2 * i + 1) as f64 / h as f64 - 1.0
}

pub fn check_window(scale: f64, center: [f64; 2]) -> Result<()> {
    let ok = scale > 0.0
        && scale <= 1.0
        && center.iter().all(|c| c.is_finite() && c.abs() + scale <= 1.0 + 1e-12);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidWindow { scale, center })
    }
}

/// Unit camera-frame directions for an `h × h` patch of scale `s` centred at
/// `u0`, row-major from the top row. Row `i`, column `j` sits at image-plane
/// coordinate `u0 + s · (pixel_center(j), -pixel_center(i))`.
pub fn camera_directions(fov_deg: f64, scale: f64, center: [f64; 2], h: usize) -> Result<Vec<[f64; 3]>> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::InvalidInput(format!("field of view {fov_deg} must lie in (0, 180)")));
    }
    if h == 0 {
        return Err(Error::InvalidInput("patch size must be positive".into()));
    }
    check_window(scale, center)?;
    let t = (fov_deg.to_radians() * 0.5).tan();
    let mut out = Vec::with_capacity(h * h);
    for i in 0..h {
        let uy = center[1] - scale * pixel_center(i, h);
        for j in 0..h {
            let ux = center[0] + scale * pixel_center(j, h);
            let d = [ux * t, uy * t, 1.0];
            let n = norm(d);
            out.push([d[0] / n, d[1] / n, d[2] / n]);
        }
    }
    Ok(out)
}

/// An `h × h` grid of rays from one camera.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchRayBundle {
    pub rays: Vec<Ray>,
    pub size: usize,
    pub scale: f64,
    pub window_center: [f64; 2],
    /// Index of the pose the camera came from, when known.
    pub camera_index: Option<usize>,
}

pub fn generate_patch_rays(
    pose: &DecomposedPose,
    fov_deg: f64,
    scale: f64,
    center: [f64; 2],
    h: usize,
) -> Result<PatchRayBundle> {
    let rot = pose.rotation();
    let rays = camera_directions(fov_deg, scale, center, h)?
        .into_iter()
        .map(|d| {
            let w = apply3(&rot, d);
            let b = cube_bounds(pose.p, w, DEFAULT_NEAR, DEFAULT_FAR);
            Ray {
                origin: pose.p,
                direction: w,
                near: b.near,
                far: b.far,
            }
        })
        .collect();
    Ok(PatchRayBundle {
        rays,
        size: h,
        scale,
        window_center: center,
        camera_index: None,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedPatch {
    pub colors: RgbImage,
    /// Expected termination distance per pixel (the far bound where nothing is hit).
    pub depth: Vec<f64>,
    pub opacity: Vec<f64>,
}

/// Per-bin sample offsets in `[0, 1)`: `None` means bin midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderOptions {
    pub n_samples: usize,
    pub offsets: Option<Tensor>,
    pub background: [f64; 3],
}

impl RenderOptions {
    pub fn midpoint(n_samples: usize) -> Self {
        RenderOptions {
            n_samples,
            offsets: None,
            background: [0.0; 3],
        }
    }

    fn check(&self, rays: usize) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 samples per ray, got {}",
                self.n_samples
            )));
        }
        if let Some(o) = &self.offsets {
            if o.shape() != [rays, self.n_samples] {
                return Err(Error::InvalidInput(format!(
                    "sample offsets have shape {:?}, expected [{rays}, {}]",
                    o.shape(),
                    self.n_samples
                )));
            }
        }
        Ok(())
    }

    fn offsets_for(&self, ray: usize) -> OffsetRow<'_> {
        match &self.offsets {
            Some(t) => OffsetRow::Given(&t.data()[ray * self.n_samples..(ray + 1) * self.n_samples]),
            None => OffsetRow::Mid(self.n_samples),
        }
    }
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self::midpoint(DEFAULT_SAMPLES)
    }
}

enum OffsetRow<'a> {
    Given(&'a [f64]),
    Mid(usize),
}

impl OffsetRow<'_> {
    fn fill(&self, buf: &mut Vec<f64>) {
        buf.clear();
        match self {
            OffsetRow::Given(s) => buf.extend_from_slice(s),
            OffsetRow::Mid(n) => buf.resize(*n, 0.5),
        }
    }
}

/// One uniform offset per bin, for stratified sampling.
pub fn jittered_offsets(n_rays: usize, n_samples: usize, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(&[n_rays, n_samples], |_| rng.gen::<f64>())
}

/// Render rays through any radiance field (used for analytic oracles).
pub fn render_field(field: &dyn RadianceField, rays: &[Ray], options: &RenderOptions) -> Result<Vec<[f64; 5]>> {
    options.check(rays.len())?;
    let mut offs = Vec::new();
    let mut ts = Vec::new();
    let mut points = Vec::new();
    let (mut sigma, mut color, mut weights) = (Vec::new(), Vec::new(), Vec::new());
    let mut out = Vec::with_capacity(rays.len());
    for (r, ray) in rays.iter().enumerate() {
        ray.validate()?;
        options.offsets_for(r).fill(&mut offs);
        let delta = kernel::sample_distances(ray.near, ray.far, &offs, &mut ts);
        points.clear();
        points.extend(ts.iter().map(|t| ray.at(*t)));
        field.shade(&points, &mut sigma, &mut color);
        let c = kernel::composite(&sigma, &color, &ts, delta, options.background, &mut weights);
        out.push([c.color[0], c.color[1], c.color[2], c.opacity, c.depth]);
    }
    Ok(out)
}

fn patch_from_rows(rows: &[[f64; 5]], width: usize, height: usize) -> RenderedPatch {
    let colors = RgbImage::new(
        width,
        height,
        rows.iter().flat_map(|r| [r[0], r[1], r[2]]).collect(),
    )
    .expect("sizes agree");
    RenderedPatch {
        colors,
        opacity: rows.iter().map(|r| r[3]).collect(),
        depth: rows.iter().map(|r| r[4]).collect(),
    }
}

/// Render any field over a bundle.
pub fn render_field_bundle(
    field: &dyn RadianceField,
    bundle: &PatchRayBundle,
    options: &RenderOptions,
) -> Result<RenderedPatch> {
    let rows = render_field(field, &bundle.rays, options)?;
    Ok(patch_from_rows(&rows, bundle.size, bundle.size))
}

/// Render a bundle at bin midpoints with `n_samples` samples per ray.
pub fn render_rays(
    grid: &TriplaneGrid,
    dec: &FieldDecoderParams,
    bundle: &PatchRayBundle,
    n_samples: usize,
) -> Result<RenderedPatch> {
    render_rays_with(grid, dec, bundle, &RenderOptions::midpoint(n_samples))
}

pub fn render_rays_with(
    grid: &TriplaneGrid,
    dec: &FieldDecoderParams,
    bundle: &PatchRayBundle,
    options: &RenderOptions,
) -> Result<RenderedPatch> {
    let field = TriplaneField::new(grid, dec)?;
    let rows = render_triplane_rays(&field, &bundle.rays, options)?;
    Ok(patch_from_rows(&rows, bundle.size, bundle.size))
}

fn render_triplane_rays(field: &TriplaneField<'_>, rays: &[Ray], options: &RenderOptions) -> Result<Vec<[f64; 5]>> {
    options.check(rays.len())?;
    let kernel = field.kernel();
    let mut scratch = RayScratch::default();
    let mut offs = Vec::new();
    let mut out = Vec::with_capacity(rays.len());
    for (r, ray) in rays.iter().enumerate() {
        ray.validate()?;
        options.offsets_for(r).fill(&mut offs);
        let c = shade_ray(&kernel, ray.origin, ray.direction, ray.near, ray.far, &offs, options.background, &mut scratch);
        out.push([c.color[0], c.color[1], c.color[2], c.opacity, c.depth]);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn shade_ray(
    kernel: &FieldKernel<'_>,
    o: [f64; 3],
    d: [f64; 3],
    near: f64,
    far: f64,
    offs: &[f64],
    background: [f64; 3],
    scratch: &mut RayScratch,
) -> kernel::Composite {
    let delta = kernel::sample_distances(near, far, offs, &mut scratch.ts);
    scratch.points.clear();
    scratch.points.extend(
        scratch
            .ts
            .iter()
            .map(|t| [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]),
    );
    kernel.shade(scratch);
    kernel::composite(&scratch.sigma, &scratch.color, &scratch.ts, delta, background, &mut scratch.weights)
}

/// Full-frame render: the `s = 1` bundle at `resolution²` with 96 midpoint samples.
pub fn render_view(
    grid: &TriplaneGrid,
    dec: &FieldDecoderParams,
    pose: &DecomposedPose,
    fov_deg: f64,
    resolution: usize,
) -> Result<RenderedPatch> {
    let bundle = generate_patch_rays(pose, fov_deg, 1.0, [0.0, 0.0], resolution)?;
    render_rays(grid, dec, &bundle, DEFAULT_SAMPLES)
}

/// Unit world direction of a panorama pixel. Yaw 0 looks along +x and
/// increasing yaw turns towards -z; positive pitch looks up.
pub fn panorama_direction(yaw_deg: f64, pitch_deg: f64) -> [f64; 3] {
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    [cp * cy, sp, -cp * sy]
}

/// Camera yaw (radians) whose forward axis matches panorama yaw `yaw_deg`.
pub fn panorama_camera_yaw(yaw_deg: f64) -> f64 {
    (yaw_deg + 90.0).to_radians()
}

/// Yaw and pitch in degrees of panorama pixel (row, col) for height `h` (width `2h`).
pub fn panorama_angles(row: usize, col: usize, h: usize) -> (f64, f64) {
    let yaw = col as f64 * 360.0 / (2 * h) as f64;
    let pitch = 90.0 - (row as f64 + 0.5) * 180.0 / h as f64;
    (yaw, pitch)
}

/// Equirectangular panorama of `2h × h` pixels seen from `position`.
pub fn render_panorama(
    grid: &TriplaneGrid,
    dec: &FieldDecoderParams,
    position: [f64; 3],
    h: usize,
) -> Result<RgbImage> {
    let field = TriplaneField::new(grid, dec)?;
    render_panorama_field(&PanoramaSource::Triplane(field), position, h)
}

/// Panorama of any radiance field.
pub fn render_panorama_of(field: &dyn RadianceField, position: [f64; 3], h: usize) -> Result<RgbImage> {
    render_panorama_field(&PanoramaSource::Generic(field), position, h)
}

enum PanoramaSource<'a> {
    Triplane(TriplaneField<'a>),
    Generic(&'a dyn RadianceField),
}

fn render_panorama_field(src: &PanoramaSource<'_>, position: [f64; 3], h: usize) -> Result<RgbImage> {
    if h == 0 {
        return Err(Error::InvalidInput("panorama height must be positive".into()));
    }
    if position.iter().any(|v| v.abs() > 1.0) {
        log::warn!("panorama position {position:?} lies outside the scene cube");
    }
    let w = 2 * h;
    let mut rays = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let (yaw, pitch) = panorama_angles(row, col, h);
            rays.push(Ray::through_cube(position, panorama_direction(yaw, pitch))?);
        }
    }
    let opts = RenderOptions::default();
    let rows = match src {
        PanoramaSource::Triplane(f) => render_triplane_rays(f, &rays, &opts)?,
        PanoramaSource::Generic(f) => render_field(*f, &rays, &opts)?,
    };
    RgbImage::new(w, h, rows.iter().flat_map(|r| [r[0], r[1], r[2]]).collect())
}

/// How the differentiable renderer bounds each ray.
#[derive(Clone, Debug, PartialEq)]
pub enum RayBounds {
    /// Fixed per-ray `(near, far)`; no gradient reaches the bounds.
    PerRay(Vec<(f64, f64)>),
    /// Clip each ray to the cube inside the graph, then clamp to `[near, far]`.
    CubeClipped { near: f64, far: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchRenderSpec {
    /// Scene (batch entry of the planes tensor) for every ray.
    pub ray_scene: Vec<usize>,
    pub bounds: RayBounds,
    pub options: RenderOptions,
}

/// Output of [`render_batch`]: colours `[R, 3]` in the graph, depth and opacity as plain values.
pub struct BatchRender {
    pub colors: Var,
    pub depth: Vec<f64>,
    pub opacity: Vec<f64>,
}

/// Differentiable rendering of `R` rays through a batch of triplanes
/// `[B, N, N, 3C]`. Gradients reach the planes, the decoder, and the ray
/// origins and directions `[R, 3]`.
pub fn render_batch(
    planes: &Var,
    dec: &FieldDecoderParams,
    origins: &Var,
    dirs: &Var,
    spec: &BatchRenderSpec,
) -> Result<BatchRender> {
    let ps = planes.shape();
    if ps.len() != 4 || ps[1] != ps[2] || ps[3] != 3 * dec.channels() || ps[1] < 2 {
        return Err(Error::Config(format!(
            "planes {ps:?} do not match a decoder with {} channels",
            dec.channels()
        )));
    }
    let r = spec.ray_scene.len();
    if origins.shape() != [r, 3] || dirs.shape() != [r, 3] {
        return Err(Error::InvalidInput(format!(
            "origins {:?} and directions {:?} must both be [{r}, 3]",
            origins.shape(),
            dirs.shape()
        )));
    }
    if let Some(&b) = spec.ray_scene.iter().find(|&&b| b >= ps[0]) {
        return Err(Error::InvalidInput(format!("ray scene {b} out of range for batch {}", ps[0])));
    }
    if let RayBounds::PerRay(b) = &spec.bounds {
        if b.len() != r {
            return Err(Error::InvalidInput("one bound pair per ray required".into()));
        }
        for &(near, far) in b {
            if !(near >= 0.0 && near < far) {
                return Err(Error::InvalidRay { near, far });
            }
        }
    }
    spec.options.check(r)?;
    let op = RenderOp {
        n: ps[1],
        c: dec.channels(),
        config: *dec.config(),
        spec: spec.clone(),
    };
    let dec_values: Vec<&Tensor> = dec.vars().iter().map(|v| v.value()).collect();
    let (colors, depth, opacity) = op.forward(planes.value(), &dec_values, origins.value(), dirs.value());
    let mut inputs = vec![planes.clone()];
    inputs.extend(dec.vars().iter().cloned());
    inputs.push(origins.clone());
    inputs.push(dirs.clone());
    Ok(BatchRender {
        colors: Var::from_op(Tensor::new(&[r, 3], colors), inputs, Box::new(op)),
        depth,
        opacity,
    })
}

struct RenderOp {
    n: usize,
    c: usize,
    config: DecoderConfig,
    spec: BatchRenderSpec,
}

fn row3(t: &Tensor, r: usize) -> [f64; 3] {
    let d = &t.data()[3 * r..3 * r + 3];
    [d[0], d[1], d[2]]
}

impl RenderOp {
    fn kernel<'a>(&self, planes: &'a Tensor, dec: &[&'a Tensor], scene: usize) -> FieldKernel<'a> {
        let stride = self.n * self.n * 3 * self.c;
        FieldKernel {
            planes: PlaneView {
                data: &planes.data()[scene * stride..(scene + 1) * stride],
                n: self.n,
                c: self.c,
            },
            decoder: decoder_view_from(dec, self.config.aggregation.input_dim(self.c), &self.config),
            aggregation: self.config.aggregation,
        }
    }

    fn bounds(&self, r: usize, o: [f64; 3], d: [f64; 3]) -> Bounds {
        match &self.spec.bounds {
            RayBounds::PerRay(b) => Bounds {
                near: b[r].0,
                far: b[r].1,
                near_axis: None,
                far_axis: None,
            },
            RayBounds::CubeClipped { near, far } => cube_bounds(o, d, *near, *far),
        }
    }

    fn forward(
        &self,
        planes: &Tensor,
        dec: &[&Tensor],
        origins: &Tensor,
        dirs: &Tensor,
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let rays = self.spec.ray_scene.len();
        let mut colors = Vec::with_capacity(3 * rays);
        let mut depth = Vec::with_capacity(rays);
        let mut opacity = Vec::with_capacity(rays);
        let mut scratch = RayScratch::default();
        let mut offs = Vec::new();
        for (r, &scene) in self.spec.ray_scene.iter().enumerate() {
            let kernel = self.kernel(planes, dec, scene);
            let (o, d) = (row3(origins, r), row3(dirs, r));
            let b = self.bounds(r, o, d);
            self.spec.options.offsets_for(r).fill(&mut offs);
            let c = shade_ray(&kernel, o, d, b.near, b.far, &offs, self.spec.options.background, &mut scratch);
            colors.extend(c.color);
            depth.push(c.depth);
            opacity.push(c.opacity);
        }
        (colors, depth, opacity)
    }
}

impl Function for RenderOp {
    fn name(&self) -> &'static str {
        "render_rays"
    }

    fn supports_higher_order(&self) -> bool {
        false
    }

    fn backward(&self, grad: &Var, inputs: &[Var], _output: &Var) -> Vec<Option<Var>> {
        let planes = inputs[0].value();
        let dec: Vec<&Tensor> = inputs[1..11].iter().map(|v| v.value()).collect();
        let (origins, dirs) = (inputs[11].value(), inputs[12].value());
        let want_rays = inputs[11].requires_grad() || inputs[12].requires_grad();
        let want_dec = inputs[1..11].iter().any(|v| v.requires_grad());
        let in_dim = self.config.aggregation.input_dim(self.c);
        let mut dec_grads = want_dec.then(|| DecoderGrads::zeros(in_dim, self.config.hidden));
        let mut plane_grads = inputs[0].requires_grad().then(|| vec![0.0; planes.len()]);
        let rays = self.spec.ray_scene.len();
        let mut d_origins = vec![0.0; 3 * rays];
        let mut d_dirs = vec![0.0; 3 * rays];
        let stride = self.n * self.n * 3 * self.c;
        let s = self.spec.options.n_samples;
        let background = self.spec.options.background;

        let g = grad.value();
        let mut scratch = RayScratch::default();
        let mut offs = Vec::new();
        for (r, &scene) in self.spec.ray_scene.iter().enumerate() {
            let gc = row3(g, r);
            if gc == [0.0; 3] {
                continue;
            }
            let kernel = self.kernel(planes, &dec, scene);
            let (o, d) = (row3(origins, r), row3(dirs, r));
            let b = self.bounds(r, o, d);
            self.spec.options.offsets_for(r).fill(&mut offs);
            let delta = kernel::sample_distances(b.near, b.far, &offs, &mut scratch.ts);
            scratch.points.clear();
            scratch.points.extend(
                scratch
                    .ts
                    .iter()
                    .map(|t| [o[0] + t * d[0], o[1] + t * d[1], o[2] + t * d[2]]),
            );
            kernel.shade(&mut scratch);
            scratch.d_sigma.resize(s, 0.0);
            scratch.d_color.resize(s, [0.0; 3]);
            let d_delta = kernel::composite_backward(
                &scratch.sigma,
                &scratch.color,
                delta,
                background,
                gc,
                &mut scratch.d_sigma,
                &mut scratch.d_color,
            );
            let mut fg = FieldGrads {
                decoder: dec_grads.as_mut(),
                planes: plane_grads
                    .as_deref_mut()
                    .map(|p| &mut p[scene * stride..(scene + 1) * stride]),
                want_points: want_rays,
            };
            let d_points = kernel.shade_backward(&mut scratch, &mut fg);
            if !want_rays {
                continue;
            }
            let (mut d_near, mut d_far) = (-d_delta / s as f64, d_delta / s as f64);
            let (mut go, mut gd) = ([0.0; 3], [0.0; 3]);
            for (k, dp) in d_points.iter().enumerate() {
                let t = scratch.ts[k];
                let dt = dp[0] * d[0] + dp[1] * d[1] + dp[2] * d[2];
                let frac = (k as f64 + offs[k]) / s as f64;
                d_near += dt * (1.0 - frac);
                d_far += dt * frac;
                for i in 0..3 {
                    go[i] += dp[i];
                    gd[i] += t * dp[i];
                }
            }
            // t = (±1 - o_i) / d_i on the slab that fixed the bound
            for (axis, dt, t) in [(b.near_axis, d_near, b.near), (b.far_axis, d_far, b.far)] {
                if let Some(i) = axis {
                    go[i] -= dt / d[i];
                    gd[i] -= dt * t / d[i];
                }
            }
            d_origins[3 * r..3 * r + 3].copy_from_slice(&go);
            d_dirs[3 * r..3 * r + 3].copy_from_slice(&gd);
        }

        let mut out: Vec<Option<Var>> = Vec::with_capacity(13);
        out.push(plane_grads.map(|p| Var::constant(Tensor::new(planes.shape(), p))));
        match dec_grads {
            Some(dg) => out.extend(
                dg.into_vec()
                    .into_iter()
                    .zip(&dec)
                    .map(|(g, t)| Some(Var::constant(Tensor::new(t.shape(), g)))),
            ),
            None => out.extend(std::iter::repeat_n(None, 10)),
        }
        out.push(inputs[11].requires_grad().then(|| Var::constant(Tensor::new(&[rays, 3], d_origins))));
        out.push(inputs[12].requires_grad().then(|| Var::constant(Tensor::new(&[rays, 3], d_dirs))));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_axis_ray_of_odd_patch_points_forward() {
        let b = generate_patch_rays(&DecomposedPose::identity(), 60.0, 1.0, [0.0, 0.0], 5).unwrap();
        assert_eq!(b.rays[12].direction, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn windows_outside_the_plane_are_rejected() {
        let pose = DecomposedPose::identity();
        assert!(matches!(
            generate_patch_rays(&pose, 60.0, 0.5, [0.6, 0.0], 4),
            Err(Error::InvalidWindow { .. })
        ));
        assert!(generate_patch_rays(&pose, 60.0, 0.5, [0.5, -0.5], 4).is_ok());
    }

    #[test]
    fn cube_bounds_clip_to_the_exit_face() {
        let b = cube_bounds([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], DEFAULT_NEAR, DEFAULT_FAR);
        assert_eq!((b.near, b.far), (DEFAULT_NEAR, 1.0));
        assert_eq!(b.far_axis, Some(0));
        let outside = cube_bounds([-3.0, 0.0, 0.0], [1.0, 0.0, 0.0], DEFAULT_NEAR, DEFAULT_FAR);
        assert_eq!((outside.near, outside.far), (2.0, 2.0 * 1.732_050_807_568_877_2));
    }

    #[test]
    fn panorama_yaw_matches_camera_yaw() {
        for yaw in [0.0, 37.0, 90.0, 200.0] {
            let cam = DecomposedPose::yawed(panorama_camera_yaw(yaw), [0.0; 3]);
            let fwd = cam.to_world([0.0, 0.0, 1.0]);
            let pano = panorama_direction(yaw, 0.0);
            for k in 0..3 {
                assert!((fwd[k] - pano[k]).abs() < 1e-12);
            }
        }
        assert_eq!(panorama_direction(0.0, 0.0), [1.0, 0.0, -0.0]);
    }

    #[test]
    fn degenerate_ray_bounds_are_rejected() {
        let ray = Ray {
            origin: [0.0; 3],
            direction: [0.0, 0.0, 1.0],
            near: 1.0,
            far: 1.0,
        };
        assert!(matches!(ray.validate(), Err(Error::InvalidRay { .. })));
    }
}
