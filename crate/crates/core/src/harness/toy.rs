//! Procedural toy room with an analytic radiance field, plus an exact bake
//! of that field into a triplane and decoder.

use crate::camera::{init_pose_set, DecomposedPose, RigConfig};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::render::{generate_patch_rays, render_field_bundle, RenderOptions, DEFAULT_SAMPLES};
use crate::triplane::{
    opacity_of, DecoderConfig, FieldDecoderParams, RadianceField, TriplaneGrid,
};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tripatch_autograd::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub color: [f64; 3],
}

impl ToyBox {
    /// Box resting on `floor_y` with the given footprint centre and half sizes.
    pub fn on_floor(floor_y: f64, center_xz: [f64; 2], half: [f64; 3], color: [f64; 3]) -> Self {
        ToyBox {
            min: [center_xz[0] - half[0], floor_y, center_xz[1] - half[2]],
            max: [center_xz[0] + half[0], floor_y + 2.0 * half[1], center_xz[1] + half[2]],
            color,
        }
    }

    pub fn contains(&self, x: [f64; 3]) -> bool {
        (0..3).all(|i| x[i] >= self.min[i] && x[i] <= self.max[i])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySceneSpec {
    /// Half extents of the empty room interior; walls fill the rest of the cube.
    pub room_half: [f64; 3],
    pub floor_color: [f64; 3],
    pub ceiling_color: [f64; 3],
    /// Colours of the walls at +x, -x, +z, -z.
    pub wall_colors: [[f64; 3]; 4],
    pub boxes: Vec<ToyBox>,
    pub density: f64,
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        let floor = -0.5;
        ToySceneSpec {
            room_half: [0.9, 0.5, 0.9],
            floor_color: [0.55, 0.42, 0.3],
            ceiling_color: [0.9, 0.88, 0.82],
            wall_colors: [
                [0.75, 0.35, 0.3],
                [0.3, 0.5, 0.75],
                [0.4, 0.68, 0.42],
                [0.82, 0.76, 0.45],
            ],
            boxes: vec![
                ToyBox::on_floor(floor, [0.4, 0.35], [0.2, 0.2, 0.15], [0.85, 0.2, 0.2]),
                ToyBox::on_floor(floor, [-0.45, -0.3], [0.15, 0.15, 0.25], [0.2, 0.3, 0.85]),
                ToyBox::on_floor(floor, [0.3, -0.5], [0.12, 0.1, 0.12], [0.92, 0.8, 0.15]),
            ],
            density: 100.0,
        }
    }
}

impl ToySceneSpec {
    /// Every solid as a box: floor, ceiling, four walls, then the boxes.
    pub fn solids(&self) -> Vec<ToyBox> {
        let [hx, hy, hz] = self.room_half;
        let b = |min, max, color| ToyBox { min, max, color };
        let mut out = vec![
            b([-1.0, -1.0, -1.0], [1.0, -hy, 1.0], self.floor_color),
            b([-1.0, hy, -1.0], [1.0, 1.0, 1.0], self.ceiling_color),
            b([hx, -hy, -1.0], [1.0, hy, 1.0], self.wall_colors[0]),
            b([-1.0, -hy, -1.0], [-hx, hy, 1.0], self.wall_colors[1]),
            b([-hx, -hy, hz], [hx, hy, 1.0], self.wall_colors[2]),
            b([-hx, -hy, -1.0], [hx, hy, -hz], self.wall_colors[3]),
        ];
        out.extend(self.boxes.iter().copied());
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.density > 0.0 && self.density.is_finite()) {
            return Err(Error::InvalidInput("toy density must be positive".into()));
        }
        if self.room_half.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
            return Err(Error::InvalidInput("room half extents must lie in (0, 1)".into()));
        }
        for (k, b) in self.boxes.iter().enumerate() {
            for i in 0..3 {
                if !(b.min[i] < b.max[i]) || b.min[i] < -self.room_half[i] - 1e-12 || b.max[i] > self.room_half[i] + 1e-12 {
                    return Err(Error::InvalidInput(format!("box {k} is empty or leaves the room")));
                }
            }
        }
        let colors = self.solids().into_iter().flat_map(|s| s.color);
        if colors.clone().any(|c| !(c > 0.0 && c < 1.0)) {
            return Err(Error::InvalidInput("toy colours must lie strictly inside (0, 1)".into()));
        }
        Ok(())
    }
}

/// Colour and density of the analytic toy field at `x`.
pub fn toy_field(spec: &ToySceneSpec, x: [f64; 3]) -> ([f64; 3], f64) {
    if x.iter().any(|v| v.abs() > 1.0) {
        return ([0.0; 3], 0.0);
    }
    let [hx, hy, hz] = spec.room_half;
    let interior = x[0].abs() < hx && x[1].abs() < hy && x[2].abs() < hz;
    if interior {
        if let Some(b) = spec.boxes.iter().find(|b| b.contains(x)) {
            return (b.color, spec.density);
        }
        return ([0.0; 3], 0.0);
    }
    let solid = if x[1] <= -hy {
        spec.floor_color
    } else if x[1] >= hy {
        spec.ceiling_color
    } else if x[0] >= hx {
        spec.wall_colors[0]
    } else if x[0] <= -hx {
        spec.wall_colors[1]
    } else if x[2] >= hz {
        spec.wall_colors[2]
    } else {
        spec.wall_colors[3]
    };
    (solid, spec.density)
}

/// The toy field as a [`RadianceField`].
#[derive(Clone, Debug)]
pub struct ToyField<'a>(pub &'a ToySceneSpec);

impl RadianceField for ToyField<'_> {
    fn shade(&self, points: &[[f64; 3]], density: &mut Vec<f64>, color: &mut Vec<[f64; 3]>) {
        density.clear();
        color.clear();
        for p in points {
            let (c, s) = toy_field(self.0, *p);
            density.push(s);
            color.push(c);
        }
    }
}

/// Rendered dataset with the cameras it was rendered from.
#[derive(Clone, Debug)]
pub struct ToyDataset {
    pub images: Vec<RgbImage>,
    pub poses: Vec<DecomposedPose>,
    pub fov_deg: f64,
}

/// Camera protocol for toy data: Gaussian ground-plane positions at a shared
/// height, uniform yaw, rejecting cameras inside matter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCameraConfig {
    pub sigma_xy: f64,
    pub height: f64,
    pub max_attempts: usize,
}

impl Default for ToyCameraConfig {
    fn default() -> Self {
        ToyCameraConfig {
            sigma_xy: 0.3,
            height: 0.0,
            max_attempts: 1000,
        }
    }
}

/// Draw one camera with zero occupancy at its centre.
pub fn sample_toy_camera(spec: &ToySceneSpec, cams: &ToyCameraConfig, rng: &mut impl Rng) -> Result<DecomposedPose> {
    let field = ToyField(spec);
    let probe = RigConfig::default().probe_step;
    for _ in 0..cams.max_attempts {
        let pose = init_pose_set(cams.sigma_xy, cams.height, 1, rng)?.poses[0];
        if opacity_of(field.sample(pose.p).density, probe) == 0.0 {
            return Ok(pose);
        }
    }
    Err(Error::SamplingExhausted(cams.max_attempts))
}

/// Render `n_views` images of `resolution²` pixels from the analytic field
/// with 96 midpoint samples per ray.
pub fn render_toy_dataset(
    spec: &ToySceneSpec,
    n_views: usize,
    resolution: usize,
    fov_deg: f64,
    cams: &ToyCameraConfig,
    rng: &mut impl Rng,
) -> Result<ToyDataset> {
    spec.validate()?;
    let field = ToyField(spec);
    let mut images = Vec::with_capacity(n_views);
    let mut poses = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let pose = sample_toy_camera(spec, cams, rng)?;
        images.push(render_toy_view(&field, &pose, fov_deg, resolution)?);
        poses.push(pose);
    }
    Ok(ToyDataset {
        images,
        poses,
        fov_deg,
    })
}

pub fn render_toy_view(field: &ToyField<'_>, pose: &DecomposedPose, fov_deg: f64, resolution: usize) -> Result<RgbImage> {
    let bundle = generate_patch_rays(pose, fov_deg, 1.0, [0.0, 0.0], resolution)?;
    Ok(render_field_bundle(field, &bundle, &RenderOptions::midpoint(DEFAULT_SAMPLES))?.colors)
}

/// Steepness of the inside/outside steps of the baked decoder.
const BAKE_GAIN: f64 = 1e8;
/// Density logit far from every solid.
const BAKE_EMPTY_LOGIT: f64 = -30.0;

/// Axis profile sampled on the grid: 0.75 exactly at a face, rising to 1
/// one texel inside and falling to 0 three texels outside. Faces at the cube
/// boundary are open.
fn profile(x: f64, lo: f64, hi: f64, texel: f64) -> f64 {
    let mut d = f64::INFINITY;
    if lo > -1.0 {
        d = d.min(x - lo);
    }
    if hi < 1.0 {
        d = d.min(hi - x);
    }
    if d.is_infinite() {
        return 1.0;
    }
    (0.75 + 0.25 * d / texel).clamp(0.0, 1.0)
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn softplus_inv(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

/// Encode the toy field exactly in a triplane and decoder.
///
/// Each solid gets three channels holding its x, y and z profiles (x and y
/// in the xy plane, z in the xz plane). Bilinear lookup reproduces each
/// profile exactly in the texel containing a face, so thresholding at 0.75
/// recovers the faces. The decoder's first layer thresholds each profile,
/// the second ANDs the three axes of a solid, and the heads emit that
/// solid's density and colour.
pub fn bake_toy_scene(spec: &ToySceneSpec, resolution: usize) -> Result<(TriplaneGrid, FieldDecoderParams)> {
    spec.validate()?;
    let solids = spec.solids();
    let k = solids.len();
    let hidden = DecoderConfig::default().hidden;
    if 6 * k > hidden {
        return Err(Error::Config(format!(
            "{k} solids need {} hidden units, decoder has {hidden}",
            6 * k
        )));
    }
    if resolution < 4 {
        return Err(Error::Config("bake resolution must be at least 4".into()));
    }
    let texel = 2.0 / (resolution - 1) as f64;
    for s in &solids {
        for i in 0..3 {
            let open_lo = s.min[i] <= -1.0;
            let open_hi = s.max[i] >= 1.0;
            if !open_lo && !open_hi && s.max[i] - s.min[i] < 2.0 * texel {
                return Err(Error::Config(format!(
                    "solid faces {} apart are closer than two texels ({texel})",
                    s.max[i] - s.min[i]
                )));
            }
        }
    }

    let n = resolution;
    let c = 3 * k;
    let node = |i: usize| -1.0 + i as f64 * texel;
    let mut feats = Tensor::zeros(&[n, n, 3 * c]);
    {
        let data = feats.data_mut();
        for row in 0..n {
            for col in 0..n {
                let base = (row * n + col) * 3 * c;
                for (j, s) in solids.iter().enumerate() {
                    // xy plane: column is x, row is y
                    data[base + 3 * j] = profile(node(col), s.min[0], s.max[0], texel);
                    data[base + 3 * j + 1] = profile(node(row), s.min[1], s.max[1], texel);
                    // xz plane: row is z
                    data[base + c + 3 * j + 2] = profile(node(row), s.min[2], s.max[2], texel);
                }
            }
        }
    }
    let grid = TriplaneGrid::new(feats)?;

    let h = hidden;
    let mut w1 = Tensor::zeros(&[c, h]);
    let mut b1 = Tensor::zeros(&[h]);
    let mut w2 = Tensor::zeros(&[h, h]);
    let mut b2 = Tensor::zeros(&[h]);
    let mut wd = Tensor::zeros(&[h, 1]);
    let mut bd = Tensor::zeros(&[1]);
    let mut wc1 = Tensor::zeros(&[h, h]);
    let bc1 = Tensor::zeros(&[h]);
    let mut wc2 = Tensor::zeros(&[h, 3]);
    let bc2 = Tensor::zeros(&[3]);
    let slope = DecoderConfig::default().negative_slope;
    bd.data_mut()[0] = BAKE_EMPTY_LOGIT;
    let inside_logit = softplus_inv(spec.density);
    for (j, s) in solids.iter().enumerate() {
        for axis in 0..3 {
            // z = a (g - 0.75); clamp01(z) = (leaky(z) - leaky(z - 1) - slope) / (1 - slope)
            let (u, v) = (6 * j + 2 * axis, 6 * j + 2 * axis + 1);
            w1.data_mut()[(3 * j + axis) * h + u] = BAKE_GAIN;
            w1.data_mut()[(3 * j + axis) * h + v] = BAKE_GAIN;
            b1.data_mut()[u] = -0.75 * BAKE_GAIN;
            b1.data_mut()[v] = -0.75 * BAKE_GAIN - 1.0;
            // q = Σ clamp01 - 2 feeds relu(q) = (leaky(q) + slope leaky(-q)) / (1 - slope²)
            let inv = 1.0 / (1.0 - slope);
            let (p, m) = (2 * j, 2 * j + 1);
            for (unit, sign) in [(u, 1.0), (v, -1.0)] {
                w2.data_mut()[unit * h + p] += sign * inv;
                w2.data_mut()[unit * h + m] -= sign * inv;
            }
            b2.data_mut()[p] -= slope * inv;
            b2.data_mut()[m] += slope * inv;
        }
        b2.data_mut()[2 * j] -= 2.0;
        b2.data_mut()[2 * j + 1] += 2.0;
        let relu_a = 1.0 / (1.0 - slope * slope);
        let relu_b = slope / (1.0 - slope * slope);
        // density: inside solid j the logit is softplus⁻¹(ρ), elsewhere the empty logit
        let gain = inside_logit - BAKE_EMPTY_LOGIT;
        wd.data_mut()[2 * j] = gain * relu_a;
        wd.data_mut()[2 * j + 1] = gain * relu_b;
        // colour: a non-negative indicator passes the leaky unit unchanged
        wc1.data_mut()[2 * j * h + j] = relu_a;
        wc1.data_mut()[(2 * j + 1) * h + j] = relu_b;
        for ch in 0..3 {
            wc2.data_mut()[j * 3 + ch] = logit(s.color[ch]);
        }
    }
    let dec = FieldDecoderParams::from_tensors(
        c,
        DecoderConfig::default(),
        vec![w1, b1, w2, b2, wd, bd, wc1, bc1, wc2, bc2],
    )?;
    Ok((grid, dec))
}
