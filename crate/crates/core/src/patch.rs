//! Patch scales, windows, real-patch cropping and perspective augmentation.
//!
//! Image-plane coordinates follow the ray generator: pixel `(row, col)` of a
//! `W × H` image has its centre at `((2col+1)/W - 1, 1 - (2row+1)/H)`.

use crate::camera::{apply3, rot_y};
use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::render::check_window;
use rand::Rng;
use serde::{Deserialize, Serialize};

fn lerp(a: f64, b: f64, u: f64) -> f64 {
    a * (1.0 - u) + b * u
}

/// Fraction of the ramp completed at epoch `t`.
fn ramp(t: f64, epochs: f64) -> f64 {
    if epochs <= 0.0 {
        1.0
    } else {
        (t / epochs).clamp(0.0, 1.0)
    }
}

/// Linearly shrinking range of patch scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSchedule {
    pub s_min_start: f64,
    pub s_max_start: f64,
    pub s_min_end: f64,
    pub s_max_end: f64,
    pub ramp_epochs: f64,
}

impl Default for ScaleSchedule {
    fn default() -> Self {
        ScaleSchedule {
            s_min_start: 0.6,
            s_max_start: 0.8,
            s_min_end: 0.25,
            s_max_end: 0.55,
            ramp_epochs: 100.0,
        }
    }
}

impl ScaleSchedule {
    /// Every patch at the single scale `s` (`s = 1` is full-image discrimination).
    pub fn fixed(s: f64) -> Self {
        ScaleSchedule {
            s_min_start: s,
            s_max_start: s,
            s_min_end: s,
            s_max_end: s,
            ramp_epochs: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo > 0.0 && lo <= hi && hi <= 1.0;
        if !ok(self.s_min_start, self.s_max_start) || !ok(self.s_min_end, self.s_max_end) {
            return Err(Error::Config(format!("invalid scale schedule {self:?}")));
        }
        if self.s_min_end > self.s_min_start || self.s_max_end > self.s_max_start {
            return Err(Error::Config("scale bounds must not grow over time".into()));
        }
        if !(self.ramp_epochs >= 0.0) {
            return Err(Error::Config("ramp_epochs must be >= 0".into()));
        }
        Ok(())
    }

    /// `(s_min, s_max)` at epoch `t`, constant after the ramp.
    pub fn bounds(&self, t: f64) -> (f64, f64) {
        let u = ramp(t, self.ramp_epochs);
        (
            lerp(self.s_min_start, self.s_min_end, u),
            lerp(self.s_max_start, self.s_max_end, u),
        )
    }

    /// Midpoint of the current range, used to gate pose optimization.
    pub fn expected_scale(&self, t: f64) -> f64 {
        let (lo, hi) = self.bounds(t);
        0.5 * (lo + hi)
    }

    pub fn sample(&self, t: f64, rng: &mut impl Rng) -> f64 {
        let (lo, hi) = self.bounds(t);
        if lo == hi {
            lo
        } else {
            rng.gen_range(lo..=hi)
        }
    }
}

/// Scale range of the default schedule at epoch `t`.
pub fn scale_bounds(t: f64) -> (f64, f64) {
    ScaleSchedule::default().bounds(t)
}

/// One scale drawn uniformly from the schedule's range at epoch `t`.
pub fn sample_scale(schedule: &ScaleSchedule, t: f64, rng: &mut impl Rng) -> f64 {
    schedule.sample(t, rng)
}

/// Linearly growing bound on the perspective-augmentation angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugSchedule {
    pub max_angle_deg: f64,
    pub ramp_epochs: f64,
}

impl Default for AugSchedule {
    fn default() -> Self {
        AugSchedule {
            max_angle_deg: 15.0,
            ramp_epochs: 100.0,
        }
    }
}

impl AugSchedule {
    pub fn disabled() -> Self {
        AugSchedule {
            max_angle_deg: 0.0,
            ramp_epochs: 0.0,
        }
    }

    pub fn bound(&self, t: f64) -> f64 {
        lerp(0.0, self.max_angle_deg, ramp(t, self.ramp_epochs))
    }

    /// Angle drawn uniformly from `[-bound, bound]`.
    pub fn sample(&self, t: f64, rng: &mut impl Rng) -> f64 {
        let b = self.bound(t);
        if b == 0.0 {
            0.0
        } else {
            rng.gen_range(-b..=b)
        }
    }
}

/// Augmentation bound (degrees) of the default schedule at epoch `t`.
pub fn aug_angle_bound(t: f64) -> f64 {
    AugSchedule::default().bound(t)
}

/// Window centre uniform over `[-(1-s), 1-s]²`.
pub fn sample_window(s: f64, rng: &mut impl Rng) -> Result<[f64; 2]> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(Error::InvalidWindow {
            scale: s,
            center: [0.0, 0.0],
        });
    }
    let r = 1.0 - s;
    if r == 0.0 {
        return Ok([0.0, 0.0]);
    }
    Ok([rng.gen_range(-r..=r), rng.gen_range(-r..=r)])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PatchSource {
    Real(usize),
    Generated(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchSpec {
    pub scale: f64,
    pub center: [f64; 2],
    pub source: PatchSource,
}

impl PatchSpec {
    pub fn new(scale: f64, center: [f64; 2], source: PatchSource) -> Result<Self> {
        check_window(scale, center)?;
        Ok(PatchSpec {
            scale,
            center,
            source,
        })
    }
}

/// Continuous pixel coordinates (col, row) of image-plane point `u` in a `w × h` image.
fn to_pixel(u: [f64; 2], w: usize, h: usize) -> (f64, f64) {
    ((u[0] + 1.0) * 0.5 * w as f64 - 0.5, (1.0 - u[1]) * 0.5 * h as f64 - 0.5)
}

/// Bilinear lookup at continuous pixel coordinates, clamped to the border.
pub fn bilinear_pixel(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width(), img.height());
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let (a, b, c, d) = (img.get(x0, y0), img.get(x1, y0), img.get(x0, y1), img.get(x1, y1));
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[k] = (1.0 - fy) * ((1.0 - fx) * a[k] + fx * b[k]) + fy * ((1.0 - fx) * c[k] + fx * d[k]);
    }
    out
}

/// Resample the window of scale `s` centred at `u0` to `h × h` pixels.
pub fn crop_real_patch(image: &RgbImage, s: f64, u0: [f64; 2], h: usize) -> Result<RgbImage> {
    check_window(s, u0)?;
    if h == 0 || image.width() == 0 || image.height() == 0 {
        return Err(Error::InvalidInput("empty image or patch".into()));
    }
    let (w_img, h_img) = (image.width(), image.height());
    let g = |i: usize| (2 * i + 1) as f64 / h as f64 - 1.0;
    Ok(RgbImage::from_fn(h, h, |j, i| {
        let u = [u0[0] + s * g(j), u0[1] - s * g(i)];
        let (x, y) = to_pixel(u, w_img, h_img);
        bilinear_pixel(image, x, y)
    }))
}

/// Bilinear resize of a whole image to `size × size`.
pub fn resize(image: &RgbImage, size: usize) -> Result<RgbImage> {
    crop_real_patch(image, 1.0, [0.0, 0.0], size)
}

/// Result of a perspective warp: the image and which pixels had valid sources.
#[derive(Clone, Debug, PartialEq)]
pub struct Warped {
    pub image: RgbImage,
    pub mask: Vec<bool>,
}

/// Re-project as if the camera turned by `phi_deg` about its vertical axis.
/// `bound_deg` is the schedule's current limit on `|phi|`.
pub fn perspective_augment(image: &RgbImage, fov_deg: f64, phi_deg: f64, bound_deg: f64) -> Result<Warped> {
    if phi_deg.abs() > bound_deg + 1e-12 {
        return Err(Error::ContractViolation(format!(
            "augmentation angle {phi_deg}° exceeds the current bound {bound_deg}°"
        )));
    }
    warp_yaw(image, None, fov_deg, phi_deg)
}

/// Pure-rotation homography `K R(φ) K⁻¹` applied to `image`. With `valid`,
/// an output pixel is valid only if all its source taps were valid.
pub fn warp_yaw(image: &RgbImage, valid: Option<&[bool]>, fov_deg: f64, phi_deg: f64) -> Result<Warped> {
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::InvalidInput(format!("field of view {fov_deg} must lie in (0, 180)")));
    }
    let (w, h) = (image.width(), image.height());
    if w < 2 || h < 2 {
        return Err(Error::InvalidInput("image too small to warp".into()));
    }
    if phi_deg == 0.0 && valid.is_none() {
        return Ok(Warped {
            image: image.clone(),
            mask: vec![true; w * h],
        });
    }
    let t = (fov_deg.to_radians() * 0.5).tan();
    let rot = rot_y([phi_deg.to_radians().cos(), phi_deg.to_radians().sin()]);
    let mut mask = vec![false; w * h];
    let mut out = RgbImage::filled(w, h, [0.0; 3]);
    for row in 0..h {
        let uy = 1.0 - (2 * row + 1) as f64 / h as f64;
        for col in 0..w {
            let ux = (2 * col + 1) as f64 / w as f64 - 1.0;
            let d = apply3(&rot, [ux * t, uy * t, 1.0]);
            if d[2] <= 0.0 {
                continue;
            }
            let src = [d[0] / (d[2] * t), d[1] / (d[2] * t)];
            let (x, y) = to_pixel(src, w, h);
            let eps = 1e-9;
            if x < -eps || y < -eps || x > (w - 1) as f64 + eps || y > (h - 1) as f64 + eps {
                continue;
            }
            if let Some(v) = valid {
                let (x0, y0) = (x.floor().max(0.0) as usize, y.floor().max(0.0) as usize);
                let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
                if !(v[y0 * w + x0] && v[y0 * w + x1] && v[y1 * w + x0] && v[y1 * w + x1]) {
                    continue;
                }
            }
            mask[row * w + col] = true;
            out.set(col, row, bilinear_pixel(image, x, y));
        }
    }
    Ok(Warped { image: out, mask })
}

/// Summed-area table over invalid pixels, for fast window checks.
pub struct ValidRegion {
    width: usize,
    height: usize,
    invalid_sat: Vec<u32>,
}

impl ValidRegion {
    pub fn new(mask: &[bool], width: usize, height: usize) -> Self {
        let mut sat = vec![0u32; (width + 1) * (height + 1)];
        for y in 0..height {
            let mut row = 0u32;
            for x in 0..width {
                row += u32::from(!mask[y * width + x]);
                sat[(y + 1) * (width + 1) + x + 1] = sat[y * (width + 1) + x + 1] + row;
            }
        }
        ValidRegion {
            width,
            height,
            invalid_sat: sat,
        }
    }

    /// Whether every pixel a bilinear crop of window (s, u0) reads is valid.
    pub fn window_is_valid(&self, s: f64, u0: [f64; 2]) -> bool {
        let (x_lo, y_lo) = to_pixel([u0[0] - s, u0[1] + s], self.width, self.height);
        let (x_hi, y_hi) = to_pixel([u0[0] + s, u0[1] - s], self.width, self.height);
        let clampi = |v: f64, n: usize| (v.max(0.0) as usize).min(n - 1);
        let (x0, x1) = (clampi(x_lo.floor(), self.width), clampi(x_hi.ceil(), self.width));
        let (y0, y1) = (clampi(y_lo.floor(), self.height), clampi(y_hi.ceil(), self.height));
        let w1 = self.width + 1;
        let s = &self.invalid_sat;
        let count = s[(y1 + 1) * w1 + x1 + 1] + s[y0 * w1 + x0] - s[y0 * w1 + x1 + 1] - s[(y1 + 1) * w1 + x0];
        count == 0
    }
}

/// Window centre drawn uniformly among windows that only read valid pixels.
pub fn sample_valid_window(region: &ValidRegion, s: f64, rng: &mut impl Rng, max_attempts: usize) -> Result<[f64; 2]> {
    for _ in 0..max_attempts {
        let u0 = sample_window(s, rng)?;
        if region.window_is_valid(s, u0) {
            return Ok(u0);
        }
    }
    Err(Error::SamplingExhausted(max_attempts))
}

/// Optional 2D augmentations applied to real patches; all off by default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Augment2d {
    /// Shift by up to 1/8 of the patch, replicating the border.
    pub translation: bool,
    /// Zero a random square of 1/4 the patch side.
    pub cutout: bool,
}

impl Augment2d {
    pub fn apply(&self, patch: &RgbImage, rng: &mut impl Rng) -> RgbImage {
        let (w, h) = (patch.width(), patch.height());
        let mut out = patch.clone();
        if self.translation {
            let m = (w / 8) as i64;
            let (dx, dy) = (rng.gen_range(-m..=m), rng.gen_range(-m..=m));
            out = RgbImage::from_fn(w, h, |x, y| {
                let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
                let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
                patch.get(sx, sy)
            });
        }
        if self.cutout {
            let side = (w / 4).max(1);
            let (x0, y0) = (rng.gen_range(0..=w - side), rng.gen_range(0..=h - side));
            for y in y0..y0 + side {
                for x in x0..x0 + side {
                    out.set(x, y, [0.0; 3]);
                }
            }
        }
        out
    }
}
