//! Camera poses stored as three (cos, sin) rotation pairs plus a translation,
//! and the optimizable set of poses cameras are drawn from.
//!
//! Camera frame: x right, y up, z forward. World y is the vertical axis, so
//! the yaw pair is the `ry` rotation.

use crate::error::{Error, Result};
use crate::triplane::{opacity_of, RadianceField, DEFAULT_PROBE_STEP};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use tripatch_autograd::{Tensor, Var};

const UNIT_TOL: f64 = 1e-9;

pub type Mat3 = [[f64; 3]; 3];
pub type Mat4 = [[f64; 4]; 4];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecomposedPose {
    /// (cos θz, sin θz)
    pub rz: [f64; 2],
    /// (cos θy, sin θy), the yaw about the vertical axis
    pub ry: [f64; 2],
    /// (cos θx, sin θx)
    pub rx: [f64; 2],
    pub p: [f64; 3],
}

impl DecomposedPose {
    pub fn identity() -> Self {
        DecomposedPose {
            rz: [1.0, 0.0],
            ry: [1.0, 0.0],
            rx: [1.0, 0.0],
            p: [0.0; 3],
        }
    }

    /// From angles in radians.
    pub fn from_angles(theta_z: f64, theta_y: f64, theta_x: f64, p: [f64; 3]) -> Self {
        DecomposedPose {
            rz: [theta_z.cos(), theta_z.sin()],
            ry: [theta_y.cos(), theta_y.sin()],
            rx: [theta_x.cos(), theta_x.sin()],
            p,
        }
    }

    /// A camera at `p` looking horizontally with yaw `theta_y` (radians).
    pub fn yawed(theta_y: f64, p: [f64; 3]) -> Self {
        Self::from_angles(0.0, theta_y, 0.0, p)
    }

    pub fn normalized(&self) -> Result<Self> {
        Ok(DecomposedPose {
            rz: normalize_rotation(self.rz)?,
            ry: normalize_rotation(self.ry)?,
            rx: normalize_rotation(self.rx)?,
            p: self.p,
        })
    }

    pub fn is_normalized(&self) -> bool {
        [self.rz, self.ry, self.rx]
            .iter()
            .all(|r| ((r[0] * r[0] + r[1] * r[1]).sqrt() - 1.0).abs() <= UNIT_TOL)
    }

    /// Yaw angle in radians.
    pub fn yaw(&self) -> f64 {
        self.ry[1].atan2(self.ry[0])
    }

    /// The rotation block `Rz · Ry · Rx`, computed without validation.
    pub fn rotation(&self) -> Mat3 {
        matmul3(&matmul3(&rot_z(self.rz), &rot_y(self.ry)), &rot_x(self.rx))
    }

    /// Rotate a camera-frame vector into the world frame.
    pub fn to_world(&self, v: [f64; 3]) -> [f64; 3] {
        apply3(&self.rotation(), v)
    }
}

pub fn rot_z(r: [f64; 2]) -> Mat3 {
    let [c, s] = r;
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}

pub fn rot_y(r: [f64; 2]) -> Mat3 {
    let [c, s] = r;
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}

pub fn rot_x(r: [f64; 2]) -> Mat3 {
    let [c, s] = r;
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn apply3(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Scale a (cos, sin) pair to unit length.
pub fn normalize_rotation(pair: [f64; 2]) -> Result<[f64; 2]> {
    let n = pair[0].hypot(pair[1]);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateRotation);
    }
    Ok([pair[0] / n, pair[1] / n])
}

/// The 4×4 rigid transform `[R p; 0 1]` with `R = Rz · Ry · Rx`.
pub fn pose_to_matrix(pose: &DecomposedPose) -> Result<Mat4> {
    if !pose.is_normalized() {
        return Err(Error::ContractViolation(
            "pose_to_matrix requires unit rotation pairs".into(),
        ));
    }
    let r = pose.rotation();
    let mut t = [[0.0; 4]; 4];
    for i in 0..3 {
        t[i][..3].copy_from_slice(&r[i]);
        t[i][3] = pose.p[i];
    }
    t[3][3] = 1.0;
    Ok(t)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RigConfig {
    /// Gaussian jitter on (p_x, p_z), world units.
    pub jitter_translation: f64,
    /// Gaussian jitter on yaw, degrees.
    pub jitter_yaw_deg: f64,
    /// Cameras whose centre opacity exceeds this are rejected.
    pub occupancy_threshold: f64,
    pub probe_step: f64,
}

impl Default for RigConfig {
    fn default() -> Self {
        RigConfig {
            jitter_translation: 0.03,
            jitter_yaw_deg: 2.0,
            occupancy_threshold: 0.5,
            probe_step: DEFAULT_PROBE_STEP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSet {
    pub poses: Vec<DecomposedPose>,
    pub height: f64,
    pub rig: RigConfig,
}

/// Poses on the plane `y = h` with Gaussian (p_x, p_z) and uniform yaw.
pub fn init_pose_set(sigma_xy: f64, h: f64, n: usize, rng: &mut impl Rng) -> Result<PoseSet> {
    if n == 0 {
        return Err(Error::InvalidInput("pose set needs at least one pose".into()));
    }
    if !(sigma_xy >= 0.0) {
        return Err(Error::InvalidInput(format!("sigma_xy must be >= 0, got {sigma_xy}")));
    }
    let normal = Normal::new(0.0, sigma_xy).expect("finite sigma");
    let poses = (0..n)
        .map(|_| {
            let px = normal.sample(rng);
            let pz = normal.sample(rng);
            let yaw = rng.gen_range(0.0..std::f64::consts::TAU);
            DecomposedPose::yawed(yaw, [px, h, pz])
        })
        .collect();
    Ok(PoseSet {
        poses,
        height: h,
        rig: RigConfig::default(),
    })
}

/// Perturbation applied to a stored pose when it is drawn.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CameraJitter {
    pub dx: f64,
    pub dz: f64,
    /// radians
    pub dyaw: f64,
}

impl CameraJitter {
    pub fn apply(&self, pose: &DecomposedPose) -> DecomposedPose {
        let (sn, cs) = self.dyaw.sin_cos();
        let [c, s] = pose.ry;
        DecomposedPose {
            ry: [c * cs - s * sn, s * cs + c * sn],
            p: [pose.p[0] + self.dx, pose.p[1], pose.p[2] + self.dz],
            ..*pose
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraSample {
    pub index: usize,
    pub jitter: CameraJitter,
    pub pose: DecomposedPose,
}

impl PoseSet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Draw a stored pose, jitter it, and redraw while the camera centre is occupied.
    pub fn sample_camera(
        &self,
        scene: &dyn RadianceField,
        rng: &mut impl Rng,
        max_attempts: usize,
    ) -> Result<CameraSample> {
        sample_camera(self, scene, rng, max_attempts)
    }

    /// Parameters for the trainable pose components. Unselected components
    /// are constants.
    pub fn vars(&self, selection: &PoseSelection) -> PoseVars {
        let n = self.poses.len();
        let px = Tensor::new(&[n], self.poses.iter().map(|p| p.p[0]).collect());
        let pz = Tensor::new(&[n], self.poses.iter().map(|p| p.p[2]).collect());
        let ry = Tensor::new(&[n, 2], self.poses.iter().flat_map(|p| p.ry).collect());
        PoseVars {
            px: Var::leaf(px, selection.contains(PoseComponent::Px)),
            pz: Var::leaf(pz, selection.contains(PoseComponent::Pz)),
            ry: Var::leaf(ry, selection.contains(PoseComponent::Ry)),
        }
    }

    /// Copy updated parameters back and re-normalize every yaw pair.
    pub fn absorb(&mut self, vars: &PoseVars) -> Result<()> {
        let (px, pz, ry) = (vars.px.value().data(), vars.pz.value().data(), vars.ry.value().data());
        for (i, pose) in self.poses.iter_mut().enumerate() {
            pose.p[0] = px[i];
            pose.p[2] = pz[i];
            pose.ry = normalize_rotation([ry[2 * i], ry[2 * i + 1]])?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.poses).expect("poses serialize")
    }
}

pub fn sample_camera(
    set: &PoseSet,
    scene: &dyn RadianceField,
    rng: &mut impl Rng,
    max_attempts: usize,
) -> Result<CameraSample> {
    if set.poses.is_empty() {
        return Err(Error::InvalidInput("empty pose set".into()));
    }
    let rig = &set.rig;
    for _ in 0..max_attempts {
        let index = rng.gen_range(0..set.poses.len());
        let jitter = CameraJitter {
            dx: gaussian(rng, rig.jitter_translation),
            dz: gaussian(rng, rig.jitter_translation),
            dyaw: gaussian(rng, rig.jitter_yaw_deg.to_radians()),
        };
        let pose = jitter.apply(&set.poses[index]);
        let density = scene.sample(pose.p).density;
        if opacity_of(density, rig.probe_step) <= rig.occupancy_threshold {
            return Ok(CameraSample {
                index,
                jitter,
                pose,
            });
        }
    }
    Err(Error::SamplingExhausted(max_attempts))
}

fn gaussian(rng: &mut impl Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    let z: f64 = rng.sample(rand_distr::StandardNormal);
    z * sigma
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoseComponent {
    Px,
    Py,
    Pz,
    Rz,
    Ry,
    Rx,
}

/// Pose components that receive gradients.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PoseSelection {
    pub components: Vec<PoseComponent>,
}

impl PoseSelection {
    pub fn contains(&self, c: PoseComponent) -> bool {
        self.components.contains(&c)
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }
}

/// Translation in the ground plane and yaw are optimized only while the
/// expected patch scale is above 0.5.
pub fn trainable_pose_params(expected_scale: f64) -> PoseSelection {
    if expected_scale > 0.5 {
        PoseSelection {
            components: vec![PoseComponent::Px, PoseComponent::Pz, PoseComponent::Ry],
        }
    } else {
        PoseSelection::default()
    }
}

/// Differentiable views of the pose set: `px`, `pz` of shape `[n]` and `ry` of shape `[n, 2]`.
#[derive(Clone, Debug)]
pub struct PoseVars {
    pub px: Var,
    pub pz: Var,
    pub ry: Var,
}

impl PoseVars {
    pub fn trainable(&self) -> Vec<&Var> {
        [&self.px, &self.pz, &self.ry]
            .into_iter()
            .filter(|v| v.requires_grad())
            .collect()
    }

    /// World-space ray origins and directions `[P, 3]` for camera-frame unit
    /// directions `cam_dirs`, using pose `index` of `set` with `jitter`.
    /// The yaw pair is normalized inside the graph.
    pub fn rays(
        &self,
        set: &PoseSet,
        index: usize,
        jitter: &CameraJitter,
        cam_dirs: &[[f64; 3]],
    ) -> (Var, Var) {
        let pose = &set.poses[index];
        let p = cam_dirs.len();
        let rz = rot_z(pose.rz);
        let rx = rot_x(pose.rx);
        // R q = c·Rz(q0, 0, q2) + s·Rz(q2, 0, -q0) + Rz(0, q1, 0), q = Rx d
        let mut a = Vec::with_capacity(3 * p);
        let mut b = Vec::with_capacity(3 * p);
        let mut k = Vec::with_capacity(3 * p);
        for d in cam_dirs {
            let q = apply3(&rx, *d);
            a.extend(apply3(&rz, [q[0], 0.0, q[2]]));
            b.extend(apply3(&rz, [q[2], 0.0, -q[0]]));
            k.extend(apply3(&rz, [0.0, q[1], 0.0]));
        }
        let pair = self.ry.narrow(0, index, 1);
        let norm = pair.square().sum_to(&[1, 1]).powf(0.5);
        let unit = pair.div(&norm);
        let c0 = unit.narrow(1, 0, 1);
        let s0 = unit.narrow(1, 1, 1);
        let (sn, cs) = jitter.dyaw.sin_cos();
        let c = c0.scale(cs).sub(&s0.scale(sn));
        let s = s0.scale(cs).add(&c0.scale(sn));
        let dirs = Var::constant(Tensor::new(&[p, 3], a))
            .mul(&c)
            .add(&Var::constant(Tensor::new(&[p, 3], b)).mul(&s))
            .add(&Var::constant(Tensor::new(&[p, 3], k)));
        let px = self.px.narrow(0, index, 1).shift(jitter.dx);
        let pz = self.pz.narrow(0, index, 1).shift(jitter.dz);
        let py = Var::constant(Tensor::new(&[1], vec![pose.p[1]]));
        let origin = Var::concat(&[px, py, pz], 0)
            .reshape(&[1, 3])
            .broadcast_to(&[p, 3]);
        (origin, dirs)
    }
}
