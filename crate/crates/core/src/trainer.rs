//! Adversarial training of the generator, the discriminator and the camera
//! poses: one discriminator step, then one generator (and pose) step.

use crate::camera::{init_pose_set, trainable_pose_params, CameraSample, PoseSelection, PoseSet, PoseVars, RigConfig};
use crate::discriminator::{images_to_batch, Discriminator, DiscriminatorConfig};
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorConfig};
use crate::image::RgbImage;
use crate::patch::{
    crop_real_patch, sample_valid_window, sample_window, warp_yaw, AugSchedule, Augment2d, PatchSource,
    PatchSpec, ScaleSchedule, ValidRegion,
};
use crate::render::{camera_directions, jittered_offsets, render_batch, BatchRenderSpec, RayBounds, RenderOptions, DEFAULT_FAR, DEFAULT_NEAR};
use crate::triplane::{TriplaneField, TriplaneGrid};
use log::{debug, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tripatch_autograd::{backward, grad, no_grad, softplus, Adam, AdamConfig, Tensor, Var};

/// Real training images with their shared horizontal field of view.
#[derive(Clone, Debug)]
pub struct TrainData {
    pub images: Vec<RgbImage>,
    pub fov_deg: f64,
}

impl TrainData {
    pub fn new(images: Vec<RgbImage>, fov_deg: f64) -> Result<Self> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidInput("no training images".into()))?;
        let (w, h) = (first.width(), first.height());
        if w != h {
            return Err(Error::InvalidInput(format!("training images must be square, got {w}x{h}")));
        }
        if let Some((i, im)) = images.iter().enumerate().find(|(_, im)| im.width() != w || im.height() != h) {
            return Err(Error::InvalidInput(format!(
                "image {i} is {}x{}, expected {w}x{h}",
                im.width(),
                im.height()
            )));
        }
        if !(fov_deg > 0.0 && fov_deg < 180.0) {
            return Err(Error::InvalidInput(format!("field of view {fov_deg} outside (0, 180)")));
        }
        Ok(TrainData { images, fov_deg })
    }

    pub fn resolution(&self) -> usize {
        self.images[0].width()
    }
}

/// How the discriminator's adversarial terms are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiscriminatorLoss {
    /// Minimize `E f(D(fake)) + E f(-D(real))` as written. Unbounded below:
    /// a shared logit offset drifts away from zero, so it is not trained with
    /// by default.
    Literal,
    /// Minimize `E softplus(D(fake)) + E softplus(-D(real))`, which is the
    /// discriminator maximizing the written adversarial value with its logit
    /// sign flipped.
    #[default]
    Standard,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub count: usize,
    pub sigma_xy: f64,
    pub height: f64,
    /// Allow pose optimization while the expected patch scale is above 0.5.
    pub optimize: bool,
    pub max_attempts: usize,
    pub rig: RigConfig,
}

impl Default for PoseConfig {
    fn default() -> Self {
        PoseConfig {
            count: 1000,
            sigma_xy: 0.3,
            height: 0.0,
            optimize: true,
            max_attempts: 100,
            rig: RigConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Full views rendered for KID.
    pub n_eval: usize,
    /// Side of rendered evaluation views.
    pub resolution: usize,
    /// Patches per side for patch-level KID.
    pub patch_samples: usize,
    /// Smallest and largest scale of evaluation patches.
    pub patch_scale_range: (f64, f64),
    /// Latents rendered from the fixed pose for diversity.
    pub n_diversity: usize,
    pub n_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_eval: 500,
            resolution: 64,
            patch_samples: 200,
            patch_scale_range: (0.25, 0.8),
            n_diversity: 8,
            n_samples: 96,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub epochs: usize,
    pub iterations_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub lambda_r1: f64,
    pub lambda_recon: f64,
    pub d_loss: DiscriminatorLoss,
    /// Samples per ray during training.
    pub n_samples: usize,
    pub scale: ScaleSchedule,
    pub augmentation: AugSchedule,
    pub augment_2d: Augment2d,
    pub poses: PoseConfig,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Iterations between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    /// Iterations between metric evaluations; 0 disables them.
    pub metrics_every: usize,
    pub eval: EvalConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            epochs: 400,
            iterations_per_epoch: 1000,
            batch_size: 8,
            learning_rate: 2e-3,
            beta1: 0.0,
            beta2: 0.99,
            lambda_r1: 0.5,
            lambda_recon: 50.0,
            d_loss: DiscriminatorLoss::Standard,
            n_samples: 96,
            scale: ScaleSchedule::default(),
            augmentation: AugSchedule::default(),
            augment_2d: Augment2d::default(),
            poses: PoseConfig::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            checkpoint_every: 10_000,
            metrics_every: 10_000,
            eval: EvalConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Reduced configuration for CPU smoke runs on the toy scene.
    pub fn smoke() -> Self {
        TrainConfig {
            epochs: 100,
            iterations_per_epoch: 30,
            batch_size: 4,
            n_samples: 24,
            poses: PoseConfig {
                count: 200,
                ..PoseConfig::default()
            },
            generator: GeneratorConfig::small(64, 16),
            discriminator: DiscriminatorConfig::small(32),
            checkpoint_every: 0,
            metrics_every: 0,
            eval: EvalConfig {
                n_eval: 64,
                resolution: 32,
                n_samples: 48,
                ..EvalConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("iterations_per_epoch", self.iterations_per_epoch),
            ("batch_size", self.batch_size),
            ("n_samples", self.n_samples),
            ("poses.count", self.poses.count),
            ("poses.max_attempts", self.poses.max_attempts),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.learning_rate >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        if !(self.lambda_r1 >= 0.0) || !(self.lambda_recon >= 0.0) {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        let (lo, hi) = self.eval.patch_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::Config(format!("invalid evaluation scale range ({lo}, {hi})")));
        }
        self.scale.validate()?;
        self.generator.validate()?;
        self.discriminator.validate()
    }

    pub fn total_iterations(&self) -> usize {
        self.epochs * self.iterations_per_epoch
    }

    /// Integer epoch containing `iteration`.
    pub fn epoch_of(&self, iteration: usize) -> usize {
        iteration / self.iterations_per_epoch
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    pub fn patch_size(&self) -> usize {
        self.discriminator.patch
    }
}

/// `f(a) = -ln(1 + e^{-a})`.
pub fn f_loss(a: f64) -> f64 {
    -softplus(-a)
}

fn f_var(a: &Var) -> Var {
    a.neg().softplus().neg()
}

fn batch_mean(v: &Var) -> Var {
    v.sum().scale(1.0 / v.value().len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub r1: f64,
    pub recon: f64,
}

/// Discriminator objective split into its four contributions; `r1` and
/// `recon` already include their weights, so the fields sum to `total`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct DTerms {
    pub fake: f64,
    pub real: f64,
    pub r1: f64,
    pub recon: f64,
    pub total: f64,
}

pub struct DObjective {
    pub total: Var,
    pub terms: DTerms,
    pub real_logits: Vec<f64>,
    pub fake_logits: Vec<f64>,
}

pub fn discriminator_objective(
    d: &Discriminator,
    real: &Tensor,
    real_scales: &[f64],
    fake: &Tensor,
    fake_scales: &[f64],
    weights: LossWeights,
    form: DiscriminatorLoss,
) -> Result<DObjective> {
    let real_x = Var::leaf(real.clone(), weights.r1 > 0.0);
    let out_real = d.forward(&real_x, real_scales)?;
    let out_fake = d.forward(&Var::constant(fake.clone()), fake_scales)?;
    let (fake_term, real_term) = match form {
        DiscriminatorLoss::Literal => (
            batch_mean(&f_var(&out_fake.logits)),
            batch_mean(&f_var(&out_real.logits.neg())),
        ),
        DiscriminatorLoss::Standard => (
            batch_mean(&out_fake.logits.softplus()),
            batch_mean(&out_real.logits.neg().softplus()),
        ),
    };
    let mut total = fake_term.add(&real_term);
    let mut terms = DTerms {
        fake: fake_term.item(),
        real: real_term.item(),
        ..DTerms::default()
    };
    if weights.r1 > 0.0 {
        let b = real.shape()[0] as f64;
        if let Some(g) = grad(&out_real.logits.sum(), std::slice::from_ref(&real_x), true).pop().flatten() {
            let r1 = g.square().sum().scale(weights.r1 / b);
            terms.r1 = r1.item();
            total = total.add(&r1);
        }
    }
    if weights.recon > 0.0 {
        let rec = d.recon_loss(&out_real.features, real)?.scale(weights.recon);
        terms.recon = rec.item();
        total = total.add(&rec);
    }
    terms.total = total.item();
    Ok(DObjective {
        total,
        terms,
        real_logits: out_real.logits.value().data().to_vec(),
        fake_logits: out_fake.logits.value().data().to_vec(),
    })
}

/// Non-saturating generator loss `E[-f(D(fake))] = E softplus(-D(fake))`.
pub fn generator_objective(d: &Discriminator, fake: &Var, scales: &[f64]) -> Result<(Var, Vec<f64>)> {
    let logits = d.forward(fake, scales)?.logits;
    let loss = batch_mean(&f_var(&logits).neg());
    Ok((loss, logits.value().data().to_vec()))
}

pub struct RealBatch {
    pub patches: Tensor,
    pub specs: Vec<PatchSpec>,
    pub angles: Vec<f64>,
}

impl RealBatch {
    pub fn scales(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.scale).collect()
    }
}

/// Real patches for epoch `t`: per patch an image, a scale, a yaw
/// augmentation angle and a window inside the valid part of the warp.
pub fn sample_real_batch(data: &TrainData, config: &TrainConfig, t: f64, rng: &mut impl Rng) -> Result<RealBatch> {
    let h = config.patch_size();
    let mut patches = Vec::with_capacity(config.batch_size);
    let mut specs = Vec::with_capacity(config.batch_size);
    let mut angles = Vec::with_capacity(config.batch_size);
    for _ in 0..config.batch_size {
        let index = rng.gen_range(0..data.images.len());
        let image = &data.images[index];
        let s = config.scale.sample(t, rng);
        let mut phi = config.augmentation.sample(t, rng);
        let mut warped = None;
        let mut center = None;
        if phi != 0.0 {
            let w = warp_yaw(image, None, data.fov_deg, phi)?;
            let region = ValidRegion::new(&w.mask, w.image.width(), w.image.height());
            match sample_valid_window(&region, s, rng, 64) {
                Ok(u0) => {
                    center = Some(u0);
                    warped = Some(w.image);
                }
                Err(Error::SamplingExhausted(_)) => phi = 0.0,
                Err(e) => return Err(e),
            }
        }
        let u0 = match center {
            Some(u0) => u0,
            None => sample_window(s, rng)?,
        };
        let source = warped.as_ref().unwrap_or(image);
        let patch = crop_real_patch(source, s, u0, h)?;
        patches.push(config.augment_2d.apply(&patch, rng));
        specs.push(PatchSpec::new(s, u0, PatchSource::Real(index))?);
        angles.push(phi);
    }
    Ok(RealBatch {
        patches: images_to_batch(&patches),
        specs,
        angles,
    })
}

pub struct FakeBatch {
    /// `[B, H, H, 3]` in the graph of the generator and the pose parameters.
    pub patches: Var,
    pub specs: Vec<PatchSpec>,
    pub cameras: Vec<CameraSample>,
}

impl FakeBatch {
    pub fn scales(&self) -> Vec<f64> {
        self.specs.iter().map(|s| s.scale).collect()
    }
}

pub(crate) fn packed_grid(planes: &Tensor, b: usize) -> Result<TriplaneGrid> {
    let s = planes.shape();
    TriplaneGrid::new(planes.narrow(0, b, 1).reshape(&[s[1], s[2], s[3]]))
}

/// Draw a camera for a generated scene, falling back to an unchecked draw
/// when every candidate is occupied.
pub(crate) fn draw_camera(
    poses: &PoseSet,
    grid: &TriplaneGrid,
    g: &Generator,
    max_attempts: usize,
    rng: &mut impl Rng,
) -> Result<CameraSample> {
    let field = TriplaneField::new(grid, g.decoder())?;
    match poses.sample_camera(&field, rng, max_attempts) {
        Ok(c) => Ok(c),
        Err(Error::SamplingExhausted(n)) => {
            warn!("no free camera centre in {n} draws; using an unchecked pose");
            let mut open = poses.clone();
            open.rig.occupancy_threshold = f64::INFINITY;
            open.sample_camera(&field, rng, 1)
        }
        Err(e) => Err(e),
    }
}

/// Render one generated patch per batch entry through the pose parameters.
#[allow(clippy::too_many_arguments)]
pub fn render_fake_batch(
    g: &Generator,
    poses: &PoseSet,
    pose_vars: &PoseVars,
    config: &TrainConfig,
    fov_deg: f64,
    t: f64,
    rng: &mut impl Rng,
) -> Result<FakeBatch> {
    let b = config.batch_size;
    let h = config.patch_size();
    let z = Var::constant(Tensor::randn(&[b, g.config().z_dim], rng));
    let planes = g.sample_scene_var(&z)?;
    let mut origins = Vec::with_capacity(b);
    let mut dirs = Vec::with_capacity(b);
    let mut specs = Vec::with_capacity(b);
    let mut cameras = Vec::with_capacity(b);
    for i in 0..b {
        let grid = packed_grid(planes.value(), i)?;
        let cam = draw_camera(poses, &grid, g, config.poses.max_attempts, rng)?;
        let s = config.scale.sample(t, rng);
        let u0 = sample_window(s, rng)?;
        let cam_dirs = camera_directions(fov_deg, s, u0, h)?;
        let (o, d) = pose_vars.rays(poses, cam.index, &cam.jitter, &cam_dirs);
        origins.push(o);
        dirs.push(d);
        specs.push(PatchSpec::new(s, u0, PatchSource::Generated(cam.index))?);
        cameras.push(cam);
    }
    let rays = b * h * h;
    let spec = BatchRenderSpec {
        ray_scene: (0..rays).map(|r| r / (h * h)).collect(),
        bounds: RayBounds::CubeClipped {
            near: DEFAULT_NEAR,
            far: DEFAULT_FAR,
        },
        options: RenderOptions {
            n_samples: config.n_samples,
            offsets: Some(jittered_offsets(rays, config.n_samples, rng)),
            background: [0.0; 3],
        },
    };
    let out = render_batch(
        &planes,
        g.decoder(),
        &Var::concat(&origins, 0),
        &Var::concat(&dirs, 0),
        &spec,
    )?;
    Ok(FakeBatch {
        patches: out.colors.reshape(&[b, h, h, 3]),
        specs,
        cameras,
    })
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub poses: PoseSet,
    pub g_opt: Adam,
    pub d_opt: Adam,
    pub pose_opt: Adam,
    /// Completed iterations.
    pub iteration: usize,
    pub rng: ChaCha8Rng,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let generator = Generator::new(config.generator.clone(), &mut rng)?;
        let discriminator = Discriminator::new(config.discriminator.clone(), &mut rng)?;
        let mut poses = init_pose_set(config.poses.sigma_xy, config.poses.height, config.poses.count, &mut rng)?;
        poses.rig = config.poses.rig;
        let adam = config.adam();
        let g_opt = Adam::new(adam, &generator.params());
        let d_opt = Adam::new(adam, &discriminator.store().vars().iter().collect::<Vec<_>>());
        let pv = poses.vars(&PoseSelection::default());
        let pose_opt = Adam::new(adam, &[&pv.px, &pv.pz, &pv.ry]);
        Ok(TrainState {
            config,
            generator,
            discriminator,
            poses,
            g_opt,
            d_opt,
            pose_opt,
            iteration: 0,
            rng,
        })
    }

    pub fn epoch(&self) -> usize {
        self.config.epoch_of(self.iteration)
    }

    /// Pose components trained at the current epoch.
    pub fn pose_selection(&self) -> PoseSelection {
        if !self.config.poses.optimize {
            return PoseSelection::default();
        }
        trainable_pose_params(self.config.scale.expected_scale(self.epoch() as f64))
    }
}

/// Per-iteration record; the `d_*` terms sum to `d_total`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepLog {
    pub epoch: usize,
    pub iteration: usize,
    pub d_fake: f64,
    pub d_real: f64,
    pub d_r1: f64,
    pub d_recon: f64,
    pub d_total: f64,
    pub g_total: f64,
    pub real_logit: f64,
    pub fake_logit: f64,
    pub poses_trained: bool,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn non_finite(what: &str, state: &TrainState, real: &RealBatch, fake: &FakeBatch) -> Error {
    #[derive(Serialize)]
    struct Dump<'a> {
        iteration: usize,
        epoch: usize,
        real: &'a [PatchSpec],
        real_angles: &'a [f64],
        fake: &'a [PatchSpec],
        cameras: Vec<(usize, [f64; 3])>,
    }
    let dump = Dump {
        iteration: state.iteration,
        epoch: state.epoch(),
        real: &real.specs,
        real_angles: &real.angles,
        fake: &fake.specs,
        cameras: fake.cameras.iter().map(|c| (c.index, c.pose.p)).collect(),
    };
    let json = serde_json::to_string(&dump).unwrap_or_default();
    Error::NonFiniteLoss(format!("{what} at iteration {}: {json}", state.iteration))
}

/// One discriminator update followed by one generator update; pose
/// parameters follow the generator while gating allows it.
pub fn train_step(state: &mut TrainState, data: &TrainData) -> Result<StepLog> {
    let config = state.config.clone();
    let epoch = state.epoch();
    let t = epoch as f64;
    let selection = state.pose_selection();
    let real = sample_real_batch(data, &config, t, &mut state.rng)?;
    let pose_vars = state.poses.vars(&selection);
    let fake = render_fake_batch(
        &state.generator,
        &state.poses,
        &pose_vars,
        &config,
        data.fov_deg,
        t,
        &mut state.rng,
    )?;
    let (real_scales, fake_scales) = (real.scales(), fake.scales());

    let weights = LossWeights {
        r1: config.lambda_r1,
        recon: config.lambda_recon,
    };
    let d_obj = discriminator_objective(
        &state.discriminator,
        &real.patches,
        &real_scales,
        fake.patches.value(),
        &fake_scales,
        weights,
        config.d_loss,
    )?;
    if !d_obj.terms.total.is_finite() {
        return Err(non_finite("discriminator loss", state, &real, &fake));
    }
    let d_grads = backward(&d_obj.total);
    {
        let mut params: Vec<&mut Var> = state.discriminator.store_mut().vars_mut().iter_mut().collect();
        state.d_opt.step(&mut params, &d_grads);
    }
    drop(d_grads);

    let (g_loss, _) = generator_objective(&state.discriminator, &fake.patches, &fake_scales)?;
    let g_total = g_loss.item();
    if !g_total.is_finite() {
        return Err(non_finite("generator loss", state, &real, &fake));
    }
    let g_grads = backward(&g_loss);
    state.g_opt.step(&mut state.generator.params_mut(), &g_grads);
    let poses_trained = !selection.is_empty();
    if poses_trained {
        let PoseVars { mut px, mut pz, mut ry } = pose_vars;
        state.pose_opt.step(&mut [&mut px, &mut pz, &mut ry], &g_grads);
        state.poses.absorb(&PoseVars { px, pz, ry })?;
    }

    let log = StepLog {
        epoch,
        iteration: state.iteration,
        d_fake: d_obj.terms.fake,
        d_real: d_obj.terms.real,
        d_r1: d_obj.terms.r1,
        d_recon: d_obj.terms.recon,
        d_total: d_obj.terms.total,
        g_total,
        real_logit: mean(&d_obj.real_logits),
        fake_logit: mean(&d_obj.fake_logits),
        poses_trained,
    };
    debug!("{log:?}");
    state.iteration += 1;
    Ok(log)
}

/// Run steps until `until` iterations are complete, reporting each log.
pub fn run_until(
    state: &mut TrainState,
    data: &TrainData,
    until: usize,
    mut observe: impl FnMut(&TrainState, &StepLog) -> Result<()>,
) -> Result<()> {
    while state.iteration < until {
        let log = train_step(state, data)?;
        observe(state, &log)?;
    }
    Ok(())
}

/// Render generated views for inspection (no gradients).
pub fn sample_scenes(g: &Generator, n: usize, rng: &mut impl Rng) -> Result<Vec<TriplaneGrid>> {
    let _guard = no_grad();
    let z = Var::constant(Tensor::randn(&[n, g.config().z_dim], rng));
    let planes = g.sample_scene_var(&z)?;
    (0..n).map(|i| packed_grid(planes.value(), i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f_is_stable_and_monotone() {
        assert!((f_loss(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((f_loss(-50.0) + 50.0).abs() <= 1e-9);
        assert!(f_loss(1e4) == 0.0 || f_loss(1e4).abs() < 1e-300);
        assert!((f_loss(-1e4) + 1e4).abs() < 1e-9);
        let mut prev = f_loss(-60.0);
        for k in -59..60 {
            let v = f_loss(k as f64);
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn epoch_counter_floors() {
        let c = TrainConfig::default();
        assert_eq!(c.epoch_of(3500), 3);
        assert_eq!(c.epoch_of(999), 0);
    }

    #[test]
    fn default_constants() {
        let c = TrainConfig::default();
        assert_eq!(c.iterations_per_epoch, 1000);
        assert_eq!(c.learning_rate, 2e-3);
        assert_eq!(c.lambda_r1, 0.5);
        assert_eq!(c.lambda_recon, 50.0);
        assert_eq!(c.n_samples, 96);
        assert_eq!(c.poses.count, 1000);
        c.validate().unwrap();
        TrainConfig::smoke().validate().unwrap();
    }
}
