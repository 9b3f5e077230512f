//! Scale-conditioned patch discriminator with a small reconstruction head.

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::nn::{Conv, Dense, ParamStore};
use crate::patch::resize;
use rand::Rng;
use serde::{Deserialize, Serialize};
use tripatch_autograd::{grad, no_grad, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Patch side H (a power of two, at least 8).
    pub patch: usize,
    /// Trunk width at each resolution from H×H down to 4×4.
    pub channels: Vec<usize>,
    pub head_width: usize,
    pub recon_resolution: usize,
    pub recon_channels: usize,
    pub negative_slope: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            patch: 64,
            channels: vec![32, 64, 128, 256, 256],
            head_width: 256,
            recon_resolution: 16,
            recon_channels: 32,
            negative_slope: 0.2,
        }
    }
}

impl DiscriminatorConfig {
    pub fn small(patch: usize) -> Self {
        let levels = patch.trailing_zeros().saturating_sub(1) as usize;
        let widths = [16, 32, 64, 64, 64, 64];
        DiscriminatorConfig {
            patch,
            channels: widths.iter().take(levels).copied().collect(),
            head_width: 64,
            recon_channels: 16,
            ..DiscriminatorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.patch;
        if h < 8 || !h.is_power_of_two() {
            return Err(Error::Config(format!(
                "patch size must be a power of two >= 8, got {h}"
            )));
        }
        let levels = h.trailing_zeros() as usize - 1;
        if self.channels.len() != levels {
            return Err(Error::Config(format!(
                "patch {h} needs {levels} trunk widths, got {}",
                self.channels.len()
            )));
        }
        let r = self.recon_resolution;
        if r < 8 || !r.is_power_of_two() {
            return Err(Error::Config(format!(
                "reconstruction resolution must be a power of two >= 8, got {r}"
            )));
        }
        Ok(())
    }

    /// Side of the reconstruction target.
    pub fn recon_side(&self) -> usize {
        self.recon_resolution.min(self.patch)
    }
}

#[derive(Clone, Copy, Debug)]
struct ResBlock {
    conv1: Conv,
    conv2: Conv,
    skip: Conv,
}

/// Logits plus the 8×8 trunk feature used by the reconstruction head.
pub struct DiscOutput {
    pub logits: Var,
    pub features: Var,
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    config: DiscriminatorConfig,
    store: ParamStore,
    from_rgb: Conv,
    blocks: Vec<ResBlock>,
    fc: Dense,
    out: Dense,
    recon_conv: Conv,
    recon_rgb: Conv,
}

impl Discriminator {
    pub fn new(config: DiscriminatorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let ch = &config.channels;
        let from_rgb = Conv::new(&mut store, "from_rgb", 1, 4, ch[0], true, rng);
        let mut blocks = Vec::new();
        for i in 0..ch.len() - 1 {
            let r = config.patch >> i;
            let name = format!("trunk.b{r}");
            blocks.push(ResBlock {
                conv1: Conv::new(&mut store, &format!("{name}.conv1"), 3, ch[i], ch[i], true, rng),
                conv2: Conv::new(&mut store, &format!("{name}.conv2"), 3, ch[i], ch[i + 1], true, rng),
                skip: Conv::new(&mut store, &format!("{name}.skip"), 1, ch[i], ch[i + 1], false, rng),
            });
        }
        let last = *ch.last().unwrap();
        let fc = Dense::new(&mut store, "head.fc", 16 * last, config.head_width, 0.0, rng);
        let out = Dense::new(&mut store, "head.out", config.head_width, 1, 0.0, rng);
        let tap = ch[ch.len() - 2];
        let recon_conv = Conv::new(&mut store, "recon.conv", 3, tap, config.recon_channels, true, rng);
        let recon_rgb = Conv::new(&mut store, "recon.rgb", 1, config.recon_channels, 3, true, rng);
        Ok(Discriminator {
            config,
            store,
            from_rgb,
            blocks,
            fc,
            out,
            recon_conv,
            recon_rgb,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count()
    }

    fn check_batch(&self, patches: &Var, scales: &[f64]) -> Result<usize> {
        let s = patches.shape();
        let h = self.config.patch;
        if s.len() != 4 || s[1] != h || s[2] != h || s[3] != 3 {
            return Err(Error::InvalidInput(format!(
                "patch batch must be [B, {h}, {h}, 3], got {s:?}"
            )));
        }
        if scales.len() != s[0] {
            return Err(Error::InvalidInput(format!(
                "{} scales for {} patches",
                scales.len(),
                s[0]
            )));
        }
        if let Some(&bad) = scales.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::InvalidInput(format!("scale {bad} outside (0, 1]")));
        }
        Ok(s[0])
    }

    /// Maps colors to [-1, 1] and appends the constant scale plane.
    pub fn input_tensor(&self, patches: &Var, scales: &[f64]) -> Result<Var> {
        let b = self.check_batch(patches, scales)?;
        let h = self.config.patch;
        let plane = Tensor::from_fn(&[b, h, h, 1], |i| scales[i / (h * h)]);
        Ok(Var::concat(
            &[patches.scale(2.0).shift(-1.0), Var::constant(plane)],
            3,
        ))
    }

    /// Logits for `[B, H, H, 3]` patches in [0, 1].
    pub fn forward(&self, patches: &Var, scales: &[f64]) -> Result<DiscOutput> {
        let x = self.input_tensor(patches, scales)?;
        self.forward_input(&x)
    }

    /// Forward pass on an already assembled `[B, H, H, 4]` input.
    pub fn forward_input(&self, input: &Var) -> Result<DiscOutput> {
        let slope = self.config.negative_slope;
        let st = &self.store;
        let b = input.shape()[0];
        let mut x = self.from_rgb.forward(st, input).leaky_relu(slope);
        let mut res = self.config.patch;
        let mut features = if res == 8 { Some(x.clone()) } else { None };
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        for block in &self.blocks {
            let h = block.conv1.forward(st, &x).leaky_relu(slope);
            let h = block.conv2.forward(st, &h).leaky_relu(slope).avg_pool2();
            let skip = block.skip.forward(st, &x.avg_pool2());
            x = h.add(&skip).scale(inv_sqrt2);
            res /= 2;
            if res == 8 {
                features = Some(x.clone());
            }
        }
        let last = *self.config.channels.last().unwrap();
        let flat = x.reshape(&[b, 16 * last]);
        let logits = self
            .out
            .forward(st, &self.fc.forward(st, &flat).leaky_relu(slope))
            .reshape(&[b]);
        Ok(DiscOutput {
            logits,
            features: features.expect("trunk passes through 8x8"),
        })
    }

    /// One logit for a single patch.
    pub fn discriminate(&self, patch: &RgbImage, s: f64) -> Result<f64> {
        let h = self.config.patch;
        if patch.width() != h || patch.height() != h {
            return Err(Error::InvalidInput(format!(
                "patch is {}x{}, expected {h}x{h}",
                patch.width(),
                patch.height()
            )));
        }
        let x = Var::constant(Tensor::new(&[1, h, h, 3], patch.data().to_vec()));
        let _guard = no_grad();
        let out = self.forward(&x, &[s])?;
        Ok(out.logits.value().data()[0])
    }

    /// Reconstruction of the input at `recon_side()` from the 8×8 feature.
    pub fn reconstruct(&self, features: &Var) -> Var {
        let slope = self.config.negative_slope;
        let mut r = features.clone();
        let mut side = 8;
        while side < self.config.recon_side() {
            r = r.upsample2();
            side *= 2;
        }
        let r = self.recon_conv.forward(&self.store, &r).leaky_relu(slope);
        self.recon_rgb.forward(&self.store, &r)
    }

    /// Mean absolute error between the reconstruction and the bilinear
    /// downsampled real patches (colors in [0, 1]).
    pub fn recon_loss(&self, features: &Var, real: &Tensor) -> Result<Var> {
        let target = downsample_batch(real, self.config.recon_side())?;
        let rec = self.reconstruct(features);
        let n = target.len() as f64;
        Ok(rec.sub(&Var::constant(target)).abs().sum().scale(1.0 / n))
    }

    pub fn recon_regularizer(&self, real: &Tensor, scales: &[f64]) -> Result<Var> {
        let out = self.forward(&Var::constant(real.clone()), scales)?;
        self.recon_loss(&out.features, real)
    }

    /// Batch mean of `|∇_patch D|²` at the real patches.
    pub fn r1_penalty(&self, real: &Tensor, scales: &[f64]) -> Result<Var> {
        let mut err = None;
        let v = r1_penalty_of(
            |p| match self.forward(p, scales) {
                Ok(o) => o.logits,
                Err(e) => {
                    err = Some(e);
                    Var::constant(Tensor::zeros(&[1]))
                }
            },
            real,
        );
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

/// R1 penalty for any differentiable batch scorer `logits = f(patches)`.
/// The result stays differentiable with respect to the scorer's parameters.
pub fn r1_penalty_of(mut logits_of: impl FnMut(&Var) -> Var, patches: &Tensor) -> Var {
    let b = patches.shape()[0] as f64;
    let x = Var::leaf(patches.clone(), true);
    let logits = logits_of(&x);
    match grad(&logits.sum(), &[x], true).pop().flatten() {
        Some(gx) => gx.square().sum().scale(1.0 / b),
        None => Var::constant(Tensor::zeros(&[1])),
    }
}

pub(crate) fn batch_to_images(batch: &Tensor) -> Vec<RgbImage> {
    let s = batch.shape();
    let (h, w) = (s[1], s[2]);
    batch
        .data()
        .chunks(h * w * 3)
        .map(|c| RgbImage::new(w, h, c.to_vec()).expect("batch slice has image size"))
        .collect()
}

pub(crate) fn images_to_batch(images: &[RgbImage]) -> Tensor {
    let (w, h) = (images[0].width(), images[0].height());
    let data = images.iter().flat_map(|i| i.data().iter().copied()).collect();
    Tensor::new(&[images.len(), h, w, 3], data)
}

fn downsample_batch(batch: &Tensor, side: usize) -> Result<Tensor> {
    if batch.shape()[1] == side && batch.shape()[2] == side {
        return Ok(batch.clone());
    }
    let small: Vec<RgbImage> = batch_to_images(batch)
        .iter()
        .map(|im| resize(im, side))
        .collect::<Result<_>>()?;
    Ok(images_to_batch(&small))
}
