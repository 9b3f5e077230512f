//! Latent-to-triplane generator: mapping network plus a style-modulated
//! synthesis stack that grows a learned 4×4 constant to an `N×N×3C` image.

use crate::error::{Error, Result};
use crate::nn::{pixel_norm, Dense, ModConv, ParamStore};
use crate::triplane::{DecoderConfig, FieldDecoderParams, TriplaneGrid};
use rand::Rng;
use serde::{Deserialize, Serialize};
use tripatch_autograd::{no_grad, Tensor, Var};

pub const LATENT_DIM: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub z_dim: usize,
    pub w_dim: usize,
    pub mapping_layers: usize,
    /// Learning-rate multiplier of the mapping network.
    pub mapping_lr_mult: f64,
    /// Triplane resolution N (a power of two, at least 8).
    pub resolution: usize,
    /// Channels per plane C.
    pub channels: usize,
    /// Feature width of each synthesis block, from 4×4 up to N×N.
    pub block_channels: Vec<usize>,
    pub negative_slope: f64,
    pub decoder: DecoderConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            z_dim: LATENT_DIM,
            w_dim: LATENT_DIM,
            mapping_layers: 4,
            mapping_lr_mult: 0.01,
            resolution: 256,
            channels: 32,
            block_channels: vec![512, 512, 256, 256, 128, 64, 64],
            negative_slope: 0.2,
            decoder: DecoderConfig::default(),
        }
    }
}

impl GeneratorConfig {
    /// A small configuration for CPU experiments.
    pub fn small(resolution: usize, channels: usize) -> Self {
        let blocks = resolution.trailing_zeros().saturating_sub(1) as usize;
        let widths = [64, 64, 48, 32, 32, 32, 32];
        GeneratorConfig {
            resolution,
            channels,
            block_channels: widths.iter().take(blocks).copied().collect(),
            decoder: DecoderConfig {
                hidden: 32,
                ..DecoderConfig::default()
            },
            ..GeneratorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.resolution;
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "generator resolution must be a power of two >= 8, got {n}"
            )));
        }
        let blocks = n.trailing_zeros() as usize - 1;
        if self.block_channels.len() != blocks {
            return Err(Error::Config(format!(
                "resolution {n} needs {blocks} block widths, got {}",
                self.block_channels.len()
            )));
        }
        if self.channels == 0 || self.block_channels.contains(&0) || self.z_dim == 0 || self.w_dim == 0 {
            return Err(Error::Config("generator widths must be positive".into()));
        }
        if !(self.mapping_lr_mult > 0.0 && self.mapping_lr_mult.is_finite()) {
            return Err(Error::Config("mapping_lr_mult must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Generator {
    config: GeneratorConfig,
    store: ParamStore,
    mapping: Vec<Dense>,
    constant: usize,
    blocks: Vec<ModConv>,
    to_planes: ModConv,
    decoder: FieldDecoderParams,
}

impl Generator {
    pub fn new(config: GeneratorConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut mapping = Vec::new();
        let mut width = config.z_dim;
        for i in 0..config.mapping_layers {
            mapping.push(Dense::with_lr_mult(
                &mut store,
                &format!("mapping.{i}"),
                width,
                config.w_dim,
                0.0,
                config.mapping_lr_mult,
                rng,
            ));
            width = config.w_dim;
        }
        let c0 = config.block_channels[0];
        let constant = store.add("synthesis.const", Tensor::randn(&[1, 4, 4, c0], rng));
        let mut blocks = Vec::new();
        let mut cin = c0;
        for (i, &cout) in config.block_channels.iter().enumerate() {
            let name = format!("synthesis.b{}", 4usize << i);
            blocks.push(ModConv::new(&mut store, &name, config.w_dim, 3, cin, cout, true, rng));
            cin = cout;
        }
        let to_planes = ModConv::new(&mut store, "synthesis.to_planes", config.w_dim, 1, cin, 3 * config.channels, false, rng);
        let decoder = FieldDecoderParams::init(config.channels, config.decoder, rng);
        Ok(Generator {
            config,
            store,
            mapping,
            constant,
            blocks,
            to_planes,
            decoder,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.config
    }

    pub fn decoder(&self) -> &FieldDecoderParams {
        &self.decoder
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    /// Synthesis and mapping parameters followed by the field decoder.
    pub fn params_mut(&mut self) -> Vec<&mut Var> {
        self.store
            .vars_mut()
            .iter_mut()
            .chain(self.decoder.vars_mut().iter_mut())
            .collect()
    }

    pub fn params(&self) -> Vec<&Var> {
        self.store.vars().iter().chain(self.decoder.vars().iter()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.store.param_count() + self.decoder.param_count()
    }

    /// All tensors by name, decoder included.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = self.store.named_tensors();
        for (name, v) in crate::triplane::DECODER_TENSORS.iter().zip(self.decoder.vars()) {
            out.push((format!("decoder.{name}"), v.value().clone()));
        }
        out
    }

    pub fn load_tensors(&mut self, tensors: &[(String, Tensor)]) -> Result<()> {
        let k = self.store.vars().len();
        if tensors.len() != k + crate::triplane::DECODER_TENSORS.len() {
            return Err(Error::ConfigMismatch(format!(
                "generator expects {} tensors, found {}",
                k + crate::triplane::DECODER_TENSORS.len(),
                tensors.len()
            )));
        }
        self.store.load(&tensors[..k])?;
        let dec: Vec<Tensor> = tensors[k..].iter().map(|(_, t)| t.clone()).collect();
        self.decoder = FieldDecoderParams::from_tensors(self.config.channels, self.config.decoder, dec)
            .map_err(|e| Error::ConfigMismatch(e.to_string()))?;
        Ok(())
    }

    fn check_latent(&self, z: &Var, dim: usize) -> Result<usize> {
        let s = z.shape();
        if s.len() != 2 || s[1] != dim {
            return Err(Error::InvalidInput(format!(
                "latent batch must be [B, {dim}], got {s:?}"
            )));
        }
        if !z.value().all_finite() {
            return Err(Error::InvalidInput("latent contains non-finite values".into()));
        }
        Ok(s[0])
    }

    /// `[B, z_dim]` to `[B, w_dim]`.
    pub fn map_latent_var(&self, z: &Var) -> Result<Var> {
        self.check_latent(z, self.config.z_dim)?;
        let mut x = pixel_norm(z);
        for layer in &self.mapping {
            x = layer.forward(&self.store, &x).leaky_relu(self.config.negative_slope);
        }
        Ok(x)
    }

    /// `[B, w_dim]` to packed planes `[B, N, N, 3C]`.
    pub fn synthesize_var(&self, w: &Var) -> Result<Var> {
        let b = self.check_latent(w, self.config.w_dim)?;
        let c0 = self.config.block_channels[0];
        let mut x = self.store.get(self.constant).broadcast_to(&[b, 4, 4, c0]);
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                x = x.upsample2();
            }
            x = block.forward(&self.store, &x, w).leaky_relu(self.config.negative_slope);
        }
        Ok(self.to_planes.forward(&self.store, &x, w))
    }

    pub fn sample_scene_var(&self, z: &Var) -> Result<Var> {
        let w = self.map_latent_var(z)?;
        self.synthesize_var(&w)
    }

    pub fn map_latent(&self, z: &[f64]) -> Result<Vec<f64>> {
        let z = Var::constant(Tensor::new(&[1, z.len()], z.to_vec()));
        let _guard = no_grad();
        let w = self.map_latent_var(&z)?;
        Ok(w.value().data().to_vec())
    }

    pub fn synthesize_triplanes(&self, w: &[f64]) -> Result<TriplaneGrid> {
        let w = Var::constant(Tensor::new(&[1, w.len()], w.to_vec()));
        let _guard = no_grad();
        let planes = self.synthesize_var(&w)?;
        self.unbatch(planes.value())
    }

    pub fn sample_scene(&self, z: &[f64]) -> Result<TriplaneGrid> {
        let w = self.map_latent(z)?;
        self.synthesize_triplanes(&w)
    }

    fn unbatch(&self, planes: &Tensor) -> Result<TriplaneGrid> {
        let n = self.config.resolution;
        let c3 = 3 * self.config.channels;
        TriplaneGrid::new(Tensor::new(&[n, n, c3], planes.data().to_vec()))
    }

    /// Grids along the straight line between two intermediate latents.
    pub fn interpolate(&self, w0: &[f64], w1: &[f64], steps: usize) -> Result<Vec<TriplaneGrid>> {
        if w0.len() != w1.len() || steps < 2 {
            return Err(Error::InvalidInput(
                "interpolation needs equal-length latents and at least two steps".into(),
            ));
        }
        (0..steps)
            .map(|k| {
                let a = k as f64 / (steps - 1) as f64;
                let w: Vec<f64> = w0.iter().zip(w1).map(|(x, y)| x * (1.0 - a) + y * a).collect();
                self.synthesize_triplanes(&w)
            })
            .collect()
    }
}

/// A standard normal latent.
pub fn sample_latent(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    Tensor::randn(&[dim], rng).data().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> Generator {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = GeneratorConfig {
            resolution: 8,
            channels: 4,
            block_channels: vec![8, 8],
            ..GeneratorConfig::default()
        };
        Generator::new(config, &mut rng).unwrap()
    }

    #[test]
    fn mapping_is_deterministic_and_checks_dimension() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = sample_latent(128, &mut rng);
        let w = g.map_latent(&z).unwrap();
        assert_eq!(w.len(), 128);
        assert_eq!(w, g.map_latent(&z).unwrap());
        assert!(matches!(g.map_latent(&z[..100]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn split_partitions_the_synthesis_output() {
        let g = tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let grid = g.sample_scene(&sample_latent(128, &mut rng)).unwrap();
        let parts = crate::triplane::Plane::ALL.map(|p| grid.plane(p));
        let joined = Tensor::concat(&[&parts[0], &parts[1], &parts[2]], 2);
        assert_eq!(joined.data(), grid.features().data());
        assert_eq!(grid.resolution(), 8);
        assert_eq!(grid.channels(), 4);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let bad = GeneratorConfig {
            resolution: 48,
            ..GeneratorConfig::default()
        };
        assert!(Generator::new(bad, &mut rng).is_err());
        let bad = GeneratorConfig {
            block_channels: vec![8],
            resolution: 16,
            ..GeneratorConfig::default()
        };
        assert!(Generator::new(bad, &mut rng).is_err());
    }
}
