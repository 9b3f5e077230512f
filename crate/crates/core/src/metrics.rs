//! Kernel distance between image sets and fixed-camera sample diversity.

use crate::camera::DecomposedPose;
use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image::RgbImage;
use crate::patch::{crop_real_patch, resize, sample_window};
use crate::render::{generate_patch_rays, render_rays};
use crate::trainer::{draw_camera, sample_scenes, TrainData, TrainState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::process::Command;

/// Maps an image to a fixed-length feature vector.
pub trait Embedder {
    fn id(&self) -> String;
    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>>;
}

/// Bilinear downsample to `side × side` and flatten (768 values at 16).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DownsampleEmbedder {
    pub side: usize,
}

impl Default for DownsampleEmbedder {
    fn default() -> Self {
        DownsampleEmbedder { side: 16 }
    }
}

impl Embedder for DownsampleEmbedder {
    fn id(&self) -> String {
        format!("downsample{}", self.side)
    }

    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>> {
        Ok(resize(image, self.side)?.into_data())
    }
}

/// Fixed Gaussian projection of downsampled pixels together with per-channel
/// means, standard deviations and mean gradient magnitudes.
#[derive(Clone, Debug)]
pub struct RandomProjectionEmbedder {
    seed: u64,
    side: usize,
    dim: usize,
    matrix: Vec<f64>,
}

impl RandomProjectionEmbedder {
    pub fn new(seed: u64, side: usize, dim: usize) -> Self {
        let input = side * side * 3 + 9;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (input as f64).sqrt();
        let matrix = (0..input * dim)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * scale)
            .collect();
        RandomProjectionEmbedder {
            seed,
            side,
            dim,
            matrix,
        }
    }

    fn statistics(image: &RgbImage) -> [f64; 9] {
        let (w, h) = (image.width(), image.height());
        let n = (w * h) as f64;
        let mut out = [0.0; 9];
        for c in 0..3 {
            let vals: Vec<f64> = image.data().iter().skip(c).step_by(3).copied().collect();
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
            let mut grad = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let v = image.get(x, y)[c];
                    let gx = if x + 1 < w { image.get(x + 1, y)[c] - v } else { 0.0 };
                    let gy = if y + 1 < h { image.get(x, y + 1)[c] - v } else { 0.0 };
                    grad += (gx * gx + gy * gy).sqrt();
                }
            }
            out[c] = m;
            out[3 + c] = var.sqrt();
            out[6 + c] = grad / n;
        }
        out
    }
}

impl Embedder for RandomProjectionEmbedder {
    fn id(&self) -> String {
        format!("randproj{}-{}-{}", self.side, self.dim, self.seed)
    }

    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let mut x = resize(image, self.side)?.into_data();
        x.extend(Self::statistics(image));
        let mut out = vec![0.0; self.dim];
        for (i, xi) in x.iter().enumerate() {
            let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
            for (o, m) in out.iter_mut().zip(row) {
                *o += xi * m;
            }
        }
        Ok(out)
    }
}

/// Runs an external program on a temporary PNG and parses whitespace
/// separated numbers from its standard output.
#[derive(Clone, Debug)]
pub struct CommandEmbedder {
    pub program: String,
    pub args: Vec<String>,
}

impl Embedder for CommandEmbedder {
    fn id(&self) -> String {
        format!("command:{}", self.program)
    }

    fn embed(&self, image: &RgbImage) -> Result<Vec<f64>> {
        let mut file = tempfile::Builder::new()
            .suffix(".png")
            .tempfile()
            .map_err(|e| Error::io(std::env::temp_dir(), e))?;
        let path = file.path().to_path_buf();
        image.save_png(&path)?;
        file.flush().map_err(|e| Error::io(&path, e))?;
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(&path)
            .output()
            .map_err(|e| Error::io(&self.program, e))?;
        if !out.status.success() {
            return Err(Error::InvalidInput(format!(
                "embedder {} exited with {}",
                self.program, out.status
            )));
        }
        String::from_utf8_lossy(&out.stdout)
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::InvalidInput(format!("embedder printed non-number {t:?}")))
            })
            .collect()
    }
}

/// `n × d` embeddings produced by one embedder.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub embedder_id: String,
    pub rows: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(embedder_id: impl Into<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != d || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(
                "embeddings must be finite rows of equal length".into(),
            ));
        }
        Ok(EmbeddingSet {
            embedder_id: embedder_id.into(),
            rows,
        })
    }

    pub fn embed(embedder: &dyn Embedder, images: &[RgbImage]) -> Result<Self> {
        let rows = images.iter().map(|im| embedder.embed(im)).collect::<Result<_>>()?;
        Self::new(embedder.id(), rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }
}

/// `(xᵀy / d + 1)³`.
pub fn polynomial_kernel(x: &[f64], y: &[f64]) -> f64 {
    let d = x.len() as f64;
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / d + 1.0).powi(3)
}

/// Unbiased squared MMD with the cubic polynomial kernel.
pub fn kid(real: &EmbeddingSet, fake: &EmbeddingSet) -> Result<f64> {
    let (m, n) = (real.len(), fake.len());
    if m < 2 || n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: m.min(n),
        });
    }
    if real.embedder_id != fake.embedder_id || real.dim() != fake.dim() {
        return Err(Error::InvalidInput(format!(
            "embeddings from {} ({}-d) and {} ({}-d) are not comparable",
            real.embedder_id,
            real.dim(),
            fake.embedder_id,
            fake.dim()
        )));
    }
    // Running means keep the estimate exact when every kernel value in a
    // block is the same.
    let within = |s: &EmbeddingSet| {
        let mut mean = RunningMean::default();
        for (i, x) in s.rows.iter().enumerate() {
            for (j, y) in s.rows.iter().enumerate() {
                if i != j {
                    mean.push(polynomial_kernel(x, y));
                }
            }
        }
        mean.value
    };
    let mut cross = RunningMean::default();
    for x in &real.rows {
        for y in &fake.rows {
            cross.push(polynomial_kernel(x, y));
        }
    }
    Ok(within(real) + within(fake) - 2.0 * cross.value)
}

#[derive(Default)]
struct RunningMean {
    value: f64,
    count: f64,
}

impl RunningMean {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        self.value += (x - self.value) / self.count;
    }
}

/// Symmetric image distance used for diversity.
pub trait ImageDistance {
    fn id(&self) -> String;
    fn distance(&self, a: &RgbImage, b: &RgbImage) -> f64;
}

/// Mean absolute pixel difference plus `gradient_weight` times the mean
/// absolute difference of forward-difference image gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelGradientDistance {
    pub gradient_weight: f64,
}

impl Default for PixelGradientDistance {
    fn default() -> Self {
        PixelGradientDistance { gradient_weight: 1.0 }
    }
}

impl ImageDistance for PixelGradientDistance {
    fn id(&self) -> String {
        format!("pixel+grad{}", self.gradient_weight)
    }

    fn distance(&self, a: &RgbImage, b: &RgbImage) -> f64 {
        let (w, h) = (a.width(), a.height());
        let pix: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
            / a.data().len() as f64;
        let mut grad = 0.0;
        let mut count = 0usize;
        for y in 0..h {
            for x in 0..w {
                let (pa, pb) = (a.get(x, y), b.get(x, y));
                for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                    if nx < w && ny < h {
                        let (qa, qb) = (a.get(nx, ny), b.get(nx, ny));
                        for c in 0..3 {
                            grad += ((qa[c] - pa[c]) - (qb[c] - pb[c])).abs();
                            count += 1;
                        }
                    }
                }
            }
        }
        pix + self.gradient_weight * grad / count.max(1) as f64
    }
}

/// Mean of all pairwise distances.
pub fn diversity_of(images: &[RgbImage], distance: &dyn ImageDistance) -> Result<f64> {
    let n = images.len();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += distance.distance(&images[i], &images[j]);
        }
    }
    Ok(sum / (n * (n - 1) / 2) as f64)
}

/// Render `n_latents` scenes from one pose and measure their spread.
#[allow(clippy::too_many_arguments)]
pub fn diversity(
    g: &Generator,
    pose: &DecomposedPose,
    fov_deg: f64,
    resolution: usize,
    n_samples: usize,
    n_latents: usize,
    distance: &dyn ImageDistance,
    rng: &mut impl Rng,
) -> Result<f64> {
    let bundle = generate_patch_rays(pose, fov_deg, 1.0, [0.0, 0.0], resolution)?;
    let images = sample_scenes(g, n_latents, rng)?
        .iter()
        .map(|grid| Ok(render_rays(grid, g.decoder(), &bundle, n_samples)?.colors))
        .collect::<Result<Vec<_>>>()?;
    diversity_of(&images, distance)
}

/// Generated patches drawn the way training draws them: scene, camera from
/// the pose set, scale uniform in `scale_range`, window uniform.
pub fn generated_patches(
    state: &TrainState,
    fov_deg: f64,
    count: usize,
    size: usize,
    scale_range: (f64, f64),
    n_samples: usize,
    rng: &mut impl Rng,
) -> Result<Vec<RgbImage>> {
    let g = &state.generator;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let chunk = (count - out.len()).min(16);
        for grid in sample_scenes(g, chunk, rng)? {
            let cam = draw_camera(&state.poses, &grid, g, state.config.poses.max_attempts, rng)?;
            let s = uniform(scale_range, rng);
            let u0 = sample_window(s, rng)?;
            let bundle = generate_patch_rays(&cam.pose, fov_deg, s, u0, size)?;
            out.push(render_rays(&grid, g.decoder(), &bundle, n_samples)?.colors);
        }
    }
    Ok(out)
}

/// Real patches with a random image, scale and window.
pub fn real_patches(
    data: &TrainData,
    count: usize,
    size: usize,
    scale_range: (f64, f64),
    rng: &mut impl Rng,
) -> Result<Vec<RgbImage>> {
    (0..count)
        .map(|_| {
            let image = &data.images[rng.gen_range(0..data.images.len())];
            let s = uniform(scale_range, rng);
            let u0 = sample_window(s, rng)?;
            crop_real_patch(image, s, u0, size)
        })
        .collect()
}

fn uniform((lo, hi): (f64, f64), rng: &mut impl Rng) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// KID between real and generated patches at the training patch size.
pub fn patch_kid(state: &TrainState, data: &TrainData, embedder: &dyn Embedder, seed: u64) -> Result<f64> {
    let e = &state.config.eval;
    let size = state.config.patch_size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let real = real_patches(data, e.patch_samples, size, e.patch_scale_range, &mut rng)?;
    let fake = generated_patches(state, data.fov_deg, e.patch_samples, size, e.patch_scale_range, e.n_samples, &mut rng)?;
    kid(&EmbeddingSet::embed(embedder, &real)?, &EmbeddingSet::embed(embedder, &fake)?)
}

/// Diversity from the first stored pose.
pub fn pose_diversity(state: &TrainState, fov_deg: f64, distance: &dyn ImageDistance, seed: u64) -> Result<f64> {
    let e = &state.config.eval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    diversity(
        &state.generator,
        &state.poses.poses[0],
        fov_deg,
        e.resolution,
        e.n_samples,
        e.n_diversity,
        distance,
        &mut rng,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub kid: f64,
    pub diversity: f64,
    pub n_eval: usize,
    pub embedder_id: String,
    pub seed: u64,
}

/// Full-view KID against the real images and fixed-pose diversity.
pub fn evaluate_state(state: &TrainState, data: &TrainData, embedder: &dyn Embedder, seed: u64) -> Result<EvalReport> {
    let e = &state.config.eval;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fake = generated_patches(state, data.fov_deg, e.n_eval, e.resolution, (1.0, 1.0), e.n_samples, &mut rng)?;
    let n_real = e.n_eval.min(data.images.len());
    let mut idx: Vec<usize> = (0..data.images.len()).collect();
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    let real: Vec<RgbImage> = idx[..n_real]
        .iter()
        .map(|&i| resize(&data.images[i], e.resolution))
        .collect::<Result<_>>()?;
    let kid = kid(&EmbeddingSet::embed(embedder, &real)?, &EmbeddingSet::embed(embedder, &fake)?)?;
    let diversity = pose_diversity(state, data.fov_deg, &PixelGradientDistance::default(), seed)?;
    Ok(EvalReport {
        kid,
        diversity,
        n_eval: e.n_eval,
        embedder_id: embedder.id(),
        seed,
    })
}

/// Evaluate a checkpoint file.
pub fn evaluate_checkpoint(
    path: &std::path::Path,
    data: &TrainData,
    embedder: &dyn Embedder,
    seed: u64,
) -> Result<EvalReport> {
    let state = crate::harness::checkpoint::load_checkpoint(path)?;
    evaluate_state(&state, data, embedder, seed)
}
