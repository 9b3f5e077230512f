use anyhow::{bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tripatch_core::camera::DecomposedPose;
use tripatch_core::generator::sample_latent;
use tripatch_core::harness::checkpoint::load_checkpoint;
use tripatch_core::harness::config::{load_config, resolved_toml};
use tripatch_core::harness::dataset::{load_dataset, write_dataset};
use tripatch_core::harness::run::train;
use tripatch_core::harness::toy::{render_toy_dataset, ToyCameraConfig, ToySceneSpec};
use tripatch_core::image::{save_depth_png, RgbImage};
use tripatch_core::metrics::{evaluate_state, CommandEmbedder, DownsampleEmbedder, Embedder};
use tripatch_core::render::{render_panorama, render_view};

#[derive(Parser)]
#[command(name = "tripatch", version, about = "Generative triplane radiance fields from a single scene")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the procedural toy room into an image directory.
    MakeData(MakeData),
    /// Train from a TOML configuration.
    Train(Train),
    /// Render panoramas, view grids, depth maps or latent interpolations.
    Generate(Generate),
    /// Write a KID and diversity report for a checkpoint as JSON.
    Evaluate(Evaluate),
}

#[derive(Args)]
struct MakeData {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 32)]
    views: usize,
    #[arg(long, default_value_t = 256)]
    resolution: usize,
    /// Horizontal and vertical field of view in degrees.
    #[arg(long, default_value_t = 65.0)]
    fov: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of camera x and z positions.
    #[arg(long, default_value_t = 0.3)]
    sigma: f64,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Overrides `dataset` from the configuration.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Overrides `output_dir` from the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

#[derive(Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["panorama", "grid", "depth", "interpolate"])))]
struct Generate {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output PNG.
    #[arg(long)]
    out: PathBuf,
    /// Equirectangular panorama from the first stored camera position.
    #[arg(long)]
    panorama: bool,
    /// One row per latent, one column per yaw around the first stored camera.
    #[arg(long)]
    grid: bool,
    /// Colour and 16-bit depth of the first stored camera view.
    #[arg(long)]
    depth: bool,
    /// Render a strip between the latents drawn from two seeds.
    #[arg(long, num_args = 2, value_names = ["Z1", "Z2"])]
    interpolate: Option<Vec<u64>>,
    /// Images in the interpolation strip.
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// Latent seed for the panorama, grid and depth modes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Latents in the grid.
    #[arg(long, default_value_t = 4)]
    count: usize,
    /// Image side (panorama height).
    #[arg(long, default_value_t = 128)]
    resolution: usize,
    #[arg(long, default_value_t = 65.0)]
    fov: f64,
}

#[derive(Args)]
struct Evaluate {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Image directory with the real views.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    embedder: EmbedderArgs,
}

#[derive(Args)]
struct EmbedderArgs {
    /// External program printing one embedding per PNG path argument.
    #[arg(long)]
    embedder_cmd: Option<String>,
}

impl EmbedderArgs {
    fn build(&self) -> Box<dyn Embedder> {
        match &self.embedder_cmd {
            Some(cmd) => {
                let mut parts = cmd.split_whitespace().map(String::from);
                Box::new(CommandEmbedder {
                    program: parts.next().unwrap_or_default(),
                    args: parts.collect(),
                })
            }
            None => Box::new(DownsampleEmbedder::default()),
        }
    }
}

fn make_data(a: &MakeData) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let cams = ToyCameraConfig {
        sigma_xy: a.sigma,
        ..ToyCameraConfig::default()
    };
    let ds = render_toy_dataset(&ToySceneSpec::default(), a.views, a.resolution, a.fov, &cams, &mut rng)?;
    let m = write_dataset(&a.out, &ds.images, ds.fov_deg, "toy")?;
    let poses = a.out.join("cameras.json");
    std::fs::write(&poses, serde_json::to_string_pretty(&ds.poses)?)
        .with_context(|| format!("writing {}", poses.display()))?;
    println!("wrote {} views to {}", m.image_paths.len(), a.out.display());
    Ok(())
}

fn run_train(a: &Train) -> Result<()> {
    let mut rc = load_config(&a.config)?;
    if let Some(d) = &a.dataset {
        rc.dataset = Some(d.clone());
    }
    if let Some(o) = &a.out {
        rc.output_dir = o.clone();
    }
    let Some(dataset) = &rc.dataset else {
        bail!("{}: no dataset given (set `dataset` or pass --dataset)", a.config.display());
    };
    info!("resolved configuration:\n{}", resolved_toml(&rc.train));
    let data = load_dataset(dataset)?.load_images()?;
    let embedder = a.embedder.build();
    let run = train(&rc.train, &data, &rc.output_dir, a.resume.as_deref(), embedder.as_ref())?;
    println!(
        "trained {} iterations; final checkpoint {}",
        run.state.iteration,
        run.final_checkpoint.display()
    );
    Ok(())
}

fn save(image: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    image.save_png(path)?;
    Ok(())
}

fn generate(a: &Generate) -> Result<()> {
    let state = load_checkpoint(&a.checkpoint)?;
    let g = &state.generator;
    let z_dim = g.config().z_dim;
    let latent = |seed: u64| sample_latent(z_dim, &mut ChaCha8Rng::seed_from_u64(seed));
    let pose = state.poses.poses[0];
    let res = a.resolution;
    let image = if a.panorama {
        render_panorama(&g.sample_scene(&latent(a.seed))?, g.decoder(), pose.p, res)?
    } else if a.grid {
        let yaws = [0.0, 90.0, 180.0, 270.0];
        let mut tiles = Vec::new();
        for k in 0..a.count as u64 {
            let grid = g.sample_scene(&latent(a.seed + k))?;
            for yaw in yaws {
                let view = DecomposedPose::yawed(pose.yaw() + f64::to_radians(yaw), pose.p);
                tiles.push(render_view(&grid, g.decoder(), &view, a.fov, res)?.colors);
            }
        }
        RgbImage::grid(&tiles, yaws.len())?
    } else if a.depth {
        let view = render_view(&g.sample_scene(&latent(a.seed))?, g.decoder(), &pose, a.fov, res)?;
        let depth_path = a.out.with_extension("depth.png");
        let sidecar = save_depth_png(&depth_path, &view.depth, res, res)?;
        println!("wrote {} (max depth {})", depth_path.display(), sidecar.max_depth);
        view.colors
    } else if let Some(seeds) = &a.interpolate {
        let (w0, w1) = (g.map_latent(&latent(seeds[0]))?, g.map_latent(&latent(seeds[1]))?);
        let tiles = g
            .interpolate(&w0, &w1, a.steps)?
            .iter()
            .map(|grid| Ok(render_view(grid, g.decoder(), &pose, a.fov, res)?.colors))
            .collect::<Result<Vec<_>>>()?;
        RgbImage::hstack(&tiles)?
    } else {
        unreachable!("clap requires one mode")
    };
    save(&image, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn evaluate(a: &Evaluate) -> Result<()> {
    let state = load_checkpoint(&a.checkpoint)?;
    let data = load_dataset(&a.dataset)?.load_images()?;
    let embedder = a.embedder.build();
    let report = evaluate_state(&state, &data, embedder.as_ref(), a.seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        std::fs::write(out, &json).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::MakeData(a) => make_data(a),
        Command::Train(a) => run_train(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their source in the message
            let mut line = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !line.contains(&cause) {
                    line = format!("{line}: {cause}");
                }
            }
            eprintln!("tripatch: {line}");
            ExitCode::FAILURE
        }
    }
}
