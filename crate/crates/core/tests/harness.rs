use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;
use tripatch_core::camera::DecomposedPose;
use tripatch_core::discriminator::DiscriminatorConfig;
use tripatch_core::generator::GeneratorConfig;
use tripatch_core::harness::checkpoint::{
    check_compatible, checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, FORMAT_VERSION,
};
use tripatch_core::harness::config::{load_config, parse_config, resolved_toml};
use tripatch_core::harness::dataset::{load_dataset, write_dataset, DEFAULT_FOV_DEG, SIDECAR};
use tripatch_core::harness::run::{checkpoint_path, train, METRICS_FILE};
use tripatch_core::harness::toy::{
    render_toy_dataset, render_toy_view, toy_field, ToyCameraConfig, ToyField, ToySceneSpec,
};
use tripatch_core::image::RgbImage;
use tripatch_core::metrics::{evaluate_checkpoint, DownsampleEmbedder};
use tripatch_core::render::render_view;
use tripatch_core::trainer::{
    train_step, DiscriminatorLoss, EvalConfig, PoseConfig, TrainConfig, TrainData, TrainState,
};
use tripatch_core::Error;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        seed: 5,
        epochs: 2,
        iterations_per_epoch: 3,
        batch_size: 2,
        n_samples: 8,
        poses: PoseConfig {
            count: 6,
            ..PoseConfig::default()
        },
        generator: GeneratorConfig::small(8, 4),
        discriminator: DiscriminatorConfig::small(8),
        checkpoint_every: 3,
        metrics_every: 3,
        eval: EvalConfig {
            n_eval: 4,
            resolution: 8,
            patch_samples: 4,
            n_diversity: 3,
            n_samples: 8,
            ..EvalConfig::default()
        },
        ..TrainConfig::default()
    }
}

fn toy_images(n: usize, res: usize, seed: u64) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    render_toy_dataset(&ToySceneSpec::default(), n, res, 65.0, &ToyCameraConfig::default(), &mut rng)
        .unwrap()
        .images
}

#[test]
fn checkpoint_round_trip_preserves_renders() {
    let data = TrainData::new(toy_images(3, 16, 1), 65.0).unwrap();
    let mut state = TrainState::new(tiny_config()).unwrap();
    train_step(&mut state, &data).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.tpck");
    save_checkpoint(&state, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.iteration, 1);
    assert_eq!(back.config, state.config);
    assert_eq!(checkpoint_bytes(&back), checkpoint_bytes(&state));
    let pose = DecomposedPose::from_angles(0.0, 0.4, 0.0, [0.1, 0.0, -0.1]);
    let grid = |s: &TrainState| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        tripatch_core::trainer::sample_scenes(&s.generator, 1, &mut rng).unwrap().remove(0)
    };
    let a = render_view(&grid(&state), state.generator.decoder(), &pose, 65.0, 6).unwrap();
    let b = render_view(&grid(&back), back.generator.decoder(), &pose, 65.0, 6).unwrap();
    assert!(a.colors.data().iter().zip(b.colors.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let state = TrainState::new(tiny_config()).unwrap();
    let bytes = checkpoint_bytes(&state);
    assert!(matches!(checkpoint_from_bytes(&bytes[..bytes.len() / 2]), Err(Error::Corrupt(_))));
    assert!(matches!(checkpoint_from_bytes(&bytes[..3]), Err(Error::Corrupt(_))));
    let mut flipped = bytes.clone();
    let mid = bytes.len() - 100;
    flipped[mid] ^= 1;
    assert!(matches!(checkpoint_from_bytes(&flipped), Err(Error::Corrupt(_))));
    let mut other = bytes.clone();
    other[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert!(matches!(
        checkpoint_from_bytes(&other),
        Err(Error::VersionMismatch { found, expected }) if found == FORMAT_VERSION + 1 && expected == FORMAT_VERSION
    ));
    let mut wider = tiny_config();
    wider.generator = GeneratorConfig::small(16, 4);
    assert!(matches!(check_compatible(&state.config, &wider), Err(Error::ConfigMismatch(_))));
    let mut longer = tiny_config();
    longer.epochs = 50;
    longer.learning_rate = 1e-4;
    assert!(check_compatible(&state.config, &longer).is_ok());
}

#[test]
fn dataset_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let images: Vec<RgbImage> = (0..100).map(|k| RgbImage::filled(8, 8, [k as f64 / 100.0, 0.5, 0.25])).collect();
    let m = write_dataset(dir.path(), &images, 70.0, "room").unwrap();
    assert_eq!(m.image_paths.len(), 100);
    let loaded = load_dataset(dir.path()).unwrap();
    assert_eq!(loaded, m);
    let data = loaded.load_images().unwrap();
    assert_eq!(data.images.len(), 100);
    assert_eq!(data.fov_deg, 70.0);

    std::fs::remove_file(dir.path().join(SIDECAR)).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap().fov_deg, DEFAULT_FOV_DEG);

    let odd = dir.path().join("view_050.png");
    RgbImage::filled(9, 9, [0.1; 3]).save_png(&odd).unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Ingestion { path, reason }) => {
            assert_eq!(path, odd);
            assert!(reason.contains("9x9"));
        }
        other => panic!("expected an ingestion error, got {other:?}"),
    }

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(empty.path()), Err(Error::Ingestion { .. })));
    std::fs::write(empty.path().join("notes.txt"), "x").unwrap();
    assert!(matches!(load_dataset(empty.path()), Err(Error::Ingestion { .. })));
}

#[test]
fn config_files() {
    let origin = Path::new("/data/runs/exp.toml");
    let rc = parse_config(
        "preset = \"smoke\"\ndataset = \"toy\"\nlearning_rate = 1e-3\n[poses]\ncount = 50\n",
        origin,
    )
    .unwrap();
    assert_eq!(rc.dataset.as_deref(), Some(Path::new("/data/runs/toy")));
    assert_eq!(rc.train.learning_rate, 1e-3);
    assert_eq!(rc.train.poses.count, 50);
    assert_eq!(rc.train.poses.sigma_xy, TrainConfig::smoke().poses.sigma_xy);
    assert_eq!(rc.train.generator, TrainConfig::smoke().generator);

    let full = parse_config("", origin).unwrap();
    assert_eq!(full.train, TrainConfig::default());
    assert_eq!(full.train.learning_rate, 2e-3);
    assert_eq!(full.train.lambda_r1, 0.5);
    assert_eq!(full.train.lambda_recon, 50.0);
    assert_eq!(full.train.iterations_per_epoch, 1000);

    let lit = parse_config("d_loss = \"literal\"", origin).unwrap();
    assert_eq!(lit.train.d_loss, DiscriminatorLoss::Literal);

    assert!(matches!(parse_config("batch_size = 0", origin), Err(Error::Config(_))));
    assert!(matches!(parse_config("lambda_r1 = -1.0", origin), Err(Error::Config(_))));
    assert!(matches!(parse_config("preset = \"huge\"", origin), Err(Error::Config(_))));
    assert!(matches!(parse_config("epochs = \"many\"", origin), Err(Error::Config(_))));
    assert!(matches!(parse_config("batchsize = 4", origin), Err(Error::Config(_))));
    assert!(matches!(load_config(Path::new("/nonexistent/x.toml")), Err(Error::Io { .. })));

    // the resolved dump parses back to the same configuration
    let again = parse_config(&resolved_toml(&rc.train), origin).unwrap();
    assert_eq!(again.train, rc.train);
}

#[test]
fn toy_scene_first_hit_matches_slab_oracle() {
    let spec = ToySceneSpec::default();
    let field = ToyField(&spec);
    // from the centre, looking along +x, −x, +z and −z
    for (yaw, wall) in [(90f64, 0), (-90.0, 1), (0.0, 2), (180.0, 3)] {
        let pose = DecomposedPose::from_angles(0.0, yaw.to_radians(), 0.0, [0.0, 0.0, 0.0]);
        let img = render_toy_view(&field, &pose, 65.0, 1).unwrap();
        let c = img.get(0, 0);
        for k in 0..3 {
            assert!((c[k] - spec.wall_colors[wall][k]).abs() <= 1e-3, "wall {wall}: {c:?}");
        }
    }
    assert_eq!(toy_field(&spec, [0.0, 0.0, 0.0]).1, 0.0);
    assert_eq!(toy_field(&spec, [0.95, 0.0, 0.0]), (spec.wall_colors[0], spec.density));
    assert_eq!(toy_field(&spec, [0.0, -0.7, 0.0]).0, spec.floor_color);
}

#[test]
fn toy_dataset_is_reproducible_with_free_cameras() {
    let spec = ToySceneSpec::default();
    let mut r1 = ChaCha8Rng::seed_from_u64(17);
    let mut r2 = ChaCha8Rng::seed_from_u64(17);
    let cams = ToyCameraConfig::default();
    let a = render_toy_dataset(&spec, 100, 8, 65.0, &cams, &mut r1).unwrap();
    let b = render_toy_dataset(&spec, 100, 8, 65.0, &cams, &mut r2).unwrap();
    assert_eq!(a.images.len(), 100);
    for p in &a.poses {
        assert_eq!(toy_field(&spec, p.p).1, 0.0);
    }
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = write_dataset(da.path(), &a.images, a.fov_deg, "toy").unwrap();
    write_dataset(db.path(), &b.images, b.fov_deg, "toy").unwrap();
    for p in &ma.image_paths {
        let q = db.path().join(p.file_name().unwrap());
        assert_eq!(std::fs::read(p).unwrap(), std::fs::read(q).unwrap());
    }
}

#[test]
fn training_run_writes_logs_checkpoints_and_resumes() {
    let data = TrainData::new(toy_images(4, 16, 2), 65.0).unwrap();
    let out = tempfile::tempdir().unwrap();
    let config = tiny_config();
    let emb = DownsampleEmbedder { side: 4 };
    let run = train(&config, &data, out.path(), None, &emb).unwrap();
    assert_eq!(run.state.iteration, 6);
    assert!(checkpoint_path(out.path(), 3).exists());
    assert!(!checkpoint_path(out.path(), 6).exists());
    assert!(run.final_checkpoint.exists());
    let cfg = load_config(&out.path().join("config.toml")).unwrap();
    assert_eq!(cfg.train, config);

    let read_rows = || {
        let mut rdr = csv::Reader::from_path(out.path().join(METRICS_FILE)).unwrap();
        let headers = rdr.headers().unwrap().clone();
        let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
        (headers, rows)
    };
    let (headers, rows) = read_rows();
    let cols: Vec<&str> = headers.iter().collect();
    assert_eq!(cols[..2], ["epoch", "iteration"]);
    assert!(cols.contains(&"kid") && cols.contains(&"diversity") && cols.contains(&"d_r1"));
    assert_eq!(rows.len(), 6);
    let kid_col = cols.iter().position(|c| *c == "kid").unwrap();
    let with_kid: Vec<usize> = (0..6).filter(|&i| !rows[i][kid_col].is_empty()).collect();
    assert_eq!(with_kid, vec![2, 5]);

    // resuming a longer run appends to the same log
    let longer = TrainConfig { epochs: 3, ..config.clone() };
    let resumed = train(&longer, &data, out.path(), Some(&run.final_checkpoint), &emb).unwrap();
    assert_eq!(resumed.state.iteration, 9);
    let (_, rows) = read_rows();
    assert_eq!(rows.len(), 9);
    assert_eq!(&rows[6][1], "6");

    let a = evaluate_checkpoint(&resumed.final_checkpoint, &data, &emb, 11).unwrap();
    let b = evaluate_checkpoint(&resumed.final_checkpoint, &data, &emb, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.embedder_id, "downsample4");
    assert!(a.kid.is_finite() && a.diversity >= 0.0);
}

#[test]
fn incompatible_resume_is_refused() {
    let data = TrainData::new(toy_images(2, 16, 3), 65.0).unwrap();
    let out = tempfile::tempdir().unwrap();
    let config = TrainConfig { epochs: 1, metrics_every: 0, checkpoint_every: 0, ..tiny_config() };
    let run = train(&config, &data, out.path(), None, &DownsampleEmbedder::default()).unwrap();
    let other = TrainConfig {
        discriminator: DiscriminatorConfig::small(16),
        ..config
    };
    assert!(matches!(
        train(&other, &data, out.path(), Some(&run.final_checkpoint), &DownsampleEmbedder::default()),
        Err(Error::ConfigMismatch(_))
    ));
}
