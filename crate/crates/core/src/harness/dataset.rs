//! Image directories with a `dataset.json` sidecar.

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::trainer::TrainData;
use log::warn;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SIDECAR: &str = "dataset.json";
pub const DEFAULT_FOV_DEG: f64 = 65.0;

/// Contents of the sidecar file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub fov_deg: f64,
    pub resolution: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_name: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub image_paths: Vec<PathBuf>,
    pub resolution: usize,
    pub fov_deg: f64,
    pub scene_name: String,
}

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Scan `dir` for PNG images of one square resolution.
pub fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_png(&path) {
            paths.push(path);
        }
    }
    paths.sort();
    let first = paths.first().ok_or_else(|| Error::Ingestion {
        path: dir.to_path_buf(),
        reason: "directory contains no PNG images".into(),
    })?;
    let dims = |p: &Path| {
        image::image_dimensions(p).map_err(|e| Error::Ingestion {
            path: p.to_path_buf(),
            reason: e.to_string(),
        })
    };
    let (w, h) = dims(first)?;
    if w != h {
        return Err(Error::Ingestion {
            path: first.clone(),
            reason: format!("image is {w}x{h}; square images are required"),
        });
    }
    for p in &paths[1..] {
        let d = dims(p)?;
        if d != (w, h) {
            return Err(Error::Ingestion {
                path: p.clone(),
                reason: format!("image is {}x{}, expected {w}x{h}", d.0, d.1),
            });
        }
    }
    let sidecar = dir.join(SIDECAR);
    let meta: Option<DatasetMeta> = if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        Some(serde_json::from_str(&text).map_err(|e| Error::Ingestion {
            path: sidecar.clone(),
            reason: e.to_string(),
        })?)
    } else {
        None
    };
    let fov_deg = match &meta {
        Some(m) => m.fov_deg,
        None => {
            warn!(
                "{} has no {SIDECAR}; assuming a {DEFAULT_FOV_DEG} degree field of view",
                dir.display()
            );
            DEFAULT_FOV_DEG
        }
    };
    if !(fov_deg > 0.0 && fov_deg < 180.0) {
        return Err(Error::Ingestion {
            path: sidecar,
            reason: format!("field of view {fov_deg} outside (0, 180)"),
        });
    }
    if let Some(m) = &meta {
        if m.resolution != w as usize {
            return Err(Error::Ingestion {
                path: sidecar,
                reason: format!("sidecar resolution {} but images are {w}x{h}", m.resolution),
            });
        }
    }
    let scene_name = meta
        .and_then(|m| m.scene_name)
        .or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "scene".into());
    Ok(DatasetManifest {
        image_paths: paths,
        resolution: w as usize,
        fov_deg,
        scene_name,
    })
}

impl DatasetManifest {
    pub fn load_images(&self) -> Result<TrainData> {
        let images = self
            .image_paths
            .iter()
            .map(|p| RgbImage::load(p))
            .collect::<Result<Vec<_>>>()?;
        TrainData::new(images, self.fov_deg)
    }
}

/// Write `view_NNN.png` files and the sidecar.
pub fn write_dataset(dir: &Path, images: &[RgbImage], fov_deg: f64, scene_name: &str) -> Result<DatasetManifest> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("no images to write".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::with_capacity(images.len());
    for (i, im) in images.iter().enumerate() {
        let p = dir.join(format!("view_{i:03}.png"));
        im.save_png(&p)?;
        paths.push(p);
    }
    let meta = DatasetMeta {
        fov_deg,
        resolution: first.width(),
        scene_name: Some(scene_name.to_string()),
    };
    let sidecar = dir.join(SIDECAR);
    let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))?;
    Ok(DatasetManifest {
        image_paths: paths,
        resolution: first.width(),
        fov_deg,
        scene_name: scene_name.to_string(),
    })
}
