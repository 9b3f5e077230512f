//! Single-file training checkpoints.
//!
//! Layout: the magic `TPCK`, a little-endian `u32` format version, a `u64`
//! header length, a JSON header, the raw little-endian `f64` tensor payload
//! in header order, and a SHA-256 digest of everything before it.

use crate::camera::PoseSet;
use crate::error::{Error, Result};
use crate::trainer::{TrainConfig, TrainState};
use byteorder::{ByteOrder, LittleEndian};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use tripatch_autograd::{Adam, Tensor};

pub const MAGIC: &[u8; 4] = b"TPCK";
pub const FORMAT_VERSION: u32 = 1;
const PREFIX: usize = 4 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    /// `u128` word position as a decimal string.
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    iteration: usize,
    rng: RngState,
    poses: PoseSet,
    /// Step counts of the generator, discriminator and pose optimizers.
    optimizer_steps: [u64; 3],
    tensors: Vec<TensorEntry>,
}

const OPTIMIZERS: [&str; 3] = ["g", "d", "pose"];

fn optimizers(state: &TrainState) -> [&Adam; 3] {
    [&state.g_opt, &state.d_opt, &state.pose_opt]
}

fn collect_tensors(state: &TrainState) -> Vec<(String, Tensor)> {
    let mut out: Vec<(String, Tensor)> = state
        .generator
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (format!("generator/{n}"), t))
        .collect();
    out.extend(
        state
            .discriminator
            .store()
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (format!("discriminator/{n}"), t)),
    );
    for (name, opt) in OPTIMIZERS.iter().zip(optimizers(state)) {
        for (i, m) in opt.first_moments().iter().enumerate() {
            out.push((format!("adam.{name}.m/{i}"), m.clone()));
        }
        for (i, v) in opt.second_moments().iter().enumerate() {
            out.push((format!("adam.{name}.v/{i}"), v.clone()));
        }
    }
    out
}

/// Serialize a training state.
pub fn checkpoint_bytes(state: &TrainState) -> Vec<u8> {
    let tensors = collect_tensors(state);
    let header = Header {
        config: state.config.clone(),
        iteration: state.iteration,
        rng: RngState {
            seed: state.rng.get_seed(),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
        poses: state.poses.clone(),
        optimizer_steps: optimizers(state).map(|o| o.step_count()),
        tensors: tensors
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let numel: usize = tensors.iter().map(|(_, t)| t.len()).sum();
    let mut out = Vec::with_capacity(PREFIX + json.len() + 8 * numel + DIGEST);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    let start = out.len();
    out.resize(start + 8 * numel, 0);
    let mut pos = start;
    for (_, t) in &tensors {
        LittleEndian::write_f64_into(t.data(), &mut out[pos..pos + 8 * t.len()]);
        pos += 8 * t.len();
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, checkpoint_bytes(state)).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn take(groups: &mut std::collections::VecDeque<(String, Tensor)>, prefix: &str) -> Vec<(String, Tensor)> {
    let mut out = Vec::new();
    while let Some((name, _)) = groups.front() {
        match name.strip_prefix(prefix) {
            Some(rest) => {
                let rest = rest.to_string();
                let (_, t) = groups.pop_front().unwrap();
                out.push((rest, t));
            }
            None => break,
        }
    }
    out
}

/// Rebuild a training state from checkpoint bytes.
pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<TrainState> {
    if bytes.len() < PREFIX + DIGEST {
        return Err(Error::Corrupt(format!("file too short ({} bytes)", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Corrupt("missing TPCK magic".into()));
    }
    let version = LittleEndian::read_u32(&bytes[4..8]);
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let header_len = LittleEndian::read_u64(&bytes[8..16]) as usize;
    let body_end = bytes.len() - DIGEST;
    if header_len > body_end - PREFIX {
        return Err(Error::Corrupt("truncated header".into()));
    }
    if Sha256::digest(&bytes[..body_end]).as_slice() != &bytes[body_end..] {
        return Err(Error::Corrupt("checksum mismatch (truncated or damaged file)".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[PREFIX..PREFIX + header_len])
        .map_err(|e| Error::Corrupt(format!("unreadable header: {e}")))?;
    let payload = &bytes[PREFIX + header_len..body_end];
    let numel: usize = header.tensors.iter().map(|t| t.shape.iter().product::<usize>()).sum();
    if payload.len() != 8 * numel {
        return Err(Error::Corrupt(format!(
            "payload has {} bytes, header describes {}",
            payload.len(),
            8 * numel
        )));
    }
    let mut groups = std::collections::VecDeque::new();
    let mut pos = 0;
    for entry in &header.tensors {
        let n: usize = entry.shape.iter().product();
        let mut data = vec![0.0; n];
        LittleEndian::read_f64_into(&payload[pos..pos + 8 * n], &mut data);
        pos += 8 * n;
        groups.push_back((entry.name.clone(), Tensor::new(&entry.shape, data)));
    }

    let mut state = TrainState::new(header.config.clone())?;
    state.generator.load_tensors(&take(&mut groups, "generator/"))?;
    state.discriminator.store_mut().load(&take(&mut groups, "discriminator/"))?;
    let adam = header.config.adam();
    let mut opts = Vec::new();
    for (name, step) in OPTIMIZERS.iter().zip(header.optimizer_steps) {
        let m: Vec<Tensor> = take(&mut groups, &format!("adam.{name}.m/")).into_iter().map(|(_, t)| t).collect();
        let v: Vec<Tensor> = take(&mut groups, &format!("adam.{name}.v/")).into_iter().map(|(_, t)| t).collect();
        if m.len() != v.len() {
            return Err(Error::Corrupt(format!("optimizer {name} moments are incomplete")));
        }
        opts.push(Adam::from_state(adam, step, m, v));
    }
    if !groups.is_empty() {
        return Err(Error::Corrupt(format!("unexpected tensor {}", groups[0].0)));
    }
    let fresh = [&state.g_opt, &state.d_opt, &state.pose_opt];
    for (name, (old, new)) in OPTIMIZERS.iter().zip(fresh.iter().zip(&opts)) {
        let shapes = |a: &Adam| a.first_moments().iter().map(|t| t.shape().to_vec()).collect::<Vec<_>>();
        if shapes(old) != shapes(new) {
            return Err(Error::ConfigMismatch(format!("optimizer {name} state has the wrong shapes")));
        }
    }
    let mut opts = opts.into_iter();
    state.g_opt = opts.next().unwrap();
    state.d_opt = opts.next().unwrap();
    state.pose_opt = opts.next().unwrap();
    state.poses = header.poses;
    state.iteration = header.iteration;
    let mut rng = ChaCha8Rng::from_seed(header.rng.seed);
    rng.set_stream(header.rng.stream);
    let word_pos: u128 = header
        .rng
        .word_pos
        .parse()
        .map_err(|_| Error::Corrupt("bad RNG position".into()))?;
    rng.set_word_pos(word_pos);
    state.rng = rng;
    Ok(state)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes)
}

/// Load a checkpoint and require its model shapes to match `config`.
pub fn load_checkpoint_for(path: &Path, config: &TrainConfig) -> Result<TrainState> {
    let state = load_checkpoint(path)?;
    check_compatible(&state.config, config)?;
    Ok(state)
}

pub fn check_compatible(stored: &TrainConfig, wanted: &TrainConfig) -> Result<()> {
    if stored.generator != wanted.generator {
        return Err(Error::ConfigMismatch("generator architecture differs".into()));
    }
    if stored.discriminator != wanted.discriminator {
        return Err(Error::ConfigMismatch("discriminator architecture differs".into()));
    }
    if stored.poses.count != wanted.poses.count {
        return Err(Error::ConfigMismatch(format!(
            "checkpoint has {} poses, configuration wants {}",
            stored.poses.count, wanted.poses.count
        )));
    }
    Ok(())
}
