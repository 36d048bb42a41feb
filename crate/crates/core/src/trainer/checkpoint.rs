use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{Phase, TrainConfig, TrainState};
use crate::container::{ArrayData, ArrayFile};
use crate::error::{Error, Result};
use crate::motionvae::MotionModel;
use crate::nn::Adam;

pub const CHECKPOINT_FILE: &str = "state.qma";
pub const PSEUDO_GT_FILE: &str = "pseudo_gt.qma";

/// SHA-256 of the canonical JSON encoding of a configuration.
pub fn config_digest(cfg: &TrainConfig) -> Result<[u8; 32]> {
    Ok(Sha256::digest(serde_json::to_vec(cfg)?).into())
}

fn matrix(f: &ArrayFile, name: &str) -> Result<Array2<f64>> {
    let (shape, data) = f.f64(name)?;
    if shape.len() != 2 {
        return Err(Error::format(None, format!("{name} is not 2-D")));
    }
    Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
        .map_err(|e| Error::format(None, e.to_string()))
}

/// Writes parameters, optimizer moments, RNG position, progress counters and
/// the configuration with its digest.
pub fn save_checkpoint(path: &Path, state: &TrainState, cfg: &TrainConfig) -> Result<()> {
    let mut f = ArrayFile::new();
    let json = serde_json::to_vec(cfg)?;
    let digest: [u8; 32] = Sha256::digest(&json).into();
    f.push("config", &[json.len()], ArrayData::U8(json))?;
    f.push("config_sha256", &[32], ArrayData::U8(digest.to_vec()))?;
    f.push(
        "progress",
        &[4],
        ArrayData::U64(vec![
            state.phase.number() as u64,
            state.epoch as u64,
            state.step,
            state.optimizer.step,
        ]),
    )?;
    let word = state.rng.get_word_pos();
    f.push(
        "rng/seed",
        &[32],
        ArrayData::U8(state.rng.get_seed().to_vec()),
    )?;
    f.push(
        "rng/position",
        &[3],
        ArrayData::U64(vec![
            state.rng.get_stream(),
            word as u64,
            (word >> 64) as u64,
        ]),
    )?;
    let store = &state.model.store;
    for (i, (name, value)) in store.iter().enumerate() {
        let shape = [value.nrows(), value.ncols()];
        f.push_f64(
            format!("param/{name}"),
            &shape,
            value.iter().copied().collect(),
        )?;
        let m = &state.optimizer.first_moment[i];
        let v = &state.optimizer.second_moment[i];
        f.push_f64(
            format!("adam_m/{name}"),
            &shape,
            m.iter().copied().collect(),
        )?;
        f.push_f64(
            format!("adam_v/{name}"),
            &shape,
            v.iter().copied().collect(),
        )?;
    }
    f.write(path)
}

/// Reads a checkpoint, verifying the stored configuration against its digest.
pub fn load_checkpoint(path: &Path) -> Result<(TrainState, TrainConfig)> {
    let f = ArrayFile::read(path)?;
    let bad = |reason: String| Error::format(Some(path.to_path_buf()), reason);
    let (_, json) = f.u8("config")?;
    let (_, digest) = f.u8("config_sha256")?;
    if Sha256::digest(json).as_slice() != digest {
        return Err(bad("configuration does not match its recorded hash".into()));
    }
    let cfg: TrainConfig = serde_json::from_slice(json)?;
    cfg.validate()?;
    let (_, progress) = f.u64("progress")?;
    if progress.len() != 4 {
        return Err(bad("progress record must hold 4 values".into()));
    }
    let phase = Phase::from_number(progress[0] as u8)?;

    let mut model = MotionModel::new(cfg.model.clone(), cfg.seed)?;
    let names: Vec<String> = model.store.iter().map(|(n, _)| n.to_string()).collect();
    let params = names
        .iter()
        .map(|n| matrix(&f, &format!("param/{n}")))
        .collect::<Result<Vec<_>>>()?;
    model
        .store
        .load_from(names.iter().map(String::as_str).zip(params))?;
    let mut optimizer = Adam::new(cfg.optimizer, &model.store);
    optimizer.step = progress[3];
    for (i, n) in names.iter().enumerate() {
        let m = matrix(&f, &format!("adam_m/{n}"))?;
        let v = matrix(&f, &format!("adam_v/{n}"))?;
        if m.dim() != optimizer.first_moment[i].dim() || v.dim() != optimizer.second_moment[i].dim()
        {
            return Err(bad(format!("optimizer state for {n} has the wrong shape")));
        }
        optimizer.first_moment[i] = m;
        optimizer.second_moment[i] = v;
    }

    let (_, seed) = f.u8("rng/seed")?;
    let (_, pos) = f.u64("rng/position")?;
    if seed.len() != 32 || pos.len() != 3 {
        return Err(bad("malformed RNG state".into()));
    }
    let mut rng = ChaCha8Rng::from_seed(seed.try_into().expect("32 bytes"));
    rng.set_stream(pos[0]);
    rng.set_word_pos(pos[1] as u128 | ((pos[2] as u128) << 64));

    let state = TrainState {
        model,
        optimizer,
        rng,
        phase,
        epoch: progress[1] as usize,
        step: progress[2],
    };
    Ok((state, cfg))
}
