#![allow(dead_code)]

pub mod oracles;

use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{Vector2, Vector3};
use quadmotion::motionvae::{FrameFeatures, LocalFeatureMap, ModelConfig};
use quadmotion::nn::ParamStore;
use quadmotion::skeleton::{quadruped, Camera, Pose, Skeleton};
use quadmotion::synthdata::{
    generate_gait_sequence, FeatureConfig, GaitKind, GaitParams, SequenceRecord,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small branching skeleton with `n ≥ 2` joints.
pub fn small_skeleton(n: usize) -> Skeleton {
    let mut rest = vec![Vector3::zeros()];
    let mut parents = vec![None];
    for j in 1..n {
        let parent = if j >= 3 { j / 2 } else { j - 1 };
        let offset = Vector3::new(
            0.4 + 0.05 * j as f64,
            0.3 * ((j % 3) as f64 - 1.0),
            0.1 * j as f64,
        );
        rest.push(rest[parent] + offset);
        parents.push(Some(parent));
    }
    Skeleton::new(
        (0..n).map(|j| format!("j{j}")).collect(),
        rest,
        parents,
        vec![0.1; n],
    )
    .unwrap()
}

/// Smoothly varying local feature field.
#[derive(Debug, Clone)]
pub struct WaveMap {
    pub dim: usize,
    pub phase: f64,
}

impl LocalFeatureMap for WaveMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn sample(&self, p: &Vector2<f64>) -> Vec<f64> {
        (0..self.dim)
            .map(|c| (0.07 * (c + 1) as f64 * p.x + 0.05 * p.y + self.phase + c as f64).sin())
            .collect()
    }
}

pub fn random_features<R: Rng>(
    rng: &mut R,
    cfg: &ModelConfig,
    frames: usize,
) -> Vec<FrameFeatures> {
    (0..frames)
        .map(|_| FrameFeatures {
            global: (0..cfg.global_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
            local: Arc::new(WaveMap {
                dim: cfg.local_dim,
                phase: rng.random_range(0.0..6.0),
            }),
        })
        .collect()
}

/// Adds uniform noise to every parameter so zero-initialized layers carry gradient.
pub fn perturb<R: Rng>(store: &mut ParamStore, rng: &mut R, scale: f64) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        store
            .value_mut(id)
            .mapv_inplace(|v| v + rng.random_range(-scale..scale));
    }
}

pub fn random_pose<R: Rng>(rng: &mut R, bones: usize, scale: f64) -> Pose {
    let p: Vec<f64> = (0..6 + 3 * bones)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Pose::from_params(&p).unwrap()
}

pub fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden_sequence.qma")
}

/// A fixed record whose serialized bytes are checked into the repository.
pub fn golden_record() -> SequenceRecord {
    let skel = quadruped();
    let cam = Camera::centered(4.0, 8, 8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let params = GaitParams::sample(GaitKind::Gallop, &skel, 0.01, &mut rng);
    let cfg = FeatureConfig {
        global_dim: 6,
        local_dim: 3,
        ..FeatureConfig::default()
    };
    let mut rec = generate_gait_sequence(&skel, &params, 2, &cam, &cfg, &mut rng).unwrap();
    rec.id = "golden".into();
    rec
}
