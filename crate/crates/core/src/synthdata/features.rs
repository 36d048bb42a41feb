use std::sync::Arc;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::motionvae::{FrameFeatures, LocalFeatureMap};
use crate::nn::posenc::scalar_embedding;
use crate::skeleton::{Camera, Keypoints};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub global_dim: usize,
    pub local_dim: usize,
    /// Standard deviation of the additive Gaussian feature noise.
    pub noise: f64,
    pub base_frequency: f64,
    pub octaves: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            global_dim: 512,
            local_dim: 119,
            noise: 0.01,
            base_frequency: 2.0,
            octaves: 4,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x51_7cc1_b727_220a, |h, w| splitmix(h ^ w))
}

fn noise_vec(seed: u64, len: usize, sigma: f64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; len];
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

fn normalized(p: &Vector2<f64>, cam: &Camera) -> Vector2<f64> {
    Vector2::new(p.x - cam.principal[0], p.y - cam.principal[1]) / cam.max_side()
}

/// Global feature of a frame: embedding of the normalized keypoints plus seeded noise.
pub fn global_feature(
    keypoints: &Keypoints,
    cam: &Camera,
    cfg: &FeatureConfig,
    seed: u64,
    frame: usize,
) -> Vec<f64> {
    let flat: Vec<f64> = keypoints
        .iter()
        .flat_map(|p| {
            let n = normalized(p, cam);
            [n.x, n.y]
        })
        .collect();
    let mut v = scalar_embedding(&flat, cfg.global_dim, cfg.base_frequency, cfg.octaves);
    for (x, e) in v.iter_mut().zip(noise_vec(
        mix(&[seed, frame as u64, 0]),
        cfg.global_dim,
        cfg.noise,
    )) {
        *x += e;
    }
    v
}

/// Procedural local feature field: embedding of the query pixel and its offset
/// to the nearest ground-truth joint, plus noise that is a deterministic
/// function of the seed and the query location.
#[derive(Debug, Clone)]
pub struct SyntheticLocalField {
    pub keypoints: Keypoints,
    pub camera: Camera,
    pub config: FeatureConfig,
    pub seed: u64,
    pub frame: usize,
}

impl LocalFeatureMap for SyntheticLocalField {
    fn dim(&self) -> usize {
        self.config.local_dim
    }

    fn sample(&self, pixel: &Vector2<f64>) -> Vec<f64> {
        let nearest = self
            .keypoints
            .iter()
            .min_by(|a, b| {
                (*a - pixel)
                    .norm_squared()
                    .total_cmp(&(*b - pixel).norm_squared())
            })
            .copied()
            .unwrap_or(*pixel);
        let p = normalized(pixel, &self.camera);
        let d = (nearest - pixel) / self.camera.max_side();
        let values = [p.x, p.y, 4.0 * d.x, 4.0 * d.y];
        let mut v = scalar_embedding(
            &values,
            self.config.local_dim,
            self.config.base_frequency,
            self.config.octaves,
        );
        let key = mix(&[
            self.seed,
            self.frame as u64,
            1,
            pixel.x.to_bits(),
            pixel.y.to_bits(),
        ]);
        for (x, e) in v
            .iter_mut()
            .zip(noise_vec(key, self.config.local_dim, self.config.noise))
        {
            *x += e;
        }
        v
    }
}

/// Features of one frame, deterministic given `(keypoints, seed, frame)`.
pub fn render_synthetic_features(
    keypoints: &Keypoints,
    cam: &Camera,
    cfg: &FeatureConfig,
    seed: u64,
    frame: usize,
) -> FrameFeatures {
    FrameFeatures {
        global: global_feature(keypoints, cam, cfg, seed, frame),
        local: Arc::new(SyntheticLocalField {
            keypoints: keypoints.clone(),
            camera: *cam,
            config: *cfg,
            seed,
            frame,
        }),
    }
}

pub(crate) fn sequence_seed(seed: u64, index: u64, attempt: u64) -> u64 {
    mix(&[seed, index, attempt])
}
