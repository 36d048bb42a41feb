//! Procedural quadruped gait corpus, synthetic image features, preprocessing
//! filters and dataset persistence.

mod features;
mod filters;
mod io;

use std::f64::consts::{PI, TAU};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motionvae::FrameFeatures;
use crate::skeleton::rotation::rodrigues;
use crate::skeleton::{
    keypoints2d, quadruped, skeleton_mask, Camera, Keypoints, Mask, MotionSequence, Pose, Skeleton,
};

pub use features::{global_feature, render_synthetic_features, FeatureConfig, SyntheticLocalField};
pub use filters::{
    calibrate_motion_threshold, filter_low_motion_frames, filter_overlapping_masks,
    preprocess_clip, smooth_bounding_boxes,
};
pub use io::{
    read_dataset, read_manifest, read_sequence, write_dataset, write_sequence, DatasetManifest,
    ManifestEntry, MeshReference, FORMAT_VERSION, MANIFEST_FILE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaitKind {
    Walk,
    Trot,
    Gallop,
    Idle,
    Graze,
}

impl GaitKind {
    pub const ALL: [GaitKind; 5] = [
        GaitKind::Walk,
        GaitKind::Trot,
        GaitKind::Gallop,
        GaitKind::Idle,
        GaitKind::Graze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            GaitKind::Walk => "walk",
            GaitKind::Trot => "trot",
            GaitKind::Gallop => "gallop",
            GaitKind::Idle => "idle",
            GaitKind::Graze => "graze",
        }
    }

    pub fn from_index(i: u8) -> Result<Self> {
        Self::ALL
            .get(i as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown gait index {i}")))
    }

    pub fn index(self) -> u8 {
        Self::ALL.iter().position(|k| *k == self).expect("listed") as u8
    }
}

/// Sinusoidal per-bone motion: bone `b` follows
/// `offset_b + amplitude_b · sin(2π·frequency·τ + phase_b)` plus Gaussian noise,
/// while the rigid translation drifts linearly in `τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitParams {
    pub kind: GaitKind,
    /// Cycles per frame.
    pub frequency: f64,
    pub amplitudes: Vec<[f64; 3]>,
    pub phases: Vec<f64>,
    pub offsets: Vec<[f64; 3]>,
    pub rigid_rotation: [f64; 3],
    pub rigid_translation: [f64; 3],
    /// Translation per frame.
    pub drift: [f64; 3],
    /// Standard deviation of per-frame bone-rotation noise (radians).
    pub noise: f64,
}

fn joint(skel: &Skeleton, name: &str) -> Option<usize> {
    skel.names.iter().position(|n| n == name).filter(|j| *j > 0)
}

impl GaitParams {
    /// Motionless parameters: rest pose at the origin.
    pub fn still(bones: usize) -> Self {
        Self {
            kind: GaitKind::Idle,
            frequency: 0.05,
            amplitudes: vec![[0.0; 3]; bones],
            phases: vec![0.0; bones],
            offsets: vec![[0.0; 3]; bones],
            rigid_rotation: [0.0; 3],
            rigid_translation: [0.0; 3],
            drift: [0.0; 3],
            noise: 0.0,
        }
    }

    pub fn validate(&self, bones: usize) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::invalid(format!(
                "gait frequency must be positive, got {}",
                self.frequency
            )));
        }
        if self.amplitudes.len() != bones
            || self.phases.len() != bones
            || self.offsets.len() != bones
        {
            return Err(Error::dim(format!(
                "gait parameters must cover {bones} bones"
            )));
        }
        let finite = self
            .amplitudes
            .iter()
            .chain(&self.offsets)
            .flatten()
            .all(|v| v.is_finite())
            && self.phases.iter().all(|v| v.is_finite())
            && self
                .rigid_rotation
                .iter()
                .chain(&self.rigid_translation)
                .chain(&self.drift)
                .all(|v| v.is_finite());
        if !finite {
            return Err(Error::invalid("gait parameters must be finite"));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::invalid("gait noise must be non-negative"));
        }
        Ok(())
    }

    /// Randomized parameters for a gait kind on a quadruped-named skeleton,
    /// framed for `cam` with the body centered.
    pub fn sample<R: Rng>(kind: GaitKind, skel: &Skeleton, noise: f64, rng: &mut R) -> Self {
        let bones = skel.bone_count();
        let mut p = Self::still(bones);
        p.kind = kind;
        p.noise = noise;
        let set = |p: &mut Self, name: &str, axis: usize, amp: f64, phase: f64| {
            if let Some(j) = joint(skel, name) {
                p.amplitudes[j - 1][axis] = amp;
                p.phases[j - 1] = phase;
            }
        };
        let offset = |p: &mut Self, name: &str, axis: usize, v: f64| {
            if let Some(j) = joint(skel, name) {
                p.offsets[j - 1][axis] = v;
            }
        };
        // Footfall phase per leg: front-left, front-right, hind-left, hind-right.
        let (freq, upper, lower, feet, speed) = match kind {
            GaitKind::Walk => (
                rng.random_range(0.06..0.09),
                0.35,
                0.30,
                [0.5 * PI, 1.5 * PI, 0.0, PI],
                0.012,
            ),
            GaitKind::Trot => (
                rng.random_range(0.08..0.11),
                0.45,
                0.40,
                [0.0, PI, PI, 0.0],
                0.02,
            ),
            GaitKind::Gallop => (
                rng.random_range(0.09..0.12),
                0.60,
                0.50,
                [0.0, 0.4, PI, PI + 0.4],
                0.03,
            ),
            GaitKind::Idle => (
                rng.random_range(0.04..0.06),
                0.05,
                0.05,
                [0.0, PI, 0.5 * PI, 1.5 * PI],
                0.005,
            ),
            GaitKind::Graze => (
                rng.random_range(0.05..0.08),
                0.15,
                0.12,
                [0.5 * PI, 1.5 * PI, 0.0, PI],
                0.006,
            ),
        };
        p.frequency = freq;
        let gain = rng.random_range(0.8..1.2);
        let shift = rng.random_range(0.0..TAU);
        let mut jitter = || rng.random_range(-0.3..0.3);
        let legs = [
            ("front_left_knee", "front_left_hoof"),
            ("front_right_knee", "front_right_hoof"),
            ("hind_left_hock", "hind_left_hoof"),
            ("hind_right_hock", "hind_right_hoof"),
        ];
        for (leg, (up, low)) in legs.iter().enumerate() {
            set(&mut p, up, 2, gain * upper, feet[leg] + shift + jitter());
            set(
                &mut p,
                low,
                2,
                gain * lower,
                feet[leg] + shift + 1.2 + jitter(),
            );
        }
        match kind {
            GaitKind::Walk | GaitKind::Trot => {
                set(&mut p, "neck", 2, gain * 0.08, shift + jitter());
                set(&mut p, "tail_mid", 1, gain * 0.15, shift + jitter());
            }
            GaitKind::Gallop => {
                set(
                    &mut p,
                    "spine_mid",
                    2,
                    gain * 0.12,
                    shift + 0.5 * PI + jitter(),
                );
                set(&mut p, "chest", 2, gain * 0.10, shift + 0.5 * PI + jitter());
                set(&mut p, "neck", 2, gain * 0.15, shift + jitter());
                set(&mut p, "tail_mid", 2, gain * 0.25, shift + PI + jitter());
            }
            GaitKind::Idle => {
                set(&mut p, "neck", 2, gain * 0.30, shift + jitter());
                set(&mut p, "head", 1, gain * 0.30, shift + 0.5 * PI + jitter());
                set(&mut p, "tail_mid", 2, gain * 0.45, shift + jitter());
                set(&mut p, "tail_tip", 2, gain * 0.35, shift + 0.8 + jitter());
            }
            GaitKind::Graze => {
                offset(&mut p, "neck", 2, -0.9);
                offset(&mut p, "head", 2, -0.3);
                set(&mut p, "head", 2, gain * 0.25, shift + jitter());
                set(&mut p, "tail_mid", 1, gain * 0.2, shift + jitter());
            }
        }
        let yaw = rng.random_range(-0.5..0.5);
        p.rigid_rotation = [
            rng.random_range(-0.08..0.08),
            yaw,
            rng.random_range(-0.08..0.08),
        ];
        let r = rodrigues(&Vector3::from(p.rigid_rotation));
        let (lo, hi) = skel.rest_joints.iter().fold(
            (
                Vector3::repeat(f64::INFINITY),
                Vector3::repeat(f64::NEG_INFINITY),
            ),
            |(lo, hi), j| (lo.inf(j), hi.sup(j)),
        );
        let center = r * (0.5 * (lo + hi));
        let forward = r * Vector3::x() * (speed * rng.random_range(0.8..1.2));
        p.drift = forward.into();
        p.rigid_translation = [
            -center.x + rng.random_range(-0.1..0.1),
            -center.y + rng.random_range(-0.1..0.1),
            -center.z,
        ];
        p
    }

    /// Pose at clock value `tau` without noise.
    pub fn pose_at(&self, tau: f64) -> Pose {
        let bones = self
            .amplitudes
            .iter()
            .zip(&self.phases)
            .zip(&self.offsets)
            .map(|((a, ph), o)| {
                let s = (TAU * self.frequency * tau + ph).sin();
                Vector3::new(o[0] + a[0] * s, o[1] + a[1] * s, o[2] + a[2] * s)
            })
            .collect();
        let t = Vector3::from(self.rigid_translation) + Vector3::from(self.drift) * tau;
        Pose {
            rigid_rotation: Vector3::from(self.rigid_rotation),
            rigid_translation: t,
            bone_rotations: bones,
        }
    }
}

/// One synthetic clip with ground truth and everything derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceRecord {
    pub id: String,
    pub gait: GaitKind,
    pub camera: Camera,
    pub poses: Vec<Pose>,
    pub keypoints: Vec<Keypoints>,
    pub masks: Vec<Mask>,
    /// Mean keypoint displacement (pixels) from the previous frame; frame 0 repeats frame 1.
    pub flow: Vec<f64>,
    /// `[x_min, y_min, x_max, y_max]` per frame.
    pub boxes: Vec<[f64; 4]>,
    pub global_features: Vec<Vec<f64>>,
    pub feature_seed: u64,
    /// Frame index of each stored frame in the source clip (before filtering).
    pub source_frames: Vec<usize>,
}

impl SequenceRecord {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn motion(&self) -> Result<MotionSequence> {
        MotionSequence::new(self.poses.clone())
    }

    pub fn pose_rows(&self) -> Vec<Vec<f64>> {
        self.poses.iter().map(Pose::to_params).collect()
    }

    /// Features for every frame; local fields are rebuilt from the stored keypoints.
    pub fn features(&self, cfg: &FeatureConfig) -> Vec<FrameFeatures> {
        self.keypoints
            .iter()
            .zip(&self.global_features)
            .zip(&self.source_frames)
            .map(|((kp, global), src)| FrameFeatures {
                global: global.clone(),
                local: std::sync::Arc::new(SyntheticLocalField {
                    keypoints: kp.clone(),
                    camera: self.camera,
                    config: *cfg,
                    seed: self.feature_seed,
                    frame: *src,
                }),
            })
            .collect()
    }

    /// Sub-clip made of the given frames, in order.
    pub fn select(&self, frames: &[usize]) -> Result<Self> {
        if let Some(f) = frames.iter().find(|f| **f >= self.len()) {
            return Err(Error::dim(format!(
                "frame {f} out of range for {} frames",
                self.len()
            )));
        }
        Ok(Self {
            id: self.id.clone(),
            gait: self.gait,
            camera: self.camera,
            poses: frames.iter().map(|f| self.poses[*f].clone()).collect(),
            keypoints: frames.iter().map(|f| self.keypoints[*f].clone()).collect(),
            masks: frames.iter().map(|f| self.masks[*f].clone()).collect(),
            flow: frames.iter().map(|f| self.flow[*f]).collect(),
            boxes: frames.iter().map(|f| self.boxes[*f]).collect(),
            global_features: frames
                .iter()
                .map(|f| self.global_features[*f].clone())
                .collect(),
            feature_seed: self.feature_seed,
            source_frames: frames.iter().map(|f| self.source_frames[*f]).collect(),
        })
    }
}

/// Mean keypoint displacement per frame; frame 0 reuses the first displacement.
pub fn keypoint_flow(keypoints: &[Keypoints]) -> Vec<f64> {
    let mut flow: Vec<f64> = keypoints
        .windows(2)
        .map(|w| {
            w[1].iter()
                .zip(&w[0])
                .map(|(a, b)| (a - b).norm())
                .sum::<f64>()
                / w[0].len().max(1) as f64
        })
        .collect();
    let first = flow.first().copied().unwrap_or(0.0);
    flow.insert(0, first);
    flow
}

fn frame_box(mask: &Mask, kp: &Keypoints) -> [f64; 4] {
    mask.bbox().unwrap_or_else(|| {
        kp.iter().fold(
            [
                f64::INFINITY,
                f64::INFINITY,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
            ],
            |b, p| [b[0].min(p.x), b[1].min(p.y), b[2].max(p.x), b[3].max(p.y)],
        )
    })
}

/// Renders a clip whose pose follows `params` at the given clock values.
pub fn generate_with_clock<R: Rng>(
    skel: &Skeleton,
    params: &GaitParams,
    clock: &[f64],
    cam: &Camera,
    features: &FeatureConfig,
    rng: &mut R,
) -> Result<SequenceRecord> {
    params.validate(skel.bone_count())?;
    let feature_seed: u64 = rng.random();
    let normal = Normal::new(0.0, params.noise).map_err(|e| Error::invalid(e.to_string()))?;
    let mut poses = Vec::with_capacity(clock.len());
    for tau in clock {
        let mut pose = params.pose_at(*tau);
        if params.noise > 0.0 {
            for r in pose.bone_rotations.iter_mut() {
                *r += Vector3::from_fn(|_, _| normal.sample(rng));
            }
        }
        poses.push(pose);
    }
    let keypoints = poses
        .iter()
        .map(|p| keypoints2d(skel, p, cam))
        .collect::<Result<Vec<_>>>()?;
    let masks: Vec<Mask> = keypoints
        .iter()
        .map(|kp| skeleton_mask(skel, kp, cam))
        .collect();
    let boxes = masks
        .iter()
        .zip(&keypoints)
        .map(|(m, kp)| frame_box(m, kp))
        .collect();
    let global_features = keypoints
        .iter()
        .enumerate()
        .map(|(t, kp)| global_feature(kp, cam, features, feature_seed, t))
        .collect();
    Ok(SequenceRecord {
        id: String::new(),
        gait: params.kind,
        camera: *cam,
        flow: keypoint_flow(&keypoints),
        poses,
        keypoints,
        masks,
        boxes,
        global_features,
        feature_seed,
        source_frames: (0..clock.len()).collect(),
    })
}

/// Renders `frames` consecutive frames of a gait.
pub fn generate_gait_sequence<R: Rng>(
    skel: &Skeleton,
    params: &GaitParams,
    frames: usize,
    cam: &Camera,
    features: &FeatureConfig,
    rng: &mut R,
) -> Result<SequenceRecord> {
    let clock: Vec<f64> = (0..frames).map(|t| t as f64).collect();
    generate_with_clock(skel, params, &clock, cam, features, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub train_sequences: usize,
    pub eval_sequences: usize,
    /// Frames per stored clip.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Pixels per skeleton unit.
    pub camera_scale: f64,
    /// Bone-rotation noise (radians).
    pub pose_noise: f64,
    /// Share of source frames removed by the low-motion filter.
    pub drop_fraction: f64,
    /// Range of the share of source frames in which the animal pauses.
    pub pause_fraction: [f64; 2],
    pub bbox_window: usize,
    pub mesh_falloff: f64,
    pub gaits: Vec<GaitKind>,
    pub features: FeatureConfig,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            train_sequences: 200,
            eval_sequences: 50,
            frames: 10,
            height: 64,
            width: 64,
            camera_scale: 22.0,
            pose_noise: 0.003,
            drop_fraction: 0.2,
            pause_fraction: [0.1, 0.3],
            bbox_window: 5,
            mesh_falloff: 0.15,
            gaits: GaitKind::ALL.to_vec(),
            features: FeatureConfig::default(),
        }
    }
}

impl CorpusConfig {
    pub fn camera(&self) -> Result<Camera> {
        Camera::centered(self.camera_scale, self.height, self.width)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::Config("clips need at least 2 frames".into()));
        }
        if self.train_sequences + self.eval_sequences == 0 {
            return Err(Error::Config(
                "corpus must contain at least one sequence".into(),
            ));
        }
        if self.gaits.is_empty() {
            return Err(Error::Config("at least one gait kind is required".into()));
        }
        let [lo, hi] = self.pause_fraction;
        if !(0.0 <= lo && lo <= hi && hi < 0.5) {
            return Err(Error::Config(
                "pause_fraction must satisfy 0 <= lo <= hi < 0.5".into(),
            ));
        }
        if self.bbox_window == 0 {
            return Err(Error::Config("bbox_window must be at least 1".into()));
        }
        self.camera()?;
        Ok(())
    }

    /// Length of the source clip a stored clip is cut from.
    pub fn source_frames(&self) -> usize {
        2 * self.frames
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

/// An in-memory dataset.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub records: Vec<SequenceRecord>,
}

impl Corpus {
    pub fn split(&self, split: Split) -> Vec<&SequenceRecord> {
        self.manifest
            .sequences
            .iter()
            .zip(&self.records)
            .filter(|(e, _)| e.split == split)
            .map(|(_, r)| r)
            .collect()
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.manifest.skeleton
    }
}

fn pause_clock<R: Rng>(len: usize, range: [f64; 2], rng: &mut R) -> Vec<f64> {
    let share = if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    };
    let pause = ((share * len as f64).round() as usize).min(len.saturating_sub(2));
    let start = rng.random_range(1..=len - pause);
    let mut clock = Vec::with_capacity(len);
    let mut tau = 0.0;
    for t in 0..len {
        if t > 0 && !(start..start + pause).contains(&t) {
            tau += 1.0;
        }
        clock.push(tau);
    }
    clock
}

struct Draft {
    record: SequenceRecord,
    attempt: u64,
}

fn draft(
    cfg: &CorpusConfig,
    skel: &Skeleton,
    cam: &Camera,
    seed: u64,
    index: usize,
    attempt: u64,
) -> Result<Draft> {
    let mut rng = ChaCha8Rng::seed_from_u64(features::sequence_seed(seed, index as u64, attempt));
    let kind = cfg.gaits[index % cfg.gaits.len()];
    let params = GaitParams::sample(kind, skel, cfg.pose_noise, &mut rng);
    let clock = pause_clock(cfg.source_frames(), cfg.pause_fraction, &mut rng);
    let record = generate_with_clock(skel, &params, &clock, cam, &cfg.features, &mut rng)?;
    Ok(Draft { record, attempt })
}

const MAX_ATTEMPTS: u64 = 32;

/// Generates the full corpus; a pure function of `(cfg, seed)`.
///
/// Each clip is cut from a longer source clip containing a pause. The
/// low-motion threshold is calibrated on all first-attempt source clips so
/// that `drop_fraction` of their frames fall below it; clips with too few
/// remaining frames are redrawn.
pub fn generate_corpus(cfg: &CorpusConfig, seed: u64) -> Result<Corpus> {
    cfg.validate()?;
    let skel = quadruped();
    let cam = cfg.camera()?;
    let total = cfg.train_sequences + cfg.eval_sequences;
    let mut drafts = (0..total)
        .map(|i| draft(cfg, &skel, &cam, seed, i, 0))
        .collect::<Result<Vec<_>>>()?;
    let all_flow: Vec<f64> = drafts
        .iter()
        .flat_map(|d| d.record.flow.iter().copied())
        .collect();
    let threshold = calibrate_motion_threshold(&all_flow, cfg.drop_fraction)?;

    let mut records = Vec::with_capacity(total);
    let mut entries = Vec::with_capacity(total);
    let (mut dropped, mut source) = (0usize, 0usize);
    for (i, d) in drafts.iter_mut().enumerate() {
        let (kept, boxes) = loop {
            match preprocess_clip(&d.record.boxes, &d.record.flow, threshold, cfg.bbox_window) {
                Ok((k, b)) if k.len() >= cfg.frames => break (k, b),
                _ if d.attempt + 1 < MAX_ATTEMPTS => {
                    *d = draft(cfg, &skel, &cam, seed, i, d.attempt + 1)?
                }
                _ => {
                    return Err(Error::invalid(format!(
                        "sequence {i}: no usable clip after {MAX_ATTEMPTS} attempts"
                    )))
                }
            }
        };
        dropped += d.record.len() - kept.len();
        source += d.record.len();
        let mut rec = d.record.select(&kept[..cfg.frames])?;
        rec.boxes = boxes[..cfg.frames].to_vec();
        let split = if i < cfg.train_sequences {
            Split::Train
        } else {
            Split::Eval
        };
        rec.id = format!(
            "{}_{i:04}",
            if split == Split::Train {
                "train"
            } else {
                "eval"
            }
        );
        entries.push(ManifestEntry {
            id: rec.id.clone(),
            split,
            file: format!("{}.qma", rec.id),
            gait: rec.gait,
            frames: rec.len(),
            attempts: d.attempt + 1,
        });
        records.push(rec);
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        seed,
        config: cfg.clone(),
        skeleton: skel,
        mesh: MeshReference {
            generator: "quadruped_tube".into(),
            falloff: cfg.mesh_falloff,
        },
        camera: cam,
        motion_threshold: threshold,
        dropped_fraction: dropped as f64 / source as f64,
        sequences: entries,
    };
    Ok(Corpus { manifest, records })
}
