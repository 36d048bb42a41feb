//! Two-phase training: a video phase fitting the rigid head and the
//! single-frame pose network, then a motion phase fitting the VAE with the
//! first phase's predictions as pseudo ground truth.

mod checkpoint;
mod eval;
mod long;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{array, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::container::ArrayFile;
use crate::error::{Error, Result};
use crate::motionvae::{
    build_sequence_descriptors, FrameFeatures, ModelConfig, MotionModel, ShapeTrace,
};
use crate::nn::{Adam, AdamConfig, Graph};
use crate::objectives::{
    kl_term, recon_term, teacher_term, temporal_term, LossReport, LossWeights,
};
use crate::skeleton::{Camera, Keypoints, Skeleton};
use crate::synthdata::{Corpus, FeatureConfig, SequenceRecord, Split};

pub use checkpoint::{
    config_digest, load_checkpoint, save_checkpoint, CHECKPOINT_FILE, PSEUDO_GT_FILE,
};
pub use eval::{
    aggregate_metrics, canonical_chamfer, canonical_keypoints, evaluate_reconstruction,
    evaluate_sequences, iid_noise_samples, motion_statistics, prior_samples, reconstruct_sequence,
    score_sequence, Reconstruction, ReconstructionMode, SequenceMetrics,
};
pub use long::{
    fit_transition, generate_long_sequence, stitch_segments, transition_objective, LongSequence,
    TransitionConfig, TransitionFit,
};

pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub weights: LossWeights,
    pub optimizer: AdamConfig,
    pub features: FeatureConfig,
    pub phase1_epochs: usize,
    pub phase2_epochs: usize,
    pub batch_size: usize,
    /// Clip length `T`; every training sequence must have exactly this many frames.
    pub frames: usize,
    pub seed: u64,
    /// Epochs between checkpoints; the last epoch of a phase is always saved.
    pub checkpoint_every: usize,
    /// Drops the temporal smoothness term (its weight is treated as zero).
    pub no_temporal_smoothness: bool,
    /// Draw `ε ~ N(0, I)` in the motion phase; `false` decodes the posterior mean.
    pub sample_posterior: bool,
    /// Keep optimizing the rigid head in the motion phase.
    pub motion_phase_rigid: bool,
    pub transition: TransitionConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            weights: LossWeights::default(),
            optimizer: AdamConfig {
                clip_norm: 1.0,
                ..AdamConfig::default()
            },
            features: FeatureConfig::default(),
            phase1_epochs: 120,
            phase2_epochs: 180,
            batch_size: 8,
            frames: 10,
            seed: 0,
            checkpoint_every: 10,
            no_temporal_smoothness: false,
            sample_posterior: true,
            motion_phase_rigid: true,
            transition: TransitionConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.weights.validate()?;
        self.transition.validate()?;
        if self.frames < 2 {
            return Err(Error::Config(format!(
                "frames must be at least 2, got {}",
                self.frames
            )));
        }
        if self.frames > self.model.max_frames {
            return Err(Error::Config(format!(
                "frames {} exceeds model.max_frames {}",
                self.frames, self.model.max_frames
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.checkpoint_every == 0 {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        let lr = self.optimizer.learning_rate;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        if self.features.global_dim != self.model.global_dim
            || self.features.local_dim != self.model.local_dim
        {
            return Err(Error::Config(
                "feature widths differ from model.global_dim / model.local_dim".into(),
            ));
        }
        Ok(())
    }

    /// Loss weights after applying the ablation switches.
    pub fn effective_weights(&self) -> LossWeights {
        let mut w = self.weights;
        if self.no_temporal_smoothness {
            w.temporal = 0.0;
        }
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Video,
    Motion,
}

impl Phase {
    pub fn number(self) -> u8 {
        match self {
            Phase::Video => 1,
            Phase::Motion => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Phase::Video),
            2 => Ok(Phase::Motion),
            _ => Err(Error::invalid(format!("unknown training phase {n}"))),
        }
    }

    /// Parameter prefixes optimized in this phase; everything else is frozen.
    pub fn trainable(self, cfg: &TrainConfig) -> &'static [&'static str] {
        match self {
            Phase::Video => &["rigid.", "pose_net."],
            Phase::Motion if cfg.motion_phase_rigid => &["rigid.", "vae."],
            Phase::Motion => &["vae."],
        }
    }

    fn stream(self) -> u64 {
        self.number() as u64
    }
}

/// One training clip with precomputed inputs.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    pub id: String,
    pub features: Vec<FrameFeatures>,
    pub globals: Array2<f64>,
    pub targets: Vec<Keypoints>,
}

impl TrainSequence {
    pub fn from_record(rec: &SequenceRecord, features: &FeatureConfig) -> Result<Self> {
        let features = rec.features(features);
        let d = features.first().map(|f| f.global.len()).unwrap_or(0);
        let mut globals = Array2::zeros((features.len(), d));
        for (t, f) in features.iter().enumerate() {
            if f.global.len() != d {
                return Err(Error::dim(format!(
                    "{}: frame {t} global feature width differs",
                    rec.id
                )));
            }
            globals
                .row_mut(t)
                .assign(&ndarray::ArrayView1::from(&f.global));
        }
        Ok(Self {
            id: rec.id.clone(),
            features,
            globals,
            targets: rec.keypoints.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub skeleton: Skeleton,
    pub camera: Camera,
    pub sequences: Vec<TrainSequence>,
}

impl TrainData {
    pub fn from_records(
        skeleton: Skeleton,
        camera: Camera,
        records: &[&SequenceRecord],
        features: &FeatureConfig,
    ) -> Result<Self> {
        let sequences = records
            .iter()
            .map(|r| TrainSequence::from_record(r, features))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            skeleton,
            camera,
            sequences,
        })
    }

    pub fn from_corpus(corpus: &Corpus, split: Split, features: &FeatureConfig) -> Result<Self> {
        let records = corpus.split(split);
        let camera = corpus.manifest.camera;
        Self::from_records(corpus.skeleton().clone(), camera, &records, features)
    }

    fn check(&self, cfg: &TrainConfig) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::invalid("no training sequences"));
        }
        for s in &self.sequences {
            if s.len() != cfg.frames {
                return Err(Error::invalid(format!(
                    "sequence {} has {} frames, config expects {}",
                    s.id,
                    s.len(),
                    cfg.frames
                )));
            }
        }
        if self.skeleton.joint_count() != cfg.model.joint_count {
            return Err(Error::dim(format!(
                "skeleton has {} joints, model expects {}",
                self.skeleton.joint_count(),
                cfg.model.joint_count
            )));
        }
        Ok(())
    }
}

/// Bone rotations (`T × 3(B−1)`) predicted by the first phase, keyed by sequence id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoGTStore {
    entries: BTreeMap<String, Array2<f64>>,
}

impl PseudoGTStore {
    pub fn insert(&mut self, id: impl Into<String>, bones: Array2<f64>) {
        self.entries.insert(id.into(), bones);
    }

    pub fn get(&self, id: &str) -> Result<&Array2<f64>> {
        self.entries
            .get(id)
            .ok_or_else(|| Error::invalid(format!("no pseudo ground truth for sequence {id}")))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn to_file(&self) -> Result<ArrayFile> {
        let mut f = ArrayFile::new();
        for (id, a) in &self.entries {
            f.push_f64(
                id.clone(),
                &[a.nrows(), a.ncols()],
                a.iter().copied().collect(),
            )?;
        }
        Ok(f)
    }

    pub fn from_file(f: &ArrayFile) -> Result<Self> {
        let mut out = Self::default();
        for e in &f.entries {
            let (shape, data) = f.f64(&e.name)?;
            if shape.len() != 2 {
                return Err(Error::format(
                    None,
                    format!("pseudo ground truth {} is not 2-D", e.name),
                ));
            }
            let a = Array2::from_shape_vec((shape[0], shape[1]), data.to_vec())
                .map_err(|err| Error::dim(err.to_string()))?;
            out.insert(e.name.clone(), a);
        }
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_file()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_file(&ArrayFile::read(path)?)
    }
}

/// Everything that evolves during training.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: MotionModel,
    pub optimizer: Adam,
    pub rng: ChaCha8Rng,
    pub phase: Phase,
    /// Completed epochs in the current phase.
    pub epoch: usize,
    /// Optimizer steps taken in the current phase.
    pub step: u64,
}

impl TrainState {
    pub fn new(phase: Phase, model: MotionModel, cfg: &TrainConfig) -> Self {
        let optimizer = Adam::new(cfg.optimizer, &model.store);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(phase.stream());
        Self {
            model,
            optimizer,
            rng,
            phase,
            epoch: 0,
            step: 0,
        }
    }
}

/// Per-step JSONL record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepLog {
    pub phase: u8,
    pub epoch: usize,
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossReport,
    pub recomposition_error: f64,
}

/// Summed loss and gradients of one clip.
struct SequenceLoss {
    report: LossReport,
    grads: Vec<Array2<f64>>,
}

fn sequence_loss(
    model: &MotionModel,
    data: &TrainData,
    seq: &TrainSequence,
    phase: Phase,
    w: &LossWeights,
    noise: Option<&[f64]>,
    pseudo: Option<&Array2<f64>>,
) -> Result<SequenceLoss> {
    let frames = seq.len();
    let mut g = Graph::new(&model.store);
    let globals = g.constant(seq.globals.clone());
    let rigid = model.rigid(&mut g, globals);
    let rv = g.value(rigid);
    let rigid_rows: Vec<[f64; 6]> = (0..frames)
        .map(|t| std::array::from_fn(|i| rv[[t, i]]))
        .collect();
    let desc = build_sequence_descriptors(
        &model.config,
        &seq.features,
        &data.skeleton,
        &rigid_rows,
        &data.camera,
    )?;
    let desc = g.constant(desc);

    let mut report = LossReport::default();
    let (bones, extra) = match phase {
        Phase::Video => (model.single_frame_bones(&mut g, desc, frames)?, None),
        Phase::Motion => {
            let pseudo = pseudo.ok_or_else(|| {
                Error::invalid(format!("no pseudo ground truth for sequence {}", seq.id))
            })?;
            let out =
                model.vae_forward(&mut g, desc, globals, frames, noise, &mut ShapeTrace::off())?;
            let kl = kl_term(&mut g, out.mean, out.log_variance);
            let teacher = teacher_term(&mut g, out.bones, pseudo)?;
            (out.bones, Some((kl, teacher)))
        }
    };
    let poses = g.concat_cols(&[rigid, bones]);
    if g.value(poses).iter().any(|v| !v.is_finite()) {
        report.total = f64::NAN;
        return Ok(SequenceLoss {
            report,
            grads: Vec::new(),
        });
    }
    let recon = recon_term(&mut g, &data.skeleton, &data.camera, poses, &seq.targets)?;
    let temporal = temporal_term(&mut g, poses)?;
    report.reconstruction = g.scalar(recon);
    report.temporal = g.scalar(temporal);
    let a = g.scale(recon, w.reconstruction());
    let b = g.scale(temporal, w.temporal);
    let mut total = g.add(a, b);
    let shape = g.constant(array![[0.0]]);
    let shape = g.scale(shape, w.shape);
    total = g.add(total, shape);
    if let Some((kl, teacher)) = extra {
        report.kl = g.scalar(kl);
        report.teacher = g.scalar(teacher);
        let c = g.scale(kl, w.kl);
        let d = g.scale(teacher, w.teacher);
        total = g.add(total, c);
        total = g.add(total, d);
    }
    report.total = g.scalar(total);
    let grads = if report.total.is_finite() {
        g.backward(total).into_param_grads(&model.store)
    } else {
        Vec::new()
    };
    Ok(SequenceLoss { report, grads })
}

/// Trainer for one phase; owns its state and output directory.
pub struct Trainer {
    pub config: TrainConfig,
    pub state: TrainState,
    out: Option<PathBuf>,
    log: Option<BufWriter<File>>,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("phase", &self.state.phase)
            .field("epoch", &self.state.epoch)
            .field("step", &self.state.step)
            .field("out", &self.out)
            .finish()
    }
}

impl Trainer {
    /// Fresh first-phase trainer with a newly initialized model.
    pub fn video(config: TrainConfig, out: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let model = MotionModel::new(config.model.clone(), config.seed)?;
        let state = TrainState::new(Phase::Video, model, &config);
        Self::with_state(config, state, out)
    }

    /// Fresh second-phase trainer continuing from a first-phase model.
    pub fn motion(config: TrainConfig, model: MotionModel, out: Option<&Path>) -> Result<Self> {
        config.validate()?;
        if model.config != config.model {
            return Err(Error::Config(
                "model configuration differs from the training configuration".into(),
            ));
        }
        let state = TrainState::new(Phase::Motion, model, &config);
        Self::with_state(config, state, out)
    }

    /// Continues from a checkpoint written with the same configuration.
    pub fn resume(checkpoint: &Path, config: TrainConfig, out: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let (state, saved) = load_checkpoint(checkpoint)?;
        if config_digest(&saved)? != config_digest(&config)? {
            return Err(Error::Config(format!(
                "checkpoint {} was written with a different configuration",
                checkpoint.display()
            )));
        }
        Self::with_state(config, state, out)
    }

    fn with_state(config: TrainConfig, state: TrainState, out: Option<&Path>) -> Result<Self> {
        let log = match out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(LOG_FILE))?;
                Some(BufWriter::new(f))
            }
            None => None,
        };
        Ok(Self {
            config,
            state,
            out: out.map(Path::to_path_buf),
            log,
        })
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn model(&self) -> &MotionModel {
        &self.state.model
    }

    pub fn into_model(self) -> MotionModel {
        self.state.model
    }

    fn target_epochs(&self) -> usize {
        match self.state.phase {
            Phase::Video => self.config.phase1_epochs,
            Phase::Motion => self.config.phase2_epochs,
        }
    }

    /// `out/ckpt/phase{p}/epoch_{k}`.
    pub fn checkpoint_dir(&self, epoch: usize) -> Option<PathBuf> {
        self.out.as_ref().map(|o| {
            o.join("ckpt")
                .join(format!("phase{}", self.state.phase.number()))
                .join(format!("epoch_{epoch}"))
        })
    }

    pub fn save(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(CHECKPOINT_FILE);
        save_checkpoint(&path, &self.state, &self.config)?;
        Ok(path)
    }

    /// Trains until the phase's configured epoch count; returns per-epoch mean losses.
    pub fn run(
        &mut self,
        data: &TrainData,
        pseudo: Option<&PseudoGTStore>,
    ) -> Result<Vec<LossReport>> {
        self.run_until(data, pseudo, self.target_epochs())
    }

    /// Trains until `epochs` epochs of this phase have completed.
    pub fn run_until(
        &mut self,
        data: &TrainData,
        pseudo: Option<&PseudoGTStore>,
        epochs: usize,
    ) -> Result<Vec<LossReport>> {
        data.check(&self.config)?;
        if self.state.phase == Phase::Motion {
            let pseudo = pseudo
                .ok_or_else(|| Error::invalid("the motion phase needs pseudo ground truth"))?;
            for s in &data.sequences {
                pseudo.get(&s.id)?;
            }
        }
        let mut history = Vec::new();
        while self.state.epoch < epochs {
            history.push(self.epoch(data, pseudo)?);
            let e = self.state.epoch;
            if e % self.config.checkpoint_every == 0 || e == epochs {
                if let Some(dir) = self.checkpoint_dir(e) {
                    self.save(&dir)?;
                }
            }
        }
        if let Some(log) = self.log.as_mut() {
            log.flush()?;
        }
        Ok(history)
    }

    fn epoch(&mut self, data: &TrainData, pseudo: Option<&PseudoGTStore>) -> Result<LossReport> {
        let w = self.config.effective_weights();
        let phase = self.state.phase;
        let frozen: Vec<bool> = self
            .state
            .model
            .prefix_mask(phase.trainable(&self.config))
            .iter()
            .map(|t| !t)
            .collect();
        let mut order: Vec<usize> = (0..data.sequences.len()).collect();
        order.shuffle(&mut self.state.rng);
        let mut epoch_mean = LossReport::default();
        let batches = order.chunks(self.config.batch_size).count() as f64;
        for chunk in order.chunks(self.config.batch_size) {
            let n = chunk.len() as f64;
            let mut mean = LossReport::default();
            let mut grads: Vec<Array2<f64>> = Vec::new();
            for &i in chunk {
                let seq = &data.sequences[i];
                let noise: Option<Vec<f64>> =
                    (phase == Phase::Motion && self.config.sample_posterior).then(|| {
                        (0..self.state.model.latent_dim())
                            .map(|_| self.state.rng.sample(StandardNormal))
                            .collect()
                    });
                let p = match pseudo {
                    Some(store) if phase == Phase::Motion => Some(store.get(&seq.id)?),
                    _ => None,
                };
                let l =
                    sequence_loss(&self.state.model, data, seq, phase, &w, noise.as_deref(), p)?;
                if !l.report.total.is_finite()
                    || l.grads.iter().any(|g| g.iter().any(|v| !v.is_finite()))
                {
                    return Err(self.non_finite());
                }
                accumulate(&mut mean, &l.report, 1.0 / n);
                if grads.is_empty() {
                    grads = l.grads.into_iter().map(|g| g / n).collect();
                } else {
                    for (a, b) in grads.iter_mut().zip(&l.grads) {
                        a.scaled_add(1.0 / n, b);
                    }
                }
            }
            self.state
                .optimizer
                .update(&mut self.state.model.store, &grads, &frozen);
            self.state.step += 1;
            if self
                .state
                .model
                .store
                .iter()
                .any(|(_, v)| v.iter().any(|x| !x.is_finite()))
            {
                return Err(self.non_finite());
            }
            let recomposition = mean.recomposition_error(&w);
            if recomposition > 1e-9 * mean.total.abs().max(1.0) {
                log::error!(
                    "loss recomposition off by {recomposition:e} at step {} (total {})",
                    self.state.step,
                    mean.total
                );
            }
            debug_assert!(recomposition <= 1e-6 * mean.total.abs().max(1.0));
            self.write_log(&StepLog {
                phase: phase.number(),
                epoch: self.state.epoch,
                step: self.state.step,
                loss: mean,
                recomposition_error: recomposition,
            })?;
            accumulate(&mut epoch_mean, &mean, 1.0 / batches);
        }
        self.state.epoch += 1;
        log::info!(
            "phase {} epoch {} loss {:.6}",
            phase.number(),
            self.state.epoch,
            epoch_mean.total
        );
        Ok(epoch_mean)
    }

    fn write_log(&mut self, entry: &StepLog) -> Result<()> {
        if let Some(log) = self.log.as_mut() {
            serde_json::to_writer(&mut *log, entry)?;
            log.write_all(b"\n")?;
        }
        Ok(())
    }

    fn non_finite(&self) -> Error {
        let step = self.state.step;
        let snapshot = self.out.as_ref().and_then(|o| {
            let dir = o
                .join("ckpt")
                .join(format!("phase{}", self.state.phase.number()))
                .join(format!("nonfinite_step_{step}"));
            match self.save(&dir) {
                Ok(p) => Some(p),
                Err(e) => {
                    log::error!("could not write non-finite snapshot: {e}");
                    None
                }
            }
        });
        log::error!("non-finite loss or parameters at step {step}; aborting");
        Error::NonFinite {
            step,
            phase: self.state.phase.number(),
            snapshot,
        }
    }

    /// First-phase bone predictions for every sequence in `data`.
    pub fn pseudo_ground_truth(&self, data: &TrainData) -> Result<PseudoGTStore> {
        pseudo_ground_truth(&self.state.model, data)
    }
}

fn accumulate(into: &mut LossReport, r: &LossReport, weight: f64) {
    into.reconstruction += weight * r.reconstruction;
    into.shape += weight * r.shape;
    into.temporal += weight * r.temporal;
    into.kl += weight * r.kl;
    into.teacher += weight * r.teacher;
    into.total += weight * r.total;
}

/// Single-frame network predictions used as the motion phase's teacher.
pub fn pseudo_ground_truth(model: &MotionModel, data: &TrainData) -> Result<PseudoGTStore> {
    let mut store = PseudoGTStore::default();
    for seq in &data.sequences {
        let (_, _, desc) = model.sequence_inputs(&seq.features, &data.skeleton, &data.camera)?;
        let mut g = Graph::new(&model.store);
        let d = g.constant(desc);
        let bones = model.single_frame_bones(&mut g, d, seq.len())?;
        store.insert(seq.id.clone(), g.value(bones).clone());
    }
    Ok(store)
}

/// Output of a complete first phase.
#[derive(Debug, Clone)]
pub struct VideoPhase {
    pub model: MotionModel,
    pub pseudo_gt: PseudoGTStore,
    pub history: Vec<LossReport>,
}

/// Runs the first phase from scratch and stores the pseudo ground truth next
/// to its final checkpoint.
pub fn train_phase1(
    data: &TrainData,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<VideoPhase> {
    let mut trainer = Trainer::video(config.clone(), out)?;
    finish_phase1(&mut trainer, data).map(|(history, pseudo_gt)| VideoPhase {
        model: trainer.state.model,
        pseudo_gt,
        history,
    })
}

/// Continues an interrupted first phase from one of its checkpoints.
pub fn resume_phase1(
    checkpoint: &Path,
    data: &TrainData,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<VideoPhase> {
    let mut trainer = Trainer::resume(checkpoint, config.clone(), out)?;
    if trainer.phase() != Phase::Video {
        return Err(Error::invalid("checkpoint is not from the first phase"));
    }
    finish_phase1(&mut trainer, data).map(|(history, pseudo_gt)| VideoPhase {
        model: trainer.state.model,
        pseudo_gt,
        history,
    })
}

fn finish_phase1(
    trainer: &mut Trainer,
    data: &TrainData,
) -> Result<(Vec<LossReport>, PseudoGTStore)> {
    let history = trainer.run(data, None)?;
    let pseudo = trainer.pseudo_ground_truth(data)?;
    if let Some(dir) = trainer.checkpoint_dir(trainer.state.epoch) {
        trainer.save(&dir)?;
        pseudo.write(&dir.join(PSEUDO_GT_FILE))?;
    }
    Ok((history, pseudo))
}

#[derive(Debug, Clone)]
pub struct MotionPhase {
    pub model: MotionModel,
    pub history: Vec<LossReport>,
}

/// Second phase: optimizes the VAE and the rigid head, pose network frozen.
pub fn train_phase2(
    model: MotionModel,
    pseudo_gt: &PseudoGTStore,
    data: &TrainData,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<MotionPhase> {
    let mut trainer = Trainer::motion(config.clone(), model, out)?;
    let history = trainer.run(data, Some(pseudo_gt))?;
    Ok(MotionPhase {
        model: trainer.into_model(),
        history,
    })
}

pub fn resume_phase2(
    checkpoint: &Path,
    pseudo_gt: &PseudoGTStore,
    data: &TrainData,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<MotionPhase> {
    let mut trainer = Trainer::resume(checkpoint, config.clone(), out)?;
    if trainer.phase() != Phase::Motion {
        return Err(Error::invalid("checkpoint is not from the second phase"));
    }
    let history = trainer.run(data, Some(pseudo_gt))?;
    Ok(MotionPhase {
        model: trainer.into_model(),
        history,
    })
}

/// Both phases back to back.
pub fn train(
    data: &TrainData,
    config: &TrainConfig,
    out: Option<&Path>,
) -> Result<(MotionPhase, Vec<LossReport>)> {
    let first = train_phase1(data, config, out)?;
    let second = train_phase2(first.model, &first.pseudo_gt, data, config, out)?;
    Ok((second, first.history))
}
