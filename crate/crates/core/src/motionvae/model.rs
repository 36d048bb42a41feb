use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::descriptors::build_sequence_descriptors;
use super::{FrameFeatures, LatentDistribution, ModelConfig};
use crate::error::{Error, Result};
use crate::nn::layers::{Linear, TransformerDecoder, TransformerEncoder};
use crate::nn::posenc::sinusoidal_encoding;
use crate::nn::{Graph, ParamId, ParamStore, Var};
use crate::skeleton::{Camera, Pose, Skeleton};

/// Records logical tensor shapes along a forward pass.
#[derive(Debug, Clone, Default)]
pub struct ShapeTrace {
    enabled: bool,
    pub entries: Vec<(String, Vec<usize>)>,
}

impl ShapeTrace {
    pub fn on() -> Self {
        Self {
            enabled: true,
            entries: Vec::new(),
        }
    }

    pub fn off() -> Self {
        Self::default()
    }

    fn record(&mut self, label: &str, dims: &[usize]) {
        if self.enabled {
            self.entries.push((label.to_string(), dims.to_vec()));
        }
    }

    pub fn get(&self, label: &str) -> Option<&[usize]> {
        self.entries
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, d)| d.as_slice())
    }
}

/// Projects bone descriptors, prepends a learnable query token per frame and
/// returns the query's output token as the frame's pose feature.
#[derive(Debug, Clone)]
pub struct SpatialEncoder {
    proj: Linear,
    query: ParamId,
    encoder: TransformerEncoder,
}

impl SpatialEncoder {
    fn new(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        Self {
            proj: Linear::new(
                store,
                &format!("{name}.proj"),
                cfg.descriptor_width,
                cfg.dim,
                rng,
            ),
            query: store.normal(format!("{name}.query"), 1, cfg.dim, 0.1, rng),
            encoder: TransformerEncoder::new(
                store,
                &format!("{name}.encoder"),
                cfg.blocks,
                cfg.dim,
                cfg.heads,
                cfg.ff_dim,
                rng,
            ),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        desc: Var,
        frames: usize,
        bones: usize,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        let (rows, width) = g.value(desc).dim();
        if rows != frames * bones {
            return Err(Error::dim(format!(
                "expected {} descriptor tokens ({frames} frames × {bones} bones), got {rows}",
                frames * bones
            )));
        }
        if width != self.proj.input {
            return Err(Error::dim(format!(
                "descriptor width {width}, expected {}",
                self.proj.input
            )));
        }
        trace.record("descriptors", &[bones, frames, width]);
        let x = self.proj.forward(g, desc);
        let dim = self.proj.output;
        trace.record("spatial_projection", &[bones, frames, dim]);
        let q = g.param(self.query);
        let stacked = g.concat_rows(&[q, x]);
        let mut order = Vec::with_capacity(frames * (bones + 1));
        for t in 0..frames {
            order.push(0);
            order.extend((0..bones).map(|b| 1 + t * bones + b));
        }
        let tokens = g.select_rows(stacked, &order);
        trace.record("spatial_tokens", &[bones + 1, frames, dim]);
        let out = self.encoder.forward(g, tokens, bones + 1);
        let first: Vec<usize> = (0..frames).map(|t| t * (bones + 1)).collect();
        let feats = g.select_rows(out, &first);
        trace.record("spatial_encoder_out", &[1, frames, dim]);
        Ok(feats)
    }
}

#[derive(Debug, Clone)]
struct MlpHead {
    hidden: Linear,
    out: Linear,
}

impl MlpHead {
    fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Self {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, rng),
            out: Linear::zeroed(store, &format!("{name}.out"), hidden, output),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.hidden.forward(g, x);
        let h = g.gelu(h);
        self.out.forward(g, h)
    }
}

#[derive(Debug, Clone)]
enum EncoderFront {
    Spatial(SpatialEncoder),
    Global(Linear),
}

#[derive(Debug, Clone)]
enum DecoderBack {
    Spatial {
        decoder: TransformerDecoder,
        rotation: Linear,
    },
    Direct(Linear),
}

/// Graph handles produced by one VAE pass.
#[derive(Debug, Clone, Copy)]
pub struct VaeForward {
    pub mean: Var,
    pub log_variance: Var,
    pub latent: Var,
    /// `T × 3(B−1)` bone rotations.
    pub bones: Var,
}

/// All learnable parts: rigid-pose head, single-frame pose network and the VAE.
///
/// Parameter names are prefixed `rigid.`, `pose_net.` and `vae.`.
#[derive(Debug, Clone)]
pub struct MotionModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    rigid_head: MlpHead,
    pose_encoder: SpatialEncoder,
    pose_head: MlpHead,
    front: EncoderFront,
    mean_query: ParamId,
    logvar_query: ParamId,
    temporal_encoder: TransformerEncoder,
    mean_out: Linear,
    logvar_out: Linear,
    temporal_decoder: TransformerDecoder,
    back: DecoderBack,
}

impl MotionModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let cfg = &config;
        let bones = cfg.bone_count();
        let rigid_head = MlpHead::new(
            &mut store,
            "rigid.head",
            cfg.global_dim,
            cfg.head_hidden,
            6,
            &mut rng,
        );
        let pose_encoder = SpatialEncoder::new(&mut store, "pose_net.spatial", cfg, &mut rng);
        let pose_head = MlpHead::new(
            &mut store,
            "pose_net.head",
            cfg.dim,
            cfg.head_hidden,
            3 * bones,
            &mut rng,
        );
        let front = if cfg.spatial_transformer {
            EncoderFront::Spatial(SpatialEncoder::new(
                &mut store,
                "vae.spatial_encoder",
                cfg,
                &mut rng,
            ))
        } else {
            EncoderFront::Global(Linear::new(
                &mut store,
                "vae.global_proj",
                cfg.global_dim,
                cfg.dim,
                &mut rng,
            ))
        };
        let mean_query = store.normal("vae.mu_query", 1, cfg.dim, 0.1, &mut rng);
        let logvar_query = store.normal("vae.sigma_query", 1, cfg.dim, 0.1, &mut rng);
        let temporal_encoder = TransformerEncoder::new(
            &mut store,
            "vae.temporal_encoder",
            cfg.blocks,
            cfg.dim,
            cfg.heads,
            cfg.ff_dim,
            &mut rng,
        );
        let mean_out = Linear::zeroed(&mut store, "vae.mu_out", cfg.dim, cfg.dim);
        let logvar_out = Linear::zeroed(&mut store, "vae.logvar_out", cfg.dim, cfg.dim);
        let temporal_decoder = TransformerDecoder::new(
            &mut store,
            "vae.temporal_decoder",
            cfg.blocks,
            cfg.dim,
            cfg.heads,
            cfg.ff_dim,
            &mut rng,
        );
        let back = if cfg.spatial_transformer {
            DecoderBack::Spatial {
                decoder: TransformerDecoder::new(
                    &mut store,
                    "vae.spatial_decoder",
                    cfg.blocks,
                    cfg.dim,
                    cfg.heads,
                    cfg.ff_dim,
                    &mut rng,
                ),
                rotation: Linear::zeroed(&mut store, "vae.rotation_out", cfg.dim, 3),
            }
        } else {
            DecoderBack::Direct(Linear::zeroed(
                &mut store,
                "vae.frame_out",
                cfg.dim,
                3 * bones,
            ))
        };
        Ok(Self {
            config,
            store,
            rigid_head,
            pose_encoder,
            pose_head,
            front,
            mean_query,
            logvar_query,
            temporal_encoder,
            mean_out,
            logvar_out,
            temporal_decoder,
            back,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.config.dim
    }

    fn check_frames(&self, frames: usize) -> Result<()> {
        if frames == 0 || frames > self.config.max_frames {
            return Err(Error::dim(format!(
                "sequence length {frames} outside 1..={}",
                self.config.max_frames
            )));
        }
        Ok(())
    }

    /// Rigid pose `(axis-angle, translation)` per row of global features (`T × d_g` → `T × 6`).
    pub fn rigid(&self, g: &mut Graph, globals: Var) -> Var {
        self.rigid_head.forward(g, globals)
    }

    /// Single-frame pose network: bone rotations per frame (`T × 3(B−1)`).
    pub fn single_frame_bones(&self, g: &mut Graph, desc: Var, frames: usize) -> Result<Var> {
        let feats = self.pose_encoder.forward(
            g,
            desc,
            frames,
            self.config.bone_count(),
            &mut ShapeTrace::off(),
        )?;
        Ok(self.pose_head.forward(g, feats))
    }

    /// Spatial encoder: `T·(B−1)` descriptors → `T × D` pose features.
    pub fn encode_spatial(
        &self,
        g: &mut Graph,
        desc: Var,
        frames: usize,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        match &self.front {
            EncoderFront::Spatial(enc) => {
                enc.forward(g, desc, frames, self.config.bone_count(), trace)
            }
            EncoderFront::Global(_) => Err(Error::Config(
                "spatial transformer disabled in this model".into(),
            )),
        }
    }

    /// Temporal encoder: `T × D` pose features → `(μ, log σ²)`, each `1 × D`.
    pub fn encode_temporal(
        &self,
        g: &mut Graph,
        feats: Var,
        trace: &mut ShapeTrace,
    ) -> Result<(Var, Var)> {
        let (frames, dim) = g.value(feats).dim();
        self.check_frames(frames)?;
        if dim != self.config.dim {
            return Err(Error::dim(format!(
                "pose features have width {dim}, expected {}",
                self.config.dim
            )));
        }
        trace.record("temporal_input", &[frames, 1, dim]);
        let mq = g.param(self.mean_query);
        let sq = g.param(self.logvar_query);
        let tokens = g.concat_rows(&[feats, mq, sq]);
        trace.record("temporal_tokens", &[frames + 2, 1, dim]);
        let positions: Vec<f64> = (0..frames + 2).map(|p| p as f64).collect();
        let pe = g.constant(sinusoidal_encoding(&positions, dim));
        let tokens = g.add(tokens, pe);
        trace.record("temporal_positional", &[frames + 2, 1, dim]);
        let out = self.temporal_encoder.forward(g, tokens, frames + 2);
        let queries = g.slice_rows(out, frames, 2);
        trace.record("temporal_encoder_out", &[2, 1, dim]);
        let mq_out = g.slice_rows(queries, 0, 1);
        let sq_out = g.slice_rows(queries, 1, 1);
        let mean = self.mean_out.forward(g, mq_out);
        let log_variance = self.logvar_out.forward(g, sq_out);
        Ok((mean, log_variance))
    }

    /// Encoder front end for a sequence; `desc` is ignored in the no-spatial-transformer variant.
    pub fn encode(
        &self,
        g: &mut Graph,
        desc: Var,
        globals: Var,
        frames: usize,
        trace: &mut ShapeTrace,
    ) -> Result<(Var, Var)> {
        let feats = match &self.front {
            EncoderFront::Spatial(enc) => {
                enc.forward(g, desc, frames, self.config.bone_count(), trace)?
            }
            EncoderFront::Global(proj) => {
                if g.value(globals).dim() != (frames, self.config.global_dim) {
                    return Err(Error::dim("global features must be T × d_g"));
                }
                proj.forward(g, globals)
            }
        };
        self.encode_temporal(g, feats, trace)
    }

    /// `z = μ + exp(½ log σ²) ⊙ ε`.
    pub fn reparameterize(
        &self,
        g: &mut Graph,
        mean: Var,
        log_variance: Var,
        noise: &[f64],
    ) -> Result<Var> {
        if noise.len() != g.value(mean).len() {
            return Err(Error::dim("noise length differs from latent dimension"));
        }
        let half = g.scale(log_variance, 0.5);
        let std = g.exp(half);
        let eps =
            g.constant(Array2::from_shape_vec((1, noise.len()), noise.to_vec()).expect("row"));
        let scaled = g.mul(std, eps);
        Ok(g.add(mean, scaled))
    }

    /// Temporal decoder: timestamp queries `1..=T` attend to `z` → `T × D`.
    pub fn decode_temporal(
        &self,
        g: &mut Graph,
        latent: Var,
        frames: usize,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        self.check_frames(frames)?;
        if g.value(latent).dim() != (1, self.config.dim) {
            return Err(Error::dim(format!(
                "latent must be 1 × {}",
                self.config.dim
            )));
        }
        let stamps: Vec<f64> = (1..=frames).map(|t| t as f64).collect();
        let queries = g.constant(sinusoidal_encoding(&stamps, self.config.dim));
        let out = self.temporal_decoder.forward(g, queries, frames, latent, 1);
        trace.record("temporal_decoder_out", &[frames, 1, self.config.dim]);
        Ok(out)
    }

    /// Spatial decoder: bone-index queries `2..=B` attend to each `z_t` → `T × 3(B−1)`.
    pub fn decode_spatial(
        &self,
        g: &mut Graph,
        frame_feats: Var,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        let (frames, dim) = g.value(frame_feats).dim();
        if dim != self.config.dim {
            return Err(Error::dim(format!(
                "frame features have width {dim}, expected {}",
                self.config.dim
            )));
        }
        let bones = self.config.bone_count();
        match &self.back {
            DecoderBack::Spatial { decoder, rotation } => {
                trace.record("spatial_decoder_in", &[1, frames, dim]);
                let idx: Vec<f64> = (2..=self.config.joint_count).map(|b| b as f64).collect();
                let bone_queries = sinusoidal_encoding(&idx, dim);
                let tiled = Array2::from_shape_fn((frames * bones, dim), |(r, c)| {
                    bone_queries[[r % bones, c]]
                });
                let queries = g.constant(tiled);
                let out = decoder.forward(g, queries, bones, frame_feats, 1);
                trace.record("spatial_decoder_out", &[bones, frames, dim]);
                let rot = rotation.forward(g, out);
                trace.record("rotations", &[frames, bones, 3]);
                Ok(g.reshape(rot, frames, 3 * bones))
            }
            DecoderBack::Direct(lin) => {
                let rot = lin.forward(g, frame_feats);
                trace.record("rotations", &[frames, bones, 3]);
                Ok(rot)
            }
        }
    }

    pub fn decode(
        &self,
        g: &mut Graph,
        latent: Var,
        frames: usize,
        trace: &mut ShapeTrace,
    ) -> Result<Var> {
        let feats = self.decode_temporal(g, latent, frames, trace)?;
        self.decode_spatial(g, feats, trace)
    }

    /// Full pass; `noise = None` decodes the mean.
    pub fn vae_forward(
        &self,
        g: &mut Graph,
        desc: Var,
        globals: Var,
        frames: usize,
        noise: Option<&[f64]>,
        trace: &mut ShapeTrace,
    ) -> Result<VaeForward> {
        let (mean, log_variance) = self.encode(g, desc, globals, frames, trace)?;
        let latent = match noise {
            Some(eps) => self.reparameterize(g, mean, log_variance, eps)?,
            None => mean,
        };
        trace.record("latent", &[1, 1, self.config.dim]);
        let bones = self.decode(g, latent, frames, trace)?;
        Ok(VaeForward {
            mean,
            log_variance,
            latent,
            bones,
        })
    }

    fn globals_matrix(&self, features: &[FrameFeatures]) -> Result<Array2<f64>> {
        let d = self.config.global_dim;
        let mut m = Array2::zeros((features.len(), d));
        for (t, f) in features.iter().enumerate() {
            if f.global.len() != d {
                return Err(Error::dim(format!(
                    "global feature has {} entries, expected {d}",
                    f.global.len()
                )));
            }
            m.row_mut(t).assign(&ndarray::ArrayView1::from(&f.global));
        }
        Ok(m)
    }

    /// Rigid pose predicted from a global feature vector.
    pub fn predict_rigid_pose(&self, global: &[f64]) -> Result<[f64; 6]> {
        if global.len() != self.config.global_dim {
            return Err(Error::dim("global feature width differs from model config"));
        }
        let mut g = Graph::new(&self.store);
        let x =
            g.constant(Array2::from_shape_vec((1, global.len()), global.to_vec()).expect("row"));
        let r = self.rigid(&mut g, x);
        let v = g.value(r);
        Ok(std::array::from_fn(|i| v[[0, i]]))
    }

    /// Rigid poses for every frame, then the descriptors they induce.
    pub fn sequence_inputs(
        &self,
        features: &[FrameFeatures],
        skel: &Skeleton,
        cam: &Camera,
    ) -> Result<(Array2<f64>, Vec<[f64; 6]>, Array2<f64>)> {
        let globals = self.globals_matrix(features)?;
        let mut g = Graph::new(&self.store);
        let x = g.constant(globals.clone());
        let r = self.rigid(&mut g, x);
        let rv = g.value(r);
        let rigid: Vec<[f64; 6]> = (0..features.len())
            .map(|t| std::array::from_fn(|i| rv[[t, i]]))
            .collect();
        let desc = build_sequence_descriptors(&self.config, features, skel, &rigid, cam)?;
        Ok((globals, rigid, desc))
    }

    /// Single-frame pose prediction (rigid head + pose network).
    pub fn predict_pose_singleframe(
        &self,
        features: &FrameFeatures,
        skel: &Skeleton,
        cam: &Camera,
    ) -> Result<Pose> {
        let frames = std::slice::from_ref(features);
        let (_, rigid, desc) = self.sequence_inputs(frames, skel, cam)?;
        let mut g = Graph::new(&self.store);
        let d = g.constant(desc);
        let bones = self.single_frame_bones(&mut g, d, 1)?;
        let mut params = rigid[0].to_vec();
        params.extend(g.value(bones).iter());
        Pose::from_params(&params)
    }

    /// Posterior over the latent for a sequence of frames.
    pub fn encode_sequence(
        &self,
        features: &[FrameFeatures],
        skel: &Skeleton,
        cam: &Camera,
    ) -> Result<LatentDistribution> {
        let (globals, _, desc) = self.sequence_inputs(features, skel, cam)?;
        let mut g = Graph::new(&self.store);
        let d = g.constant(desc);
        let gl = g.constant(globals);
        let (m, lv) = self.encode(&mut g, d, gl, features.len(), &mut ShapeTrace::off())?;
        Ok(LatentDistribution {
            mean: g.value(m).iter().copied().collect(),
            log_variance: g.value(lv).iter().copied().collect(),
        })
    }

    /// Bone rotations (one `3(B−1)` row per frame) decoded from a latent code.
    pub fn decode_latent(&self, latent: &[f64], frames: usize) -> Result<Vec<Vec<f64>>> {
        if latent.len() != self.config.dim {
            return Err(Error::dim(format!(
                "latent has {} entries, expected {}",
                latent.len(),
                self.config.dim
            )));
        }
        let mut g = Graph::new(&self.store);
        let z =
            g.constant(Array2::from_shape_vec((1, latent.len()), latent.to_vec()).expect("row"));
        let out = self.decode(&mut g, z, frames, &mut ShapeTrace::off())?;
        Ok(g.value(out)
            .rows()
            .into_iter()
            .map(|r| r.to_vec())
            .collect())
    }

    /// Draws `z ~ N(0, I)` and decodes it; the rigid pose is left to the caller.
    pub fn sample_prior<R: Rng>(&self, rng: &mut R, frames: usize) -> Result<Vec<Vec<f64>>> {
        let z = self.sample_latent(rng);
        self.decode_latent(&z, frames)
    }

    pub fn sample_latent<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.config.dim)
            .map(|_| rng.sample(StandardNormal))
            .collect()
    }

    /// Per-parameter mask of parameters whose name starts with any of `prefixes`.
    pub fn prefix_mask(&self, prefixes: &[&str]) -> Vec<bool> {
        self.store
            .ids()
            .map(|id| prefixes.iter().any(|p| self.store.name(id).starts_with(p)))
            .collect()
    }
}
