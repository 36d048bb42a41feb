use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motionvae::{MotionModel, ShapeTrace};
use crate::nn::{Adam, AdamConfig, Graph, ParamStore, Var};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransitionConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    /// Boundary objective below which optimization stops.
    pub tolerance: f64,
}

impl Default for TransitionConfig {
    fn default() -> Self {
        Self {
            iterations: 100,
            learning_rate: 1e-2,
            tolerance: 1e-4,
        }
    }
}

impl TransitionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(
                "transition learning_rate must be positive".into(),
            ));
        }
        if !(self.tolerance.is_finite() && self.tolerance >= 0.0) {
            return Err(Error::Config(
                "transition tolerance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Concatenated segments and transitions: `(2n − 1)·T` rows of bone rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongSequence {
    pub bones: Vec<Vec<f64>>,
    pub segment_latents: Vec<Vec<f64>>,
    pub transition_latents: Vec<Vec<f64>>,
    /// Boundary objective of each transition before and after optimization.
    pub initial_objective: Vec<f64>,
    pub final_objective: Vec<f64>,
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
    /// Euclidean distance between the bone parameters of consecutive segments joined directly.
    pub naive_jumps: Vec<f64>,
    /// Larger of the two seam distances around each transition.
    pub stitched_jumps: Vec<f64>,
}

fn row_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn objective_graph(
    g: &mut Graph,
    model: &MotionModel,
    z: Var,
    frames: usize,
    end: &[f64],
    start: &[f64],
) -> Result<Var> {
    let out = model.decode(g, z, frames, &mut ShapeTrace::off())?;
    let width = g.value(out).ncols();
    if end.len() != width || start.len() != width {
        return Err(Error::dim(format!(
            "boundary rows must have {width} entries"
        )));
    }
    let first = g.slice_rows(out, 0, 1);
    let last = g.slice_rows(out, frames - 1, 1);
    let a = g.constant(Array2::from_shape_vec((1, width), end.to_vec()).expect("row"));
    let b = g.constant(Array2::from_shape_vec((1, width), start.to_vec()).expect("row"));
    let d1 = g.sub(first, a);
    let d2 = g.sub(last, b);
    let s1 = g.square(d1);
    let s2 = g.square(d2);
    let both = g.add(s1, s2);
    let s = g.sum(both);
    Ok(g.scale(s, 1.0 / width as f64))
}

/// Mismatch between a transition decoded from `latent` and its neighbours:
/// `mse(first, end) + mse(last, start)`, where `end` is the previous segment's
/// last frame and `start` the next segment's first frame.
pub fn transition_objective(
    model: &MotionModel,
    latent: &[f64],
    frames: usize,
    end: &[f64],
    start: &[f64],
) -> Result<f64> {
    let mut g = Graph::new(&model.store);
    let z = g.constant(
        Array2::from_shape_vec((1, latent.len()), latent.to_vec())
            .map_err(|e| Error::dim(e.to_string()))?,
    );
    let l = objective_graph(&mut g, model, z, frames, end, start)?;
    Ok(g.scalar(l))
}

/// Result of fitting one transition latent.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionFit {
    /// Best latent seen.
    pub latent: Vec<f64>,
    pub initial: f64,
    pub best: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimizes [`transition_objective`] over the latent with Adam, starting from `init`.
pub fn fit_transition(
    model: &MotionModel,
    init: Vec<f64>,
    frames: usize,
    end: &[f64],
    start: &[f64],
    cfg: &TransitionConfig,
) -> Result<TransitionFit> {
    let d = init.len();
    let mut zs = ParamStore::default();
    let id = zs.add(
        "z",
        Array2::from_shape_vec((1, d), init.clone()).expect("row"),
    );
    let mut adam = Adam::new(
        AdamConfig {
            learning_rate: cfg.learning_rate,
            ..AdamConfig::default()
        },
        &zs,
    );
    let mut best = (f64::INFINITY, init);
    let mut initial = f64::NAN;
    let mut iterations = 0;
    loop {
        let mut g = Graph::new(&model.store);
        let z = g.input(zs.value(id).clone());
        let l = objective_graph(&mut g, model, z, frames, end, start)?;
        let value = g.scalar(l);
        if !value.is_finite() {
            return Err(Error::invalid("transition objective became non-finite"));
        }
        if iterations == 0 {
            initial = value;
        }
        if value < best.0 {
            best = (value, zs.value(id).iter().copied().collect());
        }
        if value <= cfg.tolerance || iterations >= cfg.iterations {
            break;
        }
        let grad = g
            .backward(l)
            .wrt(z)
            .cloned()
            .unwrap_or_else(|| Array2::zeros((1, d)));
        adam.update(&mut zs, &[grad], &[false]);
        iterations += 1;
    }
    let converged = best.0 <= cfg.tolerance;
    if !converged {
        log::warn!(
            "transition did not reach tolerance {} in {} iterations (best {:.3e})",
            cfg.tolerance,
            cfg.iterations,
            best.0
        );
    }
    Ok(TransitionFit {
        latent: best.1,
        initial,
        best: best.0,
        iterations,
        converged,
    })
}

/// Decodes the given segment latents and joins consecutive segments with
/// transitions whose latent is optimized from the midpoint of its neighbours.
pub fn stitch_segments(
    model: &MotionModel,
    latents: &[Vec<f64>],
    frames: usize,
    cfg: &TransitionConfig,
) -> Result<LongSequence> {
    cfg.validate()?;
    if latents.is_empty() {
        return Err(Error::invalid("at least one segment is required"));
    }
    if frames < 2 {
        return Err(Error::invalid("segments need at least 2 frames"));
    }
    let segments = latents
        .iter()
        .map(|z| model.decode_latent(z, frames))
        .collect::<Result<Vec<_>>>()?;
    let mut out = LongSequence {
        bones: segments[0].clone(),
        segment_latents: latents.to_vec(),
        transition_latents: Vec::new(),
        initial_objective: Vec::new(),
        final_objective: Vec::new(),
        iterations: Vec::new(),
        converged: Vec::new(),
        naive_jumps: Vec::new(),
        stitched_jumps: Vec::new(),
    };
    for i in 1..segments.len() {
        let end = segments[i - 1].last().expect("non-empty");
        let start = &segments[i][0];
        let mid: Vec<f64> = latents[i - 1]
            .iter()
            .zip(&latents[i])
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let t = fit_transition(model, mid, frames, end, start, cfg)?;
        let bridge = model.decode_latent(&t.latent, frames)?;
        out.naive_jumps.push(row_distance(end, start));
        out.stitched_jumps.push(
            row_distance(end, &bridge[0])
                .max(row_distance(bridge.last().expect("non-empty"), start)),
        );
        out.bones.extend(bridge);
        out.bones.extend(segments[i].iter().cloned());
        out.transition_latents.push(t.latent);
        out.initial_objective.push(t.initial);
        out.final_objective.push(t.best);
        out.iterations.push(t.iterations);
        out.converged.push(t.converged);
    }
    Ok(out)
}

/// `n` prior segments of `frames` frames each, joined by optimized transitions.
pub fn generate_long_sequence<R: Rng>(
    model: &MotionModel,
    segments: usize,
    frames: usize,
    cfg: &TransitionConfig,
    rng: &mut R,
) -> Result<LongSequence> {
    let latents: Vec<Vec<f64>> = (0..segments).map(|_| model.sample_latent(rng)).collect();
    stitch_segments(model, &latents, frames, cfg)
}
