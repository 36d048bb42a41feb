//! Python bindings: corpus generation, skinning, training, sampling and metrics.
//!
//! Poses cross the boundary as flat parameter lists (`[rigid 3, translation 3, bones …]`),
//! keypoints as `[[x, y], …]` per frame and configurations as JSON strings.

use std::path::PathBuf;

use nalgebra::Vector2;
use pyo3::exceptions::{PyIOError, PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use quadmotion::metrics::{
    acceleration_error, motion_chamfer_distance, pck_at_threshold, velocity_error,
};
use quadmotion::motionvae::MotionModel;
use quadmotion::skeleton::{
    forward_kinematics, keypoints2d, linear_blend_skinning, quadruped, quadruped_mesh, Keypoints,
    Pose,
};
use quadmotion::synthdata::{generate_corpus, read_dataset, write_dataset, CorpusConfig, Split};
use quadmotion::trainer::{
    evaluate_reconstruction, generate_long_sequence, load_checkpoint, ReconstructionMode,
    TrainConfig, TrainData, TransitionConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn err(e: quadmotion::Error) -> PyErr {
    match e {
        quadmotion::Error::Io(e) => PyIOError::new_err(e.to_string()),
        quadmotion::Error::NonFinite { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py(py: Python<'_>, v: &serde_json::Value) -> PyResult<Py<PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None(),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any().unbind(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any().unbind(),
            None => n
                .as_f64()
                .unwrap_or(f64::NAN)
                .into_pyobject(py)?
                .into_any()
                .unbind(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any().unbind(),
        Value::Array(a) => {
            let items = a
                .iter()
                .map(|x| to_py(py, x))
                .collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any().unbind()
        }
        Value::Object(o) => {
            let d = PyDict::new(py);
            for (k, x) in o {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any().unbind()
        }
    })
}

fn serialize<T: serde::Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    to_py(py, &serde_json::to_value(value).map_err(json_err)?)
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(json: Option<&str>) -> PyResult<T> {
    match json {
        Some(s) => serde_json::from_str(s).map_err(json_err),
        None => Ok(T::default()),
    }
}

fn to_keypoints(frames: Vec<Vec<[f64; 2]>>) -> Vec<Keypoints> {
    frames
        .into_iter()
        .map(|f| f.into_iter().map(|[x, y]| Vector2::new(x, y)).collect())
        .collect()
}

fn from_keypoints(kps: &[Keypoints]) -> Vec<Vec<[f64; 2]>> {
    kps.iter()
        .map(|f| f.iter().map(|p| [p.x, p.y]).collect())
        .collect()
}

fn split_arg(split: Option<&str>) -> PyResult<Option<Split>> {
    match split {
        None => Ok(None),
        Some("train") => Ok(Some(Split::Train)),
        Some("eval") => Ok(Some(Split::Eval)),
        Some(other) => Err(PyValueError::new_err(format!("unknown split {other:?}"))),
    }
}

/// Number of skeleton joints and pose parameters of the built-in quadruped.
#[pyfunction]
fn skeleton_info(py: Python<'_>) -> PyResult<Py<PyAny>> {
    let s = quadruped();
    let d = PyDict::new(py);
    d.set_item("joints", s.joint_count())?;
    d.set_item("bones", s.bone_count())?;
    d.set_item("params", s.param_count())?;
    d.set_item("names", s.names.clone())?;
    Ok(d.into_any().unbind())
}

/// World-space joint positions for one pose.
#[pyfunction]
fn joint_positions(pose: Vec<f64>) -> PyResult<Vec<[f64; 3]>> {
    let skel = quadruped();
    let pose = Pose::from_params(&pose).map_err(err)?;
    let joints = forward_kinematics(&skel, &pose).map_err(err)?;
    Ok(joints.iter().map(|p| [p.x, p.y, p.z]).collect())
}

/// Vertices of the built-in quadruped mesh skinned to `pose`, plus its triangle list.
#[pyfunction]
#[pyo3(signature = (pose, falloff = 0.15))]
fn skin(pose: Vec<f64>, falloff: f64) -> PyResult<(Vec<[f64; 3]>, Vec<[usize; 3]>)> {
    let skel = quadruped();
    let mesh = quadruped_mesh(&skel, falloff);
    let pose = Pose::from_params(&pose).map_err(err)?;
    let verts = linear_blend_skinning(&mesh, &skel, &pose).map_err(err)?;
    Ok((
        verts.iter().map(|p| [p.x, p.y, p.z]).collect(),
        mesh.faces.clone(),
    ))
}

#[pyfunction]
#[pyo3(signature = (pred, gt, height, width, alpha = 0.1))]
fn pck(
    pred: Vec<[f64; 2]>,
    gt: Vec<[f64; 2]>,
    height: usize,
    width: usize,
    alpha: f64,
) -> PyResult<f64> {
    let p: Vec<_> = pred.into_iter().map(|[x, y]| Vector2::new(x, y)).collect();
    let g: Vec<_> = gt.into_iter().map(|[x, y]| Vector2::new(x, y)).collect();
    pck_at_threshold(&p, &g, height, width, alpha).map_err(err)
}

#[pyfunction(name = "velocity_error")]
fn py_velocity_error(pred: Vec<Vec<[f64; 2]>>, gt: Vec<Vec<[f64; 2]>>) -> PyResult<f64> {
    velocity_error(&to_keypoints(pred), &to_keypoints(gt)).map_err(err)
}

#[pyfunction(name = "acceleration_error")]
fn py_acceleration_error(pred: Vec<Vec<[f64; 2]>>, gt: Vec<Vec<[f64; 2]>>) -> PyResult<f64> {
    acceleration_error(&to_keypoints(pred), &to_keypoints(gt)).map_err(err)
}

/// Returns `(forward, backward, mcd)`.
#[pyfunction(name = "motion_chamfer_distance")]
fn py_motion_chamfer_distance(
    generated: Vec<Vec<Vec<[f64; 2]>>>,
    gt: Vec<Vec<Vec<[f64; 2]>>>,
) -> PyResult<(f64, f64, f64)> {
    let g: Vec<_> = generated.into_iter().map(to_keypoints).collect();
    let r: Vec<_> = gt.into_iter().map(to_keypoints).collect();
    let c = motion_chamfer_distance(&g, &r).map_err(err)?;
    Ok((c.forward, c.backward, c.mcd))
}

/// Synthetic dataset of quadruped clips.
#[pyclass(module = "quadmotion")]
struct Corpus {
    inner: quadmotion::synthdata::Corpus,
}

impl Corpus {
    fn record(&self, id: &str) -> PyResult<&quadmotion::synthdata::SequenceRecord> {
        self.inner
            .records
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| PyKeyError::new_err(id.to_string()))
    }
}

#[pymethods]
impl Corpus {
    /// Generates a corpus; `config` is a JSON object with any corpus settings to change.
    #[staticmethod]
    #[pyo3(signature = (seed = 0, config = None))]
    fn generate(seed: u64, config: Option<&str>) -> PyResult<Self> {
        let cfg: CorpusConfig = parse_json(config)?;
        Ok(Self {
            inner: generate_corpus(&cfg, seed).map_err(err)?,
        })
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: read_dataset(&path).map_err(err)?,
        })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        write_dataset(&path, &self.inner).map_err(err)
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }

    #[pyo3(signature = (split = None))]
    fn ids(&self, split: Option<&str>) -> PyResult<Vec<String>> {
        Ok(match split_arg(split)? {
            Some(s) => self
                .inner
                .split(s)
                .into_iter()
                .map(|r| r.id.clone())
                .collect(),
            None => self.inner.records.iter().map(|r| r.id.clone()).collect(),
        })
    }

    /// Pose parameters per frame.
    fn poses(&self, id: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.record(id)?.poses.iter().map(Pose::to_params).collect())
    }

    /// Projected ground-truth joints per frame.
    fn keypoints(&self, id: &str) -> PyResult<Vec<Vec<[f64; 2]>>> {
        Ok(from_keypoints(&self.record(id)?.keypoints))
    }

    /// Projects a pose with the camera of clip `id`.
    fn project(&self, id: &str, pose: Vec<f64>) -> PyResult<Vec<[f64; 2]>> {
        let rec = self.record(id)?;
        let pose = Pose::from_params(&pose).map_err(err)?;
        let kps = keypoints2d(self.inner.skeleton(), &pose, &rec.camera).map_err(err)?;
        Ok(kps.iter().map(|p| [p.x, p.y]).collect())
    }

    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        serialize(py, &self.inner.manifest.config)
    }
}

/// Pose network plus motion VAE.
#[pyclass(module = "quadmotion")]
struct Model {
    inner: MotionModel,
    train_config: TrainConfig,
}

#[pymethods]
impl Model {
    /// Freshly initialized model; `config` is a JSON training configuration.
    #[new]
    #[pyo3(signature = (config = None, seed = 0))]
    fn new(config: Option<&str>, seed: u64) -> PyResult<Self> {
        let train_config: TrainConfig = parse_json(config)?;
        train_config.validate().map_err(err)?;
        Ok(Self {
            inner: MotionModel::new(train_config.model.clone(), seed).map_err(err)?,
            train_config,
        })
    }

    /// Loads the model stored in a training checkpoint file.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (state, train_config) = load_checkpoint(&path).map_err(err)?;
        Ok(Self {
            inner: state.model,
            train_config,
        })
    }

    #[getter]
    fn latent_dim(&self) -> usize {
        self.inner.config.dim
    }

    #[getter]
    fn frames(&self) -> usize {
        self.train_config.frames
    }

    fn config(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        serialize(py, &self.train_config)
    }

    /// Bone rotations per frame decoded from `latent`.
    fn decode(&self, latent: Vec<f64>, frames: usize) -> PyResult<Vec<Vec<f64>>> {
        self.inner.decode_latent(&latent, frames).map_err(err)
    }

    /// `count` motions drawn from the prior, each a list of bone-rotation rows.
    #[pyo3(signature = (count, frames = None, seed = 0))]
    fn sample(
        &self,
        count: usize,
        frames: Option<usize>,
        seed: u64,
    ) -> PyResult<Vec<Vec<Vec<f64>>>> {
        let frames = frames.unwrap_or(self.train_config.frames);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count)
            .map(|_| self.inner.sample_prior(&mut rng, frames))
            .collect::<quadmotion::Result<_>>()
            .map_err(err)
    }

    /// `segments` prior segments joined by optimized transitions.
    #[pyo3(signature = (segments, frames = None, seed = 0))]
    fn generate_long(
        &self,
        py: Python<'_>,
        segments: usize,
        frames: Option<usize>,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        let frames = frames.unwrap_or(self.train_config.frames);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg: TransitionConfig = self.train_config.transition;
        let long =
            generate_long_sequence(&self.inner, segments, frames, &cfg, &mut rng).map_err(err)?;
        serialize(py, &long)
    }

    /// Reconstruction metrics on the held-out clips of `corpus`.
    #[pyo3(signature = (corpus, mode = "vae"))]
    fn evaluate(&self, py: Python<'_>, corpus: &Corpus, mode: &str) -> PyResult<Py<PyAny>> {
        let mode: ReconstructionMode =
            serde_json::from_value(serde_json::Value::String(mode.into())).map_err(json_err)?;
        let eval = corpus.inner.split(Split::Eval);
        let report = evaluate_reconstruction(
            &self.inner,
            &eval,
            corpus.inner.skeleton(),
            &self.train_config.features,
            mode,
        )
        .map_err(err)?;
        serialize(py, &report)
    }
}

/// Default training configuration as JSON.
#[pyfunction]
fn default_train_config() -> PyResult<String> {
    serde_json::to_string_pretty(&TrainConfig::default()).map_err(json_err)
}

/// Default corpus configuration as JSON.
#[pyfunction]
fn default_corpus_config() -> PyResult<String> {
    serde_json::to_string_pretty(&CorpusConfig::default()).map_err(json_err)
}

/// Runs both training phases on the training split and returns the model with
/// the per-epoch losses of each phase. Checkpoints go to `out` when given.
#[pyfunction]
#[pyo3(signature = (corpus, config = None, out = None))]
fn train(
    py: Python<'_>,
    corpus: &Corpus,
    config: Option<&str>,
    out: Option<PathBuf>,
) -> PyResult<(Model, Py<PyAny>, Py<PyAny>)> {
    let cfg: TrainConfig = parse_json(config)?;
    cfg.validate().map_err(err)?;
    let data = TrainData::from_corpus(&corpus.inner, Split::Train, &cfg.features).map_err(err)?;
    let (second, first) = py
        .detach(|| quadmotion::trainer::train(&data, &cfg, out.as_deref()))
        .map_err(err)?;
    let model = Model {
        inner: second.model,
        train_config: cfg,
    };
    Ok((
        model,
        serialize(py, &first)?,
        serialize(py, &second.history)?,
    ))
}

#[pymodule]
#[pyo3(name = "quadmotion")]
fn quadmotion_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(skeleton_info, m)?)?;
    m.add_function(wrap_pyfunction!(joint_positions, m)?)?;
    m.add_function(wrap_pyfunction!(skin, m)?)?;
    m.add_function(wrap_pyfunction!(pck, m)?)?;
    m.add_function(wrap_pyfunction!(py_velocity_error, m)?)?;
    m.add_function(wrap_pyfunction!(py_acceleration_error, m)?)?;
    m.add_function(wrap_pyfunction!(py_motion_chamfer_distance, m)?)?;
    m.add_function(wrap_pyfunction!(default_train_config, m)?)?;
    m.add_function(wrap_pyfunction!(default_corpus_config, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    Ok(())
}
