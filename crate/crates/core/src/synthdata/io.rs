use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusConfig, GaitKind, SequenceRecord, Split};
use crate::container::{ArrayData, ArrayFile};
use crate::error::{Error, Result};
use crate::skeleton::{Camera, Mask, Pose, Skeleton};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshReference {
    pub generator: String,
    pub falloff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub file: String,
    pub gait: GaitKind,
    pub frames: usize,
    /// Number of draws needed before the clip survived motion filtering.
    pub attempts: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: CorpusConfig,
    pub skeleton: Skeleton,
    pub mesh: MeshReference,
    pub camera: Camera,
    pub motion_threshold: f64,
    pub dropped_fraction: f64,
    pub sequences: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::format(
                None,
                format!(
                    "dataset format version {} is not supported (expected {FORMAT_VERSION})",
                    self.format_version
                ),
            ));
        }
        self.skeleton.validate()?;
        let mut ids: Vec<&str> = self.sequences.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("sequence ids must be unique"));
        }
        Ok(())
    }
}

/// Encodes one record as an array container.
pub fn write_sequence(rec: &SequenceRecord) -> Result<ArrayFile> {
    let t = rec.len();
    let mut f = ArrayFile::new();
    let p = rec
        .poses
        .first()
        .map(|p| 6 + 3 * p.bone_count())
        .unwrap_or(0);
    f.push_f64(
        "poses",
        &[t, p],
        rec.poses.iter().flat_map(Pose::to_params).collect(),
    )?;
    let k = rec.keypoints.first().map(Vec::len).unwrap_or(0);
    f.push_f64(
        "keypoints",
        &[t, k, 2],
        rec.keypoints
            .iter()
            .flatten()
            .flat_map(|p| [p.x, p.y])
            .collect(),
    )?;
    let (h, w) = rec
        .masks
        .first()
        .map(|m| (m.height, m.width))
        .unwrap_or((0, 0));
    f.push(
        "masks",
        &[t, h, w],
        ArrayData::U8(
            rec.masks
                .iter()
                .flat_map(|m| m.data.iter().copied())
                .collect(),
        ),
    )?;
    f.push_f64("flow", &[t], rec.flow.clone())?;
    f.push_f64(
        "boxes",
        &[t, 4],
        rec.boxes.iter().flatten().copied().collect(),
    )?;
    let g = rec.global_features.first().map(Vec::len).unwrap_or(0);
    f.push_f64(
        "global_features",
        &[t, g],
        rec.global_features.iter().flatten().copied().collect(),
    )?;
    let c = &rec.camera;
    f.push_f64(
        "camera",
        &[5],
        vec![
            c.scale,
            c.height as f64,
            c.width as f64,
            c.principal[0],
            c.principal[1],
        ],
    )?;
    f.push(
        "meta",
        &[2],
        ArrayData::U64(vec![rec.feature_seed, rec.gait.index() as u64]),
    )?;
    f.push(
        "source_frames",
        &[t],
        ArrayData::U64(rec.source_frames.iter().map(|v| *v as u64).collect()),
    )?;
    Ok(f)
}

fn expect_shape(name: &str, shape: &[usize], want: &[usize]) -> Result<()> {
    if shape != want {
        return Err(Error::format(
            None,
            format!("array {name:?} has shape {shape:?}, expected {want:?}"),
        ));
    }
    Ok(())
}

/// Decodes a record written by [`write_sequence`].
pub fn read_sequence(f: &ArrayFile, id: &str) -> Result<SequenceRecord> {
    let (shape, poses) = f.f64("poses")?;
    if shape.len() != 2 {
        return Err(Error::format(None, "poses must be 2-D"));
    }
    let (t, p) = (shape[0], shape[1]);
    let poses = poses
        .chunks(p.max(1))
        .take(t)
        .map(Pose::from_params)
        .collect::<Result<Vec<_>>>()?;
    let (kshape, kp) = f.f64("keypoints")?;
    if kshape.len() != 3 || kshape[0] != t || kshape[2] != 2 {
        return Err(Error::format(
            None,
            format!("keypoints have shape {kshape:?}"),
        ));
    }
    let k = kshape[1];
    let keypoints = (0..t)
        .map(|i| {
            (0..k)
                .map(|j| Vector2::new(kp[2 * (i * k + j)], kp[2 * (i * k + j) + 1]))
                .collect()
        })
        .collect();
    let (mshape, md) = f.u8("masks")?;
    if mshape.len() != 3 || mshape[0] != t {
        return Err(Error::format(None, format!("masks have shape {mshape:?}")));
    }
    let (h, w) = (mshape[1], mshape[2]);
    let masks = (0..t)
        .map(|i| Mask {
            height: h,
            width: w,
            data: md[i * h * w..(i + 1) * h * w].to_vec(),
        })
        .collect();
    let (fshape, flow) = f.f64("flow")?;
    expect_shape("flow", fshape, &[t])?;
    let (bshape, boxes) = f.f64("boxes")?;
    expect_shape("boxes", bshape, &[t, 4])?;
    let (gshape, gf) = f.f64("global_features")?;
    if gshape.len() != 2 || gshape[0] != t {
        return Err(Error::format(
            None,
            format!("global_features have shape {gshape:?}"),
        ));
    }
    let (cshape, cam) = f.f64("camera")?;
    expect_shape("camera", cshape, &[5])?;
    let camera = Camera::new(cam[0], cam[1] as usize, cam[2] as usize, [cam[3], cam[4]])?;
    let (meta_shape, meta) = f.u64("meta")?;
    expect_shape("meta", meta_shape, &[2])?;
    let (sshape, src) = f.u64("source_frames")?;
    expect_shape("source_frames", sshape, &[t])?;
    Ok(SequenceRecord {
        id: id.to_string(),
        gait: GaitKind::from_index(meta[1] as u8)?,
        camera,
        poses,
        keypoints,
        masks,
        flow: flow.to_vec(),
        boxes: boxes.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
        global_features: gf
            .chunks(gshape[1].max(1))
            .take(t)
            .map(<[f64]>::to_vec)
            .collect(),
        feature_seed: meta[0],
        source_frames: src.iter().map(|v| *v as usize).collect(),
    })
}

/// Writes `manifest.json` plus one container per sequence into `dir`.
pub fn write_dataset(dir: &Path, corpus: &Corpus) -> Result<()> {
    corpus.manifest.validate()?;
    if corpus.manifest.sequences.len() != corpus.records.len() {
        return Err(Error::dim("manifest and record counts differ"));
    }
    fs::create_dir_all(dir)?;
    for (entry, rec) in corpus.manifest.sequences.iter().zip(&corpus.records) {
        write_sequence(rec)?.write(&dir.join(&entry.file))?;
    }
    let json = serde_json::to_string_pretty(&corpus.manifest)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path)?;
    let manifest: DatasetManifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(Some(path.clone()), e.to_string()))?;
    manifest.validate().map_err(|e| match e {
        Error::Format { reason, .. } => Error::format(Some(path), reason),
        other => other,
    })?;
    Ok(manifest)
}

pub fn read_dataset(dir: &Path) -> Result<Corpus> {
    let manifest = read_manifest(dir)?;
    let records = manifest
        .sequences
        .iter()
        .map(|e| {
            let path = dir.join(&e.file);
            let rec = read_sequence(&ArrayFile::read(&path)?, &e.id).map_err(|err| match err {
                Error::Format { reason, .. } => Error::format(Some(path.clone()), reason),
                other => other,
            })?;
            if rec.len() != e.frames {
                return Err(Error::format(
                    Some(path),
                    format!("expected {} frames, found {}", e.frames, rec.len()),
                ));
            }
            if rec
                .poses
                .iter()
                .any(|p| p.bone_count() != manifest.skeleton.bone_count())
            {
                return Err(Error::dim(format!(
                    "sequence {} does not match the skeleton",
                    e.id
                )));
            }
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Corpus { manifest, records })
}
