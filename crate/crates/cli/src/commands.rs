use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use quadmotion::container::ArrayFile;
use quadmotion::motionvae::MotionModel;
use quadmotion::skeleton::{quadruped, quadruped_mesh, Pose};
use quadmotion::synthdata::{
    generate_corpus, read_dataset, write_dataset, Corpus, Split, MANIFEST_FILE,
};
use quadmotion::trainer::{
    aggregate_metrics, canonical_chamfer, evaluate_sequences, generate_long_sequence,
    load_checkpoint, score_sequence, train_phase1, train_phase2, PseudoGTStore, TrainConfig,
    TrainData, CHECKPOINT_FILE, LOG_FILE, PSEUDO_GT_FILE,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::{obj, Command, Common, Invalid, PhaseArg, OUTPUT_ROOT_ENV};

pub const MOTIONS_FILE: &str = "motions.qma";
pub const REPORT_FILE: &str = "eval_report.json";
pub const DETAIL_FILE: &str = "eval_sequences.jsonl";

/// Relative paths are taken relative to the output root when it is set.
fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if path.is_relative() && !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    resolve(common.out.as_deref().unwrap_or(Path::new(default)))
}

fn load_config(common: &Common, extra: Vec<String>) -> Result<RunConfig> {
    let file = common.config.as_deref().map(resolve);
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    config::load(file.as_deref(), &overrides)
}

fn load_dataset(path: &Path) -> Result<Corpus> {
    let dir = resolve(path);
    if !dir.join(MANIFEST_FILE).is_file() {
        bail!(Invalid(format!("no dataset found at {}", dir.display())));
    }
    read_dataset(&dir).with_context(|| format!("reading dataset {}", dir.display()))
}

/// Accepts a checkpoint directory or the state file inside it.
fn checkpoint_file(path: &Path) -> Result<PathBuf> {
    let p = resolve(path);
    let file = if p.is_dir() {
        p.join(CHECKPOINT_FILE)
    } else {
        p
    };
    if !file.is_file() {
        bail!(Invalid(format!(
            "no checkpoint found at {}",
            file.display()
        )));
    }
    Ok(file)
}

fn load_model(path: &Path) -> Result<(MotionModel, TrainConfig)> {
    let file = checkpoint_file(path)?;
    let (state, cfg) =
        load_checkpoint(&file).with_context(|| format!("loading checkpoint {}", file.display()))?;
    Ok((state.model, cfg))
}

fn bone_rows(rec_poses: &[Pose]) -> Vec<Vec<f64>> {
    rec_poses.iter().map(Pose::bone_params).collect()
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Gendata {
            common,
            seed,
            force,
        } => gendata(&common, seed, force),
        Command::Train {
            common,
            data,
            phase,
            checkpoint,
            seed,
            no_temporal_smoothness,
            no_spatial_transformer,
        } => {
            let mut extra = Vec::new();
            if let Some(s) = seed {
                extra.push(format!("train.seed={s}"));
            }
            if no_temporal_smoothness {
                extra.push("train.no_temporal_smoothness=true".into());
            }
            if no_spatial_transformer {
                extra.push("train.model.spatial_transformer=false".into());
            }
            let cfg = load_config(&common, extra)?;
            train(
                &cfg,
                &out_dir(&common, "runs/train"),
                &data,
                phase,
                checkpoint.as_deref(),
            )
        }
        Command::Sample {
            common,
            checkpoint,
            count,
            segments,
            seed,
            obj,
        } => {
            let mut extra = Vec::new();
            if let Some(c) = count {
                extra.push(format!("sample.count={c}"));
            }
            if let Some(s) = segments {
                extra.push(format!("sample.segments={s}"));
            }
            if let Some(s) = seed {
                extra.push(format!("seed={s}"));
            }
            let cfg = load_config(&common, extra)?;
            sample(&cfg, &out_dir(&common, "runs/samples"), &checkpoint, obj)
        }
        Command::Animate {
            common,
            motions,
            index,
            data,
            sequence,
        } => {
            let cfg = load_config(&common, Vec::new())?;
            let out = out_dir(&common, "runs/animation");
            match (motions, data, sequence) {
                (Some(m), _, _) => animate_motion(&cfg, &out, &m, index),
                (None, Some(d), Some(s)) => animate_clip(&cfg, &out, &d, &s),
                _ => bail!(Invalid("give --motions, or --data with --sequence".into())),
            }
        }
        Command::Eval {
            common,
            checkpoint,
            data,
            ground_truth,
            seed,
        } => {
            let extra = seed.map(|s| vec![format!("seed={s}")]).unwrap_or_default();
            let cfg = load_config(&common, extra)?;
            eval(
                &cfg,
                &out_dir(&common, "runs/eval"),
                checkpoint.as_deref(),
                &data,
                ground_truth,
            )
        }
    }
}

fn gendata(common: &Common, seed: Option<u64>, force: bool) -> Result<()> {
    let extra = seed.map(|s| vec![format!("seed={s}")]).unwrap_or_default();
    let cfg = load_config(common, extra)?;
    let out = out_dir(common, "data");
    if out.is_dir() && out.read_dir()?.next().is_some() {
        if !force {
            bail!(Invalid(format!(
                "{} is not empty; pass --force to overwrite",
                out.display()
            )));
        }
        std::fs::remove_dir_all(&out)?;
    }
    let corpus = generate_corpus(&cfg.data, cfg.seed)?;
    write_dataset(&out, &corpus)?;
    config::echo(&cfg, &out)?;
    println!("seed {}", cfg.seed);
    print!("{}", statistics_table(&corpus));
    println!("wrote {}", out.display());
    Ok(())
}

/// Sequence and frame counts per split and gait.
pub fn statistics_table(corpus: &Corpus) -> String {
    let mut rows: BTreeMap<(String, &'static str), (usize, usize)> = BTreeMap::new();
    for e in &corpus.manifest.sequences {
        let split = format!("{:?}", e.split).to_lowercase();
        let r = rows.entry((split, e.gait.name())).or_default();
        r.0 += 1;
        r.1 += e.frames;
    }
    let mut s = format!(
        "{:<6} {:<8} {:>9} {:>7}\n",
        "split", "gait", "sequences", "frames"
    );
    let (mut n, mut f) = (0, 0);
    for ((split, gait), (seqs, frames)) in &rows {
        s += &format!("{split:<6} {gait:<8} {seqs:>9} {frames:>7}\n");
        n += seqs;
        f += frames;
    }
    s += &format!("{:<6} {:<8} {n:>9} {f:>7}\n", "total", "");
    s
}

fn train(
    cfg: &RunConfig,
    out: &Path,
    data: &Path,
    phase: PhaseArg,
    checkpoint: Option<&Path>,
) -> Result<()> {
    let corpus = load_dataset(data)?;
    if corpus.manifest.config.features != cfg.train.features {
        bail!(Invalid(
            "train.features differs from the feature configuration the dataset was generated with"
                .into()
        ));
    }
    let train_data = TrainData::from_corpus(&corpus, Split::Train, &cfg.train.features)?;
    config::echo(cfg, out)?;
    let tc = &cfg.train;
    let report = |name: &str, history: &[quadmotion::objectives::LossReport], epochs: usize| {
        if let Some(last) = history.last() {
            println!(
                "{name}: {} epochs, final total loss {:.6}",
                history.len(),
                last.total
            );
        }
        println!(
            "{name} checkpoint: {}",
            out.join("ckpt")
                .join(name)
                .join(format!("epoch_{epochs}"))
                .display()
        );
    };
    match phase {
        PhaseArg::One | PhaseArg::All => {
            let first = train_phase1(&train_data, tc, Some(out))?;
            report("phase1", &first.history, tc.phase1_epochs);
            if phase == PhaseArg::All {
                let second =
                    train_phase2(first.model, &first.pseudo_gt, &train_data, tc, Some(out))?;
                report("phase2", &second.history, tc.phase2_epochs);
            }
        }
        PhaseArg::Two => {
            let Some(ckpt) = checkpoint else {
                bail!(Invalid(
                    "--phase 2 needs --checkpoint pointing at a first-phase checkpoint".into()
                ));
            };
            let file = checkpoint_file(ckpt)?;
            let pseudo_file = file.with_file_name(PSEUDO_GT_FILE);
            if !pseudo_file.is_file() {
                bail!(Invalid(format!(
                    "no pseudo ground truth next to {}",
                    file.display()
                )));
            }
            let (state, _) = load_checkpoint(&file)?;
            let pseudo = PseudoGTStore::read(&pseudo_file)?;
            let second = train_phase2(state.model, &pseudo, &train_data, tc, Some(out))?;
            report("phase2", &second.history, tc.phase2_epochs);
        }
    }
    println!("log: {}", out.join(LOG_FILE).display());
    Ok(())
}

#[derive(Debug, Serialize)]
struct SampleSummary {
    count: usize,
    segments: usize,
    frames_per_segment: usize,
    frames_per_motion: usize,
    seed: u64,
    /// Mean boundary jump before and after stitching (only with several segments).
    naive_jump: Option<f64>,
    stitched_jump: Option<f64>,
}

fn sample(cfg: &RunConfig, out: &Path, checkpoint: &Path, obj_count: usize) -> Result<()> {
    let (model, _) = load_model(checkpoint)?;
    let frames = cfg.sample_frames();
    let segments = cfg.sample.segments;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut file = ArrayFile::new();
    let (mut naive, mut stitched) = (Vec::new(), Vec::new());
    let mut motions = Vec::with_capacity(cfg.sample.count);
    for i in 0..cfg.sample.count {
        let bones = if segments == 1 {
            model.sample_prior(&mut rng, frames)?
        } else {
            let long =
                generate_long_sequence(&model, segments, frames, &cfg.train.transition, &mut rng)?;
            naive.extend(long.naive_jumps);
            stitched.extend(long.stitched_jumps);
            long.bones
        };
        let rows: Vec<f64> = bones
            .iter()
            .flat_map(|b| [0.0; 6].into_iter().chain(b.iter().copied()))
            .collect();
        let width = rows.len() / bones.len();
        file.push_f64(format!("motion/{i:05}"), &[bones.len(), width], rows)?;
        motions.push(bones);
    }
    std::fs::create_dir_all(out)?;
    file.write(&out.join(MOTIONS_FILE))?;
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let summary = SampleSummary {
        count: cfg.sample.count,
        segments,
        frames_per_segment: frames,
        frames_per_motion: motions.first().map_or(0, Vec::len),
        seed: cfg.seed,
        naive_jump: mean(&naive),
        stitched_jump: mean(&stitched),
    };
    std::fs::write(
        out.join("samples.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    if obj_count > 0 {
        let skel = quadruped();
        let mesh = quadruped_mesh(&skel, cfg.data.mesh_falloff);
        for (i, bones) in motions.iter().take(obj_count).enumerate() {
            let poses = rows_to_poses(bones)?;
            obj::export_frames(
                &out.join("obj").join(format!("motion_{i:05}")),
                &skel,
                &mesh,
                &poses,
            )?;
        }
    }
    config::echo(cfg, out)?;
    println!(
        "{} motions of {} frames written to {}",
        summary.count,
        summary.frames_per_motion,
        out.join(MOTIONS_FILE).display()
    );
    if let (Some(n), Some(s)) = (summary.naive_jump, summary.stitched_jump) {
        println!("boundary jump: naive {n:.6}, stitched {s:.6}");
    }
    Ok(())
}

fn rows_to_poses(bones: &[Vec<f64>]) -> Result<Vec<Pose>> {
    bones
        .iter()
        .map(|b| {
            let mut p = vec![0.0; 6];
            p.extend_from_slice(b);
            Ok(Pose::from_params(&p)?)
        })
        .collect()
}

fn animate_motion(cfg: &RunConfig, out: &Path, motions: &Path, index: usize) -> Result<()> {
    let path = resolve(motions);
    if !path.is_file() {
        bail!(Invalid(format!("no motion file at {}", path.display())));
    }
    let file = ArrayFile::read(&path)?;
    let name = format!("motion/{index:05}");
    let (shape, data) = file
        .f64(&name)
        .map_err(|_| Invalid(format!("{} has no motion {index}", path.display())))?;
    let poses = data
        .chunks(shape[1])
        .map(Pose::from_params)
        .collect::<quadmotion::Result<Vec<_>>>()?;
    write_animation(cfg, out, &poses)
}

fn animate_clip(cfg: &RunConfig, out: &Path, data: &Path, sequence: &str) -> Result<()> {
    let corpus = load_dataset(data)?;
    let Some(rec) = corpus.records.iter().find(|r| r.id == sequence) else {
        bail!(Invalid(format!("dataset has no sequence {sequence}")));
    };
    write_animation(cfg, out, &rec.poses)
}

fn write_animation(cfg: &RunConfig, out: &Path, poses: &[Pose]) -> Result<()> {
    let skel = quadruped();
    let mesh = quadruped_mesh(&skel, cfg.data.mesh_falloff);
    let files = obj::export_frames(out, &skel, &mesh, poses)?;
    config::echo(cfg, out)?;
    println!("{} OBJ frames written to {}", files.len(), out.display());
    Ok(())
}

fn eval(
    cfg: &RunConfig,
    out: &Path,
    checkpoint: Option<&Path>,
    data: &Path,
    ground_truth: bool,
) -> Result<()> {
    let corpus = load_dataset(data)?;
    let eval = corpus.split(Split::Eval);
    if eval.is_empty() {
        bail!(Invalid("dataset has no held-out sequences".into()));
    }
    let skel = corpus.skeleton();
    let cam = corpus.manifest.camera;
    let reference: Vec<Vec<Vec<f64>>> = eval.iter().map(|r| bone_rows(&r.poses)).collect();
    let (details, generated) = if ground_truth {
        let details = eval
            .iter()
            .map(|r| score_sequence(skel, &r.keypoints, r))
            .collect::<quadmotion::Result<Vec<_>>>()?;
        (details, reference.clone())
    } else {
        let Some(ckpt) = checkpoint else {
            bail!(Invalid(
                "--checkpoint is required unless --ground-truth is given".into()
            ));
        };
        let (model, train_cfg) = load_model(ckpt)?;
        let details = evaluate_sequences(&model, &eval, skel, &train_cfg.features, cfg.eval.mode)?;
        let frames = eval[0].len();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generated = (0..cfg.eval.samples)
            .map(|_| model.sample_prior(&mut rng, frames))
            .collect::<quadmotion::Result<Vec<_>>>()?;
        (details, generated)
    };
    let mut report = aggregate_metrics(&details)?;
    if !generated.is_empty() {
        let c = canonical_chamfer(skel, &cam, &generated, &reference)?;
        report.mcd_forward = c.forward;
        report.mcd_backward = c.backward;
        report.mcd = c.mcd;
        report.generated = generated.len();
    }
    std::fs::create_dir_all(out)?;
    let mut lines = std::io::BufWriter::new(std::fs::File::create(out.join(DETAIL_FILE))?);
    for d in &details {
        serde_json::to_writer(&mut lines, d)?;
        lines.write_all(b"\n")?;
    }
    lines.flush()?;
    std::fs::write(
        out.join(REPORT_FILE),
        serde_json::to_string_pretty(&report)?,
    )?;
    config::echo(cfg, out)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadmotion::synthdata::CorpusConfig;

    #[test]
    fn statistics_table_totals() {
        let cfg = CorpusConfig {
            train_sequences: 3,
            eval_sequences: 2,
            frames: 4,
            ..CorpusConfig::default()
        };
        let corpus = generate_corpus(&cfg, 1).unwrap();
        let table = statistics_table(&corpus);
        let total = table.lines().last().unwrap();
        let cols: Vec<&str> = total.split_whitespace().collect();
        assert_eq!(cols, ["total", "5", "20"]);
    }
}
