use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use quadmotion::container::ArrayFile;
use serde_json::Value;

const TINY: &str = r#"
seed = 3

[data]
train_sequences = 6
eval_sequences = 3
frames = 4

[data.features]
global_dim = 12
local_dim = 6

[train]
phase1_epochs = 2
phase2_epochs = 2
batch_size = 3
frames = 4

[train.features]
global_dim = 12
local_dim = 6

[train.model]
blocks = 1
dim = 8
heads = 2
ff_dim = 16
global_dim = 12
local_dim = 6
descriptor_width = 24
max_frames = 8
head_hidden = 8

[sample]
count = 4

[eval]
samples = 5
"#;

fn quadmotion(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadmotion"))
        .args(args)
        .env("QUADMOTION_OUTPUT_ROOT", root)
        .output()
        .expect("spawn quadmotion")
}

fn ok(out: &Output) -> String {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Dataset and a two-phase training run shared by the tests below.
struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        std::fs::write(root.join("tiny.toml"), TINY).unwrap();
        ok(&quadmotion(
            &root,
            &["gendata", "-c", "tiny.toml", "--out", "data"],
        ));
        ok(&quadmotion(
            &root,
            &["train", "-c", "tiny.toml", "--data", "data", "--out", "run"],
        ));
        Fixture { _dir: dir, root }
    })
}

const PHASE1: &str = "run/ckpt/phase1/epoch_2";
const PHASE2: &str = "run/ckpt/phase2/epoch_2";

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gendata_prints_statistics_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("tiny.toml"), TINY).unwrap();
    let stdout = ok(&quadmotion(
        root,
        &["gendata", "-c", "tiny.toml", "--out", "d"],
    ));
    let total = stdout
        .lines()
        .find(|l| l.starts_with("total"))
        .expect("totals row");
    let fields: Vec<&str> = total.split_whitespace().collect();
    assert_eq!(fields[1], "9");
    assert_eq!(fields[2], "36");
    assert!(root.join("d").join("config.toml").is_file());

    let again = quadmotion(root, &["gendata", "-c", "tiny.toml", "--out", "d"]);
    assert_eq!(again.status.code(), Some(2));
    ok(&quadmotion(
        root,
        &["gendata", "-c", "tiny.toml", "--out", "d", "--force"],
    ));
}

#[test]
fn output_root_variable_relocates_relative_paths() {
    let f = fixture();
    assert!(f.root.join("data").is_dir());
    assert!(f.root.join(PHASE1).is_dir());
    assert!(f.root.join(PHASE2).is_dir());
    assert!(f.root.join("run").join("config.toml").is_file());
}

#[test]
fn echoed_config_reproduces_the_run_settings() {
    let f = fixture();
    let echoed: toml::Table =
        toml::from_str(&std::fs::read_to_string(f.root.join("run/config.toml")).unwrap()).unwrap();
    assert_eq!(echoed["seed"].as_integer(), Some(3));
    assert_eq!(echoed["train"]["phase1_epochs"].as_integer(), Some(2));
    assert_eq!(echoed["train"]["model"]["dim"].as_integer(), Some(8));
}

#[test]
fn second_phase_resumes_from_a_first_phase_checkpoint() {
    let f = fixture();
    let args = [
        "train",
        "-c",
        "tiny.toml",
        "--data",
        "data",
        "--phase",
        "2",
        "--out",
        "resume",
    ];
    let missing = quadmotion(&f.root, &args);
    assert_eq!(missing.status.code(), Some(2));
    let mut with_ckpt = args.to_vec();
    with_ckpt.extend(["--checkpoint", PHASE1]);
    ok(&quadmotion(&f.root, &with_ckpt));
    assert!(f.root.join("resume/ckpt/phase2/epoch_2").is_dir());
}

#[test]
fn sampling_is_seed_reproducible() {
    let f = fixture();
    let run = |out: &str, seed: &str| {
        ok(&quadmotion(
            &f.root,
            &[
                "sample",
                "-c",
                "tiny.toml",
                "--checkpoint",
                PHASE2,
                "--out",
                out,
                "--seed",
                seed,
            ],
        ));
        std::fs::read(f.root.join(out).join("motions.qma")).unwrap()
    };
    let a = run("sa", "5");
    let b = run("sb", "5");
    let c = run("sc", "6");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn long_samples_are_stitched_and_exported() {
    let f = fixture();
    ok(&quadmotion(
        &f.root,
        &[
            "sample",
            "-c",
            "tiny.toml",
            "--checkpoint",
            PHASE2,
            "--out",
            "long",
            "--segments",
            "2",
            "--count",
            "2",
            "--obj",
            "1",
        ],
    ));
    let summary = read_json(&f.root.join("long/samples.json"));
    assert_eq!(summary["count"], 2);
    assert_eq!(summary["frames_per_motion"], 12);
    assert!(
        summary["stitched_jump"].as_f64().unwrap()
            <= summary["naive_jump"].as_f64().unwrap() + 1e-12
    );
    let motions = ArrayFile::read(&f.root.join("long/motions.qma")).unwrap();
    let (shape, _) = motions.f64("motion/00001").unwrap();
    assert_eq!(shape, [12, 66]);
    let objs = std::fs::read_dir(f.root.join("long/obj/motion_00000"))
        .unwrap()
        .count();
    assert_eq!(objs, 12);
    assert!(!f.root.join("long/obj/motion_00001").exists());
}

#[test]
fn animate_writes_one_mesh_per_frame() {
    let f = fixture();
    ok(&quadmotion(
        &f.root,
        &[
            "sample",
            "-c",
            "tiny.toml",
            "--checkpoint",
            PHASE2,
            "--out",
            "anim_src",
        ],
    ));
    ok(&quadmotion(
        &f.root,
        &[
            "animate",
            "-c",
            "tiny.toml",
            "--motions",
            "anim_src/motions.qma",
            "--index",
            "3",
            "--out",
            "anim",
        ],
    ));
    let mut files: Vec<String> = std::fs::read_dir(f.root.join("anim"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".obj"))
        .collect();
    files.sort();
    assert_eq!(
        files,
        [
            "frame_0000.obj",
            "frame_0001.obj",
            "frame_0002.obj",
            "frame_0003.obj"
        ]
    );
    let text = std::fs::read_to_string(f.root.join("anim/frame_0000.obj")).unwrap();
    assert!(text.lines().any(|l| l.starts_with("v ")));
    assert!(text.lines().any(|l| l.starts_with("f ")));

    let missing = quadmotion(
        &f.root,
        &[
            "animate",
            "--motions",
            "anim_src/motions.qma",
            "--index",
            "99",
            "--out",
            "x",
        ],
    );
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn ground_truth_scores_perfectly() {
    let f = fixture();
    ok(&quadmotion(
        &f.root,
        &[
            "eval",
            "-c",
            "tiny.toml",
            "--data",
            "data",
            "--ground-truth",
            "--out",
            "gt",
        ],
    ));
    let r = read_json(&f.root.join("gt/eval_report.json"));
    assert_eq!(r["pck"].as_f64(), Some(1.0));
    assert_eq!(r["velocity_error"].as_f64(), Some(0.0));
    assert_eq!(r["acceleration_error"].as_f64(), Some(0.0));
    assert_eq!(r["mcd"].as_f64(), Some(0.0));
}

#[test]
fn report_is_recomposable_from_per_sequence_detail() {
    let f = fixture();
    ok(&quadmotion(
        &f.root,
        &[
            "eval",
            "-c",
            "tiny.toml",
            "--data",
            "data",
            "--checkpoint",
            PHASE2,
            "--out",
            "ev",
        ],
    ));
    let report = read_json(&f.root.join("ev/eval_report.json"));
    let detail: Vec<Value> = std::fs::read_to_string(f.root.join("ev/eval_sequences.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(detail.len(), 3);
    let frames: f64 = detail.iter().map(|d| d["frames"].as_f64().unwrap()).sum();
    let pck = detail
        .iter()
        .map(|d| d["pck"].as_f64().unwrap() * d["frames"].as_f64().unwrap())
        .sum::<f64>()
        / frames;
    let acc = detail
        .iter()
        .map(|d| d["acceleration_error"].as_f64().unwrap())
        .sum::<f64>()
        / detail.len() as f64;
    assert!((report["pck"].as_f64().unwrap() - pck).abs() < 1e-12);
    assert!((report["acceleration_error"].as_f64().unwrap() - acc).abs() < 1e-12);
    assert_eq!(report["frames"].as_f64(), Some(frames));
    assert_eq!(report["generated"], 5);
    assert!(report["mcd"].as_f64().unwrap().is_finite());
}

#[test]
fn exit_codes_separate_usage_validation_and_runtime() {
    let f = fixture();
    assert_eq!(quadmotion(&f.root, &["bogus"]).status.code(), Some(1));
    assert_eq!(
        quadmotion(&f.root, &["train", "--phase", "3", "--data", "data"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(quadmotion(&f.root, &["--help"]).status.code(), Some(0));

    let unknown = quadmotion(
        &f.root,
        &["train", "--data", "data", "--set", "train.nope=1"],
    );
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("train.nope"));
    std::fs::write(f.root.join("bad.toml"), "[train]\nlearning_rat = 1\n").unwrap();
    assert_eq!(
        quadmotion(&f.root, &["gendata", "-c", "bad.toml", "--out", "bad"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        quadmotion(&f.root, &["eval", "--data", "missing", "--ground-truth"])
            .status
            .code(),
        Some(2)
    );

    std::fs::write(f.root.join("garbage.qma"), b"not an array file").unwrap();
    let corrupt = quadmotion(
        &f.root,
        &["animate", "--motions", "garbage.qma", "--out", "g"],
    );
    assert!(matches!(corrupt.status.code(), Some(2) | Some(3)));
}
