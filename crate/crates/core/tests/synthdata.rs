mod common;

use nalgebra::Vector2;
use proptest::prelude::*;
use quadmotion::container::{ArrayData, ArrayFile};
use quadmotion::objectives::temporal_smoothness;
use quadmotion::skeleton::{keypoints2d, quadruped, Camera, Mask};
use quadmotion::synthdata::*;
use quadmotion::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn camera() -> Camera {
    Camera::centered(22.0, 64, 64).unwrap()
}

fn small_corpus_config() -> CorpusConfig {
    CorpusConfig {
        train_sequences: 6,
        eval_sequences: 4,
        frames: 4,
        height: 24,
        width: 24,
        camera_scale: 8.0,
        features: FeatureConfig {
            global_dim: 8,
            local_dim: 4,
            ..FeatureConfig::default()
        },
        ..CorpusConfig::default()
    }
}

#[test]
fn still_gait_is_constant() {
    let skel = quadruped();
    let params = GaitParams::still(20);
    let rec = generate_gait_sequence(
        &skel,
        &params,
        6,
        &camera(),
        &FeatureConfig::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(rec.poses.windows(2).all(|w| w[0] == w[1]));
    assert_eq!(temporal_smoothness(&rec.pose_rows()).unwrap(), 0.0);
    assert!(rec.flow.iter().all(|f| *f == 0.0));
    assert!(filter_low_motion_frames(&rec.flow, 1e-3).is_err());
}

#[test]
fn walk_keypoints_repeat_with_gait_period() {
    let skel = quadruped();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut params = GaitParams::sample(GaitKind::Walk, &skel, 0.0, &mut rng);
    params.frequency = 0.1;
    params.drift = [0.0; 3];
    let rec = generate_gait_sequence(
        &skel,
        &params,
        80,
        &camera(),
        &FeatureConfig::default(),
        &mut rng,
    )
    .unwrap();
    let hoof = skel
        .names
        .iter()
        .position(|n| n == "front_left_hoof")
        .unwrap();
    let signal: Vec<f64> = rec.keypoints.iter().map(|kp| kp[hoof].x).collect();
    let mean = signal.iter().sum::<f64>() / signal.len() as f64;
    let centered: Vec<f64> = signal.iter().map(|v| v - mean).collect();
    let autocorr = |lag: usize| -> f64 {
        let n = centered.len() - lag;
        (0..n).map(|i| centered[i] * centered[i + lag]).sum::<f64>() / n as f64
    };
    let best = (4..16)
        .max_by(|a, b| autocorr(*a).total_cmp(&autocorr(*b)))
        .unwrap();
    assert_eq!(best, 10);
    assert!(autocorr(10) > 0.99 * autocorr(0));
}

#[test]
fn generation_is_seeded_and_self_consistent() {
    let skel = quadruped();
    let make = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = GaitParams::sample(GaitKind::Trot, &skel, 0.01, &mut rng);
        generate_gait_sequence(
            &skel,
            &params,
            8,
            &camera(),
            &FeatureConfig::default(),
            &mut rng,
        )
        .unwrap()
    };
    let a = make(1);
    assert_eq!(a, make(1));
    assert_ne!(a, make(2));
    for (pose, kp) in a.poses.iter().zip(&a.keypoints) {
        assert_eq!(&keypoints2d(&skel, pose, &a.camera).unwrap(), kp);
    }
    assert!(a.masks.iter().all(|m| m.count() > 0 && m.height == 64));
}

#[test]
fn features_have_configured_dims_and_are_deterministic() {
    let skel = quadruped();
    let cfg = FeatureConfig {
        noise: 0.0,
        ..FeatureConfig::default()
    };
    let kp = keypoints2d(&skel, &GaitParams::still(20).pose_at(0.0), &camera()).unwrap();
    let a = render_synthetic_features(&kp, &camera(), &cfg, 7, 0);
    let b = render_synthetic_features(&kp, &camera(), &cfg, 7, 3);
    assert_eq!((a.global.len(), a.local.dim()), (512, 119));
    assert_eq!(a.global, b.global);
    let u = Vector2::new(20.5, 31.0);
    assert_eq!(a.local.sample(&u), b.local.sample(&u));
    let noisy = FeatureConfig::default();
    let c = render_synthetic_features(&kp, &camera(), &noisy, 7, 0);
    let d = render_synthetic_features(&kp, &camera(), &noisy, 7, 0);
    assert_eq!(c.global, d.global);
    assert_eq!(c.local.sample(&u), d.local.sample(&u));
    assert_ne!(c.global, a.global);
}

#[test]
fn feature_distance_grows_with_keypoint_perturbation() {
    let skel = quadruped();
    let cam = camera();
    let cfg = FeatureConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scales = [0.25, 0.5, 1.0, 2.0, 4.0];
    let mut mean_dist = vec![0.0; scales.len()];
    for trial in 0..20 {
        let params = GaitParams::sample(GaitKind::ALL[trial % 5], &skel, 0.0, &mut rng);
        let kp = keypoints2d(&skel, &params.pose_at(trial as f64), &cam).unwrap();
        let base = global_feature(&kp, &cam, &cfg, 1, 0);
        let dir: Vec<Vector2<f64>> = kp
            .iter()
            .map(|_| {
                Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize()
            })
            .collect();
        for (i, s) in scales.iter().enumerate() {
            let moved: Vec<_> = kp.iter().zip(&dir).map(|(p, d)| p + d * *s).collect();
            let f = global_feature(&moved, &cam, &cfg, 1, 0);
            mean_dist[i] += base
                .iter()
                .zip(&f)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
                / 20.0;
        }
    }
    assert!(mean_dist.windows(2).all(|w| w[1] > w[0]), "{mean_dist:?}");
}

fn rect_mask(h: usize, w: usize, r0: usize, c0: usize, r1: usize, c1: usize) -> Mask {
    let mut m = Mask::empty(h, w);
    for r in r0..r1 {
        for c in c0..c1 {
            m.data[r * w + c] = 1;
        }
    }
    m
}

#[test]
fn overlap_filter_cases() {
    let a = rect_mask(10, 10, 0, 0, 3, 3);
    let b = rect_mask(10, 10, 5, 5, 8, 8);
    let c = rect_mask(10, 10, 2, 2, 6, 6);
    assert_eq!(
        filter_overlapping_masks(&[a.clone(), b.clone()], 0).unwrap(),
        vec![0, 1]
    );
    assert_eq!(
        filter_overlapping_masks(&[a.clone(), c.clone()], 0).unwrap(),
        Vec::<usize>::new()
    );
    assert_eq!(
        filter_overlapping_masks(&[a, b, c], 0).unwrap(),
        Vec::<usize>::new()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.random_range(1..6);
        let masks: Vec<Mask> = (0..n)
            .map(|_| {
                let (r0, c0) = (rng.random_range(0..12), rng.random_range(0..12));
                rect_mask(
                    16,
                    16,
                    r0,
                    c0,
                    r0 + rng.random_range(1..5),
                    c0 + rng.random_range(1..5),
                )
            })
            .collect();
        let thr = rng.random_range(0..3);
        let mut expected = Vec::new();
        for i in 0..n {
            let clash = (0..n).filter(|j| *j != i).any(|j| {
                (0..256)
                    .filter(|p| masks[i].data[*p] == 1 && masks[j].data[*p] == 1)
                    .count()
                    > thr
            });
            if !clash {
                expected.push(i);
            }
        }
        assert_eq!(filter_overlapping_masks(&masks, thr).unwrap(), expected);
    }
}

#[test]
fn box_smoothing_cases() {
    let constant = vec![[1.0, 2.0, 3.0, 4.0]; 7];
    assert_eq!(smooth_bounding_boxes(&constant, 5).unwrap(), constant);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let boxes: Vec<[f64; 4]> = (0..9).map(|_| [rng.random_range(0.0..9.0); 4]).collect();
    assert_eq!(smooth_bounding_boxes(&boxes, 1).unwrap(), boxes);
    let mut spike = vec![[0.0; 4]; 11];
    spike[5] = [10.0; 4];
    let out = smooth_bounding_boxes(&spike, 5).unwrap();
    assert!(out[5][0] <= 10.0 / 5.0 + 1e-12);
    for t in 0..11 {
        let want = if (3..=7).contains(&t) { 2.0 } else { 0.0 };
        assert!((out[t][2] - want).abs() < 1e-12);
    }
    // Edge clamping repeats the first frame.
    let ramp: Vec<[f64; 4]> = (0..4).map(|t| [t as f64; 4]).collect();
    let out = smooth_bounding_boxes(&ramp, 3).unwrap();
    assert!((out[0][0] - (0.0 + 0.0 + 1.0) / 3.0).abs() < 1e-12);
}

#[test]
fn low_motion_filter_cases() {
    assert_eq!(
        filter_low_motion_frames(&[1.0, 2.0, 3.0], 0.5).unwrap(),
        vec![0, 1, 2]
    );
    assert!(matches!(
        filter_low_motion_frames(&[0.0; 5], 0.1),
        Err(Error::Validation(_))
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..100 {
        let flow: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..2.0)).collect();
        let thr = rng.random_range(0.0..1.5);
        let want: Vec<usize> = (0..20).filter(|i| !(flow[*i] < thr)).collect();
        assert_eq!(filter_low_motion_frames(&flow, thr).unwrap(), want);
    }
}

proptest! {
    #[test]
    fn kept_boxes_do_not_depend_on_other_frames_flow(
        boxes in prop::collection::vec(prop::array::uniform4(0.0f64..50.0), 3..15),
        flow in prop::collection::vec(0.0f64..1.0, 15),
        thr in 0.1f64..0.9,
        flip in 0usize..15,
    ) {
        let flow = flow[..boxes.len()].to_vec();
        let mut other = flow.clone();
        let flip = flip % boxes.len();
        other[flip] = if flow[flip] < thr { thr + 0.5 } else { 0.0 };
        if let (Ok((ka, ba)), Ok((kb, bb))) = (preprocess_clip(&boxes, &flow, thr, 5), preprocess_clip(&boxes, &other, thr, 5)) {
            for (i, t) in ka.iter().enumerate() {
                if let Some(j) = kb.iter().position(|u| u == t) {
                    prop_assert_eq!(ba[i], bb[j]);
                }
            }
        }
    }
}

#[test]
fn corpus_is_pure_and_matches_defaults() {
    let cfg = CorpusConfig::default();
    let a = generate_corpus(&cfg, 3).unwrap();
    assert_eq!(a.records.len(), 250);
    assert_eq!(a.split(Split::Train).len(), 200);
    assert_eq!(a.split(Split::Eval).len(), 50);
    assert!(a.records.iter().all(|r| r.len() == 10));
    assert!(
        (a.manifest.dropped_fraction - 0.2).abs() < 0.02,
        "{}",
        a.manifest.dropped_fraction
    );
    for kind in GaitKind::ALL {
        assert_eq!(a.records.iter().filter(|r| r.gait == kind).count(), 50);
    }
    let b = generate_corpus(&cfg, 3).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.manifest, b.manifest);
    let c = generate_corpus(&cfg, 4).unwrap();
    assert_ne!(a.records[0], c.records[0]);
}

#[test]
fn dataset_round_trip_and_corruption() {
    let corpus = generate_corpus(&small_corpus_config(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &corpus).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back.manifest, corpus.manifest);
    assert_eq!(back.records, corpus.records);

    let file = dir.path().join(&corpus.manifest.sequences[0].file);
    let mut bytes = std::fs::read(&file).unwrap();
    bytes[0] = b'X';
    std::fs::write(&file, &bytes).unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(Error::Format { .. })
    ));
    bytes[0] = b'Q';
    std::fs::write(&file, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(
        read_dataset(dir.path()),
        Err(Error::Format { .. })
    ));
    std::fs::write(&file, &bytes).unwrap();
    read_dataset(dir.path()).unwrap();

    let manifest_path = dir.path().join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).unwrap();
    std::fs::write(
        &manifest_path,
        text.replace("\"format_version\": 1", "\"format_version\": 99"),
    )
    .unwrap();
    let err = read_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("version"), "{err}");
}

#[test]
fn container_bytes_follow_documented_layout() {
    let mut f = ArrayFile::new();
    f.push_f64("x", &[2], vec![1.0, -2.0]).unwrap();
    f.push("m", &[3], ArrayData::U8(vec![1, 0, 1])).unwrap();
    let mut want = Vec::new();
    want.extend_from_slice(b"QMARRAY\0");
    want.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
    want.extend_from_slice(&[1, 0, 0, 0, b'x', 0, 1, 0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0]);
    want.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
    want.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 0xc0]);
    want.extend_from_slice(&[
        1, 0, 0, 0, b'm', 1, 1, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1,
    ]);
    let digest = Sha256::digest(&want);
    want.extend_from_slice(&digest);
    assert_eq!(f.to_bytes(), want);
}

#[test]
fn golden_sequence_file_is_stable() {
    let bytes = write_sequence(&common::golden_record()).unwrap().to_bytes();
    if std::env::var_os("QUADMOTION_BLESS").is_some() {
        std::fs::write(common::golden_path(), &bytes).unwrap();
    }
    let golden = std::fs::read(common::golden_path()).unwrap();
    assert_eq!(bytes, golden, "serialized bytes changed");
    let rec = read_sequence(&ArrayFile::from_bytes(&golden).unwrap(), "golden").unwrap();
    assert_eq!(rec, common::golden_record());
}
