mod common;

use common::oracles;
use nalgebra::Vector2;
use ndarray::Array2;
use proptest::prelude::*;
use quadmotion::metrics::*;
use quadmotion::skeleton::{Keypoints, Mask};
use quadmotion::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_kp<R: Rng>(rng: &mut R, k: usize) -> Keypoints {
    (0..k)
        .map(|_| Vector2::new(rng.random_range(0.0..64.0), rng.random_range(0.0..48.0)))
        .collect()
}

fn random_seq<R: Rng>(rng: &mut R, t: usize, k: usize) -> Vec<Keypoints> {
    (0..t).map(|_| random_kp(rng, k)).collect()
}

fn random_mask<R: Rng>(rng: &mut R, h: usize, w: usize, density: f64) -> Mask {
    Mask {
        height: h,
        width: w,
        data: (0..h * w).map(|_| rng.random_bool(density) as u8).collect(),
    }
}

fn jitter<R: Rng>(rng: &mut R, seq: &[Keypoints], s: f64) -> Vec<Keypoints> {
    seq.iter()
        .map(|f| {
            f.iter()
                .map(|p| p + Vector2::new(rng.random_range(-s..s), rng.random_range(-s..s)))
                .collect()
        })
        .collect()
}

#[test]
fn pck_against_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let k = rng.random_range(1..30);
        let gt = random_kp(&mut rng, k);
        let pred = jitter(&mut rng, std::slice::from_ref(&gt), 10.0).remove(0);
        let (h, w) = (rng.random_range(8..80), rng.random_range(8..80));
        let got = pck_at_threshold(&pred, &gt, h, w, 0.1).unwrap();
        assert_eq!(got, oracles::pck(&pred, &gt, h, w, 0.1));
    }
}

#[test]
fn pck_closed_forms() {
    let gt = random_kp(&mut ChaCha8Rng::seed_from_u64(2), 10);
    assert_eq!(pck_at_threshold(&gt, &gt, 48, 64, 0.1).unwrap(), 1.0);
    let off: Keypoints = gt
        .iter()
        .map(|p| p + Vector2::new(0.0, 2.0 * 0.1 * 64.0))
        .collect();
    assert_eq!(pck_at_threshold(&off, &gt, 48, 64, 0.1).unwrap(), 0.0);
    assert!(pck_at_threshold(&[], &[], 48, 64, 0.1).is_err());
}

#[test]
fn iou_against_pixel_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let (h, w) = (rng.random_range(1..20), rng.random_range(1..20));
        let density = [0.0, 0.05, 0.3, 0.7][case % 4];
        let a = random_mask(&mut rng, h, w, density);
        let density_b = rng.random_range(0.0..1.0);
        let b = random_mask(&mut rng, h, w, density_b);
        let got = mask_iou(&a, &b).unwrap();
        assert_eq!(got, oracles::iou(&a, &b));
        assert_eq!(got, mask_iou(&b, &a).unwrap());
    }
}

#[test]
fn iou_closed_forms() {
    let mut a = Mask::empty(4, 4);
    let mut b = Mask::empty(4, 4);
    assert_eq!(mask_iou(&a, &b).unwrap(), 1.0);
    a.data[0] = 1;
    b.data[5] = 1;
    assert_eq!(mask_iou(&a, &b).unwrap(), 0.0);
    assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
    assert!(matches!(
        mask_iou(&a, &Mask::empty(4, 5)),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn velocity_against_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let t = rng.random_range(2..8);
        let k = rng.random_range(1..10);
        let mut gt = random_seq(&mut rng, t, k);
        if case % 3 == 0 {
            // Freeze some keypoints so the epsilon exclusion is exercised.
            for f in 1..t {
                gt[f][0] = gt[f - 1][0];
            }
        }
        let pred = jitter(&mut rng, &gt, 2.0);
        match (
            velocity_error(&pred, &gt),
            oracles::velocity(&pred, &gt, 1e-6),
        ) {
            (Ok(got), Some(want)) => assert!((got - want).abs() < 1e-12),
            (Err(Error::UndefinedMetric(_)), None) => {}
            (got, want) => panic!("{got:?} vs {want:?}"),
        }
    }
}

#[test]
fn velocity_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gt = random_seq(&mut rng, 4, 6);
    assert_eq!(velocity_error(&gt, &gt).unwrap(), 0.0);
    let d = Vector2::new(1.5, -0.5);
    let moving: Vec<Keypoints> = (0..4)
        .map(|t| gt[0].iter().map(|p| p + d * t as f64).collect())
        .collect();
    let still = vec![gt[0].clone(); 4];
    assert!((velocity_error(&still, &moving).unwrap() - 1.0).abs() < 1e-12);
    assert!(matches!(
        velocity_error(&moving, &still),
        Err(Error::UndefinedMetric(_))
    ));
    assert!(velocity_error(&gt[..1], &gt[..1]).is_err());
}

#[test]
fn acceleration_against_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..200 {
        let t = rng.random_range(3..9);
        let k = rng.random_range(1..10);
        let gt = random_seq(&mut rng, t, k);
        let pred = jitter(&mut rng, &gt, 3.0);
        let got = acceleration_error(&pred, &gt).unwrap();
        assert!((got - oracles::acceleration(&pred, &gt)).abs() < 1e-12);
    }
}

#[test]
fn acceleration_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let base = random_kp(&mut rng, 5);
    let line = |v: Vector2<f64>| -> Vec<Keypoints> {
        (0..5)
            .map(|t| base.iter().map(|p| p + v * t as f64).collect())
            .collect()
    };
    assert!(
        acceleration_error(
            &line(Vector2::new(1.0, 2.0)),
            &line(Vector2::new(-3.0, 0.5))
        )
        .unwrap()
            < 1e-12
    );
    let seq = random_seq(&mut rng, 4, 3);
    assert_eq!(acceleration_error(&seq, &seq).unwrap(), 0.0);
    assert!(acceleration_error(&seq[..2], &seq[..2]).is_err());
}

#[test]
fn chamfer_against_exhaustive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let t = rng.random_range(1..5);
        let k = rng.random_range(1..6);
        let n_gen = rng.random_range(1..8);
        let n_gt = rng.random_range(1..8);
        let generated: Vec<_> = (0..n_gen).map(|_| random_seq(&mut rng, t, k)).collect();
        let gt: Vec<_> = (0..n_gt).map(|_| random_seq(&mut rng, t, k)).collect();
        let c = motion_chamfer_distance(&generated, &gt).unwrap();
        let (f, b, m) = oracles::chamfer(&generated, &gt);
        assert!(
            (c.forward - f).abs() < 1e-9
                && (c.backward - b).abs() < 1e-9
                && (c.mcd - m).abs() < 1e-9
        );
    }
}

#[test]
fn chamfer_closed_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let set: Vec<_> = (0..4).map(|_| random_seq(&mut rng, 3, 5)).collect();
    let c = motion_chamfer_distance(&set, &set).unwrap();
    assert_eq!((c.forward, c.backward, c.mcd), (0.0, 0.0, 0.0));
    let a = random_seq(&mut rng, 3, 5);
    let b = random_seq(&mut rng, 3, 5);
    let c = motion_chamfer_distance(&[a.clone()], &[b.clone()]).unwrap();
    let mse = sequence_mse(&a, &b).unwrap();
    assert_eq!((c.forward, c.backward), (mse, mse));
    assert!(motion_chamfer_distance(&[], &[b]).is_err());
}

#[test]
fn keypoint_map_recovers_permutation_and_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let pred = random_seq(&mut rng, 12, 5);
    let perm = [3, 0, 4, 1, 2];
    let gt: Vec<Keypoints> = pred
        .iter()
        .map(|f| perm.iter().map(|&j| f[j]).collect())
        .collect();
    let map = fit_linear_keypoint_map(&pred, &gt).unwrap();
    for (k, &j) in perm.iter().enumerate() {
        for c in 0..5 {
            let want = if c == j { 1.0 } else { 0.0 };
            assert!((map.matrix[[k, c]] - want).abs() < 1e-9);
        }
    }
    assert!(map.residual < 1e-18);
    let doubled: Vec<Keypoints> = pred
        .iter()
        .map(|f| f.iter().map(|p| p * 2.0).collect())
        .collect();
    let map = fit_linear_keypoint_map(&pred, &doubled).unwrap();
    assert!(
        (&map.matrix - &(Array2::<f64>::eye(5) * 2.0))
            .mapv(f64::abs)
            .sum()
            < 1e-9
    );
    assert_eq!(map.apply_sequence(&pred).unwrap().len(), 12);
}

#[test]
fn keypoint_map_recovers_planted_map_under_noise() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (src, dst, frames, noise) = (6, 4, 400, 0.05);
    let planted = Array2::from_shape_fn((dst, src), |_| rng.random_range(-1.0..1.0));
    let pred = random_seq(&mut rng, frames, src);
    let mut noise_power = 0.0;
    let gt: Vec<Keypoints> = pred
        .iter()
        .map(|f| {
            (0..dst)
                .map(|k| {
                    let clean: Vector2<f64> = (0..src).map(|j| planted[[k, j]] * f[j]).sum();
                    let e = Vector2::new(
                        rng.random_range(-noise..noise),
                        rng.random_range(-noise..noise),
                    );
                    noise_power += e.norm_squared();
                    clean + e
                })
                .collect()
        })
        .collect();
    let noise_floor = noise_power / (frames * dst) as f64;
    let map = fit_linear_keypoint_map(&pred, &gt).unwrap();
    assert!(map.residual < noise_floor);
    assert!(
        (&map.matrix - &planted)
            .mapv(f64::abs)
            .fold(0.0f64, |a, b| a.max(*b))
            < 0.01
    );
}

#[test]
fn keypoint_map_rank_deficient_is_minimum_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut pred = random_seq(&mut rng, 10, 3);
    for f in pred.iter_mut() {
        f[2] = f[1];
    }
    let gt: Vec<Keypoints> = pred.iter().map(|f| vec![f[1]]).collect();
    let map = fit_linear_keypoint_map(&pred, &gt).unwrap();
    assert!(map.rank_deficient);
    assert!((map.matrix[[0, 1]] - 0.5).abs() < 1e-9 && (map.matrix[[0, 2]] - 0.5).abs() < 1e-9);
    assert!(fit_linear_keypoint_map(&pred[..2], &gt[..2]).is_err());
}

fn seq_strategy(t: usize, k: usize) -> impl Strategy<Value = Vec<Keypoints>> {
    prop::collection::vec(
        prop::collection::vec(
            (-50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y)| Vector2::new(x, y)),
            k,
        ),
        t,
    )
}

proptest! {
    #[test]
    fn metrics_invariant_to_keypoint_permutation(
        (gt, pred) in (seq_strategy(5, 6), seq_strategy(5, 6)),
        perm in Just((0..6).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let p = |s: &Vec<Keypoints>| -> Vec<Keypoints> { s.iter().map(|f| perm.iter().map(|&i| f[i]).collect()).collect() };
        let (gp, pp) = (p(&gt), p(&pred));
        let flat = |s: &Vec<Keypoints>| s.concat();
        prop_assert_eq!(pck_at_threshold(&flat(&pred), &flat(&gt), 32, 32, 0.1).unwrap(),
                        pck_at_threshold(&flat(&pp), &flat(&gp), 32, 32, 0.1).unwrap());
        prop_assert!((acceleration_error(&pred, &gt).unwrap() - acceleration_error(&pp, &gp).unwrap()).abs() < 1e-9);
        prop_assert!((velocity_error(&pred, &gt).unwrap() - velocity_error(&pp, &gp).unwrap()).abs() < 1e-9);
        prop_assert!((sequence_mse(&pred, &gt).unwrap() - sequence_mse(&pp, &gp).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn pck_monotone_in_alpha((gt, pred) in (seq_strategy(1, 8), seq_strategy(1, 8)), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pck_at_threshold(&pred[0], &gt[0], 40, 40, lo).unwrap() <= pck_at_threshold(&pred[0], &gt[0], 40, 40, hi).unwrap());
    }

    #[test]
    fn motion_errors_invariant_to_shared_offset((gt, pred) in (seq_strategy(4, 3), seq_strategy(4, 3)), dx in -100.0f64..100.0, dy in -100.0f64..100.0) {
        let off = Vector2::new(dx, dy);
        let shift = |s: &Vec<Keypoints>| -> Vec<Keypoints> { s.iter().map(|f| f.iter().map(|p| p + off).collect()).collect() };
        prop_assert!((velocity_error(&pred, &gt).unwrap() - velocity_error(&shift(&pred), &shift(&gt)).unwrap()).abs() < 1e-6);
        prop_assert!((acceleration_error(&pred, &gt).unwrap() - acceleration_error(&shift(&pred), &shift(&gt)).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn chamfer_zero_iff_sets_cover(set in prop::collection::vec(seq_strategy(2, 3), 1..4), extra in seq_strategy(2, 3)) {
        let c = motion_chamfer_distance(&set, &set).unwrap();
        prop_assert_eq!(c.mcd, 0.0);
        let mut bigger = set.clone();
        bigger.push(extra.clone());
        let c = motion_chamfer_distance(&bigger, &set).unwrap();
        let covered = set.iter().any(|s| sequence_mse(s, &extra).unwrap() == 0.0);
        prop_assert_eq!(c.mcd == 0.0, covered);
    }

    #[test]
    fn mask_iou_symmetric_and_bounded(a in prop::collection::vec(0u8..2, 36), b in prop::collection::vec(0u8..2, 36)) {
        let a = Mask { height: 6, width: 6, data: a };
        let b = Mask { height: 6, width: 6, data: b };
        let x = mask_iou(&a, &b).unwrap();
        prop_assert_eq!(x, mask_iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
    }
}
