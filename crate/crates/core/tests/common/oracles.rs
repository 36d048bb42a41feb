//! Brute-force reference implementations of the evaluation metrics.

use quadmotion::skeleton::{Keypoints, Mask};

pub fn pck(pred: &Keypoints, gt: &Keypoints, h: usize, w: usize, alpha: f64) -> f64 {
    let side = if h > w { h } else { w } as f64;
    let mut hits = 0;
    for i in 0..pred.len() {
        let dx = pred[i].x - gt[i].x;
        let dy = pred[i].y - gt[i].y;
        if (dx * dx + dy * dy).sqrt() < alpha * side {
            hits += 1;
        }
    }
    hits as f64 / pred.len() as f64
}

pub fn iou(a: &Mask, b: &Mask) -> f64 {
    let (mut i, mut u) = (0, 0);
    for r in 0..a.height {
        for c in 0..a.width {
            if a.get(r, c) && b.get(r, c) {
                i += 1;
            }
            if a.get(r, c) || b.get(r, c) {
                u += 1;
            }
        }
    }
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

pub fn velocity(pred: &[Keypoints], gt: &[Keypoints], eps: f64) -> Option<f64> {
    let mut per_frame = Vec::new();
    for t in 1..gt.len() {
        let mut errs = Vec::new();
        for k in 0..gt[t].len() {
            let gx = gt[t][k].x - gt[t - 1][k].x;
            let gy = gt[t][k].y - gt[t - 1][k].y;
            let gn = (gx * gx + gy * gy).sqrt();
            if gn < eps {
                continue;
            }
            let px = pred[t][k].x - pred[t - 1][k].x;
            let py = pred[t][k].y - pred[t - 1][k].y;
            errs.push(((px - gx).powi(2) + (py - gy).powi(2)).sqrt() / gn);
        }
        if !errs.is_empty() {
            per_frame.push(errs.iter().sum::<f64>() / errs.len() as f64);
        }
    }
    (!per_frame.is_empty()).then(|| per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

pub fn acceleration(pred: &[Keypoints], gt: &[Keypoints]) -> f64 {
    let mut total = 0.0;
    let mut n = 0;
    for t in 1..gt.len() - 1 {
        for k in 0..gt[t].len() {
            let ax = gt[t + 1][k].x - 2.0 * gt[t][k].x + gt[t - 1][k].x;
            let ay = gt[t + 1][k].y - 2.0 * gt[t][k].y + gt[t - 1][k].y;
            let bx = pred[t + 1][k].x - 2.0 * pred[t][k].x + pred[t - 1][k].x;
            let by = pred[t + 1][k].y - 2.0 * pred[t][k].y + pred[t - 1][k].y;
            total += ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
            n += 1;
        }
    }
    total / n as f64
}

fn seq_mse(a: &[Keypoints], b: &[Keypoints]) -> f64 {
    let mut s = 0.0;
    let mut n = 0;
    for t in 0..a.len() {
        for k in 0..a[t].len() {
            s += (a[t][k].x - b[t][k].x).powi(2) + (a[t][k].y - b[t][k].y).powi(2);
            n += 1;
        }
    }
    s / n as f64
}

pub fn chamfer(generated: &[Vec<Keypoints>], gt: &[Vec<Keypoints>]) -> (f64, f64, f64) {
    let mut fwd = 0.0;
    for g in gt {
        let mut best = f64::INFINITY;
        for s in generated {
            best = best.min(seq_mse(s, g));
        }
        fwd += best;
    }
    fwd /= gt.len() as f64;
    let mut bwd = 0.0;
    for s in generated {
        let mut best = f64::INFINITY;
        for g in gt {
            best = best.min(seq_mse(s, g));
        }
        bwd += best;
    }
    bwd /= generated.len() as f64;
    (fwd, bwd, (fwd + bwd) / 2.0)
}
