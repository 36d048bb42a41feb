use crate::error::{Error, Result};
use crate::skeleton::Mask;

/// Indices of instance masks that overlap no other instance by more than `threshold` pixels.
pub fn filter_overlapping_masks(masks: &[Mask], threshold: usize) -> Result<Vec<usize>> {
    if let Some(m) = masks
        .iter()
        .find(|m| m.height != masks[0].height || m.width != masks[0].width)
    {
        return Err(Error::dim(format!(
            "instance masks differ in size: {}×{} vs {}×{}",
            masks[0].height, masks[0].width, m.height, m.width
        )));
    }
    let mut overlapping = vec![false; masks.len()];
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            let inter = masks[i]
                .data
                .iter()
                .zip(&masks[j].data)
                .filter(|(a, b)| **a != 0 && **b != 0)
                .count();
            if inter > threshold {
                overlapping[i] = true;
                overlapping[j] = true;
            }
        }
    }
    Ok((0..masks.len()).filter(|i| !overlapping[*i]).collect())
}

/// Per-coordinate moving average over `window` frames with indices clamped to the sequence.
pub fn smooth_bounding_boxes(boxes: &[[f64; 4]], window: usize) -> Result<Vec<[f64; 4]>> {
    if boxes.is_empty() {
        return Err(Error::invalid("no bounding boxes to smooth"));
    }
    if window == 0 {
        return Err(Error::Config("smoothing window must be at least 1".into()));
    }
    let last = boxes.len() as isize - 1;
    let left = (window / 2) as isize;
    let right = window as isize - 1 - left;
    Ok((0..boxes.len() as isize)
        .map(|t| {
            let mut acc = [0.0; 4];
            for s in t - left..=t + right {
                let b = boxes[s.clamp(0, last) as usize];
                for c in 0..4 {
                    acc[c] += b[c];
                }
            }
            acc.map(|v| v / window as f64)
        })
        .collect())
}

/// Indices of frames whose flow magnitude is at least `threshold`.
pub fn filter_low_motion_frames(flow: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let kept: Vec<usize> = (0..flow.len()).filter(|t| flow[*t] >= threshold).collect();
    if kept.is_empty() {
        return Err(Error::invalid(format!(
            "every frame has flow below {threshold}; the sequence is unusable"
        )));
    }
    Ok(kept)
}

/// Smooths the boxes over the whole clip, then keeps the frames that pass the
/// motion filter: returns the kept frame indices and their smoothed boxes.
pub fn preprocess_clip(
    boxes: &[[f64; 4]],
    flow: &[f64],
    threshold: f64,
    window: usize,
) -> Result<(Vec<usize>, Vec<[f64; 4]>)> {
    if boxes.len() != flow.len() {
        return Err(Error::dim("one flow value per bounding box is required"));
    }
    let smoothed = smooth_bounding_boxes(boxes, window)?;
    let kept = filter_low_motion_frames(flow, threshold)?;
    let kept_boxes = kept.iter().map(|t| smoothed[*t]).collect();
    Ok((kept, kept_boxes))
}

/// Threshold below which `drop_fraction` of the given flow values fall.
pub fn calibrate_motion_threshold(flow: &[f64], drop_fraction: f64) -> Result<f64> {
    if flow.is_empty() {
        return Err(Error::invalid("no flow values to calibrate on"));
    }
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::Config(format!(
            "drop fraction {drop_fraction} outside [0, 1)"
        )));
    }
    let mut sorted = flow.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = (drop_fraction * sorted.len() as f64).round() as usize;
    Ok(if k == 0 {
        sorted[0]
    } else {
        0.5 * (sorted[k - 1] + sorted[k])
    })
}
