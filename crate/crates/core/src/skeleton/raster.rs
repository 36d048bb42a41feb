use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{Camera, Keypoints, Skeleton};

/// Binary raster, row-major, `1` = foreground.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|v| **v != 0).count()
    }

    /// Inclusive pixel bounding box `[x_min, y_min, x_max, y_max]`, or `None` when empty.
    pub fn bbox(&self) -> Option<[f64; 4]> {
        let mut out: Option<[f64; 4]> = None;
        for r in 0..self.height {
            for c in 0..self.width {
                if self.get(r, c) {
                    let (x, y) = (c as f64, r as f64);
                    out = Some(match out {
                        None => [x, y, x, y],
                        Some(b) => [b[0].min(x), b[1].min(y), b[2].max(x), b[3].max(y)],
                    });
                }
            }
        }
        out
    }
}

fn segment_distance_sq(p: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq > 0.0 {
        ((p - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm_squared()
}

/// Union of 2D capsules `(a, b, radius)`; a pixel is set when its center lies
/// within `radius` of a segment.
pub fn rasterize_capsules(
    capsules: &[(Vector2<f64>, Vector2<f64>, f64)],
    height: usize,
    width: usize,
) -> Mask {
    let mut mask = Mask::empty(height, width);
    for (a, b, radius) in capsules {
        let r = *radius;
        let r_sq = r * r;
        let x0 = (a.x.min(b.x) - r).floor().max(0.0) as usize;
        let y0 = (a.y.min(b.y) - r).floor().max(0.0) as usize;
        let x1 = ((a.x.max(b.x) + r).ceil().max(0.0) as usize).min(width);
        let y1 = ((a.y.max(b.y) + r).ceil().max(0.0) as usize).min(height);
        for row in y0..y1 {
            for col in x0..x1 {
                let p = Vector2::new(col as f64 + 0.5, row as f64 + 0.5);
                if segment_distance_sq(&p, a, b) <= r_sq {
                    mask.data[row * width + col] = 1;
                }
            }
        }
    }
    mask
}

/// Silhouette of a posed skeleton from its projected joints.
pub fn skeleton_mask(skel: &Skeleton, keypoints: &Keypoints, cam: &Camera) -> Mask {
    let capsules: Vec<_> = (1..skel.joint_count())
        .map(|j| {
            let p = skel.parents[j].unwrap();
            (keypoints[p], keypoints[j], skel.radii[j] * cam.scale)
        })
        .collect();
    rasterize_capsules(&capsules, cam.height, cam.width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_capsule_covers_its_segment() {
        let m = rasterize_capsules(
            &[(Vector2::new(2.0, 2.0), Vector2::new(8.0, 2.0), 1.0)],
            10,
            10,
        );
        assert!(m.get(1, 2) && m.get(1, 7));
        assert!(!m.get(5, 5));
        assert_eq!(m.bbox(), Some([1.0, 1.0, 8.0, 2.0]));
    }

    #[test]
    fn offscreen_capsule_is_clipped() {
        let m = rasterize_capsules(
            &[(Vector2::new(-20.0, -20.0), Vector2::new(-10.0, -10.0), 2.0)],
            8,
            8,
        );
        assert_eq!(m.count(), 0);
    }
}
