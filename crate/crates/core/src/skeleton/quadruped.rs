use nalgebra::Vector3;

use super::{Skeleton, SkinnedMesh};

/// `(name, parent, rest position, capsule radius)`; x points forward, y up, z to the left.
pub const QUADRUPED_JOINTS: [(&str, Option<usize>, [f64; 3], f64); 21] = [
    ("pelvis", None, [-0.40, 1.00, 0.00], 0.20),
    ("spine_mid", Some(0), [0.00, 1.05, 0.00], 0.22),
    ("chest", Some(1), [0.40, 1.05, 0.00], 0.22),
    ("neck", Some(2), [0.62, 1.35, 0.00], 0.10),
    ("head", Some(3), [0.80, 1.60, 0.00], 0.09),
    ("muzzle", Some(4), [1.05, 1.45, 0.00], 0.07),
    ("tail_base", Some(0), [-0.60, 1.00, 0.00], 0.05),
    ("tail_mid", Some(6), [-0.75, 0.85, 0.00], 0.04),
    ("tail_tip", Some(7), [-0.85, 0.65, 0.00], 0.03),
    ("front_left_shoulder", Some(2), [0.40, 0.85, 0.15], 0.08),
    ("front_left_knee", Some(9), [0.42, 0.45, 0.15], 0.06),
    ("front_left_hoof", Some(10), [0.42, 0.05, 0.15], 0.05),
    ("front_right_shoulder", Some(2), [0.40, 0.85, -0.15], 0.08),
    ("front_right_knee", Some(12), [0.42, 0.45, -0.15], 0.06),
    ("front_right_hoof", Some(13), [0.42, 0.05, -0.15], 0.05),
    ("hind_left_hip", Some(0), [-0.40, 0.85, 0.15], 0.09),
    ("hind_left_hock", Some(15), [-0.45, 0.45, 0.15], 0.06),
    ("hind_left_hoof", Some(16), [-0.42, 0.05, 0.15], 0.05),
    ("hind_right_hip", Some(0), [-0.40, 0.85, -0.15], 0.09),
    ("hind_right_hock", Some(18), [-0.45, 0.45, -0.15], 0.06),
    ("hind_right_hoof", Some(19), [-0.42, 0.05, -0.15], 0.05),
];

/// The default 21-joint (20-bone) quadruped skeleton.
pub fn quadruped() -> Skeleton {
    let names = QUADRUPED_JOINTS.iter().map(|j| j.0.to_string()).collect();
    let parents = QUADRUPED_JOINTS.iter().map(|j| j.1).collect();
    let joints = QUADRUPED_JOINTS
        .iter()
        .map(|j| Vector3::from(j.2))
        .collect();
    let radii = QUADRUPED_JOINTS.iter().map(|j| j.3).collect();
    Skeleton::new(names, joints, parents, radii).expect("built-in skeleton is valid")
}

fn point_segment_distance(x: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_squared();
    let t = if len_sq > 0.0 {
        ((x - a).dot(&ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x - (a + ab * t)).norm()
}

/// Tube mesh around every bone with Gaussian-falloff skinning weights.
///
/// `falloff` is the standard deviation (skeleton units) of the weight kernel
/// around each bone segment; the root uses its joint position as a point bone.
pub fn quadruped_mesh(skel: &Skeleton, falloff: f64) -> SkinnedMesh {
    const RING: usize = 6;
    const STATIONS: [f64; 3] = [0.15, 0.5, 0.85];
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for j in 1..skel.joint_count() {
        let p = skel.parents[j].unwrap();
        let (a, b) = (skel.rest_joints[p], skel.rest_joints[j]);
        let axis = (b - a).normalize();
        let helper = if axis.z.abs() < 0.9 {
            Vector3::z()
        } else {
            Vector3::x()
        };
        let u = axis.cross(&helper).normalize();
        let v = axis.cross(&u);
        let base = vertices.len();
        for t in STATIONS {
            let c = a + (b - a) * t;
            for k in 0..RING {
                let ang = std::f64::consts::TAU * k as f64 / RING as f64;
                vertices.push(c + (u * ang.cos() + v * ang.sin()) * skel.radii[j]);
            }
        }
        for s in 0..STATIONS.len() - 1 {
            for k in 0..RING {
                let i0 = base + s * RING + k;
                let i1 = base + s * RING + (k + 1) % RING;
                let i2 = i0 + RING;
                let i3 = i1 + RING;
                faces.push([i0, i1, i3]);
                faces.push([i0, i3, i2]);
            }
        }
    }
    let n_joints = skel.joint_count();
    let mut weights = Vec::with_capacity(vertices.len() * n_joints);
    for x in &vertices {
        let d2: Vec<f64> = (0..n_joints)
            .map(|j| {
                let d = match skel.parents[j] {
                    None => (x - skel.rest_joints[j]).norm(),
                    Some(p) => {
                        point_segment_distance(x, &skel.rest_joints[p], &skel.rest_joints[j])
                    }
                };
                d * d
            })
            .collect();
        let min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = d2
            .iter()
            .map(|d| (-(d - min) / (2.0 * falloff * falloff)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        weights.extend(raw.iter().map(|w| w / total));
    }
    SkinnedMesh {
        vertices,
        weights,
        joint_count: n_joints,
        faces,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadruped_has_twenty_bones() {
        let s = quadruped();
        assert_eq!(s.joint_count(), 21);
        assert_eq!(s.bone_count(), 20);
        assert_eq!(s.param_count(), 66);
    }

    #[test]
    fn mesh_weights_are_normalized() {
        let s = quadruped();
        let m = quadruped_mesh(&s, 0.1);
        m.validate(&s).unwrap();
        assert_eq!(m.vertices.len(), 20 * 18);
    }
}
