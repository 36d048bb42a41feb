use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;

use super::rotation::{rodrigues, rodrigues_derivatives};
use super::{Camera, Keypoints, Pose, Skeleton, SkinnedMesh};
use crate::error::{Error, Result};

/// Intermediate results of posing a skeleton, kept so Jacobians can reuse them.
#[derive(Debug, Clone)]
pub struct PosedSkeleton {
    /// Accumulated chain rotation `Q_j` of every joint (root = identity).
    pub chain_rotations: Vec<Matrix3<f64>>,
    /// Joint positions before the rigid root transform.
    pub local_joints: Vec<Vector3<f64>>,
    pub rigid_rotation: Matrix3<f64>,
    pub rigid_translation: Vector3<f64>,
    /// Final joint positions.
    pub joints: Vec<Vector3<f64>>,
}

impl PosedSkeleton {
    /// Chain transform of joint `j` applied to a canonical point (rigid part excluded).
    fn bone_apply(&self, skel: &Skeleton, j: usize, v: &Vector3<f64>) -> Vector3<f64> {
        self.local_joints[j] + self.chain_rotations[j] * (v - skel.rest_joints[j])
    }
}

fn check_pose(skel: &Skeleton, pose: &Pose) -> Result<()> {
    if pose.bone_count() != skel.bone_count() {
        return Err(Error::dim(format!(
            "pose has {} bone rotations, skeleton has {} bones",
            pose.bone_count(),
            skel.bone_count()
        )));
    }
    Ok(())
}

pub fn pose_skeleton(skel: &Skeleton, pose: &Pose) -> Result<PosedSkeleton> {
    check_pose(skel, pose)?;
    let b = skel.joint_count();
    let mut chain_rotations = vec![Matrix3::identity(); b];
    let mut local_joints = vec![skel.rest_joints[0]; b];
    for j in 1..b {
        let p = skel.parents[j].expect("validated skeleton");
        let q = chain_rotations[p] * rodrigues(&pose.bone_rotations[j - 1]);
        local_joints[j] = local_joints[p] + q * (skel.rest_joints[j] - skel.rest_joints[p]);
        chain_rotations[j] = q;
    }
    let rigid_rotation = rodrigues(&pose.rigid_rotation);
    let rigid_translation = pose.rigid_translation;
    let joints = local_joints
        .iter()
        .map(|x| rigid_rotation * x + rigid_translation)
        .collect();
    Ok(PosedSkeleton {
        chain_rotations,
        local_joints,
        rigid_rotation,
        rigid_translation,
        joints,
    })
}

pub fn forward_kinematics(skel: &Skeleton, pose: &Pose) -> Result<Vec<Vector3<f64>>> {
    Ok(pose_skeleton(skel, pose)?.joints)
}

pub fn keypoints2d(skel: &Skeleton, pose: &Pose, cam: &Camera) -> Result<Keypoints> {
    Ok(cam.project(&forward_kinematics(skel, pose)?))
}

pub fn linear_blend_skinning(
    mesh: &SkinnedMesh,
    skel: &Skeleton,
    pose: &Pose,
) -> Result<Vec<Vector3<f64>>> {
    mesh.validate(skel)?;
    let posed = pose_skeleton(skel, pose)?;
    Ok(mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(v, x)| {
            let mut acc = Vector3::zeros();
            for (j, w) in mesh.weight_row(v).iter().enumerate() {
                if *w != 0.0 {
                    acc += *w * posed.bone_apply(skel, j, x);
                }
            }
            posed.rigid_rotation * acc + posed.rigid_translation
        })
        .collect())
}

/// Per-bone derivative operators `Q_p ∂R_j/∂w_k R_jᵀ Q_pᵀ`: applied to
/// `x − x_p` for a point `x` in the subtree of `j`, they give `∂x/∂w_{j,k}`
/// (before the rigid rotation).
fn bone_derivative_ops(
    skel: &Skeleton,
    pose: &Pose,
    posed: &PosedSkeleton,
    j: usize,
) -> [Matrix3<f64>; 3] {
    let p = skel.parents[j].expect("validated skeleton");
    let w = &pose.bone_rotations[j - 1];
    let r = rodrigues(w);
    let d = rodrigues_derivatives(w);
    let qp = posed.chain_rotations[p];
    d.map(|dk| qp * dk * r.transpose() * qp.transpose())
}

/// Jacobian of a family of points that are linear blends of bone transforms.
///
/// `blend(j)` yields, for each output point, the weighted chain-transformed
/// position contributed by joint `j`'s transform; `local(i)` is the blended
/// pre-rigid position of point `i`. Returns a `3N × P` matrix.
fn blend_jacobian(
    skel: &Skeleton,
    pose: &Pose,
    posed: &PosedSkeleton,
    n_points: usize,
    local: impl Fn(usize) -> Vector3<f64>,
    contribution: impl Fn(usize, usize) -> Option<(f64, Vector3<f64>)>,
) -> Array2<f64> {
    let p_count = skel.param_count();
    let mut jac = Array2::zeros((3 * n_points, p_count));
    let r1 = posed.rigid_rotation;
    let dr1 = rodrigues_derivatives(&pose.rigid_rotation);
    for i in 0..n_points {
        let x = local(i);
        for k in 0..3 {
            let d = dr1[k] * x;
            for a in 0..3 {
                jac[[3 * i + a, k]] = d[a];
            }
            jac[[3 * i + k, 3 + k]] = 1.0;
        }
    }
    for j in 1..skel.joint_count() {
        let ops = bone_derivative_ops(skel, pose, posed, j);
        let sub = skel.subtree_mask(j);
        let xp = posed.local_joints[skel.parents[j].unwrap()];
        let col0 = 6 + 3 * (j - 1);
        for i in 0..n_points {
            let mut acc = [Vector3::zeros(); 3];
            let mut touched = false;
            for (c, in_sub) in sub.iter().enumerate() {
                if !in_sub {
                    continue;
                }
                if let Some((w, g)) = contribution(i, c) {
                    touched = true;
                    for k in 0..3 {
                        acc[k] += w * (ops[k] * (g - xp));
                    }
                }
            }
            if touched {
                for k in 0..3 {
                    let d = r1 * acc[k];
                    for a in 0..3 {
                        jac[[3 * i + a, col0 + k]] = d[a];
                    }
                }
            }
        }
    }
    jac
}

/// Jacobian of the posed joints (stacked `x, y, z` per joint) with respect to
/// the flat pose parameters: a `3B × P` matrix.
pub fn joint_jacobian(skel: &Skeleton, pose: &Pose, posed: &PosedSkeleton) -> Array2<f64> {
    blend_jacobian(
        skel,
        pose,
        posed,
        skel.joint_count(),
        |i| posed.local_joints[i],
        |i, c| (i == c).then(|| (1.0, posed.local_joints[c])),
    )
}

/// Keypoints and their `2B × P` Jacobian with respect to the flat pose parameters.
pub fn keypoints_jacobian(
    skel: &Skeleton,
    pose: &Pose,
    cam: &Camera,
) -> Result<(Keypoints, Array2<f64>)> {
    let posed = pose_skeleton(skel, pose)?;
    let j3 = joint_jacobian(skel, pose, &posed);
    let b = skel.joint_count();
    let mut j2 = Array2::zeros((2 * b, skel.param_count()));
    for i in 0..b {
        for a in 0..2 {
            let src = j3.row(3 * i + a);
            j2.row_mut(2 * i + a).assign(&(&src * cam.scale));
        }
    }
    Ok((cam.project(&posed.joints), j2))
}

/// `3N × P` Jacobian of the skinned vertices with respect to the flat pose parameters.
pub fn linear_blend_skinning_jacobian(
    mesh: &SkinnedMesh,
    skel: &Skeleton,
    pose: &Pose,
) -> Result<Array2<f64>> {
    mesh.validate(skel)?;
    let posed = pose_skeleton(skel, pose)?;
    let blended: Vec<Vector3<f64>> = mesh
        .vertices
        .iter()
        .enumerate()
        .map(|(v, x)| {
            mesh.weight_row(v)
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(j, w)| *w * posed.bone_apply(skel, j, x))
                .sum()
        })
        .collect();
    Ok(blend_jacobian(
        skel,
        pose,
        &posed,
        mesh.vertices.len(),
        |i| blended[i],
        |i, c| {
            let w = mesh.weight_row(i)[c];
            (w != 0.0).then(|| (w, posed.bone_apply(skel, c, &mesh.vertices[i])))
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::rotation::rodrigues;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain2() -> Skeleton {
        Skeleton::new(
            vec!["a".into(), "b".into()],
            vec![Vector3::zeros(), Vector3::new(1.0, 0.0, 0.0)],
            vec![None, Some(0)],
            vec![0.1, 0.1],
        )
        .unwrap()
    }

    fn random_tree(rng: &mut ChaCha8Rng, b: usize) -> Skeleton {
        let mut parents = vec![None];
        for j in 1..b {
            parents.push(Some(rng.random_range(0..j)));
        }
        let joints = (0..b)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect();
        Skeleton::new(
            (0..b).map(|j| format!("j{j}")).collect(),
            joints,
            parents,
            vec![0.1; b],
        )
        .unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng, bones: usize) -> Pose {
        let mut v = || {
            Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
        };
        Pose {
            rigid_rotation: v(),
            rigid_translation: v(),
            bone_rotations: (0..bones).map(|_| v()).collect(),
        }
    }

    fn homogeneous(r: Matrix3<f64>, t: Vector3<f64>) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    /// Independent oracle: compose `T(J_p) R T(-J_p)` as explicit 4×4 matrices.
    fn fk_homogeneous(skel: &Skeleton, pose: &Pose) -> Vec<Vector3<f64>> {
        let b = skel.joint_count();
        let mut world = vec![Matrix4::identity(); b];
        for j in 1..b {
            let p = skel.parents[j].unwrap();
            let jp = skel.rest_joints[p];
            let local = homogeneous(Matrix3::identity(), jp)
                * homogeneous(rodrigues(&pose.bone_rotations[j - 1]), Vector3::zeros())
                * homogeneous(Matrix3::identity(), -jp);
            world[j] = world[p] * local;
        }
        let rigid = homogeneous(rodrigues(&pose.rigid_rotation), pose.rigid_translation);
        (0..b)
            .map(|j| {
                let x = skel.rest_joints[j];
                let h = rigid * world[j] * nalgebra::Vector4::new(x.x, x.y, x.z, 1.0);
                Vector3::new(h.x, h.y, h.z)
            })
            .collect()
    }

    #[test]
    fn identity_pose_keeps_rest_joints() {
        let skel = crate::skeleton::quadruped();
        let out = forward_kinematics(&skel, &Pose::identity(skel.bone_count())).unwrap();
        for (a, b) in out.iter().zip(&skel.rest_joints) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn child_rotated_quarter_turn() {
        let skel = chain2();
        let mut pose = Pose::identity(1);
        pose.bone_rotations[0] = Vector3::new(0.0, 0.0, std::f64::consts::FRAC_PI_2);
        let out = forward_kinematics(&skel, &pose).unwrap();
        assert!((out[1] - (out[0] + Vector3::new(0.0, 1.0, 0.0))).norm() < 1e-12);
    }

    #[test]
    fn mismatched_bone_count_is_rejected() {
        let skel = chain2();
        assert!(matches!(
            forward_kinematics(&skel, &Pose::identity(3)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn random_tree_matches_homogeneous_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let skel = random_tree(&mut rng, 5);
            let pose = random_pose(&mut rng, 4);
            let a = forward_kinematics(&skel, &pose).unwrap();
            let b = fk_homogeneous(&skel, &pose);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).norm() < 1e-6);
            }
        }
    }

    #[test]
    fn keypoint_jacobian_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let skel = random_tree(&mut rng, 6);
        let pose = random_pose(&mut rng, 5);
        let cam = Camera::centered(20.0, 64, 64).unwrap();
        let (_, jac) = keypoints_jacobian(&skel, &pose, &cam).unwrap();
        let base = pose.to_params();
        let h = 1e-5;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            let plus = keypoints2d(&skel, &Pose::from_params(&p).unwrap(), &cam).unwrap();
            p[k] -= 2.0 * h;
            let minus = keypoints2d(&skel, &Pose::from_params(&p).unwrap(), &cam).unwrap();
            for i in 0..skel.joint_count() {
                for a in 0..2 {
                    let fd = (plus[i][a] - minus[i][a]) / (2.0 * h);
                    let an = jac[[2 * i + a, k]];
                    assert!(
                        (fd - an).abs() <= 1e-3 * fd.abs().max(1e-3),
                        "param {k} joint {i}: {fd} vs {an}"
                    );
                }
            }
        }
    }
}
