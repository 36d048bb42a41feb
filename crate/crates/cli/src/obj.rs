use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Result;
use quadmotion::skeleton::{linear_blend_skinning, Pose, Skeleton, SkinnedMesh};

pub fn obj_text(vertices: &[nalgebra::Vector3<f64>], faces: &[[usize; 3]]) -> String {
    let mut s = String::with_capacity(32 * (vertices.len() + faces.len()));
    for v in vertices {
        let _ = writeln!(s, "v {:.6} {:.6} {:.6}", v.x, v.y, v.z);
    }
    for f in faces {
        let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    s
}

/// Skins `mesh` for every pose and writes `frame_NNNN.obj` files into `dir`.
pub fn export_frames(
    dir: &Path,
    skel: &Skeleton,
    mesh: &SkinnedMesh,
    poses: &[Pose],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    poses
        .iter()
        .enumerate()
        .map(|(t, pose)| {
            let verts = linear_blend_skinning(mesh, skel, pose)?;
            let path = dir.join(format!("frame_{t:04}.obj"));
            std::fs::write(&path, obj_text(&verts, &mesh.faces))?;
            Ok(path)
        })
        .collect()
}
