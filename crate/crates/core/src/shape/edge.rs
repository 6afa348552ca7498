use glam::DVec3;
use rayon::prelude::*;

use crate::error::Result;
use crate::grid::{Geometry, ValueKind, VoxelGrid};
use crate::mesh::TriangleMesh;

// Touching counts as overlap; a hair of slack keeps shared box faces marked
// on both sides when a triangle lies exactly on them.
const SAT_SLACK: f64 = 1e-9;

/// Separating-axis overlap test between a triangle and the axis-aligned box
/// `center ± half`.
pub fn triangle_box_overlap(center: DVec3, half: DVec3, tri: [DVec3; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];
    let eps = SAT_SLACK * half.max_element().max(1.0);

    // box face normals
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half[a] + eps || hi < -half[a] - eps {
            return false;
        }
    }
    // triangle normal
    let n = e[0].cross(e[1]);
    let r = half.dot(n.abs());
    let d = n.dot(v[0]);
    if d.abs() > r + eps * n.length() {
        return false;
    }
    // edge cross products
    for edge in e {
        for a in 0..3 {
            let mut unit = DVec3::ZERO;
            unit[a] = 1.0;
            let axis = unit.cross(edge);
            let len = axis.length();
            if len < 1e-300 {
                continue;
            }
            let p = [axis.dot(v[0]), axis.dot(v[1]), axis.dot(v[2])];
            let lo = p[0].min(p[1]).min(p[2]);
            let hi = p[0].max(p[1]).max(p[2]);
            let r = half.dot(axis.abs());
            if lo > r + eps * len || hi < -r - eps * len {
                return false;
            }
        }
    }
    true
}

/// Voxels whose box touches any triangle of either mesh.
pub fn edge_map(
    mesh_p: &TriangleMesh,
    mesh_w: &TriangleMesh,
    geometry: &Geometry,
) -> Result<VoxelGrid> {
    geometry.validate()?;
    let half = geometry.spacing_vec() * 0.5;
    let dims = geometry.dims;
    let tris: Vec<[DVec3; 3]> = mesh_p.triangles().chain(mesh_w.triangles()).collect();
    let marked: Vec<Vec<usize>> = tris
        .par_iter()
        .map(|&tri| {
            let lo = tri[0].min(tri[1]).min(tri[2]);
            let hi = tri[0].max(tri[1]).max(tri[2]);
            let ilo = geometry.world_to_index(lo - half);
            let ihi = geometry.world_to_index(hi + half);
            let mut range = [(0usize, 0usize); 3];
            for a in 0..3 {
                let a0 = ilo[a].floor().max(0.0);
                let a1 = ihi[a].ceil().min(dims[a] as f64 - 1.0);
                if a1 < a0 {
                    return Vec::new();
                }
                range[a] = (a0 as usize, a1 as usize);
            }
            let mut out = Vec::new();
            for k in range[2].0..=range[2].1 {
                for j in range[1].0..=range[1].1 {
                    for i in range[0].0..=range[0].1 {
                        if triangle_box_overlap(geometry.center_unchecked([i, j, k]), half, tri) {
                            out.push(geometry.linear_index([i, j, k]));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut data = vec![0f32; geometry.len()];
    for idx in marked.into_iter().flatten() {
        data[idx] = 1.0;
    }
    VoxelGrid::new(*geometry, ValueKind::BinaryMask, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{icosphere, plane_patch, radial_surface};
    use crate::mesh::sample_surface_points;

    #[test]
    fn plane_marks_single_layer() {
        let g = Geometry::new([10, 10, 10], [1.0; 3], [0.0; 3]).unwrap();
        let plane = plane_patch(16, 1.0, DVec3::new(4.5, 4.5, 5.0));
        let e = edge_map(&plane, &plane, &g).unwrap();
        for k in 0..10 {
            for j in 0..10 {
                for i in 0..10 {
                    let want = if k == 5 { 1.0 } else { 0.0 };
                    assert_eq!(e.at([i, j, k]), want, "{:?}", [i, j, k]);
                }
            }
        }
    }

    #[test]
    fn outside_mesh_leaves_map_empty() {
        let g = Geometry::centered_cube(8, 1.0).unwrap();
        let far = icosphere(2.0, 1).translated(DVec3::new(100.0, 0.0, 0.0));
        let e = edge_map(&far, &far, &g).unwrap();
        assert!(e.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampled_points_fall_in_marked_voxels() {
        let g = Geometry::centered_cube(20, 1.0).unwrap();
        let p = radial_surface(3, DVec3::new(0.2, 0.1, -0.3), |u| 7.0 + 0.5 * u.x * u.y);
        let w = icosphere(4.3, 3);
        let e = edge_map(&p, &w, &g).unwrap();
        for (mesh, seed) in [(&p, 1u64), (&w, 2)] {
            for q in sample_surface_points(mesh, 5_000, seed).unwrap() {
                let f = g.world_to_index(q);
                // every voxel whose closed box contains q, at least one marked
                let idx = [
                    f.x.round() as usize,
                    f.y.round() as usize,
                    f.z.round() as usize,
                ];
                assert_eq!(e.at(idx), 1.0, "point {q:?}");
            }
        }
    }

    #[test]
    fn sat_agrees_with_dense_sampling() {
        // a triangle overlaps a box iff some point of it is inside the box;
        // dense sampling gives a one-sided oracle
        let half = DVec3::splat(0.5);
        let mut r = crate::rng::stream(5, 0);
        use rand::Rng;
        for _ in 0..400 {
            let tri = [0, 1, 2].map(|_| {
                DVec3::new(
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                    r.random_range(-1.5..1.5),
                )
            });
            let n = 60;
            let mut hit = false;
            for a in 0..=n {
                for b in 0..=(n - a) {
                    let (u, v) = (a as f64 / n as f64, b as f64 / n as f64);
                    let p = tri[0] + (tri[1] - tri[0]) * u + (tri[2] - tri[0]) * v;
                    if p.abs().cmple(half).all() {
                        hit = true;
                    }
                }
            }
            if hit {
                assert!(triangle_box_overlap(DVec3::ZERO, half, tri));
            }
        }
    }
}
