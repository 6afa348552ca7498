//! Indexed triangle meshes and the geometric queries built on them.

mod bvh;
mod distance;
mod off;
pub mod primitives;
mod sampler;

use glam::DVec3;
use rayon::prelude::*;

use crate::error::{Error, Result};

pub use bvh::{Nearest, SpatialIndex};
pub use distance::{closest_point_on_triangle, point_triangle_distance};
pub use off::{load_off, read_off, save_off, write_off};
pub use sampler::{sample_surface_points, SurfaceSampler};

/// Faces with area below this (mm²) are rejected as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// A triangle surface in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<DVec3>,
    faces: Vec<[u32; 3]>,
    normals: Option<Vec<DVec3>>,
}

pub(crate) fn triangle_area(a: DVec3, b: DVec3, c: DVec3) -> f64 {
    0.5 * (b - a).cross(c - a).length()
}

impl TriangleMesh {
    pub fn new(vertices: Vec<DVec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(v) = vertices.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("vertex {v}")));
        }
        let n = vertices.len();
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidArgument(format!(
                    "face {fi} {f:?} references a vertex >= {n}"
                )));
            }
            let area = triangle_area(
                vertices[f[0] as usize],
                vertices[f[1] as usize],
                vertices[f[2] as usize],
            );
            if !(area >= DEGENERATE_AREA) {
                return Err(Error::DegenerateTriangle { area });
            }
        }
        Ok(TriangleMesh {
            vertices,
            faces,
            normals: None,
        })
    }

    /// Attach per-vertex normals; each must be unit length within 1e-6.
    pub fn with_normals(mut self, normals: Vec<DVec3>) -> Result<Self> {
        if normals.len() != self.vertices.len() {
            return Err(Error::InvalidArgument(format!(
                "{} normals for {} vertices",
                normals.len(),
                self.vertices.len()
            )));
        }
        if let Some(i) = normals.iter().position(|n| (n.length() - 1.0).abs() > 1e-6) {
            return Err(Error::InvalidArgument(format!(
                "normal {i} is not unit length"
            )));
        }
        self.normals = Some(normals);
        Ok(self)
    }

    pub fn vertices(&self) -> &[DVec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn normals(&self) -> Option<&[DVec3]> {
        self.normals.as_deref()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn triangle(&self, face: usize) -> [DVec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn triangles(&self) -> impl Iterator<Item = [DVec3; 3]> + '_ {
        (0..self.faces.len()).map(|f| self.triangle(f))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        triangle_area(a, b, c)
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume; positive for outward-oriented closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles()
            .map(|[a, b, c]| a.dot(b.cross(c)) / 6.0)
            .sum()
    }

    pub fn bounds(&self) -> Option<(DVec3, DVec3)> {
        let mut it = self.vertices.iter();
        let first = *it.next()?;
        Some(it.fold((first, first), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Reverse the winding of every face.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            faces: self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|v| -*v).collect()),
        }
    }

    pub fn translated(&self, t: DVec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| *v + t).collect(),
            faces: self.faces.clone(),
            normals: self.normals.clone(),
        }
    }

    /// Replace vertex positions keeping connectivity. Re-validates faces.
    pub fn with_vertices(&self, vertices: Vec<DVec3>) -> Result<TriangleMesh> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidArgument("vertex count changed".into()));
        }
        TriangleMesh::new(vertices, self.faces.clone())
    }

    /// Area-weighted vertex normals following face winding.
    pub fn vertex_normals(&self) -> Result<Vec<DVec3>> {
        let mut acc = vec![DVec3::ZERO; self.vertices.len()];
        let mut used = vec![false; self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            let [a, b, c] = self.triangle(fi);
            // |cross| is twice the face area
            let n = (b - a).cross(c - a);
            for &v in f {
                acc[v as usize] += n;
                used[v as usize] = true;
            }
        }
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::IsolatedVertex(v));
        }
        acc.into_iter()
            .enumerate()
            .map(|(i, n)| {
                let len = n.length();
                if len > 0.0 {
                    Ok(n / len)
                } else {
                    Err(Error::InvalidArgument(format!(
                        "incident face normals cancel at vertex {i}"
                    )))
                }
            })
            .collect()
    }

    /// Move every vertex by `offset` along its normal (negative = inward).
    ///
    /// With a `floor`, a vertex whose path would bring it closer than `min_gap`
    /// to the floor surface stops at the first point of its path where the gap
    /// reaches `min_gap` (located by bisection to 1e-3 mm).
    pub fn offset_along_normals(
        &self,
        offset: f64,
        floor: Option<&SpatialIndex>,
        min_gap: f64,
    ) -> Result<TriangleMesh> {
        if !offset.is_finite() {
            return Err(Error::InvalidArgument("offset must be finite".into()));
        }
        if offset == 0.0 {
            return Ok(self.clone());
        }
        if let Some(floor) = floor {
            if floor.is_empty() {
                return Err(Error::EmptyMesh);
            }
            if !(min_gap > 0.0) {
                return Err(Error::InvalidArgument("min_gap must be positive".into()));
            }
        }
        let normals = match &self.normals {
            Some(n) => n.clone(),
            None => self.vertex_normals()?,
        };
        let moved: Vec<DVec3> = self
            .vertices
            .par_iter()
            .zip(normals.par_iter())
            .map(|(&v, &n)| {
                let target = v + n * offset;
                match floor {
                    None => target,
                    Some(floor) => clamp_motion(v, target, floor, min_gap),
                }
            })
            .collect();
        self.with_vertices(moved)
    }
}

const CLAMP_TOLERANCE: f64 = 1e-3;

fn clamp_motion(start: DVec3, end: DVec3, floor: &SpatialIndex, min_gap: f64) -> DVec3 {
    let gap = |p: DVec3| floor.distance(p).unwrap_or(f64::INFINITY);
    if gap(start) < min_gap {
        return start;
    }
    let len = (end - start).length();
    let step = 0.5 * min_gap;
    let n = (len / step).ceil().max(1.0) as usize;
    let at = |s: f64| start + (end - start) * s;
    let mut prev = 0.0;
    for k in 1..=n {
        let s = k as f64 / n as f64;
        if gap(at(s)) < min_gap {
            // distance is 1-Lipschitz and samples are <= min_gap/2 apart, so a
            // crossing of the floor cannot slip between two samples
            let (mut lo, mut hi) = (prev, s);
            while (hi - lo) * len > CLAMP_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if gap(at(mid)) < min_gap {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return at(lo);
        }
        prev = s;
    }
    end
}

#[cfg(test)]
mod tests {
    use super::primitives::icosphere;
    use super::*;

    fn corner_tetra() -> TriangleMesh {
        let v = vec![DVec3::ZERO, DVec3::X, DVec3::Y, DVec3::Z];
        // outward winding
        let f = vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]];
        TriangleMesh::new(v, f).unwrap()
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![DVec3::ZERO, DVec3::X, DVec3::Y];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]).is_err());
        let collinear = vec![DVec3::ZERO, DVec3::X, DVec3::X * 2.0];
        assert!(matches!(
            TriangleMesh::new(collinear, vec![[0, 1, 2]]),
            Err(Error::DegenerateTriangle { .. })
        ));
    }

    #[test]
    fn corner_normal_is_diagonal() {
        let m = corner_tetra();
        assert!(m.signed_volume() > 0.0);
        let n = m.vertex_normals().unwrap();
        let expected = -DVec3::ONE / 3f64.sqrt();
        assert!((n[0] - expected).length() < 1e-12, "{:?}", n[0]);
    }

    #[test]
    fn flipped_winding_negates_normals() {
        let m = icosphere(3.0, 2);
        let a = m.vertex_normals().unwrap();
        let b = m.flipped().vertex_normals().unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((*x + *y).length() < 1e-12);
        }
    }

    #[test]
    fn icosphere_normals_are_radial() {
        let m = icosphere(5.0, 3);
        let n = m.vertex_normals().unwrap();
        for (v, n) in m.vertices().iter().zip(&n) {
            let cos = v.normalize().dot(*n);
            assert!(cos > 5f64.to_radians().cos());
        }
    }

    #[test]
    fn isolated_vertex_is_reported() {
        let v = vec![DVec3::ZERO, DVec3::X, DVec3::Y, DVec3::Z];
        let m = TriangleMesh::new(v, vec![[0, 1, 2]]).unwrap();
        assert!(matches!(m.vertex_normals(), Err(Error::IsolatedVertex(3))));
    }

    #[test]
    fn zero_offset_is_identity() {
        let m = icosphere(4.0, 2);
        assert_eq!(m.offset_along_normals(0.0, None, 0.05).unwrap(), m);
    }

    #[test]
    fn inward_offset_shrinks_sphere() {
        let m = icosphere(10.0, 4);
        let o = m.offset_along_normals(-0.5, None, 0.0).unwrap();
        for v in o.vertices() {
            assert!((v.length() - 9.5).abs() < 1e-2, "{}", v.length());
        }
    }

    #[test]
    fn offset_stops_at_floor() {
        let pial = icosphere(10.0, 4);
        let white = icosphere(9.8, 4);
        let floor = SpatialIndex::build(&white);
        let o = pial.offset_along_normals(-0.6, Some(&floor), 0.05).unwrap();
        for v in o.vertices() {
            let r = v.length();
            // faceted floor sits slightly inside radius 9.8
            assert!((r - 9.85).abs() < 0.02, "radius {r}");
            assert!(floor.distance(*v).unwrap() >= 0.05 - 1e-9);
        }
    }

    #[test]
    fn empty_floor_rejected() {
        let pial = icosphere(10.0, 1);
        let empty = SpatialIndex::build(&TriangleMesh::new(vec![], vec![]).unwrap());
        assert!(matches!(
            pial.offset_along_normals(-0.1, Some(&empty), 0.05),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn offset_round_trip_on_plane_is_exact() {
        let m = primitives::grid_patch(4, 1.0);
        let there = m.offset_along_normals(0.25, None, 0.0).unwrap();
        let back = there.offset_along_normals(-0.25, None, 0.0).unwrap();
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn offset_round_trip_bounded_by_normal_deviation() {
        let m = icosphere(6.0, 3);
        let delta = 0.3;
        let there = m.offset_along_normals(delta, None, 0.0).unwrap();
        let back = there.offset_along_normals(-delta, None, 0.0).unwrap();
        let n0 = m.vertex_normals().unwrap();
        let n1 = there.vertex_normals().unwrap();
        let cos_min = n0
            .iter()
            .zip(&n1)
            .map(|(a, b)| a.dot(*b))
            .fold(1.0f64, f64::min);
        // |delta * (n0 - n1)| = 2 |delta| sin(theta / 2)
        let bound = delta * (2.0 * (1.0 - cos_min)).sqrt() + 1e-12;
        for (a, b) in back.vertices().iter().zip(m.vertices()) {
            assert!((*a - *b).length() <= bound.max(1e-9));
        }
    }
}
