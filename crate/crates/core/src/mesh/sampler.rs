use glam::DVec3;
use rand::Rng;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::rng;

/// Area-weighted uniform point sampling on a mesh surface.
#[derive(Debug, Clone)]
pub struct SurfaceSampler<'a> {
    mesh: &'a TriangleMesh,
    cumulative: Vec<f64>,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Result<Self> {
        if mesh.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = (0..mesh.faces().len())
            .map(|f| {
                acc += mesh.face_area(f);
                acc
            })
            .collect();
        Ok(SurfaceSampler { mesh, cumulative })
    }

    pub fn total_area(&self) -> f64 {
        *self.cumulative.last().expect("non-empty")
    }

    /// `n` points with the faces they were drawn from.
    pub fn sample_with_faces(&self, n: usize, seed: u64) -> Result<Vec<(usize, DVec3)>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be >= 1".into()));
        }
        let total = self.total_area();
        let mut r = rng::stream(seed, 0x5A3F);
        Ok((0..n)
            .map(|_| {
                let u: f64 = r.random::<f64>() * total;
                let face = self
                    .cumulative
                    .partition_point(|&c| c <= u)
                    .min(self.cumulative.len() - 1);
                let [a, b, c] = self.mesh.triangle(face);
                let s = r.random::<f64>().sqrt();
                let t: f64 = r.random();
                (face, a * (1.0 - s) + b * (s * (1.0 - t)) + c * (s * t))
            })
            .collect())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<Vec<DVec3>> {
        Ok(self
            .sample_with_faces(n, seed)?
            .into_iter()
            .map(|(_, p)| p)
            .collect())
    }
}

/// Convenience wrapper over [`SurfaceSampler`].
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<DVec3>> {
    SurfaceSampler::new(mesh)?.sample(n, seed)
}
