use glam::DVec3;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Geometry, Normalization, ValueKind, VoxelGrid};
use crate::mesh::{SpatialIndex, TriangleMesh};

/// Fraction of voxels allowed to have inconsistent containment votes.
pub const MAX_DISAGREEMENT: f64 = 1e-3;

// Scanline offsets in units of spacing. Irrational-looking so rays avoid
// mesh edges and vertices that sit on lattice-aligned coordinates.
const JITTER: [f64; 3] = [1.3719e-7, -2.2161e-7, 0.8743e-7];

/// Per-voxel containment votes from scanlines along x, y and z.
#[derive(Debug, Clone)]
pub struct SignVotes {
    /// Bit `a` set when the scanline along axis `a` says "inside".
    pub votes: Vec<u8>,
    /// Votes not unanimous, or a scanline through the voxel crossed the
    /// surface an odd number of times.
    pub conflict: Vec<bool>,
}

impl SignVotes {
    pub fn inside(&self, idx: usize) -> bool {
        self.votes[idx].count_ones() >= 2
    }
}

/// Ray-parity containment of every voxel center.
pub fn containment_votes(index: &SpatialIndex, geometry: &Geometry) -> SignVotes {
    let dims = geometry.dims;
    let n = geometry.len();
    let mut votes = vec![0u8; n];
    let mut odd = vec![false; n];
    for axis in 0..3 {
        let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut dir = DVec3::ZERO;
        dir[axis] = 1.0;
        let lines: Vec<(usize, usize, Vec<f64>, bool)> = (0..dims[v])
            .flat_map(|b| (0..dims[u]).map(move |a| (a, b)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(a, b)| {
                let mut idx = [0usize; 3];
                idx[u] = a;
                idx[v] = b;
                let mut origin = geometry.center_unchecked(idx);
                origin[u] += JITTER[u] * geometry.spacing[u];
                origin[v] += JITTER[v] * geometry.spacing[v];
                origin[axis] = 0.0;
                let mut hits = index.line_hits(origin, dir);
                hits.sort_by(|x, y| x.total_cmp(y));
                let odd = hits.len() % 2 == 1;
                (a, b, hits, odd)
            })
            .collect();
        for (a, b, hits, is_odd) in lines {
            let mut h = 0;
            for c in 0..dims[axis] {
                let mut idx = [0usize; 3];
                idx[u] = a;
                idx[v] = b;
                idx[axis] = c;
                let x = geometry.center_unchecked(idx)[axis];
                while h < hits.len() && hits[h] < x {
                    h += 1;
                }
                let lin = geometry.linear_index(idx);
                if h % 2 == 1 {
                    votes[lin] |= 1 << axis;
                }
                odd[lin] |= is_odd;
            }
        }
    }
    let conflict = votes
        .iter()
        .zip(&odd)
        .map(|(&v, &o)| o || (v != 0 && v != 0b111))
        .collect();
    SignVotes { votes, conflict }
}

/// Truncated signed distance in mm to a closed, consistently oriented mesh,
/// negative inside. Magnitudes saturate at `d_max`.
pub fn mesh_to_sdf(mesh: &TriangleMesh, geometry: &Geometry, d_max: f64) -> Result<VoxelGrid> {
    geometry.validate()?;
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if !(d_max.is_finite() && d_max > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "d_max must be positive, got {d_max}"
        )));
    }
    let index = SpatialIndex::build(mesh);
    let votes = containment_votes(&index, geometry);
    let total = geometry.len();
    let dist: Vec<f64> = (0..total)
        .into_par_iter()
        .map(|i| {
            let p = geometry.center_unchecked(geometry.unravel(i));
            index.nearest_within(p, d_max).map_or(d_max, |n| n.distance)
        })
        .collect();
    // voxel centers on the surface carry no sign information
    let on_surface = 1e-9 * geometry.mean_spacing();
    let disagreeing = (0..total)
        .filter(|&i| votes.conflict[i] && dist[i] > on_surface)
        .count();
    if disagreeing as f64 > MAX_DISAGREEMENT * total as f64 {
        return Err(Error::NonWatertight { disagreeing, total });
    }
    let data: Vec<f32> = dist
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let d = d as f32;
            if d == 0.0 {
                0.0
            } else if votes.inside(i) {
                -d
            } else {
                d
            }
        })
        .collect();
    VoxelGrid::new(*geometry, ValueKind::Sdf, data)
}

/// Divide an SDF in mm by `d_max` into [-1, 1]; the header records the
/// inverse map.
pub fn normalize_sdf(sdf: &VoxelGrid, d_max: f64) -> Result<VoxelGrid> {
    let inv = (1.0 / d_max) as f32;
    Ok(sdf
        .map(|v| (v * inv).clamp(-1.0, 1.0))?
        .with_kind(ValueKind::Sdf)
        .with_normalization(Normalization {
            scale: d_max,
            offset: 0.0,
        }))
}
