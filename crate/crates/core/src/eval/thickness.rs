//! Bidirectional nearest-surface cortical thickness.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{SpatialIndex, TriangleMesh};

#[derive(Debug, Clone, PartialEq)]
pub struct Thickness {
    /// Mean of the two directional means.
    pub mean: f64,
    pub pial_to_white: f64,
    pub white_to_pial: f64,
    /// Per pial vertex: `d(v, M_w)` averaged with `d(q, M_p)` for the
    /// closest white point `q`.
    pub per_vertex: Vec<f64>,
}

pub fn cortical_thickness(mesh_w: &TriangleMesh, mesh_p: &TriangleMesh) -> Result<Thickness> {
    if mesh_w.is_empty() || mesh_p.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let iw = SpatialIndex::build(mesh_w);
    let ip = SpatialIndex::build(mesh_p);
    let per_vertex: Vec<f64> = mesh_p
        .vertices()
        .par_iter()
        .map(|&v| {
            let n = iw.nearest(v).expect("non-empty");
            0.5 * (n.distance + ip.distance(n.point).expect("non-empty"))
        })
        .collect();
    let p2w: Vec<f64> = mesh_p
        .vertices()
        .par_iter()
        .map(|&v| iw.distance(v).unwrap())
        .collect();
    let w2p: Vec<f64> = mesh_w
        .vertices()
        .par_iter()
        .map(|&v| ip.distance(v).unwrap())
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&p2w), mean(&w2p));
    Ok(Thickness {
        mean: 0.5 * (a + b),
        pial_to_white: a,
        white_to_pial: b,
        per_vertex,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    #[test]
    fn concentric_spheres() {
        let t = cortical_thickness(&icosphere(9.0, 4), &icosphere(10.0, 4)).unwrap();
        assert!((t.mean - 1.0).abs() < 0.02, "{}", t.mean);
        assert!(t.per_vertex.iter().all(|&d| (d - 1.0).abs() < 0.05));
    }

    #[test]
    fn coincident_is_zero() {
        let s = icosphere(5.0, 3);
        assert!(cortical_thickness(&s, &s).unwrap().mean.abs() < 1e-12);
        let empty = TriangleMesh::new(vec![], vec![]).unwrap();
        assert!(matches!(
            cortical_thickness(&empty, &s),
            Err(Error::EmptyMesh)
        ));
    }

    #[test]
    fn thinning_by_offset() {
        let w = icosphere(9.0, 4);
        let p = icosphere(10.5, 4);
        let before = cortical_thickness(&w, &p).unwrap().mean;
        let thinned = p.offset_along_normals(-0.3, None, 0.1).unwrap();
        let after = cortical_thickness(&w, &thinned).unwrap().mean;
        assert!((before - after - 0.3).abs() < 0.05, "{before} {after}");
    }
}
