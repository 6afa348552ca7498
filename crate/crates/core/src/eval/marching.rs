//! Marching cubes over voxel centers with linear edge interpolation.

use std::collections::HashMap;

use glam::DVec3;

use super::tables::{EDGE_TABLE, TRIANGLE_TABLE};
use crate::error::Result;
use crate::grid::VoxelGrid;
use crate::mesh::{TriangleMesh, DEGENERATE_AREA};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Triangulate `{grid = level}`. Normals point toward values above `level`.
///
/// Vertices are shared between neighbouring cubes, so a level set that does
/// not touch the grid border yields a closed mesh. A level outside the value
/// range gives an empty mesh and a warning.
pub fn isosurface(grid: &VoxelGrid, level: f64) -> Result<TriangleMesh> {
    let (lo, hi) = grid.min_max();
    if !(level >= lo as f64 && level <= hi as f64) {
        log::warn!("isosurface level {level} outside value range [{lo}, {hi}]");
        return TriangleMesh::new(Vec::new(), Vec::new());
    }
    let g = *grid.geometry();
    let [nx, ny, nz] = g.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return TriangleMesh::new(Vec::new(), Vec::new());
    }
    let data = grid.data();
    let value = |p: [usize; 3]| data[g.linear_index(p)] as f64 - level;

    // Crossings this close to a lattice point are moved onto it, so nearly
    // coincident vertices merge and their slivers collapse.
    const SNAP: f64 = 1e-7;
    // Keys: 4 * lattice index + axis for edge crossings, + 3 for a crossing
    // that falls exactly on a lattice point.
    let mut index: HashMap<usize, u32> = HashMap::new();
    let mut vertices: Vec<DVec3> = Vec::new();
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut vertex_for = |a: [usize; 3], b: [usize; 3], va: f64, vb: f64| -> u32 {
        let t = va / (va - vb);
        let axis = (0..3).find(|&k| a[k] != b[k]).unwrap();
        let (lo_pt, key) = if t <= SNAP {
            (a, 4 * g.linear_index(a) + 3)
        } else if t >= 1.0 - SNAP {
            (b, 4 * g.linear_index(b) + 3)
        } else {
            let base = if a[axis] < b[axis] { a } else { b };
            (base, 4 * g.linear_index(base) + axis)
        };
        *index.entry(key).or_insert_with(|| {
            let p = if key % 4 == 3 {
                g.center_unchecked(lo_pt)
            } else {
                let pa = g.center_unchecked(a);
                pa + (g.center_unchecked(b) - pa) * t
            };
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| [i + CORNERS[c][0], j + CORNERS[c][1], k + CORNERS[c][2]];
                let vals: [f64; 8] = std::array::from_fn(|c| value(corner(c)));
                let mut case = 0usize;
                for (c, &v) in vals.iter().enumerate() {
                    if v < 0.0 {
                        case |= 1 << c;
                    }
                }
                if EDGE_TABLE[case] == 0 {
                    continue;
                }
                let mut ids = [u32::MAX; 12];
                for (e, &[a, b]) in EDGES.iter().enumerate() {
                    if EDGE_TABLE[case] & (1 << e) != 0 {
                        ids[e] = vertex_for(corner(a), corner(b), vals[a], vals[b]);
                    }
                }
                for tri in TRIANGLE_TABLE[case].chunks(3) {
                    if tri[0] < 0 {
                        break;
                    }
                    // The table winds triangles toward the low side.
                    let f = [
                        ids[tri[0] as usize],
                        ids[tri[2] as usize],
                        ids[tri[1] as usize],
                    ];
                    if f[0] != f[1] && f[1] != f[2] && f[0] != f[2] {
                        faces.push(f);
                    }
                }
            }
        }
    }
    faces.retain(|f| {
        let [a, b, c] = f.map(|i| vertices[i as usize]);
        crate::mesh::triangle_area(a, b, c) >= DEGENERATE_AREA
    });
    compact(vertices, faces)
}

/// Drop vertices not referenced by any face.
fn compact(vertices: Vec<DVec3>, faces: Vec<[u32; 3]>) -> Result<TriangleMesh> {
    let mut remap = vec![u32::MAX; vertices.len()];
    let mut kept = Vec::with_capacity(vertices.len());
    let faces = faces
        .into_iter()
        .map(|f| {
            f.map(|i| {
                let r = &mut remap[i as usize];
                if *r == u32::MAX {
                    *r = kept.len() as u32;
                    kept.push(vertices[i as usize]);
                }
                *r
            })
        })
        .collect();
    TriangleMesh::new(kept, faces)
}
