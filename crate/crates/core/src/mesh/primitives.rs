//! Closed and open test surfaces.

use std::collections::HashMap;

use glam::DVec3;

use super::TriangleMesh;

/// Unit icosphere directions and outward-wound faces after `subdivisions`
/// rounds of midpoint subdivision (20·4^s faces).
pub fn unit_icosphere(subdivisions: u32) -> (Vec<DVec3>, Vec<[u32; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<DVec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| DVec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, verts: &mut Vec<DVec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                (verts.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    (verts, faces)
}

/// Icosphere centered at the origin.
pub fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    radial_surface(subdivisions, DVec3::ZERO, |_| radius)
}

/// Star-shaped closed surface `center + r(u) u` over icosphere directions `u`.
pub fn radial_surface(
    subdivisions: u32,
    center: DVec3,
    radius: impl Fn(DVec3) -> f64,
) -> TriangleMesh {
    let (dirs, faces) = unit_icosphere(subdivisions);
    let verts = dirs.iter().map(|&u| center + u * radius(u)).collect();
    TriangleMesh::new(verts, faces).expect("star-shaped surface over an icosphere is valid")
}

/// Axis-aligned box with outward winding (12 triangles).
pub fn cuboid(lo: DVec3, hi: DVec3) -> TriangleMesh {
    let v: Vec<DVec3> = (0..8)
        .map(|i| {
            DVec3::new(
                if i & 1 == 0 { lo.x } else { hi.x },
                if i & 2 == 0 { lo.y } else { hi.y },
                if i & 4 == 0 { lo.z } else { hi.z },
            )
        })
        .collect();
    let f = vec![
        [0, 2, 1],
        [1, 2, 3], // z = lo
        [4, 5, 6],
        [5, 7, 6], // z = hi
        [0, 1, 4],
        [1, 5, 4], // y = lo
        [2, 6, 3],
        [3, 6, 7], // y = hi
        [0, 4, 2],
        [2, 4, 6], // x = lo
        [1, 3, 5],
        [3, 7, 5], // x = hi
    ];
    TriangleMesh::new(v, f).expect("box is valid")
}

/// Open square patch of `n`×`n` quads in the plane z = 0, normal +z.
pub fn grid_patch(n: usize, spacing: f64) -> TriangleMesh {
    plane_patch(n, spacing, DVec3::ZERO)
}

/// Open square patch centered on `center`, parallel to z = const.
pub fn plane_patch(n: usize, spacing: f64, center: DVec3) -> TriangleMesh {
    let half = n as f64 * spacing * 0.5;
    let mut v = Vec::new();
    for j in 0..=n {
        for i in 0..=n {
            v.push(center + DVec3::new(i as f64 * spacing - half, j as f64 * spacing - half, 0.0));
        }
    }
    let row = (n + 1) as u32;
    let mut f = Vec::new();
    for j in 0..n as u32 {
        for i in 0..n as u32 {
            let a = j * row + i;
            f.push([a, a + 1, a + row + 1]);
            f.push([a, a + row + 1, a + row]);
        }
    }
    TriangleMesh::new(v, f).expect("patch is valid")
}
