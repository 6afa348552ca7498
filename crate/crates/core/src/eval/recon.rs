//! Threshold-based surface reconstruction from intensity volumes.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::mesh::TriangleMesh;

use super::isosurface;

/// Pre-smoothing width, in voxels.
pub const SMOOTHING_SIGMA: f64 = 0.5;

/// Separable Gaussian blur with `sigma` in voxels and replicated borders.
pub fn gaussian_smooth(grid: &VoxelGrid, sigma: f64) -> Result<VoxelGrid> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(grid.clone());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);

    let g = *grid.geometry();
    let dims = g.dims;
    let mut cur: Vec<f64> = grid.data().iter().map(|&v| v as f64).collect();
    for axis in 0..3 {
        let n = dims[axis] as isize;
        let mut next = vec![0.0; cur.len()];
        for (idx, out) in next.iter_mut().enumerate() {
            let mut p = g.unravel(idx);
            let c = p[axis] as isize;
            let mut acc = 0.0;
            for (w, d) in kernel.iter().zip(-radius..=radius) {
                p[axis] = (c + d).clamp(0, n - 1) as usize;
                acc += w * cur[g.linear_index(p)];
            }
            *out = acc;
        }
        cur = next;
    }
    grid.replace_data(cur.into_iter().map(|v| v as f32).collect())
}

/// 6-connected component labels of `mask`; 0 marks background.
pub fn connected_components(
    grid: &VoxelGrid,
    mask: impl Fn(f32) -> bool,
) -> (Vec<u32>, Vec<usize>) {
    let g = grid.geometry();
    let dims = g.dims;
    let mut labels = vec![0u32; grid.len()];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if labels[start] != 0 || !mask(grid.data()[start]) {
            continue;
        }
        let label = sizes.len() as u32;
        sizes.push(0);
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            sizes[label as usize] += 1;
            let p = g.unravel(i);
            for axis in 0..3 {
                for step in [-1isize, 1] {
                    let q = p[axis] as isize + step;
                    if q < 0 || q >= dims[axis] as isize {
                        continue;
                    }
                    let mut np = p;
                    np[axis] = q as usize;
                    let j = g.linear_index(np);
                    if labels[j] == 0 && mask(grid.data()[j]) {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    (labels, sizes)
}

fn neighbours6(g: &crate::grid::Geometry, i: usize) -> impl Iterator<Item = usize> + '_ {
    let p = g.unravel(i);
    (0..3).flat_map(move |axis| {
        [-1isize, 1].into_iter().filter_map(move |step| {
            let q = p[axis] as isize + step;
            (q >= 0 && q < g.dims[axis] as isize).then(|| {
                let mut np = p;
                np[axis] = q as usize;
                g.linear_index(np)
            })
        })
    })
}

/// Label of the component holding the central voxel, else of the largest.
fn pick_label(g: &crate::grid::Geometry, labels: &[u32], sizes: &[usize]) -> u32 {
    let center = g.linear_index(g.dims.map(|d| d / 2));
    if labels[center] != 0 {
        labels[center]
    } else {
        (1..sizes.len())
            .max_by_key(|&l| (sizes[l], std::cmp::Reverse(l)))
            .unwrap() as u32
    }
}

/// Voxels of `member` with all six neighbours inside the grid and in `member`.
fn erode(g: &crate::grid::Geometry, member: &[bool]) -> Vec<bool> {
    (0..member.len())
        .map(|i| {
            member[i] && neighbours6(g, i).count() == 6 && neighbours6(g, i).all(|j| member[j])
        })
        .collect()
}

/// The component to keep, with thin bridges to other structures cut.
///
/// The component is opened (one-voxel erosion, central core, one-voxel
/// dilation). Of the voxels the opening removes, pieces that stay within one
/// voxel of the opened core are surface detail and are kept; pieces reaching
/// further belong to something else that touched the component through a
/// thin bridge, and are dropped with that bridge.
fn select_component(smoothed: &VoxelGrid, level: f64) -> Option<Vec<bool>> {
    let g = smoothed.geometry();
    let (labels, sizes) = connected_components(smoothed, |v| v as f64 > level);
    if sizes.len() == 1 {
        return None;
    }
    let keep = pick_label(g, &labels, &sizes);
    let member: Vec<bool> = labels.iter().map(|&l| l == keep).collect();

    let eroded = erode(g, &member);
    let as_grid = |mask: &[bool]| {
        smoothed
            .replace_data(mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect())
            .expect("same length")
    };
    let (core_labels, core_sizes) = connected_components(&as_grid(&eroded), |v| v > 0.5);
    if core_sizes.len() == 1 {
        return Some(member);
    }
    let core_label = pick_label(g, &core_labels, &core_sizes);
    let opened: Vec<bool> = (0..member.len())
        .map(|i| {
            member[i]
                && (core_labels[i] == core_label
                    || neighbours6(g, i).any(|j| core_labels[j] == core_label))
        })
        .collect();
    let removed: Vec<bool> = member.iter().zip(&opened).map(|(&m, &o)| m && !o).collect();
    if !removed.iter().any(|&r| r) {
        return Some(member);
    }
    let dims = g.dims.map(|d| d as isize);
    let near_opened = |i: usize| {
        let p = g.unravel(i).map(|c| c as isize);
        (-1..=1).any(|dz| {
            (-1..=1).any(|dy| {
                (-1..=1).any(|dx| {
                    let q = [p[0] + dx, p[1] + dy, p[2] + dz];
                    (0..3).all(|a| q[a] >= 0 && q[a] < dims[a])
                        && opened[g.linear_index(q.map(|c| c as usize))]
                })
            })
        })
    };
    let (piece_labels, piece_sizes) = connected_components(&as_grid(&removed), |v| v > 0.5);
    let mut far = vec![false; piece_sizes.len()];
    for (i, &l) in piece_labels.iter().enumerate() {
        if l != 0 && !far[l as usize] && !near_opened(i) {
            far[l as usize] = true;
        }
    }
    Some(
        (0..member.len())
            .map(|i| opened[i] || (removed[i] && !far[piece_labels[i] as usize]))
            .collect(),
    )
}

/// Boundary of the above-`level` component holding the central voxel (the
/// largest one if the center is below `level`), oriented outward. Structures
/// attached to it through one-voxel bridges are cut off.
pub fn component_surface(smoothed: &VoxelGrid, level: f64) -> Result<TriangleMesh> {
    let Some(keep) = select_component(smoothed, level) else {
        log::warn!("no voxel above level {level}");
        return TriangleMesh::new(Vec::new(), Vec::new());
    };
    // Everything else above the level is pushed just below it; below-level
    // voxels keep their values so edge interpolation is unchanged. Negation
    // makes the bright inside the low side.
    let below = (level - 1e-4 * (1.0 + level.abs())) as f32;
    let field: Vec<f32> = smoothed
        .data()
        .iter()
        .zip(&keep)
        .map(|(&v, &k)| if k || v as f64 <= level { -v } else { -below })
        .collect();
    isosurface(&smoothed.replace_data(field)?, -level)
}

/// White and pial surfaces of an intensity image on the [0, 1] scale.
pub fn reconstruct_surfaces(
    image: &VoxelGrid,
    thresholds: (f64, f64),
) -> Result<(TriangleMesh, TriangleMesh)> {
    let (t_wg, t_gc) = thresholds;
    if !(t_wg > t_gc) {
        return Err(Error::InvalidArgument(format!(
            "white/gray threshold {t_wg} must exceed gray/csf threshold {t_gc}"
        )));
    }
    let smoothed = gaussian_smooth(image, SMOOTHING_SIGMA)?;
    Ok((
        component_surface(&smoothed, t_wg)?,
        component_surface(&smoothed, t_gc)?,
    ))
}
