//! Voxel-wise spread of repeated samples.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// A 2D image, row-major with `width` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Image2d {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone)]
pub struct VariabilityMaps {
    /// Unbiased per-voxel variance across samples.
    pub variance: VoxelGrid,
    /// Per-voxel mean of `|sample - reference|`.
    pub mean_abs_diff: VoxelGrid,
}

pub fn variability_maps(samples: &[VoxelGrid], reference: &VoxelGrid) -> Result<VariabilityMaps> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need >= 2 samples, got {}",
            samples.len()
        )));
    }
    for s in samples {
        s.geometry().ensure_same(reference.geometry())?;
    }
    let n = samples.len() as f64;
    let mut var = Vec::with_capacity(reference.len());
    let mut mad = Vec::with_capacity(reference.len());
    for i in 0..reference.len() {
        let vals = samples.iter().map(|s| s.data()[i] as f64);
        let mean = vals.clone().sum::<f64>() / n;
        var.push((vals.clone().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)) as f32);
        let r = reference.data()[i] as f64;
        mad.push((vals.map(|v| (v - r).abs()).sum::<f64>() / n) as f32);
    }
    Ok(VariabilityMaps {
        variance: reference.replace_data(var)?,
        mean_abs_diff: reference.replace_data(mad)?,
    })
}

/// Mean of `values` over voxels where `mask` is set.
pub fn masked_mean(values: &VoxelGrid, mask: &VoxelGrid) -> Result<f64> {
    values.geometry().ensure_same(mask.geometry())?;
    let (sum, n) = values
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m != 0.0)
        .fold((0.0, 0usize), |(s, n), (&v, _)| (s + v as f64, n + 1));
    if n == 0 {
        return Err(Error::InvalidArgument("empty mask".into()));
    }
    Ok(sum / n as f64)
}

/// Average along `axis`; the remaining axes keep their order.
pub fn axis_projection(grid: &VoxelGrid, axis: usize) -> Result<Image2d> {
    if axis > 2 {
        return Err(Error::InvalidArgument(format!("axis {axis} out of range")));
    }
    let g = grid.geometry();
    let dims = g.dims;
    let (u, v) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut data = vec![0.0f64; dims[u] * dims[v]];
    for (i, &val) in grid.data().iter().enumerate() {
        let p = g.unravel(i);
        data[p[u] + dims[u] * p[v]] += val as f64;
    }
    Ok(Image2d {
        width: dims[u],
        height: dims[v],
        data: data
            .into_iter()
            .map(|s| (s / dims[axis] as f64) as f32)
            .collect(),
    })
}

/// Binary 8-bit PGM, linearly scaled so the maximum maps to 255.
pub fn write_pgm(image: &Image2d, path: &Path) -> Result<()> {
    let max = image.data.iter().cloned().fold(0.0f32, f32::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    let mut bytes = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    // PGM rows run top to bottom
    for row in (0..image.height).rev() {
        for col in 0..image.width {
            let v = image.data[col + image.width * row].max(0.0) * scale;
            bytes.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}
