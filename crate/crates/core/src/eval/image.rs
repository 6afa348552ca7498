//! Image-quality metrics.

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;

/// `10 log10(peak² / MSE)` in dB; `+∞` when the grids are identical.
pub fn psnr(a: &VoxelGrid, b: &VoxelGrid, peak: f64) -> Result<f64> {
    a.geometry().ensure_same(b.geometry())?;
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "peak must be positive, got {peak}"
        )));
    }
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

pub const SSIM_WINDOW: usize = 7;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Summed-volume table with a zero border: `s[i+1][j+1][k+1] = Σ v[..=i][..=j][..=k]`.
struct Integral {
    dims: [usize; 3],
    s: Vec<f64>,
}

impl Integral {
    fn new(dims: [usize; 3], v: impl Fn(usize) -> f64) -> Self {
        let [nx, ny, nz] = dims.map(|d| d + 1);
        let mut s = vec![0.0; nx * ny * nz];
        let at = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
        for k in 1..nz {
            for j in 1..ny {
                for i in 1..nx {
                    let src = (i - 1) + dims[0] * ((j - 1) + dims[1] * (k - 1));
                    s[at(i, j, k)] =
                        v(src) + s[at(i - 1, j, k)] + s[at(i, j - 1, k)] + s[at(i, j, k - 1)]
                            - s[at(i - 1, j - 1, k)]
                            - s[at(i - 1, j, k - 1)]
                            - s[at(i, j - 1, k - 1)]
                            + s[at(i - 1, j - 1, k - 1)];
                }
            }
        }
        Integral { dims, s }
    }

    /// Sum over the `w`³ box starting at `p`.
    fn box_sum(&self, p: [usize; 3], w: usize) -> f64 {
        let [nx, ny, _] = self.dims.map(|d| d + 1);
        let at = |i: usize, j: usize, k: usize| self.s[i + nx * (j + ny * k)];
        let [i0, j0, k0] = p;
        let [i1, j1, k1] = [i0 + w, j0 + w, k0 + w];
        at(i1, j1, k1) - at(i0, j1, k1) - at(i1, j0, k1) - at(i1, j1, k0)
            + at(i0, j0, k1)
            + at(i0, j1, k0)
            + at(i1, j0, k0)
            - at(i0, j0, k0)
    }
}

/// Mean local SSIM over every fully contained 7³ uniform window.
pub fn ssim3d(a: &VoxelGrid, b: &VoxelGrid, dynamic_range: f64) -> Result<f64> {
    a.geometry().ensure_same(b.geometry())?;
    let dims = a.dims();
    if dims.iter().any(|&d| d < SSIM_WINDOW) {
        return Err(Error::InvalidArgument(format!(
            "grid {dims:?} smaller than the {SSIM_WINDOW}^3 SSIM window"
        )));
    }
    if !(dynamic_range > 0.0) {
        return Err(Error::InvalidArgument(
            "dynamic range must be positive".into(),
        ));
    }
    let (x, y) = (a.data(), b.data());
    let sa = Integral::new(dims, |i| x[i] as f64);
    let sb = Integral::new(dims, |i| y[i] as f64);
    let saa = Integral::new(dims, |i| (x[i] as f64).powi(2));
    let sbb = Integral::new(dims, |i| (y[i] as f64).powi(2));
    let sab = Integral::new(dims, |i| x[i] as f64 * y[i] as f64);
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let w = SSIM_WINDOW;
    let n = (w * w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for k in 0..=dims[2] - w {
        for j in 0..=dims[1] - w {
            for i in 0..=dims[0] - w {
                let p = [i, j, k];
                let ma = sa.box_sum(p, w) / n;
                let mb = sb.box_sum(p, w) / n;
                let va = (saa.box_sum(p, w) / n - ma * ma).max(0.0);
                let vb = (sbb.box_sum(p, w) / n - mb * mb).max(0.0);
                let cov = sab.box_sum(p, w) / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                    / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}
