use super::{Geometry, VoxelGrid};
use crate::error::Result;

/// Snap continuous indices that are within rounding noise of a lattice point,
/// so identity resampling reproduces the source bit-for-bit.
#[inline]
fn snap(u: f64) -> f64 {
    let r = u.round();
    if (u - r).abs() < 1e-9 {
        r
    } else {
        u
    }
}

/// Lower lattice index and weight of the upper neighbour along one axis,
/// with clamp-to-edge outside the source extent.
#[inline]
fn axis_weights(u: f64, n: usize) -> (usize, usize, f64) {
    if n == 1 {
        return (0, 0, 0.0);
    }
    let u = snap(u).clamp(0.0, (n - 1) as f64);
    let i0 = (u.floor() as usize).min(n - 2);
    (i0, i0 + 1, u - i0 as f64)
}

/// Sample `grid` at the voxel centers of `target` by trilinear interpolation.
///
/// Points outside the source extent take the nearest edge value.
pub fn resample_trilinear(grid: &VoxelGrid, target: Geometry) -> Result<VoxelGrid> {
    target.validate()?;
    let src = grid.geometry();
    let data = grid.data();
    let [nx, ny, _] = src.dims;
    let mut out = Vec::with_capacity(target.len());
    for k in 0..target.dims[2] {
        for j in 0..target.dims[1] {
            for i in 0..target.dims[0] {
                let u = src.world_to_index(target.center_unchecked([i, j, k]));
                let (x0, x1, fx) = axis_weights(u.x, src.dims[0]);
                let (y0, y1, fy) = axis_weights(u.y, src.dims[1]);
                let (z0, z1, fz) = axis_weights(u.z, src.dims[2]);
                let v = |x: usize, y: usize, z: usize| data[x + nx * (y + ny * z)] as f64;
                let lerp =
                    |a: f64, b: f64, t: f64| if t == 0.0 { a } else { a * (1.0 - t) + b * t };
                let c00 = lerp(v(x0, y0, z0), v(x1, y0, z0), fx);
                let c10 = lerp(v(x0, y1, z0), v(x1, y1, z0), fx);
                let c01 = lerp(v(x0, y0, z1), v(x1, y0, z1), fx);
                let c11 = lerp(v(x0, y1, z1), v(x1, y1, z1), fx);
                let c0 = lerp(c00, c10, fy);
                let c1 = lerp(c01, c11, fy);
                out.push(lerp(c0, c1, fz) as f32);
            }
        }
    }
    Ok(VoxelGrid::new(target, grid.kind(), out)?.with_normalization(grid.normalization()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueKind;
    use proptest::prelude::*;

    #[test]
    fn constant_stays_constant() {
        let src = Geometry::new([4, 5, 6], [1.0, 2.0, 0.5], [0.0; 3]).unwrap();
        let g = VoxelGrid::filled(src, ValueKind::Intensity, 0.37).unwrap();
        let dst = Geometry::new([7, 3, 9], [0.3, 1.7, 0.2], [-2.0, 1.0, 0.4]).unwrap();
        let r = resample_trilinear(&g, dst).unwrap();
        assert!(r.data().iter().all(|&v| v == 0.37));
    }

    #[test]
    fn identity_is_bitwise() {
        let src = Geometry::new([5, 4, 3], [0.3, 0.7, 1.1], [-0.9, 0.2, 5.0]).unwrap();
        let g = VoxelGrid::new(
            src,
            ValueKind::Intensity,
            crate::rng::normal_vec(3, 0, src.len()),
        )
        .unwrap();
        let r = resample_trilinear(&g, src).unwrap();
        assert_eq!(r, g);
    }

    #[test]
    fn ramp_at_half_spacing_is_exact() {
        let src = Geometry::new([9, 3, 3], [1.0; 3], [0.0; 3]).unwrap();
        let g = VoxelGrid::from_fn(src, ValueKind::Intensity, |p, _| p.x as f32).unwrap();
        let dst = Geometry::new([17, 3, 3], [0.5, 1.0, 1.0], [0.0; 3]).unwrap();
        let r = resample_trilinear(&g, dst).unwrap();
        for (idx, v) in r.data().iter().enumerate() {
            let x = dst.center_unchecked(dst.unravel(idx)).x;
            assert_eq!(*v as f64, x);
        }
    }

    #[test]
    fn clamps_outside_extent() {
        let src = Geometry::new([3, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let g = VoxelGrid::new(src, ValueKind::Intensity, vec![1.0, 2.0, 3.0]).unwrap();
        let dst = Geometry::new([2, 1, 1], [10.0; 3], [-5.0, 0.0, 0.0]).unwrap();
        let r = resample_trilinear(&g, dst).unwrap();
        assert_eq!(r.data(), &[1.0, 3.0]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        /// Trilinear interpolation reproduces affine fields at interior points.
        #[test]
        fn affine_fields_reproduced(
            a in prop::array::uniform3(-2.0f64..2.0),
            c in -5.0f64..5.0,
            scale in 0.3f64..0.9,
            shift in prop::array::uniform3(0.0f64..1.0),
        ) {
            let src = Geometry::new([8, 8, 8], [1.0, 1.5, 0.8], [0.0; 3]).unwrap();
            let f = |p: glam::DVec3| a[0] * p.x + a[1] * p.y + a[2] * p.z + c;
            let g = VoxelGrid::from_fn(src, ValueKind::Intensity, |p, _| f(p) as f32).unwrap();
            let dst = Geometry::new(
                [6, 6, 6],
                [scale, scale * 1.5, scale * 0.8],
                [1.0 + shift[0], 1.5 + shift[1], 0.8 + shift[2]],
            ).unwrap();
            let r = resample_trilinear(&g, dst).unwrap();
            for (idx, v) in r.data().iter().enumerate() {
                let p = dst.center_unchecked(dst.unravel(idx));
                // interpolating f32-rounded lattice values: tolerance 1e-6 relative
                // to the field's magnitude on the lattice
                let expected = f(p);
                let bound = 1e-6 * (1.0 + expected.abs() + 20.0);
                prop_assert!((*v as f64 - expected).abs() <= bound, "{} vs {}", v, expected);
            }
        }
    }
}
