use glam::DVec3;

use super::{triangle_area, DEGENERATE_AREA};
use crate::error::{Error, Result};

/// Closest point to `p` on the closed triangle `abc` (Voronoi-region walk).
pub fn closest_point_on_triangle(p: DVec3, a: DVec3, b: DVec3, c: DVec3) -> DVec3 {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(ap);
    let d2 = ac.dot(ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return a;
    }
    let bp = p - b;
    let d3 = ab.dot(bp);
    let d4 = ac.dot(bp);
    if d3 >= 0.0 && d4 <= d3 {
        return b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(cp);
    let d6 = ac.dot(cp);
    if d6 >= 0.0 && d5 <= d6 {
        return c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

/// Euclidean distance from `p` to the triangle and the closest point.
pub fn point_triangle_distance(p: DVec3, tri: [DVec3; 3]) -> Result<(f64, DVec3)> {
    let [a, b, c] = tri;
    let area = triangle_area(a, b, c);
    if !(area >= DEGENERATE_AREA) {
        return Err(Error::DegenerateTriangle { area });
    }
    let q = closest_point_on_triangle(p, a, b, c);
    Ok(((p - q).length(), q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TRI: [DVec3; 3] = [
        DVec3::new(0.0, 0.0, 0.0),
        DVec3::new(2.0, 0.0, 0.0),
        DVec3::new(0.5, 1.5, 0.0),
    ];

    /// Minimum over a dense barycentric lattice (~10⁴ samples).
    fn brute_force(p: DVec3, [a, b, c]: [DVec3; 3]) -> f64 {
        let n = 140;
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=(n - i) {
                let u = i as f64 / n as f64;
                let v = j as f64 / n as f64;
                let q = a + (b - a) * u + (c - a) * v;
                best = best.min((p - q).length());
            }
        }
        best
    }

    #[test]
    fn inside_on_plane_is_zero() {
        let (d, q) = point_triangle_distance(DVec3::new(0.7, 0.4, 0.0), TRI).unwrap();
        assert_eq!(d, 0.0);
        assert_eq!(q, DVec3::new(0.7, 0.4, 0.0));
    }

    #[test]
    fn orthogonal_offset() {
        let (d, _) = point_triangle_distance(DVec3::new(0.7, 0.4, 1.25), TRI).unwrap();
        assert!((d - 1.25).abs() < 1e-15);
    }

    #[test]
    fn beyond_edge_matches_segment_distance() {
        let p = DVec3::new(1.0, -0.8, 0.3);
        let (d, _) = point_triangle_distance(p, TRI).unwrap();
        // closest to edge a-b: the x axis
        assert!((d - (0.8f64 * 0.8 + 0.3 * 0.3).sqrt()).abs() < 1e-12);
        let oracle = brute_force(p, TRI);
        assert!(d <= oracle + 1e-12 && oracle - d < 2e-2);
    }

    #[test]
    fn degenerate_rejected() {
        let tri = [DVec3::ZERO, DVec3::X, DVec3::X * 3.0];
        assert!(point_triangle_distance(DVec3::Y, tri).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn never_above_brute_force(p in prop::array::uniform3(-3.0f64..3.0)) {
            let p = DVec3::from_array(p);
            let (d, q) = point_triangle_distance(p, TRI).unwrap();
            let oracle = brute_force(p, TRI);
            // lattice spacing bounds how far the oracle can overshoot
            prop_assert!(d <= oracle + 1e-12);
            prop_assert!(oracle - d < 2e-2);
            prop_assert!(((p - q).length() - d).abs() < 1e-12);
        }
    }
}
