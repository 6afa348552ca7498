//! Voxel shape representations of a nested surface pair: per-surface signed
//! distance fields, the fused cortex field, the ribbon mask and the edge map.

mod condition;
mod edge;
mod sdf;

pub use condition::{
    build_condition_set, load_condition_set, save_condition_set, ConditionSet, CONDITION_MANIFEST,
};
pub use edge::{edge_map, triangle_box_overlap};
pub use sdf::{containment_votes, mesh_to_sdf, normalize_sdf, SignVotes};

use crate::error::Result;
use crate::grid::{ValueKind, VoxelGrid};

/// Scalar fusion rule for one voxel: the lower value outside both surfaces,
/// the higher value inside both, zero where the signs differ or either is 0.
#[inline]
pub fn fuse_value(sp: f32, sw: f32) -> f32 {
    if sp > 0.0 && sw > 0.0 {
        sp.min(sw)
    } else if sp < 0.0 && sw < 0.0 {
        sp.max(sw)
    } else {
        0.0
    }
}

/// Fused cortex field `S_c` from the pial and white fields.
pub fn fuse_cortex_sdf(s_p: &VoxelGrid, s_w: &VoxelGrid) -> Result<VoxelGrid> {
    Ok(s_p.zip_map(s_w, fuse_value)?.with_kind(ValueKind::Sdf))
}

/// 1 inside the pial surface and outside the white surface.
pub fn ribbon_mask(s_p: &VoxelGrid, s_w: &VoxelGrid) -> Result<VoxelGrid> {
    let m = s_p.zip_map(s_w, |p, w| if p < 0.0 && w > 0.0 { 1.0 } else { 0.0 })?;
    Ok(m.with_kind(ValueKind::BinaryMask)
        .with_normalization(Default::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Geometry;
    use proptest::prelude::*;

    fn reference(sp: f32, sw: f32) -> f32 {
        // written from the three cases independently of fuse_value
        let outside = sp > 0.0 && sw > 0.0;
        let inside = sp < 0.0 && sw < 0.0;
        if outside {
            if sp <= sw {
                sp
            } else {
                sw
            }
        } else if inside {
            if sp >= sw {
                sp
            } else {
                sw
            }
        } else {
            0.0
        }
    }

    #[test]
    fn fusion_cases() {
        assert_eq!(fuse_value(2.0, 3.5), 2.0);
        assert_eq!(fuse_value(-3.0, -1.0), -1.0);
        assert_eq!(fuse_value(-0.5, 0.7), 0.0);
        assert_eq!(fuse_value(0.0, 0.7), 0.0);
        assert_eq!(fuse_value(-1.0, 0.0), 0.0);
    }

    #[test]
    fn ribbon_at_opposite_signs() {
        let g = Geometry::new([1, 1, 1], [1.0; 3], [0.0; 3]).unwrap();
        let sp = VoxelGrid::filled(g, ValueKind::Sdf, -0.5).unwrap();
        let sw = VoxelGrid::filled(g, ValueKind::Sdf, 0.7).unwrap();
        assert_eq!(ribbon_mask(&sp, &sw).unwrap().data(), &[1.0]);
        assert_eq!(ribbon_mask(&sp, &sp).unwrap().data(), &[0.0]);
    }

    #[test]
    fn geometry_mismatch_rejected() {
        let a = VoxelGrid::zeros(Geometry::centered_cube(4, 1.0).unwrap(), ValueKind::Sdf).unwrap();
        let b = VoxelGrid::zeros(Geometry::centered_cube(4, 2.0).unwrap(), ValueKind::Sdf).unwrap();
        assert!(fuse_cortex_sdf(&a, &b).is_err());
        assert!(ribbon_mask(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn fusion_matches_reference(pairs in prop::collection::vec((-4.0f32..4.0, -4.0f32..4.0), 64)) {
            let g = Geometry::new([4, 4, 4], [1.0; 3], [0.0; 3]).unwrap();
            let sp = VoxelGrid::new(g, ValueKind::Sdf, pairs.iter().map(|p| p.0).collect()).unwrap();
            let sw = VoxelGrid::new(g, ValueKind::Sdf, pairs.iter().map(|p| p.1).collect()).unwrap();
            let sc = fuse_cortex_sdf(&sp, &sw).unwrap();
            let r = ribbon_mask(&sp, &sw).unwrap();
            for (i, &(a, b)) in pairs.iter().enumerate() {
                prop_assert_eq!(sc.data()[i].to_bits(), reference(a, b).to_bits());
                if r.data()[i] == 1.0 {
                    prop_assert_eq!(sc.data()[i], 0.0);
                }
            }
        }
    }
}
