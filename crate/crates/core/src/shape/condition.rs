use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{load_grid, save_grid, Geometry, VoxelGrid};
use crate::mesh::TriangleMesh;

use super::{edge_map, fuse_cortex_sdf, mesh_to_sdf, ribbon_mask};

pub const CONDITION_MANIFEST: &str = "conditions.manifest";
const MANIFEST_HEADER: &str = "condition-set 1";

/// The shape conditions `(S_p, S_w, E, R)` on one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSet {
    pub s_p: VoxelGrid,
    pub s_w: VoxelGrid,
    pub edge: VoxelGrid,
    pub ribbon: VoxelGrid,
}

impl ConditionSet {
    pub fn new(s_p: VoxelGrid, s_w: VoxelGrid, edge: VoxelGrid, ribbon: VoxelGrid) -> Result<Self> {
        let g = s_p.geometry();
        for other in [&s_w, &edge, &ribbon] {
            g.ensure_same(other.geometry())?;
        }
        for (name, m) in [("edge", &edge), ("ribbon", &ribbon)] {
            if m.data().iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::InvalidArgument(format!("{name} mask is not binary")));
            }
        }
        Ok(ConditionSet {
            s_p,
            s_w,
            edge,
            ribbon,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        self.s_p.geometry()
    }

    /// Members in channel order.
    pub fn channels(&self) -> [&VoxelGrid; 4] {
        [&self.s_p, &self.s_w, &self.edge, &self.ribbon]
    }
}

/// Fused cortex field and the condition tuple for a pial/white mesh pair.
/// SDFs are in mm.
pub fn build_condition_set(
    mesh_p: &TriangleMesh,
    mesh_w: &TriangleMesh,
    geometry: &Geometry,
    d_max: f64,
) -> Result<(VoxelGrid, ConditionSet)> {
    let s_p = mesh_to_sdf(mesh_p, geometry, d_max)?;
    let s_w = mesh_to_sdf(mesh_w, geometry, d_max)?;
    let s_c = fuse_cortex_sdf(&s_p, &s_w)?;
    let ribbon = ribbon_mask(&s_p, &s_w)?;
    let edge = edge_map(mesh_p, mesh_w, geometry)?;
    Ok((s_c, ConditionSet::new(s_p, s_w, edge, ribbon)?))
}

const MEMBERS: [&str; 5] = ["s_c", "s_p", "s_w", "edge", "ribbon"];

/// Write the five grids and a manifest into `dir`; returns the manifest path.
pub fn save_condition_set(dir: &Path, s_c: &VoxelGrid, set: &ConditionSet) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    s_c.geometry().ensure_same(set.geometry())?;
    let g = set.geometry();
    let mut text = String::new();
    writeln!(text, "{MANIFEST_HEADER}").unwrap();
    writeln!(text, "dims {} {} {}", g.dims[0], g.dims[1], g.dims[2]).unwrap();
    writeln!(
        text,
        "spacing {:?} {:?} {:?}",
        g.spacing[0], g.spacing[1], g.spacing[2]
    )
    .unwrap();
    writeln!(
        text,
        "origin {:?} {:?} {:?}",
        g.origin[0], g.origin[1], g.origin[2]
    )
    .unwrap();
    let grids = [s_c, &set.s_p, &set.s_w, &set.edge, &set.ribbon];
    for (name, grid) in MEMBERS.iter().zip(grids) {
        let file = format!("{name}.cvg");
        save_grid(grid, dir.join(&file))?;
        writeln!(text, "{name} {file}").unwrap();
    }
    let manifest = dir.join(CONDITION_MANIFEST);
    std::fs::write(&manifest, text).map_err(|e| Error::io(&manifest, e))?;
    Ok(manifest)
}

/// Read a manifest written by [`save_condition_set`]. Member paths are
/// relative to the manifest's directory.
pub fn load_condition_set(manifest: &Path) -> Result<(VoxelGrid, ConditionSet)> {
    let text = std::fs::read_to_string(manifest).map_err(|e| Error::io(manifest, e))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    if lines.next() != Some(MANIFEST_HEADER) {
        return Err(Error::format("condition manifest", "missing header line"));
    }
    let mut paths = std::collections::HashMap::new();
    for line in lines {
        let mut parts = line.splitn(2, ' ');
        let (Some(key), Some(value)) = (parts.next(), parts.next()) else {
            continue;
        };
        paths.insert(key.to_string(), value.trim().to_string());
    }
    let mut grids = Vec::with_capacity(5);
    for name in MEMBERS {
        let rel = paths
            .get(name)
            .ok_or_else(|| Error::format("condition manifest", format!("missing entry {name}")))?;
        grids.push(load_grid(dir.join(rel))?);
    }
    let mut it = grids.into_iter();
    let s_c = it.next().unwrap();
    let set = ConditionSet::new(
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
        it.next().unwrap(),
    )?;
    s_c.geometry().ensure_same(set.geometry())?;
    Ok((s_c, set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;

    #[test]
    fn concentric_spheres() {
        let g = Geometry::centered_cube(24, 1.0).unwrap();
        let (s_c, set) =
            build_condition_set(&icosphere(10.0, 4), &icosphere(8.0, 4), &g, 4.0).unwrap();
        assert_eq!(s_c.geometry(), &g);
        let mut shell_mismatch = 0;
        for i in 0..g.len() {
            let r = g.center_unchecked(g.unravel(i)).length();
            if set.ribbon.data()[i] == 1.0 {
                assert_eq!(s_c.data()[i], 0.0);
            }
            // the analytic shell, away from the faceting band
            let analytic = (8.0..10.0).contains(&r);
            let near = (r - 8.0).abs() < 0.05 || (r - 10.0).abs() < 0.05;
            if !near && analytic != (set.ribbon.data()[i] == 1.0) {
                shell_mismatch += 1;
            }
        }
        assert_eq!(shell_mismatch, 0);
        assert!(set.edge.data().iter().any(|&v| v == 1.0));
    }

    #[test]
    fn coincident_surfaces() {
        let g = Geometry::centered_cube(16, 1.0).unwrap();
        let m = icosphere(5.0, 3);
        let (s_c, set) = build_condition_set(&m, &m, &g, 3.0).unwrap();
        assert!(set.ribbon.data().iter().all(|&v| v == 0.0));
        for (a, b) in s_c.data().iter().zip(set.s_p.data()) {
            if *b != 0.0 {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Geometry::centered_cube(8, 1.5).unwrap();
        let (s_c, set) =
            build_condition_set(&icosphere(4.5, 2), &icosphere(3.0, 2), &g, 3.0).unwrap();
        let manifest = save_condition_set(dir.path(), &s_c, &set).unwrap();
        let text = std::fs::read_to_string(&manifest).unwrap();
        assert_eq!(text.lines().filter(|l| l.ends_with(".cvg")).count(), 5);
        let (s_c2, set2) = load_condition_set(&manifest).unwrap();
        assert_eq!(s_c, s_c2);
        assert_eq!(set, set2);
    }
}
