//! Recovery of synthetic cortical thinning through the generator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::mesh::{SpatialIndex, TriangleMesh};
use crate::phantom::{denormalize_intensity, normalize_conditions, PhantomPair};
use crate::shape::{build_condition_set, ConditionSet};

use super::{cortical_thickness, reconstruct_surfaces};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtrophyConfig {
    /// Inward pial displacements in mm. A zero control row is always added.
    pub offsets: Vec<f64>,
    /// Sampling seeds, shared by every offset.
    pub seeds: Vec<u64>,
    /// Independent seeds for the unmodified reference thickness.
    pub baseline_seeds: Vec<u64>,
    /// Smallest gap in mm kept between the moved pial and the white surface.
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophyRow {
    pub offset: f64,
    /// Ground-truth thickness loss measured on the deformed meshes.
    pub introduced: f64,
    /// Mean over seeds of the thickness loss measured on generated images.
    pub recovered: f64,
    pub recovered_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtrophyTable {
    pub baseline_thickness: f64,
    /// Three standard errors of a difference of means between unmodified
    /// runs.
    pub noise_floor: f64,
    pub rows: Vec<AtrophyRow>,
}

impl AtrophyTable {
    pub fn control(&self) -> Option<&AtrophyRow> {
        self.rows.iter().find(|r| r.offset == 0.0)
    }

    /// Rows with a positive offset, in increasing offset order.
    pub fn thinning_rows(&self) -> Vec<&AtrophyRow> {
        self.rows.iter().filter(|r| r.offset > 0.0).collect()
    }

    pub fn pearson(&self) -> Option<f64> {
        let rows = self.thinning_rows();
        let a: Vec<f64> = rows.iter().map(|r| r.introduced).collect();
        let b: Vec<f64> = rows.iter().map(|r| r.recovered).collect();
        pearson(&a, &b)
    }

    pub fn monotone(&self) -> bool {
        self.thinning_rows()
            .windows(2)
            .all(|w| w[1].recovered > w[0].recovered)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("offset,introduced,recovered,recovered_sd\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.offset, r.introduced, r.recovered, r.recovered_sd
            ));
        }
        s
    }
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Generator: `(S_c, C, seed) -> x_0`, all on the network's normalized scale.
pub type Generator<'a> = dyn Fn(&VoxelGrid, &ConditionSet, u64) -> Result<VoxelGrid> + Sync + 'a;

/// Move the pial surface inward by each offset, regenerate images from the
/// rebuilt conditions and measure the thickness change on reconstructions.
pub fn atrophy_experiment(
    generate: &Generator<'_>,
    phantom: &PhantomPair,
    config: &AtrophyConfig,
) -> Result<AtrophyTable> {
    if config.seeds.is_empty() || config.baseline_seeds.is_empty() {
        return Err(Error::InvalidArgument(
            "atrophy experiment needs sampling seeds".into(),
        ));
    }
    if config.offsets.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::InvalidArgument(
            "offsets must be non-negative".into(),
        ));
    }
    let spec = &phantom.spec;
    let geometry = spec.geometry()?;
    let white_index = SpatialIndex::build(&phantom.mesh_w);
    let true_base = cortical_thickness(&phantom.mesh_w, &phantom.mesh_p)?.mean;

    let measure = |s_c: &VoxelGrid, cond: &ConditionSet, seed: u64| -> Result<f64> {
        let x = generate(s_c, cond, seed)?;
        let (w, p) = reconstruct_surfaces(&denormalize_intensity(&x)?, spec.thresholds())?;
        Ok(cortical_thickness(&w, &p)?.mean)
    };
    let run = |mesh_p: &TriangleMesh, seeds: &[u64]| -> Result<Vec<f64>> {
        let (s_c, cond) = build_condition_set(mesh_p, &phantom.mesh_w, &geometry, spec.d_max())?;
        let (s_c, cond) = normalize_conditions(&s_c, &cond, spec.d_max())?;
        seeds.par_iter().map(|&s| measure(&s_c, &cond, s)).collect()
    };

    let baseline = run(&phantom.mesh_p, &config.baseline_seeds)?;
    let (base_mean, _) = mean_sd(&baseline);

    let mut offsets = config.offsets.clone();
    if !offsets.contains(&0.0) {
        offsets.push(0.0);
    }
    offsets.sort_by(f64::total_cmp);
    offsets.dedup();

    let mut rows = Vec::with_capacity(offsets.len());
    let mut control = Vec::new();
    for &b in &offsets {
        let moved = phantom
            .mesh_p
            .offset_along_normals(-b, Some(&white_index), config.min_gap)?;
        let introduced = true_base - cortical_thickness(&phantom.mesh_w, &moved)?.mean;
        let measured = run(&moved, &config.seeds)?;
        let losses: Vec<f64> = measured.iter().map(|t| base_mean - t).collect();
        let (recovered, recovered_sd) = mean_sd(&losses);
        log::info!("atrophy offset {b}: introduced {introduced:.4}, recovered {recovered:.4}");
        if b == 0.0 {
            control = measured;
        }
        rows.push(AtrophyRow {
            offset: b,
            introduced,
            recovered,
            recovered_sd,
        });
    }

    // pooled SD of the two unmodified runs
    let (n1, n2) = (baseline.len() as f64, control.len() as f64);
    let (_, s1) = mean_sd(&baseline);
    let (_, s2) = mean_sd(&control);
    let dof = (n1 + n2 - 2.0).max(1.0);
    let pooled = (((n1 - 1.0) * s1 * s1 + (n2 - 1.0) * s2 * s2) / dof).sqrt();
    Ok(AtrophyTable {
        baseline_thickness: base_mean,
        noise_floor: 3.0 * pooled * (1.0 / n1 + 1.0 / n2).sqrt(),
        rows,
    })
}
