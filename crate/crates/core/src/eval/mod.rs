//! Surface and image metrics, reconstruction, and the experiments built on
//! them.

mod atrophy;
mod image;
mod marching;
mod recon;
mod tables;
mod thickness;
mod variability;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{SpatialIndex, SurfaceSampler, TriangleMesh};
use crate::rng;

pub use atrophy::{atrophy_experiment, pearson, AtrophyConfig, AtrophyRow, AtrophyTable};
pub use image::{psnr, ssim3d, SSIM_K1, SSIM_K2, SSIM_WINDOW};
pub use marching::isosurface;
pub use recon::{
    component_surface, connected_components, gaussian_smooth, reconstruct_surfaces, SMOOTHING_SIGMA,
};
pub use thickness::{cortical_thickness, Thickness};
pub use variability::{
    axis_projection, masked_mean, variability_maps, write_pgm, Image2d, VariabilityMaps,
};

/// Surface points per mesh for ASSD.
pub const ASSD_POINTS: usize = 100_000;

/// Predicted and reference surface.
#[derive(Debug, Clone)]
pub struct SurfacePair {
    pub pred: TriangleMesh,
    pub reference: TriangleMesh,
}

impl SurfacePair {
    pub fn new(pred: TriangleMesh, reference: TriangleMesh) -> Result<Self> {
        if pred.is_empty() || reference.is_empty() {
            return Err(Error::EmptyMesh);
        }
        Ok(SurfacePair { pred, reference })
    }

    pub fn assd(&self, n_points: usize, seed: u64) -> Result<f64> {
        assd(&self.pred, &self.reference, n_points, seed)
    }
}

/// Sum of distances from `n` points sampled on `from` to the surface `to`.
fn directed_sum(from: &TriangleMesh, to: &SpatialIndex, n: usize, seed: u64) -> Result<f64> {
    let points = SurfaceSampler::new(from)?.sample(n, seed)?;
    let d: Vec<f64> = points
        .par_iter()
        .map(|&p| to.distance(p).expect("non-empty"))
        .collect();
    Ok(d.iter().sum())
}

/// Average symmetric surface distance with explicit per-mesh sampling seeds.
/// Swapping both the meshes and their seeds gives the identical value.
pub fn assd_with_seeds(
    a: &TriangleMesh,
    b: &TriangleMesh,
    n_points: usize,
    seed_a: u64,
    seed_b: u64,
) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::InvalidArgument("n_points must be >= 1".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let sa = directed_sum(a, &SpatialIndex::build(b), n_points, seed_a)?;
    let sb = directed_sum(b, &SpatialIndex::build(a), n_points, seed_b)?;
    Ok((sa + sb) / (2 * n_points) as f64)
}

/// ASSD in mm with `n_points` samples on each mesh.
pub fn assd(
    pred: &TriangleMesh,
    reference: &TriangleMesh,
    n_points: usize,
    seed: u64,
) -> Result<f64> {
    assd_with_seeds(
        pred,
        reference,
        n_points,
        rng::derive_seed(seed, 0),
        rng::derive_seed(seed, 1),
    )
}

/// Metrics of one evaluated item. `psnr` is `+∞` for a perfect match.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub id: String,
    pub assd_white: f64,
    pub assd_pial: f64,
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    pub thickness: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl Summary {
    /// Mean and sample SD; `None` for an empty set.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Some(Summary { n, mean, sd })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<MetricRecord>,
}

const REPORT_COLUMNS: [&str; 6] = ["id", "assd_white", "assd_pial", "psnr", "ssim", "thickness"];

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(x) if x == f64::INFINITY => "inf".into(),
        Some(x) => format!("{x}"),
    }
}

impl MetricReport {
    fn column(&self, f: impl Fn(&MetricRecord) -> Option<f64>) -> Vec<f64> {
        self.records.iter().filter_map(f).collect()
    }

    /// Aggregates per metric; infinite PSNR values are left out of the mean.
    pub fn aggregate(&self) -> Vec<(&'static str, Option<Summary>)> {
        vec![
            (
                "assd_white",
                Summary::of(&self.column(|r| Some(r.assd_white))),
            ),
            (
                "assd_pial",
                Summary::of(&self.column(|r| Some(r.assd_pial))),
            ),
            (
                "psnr",
                Summary::of(&self.column(|r| r.psnr.filter(|v| v.is_finite()))),
            ),
            ("ssim", Summary::of(&self.column(|r| r.ssim))),
            ("thickness", Summary::of(&self.column(|r| r.thickness))),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut s = REPORT_COLUMNS.join(",");
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.id,
                r.assd_white,
                r.assd_pial,
                fmt_opt(r.psnr),
                fmt_opt(r.ssim),
                fmt_opt(r.thickness)
            ));
        }
        s
    }

    /// JSON summary; an infinite PSNR is written as the string `"inf"`.
    pub fn to_json(&self) -> String {
        let opt = |v: Option<f64>| match v {
            Some(x) if x == f64::INFINITY => serde_json::Value::from("inf"),
            Some(x) => serde_json::Value::from(x),
            None => serde_json::Value::Null,
        };
        let records: Vec<serde_json::Value> = self
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "id": r.id,
                    "assd_white": r.assd_white,
                    "assd_pial": r.assd_pial,
                    "psnr": opt(r.psnr),
                    "ssim": opt(r.ssim),
                    "thickness": opt(r.thickness),
                })
            })
            .collect();
        let mut aggregate = serde_json::Map::new();
        for (name, s) in self.aggregate() {
            aggregate.insert(
                name.into(),
                serde_json::to_value(s).expect("summary serializes"),
            );
        }
        let doc = serde_json::json!({ "records": records, "aggregate": aggregate });
        serde_json::to_string_pretty(&doc).expect("report serializes") + "\n"
    }

    pub fn save(&self, csv: &Path, json: &Path) -> Result<()> {
        std::fs::write(csv, self.to_csv()).map_err(|e| Error::io(csv, e))?;
        std::fs::write(json, self.to_json()).map_err(|e| Error::io(json, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::icosphere;
    use glam::DVec3;
    use proptest::prelude::*;

    #[test]
    fn identical_meshes() {
        let s = icosphere(4.0, 2);
        assert!(assd(&s, &s, 1000, 3).unwrap() < 1e-9);
        assert!(SurfacePair::new(s.clone(), TriangleMesh::new(vec![], vec![]).unwrap()).is_err());
        assert!(assd(&s, &s, 0, 3).is_err());
    }

    #[test]
    fn concentric_icospheres() {
        // subdivision 6 has 81920 faces
        let d = assd(&icosphere(10.0, 6), &icosphere(9.0, 6), 20_000, 1).unwrap();
        assert!((d - 1.0).abs() < 0.02, "{d}");
    }

    #[test]
    fn report_aggregates_and_formats() {
        let r = MetricReport {
            records: vec![
                MetricRecord {
                    id: "a".into(),
                    assd_white: 0.25,
                    assd_pial: 0.5,
                    psnr: Some(f64::INFINITY),
                    ssim: Some(1.0),
                    thickness: None,
                },
                MetricRecord {
                    id: "b".into(),
                    assd_white: 0.75,
                    assd_pial: 0.5,
                    psnr: Some(20.0),
                    ssim: Some(0.5),
                    thickness: None,
                },
            ],
        };
        let agg = r.aggregate();
        let white = agg[0].1.unwrap();
        assert_eq!(white.mean, 0.5);
        assert!((white.sd - 0.5f64.sqrt() * 0.5).abs() < 1e-12);
        assert_eq!(agg[2].1.unwrap().n, 1);
        assert!(agg[4].1.is_none());
        assert_eq!(
            r.to_csv(),
            "id,assd_white,assd_pial,psnr,ssim,thickness\na,0.25,0.5,inf,1,\nb,0.75,0.5,20,0.5,\n"
        );
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["records"][0]["psnr"], "inf");
        assert_eq!(json["aggregate"]["assd_white"]["mean"], 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn assd_symmetric_under_swap(sa in any::<u64>(), sb in any::<u64>(), r in 2.0f64..6.0) {
            let a = icosphere(r, 2);
            let b = icosphere(r + 1.0, 1).translated(DVec3::new(0.3, 0.0, 0.0));
            let ab = assd_with_seeds(&a, &b, 500, sa, sb).unwrap();
            let ba = assd_with_seeds(&b, &a, 500, sb, sa).unwrap();
            prop_assert_eq!(ab, ba);
        }

        #[test]
        fn assd_lipschitz_in_translation(seed in any::<u64>(), t in prop::array::uniform3(-1.0f64..1.0)) {
            let a = icosphere(3.0, 2);
            let b = icosphere(4.0, 2);
            let tv = DVec3::from_array(t);
            let base = assd(&a, &b, 500, seed).unwrap();
            let moved = assd(&a.translated(tv), &b, 500, seed).unwrap();
            prop_assert!((moved - base).abs() <= tv.length() + 1e-6);
        }
    }
}
