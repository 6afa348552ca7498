//! Synthetic paired data: nested star-shaped "white" and "pial" surfaces, a
//! matched intensity volume with partial-volume blending, a skull shell
//! whose shape depends on its own seed, and Gaussian noise.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use glam::DVec3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{load_grid, save_grid, Geometry, Normalization, ValueKind, VoxelGrid};
use crate::mesh::primitives::radial_surface;
use crate::mesh::{load_off, save_off, TriangleMesh};
use crate::nn::TrainingPair;
use crate::rng;
use crate::shape::{
    build_condition_set, load_condition_set, normalize_sdf, save_condition_set, ConditionSet,
    CONDITION_MANIFEST,
};

/// Phantom parameters. Lengths in mm, intensities on a [0, 1] scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSpec {
    pub grid_size: usize,
    pub spacing: f64,
    /// Range of the pial base radius.
    pub r_pial: [f64; 2],
    /// Range of the pial-minus-white base radius difference.
    pub thickness: [f64; 2],
    /// Amplitude of the radial perturbation of each surface.
    pub amplitude: f64,
    /// Number of smooth bumps summed into each perturbation.
    pub bumps: usize,
    pub subdivisions: u32,
    /// Random shift of the phantom center, per axis.
    pub center_jitter: f64,
    pub mu_white: f64,
    pub mu_gray: f64,
    pub mu_csf: f64,
    pub mu_skull: f64,
    pub mu_background: f64,
    pub noise_sigma: f64,
    /// Range of the skull's inner base radius.
    pub skull_radius: [f64; 2],
    pub skull_amplitude: f64,
    pub skull_thickness: f64,
    /// SDF truncation, in voxels.
    pub d_max_voxels: f64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            grid_size: 32,
            spacing: 1.0,
            r_pial: [7.0, 8.0],
            thickness: [2.4, 3.0],
            amplitude: 0.6,
            bumps: 4,
            subdivisions: 4,
            center_jitter: 0.5,
            mu_white: 0.8,
            mu_gray: 0.5,
            mu_csf: 0.15,
            mu_skull: 0.95,
            mu_background: 0.0,
            noise_sigma: 0.03,
            skull_radius: [11.0, 12.0],
            skull_amplitude: 0.4,
            skull_thickness: 2.0,
            d_max_voxels: 4.0,
        }
    }
}

impl PhantomSpec {
    /// The same anatomy sampled on a `size`³ lattice covering the same extent.
    pub fn at_resolution(&self, size: usize) -> Self {
        let extent = self.grid_size as f64 * self.spacing;
        PhantomSpec {
            grid_size: size,
            spacing: extent / size as f64,
            ..self.clone()
        }
    }

    pub fn geometry(&self) -> Result<Geometry> {
        Geometry::centered_cube(self.grid_size, self.spacing)
    }

    pub fn d_max(&self) -> f64 {
        self.d_max_voxels * self.spacing
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(format!("phantom spec: {m}")));
        if self.grid_size == 0 || !(self.spacing > 0.0) || !(self.d_max_voxels > 0.0) {
            return bad("grid size, spacing and d_max must be positive".into());
        }
        let sorted = |r: [f64; 2]| r[0] <= r[1] && r[0] > 0.0;
        if !sorted(self.r_pial) || !sorted(self.thickness) || !sorted(self.skull_radius) {
            return bad("ranges must be positive and ordered".into());
        }
        if self.amplitude < 0.0 || self.skull_amplitude < 0.0 || self.noise_sigma < 0.0 {
            return bad("amplitudes and noise must be non-negative".into());
        }
        if self.thickness[0] < 2.0 * self.amplitude + 0.2 {
            return bad(format!(
                "r_p - r_w >= {} needed so surfaces never cross, got {}",
                2.0 * self.amplitude + 0.2,
                self.thickness[0]
            ));
        }
        if self.r_pial[0] - self.thickness[1] - self.amplitude <= 0.0 {
            return bad("white surface radius can reach zero".into());
        }
        if self.skull_radius[0] - self.skull_amplitude <= self.r_pial[1] + self.amplitude {
            return bad("skull overlaps the pial surface".into());
        }
        let mus = [self.mu_white, self.mu_gray, self.mu_csf, self.mu_skull];
        for i in 0..4 {
            for j in i + 1..4 {
                if (mus[i] - mus[j]).abs() < 3.0 * self.noise_sigma {
                    return bad("tissue intensities must differ by at least 3 sigma".into());
                }
            }
        }
        if !(self.mu_white > self.mu_gray && self.mu_gray > self.mu_csf) {
            return bad("expected mu_white > mu_gray > mu_csf".into());
        }
        Ok(())
    }

    /// Midpoint thresholds (white/gray, gray/csf).
    pub fn thresholds(&self) -> (f64, f64) {
        (
            0.5 * (self.mu_white + self.mu_gray),
            0.5 * (self.mu_gray + self.mu_csf),
        )
    }
}

/// Smooth function on the unit sphere bounded by 1 in magnitude.
#[derive(Debug, Clone)]
struct Bumps {
    terms: Vec<(DVec3, f64, f64, f64)>,
}

impl Bumps {
    fn random(seed: u64, n: usize) -> Self {
        let mut r = rng::stream(seed, 0);
        let mut terms: Vec<(DVec3, f64, f64, f64)> = (0..n)
            .map(|_| {
                let z: f64 = r.random_range(-1.0..1.0);
                let phi: f64 = r.random_range(0.0..std::f64::consts::TAU);
                let s = (1.0 - z * z).sqrt();
                let dir = DVec3::new(s * phi.cos(), s * phi.sin(), z);
                (
                    dir,
                    r.random_range(1.5..3.0),
                    r.random_range(0.0..std::f64::consts::TAU),
                    r.random_range(0.5..1.0),
                )
            })
            .collect();
        let total: f64 = terms.iter().map(|t| t.3).sum();
        for t in &mut terms {
            t.3 /= total.max(1e-300);
        }
        Bumps { terms }
    }

    fn eval(&self, u: DVec3) -> f64 {
        self.terms
            .iter()
            .map(|(d, f, ph, w)| w * (f * d.dot(u) + ph).sin())
            .sum()
    }
}

/// One generated subject.
#[derive(Debug, Clone)]
pub struct PhantomPair {
    pub seed: u64,
    pub spec: PhantomSpec,
    pub mesh_p: TriangleMesh,
    pub mesh_w: TriangleMesh,
    /// Intensities on the [0, 1] scale.
    pub image: VoxelGrid,
    /// Fused cortex SDF in mm.
    pub s_c: VoxelGrid,
    /// Conditions with SDFs in mm.
    pub cond: ConditionSet,
    /// Voxels at least half covered by skull.
    pub skull: VoxelGrid,
}

// Seed components of one phantom.
const WHITE: u64 = 1;
const PIAL: u64 = 2;
const SKULL: u64 = 3;
const NOISE: u64 = 4;
const LAYOUT: u64 = 5;

/// Partial-volume fraction inside a surface at signed distance `d`.
#[inline]
fn inside_fraction(d: f64, h: f64) -> f64 {
    (0.5 - d / h).clamp(0.0, 1.0)
}

/// Surfaces of a phantom, shared with deformation experiments.
pub fn phantom_surfaces(
    spec: &PhantomSpec,
    seed: u64,
) -> Result<(TriangleMesh, TriangleMesh, DVec3)> {
    spec.validate()?;
    let mut r = rng::stream(rng::derive_seed(seed, LAYOUT), 0);
    let j = spec.center_jitter;
    let center = if j > 0.0 {
        DVec3::new(
            r.random_range(-j..=j),
            r.random_range(-j..=j),
            r.random_range(-j..=j),
        )
    } else {
        DVec3::ZERO
    };
    let rp = r.random_range(spec.r_pial[0]..=spec.r_pial[1]);
    let rw = rp - r.random_range(spec.thickness[0]..=spec.thickness[1]);
    let bw = Bumps::random(rng::derive_seed(seed, WHITE), spec.bumps);
    let bp = Bumps::random(rng::derive_seed(seed, PIAL), spec.bumps);
    let a = spec.amplitude;
    let mesh_w = radial_surface(spec.subdivisions, center, |u| rw + a * bw.eval(u));
    let mesh_p = radial_surface(spec.subdivisions, center, |u| rp + a * bp.eval(u));
    Ok((mesh_p, mesh_w, center))
}

/// Deterministic in `(spec, seed)`.
pub fn generate_phantom(spec: &PhantomSpec, seed: u64) -> Result<PhantomPair> {
    let (mesh_p, mesh_w, center) = phantom_surfaces(spec, seed)?;
    let geometry = spec.geometry()?;
    let (s_c, cond) = build_condition_set(&mesh_p, &mesh_w, &geometry, spec.d_max())?;

    let mut r = rng::stream(rng::derive_seed(seed, SKULL), 1);
    let r_in = r.random_range(spec.skull_radius[0]..=spec.skull_radius[1]);
    let bs = Bumps::random(rng::derive_seed(seed, SKULL), spec.bumps);
    let noise = rng::normal_vec(rng::derive_seed(seed, NOISE), 0, geometry.len());
    let h = spec.spacing;
    let mut image = Vec::with_capacity(geometry.len());
    let mut skull = Vec::with_capacity(geometry.len());
    for i in 0..geometry.len() {
        let p = geometry.center_unchecked(geometry.unravel(i)) - center;
        let rad = p.length();
        let u = if rad > 0.0 { p / rad } else { DVec3::Z };
        let inner = r_in + spec.skull_amplitude * bs.eval(u);
        let outer = inner + spec.skull_thickness;
        let f_w = inside_fraction(cond.s_w.data()[i] as f64, h);
        let f_p = inside_fraction(cond.s_p.data()[i] as f64, h);
        let brain =
            spec.mu_csf + f_p * (spec.mu_gray - spec.mu_csf) + f_w * (spec.mu_white - spec.mu_gray);
        let past_inner = 1.0 - inside_fraction(rad - inner, h);
        let past_outer = 1.0 - inside_fraction(rad - outer, h);
        let v = brain * (1.0 - past_inner)
            + spec.mu_skull * (past_inner - past_outer)
            + spec.mu_background * past_outer;
        image.push((v + spec.noise_sigma * noise[i] as f64) as f32);
        skull.push(if past_inner - past_outer > 0.5 {
            1.0
        } else {
            0.0
        });
    }
    Ok(PhantomPair {
        seed,
        spec: spec.clone(),
        mesh_p,
        mesh_w,
        image: VoxelGrid::new(geometry, ValueKind::Intensity, image)?,
        s_c,
        cond,
        skull: VoxelGrid::new(geometry, ValueKind::BinaryMask, skull)?,
    })
}

/// Fixed map of [0, 1] intensities onto [-1, 1].
pub const INTENSITY_NORMALIZATION: Normalization = Normalization {
    scale: 0.5,
    offset: 0.5,
};

pub fn normalize_intensity(image: &VoxelGrid) -> Result<VoxelGrid> {
    Ok(image
        .map(|v| 2.0 * v - 1.0)?
        .with_normalization(INTENSITY_NORMALIZATION))
}

/// Back to the [0, 1] scale.
pub fn denormalize_intensity(image: &VoxelGrid) -> Result<VoxelGrid> {
    let n = image.normalization();
    Ok(image
        .map(|v| (v as f64 * n.scale + n.offset) as f32)?
        .with_normalization(Normalization::default()))
}

/// Network-ready conditions: SDFs scaled by `1/d_max`, masks unchanged.
pub fn normalize_conditions(
    s_c: &VoxelGrid,
    cond: &ConditionSet,
    d_max: f64,
) -> Result<(VoxelGrid, ConditionSet)> {
    Ok((
        normalize_sdf(s_c, d_max)?,
        ConditionSet::new(
            normalize_sdf(&cond.s_p, d_max)?,
            normalize_sdf(&cond.s_w, d_max)?,
            cond.edge.clone(),
            cond.ribbon.clone(),
        )?,
    ))
}

impl PhantomPair {
    pub fn training_pair(&self) -> Result<TrainingPair> {
        let (s_c, cond) = normalize_conditions(&self.s_c, &self.cond, self.spec.d_max())?;
        Ok(TrainingPair {
            x0: normalize_intensity(&self.image)?,
            s_c,
            cond,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestItem {
    pub id: String,
    pub seed: u64,
    pub split: Split,
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub seed: u64,
    pub spec: PhantomSpec,
    pub items: Vec<ManifestItem>,
}

pub const DATASET_MANIFEST: &str = "dataset.manifest";
const DATASET_HEADER: &str = "phantom-dataset 1";

/// Split sizes for ratios 6:1:2.
pub fn split_sizes(n: usize) -> Result<[usize; 3]> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 items to split, got {n}"
        )));
    }
    let val = ((n as f64 / 9.0).round() as usize).max(1);
    let test = ((2.0 * n as f64 / 9.0).round() as usize).max(1);
    let train = n.saturating_sub(val + test).max(1);
    let test = n - train - val;
    Ok([train, val, test])
}

/// Assign seeds and splits for `n` subjects.
pub fn plan_dataset(spec: &PhantomSpec, n: usize, seed: u64) -> Result<DatasetManifest> {
    spec.validate()?;
    let [train, val, _] = split_sizes(n)?;
    let mut seen = std::collections::HashSet::new();
    let mut items = Vec::with_capacity(n);
    let mut tag = 0u64;
    for i in 0..n {
        let mut s = rng::derive_seed(seed, tag);
        while !seen.insert(s) {
            tag += 1;
            s = rng::derive_seed(seed, tag);
        }
        tag += 1;
        let split = if i < train {
            Split::Train
        } else if i < train + val {
            Split::Val
        } else {
            Split::Test
        };
        items.push(ManifestItem {
            id: format!("{i:04}"),
            seed: s,
            split,
        });
    }
    Ok(DatasetManifest {
        seed,
        spec: spec.clone(),
        items,
    })
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestItem> {
        self.items.iter().filter(move |i| i.split == split)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{DATASET_HEADER}").unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(
            s,
            "spec {}",
            serde_json::to_string(&self.spec).expect("spec serializes")
        )
        .unwrap();
        for it in &self.items {
            writeln!(
                s,
                "item {} {} {} {}",
                it.id,
                it.seed,
                it.split.as_str(),
                it.id
            )
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |d: String| Error::format("dataset manifest", d);
        let mut lines = text.lines();
        if lines.next() != Some(DATASET_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut seed = None;
        let mut spec = None;
        let mut items = Vec::new();
        for line in lines {
            let (key, rest) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("bad line {line:?}")))?;
            match key {
                "seed" => seed = Some(rest.parse().map_err(|_| bad("bad seed".into()))?),
                "spec" => spec = Some(serde_json::from_str(rest).map_err(|e| bad(e.to_string()))?),
                "item" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 4 {
                        return Err(bad(format!("bad item line {line:?}")));
                    }
                    items.push(ManifestItem {
                        id: f[0].to_string(),
                        seed: f[1].parse().map_err(|_| bad("bad item seed".into()))?,
                        split: Split::parse(f[2])
                            .ok_or_else(|| bad(format!("bad split {}", f[2])))?,
                    });
                }
                _ => return Err(bad(format!("unknown key {key}"))),
            }
        }
        Ok(DatasetManifest {
            seed: seed.ok_or_else(|| bad("missing seed".into()))?,
            spec: spec.ok_or_else(|| bad("missing spec".into()))?,
            items,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// Files of one item inside its directory.
pub const ITEM_IMAGE: &str = "image.cvg";
pub const ITEM_SKULL: &str = "skull.cvg";
pub const ITEM_PIAL: &str = "pial.off";
pub const ITEM_WHITE: &str = "white.off";

/// Write one generated pair into `dir`.
pub fn save_phantom(pair: &PhantomPair, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_off(&pair.mesh_p, dir.join(ITEM_PIAL))?;
    save_off(&pair.mesh_w, dir.join(ITEM_WHITE))?;
    save_grid(&pair.image, dir.join(ITEM_IMAGE))?;
    save_grid(&pair.skull, dir.join(ITEM_SKULL))?;
    save_condition_set(dir, &pair.s_c, &pair.cond)
}

/// Read a pair written by [`save_phantom`].
pub fn load_phantom(dir: &Path, spec: &PhantomSpec, seed: u64) -> Result<PhantomPair> {
    let (s_c, cond) = load_condition_set(&dir.join(CONDITION_MANIFEST))?;
    let pair = PhantomPair {
        seed,
        spec: spec.clone(),
        mesh_p: load_off(dir.join(ITEM_PIAL))?,
        mesh_w: load_off(dir.join(ITEM_WHITE))?,
        image: load_grid(dir.join(ITEM_IMAGE))?,
        s_c,
        cond,
        skull: load_grid(dir.join(ITEM_SKULL))?,
    };
    spec.geometry()?.ensure_same(pair.image.geometry())?;
    pair.image.geometry().ensure_same(pair.cond.geometry())?;
    Ok(pair)
}

impl DatasetManifest {
    /// Load every item of `split` stored under `root`.
    pub fn load_split(
        &self,
        root: &Path,
        split: Split,
    ) -> Result<Vec<(ManifestItem, PhantomPair)>> {
        self.split(split)
            .map(|it| {
                Ok((
                    it.clone(),
                    load_phantom(&root.join(&it.id), &self.spec, it.seed)?,
                ))
            })
            .collect()
    }
}

/// Generate every item of `manifest` under `root` and write the manifest.
/// Items are independent; generation order does not affect the output.
pub fn write_dataset(manifest: &DatasetManifest, root: &Path) -> Result<PathBuf> {
    use rayon::prelude::*;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    manifest
        .items
        .par_iter()
        .map(|it| {
            let pair = generate_phantom(&manifest.spec, it.seed)?;
            save_phantom(&pair, &root.join(&it.id)).map(|_| ())
        })
        .collect::<Result<Vec<()>>>()?;
    let path = root.join(DATASET_MANIFEST);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

pub fn generate_dataset(
    spec: &PhantomSpec,
    n: usize,
    seed: u64,
    root: &Path,
) -> Result<DatasetManifest> {
    let manifest = plan_dataset(spec, n, seed)?;
    write_dataset(&manifest, root)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{sample_surface_points, SpatialIndex};

    fn small() -> PhantomSpec {
        PhantomSpec {
            subdivisions: 3,
            ..PhantomSpec::default()
        }
    }

    #[test]
    fn default_spec_is_valid() {
        PhantomSpec::default().validate().unwrap();
        PhantomSpec::default().at_resolution(16).validate().unwrap();
        let bad = PhantomSpec {
            thickness: [1.0, 2.0],
            ..PhantomSpec::default()
        };
        assert!(bad.validate().is_err());
        let bad = PhantomSpec {
            mu_gray: 0.78,
            ..PhantomSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_phantom(&small(), 7).unwrap();
        let b = generate_phantom(&small(), 7).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.mesh_p, b.mesh_p);
        let c = generate_phantom(&small(), 8).unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn zero_amplitude_gives_concentric_spheres() {
        let spec = PhantomSpec {
            amplitude: 0.0,
            center_jitter: 0.0,
            ..small()
        };
        let p = generate_phantom(&spec, 3).unwrap();
        let rp = p.mesh_p.vertices()[0].length();
        let rw = p.mesh_w.vertices()[0].length();
        assert!(p
            .mesh_p
            .vertices()
            .iter()
            .all(|v| (v.length() - rp).abs() < 1e-9));
        let g = spec.geometry().unwrap();
        let d = spec.d_max();
        // faceting of a level-3 icosphere
        let tol = 0.06 * rp.max(rw) / 8.0 + 1e-6;
        for i in 0..g.len() {
            let r = g.center_unchecked(g.unravel(i)).length();
            let want_p = (r - rp).clamp(-d, d);
            let want_w = (r - rw).clamp(-d, d);
            assert!((p.cond.s_p.data()[i] as f64 - want_p).abs() < tol);
            assert!((p.cond.s_w.data()[i] as f64 - want_w).abs() < tol);
        }
    }

    #[test]
    fn thresholded_labels_match_shape_masks() {
        let spec = PhantomSpec {
            noise_sigma: 0.0,
            ..small()
        };
        let p = generate_phantom(&spec, 11).unwrap();
        let (t_wg, t_gc) = spec.thresholds();
        let h = spec.spacing as f32;
        let g = spec.geometry().unwrap();
        let (mut total, mut agree) = (0, 0);
        for i in 0..g.len() {
            let r = g.center_unchecked(g.unravel(i)).length();
            // the classification covers the brain and the CSF around it
            if r > spec.skull_radius[0] - spec.skull_amplitude - 1.5 * spec.spacing {
                continue;
            }
            let v = p.image.data()[i] as f64;
            let label = if v > t_wg {
                0
            } else if v > t_gc {
                1
            } else {
                2
            };
            let (sp, sw) = (p.cond.s_p.data()[i], p.cond.s_w.data()[i]);
            let truth = if sw < 0.0 {
                0
            } else if p.cond.ribbon.data()[i] == 1.0 {
                1
            } else {
                2
            };
            total += 1;
            if label == truth {
                agree += 1;
            } else {
                assert!(
                    sp.abs() <= h || sw.abs() <= h,
                    "disagreement away from the boundary band"
                );
            }
        }
        assert!(agree as f64 >= 0.99 * total as f64, "{agree}/{total}");
    }

    #[test]
    fn surfaces_keep_apart() {
        for seed in 0..4 {
            let (mp, mw, _) = phantom_surfaces(&small(), seed).unwrap();
            let idx = SpatialIndex::build(&mw);
            let min = sample_surface_points(&mp, 2000, seed)
                .unwrap()
                .iter()
                .map(|&q| idx.distance(q).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!(min > 0.2, "seed {seed}: {min}");
        }
    }

    #[test]
    fn dataset_splits_and_regeneration() {
        assert_eq!(split_sizes(90).unwrap(), [60, 10, 20]);
        assert!(split_sizes(2).is_err());
        let spec = PhantomSpec {
            grid_size: 8,
            spacing: 4.0,
            subdivisions: 2,
            ..PhantomSpec::default()
        };
        let m = plan_dataset(&spec, 90, 5).unwrap();
        let seeds: std::collections::HashSet<u64> = m.items.iter().map(|i| i.seed).collect();
        assert_eq!(seeds.len(), 90);
        assert_eq!(m.split(Split::Val).count(), 10);
        assert_eq!(DatasetManifest::parse(&m.to_text()).unwrap(), m);

        let small = plan_dataset(&spec, 3, 5).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let path = write_dataset(&small, d1.path()).unwrap();
        let again = DatasetManifest::load(&path).unwrap();
        write_dataset(&again, d2.path()).unwrap();
        for it in &small.items {
            for f in [ITEM_IMAGE, ITEM_PIAL, "s_c.cvg", CONDITION_MANIFEST] {
                let a = std::fs::read(d1.path().join(&it.id).join(f)).unwrap();
                let b = std::fs::read(d2.path().join(&it.id).join(f)).unwrap();
                assert_eq!(a, b, "{f}");
            }
        }
        let loaded = again.load_split(d1.path(), Split::Train).unwrap();
        let fresh = generate_phantom(&spec, loaded[0].0.seed).unwrap();
        assert_eq!(loaded[0].1.image, fresh.image);
        assert_eq!(loaded[0].1.cond.s_p, fresh.cond.s_p);
    }

    #[test]
    fn intensity_normalization_round_trip() {
        let p = generate_phantom(&small(), 2).unwrap();
        let n = normalize_intensity(&p.image).unwrap();
        let back = denormalize_intensity(&n).unwrap();
        assert!(back.max_abs_diff(&p.image).unwrap() < 1e-6);
    }
}
