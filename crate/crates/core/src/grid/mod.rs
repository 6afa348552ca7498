//! Dense 3D scalar grids with physical metadata.
//!
//! Values live at voxel centers. World axes coincide with index axes, so a
//! grid's placement is fully described by its [`Geometry`]: the center of
//! voxel `(i, j, k)` is `origin + (i, j, k) * spacing`. Storage is row-major
//! with x varying fastest.

mod io;
mod resample;

use glam::DVec3;

use crate::error::{Error, Result};

pub use io::{load_grid, read_grid, save_grid, write_grid, CVG_MAGIC, CVG_VERSION};
pub use resample::resample_trilinear;

/// Placement of a voxel lattice in physical space (mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    pub origin: [f64; 3],
}

impl Geometry {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Result<Self> {
        let g = Geometry {
            dims,
            spacing,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Cubic lattice of `n³` voxels whose centers are symmetric about the
    /// world origin.
    pub fn centered_cube(n: usize, spacing: f64) -> Result<Self> {
        let o = -0.5 * (n as f64 - 1.0) * spacing;
        Geometry::new([n; 3], [spacing; 3], [o; 3])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!(
                "grid dims must be positive, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "grid spacing must be finite and positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "grid origin must be finite, got {:?}",
                self.origin
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, [i, j, k]: [usize; 3]) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let r = idx / self.dims[0];
        [i, r % self.dims[1], r / self.dims[1]]
    }

    /// Center of voxel `index`, without bounds checking.
    #[inline]
    pub fn center_unchecked(&self, [i, j, k]: [usize; 3]) -> DVec3 {
        DVec3::new(
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        )
    }

    pub fn voxel_center(&self, index: [usize; 3]) -> Result<DVec3> {
        if (0..3).any(|a| index[a] >= self.dims[a]) {
            return Err(Error::IndexOutOfRange {
                index,
                dims: self.dims,
            });
        }
        Ok(self.center_unchecked(index))
    }

    /// Continuous index coordinates of a world point (voxel centers at integers).
    #[inline]
    pub fn world_to_index(&self, p: DVec3) -> DVec3 {
        DVec3::new(
            (p.x - self.origin[0]) / self.spacing[0],
            (p.y - self.origin[1]) / self.spacing[1],
            (p.z - self.origin[2]) / self.spacing[2],
        )
    }

    pub fn spacing_vec(&self) -> DVec3 {
        DVec3::from_array(self.spacing)
    }

    pub fn origin_vec(&self) -> DVec3 {
        DVec3::from_array(self.origin)
    }

    /// Mean of the three spacings; the "voxel size" used for isotropic
    /// quantities such as truncation distances.
    pub fn mean_spacing(&self) -> f64 {
        (self.spacing[0] + self.spacing[1] + self.spacing[2]) / 3.0
    }

    pub fn ensure_same(&self, other: &Geometry) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!(
                "{:?}/{:?}/{:?} vs {:?}/{:?}/{:?}",
                self.dims, self.spacing, self.origin, other.dims, other.spacing, other.origin
            )));
        }
        Ok(())
    }
}

/// What the values of a grid represent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ValueKind {
    Intensity,
    Sdf,
    BinaryMask,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Intensity => "intensity",
            ValueKind::Sdf => "sdf",
            ValueKind::BinaryMask => "binary-mask",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "intensity" => Some(ValueKind::Intensity),
            "sdf" => Some(ValueKind::Sdf),
            "binary-mask" => Some(ValueKind::BinaryMask),
            _ => None,
        }
    }
}

/// Affine map from stored values back to physical units:
/// `physical = stored * scale + offset`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Normalization {
    pub scale: f64,
    pub offset: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

/// Everything about a grid except its payload.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridHeader {
    pub geometry: Geometry,
    pub kind: ValueKind,
    pub normalization: Normalization,
    pub version: u32,
}

/// A dense scalar field on a voxel lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    geometry: Geometry,
    kind: ValueKind,
    normalization: Normalization,
    data: Vec<f32>,
}

/// Binary operand for [`elementwise`].
#[derive(Debug, Clone, Copy)]
pub enum Operand<'a> {
    Grid(&'a VoxelGrid),
    Scalar(f32),
    Range(f32, f32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Scale,
    Clamp,
    AbsDiff,
}

impl VoxelGrid {
    pub fn new(geometry: Geometry, kind: ValueKind, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if data.len() != geometry.len() {
            return Err(Error::PayloadMismatch {
                expected: geometry.len() * 4,
                found: data.len() * 4,
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "voxel {:?} holds {}",
                geometry.unravel(pos),
                data[pos]
            )));
        }
        Ok(VoxelGrid {
            geometry,
            kind,
            normalization: Normalization::default(),
            data,
        })
    }

    pub fn filled(geometry: Geometry, kind: ValueKind, value: f32) -> Result<Self> {
        VoxelGrid::new(geometry, kind, vec![value; geometry.len()])
    }

    pub fn zeros(geometry: Geometry, kind: ValueKind) -> Result<Self> {
        VoxelGrid::filled(geometry, kind, 0.0)
    }

    /// Evaluate `f(center, index)` at every voxel.
    pub fn from_fn(
        geometry: Geometry,
        kind: ValueKind,
        mut f: impl FnMut(DVec3, [usize; 3]) -> f32,
    ) -> Result<Self> {
        geometry.validate()?;
        let mut data = Vec::with_capacity(geometry.len());
        for k in 0..geometry.dims[2] {
            for j in 0..geometry.dims[1] {
                for i in 0..geometry.dims[0] {
                    let idx = [i, j, k];
                    data.push(f(geometry.center_unchecked(idx), idx));
                }
            }
        }
        VoxelGrid::new(geometry, kind, data)
    }

    pub fn with_normalization(mut self, normalization: Normalization) -> Self {
        self.normalization = normalization;
        self
    }

    pub fn with_kind(mut self, kind: ValueKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn kind(&self) -> ValueKind {
        self.kind
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn header(&self) -> GridHeader {
        GridHeader {
            geometry: self.geometry,
            kind: self.kind,
            normalization: self.normalization,
            version: CVG_VERSION,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, index: [usize; 3]) -> Result<f32> {
        self.geometry.voxel_center(index)?;
        Ok(self.data[self.geometry.linear_index(index)])
    }

    #[inline]
    pub fn at(&self, index: [usize; 3]) -> f32 {
        self.data[self.geometry.linear_index(index)]
    }

    pub fn voxel_center(&self, index: [usize; 3]) -> Result<DVec3> {
        self.geometry.voxel_center(index)
    }

    /// New grid with the same header and `f` applied per voxel.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<VoxelGrid> {
        let data = self.data.iter().map(|&v| f(v)).collect();
        self.replace_data(data)
    }

    /// New grid with the same header combining co-located voxels of `self`
    /// and `other`.
    pub fn zip_map(&self, other: &VoxelGrid, f: impl Fn(f32, f32) -> f32) -> Result<VoxelGrid> {
        self.geometry.ensure_same(&other.geometry)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        self.replace_data(data)
    }

    /// Same header, new payload.
    pub fn replace_data(&self, data: Vec<f32>) -> Result<VoxelGrid> {
        Ok(VoxelGrid::new(self.geometry, self.kind, data)?.with_normalization(self.normalization))
    }

    pub fn add(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn abs_diff(&self, other: &VoxelGrid) -> Result<VoxelGrid> {
        self.zip_map(other, |a, b| (a - b).abs())
    }

    pub fn scale(&self, s: f32) -> Result<VoxelGrid> {
        self.map(|v| v * s)
    }

    pub fn clamp(&self, lo: f32, hi: f32) -> Result<VoxelGrid> {
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!(
                "clamp range [{lo}, {hi}] is empty"
            )));
        }
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &VoxelGrid) -> Result<f32> {
        self.geometry.ensure_same(&other.geometry)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .fold(0.0f32, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Dispatch form of the per-voxel arithmetic used by the CLI and tests.
pub fn elementwise(op: ElementwiseOp, a: &VoxelGrid, b: Operand<'_>) -> Result<VoxelGrid> {
    match (op, b) {
        (ElementwiseOp::Add, Operand::Grid(g)) => a.add(g),
        (ElementwiseOp::Add, Operand::Scalar(s)) => a.map(|v| v + s),
        (ElementwiseOp::Sub, Operand::Grid(g)) => a.sub(g),
        (ElementwiseOp::Sub, Operand::Scalar(s)) => a.map(|v| v - s),
        (ElementwiseOp::AbsDiff, Operand::Grid(g)) => a.abs_diff(g),
        (ElementwiseOp::AbsDiff, Operand::Scalar(s)) => a.map(|v| (v - s).abs()),
        (ElementwiseOp::Scale, Operand::Scalar(s)) => a.scale(s),
        (ElementwiseOp::Scale, Operand::Grid(g)) => a.zip_map(g, |x, y| x * y),
        (ElementwiseOp::Clamp, Operand::Range(lo, hi)) => a.clamp(lo, hi),
        (op, _) => Err(Error::InvalidArgument(format!(
            "operand kind not supported for {op:?}"
        ))),
    }
}
