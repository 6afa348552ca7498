//! Shape-to-image Brownian bridge diffusion for volumetric images.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: dense voxel grids, trilinear resampling and the `.cvg` container.
//! * [`mesh`]: triangle meshes, point-to-surface distance, sampling and deformation.
//! * [`shape`]: signed distance fields, the fused cortex field, ribbon and edge masks.
//! * [`bridge`]: Brownian bridge schedule, forward corruption and samplers.
//! * [`ddpm`]: a Gaussian-endpoint diffusion process used as an ablation.
//! * [`nn`]: a small volumetric encoder-decoder denoiser and its trainer.
//! * [`phantom`]: synthetic paired shape/image data.
//! * [`eval`]: surface distances, image quality, variability and thickness.

pub mod bridge;
pub mod ddpm;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod grid;
pub mod mesh;
pub mod nn;
pub mod phantom;
pub mod rng;
pub mod shape;

pub use error::{Error, Result};
pub use grid::{Geometry, GridHeader, ValueKind, VoxelGrid};
pub use mesh::TriangleMesh;
pub use shape::ConditionSet;
