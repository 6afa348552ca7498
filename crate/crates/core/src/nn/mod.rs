//! Volumetric denoiser `f(x_t, C, t)` and its training loop.

mod checkpoint;
pub mod gradcheck;
pub mod layers;
mod model;
mod real;
mod train;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, read_checkpoint, save_checkpoint, write_checkpoint,
    Checkpoint, ProcessKind, CHECKPOINT_VERSION,
};
pub use layers::Tensor;
pub use model::{timestep_embedding, DenoiserConfig, DenoiserModel, ForwardCache, ParamSpec};
pub use real::Real;
pub use train::{
    append_log, BridgeObjective, EpochReport, LogRow, Objective, Trainer, TrainerConfig,
    TrainerState, LOG_HEADER,
};

use crate::bridge::Denoiser;
use crate::error::{Error, Result};
use crate::grid::VoxelGrid;
use crate::shape::ConditionSet;

/// One training example: target image, shape prior and conditions, all
/// already normalized.
#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub x0: VoxelGrid,
    pub s_c: VoxelGrid,
    pub cond: ConditionSet,
}

/// Stack `x_t` with the first `in_channels - 1` conditions.
pub fn grid_to_input<R: Real>(
    x_t: &VoxelGrid,
    cond: &ConditionSet,
    in_channels: usize,
) -> Result<Tensor<R>> {
    if in_channels == 0 || in_channels > 5 {
        return Err(Error::ConfigMismatch(format!(
            "unsupported input channel count {in_channels}"
        )));
    }
    x_t.geometry().ensure_same(cond.geometry())?;
    let mut data: Vec<R> = Vec::with_capacity(in_channels * x_t.len());
    data.extend(x_t.data().iter().map(|&v| R::of(v as f64)));
    for g in cond.channels().iter().take(in_channels - 1) {
        data.extend(g.data().iter().map(|&v| R::of(v as f64)));
    }
    Ok(Tensor::from_data(in_channels, x_t.dims(), data))
}

/// A trained network as a [`Denoiser`].
pub struct NetworkDenoiser<'a> {
    pub model: &'a DenoiserModel<f32>,
}

impl Denoiser for NetworkDenoiser<'_> {
    fn predict(&self, x_t: &VoxelGrid, cond: &ConditionSet, t: usize) -> Result<VoxelGrid> {
        let input = grid_to_input::<f32>(x_t, cond, self.model.config().in_channels)?;
        let y = self.model.forward(&input, t as f64)?;
        VoxelGrid::new(*x_t.geometry(), x_t.kind(), y.data)
    }
}
