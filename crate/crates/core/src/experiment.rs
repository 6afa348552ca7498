//! Shared plumbing for training runs and the paired-phantom experiments:
//! process selection, generation from a trained network, and per-item
//! evaluation against phantom ground truth.

use crate::bridge::{self, BridgeSchedule, SamplingPlan};
use crate::ddpm::{self, DdpmObjective, DdpmSchedule};
use crate::error::{Error, Result};
use crate::eval::{assd, cortical_thickness, psnr, reconstruct_surfaces, ssim3d, MetricRecord};
use crate::grid::VoxelGrid;
use crate::nn::{
    BridgeObjective, DenoiserModel, EpochReport, NetworkDenoiser, Objective, ProcessKind, Trainer,
    TrainerConfig, TrainerState, TrainingPair,
};
use crate::phantom::{denormalize_intensity, PhantomPair, INTENSITY_NORMALIZATION};
use crate::rng;
use crate::shape::ConditionSet;

/// Range that the Gaussian-endpoint sampler clips `x̂_0` to.
pub const DDPM_CLIP: f64 = 1.0;

/// A diffusion process with its schedule.
#[derive(Debug, Clone)]
pub enum Diffusion {
    Bridge(BridgeSchedule),
    Ddpm(DdpmSchedule),
}

impl Diffusion {
    pub fn new(kind: ProcessKind, steps: usize) -> Result<Self> {
        Ok(match kind {
            ProcessKind::Bridge => Diffusion::Bridge(BridgeSchedule::new(steps)?),
            ProcessKind::Ddpm => Diffusion::Ddpm(DdpmSchedule::cosine(steps)?),
        })
    }

    pub fn kind(&self) -> ProcessKind {
        match self {
            Diffusion::Bridge(_) => ProcessKind::Bridge,
            Diffusion::Ddpm(_) => ProcessKind::Ddpm,
        }
    }

    pub fn steps(&self) -> usize {
        match self {
            Diffusion::Bridge(s) => s.steps(),
            Diffusion::Ddpm(s) => s.steps(),
        }
    }

    pub fn objective(&self) -> Box<dyn Objective + '_> {
        match self {
            Diffusion::Bridge(s) => Box::new(BridgeObjective(s)),
            Diffusion::Ddpm(s) => Box::new(DdpmObjective(s)),
        }
    }

    /// Sample one normalized volume, labelled with the phantom intensity
    /// normalization. The bridge starts from `s_c`, the Gaussian process
    /// from noise drawn from `seed`.
    pub fn generate(
        &self,
        model: &DenoiserModel<f32>,
        s_c: &VoxelGrid,
        cond: &ConditionSet,
        plan_steps: usize,
        eta: f64,
        seed: u64,
    ) -> Result<VoxelGrid> {
        let plan = SamplingPlan::uniform(self.steps(), plan_steps, eta, seed)?;
        let denoiser = NetworkDenoiser { model };
        let x = match self {
            Diffusion::Bridge(s) => bridge::sample(s, &plan, s_c, cond, &denoiser)?,
            Diffusion::Ddpm(s) => {
                ddpm::sample(s, &plan, s_c.geometry(), cond, &denoiser, DDPM_CLIP)?
            }
        };
        Ok(x.with_normalization(INTENSITY_NORMALIZATION))
    }
}

/// Train for `epochs` more epochs, calling `on_epoch` after each.
#[allow(clippy::too_many_arguments)]
pub fn train_epochs(
    diffusion: &Diffusion,
    config: &TrainerConfig,
    model: &mut DenoiserModel<f32>,
    state: &mut TrainerState,
    train: &[TrainingPair],
    val: &[TrainingPair],
    epochs: usize,
    mut on_epoch: impl FnMut(&EpochReport) -> Result<()>,
) -> Result<()> {
    let objective = diffusion.objective();
    let trainer = Trainer {
        config: config.clone(),
        objective: objective.as_ref(),
    };
    for _ in 0..epochs {
        let report = trainer.train_epoch(model, state, train, val)?;
        log::info!(
            "epoch {} train {:.5} val {} lr {:.2e}",
            report.epoch,
            report.train_loss,
            report.val_loss.map_or("-".into(), |v| format!("{v:.5}")),
            report.lr
        );
        on_epoch(&report)?;
    }
    Ok(())
}

/// Surface and image metrics of a normalized generated volume.
pub fn evaluate_item(
    id: &str,
    generated: &VoxelGrid,
    phantom: &PhantomPair,
    n_points: usize,
    seed: u64,
) -> Result<MetricRecord> {
    let image = denormalize_intensity(generated)?;
    let (w, p) = reconstruct_surfaces(&image, phantom.spec.thresholds())?;
    if w.is_empty() || p.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let reference = crate::phantom::normalize_intensity(&phantom.image)?;
    let (lo, hi) = reference.min_max();
    let range = (hi - lo) as f64;
    Ok(MetricRecord {
        id: id.to_string(),
        assd_white: assd(&w, &phantom.mesh_w, n_points, rng::derive_seed(seed, 0))?,
        assd_pial: assd(&p, &phantom.mesh_p, n_points, rng::derive_seed(seed, 1))?,
        psnr: Some(psnr(generated, &reference, range)?),
        ssim: Some(ssim3d(generated, &reference, range)?),
        thickness: Some(cortical_thickness(&w, &p)?.mean),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ValueKind;
    use crate::nn::DenoiserConfig;
    use crate::phantom::{generate_phantom, PhantomSpec};

    #[test]
    fn generated_volumes_carry_the_intensity_scale() {
        let spec = PhantomSpec::default().at_resolution(8);
        let tp = generate_phantom(&spec, 1).unwrap().training_pair().unwrap();
        let cfg = DenoiserConfig {
            base_channels: 4,
            groups: 2,
            stage_mults: vec![1],
            blocks_per_stage: 1,
            time_embed_dim: 8,
            ..DenoiserConfig::default()
        };
        let model = DenoiserModel::<f32>::new(cfg, 1).unwrap();
        for kind in [ProcessKind::Bridge, ProcessKind::Ddpm] {
            let d = Diffusion::new(kind, 20).unwrap();
            let x = d.generate(&model, &tp.s_c, &tp.cond, 4, 1.0, 3).unwrap();
            assert_eq!(x.kind(), ValueKind::Intensity, "{kind:?}");
            assert_eq!(x.normalization(), INTENSITY_NORMALIZATION, "{kind:?}");
        }
    }

    #[test]
    fn untrained_bridge_returns_its_starting_point() {
        // the zero-initialised head predicts f = 0, so x̂_0 = x_t and with
        // η = 0 the sampler never leaves S_c
        let spec = PhantomSpec::default().at_resolution(8);
        let tp = generate_phantom(&spec, 2).unwrap().training_pair().unwrap();
        let model = DenoiserModel::<f32>::new(DenoiserConfig::default(), 1).unwrap();
        let d = Diffusion::new(ProcessKind::Bridge, 20).unwrap();
        let x = d.generate(&model, &tp.s_c, &tp.cond, 5, 0.0, 0).unwrap();
        assert!(x.max_abs_diff(&tp.s_c).unwrap() < 1e-6);
    }
}
