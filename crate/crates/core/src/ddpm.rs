//! Gaussian-endpoint diffusion with the same network and conditions, used
//! as the non-bridge ablation. Cosine `ᾱ` schedule, ε-prediction, DDIM
//! sampling from pure noise.

use crate::bridge::{Denoiser, SamplingPlan};
use crate::error::{Error, Result};
use crate::grid::{Geometry, ValueKind, VoxelGrid};
use crate::nn::{Objective, TrainingPair};
use crate::rng;
use crate::shape::ConditionSet;

const COSINE_OFFSET: f64 = 0.008;
const MAX_BETA: f64 = 0.999;
/// Stream id of the initial noise volume.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct DdpmSchedule {
    steps: usize,
    /// `ᾱ_t` for `t ∈ {0..T}`, `ᾱ_0 = 1`.
    pub alpha_bar: Vec<f64>,
}

impl DdpmSchedule {
    pub fn cosine(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("need T >= 2, got {steps}")));
        }
        let f = |t: usize| {
            let x = (t as f64 / steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (x * std::f64::consts::FRAC_PI_2).cos().powi(2)
        };
        let mut alpha_bar = vec![1.0; steps + 1];
        for t in 1..=steps {
            let beta = (1.0 - f(t) / f(t - 1)).min(MAX_BETA);
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
        }
        Ok(DdpmSchedule { steps, alpha_bar })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

/// `sqrt(ᾱ_t) x_0 + sqrt(1 - ᾱ_t) ε` with target `ε`.
pub struct DdpmObjective<'a>(pub &'a DdpmSchedule);

impl Objective for DdpmObjective<'_> {
    fn steps(&self) -> usize {
        self.0.steps
    }

    fn example(
        &self,
        pair: &TrainingPair,
        t: usize,
        noise_seed: u64,
    ) -> Result<(VoxelGrid, VoxelGrid)> {
        let ab = self.0.alpha_bar[t];
        let eps = crate::bridge::noise_grid(pair.x0.geometry(), noise_seed, t)?;
        let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
        let data = pair
            .x0
            .data()
            .iter()
            .zip(eps.data())
            .map(|(&x, &e)| (a * x as f64 + b * e as f64) as f32)
            .collect();
        Ok((
            VoxelGrid::new(*pair.x0.geometry(), pair.x0.kind(), data)?,
            eps,
        ))
    }
}

/// DDIM sampling from `N(0, I)`; `x̂_0` is clipped to `[-clip, clip]`.
pub fn sample(
    schedule: &DdpmSchedule,
    plan: &SamplingPlan,
    geometry: &Geometry,
    cond: &ConditionSet,
    denoiser: &dyn Denoiser,
    clip: f64,
) -> Result<VoxelGrid> {
    if plan.steps()[0] != schedule.steps {
        return Err(Error::InvalidArgument(
            "plan and schedule disagree on T".into(),
        ));
    }
    geometry.ensure_same(cond.geometry())?;
    let mut x: Vec<f64> = rng::normal_vec(plan.seed, INIT_STREAM, geometry.len())
        .into_iter()
        .map(f64::from)
        .collect();
    let steps = plan.steps();
    let mut cur = VoxelGrid::new(
        *geometry,
        ValueKind::Intensity,
        x.iter().map(|&v| v as f32).collect(),
    )?;
    for (i, &t) in steps.iter().enumerate() {
        let s = steps.get(i + 1).copied().unwrap_or(0);
        let eps_hat = denoiser.predict(&cur, cond, t)?;
        if eps_hat.geometry() != geometry {
            return Err(Error::GeometryMismatch(
                "denoiser changed the grid geometry".into(),
            ));
        }
        let (at, as_) = (schedule.alpha_bar[t], schedule.alpha_bar[s]);
        let sigma = if s == 0 {
            0.0
        } else {
            plan.eta
                * ((1.0 - as_) / (1.0 - at) * (1.0 - at / as_))
                    .max(0.0)
                    .sqrt()
        };
        let dir = (1.0 - as_ - sigma * sigma).max(0.0).sqrt();
        let z = (sigma > 0.0).then(|| rng::normal_vec(plan.seed, t as u64, x.len()));
        for v in 0..x.len() {
            let x0 = ((x[v] - (1.0 - at).sqrt() * eps_hat.data()[v] as f64) / at.sqrt())
                .clamp(-clip, clip);
            let e = (x[v] - at.sqrt() * x0) / (1.0 - at).sqrt();
            let mut next = as_.sqrt() * x0 + dir * e;
            if let Some(z) = &z {
                next += sigma * z[v] as f64;
            }
            x[v] = next;
        }
        cur = VoxelGrid::new(
            *geometry,
            ValueKind::Intensity,
            x.iter().map(|&v| v as f32).collect(),
        )?;
    }
    Ok(cur)
}
