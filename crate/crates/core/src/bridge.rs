//! Brownian bridge between an image `x_0` and a shape prior `x_T = S_c`.
//!
//! Marginal: `x_t = (1 - α_t) x_0 + α_t x_T + √δ_t ε` with `α_t = t/T` and
//! `δ_t = 2(α_t - α_t²)`. The reverse mean is
//! `c_xt x_t + c_st S_c - c_ft f(x_t, t)` with variance `δ̃_t`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::{Geometry, ValueKind, VoxelGrid};
use crate::rng;
use crate::shape::ConditionSet;

/// Precomputed tables for `t ∈ {0..T}`. Entries at `t = 0` other than `α_0`
/// and `δ_0` are unused and set to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BridgeSchedule {
    steps: usize,
    pub alpha: Vec<f64>,
    pub delta: Vec<f64>,
    /// `δ_{t|t-1}`
    pub delta_step: Vec<f64>,
    pub c_x: Vec<f64>,
    pub c_s: Vec<f64>,
    pub c_f: Vec<f64>,
    pub tilde_delta: Vec<f64>,
}

impl BridgeSchedule {
    pub fn new(steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(Error::InvalidArgument(format!("need T >= 2, got {steps}")));
        }
        let tf = steps as f64;
        let alpha: Vec<f64> = (0..=steps).map(|t| t as f64 / tf).collect();
        let delta: Vec<f64> = alpha.iter().map(|&a| 2.0 * (a - a * a)).collect();
        let n = steps + 1;
        let (mut delta_step, mut c_x, mut c_s, mut c_f, mut tilde) = (
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
            vec![0.0; n],
        );
        for t in 1..=steps {
            let (a, ap, dp) = (alpha[t], alpha[t - 1], delta[t - 1]);
            let q = (1.0 - a) / (1.0 - ap);
            delta_step[t] = delta[t] - dp * q * q;
            // δ_t = 2α_t(1-α_t) cancels against (1-α_t) in both ratios below,
            // which keeps t = T finite (δ_T = 0).
            let k = dp / (2.0 * a * (1.0 - ap));
            let r = 1.0 - dp * (1.0 - a) / (2.0 * a * (1.0 - ap) * (1.0 - ap));
            c_f[t] = (1.0 - ap) * r;
            c_x[t] = k + c_f[t];
            c_s[t] = ap - a * k;
            tilde[t] = if t == 1 { 0.0 } else { r * dp };
        }
        Ok(BridgeSchedule {
            steps,
            alpha,
            delta,
            delta_step,
            c_x,
            c_s,
            c_f,
            tilde_delta: tilde,
        })
    }

    /// `T`.
    pub fn steps(&self) -> usize {
        self.steps
    }

    fn check_t(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.steps {
            return Err(Error::InvalidArgument(format!(
                "timestep {t} outside [{min}, {}]",
                self.steps
            )));
        }
        Ok(())
    }

    /// Whitespace-separated table, one row per `t`.
    pub fn dump(&self) -> String {
        let mut s = String::from("# t alpha delta delta_step c_x c_s c_f tilde_delta\n");
        for t in 0..=self.steps {
            write!(s, "{t}").unwrap();
            for v in [
                self.alpha[t],
                self.delta[t],
                self.delta_step[t],
                self.c_x[t],
                self.c_s[t],
                self.c_f[t],
                self.tilde_delta[t],
            ] {
                write!(s, " {v:.17e}").unwrap();
            }
            s.push('\n');
        }
        s
    }
}

pub fn build_schedule(steps: usize) -> Result<BridgeSchedule> {
    BridgeSchedule::new(steps)
}

/// Source of the standard normal field used by a step.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    Grid(&'a VoxelGrid),
    /// Deterministic in `(seed, t, voxel index)`.
    Seed(u64),
    Zero,
}

/// Standard normal field keyed by `(seed, t)`.
pub fn noise_grid(geometry: &Geometry, seed: u64, t: usize) -> Result<VoxelGrid> {
    VoxelGrid::new(
        *geometry,
        ValueKind::Intensity,
        rng::normal_vec(seed, t as u64, geometry.len()),
    )
}

fn resolve_noise(noise: Noise<'_>, geometry: &Geometry, t: usize) -> Result<Option<VoxelGrid>> {
    match noise {
        Noise::Grid(g) => {
            geometry.ensure_same(g.geometry())?;
            Ok(Some(g.clone()))
        }
        Noise::Seed(seed) => Ok(Some(noise_grid(geometry, seed, t)?)),
        Noise::Zero => Ok(None),
    }
}

fn combine(terms: &[(f64, &VoxelGrid)], like: &VoxelGrid) -> Result<VoxelGrid> {
    for (_, g) in terms {
        like.geometry().ensure_same(g.geometry())?;
    }
    let data = (0..like.len())
        .map(|i| {
            terms
                .iter()
                .map(|(c, g)| c * g.data()[i] as f64)
                .sum::<f64>() as f32
        })
        .collect();
    Ok(VoxelGrid::new(*like.geometry(), like.kind(), data)?
        .with_normalization(like.normalization()))
}

/// `(1 - α_t) x_0 + α_t x_T + √δ_t ε`.
pub fn forward_sample(
    schedule: &BridgeSchedule,
    x0: &VoxelGrid,
    x_t_end: &VoxelGrid,
    t: usize,
    noise: Noise<'_>,
) -> Result<VoxelGrid> {
    schedule.check_t(t, 0)?;
    let a = schedule.alpha[t];
    let eps = resolve_noise(noise, x0.geometry(), t)?;
    let mut terms = vec![(1.0 - a, x0), (a, x_t_end)];
    if let Some(e) = &eps {
        terms.push((schedule.delta[t].sqrt(), e));
    }
    combine(&terms, x0)
}

/// Regression target `α_t (x_T - x_0) + √δ_t ε`.
pub fn training_target(
    schedule: &BridgeSchedule,
    x0: &VoxelGrid,
    x_t_end: &VoxelGrid,
    t: usize,
    noise: Noise<'_>,
) -> Result<VoxelGrid> {
    schedule.check_t(t, 0)?;
    let a = schedule.alpha[t];
    let eps = resolve_noise(noise, x0.geometry(), t)?;
    let mut terms = vec![(a, x_t_end), (-a, x0)];
    if let Some(e) = &eps {
        terms.push((schedule.delta[t].sqrt(), e));
    }
    combine(&terms, x0)
}

/// One ancestral step `x_t → x_{t-1}`. Noise is ignored at `t = 1`.
pub fn reverse_step(
    schedule: &BridgeSchedule,
    x_t: &VoxelGrid,
    s_c: &VoxelGrid,
    f_out: &VoxelGrid,
    t: usize,
    noise: Noise<'_>,
) -> Result<VoxelGrid> {
    schedule.check_t(t, 1)?;
    let mut terms = vec![
        (schedule.c_x[t], x_t),
        (schedule.c_s[t], s_c),
        (-schedule.c_f[t], f_out),
    ];
    let eps = if t > 1 {
        resolve_noise(noise, x_t.geometry(), t)?
    } else {
        None
    };
    if let Some(e) = &eps {
        terms.push((schedule.tilde_delta[t].sqrt(), e));
    }
    combine(&terms, x_t)
}

/// Mean absolute difference.
pub fn bridge_loss(f_out: &VoxelGrid, target: &VoxelGrid) -> Result<f64> {
    f_out.geometry().ensure_same(target.geometry())?;
    let s: f64 = f_out
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .sum();
    Ok(s / f_out.len() as f64)
}

/// Anything that maps `(x_t, C, t)` to a grid of the same geometry.
pub trait Denoiser {
    fn predict(&self, x_t: &VoxelGrid, cond: &ConditionSet, t: usize) -> Result<VoxelGrid>;
}

impl<F> Denoiser for F
where
    F: Fn(&VoxelGrid, &ConditionSet, usize) -> Result<VoxelGrid>,
{
    fn predict(&self, x_t: &VoxelGrid, cond: &ConditionSet, t: usize) -> Result<VoxelGrid> {
        self(x_t, cond, t)
    }
}

/// Decreasing timestep subsequence starting at `T`, with noise level `η`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    steps: Vec<usize>,
    pub eta: f64,
    pub seed: u64,
}

impl SamplingPlan {
    pub fn new(steps: Vec<usize>, t_max: usize, eta: f64, seed: u64) -> Result<Self> {
        if steps.first() != Some(&t_max) {
            return Err(Error::InvalidArgument(format!(
                "plan must start at T = {t_max}, got {:?}",
                steps.first()
            )));
        }
        if steps.windows(2).any(|w| w[1] >= w[0]) || steps.last().is_some_and(|&s| s < 1) {
            return Err(Error::InvalidArgument(
                "plan must be strictly decreasing and >= 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::InvalidArgument(format!(
                "eta must lie in [0, 1], got {eta}"
            )));
        }
        Ok(SamplingPlan { steps, eta, seed })
    }

    /// `n` roughly evenly spaced steps `T = τ_n > ... > τ_1 >= 1`.
    pub fn uniform(t_max: usize, n: usize, eta: f64, seed: u64) -> Result<Self> {
        if n == 0 || n > t_max {
            return Err(Error::InvalidArgument(format!(
                "plan length {n} not in [1, {t_max}]"
            )));
        }
        let steps = (1..=n).rev().map(|i| (i * t_max).div_ceil(n)).collect();
        SamplingPlan::new(steps, t_max, eta, seed)
    }

    /// Every step `T, T-1, ..., 1`.
    pub fn full(t_max: usize, eta: f64, seed: u64) -> Result<Self> {
        SamplingPlan::uniform(t_max, t_max, eta, seed)
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }
}

/// Generate `x_0` starting from `x_T = S_c`.
///
/// Each step from `t` to `s` predicts `x̂_0 = x - f(x, C, t)` and re-projects
/// onto the bridge marginal at `s`, keeping a `√(δ_s - σ²)/√δ_t` share of the
/// current deviation and adding `σ ε` fresh noise. With `η = 1` and every
/// step this is the ancestral sampler.
pub fn sample(
    schedule: &BridgeSchedule,
    plan: &SamplingPlan,
    s_c: &VoxelGrid,
    cond: &ConditionSet,
    denoiser: &dyn Denoiser,
) -> Result<VoxelGrid> {
    if plan.steps[0] != schedule.steps {
        return Err(Error::InvalidArgument(
            "plan and schedule disagree on T".into(),
        ));
    }
    let geometry = *s_c.geometry();
    let mut x: Vec<f64> = s_c.data().iter().map(|&v| v as f64).collect();
    let sc: Vec<f64> = x.clone();
    let mut cur = s_c.clone();
    for (i, &t) in plan.steps.iter().enumerate() {
        let s = plan.steps.get(i + 1).copied().unwrap_or(0);
        let f = denoiser.predict(&cur, cond, t)?;
        if f.geometry() != &geometry {
            return Err(Error::GeometryMismatch(format!(
                "denoiser returned {:?} for input {:?}",
                f.dims(),
                geometry.dims
            )));
        }
        let (at, dt) = (schedule.alpha[t], schedule.delta[t]);
        let (as_, ds) = (schedule.alpha[s], schedule.delta[s]);
        let sigma2 = if s == 0 {
            0.0
        } else {
            let rho = ds * (1.0 - at) / (2.0 * at * (1.0 - as_) * (1.0 - as_));
            (plan.eta * plan.eta * ds * (1.0 - rho)).clamp(0.0, ds)
        };
        let keep = if dt > 0.0 {
            (ds - sigma2).max(0.0).sqrt() / dt.sqrt()
        } else {
            0.0
        };
        let eps = if sigma2 > 0.0 {
            Some(rng::normal_vec(plan.seed, t as u64, x.len()))
        } else {
            None
        };
        let sigma = sigma2.sqrt();
        for v in 0..x.len() {
            let x0_hat = x[v] - f.data()[v] as f64;
            let dev = x[v] - (1.0 - at) * x0_hat - at * sc[v];
            let mut next = (1.0 - as_) * x0_hat + as_ * sc[v] + keep * dev;
            if let Some(e) = &eps {
                next += sigma * e[v] as f64;
            }
            x[v] = next;
        }
        // the state is an image estimate, not a distance field
        cur = VoxelGrid::new(
            geometry,
            ValueKind::Intensity,
            x.iter().map(|&v| v as f32).collect(),
        )?;
    }
    Ok(cur)
}
