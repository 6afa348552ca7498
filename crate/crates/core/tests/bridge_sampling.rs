use proptest::prelude::*;
use rand::Rng;
use shapebridge::bridge::{
    forward_sample, reverse_step, sample, training_target, BridgeSchedule, Noise, SamplingPlan,
};
use shapebridge::grid::{Geometry, ValueKind, VoxelGrid};
use shapebridge::{rng, ConditionSet, Result};

fn random_grid(n: usize, seed: u64) -> VoxelGrid {
    let g = Geometry::new([n; 3], [1.0; 3], [0.0; 3]).unwrap();
    let mut r = rng::stream(seed, 1);
    VoxelGrid::from_fn(g, ValueKind::Intensity, |_, _| r.random_range(-1.0..1.0)).unwrap()
}

fn empty_conditions(g: &Geometry) -> ConditionSet {
    let z = VoxelGrid::zeros(*g, ValueKind::BinaryMask).unwrap();
    ConditionSet::new(z.clone(), z.clone(), z.clone(), z).unwrap()
}

fn parse_table(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn schedule_matches_exact_rational_table() {
    let golden = parse_table(include_str!("golden/schedule_t10.txt"));
    let ours = parse_table(&BridgeSchedule::new(10).unwrap().dump());
    assert_eq!(golden.len(), 11);
    for (g, o) in golden.iter().zip(&ours) {
        assert_eq!(g.len(), o.len());
        for (a, b) in g.iter().zip(o) {
            assert!((a - b).abs() <= 1e-14, "{g:?} vs {o:?}");
        }
    }
}

#[test]
fn oracle_denoiser_recovers_x0_for_any_plan() {
    let s = BridgeSchedule::new(200).unwrap();
    let x0 = random_grid(8, 1);
    let sc = random_grid(8, 2);
    let cond = empty_conditions(x0.geometry());
    let alpha = s.alpha.clone();
    let target = sc.sub(&x0).unwrap();
    let oracle = move |_: &VoxelGrid, _: &ConditionSet, t: usize| -> Result<VoxelGrid> {
        target.scale(alpha[t] as f32)
    };
    for n in [1, 2, 10, 200] {
        let plan = SamplingPlan::uniform(200, n, 0.0, 5).unwrap();
        let out = sample(&s, &plan, &sc, &cond, &oracle).unwrap();
        let err = out.max_abs_diff(&x0).unwrap();
        assert!(err < 1e-4, "plan length {n}: {err}");
    }
}

#[test]
fn single_step_plan_is_exact() {
    let s = BridgeSchedule::new(50).unwrap();
    let x0 = random_grid(4, 3);
    let sc = random_grid(4, 4);
    let cond = empty_conditions(x0.geometry());
    let target = sc.sub(&x0).unwrap();
    let oracle = move |_: &VoxelGrid, _: &ConditionSet, _: usize| -> Result<VoxelGrid> {
        Ok(target.clone())
    };
    let plan = SamplingPlan::uniform(50, 1, 0.0, 0).unwrap();
    let out = sample(&s, &plan, &sc, &cond, &oracle).unwrap();
    assert!(out.max_abs_diff(&x0).unwrap() < 1e-6);
}

#[test]
fn full_stochastic_plan_matches_ancestral_steps() {
    let t_max = 40;
    let s = BridgeSchedule::new(t_max).unwrap();
    let sc = random_grid(4, 6);
    let cond = empty_conditions(sc.geometry());
    let sc2 = sc.clone();
    // any smooth denoiser will do
    let f = move |x: &VoxelGrid, _: &ConditionSet, t: usize| -> Result<VoxelGrid> {
        let w = t as f32 / t_max as f32;
        x.zip_map(&sc2, |a, b| 0.3 * a.tanh() + 0.2 * w * b)
    };
    let seed = 77;
    let plan = SamplingPlan::full(t_max, 1.0, seed).unwrap();
    let fast = sample(&s, &plan, &sc, &cond, &f).unwrap();
    let mut x = sc.clone();
    for t in (1..=t_max).rev() {
        let out = f(&x, &cond, t).unwrap();
        x = reverse_step(&s, &x, &sc, &out, t, Noise::Seed(seed)).unwrap();
    }
    let scale = x.data().iter().fold(0f32, |m, v| m.max(v.abs()));
    let err = fast.max_abs_diff(&x).unwrap() / scale;
    assert!(err < 1e-4, "relative error {err}");
}

#[test]
fn sampler_rejects_bad_denoiser_geometry() {
    let s = BridgeSchedule::new(10).unwrap();
    let sc = random_grid(4, 1);
    let cond = empty_conditions(sc.geometry());
    let bad =
        |_: &VoxelGrid, _: &ConditionSet, _: usize| -> Result<VoxelGrid> { Ok(random_grid(2, 0)) };
    let plan = SamplingPlan::uniform(10, 2, 0.0, 0).unwrap();
    assert!(sample(&s, &plan, &sc, &cond, &bad).is_err());
}

proptest! {
    #[test]
    fn schedule_symmetric(t_max in 2usize..400) {
        let s = BridgeSchedule::new(t_max).unwrap();
        for t in 0..=t_max {
            prop_assert!((s.delta[t] - s.delta[t_max - t]).abs() < 1e-12);
        }
        prop_assert_eq!(s.alpha[t_max], 1.0);
        prop_assert_eq!(s.delta[t_max], 0.0);
    }

    #[test]
    fn denoising_identity(seed in any::<u64>(), t in 0usize..=100) {
        let s = BridgeSchedule::new(100).unwrap();
        let x0 = random_grid(4, seed);
        let xt = random_grid(4, seed ^ 0xABCD);
        let x = forward_sample(&s, &x0, &xt, t, Noise::Seed(seed)).unwrap();
        let tg = training_target(&s, &x0, &xt, t, Noise::Seed(seed)).unwrap();
        prop_assert!(x.sub(&tg).unwrap().max_abs_diff(&x0).unwrap() < 1e-6);
    }
}
