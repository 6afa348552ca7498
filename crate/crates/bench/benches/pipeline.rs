use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use shapebridge::bridge::{self, BridgeSchedule, SamplingPlan};
use shapebridge::eval::{assd, isosurface, reconstruct_surfaces, ssim3d};
use shapebridge::experiment::Diffusion;
use shapebridge::grid::{Geometry, VoxelGrid};
use shapebridge::mesh::primitives::icosphere;
use shapebridge::mesh::SpatialIndex;
use shapebridge::nn::{DenoiserConfig, DenoiserModel, ProcessKind};
use shapebridge::phantom::{generate_phantom, PhantomSpec};
use shapebridge::shape::{build_condition_set, mesh_to_sdf};
use shapebridge::{ConditionSet, Result};

fn geometry(c: &mut Criterion) {
    let sphere = icosphere(10.0, 4);
    let index = SpatialIndex::build(&sphere);
    // 1002 points on shells between radius 5 and 15
    let queries: Vec<_> = icosphere(1.0, 3)
        .vertices()
        .iter()
        .enumerate()
        .map(|(k, &v)| v * (5.0 + (k % 11) as f64))
        .collect();
    c.bench_function("bvh_nearest_1k", |b| {
        b.iter(|| {
            queries
                .iter()
                .map(|&p| index.distance(p).unwrap())
                .sum::<f64>()
        })
    });
    let g = Geometry::centered_cube(32, 1.0).unwrap();
    let mesh = icosphere(9.0, 4);
    c.bench_function("mesh_to_sdf_32", |b| {
        b.iter(|| mesh_to_sdf(black_box(&mesh), &g, 4.0).unwrap())
    });
    let inner = icosphere(8.0, 4);
    c.bench_function("condition_set_32", |b| {
        b.iter(|| build_condition_set(black_box(&mesh), &inner, &g, 4.0).unwrap())
    });
    let a = icosphere(10.0, 4);
    c.bench_function("assd_10k_points", |b| {
        b.iter(|| assd(black_box(&a), &inner, 10_000, 1).unwrap())
    });
}

fn evaluation(c: &mut Criterion) {
    let spec = PhantomSpec::default();
    let ph = generate_phantom(&spec, 3).unwrap();
    c.bench_function("phantom_32", |b| {
        b.iter(|| generate_phantom(&spec, black_box(3)).unwrap())
    });
    let s = ph.s_c.clone();
    c.bench_function("isosurface_32", |b| {
        b.iter(|| isosurface(black_box(&s), 0.0).unwrap())
    });
    c.bench_function("reconstruct_32", |b| {
        b.iter(|| reconstruct_surfaces(black_box(&ph.image), spec.thresholds()).unwrap())
    });
    let noisy = ph.image.map(|v| v * 0.9 + 0.05).unwrap();
    c.bench_function("ssim3d_32", |b| {
        b.iter(|| ssim3d(black_box(&ph.image), &noisy, 1.0).unwrap())
    });
}

fn diffusion(c: &mut Criterion) {
    let spec = PhantomSpec::default().at_resolution(16);
    let tp = generate_phantom(&spec, 5).unwrap().training_pair().unwrap();
    let model = DenoiserModel::<f32>::new(DenoiserConfig::default(), 1).unwrap();
    let d = Diffusion::new(ProcessKind::Bridge, 200).unwrap();
    c.bench_function("bridge_sample_16_10steps", |b| {
        b.iter(|| {
            d.generate(&model, &tp.s_c, &tp.cond, 10, 1.0, black_box(1))
                .unwrap()
        })
    });

    let schedule = BridgeSchedule::new(200).unwrap();
    let x0 = tp.x0.clone();
    let oracle =
        move |x: &VoxelGrid, _: &ConditionSet, _: usize| -> Result<VoxelGrid> { x.sub(&x0) };
    let plan = SamplingPlan::full(200, 1.0, 3).unwrap();
    c.bench_function("bridge_sampler_overhead_16_200steps", |b| {
        b.iter(|| bridge::sample(&schedule, &plan, &tp.s_c, &tp.cond, &oracle).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = geometry, evaluation, diffusion
}
criterion_main!(benches);
