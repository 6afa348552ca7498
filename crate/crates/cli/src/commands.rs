use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use shapebridge::bridge::{self, BridgeSchedule, Denoiser, SamplingPlan};
use shapebridge::eval::{
    assd, atrophy_experiment, axis_projection, cortical_thickness, masked_mean, variability_maps,
    write_pgm, AtrophyConfig, MetricRecord, MetricReport,
};
use shapebridge::experiment::{evaluate_item, train_epochs, Diffusion};
use shapebridge::grid::{load_grid, save_grid, Geometry};
use shapebridge::mesh::load_off;
use shapebridge::nn::{
    append_log, load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint,
    DenoiserModel, TrainerState,
};
use shapebridge::phantom::{
    generate_dataset, normalize_conditions, normalize_intensity, DatasetManifest, PhantomPair,
    Split, DATASET_MANIFEST, ITEM_PIAL, ITEM_WHITE,
};
use shapebridge::rng::derive_seed;
use shapebridge::shape::{
    build_condition_set, load_condition_set, save_condition_set, ConditionSet,
};
use shapebridge::{ValueKind, VoxelGrid};

use crate::config::{prepare_output, ExperimentConfig};
use crate::{Common, UsageError};

pub const CHECKPOINT: &str = "checkpoint.sbck";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const EPOCH_LOG: &str = "epochs.csv";

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_dataset(dir: &Path) -> Result<DatasetManifest> {
    Ok(DatasetManifest::load(&dir.join(DATASET_MANIFEST))?)
}

fn parse_split(s: &str) -> Result<Split, String> {
    match s {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        _ => Err(format!("unknown split {s:?} (train, val, test)")),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

#[derive(Args, Debug)]
pub struct PhantomArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Number of phantoms (overrides the config).
    #[arg(long)]
    items: Option<usize>,
}

pub fn phantom(a: PhantomArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.items {
        cfg.dataset.items = n;
    }
    cfg.validate()?;
    prepare_output(&a.common.out, a.common.force)?;
    let m = generate_dataset(&cfg.phantom, cfg.dataset.items, cfg.seed, &a.common.out)?;
    cfg.write_resolved(&a.common.out)?;
    println!(
        "wrote {} phantoms ({} train, {} val, {} test) to {}",
        m.items.len(),
        m.split(Split::Train).count(),
        m.split(Split::Val).count(),
        m.split(Split::Test).count(),
        a.common.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct SdfArgs {
    /// Pial surface (OFF).
    #[arg(long)]
    pial: PathBuf,
    /// White surface (OFF).
    #[arg(long)]
    white: PathBuf,
    /// Voxels per axis.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Voxel spacing in mm.
    #[arg(long, default_value_t = 1.0)]
    spacing: f64,
    /// Lattice origin as x,y,z; centered on the world origin by default.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    origin: Option<Vec<f64>>,
    /// SDF truncation in mm; 4 voxels by default.
    #[arg(long)]
    d_max: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

pub fn sdf(a: SdfArgs) -> Result<()> {
    let geometry = match &a.origin {
        Some(o) => Geometry::new([a.size; 3], [a.spacing; 3], [o[0], o[1], o[2]])?,
        None => Geometry::centered_cube(a.size, a.spacing)?,
    };
    let d_max = a.d_max.unwrap_or(4.0 * a.spacing);
    let mesh_p = load_off(&a.pial).with_context(|| format!("loading {}", a.pial.display()))?;
    let mesh_w = load_off(&a.white).with_context(|| format!("loading {}", a.white.display()))?;
    let (s_c, cond) = build_condition_set(&mesh_p, &mesh_w, &geometry, d_max)?;
    prepare_output(&a.out, a.force)?;
    let manifest = save_condition_set(&a.out, &s_c, &cond)?;
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Phantom dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Continue from the checkpoint in the output directory.
    #[arg(long, conflicts_with = "force")]
    resume: bool,
    /// Total number of epochs (overrides the config).
    #[arg(long)]
    epochs: Option<usize>,
}

fn pairs(
    items: &[(shapebridge::phantom::ManifestItem, PhantomPair)],
) -> Result<Vec<shapebridge::nn::TrainingPair>> {
    Ok(items
        .iter()
        .map(|(_, p)| p.training_pair())
        .collect::<shapebridge::Result<_>>()?)
}

pub fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    let manifest = load_dataset(&a.data)?;
    if manifest.spec != cfg.phantom {
        log::warn!("dataset phantom spec differs from the config; using the dataset's");
        cfg.phantom = manifest.spec.clone();
    }
    let train = pairs(&manifest.load_split(&a.data, Split::Train)?)?;
    let val = pairs(&manifest.load_split(&a.data, Split::Val)?)?;
    let out = &a.common.out;
    let ck_path = out.join(CHECKPOINT);
    let diffusion = Diffusion::new(cfg.diffusion.process, cfg.diffusion.steps)?;
    let (mut model, mut state) = if a.resume {
        let ck = load_checkpoint_expecting(&ck_path, &cfg.model, cfg.diffusion.process)?;
        if ck.trainer != cfg.trainer || ck.schedule_steps != cfg.diffusion.steps {
            return Err(shapebridge::Error::ConfigMismatch(
                "checkpoint trainer or schedule differs from config".into(),
            )
            .into());
        }
        (ck.model, ck.state)
    } else {
        prepare_output(out, a.common.force)?;
        let model =
            DenoiserModel::<f32>::new(cfg.model.clone(), derive_seed(cfg.trainer.seed, 0x1417))?;
        let state = TrainerState::new(&model, &cfg.trainer);
        write_text(&out.join(EPOCH_LOG), "epoch,train_loss,val_loss,lr\n")?;
        (model, state)
    };
    cfg.write_resolved(out)?;
    let done = state.epoch as usize;
    if done >= cfg.train.epochs {
        println!("already trained for {done} epochs");
        return Ok(());
    }
    let process = cfg.diffusion.process;
    let steps = cfg.diffusion.steps;
    let trainer_cfg = cfg.trainer.clone();
    let model_snapshot = |model: &DenoiserModel<f32>, state: &TrainerState| -> Result<()> {
        let ck = Checkpoint {
            process,
            schedule_steps: steps,
            trainer: trainer_cfg.clone(),
            model: model.clone(),
            state: state.clone(),
        };
        let tmp = out.join(format!("{CHECKPOINT}.tmp"));
        save_checkpoint(&ck, &tmp)?;
        std::fs::rename(&tmp, &ck_path).with_context(|| format!("writing {}", ck_path.display()))
    };
    for _ in done..cfg.train.epochs {
        let mut report = None;
        train_epochs(
            &diffusion,
            &cfg.trainer,
            &mut model,
            &mut state,
            &train,
            &val,
            1,
            |r| {
                report = Some(r.clone());
                Ok(())
            },
        )?;
        let r = report.expect("one epoch ran");
        append_log(&out.join(TRAIN_LOG), &r.rows)?;
        let val_loss = r.val_loss.map_or(String::new(), |v| v.to_string());
        let line = format!("{},{},{},{}\n", r.epoch, r.train_loss, val_loss, r.lr);
        let mut f = std::fs::OpenOptions::new()
            .append(true)
            .open(out.join(EPOCH_LOG))
            .context("opening epoch log")?;
        std::io::Write::write_all(&mut f, line.as_bytes())?;
        println!(
            "epoch {:>3}  train {:.6}  val {}  lr {:.3e}",
            r.epoch,
            r.train_loss,
            r.val_loss.map_or("-".into(), |v| format!("{v:.6}")),
            r.lr
        );
        model_snapshot(&model, &state)?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    common: Common,
    /// Trained checkpoint; EMA weights are used unless --raw-weights.
    #[arg(long, required_unless_present = "oracle")]
    checkpoint: Option<PathBuf>,
    /// A single condition manifest.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    conditions: Option<PathBuf>,
    /// A phantom dataset; samples every item of --split.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Volumes per condition set.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling plan length.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    raw_weights: bool,
    /// Replace the network by the exact denoiser for this target image
    /// (single condition set only).
    #[arg(long, conflicts_with = "data")]
    oracle: Option<PathBuf>,
    /// SDF truncation in mm for condition grids stored in mm; 4 voxels by
    /// default.
    #[arg(long)]
    d_max: Option<f64>,
}

/// Denoiser that knows the answer: bridge residual `x_t - x_0`.
struct Oracle(VoxelGrid);

impl Denoiser for Oracle {
    fn predict(
        &self,
        x_t: &VoxelGrid,
        _: &ConditionSet,
        _: usize,
    ) -> shapebridge::Result<VoxelGrid> {
        x_t.sub(&self.0)
    }
}

pub fn sample_file(k: usize) -> String {
    format!("sample_{k:03}.cvg")
}

pub fn sample(a: SampleArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let ck = match &a.checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            cfg.diffusion.process = ck.process;
            cfg.diffusion.steps = ck.schedule_steps;
            cfg.model = ck.model.config().clone();
            Some(ck)
        }
        None => None,
    };
    let s = &mut cfg.sampling;
    if let Some(v) = a.n {
        s.samples = v;
    }
    if let Some(v) = a.seed {
        s.seed = v;
    }
    if let Some(v) = a.steps {
        s.steps = v;
    }
    if let Some(v) = a.eta {
        s.eta = v;
    }
    cfg.validate()?;
    let s = cfg.sampling.clone();
    let diffusion = Diffusion::new(cfg.diffusion.process, cfg.diffusion.steps)?;
    let model = match &ck {
        Some(ck) if a.raw_weights => Some(ck.model.clone()),
        Some(ck) => Some(ck.state.ema_model(&ck.model)?),
        None => None,
    };

    // (output dir, S_c, C, seed base) per condition set
    let mut jobs: Vec<(PathBuf, VoxelGrid, ConditionSet, u64)> = Vec::new();
    let out = a.common.out.clone();
    if let Some(manifest) = &a.conditions {
        let (s_c, cond) = load_condition_set(manifest)?;
        // Grids written by `sdf` hold millimetres; normalized ones record
        // their truncation as the header scale.
        let (s_c, cond) = if s_c.normalization().scale == 1.0 {
            let d_max = a.d_max.unwrap_or(4.0 * s_c.geometry().mean_spacing());
            normalize_conditions(&s_c, &cond, d_max)?
        } else {
            (s_c, cond)
        };
        jobs.push((out.clone(), s_c, cond, s.seed));
    } else {
        let data = a.data.as_ref().expect("clap requires conditions or data");
        let m = load_dataset(data)?;
        for (it, p) in m.load_split(data, a.split)? {
            let tp = p.training_pair()?;
            jobs.push((
                out.join(&it.id),
                tp.s_c,
                tp.cond,
                derive_seed(s.seed, it.seed),
            ));
        }
    }
    prepare_output(&out, a.common.force)?;
    for (dir, s_c, cond, base) in &jobs {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for k in 0..s.samples {
            let seed = derive_seed(*base, k as u64);
            let x = match (&a.oracle, &model) {
                (Some(target), _) => {
                    let x0 = normalize_intensity(&load_grid(target)?)?;
                    let bridge = BridgeSchedule::new(cfg.diffusion.steps)?;
                    let plan = SamplingPlan::uniform(cfg.diffusion.steps, s.steps, s.eta, seed)?;
                    bridge::sample(&bridge, &plan, s_c, cond, &Oracle(x0))?
                }
                (None, Some(model)) => {
                    diffusion.generate(model, s_c, cond, s.steps, s.eta, seed)?
                }
                (None, None) => unreachable!("clap requires a checkpoint without --oracle"),
            };
            let x = x
                .with_kind(ValueKind::Intensity)
                .with_normalization(shapebridge::phantom::INTENSITY_NORMALIZATION);
            save_grid(&x, dir.join(sample_file(k)))?;
        }
    }
    cfg.write_resolved(&out)?;
    println!(
        "wrote {} volumes for {} condition sets",
        jobs.len() * s.samples,
        jobs.len()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// Phantom dataset holding the reference surfaces.
    #[arg(long)]
    data: PathBuf,
    /// Directory with one sub-directory of predictions per item.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long, default_value = "test", value_parser = parse_split)]
    split: Split,
    /// Evaluate predicted meshes (white.off, pial.off) instead of volumes.
    #[arg(long)]
    meshes: bool,
    /// Volume file inside each prediction directory.
    #[arg(long, default_value = "sample_000.cvg")]
    volume: String,
    /// Surface points per mesh for ASSD.
    #[arg(long)]
    points: Option<usize>,
    /// Also write variability maps from all sample_*.cvg files per item.
    #[arg(long)]
    variability: bool,
}

fn sample_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("sample_") && n.ends_with(".cvg"))
        })
        .collect();
    v.sort();
    Ok(v)
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    if let Some(p) = a.points {
        cfg.eval.points = p;
    }
    cfg.validate()?;
    let m = load_dataset(&a.data)?;
    let items = m.load_split(&a.data, a.split)?;
    let needed: Vec<&str> = if a.meshes {
        vec![ITEM_WHITE, ITEM_PIAL]
    } else {
        vec![a.volume.as_str()]
    };
    let predicted: BTreeSet<String> = std::fs::read_dir(&a.pred)
        .with_context(|| format!("reading {}", a.pred.display()))?
        .filter_map(|e| e.ok())
        .filter(|e| needed.iter().all(|f| e.path().join(f).is_file()))
        .filter_map(|e| e.file_name().to_str().map(String::from))
        .collect();
    let expected: BTreeSet<String> = items.iter().map(|(it, _)| it.id.clone()).collect();
    if predicted != expected {
        return Err(shapebridge::Error::InvalidArgument(format!(
            "count mismatch: {} predictions for {} reference items (missing: {:?}, unexpected: {:?})",
            predicted.len(),
            expected.len(),
            expected.difference(&predicted).collect::<Vec<_>>(),
            predicted.difference(&expected).collect::<Vec<_>>()
        ))
        .into());
    }
    prepare_output(&a.common.out, a.common.force)?;
    let n = cfg.eval.points;
    let mut report = MetricReport::default();
    let mut var_rows = String::from("id,samples,variance_skull,variance_ribbon,mean_abs_diff\n");
    for (it, phantom) in &items {
        let dir = a.pred.join(&it.id);
        let seed = derive_seed(cfg.eval.seed, it.seed);
        let record = if a.meshes {
            let w = load_off(dir.join(ITEM_WHITE))?;
            let p = load_off(dir.join(ITEM_PIAL))?;
            MetricRecord {
                id: it.id.clone(),
                assd_white: assd(&w, &phantom.mesh_w, n, derive_seed(seed, 0))?,
                assd_pial: assd(&p, &phantom.mesh_p, n, derive_seed(seed, 1))?,
                psnr: None,
                ssim: None,
                thickness: Some(cortical_thickness(&w, &p)?.mean),
            }
        } else {
            let x = load_grid(dir.join(&a.volume))?;
            let x = if x.normalization() == shapebridge::phantom::INTENSITY_NORMALIZATION {
                x
            } else {
                normalize_intensity(&x)?
            };
            evaluate_item(&it.id, &x, phantom, n, seed)?
        };
        report.records.push(record);
        if a.variability {
            let files = sample_files(&dir)?;
            if files.len() >= 2 {
                let samples = files
                    .iter()
                    .map(load_grid)
                    .collect::<shapebridge::Result<Vec<_>>>()?;
                let reference = normalize_intensity(&phantom.image)?;
                let maps = variability_maps(&samples, &reference)?;
                let item_out = a.common.out.join(&it.id);
                std::fs::create_dir_all(&item_out)?;
                for axis in 0..3 {
                    write_pgm(
                        &axis_projection(&maps.variance, axis)?,
                        &item_out.join(format!("variance_axis{axis}.pgm")),
                    )?;
                    write_pgm(
                        &axis_projection(&maps.mean_abs_diff, axis)?,
                        &item_out.join(format!("absdiff_axis{axis}.pgm")),
                    )?;
                }
                var_rows.push_str(&format!(
                    "{},{},{},{},{}\n",
                    it.id,
                    samples.len(),
                    masked_mean(&maps.variance, &phantom.skull)?,
                    masked_mean(&maps.variance, &phantom.cond.ribbon)?,
                    maps.mean_abs_diff.mean()
                ));
            }
        }
    }
    report.save(
        &a.common.out.join("metrics.csv"),
        &a.common.out.join("metrics.json"),
    )?;
    if a.variability {
        write_text(&a.common.out.join("variability.csv"), &var_rows)?;
    }
    cfg.write_resolved(&a.common.out)?;
    for (name, s) in report.aggregate() {
        if let Some(s) = s {
            println!("{name:<11} {:.4} ± {:.4} (n = {})", s.mean, s.sd, s.n);
        }
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct AtrophyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Item id inside the dataset.
    #[arg(long)]
    item: String,
    /// Inward pial offsets in mm, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    offsets: Vec<f64>,
    /// Sampling seeds per offset.
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    raw_weights: bool,
}

pub fn atrophy(a: AtrophyArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(a.common.config.as_deref())?;
    let ck = load_checkpoint(&a.checkpoint)?;
    cfg.diffusion.process = ck.process;
    cfg.diffusion.steps = ck.schedule_steps;
    cfg.model = ck.model.config().clone();
    if let Some(v) = a.steps {
        cfg.sampling.steps = v;
    }
    if let Some(v) = a.eta {
        cfg.sampling.eta = v;
    }
    if let Some(v) = a.seed {
        cfg.sampling.seed = v;
    }
    cfg.validate()?;
    if a.seeds < 2 {
        bail!(usage("--seeds must be >= 2 to measure the noise floor"));
    }
    let m = load_dataset(&a.data)?;
    let it = m
        .items
        .iter()
        .find(|i| i.id == a.item)
        .ok_or_else(|| usage(format!("item {:?} not in dataset", a.item)))?;
    let phantom = shapebridge::phantom::load_phantom(&a.data.join(&it.id), &m.spec, it.seed)?;
    let model = if a.raw_weights {
        ck.model.clone()
    } else {
        ck.state.ema_model(&ck.model)?
    };
    let diffusion = Diffusion::new(ck.process, ck.schedule_steps)?;
    let s = cfg.sampling.clone();
    let generate = |s_c: &VoxelGrid, cond: &ConditionSet, seed: u64| {
        diffusion.generate(&model, s_c, cond, s.steps, s.eta, seed)
    };
    let base = derive_seed(s.seed, it.seed);
    let config = AtrophyConfig {
        offsets: a.offsets.clone(),
        seeds: (0..a.seeds as u64).map(|k| derive_seed(base, k)).collect(),
        baseline_seeds: (0..a.seeds as u64)
            .map(|k| derive_seed(base ^ 0xBA5E, k))
            .collect(),
        min_gap: 0.1 * m.spec.spacing,
    };
    let table = atrophy_experiment(&generate, &phantom, &config)?;
    prepare_output(&a.common.out, a.common.force)?;
    write_text(&a.common.out.join("atrophy.csv"), &table.to_csv())?;
    write_text(
        &a.common.out.join("atrophy.json"),
        &(serde_json::to_string_pretty(&table)? + "\n"),
    )?;
    cfg.write_resolved(&a.common.out)?;
    print!("{}", table.to_csv());
    println!(
        "noise floor {:.4} mm, pearson {:?}",
        table.noise_floor,
        table.pearson()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    /// Number of diffusion steps T.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn schedule_dump(a: ScheduleArgs) -> Result<()> {
    let table = BridgeSchedule::new(a.steps)?.dump();
    match &a.out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)
                    .with_context(|| format!("creating {}", dir.display()))?;
            }
            write_text(p, &table)
        }
        None => {
            print!("{table}");
            Ok(())
        }
    }
}
