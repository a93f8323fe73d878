//! Subcommand entry points: synthetic-data generation, training
//! (unsupervised or proxy-supervised), evaluation, gradient checking, the
//! Horn-Schunck baseline, and architecture dumps. The thin binary in
//! `main.rs` only parses arguments and maps errors to exit codes.

use crate::baseline::{
    hs_stereo, make_proxy_labels, ProxyEngine, ProxyLabel, ProxyOptions,
};
use crate::checkpoint::Checkpoint;
use crate::config::{file_hash, RunConfig, TrainingMode};
use crate::data::{
    generate_synthetic_pair, load_dataset, write_dataset, write_f32_raster, write_u8_raster,
    SceneFamily, StereoSample, SyntheticSceneSpec,
};
use crate::error::{Error, Result};
use crate::gradcheck::{composite_network_check, primitive_suite, CheckConfig, CheckOutcome};
use crate::metrics::{
    evaluation_protocol, inverse_depth_image, save_heatmap_png, MetricsReport,
};
use crate::net::Network;
use crate::train::{
    finetune_with_augmentation, run_training, EpochRecord, Objective, StageSchedule, TrainState,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

/// Synthetic dataset description consumed by the synth subcommand: either an
/// explicit scene list, a random family, or both.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub seed: u64,
    pub family: Option<FamilySection>,
    pub scene: Vec<SyntheticSceneSpec>,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 7,
            family: None,
            scene: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilySection {
    #[serde(flatten)]
    pub family: SceneFamily,
    pub count: usize,
    #[serde(default = "default_prefix")]
    pub prefix: String,
}

fn default_prefix() -> String {
    "scene".into()
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Generates a dataset from a spec file. Returns (sample count, disparity
/// range) for the summary line.
pub fn cmd_synth(spec_path: &Path, output: &Path) -> Result<(usize, [f64; 2])> {
    let text = fs::read_to_string(spec_path)
        .map_err(|e| Error::io(spec_path.display().to_string(), e))?;
    let spec: SynthSpec = toml::from_str(&text)
        .map_err(|e| Error::Format(format!("{}: {e}", spec_path.display())))?;
    let mut samples: Vec<StereoSample<f32>> = Vec::new();
    for scene in &spec.scene {
        scene.validate()?;
        samples.push(generate_synthetic_pair(scene)?);
    }
    if let Some(f) = &spec.family {
        samples.extend(f.family.generate::<f32>(f.count, &f.prefix, spec.seed)?);
    }
    if samples.is_empty() {
        return Err(Error::Config(format!(
            "{}: spec declares no scenes",
            spec_path.display()
        )));
    }
    ensure_dir(output)?;
    write_dataset(output, &samples, &file_hash(spec_path)?)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &samples {
        if let Some(gt) = &s.gt_disparity {
            for &v in gt.data() {
                lo = lo.min(v as f64);
                hi = hi.max(v as f64);
            }
        }
    }
    Ok((samples.len(), [lo, hi]))
}

/// Loads the configured dataset (from disk or generated from the family).
/// Returns (train set, held-out set).
pub fn load_configured_data(
    cfg: &RunConfig,
) -> Result<(Vec<StereoSample<f32>>, Vec<StereoSample<f32>>)> {
    match (&cfg.data.dataset_dir, &cfg.data.family) {
        (Some(dir), _) => {
            let all = load_dataset::<f32>(dir)?;
            let holdout = cfg.data.holdout_count.min(all.len().saturating_sub(1));
            let split = all.len() - holdout;
            let mut all = all;
            let held = all.split_off(split);
            Ok((all, held))
        }
        (None, Some(family)) => {
            let train = family.generate(cfg.data.train_count, "train", cfg.seed ^ 0x5eed)?;
            let held = family.generate(cfg.data.holdout_count, "holdout", cfg.seed ^ 0x601d)?;
            Ok((train, held))
        }
        (None, None) => Err(Error::Config("no data source configured".into())),
    }
}

pub struct TrainOutputs {
    pub checkpoint: PathBuf,
    pub history: Vec<EpochRecord>,
    pub train_metrics: Option<MetricsReport>,
    pub holdout_metrics: Option<MetricsReport>,
}

struct CsvSink {
    file: fs::File,
}

impl CsvSink {
    fn create(path: &Path) -> Result<Self> {
        let mut file =
            fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        writeln!(file, "epoch,stage,lr,recons,smooth,total")
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(CsvSink { file })
    }

    fn append(&mut self, r: &EpochRecord) -> Result<()> {
        writeln!(
            self.file,
            "{},{},{},{},{},{}",
            r.epoch, r.stage, r.lr, r.recons, r.smooth, r.total
        )
        .map_err(|e| Error::io("loss csv", e))
    }
}

/// Full training run: resolves the config, writes it next to the outputs,
/// trains the stage schedule (plus optional augmented fine-tune),
/// checkpoints periodically, and evaluates train/holdout sets when ground
/// truth is available.
pub fn cmd_train(cfg: RunConfig, resume: Option<&Path>) -> Result<TrainOutputs> {
    let cfg = cfg.resolved()?;
    ensure_dir(&cfg.output_dir)?;
    cfg.save(&cfg.output_dir.join("resolved.toml"))?;
    let hash = cfg.hash()?;
    configure_threads(cfg.threads);

    let (train_set, holdout_set) = load_configured_data(&cfg)?;
    let net_cfg = cfg.network.clone().expect("resolved");

    let (mut net, mut state) = match resume {
        Some(path) => {
            let ckpt = Checkpoint::<f32>::load(path)?;
            if ckpt.config_hash != hash {
                return Err(Error::Config(format!(
                    "checkpoint {} was produced by a different config (hash mismatch)",
                    path.display()
                )));
            }
            ckpt.restore()?
        }
        None => {
            let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            init_rng.set_stream(1);
            let net = Network::<f32>::build(net_cfg.clone(), &mut init_rng)?;
            let mut train_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            train_rng.set_stream(2);
            (net, TrainState::new(train_rng))
        }
    };

    let schedule = StageSchedule::for_network(
        &net_cfg,
        &cfg.optimizer,
        cfg.schedule.coarse_epochs,
        cfg.schedule.fine_epochs,
    );

    let objective = match cfg.mode {
        TrainingMode::Unsupervised => Objective::Unsupervised {
            gamma: cfg.geometry.gamma,
        },
        TrainingMode::ProxyHs => {
            let opts = ProxyOptions {
                engine: ProxyEngine::Hs(cfg.baseline),
                inject_holes: cfg.proxy.inject_holes,
                consistency_px: cfg.proxy.consistency_px,
            };
            let labels = make_proxy_labels(&train_set, &opts)?;
            write_proxy_labels(&cfg.output_dir.join("proxy_labels"), &train_set, &labels)?;
            Objective::ProxyDisparity { labels }
        }
    };

    let mut csv = CsvSink::create(&cfg.output_dir.join("loss.csv"))?;
    // replay already-completed history into the csv on resume
    for r in &state.history {
        csv.append(r)?;
    }
    let ckpt_dir = cfg.output_dir.clone();
    let every = cfg.schedule.checkpoint_every.max(1);
    let hash_for_hook = hash.clone();
    let mut hook = |net: &Network<f32>, state: &TrainState<f32>, r: &EpochRecord| -> Result<()> {
        csv.append(r)?;
        if r.epoch % every == 0 {
            Checkpoint::capture(net, state, &hash_for_hook)
                .save(&ckpt_dir.join("checkpoint_latest.ckpt"))?;
        }
        Ok(())
    };

    run_training(
        &mut net,
        &train_set,
        &objective,
        &schedule,
        &cfg.optimizer,
        &mut state,
        Some(&mut hook),
    )?;
    if cfg.schedule.finetune_epochs > 0 {
        finetune_with_augmentation(
            &mut net,
            &train_set,
            cfg.geometry.gamma,
            cfg.schedule.finetune_epochs,
            &cfg.optimizer,
            &mut state,
            Some(&mut hook),
        )?;
    }
    drop(hook);

    let final_path = cfg.output_dir.join("checkpoint_final.ckpt");
    Checkpoint::capture(&net, &state, &hash).save(&final_path)?;

    let clamp = (cfg.geometry.clamp[0], cfg.geometry.clamp[1]);
    let train_metrics = mean_metrics(&net, &train_set, clamp)?;
    let holdout_metrics = mean_metrics(&net, &holdout_set, clamp)?;
    let mut report = String::new();
    if let Some(m) = &train_metrics {
        report.push_str("[train]\n");
        report.push_str(&m.kv_text());
    }
    if let Some(m) = &holdout_metrics {
        report.push_str("[holdout]\n");
        report.push_str(&m.kv_text());
    }
    if !report.is_empty() {
        fs::write(cfg.output_dir.join("metrics.txt"), &report)
            .map_err(|e| Error::io("metrics.txt", e))?;
    }
    write_visuals(&cfg.output_dir, &net, &train_set, clamp)?;

    Ok(TrainOutputs {
        checkpoint: final_path,
        history: state.history,
        train_metrics,
        holdout_metrics,
    })
}

/// Mean of the full evaluation protocol over samples with ground truth.
fn mean_metrics(
    net: &Network<f32>,
    samples: &[StereoSample<f32>],
    clamp: (f64, f64),
) -> Result<Option<MetricsReport>> {
    let mut reports = Vec::new();
    for s in samples {
        if s.gt_disparity.is_none() {
            continue;
        }
        let d = net.forward(&s.left)?;
        reports.push(evaluation_protocol(&d, s, None, clamp)?);
    }
    if reports.is_empty() {
        return Ok(None);
    }
    let n = reports.len() as f64;
    Ok(Some(MetricsReport {
        rms: reports.iter().map(|r| r.rms).sum::<f64>() / n,
        log_rms: reports.iter().map(|r| r.log_rms).sum::<f64>() / n,
        abs_rel: reports.iter().map(|r| r.abs_rel).sum::<f64>() / n,
        sq_rel: reports.iter().map(|r| r.sq_rel).sum::<f64>() / n,
        acc_1: reports.iter().map(|r| r.acc_1).sum::<f64>() / n,
        acc_2: reports.iter().map(|r| r.acc_2).sum::<f64>() / n,
        acc_3: reports.iter().map(|r| r.acc_3).sum::<f64>() / n,
        n_pixels: reports.iter().map(|r| r.n_pixels).sum(),
    }))
}

fn write_proxy_labels(
    dir: &Path,
    samples: &[StereoSample<f32>],
    labels: &[ProxyLabel<f32>],
) -> Result<()> {
    ensure_dir(dir)?;
    let mut manifest = String::from("# id, disparity raster, validity raster\n");
    for (s, l) in samples.iter().zip(labels) {
        let dpath = dir.join(format!("{}_proxy.f32", s.id));
        let vpath = dir.join(format!("{}_valid.u8", s.id));
        write_f32_raster(&dpath, &l.disparity)?;
        write_u8_raster(&vpath, &l.valid)?;
        manifest.push_str(&format!(
            "{}, {}_proxy.f32, {}_valid.u8\n",
            s.id, s.id, s.id
        ));
    }
    fs::write(dir.join("labels.txt"), manifest).map_err(|e| Error::io("labels.txt", e))
}

/// Inverse-depth visualizations (scaled to [0,1]) for the first samples.
fn write_visuals(
    dir: &Path,
    net: &Network<f32>,
    samples: &[StereoSample<f32>],
    clamp: (f64, f64),
) -> Result<()> {
    let vis_dir = dir.join("visuals");
    ensure_dir(&vis_dir)?;
    for s in samples.iter().take(4) {
        let d = net.forward(&s.left)?;
        let up = crate::data::resize_disparity(
            d.values(),
            s.resolution()[0],
            s.resolution()[1],
        )?;
        let depth = crate::geometry::disparity_to_depth(
            &crate::geometry::DisparityMap::new(up)?,
            &s.calibration,
            clamp,
        )?;
        let inv = inverse_depth_image(&depth)?;
        // write as a grayscale PGM in [0,1] -> bytes
        let (h, w) = (inv.shape()[0], inv.shape()[1]);
        let img = crate::tensor::Tensor::from_vec_unchecked(
            &[1, h, w],
            inv.data().iter().map(|&v| v - 0.5).collect(),
        );
        crate::data::save_image(&vis_dir.join(format!("{}_invdepth.pgm", s.id)), &img)?;
    }
    Ok(())
}

/// Evaluates a checkpoint over a dataset: per-sample rows plus a mean row
/// appended to `results.csv`, key=value text, and error heat maps.
pub fn cmd_eval(
    checkpoint: &Path,
    dataset_dir: &Path,
    output: &Path,
    clamp: (f64, f64),
    crop: Option<[usize; 4]>,
    expected_hash: Option<&str>,
    allow_hash_mismatch: bool,
) -> Result<(MetricsReport, PathBuf)> {
    let ckpt = Checkpoint::<f32>::load(checkpoint)?;
    if let Some(h) = expected_hash {
        if ckpt.config_hash != h {
            if allow_hash_mismatch {
                eprintln!(
                    "warning: checkpoint config hash {} differs from expected {h}",
                    ckpt.config_hash
                );
            } else {
                return Err(Error::Config(
                    "checkpoint config hash mismatch (pass --allow-hash-mismatch to proceed)"
                        .into(),
                ));
            }
        }
    }
    let (net, _) = ckpt.restore()?;
    let samples = load_dataset::<f32>(dataset_dir)?;
    ensure_dir(output)?;

    let csv_path = output.join("results.csv");
    let mut csv = String::from(MetricsReport::CSV_HEADER);
    csv.insert_str(0, "id,");
    csv.push('\n');
    let mut reports = Vec::new();
    for s in &samples {
        if s.gt_disparity.is_none() {
            continue;
        }
        let d = net.forward(&s.left)?;
        let m = evaluation_protocol(&d, s, crop, clamp)?;
        csv.push_str(&format!("{},{}\n", s.id, m.csv_row()));
        reports.push((s.id.clone(), m));
    }
    if reports.is_empty() {
        return Err(Error::Eval("dataset has no ground truth to evaluate".into()));
    }
    let n = reports.len() as f64;
    let mean = MetricsReport {
        rms: reports.iter().map(|(_, r)| r.rms).sum::<f64>() / n,
        log_rms: reports.iter().map(|(_, r)| r.log_rms).sum::<f64>() / n,
        abs_rel: reports.iter().map(|(_, r)| r.abs_rel).sum::<f64>() / n,
        sq_rel: reports.iter().map(|(_, r)| r.sq_rel).sum::<f64>() / n,
        acc_1: reports.iter().map(|(_, r)| r.acc_1).sum::<f64>() / n,
        acc_2: reports.iter().map(|(_, r)| r.acc_2).sum::<f64>() / n,
        acc_3: reports.iter().map(|(_, r)| r.acc_3).sum::<f64>() / n,
        n_pixels: reports.iter().map(|(_, r)| r.n_pixels).sum(),
    };
    csv.push_str(&format!("mean,{}\n", mean.csv_row()));
    fs::write(&csv_path, csv).map_err(|e| Error::io(csv_path.display().to_string(), e))?;
    fs::write(output.join("metrics.txt"), mean.kv_text())
        .map_err(|e| Error::io("metrics.txt", e))?;

    // heat maps for the first few samples
    for s in samples.iter().take(4) {
        let Some(gt) = &s.gt_disparity else { continue };
        let d = net.forward(&s.left)?;
        let [h, w] = s.resolution();
        let up = crate::data::resize_disparity(d.values(), h, w)?;
        let pred_depth = crate::geometry::disparity_to_depth(
            &crate::geometry::DisparityMap::new(up)?,
            &s.calibration,
            clamp,
        )?;
        let fb = s.calibration.fb() as f32;
        let gt_depth = crate::geometry::DepthMap::new(
            gt.map(|v| if v > 0.0 { fb / v } else { clamp.1 as f32 }),
        )?;
        let heat = crate::metrics::error_heatmap(&pred_depth, &gt_depth)?;
        save_heatmap_png(&output.join(format!("{}_error.png", s.id)), &heat)?;
    }
    Ok((mean, csv_path))
}

/// Finite-difference validation of every primitive plus the end-to-end
/// composite. Returns the outcomes; `all passed` decides the exit code.
pub fn cmd_gradcheck(seed: u64, output: Option<&Path>) -> Result<(Vec<CheckOutcome>, bool)> {
    let cfg = CheckConfig::default();
    let mut outcomes = primitive_suite(seed, &cfg)?;
    let composite_cfg = CheckConfig {
        tolerance: 1e-3,
        ..cfg
    };
    outcomes.push(composite_network_check(3, seed, &composite_cfg)?);
    let passed = outcomes.iter().all(|o| o.passed);
    if let Some(dir) = output {
        ensure_dir(dir)?;
        let mut text = String::new();
        for o in &outcomes {
            text.push_str(&o.summary_line());
            text.push('\n');
        }
        text.push_str(if passed { "ALL PASS\n" } else { "FAILURES\n" });
        fs::write(dir.join("gradcheck.txt"), text)
            .map_err(|e| Error::io("gradcheck.txt", e))?;
    }
    Ok((outcomes, passed))
}

/// Horn-Schunck stereo over a dataset: disparity rasters plus a metrics row
/// per sample (when ground truth exists).
pub fn cmd_baseline(
    dataset_dir: &Path,
    output: &Path,
    cfg: &RunConfig,
) -> Result<Option<MetricsReport>> {
    let samples = load_dataset::<f32>(dataset_dir)?;
    ensure_dir(output)?;
    let clamp = (cfg.geometry.clamp[0], cfg.geometry.clamp[1]);
    let mut reports = Vec::new();
    let mut csv = format!("id,{}\n", MetricsReport::CSV_HEADER);
    for s in &samples {
        let d = hs_stereo(s, &cfg.baseline)?;
        write_f32_raster(&output.join(format!("{}_hs.f32", s.id)), d.values())?;
        if s.gt_disparity.is_some() {
            let m = evaluation_protocol(&d, s, None, clamp)?;
            csv.push_str(&format!("{},{}\n", s.id, m.csv_row()));
            reports.push(m);
        }
    }
    let mean = if reports.is_empty() {
        None
    } else {
        let n = reports.len() as f64;
        let mean = MetricsReport {
            rms: reports.iter().map(|r| r.rms).sum::<f64>() / n,
            log_rms: reports.iter().map(|r| r.log_rms).sum::<f64>() / n,
            abs_rel: reports.iter().map(|r| r.abs_rel).sum::<f64>() / n,
            sq_rel: reports.iter().map(|r| r.sq_rel).sum::<f64>() / n,
            acc_1: reports.iter().map(|r| r.acc_1).sum::<f64>() / n,
            acc_2: reports.iter().map(|r| r.acc_2).sum::<f64>() / n,
            acc_3: reports.iter().map(|r| r.acc_3).sum::<f64>() / n,
            n_pixels: reports.iter().map(|r| r.n_pixels).sum(),
        };
        csv.push_str(&format!("mean,{}\n", mean.csv_row()));
        Some(mean)
    };
    fs::write(output.join("hs_results.csv"), csv)
        .map_err(|e| Error::io("hs_results.csv", e))?;
    Ok(mean)
}

/// One line per declared layer: id, kind, output shape, parameter count.
pub fn cmd_dump_arch(cfg: &RunConfig) -> Result<String> {
    let cfg = cfg.clone().resolved()?;
    let net_cfg = cfg.network.as_ref().expect("resolved");
    let reports = net_cfg.audit()?;
    let mut out = format!(
        "input {}x{}x{}\n",
        net_cfg.input_channels, net_cfg.input_size[0], net_cfg.input_size[1]
    );
    for r in &reports {
        out.push_str(&format!(
            "{:<10} {:<10} out {}x{}x{}  params {}\n",
            r.id,
            format!("{:?}", r.kind),
            r.output[0],
            r.output[1],
            r.output[2],
            r.param_count
        ));
    }
    let total: usize = reports.iter().map(|r| r.param_count).sum();
    out.push_str(&format!("total params {total}\n"));
    Ok(out)
}

/// Sizes the rayon pool; silently keeps the default when already set.
pub fn configure_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}
