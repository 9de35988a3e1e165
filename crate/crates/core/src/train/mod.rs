//! Orchestration: the training loop wiring schedulers, objective and
//! optimizers together, run logging, checkpointing, latent-traversal export,
//! and the evaluation entry point.
//!
//! Reproducibility model: every stochastic stream is derived from the config
//! seed and the iteration index (per-epoch shuffles, per-iteration noise), so
//! (config, seed) fully determines the run and a checkpoint resume continues
//! bit-identically without serializing generator state.

mod config;

pub use config::{
    parse_config, profile_btcvae_paper, profile_by_name, CliOverrides, ModelChoice,
    OptimizerSettings, PlateauSettings, ReconSettings, ScheduleSettings, TrainConfig,
};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, EpochAccumulator, ParamGroup};
use crate::data::{FactorBatch, FactorDataset};
use crate::error::{Error, Result};
use crate::loss::{Objective, StepContext, TermName};
use crate::metrics::{evaluate_all, MetricReport, Representation};
use crate::nn::{build_model, AdamState, Network};
use crate::pgm::{tile_grid, GrayImage};
use crate::prob::LatentPosterior;
use crate::rng::{derive_seed, derive_seed_indexed, DetRng};
use crate::schedule::{CapacitySchedule, PlateauLr, ReconWeightSchedule};
use crate::tensor::{no_grad, Tensor};

/// One RunLog record. Serialized order is fixed, so identical runs produce
/// byte-identical JSONL lines. Wall-clock timings go to a separate sidecar
/// file to keep the RunLog deterministic.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogRecord {
    pub iter: u64,
    pub total: f64,
    pub recon: f64,
    pub lr: f64,
    pub capacity: f64,
    pub recon_weight: f64,
    /// Mean objective of the most recently completed epoch.
    pub epoch_mean: Option<f64>,
    pub terms: BTreeMap<String, f64>,
    pub info: BTreeMap<String, f64>,
}

#[derive(Debug)]
pub struct RunSummary {
    pub final_checkpoint: PathBuf,
    pub iters_run: u64,
    pub last_record: Option<LogRecord>,
}

fn condition_dim_for(cfg: &TrainConfig, ds: &FactorDataset) -> Result<usize> {
    let spec = cfg.objective_spec()?;
    if !spec.has(TermName::Cvae) {
        return Ok(0);
    }
    let k = ds
        .space()
        .names
        .iter()
        .position(|n| *n == cfg.terms.cvae.condition)
        .ok_or_else(|| Error::config(format!("unknown condition factor '{}'", cfg.terms.cvae.condition)))?;
    Ok(ds.space().cardinalities[k])
}

struct LogSink {
    jsonl: std::fs::File,
    csv: std::fs::File,
    timing: std::fs::File,
    csv_columns: Option<Vec<String>>,
}

impl LogSink {
    fn create(dir: &Path) -> Result<Self> {
        Ok(LogSink {
            jsonl: std::fs::File::create(dir.join("train.jsonl"))?,
            csv: std::fs::File::create(dir.join("train.csv"))?,
            timing: std::fs::File::create(dir.join("timing.log"))?,
            csv_columns: None,
        })
    }

    fn write(&mut self, record: &LogRecord, wall_ms: f64) -> Result<()> {
        serde_json::to_writer(&mut self.jsonl, record)?;
        self.jsonl.write_all(b"\n")?;

        if self.csv_columns.is_none() {
            let mut cols = vec![
                "iter".to_string(),
                "total".to_string(),
                "recon".to_string(),
                "lr".to_string(),
                "capacity".to_string(),
                "recon_weight".to_string(),
                "epoch_mean".to_string(),
            ];
            cols.extend(record.terms.keys().map(|k| format!("term.{k}")));
            cols.extend(record.info.keys().map(|k| format!("info.{k}")));
            writeln!(self.csv, "{}", cols.join(","))?;
            self.csv_columns = Some(cols);
        }
        let mut row = vec![
            record.iter.to_string(),
            record.total.to_string(),
            record.recon.to_string(),
            record.lr.to_string(),
            record.capacity.to_string(),
            record.recon_weight.to_string(),
            record.epoch_mean.map(|m| m.to_string()).unwrap_or_default(),
        ];
        row.extend(record.terms.values().map(|v| v.to_string()));
        row.extend(record.info.values().map(|v| v.to_string()));
        writeln!(self.csv, "{}", row.join(","))?;

        writeln!(self.timing, "{} {:.3}", record.iter, wall_ms)?;
        Ok(())
    }
}

/// Train per the config; optionally resume from a checkpoint. Returns the
/// final checkpoint path.
pub fn run(cfg: &TrainConfig, resume: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let ds = cfg.dataset()?;
    let objective_spec = cfg.objective_spec()?;
    let condition_dim = condition_dim_for(cfg, &ds)?;
    let model_spec = cfg.model.resolve(condition_dim)?;

    let net: Network<f64> = build_model(&model_spec, cfg.seed)?;
    let mut objective: Objective<f64> =
        Objective::new(objective_spec, &ds, model_spec.latent_dim, cfg.seed)?;
    let params = net.named_parameters();
    let mut adam = AdamState::new(
        &params,
        cfg.optimizer.lr,
        cfg.optimizer.beta1,
        cfg.optimizer.beta2,
        cfg.optimizer.eps,
    );
    let mut plateau = PlateauLr::new(
        cfg.optimizer.lr,
        cfg.schedules.plateau.factor,
        cfg.schedules.plateau.patience,
        cfg.schedules.plateau.threshold,
        cfg.schedules.plateau.min_lr,
    );
    let mut epoch_acc = EpochAccumulator { sum: 0.0, count: 0, last_mean: None };
    let mut start_iter = 0u64;

    if let Some(path) = resume {
        let loaded = checkpoint::load(path)?;
        check_resume_compat(cfg, &loaded.header.config)?;
        loaded.restore_group("model", &params, &mut adam)?;
        for (group, state, group_params) in objective.aux_adam_states() {
            loaded.restore_group(&group, &group_params, state)?;
        }
        plateau = loaded.header.plateau.clone();
        epoch_acc = loaded.header.epoch_acc.clone();
        start_iter = loaded.header.step;
    }

    let out_dir = PathBuf::from(&cfg.output_dir);
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(
        out_dir.join("config.resolved.json"),
        serde_json::to_string_pretty(cfg)?,
    )?;
    let mut sink = LogSink::create(&out_dir)?;

    let capacity_sched = cfg.schedules.capacity.clone().unwrap_or(CapacitySchedule {
        c_start: 0.0,
        c_max: 0.0,
        ramp_iters: 1,
    });
    let recon_sched = cfg
        .schedules
        .recon_weight
        .clone()
        .unwrap_or(ReconWeightSchedule::constant(1.0));

    let bpe = ds.batches_per_epoch(cfg.batch_size);
    let condition_factor = objective.condition_factor();
    let label_factor = objective.label_factor();

    let save_ckpt = |path: &Path,
                     step: u64,
                     adam: &AdamState<f64>,
                     objective: &Objective<f64>,
                     plateau: &PlateauLr,
                     epoch_acc: &EpochAccumulator|
     -> Result<()> {
        let mut groups = vec![ParamGroup {
            name: "model".to_string(),
            params: params.clone(),
            adam,
        }];
        for (name, state, ps) in objective.aux_adams() {
            groups.push(ParamGroup { name, params: ps, adam: state });
        }
        checkpoint::save(path, cfg, step, &groups, plateau, epoch_acc.clone())
    };

    let mut epoch_iter: Option<crate::data::EpochIter<'_>> = None;
    let mut last_record = None;
    let overall_start = std::time::Instant::now();
    let mut last_wall = overall_start.elapsed().as_secs_f64();

    for iter in start_iter..cfg.max_iters {
        let epoch = iter / bpe;
        let idx_in_epoch = iter % bpe;
        if epoch_iter.is_none() || idx_in_epoch == 0 {
            let mut it = ds.epoch_batches(
                cfg.batch_size,
                derive_seed_indexed(cfg.seed, "epoch", epoch),
            );
            it.skip_batches(idx_in_epoch as usize);
            epoch_iter = Some(it);
        }
        let batch = match cfg.overfit_index {
            Some(index) => {
                let _ = epoch_iter.as_mut().unwrap().next();
                let row = ds.space().index_to_factors(index);
                ds.batch(&vec![row; cfg.batch_size])?
            }
            None => epoch_iter.as_mut().unwrap().next().expect("batch within epoch"),
        };

        let mut rng = DetRng::seed_from(derive_seed_indexed(cfg.seed, "iter", iter));
        let condition = condition_factor.map(|k| ds.one_hot_factor(&batch, k));
        let targets: Option<Vec<usize>> =
            label_factor.map(|k| (0..batch.batch).map(|i| batch.factor_row(i)[k]).collect());

        let (mu, logvar) = net.encode(&batch.images, condition.as_ref())?;
        let post = LatentPosterior::sample(mu, logvar, &mut rng);
        let x_hat = net.decode(&post.z, condition.as_ref())?;

        let capacity = capacity_sched.at(iter);
        let recon_weight = recon_sched.at(iter);
        let ctx = StepContext {
            x: &batch.images,
            x_hat: &x_hat,
            post: &post,
            targets: targets.as_deref(),
            capacity,
            recon_weight,
        };
        let (loss, breakdown) = objective.compose(&ctx, &mut rng)?;
        if !breakdown.total.is_finite() {
            return Err(Error::numeric(format!(
                "objective is not finite at iteration {iter}; last good checkpoint retained"
            )));
        }

        net.zero_grad();
        loss.backward();
        adam.lr = plateau.current_lr;
        adam.step(&params)?;
        let aux_info = objective.aux_step(&post, targets.as_deref(), &mut rng)?;
        net.zero_grad();

        epoch_acc.sum += breakdown.total;
        epoch_acc.count += 1;
        if idx_in_epoch == bpe - 1 {
            let mean = epoch_acc.sum / epoch_acc.count as f64;
            plateau.update(mean)?;
            epoch_acc = EpochAccumulator { sum: 0.0, count: 0, last_mean: Some(mean) };
        }

        if (iter + 1) % cfg.log_every == 0 || iter == 0 {
            let record = LogRecord {
                iter,
                total: breakdown.total,
                recon: breakdown.recon,
                lr: plateau.current_lr,
                capacity,
                recon_weight,
                epoch_mean: epoch_acc.last_mean,
                terms: breakdown.entries.iter().cloned().collect(),
                info: breakdown
                    .info
                    .iter()
                    .cloned()
                    .chain(aux_info.iter().cloned())
                    .collect(),
            };
            let now = overall_start.elapsed().as_secs_f64();
            sink.write(&record, (now - last_wall) * 1e3)?;
            last_wall = now;
            last_record = Some(record);
        }
        if (iter + 1) % cfg.checkpoint_every == 0 && iter + 1 < cfg.max_iters {
            let path = out_dir.join(format!("ckpt_{:07}.ckpt", iter + 1));
            save_ckpt(&path, iter + 1, &adam, &objective, &plateau, &epoch_acc)?;
        }
    }

    let final_path = out_dir.join("ckpt_final.ckpt");
    save_ckpt(&final_path, cfg.max_iters, &adam, &objective, &plateau, &epoch_acc)?;
    Ok(RunSummary {
        final_checkpoint: final_path,
        iters_run: cfg.max_iters.saturating_sub(start_iter),
        last_record,
    })
}

fn check_resume_compat(current: &TrainConfig, stored: &TrainConfig) -> Result<()> {
    if current.seed != stored.seed
        || current.batch_size != stored.batch_size
        || current.dataset != stored.dataset
        || current.loss_terms != stored.loss_terms
        || current.model != stored.model
    {
        return Err(Error::config(
            "resume config disagrees with the checkpoint (seed, batch_size, dataset, model, and loss_terms must match)",
        ));
    }
    Ok(())
}

/// Rebuild the network (and dataset) recorded in a checkpoint, restoring
/// parameter values only.
pub fn network_from_checkpoint(path: &Path) -> Result<(Network<f64>, FactorDataset, TrainConfig)> {
    let loaded = checkpoint::load(path)?;
    let cfg = loaded.header.config.clone();
    let ds = cfg.dataset()?;
    let condition_dim = condition_dim_for(&cfg, &ds)?;
    let spec = cfg.model.resolve(condition_dim)?;
    if spec.image_shape != ds.image_shape() {
        return Err(Error::config(format!(
            "checkpoint model image shape {:?} disagrees with dataset '{}' {:?}",
            spec.image_shape,
            cfg.dataset,
            ds.image_shape()
        )));
    }
    let net: Network<f64> = build_model(&spec, cfg.seed)?;
    for (name, p) in net.named_parameters() {
        let stored = loaded
            .params
            .get(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
        if stored.len() != p.len() {
            return Err(Error::Checkpoint(format!("parameter '{name}' has the wrong size")));
        }
        p.set_data(stored);
    }
    Ok((net, ds, cfg))
}

/// Posterior-mean representation of a trained network (forward-only,
/// condition supplied from each batch's true factors for conditional nets).
pub fn representation_of<'a>(
    net: &'a Network<f64>,
    ds: &'a FactorDataset,
    cfg: &TrainConfig,
) -> Result<Representation<'a>> {
    let condition_factor = if cfg.objective_spec()?.has(TermName::Cvae) {
        ds.space()
            .names
            .iter()
            .position(|n| *n == cfg.terms.cvae.condition)
    } else {
        None
    };
    let dim = net.spec.latent_dim;
    Ok(Representation::from_fn(dim, move |batch: &FactorBatch<f64>| {
        no_grad(|| {
            let condition = condition_factor.map(|k| ds.one_hot_factor(batch, k));
            let (mu, _) = net
                .encode(&batch.images, condition.as_ref())
                .expect("shapes validated at load");
            mu.to_vec()
        })
    }))
}

/// Evaluate a checkpoint: builds the posterior-mean representation, runs all
/// metrics, writes `report.json` to `out`, and returns the report.
pub fn evaluate_checkpoint(
    ckpt: &Path,
    out: &Path,
    seed_override: Option<u64>,
) -> Result<MetricReport> {
    let (net, ds, cfg) = network_from_checkpoint(ckpt)?;
    let rep = representation_of(&net, &ds, &cfg)?;
    let seed = seed_override.unwrap_or_else(|| derive_seed(cfg.seed, "evaluate"));
    let report = evaluate_all(&rep, &ds, &cfg.metrics, seed);
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(out, report.to_json())?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DimStat {
    pub dim: usize,
    pub max_pixel_change: f64,
    pub inert: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraversalStats {
    pub sample_index: usize,
    pub steps: usize,
    pub range: f64,
    /// A dimension whose sweep changes no pixel by more than this is inert.
    pub inert_threshold: f64,
    pub dims: Vec<DimStat>,
}

// A sweep that moves no pixel past this is inert outright; on top of that,
// a dimension far below the most active one counts as inert too, because a
// collapsed posterior keeps a residual decoder sensitivity long after it has
// stopped carrying information.
const INERT_ABSOLUTE: f64 = 0.05;
const INERT_RELATIVE: f64 = 0.25;

/// Decode a latent traversal grid around one sample's posterior mean: for
/// each latent dimension, `steps` decodes with that coordinate swept over
/// [-range, range]. Writes a tiled grid, per-dimension rows, the
/// (input, reconstruction) pair, and a per-dimension max-pixel-change
/// statistic identifying inert dimensions.
pub fn export_traversals(
    ckpt: &Path,
    sample_index: usize,
    steps: usize,
    range: f64,
    out_dir: &Path,
) -> Result<TraversalStats> {
    if steps < 2 {
        return Err(Error::config("traversal needs at least 2 steps"));
    }
    let (net, ds, cfg) = network_from_checkpoint(ckpt)?;
    if sample_index >= ds.len() {
        return Err(Error::config(format!(
            "sample index {sample_index} out of range (dataset has {} points)",
            ds.len()
        )));
    }
    std::fs::create_dir_all(out_dir)?;

    let factors = ds.space().index_to_factors(sample_index);
    let batch = ds.batch::<f64>(&[factors])?;
    let condition_factor = if cfg.objective_spec()?.has(TermName::Cvae) {
        ds.space()
            .names
            .iter()
            .position(|n| *n == cfg.terms.cvae.condition)
    } else {
        None
    };
    let d = net.spec.latent_dim;
    let (channels, height, width) = net.spec.image_shape;

    let to_gray = |img: &[f64]| -> GrayImage {
        // multi-channel decodes are written as the channel mean
        let mut pixels = vec![0.0; height * width];
        for c in 0..channels {
            for (p, v) in pixels.iter_mut().zip(&img[c * height * width..(c + 1) * height * width]) {
                *p += v / channels as f64;
            }
        }
        GrayImage::from_pixels(height, width, pixels)
    };

    let stats = no_grad(|| -> Result<TraversalStats> {
        let condition = condition_factor.map(|k| ds.one_hot_factor(&batch, k));
        let (mu, _) = net.encode(&batch.images, condition.as_ref())?;
        let recon = net.decode(&mu, condition.as_ref())?;
        let recon_v = recon.to_vec();

        to_gray(&batch.images.to_vec()).write_pgm(&out_dir.join("input.pgm"))?;
        to_gray(&recon_v).write_pgm(&out_dir.join("reconstruction.pgm"))?;

        let mu_v = mu.to_vec();
        let mut tiles = Vec::with_capacity(d * steps);
        let mut dims = Vec::with_capacity(d);
        for j in 0..d {
            // one batched decode per dimension
            let mut zs = Vec::with_capacity(steps * d);
            for s in 0..steps {
                let value = -range + 2.0 * range * s as f64 / (steps - 1) as f64;
                let mut row = mu_v.clone();
                row[j] = value;
                zs.extend(row);
            }
            let z = Tensor::from_vec(zs, &[steps, d]);
            let cond_rows = condition_factor.map(|k| {
                let onehot = ds.one_hot_factor(&batch, k);
                onehot.broadcast_to(&[steps, onehot.shape()[1]])
            });
            let decoded = net.decode(&z, cond_rows.as_ref())?;
            let dec_v = decoded.to_vec();
            let img_len = channels * height * width;
            let mut max_change = 0.0f64;
            let mut row_tiles = Vec::with_capacity(steps);
            for s in 0..steps {
                let img = &dec_v[s * img_len..(s + 1) * img_len];
                for (a, b) in img.iter().zip(&recon_v) {
                    max_change = max_change.max((a - b).abs());
                }
                row_tiles.push(to_gray(img));
            }
            let row_grid = tile_grid(&row_tiles, 1, steps);
            row_grid.write_pgm(&out_dir.join(format!("row_{j:02}.pgm")))?;
            tiles.extend(row_tiles);
            dims.push(DimStat {
                dim: j,
                max_pixel_change: max_change,
                inert: false,
            });
        }
        let grid = tile_grid(&tiles, d, steps);
        grid.write_pgm(&out_dir.join("traversal_grid.pgm"))?;

        let top = dims.iter().map(|s| s.max_pixel_change).fold(0.0f64, f64::max);
        let threshold = INERT_ABSOLUTE.max(INERT_RELATIVE * top);
        for stat in &mut dims {
            stat.inert = stat.max_pixel_change < threshold;
        }
        Ok(TraversalStats {
            sample_index,
            steps,
            range,
            inert_threshold: threshold,
            dims,
        })
    })?;

    std::fs::write(
        out_dir.join("traversal_stats.json"),
        serde_json::to_string_pretty(&stats)?,
    )?;
    Ok(stats)
}
