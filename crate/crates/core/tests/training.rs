//! End-to-end trainer behavior: short runs, determinism, resume, checkpoint
//! round-trips, traversal export, and the adversarial-term training paths.

use std::path::{Path, PathBuf};

use disent_core::checkpoint;
use disent_core::train::{self, CliOverrides, TrainConfig};

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("disent_train_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn short_config(tag: &str, terms: &[&str], iters: u64, batch: usize) -> TrainConfig {
    let args: Vec<String> = ["--loss_terms"]
        .iter()
        .map(|s| s.to_string())
        .chain(terms.iter().map(|s| s.to_string()))
        .collect();
    let mut cfg = train::parse_config(None, &CliOverrides::parse(&args).unwrap()).unwrap();
    cfg.max_iters = iters;
    cfg.batch_size = batch;
    cfg.seed = 42;
    cfg.log_every = 10;
    cfg.checkpoint_every = 50;
    cfg.output_dir = tmp_dir(tag).to_string_lossy().into_owned();
    cfg.metrics.num_votes = 60;
    cfg.metrics.batch_per_vote = 16;
    cfg
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn smoke_run_trends_down_and_checkpoints() {
    let cfg = short_config("smoke", &["VAE"], 120, 16);
    let summary = train::run(&cfg, None).unwrap();
    assert_eq!(summary.iters_run, 120);
    assert!(summary.final_checkpoint.exists());

    let out = PathBuf::from(&cfg.output_dir);
    assert!(out.join("config.resolved.json").exists());
    assert!(out.join("train.csv").exists());
    let log = String::from_utf8(read(&out.join("train.jsonl"))).unwrap();
    let records: Vec<train::LogRecord> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(records.len() >= 12);
    let first = records.first().unwrap();
    let last = records.last().unwrap();
    assert!(
        last.total < first.total,
        "objective should trend down: {} -> {}",
        first.total,
        last.total
    );
    // breakdown additivity holds for every record
    for r in &records {
        let sum: f64 = r.recon_weight * r.recon + r.terms.values().sum::<f64>();
        assert!((r.total - sum).abs() < 1e-12, "record at iter {}", r.iter);
    }
}

#[test]
fn identical_runs_are_byte_identical() {
    let cfg_a = short_config("det_a", &["BetaVAE"], 60, 16);
    let mut cfg_b = short_config("det_b", &["BetaVAE"], 60, 16);
    cfg_b.output_dir = tmp_dir("det_b").to_string_lossy().into_owned();
    train::run(&cfg_a, None).unwrap();
    train::run(&cfg_b, None).unwrap();

    let (a, b) = (PathBuf::from(&cfg_a.output_dir), PathBuf::from(&cfg_b.output_dir));
    assert_eq!(read(&a.join("train.jsonl")), read(&b.join("train.jsonl")));
    assert_eq!(read(&a.join("train.csv")), read(&b.join("train.csv")));
    // checkpoints embed the config (which differs in output_dir), so compare
    // the blob sections via a reload
    let la = checkpoint::load(&a.join("ckpt_final.ckpt")).unwrap();
    let lb = checkpoint::load(&b.join("ckpt_final.ckpt")).unwrap();
    for (name, va) in &la.params {
        assert_eq!(va, &lb.params[name], "parameter {name} differs");
    }
    for (name, va) in &la.first_moments {
        assert_eq!(va, &lb.first_moments[name], "moment {name} differs");
    }
}

#[test]
fn resume_continues_bit_identically() {
    // uninterrupted 0..90 vs 0..45 + resume 45..90; batch 64 puts an epoch
    // boundary (36 batches) before the resume point
    let cfg_full = short_config("resume_full", &["VAE"], 90, 64);
    train::run(&cfg_full, None).unwrap();

    let mut cfg_head = short_config("resume_head", &["VAE"], 45, 64);
    cfg_head.seed = cfg_full.seed;
    cfg_head.checkpoint_every = 45;
    train::run(&cfg_head, None).unwrap();
    let head_ckpt = PathBuf::from(&cfg_head.output_dir).join("ckpt_final.ckpt");

    let mut cfg_tail = short_config("resume_tail", &["VAE"], 90, 64);
    cfg_tail.seed = cfg_full.seed;
    train::run(&cfg_tail, Some(&head_ckpt)).unwrap();

    let full_log = String::from_utf8(read(&PathBuf::from(&cfg_full.output_dir).join("train.jsonl"))).unwrap();
    let tail_log = String::from_utf8(read(&PathBuf::from(&cfg_tail.output_dir).join("train.jsonl"))).unwrap();
    let full_tail: Vec<&str> = full_log
        .lines()
        .filter(|l| {
            let r: train::LogRecord = serde_json::from_str(l).unwrap();
            r.iter >= 45
        })
        .collect();
    let resumed: Vec<&str> = tail_log.lines().collect();
    assert_eq!(full_tail, resumed, "resumed RunLog tail must match the uninterrupted run");

    // final parameters agree bitwise
    let lf = checkpoint::load(&PathBuf::from(&cfg_full.output_dir).join("ckpt_final.ckpt")).unwrap();
    let lt = checkpoint::load(&PathBuf::from(&cfg_tail.output_dir).join("ckpt_final.ckpt")).unwrap();
    for (name, va) in &lf.params {
        assert_eq!(va, &lt.params[name], "parameter {name} differs after resume");
    }
}

#[test]
fn checkpoint_roundtrip_is_byte_exact() {
    let cfg = short_config("roundtrip", &["VAE"], 20, 8);
    let summary = train::run(&cfg, None).unwrap();
    let original = read(&summary.final_checkpoint);
    let loaded = checkpoint::load(&summary.final_checkpoint).unwrap();
    let copy = summary.final_checkpoint.with_extension("copy");
    loaded.resave::<f64>(&copy, std::marker::PhantomData).unwrap();
    assert_eq!(original, read(&copy), "save -> load -> save must be byte-identical");
}

#[test]
fn overfit_one_image_reaches_low_bce() {
    // VAE pinned to a single sample: 500 iterations drive the per-pixel
    // reconstruction error under 0.05 nats
    let mut cfg = short_config("overfit", &["VAE"], 500, 16);
    cfg.overfit_index = Some(1234);
    cfg.terms.kl.beta = 1.0;
    cfg.optimizer.lr = 3e-3; // one repeated sample: a hotter step overfits comfortably in 500 iters
    let summary = train::run(&cfg, None).unwrap();
    let record = summary.last_record.unwrap();
    let bce_per_pixel = record.recon / (32.0 * 32.0);
    assert!(
        bce_per_pixel < 0.05,
        "overfit run should reconstruct its sample, got {bce_per_pixel} nats/pixel"
    );

    // decode(encode-mean) reproduces the image to the same tolerance
    let (net, ds, _) = train::network_from_checkpoint(&summary.final_checkpoint).unwrap();
    let batch = ds.batch::<f64>(&[ds.space().index_to_factors(1234)]).unwrap();
    let bce = disent_core::tensor::no_grad(|| {
        let (mu, _) = net.encode(&batch.images, None).unwrap();
        let recon = net.decode(&mu, None).unwrap();
        disent_core::prob::recon_loss(&batch.images, &recon, disent_core::prob::ReconKind::Bernoulli)
            .item()
    });
    assert!(
        bce / (32.0 * 32.0) < 0.05,
        "decode(encode-mean) should reproduce the overfit image, got {} nats/pixel",
        bce / (32.0 * 32.0)
    );
}

#[test]
fn ifcvae_heads_learn_and_adversary_stays_blind() {
    // shape as the label: the auxiliary classifier should read it off the
    // reserved latents while the adversary stays near chance on the rest
    let mut cfg = short_config("ifcvae_run", &["BetaVAE", "IFCVAE"], 1000, 64);
    cfg.terms.kl.beta = 1.0;
    cfg.terms.ifcvae.w_aux = 5.0; // strong supervision so the label block forms quickly
    cfg.terms.ifcvae.classifier = disent_core::nn::MlpSpec { hidden: vec![32], leaky_slope: 0.2 };
    cfg.terms.ifcvae.clf_lr = 3e-3;
    cfg.log_every = 25;
    let summary = train::run(&cfg, None).unwrap();
    let record = summary.last_record.unwrap();
    let aux_acc = record.info["ifcvae.aux_acc"];
    let adv_acc = record.info["ifcvae.adv_acc"];
    let chance = 1.0 / 3.0;
    assert!(aux_acc > 0.9, "auxiliary classifier should master the label, got {aux_acc}");
    assert!(
        adv_acc < chance + 0.15,
        "adversary should stay near chance {chance:.2}, got {adv_acc}"
    );
}

#[test]
fn factorvae_and_ifcvae_paths_train_and_checkpoint() {
    let mut cfg = short_config("adv", &["BetaVAE", "FactorVAE", "IFCVAE"], 40, 16);
    cfg.terms.factor.disc = disent_core::nn::MlpSpec { hidden: vec![32, 32], leaky_slope: 0.2 };
    cfg.terms.ifcvae.classifier = disent_core::nn::MlpSpec { hidden: vec![16], leaky_slope: 0.2 };
    let summary = train::run(&cfg, None).unwrap();

    // adversarial parameters and moments are in the checkpoint
    let loaded = checkpoint::load(&summary.final_checkpoint).unwrap();
    let groups: Vec<&str> = loaded.header.optimizers.iter().map(|o| o.group.as_str()).collect();
    assert_eq!(groups, vec!["model", "disc", "ifcvae.aux", "ifcvae.adv"]);
    assert!(loaded.params.keys().any(|k| k.starts_with("disc.")));
    assert!(loaded.params.keys().any(|k| k.starts_with("ifcvae.aux.")));

    // the log carries the adversary diagnostics
    let log = String::from_utf8(read(&PathBuf::from(&cfg.output_dir).join("train.jsonl"))).unwrap();
    let last: train::LogRecord = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert!(last.info.contains_key("disc.acc"));
    assert!(last.info.contains_key("ifcvae.aux_acc"));
    assert!(last.terms.contains_key("factorvae"));
    assert!(last.terms.contains_key("ifcvae"));
}

#[test]
fn cvae_conditional_run_completes() {
    let cfg = short_config("cvae", &["VAE", "CVAE"], 30, 16);
    let summary = train::run(&cfg, None).unwrap();
    let (net, _, _) = train::network_from_checkpoint(&summary.final_checkpoint).unwrap();
    assert_eq!(net.spec.condition_dim, 3, "shape condition adds 3 channels");
}

#[test]
fn nan_objective_aborts_with_numeric_error() {
    let mut cfg = short_config("nan", &["VAE"], 50, 8);
    cfg.optimizer.lr = f64::INFINITY; // guaranteed blow-up after one step
    let err = train::run(&cfg, None).unwrap_err();
    assert!(matches!(err, disent_core::Error::Numeric(_)), "{err}");
}

#[test]
fn traversal_export_grid_and_stats() {
    let cfg = short_config("traverse", &["VAE"], 30, 16);
    let summary = train::run(&cfg, None).unwrap();
    let out = tmp_dir("traverse_out");
    let stats = train::export_traversals(&summary.final_checkpoint, 7, 6, 3.0, &out).unwrap();
    assert_eq!(stats.dims.len(), 8);

    let grid = disent_core::pgm::GrayImage::read_pgm(&out.join("traversal_grid.pgm")).unwrap();
    assert_eq!((grid.height, grid.width), (8 * 32, 6 * 32), "d*32 x S*32 tiling");
    assert!(out.join("input.pgm").exists());
    assert!(out.join("reconstruction.pgm").exists());
    assert!(out.join("row_00.pgm").exists());
    assert!(out.join("traversal_stats.json").exists());

    // a zeroed decoder collapses every tile onto the same constant image
    let (net, _, _) = train::network_from_checkpoint(&summary.final_checkpoint).unwrap();
    for (name, p) in net.named_parameters() {
        if name.starts_with("decoder.") {
            p.update_data(|d| d.iter_mut().for_each(|v| *v = 0.0));
        }
    }
    // decode two very different codes: outputs must match exactly
    let z1 = disent_core::Tensor::from_vec(vec![3.0, -1.0, 0.0, 2.0, 0.5, -2.0, 1.0, 4.0], &[1, 8]);
    let z2 = disent_core::Tensor::zeros(&[1, 8]);
    let d1 = net.decode(&z1, None).unwrap();
    let d2 = net.decode(&z2, None).unwrap();
    assert_eq!(d1.to_vec(), d2.to_vec(), "zero decoder is a constant map");
}

#[test]
fn evaluate_writes_a_deterministic_report() {
    let cfg = short_config("eval", &["VAE"], 30, 16);
    let summary = train::run(&cfg, None).unwrap();
    let out = tmp_dir("eval_out");
    let report_path = out.join("report.json");
    let r1 = train::evaluate_checkpoint(&summary.final_checkpoint, &report_path, None).unwrap();
    let bytes1 = read(&report_path);
    let _ = train::evaluate_checkpoint(&summary.final_checkpoint, &report_path, None).unwrap();
    assert_eq!(bytes1, read(&report_path), "same seed, same bytes");
    for key in [
        "betavae",
        "factorvae",
        "mig",
        "sap",
        "irs",
        "dci_disentanglement",
        "dci_completeness",
        "dci_informativeness",
    ] {
        assert!(
            r1.get(key).is_some() || r1.errors.contains_key(key),
            "metric {key} missing from the report"
        );
    }
}

#[test]
fn resume_with_mismatched_config_is_rejected() {
    let cfg = short_config("mismatch", &["VAE"], 20, 8);
    let summary = train::run(&cfg, None).unwrap();
    let mut other = short_config("mismatch2", &["BetaVAE"], 40, 8);
    other.seed = cfg.seed;
    let err = train::run(&other, Some(&summary.final_checkpoint)).unwrap_err();
    assert!(err.to_string().contains("resume"), "{err}");
}
