//! Command-line entry points: train, evaluate, traverse, render-dataset.
//!
//! Exit codes: 0 on success, 2 on configuration errors, 3 on numeric
//! failures (non-finite objective), 1 otherwise.

use std::path::{Path, PathBuf};

use disent_core::data::FactorDataset;
use disent_core::error::Error;
use disent_core::metrics::{evaluate_csv, MetricsConfig};
use disent_core::train::{self, CliOverrides};

const USAGE: &str = "\
disent: train and evaluate disentangled latent-variable models

USAGE:
  disent train [--config FILE] [--profile NAME] [--resume CKPT]
               [--loss_terms TERM...] [--key.path VALUE ...]
  disent evaluate --checkpoint FILE [--out FILE] [--seed N]
  disent evaluate --codes FILE --factors FILE [--out FILE] [--seed N]
  disent traverse --checkpoint FILE --sample N [--steps N] [--range R] [--out DIR]
  disent render-dataset --out DIR

Loss terms: VAE, BetaVAE, BTCVAE, FactorVAE, InfoVAE, DIP_I, DIP_II, CVAE, IFCVAE.
Any config key can be overridden with a dotted flag, e.g.
  disent train --loss_terms BTCVAE --btc.beta 2 --optimizer.lr 0.001
The DISENT_SEED environment variable overrides the config seed.
";

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    std::process::exit(dispatch(&args));
}

fn dispatch(args: &[String]) -> i32 {
    let Some(verb) = args.first() else {
        eprint!("{USAGE}");
        return 2;
    };
    let rest = &args[1..];
    let result = match verb.as_str() {
        "train" => cmd_train(rest),
        "evaluate" => cmd_evaluate(rest),
        "traverse" => cmd_traverse(rest),
        "render-dataset" => cmd_render_dataset(rest),
        "--help" | "-h" | "help" => {
            print!("{USAGE}");
            return 0;
        }
        other => {
            eprintln!("unknown command '{other}'\n");
            eprint!("{USAGE}");
            return 2;
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Checkpoint(_) | Error::Shape(_) => 2,
                Error::Numeric(_) => 3,
                _ => 1,
            }
        }
    }
}

/// Pull `--flag value` out of an argument list, returning the remainder.
fn take_flag(args: &mut Vec<String>, flag: &str) -> Result<Option<String>, Error> {
    if let Some(pos) = args.iter().position(|a| a == flag) {
        if pos + 1 >= args.len() {
            return Err(Error::config(format!("{flag} needs a value")));
        }
        let value = args.remove(pos + 1);
        args.remove(pos);
        Ok(Some(value))
    } else {
        Ok(None)
    }
}

fn cmd_train(args: &[String]) -> Result<(), Error> {
    let mut args = args.to_vec();
    let config_path = take_flag(&mut args, "--config")?.map(PathBuf::from);
    let resume = take_flag(&mut args, "--resume")?.map(PathBuf::from);
    let overrides = CliOverrides::parse(&args)?;
    let cfg = train::parse_config(config_path.as_deref(), &overrides)?;
    let summary = train::run(&cfg, resume.as_deref())?;
    println!("{}", summary.final_checkpoint.display());
    Ok(())
}

fn cmd_evaluate(args: &[String]) -> Result<(), Error> {
    let mut args = args.to_vec();
    let checkpoint = take_flag(&mut args, "--checkpoint")?.map(PathBuf::from);
    let codes = take_flag(&mut args, "--codes")?.map(PathBuf::from);
    let factors = take_flag(&mut args, "--factors")?.map(PathBuf::from);
    let out = take_flag(&mut args, "--out")?
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("report.json"));
    let seed = take_flag(&mut args, "--seed")?
        .map(|s| s.parse::<u64>().map_err(|_| Error::config("--seed must be an integer")))
        .transpose()?;
    if !args.is_empty() {
        return Err(Error::config(format!("unexpected arguments: {}", args.join(" "))));
    }

    let report = match (checkpoint, codes, factors) {
        (Some(ckpt), None, None) => train::evaluate_checkpoint(&ckpt, &out, seed)?,
        (None, Some(codes), Some(factors)) => {
            let seed = seed.unwrap_or(0);
            let report = evaluate_csv(&codes, &factors, &MetricsConfig::default(), seed)?;
            std::fs::write(&out, report.to_json())?;
            report
        }
        _ => {
            return Err(Error::config(
                "evaluate needs either --checkpoint FILE or the pair --codes FILE --factors FILE",
            ))
        }
    };
    for (name, value) in &report.scores {
        println!("{name}: {value:.4}");
    }
    for (name, err) in &report.errors {
        println!("{name}: unavailable ({err})");
    }
    println!("report written to {}", out.display());
    Ok(())
}

fn cmd_traverse(args: &[String]) -> Result<(), Error> {
    let mut args = args.to_vec();
    let checkpoint = take_flag(&mut args, "--checkpoint")?
        .map(PathBuf::from)
        .ok_or_else(|| Error::config("traverse needs --checkpoint FILE"))?;
    let sample: usize = take_flag(&mut args, "--sample")?
        .ok_or_else(|| Error::config("traverse needs --sample N"))?
        .parse()
        .map_err(|_| Error::config("--sample must be an integer"))?;
    let steps: usize = take_flag(&mut args, "--steps")?
        .map(|s| s.parse().map_err(|_| Error::config("--steps must be an integer")))
        .transpose()?
        .unwrap_or(8);
    let range: f64 = take_flag(&mut args, "--range")?
        .map(|s| s.parse().map_err(|_| Error::config("--range must be a number")))
        .transpose()?
        .unwrap_or(3.0);
    let out = take_flag(&mut args, "--out")?.map(PathBuf::from).unwrap_or_else(|| {
        checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("traversal_s{sample}"))
    });
    if !args.is_empty() {
        return Err(Error::config(format!("unexpected arguments: {}", args.join(" "))));
    }

    let stats = train::export_traversals(&checkpoint, sample, steps, range, &out)?;
    for dim in &stats.dims {
        let marker = if dim.inert { " (inert)" } else { "" };
        println!("dim {:2}: max pixel change {:.4}{marker}", dim.dim, dim.max_pixel_change);
    }
    println!("grid written to {}", out.join("traversal_grid.pgm").display());
    Ok(())
}

fn cmd_render_dataset(args: &[String]) -> Result<(), Error> {
    let mut args = args.to_vec();
    let out = take_flag(&mut args, "--out")?
        .map(PathBuf::from)
        .ok_or_else(|| Error::config("render-dataset needs --out DIR"))?;
    if !args.is_empty() {
        return Err(Error::config(format!("unexpected arguments: {}", args.join(" "))));
    }
    let ds = FactorDataset::shapes5();
    ds.dump(&out)?;
    println!("wrote {} images and index.csv to {}", ds.len(), out.display());
    Ok(())
}
