//! Majority-vote score: with one factor fixed, the dimension of least
//! variance (after global normalization) should point at that factor.

use super::Representation;
use crate::data::FactorDataset;
use crate::error::{Error, Result};
use crate::rng::DetRng;

const PRUNE_STD: f64 = 0.02;

pub fn score(
    rep: &Representation<'_>,
    ds: &FactorDataset,
    num_votes: usize,
    batch_per_vote: usize,
    rng: &mut DetRng,
) -> Result<f64> {
    let d = rep.dim;
    let k_factors = ds.num_factors();

    // global per-dimension std on >= 1000 points
    let probe = ds.batch::<f64>(&ds.sample_factors(1000, rng))?;
    let codes = rep.codes(&probe);
    let mut std = vec![0.0; d];
    for j in 0..d {
        let col: Vec<f64> = (0..1000).map(|i| codes[i * d + j]).collect();
        let mean = col.iter().sum::<f64>() / 1000.0;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 1000.0;
        std[j] = var.sqrt();
    }
    let active: Vec<usize> = (0..d).filter(|&j| std[j] >= PRUNE_STD).collect();
    if active.is_empty() {
        return Err(Error::Metric("collapsed representation: every dimension pruned".into()));
    }

    let eval_votes = num_votes / 2;
    let mut vote_table = vec![0usize; d * k_factors];
    let cast = |rng: &mut DetRng| -> Result<(usize, usize)> {
        let k = rng.below(k_factors);
        let v = rng.below(ds.space().cardinalities[k]);
        let batch = ds.sample_with_fixed_factor::<f64>(batch_per_vote, k, v, rng)?;
        let z = rep.codes(&batch);
        let mut best = (f64::INFINITY, active[0]);
        for &j in &active {
            let col: Vec<f64> = (0..batch_per_vote).map(|i| z[i * d + j] / std[j]).collect();
            let mean = col.iter().sum::<f64>() / batch_per_vote as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / batch_per_vote as f64;
            if var < best.0 {
                best = (var, j);
            }
        }
        Ok((best.1, k))
    };

    for _ in 0..num_votes {
        let (dim, k) = cast(rng)?;
        vote_table[dim * k_factors + k] += 1;
    }
    let majority: Vec<usize> = (0..d)
        .map(|j| {
            let row = &vote_table[j * k_factors..(j + 1) * k_factors];
            (0..k_factors).max_by_key(|&k| row[k]).unwrap()
        })
        .collect();

    let mut hits = 0usize;
    for _ in 0..eval_votes {
        let (dim, k) = cast(rng)?;
        if majority[dim] == k {
            hits += 1;
        }
    }
    Ok(hits as f64 / eval_votes as f64)
}
