//! Classifier-based score: mean absolute code difference between two batches
//! sharing one fixed factor is a feature from which a linear classifier must
//! recover which factor was fixed.

use super::logreg::SoftmaxModel;
use super::Representation;
use crate::data::FactorDataset;
use crate::rng::DetRng;

pub fn score(
    rep: &Representation<'_>,
    ds: &FactorDataset,
    num_pairs: usize,
    batch_per_pair: usize,
    rng: &mut DetRng,
) -> crate::error::Result<f64> {
    assert!(num_pairs >= 50, "betavae score needs at least 50 training pairs");
    let k_factors = ds.num_factors();
    let d = rep.dim;
    let eval_pairs = num_pairs / 2;
    let total = num_pairs + eval_pairs;

    let mut features = Vec::with_capacity(total * d);
    let mut labels = Vec::with_capacity(total);
    for _ in 0..total {
        let k = rng.below(k_factors);
        let v = rng.below(ds.space().cardinalities[k]);
        let b1 = ds.sample_with_fixed_factor::<f64>(batch_per_pair, k, v, rng)?;
        let b2 = ds.sample_with_fixed_factor::<f64>(batch_per_pair, k, v, rng)?;
        let z1 = rep.codes(&b1);
        let z2 = rep.codes(&b2);
        for j in 0..d {
            let mut acc = 0.0;
            for i in 0..batch_per_pair {
                acc += (z1[i * d + j] - z2[i * d + j]).abs();
            }
            features.push(acc / batch_per_pair as f64);
        }
        labels.push(k);
    }

    let train_feat = &features[..num_pairs * d];
    let train_lab = &labels[..num_pairs];
    if train_feat.iter().all(|&v| (v - train_feat[0]).abs() < 1e-12) {
        eprintln!("warning: betavae features are constant; score will sit at chance");
    }
    let model = SoftmaxModel::fit(train_feat, num_pairs, d, train_lab, k_factors);
    Ok(model.accuracy(&features[num_pairs * d..], &labels[num_pairs..]))
}
