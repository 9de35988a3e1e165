//! Separated attribute predictability: gap between the two best
//! single-dimension threshold predictors of each factor.

use super::PointSet;
use crate::rng::DetRng;

/// Best one-vs-rest balanced accuracy over thresholds and polarities of one
/// code dimension against one binary label set, fitted on (values, labels)
/// and evaluated by the returned closure parameters (threshold, polarity).
fn fit_stump(values: &[f64], positives: &[bool]) -> (f64, bool) {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let total_pos = positives.iter().filter(|&&p| p).count();
    let total_neg = n - total_pos;
    if total_pos == 0 || total_neg == 0 {
        return (f64::NEG_INFINITY, true);
    }

    // sweep thresholds between sorted positions; predict positive when
    // value > threshold (polarity true) or value <= threshold (false)
    let mut best = (0.5, values[order[0]] - 1.0, true);
    let (mut pos_below, mut neg_below) = (0usize, 0usize);
    let mut check = |threshold: f64, pos_below: usize, neg_below: usize| {
        let tpr_above = (total_pos - pos_below) as f64 / total_pos as f64;
        let tnr_below = neg_below as f64 / total_neg as f64;
        let bal_true = 0.5 * (tpr_above + tnr_below);
        let bal_false = 1.0 - bal_true;
        let (bal, pol) = if bal_true >= bal_false {
            (bal_true, true)
        } else {
            (bal_false, false)
        };
        if bal > best.0 {
            best = (bal, threshold, pol);
        }
    };
    for w in 0..n {
        let idx = order[w];
        if positives[idx] {
            pos_below += 1;
        } else {
            neg_below += 1;
        }
        let here = values[idx];
        let next = if w + 1 < n { values[order[w + 1]] } else { here + 1.0 };
        if next > here {
            check(0.5 * (here + next), pos_below, neg_below);
        }
    }
    (best.1, best.2)
}

fn balanced_accuracy(values: &[f64], positives: &[bool], threshold: f64, polarity: bool) -> f64 {
    let (mut tp, mut fn_, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&v, &p) in values.iter().zip(positives) {
        let pred = if polarity { v > threshold } else { v <= threshold };
        match (p, pred) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let tpr = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.5 };
    let tnr = if tn + fp > 0 { tn as f64 / (tn + fp) as f64 } else { 0.5 };
    0.5 * (tpr + tnr)
}

pub fn score(points: &PointSet, rng: &mut DetRng) -> f64 {
    let (n, d, k_factors) = (points.n, points.d, points.k);
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let split = n / 2;
    let (train_idx, test_idx) = order.split_at(split);

    let mut total_gap = 0.0;
    for k in 0..k_factors {
        let fs = points.factor_column(k);
        let card = points.cards[k];
        // S[j] = mean over classes of held-out balanced accuracy
        let mut s_col: Vec<f64> = Vec::with_capacity(d);
        for j in 0..d {
            let col = points.code_column(j);
            let train_vals: Vec<f64> = train_idx.iter().map(|&i| col[i]).collect();
            let test_vals: Vec<f64> = test_idx.iter().map(|&i| col[i]).collect();
            let mut acc_sum = 0.0;
            for v in 0..card {
                let train_pos: Vec<bool> = train_idx.iter().map(|&i| fs[i] == v).collect();
                let test_pos: Vec<bool> = test_idx.iter().map(|&i| fs[i] == v).collect();
                let (threshold, polarity) = fit_stump(&train_vals, &train_pos);
                acc_sum += if threshold.is_finite() {
                    balanced_accuracy(&test_vals, &test_pos, threshold, polarity)
                } else {
                    0.5
                };
            }
            s_col.push(acc_sum / card as f64);
        }
        s_col.sort_by(f64::total_cmp);
        let top1 = s_col[d - 1];
        let top2 = if d >= 2 { s_col[d - 2] } else { 0.5 };
        total_gap += top1 - top2;
    }
    (total_gap / k_factors as f64).clamp(0.0, 1.0)
}
