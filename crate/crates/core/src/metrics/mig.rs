//! Mutual information gap: normalized margin between the two code dimensions
//! most informative about each factor.

use super::discrete::{entropy, mutual_information, quantile_bins};
use super::PointSet;

pub fn score(points: &PointSet, bins: usize) -> f64 {
    let (n, d, k_factors) = (points.n, points.d, points.k);
    let binned: Vec<Vec<usize>> = (0..d)
        .map(|j| quantile_bins(&points.code_column(j), bins))
        .collect();

    let mut total = 0.0;
    for k in 0..k_factors {
        let fs = points.factor_column(k);
        let h = entropy(&fs, points.cards[k]);
        if h == 0.0 {
            continue;
        }
        let mut mis: Vec<f64> = (0..d)
            .map(|j| mutual_information(&binned[j], bins, &fs, points.cards[k]))
            .collect();
        mis.sort_by(f64::total_cmp);
        let top1 = mis[d - 1];
        let top2 = if d >= 2 { mis[d - 2] } else { 0.0 };
        total += (top1 - top2) / h;
        let _ = n;
    }
    (total / k_factors as f64).clamp(0.0, 1.0)
}
