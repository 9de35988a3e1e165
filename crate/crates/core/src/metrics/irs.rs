//! Interventional robustness: how little a latent moves when factors other
//! than its parent are intervened on.
//!
//! For latent j and factor k, EMPIDA(j,k) holds factor k fixed at each value
//! v and takes the `diff_quantile` quantile of |z_j − mean(z_j | f_k = v)| as
//! the remaining factors vary, averaged over v. With k the parent of j, that
//! deviation is exactly the response of z_j to interventions on non-parents;
//! the score is one minus its normalized size, aggregated over latents with
//! variance weights.

use super::discrete::correlation;
use super::PointSet;

fn upper_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let idx = ((n as f64 - 1.0) * q).ceil() as usize;
    sorted[idx.min(n - 1)]
}

/// Returns (score, warning). A representation with no variance anywhere
/// scores 0 with a warning instead of failing.
pub fn score(points: &PointSet, diff_quantile: f64) -> (f64, Option<String>) {
    let (n, d, k_factors) = (points.n, points.d, points.k);

    let mut weights = vec![0.0; d]; // per-latent variance
    let mut irs_per_dim = vec![0.0; d];
    let mut any_active = false;

    for j in 0..d {
        let col = points.code_column(j);
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 * hi.abs().max(1.0) {
            continue; // effectively constant dimension: weight stays 0
        }
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        any_active = true;
        weights[j] = var;
        let max_dev = col
            .iter()
            .map(|v| (v - mean).abs())
            .fold(0.0f64, f64::max)
            .max(1e-12);

        // parent = factor with the largest |correlation|
        let mut parent = 0usize;
        let mut best = -1.0;
        for k in 0..k_factors {
            let fs = points.factor_column(k);
            let c = correlation(&col, &fs).abs();
            if c > best {
                best = c;
                parent = k;
            }
        }

        // EMPIDA against the parent: deviation within fixed-parent groups
        let fs = points.factor_column(parent);
        let card = points.cards[parent];
        let mut group_dev_sum = 0.0;
        let mut groups = 0usize;
        for v in 0..card {
            let members: Vec<f64> = col
                .iter()
                .zip(&fs)
                .filter(|(_, &f)| f == v)
                .map(|(&z, _)| z)
                .collect();
            if members.is_empty() {
                continue;
            }
            let mu = members.iter().sum::<f64>() / members.len() as f64;
            let mut devs: Vec<f64> = members.iter().map(|z| (z - mu).abs()).collect();
            devs.sort_by(f64::total_cmp);
            group_dev_sum += upper_quantile(&devs, diff_quantile);
            groups += 1;
        }
        let empida = group_dev_sum / groups.max(1) as f64;
        irs_per_dim[j] = (1.0 - empida / max_dev).clamp(0.0, 1.0);
    }

    if !any_active {
        return (0.0, Some("all latent dimensions have zero variance".to_string()));
    }
    let wsum: f64 = weights.iter().sum();
    let score = weights
        .iter()
        .zip(&irs_per_dim)
        .map(|(&w, &s)| w * s)
        .sum::<f64>()
        / wsum;
    (score.clamp(0.0, 1.0), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactorDataset;
    use crate::metrics::{collect_points, Representation};
    use crate::rng::DetRng;

    fn full_points(rep: &Representation<'_>) -> PointSet {
        let ds = FactorDataset::shapes5();
        collect_points(rep, &ds, 10_000, &mut DetRng::seed_from(11)).unwrap()
    }

    #[test]
    fn perfect_code_is_fully_robust() {
        let ds = FactorDataset::shapes5();
        let rep = Representation::from_factors(&ds);
        let (s, warn) = score(&full_points(&rep), 0.99);
        assert!(warn.is_none());
        assert!(s > 0.95, "interventions on non-parents leave z fixed, got {s}");
    }

    #[test]
    fn mixed_dimension_is_less_robust() {
        // z_0 = pos_x + pos_y responds to interventions on its non-parent
        let rep = Representation::from_fn(3, |batch| {
            let mut out = Vec::with_capacity(batch.batch * 3);
            for i in 0..batch.batch {
                let f = batch.factor_row(i);
                out.extend([(f[2] + f[3]) as f64, f[0] as f64, f[4] as f64]);
            }
            out
        });
        let (s, _) = score(&full_points(&rep), 0.99);
        assert!(s < 0.9, "mixed dimension should lose robustness, got {s}");
    }

    #[test]
    fn constant_code_warns_and_scores_zero() {
        let rep = Representation::constant(3);
        let (s, warn) = score(&full_points(&rep), 0.99);
        assert_eq!(s, 0.0);
        assert!(warn.is_some());
    }

    #[test]
    fn zero_variance_dimension_gets_zero_weight() {
        // one perfect dimension plus one constant: score driven by the live one
        let rep = Representation::from_fn(2, |batch| {
            let mut out = Vec::with_capacity(batch.batch * 2);
            for i in 0..batch.batch {
                out.extend([batch.factor_row(i)[2] as f64, 7.0]);
            }
            out
        });
        let (s, warn) = score(&full_points(&rep), 0.99);
        assert!(warn.is_none());
        assert!(s > 0.95, "constant dim must not drag the score, got {s}");
    }
}
