//! Disentanglement / completeness / informativeness from a normalized
//! mutual-information importance matrix plus a nearest-centroid predictor.

use super::discrete::{entropy, mutual_information, quantile_bins};
use super::PointSet;
use crate::rng::DetRng;

pub struct DciScores {
    pub disentanglement: f64,
    pub completeness: f64,
    pub informativeness: f64,
}

fn weighted_one_minus_entropy(rows: &[Vec<f64>], base: f64) -> f64 {
    // rows: distribution mass per unit (unnormalized); zero rows excluded
    let total: f64 = rows.iter().flat_map(|r| r.iter()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for row in rows {
        let mass: f64 = row.iter().sum();
        if mass == 0.0 {
            continue;
        }
        let h: f64 = row
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| {
                let p = v / mass;
                -p * p.ln()
            })
            .sum();
        acc += (mass / total) * (1.0 - h / base);
    }
    acc
}

pub fn score(points: &PointSet, bins: usize, rng: &mut DetRng) -> DciScores {
    let (n, d, k_factors) = (points.n, points.d, points.k);

    // importance R[j][k] = I(z_j; f_k) / H(f_k) on quantile-binned codes
    let mut importance = vec![vec![0.0; k_factors]; d];
    for j in 0..d {
        let binned = quantile_bins(&points.code_column(j), bins);
        for k in 0..k_factors {
            let fs = points.factor_column(k);
            let h = entropy(&fs, points.cards[k]);
            if h > 0.0 {
                importance[j][k] = mutual_information(&binned, bins, &fs, points.cards[k]) / h;
            }
        }
    }

    let disentanglement = if k_factors > 1 {
        weighted_one_minus_entropy(&importance, (k_factors as f64).ln())
    } else {
        1.0
    };

    let columns: Vec<Vec<f64>> = (0..k_factors)
        .map(|k| (0..d).map(|j| importance[j][k]).collect())
        .collect();
    let completeness = if d > 1 {
        weighted_one_minus_entropy(&columns, (d as f64).ln())
    } else {
        1.0
    };

    // informativeness: held-out accuracy of a per-factor nearest-centroid
    // classifier on the full code
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    let split = n / 2;
    let (train_idx, test_idx) = order.split_at(split);
    let mut acc_sum = 0.0;
    for k in 0..k_factors {
        let fs = points.factor_column(k);
        let card = points.cards[k];
        let mut centroids = vec![vec![0.0; d]; card];
        let mut counts = vec![0usize; card];
        for &i in train_idx {
            counts[fs[i]] += 1;
            for j in 0..d {
                centroids[fs[i]][j] += points.codes[i * d + j];
            }
        }
        for (c, &cnt) in centroids.iter_mut().zip(&counts) {
            if cnt > 0 {
                c.iter_mut().for_each(|v| *v /= cnt as f64);
            }
        }
        // distance in the within-class-standardized metric: a dimension the
        // factor pins exactly gets a dominant weight
        let mut pooled_var = vec![0.0; d];
        for &i in train_idx {
            let c = &centroids[fs[i]];
            for j in 0..d {
                let dv = points.codes[i * d + j] - c[j];
                pooled_var[j] += dv * dv;
            }
        }
        let weights: Vec<f64> = pooled_var
            .iter()
            .map(|&v| 1.0 / (v / train_idx.len() as f64 + 1e-6))
            .collect();
        let mut hits = 0usize;
        for &i in test_idx {
            let row = &points.codes[i * d..(i + 1) * d];
            let mut best = (f64::INFINITY, 0usize);
            for (v, c) in centroids.iter().enumerate() {
                if counts[v] == 0 {
                    continue;
                }
                let dist: f64 = row
                    .iter()
                    .zip(c)
                    .zip(&weights)
                    .map(|((a, b), w)| w * (a - b) * (a - b))
                    .sum();
                if dist < best.0 {
                    best = (dist, v);
                }
            }
            if best.1 == fs[i] {
                hits += 1;
            }
        }
        acc_sum += hits as f64 / test_idx.len() as f64;
    }
    let informativeness = acc_sum / k_factors as f64;

    DciScores {
        disentanglement: disentanglement.clamp(0.0, 1.0),
        completeness: completeness.clamp(0.0, 1.0),
        informativeness: informativeness.clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FactorDataset;
    use crate::metrics::{collect_points, Representation};

    fn full_points(rep: &Representation<'_>) -> PointSet {
        let ds = FactorDataset::shapes5();
        collect_points(rep, &ds, 10_000, &mut DetRng::seed_from(6)).unwrap()
    }

    #[test]
    fn perfect_code_is_fully_disentangled_and_complete() {
        let ds = FactorDataset::shapes5();
        let rep = Representation::from_factors(&ds);
        let s = score(&full_points(&rep), 20, &mut DetRng::seed_from(7));
        assert!(s.disentanglement > 0.95, "disentanglement {}", s.disentanglement);
        assert!(s.completeness > 0.95, "completeness {}", s.completeness);
        assert!(s.informativeness > 0.95, "informativeness {}", s.informativeness);
    }

    #[test]
    fn single_factor_code_has_low_completeness() {
        // every dimension encodes pos_x: rows are one-hot (disentangled),
        // but the other factors are not captured at all
        let rep = Representation::from_fn(4, |batch| {
            let mut out = Vec::with_capacity(batch.batch * 4);
            for i in 0..batch.batch {
                let v = batch.factor_row(i)[2] as f64;
                out.extend([v, 2.0 * v, -v, 0.5 * v]);
            }
            out
        });
        let s = score(&full_points(&rep), 20, &mut DetRng::seed_from(8));
        assert!(s.disentanglement > 0.95, "each row is single-factor: {}", s.disentanglement);
        assert!(s.completeness < 0.3, "completeness should be low: {}", s.completeness);
    }

    #[test]
    fn constant_code_informativeness_is_chance() {
        let rep = Representation::constant(4);
        let s = score(&full_points(&rep), 20, &mut DetRng::seed_from(9));
        // mean chance over factors: (1/3 + 1/3 + 1/8 + 1/8 + 1/4)/5
        let chance = (1.0 / 3.0 + 1.0 / 3.0 + 1.0 / 8.0 + 1.0 / 8.0 + 0.25) / 5.0;
        assert!(
            (s.informativeness - chance).abs() < 0.1,
            "informativeness {} vs chance {chance}",
            s.informativeness
        );
    }
}
