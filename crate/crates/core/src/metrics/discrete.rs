//! Quantile discretization and exact discrete information estimates used by
//! MIG and DCI.

/// Equal-count (quantile) binning: edges sit at the j/bins quantiles of the
/// sample, ties share a bin, and a constant column lands in one bin. Bin
/// assignment is the number of edges strictly below the value, which makes
/// the result invariant under strictly increasing per-dimension maps.
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    assert!(bins >= 2, "need at least two bins");
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|j| sorted[j * n / bins]).collect();
    values
        .iter()
        .map(|&v| edges.iter().filter(|&&e| e < v).count())
        .collect()
}

/// Mutual information in nats from joint counts of two discrete columns.
pub fn mutual_information(xs: &[usize], cx: usize, ys: &[usize], cy: usize) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    let mut joint = vec![0usize; cx * cy];
    let mut px = vec![0usize; cx];
    let mut py = vec![0usize; cy];
    for (&x, &y) in xs.iter().zip(ys) {
        joint[x * cy + y] += 1;
        px[x] += 1;
        py[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..cx {
        for y in 0..cy {
            let c = joint[x * cy + y];
            if c == 0 {
                continue;
            }
            let p = c as f64 / n;
            mi += p * (p * n * n / (px[x] as f64 * py[y] as f64)).ln();
        }
    }
    mi.max(0.0)
}

/// Entropy in nats of one discrete column.
pub fn entropy(xs: &[usize], card: usize) -> f64 {
    let n = xs.len() as f64;
    let mut counts = vec![0usize; card];
    for &x in xs {
        counts[x] += 1;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Pearson correlation between a code column and integer factor values.
pub fn correlation(zs: &[f64], fs: &[usize]) -> f64 {
    let n = zs.len() as f64;
    let mz = zs.iter().sum::<f64>() / n;
    let mf = fs.iter().sum::<usize>() as f64 / n;
    let (mut num, mut vz, mut vf) = (0.0, 0.0, 0.0);
    for (&z, &f) in zs.iter().zip(fs) {
        let dz = z - mz;
        let df = f as f64 - mf;
        num += dz * df;
        vz += dz * dz;
        vf += df * df;
    }
    if vz == 0.0 || vf == 0.0 {
        return 0.0;
    }
    num / (vz * vf).sqrt()
}
