//! Disentanglement evaluation: six metrics computed against ground-truth
//! factors through a deterministic representation function (by convention
//! the posterior mean). Each metric owns a seed derived from the report
//! seed, so the report is a pure function of (representation, seed, config).

mod betavae;
mod dci;
pub(crate) mod discrete;
mod factorvae;
mod irs;
mod logreg;
mod mig;
mod sap;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{FactorBatch, FactorDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, DetRng};

pub use dci::DciScores;

/// MIG alone on a prepared point set.
pub fn mig_score(points: &PointSet, bins: usize) -> f64 {
    mig::score(points, bins)
}

/// Callable mapping a factor batch to row-major n x dim codes.
pub struct Representation<'a> {
    pub dim: usize,
    f: Box<dyn Fn(&FactorBatch<f64>) -> Vec<f64> + 'a>,
}

impl<'a> Representation<'a> {
    pub fn from_fn(dim: usize, f: impl Fn(&FactorBatch<f64>) -> Vec<f64> + 'a) -> Self {
        Representation { dim, f: Box::new(f) }
    }

    /// Codes for a batch; length-checked.
    pub fn codes(&self, batch: &FactorBatch<f64>) -> Vec<f64> {
        let out = (self.f)(batch);
        assert_eq!(
            out.len(),
            batch.batch * self.dim,
            "representation returned a wrong-sized code block"
        );
        out
    }

    /// Synthetic baseline: the ground-truth factors as floats.
    pub fn from_factors(ds: &FactorDataset) -> Representation<'static> {
        let k = ds.num_factors();
        Representation::from_fn(k, move |batch| {
            let mut out = Vec::with_capacity(batch.batch * k);
            for i in 0..batch.batch {
                out.extend(batch.factor_row(i).iter().map(|&f| f as f64));
            }
            out
        })
    }

    /// Synthetic baseline: factors duplicated, so every factor has two
    /// equally informative dimensions.
    pub fn duplicated_factors(ds: &FactorDataset) -> Representation<'static> {
        let k = ds.num_factors();
        Representation::from_fn(2 * k, move |batch| {
            let mut out = Vec::with_capacity(batch.batch * 2 * k);
            for i in 0..batch.batch {
                let row: Vec<f64> = batch.factor_row(i).iter().map(|&f| f as f64).collect();
                out.extend(&row);
                out.extend(&row);
            }
            out
        })
    }

    /// Synthetic baseline: every code is the same constant.
    pub fn constant(dim: usize) -> Representation<'static> {
        Representation::from_fn(dim, move |batch| vec![0.7; batch.batch * dim])
    }

    /// Synthetic baseline: noise that is a deterministic function of the
    /// factor tuple (so the metric stays a pure function of its seed).
    pub fn noise(dim: usize, seed: u64) -> Representation<'static> {
        Representation::from_fn(dim, move |batch| {
            let mut out = Vec::with_capacity(batch.batch * dim);
            for i in 0..batch.batch {
                let mut key = 0u64;
                for &f in batch.factor_row(i) {
                    key = key.wrapping_mul(1000003).wrapping_add(f as u64 + 1);
                }
                let mut rng = DetRng::seed_from(crate::rng::derive_seed_indexed(seed, "noise-rep", key));
                for _ in 0..dim {
                    out.push(rng.normal());
                }
            }
            out
        })
    }
}

/// Codes and factors for a fixed point sample.
pub struct PointSet {
    pub codes: Vec<f64>,
    pub n: usize,
    pub d: usize,
    pub factors: Vec<usize>,
    pub k: usize,
    pub cards: Vec<usize>,
}

impl PointSet {
    pub fn code_column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.codes[i * self.d + j]).collect()
    }

    pub fn factor_column(&self, k: usize) -> Vec<usize> {
        (0..self.n).map(|i| self.factors[i * self.k + k]).collect()
    }
}

/// Evaluate the representation on `num_points` uniform draws, or on the
/// whole enumerated factor space when it is smaller.
pub fn collect_points(
    rep: &Representation<'_>,
    ds: &FactorDataset,
    num_points: usize,
    rng: &mut DetRng,
) -> Result<PointSet> {
    let rows: Vec<Vec<usize>> = if ds.len() <= num_points {
        (0..ds.len()).map(|i| ds.space().index_to_factors(i)).collect()
    } else {
        ds.sample_factors(num_points, rng)
    };
    let n = rows.len();
    let k = ds.num_factors();
    let d = rep.dim;
    let mut codes = Vec::with_capacity(n * d);
    let mut factors = Vec::with_capacity(n * k);
    for chunk in rows.chunks(256) {
        let batch = ds.batch::<f64>(chunk)?;
        codes.extend(rep.codes(&batch));
        factors.extend_from_slice(&batch.factors);
    }
    Ok(PointSet {
        codes,
        n,
        d,
        factors,
        k,
        cards: ds.space().cardinalities.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub num_points: usize,
    pub bins: usize,
    pub num_votes: usize,
    pub batch_per_vote: usize,
    pub irs_diff_quantile: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            num_points: 10_000,
            bins: 20,
            num_votes: 500,
            batch_per_vote: 64,
            irs_diff_quantile: 0.99,
        }
    }
}

/// Named scores plus the sampling parameters that produced them. Failed
/// metrics land in `errors` (partial reports are allowed); degenerate but
/// defined scores add a note to `warnings`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(flatten)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub errors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub warnings: BTreeMap<String, String>,
    pub config: MetricsConfig,
    pub seed: u64,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scores.get(key).copied()
    }
}

/// Run all six metrics with independently derived seeds.
pub fn evaluate_all(
    rep: &Representation<'_>,
    ds: &FactorDataset,
    config: &MetricsConfig,
    seed: u64,
) -> MetricReport {
    let mut report = MetricReport {
        scores: BTreeMap::new(),
        errors: BTreeMap::new(),
        warnings: BTreeMap::new(),
        config: config.clone(),
        seed,
    };

    {
        let mut rng = DetRng::seed_from(derive_seed(seed, "betavae"));
        match betavae::score(rep, ds, config.num_votes, config.batch_per_vote, &mut rng) {
            Ok(s) => {
                report.scores.insert("betavae".into(), s);
            }
            Err(e) => {
                report.errors.insert("betavae".into(), e.to_string());
            }
        }
    }
    {
        let mut rng = DetRng::seed_from(derive_seed(seed, "factorvae"));
        match factorvae::score(rep, ds, config.num_votes, config.batch_per_vote, &mut rng) {
            Ok(s) => {
                report.scores.insert("factorvae".into(), s);
            }
            Err(e) => {
                report.errors.insert("factorvae".into(), e.to_string());
            }
        }
    }

    let mut rng = DetRng::seed_from(derive_seed(seed, "points"));
    match collect_points(rep, ds, config.num_points, &mut rng) {
        Ok(points) => evaluate_point_metrics(&points, config, seed, &mut report),
        Err(e) => {
            for key in ["mig", "sap", "irs", "dci_disentanglement"] {
                report.errors.insert(key.into(), e.to_string());
            }
        }
    }
    report
}

/// The point-based metrics (everything except the two interactive scores);
/// also the whole of the standalone CSV mode.
pub fn evaluate_point_metrics(
    points: &PointSet,
    config: &MetricsConfig,
    seed: u64,
    report: &mut MetricReport,
) {
    report.scores.insert("mig".into(), mig::score(points, config.bins));

    let mut sap_rng = DetRng::seed_from(derive_seed(seed, "sap"));
    report.scores.insert("sap".into(), sap::score(points, &mut sap_rng));

    let mut dci_rng = DetRng::seed_from(derive_seed(seed, "dci"));
    let dci = dci::score(points, config.bins, &mut dci_rng);
    report.scores.insert("dci_disentanglement".into(), dci.disentanglement);
    report.scores.insert("dci_completeness".into(), dci.completeness);
    report.scores.insert("dci_informativeness".into(), dci.informativeness);

    let (irs_score, irs_warn) = irs::score(points, config.irs_diff_quantile);
    report.scores.insert("irs".into(), irs_score);
    if let Some(w) = irs_warn {
        report.warnings.insert("irs".into(), w);
    }
}

/// Standalone mode: codes and factors from a CSV pair (header row expected).
pub fn point_set_from_csv(codes_path: &Path, factors_path: &Path) -> Result<PointSet> {
    let (codes, n, d) = read_csv_f64(codes_path)?;
    let (factors, nf, k) = read_csv_usize(factors_path)?;
    if n != nf {
        return Err(Error::config(format!(
            "codes have {n} rows but factors have {nf}"
        )));
    }
    let mut cards = vec![0usize; k];
    for row in factors.chunks(k) {
        for (c, &f) in cards.iter_mut().zip(row) {
            *c = (*c).max(f + 1);
        }
    }
    Ok(PointSet { codes, n, d, factors, k, cards })
}

/// Evaluate the standalone CSV mode: point metrics only; the two
/// sampling-interface scores are reported as errors.
pub fn evaluate_csv(
    codes_path: &Path,
    factors_path: &Path,
    config: &MetricsConfig,
    seed: u64,
) -> Result<MetricReport> {
    let points = point_set_from_csv(codes_path, factors_path)?;
    let mut report = MetricReport {
        scores: BTreeMap::new(),
        errors: BTreeMap::new(),
        warnings: BTreeMap::new(),
        config: config.clone(),
        seed,
    };
    let need_sampling = "requires the factor-conditional sampling interface; not available from CSV";
    report.errors.insert("betavae".into(), need_sampling.into());
    report.errors.insert("factorvae".into(), need_sampling.into());
    evaluate_point_metrics(&points, config, seed, &mut report);
    Ok(report)
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<String>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue; // header
        }
        rows.push(line.split(',').map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::config(format!("{}: no data rows", path.display())));
    }
    let width = rows[0].len();
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::config(format!("{}: ragged rows", path.display())));
    }
    Ok(rows)
}

fn read_csv_f64(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let rows = read_csv_rows(path)?;
    let (n, d) = (rows.len(), rows[0].len());
    let mut out = Vec::with_capacity(n * d);
    for row in &rows {
        for cell in row {
            out.push(cell.parse::<f64>().map_err(|_| {
                Error::config(format!("{}: bad float '{cell}'", path.display()))
            })?);
        }
    }
    Ok((out, n, d))
}

fn read_csv_usize(path: &Path) -> Result<(Vec<usize>, usize, usize)> {
    let rows = read_csv_rows(path)?;
    let (n, k) = (rows.len(), rows[0].len());
    let mut out = Vec::with_capacity(n * k);
    for row in &rows {
        for cell in row {
            out.push(cell.parse::<usize>().map_err(|_| {
                Error::config(format!("{}: bad integer '{cell}'", path.display()))
            })?);
        }
    }
    Ok((out, n, k))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_keys_match_the_metric_catalogue() {
        let ds = FactorDataset::shapes5();
        let rep = Representation::from_factors(&ds);
        let mut config = MetricsConfig::default();
        config.num_votes = 60; // keep the unit test quick
        let report = evaluate_all(&rep, &ds, &config, 7);
        let keys: Vec<&str> = report.scores.keys().map(|s| s.as_str()).collect();
        assert_eq!(
            keys,
            vec![
                "betavae",
                "dci_completeness",
                "dci_disentanglement",
                "dci_informativeness",
                "factorvae",
                "irs",
                "mig",
                "sap"
            ]
        );
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        for (k, v) in &report.scores {
            assert!((0.0..=1.0).contains(v), "score {k} out of range: {v}");
        }
    }

    #[test]
    fn same_seed_gives_identical_reports() {
        let ds = FactorDataset::shapes5();
        let rep = Representation::noise(4, 3);
        let mut config = MetricsConfig::default();
        config.num_votes = 60;
        let a = evaluate_all(&rep, &ds, &config, 11).to_json();
        let b = evaluate_all(&rep, &ds, &config, 11).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn csv_standalone_mode_round_trips() {
        let dir = std::env::temp_dir().join("disent_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let codes = dir.join("codes.csv");
        let factors = dir.join("factors.csv");
        // codes = factors in two dimensions over a 3x4 product design
        let mut ctext = String::from("z0,z1\n");
        let mut ftext = String::from("f0,f1\n");
        for a in 0..3 {
            for b in 0..4 {
                ctext.push_str(&format!("{}.0,{}.0\n", a, b));
                ftext.push_str(&format!("{a},{b}\n"));
            }
        }
        std::fs::write(&codes, ctext).unwrap();
        std::fs::write(&factors, ftext).unwrap();

        let report = evaluate_csv(&codes, &factors, &MetricsConfig::default(), 5).unwrap();
        assert!(report.get("mig").unwrap() > 0.95);
        assert!(report.errors.contains_key("betavae"));
        assert!(report.errors.contains_key("factorvae"));
    }

    #[test]
    fn scale_invariance_of_mig_sap_dci() {
        let ds = FactorDataset::shapes5();
        let plain = Representation::from_factors(&ds);
        let scaled = Representation::from_fn(5, |batch| {
            let scales = [2.0, -0.5, 13.0, 0.03, 1.0];
            let offsets = [5.0, -2.0, 0.0, 100.0, -7.0];
            let mut out = Vec::with_capacity(batch.batch * 5);
            for i in 0..batch.batch {
                for (j, &f) in batch.factor_row(i).iter().enumerate() {
                    out.push(f as f64 * scales[j] + offsets[j]);
                }
            }
            out
        });
        let config = MetricsConfig::default();
        let mut rng = DetRng::seed_from(derive_seed(13, "points"));
        let pa = collect_points(&plain, &ds, config.num_points, &mut rng).unwrap();
        let mut rng = DetRng::seed_from(derive_seed(13, "points"));
        let pb = collect_points(&scaled, &ds, config.num_points, &mut rng).unwrap();

        let mut ra = MetricReport {
            scores: BTreeMap::new(),
            errors: BTreeMap::new(),
            warnings: BTreeMap::new(),
            config: config.clone(),
            seed: 13,
        };
        let mut rb = ra.clone();
        evaluate_point_metrics(&pa, &config, 13, &mut ra);
        evaluate_point_metrics(&pb, &config, 13, &mut rb);
        for key in ["mig", "sap", "dci_disentanglement"] {
            let (a, b) = (ra.get(key).unwrap(), rb.get(key).unwrap());
            assert!(
                (a - b).abs() < 1e-9,
                "{key} not scale-invariant: {a} vs {b}"
            );
        }
    }
}
