//! Training-time schedulers: linear capacity ramp, reconstruction-weight
//! relaxation, and plateau-based learning-rate decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear ramp of the KL capacity target C (nats) from `c_start` to `c_max`
/// over `ramp_iters` iterations, clamped at `c_max` afterwards.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacitySchedule {
    pub c_start: f64,
    pub c_max: f64,
    pub ramp_iters: u64,
}

impl CapacitySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.c_start && self.c_start <= self.c_max) {
            return Err(Error::config(format!(
                "capacity schedule needs 0 <= c_start <= c_max, got {} and {}",
                self.c_start, self.c_max
            )));
        }
        if self.ramp_iters == 0 {
            return Err(Error::config("capacity ramp_iters must be >= 1"));
        }
        Ok(())
    }

    pub fn at(&self, iter: u64) -> f64 {
        let frac = (iter as f64 / self.ramp_iters as f64).min(1.0);
        self.c_start + (self.c_max - self.c_start) * frac
    }
}

/// Linear interpolation of the reconstruction weight from `w_start` to
/// `w_end`; constant when the endpoints agree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconWeightSchedule {
    pub w_start: f64,
    pub w_end: f64,
    pub ramp_iters: u64,
}

impl ReconWeightSchedule {
    pub fn constant(w: f64) -> Self {
        ReconWeightSchedule { w_start: w, w_end: w, ramp_iters: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_start <= 0.0 || self.w_end <= 0.0 {
            return Err(Error::config("reconstruction weights must be positive"));
        }
        if self.ramp_iters == 0 {
            return Err(Error::config("recon weight ramp_iters must be >= 1"));
        }
        Ok(())
    }

    pub fn at(&self, iter: u64) -> f64 {
        let frac = (iter as f64 / self.ramp_iters as f64).min(1.0);
        self.w_start + (self.w_end - self.w_start) * frac
    }
}

/// Reduce-on-plateau state: when the epoch-mean objective has not improved
/// by a relative `threshold` for more than `patience` epochs, multiply the
/// learning rate by `factor` (floored at `min_lr`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlateauLr {
    pub current_lr: f64,
    pub factor: f64,
    pub patience: u32,
    pub threshold: f64,
    pub min_lr: f64,
    pub best_value: Option<f64>,
    pub epochs_since_best: u32,
}

impl PlateauLr {
    pub fn new(initial_lr: f64, factor: f64, patience: u32, threshold: f64, min_lr: f64) -> Self {
        PlateauLr {
            current_lr: initial_lr,
            factor,
            patience,
            threshold,
            min_lr,
            best_value: None,
            epochs_since_best: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.factor > 0.0 && self.factor < 1.0) {
            return Err(Error::config(format!(
                "plateau factor must be in (0,1), got {}",
                self.factor
            )));
        }
        Ok(())
    }

    /// Feed one epoch-mean objective; returns the (possibly reduced)
    /// learning rate. NaN objectives are a numeric failure.
    pub fn update(&mut self, epoch_mean_objective: f64) -> Result<f64> {
        if epoch_mean_objective.is_nan() {
            return Err(Error::numeric("epoch-mean objective is NaN"));
        }
        let improved = match self.best_value {
            None => true,
            Some(best) => epoch_mean_objective < best * (1.0 - self.threshold),
        };
        if improved {
            self.best_value = Some(epoch_mean_objective);
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
            if self.epochs_since_best > self.patience {
                self.current_lr = (self.current_lr * self.factor).max(self.min_lr);
                self.epochs_since_best = 0;
            }
        }
        Ok(self.current_lr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_paper_endpoints() {
        let s = CapacitySchedule { c_start: 0.0, c_max: 25.0, ramp_iters: 54_000 };
        assert_eq!(s.at(0), 0.0);
        assert_eq!(s.at(54_000), 25.0);
        assert_eq!(s.at(200_000), 25.0);
        assert_eq!(s.at(27_000), 12.5);
    }

    #[test]
    fn capacity_is_monotone() {
        let s = CapacitySchedule { c_start: 1.0, c_max: 9.0, ramp_iters: 100 };
        let mut prev = f64::NEG_INFINITY;
        for it in 0..200 {
            let v = s.at(it);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn recon_weight_constant_and_ramp() {
        let flat = ReconWeightSchedule::constant(1.0);
        assert_eq!(flat.at(0), 1.0);
        assert_eq!(flat.at(10_000), 1.0);

        let s = ReconWeightSchedule { w_start: 5.0, w_end: 1.0, ramp_iters: 100 };
        assert_eq!(s.at(0), 5.0);
        assert_eq!(s.at(50), 3.0);
        assert_eq!(s.at(100), 1.0);
        assert_eq!(s.at(101), 1.0);
    }

    #[test]
    fn plateau_never_reduces_on_strict_decrease() {
        let mut p = PlateauLr::new(0.001, 0.95, 2, 1e-4, 1e-5);
        for v in [10.0, 9.0, 8.0, 7.0, 6.0] {
            assert_eq!(p.update(v).unwrap(), 0.001);
        }
    }

    #[test]
    fn plateau_trace_reduces_exactly_once() {
        // [10, 9, 9, 9, 9] with patience 2: the 3rd non-improving epoch
        // trips the reduction, 0.001 -> 0.00095 exactly.
        let mut p = PlateauLr::new(0.001, 0.95, 2, 1e-4, 1e-5);
        assert_eq!(p.update(10.0).unwrap(), 0.001);
        assert_eq!(p.update(9.0).unwrap(), 0.001);
        assert_eq!(p.update(9.0).unwrap(), 0.001);
        assert_eq!(p.update(9.0).unwrap(), 0.001);
        assert_eq!(p.update(9.0).unwrap(), 0.00095);
    }

    #[test]
    fn repeated_plateaus_decay_geometrically_to_floor() {
        // first epoch sets the baseline; every later flat epoch reduces
        let mut p = PlateauLr::new(0.001, 0.95, 0, 1e-4, 9e-4);
        assert_eq!(p.update(5.0).unwrap(), 0.001);
        let mut lr = 0.001f64;
        for k in 2..=20 {
            let got = p.update(5.0).unwrap();
            lr = (lr * 0.95).max(9e-4);
            assert_eq!(got, lr, "epoch {k}");
        }
        assert_eq!(lr, 9e-4);
    }

    #[test]
    fn nan_objective_is_numeric_failure() {
        let mut p = PlateauLr::new(0.001, 0.95, 2, 1e-4, 1e-5);
        assert!(p.update(f64::NAN).is_err());
    }
}
