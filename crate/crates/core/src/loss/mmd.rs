//! Maximum mean discrepancy between the aggregate posterior batch and fresh
//! standard-normal draws (biased V-statistic, RBF kernel).

use serde::{Deserialize, Serialize};

use crate::rng::DetRng;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    /// sigma² = latent dimensionality (the standard-normal-prior heuristic).
    #[default]
    Dim,
    /// Fixed sigma².
    Fixed(f64),
}

fn mean_rbf_gram<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>, sigma_sq: f64) -> Tensor<S> {
    let (n, d) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[0];
    let ai = a.reshape(&[n, 1, d]);
    let bj = b.reshape(&[1, m, d]);
    let sq_dist = ai.sub(&bj).square().sum_axes(&[2], false); // n×m
    sq_dist.mul_scalar(c(-1.0 / (2.0 * sigma_sq))).exp().mean_all()
}

/// MMD² between the batch z and an equal number of prior draws, scaled by
/// `lambda`. Gradient flows through z only.
pub fn mmd_term<S: Scalar>(
    z: &Tensor<S>,
    rng: &mut DetRng,
    lambda: f64,
    bandwidth: BandwidthMode,
) -> Tensor<S> {
    assert_eq!(z.rank(), 2, "mmd expects B x d");
    let (b, d) = (z.shape()[0], z.shape()[1]);
    assert!(b >= 2, "mmd needs batch size >= 2");
    let sigma_sq = match bandwidth {
        BandwidthMode::Dim => d as f64,
        BandwidthMode::Fixed(v) => v,
    };
    let prior = Tensor::from_vec((0..b * d).map(|_| c(rng.normal())).collect(), &[b, d]);
    mmd_squared(z, &prior, sigma_sq).mul_scalar(c(lambda))
}

/// Biased V-statistic MMD² with an RBF kernel of bandwidth sigma².
pub fn mmd_squared<S: Scalar>(x: &Tensor<S>, y: &Tensor<S>, sigma_sq: f64) -> Tensor<S> {
    let kxx = mean_rbf_gram(x, x, sigma_sq);
    let kyy = mean_rbf_gram(y, y, sigma_sq);
    let kxy = mean_rbf_gram(x, y, sigma_sq);
    kxx.add(&kyy).sub(&kxy.mul_scalar(c(2.0)))
}
