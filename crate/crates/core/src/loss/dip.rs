//! Disentangled inferred prior penalty: drives the aggregate-posterior
//! covariance toward the identity.

use serde::{Deserialize, Serialize};

use crate::prob::LatentPosterior;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DipMode {
    /// Covariance of the posterior means.
    I,
    /// Covariance of means plus the mean posterior variance on the diagonal.
    Ii,
}

/// lambda_od · Σ_{i≠j} Cov[i,j]² + lambda_d · Σ_i (Cov[i,i] − 1)².
pub fn dip_term<S: Scalar>(
    post: &LatentPosterior<S>,
    mode: DipMode,
    lambda_od: f64,
    lambda_d: f64,
) -> Tensor<S> {
    let b = post.batch();
    assert!(b >= 2, "dip needs batch size >= 2");
    let d = post.dim();

    let mean = post.mu.mean_axes(&[0], true); // 1×d
    let centered = post.mu.sub(&mean);
    let mut cov = centered
        .transpose2()
        .matmul(&centered)
        .div_scalar(c(b as f64)); // d×d

    let mut eye = vec![S::zero(); d * d];
    for i in 0..d {
        eye[i * d + i] = S::one();
    }
    let eye = Tensor::from_vec(eye, &[d, d]);

    if mode == DipMode::Ii {
        let avg_var = post.logvar.exp().mean_axes(&[0], false); // (d,)
        cov = cov.add(&eye.mul(&avg_var));
    }

    let off = cov.mul(&eye.neg().add_scalar(S::one()));
    let off_term = off.square().sum_all();
    let diag = cov.mul(&eye).sum_axes(&[1], false); // (d,)
    let diag_term = diag.sub_scalar(S::one()).square().sum_all();
    off_term
        .mul_scalar(c(lambda_od))
        .add(&diag_term.mul_scalar(c(lambda_d)))
}
