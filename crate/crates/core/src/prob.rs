//! Diagonal-Gaussian machinery and reconstruction losses shared by every
//! objective term.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::DetRng;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.8378770664093453;

/// Per-sample diagonal Gaussian over the latent space plus the drawn sample.
/// `z = mu + exp(0.5·logvar) ⊙ eps` with `eps` recorded per sample.
pub struct LatentPosterior<S: Scalar = f64> {
    pub mu: Tensor<S>,
    pub logvar: Tensor<S>,
    pub z: Tensor<S>,
    pub eps: Tensor<S>,
}

impl<S: Scalar> LatentPosterior<S> {
    /// Reparameterized sample; gradient flows through mu and logvar, not eps.
    pub fn sample(mu: Tensor<S>, logvar: Tensor<S>, rng: &mut DetRng) -> Self {
        assert_eq!(mu.shape(), logvar.shape(), "mu/logvar shape mismatch");
        let eps = Tensor::from_vec(
            (0..mu.len()).map(|_| c(rng.normal())).collect(),
            mu.shape(),
        );
        Self::with_eps(mu, logvar, eps)
    }

    /// Reparameterize with the noise supplied by the caller.
    pub fn with_eps(mu: Tensor<S>, logvar: Tensor<S>, eps: Tensor<S>) -> Self {
        assert_eq!(mu.shape(), logvar.shape(), "mu/logvar shape mismatch");
        assert_eq!(mu.shape(), eps.shape(), "eps shape mismatch");
        let z = reparameterize(&mu, &logvar, &eps);
        LatentPosterior { mu, logvar, z, eps }
    }

    pub fn batch(&self) -> usize {
        self.mu.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.mu.shape()[1]
    }
}

/// z = mu + exp(0.5·logvar) ⊙ eps.
pub fn reparameterize<S: Scalar>(mu: &Tensor<S>, logvar: &Tensor<S>, eps: &Tensor<S>) -> Tensor<S> {
    let std = logvar.mul_scalar(c(0.5)).exp();
    mu.add(&std.mul(eps))
}

/// KL(N(mu, diag exp(logvar)) || N(0, I)) per sample:
/// 0.5 · Σ_j (mu² + exp(logvar) − logvar − 1), shape (B,).
pub fn kl_to_standard_normal<S: Scalar>(mu: &Tensor<S>, logvar: &Tensor<S>) -> Tensor<S> {
    assert_eq!(mu.shape(), logvar.shape(), "mu/logvar shape mismatch");
    let terms = mu
        .square()
        .add(&logvar.exp())
        .sub(logvar)
        .sub_scalar(S::one());
    terms.sum_axes(&[1], false).mul_scalar(c(0.5))
}

/// Pairwise log-densities: entry (i, j, k) = log N(z_{i,k}; mu_{j,k},
/// exp(logvar_{j,k})). Z is B×d, mu/logvar are B'×d; result is B×B'×d.
pub fn log_density_diag_gaussian<S: Scalar>(
    z: &Tensor<S>,
    mu: &Tensor<S>,
    logvar: &Tensor<S>,
) -> Tensor<S> {
    assert_eq!(z.rank(), 2);
    assert_eq!(mu.shape(), logvar.shape());
    assert_eq!(z.shape()[1], mu.shape()[1], "latent dimensionality disagrees");
    let (b, d) = (z.shape()[0], z.shape()[1]);
    let bp = mu.shape()[0];
    let zs = z.reshape(&[b, 1, d]);
    let ms = mu.reshape(&[1, bp, d]);
    let lvs = logvar.reshape(&[1, bp, d]);
    let diff = zs.sub(&ms);
    let inv_var = lvs.neg().exp();
    diff.square()
        .mul(&inv_var)
        .add(&lvs)
        .add_scalar(c(LN_2PI))
        .mul_scalar(c(-0.5))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    #[default]
    Bernoulli,
    Mse,
}

impl std::str::FromStr for ReconKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bernoulli" => Ok(ReconKind::Bernoulli),
            "mse" => Ok(ReconKind::Mse),
            other => Err(Error::config(format!(
                "unknown reconstruction kind '{other}' (expected bernoulli or mse)"
            ))),
        }
    }
}

/// Reconstruction loss, summed over pixels and averaged over the batch.
/// Bernoulli clamps x_hat to [prob_eps, 1−prob_eps] before the logs.
pub fn recon_loss<S: Scalar>(x: &Tensor<S>, x_hat: &Tensor<S>, kind: ReconKind) -> Tensor<S> {
    assert_eq!(x.shape(), x_hat.shape(), "recon shapes disagree");
    let b = x.shape()[0];
    let per_element = match kind {
        ReconKind::Bernoulli => {
            let eps = S::prob_eps();
            let xh = x_hat.clamp(eps, S::one() - eps);
            let pos = x.mul(&xh.ln());
            let neg = x.neg().add_scalar(S::one()).mul(&xh.neg().add_scalar(S::one()).ln());
            pos.add(&neg).neg()
        }
        ReconKind::Mse => x.sub(x_hat).square(),
    };
    per_element.sum_all().div_scalar(c(b as f64))
}

/// Mean softmax cross-entropy of integer targets against logits (B×C).
pub fn cross_entropy_logits<S: Scalar>(logits: &Tensor<S>, targets: &[usize]) -> Tensor<S> {
    let (b, classes) = (logits.shape()[0], logits.shape()[1]);
    assert_eq!(targets.len(), b, "target count disagrees with batch");
    let mut onehot = vec![S::zero(); b * classes];
    for (i, &t) in targets.iter().enumerate() {
        assert!(t < classes, "target {t} out of range for {classes} classes");
        onehot[i * classes + t] = S::one();
    }
    let oh = Tensor::from_vec(onehot, &[b, classes]);
    let lse = logits.logsumexp(1, false);
    let picked = logits.mul(&oh).sum_axes(&[1], false);
    lse.sub(&picked).mean_all()
}

/// Fraction of rows whose argmax equals the target (forward-only).
pub fn accuracy_logits<S: Scalar>(logits: &Tensor<S>, targets: &[usize]) -> f64 {
    let (b, classes) = (logits.shape()[0], logits.shape()[1]);
    let data = logits.to_vec();
    let mut hits = 0usize;
    for (i, &t) in targets.iter().enumerate() {
        let row = &data[i * classes..(i + 1) * classes];
        let mut best = 0usize;
        for j in 1..classes {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == t {
            hits += 1;
        }
    }
    hits as f64 / b as f64
}
