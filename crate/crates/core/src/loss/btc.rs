//! Total-correlation decomposition of the KL term with minibatch-weighted
//! sampling: KL = MI + TC + dimension-wise KL, each estimated from the
//! pairwise posterior log-densities of one batch.

use crate::prob::{log_density_diag_gaussian, LatentPosterior};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

const LN_2PI: f64 = 1.8378770664093453;

/// The three decomposition estimates, each a scalar tensor on the graph.
pub struct BtcDecomposition<S: Scalar = f64> {
    pub mutual_info: Tensor<S>,
    pub total_correlation: Tensor<S>,
    pub dim_kl: Tensor<S>,
}

/// Minibatch-weighted estimates over one batch:
///   log q(z_i|x_i) = Σ_k M[i,i,k]
///   log q(z_i)      ≈ logsumexp_j Σ_k M[i,j,k] − log(N·B)
///   log Π_k q(z_ik) ≈ Σ_k (logsumexp_j M[i,j,k] − log(N·B))
/// with M the pairwise log-density cube and N the dataset size.
pub fn btc_decompose<S: Scalar>(post: &LatentPosterior<S>, dataset_size: usize) -> BtcDecomposition<S> {
    let b = post.batch();
    let d = post.dim();
    assert!(b >= 2, "btc decomposition needs batch size >= 2");
    assert!(dataset_size >= b, "dataset_size must be at least the batch size");

    let m = log_density_diag_gaussian(&post.z, &post.mu, &post.logvar); // B×B×d
    let log_nb = c::<S>((dataset_size as f64 * b as f64).ln());

    // diagonal mask picks M[i,i,:]
    let mut eye = vec![S::zero(); b * b];
    for i in 0..b {
        eye[i * b + i] = S::one();
    }
    let eye = Tensor::from_vec(eye, &[b, b, 1]);
    let log_qzx = m.mul(&eye).sum_axes(&[1, 2], false); // (B,)

    let joint = m.sum_axes(&[2], false); // (B,B)
    let log_qz = joint.logsumexp(1, false).sub_scalar(log_nb); // (B,)

    let per_dim = m.logsumexp(1, false); // (B,d)
    let log_prod = per_dim.sum_axes(&[1], false).sub_scalar(c::<S>(d as f64) * log_nb); // (B,)

    // log p(z) under the standard-normal prior
    let log_pz = post
        .z
        .square()
        .add_scalar(c(LN_2PI))
        .mul_scalar(c(-0.5))
        .sum_axes(&[1], false);

    BtcDecomposition {
        mutual_info: log_qzx.sub(&log_qz).mean_all(),
        total_correlation: log_qz.sub(&log_prod).mean_all(),
        dim_kl: log_prod.sub(&log_pz).mean_all(),
    }
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Independent O(B²·d) double-loop estimator used only to cross-check
    //! the tensor implementation.

    pub struct BtcOracle {
        pub mi: f64,
        pub tc: f64,
        pub dim_kl: f64,
    }

    fn log_normal(z: f64, mu: f64, logvar: f64) -> f64 {
        -0.5 * (super::LN_2PI + logvar + (z - mu) * (z - mu) / logvar.exp())
    }

    fn logsumexp(xs: &[f64]) -> f64 {
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
    }

    pub fn btc_oracle(z: &[f64], mu: &[f64], logvar: &[f64], b: usize, d: usize, n: usize) -> BtcOracle {
        let log_nb = (n as f64 * b as f64).ln();
        let (mut mi, mut tc, mut dkl) = (0.0, 0.0, 0.0);
        for i in 0..b {
            let mut log_qzx = 0.0;
            for k in 0..d {
                log_qzx += log_normal(z[i * d + k], mu[i * d + k], logvar[i * d + k]);
            }
            let joint: Vec<f64> = (0..b)
                .map(|j| {
                    (0..d)
                        .map(|k| log_normal(z[i * d + k], mu[j * d + k], logvar[j * d + k]))
                        .sum()
                })
                .collect();
            let log_qz = logsumexp(&joint) - log_nb;
            let mut log_prod = 0.0;
            for k in 0..d {
                let col: Vec<f64> = (0..b)
                    .map(|j| log_normal(z[i * d + k], mu[j * d + k], logvar[j * d + k]))
                    .collect();
                log_prod += logsumexp(&col) - log_nb;
            }
            let log_pz: f64 = (0..d)
                .map(|k| -0.5 * (super::LN_2PI + z[i * d + k] * z[i * d + k]))
                .sum();
            mi += log_qzx - log_qz;
            tc += log_qz - log_prod;
            dkl += log_prod - log_pz;
        }
        BtcOracle {
            mi: mi / b as f64,
            tc: tc / b as f64,
            dim_kl: dkl / b as f64,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DetRng;

    fn random_posterior(rng: &mut DetRng, b: usize, d: usize) -> LatentPosterior<f64> {
        let mu = Tensor::from_vec((0..b * d).map(|_| rng.normal()).collect(), &[b, d]);
        let logvar = Tensor::from_vec(
            (0..b * d).map(|_| rng.normal() * 0.5).collect(),
            &[b, d],
        );
        LatentPosterior::sample(mu, logvar, rng)
    }

    #[test]
    fn telescoping_identity_is_exact() {
        let mut rng = DetRng::seed_from(7);
        let post = random_posterior(&mut rng, 8, 3);
        let dec = btc_decompose(&post, 100);
        let total = dec.mutual_info.item() + dec.total_correlation.item() + dec.dim_kl.item();
        // direct mean of log q(z|x) - log p(z)
        let m = crate::prob::log_density_diag_gaussian(&post.z, &post.mu, &post.logvar);
        let mv = m.to_vec();
        let zv = post.z.to_vec();
        let (b, d) = (8usize, 3usize);
        let mut direct = 0.0;
        for i in 0..b {
            for k in 0..d {
                direct += mv[(i * b + i) * d + k];
                direct -= -0.5 * (LN_2PI + zv[i * d + k] * zv[i * d + k]);
            }
        }
        direct /= b as f64;
        assert!(
            (total - direct).abs() < 1e-10,
            "telescoped {total} vs direct {direct}"
        );
    }

    #[test]
    fn single_dimension_has_zero_total_correlation() {
        let mut rng = DetRng::seed_from(8);
        let post = random_posterior(&mut rng, 12, 1);
        let dec = btc_decompose(&post, 50);
        assert!(
            dec.total_correlation.item().abs() < 1e-12,
            "TC with d=1 must vanish, got {}",
            dec.total_correlation.item()
        );
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = DetRng::seed_from(9);
        for trial in 0..20 {
            let b = 2 + rng.below(15);
            let d = 1 + rng.below(8);
            let n = b + rng.below(5000);
            let post = random_posterior(&mut rng, b, d);
            let dec = btc_decompose(&post, n);
            let orc = oracle::btc_oracle(
                &post.z.to_vec(),
                &post.mu.to_vec(),
                &post.logvar.to_vec(),
                b,
                d,
                n,
            );
            assert!(
                (dec.mutual_info.item() - orc.mi).abs() < 1e-10,
                "trial {trial}: MI {} vs oracle {}",
                dec.mutual_info.item(),
                orc.mi
            );
            assert!(
                (dec.total_correlation.item() - orc.tc).abs() < 1e-10,
                "trial {trial}: TC {} vs oracle {}",
                dec.total_correlation.item(),
                orc.tc
            );
            assert!(
                (dec.dim_kl.item() - orc.dim_kl).abs() < 1e-10,
                "trial {trial}: dimKL {} vs oracle {}",
                dec.dim_kl.item(),
                orc.dim_kl
            );
        }
    }

    #[test]
    #[should_panic(expected = "batch size >= 2")]
    fn tiny_batch_is_rejected() {
        let mut rng = DetRng::seed_from(1);
        let post = random_posterior(&mut rng, 1, 2);
        let _ = btc_decompose(&post, 10);
    }

    #[test]
    fn gradients_flow_to_posterior_parameters() {
        let mut rng = DetRng::seed_from(11);
        let mu = Tensor::from_vec((0..12).map(|_| rng.normal()).collect(), &[4, 3]).requires_grad();
        let lv = Tensor::from_vec((0..12).map(|_| rng.normal() * 0.3).collect(), &[4, 3]).requires_grad();
        let post = LatentPosterior::sample(mu.clone(), lv.clone(), &mut rng);
        let dec = btc_decompose(&post, 64);
        dec.total_correlation.backward();
        assert!(mu.grad().is_some());
        assert!(lv.grad().is_some());
    }
}
