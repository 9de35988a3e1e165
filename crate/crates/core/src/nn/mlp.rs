//! Small dense stacks for the adversarial pieces (density-ratio
//! discriminator, auxiliary/adversarial classifiers).

use serde::{Deserialize, Serialize};

use crate::rng::DetRng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    /// Negative-side slope of the hidden leaky-relu activations.
    pub leaky_slope: f64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        // scaled-down FactorVAE discriminator recipe
        MlpSpec {
            hidden: vec![256, 256, 256, 256],
            leaky_slope: 0.2,
        }
    }
}

pub struct Mlp<S: Scalar = f64> {
    layers: Vec<(Tensor<S>, Tensor<S>)>,
    slope: f64,
}

impl<S: Scalar> Mlp<S> {
    pub fn new(in_dim: usize, spec: &MlpSpec, out_dim: usize, rng: &mut DetRng) -> Self {
        let mut dims = vec![in_dim];
        dims.extend(&spec.hidden);
        dims.push(out_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let weight = super::kaiming(rng, &[w[0], w[1]], w[0]);
                let bias = Tensor::zeros(&[w[1]]).requires_grad();
                (weight, bias)
            })
            .collect();
        Mlp {
            layers,
            slope: spec.leaky_slope,
        }
    }

    /// Zero the final layer so initial logits are exactly zero.
    pub fn zero_last_layer(&self) {
        let (w, b) = self.layers.last().expect("mlp has at least one layer");
        w.update_data(|d| d.iter_mut().for_each(|v| *v = S::zero()));
        b.update_data(|d| d.iter_mut().for_each(|v| *v = S::zero()));
    }

    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let mut h = x.clone();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = h.matmul(w).add(b);
            if i + 1 < self.layers.len() {
                h = h.leaky_relu(self.slope);
            }
        }
        h
    }

    pub fn named_parameters(&self, prefix: &str) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        for (i, (w, b)) in self.layers.iter().enumerate() {
            out.push((format!("{prefix}.{i}.weight"), w.clone()));
            out.push((format!("{prefix}.{i}.bias"), b.clone()));
        }
        out
    }
}
