//! Information-factorization machinery: an auxiliary classifier ties the
//! first `label_dims` latents to the known attribute while an adversarial
//! classifier, trained min-max on the remaining latents, drives attribute
//! information out of them.

use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp, MlpSpec};
use crate::prob::{accuracy_logits, cross_entropy_logits, LatentPosterior};
use crate::rng::DetRng;
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

pub struct IfcvaeAux<S: Scalar = f64> {
    pub label_dims: usize,
    pub num_classes: usize,
    pub w_aux: f64,
    pub w_adv: f64,
    aux_clf: Mlp<S>,
    adv_clf: Mlp<S>,
    aux_params: Vec<(String, Tensor<S>)>,
    adv_params: Vec<(String, Tensor<S>)>,
    aux_adam: AdamState<S>,
    adv_adam: AdamState<S>,
    latent_dim: usize,
}

impl<S: Scalar> IfcvaeAux<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        latent_dim: usize,
        num_classes: usize,
        label_dims: usize,
        w_aux: f64,
        w_adv: f64,
        clf_spec: &MlpSpec,
        clf_lr: f64,
        rng: &mut DetRng,
    ) -> Result<Self> {
        if label_dims == 0 || label_dims > latent_dim {
            return Err(Error::config(format!(
                "ifcvae label_dims must be in 1..={latent_dim}, got {label_dims}"
            )));
        }
        if label_dims == latent_dim {
            return Err(Error::config(
                "ifcvae needs at least one latent outside the label block",
            ));
        }
        let aux_clf = Mlp::new(label_dims, clf_spec, num_classes, rng);
        let adv_clf = Mlp::new(latent_dim - label_dims, clf_spec, num_classes, rng);
        let aux_params = aux_clf.named_parameters("ifcvae.aux");
        let adv_params = adv_clf.named_parameters("ifcvae.adv");
        let aux_adam = AdamState::with_defaults(&aux_params, clf_lr);
        let adv_adam = AdamState::with_defaults(&adv_params, clf_lr);
        Ok(IfcvaeAux {
            label_dims,
            num_classes,
            w_aux,
            w_adv,
            aux_clf,
            adv_clf,
            aux_params,
            adv_params,
            aux_adam,
            adv_adam,
            latent_dim,
        })
    }

    /// Model-side contribution:
    /// w_aux · CE(aux(z[:, :L]), y) − w_adv · CE(adv(z[:, L:]), y).
    pub fn model_term(&self, post: &LatentPosterior<S>, targets: &[usize]) -> Tensor<S> {
        let d = self.latent_dim;
        let z_head = post.z.narrow(1, 0, self.label_dims);
        let z_tail = post.z.narrow(1, self.label_dims, d - self.label_dims);
        let aux_ce = cross_entropy_logits(&self.aux_clf.forward(&z_head), targets);
        let adv_ce = cross_entropy_logits(&self.adv_clf.forward(&z_tail), targets);
        aux_ce
            .mul_scalar(c(self.w_aux))
            .sub(&adv_ce.mul_scalar(c(self.w_adv)))
    }

    /// Post-backward updates: step the auxiliary classifier on the gradients
    /// already accumulated by the joint backward pass, then train the
    /// adversarial classifier one step on the detached latent tail.
    /// Returns (aux accuracy, adv accuracy) on this batch.
    pub fn aux_step(&mut self, post: &LatentPosterior<S>, targets: &[usize]) -> Result<(f64, f64)> {
        // joint update (gradients carry the w_aux factor)
        if self.w_aux > 0.0 {
            self.aux_adam.step(&self.aux_params)?;
        }
        for (_, p) in &self.aux_params {
            p.zero_grad();
        }
        // drop the wrong-sign gradients the min-max term pushed into the
        // adversary, then train it to minimize its own CE on detached input
        for (_, p) in &self.adv_params {
            p.zero_grad();
        }
        let d = self.latent_dim;
        let tail = post.z.narrow(1, self.label_dims, d - self.label_dims).detach();
        let logits = self.adv_clf.forward(&tail);
        cross_entropy_logits(&logits, targets).backward();
        self.adv_adam.step(&self.adv_params)?;
        for (_, p) in &self.adv_params {
            p.zero_grad();
        }

        let head = post.z.narrow(1, 0, self.label_dims).detach();
        let aux_acc = accuracy_logits(&self.aux_clf.forward(&head), targets);
        let adv_acc = accuracy_logits(&logits, targets);
        Ok((aux_acc, adv_acc))
    }

    pub fn zero_classifier_logits(&self) {
        self.aux_clf.zero_last_layer();
        self.adv_clf.zero_last_layer();
    }

    pub fn named_parameters(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = self.aux_params.clone();
        out.extend(self.adv_params.clone());
        out
    }

    pub fn adam_states(&mut self) -> Vec<(&'static str, &mut AdamState<S>, Vec<(String, Tensor<S>)>)> {
        vec![
            ("ifcvae.aux", &mut self.aux_adam, self.aux_params.clone()),
            ("ifcvae.adv", &mut self.adv_adam, self.adv_params.clone()),
        ]
    }

    pub fn adam_refs(&self) -> Vec<(&'static str, &AdamState<S>, Vec<(String, Tensor<S>)>)> {
        vec![
            ("ifcvae.aux", &self.aux_adam, self.aux_params.clone()),
            ("ifcvae.adv", &self.adv_adam, self.adv_params.clone()),
        ]
    }
}
