//! Pluggable objective terms and their composition into one training loss.
//!
//! Every objective is an independent plug-in re-weighting or augmenting the
//! variational objective; compatible terms can be freely mixed. The composed
//! loss is `w_recon · recon + Σ term values`, and the per-term breakdown sums
//! to the total exactly.

mod btc;
mod dip;
mod factor;
mod ifcvae;
mod mmd;

pub use btc::{btc_decompose, BtcDecomposition};
pub use dip::{dip_term, DipMode};
pub use factor::{factor_disc_step, factor_tc_term, permute_dims};
pub use ifcvae::IfcvaeAux;
pub use mmd::{mmd_squared, mmd_term, BandwidthMode};

use serde::{Deserialize, Serialize};

use crate::data::FactorDataset;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Mlp, MlpSpec};
use crate::prob::{kl_to_standard_normal, recon_loss, LatentPosterior, ReconKind};
use crate::rng::{derive_seed, DetRng};
use crate::scalar::{c, Scalar};
use crate::tensor::Tensor;

/// Capacity-controlled KL term: beta · |mean(kl) − C|. With C = 0 this is
/// the plain beta-VAE KL weighting (beta = 1 recovers the VAE ELBO term).
pub fn term_kl_capacity<S: Scalar>(kl_per_sample: &Tensor<S>, beta: f64, capacity: f64) -> Tensor<S> {
    assert!(beta >= 0.0 && capacity >= 0.0, "beta and capacity must be non-negative");
    kl_per_sample
        .mean_all()
        .sub_scalar(c(capacity))
        .abs()
        .mul_scalar(c(beta))
}

/// The objective catalogue accepted by `--loss_terms`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TermName {
    Vae,
    BetaVae,
    BtcVae,
    FactorVae,
    InfoVae,
    DipI,
    DipII,
    Cvae,
    Ifcvae,
}

pub const TERM_NAMES: [(&str, TermName); 9] = [
    ("VAE", TermName::Vae),
    ("BetaVAE", TermName::BetaVae),
    ("BTCVAE", TermName::BtcVae),
    ("FactorVAE", TermName::FactorVae),
    ("InfoVAE", TermName::InfoVae),
    ("DIP_I", TermName::DipI),
    ("DIP_II", TermName::DipII),
    ("CVAE", TermName::Cvae),
    ("IFCVAE", TermName::Ifcvae),
];

impl TermName {
    /// Case-insensitive parse of a CLI term name.
    pub fn parse(s: &str) -> Result<TermName> {
        let lower = s.to_ascii_lowercase();
        for (name, term) in TERM_NAMES {
            if name.to_ascii_lowercase() == lower {
                return Ok(term);
            }
        }
        let valid: Vec<&str> = TERM_NAMES.iter().map(|(n, _)| *n).collect();
        Err(Error::config(format!(
            "unknown loss term '{s}'; valid terms: {}",
            valid.join(", ")
        )))
    }

    pub fn canonical(&self) -> &'static str {
        TERM_NAMES
            .iter()
            .find(|(_, t)| t == self)
            .map(|(n, _)| *n)
            .unwrap()
    }

    fn breakdown_key(&self) -> String {
        self.canonical().to_ascii_lowercase()
    }

    /// Terms that re-weight the same KL decomposition conflict by default.
    fn reprices_kl(&self) -> bool {
        matches!(self, TermName::Vae | TermName::BetaVae | TermName::BtcVae)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KlSettings {
    pub beta: f64,
}

impl Default for KlSettings {
    fn default() -> Self {
        KlSettings { beta: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BtcSettings {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Dataset size N for minibatch-weighted sampling; read from the dataset
    /// when absent.
    pub dataset_size: Option<usize>,
}

impl Default for BtcSettings {
    fn default() -> Self {
        BtcSettings { alpha: 1.0, beta: 2.0, gamma: 1.0, dataset_size: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorSettings {
    pub gamma_tc: f64,
    pub disc: MlpSpec,
    pub disc_lr: f64,
    pub disc_beta1: f64,
}

impl Default for FactorSettings {
    fn default() -> Self {
        FactorSettings {
            gamma_tc: 10.0,
            disc: MlpSpec::default(),
            disc_lr: 1e-4,
            disc_beta1: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MmdSettings {
    pub lambda: f64,
    pub bandwidth: BandwidthMode,
}

impl Default for MmdSettings {
    fn default() -> Self {
        MmdSettings { lambda: 10.0, bandwidth: BandwidthMode::Dim }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DipSettings {
    pub lambda_od: f64,
    pub lambda_d: f64,
}

impl Default for DipSettings {
    fn default() -> Self {
        DipSettings { lambda_od: 10.0, lambda_d: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvaeSettings {
    /// Ground-truth factor supplying the known attribute.
    pub condition: String,
}

impl Default for CvaeSettings {
    fn default() -> Self {
        CvaeSettings { condition: "shape".to_string() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IfcvaeSettings {
    pub label_factor: String,
    /// Latents reserved for the label; 0 means "one per class".
    pub label_dims: usize,
    pub w_aux: f64,
    pub w_adv: f64,
    pub classifier: MlpSpec,
    pub clf_lr: f64,
}

impl Default for IfcvaeSettings {
    fn default() -> Self {
        IfcvaeSettings {
            label_factor: "shape".to_string(),
            label_dims: 0,
            w_aux: 1.0,
            w_adv: 1.0,
            classifier: MlpSpec { hidden: vec![256, 256], leaky_slope: 0.2 },
            clf_lr: 1e-4,
        }
    }
}

/// Per-term hyperparameters, one bag per term kind.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TermSettings {
    pub kl: KlSettings,
    pub btc: BtcSettings,
    pub factor: FactorSettings,
    pub mmd: MmdSettings,
    pub dip: DipSettings,
    pub cvae: CvaeSettings,
    pub ifcvae: IfcvaeSettings,
}

/// Ordered list of enabled terms plus their hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub terms: Vec<TermName>,
    pub settings: TermSettings,
    pub recon_kind: ReconKind,
    /// Override for the {VAE/BetaVAE, BTCVAE} incompatibility.
    pub allow_term_overlap: bool,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            terms: vec![TermName::Vae],
            settings: TermSettings::default(),
            recon_kind: ReconKind::Bernoulli,
            allow_term_overlap: false,
        }
    }
}

impl ObjectiveSpec {
    pub fn from_names(names: &[&str]) -> Result<Self> {
        let terms = names.iter().map(|n| TermName::parse(n)).collect::<Result<Vec<_>>>()?;
        Ok(ObjectiveSpec { terms, ..Default::default() })
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::config("at least one loss term is required"));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(Error::config(format!(
                    "loss term {} listed twice",
                    t.canonical()
                )));
            }
        }
        let kl_family: Vec<&TermName> = self.terms.iter().filter(|t| t.reprices_kl()).collect();
        if kl_family.len() > 1 && !self.allow_term_overlap {
            let names: Vec<&str> = kl_family.iter().map(|t| t.canonical()).collect();
            return Err(Error::config(format!(
                "terms {} all re-weight the KL decomposition; pass allow_term_overlap to combine them",
                names.join(" and ")
            )));
        }
        let s = &self.settings;
        let weights = [
            ("kl.beta", s.kl.beta),
            ("btc.alpha", s.btc.alpha),
            ("btc.beta", s.btc.beta),
            ("btc.gamma", s.btc.gamma),
            ("factor.gamma_tc", s.factor.gamma_tc),
            ("mmd.lambda", s.mmd.lambda),
            ("dip.lambda_od", s.dip.lambda_od),
            ("dip.lambda_d", s.dip.lambda_d),
            ("ifcvae.w_aux", s.ifcvae.w_aux),
            ("ifcvae.w_adv", s.ifcvae.w_adv),
        ];
        for (name, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::config(format!(
                    "term weight {name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }

    pub fn has(&self, t: TermName) -> bool {
        self.terms.contains(&t)
    }
}

/// Per-step scalar record: term name -> weighted value, plus the total and
/// the reconstruction term. `total = recon_weight · recon + Σ entries`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermBreakdown {
    pub recon: f64,
    pub recon_weight: f64,
    pub entries: Vec<(String, f64)>,
    /// Forward-only diagnostics (decomposition parts, adversary accuracy).
    pub info: Vec<(String, f64)>,
    pub total: f64,
}

impl TermBreakdown {
    /// |total − (w·recon + Σ entries)|, which the composition keeps at 0.
    pub fn additivity_gap(&self) -> f64 {
        let mut acc = self.recon_weight * self.recon;
        for (_, v) in &self.entries {
            acc += v;
        }
        (self.total - acc).abs()
    }
}

/// Everything one composition step needs from the training loop.
pub struct StepContext<'a, S: Scalar> {
    pub x: &'a Tensor<S>,
    pub x_hat: &'a Tensor<S>,
    pub post: &'a LatentPosterior<S>,
    /// Integer labels for the supervised terms.
    pub targets: Option<&'a [usize]>,
    pub capacity: f64,
    pub recon_weight: f64,
}

/// The composition engine: resolved term list plus the stateful adversarial
/// helpers (discriminator, classifiers) with their own optimizers.
pub struct Objective<S: Scalar = f64> {
    pub spec: ObjectiveSpec,
    dataset_size: usize,
    condition_factor: Option<usize>,
    condition_classes: usize,
    label_factor: Option<usize>,
    disc: Option<FactorDisc<S>>,
    ifcvae: Option<IfcvaeAux<S>>,
}

impl<S: Scalar> std::fmt::Debug for Objective<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.spec.terms.iter().map(|t| t.canonical()).collect();
        write!(f, "Objective({})", names.join(" "))
    }
}

struct FactorDisc<S: Scalar> {
    mlp: Mlp<S>,
    params: Vec<(String, Tensor<S>)>,
    adam: AdamState<S>,
}

fn resolve_factor(dataset: &FactorDataset, name: &str) -> Result<usize> {
    dataset
        .space()
        .names
        .iter()
        .position(|n| *n == name)
        .ok_or_else(|| {
            Error::config(format!(
                "unknown factor '{name}'; dataset factors: {}",
                dataset.space().names.join(", ")
            ))
        })
}

impl<S: Scalar> Objective<S> {
    pub fn new(
        spec: ObjectiveSpec,
        dataset: &FactorDataset,
        latent_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        let mut rng = DetRng::seed_from(derive_seed(seed, "objective-init"));

        let condition_factor = if spec.has(TermName::Cvae) {
            Some(resolve_factor(dataset, &spec.settings.cvae.condition)?)
        } else {
            None
        };
        let condition_classes =
            condition_factor.map_or(0, |k| dataset.space().cardinalities[k]);

        let disc = if spec.has(TermName::FactorVae) {
            let mlp = Mlp::new(latent_dim, &spec.settings.factor.disc, 2, &mut rng);
            let params = mlp.named_parameters("disc");
            let adam = AdamState::new(
                &params,
                spec.settings.factor.disc_lr,
                spec.settings.factor.disc_beta1,
                0.999,
                1e-8,
            );
            Some(FactorDisc { mlp, params, adam })
        } else {
            None
        };

        let (ifcvae, label_factor) = if spec.has(TermName::Ifcvae) {
            let k = resolve_factor(dataset, &spec.settings.ifcvae.label_factor)?;
            let classes = dataset.space().cardinalities[k];
            let label_dims = if spec.settings.ifcvae.label_dims == 0 {
                classes
            } else {
                spec.settings.ifcvae.label_dims
            };
            let aux = IfcvaeAux::new(
                latent_dim,
                classes,
                label_dims,
                spec.settings.ifcvae.w_aux,
                spec.settings.ifcvae.w_adv,
                &spec.settings.ifcvae.classifier,
                spec.settings.ifcvae.clf_lr,
                &mut rng,
            )?;
            (Some(aux), Some(k))
        } else {
            (None, None)
        };

        Ok(Objective {
            spec,
            dataset_size: dataset.len(),
            condition_factor,
            condition_classes,
            label_factor,
            disc,
            ifcvae,
        })
    }

    /// Width of the condition one-hot the network must accept (0 when
    /// unconditional).
    pub fn condition_dim(&self) -> usize {
        self.condition_classes
    }

    /// Dataset factor feeding the CVAE condition.
    pub fn condition_factor(&self) -> Option<usize> {
        self.condition_factor
    }

    /// Dataset factor feeding the supervised classifiers.
    pub fn label_factor(&self) -> Option<usize> {
        self.label_factor
    }

    /// Compose the step loss; terms are evaluated in spec order and the
    /// breakdown folds in exactly the same order, so it sums to the total
    /// bit-for-bit.
    pub fn compose(
        &self,
        ctx: &StepContext<'_, S>,
        rng: &mut DetRng,
    ) -> Result<(Tensor<S>, TermBreakdown)> {
        let b = ctx.post.batch();
        let recon = recon_loss(ctx.x, ctx.x_hat, self.spec.recon_kind);
        let recon_val = recon.item().to_f64().unwrap();
        let mut loss = recon.mul_scalar(c(ctx.recon_weight));
        let mut total = loss.item().to_f64().unwrap();
        let mut entries = Vec::new();
        let mut info = Vec::new();

        let s = &self.spec.settings;
        for term in &self.spec.terms {
            let value: Option<Tensor<S>> = match term {
                TermName::Vae | TermName::BetaVae => {
                    let beta = if *term == TermName::Vae { 1.0 } else { s.kl.beta };
                    let kl = kl_to_standard_normal(&ctx.post.mu, &ctx.post.logvar);
                    info.push(("kl".to_string(), kl.mean_all().item().to_f64().unwrap()));
                    Some(term_kl_capacity(&kl, beta, ctx.capacity))
                }
                TermName::BtcVae => {
                    let n = s.btc.dataset_size.unwrap_or(self.dataset_size);
                    if n < b {
                        return Err(Error::config(format!(
                            "btc dataset_size {n} is smaller than the batch {b}"
                        )));
                    }
                    let dec = btc_decompose(ctx.post, n);
                    info.push(("btc.mi".to_string(), dec.mutual_info.item().to_f64().unwrap()));
                    info.push((
                        "btc.tc".to_string(),
                        dec.total_correlation.item().to_f64().unwrap(),
                    ));
                    info.push(("btc.dim_kl".to_string(), dec.dim_kl.item().to_f64().unwrap()));
                    Some(
                        dec.mutual_info
                            .mul_scalar(c(s.btc.alpha))
                            .add(&dec.total_correlation.mul_scalar(c(s.btc.beta)))
                            .add(&dec.dim_kl.mul_scalar(c(s.btc.gamma))),
                    )
                }
                TermName::FactorVae => {
                    let disc = self.disc.as_ref().expect("constructed with the term");
                    Some(factor_tc_term(&ctx.post.z, &disc.mlp).mul_scalar(c(s.factor.gamma_tc)))
                }
                TermName::InfoVae => {
                    Some(mmd_term(&ctx.post.z, rng, s.mmd.lambda, s.mmd.bandwidth))
                }
                TermName::DipI => {
                    Some(dip_term(ctx.post, DipMode::I, s.dip.lambda_od, s.dip.lambda_d))
                }
                TermName::DipII => {
                    Some(dip_term(ctx.post, DipMode::Ii, s.dip.lambda_od, s.dip.lambda_d))
                }
                TermName::Cvae => None, // conditioning is architectural
                TermName::Ifcvae => {
                    let aux = self.ifcvae.as_ref().expect("constructed with the term");
                    let targets = ctx.targets.ok_or_else(|| {
                        Error::config("ifcvae needs integer labels in the step context")
                    })?;
                    Some(aux.model_term(ctx.post, targets))
                }
            };
            if let Some(v) = value {
                let val = v.item().to_f64().unwrap();
                loss = loss.add(&v);
                total += val;
                entries.push((term.breakdown_key(), val));
            }
        }

        debug_assert!(
            total.is_nan() || loss.item().to_f64().unwrap() == total,
            "breakdown total diverged from the loss tensor"
        );
        Ok((
            loss,
            TermBreakdown {
                recon: recon_val,
                recon_weight: ctx.recon_weight,
                entries,
                info,
                total,
            },
        ))
    }

    /// Adversarial updates that alternate 1:1 with the model step: the
    /// FactorVAE discriminator trains on detached (z, permuted z) and the
    /// IFCVAE classifiers take their min-max steps. Call after the model
    /// optimizer step; stray gradients the model backward left in the
    /// adversaries are cleared here.
    pub fn aux_step(
        &mut self,
        post: &LatentPosterior<S>,
        targets: Option<&[usize]>,
        rng: &mut DetRng,
    ) -> Result<Vec<(String, f64)>> {
        let mut info = Vec::new();
        if let Some(disc) = self.disc.as_mut() {
            for (_, p) in &disc.params {
                p.zero_grad();
            }
            let z_det = post.z.detach();
            let z_perm = permute_dims(&z_det, rng);
            let (loss, acc) =
                factor_disc_step(&z_det, &z_perm, &disc.mlp, &disc.params, &mut disc.adam)?;
            info.push(("disc.loss".to_string(), loss));
            info.push(("disc.acc".to_string(), acc));
        }
        if let Some(aux) = self.ifcvae.as_mut() {
            let targets = targets
                .ok_or_else(|| Error::config("ifcvae needs integer labels for its updates"))?;
            let (aux_acc, adv_acc) = aux.aux_step(post, targets)?;
            info.push(("ifcvae.aux_acc".to_string(), aux_acc));
            info.push(("ifcvae.adv_acc".to_string(), adv_acc));
        }
        Ok(info)
    }

    /// Parameters of the adversarial helpers, for checkpointing.
    pub fn aux_named_parameters(&self) -> Vec<(String, Tensor<S>)> {
        let mut out = Vec::new();
        if let Some(disc) = &self.disc {
            out.extend(disc.params.clone());
        }
        if let Some(aux) = &self.ifcvae {
            out.extend(aux.named_parameters());
        }
        out
    }

    /// Adversarial optimizer states with their parameter lists, for
    /// checkpointing.
    pub fn aux_adam_states(&mut self) -> Vec<(String, &mut AdamState<S>, Vec<(String, Tensor<S>)>)> {
        let mut out: Vec<(String, &mut AdamState<S>, Vec<(String, Tensor<S>)>)> = Vec::new();
        if let Some(disc) = self.disc.as_mut() {
            let params = disc.params.clone();
            out.push(("disc".to_string(), &mut disc.adam, params));
        }
        if let Some(aux) = self.ifcvae.as_mut() {
            for (name, adam, params) in aux.adam_states() {
                out.push((name.to_string(), adam, params));
            }
        }
        out
    }

    /// Adversarial optimizer states (immutable), for checkpoint saving.
    pub fn aux_adams(&self) -> Vec<(String, &AdamState<S>, Vec<(String, Tensor<S>)>)> {
        let mut out: Vec<(String, &AdamState<S>, Vec<(String, Tensor<S>)>)> = Vec::new();
        if let Some(disc) = self.disc.as_ref() {
            out.push(("disc".to_string(), &disc.adam, disc.params.clone()));
        }
        if let Some(aux) = self.ifcvae.as_ref() {
            for (name, adam, params) in aux.adam_refs() {
                out.push((name.to_string(), adam, params));
            }
        }
        out
    }

    /// Test hook: zero the adversarial heads so their initial terms vanish.
    pub fn zero_adversarial_heads(&self) {
        if let Some(disc) = &self.disc {
            disc.mlp.zero_last_layer();
        }
        if let Some(aux) = &self.ifcvae {
            aux.zero_classifier_logits();
        }
    }
}
