//! Training configuration: JSON file + dotted CLI overrides over an optional
//! named profile, deserialized strictly so typos fail loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::FactorDataset;
use crate::error::{Error, Result};
use crate::loss::{ObjectiveSpec, TermName, TermSettings};
use crate::nn::{profiles, ModelSpec};
use crate::prob::ReconKind;
use crate::schedule::{CapacitySchedule, ReconWeightSchedule};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelChoice {
    /// Named profile ("paper64", "conv32", "dense8").
    Profile(String),
    /// Named profile with a latent-dimension override.
    ProfileWithLatent { profile: String, latent_dim: usize },
    /// Fully explicit architecture.
    Spec(Box<ModelSpec>),
}

impl ModelChoice {
    pub fn resolve(&self, condition_dim: usize) -> Result<ModelSpec> {
        let mut spec = match self {
            ModelChoice::Profile(name) => profiles::by_name(name, None)?,
            ModelChoice::ProfileWithLatent { profile, latent_dim } => {
                profiles::by_name(profile, Some(*latent_dim))?
            }
            ModelChoice::Spec(spec) => (**spec).clone(),
        };
        spec.condition_dim = condition_dim;
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlateauSettings {
    pub factor: f64,
    pub patience: u32,
    pub threshold: f64,
    pub min_lr: f64,
}

impl Default for PlateauSettings {
    fn default() -> Self {
        PlateauSettings { factor: 0.95, patience: 3, threshold: 1e-4, min_lr: 1e-5 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSettings {
    /// Absent means C = 0 throughout (plain weighting).
    pub capacity: Option<CapacitySchedule>,
    /// Absent means a constant reconstruction weight of 1.
    pub recon_weight: Option<ReconWeightSchedule>,
    pub plateau: PlateauSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSettings {
    pub kind: ReconKind,
}

impl Default for ReconSettings {
    fn default() -> Self {
        ReconSettings { kind: ReconKind::Bernoulli }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub dataset: String,
    pub model: ModelChoice,
    pub loss_terms: Vec<String>,
    pub terms: TermSettings,
    pub recon: ReconSettings,
    pub allow_term_overlap: bool,
    pub optimizer: OptimizerSettings,
    pub schedules: ScheduleSettings,
    pub max_iters: u64,
    pub batch_size: usize,
    pub seed: u64,
    pub log_every: u64,
    pub checkpoint_every: u64,
    pub output_dir: String,
    pub metrics: crate::metrics::MetricsConfig,
    /// Debug aid: pin every batch to one repeated dataset sample.
    pub overfit_index: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: "shapes5".to_string(),
            model: ModelChoice::Profile("conv32".to_string()),
            loss_terms: vec!["VAE".to_string()],
            terms: TermSettings::default(),
            recon: ReconSettings::default(),
            allow_term_overlap: false,
            optimizer: OptimizerSettings::default(),
            schedules: ScheduleSettings::default(),
            max_iters: 5000,
            batch_size: 64,
            seed: 1,
            log_every: 50,
            checkpoint_every: 1000,
            output_dir: "runs/default".to_string(),
            metrics: crate::metrics::MetricsConfig::default(),
            overfit_index: None,
        }
    }
}

impl TrainConfig {
    pub fn dataset(&self) -> Result<FactorDataset> {
        match self.dataset.as_str() {
            "shapes5" => Ok(FactorDataset::shapes5()),
            other => Err(Error::config(format!(
                "unknown dataset profile '{other}' (expected shapes5)"
            ))),
        }
    }

    pub fn objective_spec(&self) -> Result<ObjectiveSpec> {
        let terms = self
            .loss_terms
            .iter()
            .map(|n| TermName::parse(n))
            .collect::<Result<Vec<_>>>()?;
        let spec = ObjectiveSpec {
            terms,
            settings: self.terms.clone(),
            recon_kind: self.recon.kind,
            allow_term_overlap: self.allow_term_overlap,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let ds = self.dataset()?;
        let objective = self.objective_spec()?;
        let condition_dim = if objective.has(TermName::Cvae) {
            let k = ds
                .space()
                .names
                .iter()
                .position(|n| *n == self.terms.cvae.condition)
                .ok_or_else(|| {
                    Error::config(format!("unknown condition factor '{}'", self.terms.cvae.condition))
                })?;
            ds.space().cardinalities[k]
        } else {
            0
        };
        let spec = self.model.resolve(condition_dim)?;
        if spec.image_shape != ds.image_shape() {
            let (c, h, w) = spec.image_shape;
            let (dc, dh, dw) = ds.image_shape();
            return Err(Error::config(format!(
                "model expects {c}x{h}x{w} images but dataset '{}' provides {dc}x{dh}x{dw}; \
                 override the model (e.g. --model.profile conv32)",
                self.dataset
            )));
        }
        if self.batch_size == 0 || self.batch_size > ds.len() {
            return Err(Error::config(format!(
                "batch_size {} out of range (dataset has {} points)",
                self.batch_size,
                ds.len()
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::config("max_iters must be positive"));
        }
        if let Some(idx) = self.overfit_index {
            if idx >= ds.len() {
                return Err(Error::config(format!(
                    "overfit_index {idx} out of range (dataset has {} points)",
                    ds.len()
                )));
            }
        }
        if self.log_every == 0 || self.checkpoint_every == 0 {
            return Err(Error::config("log_every and checkpoint_every must be >= 1"));
        }
        if let Some(c) = &self.schedules.capacity {
            c.validate()?;
        }
        if let Some(r) = &self.schedules.recon_weight {
            r.validate()?;
        }
        if !(self.schedules.plateau.factor > 0.0 && self.schedules.plateau.factor < 1.0) {
            return Err(Error::config("plateau factor must be in (0,1)"));
        }
        Ok(())
    }
}

/// The experiment profile: the published hyperparameters (90k iterations,
/// batch 64, Adam at 1e-3 with 0.95 plateau decay, beta = 2, capacity ramped
/// 0 to 25 over 60% of training, latent dimensionality 20 on the 64x64
/// architecture). Pair it with a matching dataset, or override the model to
/// run it desk-scale (see README).
pub fn profile_btcvae_paper() -> TrainConfig {
    let mut cfg = TrainConfig {
        model: ModelChoice::Profile("paper64".to_string()),
        loss_terms: vec!["BTCVAE".to_string()],
        max_iters: 90_000,
        batch_size: 64,
        output_dir: "runs/btcvae_paper".to_string(),
        ..TrainConfig::default()
    };
    cfg.terms.btc.beta = 2.0;
    cfg.schedules.capacity = Some(CapacitySchedule {
        c_start: 0.0,
        c_max: 25.0,
        ramp_iters: 54_000,
    });
    cfg.schedules.recon_weight = Some(ReconWeightSchedule::constant(1.0));
    cfg
}

pub fn profile_by_name(name: &str) -> Result<TrainConfig> {
    match name {
        "btcvae_paper" => Ok(profile_btcvae_paper()),
        "default" => Ok(TrainConfig::default()),
        other => Err(Error::config(format!(
            "unknown config profile '{other}' (expected btcvae_paper or default)"
        ))),
    }
}

fn deep_merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => deep_merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Term-settings groups addressable without the `terms.` prefix.
const TERM_GROUPS: [&str; 7] = ["kl", "btc", "factor", "mmd", "dip", "cvae", "ifcvae"];

fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut segments: Vec<&str> = path.split('.').collect();
    if TERM_GROUPS.contains(&segments[0]) {
        segments.insert(0, "terms");
    }
    let mut cursor = root;
    for seg in &segments[..segments.len() - 1] {
        let slot = cursor
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("cannot descend into '{seg}' in override '{path}'")))?
            .entry(seg.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
        if !slot.is_object() {
            // overriding a leaf (e.g. a named model) with structured keys
            *slot = Value::Object(Default::default());
        }
        cursor = slot;
    }
    let last = segments.last().unwrap();
    cursor
        .as_object_mut()
        .ok_or_else(|| Error::config(format!("cannot set '{last}' in override '{path}'")))?
        .insert(last.to_string(), value);
    Ok(())
}

fn parse_override_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// CLI overrides for the train verb: `--key.path value` pairs plus the
/// multi-valued `--loss_terms A B ...` and `--profile NAME`.
#[derive(Default, Debug)]
pub struct CliOverrides {
    pub profile: Option<String>,
    pub loss_terms: Option<Vec<String>>,
    pub sets: Vec<(String, String)>,
}

impl CliOverrides {
    pub fn parse(args: &[String]) -> Result<Self> {
        let mut out = CliOverrides::default();
        let mut i = 0;
        while i < args.len() {
            let arg = &args[i];
            let key = arg
                .strip_prefix("--")
                .ok_or_else(|| Error::config(format!("expected --flag, got '{arg}'")))?;
            match key {
                "loss_terms" => {
                    let mut terms = Vec::new();
                    i += 1;
                    while i < args.len() && !args[i].starts_with("--") {
                        terms.push(args[i].clone());
                        i += 1;
                    }
                    if terms.is_empty() {
                        return Err(Error::config("--loss_terms needs at least one term"));
                    }
                    out.loss_terms = Some(terms);
                }
                "profile" => {
                    let v = args
                        .get(i + 1)
                        .ok_or_else(|| Error::config("--profile needs a value"))?;
                    out.profile = Some(v.clone());
                    i += 2;
                }
                _ => {
                    let v = args
                        .get(i + 1)
                        .ok_or_else(|| Error::config(format!("--{key} needs a value")))?;
                    out.sets.push((key.to_string(), v.clone()));
                    i += 2;
                }
            }
        }
        Ok(out)
    }
}

/// Resolve a config: profile defaults, then the file, then CLI overrides;
/// unknown keys anywhere are an error.
pub fn parse_config(file: Option<&Path>, overrides: &CliOverrides) -> Result<TrainConfig> {
    let file_value: Option<Value> = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
            if !v.is_object() {
                return Err(Error::config(format!("{}: config must be a JSON object", path.display())));
            }
            Some(v)
        }
        None => None,
    };

    // profile may be picked by the CLI or by a "profile" key in the file
    let mut file_value = file_value;
    let file_profile = file_value
        .as_mut()
        .and_then(|v| v.as_object_mut())
        .and_then(|o| o.remove("profile"))
        .map(|v| match v {
            Value::String(s) => Ok(s),
            other => Err(Error::config(format!("profile must be a string, got {other}"))),
        })
        .transpose()?;
    let profile_name = overrides.profile.clone().or(file_profile);
    let base_cfg = match &profile_name {
        Some(name) => profile_by_name(name)?,
        None => TrainConfig::default(),
    };

    let mut root = serde_json::to_value(&base_cfg)?;
    if let Some(fv) = file_value {
        deep_merge(&mut root, fv);
    }
    if let Some(terms) = &overrides.loss_terms {
        set_path(&mut root, "loss_terms", serde_json::to_value(terms)?)?;
    }
    for (key, raw) in &overrides.sets {
        set_path(&mut root, key, parse_override_value(raw))?;
    }

    let mut cfg: TrainConfig = serde_json::from_value(root)
        .map_err(|e| Error::config(format!("invalid config: {e}")))?;

    if let Ok(seed) = std::env::var("DISENT_SEED") {
        cfg.seed = seed
            .parse()
            .map_err(|_| Error::config(format!("DISENT_SEED must be an integer, got '{seed}'")))?;
    }
    cfg.validate()?;
    Ok(cfg)
}
