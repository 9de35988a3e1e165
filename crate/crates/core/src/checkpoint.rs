//! Checkpoint file: one line of JSON (spec, step, optimizer state, parameter
//! manifest with shapes and byte offsets) followed by raw little-endian
//! 64-bit float blobs: every parameter in manifest order, then the first
//! moments, then the second moments. Round-trips are byte-exact.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamState;
use crate::scalar::Scalar;
use crate::schedule::PlateauLr;
use crate::tensor::Tensor;

pub const FORMAT: &str = "disent-checkpoint-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset of this parameter inside the parameter section.
    pub offset: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerHeader {
    pub group: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    /// Number of manifest entries owned by this group, in manifest order.
    pub params: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochAccumulator {
    pub sum: f64,
    pub count: u64,
    /// Mean objective of the last completed epoch (logged with each record).
    pub last_mean: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Header {
    pub format: String,
    pub step: u64,
    pub config: crate::train::TrainConfig,
    pub optimizers: Vec<OptimizerHeader>,
    pub plateau: PlateauLr,
    pub epoch_acc: EpochAccumulator,
    pub manifest: Vec<ManifestEntry>,
}

/// One optimizer group to serialize: its parameters in order plus the Adam
/// state that owns their moments.
pub struct ParamGroup<'a, S: Scalar> {
    pub name: String,
    pub params: Vec<(String, Tensor<S>)>,
    pub adam: &'a AdamState<S>,
}

pub fn save<S: Scalar>(
    path: &Path,
    config: &crate::train::TrainConfig,
    step: u64,
    groups: &[ParamGroup<'_, S>],
    plateau: &PlateauLr,
    epoch_acc: EpochAccumulator,
) -> Result<()> {
    let mut manifest = Vec::new();
    let mut optimizers = Vec::new();
    let mut offset = 0u64;
    for g in groups {
        optimizers.push(OptimizerHeader {
            group: g.name.clone(),
            lr: g.adam.lr,
            beta1: g.adam.beta1,
            beta2: g.adam.beta2,
            eps: g.adam.eps,
            t: g.adam.t,
            params: g.params.len(),
        });
        for (name, p) in &g.params {
            manifest.push(ManifestEntry {
                name: name.clone(),
                shape: p.shape().to_vec(),
                offset,
            });
            offset += (p.len() * 8) as u64;
        }
    }
    let header = Header {
        format: FORMAT.to_string(),
        step,
        config: config.clone(),
        optimizers,
        plateau: plateau.clone(),
        epoch_acc,
        manifest,
    };

    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    let push_blob = |values: &[S], out: &mut Vec<u8>| {
        for v in values {
            out.extend_from_slice(&v.to_f64().unwrap().to_le_bytes());
        }
    };
    for g in groups {
        for (_, p) in &g.params {
            push_blob(&p.to_vec(), &mut out);
        }
    }
    for g in groups {
        let (m, _) = g.adam.moments();
        for mv in m {
            push_blob(mv, &mut out);
        }
    }
    for g in groups {
        let (_, v) = g.adam.moments();
        for vv in v {
            push_blob(vv, &mut out);
        }
    }

    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &out)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Parsed checkpoint: header plus per-parameter data and moment vectors.
pub struct Loaded {
    pub header: Header,
    pub params: HashMap<String, Vec<f64>>,
    pub first_moments: HashMap<String, Vec<f64>>,
    pub second_moments: HashMap<String, Vec<f64>>,
}

pub fn load(path: &Path) -> Result<Loaded> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    let newline = raw
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header: Header = serde_json::from_slice(&raw[..newline])
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format != FORMAT {
        return Err(Error::Checkpoint(format!(
            "unsupported format '{}', expected {FORMAT}",
            header.format
        )));
    }
    let data = &raw[newline + 1..];
    let total: usize = header
        .manifest
        .iter()
        .map(|e| e.shape.iter().product::<usize>() * 8)
        .sum();
    if data.len() != 3 * total {
        return Err(Error::Checkpoint(format!(
            "blob size {} does not match manifest ({} expected)",
            data.len(),
            3 * total
        )));
    }

    let read_section = |base: usize| -> HashMap<String, Vec<f64>> {
        let mut out = HashMap::new();
        for e in &header.manifest {
            let n: usize = e.shape.iter().product();
            let start = base + e.offset as usize;
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                let mut bytes = [0u8; 8];
                bytes.copy_from_slice(&data[start + i * 8..start + i * 8 + 8]);
                values.push(f64::from_le_bytes(bytes));
            }
            out.insert(e.name.clone(), values);
        }
        out
    };

    Ok(Loaded {
        params: read_section(0),
        first_moments: read_section(total),
        second_moments: read_section(2 * total),
        header,
    })
}

impl Loaded {
    /// Copy stored values into live parameter tensors (shape-checked) and
    /// restore the optimizer moments for one group.
    pub fn restore_group<S: Scalar>(
        &self,
        group: &str,
        params: &[(String, Tensor<S>)],
        adam: &mut AdamState<S>,
    ) -> Result<()> {
        let opt = self
            .header
            .optimizers
            .iter()
            .find(|o| o.group == group)
            .ok_or_else(|| Error::Checkpoint(format!("missing optimizer group '{group}'")))?;
        if opt.params != params.len() {
            return Err(Error::Checkpoint(format!(
                "group '{group}' has {} parameters, checkpoint stored {}",
                params.len(),
                opt.params
            )));
        }
        let mut ms = Vec::with_capacity(params.len());
        let mut vs = Vec::with_capacity(params.len());
        for (name, p) in params {
            let stored = self
                .params
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{name}'")))?;
            if stored.len() != p.len() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{name}' length {} does not match model ({})",
                    stored.len(),
                    p.len()
                )));
            }
            let values: Vec<S> = stored.iter().map(|&v| S::from_f64(v).unwrap()).collect();
            p.set_data(&values);
            ms.push(
                self.first_moments[name]
                    .iter()
                    .map(|&v| S::from_f64(v).unwrap())
                    .collect(),
            );
            vs.push(
                self.second_moments[name]
                    .iter()
                    .map(|&v| S::from_f64(v).unwrap())
                    .collect(),
            );
        }
        adam.lr = opt.lr;
        adam.beta1 = opt.beta1;
        adam.beta2 = opt.beta2;
        adam.eps = opt.eps;
        adam.restore_moments(ms, vs, opt.t);
        Ok(())
    }

    /// Write the checkpoint back out; byte-identical to the original file.
    pub fn resave<S: Scalar>(&self, path: &Path, _marker: std::marker::PhantomData<S>) -> Result<()> {
        let mut out = Vec::new();
        serde_json::to_writer(&mut out, &self.header)?;
        out.push(b'\n');
        for section in [&self.params, &self.first_moments, &self.second_moments] {
            for e in &self.header.manifest {
                for v in &section[&e.name] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&out)?;
        Ok(())
    }
}
