//! Raw-waveform TSSDNet variants assembled from [`crate::nn`] layers.
//!
//! Both networks take `[B, 1, L]` waveforms and return `[B, num_classes]`
//! logits. The activation feeding the classification layer (post-ReLU,
//! `penultimate_width` wide) is the embedding used for analysis.

mod blocks;
pub mod inc;
pub mod res;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

pub use blocks::{ConvBnRelu, Pool};
pub use inc::{IncTssdConfig, IncTssdNet};
pub use res::{ResTssdConfig, ResTssdNet, ResidualBlock};

use crate::nn::checkpoint::{self, entries_of, layers_digest, RawCheckpoint};
use crate::nn::layers::{HasTensors, Named, NamedMut, TensorKind};
use crate::nn::{NnError, Real, Tensor};

pub const INC_ARCH_ID: &str = "inc-tssd";
pub const RES_ARCH_ID: &str = "res-tssd";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    Inc,
    Res,
}

impl Arch {
    pub fn id(self) -> &'static str {
        match self {
            Arch::Inc => INC_ARCH_ID,
            Arch::Res => RES_ARCH_ID,
        }
    }
}

impl FromStr for Arch {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            INC_ARCH_ID => Ok(Arch::Inc),
            RES_ARCH_ID => Ok(Arch::Res),
            other => Err(NnError::ConfigInvalid(format!("unknown architecture {other:?}"))),
        }
    }
}

/// Eval-mode outputs.
#[derive(Debug, Clone)]
pub struct Forward<T> {
    pub logits: Tensor<T>,
    pub embedding: Tensor<T>,
}

pub(crate) fn parse_meta<V: FromStr>(meta: &BTreeMap<String, String>, key: &str) -> Result<V, NnError> {
    meta.get(key)
        .ok_or_else(|| NnError::Checkpoint(format!("missing meta {key}")))?
        .parse()
        .map_err(|_| NnError::Checkpoint(format!("bad meta {key}")))
}

#[derive(Debug, Clone)]
pub enum TssdNet<T> {
    Inc(IncTssdNet<T>),
    Res(ResTssdNet<T>),
}

/// Builds an Inception-style network with freshly initialized weights.
pub fn build_inc_tssdnet<T: Real>(config: IncTssdConfig, seed: u64) -> Result<TssdNet<T>, NnError> {
    Ok(TssdNet::Inc(IncTssdNet::new(config, seed)?))
}

/// Builds a ResNet-style network with freshly initialized weights.
pub fn build_res_tssdnet<T: Real>(config: ResTssdConfig, seed: u64) -> Result<TssdNet<T>, NnError> {
    Ok(TssdNet::Res(ResTssdNet::new(config, seed)?))
}

/// Stacks equal-length waveforms into a `[B, 1, L]` tensor.
pub fn waveform_batch<T: Real>(waves: &[&[f32]]) -> Result<Tensor<T>, NnError> {
    let len = waves.first().map_or(0, |w| w.len());
    if waves.iter().any(|w| w.len() != len) {
        return Err(NnError::ShapeMismatch("waveforms in a batch must share a length".into()));
    }
    let data = waves.iter().flat_map(|w| w.iter().map(|&s| T::of(f64::from(s)))).collect();
    Tensor::from_vec(&[waves.len(), 1, len], data)
}

impl<T: Real> TssdNet<T> {
    pub fn arch(&self) -> Arch {
        match self {
            TssdNet::Inc(_) => Arch::Inc,
            TssdNet::Res(_) => Arch::Res,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            TssdNet::Inc(n) => n.config().num_classes,
            TssdNet::Res(n) => n.config().num_classes,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        match self {
            TssdNet::Inc(n) => n.config().penultimate_width,
            TssdNet::Res(n) => n.config().penultimate_width,
        }
    }

    pub fn min_input_len(&self) -> usize {
        match self {
            TssdNet::Inc(n) => n.config().min_input_len(),
            TssdNet::Res(n) => n.config().min_input_len(),
        }
    }

    pub fn config_meta(&self) -> BTreeMap<String, String> {
        match self {
            TssdNet::Inc(n) => n.config().to_meta(),
            TssdNet::Res(n) => n.config().to_meta(),
        }
    }

    /// Train-mode forward; keeps activations for [`TssdNet::backward`] and
    /// updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        match self {
            TssdNet::Inc(n) => n.forward_train(x),
            TssdNet::Res(n) => n.forward_train(x),
        }
    }

    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<(), NnError> {
        match self {
            TssdNet::Inc(n) => n.backward(grad_logits),
            TssdNet::Res(n) => n.backward(grad_logits),
        }
    }

    /// Eval-mode forward over shared parameters.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Forward<T>, NnError> {
        match self {
            TssdNet::Inc(n) => n.forward_eval(x),
            TssdNet::Res(n) => n.forward_eval(x),
        }
    }

    /// Penultimate activations, `[B, penultimate_width]`.
    pub fn embed(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        Ok(self.forward_eval(x)?.embedding)
    }

    pub fn clear_cache(&mut self) {
        match self {
            TssdNet::Inc(n) => n.clear_cache(),
            TssdNet::Res(n) => n.clear_cache(),
        }
    }

    pub fn named(&self) -> Vec<Named<'_, T>> {
        let mut out = Vec::new();
        self.tensors("", &mut out);
        out
    }

    pub fn named_mut(&mut self) -> Vec<NamedMut<'_, T>> {
        let mut out = Vec::new();
        self.tensors_mut("", &mut out);
        out
    }

    /// Trainable tensors in a stable order.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.named_mut()
            .into_iter()
            .filter(|n| n.kind == TensorKind::Param)
            .map(|n| n.tensor)
            .collect()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.named()
            .iter()
            .filter(|n| n.kind == TensorKind::Param)
            .map(|n| n.tensor.len())
            .sum()
    }

    /// Writes weights and running statistics. `extra` entries are stored
    /// under a `run.` prefix.
    pub fn save(&self, path: impl AsRef<Path>, extra: &BTreeMap<String, String>) -> Result<(), NnError> {
        let mut meta = self.config_meta();
        for (k, v) in extra {
            meta.insert(format!("run.{k}"), v.clone());
        }
        let f = BufWriter::new(File::create(path)?);
        checkpoint::write_checkpoint(f, self.arch().id(), &meta, &self.named())
    }

    /// Rebuilds a network from a checkpoint; returns it with the `run.`
    /// metadata (prefix stripped).
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, BTreeMap<String, String>), NnError> {
        let raw = checkpoint::read_checkpoint(BufReader::new(File::open(path)?))?;
        Self::from_raw(&raw)
    }

    pub fn from_raw(raw: &RawCheckpoint) -> Result<(Self, BTreeMap<String, String>), NnError> {
        let arch: Arch = raw.arch.parse()?;
        let mut net = match arch {
            Arch::Inc => build_inc_tssdnet(IncTssdConfig::from_meta(&raw.meta)?, 0)?,
            Arch::Res => build_res_tssdnet(ResTssdConfig::from_meta(&raw.meta)?, 0)?,
        };
        let expected = layers_digest(arch.id(), &entries_of(&net.named()));
        if expected != raw.layers_digest {
            return Err(NnError::Checkpoint(
                "weights do not match the architecture described by the checkpoint".into(),
            ));
        }
        for (slot, values) in net.named_mut().into_iter().zip(&raw.values) {
            for (dst, &src) in slot.tensor.data_mut().iter_mut().zip(values) {
                *dst = T::of(f64::from(src));
            }
        }
        let run = raw
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("run.").map(|k| (k.to_string(), v.clone())))
            .collect();
        Ok((net, run))
    }
}

impl<T: Real> HasTensors<T> for TssdNet<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        match self {
            TssdNet::Inc(n) => n.tensors(prefix, out),
            TssdNet::Res(n) => n.tensors(prefix, out),
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        match self {
            TssdNet::Inc(n) => n.tensors_mut(prefix, out),
            TssdNet::Res(n) => n.tensors_mut(prefix, out),
        }
    }
}
