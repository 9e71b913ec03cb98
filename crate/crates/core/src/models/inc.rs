//! Inception-style network: a 1x7 stem, blocks of parallel dilated 1x3
//! branches joined by channel concatenation, then a small MLP head.

use std::collections::BTreeMap;

use super::blocks::{ConvBnRelu, Pool, PoolCache};
use super::{parse_meta, Forward};
use crate::nn::layers::{HasTensors, Named, NamedMut};
use crate::nn::ops::{self, BatchNormCache};
use crate::nn::{Linear, NnError, Real, Tensor};
use crate::seed;

pub const STEM_CHANNELS: usize = 16;
pub const STEM_KERNEL: usize = 7;
pub const BRANCH_KERNEL: usize = 3;
pub const POOL_WINDOW: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct IncTssdConfig {
    /// Output channels of each dilated branch (C1).
    pub branch_channels: usize,
    /// Number of inception blocks (M).
    pub num_blocks: usize,
    /// Width of the two hidden linear layers; also the embedding width.
    pub penultimate_width: usize,
    pub num_classes: usize,
    pub dilations: Vec<usize>,
}

impl Default for IncTssdConfig {
    fn default() -> Self {
        Self {
            branch_channels: 16,
            num_blocks: 4,
            penultimate_width: 32,
            num_classes: 6,
            dilations: vec![1, 2, 3, 4],
        }
    }
}

impl IncTssdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::ConfigInvalid(m));
        if !(5..=6).contains(&self.num_classes) {
            return bad(format!("num_classes must be 5 or 6, got {}", self.num_classes));
        }
        if self.dilations.is_empty() || self.dilations.iter().any(|&d| d == 0) {
            return bad(format!("dilations must be non-empty and >= 1, got {:?}", self.dilations));
        }
        let mut sorted = self.dilations.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.dilations.len() {
            return bad(format!("dilations must be distinct, got {:?}", self.dilations));
        }
        if self.branch_channels == 0 || self.num_blocks == 0 || self.penultimate_width == 0 {
            return bad("branch_channels, num_blocks and penultimate_width must be positive".into());
        }
        Ok(())
    }

    /// Channels after concatenating all branches.
    pub fn block_width(&self) -> usize {
        self.branch_channels * self.dilations.len()
    }

    /// Shortest input the pooling chain accepts.
    pub fn min_input_len(&self) -> usize {
        POOL_WINDOW.pow(self.num_blocks as u32)
    }

    pub fn to_meta(&self) -> BTreeMap<String, String> {
        let d: Vec<String> = self.dilations.iter().map(|d| d.to_string()).collect();
        BTreeMap::from([
            ("branch_channels".to_string(), self.branch_channels.to_string()),
            ("num_blocks".to_string(), self.num_blocks.to_string()),
            ("penultimate_width".to_string(), self.penultimate_width.to_string()),
            ("num_classes".to_string(), self.num_classes.to_string()),
            ("dilations".to_string(), d.join(",")),
        ])
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self, NnError> {
        let dilations = meta
            .get("dilations")
            .ok_or_else(|| NnError::Checkpoint("missing meta dilations".into()))?
            .split(',')
            .map(|s| s.parse().map_err(|_| NnError::Checkpoint(format!("bad dilation {s:?}"))))
            .collect::<Result<Vec<usize>, _>>()?;
        Ok(Self {
            branch_channels: parse_meta(meta, "branch_channels")?,
            num_blocks: parse_meta(meta, "num_blocks")?,
            penultimate_width: parse_meta(meta, "penultimate_width")?,
            num_classes: parse_meta(meta, "num_classes")?,
            dilations,
        })
    }
}

#[derive(Debug, Clone)]
struct IncBlock<T> {
    branches: Vec<ConvBnRelu<T>>,
    pool: Pool,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    input: Tensor<T>,
    branches: Vec<BatchNormCache<T>>,
    pool: PoolCache,
}

#[derive(Debug, Clone)]
struct TrainCache<T> {
    input: Tensor<T>,
    stem: BatchNormCache<T>,
    stem_pool: PoolCache,
    blocks: Vec<BlockCache<T>>,
    /// Inputs of each hidden linear layer, then the head input.
    fc_inputs: Vec<Tensor<T>>,
}

#[derive(Debug, Clone)]
pub struct IncTssdNet<T> {
    config: IncTssdConfig,
    stem: ConvBnRelu<T>,
    blocks: Vec<IncBlock<T>>,
    hidden: Vec<Linear<T>>,
    head: Linear<T>,
    cache: Option<TrainCache<T>>,
}

impl<T: Real> IncTssdNet<T> {
    pub fn new(config: IncTssdConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let stem = ConvBnRelu::new(1, STEM_CHANNELS, STEM_KERNEL, 1, &mut rng)?;
        let mut blocks = Vec::with_capacity(config.num_blocks);
        let mut in_ch = STEM_CHANNELS;
        for i in 0..config.num_blocks {
            let branches = config
                .dilations
                .iter()
                .map(|&d| ConvBnRelu::new(in_ch, config.branch_channels, BRANCH_KERNEL, d, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            let pool = if i + 1 == config.num_blocks {
                Pool::Global
            } else {
                Pool::Max(POOL_WINDOW)
            };
            blocks.push(IncBlock { branches, pool });
            in_ch = config.block_width();
        }
        let w = config.penultimate_width;
        let hidden = vec![Linear::new(in_ch, w, &mut rng)?, Linear::new(w, w, &mut rng)?];
        let head = Linear::new(w, config.num_classes, &mut rng)?;
        Ok(Self {
            config,
            stem,
            blocks,
            hidden,
            head,
            cache: None,
        })
    }

    pub fn config(&self) -> &IncTssdConfig {
        &self.config
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        let (_, ch, len) = x.dims3()?;
        if ch != 1 || len < self.config.min_input_len() {
            return Err(NnError::ShapeMismatch(format!(
                "expected [B, 1, L >= {}], got {:?}",
                self.config.min_input_len(),
                x.shape()
            )));
        }
        Ok(())
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Forward<T>, NnError> {
        self.check_input(x)?;
        let (mut h, _) = Pool::Max(POOL_WINDOW).forward(&self.stem.forward_eval(x)?)?;
        for block in &self.blocks {
            let parts = block
                .branches
                .iter()
                .map(|b| b.forward_eval(&h))
                .collect::<Result<Vec<_>, _>>()?;
            h = block.pool.forward(&ops::concat_channels(&parts)?)?.0;
        }
        for fc in &self.hidden {
            h = fc.forward(&h)?;
            ops::relu_inplace(&mut h);
        }
        let logits = self.head.forward(&h)?;
        Ok(Forward { logits, embedding: h })
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let (s, stem_cache) = self.stem.forward_train(x)?;
        let (mut h, stem_pool) = Pool::Max(POOL_WINDOW).forward(&s)?;
        drop(s);
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let mut parts = Vec::with_capacity(block.branches.len());
            let mut caches = Vec::with_capacity(block.branches.len());
            for br in &mut block.branches {
                let (y, c) = br.forward_train(&h)?;
                parts.push(y);
                caches.push(c);
            }
            let cat = ops::concat_channels(&parts)?;
            drop(parts);
            let (pooled, pool_cache) = block.pool.forward(&cat)?;
            block_caches.push(BlockCache {
                input: std::mem::replace(&mut h, pooled),
                branches: caches,
                pool: pool_cache,
            });
        }
        let mut fc_inputs = Vec::with_capacity(self.hidden.len() + 1);
        for fc in &self.hidden {
            let mut y = fc.forward(&h)?;
            ops::relu_inplace(&mut y);
            fc_inputs.push(std::mem::replace(&mut h, y));
        }
        let logits = self.head.forward(&h)?;
        fc_inputs.push(h);
        self.cache = Some(TrainCache {
            input: x.clone(),
            stem: stem_cache,
            stem_pool,
            blocks: block_caches,
            fc_inputs,
        });
        Ok(logits)
    }

    /// Accumulates parameter gradients for the last `forward_train` call.
    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<(), NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::ShapeMismatch("backward called without a train forward".into()))?;
        let n_hidden = self.hidden.len();
        let mut g = self.head.backward(&cache.fc_inputs[n_hidden], grad_logits)?;
        for i in (0..n_hidden).rev() {
            // fc_inputs[i + 1] is this layer's ReLU output
            ops::relu_backward_inplace(&cache.fc_inputs[i + 1], &mut g);
            g = self.hidden[i].backward(&cache.fc_inputs[i], &g)?;
        }
        let width = self.config.branch_channels;
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            let g_cat = block.pool.backward(&bc.pool, &g)?;
            let widths = vec![width; block.branches.len()];
            let g_parts = ops::split_channels(&g_cat, &widths)?;
            let mut g_in: Option<Tensor<T>> = None;
            for ((br, c), gp) in block.branches.iter_mut().zip(&bc.branches).zip(&g_parts) {
                let gx = br.backward(&bc.input, c, gp, true)?.expect("input grad requested");
                match g_in.as_mut() {
                    Some(acc) => ops::add_inplace(acc, &gx)?,
                    None => g_in = Some(gx),
                }
            }
            g = g_in.expect("at least one branch");
        }
        let g_stem = Pool::Max(POOL_WINDOW).backward(&cache.stem_pool, &g)?;
        self.stem.backward(&cache.input, &cache.stem, &g_stem, false)?;
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl<T: Real> HasTensors<T> for IncTssdNet<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        self.stem.tensors(&format!("{prefix}stem"), out);
        for (i, b) in self.blocks.iter().enumerate() {
            for (j, br) in b.branches.iter().enumerate() {
                br.tensors(&format!("{prefix}block{i}.branch{j}"), out);
            }
        }
        for (i, fc) in self.hidden.iter().enumerate() {
            fc.tensors(&format!("{prefix}fc{i}"), out);
        }
        self.head.tensors(&format!("{prefix}head"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        self.stem.tensors_mut(&format!("{prefix}stem"), out);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (j, br) in b.branches.iter_mut().enumerate() {
                br.tensors_mut(&format!("{prefix}block{i}.branch{j}"), out);
            }
        }
        for (i, fc) in self.hidden.iter_mut().enumerate() {
            fc.tensors_mut(&format!("{prefix}fc{i}"), out);
        }
        self.head.tensors_mut(&format!("{prefix}head"), out);
    }
}
