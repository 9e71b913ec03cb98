//! ResNet-style network: a 1x7 stem followed by residual stages of two 1x3
//! convolutions, each stage max-pooled, then global max pooling and a
//! two-layer head.

use std::collections::BTreeMap;

use super::blocks::{ConvBnRelu, Pool, PoolCache};
use super::{parse_meta, Forward};
use crate::nn::layers::{HasTensors, Named, NamedMut};
use crate::nn::ops::{self, BatchNormCache};
use crate::nn::{BatchNorm1d, Conv1d, Linear, NnError, Real, Tensor};
use crate::seed;

use super::inc::{POOL_WINDOW, STEM_CHANNELS, STEM_KERNEL};

#[derive(Debug, Clone, PartialEq)]
pub struct ResTssdConfig {
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub penultimate_width: usize,
    pub num_classes: usize,
}

impl Default for ResTssdConfig {
    fn default() -> Self {
        Self {
            stage_channels: vec![16, 32, 64, 128],
            blocks_per_stage: 1,
            penultimate_width: 32,
            num_classes: 6,
        }
    }
}

impl ResTssdConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: String| Err(NnError::ConfigInvalid(m));
        if !(5..=6).contains(&self.num_classes) {
            return bad(format!("num_classes must be 5 or 6, got {}", self.num_classes));
        }
        if self.stage_channels.is_empty() || self.stage_channels.contains(&0) {
            return bad(format!("stage_channels must be non-empty and positive, got {:?}", self.stage_channels));
        }
        if self.stage_channels.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("stage_channels must be strictly increasing, got {:?}", self.stage_channels));
        }
        if self.blocks_per_stage == 0 || self.penultimate_width == 0 {
            return bad("blocks_per_stage and penultimate_width must be positive".into());
        }
        Ok(())
    }

    /// Shortest input the pooling chain accepts (stem pool plus one per stage).
    pub fn min_input_len(&self) -> usize {
        POOL_WINDOW.pow(self.stage_channels.len() as u32 + 1)
    }

    pub fn to_meta(&self) -> BTreeMap<String, String> {
        let s: Vec<String> = self.stage_channels.iter().map(|d| d.to_string()).collect();
        BTreeMap::from([
            ("stage_channels".to_string(), s.join(",")),
            ("blocks_per_stage".to_string(), self.blocks_per_stage.to_string()),
            ("penultimate_width".to_string(), self.penultimate_width.to_string()),
            ("num_classes".to_string(), self.num_classes.to_string()),
        ])
    }

    pub fn from_meta(meta: &BTreeMap<String, String>) -> Result<Self, NnError> {
        let stage_channels = meta
            .get("stage_channels")
            .ok_or_else(|| NnError::Checkpoint("missing meta stage_channels".into()))?
            .split(',')
            .map(|s| s.parse().map_err(|_| NnError::Checkpoint(format!("bad stage width {s:?}"))))
            .collect::<Result<Vec<usize>, _>>()?;
        Ok(Self {
            stage_channels,
            blocks_per_stage: parse_meta(meta, "blocks_per_stage")?,
            penultimate_width: parse_meta(meta, "penultimate_width")?,
            num_classes: parse_meta(meta, "num_classes")?,
        })
    }
}

/// `relu(bn(conv(relu(bn(conv(x))))) + shortcut(x))`; the shortcut is a 1x1
/// convolution when the channel count changes, identity otherwise.
#[derive(Debug, Clone)]
pub struct ResidualBlock<T> {
    pub first: ConvBnRelu<T>,
    pub second: Conv1d<T>,
    pub second_bn: BatchNorm1d<T>,
    pub shortcut: Option<Conv1d<T>>,
}

#[derive(Debug, Clone)]
struct ResidualCache<T> {
    input: Tensor<T>,
    first: BatchNormCache<T>,
    hidden: Tensor<T>,
    second: BatchNormCache<T>,
    output: Tensor<T>,
}

impl<T: Real> ResidualBlock<T> {
    pub fn new(in_ch: usize, out_ch: usize, rng: &mut seed::Rng) -> Result<Self, NnError> {
        Ok(Self {
            first: ConvBnRelu::new(in_ch, out_ch, 3, 1, rng)?,
            second: Conv1d::new(out_ch, out_ch, 3, 1, rng)?,
            second_bn: BatchNorm1d::new(out_ch),
            shortcut: if in_ch != out_ch {
                Some(Conv1d::new(in_ch, out_ch, 1, 1, rng)?)
            } else {
                None
            },
        })
    }

    /// Block output before pooling.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let h = self.first.forward_eval(x)?;
        let mut y = self.second_bn.forward_eval(&self.second.forward(&h)?)?;
        match &self.shortcut {
            Some(sc) => ops::add_inplace(&mut y, &sc.forward(x)?)?,
            None => ops::add_inplace(&mut y, x)?,
        }
        ops::relu_inplace(&mut y);
        Ok(y)
    }

    fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, ResidualCache<T>), NnError> {
        let (h, first) = self.first.forward_train(x)?;
        let (mut y, second) = self.second_bn.forward_train(&self.second.forward(&h)?)?;
        match &self.shortcut {
            Some(sc) => ops::add_inplace(&mut y, &sc.forward(x)?)?,
            None => ops::add_inplace(&mut y, x)?,
        }
        ops::relu_inplace(&mut y);
        Ok((
            y.clone(),
            ResidualCache {
                input: x.clone(),
                first,
                hidden: h,
                second,
                output: y,
            },
        ))
    }

    fn backward(&mut self, cache: &ResidualCache<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let g = ops::relu_backward(&cache.output, grad_out);
        let g_r = self.second_bn.backward(&cache.second, &g)?;
        let g_h = self.second.backward(&cache.hidden, &g_r, true)?.expect("input grad");
        let mut g_x = self.first.backward(&cache.input, &cache.first, &g_h, true)?.expect("input grad");
        match self.shortcut.as_mut() {
            Some(sc) => ops::add_inplace(&mut g_x, &sc.backward(&cache.input, &g, true)?.expect("input grad"))?,
            None => ops::add_inplace(&mut g_x, &g)?,
        }
        Ok(g_x)
    }
}

impl<T: Real> HasTensors<T> for ResidualBlock<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        self.first.tensors(&format!("{prefix}.first"), out);
        self.second.tensors(&format!("{prefix}.second"), out);
        self.second_bn.tensors(&format!("{prefix}.second_bn"), out);
        if let Some(sc) = &self.shortcut {
            sc.tensors(&format!("{prefix}.shortcut"), out);
        }
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        self.first.tensors_mut(&format!("{prefix}.first"), out);
        self.second.tensors_mut(&format!("{prefix}.second"), out);
        self.second_bn.tensors_mut(&format!("{prefix}.second_bn"), out);
        if let Some(sc) = &mut self.shortcut {
            sc.tensors_mut(&format!("{prefix}.shortcut"), out);
        }
    }
}

#[derive(Debug, Clone)]
struct StageCache<T> {
    blocks: Vec<ResidualCache<T>>,
    pool: PoolCache,
}

#[derive(Debug, Clone)]
struct TrainCache<T> {
    input: Tensor<T>,
    stem: BatchNormCache<T>,
    stem_pool: PoolCache,
    stages: Vec<StageCache<T>>,
    global_pool: PoolCache,
    fc_input: Tensor<T>,
    head_input: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct ResTssdNet<T> {
    config: ResTssdConfig,
    stem: ConvBnRelu<T>,
    stages: Vec<Vec<ResidualBlock<T>>>,
    fc: Linear<T>,
    head: Linear<T>,
    cache: Option<TrainCache<T>>,
}

impl<T: Real> ResTssdNet<T> {
    pub fn new(config: ResTssdConfig, seed: u64) -> Result<Self, NnError> {
        config.validate()?;
        let mut rng = seed::rng(seed);
        let stem = ConvBnRelu::new(1, STEM_CHANNELS, STEM_KERNEL, 1, &mut rng)?;
        let mut in_ch = STEM_CHANNELS;
        let mut stages = Vec::new();
        for &out_ch in &config.stage_channels {
            let mut blocks = Vec::new();
            for _ in 0..config.blocks_per_stage {
                blocks.push(ResidualBlock::new(in_ch, out_ch, &mut rng)?);
                in_ch = out_ch;
            }
            stages.push(blocks);
        }
        let fc = Linear::new(in_ch, config.penultimate_width, &mut rng)?;
        let head = Linear::new(config.penultimate_width, config.num_classes, &mut rng)?;
        Ok(Self {
            config,
            stem,
            stages,
            fc,
            head,
            cache: None,
        })
    }

    pub fn config(&self) -> &ResTssdConfig {
        &self.config
    }

    pub fn stage_block_mut(&mut self, stage: usize, block: usize) -> Option<&mut ResidualBlock<T>> {
        self.stages.get_mut(stage)?.get_mut(block)
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
        for stage in &self.stages {
            for block in stage {
                h = block.forward_eval(&h)?;
            }
            h = Pool::Max(POOL_WINDOW).forward(&h)?.0;
        }
        let (pooled, _) = Pool::Global.forward(&h)?;
        let mut emb = self.fc.forward(&pooled)?;
        ops::relu_inplace(&mut emb);
        let logits = self.head.forward(&emb)?;
        Ok(Forward { logits, embedding: emb })
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let (s, stem_cache) = self.stem.forward_train(x)?;
        let (mut h, stem_pool) = Pool::Max(POOL_WINDOW).forward(&s)?;
        drop(s);
        let mut stage_caches = Vec::with_capacity(self.stages.len());
        for stage in &mut self.stages {
            let mut caches = Vec::with_capacity(stage.len());
            for block in stage.iter_mut() {
                let (y, c) = block.forward_train(&h)?;
                caches.push(c);
                h = y;
            }
            let (pooled, pool) = Pool::Max(POOL_WINDOW).forward(&h)?;
            h = pooled;
            stage_caches.push(StageCache { blocks: caches, pool });
        }
        let (pooled, global_pool) = Pool::Global.forward(&h)?;
        let mut emb = self.fc.forward(&pooled)?;
        ops::relu_inplace(&mut emb);
        let logits = self.head.forward(&emb)?;
        self.cache = Some(TrainCache {
            input: x.clone(),
            stem: stem_cache,
            stem_pool,
            stages: stage_caches,
            global_pool,
            fc_input: pooled,
            head_input: emb,
        });
        Ok(logits)
    }

    pub fn backward(&mut self, grad_logits: &Tensor<T>) -> Result<(), NnError> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| NnError::ShapeMismatch("backward called without a train forward".into()))?;
        let mut g = self.head.backward(&cache.head_input, grad_logits)?;
        ops::relu_backward_inplace(&cache.head_input, &mut g);
        let g = self.fc.backward(&cache.fc_input, &g)?;
        let mut g = Pool::Global.backward(&cache.global_pool, &g)?;
        for (stage, sc) in self.stages.iter_mut().zip(&cache.stages).rev() {
            g = Pool::Max(POOL_WINDOW).backward(&sc.pool, &g)?;
            for (block, bc) in stage.iter_mut().zip(&sc.blocks).rev() {
                g = block.backward(bc, &g)?;
            }
        }
        let g = Pool::Max(POOL_WINDOW).backward(&cache.stem_pool, &g)?;
        self.stem.backward(&cache.input, &cache.stem, &g, false)?;
        Ok(())
    }

    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

impl<T: Real> HasTensors<T> for ResTssdNet<T> {
    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Named<'a, T>>) {
        self.stem.tensors(&format!("{prefix}stem"), out);
        for (i, stage) in self.stages.iter().enumerate() {
            for (j, b) in stage.iter().enumerate() {
                b.tensors(&format!("{prefix}stage{i}.block{j}"), out);
            }
        }
        self.fc.tensors(&format!("{prefix}fc"), out);
        self.head.tensors(&format!("{prefix}head"), out);
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<NamedMut<'a, T>>) {
        self.stem.tensors_mut(&format!("{prefix}stem"), out);
        for (i, stage) in self.stages.iter_mut().enumerate() {
            for (j, b) in stage.iter_mut().enumerate() {
                b.tensors_mut(&format!("{prefix}stage{i}.block{j}"), out);
            }
        }
        self.fc.tensors_mut(&format!("{prefix}fc"), out);
        self.head.tensors_mut(&format!("{prefix}head"), out);
    }
}
