//! Reference block architecture with a configurable orthogonal fraction.
//!
//! Layout: optional channel lift, `ortho_blocks` convex residual blocks
//! (`OrthoConv → GroupSort → OrthoConv`), then `blocks − ortho_blocks` plain
//! skip blocks (`Conv → ReLU → Conv`), then a dense head. The encoder ends
//! right after the last orthogonal block.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{config, Result};
use crate::layers::{CircularConv, Dense, GroupSort, Layer, OrthoConv, ResidualBlock, SkipBlock};
use crate::network::SplitNetwork;
use crate::rng::{stream, Domain, NoiseRng};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchSpec {
    pub input_channels: usize,
    pub channels: usize,
    pub spatial: usize,
    pub blocks: usize,
    pub ortho_blocks: usize,
    /// Number of leading blocks placed in the encoder.
    pub split_blocks: usize,
    pub group_size: usize,
    pub classes: usize,
    pub seed: u64,
}

impl ArchSpec {
    /// 8 blocks, 8 channels, 8×8, all orthogonal.
    pub fn reference(input_channels: usize, classes: usize, seed: u64) -> Self {
        Self {
            input_channels,
            channels: 8,
            spatial: 8,
            blocks: 8,
            ortho_blocks: 8,
            split_blocks: 8,
            group_size: 2,
            classes,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels == 0 || self.channels == 0 || self.spatial == 0 || self.classes == 0 {
            return Err(config("channels, spatial size and classes must be positive"));
        }
        if self.input_channels > self.channels {
            return Err(config(alloc::format!(
                "input channels {} exceed block channels {}",
                self.input_channels,
                self.channels
            )));
        }
        if self.ortho_blocks > self.blocks {
            return Err(config(alloc::format!(
                "orthogonal block count {} exceeds block count {}",
                self.ortho_blocks,
                self.blocks
            )));
        }
        if self.split_blocks < self.ortho_blocks {
            return Err(config(alloc::format!(
                "orthogonal block {} lies outside the encoder (split after {} blocks)",
                self.split_blocks,
                self.split_blocks
            )));
        }
        if self.split_blocks > self.ortho_blocks {
            return Err(config(alloc::format!(
                "block {} is in the encoder but is not orthogonal",
                self.ortho_blocks
            )));
        }
        GroupSort::new(self.group_size)?.check(self.channels * self.spatial * self.spatial)
    }

    fn has_lift(&self) -> bool {
        self.input_channels != self.channels
    }

    /// Layer index of the encoder/classifier boundary after `blocks` blocks.
    pub fn layer_split(&self, blocks: usize) -> usize {
        if blocks == 0 {
            0
        } else {
            usize::from(self.has_lift()) + blocks
        }
    }

    pub fn build(&self) -> Result<SplitNetwork> {
        self.validate()?;
        let (c, n) = (self.channels, self.spatial);
        let mut layers = Vec::new();
        let mut id = 0u64;
        let mut next_rng = || {
            id += 1;
            stream(self.seed, Domain::Init, id)
        };
        if self.has_lift() {
            layers.push(Layer::ChannelLift { from: self.input_channels, to: c });
        }
        let bound = 1.0 / (c * n) as f64;
        for b in 0..self.blocks {
            if b < self.ortho_blocks {
                let main = vec![
                    Layer::OrthoConv(OrthoConv::new(uniform([c, c, n, n], bound, &mut next_rng()))?),
                    Layer::GroupSort(GroupSort::new(self.group_size)?),
                    Layer::OrthoConv(OrthoConv::new(uniform([c, c, n, n], bound, &mut next_rng()))?),
                ];
                layers.push(Layer::Residual(ResidualBlock::new(main, 0.0)?));
            } else {
                let main = vec![
                    Layer::Conv(CircularConv::new(uniform([c, c, n, n], bound, &mut next_rng()))?),
                    Layer::Relu,
                    Layer::Conv(CircularConv::new(uniform([c, c, n, n], bound, &mut next_rng()))?),
                ];
                layers.push(Layer::Skip(SkipBlock::new(main)));
            }
        }
        let features = c * n * n;
        let head_bound = 1.0 / libm::sqrt(features as f64);
        let w = uniform([1, 1, self.classes, features], head_bound, &mut next_rng()).into_vec();
        layers.push(Layer::Dense(Dense::new(features, self.classes, w, vec![0.0; self.classes])?));
        SplitNetwork::new(
            layers,
            self.layer_split(self.split_blocks),
            [self.input_channels, n, n],
            (self.ortho_blocks, self.blocks),
        )
    }
}

fn uniform(shape: [usize; 4], bound: f64, rng: &mut NoiseRng) -> Tensor4 {
    let len = shape.iter().product();
    let data = (0..len).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor4::from_vec(shape, data).expect("uniform draws are finite")
}
