use alloc::vec::Vec;

use super::Layer;
use crate::error::{config, Result};

pub fn sigmoid(raw: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-raw))
}

/// Convex-combination block `α · main(x) + (1 - α) · x`, with
/// `α = sigmoid(alpha_raw)`. When `main` is 1-Lipschitz so is the block.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualBlock {
    pub(crate) main: Vec<Layer>,
    pub(crate) alpha_raw: f64,
}

impl ResidualBlock {
    pub fn new(main: Vec<Layer>, alpha_raw: f64) -> Result<Self> {
        if alpha_raw.is_nan() {
            return Err(config("residual alpha must not be NaN"));
        }
        Ok(Self { main, alpha_raw })
    }

    pub fn main(&self) -> &[Layer] {
        &self.main
    }

    pub fn alpha_raw(&self) -> f64 {
        self.alpha_raw
    }

    pub fn alpha(&self) -> f64 {
        sigmoid(self.alpha_raw)
    }

    /// Sets `α` directly; `0` and `1` map to infinite raw values.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(config("alpha must lie in [0, 1]"));
        }
        self.alpha_raw = libm::log(alpha) - libm::log1p(-alpha);
        Ok(())
    }

    /// `α · L_main + (1 - α)`, written so that `L_main = 1` yields exactly 1.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        let inner = super::sequence_bound(&self.main).ok()?;
        Some(1.0 + self.alpha() * (inner - 1.0))
    }
}

/// Vanilla skip connection `x + main(x)`. No Lipschitz bound is declared.
#[derive(Debug, Clone, PartialEq)]
pub struct SkipBlock {
    pub(crate) main: Vec<Layer>,
}

impl SkipBlock {
    pub fn new(main: Vec<Layer>) -> Self {
        Self { main }
    }

    pub fn main(&self) -> &[Layer] {
        &self.main
    }
}
