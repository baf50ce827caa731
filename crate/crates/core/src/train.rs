//! Noise-augmented SGD with momentum.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{config, Error, Result};
use crate::grad::{loss_and_grad, NoiseSite};
use crate::network::SplitNetwork;
use crate::rng::{gaussian_sample, stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub lr_step: usize,
    pub momentum: f64,
    pub sigma: f64,
    pub noise_site: NoiseSite,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 90,
            lr0: 0.01,
            lr_decay: 0.1,
            lr_step: 30,
            momentum: 0.9,
            sigma: 0.25,
            noise_site: NoiseSite::Latent,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(config(alloc::format!("lr0 {} must be positive", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(config(alloc::format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(config(alloc::format!("sigma {} must be non-negative", self.sigma)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(config("lr_decay must be positive"));
        }
        if self.lr_step == 0 || self.batch_size == 0 {
            return Err(config("lr_step and batch_size must be positive"));
        }
        Ok(())
    }

    /// `lr0 · decay^⌊epoch / step⌋`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * libm::pow(self.lr_decay, (epoch / self.lr_step) as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub train_acc: f64,
}

/// Trains `net` in place and returns one record per optimizer step.
///
/// Each epoch shuffles with its own stream and draws one fresh noise sample
/// per example per step at `cfg.noise_site`.
pub fn train(net: &mut SplitNetwork, data: &Dataset, cfg: &TrainConfig) -> Result<Vec<LossRecord>> {
    cfg.validate()?;
    let [c, h, w] = net.input_shape();
    data.inputs.expect_shape([data.len(), c, h, w])?;
    if data.n_classes > net.n_classes() {
        return Err(config(alloc::format!(
            "dataset has {} classes, network scores {}",
            data.n_classes,
            net.n_classes()
        )));
    }
    net.prepare()?;
    let mut velocity: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut stream(cfg.seed, Domain::Shuffle, epoch as u64));
        let mut noise_rng = stream(cfg.seed, Domain::TrainNoise, epoch as u64);
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let (x, labels) = data.gather(batch)?;
            let noise_shape = match cfg.noise_site {
                NoiseSite::Input => [batch.len(), c, h, w],
                NoiseSite::Latent => {
                    let [lc, lh, lw] = net.latent_shape();
                    [batch.len(), lc, lh, lw]
                }
            };
            let xi = if cfg.sigma > 0.0 {
                Some(gaussian_sample(noise_shape, cfg.sigma, &mut noise_rng)?)
            } else {
                None
            };
            let (loss, correct, grads) =
                loss_and_grad(net, &x, &labels, xi.as_ref().map(|t| (t, cfg.noise_site)))?;
            let finite = loss.is_finite() && grads.params.iter().flatten().all(|g| g.is_finite());
            if !finite {
                return Err(Error::Diverged { epoch, step });
            }
            for (v, g) in velocity.iter_mut().zip(&grads.params) {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = cfg.momentum * *vi + gi;
                }
            }
            let mut block = 0;
            net.update_params(&mut |p| {
                for (pi, vi) in p.iter_mut().zip(&velocity[block]) {
                    *pi -= lr * vi;
                }
                block += 1;
            })?;
            history.push(LossRecord {
                epoch,
                step,
                lr,
                loss,
                train_acc: correct as f64 / batch.len() as f64,
            });
        }
    }
    Ok(history)
}

/// Mean loss per epoch, in epoch order.
pub fn epoch_losses(history: &[LossRecord]) -> Vec<f64> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for r in history {
        if out.len() <= r.epoch {
            out.resize(r.epoch + 1, (0.0, 0));
        }
        out[r.epoch].0 += r.loss;
        out[r.epoch].1 += 1;
    }
    out.into_iter().map(|(s, n)| if n == 0 { 0.0 } else { s / n as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_steps_down() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), 0.01);
        assert_eq!(cfg.lr_at(29), 0.01);
        assert!((cfg.lr_at(30) - 0.001).abs() < 1e-15);
        assert!((cfg.lr_at(60) - 0.0001).abs() < 1e-16);
    }

    #[test]
    fn validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for cfg in [
            TrainConfig { lr0: 0.0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { sigma: -0.1, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { lr_step: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn epoch_means() {
        let r = |epoch, loss| LossRecord { epoch, step: 0, lr: 0.1, loss, train_acc: 0.0 };
        assert_eq!(epoch_losses(&[r(0, 1.0), r(0, 3.0), r(1, 0.5)]), vec![2.0, 0.5]);
    }
}
