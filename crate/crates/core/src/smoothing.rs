//! Monte Carlo prediction and certification of smoothed classifiers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::network::{argmax, SplitNetwork};
use crate::rng::{fill_gaussian, stream, Domain, NoiseRng};
use crate::stats::{binomial_test_half, certified_radius, clopper_pearson_lower};
use crate::tensor::Tensor4;

/// Where the smoothing noise is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Noise on the input; the whole network runs per sample.
    InputSpace,
    /// Noise on the latent code; the encoder runs once per example.
    LatentSpace,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::InputSpace => "is-rs",
            Mode::LatentSpace => "ls-rs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Prediction {
    Class(usize),
    Abstain,
}

impl Prediction {
    pub fn class(self) -> Option<usize> {
        match self {
            Prediction::Class(c) => Some(c),
            Prediction::Abstain => None,
        }
    }

    /// Class id, or `-1` for abstain.
    pub fn code(self) -> i64 {
        match self {
            Prediction::Class(c) => c as i64,
            Prediction::Abstain => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub sigma: f64,
    pub n0: usize,
    pub n: usize,
    pub alpha: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            sigma: 0.25,
            n0: 100,
            n: 10_000,
            alpha: 0.001,
            batch_size: 1_000,
            seed: 0,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(config(alloc::format!("sigma {} must be finite and non-negative", self.sigma)));
        }
        if self.n0 == 0 || self.n == 0 || self.batch_size == 0 {
            return Err(config("sample counts and batch size must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config(alloc::format!("alpha {} outside (0, 1)", self.alpha)));
        }
        Ok(())
    }
}

/// Wall-clock source; the core crate has none of its own.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Clock that always reads zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    pub tallies: Vec<u64>,
    /// Examples pushed through the encoder.
    pub encoder_passes: usize,
    /// Examples pushed through the classifier.
    pub classifier_passes: usize,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.tallies.iter().sum()
    }

    /// Most frequent class; ties resolve to the lowest id.
    pub fn top(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.tallies.iter().enumerate() {
            if c > self.tallies[best] {
                best = i;
            }
        }
        best
    }

    /// The two most frequent classes, most frequent first.
    pub fn top_two(&self) -> (usize, usize) {
        let a = self.top();
        let mut b = if a == 0 { 1 } else { 0 };
        for (i, &c) in self.tallies.iter().enumerate() {
            if i != a && c > self.tallies.get(b).copied().unwrap_or(0) {
                b = i;
            }
        }
        (a, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertResult {
    pub predicted: Prediction,
    pub p_lower: f64,
    /// Radius in the space where noise was injected.
    pub radius_latent: f64,
    /// `radius_latent / lipschitz`.
    pub radius_input: f64,
    /// Encoder bound used for the transfer (1 for input-space smoothing).
    pub lipschitz: f64,
    pub elapsed: f64,
    /// Estimation-round tallies.
    pub counts: Vec<u64>,
}

fn single_example(net: &SplitNetwork, x: &Tensor4) -> Result<()> {
    let [c, h, w] = net.input_shape();
    x.expect_shape([1, c, h, w])
}

/// Classifies `m` noisy copies of `x` and tallies the predicted classes.
///
/// Latent-space smoothing encodes `x` once and perturbs the code; input-space
/// smoothing perturbs `x` and runs the full network per copy.
pub fn sample_counts(
    net: &SplitNetwork,
    x: &Tensor4,
    mode: Mode,
    sigma: f64,
    m: usize,
    batch_size: usize,
    rng: &mut NoiseRng,
) -> Result<ClassCounts> {
    let base = noise_base(net, x, mode)?;
    let mut counts = ClassCounts {
        tallies: vec![0; net.n_classes()],
        encoder_passes: usize::from(mode == Mode::LatentSpace),
        classifier_passes: 0,
    };
    tally(net, &base, mode, sigma, m, batch_size, rng, &mut counts)?;
    Ok(counts)
}

/// The point noise is added to: the latent code or the input itself.
fn noise_base(net: &SplitNetwork, x: &Tensor4, mode: Mode) -> Result<Tensor4> {
    single_example(net, x)?;
    match mode {
        Mode::LatentSpace => net.encode(x),
        Mode::InputSpace => Ok(x.clone()),
    }
}

#[allow(clippy::too_many_arguments)]
fn tally(
    net: &SplitNetwork,
    base: &Tensor4,
    mode: Mode,
    sigma: f64,
    m: usize,
    batch_size: usize,
    rng: &mut NoiseRng,
    counts: &mut ClassCounts,
) -> Result<()> {
    if batch_size == 0 {
        return Err(config("batch size must be positive"));
    }
    let [_, c, h, w] = base.shape();
    let dim = c * h * w;
    let mut done = 0;
    let mut buf = Vec::new();
    while done < m {
        let b = batch_size.min(m - done);
        buf.clear();
        buf.resize(b * dim, 0.0);
        fill_gaussian(&mut buf, sigma, rng);
        for row in buf.chunks_exact_mut(dim) {
            for (v, z) in row.iter_mut().zip(base.data()) {
                *v += z;
            }
        }
        let noisy = Tensor4::from_vec([b, c, h, w], core::mem::take(&mut buf))?;
        let scores = match mode {
            Mode::LatentSpace => net.classify(&noisy)?,
            Mode::InputSpace => {
                counts.encoder_passes += b;
                net.forward(&noisy)?.1
            }
        };
        counts.classifier_passes += b;
        for i in 0..b {
            counts.tallies[argmax(scores.example(i))] += 1;
        }
        buf = noisy.into_vec();
        done += b;
    }
    Ok(())
}

/// Lipschitz bound used to move a radius from the noise space to the input.
pub fn transfer_bound(net: &SplitNetwork, mode: Mode) -> Result<f64> {
    match mode {
        Mode::InputSpace => Ok(1.0),
        Mode::LatentSpace => {
            let l = net.encoder_lipschitz_bound()?;
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Domain(alloc::format!("encoder bound {l} is not usable")));
            }
            Ok(l)
        }
    }
}

/// Selection round of `n0` samples, estimation round of `n` fresh samples,
/// one-sided lower bound on the top class, radius `σ Φ⁻¹(p_lower)` divided
/// by the encoder bound. Noise comes from a stream keyed by
/// `(cfg.seed, example_index)`.
pub fn certify(
    net: &SplitNetwork,
    x: &Tensor4,
    mode: Mode,
    cfg: &SmoothingConfig,
    example_index: u64,
    clock: &dyn Clock,
) -> Result<CertResult> {
    cfg.validate()?;
    let lipschitz = transfer_bound(net, mode)?;
    let mut rng = stream(cfg.seed, Domain::Certify, example_index);
    let start = clock.seconds();
    let base = noise_base(net, x, mode)?;
    let empty = ClassCounts {
        tallies: vec![0; net.n_classes()],
        encoder_passes: 0,
        classifier_passes: 0,
    };
    let mut selection = empty.clone();
    tally(net, &base, mode, cfg.sigma, cfg.n0, cfg.batch_size, &mut rng, &mut selection)?;
    let top = selection.top();
    let mut estimate = empty;
    tally(net, &base, mode, cfg.sigma, cfg.n, cfg.batch_size, &mut rng, &mut estimate)?;
    let k = estimate.tallies[top];
    let p_lower = clopper_pearson_lower(k, cfg.n as u64, cfg.alpha)?;
    let (predicted, radius_latent) = if p_lower > 0.5 {
        (Prediction::Class(top), certified_radius(p_lower, cfg.sigma)?)
    } else {
        (Prediction::Abstain, 0.0)
    };
    let radius_input = radius_latent / lipschitz;
    let elapsed = clock.seconds() - start;
    Ok(CertResult {
        predicted,
        p_lower,
        radius_latent,
        radius_input,
        lipschitz,
        elapsed,
        counts: estimate.tallies,
    })
}

/// Decision rule on tallies: the top class if a two-sided binomial test
/// rejects a tie with the runner-up at level `alpha`.
pub fn decide(counts: &ClassCounts, alpha: f64) -> Result<Prediction> {
    let (a, b) = counts.top_two();
    let na = counts.tallies[a];
    let nb = counts.tallies.get(b).copied().unwrap_or(0);
    if na + nb == 0 {
        return Ok(Prediction::Abstain);
    }
    if binomial_test_half(na, na + nb)? <= alpha {
        Ok(Prediction::Class(a))
    } else {
        Ok(Prediction::Abstain)
    }
}

/// Smoothed prediction with abstention, from `cfg.n` samples.
pub fn predict(
    net: &SplitNetwork,
    x: &Tensor4,
    mode: Mode,
    cfg: &SmoothingConfig,
    example_index: u64,
) -> Result<Prediction> {
    cfg.validate()?;
    let mut rng = stream(cfg.seed, Domain::Predict, example_index);
    let counts = sample_counts(net, x, mode, cfg.sigma, cfg.n, cfg.batch_size, &mut rng)?;
    decide(&counts, cfg.alpha)
}
