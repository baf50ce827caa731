//! Empirical checks of the encoder's declared Lipschitz bound.
//!
//! Estimates here are lower bounds on the true constant. They are used to
//! catch construction bugs, never to compute radii.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{domain, Result};
use crate::grad::record;
use crate::layers::{backward_seq, forward_seq, forward_tape_seq, jvp_seq};
use crate::network::SplitNetwork;
use crate::rng::{fill_gaussian, stream, Domain, NoiseRng};
use crate::smoothing::{sample_counts, CertResult, Mode, Prediction, SmoothingConfig};
use crate::tensor::{norm, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    pub n_pairs: usize,
    /// Largest perturbation norm; smaller probes use 1/10 and 1/100 of it.
    pub scale: f64,
    /// Gradient-direction refinements per pair.
    pub refine_steps: usize,
    pub jacobian_points: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            n_pairs: 200,
            scale: 1.0,
            refine_steps: 3,
            jacobian_points: 50,
            power_iters: 30,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub max_pairwise_ratio: f64,
    pub max_jacobian_norm: f64,
    pub declared_bound: f64,
    pub attack_violations: usize,
    pub attack_points: usize,
    pub pairs: usize,
    pub jacobian_points: usize,
}

impl AuditReport {
    pub fn passes(&self, tol: f64) -> bool {
        let limit = self.declared_bound * (1.0 + tol);
        self.max_pairwise_ratio <= limit && self.max_jacobian_norm <= limit && self.attack_violations == 0
    }
}

fn random_input(net: &SplitNetwork, rng: &mut NoiseRng) -> Tensor4 {
    let [c, h, w] = net.input_shape();
    let data = (0..c * h * w).map(|_| rng.random_range(0.0..1.0)).collect();
    Tensor4::from_vec([1, c, h, w], data).expect("uniform draws are finite")
}

fn unit_gaussian(shape: [usize; 4], rng: &mut NoiseRng) -> Tensor4 {
    let mut data = vec![0.0; shape.iter().product()];
    loop {
        fill_gaussian(&mut data, 1.0, rng);
        let n = norm(&data);
        if n > 0.0 {
            data.iter_mut().for_each(|v| *v /= n);
            return Tensor4::from_vec(shape, data).expect("normalized draws are finite");
        }
    }
}

/// Ratio of output to input distance for one pair, both measured on the
/// points actually evaluated.
fn pair_ratio(net: &SplitNetwork, x: &Tensor4, fx: &Tensor4, x2: &Tensor4) -> Result<(f64, Tensor4)> {
    let fx2 = forward_seq(net.encoder(), x2)?;
    let dy = fx2.sub(fx)?;
    let dx = norm(x2.sub(x)?.data());
    Ok((if dx > 0.0 { norm(dy.data()) / dx } else { 0.0 }, dy))
}

/// Max of `‖f_e(x) − f_e(x′)‖ / ‖x − x′‖` over random pairs. Each pair is
/// also pushed along `J(x′)ᵀ (f_e(x′) − f_e(x))`, the ascent direction of the
/// output distance, for a sharper estimate.
pub fn pairwise_lipschitz_probe(net: &SplitNetwork, cfg: &AuditConfig) -> Result<f64> {
    if cfg.n_pairs == 0 {
        return Err(domain("at least one pair is needed"));
    }
    let mut rng = stream(cfg.seed, Domain::Audit, 0);
    let mut best: f64 = 0.0;
    for i in 0..cfg.n_pairs {
        let x = random_input(net, &mut rng);
        let fx = forward_seq(net.encoder(), &x)?;
        let magnitude = cfg.scale * [1.0, 0.1, 0.01][i % 3];
        let mut u = unit_gaussian(x.shape(), &mut rng).scale(magnitude);
        for step in 0..=cfg.refine_steps {
            let x2 = x.add(&u)?;
            let (ratio, dy) = pair_ratio(net, &x, &fx, &x2)?;
            best = best.max(ratio);
            if step == cfg.refine_steps {
                break;
            }
            let (_, tapes) = forward_tape_seq(net.encoder(), &x2)?;
            let (g, _) = backward_seq(net.encoder(), &tapes, &dy)?;
            let gn = norm(g.data());
            if !(gn > 0.0) {
                break;
            }
            u = g.scale(magnitude / gn);
        }
    }
    Ok(best)
}

/// Power iteration on `JᵀJ` at `x`, using tangent and adjoint passes.
/// Returns the largest `‖J v‖` seen over unit `v`.
pub fn jacobian_spectral_norm(net: &SplitNetwork, x: &Tensor4, iters: usize, seed: u64) -> Result<f64> {
    if iters == 0 {
        return Err(domain("power iteration needs at least one step"));
    }
    net.check_input(x)?;
    let (_, tapes) = forward_tape_seq(net.encoder(), x)?;
    let mut rng = stream(seed, Domain::Audit, 1);
    let mut v = unit_gaussian(x.shape(), &mut rng);
    let mut best: f64 = 0.0;
    let mut restarts = 0;
    let mut i = 0;
    while i < iters {
        let jv = jvp_seq(net.encoder(), &tapes, &v)?;
        best = best.max(norm(jv.data()));
        let (w, _) = backward_seq(net.encoder(), &tapes, &jv)?;
        let wn = norm(w.data());
        if !(wn > 0.0) {
            if restarts == 3 {
                break;
            }
            restarts += 1;
            v = unit_gaussian(x.shape(), &mut rng);
            continue;
        }
        v = w.scale(1.0 / wn);
        i += 1;
    }
    Ok(best)
}

/// Pairwise probe plus Jacobian estimates at random points. Attack fields are
/// left at zero.
pub fn audit_encoder(net: &SplitNetwork, cfg: &AuditConfig) -> Result<AuditReport> {
    let declared_bound = net.encoder_lipschitz_bound()?;
    let max_pairwise_ratio = pairwise_lipschitz_probe(net, cfg)?;
    let mut rng = stream(cfg.seed, Domain::Audit, 2);
    let mut max_jacobian_norm: f64 = 0.0;
    for p in 0..cfg.jacobian_points {
        let x = random_input(net, &mut rng);
        let s = jacobian_spectral_norm(net, &x, cfg.power_iters, cfg.seed.wrapping_add(p as u64))?;
        max_jacobian_norm = max_jacobian_norm.max(s);
    }
    Ok(AuditReport {
        max_pairwise_ratio,
        max_jacobian_norm,
        declared_bound,
        attack_violations: 0,
        attack_points: 0,
        pairs: cfg.n_pairs,
        jacobian_points: cfg.jacobian_points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub restarts: usize,
    pub refine_steps: usize,
    /// Samples per vote while searching (common random numbers).
    pub search_samples: usize,
    /// Samples in the final majority vote per candidate.
    pub vote_samples: usize,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            restarts: 4,
            refine_steps: 4,
            search_samples: 1_000,
            vote_samples: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackOutcome {
    pub candidates: usize,
    pub violations: usize,
}

/// Searches the certified ball for a perturbation that changes the
/// smoothed majority vote.
///
/// Candidates: the clean point, the input gradient of the base classifier's
/// runner-up margin, and random directions refined greedily. All lie on the
/// sphere of radius `0.999 · radius_input`; each is judged by a fresh
/// `vote_samples` majority vote without abstention.
pub fn certified_ball_attack(
    net: &SplitNetwork,
    x: &Tensor4,
    cert: &CertResult,
    mode: Mode,
    smoothing: &SmoothingConfig,
    cfg: &AttackConfig,
    example_index: u64,
) -> Result<AttackOutcome> {
    let target = match cert.predicted {
        Prediction::Class(c) => c,
        Prediction::Abstain => return Err(domain("cannot attack an abstained certificate")),
    };
    let radius = 0.999 * cert.radius_input;
    let base = example_index.wrapping_mul(1 << 20);
    let mut rng = stream(cfg.seed, Domain::Attack, base);
    let share = |delta: &Tensor4, samples: usize, index: u64| -> Result<(usize, f64)> {
        let mut r = stream(cfg.seed, Domain::Attack, base + index);
        let c = sample_counts(net, &x.add(delta)?, mode, smoothing.sigma, samples, smoothing.batch_size, &mut r)?;
        Ok((c.top(), c.tallies[target] as f64 / samples as f64))
    };

    let mut candidates = vec![Tensor4::zeros(x.shape())];
    if radius > 0.0 {
        let tape = record(net, x, None)?;
        let mut order: Vec<usize> = (0..net.n_classes()).filter(|&c| c != target).collect();
        let s = tape.scores().example(0).to_vec();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
        if let Some(&runner) = order.first() {
            let mut g = Tensor4::zeros(tape.scores().shape());
            g.data_mut()[runner] = 1.0;
            g.data_mut()[target] = -1.0;
            let grads = tape.backward(&g)?;
            let gn = norm(grads.input.data());
            if gn > 0.0 {
                candidates.push(grads.input.scale(radius / gn));
            }
        }
        for r in 0..cfg.restarts {
            let mut dir = unit_gaussian(x.shape(), &mut rng);
            let search_index = 1 + r as u64;
            let mut best = share(&dir.scale(radius), cfg.search_samples, search_index)?.1;
            for _ in 0..cfg.refine_steps {
                let step = unit_gaussian(x.shape(), &mut rng).scale(0.5);
                let trial = dir.add(&step)?;
                let trial = trial.scale(1.0 / norm(trial.data()));
                let s = share(&trial.scale(radius), cfg.search_samples, search_index)?.1;
                if s < best {
                    best = s;
                    dir = trial;
                }
            }
            candidates.push(dir.scale(radius));
        }
    }

    let mut violations = 0;
    for (i, delta) in candidates.iter().enumerate() {
        let vote_index = (1 << 19) + i as u64;
        if share(delta, cfg.vote_samples, vote_index)?.0 != target {
            violations += 1;
        }
    }
    Ok(AttackOutcome {
        candidates: candidates.len(),
        violations,
    })
}
