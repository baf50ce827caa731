//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use lsrs::config::ExperimentConfig;
use lsrs::harness::{self, bench_modes, evaluate, files, read_csv, WallClock};
use lsrs_core::arch::ArchSpec;
use lsrs_core::audit::{audit_encoder, certified_ball_attack, AttackConfig, AuditConfig};
use lsrs_core::data::{Blobs, Dataset, Split};
use lsrs_core::grad::{record, NoiseSite};
use lsrs_core::layers::{
    max_unitarity_defect, CircularConv, Dense, GroupSort, Layer, OrthoConv, ResidualBlock, SkipBlock,
};
use lsrs_core::network::SplitNetwork;
use lsrs_core::rng::{gaussian_sample, stream, Domain};
use lsrs_core::smoothing::{certify, sample_counts, Mode, NoClock, Prediction, SmoothingConfig};
use lsrs_core::stats::{normal_quantile, two_sided_radius};
use lsrs_core::tensor::{dot, norm};
use lsrs_core::train::{train, TrainConfig};
use lsrs_core::Tensor4;
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

const SEED: u64 = 2024;
const SIGMA: f64 = 0.25;
const FOR_SWEEP: [usize; 5] = [0, 2, 4, 6, 8];

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn uniform(shape: [usize; 4], lo: f64, hi: f64, rng: &mut impl Rng) -> Tensor4 {
    let n = shape.iter().product();
    Tensor4::from_vec(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Reference architecture trained on blobs at each orthogonal fraction.
struct Sweep {
    test_set: Dataset,
    models: Vec<(usize, SplitNetwork)>,
}

impl Sweep {
    fn train() -> Self {
        let blobs = Blobs { n_classes: 4, shape: [1, 8, 8], spread: 0.15, seed: SEED };
        let train_set = blobs.sample(50, Split::Train).unwrap();
        let test_set = blobs.sample(40, Split::Test).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            lr0: 0.01,
            lr_decay: 0.1,
            lr_step: 15,
            momentum: 0.9,
            sigma: SIGMA,
            noise_site: NoiseSite::Latent,
            batch_size: 32,
            seed: SEED,
        };
        let models = FOR_SWEEP
            .iter()
            .map(|&k| {
                let mut spec = ArchSpec::reference(1, 4, SEED);
                spec.ortho_blocks = k;
                spec.split_blocks = k;
                let mut net = spec.build().unwrap();
                let hist = train(&mut net, &train_set, &cfg).unwrap();
                let last = hist.last().unwrap();
                println!("  setup: FoR {k}/8 trained, final loss {:.4}, batch accuracy {:.3}", last.loss, last.train_acc);
                (k, net)
            })
            .collect();
        Self { test_set, models }
    }

    fn model(&self, k: usize) -> &SplitNetwork {
        &self.models.iter().find(|(m, _)| *m == k).unwrap().1
    }
}

fn c1_orthogonality(_: &Sweep) -> Check {
    let mut worst_defect = 0.0f64;
    let mut worst_ratio = 0.0f64;
    for i in 0..20u64 {
        let c = [2, 4, 8][i as usize % 3];
        let n = [4, 8][(i as usize / 3) % 2];
        let mut rng = stream(SEED, Domain::Test, 1000 + i);
        let layer = OrthoConv::new(uniform([c, c, n, n], -1.0, 1.0, &mut rng)).map_err(|e| e.to_string())?;
        let q = layer.spectral_q().map_err(|e| e.to_string())?;
        worst_defect = worst_defect.max(max_unitarity_defect(&q));
        let x = gaussian_sample([100, c, n, n], 1.0, &mut rng).map_err(|e| e.to_string())?;
        let y = layer.forward(&x).map_err(|e| e.to_string())?;
        for b in 0..100 {
            worst_ratio = worst_ratio.max((norm(y.example(b)) / norm(x.example(b)) - 1.0).abs());
        }
    }
    ensure(worst_defect <= 1e-6 && worst_ratio <= 1e-5, || {
        format!("defect {worst_defect:e}, norm ratio deviation {worst_ratio:e}")
    })?;
    Ok(format!("20 layers: max defect {worst_defect:.2e}, max |ratio - 1| {worst_ratio:.2e}"))
}

fn c2_audit(sweep: &Sweep) -> Check {
    let mut parts = Vec::new();
    for (k, net) in &sweep.models {
        let cfg = AuditConfig { seed: SEED, ..AuditConfig::default() };
        let r = audit_encoder(net, &cfg).map_err(|e| e.to_string())?;
        ensure(r.declared_bound == 1.0, || format!("FoR {k}/8 declares bound {}", r.declared_bound))?;
        ensure(r.max_pairwise_ratio <= 1.001 && r.max_jacobian_norm <= 1.001, || {
            format!("FoR {k}/8: pairwise {} jacobian {}", r.max_pairwise_ratio, r.max_jacobian_norm)
        })?;
        parts.push(format!("{k}/8: {:.4}/{:.4}", r.max_pairwise_ratio, r.max_jacobian_norm));
    }
    Ok(format!("pairwise/jacobian maxima {}", parts.join(", ")))
}

const FD_H: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn perturbed(layer: &Layer, index: usize, delta: f64) -> Layer {
    let mut out = layer.clone();
    let mut offset = 0;
    out.visit_params_mut(&mut |p| {
        if (offset..offset + p.len()).contains(&index) {
            p[index - offset] += delta;
        }
        offset += p.len();
    });
    out.prepare().unwrap();
    out
}

/// Worst relative error over 20 input and 20 parameter coordinates of
/// `x ↦ ⟨r, layer(x)⟩`.
fn layer_grad_error(mut layer: Layer, x: Tensor4, seed: u64) -> Result<f64, String> {
    layer.prepare().map_err(|e| e.to_string())?;
    let mut rng = stream(seed, Domain::Test, 2000);
    let y = layer.forward(&x).map_err(|e| e.to_string())?;
    let r = uniform(y.shape(), -1.0, 1.0, &mut rng);
    let f = |l: &Layer, x: &Tensor4| dot(r.data(), l.forward(x).unwrap().data());
    let (_, tape) = layer.forward_tape(&x).map_err(|e| e.to_string())?;
    let (gx, gp) = layer.backward(&tape, &r).map_err(|e| e.to_string())?;
    let flat = gp.concat();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let i = rng.random_range(0..x.len());
        let (mut xp, mut xm) = (x.clone(), x.clone());
        xp.data_mut()[i] += FD_H;
        xm.data_mut()[i] -= FD_H;
        let fd = (f(&layer, &xp) - f(&layer, &xm)) / (2.0 * FD_H);
        worst = worst.max(rel_err(fd, gx.data()[i]));
    }
    if !flat.is_empty() {
        for _ in 0..20 {
            let i = rng.random_range(0..flat.len());
            let fd = (f(&perturbed(&layer, i, FD_H), &x) - f(&perturbed(&layer, i, -FD_H), &x)) / (2.0 * FD_H);
            worst = worst.max(rel_err(fd, flat[i]));
        }
    }
    Ok(worst)
}

fn c3_gradients(sweep: &Sweep) -> Check {
    let mut rng = stream(SEED, Domain::Test, 3000);
    let mut w = |shape: [usize; 4], b: f64| uniform(shape, -b, b, &mut rng);
    let ortho = |t: Tensor4| Layer::OrthoConv(OrthoConv::new(t).unwrap());
    let dense = |i: usize, o: usize, t: Tensor4, bias: Tensor4| {
        Layer::Dense(Dense::new(i, o, t.into_vec(), bias.into_vec()).unwrap())
    };
    let cases: Vec<(&str, Layer, Tensor4)> = vec![
        ("ortho_conv", ortho(w([3, 3, 4, 4], 0.5)), w([2, 3, 4, 4], 1.0)),
        ("ortho_conv 8x8", ortho(w([2, 2, 8, 8], 0.5)), w([1, 2, 8, 8], 1.0)),
        ("ortho_dense", Layer::OrthoDense(OrthoConv::new(w([6, 6, 1, 1], 0.5)).unwrap()), w([2, 6, 1, 1], 1.0)),
        ("conv", Layer::Conv(CircularConv::new(w([3, 2, 4, 4], 0.5)).unwrap()), w([2, 2, 4, 4], 1.0)),
        ("dense", dense(12, 5, w([1, 1, 5, 12], 0.5), w([1, 1, 1, 5], 0.5)), w([2, 12, 1, 1], 1.0)),
        ("groupsort", Layer::GroupSort(GroupSort::new(4).unwrap()), w([2, 4, 2, 2], 1.0)),
        ("relu", Layer::Relu, w([2, 3, 2, 2], 1.0)),
        ("channel_lift", Layer::ChannelLift { from: 1, to: 3 }, w([2, 1, 4, 4], 1.0)),
        ("scale", Layer::Scale(2.5), w([2, 2, 2, 2], 1.0)),
        ("divide", Layer::Divide(4.0), w([2, 2, 2, 2], 1.0)),
        (
            "residual",
            Layer::Residual(
                ResidualBlock::new(
                    vec![ortho(w([2, 2, 4, 4], 0.5)), Layer::GroupSort(GroupSort::default()), ortho(w([2, 2, 4, 4], 0.5))],
                    0.3,
                )
                .unwrap(),
            ),
            w([2, 2, 4, 4], 1.0),
        ),
        (
            "skip",
            Layer::Skip(SkipBlock::new(vec![
                Layer::Conv(CircularConv::new(w([2, 2, 4, 4], 0.5)).unwrap()),
                Layer::Relu,
                Layer::Conv(CircularConv::new(w([2, 2, 4, 4], 0.5)).unwrap()),
            ])),
            w([2, 2, 4, 4], 1.0),
        ),
    ];
    let mut worst = 0.0f64;
    let mut names = Vec::new();
    for (i, (name, layer, x)) in cases.into_iter().enumerate() {
        let e = layer_grad_error(layer, x, 10 + i as u64)?;
        ensure(e <= 1e-3, || format!("{name}: relative error {e:e}"))?;
        worst = worst.max(e);
        names.push(name);
    }

    // Whole trained network: parameter gradients of ⟨r, scores⟩.
    let net = sweep.model(4);
    let x = sweep.test_set.example(0);
    let tape = record(net, &x, None).map_err(|e| e.to_string())?;
    let mut rng = stream(SEED, Domain::Test, 3001);
    let r = uniform(tape.scores().shape(), -1.0, 1.0, &mut rng);
    let grads = tape.backward(&r).map_err(|e| e.to_string())?;
    let flat = grads.params.concat();
    let f = |n: &SplitNetwork| dot(r.data(), n.forward(&x).unwrap().1.data());
    let shifted = |i: usize, d: f64| {
        let mut n = net.clone();
        let mut offset = 0;
        n.update_params(&mut |p| {
            if (offset..offset + p.len()).contains(&i) {
                p[i - offset] += d;
            }
            offset += p.len();
        })
        .unwrap();
        n
    };
    for _ in 0..20 {
        let i = rng.random_range(0..flat.len());
        let fd = (f(&shifted(i, FD_H)) - f(&shifted(i, -FD_H))) / (2.0 * FD_H);
        let e = rel_err(fd, flat[i]);
        ensure(e <= 1e-3, || format!("network parameter {i}: fd {fd} vs {} ({e:e})", flat[i]))?;
        worst = worst.max(e);
    }
    Ok(format!("{} layer kinds + FoR 4/8 network, worst relative error {worst:.2e}", names.len()))
}

/// `argmax(w·z + b, 0)`.
fn linear_toy(w: &[f64], b: f64) -> SplitNetwork {
    let d = w.len();
    let weights = [w.to_vec(), vec![0.0; d]].concat();
    let head = Dense::new(d, 2, weights, vec![b, 0.0]).unwrap();
    SplitNetwork::from_parts(vec![], vec![Layer::Dense(head)], [d, 1, 1], (0, 0)).unwrap()
}

fn c4_soundness(_: &Sweep) -> Check {
    let w = [0.6, -0.8, 0.5];
    let b = 0.1;
    let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let net = linear_toy(&w, b);
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    // Points along w with class-0 probabilities spread over both classes.
    let targets = [0.6, 0.75, 0.9, 0.97, 0.995, 0.4, 0.2, 0.05];
    let points: Vec<(Tensor4, f64)> = targets
        .iter()
        .map(|&p| {
            let t = (std_normal.inverse_cdf(p) * SIGMA * wn - b) / wn;
            let z: Vec<f64> = w.iter().map(|v| t * v / wn).collect();
            let margin = w.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() + b;
            let p0 = std_normal.cdf(margin / (SIGMA * wn));
            (Tensor4::from_vec([1, 3, 1, 1], z).unwrap(), p0)
        })
        .collect();
    let cfg = SmoothingConfig { sigma: SIGMA, seed: SEED, ..SmoothingConfig::default() };
    let trials = 10_000u64;
    let mut above = 0;
    let mut abstains = 0;
    for i in 0..trials {
        let (z, p0) = &points[i as usize % points.len()];
        let cert = certify(&net, z, Mode::LatentSpace, &cfg, i, &NoClock).map_err(|e| e.to_string())?;
        let truth = match cert.predicted {
            Prediction::Class(0) => *p0,
            Prediction::Class(_) => 1.0 - p0,
            Prediction::Abstain => {
                abstains += 1;
                p0.min(1.0 - p0)
            }
        };
        if cert.p_lower > truth {
            above += 1;
        }
    }
    let rate = above as f64 / trials as f64;
    let limit = 0.001 + 3.0 * (0.001f64 / trials as f64).sqrt();
    ensure(rate <= limit, || format!("{above} of {trials} bounds exceed the truth (rate {rate} > {limit})"))?;
    Ok(format!("{above}/{trials} bounds above truth (rate {rate:.5} <= {limit:.5}), {abstains} abstentions"))
}

fn c5_radius_identities(sweep: &Sweep) -> Check {
    let mut worst = 0.0f64;
    let mut certs = 0;
    let cfg = SmoothingConfig { sigma: SIGMA, n: 2000, seed: SEED, ..SmoothingConfig::default() };
    let net = sweep.model(8);
    for i in 0..20 {
        let cert = certify(net, &sweep.test_set.example(i), Mode::LatentSpace, &cfg, i as u64, &NoClock)
            .map_err(|e| e.to_string())?;
        if cert.predicted == Prediction::Abstain {
            continue;
        }
        let one = SIGMA * normal_quantile(cert.p_lower).map_err(|e| e.to_string())?;
        let two = two_sided_radius(cert.p_lower, 1.0 - cert.p_lower, SIGMA).map_err(|e| e.to_string())?;
        worst = worst.max((cert.radius_latent - one).abs()).max((cert.radius_latent - two).abs());
        certs += 1;
    }
    ensure(certs > 0, || "no certified example".into())?;
    ensure(worst <= 1e-10, || format!("radius identity off by {worst:e}"))?;
    let q_half = normal_quantile(0.5).map_err(|e| e.to_string())?;
    ensure(q_half == 0.0, || format!("quantile(0.5) = {q_half}"))?;
    let mut anti = 0.0f64;
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut oracle = 0.0f64;
    for k in 1..(1 << 12) {
        // Dyadic p so that 1 − p is exact.
        let p = k as f64 / (1 << 12) as f64;
        let q = normal_quantile(p).unwrap();
        anti = anti.max((q + normal_quantile(1.0 - p).unwrap()).abs());
        oracle = oracle.max((q - std_normal.inverse_cdf(p)).abs());
    }
    ensure(anti <= 1e-10, || format!("antisymmetry off by {anti:e}"))?;
    ensure(oracle <= 1e-8, || format!("quantile differs from reference by {oracle:e}"))?;
    Ok(format!(
        "{certs} certificates within {worst:.1e}; quantile(0.5) = 0; antisymmetry {anti:.1e}; reference quantile {oracle:.1e}"
    ))
}

fn c6_attack(sweep: &Sweep) -> Check {
    let net = sweep.model(8);
    let cfg = SmoothingConfig { sigma: SIGMA, seed: SEED, ..SmoothingConfig::default() };
    let attack = AttackConfig { seed: SEED, ..AttackConfig::default() };
    let mut certified = 0;
    let mut candidates = 0;
    let mut violations = 0;
    let mut radii = 0.0;
    for i in 0..sweep.test_set.len() {
        if certified == 100 {
            break;
        }
        let x = sweep.test_set.example(i);
        let cert = certify(net, &x, Mode::LatentSpace, &cfg, i as u64, &NoClock).map_err(|e| e.to_string())?;
        if cert.predicted == Prediction::Abstain {
            continue;
        }
        certified += 1;
        radii += cert.radius_input;
        let out = certified_ball_attack(net, &x, &cert, Mode::LatentSpace, &cfg, &attack, i as u64)
            .map_err(|e| e.to_string())?;
        candidates += out.candidates;
        violations += out.violations;
    }
    ensure(certified >= 100, || format!("only {certified} certified points"))?;
    ensure(violations == 0, || format!("{violations} flips over {certified} points"))?;
    Ok(format!(
        "{certified} certified points (mean radius {:.3}), {candidates} candidates, 0 flips",
        radii / certified as f64
    ))
}

fn c7_rescaling(sweep: &Sweep) -> Check {
    let net = sweep.model(4);
    let cfg = SmoothingConfig { sigma: SIGMA, n: 2000, seed: SEED, ..SmoothingConfig::default() };
    let mut worst = 0.0f64;
    let mut checked = 0;
    for i in 0..5 {
        let x = sweep.test_set.example(i);
        let base = certify(net, &x, Mode::LatentSpace, &cfg, i as u64, &NoClock).map_err(|e| e.to_string())?;
        for c in [0.5, 2.0, 10.0] {
            let (mut enc, mut cls) = net.clone().into_parts();
            enc.push(Layer::Scale(c));
            cls.insert(0, Layer::Divide(c));
            let scaled = SplitNetwork::from_parts(enc, cls, net.input_shape(), net.for_fraction())
                .map_err(|e| e.to_string())?;
            let cfg2 = SmoothingConfig { sigma: c * SIGMA, ..cfg };
            let cert = certify(&scaled, &x, Mode::LatentSpace, &cfg2, i as u64, &NoClock).map_err(|e| e.to_string())?;
            ensure(cert.counts == base.counts, || format!("example {i}, c = {c}: counts {:?} vs {:?}", cert.counts, base.counts))?;
            ensure(cert.predicted == base.predicted, || format!("example {i}, c = {c}: prediction differs"))?;
            let d = (cert.radius_input - base.radius_input).abs();
            ensure(d <= 1e-12, || format!("example {i}, c = {c}: radius differs by {d:e}"))?;
            worst = worst.max(d);
            checked += 1;
        }
    }
    Ok(format!("{checked} (example, c) pairs: identical counts, radius_input within {worst:.1e}"))
}

fn c8_mode_equivalence(sweep: &Sweep) -> Check {
    let mut checked = 0;
    for net in [sweep.model(0).clone(), sweep.model(8).with_split_index(0).unwrap()] {
        for i in 0..3 {
            let x = sweep.test_set.example(i);
            let mut r1 = stream(SEED, Domain::Test, 4000 + i as u64);
            let mut r2 = stream(SEED, Domain::Test, 4000 + i as u64);
            let a = sample_counts(&net, &x, Mode::LatentSpace, SIGMA, 2000, 500, &mut r1).map_err(|e| e.to_string())?;
            let b = sample_counts(&net, &x, Mode::InputSpace, SIGMA, 2000, 500, &mut r2).map_err(|e| e.to_string())?;
            ensure(a.tallies == b.tallies, || format!("example {i}: {:?} vs {:?}", a.tallies, b.tallies))?;
            let cfg = SmoothingConfig { sigma: SIGMA, n: 2000, seed: SEED, ..SmoothingConfig::default() };
            let ca = certify(&net, &x, Mode::LatentSpace, &cfg, i as u64, &NoClock).map_err(|e| e.to_string())?;
            let cb = certify(&net, &x, Mode::InputSpace, &cfg, i as u64, &NoClock).map_err(|e| e.to_string())?;
            ensure(ca == cb, || format!("example {i}: certificates differ"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} examples: identical tallies and certificates"))
}

fn c9_efficiency(sweep: &Sweep) -> Check {
    let net = sweep.model(8);
    let data = sweep.test_set.take(4).map_err(|e| e.to_string())?;
    let cfg = SmoothingConfig { sigma: SIGMA, seed: SEED, ..SmoothingConfig::default() };
    let report = bench_modes(net, &data, &cfg, &FOR_SWEEP, &WallClock::new()).map_err(|e| e.to_string())?;
    let ls: Vec<f64> = report.latent_rows().map(|r| r.mean_time).collect();
    let inversions: Vec<f64> = ls.windows(2).filter(|w| w[1] > w[0]).map(|w| w[1] / w[0] - 1.0).collect();
    let half = report.latent_rows().find(|r| r.split_blocks == 4).unwrap().speedup;
    let zero = report.latent_rows().find(|r| r.split_blocks == 0).unwrap().speedup;
    let times: Vec<String> = ls.iter().map(|t| format!("{t:.3}")).collect();
    let detail = format!(
        "IS-RS {:.3} s; LS-RS by depth {} s; speedup at half {half:.2}x, at depth 0 {zero:.2}x",
        report.rows[0].mean_time,
        times.join("/")
    );
    ensure(inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.05), || format!("not monotone: {detail}"))?;
    ensure(half >= 1.2, || format!("speedup too small: {detail}"))?;
    Ok(detail)
}

fn c10_robustness_cost(sweep: &Sweep) -> Check {
    let data = sweep.test_set.take(60).map_err(|e| e.to_string())?;
    let cfg = SmoothingConfig { sigma: SIGMA, n0: 100, n: 1000, seed: SEED, ..SmoothingConfig::default() };
    let mut acr = Vec::new();
    for (k, net) in &sweep.models {
        let eval = evaluate(net, &data, Mode::LatentSpace, &cfg, &[0.0], 1, false).map_err(|e| e.to_string())?;
        acr.push((*k, eval.summary.acr, eval.summary.clean_accuracy));
    }
    let base = acr[0].1;
    let full = acr.last().unwrap().1;
    let ratio = full / base;
    let table: Vec<String> = acr.iter().map(|(k, a, c)| format!("{k}/8 ACR {a:.4} clean {c:.3}")).collect();
    let detail = format!("{}; ratio {ratio:.3} (n = 1000, 60 examples)", table.join(", "));
    ensure((0.6..=1.0).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

fn c11_determinism(_: &Sweep) -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = ExperimentConfig::default();
    cfg.train.epochs = 5;
    cfg.smoothing.n = 1000;
    cfg.data.test_limit = Some(20);
    cfg.audit.pairs = 40;
    cfg.audit.jacobian_points = 5;
    cfg.audit.attack_points = 2;
    cfg.run.seed = SEED;
    let run = |sub: &str, timing: bool| -> Result<Vec<u8>, String> {
        let mut c = cfg.clone();
        c.run.out = dir.path().join(sub);
        c.run.timing = timing;
        harness::run(&c).map_err(|e| e.to_string())?;
        std::fs::read(c.run.out.join(files::CERTIFY_CSV)).map_err(|e| e.to_string())
    };
    let a = run("a", false)?;
    let b = run("b", false)?;
    ensure(a == b, || "untimed certification CSVs differ".into())?;
    let timed = run("c", true)?;
    let strip = |bytes: &[u8]| -> Vec<(usize, String)> {
        read_csv(bytes)
            .unwrap()
            .into_iter()
            .map(|r| (r.idx, format!("{:?}", lsrs::harness::CertRecord { time_s: 0.0, ..r })))
            .collect()
    };
    ensure(strip(&a) == strip(&timed), || "timed run differs outside time_s".into())?;
    let model = |sub: &str| std::fs::read(Path::new(dir.path()).join(sub).join(files::MODEL)).unwrap();
    ensure(model("a") == model("b"), || "checkpoints differ".into())?;
    Ok(format!(
        "two runs: {} byte CSV identical; timed run matches except time_s",
        a.len()
    ))
}

fn main() {
    let start = Instant::now();
    println!("acceptance: training the orthogonal-fraction sweep on blobs");
    let sweep = Sweep::train();
    println!("acceptance: setup took {:.1} s", start.elapsed().as_secs_f64());

    type Criterion = (u32, &'static str, Option<f64>, fn(&Sweep) -> Check);
    let criteria: [Criterion; 11] = [
        (1, "orthogonality by construction", Some(30.0), c1_orthogonality),
        (2, "encoder Lipschitz audit", Some(120.0), c2_audit),
        (3, "gradient correctness", Some(120.0), c3_gradients),
        (4, "statistical soundness", Some(300.0), c4_soundness),
        (5, "radius formula identities", None, c5_radius_identities),
        (6, "certified-ball attack finds no flips", Some(600.0), c6_attack),
        (7, "rescaling equivalence", None, c7_rescaling),
        (8, "mode equivalence at split 0", None, c8_mode_equivalence),
        (9, "efficiency trend", Some(900.0), c9_efficiency),
        (10, "robustness-cost trend", None, c10_robustness_cost),
        (11, "end-to-end determinism", None, c11_determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&sweep)))
            .unwrap_or_else(|p| Err(format!("panicked: {:?}", p.downcast_ref::<String>().map(String::as_str).or(p.downcast_ref::<&str>().copied()))));
        let secs = t.elapsed().as_secs_f64();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if secs > l => Err(format!("took {secs:.1} s, limit {l} s")),
            (r, _) => r,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {name} [{secs:.1} s]: {detail}");
    }
    println!(
        "acceptance: {}/11 passed in {:.1} s",
        11 - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
