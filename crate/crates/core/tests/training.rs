use lsrs_core::arch::ArchSpec;
use lsrs_core::data::{Blobs, Split};
use lsrs_core::grad::NoiseSite;
use lsrs_core::layers::{max_unitarity_defect, Dense, Layer};
use lsrs_core::network::SplitNetwork;
use lsrs_core::rng::{stream, Domain};
use lsrs_core::train::{epoch_losses, train, TrainConfig};
use lsrs_core::Error;
use rand::Rng;

fn two_layer(d: usize, hidden: usize, seed: u64) -> SplitNetwork {
    let mut rng = stream(seed, Domain::Test, 0);
    let mut w = |n: usize, fan_in: usize| -> Vec<f64> {
        let b = 1.0 / (fan_in as f64).sqrt();
        (0..n).map(|_| rng.random_range(-b..b)).collect()
    };
    let l1 = Dense::new(d, hidden, w(d * hidden, d), vec![0.0; hidden]).unwrap();
    let l2 = Dense::new(hidden, 2, w(hidden * 2, hidden), vec![0.0; 2]).unwrap();
    SplitNetwork::from_parts(
        vec![],
        vec![Layer::Dense(l1), Layer::Relu, Layer::Dense(l2)],
        [d, 1, 1],
        (0, 0),
    )
    .unwrap()
}

fn blobs_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 40,
        lr0: 0.05,
        lr_decay: 0.5,
        lr_step: 20,
        momentum: 0.9,
        sigma: 0.0,
        noise_site: NoiseSite::Input,
        batch_size: 16,
        seed: 3,
    }
}

fn separable() -> lsrs_core::data::Dataset {
    Blobs { n_classes: 2, shape: [2, 1, 1], spread: 0.05, seed: 4 }
        .sample(100, Split::Train)
        .unwrap()
}

#[test]
fn separable_blobs_reach_full_accuracy() {
    let data = separable();
    let mut net = two_layer(2, 16, 1);
    train(&mut net, &data, &blobs_cfg()).unwrap();
    let pred = net.predict_clean(&data.inputs).unwrap();
    let acc = pred.iter().zip(&data.labels).filter(|(p, l)| p == l).count() as f64 / data.len() as f64;
    assert!(acc >= 0.99, "accuracy {acc}");
}

#[test]
fn windowed_loss_is_non_increasing() {
    let data = separable();
    let mut net = two_layer(2, 16, 1);
    let history = train(&mut net, &data, &blobs_cfg()).unwrap();
    let per_epoch = epoch_losses(&history);
    let windows: Vec<f64> = per_epoch.chunks(5).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    for pair in windows.windows(2) {
        assert!(pair[1] <= pair[0], "{windows:?}");
    }
}

#[test]
fn seeded_runs_are_bit_identical() {
    let data = Blobs { n_classes: 3, shape: [1, 4, 4], spread: 0.2, seed: 2 }
        .sample(10, Split::Train)
        .unwrap();
    let spec = ArchSpec {
        input_channels: 1,
        channels: 2,
        spatial: 4,
        blocks: 2,
        ortho_blocks: 1,
        split_blocks: 1,
        group_size: 2,
        classes: 3,
        seed: 1,
    };
    let cfg = TrainConfig {
        epochs: 3,
        sigma: 0.25,
        noise_site: NoiseSite::Latent,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = spec.build().unwrap();
        let h = train(&mut net, &data, &cfg).unwrap();
        (net, h)
    };
    let (n1, h1) = run();
    let (n2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(n1.params(), n2.params());
    assert_eq!(h1.len(), 3 * 4);
    assert_eq!(h1[0].lr, 0.01);
}

#[test]
fn updates_keep_convolutions_orthogonal() {
    let data = Blobs { n_classes: 2, shape: [1, 4, 4], spread: 0.2, seed: 5 }
        .sample(16, Split::Train)
        .unwrap();
    let spec = ArchSpec {
        input_channels: 1,
        channels: 4,
        spatial: 4,
        blocks: 2,
        ortho_blocks: 2,
        split_blocks: 2,
        group_size: 2,
        classes: 2,
        seed: 2,
    };
    let mut net = spec.build().unwrap();
    let before = net.params();
    let cfg = TrainConfig { epochs: 5, lr0: 0.5, sigma: 0.1, batch_size: 4, ..TrainConfig::default() };
    train(&mut net, &data, &cfg).unwrap();
    assert_ne!(net.params(), before);
    let mut checked = 0;
    for layer in net.layers() {
        if let Layer::Residual(r) = layer {
            for inner in r.main() {
                if let Layer::OrthoConv(c) = inner {
                    assert!(max_unitarity_defect(&c.spectral_q().unwrap()) <= 1e-6);
                    checked += 1;
                }
            }
        }
    }
    assert_eq!(checked, 4);
    assert_eq!(net.encoder_lipschitz_bound().unwrap(), 1.0);
}

#[test]
fn divergence_is_reported() {
    let data = separable();
    let head = Dense::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2]).unwrap();
    let layers = vec![Layer::Dense(head), Layer::Scale(1e200)];
    let mut net = SplitNetwork::from_parts(vec![], layers, [2, 1, 1], (0, 0)).unwrap();
    let cfg = TrainConfig { lr0: 1e200, momentum: 0.0, ..blobs_cfg() };
    match train(&mut net, &data, &cfg) {
        Err(Error::Diverged { .. }) => {}
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn training_rejects_mismatched_data() {
    let data = separable();
    let mut net = two_layer(3, 4, 2);
    assert!(train(&mut net, &data, &blobs_cfg()).is_err());
}
