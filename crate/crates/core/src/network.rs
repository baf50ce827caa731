//! Split networks `f = f_c ∘ f_e`.

use alloc::vec::Vec;

use crate::error::{config, Error, Result};
use crate::layers::{forward_seq, sequence_bound, sequence_shape, ExampleShape, Layer};
use crate::tensor::Tensor4;

/// Ordered layers with a split index: `layers[..split]` is the encoder,
/// `layers[split..]` the classifier. The classifier must end in a flat
/// `[classes, 1, 1]` score vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitNetwork {
    layers: Vec<Layer>,
    split: usize,
    input_shape: ExampleShape,
    latent_shape: ExampleShape,
    n_classes: usize,
    for_fraction: (usize, usize),
}

impl SplitNetwork {
    pub fn new(
        layers: Vec<Layer>,
        split: usize,
        input_shape: ExampleShape,
        for_fraction: (usize, usize),
    ) -> Result<Self> {
        if split > layers.len() {
            return Err(config(alloc::format!(
                "split index {split} exceeds layer count {}",
                layers.len()
            )));
        }
        if for_fraction.0 > for_fraction.1 {
            return Err(config(alloc::format!(
                "orthogonal block count {} exceeds total {}",
                for_fraction.0,
                for_fraction.1
            )));
        }
        let latent_shape = sequence_shape(&layers[..split], input_shape)?;
        let out = sequence_shape(&layers[split..], latent_shape)?;
        if out[1] != 1 || out[2] != 1 || out[0] == 0 {
            return Err(config("classifier must end in a flat score vector"));
        }
        Ok(Self {
            layers,
            split,
            input_shape,
            latent_shape,
            n_classes: out[0],
            for_fraction,
        })
    }

    pub fn from_parts(
        encoder: Vec<Layer>,
        classifier: Vec<Layer>,
        input_shape: ExampleShape,
        for_fraction: (usize, usize),
    ) -> Result<Self> {
        let split = encoder.len();
        let mut layers = encoder;
        layers.extend(classifier);
        Self::new(layers, split, input_shape, for_fraction)
    }

    pub fn into_parts(self) -> (Vec<Layer>, Vec<Layer>) {
        let mut encoder = self.layers;
        let classifier = encoder.split_off(self.split);
        (encoder, classifier)
    }

    /// Same layers, different split point.
    pub fn with_split_index(&self, split: usize) -> Result<Self> {
        Self::new(self.layers.clone(), split, self.input_shape, self.for_fraction)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn encoder(&self) -> &[Layer] {
        &self.layers[..self.split]
    }

    pub fn classifier(&self) -> &[Layer] {
        &self.layers[self.split..]
    }

    pub fn split_index(&self) -> usize {
        self.split
    }

    pub fn input_shape(&self) -> ExampleShape {
        self.input_shape
    }

    pub fn latent_shape(&self) -> ExampleShape {
        self.latent_shape
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_shape.iter().product()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn for_fraction(&self) -> (usize, usize) {
        self.for_fraction
    }

    /// Product of the encoder's per-layer bounds.
    pub fn encoder_lipschitz_bound(&self) -> Result<f64> {
        sequence_bound(self.encoder())
    }

    pub fn check_input(&self, x: &Tensor4) -> Result<()> {
        let [c, h, w] = self.input_shape;
        x.expect_shape([x.batch(), c, h, w])
    }

    pub fn encode(&self, x: &Tensor4) -> Result<Tensor4> {
        self.check_input(x)?;
        forward_seq(self.encoder(), x)
    }

    pub fn classify(&self, z: &Tensor4) -> Result<Tensor4> {
        let [c, h, w] = self.latent_shape;
        z.expect_shape([z.batch(), c, h, w])?;
        forward_seq(self.classifier(), z)
    }

    /// Returns the latent code and the class scores.
    pub fn forward(&self, x: &Tensor4) -> Result<(Tensor4, Tensor4)> {
        let z = self.encode(x)?;
        let scores = self.classify(&z)?;
        Ok((z, scores))
    }

    /// Plain argmax prediction per example, no noise.
    pub fn predict_clean(&self, x: &Tensor4) -> Result<Vec<usize>> {
        let (_, scores) = self.forward(x)?;
        Ok((0..scores.batch()).map(|b| argmax(scores.example(b))).collect())
    }

    pub fn prepare(&mut self) -> Result<()> {
        self.layers.iter_mut().try_for_each(Layer::prepare)
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit_params(&mut |p| n += p.len());
        n
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        self.layers.iter().for_each(|l| l.visit_params(f));
    }

    /// Mutable parameter visit; caches are rebuilt before returning.
    pub fn update_params(&mut self, f: &mut dyn FnMut(&mut [f64])) -> Result<()> {
        self.layers.iter_mut().for_each(|l| l.visit_params_mut(f));
        self.prepare()
    }

    /// Parameter blocks flattened in visit order.
    pub fn params(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        self.visit_params(&mut |p| out.push(p.to_vec()));
        out
    }

    pub fn set_params(&mut self, blocks: &[Vec<f64>]) -> Result<()> {
        let mut i = 0;
        let mut bad = None;
        self.layers.iter_mut().for_each(|l| {
            l.visit_params_mut(&mut |p| {
                match blocks.get(i) {
                    Some(src) if src.len() == p.len() => p.copy_from_slice(src),
                    _ => bad = Some(i),
                }
                i += 1;
            })
        });
        if let Some(block) = bad.or((i != blocks.len()).then_some(i)) {
            return Err(Error::Config(alloc::format!("parameter block {block} does not fit")));
        }
        self.prepare()
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
