//! Labelled datasets and seeded Gaussian blobs.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, Result};
use crate::layers::ExampleShape;
use crate::rng::{stream, Domain};
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor4,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(inputs: Tensor4, labels: Vec<usize>, n_classes: usize, split: Split) -> Result<Self> {
        if inputs.batch() == 0 {
            return Err(config("dataset is empty"));
        }
        if labels.len() != inputs.batch() {
            return Err(config(alloc::format!(
                "{} labels for {} examples",
                labels.len(),
                inputs.batch()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(config(alloc::format!("label {bad} outside {n_classes} classes")));
        }
        Ok(Self {
            inputs,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_shape(&self) -> ExampleShape {
        let [_, c, h, w] = self.inputs.shape();
        [c, h, w]
    }

    /// Example `i` as a batch of one.
    pub fn example(&self, i: usize) -> Tensor4 {
        let [_, c, h, w] = self.inputs.shape();
        Tensor4::from_vec([1, c, h, w], self.inputs.example(i).to_vec()).expect("stored examples are finite")
    }

    /// Gathers the given examples into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<(Tensor4, Vec<usize>)> {
        let rows: Vec<&[f64]> = indices.iter().map(|&i| self.inputs.example(i)).collect();
        let x = Tensor4::stack(self.example_shape(), &rows)?;
        Ok((x, indices.iter().map(|&i| self.labels[i]).collect()))
    }

    /// First `n` examples.
    pub fn take(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        let (x, y) = self.gather(&idx)?;
        Self::new(x, y, self.n_classes, self.split)
    }
}

/// Gaussian clusters in `[0, 1]^d`. Class centres are uniform in
/// `[margin, 1 - margin]` and shared by every split; points are centre plus
/// `spread · N(0, I)`, clamped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blobs {
    pub n_classes: usize,
    pub shape: ExampleShape,
    pub spread: f64,
    pub seed: u64,
}

impl Blobs {
    const MARGIN: f64 = 0.2;

    pub fn centres(&self) -> Vec<f64> {
        let dim: usize = self.shape.iter().product();
        let mut rng = stream(self.seed, Domain::Data, 0);
        (0..self.n_classes * dim)
            .map(|_| rng.random_range(Self::MARGIN..1.0 - Self::MARGIN))
            .collect()
    }

    /// `n_per_class` points per class, classes interleaved.
    pub fn sample(&self, n_per_class: usize, split: Split) -> Result<Dataset> {
        if self.n_classes == 0 || n_per_class == 0 || self.shape.contains(&0) {
            return Err(config("blobs need positive class count, size and shape"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(config("blob spread must be finite and non-negative"));
        }
        let dim: usize = self.shape.iter().product();
        let centres = self.centres();
        let index = match split {
            Split::Train => 1,
            Split::Test => 2,
        };
        let mut rng = stream(self.seed, Domain::Data, index);
        let total = self.n_classes * n_per_class;
        let mut data = Vec::with_capacity(total * dim);
        let mut labels = Vec::with_capacity(total);
        for _ in 0..n_per_class {
            for class in 0..self.n_classes {
                let centre = &centres[class * dim..(class + 1) * dim];
                for &c in centre {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    data.push((c + self.spread * e).clamp(0.0, 1.0));
                }
                labels.push(class);
            }
        }
        let [c, h, w] = self.shape;
        Dataset::new(Tensor4::from_vec([total, c, h, w], data)?, labels, self.n_classes, split)
    }
}

pub fn make_blobs(
    n_classes: usize,
    n_per_class: usize,
    shape: ExampleShape,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    Blobs {
        n_classes,
        shape,
        spread,
        seed,
    }
    .sample(n_per_class, Split::Train)
}
