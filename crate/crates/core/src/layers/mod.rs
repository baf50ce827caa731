//! Layer set for split networks.
//!
//! Encoder layers declare a Lipschitz bound (`Some(L)`); classifier layers may
//! leave it undeclared. Every layer implements a plain forward, a recording
//! forward (for gradients), the matching reverse pass, and a tangent
//! (Jacobian-vector) pass linearized at the recorded point.

pub mod conv;
pub mod dense;
pub mod groupsort;
pub mod residual;

use alloc::vec::Vec;

use num_complex::Complex64;

pub use conv::{cayley_orthogonalize, max_unitarity_defect, CircularConv, OrthoConv};
pub use dense::Dense;
pub use groupsort::GroupSort;
pub use residual::{sigmoid, ResidualBlock, SkipBlock};

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Per-example activation shape `[channels, height, width]`.
pub type ExampleShape = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Appends zero channels, `from → to`. Norm-preserving.
    ChannelLift { from: usize, to: usize },
    OrthoConv(OrthoConv),
    /// Orthogonal map on the flattened example, stored as a `1 × 1` spatial
    /// orthogonal convolution whose channel count is the feature count.
    OrthoDense(OrthoConv),
    GroupSort(GroupSort),
    Residual(ResidualBlock),
    Skip(SkipBlock),
    Conv(CircularConv),
    Relu,
    Dense(Dense),
    Scale(f64),
    Divide(f64),
}

/// Forward intermediates of one layer, enough for its reverse and tangent
/// passes.
#[derive(Debug, Clone)]
pub enum LayerTape {
    None,
    Spectra(Vec<Complex64>),
    Input(Tensor4),
    Perm(Vec<u32>),
    Mask(Vec<bool>),
    Residual {
        input: Tensor4,
        main_out: Tensor4,
        main: Vec<LayerTape>,
    },
    Skip(Vec<LayerTape>),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::ChannelLift { .. } => "channel_lift",
            Layer::OrthoConv(_) => "ortho_conv",
            Layer::OrthoDense(_) => "ortho_dense",
            Layer::GroupSort(_) => "group_sort",
            Layer::Residual(_) => "residual",
            Layer::Skip(_) => "skip",
            Layer::Conv(_) => "conv",
            Layer::Relu => "relu",
            Layer::Dense(_) => "dense",
            Layer::Scale(_) => "scale",
            Layer::Divide(_) => "divide",
        }
    }

    /// Declared Lipschitz bound, if any.
    pub fn lipschitz_bound(&self) -> Option<f64> {
        match self {
            Layer::ChannelLift { .. }
            | Layer::OrthoConv(_)
            | Layer::OrthoDense(_)
            | Layer::GroupSort(_)
            | Layer::Relu => Some(1.0),
            Layer::Residual(r) => r.lipschitz_bound(),
            Layer::Scale(c) => Some(c.abs()),
            Layer::Divide(c) => Some(1.0 / c.abs()),
            Layer::Skip(_) | Layer::Conv(_) | Layer::Dense(_) => None,
        }
    }

    pub fn output_shape(&self, input: ExampleShape) -> Result<ExampleShape> {
        let [c, h, w] = input;
        let mismatch = |expected: ExampleShape| Error::ShapeMismatch {
            expected: [1, expected[0], expected[1], expected[2]],
            got: [1, c, h, w],
        };
        match self {
            Layer::ChannelLift { from, to } => {
                if c != *from {
                    return Err(mismatch([*from, h, w]));
                }
                Ok([*to, h, w])
            }
            Layer::OrthoConv(l) => {
                let (lh, lw) = l.spatial();
                if [c, h, w] != [l.channels(), lh, lw] {
                    return Err(mismatch([l.channels(), lh, lw]));
                }
                Ok(input)
            }
            Layer::OrthoDense(l) => {
                if c * h * w != l.channels() {
                    return Err(mismatch([l.channels(), 1, 1]));
                }
                Ok(input)
            }
            Layer::GroupSort(g) => {
                g.check(c * h * w)?;
                Ok(input)
            }
            Layer::Residual(r) => same_shape_branch(&r.main, input),
            Layer::Skip(s) => same_shape_branch(&s.main, input),
            Layer::Conv(l) => {
                let (lh, lw) = l.spatial();
                if [c, h, w] != [l.in_channels(), lh, lw] {
                    return Err(mismatch([l.in_channels(), lh, lw]));
                }
                Ok([l.out_channels(), h, w])
            }
            Layer::Dense(d) => {
                if c * h * w != d.inputs() {
                    return Err(mismatch([d.inputs(), 1, 1]));
                }
                Ok([d.outputs(), 1, 1])
            }
            Layer::Relu | Layer::Scale(_) | Layer::Divide(_) => Ok(input),
        }
    }

    /// Rebuilds any spectral caches invalidated by a weight update.
    pub fn prepare(&mut self) -> Result<()> {
        match self {
            Layer::OrthoConv(l) | Layer::OrthoDense(l) => l.prepare(),
            Layer::Conv(l) => l.prepare(),
            Layer::Residual(r) => r.main.iter_mut().try_for_each(Layer::prepare),
            Layer::Skip(s) => s.main.iter_mut().try_for_each(Layer::prepare),
            _ => Ok(()),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        match self {
            Layer::ChannelLift { from, to } => lift(x, *from, *to),
            Layer::OrthoConv(l) => l.forward(x),
            Layer::OrthoDense(l) => as_features(x, l.channels(), |f| l.forward(f)),
            Layer::GroupSort(g) => g.forward(x),
            Layer::Residual(r) => {
                let m = forward_seq(&r.main, x)?;
                combine(r.alpha(), &m, x)
            }
            Layer::Skip(s) => forward_seq(&s.main, x)?.add(x),
            Layer::Conv(l) => l.forward(x),
            Layer::Relu => Ok(x.map(|v| v.max(0.0))),
            Layer::Dense(d) => d.forward(x),
            Layer::Scale(c) => Ok(x.scale(*c)),
            Layer::Divide(c) => Ok(x.map(|v| v / c)),
        }
    }

    pub fn forward_tape(&self, x: &Tensor4) -> Result<(Tensor4, LayerTape)> {
        Ok(match self {
            Layer::OrthoConv(l) => {
                let (y, s) = l.forward_keep(x)?;
                (y, LayerTape::Spectra(s))
            }
            Layer::OrthoDense(l) => {
                let mut spectra = Vec::new();
                let y = as_features(x, l.channels(), |f| {
                    let (y, s) = l.forward_keep(f)?;
                    spectra = s;
                    Ok(y)
                })?;
                (y, LayerTape::Spectra(spectra))
            }
            Layer::Conv(l) => {
                let (y, s) = l.forward_keep(x)?;
                (y, LayerTape::Spectra(s))
            }
            Layer::GroupSort(g) => {
                let (y, p) = g.forward_perm(x)?;
                (y, LayerTape::Perm(p))
            }
            Layer::Relu => (
                x.map(|v| v.max(0.0)),
                LayerTape::Mask(x.data().iter().map(|&v| v > 0.0).collect()),
            ),
            Layer::Dense(d) => (d.forward(x)?, LayerTape::Input(x.clone())),
            Layer::Residual(r) => {
                let (m, tapes) = forward_tape_seq(&r.main, x)?;
                let y = combine(r.alpha(), &m, x)?;
                (
                    y,
                    LayerTape::Residual {
                        input: x.clone(),
                        main_out: m,
                        main: tapes,
                    },
                )
            }
            Layer::Skip(s) => {
                let (m, tapes) = forward_tape_seq(&s.main, x)?;
                (m.add(x)?, LayerTape::Skip(tapes))
            }
            Layer::ChannelLift { .. } | Layer::Scale(_) | Layer::Divide(_) => {
                (self.forward(x)?, LayerTape::None)
            }
        })
    }

    /// Reverse pass. Returns the input gradient and this layer's parameter
    /// gradients in [`Layer::visit_params`] order.
    pub fn backward(&self, tape: &LayerTape, g: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
        let bad = || Error::Tape(alloc::format!("unexpected record for {}", self.kind()));
        Ok(match (self, tape) {
            (Layer::ChannelLift { from, to }, LayerTape::None) => (unlift(g, *to, *from)?, Vec::new()),
            (Layer::OrthoConv(l), LayerTape::Spectra(s)) => {
                let (gx, gw) = l.backward(g, s)?;
                (gx, alloc::vec![gw])
            }
            (Layer::OrthoDense(l), LayerTape::Spectra(s)) => {
                let mut gw = Vec::new();
                let gx = as_features(g, l.channels(), |f| {
                    let (gx, w) = l.backward(f, s)?;
                    gw = w;
                    Ok(gx)
                })?;
                (gx, alloc::vec![gw])
            }
            (Layer::Conv(l), LayerTape::Spectra(s)) => {
                let (gx, gw) = l.backward(g, s)?;
                (gx, alloc::vec![gw])
            }
            (Layer::GroupSort(_), LayerTape::Perm(p)) => (groupsort::unpermute(p, g), Vec::new()),
            (Layer::Relu, LayerTape::Mask(mask)) => {
                let mut gx = g.clone();
                for (v, &keep) in gx.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *v = 0.0;
                    }
                }
                (gx, Vec::new())
            }
            (Layer::Dense(d), LayerTape::Input(x)) => {
                let (gx, gw, gb) = d.backward(x, g)?;
                (gx, alloc::vec![gw, gb])
            }
            (Layer::Residual(r), LayerTape::Residual { input, main_out, main }) => {
                let alpha = r.alpha();
                let (gm, mut grads) = backward_seq(&r.main, main, &g.scale(alpha))?;
                let gx = gm.add(&g.scale(1.0 - alpha))?;
                let diff = main_out.sub(input)?;
                let g_alpha = crate::tensor::dot(g.data(), diff.data());
                grads.insert(0, alloc::vec![g_alpha * alpha * (1.0 - alpha)]);
                (gx, grads)
            }
            (Layer::Skip(s), LayerTape::Skip(tapes)) => {
                let (gm, grads) = backward_seq(&s.main, tapes, g)?;
                (gm.add(g)?, grads)
            }
            (Layer::Scale(c), LayerTape::None) => (g.scale(*c), Vec::new()),
            (Layer::Divide(c), LayerTape::None) => (g.map(|v| v / c), Vec::new()),
            _ => return Err(bad()),
        })
    }

    /// Jacobian-vector product at the recorded point.
    pub fn jvp(&self, tape: &LayerTape, v: &Tensor4) -> Result<Tensor4> {
        let bad = || Error::Tape(alloc::format!("unexpected record for {}", self.kind()));
        match (self, tape) {
            (Layer::ChannelLift { from, to }, _) => lift(v, *from, *to),
            (Layer::OrthoConv(_) | Layer::OrthoDense(_) | Layer::Conv(_), _) => self.forward(v),
            (Layer::GroupSort(_), LayerTape::Perm(p)) => Ok(groupsort::permute(p, v)),
            (Layer::Relu, LayerTape::Mask(mask)) => {
                let mut out = v.clone();
                for (x, &keep) in out.data_mut().iter_mut().zip(mask) {
                    if !keep {
                        *x = 0.0;
                    }
                }
                Ok(out)
            }
            (Layer::Dense(d), _) => d.jvp(v),
            (Layer::Residual(r), LayerTape::Residual { main, .. }) => {
                let m = jvp_seq(&r.main, main, v)?;
                combine(r.alpha(), &m, v)
            }
            (Layer::Skip(s), LayerTape::Skip(tapes)) => jvp_seq(&s.main, tapes, v)?.add(v),
            (Layer::Scale(_) | Layer::Divide(_), _) => self.forward(v),
            _ => Err(bad()),
        }
    }

    /// Visits parameter blocks in a fixed order.
    pub fn visit_params(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Layer::OrthoConv(l) | Layer::OrthoDense(l) => f(l.raw_weights().data()),
            Layer::Conv(l) => f(l.weights().data()),
            Layer::Dense(d) => {
                f(d.weights());
                f(d.bias());
            }
            Layer::Residual(r) => {
                f(core::slice::from_ref(&r.alpha_raw));
                r.main.iter().for_each(|l| l.visit_params(f));
            }
            Layer::Skip(s) => s.main.iter().for_each(|l| l.visit_params(f)),
            _ => {}
        }
    }

    /// Mutable visit in the same order. Spectral caches are invalidated;
    /// call [`Layer::prepare`] afterwards.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&mut [f64])) {
        match self {
            Layer::OrthoConv(l) | Layer::OrthoDense(l) => f(l.raw_weights_mut()),
            Layer::Conv(l) => f(l.weights_mut()),
            Layer::Dense(d) => {
                for block in d.params_mut() {
                    f(block);
                }
            }
            Layer::Residual(r) => {
                f(core::slice::from_mut(&mut r.alpha_raw));
                r.main.iter_mut().for_each(|l| l.visit_params_mut(f));
            }
            Layer::Skip(s) => s.main.iter_mut().for_each(|l| l.visit_params_mut(f)),
            _ => {}
        }
    }
}

fn same_shape_branch(main: &[Layer], input: ExampleShape) -> Result<ExampleShape> {
    let out = sequence_shape(main, input)?;
    if out != input {
        return Err(Error::ShapeMismatch {
            expected: [1, input[0], input[1], input[2]],
            got: [1, out[0], out[1], out[2]],
        });
    }
    Ok(out)
}

pub fn sequence_shape(layers: &[Layer], input: ExampleShape) -> Result<ExampleShape> {
    layers.iter().try_fold(input, |s, l| l.output_shape(s))
}

/// Product of declared bounds; the error names the first undeclared layer.
pub fn sequence_bound(layers: &[Layer]) -> Result<f64> {
    let mut bound = 1.0;
    for (index, layer) in layers.iter().enumerate() {
        match layer.lipschitz_bound() {
            Some(l) => bound *= l,
            None => {
                return Err(Error::NoLipschitzBound {
                    index,
                    kind: layer.kind(),
                })
            }
        }
    }
    Ok(bound)
}

pub fn forward_seq(layers: &[Layer], x: &Tensor4) -> Result<Tensor4> {
    let mut cur = x.clone();
    for l in layers {
        cur = l.forward(&cur)?;
    }
    Ok(cur)
}

pub fn forward_tape_seq(layers: &[Layer], x: &Tensor4) -> Result<(Tensor4, Vec<LayerTape>)> {
    let mut cur = x.clone();
    let mut tapes = Vec::with_capacity(layers.len());
    for l in layers {
        let (y, t) = l.forward_tape(&cur)?;
        tapes.push(t);
        cur = y;
    }
    Ok((cur, tapes))
}

pub fn backward_seq(layers: &[Layer], tapes: &[LayerTape], g: &Tensor4) -> Result<(Tensor4, Vec<Vec<f64>>)> {
    if layers.len() != tapes.len() {
        return Err(Error::Tape(alloc::format!(
            "{} records for {} layers",
            tapes.len(),
            layers.len()
        )));
    }
    let mut cur = g.clone();
    let mut per_layer = Vec::with_capacity(layers.len());
    for (l, t) in layers.iter().zip(tapes).rev() {
        let (gx, grads) = l.backward(t, &cur)?;
        per_layer.push(grads);
        cur = gx;
    }
    per_layer.reverse();
    Ok((cur, per_layer.into_iter().flatten().collect()))
}

pub fn jvp_seq(layers: &[Layer], tapes: &[LayerTape], v: &Tensor4) -> Result<Tensor4> {
    if layers.len() != tapes.len() {
        return Err(Error::Tape(alloc::format!(
            "{} records for {} layers",
            tapes.len(),
            layers.len()
        )));
    }
    let mut cur = v.clone();
    for (l, t) in layers.iter().zip(tapes) {
        cur = l.jvp(t, &cur)?;
    }
    Ok(cur)
}

fn combine(alpha: f64, main: &Tensor4, x: &Tensor4) -> Result<Tensor4> {
    main.zip_with(x, |m, v| alpha * m + (1.0 - alpha) * v)
}

fn lift(x: &Tensor4, from: usize, to: usize) -> Result<Tensor4> {
    let [b, c, h, w] = x.shape();
    if c != from || to < from {
        return Err(Error::ShapeMismatch {
            expected: [b, from, h, w],
            got: x.shape(),
        });
    }
    let mut out = Tensor4::zeros([b, to, h, w]);
    let m = from * h * w;
    for bi in 0..b {
        out.example_mut(bi)[..m].copy_from_slice(x.example(bi));
    }
    Ok(out)
}

fn unlift(g: &Tensor4, to: usize, from: usize) -> Result<Tensor4> {
    let [b, c, h, w] = g.shape();
    if c != to {
        return Err(Error::ShapeMismatch {
            expected: [b, to, h, w],
            got: g.shape(),
        });
    }
    let m = from * h * w;
    let mut out = Tensor4::zeros([b, from, h, w]);
    for bi in 0..b {
        out.example_mut(bi).copy_from_slice(&g.example(bi)[..m]);
    }
    Ok(out)
}

/// Runs `f` on the input viewed as `[batch, features, 1, 1]` and restores the
/// original shape.
fn as_features(
    x: &Tensor4,
    features: usize,
    mut f: impl FnMut(&Tensor4) -> Result<Tensor4>,
) -> Result<Tensor4> {
    let shape = x.shape();
    if x.example_len() != features {
        return Err(Error::ShapeMismatch {
            expected: [shape[0], features, 1, 1],
            got: shape,
        });
    }
    let flat = x.clone().reshape([shape[0], features, 1, 1])?;
    f(&flat)?.reshape(shape)
}
