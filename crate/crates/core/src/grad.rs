//! Reverse-mode gradients over a [`SplitNetwork`].

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::layers::{backward_seq, forward_tape_seq, jvp_seq, LayerTape};
use crate::network::{argmax, SplitNetwork};
use crate::tensor::Tensor4;

/// Where additive training noise enters the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseSite {
    Input,
    Latent,
}

/// Recorded forward pass. [`GradTape::backward`] consumes it.
#[derive(Debug)]
pub struct GradTape<'a> {
    net: &'a SplitNetwork,
    encoder: Vec<LayerTape>,
    classifier: Vec<LayerTape>,
    latent: Tensor4,
    scores: Tensor4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// One block per parameter block, in [`SplitNetwork::visit_params`] order.
    pub params: Vec<Vec<f64>>,
    pub input: Tensor4,
    pub latent: Tensor4,
}

impl Gradients {
    pub fn param_norm(&self) -> f64 {
        self.params.iter().flatten().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Runs the network recording intermediates. `noise`, if given, is added at
/// the named site and must match that site's batch shape.
pub fn record<'a>(
    net: &'a SplitNetwork,
    x: &Tensor4,
    noise: Option<(&Tensor4, NoiseSite)>,
) -> Result<GradTape<'a>> {
    net.check_input(x)?;
    let input = match noise {
        Some((xi, NoiseSite::Input)) => x.add(xi)?,
        _ => x.clone(),
    };
    let (mut latent, encoder) = forward_tape_seq(net.encoder(), &input)?;
    if let Some((xi, NoiseSite::Latent)) = noise {
        latent = latent.add(xi)?;
    }
    let (scores, classifier) = forward_tape_seq(net.classifier(), &latent)?;
    Ok(GradTape {
        net,
        encoder,
        classifier,
        latent,
        scores,
    })
}

impl GradTape<'_> {
    pub fn scores(&self) -> &Tensor4 {
        &self.scores
    }

    /// Latent code as seen by the classifier (noise included).
    pub fn latent(&self) -> &Tensor4 {
        &self.latent
    }

    /// Encoder Jacobian-vector product at the recorded input.
    pub fn encoder_jvp(&self, v: &Tensor4) -> Result<Tensor4> {
        jvp_seq(self.net.encoder(), &self.encoder, v)
    }

    /// Encoder vector-Jacobian product at the recorded input, without
    /// consuming the tape.
    pub fn encoder_vjp(&self, g: &Tensor4) -> Result<Tensor4> {
        Ok(backward_seq(self.net.encoder(), &self.encoder, g)?.0)
    }

    /// Propagates `g_scores` back through the whole network.
    pub fn backward(self, g_scores: &Tensor4) -> Result<Gradients> {
        if g_scores.shape() != self.scores.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.scores.shape(),
                got: g_scores.shape(),
            });
        }
        let (latent, mut params) = backward_seq(self.net.classifier(), &self.classifier, g_scores)?;
        let (input, enc_params) = backward_seq(self.net.encoder(), &self.encoder, &latent)?;
        let mut all = enc_params;
        all.append(&mut params);
        Ok(Gradients {
            params: all,
            input,
            latent,
        })
    }
}

/// Mean softmax cross-entropy. Returns `(loss, d loss / d scores, correct)`.
pub fn softmax_cross_entropy(scores: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4, usize)> {
    let b = scores.batch();
    let k = scores.example_len();
    if labels.len() != b || b == 0 {
        return Err(Error::Config(alloc::format!(
            "{} labels for a batch of {b}",
            labels.len()
        )));
    }
    let mut grad = Tensor4::zeros(scores.shape());
    let mut loss = 0.0;
    let mut correct = 0;
    for (i, &label) in labels.iter().enumerate() {
        if label >= k {
            return Err(Error::Config(alloc::format!("label {label} out of range for {k} classes")));
        }
        let s = scores.example(i);
        let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = s.iter().map(|v| libm::exp(v - m)).sum();
        let lz = libm::log(z) + m;
        loss += lz - s[label];
        if argmax(s) == label {
            correct += 1;
        }
        let g = grad.example_mut(i);
        for (j, v) in s.iter().enumerate() {
            g[j] = libm::exp(v - lz) / b as f64;
        }
        g[label] -= 1.0 / b as f64;
    }
    Ok((loss / b as f64, grad, correct))
}

/// Loss, correct count and gradients for one batch.
pub fn loss_and_grad(
    net: &SplitNetwork,
    x: &Tensor4,
    labels: &[usize],
    noise: Option<(&Tensor4, NoiseSite)>,
) -> Result<(f64, usize, Gradients)> {
    let tape = record(net, x, noise)?;
    let (loss, g, correct) = softmax_cross_entropy(tape.scores(), labels)?;
    Ok((loss, correct, tape.backward(&g)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_uniform_scores() {
        let s = Tensor4::zeros([2, 4, 1, 1]);
        let (loss, g, _) = softmax_cross_entropy(&s, &[0, 3]).unwrap();
        assert!((loss - libm::log(4.0)).abs() < 1e-15);
        assert!((g.data()[0] - (0.25 - 1.0) / 2.0).abs() < 1e-15);
        assert!((g.data()[1] - 0.125).abs() < 1e-15);
        let row_sum: f64 = g.example(1).iter().sum();
        assert!(row_sum.abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_is_stable_for_large_scores() {
        let s = Tensor4::from_vec([1, 2, 1, 1], alloc::vec![1000.0, 0.0]).unwrap();
        let (loss, g, correct) = softmax_cross_entropy(&s, &[0]).unwrap();
        assert!(loss.abs() < 1e-300 + 1e-12);
        assert!(g.is_finite());
        assert_eq!(correct, 1);
        assert!(softmax_cross_entropy(&s, &[2]).is_err());
        assert!(softmax_cross_entropy(&s, &[0, 1]).is_err());
    }
}
