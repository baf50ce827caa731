//! Circular convolutions evaluated as per-frequency matrix products.
//!
//! A convolution with full-size `h × w` kernels acts on the 2-D spectrum one
//! frequency at a time: `FFT(y)[:, k] = M_k · FFT(x)[:, k]`. [`OrthoConv`]
//! uses the Cayley transform of the skew-Hermitian part of the weight
//! spectrum for `M_k`, which makes every `M_k` unitary and the layer an
//! isometry. [`CircularConv`] uses the raw weight spectrum.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{complex_zeros, Fft2, Scratch};
use crate::linalg::{complex_solve, CMatrix};
use crate::tensor::{CTensor4, Tensor4};

/// Imaginary parts left after the inverse transform must stay below this,
/// relative to `max(1, max |re|)`, before they are dropped.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// Per-frequency matrices stored frequency-major: `mats[k][o][i]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct SpectralOp {
    pub c_out: usize,
    pub c_in: usize,
    pub freqs: usize,
    pub mats: Vec<Complex64>,
}

impl SpectralOp {
    /// Reorders a `[c_out, c_in, h, w]` spectrum into frequency-major form.
    fn from_spectrum(spec: &CTensor4) -> Self {
        let [c_out, c_in, h, w] = spec.shape();
        let freqs = h * w;
        let mut mats = complex_zeros(freqs * c_out * c_in);
        for o in 0..c_out {
            for i in 0..c_in {
                let plane = &spec.data()[(o * c_in + i) * freqs..(o * c_in + i + 1) * freqs];
                for (k, &z) in plane.iter().enumerate() {
                    mats[(k * c_out + o) * c_in + i] = z;
                }
            }
        }
        Self {
            c_out,
            c_in,
            freqs,
            mats,
        }
    }

    fn to_spectrum(&self, h: usize, w: usize) -> CTensor4 {
        let mut data = complex_zeros(self.mats.len());
        for k in 0..self.freqs {
            for o in 0..self.c_out {
                for i in 0..self.c_in {
                    data[(o * self.c_in + i) * self.freqs + k] = self.mats[(k * self.c_out + o) * self.c_in + i];
                }
            }
        }
        CTensor4::from_vec_unchecked([self.c_out, self.c_in, h, w], data)
    }

    fn matrix(&self, k: usize) -> CMatrix {
        let m = self.c_out * self.c_in;
        CMatrix::from_vec(self.c_out, self.c_in, self.mats[k * m..(k + 1) * m].to_vec())
            .expect("frequency block has c_out * c_in entries")
    }

    /// Applies the convolution to a batch. When `keep_spectrum` is set the
    /// input spectra are returned for the weight gradient.
    pub fn apply(
        &self,
        plan: &Fft2,
        x: &Tensor4,
        keep_spectrum: bool,
    ) -> Result<(Tensor4, Option<Vec<Complex64>>)> {
        let [b, c, h, w] = x.shape();
        if c != self.c_in || h * w != self.freqs || h != plan.height() || w != plan.width() {
            return Err(Error::ShapeMismatch {
                expected: [b, self.c_in, plan.height(), plan.width()],
                got: x.shape(),
            });
        }
        let n = self.freqs;
        let mut out = Tensor4::zeros([b, self.c_out, h, w]);
        let mut kept = if keep_spectrum {
            Some(Vec::with_capacity(b * c * n))
        } else {
            None
        };
        let mut scratch = Scratch::default();
        let mut xs = complex_zeros(c * n);
        let mut zs = complex_zeros(self.c_out * n);
        for bi in 0..b {
            for (dst, &v) in xs.iter_mut().zip(x.example(bi)) {
                *dst = Complex64::new(v, 0.0);
            }
            plan.forward_planes(&mut xs, &mut scratch);
            self.multiply(&xs, &mut zs, false);
            plan.inverse_planes(&mut zs, &mut scratch);
            write_real(&zs, out.example_mut(bi))?;
            if let Some(k) = kept.as_mut() {
                k.extend_from_slice(&xs);
            }
        }
        Ok((out, kept))
    }

    /// `zs[:, k] = M_k · xs[:, k]`, or `M_kᴴ · xs[:, k]` when `adjoint`.
    fn multiply(&self, xs: &[Complex64], zs: &mut [Complex64], adjoint: bool) {
        let n = self.freqs;
        let (rows, cols) = if adjoint {
            (self.c_in, self.c_out)
        } else {
            (self.c_out, self.c_in)
        };
        let block = self.c_out * self.c_in;
        for k in 0..n {
            let m = &self.mats[k * block..(k + 1) * block];
            for r in 0..rows {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..cols {
                    let entry = if adjoint {
                        m[c * self.c_in + r].conj()
                    } else {
                        m[r * self.c_in + c]
                    };
                    acc += entry * xs[c * n + k];
                }
                zs[r * n + k] = acc;
            }
        }
    }

    /// Reverse pass. Returns the input gradient and `Σ_b F_b,k X̃_b,kᴴ / N`,
    /// the gradient with respect to each frequency matrix, where `F_b` is the
    /// spectrum of the upstream gradient.
    pub fn adjoint(
        &self,
        plan: &Fft2,
        g: &Tensor4,
        input_spectra: &[Complex64],
    ) -> Result<(Tensor4, Vec<Complex64>)> {
        let [b, c, h, w] = g.shape();
        if c != self.c_out || h * w != self.freqs {
            return Err(Error::ShapeMismatch {
                expected: [b, self.c_out, plan.height(), plan.width()],
                got: g.shape(),
            });
        }
        let n = self.freqs;
        let mut gx = Tensor4::zeros([b, self.c_in, h, w]);
        let mut gm = complex_zeros(self.mats.len());
        let mut scratch = Scratch::default();
        let mut fs = complex_zeros(self.c_out * n);
        let mut ys = complex_zeros(self.c_in * n);
        let inv_n = 1.0 / n as f64;
        for bi in 0..b {
            for (dst, &v) in fs.iter_mut().zip(g.example(bi)) {
                *dst = Complex64::new(v, 0.0);
            }
            plan.forward_planes(&mut fs, &mut scratch);
            let xs = &input_spectra[bi * self.c_in * n..(bi + 1) * self.c_in * n];
            for k in 0..n {
                for o in 0..self.c_out {
                    let f = fs[o * n + k] * inv_n;
                    let row = &mut gm[(k * self.c_out + o) * self.c_in..(k * self.c_out + o + 1) * self.c_in];
                    for (i, slot) in row.iter_mut().enumerate() {
                        *slot += f * xs[i * n + k].conj();
                    }
                }
            }
            self.multiply(&fs, &mut ys, true);
            plan.inverse_planes(&mut ys, &mut scratch);
            for (dst, z) in gx.example_mut(bi).iter_mut().zip(&ys) {
                *dst = z.re;
            }
        }
        Ok((gx, gm))
    }
}

fn write_real(zs: &[Complex64], out: &mut [f64]) -> Result<()> {
    let mut scale: f64 = 1.0;
    let mut imag: f64 = 0.0;
    for z in zs {
        scale = scale.max(z.re.abs());
        imag = imag.max(z.im.abs());
    }
    if imag > IMAG_TOLERANCE * scale {
        return Err(Error::ImaginaryResidue(imag));
    }
    for (dst, z) in out.iter_mut().zip(zs) {
        *dst = z.re;
    }
    Ok(())
}

/// Maps a per-frequency matrix gradient back to real spatial kernels:
/// the adjoint of `W ↦ fft2(W)` is `G ↦ Re(N · ifft2(G))`.
fn spectral_grad_to_kernel(gm: &SpectralOp, plan: &Fft2) -> Vec<f64> {
    let h = plan.height();
    let w = plan.width();
    let spec = gm.to_spectrum(h, w);
    let mut data = spec.into_vec();
    plan.inverse_planes(&mut data, &mut Scratch::default());
    let n = (h * w) as f64;
    data.iter().map(|z| z.re * n).collect()
}

fn weight_spectrum(weights: &Tensor4) -> Result<CTensor4> {
    crate::fft::fft2(weights)
}

/// Cayley data for one layer: `Q_k` and `(I + A_k)⁻¹` per frequency.
#[derive(Debug, Clone, PartialEq)]
struct CayleyCache {
    q: SpectralOp,
    inv: SpectralOp,
}

impl CayleyCache {
    fn build(raw: &Tensor4) -> Result<Self> {
        let [c_out, c_in, _, _] = raw.shape();
        if c_out != c_in {
            return Err(Error::ShapeMismatch {
                expected: [c_in, c_in, raw.shape()[2], raw.shape()[3]],
                got: raw.shape(),
            });
        }
        let c = c_in;
        let wt = SpectralOp::from_spectrum(&weight_spectrum(raw)?);
        let eye = CMatrix::identity(c);
        let mut q = complex_zeros(wt.mats.len());
        let mut inv = complex_zeros(wt.mats.len());
        for k in 0..wt.freqs {
            let wk = wt.matrix(k);
            let a = wk.sub(&wk.conj_transpose());
            let b = complex_solve(&eye.add(&a), &eye)?;
            let qk = b.sub(&a.matmul(&b)?);
            q[k * c * c..(k + 1) * c * c].copy_from_slice(qk.data());
            inv[k * c * c..(k + 1) * c * c].copy_from_slice(b.data());
        }
        let op = |mats| SpectralOp {
            c_out: c,
            c_in: c,
            freqs: wt.freqs,
            mats,
        };
        Ok(Self {
            q: op(q),
            inv: op(inv),
        })
    }

    /// Pulls a gradient on `Q` back to the weight spectrum. With
    /// `dQ = -(I + Q) dA (I + A)⁻¹` the adjoint is
    /// `gA = -(I + Q)ᴴ gQ (I + A)⁻ᴴ`, and `A = W̃ - W̃ᴴ` gives `gW̃ = gA - gAᴴ`.
    fn pull_back(&self, gq: &[Complex64]) -> Result<SpectralOp> {
        let c = self.q.c_in;
        let eye = CMatrix::identity(c);
        let mut out = complex_zeros(gq.len());
        for k in 0..self.q.freqs {
            let gqk = CMatrix::from_vec(c, c, gq[k * c * c..(k + 1) * c * c].to_vec())?;
            let ipq = eye.add(&self.q.matrix(k));
            let ga = ipq
                .conj_transpose()
                .matmul(&gqk)?
                .matmul(&self.inv.matrix(k).conj_transpose())?
                .scale(Complex64::new(-1.0, 0.0));
            let gw = ga.sub(&ga.conj_transpose());
            out[k * c * c..(k + 1) * c * c].copy_from_slice(gw.data());
        }
        Ok(SpectralOp {
            c_out: c,
            c_in: c,
            freqs: self.q.freqs,
            mats: out,
        })
    }
}

/// Cayley-orthogonalized spectral weights of a square `[c, c, h, w]` kernel:
/// `Q_k = (I + A_k)⁻¹ - A_k (I + A_k)⁻¹` with `A_k = W̃_k - W̃_kᴴ`.
pub fn cayley_orthogonalize(raw_weights: &Tensor4) -> Result<CTensor4> {
    let [_, _, h, w] = raw_weights.shape();
    if raw_weights.is_empty() {
        return Err(Error::Empty);
    }
    Ok(CayleyCache::build(raw_weights)?.q.to_spectrum(h, w))
}

/// `max_k ‖Q_kᴴ Q_k - I‖_F` over a `[c, c, h, w]` spectrum.
pub fn max_unitarity_defect(q: &CTensor4) -> f64 {
    let op = SpectralOp::from_spectrum(q);
    let eye = CMatrix::identity(op.c_in);
    (0..op.freqs)
        .map(|k| {
            let m = op.matrix(k);
            m.conj_transpose()
                .matmul(&m)
                .map(|p| p.sub(&eye).frobenius_norm())
                .unwrap_or(f64::INFINITY)
        })
        .fold(0.0, f64::max)
}

/// Orthogonal circular convolution on `c` channels of `h × w` planes.
#[derive(Debug, Clone)]
pub struct OrthoConv {
    raw: Tensor4,
    plan: Fft2,
    cache: Option<CayleyCache>,
}

impl PartialEq for OrthoConv {
    fn eq(&self, other: &Self) -> bool {
        self.raw == other.raw
    }
}

impl OrthoConv {
    /// Wraps raw weights of shape `[c, c, h, w]` and orthogonalizes them.
    pub fn new(raw_weights: Tensor4) -> Result<Self> {
        let [c_out, c_in, h, w] = raw_weights.shape();
        if c_out != c_in {
            return Err(Error::ShapeMismatch {
                expected: [c_in, c_in, h, w],
                got: raw_weights.shape(),
            });
        }
        if raw_weights.is_empty() {
            return Err(Error::Empty);
        }
        let mut layer = Self {
            plan: Fft2::new(h, w),
            raw: raw_weights,
            cache: None,
        };
        layer.prepare()?;
        Ok(layer)
    }

    /// Zero weights: every `Q_k` is the identity.
    pub fn identity(channels: usize, height: usize, width: usize) -> Self {
        Self::new(Tensor4::zeros([channels, channels, height, width])).expect("zero kernel is valid")
    }

    pub fn channels(&self) -> usize {
        self.raw.shape()[0]
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.raw.shape()[2], self.raw.shape()[3])
    }

    pub fn raw_weights(&self) -> &Tensor4 {
        &self.raw
    }

    /// Mutable access to the raw weights. Drops the spectral cache;
    /// call [`OrthoConv::prepare`] before the next batch of forwards.
    pub fn raw_weights_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        self.raw.data_mut()
    }

    pub fn is_prepared(&self) -> bool {
        self.cache.is_some()
    }

    /// Recomputes the cached orthogonal spectrum if it was invalidated.
    pub fn prepare(&mut self) -> Result<()> {
        if self.cache.is_none() {
            self.cache = Some(CayleyCache::build(&self.raw)?);
        }
        Ok(())
    }

    /// The cached `Q̃` as a `[c, c, h, w]` spectrum.
    pub fn spectral_q(&self) -> Result<CTensor4> {
        let (h, w) = self.spatial();
        Ok(self.cache_or_build()?.q.to_spectrum(h, w))
    }

    fn cache_or_build(&self) -> Result<alloc::borrow::Cow<'_, CayleyCache>> {
        match &self.cache {
            Some(c) => Ok(alloc::borrow::Cow::Borrowed(c)),
            None => Ok(alloc::borrow::Cow::Owned(CayleyCache::build(&self.raw)?)),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.cache_or_build()?.q.apply(&self.plan, x, false)?.0)
    }

    pub(crate) fn forward_keep(&self, x: &Tensor4) -> Result<(Tensor4, Vec<Complex64>)> {
        let (y, spec) = self.cache_or_build()?.q.apply(&self.plan, x, true)?;
        Ok((y, spec.unwrap_or_default()))
    }

    /// Returns the input gradient and the raw-weight gradient.
    pub(crate) fn backward(&self, g: &Tensor4, input_spectra: &[Complex64]) -> Result<(Tensor4, Vec<f64>)> {
        let cache = self.cache_or_build()?;
        let (gx, gq) = cache.q.adjoint(&self.plan, g, input_spectra)?;
        let gw = cache.pull_back(&gq)?;
        Ok((gx, spectral_grad_to_kernel(&gw, &self.plan)))
    }
}

/// Unconstrained circular convolution, `[c_out, c_in, h, w]` kernels.
#[derive(Debug, Clone)]
pub struct CircularConv {
    weights: Tensor4,
    plan: Fft2,
    cache: Option<SpectralOp>,
}

impl PartialEq for CircularConv {
    fn eq(&self, other: &Self) -> bool {
        self.weights == other.weights
    }
}

impl CircularConv {
    pub fn new(weights: Tensor4) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty);
        }
        let [_, _, h, w] = weights.shape();
        let mut layer = Self {
            plan: Fft2::new(h, w),
            weights,
            cache: None,
        };
        layer.prepare()?;
        Ok(layer)
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.weights.shape()[2], self.weights.shape()[3])
    }

    pub fn weights(&self) -> &Tensor4 {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.cache = None;
        self.weights.data_mut()
    }

    pub fn prepare(&mut self) -> Result<()> {
        if self.cache.is_none() {
            self.cache = Some(SpectralOp::from_spectrum(&weight_spectrum(&self.weights)?));
        }
        Ok(())
    }

    fn op(&self) -> Result<alloc::borrow::Cow<'_, SpectralOp>> {
        match &self.cache {
            Some(c) => Ok(alloc::borrow::Cow::Borrowed(c)),
            None => Ok(alloc::borrow::Cow::Owned(SpectralOp::from_spectrum(&weight_spectrum(
                &self.weights,
            )?))),
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.op()?.apply(&self.plan, x, false)?.0)
    }

    pub(crate) fn forward_keep(&self, x: &Tensor4) -> Result<(Tensor4, Vec<Complex64>)> {
        let (y, spec) = self.op()?.apply(&self.plan, x, true)?;
        Ok((y, spec.unwrap_or_default()))
    }

    pub(crate) fn backward(&self, g: &Tensor4, input_spectra: &[Complex64]) -> Result<(Tensor4, Vec<f64>)> {
        let op = self.op()?;
        let (gx, gm) = op.adjoint(&self.plan, g, input_spectra)?;
        let gm = SpectralOp { mats: gm, ..(*op).clone() };
        Ok((gx, spectral_grad_to_kernel(&gm, &self.plan)))
    }
}
