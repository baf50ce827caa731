//! 2-D discrete Fourier transforms over the last two tensor axes.
//!
//! The forward transform is unnormalized and the inverse carries the `1/(h·w)`
//! factor, so `ifft2(fft2(x)) == x` and `‖fft2(x)‖_F = sqrt(h·w)·‖x‖_F`.
//! Power-of-two lengths use an iterative radix-2 Cooley–Tukey kernel; other
//! lengths fall back to a direct O(n²) DFT.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tensor::{CTensor4, Tensor4};

#[derive(Debug, Clone)]
enum Kernel {
    Radix2 { twiddles: Vec<Complex64>, rev: Vec<usize> },
    Direct { roots: Vec<Complex64> },
}

/// Precomputed 1-D transform of a fixed length.
#[derive(Debug, Clone)]
pub struct Fft {
    len: usize,
    kernel: Kernel,
}

impl Fft {
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "transform length must be positive");
        let kernel = if len.is_power_of_two() {
            let bits = len.trailing_zeros();
            let rev = (0..len)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect();
            let twiddles = (0..len / 2).map(|k| root(k, len)).collect();
            Kernel::Radix2 { twiddles, rev }
        } else {
            Kernel::Direct {
                roots: (0..len).map(|k| root(k, len)).collect(),
            }
        };
        Self { len, kernel }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// In-place unnormalized transform. `inverse` flips the exponent sign
    /// only; scaling is left to the caller.
    pub fn process(&self, buf: &mut [Complex64], inverse: bool, scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.len);
        match &self.kernel {
            Kernel::Radix2 { twiddles, rev } => {
                for (i, &j) in rev.iter().enumerate() {
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let mut half = 1;
                while half < self.len {
                    let stride = self.len / (2 * half);
                    for start in (0..self.len).step_by(2 * half) {
                        for k in 0..half {
                            let mut w = twiddles[k * stride];
                            if inverse {
                                w = w.conj();
                            }
                            let a = buf[start + k];
                            let b = buf[start + k + half] * w;
                            buf[start + k] = a + b;
                            buf[start + k + half] = a - b;
                        }
                    }
                    half *= 2;
                }
            }
            Kernel::Direct { roots } => {
                scratch.clear();
                scratch.extend_from_slice(buf);
                for (k, out) in buf.iter_mut().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (j, &x) in scratch.iter().enumerate() {
                        let mut w = roots[(j * k) % self.len];
                        if inverse {
                            w = w.conj();
                        }
                        acc += x * w;
                    }
                    *out = acc;
                }
            }
        }
    }
}

fn root(k: usize, n: usize) -> Complex64 {
    let theta = -2.0 * PI * k as f64 / n as f64;
    Complex64::new(libm::cos(theta), libm::sin(theta))
}

/// Transform plan for `h × w` planes.
#[derive(Debug, Clone)]
pub struct Fft2 {
    rows: Fft,
    cols: Fft,
}

impl Fft2 {
    pub fn new(height: usize, width: usize) -> Self {
        Self {
            rows: Fft::new(width),
            cols: Fft::new(height),
        }
    }

    pub fn height(&self) -> usize {
        self.cols.len()
    }

    pub fn width(&self) -> usize {
        self.rows.len()
    }

    pub fn plane_len(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Unnormalized forward transform of one row-major plane.
    pub fn forward_plane(&self, plane: &mut [Complex64], scratch: &mut Scratch) {
        self.plane(plane, false, scratch);
    }

    /// Normalized inverse transform of one row-major plane.
    pub fn inverse_plane(&self, plane: &mut [Complex64], scratch: &mut Scratch) {
        self.plane(plane, true, scratch);
        let k = 1.0 / self.plane_len() as f64;
        for z in plane.iter_mut() {
            *z *= k;
        }
    }

    fn plane(&self, plane: &mut [Complex64], inverse: bool, scratch: &mut Scratch) {
        let (h, w) = (self.height(), self.width());
        for row in plane.chunks_exact_mut(w) {
            self.rows.process(row, inverse, &mut scratch.direct);
        }
        if h == 1 {
            return;
        }
        scratch.column.resize(h, Complex64::new(0.0, 0.0));
        for c in 0..w {
            for r in 0..h {
                scratch.column[r] = plane[r * w + c];
            }
            self.cols.process(&mut scratch.column, inverse, &mut scratch.direct);
            for r in 0..h {
                plane[r * w + c] = scratch.column[r];
            }
        }
    }

    /// Applies the forward transform to every plane of a flat buffer.
    pub fn forward_planes(&self, data: &mut [Complex64], scratch: &mut Scratch) {
        for plane in data.chunks_exact_mut(self.plane_len()) {
            self.forward_plane(plane, scratch);
        }
    }

    pub fn inverse_planes(&self, data: &mut [Complex64], scratch: &mut Scratch) {
        for plane in data.chunks_exact_mut(self.plane_len()) {
            self.inverse_plane(plane, scratch);
        }
    }
}

/// Reusable work buffers for [`Fft2`].
#[derive(Debug, Default, Clone)]
pub struct Scratch {
    column: Vec<Complex64>,
    direct: Vec<Complex64>,
}

fn plan_for(shape: [usize; 4]) -> Result<Fft2> {
    if shape.contains(&0) {
        return Err(Error::Empty);
    }
    Ok(Fft2::new(shape[2], shape[3]))
}

/// Forward transform of a real tensor along its last two axes.
pub fn fft2(x: &Tensor4) -> Result<CTensor4> {
    fft2_complex(&x.to_complex())
}

pub fn fft2_complex(x: &CTensor4) -> Result<CTensor4> {
    let plan = plan_for(x.shape())?;
    let mut out = x.clone();
    plan.forward_planes(out.data_mut(), &mut Scratch::default());
    Ok(out)
}

/// Inverse transform, normalized so that it undoes [`fft2`].
pub fn ifft2(x: &CTensor4) -> Result<CTensor4> {
    let plan = plan_for(x.shape())?;
    let mut out = x.clone();
    plan.inverse_planes(out.data_mut(), &mut Scratch::default());
    Ok(out)
}

/// Zero-filled complex buffer helper for callers building spectra by hand.
pub(crate) fn complex_zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}
