use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor4;

/// Sorts each consecutive group of `group_size` features ascending.
///
/// Groups are taken over the flattened example (channel-major). The output
/// is a per-group permutation of the input, so norms are preserved exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupSort {
    group_size: usize,
}

impl Default for GroupSort {
    fn default() -> Self {
        Self { group_size: 2 }
    }
}

impl GroupSort {
    pub fn new(group_size: usize) -> Result<Self> {
        if group_size == 0 {
            return Err(Error::GroupSize {
                features: 0,
                group: 0,
            });
        }
        Ok(Self { group_size })
    }

    pub fn group_size(&self) -> usize {
        self.group_size
    }

    pub fn check(&self, features: usize) -> Result<()> {
        if !features.is_multiple_of(self.group_size) {
            return Err(Error::GroupSize {
                features,
                group: self.group_size,
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        Ok(self.forward_perm(x)?.0)
    }

    /// Sorted output plus the source index of every output slot (within its
    /// example). Ties keep their original order.
    pub(crate) fn forward_perm(&self, x: &Tensor4) -> Result<(Tensor4, Vec<u32>)> {
        let m = x.example_len();
        self.check(m)?;
        let mut out = Tensor4::zeros(x.shape());
        let mut perm = Vec::with_capacity(x.len());
        let mut idx: Vec<u32> = Vec::with_capacity(self.group_size);
        for b in 0..x.batch() {
            let xe = x.example(b);
            let oe = out.example_mut(b);
            for start in (0..m).step_by(self.group_size) {
                idx.clear();
                idx.extend(start as u32..(start + self.group_size) as u32);
                idx.sort_by(|&i, &j| xe[i as usize].total_cmp(&xe[j as usize]));
                for (slot, &src) in idx.iter().enumerate() {
                    oe[start + slot] = xe[src as usize];
                }
                perm.extend_from_slice(&idx);
            }
        }
        Ok((out, perm))
    }
}

/// `y[j] = v[perm[j]]` per example.
pub(crate) fn permute(perm: &[u32], v: &Tensor4) -> Tensor4 {
    let m = v.example_len();
    let mut out = Tensor4::zeros(v.shape());
    for b in 0..v.batch() {
        let p = &perm[b * m..(b + 1) * m];
        let ve = v.example(b);
        for (dst, &src) in out.example_mut(b).iter_mut().zip(p) {
            *dst = ve[src as usize];
        }
    }
    out
}

/// Adjoint of [`permute`]: scatters `g[j]` back to `perm[j]`.
pub(crate) fn unpermute(perm: &[u32], g: &Tensor4) -> Tensor4 {
    let m = g.example_len();
    let mut out = Tensor4::zeros(g.shape());
    for b in 0..g.batch() {
        let p = &perm[b * m..(b + 1) * m];
        let ge = g.example(b);
        let oe = out.example_mut(b);
        for (&src, &gv) in p.iter().zip(ge) {
            oe[src as usize] = gv;
        }
    }
    out
}
