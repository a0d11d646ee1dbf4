//! Banded LU without pivoting for `sigma I - M`.
//!
//! When `sigma` exceeds the Perron root of `M` the shifted matrix is a
//! nonsingular M-matrix: elimination without pivoting has positive pivots and
//! the inverse is entrywise nonnegative.

use alloc::vec;
use alloc::vec::Vec;

use crate::grid::StencilMatrix;

pub(crate) struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    band: Vec<f64>,
}

/// Band storage above this many entries is not attempted.
const MAX_BAND_ENTRIES: usize = 1 << 24;

impl BandedLu {
    /// Whether the band of `m` fits the storage budget.
    pub(crate) fn fits(m: &StencilMatrix) -> bool {
        let (kl, ku) = m.bandwidth();
        m.n().saturating_mul(kl + ku + 1) <= MAX_BAND_ENTRIES
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * (self.kl + self.ku + 1) + (j + self.kl - i)
    }

    /// Factors `sigma I - m`. Returns `None` on a nonpositive pivot, which
    /// means `sigma` is not above the Perron root.
    pub(crate) fn factor_shifted(m: &StencilMatrix, sigma: f64) -> Option<Self> {
        let n = m.n();
        let (kl, ku) = m.bandwidth();
        let w = kl + ku + 1;
        let mut lu = Self {
            n,
            kl,
            ku,
            band: vec![0.0; n * w],
        };
        for i in 0..n {
            for (j, v) in m.row(i) {
                let p = lu.at(i, j);
                lu.band[p] = if i == j { sigma - v } else { -v };
            }
        }
        for k in 0..n {
            let pivot = lu.band[lu.at(k, k)];
            if !(pivot > 0.0) {
                return None;
            }
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + ku).min(n - 1);
            for i in k + 1..=last_row {
                let pik = lu.at(i, k);
                let l = lu.band[pik] / pivot;
                if l == 0.0 {
                    continue;
                }
                lu.band[pik] = l;
                for j in k + 1..=last_col {
                    let pkj = lu.at(k, j);
                    let pij = lu.at(i, j);
                    lu.band[pij] -= l * lu.band[pkj];
                }
            }
        }
        Some(lu)
    }

    /// Solves in place.
    pub(crate) fn solve(&self, x: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let first = i.saturating_sub(self.kl);
            let mut acc = x[i];
            for j in first..i {
                acc -= self.band[self.at(i, j)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let last = (i + self.ku).min(n - 1);
            let mut acc = x[i];
            for j in i + 1..=last {
                acc -= self.band[self.at(i, j)] * x[j];
            }
            x[i] = acc / self.band[self.at(i, i)];
        }
    }
}
