//! Principal (Perron) eigenpair of a stencil matrix with nonnegative
//! off-diagonal entries.
//!
//! With `c = max(0, -min_k M_kk) + 1`, `M + cI` is nonnegative with a positive
//! diagonal, hence primitive when the pattern is irreducible. Its Perron root
//! minus `c` is the principal eigenvalue `lambda` of `M`, the only eigenvalue
//! with a positive eigenvector. For any positive `psi` the Collatz–Wielandt
//! ratios bracket it:
//!
//! ```text
//! min_k (M psi)_k / psi_k  <=  lambda  <=  max_k (M psi)_k / psi_k
//! ```
//!
//! The row sums are accumulated with compensation and each ratio is rounded
//! outward by one ulp, so the bracket holds for the computed iterate and not
//! just in exact arithmetic. Iteration stops once it is narrower than the
//! tolerance.
//!
//! [`EigenMethod::ShiftInvert`] replaces the power step by a solve with
//! `sI - M` for a shift `s` above the current upper bound. Then
//! `(sI - M)^{-1}` is entrywise positive, so the iterates stay positive and the
//! same bracket applies. The shift is the upper bound plus the bracket width.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::StencilMatrix;
use crate::linalg::BandedLu;
use crate::math::{self, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EigenMethod {
    /// Power iteration on `M + cI`.
    Power,
    /// Shift-and-invert iteration with a Perron-safe shift. Falls back to a
    /// power step whenever the factorization is not an M-matrix, and to plain
    /// power iteration when the band is too large to store.
    ShiftInvert,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: EigenMethod,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
            method: EigenMethod::ShiftInvert,
        }
    }
}

impl EigenOptions {
    pub fn power(tol: f64, max_iter: usize) -> Self {
        Self {
            tol,
            max_iter,
            method: EigenMethod::Power,
        }
    }
}

/// Bracket observed at the start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub iteration: usize,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive on every interior node, `psi[x0] == 1`.
    pub psi: Vec<f64>,
    /// `||M psi - lambda psi||_inf / ||psi||_inf`.
    pub residual: f64,
    pub iterations: usize,
    pub lower: f64,
    pub upper: f64,
}

/// Collatz–Wielandt bracket `(lo, hi)` for the principal eigenvalue of `m`.
pub fn collatz_wielandt_bounds(m: &StencilMatrix, psi: &[f64]) -> Result<(f64, f64)> {
    if psi.len() != m.n() {
        return Err(Error::InvalidArgument(alloc::format!(
            "vector of length {} for a matrix of order {}",
            psi.len(),
            m.n()
        )));
    }
    if let Some(index) = psi.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::NonPositiveVector { index });
    }
    Ok(ratio_bounds(m, psi))
}

fn ratio_bounds(m: &StencilMatrix, psi: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (i, &p) in psi.iter().enumerate() {
        let mut row = CompensatedSum::default();
        for (j, v) in m.row(i) {
            row.add_product(v, psi[j]);
        }
        let r = row.div(p);
        lo = lo.min(r.next_down());
        hi = hi.max(r.next_up());
    }
    (lo, hi)
}

/// Principal eigenpair of `m`, normalized so that `psi[x0] = 1`.
pub fn principal_eigenpair(m: &StencilMatrix, x0: usize, opts: &EigenOptions) -> Result<EigenPair> {
    principal_eigenpair_from(m, x0, None, opts, &mut |_| {})
}

/// As [`principal_eigenpair`], starting from `init` (all ones when `None`) and
/// reporting the bracket of every iteration to `observer`.
pub fn principal_eigenpair_from(
    m: &StencilMatrix,
    x0: usize,
    init: Option<&[f64]>,
    opts: &EigenOptions,
    observer: &mut dyn FnMut(&Bracket),
) -> Result<EigenPair> {
    let n = m.n();
    if n == 0 || x0 >= n {
        return Err(Error::InvalidArgument(alloc::format!(
            "normalization node {x0} outside a matrix of order {n}"
        )));
    }
    if !(m.min_offdiag() >= 0.0) {
        return Err(Error::InvalidArgument(
            "matrix has a negative off-diagonal entry".into(),
        ));
    }
    m.check_irreducible()?;

    let shift = (-m.min_diag()).max(0.0) + 1.0;
    let floor = 1e-9 * (1.0 + m.max_abs_diag());
    let mut v = match init {
        Some(x) if x.len() == n && x.iter().all(|&t| t > 0.0 && t.is_finite()) => {
            let top = x.iter().fold(0.0f64, |a, &b| a.max(b));
            x.iter().map(|t| t / top).collect()
        }
        _ => vec![1.0; n],
    };
    let mut y = vec![0.0; n];
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let invert = opts.method == EigenMethod::ShiftInvert && BandedLu::fits(m);

    for iteration in 0..opts.max_iter {
        (lo, hi) = ratio_bounds(m, &v);
        observer(&Bracket { iteration, lo, hi });
        if hi - lo <= opts.tol {
            return Ok(finish(m, v, x0, lo, hi, iteration));
        }

        let mut stepped = false;
        if invert {
            let sigma = hi + (hi - lo).max(floor);
            if let Some(lu) = BandedLu::factor_shifted(m, sigma) {
                y.copy_from_slice(&v);
                lu.solve(&mut y);
                stepped = y.iter().all(|&t| t > 0.0 && t.is_finite());
            }
        }
        if !stepped {
            m.mul_vec(&v, &mut y);
            for (yi, vi) in y.iter_mut().zip(&v) {
                *yi += shift * vi;
            }
        }
        let top = y.iter().fold(0.0f64, |a, &b| a.max(b));
        for (vi, yi) in v.iter_mut().zip(&y) {
            *vi = yi / top;
        }
        debug_assert!(v.iter().all(|&t| t > 0.0), "iterate lost positivity");
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        lo,
        hi,
    })
}

fn finish(
    m: &StencilMatrix,
    v: Vec<f64>,
    x0: usize,
    lo: f64,
    hi: f64,
    iterations: usize,
) -> EigenPair {
    let lambda = 0.5 * (lo + hi);
    let scale = v[x0];
    let psi: Vec<f64> = v.iter().map(|t| t / scale).collect();
    let mut y = vec![0.0; psi.len()];
    m.mul_vec(&psi, &mut y);
    let mut res = 0.0f64;
    let mut norm = 0.0f64;
    for (yi, pi) in y.iter().zip(&psi) {
        res = res.max(math::abs(yi - lambda * pi));
        norm = norm.max(*pi);
    }
    EigenPair {
        lambda,
        psi,
        residual: res / norm,
        iterations,
        lower: lo,
        upper: hi,
    }
}
