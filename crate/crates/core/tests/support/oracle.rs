//! Dense eigenvalue oracle for Metzler matrices.
//!
//! The Schur eigenvalue from nalgebra is only accurate to a few hundred ulps
//! of the matrix norm on non-normal matrices, which is coarser than a
//! converged Collatz–Wielandt bracket. The oracle therefore refines it with
//! the two-sided Rayleigh quotient `y^T A x / y^T x`, whose error is the
//! product of the vector errors, evaluated in double-double arithmetic.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rsg_core::StencilMatrix;

/// A double-double number `hi + lo`.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    fn normalize(hi: f64, lo: f64) -> Dd {
        let s = hi + lo;
        Dd {
            hi: s,
            lo: lo - (s - hi),
        }
    }

    fn add_prod(self, a: f64, b: f64) -> Dd {
        let p = a * b;
        let pe = a.mul_add(b, -p);
        let s = Dd::two_sum(self.hi, p);
        Dd::normalize(s.hi, s.lo + self.lo + pe)
    }

    fn mul_f64(self, b: f64) -> Dd {
        let p = self.hi * b;
        let pe = self.hi.mul_add(b, -p);
        Dd::normalize(p, pe + self.lo * b)
    }

    fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::normalize(s.hi, s.lo + self.lo + o.lo)
    }

    fn div(self, o: Dd) -> f64 {
        let q = self.hi / o.hi;
        let r = self.add(o.mul_f64(-q));
        q + r.hi / o.hi
    }
}

fn dense(m: &StencilMatrix) -> DMatrix<f64> {
    let n = m.n();
    DMatrix::from_row_slice(n, n, &m.to_dense())
}

/// Right null vector of `a - lam I`, scaled to have a positive sum.
fn null_vector(a: &DMatrix<f64>, lam: f64) -> Vec<f64> {
    let n = a.nrows();
    let shifted = a - DMatrix::identity(n, n) * lam;
    let svd = shifted.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let k = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(y.1))
        .map(|(k, _)| k)
        .expect("nonempty");
    let mut v: Vec<f64> = vt.row(k).iter().copied().collect();
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    v
}

fn scalable_positive(v: &[f64]) -> bool {
    let max = v.iter().copied().fold(0.0, f64::max);
    v.iter().all(|&x| x > -1e-12 * max)
}

/// `y^T A x / y^T x` in double-double.
fn rayleigh(a: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let n = a.nrows();
    let mut num = Dd::ZERO;
    let mut den = Dd::ZERO;
    for i in 0..n {
        let mut row = Dd::ZERO;
        for j in 0..n {
            let aij = a[(i, j)];
            if aij != 0.0 {
                row = row.add_prod(aij, x[j]);
            }
        }
        num = num.add(row.mul_f64(y[i]));
        den = den.add_prod(y[i], x[i]);
    }
    num.div(den)
}

/// The eigenvalue whose eigenvector can be scaled positive, with that
/// eigenvector (unit length).
pub fn dense_perron(m: &StencilMatrix) -> (f64, Vec<f64>) {
    let a = dense(m);
    let scale = 1.0 + a.amax();
    let mut real: Vec<f64> = a
        .complex_eigenvalues()
        .iter()
        .filter(|c| c.im.abs() <= 1e-9 * scale)
        .map(|c| c.re)
        .collect();
    real.sort_by(|x, y| y.total_cmp(x));
    for lam in real {
        let x = null_vector(&a, lam);
        if !scalable_positive(&x) {
            continue;
        }
        let y = null_vector(&a.transpose(), lam);
        return (rayleigh(&a, &x, &y), x);
    }
    panic!("no eigenvector can be scaled positive");
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
