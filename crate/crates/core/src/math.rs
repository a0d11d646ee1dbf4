//! Float helpers that `core` does not provide without `std`.

#[inline]
pub(crate) fn abs(x: f64) -> f64 {
    libm::fabs(x)
}

#[inline]
pub(crate) fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub(crate) fn fma(a: f64, b: f64, c: f64) -> f64 {
    libm::fma(a, b, c)
}

#[inline]
pub(crate) fn round(x: f64) -> f64 {
    libm::round(x)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if abs(self.sum) >= abs(value) {
            self.carry += (self.sum - t) + value;
        } else {
            self.carry += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Adds `a * b` including the rounding error of the product.
    #[inline]
    pub(crate) fn add_product(&mut self, a: f64, b: f64) {
        let p = a * b;
        self.add(p);
        self.carry += fma(a, b, -p);
    }

    #[inline]
    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }

    /// `(sum + carry) / d` with the quotient corrected for the carry.
    #[inline]
    pub(crate) fn div(&self, d: f64) -> f64 {
        let q = self.sum / d;
        let r = fma(-q, d, self.sum) + self.carry;
        q + r / d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_of_repeated_tenths() {
        let mut s = CompensatedSum::default();
        for _ in 0..50_000 {
            s.add(0.3);
        }
        assert_eq!(s.value() / 50_000.0, 0.3);
    }
}
