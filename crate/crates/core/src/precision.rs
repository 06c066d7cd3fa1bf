//! Extended-precision scalar used on the steady-state / heat-current path.
//!
//! The heat currents are small differences of large gross transition flows
//! (the modulation current cancels to ~1e-9 of the gross qubit rates at the
//! reference parameters), so populations and currents are carried in
//! [`Real`] and only rounded to `f64` at the API boundary. The mantissa
//! width is a per-thread setting, [`PRECISION_BITS`] by default, that callers
//! raise with [`with_working_precision`] when a result is not resolved.

use std::cell::Cell;

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

/// Binary floating point; arithmetic keeps the wider operand precision.
pub type Real = FBig<HalfEven, 2>;

/// Default working precision.
pub const PRECISION_BITS: usize = 192;
/// Largest precision the adaptive evaluations escalate to.
pub const MAX_PRECISION_BITS: usize = 8192;

thread_local! {
    static WORKING_BITS: Cell<usize> = const { Cell::new(PRECISION_BITS) };
}

pub fn working_precision() -> usize {
    WORKING_BITS.with(Cell::get)
}

/// Run `f` with values created by [`real`] carrying `bits` of mantissa on
/// this thread. The previous setting is restored afterwards.
pub fn with_working_precision<T>(bits: usize, f: impl FnOnce() -> T) -> T {
    struct Restore(usize);
    impl Drop for Restore {
        fn drop(&mut self) {
            WORKING_BITS.with(|b| b.set(self.0));
        }
    }
    let _restore = Restore(WORKING_BITS.with(|b| b.replace(bits)));
    f()
}

/// Lift an `f64` into [`Real`] at the working precision. Non-finite input
/// panics; callers validate first.
pub fn real(x: f64) -> Real {
    Real::try_from(x)
        .expect("finite f64")
        .with_precision(working_precision())
        .value()
}

/// `|value| ≥ 2^{64−bits}·scale`: the value sits well above the rounding
/// noise of a computation whose terms are of size `scale`.
pub fn is_resolved(value: &Real, scale: &Real, bits: usize) -> bool {
    let shift = (bits as isize - 64).max(0);
    let noise = scale * Real::from_parts(1.into(), -shift);
    abs(value) >= noise
}

pub fn zero() -> Real {
    real(0.0)
}

pub fn to_f64(x: &Real) -> f64 {
    x.to_f64().value()
}

pub fn abs(x: &Real) -> Real {
    if *x < zero() {
        -x.clone()
    } else {
        x.clone()
    }
}

/// Dense square matrix of [`Real`], row-major.
#[derive(Clone, Debug)]
pub struct RealMatrix {
    n: usize,
    data: Vec<Real>,
}

impl RealMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![zero(); n * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> &Real {
        &self.data[row * self.n + col]
    }

    pub fn add_to(&mut self, row: usize, col: usize, value: &Real) {
        let slot = &mut self.data[row * self.n + col];
        *slot = &*slot + value;
    }

    pub fn set(&mut self, row: usize, col: usize, value: Real) {
        self.data[row * self.n + col] = value;
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &[Real]) -> Vec<Real> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                (0..self.n).fold(zero(), |acc, j| acc + self.get(i, j) * &v[j])
            })
            .collect()
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| to_f64(self.get(i, j))).collect())
            .collect()
    }
}

impl std::ops::Add<&RealMatrix> for &RealMatrix {
    type Output = RealMatrix;

    fn add(self, rhs: &RealMatrix) -> RealMatrix {
        assert_eq!(self.n, rhs.n);
        RealMatrix {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_digits_beyond_f64() {
        let third = real(1.0) / real(3.0);
        let residual = &third * real(3.0) - real(1.0);
        assert!(to_f64(&abs(&residual)) < 1e-50);
        // 1 + 1e-30 - 1 survives in extended precision, vanishes in f64.
        let tiny = (real(1.0) + real(1e-30)) - real(1.0);
        assert!((to_f64(&tiny) - 1e-30).abs() < 1e-45);
    }

    #[test]
    fn exp_matches_f64_to_rounding() {
        for x in [-30.0, -1.0, 0.25, 1.0, 20.0] {
            let e = to_f64(&real(x).exp());
            assert!((e - f64::exp(x)).abs() <= 4.0 * f64::EPSILON * f64::exp(x));
        }
    }

    #[test]
    fn working_precision_is_scoped() {
        assert_eq!(working_precision(), PRECISION_BITS);
        let tiny = with_working_precision(1024, || {
            assert_eq!(real(1.0).precision(), 1024);
            (real(1.0) + real(2f64.powi(-600))) - real(1.0)
        });
        assert_eq!(to_f64(&tiny), 2f64.powi(-600));
        assert_eq!(working_precision(), PRECISION_BITS);
        let lost = (real(1.0) + real(2f64.powi(-600))) - real(1.0);
        assert_eq!(to_f64(&lost), 0.0);
    }

    #[test]
    fn resolution_test() {
        let scale = real(1.0);
        assert!(is_resolved(&real(1e-30), &scale, 192));
        assert!(!is_resolved(&real(1e-50), &scale, 192));
        assert!(is_resolved(&real(-1e-50), &scale, 512));
    }

    #[test]
    fn huge_exponent_underflows_to_zero_in_f64() {
        let v = real(-5000.0).exp();
        assert_eq!(to_f64(&v), 0.0);
        assert!(v > zero());
    }
}
