//! Quartic (M5) B-spline with support radius 2.5, in the unnormalised form
//! used by the KL corpus. The 1-D normalisation constant is 1/24.

use num_traits::Float;

pub const SUPPORT: f64 = 2.5;

/// 1-D normalisation: the integral of `m5(|q|)` over the support is 24.
pub const NORM_1D: f64 = 24.0;

fn c<T: Float>(x: f64) -> T {
    T::from(x).expect("representable constant")
}

/// Unnormalised M5 at `q >= 0`. Same operation order as the corpus `m5`.
pub fn m5<T: Float>(q: T) -> T {
    let mut w = T::zero();
    if q < c(2.5) {
        let a = c::<T>(2.5) - q;
        w = a * a * a * a;
    }
    if q < c(1.5) {
        let b = c::<T>(1.5) - q;
        w = w - c::<T>(5.0) * (b * b * b * b);
    }
    if q < c(0.5) {
        let d = c::<T>(0.5) - q;
        w = w + c::<T>(10.0) * (d * d * d * d);
    }
    w
}

/// Derivative of [`m5`] with respect to `q`.
pub fn dm5<T: Float>(q: T) -> T {
    let mut d = T::zero();
    if q < c(2.5) {
        let a = c::<T>(2.5) - q;
        d = c::<T>(-4.0) * (a * a * a);
    }
    if q < c(1.5) {
        let b = c::<T>(1.5) - q;
        d = d + c::<T>(20.0) * (b * b * b);
    }
    if q < c(0.5) {
        let e = c::<T>(0.5) - q;
        d = d - c::<T>(40.0) * (e * e * e);
    }
    d
}

/// Normalised 1-D kernel W(r, h).
pub fn w1d<T: Float>(r: T, h: T) -> T {
    m5(r.abs() / h) / (c::<T>(NORM_1D) * h)
}
