use proptest::prelude::*;
use soaview_sph::spline::{dm5, m5, w1d, NORM_1D, SUPPORT};

#[test]
fn monotone_non_increasing_on_support() {
    let n = 10_000;
    let mut prev = f64::INFINITY;
    for i in 0..=n {
        let q = SUPPORT * i as f64 / n as f64;
        let w = m5(q);
        assert!(w <= prev, "m5 increases at q={q}");
        assert!(w >= 0.0);
        prev = w;
    }
}

/// Composite Simpson rule, independent of the kernel code.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn normalised_kernel_integrates_to_one() {
    let h = 0.7;
    let total = simpson(|r| w1d(r, h), -SUPPORT * h, SUPPORT * h, 20_000);
    assert!((total - 1.0).abs() < 1e-3, "{total}");
    let raw = simpson(|q: f64| m5(q.abs()), -SUPPORT, SUPPORT, 20_000);
    assert!((raw - NORM_1D).abs() < 1e-3 * NORM_1D);
}

#[test]
fn derivative_matches_finite_differences() {
    for i in 1..500 {
        let q = 2.6 * i as f64 / 500.0;
        let e = 1e-6;
        let fd = (m5(q + e) - m5(q - e)) / (2.0 * e);
        assert!((fd - dm5(q)).abs() < 1e-5, "q={q}: {fd} vs {}", dm5(q));
    }
}

#[test]
fn centre_value() {
    assert_eq!(m5(0.0), 14.375);
}

#[test]
fn continuous_at_knots() {
    for k in [0.5f64, 1.5, 2.5] {
        let e: f64 = 1e-9;
        assert!((m5(k - e) - m5(k + e)).abs() < 1e-7);
    }
}

#[test]
fn generic_over_f32() {
    for i in 0..100 {
        let q = 2.5 * i as f64 / 100.0;
        assert!((m5(q as f32) as f64 - m5(q)).abs() < 1e-4 * (1.0 + m5(q)));
    }
}

proptest! {
    #[test]
    fn zero_outside_support(q in 2.5f64..1e6) {
        prop_assert_eq!(m5(q), 0.0);
        prop_assert_eq!(dm5(q), 0.0);
    }

    #[test]
    fn non_negative(q in 0.0f64..3.0) {
        prop_assert!(m5(q) >= 0.0);
        prop_assert!(dm5(q) <= 0.0);
    }
}
