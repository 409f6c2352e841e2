//! End-to-end checks through the public API against closed forms.

use std::f64::consts::PI;

use proptest::prelude::*;
use symlab_core::cell::{CoefficientField, EllipticSolveOptions, MediumDescriptor};
use symlab_core::correctors::compute_correctors;
use symlab_core::exec::Serial;
use symlab_core::fourier::FrequencyLattice;
use symlab_core::lattice::{mc_bhat, Distribution, RngSpec};
use symlab_core::linalg::KrylovOptions;
use symlab_core::symbol::bhat_at;

fn laminate(amplitude: f64) -> CoefficientField {
    let lat = FrequencyLattice::with_modes(2, 24).unwrap();
    CoefficientField::new(&lat, MediumDescriptor::Laminate { amplitude, axis: 0 }).unwrap()
}

fn opts() -> EllipticSolveOptions {
    EllipticSolveOptions::with_tol(1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    // Across the layers the effective coefficient is the harmonic mean
    // sqrt(1 - amplitude^2); along them it is the arithmetic mean 1.
    #[test]
    fn laminate_first_order_tensor(amplitude in 0.05f64..0.6) {
        let set = compute_correctors(&laminate(amplitude), 1, &opts(), &Serial).unwrap();
        let a = set.homogenized_tensor(1).unwrap();
        prop_assert!((a[0] - (1.0 - amplitude * amplitude).sqrt()).abs() < 1e-9);
        prop_assert!(a[1].abs() < 1e-12 && a[2].abs() < 1e-12);
        prop_assert!((a[3] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn symbol_approaches_first_order_tensor() {
    let a = laminate(0.5);
    let set = compute_correctors(&a, 1, &opts(), &Serial).unwrap();
    let t = set.homogenized_tensor(1).unwrap();
    for theta in [0.0, 0.4, 1.1, 2.0] {
        let e = [f64::cos(theta), f64::sin(theta)];
        let want = t[0] * e[0] * e[0] + (t[1] + t[2]) * e[0] * e[1] + t[3] * e[1] * e[1];
        let r = 1e-2;
        let s = bhat_at(&a, &[r * e[0], r * e[1]], None, &EllipticSolveOptions::with_tol(1e-10)).unwrap();
        assert!((s.ratio() - want).abs() < 1e-4, "theta {theta}: {} vs {want}", s.ratio());
    }
}

#[test]
fn homogeneous_lattice_symbol_is_discrete_laplacian() {
    let opts = KrylovOptions { tol: 1e-13, max_iter: 500 };
    let est = mc_bhat(Distribution::Uniform, 2, 4, 0.0, &[1, 2], 8, &RngSpec::new(7), &opts, &Serial).unwrap();
    let m2: f64 = [1.0, 2.0].iter().map(|k: &f64| 2.0 - 2.0 * (2.0 * PI * k / 4.0).cos()).sum();
    assert!((est.value.re - m2).abs() < 1e-12 && est.value.im.abs() < 1e-12);
    assert!(est.stderr < 1e-14);
}
