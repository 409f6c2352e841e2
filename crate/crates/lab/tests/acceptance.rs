//! Acceptance run: one PASS/FAIL line per criterion, with wall-clock time.
//!
//! Exits nonzero only on an unexpected failure. A criterion whose failure is
//! reproduced and explained by a checked mechanism is reported as
//! `FAIL (explained)` and listed in the closing summary.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use symlab::exec::Parallel;
use symlab::fixtures::enumeration;
use symlab::run::kronecker_points;
use symlab_core::cell::{CoefficientField, EllipticSolveOptions, MediumDescriptor};
use symlab_core::correctors::{compute_correctors, symmetrized_form, CorrectorSet};
use symlab_core::exec::Serial;
use symlab_core::fourier::FrequencyLattice;
use symlab_core::homogenized::{
    error_and_rate, hierarchy_from_correctors, two_scale_residual, Forcing, FullSpaceGrid, SymbolCache,
    TorusFunction,
};
use symlab_core::lattice::{
    enumerate_exact, mc_bhat, periodization_experiment, plane_wave, sample_field, solve_discrete, Distribution,
    LatticeField, LatticeMedium, RngSpec, TwoPoint,
};
use symlab_core::linalg::KrylovOptions;
use symlab_core::symbol::{
    bhat_at, compare_with_correctors, default_rays, ray_samples, taylor_fit, taylor_fit_all_degrees, SymbolSample,
};
use symlab_core::C64;

/// Seed of every Monte Carlo run below.
const SEED: u64 = 2024;
const EPS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

fn opts() -> EllipticSolveOptions {
    EllipticSolveOptions::with_tol(1e-12)
}

fn kopts() -> KrylovOptions {
    KrylovOptions {
        tol: 1e-13,
        max_iter: 4000,
    }
}

fn medium(d: usize, m: usize, desc: MediumDescriptor) -> CoefficientField {
    CoefficientField::new(&FrequencyLattice::with_modes(d, m).unwrap(), desc).unwrap()
}

fn laminate(m: usize) -> CoefficientField {
    medium(2, m, MediumDescriptor::Laminate { amplitude: 0.5, axis: 0 })
}

fn inverse_cosine(m: usize) -> CoefficientField {
    medium(1, m, MediumDescriptor::InverseCosine { axis: 0 })
}

fn correctors(a: &CoefficientField, n: usize) -> CorrectorSet {
    compute_correctors(a, n, &opts(), &Serial).unwrap()
}

fn symbols(a: &CoefficientField, points: &[Vec<f64>]) -> Vec<SymbolSample> {
    points.iter().map(|p| bhat_at(a, p, None, &opts()).unwrap()).collect()
}

/// Literal band `λ|ξ|² ≤ Re B̂ ≤ |ξ|²` with certified `λ`.
fn band_violations(a: &CoefficientField, samples: &[SymbolSample]) -> usize {
    let lam = a.lambda();
    samples
        .iter()
        .filter(|s| {
            let r = s.ratio();
            !(r >= lam * (1.0 - 1e-9) && r <= 1.0 + 1e-9)
        })
        .count()
}

struct Verdict {
    pass: bool,
    detail: String,
    /// Reason a failure is understood (checked inside the criterion).
    explained: Option<String>,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Verdict {
            pass,
            detail,
            explained: None,
        }
    }
}

#[derive(Default)]
struct Ledger {
    continuum_samples: usize,
    continuum_violations: usize,
    lattice_checks: usize,
    lattice_violations: usize,
    results: Vec<(usize, bool, Option<String>)>,
}

impl Ledger {
    fn record(&mut self, a: &CoefficientField, s: &[SymbolSample]) {
        self.continuum_samples += s.len();
        self.continuum_violations += band_violations(a, s);
    }

    fn passed(&self, no: usize) -> bool {
        self.results.iter().any(|(n, p, _)| *n == no && *p)
    }
}

fn criterion(ledger: &mut Ledger, no: usize, title: &str, f: impl FnOnce(&mut Ledger) -> Verdict) {
    let t = Instant::now();
    let v = f(ledger);
    let secs = t.elapsed().as_secs_f64();
    let tag = match (v.pass, &v.explained) {
        (true, _) => "PASS",
        (false, Some(_)) => "FAIL (explained)",
        (false, None) => "FAIL",
    };
    println!("criterion {no} {tag} [{secs:.2} s] {title}: {}", v.detail);
    if let Some(e) = &v.explained {
        println!("    explanation: {e}");
    }
    ledger.results.push((no, v.pass, v.explained));
}

fn constant_medium(l: &mut Ledger) -> Verdict {
    let a = medium(2, 4, MediumDescriptor::Identity);
    let s = symbols(&a, &kronecker_points(2, 50, 6.0));
    l.record(&a, &s);
    let sym = s
        .iter()
        .map(|s| (s.value - C64::new(s.norm_sqr(), 0.0)).norm() / s.norm_sqr())
        .fold(0.0, f64::max);
    let set = correctors(&a, 3);
    let mut corr: f64 = 0.0;
    for n in 1..=3 {
        for f in set.phi_all(n).unwrap().iter().chain(set.sigma_all(n).unwrap()) {
            corr = corr.max(f.l2_norm());
        }
    }
    let g = FullSpaceGrid::with_defaults(2).unwrap();
    let f = Forcing::gaussian(&g, &[1.0, 1.0]).unwrap();
    let mut cache = SymbolCache::new();
    let mut err: f64 = 0.0;
    for ell in 1..=3 {
        let h = hierarchy_from_correctors(&set, ell, &f, &g).unwrap();
        let rep = error_and_rate(&a, &h, &f, &EPS, &opts(), &Serial, &mut cache).unwrap();
        err = err.max(rep.max_error());
    }
    let rel = err / g.norm(&f.spectrum);
    Verdict::new(
        sym <= 1e-10 && corr == 0.0 && rel <= 1e-14,
        format!("max |B-|xi|^2|/|xi|^2 = {sym:.1e} over 50 xi, max corrector norm {corr:.1e}, max e(eps)/|f| = {rel:.1e}"),
    )
}

fn one_dimensional(l: &mut Ledger) -> Verdict {
    let a = inverse_cosine(24);
    let pts: Vec<Vec<f64>> = kronecker_points(1, 50, 2.0 * PI - 0.01)
        .into_iter()
        .filter(|p| p[0].abs() > 1e-3)
        .collect();
    let s = symbols(&a, &pts);
    l.record(&a, &s);
    let dev = s.iter().map(|s| (s.ratio() - 0.5).abs()).fold(0.0, f64::max);
    let rays = default_rays(1, 6, 0, true);
    let ts = ray_samples(&a, &rays, &[0.4, 0.2, 0.1, 0.05], &opts(), &Serial).unwrap();
    l.record(&a, &ts);
    let m = taylor_fit(&ts, 1, 6).unwrap();
    let higher = m.max_coefficient(4).max(m.max_coefficient(6));
    let set = correctors(&a, 3);
    let t = |n| set.homogenized_tensor(n).unwrap()[0];
    let (a1, a2, a3) = (t(1), t(2), t(3));
    Verdict::new(
        dev <= 1e-9 && higher <= 1e-9 && (a1 - 0.5).abs() <= 1e-8 && a2.abs() <= 1e-8 && a3.abs() <= 1e-8,
        format!(
            "max |B/xi^2 - 0.5| = {dev:.1e} over {} xi, Taylor degree-2 {:.12}, higher {higher:.1e}, abar = ({a1:.10}, {a2:.1e}, {a3:.1e})",
            pts.len(),
            m.coefficient(&[2])
        ),
    )
}

fn cross_route(l: &mut Ledger) -> Verdict {
    let a = laminate(16);
    let set = correctors(&a, 3);
    let s = ray_samples(&a, &default_rays(2, 6, 0, false), &[0.2, 0.1, 0.05], &opts(), &Serial).unwrap();
    l.record(&a, &s);
    let m = taylor_fit(&s, 2, 6).unwrap();
    let disc = compare_with_correctors(&m, &set, 3).unwrap();
    let worst = disc.iter().map(|o| o.discrepancy).fold(0.0, f64::max);
    let a1 = set.homogenized_tensor(1).unwrap();
    let a1_err = (a1[0] - 3f64.sqrt() / 2.0).abs().max(a1[1].abs()).max(a1[2].abs()).max((a1[3] - 1.0).abs());
    let order2 = (0..16)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / 16.0;
            symmetrized_form(set.homogenized_tensor(2).unwrap(), &[t.cos(), t.sin()], 2).1.abs()
        })
        .fold(0.0, f64::max);
    let per: Vec<String> = disc.iter().map(|o| format!("{:.1e}", o.discrepancy)).collect();
    Verdict::new(
        worst <= 1e-5 && a1_err <= 1e-5 && order2 <= 1e-7,
        format!(
            "discrepancy by order [{}], |abar1 - diag(sqrt3/2, 1)| = {a1_err:.1e}, max order-2 form {order2:.1e}",
            per.join(", ")
        ),
    )
}

fn rates(_: &mut Ledger) -> Verdict {
    let a = laminate(16);
    let set = correctors(&a, 3);
    let g = FullSpaceGrid::with_defaults(2).unwrap();
    let f = Forcing::gaussian(&g, &[1.0, 1.0]).unwrap();
    let mut cache = SymbolCache::new();
    let mut parts = Vec::new();
    let (mut slopes_ok, mut spread_ok) = (true, true);
    let mut explained = true;
    for ell in 1..=3usize {
        let h = hierarchy_from_correctors(&set, ell, &f, &g).unwrap();
        let rep = error_and_rate(&a, &h, &f, &EPS, &opts(), &Serial, &mut cache).unwrap();
        let spread = rep.ratio_spread();
        slopes_ok &= rep.slope >= ell as f64 - 0.2;
        if spread >= 0.25 {
            spread_ok = false;
            // The next order of a symmetric medium vanishes, so e(eps) = O(eps^(ell+1))
            // and e/eps^ell drifts like eps; over a factor 8 in eps that is a factor 8.
            explained &= ell % 2 == 1 && rep.slope >= ell as f64 + 0.8 && (spread - 7.0).abs() < 0.5;
        }
        parts.push(format!("ell={ell}: slope {:.3}, prefactor spread {:.1}%", rep.slope, 100.0 * spread));
    }
    let (hits, misses) = cache.stats();
    let mut v = Verdict::new(
        slopes_ok && spread_ok,
        format!(
            "{} (slopes {}, prefactor spreads {}; symbol cache {hits} hits / {misses} solves)",
            parts.join("; "),
            if slopes_ok { "ok" } else { "BELOW ell - 0.2" },
            if spread_ok { "ok" } else { "exceed 25%" }
        ),
    );
    if slopes_ok && !spread_ok && explained {
        v.explained = Some(
            "for this reflection-symmetric laminate the even-order terms of the symbol vanish, so the order-ell \
             error of odd ell is O(eps^(ell+1)) (measured slope about ell+1) and e/eps^ell shrinks linearly in eps; \
             the ratio cannot be constant across the eps list"
                .into(),
        );
    }
    v
}

fn two_scale(_: &mut Ledger) -> Verdict {
    let one = correctors(&inverse_cosine(24), 2);
    let r1 = two_scale_residual(&one, 2, &TorusFunction::sine(1, 8, 0, 1)).unwrap();
    let two = correctors(&laminate(24), 2);
    let mut w = TorusFunction::sine(2, 8, 0, 1);
    w.modes.extend(TorusFunction::sine(2, 8, 1, 1).modes);
    let r2 = two_scale_residual(&two, 2, &w).unwrap();
    Verdict::new(
        r1 <= 1e-8 && r2 <= 1e-8,
        format!("relative residual n=2: inverse cosine {r1:.1e}, laminate {r2:.1e}"),
    )
}

fn bands(l: &mut Ledger) -> Verdict {
    for (a, pts) in [
        (laminate(16), kronecker_points(2, 50, 6.0)),
        (inverse_cosine(24), kronecker_points(1, 20, 6.0)),
        (medium(2, 12, MediumDescriptor::InverseCosine { axis: 1 }), kronecker_points(2, 30, 5.0)),
    ] {
        let s = symbols(&a, &pts);
        l.record(&a, &s);
    }
    let law = TwoPoint::rademacher();
    let mut cases: Vec<(usize, usize, f64, Vec<i64>)> = enumeration()
        .entries
        .iter()
        .map(|e| (e.d, e.side, e.delta, e.k.clone()))
        .collect();
    cases.extend([(1, 2, -0.1, vec![1]), (1, 8, 0.6, vec![3]), (2, 2, 0.9, vec![1, 1]), (2, 4, -0.4, vec![2, 1])]);
    for (d, side, delta, k) in cases {
        let x = enumerate_exact(d, side, &law, delta, &k, &kopts(), &Serial).unwrap();
        l.lattice_checks += 1;
        l.lattice_violations += usize::from(!x.within_band(delta, 1e-9));
    }
    Verdict::new(
        l.continuum_violations == 0 && l.lattice_violations == 0,
        format!(
            "{} violations in {} continuum samples, {} violations in {} lattice enumerations",
            l.continuum_violations, l.continuum_samples, l.lattice_violations, l.lattice_checks
        ),
    )
}

fn coords(x: usize, d: usize, side: usize) -> Vec<i64> {
    let mut c = vec![0; d];
    let mut r = x;
    for j in (0..d).rev() {
        c[j] = (r % side) as i64;
        r /= side;
    }
    c
}

fn site(c: &[i64], side: usize) -> usize {
    c.iter().fold(0, |acc, &v| acc * side + v.rem_euclid(side as i64) as usize)
}

/// Dense solve of `−∇*·a∇u = ∇*·f`, assembled column by column from the
/// stencil with the mean of `u` pinned to zero.
fn dense_solution(m: &LatticeMedium, f: &[C64]) -> Vec<C64> {
    let (d, side) = (m.dim(), m.side());
    let n = side.pow(d as u32);
    let apply = |u: &[f64]| -> Vec<f64> {
        let flux = |y: usize, i: usize| -> f64 {
            let c = coords(y, d, side);
            let a = m.coefficient(y);
            (0..d)
                .map(|j| {
                    let mut up = c.clone();
                    up[j] += 1;
                    a[i * d + j] * (u[site(&up, side)] - u[y])
                })
                .sum()
        };
        (0..n)
            .map(|x| {
                let c = coords(x, d, side);
                -(0..d)
                    .map(|i| {
                        let mut dn = c.clone();
                        dn[i] -= 1;
                        flux(x, i) - flux(site(&dn, side), i)
                    })
                    .sum::<f64>()
            })
            .collect()
    };
    let mut a = DMatrix::from_element(n, n, 1.0);
    for col in 0..n {
        let mut e = vec![0.0; n];
        e[col] = 1.0;
        for (row, v) in apply(&e).into_iter().enumerate() {
            a[(row, col)] += v;
        }
    }
    let lu = a.lu();
    let rhs: Vec<C64> = (0..n)
        .map(|x| {
            let c = coords(x, d, side);
            (0..d)
                .map(|j| {
                    let mut dn = c.clone();
                    dn[j] -= 1;
                    f[j * n + x] - f[j * n + site(&dn, side)]
                })
                .sum()
        })
        .collect();
    let re = lu.solve(&DVector::from_iterator(n, rhs.iter().map(|c| c.re))).unwrap();
    let im = lu.solve(&DVector::from_iterator(n, rhs.iter().map(|c| c.im))).unwrap();
    re.iter().zip(im.iter()).map(|(r, i)| C64::new(*r, *i)).collect()
}

fn lattice_oracles(_: &mut Ledger) -> Verdict {
    let rng = RngSpec::new(SEED);
    let est = mc_bhat(Distribution::Rademacher, 1, 2, 0.1, &[1], 1024, &rng, &kopts(), &Serial).unwrap();
    let exact = enumerate_exact(1, 2, &TwoPoint::rademacher(), 0.1, &[1], &kopts(), &Serial).unwrap();
    let z = (est.value - exact.value).norm() / est.stderr;
    let nonsymmetric = {
        let mut v = Vec::new();
        for x in 0..16 {
            let s = if x % 3 == 0 { -0.6 } else { 0.6 };
            v.extend([0.2 * s, 0.5, -0.3, s]);
        }
        LatticeField::new(2, 4, v).unwrap()
    };
    let fields = [
        ("d=1 L=4 fixed", LatticeField::from_scalars(1, 4, &[1.0, -1.0, 0.5, 0.0]).unwrap(), 0.5, vec![1i64]),
        ("d=2 L=4 rademacher", sample_field(Distribution::Rademacher, 2, 4, 0, &rng).unwrap(), 0.2, vec![1, 0]),
        ("d=2 L=3 uniform", sample_field(Distribution::Uniform, 2, 3, 1, &rng).unwrap(), 0.6, vec![1, 1]),
        ("d=3 L=3 diagonal", sample_field(Distribution::DiagonalUniform, 3, 3, 2, &rng).unwrap(), 0.4, vec![1, 0, 2]),
        ("d=2 L=4 nonsymmetric", nonsymmetric, 0.5, vec![1, 2]),
    ];
    let mut worst: f64 = 0.0;
    for (_, field, delta, k) in fields {
        let d = field.dim();
        let side = field.side();
        let m = LatticeMedium::new(field, delta).unwrap();
        let e: Vec<f64> = (0..d).map(|j| 1.0 / (1.0 + j as f64)).collect();
        let f = plane_wave(d, side, &k, &e);
        let u = solve_discrete(&m, &f, &kopts()).unwrap().u;
        let dense = dense_solution(&m, &f);
        let scale = dense.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let err = u.iter().zip(&dense).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale;
        worst = worst.max(err);
    }
    Verdict::new(
        z <= 3.0 && worst <= 1e-10,
        format!(
            "MC {:.6} +- {:.1e} vs exact {:.6} ({z:.2} se, n=1024, seed {SEED}); max relative dense-solve deviation {worst:.1e} on 5 fixtures",
            est.value.re, est.stderr, exact.value.re
        ),
    )
}

fn periodization(_: &mut Ledger) -> Verdict {
    let rng = RngSpec::new(SEED);
    let rows: Vec<_> = [(4usize, 20000usize), (8, 10000), (16, 4000)]
        .iter()
        .map(|&(side, pairs)| {
            periodization_experiment(Distribution::Rademacher, 2, 0.2, &[side], 1, pairs, &rng, &kopts(), &Serial)
                .unwrap()
                .remove(0)
        })
        .collect();
    let d1 = rows[0].distance(&rows[1]);
    let d2 = rows[1].distance(&rows[2]);
    let table: Vec<String> = rows
        .iter()
        .map(|r| format!("L={} abar11 {:.5} +- {:.1e} ({} pairs)", r.side, r.mean[0], r.stderr[0], r.pairs))
        .collect();
    Verdict::new(
        d2 < d1,
        format!("{}; differences {d1:.2e} then {d2:.2e} (seed {SEED})", table.join(", ")),
    )
}

fn substituted_suite(l: &mut Ledger) -> Verdict {
    let a = laminate(12);
    let s = ray_samples(&a, &default_rays(2, 5, 0, true), &[0.2, 0.1, 0.05], &opts(), &Serial).unwrap();
    let odd = {
        let m = taylor_fit_all_degrees(&s, 2, 5).unwrap();
        m.max_coefficient(3).max(m.max_coefficient(5))
    };
    let pts = kronecker_points(2, 20, 5.0);
    let plus = symbols(&a, &pts);
    let neg: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| -x).collect()).collect();
    let minus = symbols(&a, &neg);
    let parity = plus.iter().zip(&minus).map(|(p, m)| (p.value.re - m.value.re).abs()).fold(0.0, f64::max);
    let imag = plus.iter().chain(&s).map(|x| x.value.im.abs() / x.norm_sqr()).fold(0.0, f64::max);
    let rng = RngSpec::new(SEED);
    let run = |threads: Option<usize>| {
        let exec = Parallel::new(threads).unwrap();
        mc_bhat(Distribution::Uniform, 2, 4, 0.3, &[1, 1], 512, &rng, &kopts(), &exec).unwrap()
    };
    let serial = mc_bhat(Distribution::Uniform, 2, 4, 0.3, &[1, 1], 512, &rng, &kopts(), &Serial).unwrap();
    let deterministic = serial == run(Some(1)) && serial == run(Some(3)) && serial == run(None);
    let items = l.passed(6) && l.passed(7) && l.passed(8);
    println!(
        "    not reproduced: the Hoelder exponent 2d - C_d delta of the lattice symbol and the constants C_ell, C_d \
         (C_d is unspecified and the infinite-volume asymptotics are beyond desk scale); substituted checks follow"
    );
    Verdict::new(
        items && odd <= 1e-7 && imag <= 1e-8 && parity <= 1e-9 && deterministic,
        format!(
            "criteria 6-8 {}, odd Taylor coefficients {odd:.1e}, max |Im B|/|xi|^2 {imag:.1e}, \
             max |Re B(xi) - Re B(-xi)| {parity:.1e}, MC bit-identical across schedules: {deterministic}",
            if items { "pass" } else { "do not all pass" }
        ),
    )
}

fn main() {
    let mut l = Ledger::default();
    let t = Instant::now();
    criterion(&mut l, 1, "constant medium", constant_medium);
    criterion(&mut l, 2, "one-dimensional exact symbol", one_dimensional);
    criterion(&mut l, 3, "cross-route identity for the laminate", cross_route);
    criterion(&mut l, 4, "convergence rates for the laminate", rates);
    criterion(&mut l, 5, "two-scale PDE identity", two_scale);
    criterion(&mut l, 6, "symbol bounds", bands);
    criterion(&mut l, 7, "lattice oracle agreement", lattice_oracles);
    criterion(&mut l, 8, "periodization trend", periodization);
    criterion(&mut l, 9, "non-reproducible quantities and substitutes", substituted_suite);
    let passed = l.results.iter().filter(|r| r.1).count();
    let explained: Vec<usize> = l.results.iter().filter(|r| !r.1 && r.2.is_some()).map(|r| r.0).collect();
    let unexpected: Vec<usize> = l.results.iter().filter(|r| !r.1 && r.2.is_none()).map(|r| r.0).collect();
    println!(
        "acceptance: {passed}/9 pass, explained failures {explained:?}, unexpected failures {unexpected:?} [{:.1} s]",
        t.elapsed().as_secs_f64()
    );
    if !unexpected.is_empty() {
        std::process::exit(1);
    }
}
