//! Homogenized solutions on a large proxy torus standing in for `ℝᵈ`.
//!
//! Everything here acts frequency-wise: gradients are stored as spectra
//! `F∇u(ξ)` on the frequencies `ξ = 2πj/R`, `0 < |ξ| ≤ K`, and norms are
//! Parseval sums with measure `R^{-d}`.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::cell::{solve_bloch_rhs, CoefficientField, EllipticSolveOptions};
use crate::correctors::{tuple_of, CorrectorSet};
use crate::exec::Executor;
use crate::fourier::{pointwise_product, FrequencyLattice, SpectralField};
use crate::stats::log_log_slope;
use crate::symbol::{bhat_at, TaylorModel};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Frequencies `ξ = 2πj/R` with `j ≠ 0` and `|ξ| ≤ K`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSpaceGrid {
    dim: usize,
    period: u32,
    cutoff: f64,
    indices: Vec<[i64; 3]>,
}

impl FullSpaceGrid {
    pub const DEFAULT_PERIOD: u32 = 16;
    pub const DEFAULT_CUTOFF: f64 = 7.5;

    pub fn new(dim: usize, period: u32, cutoff: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} not in 1..=3")));
        }
        if period == 0 || !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::invalid("period and cutoff must be positive"));
        }
        let step = 2.0 * PI / period as f64;
        let jmax = libm::floor(cutoff / step) as i64;
        let mut indices = Vec::new();
        let range = |active: bool| if active { -jmax..=jmax } else { 0..=0 };
        for j0 in range(true) {
            for j1 in range(dim > 1) {
                for j2 in range(dim > 2) {
                    let n2 = (j0 * j0 + j1 * j1 + j2 * j2) as f64;
                    if n2 > 0.0 && libm::sqrt(n2) * step <= cutoff {
                        indices.push([j0, j1, j2]);
                    }
                }
            }
        }
        if indices.is_empty() {
            return Err(Error::invalid("cutoff below the frequency step"));
        }
        Ok(Self {
            dim,
            period,
            cutoff,
            indices,
        })
    }

    pub fn with_defaults(dim: usize) -> Result<Self> {
        Self::new(dim, Self::DEFAULT_PERIOD, Self::DEFAULT_CUTOFF)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> u32 {
        self.period
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[i64] {
        &self.indices[i][..self.dim]
    }

    pub fn frequency(&self, i: usize) -> Vec<f64> {
        let step = 2.0 * PI / self.period as f64;
        self.index(i).iter().map(|&j| j as f64 * step).collect()
    }

    /// Parseval weight `R^{-d}`.
    pub fn measure(&self) -> f64 {
        libm::pow(self.period as f64, -(self.dim as f64))
    }

    /// Largest `|ξ_j|` on the grid.
    pub fn max_component(&self) -> f64 {
        let step = 2.0 * PI / self.period as f64;
        self.indices
            .iter()
            .flat_map(|j| j[..self.dim].iter().map(|x| x.abs()))
            .max()
            .unwrap_or(0) as f64
            * step
    }

    /// `(Σ |v(ξ)|² R^{-d})^{1/2}` for a vector spectrum with `d` entries per frequency.
    pub fn norm(&self, spectrum: &[C64]) -> f64 {
        self.weighted_norm(spectrum, 0.0)
    }

    /// `(Σ (1+|ξ|²)^s |v(ξ)|² R^{-d})^{1/2}`.
    pub fn weighted_norm(&self, spectrum: &[C64], s: f64) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for i in 0..self.len() {
            let xi = self.frequency(i);
            let w = libm::pow(1.0 + xi.iter().map(|x| x * x).sum::<f64>(), s);
            let v: f64 = spectrum[i * d..(i + 1) * d].iter().map(|c| c.norm_sqr()).sum();
            acc += w * v;
        }
        libm::sqrt(acc * self.measure())
    }
}

/// A forcing `f` given by its spectrum on a [`FullSpaceGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Forcing {
    pub name: alloc::string::String,
    /// `d` entries per grid frequency.
    pub spectrum: Vec<C64>,
}

impl Forcing {
    /// `f̂(ξ) = ê·exp(−|ξ|²/2)` with `ê = direction/|direction|`.
    pub fn gaussian(grid: &FullSpaceGrid, direction: &[f64]) -> Result<Self> {
        let d = grid.dim();
        let n = libm::sqrt(direction.iter().map(|x| x * x).sum::<f64>());
        if direction.len() != d || !(n > 0.0 && n.is_finite()) {
            return Err(Error::invalid("forcing direction must be a nonzero vector of length d"));
        }
        Self::from_fn(grid, "gaussian", |xi, out| {
            let g = libm::exp(-0.5 * xi.iter().map(|x| x * x).sum::<f64>());
            for (o, e) in out.iter_mut().zip(direction) {
                *o = C64::new(g * e / n, 0.0);
            }
        })
    }

    pub fn from_fn<F: Fn(&[f64], &mut [C64])>(grid: &FullSpaceGrid, name: &str, f: F) -> Result<Self> {
        let d = grid.dim();
        let mut spectrum = vec![ZERO; grid.len() * d];
        for i in 0..grid.len() {
            f(&grid.frequency(i), &mut spectrum[i * d..(i + 1) * d]);
        }
        if spectrum.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::invalid("forcing spectrum is not finite"));
        }
        Ok(Self {
            name: name.into(),
            spectrum,
        })
    }

    /// `‖⟨∇⟩^s f‖`.
    pub fn weighted_norm(&self, grid: &FullSpaceGrid, s: f64) -> f64 {
        grid.weighted_norm(&self.spectrum, s)
    }
}

fn dot_c(xi: &[f64], v: &[C64]) -> C64 {
    xi.iter().zip(v).map(|(x, c)| c * x).sum()
}

/// `(iξ)^I` for a multi-index given as a tuple of axes.
fn monomial(xi: &[f64], tuple: &[usize]) -> C64 {
    tuple.iter().fold(C64::new(1.0, 0.0), |acc, &i| acc * I * xi[i])
}

fn quad(m: &[f64], xi: &[f64]) -> f64 {
    let d = xi.len();
    let mut s = 0.0;
    for r in 0..d {
        for c in 0..d {
            s += xi[r] * m[r * d + c] * xi[c];
        }
    }
    s
}

/// `−ξ(ξ·g)/q`.
fn project(xi: &[f64], g: &[C64], q: f64, out: &mut [C64]) {
    let s = dot_c(xi, g) / q;
    for (o, x) in out.iter_mut().zip(xi) {
        *o = -s * *x;
    }
}

/// The gradients `F∇ũⁿ`, `1 ≤ n ≤ ℓ`.
#[derive(Debug, Clone)]
pub struct HomogenizedHierarchy {
    ell: usize,
    grid: FullSpaceGrid,
    abar: Vec<Vec<f64>>,
    grads: Vec<Vec<C64>>,
}

/// Solve the hierarchy from the tensors `ā¹..ā^ℓ` (layout of
/// [`CorrectorSet::homogenized_tensor`]).
pub fn solve_hierarchy(abar: &[Vec<f64>], forcing: &Forcing, grid: &FullSpaceGrid) -> Result<HomogenizedHierarchy> {
    let d = grid.dim();
    let ell = abar.len();
    if ell == 0 {
        return Err(Error::invalid("need at least ā¹"));
    }
    for (k, t) in abar.iter().enumerate() {
        let want = d.pow(k as u32) * d * d;
        if t.len() != want {
            return Err(Error::invalid(format!(
                "ā^{} has {} entries, expected {want}",
                k + 1,
                t.len()
            )));
        }
    }
    if forcing.spectrum.len() != grid.len() * d {
        return Err(Error::GridMismatch {
            expected: grid.len() * d,
            got: forcing.spectrum.len(),
        });
    }
    let a1 = nalgebra::DMatrix::from_row_slice(d, d, &abar[0]);
    let lam = ((&a1 + a1.transpose()) * 0.5).symmetric_eigenvalues().min();
    if lam.is_nan() || lam <= 0.0 {
        return Err(Error::Ellipticity {
            point: Vec::new(),
            eigenvalue: lam,
        });
    }
    let mut grads: Vec<Vec<C64>> = Vec::with_capacity(ell);
    for n in 1..=ell {
        let mut out = vec![ZERO; grid.len() * d];
        let mut g = vec![ZERO; d];
        for i in 0..grid.len() {
            let xi = grid.frequency(i);
            let q = quad(&abar[0], &xi);
            if n == 1 {
                g.copy_from_slice(&forcing.spectrum[i * d..(i + 1) * d]);
            } else {
                g.iter_mut().for_each(|x| *x = ZERO);
                for k in 2..=n {
                    let prev = &grads[n - k][i * d..(i + 1) * d];
                    let t = &abar[k - 1];
                    for p in 0..d.pow(k as u32 - 1) {
                        let c = monomial(&xi, &tuple_of(p, k - 1, d));
                        let m = &t[p * d * d..(p + 1) * d * d];
                        for r in 0..d {
                            let mut s = ZERO;
                            for col in 0..d {
                                s += prev[col] * m[r * d + col];
                            }
                            g[r] += c * s;
                        }
                    }
                }
            }
            project(&xi, &g, q, &mut out[i * d..(i + 1) * d]);
        }
        grads.push(out);
    }
    Ok(HomogenizedHierarchy {
        ell,
        grid: grid.clone(),
        abar: abar.to_vec(),
        grads,
    })
}

/// Convenience wrapper taking `āⁿ` from a corrector set.
pub fn hierarchy_from_correctors(
    set: &CorrectorSet,
    ell: usize,
    forcing: &Forcing,
    grid: &FullSpaceGrid,
) -> Result<HomogenizedHierarchy> {
    if set.dim() != grid.dim() {
        return Err(Error::Incompatible("corrector and grid dimensions differ".into()));
    }
    let abar = (1..=ell)
        .map(|n| set.homogenized_tensor(n).map(|t| t.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    solve_hierarchy(&abar, forcing, grid)
}

impl HomogenizedHierarchy {
    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn grid(&self) -> &FullSpaceGrid {
        &self.grid
    }

    pub fn abar(&self) -> &[Vec<f64>] {
        &self.abar
    }

    /// `F∇ũⁿ`.
    pub fn gradient(&self, n: usize) -> Result<&[C64]> {
        if n == 0 || n > self.ell {
            return Err(Error::OutOfRange(format!("order {n} outside 1..={}", self.ell)));
        }
        Ok(&self.grads[n - 1])
    }

    /// `F∇ū^ℓ_ε = Σ εⁿ⁻¹ F∇ũⁿ`.
    pub fn averaged_gradient(&self, eps: f64) -> Vec<C64> {
        let mut out = vec![ZERO; self.grads[0].len()];
        let mut w = 1.0;
        for g in &self.grads {
            for (o, x) in out.iter_mut().zip(g) {
                *o += x * w;
            }
            w *= eps;
        }
        out
    }

    /// Largest `|v − ξ(ξ·v)/|ξ|²| / |v|` over frequencies and orders.
    pub fn curl_defect(&self) -> f64 {
        let d = self.grid.dim();
        let mut worst: f64 = 0.0;
        for g in &self.grads {
            for i in 0..self.grid.len() {
                let xi = self.grid.frequency(i);
                let v = &g[i * d..(i + 1) * d];
                let n2: f64 = xi.iter().map(|x| x * x).sum();
                let s = dot_c(&xi, v) / n2;
                let vn = libm::sqrt(v.iter().map(|c| c.norm_sqr()).sum::<f64>());
                if vn > 0.0 {
                    let r: f64 = v.iter().zip(&xi).map(|(c, x)| (c - s * *x).norm_sqr()).sum();
                    worst = worst.max(libm::sqrt(r) / vn);
                }
            }
        }
        worst
    }

    /// The truncated symbol matrix `B̂₀ε^ℓ(ξ) = Σ_k ε^{k−1} ā^k_I (iξ)^I`, row-major.
    pub fn truncated_symbol(&self, eps: f64, xi: &[f64]) -> Vec<C64> {
        truncated_symbol(&self.abar, eps, xi)
    }

    /// Scan of the naive all-orders operator; see [`naive_symbol_scan`].
    pub fn naive_scan(&self, eps: f64, lambda: f64) -> NaiveScan {
        naive_symbol_scan(&self.abar, eps, &self.grid, lambda)
    }
}

/// `Σ_{k} ε^{k−1} ā^k_I (iξ)^I` for tensors `ā¹..ā^ℓ`.
pub fn truncated_symbol(abar: &[Vec<f64>], eps: f64, xi: &[f64]) -> Vec<C64> {
    let d = xi.len();
    let mut m = vec![ZERO; d * d];
    let mut w = 1.0;
    for (k, t) in abar.iter().enumerate() {
        for p in 0..d.pow(k as u32) {
            let c = monomial(xi, &tuple_of(p, k, d)) * w;
            for (o, x) in m.iter_mut().zip(&t[p * d * d..(p + 1) * d * d]) {
                *o += c * *x;
            }
        }
        w *= eps;
    }
    m
}

/// Extremes of `|e·B̂₀ε^ℓ(ξ)e|` over the given `(ξ, e)` pairs.
pub fn truncated_band(abar: &[Vec<f64>], eps: f64, pairs: &[(Vec<f64>, Vec<f64>)]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for (xi, e) in pairs {
        let d = xi.len();
        let m = truncated_symbol(abar, eps, xi);
        let mut s = ZERO;
        for r in 0..d {
            for c in 0..d {
                s += m[r * d + c] * (e[r] * e[c]);
            }
        }
        lo = lo.min(s.norm());
        hi = hi.max(s.norm());
    }
    (lo, hi)
}

/// Outcome of evaluating `ξ·B̂₀ε^ℓ(ξ)ξ` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveScan {
    /// `min |symbol| / |ξ|²` over the grid.
    pub min_ratio: f64,
    /// Frequency attaining the minimum.
    pub worst: Vec<f64>,
    /// Number of frequencies with `|symbol| < λ/4·|ξ|²`.
    pub near_vanishing: usize,
}

impl NaiveScan {
    pub fn is_degenerate(&self) -> bool {
        self.near_vanishing > 0
    }
}

/// Evaluate the symbol of the naive operator `Σ ε^{k−1} ā^k(iξ)^{k−1}` and
/// count frequencies where it nearly vanishes.
pub fn naive_symbol_scan(abar: &[Vec<f64>], eps: f64, grid: &FullSpaceGrid, lambda: f64) -> NaiveScan {
    let d = grid.dim();
    let mut scan = NaiveScan {
        min_ratio: f64::INFINITY,
        worst: Vec::new(),
        near_vanishing: 0,
    };
    for i in 0..grid.len() {
        let xi = grid.frequency(i);
        let m = truncated_symbol(abar, eps, &xi);
        let mut s = ZERO;
        for r in 0..d {
            for c in 0..d {
                s += m[r * d + c] * (xi[r] * xi[c]);
            }
        }
        let n2: f64 = xi.iter().map(|x| x * x).sum();
        let ratio = s.norm() / n2;
        if ratio < lambda / 4.0 {
            scan.near_vanishing += 1;
        }
        if ratio < scan.min_ratio {
            scan.min_ratio = ratio;
            scan.worst = xi;
        }
    }
    if scan.near_vanishing > 0 {
        log::warn!(
            "naive operator symbol nearly vanishes at {} frequencies (min ratio {:e} at {:?})",
            scan.near_vanishing,
            scan.min_ratio,
            scan.worst
        );
    }
    scan
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Exact `(p, q)` with `p/q = ε`, searched with denominators up to `10⁶`.
pub fn rational(eps: f64) -> Result<(i64, i64)> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::invalid(format!("ε = {eps} must be positive")));
    }
    // continued fraction convergents
    let (mut h0, mut h1, mut k0, mut k1) = (0i64, 1i64, 1i64, 0i64);
    let mut x = eps;
    for _ in 0..40 {
        let a = libm::floor(x);
        if a > 1e12 {
            break;
        }
        let a = a as i64;
        let (h2, k2) = (a * h1 + h0, a * k1 + k0);
        if k2 > 1_000_000 {
            break;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - eps).abs() <= 1e-14 * eps {
            return Ok((h1, k1));
        }
        let frac = x - a as f64;
        if frac <= 0.0 {
            break;
        }
        x = 1.0 / frac;
    }
    Err(Error::invalid(format!("ε = {eps} is not a rational with denominator ≤ 10⁶")))
}

type SymbolKey = (Vec<i64>, i64);

/// `B̂(εξ)` values keyed by the exact rational frequency `εξ/2π`.
///
/// A cache is tied to one medium and one set of solver options.
#[derive(Debug, Clone, Default)]
pub struct SymbolCache {
    map: BTreeMap<SymbolKey, C64>,
    hits: usize,
    misses: usize,
}

impl SymbolCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// `(hits, misses)` so far.
    pub fn stats(&self) -> (usize, usize) {
        (self.hits, self.misses)
    }
}

fn symbol_key(j: &[i64], p: i64, q: i64, period: u32) -> SymbolKey {
    let mut num: Vec<i64> = j.iter().map(|x| x * p).collect();
    let mut den = q * period as i64;
    let g = num.iter().fold(den, |g, &x| gcd(g, x));
    if g > 1 {
        num.iter_mut().for_each(|x| *x /= g);
        den /= g;
    }
    (num, den)
}

/// `F∇E[u_ε](ξ) = −ξ(ξ·f̂) ε² / B̂(εξ)`.
pub fn averaged_solution_exact<E: Executor>(
    a: &CoefficientField,
    eps: f64,
    forcing: &Forcing,
    grid: &FullSpaceGrid,
    opts: &EllipticSolveOptions,
    exec: &E,
    cache: &mut SymbolCache,
) -> Result<Vec<C64>> {
    let d = grid.dim();
    if a.dim() != d {
        return Err(Error::Incompatible("medium and grid dimensions differ".into()));
    }
    if forcing.spectrum.len() != grid.len() * d {
        return Err(Error::GridMismatch {
            expected: grid.len() * d,
            got: forcing.spectrum.len(),
        });
    }
    if eps * grid.max_component() >= 2.0 * PI {
        return Err(Error::Inadmissible(vec![eps * grid.max_component(); d]));
    }
    let (p, q) = rational(eps)?;
    let keys: Vec<SymbolKey> = (0..grid.len()).map(|i| symbol_key(grid.index(i), p, q, grid.period())).collect();
    let mut missing: Vec<&SymbolKey> = keys.iter().filter(|k| !cache.map.contains_key(*k)).collect();
    missing.sort();
    missing.dedup();
    cache.hits += keys.len() - missing.len();
    cache.misses += missing.len();
    let values = exec.map(missing.len(), |m| {
        let (num, den) = missing[m];
        let eta: Vec<f64> = num.iter().map(|&x| 2.0 * PI * x as f64 / *den as f64).collect();
        bhat_at(a, &eta, None, opts).map(|s| s.value)
    });
    for (k, v) in missing.iter().zip(values) {
        cache.map.insert((*k).clone(), v?);
    }
    let mut out = vec![ZERO; grid.len() * d];
    for i in 0..grid.len() {
        let xi = grid.frequency(i);
        let b = cache.map[&keys[i]];
        let s = dot_c(&xi, &forcing.spectrum[i * d..(i + 1) * d]) * (eps * eps) / b;
        for (o, x) in out[i * d..(i + 1) * d].iter_mut().zip(&xi) {
            *o = -s * *x;
        }
    }
    Ok(out)
}

/// `F∇ū` for `ℓ = 1` built from the degree-2 part of a fitted symbol model.
pub fn first_order_from_model(model: &TaylorModel, forcing: &Forcing, grid: &FullSpaceGrid) -> Result<Vec<C64>> {
    let d = grid.dim();
    if model.dim != d {
        return Err(Error::Incompatible("model and grid dimensions differ".into()));
    }
    let mut out = vec![ZERO; grid.len() * d];
    for i in 0..grid.len() {
        let xi = grid.frequency(i);
        let q = model.part(2, &xi);
        project(&xi, &forcing.spectrum[i * d..(i + 1) * d], q, &mut out[i * d..(i + 1) * d]);
    }
    Ok(out)
}

/// `‖u − v‖` on the grid.
pub fn gradient_distance(grid: &FullSpaceGrid, u: &[C64], v: &[C64]) -> f64 {
    let diff: Vec<C64> = u.iter().zip(v).map(|(x, y)| x - y).collect();
    grid.norm(&diff)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub eps: f64,
    pub error: f64,
    /// `‖⟨∇⟩^{2ℓ−1} f‖`.
    pub weighted_norm: f64,
    /// `error / (ε^ℓ · weighted_norm)`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub ell: usize,
    pub rows: Vec<RateRow>,
    /// Least-squares slope of `log e` against `log ε` (NaN when some error is zero).
    pub slope: f64,
}

impl RateReport {
    /// `max ratio / min ratio − 1`.
    pub fn ratio_spread(&self) -> f64 {
        let lo = self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
        let hi = self.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        hi / lo - 1.0
    }

    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }
}

/// `e(ε) = ‖∇(E[u_ε] − ū^ℓ_ε)‖` over an `ε` list, with the fitted slope.
#[allow(clippy::too_many_arguments)]
pub fn error_and_rate<E: Executor>(
    a: &CoefficientField,
    hierarchy: &HomogenizedHierarchy,
    forcing: &Forcing,
    eps_list: &[f64],
    opts: &EllipticSolveOptions,
    exec: &E,
    cache: &mut SymbolCache,
) -> Result<RateReport> {
    if eps_list.is_empty() {
        return Err(Error::invalid("empty ε list"));
    }
    let grid = hierarchy.grid();
    let ell = hierarchy.ell();
    let w = forcing.weighted_norm(grid, (2 * ell) as f64 - 1.0);
    let mut rows = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let exact = averaged_solution_exact(a, eps, forcing, grid, opts, exec, cache)?;
        let error = gradient_distance(grid, &exact, &hierarchy.averaged_gradient(eps));
        rows.push(RateRow {
            eps,
            error,
            weighted_norm: w,
            ratio: error / (libm::pow(eps, ell as f64) * w),
        });
    }
    let slope = if rows.len() >= 2 && rows.iter().all(|r| r.error > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.eps).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.error).collect();
        log_log_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(RateReport { ell, rows, slope })
}

/// A trigonometric polynomial on the torus of period `P`: modes `θ = 2πj/P`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusFunction {
    pub period: u32,
    pub modes: Vec<(Vec<i64>, C64)>,
}

impl TorusFunction {
    /// `sin(2πk·x/P)` along `axis`.
    pub fn sine(dim: usize, period: u32, axis: usize, k: i64) -> Self {
        let mut j = vec![0; dim];
        j[axis] = k;
        let neg: Vec<i64> = j.iter().map(|x| -x).collect();
        Self {
            period,
            modes: vec![(j, C64::new(0.0, -0.5)), (neg, C64::new(0.0, 0.5))],
        }
    }

    fn theta(&self, j: &[i64]) -> Vec<f64> {
        j.iter().map(|&x| 2.0 * PI * x as f64 / self.period as f64).collect()
    }

    /// `‖⟨∇⟩^s w‖` normalized by the torus volume.
    pub fn weighted_norm(&self, s: f64) -> f64 {
        let acc: f64 = self
            .modes
            .iter()
            .map(|(j, c)| {
                let t = self.theta(j);
                libm::pow(1.0 + t.iter().map(|x| x * x).sum::<f64>(), s) * c.norm_sqr()
            })
            .sum();
        libm::sqrt(acc)
    }
}

/// Relative residual of the unit-scale two-scale identity
/// `∇·a∇Fⁿ[w̄] = ∇·(Σ_k ā^k∇^{k−1})∇w̄ + ∇·((aφⁿ − σⁿ)∇∇ⁿw̄)`.
///
/// Each mode `e^{iθx}` of `w̄` is treated on its Bloch fiber; products are
/// formed exactly on a lattice with twice the modes.
pub fn two_scale_residual(set: &CorrectorSet, n: usize, w: &TorusFunction) -> Result<f64> {
    let d = set.dim();
    if n > set.order() {
        return Err(Error::OutOfRange(format!("order {n} exceeds corrector order {}", set.order())));
    }
    let base = set.medium().lattice();
    let ext = FrequencyLattice::with_modes(d, 2 * base.modes())?;
    let a = set.medium().field().resampled(&ext)?;
    let pad = |f: &SpectralField| f.resampled(&ext);
    let phi: Vec<Vec<SpectralField>> = (0..=n)
        .map(|k| set.phi_all(k)?.iter().map(pad).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    // (aφⁿ − σⁿ) per tuple
    let top: Vec<SpectralField> = set
        .phi_all(n)?
        .iter()
        .zip(set.sigma_all(n)?)
        .map(|(p, s)| pointwise_product(&pad(p)?, &a)?.sub(&pad(s)?))
        .collect::<Result<_>>()?;
    let mut acc = 0.0;
    for (j, amp) in &w.modes {
        if j.len() != d {
            return Err(Error::invalid("test function mode has wrong dimension"));
        }
        if j.iter().any(|&x| 2 * x.abs() >= w.period as i64) {
            return Err(Error::invalid("test function modes must be distinct modulo the unit lattice"));
        }
        let theta = w.theta(j);
        let ith: Vec<C64> = theta.iter().map(|&t| I * t).collect();
        let mut v = SpectralField::zeros(&ext, crate::fourier::Rank::Scalar);
        for (k, fields) in phi.iter().enumerate() {
            for (t, f) in fields.iter().enumerate() {
                v.add_assign_scaled(monomial(&theta, &tuple_of(t, k, d)), f)?;
            }
        }
        let lhs = pointwise_product(&a, &v.shifted_gradient(&theta)?)?.shifted_divergence(&theta)?;
        let mut rhs_const = ZERO;
        for k in 1..=n {
            let t = set.homogenized_tensor(k)?;
            for p in 0..d.pow(k as u32 - 1) {
                let m = &t[p * d * d..(p + 1) * d * d];
                let mut s = ZERO;
                for r in 0..d {
                    for c in 0..d {
                        s += ith[r] * m[r * d + c] * ith[c];
                    }
                }
                rhs_const += s * monomial(&theta, &tuple_of(p, k - 1, d));
            }
        }
        let konst = SpectralField::constant_vector(&ext, &ith);
        let mut flux = SpectralField::zeros(&ext, crate::fourier::Rank::Vector);
        for (t, m) in top.iter().enumerate() {
            flux.add_assign_scaled(monomial(&theta, &tuple_of(t, n, d)), &pointwise_product(m, &konst)?)?;
        }
        let mut rhs = flux.shifted_divergence(&theta)?;
        rhs.add_constant(0, rhs_const);
        let r = lhs.sub(&rhs)?.l2_norm();
        acc += amp.norm_sqr() * r * r;
    }
    Ok(libm::sqrt(acc) / w.weighted_norm(n as f64 + 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwoScaleError {
    pub eps: f64,
    /// Root mean square over translations of the gradient error.
    pub error: f64,
    /// Error per translation.
    pub per_translation: Vec<f64>,
    /// `error / (ε^ℓ ‖⟨∇⟩^{2ℓ−1} f‖)`.
    pub ratio: f64,
    pub solves: usize,
}

/// `‖∇(u_ε − Σ_k ε^k φ^k(·/ε + z)∇^k ū^ℓ)‖` averaged over `Z^d` translations `z`.
///
/// The heterogeneous problem with medium `a(·/ε + z)` and forcing `f` is
/// solved fiber by fiber: the frequency `ξ` couples only to `ξ + 2πk/ε`,
/// which gives a shifted cell problem at `η = εξ` per frequency and translation.
#[allow(clippy::too_many_arguments)]
pub fn oscillatory_error<E: Executor>(
    set: &CorrectorSet,
    ell: usize,
    forcing: &Forcing,
    grid: &FullSpaceGrid,
    eps: f64,
    translations: usize,
    opts: &EllipticSolveOptions,
    exec: &E,
) -> Result<TwoScaleError> {
    let d = grid.dim();
    if d > 2 {
        return Err(Error::Guard {
            what: "two-scale error dimension",
            value: d,
            limit: 2,
        });
    }
    if translations == 0 || translations > 16 {
        return Err(Error::Guard {
            what: "translations per axis",
            value: translations,
            limit: 16,
        });
    }
    let (p, _) = rational(eps)?;
    if p != 1 {
        return Err(Error::invalid(format!("ε = {eps} is not of the form 1/m")));
    }
    if eps * grid.max_component() >= PI {
        return Err(Error::invalid(format!(
            "ε·K = {} must stay below π so that frequencies do not couple",
            eps * grid.max_component()
        )));
    }
    let hier = hierarchy_from_correctors(set, ell, forcing, grid)?;
    let ubar = hier.averaged_gradient(eps);
    let a = set.medium();
    let l = a.lattice().clone();
    let total = translations.pow(d as u32);
    let results = exec.map(total, |t| -> Result<f64> {
        let mut z = vec![0.0; d];
        let mut rem = t;
        for j in (0..d).rev() {
            z[j] = (rem % translations) as f64 / translations as f64;
            rem /= translations;
        }
        let wrap = |e: Error| Error::Translation {
            z: z.clone(),
            source: Box::new(e),
        };
        let az = a.translated(&z).map_err(wrap)?;
        let phis: Vec<Vec<SpectralField>> = (0..=ell)
            .map(|k| Ok(set.phi_all(k)?.iter().map(|f| f.translated(&z)).collect()))
            .collect::<Result<_>>()
            .map_err(wrap)?;
        let mut rhs = vec![ZERO; l.len()];
        rhs[l.zero_index()] = C64::new(1.0, 0.0);
        let mut acc = 0.0;
        for i in 0..grid.len() {
            let xi = grid.frequency(i);
            let eta: Vec<f64> = xi.iter().map(|x| x * eps).collect();
            let fh = &forcing.spectrum[i * d..(i + 1) * d];
            let wsol = solve_bloch_rhs(&az, &eta, &rhs, opts).map_err(wrap)?;
            let exact = wsol.field.shifted_gradient(&eta).map_err(wrap)?.scale(I * dot_c(&eta, fh));
            let mut s = SpectralField::zeros(&l, crate::fourier::Rank::Scalar);
            for (k, fields) in phis.iter().enumerate() {
                for (tu, f) in fields.iter().enumerate() {
                    s.add_assign_scaled(monomial(&eta, &tuple_of(tu, k, d)), f).map_err(wrap)?;
                }
            }
            let g = &ubar[i * d..(i + 1) * d];
            let n2: f64 = xi.iter().map(|x| x * x).sum();
            let uhat = dot_c(&xi, g) / (I * n2);
            let approx = s.shifted_gradient(&eta).map_err(wrap)?.scale(uhat / eps);
            let e = exact.sub(&approx).map_err(wrap)?.l2_norm();
            acc += e * e;
        }
        Ok(libm::sqrt(acc * grid.measure()))
    });
    let per_translation = results.into_iter().collect::<Result<Vec<_>>>()?;
    let ms: f64 = per_translation.iter().map(|e| e * e).sum::<f64>() / total as f64;
    let error = libm::sqrt(ms);
    let w = forcing.weighted_norm(grid, (2 * ell) as f64 - 1.0);
    Ok(TwoScaleError {
        eps,
        error,
        per_translation,
        ratio: error / (libm::pow(eps, ell as f64) * w),
        solves: total * grid.len(),
    })
}
