//! Random media on the discrete torus `(ℤ/Lℤ)ᵈ`.
//!
//! Medium `a^δ(x) = Id − δ b(x)` with iid `b(x)`, `|b(x)| ≤ 1`. The forward
//! difference `∇_j u(x) = u(x+e_j) − u(x)` has symbol `m_j(ξ) = e^{iξ_j} − 1`;
//! the backward divergence `∇*·g(x) = Σ_j g_j(x) − g_j(x−e_j)` has symbol
//! `−conj(m_j)`, so `−∇*·∇` has the positive symbol `|m(ξ)|²`.
//!
//! Randomness: sample `s` uses `ChaCha8Rng::seed_from_u64(seed)` on stream
//! `s`; sites are visited in row-major order (last axis fastest) and each
//! site consumes a fixed number of 64-bit words. The draws at `(seed, s, x)`
//! therefore do not depend on scheduling.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::exec::Executor;
use crate::fourier::FftNd;
use crate::linalg::{bicgstab, pcg, KrylovOptions};
use crate::stats::{mean_stderr, pairwise_sum};
use crate::{Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Largest number of enumerated configurations (`2^20`).
pub const ENUMERATION_LIMIT: u32 = 20;
/// Side cap for `d = 3`.
pub const MAX_SIDE_3D: usize = 16;
/// Sample cap for `d = 3`.
pub const MAX_SAMPLES_3D: usize = 4096;

/// Law of the iid site matrices `b(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    /// `b = ±Id` with probability ½ each.
    Rademacher,
    /// `b = u·Id`, `u` uniform on `[−1, 1]`.
    Uniform,
    /// `b = diag(u_1..u_d)` with iid uniform entries on `[−1, 1]`.
    DiagonalUniform,
}

impl Distribution {
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "rademacher" => Ok(Self::Rademacher),
            "uniform" => Ok(Self::Uniform),
            "diagonal" => Ok(Self::DiagonalUniform),
            other => Err(Error::invalid(format!(
                "unknown distribution '{other}' (expected rademacher, uniform or diagonal)"
            ))),
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Self::Rademacher => "rademacher",
            Self::Uniform => "uniform",
            Self::DiagonalUniform => "diagonal",
        }
    }

    /// Invariant under `b → −b`.
    pub fn is_symmetric(&self) -> bool {
        true
    }
}

/// Master seed of the sample streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSpec {
    pub seed: u64,
}

impl RngSpec {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    /// Generator for sample `s`.
    pub fn stream(&self, s: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(s);
        rng
    }
}

fn unit_interval(w: u64) -> f64 {
    (w >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Per-site matrices `b(x)` on `(ℤ/Lℤ)ᵈ`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeField {
    dim: usize,
    side: usize,
    /// `d²` row-major entries per site.
    values: Vec<f64>,
    norm_bound: f64,
}

fn spectral_norm(m: &[f64], d: usize) -> f64 {
    let mat = nalgebra::DMatrix::from_row_slice(d, d, m);
    mat.singular_values().max()
}

impl LatticeField {
    pub fn new(dim: usize, side: usize, values: Vec<f64>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} not in 1..=3")));
        }
        if side < 2 {
            return Err(Error::invalid(format!("side {side} must be at least 2")));
        }
        let sites = side.pow(dim as u32);
        if values.len() != sites * dim * dim {
            return Err(Error::GridMismatch {
                expected: sites * dim * dim,
                got: values.len(),
            });
        }
        let mut norm_bound: f64 = 0.0;
        for (x, m) in values.chunks_exact(dim * dim).enumerate() {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("non-finite entry at site {x}")));
            }
            norm_bound = norm_bound.max(spectral_norm(m, dim));
        }
        if norm_bound > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("site norm {norm_bound} exceeds 1")));
        }
        Ok(Self {
            dim,
            side,
            values,
            norm_bound,
        })
    }

    /// `b(x) = s(x)·Id` from per-site scalars.
    pub fn from_scalars(dim: usize, side: usize, scalars: &[f64]) -> Result<Self> {
        let mut values = vec![0.0; scalars.len() * dim * dim];
        for (x, s) in scalars.iter().enumerate() {
            for i in 0..dim {
                values[x * dim * dim + i * dim + i] = *s;
            }
        }
        Self::new(dim, side, values)
    }

    pub fn zeros(dim: usize, side: usize) -> Result<Self> {
        Self::from_scalars(dim, side, &vec![0.0; side.pow(dim as u32)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn sites(&self) -> usize {
        self.side.pow(self.dim as u32)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn site(&self, x: usize) -> &[f64] {
        let dd = self.dim * self.dim;
        &self.values[x * dd..(x + 1) * dd]
    }

    /// Certified `max_x |b(x)|`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn is_symmetric(&self) -> bool {
        let d = self.dim;
        self.values
            .chunks_exact(d * d)
            .all(|m| (0..d).all(|i| (0..i).all(|j| m[i * d + j] == m[j * d + i])))
    }

    pub fn negated(&self) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = -*v);
        out
    }

    /// Sample site mean of the `(i, j)` entry.
    pub fn entry_mean(&self, i: usize, j: usize) -> f64 {
        let d = self.dim;
        let v: Vec<f64> = self.values.chunks_exact(d * d).map(|m| m[i * d + j]).collect();
        pairwise_sum(&v) / v.len() as f64
    }
}

/// Draw sample `s` of the iid field.
pub fn sample_field(dist: Distribution, dim: usize, side: usize, s: u64, rng: &RngSpec) -> Result<LatticeField> {
    if side < 2 {
        return Err(Error::invalid(format!("side {side} must be at least 2")));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid(format!("dimension {dim} not in 1..=3")));
    }
    let sites = side.pow(dim as u32);
    let mut g = rng.stream(s);
    let mut values = vec![0.0; sites * dim * dim];
    for x in 0..sites {
        let m = &mut values[x * dim * dim..(x + 1) * dim * dim];
        match dist {
            Distribution::Rademacher => {
                let v = if g.next_u64() >> 63 == 1 { 1.0 } else { -1.0 };
                (0..dim).for_each(|i| m[i * dim + i] = v);
            }
            Distribution::Uniform => {
                let v = 2.0 * unit_interval(g.next_u64()) - 1.0;
                (0..dim).for_each(|i| m[i * dim + i] = v);
            }
            Distribution::DiagonalUniform => {
                (0..dim).for_each(|i| m[i * dim + i] = 2.0 * unit_interval(g.next_u64()) - 1.0);
            }
        }
    }
    LatticeField::new(dim, side, values)
}

/// Scalar two-point law `b = v_k·Id` with probability `p_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPoint {
    pub values: [f64; 2],
    pub probs: [f64; 2],
}

impl TwoPoint {
    pub fn rademacher() -> Self {
        Self {
            values: [-1.0, 1.0],
            probs: [0.5, 0.5],
        }
    }

    /// The one-point law `b ≡ v`.
    pub fn deterministic(v: f64) -> Self {
        Self {
            values: [v, v],
            probs: [1.0, 0.0],
        }
    }

    fn validate(&self) -> Result<()> {
        let s = self.probs[0] + self.probs[1];
        if self.probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (s - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("two-point probabilities must be in [0, 1] and sum to 1"));
        }
        if self.values.iter().any(|v| !(v.abs() <= 1.0)) {
            return Err(Error::invalid("two-point values must satisfy |v| ≤ 1"));
        }
        Ok(())
    }
}

/// `a^δ = Id − δb`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeMedium {
    field: LatticeField,
    delta: f64,
    a: Vec<f64>,
}

impl LatticeMedium {
    pub fn new(field: LatticeField, delta: f64) -> Result<Self> {
        if !(delta.abs() < 1.0) {
            return Err(Error::invalid(format!("|δ| = {} must be below 1", delta.abs())));
        }
        let d = field.dim;
        let mut a: Vec<f64> = field.values.iter().map(|v| -delta * v).collect();
        for m in a.chunks_exact_mut(d * d) {
            (0..d).for_each(|i| m[i * d + i] += 1.0);
        }
        Ok(Self { field, delta, a })
    }

    pub fn field(&self) -> &LatticeField {
        &self.field
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn dim(&self) -> usize {
        self.field.dim
    }

    pub fn side(&self) -> usize {
        self.field.side
    }

    /// `a(x)` row-major.
    pub fn coefficient(&self, x: usize) -> &[f64] {
        let dd = self.dim() * self.dim();
        &self.a[x * dd..(x + 1) * dd]
    }

    /// Ellipticity certificate `1 − |δ| max|b|`.
    pub fn lambda(&self) -> f64 {
        1.0 - self.delta.abs() * self.field.norm_bound
    }
}

/// Geometry of the torus: neighbour strides and the FFT.
struct Torus {
    d: usize,
    side: usize,
    sites: usize,
    fft: FftNd,
    lap: Vec<f64>,
}

impl Torus {
    fn new(d: usize, side: usize) -> Self {
        let sites = side.pow(d as u32);
        let mut lap = vec![0.0; sites];
        for (k, l) in lap.iter_mut().enumerate() {
            *l = symbol_m(&coords(k, d, side), side).iter().map(|m| m.norm_sqr()).sum();
        }
        Self {
            d,
            side,
            sites,
            fft: FftNd::new(d, side),
            lap,
        }
    }

    fn stride(&self, j: usize) -> usize {
        self.side.pow((self.d - 1 - j) as u32)
    }

    /// Index of `x ± e_j`.
    fn shift(&self, x: usize, j: usize, forward: bool) -> usize {
        let st = self.stride(j);
        let c = (x / st) % self.side;
        if forward {
            if c + 1 == self.side {
                x + st - self.side * st
            } else {
                x + st
            }
        } else if c == 0 {
            x + (self.side - 1) * st
        } else {
            x - st
        }
    }

    /// `∇u`, component-major.
    fn grad(&self, u: &[C64], out: &mut [C64]) {
        for j in 0..self.d {
            for x in 0..self.sites {
                out[j * self.sites + x] = u[self.shift(x, j, true)] - u[x];
            }
        }
    }

    /// `∇*·g = Σ_j g_j(x) − g_j(x−e_j)`.
    fn div(&self, g: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|o| *o = ZERO);
        for j in 0..self.d {
            let gj = &g[j * self.sites..(j + 1) * self.sites];
            for x in 0..self.sites {
                out[x] += gj[x] - gj[self.shift(x, j, false)];
            }
        }
    }

    /// `(−∇*·∇)^{-1}` on mean-free data, mean set to zero.
    fn inv_lap(&self, r: &[C64], out: &mut [C64]) {
        out.copy_from_slice(r);
        self.fft.forward(out);
        for (o, l) in out.iter_mut().zip(&self.lap) {
            *o = if *l > 0.0 { *o / *l } else { ZERO };
        }
        self.fft.inverse(out);
        let s = 1.0 / self.sites as f64;
        out.iter_mut().for_each(|o| *o *= s);
    }
}

fn coords(x: usize, d: usize, side: usize) -> Vec<i64> {
    let mut c = vec![0i64; d];
    let mut rem = x;
    for j in (0..d).rev() {
        c[j] = (rem % side) as i64;
        rem /= side;
    }
    c
}

/// `m_j(ξ) = e^{iξ_j} − 1` at `ξ = 2πk/L`.
pub fn symbol_m(k: &[i64], side: usize) -> Vec<C64> {
    k.iter()
        .map(|&kj| {
            let t = 2.0 * PI * kj as f64 / side as f64;
            C64::new(libm::cos(t) - 1.0, libm::sin(t))
        })
        .collect()
}

/// `ξ = 2πk/L` reduced to `(−π, π]ᵈ`.
pub fn dual_frequency(k: &[i64], side: usize) -> Vec<f64> {
    let l = side as i64;
    k.iter()
        .map(|&kj| {
            let mut r = kj.rem_euclid(l);
            if 2 * r > l {
                r -= l;
            }
            2.0 * PI * r as f64 / side as f64
        })
        .collect()
}

/// Output of [`solve_discrete`].
#[derive(Debug, Clone)]
pub struct LatticeSolve {
    pub u: Vec<C64>,
    pub iterations: usize,
    pub residual: f64,
}

fn apply_operator(t: &Torus, m: &LatticeMedium, u: &[C64], grad: &mut [C64], flux: &mut [C64], out: &mut [C64]) {
    let d = t.d;
    t.grad(u, grad);
    for x in 0..t.sites {
        let a = m.coefficient(x);
        for i in 0..d {
            let mut s = ZERO;
            for j in 0..d {
                s += grad[j * t.sites + x] * a[i * d + j];
            }
            flux[i * t.sites + x] = s;
        }
    }
    t.div(flux, out);
    out.iter_mut().for_each(|o| *o = -*o);
}

fn solve_scalar(t: &Torus, m: &LatticeMedium, rhs: &[C64], opts: &KrylovOptions) -> Result<LatticeSolve> {
    let mean: C64 = rhs.iter().sum::<C64>() / t.sites as f64;
    let scale = libm::sqrt(rhs.iter().map(|c| c.norm_sqr()).sum::<f64>());
    if mean.norm() > 1e-12 * scale.max(f64::MIN_POSITIVE) * libm::sqrt(t.sites as f64) {
        return Err(Error::invalid("right-hand side must have zero lattice mean"));
    }
    let mut grad = vec![ZERO; t.d * t.sites];
    let mut flux = vec![ZERO; t.d * t.sites];
    let apply = |u: &[C64], out: &mut [C64]| apply_operator(t, m, u, &mut grad, &mut flux, out);
    let precond = |r: &[C64], out: &mut [C64]| t.inv_lap(r, out);
    let out = if m.field.is_symmetric() {
        pcg(apply, precond, rhs, opts)?
    } else {
        bicgstab(apply, precond, rhs, opts)?
    };
    let mut u = out.x;
    let mu: C64 = u.iter().sum::<C64>() / t.sites as f64;
    u.iter_mut().for_each(|c| *c -= mu);
    Ok(LatticeSolve {
        u,
        iterations: out.iterations,
        residual: out.residual,
    })
}

fn check_tol(opts: &KrylovOptions) -> Result<()> {
    if !(opts.tol > 0.0 && opts.tol <= 1e-4) || opts.max_iter == 0 {
        return Err(Error::invalid("tolerance must lie in (0, 1e-4] with a positive iteration cap"));
    }
    Ok(())
}

/// Solve `−∇*·a∇u = ∇*·f` with `f` component-major (`d` blocks of `Lᵈ`).
pub fn solve_discrete(m: &LatticeMedium, f: &[C64], opts: &KrylovOptions) -> Result<LatticeSolve> {
    check_tol(opts)?;
    let t = Torus::new(m.dim(), m.side());
    if f.len() != t.d * t.sites {
        return Err(Error::GridMismatch {
            expected: t.d * t.sites,
            got: f.len(),
        });
    }
    let mut rhs = vec![ZERO; t.sites];
    t.div(f, &mut rhs);
    solve_scalar(&t, m, &rhs, opts)
}

/// Residual `‖−∇*·a∇u − ∇*·f‖ / ‖∇*·f‖`.
pub fn discrete_residual(m: &LatticeMedium, u: &[C64], f: &[C64]) -> f64 {
    let t = Torus::new(m.dim(), m.side());
    let mut rhs = vec![ZERO; t.sites];
    t.div(f, &mut rhs);
    let mut grad = vec![ZERO; t.d * t.sites];
    let mut flux = vec![ZERO; t.d * t.sites];
    let mut out = vec![ZERO; t.sites];
    apply_operator(&t, m, u, &mut grad, &mut flux, &mut out);
    let r: f64 = out.iter().zip(&rhs).map(|(a, b)| (a - b).norm_sqr()).sum();
    let b: f64 = rhs.iter().map(|c| c.norm_sqr()).sum();
    libm::sqrt(r / b.max(f64::MIN_POSITIVE))
}

/// `f(x) = e^{iξ·x} ê`, component-major.
pub fn plane_wave(d: usize, side: usize, k: &[i64], e: &[f64]) -> Vec<C64> {
    let sites = side.pow(d as u32);
    let xi = dual_frequency(k, side);
    let mut f = vec![ZERO; d * sites];
    for x in 0..sites {
        let c = coords(x, d, side);
        let ph: f64 = c.iter().zip(&xi).map(|(a, b)| *a as f64 * b).sum();
        let w = C64::new(libm::cos(ph), libm::sin(ph));
        for j in 0..d {
            f[j * sites + x] = w * e[j];
        }
    }
    f
}

/// `û(ξ) = L^{-d} Σ_x u(x) e^{−iξ·x}`.
pub fn mode_amplitude(u: &[C64], d: usize, side: usize, k: &[i64]) -> C64 {
    let xi = dual_frequency(k, side);
    let mut acc = ZERO;
    for (x, v) in u.iter().enumerate() {
        let c = coords(x, d, side);
        let ph: f64 = c.iter().zip(&xi).map(|(a, b)| *a as f64 * b).sum();
        acc += v * C64::new(libm::cos(ph), -libm::sin(ph));
    }
    acc / u.len() as f64
}

/// Probe `ê = ξ/|ξ|` and forcing symbol `ρ = −Σ conj(m_j) ê_j`.
fn probe(k: &[i64], side: usize) -> Result<(Vec<f64>, C64)> {
    let xi = dual_frequency(k, side);
    let n = libm::sqrt(xi.iter().map(|x| x * x).sum::<f64>());
    if n == 0.0 {
        return Err(Error::Inadmissible(xi));
    }
    let e: Vec<f64> = xi.iter().map(|x| x / n).collect();
    let rho = symbol_m(k, side).iter().zip(&e).map(|(m, ej)| -m.conj() * *ej).sum();
    Ok((e, rho))
}

/// `|m(ξ)|²`.
pub fn laplacian_symbol(k: &[i64], side: usize) -> f64 {
    symbol_m(k, side).iter().map(|m| m.norm_sqr()).sum()
}

/// Plane-wave response amplitude `û(ξ)` and full spectrum for one medium.
fn plane_wave_response(t: &Torus, m: &LatticeMedium, k: &[i64], e: &[f64], opts: &KrylovOptions) -> Result<(Vec<C64>, LatticeSolve)> {
    let f = plane_wave(t.d, t.side, k, e);
    let mut rhs = vec![ZERO; t.sites];
    t.div(&f, &mut rhs);
    let sol = solve_scalar(t, m, &rhs, opts)?;
    let mut spec = sol.u.clone();
    t.fft.forward(&mut spec);
    let s = 1.0 / t.sites as f64;
    spec.iter_mut().for_each(|c| *c *= s);
    Ok((spec, sol))
}

fn mode_index(k: &[i64], side: usize) -> usize {
    k.iter().fold(0usize, |acc, &kj| acc * side + kj.rem_euclid(side as i64) as usize)
}

/// Monte Carlo estimate of `B̂^δ_L(ξ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub dim: usize,
    pub side: usize,
    pub delta: f64,
    pub xi: Vec<f64>,
    pub value: C64,
    /// Delta-method standard error of `value`.
    pub stderr: f64,
    pub samples: usize,
    /// Sample mean of `û(ξ)`.
    pub amplitude: C64,
    /// `max_{ξ'≠ξ} |mean û(ξ')| / |mean û(ξ)|`.
    pub contamination: f64,
}

fn guard_3d(d: usize, side: usize, samples: usize) -> Result<()> {
    if d == 3 && side > MAX_SIDE_3D {
        return Err(Error::Guard {
            what: "lattice side in d = 3",
            value: side,
            limit: MAX_SIDE_3D,
        });
    }
    if d == 3 && samples > MAX_SAMPLES_3D {
        return Err(Error::Guard {
            what: "samples in d = 3",
            value: samples,
            limit: MAX_SAMPLES_3D,
        });
    }
    Ok(())
}

const BLOCK: usize = 256;

/// `B̂^δ_L(ξ) = ρ / E[û(ξ)]` with `ξ = 2πk/L` and `n` samples.
#[allow(clippy::too_many_arguments)]
pub fn mc_bhat<E: Executor>(
    dist: Distribution,
    d: usize,
    side: usize,
    delta: f64,
    k: &[i64],
    n: usize,
    rng: &RngSpec,
    opts: &KrylovOptions,
    exec: &E,
) -> Result<MCEstimate> {
    check_tol(opts)?;
    if n < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if k.len() != d {
        return Err(Error::invalid("frequency index has wrong length"));
    }
    guard_3d(d, side, n)?;
    let t = Torus::new(d, side);
    let (e, rho) = probe(k, side)?;
    let target = mode_index(k, side);
    let mut amps = Vec::with_capacity(n);
    let mut sums = vec![ZERO; t.sites];
    let mut start = 0;
    while start < n {
        let len = BLOCK.min(n - start);
        let block = exec.map(len, |i| -> Result<Vec<C64>> {
            let field = sample_field(dist, d, side, (start + i) as u64, rng)?;
            let m = LatticeMedium::new(field, delta)?;
            plane_wave_response(&t, &m, k, &e, opts).map(|r| r.0)
        });
        for spec in block {
            let spec = spec?;
            amps.push(spec[target]);
            sums.iter_mut().zip(&spec).for_each(|(s, v)| *s += v);
        }
        start += len;
    }
    let re: Vec<f64> = amps.iter().map(|c| c.re).collect();
    let im: Vec<f64> = amps.iter().map(|c| c.im).collect();
    let mu = C64::new(pairwise_sum(&re), pairwise_sum(&im)) / n as f64;
    if mu.norm() == 0.0 {
        return Err(Error::invalid("mean plane-wave amplitude vanished"));
    }
    let value = rho / mu;
    // linearized pseudo-values of ρ/μ
    let g = -rho / (mu * mu);
    let pre: Vec<f64> = amps.iter().map(|a| (value + g * (a - mu)).re).collect();
    let pim: Vec<f64> = amps.iter().map(|a| (value + g * (a - mu)).im).collect();
    let (_, se_re) = mean_stderr(&pre);
    let (_, se_im) = mean_stderr(&pim);
    let contamination = sums
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != target)
        .map(|(_, s)| s.norm() / n as f64)
        .fold(0.0, f64::max)
        / mu.norm();
    Ok(MCEstimate {
        dim: d,
        side,
        delta,
        xi: dual_frequency(k, side),
        value,
        stderr: libm::sqrt(se_re * se_re + se_im * se_im),
        samples: n,
        amplitude: mu,
        contamination,
    })
}

/// Exact `B̂^δ_L(ξ)` for a two-point law.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSymbol {
    pub value: C64,
    pub amplitude: C64,
    pub configurations: usize,
    /// `|m(ξ)|²`.
    pub laplacian: f64,
}

impl ExactSymbol {
    /// Whether `(1−|δ|)|m|² ≤ Re B̂ ≤ |m|²` holds up to a relative slack.
    pub fn within_band(&self, delta: f64, slack: f64) -> bool {
        let r = self.value.re / self.laplacian;
        r >= (1.0 - delta.abs()) * (1.0 - slack) && r <= 1.0 + slack
    }
}

/// Expectation over all `2^{Lᵈ}` configurations.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_exact<E: Executor>(
    d: usize,
    side: usize,
    law: &TwoPoint,
    delta: f64,
    k: &[i64],
    opts: &KrylovOptions,
    exec: &E,
) -> Result<ExactSymbol> {
    check_tol(opts)?;
    law.validate()?;
    if k.len() != d || !(1..=3).contains(&d) || side < 2 {
        return Err(Error::invalid("bad dimension, side or frequency index"));
    }
    let sites = side.pow(d as u32);
    if sites > ENUMERATION_LIMIT as usize {
        return Err(Error::Guard {
            what: "enumerated sites",
            value: sites,
            limit: ENUMERATION_LIMIT as usize,
        });
    }
    let t = Torus::new(d, side);
    let (e, rho) = probe(k, side)?;
    let target = mode_index(k, side);
    let total = 1usize << sites;
    let parts = exec.map(total, |c| -> Result<(f64, C64)> {
        let mut p = 1.0;
        let mut s = vec![0.0; sites];
        for (x, v) in s.iter_mut().enumerate() {
            let bit = (c >> x) & 1;
            p *= law.probs[bit];
            *v = law.values[bit];
        }
        if p == 0.0 {
            return Ok((0.0, ZERO));
        }
        let m = LatticeMedium::new(LatticeField::from_scalars(d, side, &s)?, delta)?;
        let (spec, _) = plane_wave_response(&t, &m, k, &e, opts)?;
        Ok((p, spec[target]))
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let re: Vec<f64> = parts.iter().map(|(p, a)| p * a.re).collect();
    let im: Vec<f64> = parts.iter().map(|(p, a)| p * a.im).collect();
    let amplitude = C64::new(pairwise_sum(&re), pairwise_sum(&im));
    Ok(ExactSymbol {
        value: rho / amplitude,
        amplitude,
        configurations: parts.iter().filter(|(p, _)| *p > 0.0).count(),
        laplacian: laplacian_symbol(k, side),
    })
}

/// Discrete correctors of a periodic lattice medium.
#[derive(Debug, Clone)]
pub struct DiscreteCorrectors {
    dim: usize,
    side: usize,
    order: usize,
    /// `phi[n][t]`: scalar per site.
    phi: Vec<Vec<Vec<f64>>>,
    /// `sigma[n][t]`: `d²` component-major blocks.
    sigma: Vec<Vec<Vec<f64>>>,
    /// `q[n][t]`: `d` component-major blocks.
    q: Vec<Vec<Vec<f64>>>,
    abar: Vec<Vec<f64>>,
    pub max_residual: f64,
    /// `max |∇*·q|`.
    pub flux_divergence: f64,
    /// `max |∇*·σ − q|` (row divergence).
    pub flux_identity: f64,
    pub iterations: usize,
}

impl DiscreteCorrectors {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn side(&self) -> usize {
        self.side
    }

    fn check(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.order {
            return Err(Error::OutOfRange(format!("order {n} outside 1..={}", self.order)));
        }
        Ok(())
    }

    /// `ā_L^n`, layout as in the continuum corrector set.
    pub fn homogenized_tensor(&self, n: usize) -> Result<&[f64]> {
        self.check(n)?;
        Ok(&self.abar[n])
    }

    pub fn phi_all(&self, n: usize) -> Result<&[Vec<f64>]> {
        self.check(n)?;
        Ok(&self.phi[n])
    }

    pub fn sigma_all(&self, n: usize) -> Result<&[Vec<f64>]> {
        self.check(n)?;
        Ok(&self.sigma[n])
    }

    pub fn q_all(&self, n: usize) -> Result<&[Vec<f64>]> {
        self.check(n)?;
        Ok(&self.q[n])
    }
}

/// Largest discrete corrector order.
pub const MAX_DISCRETE_ORDER: usize = 3;

/// Lattice version of the corrector recursion up to `order ≤ 3`.
pub fn discrete_correctors(m: &LatticeMedium, order: usize, opts: &KrylovOptions) -> Result<DiscreteCorrectors> {
    check_tol(opts)?;
    if order == 0 {
        return Err(Error::invalid("corrector order must be at least 1"));
    }
    if order > MAX_DISCRETE_ORDER {
        return Err(Error::Guard {
            what: "discrete corrector order",
            value: order,
            limit: MAX_DISCRETE_ORDER,
        });
    }
    let d = m.dim();
    let t = Torus::new(d, m.side());
    let ns = t.sites;
    let mut phi = vec![vec![vec![1.0; ns]]];
    let mut sigma = vec![vec![vec![0.0; d * d * ns]]];
    let mut q = vec![Vec::new()];
    let mut abar = vec![Vec::new()];
    let mut out = DiscreteCorrectors {
        dim: d,
        side: m.side(),
        order,
        phi: Vec::new(),
        sigma: Vec::new(),
        q: Vec::new(),
        abar: Vec::new(),
        max_residual: 0.0,
        flux_divergence: 0.0,
        flux_identity: 0.0,
        iterations: 0,
    };
    let mut grad = vec![ZERO; d * ns];
    let mut tmp = vec![ZERO; ns];
    for n in 1..=order {
        let parents = d.pow(n as u32 - 1);
        let mut np = Vec::with_capacity(parents * d);
        let mut ns_ = Vec::with_capacity(parents * d);
        let mut nq = Vec::with_capacity(parents * d);
        let mut ab = vec![0.0; parents * d * d];
        for p in 0..parents {
            for j in 0..d {
                // g = column j of (aφ − σ)
                let mut g = vec![ZERO; d * ns];
                for x in 0..ns {
                    let a = m.coefficient(x);
                    for i in 0..d {
                        g[i * ns + x] = C64::new(
                            a[i * d + j] * phi[n - 1][p][x] - sigma[n - 1][p][(i * d + j) * ns + x],
                            0.0,
                        );
                    }
                }
                let mut rhs = vec![ZERO; ns];
                t.div(&g, &mut rhs);
                let sol = solve_scalar(&t, m, &rhs, opts).map_err(|e| {
                    let mut idx = crate::correctors::tuple_of(p, n - 1, d);
                    idx.push(j);
                    e.at_corrector(n, &idx)
                })?;
                out.max_residual = out.max_residual.max(sol.residual);
                out.iterations += sol.iterations;
                t.grad(&sol.u, &mut grad);
                let mut flux = vec![0.0; d * ns];
                for x in 0..ns {
                    let a = m.coefficient(x);
                    for i in 0..d {
                        let mut s = g[i * ns + x].re;
                        for l in 0..d {
                            s += a[i * d + l] * grad[l * ns + x].re;
                        }
                        flux[i * ns + x] = s;
                    }
                }
                for i in 0..d {
                    let mean = pairwise_sum(&flux[i * ns..(i + 1) * ns]) / ns as f64;
                    ab[p * d * d + i * d + j] = mean;
                    flux[i * ns..(i + 1) * ns].iter_mut().for_each(|v| *v -= mean);
                }
                // σ_il = (−Δ)^{-1}(∇_i q_l − ∇_l q_i)
                let qc: Vec<C64> = flux.iter().map(|v| C64::new(*v, 0.0)).collect();
                let mut gq = vec![ZERO; d * d * ns];
                for l in 0..d {
                    t.grad(&qc[l * ns..(l + 1) * ns], &mut grad);
                    for i in 0..d {
                        // gq[(i,l)] = ∇_i q_l
                        gq[(i * d + l) * ns..(i * d + l + 1) * ns].copy_from_slice(&grad[i * ns..(i + 1) * ns]);
                    }
                }
                let mut sig = vec![0.0; d * d * ns];
                let mut src = vec![ZERO; ns];
                let mut res = vec![ZERO; ns];
                for i in 0..d {
                    for l in 0..d {
                        for x in 0..ns {
                            src[x] = gq[(i * d + l) * ns + x] - gq[(l * d + i) * ns + x];
                        }
                        t.inv_lap(&src, &mut res);
                        for x in 0..ns {
                            sig[(i * d + l) * ns + x] = res[x].re;
                        }
                    }
                }
                // diagnostics
                t.div(&qc, &mut tmp);
                out.flux_divergence = out.flux_divergence.max(tmp.iter().map(|c| c.norm()).fold(0.0, f64::max));
                for i in 0..d {
                    let mut row = vec![ZERO; d * ns];
                    for l in 0..d {
                        for x in 0..ns {
                            row[l * ns + x] = C64::new(sig[(i * d + l) * ns + x], 0.0);
                        }
                    }
                    t.div(&row, &mut tmp);
                    for x in 0..ns {
                        out.flux_identity = out.flux_identity.max((tmp[x].re - flux[i * ns + x]).abs());
                    }
                }
                np.push(sol.u.iter().map(|c| c.re).collect());
                ns_.push(sig);
                nq.push(flux);
            }
        }
        phi.push(np);
        sigma.push(ns_);
        q.push(nq);
        abar.push(ab);
    }
    out.phi = phi;
    out.sigma = sigma;
    out.q = q;
    out.abar = abar;
    Ok(out)
}

/// One row of the periodization table.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodizationRow {
    pub side: usize,
    pub order: usize,
    /// Mean of the entries of `ā_L^n`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Number of antithetic pairs.
    pub pairs: usize,
}

impl PeriodizationRow {
    /// Frobenius distance between the means of two rows.
    pub fn distance(&self, other: &PeriodizationRow) -> f64 {
        libm::sqrt(self.mean.iter().zip(&other.mean).map(|(a, b)| (a - b) * (a - b)).sum())
    }
}

/// `E[ā_L^n]` for each side `L`, estimated from antithetic pairs `(b, −b)`.
#[allow(clippy::too_many_arguments)]
pub fn periodization_experiment<E: Executor>(
    dist: Distribution,
    d: usize,
    delta: f64,
    sides: &[usize],
    order: usize,
    pairs: usize,
    rng: &RngSpec,
    opts: &KrylovOptions,
    exec: &E,
) -> Result<Vec<PeriodizationRow>> {
    if order == 0 || order > 2 {
        return Err(Error::Guard {
            what: "periodization order",
            value: order,
            limit: 2,
        });
    }
    if pairs < 2 {
        return Err(Error::invalid("need at least two sample pairs"));
    }
    if sides.is_empty() || sides.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("side list must be nonempty and increasing"));
    }
    let mut rows = Vec::with_capacity(sides.len());
    for &side in sides {
        guard_3d(d, side, 2 * pairs)?;
        let per = exec.map(pairs, |s| -> Result<Vec<f64>> {
            let b = sample_field(dist, d, side, s as u64, rng)?;
            let plus = discrete_correctors(&LatticeMedium::new(b.clone(), delta)?, order, opts)?;
            let minus = discrete_correctors(&LatticeMedium::new(b.negated(), delta)?, order, opts)?;
            Ok(plus
                .homogenized_tensor(order)?
                .iter()
                .zip(minus.homogenized_tensor(order)?)
                .map(|(x, y)| 0.5 * (x + y))
                .collect())
        });
        let per = per.into_iter().collect::<Result<Vec<_>>>()?;
        let entries = per[0].len();
        let mut mean = Vec::with_capacity(entries);
        let mut stderr = Vec::with_capacity(entries);
        for c in 0..entries {
            let col: Vec<f64> = per.iter().map(|v| v[c]).collect();
            let (mu, se) = mean_stderr(&col);
            mean.push(mu);
            stderr.push(se);
        }
        rows.push(PeriodizationRow {
            side,
            order,
            mean,
            stderr,
            pairs,
        });
    }
    Ok(rows)
}

/// Second differences `v_{i+1} − 2v_i + v_{i−1}` of a sequence sampled along a ray.
pub fn second_differences(v: &[f64]) -> Vec<f64> {
    v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect()
}

impl core::fmt::Display for Distribution {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.tag())
    }
}
