//! Periodic media and elliptic solves on the unit cell.
//!
//! The corrector problem `−∇·a∇φ = ∇·g` and the shifted (Bloch) problem
//! `−(∇+iξ)·a(∇+iξ)v = iξ·ê` are solved by Galerkin truncation to the
//! retained Fourier modes. Products with `a` are evaluated on the grid and
//! truncated, so the discrete operator is `P_M a P_M`.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::DMatrix;

use crate::fourier::{FrequencyLattice, Rank, SpectralField};
use crate::linalg::{bicgstab, pcg, KrylovOptions};
use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Closed-form pointwise coefficient `x ↦ a(x)` (row-major `d×d` output).
#[derive(Clone)]
pub struct FieldFn {
    pub name: String,
    pub func: Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>,
}

impl fmt::Debug for FieldFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FieldFn({})", self.name)
    }
}

/// How to build a periodic medium on a given lattice.
#[derive(Debug, Clone)]
pub enum MediumDescriptor {
    /// `a ≡ Id`.
    Identity,
    /// `a(x) = Id / (2 + cos 2πx_axis)`, using its exact Fourier series.
    InverseCosine { axis: usize },
    /// `a(x) = (1 + amplitude · cos 2πx_axis) Id`.
    Laminate { amplitude: f64, axis: usize },
    /// Explicit Fourier modes: each entry is a mode `k` and its `d×d` coefficient (row-major).
    Modes(Vec<(Vec<i64>, Vec<C64>)>),
    /// Closed-form expression, sampled on a fine grid and projected.
    Function(FieldFn),
    /// Constant on each of the `side^d` subcells; `values` holds `d×d` entries per cell,
    /// cells in row-major order. Projected with exact cell integrals.
    PiecewiseConstant { side: usize, values: Vec<f64> },
}

impl MediumDescriptor {
    pub fn name(&self) -> String {
        match self {
            MediumDescriptor::Identity => "identity".into(),
            MediumDescriptor::InverseCosine { axis } => format!("inverse-cosine(axis={axis})"),
            MediumDescriptor::Laminate { amplitude, axis } => {
                format!("laminate(amplitude={amplitude},axis={axis})")
            }
            MediumDescriptor::Modes(m) => format!("modes({})", m.len()),
            MediumDescriptor::Function(f) => format!("function({})", f.name),
            MediumDescriptor::PiecewiseConstant { side, .. } => format!("piecewise-constant(side={side})"),
        }
    }

    fn coefficients(&self, lattice: &FrequencyLattice) -> Result<SpectralField> {
        let d = lattice.dim();
        let n = lattice.len();
        let dd = d * d;
        let mut data = vec![ZERO; dd * n];
        let z = lattice.zero_index();
        let diag = |data: &mut Vec<C64>, idx: usize, v: C64| {
            for i in 0..d {
                data[(i * d + i) * n + idx] = v;
            }
        };
        let check_axis = |axis: usize| {
            if axis >= d {
                Err(Error::invalid(format!("axis {axis} out of range for d = {d}")))
            } else {
                Ok(())
            }
        };
        match self {
            MediumDescriptor::Identity => diag(&mut data, z, C64::new(1.0, 0.0)),
            MediumDescriptor::InverseCosine { axis } => {
                check_axis(*axis)?;
                // 1/(2 + cos t) = Σ_k r^{|k|} e^{ikt} / √3 with r = √3 − 2
                let s3 = libm::sqrt(3.0);
                let r = s3 - 2.0;
                for idx in 0..n {
                    let k = lattice.mode(idx);
                    if (0..d).any(|j| j != *axis && k[j] != 0) {
                        continue;
                    }
                    let m = k[*axis].unsigned_abs() as i32;
                    diag(&mut data, idx, C64::new(libm::pow(r, m as f64) / s3, 0.0));
                }
            }
            MediumDescriptor::Laminate { amplitude, axis } => {
                check_axis(*axis)?;
                diag(&mut data, z, C64::new(1.0, 0.0));
                let mut k = vec![0i64; d];
                for s in [-1i64, 1] {
                    k[*axis] = s;
                    let idx = lattice.index_of(&k).expect("M ≥ 1");
                    diag(&mut data, idx, C64::new(0.5 * amplitude, 0.0));
                }
            }
            MediumDescriptor::Modes(modes) => {
                for (k, vals) in modes {
                    if vals.len() != dd {
                        return Err(Error::invalid(format!(
                            "mode {k:?} carries {} entries, expected {dd}",
                            vals.len()
                        )));
                    }
                    let idx = lattice
                        .index_of(k)
                        .ok_or_else(|| Error::invalid(format!("mode {k:?} outside the lattice")))?;
                    for (c, v) in vals.iter().enumerate() {
                        data[c * n + idx] += *v;
                    }
                }
            }
            MediumDescriptor::Function(f) => {
                let fine = (4 * (2 * lattice.modes() + 1)).max(lattice.grid()).next_power_of_two();
                let fl = FrequencyLattice::new(d, lattice.modes(), fine)?;
                let func = f.func.clone();
                let field = SpectralField::from_fn(&fl, Rank::Matrix, move |x, v| func(x, v))?;
                data.copy_from_slice(field.coefficients());
            }
            MediumDescriptor::PiecewiseConstant { side, values } => {
                let cells = side.pow(d as u32);
                if *side == 0 || values.len() != cells * dd {
                    return Err(Error::invalid(format!(
                        "piecewise-constant medium needs {} values for side {side}",
                        cells * dd
                    )));
                }
                let h = 1.0 / *side as f64;
                // ∫_{jh}^{(j+1)h} e^{-2πikx} dx per axis
                let integral = |k: i64, j: usize| -> C64 {
                    if k == 0 {
                        return C64::new(h, 0.0);
                    }
                    let w = 2.0 * PI * k as f64;
                    let a = -w * j as f64 * h;
                    let b = -w * (j + 1) as f64 * h;
                    let ea = C64::new(libm::cos(a), libm::sin(a));
                    let eb = C64::new(libm::cos(b), libm::sin(b));
                    (eb - ea) / C64::new(0.0, -w)
                };
                for idx in 0..n {
                    let k = lattice.mode(idx);
                    for cell in 0..cells {
                        let mut rem = cell;
                        let mut w = C64::new(1.0, 0.0);
                        for j in (0..d).rev() {
                            w *= integral(k[j], rem % side);
                            rem /= side;
                        }
                        for c in 0..dd {
                            data[c * n + idx] += w * values[cell * dd + c];
                        }
                    }
                }
            }
        }
        let mut field = SpectralField::from_coefficients(lattice, Rank::Matrix, data)?;
        if !field.is_real() {
            return Err(Error::invalid("coefficient field is not real-valued"));
        }
        field.enforce_reality();
        Ok(field)
    }
}

/// Validated periodic medium with a certified ellipticity constant.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    descriptor: MediumDescriptor,
    field: SpectralField,
    grid_values: Arc<Vec<f64>>,
    lambda: f64,
    bound: f64,
    symmetric: bool,
}

/// Smallest eigenvalue of the symmetric part and operator norm of a small real matrix.
fn pointwise_bounds(m: &[f64], d: usize) -> (f64, f64) {
    let a = DMatrix::from_row_slice(d, d, m);
    let sym = (&a + a.transpose()) * 0.5;
    let lo = sym.symmetric_eigenvalues().min();
    let ata = a.transpose() * &a;
    let hi = libm::sqrt(ata.symmetric_eigenvalues().max().max(0.0));
    (lo, hi)
}

impl CoefficientField {
    pub fn new(lattice: &FrequencyLattice, descriptor: MediumDescriptor) -> Result<Self> {
        let field = descriptor.coefficients(lattice)?;
        Self::certify(descriptor, field)
    }

    /// Medium from explicit matrix coefficients on a lattice.
    pub fn from_field(field: SpectralField) -> Result<Self> {
        if field.rank() != Rank::Matrix {
            return Err(Error::invalid("coefficient field must be matrix-valued"));
        }
        if field.hermitian_defect() > crate::fourier::REALITY_TOL {
            return Err(Error::invalid("coefficient field is not real-valued"));
        }
        let l = field.lattice().clone();
        let dd = l.dim() * l.dim();
        let mut modes = Vec::new();
        for idx in 0..l.len() {
            let vals: Vec<C64> = (0..dd).map(|c| field.component_coefficients(c)[idx]).collect();
            if vals.iter().any(|v| *v != ZERO) {
                let k = l.mode(idx);
                modes.push((k[..l.dim()].to_vec(), vals));
            }
        }
        Self::certify(MediumDescriptor::Modes(modes), field)
    }

    fn certify(descriptor: MediumDescriptor, mut field: SpectralField) -> Result<Self> {
        field.enforce_reality();
        let l = field.lattice().clone();
        let d = l.dim();
        let dd = d * d;
        let g = l.grid_len();
        let samples = field.to_samples();
        let grid_values: Vec<f64> = samples.iter().map(|c| c.re).collect();
        let mut lambda = f64::INFINITY;
        let mut bound: f64 = 0.0;
        let mut worst = 0usize;
        let mut m = vec![0.0; dd];
        for p in 0..g {
            for c in 0..dd {
                m[c] = grid_values[c * g + p];
            }
            let (lo, hi) = pointwise_bounds(&m, d);
            if lo < lambda {
                lambda = lo;
                worst = p;
            }
            bound = bound.max(hi);
        }
        if lambda.is_nan() || lambda <= 0.0 {
            let n = l.grid();
            let mut point = vec![0usize; d];
            let mut rem = worst;
            for j in (0..d).rev() {
                point[j] = rem % n;
                rem /= n;
            }
            return Err(Error::Ellipticity {
                point,
                eigenvalue: lambda,
            });
        }
        let mut asym: f64 = 0.0;
        let scale = field.l2_norm();
        for i in 0..d {
            for j in 0..i {
                let (a, b) = (field.component_coefficients(i * d + j), field.component_coefficients(j * d + i));
                for (x, y) in a.iter().zip(b) {
                    asym = asym.max((x - y).norm());
                }
            }
        }
        Ok(CoefficientField {
            descriptor,
            field,
            grid_values: Arc::new(grid_values),
            lambda,
            bound,
            symmetric: asym <= 1e-14 * scale.max(1.0),
        })
    }

    /// Same medium represented on another lattice.
    pub fn on_lattice(&self, lattice: &FrequencyLattice) -> Result<Self> {
        if let MediumDescriptor::Modes(_) = self.descriptor {
            // pad or truncate the explicit coefficients
            let src = self.field.lattice();
            let dd = lattice.dim() * lattice.dim();
            let mut data = vec![ZERO; dd * lattice.len()];
            for idx in 0..src.len() {
                let k = src.mode(idx);
                if let Some(j) = lattice.index_of(&k[..src.dim()]) {
                    for c in 0..dd {
                        data[c * lattice.len() + j] = self.field.component_coefficients(c)[idx];
                    }
                }
            }
            let f = SpectralField::from_coefficients(lattice, Rank::Matrix, data)?;
            return Self::from_field(f);
        }
        Self::new(lattice, self.descriptor.clone())
    }

    /// The translated medium `a(· + z)`.
    pub fn translated(&self, z: &[f64]) -> Result<Self> {
        Self::from_field(self.field.translated(z))
    }

    pub fn descriptor(&self) -> &MediumDescriptor {
        &self.descriptor
    }

    pub fn field(&self) -> &SpectralField {
        &self.field
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        self.field.lattice()
    }

    pub fn dim(&self) -> usize {
        self.lattice().dim()
    }

    /// Certified ellipticity constant: min over grid points of the smallest
    /// eigenvalue of the symmetric part.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest pointwise operator norm on the grid.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Cell average `⟨a⟩` (row-major).
    pub fn mean(&self) -> Vec<f64> {
        self.field.mean().iter().map(|c| c.re).collect()
    }

    /// Grid samples of entry `(i, j)`.
    pub fn grid_entry(&self, i: usize, j: usize) -> &[f64] {
        let g = self.lattice().grid_len();
        let c = i * self.dim() + j;
        &self.grid_values[c * g..(c + 1) * g]
    }

    /// `a · v` evaluated on the grid and truncated.
    pub fn apply(&self, v: &SpectralField) -> Result<SpectralField> {
        crate::fourier::pointwise_product(&self.field, v)
    }
}

/// Krylov method used for elliptic solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KrylovMethod {
    /// Conjugate gradients for symmetric media, BiCGStab otherwise.
    #[default]
    Auto,
    ConjugateGradient,
    BiCgStab,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EllipticSolveOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: KrylovMethod,
}

impl Default for EllipticSolveOptions {
    fn default() -> Self {
        EllipticSolveOptions {
            tol: 1e-10,
            max_iter: 1000,
            method: KrylovMethod::Auto,
        }
    }
}

impl EllipticSolveOptions {
    pub fn with_tol(tol: f64) -> Self {
        EllipticSolveOptions {
            tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(Error::invalid(format!("tolerance {} not in (0, 1e-4]", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be positive"));
        }
        Ok(())
    }
}

/// Result of a cell or Bloch solve.
#[derive(Debug, Clone)]
pub struct Solve {
    pub field: SpectralField,
    pub iterations: usize,
    /// Final relative residual of the Galerkin system.
    pub residual: f64,
}

/// `x ↦ −(∇+iξ)·P_M[a (∇+iξ) x]` on coefficient vectors.
pub(crate) struct ShiftedOperator<'a> {
    a: &'a CoefficientField,
    shift: [f64; 3],
    coeff: Vec<C64>,
    grads: Vec<C64>,
    flux: Vec<C64>,
}

impl<'a> ShiftedOperator<'a> {
    pub(crate) fn new(a: &'a CoefficientField, shift: &[f64]) -> Self {
        let l = a.lattice();
        let d = l.dim();
        let g = l.grid_len();
        let mut s = [0.0; 3];
        s[..d].copy_from_slice(&shift[..d]);
        ShiftedOperator {
            a,
            shift: s,
            coeff: vec![ZERO; l.len()],
            grads: vec![ZERO; d * g],
            flux: vec![ZERO; d * g],
        }
    }

    pub(crate) fn apply(&mut self, x: &[C64], out: &mut [C64]) {
        let l = self.a.lattice();
        let d = l.dim();
        let g = l.grid_len();
        let n = l.len();
        for j in 0..d {
            for idx in 0..n {
                let kj = l.wavevector(idx)[j] + self.shift[j];
                self.coeff[idx] = C64::new(0.0, kj) * x[idx];
            }
            l.synthesize(&self.coeff, &mut self.grads[j * g..(j + 1) * g]);
        }
        for i in 0..d {
            let dst = &mut self.flux[i * g..(i + 1) * g];
            dst.iter_mut().for_each(|v| *v = ZERO);
            for j in 0..d {
                let aij = self.a.grid_entry(i, j);
                let src = &self.grads[j * g..(j + 1) * g];
                for p in 0..g {
                    dst[p] += src[p] * aij[p];
                }
            }
        }
        out.iter_mut().for_each(|v| *v = ZERO);
        for i in 0..d {
            l.analyze(&mut self.flux[i * g..(i + 1) * g], &mut self.coeff);
            for idx in 0..n {
                let ki = l.wavevector(idx)[i] + self.shift[i];
                out[idx] -= C64::new(0.0, ki) * self.coeff[idx];
            }
        }
    }
}

fn shifted_laplacian_inverse(l: &FrequencyLattice, shift: &[f64]) -> Vec<f64> {
    let d = l.dim();
    (0..l.len())
        .map(|idx| {
            let k = l.wavevector(idx);
            let q: f64 = (0..d).map(|j| (k[j] + shift[j]) * (k[j] + shift[j])).sum();
            if q == 0.0 {
                0.0
            } else {
                1.0 / q
            }
        })
        .collect()
}

fn krylov(a: &CoefficientField, shift: &[f64], rhs: &[C64], opts: &EllipticSolveOptions) -> Result<Solve> {
    opts.validate()?;
    let l = a.lattice();
    let pre = shifted_laplacian_inverse(l, shift);
    let mut op = ShiftedOperator::new(a, shift);
    let kopts = KrylovOptions {
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let precond = |r: &[C64], z: &mut [C64]| {
        for i in 0..r.len() {
            z[i] = r[i] * pre[i];
        }
    };
    let use_cg = match opts.method {
        KrylovMethod::Auto => a.is_symmetric(),
        KrylovMethod::ConjugateGradient => true,
        KrylovMethod::BiCgStab => false,
    };
    let out = if use_cg {
        pcg(|x, y| op.apply(x, y), precond, rhs, &kopts)?
    } else {
        bicgstab(|x, y| op.apply(x, y), precond, rhs, &kopts)?
    };
    let field = SpectralField::from_coefficients(l, Rank::Scalar, out.x)?;
    Ok(Solve {
        field,
        iterations: out.iterations,
        residual: out.residual,
    })
}

/// Solve `−∇·a∇φ = ∇·g` for mean-zero periodic `φ`.
pub fn solve_cell(a: &CoefficientField, g: &SpectralField, opts: &EllipticSolveOptions) -> Result<Solve> {
    if g.rank() != Rank::Vector || g.lattice() != a.lattice() {
        return Err(Error::Incompatible("forcing must be a vector field on the medium's lattice".into()));
    }
    let rhs = g.divergence()?;
    let mut out = krylov(a, &[0.0; 3], rhs.coefficients(), opts)?;
    if g.is_real() {
        out.field.enforce_reality();
    }
    Ok(out)
}

/// Whether `ξ` lies in the open cube `0 < |ξ|, |ξ_j| < 2π` where the shifted
/// problem is uniquely solvable.
pub fn is_admissible(xi: &[f64]) -> bool {
    xi.iter().all(|x| x.is_finite() && x.abs() < 2.0 * PI) && xi.iter().any(|x| *x != 0.0)
}

pub(crate) fn check_admissible(xi: &[f64], d: usize) -> Result<()> {
    if xi.len() != d {
        return Err(Error::invalid(format!("frequency has {} components, expected {d}", xi.len())));
    }
    if !is_admissible(xi) {
        return Err(Error::Inadmissible(xi.to_vec()));
    }
    let norm = libm::sqrt(xi.iter().map(|x| x * x).sum::<f64>());
    if norm < 1e-3 {
        log::warn!("|ξ| = {norm:e} < 1e-3: shifted cell problem is poorly conditioned");
    }
    Ok(())
}

/// Bloch solve: the periodic amplitude `v` and its mean `v̄`.
#[derive(Debug, Clone)]
pub struct BlochSolve {
    pub v: SpectralField,
    pub mean: C64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solve `−(∇+iξ)·a(∇+iξ)v = iξ·ê` for periodic `v`.
pub fn solve_bloch(a: &CoefficientField, xi: &[f64], e: &[f64], opts: &EllipticSolveOptions) -> Result<BlochSolve> {
    let d = a.dim();
    check_admissible(xi, d)?;
    if e.len() != d {
        return Err(Error::invalid("probe direction has wrong length"));
    }
    let s: f64 = xi.iter().zip(e).map(|(x, y)| x * y).sum();
    let mut rhs = vec![ZERO; a.lattice().len()];
    rhs[a.lattice().zero_index()] = C64::new(0.0, s);
    solve_bloch_rhs(a, xi, &rhs, opts).map(|out| {
        let mean = out.field.mean()[0];
        BlochSolve {
            v: out.field,
            mean,
            iterations: out.iterations,
            residual: out.residual,
        }
    })
}

/// Solve `−(∇+iξ)·a(∇+iξ)v = r` for a general right-hand side given by coefficients.
pub fn solve_bloch_rhs(a: &CoefficientField, xi: &[f64], rhs: &[C64], opts: &EllipticSolveOptions) -> Result<Solve> {
    check_admissible(xi, a.dim())?;
    krylov(a, xi, rhs, opts)
}

/// Residual `‖−(∇+iξ)·P_M a(∇+iξ)v − r‖ / ‖r‖` of a candidate solution.
pub fn shifted_residual(a: &CoefficientField, xi: &[f64], v: &SpectralField, rhs: &[C64]) -> f64 {
    let mut op = ShiftedOperator::new(a, xi);
    let mut out = vec![ZERO; rhs.len()];
    op.apply(v.coefficients(), &mut out);
    let r: f64 = out.iter().zip(rhs).map(|(x, y)| (x - y).norm_sqr()).sum();
    let b: f64 = rhs.iter().map(|y| y.norm_sqr()).sum();
    libm::sqrt(r / b.max(f64::MIN_POSITIVE))
}
