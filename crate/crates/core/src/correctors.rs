//! Higher-order correctors, fluxes, flux correctors and homogenized tensors.
//!
//! For a tuple `I = (I', j)` of length `n` the recursion is
//!
//! ```text
//! −∇·a∇φⁿ_I = ∇·((aφⁿ⁻¹_{I'} − σⁿ⁻¹_{I'}) e_j)
//! āⁿ_{I'} e_j = ⟨a∇φⁿ_I + aφⁿ⁻¹_{I'} e_j⟩
//! qⁿ_I = a∇φⁿ_I + (aφⁿ⁻¹_{I'} − σⁿ⁻¹_{I'}) e_j − āⁿ_{I'} e_j
//! −Δσⁿ_I = ∇×qⁿ_I,   ∇·σⁿ_I = qⁿ_I
//! ```
//!
//! starting from `φ⁰ = 1`, `σ⁰ = 0`. Tuples are stored flat in lexicographic
//! order, `(i₁,…,iₙ) ↦ Σ_m i_m d^{n−m}`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cell::{solve_cell, CoefficientField, EllipticSolveOptions};
use crate::exec::Executor;
use crate::fourier::{pointwise_product, Rank, SpectralField};
use crate::{Error, Result, C64};

/// Largest corrector order allowed per dimension.
pub fn order_guard(d: usize) -> usize {
    match d {
        1 => 8,
        2 => 6,
        _ => 4,
    }
}

/// Decode a flat tuple index of length `n`.
pub fn tuple_of(flat: usize, n: usize, d: usize) -> Vec<usize> {
    let mut t = vec![0; n];
    let mut rem = flat;
    for m in (0..n).rev() {
        t[m] = rem % d;
        rem /= d;
    }
    t
}

pub fn flat_of(tuple: &[usize], d: usize) -> usize {
    tuple.iter().fold(0, |acc, &i| acc * d + i)
}

/// Per-order consistency checks recorded while building the hierarchy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OrderDiagnostics {
    pub order: usize,
    /// `max_I |∫ qⁿ_I|`.
    pub flux_mean: f64,
    /// `max_I ‖∇·σⁿ_I − qⁿ_I‖`.
    pub flux_identity: f64,
    /// `max_I ‖∇·qⁿ_I‖`.
    pub flux_divergence: f64,
    /// `max_I ‖−Δσⁿ_I − ∇×qⁿ_I‖`.
    pub curl_identity: f64,
    /// Largest imaginary part among the entries of `āⁿ`.
    pub abar_imag: f64,
    pub max_residual: f64,
    pub iterations: usize,
}

/// The corrector hierarchy up to a given order.
#[derive(Debug, Clone)]
pub struct CorrectorSet {
    medium: CoefficientField,
    order: usize,
    phi: Vec<Vec<SpectralField>>,
    sigma: Vec<Vec<SpectralField>>,
    q: Vec<Vec<SpectralField>>,
    abar: Vec<Vec<f64>>,
    diagnostics: Vec<OrderDiagnostics>,
}

struct IndexSolve {
    phi: SpectralField,
    q: SpectralField,
    sigma: SpectralField,
    column: Vec<C64>,
    residual: f64,
    iterations: usize,
}

/// Build `φⁿ, σⁿ, qⁿ, āⁿ` for `1 ≤ n ≤ order`.
pub fn compute_correctors<E: Executor>(
    a: &CoefficientField,
    order: usize,
    opts: &EllipticSolveOptions,
    exec: &E,
) -> Result<CorrectorSet> {
    let l = a.lattice().clone();
    let d = l.dim();
    if order < 1 {
        return Err(Error::invalid("corrector order must be at least 1"));
    }
    if order > order_guard(d) {
        return Err(Error::Guard {
            what: "corrector order",
            value: order,
            limit: order_guard(d),
        });
    }
    opts.validate()?;
    let mut phi = vec![vec![SpectralField::constant(&l, 1.0)]];
    let mut sigma = vec![vec![SpectralField::zeros(&l, Rank::Matrix)]];
    let mut q = vec![Vec::new()];
    let mut abar = vec![Vec::new()];
    let mut diagnostics = Vec::new();
    for n in 1..=order {
        let count = d.pow(n as u32);
        let prev_phi = &phi[n - 1];
        let prev_sigma = &sigma[n - 1];
        // aφⁿ⁻¹ − σⁿ⁻¹ for each parent tuple
        let parents: Vec<Result<SpectralField>> = exec.map(count / d, |p| {
            pointwise_product(&prev_phi[p], a.field())?.sub(&prev_sigma[p])
        });
        let parents = parents.into_iter().collect::<Result<Vec<_>>>()?;
        let solves: Vec<Result<IndexSolve>> = exec.map(count, |t| {
            let (p, j) = (t / d, t % d);
            let parts: Vec<SpectralField> = (0..d).map(|k| parents[p].component(k * d + j)).collect();
            let g = SpectralField::stack(Rank::Vector, &parts)?;
            let solve = solve_cell(a, &g, opts).map_err(|e| e.at_corrector(n, &tuple_of(t, n, d)))?;
            let flux = a.apply(&solve.field.gradient()?)?.add(&g)?;
            let column = flux.mean();
            let mut qf = flux;
            for (k, c) in column.iter().enumerate() {
                qf.add_constant(k, -*c);
            }
            let sigma = qf.curl()?.inverse_laplacian().map_err(|e| e.at_corrector(n, &tuple_of(t, n, d)))?;
            Ok(IndexSolve {
                phi: solve.field,
                q: qf,
                sigma,
                column,
                residual: solve.residual,
                iterations: solve.iterations,
            })
        });
        let solves = solves.into_iter().collect::<Result<Vec<_>>>()?;
        let mut diag = OrderDiagnostics {
            order: n,
            ..OrderDiagnostics::default()
        };
        let mut tensor = vec![0.0; (count / d) * d * d];
        for (t, s) in solves.iter().enumerate() {
            let (p, j) = (t / d, t % d);
            for (k, c) in s.column.iter().enumerate() {
                tensor[p * d * d + k * d + j] = c.re;
                diag.abar_imag = diag.abar_imag.max(c.im.abs());
            }
            for m in s.q.mean() {
                diag.flux_mean = diag.flux_mean.max(m.norm());
            }
            diag.flux_identity = diag
                .flux_identity
                .max(s.sigma.matrix_divergence()?.sub(&s.q)?.l2_norm());
            diag.flux_divergence = diag.flux_divergence.max(s.q.divergence()?.l2_norm());
            diag.curl_identity = diag
                .curl_identity
                .max(s.sigma.neg_laplacian().sub(&s.q.curl()?)?.l2_norm());
            diag.max_residual = diag.max_residual.max(s.residual);
            diag.iterations += s.iterations;
        }
        let mut np = Vec::with_capacity(count);
        let mut ns = Vec::with_capacity(count);
        let mut nq = Vec::with_capacity(count);
        for s in solves {
            np.push(s.phi);
            ns.push(s.sigma);
            nq.push(s.q);
        }
        phi.push(np);
        sigma.push(ns);
        q.push(nq);
        abar.push(tensor);
        diagnostics.push(diag);
    }
    Ok(CorrectorSet {
        medium: a.clone(),
        order,
        phi,
        sigma,
        q,
        abar,
        diagnostics,
    })
}

impl CorrectorSet {
    /// Reassemble a set from stored fields (e.g. after deserialization).
    pub fn from_parts(
        medium: CoefficientField,
        phi: Vec<Vec<SpectralField>>,
        sigma: Vec<Vec<SpectralField>>,
        q: Vec<Vec<SpectralField>>,
        abar: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = medium.dim();
        let order = phi.len().saturating_sub(1);
        for n in 0..=order {
            let count = d.pow(n as u32);
            let ok = phi[n].len() == count
                && sigma.get(n).map(|s| s.len()) == Some(count)
                && q.get(n).map(|s| s.len()) == Some(if n == 0 { 0 } else { count })
                && abar.get(n).map(|s| s.len()) == Some(if n == 0 { 0 } else { count * d });
            if !ok {
                return Err(Error::invalid(format!("inconsistent tensor sizes at order {n}")));
            }
        }
        Ok(CorrectorSet {
            medium,
            order,
            phi,
            sigma,
            q,
            abar,
            diagnostics: Vec::new(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.medium.dim()
    }

    pub fn medium(&self) -> &CoefficientField {
        &self.medium
    }

    pub fn diagnostics(&self) -> &[OrderDiagnostics] {
        &self.diagnostics
    }

    fn check_order(&self, n: usize, min: usize) -> Result<()> {
        if n < min || n > self.order {
            return Err(Error::OutOfRange(format!(
                "order {n} outside {min}..={}",
                self.order
            )));
        }
        Ok(())
    }

    /// All `φⁿ` in tuple order (`φ⁰ = [1]`).
    pub fn phi_all(&self, n: usize) -> Result<&[SpectralField]> {
        self.check_order(n, 0)?;
        Ok(&self.phi[n])
    }

    pub fn sigma_all(&self, n: usize) -> Result<&[SpectralField]> {
        self.check_order(n, 0)?;
        Ok(&self.sigma[n])
    }

    pub fn q_all(&self, n: usize) -> Result<&[SpectralField]> {
        self.check_order(n, 1)?;
        Ok(&self.q[n])
    }

    pub fn phi(&self, tuple: &[usize]) -> Result<&SpectralField> {
        Ok(&self.phi_all(tuple.len())?[flat_of(tuple, self.dim())])
    }

    pub fn sigma(&self, tuple: &[usize]) -> Result<&SpectralField> {
        Ok(&self.sigma_all(tuple.len())?[flat_of(tuple, self.dim())])
    }

    pub fn q(&self, tuple: &[usize]) -> Result<&SpectralField> {
        Ok(&self.q_all(tuple.len())?[flat_of(tuple, self.dim())])
    }

    /// `āⁿ` flattened: matrix for parent tuple `p` at `[p·d² .. (p+1)·d²]`, row-major.
    pub fn homogenized_tensor(&self, n: usize) -> Result<&[f64]> {
        self.check_order(n, 1)?;
        Ok(&self.abar[n])
    }

    /// `āⁿ_{I'}` for a parent tuple of length `n − 1`.
    pub fn homogenized_matrix(&self, parent: &[usize]) -> Result<&[f64]> {
        let d = self.dim();
        let t = self.homogenized_tensor(parent.len() + 1)?;
        let p = flat_of(parent, d);
        Ok(&t[p * d * d..(p + 1) * d * d])
    }

    /// Norms per order (growth table).
    pub fn growth_report(&self) -> GrowthReport {
        let mut rows = Vec::new();
        for n in 1..=self.order {
            let phis: f64 = self.phi[n].iter().map(|f| { let v = f.l2_norm(); v * v }).sum();
            let sigmas: f64 = self.sigma[n].iter().map(|f| { let v = f.l2_norm(); v * v }).sum();
            let qs: f64 = self.q[n].iter().map(|f| { let v = f.l2_norm(); v * v }).sum();
            let ab: f64 = self.abar[n].iter().map(|x| x * x).sum();
            rows.push(GrowthRow {
                order: n,
                phi: libm::sqrt(phis),
                sigma: libm::sqrt(sigmas),
                corrector: libm::sqrt(phis + sigmas),
                abar: libm::sqrt(ab),
                q: libm::sqrt(qs),
            });
        }
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.corrector > 0.0)
            .map(|r| (r.order as f64, libm::log(r.corrector)))
            .collect();
        let base = if pts.len() < 2 {
            0.0
        } else {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            libm::exp(crate::stats::linear_fit(&x, &y).0)
        };
        GrowthReport { rows, base }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthRow {
    pub order: usize,
    pub phi: f64,
    pub sigma: f64,
    /// `(Σ_I ‖φⁿ_I‖² + ‖σⁿ_I‖²)^{1/2}`.
    pub corrector: f64,
    /// Frobenius norm of `āⁿ`.
    pub abar: f64,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    pub rows: Vec<GrowthRow>,
    /// `exp` of the least-squares slope of `log ‖(φⁿ, σⁿ)‖` against `n`;
    /// zero when fewer than two orders have nonzero correctors.
    pub base: f64,
}

/// `½(āⁿ_{I'} + (āⁿ_{I'})ᵀ) ξ_{i₁}…ξ_{i_{n−1}}` and its form `ξ·(·)ξ`, a
/// homogeneous polynomial of degree `n + 1`.
///
/// `tensor` is a flattened `āⁿ` as returned by
/// [`CorrectorSet::homogenized_tensor`].
pub fn symmetrized_form(tensor: &[f64], xi: &[f64], order: usize) -> (Vec<f64>, f64) {
    let d = xi.len();
    let dd = d * d;
    let n1 = order.saturating_sub(1);
    let parents = d.pow(n1 as u32);
    assert_eq!(tensor.len(), parents * dd, "tensor size does not match order {order}");
    let mut m = vec![0.0; dd];
    for p in 0..parents {
        let w: f64 = tuple_of(p, n1, d).iter().map(|&i| xi[i]).product();
        for i in 0..d {
            for j in 0..d {
                m[i * d + j] += 0.5 * w * (tensor[p * dd + i * d + j] + tensor[p * dd + j * d + i]);
            }
        }
    }
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += xi[i] * m[i * d + j] * xi[j];
        }
    }
    (m, s)
}
