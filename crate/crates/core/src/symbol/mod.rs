//! The averaged symbol `B̂(ξ) = ξ·B̂₀(ξ)ξ` of a periodic medium.
//!
//! `B̂(ξ)` is extracted from the shifted cell problem: with `v` solving
//! `−(∇+iξ)·a(∇+iξ)v = iξ·ê`, the plane wave response has mean `v̄` and
//! `B̂(ξ) = iξ·ê / v̄`.

mod taylor;

pub use taylor::{
    compare_with_correctors, default_rays, monomials, ray_samples, taylor_fit, taylor_fit_all_degrees,
    OrderDiscrepancy, TaylorModel,
};

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cell::{solve_bloch, CoefficientField, EllipticSolveOptions};
use crate::exec::Executor;
use crate::{Error, Result, C64};

/// Relative slack applied when enforcing the band `λ|ξ|² ≤ Re B̂ ≤ λ⁺|ξ|²`.
pub const BAND_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SymbolSample {
    pub xi: Vec<f64>,
    pub value: C64,
    pub probe: Vec<f64>,
    /// Final relative residual of the Bloch solve.
    pub residual: f64,
    pub iterations: usize,
}

impl SymbolSample {
    pub fn norm_sqr(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum()
    }

    /// `Re B̂(ξ) / |ξ|²`.
    pub fn ratio(&self) -> f64 {
        self.value.re / self.norm_sqr()
    }

    /// Whether `λ|ξ|² ≤ Re B̂(ξ) ≤ |ξ|²` holds (up to [`BAND_SLACK`]).
    pub fn within_band(&self, lambda: f64) -> bool {
        let r = self.ratio();
        r >= lambda * (1.0 - BAND_SLACK) && r <= 1.0 + BAND_SLACK
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
    v.iter().map(|x| x / n).collect()
}

/// Upper constant of the band: largest eigenvalue of the symmetric part of `⟨a⟩`.
pub fn voigt_bound(a: &CoefficientField) -> f64 {
    let d = a.dim();
    let m = nalgebra::DMatrix::from_row_slice(d, d, &a.mean());
    ((&m + m.transpose()) * 0.5).symmetric_eigenvalues().max()
}

/// `B̂(ξ)` with probe `ê` (default `ξ/|ξ|`).
///
/// The band `λ|ξ|² ≤ Re B̂ ≤ λ⁺|ξ|²` is enforced with the certified `λ` and
/// `λ⁺` from [`voigt_bound`]; violations are reported as errors.
pub fn bhat_at(a: &CoefficientField, xi: &[f64], probe: Option<&[f64]>, opts: &EllipticSolveOptions) -> Result<SymbolSample> {
    let wrap = |e: Error| Error::Symbol {
        xi: xi.to_vec(),
        source: Box::new(e),
    };
    let e = match probe {
        Some(p) => unit(p),
        None => unit(xi),
    };
    if e.len() != xi.len() || e.iter().any(|x| !x.is_finite()) {
        return Err(wrap(Error::invalid("probe direction must be a nonzero vector of matching length")));
    }
    let s: f64 = xi.iter().zip(&e).map(|(x, y)| x * y).sum();
    if s.abs() < 1e-12 {
        return Err(wrap(Error::invalid(format!("probe orthogonal to ξ (ξ·ê = {s:e})"))));
    }
    let out = solve_bloch(a, xi, &e, opts).map_err(wrap)?;
    let value = C64::new(0.0, s) / out.mean;
    let sample = SymbolSample {
        xi: xi.to_vec(),
        value,
        probe: e,
        residual: out.residual,
        iterations: out.iterations,
    };
    let n2 = sample.norm_sqr();
    let lower = a.lambda() * n2 * (1.0 - BAND_SLACK);
    let upper = voigt_bound(a) * n2 * (1.0 + BAND_SLACK);
    if !(value.re >= lower && value.re <= upper) {
        return Err(wrap(Error::Band {
            xi: xi.to_vec(),
            value: value.re,
            lower,
            upper,
        }));
    }
    Ok(sample)
}

/// Evaluate `B̂` at many frequencies with the default probe.
pub fn sample_symbol<E: Executor>(
    a: &CoefficientField,
    points: &[Vec<f64>],
    opts: &EllipticSolveOptions,
    exec: &E,
) -> Result<Vec<SymbolSample>> {
    exec.map(points.len(), |i| bhat_at(a, &points[i], None, opts))
        .into_iter()
        .collect()
}

/// Largest pairwise deviation `|B̂_ê − B̂_ê'| / max|B̂|` over probe directions.
pub fn probe_consistency(a: &CoefficientField, xi: &[f64], probes: &[Vec<f64>], opts: &EllipticSolveOptions) -> Result<f64> {
    if probes.len() < 2 {
        return Ok(0.0);
    }
    let vals = probes
        .iter()
        .map(|p| bhat_at(a, xi, Some(p), opts).map(|s| s.value))
        .collect::<Result<Vec<_>>>()?;
    let scale = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let mut dev: f64 = 0.0;
    for i in 0..vals.len() {
        for j in 0..i {
            dev = dev.max((vals[i] - vals[j]).norm());
        }
    }
    Ok(dev / scale)
}

/// `v̄` estimated by solving the translated problems `a(· + z)` for the `Z^d`
/// grid shifts `z ∈ (ℤ/Z)^d / Z` and averaging the `ξ`-mode amplitudes.
pub fn translation_average_oracle<E: Executor>(
    a: &CoefficientField,
    xi: &[f64],
    e: &[f64],
    shifts: usize,
    opts: &EllipticSolveOptions,
    exec: &E,
) -> Result<C64> {
    let d = a.dim();
    let n = a.lattice().grid();
    if shifts == 0 || n % shifts != 0 {
        return Err(Error::invalid(format!("{shifts} translations do not divide the grid size {n}")));
    }
    let total = shifts.pow(d as u32);
    let vals = exec.map(total, |t| {
        let mut z = vec![0.0; d];
        let mut rem = t;
        for j in (0..d).rev() {
            z[j] = (rem % shifts) as f64 / shifts as f64;
            rem /= shifts;
        }
        let wrap = |err: Error| Error::Translation {
            z: z.clone(),
            source: Box::new(err),
        };
        let moved = a.translated(&z).map_err(wrap)?;
        solve_bloch(&moved, xi, e, opts).map(|s| s.mean).map_err(wrap)
    });
    let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
    let re: Vec<f64> = vals.iter().map(|v| v.re).collect();
    let im: Vec<f64> = vals.iter().map(|v| v.im).collect();
    Ok(C64::new(
        crate::stats::pairwise_sum(&re) / total as f64,
        crate::stats::pairwise_sum(&im) / total as f64,
    ))
}

#[cfg(test)]
mod tests;
