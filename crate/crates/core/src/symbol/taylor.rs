//! Least-squares Taylor models of `B̂` at the origin.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::{bhat_at, SymbolSample};
use crate::cell::{CoefficientField, EllipticSolveOptions};
use crate::correctors::{symmetrized_form, CorrectorSet};
use crate::exec::Executor;
use crate::{Error, Result};

/// Exponents `α` with `|α| = degree` in `d` variables, lexicographically descending.
pub fn monomials(d: usize, degree: usize) -> Vec<Vec<u32>> {
    fn rec(d: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == d - 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for e in (0..=left).rev() {
            prefix.push(e);
            rec(d, left - e, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, degree as u32, &mut Vec::new(), &mut out);
    out
}

fn power(xi: &[f64], alpha: &[u32]) -> f64 {
    xi.iter().zip(alpha).map(|(x, &e)| libm::pow(*x, e as f64)).product()
}

fn condition(rays: &[Vec<f64>], d: usize, degree: usize) -> f64 {
    let mons = monomials(d, degree);
    if rays.len() < mons.len() {
        return f64::INFINITY;
    }
    let m = DMatrix::from_fn(rays.len(), mons.len(), |r, c| power(&rays[r], &mons[c]));
    let sv = m.singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Coordinate rays, pair diagonals `(e_i ± e_j)/√2`, then seeded random unit
/// rays until every angular design matrix of degree `2..=max_degree` has
/// condition number below `1e6`. Rays are distinct modulo sign; with
/// `with_negatives` each ray is followed by its opposite.
pub fn default_rays(d: usize, max_degree: usize, seed: u64, with_negatives: bool) -> Vec<Vec<f64>> {
    let mut rays = Vec::new();
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        rays.push(e);
    }
    let h = core::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        for j in i + 1..d {
            for s in [1.0, -1.0] {
                let mut e = vec![0.0; d];
                e[i] = h;
                e[j] = s * h;
                rays.push(e);
            }
        }
    }
    let degrees: Vec<usize> = if with_negatives {
        (2..=max_degree).collect()
    } else {
        (2..=max_degree).step_by(2).collect()
    };
    let well_posed = |rays: &[Vec<f64>]| degrees.iter().all(|&k| condition(rays, d, k) < 1e6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tries = 0;
    while d > 1 && !well_posed(&rays) && tries < 10_000 {
        tries += 1;
        let v: Vec<f64> = (0..d)
            .map(|_| 2.0 * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 1.0)
            .collect();
        let n = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if !(0.2..=1.0).contains(&n) {
            continue;
        }
        rays.push(v.iter().map(|x| x / n).collect());
    }
    if with_negatives {
        rays = rays
            .into_iter()
            .flat_map(|r| {
                let neg: Vec<f64> = r.iter().map(|x| -x).collect();
                [r, neg]
            })
            .collect();
    }
    rays
}

/// Symbol samples at `r·θ` for every ray `θ` and radius `r`.
pub fn ray_samples<E: Executor>(
    a: &CoefficientField,
    rays: &[Vec<f64>],
    radii: &[f64],
    opts: &EllipticSolveOptions,
    exec: &E,
) -> Result<Vec<SymbolSample>> {
    let points: Vec<Vec<f64>> = rays
        .iter()
        .flat_map(|t| radii.iter().map(move |r| t.iter().map(|x| x * r).collect()))
        .collect();
    exec.map(points.len(), |i| bhat_at(a, &points[i], None, opts))
        .into_iter()
        .collect()
}

/// Homogeneous polynomial model `Σ_deg Σ_α c_α ξ^α` of `Re B̂`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorModel {
    pub dim: usize,
    pub degrees: Vec<usize>,
    /// Exponents per degree, aligned with `degrees`.
    pub exponents: Vec<Vec<Vec<u32>>>,
    pub coefficients: Vec<Vec<f64>>,
    /// Root mean square of `(Re B̂ − model)/|ξ|²` over the samples.
    pub residual: f64,
    pub radii: Vec<f64>,
}

impl TaylorModel {
    pub fn max_degree(&self) -> usize {
        self.degrees.iter().copied().max().unwrap_or(0)
    }

    /// Degree-`k` part at `ξ` (zero if the degree is not modelled).
    pub fn part(&self, degree: usize, xi: &[f64]) -> f64 {
        match self.degrees.iter().position(|&k| k == degree) {
            Some(p) => self.exponents[p]
                .iter()
                .zip(&self.coefficients[p])
                .map(|(a, c)| c * power(xi, a))
                .sum(),
            None => 0.0,
        }
    }

    pub fn evaluate(&self, xi: &[f64]) -> f64 {
        self.degrees.iter().map(|&k| self.part(k, xi)).sum()
    }

    pub fn coefficient(&self, alpha: &[u32]) -> f64 {
        let degree: u32 = alpha.iter().sum();
        self.degrees
            .iter()
            .position(|&k| k as u32 == degree)
            .and_then(|p| {
                self.exponents[p]
                    .iter()
                    .position(|e| e.as_slice() == alpha)
                    .map(|i| self.coefficients[p][i])
            })
            .unwrap_or(0.0)
    }

    /// Largest coefficient magnitude among the given degree.
    pub fn max_coefficient(&self, degree: usize) -> f64 {
        self.degrees
            .iter()
            .position(|&k| k == degree)
            .map(|p| self.coefficients[p].iter().fold(0.0, |m: f64, c| m.max(c.abs())))
            .unwrap_or(0.0)
    }
}

fn fit(samples: &[SymbolSample], d: usize, degrees: Vec<usize>) -> Result<TaylorModel> {
    if samples.is_empty() {
        return Err(Error::invalid("no samples to fit"));
    }
    if samples.iter().any(|s| s.xi.len() != d) {
        return Err(Error::invalid("sample dimension mismatch"));
    }
    let exponents: Vec<Vec<Vec<u32>>> = degrees.iter().map(|&k| monomials(d, k)).collect();
    let cols: usize = exponents.iter().map(|e| e.len()).sum();
    let r_ref = samples
        .iter()
        .map(|s| libm::sqrt(s.norm_sqr()))
        .fold(0.0, f64::max);
    let rows = samples.len();
    if rows < cols {
        return Err(Error::RankDeficient { rank: rows, columns: cols });
    }
    let mut m = DMatrix::zeros(rows, cols);
    let mut b = DVector::zeros(rows);
    for (r, s) in samples.iter().enumerate() {
        let scaled: Vec<f64> = s.xi.iter().map(|x| x / r_ref).collect();
        let w = 1.0 / scaled.iter().map(|x| x * x).sum::<f64>();
        let mut c = 0;
        for ex in &exponents {
            for alpha in ex {
                m[(r, c)] = w * power(&scaled, alpha);
                c += 1;
            }
        }
        b[r] = w * s.value.re;
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&v| v > 1e-11 * smax).count();
    if rank < cols {
        return Err(Error::RankDeficient { rank, columns: cols });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|e| Error::invalid(format!("least squares failed: {e}")))?;
    let mut coefficients = Vec::new();
    let mut c = 0;
    for (ex, &k) in exponents.iter().zip(&degrees) {
        let scale = libm::pow(r_ref, k as f64);
        coefficients.push(ex.iter().map(|_| {
            let v = x[c] / scale;
            c += 1;
            v
        }).collect());
    }
    let mut model = TaylorModel {
        dim: d,
        degrees,
        exponents,
        coefficients,
        residual: 0.0,
        radii: Vec::new(),
    };
    let mut acc = 0.0;
    for s in samples {
        let e = (s.value.re - model.evaluate(&s.xi)) / s.norm_sqr();
        acc += e * e;
    }
    model.residual = libm::sqrt(acc / rows as f64);
    let mut radii: Vec<f64> = samples.iter().map(|s| libm::sqrt(s.norm_sqr())).collect();
    radii.sort_by(|a, b| b.partial_cmp(a).unwrap_or(core::cmp::Ordering::Equal));
    radii.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
    model.radii = radii;
    Ok(model)
}

/// Fit even degrees `2, 4, …, max_degree`.
pub fn taylor_fit(samples: &[SymbolSample], d: usize, max_degree: usize) -> Result<TaylorModel> {
    fit(samples, d, (2..=max_degree).step_by(2).collect())
}

/// Diagnostic fit over every degree `2..=max_degree`, odd ones included.
pub fn taylor_fit_all_degrees(samples: &[SymbolSample], d: usize, max_degree: usize) -> Result<TaylorModel> {
    fit(samples, d, (2..=max_degree).collect())
}

/// Cross-route discrepancy at one order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderDiscrepancy {
    pub order: usize,
    /// `max_θ |model part − corrector part| / max(1, |corrector part|)`.
    pub discrepancy: f64,
    /// Degree-`(n+1)` model part at the worst probe.
    pub model_form: f64,
    /// Corrector-route prediction at the worst probe.
    pub corrector_form: f64,
    pub worst_probe: Vec<f64>,
}

fn probes(d: usize) -> Vec<Vec<f64>> {
    let mut out = default_rays(d, 2, 0, false);
    if d > 1 {
        for t in [0.3f64, 1.1, 2.0, 2.7] {
            let mut v = vec![0.0; d];
            v[0] = libm::cos(t);
            v[1] = libm::sin(t);
            if d == 3 {
                v[0] *= 0.8;
                v[1] *= 0.8;
                v[2] = 0.6;
            }
            out.push(v);
        }
    }
    out
}

/// Compare the degree-`(n+1)` parts of the model with the corrector route
/// for `1 ≤ n ≤ ℓ`.
///
/// The expansion of the symbol reads `B̂(ξ) ≈ Σ_n i^{n−1} ξ·sym(āⁿ)ξ^{n−1}ξ`,
/// so odd `n` predict the real part `(−1)^{(n−1)/2}` times the form; for even
/// `n` the form itself must vanish, as does the real model part.
pub fn compare_with_correctors(model: &TaylorModel, set: &CorrectorSet, ell: usize) -> Result<Vec<OrderDiscrepancy>> {
    if set.order() < ell {
        return Err(Error::invalid(format!(
            "corrector order {} below ℓ = {ell}",
            set.order()
        )));
    }
    if model.max_degree() < ell + 1 {
        return Err(Error::invalid(format!(
            "model degree {} below ℓ + 1 = {}",
            model.max_degree(),
            ell + 1
        )));
    }
    let d = set.dim();
    let mut out = Vec::new();
    for n in 1..=ell {
        let tensor = set.homogenized_tensor(n)?;
        let mut worst = OrderDiscrepancy {
            order: n,
            discrepancy: -1.0,
            model_form: 0.0,
            corrector_form: 0.0,
            worst_probe: Vec::new(),
        };
        for theta in probes(d) {
            let (_, form) = symmetrized_form(tensor, &theta, n);
            let predicted = if n % 2 == 1 {
                if (n - 1) % 4 == 0 {
                    form
                } else {
                    -form
                }
            } else {
                form
            };
            let part = model.part(n + 1, &theta);
            let disc = (part - predicted).abs() / predicted.abs().max(1.0);
            if disc > worst.discrepancy {
                worst = OrderDiscrepancy {
                    order: n,
                    discrepancy: disc,
                    model_form: part,
                    corrector_form: predicted,
                    worst_probe: theta,
                };
            }
        }
        out.push(worst);
    }
    Ok(out)
}
