//! Preconditioned Krylov iterations on complex vectors.
//!
//! Operators are passed as closures `apply(x, out)`; the preconditioner
//! approximates the inverse of the operator.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    /// Relative residual target `‖b − Ax‖ ≤ tol ‖b‖`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        KrylovOptions {
            tol: 1e-10,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovOutcome {
    pub x: Vec<C64>,
    pub iterations: usize,
    /// Final relative residual.
    pub residual: f64,
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    libm::sqrt(a.iter().map(|c| c.norm_sqr()).sum::<f64>())
}

fn true_residual<A: FnMut(&[C64], &mut [C64])>(apply: &mut A, x: &[C64], b: &[C64], tmp: &mut [C64]) -> f64 {
    apply(x, tmp);
    let r: f64 = b.iter().zip(tmp.iter()).map(|(bi, ai)| (bi - ai).norm_sqr()).sum();
    libm::sqrt(r)
}

/// Tracks true residuals at restarts; fails after `MAX_STALLS` restarts in a
/// row that do not halve the best residual, i.e. when the target lies below
/// the attainable rounding floor.
struct Floor {
    best: f64,
    stalls: usize,
}

const MAX_STALLS: usize = 8;

impl Floor {
    fn new() -> Self {
        Floor {
            best: f64::INFINITY,
            stalls: 0,
        }
    }

    fn restart(&mut self, actual: f64, it: usize) -> Result<()> {
        if !actual.is_finite() {
            self.stalls = MAX_STALLS;
        } else if actual < 0.5 * self.best {
            self.stalls = 0;
        } else {
            self.stalls += 1;
        }
        self.best = self.best.min(actual);
        if self.stalls >= MAX_STALLS {
            return Err(Error::NoConvergence {
                iterations: it,
                residual: self.best,
            });
        }
        Ok(())
    }
}

/// Preconditioned conjugate gradients for a Hermitian positive definite operator.
pub fn pcg<A, P>(mut apply: A, mut precond: P, b: &[C64], opts: &KrylovOptions) -> Result<KrylovOutcome>
where
    A: FnMut(&[C64], &mut [C64]),
    P: FnMut(&[C64], &mut [C64]),
{
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![ZERO; n];
    if bn == 0.0 {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut z = vec![ZERO; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut ap = vec![ZERO; n];
    let mut rz = dot(&r, &z);
    let mut res = 1.0;
    let mut floor = Floor::new();
    for it in 1..=opts.max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap.norm() == 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = norm(&r) / bn;
        if res <= opts.tol {
            let actual = true_residual(&mut apply, &x, b, &mut ap) / bn;
            if actual <= opts.tol {
                return Ok(KrylovOutcome {
                    x,
                    iterations: it,
                    residual: actual,
                });
            }
            floor.restart(actual, it)?;
            for i in 0..n {
                r[i] = b[i] - ap[i];
            }
            precond(&r, &mut z);
            rz = dot(&r, &z);
            p.copy_from_slice(&z);
            continue;
        }
        if !res.is_finite() {
            break;
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: floor.best.min(res),
    })
}

/// Right-preconditioned BiCGStab for general operators.
pub fn bicgstab<A, P>(mut apply: A, mut precond: P, b: &[C64], opts: &KrylovOptions) -> Result<KrylovOutcome>
where
    A: FnMut(&[C64], &mut [C64]),
    P: FnMut(&[C64], &mut [C64]),
{
    let n = b.len();
    let bn = norm(b);
    let mut x = vec![ZERO; n];
    if bn == 0.0 {
        return Ok(KrylovOutcome {
            x,
            iterations: 0,
            residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut rho = C64::new(1.0, 0.0);
    let mut alpha = C64::new(1.0, 0.0);
    let mut omega = C64::new(1.0, 0.0);
    let mut v = vec![ZERO; n];
    let mut p = vec![ZERO; n];
    let mut y = vec![ZERO; n];
    let mut s = vec![ZERO; n];
    let mut zs = vec![ZERO; n];
    let mut t = vec![ZERO; n];
    let mut res = 1.0;
    let mut floor = Floor::new();
    for it in 1..=opts.max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.norm() < 1e-300 {
            // breakdown: restart the shadow residual
            r_hat.copy_from_slice(&r);
            rho = C64::new(1.0, 0.0);
            alpha = rho;
            omega = rho;
            p.iter_mut().for_each(|c| *c = ZERO);
            v.iter_mut().for_each(|c| *c = ZERO);
            continue;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        precond(&p, &mut y);
        apply(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= opts.tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let actual = true_residual(&mut apply, &x, b, &mut t) / bn;
            if actual <= opts.tol {
                return Ok(KrylovOutcome {
                    x,
                    iterations: it,
                    residual: actual,
                });
            }
            floor.restart(actual, it)?;
            for i in 0..n {
                r[i] = b[i] - t[i];
            }
            r_hat.copy_from_slice(&r);
            rho = C64::new(1.0, 0.0);
            alpha = rho;
            omega = rho;
            p.iter_mut().for_each(|c| *c = ZERO);
            v.iter_mut().for_each(|c| *c = ZERO);
            continue;
        }
        precond(&s, &mut zs);
        apply(&zs, &mut t);
        let tt = dot(&t, &t);
        omega = if tt.norm() == 0.0 { ZERO } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zs[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bn;
        if res <= opts.tol {
            let actual = true_residual(&mut apply, &x, b, &mut t) / bn;
            if actual <= opts.tol {
                return Ok(KrylovOutcome {
                    x,
                    iterations: it,
                    residual: actual,
                });
            }
            floor.restart(actual, it)?;
            for i in 0..n {
                r[i] = b[i] - t[i];
            }
            r_hat.copy_from_slice(&r);
            rho = C64::new(1.0, 0.0);
            alpha = rho;
            omega = rho;
            p.iter_mut().for_each(|c| *c = ZERO);
            v.iter_mut().for_each(|c| *c = ZERO);
            continue;
        }
        if omega.norm() == 0.0 || !res.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: floor.best.min(res),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hpd(n: usize) -> Vec<C64> {
        // A = B^H B + n I with a fixed complex B
        let b: Vec<C64> = (0..n * n)
            .map(|k| C64::new(libm::sin(k as f64 * 0.37), libm::cos(k as f64 * 0.11)))
            .collect();
        let mut a = vec![ZERO; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += b[k * n + i].conj() * b[k * n + j];
                }
                a[i * n + j] = acc + if i == j { C64::new(n as f64, 0.0) } else { ZERO };
            }
        }
        a
    }

    fn matvec(a: &[C64], n: usize) -> impl FnMut(&[C64], &mut [C64]) + '_ {
        move |x, out| {
            for i in 0..n {
                out[i] = (0..n).map(|j| a[i * n + j] * x[j]).sum();
            }
        }
    }

    #[test]
    fn pcg_solves_hermitian_system() {
        let n = 12;
        let a = hpd(n);
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64, 1.0)).collect();
        let out = pcg(matvec(&a, n), |r: &[C64], z: &mut [C64]| z.copy_from_slice(r), &b, &KrylovOptions::default()).unwrap();
        let mut ax = vec![ZERO; n];
        matvec(&a, n)(&out.x, &mut ax);
        for i in 0..n {
            assert!((ax[i] - b[i]).norm() < 1e-8);
        }
    }

    #[test]
    fn bicgstab_solves_nonsymmetric_system() {
        let n = 10;
        let mut a = hpd(n);
        a[1] += C64::new(3.0, 0.0);
        a[n + 3] -= C64::new(0.0, 2.0);
        let b: Vec<C64> = (0..n).map(|i| C64::new(1.0, -(i as f64))).collect();
        let out = bicgstab(matvec(&a, n), |r: &[C64], z: &mut [C64]| z.copy_from_slice(r), &b, &KrylovOptions::default()).unwrap();
        assert!(out.residual <= 1e-10);
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let out = pcg(|_: &[C64], o: &mut [C64]| o.fill(ZERO), |_: &[C64], o: &mut [C64]| o.fill(ZERO), &[ZERO; 4], &KrylovOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|c| *c == ZERO));
    }

    #[test]
    fn reports_nonconvergence() {
        let n = 12;
        let a = hpd(n);
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64 + 1.0, 0.0)).collect();
        let opts = KrylovOptions { tol: 1e-14, max_iter: 1 };
        let err = pcg(matvec(&a, n), |r: &[C64], z: &mut [C64]| z.copy_from_slice(r), &b, &opts).unwrap_err();
        assert!(matches!(err, Error::NoConvergence { iterations: 1, .. }));
    }

    #[test]
    fn unattainable_tolerance_stops_at_rounding_floor() {
        let n = 12;
        let a = hpd(n);
        let b: Vec<C64> = (0..n).map(|i| C64::new(i as f64 + 1.0, 0.5)).collect();
        let opts = KrylovOptions { tol: 1e-30, max_iter: 10_000 };
        let id = |r: &[C64], z: &mut [C64]| z.copy_from_slice(r);
        for err in [
            pcg(matvec(&a, n), id, &b, &opts).unwrap_err(),
            bicgstab(matvec(&a, n), id, &b, &opts).unwrap_err(),
        ] {
            let Error::NoConvergence { iterations, residual } = err else { panic!("{err:?}") };
            assert!(iterations < 200, "{iterations}");
            assert!(residual.is_finite() && residual < 1e-12, "{residual}");
        }
    }
}
