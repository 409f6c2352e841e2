//! Spectral algebra on the periodic unit cell.
//!
//! Fields are truncated Fourier series `f(x) = Σ_k c_k e^{2πi k·x}` over the
//! modes `|k_j| ≤ M`, so `c_0` is the cell average. Wavevectors handed to
//! multipliers are `κ = 2πk`. Grid samples live at `x = j/N`, `j = 0..N-1`
//! per axis, stored row-major with the last axis fastest.

mod fft;

pub use fft::{Fft1d, FftNd};

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::{Error, Result, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Relative tolerance for the `c_{-k} = conj(c_k)` reality invariant.
pub const REALITY_TOL: f64 = 1e-12;

#[derive(Debug)]
struct LatticeInner {
    dim: usize,
    modes: usize,
    grid: usize,
    ks: Vec<[i64; 3]>,
    grid_pos: Vec<usize>,
    fft: FftNd,
}

/// Truncated dual lattice `{2πk : |k_j| ≤ M}` of the unit cell together with
/// the `N^d` sampling grid used for products.
///
/// Modes are enumerated lexicographically in `k` (first axis most
/// significant, each axis ascending from `-M`).
#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    inner: Arc<LatticeInner>,
}

impl PartialEq for FrequencyLattice {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.modes() == other.modes() && self.grid() == other.grid()
    }
}

impl Eq for FrequencyLattice {}

impl FrequencyLattice {
    /// Lattice with explicit grid size; requires `grid ≥ 3·modes + 1`.
    pub fn new(dim: usize, modes: usize, grid: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension {dim} not in 1..=3")));
        }
        if modes < 1 {
            return Err(Error::invalid("mode bound must be at least 1"));
        }
        if grid < 3 * modes + 1 {
            return Err(Error::invalid(format!(
                "grid size {grid} below dealiasing bound 3M+1 = {}",
                3 * modes + 1
            )));
        }
        let side = 2 * modes + 1;
        let count = side.pow(dim as u32);
        let mut ks = Vec::with_capacity(count);
        let mut grid_pos = Vec::with_capacity(count);
        for flat in 0..count {
            let mut k = [0i64; 3];
            let mut rem = flat;
            for j in (0..dim).rev() {
                k[j] = (rem % side) as i64 - modes as i64;
                rem /= side;
            }
            let mut pos = 0usize;
            for &kj in k.iter().take(dim) {
                pos = pos * grid + kj.rem_euclid(grid as i64) as usize;
            }
            ks.push(k);
            grid_pos.push(pos);
        }
        Ok(FrequencyLattice {
            inner: Arc::new(LatticeInner {
                dim,
                modes,
                grid,
                ks,
                grid_pos,
                fft: FftNd::new(dim, grid),
            }),
        })
    }

    /// Lattice whose grid is the smallest power of two satisfying `N ≥ 3M + 1`.
    pub fn with_modes(dim: usize, modes: usize) -> Result<Self> {
        let grid = (3 * modes + 1).next_power_of_two();
        Self::new(dim, modes, grid)
    }

    pub fn dim(&self) -> usize {
        self.inner.dim
    }

    pub fn modes(&self) -> usize {
        self.inner.modes
    }

    pub fn grid(&self) -> usize {
        self.inner.grid
    }

    /// Number of retained modes, `(2M+1)^d`.
    pub fn len(&self) -> usize {
        self.inner.ks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.ks.is_empty()
    }

    /// Number of grid points, `N^d`.
    pub fn grid_len(&self) -> usize {
        self.inner.grid.pow(self.inner.dim as u32)
    }

    pub fn fft(&self) -> &FftNd {
        &self.inner.fft
    }

    /// Integer mode of the `idx`-th wavevector (unused axes are zero).
    pub fn mode(&self, idx: usize) -> [i64; 3] {
        self.inner.ks[idx]
    }

    pub fn modes_iter(&self) -> impl Iterator<Item = &[i64; 3]> + '_ {
        self.inner.ks.iter()
    }

    /// Wavevector `2πk` of the `idx`-th mode.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let k = self.inner.ks[idx];
        [2.0 * PI * k[0] as f64, 2.0 * PI * k[1] as f64, 2.0 * PI * k[2] as f64]
    }

    pub fn index_of(&self, k: &[i64]) -> Option<usize> {
        let m = self.modes() as i64;
        let side = 2 * m + 1;
        if k.len() != self.dim() {
            return None;
        }
        let mut flat = 0i64;
        for &kj in k {
            if kj.abs() > m {
                return None;
            }
            flat = flat * side + kj + m;
        }
        Some(flat as usize)
    }

    pub fn zero_index(&self) -> usize {
        (self.len() - 1) / 2
    }

    /// Flat grid position of the `idx`-th mode (mode reduced modulo `N`).
    pub fn grid_position(&self, idx: usize) -> usize {
        self.inner.grid_pos[idx]
    }

    /// Grid coordinates `x = j/N` of the flat grid index `g`.
    pub fn grid_point(&self, g: usize) -> [f64; 3] {
        let n = self.grid();
        let mut x = [0.0; 3];
        let mut rem = g;
        for j in (0..self.dim()).rev() {
            x[j] = (rem % n) as f64 / n as f64;
            rem /= n;
        }
        x
    }

    /// Index of the mode `-k`.
    pub fn negated(&self, idx: usize) -> usize {
        self.len() - 1 - idx
    }

    /// Scatter coefficients onto the grid and inverse transform.
    pub(crate) fn synthesize(&self, coeffs: &[C64], out: &mut [C64]) {
        out.iter_mut().for_each(|v| *v = ZERO);
        for (idx, &c) in coeffs.iter().enumerate() {
            out[self.inner.grid_pos[idx]] = c;
        }
        self.inner.fft.inverse(out);
    }

    /// Forward transform grid samples in place and gather normalized retained modes.
    pub(crate) fn analyze(&self, samples: &mut [C64], coeffs: &mut [C64]) {
        self.inner.fft.forward(samples);
        let scale = 1.0 / self.grid_len() as f64;
        for (idx, c) in coeffs.iter_mut().enumerate() {
            *c = samples[self.inner.grid_pos[idx]] * scale;
        }
    }
}

/// Shape of the values carried at each point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Scalar,
    Vector,
    Matrix,
}

impl Rank {
    pub fn components(self, dim: usize) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector => dim,
            Rank::Matrix => dim * dim,
        }
    }
}

/// Scalar, vector or matrix field stored as truncated Fourier coefficients.
///
/// Coefficients are component-major: component `c` occupies
/// `data[c * n .. (c + 1) * n]` with `n` the number of lattice modes. Matrix
/// components are row-major, `(i, j) -> i * d + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    lattice: FrequencyLattice,
    rank: Rank,
    real: bool,
    data: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(lattice: &FrequencyLattice, rank: Rank) -> Self {
        let n = lattice.len() * rank.components(lattice.dim());
        SpectralField {
            lattice: lattice.clone(),
            rank,
            real: true,
            data: vec![ZERO; n],
        }
    }

    /// Field from raw component-major coefficients; the reality flag is
    /// derived from the coefficients.
    pub fn from_coefficients(lattice: &FrequencyLattice, rank: Rank, data: Vec<C64>) -> Result<Self> {
        let expected = lattice.len() * rank.components(lattice.dim());
        if data.len() != expected {
            return Err(Error::GridMismatch {
                expected,
                got: data.len(),
            });
        }
        let mut f = SpectralField {
            lattice: lattice.clone(),
            rank,
            real: false,
            data,
        };
        f.real = f.hermitian_defect() <= REALITY_TOL;
        Ok(f)
    }

    /// Constant scalar field.
    pub fn constant(lattice: &FrequencyLattice, value: f64) -> Self {
        let mut f = Self::zeros(lattice, Rank::Scalar);
        let z = lattice.zero_index();
        f.data[z] = C64::new(value, 0.0);
        f
    }

    /// Constant vector field with the given (possibly complex) value.
    pub fn constant_vector(lattice: &FrequencyLattice, value: &[C64]) -> Self {
        let mut f = Self::zeros(lattice, Rank::Vector);
        let n = lattice.len();
        let z = lattice.zero_index();
        for (c, v) in value.iter().enumerate().take(lattice.dim()) {
            f.data[c * n + z] = *v;
        }
        f.real = value.iter().all(|v| v.im == 0.0);
        f
    }

    /// Project grid samples (component-major, `N^d` per component) onto the lattice.
    ///
    /// Exact for samples that are band-limited to the retained modes.
    pub fn from_samples(lattice: &FrequencyLattice, rank: Rank, samples: &[C64]) -> Result<Self> {
        let comps = rank.components(lattice.dim());
        let g = lattice.grid_len();
        if samples.len() != comps * g {
            return Err(Error::GridMismatch {
                expected: comps * g,
                got: samples.len(),
            });
        }
        let n = lattice.len();
        let mut data = vec![ZERO; comps * n];
        let mut buf = vec![ZERO; g];
        for c in 0..comps {
            buf.copy_from_slice(&samples[c * g..(c + 1) * g]);
            lattice.analyze(&mut buf, &mut data[c * n..(c + 1) * n]);
        }
        Self::from_coefficients(lattice, rank, data)
    }

    /// Real-valued variant of [`SpectralField::from_samples`].
    pub fn from_real_samples(lattice: &FrequencyLattice, rank: Rank, samples: &[f64]) -> Result<Self> {
        let c: Vec<C64> = samples.iter().map(|&x| C64::new(x, 0.0)).collect();
        let mut f = Self::from_samples(lattice, rank, &c)?;
        f.enforce_reality();
        Ok(f)
    }

    /// Sample `func` on the grid and project. `func` receives `x` and fills one value per component.
    pub fn from_fn<F: Fn(&[f64], &mut [f64])>(lattice: &FrequencyLattice, rank: Rank, func: F) -> Result<Self> {
        let comps = rank.components(lattice.dim());
        let g = lattice.grid_len();
        let mut samples = vec![0.0; comps * g];
        let mut vals = vec![0.0; comps];
        for p in 0..g {
            let x = lattice.grid_point(p);
            func(&x[..lattice.dim()], &mut vals);
            for c in 0..comps {
                samples[c * g + p] = vals[c];
            }
        }
        Self::from_real_samples(lattice, rank, &samples)
    }

    /// Grid values, component-major.
    pub fn to_samples(&self) -> Vec<C64> {
        let comps = self.components();
        let g = self.lattice.grid_len();
        let n = self.lattice.len();
        let mut out = vec![ZERO; comps * g];
        for c in 0..comps {
            self.lattice
                .synthesize(&self.data[c * n..(c + 1) * n], &mut out[c * g..(c + 1) * g]);
        }
        out
    }

    pub fn lattice(&self) -> &FrequencyLattice {
        &self.lattice
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn is_real(&self) -> bool {
        self.real
    }

    pub fn components(&self) -> usize {
        self.rank.components(self.lattice.dim())
    }

    pub fn coefficients(&self) -> &[C64] {
        &self.data
    }

    pub fn component_coefficients(&self, c: usize) -> &[C64] {
        let n = self.lattice.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn coefficient(&self, c: usize, k: &[i64]) -> Option<C64> {
        let idx = self.lattice.index_of(k)?;
        Some(self.data[c * self.lattice.len() + idx])
    }

    /// Cell average of each component (the `k = 0` coefficients).
    pub fn mean(&self) -> Vec<C64> {
        let n = self.lattice.len();
        let z = self.lattice.zero_index();
        (0..self.components()).map(|c| self.data[c * n + z]).collect()
    }

    /// Scalar field holding component `c`.
    pub fn component(&self, c: usize) -> SpectralField {
        let n = self.lattice.len();
        SpectralField {
            lattice: self.lattice.clone(),
            rank: Rank::Scalar,
            real: self.real,
            data: self.data[c * n..(c + 1) * n].to_vec(),
        }
    }

    /// Stack scalar fields into a vector or matrix field.
    pub fn stack(rank: Rank, parts: &[SpectralField]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero components"))?;
        let lattice = first.lattice.clone();
        if parts.len() != rank.components(lattice.dim()) {
            return Err(Error::Incompatible(format!(
                "{} components for rank {:?}",
                parts.len(),
                rank
            )));
        }
        let mut data = Vec::with_capacity(parts.len() * lattice.len());
        let mut real = true;
        for p in parts {
            if p.lattice != lattice || p.rank != Rank::Scalar {
                return Err(Error::Incompatible("stack expects scalar fields on one lattice".into()));
            }
            real &= p.real;
            data.extend_from_slice(&p.data);
        }
        Ok(SpectralField {
            lattice,
            rank,
            real,
            data,
        })
    }

    /// Largest violation of `c_{-k} = conj(c_k)`, relative to the largest coefficient.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.lattice.len();
        let scale = self.data.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for c in 0..self.components() {
            let s = &self.data[c * n..(c + 1) * n];
            for idx in 0..n {
                let d = (s[self.lattice.negated(idx)] - s[idx].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst / scale
    }

    /// Symmetrize coefficients so the field is exactly real, and flag it.
    pub fn enforce_reality(&mut self) {
        let n = self.lattice.len();
        for c in 0..self.components() {
            let s = &mut self.data[c * n..(c + 1) * n];
            for idx in 0..n {
                let neg = n - 1 - idx;
                if neg < idx {
                    continue;
                }
                let avg = (s[idx] + s[neg].conj()) * 0.5;
                s[idx] = avg;
                s[neg] = avg.conj();
            }
        }
        self.real = true;
    }

    fn refresh_reality(&mut self, inputs_real: bool) {
        self.real = inputs_real && self.hermitian_defect() <= REALITY_TOL;
    }

    /// `c_k -> m(κ) c_k` for every component, `κ = 2πk`.
    ///
    /// `m` returns `None` where it is singular; that is an error unless the
    /// field's coefficient there vanishes.
    pub fn apply_multiplier<M: Fn(&[f64]) -> Option<C64>>(&self, m: M) -> Result<SpectralField> {
        let n = self.lattice.len();
        let d = self.lattice.dim();
        let scale = self.l2_norm().max(f64::MIN_POSITIVE);
        let mut out = self.clone();
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            match m(&kappa[..d]) {
                Some(factor) => {
                    for c in 0..self.components() {
                        out.data[c * n + idx] *= factor;
                    }
                }
                None => {
                    for c in 0..self.components() {
                        let mag = self.data[c * n + idx].norm();
                        if mag > 1e-13 * scale {
                            let k = self.lattice.mode(idx);
                            return Err(Error::SingularMode {
                                mode: k[..d].to_vec(),
                                magnitude: mag,
                            });
                        }
                        out.data[c * n + idx] = ZERO;
                    }
                }
            }
        }
        out.refresh_reality(self.real);
        Ok(out)
    }

    fn expect_rank(&self, rank: Rank, op: &str) -> Result<()> {
        if self.rank != rank {
            return Err(Error::Incompatible(format!(
                "{op} expects a {rank:?} field, got {:?}",
                self.rank
            )));
        }
        Ok(())
    }

    /// `(∇ + iξ) f` of a scalar field; `shift = 0` gives the plain gradient.
    pub fn shifted_gradient(&self, shift: &[f64]) -> Result<SpectralField> {
        self.expect_rank(Rank::Scalar, "gradient")?;
        let d = self.lattice.dim();
        let n = self.lattice.len();
        let mut out = SpectralField::zeros(&self.lattice, Rank::Vector);
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            for j in 0..d {
                out.data[j * n + idx] = C64::new(0.0, kappa[j] + shift[j]) * self.data[idx];
            }
        }
        out.refresh_reality(self.real && shift.iter().all(|&s| s == 0.0));
        Ok(out)
    }

    pub fn gradient(&self) -> Result<SpectralField> {
        self.shifted_gradient(&[0.0; 3])
    }

    /// `(∇ + iξ)· F` of a vector field.
    pub fn shifted_divergence(&self, shift: &[f64]) -> Result<SpectralField> {
        self.expect_rank(Rank::Vector, "divergence")?;
        let d = self.lattice.dim();
        let n = self.lattice.len();
        let mut out = SpectralField::zeros(&self.lattice, Rank::Scalar);
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            let mut acc = ZERO;
            for j in 0..d {
                acc += C64::new(0.0, kappa[j] + shift[j]) * self.data[j * n + idx];
            }
            out.data[idx] = acc;
        }
        out.refresh_reality(self.real && shift.iter().all(|&s| s == 0.0));
        Ok(out)
    }

    pub fn divergence(&self) -> Result<SpectralField> {
        self.shifted_divergence(&[0.0; 3])
    }

    /// Row divergence of a matrix field, `(∇·Y)_i = ∇_j Y_ij`.
    pub fn matrix_divergence(&self) -> Result<SpectralField> {
        self.expect_rank(Rank::Matrix, "matrix divergence")?;
        let d = self.lattice.dim();
        let n = self.lattice.len();
        let mut out = SpectralField::zeros(&self.lattice, Rank::Vector);
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            for i in 0..d {
                let mut acc = ZERO;
                for j in 0..d {
                    acc += C64::new(0.0, kappa[j]) * self.data[(i * d + j) * n + idx];
                }
                out.data[i * n + idx] = acc;
            }
        }
        out.refresh_reality(self.real);
        Ok(out)
    }

    /// `(∇×X)_ij = ∇_i X_j − ∇_j X_i` of a vector field.
    pub fn curl(&self) -> Result<SpectralField> {
        self.expect_rank(Rank::Vector, "curl")?;
        let d = self.lattice.dim();
        let n = self.lattice.len();
        let mut out = SpectralField::zeros(&self.lattice, Rank::Matrix);
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            for i in 0..d {
                for j in 0..d {
                    let v = C64::new(0.0, kappa[i]) * self.data[j * n + idx]
                        - C64::new(0.0, kappa[j]) * self.data[i * n + idx];
                    out.data[(i * d + j) * n + idx] = v;
                }
            }
        }
        out.refresh_reality(self.real);
        Ok(out)
    }

    /// `(−Δ)^{-1}` on every component; the field must have zero mean.
    pub fn inverse_laplacian(&self) -> Result<SpectralField> {
        self.apply_multiplier(|k| {
            let k2: f64 = k.iter().map(|x| x * x).sum();
            if k2 == 0.0 {
                None
            } else {
                Some(C64::new(1.0 / k2, 0.0))
            }
        })
    }

    /// `−Δ` on every component.
    pub fn neg_laplacian(&self) -> SpectralField {
        self.apply_multiplier(|k| Some(C64::new(k.iter().map(|x| x * x).sum(), 0.0)))
            .expect("regular multiplier")
    }

    /// Zero the mean of every component.
    pub fn without_mean(&self) -> SpectralField {
        let mut out = self.clone();
        let n = self.lattice.len();
        let z = self.lattice.zero_index();
        for c in 0..self.components() {
            out.data[c * n + z] = ZERO;
        }
        out
    }

    /// Translate by `z`: `f(· + z)`.
    pub fn translated(&self, z: &[f64]) -> SpectralField {
        let d = self.lattice.dim();
        let mut out = self
            .apply_multiplier(|k| {
                let phase: f64 = (0..d).map(|j| k[j] * z[j]).sum();
                Some(C64::new(libm::cos(phase), libm::sin(phase)))
            })
            .expect("regular multiplier");
        out.real = self.real;
        out
    }

    /// `(Σ_k (1 + |κ|²)^s |c_k|²)^{1/2}` summed over components.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        let n = self.lattice.len();
        let d = self.lattice.dim();
        let mut acc = 0.0;
        for idx in 0..n {
            let kappa = self.lattice.wavevector(idx);
            let k2: f64 = kappa[..d].iter().map(|x| x * x).sum();
            let w = if s == 0.0 { 1.0 } else { libm::pow(1.0 + k2, s) };
            for c in 0..self.components() {
                acc += w * self.data[c * n + idx].norm_sqr();
            }
        }
        libm::sqrt(acc)
    }

    /// The same coefficients on another lattice of equal dimension: modes
    /// outside the target are dropped, new modes are zero.
    pub fn resampled(&self, lattice: &FrequencyLattice) -> Result<SpectralField> {
        if lattice.dim() != self.lattice.dim() {
            return Err(Error::Incompatible("lattice dimensions differ".into()));
        }
        let d = lattice.dim();
        let (n_src, n_dst) = (self.lattice.len(), lattice.len());
        let mut out = SpectralField::zeros(lattice, self.rank);
        for idx in 0..n_src {
            let k = self.lattice.mode(idx);
            if let Some(j) = lattice.index_of(&k[..d]) {
                for c in 0..self.components() {
                    out.data[c * n_dst + j] = self.data[c * n_src + idx];
                }
            }
        }
        out.real = self.real;
        Ok(out)
    }

    /// Cell `L²` norm (Parseval).
    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|c| c.norm_sqr()).sum::<f64>())
    }

    fn check_compatible(&self, other: &SpectralField) -> Result<()> {
        if self.lattice != other.lattice {
            return Err(Error::Incompatible("fields live on different lattices".into()));
        }
        if self.rank != other.rank {
            return Err(Error::Incompatible(format!(
                "rank mismatch {:?} vs {:?}",
                self.rank, other.rank
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField> {
        self.axpy(C64::new(1.0, 0.0), other)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<SpectralField> {
        self.axpy(C64::new(-1.0, 0.0), other)
    }

    /// `self + alpha · other`.
    pub fn axpy(&self, alpha: C64, other: &SpectralField) -> Result<SpectralField> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (o, b) in out.data.iter_mut().zip(&other.data) {
            *o += alpha * b;
        }
        out.real = self.real && other.real && alpha.im == 0.0;
        Ok(out)
    }

    pub fn scale(&self, alpha: C64) -> SpectralField {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|c| *c *= alpha);
        out.real = self.real && alpha.im == 0.0;
        out
    }

    /// In-place `self += alpha · other`.
    pub fn add_assign_scaled(&mut self, alpha: C64, other: &SpectralField) -> Result<()> {
        self.check_compatible(other)?;
        for (o, b) in self.data.iter_mut().zip(&other.data) {
            *o += alpha * b;
        }
        self.real = self.real && other.real && alpha.im == 0.0;
        Ok(())
    }

    /// Add a constant to every component's mean.
    pub fn add_constant(&mut self, comp: usize, value: C64) {
        let n = self.lattice.len();
        let z = self.lattice.zero_index();
        self.data[comp * n + z] += value;
        if value.im != 0.0 {
            self.real = false;
        }
    }
}

/// Component pairs `(out, lhs, rhs)` for a pointwise product of the given ranks.
fn product_plan(lhs: Rank, rhs: Rank, d: usize) -> Result<(Rank, Vec<(usize, usize, usize)>)> {
    use Rank::*;
    let mut plan = Vec::new();
    let out = match (lhs, rhs) {
        (Scalar, r) => {
            for c in 0..r.components(d) {
                plan.push((c, 0, c));
            }
            r
        }
        (r, Scalar) => {
            for c in 0..r.components(d) {
                plan.push((c, c, 0));
            }
            r
        }
        (Matrix, Vector) => {
            for i in 0..d {
                for j in 0..d {
                    plan.push((i, i * d + j, j));
                }
            }
            Vector
        }
        (l, r) => {
            return Err(Error::Incompatible(format!(
                "pointwise product of {l:?} by {r:?} is not defined"
            )))
        }
    };
    Ok((out, plan))
}

/// Fourier coefficients of the pointwise product `f · g`, computed on the
/// `N`-point grid and truncated back to the retained modes.
///
/// Supported shapes: scalar by anything, anything by scalar, matrix by vector.
pub fn pointwise_product(f: &SpectralField, g: &SpectralField) -> Result<SpectralField> {
    if f.lattice != g.lattice {
        return Err(Error::Incompatible("fields live on different lattices".into()));
    }
    let lattice = &f.lattice;
    let d = lattice.dim();
    let (rank, plan) = product_plan(f.rank, g.rank, d)?;
    let fs = f.to_samples();
    let gs = g.to_samples();
    let gl = lattice.grid_len();
    let comps = rank.components(d);
    let mut acc = vec![ZERO; comps * gl];
    for &(o, a, b) in &plan {
        let (dst, fa, gb) = (
            &mut acc[o * gl..(o + 1) * gl],
            &fs[a * gl..(a + 1) * gl],
            &gs[b * gl..(b + 1) * gl],
        );
        for p in 0..gl {
            dst[p] += fa[p] * gb[p];
        }
    }
    let n = lattice.len();
    let mut data = vec![ZERO; comps * n];
    for c in 0..comps {
        lattice.analyze(&mut acc[c * gl..(c + 1) * gl], &mut data[c * n..(c + 1) * n]);
    }
    let mut out = SpectralField {
        lattice: lattice.clone(),
        rank,
        real: false,
        data,
    };
    out.refresh_reality(f.real && g.real);
    if out.real {
        out.enforce_reality();
    }
    Ok(out)
}

/// Transform arbitrary grid samples to the full `N^d` discrete spectrum
/// (normalized so index 0 is the mean). Lossless counterpart of
/// [`SpectralField::from_samples`] for data that is not band-limited.
pub fn grid_forward(lattice: &FrequencyLattice, samples: &[C64]) -> Result<Vec<C64>> {
    if samples.len() != lattice.grid_len() {
        return Err(Error::GridMismatch {
            expected: lattice.grid_len(),
            got: samples.len(),
        });
    }
    let mut buf = samples.to_vec();
    lattice.fft().forward(&mut buf);
    let s = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|c| *c *= s);
    Ok(buf)
}

/// Inverse of [`grid_forward`].
pub fn grid_inverse(lattice: &FrequencyLattice, spectrum: &[C64]) -> Result<Vec<C64>> {
    if spectrum.len() != lattice.grid_len() {
        return Err(Error::GridMismatch {
            expected: lattice.grid_len(),
            got: spectrum.len(),
        });
    }
    let mut buf = spectrum.to_vec();
    lattice.fft().inverse(&mut buf);
    Ok(buf)
}
