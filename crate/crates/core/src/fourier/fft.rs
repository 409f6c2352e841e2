//! Complex DFT on cubic grids. Radix-2 for power-of-two sizes, a tabulated
//! direct transform otherwise (only used for small or odd sizes).

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::C64;

#[derive(Debug, Clone)]
enum Kernel {
    Radix2 { twiddles: Vec<C64>, bitrev: Vec<usize> },
    Direct { table: Vec<C64> },
}

/// Unnormalized 1D transform of length `n`; `forward` uses `e^{-2πi jk/n}`.
#[derive(Debug, Clone)]
pub struct Fft1d {
    n: usize,
    kernel: Kernel,
}

fn root(k: usize, n: usize) -> C64 {
    let t = -2.0 * PI * (k as f64) / (n as f64);
    C64::new(libm::cos(t), libm::sin(t))
}

impl Fft1d {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let kernel = if n.is_power_of_two() {
            let bits = n.trailing_zeros();
            let bitrev = (0..n)
                .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
                .collect();
            let twiddles = (0..n / 2).map(|k| root(k, n)).collect();
            Kernel::Radix2 { twiddles, bitrev }
        } else {
            Kernel::Direct {
                table: (0..n).map(|k| root(k, n)).collect(),
            }
        };
        Fft1d { n, kernel }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place transform of `buf` (length `n`); `scratch` must hold at least `n` values.
    pub fn run(&self, buf: &mut [C64], scratch: &mut [C64], inverse: bool) {
        let n = self.n;
        debug_assert_eq!(buf.len(), n);
        match &self.kernel {
            Kernel::Radix2 { twiddles, bitrev } => {
                for i in 0..n {
                    let j = bitrev[i];
                    if i < j {
                        buf.swap(i, j);
                    }
                }
                let mut half = 1;
                while half < n {
                    let step = n / (2 * half);
                    for start in (0..n).step_by(2 * half) {
                        for k in 0..half {
                            let mut w = twiddles[k * step];
                            if inverse {
                                w = w.conj();
                            }
                            let a = buf[start + k];
                            let b = buf[start + k + half] * w;
                            buf[start + k] = a + b;
                            buf[start + k + half] = a - b;
                        }
                    }
                    half *= 2;
                }
            }
            Kernel::Direct { table } => {
                let out = &mut scratch[..n];
                for (k, o) in out.iter_mut().enumerate() {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, &x) in buf.iter().enumerate() {
                        let mut w = table[(j * k) % n];
                        if inverse {
                            w = w.conj();
                        }
                        acc += x * w;
                    }
                    *o = acc;
                }
                buf.copy_from_slice(out);
            }
        }
    }
}

/// Separable transform on an `n^dim` grid stored row-major (last axis fastest).
#[derive(Debug, Clone)]
pub struct FftNd {
    dim: usize,
    n: usize,
    line: Fft1d,
}

impl FftNd {
    pub fn new(dim: usize, n: usize) -> Self {
        FftNd {
            dim,
            n,
            line: Fft1d::new(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `data[x] -> Σ_x data[x] e^{-2πi k·x/n}` (no normalization).
    pub fn forward(&self, data: &mut [C64]) {
        self.run(data, false);
    }

    /// `data[k] -> Σ_k data[k] e^{+2πi k·x/n}` (no normalization).
    pub fn inverse(&self, data: &mut [C64]) {
        self.run(data, true);
    }

    fn run(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let total = self.len();
        assert_eq!(data.len(), total, "grid length mismatch");
        let mut line = vec![C64::new(0.0, 0.0); n];
        let mut scratch = vec![C64::new(0.0, 0.0); n];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            if stride == 1 {
                for chunk in data.chunks_exact_mut(n) {
                    self.line.run(chunk, &mut scratch, inverse);
                }
                continue;
            }
            let block = stride * n;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (i, v) in line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    self.line.run(&mut line, &mut scratch, inverse);
                    for (i, v) in line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }
    }
}
