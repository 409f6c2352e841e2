//! Small deterministic statistics helpers.

use alloc::vec::Vec;

/// Pairwise (cascade) summation in a fixed order.
pub fn pairwise_sum(x: &[f64]) -> f64 {
    match x.len() {
        0 => 0.0,
        1 => x[0],
        n if n <= 8 => x.iter().sum(),
        n => pairwise_sum(&x[..n / 2]) + pairwise_sum(&x[n / 2..]),
    }
}

/// Sample mean and standard error (`sd / √n`, unbiased variance).
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(x) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, libm::sqrt(var / n as f64))
}

/// Least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    linear_fit(&lx, &ly).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive() {
        let x: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = x.iter().sum();
        assert!((pairwise_sum(&x) - naive).abs() < 1e-10);
    }

    #[test]
    fn stderr_of_two_points() {
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slope_of_power_law() {
        let x = [0.4, 0.2, 0.1, 0.05];
        let y: Vec<f64> = x.iter().map(|e| 3.0 * e * e).collect();
        assert!((log_log_slope(&x, &y) - 2.0).abs() < 1e-12);
    }
}
