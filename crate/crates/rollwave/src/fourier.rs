//! Trigonometric interpolation on uniform periodic grids.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// FFT-backed spectral operations for `n` uniform nodes on `[0, period)`.
#[derive(Clone)]
pub struct Grid {
    n: usize,
    period: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("n", &self.n).field("period", &self.period).finish()
    }
}

/// Signed wavenumber index of FFT slot `j`.
pub fn wavenumber(j: usize, n: usize) -> i64 {
    if j <= n / 2 { j as i64 } else { j as i64 - n as i64 }
}

impl Grid {
    pub fn new(n: usize, period: f64) -> Self {
        assert!(n >= 2 && n.is_power_of_two(), "grid size must be a power of two");
        let mut planner = FftPlanner::new();
        Self { n, period, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.period * j as f64 / self.n as f64).collect()
    }

    /// Normalized coefficients: v(x) = Σ_k ĉ_k e^{2πikx/X}, FFT slot order.
    pub fn coefficients(&self, v: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    pub fn coefficients_complex(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        self.fwd.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter_mut().for_each(|z| *z *= s);
        buf
    }

    pub fn synthesize(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        let mut buf = coeffs.to_vec();
        self.inv.process(&mut buf);
        buf
    }

    fn symbol(&self, j: usize, order: u32) -> Complex64 {
        let k = wavenumber(j, self.n);
        if order % 2 == 1 && self.n % 2 == 0 && j == self.n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        let w = Complex64::new(0.0, 2.0 * PI * k as f64 / self.period);
        w.powu(order)
    }

    /// Spectral derivative of the given order.
    pub fn derivative(&self, v: &[f64], order: u32) -> Vec<f64> {
        let mut c = self.coefficients(v);
        for (j, z) in c.iter_mut().enumerate() {
            *z *= self.symbol(j, order);
        }
        self.synthesize(&c).into_iter().map(|z| z.re).collect()
    }

    pub fn derivative_complex(&self, v: &[Complex64], order: u32) -> Vec<Complex64> {
        let mut c = self.coefficients_complex(v);
        for (j, z) in c.iter_mut().enumerate() {
            *z *= self.symbol(j, order);
        }
        self.synthesize(&c)
    }

    /// Exact integral over one period.
    pub fn integrate(&self, v: &[f64]) -> f64 {
        self.period * v.iter().sum::<f64>() / self.n as f64
    }

    /// Trigonometric interpolation onto `m` uniform nodes (m a power of two).
    pub fn resample(&self, v: &[f64], m: usize) -> Vec<f64> {
        resample(v, m)
    }

    /// Dense first-derivative collocation matrix (row-major).
    pub fn diff_matrix_1(&self) -> Vec<f64> {
        let n = self.n;
        let h = 2.0 * PI / n as f64;
        let s = 2.0 * PI / self.period;
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let k = i as i64 - j as i64;
                    let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    d[i * n + j] = s * 0.5 * sign / (0.5 * k as f64 * h).tan();
                }
            }
        }
        d
    }

    /// Dense second-derivative collocation matrix (row-major).
    pub fn diff_matrix_2(&self) -> Vec<f64> {
        let n = self.n;
        let h = 2.0 * PI / n as f64;
        let s2 = (2.0 * PI / self.period).powi(2);
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                d[i * n + j] = if i == j {
                    s2 * (-PI * PI / (3.0 * h * h) - 1.0 / 6.0)
                } else {
                    let k = i as i64 - j as i64;
                    let sign = if k.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                    s2 * (-0.5 * sign / (0.5 * k as f64 * h).sin().powi(2))
                };
            }
        }
        d
    }
}

/// Trigonometric interpolation of periodic samples onto `m` uniform nodes.
pub fn resample(v: &[f64], m: usize) -> Vec<f64> {
    let n = v.len();
    if m == n {
        return v.to_vec();
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let slot = |k: i64| k.rem_euclid(m as i64) as usize;
    if m > n {
        for (j, z) in buf.iter().enumerate() {
            let k = wavenumber(j, n);
            let z = *z / n as f64;
            if n % 2 == 0 && j == n / 2 {
                out[slot(k)] += 0.5 * z;
                out[slot(-k)] += 0.5 * z;
            } else {
                out[slot(k)] += z;
            }
        }
    } else {
        let half = (m / 2) as i64;
        for (j, z) in buf.iter().enumerate() {
            let k = wavenumber(j, n);
            if k.abs() <= half {
                out[slot(k)] += *z / n as f64;
            }
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    out.into_iter().map(|z| z.re).collect()
}

/// Evaluates a trigonometric series with FFT-ordered coefficients at `x`.
pub fn eval_series(coeffs: &[Complex64], period: f64, x: f64) -> f64 {
    let n = coeffs.len();
    let w = Complex64::from_polar(1.0, 2.0 * PI * x / period);
    let mut acc = coeffs[0].re;
    let mut p = Complex64::new(1.0, 0.0);
    for k in 1..n.div_ceil(2) {
        p *= w;
        acc += 2.0 * (coeffs[k] * p).re;
    }
    if n % 2 == 0 {
        let ny = n / 2;
        acc += (coeffs[ny] * w.powu(ny as u32)).re;
    }
    acc
}

/// Real trigonometric series truncated to the modes that matter, evaluated with
/// a power recurrence. Coefficients are stored for k = 0..=K (real signal).
#[derive(Debug, Clone)]
pub struct RealSeries {
    pub period: f64,
    pub half: Vec<Complex64>,
}

impl RealSeries {
    /// Builds from samples, dropping modes below `rel_floor` of the largest.
    pub fn from_samples(v: &[f64], period: f64, rel_floor: f64) -> Self {
        let g = Grid::new(v.len(), period);
        let c = g.coefficients(v);
        let n = v.len();
        let mut half: Vec<Complex64> = (0..n / 2).map(|k| if k == 0 { c[0] } else { 2.0 * c[k] }).collect();
        let scale = half.iter().map(|z| z.norm()).fold(0.0, f64::max);
        while half.len() > 1 && half.last().map(|z| z.norm() <= rel_floor * scale).unwrap_or(false) {
            half.pop();
        }
        Self { period, half }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let w = Complex64::from_polar(1.0, 2.0 * PI * x / self.period);
        let mut p = Complex64::new(1.0, 0.0);
        let mut acc = self.half[0].re;
        for z in &self.half[1..] {
            p *= w;
            acc += (z * p).re;
        }
        acc
    }
}
