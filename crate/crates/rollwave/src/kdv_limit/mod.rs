//! The weakly unstable limit F → 2⁺: cnoidal KdV waves, the selection
//! principle, correctors, the asymptotic roll-wave predictor, and Bloch
//! spectra of the small-δ KdV–KS equation.

pub mod elliptic;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use elliptic::{complementary, elliptic_e, elliptic_k, elliptic_ke, jacobi_am, jacobi_cn};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::hill::{self, SpectralCloud};
use crate::linalg::{lstsq_min_norm, solve_real};
use crate::linearize::kdvks_operator;
use crate::model::PhysicalParams;
use crate::profile::WaveProfile;
use crate::scalar::Real;

/// 𝒢(k), the cnoidal scale selected by the KdV–KS perturbation:
/// 𝒢² = (7/20)·N/D, the ratio ∫(cn²)'² / ∫(cn²)''² in closed form.
pub fn selection_kappa<T: Real>(k: T) -> Result<T> {
    if !(k > T::zero() && k < T::one()) {
        return Err(Error::domain(format!("modulus must lie in (0, 1), got {k}")));
    }
    let (kk, ee) = elliptic_ke(k)?;
    let k2 = k * k;
    let k4 = k2 * k2;
    let k6 = k4 * k2;
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let num = two * (k4 - k2 + T::one()) * ee - (T::one() - k2) * (two - k2) * kk;
    let den = (-two + three * k2 + three * k4 - two * k6) * ee + (k6 + k4 - T::lit(4.0) * k2 + two) * kk;
    let rad = T::lit(0.35) * num / den;
    if !(rad > T::zero()) {
        return Err(Error::domain(format!("selection radicand is non-positive at k = {k}")));
    }
    Ok(rad.sqrt())
}

/// X(k) = 2K(k)/𝒢(k).
pub fn period_of_k<T: Real>(k: T) -> Result<T> {
    Ok(T::lit(2.0) * elliptic_k(k)? / selection_kappa(k)?)
}

/// Smallest modulus on which the closed-form ratio is evaluated without
/// catastrophic cancellation.
const K_FLOOR: f64 = 0.02;

/// Inverse of [`period_of_k`] by bisection in k to |ΔX| ≤ 1e−10 (or until the
/// bracket collapses to adjacent doubles).
pub fn k_of_period(x: f64) -> Result<f64> {
    if !(x > 2.0 * PI) {
        return Err(Error::domain(format!("periods exist only for X > 2π, got {x}")));
    }
    let mut lo = K_FLOOR;
    let mut hi = 1.0 - f64::EPSILON / 2.0;
    let x_lo = period_of_k(lo)?;
    let x_hi = period_of_k(hi)?;
    if x < x_lo || x > x_hi {
        return Err(Error::domain(format!("period {x} outside the resolvable range [{x_lo}, {x_hi}]")));
    }
    // bisect in the complementary modulus near k = 1 to keep resolution
    for _ in 0..200 {
        let mid = if hi > 0.999 { 1.0 - ((1.0 - lo) * (1.0 - hi)).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        let xm = period_of_k(mid)?;
        if (xm - x).abs() <= 1e-10 {
            return Ok(mid);
        }
        if xm < x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (xl, xh) = (period_of_k(lo)?, period_of_k(hi)?);
    Ok(if (xl - x).abs() <= (xh - x).abs() { lo } else { hi })
}

/// Cnoidal KdV wave T₀(θ) = a₀ + 12k²κ²cn²(κθ, k), crest at θ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnoidalWave {
    pub a0: f64,
    pub k: f64,
    pub kappa: f64,
    pub sigma0: f64,
    pub qtilde: f64,
    #[serde(rename = "X")]
    pub period: f64,
    pub samples: Vec<f64>,
}

impl CnoidalWave {
    pub fn grid(&self) -> Grid {
        Grid::new(self.samples.len(), self.period)
    }

    /// Residual of T₀'' + T₀²/2 − σ₀T₀ − q̃ at the nodes.
    pub fn kdv_residual(&self) -> Vec<f64> {
        let d2 = self.grid().derivative(&self.samples, 2);
        self.samples.iter().zip(&d2).map(|(t, dd)| dd + 0.5 * t * t - self.sigma0 * t - self.qtilde).collect()
    }
}

pub fn cnoidal_profile(a0: f64, k: f64, kappa: f64, n: usize) -> Result<CnoidalWave> {
    if !(k > 0.0 && k < 1.0 && kappa > 0.0) {
        return Err(Error::domain("cnoidal wave needs 0 < k < 1 and kappa > 0"));
    }
    if !n.is_power_of_two() || n < 4 {
        return Err(Error::domain("sample count must be a power of two"));
    }
    let kk = elliptic_k(k)?;
    let period = 2.0 * kk / kappa;
    let amp = 12.0 * k * k * kappa * kappa;
    let samples = (0..n)
        .map(|j| {
            let th = period * j as f64 / n as f64;
            jacobi_cn(kappa * th, k).map(|c| a0 + amp * c * c)
        })
        .collect::<Result<Vec<_>>>()?;
    let s = 4.0 * kappa * kappa * (2.0 * k * k - 1.0);
    Ok(CnoidalWave {
        a0,
        k,
        kappa,
        sigma0: a0 + s,
        qtilde: 24.0 * k * k * (1.0 - k * k) * kappa.powi(4) - a0 * (0.5 * a0 + s),
        period,
        samples,
    })
}

/// ∫ T₀(T₀'' + T₀'''') over one period.
pub fn selection_residual(w: &CnoidalWave) -> f64 {
    let g = w.grid();
    let d2 = g.derivative(&w.samples, 2);
    let d4 = g.derivative(&w.samples, 4);
    let f: Vec<f64> = (0..w.samples.len()).map(|i| w.samples[i] * (d2[i] + d4[i])).collect();
    g.integrate(&f)
}

/// Dense real matrix of ℒ₀ = −∂(∂² + T₀ − σ₀) on the wave's grid.
fn l0_matrix(w: &CnoidalWave) -> Vec<f64> {
    let n = w.samples.len();
    let g = w.grid();
    let d1 = g.diff_matrix_1();
    let d2 = g.diff_matrix_2();
    // inner = D2 + diag(T₀ − σ₀)
    let mut inner = d2;
    for i in 0..n {
        inner[i * n + i] += w.samples[i] - w.sigma0;
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = d1[i * n + k];
            if a == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] -= a * inner[k * n + j];
            }
        }
    }
    out
}

fn solve_l0(w: &CnoidalWave, rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let l0 = l0_matrix(w);
    let a: Vec<Complex64> = l0.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let b: Vec<Complex64> = rhs.iter().map(|x| Complex64::new(*x, 0.0)).collect();
    let (x, _) = lstsq_min_norm(&a, n, n, &b, 1e-10)?;
    let sol: Vec<f64> = x.iter().map(|z| z.re).collect();
    let scale = rhs.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
    let mut res = 0.0f64;
    for i in 0..n {
        let r: f64 = (0..n).map(|j| l0[i * n + j] * sol[j]).sum::<f64>() - rhs[i];
        res = res.max(r.abs());
    }
    if res > 1e-7 * scale {
        return Err(Error::Solvability(format!("corrector residual {res:e} relative to {scale:e}")));
    }
    Ok(sol)
}

/// First corrector: ℒ₀T₁ = T₀'' + T₀'''', minimum-norm (orthogonal to the kernel).
pub fn corrector_t1(w: &CnoidalWave) -> Result<Vec<f64>> {
    let g = w.grid();
    let d2 = g.derivative(&w.samples, 2);
    let d4 = g.derivative(&w.samples, 4);
    let rhs: Vec<f64> = d2.iter().zip(&d4).map(|(a, b)| a + b).collect();
    solve_l0(w, &rhs)
}

/// Second corrector: ℒ₀T₂ = (T₁²/2 − σ₂T₀)' + T₁'' + T₁''''.
pub fn corrector_t2(w: &CnoidalWave, t1: &[f64], sigma2: f64) -> Result<Vec<f64>> {
    let g = w.grid();
    let inner: Vec<f64> = t1.iter().zip(&w.samples).map(|(a, t)| 0.5 * a * a - sigma2 * t).collect();
    let d = g.derivative(&inner, 1);
    let d2 = g.derivative(t1, 2);
    let d4 = g.derivative(t1, 4);
    let rhs: Vec<f64> = (0..t1.len()).map(|i| d[i] + d2[i] + d4[i]).collect();
    solve_l0(w, &rhs)
}

/// Periodic KdV–KS traveling wave −σv + v²/2 + v'' + δ(v' + v''') = q̃ with
/// (q̃, period) fixed and σ free, seeded from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdvKsWave {
    pub delta: f64,
    pub sigma: f64,
    pub qtilde: f64,
    pub period: f64,
    pub v: Vec<f64>,
    pub residual: f64,
}

pub fn kdvks_profile(delta: f64, seed: &[f64], sigma: f64, qtilde: f64, period: f64, tol: f64) -> Result<KdvKsWave> {
    let n = seed.len();
    let g = Grid::new(n, period);
    let d1 = g.diff_matrix_1();
    let d2 = g.diff_matrix_2();
    let mut d3 = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let a = d1[i * n + k];
            for j in 0..n {
                d3[i * n + j] += a * d2[k * n + j];
            }
        }
    }
    let dir = g.derivative(seed, 1);
    let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let dir: Vec<f64> = dir.iter().map(|x| x / nrm).collect();
    let mut v = seed.to_vec();
    let mut sigma = sigma;
    let resid = |v: &[f64], sigma: f64| -> Vec<f64> {
        let v1 = g.derivative(v, 1);
        let v2 = g.derivative(v, 2);
        let v3 = g.derivative(v, 3);
        let mut r: Vec<f64> = (0..n).map(|i| -sigma * v[i] + 0.5 * v[i] * v[i] + v2[i] + delta * (v1[i] + v3[i]) - qtilde).collect();
        r.push((0..n).map(|i| (v[i] - seed[i]) * dir[i]).sum());
        r
    };
    let mut r = resid(&v, sigma);
    for it in 0..30 {
        let res = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
        if res <= tol {
            return Ok(KdvKsWave { delta, sigma, qtilde, period, v, residual: res });
        }
        let m = n + 1;
        let mut j = vec![0.0; m * m];
        for i in 0..n {
            for k in 0..n {
                j[i * m + k] = d2[i * n + k] + delta * (d1[i * n + k] + d3[i * n + k]);
            }
            j[i * m + i] += v[i] - sigma;
            j[i * m + n] = -v[i];
            j[n * m + i] = dir[i];
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let (dx, _) = solve_real(&j, m, &rhs)?;
        for i in 0..n {
            v[i] += dx[i];
        }
        sigma += dx[n];
        r = resid(&v, sigma);
        if it == 29 {
            break;
        }
    }
    let res = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if res <= tol {
        return Ok(KdvKsWave { delta, sigma, qtilde, period, v, residual: res });
    }
    Err(Error::NonConvergence { residual: res, iterations: 30 })
}

/// Asymptotic St. Venant roll wave near F = 2 with its predicted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticWave {
    pub delta: f64,
    pub wave: CnoidalWave,
    pub profile: WaveProfile,
    /// Speed with the F = 2 reference c₀ = τ₀^{-3/2}/2.
    pub c_reference: f64,
    /// Speed with the Hopf reference c_s = τ₀^{-3/2}/F.
    pub c_hopf: f64,
    /// Outflow from the displayed closed form in the Hopf reference.
    pub q_closed_form: f64,
}

/// Predicted roll wave at F = 2 + δ² from T₀ + δ̃T₁. The outflow attached to the
/// profile is the one balancing ∫(1 − τ̄(q − c̄τ̄)²) = 0 for the predicted τ̄ and c̄.
pub fn asymptotic_rollwave(delta: f64, a0: f64, k: f64, tau0: f64, nu: f64, n: usize) -> Result<AsymptoticWave> {
    if !(delta > 0.0 && tau0 > 0.0 && nu > 0.0) {
        return Err(Error::domain("delta, tau0 and nu must be positive"));
    }
    let kappa = selection_kappa(k)?;
    let wave = cnoidal_profile(a0, k, kappa, n)?;
    let t1 = corrector_t1(&wave)?;
    let dt = delta / (2.0 * tau0.powf(0.25) * nu.sqrt());
    let froude = 2.0 + delta * delta;
    let stretch = tau0.powf(1.25) * delta / nu.sqrt();
    let period = wave.period / stretch;
    // x ∈ [0, X_δ) maps to θ = stretch·x on the same node indices
    let tau: Vec<f64> = (0..n).map(|i| tau0 - delta * delta * tau0 / 3.0 * (wave.samples[i] + dt * t1[i])).collect();
    let sigma = wave.sigma0;
    let c_reference = tau0.powf(-1.5) / 2.0 + delta * delta * sigma / (4.0 * tau0.powf(1.5));
    let c_hopf = tau0.powf(-1.5) / froude + delta * delta * sigma / (4.0 * tau0.powf(1.5));
    let u0 = tau0.powf(-0.5);
    let q_closed_form = u0 + c_hopf * tau0 + delta * delta / (12.0 * tau0.sqrt()) * wave.qtilde;
    let c = c_reference;
    let g = Grid::new(n, period);
    let m1 = g.integrate(&tau);
    let m2 = g.integrate(&tau.iter().map(|t| t * t).collect::<Vec<_>>());
    let m3 = g.integrate(&tau.iter().map(|t| t * t * t).collect::<Vec<_>>());
    // q²m1 − 2qc m2 + c²m3 − X = 0, root nearest u₀ + cτ₀
    let (a, b, cc) = (m1, -2.0 * c * m2, c * c * m3 - period);
    let disc = b * b - 4.0 * a * cc;
    if disc < 0.0 {
        return Err(Error::domain("no real outflow balances the predicted profile"));
    }
    let guess = u0 + c * tau0;
    let r1 = (-b + disc.sqrt()) / (2.0 * a);
    let r2 = (-b - disc.sqrt()) / (2.0 * a);
    let q = if (r1 - guess).abs() < (r2 - guess).abs() { r1 } else { r2 };
    let params = PhysicalParams::new(froude, nu, q, c, period)?.with_tau0(tau0)?;
    let profile = WaveProfile::from_samples(params, tau, f64::NAN, &format!("kdv asymptotics delta={delta}"));
    Ok(AsymptoticWave { delta, wave, profile, c_reference, c_hopf, q_closed_form })
}

/// Which approximation of the KdV–KS wave enters the Bloch operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdvKsBase {
    /// T₀ + δT₁ with σ = σ₀.
    Corrected,
    /// The periodic KdV–KS wave itself, by Newton from T₀ + δT₁.
    Exact,
}

/// Bloch spectrum of the KdV–KS operator about the wave with modulus `k`
/// and κ = 𝒢(k). `modes` is N (2N+1 Fourier modes).
pub fn kdvks_hill_spectrum(
    delta: f64,
    a0: f64,
    k: f64,
    modes: usize,
    xi_grid: &[f64],
    base: KdvKsBase,
    threads: usize,
) -> Result<SpectralCloud> {
    if !(delta >= 0.0 && delta <= 0.1) {
        return Err(Error::domain("delta must lie in [0, 0.1]"));
    }
    let n = (4 * modes + 2).next_power_of_two().max(64);
    let (v, sigma, period) = kdvks_base(delta, a0, k, n, base)?;
    let problem = kdvks_operator(&v, period, sigma, delta);
    hill::spectrum(&problem, modes, xi_grid, hill::Convention::Fundamental, threads)
}

/// Sampled base wave (v, σ, period) for the KdV–KS Bloch operator.
pub fn kdvks_base(delta: f64, a0: f64, k: f64, n: usize, base: KdvKsBase) -> Result<(Vec<f64>, f64, f64)> {
    let kappa = selection_kappa(k)?;
    let w = cnoidal_profile(a0, k, kappa, n)?;
    if delta == 0.0 {
        return Ok((w.samples.clone(), w.sigma0, w.period));
    }
    let t1 = corrector_t1(&w)?;
    let v: Vec<f64> = w.samples.iter().zip(&t1).map(|(a, b)| a + delta * b).collect();
    match base {
        KdvKsBase::Corrected => Ok((v, w.sigma0, w.period)),
        KdvKsBase::Exact => {
            let ex = kdvks_profile(delta, &v, w.sigma0, w.qtilde, w.period, 1e-10)?;
            Ok((ex.v, ex.sigma, ex.period))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blake_anchors() {
        let x = period_of_k(0.199910210210210f64).unwrap();
        assert!((x - 6.284).abs() / 6.284 < 1e-3, "{x}");
        let x = period_of_k(0.9421f64).unwrap();
        assert!((8.38..=8.50).contains(&x), "{x}");
        let x = period_of_k(0.99999838520f64).unwrap();
        assert!((x - 26.057).abs() / 26.057 < 1e-3, "{x}");
        let x = period_of_k(0.999999999997f64).unwrap();
        assert!((x - 48.3).abs() / 48.3 < 1e-2, "{x}");
    }

    #[test]
    fn inverse_period() {
        for k in [0.3, 0.7, 0.95] {
            let x = period_of_k(k).unwrap();
            assert!((k_of_period(x).unwrap() - k).abs() < 1e-9);
        }
        assert!(k_of_period(2.0 * PI).is_err());
        assert!(k_of_period(6.0).is_err());
    }

    #[test]
    fn period_monotone() {
        let mut prev = 0.0;
        for i in 0..100 {
            let k = 0.2 + (0.999 - 0.2) * i as f64 / 99.0;
            let x = period_of_k(k).unwrap();
            assert!(x > prev);
            prev = x;
        }
    }

    #[test]
    fn cnoidal_solves_kdv() {
        let k = 0.9;
        let w = cnoidal_profile(0.0, k, selection_kappa(k).unwrap(), 128).unwrap();
        let scale = w.samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for r in w.kdv_residual() {
            assert!(r.abs() < 1e-9 * scale.max(1.0), "{r}");
        }
        let (lo, hi) = w.samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        assert!((hi - lo - 12.0 * k * k * w.kappa * w.kappa).abs() < 1e-12);
        let g = w.kappa;
        assert!((w.qtilde - 24.0 * k * k * (1.0 - k * k) * g.powi(4)).abs() < 1e-14);
    }

    #[test]
    fn grid_doubling_is_consistent() {
        let k = 0.8;
        let kap = selection_kappa(k).unwrap();
        let a = cnoidal_profile(0.3, k, kap, 64).unwrap();
        let b = cnoidal_profile(0.3, k, kap, 128).unwrap();
        for i in 0..64 {
            assert!((a.samples[i] - b.samples[2 * i]).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_residual_simple_zero() {
        let k = 0.8;
        let g = selection_kappa(k).unwrap();
        let w = cnoidal_profile(0.0, k, g, 256).unwrap();
        let scale = {
            let d4 = w.grid().derivative(&w.samples, 4);
            w.grid().integrate(&w.samples.iter().zip(&d4).map(|(a, b)| (a * b).abs()).collect::<Vec<_>>())
        };
        assert!(selection_residual(&w).abs() <= 1e-8 * scale);
        let lo = selection_residual(&cnoidal_profile(0.0, k, 0.9 * g, 256).unwrap());
        let hi = selection_residual(&cnoidal_profile(0.0, k, 1.1 * g, 256).unwrap());
        assert!(lo * hi < 0.0, "{lo} {hi}");
        let shifted = selection_residual(&cnoidal_profile(5.0, k, 1.1 * g, 256).unwrap());
        assert!((shifted - hi).abs() <= 1e-8 * hi.abs().max(scale));
    }

    #[test]
    fn first_corrector_is_odd_and_solves() {
        let k = 0.9;
        let w = cnoidal_profile(0.0, k, selection_kappa(k).unwrap(), 128).unwrap();
        let t1 = corrector_t1(&w).unwrap();
        let n = t1.len();
        for i in 1..n {
            assert!((t1[i] + t1[n - i]).abs() < 1e-8, "{} {}", t1[i], t1[n - i]);
        }
        let g = w.grid();
        let lhs = {
            let inner: Vec<f64> = (0..n).map(|i| g.derivative(&t1, 2)[i] + (w.samples[i] - w.sigma0) * t1[i]).collect();
            g.derivative(&inner, 1).iter().map(|x| -x).collect::<Vec<_>>()
        };
        let d2 = g.derivative(&w.samples, 2);
        let d4 = g.derivative(&w.samples, 4);
        let scale = d4.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for i in 0..n {
            assert!((lhs[i] - d2[i] - d4[i]).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn mis_selected_corrector_is_unsolvable() {
        let k = 0.9;
        let w = cnoidal_profile(0.0, k, 1.2 * selection_kappa(k).unwrap(), 128).unwrap();
        assert!(matches!(corrector_t1(&w), Err(Error::Solvability(_))));
    }
}
