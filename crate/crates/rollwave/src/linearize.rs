//! Linearized Bloch problems about periodic profiles, in second-order (Hill)
//! and first-order (Evans) form.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::{resample, Grid, RealSeries};
use crate::model::PhysicalParams;
use crate::profile::{HamOrbit, LimitProfile, WaveProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Physical,
    AlphaM2FiniteF,
    AlphaM2Limit,
    HamLimit,
    KdvKs,
    Custom,
}

/// `coeff(x) ∂^deriv`, with the coefficient sampled on a uniform grid.
#[derive(Debug, Clone)]
pub struct Term {
    pub deriv: u32,
    pub coeff: Vec<f64>,
}

/// What multiplies the spectral parameter in the Hill form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mass {
    /// λ v = L v.
    Identity,
    /// λ ∂v = L v (scalar problems only).
    Derivative,
}

/// Block operator L = [L_ij], each block a sum of [`Term`]s.
#[derive(Debug, Clone)]
pub struct HillForm {
    pub order: usize,
    pub nodes: usize,
    pub blocks: Vec<Vec<Vec<Term>>>,
    pub mass: Mass,
}

/// A(x, λ) = A_c(x) + λ A_l(x) for Z' = A Z, each entry a trigonometric series.
#[derive(Debug, Clone)]
pub struct FirstOrder {
    pub dim: usize,
    pub period: f64,
    pub ac: Vec<Option<RealSeries>>,
    pub al: Vec<Option<RealSeries>>,
}

impl FirstOrder {
    fn empty(dim: usize, period: f64) -> Self {
        Self { dim, period, ac: vec![None; dim * dim], al: vec![None; dim * dim] }
    }

    fn set(&mut self, lam: bool, i: usize, j: usize, v: &[f64]) {
        let s = RealSeries::from_samples(v, self.period, 1e-17);
        let slot = i * self.dim + j;
        if lam {
            self.al[slot] = Some(s);
        } else {
            self.ac[slot] = Some(s);
        }
    }

    /// Writes the row-major matrices A_c(x) and A_l(x).
    pub fn eval_parts(&self, x: f64, ac: &mut [f64], al: &mut [f64]) {
        let len = self.ac.iter().chain(&self.al).flatten().map(|s| s.half.len()).max().unwrap_or(1);
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * x / self.period);
        let mut pw = Vec::with_capacity(len);
        let mut p = Complex64::new(1.0, 0.0);
        for _ in 0..len {
            pw.push(p);
            p *= w;
        }
        let sum = |s: &Option<RealSeries>| {
            s.as_ref().map_or(0.0, |s| s.half.iter().zip(&pw).map(|(z, p)| z.re * p.re - z.im * p.im).sum())
        };
        for (slot, s) in self.ac.iter().enumerate() {
            ac[slot] = sum(s);
        }
        for (slot, s) in self.al.iter().enumerate() {
            al[slot] = sum(s);
        }
    }

    /// Row-major A(x, λ).
    pub fn eval(&self, x: f64, lambda: Complex64) -> Vec<Complex64> {
        let d2 = self.dim * self.dim;
        let (mut ac, mut al) = (vec![0.0; d2], vec![0.0; d2]);
        self.eval_parts(x, &mut ac, &mut al);
        ac.iter().zip(&al).map(|(c, l)| Complex64::new(*c, 0.0) + lambda * *l).collect()
    }

    /// ∫₀^X tr A(x, λ) dx, exact for the stored series.
    pub fn trace_integral(&self, lambda: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.dim {
            let slot = i * self.dim + i;
            if let Some(s) = &self.ac[slot] {
                acc += s.half[0].re * self.period;
            }
            if let Some(s) = &self.al[slot] {
                acc += lambda * s.half[0].re * self.period;
            }
        }
        acc
    }
}

#[derive(Debug, Clone)]
enum Source {
    Physical { params: PhysicalParams, tau: Vec<f64> },
    AlphaM2 { q0: f64, nu: f64, k0: f64, c0: f64, froude: Option<f64>, a: Vec<f64> },
    Ham { h: Vec<f64> },
    KdvKs { delta: f64, sigma: f64, v: Vec<f64> },
    Fixed(HillForm),
}

/// A linearized periodic eigenvalue problem.
#[derive(Debug, Clone)]
pub struct SpectralProblem {
    pub kind: ProblemKind,
    pub period: f64,
    source: Source,
    first_order: Option<FirstOrder>,
}

fn pow_f(v: &[f64], p: i32) -> Vec<f64> {
    v.iter().map(|x| x.powi(p)).collect()
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect()
}

fn constant(m: usize, v: f64) -> Vec<f64> {
    vec![v; m]
}

fn term(deriv: u32, coeff: Vec<f64>) -> Term {
    Term { deriv, coeff }
}

/// Pointwise coefficient fields of the physical Bloch problem.
#[derive(Debug, Clone)]
pub struct BlochCoefficients {
    pub tau: Vec<f64>,
    pub dtau: Vec<f64>,
    pub u: Vec<f64>,
    pub alpha: Vec<f64>,
    pub dalpha: Vec<f64>,
}

fn physical_fields(params: &PhysicalParams, tau: &[f64]) -> BlochCoefficients {
    let g = Grid::new(tau.len(), params.period);
    let d1 = g.derivative(tau, 1);
    let d2 = g.derivative(tau, 2);
    let (f2, c, nu) = (params.froude.powi(-2), params.c, params.nu);
    let mut alpha = Vec::with_capacity(tau.len());
    let mut dalpha = Vec::with_capacity(tau.len());
    for i in 0..tau.len() {
        let t = tau[i];
        let inner = f2 + 2.0 * c * nu * d1[i];
        alpha.push(inner / t.powi(3));
        dalpha.push(-3.0 * d1[i] * inner / t.powi(4) + 2.0 * c * nu * d2[i] / t.powi(3));
    }
    let u = tau.iter().map(|t| params.q - c * t).collect();
    BlochCoefficients { tau: tau.to_vec(), dtau: d1, u, alpha, dalpha }
}

impl SpectralProblem {
    /// Problem given directly by its Hill form (coefficients resampled on demand).
    pub fn from_hill_form(period: f64, form: HillForm) -> Self {
        Self { kind: ProblemKind::Custom, period, source: Source::Fixed(form), first_order: None }
    }

    pub fn first_order(&self) -> Option<&FirstOrder> {
        self.first_order.as_ref()
    }

    /// Number of unknown fields in the Hill form.
    pub fn order(&self) -> usize {
        match &self.source {
            Source::Physical { .. } | Source::AlphaM2 { .. } => 2,
            Source::Ham { .. } | Source::KdvKs { .. } => 1,
            Source::Fixed(f) => f.order,
        }
    }

    pub fn mass(&self) -> Mass {
        match &self.source {
            Source::Ham { .. } => Mass::Derivative,
            Source::Fixed(f) => f.mass,
            _ => Mass::Identity,
        }
    }

    /// Native sample count of the underlying profile.
    pub fn native_nodes(&self) -> usize {
        match &self.source {
            Source::Physical { tau, .. } => tau.len(),
            Source::AlphaM2 { a, .. } => a.len(),
            Source::Ham { h } => h.len(),
            Source::KdvKs { v, .. } => v.len(),
            Source::Fixed(f) => f.nodes,
        }
    }

    /// Hill form with coefficients evaluated on `m` uniform nodes.
    pub fn hill_form(&self, m: usize) -> HillForm {
        let g = Grid::new(m, self.period);
        match &self.source {
            Source::Physical { params, tau } => {
                let t = resample(tau, m);
                let f = physical_fields(params, &t);
                let (c, nu) = (params.c, params.nu);
                let tm2 = pow_f(&t, -2);
                let dtm2: Vec<f64> = zip_map(&t, &f.dtau, |t, d| -2.0 * d / t.powi(3));
                let b10 = vec![term(1, f.alpha.clone()), term(0, zip_map(&f.dalpha, &f.u, |da, u| da - u * u))];
                let b11 = vec![
                    term(2, tm2.iter().map(|x| nu * x).collect()),
                    term(1, dtm2.iter().map(|x| nu * x + c).collect()),
                    term(0, zip_map(&f.u, &t, |u, t| -2.0 * u * t)),
                ];
                HillForm {
                    order: 2,
                    nodes: m,
                    blocks: vec![vec![vec![term(1, constant(m, c))], vec![term(1, constant(m, 1.0))]], vec![b10, b11]],
                    mass: Mass::Identity,
                }
            }
            Source::AlphaM2 { q0, nu, k0, c0, froude, a } => {
                let a = resample(a, m);
                let da: Vec<f64> = g.derivative(&a, 1).iter().map(|x| k0 * x).collect();
                let dda: Vec<f64> = g.derivative(&a, 2).iter().map(|x| k0 * k0 * x).collect();
                let finv = froude.map_or(0.0, |f| 1.0 / f);
                let bbar: Vec<f64> = a.iter().map(|x| q0 - c0 * x * finv).collect();
                let gfun = zip_map(&a, &da, |a, d| d / a.powi(3));
                let dg: Vec<f64> = (0..m).map(|i| -3.0 * da[i].powi(2) / a[i].powi(4) + dda[i] / a[i].powi(3)).collect();
                let (k1, k2) = (*k0, k0 * k0);
                let b10 = vec![
                    term(1, (0..m).map(|i| k1 * (a[i].powi(-3) + 2.0 * c0 * nu * gfun[i])).collect()),
                    term(0, (0..m).map(|i| -3.0 * da[i] / a[i].powi(4) + 2.0 * c0 * nu * dg[i] - bbar[i].powi(2)).collect()),
                ];
                let b11 = vec![
                    term(2, a.iter().map(|x| k2 * nu * x.powi(-2)).collect()),
                    term(1, (0..m).map(|i| k1 * (c0 - 2.0 * nu * da[i] / a[i].powi(3))).collect()),
                    term(0, (0..m).map(|i| -2.0 * a[i] * bbar[i] * finv).collect()),
                ];
                HillForm {
                    order: 2,
                    nodes: m,
                    blocks: vec![
                        vec![vec![term(1, constant(m, k1 * c0))], vec![term(1, constant(m, k1))]],
                        vec![b10, b11],
                    ],
                    mass: Mass::Identity,
                }
            }
            Source::Ham { h } => {
                let h = resample(h, m);
                HillForm {
                    order: 1,
                    nodes: m,
                    blocks: vec![vec![vec![term(2, constant(m, 1.0)), term(0, pow_f(&h, -2))]]],
                    mass: Mass::Derivative,
                }
            }
            Source::KdvKs { delta, sigma, v } => {
                let v = resample(v, m);
                let dv = g.derivative(&v, 1);
                HillForm {
                    order: 1,
                    nodes: m,
                    blocks: vec![vec![vec![
                        term(1, v.iter().map(|x| sigma - x).collect()),
                        term(0, dv.iter().map(|x| -x).collect()),
                        term(3, constant(m, -1.0)),
                        term(2, constant(m, -delta)),
                        term(4, constant(m, -delta)),
                    ]]],
                    mass: Mass::Identity,
                }
            }
            Source::Fixed(f) => HillForm {
                order: f.order,
                nodes: m,
                blocks: f
                    .blocks
                    .iter()
                    .map(|row| {
                        row.iter()
                            .map(|b| b.iter().map(|t| term(t.deriv, resample(&t.coeff, m))).collect())
                            .collect()
                    })
                    .collect(),
                mass: f.mass,
            },
        }
    }
}

fn first_order_nodes(n: usize) -> usize {
    (2 * n).max(64)
}

/// Coefficient fields of the physical problem on the profile grid.
pub fn bloch_fields(profile: &WaveProfile) -> BlochCoefficients {
    physical_fields(&profile.params, &profile.tau)
}

fn check_positive_u(params: &PhysicalParams, tau: &[f64]) -> Result<()> {
    if let Some(t) = tau.iter().find(|t| params.q - params.c * **t <= 0.0) {
        return Err(Error::domain(format!("velocity u = q - c tau is not positive (tau = {t})")));
    }
    Ok(())
}

fn physical_first_order(params: &PhysicalParams, tau: &[f64]) -> FirstOrder {
    let m = first_order_nodes(tau.len());
    let t = resample(tau, m);
    let f = physical_fields(params, &t);
    let (c, nu) = (params.c, params.nu);
    let mut fo = FirstOrder::empty(3, params.period);
    let t2: Vec<f64> = t.iter().map(|x| x * x).collect();
    fo.set(false, 0, 2, &t2.iter().map(|x| -x / c).collect::<Vec<_>>());
    fo.set(false, 1, 2, &t2);
    fo.set(false, 2, 0, &zip_map(&f.u, &f.dalpha, |u, da| (u * u - da) / nu));
    fo.set(false, 2, 1, &zip_map(&t, &f.u, |t, u| 2.0 * t * u / nu));
    fo.set(false, 2, 2, &zip_map(&t2, &f.alpha, |t2, al| (-c * t2 + al * t2 / c) / nu));
    fo.set(true, 0, 0, &constant(m, 1.0 / c));
    fo.set(true, 2, 0, &f.alpha.iter().map(|al| -al / (c * nu)).collect::<Vec<_>>());
    fo.set(true, 2, 1, &constant(m, 1.0 / nu));
    fo
}

/// Physical Bloch problem in second-order form; the first-order form is attached.
pub fn bloch_coeffs(profile: &WaveProfile) -> Result<SpectralProblem> {
    check_positive_u(&profile.params, &profile.tau)?;
    Ok(SpectralProblem {
        kind: ProblemKind::Physical,
        period: profile.params.period,
        source: Source::Physical { params: profile.params, tau: profile.tau.clone() },
        first_order: Some(physical_first_order(&profile.params, &profile.tau)),
    })
}

/// First-order 3×3 system for Z = (τ, u, τ̄^{-2}u').
pub fn evans_matrix(profile: &WaveProfile) -> Result<SpectralProblem> {
    bloch_coeffs(profile)
}

/// Large-Froude α = −2 problem about a rescaled profile; `froude = None` is the
/// F = ∞ limit.
pub fn limit_matrices_alpha_m2(profile: &LimitProfile, froude: Option<f64>) -> Result<SpectralProblem> {
    if let Some(f) = froude {
        if !(f > 0.0) {
            return Err(Error::domain("F must be positive"));
        }
    }
    let (q0, nu, k0, c0) = (profile.q0, profile.nu, profile.k0, profile.c0);
    let n = profile.a.len();
    let period = profile.period;
    let m = first_order_nodes(n);
    let a = resample(&profile.a, m);
    let g = Grid::new(m, period);
    let da: Vec<f64> = g.derivative(&a, 1).iter().map(|x| k0 * x).collect();
    let finv = froude.map_or(0.0, |f| 1.0 / f);
    let bbar: Vec<f64> = a.iter().map(|x| q0 - c0 * x * finv).collect();
    let mut fo = FirstOrder::empty(3, period);
    let s = 1.0 / k0;
    fo.set(false, 0, 0, &zip_map(&a, &da, |a, d| s * 2.0 * d / a));
    fo.set(false, 0, 2, &a.iter().map(|a| -s * a * a / c0).collect::<Vec<_>>());
    fo.set(true, 0, 0, &constant(m, s / c0));
    fo.set(false, 1, 0, &zip_map(&a, &da, |a, d| -s * 2.0 * c0 * d / a));
    fo.set(false, 1, 2, &a.iter().map(|a| s * a * a).collect::<Vec<_>>());
    let r20: Vec<f64> = (0..m).map(|i| s * (2.0 * c0 * c0 * da[i] / a[i] + da[i] / a[i].powi(4) + bbar[i].powi(2)) / nu).collect();
    fo.set(false, 2, 0, &r20);
    fo.set(true, 2, 0, &a.iter().map(|a| -s / (c0 * nu * a.powi(3))).collect::<Vec<_>>());
    fo.set(false, 2, 1, &(0..m).map(|i| s * 2.0 * a[i] * bbar[i] * finv / nu).collect::<Vec<_>>());
    fo.set(true, 2, 1, &constant(m, s / nu));
    fo.set(false, 2, 2, &a.iter().map(|a| s * (-c0 * a * a + 1.0 / (c0 * a)) / nu).collect::<Vec<_>>());
    Ok(SpectralProblem {
        kind: if froude.is_some() { ProblemKind::AlphaM2FiniteF } else { ProblemKind::AlphaM2Limit },
        period,
        source: Source::AlphaM2 { q0, nu, k0, c0, froude, a: profile.a.clone() },
        first_order: Some(fo),
    })
}

/// Limiting Hamiltonian problem 0 = h^{-2}ǎ − Λ̌ǎ' + ǎ'' on the orbit's period.
pub fn ham_limit_operator(orbit: &HamOrbit) -> Result<SpectralProblem> {
    if orbit.h.is_empty() {
        return Err(Error::domain("orbit carries no samples"));
    }
    let m = first_order_nodes(orbit.h.len());
    let h = resample(&orbit.h, m);
    let mut fo = FirstOrder::empty(2, orbit.x_mu);
    fo.set(false, 0, 1, &constant(m, 1.0));
    fo.set(false, 1, 0, &h.iter().map(|h| -h.powi(-2)).collect::<Vec<_>>());
    fo.set(true, 1, 1, &constant(m, 1.0));
    Ok(SpectralProblem {
        kind: ProblemKind::HamLimit,
        period: orbit.x_mu,
        source: Source::Ham { h: orbit.h.clone() },
        first_order: Some(fo),
    })
}

/// Λ from Λ̌: the Hamiltonian-limit spectral parameter in the coordinate where
/// derivatives carry one factor k₀ each.
pub fn ham_lambda_to_rescaled(lam_check: Complex64, q0: f64, nu: f64, k0: f64, c0: f64) -> Complex64 {
    let ell = (nu * k0 * k0 * c0 * q0 * q0).sqrt();
    lam_check * ell / (nu * k0 * q0 * q0)
}

/// Inverse of [`ham_lambda_to_rescaled`].
pub fn ham_lambda_from_rescaled(lam: Complex64, q0: f64, nu: f64, k0: f64, c0: f64) -> Complex64 {
    let ell = (nu * k0 * k0 * c0 * q0 * q0).sqrt();
    lam * (nu * k0 * q0 * q0) / ell
}

/// Physical Floquet parameter from the α = −2 rescaled one (x = F² x̂ / k₀-free).
pub fn alpha_m2_xi_to_physical(xi_hat: f64, froude: f64) -> f64 {
    xi_hat / (froude * froude)
}

/// Scalar KdV–KS Bloch problem Λz + ((v−σ)z)' + z''' + δ(z''+z'''') = 0.
pub fn kdvks_operator(v: &[f64], period: f64, sigma: f64, delta: f64) -> SpectralProblem {
    SpectralProblem {
        kind: ProblemKind::KdvKs,
        period,
        source: Source::KdvKs { delta, sigma, v: v.to_vec() },
        first_order: None,
    }
}

/// Roots λ of the constant-state symbol for (τ, u) ∝ e^{iηx}.
pub fn constant_dispersion(tau0: f64, params: &PhysicalParams, eta: f64) -> [Complex64; 2] {
    let (c, nu) = (params.c, params.nu);
    let u = params.q - c * tau0;
    let alpha = tau0.powi(-3) / (params.froude * params.froude);
    let ie = Complex64::new(0.0, eta);
    let m00 = ie * c;
    let m01 = ie;
    let m10 = ie * alpha - u * u;
    let m11 = Complex64::new(-nu * eta * eta / (tau0 * tau0) - 2.0 * u * tau0, 0.0) + ie * c;
    let tr = m00 + m11;
    let det = m00 * m11 - m01 * m10;
    let disc = (tr * tr - 4.0 * det).sqrt();
    [(tr + disc) / 2.0, (tr - disc) / 2.0]
}

/// Constant-state symbol of the α = −2 problem at F = ∞ (a ≡ q₀^{-2}).
pub fn constant_dispersion_alpha_m2(q0: f64, nu: f64, k0: f64, c0: f64, eta: f64) -> [Complex64; 2] {
    let a = q0.powi(-2);
    let ie = Complex64::new(0.0, k0 * eta);
    let m00 = ie * c0;
    let m01 = ie;
    let m10 = ie * a.powi(-3) - q0 * q0;
    let m11 = ie * c0 + ie * ie * nu / (a * a);
    let tr = m00 + m11;
    let det = m00 * m11 - m01 * m10;
    let disc = (tr * tr - 4.0 * det).sqrt();
    [(tr + disc) / 2.0, (tr - disc) / 2.0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::{equilibrium, WaveProfile};

    fn wavy_profile() -> WaveProfile {
        let params = PhysicalParams::new(3.0, 0.1, 2.0, 1.1, 4.0).unwrap();
        let g = Grid::new(64, 4.0);
        let tau: Vec<f64> = g
            .nodes()
            .iter()
            .map(|x| 0.5 + 0.05 * (2.0 * std::f64::consts::PI * x / 4.0).cos() + 0.02 * (4.0 * std::f64::consts::PI * x / 4.0).sin())
            .collect();
        WaveProfile::from_samples(params, tau, f64::NAN, "test")
    }

    #[test]
    fn constant_state_alpha() {
        let (p, prof) = equilibrium(0.7, 3.0, 0.1, 1.2, 4.0, 32).unwrap();
        let f = bloch_fields(&prof);
        for a in &f.alpha {
            assert!((a - 0.7f64.powi(-3) / 9.0).abs() < 1e-13);
        }
        assert!(f.dalpha.iter().all(|x| x.abs() < 1e-12));
        assert_eq!(p.c, 1.2);
    }

    #[test]
    fn alpha_matches_finite_differences() {
        let prof = wavy_profile();
        let f = bloch_fields(&prof);
        let p = prof.params;
        // independent: differentiate the closed form of τ̄ by centred differences
        let tau = |x: f64| {
            0.5 + 0.05 * (2.0 * std::f64::consts::PI * x / 4.0).cos() + 0.02 * (4.0 * std::f64::consts::PI * x / 4.0).sin()
        };
        let h = 1e-5;
        for (i, x) in Grid::new(64, 4.0).nodes().iter().enumerate() {
            let d = (tau(x + h) - tau(x - h)) / (2.0 * h);
            let a = tau(*x).powi(-3) * (p.froude.powi(-2) + 2.0 * p.c * p.nu * d);
            assert!((a - f.alpha[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn first_order_trace_and_affinity() {
        let prof = wavy_profile();
        let sp = evans_matrix(&prof).unwrap();
        let fo = sp.first_order().unwrap();
        let f = bloch_fields(&prof);
        let p = prof.params;
        let lam = Complex64::new(0.3, -0.7);
        let x = Grid::new(64, 4.0).nodes()[5];
        let a = fo.eval(x, lam);
        let tr = a[0] + a[4] + a[8];
        let t2 = f.tau[5] * f.tau[5];
        let expect = lam / p.c + (-p.c * t2 + f.alpha[5] * t2 / p.c) / p.nu;
        assert!((tr - expect).norm() < 1e-10);
        let l1 = Complex64::new(0.2, 0.1);
        let l2 = Complex64::new(-1.0, 0.5);
        let lhs: Vec<Complex64> = fo.eval(x, l1).iter().zip(fo.eval(x, l2)).zip(fo.eval(x, Complex64::new(0.0, 0.0))).map(|((a, b), c)| a + b - c).collect();
        for (u, v) in lhs.iter().zip(fo.eval(x, l1 + l2)) {
            assert!((u - v).norm() < 1e-12);
        }
        assert!(fo.eval(0.37, Complex64::new(0.4, 0.0)).iter().all(|z| z.im == 0.0));
    }

    #[test]
    fn zero_wavenumber_dispersion() {
        let tau0: f64 = 0.64;
        let c = tau0.powf(-1.5) / 3.0;
        let p = PhysicalParams::new(3.0, 0.1, tau0.powf(-0.5) + c * tau0, c, 5.0).unwrap();
        let r = constant_dispersion(tau0, &p, 0.0);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] + 2.0 * tau0.sqrt()).abs() < 1e-14);
        assert!(re[1].abs() < 1e-14);
        let a = constant_dispersion(tau0, &p, 0.8);
        let b = constant_dispersion(tau0, &p, -0.8);
        for z in a {
            assert!(b.iter().any(|w| (w - z.conj()).norm() < 1e-13));
        }
    }

    #[test]
    fn constant_state_stability_threshold() {
        let tau0: f64 = 0.9;
        for (froude, unstable) in [(1.5, false), (1.9, false), (2.5, true), (4.0, true)] {
            let c = tau0.powf(-1.5) / froude;
            let p = PhysicalParams::new(froude, 0.1, tau0.powf(-0.5) + c * tau0, c, 5.0).unwrap();
            let mx = (1..400)
                .flat_map(|j| constant_dispersion(tau0, &p, j as f64 * 0.01))
                .map(|z| z.re)
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(mx > 1e-12, unstable, "F = {froude}: {mx}");
        }
    }

    #[test]
    fn ham_scaling_round_trip() {
        let l = Complex64::new(0.3, -1.2);
        let r = ham_lambda_to_rescaled(l, 0.4, 0.1, 1.0, 0.06);
        assert!((ham_lambda_from_rescaled(r, 0.4, 0.1, 1.0, 0.06) - l).norm() < 1e-14);
    }
}
