//! Periodic traveling-wave profiles: Fourier-collocation Newton solves,
//! continuation from the Hopf point, and the two large-Froude limit problems.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::solve_real;
use crate::model::PhysicalParams;
use crate::ode::{dopri_integrate, DopriOptions};

/// A periodic profile τ on a uniform grid over `[0, X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveProfile {
    pub params: PhysicalParams,
    pub n: usize,
    pub tau: Vec<f64>,
    pub dtau: Vec<f64>,
    #[serde(rename = "residual")]
    pub residual_norm: f64,
    #[serde(default)]
    pub provenance: String,
}

/// On-disk profile layout with `c` and `q` echoed at top level.
#[derive(Serialize, Deserialize)]
struct ProfileFile {
    params: PhysicalParams,
    n: usize,
    tau: Vec<f64>,
    dtau: Vec<f64>,
    c: f64,
    q: f64,
    residual: f64,
    #[serde(default)]
    provenance: String,
}

impl WaveProfile {
    pub fn from_samples(params: PhysicalParams, tau: Vec<f64>, residual_norm: f64, provenance: &str) -> Self {
        let g = Grid::new(tau.len(), params.period);
        let dtau = g.derivative(&tau, 1);
        Self { params, n: tau.len(), tau, dtau, residual_norm, provenance: provenance.to_string() }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.n, self.params.period)
    }

    /// u = q − cτ, reconstructed on demand.
    pub fn velocity(&self) -> Vec<f64> {
        self.tau.iter().map(|t| self.params.q - self.params.c * t).collect()
    }

    pub fn amplitude(&self) -> f64 {
        let (lo, hi) = minmax(&self.tau);
        hi - lo
    }

    pub fn to_json(&self) -> Result<String> {
        let f = ProfileFile {
            params: self.params,
            n: self.n,
            tau: self.tau.clone(),
            dtau: self.dtau.clone(),
            c: self.params.c,
            q: self.params.q,
            residual: self.residual_norm,
            provenance: self.provenance.clone(),
        };
        Ok(serde_json::to_string_pretty(&f)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ProfileFile = serde_json::from_str(text)?;
        f.params.validate()?;
        if f.tau.len() != f.n || f.dtau.len() != f.n || !f.n.is_power_of_two() {
            return Err(Error::Parse("profile arrays inconsistent with n (power of two required)".into()));
        }
        if f.c != f.params.c || f.q != f.params.q {
            return Err(Error::Parse("top-level c/q disagree with params".into()));
        }
        Ok(Self { params: f.params, n: f.n, tau: f.tau, dtau: f.dtau, residual_norm: f.residual, provenance: f.provenance })
    }

    /// Trigonometric interpolation onto `m` nodes (residual not recomputed).
    pub fn resampled(&self, m: usize) -> Self {
        let tau = crate::fourier::resample(&self.tau, m);
        Self::from_samples(self.params, tau, self.residual_norm, &self.provenance)
    }
}

fn minmax(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x)))
}

/// Hopf data of the constant state τ₀.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfData {
    pub tau0: f64,
    pub u0: f64,
    /// Hopf speed τ₀^{-3/2}/F.
    pub c_s: f64,
    /// F = 2 reference speed τ₀^{-3/2}/2.
    pub c0: f64,
    /// ω = τ₀^{5/4}ν^{-1/2}√(F−2); `None` for F ≤ 2.
    pub omega: Option<f64>,
    pub period: Option<f64>,
}

pub fn hopf_data(tau0: f64, froude: f64, nu: f64) -> Result<HopfData> {
    if !(tau0 > 0.0 && froude > 0.0 && nu > 0.0) {
        return Err(Error::domain("tau0, F and nu must be positive"));
    }
    let omega = (froude > 2.0).then(|| tau0.powf(1.25) * (froude - 2.0).sqrt() / nu.sqrt());
    Ok(HopfData {
        tau0,
        u0: tau0.powf(-0.5),
        c_s: tau0.powf(-1.5) / froude,
        c0: tau0.powf(-1.5) / 2.0,
        omega,
        period: omega.map(|w| 2.0 * PI / w),
    })
}

/// Reference state whose Hopf speed reproduces outflow `q`: q = τ₀^{-1/2}(1 + 1/F).
pub fn tau0_for_outflow(q: f64, froude: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::domain("outflow q must be positive"));
    }
    Ok(((1.0 + 1.0 / froude) / q).powi(2))
}

/// Constant state (τ₀, u₀ = τ₀^{-1/2}) moving at speed `c`.
pub fn equilibrium(tau0: f64, froude: f64, nu: f64, c: f64, period: f64, n: usize) -> Result<(PhysicalParams, WaveProfile)> {
    if !(tau0 > 0.0) {
        return Err(Error::domain("tau0 must be positive"));
    }
    let q = tau0.powf(-0.5) + c * tau0;
    let params = PhysicalParams::new(froude, nu, q, c, period)?.with_tau0(tau0)?;
    let prof = WaveProfile { params, n, tau: vec![tau0; n], dtau: vec![0.0; n], residual_norm: 0.0, provenance: "equilibrium".into() };
    Ok((params, prof))
}

/// Pointwise residual r(τ, τ', τ'') of a second-order profile equation and
/// its partial derivatives with respect to (τ, τ', τ'', c, q).
pub trait ProfileEquation {
    fn residual(&self, t: f64, p: f64, pp: f64, c: f64, q: f64) -> [f64; 6];
}

/// τ'' = (−τ²/(cν))(c²τ' − τ'/(F²τ³) − 1 + τ(q−cτ)² − 2cν(τ')²/τ³).
#[derive(Debug, Clone, Copy)]
pub struct StVenant {
    pub froude: f64,
    pub nu: f64,
}

impl ProfileEquation for StVenant {
    fn residual(&self, t: f64, p: f64, pp: f64, c: f64, q: f64) -> [f64; 6] {
        let f2 = 1.0 / (self.froude * self.froude);
        let nu = self.nu;
        let u = q - c * t;
        let t3 = t * t * t;
        let t4 = t3 * t;
        let g = c * c * p - p * f2 / t3 - 1.0 + t * u * u - 2.0 * c * nu * p * p / t3;
        let g_t = 3.0 * p * f2 / t4 + u * u - 2.0 * c * t * u + 6.0 * c * nu * p * p / t4;
        let g_p = c * c - f2 / t3 - 4.0 * c * nu * p / t3;
        let g_c = 2.0 * c * p - 2.0 * t * t * u - 2.0 * nu * p * p / t3;
        let g_q = 2.0 * t * u;
        let s = t * t / (c * nu);
        let f = -s * g;
        let f_t = -2.0 * t * g / (c * nu) - s * g_t;
        let f_p = -s * g_p;
        let f_c = s * g / c - s * g_c;
        let f_q = -s * g_q;
        [pp - f, -f_t, -f_p, 1.0, -f_c, -f_q]
    }
}

/// Large-Froude α = −2 profile in rescaled variables (derivatives carry k₀):
/// k₀c₀²a' + k₀(a^{-2}/2)' = 1 − a b² − νk₀²c₀(a^{-2}a')', b = q₀ − c₀a/F,
/// solved for a''. Here `c` plays c₀ and `q` plays q₀.
#[derive(Debug, Clone, Copy)]
pub struct AlphaM2 {
    pub nu: f64,
    pub k0: f64,
    pub froude: Option<f64>,
}

impl ProfileEquation for AlphaM2 {
    fn residual(&self, a: f64, p: f64, pp: f64, c: f64, q: f64) -> [f64; 6] {
        let (nu, k0) = (self.nu, self.k0);
        let finv = self.froude.map_or(0.0, |f| 1.0 / f);
        let b = q - c * a * finv;
        // g = −k₀(c² − a^{-3})a' + 1 − a b²; a'' = 2a'²/a + a² g/(νk₀²c)
        let g = -k0 * (c * c - a.powi(-3)) * p + 1.0 - a * b * b;
        let g_a = -3.0 * k0 * a.powi(-4) * p - b * b + 2.0 * a * b * c * finv;
        let g_p = -k0 * (c * c - a.powi(-3));
        let g_c = -2.0 * k0 * c * p + 2.0 * a * b * a * finv;
        let g_q = -2.0 * a * b;
        let s = 1.0 / (nu * k0 * k0 * c);
        let f = 2.0 * p * p / a + s * a * a * g;
        let f_a = -2.0 * p * p / (a * a) + s * (2.0 * a * g + a * a * g_a);
        let f_p = 4.0 * p / a + s * a * a * g_p;
        let f_c = -s / c * a * a * g + s * a * a * g_c;
        let f_q = s * a * a * g_q;
        [pp - f, -f_a, -f_p, 1.0, -f_c, -f_q]
    }
}

/// Which scalar parameters are Newton unknowns besides the samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    /// c free, (q, X) fixed.
    Speed,
    /// q free, (c, X) fixed.
    Outflow,
}

/// Newton controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub free: FreeParam,
    /// Double the grid (up to `max_n`) while the Fourier tail exceeds `tail_tol`.
    pub max_n: usize,
    pub tail_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 40, free: FreeParam::Speed, max_n: 1024, tail_tol: 1e-11 }
    }
}

/// Outcome of one collocation solve in the reference coordinate s ∈ [0, 2π).
#[derive(Debug, Clone)]
struct Collocated {
    tau: Vec<f64>,
    c: f64,
    q: f64,
    period: f64,
    residual: f64,
    iterations: usize,
    pivot_ratio: f64,
}

/// Extra constraint appended to the collocation equations.
#[derive(Debug, Clone)]
enum Closure {
    /// Fixed period; one scalar (c or q) free.
    FixedPeriod { free: FreeParam },
    /// Period and c free; first cosine coefficient pinned to `amp`.
    Amplitude { amp: f64 },
    /// Period and c free; pseudo-arclength constraint along (τ, c, X) tangent.
    Arclength { base: Vec<f64>, tangent: Vec<f64>, ds: f64 },
}

struct Problem<'a, E: ProfileEquation> {
    eq: &'a E,
    n: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
    phase_ref: Vec<f64>,
    phase_dir: Vec<f64>,
}

impl<'a, E: ProfileEquation> Problem<'a, E> {
    fn new(eq: &'a E, seed: &[f64]) -> Self {
        let n = seed.len();
        // reference-period matrices; scaled by 2π/X when used
        let g = Grid::new(n, 2.0 * PI);
        let dir = g.derivative(seed, 1);
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        Self {
            eq,
            n,
            d1: g.diff_matrix_1(),
            d2: g.diff_matrix_2(),
            phase_ref: seed.to_vec(),
            phase_dir: dir.iter().map(|x| x / norm).collect(),
        }
    }

    fn n_unknowns(&self, cl: &Closure) -> usize {
        match cl {
            Closure::FixedPeriod { .. } => self.n + 1,
            _ => self.n + 2,
        }
    }

    /// Residual vector (collocation, phase, closure) and node residual max-norm.
    fn residual(&self, tau: &[f64], c: f64, q: f64, period: f64, cl: &Closure) -> (Vec<f64>, f64) {
        let n = self.n;
        let g = Grid::new(n, period);
        let d1 = g.derivative(tau, 1);
        let d2 = g.derivative(tau, 2);
        let mut r = Vec::with_capacity(n + 2);
        let mut mx = 0.0f64;
        let mut scale = 1.0f64;
        for i in 0..n {
            let v = self.eq.residual(tau[i], d1[i], d2[i], c, q)[0];
            mx = mx.max(v.abs());
            scale = scale.max(d2[i].abs());
            r.push(v);
        }
        // measured against the size of the second-derivative term
        let mx = mx / scale;
        r.push((0..n).map(|i| (tau[i] - self.phase_ref[i]) * self.phase_dir[i]).sum());
        match cl {
            Closure::FixedPeriod { .. } => {}
            Closure::Amplitude { amp } => {
                let a1: f64 = (0..n).map(|i| tau[i] * (2.0 * PI * i as f64 / n as f64).cos()).sum::<f64>() * 2.0 / n as f64;
                r.push(a1 - amp);
            }
            Closure::Arclength { base, tangent, ds } => {
                let mut s = 0.0;
                for i in 0..n {
                    s += (tau[i] - base[i]) * tangent[i];
                }
                s += (c - base[n]) * tangent[n] + (period - base[n + 1]) * tangent[n + 1];
                r.push(s - ds);
            }
        }
        (r, mx)
    }

    fn jacobian(&self, tau: &[f64], c: f64, q: f64, period: f64, cl: &Closure) -> Vec<f64> {
        let n = self.n;
        let m = self.n_unknowns(cl);
        let g = Grid::new(n, period);
        let d1 = g.derivative(tau, 1);
        let d2 = g.derivative(tau, 2);
        let s1 = 2.0 * PI / period;
        let s2 = s1 * s1;
        let mut j = vec![0.0; m * m];
        for i in 0..n {
            let [_, r_t, r_p, r_pp, r_c, r_q] = self.eq.residual(tau[i], d1[i], d2[i], c, q);
            let row = &mut j[i * m..i * m + m];
            for k in 0..n {
                row[k] = r_p * s1 * self.d1[i * n + k] + r_pp * s2 * self.d2[i * n + k];
            }
            row[i] += r_t;
            match cl {
                Closure::FixedPeriod { free: FreeParam::Speed } => row[n] = r_c,
                Closure::FixedPeriod { free: FreeParam::Outflow } => row[n] = r_q,
                _ => {
                    row[n] = r_c;
                    row[n + 1] = -(r_p * d1[i] + 2.0 * r_pp * d2[i]) / period;
                }
            }
        }
        for k in 0..n {
            j[n * m + k] = self.phase_dir[k];
        }
        match cl {
            Closure::FixedPeriod { .. } => {}
            Closure::Amplitude { .. } => {
                for k in 0..n {
                    j[(n + 1) * m + k] = (2.0 * PI * k as f64 / n as f64).cos() * 2.0 / n as f64;
                }
            }
            Closure::Arclength { tangent, .. } => {
                j[(n + 1) * m..(n + 2) * m].copy_from_slice(tangent);
            }
        }
        j
    }

    fn solve(&self, mut tau: Vec<f64>, mut c: f64, mut q: f64, mut period: f64, cl: &Closure, opts: &NewtonOptions) -> Result<Collocated> {
        let n = self.n;
        let (mut r, mut res) = self.residual(&tau, c, q, period, cl);
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut pivot_ratio = 1.0;
        for it in 0..opts.max_iter {
            let extra = r[n..].iter().map(|x| x.abs()).fold(0.0, f64::max);
            if res <= opts.tol && extra <= opts.tol {
                return Ok(Collocated { tau, c, q, period, residual: res, iterations: it, pivot_ratio });
            }
            let jac = self.jacobian(&tau, c, q, period, cl);
            let m = self.n_unknowns(cl);
            let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
            let (dx, pr) = solve_real(&jac, m, &rhs)?;
            pivot_ratio = pr;
            if pr < 1e-15 {
                return Err(Error::DegenerateJacobian(format!("pivot ratio {pr:e}")));
            }
            let base = norm2(&r);
            let mut step = 1.0;
            loop {
                let t_new: Vec<f64> = (0..n).map(|i| tau[i] + step * dx[i]).collect();
                let (c_new, q_new, p_new) = match cl {
                    Closure::FixedPeriod { free: FreeParam::Speed } => (c + step * dx[n], q, period),
                    Closure::FixedPeriod { free: FreeParam::Outflow } => (c, q + step * dx[n], period),
                    _ => (c + step * dx[n], q, period + step * dx[n + 1]),
                };
                let ok = t_new.iter().all(|t| *t > 0.0 && t.is_finite()) && p_new > 0.0 && c_new.is_finite();
                if ok {
                    let (r_new, res_new) = self.residual(&t_new, c_new, q_new, p_new, cl);
                    if norm2(&r_new) < base * (1.0 - 1e-4 * step) || step < 1e-3 {
                        if res_new.is_finite() {
                            tau = t_new;
                            c = c_new;
                            q = q_new;
                            period = p_new;
                            r = r_new;
                            res = res_new;
                            break;
                        }
                    }
                }
                step *= 0.5;
                if step < 1e-4 {
                    return Err(Error::NonConvergence { residual: res, iterations: it });
                }
            }
        }
        let extra = r[n..].iter().map(|x| x.abs()).fold(0.0, f64::max);
        if res <= opts.tol && extra <= opts.tol {
            return Ok(Collocated { tau, c, q, period, residual: res, iterations: opts.max_iter, pivot_ratio });
        }
        Err(Error::NonConvergence { residual: res, iterations: opts.max_iter })
    }
}

/// Relative size of the upper third of the spectrum.
fn fourier_tail(v: &[f64]) -> f64 {
    let g = Grid::new(v.len(), 2.0 * PI);
    let c = g.coefficients(v);
    let n = v.len();
    let total = c.iter().skip(1).map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let tail = (0..n)
        .filter(|&j| crate::fourier::wavenumber(j, n).unsigned_abs() as usize > n / 3)
        .map(|j| c[j].norm())
        .fold(0.0, f64::max);
    tail / total
}

fn collocate_with_refinement<E: ProfileEquation>(
    eq: &E,
    seed: Vec<f64>,
    c: f64,
    q: f64,
    period: f64,
    cl: &Closure,
    opts: &NewtonOptions,
) -> Result<Collocated> {
    let mut seed = seed;
    loop {
        let prob = Problem::new(eq, &seed);
        let sol = prob.solve(seed.clone(), c, q, period, cl, opts)?;
        let n = sol.tau.len();
        if fourier_tail(&sol.tau) <= opts.tail_tol || 2 * n > opts.max_n || matches!(cl, Closure::Arclength { .. }) {
            return Ok(sol);
        }
        seed = crate::fourier::resample(&sol.tau, 2 * n);
    }
}

/// Newton solve for a profile at `target` (q and X fixed; c free by default),
/// starting from `seed` samples (any power-of-two length).
pub fn solve_profile(target: &PhysicalParams, seed: &WaveProfile, opts: &NewtonOptions) -> Result<WaveProfile> {
    target.validate()?;
    let eq = StVenant { froude: target.froude, nu: target.nu };
    let (c0, q0) = match opts.free {
        FreeParam::Speed => (seed.params.c, target.q),
        FreeParam::Outflow => (target.c, seed.params.q),
    };
    let cl = Closure::FixedPeriod { free: opts.free };
    let sol = collocate_with_refinement(&eq, seed.tau.clone(), c0, q0, target.period, &cl, opts)?;
    let mut params = *target;
    params.c = sol.c;
    params.q = sol.q;
    let prov = format!("{}; newton({} it, n={}, pivot {:.1e})", seed.provenance, sol.iterations, sol.tau.len(), sol.pivot_ratio);
    Ok(WaveProfile::from_samples(params, sol.tau, sol.residual, &prov))
}

/// Number of Newton iterations a solve from `seed` takes (for diagnostics).
pub fn newton_iterations(target: &PhysicalParams, seed: &WaveProfile, opts: &NewtonOptions) -> Result<usize> {
    let eq = StVenant { froude: target.froude, nu: target.nu };
    let cl = Closure::FixedPeriod { free: opts.free };
    let prob = Problem::new(&eq, &seed.tau);
    let sol = prob.solve(seed.tau.clone(), seed.params.c, target.q, target.period, &cl, opts)?;
    Ok(sol.iterations)
}

/// Continuation controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContinuationOptions {
    pub initial_steps: usize,
    pub min_step: f64,
    pub newton: NewtonOptions,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        Self { initial_steps: 8, min_step: 1e-4, newton: NewtonOptions::default() }
    }
}

fn lerp_params(a: &PhysicalParams, b: &PhysicalParams, s: f64) -> PhysicalParams {
    let geo = |x: f64, y: f64| if x > 0.0 && y > 0.0 { x * (y / x).powf(s) } else { x + s * (y - x) };
    PhysicalParams {
        froude: geo(a.froude, b.froude),
        nu: geo(a.nu, b.nu),
        q: geo(a.q, b.q),
        c: a.c + s * (b.c - a.c),
        period: geo(a.period, b.period),
        tau0: b.tau0,
    }
}

/// Natural-parameter continuation from `from` to `to` along a geometric path in
/// (F, ν, q, X), with secant prediction and step halving.
pub fn continue_profile(from: &WaveProfile, to: &PhysicalParams, opts: &ContinuationOptions) -> Result<Vec<WaveProfile>> {
    to.validate()?;
    let a = from.params;
    let same = a.froude == to.froude && a.nu == to.nu && a.period == to.period && match opts.newton.free {
        FreeParam::Speed => a.q == to.q,
        FreeParam::Outflow => a.c == to.c,
    };
    if same {
        return Ok(vec![from.clone()]);
    }
    let mut path = vec![from.clone()];
    let mut s = 0.0;
    let mut ds = 1.0 / opts.initial_steps.max(1) as f64;
    let mut prev: Option<(f64, WaveProfile)> = None;
    while s < 1.0 {
        let s_new = (s + ds).min(1.0);
        let target = lerp_params(&a, to, s_new);
        let last = path.last().expect("nonempty").clone();
        let seed = match &prev {
            Some((sp, pp)) if pp.n == last.n => {
                let w = (s_new - s) / (s - sp);
                let tau: Vec<f64> = last.tau.iter().zip(&pp.tau).map(|(x, y)| x + w * (x - y)).collect();
                let mut params = last.params;
                params.c = last.params.c + w * (last.params.c - pp.params.c);
                params.q = last.params.q + w * (last.params.q - pp.params.q);
                if tau.iter().all(|t| *t > 0.0) {
                    WaveProfile::from_samples(params, tau, f64::NAN, &last.provenance)
                } else {
                    last.clone()
                }
            }
            _ => last.clone(),
        };
        let mut seed = seed;
        if opts.newton.free == FreeParam::Outflow {
            seed.params.c = target.c;
        }
        match solve_profile(&target, &seed, &opts.newton).or_else(|_| solve_profile(&target, &last, &opts.newton)) {
            Ok(mut p) => {
                p.provenance = format!("continuation s={s_new:.6}");
                prev = Some((s, last));
                s = s_new;
                path.push(p);
                ds = (ds * 1.5).min(0.5);
            }
            Err(e) => {
                ds *= 0.5;
                if ds < opts.min_step {
                    let lp = lerp_params(&a, to, s);
                    return Err(Error::ContinuationStalled {
                        last_good: lp.period,
                        reason: format!("at s = {s:.6} (F = {}, q = {}, X = {}): {e}", lp.froude, lp.q, lp.period),
                    });
                }
            }
        }
    }
    Ok(path)
}

/// Builds a profile at (F, ν, q, X) from scratch: bifurcate from the Hopf point
/// by amplitude continuation, then continue in X (with pseudo-arclength
/// fallback) to the requested period.
pub fn profile_from_hopf(target: &PhysicalParams, n: usize, opts: &NewtonOptions) -> Result<WaveProfile> {
    target.validate()?;
    let eq = StVenant { froude: target.froude, nu: target.nu };
    let tau0 = tau0_for_outflow(target.q, target.froude)?;
    let hd = hopf_data(tau0, target.froude, target.nu)?;
    let xh = hd.period.ok_or_else(|| Error::domain("roll waves require F > 2"))?;
    if target.period <= xh {
        return Err(Error::domain(format!("period {} is below the Hopf period {xh}", target.period)));
    }
    let branch = hopf_branch(&eq, tau0, hd.c_s, target.q, xh, target.period, n, opts)?;
    let params = PhysicalParams { c: branch.c, q: target.q, period: branch.period, ..*target };
    let params = params.with_tau0(tau0)?;
    let start = WaveProfile::from_samples(params, branch.tau, branch.residual, "hopf branch");
    let mut target = *target;
    target.tau0 = Some(tau0);
    let copts = ContinuationOptions { newton: *opts, ..Default::default() };
    let path = continue_profile(&start, &target, &copts)?;
    let mut last = path.into_iter().last().expect("nonempty");
    last.provenance = format!("hopf(tau0={tau0:.6}) -> X continuation");
    Ok(last)
}

/// Walks the Hopf branch of `eq` in amplitude until the period first exceeds
/// `min(x_target, 1.25 x_hopf)`; falls back to pseudo-arclength when the
/// amplitude parametrization degenerates.
#[allow(clippy::too_many_arguments)]
fn hopf_branch<E: ProfileEquation>(
    eq: &E,
    base: f64,
    c_hopf: f64,
    q: f64,
    x_hopf: f64,
    x_target: f64,
    n: usize,
    opts: &NewtonOptions,
) -> Result<Collocated> {
    let goal = x_target.min(1.25 * x_hopf);
    let nodes: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
    let mut amp = 1e-3 * base;
    let mut tau: Vec<f64> = nodes.iter().map(|s| base + amp * s.cos()).collect();
    let mut c = c_hopf;
    let mut period = x_hopf;
    let mut history: Vec<(f64, Collocated)> = Vec::new();
    let mut damp = 1.5;
    let fixed = NewtonOptions { max_n: n, ..*opts };
    for _ in 0..400 {
        let cl = Closure::Amplitude { amp };
        let prob = Problem::new(eq, &tau);
        match prob.solve(tau.clone(), c, q, period, &cl, &fixed) {
            Ok(sol) => {
                if sol.period >= goal {
                    return Ok(sol);
                }
                tau = sol.tau.clone();
                c = sol.c;
                period = sol.period;
                history.push((amp, sol));
                let next = amp * damp;
                if history.len() >= 2 {
                    let (a0, s0) = &history[history.len() - 2];
                    let (a1, s1) = &history[history.len() - 1];
                    let w = (next - a1) / (a1 - a0);
                    tau = s1.tau.iter().zip(&s0.tau).map(|(x, y)| x + w * (x - y)).collect();
                    c = s1.c + w * (s1.c - s0.c);
                    period = s1.period + w * (s1.period - s0.period);
                    if tau.iter().any(|t| *t <= 0.0) || period <= 0.0 {
                        tau = s1.tau.clone();
                        c = s1.c;
                        period = s1.period;
                    }
                }
                amp = next;
            }
            Err(_) => {
                let Some((a_last, s_last)) = history.last() else {
                    return Err(Error::NonConvergence { residual: f64::NAN, iterations: 0 });
                };
                damp = 1.0 + (damp - 1.0) * 0.5;
                if damp < 1.0005 {
                    return arclength_branch(eq, &history, q, goal, opts);
                }
                amp = a_last * damp;
                tau = s_last.tau.clone();
                c = s_last.c;
                period = s_last.period;
            }
        }
    }
    Err(Error::ContinuationStalled { last_good: period, reason: "amplitude continuation exhausted".into() })
}

fn arclength_branch<E: ProfileEquation>(eq: &E, history: &[(f64, Collocated)], q: f64, goal: f64, opts: &NewtonOptions) -> Result<Collocated> {
    if history.len() < 2 {
        return Err(Error::ContinuationStalled { last_good: f64::NAN, reason: "too few points for arclength".into() });
    }
    let pack = |s: &Collocated| {
        let mut v = s.tau.clone();
        v.push(s.c);
        v.push(s.period);
        v
    };
    let mut u0 = pack(&history[history.len() - 2].1);
    let mut u1 = pack(&history[history.len() - 1].1);
    let n = u1.len() - 2;
    let fixed = NewtonOptions { max_n: n, ..*opts };
    let mut ds = u1.iter().zip(&u0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    for _ in 0..2000 {
        let diff: Vec<f64> = u1.iter().zip(&u0).map(|(a, b)| a - b).collect();
        let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
        let tangent: Vec<f64> = diff.iter().map(|x| x / norm).collect();
        let pred: Vec<f64> = u1.iter().zip(&tangent).map(|(a, t)| a + ds * t).collect();
        let cl = Closure::Arclength { base: u1.clone(), tangent, ds };
        let prob = Problem::new(eq, &pred[..n]);
        match prob.solve(pred[..n].to_vec(), pred[n], q, pred[n + 1], &cl, &fixed) {
            Ok(sol) => {
                if sol.period >= goal {
                    return Ok(sol);
                }
                u0 = u1;
                u1 = pack(&sol);
                ds *= 1.3;
            }
            Err(_) => {
                ds *= 0.5;
                if ds < 1e-10 {
                    break;
                }
            }
        }
    }
    Err(Error::ContinuationStalled { last_good: u1[n + 1], reason: "pseudo-arclength continuation stalled".into() })
}

/// Rescaled α = −2 profile a(y) with period `period` (= k₀X₀); derivatives
/// carry one factor k₀ each. `froude = None` is the F = ∞ limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitProfile {
    pub q0: f64,
    pub nu: f64,
    pub k0: f64,
    pub c0: f64,
    pub period: f64,
    pub froude: Option<f64>,
    pub a: Vec<f64>,
    pub residual: f64,
}

impl LimitProfile {
    /// Physical profile equivalent to a finite-F rescaled profile.
    pub fn to_physical(&self) -> Result<WaveProfile> {
        let f = self.froude.ok_or_else(|| Error::domain("limit profile has no finite F"))?;
        if self.k0 != 1.0 {
            return Err(Error::domain("physical conversion assumes k0 = 1"));
        }
        let f2 = f * f;
        let params = PhysicalParams::new(f, self.nu, self.q0 * f, self.c0 * f2, self.period * f2)?;
        let tau = self.a.iter().map(|a| a / f2).collect();
        Ok(WaveProfile::from_samples(params, tau, f64::NAN, "alpha=-2 rescaled"))
    }

    /// Rescaled view of a physical profile (k₀ = 1).
    pub fn from_physical(p: &WaveProfile) -> Self {
        let f = p.params.froude;
        let f2 = f * f;
        Self {
            q0: p.params.q / f,
            nu: p.params.nu,
            k0: 1.0,
            c0: p.params.c / f2,
            period: p.params.period / f2,
            froude: Some(f),
            a: p.tau.iter().map(|t| t * f2).collect(),
            residual: f64::NAN,
        }
    }
}

/// Solves the α = −2 rescaled profile problem with c₀ free at fixed (q₀, period).
/// Without a seed the solution is continued from the limit Hopf point.
pub fn limit_profile_alpha_m2(
    q0: f64,
    x0: f64,
    nu: f64,
    froude: Option<f64>,
    seed: Option<&LimitProfile>,
    n: usize,
    opts: &NewtonOptions,
) -> Result<LimitProfile> {
    if !(q0 > 0.0 && x0 > 0.0 && nu > 0.0) {
        return Err(Error::domain("q0, X0 and nu must be positive"));
    }
    let k0 = seed.map_or(1.0, |s| s.k0);
    let eq = AlphaM2 { nu, k0, froude };
    let pack = |sol: Collocated| LimitProfile { q0, nu, k0, c0: sol.c, period: sol.period, froude, a: sol.tau, residual: sol.residual };
    if let Some(s) = seed {
        let cl = Closure::FixedPeriod { free: FreeParam::Speed };
        let mut last = s.clone();
        // continue in X0 from the seed's period if they differ
        let steps = if (s.period - x0).abs() > 1e-14 * x0 { 8 } else { 1 };
        let mut frac = 0.0;
        let mut ds = 1.0 / steps as f64;
        while frac < 1.0 {
            let f_new = (frac + ds).min(1.0);
            let p = s.period * (x0 / s.period).powf(f_new);
            match collocate_with_refinement(&eq, last.a.clone(), last.c0, q0, p, &cl, opts) {
                Ok(sol) => {
                    last = pack(sol);
                    frac = f_new;
                }
                Err(e) => {
                    ds *= 0.5;
                    if ds < 1e-4 {
                        return Err(e);
                    }
                }
            }
        }
        return Ok(last);
    }
    // Hopf point of the limit equation: a = 1/(q₀² − ...) solves 1 = a b² with b = q₀ − c₀a/F
    let (a_eq, c_h) = alpha_m2_hopf_state(q0, froude)?;
    let omega2 = q0 * q0 * a_eq * a_eq / (nu * k0 * k0 * c_h);
    let xh = 2.0 * PI / omega2.sqrt();
    if x0 <= xh {
        return Err(Error::domain(format!("X0 = {x0} is below the limit Hopf period {xh}")));
    }
    let branch = hopf_branch(&eq, a_eq, c_h, q0, xh, x0, n, opts)?;
    let start = pack(branch);
    limit_profile_alpha_m2(q0, x0, nu, froude, Some(&start), n, opts)
}

/// Equilibrium a and Hopf speed c₀ of the α = −2 equation (c₀² = a^{-3} at F = ∞).
fn alpha_m2_hopf_state(q0: f64, froude: Option<f64>) -> Result<(f64, f64)> {
    match froude {
        None => {
            let a = q0.powi(-2);
            Ok((a, a.powf(-1.5)))
        }
        Some(f) => {
            // physical Hopf state: τ₀ from q = τ₀^{-1/2}(1 + 1/F), rescaled by F²
            let tau0 = tau0_for_outflow(q0 * f, f)?;
            let c = tau0.powf(-1.5) / f;
            Ok((tau0 * f * f, c / (f * f)))
        }
    }
}

/// Periodic orbit of h'' = h^{-1} − 1 through the turning point h₋.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamOrbit {
    pub h_minus: f64,
    pub h_plus: f64,
    pub mu: f64,
    pub x_mu: f64,
    pub c0: f64,
    pub h: Vec<f64>,
    pub dh: Vec<f64>,
}

impl HamOrbit {
    pub fn energy(&self) -> Vec<f64> {
        self.h.iter().zip(&self.dh).map(|(h, d)| h - h.ln() + 0.5 * d * d).collect()
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// h₊ > 1 with h₊ − ln h₊ = μ, by bisection.
pub fn upper_turning_point(mu: f64) -> f64 {
    let v = |h: f64| h - h.ln() - mu;
    let (mut lo, mut hi) = (1.0, 2.0);
    while v(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if v(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// X_μ = √2 ∫_{h₋}^{h₊} (μ − x + ln x)^{-1/2} dx with x = h₋ + (h₊−h₋)sin²θ.
pub fn ham_period(h_minus: f64, h_plus: f64, mu: f64, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre(nodes);
    let d = h_plus - h_minus;
    let mut acc = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        let th = PI / 4.0 * (xi + 1.0);
        let (s, c) = th.sin_cos();
        let xx = h_minus + d * s * s;
        let v = mu - xx + xx.ln();
        // near the endpoints v ∝ sin²θ cos²θ; evaluate the ratio stably there
        let jac = 2.0 * d * s * c;
        let val = if v > 0.0 { jac / v.sqrt() } else { 0.0 };
        acc += wi * val;
    }
    2f64.sqrt() * acc * PI / 4.0
}

/// Builds the orbit through h₋ and samples it on `n` uniform points.
pub fn ham_orbit(h_minus: f64, n: usize) -> Result<HamOrbit> {
    if !(h_minus > 0.0 && h_minus < 1.0) {
        return Err(Error::domain(format!("h_minus must lie in (0, 1), got {h_minus}")));
    }
    if !n.is_power_of_two() {
        return Err(Error::domain("sample count must be a power of two"));
    }
    let mu = h_minus - h_minus.ln();
    let h_plus = upper_turning_point(mu);
    let x_mu = ham_period(h_minus, h_plus, mu, 400);
    let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = 1.0 / y[0] - 1.0;
    };
    let samples: Vec<f64> = (0..n).map(|j| x_mu * j as f64 / n as f64).collect();
    let opts = DopriOptions { rtol: 1e-13, atol: 1e-14, ..Default::default() };
    let ys = dopri_integrate(rhs, &[h_minus, 0.0], &samples, &opts)?;
    let h: Vec<f64> = ys.iter().map(|y| y[0]).collect();
    let dh: Vec<f64> = ys.iter().map(|y| y[1]).collect();
    let mut orbit = HamOrbit { h_minus, h_plus, mu, x_mu, c0: f64::NAN, h, dh };
    orbit.c0 = ham_selection_c0(&orbit, 1.0).map(|r| r.c0).unwrap_or(f64::NAN);
    Ok(orbit)
}

/// Period of the orbit by direct time integration (one Newton correction on
/// h'(T) = 0 near the quadrature period).
pub fn ham_period_by_integration(orbit: &HamOrbit) -> Result<f64> {
    let rhs = |_x: f64, y: &[f64], dy: &mut [f64]| {
        dy[0] = y[1];
        dy[1] = 1.0 / y[0] - 1.0;
    };
    let opts = DopriOptions { rtol: 1e-13, atol: 1e-14, ..Default::default() };
    let mut t = orbit.x_mu;
    for _ in 0..3 {
        let y = dopri_integrate(rhs, &[orbit.h_minus, 0.0], &[0.0, t], &opts)?;
        let (h, dh) = (y[1][0], y[1][1]);
        t -= dh / (1.0 / h - 1.0);
    }
    Ok(t)
}

/// The three integral forms of the selected c₀², a = (q₀²h)^{-1}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionForms {
    pub c0: f64,
    pub forms: [f64; 3],
}

pub fn ham_selection_c0(orbit: &HamOrbit, q0: f64) -> Result<SelectionForms> {
    let n = orbit.h.len();
    if n == 0 {
        return Err(Error::domain("orbit carries no samples"));
    }
    let g = Grid::new(n, orbit.x_mu);
    let a: Vec<f64> = orbit.h.iter().map(|h| 1.0 / (q0 * q0 * h)).collect();
    let da = g.derivative(&a, 1);
    let inv: Vec<f64> = a.iter().map(|x| 1.0 / x).collect();
    let dinv = g.derivative(&inv, 1);
    let inv2: Vec<f64> = a.iter().map(|x| x.powi(-2)).collect();
    let dinv2 = g.derivative(&inv2, 1);
    let int = |f: &dyn Fn(usize) -> f64| g.integrate(&(0..n).map(f).collect::<Vec<_>>());
    let n1 = -0.5 * int(&|i| dinv[i] * dinv2[i]);
    let d1 = int(&|i| dinv[i] * da[i]);
    let n2 = int(&|i| a[i].powi(-5) * da[i] * da[i]);
    let d2 = int(&|i| a[i].powi(-2) * da[i] * da[i]);
    let n3 = int(&|i| inv[i] * dinv[i] * dinv[i]);
    let d3 = int(&|i| a[i] * a[i] * dinv[i] * dinv[i]);
    let scale = d2.abs().max(d3.abs());
    if !(scale > 1e-14 * int(&|i| a[i].powi(-2)).abs()) || d1 == 0.0 {
        return Err(Error::domain("constant orbit: the selection ratio is 0/0"));
    }
    let forms = [n1 / d1, n2 / d2, n3 / d3];
    Ok(SelectionForms { c0: forms[1].sqrt(), forms })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_basics() {
        let (p, prof) = equilibrium(1.0, 3.0, 0.1, 0.7, 5.0, 16).unwrap();
        assert_eq!(p.q, 1.7);
        assert_eq!(prof.residual_norm, 0.0);
        let eq = StVenant { froude: 3.0, nu: 0.1 };
        assert!(eq.residual(1.0, 0.0, 0.0, 0.7, 1.7)[0].abs() < 1e-15);
        let hd = hopf_data(0.8, 3.0, 0.1).unwrap();
        assert!((hd.c_s - 0.8f64.powf(-1.5) / 3.0).abs() < 1e-15);
        assert!((hd.omega.unwrap() - 0.8f64.powf(1.25) * 10f64.sqrt()).abs() < 1e-13);
        assert!(hopf_data(0.8, 1.5, 0.1).unwrap().omega.is_none());
    }

    #[test]
    fn residual_partials_match_differences() {
        let eq = StVenant { froude: 2.7, nu: 0.13 };
        let am = AlphaM2 { nu: 0.1, k0: 1.3, froude: Some(12.0) };
        let args = [0.83, -0.21, 0.4, 1.7, 2.2];
        let eqs: [&dyn ProfileEquation; 2] = [&eq, &am];
        for e in eqs {
            let base = e.residual(args[0], args[1], args[2], args[3], args[4]);
            for k in 0..5 {
                let h = 1e-6;
                let mut ap = args;
                let mut am_ = args;
                ap[k] += h;
                am_[k] -= h;
                let fd = (e.residual(ap[0], ap[1], ap[2], ap[3], ap[4])[0] - e.residual(am_[0], am_[1], am_[2], am_[3], am_[4])[0]) / (2.0 * h);
                assert!((fd - base[k + 1]).abs() < 1e-6 * (1.0 + fd.abs()), "k={k}: {fd} vs {}", base[k + 1]);
            }
        }
    }

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn ham_orbit_limits() {
        let o = ham_orbit(1.0 - 1e-4, 64).unwrap();
        assert!((o.x_mu - 2.0 * PI).abs() / (2.0 * PI) < 1e-3);
        assert!(ham_orbit(1.0, 64).is_err());
        assert!(ham_orbit(0.0, 64).is_err());
    }

    #[test]
    fn ham_orbit_invariants() {
        for hm in [0.3, 0.5, 0.7] {
            let o = ham_orbit(hm, 256).unwrap();
            assert!((o.h_plus - o.h_plus.ln() - o.mu).abs() < 1e-13);
            for e in o.energy() {
                assert!((e - o.mu).abs() < 1e-10, "{e} vs {}", o.mu);
            }
            let t = ham_period_by_integration(&o).unwrap();
            assert!((t - o.x_mu).abs() / o.x_mu < 1e-8);
        }
    }

    #[test]
    fn selection_forms_agree_and_bound() {
        let o = ham_orbit(0.5, 512).unwrap();
        let s = ham_selection_c0(&o, 1.0).unwrap();
        for f in s.forms {
            assert!((f - s.forms[1]).abs() / s.forms[1] < 1e-8, "{:?}", s.forms);
        }
        let inv_a3: Vec<f64> = o.h.iter().map(|h| h.powi(3)).collect();
        let (lo, hi) = minmax(&inv_a3);
        assert!(s.forms[1] > lo && s.forms[1] < hi);
    }

    #[test]
    fn selection_on_constant_orbit_errors() {
        let o = HamOrbit { h_minus: 1.0, h_plus: 1.0, mu: 1.0, x_mu: 2.0 * PI, c0: f64::NAN, h: vec![1.0; 32], dh: vec![0.0; 32] };
        assert!(ham_selection_c0(&o, 1.0).is_err());
    }

    #[test]
    fn profile_json_round_trip() {
        let (_, prof) = equilibrium(0.9, 3.0, 0.1, 0.4, 7.0, 8).unwrap();
        let text = prof.to_json().unwrap();
        let back = WaveProfile::from_json(&text).unwrap();
        assert_eq!(back, prof);
    }
}
