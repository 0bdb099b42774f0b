//! Hill's method: Fourier–Galerkin truncation of periodic spectral problems
//! into dense eigenproblems, one per Floquet parameter.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::Grid;
use crate::linalg::eigenvalues;
use crate::linearize::{Mass, ProblemKind, SpectralProblem};
use crate::parallel::par_map;

/// Floquet cell convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    /// ξ ∈ [−π/X, π/X).
    Fundamental,
    /// ξ ∈ [−π/(2X), π/(2X)).
    Doubled,
}

impl Convention {
    pub fn half_width(self, period: f64) -> f64 {
        match self {
            Convention::Fundamental => PI / period,
            Convention::Doubled => PI / (2.0 * period),
        }
    }
}

/// Bloch eigenvalues indexed by Floquet parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCloud {
    pub kind: ProblemKind,
    pub period: f64,
    pub modes: usize,
    pub order: usize,
    pub convention: Convention,
    pub xi: Vec<f64>,
    pub eigenvalues: Vec<Vec<Complex64>>,
    /// Floquet parameters whose eigensolve failed, with the reason.
    pub failures: Vec<(f64, String)>,
}

/// `points` Floquet parameters uniformly covering the cell, left-closed.
pub fn xi_grid(period: f64, points: usize, convention: Convention) -> Vec<f64> {
    let h = convention.half_width(period);
    (0..points).map(|j| -h + 2.0 * h * j as f64 / points as f64).collect()
}

/// Symmetric grid including both ±ξ and, for odd counts, ξ = 0.
pub fn xi_grid_symmetric(period: f64, points: usize, convention: Convention) -> Vec<f64> {
    let h = convention.half_width(period);
    if points == 1 {
        return vec![0.0];
    }
    (0..points).map(|j| -h + 2.0 * h * j as f64 / (points - 1) as f64).map(|x| if x.abs() < 1e-15 * h { 0.0 } else { x }).collect()
}

/// Truncated operator at Floquet parameter ξ: the row-major matrix of the
/// right-hand side and, for derivative mass, the diagonal of the mass matrix.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub size: usize,
    pub m1: Vec<Complex64>,
    pub m2_diag: Option<Vec<Complex64>>,
}

impl Assembled {
    /// M2^{-1}M1 (M1 itself for identity mass).
    pub fn reduced(&self) -> Result<Vec<Complex64>> {
        let Some(d) = &self.m2_diag else { return Ok(self.m1.clone()) };
        let n = self.size;
        if let Some(z) = d.iter().find(|z| z.norm() == 0.0) {
            return Err(Error::domain(format!("singular mass matrix (entry {z}); exclude xi = 0")));
        }
        let mut out = self.m1.clone();
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] /= d[i];
            }
        }
        Ok(out)
    }
}

/// Coefficient sample count for `modes`: a power of two ≥ 4N+2.
pub fn coefficient_nodes(problem: &SpectralProblem, modes: usize) -> usize {
    (4 * modes + 2).next_power_of_two().max(problem.native_nodes().next_power_of_two())
}

pub fn assemble(problem: &SpectralProblem, modes: usize, xi: f64) -> Result<Assembled> {
    let nodes = coefficient_nodes(problem, modes);
    let form = problem.hill_form(nodes);
    let grid = Grid::new(nodes, problem.period);
    let d = form.order;
    let nm = 2 * modes + 1;
    let size = d * nm;
    let mut m1 = vec![Complex64::new(0.0, 0.0); size * size];
    let kx: Vec<f64> = (0..nm).map(|m| xi + 2.0 * PI * (m as f64 - modes as f64) / problem.period).collect();
    let slot = |j: i64| j.rem_euclid(nodes as i64) as usize;
    for bi in 0..d {
        for bj in 0..d {
            for t in &form.blocks[bi][bj] {
                let fhat = grid.coefficients(&t.coeff);
                for (mi, k) in kx.iter().enumerate() {
                    let sym = Complex64::new(0.0, *k).powu(t.deriv);
                    for ni in 0..nm {
                        let j = ni as i64 - mi as i64;
                        let f = fhat[slot(j)];
                        if f == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        m1[(bi * nm + ni) * size + bj * nm + mi] += f * sym;
                    }
                }
            }
        }
    }
    let m2_diag = match form.mass {
        Mass::Identity => None,
        Mass::Derivative => {
            if d != 1 {
                return Err(Error::domain("derivative mass is defined for scalar problems only"));
            }
            Some(kx.iter().map(|k| Complex64::new(0.0, *k)).collect())
        }
    };
    Ok(Assembled { size, m1, m2_diag })
}

/// Eigenvalues at one ξ, sorted by real then imaginary part.
pub fn eigen_at(problem: &SpectralProblem, modes: usize, xi: f64) -> Result<Vec<Complex64>> {
    let a = assemble(problem, modes, xi)?;
    let m = a.reduced()?;
    let mut ev = eigenvalues(&m, a.size)?;
    sort_eigs(&mut ev);
    Ok(ev)
}

pub fn sort_eigs(ev: &mut [Complex64]) {
    ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Spectral cloud over `xi_grid`; per-ξ failures are recorded, not fatal.
pub fn spectrum(problem: &SpectralProblem, modes: usize, xi_grid: &[f64], convention: Convention, threads: usize) -> Result<SpectralCloud> {
    let h = convention.half_width(problem.period);
    if let Some(x) = xi_grid.iter().find(|x| !(**x >= -h * (1.0 + 1e-9) && **x <= h * (1.0 + 1e-9))) {
        return Err(Error::domain(format!("xi = {x} outside the Floquet cell [-{h}, {h}]")));
    }
    let results = par_map(xi_grid, threads, |&xi| eigen_at(problem, modes, xi));
    let mut cloud = SpectralCloud {
        kind: problem.kind,
        period: problem.period,
        modes,
        order: problem.order(),
        convention,
        xi: Vec::new(),
        eigenvalues: Vec::new(),
        failures: Vec::new(),
    };
    for (xi, r) in xi_grid.iter().zip(results) {
        match r {
            Ok(ev) => {
                cloud.xi.push(*xi);
                cloud.eigenvalues.push(ev);
            }
            Err(e) => cloud.failures.push((*xi, e.to_string())),
        }
    }
    Ok(cloud)
}

/// Largest real part over eigenvalues outside |λ| ≤ r0, with its witness (ξ, λ).
pub fn max_unstable(cloud: &SpectralCloud, r0: f64) -> Result<(f64, f64, Complex64)> {
    if !r0.is_finite() || r0 < 0.0 {
        return Err(Error::domain("exclusion radius must be finite and non-negative"));
    }
    let mut best: Option<(f64, f64, Complex64)> = None;
    for (xi, ev) in cloud.xi.iter().zip(&cloud.eigenvalues) {
        for z in ev {
            if z.norm() <= r0 {
                continue;
            }
            if best.map_or(true, |b| z.re > b.0) {
                best = Some((z.re, *xi, *z));
            }
        }
    }
    best.ok_or_else(|| Error::domain("no eigenvalues outside the exclusion ball"))
}

impl SpectralCloud {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("xi,re,im\n");
        for (xi, ev) in self.xi.iter().zip(&self.eigenvalues) {
            for z in ev {
                let _ = writeln!(s, "{},{},{}", crate::model::fmt_g17(*xi), crate::model::fmt_g17(z.re), crate::model::fmt_g17(z.im));
            }
        }
        s
    }

    pub fn all(&self) -> impl Iterator<Item = (f64, Complex64)> + '_ {
        self.xi.iter().zip(&self.eigenvalues).flat_map(|(x, ev)| ev.iter().map(move |z| (*x, *z)))
    }
}

/// Largest distance from each eigenvalue of `a` to the nearest conjugate of `b`.
pub fn conjugate_mismatch(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .map(|z| b.iter().map(|w| (z - w.conj()).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}
