//! The periodic Evans function D(λ, ξ) = det(Ψ(X, λ) − e^{iξX} I), winding
//! numbers, root polishing, the Taylor expansion at the origin, and the
//! composite stability verdict.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hill::{self, Convention};
use crate::linalg::{det_small, matmul, mgs_qr};
use crate::linearize::{FirstOrder, SpectralProblem};
use crate::model::slope_margin;
use crate::ode::{dopri_mesh, DopriOptions, A21, A31, A32, A41, A42, A43, A51, A52, A53, A54, A61, A62, A63, A64, A65, B1, B3, B4, B5, B6, C2, C3, C4, C5, E1, E3, E4, E5, E6, E7};
use crate::parallel::par_map;
use crate::profile::WaveProfile;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Integration controls for the monodromy.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EvansOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest log-growth allowed across one orthogonalization segment.
    pub segment_growth: f64,
    /// Liouville mismatch above which a result is marked untrusted.
    pub liouville_untrusted: f64,
}

impl Default for EvansOptions {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-13, segment_growth: 3.0, liouville_untrusted: 1e-6 }
    }
}

fn first_order(problem: &SpectralProblem) -> Result<&FirstOrder> {
    problem.first_order().ok_or_else(|| Error::domain("problem has no first-order form"))
}

/// Segment boundaries on [0, X] sized so each segment grows by at most
/// `segment_growth` in log-norm.
fn segments(fo: &FirstOrder, lambda: Complex64, opts: &EvansOptions) -> Vec<f64> {
    let d = fo.dim;
    let samples = 64;
    let mut amax = 0.0f64;
    for s in 0..samples {
        let a = fo.eval(fo.period * s as f64 / samples as f64, lambda);
        for i in 0..d {
            let row: f64 = (0..d).map(|j| a[i * d + j].norm()).sum();
            amax = amax.max(row);
        }
    }
    let k = ((fo.period * amax / opts.segment_growth).ceil() as usize).clamp(4, 100_000);
    (0..=k).map(|i| fo.period * i as f64 / k as f64).collect()
}

fn identity(d: usize) -> Vec<Complex64> {
    let mut m = vec![ZERO; d * d];
    for i in 0..d {
        m[i * d + i] = ONE;
    }
    m
}

fn dopri_opts(opts: &EvansOptions, h0: Option<f64>) -> DopriOptions {
    DopriOptions { rtol: opts.rtol, atol: opts.atol, h0, ..Default::default() }
}

/// Fundamental matrix over [x0, x1] starting from the identity (row-major),
/// with the accepted step boundaries.
fn propagate(fo: &FirstOrder, lambda: Complex64, x0: f64, x1: f64, opts: &EvansOptions) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let d = fo.dim;
    let mut ac = vec![0.0; d * d];
    let mut al = vec![0.0; d * d];
    let rhs = |x: f64, y: &[Complex64], dy: &mut [Complex64]| {
        fo.eval_parts(x, &mut ac, &mut al);
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for k in 0..d {
                    let a = Complex64::new(ac[i * d + k], 0.0) + lambda * al[i * d + k];
                    acc += a * y[k * d + j];
                }
                dy[i * d + j] = acc;
            }
        }
    };
    let (out, mesh) = dopri_mesh(rhs, &identity(d), &[x0, x1], &dopri_opts(opts, Some(x1 - x0)))?;
    Ok((out.into_iter().nth(1).expect("two outputs"), mesh))
}

const NODES: [f64; 6] = [0.0, C2, C3, C4, C5, 1.0];

/// Tables of A_c and A_l at the Dormand–Prince stage nodes of a fixed step
/// sequence, so that many spectral parameters can share one set of
/// coefficient evaluations.
#[derive(Debug, Clone)]
pub struct StepPlan {
    dim: usize,
    mesh: Vec<f64>,
    ac: Vec<f64>,
    al: Vec<f64>,
}

impl StepPlan {
    /// Uses the finest adaptive mesh found among the reference values.
    pub fn build(problem: &SpectralProblem, references: &[Complex64], opts: &EvansOptions) -> Result<Self> {
        let fo = first_order(problem)?;
        let d = fo.dim;
        let mut mesh: Vec<f64> = Vec::new();
        for lam in references {
            let mut m = vec![0.0];
            for w in segments(fo, *lam, opts).windows(2) {
                let (_, seg) = propagate(fo, *lam, w[0], w[1], opts)?;
                m.extend_from_slice(&seg[1..]);
            }
            if m.len() > mesh.len() {
                mesh = m;
            }
        }
        // halve every step so nearby parameters stay within tolerance
        let mut fine = Vec::with_capacity(2 * mesh.len());
        for w in mesh.windows(2) {
            fine.push(w[0]);
            fine.push(0.5 * (w[0] + w[1]));
        }
        fine.extend(mesh.last().copied());
        let mesh = fine;
        let steps = mesh.len().saturating_sub(1);
        let d2 = d * d;
        let mut ac = vec![0.0; steps * 6 * d2];
        let mut al = vec![0.0; steps * 6 * d2];
        for s in 0..steps {
            let h = mesh[s + 1] - mesh[s];
            for (j, c) in NODES.iter().enumerate() {
                let off = (s * 6 + j) * d2;
                fo.eval_parts(mesh[s] + c * h, &mut ac[off..off + d2], &mut al[off..off + d2]);
            }
        }
        Ok(Self { dim: d, mesh, ac, al })
    }

    pub fn steps(&self) -> usize {
        self.mesh.len().saturating_sub(1)
    }
}

/// Orthonormal frame accumulator for [Ψ; I].
struct FrameBuilder {
    d: usize,
    frame: Vec<Complex64>,
    log_scale: f64,
    logdet: Complex64,
}

impl FrameBuilder {
    fn new(d: usize) -> Self {
        let mut frame = vec![ZERO; 2 * d * d];
        for i in 0..d {
            frame[i * d + i] = ONE;
            frame[(d + i) * d + i] = ONE;
        }
        Self { d, frame, log_scale: 0.0, logdet: ZERO }
    }

    fn fold(&mut self, phi: &[Complex64]) {
        let d = self.d;
        self.logdet += det_small(phi, d).ln();
        let top = matmul(phi, &self.frame[..d * d], d, d, d);
        self.frame[..d * d].copy_from_slice(&top);
        let r = mgs_qr(&mut self.frame, 2 * d, d);
        self.log_scale += r.iter().map(|z| z.norm().ln()).sum::<f64>();
    }

    fn finish(self, fo: &FirstOrder, lambda: Complex64, opts: &EvansOptions) -> EvansFrame {
        let d = self.d;
        let liouville = ((self.logdet - fo.trace_integral(lambda)).exp() - ONE).norm();
        let (top, bottom) = self.frame.split_at(d * d);
        EvansFrame {
            dim: d,
            lambda,
            top: top.to_vec(),
            bottom: bottom.to_vec(),
            log_scale: self.log_scale,
            liouville,
            trusted: liouville <= opts.liouville_untrusted,
        }
    }
}

/// Integrates along `plan`; `None` if the embedded error estimate exceeds the
/// tolerance anywhere.
fn planned_frame(plan: &StepPlan, fo: &FirstOrder, lambda: Complex64, opts: &EvansOptions) -> Option<EvansFrame> {
    let d = plan.dim;
    let d2 = d * d;
    let mut fb = FrameBuilder::new(d);
    let mut phi = identity(d);
    let mut growth = 0.0;
    let mut a = vec![vec![ZERO; d2]; 6];
    let mut k = vec![vec![ZERO; d2]; 7];
    let mut tmp = vec![ZERO; d2];
    let mut ynew = vec![ZERO; d2];
    let mul = |a: &[Complex64], y: &[Complex64], out: &mut [Complex64]| {
        for i in 0..d {
            for j in 0..d {
                let mut acc = ZERO;
                for l in 0..d {
                    acc += a[i * d + l] * y[l * d + j];
                }
                out[i * d + j] = acc;
            }
        }
    };
    let steps = plan.steps();
    for s in 0..steps {
        let h = plan.mesh[s + 1] - plan.mesh[s];
        for (j, aj) in a.iter_mut().enumerate() {
            let off = (s * 6 + j) * d2;
            for e in 0..d2 {
                aj[e] = Complex64::new(plan.ac[off + e], 0.0) + lambda * plan.al[off + e];
            }
        }
        let stage = |coef: &[f64], k: &[Vec<Complex64>], tmp: &mut [Complex64]| {
            for e in 0..d2 {
                let mut acc = ZERO;
                for (c, kk) in coef.iter().zip(k) {
                    acc += kk[e] * *c;
                }
                tmp[e] = phi[e] + acc * h;
            }
        };
        mul(&a[0], &phi, &mut k[0]);
        stage(&[A21], &k[..1], &mut tmp);
        mul(&a[1], &tmp, &mut k[1]);
        stage(&[A31, A32], &k[..2], &mut tmp);
        mul(&a[2], &tmp, &mut k[2]);
        stage(&[A41, A42, A43], &k[..3], &mut tmp);
        mul(&a[3], &tmp, &mut k[3]);
        stage(&[A51, A52, A53, A54], &k[..4], &mut tmp);
        mul(&a[4], &tmp, &mut k[4]);
        stage(&[A61, A62, A63, A64, A65], &k[..5], &mut tmp);
        mul(&a[5], &tmp, &mut k[5]);
        stage(&[B1, 0.0, B3, B4, B5, B6], &k[..6], &mut ynew);
        let (head, tail) = k.split_at_mut(6);
        mul(&a[5], &ynew, &mut tail[0]);
        let mut err = 0.0f64;
        for e in 0..d2 {
            let est = (head[0][e] * E1 + head[2][e] * E3 + head[3][e] * E4 + head[4][e] * E5 + head[5][e] * E6 + tail[0][e] * E7) * h;
            let sc = opts.atol + opts.rtol * phi[e].norm().max(ynew[e].norm());
            err = err.max(est.norm() / sc);
        }
        if !(err <= 1.0) {
            return None;
        }
        std::mem::swap(&mut phi, &mut ynew);
        let amax = (0..d).map(|i| (0..d).map(|j| a[0][i * d + j].norm()).sum::<f64>()).fold(0.0, f64::max);
        growth += h * amax;
        if growth >= opts.segment_growth || s + 1 == steps {
            fb.fold(&phi);
            phi = identity(d);
            growth = 0.0;
        }
    }
    Some(fb.finish(fo, lambda, opts))
}

/// Ψ(X, λ) with its Liouville diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Monodromy {
    pub dim: usize,
    pub lambda: Complex64,
    pub psi: Vec<Complex64>,
    /// |det Ψ / exp(∫tr A) − 1|.
    pub liouville: f64,
    pub trusted: bool,
}

pub fn monodromy(problem: &SpectralProblem, lambda: Complex64, opts: &EvansOptions) -> Result<Monodromy> {
    let fo = first_order(problem)?;
    let d = fo.dim;
    let xs = segments(fo, lambda, opts);
    let mut psi = vec![ZERO; d * d];
    for i in 0..d {
        psi[i * d + i] = ONE;
    }
    let mut logdet = ZERO;
    for w in xs.windows(2) {
        let (phi, _) = propagate(fo, lambda, w[0], w[1], opts)?;
        logdet += det_small(&phi, d).ln();
        psi = matmul(&phi, &psi, d, d, d);
    }
    let liouville = ((logdet - fo.trace_integral(lambda)).exp() - ONE).norm();
    Ok(Monodromy { dim: d, lambda, psi, liouville, trusted: liouville <= opts.liouville_untrusted })
}

/// D = mantissa · e^{exponent}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvansValue {
    pub mantissa: Complex64,
    pub exponent: f64,
}

impl EvansValue {
    /// Materializes the value (may overflow for large exponents).
    pub fn value(&self) -> Complex64 {
        self.mantissa * self.exponent.exp()
    }

    /// self / other without forming either magnitude.
    pub fn ratio(&self, other: &EvansValue) -> Complex64 {
        self.mantissa / other.mantissa * (self.exponent - other.exponent).exp()
    }

    /// Value rescaled by e^{−shift}.
    pub fn scaled(&self, shift: f64) -> Complex64 {
        self.mantissa * (self.exponent - shift).exp()
    }

    pub fn ln_abs(&self) -> f64 {
        self.mantissa.norm().ln() + self.exponent
    }
}

/// The column space of [Ψ; I] carried as an orthonormal frame [T; B] with the
/// accumulated log-determinant of the discarded triangular factors:
/// det(Ψ − μI) = e^{log_scale} det(T − μB).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvansFrame {
    pub dim: usize,
    pub lambda: Complex64,
    pub top: Vec<Complex64>,
    pub bottom: Vec<Complex64>,
    pub log_scale: f64,
    pub liouville: f64,
    pub trusted: bool,
}

impl EvansFrame {
    pub fn value(&self, mu: Complex64) -> EvansValue {
        let d = self.dim;
        let m: Vec<Complex64> = self.top.iter().zip(&self.bottom).map(|(t, b)| t - mu * b).collect();
        let det = det_small(&m, d);
        let s = det.norm();
        if s > 0.0 && s.is_finite() {
            EvansValue { mantissa: det / s, exponent: self.log_scale + s.ln() }
        } else {
            EvansValue { mantissa: det, exponent: self.log_scale }
        }
    }

    pub fn value_at_xi(&self, xi: f64, period: f64) -> EvansValue {
        self.value(Complex64::from_polar(1.0, xi * period))
    }
}

pub fn evans_frame(problem: &SpectralProblem, lambda: Complex64, opts: &EvansOptions) -> Result<EvansFrame> {
    let fo = first_order(problem)?;
    let mut fb = FrameBuilder::new(fo.dim);
    for w in segments(fo, lambda, opts).windows(2) {
        let (phi, _) = propagate(fo, lambda, w[0], w[1], opts)?;
        fb.fold(&phi);
    }
    Ok(fb.finish(fo, lambda, opts))
}

/// [`evans_frame`] along a precomputed plan, falling back to adaptive
/// stepping when the plan is too coarse for `lambda`.
pub fn evans_frame_planned(problem: &SpectralProblem, plan: &StepPlan, lambda: Complex64, opts: &EvansOptions) -> Result<EvansFrame> {
    let fo = first_order(problem)?;
    match planned_frame(plan, fo, lambda, opts) {
        Some(f) => Ok(f),
        None => evans_frame(problem, lambda, opts),
    }
}

pub fn evans_value(problem: &SpectralProblem, lambda: Complex64, xi: f64, opts: &EvansOptions) -> Result<EvansValue> {
    Ok(evans_frame(problem, lambda, opts)?.value_at_xi(xi, problem.period))
}

/// Closed contours, traversed counterclockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Contour {
    /// Boundary of the right half disc of radius `r` about 0.
    Semicircle { r: f64 },
    Circle { center: Complex64, radius: f64 },
    /// Boundary of {inner ≤ |λ| ≤ outer, Re λ ≥ 0}.
    Annulus { inner: f64, outer: f64 },
}

impl Contour {
    fn pieces(&self) -> Vec<(f64, Box<dyn Fn(f64) -> Complex64 + '_>)> {
        match *self {
            Contour::Semicircle { r } => vec![
                (PI * r, Box::new(move |t| Complex64::from_polar(r, -PI / 2.0 + PI * t))),
                (2.0 * r, Box::new(move |t| Complex64::new(0.0, r - 2.0 * r * t))),
            ],
            Contour::Circle { center, radius } => {
                vec![(2.0 * PI * radius, Box::new(move |t| center + Complex64::from_polar(radius, 2.0 * PI * t)))]
            }
            Contour::Annulus { inner, outer } => vec![
                (PI * outer, Box::new(move |t| Complex64::from_polar(outer, -PI / 2.0 + PI * t))),
                (outer - inner, Box::new(move |t| Complex64::new(0.0, outer - (outer - inner) * t))),
                (PI * inner, Box::new(move |t| Complex64::from_polar(inner, PI / 2.0 - PI * t))),
                (outer - inner, Box::new(move |t| Complex64::new(0.0, -inner - (outer - inner) * t))),
            ],
        }
    }

    /// Point at normalized arclength s ∈ [0, 1).
    pub fn point(&self, s: f64) -> Complex64 {
        let pieces = self.pieces();
        let total: f64 = pieces.iter().map(|p| p.0).sum();
        let mut rem = s.rem_euclid(1.0) * total;
        for (len, f) in &pieces {
            if rem < *len {
                return f(rem / len);
            }
            rem -= len;
        }
        let (_, f) = pieces.last().expect("nonempty");
        f(1.0)
    }

    /// Corner parameters that must be sampled exactly.
    fn corners(&self) -> Vec<f64> {
        let pieces = self.pieces();
        let total: f64 = pieces.iter().map(|p| p.0).sum();
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for (len, _) in &pieces[..pieces.len() - 1] {
            acc += len;
            out.push(acc / total);
        }
        out
    }

    /// Parses `semicircle:R=0.2`, `circle:c=0,r=1e-2` (c may be `a+bi`), or
    /// `annulus:r=0.01,R=1`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (shape, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad contour field '{part}'")))?;
            if kv.insert(k.trim().to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Parse(format!("duplicate contour field '{k}'")));
            }
        }
        let num = |k: &str| -> Result<f64> {
            kv.get(k).ok_or_else(|| Error::Parse(format!("contour needs '{k}'")))?.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))
        };
        let check = |allowed: &[&str]| -> Result<()> {
            match kv.keys().find(|k| !allowed.contains(&k.as_str())) {
                Some(k) => Err(Error::Parse(format!("unknown contour field '{k}'"))),
                None => Ok(()),
            }
        };
        let c = match shape.trim() {
            "semicircle" => {
                check(&["R"])?;
                Contour::Semicircle { r: num("R")? }
            }
            "circle" => {
                check(&["c", "r"])?;
                let center = match kv.get("c") {
                    Some(s) => parse_complex(s)?,
                    None => ZERO,
                };
                Contour::Circle { center, radius: num("r")? }
            }
            "annulus" => {
                check(&["r", "R"])?;
                Contour::Annulus { inner: num("r")?, outer: num("R")? }
            }
            other => return Err(Error::Parse(format!("unknown contour shape '{other}'"))),
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Contour::Semicircle { r } => r > 0.0 && r.is_finite(),
            Contour::Circle { radius, center } => radius > 0.0 && radius.is_finite() && center.norm().is_finite(),
            Contour::Annulus { inner, outer } => inner > 0.0 && outer > inner && outer.is_finite(),
        };
        if ok { Ok(()) } else { Err(Error::domain(format!("invalid contour {self:?}"))) }
    }

    pub fn describe(&self) -> String {
        match *self {
            Contour::Semicircle { r } => format!("semicircle:R={r}"),
            Contour::Circle { center, radius } => format!("circle:c={}{:+}i,r={radius}", center.re, center.im),
            Contour::Annulus { inner, outer } => format!("annulus:r={inner},R={outer}"),
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match *self {
            Contour::Semicircle { r } => Contour::Semicircle { r: r * factor },
            Contour::Circle { center, radius } => Contour::Circle { center, radius: radius * factor },
            Contour::Annulus { inner, outer } => Contour::Annulus { inner: inner / factor, outer: outer * factor },
        }
    }
}

/// Parses `a`, `bi`, `a+bi` or `a-bi`.
pub fn parse_complex(s: &str) -> Result<Complex64> {
    let t = s.trim().replace(' ', "");
    if let Ok(x) = t.parse::<f64>() {
        return Ok(Complex64::new(x, 0.0));
    }
    let body = t.strip_suffix('i').ok_or_else(|| Error::Parse(format!("bad complex '{s}'")))?;
    let split = body.char_indices().skip(1).filter(|(i, c)| (*c == '+' || *c == '-') && !body[..*i].ends_with(['e', 'E'])).map(|(i, _)| i).last();
    match split {
        Some(i) => {
            let re = body[..i].parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?;
            let im_s = &body[i..];
            let im = if im_s == "+" { 1.0 } else if im_s == "-" { -1.0 } else { im_s.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))? };
            Ok(Complex64::new(re, im))
        }
        None => {
            let im = if body.is_empty() || body == "+" { 1.0 } else if body == "-" { -1.0 } else { body.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))? };
            Ok(Complex64::new(0.0, im))
        }
    }
}

/// Adaptive sampling controls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WindingOptions {
    pub rel_jump: f64,
    pub initial_points: usize,
    pub max_points: usize,
    pub threads: usize,
    pub evans: EvansOptions,
}

impl Default for WindingOptions {
    fn default() -> Self {
        Self { rel_jump: 0.2, initial_points: 32, max_points: 20_000, threads: 1, evans: EvansOptions::default() }
    }
}

/// Outcome of the argument principle on one contour at one ξ.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContourReport {
    pub contour: String,
    pub xi: f64,
    pub lambdas: Vec<Complex64>,
    pub values: Vec<EvansValue>,
    pub winding: i64,
    pub winding_raw: f64,
    pub max_jump: f64,
    pub refinements: usize,
    /// Radius factor applied when the first attempt hit a zero on the contour.
    pub perturbed: Option<f64>,
    pub untrusted_points: usize,
}

fn rel_jump(a: &EvansValue, b: &EvansValue) -> f64 {
    let r = b.ratio(a);
    if !r.is_finite() || a.mantissa.norm() == 0.0 || b.mantissa.norm() == 0.0 {
        return f64::INFINITY;
    }
    (r - ONE).norm() / r.norm().min(1.0)
}

/// Winding numbers of D(·, ξ) on one contour for every ξ in `xis`, sharing
/// one adaptively refined set of sample points.
pub fn winding_numbers(problem: &SpectralProblem, contour: &Contour, xis: &[f64], opts: &WindingOptions) -> Result<Vec<ContourReport>> {
    contour.validate()?;
    match winding_attempt(problem, contour, xis, opts) {
        Err(Error::ZeroOnContour(_)) => {
            let factor = 1.0 + 1e-3;
            let mut out = winding_attempt(problem, &contour.scaled(factor), xis, opts)?;
            for r in &mut out {
                r.perturbed = Some(factor);
            }
            Ok(out)
        }
        other => other,
    }
}

pub fn winding_number(problem: &SpectralProblem, contour: &Contour, xi: f64, opts: &WindingOptions) -> Result<ContourReport> {
    Ok(winding_numbers(problem, contour, &[xi], opts)?.remove(0))
}

fn winding_attempt(problem: &SpectralProblem, contour: &Contour, xis: &[f64], opts: &WindingOptions) -> Result<Vec<ContourReport>> {
    let period = problem.period;
    let mus: Vec<Complex64> = xis.iter().map(|x| Complex64::from_polar(1.0, x * period)).collect();
    let mut ss: Vec<f64> = contour.corners();
    let n0 = opts.initial_points.max(ss.len() * 2);
    for j in 0..n0 {
        ss.push(j as f64 / n0 as f64);
    }
    ss.sort_by(f64::total_cmp);
    ss.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let pts: Vec<Complex64> = ss.iter().map(|s| contour.point(*s)).collect();
    let pick = |key: &dyn Fn(&Complex64) -> f64| *pts.iter().max_by(|a, b| key(a).total_cmp(&key(b))).expect("nonempty");
    let refs = [pick(&|z| z.norm()), pick(&|z| z.re), pick(&|z| -z.re)];
    let plan = StepPlan::build(problem, &refs, &opts.evans)?;
    let eval = |s: &f64| -> Result<(Vec<EvansValue>, bool)> {
        let f = evans_frame_planned(problem, &plan, contour.point(*s), &opts.evans)?;
        Ok((mus.iter().map(|m| f.value(*m)).collect(), f.trusted))
    };
    let mut vals: Vec<(Vec<EvansValue>, bool)> = par_map(&ss, opts.threads, eval).into_iter().collect::<Result<_>>()?;
    let mut refinements = 0;
    loop {
        let n = ss.len();
        let mut insert = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            let worst = (0..mus.len()).map(|k| rel_jump(&vals[i].0[k], &vals[j].0[k])).fold(0.0, f64::max);
            if worst > opts.rel_jump {
                let s1 = if j == 0 { 1.0 } else { ss[j] };
                if s1 - ss[i] < 1e-12 {
                    return Err(Error::ZeroOnContour(format!("{}", contour.point(ss[i]))));
                }
                insert.push(0.5 * (ss[i] + s1));
            }
        }
        if insert.is_empty() {
            break;
        }
        if n + insert.len() > opts.max_points {
            return Err(Error::MaxPointsExceeded(opts.max_points));
        }
        refinements += 1;
        let new_vals: Vec<(Vec<EvansValue>, bool)> = par_map(&insert, opts.threads, eval).into_iter().collect::<Result<_>>()?;
        let mut merged: Vec<(f64, (Vec<EvansValue>, bool))> = ss.into_iter().zip(vals).chain(insert.into_iter().zip(new_vals)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        (ss, vals) = merged.into_iter().unzip();
    }
    // drop points whose neighbours already satisfy the jump bound
    let corners = contour.corners();
    let is_corner = |s: f64| corners.iter().any(|c| (c - s).abs() < 1e-15);
    let mut keep = vec![true; ss.len()];
    let mut prev = 0;
    for i in 1..ss.len() {
        let next = (i + 1) % ss.len();
        let ok = !is_corner(ss[i]) && (0..mus.len()).all(|k| rel_jump(&vals[prev].0[k], &vals[next].0[k]) <= opts.rel_jump);
        if ok {
            keep[i] = false;
        } else {
            prev = i;
        }
    }
    let mut it = keep.iter();
    ss.retain(|_| *it.next().expect("aligned"));
    let mut it = keep.iter();
    vals.retain(|_| *it.next().expect("aligned"));
    let n = ss.len();
    let lambdas: Vec<Complex64> = ss.iter().map(|s| contour.point(*s)).collect();
    let untrusted = vals.iter().filter(|v| !v.1).count();
    let mut reports = Vec::with_capacity(xis.len());
    for (k, xi) in xis.iter().enumerate() {
        let mut arg = 0.0;
        let mut max_jump = 0.0f64;
        for i in 0..n {
            let j = (i + 1) % n;
            arg += vals[j].0[k].ratio(&vals[i].0[k]).arg();
            max_jump = max_jump.max(rel_jump(&vals[i].0[k], &vals[j].0[k]));
        }
        let raw = arg / (2.0 * PI);
        let w = raw.round();
        if (raw - w).abs() > 0.25 {
            return Err(Error::NoConvergence(format!("winding {raw} is not near an integer")));
        }
        reports.push(ContourReport {
            contour: contour.describe(),
            xi: *xi,
            lambdas: lambdas.clone(),
            values: vals.iter().map(|v| v.0[k]).collect(),
            winding: w as i64,
            winding_raw: raw,
            max_jump,
            refinements,
            perturbed: None,
            untrusted_points: untrusted,
        });
    }
    Ok(reports)
}

/// Clenshaw–Curtis nodes cos(jπ/(n−1)) and weights on [−1, 1].
pub fn clenshaw_curtis(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let nn = n - 1;
    let x: Vec<f64> = (0..n).map(|j| (PI * j as f64 / nn as f64).cos()).collect();
    let mut w = vec![0.0; n];
    for (j, wj) in w.iter_mut().enumerate() {
        let th = PI * j as f64 / nn as f64;
        let mut s = 0.0;
        for k in 1..=nn / 2 {
            let b = if 2 * k == nn { 1.0 } else { 2.0 };
            s += b / (4.0 * (k * k) as f64 - 1.0) * (2.0 * k as f64 * th).cos();
        }
        let c = if j == 0 || j == nn { 1.0 } else { 2.0 };
        *wj = c / nn as f64 * (1.0 - s);
    }
    (x, w)
}

/// Taylor coefficients c_{k,j} of D(λ, ξ) = Σ c_{k,j} λ^k ξ^j for k + j ≤ 3 and
/// the modulation roots λ ≈ α_j ξ + β_j ξ².
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OriginExpansion {
    pub radius: f64,
    pub n_cheb: usize,
    /// Common exponent removed from all coefficients.
    pub exponent: f64,
    /// `c[k][j]`, zero-padded for k + j > 3.
    pub c: Vec<Vec<Complex64>>,
    pub alpha: [Complex64; 2],
    pub beta: [Complex64; 2],
    pub discriminant: Complex64,
    pub near_double_alpha: bool,
}

impl OriginExpansion {
    /// Predicted critical eigenvalues at small ξ.
    pub fn predict(&self, xi: f64) -> [Complex64; 2] {
        [self.alpha[0] * xi + self.beta[0] * xi * xi, self.alpha[1] * xi + self.beta[1] * xi * xi]
    }

    /// max(|c00|, |c10|, |c01|) / |c20|.
    pub fn double_root_ratio(&self) -> f64 {
        let c20 = self.c[2][0].norm();
        [self.c[0][0], self.c[1][0], self.c[0][1]].iter().map(|z| z.norm()).fold(0.0, f64::max) / c20
    }

    /// Largest deviation of c_{k,j} from the reality pattern (real for even j,
    /// imaginary for odd j), relative to the largest coefficient.
    pub fn reality_defect(&self) -> f64 {
        let scale = self.c.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        let mut worst = 0.0f64;
        for (k, row) in self.c.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                if k + j > 3 {
                    continue;
                }
                let off = if j % 2 == 0 { z.im } else { z.re };
                worst = worst.max(off.abs() / scale);
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TaylorOptions {
    /// Circle radius; defaults to 1e−2 · 2π/X.
    pub radius: Option<f64>,
    pub n_cheb: usize,
    pub max_shrink: usize,
    pub winding: WindingOptions,
}

impl Default for TaylorOptions {
    fn default() -> Self {
        Self { radius: None, n_cheb: 65, max_shrink: 4, winding: WindingOptions::default() }
    }
}

pub fn origin_taylor(problem: &SpectralProblem, opts: &TaylorOptions) -> Result<OriginExpansion> {
    if !(33..=201).contains(&opts.n_cheb) {
        return Err(Error::domain("n_cheb must lie in [33, 201]"));
    }
    let fo = first_order(problem)?;
    let d = fo.dim;
    let period = problem.period;
    let mut radius = opts.radius.unwrap_or(1e-2 * 2.0 * PI / period);
    let mut found = None;
    for _ in 0..=opts.max_shrink {
        let rep = winding_number(problem, &Contour::Circle { center: ZERO, radius }, 0.0, &opts.winding)?;
        if rep.winding == 2 {
            found = Some(radius);
            break;
        }
        found = None;
        if rep.winding < 2 {
            return Err(Error::WrongRootCountAtR { radius, found: rep.winding });
        }
        radius *= 0.5;
    }
    let radius = found.ok_or(Error::WrongRootCountAtR { radius: radius * 2.0, found: -1 })?;
    let (ts, ws) = clenshaw_curtis(opts.n_cheb);
    let m = d + 1;
    let omega: Vec<Complex64> = (0..m).map(|p| Complex64::from_polar(1.0, 2.0 * PI * p as f64 / m as f64)).collect();
    let refs = [Complex64::new(radius, 0.0), Complex64::new(0.0, radius), Complex64::new(-radius, 0.0)];
    let plan = StepPlan::build(problem, &refs, &opts.winding.evans)?;
    let frames: Vec<EvansFrame> = par_map(&ts, opts.winding.threads, |t| {
        evans_frame_planned(problem, &plan, Complex64::from_polar(radius, PI * t), &opts.winding.evans)
    })
        .into_iter()
        .collect::<Result<_>>()?;
    let vals: Vec<Vec<EvansValue>> = frames.iter().map(|f| omega.iter().map(|w| f.value(*w)).collect()).collect();
    let e0 = vals.iter().flatten().map(|v| v.exponent).fold(f64::NEG_INFINITY, f64::max);
    // g_j(λ) = Σ_k f_k(λ)(ikX)^j / j!, with f_k from the DFT over μ
    let fact = [1.0, 1.0, 2.0, 6.0];
    let mut c = vec![vec![ZERO; 4]; 4];
    for (node, (t, w)) in ts.iter().zip(&ws).enumerate() {
        let dv: Vec<Complex64> = vals[node].iter().map(|v| v.scaled(e0)).collect();
        let fk: Vec<Complex64> = (0..m)
            .map(|k| (0..m).map(|p| dv[p] * omega[p].powu(k as u32).conj()).sum::<Complex64>() / m as f64)
            .collect();
        for j in 0..4 {
            let g: Complex64 = (0..m).map(|k| fk[k] * Complex64::new(0.0, k as f64 * period).powu(j as u32) / fact[j]).sum();
            for (k, row) in c.iter_mut().enumerate() {
                if k + j > 3 {
                    continue;
                }
                row[j] += g * Complex64::from_polar(1.0, -(k as f64) * PI * t) * (*w / (2.0 * radius.powi(k as i32)));
            }
        }
    }
    let (c20, c11, c02) = (c[2][0], c[1][1], c[0][2]);
    if c20.norm() <= 1e-300 || c20.norm() < 1e-14 * c.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max) {
        return Err(Error::DegenerateQuadratic(c20.norm()));
    }
    let disc = c11 * c11 - 4.0 * c20 * c02;
    let sq = disc.sqrt();
    let alpha = [(-c11 + sq) / (2.0 * c20), (-c11 - sq) / (2.0 * c20)];
    let beta = alpha.map(|a| -(c[3][0] * a.powu(3) + c[2][1] * a * a + c[1][2] * a + c[0][3]) / (2.0 * c20 * a + c11));
    let amax = alpha[0].norm().max(alpha[1].norm());
    let near_double_alpha = (alpha[0] - alpha[1]).norm() < 1e-4 * amax;
    Ok(OriginExpansion { radius, n_cheb: opts.n_cheb, exponent: e0, c, alpha, beta, discriminant: disc, near_double_alpha })
}

/// A root of D(·, ξ) refined by Müller's method.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PolishedRoot {
    pub lambda: Complex64,
    pub iterations: usize,
    /// |D| at the root relative to the local scale.
    pub residual: f64,
}

pub fn polish_root(problem: &SpectralProblem, lambda0: Complex64, xi: f64, opts: &EvansOptions) -> Result<PolishedRoot> {
    let plan = StepPlan::build(problem, &[lambda0], opts)?;
    let frame = |l: Complex64| evans_frame_planned(problem, &plan, l, opts).map(|f| f.value_at_xi(xi, problem.period));
    let h = 1e-3 * (1.0 + lambda0.norm());
    let v0 = frame(lambda0)?;
    let e_ref = v0.exponent;
    let mut xs = [lambda0 - h, lambda0 + h, lambda0];
    let mut fs = [frame(xs[0])?.scaled(e_ref), frame(xs[1])?.scaled(e_ref), v0.scaled(e_ref)];
    let scale = fs[0].norm().max(fs[1].norm());
    if fs[2].norm() <= 1e-10 * scale {
        return Ok(PolishedRoot { lambda: lambda0, iterations: 0, residual: fs[2].norm() / scale });
    }
    for it in 1..=40 {
        let (x0, x1, x2) = (xs[0], xs[1], xs[2]);
        let (f0, f1, f2) = (fs[0], fs[1], fs[2]);
        let h1 = x1 - x0;
        let h2 = x2 - x1;
        let d1 = (f1 - f0) / h1;
        let d2 = (f2 - f1) / h2;
        let a = (d2 - d1) / (h2 + h1);
        let b = a * h2 + d2;
        let disc = (b * b - 4.0 * a * f2).sqrt();
        let den = if (b + disc).norm() >= (b - disc).norm() { b + disc } else { b - disc };
        let step = if den.norm() == 0.0 { Complex64::new(h, 0.0) } else { -2.0 * f2 / den };
        let x3 = x2 + step;
        let f3 = frame(x3)?.scaled(e_ref);
        if !f3.is_finite() {
            return Err(Error::NoConvergence(format!("non-finite Evans value at {x3}")));
        }
        xs = [x1, x2, x3];
        fs = [f1, f2, f3];
        let res = f3.norm() / scale;
        if res <= 1e-10 || step.norm() <= 1e-13 * (1.0 + x3.norm()) {
            return Ok(PolishedRoot { lambda: x3, iterations: it, residual: res });
        }
    }
    Err(Error::NoConvergence(format!("no convergence from {lambda0}")))
}

/// Settings of the composite verdict.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub hill_modes: usize,
    pub xi_points: usize,
    /// Exclusion radius about λ = 0 for the Hill scan.
    pub r0: f64,
    /// Re λ above this counts as unstable.
    pub hill_tol: f64,
    pub annulus_inner: f64,
    pub annulus_outer: f64,
    /// Number of ξ values (excluding 0) checked by winding on the annulus; 0 skips.
    pub winding_xi: usize,
    pub taylor: TaylorOptions,
    /// |Re α| / |α| tolerance for α ∈ iℝ.
    pub alpha_imag_tol: f64,
    pub threads: usize,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        Self {
            hill_modes: 40,
            xi_points: 21,
            r0: 1e-3,
            hill_tol: 1e-8,
            annulus_inner: 1e-2,
            annulus_outer: 2.0,
            winding_xi: 3,
            taylor: TaylorOptions::default(),
            alpha_imag_tol: 1e-6,
            threads: 1,
        }
    }
}

/// Overall classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum Overall {
    Stable,
    Unstable { witness: String },
    Indeterminate { reason: String },
}

/// Truth values of the diffusive stability conditions for one profile.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub d1: Option<bool>,
    pub d2: Option<bool>,
    pub d3: Option<bool>,
    pub h1: Option<bool>,
    pub slope: bool,
    pub slope_margin: f64,
    pub hill_max_re: f64,
    /// max Re λ over Hill eigenvalues with |λ| ≥ the annulus inner radius.
    pub hill_far_max_re: f64,
    pub hill_witness: (f64, Complex64),
    pub far_winding: Vec<(f64, i64)>,
    pub expansion: Option<OriginExpansion>,
    /// max_j Re β_j (modulational indicator).
    pub max_re_beta: Option<f64>,
    pub notes: Vec<String>,
    pub overall: Overall,
}

pub fn verdict(profile: &WaveProfile, cfg: &VerdictConfig) -> Result<StabilityVerdict> {
    let problem = crate::linearize::evans_matrix(profile)?;
    verdict_for_problem(&problem, Some(slope_margin(profile)), cfg)
}

/// Verdict for any first-order problem; `slope` is the slope margin if known.
pub fn verdict_for_problem(problem: &SpectralProblem, slope: Option<f64>, cfg: &VerdictConfig) -> Result<StabilityVerdict> {
    let mut notes = Vec::new();
    let xis = hill::xi_grid_symmetric(problem.period, cfg.xi_points.max(1) | 1, Convention::Fundamental);
    let cloud = hill::spectrum(problem, cfg.hill_modes, &xis, Convention::Fundamental, cfg.threads)?;
    for (xi, e) in &cloud.failures {
        notes.push(format!("hill failure at xi = {xi}: {e}"));
    }
    let (hill_max_re, wxi, wl) = hill::max_unstable(&cloud, cfg.r0)?;
    let hill_ok = hill_max_re <= cfg.hill_tol;
    let (hill_far_max_re, _, _) = hill::max_unstable(&cloud, cfg.annulus_inner)?;
    let mut far_winding = Vec::new();
    let mut wind_ok = Some(true);
    if cfg.winding_xi > 0 {
        let h = PI / problem.period;
        let sub: Vec<f64> = (1..=cfg.winding_xi).map(|i| h * i as f64 / cfg.winding_xi as f64 * 0.999).collect();
        let contour = Contour::Annulus { inner: cfg.annulus_inner, outer: cfg.annulus_outer };
        let wopts = WindingOptions { threads: cfg.threads, ..cfg.taylor.winding };
        match winding_numbers(problem, &contour, &sub, &wopts) {
            Ok(reps) => {
                for r in reps {
                    if r.winding != 0 {
                        wind_ok = Some(false);
                    }
                    far_winding.push((r.xi, r.winding));
                }
            }
            Err(e) => {
                notes.push(format!("annulus winding failed: {e}"));
                wind_ok = None;
            }
        }
    }
    let d1 = match wind_ok {
        Some(w) => Some(hill_ok && w),
        None if !hill_ok => Some(false),
        None => None,
    };
    let expansion = match origin_taylor(problem, &cfg.taylor) {
        Ok(e) => Some(e),
        Err(e) => {
            notes.push(format!("origin expansion failed: {e}"));
            None
        }
    };
    let (d2, d3, h1, max_re_beta) = match &expansion {
        Some(e) => {
            let imag = e.alpha.iter().all(|a| a.re.abs() <= cfg.alpha_imag_tol * a.norm().max(1e-300));
            let mrb = e.beta[0].re.max(e.beta[1].re);
            let d2 = Some(imag && mrb < 0.0);
            let d3 = Some(e.double_root_ratio() <= 1e-6);
            let h1 = if e.near_double_alpha { None } else { Some(true) };
            (d2, d3, h1, Some(mrb))
        }
        None => (None, None, None, None),
    };
    let overall = if d1 == Some(false) {
        let witness = if !hill_ok {
            format!("hill eigenvalue {wl} at xi = {wxi}")
        } else {
            format!("nonzero winding on the annulus: {far_winding:?}")
        };
        Overall::Unstable { witness }
    } else if d2 == Some(false) {
        let e = expansion.as_ref().expect("d2 implies expansion");
        Overall::Unstable { witness: format!("modulational: alpha = {:?}, beta = {:?}", e.alpha, e.beta) }
    } else if d1.is_none() || d2.is_none() || d3.is_none() {
        Overall::Indeterminate { reason: "a condition could not be evaluated".into() }
    } else if d3 == Some(false) {
        Overall::Indeterminate { reason: "origin is not a clean double root".into() }
    } else if h1.is_none() {
        Overall::Indeterminate { reason: "alpha roots nearly coincide".into() }
    } else {
        Overall::Stable
    };
    let slope_margin = slope.unwrap_or(f64::NAN);
    Ok(StabilityVerdict {
        d1,
        d2,
        d3,
        h1,
        slope: slope_margin > 0.0,
        slope_margin,
        hill_max_re,
        hill_far_max_re,
        hill_witness: (wxi, wl),
        far_winding,
        expansion,
        max_re_beta,
        notes,
        overall,
    })
}
