//! Stability maps over (α, F, ν, q, X), bisection for the lower and upper
//! stability boundaries, and power-law fits of the boundaries.

use std::collections::BTreeSet;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evans::{verdict, Overall, StabilityVerdict, VerdictConfig};
use crate::linalg::{lstsq_min_norm, solve_real};
use crate::model::{fmt_g17, PhysicalParams};
use crate::profile::{profile_from_hopf, NewtonOptions, WaveProfile};

/// How the outflow q is tied to the Froude number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum QRule {
    /// q = q₀F^{−α/2}, the scaling family.
    Scaled { q0: f64 },
    /// q = coef · F^{exponent}.
    Power { coef: f64, exponent: f64 },
    Fixed { q: f64 },
}

impl QRule {
    pub fn q(&self, alpha: f64, froude: f64) -> f64 {
        match *self {
            QRule::Scaled { q0 } => q0 * froude.powf(-alpha / 2.0),
            QRule::Power { coef, exponent } => coef * froude.powf(exponent),
            QRule::Fixed { q } => q,
        }
    }

    /// Parses `scaled:q0=..`, `power:coef=..,exponent=..` or `fixed:q=..`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (kind, rest) = spec.trim().split_once(':').ok_or_else(|| Error::Parse(format!("bad q rule '{spec}'")))?;
        let mut fields: Vec<(&str, f64)> = Vec::new();
        for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| Error::Parse(format!("bad q rule field '{part}'")))?;
            let v: f64 = v.trim().parse().map_err(|_| Error::Parse(format!("bad number in q rule: '{part}'")))?;
            if fields.iter().any(|(kk, _)| *kk == k.trim()) {
                return Err(Error::Parse(format!("duplicate q rule field '{}'", k.trim())));
            }
            fields.push((k.trim(), v));
        }
        let take = |names: &[&str]| -> Result<Vec<f64>> {
            if let Some((k, _)) = fields.iter().find(|(k, _)| !names.contains(k)) {
                return Err(Error::Parse(format!("unknown q rule field '{k}'")));
            }
            names
                .iter()
                .map(|n| fields.iter().find(|(k, _)| k == n).map(|(_, v)| *v).ok_or_else(|| Error::Parse(format!("q rule needs '{n}'"))))
                .collect()
        };
        let rule = match kind.trim() {
            "scaled" => QRule::Scaled { q0: take(&["q0"])?[0] },
            "power" => {
                let v = take(&["coef", "exponent"])?;
                QRule::Power { coef: v[0], exponent: v[1] }
            }
            "fixed" => QRule::Fixed { q: take(&["q"])?[0] },
            other => return Err(Error::Parse(format!("unknown q rule '{other}'"))),
        };
        let ok = match rule {
            QRule::Scaled { q0 } => q0 > 0.0,
            QRule::Power { coef, exponent } => coef > 0.0 && exponent.is_finite(),
            QRule::Fixed { q } => q > 0.0,
        };
        if !ok {
            return Err(Error::domain(format!("q rule '{spec}' must give positive q")));
        }
        Ok(rule)
    }
}

/// Rescaled period X₀ = X F^{1/2 + 5α/4}.
pub fn rescaled_period(period: f64, alpha: f64, froude: f64) -> f64 {
    period * froude.powf(0.5 + 1.25 * alpha)
}

/// Solver settings shared by every probe.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Collocation points used to seed each profile.
    pub n: usize,
    pub newton: NewtonOptions,
    pub verdict: VerdictConfig,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { n: 128, newton: NewtonOptions::default(), verdict: VerdictConfig::default() }
    }
}

/// Outcome of one full profile solve and verdict.
#[derive(Debug, Clone)]
pub struct Probe {
    pub profile: WaveProfile,
    pub verdict: StabilityVerdict,
    /// Re λ above this counts as unstable.
    pub hill_tol: f64,
}

impl Probe {
    /// Stable near the origin: α ∈ iℝ and max Re β < 0.
    pub fn lower_stable(&self) -> Option<bool> {
        self.verdict.d2
    }

    /// No unstable spectrum away from the origin.
    pub fn upper_stable(&self) -> bool {
        self.verdict.hill_far_max_re <= self.hill_tol && self.verdict.far_winding.iter().all(|(_, w)| *w == 0)
    }
}

pub fn probe(froude: f64, nu: f64, q: f64, period: f64, cfg: &ProbeConfig) -> Result<Probe> {
    let run = || -> Result<Probe> {
        let target = PhysicalParams::new(froude, nu, q, 1.0, period)?;
        let profile = profile_from_hopf(&target, cfg.n, &cfg.newton)?;
        let verdict = verdict(&profile, &cfg.verdict)?;
        Ok(Probe { profile, verdict, hill_tol: cfg.verdict.hill_tol })
    };
    run().map_err(|e| Error::Probe { x: period, source: Box::new(e) })
}

/// One point of a stability map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    #[serde(rename = "F")]
    pub froude: f64,
    pub nu: f64,
    pub q: f64,
    #[serde(rename = "X")]
    pub period: f64,
    #[serde(rename = "X0")]
    pub x0: f64,
    /// `stable`, `unstable`, `indeterminate`, or `failed`.
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_re_beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hill_max_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower_stable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_stable: Option<bool>,
    /// Deterministic cost measures: collocation size and Newton provenance.
    #[serde(default)]
    pub work: String,
}

impl SweepRecord {
    pub fn key(&self) -> String {
        record_key(self.alpha, self.froude, self.nu, self.q, self.period)
    }

    fn from_probe(alpha: f64, froude: f64, nu: f64, q: f64, period: f64, res: Result<Probe>) -> Self {
        let base = SweepRecord {
            alpha,
            froude,
            nu,
            q,
            period,
            x0: rescaled_period(period, alpha, froude),
            class: String::new(),
            witness: None,
            c: None,
            max_re_beta: None,
            hill_max_re: None,
            lower_stable: None,
            upper_stable: None,
            work: String::new(),
        };
        match res {
            Ok(p) => {
                let (class, witness) = match &p.verdict.overall {
                    Overall::Stable => ("stable", None),
                    Overall::Unstable { witness } => ("unstable", Some(witness.clone())),
                    Overall::Indeterminate { reason } => ("indeterminate", Some(reason.clone())),
                };
                SweepRecord {
                    class: class.into(),
                    witness,
                    c: Some(p.profile.params.c),
                    max_re_beta: p.verdict.max_re_beta,
                    hill_max_re: Some(p.verdict.hill_max_re),
                    lower_stable: p.lower_stable(),
                    upper_stable: Some(p.upper_stable()),
                    work: format!("n={}", p.profile.n),
                    ..base
                }
            }
            Err(e) => SweepRecord { class: "failed".into(), witness: Some(e.to_string()), ..base },
        }
    }
}

pub fn record_key(alpha: f64, froude: f64, nu: f64, q: f64, period: f64) -> String {
    [alpha, froude, nu, q, period].iter().map(|v| fmt_g17(*v)).collect::<Vec<_>>().join(",")
}

/// Cartesian grid of parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub alpha: Vec<f64>,
    #[serde(rename = "F")]
    pub froude: Vec<f64>,
    pub nu: f64,
    pub q_rule: QRule,
    #[serde(rename = "X")]
    pub periods: Vec<f64>,
    #[serde(default)]
    pub probe: ProbeConfig,
}

impl GridSpec {
    /// Points in canonical order: α, then F, then X.
    pub fn points(&self) -> Vec<(f64, f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.alpha {
            for &f in &self.froude {
                let q = self.q_rule.q(a, f);
                for &x in &self.periods {
                    out.push((a, f, self.nu, q, x));
                }
            }
        }
        out
    }
}

/// Reads a JSON-lines store, skipping a trailing partial line.
pub fn read_store(path: &Path) -> Result<Vec<SweepRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let file = fs::File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<SweepRecord>(&line) {
            Ok(r) => out.push(r),
            Err(_) => continue,
        }
    }
    Ok(out)
}

/// Writes `text` to `path` via a temporary file and rename.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Io(format!("bad path {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn canonical_text(records: &[SweepRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

/// Computes every grid point not already in the store, appending each record
/// as it completes, then rewrites the store in canonical grid order.
pub fn stability_map(spec: &GridSpec, store: &Path, threads: usize) -> Result<Vec<SweepRecord>> {
    stability_map_with(spec, store, threads, |_, f, nu, q, x| probe(f, nu, q, x, &spec.probe))
}

/// [`stability_map`] with a caller-supplied probe.
pub fn stability_map_with<P>(spec: &GridSpec, store: &Path, threads: usize, run: P) -> Result<Vec<SweepRecord>>
where
    P: Fn(f64, f64, f64, f64, f64) -> Result<Probe> + Sync + Send,
{
    let existing = read_store(store)?;
    let done: BTreeSet<String> = existing.iter().map(|r| r.key()).collect();
    let points = spec.points();
    let mut seen = BTreeSet::new();
    let todo: Vec<_> = points
        .iter()
        .filter(|p| {
            let k = record_key(p.0, p.1, p.2, p.3, p.4);
            !done.contains(&k) && seen.insert(k)
        })
        .copied()
        .collect();
    if !todo.is_empty() {
        let file = OpenOptions::new().create(true).append(true).open(store)?;
        let writer = Mutex::new(file);
        let work = |p: &(f64, f64, f64, f64, f64)| -> Result<()> {
            let rec = SweepRecord::from_probe(p.0, p.1, p.2, p.3, p.4, run(p.0, p.1, p.2, p.3, p.4));
            let line = serde_json::to_string(&rec)? + "\n";
            let mut w = writer.lock().map_err(|_| Error::Io("store writer poisoned".into()))?;
            w.write_all(line.as_bytes())?;
            w.flush()?;
            Ok(())
        };
        let results: Vec<Result<()>> = match threads {
            1 => todo.iter().map(work).collect(),
            0 => todo.par_iter().map(work).collect(),
            t => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
                Ok(pool) => pool.install(|| todo.par_iter().map(work).collect()),
                Err(_) => todo.iter().map(work).collect(),
            },
        };
        results.into_iter().collect::<Result<Vec<()>>>()?;
    }
    let mut by_key: std::collections::BTreeMap<String, SweepRecord> = read_store(store)?.into_iter().map(|r| (r.key(), r)).collect();
    let mut out = Vec::new();
    for p in &points {
        if let Some(r) = by_key.remove(&record_key(p.0, p.1, p.2, p.3, p.4)) {
            out.push(r);
        }
    }
    // records from other grids sharing the store keep their key order
    out.extend(by_key.into_values());
    let text = canonical_text(&out)?;
    if fs::read_to_string(store).ok().as_deref() != Some(text.as_str()) {
        write_atomic(store, &text)?;
    }
    Ok(out)
}

/// Which boundary to locate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// Loss of modulational (small-λ) stability.
    Lower,
    /// Appearance of unstable spectrum away from the origin.
    Upper,
}

impl Boundary {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Boundary::Lower),
            "upper" => Ok(Boundary::Upper),
            other => Err(Error::Parse(format!("unknown boundary '{other}'"))),
        }
    }

    fn classify(self, p: &Probe) -> Result<bool> {
        match self {
            Boundary::Lower => p.lower_stable().ok_or_else(|| Error::Probe {
                x: p.profile.params.period,
                source: Box::new(Error::NoConvergence("modulation coefficients unavailable".into())),
            }),
            Boundary::Upper => Ok(p.upper_stable()),
        }
    }
}

/// Bisection result: the verdict changes inside [x_lo, x_hi].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub alpha: f64,
    #[serde(rename = "F")]
    pub froude: f64,
    pub nu: f64,
    pub q: f64,
    pub which: Boundary,
    #[serde(rename = "X")]
    pub x: f64,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Stability of the criterion at `x_lo`.
    pub stable_below: bool,
    /// (X, stable) for every probe, in evaluation order.
    pub probes: Vec<(f64, bool)>,
}

/// Bisects on X until the bracket's relative width is at most `rel_tol`.
pub fn boundary_bisect(alpha: f64, froude: f64, nu: f64, q_rule: &QRule, x_lo: f64, x_hi: f64, which: Boundary, rel_tol: f64, cfg: &ProbeConfig) -> Result<BoundaryPoint> {
    let q = q_rule.q(alpha, froude);
    boundary_bisect_with(x_lo, x_hi, rel_tol, |x| {
        let p = probe(froude, nu, q, x, cfg)?;
        which.classify(&p)
    })
    .map(|(x, lo, hi, stable_below, probes)| BoundaryPoint { alpha, froude, nu, q, which, x, x_lo: lo, x_hi: hi, stable_below, probes })
}

/// Generic bisection on a boolean classifier; returns (midpoint, lo, hi,
/// class at lo, probes).
pub fn boundary_bisect_with<C>(x_lo: f64, x_hi: f64, rel_tol: f64, mut classify: C) -> Result<(f64, f64, f64, bool, Vec<(f64, bool)>)>
where
    C: FnMut(f64) -> Result<bool>,
{
    if !(x_lo > 0.0 && x_hi > x_lo && rel_tol > 0.0) {
        return Err(Error::domain(format!("need 0 < X_lo < X_hi and rel_tol > 0, got [{x_lo}, {x_hi}], {rel_tol}")));
    }
    let mut probes = Vec::new();
    let mut eval = |x: f64, probes: &mut Vec<(f64, bool)>| -> Result<bool> {
        let s = classify(x)?;
        probes.push((x, s));
        Ok(s)
    };
    let s_lo = eval(x_lo, &mut probes)?;
    let s_hi = eval(x_hi, &mut probes)?;
    if s_lo == s_hi {
        return Err(Error::NotBracketed(format!("same verdict ({}) at X = {x_lo} and X = {x_hi}", if s_lo { "stable" } else { "unstable" })));
    }
    let (mut lo, mut hi) = (x_lo, x_hi);
    while (hi - lo) / (0.5 * (hi + lo)) > rel_tol {
        let mid = 0.5 * (lo + hi);
        if eval(mid, &mut probes)? == s_lo {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), lo, hi, s_lo, probes))
}

/// One row of the boundary CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryRow {
    pub alpha: f64,
    #[serde(rename = "F")]
    pub froude: f64,
    pub nu: f64,
    pub q: f64,
    pub x_lower: Option<f64>,
    pub x_upper: Option<f64>,
}

pub fn boundary_csv(rows: &[BoundaryRow]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_g17).unwrap_or_default();
    let mut s = String::from("alpha,F,nu,q,X_lower,X_upper\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{}\n", fmt_g17(r.alpha), fmt_g17(r.froude), fmt_g17(r.nu), fmt_g17(r.q), opt(r.x_lower), opt(r.x_upper)));
    }
    s
}

/// Reads a boundary CSV written by [`boundary_csv`]; empty cells are absent boundaries.
pub fn parse_boundary_csv(text: &str) -> Result<Vec<BoundaryRow>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::Parse("empty boundary file".into()))?;
    if header.trim() != "alpha,F,nu,q,X_lower,X_upper" {
        return Err(Error::Parse(format!("unexpected boundary header '{header}'")));
    }
    let num = |s: &str, line: usize| -> Result<f64> { s.trim().parse().map_err(|_| Error::Parse(format!("line {line}: bad number '{s}'"))) };
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("line {}: expected 6 fields", i + 2)));
        }
        let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s, i + 2).map(Some) };
        rows.push(BoundaryRow { alpha: num(f[0], i + 2)?, froude: num(f[1], i + 2)?, nu: num(f[2], i + 2)?, q: num(f[3], i + 2)?, x_lower: opt(f[4])?, x_upper: opt(f[5])? });
    }
    Ok(rows)
}

/// Flat CSV view of sweep records in the given order.
pub fn records_csv(records: &[SweepRecord]) -> String {
    let opt = |v: Option<f64>| v.map(fmt_g17).unwrap_or_default();
    let flag = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
    let mut s = String::from("alpha,F,nu,q,X,X0,class,c,max_re_beta,hill_max_re,lower_stable,upper_stable\n");
    for r in records {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            fmt_g17(r.alpha),
            fmt_g17(r.froude),
            fmt_g17(r.nu),
            fmt_g17(r.q),
            fmt_g17(r.period),
            fmt_g17(r.x0),
            r.class,
            opt(r.c),
            opt(r.max_re_beta),
            opt(r.hill_max_re),
            flag(r.lower_stable),
            flag(r.upper_stable)
        ));
    }
    s
}

/// Which regressors enter the fit of log X.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// log X = b₁ log F + b₂ log q + b₃.
    FroudeAndOutflow,
    /// log X = b₁ log F + b₃.
    FroudeOnly,
}

/// Least-squares power law for a stability boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub model: FitModel,
    pub b1: f64,
    /// Absent for [`FitModel::FroudeOnly`].
    pub b2: Option<f64>,
    pub b3: f64,
    pub points: usize,
    pub rank: usize,
    /// Set when the design is rank deficient; coefficients are then the
    /// minimum-norm solution on the identifiable subspace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_note: Option<String>,
    /// Errors of log X.
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    /// Errors of log X relative to |log X|.
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
    /// Standard errors in the order (b₁, b₂, b₃), for full-rank fits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_errors: Option<Vec<f64>>,
    /// max over single-point deletions of |Δb₁| / se(b₁).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_leverage: Option<f64>,
}

/// Fits log X against log F (and log q) for points (F, q, X).
pub fn powerlaw_fit(points: &[(f64, f64, f64)], model: FitModel) -> Result<BoundaryFit> {
    if points.len() < 4 {
        return Err(Error::domain(format!("need at least 4 boundary points, got {}", points.len())));
    }
    if points.iter().any(|(f, q, x)| !(*f > 0.0 && *q > 0.0 && *x > 0.0)) {
        return Err(Error::domain("F, q and X must be positive"));
    }
    let fmin = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let fmax = points.iter().map(|p| p.0).fold(0.0, f64::max);
    if fmax < 2.0 * fmin {
        return Err(Error::domain(format!("F must span a factor of 2, got [{fmin}, {fmax}]")));
    }
    let row = |p: &(f64, f64, f64)| -> Vec<f64> {
        match model {
            FitModel::FroudeAndOutflow => vec![p.0.ln(), p.1.ln(), 1.0],
            FitModel::FroudeOnly => vec![p.0.ln(), 1.0],
        }
    };
    let (coef, rank) = ols(points, &row)?;
    let ncol = coef.len();
    let pred = |p: &(f64, f64, f64)| row(p).iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
    let res: Vec<f64> = points.iter().map(|p| p.2.ln() - pred(p)).collect();
    let abs: Vec<f64> = res.iter().map(|r| r.abs()).collect();
    let rel: Vec<f64> = points.iter().zip(&abs).map(|(p, a)| a / p.2.ln().abs()).collect();
    let n = points.len();
    let mut std_errors = None;
    let mut max_leverage = None;
    let mut rank_note = None;
    if rank < ncol {
        rank_note = Some(format!("design has rank {rank} < {ncol}; coefficients are the minimum-norm least-squares solution and only their identifiable combinations are meaningful"));
    } else if n > ncol {
        let s2 = res.iter().map(|r| r * r).sum::<f64>() / (n - ncol) as f64;
        let mut ata = vec![0.0; ncol * ncol];
        for p in points {
            let r = row(p);
            for i in 0..ncol {
                for j in 0..ncol {
                    ata[i * ncol + j] += r[i] * r[j];
                }
            }
        }
        let mut se = Vec::with_capacity(ncol);
        for i in 0..ncol {
            let mut e = vec![0.0; ncol];
            e[i] = 1.0;
            let (col, _) = solve_real(&ata, ncol, &e)?;
            se.push((s2 * col[i]).sqrt());
        }
        if n > ncol + 1 && se[0] > 0.0 {
            let mut worst = 0.0f64;
            for k in 0..n {
                let sub: Vec<(f64, f64, f64)> = points.iter().enumerate().filter(|(i, _)| *i != k).map(|(_, p)| *p).collect();
                let (c, r) = ols(&sub, &row)?;
                if r == ncol {
                    worst = worst.max((c[0] - coef[0]).abs() / se[0]);
                }
            }
            max_leverage = Some(worst);
        }
        std_errors = Some(se);
    }
    let (b2, b3) = match model {
        FitModel::FroudeAndOutflow => (Some(coef[1]), coef[2]),
        FitModel::FroudeOnly => (None, coef[1]),
    };
    Ok(BoundaryFit {
        model,
        b1: coef[0],
        b2,
        b3,
        points: n,
        rank,
        rank_note,
        max_abs_error: abs.iter().copied().fold(0.0, f64::max),
        mean_abs_error: abs.iter().sum::<f64>() / n as f64,
        max_rel_error: rel.iter().copied().fold(0.0, f64::max),
        mean_rel_error: rel.iter().sum::<f64>() / n as f64,
        std_errors,
        max_leverage,
    })
}

fn ols(points: &[(f64, f64, f64)], row: &dyn Fn(&(f64, f64, f64)) -> Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let ncol = row(&points[0]).len();
    let m = points.len();
    // column scaling keeps the rank test independent of units
    let mut scale = vec![0.0f64; ncol];
    for p in points {
        for (j, v) in row(p).iter().enumerate() {
            scale[j] = scale[j].max(v.abs());
        }
    }
    let scale: Vec<f64> = scale.iter().map(|s| if *s > 0.0 { *s } else { 1.0 }).collect();
    let mut a = vec![Complex64::new(0.0, 0.0); m * ncol];
    let mut b = vec![Complex64::new(0.0, 0.0); m];
    for (i, p) in points.iter().enumerate() {
        for (j, v) in row(p).iter().enumerate() {
            a[i * ncol + j] = Complex64::new(v / scale[j], 0.0);
        }
        b[i] = Complex64::new(p.2.ln(), 0.0);
    }
    let (x, dropped) = lstsq_min_norm(&a, m, ncol, &b, 1e-10)?;
    Ok((x.iter().zip(&scale).map(|(z, s)| z.re / s).collect(), ncol - dropped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_is_recovered() {
        let pts: Vec<(f64, f64, f64)> = [(4.0, 0.3), (5.0, 0.7), (7.0, 0.2), (9.0, 0.5), (11.0, 0.9)]
            .iter()
            .map(|&(f, q)| (f, q, (0.3f64).exp() * f64::powf(f, -0.692) * f64::powf(q, 3.46)))
            .collect();
        let fit = powerlaw_fit(&pts, FitModel::FroudeAndOutflow).unwrap();
        assert!((fit.b1 + 0.692).abs() < 1e-12);
        assert!((fit.b2.unwrap() - 3.46).abs() < 1e-12);
        assert!((fit.b3 - 0.3).abs() < 1e-12);
        assert!(fit.max_abs_error < 1e-12);
        assert_eq!(fit.rank, 3);
    }

    #[test]
    fn collinear_design_is_reported() {
        // q an exact power of F: log q is a multiple of log F
        let pts: Vec<(f64, f64, f64)> = [4.0, 5.0, 6.0, 8.0, 10.0].iter().map(|&f: &f64| (f, 0.4 * f.powi(-2), 2.0 * f.powf(1.5))).collect();
        let fit = powerlaw_fit(&pts, FitModel::FroudeAndOutflow).unwrap();
        assert_eq!(fit.rank, 2);
        assert!(fit.rank_note.is_some());
        assert!(fit.max_abs_error < 1e-10);
        // the identifiable combination b₁ − 2b₂ is the F exponent
        assert!((fit.b1 - 2.0 * fit.b2.unwrap() - 1.5).abs() < 1e-10);
    }

    #[test]
    fn fit_preconditions() {
        let few = [(4.0, 1.0, 1.0), (8.0, 1.0, 2.0), (9.0, 1.0, 3.0)];
        assert!(powerlaw_fit(&few, FitModel::FroudeOnly).is_err());
        let narrow = [(4.0, 1.0, 1.0), (5.0, 1.0, 2.0), (6.0, 1.0, 3.0), (7.0, 1.0, 3.0)];
        assert!(powerlaw_fit(&narrow, FitModel::FroudeOnly).is_err());
    }

    #[test]
    fn bisection_brackets_a_step() {
        let (x, lo, hi, below, probes) = boundary_bisect_with(5.0, 20.0, 1e-3, |x| Ok(x > 8.44)).unwrap();
        assert!(!below);
        assert!(lo <= 8.44 && 8.44 <= hi);
        assert!((hi - lo) / x <= 1e-3);
        assert!(probes.len() > 2);
    }

    #[test]
    fn bisection_rejects_unbracketed_interval() {
        let r = boundary_bisect_with(5.0, 20.0, 1e-2, |_| Ok(true));
        assert!(matches!(r, Err(Error::NotBracketed(_))));
    }

    #[test]
    fn q_rules() {
        assert!((QRule::Scaled { q0: 0.4 }.q(-2.0, 6.0) - 2.4).abs() < 1e-15);
        assert!((QRule::Power { coef: 0.4, exponent: -2.0 }.q(-2.0, 2.0) - 0.1).abs() < 1e-15);
        assert_eq!(QRule::Fixed { q: 1.5 }.q(0.0, 3.0), 1.5);
    }

    #[test]
    fn csv_header() {
        let s = boundary_csv(&[BoundaryRow { alpha: -2.0, froude: 5.0, nu: 0.1, q: 2.0, x_lower: Some(6.25), x_upper: None }]);
        assert!(s.starts_with("alpha,F,nu,q,X_lower,X_upper\n"));
        assert!(s.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn q_rule_parsing() {
        assert_eq!(QRule::parse("scaled:q0=0.4").unwrap(), QRule::Scaled { q0: 0.4 });
        assert_eq!(QRule::parse("power:exponent=-2,coef=0.4").unwrap(), QRule::Power { coef: 0.4, exponent: -2.0 });
        assert_eq!(QRule::parse("fixed:q=1.5").unwrap(), QRule::Fixed { q: 1.5 });
        for bad in ["scaled", "scaled:q=1", "power:coef=1", "fixed:q=1,q=2", "fixed:q=-1", "cubic:q=1"] {
            assert!(QRule::parse(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn boundary_csv_round_trip() {
        let rows = vec![
            BoundaryRow { alpha: -2.0, froude: 5.0, nu: 0.1, q: 2.0, x_lower: Some(6.25), x_upper: None },
            BoundaryRow { alpha: -2.0, froude: 6.0, nu: 0.1, q: 2.4, x_lower: Some(8.2), x_upper: Some(31.7) },
        ];
        let text = boundary_csv(&rows);
        let back = parse_boundary_csv(&text).unwrap();
        assert_eq!(boundary_csv(&back), text);
        assert!(parse_boundary_csv("a,b\n").is_err());
    }
}
