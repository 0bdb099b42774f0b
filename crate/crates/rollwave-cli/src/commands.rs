//! Subcommand bodies. Each reads its inputs, computes, and writes every
//! output through [`write_atomic`] so a failed run leaves no partial files.

use std::fmt::Write as _;
use std::path::Path;

use rollwave::evans::{self, Contour, EvansOptions, TaylorOptions, VerdictConfig, WindingOptions};
use rollwave::hill::{self, Convention, SpectralCloud};
use rollwave::kdv_limit::{self, KdvKsBase};
use rollwave::linearize;
use rollwave::model::{fmt_g17, PhysicalParams};
use rollwave::profile::{self, ContinuationOptions, NewtonOptions, WaveProfile};
use rollwave::sweep::{self, Boundary, BoundaryRow, FitModel, GridSpec, ProbeConfig, QRule};
use serde_json::json;

use crate::config::RunConfig;
use crate::CliError;

pub fn execute(cfg: &RunConfig) -> Result<(), CliError> {
    write_atomic(&cfg.manifest_path(), &cfg.manifest())?;
    match cfg.sub.name {
        "profile" => profile_cmd(cfg),
        "continue" => continue_cmd(cfg),
        "spectrum" => spectrum_cmd(cfg),
        "evans" => evans_cmd(cfg),
        "taylor" => taylor_cmd(cfg),
        "verdict" => verdict_cmd(cfg),
        "sweep" => sweep_cmd(cfg),
        "fit" => fit_cmd(cfg),
        "kdv" => kdv_cmd(cfg),
        "limit-inf" => limit_inf_cmd(cfg),
        other => Err(CliError::Internal(format!("no handler for {other}"))),
    }
}

fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        if !dir.is_dir() {
            return Err(CliError::Usage(format!("output directory {} does not exist", dir.display())));
        }
    }
    sweep::write_atomic(path, text).map_err(CliError::from)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn read_profile(cfg: &RunConfig, key: &str) -> Result<WaveProfile, CliError> {
    let path = cfg.require(key)?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
    Ok(WaveProfile::from_json(&text)?)
}

fn newton(cfg: &RunConfig) -> Result<NewtonOptions, CliError> {
    Ok(NewtonOptions { tol: cfg.f64("tol")?, max_iter: cfg.usize("max_iter")?, ..Default::default() })
}

fn positive(cfg: &RunConfig, k: &str) -> Result<usize, CliError> {
    match cfg.usize(k)? {
        0 => Err(CliError::Usage(format!("`{k}` must be positive"))),
        n => Ok(n),
    }
}

fn profile_csv(p: &WaveProfile) -> String {
    let mut s = String::from("x,tau,dtau,u\n");
    let x = p.grid().nodes();
    let u = p.velocity();
    for i in 0..p.n {
        let _ = writeln!(s, "{},{},{},{}", fmt_g17(x[i]), fmt_g17(p.tau[i]), fmt_g17(p.dtau[i]), fmt_g17(u[i]));
    }
    s
}

fn emit_profile(cfg: &RunConfig, p: &WaveProfile) -> Result<(), CliError> {
    let text = match cfg.choice("format", &["json", "csv"])?.as_str() {
        "csv" => profile_csv(p),
        _ => p.to_json()?,
    };
    write_atomic(&cfg.path("out")?, &text)
}

fn profile_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.choice("format", &["json", "csv"])?;
    let opts = newton(cfg)?;
    let n = positive(cfg, "n")?;
    let (f, nu, q, x) = (cfg.f64("F")?, cfg.f64("nu")?, cfg.f64("q")?, cfg.f64("X")?);
    let p = match cfg.get("seed") {
        Some(_) => {
            let seed = read_profile(cfg, "seed")?;
            let target = PhysicalParams::new(f, nu, q, seed.params.c, x)?;
            profile::solve_profile(&target, &seed, &opts)?
        }
        None => profile::profile_from_hopf(&PhysicalParams::new(f, nu, q, 1.0, x)?, n, &opts)?,
    };
    emit_profile(cfg, &p)
}

fn continue_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let from = read_profile(cfg, "in")?;
    let p = from.params;
    let f = cfg.opt_f64("F")?.unwrap_or(p.froude);
    let nu = cfg.opt_f64("nu")?.unwrap_or(p.nu);
    let q = cfg.opt_f64("q")?.unwrap_or(p.q);
    let x = cfg.opt_f64("X")?.unwrap_or(p.period);
    let to = PhysicalParams::new(f, nu, q, p.c, x)?;
    let opts = ContinuationOptions { initial_steps: positive(cfg, "initial_steps")?, min_step: cfg.f64("min_step")?, newton: newton(cfg)? };
    let path = profile::continue_profile(&from, &to, &opts)?;
    let last = path.last().ok_or_else(|| CliError::Internal("empty continuation path".into()))?;
    if cfg.get("path").is_some() {
        let mut s = String::from("step,F,nu,q,X,c,amplitude,residual\n");
        for (i, w) in path.iter().enumerate() {
            let a = w.params;
            let _ = writeln!(
                s,
                "{i},{},{},{},{},{},{},{}",
                fmt_g17(a.froude),
                fmt_g17(a.nu),
                fmt_g17(a.q),
                fmt_g17(a.period),
                fmt_g17(a.c),
                fmt_g17(w.amplitude()),
                fmt_g17(w.residual_norm)
            );
        }
        write_atomic(&cfg.path("path")?, &s)?;
    }
    write_atomic(&cfg.path("out")?, &last.to_json()?)
}

fn cloud_out(cfg: &RunConfig, cloud: &SpectralCloud, summary: Option<serde_json::Value>) -> Result<(), CliError> {
    let text = match cfg.choice("format", &["json", "csv"])?.as_str() {
        "csv" => cloud.to_csv(),
        _ => match summary {
            Some(mut s) => {
                s["spectrum"] = serde_json::to_value(cloud).map_err(|e| CliError::Internal(e.to_string()))?;
                to_json(&s)?
            }
            None => to_json(cloud)?,
        },
    };
    write_atomic(&cfg.path("out")?, &text)
}

fn spectrum_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.choice("format", &["json", "csv"])?;
    let conv = match cfg.choice("convention", &["fundamental", "doubled"])?.as_str() {
        "doubled" => Convention::Doubled,
        _ => Convention::Fundamental,
    };
    let p = read_profile(cfg, "in")?;
    let problem = linearize::bloch_coeffs(&p)?;
    let xi = hill::xi_grid(problem.period, positive(cfg, "xi_points")?, conv);
    let cloud = hill::spectrum(&problem, positive(cfg, "modes")?, &xi, conv, cfg.threads())?;
    cloud_out(cfg, &cloud, None)
}

fn evans_options(cfg: &RunConfig) -> Result<EvansOptions, CliError> {
    Ok(EvansOptions { rtol: cfg.f64("rtol")?, atol: cfg.f64("atol")?, ..Default::default() })
}

fn evans_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let format = cfg.choice("format", &["json", "csv"])?;
    let xis = cfg.list("xi")?;
    if xis.is_empty() {
        return Err(CliError::Usage("`xi` is empty".into()));
    }
    let opts = evans_options(cfg)?;
    let polish = cfg.bool("polish")?;
    let p = read_profile(cfg, "in")?;
    let problem = linearize::evans_matrix(&p)?;
    let text = match (cfg.get("lambda"), cfg.get("contour")) {
        (Some(l), None) => {
            let lambda = evans::parse_complex(l)?;
            if polish {
                let roots = xis.iter().map(|&xi| evans::polish_root(&problem, lambda, xi, &opts).map(|r| (xi, r))).collect::<rollwave::Result<Vec<_>>>()?;
                if format == "csv" {
                    let mut s = String::from("xi,re,im,iterations,residual\n");
                    for (xi, r) in &roots {
                        let _ = writeln!(s, "{},{},{},{},{}", fmt_g17(*xi), fmt_g17(r.lambda.re), fmt_g17(r.lambda.im), r.iterations, fmt_g17(r.residual));
                    }
                    s
                } else {
                    to_json(&json!({ "start": lambda, "roots": roots.iter().map(|(xi, r)| json!({ "xi": xi, "root": r })).collect::<Vec<_>>() }))?
                }
            } else {
                let frame = evans::evans_frame(&problem, lambda, &opts)?;
                let vals: Vec<_> = xis.iter().map(|&xi| (xi, frame.value_at_xi(xi, problem.period))).collect();
                if format == "csv" {
                    let mut s = String::from("xi,mantissa_re,mantissa_im,exponent\n");
                    for (xi, v) in &vals {
                        let _ = writeln!(s, "{},{},{},{}", fmt_g17(*xi), fmt_g17(v.mantissa.re), fmt_g17(v.mantissa.im), fmt_g17(v.exponent));
                    }
                    s
                } else {
                    to_json(&json!({
                        "lambda": lambda,
                        "liouville": frame.liouville,
                        "trusted": frame.trusted,
                        "values": vals.iter().map(|(xi, v)| json!({ "xi": xi, "value": v })).collect::<Vec<_>>(),
                    }))?
                }
            }
        }
        (None, Some(c)) => {
            if polish {
                return Err(CliError::Usage("`polish` needs `lambda`, not `contour`".into()));
            }
            let contour = Contour::parse(c)?;
            let wopts = WindingOptions {
                rel_jump: cfg.f64("rel_jump")?,
                initial_points: positive(cfg, "initial_points")?,
                max_points: positive(cfg, "max_points")?,
                threads: cfg.threads(),
                evans: opts,
            };
            let reports = evans::winding_numbers(&problem, &contour, &xis, &wopts)?;
            if format == "csv" {
                let mut s = String::from("xi,winding,winding_raw,points,max_jump\n");
                for r in &reports {
                    let _ = writeln!(s, "{},{},{},{},{}", fmt_g17(r.xi), r.winding, fmt_g17(r.winding_raw), r.lambdas.len(), fmt_g17(r.max_jump));
                }
                s
            } else {
                to_json(&reports)?
            }
        }
        _ => return Err(CliError::Usage("`evans` needs exactly one of --lambda and --contour".into())),
    };
    write_atomic(&cfg.path("out")?, &text)
}

fn taylor_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let p = read_profile(cfg, "in")?;
    let problem = linearize::evans_matrix(&p)?;
    let n_cheb = cfg.usize("n_cheb")?;
    if !(33..=201).contains(&n_cheb) {
        return Err(CliError::Usage("`n_cheb` must lie in 33..=201".into()));
    }
    let opts = TaylorOptions {
        radius: cfg.opt_f64("radius")?,
        n_cheb,
        max_shrink: cfg.usize("max_shrink")?,
        winding: WindingOptions { threads: cfg.threads(), ..Default::default() },
    };
    let e = evans::origin_taylor(&problem, &opts)?;
    let report = json!({
        "expansion": e,
        "double_root_ratio": e.double_root_ratio(),
        "reality_defect": e.reality_defect(),
    });
    write_atomic(&cfg.path("out")?, &to_json(&report)?)
}

fn verdict_config(cfg: &RunConfig) -> Result<VerdictConfig, CliError> {
    Ok(VerdictConfig {
        hill_modes: positive(cfg, "hill_modes")?,
        xi_points: positive(cfg, "xi_points")?,
        threads: cfg.threads(),
        ..Default::default()
    })
}

fn verdict_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let vc = VerdictConfig {
        r0: cfg.f64("r0")?,
        hill_tol: cfg.f64("hill_tol")?,
        annulus_inner: cfg.f64("annulus_inner")?,
        annulus_outer: cfg.f64("annulus_outer")?,
        winding_xi: cfg.usize("winding_xi")?,
        alpha_imag_tol: cfg.f64("alpha_imag_tol")?,
        ..verdict_config(cfg)?
    };
    if !(vc.annulus_inner > 0.0 && vc.annulus_outer > vc.annulus_inner) {
        return Err(CliError::Usage("need 0 < annulus_inner < annulus_outer".into()));
    }
    let p = read_profile(cfg, "in")?;
    let v = evans::verdict(&p, &vc)?;
    write_atomic(&cfg.path("report")?, &to_json(&v)?)
}

fn bracket(cfg: &RunConfig, k: &str) -> Result<Option<(f64, f64)>, CliError> {
    match cfg.get(k) {
        None => Ok(None),
        Some(v) => match crate::config::parse_list(k, v)?.as_slice() {
            [lo, hi] if *lo > 0.0 && hi > lo => Ok(Some((*lo, *hi))),
            _ => Err(CliError::Usage(format!("`{k}` must be lo,hi with 0 < lo < hi"))),
        },
    }
}

fn sweep_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let mode = cfg.choice("mode", &["map", "boundary"])?;
    let alpha = cfg.list("alpha")?;
    let froude = cfg.list("F")?;
    let nu = cfg.f64("nu")?;
    let q_rule = QRule::parse(cfg.require("q_rule")?)?;
    let probe = ProbeConfig { n: positive(cfg, "n")?, newton: NewtonOptions::default(), verdict: VerdictConfig { threads: 1, ..verdict_config(cfg)? } };
    let out = cfg.path("out")?;
    if mode == "map" {
        let spec = GridSpec { alpha, froude, nu, q_rule, periods: cfg.list("X")?, probe };
        let store = cfg.path("store")?;
        let records = sweep::stability_map(&spec, &store, cfg.threads())?;
        return write_atomic(&out, &sweep::records_csv(&records));
    }
    let rel_tol = cfg.f64("rel_tol")?;
    let lower = bracket(cfg, "lower_bracket")?;
    let upper = bracket(cfg, "upper_bracket")?;
    if lower.is_none() && upper.is_none() {
        return Err(CliError::Usage("boundary mode needs lower_bracket and/or upper_bracket".into()));
    }
    let cases: Vec<(f64, f64)> = alpha.iter().flat_map(|&a| froude.iter().map(move |&f| (a, f))).collect();
    let rows = rollwave::parallel::par_map(&cases, cfg.threads(), |&(a, f)| -> rollwave::Result<BoundaryRow> {
        let find = |b: Option<(f64, f64)>, which| -> rollwave::Result<Option<f64>> {
            b.map(|(lo, hi)| sweep::boundary_bisect(a, f, nu, &q_rule, lo, hi, which, rel_tol, &probe).map(|p| p.x)).transpose()
        };
        Ok(BoundaryRow { alpha: a, froude: f, nu, q: q_rule.q(a, f), x_lower: find(lower, Boundary::Lower)?, x_upper: find(upper, Boundary::Upper)? })
    });
    let rows = rows.into_iter().collect::<rollwave::Result<Vec<_>>>()?;
    write_atomic(&out, &sweep::boundary_csv(&rows))
}

fn fit_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let which = Boundary::parse(&cfg.choice("which", &["lower", "upper"])?)?;
    let model = match cfg.choice("model", &["froude_and_outflow", "froude_only"])?.as_str() {
        "froude_only" => FitModel::FroudeOnly,
        _ => FitModel::FroudeAndOutflow,
    };
    let path = cfg.require("in")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
    let rows = sweep::parse_boundary_csv(&text)?;
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter_map(|r| match which {
            Boundary::Lower => r.x_lower,
            Boundary::Upper => r.x_upper,
        }
        .map(|x| (r.froude, r.q, x)))
        .collect();
    let fit = sweep::powerlaw_fit(&pts, model)?;
    write_atomic(&cfg.path("out")?, &to_json(&fit)?)
}

fn kdv_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.choice("format", &["json", "csv"])?;
    let (k, period) = match (cfg.opt_f64("k")?, cfg.opt_f64("X")?) {
        (Some(k), None) => (k, kdv_limit::period_of_k(k)?),
        (None, Some(x)) => (kdv_limit::k_of_period(x)?, x),
        _ => return Err(CliError::Usage("`kdv` needs exactly one of --k and --X".into())),
    };
    let base = match cfg.choice("base", &["exact", "corrected"])?.as_str() {
        "corrected" => KdvKsBase::Corrected,
        _ => KdvKsBase::Exact,
    };
    let xi = hill::xi_grid_symmetric(period, positive(cfg, "xi_points")?, Convention::Fundamental);
    let cloud = kdv_limit::kdvks_hill_spectrum(cfg.f64("delta")?, cfg.f64("a0")?, k, positive(cfg, "modes")?, &xi, base, cfg.threads())?;
    let (re, wxi, wl) = hill::max_unstable(&cloud, cfg.f64("r0")?)?;
    let summary = json!({
        "k": k,
        "X": period,
        "max_re": re,
        "witness": { "xi": wxi, "lambda": wl },
        "stable": re <= cfg.f64("tol")?,
    });
    cloud_out(cfg, &cloud, Some(summary))
}

fn limit_inf_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.choice("format", &["json", "csv"])?;
    let n = positive(cfg, "n")?;
    let modes = positive(cfg, "modes")?;
    let pts = positive(cfg, "xi_points")?;
    let r0 = cfg.f64("r0")?;
    let (problem, mut summary) = match cfg.choice("mode", &["profile", "hamiltonian"])?.as_str() {
        "hamiltonian" => {
            let orbit = profile::ham_orbit(cfg.f64("h_minus")?, n)?;
            let summary = json!({ "mode": "hamiltonian", "h_minus": orbit.h_minus, "h_plus": orbit.h_plus, "mu": orbit.mu, "X": orbit.x_mu, "c0": orbit.c0 });
            (linearize::ham_limit_operator(&orbit)?, summary)
        }
        _ => {
            let lp = profile::limit_profile_alpha_m2(cfg.f64("q0")?, cfg.f64("X0")?, cfg.f64("nu")?, None, None, n, &NewtonOptions::default())?;
            let summary = json!({ "mode": "profile", "q0": lp.q0, "nu": lp.nu, "X0": lp.period, "c0": lp.c0, "samples": lp.a.len(), "residual": lp.residual });
            (linearize::limit_matrices_alpha_m2(&lp, None)?, summary)
        }
    };
    let xi: Vec<f64> = hill::xi_grid_symmetric(problem.period, pts, Convention::Fundamental).into_iter().filter(|x| x.abs() > 1e-12).collect();
    let cloud = hill::spectrum(&problem, modes, &xi, Convention::Fundamental, cfg.threads())?;
    let (re, wxi, wl) = hill::max_unstable(&cloud, r0)?;
    summary["max_re"] = json!(re);
    summary["witness"] = json!({ "xi": wxi, "lambda": wl });
    cloud_out(cfg, &cloud, Some(summary))
}
