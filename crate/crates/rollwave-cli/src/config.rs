//! Resolution of subcommand parameters from defaults, a `key = value` file,
//! and command-line flags, in increasing priority.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Arg, ArgAction, ArgMatches, Command};
use rollwave::model::parse_kv;

use crate::CliError;

/// One recognized parameter of a subcommand.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: Option<&'static str>,
    pub help: &'static str,
}

const fn key(name: &'static str, default: Option<&'static str>, help: &'static str) -> Key {
    Key { name, default, help }
}

/// Keys every subcommand accepts.
const COMMON: &[Key] = &[
    key("threads", None, "worker threads (default: ROLLWAVE_THREADS or 1)"),
    key("manifest", None, "manifest path (default: primary output + .manifest)"),
];

#[derive(Debug)]
pub struct Subcommand {
    pub name: &'static str,
    pub about: &'static str,
    /// Key naming the primary output file.
    pub primary: &'static str,
    pub keys: &'static [Key],
}

pub const SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "profile",
        about: "Solve for a periodic roll wave from the Hopf branch or a seed profile",
        primary: "out",
        keys: &[
            key("F", None, "Froude number"),
            key("nu", None, "viscosity"),
            key("q", None, "outflow constant"),
            key("X", None, "Lagrangian period"),
            key("n", Some("256"), "collocation points"),
            key("tol", Some("1e-8"), "Newton residual tolerance"),
            key("max_iter", Some("40"), "Newton iteration cap"),
            key("seed", None, "profile JSON used as the Newton seed"),
            key("format", Some("json"), "json | csv"),
            key("out", None, "output path"),
        ],
    },
    Subcommand {
        name: "continue",
        about: "Continue a profile in (F, nu, q, X) to new parameters",
        primary: "out",
        keys: &[
            key("in", None, "starting profile JSON"),
            key("F", None, "target Froude number (default: unchanged)"),
            key("nu", None, "target viscosity (default: unchanged)"),
            key("q", None, "target outflow (default: unchanged)"),
            key("X", None, "target period (default: unchanged)"),
            key("tol", Some("1e-8"), "Newton residual tolerance"),
            key("max_iter", Some("40"), "Newton iteration cap"),
            key("initial_steps", Some("8"), "initial number of continuation steps"),
            key("min_step", Some("1e-4"), "smallest accepted step fraction"),
            key("path", None, "CSV of the intermediate solutions"),
            key("out", None, "final profile JSON"),
        ],
    },
    Subcommand {
        name: "spectrum",
        about: "Bloch spectrum of a profile by Hill's method",
        primary: "out",
        keys: &[
            key("in", None, "profile JSON"),
            key("modes", Some("40"), "Fourier modes N (2N+1 per component)"),
            key("xi_points", Some("21"), "Floquet parameters across the cell"),
            key("convention", Some("fundamental"), "fundamental | doubled"),
            key("format", Some("csv"), "csv | json"),
            key("out", None, "output path"),
        ],
    },
    Subcommand {
        name: "evans",
        about: "Evans function values, root polishing, or contour winding numbers",
        primary: "out",
        keys: &[
            key("in", None, "profile JSON"),
            key("xi", Some("0"), "comma-separated Floquet parameters"),
            key("lambda", None, "spectral parameter, e.g. 0.1-0.2i"),
            key("polish", Some("false"), "polish lambda to a nearby root"),
            key("contour", None, "semicircle:R=.. | circle:c=..,r=.. | annulus:r=..,R=.."),
            key("rel_jump", Some("0.2"), "relative jump bound between contour points"),
            key("initial_points", Some("32"), "initial contour points"),
            key("max_points", Some("20000"), "contour point cap"),
            key("rtol", Some("1e-11"), "integrator relative tolerance"),
            key("atol", Some("1e-13"), "integrator absolute tolerance"),
            key("format", Some("json"), "json | csv"),
            key("out", None, "output path"),
        ],
    },
    Subcommand {
        name: "taylor",
        about: "Expansion of the two critical eigenvalues about the origin",
        primary: "out",
        keys: &[
            key("in", None, "profile JSON"),
            key("radius", None, "contour radius (default: 1e-2 * 2pi/X)"),
            key("n_cheb", Some("65"), "Clenshaw-Curtis nodes"),
            key("max_shrink", Some("4"), "radius halvings allowed"),
            key("out", None, "report JSON"),
        ],
    },
    Subcommand {
        name: "verdict",
        about: "Full stability classification of a profile",
        primary: "report",
        keys: &[
            key("in", None, "profile JSON"),
            key("hill_modes", Some("40"), "Hill Fourier modes"),
            key("xi_points", Some("21"), "Hill Floquet parameters"),
            key("r0", Some("1e-3"), "radius excluded around the origin"),
            key("hill_tol", Some("1e-8"), "real part counted as unstable"),
            key("annulus_inner", Some("1e-2"), "inner annulus radius"),
            key("annulus_outer", Some("2"), "outer annulus radius"),
            key("winding_xi", Some("3"), "Floquet parameters for the far winding check"),
            key("alpha_imag_tol", Some("1e-6"), "tolerance on Re of the linear coefficients"),
            key("report", None, "report JSON"),
        ],
    },
    Subcommand {
        name: "sweep",
        about: "Resumable stability map or boundary bisection",
        primary: "out",
        keys: &[
            key("mode", Some("map"), "map | boundary"),
            key("alpha", Some("-2"), "comma-separated scaling exponents"),
            key("F", None, "comma-separated Froude numbers"),
            key("nu", Some("0.1"), "viscosity"),
            key("q_rule", None, "scaled:q0=.. | power:coef=..,exponent=.. | fixed:q=.."),
            key("X", None, "periods: a,b,c or lo:hi:count"),
            key("store", None, "JSON-lines result store (map mode)"),
            key("lower_bracket", None, "lo,hi bracket of the lower boundary"),
            key("upper_bracket", None, "lo,hi bracket of the upper boundary"),
            key("rel_tol", Some("1e-2"), "relative bracket width"),
            key("n", Some("128"), "collocation points per probe"),
            key("hill_modes", Some("40"), "Hill Fourier modes per probe"),
            key("xi_points", Some("21"), "Hill Floquet parameters per probe"),
            key("out", None, "records CSV (map) or boundary CSV (boundary)"),
        ],
    },
    Subcommand {
        name: "fit",
        about: "Power-law fit of a stability boundary",
        primary: "out",
        keys: &[
            key("in", None, "boundary CSV"),
            key("which", Some("lower"), "lower | upper"),
            key("model", Some("froude_and_outflow"), "froude_and_outflow | froude_only"),
            key("out", None, "fit JSON"),
        ],
    },
    Subcommand {
        name: "kdv",
        about: "KdV-KS limit: band geometry and weakly unstable spectra",
        primary: "out",
        keys: &[
            key("X", None, "period (alternative to k)"),
            key("k", None, "elliptic modulus (alternative to X)"),
            key("delta", Some("0.05"), "dissipation strength"),
            key("a0", Some("0"), "mean offset"),
            key("base", Some("exact"), "exact | corrected"),
            key("modes", Some("60"), "Fourier modes"),
            key("xi_points", Some("41"), "Floquet parameters"),
            key("r0", Some("1e-4"), "radius excluded around the origin"),
            key("tol", Some("1e-6"), "real part counted as unstable"),
            key("format", Some("json"), "json | csv"),
            key("out", None, "output path"),
        ],
    },
    Subcommand {
        name: "limit-inf",
        about: "Large-Froude limit spectra (alpha = -2 profile or Hamiltonian orbit)",
        primary: "out",
        keys: &[
            key("mode", Some("profile"), "profile | hamiltonian"),
            key("q0", Some("0.4"), "rescaled outflow"),
            key("nu", Some("0.1"), "viscosity"),
            key("X0", Some("0.303"), "rescaled period"),
            key("h_minus", Some("0.5"), "lower turning point of the orbit"),
            key("n", Some("256"), "samples"),
            key("modes", Some("40"), "Fourier modes"),
            key("xi_points", Some("21"), "Floquet parameters"),
            key("r0", Some("1e-3"), "radius excluded around the origin"),
            key("format", Some("json"), "json | csv"),
            key("out", None, "output path"),
        ],
    },
];

pub fn find(name: &str) -> Option<&'static Subcommand> {
    SUBCOMMANDS.iter().find(|s| s.name == name)
}

fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

fn normalize(key: &str) -> String {
    key.trim().replace('-', "_")
}

pub fn command() -> Command {
    let config_arg = || Arg::new("config").long("config").value_name("FILE").help("key = value file; flags take precedence");
    let mut cmd = Command::new("rollwave")
        .about("Periodic roll waves of the viscous St. Venant equations and their stability")
        .version(env!("CARGO_PKG_VERSION"))
        .arg(config_arg())
        .after_help("With only --config, the subcommand is read from the file's `command` entry.");
    for sub in SUBCOMMANDS {
        let mut c = Command::new(sub.name).about(sub.about).arg(config_arg());
        for k in sub.keys.iter().chain(COMMON) {
            let help = match k.default {
                Some(d) => format!("{} [default: {d}]", k.help),
                None => k.help.to_string(),
            };
            c = c.arg(Arg::new(k.name).long(flag_name(k.name)).value_name("VALUE").action(ArgAction::Set).allow_hyphen_values(true).help(help));
        }
        cmd = cmd.subcommand(c);
    }
    cmd
}

/// Fully resolved parameters of one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub sub: &'static Subcommand,
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults, then the config file, then flags.
    pub fn resolve(sub: &'static Subcommand, file: Option<&str>, flags: Option<&ArgMatches>, env_threads: Option<String>) -> Result<Self, CliError> {
        let known = |k: &str| sub.keys.iter().chain(COMMON).any(|kk| kk.name == k);
        let mut values = BTreeMap::new();
        for k in sub.keys {
            if let Some(d) = k.default {
                values.insert(k.name.to_string(), d.to_string());
            }
        }
        if let Some(t) = env_threads {
            values.insert("threads".into(), t);
        }
        if let Some(text) = file {
            for (k, v) in parse_kv(text)? {
                let k = normalize(&k);
                if k == "command" {
                    if v != sub.name {
                        return Err(CliError::Usage(format!("config file is for `{v}`, not `{}`", sub.name)));
                    }
                    continue;
                }
                if !known(&k) {
                    return Err(CliError::Usage(format!("unknown key `{k}` for `{}`", sub.name)));
                }
                values.insert(k, v);
            }
        }
        if let Some(m) = flags {
            for k in sub.keys.iter().chain(COMMON) {
                if let Some(v) = m.get_one::<String>(k.name) {
                    values.insert(k.name.to_string(), v.clone());
                }
            }
        }
        let mut cfg = RunConfig { sub, values };
        cfg.require(sub.primary)?;
        let threads = cfg.usize_or("threads", 1)?;
        if threads == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        cfg.values.insert("threads".into(), threads.to_string());
        let manifest = match cfg.values.get("manifest") {
            Some(m) => m.clone(),
            None => format!("{}.manifest", cfg.values[sub.primary]),
        };
        cfg.values.insert("manifest".into(), manifest);
        Ok(cfg)
    }

    /// `key = value` echo of the configuration, replayable with `--config`.
    pub fn manifest(&self) -> String {
        let mut s = format!("command = {}\n", self.sub.name);
        for k in self.sub.keys.iter().chain(COMMON) {
            if let Some(v) = self.values.get(k.name) {
                s.push_str(&format!("{} = {v}\n", k.name));
            }
        }
        s
    }

    pub fn manifest_path(&self) -> PathBuf {
        PathBuf::from(&self.values["manifest"])
    }

    pub fn threads(&self) -> usize {
        self.values["threads"].parse().expect("validated at resolution")
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        debug_assert!(self.sub.keys.iter().chain(COMMON).any(|kk| kk.name == k), "undeclared key {k}");
        self.values.get(k).map(String::as_str)
    }

    pub fn require(&self, k: &str) -> Result<&str, CliError> {
        self.get(k).ok_or_else(|| CliError::Usage(format!("`{}` requires --{}", self.sub.name, flag_name(k))))
    }

    pub fn path(&self, k: &str) -> Result<PathBuf, CliError> {
        self.require(k).map(PathBuf::from)
    }

    pub fn f64(&self, k: &str) -> Result<f64, CliError> {
        parse_f64(k, self.require(k)?)
    }

    pub fn opt_f64(&self, k: &str) -> Result<Option<f64>, CliError> {
        self.get(k).map(|v| parse_f64(k, v)).transpose()
    }

    pub fn usize(&self, k: &str) -> Result<usize, CliError> {
        let v = self.require(k)?;
        v.parse().map_err(|_| CliError::Usage(format!("`{k}` must be a non-negative integer, got `{v}`")))
    }

    fn usize_or(&self, k: &str, d: usize) -> Result<usize, CliError> {
        match self.get(k) {
            Some(_) => self.usize(k),
            None => Ok(d),
        }
    }

    pub fn bool(&self, k: &str) -> Result<bool, CliError> {
        match self.require(k)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(CliError::Usage(format!("`{k}` must be true or false, got `{v}`"))),
        }
    }

    /// One of `allowed`.
    pub fn choice(&self, k: &str, allowed: &[&str]) -> Result<String, CliError> {
        let v = self.require(k)?;
        if allowed.contains(&v) {
            Ok(v.to_string())
        } else {
            Err(CliError::Usage(format!("`{k}` must be one of {}, got `{v}`", allowed.join(" | "))))
        }
    }

    /// Comma-separated list, or `lo:hi:count` for an evenly spaced range.
    pub fn list(&self, k: &str) -> Result<Vec<f64>, CliError> {
        parse_list(k, self.require(k)?)
    }
}

fn parse_f64(k: &str, v: &str) -> Result<f64, CliError> {
    match v.trim().parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(CliError::Usage(format!("`{k}` must be a finite number, got `{v}`"))),
    }
}

pub fn parse_list(k: &str, v: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = v.split(':').collect();
    if parts.len() == 3 {
        let lo = parse_f64(k, parts[0])?;
        let hi = parse_f64(k, parts[1])?;
        let n: usize = parts[2].trim().parse().map_err(|_| CliError::Usage(format!("`{k}`: bad count in `{v}`")))?;
        return match n {
            0 => Err(CliError::Usage(format!("`{k}`: empty range `{v}`"))),
            1 => Ok(vec![lo]),
            _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
        };
    }
    if parts.len() != 1 {
        return Err(CliError::Usage(format!("`{k}`: expected a,b,c or lo:hi:count, got `{v}`")));
    }
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| parse_f64(k, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn resolve(file: Option<&str>, argv: &[&str]) -> Result<RunConfig, CliError> {
        let m = command().try_get_matches_from(argv).map_err(|e| CliError::Usage(e.to_string()))?;
        let (name, sm) = m.subcommand().unwrap();
        RunConfig::resolve(find(name).unwrap(), file, Some(sm), None)
    }

    #[test]
    fn flags_override_file() {
        let c = resolve(Some("F = 3\nX = 10\n"), &["rollwave", "profile", "--F", "4", "--out", "p.json"]).unwrap();
        assert_eq!(c.f64("F").unwrap(), 4.0);
        assert_eq!(c.f64("X").unwrap(), 10.0);
        assert_eq!(c.usize("n").unwrap(), 256);
        assert_eq!(c.manifest_path(), PathBuf::from("p.json.manifest"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(resolve(Some("Froude = 3\n"), &["rollwave", "profile", "--out", "p"]).is_err());
        assert!(resolve(None, &["rollwave", "profile", "--Froude", "3", "--out", "p"]).is_err());
        assert!(resolve(Some("command = spectrum\n"), &["rollwave", "profile", "--out", "p"]).is_err());
    }

    #[test]
    fn hyphenated_keys_map_to_underscores() {
        let c = resolve(Some("xi-points = 5\n"), &["rollwave", "spectrum", "--modes", "7", "--out", "s.csv"]).unwrap();
        assert_eq!(c.usize("xi_points").unwrap(), 5);
        let c = resolve(None, &["rollwave", "spectrum", "--xi-points", "9", "--out", "s.csv"]).unwrap();
        assert_eq!(c.usize("xi_points").unwrap(), 9);
    }

    #[test]
    fn manifest_replays_to_the_same_configuration() {
        let c = resolve(None, &["rollwave", "verdict", "--in", "p.json", "--report", "v.json", "--r0", "2e-3"]).unwrap();
        let text = c.manifest();
        assert!(text.starts_with("command = verdict\n"));
        let again = RunConfig::resolve(find("verdict").unwrap(), Some(&text), None, None).unwrap();
        assert_eq!(again.manifest(), text);
    }

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("X", "1,2.5,4").unwrap(), vec![1.0, 2.5, 4.0]);
        assert_eq!(parse_list("X", "8:10:3").unwrap(), vec![8.0, 9.0, 10.0]);
        assert!(parse_list("X", "8:10").is_err());
        assert!(parse_list("X", "a,b").is_err());
    }

    #[test]
    fn missing_primary_output_is_an_error() {
        assert!(resolve(None, &["rollwave", "spectrum", "--in", "p.json"]).is_err());
    }
}
