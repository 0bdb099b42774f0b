//! Wave parameters, the large-Froude scaling family and cheap pointwise checks.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::WaveProfile;
use crate::scalar::Real;

/// Parameters of a periodic roll wave in Lagrangian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams<T = f64> {
    #[serde(rename = "F")]
    pub froude: T,
    pub nu: T,
    pub q: T,
    pub c: T,
    #[serde(rename = "X")]
    pub period: T,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<T>,
}

impl<T: Real> PhysicalParams<T> {
    pub fn new(froude: T, nu: T, q: T, c: T, period: T) -> Result<Self> {
        let p = Self { froude, nu, q, c, period, tau0: None };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau0(mut self, tau0: T) -> Result<Self> {
        self.tau0 = Some(tau0);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: T, name: &str| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos(self.froude, "F")?;
        pos(self.nu, "nu")?;
        pos(self.period, "X")?;
        if let Some(t) = self.tau0 {
            pos(t, "tau0")?;
        }
        if !self.q.is_finite() || !self.c.is_finite() {
            return Err(Error::domain("q and c must be finite"));
        }
        Ok(())
    }

    /// Roll waves exist only above the critical Froude number 2.
    pub fn roll_wave_regime(&self) -> bool {
        self.froude > T::lit(2.0)
    }

    /// Equilibrium velocity u₀ = τ₀^{-1/2}, when a reference state is attached.
    pub fn u0(&self) -> Option<T> {
        self.tau0.map(|t| t.sqrt().recip())
    }
}

/// Exponent family τ = aF^α, u = bF^{-α/2}, c = c₀F^{-1-3α/2}, X = X₀F^{-1/2-5α/4},
/// q = q₀F^{-α/2}, k = k₀F^{1/2+5α/4}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFamily<T = f64> {
    pub alpha: T,
    pub q0: T,
    pub c0: T,
    pub k0: T,
    #[serde(rename = "X0")]
    pub x0: T,
}

impl<T: Real> ScalingFamily<T> {
    pub fn new(alpha: T, q0: T, c0: T, k0: T, x0: T) -> Result<Self> {
        if !(alpha >= T::lit(-2.0)) {
            return Err(Error::domain(format!("alpha must be >= -2, got {alpha}")));
        }
        Ok(Self { alpha, q0, c0, k0, x0 })
    }

    pub fn q_exponent(&self) -> T {
        -self.alpha / T::lit(2.0)
    }

    pub fn c_exponent(&self) -> T {
        -T::one() - T::lit(1.5) * self.alpha
    }

    pub fn x_exponent(&self) -> T {
        -T::lit(0.5) - T::lit(1.25) * self.alpha
    }

    pub fn tau_exponent(&self) -> T {
        self.alpha
    }

    pub fn u_exponent(&self) -> T {
        -self.alpha / T::lit(2.0)
    }
}

fn check_scaling<T: Real>(alpha: T, froude: T) -> Result<()> {
    if !(froude > T::zero()) || !froude.is_finite() {
        return Err(Error::domain(format!("F must be positive, got {froude}")));
    }
    if !(alpha >= T::lit(-2.0)) {
        return Err(Error::domain(format!("alpha must be >= -2, got {alpha}")));
    }
    Ok(())
}

/// Maps rescaled constants to physical (q, c, X) at Froude number `froude`.
pub fn scale_to_physical<T: Real>(fam: &ScalingFamily<T>, froude: T, nu: T) -> Result<PhysicalParams<T>> {
    check_scaling(fam.alpha, froude)?;
    let q = fam.q0 * froude.powf(fam.q_exponent());
    let c = fam.c0 * froude.powf(fam.c_exponent());
    let x = fam.x0 * froude.powf(fam.x_exponent());
    PhysicalParams::new(froude, nu, q, c, x)
}

/// Inverse of [`scale_to_physical`]; `k0` is not encoded in the physical
/// parameters and is carried through unchanged.
pub fn physical_to_scaled<T: Real>(p: &PhysicalParams<T>, alpha: T, k0: T) -> Result<ScalingFamily<T>> {
    check_scaling(alpha, p.froude)?;
    let fam = ScalingFamily { alpha, q0: T::zero(), c0: T::zero(), k0, x0: T::zero() };
    Ok(ScalingFamily {
        q0: p.q * p.froude.powf(-fam.q_exponent()),
        c0: p.c * p.froude.powf(-fam.c_exponent()),
        x0: p.period * p.froude.powf(-fam.x_exponent()),
        ..fam
    })
}

/// Minimum of F^{-2} − 2ν u_x with u = q − cτ, taken over the trigonometric
/// interpolant of τ' rather than the grid nodes.
pub fn slope_margin(profile: &WaveProfile) -> f64 {
    let p = &profile.params;
    let f2 = 1.0 / (p.froude * p.froude);
    let margin = |dt: f64| f2 + 2.0 * p.nu * p.c * dt;
    let n = profile.dtau.len();
    if n < 4 {
        return profile.dtau.iter().map(|&dt| margin(dt)).fold(f64::INFINITY, f64::min);
    }
    let m = (16 * n).max(1024);
    let dense = crate::fourier::resample(&profile.dtau, m);
    let (imin, _) = dense
        .iter()
        .map(|&dt| margin(dt))
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let series = crate::fourier::RealSeries::from_samples(&profile.dtau, p.period, 0.0);
    let f = |x: f64| margin(series.eval(x));
    let h = p.period / m as f64;
    let (mut a, mut b) = ((imin as f64 - 1.0) * h, (imin as f64 + 1.0) * h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (b - g * (b - a), a + g * (b - a));
    let (mut f1, mut f2v) = (f(x1), f(x2));
    for _ in 0..60 {
        if f1 < f2v {
            b = x2;
            x2 = x1;
            f2v = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2v;
            x2 = a + g * (b - a);
            f2v = f(x2);
        }
    }
    f1.min(f2v).min(margin(dense[imin]))
}

/// Eulerian period Ξ = ∫₀^X τ dx (exact for trigonometric interpolants).
pub fn eulerian_period(profile: &WaveProfile) -> f64 {
    let n = profile.tau.len() as f64;
    profile.params.period * profile.tau.iter().sum::<f64>() / n
}

/// Formats like C's `%.17g`.
pub fn fmt_g17(x: f64) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.16e}", x);
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", strip(mant), sign, exp.abs())
    } else {
        let decimals = (16 - exp).max(0) as usize;
        strip(&format!("{:.*}", decimals, x))
    }
}

/// Flat `key = value` block for parameters and an optional scaling family.
pub fn params_to_kv(p: Option<&PhysicalParams>, fam: Option<&ScalingFamily>) -> String {
    let mut out = String::new();
    let mut put = |k: &str, v: f64| {
        let _ = writeln!(out, "{k} = {}", fmt_g17(v));
    };
    if let Some(p) = p {
        put("F", p.froude);
        put("nu", p.nu);
        put("q", p.q);
        put("c", p.c);
        put("X", p.period);
        if let Some(t) = p.tau0 {
            put("tau0", t);
        }
    }
    if let Some(f) = fam {
        put("alpha", f.alpha);
        put("q0", f.q0);
        put("c0", f.c0);
        put("k0", f.k0);
        put("X0", f.x0);
    }
    out
}

/// Parses a `key = value` block. Blank lines and `#` comments are skipped;
/// duplicate keys are rejected.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `key = value`", lineno + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", lineno + 1)));
        }
        if out.iter().any(|(kk, _)| *kk == k) {
            return Err(Error::Parse(format!("line {}: duplicate key `{k}`", lineno + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}

const PARAM_KEYS: [&str; 11] = ["F", "nu", "q", "c", "X", "tau0", "alpha", "q0", "c0", "k0", "X0"];

/// Reads back the block written by [`params_to_kv`].
pub fn params_from_kv(text: &str) -> Result<(Option<PhysicalParams>, Option<ScalingFamily>)> {
    let kv = parse_kv(text)?;
    let mut vals = std::collections::HashMap::new();
    for (k, v) in kv {
        if !PARAM_KEYS.contains(&k.as_str()) {
            return Err(Error::Parse(format!("unknown key `{k}`")));
        }
        let x: f64 = v.parse().map_err(|_| Error::Parse(format!("bad number for `{k}`: {v}")))?;
        vals.insert(k, x);
    }
    let get = |k: &str| vals.get(k).copied();
    let phys = match (get("F"), get("nu"), get("q"), get("c"), get("X")) {
        (Some(f), Some(nu), Some(q), Some(c), Some(x)) => {
            let mut p = PhysicalParams::new(f, nu, q, c, x)?;
            if let Some(t) = get("tau0") {
                p = p.with_tau0(t)?;
            }
            Some(p)
        }
        (None, None, None, None, None) => None,
        _ => return Err(Error::Parse("incomplete physical parameter set".into())),
    };
    let fam = match (get("alpha"), get("q0"), get("c0"), get("k0"), get("X0")) {
        (Some(a), Some(q0), Some(c0), Some(k0), Some(x0)) => Some(ScalingFamily::new(a, q0, c0, k0, x0)?),
        (None, None, None, None, None) => None,
        _ => return Err(Error::Parse("incomplete scaling family".into())),
    };
    Ok((phys, fam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_zero_holds_outflow() {
        let fam = ScalingFamily::<f64>::new(0.0, 1.3, 0.7, 1.0, 2.0).unwrap();
        for f in [2.5, 7.0, 40.0] {
            let p = scale_to_physical(&fam, f, 0.1).unwrap();
            assert!((p.q - 1.3).abs() < 1e-15);
        }
    }

    #[test]
    fn alpha_m2_examples() {
        let fam = ScalingFamily::<f64>::new(-2.0, 0.4, 0.0582, 1.0, 0.303).unwrap();
        let p = scale_to_physical(&fam, 10.0, 0.1).unwrap();
        assert!((p.q - 4.0).abs() < 1e-14);
        let back = physical_to_scaled(&p, -2.0, 1.0).unwrap();
        assert!((back.q0 - 0.4).abs() < 1e-15);
        let p38 = scale_to_physical(&fam, 38.0, 0.1).unwrap();
        assert!((p38.period - 437.6).abs() / 437.6 < 5e-3);
        assert!((p38.period - 0.303 * 38.0 * 38.0).abs() < 1e-10);
    }

    #[test]
    fn scaling_domain_errors() {
        assert!(ScalingFamily::new(-2.5, 1.0, 1.0, 1.0, 1.0).is_err());
        let fam = ScalingFamily::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        assert!(scale_to_physical(&fam, 0.0, 0.1).is_err());
        assert!(scale_to_physical(&fam, -1.0, 0.1).is_err());
    }

    #[test]
    fn generic_f32_scaling() {
        let fam = ScalingFamily::<f32>::new(-2.0, 0.4, 0.05, 1.0, 0.3).unwrap();
        let p = scale_to_physical(&fam, 10.0f32, 0.1).unwrap();
        assert!((p.q - 4.0).abs() < 1e-5);
    }

    #[test]
    fn g17_matches_c_printf() {
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(17.15), "17.149999999999999");
        assert_eq!(fmt_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(123456.0), "123456");
    }

    #[test]
    fn kv_round_trip_and_errors() {
        let p = PhysicalParams::new(6f64.sqrt(), 0.1, 1.5745, 2.2, 17.15).unwrap().with_tau0(0.8).unwrap();
        let fam = ScalingFamily::new(-2.0, 0.4, 0.06, 1.0, 0.303).unwrap();
        let text = params_to_kv(Some(&p), Some(&fam));
        let (p2, f2) = params_from_kv(&text).unwrap();
        assert_eq!(p2.unwrap(), p);
        assert_eq!(f2.unwrap(), fam);
        assert!(params_from_kv("F = 2\nbogus = 1\n").is_err());
        assert!(params_from_kv("F = 2\nF = 3\n").is_err());
    }

    proptest! {
        #[test]
        fn scaling_round_trip(alpha in -2.0f64..2.0, lf in (2f64).ln()..(1e6f64).ln(),
                              q0 in 0.1f64..3.0, c0 in 0.01f64..3.0, x0 in 0.05f64..50.0) {
            let fam = ScalingFamily::new(alpha, q0, c0, 1.0, x0).unwrap();
            let f = lf.exp();
            let p = scale_to_physical(&fam, f, 0.1).unwrap();
            let back = physical_to_scaled(&p, alpha, 1.0).unwrap();
            prop_assert!(((back.q0 - q0) / q0).abs() <= 1e-14);
            prop_assert!(((back.c0 - c0) / c0).abs() <= 1e-14);
            prop_assert!(((back.x0 - x0) / x0).abs() <= 1e-14);
        }

        #[test]
        fn g17_round_trips(x in proptest::num::f64::NORMAL) {
            let s = fmt_g17(x);
            prop_assert_eq!(s.parse::<f64>().unwrap(), x);
        }
    }
}
