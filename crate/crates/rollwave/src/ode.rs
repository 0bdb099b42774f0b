//! Dormand–Prince 5(4) with step-size control, for real or complex states.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Element type of an ODE state vector.
pub trait OdeValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
}

impl OdeValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
}

impl OdeValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DopriOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for DopriOptions {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h0: None, h_min: 1e-14, max_steps: 1_000_000 }
    }
}

pub(crate) const C2: f64 = 1.0 / 5.0;
pub(crate) const C3: f64 = 3.0 / 10.0;
pub(crate) const C4: f64 = 4.0 / 5.0;
pub(crate) const C5: f64 = 8.0 / 9.0;
pub(crate) const A21: f64 = 1.0 / 5.0;
pub(crate) const A31: f64 = 3.0 / 40.0;
pub(crate) const A32: f64 = 9.0 / 40.0;
pub(crate) const A41: f64 = 44.0 / 45.0;
pub(crate) const A42: f64 = -56.0 / 15.0;
pub(crate) const A43: f64 = 32.0 / 9.0;
pub(crate) const A51: f64 = 19372.0 / 6561.0;
pub(crate) const A52: f64 = -25360.0 / 2187.0;
pub(crate) const A53: f64 = 64448.0 / 6561.0;
pub(crate) const A54: f64 = -212.0 / 729.0;
pub(crate) const A61: f64 = 9017.0 / 3168.0;
pub(crate) const A62: f64 = -355.0 / 33.0;
pub(crate) const A63: f64 = 46732.0 / 5247.0;
pub(crate) const A64: f64 = 49.0 / 176.0;
pub(crate) const A65: f64 = -5103.0 / 18656.0;
pub(crate) const B1: f64 = 35.0 / 384.0;
pub(crate) const B3: f64 = 500.0 / 1113.0;
pub(crate) const B4: f64 = 125.0 / 192.0;
pub(crate) const B5: f64 = -2187.0 / 6784.0;
pub(crate) const B6: f64 = 11.0 / 84.0;
pub(crate) const E1: f64 = 71.0 / 57600.0;
pub(crate) const E3: f64 = -71.0 / 16695.0;
pub(crate) const E4: f64 = 71.0 / 1920.0;
pub(crate) const E5: f64 = -17253.0 / 339200.0;
pub(crate) const E6: f64 = 22.0 / 525.0;
pub(crate) const E7: f64 = -1.0 / 40.0;

fn combo<T: OdeValue>(y: &[T], h: f64, ks: &[(&[T], f64)], out: &mut [T]) {
    for i in 0..y.len() {
        let mut acc = T::zero();
        for (k, a) in ks {
            acc = acc + k[i] * *a;
        }
        out[i] = y[i] + acc * h;
    }
}

/// Integrates y' = f(x, y) from `xs[0]` through every point of the increasing
/// sequence `xs`, returning the state at each.
pub fn dopri_integrate<T, F>(f: F, y0: &[T], xs: &[f64], opts: &DopriOptions) -> Result<Vec<Vec<T>>>
where
    T: OdeValue,
    F: FnMut(f64, &[T], &mut [T]),
{
    integrate(f, y0, xs, opts, None)
}

/// Like [`dopri_integrate`], also returning every accepted step boundary.
pub fn dopri_mesh<T, F>(f: F, y0: &[T], xs: &[f64], opts: &DopriOptions) -> Result<(Vec<Vec<T>>, Vec<f64>)>
where
    T: OdeValue,
    F: FnMut(f64, &[T], &mut [T]),
{
    let mut mesh = Vec::new();
    let out = integrate(f, y0, xs, opts, Some(&mut mesh))?;
    Ok((out, mesh))
}

fn integrate<T, F>(mut f: F, y0: &[T], xs: &[f64], opts: &DopriOptions, mut mesh: Option<&mut Vec<f64>>) -> Result<Vec<Vec<T>>>
where
    T: OdeValue,
    F: FnMut(f64, &[T], &mut [T]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(xs.len());
    if xs.is_empty() {
        return Ok(out);
    }
    let mut y = y0.to_vec();
    let mut x = xs[0];
    if let Some(m) = mesh.as_deref_mut() {
        m.push(x);
    }
    out.push(y.clone());
    let span = xs[xs.len() - 1] - xs[0];
    let mut h = opts.h0.unwrap_or((span.abs() / 100.0).max(1e-6));
    let mut k: Vec<Vec<T>> = vec![vec![T::zero(); n]; 7];
    let mut tmp = vec![T::zero(); n];
    let mut ynew = vec![T::zero(); n];
    let mut steps = 0usize;
    f(x, &y, &mut k[0]);
    for &target in &xs[1..] {
        while x < target {
            let last = target - x <= h * (1.0 + 1e-12);
            let hs = if last { target - x } else { h };
            let (k0, rest) = k.split_at_mut(1);
            let k0 = &k0[0];
            combo(&y, hs, &[(k0, A21)], &mut tmp);
            f(x + C2 * hs, &tmp, &mut rest[0]);
            combo(&y, hs, &[(k0, A31), (&rest[0], A32)], &mut tmp);
            f(x + C3 * hs, &tmp, &mut rest[1]);
            combo(&y, hs, &[(k0, A41), (&rest[0], A42), (&rest[1], A43)], &mut tmp);
            f(x + C4 * hs, &tmp, &mut rest[2]);
            combo(&y, hs, &[(k0, A51), (&rest[0], A52), (&rest[1], A53), (&rest[2], A54)], &mut tmp);
            f(x + C5 * hs, &tmp, &mut rest[3]);
            combo(&y, hs, &[(k0, A61), (&rest[0], A62), (&rest[1], A63), (&rest[2], A64), (&rest[3], A65)], &mut tmp);
            f(x + hs, &tmp, &mut rest[4]);
            combo(&y, hs, &[(k0, B1), (&rest[1], B3), (&rest[2], B4), (&rest[3], B5), (&rest[4], B6)], &mut ynew);
            f(x + hs, &ynew, &mut rest[5]);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = (k0[i] * E1 + rest[1][i] * E3 + rest[2][i] * E4 + rest[3][i] * E5 + rest[4][i] * E6 + rest[5][i] * E7) * hs;
                let sc = opts.atol + opts.rtol * y[i].magnitude().max(ynew[i].magnitude());
                err = err.max(e.magnitude() / sc);
            }
            steps += 1;
            if steps > opts.max_steps {
                return Err(Error::Integration(format!("step budget exhausted at x = {x}")));
            }
            if !err.is_finite() {
                h *= 0.1;
                if h < opts.h_min {
                    return Err(Error::Integration(format!("non-finite state at x = {x}")));
                }
                continue;
            }
            if err <= 1.0 {
                x = if last { target } else { x + hs };
                if let Some(m) = mesh.as_deref_mut() {
                    m.push(x);
                }
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && last {
                h = h.max(hs * fac);
            } else {
                h = hs * fac;
            }
            if h < opts.h_min {
                return Err(Error::Integration(format!("step size underflow at x = {x}")));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let xs: Vec<f64> = (0..=10).map(|i| i as f64 * 0.7).collect();
        let ys = dopri_integrate(
            |_x, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            &[1.0, 0.0],
            &xs,
            &DopriOptions::default(),
        )
        .unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            assert!((y[0] - x.cos()).abs() < 1e-9);
            assert!((y[1] + x.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_exponential() {
        let w = Complex64::new(-0.3, 2.0);
        let ys = dopri_integrate(
            |_x, y: &[Complex64], dy: &mut [Complex64]| dy[0] = w * y[0],
            &[Complex64::new(1.0, 0.0)],
            &[0.0, 3.0],
            &DopriOptions::default(),
        )
        .unwrap();
        assert!((ys[1][0] - (w * 3.0).exp()).norm() < 1e-9);
    }
}
