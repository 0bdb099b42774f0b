//! Complete elliptic integrals and the Jacobi `cn` function by AGM iteration.

use crate::error::{Error, Result};
use crate::scalar::Real;

fn check_modulus<T: Real>(k: T) -> Result<()> {
    if !(k >= T::zero() && k < T::one()) {
        return Err(Error::domain(format!("elliptic modulus must lie in [0, 1), got {k}")));
    }
    Ok(())
}

/// Complementary modulus sqrt(1 − k²) without cancellation near k = 1.
pub fn complementary<T: Real>(k: T) -> T {
    ((T::one() - k) * (T::one() + k)).sqrt()
}

/// AGM sequence (a_n, c_n) starting from a₀ = 1, b₀ = k', c₀ = k.
fn agm_sequence<T: Real>(k: T) -> (Vec<T>, Vec<T>) {
    let two = T::lit(2.0);
    let mut a = T::one();
    let mut b = complementary(k);
    let mut c = k;
    let mut av = vec![a];
    let mut cv = vec![c];
    for _ in 0..64 {
        if c.abs() <= T::epsilon() * a {
            break;
        }
        let an = (a + b) / two;
        let bn = (a * b).sqrt();
        c = (a - b) / two;
        a = an;
        b = bn;
        av.push(a);
        cv.push(c);
    }
    (av, cv)
}

/// Complete elliptic integral of the first kind K(k).
pub fn elliptic_k<T: Real>(k: T) -> Result<T> {
    check_modulus(k)?;
    let (a, _) = agm_sequence(k);
    Ok(T::FRAC_PI_2() / *a.last().expect("nonempty"))
}

/// Complete elliptic integral of the second kind E(k).
pub fn elliptic_e<T: Real>(k: T) -> Result<T> {
    check_modulus(k)?;
    let (a, c) = agm_sequence(k);
    let kk = T::FRAC_PI_2() / *a.last().expect("nonempty");
    let mut s = T::zero();
    let mut w = T::lit(0.5);
    for ci in &c {
        s = s + w * *ci * *ci;
        w = w * T::lit(2.0);
    }
    Ok(kk * (T::one() - s))
}

/// Both complete integrals from one AGM run.
pub fn elliptic_ke<T: Real>(k: T) -> Result<(T, T)> {
    Ok((elliptic_k(k)?, elliptic_e(k)?))
}

/// Jacobi amplitude am(x, k).
pub fn jacobi_am<T: Real>(x: T, k: T) -> Result<T> {
    check_modulus(k)?;
    let (a, c) = agm_sequence(k);
    let n = a.len() - 1;
    let mut phi = T::lit(2f64.powi(n as i32)) * a[n] * x;
    for i in (1..=n).rev() {
        phi = (phi + (c[i] / a[i] * phi.sin()).asin()) / T::lit(2.0);
    }
    Ok(phi)
}

/// Jacobi elliptic function cn(x, k), reduced to one period before evaluation.
pub fn jacobi_cn<T: Real>(x: T, k: T) -> Result<T> {
    let kk = elliptic_k(k)?;
    let p = T::lit(4.0) * kk;
    let mut r = x % p;
    if r < T::zero() {
        r = r + p;
    }
    if r > T::lit(2.0) * kk {
        r = r - p;
    }
    Ok(jacobi_am(r, k)?.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Independent oracle: K and E by adaptive Gauss-Legendre-free midpoint
    /// refinement of the defining integrals with the substitution t = sin θ.
    fn quad_ke(k: f64) -> (f64, f64) {
        let n = 200_000;
        let h = PI / 2.0 / n as f64;
        let (mut sk, mut se) = (0.0, 0.0);
        for i in 0..n {
            let th = (i as f64 + 0.5) * h;
            let s = 1.0 - k * k * th.sin().powi(2);
            sk += h / s.sqrt();
            se += h * s.sqrt();
        }
        (sk, se)
    }

    #[test]
    fn degenerate_and_quarter_period() {
        assert!((elliptic_k(0.0f64).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!((elliptic_e(0.0f64).unwrap() - PI / 2.0).abs() < 1e-15);
        for k in [0.0, 0.3, 0.9, 0.999] {
            assert!((jacobi_cn(0.0f64, k).unwrap() - 1.0).abs() < 1e-15);
            let kk = elliptic_k(k).unwrap();
            assert!(jacobi_cn(kk, k).unwrap().abs() < 1e-12);
            assert!((jacobi_cn(2.0 * kk, k).unwrap() + 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn frozen_values() {
        assert!((elliptic_k(0.5f64).unwrap() - 1.6857503548125961).abs() < 1e-15);
        assert!((elliptic_e(0.5f64).unwrap() - 1.4674622093394272).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_quadrature() {
        for k in [0.1, 0.5, 0.8, 0.95] {
            let (qk, qe) = quad_ke(k);
            assert!((elliptic_k(k).unwrap() - qk).abs() < 1e-10);
            assert!((elliptic_e(k).unwrap() - qe).abs() < 1e-10);
        }
    }

    #[test]
    fn cn_solves_its_ode() {
        // (cn')² = (1 − cn²)(k'² + k²cn²)
        let k = 0.9f64;
        let h = 1e-5;
        for x in [0.3, 1.1, 2.7, -4.0, 13.0] {
            let c = jacobi_cn(x, k).unwrap();
            let d = (jacobi_cn(x + h, k).unwrap() - jacobi_cn(x - h, k).unwrap()) / (2.0 * h);
            let rhs = (1.0 - c * c) * (1.0 - k * k + k * k * c * c);
            assert!((d * d - rhs).abs() < 1e-8);
        }
    }

    #[test]
    fn modulus_domain() {
        assert!(elliptic_k(1.0f64).is_err());
        assert!(elliptic_e(1.5f64).is_err());
        assert!(jacobi_cn(0.2f64, 1.0).is_err());
    }

    #[test]
    fn f32_path() {
        let k = elliptic_k(0.5f32).unwrap();
        assert!((k - 1.685_750_4).abs() < 1e-6);
    }
}
