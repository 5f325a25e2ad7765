//! Bessel/Hankel evaluations used by the modal series and the quadrature
//! oracle: real J0/Y0/K0, complex J0, and the order-zero Hankel function of
//! the first kind on the real and imaginary axes.
//!
//! Power series below |z| = 12, Hankel-type asymptotics above; K0 switches
//! at x = 9. Worst-case relative error is ~2e-9 near the crossovers, far
//! below every tolerance in this crate.

use num_complex::Complex64;
use std::f64::consts::PI;

use thiserror::Error;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Asymptotic amplitude polynomials for J0/Y0, coefficients of 1/z^2.
const P0: [f64; 5] = [
    1.0,
    -9.0 / 128.0,
    3675.0 / 32768.0,
    -2401245.0 / 4194304.0,
    13043905875.0 / 2147483648.0,
];
const Q0: [f64; 4] = [
    -1.0 / 8.0,
    75.0 / 1024.0,
    -59535.0 / 262144.0,
    57972915.0 / 33554432.0,
];

#[derive(Debug, Error)]
pub enum BesselError {
    #[error("H0^(1) is singular at z = 0")]
    SingularOrigin,
    #[error("H0^(1) is implemented on the real and imaginary axes only (got {0})")]
    OffAxis(Complex64),
}

fn poly_eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// J0 for real argument.
pub fn j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        let zz = -x * x / 4.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..80 {
            term *= zz / ((k * k) as f64);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        let u = 1.0 / (x * x);
        let p = poly_eval(&P0, u);
        let q = poly_eval(&Q0, u) / x;
        let w = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * w.cos() - q * w.sin())
    }
}

/// Y0 for real positive argument.
pub fn y0(x: f64) -> f64 {
    assert!(x > 0.0, "y0 needs x > 0");
    if x <= 12.0 {
        // (2/pi)[(ln(x/2)+gamma) J0 + sum_k (-1)^{k+1} H_k (x^2/4)^k / (k!)^2]
        let u = x * x / 4.0;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for k in 1..80 {
            term *= -u / ((k * k) as f64);
            harmonic += 1.0 / k as f64;
            sum -= term * harmonic;
            if term.abs() * harmonic < 1e-18 * (1.0 + sum.abs()) {
                break;
            }
        }
        2.0 / PI * (((x / 2.0).ln() + EULER_GAMMA) * j0(x) + sum)
    } else {
        let u = 1.0 / (x * x);
        let p = poly_eval(&P0, u);
        let q = poly_eval(&Q0, u) / x;
        let w = x - PI / 4.0;
        (2.0 / (PI * x)).sqrt() * (p * w.sin() + q * w.cos())
    }
}

/// Modified Bessel I0, power series (adequate for the K0 small branch).
pub fn i0(x: f64) -> f64 {
    let u = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..120 {
        term *= u / ((k * k) as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Modified Bessel K0 for real positive argument.
pub fn k0(x: f64) -> f64 {
    assert!(x > 0.0, "k0 needs x > 0");
    if x <= 9.0 {
        let u = x * x / 4.0;
        let mut term = 1.0;
        let mut harmonic = 0.0;
        let mut sum = 0.0;
        for k in 1..120 {
            term *= u / ((k * k) as f64);
            harmonic += 1.0 / k as f64;
            sum += term * harmonic;
            if term * harmonic < 1e-18 * (1.0 + sum) {
                break;
            }
        }
        -((x / 2.0).ln() + EULER_GAMMA) * i0(x) + sum
    } else {
        // asymptotic series truncated at its smallest term
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let next = term * (-(2.0 * k - 1.0) * (2.0 * k - 1.0)) / (8.0 * x * k);
            if next.abs() >= term.abs() || k > 60.0 {
                break;
            }
            term = next;
            sum += term;
            k += 1.0;
        }
        (PI / (2.0 * x)).sqrt() * (-x).exp() * sum
    }
}

/// J0 for complex argument (used by the Hankel-transform oracle, whose
/// integration contour sits slightly below the real axis).
pub fn j0_complex(z: Complex64) -> Complex64 {
    if z.norm() <= 12.0 {
        let zz = -z * z / 4.0;
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for k in 1..80 {
            term *= zz / ((k * k) as f64);
            sum += term;
            if term.norm() < 1e-17 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        let u = (z * z).inv();
        let mut p = Complex64::new(0.0, 0.0);
        for &c in P0.iter().rev() {
            p = p * u + c;
        }
        let mut q = Complex64::new(0.0, 0.0);
        for &c in Q0.iter().rev() {
            q = q * u + c;
        }
        q /= z;
        let w = z - PI / 4.0;
        (2.0 / (PI * z)).sqrt() * (p * w.cos() - q * w.sin())
    }
}

/// Order-zero Hankel function of the first kind.
///
/// Real argument: `J0 + i Y0`. Purely imaginary argument `iy` (evanescent
/// modes): `(2/(i pi)) K0(y)`. The dispersion roots live on exactly these
/// two axes, so no other arguments are accepted.
pub fn hankel1_0(z: Complex64) -> Result<Complex64, BesselError> {
    let tol = 1e-12 * z.norm();
    if z.norm() == 0.0 {
        return Err(BesselError::SingularOrigin);
    }
    if z.im.abs() <= tol {
        let x = z.re;
        if x <= 0.0 {
            return Err(BesselError::OffAxis(z));
        }
        Ok(Complex64::new(j0(x), y0(x)))
    } else if z.re.abs() <= tol {
        let y = z.im;
        if y <= 0.0 {
            return Err(BesselError::OffAxis(z));
        }
        // H0^(1)(iy) = (2/(i pi)) K0(y) = -(2i/pi) K0(y)
        Ok(Complex64::new(0.0, -2.0 / PI * k0(y)))
    } else {
        Err(BesselError::OffAxis(z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values frozen from an independent implementation
    #[test]
    fn frozen_real_values() {
        assert!((j0(1.0) - 0.7651976865579666).abs() < 1e-12);
        assert!((j0(5.0) - (-0.17759677131433835)).abs() < 1e-12);
        assert!((j0(50.0) - 0.0558123276692518).abs() < 1e-12);
        assert!((y0(1.0) - 0.088256964215677).abs() < 1e-12);
        assert!((y0(5.0) - (-0.3085176252490338)).abs() < 1e-12);
        assert!((y0(50.0) - (-0.0980649954700771)).abs() < 1e-10);
        assert!((k0(1.0) - 0.42102443824070834).abs() < 1e-12);
        assert!((k0(5.0) - 0.0036910983340425942).abs() < 1e-14);
        assert!((k0(20.0) - 5.741237815336524e-10).abs() < 1e-18);
    }

    #[test]
    fn hankel_frozen_and_identities() {
        let h = hankel1_0(Complex64::new(1.0, 0.0)).unwrap();
        assert!((h.re - 0.7651976866).abs() < 1e-9);
        assert!((h.im - 0.0882569642).abs() < 1e-9);

        // |H0(x)| ~ sqrt(2/(pi x)) for large x
        let x = 100.0;
        let mag = hankel1_0(Complex64::new(x, 0.0)).unwrap().norm();
        let asym = (2.0 / (PI * x)).sqrt();
        assert!((mag - asym).abs() / asym < 1e-3);

        // imaginary axis routes through K0
        let h5 = hankel1_0(Complex64::new(0.0, 5.0)).unwrap();
        assert!(h5.re.abs() < 1e-15);
        assert!((h5.im + 2.0 / PI * k0(5.0)).abs() < 1e-15);

        assert!(hankel1_0(Complex64::new(0.0, 0.0)).is_err());
        assert!(hankel1_0(Complex64::new(3.0, 4.0)).is_err());
    }

    #[test]
    fn complex_j0_matches_real_axis_and_frozen_points() {
        for x in [0.3, 2.0, 7.9, 8.2, 11.9, 12.1, 30.0] {
            let c = j0_complex(Complex64::new(x, 0.0));
            assert!((c.re - j0(x)).abs() < 1e-9 * (1.0 + j0(x).abs()), "x={x}");
            assert!(c.im.abs() < 1e-12);
        }
        let z = j0_complex(Complex64::new(3.0, 4.0));
        assert!((z.re - (-8.812143793697905)).abs() < 1e-8);
        assert!((z.im - (-4.598437899743035)).abs() < 1e-8);
        let z = j0_complex(Complex64::new(10.0, 1.0));
        assert!((z.re - (-0.38170326733942445)).abs() < 1e-7);
        assert!((z.im - (-0.04642191069097068)).abs() < 1e-7);
    }

    #[test]
    fn continuity_at_series_asymptotic_crossover() {
        // one point each side of the branch switch, pinned to reference values
        assert!((j0(11.999999) - 0.0476890873496959).abs() < 5e-9);
        assert!((j0(12.000001) - 0.0476895342439049).abs() < 5e-9);
        let k_lo = k0(8.999999);
        let k_hi = k0(9.000001);
        assert!((k_lo / 5.0881366593504e-5 - 1.0).abs() < 1e-7);
        assert!((k_hi / 5.08812593194713e-5 - 1.0).abs() < 1e-7);
    }
}
