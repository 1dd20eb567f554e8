//! Special functions used across the crate.

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_606_512_090_082_402_43;

/// Exponential integral `J(u) = ∫_u^∞ e^{-x}/x dx` (a.k.a. `E1`).
///
/// Power series below `u = 1`, modified Lentz continued fraction above.
pub fn exp_integral_j(u: f64) -> Result<f64> {
    if !(u > 0.0) {
        return Err(Error::domain(format!(
            "exponential integral diverges for u = {u}; need u > 0"
        )));
    }
    if u.is_infinite() {
        return Ok(0.0);
    }
    Ok(if u <= 1.0 {
        e1_series(u)
    } else {
        e1_continued_fraction(u)
    })
}

fn e1_series(u: f64) -> f64 {
    // E1(u) = -γ - ln u - Σ_{k≥1} (-u)^k / (k k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -u / kf;
        let add = term / kf;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - u.ln() - sum
}

fn e1_continued_fraction(u: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = u + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-u).exp()
}

/// Natural log of the gamma function.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::Integrator;

    // Independent route: adaptive quadrature of the defining integral.
    fn j_by_quadrature(u: f64) -> f64 {
        let upper = u + 60.0;
        Integrator::with_tolerances(0.0, 1e-13)
            .pieces(16)
            .integrate(|x: f64| (-x).exp() / x, u, upper)
            .unwrap()
            .value
    }

    #[test]
    fn matches_quadrature_across_switchover() {
        for u in [1e-3, 0.05, 0.3, 0.9, 1.0, 1.1, 2.0, 5.0, 12.0, 30.0] {
            let want = j_by_quadrature(u);
            let got = exp_integral_j(u).unwrap();
            assert!(((got - want) / want).abs() < 1e-10, "u={u}: {got} vs {want}");
        }
    }

    #[test]
    fn j_at_one() {
        let v = exp_integral_j(1.0).unwrap();
        assert!((v - 0.219_383_934_395_520_3).abs() < 1e-12);
        assert!((v - 0.2193839).abs() < 1e-7);
    }

    #[test]
    fn bounded_by_exponential_over_u() {
        for i in 1..200 {
            let u = i as f64 * 0.1;
            assert!(exp_integral_j(u).unwrap() <= (-u).exp() / u);
        }
    }

    #[test]
    fn diverges_logarithmically_at_zero() {
        let v = exp_integral_j(1e-6).unwrap();
        assert!(v > 12.0);
        assert!((v - (-EULER_GAMMA - 1e-6f64.ln())).abs() < 1e-5);
    }

    #[test]
    fn derivative_relation() {
        for u in [0.5f64, 1.0, 5.0] {
            let h = 1e-5;
            let fd = (exp_integral_j(u + h).unwrap() - exp_integral_j(u - h).unwrap()) / (2.0 * h);
            assert!((fd + (-u).exp() / u).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(matches!(exp_integral_j(0.0), Err(Error::Domain(_))));
        assert!(matches!(exp_integral_j(-1.0), Err(Error::Domain(_))));
    }
}
