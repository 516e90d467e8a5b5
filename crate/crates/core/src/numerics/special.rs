use crate::error::{Error, Result};

const STIRLING_SHIFT: f64 = 10.0;

/// Natural log of the gamma function for `x > 0`.
///
/// Small arguments are shifted up with the recurrence Γ(x+1) = xΓ(x) until
/// the Stirling series (through the x⁻¹³ term) is accurate to double precision.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    let mut shifted = x;
    let mut log_prod = 0.0;
    if shifted < STIRLING_SHIFT {
        let mut prod = 1.0;
        while shifted < STIRLING_SHIFT {
            prod *= shifted;
            shifted += 1.0;
        }
        log_prod = prod.ln();
    }
    Ok(stirling(shifted) - log_prod)
}

fn stirling(x: f64) -> f64 {
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number coefficients B_2k / (2k(2k−1)).
    let series = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2
                        * (1.0 / 1260.0
                            + inv2
                                * (-1.0 / 1680.0
                                    + inv2
                                        * (1.0 / 1188.0
                                            + inv2 * (-691.0 / 360_360.0 + inv2 / 156.0))))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series
}

/// ln(n!) for count data.
pub fn log_factorial(n: f64) -> Result<f64> {
    log_gamma(n + 1.0)
}

/// Standard normal upper tail probability P(Z > z).
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_factorials() {
        assert_eq!(log_gamma(1.0).unwrap(), 0.0);
        assert_eq!(log_gamma(2.0).unwrap(), 0.0);
        assert!((log_gamma(5.0).unwrap() - 24f64.ln()).abs() < 1e-12);
        // 3.178054 from ln(4!)
        assert!((log_gamma(5.0).unwrap() - 3.178_053_830_347_945_6).abs() < 1e-12);
    }

    #[test]
    fn matches_direct_log_factorial_sums() {
        let mut acc = 0.0;
        for n in 1..=170u32 {
            acc += (n as f64).ln();
            let lg = log_gamma(n as f64 + 1.0).unwrap();
            assert!((lg - acc).abs() <= 1e-10 * acc.max(1.0), "n={n}: {lg} vs {acc}");
        }
    }

    #[test]
    fn half_integer_value() {
        // Γ(1/2) = √π
        let expected = std::f64::consts::PI.sqrt().ln();
        assert!((log_gamma(0.5).unwrap() - expected).abs() < 1e-13);
    }

    #[test]
    fn recurrence_holds() {
        for k in 1..=100 {
            let x = k as f64;
            let diff = log_gamma(x + 1.0).unwrap() - log_gamma(x).unwrap();
            assert!((diff - x.ln()).abs() < 1e-9, "x={x}");
        }
    }

    #[test]
    fn large_argument_matches_stirling_reference() {
        // ln Γ(10⁶) from the asymptotic series evaluated to well beyond double precision.
        let expected = 12_815_504.569_147_612;
        let got = log_gamma(1e6).unwrap();
        assert!((got - expected).abs() / expected < 1e-15);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(log_gamma(0.0).is_err());
        assert!(log_gamma(-2.5).is_err());
    }

    #[test]
    fn normal_tail() {
        assert!((normal_sf(0.0) - 0.5).abs() < 1e-15);
        assert!((normal_sf(1.959_963_984_540_054) - 0.025).abs() < 1e-12);
    }
}
