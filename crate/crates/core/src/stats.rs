//! Numerical helpers: log-gamma, the regularized incomplete beta function,
//! Student's t distribution, and a small QR-based least-squares solver.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    // The continued fraction converges fast for x < (a+1)/(a+b+2); use the
    // symmetry relation on the other side.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(1.0 - x, b, a) / b
    }
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10_000 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// CDF of Student's t with `df` degrees of freedom.
pub fn student_t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * inc_beta(df / (df + t * t), df / 2.0, 0.5);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value `P(|T| >= |t|)`.
pub fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return f64::NAN;
    }
    if t.is_infinite() {
        return 0.0;
    }
    inc_beta(df / (df + t * t), df / 2.0, 0.5).clamp(0.0, 1.0)
}

/// Coefficients and inference from an ordinary least-squares fit.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub t_statistics: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residual_sd: f64,
    pub residuals: Vec<f64>,
    pub n_samples: usize,
}

/// Least squares of `y` on the columns of `design` (row-major, `p` columns)
/// through a Householder QR factorization.
pub fn ols(design: &[f64], p: usize, y: &[f64]) -> Result<OlsFit> {
    let n = y.len();
    if design.len() != n * p {
        return Err(Error::DimensionMismatch {
            expected: n * p,
            actual: design.len(),
        });
    }
    if n <= p {
        return Err(Error::TooFewSamples { got: n, need: p + 1 });
    }
    let x = DMatrix::from_row_slice(n, p, design);
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = (0..p).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..p {
        if !(r[(i, i)].abs() > 1e-10 * max_diag.max(f64::MIN_POSITIVE)) {
            return Err(Error::RankDeficient(format!(
                "column {i} is collinear with earlier columns"
            )));
        }
    }
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let fitted = &x * &beta;
    let resid = &yv - fitted;
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    let dof = (n - p) as f64;
    let sigma2 = rss / dof;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(p, p))
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let cov_unscaled = &r_inv * r_inv.transpose();

    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let standard_errors: Vec<f64> = (0..p).map(|i| (sigma2 * cov_unscaled[(i, i)]).sqrt()).collect();
    let t_statistics: Vec<f64> = coefficients
        .iter()
        .zip(&standard_errors)
        .map(|(b, se)| {
            if *se > 0.0 {
                b / se
            } else if *b == 0.0 {
                0.0
            } else {
                b.signum() * f64::INFINITY
            }
        })
        .collect();
    let p_values = t_statistics.iter().map(|t| two_sided_p(*t, dof)).collect();
    Ok(OlsFit {
        coefficients,
        standard_errors,
        t_statistics,
        p_values,
        residual_sd: sigma2.sqrt(),
        residuals: resid.iter().copied().collect(),
        n_samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ln_gamma_matches_factorials() {
        let mut f = 1.0f64;
        for n in 1..20 {
            assert_abs_diff_eq!(ln_gamma(n as f64), f.ln(), epsilon = 1e-12);
            f *= n as f64;
        }
        assert_abs_diff_eq!(ln_gamma(0.5), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-13);
    }

    #[test]
    fn inc_beta_closed_forms() {
        // I_x(1, b) = 1 - (1-x)^b and I_x(a, 1) = x^a
        for &x in &[0.01, 0.3, 0.5, 0.77, 0.99] {
            assert_abs_diff_eq!(inc_beta(x, 1.0, 3.0), 1.0 - (1.0 - x).powi(3), epsilon = 1e-13);
            assert_abs_diff_eq!(inc_beta(x, 2.5, 1.0), x.powf(2.5), epsilon = 1e-13);
        }
        assert_eq!(inc_beta(0.0, 2.0, 3.0), 0.0);
        assert_eq!(inc_beta(1.0, 2.0, 3.0), 1.0);
    }

    #[test]
    fn t_quantiles() {
        // published critical values
        assert_abs_diff_eq!(student_t_cdf(2.228_138_851_986_274, 10.0), 0.975, epsilon = 1e-10);
        assert_abs_diff_eq!(student_t_cdf(12.706_204_736_174_7, 1.0), 0.975, epsilon = 1e-10);
        assert_abs_diff_eq!(student_t_cdf(1.959_963_984_540_054, 1e7), 0.975, epsilon = 1e-6);
        assert_abs_diff_eq!(two_sided_p(2.228_138_851_986_274, 10.0), 0.05, epsilon = 1e-10);
        assert_eq!(student_t_cdf(0.0, 5.0), 0.5);
        // Cauchy closed form
        for &t in &[-3.0, -0.4, 0.9, 5.0] {
            let exact = 0.5 + f64::atan(t) / std::f64::consts::PI;
            assert_abs_diff_eq!(student_t_cdf(t, 1.0), exact, epsilon = 1e-12);
        }
    }

    #[test]
    fn ols_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.5];
        let design: Vec<f64> = xs.iter().flat_map(|x| [1.0, *x]).collect();
        let y: Vec<f64> = xs.iter().map(|x| 3.0 + 2.0 * x).collect();
        let fit = ols(&design, 2, &y).unwrap();
        assert_abs_diff_eq!(fit.coefficients[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.coefficients[1], 2.0, epsilon = 1e-12);
        assert!(fit.residual_sd < 1e-12);
    }

    #[test]
    fn ols_rejects_collinear_columns() {
        let design = [1.0, 2.0, 1.0, 2.0, 1.0, 2.0];
        assert!(matches!(
            ols(&design, 2, &[1.0, 2.0, 3.0]),
            Err(Error::RankDeficient(_))
        ));
        assert!(matches!(ols(&[1.0, 1.0], 2, &[1.0]), Err(Error::TooFewSamples { .. })));
    }
}
