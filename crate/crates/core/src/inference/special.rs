use crate::error::{invalid, Result};

/// Below this argument `ln I0` is summed from its power series; above it the
/// large-argument expansion is accurate to rounding.
const SERIES_LIMIT: f64 = 20.0;

/// `ln I0(x)` for `x >= 0`, finite for any finite argument.
pub fn ln_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        // Hankel expansion: sum_k ((2k-1)!!)^2 / (k! (8x)^k), truncated once
        // terms stop shrinking or fall below rounding.
        let t = 1.0 / (8.0 * x);
        let (mut term, mut tail) = (1.0f64, 1.0f64);
        for k in 1..60 {
            let next = term * ((2 * k - 1) as f64).powi(2) / k as f64 * t;
            if next >= term || next < 1e-17 {
                break;
            }
            term = next;
            tail += term;
        }
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + tail.ln()
    }
}

/// Exponential log-density with scale `theta`.
pub fn exp_logpdf(x: f64, theta: f64) -> Result<f64> {
    if !(theta > 0.0) {
        return invalid(format!("exponential scale must be positive, got {theta}"));
    }
    if !(x >= 0.0) {
        return invalid(format!("intensity must be non-negative, got {x}"));
    }
    Ok(-theta.ln() - x / theta)
}

/// Noncentral chi-squared (two degrees of freedom) log-density.
pub fn nc2_logpdf(y: f64, lambda: f64) -> Result<f64> {
    if !(y >= 0.0) || !(lambda >= 0.0) {
        return invalid(format!("noncentral chi-squared needs y >= 0 and lambda >= 0 (y={y}, lambda={lambda})"));
    }
    Ok(nc2_logpdf_unchecked(y, lambda))
}

#[inline]
pub(crate) fn nc2_logpdf_unchecked(y: f64, lambda: f64) -> f64 {
    -std::f64::consts::LN_2 - 0.5 * (y + lambda) + ln_i0((y * lambda).sqrt())
}
