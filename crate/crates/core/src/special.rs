//! Scalar helpers: monotone bisection and the Gamma function.

use crate::error::{Error, Result};

pub const MAX_BISECTION_ITERS: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `tol`, when `f` vanishes exactly,
/// or when the midpoint is no longer representable between the ends.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.is_nan() || fhi.is_nan() || (flo > 0.0) == (fhi > 0.0) {
        return Err(Error::NoRoot(format!(
            "no sign change on [{lo:e}, {hi:e}] (f = {flo:e}, {fhi:e})"
        )));
    }
    for _ in 0..MAX_BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    if hi - lo <= tol.max(f64::EPSILON * hi.abs().max(lo.abs())) {
        Ok(0.5 * (lo + hi))
    } else {
        Err(Error::NoRoot(format!(
            "bisection did not converge in {MAX_BISECTION_ITERS} iterations"
        )))
    }
}

/// Gamma function; errors at the poles (non-positive integers).
pub fn gamma(x: f64) -> Result<f64> {
    if x <= 0.0 && x == x.round() {
        return Err(Error::Domain(format!("Gamma pole at {x}")));
    }
    Ok(statrs::function::gamma::gamma(x))
}

/// Natural log of |Gamma(x)| for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_sqrt2() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_requires_sign_change() {
        assert!(bisect(|x| x * x + 1.0, -1.0, 1.0, 1e-12).is_err());
    }

    #[test]
    fn gamma_reference_values() {
        let pi = std::f64::consts::PI;
        let table = [
            (0.5, pi.sqrt()),
            (1.0, 1.0),
            (1.5, 0.5 * pi.sqrt()),
            (2.0, 1.0),
            (2.5, 0.75 * pi.sqrt()),
            (3.0, 2.0),
            (4.0, 6.0),
            (5.0, 24.0),
            (10.0, 362880.0),
            (0.25, 3.625_609_908_221_908),
            (1.0 / 3.0, 2.678_938_534_707_748),
            (-0.5, -2.0 * pi.sqrt()),
        ];
        for (x, g) in table {
            let got = gamma(x).unwrap();
            assert!(((got - g) / g).abs() < 1e-10, "Gamma({x}) = {got}, want {g}");
        }
        assert!((ln_gamma(20.0) - 362_880f64.ln() - (10..20).map(|k| (k as f64).ln()).sum::<f64>()).abs() < 1e-10);
        assert!(gamma(-2.0).is_err());
    }
}
