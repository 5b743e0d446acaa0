//! Bisection and golden-section search on scalar functions.

use crate::{Error, Result};

/// Bisect a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket's relative width drops below `x_rel_tol` or
/// `|f| <= f_abs_tol` at the midpoint.
pub fn bisect<F: Fn(f64) -> f64>(
    f: F,
    mut lo: f64,
    mut hi: f64,
    x_rel_tol: f64,
    f_abs_tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let f_lo = f(lo);
    let f_hi = f(hi);
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::RootFinding(format!(
            "no sign change on [{lo}, {hi}]: f = ({f_lo:.3e}, {f_hi:.3e})"
        )));
    }
    let sign_lo = f_lo.signum();
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..max_iter {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // bracket no longer splittable
        }
        let fm = f(mid);
        if fm.abs() <= f_abs_tol {
            return Ok(mid);
        }
        if fm.signum() == sign_lo {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo).abs() <= x_rel_tol * (lo.abs() + hi.abs() + 1e-300) {
            return Ok(0.5 * (lo + hi));
        }
    }
    Ok(mid)
}

/// Golden-section minimization of a unimodal `f` on `[lo, hi]`.
/// Returns `(argmin, min)`.
pub fn golden_min<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, x_rel_tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = hi - INV_PHI * (hi - lo);
    let mut d = lo + INV_PHI * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..200 {
        if (hi - lo).abs() <= x_rel_tol * (lo.abs() + hi.abs() + 1e-300) {
            break;
        }
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - INV_PHI * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + INV_PHI * (hi - lo);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt2() {
        let root = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-15, 0.0, 200).unwrap();
        assert!((root - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        assert!(bisect(|x| x * x + 1.0, 0.0, 1.0, 1e-12, 0.0, 100).is_err());
    }

    #[test]
    fn golden_finds_parabola_minimum() {
        let (x, v) = golden_min(|x| (x - 1.25) * (x - 1.25) + 3.0, 0.0, 4.0, 1e-12);
        assert!((x - 1.25).abs() < 1e-7);
        assert!((v - 3.0).abs() < 1e-13);
    }

    #[test]
    fn golden_handles_boundary_minimum() {
        let (x, _) = golden_min(|x| x, 2.0, 5.0, 1e-12);
        assert!((x - 2.0).abs() < 1e-9);
    }
}
