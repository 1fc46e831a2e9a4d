//! Scalar root finding for monotone functions.

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Bisection on `[lo, hi]` for a function that changes sign on the bracket.
///
/// Stops when the bracket is narrower than `tol`, when the midpoint hits an
/// exact zero, or when the bracket can no longer be split in floating point.
/// Returns the midpoint of the final bracket.
pub fn bisect<F>(f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::NoBracket { lo, hi });
    }
    let lo_negative = flo < 0.0;

    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest root in `(0, max_len]` of `c + v*x - 0.5*a*x^2 = 0`.
///
/// Roots at exactly zero are ignored; a root within `1e-15` of zero is
/// treated as the starting point and skipped too.
pub(crate) fn smallest_positive_quadratic_root(c: f64, v: f64, a: f64, max_len: f64) -> Option<f64> {
    // Rewrite as A x^2 + B x + C = 0.
    let qa = -0.5 * a;
    let qb = v;
    let qc = c;
    let mut roots = [f64::NAN; 2];
    if qa == 0.0 {
        if qb != 0.0 {
            roots[0] = -qc / qb;
        }
    } else {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let q = -0.5 * (qb + qb.signum() * sq);
        let q = if q == 0.0 { -0.5 * (qb - sq) } else { q };
        if q != 0.0 {
            roots[0] = q / qa;
            roots[1] = qc / q;
        } else {
            roots[0] = 0.0;
        }
    }
    roots
        .into_iter()
        .filter(|r| r.is_finite() && *r > 1e-15 && *r <= max_len)
        .fold(None, |best: Option<f64>, r| Some(best.map_or(r, |b| b.min(r))))
}
