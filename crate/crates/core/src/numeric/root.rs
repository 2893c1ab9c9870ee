//! Bracketed bisection.

use alloc::format;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub root: f64,
    pub residual: f64,
    pub iterations: usize,
}

/// Bisection on `[a, b]` until the bracket collapses to adjacent floats,
/// `|f| <= ftol`, or the width drops below `xtol`.
///
/// `f(a)` and `f(b)` must differ in sign (a zero at either end is accepted).
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, xtol: f64, ftol: f64) -> Result<Bracket> {
    let mut fa = f(a);
    let fb = f(b);
    if fa == 0.0 {
        return Ok(Bracket { root: a, residual: 0.0, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Bracket { root: b, residual: 0.0, iterations: 0 });
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::BoundaryNotFound(format!("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")));
    }
    let mut best = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
    for it in 1..=2000 {
        let m = 0.5 * (a + b);
        if m <= a.min(b) || m >= a.max(b) || (b - a).abs() <= xtol {
            return Ok(Bracket { root: best.0, residual: best.1, iterations: it });
        }
        let fm = f(m);
        if fm.is_nan() {
            return Err(Error::Numerical(format!("NaN in bisection at x = {m}")));
        }
        if fm.abs() < best.1.abs() {
            best = (m, fm);
        }
        if fm == 0.0 || fm.abs() <= ftol {
            return Ok(Bracket { root: m, residual: fm, iterations: it });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Ok(Bracket { root: best.0, residual: best.1, iterations: 2000 })
}
