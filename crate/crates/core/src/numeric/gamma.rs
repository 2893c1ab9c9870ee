//! Regularized incomplete gamma functions for the Erlang cdf.

/// Regularized lower incomplete gamma `P(a, x)` and upper `Q(a, x) = 1 - P(a, x)`,
/// each computed on the side where it does not suffer cancellation.
pub fn regularized_gamma(a: f64, x: f64) -> (f64, f64) {
    debug_assert!(a > 0.0);
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if x.is_infinite() {
        return (1.0, 0.0);
    }
    let log_prefactor = a * libm::log(x) - x - libm::lgamma(a);
    if x < a + 1.0 {
        let p = lower_series(a, x, log_prefactor);
        (p, 1.0 - p)
    } else {
        let q = upper_continued_fraction(a, x, log_prefactor);
        (1.0 - q, q)
    }
}

fn lower_series(a: f64, x: f64, log_prefactor: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            break;
        }
    }
    sum * libm::exp(log_prefactor)
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn upper_continued_fraction(a: f64, x: f64, log_prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            break;
        }
    }
    libm::exp(log_prefactor) * h
}
