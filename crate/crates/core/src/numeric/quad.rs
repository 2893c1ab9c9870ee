//! Adaptive Gauss–Kronrod (7/15) quadrature with global interval bisection.

use alloc::collections::BinaryHeap;
use alloc::format;
use core::cmp::Ordering;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd-indexed Kronrod nodes (and the center).
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

/// Adaptive integrator settings. Defaults: absolute 1e-10, relative 1e-9.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-9, max_intervals: 4000 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = libm::pow(200.0 * scaled / res_asc, 1.5);
        scaled = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        let min_err = 50.0 * f64::EPSILON * res_abs;
        if min_err > scaled {
            scaled = min_err;
        }
    }
    scaled
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = f_center * WGK[7];
    let mut res_g = f_center * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    let error = rescale_error((res_k - res_g) * half, res_abs * half.abs(), res_asc * half.abs());
    Panel { a, b, value, error }
}

impl Quadrature {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Self { abs_tol, rel_tol, ..Self::default() }
    }

    /// Integrates `f` over `[a, b]`; `a > b` yields the negated integral.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<QuadratureResult> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Quadrature(format!("non-finite limits [{a}, {b}]")));
        }
        if a == b {
            return Ok(QuadratureResult { value: 0.0, abs_error: 0.0, evaluations: 0 });
        }
        if a > b {
            let r = self.integrate(f, b, a)?;
            return Ok(QuadratureResult { value: -r.value, ..r });
        }

        let first = kronrod15(&mut f, a, b);
        let mut evaluations = 15;
        let mut total = first.value;
        let mut total_err = first.error;
        let mut heap = BinaryHeap::new();
        heap.push(first);

        loop {
            if !total.is_finite() || !total_err.is_finite() {
                return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
            }
            let tol = self.abs_tol.max(self.rel_tol * total.abs());
            if total_err <= tol {
                break;
            }
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature(format!(
                    "no convergence on [{a}, {b}] after {} panels: estimate {total}, error {total_err}",
                    heap.len()
                )));
            }
            let worst = heap.pop().expect("heap is never empty");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // Panel can no longer be split in floating point; accept what we have.
                heap.push(Panel { error: 0.0, ..worst });
                total_err = heap.iter().map(|p| p.error).sum();
                if total_err == 0.0 {
                    break;
                }
                continue;
            }
            let left = kronrod15(&mut f, worst.a, mid);
            let right = kronrod15(&mut f, mid, worst.b);
            evaluations += 30;
            total += left.value + right.value - worst.value;
            total_err += left.error + right.error - worst.error;
            heap.push(left);
            heap.push(right);
        }

        // Re-sum to shed accumulated cancellation from the running update.
        let value = heap.iter().map(|p| p.value).sum();
        let abs_error = heap.iter().map(|p| p.error).sum();
        Ok(QuadratureResult { value, abs_error, evaluations })
    }
}

/// Integrates with the default tolerances and returns the value only.
pub fn integrate<F: FnMut(f64) -> f64>(f: F, a: f64, b: f64) -> Result<f64> {
    Quadrature::default().integrate(f, a, b).map(|r| r.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0).unwrap();
        // antiderivative x^4/4 - x^2 + x
        let exact = (81.0 / 4.0 - 9.0 + 3.0) - (0.25 - 1.0 - 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn exponential_tail() {
        let v = integrate(|x| libm::exp(-x), 2.0, 60.0).unwrap();
        assert!((v - libm::exp(-2.0)).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits_negate() {
        let fwd = integrate(libm::sin, 0.0, 1.0).unwrap();
        let rev = integrate(libm::sin, 1.0, 0.0).unwrap();
        assert_eq!(fwd, -rev);
    }

    #[test]
    fn integrable_singularity() {
        // int_0^1 x^{-1/2} = 2
        let v = Quadrature::default().integrate(|x| 1.0 / libm::sqrt(x), 0.0, 1.0).unwrap();
        assert!((v.value - 2.0).abs() < 1e-8, "{v:?}");
    }

    #[test]
    fn nan_integrand_is_an_error() {
        assert!(integrate(|_| f64::NAN, 0.0, 1.0).is_err());
    }
}
