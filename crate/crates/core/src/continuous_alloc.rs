//! Optimal layering for a continuum of fading states.
//!
//! With layers indexed by the gain `s` that first decodes them, the optimal
//! cumulative power `U(gamma)` (power of all layers above `gamma`) and the
//! tail distortion `D(gamma)` solve first-order linear ODEs on an active
//! span `[gamma_P, gamma_o]`:
//!
//! ```text
//! U' = -(2/g + f'/f) (U + 1/g) / (1+b),           U(gamma_o) = 0
//! D' = b/(1+b) (2/g + f'/f) D - f,                D(gamma_o) = gamma_o f(gamma_o)
//! ```
//!
//! where `gamma_o f(gamma_o) + F(gamma_o) = 1` and `U(gamma_P) = P`. The
//! minimum expected distortion is `F(gamma_P) + D(gamma_P)`.
//!
//! All integrals run in `t = ln s`, and density ratios are formed in log
//! space, so steep pdfs near zero or far in the tail neither underflow nor
//! need many panels.

use alloc::format;
use alloc::vec::Vec;
use core::cell::Cell;

use crate::error::{require_positive, Error, Result};
use crate::fading::ContinuousFading;
use crate::numeric::{bisect, Quadrature};

/// Exponents above this are reported as overflow (`U = inf`).
const MAX_EXPONENT: f64 = 700.0;

/// Hard floor of the lower-boundary search, relative to the mean gain.
pub const LOWER_BOUNDARY_FLOOR: f64 = 1e-12;

/// Points used to check that `U` is nonincreasing over the active span.
const MONOTONE_CHECK_POINTS: usize = 64;

fn ln_density(fading: &ContinuousFading, s: f64) -> f64 {
    fading.ln_pdf(s)
}

/// Root of `gamma f(gamma) + F(gamma) - 1`.
///
/// The sign is evaluated as `gamma f / (1 - F) - 1` in log space so that
/// the bracket top stays meaningful for concentrated laws whose density and
/// tail underflow there.
pub fn upper_boundary(fading: &ContinuousFading) -> Result<f64> {
    let mean = fading.mean();
    let mut lo = mean / 100.0;
    let mut hi = 100.0 * mean;
    if let ContinuousFading::Tabulated(t) = fading {
        let nodes = t.breakpoints();
        let last = nodes[nodes.len() - 1];
        let before = nodes[nodes.len() - 2];
        lo = lo.max(t.lower());
        hi = hi.min(last - 1e-9 * (last - before));
    }
    let hazard_sign = |g: f64| {
        let (_, tail) = fading.cdf_pair(g);
        let ln_f = ln_density(fading, g);
        if tail <= 0.0 {
            return 1.0;
        }
        if ln_f == f64::NEG_INFINITY {
            return -1.0;
        }
        libm::expm1(libm::log(g) + ln_f - libm::log(tail))
    };
    let bracket = bisect(hazard_sign, lo, hi, 0.0, 0.0).map_err(|e| match e {
        Error::BoundaryNotFound(msg) => {
            Error::BoundaryNotFound(format!("upper boundary gamma f + F - 1 = 0 not bracketed in [{lo}, {hi}]: {msg}"))
        }
        other => other,
    })?;
    let root = bracket.root;
    let residual = boundary_residual(fading, root);
    if !(residual.abs() <= 1e-12) {
        return Err(Error::BoundaryNotFound(format!(
            "upper boundary refinement stalled at {root} with residual {residual}"
        )));
    }
    Ok(root)
}

/// `gamma f(gamma) + F(gamma) - 1`, formed as `gamma f - (1 - F)`.
pub fn boundary_residual(fading: &ContinuousFading, gamma: f64) -> f64 {
    gamma * fading.pdf(gamma) - fading.cdf_pair(gamma).1
}

/// The `U` and `D` solutions for one fading law and bandwidth ratio, valid
/// for any total power (the power only selects `gamma_P`).
#[derive(Debug, Clone)]
pub struct PowerProfile {
    fading: ContinuousFading,
    b: f64,
    kappa: f64,
    gamma_o: f64,
    ln_f_o: f64,
    quadrature: Quadrature,
}

impl PowerProfile {
    pub fn new(fading: &ContinuousFading, b: f64) -> Result<Self> {
        require_positive("b", b)?;
        let gamma_o = upper_boundary(fading)?;
        let ln_f_o = ln_density(fading, gamma_o);
        if !ln_f_o.is_finite() {
            return Err(Error::Domain(format!("density vanishes at the upper boundary {gamma_o}")));
        }
        Ok(Self {
            fading: fading.clone(),
            b,
            kappa: 1.0 / (1.0 + b),
            gamma_o,
            ln_f_o,
            quadrature: Quadrature::default(),
        })
    }

    pub fn fading(&self) -> &ContinuousFading {
        &self.fading
    }

    pub fn bandwidth_ratio(&self) -> f64 {
        self.b
    }

    pub fn gamma_o(&self) -> f64 {
        self.gamma_o
    }

    fn check_gamma(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) || gamma > self.gamma_o * (1.0 + 1e-12) {
            return Err(Error::Domain(format!("gamma = {gamma} outside (0, gamma_o = {}]", self.gamma_o)));
        }
        let ln_f = ln_density(&self.fading, gamma);
        if !ln_f.is_finite() {
            return Err(Error::Domain(format!("density vanishes at gamma = {gamma}")));
        }
        Ok(ln_f)
    }

    /// Integral of `f(s)` over `[a, b]`, taken in `t = ln s` and split at
    /// the law's breakpoints.
    fn integrate_log<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> Result<f64> {
        let mut cuts: Vec<f64> = Vec::new();
        cuts.push(a);
        cuts.extend(self.fading.breakpoints().iter().copied().filter(|&x| x > a && x < b));
        cuts.push(b);
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let r = self.quadrature.integrate(
                |t| {
                    let s = libm::exp(t);
                    f(s) * s
                },
                libm::log(w[0]),
                libm::log(w[1]),
            )?;
            total += r.value;
        }
        Ok(total)
    }

    /// Cumulative power `U(gamma)` of all layers above `gamma`, from the
    /// direct integral solution with the analytic `f'/f`.
    pub fn cumulative_power(&self, gamma: f64) -> Result<f64> {
        let ln_f = self.check_gamma(gamma)?;
        let gamma = gamma.min(self.gamma_o);
        if gamma == self.gamma_o {
            return Ok(0.0);
        }
        let overflow = Cell::new(false);
        let ln_gamma = libm::log(gamma);
        let value = self.integrate_log(
            |s| {
                let e = self.kappa * (2.0 * (libm::log(s) - ln_gamma) + ln_density(&self.fading, s) - ln_f);
                if e > MAX_EXPONENT {
                    overflow.set(true);
                    return 0.0;
                }
                match self.fading.log_pdf_derivative(s) {
                    Some(dl) => (2.0 / s + dl) * libm::exp(e) / s,
                    None => 0.0,
                }
            },
            gamma,
            self.gamma_o,
        )?;
        if overflow.get() {
            return Ok(f64::INFINITY);
        }
        Ok(value * self.kappa)
    }

    /// `U(gamma)` from the integrated-by-parts solution, which needs no
    /// density derivative:
    /// `U = [psi(gamma_o)/gamma_o + int psi/s^2] / psi(gamma) - 1/gamma`,
    /// `psi = (s^2 f)^{1/(1+b)}`.
    pub fn cumulative_power_by_parts(&self, gamma: f64) -> Result<f64> {
        let ln_f = self.check_gamma(gamma)?;
        let gamma = gamma.min(self.gamma_o);
        let ln_gamma = libm::log(gamma);
        let exponent = |s: f64| self.kappa * (2.0 * (libm::log(s) - ln_gamma) + ln_density(&self.fading, s) - ln_f);
        let e_top = exponent(self.gamma_o);
        if e_top > MAX_EXPONENT {
            return Ok(f64::INFINITY);
        }
        let overflow = Cell::new(false);
        let tail = self.integrate_log(
            |s| {
                let e = exponent(s);
                if e > MAX_EXPONENT {
                    overflow.set(true);
                    return 0.0;
                }
                libm::exp(e) / (s * s)
            },
            gamma,
            self.gamma_o,
        )?;
        if overflow.get() {
            return Ok(f64::INFINITY);
        }
        Ok(libm::exp(e_top) / self.gamma_o + tail - 1.0 / gamma)
    }

    /// `rho(gamma) = -U'(gamma)`: analytic ODE right-hand side where `f'/f`
    /// is available, else a central difference with step `1e-5 mean`.
    pub fn power_density(&self, gamma: f64) -> Result<f64> {
        let u = self.cumulative_power(gamma)?;
        match self.fading.log_pdf_derivative(gamma) {
            Some(dl) => Ok(self.kappa * (2.0 / gamma + dl) * (u + 1.0 / gamma)),
            None => {
                let h = 1e-5 * self.fading.mean();
                let hi = (gamma + h).min(self.gamma_o);
                let lo = gamma - h;
                Ok((self.cumulative_power(lo)? - self.cumulative_power(hi)?) / (hi - lo))
            }
        }
    }

    /// `ln h(s)`, `h = (s/gamma_o)^2 f(s) / f(gamma_o)`.
    fn ln_h(&self, s: f64) -> f64 {
        2.0 * libm::log(s / self.gamma_o) + ln_density(&self.fading, s) - self.ln_f_o
    }

    /// Tail distortion `D(gamma)`: expected distortion contributed by gains
    /// above `gamma` when the base layer sits at `gamma`.
    pub fn distortion(&self, gamma: f64) -> Result<f64> {
        self.check_gamma(gamma)?;
        let gamma = gamma.min(self.gamma_o);
        let w = self.b * self.kappa;
        let ln_h_gamma = self.ln_h(gamma);
        let boundary = libm::exp(self.ln_f_o + libm::log(self.gamma_o) + w * ln_h_gamma);
        let body = self.integrate_log(
            |s| libm::exp(ln_density(&self.fading, s) + w * (ln_h_gamma - self.ln_h(s))),
            gamma,
            self.gamma_o,
        )?;
        Ok(boundary + body)
    }

    /// Realized distortion at gain `gamma` when the base layer sits at
    /// `gamma_p`: `(gamma^2 f(gamma) / (gamma_p^2 f(gamma_p)))^{-b/(1+b)}`
    /// on the span, 1 below it, constant above `gamma_o`.
    pub fn realized_distortion(&self, gamma_p: f64, gamma: f64) -> f64 {
        if !(gamma >= gamma_p) {
            return 1.0;
        }
        let g = gamma.min(self.gamma_o);
        let ratio = 2.0 * libm::log(g / gamma_p) + ln_density(&self.fading, g) - ln_density(&self.fading, gamma_p);
        libm::exp(-self.b * self.kappa * ratio).min(1.0)
    }

    /// Solves `U(gamma_P) = P`.
    pub fn lower_boundary(&self, total_power: f64) -> Result<LowerBoundary> {
        require_positive("total_power", total_power)?;
        let tol = 1e-9 * (1.0 + total_power);
        let floor = (LOWER_BOUNDARY_FLOOR * self.fading.mean()).max(self.fading.lower_support());
        let saturated = |residual| LowerBoundary { gamma_p: self.fading.lower_support(), residual, saturated: true };
        let mut lo = 0.5 * self.gamma_o;
        loop {
            let u = match self.cumulative_power(lo) {
                Ok(u) => u,
                // Density vanishes at the bottom of a bounded support.
                Err(Error::Domain(_)) if lo == floor => return Ok(saturated(-total_power)),
                Err(e) => return Err(e),
            };
            if u > total_power {
                break;
            }
            if lo <= floor {
                return Ok(saturated(u - total_power));
            }
            lo = (0.5 * lo).max(floor);
        }
        let bracket =
            bisect(|g| self.cumulative_power(g).map_or(f64::NAN, |u| u - total_power), lo, self.gamma_o, 0.0, tol)?;
        Ok(LowerBoundary { gamma_p: bracket.root, residual: bracket.residual, saturated: false })
    }
}

/// Result of the lower-boundary search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundary {
    pub gamma_p: f64,
    /// `U(gamma_P) - P`.
    pub residual: f64,
    /// `U` stays below `P` all the way down: not all power can be placed on
    /// the span, and `gamma_P` is reported at the bottom of the support.
    pub saturated: bool,
}

/// `U(gamma)` for a single evaluation; build a [`PowerProfile`] to reuse the
/// upper boundary across calls.
pub fn cumulative_power(fading: &ContinuousFading, b: f64, gamma: f64) -> Result<f64> {
    PowerProfile::new(fading, b)?.cumulative_power(gamma)
}

pub fn lower_boundary(fading: &ContinuousFading, b: f64, total_power: f64) -> Result<LowerBoundary> {
    PowerProfile::new(fading, b)?.lower_boundary(total_power)
}

/// Capacity-maximizing cumulative power (the `b -> 0` limit of `U`):
/// `(1 - F - gamma f) / (gamma^2 f)`.
pub fn capacity_maximizing_power(fading: &ContinuousFading, gamma: f64) -> Result<f64> {
    let f = fading.pdf(gamma);
    if !(f > 0.0) || !(gamma > 0.0) {
        return Err(Error::Domain(format!("density vanishes at gamma = {gamma}")));
    }
    let tail = fading.cdf_pair(gamma).1;
    Ok((tail - gamma * f) / (gamma * gamma * f))
}

/// Optimal continuous layering at one total power.
#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    profile: PowerProfile,
    total_power: f64,
    boundary: LowerBoundary,
    min_expected_distortion: f64,
    monotone: bool,
}

impl ContinuousSolution {
    pub fn profile(&self) -> &PowerProfile {
        &self.profile
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn gamma_o(&self) -> f64 {
        self.profile.gamma_o
    }

    pub fn gamma_p(&self) -> f64 {
        self.boundary.gamma_p
    }

    pub fn lower_boundary(&self) -> LowerBoundary {
        self.boundary
    }

    pub fn min_expected_distortion(&self) -> f64 {
        self.min_expected_distortion
    }

    /// `false` when `U` was found increasing somewhere on the span; the
    /// solution is then outside the regime the ODE solution assumes.
    pub fn is_valid(&self) -> bool {
        self.monotone && !self.boundary.saturated
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    /// Optimal cumulative power `T*(gamma)`: 0 above `gamma_o`, `U` on the
    /// span, `P` below `gamma_P`.
    pub fn cumulative_power(&self, gamma: f64) -> Result<f64> {
        if gamma >= self.profile.gamma_o {
            Ok(0.0)
        } else if gamma <= self.boundary.gamma_p {
            Ok(self.total_power)
        } else {
            self.profile.cumulative_power(gamma)
        }
    }

    /// Power density `rho*(gamma)`, zero off the span.
    pub fn power_density(&self, gamma: f64) -> Result<f64> {
        if gamma >= self.profile.gamma_o || gamma < self.boundary.gamma_p {
            Ok(0.0)
        } else {
            self.profile.power_density(gamma)
        }
    }

    /// `D(gamma)`; above `gamma_o` no layers remain, leaving the tail mass
    /// `1 - F(gamma)`.
    pub fn distortion(&self, gamma: f64) -> Result<f64> {
        if gamma > self.profile.gamma_o {
            Ok(self.profile.fading.cdf_pair(gamma).1)
        } else {
            self.profile.distortion(gamma)
        }
    }

    /// Realized distortion of a receiver with gain `gamma`.
    pub fn realized_distortion(&self, gamma: f64) -> f64 {
        if self.boundary.gamma_p <= 0.0 {
            return 1.0;
        }
        self.profile.realized_distortion(self.boundary.gamma_p, gamma)
    }
}

/// Minimum expected distortion `F(gamma_P) + D(gamma_P)` and the optimal
/// power distribution for a continuous fading law.
pub fn min_expected_distortion_continuous(
    fading: &ContinuousFading,
    b: f64,
    total_power: f64,
) -> Result<ContinuousSolution> {
    let profile = PowerProfile::new(fading, b)?;
    solve_with_profile(profile, total_power)
}

/// Like [`min_expected_distortion_continuous`], reusing a profile.
pub fn solve_with_profile(profile: PowerProfile, total_power: f64) -> Result<ContinuousSolution> {
    let boundary = profile.lower_boundary(total_power)?;
    let gp = boundary.gamma_p;
    let min_expected_distortion = if gp > 0.0 && !boundary.saturated {
        profile.fading.cdf(gp) + profile.distortion(gp)?
    } else if gp > 0.0 {
        // Bottom of a support bounded away from zero.
        profile.distortion(gp)?
    } else {
        1.0
    };
    let monotone = if gp > 0.0 { check_monotone(&profile, gp)? } else { true };
    Ok(ContinuousSolution { profile, total_power, boundary, min_expected_distortion, monotone })
}

fn check_monotone(profile: &PowerProfile, gamma_p: f64) -> Result<bool> {
    let (lo, hi) = (libm::log(gamma_p), libm::log(profile.gamma_o));
    let mut prev = f64::INFINITY;
    for i in 0..=MONOTONE_CHECK_POINTS {
        let g = libm::exp(lo + (hi - lo) * i as f64 / MONOTONE_CHECK_POINTS as f64).min(profile.gamma_o);
        let u = profile.cumulative_power(g)?;
        if u > prev + 1e-12 * (1.0 + prev.abs()) {
            return Ok(false);
        }
        prev = u;
    }
    Ok(true)
}
