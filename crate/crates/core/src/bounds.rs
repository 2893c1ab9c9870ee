//! Reference curves: transmitter-side channel knowledge, unbounded
//! diversity, and the high-SNR distortion exponent.

use alloc::format;
use alloc::vec::Vec;

use crate::discrete_alloc::db_to_linear;
use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::fading::{ContinuousFading, DiscreteFading};
use crate::numeric::Quadrature;

/// Tail mass dropped when truncating continuous laws.
pub const TAIL_MASS: f64 = 1e-12;

/// Minimum number of points for a distortion-exponent fit.
pub const MIN_EXPONENT_POINTS: usize = 5;

fn check_inputs(total_power: f64, b: f64) -> Result<()> {
    require_nonnegative("total_power", total_power)?;
    if !total_power.is_finite() {
        return Err(invalid("total_power", "must be finite"));
    }
    require_positive("b", b)
}

/// `sum_k p_k (1 + gamma_k P)^{-b}`, outage included: with the state known,
/// all power goes to the one layer that state can decode.
pub fn csit_quantized(fading: &DiscreteFading, total_power: f64, b: f64) -> Result<f64> {
    check_inputs(total_power, b)?;
    Ok(fading.outage_prob()
        + fading.states().iter().map(|s| s.prob * libm::pow(1.0 + s.gamma * total_power, -b)).sum::<f64>())
}

/// `int f(gamma) (1 + gamma P)^{-b} d gamma`, truncated where the tail
/// mass drops below [`TAIL_MASS`].
pub fn csit_perfect(fading: &ContinuousFading, total_power: f64, b: f64) -> Result<f64> {
    check_inputs(total_power, b)?;
    if total_power == 0.0 {
        return Ok(1.0);
    }
    let quad = Quadrature::with_tolerances(1e-12, 1e-9);
    let lo = fading.lower_support();
    let hi = fading.upper_support(TAIL_MASS);
    let mut cuts = Vec::new();
    cuts.push(lo);
    if fading.breakpoints().is_empty() {
        // Split at the mean so peaked (high-diversity) laws get resolved.
        let m = fading.mean();
        if m > lo && m < hi {
            cuts.push(m);
        }
    } else {
        cuts.extend(fading.breakpoints().iter().copied().filter(|&x| x > lo && x < hi));
    }
    cuts.push(hi);
    let mut total = 0.0;
    for w in cuts.windows(2) {
        total += quad.integrate(|g| fading.pdf(g) * libm::pow(1.0 + g * total_power, -b), w[0], w[1])?.value;
    }
    Ok(total)
}

/// `(1 + mean P)^{-b}`: the channel gain is constant at its mean.
pub fn infinite_diversity(mean_gain: f64, total_power: f64, b: f64) -> Result<f64> {
    require_positive("mean_gain", mean_gain)?;
    check_inputs(total_power, b)?;
    Ok(libm::pow(1.0 + mean_gain * total_power, -b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    CsitQuantized,
    CsitPerfect,
    NoCsit,
    InfiniteDiversity,
}

impl BoundKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::CsitQuantized => "csit_quantized",
            Self::CsitPerfect => "csit_perfect",
            Self::NoCsit => "no_csit",
            Self::InfiniteDiversity => "infinite_diversity",
        }
    }
}

/// `(snr_db, E[D])` points of one reference curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCurve {
    pub kind: BoundKind,
    pub points: Vec<(f64, f64)>,
}

impl BoundCurve {
    /// Checks `E[D]` in `(0, 1]` and nonincreasing in SNR (SNRs sorted).
    pub fn new(kind: BoundKind, mut points: Vec<(f64, f64)>) -> Result<Self> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        if let Some(&(s, d)) = points.iter().find(|p| !(p.1 > 0.0 && p.1 <= 1.0 + 1e-12)) {
            return Err(Error::Numerical(format!("{} at {s} dB is {d}, outside (0, 1]", kind.name())));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].1 > w[0].1 * (1.0 + 1e-9) + 1e-15) {
            return Err(Error::Numerical(format!("{} increases from {} dB to {} dB", kind.name(), w[0].0, w[1].0)));
        }
        Ok(Self { kind, points })
    }

    /// Evaluates `eval(P)` at each SNR.
    pub fn sample<F: FnMut(f64) -> Result<f64>>(kind: BoundKind, snr_db: &[f64], mut eval: F) -> Result<Self> {
        if snr_db.is_empty() {
            return Err(invalid("snr_db", "curve needs at least one SNR"));
        }
        let points = snr_db.iter().map(|&s| eval(db_to_linear(s)).map(|d| (s, d))).collect::<Result<Vec<_>>>()?;
        Self::new(kind, points)
    }
}

/// Least-squares slope of `-log10 E[D]` against `log10 P` over the points
/// whose SNR lies in `[lo_db, hi_db]`.
pub fn distortion_exponent_estimate(points: &[(f64, f64)], lo_db: f64, hi_db: f64) -> Result<f64> {
    let sel: Vec<(f64, f64)> =
        points.iter().filter(|p| p.0 >= lo_db && p.0 <= hi_db).map(|&(s, d)| (s / 10.0, -libm::log10(d))).collect();
    if sel.len() < MIN_EXPONENT_POINTS {
        return Err(invalid(
            "snr_window",
            format!("{} points in [{lo_db}, {hi_db}] dB; need at least {MIN_EXPONENT_POINTS}", sel.len()),
        ));
    }
    if sel.iter().any(|p| !p.1.is_finite()) {
        return Err(Error::Numerical("E[D] must be positive for the exponent fit".into()));
    }
    let n = sel.len() as f64;
    let mx = sel.iter().map(|p| p.0).sum::<f64>() / n;
    let my = sel.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = sel.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("snr_window", "all SNRs in the window coincide"));
    }
    let sxy: f64 = sel.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(sxy / sxx)
}
