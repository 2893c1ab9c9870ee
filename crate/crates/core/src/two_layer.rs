//! Optimal power split between a layer and the aggregate layer above it.
//!
//! With total power `T1`, gain `alpha` on the lower layer and `beta > alpha`
//! on the higher one, the weighted distortion
//!
//! ```text
//! D1(T2) = ((1 + alpha T1) / (1 + alpha T2))^{-b} [u + (1 + beta T2)^{-b} w]
//! ```
//!
//! is minimized at `T2* = min(U2, T1)`, where the ceiling `U2` depends on the
//! layer parameters but not on `T1`.

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLayerParams {
    /// `u`: weight of the lower layer.
    pub weight_low: f64,
    /// `w`: weight of the higher (aggregate) layer.
    pub weight_high: f64,
    /// `alpha`: gain of the lower layer.
    pub gain_low: f64,
    /// `beta`: gain of the higher layer.
    pub gain_high: f64,
    /// `b`: channel uses per source symbol.
    pub bandwidth_ratio: f64,
}

impl TwoLayerParams {
    pub fn new(weight_low: f64, weight_high: f64, gain_low: f64, gain_high: f64, bandwidth_ratio: f64) -> Result<Self> {
        let params = Self { weight_low, weight_high, gain_low, gain_high, bandwidth_ratio };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        require_nonnegative("u", self.weight_low)?;
        require_nonnegative("w", self.weight_high)?;
        require_positive("alpha", self.gain_low)?;
        require_positive("b", self.bandwidth_ratio)?;
        if !(self.gain_high > self.gain_low) || !self.gain_high.is_finite() {
            return Err(invalid("beta", "must be finite and exceed alpha"));
        }
        if self.weight_low == 0.0 && self.weight_high == 0.0 {
            return Err(Error::DegenerateWeights);
        }
        Ok(())
    }

    /// The weighted distortion objective at split `high` of `total`.
    pub fn weighted_distortion(&self, total: f64, high: f64) -> f64 {
        let b = self.bandwidth_ratio;
        let ratio = (1.0 + self.gain_low * total) / (1.0 + self.gain_low * high);
        libm::pow(ratio, -b) * (self.weight_low + libm::pow(1.0 + self.gain_high * high, -b) * self.weight_high)
    }
}

/// Power ceiling for the higher layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ceiling {
    Finite(f64),
    /// `u = 0`: the higher layer absorbs all available power.
    Unbounded,
}

impl Ceiling {
    pub fn finite(self) -> Option<f64> {
        match self {
            Ceiling::Finite(v) => Some(v),
            Ceiling::Unbounded => None,
        }
    }

    /// `min(ceiling, total)`.
    pub fn clamp(self, total: f64) -> f64 {
        match self {
            Ceiling::Finite(v) => v.min(total),
            Ceiling::Unbounded => total,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLayerSplit {
    pub ceiling: Ceiling,
    /// `T2*`: power given to the higher layer.
    pub assigned_high: f64,
    /// `D1*`: minimum weighted distortion.
    pub min_distortion: f64,
    /// `W1`, set when the ceiling (not the total) binds.
    pub aggregate_weight: Option<f64>,
}

impl TwoLayerSplit {
    pub fn is_constrained(&self) -> bool {
        self.aggregate_weight.is_none()
    }
}

/// `U2`, the most power worth giving the higher layer.
pub fn power_ceiling(params: &TwoLayerParams) -> Result<Ceiling> {
    params.validate()?;
    Ok(ceiling_unchecked(params))
}

pub(crate) fn ceiling_unchecked(params: &TwoLayerParams) -> Ceiling {
    let TwoLayerParams { weight_low: u, weight_high: w, gain_low: alpha, gain_high: beta, bandwidth_ratio: b } =
        *params;
    // beta/alpha <= 1 + u/w, cleared of denominators
    if w * (beta - alpha) <= u * alpha {
        return Ceiling::Finite(0.0);
    }
    if u == 0.0 {
        return Ceiling::Unbounded;
    }
    let base = (w / u) * (beta / alpha - 1.0);
    Ceiling::Finite((libm::pow(base, 1.0 / (1.0 + b)) - 1.0) / beta)
}

/// `W1 = (1 + alpha U2)^b [u + (1 + beta U2)^{-b} w]`.
pub fn aggregate_weight(params: &TwoLayerParams) -> Result<f64> {
    match power_ceiling(params)? {
        Ceiling::Finite(ceiling) => Ok(weight_at(params, ceiling)),
        Ceiling::Unbounded => Err(Error::UnboundedCeiling),
    }
}

pub(crate) fn weight_at(params: &TwoLayerParams, ceiling: f64) -> f64 {
    let b = params.bandwidth_ratio;
    libm::pow(1.0 + params.gain_low * ceiling, b)
        * (params.weight_low + libm::pow(1.0 + params.gain_high * ceiling, -b) * params.weight_high)
}

pub fn optimal_split(params: &TwoLayerParams, total_power: f64) -> Result<TwoLayerSplit> {
    require_nonnegative("total_power", total_power)?;
    let ceiling = power_ceiling(params)?;
    let b = params.bandwidth_ratio;
    let split = match ceiling {
        Ceiling::Finite(c) if c <= total_power => {
            let weight = weight_at(params, c);
            TwoLayerSplit {
                ceiling,
                assigned_high: c,
                min_distortion: libm::pow(1.0 + params.gain_low * total_power, -b) * weight,
                aggregate_weight: Some(weight),
            }
        }
        _ => TwoLayerSplit {
            ceiling,
            assigned_high: total_power,
            min_distortion: params.weight_low
                + libm::pow(1.0 + params.gain_high * total_power, -b) * params.weight_high,
            aggregate_weight: None,
        },
    };
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    /// Golden-section search of a unimodal function on `[lo, hi]`.
    fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
        let inv_phi = (libm::sqrt(5.0) - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let (mut f1, mut f2) = (f(x1), f(x2));
        for _ in 0..300 {
            if f1 < f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                f2 = f(x2);
            }
        }
        let x = 0.5 * (lo + hi);
        (x, f(x))
    }

    fn example() -> TwoLayerParams {
        TwoLayerParams::new(0.5, 0.5, 1.0, 4.0, 1.0).unwrap()
    }

    #[test]
    fn ceiling_zero_on_boundary() {
        let p = TwoLayerParams::new(0.5, 0.5, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(power_ceiling(&p).unwrap(), Ceiling::Finite(0.0));
    }

    #[test]
    fn ceiling_against_golden_section() {
        let p = example();
        let c = power_ceiling(&p).unwrap().finite().unwrap();
        assert!((c - (libm::sqrt(3.0) - 1.0) / 4.0).abs() < 1e-15);
        let (x, _) = golden_min(|t| p.weighted_distortion(1e6, t), 0.0, 1e6);
        assert!((x - c).abs() < 1e-6, "{x} vs {c}");
    }

    #[test]
    fn constrained_branch() {
        let s = optimal_split(&example(), 0.05).unwrap();
        assert_eq!(s.assigned_high, 0.05);
        assert!(s.is_constrained());
        assert!((s.min_distortion - (0.5 + 0.5 / 1.2)).abs() < 1e-15);
        // grid over [0, 0.05]
        let grid_min =
            (0..=5000).map(|k| example().weighted_distortion(0.05, k as f64 * 1e-5)).fold(f64::INFINITY, f64::min);
        assert!(s.min_distortion <= grid_min + 1e-15);
    }

    #[test]
    fn unconstrained_branch() {
        let s = optimal_split(&example(), 1.0).unwrap();
        assert!((s.assigned_high - 0.183_012_701_892_219_3).abs() < 1e-12);
        let (x, fx) = golden_min(|t| example().weighted_distortion(1.0, t), 0.0, 1.0);
        assert!((x - s.assigned_high).abs() < 1e-7);
        assert!((fx - s.min_distortion).abs() < 1e-14);
        assert!((s.min_distortion - example().weighted_distortion(1.0, s.assigned_high)).abs() < 1e-15);
    }

    #[test]
    fn zero_total_power() {
        let s = optimal_split(&example(), 0.0).unwrap();
        assert_eq!(s.assigned_high, 0.0);
        assert_eq!(s.min_distortion, 1.0);
    }

    #[test]
    fn aggregate_weight_values() {
        let w = aggregate_weight(&example()).unwrap();
        let c = (libm::sqrt(3.0) - 1.0) / 4.0;
        let expected = (1.0 + c) * (0.5 + 0.5 / (1.0 + 4.0 * c));
        assert!((w - expected).abs() < 1e-15);
        assert!((w - 0.933_012_701_892_219_3).abs() < 1e-12);
        // (1 + alpha T1)^{-b} W1 is the grid minimum for T1 beyond the ceiling
        for &t1 in &[0.5, 1.0, 3.0] {
            let grid = (0..=20000)
                .map(|k| example().weighted_distortion(t1, t1 * k as f64 / 20000.0))
                .fold(f64::INFINITY, f64::min);
            let closed = w / (1.0 + t1);
            assert!(closed <= grid + 1e-15 && grid - closed < 1e-8);
        }
        let flat = TwoLayerParams::new(0.5, 0.5, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(aggregate_weight(&flat).unwrap(), 1.0);
    }

    #[test]
    fn unbounded_ceiling() {
        let p = TwoLayerParams::new(0.0, 1.0, 1.0, 3.0, 1.0).unwrap();
        assert_eq!(power_ceiling(&p).unwrap(), Ceiling::Unbounded);
        assert_eq!(aggregate_weight(&p), Err(Error::UnboundedCeiling));
        let s = optimal_split(&p, 2.0).unwrap();
        assert_eq!(s.assigned_high, 2.0);
        assert!((s.min_distortion - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_weights() {
        assert_eq!(TwoLayerParams::new(0.0, 0.0, 1.0, 2.0, 1.0), Err(Error::DegenerateWeights));
        assert!(TwoLayerParams::new(0.5, 0.5, 2.0, 1.0, 1.0).is_err());
    }

    fn params_strategy() -> impl Strategy<Value = TwoLayerParams> {
        (0.01f64..1.0, 0.01f64..1.0, 0.1f64..5.0, 1.01f64..20.0, 0.1f64..4.0)
            .prop_map(|(u, w, alpha, ratio, b)| TwoLayerParams::new(u, w, alpha, alpha * ratio, b).unwrap())
    }

    proptest! {
        #[test]
        fn split_is_global_minimum(p in params_strategy(), t in prop::sample::select(vec![0.1, 1.0, 10.0]),
                                   probes in prop::collection::vec(0.0f64..1.0, 200)) {
            let s = optimal_split(&p, t).unwrap();
            for x in probes {
                prop_assert!(s.min_distortion <= p.weighted_distortion(t, x * t) * (1.0 + 1e-12));
            }
            prop_assert!(s.min_distortion > 0.0 && s.min_distortion <= p.weight_low + p.weight_high);
        }

        #[test]
        fn ceiling_scale_invariant(p in params_strategy(), c in 0.01f64..100.0) {
            let scaled = TwoLayerParams { weight_low: c * p.weight_low, weight_high: c * p.weight_high, ..p };
            let a = power_ceiling(&p).unwrap().finite().unwrap();
            let b = power_ceiling(&scaled).unwrap().finite().unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a));
        }

        #[test]
        fn branches_agree_at_ceiling(p in params_strategy()) {
            let c = power_ceiling(&p).unwrap().finite().unwrap();
            let w = weight_at(&p, c);
            let b = p.bandwidth_ratio;
            let uncon = libm::pow(1.0 + p.gain_low * c, -b) * w;
            let con = p.weight_low + libm::pow(1.0 + p.gain_high * c, -b) * p.weight_high;
            prop_assert!((uncon - con).abs() <= 1e-10 * con);
        }

        #[test]
        fn aggregate_weight_not_above_total(p in params_strategy()) {
            let w = aggregate_weight(&p).unwrap();
            prop_assert!(w <= (p.weight_low + p.weight_high) * (1.0 + 1e-14));
        }
    }
}
