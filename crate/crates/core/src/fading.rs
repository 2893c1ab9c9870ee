//! Fading-gain distributions: discrete pmfs over ordered gain levels and
//! continuous densities (Rayleigh, Erlang diversity, tabulated).
//!
//! All gains are channel *power* gains on a linear scale.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, require_positive, Error, Result};
use crate::numeric::gamma::regularized_gamma;

/// Tolerance on `outage + sum(probs) == 1` for discrete pmfs.
pub const PMF_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FadingState {
    pub gamma: f64,
    pub prob: f64,
}

/// Discrete fading pmf: `M` strictly increasing positive gains plus an outage
/// atom at zero gain.
///
/// States whose expected gain `prob * gamma` is zero are removed at
/// construction and listed in [`DiscreteFading::dropped`]; zero-gain mass is
/// folded into the outage probability.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFading {
    states: Vec<FadingState>,
    outage_prob: f64,
    dropped: Vec<FadingState>,
}

impl DiscreteFading {
    pub fn new(states: Vec<FadingState>, outage_prob: f64) -> Result<Self> {
        if !(outage_prob.is_finite() && outage_prob >= 0.0) {
            return Err(invalid("outage_prob", format!("must be in [0, 1], got {outage_prob}")));
        }
        let mut kept = Vec::with_capacity(states.len());
        let mut dropped = Vec::new();
        let mut outage = outage_prob;
        for s in states {
            if !(s.gamma.is_finite() && s.gamma >= 0.0) {
                return Err(invalid("gamma", format!("must be finite and >= 0, got {}", s.gamma)));
            }
            if !(s.prob.is_finite() && s.prob >= 0.0) {
                return Err(invalid("prob", format!("must be finite and >= 0, got {}", s.prob)));
            }
            if s.prob * s.gamma > 0.0 {
                kept.push(s);
            } else {
                if s.gamma == 0.0 {
                    outage += s.prob;
                }
                dropped.push(s);
            }
        }
        for w in kept.windows(2) {
            if w[1].gamma <= w[0].gamma {
                return Err(invalid(
                    "gamma",
                    format!("gains must be strictly increasing ({} then {})", w[0].gamma, w[1].gamma),
                ));
            }
        }
        let total: f64 = outage + kept.iter().map(|s| s.prob).sum::<f64>();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(invalid("prob", format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { states: kept, outage_prob: outage, dropped })
    }

    /// Uniform pmf over the given gains with no outage.
    pub fn uniform(gammas: &[f64]) -> Result<Self> {
        let p = 1.0 / gammas.len() as f64;
        let states = gammas.iter().map(|&gamma| FadingState { gamma, prob: p }).collect();
        Self::new(states, 0.0)
    }

    pub fn states(&self) -> &[FadingState] {
        &self.states
    }

    /// Number of layers `M`.
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn outage_prob(&self) -> f64 {
        self.outage_prob
    }

    pub fn dropped(&self) -> &[FadingState] {
        &self.dropped
    }

    pub fn gammas(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.gamma)
    }

    pub fn probs(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.states.iter().map(|s| s.prob)
    }

    /// Probability of realized state `k` with `k = 0` the outage atom.
    pub fn prob(&self, k: usize) -> f64 {
        if k == 0 {
            self.outage_prob
        } else {
            self.states[k - 1].prob
        }
    }

    /// Gain of state `k` with `gamma_0 = 0`.
    pub fn gamma(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.states[k - 1].gamma
        }
    }

    /// Index `k` of the highest state with `gamma_k <= gamma` (0 for outage).
    pub fn quantize(&self, gamma: f64) -> usize {
        self.states.partition_point(|s| s.gamma <= gamma)
    }
}

/// Probability mass at zero gain.
pub fn outage_probability(fading: &DiscreteFading) -> f64 {
    fading.outage_prob()
}

/// Uniform-grid discretization of Rayleigh fading to the closest lower level.
///
/// Levels are `gamma_i = i * truncation / levels`; the mass of
/// `[gamma_i, gamma_{i+1})` goes to level `i`, the tail beyond `truncation`
/// to the top level, and `[0, gamma_1)` to outage.
pub fn discretize_rayleigh(mean_gain: f64, truncation: f64, levels: usize) -> Result<DiscreteFading> {
    require_positive("mean_gain", mean_gain)?;
    require_positive("truncation", truncation)?;
    if levels == 0 {
        return Err(invalid("levels", "must be >= 1"));
    }
    let step = truncation / levels as f64;
    let cell = -libm::expm1(-step / mean_gain);
    let mut states = Vec::with_capacity(levels);
    for i in 1..levels {
        let lower = i as f64 * step;
        let prob = libm::exp(-lower / mean_gain) * cell;
        states.push(FadingState { gamma: lower, prob });
    }
    states.push(FadingState { gamma: truncation, prob: libm::exp(-truncation / mean_gain) });
    DiscreteFading::new(states, cell)
}

/// Continuous fading-gain law.
#[derive(Debug, Clone, PartialEq)]
pub enum ContinuousFading {
    Rayleigh { mean_gain: f64 },
    Erlang { diversity: u32, mean_gain: f64 },
    Tabulated(TabulatedPdf),
}

impl ContinuousFading {
    pub fn rayleigh(mean_gain: f64) -> Result<Self> {
        require_positive("mean_gain", mean_gain)?;
        Ok(Self::Rayleigh { mean_gain })
    }

    pub fn erlang(diversity: u32, mean_gain: f64) -> Result<Self> {
        if diversity == 0 {
            return Err(invalid("diversity", "must be >= 1"));
        }
        require_positive("mean_gain", mean_gain)?;
        Ok(Self::Erlang { diversity, mean_gain })
    }

    pub fn tabulated(gammas: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        TabulatedPdf::new(gammas, pdf).map(Self::Tabulated)
    }

    /// `(L, mean)` for the Erlang family; Rayleigh is `L = 1`.
    fn erlang_params(&self) -> Option<(u32, f64)> {
        match *self {
            Self::Rayleigh { mean_gain } => Some((1, mean_gain)),
            Self::Erlang { diversity, mean_gain } => Some((diversity, mean_gain)),
            Self::Tabulated(_) => None,
        }
    }

    pub fn pdf(&self, gamma: f64) -> f64 {
        match self.erlang_params() {
            Some((l, mean)) => erlang_density(l, mean, gamma),
            None => self.table().pdf(gamma),
        }
    }

    /// Natural log of the density; `-inf` where the density vanishes.
    pub fn ln_pdf(&self, gamma: f64) -> f64 {
        match self.erlang_params() {
            Some((l, mean)) => erlang_ln_density(l, mean, gamma),
            None => libm::log(self.table().pdf(gamma)),
        }
    }

    pub fn cdf(&self, gamma: f64) -> f64 {
        self.cdf_pair(gamma).0
    }

    /// `(F(gamma), 1 - F(gamma))`, each without cancellation.
    pub fn cdf_pair(&self, gamma: f64) -> (f64, f64) {
        if gamma <= 0.0 {
            return (0.0, 1.0);
        }
        match self.erlang_params() {
            Some((1, mean)) => {
                let x = gamma / mean;
                (-libm::expm1(-x), libm::exp(-x))
            }
            Some((l, mean)) => regularized_gamma(l as f64, l as f64 * gamma / mean),
            None => {
                let c = self.table().cdf(gamma);
                (c, 1.0 - c)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.erlang_params() {
            Some((_, mean)) => mean,
            None => self.table().mean(),
        }
    }

    /// Analytic `f'(gamma) / f(gamma)`; `None` where the density vanishes.
    pub fn log_pdf_derivative(&self, gamma: f64) -> Option<f64> {
        match self.erlang_params() {
            Some((l, mean)) => Some((l as f64 - 1.0) / gamma - l as f64 / mean),
            None => self.table().log_derivative(gamma),
        }
    }

    /// Smallest gain beyond which the remaining probability is below `tail`.
    pub fn upper_support(&self, tail: f64) -> f64 {
        match self.erlang_params() {
            Some((1, mean)) => -mean * libm::log(tail) * (1.0 + 1e-12),
            Some(_) => {
                let mut hi = self.mean().max(f64::MIN_POSITIVE);
                while self.cdf_pair(hi).1 > tail {
                    hi *= 2.0;
                }
                let mut lo = 0.0;
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if self.cdf_pair(mid).1 > tail {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
            None => self.table().upper(),
        }
    }

    /// Lowest gain with positive density (0 for the Erlang family).
    pub fn lower_support(&self) -> f64 {
        match self {
            Self::Tabulated(t) => t.lower(),
            _ => 0.0,
        }
    }

    /// Gains where the density is not smooth.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            Self::Tabulated(t) => t.breakpoints(),
            _ => &[],
        }
    }

    fn table(&self) -> &TabulatedPdf {
        match self {
            Self::Tabulated(t) => t,
            _ => unreachable!("table() on a parametric law"),
        }
    }
}

/// Erlang density `(L/mean)^L g^{L-1} e^{-L g / mean} / (L-1)!`.
pub fn erlang_pdf(diversity: u32, mean_gain: f64, gamma: f64) -> Result<f64> {
    if diversity == 0 {
        return Err(invalid("diversity", "must be >= 1"));
    }
    require_positive("mean_gain", mean_gain)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(invalid("gamma", format!("must be finite and >= 0, got {gamma}")));
    }
    Ok(erlang_density(diversity, mean_gain, gamma))
}

fn erlang_density(l: u32, mean: f64, gamma: f64) -> f64 {
    if gamma < 0.0 {
        return 0.0;
    }
    if l == 1 {
        return libm::exp(-gamma / mean) / mean;
    }
    if gamma == 0.0 {
        return 0.0;
    }
    libm::exp(erlang_ln_density(l, mean, gamma))
}

fn erlang_ln_density(l: u32, mean: f64, gamma: f64) -> f64 {
    if gamma < 0.0 {
        return f64::NEG_INFINITY;
    }
    if l == 1 {
        return -gamma / mean - libm::log(mean);
    }
    if gamma == 0.0 {
        return f64::NEG_INFINITY;
    }
    let lf = l as f64;
    lf * libm::log(lf / mean) + (lf - 1.0) * libm::log(gamma) - lf * gamma / mean - libm::lgamma(lf)
}

/// Density given by samples, linearly interpolated between them and
/// normalized to unit mass (so the cdf is piecewise quadratic).
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedPdf {
    gammas: Vec<f64>,
    density: Vec<f64>,
    cdf: Vec<f64>,
    mean: f64,
}

impl TabulatedPdf {
    pub fn new(gammas: Vec<f64>, pdf: Vec<f64>) -> Result<Self> {
        if gammas.len() != pdf.len() {
            return Err(Error::DimensionMismatch { expected: gammas.len(), got: pdf.len() });
        }
        if gammas.len() < 2 {
            return Err(invalid("gamma", "tabulated pdf needs at least two samples"));
        }
        if !(gammas[0].is_finite() && gammas[0] >= 0.0) {
            return Err(invalid("gamma", "first sample must be >= 0"));
        }
        for w in gammas.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(invalid("gamma", "samples must be finite and strictly increasing"));
            }
        }
        if pdf.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(invalid("pdf", "samples must be finite and >= 0"));
        }
        let total: f64 = gammas.windows(2).zip(pdf.windows(2)).map(|(g, f)| 0.5 * (f[0] + f[1]) * (g[1] - g[0])).sum();
        if !(total > 0.0) {
            return Err(invalid("pdf", "samples integrate to zero"));
        }
        let density: Vec<f64> = pdf.iter().map(|f| f / total).collect();
        let mut cdf = Vec::with_capacity(gammas.len());
        let mut acc = 0.0;
        let mut mean = 0.0;
        cdf.push(0.0);
        for (g, f) in gammas.windows(2).zip(density.windows(2)) {
            let h = g[1] - g[0];
            acc += 0.5 * (f[0] + f[1]) * h;
            mean += h / 6.0 * (f[0] * (2.0 * g[0] + g[1]) + f[1] * (g[0] + 2.0 * g[1]));
            cdf.push(acc);
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;
        Ok(Self { gammas, density, cdf, mean })
    }

    fn interval(&self, gamma: f64) -> Option<usize> {
        if !(gamma >= self.gammas[0]) || gamma >= self.gammas[self.gammas.len() - 1] {
            return None;
        }
        Some(self.gammas.partition_point(|&g| g <= gamma) - 1)
    }

    fn slope(&self, k: usize) -> f64 {
        (self.density[k + 1] - self.density[k]) / (self.gammas[k + 1] - self.gammas[k])
    }

    pub fn pdf(&self, gamma: f64) -> f64 {
        self.interval(gamma).map_or(0.0, |k| self.density[k] + self.slope(k) * (gamma - self.gammas[k])).max(0.0)
    }

    /// `f'/f` inside a sample interval (right derivative at samples).
    pub fn log_derivative(&self, gamma: f64) -> Option<f64> {
        let k = self.interval(gamma)?;
        let f = self.pdf(gamma);
        (f > 0.0).then(|| self.slope(k) / f)
    }

    pub fn cdf(&self, gamma: f64) -> f64 {
        if !(gamma >= self.gammas[0]) {
            return 0.0;
        }
        match self.interval(gamma) {
            None => 1.0,
            Some(k) => {
                let x = gamma - self.gammas[k];
                let c = self.cdf[k] + x * (self.density[k] + 0.5 * self.slope(k) * x);
                c.clamp(self.cdf[k], self.cdf[k + 1])
            }
        }
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn lower(&self) -> f64 {
        self.gammas[0]
    }

    pub fn upper(&self) -> f64 {
        self.gammas[self.gammas.len() - 1]
    }

    pub fn max_density(&self) -> f64 {
        self.density.iter().copied().fold(0.0, f64::max)
    }

    /// Sample gains, normalized densities, and cdf values at each sample.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.gammas.iter().zip(&self.density).zip(&self.cdf).map(|((&g, &f), &c)| (g, f, c))
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.gammas
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::integrate;
    use alloc::vec;

    #[test]
    fn discretize_grid_and_tail() {
        let d = discretize_rayleigh(1.0, 2.0, 24).unwrap();
        assert_eq!(d.len(), 24);
        for (i, g) in d.gammas().enumerate() {
            assert!((g - (i + 1) as f64 / 12.0).abs() < 1e-15);
        }
        let tail = d.states()[23].prob;
        let oracle = integrate(|x| libm::exp(-x), 2.0, 80.0).unwrap();
        assert!((tail - oracle).abs() < 1e-12);
        assert!((tail - 0.135_335_283_236_612_7).abs() < 1e-15);
    }

    #[test]
    fn discretize_single_level() {
        let d = discretize_rayleigh(1.0, 1.0, 1).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.gamma(1), 1.0);
        assert!((d.prob(1) - libm::exp(-1.0)).abs() < 1e-15);
        assert!((d.outage_prob() - (1.0 - libm::exp(-1.0))).abs() < 1e-15);
    }

    #[test]
    fn outage_matches_quadrature() {
        let d = discretize_rayleigh(1.0, 2.0, 24).unwrap();
        let oracle = integrate(|x| libm::exp(-x), 0.0, 1.0 / 12.0).unwrap();
        assert!((outage_probability(&d) - oracle).abs() < 1e-13);
        assert!((outage_probability(&d) - 0.079_955_585_370_676).abs() < 1e-12);
        let finer = discretize_rayleigh(1.0, 2.0, 48).unwrap();
        assert!(outage_probability(&finer) < outage_probability(&d));
    }

    #[test]
    fn discretize_rejects_bad_parameters() {
        assert!(discretize_rayleigh(0.0, 2.0, 24).is_err());
        assert!(discretize_rayleigh(1.0, -2.0, 24).is_err());
        assert!(discretize_rayleigh(1.0, 2.0, 0).is_err());
    }

    #[test]
    fn zero_expected_gain_states_are_dropped() {
        let d = DiscreteFading::new(
            vec![
                FadingState { gamma: 0.0, prob: 0.1 },
                FadingState { gamma: 1.0, prob: 0.0 },
                FadingState { gamma: 2.0, prob: 0.9 },
            ],
            0.0,
        )
        .unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.dropped().len(), 2);
        assert!((d.outage_prob() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn pmf_validation() {
        let bad_sum = DiscreteFading::new(vec![FadingState { gamma: 1.0, prob: 0.5 }], 0.4);
        assert!(bad_sum.is_err());
        let unsorted = DiscreteFading::new(
            vec![FadingState { gamma: 2.0, prob: 0.5 }, FadingState { gamma: 1.0, prob: 0.5 }],
            0.0,
        );
        assert!(unsorted.is_err());
    }

    #[test]
    fn quantize_to_lower_level() {
        let d = discretize_rayleigh(1.0, 2.0, 4).unwrap();
        assert_eq!(d.quantize(0.1), 0);
        assert_eq!(d.quantize(0.5), 1);
        assert_eq!(d.quantize(0.99), 1);
        assert_eq!(d.quantize(1.0), 2);
        assert_eq!(d.quantize(7.0), 4);
    }

    #[test]
    fn erlang_values() {
        assert_eq!(erlang_pdf(1, 1.0, 0.0).unwrap(), 1.0);
        for &g in &[0.0, 0.3, 1.0, 2.5, 10.0] {
            assert!((erlang_pdf(1, 1.0, g).unwrap() - libm::exp(-g)).abs() < 1e-16);
        }
        let v = erlang_pdf(2, 1.0, 1.0).unwrap();
        // convolution of two rate-2 exponentials evaluated at 1
        let conv = integrate(|s| 2.0 * libm::exp(-2.0 * s) * 2.0 * libm::exp(-2.0 * (1.0 - s)), 0.0, 1.0).unwrap();
        assert!((v - conv).abs() < 1e-12);
        assert!((v - 4.0 * libm::exp(-2.0)).abs() < 1e-15);
        assert!(erlang_pdf(0, 1.0, 1.0).is_err());
        assert!(erlang_pdf(2, 1.0, -1.0).is_err());
    }

    #[test]
    fn erlang_one_is_rayleigh() {
        let r = ContinuousFading::rayleigh(1.7).unwrap();
        let e = ContinuousFading::erlang(1, 1.7).unwrap();
        for i in 0..200 {
            let g = i as f64 * 0.05;
            assert_eq!(r.pdf(g), e.pdf(g));
            assert_eq!(r.cdf(g), e.cdf(g));
            assert_eq!(r.log_pdf_derivative(g + 0.01), e.log_pdf_derivative(g + 0.01));
        }
    }

    #[test]
    fn erlang_normalization_and_mean() {
        for &l in &[1u32, 2, 3, 8, 64] {
            let f = ContinuousFading::erlang(l, 1.3).unwrap();
            let upper = 1.3 * (1.0 + 40.0 / libm::sqrt(l as f64));
            let mass = integrate(|g| f.pdf(g), 0.0, upper).unwrap();
            let mean = integrate(|g| g * f.pdf(g), 0.0, upper).unwrap();
            assert!((mass - 1.0).abs() < 1e-8, "L={l}: {mass}");
            assert!((mean - 1.3).abs() < 1e-6, "L={l}: {mean}");
            // cdf consistent with pdf
            let c = integrate(|g| f.pdf(g), 0.0, 0.9).unwrap();
            assert!((f.cdf(0.9) - c).abs() < 1e-10);
        }
    }

    #[test]
    fn upper_support_tail() {
        for f in [ContinuousFading::rayleigh(2.0).unwrap(), ContinuousFading::erlang(5, 1.0).unwrap()] {
            let g = f.upper_support(1e-12);
            assert!(f.cdf_pair(g).1 <= 1e-12);
            assert!(f.cdf_pair(0.9 * g).1 > 1e-12);
        }
    }

    #[test]
    fn tabulated_cdf_is_monotone_and_normalized() {
        let gammas: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
        let pdf: Vec<f64> = gammas.iter().map(|g| libm::exp(-g)).collect();
        let t = ContinuousFading::tabulated(gammas, pdf).unwrap();
        let mut prev = 0.0;
        for i in 0..=1100 {
            let c = t.cdf(i as f64 * 0.01);
            assert!(c >= prev);
            prev = c;
        }
        assert_eq!(t.cdf(10.0), 1.0);
        assert!((t.cdf(1.0) - (1.0 - libm::exp(-1.0))).abs() < 2e-3);
        let mass = integrate(|g| t.pdf(g), 0.0, 10.0).unwrap();
        assert!((mass - 1.0).abs() < 1e-9);
        let mean = integrate(|g| g * t.pdf(g), 0.0, 10.0).unwrap();
        assert!((t.mean() - mean).abs() < 1e-9);
        assert!(t.mean() > 0.9 && t.mean() < 1.1);
        let partial = integrate(|g| t.pdf(g), 0.0, 2.345).unwrap();
        assert!((t.cdf(2.345) - partial).abs() < 1e-9);
    }

    #[test]
    fn tabulated_rejects_malformed_input() {
        assert!(ContinuousFading::tabulated(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(ContinuousFading::tabulated(vec![1.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(ContinuousFading::tabulated(vec![0.0, 1.0], vec![-1.0, 1.0]).is_err());
        assert!(ContinuousFading::tabulated(vec![0.0, 1.0], vec![0.0, 0.0]).is_err());
    }
}
