//! Convex distortion costs over the realized-distortion region.
//!
//! The realized distortions `D^(1) >= ... >= D^(M)` determine the cumulative
//! powers uniquely, and the power they need is
//!
//! ```text
//! T_1 = -1/gamma_1 + sum_i (1/gamma_i - 1/gamma_{i+1}) (D^(i))^{-1/b},   1/gamma_{M+1} = 0,
//! ```
//!
//! which is convex in `D`. Any convex cost of `D` (expected distortion,
//! mean-variance, user supplied) can therefore be minimized over a convex
//! set. [`minimize_cost`] does so with a primal log-barrier method.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::discrete_alloc::{realized_distortions, Allocation};
use crate::error::{invalid, require_positive, Error, Result};
use crate::fading::DiscreteFading;
use crate::numeric::linalg::{solve_spd, Matrix};

/// Smallest admissible realized distortion inside the solver.
pub const DISTORTION_FLOOR: f64 = 1e-12;

/// Realized distortions `D^(1..=M)`, nonincreasing and in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionVector {
    values: Vec<f64>,
}

impl DistortionVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!("realized distortion must be in (0, 1], got {v}")));
        }
        if values.first().is_some_and(|&v| v > 1.0) {
            return Err(Error::Domain(format!("realized distortion {} exceeds 1", values[0])));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Domain("realized distortions must be nonincreasing".into()));
        }
        Ok(Self { values })
    }

    /// `D^(1..=M)` realized by `alloc`.
    pub fn from_allocation(fading: &DiscreteFading, alloc: &Allocation, b: f64) -> Result<Self> {
        let mut d = realized_distortions(fading, alloc, b)?;
        d.remove(0);
        Self::new(d)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl core::ops::Deref for DistortionVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// `1/gamma_i - 1/gamma_{i+1}` with `1/gamma_{M+1} = 0`.
fn power_coefficients(fading: &DiscreteFading) -> Vec<f64> {
    let g: Vec<f64> = fading.gammas().collect();
    (0..g.len()).map(|i| 1.0 / g[i] - g.get(i + 1).map_or(0.0, |next| 1.0 / next)).collect()
}

fn check_len(fading: &DiscreteFading, len: usize) -> Result<()> {
    if fading.len() != len {
        return Err(Error::DimensionMismatch { expected: fading.len(), got: len });
    }
    Ok(())
}

/// Total power needed to realize the distortions `d = D^(1..=M)`.
pub fn power_required(d: &[f64], fading: &DiscreteFading, b: f64) -> Result<f64> {
    check_len(fading, d.len())?;
    require_positive("b", b)?;
    if fading.is_empty() {
        return Ok(0.0);
    }
    if let Some(v) = d.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("realized distortion must be > 0, got {v}")));
    }
    let total: f64 = power_coefficients(fading).iter().zip(d).map(|(c, &di)| c * libm::pow(di, -1.0 / b)).sum::<f64>()
        - 1.0 / fading.gamma(1);
    Ok(total.max(0.0))
}

/// Cumulative powers realizing `d`, rebuilt top-down via
/// `T_j = (T_{j+1} + 1/gamma_j) (D^(j)/D^(j-1))^{-1/b} - 1/gamma_j`.
///
/// Fails with [`Error::PowerDeficit`] when `d` needs more than `available_power`.
pub fn distortion_to_allocation(
    d: &DistortionVector,
    fading: &DiscreteFading,
    b: f64,
    available_power: f64,
) -> Result<Allocation> {
    check_len(fading, d.len())?;
    require_positive("b", b)?;
    let m = d.len();
    let mut cumulative = vec![0.0; m];
    let mut above = 0.0;
    for j in (0..m).rev() {
        let prev = if j == 0 { 1.0 } else { d[j - 1] };
        let inv_gain = 1.0 / fading.gamma(j + 1);
        let t = (above + inv_gain) * libm::pow(d[j] / prev, -1.0 / b) - inv_gain;
        // Equal neighbours give exactly zero incremental power.
        let t = if d[j] == prev { above } else { t.max(above) };
        cumulative[j] = t;
        above = t;
    }
    let required = cumulative.first().copied().unwrap_or(0.0);
    if required > available_power {
        return Err(Error::PowerDeficit { required, available: available_power, deficit: required - available_power });
    }
    Allocation::from_cumulative(cumulative)
}

/// A user-supplied convex cost of `D^(1..=M)`.
///
/// Convexity is trusted. The Hessian defaults to central differences of the
/// gradient.
pub trait DistortionCost: Send + Sync {
    fn value(&self, d: &[f64]) -> f64;
    fn gradient(&self, d: &[f64], grad: &mut [f64]);
    fn hessian(&self, d: &[f64], hess: &mut Matrix) {
        let n = d.len();
        let mut x = d.to_vec();
        let mut gp = vec![0.0; n];
        let mut gm = vec![0.0; n];
        for j in 0..n {
            let h = 1e-6 * d[j].abs().max(1e-6);
            x[j] = d[j] + h;
            self.gradient(&x, &mut gp);
            x[j] = d[j] - h;
            self.gradient(&x, &mut gm);
            x[j] = d[j];
            for i in 0..n {
                let v = (gp[i] - gm[i]) / (2.0 * h);
                hess.add(i, j, 0.5 * v);
                hess.add(j, i, 0.5 * v);
            }
        }
    }
}

#[derive(Clone)]
pub enum CostKind {
    /// `E[D]`.
    Expected,
    /// `E[D] + phi VAR[D]`.
    RiskSensitive {
        risk_aversion: f64,
    },
    Custom(Arc<dyn DistortionCost>),
}

impl fmt::Debug for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Expected => f.write_str("Expected"),
            Self::RiskSensitive { risk_aversion } => {
                f.debug_struct("RiskSensitive").field("risk_aversion", risk_aversion).finish()
            }
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Cost plus optional worst-case constraints.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub kind: CostKind,
    /// `E[D] <= max_expected`.
    pub max_expected: Option<f64>,
    /// `VAR[D] <= max_variance`.
    pub max_variance: Option<f64>,
    /// `(k, cap)`: `D^(k) <= cap` for 1-based state `k`.
    pub caps: Vec<(usize, f64)>,
}

impl CostSpec {
    pub fn expected() -> Self {
        Self::with_kind(CostKind::Expected)
    }

    pub fn risk_sensitive(risk_aversion: f64) -> Self {
        Self::with_kind(CostKind::RiskSensitive { risk_aversion })
    }

    pub fn custom(cost: Arc<dyn DistortionCost>) -> Self {
        Self::with_kind(CostKind::Custom(cost))
    }

    fn with_kind(kind: CostKind) -> Self {
        Self { kind, max_expected: None, max_variance: None, caps: Vec::new() }
    }

    pub fn validate(&self, layers: usize) -> Result<()> {
        if let CostKind::RiskSensitive { risk_aversion } = self.kind {
            if !(risk_aversion.is_finite() && risk_aversion >= 0.0) {
                return Err(invalid("phi", format!("must be finite and >= 0, got {risk_aversion}")));
            }
        }
        if let Some(v) = self.max_expected {
            if !(v > 0.0 && v <= 1.0) {
                return Err(invalid("max_expected", format!("must be in (0, 1], got {v}")));
            }
        }
        if let Some(v) = self.max_variance {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid("max_variance", format!("must be finite and > 0, got {v}")));
            }
        }
        for &(k, cap) in &self.caps {
            if k == 0 || k > layers {
                return Err(invalid("cap", format!("state index {k} outside 1..={layers}")));
            }
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(invalid("cap", format!("cap for state {k} must be in (0, 1], got {cap}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostEvaluation {
    pub cost: f64,
    pub expected: f64,
    pub variance: f64,
}

/// `E[D]` and `VAR[D]` over all states including outage (`D^(0) = 1`).
fn moments(probs: &[f64], outage: f64, d: &[f64]) -> (f64, f64) {
    let mean = outage + probs.iter().zip(d).map(|(p, x)| p * x).sum::<f64>();
    let var = outage * (1.0 - mean) * (1.0 - mean)
        + probs.iter().zip(d).map(|(p, x)| p * (x - mean) * (x - mean)).sum::<f64>();
    (mean, var)
}

/// Cost, expected distortion, and distortion variance at `d = D^(1..=M)`.
pub fn evaluate_cost(d: &[f64], fading: &DiscreteFading, spec: &CostSpec) -> Result<CostEvaluation> {
    check_len(fading, d.len())?;
    let probs: Vec<f64> = fading.probs().collect();
    let (expected, variance) = moments(&probs, fading.outage_prob(), d);
    let cost = match &spec.kind {
        CostKind::Expected => expected,
        CostKind::RiskSensitive { risk_aversion } => expected + risk_aversion * variance,
        CostKind::Custom(c) => c.value(d),
    };
    Ok(CostEvaluation { cost, expected, variance })
}

/// Analytic gradients of `E[D]` and `VAR[D]` with respect to `D^(1..=M)`.
pub fn moment_gradients(d: &[f64], fading: &DiscreteFading) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(fading, d.len())?;
    let probs: Vec<f64> = fading.probs().collect();
    let (mean, _) = moments(&probs, fading.outage_prob(), d);
    let var_grad = probs.iter().zip(d).map(|(p, x)| 2.0 * p * (x - mean)).collect();
    Ok((probs, var_grad))
}

/// Gradient of [`power_required`] with respect to `D^(1..=M)`.
pub fn power_gradient(d: &[f64], fading: &DiscreteFading, b: f64) -> Result<Vec<f64>> {
    check_len(fading, d.len())?;
    require_positive("b", b)?;
    Ok(power_coefficients(fading).iter().zip(d).map(|(c, &x)| -c / b * libm::pow(x, -1.0 / b - 1.0)).collect())
}

/// Solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct CostSolution {
    pub distortions: DistortionVector,
    pub allocation: Allocation,
    pub cost: f64,
    pub expected: f64,
    pub variance: f64,
    /// Max of scaled stationarity, complementary slackness, and primal violation.
    pub kkt_residual: f64,
    pub power_used: f64,
    pub newton_steps: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub initial_mu: f64,
    pub mu_factor: f64,
    /// Stop when `constraints * mu <= gap_tolerance * M`.
    pub gap_tolerance: f64,
    pub newton_tolerance: f64,
    pub max_newton: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { initial_mu: 1.0, mu_factor: 10.0, gap_tolerance: 1e-9, newton_tolerance: 1e-20, max_newton: 200 }
    }
}

enum Gradient {
    Sparse(Vec<(usize, f64)>),
    Dense(Vec<f64>),
}

#[derive(Debug, Clone)]
enum Constraint {
    /// `sum terms . x <= rhs`
    Linear {
        name: String,
        terms: Vec<(usize, f64)>,
        rhs: f64,
    },
    /// `sum c_i x_i^{-1/b} - offset <= 0`
    Power {
        coeffs: Vec<f64>,
        offset: f64,
        inv_b: f64,
    },
    Variance {
        limit: f64,
    },
}

struct Model<'a> {
    n: usize,
    probs: Vec<f64>,
    outage: f64,
    kind: &'a CostKind,
    hard: Vec<Constraint>,
    soft: Vec<Constraint>,
}

impl Constraint {
    fn name(&self) -> String {
        match self {
            Constraint::Linear { name, .. } => name.clone(),
            Constraint::Power { .. } => "power".into(),
            Constraint::Variance { .. } => "max_variance".into(),
        }
    }

    fn value(&self, model: &Model<'_>, x: &[f64]) -> f64 {
        match self {
            Constraint::Linear { terms, rhs, .. } => terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>() - rhs,
            Constraint::Power { coeffs, offset, inv_b } => {
                let mut s = 0.0;
                for (c, &xi) in coeffs.iter().zip(x) {
                    if !(xi > 0.0) {
                        return f64::INFINITY;
                    }
                    s += c * libm::pow(xi, -inv_b);
                }
                s - offset
            }
            Constraint::Variance { limit } => moments(&model.probs, model.outage, &x[..model.n]).1 - limit,
        }
    }

    fn gradient(&self, model: &Model<'_>, x: &[f64]) -> Gradient {
        match self {
            Constraint::Linear { terms, .. } => Gradient::Sparse(terms.clone()),
            Constraint::Power { coeffs, inv_b, .. } => {
                Gradient::Dense(coeffs.iter().zip(x).map(|(c, &xi)| -c * inv_b * libm::pow(xi, -inv_b - 1.0)).collect())
            }
            Constraint::Variance { .. } => {
                let (mean, _) = moments(&model.probs, model.outage, &x[..model.n]);
                Gradient::Dense(model.probs.iter().zip(x).map(|(p, xi)| 2.0 * p * (xi - mean)).collect())
            }
        }
    }

    fn add_hessian(&self, model: &Model<'_>, x: &[f64], scale: f64, hess: &mut Matrix) {
        match self {
            Constraint::Linear { .. } => {}
            Constraint::Power { coeffs, inv_b, .. } => {
                for (i, (c, &xi)) in coeffs.iter().zip(x).enumerate() {
                    hess.add(i, i, scale * c * inv_b * (inv_b + 1.0) * libm::pow(xi, -inv_b - 2.0));
                }
            }
            Constraint::Variance { .. } => add_variance_hessian(&model.probs, scale, hess),
        }
    }
}

/// `scale * 2 (diag(p) - p p^T)`.
fn add_variance_hessian(probs: &[f64], scale: f64, hess: &mut Matrix) {
    for (i, p) in probs.iter().enumerate() {
        hess.add(i, i, 2.0 * scale * p);
    }
    hess.add_outer(probs, -2.0 * scale);
}

impl Model<'_> {
    /// Objective value; adds `scale * grad` and `scale * hess` when requested.
    fn objective(&self, x: &[f64], scale: f64, grad: Option<&mut [f64]>, hess: Option<&mut Matrix>) -> f64 {
        let d = &x[..self.n];
        let (mean, var) = moments(&self.probs, self.outage, d);
        match self.kind {
            CostKind::Expected => {
                if let Some(g) = grad {
                    for (gi, p) in g.iter_mut().zip(&self.probs) {
                        *gi += scale * p;
                    }
                }
                mean
            }
            CostKind::RiskSensitive { risk_aversion: phi } => {
                if let Some(g) = grad {
                    for ((gi, p), xi) in g.iter_mut().zip(&self.probs).zip(d) {
                        *gi += scale * (p + phi * 2.0 * p * (xi - mean));
                    }
                }
                if let Some(h) = hess {
                    add_variance_hessian(&self.probs, scale * phi, h);
                }
                mean + phi * var
            }
            CostKind::Custom(c) => {
                if let Some(g) = grad {
                    let mut buf = vec![0.0; self.n];
                    c.gradient(d, &mut buf);
                    for (gi, bi) in g.iter_mut().zip(&buf) {
                        *gi += scale * bi;
                    }
                }
                if let Some(h) = hess {
                    let mut local = Matrix::zeros(self.n);
                    c.hessian(d, &mut local);
                    for i in 0..self.n {
                        for j in 0..self.n {
                            h.add(i, j, scale * local.get(i, j));
                        }
                    }
                }
                c.value(d)
            }
        }
    }

    fn constraint_count(&self) -> usize {
        self.hard.len() + self.soft.len()
    }
}

/// Which problem the barrier iterations are centering.
#[derive(Clone, Copy, PartialEq)]
enum Phase {
    /// Minimize the max soft-constraint violation `s` (variable index `n`).
    FindFeasible,
    Optimize,
}

struct Barrier<'a, 'b> {
    model: &'b Model<'a>,
    phase: Phase,
}

impl Barrier<'_, '_> {
    fn dim(&self) -> usize {
        match self.phase {
            Phase::FindFeasible => self.model.n + 1,
            Phase::Optimize => self.model.n,
        }
    }

    fn slack(&self, x: &[f64]) -> f64 {
        match self.phase {
            Phase::FindFeasible => x[self.model.n],
            Phase::Optimize => 0.0,
        }
    }

    fn constraints(&self) -> impl Iterator<Item = (&Constraint, bool)> {
        self.model.hard.iter().map(|c| (c, false)).chain(self.model.soft.iter().map(|c| (c, true)))
    }

    /// Barrier-augmented value `t f + phi`; `None` outside the strict interior.
    fn value(&self, x: &[f64], t: f64) -> Option<f64> {
        let s = self.slack(x);
        let mut phi = 0.0;
        for (c, soft) in self.constraints() {
            let g = c.value(self.model, x) - if soft { s } else { 0.0 };
            if !(g < 0.0) {
                return None;
            }
            phi -= libm::log(-g);
        }
        let f = match self.phase {
            Phase::FindFeasible => s,
            Phase::Optimize => self.model.objective(x, 0.0, None, None),
        };
        let v = t * f + phi;
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, x: &[f64], t: f64) -> (Vec<f64>, Matrix) {
        let n = self.model.n;
        let dim = self.dim();
        let mut grad = vec![0.0; dim];
        let mut hess = Matrix::zeros(dim);
        match self.phase {
            Phase::FindFeasible => grad[n] += t,
            Phase::Optimize => {
                self.model.objective(x, t, Some(&mut grad[..]), Some(&mut hess));
            }
        }
        let s = self.slack(x);
        for (c, soft) in self.constraints() {
            let g = c.value(self.model, x) - if soft { s } else { 0.0 };
            let inv = 1.0 / -g;
            let mut terms: Vec<(usize, f64)> = match c.gradient(self.model, x) {
                Gradient::Sparse(t) => t,
                Gradient::Dense(v) => v.into_iter().enumerate().filter(|(_, a)| *a != 0.0).collect(),
            };
            if soft && self.phase == Phase::FindFeasible {
                terms.push((n, -1.0));
            }
            for &(i, a) in &terms {
                grad[i] += a * inv;
            }
            hess.add_outer_sparse(&terms, inv * inv);
            c.add_hessian(self.model, x, inv, &mut hess);
        }
        (grad, hess)
    }

    /// Newton's method on `t f + phi` from a strictly interior `x`.
    fn center(
        &self,
        x: &mut Vec<f64>,
        t: f64,
        opts: &SolverOptions,
        steps: &mut usize,
        stop_when_feasible: bool,
    ) -> Result<()> {
        for _ in 0..opts.max_newton {
            if stop_when_feasible && self.slack(x) < 0.0 {
                return Ok(());
            }
            let (grad, hess) = self.derivatives(x, t);
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let step = solve_spd(&hess, &neg)
                .ok_or_else(|| Error::Numerical("Newton system is not positive definite".into()))?;
            let decrement: f64 = -grad.iter().zip(&step).map(|(g, s)| g * s).sum::<f64>();
            if decrement / 2.0 <= opts.newton_tolerance {
                return Ok(());
            }
            let f0 = self.value(x, t).ok_or_else(|| Error::Numerical("iterate left the interior".into()))?;
            let mut alpha = 1.0;
            let mut accepted = false;
            let mut trial = x.clone();
            while alpha > 1e-16 {
                for ((ti, xi), si) in trial.iter_mut().zip(x.iter()).zip(&step) {
                    *ti = xi + alpha * si;
                }
                if let Some(f1) = self.value(&trial, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            *steps += 1;
            if !accepted {
                // Roundoff floor of t f + phi; the iterate is as centered as it can get.
                return Ok(());
            }
            core::mem::swap(x, &mut trial);
        }
        Ok(())
    }
}

/// Minimizes a convex distortion cost subject to the total-power budget, the
/// monotone chain `1 >= D^(1) >= ... >= D^(M) > 0`, and any constraints in
/// `spec`.
pub fn minimize_cost(fading: &DiscreteFading, total_power: f64, b: f64, spec: &CostSpec) -> Result<CostSolution> {
    minimize_cost_with(fading, total_power, b, spec, &SolverOptions::default())
}

pub fn minimize_cost_with(
    fading: &DiscreteFading,
    total_power: f64,
    b: f64,
    spec: &CostSpec,
    opts: &SolverOptions,
) -> Result<CostSolution> {
    require_positive("total_power", total_power)?;
    require_positive("b", b)?;
    let m = fading.len();
    if m == 0 {
        return Err(Error::EmptyFading);
    }
    spec.validate(m)?;

    let mut hard = Vec::new();
    hard.push(Constraint::Linear { name: "unit".into(), terms: vec![(0, 1.0)], rhs: 1.0 });
    for k in 1..m {
        hard.push(Constraint::Linear {
            name: format!("chain[{}]", k + 1),
            terms: vec![(k, 1.0), (k - 1, -1.0)],
            rhs: 0.0,
        });
    }
    hard.push(Constraint::Linear { name: "floor".into(), terms: vec![(m - 1, -1.0)], rhs: -DISTORTION_FLOOR });

    let probs: Vec<f64> = fading.probs().collect();
    let mut soft = vec![Constraint::Power {
        coeffs: power_coefficients(fading),
        offset: total_power + 1.0 / fading.gamma(1),
        inv_b: 1.0 / b,
    }];
    for &(k, cap) in &spec.caps {
        soft.push(Constraint::Linear { name: format!("cap[{k}]"), terms: vec![(k - 1, 1.0)], rhs: cap });
    }
    if let Some(dmax) = spec.max_expected {
        soft.push(Constraint::Linear {
            name: "max_expected".into(),
            terms: probs.iter().copied().enumerate().collect(),
            rhs: dmax - fading.outage_prob(),
        });
    }
    if let Some(limit) = spec.max_variance {
        soft.push(Constraint::Variance { limit });
    }

    let model = Model { n: m, probs, outage: fading.outage_prob(), kind: &spec.kind, hard, soft };
    let mut warnings = Vec::new();
    let mut steps = 0;

    // Uniform power, backed off 1% from the budget.
    let start = Allocation::from_powers(vec![0.99 * total_power / m as f64; m])?;
    let mut x = DistortionVector::from_allocation(fading, &start, b)?.values;
    if x[m - 1] <= DISTORTION_FLOOR {
        return Err(Error::Numerical("starting point reaches the distortion floor".into()));
    }

    let worst_soft = |x: &[f64]| {
        model.soft.iter().map(|c| (c.value(&model, x), c)).fold((f64::NEG_INFINITY, None), |acc, (v, c)| {
            if v > acc.0 {
                (v, Some(c))
            } else {
                acc
            }
        })
    };

    if worst_soft(&x).0 >= 0.0 {
        let phase = Barrier { model: &model, phase: Phase::FindFeasible };
        let mut z = x.clone();
        z.push(worst_soft(&x).0 + 1.0);
        let mut mu = opts.initial_mu;
        let target = opts.gap_tolerance * m as f64;
        loop {
            phase.center(&mut z, 1.0 / mu, opts, &mut steps, true)?;
            if z[m] < 0.0 || model.constraint_count() as f64 * mu <= target {
                break;
            }
            mu /= opts.mu_factor;
        }
        let (violation, culprit) = worst_soft(&z[..m]);
        if !(violation < 0.0) {
            return Err(Error::Infeasible {
                constraint: culprit.map_or_else(|| "unknown".into(), |c| c.name()),
                violation: violation.max(0.0),
            });
        }
        z.truncate(m);
        x = z;
    }

    let barrier = Barrier { model: &model, phase: Phase::Optimize };
    let start_point = x.clone();
    let mut mu = opts.initial_mu;
    let target = opts.gap_tolerance * m as f64;
    loop {
        barrier.center(&mut x, 1.0 / mu, opts, &mut steps, false)?;
        if model.constraint_count() as f64 * mu <= target {
            break;
        }
        mu /= opts.mu_factor;
    }

    let kkt_residual = kkt_residual(&model, &x, mu);

    if let CostKind::Custom(cost) = &spec.kind {
        for k in 1..4 {
            let s = k as f64 / 4.0;
            let mid: Vec<f64> = start_point.iter().zip(&x).map(|(a, c)| (1.0 - s) * a + s * c).collect();
            let chord = (1.0 - s) * cost.value(&start_point) + s * cost.value(&x);
            let v = cost.value(&mid);
            if v > chord + 1e-9 * (1.0 + chord.abs()) {
                warnings.push(format!("custom cost fails a convexity spot check at s = {s}: {v} > {chord}"));
            }
        }
    }

    let distortions = DistortionVector::new(x)?;
    let power_used = power_required(&distortions, fading, b)?;
    let allocation = distortion_to_allocation(&distortions, fading, b, total_power * (1.0 + 1e-9) + 1e-8)?;
    let eval = evaluate_cost(&distortions, fading, spec)?;
    Ok(CostSolution {
        distortions,
        allocation,
        cost: eval.cost,
        expected: eval.expected,
        variance: eval.variance,
        kkt_residual,
        power_used,
        newton_steps: steps,
        warnings,
    })
}

/// Constraints with slack below this are treated as active when
/// certifying optimality.
const ACTIVE_SLACK: f64 = 1e-4;

/// KKT residual: scaled stationarity, complementary slackness, and primal
/// violation.
///
/// Barrier multipliers `mu / -g` lose precision on active constraints whose
/// slack is a difference of nearly equal distortions, so multipliers of the
/// near-active set are refit by nonnegative least squares on stationarity.
/// Inactive constraints keep their barrier multipliers.
fn kkt_residual(model: &Model<'_>, x: &[f64], mu: f64) -> f64 {
    let n = model.n;
    let mut grad = vec![0.0; n];
    model.objective(x, 1.0, Some(&mut grad[..]), None);
    let scale = 1.0 + grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));

    let dense = |gr: Gradient| match gr {
        Gradient::Dense(v) => v,
        Gradient::Sparse(terms) => {
            let mut v = vec![0.0; n];
            for (i, a) in terms {
                v[i] += a;
            }
            v
        }
    };

    let mut stationarity = grad;
    let mut slackness: f64 = 0.0;
    let mut violation: f64 = 0.0;
    let mut active: Vec<(f64, Vec<f64>)> = Vec::new();
    for c in model.hard.iter().chain(&model.soft) {
        let g = c.value(model, x);
        violation = violation.max(g);
        let v = dense(c.gradient(model, x));
        if -g < ACTIVE_SLACK {
            active.push((g, v));
            continue;
        }
        let lambda = mu / -g;
        slackness = slackness.max(lambda * -g);
        for (s, a) in stationarity.iter_mut().zip(&v) {
            *s += lambda * a;
        }
    }

    let mut keep: Vec<usize> = (0..active.len()).collect();
    let mut lambdas = vec![0.0; active.len()];
    while !keep.is_empty() {
        let k = keep.len();
        let mut normal = Matrix::zeros(k);
        let mut rhs = vec![0.0; k];
        for (r, &i) in keep.iter().enumerate() {
            rhs[r] = -active[i].1.iter().zip(&stationarity).map(|(a, s)| a * s).sum::<f64>();
            for (c, &j) in keep.iter().enumerate() {
                normal.add(r, c, active[i].1.iter().zip(&active[j].1).map(|(a, b)| a * b).sum());
            }
        }
        let Some(sol) = solve_spd(&normal, &rhs) else { break };
        let worst = (0..k).min_by(|&a, &b| sol[a].total_cmp(&sol[b]));
        match worst {
            Some(w) if sol[w] < 0.0 => {
                keep.remove(w);
            }
            _ => {
                for (r, &i) in keep.iter().enumerate() {
                    lambdas[i] = sol[r];
                }
                break;
            }
        }
    }
    for ((g, v), lambda) in active.iter().zip(&lambdas) {
        slackness = slackness.max(lambda * g.abs());
        for (s, a) in stationarity.iter_mut().zip(v) {
            *s += lambda * a;
        }
    }

    let stat = stationarity.iter().fold(0.0f64, |a, r| a.max(r.abs())) / scale;
    stat.max(slackness).max(violation.max(0.0))
}
