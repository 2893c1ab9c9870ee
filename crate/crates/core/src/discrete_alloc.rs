//! Multi-layer power allocation minimizing expected distortion over a
//! discrete fading pmf.
//!
//! The expected distortion factors into a top-down recurrence in which each
//! step is a two-layer problem between layer `i` and the aggregate of the
//! layers above it. [`minimize_expected_distortion`] walks that recurrence,
//! trying the unconstrained (ceiling) solution first and backtracking to the
//! constrained one when the layers below cannot supply the ceiling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, require_positive, Error, Result};
use crate::fading::DiscreteFading;
use crate::two_layer::{ceiling_unchecked, weight_at, Ceiling, TwoLayerParams};

/// Per-layer powers `P_i` and their top-down cumulative sums
/// `T_j = P_j + ... + P_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    per_layer: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Allocation {
    /// Builds from per-layer powers; every entry must be finite and `>= 0`.
    pub fn from_powers(per_layer: Vec<f64>) -> Result<Self> {
        if per_layer.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(invalid("per_layer", "powers must be finite and >= 0"));
        }
        let mut cumulative = vec![0.0; per_layer.len()];
        let mut acc = 0.0;
        for (t, p) in cumulative.iter_mut().zip(&per_layer).rev() {
            acc += p;
            *t = acc;
        }
        Ok(Self { per_layer, cumulative })
    }

    /// Builds from cumulative sums `T_1 >= T_2 >= ... >= T_M >= 0`.
    pub fn from_cumulative(cumulative: Vec<f64>) -> Result<Self> {
        if cumulative.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(invalid("cumulative", "entries must be finite and >= 0"));
        }
        if cumulative.windows(2).any(|w| w[1] > w[0]) {
            return Err(invalid("cumulative", "must be nonincreasing"));
        }
        let per_layer =
            cumulative.iter().enumerate().map(|(j, &t)| t - cumulative.get(j + 1).copied().unwrap_or(0.0)).collect();
        Ok(Self { per_layer, cumulative })
    }

    pub fn per_layer(&self) -> &[f64] {
        &self.per_layer
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    /// `T_j` for `j = 1..=M+1` with `T_{M+1} = 0`.
    pub fn cumulative_at(&self, j: usize) -> f64 {
        self.cumulative.get(j - 1).copied().unwrap_or(0.0)
    }

    pub fn total_power(&self) -> f64 {
        self.cumulative.first().copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.per_layer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_layer.is_empty()
    }

    /// Lowest layer index (1-based) with positive power.
    pub fn lowest_active(&self) -> Option<usize> {
        self.per_layer.iter().position(|&p| p > 0.0).map(|i| i + 1)
    }

    /// Highest layer index (1-based) with positive power.
    pub fn highest_active(&self) -> Option<usize> {
        self.per_layer.iter().rposition(|&p| p > 0.0).map(|i| i + 1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteResult {
    pub allocation: Allocation,
    pub expected_distortion: f64,
    /// `D_rlz^{(k)}` for `k = 0..=M`, with `D_rlz^{(0)} = 1`.
    pub realized_distortions: Vec<f64>,
    /// Layer rates in bits per channel use.
    pub realized_rates: Vec<f64>,
}

fn check_dims(fading: &DiscreteFading, alloc: &Allocation) -> Result<()> {
    if fading.len() != alloc.len() {
        return Err(Error::DimensionMismatch { expected: fading.len(), got: alloc.len() });
    }
    Ok(())
}

/// `R_i = log2(1 + gamma_i P_i / (1 + gamma_i sum_{j>i} P_j))`.
pub fn realized_rates(fading: &DiscreteFading, alloc: &Allocation) -> Result<Vec<f64>> {
    check_dims(fading, alloc)?;
    Ok(fading
        .gammas()
        .enumerate()
        .map(|(i, g)| {
            let interference = 1.0 + g * alloc.cumulative_at(i + 2);
            libm::log2(1.0 + g * alloc.per_layer()[i] / interference)
        })
        .collect())
}

/// Per-layer distortion factor `((1 + g T_j) / (1 + g T_{j+1}))^{-b}`.
fn layer_factor(gamma: f64, t_here: f64, t_above: f64, b: f64) -> f64 {
    libm::pow((1.0 + gamma * t_here) / (1.0 + gamma * t_above), -b)
}

/// `D_rlz^{(k)}` for `k = 0..=M` as cumulative products of layer factors.
pub fn realized_distortions(fading: &DiscreteFading, alloc: &Allocation, b: f64) -> Result<Vec<f64>> {
    check_dims(fading, alloc)?;
    require_positive("b", b)?;
    let mut out = Vec::with_capacity(fading.len() + 1);
    let mut d = 1.0;
    out.push(d);
    for (i, g) in fading.gammas().enumerate() {
        d *= layer_factor(g, alloc.cumulative_at(i + 1), alloc.cumulative_at(i + 2), b);
        out.push(d);
    }
    Ok(out)
}

/// `E[D] = p_0 + sum_i p_i prod_{j<=i} ((1 + g_j T_j)/(1 + g_j T_{j+1}))^{-b}`.
pub fn expected_distortion(fading: &DiscreteFading, alloc: &Allocation, b: f64) -> Result<f64> {
    let d = realized_distortions(fading, alloc, b)?;
    Ok(d.iter().enumerate().map(|(k, dk)| fading.prob(k) * dk).sum())
}

/// Absolute slack for the "ceiling within power" comparisons.
fn slack(total_power: f64) -> f64 {
    1e-12 * (1.0 + total_power)
}

type MemoKey = (usize, [u64; 5]);

fn memo_key(level: usize, p: &TwoLayerParams) -> MemoKey {
    (
        level,
        [
            p.weight_high.to_bits(),
            p.gain_high.to_bits(),
            p.weight_low.to_bits(),
            p.gain_low.to_bits(),
            p.bandwidth_ratio.to_bits(),
        ],
    )
}

/// Solved sub-problem: `T_{level+1}*` plus a link to the level below.
#[derive(Debug, Clone, Copy)]
struct Node {
    assigned: f64,
    below: Option<usize>,
}

enum Stage {
    Start,
    AfterUnconstrained { ceiling: f64, child: MemoKey },
    AfterConstrained { child: MemoKey },
}

struct Frame {
    level: usize,
    params: TwoLayerParams,
    stage: Stage,
}

/// Recursive allocation of the recurrence, run on an explicit stack.
///
/// `level` is the recurrence step `i` (1-based): it splits `T_i` between
/// layer `i` (gain `alpha`, weight `u`) and the aggregate above it (gain
/// `beta`, weight `w`), and determines `T_{i+1}*`. Sub-results are memoized
/// by their exact parameter tuple, so a backtrack reuses any branch that has
/// already been solved.
struct Allocator<'a> {
    fading: &'a DiscreteFading,
    total_power: f64,
    nodes: Vec<Node>,
    memo: BTreeMap<MemoKey, usize>,
}

impl Allocator<'_> {
    fn params(&self, w: f64, beta: f64, u: f64, level: usize, b: f64) -> TwoLayerParams {
        TwoLayerParams {
            weight_low: u,
            weight_high: w,
            gain_low: self.fading.gamma(level),
            gain_high: beta,
            bandwidth_ratio: b,
        }
    }

    fn ceiling(p: &TwoLayerParams) -> f64 {
        match ceiling_unchecked(p) {
            Ceiling::Finite(c) => c,
            // Stored states have p_i > 0, so u > 0 throughout; keep the
            // recursion exact regardless.
            Ceiling::Unbounded => f64::INFINITY,
        }
    }

    fn push_node(&mut self, key: MemoKey, node: Node) -> usize {
        self.nodes.push(node);
        let id = self.nodes.len() - 1;
        self.memo.insert(key, id);
        id
    }

    fn solve(&mut self, top: TwoLayerParams, top_level: usize) -> usize {
        let total = self.total_power;
        let eps = slack(total);
        let mut stack = vec![Frame { level: top_level, params: top, stage: Stage::Start }];

        while let Some(frame) = stack.pop() {
            let key = memo_key(frame.level, &frame.params);
            let b = frame.params.bandwidth_ratio;
            match frame.stage {
                Stage::Start => {
                    if self.memo.contains_key(&key) {
                        continue;
                    }
                    let ceiling = Self::ceiling(&frame.params);
                    if frame.level == 1 {
                        self.push_node(key, Node { assigned: ceiling.min(total), below: None });
                        continue;
                    }
                    let level = frame.level;
                    let p = frame.params;
                    if ceiling < total + eps {
                        let weight = weight_at(&p, ceiling);
                        let child = self.params(weight, p.gain_low, self.fading.prob(level - 1), level - 1, b);
                        let child_key = memo_key(level - 1, &child);
                        stack.push(Frame {
                            level,
                            params: p,
                            stage: Stage::AfterUnconstrained { ceiling, child: child_key },
                        });
                        stack.push(Frame { level: level - 1, params: child, stage: Stage::Start });
                    } else {
                        self.push_constrained(&mut stack, level, p);
                    }
                }
                Stage::AfterUnconstrained { ceiling, child } => {
                    let child_id = self.memo[&child];
                    let available = self.nodes[child_id].assigned;
                    if available >= ceiling - eps {
                        self.push_node(key, Node { assigned: ceiling.min(available), below: Some(child_id) });
                    } else {
                        self.push_constrained(&mut stack, frame.level, frame.params);
                    }
                }
                Stage::AfterConstrained { child } => {
                    let child_id = self.memo[&child];
                    let assigned = self.nodes[child_id].assigned;
                    self.push_node(key, Node { assigned, below: Some(child_id) });
                }
            }
        }
        self.memo[&memo_key(top_level, &top)]
    }

    fn push_constrained(&self, stack: &mut Vec<Frame>, level: usize, p: TwoLayerParams) {
        let child = self.params(
            p.weight_high,
            p.gain_high,
            self.fading.prob(level - 1) + p.weight_low,
            level - 1,
            p.bandwidth_ratio,
        );
        let child_key = memo_key(level - 1, &child);
        stack.push(Frame { level, params: p, stage: Stage::AfterConstrained { child: child_key } });
        stack.push(Frame { level: level - 1, params: child, stage: Stage::Start });
    }
}

/// Optimal allocation of `total_power` across the layers of `fading`.
pub fn minimize_expected_distortion(fading: &DiscreteFading, total_power: f64, b: f64) -> Result<DiscreteResult> {
    require_positive("total_power", total_power)?;
    require_positive("b", b)?;
    let m = fading.len();
    if m == 0 {
        return Err(Error::EmptyFading);
    }

    let cumulative = if m == 1 {
        vec![total_power]
    } else {
        let mut solver = Allocator { fading, total_power, nodes: Vec::new(), memo: BTreeMap::new() };
        let top = solver.params(fading.prob(m), fading.gamma(m), fading.prob(m - 1), m - 1, b);
        let root = solver.solve(top, m - 1);

        // Follow the chain: node at level i holds T_{i+1}*.
        let mut cumulative = vec![0.0; m];
        cumulative[0] = total_power;
        let mut cursor = Some(root);
        let mut level = m - 1;
        while let Some(id) = cursor {
            let node = solver.nodes[id];
            cumulative[level] = node.assigned;
            cursor = node.below;
            level = level.saturating_sub(1);
        }
        // Enforce T_1 >= T_2 >= ... exactly; slack-level violations only.
        for j in 1..m {
            if cumulative[j] > cumulative[j - 1] {
                cumulative[j] = cumulative[j - 1];
            }
        }
        cumulative
    };

    let allocation = Allocation::from_cumulative(cumulative)?;
    result_for(fading, allocation, b)
}

pub(crate) fn result_for(fading: &DiscreteFading, allocation: Allocation, b: f64) -> Result<DiscreteResult> {
    let realized_distortions = realized_distortions(fading, &allocation, b)?;
    let expected_distortion = realized_distortions.iter().enumerate().map(|(k, d)| fading.prob(k) * d).sum();
    let realized_rates = realized_rates(fading, &allocation)?;
    Ok(DiscreteResult { allocation, expected_distortion, realized_distortions, realized_rates })
}

/// Largest layer count accepted by [`brute_force_min`].
pub const BRUTE_FORCE_MAX_LAYERS: usize = 5;

/// Exact minimum of `E[D]` over cumulative allocations on the uniform grid
/// `T_j in {0, P/n, ..., P}` with `0 <= T_M <= ... <= T_2 <= P`.
///
/// The search is exhaustive over the grid. It is organized as a dynamic
/// program over the factorization `D_i = f_i(T_i, T_{i+1}) (p_i + D_{i+1})`,
/// so each layer costs `O(n)` rather than the `O(n^{M-1})` of listing every
/// monotone tuple; the minimizer returned is the same.
pub fn brute_force_min(
    fading: &DiscreteFading,
    total_power: f64,
    b: f64,
    grid_steps: usize,
) -> Result<(Allocation, f64)> {
    require_positive("total_power", total_power)?;
    require_positive("b", b)?;
    let m = fading.len();
    if m == 0 {
        return Err(Error::EmptyFading);
    }
    if m > BRUTE_FORCE_MAX_LAYERS {
        return Err(Error::TooManyLayers { layers: m, max: BRUTE_FORCE_MAX_LAYERS });
    }
    if grid_steps == 0 {
        return Err(invalid("grid_steps", "must be >= 1"));
    }
    if m == 1 {
        let alloc = Allocation::from_powers(vec![total_power])?;
        let ed = expected_distortion(fading, &alloc, b)?;
        return Ok((alloc, ed));
    }

    let n = grid_steps;
    let grid: Vec<f64> = (0..=n).map(|k| total_power * k as f64 / n as f64).collect();

    // best[j][k]: min over T_{j+1..M} of the cumulative distortion D_j given T_j = grid[k]
    // choice[j][k]: grid index of the minimizing T_{j+1}
    let mut best = vec![vec![0.0; n + 1]; m + 1];
    let mut choice = vec![vec![0usize; n + 1]; m + 1];
    let gamma_m = fading.gamma(m);
    for k in 0..=n {
        best[m][k] = libm::pow(1.0 + gamma_m * grid[k], -b) * fading.prob(m);
    }
    for j in (1..m).rev() {
        let g = fading.gamma(j);
        let p = fading.prob(j);
        // prefix minimum over T_{j+1} <= T_j of (1 + g T_{j+1})^b (p + D_{j+1})
        let mut run_min = f64::INFINITY;
        let mut run_arg = 0;
        for k in 0..=n {
            let cand = libm::pow(1.0 + g * grid[k], b) * (p + best[j + 1][k]);
            if cand < run_min {
                run_min = cand;
                run_arg = k;
            }
            best[j][k] = libm::pow(1.0 + g * grid[k], -b) * run_min;
            choice[j][k] = run_arg;
        }
    }

    let mut cumulative = vec![0.0; m];
    let mut k = n;
    cumulative[0] = grid[n];
    for j in 1..m {
        k = choice[j][k];
        cumulative[j] = grid[k];
    }
    let alloc = Allocation::from_cumulative(cumulative)?;
    let ed = expected_distortion(fading, &alloc, b)?;
    Ok((alloc, ed))
}

/// One row of an SNR sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub snr_db: f64,
    pub total_power: f64,
    pub result: DiscreteResult,
}

/// Linear power from dB.
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

pub fn sweep_point(fading: &DiscreteFading, b: f64, snr_db: f64) -> Result<SweepPoint> {
    if !snr_db.is_finite() {
        return Err(invalid("snr_db", format!("must be finite, got {snr_db}")));
    }
    let total_power = db_to_linear(snr_db);
    Ok(SweepPoint { snr_db, total_power, result: minimize_expected_distortion(fading, total_power, b)? })
}

/// Optimal allocation at each SNR (dB), in input order.
pub fn snr_sweep(fading: &DiscreteFading, b: f64, snr_list_db: &[f64]) -> Result<Vec<SweepPoint>> {
    if snr_list_db.is_empty() {
        return Err(invalid("snr_db", "sweep needs at least one SNR"));
    }
    snr_list_db.iter().map(|&s| sweep_point(fading, b, s)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fading::{discretize_rayleigh, FadingState};
    use crate::two_layer::{optimal_split, TwoLayerParams};
    use proptest::prelude::*;

    fn pmf(gammas: &[f64], probs: &[f64], outage: f64) -> DiscreteFading {
        DiscreteFading::new(
            gammas.iter().zip(probs).map(|(&gamma, &prob)| FadingState { gamma, prob }).collect(),
            outage,
        )
        .unwrap()
    }

    /// Listing every monotone grid tuple, for checking the dynamic program.
    fn enumerate_grid(f: &DiscreteFading, total: f64, b: f64, n: usize) -> f64 {
        let m = f.len();
        let mut best = f64::INFINITY;
        let mut idx = vec![0usize; m - 1];
        loop {
            let mut cum = vec![total];
            cum.extend(idx.iter().map(|&k| total * k as f64 / n as f64));
            if let Ok(a) = Allocation::from_cumulative(cum) {
                best = best.min(expected_distortion(f, &a, b).unwrap());
            }
            let mut pos = 0;
            loop {
                if pos == idx.len() {
                    return best;
                }
                idx[pos] += 1;
                if idx[pos] <= n {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    #[test]
    fn rates_examples() {
        let single = pmf(&[1.0], &[1.0], 0.0);
        let a = Allocation::from_powers(vec![1.0]).unwrap();
        assert!((realized_rates(&single, &a).unwrap()[0] - 1.0).abs() < 1e-15);

        let two = pmf(&[1.0, 4.0], &[0.5, 0.5], 0.0);
        let a = Allocation::from_powers(vec![0.5, 0.5]).unwrap();
        let r = realized_rates(&two, &a).unwrap();
        assert!((r[0] - libm::log2(4.0 / 3.0)).abs() < 1e-15);
        assert!((r[1] - libm::log2(3.0)).abs() < 1e-15);

        let top_only = Allocation::from_powers(vec![0.0, 2.0]).unwrap();
        assert_eq!(realized_rates(&two, &top_only).unwrap()[0], 0.0);

        let wrong = Allocation::from_powers(vec![1.0]).unwrap();
        assert!(matches!(realized_rates(&two, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn expected_distortion_examples() {
        let two = pmf(&[1.0, 4.0], &[0.5, 0.5], 0.0);
        let zero = Allocation::from_powers(vec![0.0, 0.0]).unwrap();
        assert_eq!(expected_distortion(&two, &zero, 1.0).unwrap(), 1.0);

        let single = pmf(&[1.0], &[1.0], 0.0);
        let a = Allocation::from_powers(vec![1.0]).unwrap();
        assert!((expected_distortion(&single, &a, 1.0).unwrap() - 0.5).abs() < 1e-15);

        let a = Allocation::from_powers(vec![0.5, 0.5]).unwrap();
        let ed = expected_distortion(&two, &a, 1.0).unwrap();
        assert!((ed - 0.5).abs() < 1e-15);
        // rate route: sum p_k 2^{-b sum R}
        let r = realized_rates(&two, &a).unwrap();
        let via_rates = 0.5 * libm::exp2(-r[0]) + 0.5 * libm::exp2(-(r[0] + r[1]));
        assert!((ed - via_rates).abs() < 1e-12);
    }

    #[test]
    fn two_state_matches_closed_form() {
        for &(p1, g1, g2, total, b) in &[
            (0.5, 1.0, 4.0, 1.0, 1.0),
            (0.5, 1.0, 4.0, 0.05, 1.0),
            (0.3, 0.5, 7.0, 3.0, 2.0),
            (0.8, 1.0, 1.5, 10.0, 0.5),
        ] {
            let f = pmf(&[g1, g2], &[p1, 1.0 - p1], 0.0);
            let r = minimize_expected_distortion(&f, total, b).unwrap();
            let split = optimal_split(&TwoLayerParams::new(p1, 1.0 - p1, g1, g2, b).unwrap(), total).unwrap();
            assert!((r.allocation.cumulative()[1] - split.assigned_high).abs() < 1e-14);
            assert!((r.expected_distortion - split.min_distortion).abs() < 1e-14);
        }
    }

    #[test]
    fn single_layer_takes_everything() {
        let f = pmf(&[2.0], &[0.9], 0.1);
        let r = minimize_expected_distortion(&f, 3.0, 1.0).unwrap();
        assert_eq!(r.allocation.per_layer(), &[3.0]);
        assert!((r.expected_distortion - (0.1 + 0.9 / 7.0)).abs() < 1e-15);
        let (a, ed) = brute_force_min(&f, 3.0, 1.0, 10).unwrap();
        assert_eq!(a.per_layer(), &[3.0]);
        assert_eq!(ed, r.expected_distortion);
    }

    #[test]
    fn rejects_bad_input() {
        let f = pmf(&[1.0], &[1.0], 0.0);
        assert!(minimize_expected_distortion(&f, 0.0, 1.0).is_err());
        assert!(minimize_expected_distortion(&f, 1.0, -1.0).is_err());
        let empty = DiscreteFading::new(vec![], 1.0).unwrap();
        assert_eq!(minimize_expected_distortion(&empty, 1.0, 1.0), Err(Error::EmptyFading));
        let six = DiscreteFading::uniform(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert!(matches!(brute_force_min(&six, 1.0, 1.0, 10), Err(Error::TooManyLayers { .. })));
    }

    #[test]
    fn three_layer_against_grid() {
        let f = DiscreteFading::uniform(&[0.5, 1.0, 2.0]).unwrap();
        let r = minimize_expected_distortion(&f, 1.0, 1.0).unwrap();
        let (_, grid) = brute_force_min(&f, 1.0, 1.0, 1000).unwrap();
        assert!(r.expected_distortion <= grid * (1.0 + 1e-12));
        assert!((grid - r.expected_distortion) / r.expected_distortion < 1e-3);
    }

    #[test]
    fn dynamic_program_equals_enumeration() {
        let f = pmf(&[0.3, 1.0, 2.5, 6.0], &[0.2, 0.3, 0.3, 0.1], 0.1);
        for &n in &[7usize, 20] {
            let (_, dp) = brute_force_min(&f, 2.0, 1.3, n).unwrap();
            let listed = enumerate_grid(&f, 2.0, 1.3, n);
            assert!((dp - listed).abs() < 1e-15, "n={n}: {dp} vs {listed}");
        }
    }

    #[test]
    fn rayleigh_structure() {
        let f = discretize_rayleigh(1.0, 2.0, 24).unwrap();
        let r = minimize_expected_distortion(&f, 1.0, 1.0).unwrap();
        let p = r.allocation.per_layer();
        assert_eq!(p[23], 0.0);
        let lo = r.allocation.lowest_active().unwrap();
        let hi = r.allocation.highest_active().unwrap();
        assert!(hi < 24);
        // among active layers above the lowest one, lower layers get more power
        for i in lo..hi - 1 {
            assert!(p[i] >= p[i + 1], "layer {} vs {}", i + 1, i + 2);
        }
        let total: f64 = p.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn realized_distortion_invariants() {
        let f = discretize_rayleigh(1.0, 2.0, 24).unwrap();
        let r = minimize_expected_distortion(&f, 3.0, 2.0).unwrap();
        assert_eq!(r.realized_distortions[0], 1.0);
        for w in r.realized_distortions.windows(2) {
            assert!(w[1] <= w[0] && w[1] > 0.0);
        }
        let ed: f64 = (0..=24).map(|k| f.prob(k) * r.realized_distortions[k]).sum();
        assert!((ed - r.expected_distortion).abs() < 1e-10);
    }

    #[test]
    fn large_layer_count_terminates() {
        let f = discretize_rayleigh(1.0, 6.0, 200).unwrap();
        for &p in &[0.01, 1.0, 100.0, 1e4] {
            let r = minimize_expected_distortion(&f, p, 1.0).unwrap();
            assert!(r.expected_distortion > 0.0 && r.expected_distortion < 1.0);
        }
    }

    #[test]
    fn sweep_single_entry_matches_call() {
        let f = discretize_rayleigh(1.0, 2.0, 24).unwrap();
        let s = snr_sweep(&f, 1.0, &[5.0]).unwrap();
        let direct = minimize_expected_distortion(&f, db_to_linear(5.0), 1.0).unwrap();
        assert_eq!(s[0].result, direct);
        assert!(snr_sweep(&f, 1.0, &[]).is_err());
    }

    fn instance() -> impl Strategy<Value = (DiscreteFading, f64, f64)> {
        (2usize..=4)
            .prop_flat_map(|m| {
                (
                    prop::collection::vec(0.05f64..3.0, m),
                    prop::collection::vec(0.05f64..1.0, m + 1),
                    0.05f64..20.0,
                    0.25f64..3.0,
                )
            })
            .prop_map(|(steps, weights, total, b)| {
                let mut g = 0.0;
                let gammas: Vec<f64> = steps
                    .iter()
                    .map(|s| {
                        g += s;
                        g
                    })
                    .collect();
                let sum: f64 = weights.iter().sum();
                let probs: Vec<f64> = weights.iter().map(|w| w / sum).collect();
                let outage = 1.0 - probs[1..].iter().sum::<f64>();
                (pmf(&gammas, &probs[1..], outage), total, b)
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn optimum_beats_random_allocations((f, total, b) in instance(),
                                            draws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 200)) {
            let r = minimize_expected_distortion(&f, total, b).unwrap();
            for d in draws {
                let mut w: Vec<f64> = d[..f.len()].to_vec();
                let s: f64 = w.iter().sum::<f64>().max(1e-300);
                w.iter_mut().for_each(|x| *x *= total / s);
                let a = Allocation::from_powers(w).unwrap();
                prop_assert!(r.expected_distortion <= expected_distortion(&f, &a, b).unwrap() * (1.0 + 1e-12));
            }
            let sum: f64 = r.allocation.per_layer().iter().sum();
            prop_assert!((sum - total).abs() <= 1e-9 * total);
            prop_assert!(r.allocation.per_layer().iter().all(|&p| p >= 0.0));
        }

        #[test]
        fn monotone_in_power_and_bandwidth((f, total, b) in instance()) {
            let lo = minimize_expected_distortion(&f, total, b).unwrap().expected_distortion;
            let hi = minimize_expected_distortion(&f, 1.5 * total, b).unwrap().expected_distortion;
            prop_assert!(hi < lo);
            let wide = minimize_expected_distortion(&f, total, 1.5 * b).unwrap().expected_distortion;
            prop_assert!(wide <= lo * (1.0 + 1e-12));
        }
    }
}
