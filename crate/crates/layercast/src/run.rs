//! One function per subcommand. Each validates, computes everything, and
//! only then renders; nothing touches the filesystem until the caller writes
//! the returned artifact.

use std::path::Path;

use layercast_core::bounds::{csit_perfect, csit_quantized, infinite_diversity};
use layercast_core::continuous_alloc::{
    capacity_maximizing_power, solve_with_profile, ContinuousSolution, PowerProfile,
};
use layercast_core::convex_cost::{minimize_cost_with, CostSpec, SolverOptions};
use layercast_core::discrete_alloc::{
    db_to_linear, expected_distortion, minimize_expected_distortion, realized_distortions, sweep_point, Allocation,
};
use layercast_core::fading::{ContinuousFading, DiscreteFading, FadingState};
use layercast_core::montecarlo::{chunk_count, merge_chunks, simulate_chunk, SimEstimate, SimModel};
use layercast_core::two_layer::{optimal_split, Ceiling, TwoLayerParams};
use serde::{Deserialize, Serialize};

use crate::config::{BoundSel, Command, McMode, RunConfig};
use crate::descriptor::FadingDescriptor;
use crate::error::CliError;
use crate::output::{Artifact, Cell, Format, Table};
use crate::parallel::{pool, try_map};

/// Executes `cfg` and returns the rendered output.
pub fn run(cfg: &RunConfig) -> Result<Artifact, CliError> {
    cfg.validate()?;
    let pool = pool()?;
    pool.install(|| match cfg.subcommand {
        Command::TwoLayer => two_layer(cfg),
        Command::AllocDiscrete => alloc_discrete(cfg),
        Command::AllocContinuous => alloc_continuous(cfg),
        Command::MinCost => min_cost(cfg),
        Command::Bounds => bounds(cfg),
        Command::Montecarlo => montecarlo(cfg),
    })
}

fn descriptor(cfg: &RunConfig) -> Result<FadingDescriptor, CliError> {
    cfg.fading.as_ref().ok_or_else(|| CliError::usage(format!("{} needs --fading", cfg.subcommand.name())))?.resolve()
}

fn pairs(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).collect()
}

fn render<T: Serialize>(cfg: &RunConfig, table: impl FnOnce() -> Table, json: &T) -> Result<Artifact, CliError> {
    match cfg.output_format() {
        Format::Csv => Ok(Artifact::csv(&table())),
        Format::Json => Artifact::json(json),
    }
}

#[derive(Debug, Serialize)]
struct Points<'a, T> {
    points: &'a [T],
}

// ---------------------------------------------------------------- two-layer

#[derive(Debug, Serialize)]
pub struct TwoLayerRow {
    pub u: f64,
    pub w: f64,
    pub alpha: f64,
    pub beta: f64,
    pub b: f64,
    pub snr_db: f64,
    pub total_power: f64,
    /// `None` when unbounded.
    pub ceiling: Option<f64>,
    pub assigned_high: f64,
    pub min_distortion: f64,
    pub aggregate_weight: Option<f64>,
}

fn two_layer(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let weights: Vec<(f64, f64)> =
        if cfg.p2.is_empty() { pairs(&cfg.u, &cfg.w) } else { cfg.p2.iter().map(|&p| (1.0 - p, p)).collect() };
    let alphas = if cfg.alpha.is_empty() { vec![1.0] } else { cfg.alpha.clone() };
    let mut jobs = Vec::new();
    for &b in &cfg.b {
        for &(u, w) in &weights {
            for &alpha in &alphas {
                for &beta in &cfg.beta {
                    for &snr_db in &cfg.snr_db {
                        jobs.push((TwoLayerParams::new(u, w, alpha, beta, b)?, snr_db));
                    }
                }
            }
        }
    }
    let rows = try_map(&jobs, |&(p, snr_db)| -> Result<TwoLayerRow, CliError> {
        let total_power = db_to_linear(snr_db);
        let s = optimal_split(&p, total_power)?;
        Ok(TwoLayerRow {
            u: p.weight_low,
            w: p.weight_high,
            alpha: p.gain_low,
            beta: p.gain_high,
            b: p.bandwidth_ratio,
            snr_db,
            total_power,
            ceiling: match s.ceiling {
                Ceiling::Finite(v) => Some(v),
                Ceiling::Unbounded => None,
            },
            assigned_high: s.assigned_high,
            min_distortion: s.min_distortion,
            aggregate_weight: s.aggregate_weight,
        })
    })?;
    let table = || {
        let mut t = Table::new(&[
            "u",
            "w",
            "alpha",
            "beta",
            "b",
            "snr_db",
            "total_power",
            "ceiling",
            "assigned_high",
            "min_distortion",
            "aggregate_weight",
        ]);
        for r in &rows {
            t.push(vec![
                r.u.into(),
                r.w.into(),
                r.alpha.into(),
                r.beta.into(),
                r.b.into(),
                r.snr_db.into(),
                r.total_power.into(),
                r.ceiling.unwrap_or(f64::INFINITY).into(),
                r.assigned_high.into(),
                r.min_distortion.into(),
                r.aggregate_weight.map_or(Cell::Text(String::new()), Cell::Num),
            ]);
        }
        t
    };
    render(cfg, table, &Points { points: &rows })
}

// ----------------------------------------------------------- alloc-discrete

#[derive(Debug, Serialize)]
pub struct DiscretePoint {
    pub snr_db: f64,
    pub b: f64,
    pub total_power: f64,
    pub expected_distortion: f64,
    pub gammas: Vec<f64>,
    pub probs: Vec<f64>,
    pub outage_prob: f64,
    pub per_layer: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub realized_distortions: Vec<f64>,
    pub realized_rates: Vec<f64>,
}

fn alloc_discrete(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let fading = descriptor(cfg)?.require_discrete()?;
    let jobs = pairs(&cfg.b, &cfg.snr_db);
    let points = try_map(&jobs, |&(b, snr_db)| -> Result<DiscretePoint, CliError> {
        let sp = sweep_point(&fading, b, snr_db)?;
        Ok(DiscretePoint {
            snr_db,
            b,
            total_power: sp.total_power,
            expected_distortion: sp.result.expected_distortion,
            gammas: fading.gammas().collect(),
            probs: fading.probs().collect(),
            outage_prob: fading.outage_prob(),
            per_layer: sp.result.allocation.per_layer().to_vec(),
            cumulative: sp.result.allocation.cumulative().to_vec(),
            realized_distortions: sp.result.realized_distortions,
            realized_rates: sp.result.realized_rates,
        })
    })?;
    let table = || {
        let mut t = Table::new(&["snr_db", "b", "layer_index", "gamma", "p", "P_star", "T_star", "ED_star"]);
        for p in &points {
            for i in 0..p.gammas.len() {
                t.push(vec![
                    p.snr_db.into(),
                    p.b.into(),
                    (i + 1).into(),
                    p.gammas[i].into(),
                    p.probs[i].into(),
                    p.per_layer[i].into(),
                    p.cumulative[i].into(),
                    p.expected_distortion.into(),
                ]);
            }
        }
        t
    };
    render(cfg, table, &Points { points: &points })
}

// --------------------------------------------------------- alloc-continuous

#[derive(Debug, Serialize)]
pub struct ProfileSample {
    pub gamma: f64,
    #[serde(rename = "U")]
    pub u: f64,
    pub rho: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "U_cap")]
    pub u_cap: f64,
    pub rho_cap: f64,
}

#[derive(Debug, Serialize)]
pub struct ContinuousPoint {
    pub snr_db: f64,
    pub b: f64,
    pub total_power: f64,
    pub gamma_o: f64,
    pub gamma_p: f64,
    pub saturated: bool,
    pub expected_distortion: f64,
    pub valid: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub profile: Vec<ProfileSample>,
}

/// Capacity-maximizing cumulative power, clipped to `[0, P]`; NaN where the
/// density vanishes.
fn capped_capacity_power(fading: &ContinuousFading, gamma: f64, total_power: f64) -> f64 {
    capacity_maximizing_power(fading, gamma).map_or(f64::NAN, |u| u.clamp(0.0, total_power))
}

fn profile_sample(fading: &ContinuousFading, sol: &ContinuousSolution, gamma: f64) -> Result<ProfileSample, CliError> {
    let p = sol.total_power();
    let h = 1e-6 * gamma;
    let u_cap = capped_capacity_power(fading, gamma, p);
    let rho_cap =
        (capped_capacity_power(fading, gamma - h, p) - capped_capacity_power(fading, gamma + h, p)) / (2.0 * h);
    Ok(ProfileSample {
        gamma,
        u: sol.cumulative_power(gamma)?,
        rho: sol.power_density(gamma)?,
        d: sol.distortion(gamma)?,
        u_cap,
        rho_cap,
    })
}

fn alloc_continuous(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let fading = descriptor(cfg)?.require_continuous()?;
    let mut points = Vec::new();
    for &b in &cfg.b {
        let profile = PowerProfile::new(&fading, b)?;
        let sols = try_map(&cfg.snr_db, |&s| solve_with_profile(profile.clone(), db_to_linear(s)))?;
        for (&snr_db, sol) in cfg.snr_db.iter().zip(&sols) {
            let samples = if cfg.summary {
                Vec::new()
            } else {
                let top = cfg.gamma_max.unwrap_or(1.5 * sol.gamma_o());
                let gammas: Vec<f64> = (1..=cfg.grid).map(|i| top * i as f64 / cfg.grid as f64).collect();
                try_map(&gammas, |&g| profile_sample(&fading, sol, g))?
            };
            let lb = sol.lower_boundary();
            points.push(ContinuousPoint {
                snr_db,
                b,
                total_power: sol.total_power(),
                gamma_o: sol.gamma_o(),
                gamma_p: lb.gamma_p,
                saturated: lb.saturated,
                expected_distortion: sol.min_expected_distortion(),
                valid: sol.is_valid(),
                profile: samples,
            });
        }
    }
    let table = || {
        if cfg.summary {
            let mut t = Table::new(&["snr_db", "b", "gamma_o", "gamma_P", "ED_star", "valid"]);
            for p in &points {
                t.push(vec![
                    p.snr_db.into(),
                    p.b.into(),
                    p.gamma_o.into(),
                    p.gamma_p.into(),
                    p.expected_distortion.into(),
                    p.valid.into(),
                ]);
            }
            return t;
        }
        let mut t = Table::new(&["snr_db", "b", "gamma", "U", "rho", "D", "U_cap", "rho_cap"]);
        for p in &points {
            t.preamble.push(format!(
                "snr_db={}, b={}, gamma_o={}, gamma_P={}, ED_star={}, valid={}",
                p.snr_db,
                p.b,
                crate::output::number(p.gamma_o),
                crate::output::number(p.gamma_p),
                crate::output::number(p.expected_distortion),
                p.valid
            ));
            for s in &p.profile {
                t.push(vec![
                    p.snr_db.into(),
                    p.b.into(),
                    s.gamma.into(),
                    s.u.into(),
                    s.rho.into(),
                    s.d.into(),
                    s.u_cap.into(),
                    s.rho_cap.into(),
                ]);
            }
        }
        t
    };
    render(cfg, table, &Points { points: &points })
}

// ----------------------------------------------------------------- min-cost

#[derive(Debug, Serialize)]
pub struct CostPoint {
    pub snr_db: f64,
    pub b: f64,
    pub phi: f64,
    pub total_power: f64,
    pub cost: f64,
    pub expected: f64,
    pub variance: f64,
    pub kkt_residual: f64,
    pub power_used: f64,
    pub distortions: Vec<f64>,
    pub gammas: Vec<f64>,
    pub probs: Vec<f64>,
    pub outage_prob: f64,
    pub per_layer: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub warnings: Vec<String>,
}

fn min_cost(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let fading = descriptor(cfg)?.require_discrete()?;
    let phis = if cfg.phi.is_empty() { vec![0.0] } else { cfg.phi.clone() };
    let mut opts = SolverOptions::default();
    if let Some(t) = cfg.gap_tolerance {
        opts.gap_tolerance = t;
    }
    let mut jobs = Vec::new();
    for &b in &cfg.b {
        for &snr_db in &cfg.snr_db {
            for &phi in &phis {
                let mut spec = CostSpec::risk_sensitive(phi);
                spec.max_expected = cfg.dmax;
                spec.max_variance = cfg.vmax;
                spec.caps = cfg.caps.iter().map(|c| (c.layer, c.limit)).collect();
                spec.validate(fading.len())?;
                jobs.push((b, snr_db, phi, spec));
            }
        }
    }
    let points = try_map(&jobs, |(b, snr_db, phi, spec)| -> Result<CostPoint, CliError> {
        let total_power = db_to_linear(*snr_db);
        let s = minimize_cost_with(&fading, total_power, *b, spec, &opts)?;
        Ok(CostPoint {
            snr_db: *snr_db,
            b: *b,
            phi: *phi,
            total_power,
            cost: s.cost,
            expected: s.expected,
            variance: s.variance,
            kkt_residual: s.kkt_residual,
            power_used: s.power_used,
            distortions: s.distortions.values().to_vec(),
            gammas: fading.gammas().collect(),
            probs: fading.probs().collect(),
            outage_prob: fading.outage_prob(),
            per_layer: s.allocation.per_layer().to_vec(),
            cumulative: s.allocation.cumulative().to_vec(),
            warnings: s.warnings,
        })
    })?;
    let table = || {
        let mut t = Table::new(&[
            "snr_db",
            "b",
            "phi",
            "layer_index",
            "gamma",
            "p",
            "D_star",
            "P_star",
            "T_star",
            "cost",
            "expected",
            "variance",
        ]);
        for p in &points {
            for i in 0..p.gammas.len() {
                t.push(vec![
                    p.snr_db.into(),
                    p.b.into(),
                    p.phi.into(),
                    (i + 1).into(),
                    p.gammas[i].into(),
                    p.probs[i].into(),
                    p.distortions[i].into(),
                    p.per_layer[i].into(),
                    p.cumulative[i].into(),
                    p.cost.into(),
                    p.expected.into(),
                    p.variance.into(),
                ]);
            }
        }
        t
    };
    render(cfg, table, &Points { points: &points })
}

// ------------------------------------------------------------------- bounds

#[derive(Debug, Serialize)]
pub struct BoundPoint {
    pub snr_db: f64,
    pub b: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csit_quantized: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csit_perfect: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_diversity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub no_csit: Option<f64>,
}

fn bounds(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let desc = descriptor(cfg)?;
    let discrete = desc.discrete()?;
    let continuous = desc.continuous()?;
    let all = cfg.which.contains(&BoundSel::All);
    let want = |sel: BoundSel, available: bool, need: &str| -> Result<bool, CliError> {
        if cfg.which.contains(&sel) && !available {
            return Err(CliError::usage(format!("this bound needs {need}")));
        }
        Ok(available && (all || cfg.which.contains(&sel)))
    };
    let q = want(BoundSel::CsitQ, discrete.is_some(), "a discrete pmf")?;
    let p = want(BoundSel::CsitP, continuous.is_some(), "a continuous law")?;
    let i = want(BoundSel::InfDiv, true, "a fading law")?;
    let n = want(BoundSel::NoCsit, true, "a fading law")?;
    let mean = desc.mean_gain()?;

    let jobs = pairs(&cfg.b, &cfg.snr_db);
    let points = try_map(&jobs, |&(b, snr_db)| -> Result<BoundPoint, CliError> {
        let power = db_to_linear(snr_db);
        let no_csit = if !n {
            None
        } else if let Some(d) = &discrete {
            Some(minimize_expected_distortion(d, power, b)?.expected_distortion)
        } else {
            let c = continuous.as_ref().expect("descriptor has a law");
            let profile = PowerProfile::new(c, b)?;
            Some(solve_with_profile(profile, power)?.min_expected_distortion())
        };
        Ok(BoundPoint {
            snr_db,
            b,
            csit_quantized: if q { Some(csit_quantized(discrete.as_ref().unwrap(), power, b)?) } else { None },
            csit_perfect: if p { Some(csit_perfect(continuous.as_ref().unwrap(), power, b)?) } else { None },
            infinite_diversity: if i { Some(infinite_diversity(mean, power, b)?) } else { None },
            no_csit,
        })
    })?;
    let table = || {
        let mut header = vec!["snr_db", "b"];
        for (on, name) in [(q, "csit_quantized"), (p, "csit_perfect"), (i, "infinite_diversity"), (n, "no_csit")] {
            if on {
                header.push(name);
            }
        }
        let mut t = Table::new(&header);
        for pt in &points {
            let mut row: Vec<Cell> = vec![pt.snr_db.into(), pt.b.into()];
            row.extend(
                [pt.csit_quantized, pt.csit_perfect, pt.infinite_diversity, pt.no_csit]
                    .into_iter()
                    .flatten()
                    .map(Cell::Num),
            );
            t.push(row);
        }
        t
    };
    render(cfg, table, &Points { points: &points })
}

// --------------------------------------------------------------- montecarlo

/// The subset of an `alloc-discrete` / `min-cost` JSON point that a
/// simulation needs.
#[derive(Debug, Clone, Deserialize)]
pub struct AllocPoint {
    pub snr_db: f64,
    pub b: f64,
    pub gammas: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub outage_prob: Option<f64>,
    pub per_layer: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct AllocFile {
    points: Vec<AllocPoint>,
}

fn load_alloc(path: &Path, snr_db: Option<f64>, b: f64) -> Result<AllocPoint, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read allocation {}: {e}", path.display())))?;
    let file: AllocFile = serde_json::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad allocation file {}: {e}", path.display())))?;
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + y.abs());
    let mut hits: Vec<AllocPoint> =
        file.points.into_iter().filter(|p| close(p.b, b) && snr_db.is_none_or(|s| close(p.snr_db, s))).collect();
    match hits.len() {
        1 => Ok(hits.remove(0)),
        0 => Err(CliError::usage(format!("no point in {} matches b = {b}, snr_db = {snr_db:?}", path.display()))),
        n => Err(CliError::usage(format!("{n} points in {} match; pass --snr-db to pick one", path.display()))),
    }
}

#[derive(Debug, Serialize)]
pub struct McReport {
    pub mode: &'static str,
    pub snr_db: f64,
    pub b: f64,
    pub samples: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub var_estimate: f64,
    pub analytic: f64,
}

fn simulate_parallel(model: &SimModel<'_>, samples: u64, seed: u64) -> Result<SimEstimate, CliError> {
    let chunks: Vec<u64> = (0..chunk_count(samples)).collect();
    let accs = try_map(&chunks, |&k| simulate_chunk(model, samples, seed, k))?;
    Ok(merge_chunks(&accs, seed))
}

/// `E[D]` of a quantized allocation under the continuous law: gains in
/// `[gamma_k, gamma_{k+1})` decode exactly `k` layers.
fn quantized_expected(fading: &ContinuousFading, levels: &DiscreteFading, realized: &[f64]) -> f64 {
    let gammas: Vec<f64> = levels.gammas().collect();
    let mut total = fading.cdf(gammas[0]);
    for (k, &g) in gammas.iter().enumerate() {
        let upper_tail = gammas.get(k + 1).map_or(0.0, |&next| fading.cdf_pair(next).1);
        total += (fading.cdf_pair(g).1 - upper_tail) * realized[k + 1];
    }
    total
}

fn montecarlo(cfg: &RunConfig) -> Result<Artifact, CliError> {
    let desc = descriptor(cfg)?;
    let b = cfg.b[0];
    let snr = cfg.snr_db.first().copied();
    let alloc = cfg.alloc.as_deref().map(|p| load_alloc(p, snr, b)).transpose()?;
    let discrete = desc.discrete()?;
    let mode = match cfg.mode {
        McMode::Auto if discrete.is_some() => McMode::Discrete,
        McMode::Auto if alloc.is_some() => McMode::Quantized,
        McMode::Auto => McMode::Continuous,
        m => m,
    };
    let snr_db = || {
        snr.or(alloc.as_ref().map(|a| a.snr_db)).ok_or_else(|| CliError::usage("montecarlo needs --snr-db or --alloc"))
    };

    let (name, snr_db, est, analytic) = match mode {
        McMode::Discrete => {
            let fading = desc.require_discrete()?;
            let snr_db = snr_db()?;
            let allocation = match &alloc {
                Some(a) => {
                    if a.per_layer.len() != fading.len() {
                        return Err(CliError::usage(format!(
                            "allocation has {} layers but the pmf has {}",
                            a.per_layer.len(),
                            fading.len()
                        )));
                    }
                    Allocation::from_powers(a.per_layer.clone())?
                }
                None => minimize_expected_distortion(&fading, db_to_linear(snr_db), b)?.allocation,
            };
            let model = SimModel::discrete(&fading, &allocation, b)?;
            let est = simulate_parallel(&model, cfg.samples, cfg.seed)?;
            ("discrete", snr_db, est, expected_distortion(&fading, &allocation, b)?)
        }
        McMode::Quantized => {
            let cont = desc.require_continuous()?;
            let a = alloc.ok_or_else(|| CliError::usage("quantized mode needs --alloc"))?;
            if a.gammas.len() != a.probs.len() || a.gammas.len() != a.per_layer.len() {
                return Err(CliError::usage("allocation point has inconsistent layer counts"));
            }
            let states = a.gammas.iter().zip(&a.probs).map(|(&gamma, &prob)| FadingState { gamma, prob }).collect();
            let outage = a.outage_prob.unwrap_or_else(|| (1.0 - a.probs.iter().sum::<f64>()).max(0.0));
            let levels = DiscreteFading::new(states, outage)?;
            let allocation = Allocation::from_powers(a.per_layer.clone())?;
            let model = SimModel::quantized(&cont, &levels, &allocation, b)?;
            let est = simulate_parallel(&model, cfg.samples, cfg.seed)?;
            let realized = realized_distortions(&levels, &allocation, b)?;
            ("quantized", a.snr_db, est, quantized_expected(&cont, &levels, &realized))
        }
        McMode::Continuous | McMode::Auto => {
            let cont = desc.require_continuous()?;
            let snr_db = snr.ok_or_else(|| CliError::usage("continuous mode needs --snr-db"))?;
            let sol = solve_with_profile(PowerProfile::new(&cont, b)?, db_to_linear(snr_db))?;
            let model = SimModel::continuous(&cont, &sol);
            let est = simulate_parallel(&model, cfg.samples, cfg.seed)?;
            ("continuous", snr_db, est, sol.min_expected_distortion())
        }
    };
    let report = McReport {
        mode: name,
        snr_db,
        b,
        samples: est.samples,
        seed: est.seed,
        mean: est.mean,
        std_error: est.std_error,
        var_estimate: est.var_estimate,
        analytic,
    };
    let table = || {
        let mut t =
            Table::new(&["mode", "snr_db", "b", "samples", "seed", "mean", "std_error", "var_estimate", "analytic"]);
        t.push(vec![
            Cell::Text(report.mode.into()),
            report.snr_db.into(),
            report.b.into(),
            Cell::Int(report.samples as i64),
            Cell::Text(report.seed.to_string()),
            report.mean.into(),
            report.std_error.into(),
            report.var_estimate.into(),
            report.analytic.into(),
        ]);
        t
    };
    render(cfg, table, &report)
}
