//! Acceptance suite: one PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use layercast_core::bounds::{csit_perfect, csit_quantized, distortion_exponent_estimate, infinite_diversity};
use layercast_core::continuous_alloc::{capacity_maximizing_power, min_expected_distortion_continuous, upper_boundary};
use layercast_core::convex_cost::{minimize_cost, CostSpec};
use layercast_core::discrete_alloc::{brute_force_min, db_to_linear, minimize_expected_distortion};
use layercast_core::fading::{discretize_rayleigh, ContinuousFading, DiscreteFading, FadingState};
use layercast_core::montecarlo::{simulate, SimModel};
use layercast_core::two_layer::{optimal_split, TwoLayerParams};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    lo + (hi - lo) * u
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_two_layer(rng: &mut ChaCha20Rng) -> TwoLayerParams {
    let alpha = uniform(rng, 0.1, 3.0);
    TwoLayerParams::new(
        uniform(rng, 0.01, 1.0),
        uniform(rng, 0.01, 1.0),
        alpha,
        alpha * uniform(rng, 1.05, 20.0),
        uniform(rng, 0.25, 4.0),
    )
    .unwrap()
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`, endpoints included.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (f_lo, f_hi) = (f(lo), f(hi));
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    f1.min(f2).min(f_lo).min(f_hi)
}

fn two_layer_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = random_two_layer(&mut rng);
        for t1 in [0.1, 1.0, 10.0] {
            let closed = optimal_split(&p, t1).map_err(|e| e.to_string())?.min_distortion;
            let oracle = golden_min(|x| p.weighted_distortion(t1, x), 0.0, t1);
            worst = worst.max(rel(closed, oracle));
        }
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!("max rel err {worst:.2e} over 3000 cases, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn ceiling_independence() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let p = random_two_layer(&mut rng);
        let a = optimal_split(&p, 1.0).map_err(|e| e.to_string())?.ceiling;
        let b = optimal_split(&p, 100.0).map_err(|e| e.to_string())?.ceiling;
        if a != b {
            mismatches += 1;
        }
    }
    check(mismatches == 0, format!("{mismatches} of 1000 ceilings differ between T1 = 1 and T1 = 100"))
}

fn random_pmf(rng: &mut ChaCha20Rng, m: usize) -> DiscreteFading {
    let mut gammas: Vec<f64> = (0..m).map(|_| uniform(rng, 0.05, 5.0)).collect();
    gammas.sort_by(f64::total_cmp);
    let mut weights: Vec<f64> = (0..=m).map(|_| uniform(rng, 0.05, 1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let states = gammas.iter().zip(&weights[1..]).map(|(&gamma, &prob)| FadingState { gamma, prob }).collect();
    DiscreteFading::new(states, weights[0]).unwrap()
}

fn recursive_vs_brute_force() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..50 {
        let m = 2 + i % 3;
        let fading = random_pmf(&mut rng, m);
        let power = db_to_linear(uniform(&mut rng, -10.0, 20.0));
        let b = uniform(&mut rng, 0.25, 4.0);
        let ed = minimize_expected_distortion(&fading, power, b).map_err(|e| e.to_string())?.expected_distortion;
        let (_, grid) = brute_force_min(&fading, power, b, 1000).map_err(|e| e.to_string())?;
        worst = worst.max((ed - grid) / grid);
    }
    let elapsed = start.elapsed();
    check(
        worst <= 1e-3 && elapsed < Duration::from_secs(120),
        format!("max (E[D]* - grid)/grid = {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    )
}

fn rayleigh_24() -> DiscreteFading {
    discretize_rayleigh(1.0, 2.0, 24).unwrap()
}

fn convex_vs_recursive() -> Outcome {
    let fading = rayleigh_24();
    let mut worst: f64 = 0.0;
    for snr in [0.0, 5.0, 10.0] {
        for b in [0.5, 1.0, 2.0] {
            let p = db_to_linear(snr);
            let rec = minimize_expected_distortion(&fading, p, b).map_err(|e| e.to_string())?.expected_distortion;
            let cvx = minimize_cost(&fading, p, b, &CostSpec::expected()).map_err(|e| e.to_string())?.expected;
            worst = worst.max(rel(cvx, rec));
        }
    }
    check(worst <= 1e-5, format!("max rel diff {worst:.2e} over 9 cases"))
}

fn higher_layers_unaltered() -> Outcome {
    let fading = rayleigh_24();
    let lo = minimize_expected_distortion(&fading, db_to_linear(0.0), 1.0).map_err(|e| e.to_string())?;
    let hi = minimize_expected_distortion(&fading, db_to_linear(10.0), 1.0).map_err(|e| e.to_string())?;
    let (a, b) = (&lo.allocation, &hi.allocation);
    let (lo_first, lo_top) = (a.lowest_active().unwrap(), a.highest_active().unwrap());
    let (hi_first, hi_top) = (b.lowest_active().unwrap(), b.highest_active().unwrap());
    let m = fading.len();
    let top_inactive = lo_top + 1 < m && hi_top + 1 < m;
    // The lowest active layer takes whatever power the layers above leave,
    // so only the layers strictly above it (at both powers) are fixed.
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for i in (lo_first + 1).max(hi_first + 1)..=lo_top {
        worst = worst.max((a.per_layer()[i] - b.per_layer()[i]).abs());
        compared += 1;
    }
    check(
        top_inactive && compared > 0 && worst <= 1e-6,
        format!(
            "active layers {}..={} at 0 dB, {}..={} at 10 dB (of {m}); {compared} compared, max |dP| {worst:.2e}",
            lo_first + 1,
            lo_top + 1,
            hi_first + 1,
            hi_top + 1
        ),
    )
}

fn outage_floor() -> Outcome {
    let fading = rayleigh_24();
    let ed =
        minimize_expected_distortion(&fading, db_to_linear(60.0), 1.0).map_err(|e| e.to_string())?.expected_distortion;
    let p0 = fading.outage_prob();
    check(rel(ed, p0) <= 0.01, format!("E[D]* = {ed:.6e}, p0 = {p0:.6e}, rel {:.2e}", rel(ed, p0)))
}

fn rayleigh_boundary() -> Outcome {
    let mut worst: f64 = 0.0;
    for mean in [0.5, 1.0, 3.0] {
        let g = upper_boundary(&ContinuousFading::rayleigh(mean).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((g - mean).abs());
    }
    check(worst <= 1e-10, format!("max |gamma_o - mean| = {worst:.2e}"))
}

fn discrete_to_continuous() -> Outcome {
    let cont = min_expected_distortion_continuous(&ContinuousFading::rayleigh(1.0).unwrap(), 1.0, 1.0)
        .map_err(|e| e.to_string())?
        .min_expected_distortion();
    let mut errs = Vec::new();
    for m in [50, 100, 200, 500] {
        let f = discretize_rayleigh(1.0, 8.0, m).unwrap();
        let ed = minimize_expected_distortion(&f, 1.0, 1.0).map_err(|e| e.to_string())?.expected_distortion;
        errs.push(rel(ed, cont));
    }
    let monotone = errs.windows(2).all(|w| w[1] < w[0]);
    let last = *errs.last().unwrap();
    check(
        monotone && last <= 0.01,
        format!("rel errors {:?}", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()),
    )
}

fn capacity_limit() -> Outcome {
    let f = ContinuousFading::rayleigh(1.0).unwrap();
    let sol = min_expected_distortion_continuous(&f, 1e-3, 1.0).map_err(|e| e.to_string())?;
    let (lo, hi) = (sol.gamma_p() + 0.05, sol.gamma_o() - 0.01);
    let mut worst: f64 = 0.0;
    for i in 0..=200 {
        let g = lo + (hi - lo) * i as f64 / 200.0;
        let u = sol.profile().cumulative_power(g).map_err(|e| e.to_string())?;
        let cap = capacity_maximizing_power(&f, g).map_err(|e| e.to_string())?;
        worst = worst.max(rel(u, cap));
    }
    check(worst <= 0.01, format!("sup rel dev {worst:.2e} on [{lo:.4}, {hi:.4}]"))
}

fn distortion_exponent() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (b, l) in [(2.0, 1u32), (2.0, 3)] {
        let f = ContinuousFading::erlang(l, 1.0).unwrap();
        let pts = (0..=10)
            .map(|i| {
                let s = 40.0 + 2.0 * i as f64;
                min_expected_distortion_continuous(&f, b, db_to_linear(s)).map(|x| (s, x.min_expected_distortion()))
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| e.to_string())?;
        let slope = distortion_exponent_estimate(&pts, 40.0, 60.0).map_err(|e| e.to_string())?;
        let target = b.min(l as f64);
        ok &= rel(slope, target) <= 0.1;
        parts.push(format!("(b={b}, L={l}): {slope:.4} vs {target}"));
    }
    check(ok, parts.join("; "))
}

fn monte_carlo() -> Outcome {
    let fading = rayleigh_24();
    let res = minimize_expected_distortion(&fading, 1.0, 1.0).map_err(|e| e.to_string())?;
    let model = SimModel::discrete(&fading, &res.allocation, 1.0).map_err(|e| e.to_string())?;
    let a = simulate(&model, 1_000_000, 42).map_err(|e| e.to_string())?;
    let b = simulate(&model, 1_000_000, 42).map_err(|e| e.to_string())?;
    let z = (a.mean - res.expected_distortion).abs() / a.std_error;
    let identical = a.mean.to_bits() == b.mean.to_bits() && a.std_error.to_bits() == b.std_error.to_bits();

    // Through the CLI, at different thread counts.
    let args = ["montecarlo", "--fading", r#"{"kind":"rayleigh","discretize":{"truncation":2,"levels":24}}"#];
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_layercast"))
            .args(args)
            .args(["--snr-db", "0", "--b", "1", "--samples", "1000000", "--seed", "42"])
            .env("LAYERCAST_THREADS", threads)
            .output()
            .map(|o| o.stdout)
            .map_err(|e| e.to_string())
    };
    let cli_identical = run("1")? == run("3")?;
    check(
        z <= 3.0 && identical && cli_identical,
        format!(
            "mean {:.6} ± {:.1e} vs {:.6} ({z:.2} SE); rerun identical: {identical}, CLI 1 vs 3 threads identical: {cli_identical}",
            a.mean, a.std_error, res.expected_distortion
        ),
    )
}

fn risk_tradeoff() -> Outcome {
    let fading = rayleigh_24();
    let mut pts = Vec::new();
    for phi in [0.0, 1.0, 5.0, 10.0] {
        let s = minimize_cost(&fading, 1.0, 0.5, &CostSpec::risk_sensitive(phi)).map_err(|e| e.to_string())?;
        pts.push((s.expected, s.variance));
    }
    let tol = 1e-9;
    let e_up = pts.windows(2).all(|w| w[1].0 >= w[0].0 * (1.0 - tol));
    let v_down = pts.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + tol));
    check(
        e_up && v_down,
        format!("(E, VAR): {}", pts.iter().map(|(e, v)| format!("({e:.5}, {v:.3e})")).collect::<Vec<_>>().join(" ")),
    )
}

fn bound_ordering() -> Outcome {
    let q = rayleigh_24();
    let r = ContinuousFading::rayleigh(1.0).unwrap();
    let e64 = ContinuousFading::erlang(64, 1.0).unwrap();
    let tol = 1e-9;
    let mut violations = Vec::new();
    for i in 0..=10 {
        let snr = -10.0 + 5.0 * i as f64;
        let p = db_to_linear(snr);
        for b in [0.5, 2.0] {
            let perfect = csit_perfect(&r, p, b).map_err(|e| e.to_string())?;
            let quant = csit_quantized(&q, p, b).map_err(|e| e.to_string())?;
            let none = minimize_expected_distortion(&q, p, b).map_err(|e| e.to_string())?.expected_distortion;
            let inf = infinite_diversity(1.0, p, b).map_err(|e| e.to_string())?;
            let cont =
                min_expected_distortion_continuous(&e64, b, p).map_err(|e| e.to_string())?.min_expected_distortion();
            if !(perfect <= quant * (1.0 + tol) && quant <= none * (1.0 + tol) && inf <= cont * (1.0 + tol)) {
                violations.push(format!("{snr} dB, b = {b}"));
            }
        }
    }
    check(violations.is_empty(), format!("22 (SNR, b) points, violations: {violations:?}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        ("two-layer closed form vs golden section", two_layer_oracle),
        ("power ceiling independent of total power", ceiling_independence),
        ("recursive allocation vs brute-force grid", recursive_vs_brute_force),
        ("convex solver vs recursive allocation", convex_vs_recursive),
        ("higher-layer powers unaltered as power grows", higher_layers_unaltered),
        ("outage floor at high SNR", outage_floor),
        ("Rayleigh upper boundary equals mean gain", rayleigh_boundary),
        ("discrete optimum converges to continuous", discrete_to_continuous),
        ("small-b limit maximizes expected capacity", capacity_limit),
        ("distortion exponent min(b, L)", distortion_exponent),
        ("Monte Carlo agreement and reproducibility", monte_carlo),
        ("risk-sensitivity tradeoff", risk_tradeoff),
        ("bound ordering", bound_ordering),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS {:>2} {name}: {d} [{secs:.2} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {d} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
