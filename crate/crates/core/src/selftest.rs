//! Scaled-down oracle suite with deterministic artifacts.
//!
//! Every check draws from fixed-seed generators, and the artifacts carry no
//! timings or paths, so two runs with the same [`SelftestConfig`] write
//! byte-identical files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::events::{reconstruct_mid_half, reconstruct_spread_half, EventType, N_TYPES};
use crate::gapmodel::{
    calibrate_kernels, decompose_impact, gapmodel_json, predict_diffusion_closure, predict_diffusion_constant,
    realized_gaps, KernelConfig, KernelTable,
};
use crate::ingest::{read_events, write_events};
use crate::propagator::{forward_response, predict_diffusion_temporary, propagator_json, solve_multi_event};
use crate::sim::{generate, GapProcess, GeneratorConfig, TypeProcess};
use crate::spread::{adjust_pi_tails, predict_spread_response, spread_autocorrelation, spread_json, SpreadModel};
use crate::stats::{estimate_correlations_with, estimate_responses, stats_json, StatsConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelftestConfig {
    pub n_events: usize,
    pub max_lag: usize,
    pub kernel_lag: usize,
    pub seed: u64,
}

impl Default for SelftestConfig {
    fn default() -> Self {
        SelftestConfig { n_events: 200_000, max_lag: 200, kernel_lag: 30, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// Artifact file names written by [`run_selftest`], in write order.
pub const ARTIFACTS: [&str; 6] =
    ["events.csv", "stats.json", "propagator.json", "gapmodel.json", "spread.json", "selftest.json"];

const AAPL_RATES: [f64; N_TYPES] = [0.043, 0.076, 0.32, 0.33, 0.077, 0.16];

fn normalized(p: [f64; N_TYPES]) -> [f64; N_TYPES] {
    let t: f64 = p.iter().sum();
    p.map(|x| x / t)
}

fn check(checks: &mut Vec<Check>, name: &str, pass: bool, detail: String) {
    checks.push(Check { name: name.into(), pass, detail });
}

fn write_json(dir: &Path, name: &str, v: &serde_json::Value) -> Result<()> {
    fs::write(dir.join(name), serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

/// Runs the suite and writes [`ARTIFACTS`] into `out_dir`, which is created
/// if missing. Check failures are reported, not returned as errors.
pub fn run_selftest(cfg: &SelftestConfig, out_dir: &Path) -> Result<SelftestReport> {
    fs::create_dir_all(out_dir)?;
    let mut checks = Vec::new();
    let (n, l, lk) = (cfg.n_events, cfg.max_lag, cfg.kernel_lag);

    // Correlated large-tick flow: exactness, CSV round trip, estimator identities.
    let s = generate(&GeneratorConfig::large_tick(n, cfg.seed))?;
    let mid = reconstruct_mid_half(&s)?;
    let spr = reconstruct_spread_half(&s)?;
    // Entry t + 1 of a reconstructed path is the state after event t.
    let exact = s.events.iter().enumerate().all(|(i, e)| mid[i + 1] == e.mid_after_half() && spr[i + 1] == e.spread_after_half());
    check(&mut checks, "exact_paths", exact, format!("{} events", s.len()));

    let mut csv = Vec::new();
    write_events(&s, &mut csv)?;
    let back = read_events(csv.as_slice(), &s.symbol, s.tick_size)?;
    check(&mut checks, "csv_round_trip", back.events == s.events, format!("{} bytes", csv.len()));
    fs::write(out_dir.join("events.csv"), &csv)?;

    let stats = StatsConfig { bootstrap_reps: 20, seed: cfg.seed, ..StatsConfig::with_lag(l + lk) };
    let corr = estimate_correlations_with(&s, &stats)?;
    let resp = estimate_responses(&s, &stats)?;
    let gaps = realized_gaps(&s)?;
    let mut c0_err: f64 = 0.0;
    let mut r1_err: f64 = 0.0;
    for a in corr.active_types() {
        c0_err = c0_err.max((corr.c(a, a, 0) - 1.0 / corr.probabilities[a]).abs());
        r1_err = r1_err.max((resp.r.get(a, 1) - gaps.of_type(a)).abs());
    }
    check(&mut checks, "c0_inverse_probability", c0_err <= 1e-9, format!("max error {c0_err:.2e}"));
    check(&mut checks, "r1_equals_delta_r", r1_err <= 1e-9, format!("max error {r1_err:.2e} ticks"));
    write_json(out_dir, "stats.json", &stats_json(&corr, &resp))?;

    let two: Vec<f64> = gaps.delta_r.iter().map(|d| 2.0 * d).collect();
    check(
        &mut checks,
        "large_tick_gaps",
        two.iter().all(|x| (1.0..=1.05).contains(x)),
        format!("2Δ^R = {:.3}/{:.3}/{:.3} ticks", two[0], two[1], two[2]),
    );
    let aapl = realized_gaps(&generate(&GeneratorConfig::aapl_like(n, cfg.seed + 1))?)?;
    check(
        &mut checks,
        "aapl_like_mop_gap",
        (2.0 * aapl.delta_r[0] - 1.31).abs() <= 0.05,
        format!("2Δ^R_MOp = {:.3} ticks", 2.0 * aapl.delta_r[0]),
    );

    // Propagator: the forward map must reproduce R to the solver residual.
    let g = solve_multi_event(&corr, &resp, None)?;
    let fwd = forward_response(&g, &corr)?;
    let (mut num, mut den) = (0.0, 0.0);
    for a in corr.active_types() {
        for lag in 1..=corr.max_lag {
            num += (fwd.get(a, lag) - resp.r.get(a, lag)).powi(2);
            den += resp.r.get(a, lag).powi(2);
        }
    }
    let fwd_res = (num / den).sqrt();
    check(
        &mut checks,
        "propagator_forward_residual",
        (fwd_res - g.residual).abs() <= 1e-9 * g.residual.max(1.0),
        format!("forward {fwd_res:.3e}, solver {:.3e}", g.residual),
    );
    let (d_temp, d_tail) = predict_diffusion_temporary(&g, &corr, l);
    write_json(out_dir, "propagator.json", &propagator_json(&g, Some((&d_temp, &d_tail))))?;

    // Constant gaps make K and K̃ identical, so κ vanishes to rounding; with
    // κ = 0 the closure collapses onto the constant-gap diffusion.
    let kcfg = KernelConfig { bootstrap_reps: 20, seed: cfg.seed, ..KernelConfig::with_lag(lk) };
    let cs = generate(&GeneratorConfig { gaps: GapProcess::Constant([1, 1, 1]), ..GeneratorConfig::large_tick(n, cfg.seed) })?;
    let ccorr = estimate_correlations_with(&cs, &StatsConfig { bootstrap_reps: 0, ..stats })?;
    let ck = calibrate_kernels(&cs, &ccorr, &KernelConfig { bootstrap_reps: 0, ..kcfg })?;
    let kmax = ck.kappa.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    check(&mut checks, "constant_gap_kappa_zero", kmax < 1e-10, format!("max |κ| = {kmax:.1e} ticks"));
    let kernels = calibrate_kernels(&s, &corr, &kcfg)?;
    let constant = predict_diffusion_constant(&gaps, &corr, l)?;
    let reduced = predict_diffusion_closure(&gaps, &KernelTable::zeros(lk), &corr, l, 0.0)?;
    let red_err = constant.iter().zip(&reduced).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(&mut checks, "closure_reduces_to_constant", red_err <= 1e-12, format!("max error {red_err:.2e} ticks^2"));
    let closure = predict_diffusion_closure(&gaps, &kernels.kappa, &corr, l, 0.0)?;
    let decomposition = decompose_impact(&gaps, &kernels, l);
    write_json(out_dir, "gapmodel.json", &gapmodel_json(&gaps, &kernels, &decomposition, &closure, 0.0))?;

    // Spread at α = 0 on a refill flow whose spread is bounded without
    // any explicit reversion.
    let base = normalized([AAPL_RATES[0], AAPL_RATES[1], AAPL_RATES[2], AAPL_RATES[3], AAPL_RATES[4], 0.0]);
    let mut m = [base; N_TYPES];
    for a in [EventType::MOp.index(), EventType::CAp.index()] {
        m[a] = [0.0; N_TYPES];
        m[a][EventType::LOp.index()] = 1.0;
    }
    let refill = GeneratorConfig {
        types: TypeProcess::Markov(m),
        initial_spread_half: 4,
        ..GeneratorConfig::iid(base, [1, 1, 1], n, cfg.seed + 2)
    };
    let rs = generate(&refill)?.trimmed(30, 40);
    let sstats = StatsConfig { bootstrap_reps: 50, seed: cfg.seed, ..StatsConfig::with_lag(l) };
    let pi = adjust_pi_tails(&estimate_correlations_with(&rs, &sstats)?);
    let emp = estimate_responses(&rs, &sstats)?.rs;
    let model = SpreadModel::from_stream(&rs, 0.0)?;
    let lmax = l / 2;
    let pred = predict_spread_response(&model, &pi, lmax)?;
    let mut sz: f64 = 0.0;
    for a in 0..N_TYPES {
        for lag in 1..=lmax {
            let (p, e, se) = (pred.get(a, lag), emp.get(a, lag), emp.se(a, lag));
            if p.is_finite() && e.is_finite() && se > 0.0 {
                sz = sz.max((p - e).abs() / se);
            }
        }
    }
    check(&mut checks, "spread_alpha_zero", sz <= 3.0, format!("max |z| = {sz:.2}"));
    let acf = spread_autocorrelation(&rs, l);
    write_json(out_dir, "spread.json", &spread_json(&model, &pred, &acf, true))?;

    let report = SelftestReport { checks };
    write_json(out_dir, "selftest.json", &json!({ "passed": report.passed(), "checks": report.checks }))?;
    Ok(report)
}
