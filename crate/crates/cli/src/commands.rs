use std::fs;
use std::path::Path;

use eventimpact::gapmodel::{
    calibrate_kernels, decompose_impact, gapmodel_json, predict_diffusion_closure, predict_diffusion_constant,
    realized_gaps, KernelConfig,
};
use eventimpact::ingest::{classify_with_report, load_event_csv_with, read_bbo_csv, read_trades_csv, write_event_csv};
use eventimpact::propagator::{predict_diffusion_temporary, propagator_json, solve_multi_event, solve_single_event};
use eventimpact::selftest::{run_selftest, SelftestConfig};
use eventimpact::sim::{generate_with_report, load_config};
use eventimpact::spread::{
    adjust_pi_tails, default_alpha_grid, fit_alpha, predict_spread_response, spread_autocorrelation, spread_json,
    SpreadModel,
};
use eventimpact::stats::{estimate_correlations_with, estimate_responses, single_event_inputs, stats_csv, stats_json};
use eventimpact::{EventStream, EventType, IngestConfig, StatsConfig};
use serde_json::{json, Map, Value};

use crate::curves::curves_csv;
use crate::{Input, Model, Trim};

pub struct CliError {
    pub kind: String,
    pub message: String,
}

impl From<eventimpact::Error> for CliError {
    fn from(e: eventimpact::Error) -> Self {
        CliError { kind: e.kind().into(), message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        eventimpact::Error::from(e).into()
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        eventimpact::Error::from(e).into()
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn invalid(message: impl Into<String>) -> CliError {
    CliError { kind: "ConfigInvalid".into(), message: message.into() }
}

/// Trim used when `--trim` is absent: none for the event-time estimators,
/// 30 and 40 minutes for the gap-kernel and spread estimators.
const ESTIMATOR_TRIM: Trim = Trim(0, 0);
const MODEL_TRIM: Trim = Trim(30, 40);

fn load(input: &Input, default_trim: Trim) -> Result<(EventStream, Trim)> {
    let symbol = match &input.symbol {
        Some(s) => s.clone(),
        None => input.input.file_stem().and_then(|s| s.to_str()).unwrap_or("SYM").to_string(),
    };
    let s = load_event_csv_with(&input.input, &symbol, input.tick_size)?;
    let trim = input.trim.unwrap_or(default_trim);
    let s = if trim == Trim(0, 0) { s } else { s.trimmed(trim.0, trim.1) };
    Ok((s, trim))
}

fn stats_config(input: &Input, max_lag: usize) -> StatsConfig {
    StatsConfig { bootstrap_reps: input.bootstrap, seed: input.seed, ..StatsConfig::with_lag(max_lag) }
}

fn kernel_config(input: &Input, model: &Model) -> KernelConfig {
    KernelConfig { lambda: model.lambda, bootstrap_reps: input.bootstrap, seed: input.seed, ..KernelConfig::with_lag(model.kernel_lag) }
}

fn meta(command: &str, s: &EventStream, input: &Input, trim: Trim) -> Value {
    json!({
        "command": command,
        "symbol": s.symbol,
        "tick_size": s.tick_size,
        "events": s.len(),
        "days": s.day_ranges().len(),
        "max_lag": input.max_lag,
        "trim_minutes": [trim.0, trim.1],
        "bootstrap": input.bootstrap,
        "seed": input.seed,
        "threads": input.threads,
    })
}

fn with_meta(mut doc: Value, meta: Value) -> Value {
    doc["meta"] = meta;
    doc
}

/// Adds unit entries for keys the library documents leave implicit.
fn add_units(doc: &mut Value, extra: &[(&str, &str)]) {
    if !doc["units"].is_object() {
        doc["units"] = json!({});
    }
    let units = doc["units"].as_object_mut().unwrap();
    for (k, u) in extra {
        units.entry(k.to_string()).or_insert_with(|| json!(u));
    }
}

fn emit(doc: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(doc)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn nullable(v: &[f64]) -> Vec<Value> {
    v.iter().map(|&x| if x.is_finite() { json!(x) } else { Value::Null }).collect()
}

pub fn ingest(
    bbo: &Path,
    trades: &Path,
    out: &Path,
    symbol: String,
    tick_size: f64,
    utc_offset: i32,
    counts: Option<&Path>,
) -> Result<()> {
    let cfg = IngestConfig { symbol, tick_size, utc_offset_minutes: utc_offset, ..IngestConfig::default() };
    let (stream, report) = classify_with_report(&read_bbo_csv(bbo)?, &read_trades_csv(trades)?, &cfg)?;
    write_event_csv(&stream, out)?;
    let doc = json!({
        "events": stream.len(),
        "segments": stream.day_ranges().len(),
        "balanced": report.balanced(),
        "total": report.total(),
        "report": report,
    });
    emit(&doc, counts)
}

fn stats_docs(input: &Input) -> Result<(Value, String)> {
    let (s, trim) = load(input, ESTIMATOR_TRIM)?;
    let cfg = stats_config(input, input.max_lag);
    let corr = estimate_correlations_with(&s, &cfg)?;
    let resp = estimate_responses(&s, &cfg)?;
    Ok((with_meta(stats_json(&corr, &resp), meta("stats", &s, input, trim)), stats_csv(&corr, &resp)))
}

pub fn stats(input: &Input, csv: Option<&Path>) -> Result<()> {
    let (doc, long) = stats_docs(input)?;
    if let Some(p) = csv {
        fs::write(p, long)?;
    }
    emit(&doc, input.out.as_deref())
}

fn propagate_doc(input: &Input, model: &Model) -> Result<Value> {
    let (s, trim) = load(input, ESTIMATOR_TRIM)?;
    let cfg = stats_config(input, input.max_lag);
    let corr = estimate_correlations_with(&s, &cfg)?;
    let resp = estimate_responses(&s, &cfg)?;
    let mut g = solve_multi_event(&corr, &resp, model.lambda)?;
    let (r, c) = single_event_inputs(&s, input.max_lag, 0.0)?;
    g.baseline = Some(solve_single_event(&r, &c, model.lambda)?.0);
    let (d, tail) = predict_diffusion_temporary(&g, &corr, input.max_lag);
    let mut doc = propagator_json(&g, Some((&d, &tail)));
    add_units(&mut doc, &[("baselineG", "ticks"), ("D_tail_estimate", "ticks^2")]);
    Ok(with_meta(doc, meta("propagate", &s, input, trim)))
}

pub fn propagate(input: &Input, model: &Model) -> Result<()> {
    emit(&propagate_doc(input, model)?, input.out.as_deref())
}

/// Gap-model document and the closure comparison, which share one calibration.
fn gap_docs(input: &Input, model: &Model) -> Result<(Value, Value)> {
    let (s, trim) = load(input, MODEL_TRIM)?;
    let l = input.max_lag;
    let corr = estimate_correlations_with(&s, &stats_config(input, l + model.kernel_lag))?;
    let resp = estimate_responses(&s, &stats_config(input, l))?;
    let gaps = realized_gaps(&s)?;
    let kernels = calibrate_kernels(&s, &corr, &kernel_config(input, model))?;
    let decomposition = decompose_impact(&gaps, &kernels, l);
    let closure = predict_diffusion_closure(&gaps, &kernels.kappa, &corr, l, model.d0)?;
    let constant = predict_diffusion_constant(&gaps, &corr, l)?;

    let mut gm = gapmodel_json(&gaps, &kernels, &decomposition, &closure, model.d0);
    add_units(
        &mut gm,
        &[
            ("Ktilde", "ticks"),
            ("kappa", "ticks"),
            ("kappa_se", "ticks"),
            ("Gstar", "ticks"),
            ("dGstar", "ticks"),
            ("Ghat", "ticks"),
            ("Dclosure", "ticks^2"),
            ("D0", "ticks^2"),
            ("residual_var", "ticks^2"),
            ("residual_var_tilde", "ticks^2"),
        ],
    );
    gm["meta"] = meta("gaps", &s, input, trim);
    gm["meta"]["kernel_lag"] = json!(model.kernel_lag);

    let per_lag = |v: &[f64]| -> Vec<Value> {
        (1..=l).map(|k| if v[k].is_finite() { json!(v[k] / k as f64) } else { Value::Null }).collect()
    };
    let d = &resp.d.values;
    let mut cl = json!({
        "units": {
            "D_empirical": "ticks^2", "D_empirical_se": "ticks^2", "D_constant": "ticks^2", "D_closure": "ticks^2",
            "D_empirical_over_lag": "ticks^2", "D_constant_over_lag": "ticks^2", "D_closure_over_lag": "ticks^2",
            "D0": "ticks^2", "lags": "events",
        },
        "lags": (1..=l).collect::<Vec<_>>(),
        "D_empirical": nullable(&d[1..]),
        "D_empirical_se": nullable(&resp.d.stderr[1..]),
        "D_constant": nullable(&constant[1..]),
        "D_closure": nullable(&closure[1..]),
        "D_empirical_over_lag": per_lag(d),
        "D_constant_over_lag": per_lag(&constant),
        "D_closure_over_lag": per_lag(&closure),
        "D0": model.d0,
        "meta": gm["meta"],
    });
    cl["meta"]["command"] = json!("closure");
    Ok((gm, cl))
}

pub fn gaps(input: &Input, model: &Model) -> Result<()> {
    emit(&gap_docs(input, model)?.0, input.out.as_deref())
}

pub fn closure(input: &Input, model: &Model) -> Result<()> {
    emit(&gap_docs(input, model)?.1, input.out.as_deref())
}

fn spread_doc(input: &Input, model: &Model) -> Result<Value> {
    let (s, trim) = load(input, MODEL_TRIM)?;
    let l = input.max_lag;
    let cfg = stats_config(input, l);
    let pi = adjust_pi_tails(&estimate_correlations_with(&s, &cfg)?);
    let emp = estimate_responses(&s, &cfg)?.rs;
    let base = SpreadModel::from_stream(&s, 0.0)?;
    let (alpha, fit) = match model.alpha {
        Some(a) => (a, Value::Null),
        None => {
            let f = fit_alpha(&base, &pi, &emp, l, &default_alpha_grid())?;
            let grid: Vec<Value> = f.grid.iter().map(|(a, e)| json!({"alpha": a, "sse": e})).collect();
            (f.alpha, json!({ "alpha": f.alpha, "sse": f.sse, "grid": grid }))
        }
    };
    let m = base.with_alpha(alpha)?;
    let pred = predict_spread_response(&m, &pi, l)?;
    let acf = spread_autocorrelation(&s, l);
    let mut doc = spread_json(&m, &pred, &acf, true);
    let mut rs_emp = Map::new();
    let mut rs_se = Map::new();
    for t in EventType::ALL {
        if m.probabilities[t.index()] > 0.0 {
            rs_emp.insert(t.code().into(), json!(nullable(emp.curve(t.index()))));
            let se: Vec<f64> = (0..=l).map(|k| emp.se(t.index(), k)).collect();
            rs_se.insert(t.code().into(), json!(nullable(&se)));
        }
    }
    doc["RS_emp"] = Value::Object(rs_emp);
    doc["RS_emp_se"] = Value::Object(rs_se);
    doc["alpha_fit"] = fit;
    doc["lags"] = json!((0..=l).collect::<Vec<_>>());
    add_units(
        &mut doc,
        &[
            ("alpha", "per event"),
            ("meanS", "ticks"),
            ("meanS_by_type", "ticks"),
            ("RS_pred", "ticks"),
            ("RS_emp", "ticks"),
            ("RS_emp_se", "ticks"),
            ("spread_acf", "dimensionless"),
            ("lags", "events"),
        ],
    );
    Ok(with_meta(doc, meta("spread", &s, input, trim)))
}

pub fn spread(input: &Input, model: &Model) -> Result<()> {
    emit(&spread_doc(input, model)?, input.out.as_deref())
}

pub fn simulate(config: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let (stream, report) = generate_with_report(&cfg)?;
    write_event_csv(&stream, out)?;
    let doc = json!({
        "events": stream.len(),
        "days": stream.day_ranges().len(),
        "seed": cfg.seed,
        "floored_gaps": report.floored_gaps,
        "blocked_lop": report.blocked_lop,
    });
    emit(&doc, None)
}

pub fn report(input: &Input, model: &Model) -> Result<()> {
    let dir = input.out.as_deref().ok_or_else(|| invalid("report needs --out DIR"))?;
    fs::create_dir_all(dir)?;
    let (stats, long) = stats_docs(input)?;
    let prop = propagate_doc(input, model)?;
    let (gm, cl) = gap_docs(input, model)?;
    let sp = spread_doc(input, model)?;
    fs::write(dir.join("stats.csv"), long)?;
    let families = [("stats", &stats), ("propagator", &prop), ("gapmodel", &gm), ("closure", &cl), ("spread", &sp)];
    for (name, doc) in families {
        emit(doc, Some(&dir.join(format!("{name}.json"))))?;
    }
    fs::write(dir.join("curves.csv"), curves_csv(&families))?;
    Ok(())
}

pub fn selftest(out: &Path, events: usize, max_lag: usize, kernel_lag: usize, seed: u64) -> Result<()> {
    let cfg = SelftestConfig { n_events: events, max_lag, kernel_lag, seed };
    let report = run_selftest(&cfg, out)?;
    emit(&json!({ "passed": report.passed(), "checks": report.checks }), None)?;
    if report.passed() {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        Err(CliError { kind: "SelftestFailed".into(), message: format!("failed checks: {}", failed.join(", ")) })
    }
}
