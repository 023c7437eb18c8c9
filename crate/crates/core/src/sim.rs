//! Synthetic event streams used as ground truth for every estimator.
//!
//! A generator combines an event-type process, a sign process and a gap
//! process. All randomness flows from one seed, so a config always yields the
//! same stream.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use crate::error::{Error, Result};
use crate::events::{EventStream, EventType, MarketEvent, N_TYPES};
use crate::gapmodel::{KernelTable, RealizedGaps};

#[derive(Debug, Clone, PartialEq)]
pub enum TypeProcess {
    Iid([f64; N_TYPES]),
    /// Row `a` is the distribution of the next type given the current type `a`.
    Markov([[f64; N_TYPES]; N_TYPES]),
    /// Cycles through a recorded type sequence.
    Replay(Vec<EventType>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum SignProcess {
    Iid,
    /// Side series is the sign of a fractionally integrated Gaussian whose
    /// autocorrelation decays as `ℓ^-gamma`; signs follow from sides.
    LongMemory { gamma: f64 },
    /// With probability `persistence[type]` an event copies the previous
    /// sign, otherwise it draws a fair sign.
    PerType { persistence: [f64; N_TYPES] },
}

/// Gap distributions are given per price-changing type, in the order
/// MOp, CAp, LOp.
#[derive(Debug, Clone, PartialEq)]
pub enum GapProcess {
    /// Fixed gap in half-ticks.
    Constant([i64; 3]),
    /// Discrete distribution over half-tick gaps: `(gap, probability)`.
    Discrete([Vec<(i64, f64)>; 3]),
    /// Gap dynamics of the final history-dependent model. `kappa` is in the
    /// regression convention (`K - K̃`), so an event of type `π` receives
    /// `κ / P(π)` per past signed event.
    PlantedKernels { delta_r: [f64; 3], kappa: KernelTable, noise: f64 },
    /// Signed spread jumps `Δ̄^R + (alpha / P_pc)(S̄ - S_t)`, so the spread
    /// reverts at rate `alpha` per event.
    SpreadReverting { alpha: f64, base_gap: [f64; 3], mean_spread: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub symbol: String,
    pub tick_size: f64,
    pub n_events: usize,
    pub events_per_day: usize,
    pub seed: u64,
    pub types: TypeProcess,
    pub signs: SignProcess,
    pub gaps: GapProcess,
    pub initial_spread_half: i64,
}

/// Counters describing adjustments made while generating.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationReport {
    /// Price-changing gaps that fell below one half-tick and were floored.
    pub floored_gaps: u64,
    /// Spread-improving limit orders turned into LO0 because the spread was
    /// already one tick.
    pub blocked_lop: u64,
}

pub const PC_SLOT: [Option<usize>; N_TYPES] = [None, Some(0), None, None, Some(1), Some(2)];

const DAY_NS: i64 = 86_400_000_000_000;
/// 2020-09-14 00:00 UTC, a Monday.
const EPOCH_DAY: i64 = 18_519;
const OPEN_NS: i64 = (14 * 60 + 30) * 60_000_000_000;
const SESSION_NS: i64 = 390 * 60_000_000_000;

impl GeneratorConfig {
    pub fn iid(probs: [f64; N_TYPES], gaps_half: [i64; 3], n_events: usize, seed: u64) -> Self {
        GeneratorConfig {
            symbol: "SYN".into(),
            tick_size: 0.01,
            n_events,
            events_per_day: 20_000,
            seed,
            types: TypeProcess::Iid(probs),
            signs: SignProcess::Iid,
            gaps: GapProcess::Constant(gaps_half),
            initial_spread_half: 2,
        }
    }

    /// Large-tick-like flow with event rates of a liquid large-tick stock
    /// and gaps almost always half a tick.
    pub fn large_tick(n_events: usize, seed: u64) -> Self {
        let probs = normalize([0.052, 0.0073, 0.40, 0.54, 0.0008, 0.0081]);
        GeneratorConfig {
            symbol: "LARGE".into(),
            tick_size: 0.01,
            n_events,
            events_per_day: 50_000,
            seed,
            types: TypeProcess::Iid(probs),
            signs: SignProcess::LongMemory { gamma: 0.7 },
            gaps: GapProcess::Discrete([vec![(1, 1.0)], vec![(1, 0.99), (2, 0.01)], vec![(1, 0.99), (2, 0.01)]]),
            initial_spread_half: 2,
        }
    }

    /// Small-tick flow with AAPL-like event rates and gap distributions whose
    /// means are 1.31, 1.27 and 1.27 half-ticks.
    pub fn aapl_like(n_events: usize, seed: u64) -> Self {
        let probs = normalize([0.043, 0.076, 0.32, 0.33, 0.077, 0.16]);
        GeneratorConfig {
            symbol: "AAPLX".into(),
            tick_size: 0.01,
            n_events,
            events_per_day: 50_000,
            seed,
            types: TypeProcess::Iid(probs),
            signs: SignProcess::LongMemory { gamma: 0.7 },
            gaps: GapProcess::Discrete([
                vec![(1, 0.72), (2, 0.25), (3, 0.03)],
                vec![(1, 0.76), (2, 0.21), (3, 0.03)],
                vec![(1, 0.76), (2, 0.21), (3, 0.03)],
            ]),
            initial_spread_half: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        if !(self.tick_size > 0.0) {
            return bad("tick_size must be positive".into());
        }
        if self.events_per_day == 0 {
            return bad("events_per_day must be positive".into());
        }
        let check_probs = |p: &[f64], what: &str| -> Result<()> {
            if p.iter().any(|&x| !(x >= 0.0)) || (p.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::ConfigInvalid(format!("{what} must be non-negative and sum to 1")));
            }
            Ok(())
        };
        match &self.types {
            TypeProcess::Iid(p) => check_probs(p, "type probabilities")?,
            TypeProcess::Markov(m) => {
                for row in m {
                    check_probs(row, "markov rows")?;
                }
            }
            TypeProcess::Replay(v) => {
                if v.is_empty() && self.n_events > 0 {
                    return bad("replay sequence is empty".into());
                }
            }
        }
        match &self.signs {
            SignProcess::Iid => {}
            SignProcess::LongMemory { gamma } => {
                if !(*gamma > 0.0 && *gamma < 1.0) {
                    return bad(format!("gamma must lie in (0, 1), got {gamma}"));
                }
            }
            SignProcess::PerType { persistence } => {
                if persistence.iter().any(|&r| !(0.0..=1.0).contains(&r)) {
                    return bad("persistence must lie in [0, 1]".into());
                }
            }
        }
        match &self.gaps {
            GapProcess::Constant(g) => {
                if g.iter().any(|&x| x < 1) {
                    return bad("constant gaps must be at least one half-tick".into());
                }
            }
            GapProcess::Discrete(d) => {
                for dist in d {
                    check_probs(&dist.iter().map(|x| x.1).collect::<Vec<_>>(), "gap distribution")?;
                    if dist.iter().any(|x| x.0 < 1) {
                        return bad("discrete gaps must be at least one half-tick".into());
                    }
                }
            }
            GapProcess::PlantedKernels { delta_r, noise, .. } => {
                if delta_r.iter().any(|&x| !(x > 0.0)) || !(*noise >= 0.0) {
                    return bad("delta_r must be positive and noise non-negative".into());
                }
            }
            GapProcess::SpreadReverting { alpha, base_gap, mean_spread } => {
                if !(*alpha >= 0.0 && *alpha < 1.0) || base_gap.iter().any(|&x| !(x > 0.0)) || !(*mean_spread >= 1.0) {
                    return bad("spread reverting needs alpha in [0,1), positive gaps, mean spread >= 1 tick".into());
                }
            }
        }
        Ok(())
    }

    /// Long-run type frequencies implied by the type process.
    pub fn stationary_probabilities(&self) -> [f64; N_TYPES] {
        match &self.types {
            TypeProcess::Iid(p) => *p,
            TypeProcess::Markov(m) => {
                let mut p = [1.0 / N_TYPES as f64; N_TYPES];
                for _ in 0..10_000 {
                    let mut q = [0.0; N_TYPES];
                    for a in 0..N_TYPES {
                        for b in 0..N_TYPES {
                            q[b] += p[a] * m[a][b];
                        }
                    }
                    p = q;
                }
                p
            }
            TypeProcess::Replay(v) => {
                let mut c = [0.0; N_TYPES];
                for t in v {
                    c[t.index()] += 1.0;
                }
                normalize(c)
            }
        }
    }
}

fn normalize<const K: usize>(p: [f64; K]) -> [f64; K] {
    let s: f64 = p.iter().sum();
    p.map(|x| x / s)
}

fn draw(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Unbiased randomized rounding to an integer.
fn stochastic_round(rng: &mut ChaCha8Rng, x: f64) -> i64 {
    let f = x.floor();
    let frac = x - f;
    let u: f64 = rng.random();
    f as i64 + (u < frac) as i64
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// MA(∞) weights of fractional integration of order `d`, truncated.
pub fn farima_weights(d: f64, len: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(len);
    psi.push(1.0);
    for j in 1..len {
        let prev = psi[j - 1];
        psi.push(prev * (j as f64 - 1.0 + d) / j as f64);
    }
    psi
}

/// Gaussian FARIMA(0, d, 0) path with `d = (1 - gamma) / 2`, by FFT
/// convolution of white noise with the truncated MA weights.
pub fn farima_gaussian(n: usize, gamma: f64, seed: u64) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let d = (1.0 - gamma) / 2.0;
    let m = (1usize << 16).min(4 * n).max(16);
    let psi = farima_weights(d, m);
    let total = n + m;
    let size = total.next_power_of_two() * 2;
    let mut rng = rng_stream(seed, 11);
    let mut z: Vec<Complex<f64>> = (0..total)
        .map(|_| Complex::new(rng.sample::<f64, _>(StandardNormal), 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut h: Vec<Complex<f64>> = psi
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    fwd.process(&mut z);
    fwd.process(&mut h);
    for (a, b) in z.iter_mut().zip(&h) {
        *a *= b;
    }
    inv.process(&mut z);
    z[m..m + n].iter().map(|c| c.re / size as f64).collect()
}

/// Signs whose autocorrelation decays as `ℓ^-gamma`.
pub fn long_memory_signs(n: usize, gamma: f64, seed: u64) -> Vec<i8> {
    farima_gaussian(n, gamma, seed).into_iter().map(|x| if x >= 0.0 { 1 } else { -1 }).collect()
}

/// Propagator `G(ℓ) = Σ_{j<ℓ} π_j` of fractional differencing of order `d`,
/// for `ℓ = 0..len`. A price built with it from a fractionally integrated
/// flow has uncorrelated increments; it decays as `ℓ^-d`.
pub fn fractional_propagator(d: f64, len: usize) -> Vec<f64> {
    let mut g = vec![0.0; len];
    let mut coef = 1.0;
    let mut acc = 0.0;
    for (j, slot) in g.iter_mut().enumerate().skip(1) {
        acc += coef;
        *slot = acc;
        coef *= (j as f64 - 1.0 - d) / j as f64;
    }
    g
}

/// `p_t = Σ_{0<n≤t} G(n) x_{t-n}` for `t = 0..=x.len()`, by FFT convolution.
pub fn propagator_price(x: &[f64], g: &[f64]) -> Vec<f64> {
    let n = x.len() + 1;
    let size = (x.len() + g.len()).next_power_of_two();
    let pad = |v: &[f64]| {
        let mut b: Vec<Complex<f64>> = v.iter().map(|&a| Complex::new(a, 0.0)).collect();
        b.resize(size, Complex::new(0.0, 0.0));
        b
    };
    let mut a = pad(x);
    let mut b = pad(g);
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut a);
    planner.plan_fft_forward(size).process(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    planner.plan_fft_inverse(size).process(&mut a);
    (0..n).map(|t| if t < size { a[t].re / size as f64 } else { 0.0 }).collect()
}

pub fn generate(config: &GeneratorConfig) -> Result<EventStream> {
    Ok(generate_with_report(config)?.0)
}

pub fn generate_with_report(config: &GeneratorConfig) -> Result<(EventStream, GenerationReport)> {
    config.validate()?;
    let n = config.n_events;
    let mut report = GenerationReport::default();
    let mut type_rng = rng_stream(config.seed, 1);
    let mut sign_rng = rng_stream(config.seed, 2);
    let mut gap_rng = rng_stream(config.seed, 3);

    let mut types = Vec::with_capacity(n);
    let mut prev = 0usize;
    for t in 0..n {
        let ty = match &config.types {
            TypeProcess::Iid(p) => draw(&mut type_rng, p),
            TypeProcess::Markov(m) => {
                if t == 0 {
                    draw(&mut type_rng, &config.stationary_probabilities())
                } else {
                    draw(&mut type_rng, &m[prev])
                }
            }
            TypeProcess::Replay(v) => v[t % v.len()].index(),
        };
        types.push(ty);
        prev = ty;
    }

    let sides: Option<Vec<i8>> = match &config.signs {
        SignProcess::LongMemory { gamma } => Some(
            farima_gaussian(n, *gamma, config.seed)
                .into_iter()
                .map(|x| if x >= 0.0 { 1 } else { -1 })
                .collect(),
        ),
        _ => None,
    };
    let mut signs: Vec<i8> = Vec::with_capacity(n);
    for t in 0..n {
        let ty = EventType::ALL[types[t]];
        let s = match &config.signs {
            SignProcess::Iid => fair(&mut sign_rng),
            SignProcess::LongMemory { .. } => {
                let side = sides.as_ref().unwrap()[t];
                if ty.is_limit_order() {
                    -side
                } else {
                    side
                }
            }
            SignProcess::PerType { persistence } => {
                if t > 0 && sign_rng.random::<f64>() < persistence[types[t]] {
                    signs[t - 1]
                } else {
                    fair(&mut sign_rng)
                }
            }
        };
        signs.push(s);
    }

    let p_stat = config.stationary_probabilities();
    let p_pc: f64 = EventType::PRICE_CHANGING.iter().map(|t| p_stat[t.index()]).sum();
    let per_day = config.events_per_day;
    let mut events = Vec::with_capacity(n);
    let mut mid = 20_000i64;
    let mut spread = match &config.gaps {
        GapProcess::SpreadReverting { mean_spread, .. } => (2.0 * mean_spread).round() as i64,
        _ => config.initial_spread_half,
    };
    let mut ty = types;
    for t in 0..n {
        let day = (t / per_day) as u32;
        let pos = (t % per_day) as i64;
        let ts = (EPOCH_DAY + day as i64) * DAY_NS + OPEN_NS + pos * (SESSION_NS / per_day as i64);
        let mut etype = EventType::ALL[ty[t]];
        let gap = match PC_SLOT[ty[t]] {
            None => 0,
            Some(k) => match &config.gaps {
                GapProcess::Constant(g) => g[k],
                GapProcess::Discrete(d) => {
                    let probs: Vec<f64> = d[k].iter().map(|x| x.1).collect();
                    d[k][draw(&mut gap_rng, &probs)].0
                }
                GapProcess::PlantedKernels { delta_r, kappa, noise } => {
                    let day_start = day as usize * per_day;
                    let mut g = delta_r[k];
                    for tau in 1..=kappa.max_lag.min(t - day_start) {
                        let src = ty[t - tau];
                        g += kappa.get(src, k, tau) / p_stat[ty[t]]
                            * (signs[t] as f64 * signs[t - tau] as f64);
                    }
                    if *noise > 0.0 {
                        g += noise * (2.0 * gap_rng.random::<f64>() - 1.0);
                    }
                    // ticks -> half-ticks
                    floor_gap(stochastic_round(&mut gap_rng, 2.0 * g), &mut report)
                }
                GapProcess::SpreadReverting { alpha, base_gap, mean_spread } => {
                    let s = spread as f64 / 2.0;
                    let pull = alpha / p_pc * (mean_spread - s);
                    // 2Δ in ticks equals the gap in half-ticks
                    let two_delta = if etype == EventType::LOp {
                        2.0 * base_gap[k] - pull
                    } else {
                        2.0 * base_gap[k] + pull
                    };
                    let mut g = floor_gap(stochastic_round(&mut gap_rng, two_delta), &mut report);
                    if etype == EventType::LOp {
                        let room = (spread - 2) / 2;
                        if room < 1 {
                            etype = EventType::LO0;
                            ty[t] = EventType::LO0.index();
                            report.blocked_lop += 1;
                            g = 0;
                        } else {
                            g = g.min(room);
                        }
                    }
                    g
                }
            },
        };
        let e = MarketEvent {
            timestamp_ns: ts,
            day,
            event_type: etype,
            sign: signs[t],
            gap_half: gap,
            mid_before_half: mid,
            spread_before_half: spread,
            volume: Some(100),
        };
        mid = e.mid_after_half();
        spread = e.spread_after_half();
        events.push(e);
    }
    let stream = EventStream::new(config.symbol.clone(), config.tick_size, events)?;
    Ok((stream, report))
}

fn fair(rng: &mut ChaCha8Rng) -> i8 {
    if rng.random::<bool>() {
        1
    } else {
        -1
    }
}

fn floor_gap(g: i64, report: &mut GenerationReport) -> i64 {
    if g < 1 {
        report.floored_gaps += 1;
        1
    } else {
        g
    }
}

/// Keeps the source types and signs and regenerates every gap from the final
/// model with the given realized gaps and kernels (regression convention).
/// Mid and spread paths are re-derived from the new gaps, starting each day
/// from the source's opening quotes.
pub fn replay_with_model(
    stream: &EventStream,
    gaps: &RealizedGaps,
    kernels: &KernelTable,
    seed: u64,
) -> Result<(EventStream, GenerationReport)> {
    let mut report = GenerationReport::default();
    if stream.is_empty() {
        return Ok((stream.clone(), report));
    }
    let p = stream.probabilities();
    let mut rng = rng_stream(seed, 4);
    let ev = &stream.events;
    let mut out = Vec::with_capacity(ev.len());
    for (a, b) in stream.day_ranges() {
        let mut mid = ev[a].mid_before_half;
        let mut spread = ev[a].spread_before_half;
        for t in a..b {
            let ty = ev[t].event_type.index();
            let gap = match PC_SLOT[ty] {
                None => 0,
                Some(k) => {
                    let mut g = gaps.delta_r[k];
                    for tau in 1..=kernels.max_lag.min(t - a) {
                        let src = ev[t - tau].event_type.index();
                        g += kernels.get(src, k, tau) / p[ty] * (ev[t].sign as f64 * ev[t - tau].sign as f64);
                    }
                    floor_gap(stochastic_round(&mut rng, 2.0 * g), &mut report)
                }
            };
            let e = MarketEvent { gap_half: gap, mid_before_half: mid, spread_before_half: spread, ..ev[t] };
            mid = e.mid_after_half();
            spread = e.spread_after_half();
            out.push(e);
        }
    }
    let s = EventStream::new(stream.symbol.clone(), stream.tick_size, out)?;
    Ok((s, report))
}

fn parse_list(v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| Error::ConfigInvalid(format!("not a number: {x:?}")))
        })
        .collect()
}

fn fixed<const K: usize>(v: &str, key: &str) -> Result<[f64; K]> {
    let list = parse_list(v)?;
    list.try_into()
        .map_err(|_| Error::ConfigInvalid(format!("{key} needs exactly {K} values")))
}

/// Parses the plain-text `key = value` generator config. Lines starting
/// with `#` are comments.
pub fn parse_config(text: &str) -> Result<GeneratorConfig> {
    let mut kv = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("line {}: expected key = value", no + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).map(|s| s.as_str());
    let num = |k: &str, default: f64| -> Result<f64> {
        match get(k) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| Error::ConfigInvalid(format!("{k}: not a number"))),
        }
    };
    let n_events = num("n_events", 100_000.0)? as usize;
    let seed = num("seed", 1.0)? as u64;
    let mut cfg = match get("preset") {
        Some("large_tick") => GeneratorConfig::large_tick(n_events, seed),
        Some("aapl_like") => GeneratorConfig::aapl_like(n_events, seed),
        Some(other) => return Err(Error::ConfigInvalid(format!("unknown preset {other}"))),
        None => GeneratorConfig::iid(normalize([1.0; N_TYPES]), [1, 1, 1], n_events, seed),
    };
    if let Some(s) = get("symbol") {
        cfg.symbol = s.to_string();
    }
    cfg.tick_size = num("tick_size", cfg.tick_size)?;
    cfg.events_per_day = num("events_per_day", cfg.events_per_day as f64)? as usize;
    cfg.initial_spread_half = num("initial_spread_half", cfg.initial_spread_half as f64)? as i64;

    match get("type_process") {
        None => {}
        Some("iid") => {
            cfg.types = TypeProcess::Iid(fixed(get("type_probs").unwrap_or(""), "type_probs")?);
        }
        Some("markov") => {
            let mut m = [[0.0; N_TYPES]; N_TYPES];
            for t in EventType::ALL {
                let key = format!("markov.{}", t.code());
                m[t.index()] = fixed(get(&key).unwrap_or(""), &key)?;
            }
            cfg.types = TypeProcess::Markov(m);
        }
        Some(other) => return Err(Error::ConfigInvalid(format!("unknown type_process {other}"))),
    }
    match get("sign_process") {
        None => {}
        Some("iid") => cfg.signs = SignProcess::Iid,
        Some("long_memory") => cfg.signs = SignProcess::LongMemory { gamma: num("gamma", 0.7)? },
        Some("per_type") => {
            cfg.signs = SignProcess::PerType { persistence: fixed(get("persistence").unwrap_or(""), "persistence")? }
        }
        Some(other) => return Err(Error::ConfigInvalid(format!("unknown sign_process {other}"))),
    }
    match get("gap_process") {
        None => {}
        Some("constant") => {
            let g: [f64; 3] = fixed(get("gaps_half").unwrap_or(""), "gaps_half")?;
            cfg.gaps = GapProcess::Constant(g.map(|x| x as i64));
        }
        Some("planted") => {
            let delta_r = fixed(get("delta_r").unwrap_or(""), "delta_r")?;
            let lag = num("kernel_lag", 10.0)? as usize;
            let mut kappa = KernelTable::zeros(lag);
            for (k, v) in &kv {
                if let Some(pair) = k.strip_prefix("kappa.") {
                    let (src, dst) = pair
                        .split_once("->")
                        .ok_or_else(|| Error::ConfigInvalid(format!("bad kernel key {k}")))?;
                    let src = EventType::from_code(src).ok_or_else(|| Error::ConfigInvalid(format!("bad type in {k}")))?;
                    let dst = EventType::from_code(dst).ok_or_else(|| Error::ConfigInvalid(format!("bad type in {k}")))?;
                    let slot = PC_SLOT[dst.index()]
                        .ok_or_else(|| Error::ConfigInvalid(format!("{k}: target must change the price")))?;
                    for (i, x) in parse_list(v)?.into_iter().enumerate().take(lag) {
                        kappa.set(src.index(), slot, i + 1, x);
                    }
                }
            }
            cfg.gaps = GapProcess::PlantedKernels { delta_r, kappa, noise: num("gap_noise", 0.0)? };
        }
        Some("spread_reverting") => {
            cfg.gaps = GapProcess::SpreadReverting {
                alpha: num("alpha", 0.01)?,
                base_gap: fixed(get("base_gap").unwrap_or("1,1,1"), "base_gap")?,
                mean_spread: num("mean_spread", 30.0)?,
            };
        }
        Some(other) => return Err(Error::ConfigInvalid(format!("unknown gap_process {other}"))),
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<GeneratorConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::reconstruct_mid_half;

    #[test]
    fn farima_weights_recursion() {
        let d = 0.25;
        let w = farima_weights(d, 4);
        assert_eq!(w[0], 1.0);
        assert!((w[1] - d).abs() < 1e-15);
        assert!((w[2] - d * (1.0 + d) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn propagator_price_matches_direct_sum() {
        let x = [1.0, -1.0, 1.0, 1.0, -1.0];
        let g = [0.0, 1.0, 0.5, 0.25];
        let p = propagator_price(&x, &g);
        for t in 0..=x.len() {
            let direct: f64 = (1..g.len()).filter(|&n| n <= t).map(|n| g[n] * x[t - n]).sum();
            assert!((p[t] - direct).abs() < 1e-12);
        }
        let frac = fractional_propagator(0.25, 4);
        assert_eq!(frac[1], 1.0);
        assert!((frac[2] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_stream() {
        let c = GeneratorConfig::aapl_like(5_000, 9);
        assert_eq!(generate(&c).unwrap(), generate(&c).unwrap());
        let mut c2 = c.clone();
        c2.seed = 10;
        assert_ne!(generate(&c).unwrap().events, generate(&c2).unwrap().events);
    }

    #[test]
    fn generated_stream_is_valid_and_chained() {
        let c = GeneratorConfig::large_tick(30_000, 3);
        let s = generate(&c).unwrap();
        s.validate().unwrap();
        assert_eq!(s.day_boundaries.len(), 1);
        let mid = reconstruct_mid_half(&s).unwrap();
        assert_eq!(*mid.last().unwrap(), s.events.last().unwrap().mid_after_half());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = GeneratorConfig::iid([0.5, 0.5, 0.0, 0.0, 0.0, 0.1], [1, 1, 1], 10, 1);
        assert!(matches!(generate(&c), Err(Error::ConfigInvalid(_))));
        c.types = TypeProcess::Iid([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]);
        c.signs = SignProcess::LongMemory { gamma: 1.2 };
        assert!(matches!(generate(&c), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn config_text_round_trip() {
        let text = "# planted\nn_events = 1000\nseed = 4\ngap_process = planted\ndelta_r = 2,2,2\nkernel_lag = 3\nkappa.MOP->MOP = 0.1,0.05\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.n_events, 1000);
        match &c.gaps {
            GapProcess::PlantedKernels { kappa, .. } => {
                assert_eq!(kappa.get(1, 0, 1), 0.1);
                assert_eq!(kappa.get(1, 0, 2), 0.05);
                assert_eq!(kappa.get(1, 0, 3), 0.0);
            }
            _ => panic!("expected planted kernels"),
        }
        assert!(parse_config("gap_process = nope").is_err());
        assert!(parse_config("just words").is_err());
    }

    #[test]
    fn markov_stationary_distribution() {
        let mut m = [[0.0; N_TYPES]; N_TYPES];
        for a in 0..N_TYPES {
            m[a][a] = 0.5;
            m[a][(a + 1) % N_TYPES] = 0.5;
        }
        let c = GeneratorConfig { types: TypeProcess::Markov(m), ..GeneratorConfig::iid([1.0 / 6.0; 6], [1, 1, 1], 10, 1) };
        for p in c.stationary_probabilities() {
            assert!((p - 1.0 / 6.0).abs() < 1e-12);
        }
    }
}
