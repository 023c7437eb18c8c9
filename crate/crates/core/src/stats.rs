//! Event probabilities, event-event correlations, response functions and the
//! empirical diffusion curve. Every estimator counts in integers and divides
//! once at the end, so identities between them hold to rounding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::events::{cumulative_mid_half, cumulative_spread_half, EventStream, EventType, N_TYPES};

const N_CELLS: usize = N_TYPES * N_TYPES;

#[derive(Debug, Clone)]
pub struct StatsConfig {
    pub max_lag: usize,
    pub same_day_only: bool,
    /// Cells with fewer pairs than this are flagged.
    pub min_count: u64,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { max_lag: 1000, same_day_only: true, min_count: 10, bootstrap_reps: 100, seed: 0x5eed }
    }
}

impl StatsConfig {
    pub fn with_lag(max_lag: usize) -> Self {
        StatsConfig { max_lag, ..Default::default() }
    }
}

/// Raw pair counts for one block of the stream (a day, or the whole stream).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSums {
    pub max_lag: usize,
    pub type_counts: [u64; N_TYPES],
    /// Sum of signs per type.
    pub sign_sums: [i64; N_TYPES],
    /// Number of pairs at each lag.
    pub pair_counts: Vec<u64>,
    /// Pairs per cell, laid out `(a * 6 + b) * (L + 1) + lag`.
    pub total: Vec<u64>,
    /// Same-sign pairs per cell.
    pub same: Vec<u64>,
}

impl CorrelationSums {
    pub fn zeros(max_lag: usize) -> Self {
        let w = max_lag + 1;
        CorrelationSums {
            max_lag,
            type_counts: [0; N_TYPES],
            sign_sums: [0; N_TYPES],
            pair_counts: vec![0; w],
            total: vec![0; N_CELLS * w],
            same: vec![0; N_CELLS * w],
        }
    }

    pub fn add(&mut self, other: &CorrelationSums) {
        self.add_scaled(other, 1);
    }

    fn add_scaled(&mut self, other: &CorrelationSums, k: u64) {
        for i in 0..N_TYPES {
            self.type_counts[i] += k * other.type_counts[i];
            self.sign_sums[i] += k as i64 * other.sign_sums[i];
        }
        for (a, b) in self.pair_counts.iter_mut().zip(&other.pair_counts) {
            *a += k * b;
        }
        for (a, b) in self.total.iter_mut().zip(&other.total) {
            *a += k * b;
        }
        for (a, b) in self.same.iter_mut().zip(&other.same) {
            *a += k * b;
        }
    }

    /// Accumulates events `[start, end)` pairing each with partners below `limit`.
    fn accumulate(&mut self, types: &[u8], signs: &[i8], start: usize, end: usize, limit: usize) {
        let w = self.max_lag + 1;
        for t in start..end {
            let a = types[t] as usize;
            self.type_counts[a] += 1;
            self.sign_sums[a] += signs[t] as i64;
        }
        for lag in 0..=self.max_lag {
            if start + lag >= limit {
                break;
            }
            let stop = end.min(limit - lag);
            let mut cnt = [0u64; N_CELLS];
            let mut same = [0u64; N_CELLS];
            for t in start..stop {
                let code = types[t] as usize * N_TYPES + types[t + lag] as usize;
                cnt[code] += 1;
                same[code] += (signs[t] == signs[t + lag]) as u64;
            }
            self.pair_counts[lag] += (stop - start) as u64;
            for c in 0..N_CELLS {
                self.total[c * w + lag] += cnt[c];
                self.same[c * w + lag] += same[c];
            }
        }
    }

    pub fn n_events(&self) -> u64 {
        self.type_counts.iter().sum()
    }

    fn probabilities(&self) -> [f64; N_TYPES] {
        let n = self.n_events() as f64;
        self.type_counts.map(|c| c as f64 / n)
    }

    /// Signed and unsigned normalized correlations from these sums.
    fn normalize(&self) -> (Vec<f64>, Vec<f64>) {
        let w = self.max_lag + 1;
        let p = self.probabilities();
        let mut c = vec![f64::NAN; N_CELLS * w];
        let mut pi = vec![f64::NAN; N_CELLS * w];
        for a in 0..N_TYPES {
            for b in 0..N_TYPES {
                let cell = a * N_TYPES + b;
                let norm = p[a] * p[b];
                for lag in 0..w {
                    let n = self.pair_counts[lag];
                    if n == 0 || norm == 0.0 {
                        continue;
                    }
                    let i = cell * w + lag;
                    let signed = 2 * self.same[i] as i64 - self.total[i] as i64;
                    c[i] = signed as f64 / n as f64 / norm;
                    pi[i] = self.total[i] as f64 / n as f64 / norm - 1.0;
                }
            }
        }
        (c, pi)
    }
}

/// Event-event correlation functions up to lag `max_lag`.
#[derive(Debug, Clone)]
pub struct CorrelationSet {
    pub max_lag: usize,
    pub same_day_only: bool,
    pub min_count: u64,
    pub sums: CorrelationSums,
    pub probabilities: [f64; N_TYPES],
    /// `C_{a,b}(lag)`, laid out like [`CorrelationSums::total`].
    pub signed: Vec<f64>,
    /// `Π_{a,b}(lag)`.
    pub unsigned: Vec<f64>,
    pub signed_se: Vec<f64>,
    pub unsigned_se: Vec<f64>,
    pub sign_autocorr: Vec<f64>,
    pub side_autocorr: Vec<f64>,
    /// Mean of `ε I(π_t = π)` per type; the estimator does not subtract it.
    pub sign_imbalance: [f64; N_TYPES],
}

impl CorrelationSet {
    #[inline]
    fn idx(&self, a: usize, b: usize, lag: usize) -> usize {
        (a * N_TYPES + b) * (self.max_lag + 1) + lag
    }

    pub fn c(&self, a: usize, b: usize, lag: usize) -> f64 {
        self.signed[self.idx(a, b, lag)]
    }

    /// `C_{a,b}` at a signed lag, using `C_{a,b}(-k) = C_{b,a}(k)`.
    pub fn c_signed_lag(&self, a: usize, b: usize, lag: i64) -> f64 {
        if lag >= 0 {
            self.c(a, b, lag as usize)
        } else {
            self.c(b, a, (-lag) as usize)
        }
    }

    pub fn pi(&self, a: usize, b: usize, lag: usize) -> f64 {
        self.unsigned[self.idx(a, b, lag)]
    }

    pub fn count(&self, a: usize, b: usize, lag: usize) -> u64 {
        self.sums.total[self.idx(a, b, lag)]
    }

    /// True when the cell has too few pairs to be trusted.
    pub fn flagged(&self, a: usize, b: usize, lag: usize) -> bool {
        self.count(a, b, lag) < self.min_count
    }

    /// Estimated probability of a same-sign `(a, b)` pair at this lag.
    pub fn joint_same(&self, a: usize, b: usize, lag: usize) -> f64 {
        self.sums.same[self.idx(a, b, lag)] as f64 / self.sums.pair_counts[lag] as f64
    }

    pub fn joint_opposite(&self, a: usize, b: usize, lag: usize) -> f64 {
        let i = self.idx(a, b, lag);
        (self.sums.total[i] - self.sums.same[i]) as f64 / self.sums.pair_counts[lag] as f64
    }

    /// Types observed at least once.
    pub fn active_types(&self) -> Vec<usize> {
        (0..N_TYPES).filter(|&a| self.probabilities[a] > 0.0).collect()
    }

    /// Rebuilds normalized values from merged raw sums.
    pub fn from_sums(sums: CorrelationSums, same_day_only: bool, min_count: u64) -> CorrelationSet {
        let (signed, unsigned) = sums.normalize();
        let w = sums.max_lag + 1;
        let probabilities = sums.probabilities();
        let n = sums.n_events() as f64;
        let sign_imbalance = std::array::from_fn(|a| sums.sign_sums[a] as f64 / n);
        let mut sign_autocorr = vec![0.0; w];
        let mut side_autocorr = vec![0.0; w];
        for lag in 0..w {
            let mut eps = 0i64;
            let mut side = 0i64;
            for a in 0..N_TYPES {
                for b in 0..N_TYPES {
                    let i = (a * N_TYPES + b) * w + lag;
                    let prod = 2 * sums.same[i] as i64 - sums.total[i] as i64;
                    let flip = side_factor(a) * side_factor(b);
                    eps += prod;
                    side += flip * prod;
                }
            }
            let np = sums.pair_counts[lag] as f64;
            sign_autocorr[lag] = eps as f64 / np;
            side_autocorr[lag] = side as f64 / np;
        }
        CorrelationSet {
            max_lag: sums.max_lag,
            same_day_only,
            min_count,
            signed_se: vec![f64::NAN; signed.len()],
            unsigned_se: vec![f64::NAN; unsigned.len()],
            signed,
            unsigned,
            sums,
            probabilities,
            sign_autocorr,
            side_autocorr,
            sign_imbalance,
        }
    }
}

fn side_factor(type_index: usize) -> i64 {
    if EventType::ALL[type_index].is_limit_order() {
        -1
    } else {
        1
    }
}

pub(crate) fn check_length(stream: &EventStream, max_lag: usize) -> Result<()> {
    if stream.is_empty() || stream.len() < 10 * max_lag {
        return Err(Error::InsufficientData(format!(
            "stream has {} events, need at least 10 x max_lag = {}",
            stream.len(),
            10 * max_lag
        )));
    }
    Ok(())
}

/// Per-day blocks used for accumulation and the day-block bootstrap.
pub(crate) fn blocks(stream: &EventStream, same_day_only: bool) -> Vec<(usize, usize, usize)> {
    let n = stream.len();
    stream
        .day_ranges()
        .into_iter()
        .map(|(a, b)| (a, b, if same_day_only { b } else { n }))
        .collect()
}

/// Day multiplicities for each bootstrap replicate.
pub(crate) fn bootstrap_weights(n_blocks: usize, reps: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..reps)
        .map(|_| {
            let mut m = vec![0u64; n_blocks];
            for _ in 0..n_blocks {
                m[rng.random_range(0..n_blocks)] += 1;
            }
            m
        })
        .collect()
}

pub(crate) fn std_dev(samples: &[f64]) -> f64 {
    let v: Vec<f64> = samples.iter().copied().filter(|x| x.is_finite()).collect();
    if v.len() < 2 {
        return f64::NAN;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn estimate_correlations(stream: &EventStream, max_lag: usize, same_day_only: bool) -> Result<CorrelationSet> {
    let cfg = StatsConfig { max_lag, same_day_only, ..Default::default() };
    estimate_correlations_with(stream, &cfg)
}

/// Raw pair sums over the whole stream. Sums of disjoint day ranges add up
/// to the sums of their union, which [`CorrelationSet::from_sums`] turns
/// into the same estimate as [`estimate_correlations_with`].
pub fn correlation_sums(stream: &EventStream, max_lag: usize, same_day_only: bool) -> CorrelationSums {
    let types = stream.type_indices();
    let signs = stream.signs();
    let mut total = CorrelationSums::zeros(max_lag);
    for (a, b, limit) in blocks(stream, same_day_only) {
        total.accumulate(&types, &signs, a, b, limit);
    }
    total
}

pub fn estimate_correlations_with(stream: &EventStream, cfg: &StatsConfig) -> Result<CorrelationSet> {
    check_length(stream, cfg.max_lag)?;
    let types = stream.type_indices();
    let signs = stream.signs();
    let per_day: Vec<CorrelationSums> = blocks(stream, cfg.same_day_only)
        .into_iter()
        .map(|(a, b, limit)| {
            let mut s = CorrelationSums::zeros(cfg.max_lag);
            s.accumulate(&types, &signs, a, b, limit);
            s
        })
        .collect();
    let mut total = CorrelationSums::zeros(cfg.max_lag);
    for d in &per_day {
        total.add(d);
    }
    let mut set = CorrelationSet::from_sums(total, cfg.same_day_only, cfg.min_count);

    if per_day.len() >= 2 && cfg.bootstrap_reps >= 2 {
        let weights = bootstrap_weights(per_day.len(), cfg.bootstrap_reps, cfg.seed);
        let cells = set.signed.len();
        let mut c_reps = vec![Vec::with_capacity(weights.len()); cells];
        let mut pi_reps = vec![Vec::with_capacity(weights.len()); cells];
        for m in &weights {
            let mut s = CorrelationSums::zeros(cfg.max_lag);
            for (d, &k) in per_day.iter().zip(m) {
                if k > 0 {
                    s.add_scaled(d, k);
                }
            }
            let (c, pi) = s.normalize();
            for i in 0..cells {
                c_reps[i].push(c[i]);
                pi_reps[i].push(pi[i]);
            }
        }
        set.signed_se = c_reps.iter().map(|v| std_dev(v)).collect();
        set.unsigned_se = pi_reps.iter().map(|v| std_dev(v)).collect();
    }
    Ok(set)
}

/// `⟨ε_{t+ℓ} ε_t⟩` and `⟨s_{t+ℓ} s_t⟩` over same-day pairs.
pub fn estimate_sign_autocorrs(stream: &EventStream, max_lag: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_length(stream, max_lag)?;
    let eps: Vec<i64> = stream.events.iter().map(|e| e.sign as i64).collect();
    let side: Vec<i64> = stream.events.iter().map(|e| e.side() as i64).collect();
    let mut se = vec![0i64; max_lag + 1];
    let mut ss = vec![0i64; max_lag + 1];
    let mut np = vec![0u64; max_lag + 1];
    for (a, b) in stream.day_ranges() {
        for lag in 0..=max_lag.min(b - a - 1) {
            for t in a..b - lag {
                se[lag] += eps[t] * eps[t + lag];
                ss[lag] += side[t] * side[t + lag];
            }
            np[lag] += (b - a - lag) as u64;
        }
    }
    let f = |s: &[i64]| s.iter().zip(&np).map(|(&x, &n)| x as f64 / n as f64).collect::<Vec<_>>();
    Ok((f(&se), f(&ss)))
}

/// A curve per event type, laid out `type * (L + 1) + lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct TypedCurves {
    pub max_lag: usize,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub counts: Vec<u64>,
}

impl TypedCurves {
    pub fn get(&self, type_index: usize, lag: usize) -> f64 {
        self.values[type_index * (self.max_lag + 1) + lag]
    }

    pub fn se(&self, type_index: usize, lag: usize) -> f64 {
        self.stderr[type_index * (self.max_lag + 1) + lag]
    }

    pub fn count(&self, type_index: usize, lag: usize) -> u64 {
        self.counts[type_index * (self.max_lag + 1) + lag]
    }

    pub fn curve(&self, type_index: usize) -> &[f64] {
        let w = self.max_lag + 1;
        &self.values[type_index * w..(type_index + 1) * w]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Price and spread response functions and the diffusion curve, in ticks.
#[derive(Debug, Clone)]
pub struct ResponseSet {
    pub max_lag: usize,
    pub r: TypedCurves,
    pub rs: TypedCurves,
    pub d: Curve,
}

/// Per-day integer sums for the response pass.
#[derive(Clone)]
struct ResponseSums {
    r: Vec<i64>,
    rs: Vec<i64>,
    typed_counts: Vec<u64>,
    d: Vec<i128>,
    d_counts: Vec<u64>,
}

impl ResponseSums {
    fn zeros(w: usize) -> Self {
        ResponseSums {
            r: vec![0; N_TYPES * w],
            rs: vec![0; N_TYPES * w],
            typed_counts: vec![0; N_TYPES * w],
            d: vec![0; w],
            d_counts: vec![0; w],
        }
    }

    fn add_scaled(&mut self, o: &ResponseSums, k: u64) {
        for (a, b) in self.r.iter_mut().zip(&o.r) {
            *a += k as i64 * b;
        }
        for (a, b) in self.rs.iter_mut().zip(&o.rs) {
            *a += k as i64 * b;
        }
        for (a, b) in self.typed_counts.iter_mut().zip(&o.typed_counts) {
            *a += k * b;
        }
        for (a, b) in self.d.iter_mut().zip(&o.d) {
            *a += k as i128 * b;
        }
        for (a, b) in self.d_counts.iter_mut().zip(&o.d_counts) {
            *a += k * b;
        }
    }

    /// (R, RS, D) in ticks and ticks squared.
    fn finish(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let ratio = |s: i64, n: u64| if n == 0 { f64::NAN } else { s as f64 / n as f64 / 2.0 };
        let r = self.r.iter().zip(&self.typed_counts).map(|(&s, &n)| ratio(s, n)).collect();
        let rs = self.rs.iter().zip(&self.typed_counts).map(|(&s, &n)| ratio(s, n)).collect();
        let d = self
            .d
            .iter()
            .zip(&self.d_counts)
            .map(|(&s, &n)| if n == 0 { f64::NAN } else { s as f64 / n as f64 / 4.0 })
            .collect();
        (r, rs, d)
    }
}

/// Price response `R_π(ℓ) = ⟨(p_{t+ℓ} - p_t) ε_t | π_t = π⟩`, spread response
/// `R^S_π(ℓ) = ⟨S_{t+ℓ} - S_t | π_t = π⟩` and `D(ℓ) = ⟨(p_{t+ℓ} - p_t)^2⟩`,
/// all over pairs with `t + ℓ` no later than the end of `t`'s day.
pub fn estimate_responses(stream: &EventStream, cfg: &StatsConfig) -> Result<ResponseSet> {
    check_length(stream, cfg.max_lag)?;
    let l = cfg.max_lag;
    let w = l + 1;
    let cum = cumulative_mid_half(stream);
    let cums = cumulative_spread_half(stream);
    let types = stream.type_indices();
    let signs = stream.signs();
    let per_day: Vec<ResponseSums> = stream
        .day_ranges()
        .into_iter()
        .map(|(a, b)| {
            let mut s = ResponseSums::zeros(w);
            for lag in 0..=l.min(b - a) {
                let mut r = [0i64; N_TYPES];
                let mut rs = [0i64; N_TYPES];
                let mut cnt = [0u64; N_TYPES];
                let mut d = 0i128;
                for t in a..=b - lag {
                    if t == b {
                        break;
                    }
                    let ty = types[t] as usize;
                    let dm = cum[t + lag] - cum[t];
                    r[ty] += dm * signs[t] as i64;
                    rs[ty] += cums[t + lag] - cums[t];
                    cnt[ty] += 1;
                    d += (dm as i128) * (dm as i128);
                }
                for ty in 0..N_TYPES {
                    s.r[ty * w + lag] += r[ty];
                    s.rs[ty * w + lag] += rs[ty];
                    s.typed_counts[ty * w + lag] += cnt[ty];
                }
                s.d[lag] += d;
                s.d_counts[lag] += cnt.iter().sum::<u64>();
            }
            s
        })
        .collect();
    let mut total = ResponseSums::zeros(w);
    for d in &per_day {
        total.add_scaled(d, 1);
    }
    let (r, rs, d) = total.finish();
    let mut r_se = vec![f64::NAN; r.len()];
    let mut rs_se = vec![f64::NAN; rs.len()];
    let mut d_se = vec![f64::NAN; d.len()];
    if per_day.len() >= 2 && cfg.bootstrap_reps >= 2 {
        let weights = bootstrap_weights(per_day.len(), cfg.bootstrap_reps, cfg.seed ^ 0xa5a5);
        let mut reps = (vec![Vec::new(); r.len()], vec![Vec::new(); rs.len()], vec![Vec::new(); d.len()]);
        for m in &weights {
            let mut s = ResponseSums::zeros(w);
            for (day, &k) in per_day.iter().zip(m) {
                if k > 0 {
                    s.add_scaled(day, k);
                }
            }
            let (br, brs, bd) = s.finish();
            br.iter().enumerate().for_each(|(i, &x)| reps.0[i].push(x));
            brs.iter().enumerate().for_each(|(i, &x)| reps.1[i].push(x));
            bd.iter().enumerate().for_each(|(i, &x)| reps.2[i].push(x));
        }
        r_se = reps.0.iter().map(|v| std_dev(v)).collect();
        rs_se = reps.1.iter().map(|v| std_dev(v)).collect();
        d_se = reps.2.iter().map(|v| std_dev(v)).collect();
    }
    Ok(ResponseSet {
        max_lag: l,
        r: TypedCurves { max_lag: l, values: r, stderr: r_se, counts: total.typed_counts.clone() },
        rs: TypedCurves { max_lag: l, values: rs, stderr: rs_se, counts: total.typed_counts.clone() },
        d: Curve { values: d, stderr: d_se, counts: total.d_counts },
    })
}

pub fn estimate_response(stream: &EventStream, max_lag: usize) -> Result<TypedCurves> {
    Ok(estimate_responses(stream, &StatsConfig::with_lag(max_lag))?.r)
}

/// Spread response on a stream that has already been session-trimmed.
pub fn estimate_spread_response(stream: &EventStream, max_lag: usize) -> Result<TypedCurves> {
    Ok(estimate_responses(stream, &StatsConfig::with_lag(max_lag))?.rs)
}

pub fn estimate_diffusion(stream: &EventStream, max_lag: usize) -> Result<Curve> {
    Ok(estimate_responses(stream, &StatsConfig::with_lag(max_lag))?.d)
}

/// Flags (type, lag) response points backed by fewer than `min_count` samples.
pub fn insufficient_points(curves: &TypedCurves, min_count: u64) -> Vec<(EventType, usize)> {
    let mut out = Vec::new();
    for ty in 0..N_TYPES {
        for lag in 1..=curves.max_lag {
            if curves.count(ty, lag) < min_count {
                out.push((EventType::ALL[ty], lag));
            }
        }
    }
    out
}

/// `⟨x_{t+ℓ} x_t⟩` for a real-valued series, without mean subtraction.
pub fn series_autocorr(x: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| {
            if lag >= x.len() {
                return f64::NAN;
            }
            let n = x.len() - lag;
            x[..n].iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
        })
        .collect()
}

/// `⟨(p_{t+ℓ} - p_t) x_t⟩` where `p` has one more entry than `x` (the price
/// after the last flow event).
pub fn series_response(p: &[f64], x: &[f64], max_lag: usize) -> Vec<f64> {
    assert_eq!(p.len(), x.len() + 1);
    (0..=max_lag)
        .map(|lag| {
            let n = p.len().saturating_sub(lag).min(x.len());
            if n == 0 {
                return f64::NAN;
            }
            (0..n).map(|t| (p[t + lag] - p[t]) * x[t]).sum::<f64>() / n as f64
        })
        .collect()
}

/// `⟨(p_{t+ℓ} - p_t)^2⟩` for a real-valued path.
pub fn series_diffusion(p: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|lag| {
            if lag >= p.len() {
                return f64::NAN;
            }
            let n = p.len() - lag;
            (0..n).map(|t| (p[t + lag] - p[t]).powi(2)).sum::<f64>() / n as f64
        })
        .collect()
}

/// Least-squares slope of `ln y` on `ln x` over `lo..=hi`, skipping non-positive values.
pub fn loglog_slope(y: &[f64], lo: usize, hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (lo..=hi.min(y.len() - 1))
        .filter(|&i| i > 0 && y[i] > 0.0)
        .map(|i| ((i as f64).ln(), y[i].ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Inputs of the market-order-only baseline: `R(ℓ) = ⟨(p_{k+ℓ} - p_k) ξ_k⟩`
/// and `C(ℓ) = ⟨ξ_{k+ℓ} ξ_k⟩` in trade time, with `ξ = ε v^θ` (volume 1 when
/// missing). `p_k` is the mid before trade `k`; the day's closing mid serves
/// as the price one step past the last trade.
pub fn single_event_inputs(stream: &EventStream, max_lag: usize, theta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mid = crate::events::reconstruct_mid_half(stream)?;
    let w = max_lag + 1;
    let mut r = vec![0.0; w];
    let mut c = vec![0.0; w];
    let mut nr = vec![0u64; w];
    let mut nc = vec![0u64; w];
    let mut total_trades = 0usize;
    for (a, b) in stream.day_ranges() {
        let mut p = Vec::new();
        let mut xi = Vec::new();
        for t in a..b {
            let e = &stream.events[t];
            if matches!(e.event_type, EventType::MO0 | EventType::MOp) {
                p.push(mid[t] as f64 / 2.0);
                let v = e.volume.unwrap_or(1).max(1) as f64;
                xi.push(e.sign as f64 * v.powf(theta));
            }
        }
        p.push(mid[b] as f64 / 2.0);
        total_trades += xi.len();
        let k = xi.len();
        for lag in 0..=max_lag.min(k) {
            for t in 0..=k - lag {
                if t == k {
                    break;
                }
                r[lag] += (p[t + lag] - p[t]) * xi[t];
                nr[lag] += 1;
                if t + lag < k {
                    c[lag] += xi[t + lag] * xi[t];
                    nc[lag] += 1;
                }
            }
        }
    }
    if total_trades < 10 * max_lag {
        return Err(Error::InsufficientData(format!(
            "{total_trades} market orders, need at least {}",
            10 * max_lag
        )));
    }
    for lag in 0..w {
        r[lag] = if nr[lag] > 0 { r[lag] / nr[lag] as f64 } else { f64::NAN };
        c[lag] = if nc[lag] > 0 { c[lag] / nc[lag] as f64 } else { f64::NAN };
    }
    Ok((r, c))
}

/// Averages per-symbol curves with equal weight. With `normalize`, each
/// curve is first divided by its largest absolute value.
pub fn average_curves(curves: &[Vec<f64>], normalize: bool) -> Vec<f64> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    let mut out = vec![0.0; len];
    for c in curves {
        let scale = if normalize {
            let m = c[..len].iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if m > 0.0 {
                m
            } else {
                1.0
            }
        } else {
            1.0
        };
        for i in 0..len {
            out[i] += c[i] / scale / curves.len() as f64;
        }
    }
    out
}

fn pair_key(a: usize, b: usize) -> String {
    format!("{}->{}", EventType::ALL[a].code(), EventType::ALL[b].code())
}

fn clean(v: &[f64]) -> Value {
    Value::Array(
        v.iter()
            .map(|&x| if x.is_finite() { json!(x) } else { Value::Null })
            .collect(),
    )
}

/// Stats JSON document: lags, P, C, PI, R, RS, D.
pub fn stats_json(corr: &CorrelationSet, resp: &ResponseSet) -> Value {
    let w = corr.max_lag + 1;
    let mut p = Map::new();
    let mut c = Map::new();
    let mut pi = Map::new();
    let mut r = Map::new();
    let mut rs = Map::new();
    for a in 0..N_TYPES {
        p.insert(EventType::ALL[a].code().into(), json!(corr.probabilities[a]));
        r.insert(EventType::ALL[a].code().into(), clean(resp.r.curve(a)));
        rs.insert(EventType::ALL[a].code().into(), clean(resp.rs.curve(a)));
        for b in 0..N_TYPES {
            let base = (a * N_TYPES + b) * w;
            c.insert(pair_key(a, b), clean(&corr.signed[base..base + w]));
            pi.insert(pair_key(a, b), clean(&corr.unsigned[base..base + w]));
        }
    }
    json!({
        "units": {"R": "ticks", "RS": "ticks", "D": "ticks^2", "C": "dimensionless", "PI": "dimensionless"},
        "lags": (0..w).collect::<Vec<_>>(),
        "P": p,
        "C": c,
        "PI": pi,
        "R": r,
        "RS": rs,
        "D": clean(&resp.d.values),
        "sign_autocorr": clean(&corr.sign_autocorr),
        "side_autocorr": clean(&corr.side_autocorr),
    })
}

/// Long-format CSV: `quantity,pi1,pi2,lag,value,stderr,count,units`.
pub fn stats_csv(corr: &CorrelationSet, resp: &ResponseSet) -> String {
    use std::fmt::Write;
    let mut out = String::from("quantity,pi1,pi2,lag,value,stderr,count,units\n");
    let w = corr.max_lag + 1;
    let num = |x: f64| if x.is_finite() { format!("{x}") } else { String::new() };
    for a in 0..N_TYPES {
        let ca = EventType::ALL[a].code();
        let _ = writeln!(out, "P,{ca},,0,{},,{},", corr.probabilities[a], corr.sums.type_counts[a]);
    }
    for a in 0..N_TYPES {
        for b in 0..N_TYPES {
            let (ca, cb) = (EventType::ALL[a].code(), EventType::ALL[b].code());
            for lag in 0..w {
                let i = (a * N_TYPES + b) * w + lag;
                let n = corr.sums.total[i];
                let _ = writeln!(out, "C,{ca},{cb},{lag},{},{},{n},", num(corr.signed[i]), num(corr.signed_se[i]));
                let _ = writeln!(out, "PI,{ca},{cb},{lag},{},{},{n},", num(corr.unsigned[i]), num(corr.unsigned_se[i]));
            }
        }
    }
    let rw = resp.max_lag + 1;
    for a in 0..N_TYPES {
        let ca = EventType::ALL[a].code();
        for lag in 0..rw {
            let i = a * rw + lag;
            let n = resp.r.counts[i];
            let _ = writeln!(out, "R,{ca},,{lag},{},{},{n},ticks", num(resp.r.values[i]), num(resp.r.stderr[i]));
            let _ = writeln!(out, "RS,{ca},,{lag},{},{},{n},ticks", num(resp.rs.values[i]), num(resp.rs.stderr[i]));
        }
    }
    for lag in 0..rw {
        let _ = writeln!(
            out,
            "D,,,{lag},{},{},{},ticks^2",
            num(resp.d.values[lag]),
            num(resp.d.stderr[lag]),
            resp.d.counts[lag]
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MarketEvent;

    fn alternating_mo0(n: usize) -> EventStream {
        let evs = (0..n)
            .map(|i| MarketEvent {
                timestamp_ns: i as i64,
                day: 0,
                event_type: EventType::MO0,
                sign: if i % 2 == 0 { 1 } else { -1 },
                gap_half: 0,
                mid_before_half: 200,
                spread_before_half: 2,
                volume: Some(1),
            })
            .collect();
        EventStream::new("X", 0.01, evs).unwrap()
    }

    #[test]
    fn perfect_anti_persistence() {
        let s = alternating_mo0(100);
        let c = estimate_correlations(&s, 5, true).unwrap();
        assert_eq!(c.c(0, 0, 0), 1.0);
        assert_eq!(c.c(0, 0, 1), -1.0);
        assert_eq!(c.c(0, 0, 2), 1.0);
        assert_eq!(c.pi(0, 0, 0), 0.0);
        assert!(c.c(1, 1, 1).is_nan());
        assert_eq!(c.sign_autocorr[1], -1.0);
    }

    #[test]
    fn short_stream_rejected() {
        let s = alternating_mo0(40);
        assert!(matches!(estimate_correlations(&s, 5, true), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn sign_autocorrs_at_zero_are_one() {
        let s = alternating_mo0(100);
        let (e, side) = estimate_sign_autocorrs(&s, 5).unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(side[0], 1.0);
        assert_eq!(e[3], -1.0);
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let y: Vec<f64> = (0..400).map(|i| if i == 0 { 1.0 } else { (i as f64).powf(-0.7) }).collect();
        assert!((loglog_slope(&y, 10, 300) + 0.7).abs() < 1e-12);
    }

    #[test]
    fn series_helpers_on_constant_drift() {
        let x = vec![1.0; 50];
        let p: Vec<f64> = (0..51).map(|i| i as f64 * 0.5).collect();
        let r = series_response(&p, &x, 4);
        assert_eq!(r, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert_eq!(series_diffusion(&p, 2), vec![0.0, 0.25, 1.0]);
        assert_eq!(series_autocorr(&x, 2), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn average_curves_modes() {
        let a = vec![1.0, 2.0];
        let b = vec![3.0, 6.0];
        assert_eq!(average_curves(&[a.clone(), b.clone()], false), vec![2.0, 4.0]);
        assert_eq!(average_curves(&[a, b], true), vec![0.5, 1.0]);
    }
}
