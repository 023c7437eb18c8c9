//! Spread dynamics: realized gaps against the spread, the mean-reverting
//! gap model, predicted spread responses and the spread autocorrelation.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::events::{EventStream, EventType, N_TYPES};
use crate::gapmodel::slot_of;
use crate::stats::{CorrelationSet, TypedCurves};

/// Mean-reverting spread model. `delta_bar` is the mean spread change of
/// each type in ticks: `+2Δ^R` for MOp and CAp, `-2Δ^R` for LOp, zero for
/// the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadModel {
    pub alpha: f64,
    pub mean_spread: f64,
    /// Mean spread just before events of each type; NaN for absent types.
    pub mean_spread_by_type: [f64; N_TYPES],
    pub delta_bar: [f64; N_TYPES],
    pub probabilities: [f64; N_TYPES],
}

impl SpreadModel {
    pub fn from_stream(stream: &EventStream, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if stream.is_empty() {
            return Err(Error::InsufficientData("empty stream".into()));
        }
        let mut sum = [0i64; N_TYPES];
        let mut gap_sum = [0i64; N_TYPES];
        let mut count = [0u64; N_TYPES];
        for e in &stream.events {
            let k = e.event_type.index();
            sum[k] += e.spread_before_half;
            gap_sum[k] += e.gap_half;
            count[k] += 1;
        }
        let total: i64 = sum.iter().sum();
        let mean_spread = total as f64 / stream.len() as f64 / 2.0;
        let mean_spread_by_type =
            std::array::from_fn(|k| if count[k] == 0 { f64::NAN } else { sum[k] as f64 / count[k] as f64 / 2.0 });
        // Types that never occur contribute nothing.
        let delta_bar = std::array::from_fn(|k| {
            let t = EventType::ALL[k];
            if count[k] == 0 {
                0.0
            } else {
                gap_sum[k] as f64 / count[k] as f64 * t.spread_factor() as f64 / 2.0
            }
        });
        Ok(SpreadModel { alpha, mean_spread, mean_spread_by_type, delta_bar, probabilities: stream.probabilities() })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(SpreadModel { alpha, ..self.clone() })
    }

    /// `Σ_π P(π) Δ̄^R_π`, the one-step drift implied by constant gaps.
    pub fn implied_drift(&self) -> f64 {
        (0..N_TYPES).map(|k| self.probabilities[k] * self.delta_bar[k]).sum()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    Ok(())
}

/// Realized gaps of the price-changing types for one spread bin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadBin {
    pub lo: f64,
    pub hi: f64,
    /// Mean gap in ticks per MOp, CAp, LOp; NaN when the bin is empty.
    pub mean_gap: [f64; 3],
    pub counts: [u64; 3],
}

impl SpreadBin {
    pub fn flagged(&self, slot: usize) -> bool {
        self.counts[slot] == 0
    }
}

/// Realized gaps binned by the spread before the event. `edges` are in
/// ticks and bins are half-open `[lo, hi)`.
pub fn gaps_vs_spread(stream: &EventStream, edges: &[f64]) -> Result<Vec<SpreadBin>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::ConfigInvalid("bin edges must be strictly increasing with at least two entries".into()));
    }
    let nb = edges.len() - 1;
    let mut sum = vec![[0i64; 3]; nb];
    let mut count = vec![[0u64; 3]; nb];
    for e in &stream.events {
        let Some(k) = slot_of(e.event_type.index()) else { continue };
        let s = e.spread_before_half as f64 / 2.0;
        if s < edges[0] || s >= edges[nb] {
            continue;
        }
        let b = edges.partition_point(|&x| x <= s) - 1;
        sum[b][k] += e.gap_half;
        count[b][k] += 1;
    }
    if count.iter().all(|c| c.iter().all(|&n| n == 0)) {
        return Err(Error::InsufficientData("no price-changing events inside the spread bins".into()));
    }
    Ok((0..nb)
        .map(|b| SpreadBin {
            lo: edges[b],
            hi: edges[b + 1],
            mean_gap: std::array::from_fn(|k| {
                if count[b][k] == 0 {
                    f64::NAN
                } else {
                    sum[b][k] as f64 / count[b][k] as f64 / 2.0
                }
            }),
            counts: count[b],
        })
        .collect())
}

/// OLS of `S_{t+1} - S_t` on `S_t` over same-day steps. Under the
/// mean-reverting model the slope is `-α`. Returns `(slope, stderr)`.
pub fn one_step_reversion(stream: &EventStream) -> Result<(f64, f64)> {
    let (mut n, mut sx, mut sy, mut sxx, mut sxy, mut syy) = (0f64, 0f64, 0f64, 0f64, 0f64, 0f64);
    for e in &stream.events {
        let x = e.spread_before_half as f64 / 2.0;
        let y = e.spread_change_half() as f64 / 2.0;
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        syy += y * y;
    }
    let vxx = sxx - sx * sx / n;
    if n < 3.0 || vxx <= 0.0 {
        return Err(Error::InsufficientData("spread never varies".into()));
    }
    let slope = (sxy - sx * sy / n) / vxx;
    let vyy = syy - sy * sy / n;
    let resid = (vyy - slope * slope * vxx).max(0.0) / (n - 2.0);
    Ok((slope, (resid / vxx).sqrt()))
}

/// Mean one-step spread change in ticks with its standard error from
/// day-block means, the balance that any stationary stream satisfies.
pub fn one_step_balance(stream: &EventStream) -> Result<(f64, f64)> {
    let ranges = stream.day_ranges();
    if stream.is_empty() {
        return Err(Error::InsufficientData("empty stream".into()));
    }
    let n = stream.len() as f64;
    let total: i64 = stream.events.iter().map(|e| e.spread_change_half()).sum();
    let mean = total as f64 / 2.0 / n;
    if ranges.len() < 2 {
        let var = stream
            .events
            .iter()
            .map(|e| (e.spread_change_half() as f64 / 2.0 - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        return Ok((mean, (var / n).sqrt()));
    }
    // Ratio estimator over days: the variance of Σ_d (y_d - mean n_d).
    let v: f64 = ranges
        .iter()
        .map(|&(a, b)| {
            let y: i64 = stream.events[a..b].iter().map(|e| e.spread_change_half()).sum();
            (y as f64 / 2.0 - mean * (b - a) as f64).powi(2)
        })
        .sum();
    let d = ranges.len() as f64;
    Ok((mean, (v * d / (d - 1.0)).sqrt() / n))
}

/// Multiplies `Π + 1` beyond lag `L/2` by the reciprocal of its tail mean,
/// so every cell has `Π → 0` at long lags.
pub fn adjust_pi_tails(corr: &CorrelationSet) -> CorrelationSet {
    let mut out = corr.clone();
    let w = corr.max_lag + 1;
    let start = corr.max_lag / 2 + 1;
    for a in 0..N_TYPES {
        for b in 0..N_TYPES {
            if corr.probabilities[a] == 0.0 || corr.probabilities[b] == 0.0 || start > corr.max_lag {
                continue;
            }
            let base = (a * N_TYPES + b) * w;
            let tail = &corr.unsigned[base + start..base + w];
            let finite: Vec<f64> = tail.iter().filter(|v| v.is_finite()).map(|v| v + 1.0).collect();
            if finite.is_empty() {
                continue;
            }
            let m = finite.iter().sum::<f64>() / finite.len() as f64;
            if m <= 0.0 {
                continue;
            }
            for v in &mut out.unsigned[base + start..base + w] {
                *v = (*v + 1.0) / m - 1.0;
            }
        }
    }
    out
}

/// `R̂^S_{π1}(ℓ) = [⟨S⟩ - ⟨S⟩_{π1}][1 - (1-α)^ℓ]
///   + Σ_{t'<ℓ} Σ_{π2} (1-α)^{ℓ-1-t'} Δ̄^R_{π2} P(π2) Π_{π1,π2}(t')`
/// for `ℓ = 0..=lmax`. Types that never occur get NaN curves.
pub fn predict_spread_response(model: &SpreadModel, pi: &CorrelationSet, lmax: usize) -> Result<TypedCurves> {
    check_alpha(model.alpha)?;
    if lmax > 0 && pi.max_lag < lmax - 1 {
        return Err(Error::DimensionMismatch(format!(
            "correlations estimated to lag {}, need {}",
            pi.max_lag,
            lmax - 1
        )));
    }
    let w = lmax + 1;
    let decay = 1.0 - model.alpha;
    let mut values = vec![f64::NAN; N_TYPES * w];
    for a in 0..N_TYPES {
        if model.probabilities[a] == 0.0 {
            continue;
        }
        let gap_term = model.mean_spread - model.mean_spread_by_type[a];
        let out = &mut values[a * w..(a + 1) * w];
        out[0] = 0.0;
        let mut acc = 0.0;
        for l in 1..=lmax {
            let x: f64 = (0..N_TYPES)
                .filter(|&b| model.delta_bar[b] != 0.0)
                .map(|b| model.delta_bar[b] * model.probabilities[b] * pi.pi(a, b, l - 1))
                .sum();
            acc = decay * acc + x;
            out[l] = gap_term * (1.0 - decay.powi(l as i32)) + acc;
        }
    }
    Ok(TypedCurves { max_lag: lmax, values, stderr: vec![0.0; N_TYPES * w], counts: vec![0; N_TYPES * w] })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    pub sse: f64,
    /// `(α, squared error)` for every grid point.
    pub grid: Vec<(f64, f64)>,
}

/// Zero followed by 40 log-spaced values from 1e-4 to 0.5.
pub fn default_alpha_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    let (lo, hi) = (1e-4f64.ln(), 0.5f64.ln());
    g.extend((0..40).map(|i| (lo + (hi - lo) * i as f64 / 39.0).exp()));
    g
}

/// Grid search for the α minimizing the squared difference between the
/// predicted and empirical spread responses over `ℓ = 1..=lmax`.
pub fn fit_alpha(
    model: &SpreadModel,
    pi: &CorrelationSet,
    empirical: &TypedCurves,
    lmax: usize,
    grid: &[f64],
) -> Result<AlphaFit> {
    if empirical.max_lag < lmax {
        return Err(Error::DimensionMismatch(format!(
            "empirical responses reach lag {}, need {lmax}",
            empirical.max_lag
        )));
    }
    let mut scored = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let pred = predict_spread_response(&model.with_alpha(alpha)?, pi, lmax)?;
        let mut sse = 0.0;
        for a in 0..N_TYPES {
            for l in 1..=lmax {
                let (p, e) = (pred.get(a, l), empirical.get(a, l));
                if p.is_finite() && e.is_finite() {
                    sse += (p - e).powi(2);
                }
            }
        }
        scored.push((alpha, sse));
    }
    let &(alpha, sse) = scored
        .iter()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| Error::ConfigInvalid("empty alpha grid".into()))?;
    Ok(AlphaFit { alpha, sse, grid: scored })
}

/// Spread autocorrelation with an exponential fit `acf(ℓ) ≈ A e^{-rate ℓ}`
/// over `1 ≤ ℓ ≤ fit_max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadAcf {
    pub acf: Vec<f64>,
    pub rate: f64,
    pub amplitude: f64,
    /// Of the log-linear fit.
    pub r_squared: f64,
    pub fit_max_lag: usize,
    /// The correlation is still above 0.95 at `fit_max_lag`: the spread
    /// behaves like a random walk over the window.
    pub unit_root: bool,
}

/// Autocorrelation of the spread before each event, mean-subtracted over
/// the stream and summed over same-day pairs only.
pub fn spread_autocorrelation(stream: &EventStream, max_lag: usize) -> SpreadAcf {
    let n = stream.len();
    let mean = stream.events.iter().map(|e| e.spread_before_half as f64).sum::<f64>() / n.max(1) as f64;
    let mut num = vec![0.0; max_lag + 1];
    let mut pairs = vec![0u64; max_lag + 1];
    let mut planner = FftPlanner::<f64>::new();
    for (a, b) in stream.day_ranges() {
        let x: Vec<f64> = stream.events[a..b].iter().map(|e| (e.spread_before_half as f64 - mean) / 2.0).collect();
        let ac = autocov_fft(&mut planner, &x, max_lag);
        for l in 0..=max_lag.min(x.len().saturating_sub(1)) {
            num[l] += ac[l];
            pairs[l] += (x.len() - l) as u64;
        }
    }
    let c0 = if pairs[0] > 0 { num[0] / pairs[0] as f64 } else { f64::NAN };
    let acf: Vec<f64> = (0..=max_lag)
        .map(|l| if pairs[l] == 0 || !(c0 > 0.0) { f64::NAN } else { num[l] / pairs[l] as f64 / c0 })
        .collect();
    let fit_max_lag = max_lag.min(100);
    let pts: Vec<(f64, f64)> =
        (1..=fit_max_lag).filter(|&l| acf[l] > 0.0).map(|l| (l as f64, acf[l].ln())).collect();
    let (rate, amplitude, r_squared) = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        let slope = sxy / sxx;
        let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
        (-slope, (my - slope * mx).exp(), r2)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    let unit_root = acf.get(fit_max_lag).is_some_and(|&v| v > 0.95);
    SpreadAcf { acf, rate, amplitude, r_squared, fit_max_lag, unit_root }
}

/// `Σ_t x_t x_{t+ℓ}` for `ℓ = 0..=max_lag` by zero-padded FFT.
fn autocov_fft(planner: &mut FftPlanner<f64>, x: &[f64], max_lag: usize) -> Vec<f64> {
    if x.is_empty() {
        return vec![0.0; max_lag + 1];
    }
    let size = (x.len() + max_lag + 1).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    buf.resize(size, Complex::new(0.0, 0.0));
    planner.plan_fft_forward(size).process(&mut buf);
    for v in &mut buf {
        *v = Complex::new(v.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(size).process(&mut buf);
    (0..=max_lag).map(|l| if l < size { buf[l].re / size as f64 } else { 0.0 }).collect()
}

pub fn spread_json(model: &SpreadModel, predicted: &TypedCurves, acf: &SpreadAcf, pi_adjusted: bool) -> Value {
    let rs: serde_json::Map<String, Value> = EventType::ALL
        .iter()
        .filter(|t| model.probabilities[t.index()] > 0.0)
        .map(|t| (t.code().to_string(), json!(predicted.curve(t.index()))))
        .collect();
    let by_type: serde_json::Map<String, Value> = EventType::ALL
        .iter()
        .map(|t| {
            let v = model.mean_spread_by_type[t.index()];
            (t.code().to_string(), if v.is_finite() { json!(v) } else { Value::Null })
        })
        .collect();
    json!({
        "alpha": model.alpha,
        "meanS": model.mean_spread,
        "meanS_by_type": by_type,
        "RS_pred": rs,
        "spread_acf": acf.acf.iter().map(|v| if v.is_finite() { json!(v) } else { Value::Null }).collect::<Vec<_>>(),
        "spread_acf_fit": {
            "rate": acf.rate,
            "amplitude": acf.amplitude,
            "r_squared": acf.r_squared,
            "max_lag": acf.fit_max_lag,
            "unit_root": acf.unit_root,
        },
        "pi_adjustment": if pi_adjusted { "multiplicative (Pi+1) tail rescale beyond L/2" } else { "none" },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::MarketEvent;

    fn flat_stream() -> EventStream {
        // MOp widens by 2 half-ticks, LOp closes by 2: spread alternates 4, 6.
        let mut ev = Vec::new();
        let (mut mid, mut spread) = (1000i64, 4i64);
        for i in 0..400 {
            let (t, sign, gap) = match i % 4 {
                0 => (EventType::MOp, 1, 1),
                1 => (EventType::LO0, 1, 0),
                2 => (EventType::LOp, -1, 1),
                _ => (EventType::CA0, 1, 0),
            };
            let e = MarketEvent {
                timestamp_ns: i,
                day: 0,
                event_type: t,
                sign,
                gap_half: gap,
                mid_before_half: mid,
                spread_before_half: spread,
                volume: None,
            };
            mid = e.mid_after_half();
            spread = e.spread_after_half();
            ev.push(e);
        }
        EventStream::new("T", 0.01, ev).unwrap()
    }

    #[test]
    fn alpha_range_is_checked() {
        let s = flat_stream();
        assert_eq!(SpreadModel::from_stream(&s, 1.0).unwrap_err().kind(), "AlphaOutOfRange");
        assert_eq!(SpreadModel::from_stream(&s, -0.1).unwrap_err().kind(), "AlphaOutOfRange");
    }

    #[test]
    fn gaps_vs_spread_flags_empty_bins() {
        let mut ev = flat_stream().events;
        ev.push(MarketEvent { event_type: EventType::CAp, gap_half: 1, ..ev[399] });
        let s = EventStream::new("T", 0.01, ev).unwrap();
        let bins = gaps_vs_spread(&s, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(bins[0].counts, [0, 0, 0]);
        assert!(bins[0].flagged(0) && bins[0].mean_gap[0].is_nan());
        assert_eq!(bins[1].mean_gap[0], 0.5);
        assert_eq!(bins[2].mean_gap[2], 0.5);
    }

    #[test]
    fn zero_alpha_is_the_pi_convolution() {
        let s = flat_stream();
        let corr = crate::stats::estimate_correlations(&s, 8, true).unwrap();
        let m = SpreadModel::from_stream(&s, 0.0).unwrap();
        let p = predict_spread_response(&m, &corr, 8).unwrap();
        assert!(p.get(0, 3).is_nan());
        for a in [1, 2, 3, 5] {
            let mut direct = 0.0;
            for l in 1..=8 {
                direct += [1, 5].iter().map(|&b| m.delta_bar[b] * m.probabilities[b] * corr.pi(a, b, l - 1)).sum::<f64>();
                assert!((p.get(a, l) - direct).abs() < 1e-12);
            }
        }
        // The deterministic cycle makes the response exact at ℓ = 1.
        assert!((p.get(1, 1) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn acf_of_alternating_spread() {
        let acf = spread_autocorrelation(&flat_stream(), 4);
        assert!((acf.acf[0] - 1.0).abs() < 1e-12);
        assert!((acf.acf[2] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn fft_autocov_matches_direct() {
        let x: Vec<f64> = (0..37).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut planner = FftPlanner::new();
        let ac = autocov_fft(&mut planner, &x, 10);
        for l in 0..=10 {
            let d: f64 = x[..x.len() - l].iter().zip(&x[l..]).map(|(a, b)| a * b).sum();
            assert!((ac[l] - d).abs() < 1e-9);
        }
    }
}
