//! Constant-impact model, realized gaps, gap-fluctuation kernels and the
//! history-dependent model built from them.

use faer::Mat;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::events::{EventStream, EventType, N_TYPES};
use crate::propagator::{default_lambda, Factor};
use crate::stats::{blocks, bootstrap_weights, std_dev, CorrelationSet, TypedCurves};

/// Type indices of MOp, CAp and LOp, the only kernel targets.
pub const PC_TYPES: [usize; 3] = [1, 4, 5];

pub fn slot_of(type_index: usize) -> Option<usize> {
    PC_TYPES.iter().position(|&t| t == type_index)
}

/// Kernel `κ_{src, target}(τ)` for `src` over all six types, `target` over
/// the three price-changing slots and `τ = 1..=max_lag`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub max_lag: usize,
    pub values: Vec<f64>,
}

impl KernelTable {
    pub fn zeros(max_lag: usize) -> Self {
        KernelTable { max_lag, values: vec![0.0; N_TYPES * 3 * max_lag] }
    }

    #[inline]
    fn idx(&self, src: usize, slot: usize, tau: usize) -> usize {
        (src * 3 + slot) * self.max_lag + tau - 1
    }

    /// Zero for `τ` outside `1..=max_lag`.
    #[inline]
    pub fn get(&self, src: usize, slot: usize, tau: usize) -> f64 {
        if tau == 0 || tau > self.max_lag {
            0.0
        } else {
            self.values[self.idx(src, slot, tau)]
        }
    }

    pub fn set(&mut self, src: usize, slot: usize, tau: usize, v: f64) {
        let i = self.idx(src, slot, tau);
        self.values[i] = v;
    }

    pub fn series(&self, src: usize, slot: usize) -> &[f64] {
        let a = (src * 3 + slot) * self.max_lag;
        &self.values[a..a + self.max_lag]
    }

    pub fn sub(&self, other: &KernelTable) -> KernelTable {
        KernelTable {
            max_lag: self.max_lag,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        }
    }

    fn to_json(&self) -> Value {
        let mut m = Map::new();
        for src in EventType::ALL {
            for (k, &dst) in PC_TYPES.iter().enumerate() {
                let key = format!("{}->{}", src.code(), EventType::ALL[dst].code());
                m.insert(key, json!(self.series(src.index(), k).iter().map(|&x| finite(x)).collect::<Vec<_>>()));
            }
        }
        Value::Object(m)
    }
}

fn finite(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Mean realized gaps, in ticks.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizedGaps {
    /// `Δ^R` for MOp, CAp, LOp.
    pub delta_r: [f64; 3],
    pub counts: [u64; 3],
    /// The unconditional gap behind the best quote needs depth data that the
    /// event stream does not carry.
    pub unconditional: Option<f64>,
    /// `(spread before the event in ticks, mean gap per slot, count per slot)`.
    pub by_spread: Vec<(f64, [f64; 3], [u64; 3])>,
}

impl RealizedGaps {
    /// `Δ^R` of any type; zero for types that leave the price unchanged.
    pub fn of_type(&self, type_index: usize) -> f64 {
        slot_of(type_index).map_or(0.0, |k| self.delta_r[k])
    }

    pub fn from_delta_r(delta_r: [f64; 3]) -> Self {
        RealizedGaps { delta_r, counts: [0; 3], unconditional: None, by_spread: Vec::new() }
    }
}

pub fn realized_gaps(stream: &EventStream) -> Result<RealizedGaps> {
    let mut sum = [0i64; 3];
    let mut counts = [0u64; 3];
    let mut bins: std::collections::BTreeMap<i64, ([i64; 3], [u64; 3])> = Default::default();
    for e in &stream.events {
        if let Some(k) = slot_of(e.event_type.index()) {
            sum[k] += e.gap_half;
            counts[k] += 1;
            let b = bins.entry(e.spread_before_half).or_default();
            b.0[k] += e.gap_half;
            b.1[k] += 1;
        }
    }
    for k in 0..3 {
        if counts[k] == 0 {
            return Err(Error::InsufficientData(format!(
                "no {} events to estimate a realized gap",
                EventType::ALL[PC_TYPES[k]]
            )));
        }
    }
    let delta_r = std::array::from_fn(|k| sum[k] as f64 / counts[k] as f64 / 2.0);
    let by_spread = bins
        .into_iter()
        .map(|(s, (g, c))| {
            let mean = std::array::from_fn(|k| if c[k] == 0 { f64::NAN } else { g[k] as f64 / c[k] as f64 / 2.0 });
            (s as f64 / 2.0, mean, c)
        })
        .collect();
    Ok(RealizedGaps { delta_r, counts, unconditional: None, by_spread })
}

fn require_lag(corr: &CorrelationSet, needed: usize) -> Result<()> {
    if corr.max_lag < needed {
        return Err(Error::DimensionMismatch(format!(
            "correlations estimated to lag {}, need {needed}",
            corr.max_lag
        )));
    }
    Ok(())
}

/// `R̂_π(ℓ) = Σ_{0≤t'<ℓ} Σ_{π1} Δ^R_{π1} P(π1) C_{π,π1}(t')` for `ℓ = 0..=lmax`.
pub fn predict_response_constant(gaps: &RealizedGaps, corr: &CorrelationSet, lmax: usize) -> Result<TypedCurves> {
    require_lag(corr, lmax.saturating_sub(1))?;
    let w = lmax + 1;
    let p = corr.probabilities;
    let mut values = vec![0.0; N_TYPES * w];
    for a in 0..N_TYPES {
        let mut acc = 0.0;
        for ell in 1..=lmax {
            for &b in &PC_TYPES {
                acc += gaps.of_type(b) * p[b] * corr.c(a, b, ell - 1);
            }
            values[a * w + ell] = if p[a] > 0.0 { acc } else { f64::NAN };
        }
    }
    Ok(TypedCurves { max_lag: lmax, stderr: vec![f64::NAN; values.len()], counts: vec![0; values.len()], values })
}

/// `w(k) = Σ_{π1,π2} P1 P2 Δ1 Δ2 C_{π1π2}(k)` for `k = 0..=kmax`.
fn weighted_flow_autocov(gaps: &RealizedGaps, corr: &CorrelationSet, kmax: usize) -> Vec<f64> {
    let p = corr.probabilities;
    (0..=kmax)
        .map(|k| {
            let mut s = 0.0;
            for &a in &PC_TYPES {
                for &b in &PC_TYPES {
                    s += p[a] * p[b] * gaps.of_type(a) * gaps.of_type(b) * corr.c(a, b, k);
                }
            }
            s
        })
        .collect()
}

/// `D̂(ℓ) = ℓ w(0) + 2 Σ_{k=1}^{ℓ-1} (ℓ−k) w(k)` for `ℓ = 0..=lmax`.
pub fn predict_diffusion_constant(gaps: &RealizedGaps, corr: &CorrelationSet, lmax: usize) -> Result<Vec<f64>> {
    require_lag(corr, lmax.saturating_sub(1))?;
    let w = weighted_flow_autocov(gaps, corr, lmax.saturating_sub(1));
    // D(ℓ) - D(ℓ-1) = w(0) + 2 Σ_{k=1}^{ℓ-1} w(k)
    let mut d = vec![0.0; lmax + 1];
    let mut partial = 0.0;
    for ell in 1..=lmax {
        if ell >= 2 {
            partial += w[ell - 1];
        }
        d[ell] = d[ell - 1] + w[0] + 2.0 * partial;
    }
    Ok(d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub max_lag: usize,
    /// `None` selects the default ridge weight.
    pub lambda: Option<f64>,
    pub bootstrap_reps: usize,
    pub seed: u64,
}

impl KernelConfig {
    pub fn with_lag(max_lag: usize) -> Self {
        KernelConfig { max_lag, lambda: None, bootstrap_reps: 100, seed: 0x5eed }
    }
}

/// Binned check of realized next-event price change against its forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastCalibration {
    pub slope: f64,
    pub intercept: f64,
    /// Cubic coefficient of a fit in predictor-standard-deviation units.
    pub cubic: f64,
    /// `(mean forecast, mean realized)` per equal-count bin.
    pub bins: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapKernelSet {
    pub max_lag: usize,
    pub k: KernelTable,
    pub k_tilde: KernelTable,
    /// `K − K̃`, the regression-convention gap kernel.
    pub kappa: KernelTable,
    pub k_se: KernelTable,
    pub k_tilde_se: KernelTable,
    pub kappa_se: KernelTable,
    /// Residual variance of each regression per target (`η`).
    pub residual_var: [f64; 3],
    /// Same for the constant-gap regressand (`η̃`).
    pub residual_var_tilde: [f64; 3],
    pub lambda: f64,
    pub gaps: RealizedGaps,
    pub forecast: ForecastCalibration,
}

/// Integer sums of `Δ ε_{t+ℓ} ε_t` and `ε_{t+ℓ} ε_t` for target `π_{t+ℓ}` in
/// the price-changing slots, by source type and lag.
#[derive(Clone)]
struct LhsSums {
    gap: Vec<i64>,
    sign: Vec<i64>,
    pairs: Vec<u64>,
    gap_total: [i64; 3],
    gap_count: [u64; 3],
}

impl LhsSums {
    fn zeros(lk: usize) -> Self {
        LhsSums {
            gap: vec![0; 3 * N_TYPES * lk],
            sign: vec![0; 3 * N_TYPES * lk],
            pairs: vec![0; lk + 1],
            gap_total: [0; 3],
            gap_count: [0; 3],
        }
    }

    fn add_scaled(&mut self, o: &LhsSums, m: u64) {
        let k = m as i64;
        self.gap.iter_mut().zip(&o.gap).for_each(|(a, b)| *a += k * b);
        self.sign.iter_mut().zip(&o.sign).for_each(|(a, b)| *a += k * b);
        self.pairs.iter_mut().zip(&o.pairs).for_each(|(a, b)| *a += m * b);
        for s in 0..3 {
            self.gap_total[s] += k * o.gap_total[s];
            self.gap_count[s] += m * o.gap_count[s];
        }
    }

    fn delta_r(&self) -> [f64; 3] {
        std::array::from_fn(|s| self.gap_total[s] as f64 / self.gap_count[s] as f64 / 2.0)
    }

    /// Right-hand sides in the active-row layout: three `K` columns, then
    /// three `K̃` columns.
    fn rhs(&self, active: &[usize], lk: usize) -> Mat<f64> {
        let dr = self.delta_r();
        Mat::from_fn(active.len() * lk, 6, |row, col| {
            let src = active[row / lk];
            let ell = row % lk + 1;
            let slot = col % 3;
            let i = (slot * N_TYPES + src) * lk + ell - 1;
            let n = self.pairs[ell] as f64;
            if col < 3 {
                self.gap[i] as f64 / 2.0 / n
            } else {
                dr[slot] * self.sign[i] as f64 / n
            }
        })
    }
}

fn kernel_tables(x: &Mat<f64>, active: &[usize], lk: usize) -> (KernelTable, KernelTable) {
    let mut k = KernelTable::zeros(lk);
    let mut kt = KernelTable::zeros(lk);
    for (ai, &src) in active.iter().enumerate() {
        for tau in 1..=lk {
            let row = ai * lk + tau - 1;
            for slot in 0..3 {
                k.set(src, slot, tau, x[(row, slot)]);
                kt.set(src, slot, tau, x[(row, 3 + slot)]);
            }
        }
    }
    (k, kt)
}

/// Signed-flow autocovariance system shared by all six regressions: rows
/// `(π1, ℓ)`, columns `(π2, τ)`, entries `⟨x_{π2}(t+ℓ−τ) x_{π1}(t)⟩`.
fn kernel_system(corr: &CorrelationSet, active: &[usize], lk: usize) -> Mat<f64> {
    let p = corr.probabilities;
    Mat::from_fn(active.len() * lk, active.len() * lk, |row, col| {
        let (p1, ell) = (active[row / lk], row % lk + 1);
        let (p2, tau) = (active[col / lk], col % lk + 1);
        let c = if tau <= ell { corr.c(p1, p2, ell - tau) } else { corr.c(p2, p1, tau - ell) };
        p[p1] * p[p2] * c
    })
}

/// Calibrates `K` and `K̃` for the three price-changing targets and sets
/// `κ = K − K̃`. Standard errors come from a day-block bootstrap of the
/// regressands with the system held fixed.
pub fn calibrate_kernels(stream: &EventStream, corr: &CorrelationSet, cfg: &KernelConfig) -> Result<GapKernelSet> {
    let lk = cfg.max_lag;
    if lk == 0 || lk > corr.max_lag {
        return Err(Error::DimensionMismatch(format!(
            "kernel lag {lk} must lie in 1..={}",
            corr.max_lag
        )));
    }
    let gaps = realized_gaps(stream)?;
    let types = stream.type_indices();
    let signs = stream.signs();
    let per_day: Vec<LhsSums> = blocks(stream, corr.same_day_only)
        .into_iter()
        .map(|(a, b, limit)| {
            let mut s = LhsSums::zeros(lk);
            for t in a..b {
                if let Some(k) = slot_of(types[t] as usize) {
                    s.gap_total[k] += stream.events[t].gap_half;
                    s.gap_count[k] += 1;
                }
            }
            for ell in 1..=lk {
                for t in a..b {
                    let u = t + ell;
                    if u >= limit {
                        break;
                    }
                    s.pairs[ell] += 1;
                    if let Some(k) = slot_of(types[u] as usize) {
                        let x = (signs[t] * signs[u]) as i64;
                        let i = (k * N_TYPES + types[t] as usize) * lk + ell - 1;
                        s.gap[i] += stream.events[u].gap_half * x;
                        s.sign[i] += x;
                    }
                }
            }
            s
        })
        .collect();
    let mut total = LhsSums::zeros(lk);
    for d in &per_day {
        total.add_scaled(d, 1);
    }
    for ell in 1..=lk {
        if total.pairs[ell] != corr.sums.pair_counts[ell] {
            return Err(Error::DimensionMismatch(
                "correlations were not estimated on this stream with the same day convention".into(),
            ));
        }
    }
    let active = corr.active_types();
    let system = kernel_system(corr, &active, lk);
    let lambda = cfg.lambda.unwrap_or_else(|| default_lambda(system.as_ref()));
    let factor = Factor::new(system.as_ref(), lambda)?;
    let x = factor.solve(total.rhs(&active, lk).as_ref());
    let (k, k_tilde) = kernel_tables(&x, &active, lk);
    let kappa = k.sub(&k_tilde);
    if kappa.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { ratio: 0.0 });
    }

    let mut k_se = KernelTable { max_lag: lk, values: vec![f64::NAN; k.values.len()] };
    let mut k_tilde_se = k_se.clone();
    let mut kappa_se = k_se.clone();
    if per_day.len() >= 2 && cfg.bootstrap_reps >= 2 {
        let cells = k.values.len();
        let mut reps = vec![(Vec::new(), Vec::new(), Vec::new()); cells];
        for m in bootstrap_weights(per_day.len(), cfg.bootstrap_reps, cfg.seed ^ 0x6b65) {
            let mut s = LhsSums::zeros(lk);
            for (d, &w) in per_day.iter().zip(&m) {
                if w > 0 {
                    s.add_scaled(d, w);
                }
            }
            let xb = factor.solve(s.rhs(&active, lk).as_ref());
            let (kb, ktb) = kernel_tables(&xb, &active, lk);
            for i in 0..cells {
                reps[i].0.push(kb.values[i]);
                reps[i].1.push(ktb.values[i]);
                reps[i].2.push(kb.values[i] - ktb.values[i]);
            }
        }
        k_se.values = reps.iter().map(|r| std_dev(&r.0)).collect();
        k_tilde_se.values = reps.iter().map(|r| std_dev(&r.1)).collect();
        kappa_se.values = reps.iter().map(|r| std_dev(&r.2)).collect();
    }

    let (residual_var, residual_var_tilde, forecast) = regression_diagnostics(stream, &k, &k_tilde, &gaps, corr.same_day_only);
    Ok(GapKernelSet {
        max_lag: lk,
        k,
        k_tilde,
        kappa,
        k_se,
        k_tilde_se,
        kappa_se,
        residual_var,
        residual_var_tilde,
        lambda,
        gaps,
        forecast,
    })
}

fn regression_diagnostics(
    stream: &EventStream,
    k: &KernelTable,
    k_tilde: &KernelTable,
    gaps: &RealizedGaps,
    same_day_only: bool,
) -> ([f64; 3], [f64; 3], ForecastCalibration) {
    let lk = k.max_lag;
    let types = stream.type_indices();
    let signs = stream.signs();
    let mut ss = [0.0; 3];
    let mut ss_t = [0.0; 3];
    let mut n = 0usize;
    let mut pairs = Vec::with_capacity(stream.len());
    for (a, b, _) in blocks(stream, same_day_only) {
        let start = if same_day_only { a } else { 0 };
        for t in a..b {
            let mut f = [0.0; 3];
            let mut ft = [0.0; 3];
            for tau in 1..=lk.min(t - start) {
                let src = types[t - tau] as usize;
                let s = signs[t - tau] as f64;
                for slot in 0..3 {
                    f[slot] += k.get(src, slot, tau) * s;
                    ft[slot] += k_tilde.get(src, slot, tau) * s;
                }
            }
            let own = slot_of(types[t] as usize);
            let e = signs[t] as f64;
            for slot in 0..3 {
                let (y, yt) = if own == Some(slot) {
                    (stream.events[t].gap_half as f64 / 2.0 * e, gaps.delta_r[slot] * e)
                } else {
                    (0.0, 0.0)
                };
                ss[slot] += (y - f[slot]).powi(2);
                ss_t[slot] += (yt - ft[slot]).powi(2);
            }
            n += 1;
            let realized = stream.events[t].mid_change_half() as f64 / 2.0;
            pairs.push((f.iter().sum::<f64>(), realized));
        }
    }
    let nf = n.max(1) as f64;
    (ss.map(|x| x / nf), ss_t.map(|x| x / nf), forecast_calibration(pairs, 20))
}

/// Equal-count binning of `(forecast, realized)` with a linear and a cubic
/// least-squares fit through the bin means.
pub fn forecast_calibration(mut pairs: Vec<(f64, f64)>, n_bins: usize) -> ForecastCalibration {
    let nan = ForecastCalibration { slope: f64::NAN, intercept: f64::NAN, cubic: f64::NAN, bins: Vec::new() };
    if pairs.len() < 2 * n_bins || n_bins < 4 {
        return nan;
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let per = pairs.len() / n_bins;
    let bins: Vec<(f64, f64)> = (0..n_bins)
        .map(|i| {
            let chunk = &pairs[i * per..if i + 1 == n_bins { pairs.len() } else { (i + 1) * per }];
            let m = chunk.len() as f64;
            (chunk.iter().map(|p| p.0).sum::<f64>() / m, chunk.iter().map(|p| p.1).sum::<f64>() / m)
        })
        .collect();
    let mean_f = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let sd = (pairs.iter().map(|p| (p.0 - mean_f).powi(2)).sum::<f64>() / pairs.len() as f64).sqrt();
    if !(sd > 0.0) {
        return ForecastCalibration { bins, ..nan };
    }
    let lin = least_squares(&bins.iter().map(|b| vec![1.0, b.0]).collect::<Vec<_>>(), &bins.iter().map(|b| b.1).collect::<Vec<_>>());
    let cub = least_squares(
        &bins.iter().map(|b| {
            let u = b.0 / sd;
            vec![1.0, u, u * u * u]
        }).collect::<Vec<_>>(),
        &bins.iter().map(|b| b.1 / sd).collect::<Vec<_>>(),
    );
    ForecastCalibration { slope: lin[1], intercept: lin[0], cubic: cub[2], bins }
}

fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let p = x[0].len();
    let a = Mat::from_fn(x.len(), p, |i, j| x[i][j]);
    let b = Mat::from_fn(y.len(), 1, |i, _| y[i]);
    match Factor::new(a.as_ref(), 1e-300) {
        Ok(f) => {
            let s = f.solve(b.as_ref());
            (0..p).map(|j| s[(j, 0)]).collect()
        }
        Err(_) => vec![f64::NAN; p],
    }
}

/// Signed-flow vectors `x_t[π] = I(π_t = π) ε_t`.
pub fn signed_flow(stream: &EventStream) -> Vec<[f64; N_TYPES]> {
    stream
        .events
        .iter()
        .map(|e| {
            let mut x = [0.0; N_TYPES];
            x[e.event_type.index()] = e.sign as f64;
            x
        })
        .collect()
}

/// Expected signed price change of the next event per price-changing type,
/// from the `K` convolution over a signed-flow window whose last row is the
/// most recent event. The sum over the three entries is the expected next
/// price change.
pub fn predict_next_jump(history: &[[f64; N_TYPES]], kernels: &KernelTable) -> Result<[f64; 3]> {
    let lk = kernels.max_lag;
    if history.len() < lk {
        return Err(Error::WindowTooShort { needed: lk, got: history.len() });
    }
    let mut out = [0.0; 3];
    for tau in 1..=lk {
        let x = &history[history.len() - tau];
        for (src, &v) in x.iter().enumerate() {
            if v != 0.0 {
                for (slot, o) in out.iter_mut().enumerate() {
                    *o += kernels.get(src, slot, tau) * v;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpactDecomposition {
    pub max_lag: usize,
    /// Laid out `type * (max_lag + 1) + lag`.
    pub g_star: Vec<f64>,
    pub dg_star: Vec<f64>,
    pub g_hat: Vec<f64>,
}

impl ImpactDecomposition {
    pub fn g_hat(&self, type_index: usize, lag: usize) -> f64 {
        self.g_hat[type_index * (self.max_lag + 1) + lag]
    }

    fn curve<'a>(&self, v: &'a [f64], t: usize) -> &'a [f64] {
        let w = self.max_lag + 1;
        &v[t * w..(t + 1) * w]
    }
}

/// `G*_π(ℓ) = Δ^R_π + Σ_{0<t'<ℓ} Σ_{π1} K_{π,π1}(t')`,
/// `δG*_π(ℓ) = Σ Σ (K − K̃)` and `Ĝ_π(ℓ) = Δ^R_π + δG*_π(ℓ)`.
pub fn decompose_impact(gaps: &RealizedGaps, kernels: &GapKernelSet, lmax: usize) -> ImpactDecomposition {
    let w = lmax + 1;
    let mut g_star = vec![0.0; N_TYPES * w];
    let mut dg_star = vec![0.0; N_TYPES * w];
    let mut g_hat = vec![0.0; N_TYPES * w];
    for a in 0..N_TYPES {
        let base = gaps.of_type(a);
        let mut sk = 0.0;
        let mut skappa = 0.0;
        for ell in 1..=lmax {
            if ell >= 2 {
                for slot in 0..3 {
                    sk += kernels.k.get(a, slot, ell - 1);
                    skappa += kernels.kappa.get(a, slot, ell - 1);
                }
            }
            g_star[a * w + ell] = base + sk;
            dg_star[a * w + ell] = skappa;
            g_hat[a * w + ell] = base + skappa;
        }
    }
    ImpactDecomposition { max_lag: lmax, g_star, dg_star, g_hat }
}

/// Factorized-closure diffusion of the history-dependent model, plus `d0`
/// for every `ℓ ≥ 1`.
///
/// `kappa` is in the regression convention; the per-occurrence kernel of the
/// model is `κ / P(target)`. Needs correlations up to lag `lmax + L_K`.
pub fn predict_diffusion_closure(
    gaps: &RealizedGaps,
    kappa: &KernelTable,
    corr: &CorrelationSet,
    lmax: usize,
    d0: f64,
) -> Result<Vec<f64>> {
    let lk = kappa.max_lag;
    require_lag(corr, lmax + lk)?;
    let constant = predict_diffusion_constant(gaps, corr, lmax)?;
    let p = corr.probabilities;
    let k27 = |src: usize, slot: usize, tau: usize| -> f64 {
        let pt = p[PC_TYPES[slot]];
        if pt > 0.0 {
            kappa.get(src, slot, tau) / pt
        } else {
            0.0
        }
    };
    let wcov = |a: usize, b: usize, m: i64| -> f64 { p[a] * p[b] * corr.c_signed_lag(a, b, m) };
    // Σ_{π1} κ27_{π2,π1}(τ) P(π1), which is the regression kernel summed over targets.
    let a_sum = |src: usize, tau: usize| -> f64 { (0..3).map(|s| kappa.get(src, s, tau)).sum() };

    // Cross term f(t), t in (-lmax, lmax), stored at t + lmax.
    let mut f = vec![0.0; 2 * lmax + 1];
    for t in -(lmax as i64) + 1..lmax as i64 {
        let mut acc = 0.0;
        for p2 in 0..N_TYPES {
            for tau in 1..=lk {
                let shared = if t != 0 { a_sum(p2, tau) } else { 0.0 };
                let extra = if t == -(tau as i64) {
                    (0..3).map(|s| kappa.get(p2, s, tau) * corr.pi(p2, PC_TYPES[s], tau)).sum()
                } else {
                    0.0
                };
                for (s3, &p3) in PC_TYPES.iter().enumerate() {
                    let own = if t == 0 { k27(p2, s3, tau) } else { 0.0 };
                    let kplus = own + shared + extra;
                    if kplus != 0.0 {
                        acc += gaps.delta_r[s3] * kplus * wcov(p2, p3, t + tau as i64);
                    }
                }
            }
        }
        f[(t + lmax as i64) as usize] = acc;
    }

    // Fourth-order term g(t) for t >= 0, using g(-t) = g(t).
    // H[(p2,s1),(p4,s3)](d) = Σ_{τ-τ'=d} κ(p2,s1,τ) κ(p4,s3,τ'), d in (-lk, lk).
    let nd = 2 * lk - 1;
    let rows = N_TYPES * 3;
    let mut h = vec![0.0; rows * rows * nd];
    for r1 in 0..rows {
        let (p2, s1) = (r1 / 3, r1 % 3);
        let k1 = kappa.series(p2, s1);
        if k1.iter().all(|&x| x == 0.0) {
            continue;
        }
        for r2 in 0..rows {
            let (p4, s3) = (r2 / 3, r2 % 3);
            let k2 = kappa.series(p4, s3);
            let base = (r1 * rows + r2) * nd;
            for (i, &x) in k1.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                for (j, &y) in k2.iter().enumerate() {
                    h[base + i + lk - 1 - j] += x * y;
                }
            }
        }
    }
    let mut g = vec![0.0; lmax];
    for t in 0..lmax {
        let mt = |s1: usize, s3: usize| corr.pi(PC_TYPES[s1], PC_TYPES[s3], t) + 1.0;
        let mut acc = 0.0;
        for r1 in 0..rows {
            let (p2, s1) = (r1 / 3, r1 % 3);
            for r2 in 0..rows {
                let (p4, s3) = (r2 / 3, r2 % 3);
                let base = (r1 * rows + r2) * nd;
                let mut z = 0.0;
                for di in 0..nd {
                    let hv = h[base + di];
                    if hv != 0.0 {
                        let d = di as i64 - (lk as i64 - 1);
                        z += hv * wcov(p2, p4, d + t as i64);
                    }
                }
                if z != 0.0 {
                    acc += mt(s1, s3) * z;
                }
            }
        }
        if t >= 1 && t <= lk {
            // τ' = t: swap the factorized term for the coincident one.
            for p2 in 0..N_TYPES {
                for p4 in 0..N_TYPES {
                    for tau in 1..=lk {
                        let w = wcov(p2, p4, tau as i64);
                        let mut b = 0.0;
                        for s1 in 0..3 {
                            for s3 in 0..3 {
                                b += kappa.get(p2, s1, tau) * kappa.get(p4, s3, t) * mt(s1, s3);
                            }
                        }
                        let coincident = match slot_of(p4) {
                            Some(s4) => k27(p2, s4, tau) * a_sum(p4, t),
                            None => 0.0,
                        };
                        acc += (coincident - b) * w;
                    }
                }
            }
        }
        g[t] = acc;
    }

    let mut out = vec![0.0; lmax + 1];
    for ell in 1..=lmax {
        let mut cross = 0.0;
        let mut quad = 0.0;
        for t in -(ell as i64) + 1..ell as i64 {
            let weight = (ell as i64 - t.abs()) as f64;
            cross += weight * f[(t + lmax as i64) as usize];
            quad += weight * g[t.unsigned_abs() as usize];
        }
        out[ell] = constant[ell] + 2.0 * cross + quad + d0;
    }
    Ok(out)
}

pub fn gapmodel_json(
    gaps: &RealizedGaps,
    kernels: &GapKernelSet,
    decomposition: &ImpactDecomposition,
    closure: &[f64],
    d0: f64,
) -> Value {
    let mut dr = Map::new();
    for (k, &t) in PC_TYPES.iter().enumerate() {
        dr.insert(EventType::ALL[t].code().into(), json!(gaps.delta_r[k]));
    }
    let curves = |v: &[f64]| {
        let mut m = Map::new();
        for t in EventType::ALL {
            m.insert(t.code().into(), json!(decomposition.curve(v, t.index())[1..].iter().map(|&x| finite(x)).collect::<Vec<_>>()));
        }
        Value::Object(m)
    };
    json!({
        "units": {"deltaR": "ticks", "K": "ticks", "G": "ticks", "D": "ticks^2", "lags": "events"},
        "deltaR": dr,
        "K": kernels.k.to_json(),
        "Ktilde": kernels.k_tilde.to_json(),
        "kappa": kernels.kappa.to_json(),
        "kappa_se": kernels.kappa_se.to_json(),
        "residual_var": kernels.residual_var,
        "residual_var_tilde": kernels.residual_var_tilde,
        "forecast": {
            "slope": finite(kernels.forecast.slope),
            "intercept": finite(kernels.forecast.intercept),
            "cubic": finite(kernels.forecast.cubic),
        },
        "lambda": kernels.lambda,
        "Gstar": curves(&decomposition.g_star),
        "dGstar": curves(&decomposition.dg_star),
        "Ghat": curves(&decomposition.g_hat),
        "Dclosure": closure[1..].iter().map(|&x| finite(x)).collect::<Vec<_>>(),
        "D0": d0,
    })
}
