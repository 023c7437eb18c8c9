//! Bare propagators of the temporary impact model and the market-order-only
//! baseline.

use faer::linalg::matmul::matmul;
use faer::prelude::*;
use faer::{Accum, Mat, MatRef, Par, Side};
use rustfft::{num_complex::Complex, FftPlanner};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::events::{EventType, N_TYPES};
use crate::stats::{CorrelationSet, ResponseSet, TypedCurves};

/// Signed-volume variable `ξ_t = ε_t v_t^θ` for the single-event baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedFlowConfig {
    pub theta: f64,
}

impl Default for SignedFlowConfig {
    fn default() -> Self {
        SignedFlowConfig { theta: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagatorSet {
    pub max_lag: usize,
    /// `G_π(ℓ)` laid out `type * (L + 1) + lag`; lag 0 is zero.
    pub g: Vec<f64>,
    pub active: [bool; N_TYPES],
    pub baseline: Option<Vec<f64>>,
    pub reliable_lag: usize,
    /// `‖A G − R‖ / ‖R‖`.
    pub residual: f64,
    pub lambda: f64,
}

impl PropagatorSet {
    pub fn get(&self, type_index: usize, lag: usize) -> f64 {
        self.g[type_index * (self.max_lag + 1) + lag]
    }

    /// `G` with the cutoff convention used by the diffusion formula: zero at
    /// non-positive lags, held at `G(L)` beyond the cutoff.
    pub fn extended(&self, type_index: usize, lag: i64) -> f64 {
        if lag <= 0 {
            0.0
        } else {
            self.get(type_index, (lag as usize).min(self.max_lag))
        }
    }

    pub fn curve(&self, type_index: usize) -> &[f64] {
        let w = self.max_lag + 1;
        &self.g[type_index * w..(type_index + 1) * w]
    }
}

/// Default Tikhonov weight: `1e-4 · trace(AᵀA) / n`.
pub fn default_lambda(a: MatRef<'_, f64>) -> f64 {
    let n = a.ncols().max(1);
    let mut tr = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            tr += a[(i, j)] * a[(i, j)];
        }
    }
    1e-4 * tr / n as f64
}

const PIVOT_RATIO_MIN: f64 = 1e-13;

/// A factorized linear system that can be reused across right-hand sides.
pub(crate) enum Factor {
    Lu(faer::linalg::solvers::PartialPivLu<f64>),
    Ridge { llt: faer::linalg::solvers::Llt<f64>, at: Mat<f64> },
}

impl Factor {
    /// `λ = 0` factors `A` directly; `λ > 0` factors `AᵀA + λI`.
    pub(crate) fn new(a: MatRef<'_, f64>, lambda: f64) -> Result<Factor> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::ConfigInvalid(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        if lambda == 0.0 {
            if a.nrows() != a.ncols() {
                return Err(Error::DimensionMismatch("unregularized solve needs a square system".into()));
            }
            let lu = a.partial_piv_lu();
            let u = lu.U();
            let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].abs()).collect();
            let max = diag.iter().cloned().fold(0.0, f64::max);
            let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
            let ratio = if max > 0.0 { min / max } else { 0.0 };
            if !(ratio > PIVOT_RATIO_MIN) {
                return Err(Error::SingularSystem { ratio });
            }
            return Ok(Factor::Lu(lu));
        }
        let n = a.ncols();
        let at = a.transpose().to_owned();
        let mut ata = Mat::<f64>::zeros(n, n);
        matmul(ata.as_mut(), Accum::Replace, at.as_ref(), a, 1.0, Par::Seq);
        for i in 0..n {
            ata[(i, i)] += lambda;
        }
        let llt = ata.llt(Side::Lower).map_err(|_| Error::SingularSystem { ratio: 0.0 })?;
        Ok(Factor::Ridge { llt, at })
    }

    pub(crate) fn solve(&self, rhs: MatRef<'_, f64>) -> Mat<f64> {
        match self {
            Factor::Lu(lu) => lu.solve(rhs),
            Factor::Ridge { llt, at } => {
                let mut atb = Mat::<f64>::zeros(at.nrows(), rhs.ncols());
                matmul(atb.as_mut(), Accum::Replace, at.as_ref(), rhs, 1.0, Par::Seq);
                llt.solve(atb.as_ref())
            }
        }
    }
}

fn relative_residual(a: MatRef<'_, f64>, x: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let mut ax = Mat::<f64>::zeros(a.nrows(), x.ncols());
    matmul(ax.as_mut(), Accum::Replace, a, x, 1.0, Par::Seq);
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..b.ncols() {
        for i in 0..b.nrows() {
            num += (ax[(i, j)] - b[(i, j)]).powi(2);
            den += b[(i, j)].powi(2);
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Block matrix of the temporary impact model restricted to `active` types,
/// rows `(π1, ℓ)` and columns `(π2, n)` with `ℓ, n ∈ 1..=L`.
fn multi_event_matrix(corr: &CorrelationSet, active: &[usize], l: usize) -> Mat<f64> {
    let k = active.len();
    let p = corr.probabilities;
    Mat::from_fn(k * l, k * l, |row, col| {
        let (i1, ell) = (active[row / l], row % l + 1);
        let (i2, n) = (active[col / l], col % l + 1);
        let first = if n <= ell { corr.c(i1, i2, ell - n) } else { corr.c(i2, i1, n - ell) };
        p[i2] * (first - corr.c(i2, i1, n))
    })
}

/// Solves `R_{π1}(ℓ) = Σ_{π2} Σ_n A^{π1,π2}_{ℓ,n} G_{π2}(n)` for all observed
/// types. `lambda = None` picks [`default_lambda`]; `Some(0.0)` is the plain
/// inversion.
pub fn solve_multi_event(corr: &CorrelationSet, resp: &ResponseSet, lambda: Option<f64>) -> Result<PropagatorSet> {
    let l = corr.max_lag;
    if resp.max_lag != l {
        return Err(Error::DimensionMismatch(format!(
            "correlations have L = {l}, responses have L = {}",
            resp.max_lag
        )));
    }
    if l == 0 {
        return Err(Error::DimensionMismatch("cutoff L must be positive".into()));
    }
    let active = corr.active_types();
    let a = multi_event_matrix(corr, &active, l);
    let b = Mat::from_fn(active.len() * l, 1, |row, _| resp.r.get(active[row / l], row % l + 1));
    let lambda = lambda.unwrap_or_else(|| default_lambda(a.as_ref()));
    let x = Factor::new(a.as_ref(), lambda)?.solve(b.as_ref());
    let residual = relative_residual(a.as_ref(), x.as_ref(), b.as_ref());
    let mut g = vec![0.0; N_TYPES * (l + 1)];
    for (k, &ty) in active.iter().enumerate() {
        for n in 1..=l {
            g[ty * (l + 1) + n] = x[(k * l + n - 1, 0)];
        }
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem { ratio: 0.0 });
    }
    let mut mask = [false; N_TYPES];
    for &t in &active {
        mask[t] = true;
    }
    Ok(PropagatorSet { max_lag: l, g, active: mask, baseline: None, reliable_lag: l / 3, residual, lambda })
}

/// Applies the forward map: the responses implied by `G` and `C`.
pub fn forward_response(g: &PropagatorSet, corr: &CorrelationSet) -> Result<TypedCurves> {
    let l = g.max_lag;
    if corr.max_lag != l {
        return Err(Error::DimensionMismatch("propagator and correlations differ in L".into()));
    }
    let active: Vec<usize> = (0..N_TYPES).filter(|&t| g.active[t]).collect();
    let a = multi_event_matrix(corr, &active, l);
    let x = Mat::from_fn(active.len() * l, 1, |row, _| g.get(active[row / l], row % l + 1));
    let mut r = Mat::<f64>::zeros(a.nrows(), 1);
    matmul(r.as_mut(), Accum::Replace, a.as_ref(), x.as_ref(), 1.0, Par::Seq);
    let mut values = vec![0.0; N_TYPES * (l + 1)];
    for (k, &ty) in active.iter().enumerate() {
        for ell in 1..=l {
            values[ty * (l + 1) + ell] = r[(k * l + ell - 1, 0)];
        }
    }
    Ok(TypedCurves {
        max_lag: l,
        stderr: vec![f64::NAN; values.len()],
        counts: vec![0; values.len()],
        values,
    })
}

fn single_event_matrix(c: &[f64], l: usize) -> Mat<f64> {
    Mat::from_fn(l, l, |row, col| {
        let (ell, n) = (row + 1, col + 1);
        let first = if n <= ell { c[ell - n] } else { c[n - ell] };
        first - c[n]
    })
}

/// Market-order-only baseline: solves
/// `R(ℓ) = Σ_{0<n≤ℓ} G(n)C(ℓ−n) + Σ_{n>ℓ} G(n)C(n−ℓ) − Σ_{n>0} G(n)C(n)`.
/// Inputs are indexed by lag `0..=L`; the result has `G(0) = 0`.
pub fn solve_single_event(r: &[f64], c: &[f64], lambda: Option<f64>) -> Result<(Vec<f64>, f64, f64)> {
    if r.len() != c.len() || r.len() < 2 {
        return Err(Error::DimensionMismatch(format!("R has {} lags, C has {}", r.len(), c.len())));
    }
    let l = r.len() - 1;
    let a = single_event_matrix(c, l);
    let b = Mat::from_fn(l, 1, |i, _| r[i + 1]);
    let lambda = lambda.unwrap_or_else(|| default_lambda(a.as_ref()));
    let x = Factor::new(a.as_ref(), lambda)?.solve(b.as_ref());
    let residual = relative_residual(a.as_ref(), x.as_ref(), b.as_ref());
    let mut g = vec![0.0];
    g.extend((0..l).map(|i| x[(i, 0)]));
    Ok((g, residual, lambda))
}

/// `D(ℓ)` implied by the temporary impact model, for `ℓ = 0..=lmax`, with a
/// geometric estimate of the contribution of sources older than the cutoff.
///
/// The quadratic form `Σ_{j,k} h(j)ᵀ W(k−j) h(k)` with
/// `h_π(j) = G_π(ℓ−j) − G_π(−j)` and `W_{ab}(m) = P_a P_b C_{ab}(m)` covers
/// every term of the expansion. Correlations beyond the estimated lag range
/// are taken as zero.
pub fn predict_diffusion_temporary(g: &PropagatorSet, corr: &CorrelationSet, lmax: usize) -> (Vec<f64>, Vec<f64>) {
    let l = g.max_lag;
    let active: Vec<usize> = (0..N_TYPES).filter(|&t| g.active[t]).collect();
    let span = l + lmax;
    let size = (2 * span).next_power_of_two().max(2);
    let p = corr.probabilities;
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let w = |a: usize, b: usize, m: i64| -> f64 {
        let k = m.unsigned_abs() as usize;
        if k > corr.max_lag {
            return 0.0;
        }
        p[a] * p[b] * corr.c_signed_lag(a, b, m)
    };
    // V_ab(m) = W_ab(-m), so that y_a = Σ_b V_ab * h_b is a plain convolution.
    let mut vhat = vec![Vec::new(); active.len() * active.len()];
    for (ia, &a) in active.iter().enumerate() {
        for (ib, &b) in active.iter().enumerate() {
            let mut buf = vec![Complex::new(0.0, 0.0); size];
            for m in -(span as i64)..=(span as i64) {
                let idx = m.rem_euclid(size as i64) as usize;
                buf[idx].re = w(a, b, -m);
            }
            fwd.process(&mut buf);
            vhat[ia * active.len() + ib] = buf;
        }
    }
    let mut d = vec![0.0; lmax + 1];
    let mut tail = vec![0.0; lmax + 1];
    for ell in 1..=lmax {
        // source offsets j = -(L-1) ..= ell-1 map to index j + L - 1
        let len = l + ell - 1;
        let hs: Vec<Vec<f64>> = active
            .iter()
            .map(|&ty| {
                (0..len)
                    .map(|i| {
                        let j = i as i64 - (l as i64 - 1);
                        g.extended(ty, ell as i64 - j) - g.extended(ty, -j)
                    })
                    .collect()
            })
            .collect();
        let hhat: Vec<Vec<Complex<f64>>> = hs
            .iter()
            .map(|h| {
                let mut buf: Vec<Complex<f64>> = h.iter().map(|&x| Complex::new(x, 0.0)).collect();
                buf.resize(size, Complex::new(0.0, 0.0));
                fwd.process(&mut buf);
                buf
            })
            .collect();
        let mut total = 0.0;
        for ia in 0..active.len() {
            let mut acc = vec![Complex::new(0.0, 0.0); size];
            for ib in 0..active.len() {
                let v = &vhat[ia * active.len() + ib];
                for ((o, x), y) in acc.iter_mut().zip(v).zip(&hhat[ib]) {
                    *o += x * y;
                }
            }
            inv.process(&mut acc);
            total += hs[ia].iter().zip(&acc).map(|(h, y)| h * y.re).sum::<f64>() / size as f64;
        }
        d[ell] = total;
        tail[ell] = active
            .iter()
            .map(|&ty| {
                if l < 3 {
                    return 0.0;
                }
                let delta = g.get(ty, l) - g.get(ty, l - 1);
                let prev = g.get(ty, l - 1) - g.get(ty, l - 2);
                if delta == 0.0 {
                    return 0.0;
                }
                let r = if prev != 0.0 { delta / prev } else { 0.0 };
                if !(r.abs() < 1.0) {
                    return f64::INFINITY;
                }
                p[ty] * (ell as f64 * delta * r).powi(2) / (1.0 - r * r)
            })
            .sum();
    }
    (d, tail)
}

pub fn propagator_json(g: &PropagatorSet, diffusion: Option<(&[f64], &[f64])>) -> Value {
    let mut gm = Map::new();
    for t in EventType::ALL {
        if g.active[t.index()] {
            gm.insert(t.code().into(), json!(g.curve(t.index())[1..].to_vec()));
        }
    }
    let mut v = json!({
        "units": {"G": "ticks", "D": "ticks^2", "lags": "events"},
        "lags": (1..=g.max_lag).collect::<Vec<_>>(),
        "G": gm,
        "baselineG": g.baseline.as_ref().map(|b| b[1..].to_vec()),
        "residual": g.residual,
        "lambda": g.lambda,
        "reliable_lag": g.reliable_lag,
    });
    if let Some((d, tail)) = diffusion {
        v["D"] = json!(d.iter().map(|x| null_if_nan(*x)).collect::<Vec<_>>());
        v["D_tail_estimate"] = json!(tail.iter().map(|x| null_if_nan(*x)).collect::<Vec<_>>());
    }
    v
}

fn null_if_nan(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_correlation_gives_g_equal_r() {
        let l = 8;
        let mut c = vec![0.0; l + 1];
        c[0] = 1.0;
        let r: Vec<f64> = (0..=l).map(|i| 0.3 + 0.01 * i as f64).collect();
        let (g, res, lambda) = solve_single_event(&r, &c, Some(0.0)).unwrap();
        assert_eq!(lambda, 0.0);
        assert!(res < 1e-14);
        for ell in 1..=l {
            assert!((g[ell] - r[ell]).abs() < 1e-14);
        }
    }

    #[test]
    fn huge_lambda_shrinks_to_zero() {
        let l = 5;
        let mut c = vec![0.0; l + 1];
        c[0] = 1.0;
        c[1] = 0.2;
        let r = vec![1.0; l + 1];
        let (g, _, _) = solve_single_event(&r, &c, Some(1e12)).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn singular_system_reported() {
        let c = vec![0.0; 4];
        let r = vec![1.0; 4];
        assert!(matches!(solve_single_event(&r, &c, Some(0.0)), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn ridge_and_lu_agree_on_well_posed_system() {
        let l = 6;
        let c: Vec<f64> = (0..=l).map(|k| if k == 0 { 1.0 } else { 0.3 * 0.5f64.powi(k as i32) }).collect();
        let r: Vec<f64> = (0..=l).map(|k| 1.0 - 0.02 * k as f64).collect();
        let (g0, _, _) = solve_single_event(&r, &c, Some(0.0)).unwrap();
        let (g1, _, _) = solve_single_event(&r, &c, Some(1e-12)).unwrap();
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() < 1e-8);
        }
    }
}
