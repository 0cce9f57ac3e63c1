//! Empirical statistics the models are calibrated on: event probabilities,
//! realized gaps, signed-event correlations `C`, event-type correlations `Pi`,
//! response functions `R` and return responses `S`.
//!
//! Conventions:
//! - `C` and `Pi` average over within-session pairs with per-lag pair counts.
//! - `R` and `S` average over every event of the conditioning type; past the
//!   last event of a session the price is frozen at the closing mid (returns
//!   are zero). With this convention `R(1) = Delta^R`, the lag-0 structure of
//!   `C` and the partial-sum identity between `R` and `S` all hold exactly.
//! - Work is split in fixed-size chunks of origins and merged in chunk order,
//!   so results do not depend on the number of threads.

use crate::error::{ImpactError, Result};
use crate::event::EventType;
use crate::par::{self, KahanSum};
use crate::tape::{Tape, TapeSession};

const CHUNK: usize = 1 << 15;
const NT: usize = 6;

/// Dense lag grid `1..=ell_max` used for calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LagGrid {
    pub ell_max: usize,
}

impl LagGrid {
    pub fn new(ell_max: usize) -> Result<Self> {
        if ell_max == 0 {
            return Err(ImpactError::InvalidConfig("ell_max must be at least 1".into()));
        }
        Ok(LagGrid { ell_max })
    }

    pub fn lags(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.ell_max
    }

    /// Roughly log-spaced subset of the grid, for display output only.
    pub fn display_lags(&self, points: usize) -> Vec<usize> {
        let points = points.max(2);
        let top = (self.ell_max as f64).ln();
        let mut out: Vec<usize> = (0..points)
            .map(|i| (top * i as f64 / (points - 1) as f64).exp().round() as usize)
            .map(|l| l.clamp(1, self.ell_max))
            .collect();
        out.dedup();
        out
    }

    /// Rejects grids whose longest lag is not below the shortest session.
    pub fn check_support(&self, tape: &Tape) -> Result<()> {
        check_support(self.ell_max, tape)
    }
}

fn check_support(max_lag: usize, tape: &Tape) -> Result<()> {
    let shortest = tape.shortest_session();
    if tape.sessions.is_empty() || max_lag >= shortest {
        return Err(ImpactError::SessionTooShort {
            ell_max: max_lag,
            shortest,
        });
    }
    Ok(())
}

/// Event-type probabilities and realized gaps.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventStats {
    pub counts: [u64; 6],
    pub p: [f64; 6],
    /// Mean gap per price-changing type; `None` when the type never occurs.
    pub delta_r: [Option<f64>; 3],
}

impl EventStats {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    #[inline]
    pub fn p(&self, pi: EventType) -> f64 {
        self.p[pi.index()]
    }

    /// Realized gap of a price-changing type.
    pub fn delta_r(&self, pi: EventType) -> Result<f64> {
        let j = pi
            .pc_index()
            .ok_or_else(|| ImpactError::InvalidConfig(format!("{pi} has no realized gap")))?;
        self.delta_r[j].ok_or(ImpactError::MissingGap(pi))
    }

    /// All three realized gaps, or the first missing one as an error.
    pub fn delta_r_all(&self) -> Result<[f64; 3]> {
        let mut out = [0.0; 3];
        for (j, pi) in EventType::PRICE_CHANGING.iter().enumerate() {
            out[j] = self.delta_r(*pi)?;
        }
        Ok(out)
    }

    pub fn require_all_types(&self) -> Result<()> {
        match EventType::ALL.iter().find(|pi| self.p(**pi) <= 0.0) {
            Some(pi) => Err(ImpactError::MissingType(*pi)),
            None => Ok(()),
        }
    }
}

/// Empirical probabilities and mean gaps of a tape.
pub fn estimate_stats(tape: &Tape) -> Result<EventStats> {
    let mut counts = [0u64; 6];
    let mut gap_sums = [KahanSum::default(); 3];
    for s in &tape.sessions {
        for (t, pi) in s.types.iter().enumerate() {
            counts[pi.index()] += 1;
            if let Some(j) = pi.pc_index() {
                gap_sums[j].add(s.gaps[t]);
            }
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ImpactError::InvalidConfig("empty event stream".into()));
    }
    let p = counts.map(|c| c as f64 / total as f64);
    let mut delta_r = [None; 3];
    for (j, pi) in EventType::PRICE_CHANGING.iter().enumerate() {
        let n = counts[pi.index()];
        if n > 0 {
            delta_r[j] = Some(gap_sums[j].value() / n as f64);
        }
    }
    Ok(EventStats { counts, p, delta_r })
}

#[inline]
fn idx3(a: usize, b: usize, lag: usize, width: usize) -> usize {
    (a * NT + b) * width + lag
}

/// Signed-event correlations `C` and event-type correlations `Pi` on lags
/// `0..=max_lag` (first index = earlier event).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSet {
    pub max_lag: usize,
    pub p: [f64; 6],
    c: Vec<f64>,
    pi: Vec<f64>,
    /// Number of pairs with the given types at each lag.
    pub pair_counts: Vec<u64>,
    /// Number of within-session pairs at each lag.
    pub lag_counts: Vec<u64>,
    /// `C` at negative lags estimated by backward pairing, if requested.
    c_backward: Option<Vec<f64>>,
}

impl CorrelationSet {
    /// Builds a set from known values, e.g. population correlations of a generator.
    pub fn from_fn<F>(p: [f64; 6], max_lag: usize, f: F) -> Self
    where
        F: Fn(EventType, EventType, usize) -> (f64, f64),
    {
        let width = max_lag + 1;
        let mut c = vec![0.0; NT * NT * width];
        let mut pi = vec![0.0; NT * NT * width];
        for a in EventType::ALL {
            for b in EventType::ALL {
                for lag in 0..=max_lag {
                    let (cv, pv) = f(a, b, lag);
                    let k = idx3(a.index(), b.index(), lag, width);
                    c[k] = cv;
                    pi[k] = pv;
                }
            }
        }
        CorrelationSet {
            max_lag,
            p,
            c,
            pi,
            pair_counts: vec![0; NT * NT * width],
            lag_counts: vec![0; width],
            c_backward: None,
        }
    }

    /// `C_{a,b}(lag)`; negative lags use `C_{a,b}(-l) = C_{b,a}(l)`.
    #[inline]
    pub fn c(&self, a: EventType, b: EventType, lag: isize) -> f64 {
        self.c_idx(a.index(), b.index(), lag)
    }

    #[inline]
    pub(crate) fn c_idx(&self, a: usize, b: usize, lag: isize) -> f64 {
        let width = self.max_lag + 1;
        if lag >= 0 {
            self.c[idx3(a, b, lag as usize, width)]
        } else {
            self.c[idx3(b, a, (-lag) as usize, width)]
        }
    }

    /// `Pi_{a,b}(lag)` with the same transpose rule for negative lags.
    #[inline]
    pub fn pi(&self, a: EventType, b: EventType, lag: isize) -> f64 {
        self.pi_idx(a.index(), b.index(), lag)
    }

    #[inline]
    pub(crate) fn pi_idx(&self, a: usize, b: usize, lag: isize) -> f64 {
        let width = self.max_lag + 1;
        if lag >= 0 {
            self.pi[idx3(a, b, lag as usize, width)]
        } else {
            self.pi[idx3(b, a, (-lag) as usize, width)]
        }
    }

    pub fn pair_count(&self, a: EventType, b: EventType, lag: usize) -> u64 {
        self.pair_counts[idx3(a.index(), b.index(), lag, self.max_lag + 1)]
    }

    /// Directly estimated `C_{a,b}(-lag)`, when available.
    pub fn c_backward(&self, a: EventType, b: EventType, lag: usize) -> Option<f64> {
        self.c_backward
            .as_ref()
            .map(|v| v[idx3(a.index(), b.index(), lag, self.max_lag + 1)])
    }

    /// Overwrites a single value; used to build perturbed inputs.
    pub fn set_c(&mut self, a: EventType, b: EventType, lag: usize, value: f64) {
        let width = self.max_lag + 1;
        self.c[idx3(a.index(), b.index(), lag, width)] = value;
    }

    /// Assembles a set from raw tables laid out as `(a, b, lag)`.
    pub(crate) fn from_parts(max_lag: usize, p: [f64; 6], c: Vec<f64>, pi: Vec<f64>, pair_counts: Vec<u64>) -> Self {
        let width = max_lag + 1;
        let lag_counts = (0..width)
            .map(|lag| pair_counts.iter().skip(lag).step_by(width).sum())
            .collect();
        CorrelationSet {
            max_lag,
            p,
            c,
            pi,
            pair_counts,
            lag_counts,
            c_backward: None,
        }
    }

    /// Copy without the directly estimated negative-lag values.
    pub fn without_backward(&self) -> CorrelationSet {
        CorrelationSet {
            c_backward: None,
            ..self.clone()
        }
    }

    /// Copy truncated to a shorter lag range.
    pub fn truncated(&self, max_lag: usize) -> CorrelationSet {
        assert!(max_lag <= self.max_lag);
        let width = self.max_lag + 1;
        let new_width = max_lag + 1;
        let cut = |v: &Vec<f64>| {
            let mut out = Vec::with_capacity(NT * NT * new_width);
            for row in v.chunks(width) {
                out.extend_from_slice(&row[..new_width]);
            }
            out
        };
        let mut pair_counts = Vec::with_capacity(NT * NT * new_width);
        for row in self.pair_counts.chunks(width) {
            pair_counts.extend_from_slice(&row[..new_width]);
        }
        CorrelationSet {
            max_lag,
            p: self.p,
            c: cut(&self.c),
            pi: cut(&self.pi),
            pair_counts,
            lag_counts: self.lag_counts[..new_width].to_vec(),
            c_backward: self.c_backward.as_ref().map(cut),
        }
    }
}

/// Fixed partition of the origins of a tape.
fn chunks(tape: &Tape) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (si, s) in tape.sessions.iter().enumerate() {
        let mut start = 0;
        while start < s.len() {
            let end = (start + CHUNK).min(s.len());
            out.push((si, start, end));
            start = end;
        }
    }
    out
}

struct PairSums {
    signed: Vec<i64>,
    counts: Vec<u64>,
}

fn pair_sums(s: &TapeSession, start: usize, end: usize, max_lag: usize, backward: bool) -> PairSums {
    let width = max_lag + 1;
    let mut signed = vec![0i64; NT * NT * width];
    let mut counts = vec![0u64; NT * NT * width];
    let n = s.len();
    for t in start..end {
        let a = s.types[t].index();
        let ea = i64::from(s.signs[t]);
        if backward {
            let top = max_lag.min(t);
            for lag in 0..=top {
                let u = t - lag;
                let k = idx3(a, s.types[u].index(), lag, width);
                signed[k] += ea * i64::from(s.signs[u]);
                counts[k] += 1;
            }
        } else {
            let top = max_lag.min(n - 1 - t);
            for lag in 0..=top {
                let u = t + lag;
                let k = idx3(a, s.types[u].index(), lag, width);
                signed[k] += ea * i64::from(s.signs[u]);
                counts[k] += 1;
            }
        }
    }
    PairSums { signed, counts }
}

fn merged_pair_sums(tape: &Tape, max_lag: usize, backward: bool) -> PairSums {
    let parts = par::map_slice(&chunks(tape), |&(si, a, b)| {
        pair_sums(&tape.sessions[si], a, b, max_lag, backward)
    });
    let width = max_lag + 1;
    let mut total = PairSums {
        signed: vec![0; NT * NT * width],
        counts: vec![0; NT * NT * width],
    };
    for part in parts {
        for (x, y) in total.signed.iter_mut().zip(&part.signed) {
            *x += y;
        }
        for (x, y) in total.counts.iter_mut().zip(&part.counts) {
            *x += y;
        }
    }
    total
}

/// Estimates `C` and `Pi` on lags `0..=max_lag`. With `with_backward`, `C` at
/// negative lags is also estimated directly for the transpose check.
///
/// Pairs involving a type that never occurs are `NaN`.
pub fn estimate_correlations(tape: &Tape, max_lag: usize, with_backward: bool) -> Result<CorrelationSet> {
    check_support(max_lag, tape)?;
    let stats = estimate_stats(tape)?;
    let width = max_lag + 1;
    let lag_counts: Vec<u64> = (0..=max_lag)
        .map(|lag| tape.sessions.iter().map(|s| (s.len() - lag) as u64).sum())
        .collect();
    let p = stats.p;

    let normalise = |sums: &PairSums, out_c: &mut Vec<f64>, out_pi: Option<&mut Vec<f64>>| {
        let mut pi_vals = vec![0.0; NT * NT * width];
        for a in 0..NT {
            for b in 0..NT {
                for lag in 0..=max_lag {
                    let k = idx3(a, b, lag, width);
                    let n = lag_counts[lag] as f64;
                    // Divide in this order so that C_aa(0) = (P_a / P_a) / P_a is exactly 1 / P_a.
                    if p[a] > 0.0 && p[b] > 0.0 {
                        out_c[k] = sums.signed[k] as f64 / n / p[a] / p[b];
                        pi_vals[k] = sums.counts[k] as f64 / n / p[a] / p[b] - 1.0;
                    } else {
                        out_c[k] = f64::NAN;
                        pi_vals[k] = f64::NAN;
                    }
                }
            }
        }
        if let Some(out) = out_pi {
            *out = pi_vals;
        }
    };

    let forward = merged_pair_sums(tape, max_lag, false);
    let mut c = vec![0.0; NT * NT * width];
    let mut pi = Vec::new();
    normalise(&forward, &mut c, Some(&mut pi));

    let c_backward = if with_backward {
        let backward = merged_pair_sums(tape, max_lag, true);
        let mut cb = vec![0.0; NT * NT * width];
        normalise(&backward, &mut cb, None);
        Some(cb)
    } else {
        None
    };

    Ok(CorrelationSet {
        max_lag,
        p,
        c,
        pi,
        pair_counts: forward.counts,
        lag_counts,
        c_backward,
    })
}

/// Response functions `R_pi(l)` for `l = 0..=ell_max` (`R(0) = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    pub ell_max: usize,
    r: Vec<f64>,
    /// Number of origins of each type (the denominators).
    pub counts: [u64; 6],
}

impl ResponseSet {
    pub fn from_fn<F: Fn(EventType, usize) -> f64>(ell_max: usize, counts: [u64; 6], f: F) -> Self {
        let width = ell_max + 1;
        let mut r = vec![0.0; NT * width];
        for a in EventType::ALL {
            for lag in 1..=ell_max {
                r[a.index() * width + lag] = f(a, lag);
            }
        }
        ResponseSet { ell_max, r, counts }
    }

    #[inline]
    pub fn r(&self, pi: EventType, lag: usize) -> f64 {
        self.r[pi.index() * (self.ell_max + 1) + lag]
    }

    pub fn curve(&self, pi: EventType) -> &[f64] {
        let width = self.ell_max + 1;
        &self.r[pi.index() * width + 1..(pi.index() + 1) * width]
    }

    pub fn set(&mut self, pi: EventType, lag: usize, value: f64) {
        let width = self.ell_max + 1;
        self.r[pi.index() * width + lag] = value;
    }

    pub fn is_present(&self, pi: EventType) -> bool {
        self.counts[pi.index()] > 0
    }
}

/// Return responses `S_{pi1,pi2}(l)` for `l = 0..=ell_max`, all 36 pairs.
/// Columns with a neutral second index vanish on event streams.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnResponseSet {
    pub ell_max: usize,
    s: Vec<f64>,
    pub counts: [u64; 6],
    pub pair_counts: Vec<u64>,
}

impl ReturnResponseSet {
    pub fn from_fn<F: Fn(EventType, EventType, usize) -> f64>(
        ell_max: usize,
        counts: [u64; 6],
        f: F,
    ) -> Self {
        let width = ell_max + 1;
        let mut s = vec![0.0; NT * NT * width];
        for a in EventType::ALL {
            for b in EventType::ALL {
                for lag in 0..=ell_max {
                    s[idx3(a.index(), b.index(), lag, width)] = f(a, b, lag);
                }
            }
        }
        ReturnResponseSet {
            ell_max,
            s,
            counts,
            pair_counts: vec![0; NT * NT * width],
        }
    }

    #[inline]
    pub fn s(&self, a: EventType, b: EventType, lag: usize) -> f64 {
        self.s[idx3(a.index(), b.index(), lag, self.ell_max + 1)]
    }

    pub fn set(&mut self, a: EventType, b: EventType, lag: usize, value: f64) {
        let width = self.ell_max + 1;
        self.s[idx3(a.index(), b.index(), lag, width)] = value;
    }

    /// True when some neutral column carries a non-zero value (e.g. paths
    /// simulated under the transient model).
    pub fn has_neutral_returns(&self) -> bool {
        EventType::ALL.iter().any(|&a| {
            EventType::NEUTRAL
                .iter()
                .any(|&b| (0..=self.ell_max).any(|l| self.s(a, b, l) != 0.0 && !self.s(a, b, l).is_nan()))
        })
    }

    pub fn is_present(&self, pi: EventType) -> bool {
        self.counts[pi.index()] > 0
    }
}

fn type_counts(tape: &Tape) -> [u64; 6] {
    let mut counts = [0u64; 6];
    for s in &tape.sessions {
        for pi in &s.types {
            counts[pi.index()] += 1;
        }
    }
    counts
}

fn merge_kahan(parts: Vec<Vec<KahanSum>>, len: usize) -> Vec<KahanSum> {
    let mut total = vec![KahanSum::default(); len];
    for part in parts {
        for (x, y) in total.iter_mut().zip(&part) {
            x.merge(y);
        }
    }
    total
}

/// Estimates `R_pi(l) = <(p_{t+l} - p_t) eps_t | pi_t = pi>`.
pub fn estimate_response(tape: &Tape, ell_max: usize) -> Result<ResponseSet> {
    check_support(ell_max, tape)?;
    let width = ell_max + 1;
    let counts = type_counts(tape);
    let parts = par::map_slice(&chunks(tape), |&(si, start, end)| {
        let s = &tape.sessions[si];
        let n = s.len();
        let mut acc = vec![KahanSum::default(); NT * width];
        for t in start..end {
            let row = s.types[t].index() * width;
            let e = s.sign(t);
            let p0 = s.prices[t];
            for lag in 1..=ell_max {
                let p1 = s.prices[(t + lag).min(n)];
                acc[row + lag].add((p1 - p0) * e);
            }
        }
        acc
    });
    let total = merge_kahan(parts, NT * width);
    let mut r = vec![0.0; NT * width];
    for a in 0..NT {
        for lag in 1..=ell_max {
            r[a * width + lag] = if counts[a] > 0 {
                total[a * width + lag].value() / counts[a] as f64
            } else {
                f64::NAN
            };
        }
    }
    Ok(ResponseSet { ell_max, r, counts })
}

/// Estimates `S_{pi1,pi2}(l) = <I(pi_{t+l} = pi2) r_{t+l} eps_t | pi_t = pi1>`.
pub fn estimate_return_response(tape: &Tape, ell_max: usize) -> Result<ReturnResponseSet> {
    check_support(ell_max, tape)?;
    let width = ell_max + 1;
    let counts = type_counts(tape);
    let parts = par::map_slice(&chunks(tape), |&(si, start, end)| {
        let s = &tape.sessions[si];
        let n = s.len();
        let mut acc = vec![KahanSum::default(); NT * NT * width];
        let mut pairs = vec![0u64; NT * NT * width];
        for t in start..end {
            let a = s.types[t].index();
            let e = s.sign(t);
            let top = ell_max.min(n - 1 - t);
            for lag in 0..=top {
                let u = t + lag;
                let k = idx3(a, s.types[u].index(), lag, width);
                pairs[k] += 1;
                let r = s.ret(u);
                if r != 0.0 {
                    acc[k].add(r * e);
                }
            }
        }
        (acc, pairs)
    });
    let mut pair_counts = vec![0u64; NT * NT * width];
    let mut sums = Vec::with_capacity(parts.len());
    for (acc, pairs) in parts {
        for (x, y) in pair_counts.iter_mut().zip(&pairs) {
            *x += y;
        }
        sums.push(acc);
    }
    let total = merge_kahan(sums, NT * NT * width);
    let mut s = vec![0.0; NT * NT * width];
    for a in 0..NT {
        for b in 0..NT {
            for lag in 0..=ell_max {
                let k = idx3(a, b, lag, width);
                s[k] = if counts[a] > 0 {
                    total[k].value() / counts[a] as f64
                } else {
                    f64::NAN
                };
            }
        }
    }
    Ok(ReturnResponseSet {
        ell_max,
        s,
        counts,
        pair_counts,
    })
}

/// Everything `estimate` produces for one tape.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub grid: LagGrid,
    pub stats: EventStats,
    pub correlations: CorrelationSet,
    pub response: ResponseSet,
    pub returns: ReturnResponseSet,
}

/// Estimates all statistics. Correlations are extended to `2 * ell_max` (or
/// as far as the shortest session allows) because the diffusion predictors
/// reach beyond the kernel length.
pub fn estimate_all(tape: &Tape, grid: LagGrid) -> Result<Estimates> {
    grid.check_support(tape)?;
    let corr_lag = (2 * grid.ell_max).min(tape.shortest_session() - 1);
    Ok(Estimates {
        grid,
        stats: estimate_stats(tape)?,
        correlations: estimate_correlations(tape, corr_lag, true)?,
        response: estimate_response(tape, grid.ell_max)?,
        returns: estimate_return_response(tape, grid.ell_max)?,
    })
}

/// Outcome of [`check_identities`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IdentityReport {
    /// Max over types and lags of `|R(l) - sum_{n<l} sum_pi' S(n)|`.
    pub max_violation: f64,
    pub worst: Option<(EventType, usize)>,
    /// Max `|C_{a,b}(-l) - C_{b,a}(l)|` when backward `C` was estimated.
    pub transpose_violation: Option<f64>,
    /// Max deviation of `C(0)` from `diag(1/P)`.
    pub lag0_violation: Option<f64>,
}

impl IdentityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_violation <= tol
            && self.transpose_violation.is_none_or(|v| v <= tol)
            && self.lag0_violation.is_none_or(|v| v <= tol)
    }
}

/// Checks the exact partial-sum identity between `R` and `S`, and the
/// transpose and lag-0 structure of `C` when given.
pub fn check_identities(
    response: &ResponseSet,
    returns: &ReturnResponseSet,
    correlations: Option<&CorrelationSet>,
) -> Result<IdentityReport> {
    if returns.ell_max + 1 < response.ell_max {
        return Err(ImpactError::GridMismatch(format!(
            "S reaches lag {} but R needs lag {}",
            returns.ell_max,
            response.ell_max - 1
        )));
    }
    let mut max_violation = 0.0f64;
    let mut worst = None;
    for a in EventType::ALL {
        if !response.is_present(a) {
            continue;
        }
        let mut cumulative = KahanSum::default();
        for lag in 1..=response.ell_max {
            for b in EventType::ALL {
                cumulative.add(returns.s(a, b, lag - 1));
            }
            let v = (response.r(a, lag) - cumulative.value()).abs();
            if v > max_violation || v.is_nan() {
                max_violation = if v.is_nan() { f64::INFINITY } else { v };
                worst = Some((a, lag));
            }
        }
    }

    let (transpose_violation, lag0_violation) = match correlations {
        None => (None, None),
        Some(c) => {
            let present: Vec<EventType> = EventType::ALL.into_iter().filter(|a| c.p[a.index()] > 0.0).collect();
            let mut lag0 = 0.0f64;
            for &a in &present {
                for &b in &present {
                    let expected = if a == b { 1.0 / c.p[a.index()] } else { 0.0 };
                    lag0 = lag0.max((c.c(a, b, 0) - expected).abs());
                }
            }
            let transpose = if c.c_backward.is_some() {
                let mut worst = 0.0f64;
                for &a in &present {
                    for &b in &present {
                        for lag in 0..=c.max_lag {
                            let direct = c.c_backward(a, b, lag).unwrap_or(f64::NAN);
                            worst = worst.max((direct - c.c(b, a, lag as isize)).abs());
                        }
                    }
                }
                Some(worst)
            } else {
                None
            };
            (transpose, Some(lag0))
        }
    };

    Ok(IdentityReport {
        max_violation,
        worst,
        transpose_violation,
        lag0_violation,
    })
}

/// `xi_t = eps_t * v_t^theta` for one session.
pub fn volume_weighted_signs(signs: &[i8], volumes: &[f64], theta: f64) -> Vec<f64> {
    signs
        .iter()
        .zip(volumes)
        .map(|(&e, &v)| if theta == 0.0 { f64::from(e) } else { f64::from(e) * v.powf(theta) })
        .collect()
}

/// Autocorrelation and return response of a single-event series `xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleEventCurves {
    /// `<xi_t xi_{t+l}>` for `l = 0..=max_lag`, per-lag pair counts.
    pub c: Vec<f64>,
    /// `<r_{t+l} xi_t>` for `l = 0..=max_lag`, all origins.
    pub s: Vec<f64>,
}

/// Estimates the single-event curves; `xi` holds one series per tape session.
pub fn estimate_single(tape: &Tape, xi: &[Vec<f64>], max_lag: usize) -> Result<SingleEventCurves> {
    check_support(max_lag, tape)?;
    if xi.len() != tape.sessions.len() || xi.iter().zip(&tape.sessions).any(|(x, s)| x.len() != s.len()) {
        return Err(ImpactError::GridMismatch("xi series does not match the tape".into()));
    }
    let width = max_lag + 1;
    let parts = par::map_slice(&chunks(tape), |&(si, start, end)| {
        let s = &tape.sessions[si];
        let x = &xi[si];
        let n = s.len();
        let mut c = vec![KahanSum::default(); width];
        let mut r = vec![KahanSum::default(); width];
        for t in start..end {
            let top = max_lag.min(n - 1 - t);
            for lag in 0..=top {
                c[lag].add(x[t] * x[t + lag]);
                r[lag].add(s.ret(t + lag) * x[t]);
            }
        }
        let mut both = c;
        both.extend(r);
        both
    });
    let total = merge_kahan(parts, 2 * width);
    let n_total = tape.n_events() as f64;
    let c = (0..width)
        .map(|lag| {
            let pairs: usize = tape.sessions.iter().map(|s| s.len() - lag).sum();
            total[lag].value() / pairs as f64
        })
        .collect();
    let s = (0..width).map(|lag| total[width + lag].value() / n_total).collect();
    Ok(SingleEventCurves { c, s })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{EventStream, SignedEvent};
    use EventType::*;

    fn stream(rows: &[(EventType, i8, f64)]) -> Tape {
        let mut mid = 100.0;
        let events: Vec<SignedEvent> = rows
            .iter()
            .enumerate()
            .map(|(t, &(pi, epsilon, gap))| {
                let e = SignedEvent {
                    session_id: 0,
                    t: t as u64,
                    pi,
                    epsilon,
                    gap,
                    mid_before: mid,
                };
                mid += e.jump();
                e
            })
            .collect();
        Tape::from(&EventStream::from_events("X", 1.0, events))
    }

    #[test]
    fn stats_count_types_and_gaps() {
        let mut rows = vec![(MO0, 1, 0.0); 4];
        rows.extend(vec![(LOP, -1, 0.5); 6]);
        let s = estimate_stats(&stream(&rows)).unwrap();
        assert_eq!(s.p(MO0), 0.4);
        assert_eq!(s.p(LOP), 0.6);
        assert_eq!(s.delta_r(LOP).unwrap(), 0.5);
        assert!(matches!(s.delta_r(MOP), Err(ImpactError::MissingGap(MOP))));
    }

    #[test]
    fn single_type_all_buys_has_unit_correlation() {
        let tape = stream(&[(MOP, 1, 0.5); 12]);
        let c = estimate_correlations(&tape, 5, false).unwrap();
        for lag in 0..=5 {
            assert_eq!(c.c(MOP, MOP, lag), 1.0);
            assert_eq!(c.pi(MOP, MOP, lag), 0.0);
        }
    }

    #[test]
    fn alternating_types_give_pi_one() {
        let rows: Vec<_> = (0..20).map(|i| if i % 2 == 0 { (MO0, 1, 0.0) } else { (CA0, -1, 0.0) }).collect();
        let c = estimate_correlations(&stream(&rows), 3, false).unwrap();
        // 19 lag-1 pairs, 10 of them (MO0, CA0), none (MO0, MO0).
        assert!((c.pi(MO0, CA0, 1) - (10.0 / (19.0 * 0.25) - 1.0)).abs() < 1e-12);
        assert_eq!(c.pi(MO0, MO0, 1), -1.0);
    }

    #[test]
    fn neutral_response_vanishes_at_lag_one() {
        let rows = [(MO0, 1, 0.0), (MOP, 1, 1.0), (CA0, -1, 0.0), (LOP, -1, 0.5), (LO0, 1, 0.0), (CAP, 1, 1.5)];
        let tape = stream(&rows);
        let r = estimate_response(&tape, 3).unwrap();
        let stats = estimate_stats(&tape).unwrap();
        for pi in EventType::NEUTRAL {
            assert_eq!(r.r(pi, 1), 0.0);
        }
        for pi in EventType::PRICE_CHANGING {
            assert_eq!(r.r(pi, 1), stats.delta_r(pi).unwrap());
        }
    }

    #[test]
    fn rejects_lags_beyond_session() {
        let tape = stream(&[(MOP, 1, 0.5); 4]);
        assert!(matches!(
            estimate_correlations(&tape, 4, false),
            Err(ImpactError::SessionTooShort { .. })
        ));
    }

    #[test]
    fn corrupted_s_is_located() {
        let rows = [(MO0, 1, 0.0), (MOP, 1, 1.0), (CA0, -1, 0.0), (LOP, -1, 0.5), (LO0, 1, 0.0), (CAP, 1, 1.5)];
        let tape = stream(&rows);
        let r = estimate_response(&tape, 4).unwrap();
        let mut s = estimate_return_response(&tape, 4).unwrap();
        assert!(check_identities(&r, &s, None).unwrap().max_violation < 1e-12);
        let old = s.s(LOP, CAP, 2);
        s.set(LOP, CAP, 2, old + 0.1);
        let report = check_identities(&r, &s, None).unwrap();
        assert!((report.max_violation - 0.1).abs() < 1e-12);
        assert_eq!(report.worst, Some((LOP, 3)));
    }

    #[test]
    fn display_lags_are_sorted_subset() {
        let g = LagGrid::new(256).unwrap();
        let d = g.display_lags(12);
        assert_eq!(d[0], 1);
        assert_eq!(*d.last().unwrap(), 256);
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }
}
