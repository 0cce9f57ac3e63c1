//! Transient impact model: propagator calibration in increment form, the
//! forward response, and the closed-form diffusion curve.
//!
//! Kernels are stored as `G_pi(l)` for `l = 1..=len` together with their
//! increments `g_pi(0) = G_pi(1)`, `g_pi(k) = G_pi(k+1) - G_pi(k)`. The
//! increments vanish for `k >= len`, so `G` is flat beyond the grid.

use serde::{Deserialize, Serialize};

use crate::error::{ImpactError, Result};
use crate::estimators::{CorrelationSet, ResponseSet};
use crate::event::EventType;
use crate::linalg::{solve_checked, Matrix, SolveOptions};
use crate::par;

/// Calibrated TIM propagators.
#[derive(Debug, Clone, PartialEq)]
pub struct TimKernels {
    pub len: usize,
    g: Vec<f64>,
    incr: Vec<f64>,
    /// Condition estimate of the calibration system (1 when built by hand).
    pub condition: f64,
}

impl TimKernels {
    /// Builds kernels from `G_pi(1..=len)` curves.
    pub fn from_g(curves: &[Vec<f64>; 6]) -> Result<Self> {
        let len = curves[0].len();
        if len == 0 || curves.iter().any(|c| c.len() != len) {
            return Err(ImpactError::GridMismatch("kernel curves must share one non-empty grid".into()));
        }
        let mut incr = vec![0.0; 6 * len];
        for (a, c) in curves.iter().enumerate() {
            incr[a * len] = c[0];
            for k in 1..len {
                incr[a * len + k] = c[k] - c[k - 1];
            }
        }
        let g = curves.concat();
        Ok(TimKernels {
            len,
            g,
            incr,
            condition: 1.0,
        })
    }

    /// Builds kernels from increments `g_pi(0..len)`.
    pub fn from_increments(incr: Vec<f64>, len: usize, condition: f64) -> Self {
        assert_eq!(incr.len(), 6 * len);
        let mut g = vec![0.0; 6 * len];
        for a in 0..6 {
            let mut acc = 0.0;
            for k in 0..len {
                acc += incr[a * len + k];
                g[a * len + k] = acc;
            }
        }
        TimKernels {
            len,
            g,
            incr,
            condition,
        }
    }

    /// `G_pi(l)`; zero at `l = 0`, flat beyond `len`.
    #[inline]
    pub fn g(&self, pi: EventType, lag: usize) -> f64 {
        match lag {
            0 => 0.0,
            l => self.g[pi.index() * self.len + l.min(self.len) - 1],
        }
    }

    /// `g_pi(k)`; zero for `k >= len`.
    #[inline]
    pub fn increment(&self, pi: EventType, k: usize) -> f64 {
        if k < self.len {
            self.incr[pi.index() * self.len + k]
        } else {
            0.0
        }
    }

    pub fn curve(&self, pi: EventType) -> &[f64] {
        &self.g[pi.index() * self.len..(pi.index() + 1) * self.len]
    }

    pub fn increments(&self, pi: EventType) -> &[f64] {
        &self.incr[pi.index() * self.len..(pi.index() + 1) * self.len]
    }
}

/// Where the additive noise `eta_t` enters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseAttach {
    #[default]
    PriceChanging,
    AllEvents,
}

/// Noise variance per event and the constant high-frequency floor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub d0: f64,
    pub d_hf: f64,
    /// Used by the history-dependent model only; the transient model adds
    /// noise to every event.
    #[serde(default)]
    pub attach: NoiseAttach,
}

impl NoiseModel {
    pub fn new(d0: f64, d_hf: f64) -> Result<Self> {
        let n = NoiseModel {
            d0,
            d_hf,
            attach: NoiseAttach::default(),
        };
        n.check()?;
        Ok(n)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.d0 >= 0.0 && self.d_hf >= 0.0) {
            return Err(ImpactError::InvalidConfig(format!(
                "noise variances must be non-negative (d0 = {}, d_hf = {})",
                self.d0, self.d_hf
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    ClosedFormTim,
    ClosedFormHdim,
    ConstantGap,
    Simulated,
    Empirical,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::ClosedFormTim => "closed_form_tim",
            Provenance::ClosedFormHdim => "closed_form_hdim",
            Provenance::ConstantGap => "constant_gap",
            Provenance::Simulated => "simulated",
            Provenance::Empirical => "empirical",
        }
    }
}

impl std::str::FromStr for Provenance {
    type Err = ImpactError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "closed_form_tim" => Provenance::ClosedFormTim,
            "closed_form_hdim" => Provenance::ClosedFormHdim,
            "constant_gap" => Provenance::ConstantGap,
            "simulated" => Provenance::Simulated,
            "empirical" => Provenance::Empirical,
            other => return Err(ImpactError::InvalidConfig(format!("unknown provenance `{other}`"))),
        })
    }
}

/// `D(l)` for `l = 1..=d.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionCurve {
    pub d: Vec<f64>,
    pub provenance: Provenance,
}

impl DiffusionCurve {
    pub fn max_lag(&self) -> usize {
        self.d.len()
    }

    /// `D(lag)` for `lag >= 1`.
    pub fn at(&self, lag: usize) -> f64 {
        self.d[lag - 1]
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.d.iter().enumerate().map(|(i, d)| d / (i + 1) as f64).collect()
    }
}

/// Options shared by the calibration solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationOptions {
    pub solve: SolveOptions,
    /// Leave types that never occur out of the system (their kernels are
    /// zero) instead of failing.
    pub allow_absent_types: bool,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        CalibrationOptions {
            solve: SolveOptions::default(),
            allow_absent_types: false,
        }
    }
}

/// Builds `A[(a, l), (b, k)] = w_b * c(a, b, l - k)` for `l, k < len` over
/// the listed type indices.
pub(crate) fn toeplitz_blocks<F>(types: &[usize], len: usize, weight: &[f64], c: F) -> Matrix
where
    F: Fn(usize, usize, isize) -> f64 + Sync,
{
    let n = types.len() * len;
    let mut m = Matrix::zeros(n, n);
    par::for_each_row(&mut m.data, n, |row, out| {
        let a = types[row / len];
        let lag = (row % len) as isize;
        for (bi, &b) in types.iter().enumerate() {
            for k in 0..len {
                out[bi * len + k] = weight[bi] * c(a, b, lag - k as isize);
            }
        }
    });
    m
}

pub(crate) fn present_types(p: &[f64; 6], opts: &CalibrationOptions) -> Result<Vec<usize>> {
    let mut types = Vec::new();
    for pi in EventType::ALL {
        if p[pi.index()] > 0.0 {
            types.push(pi.index());
        } else if !opts.allow_absent_types {
            return Err(ImpactError::MissingType(pi));
        }
    }
    Ok(types)
}

/// Calibrates `len`-lag propagators from response increments:
/// `R_a(l+1) - R_a(l) = sum_b P_b sum_{k<len} g_b(k) C_{a,b}(l - k)`, `l < len`.
pub fn calibrate_tim(
    corr: &CorrelationSet,
    response: &ResponseSet,
    len: usize,
    opts: CalibrationOptions,
) -> Result<TimKernels> {
    if len == 0 || response.ell_max < len || corr.max_lag + 1 < len {
        return Err(ImpactError::GridMismatch(format!(
            "kernel length {len} needs R to lag {len} (have {}) and C to lag {} (have {})",
            response.ell_max,
            len.saturating_sub(1),
            corr.max_lag
        )));
    }
    let types = present_types(&corr.p, &opts)?;
    let weight: Vec<f64> = types.iter().map(|&b| corr.p[b]).collect();
    let a = toeplitz_blocks(&types, len, &weight, |a, b, m| corr.c_idx(a, b, m));
    let mut rhs = Vec::with_capacity(types.len() * len);
    for &t in &types {
        let pi = EventType::from_index(t);
        for l in 0..len {
            rhs.push(response.r(pi, l + 1) - if l == 0 { 0.0 } else { response.r(pi, l) });
        }
    }
    let sol = solve_checked(&a, &rhs, opts.solve)?;
    let mut incr = vec![0.0; 6 * len];
    for (bi, &b) in types.iter().enumerate() {
        incr[b * len..(b + 1) * len].copy_from_slice(&sol.x[bi * len..(bi + 1) * len]);
    }
    Ok(TimKernels::from_increments(incr, len, sol.condition))
}

/// Single-event propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleKernel {
    /// `G(l)` for `l = 1..=len`.
    pub g: Vec<f64>,
    /// `g(0) = G(1)` and `g(k) = G(k+1) - G(k)`.
    pub increments: Vec<f64>,
    pub condition: f64,
}

/// Single-event calibration `S(l) = sum_{k<len} g(k) C(l - k)`, `l < len`,
/// with `C` the (symmetric, unnormalised) autocorrelation of `xi` and `S`
/// its return response.
pub fn calibrate_single(c: &[f64], s: &[f64], len: usize, solve: SolveOptions) -> Result<SingleKernel> {
    if len == 0 || c.len() < len || s.len() < len {
        return Err(ImpactError::GridMismatch(format!(
            "kernel length {len} needs C and S on lags 0..{len}"
        )));
    }
    let a = toeplitz_blocks(&[0], len, &[1.0], |_, _, m| c[m.unsigned_abs()]);
    let sol = solve_checked(&a, &s[..len], solve)?;
    let mut g = Vec::with_capacity(len);
    let mut acc = 0.0;
    for v in &sol.x {
        acc += v;
        g.push(acc);
    }
    Ok(SingleKernel {
        g,
        increments: sol.x,
        condition: sol.condition,
    })
}

/// Response implied by the kernels: `R_a(l) = sum_{n<l} sum_b P_b sum_k g_b(k) C_{a,b}(n - k)`.
pub fn forward_response(kernels: &TimKernels, corr: &CorrelationSet, ell_max: usize) -> Result<ResponseSet> {
    if corr.max_lag + 1 < ell_max || corr.max_lag + 1 < kernels.len {
        return Err(ImpactError::GridMismatch(format!(
            "forward response to lag {ell_max} needs C to lag {}",
            ell_max.max(kernels.len) - 1
        )));
    }
    let present: Vec<EventType> = EventType::ALL.into_iter().filter(|b| corr.p[b.index()] > 0.0).collect();
    let increments = |a: EventType, n: usize| -> f64 {
        let mut s = 0.0;
        for &b in &present {
            let inc = kernels.increments(b);
            let mut inner = 0.0;
            for (k, g) in inc.iter().enumerate() {
                inner += g * corr.c(a, b, n as isize - k as isize);
            }
            s += corr.p[b.index()] * inner;
        }
        s
    };
    let mut counts = [0u64; 6];
    for b in &present {
        counts[b.index()] = 1;
    }
    let mut r = ResponseSet::from_fn(ell_max, counts, |_, _| f64::NAN);
    for &a in &present {
        let mut acc = 0.0;
        for n in 0..ell_max {
            acc += increments(a, n);
            r.set(a, n + 1, acc);
        }
    }
    Ok(r)
}

/// Closed-form `D(l)` of the transient model for `l = 1..=max_lag`.
///
/// Writes the return autocovariance as
/// `Cov(tau) = sum_{a,b} P_a P_b sum_m H_ab(m) C_ab(tau + m)` with
/// `H_ab(m) = sum_k g_a(k) g_b(k - m)`, then sums it over the window.
pub fn predict_d_tim(
    kernels: &TimKernels,
    corr: &CorrelationSet,
    noise: NoiseModel,
    max_lag: usize,
) -> Result<DiffusionCurve> {
    noise.check()?;
    let len = kernels.len;
    let needed = max_lag + len - 2;
    if max_lag == 0 || corr.max_lag < needed {
        return Err(ImpactError::GridMismatch(format!(
            "diffusion to lag {max_lag} with kernel length {len} needs C to lag {needed}, have {}",
            corr.max_lag
        )));
    }
    let present: Vec<usize> = (0..6).filter(|&a| corr.p[a] > 0.0).collect();
    let width = 2 * len - 1;
    // h[(ai, bi)][m + len - 1]
    let pairs: Vec<(usize, usize)> = present
        .iter()
        .flat_map(|&a| present.iter().map(move |&b| (a, b)))
        .collect();
    let h: Vec<Vec<f64>> = par::map_slice(&pairs, |&(a, b)| {
        let ga = kernels.increments(EventType::from_index(a));
        let gb = kernels.increments(EventType::from_index(b));
        (0..width)
            .map(|mi| {
                let m = mi as isize - (len as isize - 1);
                let mut s = 0.0;
                for k in 0..len as isize {
                    let j = k - m;
                    if (0..len as isize).contains(&j) {
                        s += ga[k as usize] * gb[j as usize];
                    }
                }
                s
            })
            .collect()
    });
    let cov = par::map_range(max_lag, |tau| {
        let mut total = 0.0;
        for (&(a, b), hab) in pairs.iter().zip(&h) {
            let mut s = 0.0;
            for (mi, hv) in hab.iter().enumerate() {
                if *hv != 0.0 {
                    let m = mi as isize - (len as isize - 1);
                    s += hv * corr.c_idx(a, b, tau as isize + m);
                }
            }
            total += corr.p[a] * corr.p[b] * s;
        }
        total
    });
    let d = window_sums(&cov)
        .into_iter()
        .enumerate()
        .map(|(i, v)| noise.d0 * (i + 1) as f64 + v + noise.d_hf)
        .collect();
    Ok(DiffusionCurve {
        d,
        provenance: Provenance::ClosedFormTim,
    })
}

/// `sum_{|t|<l} (l - |t|) f(t)` for a symmetric `f`, `l = 1..=f.len()`.
pub(crate) fn window_sums(f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.len());
    let mut d = 0.0;
    let mut tail = 0.0;
    for (l, _) in f.iter().enumerate() {
        if l > 0 {
            tail += 2.0 * f[l];
        }
        d += f[0] + tail;
        out.push(d);
    }
    out
}
