//! Historical-replay simulation of both models, synthetic event streams with
//! controlled correlations, and measurement of simulated paths.
//!
//! Every random draw comes from a ChaCha8 generator seeded with the run seed
//! and a per-session stream number, so paths do not depend on thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{ImpactError, Result};
use crate::estimators::{estimate_response, CorrelationSet, ResponseSet};
use crate::event::{EventStream, EventType, SignedEvent};
use crate::hdim::HdimKernels;
use crate::par::{self, KahanSum};
use crate::tape::{Tape, TapeSession};
use crate::tim::{DiffusionCurve, NoiseAttach, NoiseModel, Provenance, TimKernels};

const STREAM_NOISE: u64 = 0;
const STREAM_TYPES: u64 = 1;
const STREAM_SIGNS: u64 = 2;
const STREAM_GAPS: u64 = 3;

fn session_rng(seed: u64, session: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(session as u64 * 4 + purpose);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimModel {
    Tim,
    Hdim,
}

/// One simulated session. `mids` has one more entry than the events.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSession {
    pub id: u32,
    pub types: Vec<EventType>,
    pub signs: Vec<i8>,
    /// Realized gaps (before additive noise); zero at neutral events.
    pub gaps: Vec<f64>,
    pub returns: Vec<f64>,
    pub mids: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub model: SimModel,
    pub seed: u64,
    pub sessions: Vec<SimSession>,
    /// Price-changing events whose gap hit the floor.
    pub floored: u64,
    pub price_changing: u64,
}

impl SimPath {
    pub fn tape(&self) -> Tape {
        Tape {
            sessions: self
                .sessions
                .iter()
                .map(|s| TapeSession {
                    id: s.id,
                    types: s.types.clone(),
                    signs: s.signs.clone(),
                    gaps: s.gaps.clone(),
                    prices: s.mids.clone(),
                })
                .collect(),
        }
    }

    pub fn returns(&self) -> Vec<f64> {
        self.sessions.iter().flat_map(|s| s.returns.iter().copied()).collect()
    }

    pub fn floor_rate(&self) -> f64 {
        if self.price_changing == 0 {
            0.0
        } else {
            self.floored as f64 / self.price_changing as f64
        }
    }

    /// Simulated events with their pre-event mids.
    pub fn to_events(&self) -> Vec<SignedEvent> {
        let mut out = Vec::new();
        for s in &self.sessions {
            for t in 0..s.types.len() {
                out.push(SignedEvent {
                    session_id: s.id,
                    t: t as u64,
                    pi: s.types[t],
                    epsilon: s.signs[t],
                    gap: s.gaps[t],
                    mid_before: s.mids[t],
                });
            }
        }
        out
    }
}

/// Options of the history-dependent replay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HdimSimOptions {
    /// Lower bound applied to simulated gaps; `None` leaves them unbounded.
    pub gap_floor: Option<f64>,
}

impl Default for HdimSimOptions {
    fn default() -> Self {
        HdimSimOptions { gap_floor: Some(0.0) }
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

struct GapDynamics<'a> {
    kernel: &'a [f64],
    len: usize,
    delta: [f64; 3],
}

impl GapDynamics<'_> {
    /// `Delta^R + sum_k eps_t K_{src,j}(k) eps_{t-k}`, accumulated in lag order.
    #[inline]
    fn gap(&self, t: usize, j: usize, types: &[EventType], signs: &[f64]) -> f64 {
        let e = signs[t];
        let mut acc = self.delta[j];
        for k in 1..=self.len.min(t) {
            let src = types[t - k].index();
            acc += e * (self.kernel[(src * 3 + j) * self.len + k - 1] * signs[t - k]);
        }
        acc
    }
}

fn mids_from(start: f64, returns: &[f64]) -> Vec<f64> {
    let mut mids = Vec::with_capacity(returns.len() + 1);
    let mut p = start;
    mids.push(p);
    for r in returns {
        p += r;
        mids.push(p);
    }
    mids
}

fn check_tape(tape: &Tape) -> Result<()> {
    if tape.sessions.iter().any(|s| s.is_empty() || s.prices.len() != s.len() + 1) {
        return Err(ImpactError::InvalidConfig("replay needs non-empty sessions with prices".into()));
    }
    Ok(())
}

/// Replays the events of `tape` through the history-dependent model.
pub fn simulate_hdim(
    tape: &Tape,
    kernels: &HdimKernels,
    noise: NoiseModel,
    seed: u64,
    opts: HdimSimOptions,
) -> Result<SimPath> {
    noise.check()?;
    check_tape(tape)?;
    let table: Vec<f64> = (0..6 * 3 * kernels.len)
        .map(|x| {
            let (a, j, k) = (x / (3 * kernels.len), (x / kernels.len) % 3, x % kernels.len + 1);
            kernels.scale * kernels.kappa_idx(a, j, k)
        })
        .collect();
    let dynamics = GapDynamics {
        kernel: &table,
        len: kernels.len,
        delta: kernels.delta_r,
    };
    let sd = noise.d0.sqrt();
    let indices: Vec<usize> = (0..tape.sessions.len()).collect();
    let parts = par::map_slice(&indices, |&si| {
        let s = &tape.sessions[si];
        let mut rng = session_rng(seed, si, STREAM_NOISE);
        let signs: Vec<f64> = s.signs.iter().map(|&e| f64::from(e)).collect();
        let mut gaps = vec![0.0; s.len()];
        let mut returns = vec![0.0; s.len()];
        let mut floored = 0u64;
        let mut pc = 0u64;
        for t in 0..s.len() {
            let eta = if sd > 0.0 && (noise.attach == NoiseAttach::AllEvents || s.types[t].is_price_changing()) {
                sd * normal(&mut rng)
            } else {
                0.0
            };
            match s.types[t].pc_index() {
                Some(j) => {
                    pc += 1;
                    let mut gap = dynamics.gap(t, j, &s.types, &signs);
                    if let Some(floor) = opts.gap_floor {
                        if gap < floor {
                            gap = floor;
                            floored += 1;
                        }
                    }
                    gaps[t] = gap;
                    returns[t] = signs[t] * gap + eta;
                }
                None => returns[t] = eta,
            }
        }
        let mids = mids_from(s.prices[0], &returns);
        (
            SimSession {
                id: s.id,
                types: s.types.clone(),
                signs: s.signs.clone(),
                gaps,
                returns,
                mids,
            },
            floored,
            pc,
        )
    });
    let mut path = SimPath {
        model: SimModel::Hdim,
        seed,
        sessions: Vec::with_capacity(parts.len()),
        floored: 0,
        price_changing: 0,
    };
    for (s, f, pc) in parts {
        path.sessions.push(s);
        path.floored += f;
        path.price_changing += pc;
    }
    Ok(path)
}

/// Replays the events of `tape` through the transient model:
/// `r_t = G_{pi_t}(1) eps_t + sum_{0<k<len} g_{pi_{t-k}}(k) eps_{t-k} + eta_t`.
pub fn simulate_tim(tape: &Tape, kernels: &TimKernels, noise: NoiseModel, seed: u64) -> Result<SimPath> {
    noise.check()?;
    check_tape(tape)?;
    let len = kernels.len;
    let incr: Vec<f64> = EventType::ALL
        .iter()
        .flat_map(|&pi| kernels.increments(pi).to_vec())
        .collect();
    let sd = noise.d0.sqrt();
    let indices: Vec<usize> = (0..tape.sessions.len()).collect();
    let sessions = par::map_slice(&indices, |&si| {
        let s = &tape.sessions[si];
        let mut rng = session_rng(seed, si, STREAM_NOISE);
        let signs: Vec<f64> = s.signs.iter().map(|&e| f64::from(e)).collect();
        let mut gaps = vec![0.0; s.len()];
        let mut returns = vec![0.0; s.len()];
        for t in 0..s.len() {
            let a = s.types[t].index();
            let mut acc = incr[a * len] * signs[t];
            for k in 1..len.min(t + 1) {
                acc += incr[s.types[t - k].index() * len + k] * signs[t - k];
            }
            if s.types[t].is_price_changing() {
                gaps[t] = signs[t] * acc;
            }
            let eta = if sd > 0.0 { sd * normal(&mut rng) } else { 0.0 };
            returns[t] = acc + eta;
        }
        let mids = mids_from(s.prices[0], &returns);
        SimSession {
            id: s.id,
            types: s.types.clone(),
            signs: s.signs.clone(),
            gaps,
            returns,
            mids,
        }
    });
    let price_changing = sessions
        .iter()
        .map(|s| s.types.iter().filter(|t| t.is_price_changing()).count() as u64)
        .sum();
    Ok(SimPath {
        model: SimModel::Tim,
        seed,
        sessions,
        floored: 0,
        price_changing,
    })
}

/// `D(l) = <(p_{t+l} - p_t)^2>` over within-session pairs, `l = 1..=max_lag`.
pub fn measure_diffusion(tape: &Tape, max_lag: usize, provenance: Provenance) -> Result<DiffusionCurve> {
    let shortest = tape.shortest_session();
    if max_lag == 0 || max_lag > shortest {
        return Err(ImpactError::SessionTooShort {
            ell_max: max_lag,
            shortest,
        });
    }
    const CHUNK: usize = 1 << 15;
    let mut chunks = Vec::new();
    for (si, s) in tape.sessions.iter().enumerate() {
        let origins = s.prices.len();
        let mut start = 0;
        while start < origins {
            chunks.push((si, start, (start + CHUNK).min(origins)));
            start += CHUNK;
        }
    }
    let parts = par::map_slice(&chunks, |&(si, start, end)| {
        let p = &tape.sessions[si].prices;
        let mut acc = vec![KahanSum::default(); max_lag];
        for t in start..end {
            for l in 1..=max_lag.min(p.len() - 1 - t) {
                let d = p[t + l] - p[t];
                acc[l - 1].add(d * d);
            }
        }
        acc
    });
    let mut total = vec![KahanSum::default(); max_lag];
    for part in parts {
        for (x, y) in total.iter_mut().zip(&part) {
            x.merge(y);
        }
    }
    let d = (1..=max_lag)
        .map(|l| {
            let pairs: usize = tape.sessions.iter().map(|s| s.prices.len() - l).sum();
            total[l - 1].value() / pairs as f64
        })
        .collect();
    Ok(DiffusionCurve { d, provenance })
}

/// Response and diffusion measured on a simulated path after dropping the
/// first `burn_in` events of each session.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub response: ResponseSet,
    pub diffusion: DiffusionCurve,
}

pub fn measure(path: &SimPath, max_lag: usize, burn_in: usize) -> Result<Measurement> {
    let tape = path.tape().trimmed(burn_in);
    Ok(Measurement {
        response: estimate_response(&tape, max_lag)?,
        diffusion: measure_diffusion(&tape, max_lag, Provenance::Simulated)?,
    })
}

/// How event types are drawn.
#[derive(Debug, Clone, PartialEq)]
pub enum TypeLaw {
    Iid([f64; 6]),
    /// Row-stochastic transition matrix, started from its stationary law.
    Markov([[f64; 6]; 6]),
}

impl TypeLaw {
    pub fn stationary(&self) -> [f64; 6] {
        match self {
            TypeLaw::Iid(p) => *p,
            TypeLaw::Markov(t) => stationary_distribution(t),
        }
    }

    fn check(&self) -> Result<()> {
        let row_ok = |row: &[f64; 6]| {
            row.iter().all(|x| *x >= 0.0 && x.is_finite()) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
        };
        let ok = match self {
            TypeLaw::Iid(p) => row_ok(p),
            TypeLaw::Markov(t) => t.iter().all(row_ok),
        };
        if ok {
            Ok(())
        } else {
            Err(ImpactError::InvalidConfig("type probabilities must be non-negative and sum to 1".into()))
        }
    }
}

/// Stationary law of a transition matrix by power iteration.
pub fn stationary_distribution(t: &[[f64; 6]; 6]) -> [f64; 6] {
    let mut p = [1.0 / 6.0; 6];
    for _ in 0..100_000 {
        let mut next = [0.0; 6];
        for a in 0..6 {
            for b in 0..6 {
                next[b] += p[a] * t[a][b];
            }
        }
        let diff: f64 = next.iter().zip(&p).map(|(x, y)| (x - y).abs()).sum();
        p = next;
        if diff < 1e-16 {
            break;
        }
    }
    let total: f64 = p.iter().sum();
    p.map(|x| x / total)
}

/// How signs are drawn; signs are independent of event types.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SignLaw {
    Iid,
    /// Signs of fractional Gaussian noise with Hurst exponent `1 - gamma/2`;
    /// the sign autocorrelation decays as `l^-gamma`.
    LongMemory { gamma: f64 },
}

impl SignLaw {
    /// Exact autocorrelation `<eps_t eps_{t+l}>`.
    pub fn autocorrelation(&self, lag: usize) -> f64 {
        match *self {
            _ if lag == 0 => 1.0,
            SignLaw::Iid => 0.0,
            SignLaw::LongMemory { gamma } => {
                let rho = fgn_autocorrelation(1.0 - gamma / 2.0, lag);
                std::f64::consts::FRAC_2_PI * rho.asin()
            }
        }
    }
}

/// Autocorrelation of unit-variance fractional Gaussian noise.
pub fn fgn_autocorrelation(hurst: f64, lag: usize) -> f64 {
    let h2 = 2.0 * hurst;
    let k = lag as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// `n` samples of unit-variance fractional Gaussian noise by circulant embedding.
pub fn fgn<R: Rng>(n: usize, hurst: f64, rng: &mut R) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let m = (2 * n).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut spectrum: Vec<Complex<f64>> = (0..m)
        .map(|k| Complex::new(fgn_autocorrelation(hurst, k.min(m - k)), 0.0))
        .collect();
    fft.process(&mut spectrum);
    let mut w: Vec<Complex<f64>> = spectrum
        .iter()
        .map(|lambda| {
            let amp = (lambda.re.max(0.0) / m as f64).sqrt();
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(amp * re, amp * im)
        })
        .collect();
    fft.process(&mut w);
    w.truncate(n);
    w.into_iter().map(|z| z.re).collect()
}

/// Population correlations of a synthetic law (signs independent of types):
/// `C_ab(l) = (T^l)_ab / P_b * <eps_t eps_{t+l}>`, `Pi_ab(l) = (T^l)_ab / P_b - 1`.
pub fn population_correlations(types: &TypeLaw, signs: SignLaw, max_lag: usize) -> CorrelationSet {
    let p = types.stationary();
    let mut powers = Vec::with_capacity(max_lag + 1);
    let mut current = [[0.0; 6]; 6];
    for (a, row) in current.iter_mut().enumerate() {
        row[a] = 1.0;
    }
    powers.push(current);
    for _ in 0..max_lag {
        let next = match types {
            TypeLaw::Iid(p) => [*p; 6],
            TypeLaw::Markov(t) => {
                let mut n = [[0.0; 6]; 6];
                for a in 0..6 {
                    for c in 0..6 {
                        for b in 0..6 {
                            n[a][b] += current[a][c] * t[c][b];
                        }
                    }
                }
                n
            }
        };
        current = next;
        powers.push(current);
    }
    CorrelationSet::from_fn(p, max_lag, |a, b, l| {
        let (ai, bi) = (a.index(), b.index());
        if p[ai] == 0.0 || p[bi] == 0.0 {
            return (f64::NAN, f64::NAN);
        }
        let ratio = powers[l][ai][bi] / p[bi];
        (ratio * signs.autocorrelation(l), ratio - 1.0)
    })
}

/// How gaps of price-changing events are produced.
#[derive(Debug, Clone, PartialEq)]
pub enum GapLaw {
    /// Fixed gap per price-changing type (MOP, CAP, LOP).
    Constant([f64; 3]),
    /// Gap dynamics of the history-dependent model with ground-truth kernels,
    /// optional Gaussian gap noise, and a strictly positive floor.
    Dynamic {
        kernels: HdimKernels,
        noise_sd: f64,
        floor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub instrument: String,
    pub tick_size: f64,
    pub n_events: usize,
    pub n_sessions: usize,
    pub initial_mid: f64,
    pub type_law: TypeLaw,
    pub sign_law: SignLaw,
    pub gap_law: GapLaw,
    pub seed: u64,
}

impl SyntheticConfig {
    /// A plain configuration with i.i.d. types and signs and unit gaps.
    pub fn new(n_events: usize, seed: u64) -> Self {
        SyntheticConfig {
            instrument: "SYN".into(),
            tick_size: 1.0,
            n_events,
            n_sessions: 1,
            initial_mid: 1000.0,
            type_law: TypeLaw::Iid([1.0 / 6.0; 6]),
            sign_law: SignLaw::Iid,
            gap_law: GapLaw::Constant([1.0; 3]),
            seed,
        }
    }

    pub fn check(&self) -> Result<()> {
        self.type_law.check()?;
        let bad = |msg: &str| Err(ImpactError::InvalidConfig(msg.into()));
        if self.n_sessions == 0 || self.n_events < self.n_sessions {
            return bad("need at least one event per session");
        }
        if let SignLaw::LongMemory { gamma } = self.sign_law {
            if !(gamma > 0.0 && gamma < 1.0) {
                return bad("long-memory exponent gamma must lie in (0, 1)");
            }
        }
        match &self.gap_law {
            GapLaw::Constant(g) if g.iter().any(|x| !(*x > 0.0)) => bad("constant gaps must be positive"),
            GapLaw::Dynamic { floor, noise_sd, .. } if !(*floor > 0.0 && *noise_sd >= 0.0) => {
                bad("dynamic gaps need a positive floor and non-negative noise")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub stream: EventStream,
    pub floored: u64,
    pub price_changing: u64,
}

impl Synthetic {
    pub fn floor_rate(&self) -> f64 {
        if self.price_changing == 0 {
            0.0
        } else {
            self.floored as f64 / self.price_changing as f64
        }
    }

    /// Flooring above 1% of price-changing events makes the gap law
    /// noticeably non-linear.
    pub fn flooring_flagged(&self) -> bool {
        self.floor_rate() > 0.01
    }
}

fn draw_index(cumulative: &[f64; 6], u: f64) -> usize {
    cumulative.iter().position(|c| u < *c).unwrap_or(5)
}

fn cumulative(row: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    let mut acc = 0.0;
    for (o, p) in out.iter_mut().zip(row) {
        acc += p;
        *o = acc;
    }
    out
}

/// Generates a valid event stream from `config`.
pub fn generate_synthetic(config: &SyntheticConfig) -> Result<Synthetic> {
    config.check()?;
    let base = config.n_events / config.n_sessions;
    let extra = config.n_events % config.n_sessions;
    let sizes: Vec<usize> = (0..config.n_sessions).map(|i| base + usize::from(i < extra)).collect();
    let stationary = config.type_law.stationary();
    let table: Option<Vec<f64>> = match &config.gap_law {
        GapLaw::Dynamic { kernels, .. } => Some(
            (0..6 * 3 * kernels.len)
                .map(|x| {
                    let (a, j, k) = (x / (3 * kernels.len), (x / kernels.len) % 3, x % kernels.len + 1);
                    kernels.scale * kernels.kappa_idx(a, j, k)
                })
                .collect(),
        ),
        GapLaw::Constant(_) => None,
    };
    let indices: Vec<usize> = (0..sizes.len()).collect();
    let parts = par::map_slice(&indices, |&si| {
        let n = sizes[si];
        let mut rng = session_rng(config.seed, si, STREAM_TYPES);
        let mut types = Vec::with_capacity(n);
        match &config.type_law {
            TypeLaw::Iid(p) => {
                let cum = cumulative(p);
                for _ in 0..n {
                    types.push(EventType::from_index(draw_index(&cum, rng.random::<f64>())));
                }
            }
            TypeLaw::Markov(t) => {
                let rows: Vec<[f64; 6]> = t.iter().map(cumulative).collect();
                let mut state = draw_index(&cumulative(&stationary), rng.random::<f64>());
                for _ in 0..n {
                    types.push(EventType::from_index(state));
                    state = draw_index(&rows[state], rng.random::<f64>());
                }
            }
        }
        let mut rng = session_rng(config.seed, si, STREAM_SIGNS);
        let signs: Vec<i8> = match config.sign_law {
            SignLaw::Iid => (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
            SignLaw::LongMemory { gamma } => fgn(n, 1.0 - gamma / 2.0, &mut rng)
                .into_iter()
                .map(|x| if x >= 0.0 { 1 } else { -1 })
                .collect(),
        };
        let signs_f: Vec<f64> = signs.iter().map(|&e| f64::from(e)).collect();
        let mut rng = session_rng(config.seed, si, STREAM_GAPS);
        let mut gaps = vec![0.0; n];
        let mut floored = 0u64;
        let mut pc = 0u64;
        for t in 0..n {
            let Some(j) = types[t].pc_index() else { continue };
            pc += 1;
            gaps[t] = match (&config.gap_law, &table) {
                (GapLaw::Constant(g), _) => g[j],
                (GapLaw::Dynamic { kernels, noise_sd, floor }, Some(table)) => {
                    let dynamics = GapDynamics {
                        kernel: table,
                        len: kernels.len,
                        delta: kernels.delta_r,
                    };
                    let mut gap = dynamics.gap(t, j, &types, &signs_f);
                    if *noise_sd > 0.0 {
                        gap += noise_sd * normal(&mut rng);
                    }
                    if gap < *floor {
                        floored += 1;
                        *floor
                    } else {
                        gap
                    }
                }
                (GapLaw::Dynamic { .. }, None) => unreachable!("kernel table built for dynamic gaps"),
            };
        }
        let mut mid = config.initial_mid;
        let events: Vec<SignedEvent> = (0..n)
            .map(|t| {
                let e = SignedEvent {
                    session_id: si as u32,
                    t: t as u64,
                    pi: types[t],
                    epsilon: signs[t],
                    gap: gaps[t],
                    mid_before: mid,
                };
                mid += e.jump();
                e
            })
            .collect();
        (events, floored, pc)
    });
    let mut events = Vec::with_capacity(config.n_events);
    let mut floored = 0;
    let mut price_changing = 0;
    for (e, f, pc) in parts {
        events.extend(e);
        floored += f;
        price_changing += pc;
    }
    Ok(Synthetic {
        stream: EventStream::from_events(config.instrument.clone(), config.tick_size, events),
        floored,
        price_changing,
    })
}

/// Least-squares slope of `ln y` against `ln x` over points with positive values.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
