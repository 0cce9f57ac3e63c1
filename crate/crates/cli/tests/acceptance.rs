//! Acceptance suite. Each test prints one PASS/FAIL line with its measured
//! figure of merit (visible with `--nocapture`).
//!
//! 1. estimator identities hold exactly
//! 2. streaming estimators equal a brute-force enumeration
//! 3. transient kernels are recovered from a simulated path
//! 4. closed-form transient diffusion matches Monte Carlo
//! 5. martingale kernels decay with exponent (1 - gamma) / 2
//! 6. history-dependent diffusion reduces to the constant-gap curve
//! 7. history-dependent kernels and diffusion are recovered from i.i.d. flow
//! 8. scale refinement undoes a threefold underestimate
//! 9. equivalent kernels give identical transient and history-dependent paths
//! 10. the CLI pipeline reproduces the committed fixture outputs

mod common;

use std::time::Instant;

use impact_core::compare::relative_l2;
use impact_core::estimators::{
    check_identities, estimate_all, estimate_correlations, estimate_response, estimate_return_response,
    estimate_single, EventStats, LagGrid,
};
use impact_core::hdim::{calibrate_hdim, constant_gap_curve, predict_d_hdim, refine_scale, HdimKernels, RefineOptions};
use impact_core::linalg::SolveOptions;
use impact_core::sim::{
    generate_synthetic, loglog_slope, measure, measure_diffusion, population_correlations, simulate_hdim,
    simulate_tim, GapLaw, HdimSimOptions, SignLaw, SyntheticConfig, TypeLaw,
};
use impact_core::tim::{
    calibrate_single, calibrate_tim, predict_d_tim, CalibrationOptions, NoiseAttach, NoiseModel, Provenance,
    TimKernels,
};
use impact_core::{EventStream, EventType, SignedEvent, Tape};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const IDENTITY_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-12;
const TIM_KERNEL_REL_L2: f64 = 0.05;
const MIN_PAIR_COUNT: u64 = 1000;
const MC_STANDARD_ERRORS: f64 = 3.0;
const MC_SEEDS: u64 = 128;
const BETA_TARGET: f64 = 0.25;
const BETA_TOL: f64 = 0.05;
const ANALYTIC_TOL: f64 = 1e-12;
const HDIM_KERNEL_REL_L2: f64 = 0.05;
const HDIM_D_REL: f64 = 0.02;
const SCALE_TARGET: f64 = 3.0;
const SCALE_REL: f64 = 0.10;
const EQUIVALENCE_TOL: f64 = 1e-12;

const MARKOV: [[f64; 6]; 6] = [
    [0.30, 0.05, 0.15, 0.05, 0.40, 0.05],
    [0.20, 0.10, 0.15, 0.05, 0.40, 0.10],
    [0.15, 0.05, 0.30, 0.05, 0.40, 0.05],
    [0.15, 0.05, 0.20, 0.10, 0.40, 0.10],
    [0.15, 0.05, 0.15, 0.05, 0.55, 0.05],
    [0.15, 0.05, 0.15, 0.10, 0.40, 0.15],
];

fn report(name: &str, start: Instant, pass: bool, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] {name}: {detail} ({:.1}s)", start.elapsed().as_secs_f64());
    assert!(pass, "{name}: {detail}");
}

/// Stream with consistent mids from `(type, sign, gap)` triples per session.
fn stream_of(sessions: &[Vec<(EventType, i8, f64)>]) -> EventStream {
    let mut events = Vec::new();
    for (sid, s) in sessions.iter().enumerate() {
        let mut mid = 100.0;
        for (t, &(pi, epsilon, gap)) in s.iter().enumerate() {
            let e = SignedEvent {
                session_id: sid as u32,
                t: t as u64,
                pi,
                epsilon,
                gap: if pi.is_price_changing() { gap } else { 0.0 },
                mid_before: mid,
            };
            mid += e.jump();
            events.push(e);
        }
    }
    EventStream::from_events("ACC", 0.5, events)
}

/// Brute-force statistics straight from their definitions.
struct Oracle {
    sessions: Vec<Vec<SignedEvent>>,
    counts: [f64; 6],
    p: [f64; 6],
}

impl Oracle {
    fn new(s: &EventStream) -> Self {
        let sessions: Vec<Vec<SignedEvent>> = s.sessions.iter().map(|x| x.events.clone()).collect();
        let mut counts = [0.0; 6];
        for e in sessions.iter().flatten() {
            counts[e.pi.index()] += 1.0;
        }
        let n: f64 = counts.iter().sum();
        Oracle {
            sessions,
            counts,
            p: counts.map(|c| c / n),
        }
    }

    fn mid(s: &[SignedEvent], t: usize) -> f64 {
        match s.get(t) {
            Some(e) => e.mid_before,
            None => s[s.len() - 1].mid_before + s[s.len() - 1].jump(),
        }
    }

    fn c_pi(&self, a: EventType, b: EventType, lag: usize) -> (f64, f64) {
        let (mut pairs, mut signed, mut hits) = (0.0, 0.0, 0.0);
        for s in &self.sessions {
            for t in 0..s.len() {
                if t + lag >= s.len() {
                    continue;
                }
                pairs += 1.0;
                if s[t].pi == a && s[t + lag].pi == b {
                    signed += f64::from(s[t].epsilon) * f64::from(s[t + lag].epsilon);
                    hits += 1.0;
                }
            }
        }
        let norm = pairs * self.p[a.index()] * self.p[b.index()];
        (signed / norm, hits / norm - 1.0)
    }

    fn r(&self, a: EventType, lag: usize) -> f64 {
        let mut sum = 0.0;
        for s in &self.sessions {
            for t in 0..s.len() {
                if s[t].pi == a {
                    sum += f64::from(s[t].epsilon) * (Self::mid(s, t + lag) - Self::mid(s, t));
                }
            }
        }
        sum / self.counts[a.index()]
    }

    fn s(&self, a: EventType, b: EventType, lag: usize) -> f64 {
        let mut sum = 0.0;
        for s in &self.sessions {
            for t in 0..s.len() {
                if s[t].pi == a && t + lag < s.len() && s[t + lag].pi == b {
                    sum += f64::from(s[t].epsilon) * (Self::mid(s, t + lag + 1) - Self::mid(s, t + lag));
                }
            }
        }
        sum / self.counts[a.index()]
    }
}

/// Largest deviation between streaming estimates and the oracle.
fn oracle_deviation(stream: &EventStream) -> f64 {
    let tape = Tape::from(stream);
    let max_lag = tape.shortest_session() - 1;
    let corr = estimate_correlations(&tape, max_lag, false).unwrap();
    let resp = estimate_response(&tape, max_lag).unwrap();
    let ret = estimate_return_response(&tape, max_lag).unwrap();
    let o = Oracle::new(stream);
    let mut worst = 0.0f64;
    let present: Vec<EventType> = EventType::ALL.into_iter().filter(|a| o.counts[a.index()] > 0.0).collect();
    for &a in &present {
        for lag in 1..=max_lag {
            worst = worst.max((resp.r(a, lag) - o.r(a, lag)).abs());
        }
        for &b in &present {
            for lag in 0..=max_lag {
                let (c, pi) = o.c_pi(a, b, lag);
                worst = worst.max((corr.c(a, b, lag as isize) - c).abs());
                worst = worst.max((corr.pi(a, b, lag as isize) - pi).abs());
                worst = worst.max((ret.s(a, b, lag) - o.s(a, b, lag)).abs());
            }
        }
    }
    worst
}

#[test]
fn estimator_identities_hold_exactly() {
    use EventType::*;
    let start = Instant::now();
    let hand = [
        stream_of(&[vec![
            (MOP, 1, 0.5),
            (LO0, -1, 0.0),
            (CAP, -1, 1.0),
            (MO0, 1, 0.0),
            (LOP, 1, 0.5),
            (CA0, -1, 0.0),
            (MOP, -1, 1.5),
            (LO0, 1, 0.0),
        ]]),
        stream_of(&[
            vec![(LOP, -1, 0.5), (MOP, 1, 1.0), (MO0, 1, 0.0), (CAP, 1, 0.5)],
            vec![(CA0, 1, 0.0), (LO0, -1, 0.0), (MOP, -1, 0.5), (LOP, 1, 1.0)],
        ]),
    ];
    let mut residual = 0.0f64;
    let mut lag0 = 0.0f64;
    for s in &hand {
        let tape = Tape::from(s);
        let lag = tape.shortest_session() - 1;
        let corr = estimate_correlations(&tape, lag, true).unwrap();
        let rep = check_identities(
            &estimate_response(&tape, lag).unwrap(),
            &estimate_return_response(&tape, lag).unwrap(),
            Some(&corr),
        )
        .unwrap();
        residual = residual.max(rep.max_violation).max(rep.transpose_violation.unwrap());
        lag0 = lag0.max(rep.lag0_violation.unwrap());
    }

    let mut cfg = SyntheticConfig::new(100_000, 17);
    cfg.n_sessions = 3;
    cfg.type_law = TypeLaw::Markov(MARKOV);
    cfg.sign_law = SignLaw::LongMemory { gamma: 0.6 };
    cfg.gap_law = GapLaw::Constant([1.0, 0.5, 1.5]);
    let tape = Tape::from(&generate_synthetic(&cfg).unwrap().stream);
    let est = estimate_all(&tape, LagGrid::new(64).unwrap()).unwrap();
    let rep = check_identities(&est.response, &est.returns, Some(&est.correlations)).unwrap();
    residual = residual.max(rep.max_violation).max(rep.transpose_violation.unwrap());
    lag0 = lag0.max(rep.lag0_violation.unwrap());

    report(
        "estimator identities",
        start,
        residual <= IDENTITY_TOL && lag0 == 0.0,
        format!("max R/S and transpose residual {residual:.2e} (tol {IDENTITY_TOL:.0e}), C(0) deviation {lag0:e}"),
    );
}

#[test]
fn streaming_estimators_match_enumeration() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    // Every sequence of three events with unit gaps.
    for code in 0..12usize.pow(3) {
        let events: Vec<(EventType, i8, f64)> = (0..3)
            .map(|i| {
                let d = code / 12usize.pow(i) % 12;
                (EventType::from_index(d / 2), if d % 2 == 0 { 1 } else { -1 }, 1.0)
            })
            .collect();
        worst = worst.max(oracle_deviation(&stream_of(&[events])));
        cases += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..2000 {
        let n_sessions = rng.random_range(1..=2);
        let sessions: Vec<Vec<(EventType, i8, f64)>> = (0..n_sessions)
            .map(|_| {
                let len = rng.random_range(2..=10 / n_sessions);
                (0..len)
                    .map(|_| {
                        let pi = EventType::from_index(rng.random_range(0..6));
                        let sign = if rng.random::<bool>() { 1 } else { -1 };
                        (pi, sign, 0.5 * f64::from(rng.random_range(1..4)))
                    })
                    .collect()
            })
            .collect();
        worst = worst.max(oracle_deviation(&stream_of(&sessions)));
        cases += 1;
    }
    report(
        "enumeration oracle",
        start,
        worst <= ORACLE_TOL,
        format!("{cases} sequences, max deviation {worst:.2e} (tol {ORACLE_TOL:.0e})"),
    );
}

#[test]
fn transient_kernels_are_recovered() {
    let start = Instant::now();
    const LEN: usize = 16;
    let mut cfg = SyntheticConfig::new(1_000_000, 31);
    cfg.n_sessions = 4;
    cfg.type_law = TypeLaw::Markov(MARKOV);
    cfg.sign_law = SignLaw::LongMemory { gamma: 0.5 };
    let tape = Tape::from(&generate_synthetic(&cfg).unwrap().stream);
    let amp = [0.2, 1.0, 0.15, 0.7, 0.1, 0.5];
    let shapes: [(&str, fn(usize, usize) -> f64); 3] = [
        ("constant", |_, _| 1.0),
        ("power-law", |_, l| (l as f64).powf(-0.25)),
        ("mixed", |a, l| if a % 2 == 0 { 1.0 } else { 0.4 + 0.6 * (l as f64).powf(-0.5) }),
    ];
    let mut errors = Vec::new();
    for (name, shape) in shapes {
        let curves: [Vec<f64>; 6] = std::array::from_fn(|a| (1..=LEN).map(|l| amp[a] * shape(a, l)).collect());
        let truth = TimKernels::from_g(&curves).unwrap();
        let path = simulate_tim(&tape, &truth, NoiseModel::default(), 5).unwrap();
        let est = estimate_all(&path.tape(), LagGrid::new(LEN).unwrap()).unwrap();
        let fit = calibrate_tim(&est.correlations, &est.response, LEN, CalibrationOptions::default()).unwrap();
        let (mut got, mut want) = (Vec::new(), Vec::new());
        for a in EventType::ALL {
            for lag in 1..=LEN {
                let supported = EventType::ALL
                    .iter()
                    .all(|&b| est.correlations.pair_count(a, b, lag.min(est.correlations.max_lag)) >= MIN_PAIR_COUNT);
                if supported {
                    got.push(fit.g(a, lag));
                    want.push(truth.g(a, lag));
                }
            }
        }
        errors.push((name, relative_l2(&got, &want, None), want.len()));
    }
    let worst = errors.iter().map(|e| e.1).fold(0.0, f64::max);
    let detail: Vec<String> = errors.iter().map(|(n, e, k)| format!("{n} {:.3}% over {k}", 100.0 * e)).collect();
    report(
        "transient round trip",
        start,
        worst <= TIM_KERNEL_REL_L2,
        format!("relative L2 {} (tol {:.0}%)", detail.join(", "), 100.0 * TIM_KERNEL_REL_L2),
    );
}

#[test]
fn transient_diffusion_matches_monte_carlo() {
    let start = Instant::now();
    const LEN: usize = 32;
    const MAX_LAG: usize = 256;
    const N: usize = 1 << 14;
    let law = TypeLaw::Iid([0.25, 0.1, 0.15, 0.1, 0.3, 0.1]);
    let signs = SignLaw::LongMemory { gamma: 0.5 };
    let amp = [0.3, 1.0, -0.2, 0.8, 0.15, 0.6];
    let curves: [Vec<f64>; 6] = std::array::from_fn(|a| (1..=LEN).map(|l| amp[a] * (l as f64).powf(-0.25)).collect());
    let kernels = TimKernels::from_g(&curves).unwrap();
    let noise = NoiseModel::new(0.05, 0.0).unwrap();

    let population = population_correlations(&law, signs, MAX_LAG + LEN);
    let predicted = predict_d_tim(&kernels, &population, noise, MAX_LAG).unwrap();

    let mut sum = vec![0.0; MAX_LAG];
    let mut sum_sq = vec![0.0; MAX_LAG];
    for seed in 0..MC_SEEDS {
        let mut cfg = SyntheticConfig::new(N, seed);
        cfg.type_law = law.clone();
        cfg.sign_law = signs;
        let tape = Tape::from(&generate_synthetic(&cfg).unwrap().stream);
        let path = simulate_tim(&tape, &kernels, noise, seed + 10_000).unwrap();
        let d = measure(&path, MAX_LAG, LEN).unwrap().diffusion.d;
        for l in 0..MAX_LAG {
            sum[l] += d[l];
            sum_sq[l] += d[l] * d[l];
        }
    }
    let n = MC_SEEDS as f64;
    let mut worst_z = 0.0f64;
    let mut worst_lag = 0;
    for l in 0..MAX_LAG {
        let mean = sum[l] / n;
        let var = (sum_sq[l] - n * mean * mean) / (n - 1.0);
        let z = (mean - predicted.d[l]).abs() / (var / n).sqrt();
        if z > worst_z {
            worst_z = z;
            worst_lag = l + 1;
        }
    }
    report(
        "transient diffusion exactness",
        start,
        worst_z <= MC_STANDARD_ERRORS,
        format!("{MC_SEEDS} seeds, worst deviation {worst_z:.2} standard errors at lag {worst_lag} (tol {MC_STANDARD_ERRORS})"),
    );
}

/// Coefficients `a_1..a_p` of the best linear predictor from autocorrelations `rho(0..=p)`.
fn levinson(rho: &[f64]) -> Vec<f64> {
    let p = rho.len() - 1;
    let mut a = vec![0.0; p + 1];
    let mut err = rho[0];
    for m in 1..=p {
        let mut acc = rho[m];
        for k in 1..m {
            acc -= a[k] * rho[m - k];
        }
        let reflection = acc / err;
        let prev = a.clone();
        a[m] = reflection;
        for k in 1..m {
            a[k] = prev[k] - reflection * prev[m - k];
        }
        err *= 1.0 - reflection * reflection;
    }
    a[1..].to_vec()
}

#[test]
fn martingale_kernel_decays_with_predicted_exponent() {
    let start = Instant::now();
    const LEN: usize = 2048;
    let gamma = 0.5;
    let signs = SignLaw::LongMemory { gamma };
    let rho: Vec<f64> = (0..LEN).map(|l| signs.autocorrelation(l)).collect();
    let a = levinson(&rho);
    let mut g = Vec::with_capacity(LEN);
    let mut level = 1.0;
    for l in 0..LEN {
        g.push(level);
        if l < a.len() {
            level -= a[l];
        }
    }
    let kernels = TimKernels::from_g(&std::array::from_fn(|_| g.clone())).unwrap();

    let mut cfg = SyntheticConfig::new(1 << 20, 8);
    cfg.n_sessions = 2;
    cfg.type_law = TypeLaw::Iid([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    cfg.sign_law = signs;
    let tape = Tape::from(&generate_synthetic(&cfg).unwrap().stream);
    let path = simulate_tim(&tape, &kernels, NoiseModel::default(), 1).unwrap();
    let sim = path.tape().trimmed(LEN);
    let xi: Vec<Vec<f64>> = sim.sessions.iter().map(|s| s.signs.iter().map(|&e| f64::from(e)).collect()).collect();
    let curves = estimate_single(&sim, &xi, LEN).unwrap();
    let fit = calibrate_single(&curves.c, &curves.s, LEN, SolveOptions::default()).unwrap();

    let lags: Vec<f64> = (10..=1000).map(|l| l as f64).collect();
    let slope = |g: &[f64]| -loglog_slope(&lags, &g[9..1000]);
    let beta = slope(&fit.g);
    report(
        "martingale scaling",
        start,
        (beta - BETA_TARGET).abs() <= BETA_TOL,
        format!(
            "fitted beta {beta:.4} (input kernel {:.4}), target {BETA_TARGET} +- {BETA_TOL}",
            slope(&g)
        ),
    );
}

#[test]
fn zero_kernels_reduce_to_constant_gap() {
    let start = Instant::now();
    // Bitwise agreement on empirical and population correlations.
    let mut cfg = SyntheticConfig::new(60_000, 4);
    cfg.n_sessions = 2;
    cfg.type_law = TypeLaw::Markov(MARKOV);
    cfg.sign_law = SignLaw::LongMemory { gamma: 0.4 };
    cfg.gap_law = GapLaw::Constant([1.0, 0.5, 2.0]);
    let est = estimate_all(&Tape::from(&generate_synthetic(&cfg).unwrap().stream), LagGrid::new(48).unwrap()).unwrap();
    let population = population_correlations(&TypeLaw::Markov(MARKOV), SignLaw::LongMemory { gamma: 0.4 }, 96);
    let mut bitwise = true;
    for corr in [&est.correlations, &population] {
        for attach in [NoiseAttach::PriceChanging, NoiseAttach::AllEvents] {
            for len in [1, 8, 24] {
                let noise = NoiseModel {
                    d0: 0.3,
                    d_hf: 0.04,
                    attach,
                };
                let zero = HdimKernels::zeros(len, est.stats.delta_r_all().unwrap());
                let a = predict_d_hdim(&zero, corr, noise, 48).unwrap();
                let b = constant_gap_curve(&est.stats, corr, noise, 48).unwrap();
                bitwise &= a.d.iter().zip(&b.d).all(|(x, y)| x.to_bits() == y.to_bits());
            }
        }
    }

    // Analytic value under i.i.d. types and signs.
    let p = [0.2, 0.1, 0.25, 0.05, 0.3, 0.1];
    let delta = [1.0, 0.5, 1.5];
    let stats = EventStats {
        counts: [1; 6],
        p,
        delta_r: delta.map(Some),
    };
    let iid = population_correlations(&TypeLaw::Iid(p), SignLaw::Iid, 128);
    let d0 = 0.7;
    let noise = NoiseModel {
        d0,
        d_hf: 0.0,
        attach: NoiseAttach::AllEvents,
    };
    let curve = predict_d_hdim(&HdimKernels::zeros(16, delta), &iid, noise, 64).unwrap();
    let constant = constant_gap_curve(&stats, &iid, noise, 64).unwrap();
    let per_event: f64 = EventType::PRICE_CHANGING
        .iter()
        .enumerate()
        .map(|(j, pi)| p[pi.index()] * delta[j] * delta[j])
        .sum();
    let analytic_dev = (1..=64)
        .map(|l| {
            let want = d0 * l as f64 + l as f64 * per_event;
            let dev = (curve.at(l) - want).abs().max((constant.at(l) - want).abs());
            dev / want
        })
        .fold(0.0, f64::max);
    report(
        "zero-kernel reductions",
        start,
        bitwise && analytic_dev <= ANALYTIC_TOL,
        format!("bitwise equal: {bitwise}, analytic relative deviation {analytic_dev:.2e} (tol {ANALYTIC_TOL:.0e})"),
    );
}

fn iid_hdim_truth() -> HdimKernels {
    let source = [1.0, 1.0, -0.5, -0.5, 0.5, 0.5];
    let target = [1.0, 0.6, 0.8];
    HdimKernels::from_fn(8, [1.0; 3], |a, b, k| {
        source[a.index()] * target[b.pc_index().unwrap()] * 0.2 * (k as f64).powf(-0.25)
    })
}

fn iid_hdim_stream(n: usize, seed: u64) -> (Tape, f64) {
    let mut cfg = SyntheticConfig::new(n, seed);
    cfg.n_sessions = 4;
    cfg.gap_law = GapLaw::Dynamic {
        kernels: iid_hdim_truth(),
        noise_sd: 0.0,
        floor: 1e-3,
    };
    let syn = generate_synthetic(&cfg).unwrap();
    (Tape::from(&syn.stream), syn.floor_rate())
}

#[test]
fn history_dependent_round_trip_on_iid_flow() {
    let start = Instant::now();
    let truth = iid_hdim_truth();
    let (tape, floor_rate) = iid_hdim_stream(1 << 21, 12);
    let est = estimate_all(&tape, LagGrid::new(64).unwrap()).unwrap();
    let fit = calibrate_hdim(&est.correlations, &est.returns, &est.stats, truth.len, CalibrationOptions::default()).unwrap();
    let (mut got, mut want) = (Vec::new(), Vec::new());
    for a in EventType::ALL {
        for b in EventType::PRICE_CHANGING {
            for k in 1..=truth.len {
                got.push(fit.kappa(a, b, k));
                want.push(truth.kappa(a, b, k));
            }
        }
    }
    let kernel_err = relative_l2(&got, &want, None);
    let measured = measure_diffusion(&tape, 64, Provenance::Empirical).unwrap();
    let predicted = predict_d_hdim(&fit, &est.correlations, NoiseModel::default(), 64).unwrap();
    let d_err = (1..=64)
        .map(|l| (predicted.at(l) - measured.at(l)).abs() / measured.at(l))
        .fold(0.0, f64::max);
    report(
        "history-dependent round trip",
        start,
        kernel_err <= HDIM_KERNEL_REL_L2 && d_err <= HDIM_D_REL,
        format!(
            "kernel relative L2 {:.2}% (tol {:.0}%), max D deviation {:.2}% (tol {:.0}%), floored {:.3}%",
            100.0 * kernel_err,
            100.0 * HDIM_KERNEL_REL_L2,
            100.0 * d_err,
            100.0 * HDIM_D_REL,
            100.0 * floor_rate
        ),
    );
}

#[test]
fn scale_refinement_recovers_factor_three() {
    let start = Instant::now();
    let (tape, _) = iid_hdim_stream(1 << 20, 21);
    let est = estimate_all(&tape, LagGrid::new(16).unwrap()).unwrap();
    let fit = calibrate_hdim(&est.correlations, &est.returns, &est.stats, 8, CalibrationOptions::default()).unwrap();
    let shrunk = fit.scaled_values(1.0 / SCALE_TARGET);
    let refined = refine_scale(&shrunk, &tape, &est.response, RefineOptions::default()).unwrap();
    let rel = (refined.scale / SCALE_TARGET - 1.0).abs();
    report(
        "scale refinement",
        start,
        rel <= SCALE_REL && refined.objective < refined.initial_objective && refined.identifiable && !refined.at_bound,
        format!(
            "scale {:.4} (target {SCALE_TARGET} +- {:.0}%), objective {:.3e} vs unrefined {:.3e}",
            refined.scale,
            100.0 * SCALE_REL,
            refined.objective,
            refined.initial_objective
        ),
    );
}

#[test]
fn equivalent_models_emit_identical_returns() {
    let start = Instant::now();
    let mut cfg = SyntheticConfig::new(50_000, 6);
    cfg.n_sessions = 2;
    cfg.type_law = TypeLaw::Iid([0.0, 0.4, 0.0, 0.3, 0.0, 0.3]);
    cfg.sign_law = SignLaw::LongMemory { gamma: 0.5 };
    let tape = Tape::from(&generate_synthetic(&cfg).unwrap().stream);
    let amp = [0.3, 1.0, 0.2, 0.7, 0.1, 0.4];
    let curves: [Vec<f64>; 6] = std::array::from_fn(|a| (1..=24).map(|l| amp[a] * (l as f64).powf(-0.3)).collect());
    let tim = TimKernels::from_g(&curves).unwrap();
    let hdim = HdimKernels::from_tim(&tim);
    let noise = NoiseModel::new(0.02, 0.0).unwrap();
    let a = simulate_tim(&tape, &tim, noise, 9).unwrap().returns();
    let b = simulate_hdim(&tape, &hdim, noise, 9, HdimSimOptions { gap_floor: None }).unwrap().returns();
    let worst = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    report(
        "model equivalence",
        start,
        a.len() == b.len() && worst <= EQUIVALENCE_TOL,
        format!("{} returns, max difference {worst:e} (tol {EQUIVALENCE_TOL:.0e})", a.len()),
    );
}

#[test]
fn cli_pipeline_reproduces_fixture() {
    let start = Instant::now();
    let (_dir, out) = common::run_fixture();
    let bad = common::golden_mismatches(&out);
    report(
        "golden pipeline",
        start,
        bad.is_empty(),
        format!("{} committed files, mismatched: {bad:?}", common::COMPARED.len()),
    );
}
