//! CSV codecs for events, book updates, curves, kernels and paths.
//!
//! Floats are written in shortest round-trip form, so write followed by read
//! reproduces every value exactly.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ImpactError, Result};
use crate::estimators::{CorrelationSet, EventStats, ResponseSet, ReturnResponseSet};
use crate::event::{BookUpdate, EventStream, EventType, SignedEvent};
use crate::hdim::HdimKernels;
use crate::sim::SimPath;
use crate::tim::{DiffusionCurve, Provenance, TimKernels};

fn parse_err(line: u64, reason: impl Into<String>) -> ImpactError {
    ImpactError::Parse {
        line,
        reason: reason.into(),
    }
}

fn csv_line(e: &csv::Error) -> u64 {
    e.position().map_or(0, |p| p.line())
}

fn rows<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<(u64, T)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.deserialize::<T>() {
        match rec {
            Ok(row) => out.push((out.len() as u64 + 2, row)),
            Err(e) => return Err(parse_err(csv_line(&e), e.to_string())),
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    instrument: String,
    session_id: u32,
    t: u64,
    pi: EventType,
    epsilon: i8,
    gap: f64,
    mid_before: f64,
}

pub fn write_events<W: Write>(writer: W, stream: &EventStream) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in stream.events() {
        w.serialize(EventRow {
            instrument: stream.instrument.clone(),
            session_id: e.session_id,
            t: e.t,
            pi: e.pi,
            epsilon: e.epsilon,
            gap: e.gap,
            mid_before: e.mid_before,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads an event CSV. Rows of one session must be contiguous.
pub fn read_events<R: Read>(reader: R, tick_size: f64) -> Result<EventStream> {
    let rows: Vec<(u64, EventRow)> = rows(reader)?;
    let instrument = rows.first().map(|(_, r)| r.instrument.clone()).unwrap_or_default();
    let mut seen = std::collections::HashSet::new();
    let mut current = None;
    let mut events = Vec::with_capacity(rows.len());
    for (line, r) in rows {
        if r.instrument != instrument {
            return Err(parse_err(line, format!("mixed instruments `{instrument}` and `{}`", r.instrument)));
        }
        if current != Some(r.session_id) {
            if !seen.insert(r.session_id) {
                return Err(parse_err(line, format!("session {} is not contiguous", r.session_id)));
            }
            current = Some(r.session_id);
        }
        events.push(SignedEvent {
            session_id: r.session_id,
            t: r.t,
            pi: r.pi,
            epsilon: r.epsilon,
            gap: r.gap,
            mid_before: r.mid_before,
        });
    }
    Ok(EventStream::from_events(instrument, tick_size, events))
}

pub fn write_book_updates<W: Write>(writer: W, updates: &[BookUpdate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for u in updates {
        w.serialize(u)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_book_updates<R: Read>(reader: R) -> Result<Vec<BookUpdate>> {
    Ok(rows(reader)?.into_iter().map(|(_, u)| u).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CurveRow {
    kind: String,
    pi1: EventType,
    pi2: Option<EventType>,
    lag: usize,
    value: f64,
    count: u64,
}

/// Statistics stored in a curve file.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveFile {
    pub correlations: CorrelationSet,
    pub response: ResponseSet,
    pub returns: ReturnResponseSet,
}

/// Writes `P`, `C`, `Pi`, `R` and `S` rows. Types that never occur are skipped.
pub fn write_curves<W: Write>(
    writer: W,
    stats: &EventStats,
    corr: &CorrelationSet,
    response: &ResponseSet,
    returns: &ReturnResponseSet,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let present: Vec<EventType> = EventType::ALL.into_iter().filter(|pi| stats.counts[pi.index()] > 0).collect();
    let row = |kind: &str, pi1: EventType, pi2: Option<EventType>, lag: usize, value: f64, count: u64| CurveRow {
        kind: kind.into(),
        pi1,
        pi2,
        lag,
        value,
        count,
    };
    for &a in &present {
        w.serialize(row("P", a, None, 0, stats.p(a), stats.counts[a.index()]))?;
    }
    for (kind, f) in [
        ("C", CorrelationSet::c as fn(&CorrelationSet, EventType, EventType, isize) -> f64),
        ("Pi", CorrelationSet::pi),
    ] {
        for &a in &present {
            for &b in &present {
                for lag in 0..=corr.max_lag {
                    let v = f(corr, a, b, lag as isize);
                    w.serialize(row(kind, a, Some(b), lag, v, corr.pair_count(a, b, lag)))?;
                }
            }
        }
    }
    for &a in &present {
        for lag in 1..=response.ell_max {
            w.serialize(row("R", a, None, lag, response.r(a, lag), response.counts[a.index()]))?;
        }
    }
    let width = returns.ell_max + 1;
    for &a in &present {
        for &b in &present {
            for lag in 0..=returns.ell_max {
                let count = returns.pair_counts[(a.index() * 6 + b.index()) * width + lag];
                w.serialize(row("S", a, Some(b), lag, returns.s(a, b, lag), count))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a curve file written by [`write_curves`]. Absent types read back
/// as `NaN` statistics with zero counts.
pub fn read_curves<R: Read>(reader: R) -> Result<CurveFile> {
    let rows: Vec<(u64, CurveRow)> = rows(reader)?;
    let max_of = |kind: &str| rows.iter().filter(|(_, r)| r.kind == kind).map(|(_, r)| r.lag).max();
    let c_lag = max_of("C").ok_or_else(|| parse_err(0, "no C rows"))?;
    let r_lag = max_of("R").ok_or_else(|| parse_err(0, "no R rows"))?;
    let s_lag = max_of("S").ok_or_else(|| parse_err(0, "no S rows"))?;
    let mut p = [0.0; 6];
    let mut counts = [0u64; 6];
    let cw = c_lag + 1;
    let sw = s_lag + 1;
    let mut c = vec![f64::NAN; 36 * cw];
    let mut pi = vec![f64::NAN; 36 * cw];
    let mut pair_counts = vec![0u64; 36 * cw];
    let mut r_vals = vec![f64::NAN; 6 * (r_lag + 1)];
    let mut s_vals = vec![0.0; 36 * sw];
    let mut s_counts = vec![0u64; 36 * sw];
    for (line, r) in &rows {
        let a = r.pi1.index();
        let pair = || {
            r.pi2
                .map(|b| a * 6 + b.index())
                .ok_or_else(|| parse_err(*line, format!("{} row without pi2", r.kind)))
        };
        match r.kind.as_str() {
            "P" => {
                p[a] = r.value;
                counts[a] = r.count;
            }
            "C" => {
                let k = pair()? * cw + r.lag;
                c[k] = r.value;
                pair_counts[k] = r.count;
            }
            "Pi" => pi[pair()? * cw + r.lag] = r.value,
            "R" => r_vals[a * (r_lag + 1) + r.lag] = r.value,
            "S" => {
                let k = pair()? * sw + r.lag;
                s_vals[k] = r.value;
                s_counts[k] = r.count;
            }
            other => return Err(parse_err(*line, format!("unknown curve kind `{other}`"))),
        }
    }
    for a in (0..6).filter(|&a| counts[a] == 0) {
        for b in 0..6 {
            s_vals[(a * 6 + b) * sw..(a * 6 + b + 1) * sw].fill(f64::NAN);
        }
    }
    let correlations = CorrelationSet::from_parts(c_lag, p, c, pi, pair_counts);
    let response = ResponseSet::from_fn(r_lag, counts, |a, l| r_vals[a.index() * (r_lag + 1) + l]);
    let mut returns = ReturnResponseSet::from_fn(s_lag, counts, |a, b, l| s_vals[(a.index() * 6 + b.index()) * sw + l]);
    returns.pair_counts = s_counts;
    Ok(CurveFile {
        correlations,
        response,
        returns,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct KernelRow {
    pi: EventType,
    lag: usize,
    #[serde(rename = "G")]
    g: f64,
}

pub fn write_tim_kernels<W: Write>(writer: W, kernels: &TimKernels) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for pi in EventType::ALL {
        for (i, g) in kernels.curve(pi).iter().enumerate() {
            w.serialize(KernelRow { pi, lag: i + 1, g: *g })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_tim_kernels<R: Read>(reader: R) -> Result<TimKernels> {
    let rows: Vec<(u64, KernelRow)> = rows(reader)?;
    let len = rows.iter().map(|(_, r)| r.lag).max().unwrap_or(0);
    let mut curves: [Vec<f64>; 6] = std::array::from_fn(|_| vec![f64::NAN; len]);
    for (line, r) in rows {
        if r.lag == 0 {
            return Err(parse_err(line, "kernel lags start at 1"));
        }
        curves[r.pi.index()][r.lag - 1] = r.g;
    }
    if curves.iter().flatten().any(|g| g.is_nan()) {
        return Err(parse_err(0, "kernel file does not cover every type and lag"));
    }
    TimKernels::from_g(&curves)
}

#[derive(Debug, Serialize, Deserialize)]
struct KappaRow {
    pi1: EventType,
    pi2: EventType,
    lag: usize,
    kappa: f64,
}

/// Writes the unscaled kernel values; scale and realized gaps belong in the manifest.
pub fn write_kappa<W: Write>(writer: W, kernels: &HdimKernels) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for pi1 in EventType::ALL {
        for pi2 in EventType::PRICE_CHANGING {
            for lag in 1..=kernels.len {
                w.serialize(KappaRow {
                    pi1,
                    pi2,
                    lag,
                    kappa: kernels.kappa(pi1, pi2, lag),
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_kappa<R: Read>(reader: R, delta_r: [f64; 3], scale: f64) -> Result<HdimKernels> {
    let rows: Vec<(u64, KappaRow)> = rows(reader)?;
    let len = rows.iter().map(|(_, r)| r.lag).max().unwrap_or(0);
    let mut table = vec![f64::NAN; 18 * len];
    for (line, r) in rows {
        let j = r
            .pi2
            .pc_index()
            .ok_or_else(|| parse_err(line, format!("{} is not a price-changing target", r.pi2)))?;
        if r.lag == 0 {
            return Err(parse_err(line, "kappa lags start at 1"));
        }
        table[(r.pi1.index() * 3 + j) * len + r.lag - 1] = r.kappa;
    }
    if len == 0 || table.iter().any(|v| v.is_nan()) {
        return Err(parse_err(0, "kappa file does not cover every pair and lag"));
    }
    let k = HdimKernels::from_fn(len, delta_r, |a, b, l| {
        table[(a.index() * 3 + b.pc_index().unwrap_or(0)) * len + l - 1]
    });
    Ok(k.with_scale(scale))
}

#[derive(Debug, Serialize, Deserialize)]
struct DgRow {
    pi: EventType,
    lag: usize,
    dgstar: f64,
}

pub fn write_dgstar<W: Write>(writer: W, curves: &[Vec<f64>; 6]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for pi in EventType::ALL {
        for (i, v) in curves[pi.index()].iter().enumerate() {
            w.serialize(DgRow {
                pi,
                lag: i + 1,
                dgstar: *v,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_dgstar<R: Read>(reader: R) -> Result<[Vec<f64>; 6]> {
    let mut out: [Vec<f64>; 6] = Default::default();
    for (line, r) in rows::<DgRow, _>(reader)? {
        let v = &mut out[r.pi.index()];
        if r.lag != v.len() + 1 {
            return Err(parse_err(line, "dG* lags must be consecutive from 1"));
        }
        v.push(r.dgstar);
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct DiffusionRow {
    lag: usize,
    #[serde(rename = "D")]
    d: f64,
    #[serde(rename = "D_over_ell")]
    d_over_ell: f64,
    provenance: String,
}

pub fn write_diffusion<W: Write>(writer: W, curve: &DiffusionCurve) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (i, (d, n)) in curve.d.iter().zip(curve.normalized()).enumerate() {
        w.serialize(DiffusionRow {
            lag: i + 1,
            d: *d,
            d_over_ell: n,
            provenance: curve.provenance.as_str().into(),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_diffusion<R: Read>(reader: R) -> Result<DiffusionCurve> {
    let mut d = Vec::new();
    let mut provenance = None;
    for (line, r) in rows::<DiffusionRow, _>(reader)? {
        if r.lag != d.len() + 1 {
            return Err(parse_err(line, "diffusion lags must be consecutive from 1"));
        }
        let p: Provenance = r.provenance.parse()?;
        if provenance.is_some_and(|q| q != p) {
            return Err(parse_err(line, "mixed provenance in one diffusion file"));
        }
        provenance = Some(p);
        d.push(r.d);
    }
    let provenance = provenance.ok_or_else(|| parse_err(0, "empty diffusion file"))?;
    Ok(DiffusionCurve { d, provenance })
}

#[derive(Debug, Serialize)]
struct PathRow {
    session_id: u32,
    t: u64,
    pi: EventType,
    epsilon: i8,
    gap: f64,
    mid: f64,
}

/// Writes a simulated path; `mid` is the price just before each event.
pub fn write_path<W: Write>(writer: W, path: &SimPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for e in path.to_events() {
        w.serialize(PathRow {
            session_id: e.session_id,
            t: e.t,
            pi: e.pi,
            epsilon: e.epsilon,
            gap: e.gap,
            mid: e.mid_before,
        })?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{estimate_all, LagGrid};
    use crate::sim::{generate_synthetic, SyntheticConfig};
    use crate::tape::Tape;

    fn synthetic() -> EventStream {
        let mut cfg = SyntheticConfig::new(4000, 3);
        cfg.n_sessions = 2;
        cfg.gap_law = crate::sim::GapLaw::Constant([0.5, 1.0 / 3.0, 1.5]);
        generate_synthetic(&cfg).unwrap().stream
    }

    #[test]
    fn events_round_trip() {
        let s = synthetic();
        let mut buf = Vec::new();
        write_events(&mut buf, &s).unwrap();
        assert!(buf.starts_with(b"instrument,session_id,t,pi,epsilon,gap,mid_before\n"));
        let back = read_events(buf.as_slice(), s.tick_size).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn curves_round_trip() {
        let s = synthetic();
        let est = estimate_all(&Tape::from(&s), LagGrid::new(12).unwrap()).unwrap();
        let mut buf = Vec::new();
        write_curves(&mut buf, &est.stats, &est.correlations, &est.response, &est.returns).unwrap();
        let back = read_curves(buf.as_slice()).unwrap();
        assert_eq!(back.correlations, est.correlations.without_backward());
        assert_eq!(back.response, est.response);
        assert_eq!(back.returns, est.returns);
    }

    #[test]
    fn kernels_round_trip() {
        let curves: [Vec<f64>; 6] = std::array::from_fn(|a| (1..=7).map(|l| 0.1 * a as f64 + 1.0 / l as f64).collect());
        let k = TimKernels::from_g(&curves).unwrap();
        let mut buf = Vec::new();
        write_tim_kernels(&mut buf, &k).unwrap();
        assert_eq!(read_tim_kernels(buf.as_slice()).unwrap(), k);

        let h = HdimKernels::from_fn(5, [1.0, 0.5, 0.25], |a, b, l| (a.index() + b.index()) as f64 / (3.0 * l as f64));
        let mut buf = Vec::new();
        write_kappa(&mut buf, &h).unwrap();
        let back = read_kappa(buf.as_slice(), h.delta_r, 1.0).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn diffusion_and_dgstar_round_trip() {
        let d = DiffusionCurve {
            d: vec![0.1, 0.25, 1.0 / 3.0],
            provenance: Provenance::ClosedFormHdim,
        };
        let mut buf = Vec::new();
        write_diffusion(&mut buf, &d).unwrap();
        assert_eq!(read_diffusion(buf.as_slice()).unwrap(), d);

        let g: [Vec<f64>; 6] = std::array::from_fn(|a| vec![0.0, a as f64 * 0.1]);
        let mut buf = Vec::new();
        write_dgstar(&mut buf, &g).unwrap();
        assert_eq!(read_dgstar(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn bad_rows_report_their_line() {
        let text = "instrument,session_id,t,pi,epsilon,gap,mid_before\nX,0,0,MO0,1,0,100\nX,0,1,XYZ,1,0,100\n";
        match read_events(text.as_bytes(), 1.0) {
            Err(ImpactError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }
}
