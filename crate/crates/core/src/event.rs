//! Order-book event taxonomy, classification of raw book updates into signed
//! events, and structural validation of event streams.
//!
//! All prices are expressed in ticks. Gaps are stored in midquote units (half
//! the same-side price-level distance), so the mid jump of a price-changing
//! event is exactly `epsilon * gap`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ImpactError, Result};
use crate::par;

/// Tolerance (ticks) used when checking the return identity of a stream.
pub const RETURN_TOLERANCE: f64 = 1e-9;

const GRID_TOLERANCE: f64 = 1e-9;

/// The six event types. The `P` suffix marks price-changing events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    MO0,
    MOP,
    CA0,
    CAP,
    LO0,
    LOP,
}

impl EventType {
    pub const ALL: [EventType; 6] = [
        EventType::MO0,
        EventType::MOP,
        EventType::CA0,
        EventType::CAP,
        EventType::LO0,
        EventType::LOP,
    ];
    pub const PRICE_CHANGING: [EventType; 3] = [EventType::MOP, EventType::CAP, EventType::LOP];
    pub const NEUTRAL: [EventType; 3] = [EventType::MO0, EventType::CA0, EventType::LO0];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> EventType {
        Self::ALL[i]
    }

    #[inline]
    pub fn is_price_changing(self) -> bool {
        matches!(self, EventType::MOP | EventType::CAP | EventType::LOP)
    }

    /// Position within [`EventType::PRICE_CHANGING`], if price-changing.
    #[inline]
    pub fn pc_index(self) -> Option<usize> {
        match self {
            EventType::MOP => Some(0),
            EventType::CAP => Some(1),
            EventType::LOP => Some(2),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::MO0 => "MO0",
            EventType::MOP => "MOP",
            EventType::CA0 => "CA0",
            EventType::CAP => "CAP",
            EventType::LO0 => "LO0",
            EventType::LOP => "LOP",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = ImpactError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "MO0" => Ok(EventType::MO0),
            "MOP" => Ok(EventType::MOP),
            "CA0" => Ok(EventType::CA0),
            "CAP" => Ok(EventType::CAP),
            "LO0" => Ok(EventType::LO0),
            "LOP" => Ok(EventType::LOP),
            other => Err(ImpactError::Parse {
                line: 0,
                reason: format!("unknown event type {other:?}"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Trade,
    Insert,
    Cancel,
}

/// Side of the book touched by an update. A buy market order touches the ask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

/// One raw update at the top of the book, with before/after quotes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookUpdate {
    pub session_id: u32,
    pub seq: u64,
    pub action: Action,
    pub side: Side,
    pub price: f64,
    pub volume: f64,
    /// Volume quoted at the touched best before the update.
    pub outstanding_at_best: f64,
    pub best_bid_before: f64,
    pub best_ask_before: f64,
    pub best_bid_after: f64,
    pub best_ask_after: f64,
    /// Second best level on the touched side, before the update.
    pub second_best_same_side_before: f64,
}

/// A classified order-book event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignedEvent {
    pub session_id: u32,
    pub t: u64,
    pub pi: EventType,
    pub epsilon: i8,
    pub gap: f64,
    pub mid_before: f64,
}

impl SignedEvent {
    /// Instantaneous midquote return: `epsilon * gap` for price-changing
    /// events, zero otherwise.
    #[inline]
    pub fn jump(&self) -> f64 {
        if self.pi.is_price_changing() {
            f64::from(self.epsilon) * self.gap
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: u32,
    pub events: Vec<SignedEvent>,
}

impl Session {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Mid after the last event of the session.
    pub fn close_mid(&self) -> f64 {
        self.events
            .last()
            .map(|e| e.mid_before + e.jump())
            .unwrap_or(f64::NAN)
    }
}

/// Classified events of one instrument, grouped by trading session.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub instrument: String,
    pub tick_size: f64,
    pub sessions: Vec<Session>,
}

impl EventStream {
    /// Groups events by session id, keeping the order of first appearance.
    pub fn from_events(
        instrument: impl Into<String>,
        tick_size: f64,
        events: impl IntoIterator<Item = SignedEvent>,
    ) -> Self {
        let mut sessions: Vec<Session> = Vec::new();
        for e in events {
            match sessions.iter_mut().rev().find(|s| s.id == e.session_id) {
                Some(s) => s.events.push(e),
                None => sessions.push(Session {
                    id: e.session_id,
                    events: vec![e],
                }),
            }
        }
        EventStream {
            instrument: instrument.into(),
            tick_size,
            sessions,
        }
    }

    pub fn n_events(&self) -> usize {
        self.sessions.iter().map(Session::len).sum()
    }

    pub fn shortest_session(&self) -> usize {
        self.sessions.iter().map(Session::len).min().unwrap_or(0)
    }

    pub fn events(&self) -> impl Iterator<Item = &SignedEvent> {
        self.sessions.iter().flat_map(|s| s.events.iter())
    }
}

fn on_grid(x: f64) -> bool {
    x.is_finite() && (x - x.round()).abs() <= GRID_TOLERANCE
}

fn reject(u: &BookUpdate, reason: impl Into<String>) -> ImpactError {
    ImpactError::InvalidUpdate {
        session: u.session_id,
        seq: u.seq,
        reason: reason.into(),
    }
}

/// Classifies one book update. The returned event carries `t = seq`; use
/// [`classify_updates`] to obtain dense event-time indices.
pub fn classify(u: &BookUpdate) -> Result<SignedEvent> {
    let prices = [
        u.price,
        u.best_bid_before,
        u.best_ask_before,
        u.best_bid_after,
        u.best_ask_after,
        u.second_best_same_side_before,
    ];
    if !prices.iter().all(|&p| on_grid(p)) {
        return Err(reject(u, "price not aligned to the tick grid"));
    }
    if u.best_bid_before >= u.best_ask_before || u.best_bid_after >= u.best_ask_after {
        return Err(reject(u, "non-positive spread"));
    }
    if !(u.volume > 0.0 && u.volume.is_finite()) {
        return Err(reject(u, "volume must be strictly positive"));
    }
    if !(u.outstanding_at_best > 0.0 && u.outstanding_at_best.is_finite()) {
        return Err(reject(u, "outstanding volume at best must be strictly positive"));
    }

    // Orientation: `away` is +1 when moving deeper into the touched side
    // (up for the ask, down for the bid).
    let (best_before, best_after, other_before, other_after, away) = match u.side {
        Side::Ask => (u.best_ask_before, u.best_ask_after, u.best_bid_before, u.best_bid_after, 1.0),
        Side::Bid => (u.best_bid_before, u.best_bid_after, u.best_ask_before, u.best_ask_after, -1.0),
    };
    if other_after != other_before {
        return Err(reject(u, "opposite-side best changed"));
    }
    let second_gap = (u.second_best_same_side_before - best_before) * away;
    let mid_before = 0.5 * (u.best_bid_before + u.best_ask_before);

    let (pi, epsilon, gap) = match u.action {
        Action::Trade => {
            let epsilon = match u.side {
                Side::Ask => 1,
                Side::Bid => -1,
            };
            if u.volume < u.outstanding_at_best {
                if best_after != best_before {
                    return Err(reject(u, "partial fill moved the best quote"));
                }
                (EventType::MO0, epsilon, 0.0)
            } else {
                let shift = (best_after - best_before) * away;
                if shift <= 0.0 {
                    return Err(reject(u, "trade volume reached outstanding but best is unchanged"));
                }
                if second_gap <= 0.0 {
                    return Err(reject(u, "second best level is not behind the best"));
                }
                if shift < second_gap {
                    return Err(reject(u, "best moved less than the gap to the second level"));
                }
                // A sweep is one event; its gap is measured to the first surviving level.
                (EventType::MOP, epsilon, 0.5 * shift)
            }
        }
        Action::Cancel => {
            let epsilon = match u.side {
                Side::Bid => -1,
                Side::Ask => 1,
            };
            if u.price != best_before {
                return Err(reject(u, "cancellation away from the best quote"));
            }
            if u.volume > u.outstanding_at_best {
                return Err(reject(u, "cancelled volume exceeds the queue"));
            }
            if u.volume < u.outstanding_at_best {
                if best_after != best_before {
                    return Err(reject(u, "partial cancellation moved the best quote"));
                }
                (EventType::CA0, epsilon, 0.0)
            } else {
                if second_gap <= 0.0 {
                    return Err(reject(u, "second best level is not behind the best"));
                }
                if best_after != u.second_best_same_side_before {
                    return Err(reject(u, "emptied queue but best did not move to the second level"));
                }
                (EventType::CAP, epsilon, 0.5 * second_gap)
            }
        }
        Action::Insert => {
            let epsilon = match u.side {
                Side::Bid => 1,
                Side::Ask => -1,
            };
            // Positive when the order improves on the same-side best.
            let improvement = (best_before - u.price) * away;
            let spread = u.best_ask_before - u.best_bid_before;
            if improvement == 0.0 {
                if best_after != best_before {
                    return Err(reject(u, "limit order at the best moved the quote"));
                }
                (EventType::LO0, epsilon, 0.0)
            } else if improvement < 0.0 {
                return Err(reject(u, "limit order behind the best quote"));
            } else if improvement >= spread {
                return Err(reject(u, "marketable limit order crosses the spread"));
            } else {
                if best_after != u.price {
                    return Err(reject(u, "limit order inside the spread did not set the best"));
                }
                (EventType::LOP, epsilon, 0.5 * improvement)
            }
        }
    };

    Ok(SignedEvent {
        session_id: u.session_id,
        t: u.seq,
        pi,
        epsilon,
        gap,
        mid_before,
    })
}

/// Session trimming applied when building a stream from raw updates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trim {
    /// Events dropped at the start of each session.
    pub head: usize,
    /// Events dropped at the end of each session.
    pub tail: usize,
}

/// Classifies a batch of updates into a stream. Updates are ordered by
/// `(session_id, seq)`; event time is the position in that order after
/// trimming. Sessions left empty by trimming are dropped.
pub fn classify_updates(
    updates: &[BookUpdate],
    instrument: &str,
    tick_size: f64,
    trim: Trim,
) -> Result<EventStream> {
    let mut ordered: Vec<&BookUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| (u.session_id, u.seq));
    let mut groups: Vec<Vec<&BookUpdate>> = Vec::new();
    for u in ordered {
        match groups.last_mut() {
            Some(g) if g[0].session_id == u.session_id => g.push(u),
            _ => groups.push(vec![u]),
        }
    }
    let classified = par::map_slice(&groups, |g| -> Result<Option<Session>> {
        if g.len() <= trim.head + trim.tail {
            return Ok(None);
        }
        let kept = &g[trim.head..g.len() - trim.tail];
        let mut events = Vec::with_capacity(kept.len());
        for (t, u) in kept.iter().enumerate() {
            let mut e = classify(u)?;
            e.t = t as u64;
            events.push(e);
        }
        Ok(Some(Session {
            id: g[0].session_id,
            events,
        }))
    });
    let mut sessions = Vec::with_capacity(classified.len());
    for s in classified {
        if let Some(s) = s? {
            sessions.push(s);
        }
    }
    Ok(EventStream {
        instrument: instrument.to_string(),
        tick_size,
        sessions,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptySession,
    DuplicateSession,
    NonMonotoneTime { previous: u64 },
    BadSign(i8),
    NonFinite,
    NeutralWithGap(f64),
    NonPositiveGap(f64),
    ReturnMismatch { expected: f64, actual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub session: u32,
    pub t: Option<u64>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "session {}", self.session)?;
        if let Some(t) = self.t {
            write!(f, ", t {t}")?;
        }
        match &self.kind {
            ViolationKind::EmptySession => write!(f, ": empty session"),
            ViolationKind::DuplicateSession => write!(f, ": session id appears twice"),
            ViolationKind::NonMonotoneTime { previous } => {
                write!(f, ": event time not increasing (previous {previous})")
            }
            ViolationKind::BadSign(s) => write!(f, ": sign {s} not in {{-1, +1}}"),
            ViolationKind::NonFinite => write!(f, ": non-finite gap or mid"),
            ViolationKind::NeutralWithGap(g) => write!(f, ": neutral event with gap {g}"),
            ViolationKind::NonPositiveGap(g) => write!(f, ": price-changing event with gap {g}"),
            ViolationKind::ReturnMismatch { expected, actual } => {
                write!(f, ": mid change {actual} but epsilon*gap = {expected}")
            }
        }
    }
}

/// Result of [`validate`]; empty iff the stream is well formed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn structural_violations(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for s in &stream.sessions {
        if !seen.insert(s.id) {
            out.push(Violation {
                session: s.id,
                t: None,
                kind: ViolationKind::DuplicateSession,
            });
        }
        if s.events.is_empty() {
            out.push(Violation {
                session: s.id,
                t: None,
                kind: ViolationKind::EmptySession,
            });
        }
        let mut previous: Option<u64> = None;
        for e in &s.events {
            let at = |kind| Violation {
                session: s.id,
                t: Some(e.t),
                kind,
            };
            if let Some(p) = previous {
                if e.t <= p {
                    out.push(at(ViolationKind::NonMonotoneTime { previous: p }));
                }
            }
            previous = Some(e.t);
            if e.epsilon != 1 && e.epsilon != -1 {
                out.push(at(ViolationKind::BadSign(e.epsilon)));
            }
            if !e.gap.is_finite() || !e.mid_before.is_finite() {
                out.push(at(ViolationKind::NonFinite));
            }
        }
    }
    out
}

fn gap_violations(stream: &EventStream) -> Vec<Violation> {
    let mut out = Vec::new();
    for s in &stream.sessions {
        for e in &s.events {
            let kind = if e.pi.is_price_changing() {
                (e.gap <= 0.0).then_some(ViolationKind::NonPositiveGap(e.gap))
            } else {
                (e.gap != 0.0).then_some(ViolationKind::NeutralWithGap(e.gap))
            };
            if let Some(kind) = kind {
                out.push(Violation {
                    session: s.id,
                    t: Some(e.t),
                    kind,
                });
            }
        }
    }
    out
}

fn return_mismatches(session: &Session, returns: &[f64], out: &mut Vec<Violation>) {
    for (e, &r) in session.events.iter().zip(returns) {
        let expected = e.jump();
        if (r - expected).abs() > RETURN_TOLERANCE {
            out.push(Violation {
                session: session.id,
                t: Some(e.t),
                kind: ViolationKind::ReturnMismatch {
                    expected,
                    actual: r,
                },
            });
        }
    }
}

fn session_returns(s: &Session) -> Vec<f64> {
    let close = s.close_mid();
    s.events
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let next = s.events.get(i + 1).map_or(close, |n| n.mid_before);
            next - e.mid_before
        })
        .collect()
}

/// Lists every invariant violation of the stream.
pub fn validate(stream: &EventStream) -> ValidationReport {
    let mut violations = structural_violations(stream);
    violations.extend(gap_violations(stream));
    for s in &stream.sessions {
        let r = session_returns(s);
        return_mismatches(s, &r, &mut violations);
    }
    ValidationReport { violations }
}

/// Per-session midquote returns with the identity check against `epsilon * gap`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub sessions: Vec<Vec<f64>>,
    pub mismatches: Vec<Violation>,
}

impl ReturnSeries {
    pub fn flat(&self) -> Vec<f64> {
        self.sessions.iter().flatten().copied().collect()
    }
}

/// Computes `r_t = mid(t+1) - mid(t)` within sessions; the last event of a
/// session uses the session-closing mid.
pub fn returns_of(stream: &EventStream) -> Result<ReturnSeries> {
    let structural = structural_violations(stream);
    if !structural.is_empty() {
        return Err(ImpactError::InvalidStream(structural));
    }
    let mut mismatches = Vec::new();
    let mut sessions = Vec::with_capacity(stream.sessions.len());
    for s in &stream.sessions {
        let r = session_returns(s);
        return_mismatches(s, &r, &mut mismatches);
        sessions.push(r);
    }
    Ok(ReturnSeries {
        sessions,
        mismatches,
    })
}
