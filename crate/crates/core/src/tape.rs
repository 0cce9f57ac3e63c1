//! Columnar view of an event stream or simulated path used by the estimators.

use crate::event::{EventStream, EventType};

/// One session: event types, signs, gaps and the midquote path.
///
/// `prices` has one more entry than the events: `prices[t]` is the mid just
/// before event `t` and the last entry is the session-closing mid.
#[derive(Debug, Clone, PartialEq)]
pub struct TapeSession {
    pub id: u32,
    pub types: Vec<EventType>,
    pub signs: Vec<i8>,
    pub gaps: Vec<f64>,
    pub prices: Vec<f64>,
}

impl TapeSession {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    #[inline]
    pub fn ret(&self, t: usize) -> f64 {
        self.prices[t + 1] - self.prices[t]
    }

    #[inline]
    pub fn sign(&self, t: usize) -> f64 {
        f64::from(self.signs[t])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Tape {
    pub sessions: Vec<TapeSession>,
}

impl Tape {
    pub fn n_events(&self) -> usize {
        self.sessions.iter().map(TapeSession::len).sum()
    }

    pub fn shortest_session(&self) -> usize {
        self.sessions.iter().map(TapeSession::len).min().unwrap_or(0)
    }

    /// Drops the first `head` events of every session.
    pub fn trimmed(&self, head: usize) -> Tape {
        let sessions = self
            .sessions
            .iter()
            .map(|s| {
                let h = head.min(s.len());
                TapeSession {
                    id: s.id,
                    types: s.types[h..].to_vec(),
                    signs: s.signs[h..].to_vec(),
                    gaps: s.gaps[h..].to_vec(),
                    prices: s.prices[h..].to_vec(),
                }
            })
            .collect();
        Tape { sessions }
    }
}

impl From<&EventStream> for Tape {
    fn from(stream: &EventStream) -> Self {
        let sessions = stream
            .sessions
            .iter()
            .map(|s| {
                let mut prices: Vec<f64> = s.events.iter().map(|e| e.mid_before).collect();
                prices.push(s.close_mid());
                TapeSession {
                    id: s.id,
                    types: s.events.iter().map(|e| e.pi).collect(),
                    signs: s.events.iter().map(|e| e.epsilon).collect(),
                    gaps: s.events.iter().map(|e| e.gap).collect(),
                    prices,
                }
            })
            .collect();
        Tape { sessions }
    }
}
