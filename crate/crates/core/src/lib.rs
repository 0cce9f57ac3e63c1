//! Calibration and validation of order-book impact models.
//!
//! The crate turns classified order-book events into empirical correlation
//! and response statistics, calibrates the transient impact model (TIM) and
//! the history-dependent impact model (HDIM) on them, predicts price
//! diffusion, and simulates both models for validation.

pub mod compare;
pub mod error;
pub mod estimators;
pub mod event;
pub mod hdim;
pub mod io;
pub mod linalg;
pub mod par;
pub mod sim;
pub mod tape;
pub mod tim;

pub use error::{ImpactError, Result};
pub use event::{EventStream, EventType, SignedEvent};
pub use tape::Tape;
