//! Simulator for the UMA-RFID ultralightweight mutual-authentication
//! protocol, with an adversary framework and executable attacks.
//!
//! * [`word`] — fixed-width bit vectors and `Rot(A, B)`.
//! * [`protocol`] — tag, reader and database state machines.
//! * [`channel`] — message interception and the transcript text format.
//! * [`adversary`] — Execute/Send/Test queries and the untraceability game.
//! * [`attacks`] — traceability, full disclosure, cloning and two
//!   desynchronization attacks.
//! * [`harness`] — seeded Monte Carlo trials, summaries and report output.

pub mod adversary;
pub mod attacks;
pub mod channel;
pub mod harness;
pub mod protocol;
pub mod seed;
pub mod stats;
pub mod word;

pub use word::{ProtocolParams, Word, WordError};
