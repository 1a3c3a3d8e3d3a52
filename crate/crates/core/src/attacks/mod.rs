//! The five attacks against UMA-RFID.
//!
//! Attacker code in this module only ever sees channel traffic. Each
//! `*_trial` function builds a fresh [`Scenario`], runs the attacker against
//! it, and then checks the attacker's claims against the hidden tag and
//! reader state before setting [`AttackReport::success`].

mod clone;
mod desync;
mod traceability;

pub use clone::{
    clone_from_observations, clone_trial, full_disclosure_on, full_disclosure_trial, CloneClaim,
    CloneError,
};
pub use desync::{
    bitflip_attack, bitflip_round, bitflip_round_trial, bitflip_trial, mitm_trial,
    mitm_trial_with, random_weight_two, AirTag, BitflipCapture, BitflipClaim, ForgeMode,
    MitmAttacker, RoundTrial, TagProbe, DEFAULT_C1_ROUND_CAP,
};
pub use traceability::{attack_traceability, TraceabilityAttack};

use std::fmt;

use serde::Serialize;

use crate::protocol::{
    run_honest_session, ProtocolError, ReaderState, SessionOutcome, TagState,
};
use crate::seed::{trial_rng, Stream, TrialRng};
use crate::word::Word;

/// Full disclosure from two consecutive sessions: `A_n ^ B_n ^ IDT_{n+1}`
/// equals the key `K_{n+1}` in use from session `n+1` on.
#[inline]
pub fn recover_key(a_n: &Word, b_n: &Word, idt_next: &Word) -> Word {
    *a_n ^ b_n ^ idt_next
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    FullDisclosure,
    Clone,
    DesyncMitm,
    DesyncBitflip,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [
        AttackKind::FullDisclosure,
        AttackKind::Clone,
        AttackKind::DesyncMitm,
        AttackKind::DesyncBitflip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::FullDisclosure => "full-disclosure",
            AttackKind::Clone => "clone",
            AttackKind::DesyncMitm => "desync-mitm",
            AttackKind::DesyncBitflip => "desync-bitflip",
        }
    }

    pub fn from_name(name: &str) -> Option<AttackKind> {
        AttackKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Result of one attack trial. Every field is always present so that CSV
/// output has a fixed header; fields an attack does not use are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AttackReport {
    pub attack: AttackKind,
    pub success: bool,
    pub recovered_key: Option<Word>,
    pub recovered_nonce: Option<Word>,
    pub cloned_idt: Option<Word>,
    pub cloned_key: Option<Word>,
    /// Outcome of the attacker's `B` consistency check.
    pub b_check: Option<bool>,
    pub c1_rounds: Option<u32>,
    pub c2_trials: Option<u64>,
    pub c1: Option<Word>,
    pub c2: Option<Word>,
    /// Winning `C2` equals `Rot(C1, hw(N ^ C1))`.
    pub c2_predicted: Option<bool>,
    /// Success in a round where `hw(N ^ C1) != hw(N)`.
    pub chance_collision: Option<bool>,
    /// Rejected probes that changed the tag (must be zero).
    pub state_violations: Option<u64>,
    pub tag_reader_synchronized: Option<bool>,
    /// Follow-up honest sessions that ended in `IdentificationFailed`.
    pub follow_up_failures: Option<u32>,
    pub follow_up_sessions: Option<u32>,
}

impl AttackReport {
    pub fn new(attack: AttackKind) -> Self {
        AttackReport {
            attack,
            success: false,
            recovered_key: None,
            recovered_nonce: None,
            cloned_idt: None,
            cloned_key: None,
            b_check: None,
            c1_rounds: None,
            c2_trials: None,
            c1: None,
            c2: None,
            c2_predicted: None,
            chance_collision: None,
            state_violations: None,
            tag_reader_synchronized: None,
            follow_up_failures: None,
            follow_up_sessions: None,
        }
    }
}

/// A genuine reader with one registered tag, plus the per-trial random
/// streams for reader nonces and adversary choices.
pub struct Scenario {
    pub reader: ReaderState,
    pub tag: TagState,
    pub nonces: TrialRng,
    pub adversary: TrialRng,
    next_session: u64,
}

impl Scenario {
    pub fn new(word_len: u32, seed: u64, trial: u64) -> Result<Self, ProtocolError> {
        crate::word::validate_len(word_len)?;
        let tag = TagState::random(word_len, &mut trial_rng(seed, trial, Stream::Setup));
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry())?;
        Ok(Scenario {
            reader,
            tag,
            nonces: trial_rng(seed, trial, Stream::Reader),
            adversary: trial_rng(seed, trial, Stream::Adversary),
            next_session: 0,
        })
    }

    pub fn take_session(&mut self) -> u64 {
        let s = self.next_session;
        self.next_session += 1;
        s
    }

    /// Whether either of the tag's pairs matches the reader's record.
    pub fn synchronized(&self) -> bool {
        self.reader
            .entries()
            .iter()
            .any(|e| self.tag.holds(&e.pair()))
    }

    /// Runs `count` honest sessions and returns how many failed identification.
    pub fn follow_up(&mut self, count: u32) -> Result<u32, ProtocolError> {
        let mut failures = 0;
        for _ in 0..count {
            let s = self.take_session();
            let t = run_honest_session(&mut self.reader, &mut self.tag, &mut self.nonces, s)?;
            if t.outcome == SessionOutcome::IdentificationFailed {
                failures += 1;
            }
        }
        Ok(failures)
    }
}
