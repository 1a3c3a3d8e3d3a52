//! Passive full disclosure and tag cloning.

use thiserror::Error;

use super::{recover_key, AttackKind, AttackReport, Scenario};
use crate::protocol::{
    compute_b, next_pair, run_honest_session, NonceSource, PairState, ProtocolError, ReaderState,
    SessionOutcome, SessionTranscript, TagState,
};
use crate::word::Word;

/// Eavesdrops sessions `n` and `n+1` and recovers `K_{n+1}`; the report is
/// checked against the key the tag actually used in session `n+1`.
pub fn full_disclosure_on<S: NonceSource + ?Sized>(
    reader: &mut ReaderState,
    tag: &mut TagState,
    nonces: &mut S,
) -> Result<AttackReport, ProtocolError> {
    let first = run_honest_session(reader, tag, nonces, 0)?;
    let truth = tag.current.key;
    let second = run_honest_session(reader, tag, nonces, 1)?;

    let mut report = AttackReport::new(AttackKind::FullDisclosure);
    if let (Some(a), Some(b), Some(idt)) = (first.a, first.b, second.presented_idts.first()) {
        let key = recover_key(&a, &b, idt);
        report.recovered_key = Some(key);
        report.success = key == truth;
    }
    Ok(report)
}

pub fn full_disclosure_trial(word_len: u32, seed: u64, trial: u64) -> Result<AttackReport, ProtocolError> {
    let mut sc = Scenario::new(word_len, seed, trial)?;
    full_disclosure_on(&mut sc.reader, &mut sc.tag, &mut sc.nonces)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CloneError {
    #[error("observed sessions are incomplete")]
    IncompleteObservation,
    #[error("B check failed: recovered key and nonce do not reproduce B")]
    BCheckFailed,
}

/// What the cloner derives from two eavesdropped sessions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CloneClaim {
    pub key: Word,
    pub nonce: Word,
    pub pair: PairState,
}

impl CloneClaim {
    /// A blank tag loaded with the cloned pair. The static ID is never on
    /// the air, so it is left zero.
    pub fn blank_tag(&self) -> TagState {
        TagState::new(Word::zero(self.key.len()), self.pair)
    }
}

/// Derives the tag's post-session-`n+1` pair from the traffic of sessions
/// `n` (`IDT, A, B`) and `n+1` (`IDT, A, B`).
pub fn clone_from_observations(
    session_n: &SessionTranscript,
    session_next: &SessionTranscript,
) -> Result<CloneClaim, CloneError> {
    let (Some(a_n), Some(b_n)) = (session_n.a, session_n.b) else {
        return Err(CloneError::IncompleteObservation);
    };
    let (Some(&idt_next), Some(a_next), Some(b_next)) = (
        session_next.presented_idts.first(),
        session_next.a,
        session_next.b,
    ) else {
        return Err(CloneError::IncompleteObservation);
    };
    let key = recover_key(&a_n, &b_n, &idt_next);
    let nonce = key ^ a_next;
    if compute_b(&key, &nonce) != b_next {
        return Err(CloneError::BCheckFailed);
    }
    let pair = next_pair(
        &PairState {
            idt: idt_next,
            key,
        },
        &nonce,
    );
    Ok(CloneClaim { key, nonce, pair })
}

/// Eavesdrop two sessions, build a clone, and let the clone authenticate to
/// the genuine reader.
pub fn clone_trial(word_len: u32, seed: u64, trial: u64) -> Result<AttackReport, ProtocolError> {
    let mut sc = Scenario::new(word_len, seed, trial)?;
    let s0 = sc.take_session();
    let first = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, s0)?;
    let s1 = sc.take_session();
    let second = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, s1)?;

    let mut report = AttackReport::new(AttackKind::Clone);
    let claim = match clone_from_observations(&first, &second) {
        Ok(claim) => claim,
        Err(CloneError::BCheckFailed) => {
            report.b_check = Some(false);
            return Ok(report);
        }
        Err(CloneError::IncompleteObservation) => return Ok(report),
    };
    report.b_check = Some(true);
    report.recovered_key = Some(claim.key);
    report.recovered_nonce = Some(claim.nonce);
    report.cloned_idt = Some(claim.pair.idt);
    report.cloned_key = Some(claim.pair.key);

    // ground truth: the genuine tag used `previous` in session n+1
    let true_nonce = second.a.map(|a| a ^ sc.tag.previous.key);
    let matches_truth = claim.key == sc.tag.previous.key
        && Some(claim.nonce) == true_nonce
        && claim.pair == sc.tag.current;

    let mut clone = claim.blank_tag();
    let s2 = sc.take_session();
    let t = run_honest_session(&mut sc.reader, &mut clone, &mut sc.nonces, s2)?;
    report.success = matches_truth && t.outcome == SessionOutcome::MutualSuccess;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::FixedNonces;

    fn w8(v: u128) -> Word {
        Word::new(v, 8).unwrap()
    }

    #[test]
    fn disclosure_worked_example_l8() {
        let mut tag = TagState::new(w8(0x01), PairState { idt: w8(0x10), key: w8(0xC5) });
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        let mut nonces = FixedNonces::new([w8(0x36), w8(0x00)]);
        let r = full_disclosure_on(&mut reader, &mut tag, &mut nonces).unwrap();
        assert!(r.success);
        assert_eq!(r.recovered_key, Some(w8(0x6A)));
    }

    #[test]
    fn clone_nonce_recovery_is_xor_cancellation() {
        let key = w8(0x6A);
        let n = w8(0x5D);
        assert_eq!(key ^ (key ^ n), n);
    }

    #[test]
    fn clone_authenticates() {
        for trial in 0..200 {
            let r = clone_trial(128, 9, trial).unwrap();
            assert!(r.success, "{r:?}");
            assert_eq!(r.b_check, Some(true));
        }
    }

    #[test]
    fn corrupted_observation_fails_b_check() {
        let mut sc = Scenario::new(128, 1, 0).unwrap();
        let first = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, 0).unwrap();
        let mut second = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, 1).unwrap();
        second.b = second.b.map(|b| b ^ Word::from_bits(128, &[3]));
        assert_eq!(
            clone_from_observations(&first, &second),
            Err(CloneError::BCheckFailed)
        );
        second.a = None;
        assert_eq!(
            clone_from_observations(&first, &second),
            Err(CloneError::IncompleteObservation)
        );
    }
}
