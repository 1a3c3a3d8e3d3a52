//! Desynchronization: the man-in-the-middle nonce split and the bit-flip
//! replay against the tag's previous pair.

use rand::Rng;

use super::{recover_key, AttackKind, AttackReport, Scenario};
use crate::channel::{Channel, Disposition, MessageLabel};
use crate::protocol::{
    compute_a, compute_b, compute_c, run_honest_session, run_session, ProtocolError,
    SessionOutcome, SessionTranscript, TagSession, TagState,
};
use crate::word::{weight_two_words, Word};

/// Safety net on Step-1 restarts; about two rounds are expected.
pub const DEFAULT_C1_ROUND_CAP: u32 = 64;

/// How the man-in-the-middle picks the nonce it feeds the tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForgeMode {
    /// A fresh nonce, redrawn until it differs from the reader's.
    Fresh,
    /// Reuse the reader's own nonce (degenerate case: no desync).
    ReuseGenuine,
}

/// Active attacker for session `n+1`. Knows `A_n, B_n` from session `n`;
/// learns `K_{n+1}` from the pseudonym, swaps the reader's `{A, B}` for its
/// own under `N*`, and answers the reader with a `C` forged under the
/// reader's nonce.
pub struct MitmAttacker<'r, R: Rng> {
    a_n: Word,
    b_n: Word,
    session: u64,
    rng: &'r mut R,
    mode: ForgeMode,
    pub key: Option<Word>,
    pub genuine_nonce: Option<Word>,
    pub forged_nonce: Option<Word>,
    pub b_check: Option<bool>,
}

impl<'r, R: Rng> MitmAttacker<'r, R> {
    pub fn new(observed: &SessionTranscript, session: u64, rng: &'r mut R, mode: ForgeMode) -> Option<Self> {
        Some(MitmAttacker {
            a_n: observed.a?,
            b_n: observed.b?,
            session,
            rng,
            mode,
            key: None,
            genuine_nonce: None,
            forged_nonce: None,
            b_check: None,
        })
    }
}

impl<R: Rng> Channel for MitmAttacker<'_, R> {
    fn transmit(&mut self, session: u64, label: MessageLabel, payload: &Word) -> Disposition {
        if session != self.session {
            return Disposition::Delivered;
        }
        match label {
            MessageLabel::Idt => {
                if self.key.is_none() {
                    self.key = Some(recover_key(&self.a_n, &self.b_n, payload));
                }
                Disposition::Delivered
            }
            MessageLabel::A => {
                let Some(key) = self.key else {
                    return Disposition::Delivered;
                };
                let genuine = key ^ payload;
                let forged = match self.mode {
                    ForgeMode::ReuseGenuine => genuine,
                    ForgeMode::Fresh => loop {
                        let n = Word::random(key.len(), self.rng);
                        if n != genuine {
                            break n;
                        }
                    },
                };
                self.genuine_nonce = Some(genuine);
                self.forged_nonce = Some(forged);
                Disposition::Replaced(compute_a(&key, &forged))
            }
            MessageLabel::B => match (self.key, self.genuine_nonce, self.forged_nonce) {
                (Some(key), Some(genuine), Some(forged)) => {
                    self.b_check = Some(compute_b(&key, &genuine) == *payload);
                    Disposition::Replaced(compute_b(&key, &forged))
                }
                _ => Disposition::Delivered,
            },
            MessageLabel::C => match (self.key, self.genuine_nonce) {
                (Some(key), Some(genuine)) => Disposition::Replaced(compute_c(&key, &genuine)),
                _ => Disposition::Delivered,
            },
        }
    }
}

pub fn mitm_trial(word_len: u32, seed: u64, trial: u64, follow_ups: u32) -> Result<AttackReport, ProtocolError> {
    mitm_trial_with(word_len, seed, trial, follow_ups, ForgeMode::Fresh)
}

pub fn mitm_trial_with(
    word_len: u32,
    seed: u64,
    trial: u64,
    follow_ups: u32,
    mode: ForgeMode,
) -> Result<AttackReport, ProtocolError> {
    let mut sc = Scenario::new(word_len, seed, trial)?;
    let s0 = sc.take_session();
    let observed = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, s0)?;
    let true_key = sc.tag.current.key;

    let s1 = sc.take_session();
    let mut attacker = MitmAttacker::new(&observed, s1, &mut sc.adversary, mode)
        .expect("honest session carries A and B");
    let t = run_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, &mut attacker, s1)?;

    let mut report = AttackReport::new(AttackKind::DesyncMitm);
    report.recovered_key = attacker.key;
    report.recovered_nonce = attacker.genuine_nonce;
    report.b_check = attacker.b_check;
    let key_ok = attacker.key == Some(true_key);
    let both_accepted = t.outcome == SessionOutcome::MutualSuccess;
    let synchronized = sc.synchronized();
    report.tag_reader_synchronized = Some(synchronized);
    let failures = sc.follow_up(follow_ups)?;
    report.follow_up_failures = Some(failures);
    report.follow_up_sessions = Some(follow_ups);
    report.success = key_ok
        && report.b_check == Some(true)
        && both_accepted
        && !synchronized
        && failures == follow_ups;
    Ok(report)
}

/// The attacker's handle on a tag: play the reader for one session, refuse
/// the tag's current pseudonym so it falls back to its previous pair, then
/// send `{A, B}`. Returns the tag's `C` if it accepted.
pub trait TagProbe {
    fn probe(&mut self, a: &Word, b: &Word) -> Option<Word>;
}

/// [`TagProbe`] over a simulated tag. Audits that every rejected probe left
/// the tag's memory untouched.
pub struct AirTag<'t> {
    tag: &'t mut TagState,
    pub probes: u64,
    pub violations: u64,
}

impl<'t> AirTag<'t> {
    pub fn new(tag: &'t mut TagState) -> Self {
        AirTag {
            tag,
            probes: 0,
            violations: 0,
        }
    }
}

impl TagProbe for AirTag<'_> {
    fn probe(&mut self, a: &Word, b: &Word) -> Option<Word> {
        self.probes += 1;
        let snapshot = *self.tag;
        let (mut session, _current_idt) = TagSession::start(self.tag);
        let _previous_idt = session.fall_back();
        let reply = session.challenge(a, b);
        if reply.is_none() && *self.tag != snapshot {
            self.violations += 1;
        }
        reply
    }
}

/// The eavesdropped session the bit-flip attack replays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitflipCapture {
    pub idt: Word,
    pub a: Word,
    pub b: Word,
    pub c: Word,
}

impl BitflipCapture {
    pub fn from_transcript(t: &SessionTranscript) -> Option<Self> {
        Some(BitflipCapture {
            idt: *t.presented_idts.last()?,
            a: t.a?,
            b: t.b?,
            c: t.c?,
        })
    }

    pub fn word_len(&self) -> u32 {
        self.a.len()
    }
}

/// One round: fixed `C1`, every weight-2 `C2` in order until the tag
/// answers. Returns the accepted `C2` (if any) and the probes spent.
pub fn bitflip_round(capture: &BitflipCapture, c1: &Word, tag: &mut dyn TagProbe) -> (Option<Word>, u64) {
    let a = capture.a ^ c1;
    let mut trials = 0;
    for c2 in weight_two_words(capture.word_len()) {
        trials += 1;
        if tag.probe(&a, &(capture.b ^ c2)).is_some() {
            return (Some(c2), trials);
        }
    }
    (None, trials)
}

pub fn random_weight_two<R: Rng + ?Sized>(len: u32, rng: &mut R) -> Word {
    let lo = rng.gen_range(0..len);
    let mut hi = rng.gen_range(0..len - 1);
    if hi >= lo {
        hi += 1;
    }
    Word::from_bits(len, &[lo, hi])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BitflipClaim {
    pub c1_rounds: u32,
    pub c2_trials: u64,
    /// Winning `(C1, C2)`.
    pub winner: Option<(Word, Word)>,
}

/// Rounds of fresh `C1` until some `C2` is accepted or `round_cap` is hit.
pub fn bitflip_attack<R: Rng + ?Sized>(
    capture: &BitflipCapture,
    tag: &mut dyn TagProbe,
    rng: &mut R,
    round_cap: u32,
) -> BitflipClaim {
    let mut claim = BitflipClaim {
        c1_rounds: 0,
        c2_trials: 0,
        winner: None,
    };
    while claim.c1_rounds < round_cap {
        claim.c1_rounds += 1;
        let c1 = random_weight_two(capture.word_len(), rng);
        let (c2, trials) = bitflip_round(capture, &c1, tag);
        claim.c2_trials += trials;
        if let Some(c2) = c2 {
            claim.winner = Some((c1, c2));
            break;
        }
    }
    claim
}

pub fn bitflip_trial(
    word_len: u32,
    seed: u64,
    trial: u64,
    round_cap: u32,
    follow_ups: u32,
) -> Result<AttackReport, ProtocolError> {
    let mut sc = Scenario::new(word_len, seed, trial)?;
    let s0 = sc.take_session();
    let observed = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, s0)?;
    let capture = BitflipCapture::from_transcript(&observed).expect("honest session is complete");
    // ground truth nonce of session n, via the key the tag used
    let nonce = capture.a ^ sc.tag.previous.key;

    let mut air = AirTag::new(&mut sc.tag);
    let claim = bitflip_attack(&capture, &mut air, &mut sc.adversary, round_cap);
    let violations = air.violations;

    let mut report = AttackReport::new(AttackKind::DesyncBitflip);
    report.c1_rounds = Some(claim.c1_rounds);
    report.c2_trials = Some(claim.c2_trials);
    report.state_violations = Some(violations);
    let synchronized = sc.synchronized();
    report.tag_reader_synchronized = Some(synchronized);
    if let Some((c1, c2)) = claim.winner {
        report.c1 = Some(c1);
        report.c2 = Some(c2);
        let flipped = nonce ^ c1;
        report.c2_predicted = Some(c2 == c1.rotate_left(flipped.hamming_weight()));
        report.chance_collision = Some(flipped.hamming_weight() != nonce.hamming_weight());
    }
    let failures = sc.follow_up(follow_ups)?;
    report.follow_up_failures = Some(failures);
    report.follow_up_sessions = Some(follow_ups);
    report.success =
        claim.winner.is_some() && violations == 0 && !synchronized && failures == follow_ups;
    Ok(report)
}

/// A single independent `C1` round against a fresh capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundTrial {
    pub admitted: bool,
    pub hw_preserved: bool,
    pub trials: u64,
    pub violations: u64,
}

pub fn bitflip_round_trial(word_len: u32, seed: u64, trial: u64) -> Result<RoundTrial, ProtocolError> {
    let mut sc = Scenario::new(word_len, seed, trial)?;
    let observed = run_honest_session(&mut sc.reader, &mut sc.tag, &mut sc.nonces, 0)?;
    let capture = BitflipCapture::from_transcript(&observed).expect("honest session is complete");
    let nonce = capture.a ^ sc.tag.previous.key;
    let c1 = random_weight_two(word_len, &mut sc.adversary);
    let mut air = AirTag::new(&mut sc.tag);
    let (c2, trials) = bitflip_round(&capture, &c1, &mut air);
    Ok(RoundTrial {
        admitted: c2.is_some(),
        hw_preserved: (nonce ^ c1).hamming_weight() == nonce.hamming_weight(),
        trials,
        violations: air.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{PairSlot, PairState};

    #[test]
    fn mitm_desynchronizes() {
        for trial in 0..100 {
            let r = mitm_trial(128, 5, trial, 3).unwrap();
            assert!(r.success, "{r:?}");
            assert_eq!(r.tag_reader_synchronized, Some(false));
            assert_eq!(r.follow_up_failures, Some(3));
        }
    }

    #[test]
    fn mitm_with_genuine_nonce_keeps_sync() {
        let r = mitm_trial_with(128, 5, 0, 3, ForgeMode::ReuseGenuine).unwrap();
        assert!(!r.success);
        assert_eq!(r.tag_reader_synchronized, Some(true));
        assert_eq!(r.follow_up_failures, Some(0));
    }

    #[test]
    fn random_weight_two_is_uniform_pair() {
        let mut rng = crate::seed::trial_rng(1, 0, crate::seed::Stream::Adversary);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..5000 {
            let w = random_weight_two(8, &mut rng);
            assert_eq!(w.hamming_weight(), 2);
            seen.insert(w);
        }
        assert_eq!(seen.len(), 28);
    }

    // Exhaustive over all nonces at L=16: whenever hw(N ^ C1) = hw(N), the
    // tag accepts exactly C2 = Rot(C1, hw(N)).
    #[test]
    fn success_condition_exhaustive_l16() {
        let len = 16;
        let key = Word::new(0x9c3b, len).unwrap();
        let c1 = Word::from_bits(len, &[2, 11]);
        for n in 0..(1u128 << len) {
            let nonce = Word::new(n, len).unwrap();
            let flipped = nonce ^ c1;
            if flipped.hamming_weight() != nonce.hamming_weight() {
                continue;
            }
            let predicted = c1.rotate_left(nonce.hamming_weight());
            let a = compute_a(&key, &nonce) ^ c1;
            let b = compute_b(&key, &nonce) ^ predicted;
            let mut tag = TagState::new(Word::zero(len), PairState { idt: Word::zero(len), key });
            assert!(tag.respond(PairSlot::Current, &a, &b).is_some(), "n={n:04x}");
        }
    }

    #[test]
    fn bitflip_at_l16() {
        for trial in 0..50 {
            let r = bitflip_trial(16, 3, trial, DEFAULT_C1_ROUND_CAP, 3).unwrap();
            assert!(r.success, "{r:?}");
            assert_eq!(r.state_violations, Some(0));
            let rounds = r.c1_rounds.unwrap() as u64;
            assert!(r.c2_trials.unwrap() <= rounds * 120);
            assert!(r.c2_trials.unwrap() > (rounds - 1) * 120);
        }
    }

    #[test]
    fn round_cap_reports_failure() {
        struct Deaf;
        impl TagProbe for Deaf {
            fn probe(&mut self, _: &Word, _: &Word) -> Option<Word> {
                None
            }
        }
        let z = Word::zero(16);
        let capture = BitflipCapture { idt: z, a: z, b: z, c: z };
        let mut rng = crate::seed::trial_rng(0, 0, crate::seed::Stream::Adversary);
        let claim = bitflip_attack(&capture, &mut Deaf, &mut rng, 3);
        assert_eq!(claim.c1_rounds, 3);
        assert_eq!(claim.c2_trials, 360);
        assert_eq!(claim.winner, None);
    }
}
