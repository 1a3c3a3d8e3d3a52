//! Tag, reader and back-end database for the UMA-RFID protocol.
//!
//! A session runs in three transmissions after the reader's request:
//!
//! 1. `T -> R: IDT` — the tag's pseudonym.
//! 2. `R -> T: A, B` with `A = K ^ N` and `B = Rot(K,K) ^ Rot(N,N)`.
//! 3. `T -> R: C = (K | Rot(N,N)) ^ (Rot(K,K) & N)`.
//!
//! Both sides then move to `IDT' = K ^ Rot(N,N)`, `K' = Rot(K,K) ^ N`. The
//! tag updates as soon as it sends `C`; the reader only once it has checked
//! `C`. The tag keeps the pair it just used as `previous`, and if the reader
//! does not recognise its current pseudonym it retries once with the
//! previous one.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{Channel, ChannelEvent, MessageLabel};
use crate::word::{Word, WordError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Word(#[from] WordError),
    #[error("pseudonym {0} is already registered")]
    DuplicatePseudonym(Word),
    #[error("reader already has a session in flight")]
    PendingSessionExists,
    #[error("reader has no session in flight")]
    NoPendingSession,
}

/// `A = K ^ N`.
#[inline]
pub fn compute_a(key: &Word, nonce: &Word) -> Word {
    *key ^ nonce
}

/// `B = Rot(K,K) ^ Rot(N,N)`.
#[inline]
pub fn compute_b(key: &Word, nonce: &Word) -> Word {
    key.self_rot() ^ nonce.self_rot()
}

/// `C = (K | Rot(N,N)) ^ (Rot(K,K) & N)`.
#[inline]
pub fn compute_c(key: &Word, nonce: &Word) -> Word {
    (*key | nonce.self_rot()) ^ (key.self_rot() & nonce)
}

/// A pseudonym and the key shared under it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairState {
    pub idt: Word,
    pub key: Word,
}

impl PairState {
    pub fn new(idt: Word, key: Word) -> Result<Self, WordError> {
        if idt.len() != key.len() {
            return Err(WordError::LengthMismatch {
                left: idt.len(),
                right: key.len(),
            });
        }
        Ok(PairState { idt, key })
    }

    pub fn random<R: Rng + ?Sized>(len: u32, rng: &mut R) -> Self {
        PairState {
            idt: Word::random(len, rng),
            key: Word::random(len, rng),
        }
    }

    pub fn word_len(&self) -> u32 {
        self.key.len()
    }
}

/// The updating phase: `IDT' = K ^ Rot(N,N)`, `K' = Rot(K,K) ^ N`. The old
/// pseudonym does not enter the update.
#[inline]
pub fn next_pair(used: &PairState, nonce: &Word) -> PairState {
    PairState {
        idt: used.key ^ nonce.self_rot(),
        key: used.key.self_rot() ^ nonce,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PairSlot {
    Current,
    Previous,
}

/// Tag memory: static ID plus the current and previous pairs (5 words).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagState {
    pub id: Word,
    pub current: PairState,
    pub previous: PairState,
}

impl TagState {
    /// A tag that has never updated; its previous pair equals its current one.
    pub fn new(id: Word, pair: PairState) -> Self {
        TagState {
            id,
            current: pair,
            previous: pair,
        }
    }

    pub fn random<R: Rng + ?Sized>(len: u32, rng: &mut R) -> Self {
        let id = Word::random(len, rng);
        TagState::new(id, PairState::random(len, rng))
    }

    pub fn word_len(&self) -> u32 {
        self.id.len()
    }

    pub fn pair(&self, slot: PairSlot) -> PairState {
        match slot {
            PairSlot::Current => self.current,
            PairSlot::Previous => self.previous,
        }
    }

    /// The pseudonym the tag backscatters. No state change.
    pub fn present(&self, use_previous: bool) -> Word {
        if use_previous {
            self.previous.idt
        } else {
            self.current.idt
        }
    }

    /// Handles `{A, B}` under the selected pair. On a valid `B` the tag
    /// answers `C` and updates; otherwise it stays silent and unchanged.
    pub fn respond(&mut self, slot: PairSlot, a: &Word, b: &Word) -> Option<Word> {
        let used = self.pair(slot);
        let nonce = *a ^ used.key;
        if compute_b(&used.key, &nonce) != *b {
            return None;
        }
        let c = compute_c(&used.key, &nonce);
        self.previous = used;
        self.current = next_pair(&used, &nonce);
        Some(c)
    }

    /// Memory layout: `[ID, IDT, K, IDT_old, K_old]`.
    pub fn to_words(&self) -> [Word; 5] {
        [
            self.id,
            self.current.idt,
            self.current.key,
            self.previous.idt,
            self.previous.key,
        ]
    }

    /// The database record a reader needs to authenticate this tag now.
    pub fn database_entry(&self) -> DatabaseEntry {
        DatabaseEntry {
            idt: self.current.idt,
            key: self.current.key,
            id: self.id,
        }
    }

    pub fn holds(&self, pair: &PairState) -> bool {
        self.current == *pair || self.previous == *pair
    }
}

/// Per-tag back-end record (3 words).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatabaseEntry {
    pub idt: Word,
    pub key: Word,
    pub id: Word,
}

impl DatabaseEntry {
    pub fn pair(&self) -> PairState {
        PairState {
            idt: self.idt,
            key: self.key,
        }
    }

    pub fn to_words(&self) -> [Word; 3] {
        [self.idt, self.key, self.id]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EntryHandle(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingSession {
    pub entry: EntryHandle,
    pub nonce: Word,
    pub expected_c: Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReaderReply {
    Challenge { a: Word, b: Word },
    Unrecognized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Accept,
    Reject,
}

/// Source of reader nonces. Any RNG works; [`FixedNonces`] scripts them.
pub trait NonceSource {
    fn next_nonce(&mut self, len: u32) -> Word;
}

impl<R: RngCore + ?Sized> NonceSource for R {
    fn next_nonce(&mut self, len: u32) -> Word {
        Word::random(len, self)
    }
}

/// Replays a fixed list of nonces. Panics when exhausted.
#[derive(Debug, Clone, Default)]
pub struct FixedNonces(VecDeque<Word>);

impl FixedNonces {
    pub fn new(nonces: impl IntoIterator<Item = Word>) -> Self {
        FixedNonces(nonces.into_iter().collect())
    }
}

impl NonceSource for FixedNonces {
    fn next_nonce(&mut self, len: u32) -> Word {
        let n = self.0.pop_front().expect("fixed nonce list exhausted");
        assert_eq!(n.len(), len, "scripted nonce has wrong length");
        n
    }
}

/// Reader together with its back-end database.
#[derive(Debug, Clone, Default)]
pub struct ReaderState {
    entries: Vec<DatabaseEntry>,
    index: HashMap<Word, usize>,
    pending: Option<PendingSession>,
}

impl ReaderState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, entry: DatabaseEntry) -> Result<EntryHandle, ProtocolError> {
        if self.index.contains_key(&entry.idt) {
            return Err(ProtocolError::DuplicatePseudonym(entry.idt));
        }
        let h = self.entries.len();
        self.index.insert(entry.idt, h);
        self.entries.push(entry);
        Ok(EntryHandle(h))
    }

    pub fn lookup(&self, idt: &Word) -> Option<EntryHandle> {
        self.index.get(idt).map(|&i| EntryHandle(i))
    }

    pub fn entry(&self, handle: EntryHandle) -> &DatabaseEntry {
        &self.entries[handle.0]
    }

    pub fn entries(&self) -> &[DatabaseEntry] {
        &self.entries
    }

    pub fn pending(&self) -> Option<&PendingSession> {
        self.pending.as_ref()
    }

    /// Answers a pseudonym: on a hit draws `N` and returns `{A, B}`.
    pub fn begin<S: NonceSource + ?Sized>(
        &mut self,
        idt: &Word,
        nonces: &mut S,
    ) -> Result<ReaderReply, ProtocolError> {
        if self.pending.is_some() {
            return Err(ProtocolError::PendingSessionExists);
        }
        let Some(handle) = self.lookup(idt) else {
            return Ok(ReaderReply::Unrecognized);
        };
        let key = self.entries[handle.0].key;
        let nonce = nonces.next_nonce(key.len());
        if nonce.len() != key.len() {
            return Err(WordError::LengthMismatch {
                left: key.len(),
                right: nonce.len(),
            }
            .into());
        }
        self.pending = Some(PendingSession {
            entry: handle,
            nonce,
            expected_c: compute_c(&key, &nonce),
        });
        Ok(ReaderReply::Challenge {
            a: compute_a(&key, &nonce),
            b: compute_b(&key, &nonce),
        })
    }

    /// Checks `C`; on success the entry advances to the next pair.
    pub fn complete(&mut self, c: &Word) -> Result<Verdict, ProtocolError> {
        let pending = self.pending.take().ok_or(ProtocolError::NoPendingSession)?;
        if *c != pending.expected_c {
            return Ok(Verdict::Reject);
        }
        let i = pending.entry.0;
        let next = next_pair(&self.entries[i].pair(), &pending.nonce);
        // A pseudonym collision with another tag is a 2^-L event; refuse it
        // rather than silently aliasing two entries.
        if let Some(&other) = self.index.get(&next.idt) {
            if other != i {
                return Err(ProtocolError::DuplicatePseudonym(next.idt));
            }
        }
        self.index.remove(&self.entries[i].idt);
        self.index.insert(next.idt, i);
        self.entries[i].idt = next.idt;
        self.entries[i].key = next.key;
        Ok(Verdict::Accept)
    }

    /// Drops the in-flight session (e.g. `C` never arrived).
    pub fn abort(&mut self) {
        self.pending = None;
    }

    pub fn is_synchronized_with(&self, tag: &TagState) -> bool {
        self.lookup(&tag.current.idt)
            .map(|h| self.entry(h).pair() == tag.current)
            .unwrap_or(false)
    }
}

/// Air-interface view of a tag for one session: it presents its current
/// pseudonym, may fall back once to the previous one, then answers `{A, B}`
/// under whichever pair it last presented.
#[derive(Debug)]
pub struct TagSession<'t> {
    tag: &'t mut TagState,
    slot: PairSlot,
}

impl<'t> TagSession<'t> {
    pub fn start(tag: &'t mut TagState) -> (Self, Word) {
        let idt = tag.present(false);
        (
            TagSession {
                tag,
                slot: PairSlot::Current,
            },
            idt,
        )
    }

    /// Reader did not recognise the pseudonym. Returns the previous pseudonym
    /// on the first call, `None` afterwards.
    pub fn fall_back(&mut self) -> Option<Word> {
        match self.slot {
            PairSlot::Current => {
                self.slot = PairSlot::Previous;
                Some(self.tag.present(true))
            }
            PairSlot::Previous => None,
        }
    }

    pub fn slot(&self) -> PairSlot {
        self.slot
    }

    pub fn challenge(self, a: &Word, b: &Word) -> Option<Word> {
        self.tag.respond(self.slot, a, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionOutcome {
    MutualSuccess,
    ReaderRejectedTag,
    TagRejectedReader,
    IdentificationFailed,
    Blocked,
}

/// Everything visible on the channel during one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionTranscript {
    pub session: u64,
    /// Pseudonyms the tag broadcast, in order (one, or two after a fallback).
    pub presented_idts: Vec<Word>,
    /// `A`, `B`, `C` as sent by their originator.
    pub a: Option<Word>,
    pub b: Option<Word>,
    pub c: Option<Word>,
    pub outcome: SessionOutcome,
    pub events: Vec<ChannelEvent>,
}

impl SessionTranscript {
    /// Channel transmissions, counting `{A, B}` as one.
    pub fn transmissions(&self) -> usize {
        let idts = self
            .events
            .iter()
            .filter(|e| e.label == MessageLabel::Idt)
            .count();
        let ab = self
            .events
            .iter()
            .any(|e| matches!(e.label, MessageLabel::A | MessageLabel::B));
        let c = self.events.iter().any(|e| e.label == MessageLabel::C);
        idts + ab as usize + c as usize
    }

    /// The pseudonym the reader finally accepted, if identification succeeded.
    pub fn identified_idt(&self) -> Option<Word> {
        match self.outcome {
            SessionOutcome::IdentificationFailed => None,
            _ if self.a.is_some() => self.presented_idts.last().copied(),
            _ => None,
        }
    }
}

struct Recorder<'c, C: Channel + ?Sized> {
    channel: &'c mut C,
    session: u64,
    events: Vec<ChannelEvent>,
}

impl<C: Channel + ?Sized> Recorder<'_, C> {
    fn send(&mut self, label: MessageLabel, payload: Word) -> Option<Word> {
        let disposition = self.channel.transmit(self.session, label, &payload);
        let event = ChannelEvent {
            session: self.session,
            direction: label.direction(),
            label,
            payload,
            disposition,
        };
        self.events.push(event);
        event.received()
    }
}

/// Runs one full session between `reader` and `tag` through `channel`.
pub fn run_session<S, C>(
    reader: &mut ReaderState,
    tag: &mut TagState,
    nonces: &mut S,
    channel: &mut C,
    session: u64,
) -> Result<SessionTranscript, ProtocolError>
where
    S: NonceSource + ?Sized,
    C: Channel + ?Sized,
{
    let mut rec = Recorder {
        channel,
        session,
        events: Vec::with_capacity(5),
    };
    let mut transcript = SessionTranscript {
        session,
        presented_idts: Vec::with_capacity(2),
        a: None,
        b: None,
        c: None,
        outcome: SessionOutcome::Blocked,
        events: Vec::new(),
    };

    let (mut tag_session, mut idt) = TagSession::start(tag);
    let (a, b) = loop {
        transcript.presented_idts.push(idt);
        let Some(seen) = rec.send(MessageLabel::Idt, idt) else {
            transcript.events = rec.events;
            return Ok(transcript);
        };
        match reader.begin(&seen, nonces)? {
            ReaderReply::Challenge { a, b } => break (a, b),
            ReaderReply::Unrecognized => match tag_session.fall_back() {
                Some(prev) => idt = prev,
                None => {
                    transcript.outcome = SessionOutcome::IdentificationFailed;
                    transcript.events = rec.events;
                    return Ok(transcript);
                }
            },
        }
    };

    transcript.a = Some(a);
    transcript.b = Some(b);
    let a_seen = rec.send(MessageLabel::A, a);
    let b_seen = rec.send(MessageLabel::B, b);
    let (Some(a_seen), Some(b_seen)) = (a_seen, b_seen) else {
        reader.abort();
        transcript.events = rec.events;
        return Ok(transcript);
    };

    let Some(c) = tag_session.challenge(&a_seen, &b_seen) else {
        reader.abort();
        transcript.outcome = SessionOutcome::TagRejectedReader;
        transcript.events = rec.events;
        return Ok(transcript);
    };
    transcript.c = Some(c);
    let Some(c_seen) = rec.send(MessageLabel::C, c) else {
        reader.abort();
        transcript.events = rec.events;
        return Ok(transcript);
    };
    transcript.outcome = match reader.complete(&c_seen)? {
        Verdict::Accept => SessionOutcome::MutualSuccess,
        Verdict::Reject => SessionOutcome::ReaderRejectedTag,
    };
    transcript.events = rec.events;
    Ok(transcript)
}

/// [`run_session`] over an undisturbed channel.
pub fn run_honest_session<S: NonceSource + ?Sized>(
    reader: &mut ReaderState,
    tag: &mut TagState,
    nonces: &mut S,
    session: u64,
) -> Result<SessionTranscript, ProtocolError> {
    run_session(reader, tag, nonces, &mut crate::channel::PassiveChannel, session)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Intercept, InterceptRule, ScriptedChannel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn w8(v: u128) -> Word {
        Word::new(v, 8).unwrap()
    }

    // Reference formulas evaluated bit by bit, independent of `Word`'s
    // rotation and boolean operators.
    fn naive_rot(x: u8, y: u8) -> u8 {
        let n = y.count_ones() % 8;
        let mut out = 0u8;
        for i in 0..8 {
            if x >> i & 1 == 1 {
                out |= 1 << ((i + n) % 8);
            }
        }
        out
    }

    #[test]
    fn message_examples_l8() {
        let (k, n) = (w8(0xC5), w8(0x36));
        assert_eq!(naive_rot(0xC5, 0xC5), 0x5C);
        assert_eq!(naive_rot(0x36, 0x36), 0x63);
        assert_eq!(compute_a(&k, &n), w8(0xF3));
        assert_eq!(compute_b(&k, &n), w8(0x5C ^ 0x63));
        assert_eq!(compute_b(&k, &n), w8(0x3F));
        assert_eq!(compute_c(&k, &n), w8((0xC5 | 0x63) ^ (0x5C & 0x36)));
        assert_eq!(compute_c(&k, &n), w8(0xF3));
        let next = next_pair(&PairState { idt: w8(0x11), key: k }, &n);
        assert_eq!(next, PairState { idt: w8(0xC5 ^ 0x63), key: w8(0x5C ^ 0x36) });
        assert_eq!(next, PairState { idt: w8(0xA6), key: w8(0x6A) });
    }

    #[test]
    fn trivial_message_cases() {
        let z = Word::zero(8);
        let n = w8(0x5a);
        assert_eq!(compute_a(&z, &n), n);
        assert_eq!(compute_a(&n, &z), n);
        assert_eq!(compute_b(&z, &z), z);
        assert_eq!(compute_b(&n, &n), z);
        assert_eq!(compute_c(&z, &z), z);
        assert_eq!(compute_c(&Word::ones(8), &z), Word::ones(8));
        assert_eq!(next_pair(&PairState { idt: n, key: z }, &z), PairState { idt: z, key: z });
    }

    #[test]
    fn exhaustive_formulas_match_naive_l8() {
        for k in 0..=255u8 {
            for n in 0..=255u8 {
                let (kw, nw) = (w8(k as u128), w8(n as u128));
                let rk = naive_rot(k, k);
                let rn = naive_rot(n, n);
                assert_eq!(compute_b(&kw, &nw).value(), (rk ^ rn) as u128);
                assert_eq!(compute_c(&kw, &nw).value(), ((k | rn) ^ (rk & n)) as u128);
                let p = next_pair(&PairState { idt: kw, key: kw }, &nw);
                assert_eq!(p.idt.value(), (k ^ rn) as u128);
                assert_eq!(p.key.value(), (rk ^ n) as u128);
            }
        }
    }

    #[test]
    fn next_pair_xor_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let used = PairState::random(128, &mut rng);
            let n = Word::random(128, &mut rng);
            let p = next_pair(&used, &n);
            assert_eq!(p.idt ^ p.key, n ^ n.self_rot() ^ used.key ^ used.key.self_rot());
        }
    }

    #[test]
    fn worked_session_l8() {
        let pair = PairState { idt: w8(0x10), key: w8(0xC5) };
        let mut tag = TagState::new(w8(0x99), pair);
        let c = tag.respond(PairSlot::Current, &w8(0xF3), &w8(0x3F));
        assert_eq!(c, Some(w8(0xF3)));
        assert_eq!(tag.current, PairState { idt: w8(0xA6), key: w8(0x6A) });
        assert_eq!(tag.previous, pair);
    }

    #[test]
    fn tag_present_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tag = TagState::random(128, &mut rng);
        assert_eq!(tag.present(false), tag.current.idt);
        assert_eq!(tag.present(true), tag.previous.idt);
        assert_eq!(tag.current, tag.previous);

        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        let before = tag.current;
        let t = run_honest_session(&mut reader, &mut tag, &mut rng, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
        let n = t.a.unwrap() ^ before.key;
        assert_eq!(tag.present(false), next_pair(&before, &n).idt);
        assert_eq!(tag.present(true), before.idt);
    }

    #[test]
    fn tag_rejects_corrupted_b_without_side_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let mut tag = TagState::random(128, &mut rng);
            let n = Word::random(128, &mut rng);
            let k = tag.current.key;
            let flip = Word::from_bits(128, &[rng.gen_range(0..128)]);
            let snapshot = tag;
            let reply = tag.respond(PairSlot::Current, &compute_a(&k, &n), &(compute_b(&k, &n) ^ flip));
            assert_eq!(reply, None);
            assert_eq!(tag, snapshot);
        }
    }

    #[test]
    fn reader_begin_and_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tag = TagState::random(128, &mut rng);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();

        assert_eq!(
            reader.begin(&Word::random(128, &mut rng), &mut rng).unwrap(),
            ReaderReply::Unrecognized
        );
        let ReaderReply::Challenge { a, .. } = reader.begin(&tag.current.idt, &mut rng).unwrap() else {
            panic!("expected challenge");
        };
        let pending = *reader.pending().unwrap();
        assert_eq!(a ^ tag.current.key, pending.nonce);
        assert_eq!(
            reader.begin(&tag.current.idt, &mut rng),
            Err(ProtocolError::PendingSessionExists)
        );

        // corrupted C is rejected and clears the pending session
        let bad = pending.expected_c ^ Word::from_bits(128, &[5]);
        assert_eq!(reader.complete(&bad).unwrap(), Verdict::Reject);
        assert_eq!(reader.entries()[0], tag.database_entry());
        assert_eq!(reader.complete(&bad), Err(ProtocolError::NoPendingSession));

        reader.begin(&tag.current.idt, &mut rng).unwrap();
        let pending = *reader.pending().unwrap();
        assert_eq!(reader.complete(&pending.expected_c).unwrap(), Verdict::Accept);
        assert_eq!(reader.entries()[0].pair(), next_pair(&tag.current, &pending.nonce));
        assert!(reader.lookup(&tag.current.idt).is_none());
    }

    #[test]
    fn reader_is_deterministic_per_seed() {
        let tag = TagState::random(128, &mut ChaCha8Rng::seed_from_u64(4));
        let run = || {
            let mut reader = ReaderState::new();
            reader.register(tag.database_entry()).unwrap();
            reader.begin(&tag.current.idt, &mut ChaCha8Rng::seed_from_u64(99)).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let tag = TagState::random(64, &mut rng);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        let mut clash = tag.database_entry();
        clash.key = Word::random(64, &mut rng);
        assert_eq!(
            reader.register(clash),
            Err(ProtocolError::DuplicatePseudonym(tag.current.idt))
        );
    }

    #[test]
    fn honest_session_synchronizes_and_counts_transmissions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut tag = TagState::random(128, &mut rng);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        for s in 0..50 {
            let key = tag.current.key;
            let t = run_honest_session(&mut reader, &mut tag, &mut rng, s).unwrap();
            assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
            assert_eq!(t.transmissions(), 3);
            assert_eq!(t.events.len(), 4);
            assert_eq!(reader.entries()[0].pair(), tag.current);
            assert_eq!(t.b.unwrap() ^ tag.current.idt, key.self_rot() ^ key);
        }
    }

    #[test]
    fn blocked_c_recovers_through_previous_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut tag = TagState::random(128, &mut rng);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();

        let mut ch = ScriptedChannel::new([InterceptRule {
            session: 0,
            label: MessageLabel::C,
            action: Intercept::Block,
        }]);
        let t = run_session(&mut reader, &mut tag, &mut rng, &mut ch, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::Blocked);
        assert!(reader.pending().is_none());
        assert_eq!(reader.entries()[0].pair(), tag.previous);
        assert_ne!(reader.entries()[0].pair(), tag.current);

        let t = run_honest_session(&mut reader, &mut tag, &mut rng, 1).unwrap();
        assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
        assert_eq!(t.presented_idts.len(), 2);
        assert_eq!(t.transmissions(), 4);
        assert!(reader.is_synchronized_with(&tag));
    }

    #[test]
    fn unknown_tag_fails_identification() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut tag = TagState::random(128, &mut rng);
        let mut reader = ReaderState::new();
        let t = run_honest_session(&mut reader, &mut tag, &mut rng, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::IdentificationFailed);
        assert_eq!(t.presented_idts.len(), 2);
        assert_eq!(t.identified_idt(), None);
    }

    #[test]
    fn blocked_idt_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut tag = TagState::random(128, &mut rng);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        let snapshot = tag;
        let mut ch = ScriptedChannel::new([InterceptRule {
            session: 0,
            label: MessageLabel::Idt,
            action: Intercept::Block,
        }]);
        let t = run_session(&mut reader, &mut tag, &mut rng, &mut ch, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::Blocked);
        assert_eq!(tag, snapshot);
        assert!(reader.is_synchronized_with(&tag));
        assert!(reader.pending().is_none());
    }

    #[test]
    fn fixed_nonces_drive_reader() {
        let pair = PairState { idt: w8(0x10), key: w8(0xC5) };
        let mut tag = TagState::new(w8(0x99), pair);
        let mut reader = ReaderState::new();
        reader.register(tag.database_entry()).unwrap();
        let mut nonces = FixedNonces::new([w8(0x36)]);
        let t = run_honest_session(&mut reader, &mut tag, &mut nonces, 0).unwrap();
        assert_eq!((t.a, t.b, t.c), (Some(w8(0xF3)), Some(w8(0x3F)), Some(w8(0xF3))));
        assert_eq!(reader.entries()[0].pair(), PairState { idt: w8(0xA6), key: w8(0x6A) });
    }

    #[test]
    fn state_sizes() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let tag = TagState::random(128, &mut rng);
        assert_eq!(tag.to_words().len(), 5);
        assert_eq!(tag.database_entry().to_words().len(), 3);
    }
}
