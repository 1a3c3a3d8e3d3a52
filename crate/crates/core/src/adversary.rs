//! Adversary queries and the untraceability game.
//!
//! The adversary interacts with the system only through three queries:
//!
//! * `Execute(R, T, i)` — eavesdrop on a genuine session `i`.
//! * `Send(X, Y, M, i)` — block or alter message `M` of session `i`.
//! * `Test(i, T0, T1)` — the environment flips a hidden bit `b` and reveals
//!   the pseudonyms tag `T_b` broadcasts when it is identified in session `i`.
//!
//! A [`Strategy`] plays a whole game against a [`Game`] and outputs a guess
//! `d`. The game never exposes `b` or any tag/reader state to the strategy.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

pub use crate::channel::{ChannelEvent, Disposition, Intercept, MessageLabel};
use crate::channel::{InterceptRule, ScriptedChannel};
use crate::protocol::{run_session, ProtocolError, ReaderState, SessionTranscript, TagState};
use crate::seed::{trial_rng, Stream, TrialRng};
use crate::stats::{AdvantageEstimate, StatsError};
use crate::word::{validate_len, Word, WordError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("execute budget of {0} exhausted")]
    ExecuteBudgetExhausted(u32),
    #[error("send budget of {0} exhausted")]
    SendBudgetExhausted(u32),
    #[error("test query already used")]
    TestAlreadyUsed,
    #[error("strategy finished without a test query")]
    TestNotInvoked,
    #[error("learning queries are not allowed after the challenge")]
    QueryAfterChallenge,
    #[error("session {requested} is not after session {last}")]
    SessionOutOfOrder { requested: u64, last: u64 },
    #[error("test needs two distinct tags")]
    SameTag,
    #[error("replacement word has the wrong length")]
    BadReplacement(#[from] WordError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
}

/// Which of the two tags in the game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TagHandle {
    T0,
    T1,
}

impl TagHandle {
    fn index(self) -> usize {
        match self {
            TagHandle::T0 => 0,
            TagHandle::T1 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GameConfig {
    /// Security parameter `t`: the word length.
    pub word_len: u32,
    /// Execute budget.
    pub r1: u32,
    /// Send budget.
    pub r2: u32,
    pub trials: u64,
    pub seed: u64,
}

impl GameConfig {
    pub fn new(word_len: u32, r1: u32, r2: u32, trials: u64, seed: u64) -> Result<Self, WordError> {
        validate_len(word_len)?;
        Ok(GameConfig {
            word_len,
            r1,
            r2,
            trials,
            seed,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct QueryCount {
    pub execute: u32,
    pub send: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GameOutcome {
    pub b: u8,
    pub d: u8,
    pub success: bool,
    pub queries: QueryCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Learning,
    Guessing,
}

/// One game instance: a genuine reader and two freshly provisioned tags.
pub struct Game {
    config: GameConfig,
    reader: ReaderState,
    tags: [TagState; 2],
    nonces: TrialRng,
    coins: TrialRng,
    channel: ScriptedChannel,
    used: QueryCount,
    last_session: Option<u64>,
    phase: Phase,
    hidden_b: Option<u8>,
}

impl Game {
    /// Builds the environment for game number `trial`.
    pub fn new(config: &GameConfig, trial: u64) -> Result<Self, GameError> {
        validate_len(config.word_len)?;
        let mut setup = trial_rng(config.seed, trial, Stream::Setup);
        let tags = [
            TagState::random(config.word_len, &mut setup),
            TagState::random(config.word_len, &mut setup),
        ];
        let mut reader = ReaderState::new();
        for t in &tags {
            reader.register(t.database_entry())?;
        }
        Ok(Game {
            config: *config,
            reader,
            tags,
            nonces: trial_rng(config.seed, trial, Stream::Reader),
            coins: trial_rng(config.seed, trial, Stream::Environment),
            channel: ScriptedChannel::default(),
            used: QueryCount::default(),
            last_session: None,
            phase: Phase::Learning,
            hidden_b: None,
        })
    }

    pub fn config(&self) -> &GameConfig {
        &self.config
    }

    pub fn queries_used(&self) -> QueryCount {
        self.used
    }

    pub fn remaining_sends(&self) -> u32 {
        self.config.r2 - self.used.send
    }

    pub fn remaining_executes(&self) -> u32 {
        self.config.r1 - self.used.execute
    }

    fn claim_session(&mut self, session: u64) -> Result<(), GameError> {
        if let Some(last) = self.last_session {
            if session <= last {
                return Err(GameError::SessionOutOfOrder {
                    requested: session,
                    last,
                });
            }
        }
        self.last_session = Some(session);
        Ok(())
    }

    /// `Execute(R, T, i)`: runs session `i` between the reader and `tag`,
    /// applying any pending `Send` rules, and returns what was on the air.
    pub fn execute(&mut self, tag: TagHandle, session: u64) -> Result<SessionTranscript, GameError> {
        if self.phase != Phase::Learning {
            return Err(GameError::QueryAfterChallenge);
        }
        if self.used.execute >= self.config.r1 {
            return Err(GameError::ExecuteBudgetExhausted(self.config.r1));
        }
        self.claim_session(session)?;
        self.used.execute += 1;
        let transcript = run_session(
            &mut self.reader,
            &mut self.tags[tag.index()],
            &mut self.nonces,
            &mut self.channel,
            session,
        )?;
        Ok(transcript)
    }

    /// `Send(X, Y, M, i)`: registers an interference with message `label` of
    /// session `i`. The direction follows from the message.
    pub fn send(&mut self, label: MessageLabel, session: u64, action: Intercept) -> Result<(), GameError> {
        if self.phase != Phase::Learning {
            return Err(GameError::QueryAfterChallenge);
        }
        if self.used.send >= self.config.r2 {
            return Err(GameError::SendBudgetExhausted(self.config.r2));
        }
        if let Intercept::Replace(w) | Intercept::Xor(w) = action {
            if w.len() != self.config.word_len {
                return Err(WordError::LengthMismatch {
                    left: self.config.word_len,
                    right: w.len(),
                }
                .into());
            }
        }
        self.used.send += 1;
        self.channel.add(InterceptRule {
            session,
            label,
            action,
        });
        Ok(())
    }

    /// `Test(i, T0, T1)`: flips the hidden bit, identifies `T_b` against the
    /// genuine reader in session `i` and reveals every pseudonym broadcast.
    pub fn test(&mut self, session: u64, tag0: TagHandle, tag1: TagHandle) -> Result<Vec<Word>, GameError> {
        if self.hidden_b.is_some() {
            return Err(GameError::TestAlreadyUsed);
        }
        if tag0 == tag1 {
            return Err(GameError::SameTag);
        }
        self.claim_session(session)?;
        self.phase = Phase::Guessing;
        let b: u8 = self.coins.gen_range(0..=1);
        self.hidden_b = Some(b);
        let tag = &self.tags[if b == 0 { tag0 } else { tag1 }.index()];
        let mut revealed = vec![tag.present(false)];
        if self.reader.lookup(&revealed[0]).is_none() {
            revealed.push(tag.present(true));
        }
        Ok(revealed)
    }
}

/// An adversary playing the untraceability game. Returns its guess `d`.
pub trait Strategy {
    fn play(&mut self, game: &mut Game) -> Result<u8, GameError>;
}

/// Plays game `trial` of `config` with `strategy`.
pub fn run_untraceability_game(
    strategy: &mut dyn Strategy,
    config: &GameConfig,
    trial: u64,
) -> Result<GameOutcome, GameError> {
    let mut game = Game::new(config, trial)?;
    let d = strategy.play(&mut game)?;
    let b = game.hidden_b.ok_or(GameError::TestNotInvoked)?;
    Ok(GameOutcome {
        b,
        d,
        success: b == d,
        queries: game.used,
    })
}

/// Baseline adversary: asks for the challenge and guesses uniformly.
pub struct RandomGuess {
    rng: TrialRng,
}

impl RandomGuess {
    pub fn new(seed: u64, trial: u64) -> Self {
        RandomGuess {
            rng: trial_rng(seed, trial, Stream::Adversary),
        }
    }
}

impl Strategy for RandomGuess {
    fn play(&mut self, game: &mut Game) -> Result<u8, GameError> {
        game.test(0, TagHandle::T0, TagHandle::T1)?;
        Ok(self.rng.gen_range(0..=1))
    }
}

/// Empirical `Adv = |Pr[d = b] - 1/2|` over a batch of games.
pub fn estimate_advantage(outcomes: &[GameOutcome]) -> Result<AdvantageEstimate, StatsError> {
    let wins = outcomes.iter().filter(|o| o.success).count() as u64;
    AdvantageEstimate::from_counts(wins, outcomes.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{next_pair, SessionOutcome};

    fn config(r1: u32, r2: u32) -> GameConfig {
        GameConfig::new(128, r1, r2, 1, 42).unwrap()
    }

    #[test]
    fn execute_returns_full_transcript() {
        let mut game = Game::new(&config(2, 0), 0).unwrap();
        let before = game.tags[0].current;
        let t1 = game.execute(TagHandle::T0, 0).unwrap();
        assert_eq!(t1.outcome, SessionOutcome::MutualSuccess);
        assert_eq!(t1.events.len(), 4);
        let t2 = game.execute(TagHandle::T0, 1).unwrap();
        let nonce = t1.a.unwrap() ^ before.key;
        assert_eq!(t2.presented_idts, vec![next_pair(&before, &nonce).idt]);
        assert_eq!(game.queries_used(), QueryCount { execute: 2, send: 0 });
        assert_eq!(
            game.execute(TagHandle::T0, 2).unwrap_err(),
            GameError::ExecuteBudgetExhausted(2)
        );
    }

    #[test]
    fn zero_budget_execute_errors() {
        let mut game = Game::new(&config(0, 0), 0).unwrap();
        assert_eq!(
            game.execute(TagHandle::T0, 0).unwrap_err(),
            GameError::ExecuteBudgetExhausted(0)
        );
        assert_eq!(
            game.send(MessageLabel::C, 0, Intercept::Block).unwrap_err(),
            GameError::SendBudgetExhausted(0)
        );
    }

    #[test]
    fn send_block_c_leaves_reader_behind() {
        let mut game = Game::new(&config(2, 1), 0).unwrap();
        game.send(MessageLabel::C, 0, Intercept::Block).unwrap();
        let t = game.execute(TagHandle::T0, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::Blocked);
        assert_eq!(t.events.last().unwrap().disposition, Disposition::Blocked);
        // tag already moved on; it is identified through its previous pair
        let t = game.execute(TagHandle::T0, 1).unwrap();
        assert_eq!(t.presented_idts.len(), 2);
        assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
    }

    #[test]
    fn send_bit_flip_on_b_is_rejected() {
        let mut game = Game::new(&config(2, 1), 0).unwrap();
        game.send(MessageLabel::B, 0, Intercept::Xor(Word::from_bits(128, &[17]))).unwrap();
        let t = game.execute(TagHandle::T0, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::TagRejectedReader);
        let t = game.execute(TagHandle::T0, 1).unwrap();
        assert_eq!(t.presented_idts.len(), 1);
        assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
    }

    #[test]
    fn send_block_idt() {
        let mut game = Game::new(&config(2, 1), 0).unwrap();
        game.send(MessageLabel::Idt, 0, Intercept::Block).unwrap();
        let t = game.execute(TagHandle::T0, 0).unwrap();
        assert_eq!(t.outcome, SessionOutcome::Blocked);
        assert_eq!(t.events.len(), 1);
        let t = game.execute(TagHandle::T0, 1).unwrap();
        assert_eq!(t.presented_idts.len(), 1);
        assert_eq!(t.outcome, SessionOutcome::MutualSuccess);
    }

    #[test]
    fn test_query_rules() {
        let mut game = Game::new(&config(2, 1), 0).unwrap();
        assert_eq!(
            game.test(0, TagHandle::T0, TagHandle::T0).unwrap_err(),
            GameError::SameTag
        );
        let revealed = game.test(1, TagHandle::T0, TagHandle::T1).unwrap();
        assert_eq!(revealed.len(), 1);
        assert_eq!(
            game.test(2, TagHandle::T0, TagHandle::T1).unwrap_err(),
            GameError::TestAlreadyUsed
        );
        assert_eq!(
            game.execute(TagHandle::T0, 3).unwrap_err(),
            GameError::QueryAfterChallenge
        );
    }

    #[test]
    fn sessions_must_increase() {
        let mut game = Game::new(&config(3, 0), 0).unwrap();
        game.execute(TagHandle::T0, 5).unwrap();
        assert_eq!(
            game.execute(TagHandle::T1, 5).unwrap_err(),
            GameError::SessionOutOfOrder { requested: 5, last: 5 }
        );
    }

    struct NoTest;
    impl Strategy for NoTest {
        fn play(&mut self, _: &mut Game) -> Result<u8, GameError> {
            Ok(0)
        }
    }

    #[test]
    fn missing_test_is_an_error() {
        assert_eq!(
            run_untraceability_game(&mut NoTest, &config(0, 0), 0).unwrap_err(),
            GameError::TestNotInvoked
        );
    }

    #[test]
    fn random_guess_has_no_advantage() {
        let cfg = GameConfig::new(64, 0, 0, 10_000, 7).unwrap();
        let outcomes: Vec<GameOutcome> = (0..cfg.trials)
            .map(|i| run_untraceability_game(&mut RandomGuess::new(cfg.seed, i), &cfg, i).unwrap())
            .collect();
        let est = estimate_advantage(&outcomes).unwrap();
        assert!(est.advantage < 0.02, "{est:?}");
        assert!(outcomes.iter().all(|o| o.queries == QueryCount::default()));
        assert!(outcomes.iter().all(|o| o.success == (o.b == o.d)));
    }

    #[test]
    fn empty_outcomes_error() {
        assert_eq!(estimate_advantage(&[]), Err(StatsError::Empty));
    }
}
