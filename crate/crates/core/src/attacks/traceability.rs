//! Tracing a tag through a blocked `C`.
//!
//! Learning: eavesdrop sessions `n` and `n+1` of `T0`, blocking `C` in
//! `n+1` so the reader keeps `{IDT_{n+1}, K_{n+1}}` while the tag moves on.
//! `X = B_n ^ IDT_{n+1} = Rot(K_n,K_n) ^ K_n` is a value only `T0` matches.
//! Challenge: if `T0` is picked, its identification falls back to
//! `IDT_{n+1}`, which XORs with `B_n` to `X`; a fresh `T1` does not.

use crate::adversary::{
    run_untraceability_game, Game, GameConfig, GameError, GameOutcome, Intercept, MessageLabel,
    Strategy, TagHandle,
};

/// The learning/challenge/guess procedure. Uses its `Send` query only when
/// the game grants one, so a zero send budget gives the ablated attack.
#[derive(Debug, Default, Clone, Copy)]
pub struct TraceabilityAttack;

impl Strategy for TraceabilityAttack {
    fn play(&mut self, game: &mut Game) -> Result<u8, GameError> {
        let n = 0;
        let first = game.execute(TagHandle::T0, n)?;
        if game.remaining_sends() > 0 {
            game.send(MessageLabel::C, n + 1, Intercept::Block)?;
        }
        let second = game.execute(TagHandle::T0, n + 1)?;
        let revealed = game.test(n + 2, TagHandle::T0, TagHandle::T1)?;

        let (Some(b_n), Some(idt_next)) = (first.b, second.presented_idts.first()) else {
            return Ok(1);
        };
        let x = b_n ^ idt_next;
        Ok(if revealed.iter().any(|p| b_n ^ p == x) { 0 } else { 1 })
    }
}

pub fn attack_traceability(config: &GameConfig, trial: u64) -> Result<GameOutcome, GameError> {
    run_untraceability_game(&mut TraceabilityAttack, config, trial)
}
