//! The insecure radio channel between tag and reader.
//!
//! Every protocol message passes through a [`Channel`], which decides whether
//! it is delivered, blocked or replaced. Transcripts and scenario scripts use
//! a line-oriented text format with a fixed field order:
//!
//! ```text
//! # transcript: <session> <direction> <message> <hex word> <disposition>
//! 3 T->R IDT 9f01... delivered
//! 3 R->T A   01ab... replaced:01aa...
//! 3 T->R C   77c2... blocked
//!
//! # scenario script: <session> <message> <action> [<hex word>]
//! 4 C block
//! 5 B xor 0000...0001
//! 6 A replace 1234...
//! ```
//!
//! Fields are separated by single spaces. Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::word::{Word, WordError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: &'static str,
        found: usize,
    },
    #[error("line {line}: bad {field} {value:?}")]
    BadField {
        line: usize,
        field: &'static str,
        value: String,
    },
    #[error("line {line}: {source}")]
    Word {
        line: usize,
        #[source]
        source: WordError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageLabel {
    #[serde(rename = "IDT")]
    Idt,
    A,
    B,
    C,
}

impl MessageLabel {
    pub fn direction(self) -> Direction {
        match self {
            MessageLabel::Idt | MessageLabel::C => Direction::TagToReader,
            MessageLabel::A | MessageLabel::B => Direction::ReaderToTag,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MessageLabel::Idt => "IDT",
            MessageLabel::A => "A",
            MessageLabel::B => "B",
            MessageLabel::C => "C",
        }
    }
}

impl fmt::Display for MessageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MessageLabel {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "IDT" => Ok(MessageLabel::Idt),
            "A" => Ok(MessageLabel::A),
            "B" => Ok(MessageLabel::B),
            "C" => Ok(MessageLabel::C),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "T->R")]
    TagToReader,
    #[serde(rename = "R->T")]
    ReaderToTag,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::TagToReader => "T->R",
            Direction::ReaderToTag => "R->T",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What happened to a message on the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Disposition {
    Delivered,
    Blocked,
    Replaced(Word),
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Disposition::Delivered => f.write_str("delivered"),
            Disposition::Blocked => f.write_str("blocked"),
            Disposition::Replaced(w) => write!(f, "replaced:{w}"),
        }
    }
}

impl Serialize for Disposition {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// One message observed on the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChannelEvent {
    pub session: u64,
    pub direction: Direction,
    #[serde(rename = "message")]
    pub label: MessageLabel,
    #[serde(rename = "word")]
    pub payload: Word,
    pub disposition: Disposition,
}

impl ChannelEvent {
    /// The word the receiver actually gets, if any.
    pub fn received(&self) -> Option<Word> {
        match self.disposition {
            Disposition::Delivered => Some(self.payload),
            Disposition::Blocked => None,
            Disposition::Replaced(w) => Some(w),
        }
    }

    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.session, self.direction, self.label, self.payload, self.disposition
        )
    }

    pub fn parse_line(line: &str, lineno: usize) -> Result<ChannelEvent, FormatError> {
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 5 {
            return Err(FormatError::FieldCount {
                line: lineno,
                expected: "5",
                found: fields.len(),
            });
        }
        let bad = |field: &'static str, value: &str| FormatError::BadField {
            line: lineno,
            field,
            value: value.to_owned(),
        };
        let session = fields[0].parse().map_err(|_| bad("session", fields[0]))?;
        let direction = match fields[1] {
            "T->R" => Direction::TagToReader,
            "R->T" => Direction::ReaderToTag,
            other => return Err(bad("direction", other)),
        };
        let label: MessageLabel = fields[2].parse().map_err(|_| bad("message", fields[2]))?;
        if label.direction() != direction {
            return Err(bad("direction", fields[1]));
        }
        let payload = parse_word(fields[3], lineno)?;
        let disposition = match fields[4] {
            "delivered" => Disposition::Delivered,
            "blocked" => Disposition::Blocked,
            other => match other.strip_prefix("replaced:") {
                Some(hex) => Disposition::Replaced(parse_word(hex, lineno)?),
                None => return Err(bad("disposition", other)),
            },
        };
        Ok(ChannelEvent {
            session,
            direction,
            label,
            payload,
            disposition,
        })
    }
}

fn parse_word(s: &str, line: usize) -> Result<Word, FormatError> {
    Word::from_hex(s).map_err(|source| FormatError::Word { line, source })
}

/// Renders events in the transcript line format, one per line.
pub fn format_transcript(events: &[ChannelEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

/// Parses the transcript line format, skipping blank and `#` lines.
pub fn parse_transcript(text: &str) -> Result<Vec<ChannelEvent>, FormatError> {
    content_lines(text)
        .map(|(n, line)| ChannelEvent::parse_line(line, n))
        .collect()
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

/// A message-level decision taken by whoever controls the channel.
pub trait Channel {
    fn transmit(&mut self, session: u64, label: MessageLabel, payload: &Word) -> Disposition;
}

/// Delivers everything unchanged.
#[derive(Debug, Default, Clone, Copy)]
pub struct PassiveChannel;

impl Channel for PassiveChannel {
    fn transmit(&mut self, _: u64, _: MessageLabel, _: &Word) -> Disposition {
        Disposition::Delivered
    }
}

/// An active interference with one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Intercept {
    Block,
    Replace(Word),
    /// XOR the payload with a mask (e.g. a single-bit flip).
    Xor(Word),
}

impl Intercept {
    pub fn apply(&self, payload: &Word) -> Disposition {
        match self {
            Intercept::Block => Disposition::Blocked,
            Intercept::Replace(w) => Disposition::Replaced(*w),
            Intercept::Xor(mask) => Disposition::Replaced(*payload ^ mask),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InterceptRule {
    pub session: u64,
    pub label: MessageLabel,
    pub action: Intercept,
}

impl InterceptRule {
    pub fn to_line(&self) -> String {
        match self.action {
            Intercept::Block => format!("{} {} block", self.session, self.label),
            Intercept::Replace(w) => format!("{} {} replace {}", self.session, self.label, w),
            Intercept::Xor(w) => format!("{} {} xor {}", self.session, self.label, w),
        }
    }
}

/// A set of interception rules keyed by (session, message). The first
/// matching message in a session is intercepted; later messages with the
/// same label in that session (e.g. the fallback `IDT`) pass untouched.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioScript {
    rules: Vec<InterceptRule>,
}

impl ScenarioScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, rule: InterceptRule) {
        self.rules.push(rule);
    }

    pub fn rules(&self) -> &[InterceptRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn parse(text: &str) -> Result<ScenarioScript, FormatError> {
        let mut script = ScenarioScript::new();
        for (n, line) in content_lines(text) {
            let fields: Vec<&str> = line.split(' ').collect();
            let bad = |field: &'static str, value: &str| FormatError::BadField {
                line: n,
                field,
                value: value.to_owned(),
            };
            if fields.len() < 3 {
                return Err(FormatError::FieldCount {
                    line: n,
                    expected: "3 or 4",
                    found: fields.len(),
                });
            }
            let session = fields[0].parse().map_err(|_| bad("session", fields[0]))?;
            let label = fields[1].parse().map_err(|_| bad("message", fields[1]))?;
            let action = match (fields[2], fields.len()) {
                ("block", 3) => Intercept::Block,
                ("replace", 4) => Intercept::Replace(parse_word(fields[3], n)?),
                ("xor", 4) => Intercept::Xor(parse_word(fields[3], n)?),
                ("block" | "replace" | "xor", found) => {
                    return Err(FormatError::FieldCount {
                        line: n,
                        expected: if fields[2] == "block" { "3" } else { "4" },
                        found,
                    })
                }
                (other, _) => return Err(bad("action", other)),
            };
            script.push(InterceptRule {
                session,
                label,
                action,
            });
        }
        Ok(script)
    }

    pub fn to_text(&self) -> String {
        self.rules.iter().map(|r| r.to_line() + "\n").collect()
    }

    pub fn channel(&self) -> ScriptedChannel {
        ScriptedChannel::new(self.rules.iter().copied())
    }
}

/// Channel that applies interception rules once each.
#[derive(Debug, Clone, Default)]
pub struct ScriptedChannel {
    pending: HashMap<(u64, MessageLabel), Intercept>,
}

impl ScriptedChannel {
    pub fn new(rules: impl IntoIterator<Item = InterceptRule>) -> Self {
        let mut ch = ScriptedChannel::default();
        for r in rules {
            ch.add(r);
        }
        ch
    }

    pub fn add(&mut self, rule: InterceptRule) {
        self.pending.insert((rule.session, rule.label), rule.action);
    }
}

impl Channel for ScriptedChannel {
    fn transmit(&mut self, session: u64, label: MessageLabel, payload: &Word) -> Disposition {
        match self.pending.remove(&(session, label)) {
            Some(action) => action.apply(payload),
            None => Disposition::Delivered,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn event_line_format() {
        let e = ChannelEvent {
            session: 7,
            direction: Direction::ReaderToTag,
            label: MessageLabel::B,
            payload: Word::new(0x3f, 8).unwrap(),
            disposition: Disposition::Replaced(Word::new(0x3e, 8).unwrap()),
        };
        assert_eq!(e.to_line(), "7 R->T B 3f replaced:3e");
        assert_eq!(ChannelEvent::parse_line(&e.to_line(), 1).unwrap(), e);
        assert_eq!(
            serde_json::to_string(&e).unwrap(),
            r#"{"session":7,"direction":"R->T","message":"B","word":"3f","disposition":"replaced:3e"}"#
        );
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(ChannelEvent::parse_line("1 T->R IDT ff", 1).is_err());
        assert!(ChannelEvent::parse_line("x T->R IDT ff delivered", 1).is_err());
        assert!(ChannelEvent::parse_line("1 R->T IDT ff delivered", 1).is_err());
        assert!(ChannelEvent::parse_line("1 T->R D ff delivered", 1).is_err());
        assert!(ChannelEvent::parse_line("1 T->R C ff lost", 1).is_err());
        assert!(ChannelEvent::parse_line("1 T->R C fz delivered", 1).is_err());
    }

    #[test]
    fn script_parsing() {
        let text = "# comment\n4 C block\n5 B xor 01\n\n6 A replace ff\n";
        let script = ScenarioScript::parse(text).unwrap();
        assert_eq!(script.rules().len(), 3);
        assert_eq!(script.rules()[0].action, Intercept::Block);
        assert_eq!(ScenarioScript::parse(&script.to_text()).unwrap(), script);
        assert!(ScenarioScript::parse("4 C block ff").is_err());
        assert!(ScenarioScript::parse("4 C replace").is_err());
        assert!(ScenarioScript::parse("4 C drop").is_err());
        assert!(ScenarioScript::parse("4 Q block").is_err());
    }

    #[test]
    fn scripted_channel_fires_once() {
        let w = Word::new(0xaa, 8).unwrap();
        let mut ch = ScriptedChannel::new([InterceptRule {
            session: 2,
            label: MessageLabel::Idt,
            action: Intercept::Xor(Word::new(0x01, 8).unwrap()),
        }]);
        assert_eq!(ch.transmit(1, MessageLabel::Idt, &w), Disposition::Delivered);
        assert_eq!(
            ch.transmit(2, MessageLabel::Idt, &w),
            Disposition::Replaced(Word::new(0xab, 8).unwrap())
        );
        assert_eq!(ch.transmit(2, MessageLabel::Idt, &w), Disposition::Delivered);
    }

    fn event() -> impl Strategy<Value = ChannelEvent> {
        (
            any::<u64>(),
            prop::sample::select(vec![
                MessageLabel::Idt,
                MessageLabel::A,
                MessageLabel::B,
                MessageLabel::C,
            ]),
            any::<u128>(),
            0u8..3,
            any::<u128>(),
        )
            .prop_map(|(session, label, p, d, r)| ChannelEvent {
                session,
                direction: label.direction(),
                label,
                payload: Word::new(p, 128).unwrap(),
                disposition: match d {
                    0 => Disposition::Delivered,
                    1 => Disposition::Blocked,
                    _ => Disposition::Replaced(Word::new(r, 128).unwrap()),
                },
            })
    }

    proptest! {
        #[test]
        fn transcript_round_trip(events in prop::collection::vec(event(), 0..20)) {
            let text = format_transcript(&events);
            prop_assert_eq!(parse_transcript(&text).unwrap(), events);
        }
    }
}
