//! Fixed-width bit vectors.
//!
//! Every protocol value (identifiers, keys, nonces and the public messages
//! `A`, `B`, `C`) is a [`Word`] of `L` bits. `L` is chosen at runtime so that
//! exhaustive checks can run at 8 or 16 bits while the headline experiments
//! use 128. Words are backed by a single `u128`, which caps `L` at 128.

use std::fmt;
use std::ops::{BitAnd, BitOr, BitXor, Not};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Largest supported word length.
pub const MAX_WORD_LEN: u32 = 128;
/// Smallest supported word length.
pub const MIN_WORD_LEN: u32 = 4;
/// Word length used by the protocol as deployed.
pub const DEFAULT_WORD_LEN: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WordError {
    #[error("word length mismatch: {left} bits vs {right} bits")]
    LengthMismatch { left: u32, right: u32 },
    #[error("invalid word length {0}: must be a multiple of 4 in [{MIN_WORD_LEN}, {MAX_WORD_LEN}]")]
    InvalidLength(u32),
    #[error("value does not fit in {len} bits")]
    Overflow { len: u32 },
    #[error("invalid hex word {0:?}")]
    InvalidHex(String),
}

/// Checks that `len` is a usable word length.
pub fn validate_len(len: u32) -> Result<(), WordError> {
    if (MIN_WORD_LEN..=MAX_WORD_LEN).contains(&len) && len.is_multiple_of(4) {
        Ok(())
    } else {
        Err(WordError::InvalidLength(len))
    }
}

#[inline]
fn mask(len: u32) -> u128 {
    if len == 128 {
        u128::MAX
    } else {
        (1u128 << len) - 1
    }
}

/// The three bitwise operations available on a tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitOp {
    Xor,
    Or,
    And,
}

/// An `L`-bit vector. Bit 0 is the least significant bit; display is
/// most-significant nibble first.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Word {
    bits: u128,
    len: u32,
}

impl Word {
    pub fn new(value: u128, len: u32) -> Result<Self, WordError> {
        validate_len(len)?;
        if value & !mask(len) != 0 {
            return Err(WordError::Overflow { len });
        }
        Ok(Word { bits: value, len })
    }

    pub fn zero(len: u32) -> Self {
        validate_len(len).expect("invalid word length");
        Word { bits: 0, len }
    }

    pub fn ones(len: u32) -> Self {
        validate_len(len).expect("invalid word length");
        Word {
            bits: mask(len),
            len,
        }
    }

    /// Word with exactly the given bit positions set.
    pub fn from_bits(len: u32, positions: &[u32]) -> Self {
        let mut w = Word::zero(len);
        for &p in positions {
            assert!(p < len, "bit position {p} out of range for {len}-bit word");
            w.bits |= 1u128 << p;
        }
        w
    }

    /// Uniform draw from `{0,1}^len`.
    pub fn random<R: Rng + ?Sized>(len: u32, rng: &mut R) -> Self {
        validate_len(len).expect("invalid word length");
        Word {
            bits: rng.gen::<u128>() & mask(len),
            len,
        }
    }

    #[inline]
    pub fn len(&self) -> u32 {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn value(&self) -> u128 {
        self.bits
    }

    #[inline]
    pub fn bit(&self, i: u32) -> bool {
        assert!(i < self.len);
        (self.bits >> i) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.bits == 0
    }

    pub fn bitwise(&self, other: &Word, op: BitOp) -> Result<Word, WordError> {
        self.check_len(other)?;
        let bits = match op {
            BitOp::Xor => self.bits ^ other.bits,
            BitOp::Or => self.bits | other.bits,
            BitOp::And => self.bits & other.bits,
        };
        Ok(Word {
            bits,
            len: self.len,
        })
    }

    #[inline]
    pub fn hamming_weight(&self) -> u32 {
        self.bits.count_ones()
    }

    /// Circular left shift by `n mod L` positions.
    #[inline]
    pub fn rotate_left(&self, n: u32) -> Word {
        let s = n % self.len;
        if s == 0 {
            return *self;
        }
        let bits = ((self.bits << s) | (self.bits >> (self.len - s))) & mask(self.len);
        Word {
            bits,
            len: self.len,
        }
    }

    /// `Rot(self, by)`: rotate left by the hamming weight of `by`.
    ///
    /// Panics on length mismatch; see [`Word::try_rot`].
    #[inline]
    pub fn rot(&self, by: &Word) -> Word {
        self.try_rot(by).expect("word length mismatch")
    }

    pub fn try_rot(&self, by: &Word) -> Result<Word, WordError> {
        self.check_len(by)?;
        Ok(self.rotate_left(by.hamming_weight()))
    }

    /// `Rot(self, self)`, the self-keyed rotation used throughout the protocol.
    #[inline]
    pub fn self_rot(&self) -> Word {
        self.rotate_left(self.hamming_weight())
    }

    pub fn to_hex(&self) -> String {
        format!("{:0width$x}", self.bits, width = (self.len / 4) as usize)
    }

    /// Parses lowercase or uppercase hex; the word length is four bits per digit.
    pub fn from_hex(s: &str) -> Result<Word, WordError> {
        let len = u32::try_from(s.len()).map_err(|_| WordError::InvalidHex(s.to_owned()))? * 4;
        if validate_len(len).is_err() || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(WordError::InvalidHex(s.to_owned()));
        }
        let bits = u128::from_str_radix(s, 16).map_err(|_| WordError::InvalidHex(s.to_owned()))?;
        Ok(Word { bits, len })
    }

    fn check_len(&self, other: &Word) -> Result<(), WordError> {
        if self.len == other.len {
            Ok(())
        } else {
            Err(WordError::LengthMismatch {
                left: self.len,
                right: other.len,
            })
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Word({}/{})", self.to_hex(), self.len)
    }
}

impl FromStr for Word {
    type Err = WordError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Word::from_hex(s)
    }
}

macro_rules! bitop_impl {
    ($trait:ident, $method:ident, $op:expr) => {
        impl $trait for Word {
            type Output = Word;
            #[inline]
            fn $method(self, rhs: Word) -> Word {
                self.bitwise(&rhs, $op).expect("word length mismatch")
            }
        }

        impl $trait<&Word> for Word {
            type Output = Word;
            #[inline]
            fn $method(self, rhs: &Word) -> Word {
                self.bitwise(rhs, $op).expect("word length mismatch")
            }
        }
    };
}

bitop_impl!(BitXor, bitxor, BitOp::Xor);
bitop_impl!(BitOr, bitor, BitOp::Or);
bitop_impl!(BitAnd, bitand, BitOp::And);

impl Not for Word {
    type Output = Word;

    fn not(self) -> Word {
        Word {
            bits: !self.bits & mask(self.len),
            len: self.len,
        }
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Word::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

/// Simulation-wide parameters: the word length (security parameter) and the
/// seed of the deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub word_len: u32,
    pub seed: u64,
}

impl ProtocolParams {
    pub fn new(word_len: u32, seed: u64) -> Result<Self, WordError> {
        validate_len(word_len)?;
        Ok(ProtocolParams { word_len, seed })
    }
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            word_len: DEFAULT_WORD_LEN,
            seed: 0,
        }
    }
}

/// All words of weight two, ordered by (lower set bit, upper set bit).
pub fn weight_two_words(len: u32) -> impl Iterator<Item = Word> {
    (0..len).flat_map(move |lo| (lo + 1..len).map(move |hi| Word::from_bits(len, &[lo, hi])))
}
