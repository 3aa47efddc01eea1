//! Packed bit storage and cursor-based reading.
//!
//! Bits are stored MSB-first: bit `i` of a [`BitString`] lives in word
//! `i / 64` at bit position `63 - i % 64`. Chunks read through a
//! [`BitCursor`] are interpreted MSB-first as well, and packed bitfiles use
//! the same order within each byte. This is the interchange convention of the
//! whole crate; flipping it only requires touching this module.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const WORD_BITS: usize = 64;

#[derive(Debug, Error)]
pub enum BitError {
    #[error("bit stream exhausted at position {position} (needed {needed} more bits, length {length})")]
    Exhausted {
        position: usize,
        needed: usize,
        length: usize,
    },
    #[error("bit string too short: need {needed} bits, have {available}")]
    TooShort { needed: usize, available: usize },
    #[error("invalid byte {byte:#04x} at offset {offset} in ascii01 bitfile")]
    Format { offset: usize, byte: u8 },
    #[error("bitfile i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// An immutable packed sequence of bits with an origin label.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
    origin: String,
}

impl BitString {
    /// Builds a bit string from MSB-first words. Bits past `len` are cleared.
    pub fn from_words(mut words: Vec<u64>, len: usize, origin: impl Into<String>) -> Self {
        let needed = len.div_ceil(WORD_BITS);
        assert!(words.len() >= needed, "not enough words for {len} bits");
        words.truncate(needed);
        let mut s = BitString {
            words,
            len,
            origin: origin.into(),
        };
        s.clear_tail();
        s
    }

    /// Builds a bit string from MSB-first packed bytes, keeping `len` bits.
    pub fn from_bytes(bytes: &[u8], len: usize, origin: impl Into<String>) -> Self {
        assert!(bytes.len() * 8 >= len, "not enough bytes for {len} bits");
        let mut words = vec![0u64; len.div_ceil(WORD_BITS)];
        for (i, &b) in bytes.iter().take(len.div_ceil(8)).enumerate() {
            words[i / 8] |= (b as u64) << (56 - 8 * (i % 8));
        }
        Self::from_words(words, len, origin)
    }

    pub fn from_bools(bits: &[bool], origin: impl Into<String>) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(WORD_BITS)];
        for (i, &b) in bits.iter().enumerate() {
            if b {
                words[i / WORD_BITS] |= 1 << (63 - i % WORD_BITS);
            }
        }
        Self::from_words(words, bits.len(), origin)
    }

    pub fn zeros(len: usize, origin: impl Into<String>) -> Self {
        Self::from_words(vec![0; len.div_ceil(WORD_BITS)], len, origin)
    }

    pub fn ones(len: usize, origin: impl Into<String>) -> Self {
        Self::from_words(vec![u64::MAX; len.div_ceil(WORD_BITS)], len, origin)
    }

    /// Concatenates several bit strings in order.
    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a BitString>, origin: impl Into<String>) -> Self {
        let mut builder = BitBuilder::new();
        for p in parts {
            builder.push_bitstring(p);
        }
        builder.finish(origin)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn origin(&self) -> &str {
        &self.origin
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }

    /// Raw MSB-first words; bits past `len` are zero.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD_BITS] >> (63 - i % WORD_BITS)) & 1 == 1
    }

    pub fn count_ones(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// Reads `width` (1..=64) bits starting at `pos` as an MSB-first integer.
    /// The range must lie inside the string.
    #[inline]
    pub fn bits_at(&self, pos: usize, width: u32) -> u64 {
        debug_assert!((1..=64).contains(&width));
        debug_assert!(pos + width as usize <= self.len);
        let wi = pos / WORD_BITS;
        let off = pos % WORD_BITS;
        let mut v = self.words[wi] << off;
        if off + width as usize > WORD_BITS {
            v |= self.words[wi + 1] >> (WORD_BITS - off);
        }
        v >> (64 - width)
    }

    /// Copies `len` bits starting at `start` into a new string.
    pub fn slice(&self, start: usize, len: usize) -> Result<BitString, BitError> {
        if start + len > self.len {
            return Err(BitError::TooShort {
                needed: start + len,
                available: self.len,
            });
        }
        let mut words = Vec::with_capacity(len.div_ceil(WORD_BITS));
        let mut pos = start;
        let end = start + len;
        while pos < end {
            let w = (end - pos).min(WORD_BITS) as u32;
            words.push(self.bits_at(pos, w) << (64 - w));
            pos += w as usize;
        }
        Ok(BitString::from_words(words, len, self.origin.clone()))
    }

    /// MSB-first packed bytes; the final partial byte is zero padded.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        (0..n)
            .map(|i| (self.words[i / 8] >> (56 - 8 * (i % 8))) as u8)
            .collect()
    }

    pub fn to_ascii01(&self) -> String {
        (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn cursor(&self) -> BitCursor<'_> {
        BitCursor::new(self, Exhaustion::Error)
    }

    fn clear_tail(&mut self) {
        let rem = self.len % WORD_BITS;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= u64::MAX << (WORD_BITS - rem);
            }
        }
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: String = self.iter().take(64).map(|b| if b { '1' } else { '0' }).collect();
        f.debug_struct("BitString")
            .field("len", &self.len)
            .field("origin", &self.origin)
            .field("prefix", &preview)
            .finish()
    }
}

/// Parses a string of `0`/`1` characters, ignoring whitespace.
impl FromStr for BitString {
    type Err = BitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_ascii01(s.as_bytes(), None, "literal")
    }
}

/// Incremental MSB-first bit writer.
#[derive(Debug, Default)]
pub struct BitBuilder {
    words: Vec<u64>,
    len: usize,
}

impl BitBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitBuilder {
            words: Vec::with_capacity(bits.div_ceil(WORD_BITS)),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push_bit(&mut self, bit: bool) {
        self.push_bits(bit as u64, 1);
    }

    /// Appends the low `width` bits of `value`, most significant first.
    pub fn push_bits(&mut self, value: u64, width: u32) {
        debug_assert!((1..=64).contains(&width));
        let value = if width == 64 { value } else { value & ((1u64 << width) - 1) };
        let off = self.len % WORD_BITS;
        if off == 0 {
            self.words.push(value << (64 - width));
        } else {
            let free = (WORD_BITS - off) as u32;
            let last = self.words.last_mut().expect("non-empty when off > 0");
            if width <= free {
                *last |= value << (free - width);
            } else {
                *last |= value >> (width - free);
                self.words.push(value << (64 - (width - free)));
            }
        }
        self.len += width as usize;
    }

    pub fn push_bitstring(&mut self, s: &BitString) {
        let mut pos = 0;
        while pos < s.len() {
            let w = (s.len() - pos).min(WORD_BITS) as u32;
            self.push_bits(s.bits_at(pos, w), w);
            pos += w as usize;
        }
    }

    pub fn finish(self, origin: impl Into<String>) -> BitString {
        BitString::from_words(self.words, self.len, origin)
    }
}

/// What a cursor does when asked for more bits than remain.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exhaustion {
    #[default]
    Error,
    Wrap,
}

/// A mutable read position over a [`BitString`].
#[derive(Debug, Clone)]
pub struct BitCursor<'a> {
    target: &'a BitString,
    position: usize,
    policy: Exhaustion,
}

impl<'a> BitCursor<'a> {
    pub fn new(target: &'a BitString, policy: Exhaustion) -> Self {
        BitCursor {
            target,
            position: 0,
            policy,
        }
    }

    pub fn at(target: &'a BitString, position: usize, policy: Exhaustion) -> Self {
        assert!(position <= target.len());
        BitCursor {
            target,
            position,
            policy,
        }
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn remaining(&self) -> usize {
        self.target.len() - self.position
    }

    pub fn target(&self) -> &'a BitString {
        self.target
    }

    pub fn policy(&self) -> Exhaustion {
        self.policy
    }

    pub fn rewind(&mut self) {
        self.position = 0;
    }

    fn exhausted(&self, needed: usize) -> BitError {
        BitError::Exhausted {
            position: self.position,
            needed,
            length: self.target.len(),
        }
    }

    /// Reads the next `width` bits (1..=64) as an MSB-first integer.
    pub fn read_chunk(&mut self, width: u32) -> Result<u64, BitError> {
        assert!((1..=64).contains(&width), "chunk width {width} out of range");
        let w = width as usize;
        if w <= self.remaining() {
            let v = self.target.bits_at(self.position, width);
            self.position += w;
            return Ok(v);
        }
        if self.policy == Exhaustion::Error || self.target.is_empty() {
            return Err(self.exhausted(w - self.remaining()));
        }
        let mut v = 0u64;
        for _ in 0..w {
            if self.position == self.target.len() {
                self.position = 0;
            }
            v = (v << 1) | self.target.get(self.position) as u64;
            self.position += 1;
        }
        Ok(v)
    }

    /// Copies the next `len` bits into a fresh string.
    pub fn read_bits(&mut self, len: usize) -> Result<BitString, BitError> {
        if len <= self.remaining() {
            let s = self.target.slice(self.position, len)?;
            self.position += len;
            return Ok(s);
        }
        if self.policy == Exhaustion::Error || self.target.is_empty() {
            return Err(self.exhausted(len - self.remaining()));
        }
        let mut b = BitBuilder::with_capacity(len);
        let mut left = len;
        while left > 0 {
            let w = left.min(WORD_BITS) as u32;
            b.push_bits(self.read_chunk(w)?, w);
            left -= w as usize;
        }
        Ok(b.finish(self.target.origin()))
    }
}

/// One accepted Solovay-Strassen witness candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WitnessDraw {
    pub value: u64,
    pub bits_consumed: usize,
    pub trials: u32,
}

/// Bit width of the witness chunks for target `n`: ceil(log2 n).
pub fn witness_width(n: u64) -> u32 {
    ceil_log2(n)
}

/// ceil(log2 x) for x >= 1.
pub fn ceil_log2(x: u64) -> u32 {
    assert!(x >= 1);
    64 - (x - 1).leading_zeros()
}

/// Reads ceil(log2 n)-bit chunks until one lands in [1, n-1].
///
/// Chunks equal to 0 or above n-1 are rejected; their bits still count in
/// `bits_consumed`. Under the wrap policy a draw that rejects for more than a
/// full cycle of the string is reported as exhausted.
pub fn draw_witness(cursor: &mut BitCursor<'_>, n: u64) -> Result<WitnessDraw, BitError> {
    assert!(n > 2 && n % 2 == 1, "witness target must be odd and > 2, got {n}");
    let width = witness_width(n);
    let cycle = cursor.target().len() + width as usize;
    let mut consumed = 0usize;
    loop {
        let v = cursor.read_chunk(width)?;
        consumed += width as usize;
        if v >= 1 && v < n {
            return Ok(WitnessDraw {
                value: v,
                bits_consumed: consumed,
                trials: 1,
            });
        }
        if consumed > cycle {
            return Err(BitError::Exhausted {
                position: cursor.position(),
                needed: width as usize,
                length: cursor.target().len(),
            });
        }
    }
}

/// On-disk bitfile encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitFormat {
    #[serde(rename = "packed-msb")]
    PackedMsb,
    #[serde(rename = "ascii01")]
    Ascii01,
}

impl FromStr for BitFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "packed-msb" | "packed" => Ok(BitFormat::PackedMsb),
            "ascii01" | "ascii" => Ok(BitFormat::Ascii01),
            other => Err(format!("unknown bit format `{other}` (expected packed-msb or ascii01)")),
        }
    }
}

impl fmt::Display for BitFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BitFormat::PackedMsb => "packed-msb",
            BitFormat::Ascii01 => "ascii01",
        })
    }
}

fn parse_ascii01(bytes: &[u8], max_bits: Option<usize>, origin: &str) -> Result<BitString, BitError> {
    let limit = max_bits.unwrap_or(usize::MAX);
    let mut b = BitBuilder::with_capacity(bytes.len().min(limit));
    for (offset, &byte) in bytes.iter().enumerate() {
        match byte {
            b'0' | b'1' => {
                if b.len() < limit {
                    b.push_bit(byte == b'1');
                }
            }
            _ if byte.is_ascii_whitespace() => {}
            _ => return Err(BitError::Format { offset, byte }),
        }
    }
    Ok(b.finish(origin))
}

/// Decodes bitfile contents already in memory.
pub fn decode_bitfile(
    bytes: &[u8],
    format: BitFormat,
    max_bits: Option<usize>,
    origin: &str,
) -> Result<BitString, BitError> {
    match format {
        BitFormat::PackedMsb => {
            let len = (bytes.len() * 8).min(max_bits.unwrap_or(usize::MAX));
            Ok(BitString::from_bytes(bytes, len, origin))
        }
        BitFormat::Ascii01 => parse_ascii01(bytes, max_bits, origin),
    }
}

/// Loads a bitfile, keeping at most `max_bits` bits.
pub fn load_bitfile(path: &Path, format: BitFormat, max_bits: Option<usize>) -> Result<BitString, BitError> {
    let bytes = fs::read(path)?;
    decode_bitfile(&bytes, format, max_bits, &path.display().to_string())
}

pub fn encode_bitfile(bits: &BitString, format: BitFormat) -> Vec<u8> {
    match format {
        BitFormat::PackedMsb => bits.to_bytes(),
        BitFormat::Ascii01 => {
            let mut s = bits.to_ascii01().into_bytes();
            s.push(b'\n');
            s
        }
    }
}

pub fn save_bitfile(bits: &BitString, path: &Path, format: BitFormat) -> Result<(), BitError> {
    fs::write(path, encode_bitfile(bits, format))?;
    Ok(())
}

const COMPLEMENT_MARK: char = '!';

/// Flips every bit. The origin label toggles a leading `!`.
pub fn complement(x: &BitString) -> BitString {
    let words = x.words.iter().map(|w| !w).collect();
    let origin = match x.origin.strip_prefix(COMPLEMENT_MARK) {
        Some(rest) => rest.to_string(),
        None => format!("{COMPLEMENT_MARK}{}", x.origin),
    };
    BitString::from_words(words, x.len, origin)
}

/// Cuts `count` consecutive disjoint samples of `sample_len` bits from the front of `x`.
pub fn split_into_samples(x: &BitString, count: usize, sample_len: usize) -> Result<Vec<BitString>, BitError> {
    let needed = count
        .checked_mul(sample_len)
        .ok_or(BitError::TooShort { needed: usize::MAX, available: x.len() })?;
    if needed > x.len() {
        return Err(BitError::TooShort {
            needed,
            available: x.len(),
        });
    }
    (0..count)
        .map(|i| {
            x.slice(i * sample_len, sample_len)
                .map(|s| s.with_origin(format!("{}#{i}", x.origin())))
        })
        .collect()
}
