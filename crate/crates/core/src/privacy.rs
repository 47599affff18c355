//! Privacy amplification with a banded binary-matrix (Toeplitz) hash.

use std::fmt;

use crate::error::{Error, Result};
use crate::par;
use crate::sampler::GaussianSampler;

/// Default security margin subtracted from every final key, in bits.
pub const DEFAULT_SAFETY_MARGIN: u64 = 64;

/// Packed bit string. Bit 0 is the most significant bit of the first word,
/// so the byte serialization is MSB-first. Unused trailing bits are zero.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BinaryKey {
    words: Vec<u64>,
    len: usize,
}

impl fmt::Debug for BinaryKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len <= 128 {
            write!(f, "BinaryKey({})", self.to_bit_string())
        } else {
            write!(f, "BinaryKey({} bits)", self.len)
        }
    }
}

impl BinaryKey {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut key = Self::new();
        for b in bits {
            key.push(b);
        }
        key
    }

    /// Parses a string of `0`/`1` characters.
    pub fn parse_bits(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::invalid("bits", format!("unexpected character {c:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }

    /// Uniformly random key of `len` bits.
    pub fn random(len: usize, sampler: &GaussianSampler) -> Self {
        let mut key = Self {
            words: (0..len.div_ceil(64) as u64).map(|i| sampler.word(i)).collect(),
            len,
        };
        key.clear_tail();
        key
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for key of {} bits", self.len);
        self.words[i / 64] >> (63 - i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range for key of {} bits", self.len);
        let mask = 1u64 << (63 - i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn extend_from(&mut self, other: &BinaryKey) {
        for b in other.iter() {
            self.push(b);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Bitwise XOR of two keys of equal length.
    pub fn xor(&self, other: &BinaryKey) -> Result<BinaryKey> {
        if self.len != other.len {
            return Err(Error::LengthMismatch {
                what: "xor operands",
                left: self.len,
                right: other.len,
            });
        }
        Ok(BinaryKey {
            words: self.words.iter().zip(&other.words).map(|(a, b)| a ^ b).collect(),
            len: self.len,
        })
    }

    pub fn to_bit_string(&self) -> String {
        self.iter().map(|b| if b { '1' } else { '0' }).collect()
    }

    /// MSB-first packed bytes, zero-padded to a whole byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_be_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    /// Inverse of [`BinaryKey::to_bytes`]. Padding bits must be zero.
    pub fn from_bytes(bytes: &[u8], len: usize) -> Result<Self> {
        if bytes.len() != len.div_ceil(8) {
            return Err(Error::LengthMismatch {
                what: "packed bytes for bit length",
                left: bytes.len(),
                right: len.div_ceil(8),
            });
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut buf = [0u8; 8];
                buf[..c.len()].copy_from_slice(c);
                u64::from_be_bytes(buf)
            })
            .collect();
        let key = Self { words, len };
        let mut cleared = key.clone();
        cleared.clear_tail();
        if cleared != key {
            return Err(Error::invalid("bits", "nonzero padding after the last bit"));
        }
        Ok(key)
    }

    /// Serialized form: bit length as a big-endian u64, then the packed bytes.
    pub fn serialize(&self) -> Vec<u8> {
        let mut out = (self.len as u64).to_be_bytes().to_vec();
        out.extend(self.to_bytes());
        out
    }

    pub fn deserialize(data: &[u8]) -> Result<Self> {
        if data.len() < 8 {
            return Err(Error::invalid("key", "missing 8-byte length header"));
        }
        let len = u64::from_be_bytes(data[..8].try_into().expect("8 bytes"));
        let len = usize::try_from(len).map_err(|_| Error::invalid("key", "length does not fit in memory"))?;
        Self::from_bytes(&data[8..], len)
    }

    fn clear_tail(&mut self) {
        let r = self.len % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= !0u64 << (64 - r);
            }
        }
    }

    /// 64 bits starting at bit `offset`, zero-filled past the end.
    #[inline]
    fn window(&self, offset: usize) -> u64 {
        let (w, r) = (offset / 64, offset % 64);
        let hi = self.words.get(w).copied().unwrap_or(0);
        if r == 0 {
            hi
        } else {
            let lo = self.words.get(w + 1).copied().unwrap_or(0);
            hi << r | lo >> (64 - r)
        }
    }
}

/// Inputs to the final-length computation, all in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AmplificationBudget {
    pub raw_bits: u64,
    pub leaked_bits: u64,
    pub eve_bits: u64,
    pub safety_margin: u64,
}

/// `max(0, raw − leaked − eve − margin)`. Zero means no key can be extracted.
pub fn final_key_length(budget: &AmplificationBudget) -> u64 {
    budget
        .raw_bits
        .saturating_sub(budget.leaked_bits)
        .saturating_sub(budget.eve_bits)
        .saturating_sub(budget.safety_margin)
}

/// Seed length required to hash `key_len` bits down to `out_len`.
pub fn seed_length(key_len: usize, out_len: usize) -> usize {
    (key_len + out_len).saturating_sub(1)
}

/// Hashes `key` to `out_len` bits. Output bit `j` is the parity of the key
/// ANDed with the seed window starting at `out_len − 1 − j`; i.e. row `j`
/// of the Toeplitz matrix `T[j][i] = seed[out_len − 1 − j + i]`.
pub fn compress(key: &BinaryKey, hash_seed: &BinaryKey, out_len: usize) -> Result<BinaryKey> {
    if out_len > key.len() {
        return Err(Error::invalid(
            "out_len",
            format!("output length {out_len} exceeds key length {}", key.len()),
        ));
    }
    let need = seed_length(key.len(), out_len);
    if hash_seed.len() != need {
        return Err(Error::invalid(
            "hash_seed",
            format!("seed must have {need} bits for a {}-bit key and {out_len}-bit output, got {}", key.len(), hash_seed.len()),
        ));
    }
    if out_len == 0 {
        return Ok(BinaryKey::new());
    }
    let key_words = key.words.len();
    let out_words: Vec<u64> = par::map_range(out_len.div_ceil(64), |ow| {
        let mut acc = 0u64;
        for j in ow * 64..((ow + 1) * 64).min(out_len) {
            let offset = out_len - 1 - j;
            let mut parity = 0u32;
            for w in 0..key_words {
                parity ^= (key.words[w] & hash_seed.window(offset + 64 * w)).count_ones();
            }
            acc |= ((parity & 1) as u64) << (63 - j % 64);
        }
        acc
    });
    Ok(BinaryKey {
        words: out_words,
        len: out_len,
    })
}
