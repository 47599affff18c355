//! Wire records of a reconciliation session.
//!
//! Each record is a big-endian `u32` byte count (tag plus payload), a `u8`
//! tag and the payload. See `docs/transcript.md` for the table.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const TAG_SLICE_START: u8 = 1;
const TAG_PARITY_REQ: u8 = 2;
const TAG_PARITY_RESP: u8 = 3;
const TAG_REVEAL: u8 = 4;
const TAG_HASH_CHECK: u8 = 5;
const TAG_DONE: u8 = 6;

/// Bits charged for a verification hash.
pub const HASH_BITS: u64 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Record {
    /// Both parties move to slice `k` (1-based).
    SliceStart(u8),
    /// Bob asks for the parity of positions `start..start+len` of the
    /// shuffled order used in `pass`.
    ParityReq { pass: u16, start: u32, len: u32 },
    ParityResp(u8),
    /// Alice discloses the bit at `pos` of the current slice.
    Reveal { pos: u32, bit: u8 },
    /// Alice's 32-bit hash of her full key.
    HashCheck(u32),
    Done,
}

impl Record {
    fn encode_into(&self, out: &mut Vec<u8>) {
        let mut body = Vec::with_capacity(11);
        match *self {
            Record::SliceStart(k) => body.extend([TAG_SLICE_START, k]),
            Record::ParityReq { pass, start, len } => {
                body.push(TAG_PARITY_REQ);
                body.extend(pass.to_be_bytes());
                body.extend(start.to_be_bytes());
                body.extend(len.to_be_bytes());
            }
            Record::ParityResp(b) => body.extend([TAG_PARITY_RESP, b]),
            Record::Reveal { pos, bit } => {
                body.push(TAG_REVEAL);
                body.extend(pos.to_be_bytes());
                body.push(bit);
            }
            Record::HashCheck(h) => {
                body.push(TAG_HASH_CHECK);
                body.extend(h.to_be_bytes());
            }
            Record::Done => body.push(TAG_DONE),
        }
        out.extend((body.len() as u32).to_be_bytes());
        out.extend(body);
    }

    fn decode(body: &[u8]) -> Result<Record> {
        let bad = || Error::Transcript(format!("malformed record {body:02x?}"));
        let (&tag, payload) = body.split_first().ok_or_else(bad)?;
        let be32 = |b: &[u8]| u32::from_be_bytes(b.try_into().expect("4 bytes"));
        let rec = match (tag, payload.len()) {
            (TAG_SLICE_START, 1) => Record::SliceStart(payload[0]),
            (TAG_PARITY_REQ, 10) => Record::ParityReq {
                pass: u16::from_be_bytes([payload[0], payload[1]]),
                start: be32(&payload[2..6]),
                len: be32(&payload[6..10]),
            },
            (TAG_PARITY_RESP, 1) if payload[0] <= 1 => Record::ParityResp(payload[0]),
            (TAG_REVEAL, 5) if payload[4] <= 1 => Record::Reveal {
                pos: be32(&payload[..4]),
                bit: payload[4],
            },
            (TAG_HASH_CHECK, 4) => Record::HashCheck(be32(payload)),
            (TAG_DONE, 0) => Record::Done,
            _ => return Err(bad()),
        };
        Ok(rec)
    }
}

/// Ordered log of every message exchanged in one session.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcript {
    pub records: Vec<Record>,
}

impl Transcript {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    /// Public disclosure in bits: one per parity answer and revealed bit,
    /// [`HASH_BITS`] per hash.
    pub fn leaked_bits(&self) -> u64 {
        self.records
            .iter()
            .map(|r| match r {
                Record::ParityResp(_) | Record::Reveal { .. } => 1,
                Record::HashCheck(_) => HASH_BITS,
                _ => 0,
            })
            .sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for r in &self.records {
            r.encode_into(&mut out);
        }
        out
    }

    pub fn from_bytes(mut data: &[u8]) -> Result<Self> {
        let mut t = Transcript::default();
        while !data.is_empty() {
            if data.len() < 4 {
                return Err(Error::Transcript("truncated length prefix".into()));
            }
            let len = u32::from_be_bytes(data[..4].try_into().expect("4 bytes")) as usize;
            let body = data
                .get(4..4 + len)
                .ok_or_else(|| Error::Transcript(format!("record of {len} bytes runs past the end")))?;
            t.push(Record::decode(body)?);
            data = &data[4 + len..];
        }
        Ok(t)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(&self.to_bytes())
    }

    pub fn read_from<R: Read>(mut r: R) -> std::io::Result<Result<Self>> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Ok(Self::from_bytes(&buf))
    }
}
