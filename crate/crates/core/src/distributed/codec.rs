//! Wire frames.
//!
//! ```text
//! magic 0x51   u8
//! kind         u8
//! sender       u16
//! s            u32
//! t            u32
//! scalar_count u32
//! n            u8
//! codes        scalar_count · n bits, LSB first, zero-padded
//! ```
//!
//! Integers are little-endian; the header is 17 bytes.

use crate::error::{Error, Result};
use crate::quantizer::{pack_codes, packed_len, unpack_codes, Family};

pub const FRAME_MAGIC: u8 = 0x51;
pub const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageKind {
    StateOuter = 0,
    GradOuter = 1,
    StateInner = 2,
    GradInner = 3,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] =
        [MessageKind::StateOuter, MessageKind::GradOuter, MessageKind::StateInner, MessageKind::GradInner];

    pub fn family(self) -> Family {
        match self {
            MessageKind::StateOuter => Family::A,
            MessageKind::GradOuter => Family::B,
            MessageKind::StateInner => Family::C,
            MessageKind::GradInner => Family::D,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL.get(v as usize).copied().ok_or_else(|| Error::Codec(format!("unknown message kind {v}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::StateOuter => "state_outer",
            MessageKind::GradOuter => "grad_outer",
            MessageKind::StateInner => "state_inner",
            MessageKind::GradInner => "grad_inner",
        }
    }

    pub fn is_outer(self) -> bool {
        matches!(self, MessageKind::StateOuter | MessageKind::GradOuter)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: u16,
    pub s: u32,
    /// Zero for outer kinds.
    pub t: u32,
    pub bits: u8,
    pub codes: Vec<u32>,
}

impl Message {
    pub fn frame_len(&self) -> usize {
        HEADER_LEN + packed_len(self.codes.len(), self.bits)
    }

    /// Codeword bits carried, independent of padding.
    pub fn payload_bits(&self) -> u64 {
        self.codes.len() as u64 * u64::from(self.bits)
    }
}

pub fn encode_message(m: &Message) -> Result<Vec<u8>> {
    if !(1..=32).contains(&m.bits) {
        return Err(Error::Codec(format!("code width {} out of range", m.bits)));
    }
    if m.bits < 32 {
        if let Some(c) = m.codes.iter().find(|&&c| c >> m.bits != 0) {
            return Err(Error::Codec(format!("code {c} does not fit in {} bits", m.bits)));
        }
    }
    let count = u32::try_from(m.codes.len()).map_err(|_| Error::Codec("too many scalars for one frame".into()))?;
    let mut out = Vec::with_capacity(m.frame_len());
    out.push(FRAME_MAGIC);
    out.push(m.kind as u8);
    out.extend_from_slice(&m.sender.to_le_bytes());
    out.extend_from_slice(&m.s.to_le_bytes());
    out.extend_from_slice(&m.t.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.push(m.bits);
    out.extend_from_slice(&pack_codes(&m.codes, m.bits));
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<Message> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Codec(format!("frame of {} bytes is shorter than the header", bytes.len())));
    }
    if bytes[0] != FRAME_MAGIC {
        return Err(Error::Codec(format!("bad frame magic {:#04x}", bytes[0])));
    }
    let kind = MessageKind::from_u8(bytes[1])?;
    let u32_at = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().unwrap());
    let sender = u16::from_le_bytes([bytes[2], bytes[3]]);
    let s = u32_at(4);
    let t = u32_at(8);
    let count = u32_at(12) as usize;
    let bits = bytes[16];
    let body = &bytes[HEADER_LEN..];
    if body.len() > packed_len(count, bits.max(1)) {
        return Err(Error::Codec("trailing bytes after payload".into()));
    }
    let codes = unpack_codes(body, bits, count)?;
    Ok(Message { kind, sender, s, t, bits, codes })
}
