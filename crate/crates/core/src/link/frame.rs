//! Wire frame: `A5 01 type seq:u16le len:u8 payload crc:u16le`, with the CRC
//! (CCITT-FALSE) over every byte before it.

use crc::{Crc, CRC_16_IBM_3740};

use super::{LinkError, Result};

pub const FRAME_MAGIC: u8 = 0xA5;
pub const FRAME_VERSION: u8 = 1;
const HEADER_LEN: usize = 6;
/// Header plus CRC bytes added around a payload.
pub const FRAME_OVERHEAD: usize = HEADER_LEN + 2;

// CRC-16/IBM-3740 is the catalogue name of CCITT-FALSE.
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    UplinkSpec = 1,
    DownlinkMask = 2,
}

impl TryFrom<u8> for MsgType {
    type Error = LinkError;
    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(Self::UplinkSpec),
            2 => Ok(Self::DownlinkMask),
            _ => Err(LinkError::Framing(format!("unknown message type {v}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub seq: u16,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn encode(&self) -> Result<Vec<u8>> {
        frame_encode(self.msg_type, self.seq, &self.payload)
    }
}

pub fn frame_encode(msg_type: MsgType, seq: u16, payload: &[u8]) -> Result<Vec<u8>> {
    let len = u8::try_from(payload.len())
        .map_err(|_| LinkError::Framing(format!("payload of {} B exceeds 255", payload.len())))?;
    let mut out = Vec::with_capacity(payload.len() + FRAME_OVERHEAD);
    out.extend_from_slice(&[FRAME_MAGIC, FRAME_VERSION, msg_type as u8]);
    out.extend_from_slice(&seq.to_le_bytes());
    out.push(len);
    out.extend_from_slice(payload);
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Length is checked first (framing), then the CRC (integrity), then the
/// header fields it covers.
pub fn frame_decode(bytes: &[u8]) -> Result<Frame> {
    if bytes.len() < FRAME_OVERHEAD {
        return Err(LinkError::Framing(format!("truncated: {} B", bytes.len())));
    }
    let len = bytes[5] as usize;
    let total = len + FRAME_OVERHEAD;
    if bytes.len() != total {
        return Err(LinkError::Framing(format!(
            "length byte says {total} B, got {}",
            bytes.len()
        )));
    }
    let (body, tail) = bytes.split_at(total - 2);
    let expected = u16::from_le_bytes([tail[0], tail[1]]);
    let actual = crc16(body);
    if expected != actual {
        return Err(LinkError::Integrity { expected, actual });
    }
    if body[0] != FRAME_MAGIC {
        return Err(LinkError::Framing(format!("bad magic {:#04x}", body[0])));
    }
    if body[1] != FRAME_VERSION {
        return Err(LinkError::Framing(format!("unsupported version {}", body[1])));
    }
    Ok(Frame {
        msg_type: MsgType::try_from(body[2])?,
        seq: u16::from_le_bytes([body[3], body[4]]),
        payload: body[HEADER_LEN..].to_vec(),
    })
}
