//! Wire framing.
//!
//! ```text
//! +------+------+---------+------+-----+-----------------+-----------+
//! | 0xAA | 0x55 | version | type | len | payload (len B) | crc16 BE  |
//! +------+------+---------+------+-----+-----------------+-----------+
//! ```
//!
//! The CRC is CRC-16/CCITT-FALSE over `version..payload`.

use crc::{Crc, CRC_16_IBM_3740};

use crate::error::{DecodeError, OversizeError};

pub const SYNC: [u8; 2] = [0xAA, 0x55];
pub const VERSION: u8 = 0x01;
pub const MAX_PAYLOAD: usize = 64;
/// Sync, version, type and length.
pub const HEADER_LEN: usize = 5;
pub const CRC_LEN: usize = 2;

// CRC-16/IBM-3740 is the catalogue name for CCITT-FALSE (poly 0x1021, init 0xFFFF).
const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    IdentReq,
    IdentResp,
    Start,
    Stop,
    Data,
    Nack,
}

impl FrameType {
    pub const ALL: [FrameType; 6] = [
        FrameType::IdentReq,
        FrameType::IdentResp,
        FrameType::Start,
        FrameType::Stop,
        FrameType::Data,
        FrameType::Nack,
    ];

    pub fn code(self) -> u8 {
        match self {
            FrameType::IdentReq => 0x01,
            FrameType::IdentResp => 0x02,
            FrameType::Start => 0x03,
            FrameType::Stop => 0x04,
            FrameType::Data => 0x05,
            FrameType::Nack => 0x06,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(frame_type: FrameType, payload: Vec<u8>) -> Self {
        Frame { frame_type, payload }
    }

    pub fn empty(frame_type: FrameType) -> Self {
        Frame { frame_type, payload: Vec::new() }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() + CRC_LEN
    }
}

pub fn encode_frame(frame: &Frame) -> Result<Vec<u8>, OversizeError> {
    let len = frame.payload.len();
    if len > MAX_PAYLOAD {
        return Err(OversizeError { len });
    }
    let mut out = Vec::with_capacity(frame.encoded_len());
    out.extend_from_slice(&SYNC);
    out.push(VERSION);
    out.push(frame.frame_type.code());
    out.push(len as u8);
    out.extend_from_slice(&frame.payload);
    let crc = crc16(&out[SYNC.len()..]);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

fn find_sync(buf: &[u8]) -> Option<usize> {
    buf.windows(2).position(|w| w == SYNC)
}

/// Decodes the first frame in `buf`, skipping any garbage before the first
/// sync pair. Returns the frame and the number of bytes consumed (garbage
/// prefix included).
pub fn decode_frame(buf: &[u8]) -> Result<(Frame, usize), DecodeError> {
    let Some(start) = find_sync(buf) else {
        // A trailing 0xAA may be the first half of a sync pair.
        let keep = usize::from(buf.last() == Some(&SYNC[0]));
        return Err(DecodeError::Incomplete { skipped: buf.len() - keep });
    };
    let rest = &buf[start..];
    if rest.len() < HEADER_LEN {
        return Err(DecodeError::Incomplete { skipped: start });
    }
    let (version, type_byte, len) = (rest[2], rest[3], rest[4]);
    // A sync pair can never overlap itself, so resuming two bytes on is safe.
    let resync = start + SYNC.len();
    if usize::from(len) > MAX_PAYLOAD {
        return Err(DecodeError::Length { byte: len, consumed: resync });
    }
    let total = HEADER_LEN + usize::from(len) + CRC_LEN;
    if rest.len() < total {
        return Err(DecodeError::Incomplete { skipped: start });
    }
    let body_end = HEADER_LEN + usize::from(len);
    let expected = crc16(&rest[SYNC.len()..body_end]);
    let actual = u16::from_be_bytes([rest[body_end], rest[body_end + 1]]);
    if expected != actual {
        return Err(DecodeError::Checksum { expected, actual, consumed: resync });
    }
    let consumed = start + total;
    if version != VERSION {
        return Err(DecodeError::Version { byte: version, consumed });
    }
    let Some(frame_type) = FrameType::from_code(type_byte) else {
        return Err(DecodeError::FrameType { byte: type_byte, consumed });
    };
    let payload = rest[HEADER_LEN..body_end].to_vec();
    Ok((Frame { frame_type, payload }, consumed))
}

/// Incremental decoder for a byte stream that may arrive in arbitrary chunks.
#[derive(Debug, Default)]
pub struct FrameReader {
    buf: Vec<u8>,
}

impl FrameReader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Next frame or error, or `None` when more bytes are needed.
    pub fn next_frame(&mut self) -> Option<Result<Frame, DecodeError>> {
        match decode_frame(&self.buf) {
            Ok((frame, consumed)) => {
                self.buf.drain(..consumed);
                Some(Ok(frame))
            }
            Err(DecodeError::Incomplete { skipped }) => {
                self.buf.drain(..skipped);
                None
            }
            Err(err) => {
                self.buf.drain(..err.consumed());
                Some(Err(err))
            }
        }
    }
}
