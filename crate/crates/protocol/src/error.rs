use std::io;
use std::time::Duration;

use thiserror::Error;

use crate::types::{Centi, SensorType, Unit};

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("payload of {len} bytes exceeds the 64-byte frame limit")]
pub struct OversizeError {
    pub len: usize,
}

/// Failure to pull a frame out of a byte buffer.
///
/// Every variant except [`DecodeError::Incomplete`] carries `consumed`: the
/// number of bytes the caller should drop before trying again.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("need more bytes")]
    Incomplete { skipped: usize },
    #[error("checksum mismatch: expected {expected:#06x}, got {actual:#06x}")]
    Checksum { expected: u16, actual: u16, consumed: usize },
    #[error("unsupported protocol version {byte:#04x}")]
    Version { byte: u8, consumed: usize },
    #[error("unknown frame type {byte:#04x}")]
    FrameType { byte: u8, consumed: usize },
    #[error("declared payload length {byte} exceeds 64")]
    Length { byte: u8, consumed: usize },
}

impl DecodeError {
    pub fn consumed(&self) -> usize {
        match *self {
            DecodeError::Incomplete { skipped } => skipped,
            DecodeError::Checksum { consumed, .. }
            | DecodeError::Version { consumed, .. }
            | DecodeError::FrameType { consumed, .. }
            | DecodeError::Length { consumed, .. } => consumed,
        }
    }

    pub fn is_checksum(&self) -> bool {
        matches!(self, DecodeError::Checksum { .. })
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DescriptorError {
    #[error("{sensor_type} declares {expected} channel(s), descriptor has {actual}")]
    ChannelCount { sensor_type: SensorType, expected: usize, actual: usize },
    #[error("channel {channel} has an empty range")]
    EmptyRange { channel: usize },
    #[error("channel {channel} reports unit {unit:?}, which does not fit its sensor type")]
    UnitMismatch { channel: usize, unit: Unit },
    #[error("body temperature descriptor lacks a calibration record")]
    MissingCalibration,
    #[error("{0} must not carry a calibration record")]
    UnexpectedCalibration(SensorType),
    #[error("calibration gain must be positive")]
    NonPositiveGain,
    #[error("calibration maps channel range outside 25.00..=45.00 °C ({low} .. {high})")]
    CalibrationWindow { low: Centi, high: Centi },
}

/// Malformed payload inside an otherwise valid frame.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PayloadError {
    #[error("payload truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("{extra} trailing byte(s) after payload")]
    Trailing { extra: usize },
    #[error("unknown sensor type code {0:#04x}")]
    SensorType(u8),
    #[error("unknown unit code {0:#04x}")]
    Unit(u8),
    #[error("invalid calibration flag {0:#04x}")]
    CalibrationFlag(u8),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
    #[error(transparent)]
    Oversize(#[from] OversizeError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationError {
    #[error("calibration gain must be positive")]
    NonPositiveGain,
    #[error("calibrated temperature {0} °C outside 25.00..=45.00")]
    OutOfRange(Centi),
}

/// Errors surfaced by a host session.
#[derive(Debug, Error)]
pub enum HostError {
    #[error("no device answered within {0:?}")]
    DeviceAbsent(Duration),
    #[error("timed out waiting for data after {0:?}")]
    Timeout(Duration),
    #[error("frame rejected: {0}")]
    Decode(#[from] DecodeError),
    #[error("malformed payload: {0}")]
    Payload(#[from] PayloadError),
    #[error("unexpected {0:?} frame")]
    Unexpected(crate::frame::FrameType),
    #[error("device refused request (reason {0:#04x})")]
    Nack(u8),
    #[error("measurement outside the declared channel ranges: {0:?}")]
    OutOfRange(crate::types::Measurement),
    #[error("device closed the stream")]
    Closed,
    #[error("serial mismatch: handshake reported {expected}, data carried {actual}")]
    SerialMismatch { expected: u32, actual: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HostError {
    pub fn is_checksum(&self) -> bool {
        matches!(self, HostError::Decode(e) if e.is_checksum())
    }
}
