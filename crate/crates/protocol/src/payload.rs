//! Payload layouts carried inside frames. All integers are big-endian.
//!
//! `IDENT_RESP`: `type u8 | serial u32 | fw_major u8 | fw_minor u8 | n u8 |
//! n × (unit u8 | min i32 | max i32) | cal_flag u8 | [gain_micro i32 | offset i32]`
//!
//! `START`: `period_ms u16` (empty payload selects [`DEFAULT_PERIOD_MS`]).
//!
//! `DATA`: `timestamp_ms u32 | serial u32 | n u8 | n × value i32`
//!
//! `NACK`: `reason u8`

use crate::error::PayloadError;
use crate::frame::{Frame, FrameType};
use crate::types::{
    CalibrationRecord, Centi, ChannelSpec, FirmwareVersion, SensorDescriptor, SensorType, Unit,
};

pub const DEFAULT_PERIOD_MS: u16 = 200;

pub const NACK_UNSUPPORTED: u8 = 0x01;
pub const NACK_BAD_PAYLOAD: u8 = 0x02;
pub const NACK_NOT_STREAMING: u8 = 0x03;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], PayloadError> {
        let end = self.pos + N;
        let slice = self.bytes.get(self.pos..end).ok_or(PayloadError::Truncated {
            need: end,
            have: self.bytes.len(),
        })?;
        self.pos = end;
        Ok(slice.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8, PayloadError> {
        Ok(self.take::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, PayloadError> {
        Ok(u32::from_be_bytes(self.take()?))
    }

    fn i32(&mut self) -> Result<i32, PayloadError> {
        Ok(i32::from_be_bytes(self.take()?))
    }

    fn finish(self) -> Result<(), PayloadError> {
        match self.bytes.len() - self.pos {
            0 => Ok(()),
            extra => Err(PayloadError::Trailing { extra }),
        }
    }
}

pub fn encode_descriptor(descriptor: &SensorDescriptor) -> Vec<u8> {
    let mut out = Vec::with_capacity(36);
    out.push(descriptor.sensor_type.code());
    out.extend(descriptor.serial_number.to_be_bytes());
    out.push(descriptor.firmware.major);
    out.push(descriptor.firmware.minor);
    out.push(descriptor.channels.len() as u8);
    for ch in &descriptor.channels {
        out.push(ch.unit.code());
        out.extend(ch.range_min.0.to_be_bytes());
        out.extend(ch.range_max.0.to_be_bytes());
    }
    match &descriptor.calibration {
        Some(cal) => {
            out.push(1);
            out.extend(cal.gain_micro.to_be_bytes());
            out.extend(cal.offset.0.to_be_bytes());
        }
        None => out.push(0),
    }
    out
}

/// Parses and validates an `IDENT_RESP` payload.
pub fn decode_descriptor(bytes: &[u8]) -> Result<SensorDescriptor, PayloadError> {
    let mut cur = Cursor::new(bytes);
    let type_code = cur.u8()?;
    let sensor_type = SensorType::from_code(type_code).ok_or(PayloadError::SensorType(type_code))?;
    let serial_number = cur.u32()?;
    let firmware = FirmwareVersion { major: cur.u8()?, minor: cur.u8()? };
    let count = cur.u8()?;
    let mut channels = Vec::with_capacity(usize::from(count));
    for _ in 0..count {
        let unit_code = cur.u8()?;
        let unit = Unit::from_code(unit_code).ok_or(PayloadError::Unit(unit_code))?;
        channels.push(ChannelSpec {
            unit,
            range_min: Centi(cur.i32()?),
            range_max: Centi(cur.i32()?),
        });
    }
    let calibration = match cur.u8()? {
        0 => None,
        1 => Some(CalibrationRecord { gain_micro: cur.i32()?, offset: Centi(cur.i32()?) }),
        flag => return Err(PayloadError::CalibrationFlag(flag)),
    };
    cur.finish()?;
    let descriptor = SensorDescriptor { sensor_type, serial_number, firmware, channels, calibration };
    descriptor.validate()?;
    Ok(descriptor)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPayload {
    pub timestamp_ms: u32,
    pub serial_number: u32,
    pub values: Vec<Centi>,
}

pub fn encode_data(data: &DataPayload) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 4 * data.values.len());
    out.extend(data.timestamp_ms.to_be_bytes());
    out.extend(data.serial_number.to_be_bytes());
    out.push(data.values.len() as u8);
    for v in &data.values {
        out.extend(v.0.to_be_bytes());
    }
    out
}

pub fn decode_data(bytes: &[u8]) -> Result<DataPayload, PayloadError> {
    let mut cur = Cursor::new(bytes);
    let timestamp_ms = cur.u32()?;
    let serial_number = cur.u32()?;
    let count = cur.u8()?;
    let values = (0..count).map(|_| cur.i32().map(Centi)).collect::<Result<Vec<_>, _>>()?;
    cur.finish()?;
    Ok(DataPayload { timestamp_ms, serial_number, values })
}

pub fn start_frame(period_ms: u16) -> Frame {
    Frame::new(FrameType::Start, period_ms.to_be_bytes().to_vec())
}

pub fn decode_start(bytes: &[u8]) -> Result<u16, PayloadError> {
    if bytes.is_empty() {
        return Ok(DEFAULT_PERIOD_MS);
    }
    let mut cur = Cursor::new(bytes);
    let period = u16::from_be_bytes(cur.take()?);
    cur.finish()?;
    Ok(period)
}

pub fn nack_frame(reason: u8) -> Frame {
    Frame::new(FrameType::Nack, vec![reason])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip_for_every_type() {
        for t in SensorType::ALL {
            let d = SensorDescriptor::factory(t, 0x0102_0304, Some(CalibrationRecord::new(0.01, 20.0)));
            let bytes = encode_descriptor(&d);
            assert!(bytes.len() <= crate::frame::MAX_PAYLOAD);
            assert_eq!(decode_descriptor(&bytes).unwrap(), d);
        }
    }

    #[test]
    fn descriptor_with_wrong_channel_count_is_rejected() {
        let mut d = SensorDescriptor::factory(SensorType::HeartRate, 1, None);
        d.channels.push(d.channels[0]);
        let err = decode_descriptor(&encode_descriptor(&d)).unwrap_err();
        assert!(matches!(err, PayloadError::Descriptor(_)));
    }

    #[test]
    fn truncated_descriptor() {
        let d = SensorDescriptor::factory(SensorType::Voc, 9, None);
        let bytes = encode_descriptor(&d);
        assert!(matches!(
            decode_descriptor(&bytes[..bytes.len() - 1]),
            Err(PayloadError::Truncated { .. })
        ));
    }

    #[test]
    fn data_round_trip() {
        let data = DataPayload { timestamp_ms: 400, serial_number: 77, values: vec![Centi(2200), Centi(-45)] };
        assert_eq!(decode_data(&encode_data(&data)).unwrap(), data);
    }

    #[test]
    fn start_period() {
        assert_eq!(decode_start(&[]).unwrap(), 200);
        assert_eq!(decode_start(&start_frame(50).payload).unwrap(), 50);
        assert!(decode_start(&[1, 2, 3]).is_err());
    }
}
