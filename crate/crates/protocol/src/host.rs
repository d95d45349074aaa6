//! Host side of the link: handshake, start/stop and measurement reads.

use std::io::{self, Read, Write};
use std::net::TcpStream;
use std::time::{Duration, Instant};

use crate::error::{HostError, PayloadError};
use crate::frame::{encode_frame, Frame, FrameReader, FrameType};
use crate::payload::{self, decode_data, decode_descriptor};
use crate::types::{Measurement, SensorDescriptor};

pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_millis(500);

/// A reliable ordered byte stream whose reads can time out.
pub trait Link: Read + Write {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()>;
}

impl Link for TcpStream {
    fn set_read_timeout(&mut self, timeout: Option<Duration>) -> io::Result<()> {
        TcpStream::set_read_timeout(self, timeout)
    }
}

/// An exclusive session with one device.
pub struct HostSession<L: Link> {
    link: L,
    reader: FrameReader,
    descriptor: SensorDescriptor,
    checksum_errors: u64,
}

fn is_timeout(err: &io::Error) -> bool {
    matches!(err.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

fn send(link: &mut impl Write, frame: &Frame) -> Result<(), HostError> {
    let bytes = encode_frame(frame).map_err(PayloadError::from)?;
    link.write_all(&bytes)?;
    link.flush()?;
    Ok(())
}

enum Wait {
    Frame(Frame),
    Timeout,
}

/// Blocks until a decodable frame or a decode error is available, or `deadline` passes.
fn next_frame<L: Link>(
    link: &mut L,
    reader: &mut FrameReader,
    deadline: Instant,
) -> Result<Wait, HostError> {
    let mut buf = [0u8; 256];
    loop {
        if let Some(result) = reader.next_frame() {
            return Ok(Wait::Frame(result?));
        }
        let now = Instant::now();
        if now >= deadline {
            return Ok(Wait::Timeout);
        }
        link.set_read_timeout(Some(deadline - now))?;
        match link.read(&mut buf) {
            Ok(0) => return Err(HostError::Closed),
            Ok(n) => reader.push(&buf[..n]),
            Err(e) if is_timeout(&e) => return Ok(Wait::Timeout),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
}

/// Sends `IDENT_REQ` and waits up to `timeout` for the device to identify itself.
pub fn host_handshake<L: Link>(mut link: L, timeout: Duration) -> Result<HostSession<L>, HostError> {
    let deadline = Instant::now() + timeout;
    let mut reader = FrameReader::new();
    send(&mut link, &Frame::empty(FrameType::IdentReq))?;
    loop {
        match next_frame(&mut link, &mut reader, deadline)? {
            Wait::Timeout => return Err(HostError::DeviceAbsent(timeout)),
            Wait::Frame(frame) => match frame.frame_type {
                FrameType::IdentResp => {
                    let descriptor = decode_descriptor(&frame.payload)?;
                    return Ok(HostSession { link, reader, descriptor, checksum_errors: 0 });
                }
                FrameType::Nack => return Err(HostError::Nack(frame.payload.first().copied().unwrap_or(0))),
                // Leftover stream from a previous session.
                FrameType::Data => {}
                other => return Err(HostError::Unexpected(other)),
            },
        }
    }
}

impl<L: Link> HostSession<L> {
    pub fn descriptor(&self) -> &SensorDescriptor {
        &self.descriptor
    }

    /// Checksum failures seen so far; each discarded frame counts once.
    pub fn checksum_errors(&self) -> u64 {
        self.checksum_errors
    }

    pub fn start(&mut self, period_ms: u16) -> Result<(), HostError> {
        send(&mut self.link, &payload::start_frame(period_ms))
    }

    /// Sends `STOP` and discards anything already in flight for `drain`.
    pub fn stop(&mut self, drain: Duration) -> Result<(), HostError> {
        send(&mut self.link, &Frame::empty(FrameType::Stop))?;
        let deadline = Instant::now() + drain;
        loop {
            match next_frame(&mut self.link, &mut self.reader, deadline) {
                Ok(Wait::Frame(_)) | Err(HostError::Decode(_)) => {}
                Ok(Wait::Timeout) => break,
                Err(e) => return Err(e),
            }
        }
        self.reader = FrameReader::new();
        Ok(())
    }

    /// Waits for the next `DATA` frame and validates it against the descriptor.
    pub fn next_measurement(&mut self, timeout: Duration) -> Result<Measurement, HostError> {
        let deadline = Instant::now() + timeout;
        let frame = match next_frame(&mut self.link, &mut self.reader, deadline) {
            Ok(Wait::Frame(frame)) => frame,
            Ok(Wait::Timeout) => return Err(HostError::Timeout(timeout)),
            Err(e) => {
                if e.is_checksum() {
                    self.checksum_errors += 1;
                }
                return Err(e);
            }
        };
        match frame.frame_type {
            FrameType::Data => {
                let data = decode_data(&frame.payload)?;
                if data.serial_number != self.descriptor.serial_number {
                    return Err(HostError::SerialMismatch {
                        expected: self.descriptor.serial_number,
                        actual: data.serial_number,
                    });
                }
                let measurement = Measurement {
                    sensor_type: self.descriptor.sensor_type,
                    timestamp_ms: data.timestamp_ms,
                    values: data.values,
                };
                if !measurement.conforms_to(&self.descriptor) {
                    return Err(HostError::OutOfRange(measurement));
                }
                Ok(measurement)
            }
            FrameType::Nack => Err(HostError::Nack(frame.payload.first().copied().unwrap_or(0))),
            other => Err(HostError::Unexpected(other)),
        }
    }

    pub fn into_inner(self) -> L {
        self.link
    }
}
