//! Wire protocol spoken between a host and a plug-and-play classroom sensor.
//!
//! Frames are self-delimiting and CRC-protected so a host can pick them out
//! of any reliable byte stream (a serial device node or, for the simulator, a
//! TCP socket).

pub mod calibration;
pub mod error;
pub mod frame;
pub mod host;
pub mod payload;
pub mod types;

pub use calibration::{apply_calibration, invert_calibration};
pub use error::{CalibrationError, DecodeError, DescriptorError, HostError, OversizeError, PayloadError};
pub use frame::{crc16, decode_frame, encode_frame, Frame, FrameReader, FrameType};
pub use host::{host_handshake, HostSession, Link, DEFAULT_HANDSHAKE_TIMEOUT};
pub use payload::{DataPayload, DEFAULT_PERIOD_MS};
pub use types::{
    CalibrationRecord, Centi, ChannelSpec, FirmwareVersion, Measurement, SensorDescriptor, SensorType, Unit,
};
