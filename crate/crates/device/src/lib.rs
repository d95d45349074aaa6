//! Virtual plug-and-play sensors.
//!
//! Each device listens on its own TCP endpoint and speaks the same framed
//! protocol as the hardware, so hosts cannot tell the difference. A
//! [`DeviceFarm`] groups devices; [`spawn_class_kit`] builds the standard
//! classroom bundle.

pub mod control;
pub mod device;
pub mod error;
pub mod farm;
pub mod signal;

pub use device::{default_calibration, spawn_device, DeviceConfig, DeviceHandle, Fault};
pub use error::{ConfigError, DeviceError, FarmError};
pub use farm::{kit_serial, spawn_class_kit, spawn_farm, DeviceFarm, KitOptions, CLASS_KIT_PER_TYPE};
pub use signal::{SignalGenerator, SignalMode, SignalModel};
