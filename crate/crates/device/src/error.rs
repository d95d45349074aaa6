use std::io;

use sensorlab_protocol::DescriptorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("signal model has {baseline} baseline / {amplitude} amplitude entries for {expected} channel(s)")]
    SignalChannels { expected: usize, baseline: usize, amplitude: usize },
    #[error("channel {channel} amplitude is negative")]
    NegativeAmplitude { channel: usize },
    #[error("channel {channel} baseline ± amplitude leaves the channel range")]
    SignalOutOfRange { channel: usize },
    #[error("time scale must be positive and finite")]
    TimeScale,
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid device config: {0}")]
    Config(#[from] ConfigError),
    #[error("cannot bind device endpoint: {0}")]
    Bind(#[source] io::Error),
    #[error("no device with serial {0:#010x}")]
    NotFound(u32),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Devices that could not be started while building a farm.
#[derive(Debug, Error)]
#[error("{} device(s) failed to start: {}", failed.len(), describe(failed))]
pub struct FarmError {
    pub failed: Vec<(u32, DeviceError)>,
}

fn describe(failed: &[(u32, DeviceError)]) -> String {
    failed
        .iter()
        .map(|(serial, err)| format!("{serial:#010x} ({err})"))
        .collect::<Vec<_>>()
        .join(", ")
}
