use std::net::SocketAddr;

use sensorlab_protocol::SensorType;

use crate::device::{spawn_device, DeviceConfig, DeviceHandle, Fault};
use crate::error::{DeviceError, FarmError};

/// Units of each sensor type in one class kit.
pub const CLASS_KIT_PER_TYPE: usize = 20;

/// Serial numbers encode the sensor type in the second byte so that every
/// device in a kit is distinct: `0x5E_TT_NNNN`.
pub fn kit_serial(sensor_type: SensorType, index: usize) -> u32 {
    0x5E00_0000 | (u32::from(sensor_type.code()) << 16) | (index as u32 & 0xFFFF)
}

#[derive(Debug, Clone)]
pub struct KitOptions {
    pub count_per_type: usize,
    pub seed: u64,
    pub time_scale: f64,
}

impl Default for KitOptions {
    fn default() -> Self {
        KitOptions { count_per_type: CLASS_KIT_PER_TYPE, seed: 0, time_scale: 1.0 }
    }
}

/// A set of running virtual devices, each on its own endpoint.
#[derive(Debug, Default)]
pub struct DeviceFarm {
    devices: Vec<DeviceHandle>,
}

impl DeviceFarm {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn spawn(&mut self, config: DeviceConfig) -> Result<SocketAddr, DeviceError> {
        let handle = spawn_device(config)?;
        let addr = handle.addr();
        self.devices.push(handle);
        Ok(addr)
    }

    pub fn devices(&self) -> &[DeviceHandle] {
        &self.devices
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn get(&self, serial: u32) -> Option<&DeviceHandle> {
        self.devices.iter().find(|d| d.serial_number() == serial)
    }

    pub fn endpoints(&self) -> Vec<SocketAddr> {
        self.devices.iter().map(DeviceHandle::addr).collect()
    }

    pub fn inject(&self, serial: u32, fault: Fault) -> Result<(), DeviceError> {
        self.get(serial).ok_or(DeviceError::NotFound(serial))?.inject(fault);
        Ok(())
    }

    pub fn clear_faults(&self, serial: u32) -> Result<(), DeviceError> {
        self.get(serial).ok_or(DeviceError::NotFound(serial))?.clear_faults();
        Ok(())
    }

    /// Stops every device and closes all endpoints.
    pub fn stop(self) {
        for device in self.devices {
            device.stop();
        }
    }
}

/// Starts every config; on any failure the devices already running are stopped
/// and the error lists each device that could not start.
pub fn spawn_farm(configs: impl IntoIterator<Item = DeviceConfig>) -> Result<DeviceFarm, FarmError> {
    let mut farm = DeviceFarm::new();
    let mut failed = Vec::new();
    for config in configs {
        let serial = config.serial_number;
        if let Err(e) = farm.spawn(config) {
            failed.push((serial, e));
        }
    }
    if failed.is_empty() {
        Ok(farm)
    } else {
        farm.stop();
        Err(FarmError { failed })
    }
}

pub fn class_kit_configs(options: &KitOptions) -> Vec<DeviceConfig> {
    SensorType::ALL
        .into_iter()
        .flat_map(|sensor_type| (0..options.count_per_type).map(move |index| (sensor_type, index)))
        .map(|(sensor_type, index)| {
            let serial = kit_serial(sensor_type, index);
            let seed = options.seed ^ u64::from(serial).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut config = DeviceConfig::factory(sensor_type, serial, seed);
            config.time_scale = options.time_scale;
            config
        })
        .collect()
}

/// Spawns a class kit: `count_per_type` devices of each of the six sensor types.
pub fn spawn_class_kit(options: &KitOptions) -> Result<DeviceFarm, FarmError> {
    assert!(options.count_per_type >= 1, "a class kit needs at least one device per type");
    spawn_farm(class_kit_configs(options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn minimal_kit_has_one_per_type() {
        let farm = spawn_class_kit(&KitOptions { count_per_type: 1, ..Default::default() }).unwrap();
        assert_eq!(farm.len(), 6);
        let types: HashSet<_> = farm.devices().iter().map(|d| d.sensor_type()).collect();
        assert_eq!(types.len(), 6);
        farm.stop();
    }

    #[test]
    fn kit_serials_are_distinct() {
        let serials: HashSet<_> = SensorType::ALL
            .into_iter()
            .flat_map(|t| (0..CLASS_KIT_PER_TYPE).map(move |i| kit_serial(t, i)))
            .collect();
        assert_eq!(serials.len(), 6 * CLASS_KIT_PER_TYPE);
    }

    #[test]
    fn failed_devices_are_listed() {
        let blocker = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let mut configs = class_kit_configs(&KitOptions { count_per_type: 1, ..Default::default() });
        configs[2].bind = Some(blocker.local_addr().unwrap());
        let err = spawn_farm(configs).unwrap_err();
        assert_eq!(err.failed.len(), 1);
        assert_eq!(err.failed[0].0, kit_serial(SensorType::Voc, 0));
        assert!(err.to_string().contains("0x5e030000"));
    }

    #[test]
    fn inject_unknown_device_is_not_found() {
        let farm = DeviceFarm::new();
        assert!(matches!(farm.inject(42, Fault::Mute), Err(DeviceError::NotFound(42))));
    }
}
