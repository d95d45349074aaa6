//! Device gateway: one host session per device, fanned out to any number of
//! subscribers.
//!
//! The reader for a device starts with its first subscriber and stops once
//! nobody is listening. A slow subscriber loses the oldest records instead
//! of holding up the reader (broadcast lag). Faults end the session with an
//! error record.

use std::collections::{BTreeMap, HashMap};
use std::net::{SocketAddr, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use sensorlab_protocol::{
    apply_calibration, host_handshake, HostError, Measurement, SensorDescriptor, SensorType, DEFAULT_HANDSHAKE_TIMEOUT,
    DEFAULT_PERIOD_MS,
};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

/// Records buffered per device before slow subscribers start losing the oldest.
pub const STREAM_BUFFER: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceEntry {
    /// Serial as 8 hex digits, used in URLs.
    pub id: String,
    pub serial_number: u32,
    pub sensor_type: SensorType,
    pub label: String,
    pub addr: SocketAddr,
}

impl DeviceEntry {
    pub fn new(serial_number: u32, sensor_type: SensorType, addr: SocketAddr) -> Self {
        DeviceEntry {
            id: format!("{serial_number:08x}"),
            serial_number,
            sensor_type,
            label: sensor_type.label().to_string(),
            addr,
        }
    }
}

/// One line of a device stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StreamRecord {
    Measurement {
        device: String,
        timestamp_ms: u32,
        /// Engineering units per channel. Body temperature arrives as raw
        /// counts and is calibrated to °C here.
        values: Vec<f64>,
        /// The measurement exactly as the device sent it, ready to submit as
        /// a data point.
        measurement: Measurement,
    },
    Error {
        device: String,
        message: String,
    },
}

impl StreamRecord {
    pub fn is_error(&self) -> bool {
        matches!(self, StreamRecord::Error { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GatewayConfig {
    pub period_ms: u16,
    /// How long the reader waits for a DATA frame before it calls the device
    /// silent.
    pub data_timeout: Duration,
    pub handshake_timeout: Duration,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            period_ms: DEFAULT_PERIOD_MS,
            data_timeout: Duration::from_secs(2),
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
        }
    }
}

type Channels = Arc<Mutex<HashMap<String, broadcast::Sender<StreamRecord>>>>;

#[derive(Debug, Default)]
pub struct Gateway {
    config: GatewayConfig,
    devices: BTreeMap<String, DeviceEntry>,
    live: Channels,
}

/// Handshakes once with the device at `addr` to learn what it is.
pub fn probe(addr: SocketAddr, timeout: Duration) -> Result<DeviceEntry, HostError> {
    let stream = TcpStream::connect_timeout(&addr, timeout)?;
    let _ = stream.set_nodelay(true);
    let session = host_handshake(stream, timeout)?;
    let d = session.descriptor();
    Ok(DeviceEntry::new(d.serial_number, d.sensor_type, addr))
}

impl Gateway {
    pub fn new(config: GatewayConfig) -> Self {
        Gateway { config, ..Gateway::default() }
    }

    pub fn register(&mut self, entry: DeviceEntry) {
        self.devices.insert(entry.id.clone(), entry);
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceEntry> {
        self.devices.values()
    }

    pub fn device(&self, id: &str) -> Option<&DeviceEntry> {
        self.devices.get(&id.to_ascii_lowercase())
    }

    /// Subscribes to a device, starting its reader if none is running.
    /// `None` when the device is not registered.
    pub fn subscribe(&self, id: &str) -> Option<broadcast::Receiver<StreamRecord>> {
        let entry = self.device(id)?.clone();
        let mut live = self.live.lock().expect("gateway lock");
        if let Some(tx) = live.get(&entry.id) {
            return Some(tx.subscribe());
        }
        let (tx, rx) = broadcast::channel(STREAM_BUFFER);
        live.insert(entry.id.clone(), tx.clone());
        let reader = Reader { entry, config: self.config, tx, live: Arc::clone(&self.live) };
        thread::Builder::new()
            .name(format!("gateway-{}", reader.entry.id))
            .spawn(move || reader.run())
            .expect("spawn gateway reader");
        Some(rx)
    }

    /// Devices with a reader currently running.
    pub fn active_readers(&self) -> usize {
        self.live.lock().expect("gateway lock").len()
    }
}

struct Reader {
    entry: DeviceEntry,
    config: GatewayConfig,
    tx: broadcast::Sender<StreamRecord>,
    live: Channels,
}

fn engineering(m: &Measurement, descriptor: &SensorDescriptor) -> Result<Vec<f64>, String> {
    match (m.sensor_type, &descriptor.calibration) {
        (SensorType::BodyTemp, Some(cal)) => m
            .values
            .iter()
            .map(|raw| apply_calibration(*raw, cal).map(|c| c.as_f64()).map_err(|e| e.to_string()))
            .collect(),
        _ => Ok(m.values.iter().map(|v| v.as_f64()).collect()),
    }
}

impl Reader {
    fn run(self) {
        match self.stream() {
            Ok(()) => debug!("gateway {}: no subscribers left", self.entry.id),
            Err(message) => {
                warn!("gateway {}: {message}", self.entry.id);
                // Leave the registry first so a later subscriber gets a fresh
                // session rather than a channel that is about to close.
                self.retire();
                let _ = self.tx.send(StreamRecord::Error { device: self.entry.id.clone(), message });
            }
        }
    }

    /// Removes this reader from the live map unless subscribers remain.
    /// Returns false when it must keep going.
    fn retire_if_idle(&self) -> bool {
        let mut live = self.live.lock().expect("gateway lock");
        if self.tx.receiver_count() > 0 {
            return false;
        }
        live.remove(&self.entry.id);
        true
    }

    fn retire(&self) {
        let mut live = self.live.lock().expect("gateway lock");
        if live.get(&self.entry.id).is_some_and(|tx| tx.same_channel(&self.tx)) {
            live.remove(&self.entry.id);
        }
    }

    fn stream(&self) -> Result<(), String> {
        let timeout = self.config.handshake_timeout;
        let stream = TcpStream::connect_timeout(&self.entry.addr, timeout).map_err(|e| format!("connect: {e}"))?;
        let _ = stream.set_nodelay(true);
        let mut session = host_handshake(stream, timeout).map_err(|e| format!("handshake: {e}"))?;
        if session.descriptor().serial_number != self.entry.serial_number {
            return Err(format!(
                "expected device {:08x}, found {:08x}",
                self.entry.serial_number,
                session.descriptor().serial_number
            ));
        }
        let descriptor = session.descriptor().clone();
        session.start(self.config.period_ms).map_err(|e| format!("start: {e}"))?;
        loop {
            let m = session.next_measurement(self.config.data_timeout).map_err(|e| e.to_string())?;
            let values = engineering(&m, &descriptor)?;
            let record =
                StreamRecord::Measurement { device: self.entry.id.clone(), timestamp_ms: m.timestamp_ms, values, measurement: m };
            if self.tx.send(record).is_err() && self.retire_if_idle() {
                let _ = session.stop(Duration::from_millis(50));
                return Ok(());
            }
        }
    }
}
