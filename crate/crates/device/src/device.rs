//! A single simulated sensor behind a TCP endpoint.

use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU8, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use log::{debug, warn};
use sensorlab_protocol::payload::{self, DataPayload, NACK_BAD_PAYLOAD, NACK_NOT_STREAMING, NACK_UNSUPPORTED};
use sensorlab_protocol::{
    encode_frame, CalibrationRecord, Centi, Frame, FrameReader, FrameType, SensorDescriptor, SensorType,
};
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, DeviceError};
use crate::signal::{SignalGenerator, SignalMode, SignalModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub sensor_type: SensorType,
    pub serial_number: u32,
    pub signal: SignalModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
    pub jitter_seed: u64,
    /// Endpoint to bind; `None` picks a free loopback port.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind: Option<SocketAddr>,
    /// Simulated milliseconds per wall-clock millisecond.
    #[serde(default = "default_time_scale")]
    pub time_scale: f64,
}

fn default_time_scale() -> f64 {
    1.0
}

/// Default body-temperature calibration: 500..2500 counts map onto 25..45 °C.
pub fn default_calibration() -> CalibrationRecord {
    CalibrationRecord::new(0.01, 20.0)
}

impl DeviceConfig {
    /// Factory defaults for `sensor_type`: a gentle drift around a
    /// classroom-typical reading.
    pub fn factory(sensor_type: SensorType, serial_number: u32, jitter_seed: u64) -> Self {
        let c = Centi::from_f64;
        let (baseline, amplitude, mode) = match sensor_type {
            SensorType::TempHumidity => (vec![c(22.0), c(45.0)], vec![c(1.5), c(5.0)], SignalMode::SinusoidDrift),
            SensorType::LightUv => (vec![c(450.0), c(1.0)], vec![c(50.0), c(0.5)], SignalMode::SinusoidDrift),
            SensorType::Voc => (vec![c(300.0)], vec![c(100.0)], SignalMode::SinusoidDrift),
            SensorType::Conductance => (vec![c(500.0)], vec![c(50.0)], SignalMode::StepResponse),
            SensorType::BodyTemp => (vec![c(1650.0)], vec![c(30.0)], SignalMode::StepResponse),
            SensorType::HeartRate => (vec![c(72.0)], vec![c(8.0)], SignalMode::SinusoidDrift),
        };
        DeviceConfig {
            sensor_type,
            serial_number,
            signal: SignalModel { baseline, amplitude, mode },
            calibration: (sensor_type == SensorType::BodyTemp).then(default_calibration),
            jitter_seed,
            bind: None,
            time_scale: 1.0,
        }
    }

    pub fn descriptor(&self) -> SensorDescriptor {
        let mut d = SensorDescriptor::factory(self.sensor_type, self.serial_number, None);
        d.calibration = self.calibration;
        d
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let descriptor = self.descriptor();
        descriptor.validate()?;
        self.signal.validate(&descriptor.channels)?;
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(ConfigError::TimeScale);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fault {
    /// Stop emitting DATA frames.
    Mute,
    /// Flip one byte of every emitted frame.
    CorruptCrc,
    /// Double the streaming period.
    Slow,
}

impl Fault {
    fn bit(self) -> u8 {
        match self {
            Fault::Mute => 1,
            Fault::CorruptCrc => 2,
            Fault::Slow => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Fault::Mute => "mute",
            Fault::CorruptCrc => "corrupt-crc",
            Fault::Slow => "slow",
        }
    }
}

impl FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mute" => Ok(Fault::Mute),
            "corrupt-crc" => Ok(Fault::CorruptCrc),
            "slow" => Ok(Fault::Slow),
            other => Err(format!("unknown fault `{other}` (expected mute, corrupt-crc or slow)")),
        }
    }
}

#[derive(Debug, Default)]
struct Shared {
    faults: AtomicU8,
    shutdown: AtomicBool,
}

impl Shared {
    fn has(&self, fault: Fault) -> bool {
        self.faults.load(Ordering::Relaxed) & fault.bit() != 0
    }
}

/// A running virtual device. Dropping the handle stops the device.
#[derive(Debug)]
pub struct DeviceHandle {
    addr: SocketAddr,
    config: DeviceConfig,
    shared: Arc<Shared>,
    thread: Option<JoinHandle<()>>,
}

impl DeviceHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn serial_number(&self) -> u32 {
        self.config.serial_number
    }

    pub fn sensor_type(&self) -> SensorType {
        self.config.sensor_type
    }

    pub fn config(&self) -> &DeviceConfig {
        &self.config
    }

    pub fn inject(&self, fault: Fault) {
        self.shared.faults.fetch_or(fault.bit(), Ordering::Relaxed);
    }

    pub fn clear_faults(&self) {
        self.shared.faults.store(0, Ordering::Relaxed);
    }

    pub fn faults(&self) -> Vec<Fault> {
        [Fault::Mute, Fault::CorruptCrc, Fault::Slow]
            .into_iter()
            .filter(|f| self.shared.has(*f))
            .collect()
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.shared.shutdown.store(true, Ordering::SeqCst);
        // Wake a blocking accept.
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(thread) = self.thread.take() {
            let _ = thread.join();
        }
    }
}

impl Drop for DeviceHandle {
    fn drop(&mut self) {
        if self.thread.is_some() {
            self.shutdown();
        }
    }
}

/// Binds the device endpoint and starts serving the protocol on it.
pub fn spawn_device(config: DeviceConfig) -> Result<DeviceHandle, DeviceError> {
    config.validate()?;
    let bind = config.bind.unwrap_or_else(|| SocketAddr::from(([127, 0, 0, 1], 0)));
    let listener = TcpListener::bind(bind).map_err(DeviceError::Bind)?;
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared::default());
    let thread = {
        let shared = Arc::clone(&shared);
        let config = config.clone();
        thread::Builder::new()
            .name(format!("device-{:08x}", config.serial_number))
            .spawn(move || accept_loop(listener, config, shared))?
    };
    Ok(DeviceHandle { addr, config, shared, thread: Some(thread) })
}

fn accept_loop(listener: TcpListener, config: DeviceConfig, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.shutdown.load(Ordering::SeqCst) {
            break;
        }
        match stream {
            Ok(stream) => {
                let _ = stream.set_nodelay(true);
                if let Err(e) = Session::new(&config, &shared).run(stream) {
                    debug!("device {:08x}: session ended: {e}", config.serial_number);
                }
            }
            Err(e) => warn!("device {:08x}: accept failed: {e}", config.serial_number),
        }
    }
}

struct Streaming {
    generator: SignalGenerator,
    period_ms: u16,
    sim_time_ms: u32,
    next_due: Instant,
}

struct Session<'a> {
    config: &'a DeviceConfig,
    shared: &'a Shared,
    descriptor: SensorDescriptor,
    streaming: Option<Streaming>,
}

const IDLE_POLL: Duration = Duration::from_millis(50);

impl<'a> Session<'a> {
    fn new(config: &'a DeviceConfig, shared: &'a Shared) -> Self {
        Session { config, shared, descriptor: config.descriptor(), streaming: None }
    }

    fn effective_period(&self, period_ms: u16) -> u32 {
        let factor = if self.shared.has(Fault::Slow) { 2 } else { 1 };
        u32::from(period_ms) * factor
    }

    fn wall(&self, sim_ms: u32) -> Duration {
        Duration::from_secs_f64(f64::from(sim_ms) / 1000.0 / self.config.time_scale)
    }

    fn send(&self, stream: &mut TcpStream, frame: &Frame) -> io::Result<()> {
        let mut bytes = encode_frame(frame).expect("device frames fit the payload limit");
        if self.shared.has(Fault::CorruptCrc) {
            let last = bytes.len() - 1;
            bytes[last] ^= 0x5A;
        }
        stream.write_all(&bytes)
    }

    fn run(mut self, mut stream: TcpStream) -> io::Result<()> {
        let mut reader = FrameReader::new();
        let mut buf = [0u8; 256];
        loop {
            if self.shared.shutdown.load(Ordering::SeqCst) {
                return Ok(());
            }
            let wait = match &self.streaming {
                Some(s) => s.next_due.saturating_duration_since(Instant::now()).min(IDLE_POLL),
                None => IDLE_POLL,
            };
            stream.set_read_timeout(Some(wait.max(Duration::from_millis(1))))?;
            match stream.read(&mut buf) {
                Ok(0) => return Ok(()),
                Ok(n) => reader.push(&buf[..n]),
                Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e),
            }
            while let Some(frame) = reader.next_frame() {
                match frame {
                    Ok(frame) => self.handle(&mut stream, frame)?,
                    Err(e) => debug!("device {:08x}: dropped request: {e}", self.config.serial_number),
                }
            }
            self.emit_due(&mut stream)?;
        }
    }

    fn handle(&mut self, stream: &mut TcpStream, frame: Frame) -> io::Result<()> {
        match frame.frame_type {
            FrameType::IdentReq => {
                let body = payload::encode_descriptor(&self.descriptor);
                self.send(stream, &Frame::new(FrameType::IdentResp, body))
            }
            FrameType::Start => match payload::decode_start(&frame.payload) {
                Ok(0) | Err(_) => self.send(stream, &payload::nack_frame(NACK_BAD_PAYLOAD)),
                Ok(period_ms) => {
                    self.streaming = Some(Streaming {
                        generator: SignalGenerator::new(self.config.signal.clone(), self.config.jitter_seed),
                        period_ms,
                        sim_time_ms: 0,
                        next_due: Instant::now(),
                    });
                    Ok(())
                }
            },
            FrameType::Stop => {
                if self.streaming.take().is_none() {
                    self.send(stream, &payload::nack_frame(NACK_NOT_STREAMING))?;
                }
                Ok(())
            }
            FrameType::IdentResp | FrameType::Data | FrameType::Nack => {
                self.send(stream, &payload::nack_frame(NACK_UNSUPPORTED))
            }
        }
    }

    fn emit_due(&mut self, stream: &mut TcpStream) -> io::Result<()> {
        let Some(s) = self.streaming.as_ref() else {
            return Ok(());
        };
        if Instant::now() < s.next_due {
            return Ok(());
        }
        let period = self.effective_period(s.period_ms);
        let step = self.wall(period);
        let muted = self.shared.has(Fault::Mute);
        let serial = self.config.serial_number;
        let s = self.streaming.as_mut().expect("checked above");
        let values = s.generator.next_values();
        let data = DataPayload { timestamp_ms: s.sim_time_ms, serial_number: serial, values };
        s.sim_time_ms = s.sim_time_ms.wrapping_add(period);
        s.next_due += step;
        // Fall back to real time after a long stall instead of bursting.
        if Instant::now() > s.next_due + step * 4 {
            s.next_due = Instant::now() + step;
        }
        if muted {
            return Ok(());
        }
        self.send(stream, &Frame::new(FrameType::Data, payload::encode_data(&data)))
    }
}
