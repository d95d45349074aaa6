//! Domain types shared by the host and the device side of the link.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::DescriptorError;

/// Fixed-point value scaled by 100 (two decimal places).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Centi(pub i32);

impl Centi {
    pub fn from_f64(value: f64) -> Self {
        Centi((value * 100.0).round() as i32)
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 100.0
    }
}

impl fmt::Display for Centi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

/// The six plug-and-play sensor families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorType {
    TempHumidity,
    LightUv,
    Voc,
    Conductance,
    BodyTemp,
    HeartRate,
}

impl SensorType {
    pub const ALL: [SensorType; 6] = [
        SensorType::TempHumidity,
        SensorType::LightUv,
        SensorType::Voc,
        SensorType::Conductance,
        SensorType::BodyTemp,
        SensorType::HeartRate,
    ];

    pub fn code(self) -> u8 {
        match self {
            SensorType::TempHumidity => 0x01,
            SensorType::LightUv => 0x02,
            SensorType::Voc => 0x03,
            SensorType::Conductance => 0x04,
            SensorType::BodyTemp => 0x05,
            SensorType::HeartRate => 0x06,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.code() == code)
    }

    pub fn channel_count(self) -> usize {
        match self {
            SensorType::TempHumidity | SensorType::LightUv => 2,
            _ => 1,
        }
    }

    /// Snake-case name used on HTTP query strings and in logs.
    pub fn as_str(self) -> &'static str {
        match self {
            SensorType::TempHumidity => "temp_humidity",
            SensorType::LightUv => "light_uv",
            SensorType::Voc => "voc",
            SensorType::Conductance => "conductance",
            SensorType::BodyTemp => "body_temp",
            SensorType::HeartRate => "heart_rate",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            SensorType::TempHumidity => "Ambient temperature & humidity",
            SensorType::LightUv => "Light & UV index",
            SensorType::Voc => "VOC",
            SensorType::Conductance => "Conductance",
            SensorType::BodyTemp => "Body temperature",
            SensorType::HeartRate => "Heart rate",
        }
    }

    /// Factory channel layout for this sensor family.
    pub fn default_channels(self) -> Vec<ChannelSpec> {
        let ch = |unit, min: f64, max: f64| ChannelSpec {
            unit,
            range_min: Centi::from_f64(min),
            range_max: Centi::from_f64(max),
        };
        match self {
            SensorType::TempHumidity => vec![
                ch(Unit::Celsius, -20.0, 60.0),
                ch(Unit::RelativeHumidity, 0.0, 100.0),
            ],
            SensorType::LightUv => vec![ch(Unit::Lux, 0.0, 100_000.0), ch(Unit::UvIndex, 0.0, 12.0)],
            SensorType::Voc => vec![ch(Unit::Ppb, 0.0, 60_000.0)],
            SensorType::Conductance => vec![ch(Unit::Microsiemens, 0.0, 2000.0)],
            SensorType::BodyTemp => vec![ch(Unit::RawCounts, 500.0, 2500.0)],
            SensorType::HeartRate => vec![ch(Unit::Bpm, 30.0, 220.0)],
        }
    }
}

impl fmt::Display for SensorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SensorType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown sensor type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Celsius,
    RelativeHumidity,
    Lux,
    UvIndex,
    Ppb,
    Microsiemens,
    Bpm,
    RawCounts,
}

impl Unit {
    pub const ALL: [Unit; 8] = [
        Unit::Celsius,
        Unit::RelativeHumidity,
        Unit::Lux,
        Unit::UvIndex,
        Unit::Ppb,
        Unit::Microsiemens,
        Unit::Bpm,
        Unit::RawCounts,
    ];

    pub fn code(self) -> u8 {
        match self {
            Unit::Celsius => 0x01,
            Unit::RelativeHumidity => 0x02,
            Unit::Lux => 0x03,
            Unit::UvIndex => 0x04,
            Unit::Ppb => 0x05,
            Unit::Microsiemens => 0x06,
            Unit::Bpm => 0x07,
            Unit::RawCounts => 0x08,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|u| u.code() == code)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Celsius => "°C",
            Unit::RelativeHumidity => "%RH",
            Unit::Lux => "lux",
            Unit::UvIndex => "UV index",
            Unit::Ppb => "ppb",
            Unit::Microsiemens => "µS",
            Unit::Bpm => "bpm",
            Unit::RawCounts => "counts",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub unit: Unit,
    pub range_min: Centi,
    pub range_max: Centi,
}

impl ChannelSpec {
    pub fn contains(&self, value: Centi) -> bool {
        self.range_min <= value && value <= self.range_max
    }
}

/// Linear correction for analogue channels: `celsius = gain * raw + offset`.
///
/// `gain_micro` is °C per raw count scaled by 10^6, `offset` is °C scaled by 100.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub gain_micro: i32,
    pub offset: Centi,
}

impl CalibrationRecord {
    pub fn new(gain: f64, offset: f64) -> Self {
        CalibrationRecord {
            gain_micro: (gain * 1e6).round() as i32,
            offset: Centi::from_f64(offset),
        }
    }

    pub fn gain(&self) -> f64 {
        f64::from(self.gain_micro) / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FirmwareVersion {
    pub major: u8,
    pub minor: u8,
}

impl fmt::Display for FirmwareVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.major, self.minor)
    }
}

/// Identity, channel layout and calibration reported by a device in its
/// `IDENT_RESP` frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SensorDescriptor {
    pub sensor_type: SensorType,
    pub serial_number: u32,
    pub firmware: FirmwareVersion,
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationRecord>,
}

impl SensorDescriptor {
    /// Factory descriptor for `sensor_type`. Body temperature devices get the
    /// given calibration; every other type ignores it.
    pub fn factory(
        sensor_type: SensorType,
        serial_number: u32,
        calibration: Option<CalibrationRecord>,
    ) -> Self {
        SensorDescriptor {
            sensor_type,
            serial_number,
            firmware: FirmwareVersion { major: 1, minor: 2 },
            channels: sensor_type.default_channels(),
            calibration: if sensor_type == SensorType::BodyTemp {
                calibration
            } else {
                None
            },
        }
    }

    pub fn validate(&self) -> Result<(), DescriptorError> {
        let expected = self.sensor_type.channel_count();
        if self.channels.len() != expected {
            return Err(DescriptorError::ChannelCount {
                sensor_type: self.sensor_type,
                expected,
                actual: self.channels.len(),
            });
        }
        for (index, ch) in self.channels.iter().enumerate() {
            if ch.range_min >= ch.range_max {
                return Err(DescriptorError::EmptyRange { channel: index });
            }
            let raw = ch.unit == Unit::RawCounts;
            if raw != (self.sensor_type == SensorType::BodyTemp) {
                return Err(DescriptorError::UnitMismatch { channel: index, unit: ch.unit });
            }
        }
        match (self.sensor_type, &self.calibration) {
            (SensorType::BodyTemp, None) => Err(DescriptorError::MissingCalibration),
            (SensorType::BodyTemp, Some(cal)) => {
                let ch = &self.channels[0];
                crate::calibration::check_window(cal, ch.range_min, ch.range_max)
            }
            (_, Some(_)) => Err(DescriptorError::UnexpectedCalibration(self.sensor_type)),
            (_, None) => Ok(()),
        }
    }
}

/// One sample from a device stream: fixed-point ×100 per channel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Measurement {
    pub sensor_type: SensorType,
    pub timestamp_ms: u32,
    pub values: Vec<Centi>,
}

impl Measurement {
    /// Checks the measurement against the channel layout of `descriptor`.
    pub fn conforms_to(&self, descriptor: &SensorDescriptor) -> bool {
        self.sensor_type == descriptor.sensor_type
            && self.values.len() == descriptor.channels.len()
            && self
                .values
                .iter()
                .zip(&descriptor.channels)
                .all(|(v, ch)| ch.contains(*v))
    }

    /// Validates against the factory channel layout of its own sensor type.
    pub fn conforms_to_factory(&self) -> bool {
        let channels = self.sensor_type.default_channels();
        self.values.len() == channels.len()
            && self.values.iter().zip(&channels).all(|(v, ch)| ch.contains(*v))
    }
}
