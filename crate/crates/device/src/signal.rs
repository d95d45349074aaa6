//! Seeded signal models for simulated channels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensorlab_protocol::{Centi, ChannelSpec};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalMode {
    Constant,
    SinusoidDrift,
    StepResponse,
}

/// Per-channel baseline and drift bound. Every emitted value stays within
/// `baseline ± amplitude`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalModel {
    pub baseline: Vec<Centi>,
    pub amplitude: Vec<Centi>,
    pub mode: SignalMode,
}

impl SignalModel {
    pub fn constant(baseline: Vec<Centi>) -> Self {
        let amplitude = vec![Centi(0); baseline.len()];
        SignalModel { baseline, amplitude, mode: SignalMode::Constant }
    }

    pub fn validate(&self, channels: &[ChannelSpec]) -> Result<(), ConfigError> {
        if self.baseline.len() != channels.len() || self.amplitude.len() != channels.len() {
            return Err(ConfigError::SignalChannels {
                expected: channels.len(),
                baseline: self.baseline.len(),
                amplitude: self.amplitude.len(),
            });
        }
        for (index, ((b, a), ch)) in self.baseline.iter().zip(&self.amplitude).zip(channels).enumerate() {
            if a.0 < 0 {
                return Err(ConfigError::NegativeAmplitude { channel: index });
            }
            if !ch.contains(Centi(b.0 - a.0)) || !ch.contains(Centi(b.0 + a.0)) {
                return Err(ConfigError::SignalOutOfRange { channel: index });
            }
        }
        Ok(())
    }
}

/// Deterministic sample source; restarting with the same seed replays the
/// same sequence.
#[derive(Debug, Clone)]
pub struct SignalGenerator {
    model: SignalModel,
    rng: ChaCha8Rng,
    phase: f64,
    sample: u64,
}

impl SignalGenerator {
    pub fn new(model: SignalModel, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        SignalGenerator { model, rng, phase, sample: 0 }
    }

    pub fn next_values(&mut self) -> Vec<Centi> {
        let t = self.sample as f64;
        self.sample += 1;
        let mut out = Vec::with_capacity(self.model.baseline.len());
        for (b, a) in self.model.baseline.iter().zip(&self.model.amplitude) {
            let (b, a) = (b.as_f64(), a.as_f64());
            let value = match self.model.mode {
                SignalMode::Constant => b,
                SignalMode::SinusoidDrift => {
                    let noise: f64 = self.rng.random_range(-1.0..=1.0);
                    b + a * (0.8 * (std::f64::consts::TAU * t / 50.0 + self.phase).sin() + 0.2 * noise)
                }
                SignalMode::StepResponse => {
                    let noise: f64 = self.rng.random_range(-1.0..=1.0);
                    b - a + 2.0 * a * (1.0 - (-t / 10.0).exp()) + 0.1 * a * noise
                }
            };
            let centi = Centi::from_f64(value);
            let (lo, hi) = (Centi::from_f64(b - a), Centi::from_f64(b + a));
            out.push(centi.clamp(lo, hi));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sensorlab_protocol::SensorType;

    fn model(mode: SignalMode) -> SignalModel {
        SignalModel {
            baseline: vec![Centi(2200), Centi(4500)],
            amplitude: vec![Centi(150), Centi(500)],
            mode,
        }
    }

    #[test]
    fn constant_model_is_flat() {
        let mut g = SignalGenerator::new(SignalModel::constant(vec![Centi(7200)]), 1);
        assert!((0..100).all(|_| g.next_values() == vec![Centi(7200)]));
    }

    #[test]
    fn drift_stays_within_bound() {
        for mode in [SignalMode::SinusoidDrift, SignalMode::StepResponse] {
            let m = model(mode);
            let mut g = SignalGenerator::new(m.clone(), 42);
            for _ in 0..1000 {
                for ((v, b), a) in g.next_values().iter().zip(&m.baseline).zip(&m.amplitude) {
                    assert!((v.0 - b.0).abs() <= a.0, "{mode:?}: {v} vs {b}±{a}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_sequence() {
        let run = |seed| {
            let mut g = SignalGenerator::new(model(SignalMode::SinusoidDrift), seed);
            (0..50).map(|_| g.next_values()).collect::<Vec<_>>()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }

    #[test]
    fn validation_rejects_out_of_range_drift() {
        let channels = SensorType::HeartRate.default_channels();
        let bad = SignalModel {
            baseline: vec![Centi(3500)],
            amplitude: vec![Centi(1000)],
            mode: SignalMode::SinusoidDrift,
        };
        assert!(matches!(bad.validate(&channels), Err(ConfigError::SignalOutOfRange { channel: 0 })));
        let wrong_len = SignalModel::constant(vec![Centi(7200), Centi(1)]);
        assert!(matches!(wrong_len.validate(&channels), Err(ConfigError::SignalChannels { .. })));
    }
}
