//! Host-side linear correction for the analogue body-temperature channel.

use crate::error::{CalibrationError, DescriptorError};
use crate::types::{CalibrationRecord, Centi};

/// Physical output window of the body-temperature probe.
pub const WINDOW_MIN: Centi = Centi(2500);
pub const WINDOW_MAX: Centi = Centi(4500);

fn div_round(numerator: i64, denominator: i64) -> i64 {
    let half = denominator / 2;
    if numerator >= 0 {
        (numerator + half) / denominator
    } else {
        (numerator - half) / denominator
    }
}

fn linear(raw: Centi, cal: &CalibrationRecord) -> Centi {
    // gain_micro * raw_centi is °C scaled by 1e8; bring it back to 1e2.
    let scaled = div_round(i64::from(cal.gain_micro) * i64::from(raw.0), 1_000_000);
    Centi((scaled + i64::from(cal.offset.0)) as i32)
}

/// `gain * raw + offset`, rounded to 0.01 °C.
pub fn apply_calibration(raw: Centi, cal: &CalibrationRecord) -> Result<Centi, CalibrationError> {
    if cal.gain_micro <= 0 {
        return Err(CalibrationError::NonPositiveGain);
    }
    let celsius = linear(raw, cal);
    if celsius < WINDOW_MIN || celsius > WINDOW_MAX {
        return Err(CalibrationError::OutOfRange(celsius));
    }
    Ok(celsius)
}

/// Raw reading that maps to `celsius` under `cal`, ignoring the window.
pub fn invert_calibration(celsius: Centi, cal: &CalibrationRecord) -> Centi {
    let counts = (celsius.as_f64() - cal.offset.as_f64()) / cal.gain();
    Centi::from_f64(counts)
}

pub(crate) fn check_window(
    cal: &CalibrationRecord,
    range_min: Centi,
    range_max: Centi,
) -> Result<(), DescriptorError> {
    if cal.gain_micro <= 0 {
        return Err(DescriptorError::NonPositiveGain);
    }
    let (low, high) = (linear(range_min, cal), linear(range_max, cal));
    if low < WINDOW_MIN || high > WINDOW_MAX {
        return Err(DescriptorError::CalibrationWindow { low, high });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cal() -> CalibrationRecord {
        CalibrationRecord::new(0.01, 20.0)
    }

    #[test]
    fn reference_reading() {
        assert_eq!(apply_calibration(Centi::from_f64(1700.0), &cal()), Ok(Centi(3700)));
    }

    #[test]
    fn zero_counts_fall_below_window() {
        assert_eq!(
            apply_calibration(Centi(0), &cal()),
            Err(CalibrationError::OutOfRange(Centi(2000)))
        );
    }

    #[test]
    fn window_edges_are_inclusive() {
        assert_eq!(apply_calibration(Centi::from_f64(500.0), &cal()), Ok(WINDOW_MIN));
        assert_eq!(apply_calibration(Centi::from_f64(2500.0), &cal()), Ok(WINDOW_MAX));
        assert!(apply_calibration(Centi::from_f64(2501.0), &cal()).is_err());
    }

    #[test]
    fn non_positive_gain_is_rejected() {
        let bad = CalibrationRecord { gain_micro: 0, offset: Centi(2000) };
        assert_eq!(apply_calibration(Centi(170_000), &bad), Err(CalibrationError::NonPositiveGain));
    }

    #[test]
    fn factory_window_check() {
        assert!(check_window(&cal(), Centi(50_000), Centi(250_000)).is_ok());
        assert!(check_window(&cal(), Centi(0), Centi(250_000)).is_err());
    }
}
