use crate::error::{Error, Result};

/// Annealed softmax temperature `t = max(2^-e, floor)`, where `e` counts the
/// training epochs completed so far (fractional within an epoch).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureSchedule {
    pub total_epochs: usize,
    /// Lower clamp; `0.0` disables it.
    pub floor: f64,
}

impl TemperatureSchedule {
    pub fn new(total_epochs: usize, floor: f64) -> Self {
        TemperatureSchedule { total_epochs, floor }
    }

    pub fn temperature(&self, epoch_fraction: f64) -> Result<f64> {
        temperature_schedule(epoch_fraction, self.floor)
    }
}

pub fn temperature_schedule(epoch_fraction: f64, floor: f64) -> Result<f64> {
    if !(epoch_fraction >= 0.0) {
        return Err(Error::EpochFraction(epoch_fraction));
    }
    // Keep t strictly positive even once 2^-e underflows.
    Ok((-epoch_fraction).exp2().max(floor).max(f64::MIN_POSITIVE))
}
