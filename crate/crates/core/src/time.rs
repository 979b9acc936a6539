//! Fixed-point simulation time.
//!
//! Time is kept as an integer count of microseconds so that a run produces the
//! same event trace on every platform. Conversions from floating-point seconds
//! round to the nearest microsecond.

use core::fmt;
use core::ops::{Add, AddAssign, Sub};

use thiserror::Error;

const MICROS_PER_SEC: f64 = 1_000_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TimeError {
    #[error("duration must be a finite, non-negative number of seconds (got {0})")]
    Invalid(f64),
    #[error("duration of {0} s overflows the simulation clock")]
    Overflow(f64),
}

/// A point on the simulation clock, in microseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

/// A non-negative span of simulation time, in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimDuration(u64);

fn secs_to_micros(secs: f64) -> Result<u64, TimeError> {
    if secs.is_nan() || secs < 0.0 {
        return Err(TimeError::Invalid(secs));
    }
    let micros = secs * MICROS_PER_SEC + 0.5;
    if micros >= u64::MAX as f64 {
        return Err(TimeError::Overflow(secs));
    }
    Ok(micros as u64)
}

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub fn from_secs_f64(secs: f64) -> Result<Self, TimeError> {
        secs_to_micros(secs).map(SimTime)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC
    }

    /// Time elapsed since `earlier`, or `None` if `earlier` is in the future.
    pub fn checked_since(self, earlier: SimTime) -> Option<SimDuration> {
        self.0.checked_sub(earlier.0).map(SimDuration)
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub fn from_secs_f64(secs: f64) -> Result<Self, TimeError> {
        secs_to_micros(secs).map(SimDuration)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0.checked_add(rhs.0).expect("simulation clock overflow"))
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        *self = *self + rhs;
    }
}

impl Add for SimDuration {
    type Output = SimDuration;

    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0.checked_add(rhs.0).expect("duration overflow"))
    }
}

impl Sub for SimTime {
    type Output = SimDuration;

    /// Panics if `rhs` is later than `self`; use [`SimTime::checked_since`] otherwise.
    fn sub(self, rhs: SimTime) -> SimDuration {
        self.checked_since(rhs).expect("negative time difference")
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}
