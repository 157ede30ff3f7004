use std::fmt;

use serde::{Deserialize, Serialize};

pub const SECONDS_PER_WEEK: f64 = 604_800.0;

/// Continuous GPS time as week number plus seconds into the week.
///
/// No leap seconds are ever applied: every computation in the estimation path
/// uses differences of `GpsTime` values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsTime {
    pub week: i32,
    pub tow: f64,
}

impl GpsTime {
    /// Builds a time, normalizing `tow` into `[0, 604800)`.
    pub fn new(week: i32, tow: f64) -> Self {
        let mut t = Self { week, tow };
        t.normalize();
        t
    }

    fn normalize(&mut self) {
        if !(0.0..SECONDS_PER_WEEK).contains(&self.tow) {
            let weeks = (self.tow / SECONDS_PER_WEEK).floor();
            self.week += weeks as i32;
            self.tow -= weeks * SECONDS_PER_WEEK;
            // floor() can leave tow == 604800 after rounding
            if self.tow >= SECONDS_PER_WEEK {
                self.tow -= SECONDS_PER_WEEK;
                self.week += 1;
            }
        }
    }

    /// Signed seconds `self - other`.
    pub fn diff(&self, other: &GpsTime) -> f64 {
        f64::from(self.week - other.week) * SECONDS_PER_WEEK + (self.tow - other.tow)
    }

    pub fn add_seconds(&self, seconds: f64) -> GpsTime {
        GpsTime::new(self.week, self.tow + seconds)
    }
}

impl PartialOrd for GpsTime {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.diff(other).partial_cmp(&0.0)
    }
}

impl fmt::Display for GpsTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{:.3}", self.week, self.tow)
    }
}
