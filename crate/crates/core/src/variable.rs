use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Number of surface variables carried through the whole pipeline.
pub const NUM_VARIABLES: usize = 5;

/// The five surface variables, in their fixed storage order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    Temperature,
    Dewpoint,
    WindAngle,
    WindRate,
    SeaLevelPressure,
}

impl Variable {
    pub const ALL: [Variable; NUM_VARIABLES] = [
        Variable::Temperature,
        Variable::Dewpoint,
        Variable::WindAngle,
        Variable::WindRate,
        Variable::SeaLevelPressure,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Variable> {
        Self::ALL.get(i).copied()
    }

    /// Column name in the station CSV schema.
    pub fn column(self) -> &'static str {
        match self {
            Variable::Temperature => "TMP",
            Variable::Dewpoint => "DEW",
            Variable::WindAngle => "WND_ANGLE",
            Variable::WindRate => "WND_RATE",
            Variable::SeaLevelPressure => "SLP",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variable::Temperature => "Temperature",
            Variable::Dewpoint => "Dewpoint",
            Variable::WindAngle => "Wind Direction",
            Variable::WindRate => "Wind Rate",
            Variable::SeaLevelPressure => "Sea Level Pressure",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Variable::Temperature | Variable::Dewpoint => "degC",
            Variable::WindAngle => "deg",
            Variable::WindRate => "m/s",
            Variable::SeaLevelPressure => "hPa",
        }
    }

    pub fn is_angular(self) -> bool {
        matches!(self, Variable::WindAngle)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for Variable {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Variable::ALL
            .iter()
            .copied()
            .find(|v| v.column().eq_ignore_ascii_case(s) || format!("{v:?}").eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown variable `{s}`"))
    }
}

/// Wrap an angle in degrees into `[0, 360)`.
pub(crate) fn wrap_degrees(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if wrapped >= 360.0 {
        0.0
    } else {
        wrapped
    }
}

/// Signed shortest-arc difference `to - from` in degrees, in `[-180, 180)`.
pub(crate) fn angular_delta(from: f64, to: f64) -> f64 {
    (to - from + 180.0).rem_euclid(360.0) - 180.0
}
