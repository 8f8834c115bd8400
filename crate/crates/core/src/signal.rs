use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Physiological channel recorded by the wearable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    /// Euclidean norm of 3-axis acceleration.
    #[serde(rename = "ACC")]
    Acc,
    /// Heart rate.
    #[serde(rename = "HR")]
    Hr,
    /// Skin temperature.
    #[serde(rename = "TEMP")]
    Temp,
    /// Electrodermal activity.
    #[serde(rename = "EDA")]
    Eda,
}

impl Signal {
    pub const ALL: [Signal; 4] = [Signal::Acc, Signal::Hr, Signal::Temp, Signal::Eda];

    pub fn name(self) -> &'static str {
        match self {
            Signal::Acc => "ACC",
            Signal::Hr => "HR",
            Signal::Temp => "TEMP",
            Signal::Eda => "EDA",
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Signal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ACC" => Ok(Signal::Acc),
            "HR" => Ok(Signal::Hr),
            "TEMP" => Ok(Signal::Temp),
            "EDA" => Ok(Signal::Eda),
            other => Err(Error::Config(format!("unknown signal `{other}`"))),
        }
    }
}

/// Per-epoch summary statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stat {
    #[serde(rename = "MEAN")]
    Mean,
    #[serde(rename = "MED")]
    Med,
    #[serde(rename = "SD")]
    Sd,
}

impl Stat {
    pub const ALL: [Stat; 3] = [Stat::Mean, Stat::Med, Stat::Sd];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "MEAN",
            Stat::Med => "MED",
            Stat::Sd => "SD",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Stat::Mean => 0,
            Stat::Med => 1,
            Stat::Sd => 2,
        }
    }
}

impl fmt::Display for Stat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "MEAN" => Ok(Stat::Mean),
            "MED" | "MEDIAN" => Ok(Stat::Med),
            "SD" => Ok(Stat::Sd),
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

/// A (signal, statistic) pair, i.e. one column of an epoch series.
///
/// Serialized as `"HR_MED"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variable {
    pub signal: Signal,
    pub stat: Stat,
}

impl Variable {
    pub const fn new(signal: Signal, stat: Stat) -> Self {
        Variable { signal, stat }
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.signal, self.stat)
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (sig, stat) = s
            .split_once(['_', ' ', '.'])
            .ok_or_else(|| Error::Config(format!("malformed variable `{s}`, expected e.g. HR_MED")))?;
        Ok(Variable::new(sig.parse()?, stat.parse()?))
    }
}

impl Serialize for Variable {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Variable {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub mod vars {
    use super::{Signal, Stat, Variable};

    pub const HR_MEAN: Variable = Variable::new(Signal::Hr, Stat::Mean);
    pub const HR_MED: Variable = Variable::new(Signal::Hr, Stat::Med);
    pub const HR_SD: Variable = Variable::new(Signal::Hr, Stat::Sd);
    pub const ACC_SD: Variable = Variable::new(Signal::Acc, Stat::Sd);
    pub const TEMP_MED: Variable = Variable::new(Signal::Temp, Stat::Med);
    pub const TEMP_MEAN: Variable = Variable::new(Signal::Temp, Stat::Mean);
}
