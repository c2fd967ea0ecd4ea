//! TOML run configuration accepted by every subcommand through `--config`.
//! Flags given on the command line override values from the file.
//!
//! ```toml
//! [protocol]
//! R = 0.5
//! r = 0.34657359
//! eta = 0.9
//! gain = "loss-comp"
//! mean = [1.0, 0.0]
//!
//! [sweep]
//! R_grid = "0:0.999:100"
//! r_list = [0.0, 0.5, 1.0]
//!
//! [mc]
//! shots = 1000000
//! seed = 7
//!
//! [output]
//! csv = "fig2.csv"
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::GainPolicy;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr: Option<SnrSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSection {
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub reflectivity: Option<f64>,
    #[serde(rename = "r", default, skip_serializing_if = "Option::is_none")]
    pub squeezing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sq_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain: Option<GainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<[f64; 2]>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub clones: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(rename = "R_grid", default, skip_serializing_if = "Option::is_none")]
    pub reflectivity_grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_list: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shots: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chunk: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vin: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn protocol(&self) -> ProtocolSection {
        self.protocol.clone().unwrap_or_default()
    }

    pub fn sweep(&self) -> SweepSection {
        self.sweep.clone().unwrap_or_default()
    }

    pub fn mc(&self) -> McSection {
        self.mc.clone().unwrap_or_default()
    }
}

/// Gain selection as written on the command line: `auto`, `loss-comp` or a
/// number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainSpec(pub GainPolicy);

impl FromStr for GainSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "auto" => Ok(GainSpec(GainPolicy::Cancellation)),
            "loss-comp" => Ok(GainSpec(GainPolicy::LossCompensated)),
            other => other
                .parse::<f64>()
                .map(|g| GainSpec(GainPolicy::Manual(g)))
                .map_err(|_| format!("expected `auto`, `loss-comp` or a number, got `{other}`")),
        }
    }
}

impl std::fmt::Display for GainSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.0 {
            GainPolicy::Cancellation => f.write_str("auto"),
            GainPolicy::LossCompensated => f.write_str("loss-comp"),
            GainPolicy::Manual(g) => write!(f, "{g}"),
        }
    }
}

impl Serialize for GainSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for GainSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Number(g) => Ok(GainSpec(GainPolicy::Manual(g))),
        }
    }
}

/// Inclusive evenly spaced grid `start:stop:points`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => {
                let step = (self.stop - self.start) / (n - 1) as f64;
                (0..n)
                    .map(|k| {
                        if k == n - 1 {
                            self.stop
                        } else {
                            self.start + step * k as f64
                        }
                    })
                    .collect()
            }
        }
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [start, stop, points] = parts[..] else {
            return Err(format!("expected start:stop:points, got `{s}`"));
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
        let points = points.trim().parse::<usize>().map_err(|e| format!("`{points}`: {e}"))?;
        if points == 0 {
            return Err("grid needs at least one point".to_owned());
        }
        Ok(Grid {
            start: num(start)?,
            stop: num(stop)?,
            points,
        })
    }
}

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}:{:?}:{}", self.start, self.stop, self.points)
    }
}

impl Serialize for Grid {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Squeezing factor from decibels: `dB = 10 log10(e^{2r})`.
pub fn squeezing_from_db(db: f64) -> f64 {
    db * std::f64::consts::LN_10 / 20.0
}
