//! Network configuration shared by every other module.
//!
//! Noise power is normalized to one, so `snr_linear` plays the role of the
//! per-UE power parameter and every formula only sees the ratio noise/SNR.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reuse factors that tile the hexagonal grid.
pub const SUPPORTED_REUSE: [u32; 4] = [1, 3, 4, 7];

/// Receive combining scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Maximum ratio combining.
    Mrc,
    /// Pilot-based zero-forcing combining.
    Pzfc,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::Mrc, Scheme::Pzfc];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Mrc => "mrc",
            Scheme::Pzfc => "pzfc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mrc" => Ok(Scheme::Mrc),
            "pzfc" | "p-zfc" => Ok(Scheme::Pzfc),
            other => Err(Error::Domain(format!("unknown combining scheme '{other}'"))),
        }
    }
}

/// How out-of-cell UE positions enter the interference moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InterferenceMode {
    /// Expectation over uniformly distributed UE positions.
    #[serde(rename = "avg")]
    Average,
    /// Every out-of-cell UE sits at its cell-edge point closest to the victim BS.
    #[serde(rename = "worst")]
    WorstCase,
}

impl InterferenceMode {
    pub const ALL: [InterferenceMode; 2] = [InterferenceMode::Average, InterferenceMode::WorstCase];

    pub fn as_str(self) -> &'static str {
        match self {
            InterferenceMode::Average => "avg",
            InterferenceMode::WorstCase => "worst",
        }
    }
}

impl fmt::Display for InterferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterferenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avg" | "average" => Ok(InterferenceMode::Average),
            "worst" | "worst-case" | "worstcase" => Ok(InterferenceMode::WorstCase),
            other => Err(Error::Domain(format!(
                "unknown interference mode '{other}'"
            ))),
        }
    }
}

/// All scalar parameters of the system model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ConfigFile")]
pub struct NetworkConfig {
    /// N, BS antennas.
    pub n_antennas: usize,
    /// K, scheduled UEs per cell.
    pub n_users: usize,
    /// T, channel uses per coherence block.
    pub coherence_block: usize,
    /// beta, pilot reuse factor (B = beta * K).
    pub reuse_factor: u32,
    /// rho / sigma^2 on a linear scale.
    pub snr_linear: f64,
    /// kappa >= 2.
    pub pathloss_exponent: f64,
    /// r, center-to-corner hexagon radius in meters.
    pub cell_radius: f64,
    /// C, pathloss reference value.
    pub pathloss_ref: f64,
    /// Exclusion radius around each BS as a fraction of r.
    pub min_ue_distance_frac: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            n_antennas: 100,
            n_users: 10,
            coherence_block: 1000,
            reuse_factor: 1,
            snr_linear: db_to_linear(10.0),
            pathloss_exponent: 3.5,
            cell_radius: 1.0,
            pathloss_ref: 1.0,
            min_ue_distance_frac: 0.14,
        }
    }
}

impl NetworkConfig {
    /// B = beta * K.
    pub fn pilot_len(&self) -> usize {
        self.reuse_factor as usize * self.n_users
    }

    /// sigma^2 / rho with sigma^2 = 1.
    pub fn noise_over_snr(&self) -> f64 {
        1.0 / self.snr_linear
    }

    /// Copy with a different (N, K, beta) triple.
    pub fn with_schedule(&self, n_antennas: usize, n_users: usize, reuse_factor: u32) -> Self {
        NetworkConfig {
            n_antennas,
            n_users,
            reuse_factor,
            ..self.clone()
        }
    }

    /// Checks every invariant; `scheme = Some(Pzfc)` additionally demands N > B.
    pub fn validate(self, scheme: Option<Scheme>) -> Result<Self> {
        if self.n_antennas == 0 || self.n_users == 0 || self.coherence_block == 0 {
            return Err(Error::Domain("N, K and T must be positive".into()));
        }
        if self.reuse_factor == 0 {
            return Err(Error::Domain("reuse factor must be positive".into()));
        }
        if !SUPPORTED_REUSE.contains(&self.reuse_factor) {
            return Err(Error::UnsupportedReuse(self.reuse_factor));
        }
        positive("snr_linear", self.snr_linear)?;
        positive("cell_radius", self.cell_radius)?;
        positive("pathloss_ref", self.pathloss_ref)?;
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 2.0) {
            return Err(Error::Domain(format!(
                "pathloss exponent must be >= 2, got {}",
                self.pathloss_exponent
            )));
        }
        if !(0.0..1.0).contains(&self.min_ue_distance_frac) {
            return Err(Error::Domain(format!(
                "min_ue_distance_frac must lie in [0, 1), got {}",
                self.min_ue_distance_frac
            )));
        }
        let pilot_len = self.pilot_len();
        if pilot_len > self.coherence_block {
            return Err(Error::PilotOverflow {
                pilot_len,
                coherence_block: self.coherence_block,
            });
        }
        if scheme == Some(Scheme::Pzfc) && self.n_antennas <= pilot_len {
            return Err(Error::InsufficientAntennas {
                n_antennas: self.n_antennas,
                pilot_len,
            });
        }
        Ok(self)
    }
}

fn positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} must be positive and finite, got {value}"
        )))
    }
}

/// On-disk shape of [`NetworkConfig`]; accepts `snr_db` in place of `snr_linear`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    n_antennas: Option<usize>,
    n_users: Option<usize>,
    coherence_block: Option<usize>,
    reuse_factor: Option<u32>,
    snr_linear: Option<f64>,
    snr_db: Option<f64>,
    pathloss_exponent: Option<f64>,
    cell_radius: Option<f64>,
    pathloss_ref: Option<f64>,
    min_ue_distance_frac: Option<f64>,
}

impl TryFrom<ConfigFile> for NetworkConfig {
    type Error = String;

    fn try_from(f: ConfigFile) -> std::result::Result<Self, Self::Error> {
        let d = NetworkConfig::default();
        let snr_linear = match (f.snr_linear, f.snr_db) {
            (Some(_), Some(_)) => return Err("give either snr_linear or snr_db, not both".into()),
            (Some(lin), None) => lin,
            (None, Some(db)) => db_to_linear(db),
            (None, None) => d.snr_linear,
        };
        Ok(NetworkConfig {
            n_antennas: f.n_antennas.unwrap_or(d.n_antennas),
            n_users: f.n_users.unwrap_or(d.n_users),
            coherence_block: f.coherence_block.unwrap_or(d.coherence_block),
            reuse_factor: f.reuse_factor.unwrap_or(d.reuse_factor),
            snr_linear,
            pathloss_exponent: f.pathloss_exponent.unwrap_or(d.pathloss_exponent),
            cell_radius: f.cell_radius.unwrap_or(d.cell_radius),
            pathloss_ref: f.pathloss_ref.unwrap_or(d.pathloss_ref),
            min_ue_distance_frac: f.min_ue_distance_frac.unwrap_or(d.min_ue_distance_frac),
        })
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Average channel attenuation d(z) = C / distance^kappa.
pub fn pathloss(pathloss_ref: f64, kappa: f64, distance: f64) -> f64 {
    pathloss_ref / distance.powf(kappa)
}
