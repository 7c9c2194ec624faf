//! System-level parameters shared by every scheme.
//!
//! All quantities are stored in linear SI units (meters, watts). The
//! `*_dbm`/`*_db` helpers convert at parse time.

use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    libm::pow(10.0, (dbm - 30.0) / 10.0)
}

/// Converts a gain in dB to a linear factor.
pub fn db_to_linear(db: f64) -> f64 {
    libm::pow(10.0, db / 10.0)
}

/// Physical layout, channel statistics and power budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalConfig {
    pub n_antennas: usize,
    pub n_users: usize,
    /// Propagation paths per user.
    pub n_paths: usize,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    pub t_min: f64,
    pub t_max: f64,
    /// Minimum antenna spacing in meters.
    pub min_spacing: f64,
    /// Total transmit power budget in watts.
    pub p_max: f64,
    /// Receiver noise power in watts.
    pub noise_power: f64,
    /// Linear path gain at the 1 m reference distance.
    pub path_loss_ref: f64,
    pub path_loss_exp: f64,
    /// User distances are drawn uniformly from this interval (meters).
    pub distance_range: (f64, f64),
    /// Angles of departure are drawn uniformly from this interval (radians).
    pub angle_range: (f64, f64),
}

impl GlobalConfig {
    /// Reference setup: 6 paths, lambda = 0.1 m, a 10 lambda aperture with
    /// lambda/2 minimum spacing, 30 dBm budget, -90 dBm noise, -30 dB
    /// reference gain, exponent 2.8, distances in [20, 150] m.
    pub fn reference(n_antennas: usize, n_users: usize) -> Self {
        let wavelength = 0.1;
        Self {
            n_antennas,
            n_users,
            n_paths: 6,
            wavelength,
            t_min: 0.0,
            t_max: 10.0 * wavelength,
            min_spacing: wavelength / 2.0,
            p_max: dbm_to_watts(30.0),
            noise_power: dbm_to_watts(-90.0),
            path_loss_ref: db_to_linear(-30.0),
            path_loss_exp: 2.8,
            distance_range: (20.0, 150.0),
            angle_range: (0.0, PI),
        }
    }

    /// Largest number of antennas that fit in the region at minimum spacing.
    pub fn max_antennas(&self) -> usize {
        let span = (self.t_max - self.t_min) / self.min_spacing;
        // absorb representation error such as 1.0 / 0.05 = 20.000000000000004
        libm::floor(span + 1e-9) as usize + 1
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.wavelength,
            self.t_min,
            self.t_max,
            self.min_spacing,
            self.p_max,
            self.noise_power,
            self.path_loss_ref,
            self.path_loss_exp,
            self.distance_range.0,
            self.distance_range.1,
            self.angle_range.0,
            self.angle_range.1,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("GlobalConfig"));
        }
        if self.n_antennas == 0 {
            return Err(Error::config("n_antennas must be at least 1"));
        }
        if self.n_users == 0 {
            return Err(Error::config("n_users must be at least 1"));
        }
        if self.n_paths == 0 {
            return Err(Error::config("n_paths must be at least 1"));
        }
        if self.wavelength <= 0.0 {
            return Err(Error::config("wavelength must be positive"));
        }
        if self.t_max <= self.t_min {
            return Err(Error::config("t_max must exceed t_min"));
        }
        if self.min_spacing <= 0.0 {
            return Err(Error::config("min_spacing must be positive"));
        }
        if self.n_antennas > self.max_antennas() {
            return Err(Error::InvalidConfig(alloc::format!(
                "{} antennas do not fit: at most {} at spacing {}",
                self.n_antennas,
                self.max_antennas(),
                self.min_spacing
            )));
        }
        if self.p_max < 0.0 {
            return Err(Error::config("p_max must be non-negative"));
        }
        if self.noise_power <= 0.0 {
            return Err(Error::config("noise_power must be positive"));
        }
        if self.path_loss_ref <= 0.0 {
            return Err(Error::config("path_loss_ref must be positive"));
        }
        let (d_lo, d_hi) = self.distance_range;
        if d_lo <= 0.0 || d_hi < d_lo {
            return Err(Error::config("distance_range must satisfy 0 < lo <= hi"));
        }
        if self.angle_range.1 < self.angle_range.0 {
            return Err(Error::config("angle_range must satisfy lo <= hi"));
        }
        Ok(())
    }

    /// Per-path variance of the complex path gain at distance `d`.
    pub fn path_variance(&self, distance: f64) -> f64 {
        self.path_loss_ref * libm::pow(distance, -self.path_loss_exp) / self.n_paths as f64
    }
}

/// Successive convex approximation settings shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaSettings {
    /// Stop once the slack improves by less than this (bits/s/Hz).
    pub accuracy: f64,
    pub max_iterations: usize,
}

impl Default for ScaSettings {
    fn default() -> Self {
        Self {
            accuracy: 1e-3,
            max_iterations: 20,
        }
    }
}

impl ScaSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.accuracy > 0.0) {
            return Err(Error::config("sca accuracy must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::config("sca max_iterations must be at least 1"));
        }
        Ok(())
    }
}
