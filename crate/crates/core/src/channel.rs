//! Geometric multipath channel between a linear movable-antenna array and
//! single-antenna users.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::config::GlobalConfig;
use crate::{CVector, Error, Result};

/// Antenna coordinates along the one-dimensional region, in meters.
///
/// Feasibility is a predicate, not a construction invariant: the swarm
/// explores spacing-infeasible points under penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AntennaPositions(pub Vec<f64>);

impl AntennaPositions {
    pub fn new(positions: Vec<f64>) -> Self {
        Self(positions)
    }

    /// Half-wavelength uniform array anchored at `t_min`.
    pub fn uniform_half_wavelength(config: &GlobalConfig) -> Self {
        let step = config.wavelength / 2.0;
        Self(
            (0..config.n_antennas)
                .map(|m| config.t_min + m as f64 * step)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn within_bounds(&self, t_min: f64, t_max: f64, tol: f64) -> bool {
        self.0.iter().all(|&t| t >= t_min - tol && t <= t_max + tol)
    }

    /// Number of antennas that sit closer than `min_spacing` to at least one
    /// other antenna. Both endpoints of a violating pair are counted.
    pub fn spacing_violators(&self, min_spacing: f64) -> usize {
        count_spacing_violators(&self.0, min_spacing, 0.0)
    }

    pub fn is_feasible(&self, config: &GlobalConfig, tol: f64) -> bool {
        self.within_bounds(config.t_min, config.t_max, tol)
            && count_spacing_violators(&self.0, config.min_spacing, tol) == 0
    }
}

pub(crate) fn count_spacing_violators(positions: &[f64], min_spacing: f64, tol: f64) -> usize {
    let n = positions.len();
    let mut violating = alloc::vec![false; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if libm::fabs(positions[i] - positions[j]) < min_spacing - tol {
                violating[i] = true;
                violating[j] = true;
            }
        }
    }
    violating.iter().filter(|&&v| v).count()
}

/// Per-path phasors `exp(j 2pi/lambda t cos(theta_l))` seen by an antenna at
/// position `t`.
pub fn field_response_vector(t: f64, angles: &[f64], wavelength: f64) -> Result<CVector> {
    if !t.is_finite() || !wavelength.is_finite() || angles.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("field_response_vector"));
    }
    if wavelength <= 0.0 {
        return Err(Error::config("wavelength must be positive"));
    }
    let k = 2.0 * PI / wavelength;
    Ok(angles
        .iter()
        .map(|&theta| Complex64::from_polar(1.0, k * t * libm::cos(theta)))
        .collect())
}

/// Multipath description of one user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannel {
    /// Angles of departure, radians.
    pub angles: Vec<f64>,
    /// Complex path gains, serialized as `[re, im]` pairs.
    pub gains: Vec<Complex64>,
    /// Distance to the transmitter, meters.
    pub distance: f64,
}

/// Channel vector `h_m = sum_l conj(a_l(t_m)) f_l` for every antenna.
pub fn channel_vector(positions: &[f64], user: &UserChannel, wavelength: f64) -> Result<CVector> {
    if user.angles.len() != user.gains.len() {
        return Err(Error::DimensionMismatch {
            what: "path angles vs gains",
            expected: user.angles.len(),
            found: user.gains.len(),
        });
    }
    if user
        .gains
        .iter()
        .any(|g| !g.re.is_finite() || !g.im.is_finite())
    {
        return Err(Error::NonFinite("path gains"));
    }
    positions
        .iter()
        .map(|&t| {
            let frv = field_response_vector(t, &user.angles, wavelength)?;
            Ok(frv.iter().zip(&user.gains).map(|(a, f)| a.conj() * f).sum())
        })
        .collect()
}

/// One channel realization: every user's paths plus the configuration it
/// was drawn under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: GlobalConfig,
    pub users: Vec<UserChannel>,
}

impl Scenario {
    pub fn new(config: GlobalConfig, users: Vec<UserChannel>) -> Result<Self> {
        config.validate()?;
        if users.len() != config.n_users {
            return Err(Error::DimensionMismatch {
                what: "scenario users",
                expected: config.n_users,
                found: users.len(),
            });
        }
        for user in &users {
            if user.angles.len() != config.n_paths || user.gains.len() != config.n_paths {
                return Err(Error::DimensionMismatch {
                    what: "paths per user",
                    expected: config.n_paths,
                    found: user.angles.len().min(user.gains.len()),
                });
            }
        }
        Ok(Self { config, users })
    }

    /// Draws one realization: angles and distances uniform over the
    /// configured ranges, path gains circularly-symmetric Gaussian with
    /// variance `C0 d^-alpha / L` per path.
    pub fn sample<R: Rng + ?Sized>(config: &GlobalConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (a_lo, a_hi) = config.angle_range;
        let (d_lo, d_hi) = config.distance_range;
        let angle = Uniform::new_inclusive(a_lo, a_hi).map_err(|_| Error::config("angle_range"))?;
        let dist =
            Uniform::new_inclusive(d_lo, d_hi).map_err(|_| Error::config("distance_range"))?;
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");

        let users = (0..config.n_users)
            .map(|_| {
                let distance = dist.sample(rng);
                let angles: Vec<f64> = (0..config.n_paths).map(|_| angle.sample(rng)).collect();
                let scale = libm::sqrt(config.path_variance(distance) / 2.0);
                let gains = (0..config.n_paths)
                    .map(|_| {
                        let re: f64 = std_normal.sample(rng);
                        let im: f64 = std_normal.sample(rng);
                        Complex64::new(scale * re, scale * im)
                    })
                    .collect();
                UserChannel {
                    angles,
                    gains,
                    distance,
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            users,
        })
    }

    /// Channel vectors of every user for the given antenna positions.
    pub fn channels(&self, positions: &AntennaPositions) -> Result<Vec<CVector>> {
        if positions.len() != self.config.n_antennas {
            return Err(Error::DimensionMismatch {
                what: "antenna positions",
                expected: self.config.n_antennas,
                found: positions.len(),
            });
        }
        self.users
            .iter()
            .map(|u| channel_vector(positions.as_slice(), u, self.config.wavelength))
            .collect()
    }
}
