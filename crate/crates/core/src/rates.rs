//! Closed-form two-layer RSMA SINRs, achievable rates and feasibility
//! checking of complete solutions.
//!
//! Decoding at user `k` in cluster `q` is inter-cluster common, then
//! intra-cluster common, then private, with perfect cancellation. The
//! cancellation chain is embodied by the denominators, not simulated.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::AntennaPositions;
use crate::config::GlobalConfig;
use crate::{CVector, Complex64, Error, Result};

/// Absolute tolerance on common-rate budgets (bits/s/Hz).
pub const RATE_TOL: f64 = 1e-6;
/// Relative tolerance on the power budget.
pub const POWER_REL_TOL: f64 = 1e-6;
/// Absolute tolerance on positions and spacing (meters).
pub const POSITION_TOL: f64 = 1e-9;

/// Partition of the users into disjoint clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<usize>>", into = "Vec<Vec<usize>>")]
pub struct Clustering {
    clusters: Vec<Vec<usize>>,
    membership: Vec<usize>,
}

impl Clustering {
    /// Validates that `clusters` is a partition of `0..n_users` into
    /// non-empty sets.
    pub fn new(clusters: Vec<Vec<usize>>, n_users: usize) -> Result<Self> {
        let mut membership = vec![usize::MAX; n_users];
        for (q, members) in clusters.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::InvalidClustering(alloc::format!(
                    "cluster {q} is empty"
                )));
            }
            for &k in members {
                if k >= n_users {
                    return Err(Error::InvalidClustering(alloc::format!(
                        "user {k} out of range for {n_users} users"
                    )));
                }
                if membership[k] != usize::MAX {
                    return Err(Error::InvalidClustering(alloc::format!(
                        "user {k} appears in more than one cluster"
                    )));
                }
                membership[k] = q;
            }
        }
        if let Some(k) = membership.iter().position(|&q| q == usize::MAX) {
            return Err(Error::InvalidClustering(alloc::format!(
                "user {k} is not assigned"
            )));
        }
        Ok(Self {
            clusters,
            membership,
        })
    }

    /// Every user in one cluster.
    pub fn single(n_users: usize) -> Self {
        Self::new(vec![(0..n_users).collect()], n_users).expect("single cluster is a partition")
    }

    pub fn n_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn n_users(&self) -> usize {
        self.membership.len()
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.clusters
    }

    pub fn members(&self, q: usize) -> &[usize] {
        &self.clusters[q]
    }

    pub fn cluster_of(&self, user: usize) -> usize {
        self.membership[user]
    }

    /// Sorted cluster sizes, for comparing clustering shapes.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.clusters.iter().map(Vec::len).collect();
        s.sort_unstable();
        s
    }

    /// Same partition with cluster and member order normalized.
    pub fn canonical(&self) -> Vec<Vec<usize>> {
        let mut c: Vec<Vec<usize>> = self
            .clusters
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.sort_unstable();
                m
            })
            .collect();
        c.sort();
        c
    }
}

impl TryFrom<Vec<Vec<usize>>> for Clustering {
    type Error = Error;

    fn try_from(clusters: Vec<Vec<usize>>) -> Result<Self> {
        let n = clusters.iter().map(Vec::len).sum();
        Self::new(clusters, n)
    }
}

impl From<Clustering> for Vec<Vec<usize>> {
    fn from(c: Clustering) -> Self {
        c.clusters
    }
}

/// Beamforming vectors for the `1 + Q + K` streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSet {
    pub inter: CVector,
    pub intra: Vec<CVector>,
    pub private: Vec<CVector>,
}

impl BeamformerSet {
    pub fn zeros(n_antennas: usize, n_clusters: usize, n_users: usize) -> Self {
        let z = || vec![Complex64::new(0.0, 0.0); n_antennas];
        Self {
            inter: z(),
            intra: (0..n_clusters).map(|_| z()).collect(),
            private: (0..n_users).map(|_| z()).collect(),
        }
    }

    pub fn total_power(&self) -> f64 {
        norm_sqr(&self.inter)
            + self.intra.iter().map(|w| norm_sqr(w)).sum::<f64>()
            + self.private.iter().map(|w| norm_sqr(w)).sum::<f64>()
    }

    /// Streams in lifted-block order: inter, intra per cluster, private per user.
    pub fn streams(&self) -> impl Iterator<Item = &CVector> {
        core::iter::once(&self.inter)
            .chain(self.intra.iter())
            .chain(self.private.iter())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let s = |w: &CVector| w.iter().map(|x| x * c).collect::<CVector>();
        Self {
            inter: s(&self.inter),
            intra: self.intra.iter().map(s).collect(),
            private: self.private.iter().map(s).collect(),
        }
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// `h^H w`.
pub(crate) fn inner(h: &[Complex64], w: &[Complex64]) -> Complex64 {
    h.iter().zip(w).map(|(a, b)| a.conj() * b).sum()
}

/// Per-user shares of the common rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateAllocation {
    /// Share of the inter-cluster common rate, per user.
    pub inter: Vec<f64>,
    /// Share of the user's own intra-cluster common rate, per user.
    pub intra: Vec<f64>,
}

impl RateAllocation {
    pub fn zeros(n_users: usize) -> Self {
        Self {
            inter: vec![0.0; n_users],
            intra: vec![0.0; n_users],
        }
    }
}

/// SINRs and rates of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserLink {
    pub sinr_inter: f64,
    pub sinr_intra: f64,
    pub sinr_private: f64,
    pub rate_inter: f64,
    pub rate_intra: f64,
    pub rate_private: f64,
}

fn log2_1p(x: f64) -> f64 {
    libm::log1p(x) / core::f64::consts::LN_2
}

/// SINRs of every user for the three decoding stages, with the
/// corresponding `log2(1 + SINR)` rates.
pub fn evaluate_sinrs(
    channels: &[CVector],
    beams: &BeamformerSet,
    clustering: &Clustering,
    noise_power: f64,
) -> Result<Vec<UserLink>> {
    let k_users = channels.len();
    if clustering.n_users() != k_users || beams.private.len() != k_users {
        return Err(Error::DimensionMismatch {
            what: "users",
            expected: k_users,
            found: beams.private.len().min(clustering.n_users()),
        });
    }
    if beams.intra.len() != clustering.n_clusters() {
        return Err(Error::DimensionMismatch {
            what: "intra-cluster beamformers",
            expected: clustering.n_clusters(),
            found: beams.intra.len(),
        });
    }
    if !(noise_power > 0.0) {
        return Err(Error::config("noise power must be positive"));
    }
    let n = channels.first().map_or(0, Vec::len);
    for w in beams.streams() {
        if w.len() != n {
            return Err(Error::DimensionMismatch {
                what: "beamformer length",
                expected: n,
                found: w.len(),
            });
        }
    }

    Ok(channels
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let q = clustering.cluster_of(k);
            let inter = inner(h, &beams.inter).norm_sqr();
            let intra: Vec<f64> = beams.intra.iter().map(|w| inner(h, w).norm_sqr()).collect();
            let private: Vec<f64> = beams
                .private
                .iter()
                .map(|w| inner(h, w).norm_sqr())
                .collect();
            let own_intra = intra[q];
            let own_private = private[k];
            // sum the remaining terms directly so every denominator keeps the noise floor
            let others_intra: f64 = intra
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != q)
                .map(|(_, v)| v)
                .sum();
            let others_private: f64 = private
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != k)
                .map(|(_, v)| v)
                .sum();
            let d_private = others_intra + others_private + noise_power;
            let d_intra = d_private + own_private;
            let d_inter = d_intra + own_intra;
            let sinr_inter = inter / d_inter;
            let sinr_intra = own_intra / d_intra;
            let sinr_private = own_private / d_private;
            UserLink {
                sinr_inter,
                sinr_intra,
                sinr_private,
                rate_inter: log2_1p(sinr_inter),
                rate_intra: log2_1p(sinr_intra),
                rate_private: log2_1p(sinr_private),
            }
        })
        .collect())
}

/// Decodable common rates: the worst user over all users (inter) and over
/// each cluster (intra).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonRates {
    pub inter: f64,
    pub intra: Vec<f64>,
}

pub fn common_rates(links: &[UserLink], clustering: &Clustering) -> Result<CommonRates> {
    if links.len() != clustering.n_users() {
        return Err(Error::DimensionMismatch {
            what: "rate report users",
            expected: clustering.n_users(),
            found: links.len(),
        });
    }
    let inter = links
        .iter()
        .map(|l| l.rate_inter)
        .fold(f64::INFINITY, f64::min);
    let intra = clustering
        .clusters()
        .iter()
        .enumerate()
        .map(|(q, members)| {
            if members.is_empty() {
                return Err(Error::InvalidClustering(alloc::format!(
                    "cluster {q} is empty"
                )));
            }
            Ok(members
                .iter()
                .map(|&k| links[k].rate_intra)
                .fold(f64::INFINITY, f64::min))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CommonRates { inter, intra })
}

/// Checks the common-rate budgets and non-negativity of an allocation.
pub fn allocation_violations(
    common: &CommonRates,
    clustering: &Clustering,
    alloc: &RateAllocation,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let k_users = clustering.n_users();
    if alloc.inter.len() != k_users || alloc.intra.len() != k_users {
        out.push(Violation::new(
            ConstraintId::Dimension,
            libm::fabs(alloc.inter.len() as f64 - k_users as f64)
                + libm::fabs(alloc.intra.len() as f64 - k_users as f64),
        ));
        return out;
    }
    for k in 0..k_users {
        if alloc.inter[k] < -RATE_TOL || !alloc.inter[k].is_finite() {
            out.push(Violation::new(
                ConstraintId::NegativeRate { user: k },
                -alloc.inter[k],
            ));
        }
        if alloc.intra[k] < -RATE_TOL || !alloc.intra[k].is_finite() {
            out.push(Violation::new(
                ConstraintId::NegativeRate { user: k },
                -alloc.intra[k],
            ));
        }
    }
    let inter_sum: f64 = alloc.inter.iter().sum();
    if inter_sum > common.inter + RATE_TOL {
        out.push(Violation::new(
            ConstraintId::InterRateSum,
            inter_sum - common.inter,
        ));
    }
    for (q, members) in clustering.clusters().iter().enumerate() {
        let s: f64 = members.iter().map(|&k| alloc.intra[k]).sum();
        if s > common.intra[q] + RATE_TOL {
            out.push(Violation::new(
                ConstraintId::IntraRateSum { cluster: q },
                s - common.intra[q],
            ));
        }
    }
    out
}

/// Total per-user rates and their minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTotals {
    pub totals: Vec<f64>,
    pub min_rate: f64,
}

/// `r_c2,k + r_c1,k + R_p,k` for each user. An allocation that breaks the
/// common-rate budgets is reported, never clipped.
pub fn total_user_rates(
    links: &[UserLink],
    clustering: &Clustering,
    alloc: &RateAllocation,
) -> Result<UserTotals> {
    let common = common_rates(links, clustering)?;
    let violations = allocation_violations(&common, clustering, alloc);
    if !violations.is_empty() {
        return Err(Error::InfeasibleAllocation(violations));
    }
    let totals: Vec<f64> = links
        .iter()
        .enumerate()
        .map(|(k, l)| alloc.inter[k] + alloc.intra[k] + l.rate_private)
        .collect();
    let min_rate = totals.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UserTotals { totals, min_rate })
}

/// Everything known about one evaluated solution; serializable for dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub users: Vec<UserLink>,
    pub common: CommonRates,
    pub totals: Vec<f64>,
    pub min_rate: f64,
}

impl RateReport {
    pub fn evaluate(
        channels: &[CVector],
        beams: &BeamformerSet,
        clustering: &Clustering,
        alloc: &RateAllocation,
        noise_power: f64,
    ) -> Result<Self> {
        let users = evaluate_sinrs(channels, beams, clustering, noise_power)?;
        let common = common_rates(&users, clustering)?;
        let UserTotals { totals, min_rate } = total_user_rates(&users, clustering, alloc)?;
        Ok(Self {
            users,
            common,
            totals,
            min_rate,
        })
    }
}

/// Which constraint of the joint problem a violation refers to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintId {
    PositionBound { antenna: usize },
    Spacing { first: usize, second: usize },
    Partition { detail: String },
    Power,
    InterRateSum,
    IntraRateSum { cluster: usize },
    NegativeRate { user: usize },
    Dimension,
}

/// A violated constraint and by how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: ConstraintId,
    pub magnitude: f64,
}

impl Violation {
    pub fn new(constraint: ConstraintId, magnitude: f64) -> Self {
        Self {
            constraint,
            magnitude,
        }
    }
}

/// Checks positions, partition, power and common-rate budgets of a complete
/// solution. An empty list means every constraint holds within tolerance.
pub fn check_full_feasibility(
    positions: &AntennaPositions,
    beams: &BeamformerSet,
    alloc: &RateAllocation,
    clustering: &Clustering,
    channels: &[CVector],
    config: &GlobalConfig,
) -> Vec<Violation> {
    let mut out = Vec::new();

    if positions.len() != config.n_antennas {
        out.push(Violation::new(
            ConstraintId::Dimension,
            libm::fabs(positions.len() as f64 - config.n_antennas as f64),
        ));
    }
    for (m, &t) in positions.as_slice().iter().enumerate() {
        let excess = (config.t_min - t).max(t - config.t_max);
        if excess > POSITION_TOL || !t.is_finite() {
            out.push(Violation::new(
                ConstraintId::PositionBound { antenna: m },
                excess,
            ));
        }
    }
    let t = positions.as_slice();
    for i in 0..t.len() {
        for j in (i + 1)..t.len() {
            let gap = libm::fabs(t[i] - t[j]);
            if gap < config.min_spacing - POSITION_TOL {
                out.push(Violation::new(
                    ConstraintId::Spacing {
                        first: i,
                        second: j,
                    },
                    config.min_spacing - gap,
                ));
            }
        }
    }

    if clustering.n_users() != config.n_users {
        out.push(Violation::new(
            ConstraintId::Partition {
                detail: alloc::format!(
                    "clustering covers {} users, expected {}",
                    clustering.n_users(),
                    config.n_users
                ),
            },
            1.0,
        ));
        return out;
    }

    let power = beams.total_power();
    if power > config.p_max * (1.0 + POWER_REL_TOL) + f64::MIN_POSITIVE || !power.is_finite() {
        out.push(Violation::new(ConstraintId::Power, power - config.p_max));
    }

    match evaluate_sinrs(channels, beams, clustering, config.noise_power)
        .and_then(|links| common_rates(&links, clustering))
    {
        Ok(common) => out.extend(allocation_violations(&common, clustering, alloc)),
        Err(_) => out.push(Violation::new(ConstraintId::Dimension, 1.0)),
    }
    out
}
