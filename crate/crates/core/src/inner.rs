//! Inner loop: for fixed antenna positions, cluster the users, run SCA over
//! the lifted subproblem, recover beamformers and settle the rate shares.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::channel::{AntennaPositions, Scenario};
use crate::clustering::cluster_by_similarity;
use crate::config::ScaSettings;
use core::f64::consts::FRAC_1_SQRT_2;

use rand_distr::{Distribution, Normal};

use crate::linalg::{hermitian_eigen, outer, rank_one_recovery, CMatrix};
use crate::rates::{
    common_rates, evaluate_sinrs, norm_sqr, total_user_rates, BeamformerSet, Clustering,
    RateAllocation,
};
use crate::schemes::{kmeans_clustering, random_clustering};
use crate::seed;
use crate::subproblem::{
    build_subproblem, intra_block, private_block, ConvexSolver, ExpansionPoint, LayerMode,
    LiftedSolution, SolveError,
};
use crate::{CVector, Complex64, Error, Result};

/// Maximum-ratio private beams with an equal power split; common beams
/// start at zero.
pub fn mrt_initialization(
    channels: &[CVector],
    n_clusters: usize,
    p_max: f64,
) -> Result<BeamformerSet> {
    let k_users = channels.len();
    let n = channels.first().map_or(0, Vec::len);
    let mut beams = BeamformerSet::zeros(n, n_clusters, k_users);
    let per_user = libm::sqrt(p_max / k_users as f64);
    for (k, h) in channels.iter().enumerate() {
        let norm = libm::sqrt(norm_sqr(h));
        if !(norm > 0.0) {
            return Err(Error::DegenerateChannel(k));
        }
        beams.private[k] = h.iter().map(|x| x * (per_user / norm)).collect();
    }
    Ok(beams)
}

/// Outer products of every stream, in block order.
pub fn lift(beams: &BeamformerSet) -> Vec<CMatrix> {
    beams.streams().map(|w| outer(w)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaStatus {
    /// Slack improved by less than the accuracy.
    Converged,
    /// Hit the iteration cap.
    IterationLimit,
    /// The backend failed; the last good iterate was kept.
    Fallback,
}

#[derive(Debug, Clone)]
pub struct ScaOutcome {
    pub solution: LiftedSolution,
    /// Slack after every successful subproblem solve.
    pub slacks: Vec<f64>,
    pub status: ScaStatus,
    /// Last backend error when `status` is `Fallback`.
    pub failure: Option<SolveError>,
}

impl ScaOutcome {
    pub fn iterations(&self) -> usize {
        self.slacks.len()
    }
}

/// Successive convex approximation over the lifted subproblem, starting
/// from the MRT point. Stops when the slack gains less than
/// `settings.accuracy` or after `settings.max_iterations` solves. A backend
/// failure keeps the previous iterate and stops.
#[allow(clippy::too_many_arguments)]
pub fn sca_solve<S: ConvexSolver + ?Sized>(
    channels: &[CVector],
    clustering: &Clustering,
    noise_power: f64,
    p_max: f64,
    mode: LayerMode,
    settings: &ScaSettings,
    solver: &S,
) -> Result<ScaOutcome> {
    settings.validate()?;
    let init = lift(&mrt_initialization(
        channels,
        clustering.n_clusters(),
        p_max,
    )?);
    let mut expansion = ExpansionPoint::from_blocks(channels, &init, clustering);
    let mut current: Option<LiftedSolution> = None;
    let mut slacks = Vec::new();
    let mut status = ScaStatus::IterationLimit;
    let mut failure = None;

    for _ in 0..settings.max_iterations {
        let program = build_subproblem(channels, clustering, &expansion, noise_power, p_max, mode)?;
        match solver.solve(&program) {
            Ok(next) => {
                // the previous iterate stays feasible after re-linearization
                // and its slack can only grow, so keep the better point
                let next = match &current {
                    Some(c) => {
                        let anchor = program.anchor_point(c.blocks.clone(), c.allocation.clone());
                        if anchor.slack > next.slack {
                            anchor
                        } else {
                            next
                        }
                    }
                    None => next,
                };
                let gain = current.as_ref().map(|c| next.slack - c.slack);
                slacks.push(next.slack);
                expansion = ExpansionPoint::from_blocks(channels, &next.blocks, clustering);
                current = Some(next);
                if gain.is_some_and(|g| g < settings.accuracy) {
                    status = ScaStatus::Converged;
                    break;
                }
            }
            Err(e) => {
                log::warn!(
                    "subproblem solve failed after {} iterates: {e}",
                    slacks.len()
                );
                if current.is_none() {
                    current = Some(
                        program.anchor_point(init.clone(), RateAllocation::zeros(channels.len())),
                    );
                }
                status = ScaStatus::Fallback;
                failure = Some(e);
                break;
            }
        }
    }
    Ok(ScaOutcome {
        solution: current.expect("at least one iterate or fallback"),
        slacks,
        status,
        failure,
    })
}

/// Rate shares that respect the common rates actually achieved by the
/// recovered beamformers: any group whose shares exceed its recomputed
/// common rate is scaled down proportionally. Returns the allocation and
/// the resulting minimum user rate.
pub fn reconcile_allocation(
    beams: &BeamformerSet,
    relaxed: &RateAllocation,
    channels: &[CVector],
    clustering: &Clustering,
    noise_power: f64,
) -> Result<(RateAllocation, f64)> {
    let links = evaluate_sinrs(channels, beams, clustering, noise_power)?;
    let common = common_rates(&links, clustering)?;
    let mut alloc = RateAllocation {
        inter: relaxed.inter.iter().map(|&r| r.max(0.0)).collect(),
        intra: relaxed.intra.iter().map(|&r| r.max(0.0)).collect(),
    };

    let fit = |shares: &mut [f64], budget: f64| {
        let sum: f64 = shares.iter().sum();
        if sum > budget {
            let factor = if budget > 0.0 { budget / sum } else { 0.0 };
            shares.iter_mut().for_each(|r| *r *= factor);
        }
    };
    fit(&mut alloc.inter, common.inter);
    for (q, members) in clustering.clusters().iter().enumerate() {
        let mut shares: Vec<f64> = members.iter().map(|&k| alloc.intra[k]).collect();
        fit(&mut shares, common.intra[q]);
        for (&k, r) in members.iter().zip(shares) {
            alloc.intra[k] = r;
        }
    }
    let totals = total_user_rates(&links, clustering, &alloc)?;
    Ok((alloc, totals.min_rate))
}

/// How users are grouped before the SCA loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum ClusteringRule {
    /// Greedy pairing by channel cosine similarity.
    Similarity,
    /// Size-constrained k-means on normalized channels.
    KMeans { seed: u64 },
    /// Uniformly random pairing.
    Random { seed: u64 },
}

impl ClusteringRule {
    pub fn apply(&self, channels: &[CVector]) -> Result<Clustering> {
        let k_users = channels.len();
        match *self {
            ClusteringRule::Similarity => cluster_by_similarity(channels),
            ClusteringRule::KMeans { seed } => {
                kmeans_clustering(channels, k_users.div_ceil(2), &mut seed::rng(seed))
            }
            ClusteringRule::Random { seed } => Ok(random_clustering(k_users, &mut seed::rng(seed))),
        }
    }
}

/// Everything the inner loop needs besides the scenario and positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSettings {
    pub sca: ScaSettings,
    pub mode: LayerMode,
    pub clustering: ClusteringRule,
    /// Gaussian draws tried when some relaxed block is not rank one.
    #[serde(default = "default_randomizations")]
    pub randomizations: usize,
}

fn default_randomizations() -> usize {
    DEFAULT_RANDOMIZATIONS
}

pub const DEFAULT_RANDOMIZATIONS: usize = 64;

/// Blocks with `lambda_2 / lambda_1` above this get randomized candidates.
pub const LOOSE_RATIO: f64 = 1e-4;

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            sca: ScaSettings::default(),
            mode: LayerMode::TwoLayer,
            clustering: ClusteringRule::Similarity,
            randomizations: DEFAULT_RANDOMIZATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerResult {
    pub clustering: Clustering,
    pub beamformers: BeamformerSet,
    pub allocation: RateAllocation,
    /// Minimum user rate achieved by the recovered beamformers.
    pub min_rate: f64,
    /// Slack of the final relaxed solution.
    pub relaxation_slack: f64,
    pub slack_trace: Vec<f64>,
    pub status: ScaStatus,
    /// Backend error that stopped the iterations early, if any.
    pub failure: Option<SolveError>,
    /// `lambda_2 / lambda_1` of every active block.
    pub eigen_ratios: Vec<f64>,
}

impl InnerResult {
    pub fn sca_iterations(&self) -> usize {
        self.slack_trace.len()
    }
}

/// Recovers one vector per block and arranges them as a beamformer set.
pub fn recover_beamformers(
    blocks: &[CMatrix],
    n_clusters: usize,
    active: &[bool],
) -> (BeamformerSet, Vec<f64>) {
    let n_users = blocks.len() - 1 - n_clusters;
    let n = blocks.first().map_or(0, CMatrix::nrows);
    let mut ratios = Vec::new();
    let mut take = |i: usize| -> CVector {
        if !active[i] {
            return alloc::vec![Complex64::new(0.0, 0.0); n];
        }
        let r = rank_one_recovery(&blocks[i]);
        ratios.push(r.eigen_ratio);
        r.vector
    };
    let inter = take(0);
    let intra = (0..n_clusters).map(|q| take(intra_block(q))).collect();
    let private = (0..n_users)
        .map(|k| take(private_block(n_clusters, k)))
        .collect();
    (
        BeamformerSet {
            inter,
            intra,
            private,
        },
        ratios,
    )
}

const RANDOMIZATION_SEED: u64 = 0x005e_ed0f_4a4d;

/// `F` with `F F^H` equal to the PSD part of `m`.
fn covariance_factor(m: &CMatrix) -> CMatrix {
    let (values, vectors) = hermitian_eigen(m);
    let n = m.nrows();
    CMatrix::from_fn(n, n, |r, c| vectors[(r, c)] * libm::sqrt(values[c].max(0.0)))
}

/// One draw from `CN(0, F F^H)`, rescaled to the power `tr(F F^H)`.
fn gaussian_draw(factor: &CMatrix, rng: &mut impl rand::Rng) -> CVector {
    let n = factor.nrows();
    let normal = Normal::new(0.0, FRAC_1_SQRT_2).expect("unit normal");
    let xi = CMatrix::from_fn(n, 1, |_, _| Complex64::new(normal.sample(rng), normal.sample(rng)));
    let w = factor * xi;
    let target = factor.norm_squared();
    let got = w.norm_squared();
    let scale = if got > 0.0 { libm::sqrt(target / got) } else { 0.0 };
    w.iter().map(|x| x * scale).collect()
}

fn block_vector(beams: &mut BeamformerSet, n_clusters: usize, block: usize) -> &mut CVector {
    if block == 0 {
        &mut beams.inter
    } else if block <= n_clusters {
        &mut beams.intra[block - 1]
    } else {
        &mut beams.private[block - 1 - n_clusters]
    }
}

/// Fitness of one antenna placement: channels, clustering, SCA, rank-one
/// recovery and rate reconciliation. Pure in its inputs.
pub fn solve_inner<S: ConvexSolver + ?Sized>(
    positions: &AntennaPositions,
    scenario: &Scenario,
    settings: &InnerSettings,
    solver: &S,
) -> Result<InnerResult> {
    let cfg = &scenario.config;
    let channels = scenario.channels(positions)?;
    let clustering = settings.clustering.apply(&channels)?;
    let outcome = sca_solve(
        &channels,
        &clustering,
        cfg.noise_power,
        cfg.p_max,
        settings.mode,
        &settings.sca,
        solver,
    )?;
    let n_blocks = 1 + clustering.n_clusters() + channels.len();
    let mut active = alloc::vec![true; n_blocks];
    active[0] = settings.mode.has_inter();
    for q in 0..clustering.n_clusters() {
        active[intra_block(q)] = settings.mode.has_intra();
    }
    let blocks = &outcome.solution.blocks;
    let (beams, eigen_ratios) = recover_beamformers(blocks, clustering.n_clusters(), &active);
    let settle = |beams: BeamformerSet| -> Result<(BeamformerSet, RateAllocation, f64)> {
        // recovered vectors can exceed the budget by solver round-off
        let power = beams.total_power();
        let beams = if power > cfg.p_max && power > 0.0 {
            beams.scaled(libm::sqrt(cfg.p_max / power))
        } else {
            beams
        };
        let (allocation, min_rate) = reconcile_allocation(
            &beams,
            &outcome.solution.allocation,
            &channels,
            &clustering,
            cfg.noise_power,
        )?;
        Ok((beams, allocation, min_rate))
    };
    let mut best = settle(beams.clone())?;

    let loose: Vec<usize> = (0..n_blocks)
        .filter(|&i| active[i] && rank_one_recovery(&blocks[i]).eigen_ratio > LOOSE_RATIO)
        .collect();
    if !loose.is_empty() && settings.randomizations > 0 {
        let factors: Vec<CMatrix> = loose.iter().map(|&i| covariance_factor(&blocks[i])).collect();
        let mut rng = seed::rng(RANDOMIZATION_SEED);
        for _ in 0..settings.randomizations {
            let mut candidate = beams.clone();
            for (&i, f) in loose.iter().zip(&factors) {
                *block_vector(&mut candidate, clustering.n_clusters(), i) = gaussian_draw(f, &mut rng);
            }
            let tried = settle(candidate)?;
            if tried.2 > best.2 {
                best = tried;
            }
        }
    }
    let (beams, allocation, min_rate) = best;
    Ok(InnerResult {
        clustering,
        beamformers: beams,
        allocation,
        min_rate,
        relaxation_slack: outcome.solution.slack,
        slack_trace: outcome.slacks,
        status: outcome.status,
        failure: outcome.failure,
        eigen_ratios,
    })
}
