//! Benchmark schemes. Each one is the proposed pipeline with a single
//! component swapped, sharing every other setting.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{AntennaPositions, Scenario};
use crate::config::ScaSettings;
use crate::exec::BatchExecutor;
use crate::inner::{solve_inner, ClusteringRule, InnerResult, InnerSettings};
use crate::rates::{norm_sqr, Clustering};
use crate::seed;
use crate::subproblem::{ConvexSolver, LayerMode};
use crate::swarm::{penalized_fitness, run_outer, PsoConfig, TraceRow};
use crate::{CVector, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    /// Pruning swarm, similarity clustering, two-layer RSMA.
    ProposedDnppso,
    /// Swarm without pruning.
    ClassicPso,
    /// Size-constrained k-means clustering.
    Ma2Kmeans,
    /// Random pairing.
    Ma2Random,
    /// Intra-cluster common streams removed.
    Ma1Rsma,
    /// Private streams only.
    MaSdma,
    /// Fixed half-wavelength array, two-layer RSMA.
    Fpa2Rsma,
    /// Fixed half-wavelength array, one-layer RSMA.
    Fpa1Rsma,
}

impl SchemeId {
    pub const ALL: [SchemeId; 8] = [
        SchemeId::ProposedDnppso,
        SchemeId::ClassicPso,
        SchemeId::Ma2Kmeans,
        SchemeId::Ma2Random,
        SchemeId::Ma1Rsma,
        SchemeId::MaSdma,
        SchemeId::Fpa2Rsma,
        SchemeId::Fpa1Rsma,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::ProposedDnppso => "proposed_dnppso",
            SchemeId::ClassicPso => "classic_pso",
            SchemeId::Ma2Kmeans => "ma2_kmeans",
            SchemeId::Ma2Random => "ma2_random",
            SchemeId::Ma1Rsma => "ma_1rsma",
            SchemeId::MaSdma => "ma_sdma",
            SchemeId::Fpa2Rsma => "fpa_2rsma",
            SchemeId::Fpa1Rsma => "fpa_1rsma",
        }
    }

    pub fn mode(self) -> LayerMode {
        match self {
            SchemeId::Ma1Rsma | SchemeId::Fpa1Rsma => LayerMode::OneLayer,
            SchemeId::MaSdma => LayerMode::PrivateOnly,
            _ => LayerMode::TwoLayer,
        }
    }

    pub fn uses_swarm(self) -> bool {
        !matches!(self, SchemeId::Fpa2Rsma | SchemeId::Fpa1Rsma)
    }

    pub fn pruning(self) -> bool {
        self != SchemeId::ClassicPso
    }

    /// Clustering rule; randomized rules draw from `seed`.
    pub fn clustering_rule(self, seed: u64) -> ClusteringRule {
        match self {
            SchemeId::Ma2Kmeans => ClusteringRule::KMeans { seed },
            SchemeId::Ma2Random => ClusteringRule::Random { seed },
            _ => ClusteringRule::Similarity,
        }
    }

    pub fn inner_settings(self, sca: &ScaSettings, seed: u64) -> InnerSettings {
        InnerSettings {
            sca: *sca,
            mode: self.mode(),
            clustering: self.clustering_rule(seed),
            randomizations: crate::inner::DEFAULT_RANDOMIZATIONS,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownScheme(s.to_string()))
    }
}

/// Outcome of one scheme on one scenario.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub scheme: SchemeId,
    pub positions: AntennaPositions,
    pub inner: InnerResult,
    /// Penalized fitness of the returned positions.
    pub fitness: f64,
    /// Number of inner-loop solves.
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

impl SchemeOutcome {
    pub fn min_rate(&self) -> f64 {
        self.inner.min_rate
    }
}

/// Seed stream tag for randomized clustering rules.
const CLUSTER_STREAM: u64 = 0x636c_7573;

/// Runs `id` on `scenario`. Swarm schemes use `pso` (with pruning switched
/// off for classic PSO); fixed-array schemes run one inner solve on the
/// half-wavelength grid.
pub fn run_scheme<S, X>(
    id: SchemeId,
    scenario: &Scenario,
    sca: &ScaSettings,
    pso: &PsoConfig,
    solver: &S,
    exec: &X,
) -> Result<SchemeOutcome>
where
    S: ConvexSolver + Sync + ?Sized,
    X: BatchExecutor,
{
    let inner = id.inner_settings(sca, seed::derive_seed(pso.seed, &[CLUSTER_STREAM]));
    if id.uses_swarm() {
        let pso = PsoConfig {
            pruning: pso.pruning && id.pruning(),
            ..pso.clone()
        };
        let out = run_outer(scenario, &inner, &pso, solver, exec)?;
        Ok(SchemeOutcome {
            scheme: id,
            positions: out.positions,
            inner: out.inner,
            fitness: out.fitness,
            evaluations: out.evaluations,
            trace: out.trace,
        })
    } else {
        let positions = AntennaPositions::uniform_half_wavelength(&scenario.config);
        let result = solve_inner(&positions, scenario, &inner, solver)?;
        let fitness = penalized_fitness(
            result.min_rate,
            positions.as_slice(),
            scenario.config.min_spacing,
            pso.penalty,
        );
        Ok(SchemeOutcome {
            scheme: id,
            positions,
            inner: result,
            fitness,
            evaluations: 1,
            trace: Vec::new(),
        })
    }
}

/// Channel direction as the real coordinates of the projector
/// `u u^H` with `u = h / ||h||`: diagonal, then `sqrt(2) Re` and
/// `sqrt(2) Im` of the strict upper triangle. Squared distances equal
/// `2 - 2 |u_a^H u_b|^2`, so a common phase on one user changes nothing.
fn embed(h: &[crate::Complex64]) -> Result<Vec<f64>> {
    let norm2 = norm_sqr(h);
    if !(norm2 > 0.0) {
        return Err(Error::DegenerateChannel(0));
    }
    let n = h.len();
    let mut out = Vec::with_capacity(n * n);
    out.extend(h.iter().map(|x| x.norm_sqr() / norm2));
    for i in 0..n {
        for j in (i + 1)..n {
            let p = h[i] * h[j].conj() / norm2;
            out.push(core::f64::consts::SQRT_2 * p.re);
            out.push(core::f64::consts::SQRT_2 * p.im);
        }
    }
    Ok(out)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const KMEANS_RESTARTS: usize = 10;
const KMEANS_MAX_ITERS: usize = 100;

/// k-means++ seeding followed by Lloyd iterations.
fn lloyd<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = vec![points[rng.random_range(0..n)].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| {
                centroids
                    .iter()
                    .map(|c| sq_dist(p, c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(points[pick].clone());
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..KMEANS_MAX_ITERS {
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        let changed = next != assignment;
        assignment = next;
        let dim = points[0].len();
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                continue;
            }
            *centroid = (0..dim)
                .map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64)
                .collect();
        }
        if !changed {
            break;
        }
    }
    centroids
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    (0..centroids.len()).fold(0, |b, c| {
        if sq_dist(p, &centroids[c]) < sq_dist(p, &centroids[b]) {
            c
        } else {
            b
        }
    })
}

/// Assigns points to centroids with at most `capacity` members each and no
/// empty cluster. Oversized clusters keep their closest members; evicted
/// points go greedily to the nearest centroid with room.
fn capacity_assign(points: &[Vec<f64>], centroids: &[Vec<f64>], capacity: usize) -> Vec<usize> {
    let n = points.len();
    let k = centroids.len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, centroids)).collect();
    let mut pool = Vec::new();
    for c in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&i| assignment[i] == c).collect();
        if members.len() > capacity {
            members.sort_by(|&a, &b| {
                sq_dist(&points[a], &centroids[c])
                    .total_cmp(&sq_dist(&points[b], &centroids[c]))
                    .then(a.cmp(&b))
            });
            pool.extend_from_slice(&members[capacity..]);
        }
    }
    for &i in &pool {
        assignment[i] = usize::MAX;
    }
    let size = |a: &[usize], c: usize| a.iter().filter(|&&x| x == c).count();
    while !pool.is_empty() {
        let mut best = (f64::INFINITY, 0, 0);
        for (slot, &i) in pool.iter().enumerate() {
            for c in 0..k {
                if size(&assignment, c) < capacity {
                    let d = sq_dist(&points[i], &centroids[c]);
                    if d < best.0 {
                        best = (d, slot, c);
                    }
                }
            }
        }
        let (_, slot, c) = best;
        assignment[pool[slot]] = c;
        pool.remove(slot);
    }
    // fill any empty cluster from clusters that can spare a member
    for c in 0..k {
        if size(&assignment, c) == 0 {
            let donor = (0..n)
                .filter(|&i| size(&assignment, assignment[i]) > 1)
                .min_by(|&a, &b| {
                    sq_dist(&points[a], &centroids[c])
                        .total_cmp(&sq_dist(&points[b], &centroids[c]))
                });
            if let Some(i) = donor {
                assignment[i] = c;
            }
        }
    }
    assignment
}

/// k-means on normalized channel directions, repaired so that every
/// cluster has at most `ceil(K / Q)` members and none is empty. With
/// `Q = ceil(K / 2)` this gives the same cluster sizes as greedy pairing.
pub fn kmeans_clustering<R: Rng + ?Sized>(
    channels: &[CVector],
    n_clusters: usize,
    rng: &mut R,
) -> Result<Clustering> {
    let k_users = channels.len();
    if n_clusters == 0 || n_clusters > k_users {
        return Err(Error::config("k-means needs 1 <= Q <= K"));
    }
    let points = channels
        .iter()
        .enumerate()
        .map(|(k, h)| embed(h).map_err(|_| Error::DegenerateChannel(k)))
        .collect::<Result<Vec<_>>>()?;
    let capacity = k_users.div_ceil(n_clusters);

    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let centroids = lloyd(&points, n_clusters, rng);
        let assignment = capacity_assign(&points, &centroids, capacity);
        let cost: f64 = points
            .iter()
            .zip(&assignment)
            .map(|(p, &c)| sq_dist(p, &centroids[c]))
            .sum();
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, assignment));
        }
    }
    let (_, assignment) = best.expect("at least one restart");
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for (k, &c) in assignment.iter().enumerate() {
        clusters[c].push(k);
    }
    Clustering::new(clusters, k_users)
}

/// Uniformly random pairing; with odd `K` one user is left as a singleton.
pub fn random_clustering<R: Rng + ?Sized>(n_users: usize, rng: &mut R) -> Clustering {
    let mut users: Vec<usize> = (0..n_users).collect();
    users.shuffle(rng);
    let clusters = users.chunks(2).map(<[usize]>::to_vec).collect();
    Clustering::new(clusters, n_users).expect("pairing is a partition")
}
