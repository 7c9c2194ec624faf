//! Outer loop: particle swarm over antenna positions with a spacing
//! penalty, linearly decreasing inertia, boundary clamping and pruning of
//! particles that crowd around the global best.
//!
//! Semantics are synchronous: within one iteration every active particle
//! moves using the global best from the end of the previous iteration, then
//! the whole batch is evaluated, then personal and global bests are updated
//! in particle order. Pruning is permanent.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{count_spacing_violators, AntennaPositions, Scenario};
use crate::exec::BatchExecutor;
use crate::inner::{solve_inner, InnerResult, InnerSettings};
use crate::seed;
use crate::subproblem::ConvexSolver;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    /// Personal learning factor.
    pub c1: f64,
    /// Global learning factor.
    pub c2: f64,
    pub inertia_min: f64,
    pub inertia_max: f64,
    /// Fitness penalty per antenna that violates the minimum spacing.
    pub penalty: f64,
    /// Fraction of the swarm still active in the last iteration.
    pub final_fraction: f64,
    /// Per-coordinate velocity clamp in meters; half the aperture if unset.
    pub velocity_clamp: Option<f64>,
    /// Independent runs; the best is kept.
    pub restarts: usize,
    pub seed: u64,
    /// Disable to get classic PSO.
    pub pruning: bool,
}

impl PsoConfig {
    /// 50 particles, 50 iterations, c1 = c2 = 1.4, inertia 0.9 -> 0.4,
    /// penalty 20, pruning down to 2% of the swarm.
    pub fn reference() -> Self {
        Self {
            particles: 50,
            iterations: 50,
            c1: 1.4,
            c2: 1.4,
            inertia_min: 0.4,
            inertia_max: 0.9,
            penalty: 20.0,
            final_fraction: 0.02,
            velocity_clamp: None,
            restarts: 3,
            seed: 0,
            pruning: true,
        }
    }

    /// Reference parameters with a 20 x 20 swarm for desk-scale runs.
    pub fn desk() -> Self {
        Self {
            particles: 20,
            iterations: 20,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m));
        if self.particles == 0 {
            return bad("particles must be at least 1");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.final_fraction > 0.0 && self.final_fraction <= 1.0) {
            return bad("final_fraction must lie in (0, 1]");
        }
        if !(self.inertia_min > 0.0 && self.inertia_max >= self.inertia_min) {
            return bad("inertia bounds must satisfy 0 < min <= max");
        }
        if !(self.penalty > 0.0) {
            return bad("penalty must be positive");
        }
        if !(self.c1 >= 0.0 && self.c2 >= 0.0) {
            return bad("learning factors must be non-negative");
        }
        if self.restarts == 0 {
            return bad("restarts must be at least 1");
        }
        if self.velocity_clamp.is_some_and(|v| !(v > 0.0)) {
            return bad("velocity_clamp must be positive");
        }
        Ok(())
    }

    /// Inertia at update iteration `i` in `0..iterations`, linear from
    /// `inertia_max` down to `inertia_min`.
    pub fn inertia(&self, i: usize) -> f64 {
        if self.iterations <= 1 {
            return self.inertia_max;
        }
        let frac = i.min(self.iterations - 1) as f64 / (self.iterations - 1) as f64;
        self.inertia_max - (self.inertia_max - self.inertia_min) * frac
    }

    /// Smallest active count, reached in the last iteration.
    pub fn final_active(&self) -> usize {
        (libm::round(self.final_fraction * self.particles as f64) as usize).max(1)
    }

    /// Active particles at each update iteration. Without pruning every
    /// particle stays active.
    pub fn active_schedule(&self) -> Vec<usize> {
        let p = self.particles as f64;
        let floor = self.final_active();
        (0..self.iterations)
            .map(|i| {
                if !self.pruning || self.iterations == 1 {
                    return self.particles;
                }
                let frac = i as f64 / (self.iterations - 1) as f64;
                let target = libm::round(p - (p - self.final_fraction * p) * frac) as usize;
                target.max(floor).min(self.particles)
            })
            .collect()
    }

    /// Inner-loop evaluations of one run: the initial swarm plus every
    /// active particle in every update iteration.
    pub fn evaluations_per_run(&self) -> usize {
        self.particles + self.active_schedule().iter().sum::<usize>()
    }
}

/// Search box shared by every coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
    pub dim: usize,
}

impl Bounds {
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// `R - penalty * L`, where `L` counts antennas closer than `min_spacing` to
/// another antenna.
pub fn penalized_fitness(rate: f64, positions: &[f64], min_spacing: f64, penalty: f64) -> f64 {
    rate - penalty * count_spacing_violators(positions, min_spacing, 0.0) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwarmState {
    pub particles: Vec<Particle>,
    pub gbest_position: Vec<f64>,
    pub gbest_fitness: f64,
    /// Number of completed update iterations.
    pub iteration: usize,
    /// Inner-loop evaluations so far.
    pub evaluations: usize,
}

impl SwarmState {
    pub fn active_count(&self) -> usize {
        self.particles.iter().filter(|p| p.active).count()
    }
}

/// Initial positions, i.i.d. uniform over the box per coordinate.
pub fn init_positions<R: Rng + ?Sized>(
    particles: usize,
    bounds: &Bounds,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    (0..particles)
        .map(|_| {
            (0..bounds.dim)
                .map(|_| bounds.lo + (bounds.hi - bounds.lo) * rng.random::<f64>())
                .collect()
        })
        .collect()
}

/// Swarm with zero velocities, personal bests at the initial positions and
/// the global best at the fittest of them (first on ties).
pub fn init_swarm(positions: Vec<Vec<f64>>, fitness: &[f64]) -> SwarmState {
    assert_eq!(positions.len(), fitness.len());
    let best = fitness
        .iter()
        .enumerate()
        .fold(0, |b, (i, &f)| if f > fitness[b] { i } else { b });
    let particles: Vec<Particle> = positions
        .into_iter()
        .zip(fitness)
        .map(|(x, &f)| Particle {
            velocity: vec![0.0; x.len()],
            best_position: x.clone(),
            best_fitness: f,
            position: x,
            active: true,
        })
        .collect();
    SwarmState {
        gbest_position: particles[best].position.clone(),
        gbest_fitness: fitness[best],
        evaluations: particles.len(),
        particles,
        iteration: 0,
    }
}

/// Velocity and position update of one particle; positions are clamped
/// into the box and velocities into `[-v_max, v_max]`.
#[allow(clippy::too_many_arguments)]
pub fn update_particle<R: Rng + ?Sized>(
    particle: &mut Particle,
    gbest: &[f64],
    inertia: f64,
    c1: f64,
    c2: f64,
    v_max: f64,
    bounds: &Bounds,
    rng: &mut R,
) {
    let r1: f64 = rng.random();
    let r2: f64 = rng.random();
    for m in 0..particle.position.len() {
        let x = particle.position[m];
        let v = inertia * particle.velocity[m]
            + c1 * r1 * (particle.best_position[m] - x)
            + c2 * r2 * (gbest[m] - x);
        let v = v.clamp(-v_max, v_max);
        particle.velocity[m] = v;
        particle.position[m] = bounds.clamp(x + v);
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Deactivates the `n` active particles closest to the global best (ties
/// by index). Equivalent to a neighborhood radius midway between the n-th
/// and (n+1)-th smallest distances. Returns the deactivated indices.
pub fn prune(state: &mut SwarmState, n: usize) -> Vec<usize> {
    let mut order: Vec<(f64, usize)> = state
        .particles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.active)
        .map(|(i, p)| (distance(&p.position, &state.gbest_position), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let removed: Vec<usize> = order.iter().take(n).map(|&(_, i)| i).collect();
    for &i in &removed {
        state.particles[i].active = false;
    }
    removed
}

/// Fitness and payload of one evaluated position.
#[derive(Debug, Clone)]
pub struct Evaluated<T> {
    pub fitness: f64,
    pub detail: T,
}

/// One row of the convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub restart: usize,
    /// 0 for the initial swarm, then one row per update iteration.
    pub iteration: usize,
    pub gbest_fitness: f64,
    pub active: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SwarmOutcome<T> {
    pub best_position: Vec<f64>,
    pub best_fitness: f64,
    pub best_detail: T,
    /// Evaluations over all restarts.
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
    /// Index of the restart that produced the best position.
    pub best_restart: usize,
}

/// Maximizes `evaluate` over the box. Each restart draws its own stream
/// from `derive_seed(pso.seed, [restart])`.
pub fn optimize<X, T, F>(
    pso: &PsoConfig,
    bounds: &Bounds,
    exec: &X,
    evaluate: F,
) -> Result<SwarmOutcome<T>>
where
    X: BatchExecutor,
    T: Clone + Send,
    F: Fn(&[f64]) -> Evaluated<T> + Sync,
{
    pso.validate()?;
    if !(bounds.hi > bounds.lo) || bounds.dim == 0 {
        return Err(Error::config("search box must be non-empty"));
    }
    let v_max = pso.velocity_clamp.unwrap_or((bounds.hi - bounds.lo) / 2.0);
    let schedule = pso.active_schedule();
    let mut best: Option<SwarmOutcome<T>> = None;
    let mut total_evaluations = 0;
    let mut trace = Vec::new();

    for restart in 0..pso.restarts {
        let mut rng = seed::rng(seed::derive_seed(pso.seed, &[restart as u64]));
        let positions = init_positions(pso.particles, bounds, &mut rng);
        let evals = exec.map(&positions, |x| evaluate(x));
        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        let mut state = init_swarm(positions, &fitness);
        let first = (0..fitness.len()).fold(0, |b, i| if fitness[i] > fitness[b] { i } else { b });
        let mut gbest_detail = evals[first].detail.clone();
        drop(evals);
        trace.push(TraceRow {
            restart,
            iteration: 0,
            gbest_fitness: state.gbest_fitness,
            active: state.active_count(),
            evaluations: state.evaluations,
        });

        for (i, &scheduled) in schedule.iter().enumerate() {
            debug_assert_eq!(state.active_count(), scheduled);
            let inertia = pso.inertia(i);
            let gbest = state.gbest_position.clone();
            let active: Vec<usize> = (0..state.particles.len())
                .filter(|&p| state.particles[p].active)
                .collect();
            for &p in &active {
                update_particle(
                    &mut state.particles[p],
                    &gbest,
                    inertia,
                    pso.c1,
                    pso.c2,
                    v_max,
                    bounds,
                    &mut rng,
                );
            }
            let moved: Vec<Vec<f64>> = active
                .iter()
                .map(|&p| state.particles[p].position.clone())
                .collect();
            let evals = exec.map(&moved, |x| evaluate(x));
            state.evaluations += evals.len();
            for (&p, e) in active.iter().zip(evals) {
                let particle = &mut state.particles[p];
                if e.fitness > particle.best_fitness {
                    particle.best_fitness = e.fitness;
                    particle.best_position = particle.position.clone();
                }
                if e.fitness > state.gbest_fitness {
                    state.gbest_fitness = e.fitness;
                    state.gbest_position = particle.position.clone();
                    gbest_detail = e.detail;
                }
            }
            state.iteration = i + 1;
            if let Some(&next) = schedule.get(i + 1) {
                prune(&mut state, scheduled.saturating_sub(next));
            }
            trace.push(TraceRow {
                restart,
                iteration: i + 1,
                gbest_fitness: state.gbest_fitness,
                active: scheduled,
                evaluations: state.evaluations,
            });
        }

        total_evaluations += state.evaluations;
        if best
            .as_ref()
            .is_none_or(|b| state.gbest_fitness > b.best_fitness)
        {
            best = Some(SwarmOutcome {
                best_position: state.gbest_position,
                best_fitness: state.gbest_fitness,
                best_detail: gbest_detail,
                evaluations: 0,
                trace: Vec::new(),
                best_restart: restart,
            });
        }
    }
    let mut out = best.expect("at least one restart");
    out.evaluations = total_evaluations;
    out.trace = trace;
    Ok(out)
}

/// Result of the full two-loop search.
#[derive(Debug, Clone)]
pub struct OuterResult {
    pub positions: AntennaPositions,
    pub fitness: f64,
    pub inner: InnerResult,
    /// Inner-loop solves over all restarts.
    pub evaluations: usize,
    pub trace: Vec<TraceRow>,
}

/// Swarm search over antenna positions with the inner solve as fitness.
pub fn run_outer<S, X>(
    scenario: &Scenario,
    inner: &InnerSettings,
    pso: &PsoConfig,
    solver: &S,
    exec: &X,
) -> Result<OuterResult>
where
    S: ConvexSolver + Sync + ?Sized,
    X: BatchExecutor,
{
    let cfg = &scenario.config;
    let bounds = Bounds {
        lo: cfg.t_min,
        hi: cfg.t_max,
        dim: cfg.n_antennas,
    };
    let outcome = optimize(pso, &bounds, exec, |x| {
        let positions = AntennaPositions::new(x.to_vec());
        match solve_inner(&positions, scenario, inner, solver) {
            Ok(r) => Evaluated {
                fitness: penalized_fitness(r.min_rate, x, cfg.min_spacing, pso.penalty),
                detail: Ok(r),
            },
            Err(e) => Evaluated {
                fitness: f64::NEG_INFINITY,
                detail: Err(e),
            },
        }
    })?;
    Ok(OuterResult {
        positions: AntennaPositions::new(outcome.best_position),
        fitness: outcome.best_fitness,
        inner: outcome.best_detail?,
        evaluations: outcome.evaluations,
        trace: outcome.trace,
    })
}
