//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! `MARSMA_ACCEPTANCE_REALIZATIONS` sets the realization count of the
//! swarm-based criteria (default 20). `MARSMA_WORKERS` sizes the pool.

mod common;

use std::process::Command;
use std::time::Instant;

use common::{cn, grid_true_rate, rng, scalar_scenario};
use marsma::harness::mean_std;
use marsma::pool::RayonExecutor;
use marsma::ClarabelSolver;
use marsma_core::channel::{AntennaPositions, Scenario};
use marsma_core::config::{dbm_to_watts, GlobalConfig, ScaSettings};
use marsma_core::exec::{BatchExecutor, Sequential};
use marsma_core::inner::{solve_inner, InnerResult, InnerSettings};
use marsma_core::rates::check_full_feasibility;
use marsma_core::schemes::{run_scheme, SchemeId};
use marsma_core::seed::{self, derive_seed};
use marsma_core::subproblem::LayerMode;
use marsma_core::swarm::PsoConfig;
use statrs::distribution::{Binomial, DiscreteCDF};

const SEED: u64 = 2024;
const EPS: f64 = 1e-3;
const SOLVER_TOL: f64 = 1e-6;

struct Report {
    lines: Vec<(String, bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        println!("{name}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.lines.push((name.to_string(), pass, detail));
    }
}

fn realizations() -> usize {
    std::env::var("MARSMA_ACCEPTANCE_REALIZATIONS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or(20)
}

fn criterion_1(report: &mut Report) {
    let start = Instant::now();
    let solver = ClarabelSolver::default();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let h = cn(&mut r);
        let sc = scalar_scenario(h, 1.0, 1.0);
        let apv = AntennaPositions::new(vec![0.0]);
        let out = solve_inner(&apv, &sc, &InnerSettings::default(), &solver).unwrap();
        let oracle = grid_true_rate(h.norm_sqr(), 1.0, 1.0, 1e-2);
        worst = worst.max((out.min_rate - oracle).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    report.record(
        "criterion 1",
        worst <= 2.0 * EPS && secs < 60.0,
        format!("max |inner - grid| = {worst:.2e} over 20 draws, {secs:.1} s"),
    );
}

/// Criteria 2 and 3 share the same 50 inner runs.
fn criteria_2_3(report: &mut Report) -> Vec<(Scenario, InnerResult)> {
    let solver = ClarabelSolver::default();
    let cfg = GlobalConfig::reference(4, 6);
    let runs: Vec<(Scenario, InnerResult)> = (0..50)
        .map(|i| {
            let sc = Scenario::sample(&cfg, &mut seed::rng(derive_seed(SEED, &[3, i]))).unwrap();
            let apv = AntennaPositions::uniform_half_wavelength(&cfg);
            let out = solve_inner(&apv, &sc, &InnerSettings::default(), &solver).unwrap();
            (sc, out)
        })
        .collect();

    let tol = 10.0 * SOLVER_TOL;
    let monotone = runs
        .iter()
        .filter(|(_, o)| o.slack_trace.windows(2).all(|w| w[1] >= w[0] - tol))
        .count();
    let bounded = runs.iter().filter(|(_, o)| o.sca_iterations() <= 20).count();
    let failures = runs.iter().filter(|(_, o)| o.failure.is_some()).count();
    report.record(
        "criterion 2",
        monotone == 50 && bounded == 50 && failures == 0,
        format!("monotone {monotone}/50, within 20 iterations {bounded}/50, backend failures {failures}"),
    );

    let mut ratios: Vec<f64> = runs.iter().flat_map(|(_, o)| o.eigen_ratios.clone()).collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios[ratios.len() / 2];
    let tight = runs
        .iter()
        .filter(|(_, o)| o.min_rate >= o.relaxation_slack - 0.05)
        .count();
    let share = tight as f64 / runs.len() as f64;
    report.record(
        "criterion 3",
        median <= 1e-4 && share >= 0.95,
        format!(
            "median eigen ratio {median:.2e} over {} blocks, min-rate >= z - 0.05 in {tight}/50",
            ratios.len()
        ),
    );
    runs
}

/// Two-layer against one-layer on the criterion-2 instances.
fn layer_nesting(report: &mut Report, runs: &[(Scenario, InnerResult)]) {
    let solver = ClarabelSolver::default();
    let one = InnerSettings {
        mode: LayerMode::OneLayer,
        ..InnerSettings::default()
    };
    let held = runs
        .iter()
        .filter(|(sc, two)| {
            let apv = AntennaPositions::uniform_half_wavelength(&sc.config);
            let lo = solve_inner(&apv, sc, &one, &solver).unwrap();
            two.min_rate >= lo.min_rate - 2.0 * EPS
        })
        .count();
    report.record(
        "supplementary (two-layer >= one-layer - 2 eps, >= 90%)",
        held as f64 / runs.len() as f64 >= 0.9,
        format!("held in {held}/{}", runs.len()),
    );
}

#[derive(Clone, Copy, PartialEq)]
enum Group {
    Base,
    Power(f64),
    Antennas(usize),
}

struct Task {
    group: Group,
    realization: usize,
    scheme: SchemeId,
}

struct Outcome {
    min_rate: f64,
    evaluations: usize,
    violations: usize,
    error: Option<String>,
    gbest_monotone: bool,
    apv_feasible: bool,
}

fn group_config(g: Group) -> GlobalConfig {
    match g {
        Group::Base => GlobalConfig::reference(4, 6),
        Group::Power(dbm) => GlobalConfig {
            p_max: dbm_to_watts(dbm),
            ..GlobalConfig::reference(4, 6)
        },
        Group::Antennas(n) => GlobalConfig::reference(n, 6),
    }
}

fn swarm(realization: usize) -> PsoConfig {
    PsoConfig {
        seed: derive_seed(SEED, &[2, realization as u64]),
        restarts: 1,
        ..PsoConfig::desk()
    }
}

fn execute(task: &Task) -> Outcome {
    let cfg = group_config(task.group);
    // same draw stream for every group, so the trend checks are paired
    let stream = derive_seed(SEED, &[1, task.realization as u64]);
    let sc = Scenario::sample(&cfg, &mut seed::rng(stream)).unwrap();
    let pso = swarm(task.realization);
    let solver = ClarabelSolver::default();
    let start = Instant::now();
    let result = run_scheme(task.scheme, &sc, &ScaSettings::default(), &pso, &solver, &Sequential);
    eprintln!(
        "  {} realization {} done in {:.0} s",
        task.scheme,
        task.realization,
        start.elapsed().as_secs_f64()
    );
    match result {
        Ok(out) => {
            let h = sc.channels(&out.positions).unwrap();
            let violations = check_full_feasibility(
                &out.positions,
                &out.inner.beamformers,
                &out.inner.allocation,
                &out.inner.clustering,
                &h,
                &cfg,
            )
            .len();
            let gbest_monotone = out.trace.windows(2).all(|w| {
                w[1].restart != w[0].restart || w[1].gbest_fitness >= w[0].gbest_fitness
            });
            Outcome {
                min_rate: out.inner.min_rate,
                evaluations: out.evaluations,
                violations,
                error: None,
                gbest_monotone,
                apv_feasible: out.positions.is_feasible(&cfg, 0.0),
            }
        }
        Err(e) => Outcome {
            min_rate: f64::NAN,
            evaluations: 0,
            violations: 0,
            error: Some(e.to_string()),
            gbest_monotone: false,
            apv_feasible: false,
        },
    }
}

/// One-sided paired sign test of `a > b`.
fn sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    let wins = a.iter().zip(b).filter(|(x, y)| *x > *y).count();
    let losses = a.iter().zip(b).filter(|(x, y)| *x < *y).count();
    let n = (wins + losses) as u64;
    let p = if wins == 0 {
        1.0
    } else {
        Binomial::new(0.5, n).unwrap().sf(wins as u64 - 1)
    };
    (wins, losses, p)
}

fn mean(xs: &[f64]) -> f64 {
    mean_std(xs).0
}

/// Counts steps where the mean drops; passes with no drop, or one drop no
/// larger than the standard error of the paired difference.
fn trend(series: &[Vec<f64>]) -> (bool, String) {
    let mut inversions = 0;
    let mut within = true;
    let mut detail = Vec::new();
    for w in series.windows(2) {
        let diff: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| b - a).collect();
        let (d, sd) = mean_std(&diff);
        let se = sd / (diff.len() as f64).sqrt();
        if d < 0.0 {
            inversions += 1;
            within &= -d <= se;
        }
        detail.push(format!("{:+.3} (se {:.3})", d, se));
    }
    let means: Vec<String> = series.iter().map(|s| format!("{:.3}", mean(s))).collect();
    (
        inversions == 0 || (inversions == 1 && within),
        format!("means [{}], steps {}", means.join(", "), detail.join(", ")),
    )
}

fn swarm_criteria(report: &mut Report, n: usize) {
    let base_schemes = [
        SchemeId::ProposedDnppso,
        SchemeId::ClassicPso,
        SchemeId::Ma1Rsma,
        SchemeId::MaSdma,
        SchemeId::Fpa2Rsma,
        SchemeId::Fpa1Rsma,
    ];
    let extra = [
        Group::Power(20.0),
        Group::Power(25.0),
        Group::Antennas(3),
        Group::Antennas(5),
    ];
    let mut tasks = Vec::new();
    for realization in 0..n {
        for &scheme in &base_schemes {
            tasks.push(Task { group: Group::Base, realization, scheme });
        }
        for &group in &extra {
            tasks.push(Task { group, realization, scheme: SchemeId::ProposedDnppso });
        }
    }
    let exec = RayonExecutor::from_env().unwrap();
    eprintln!("running {} swarm tasks on {} worker(s)", tasks.len(), exec.workers());
    let outcomes = exec.map(&tasks, execute);
    let pick = |group: Group, scheme: SchemeId| -> Vec<&Outcome> {
        tasks
            .iter()
            .zip(&outcomes)
            .filter(|(t, _)| t.group == group && t.scheme == scheme)
            .map(|(_, o)| o)
            .collect()
    };
    let rates = |group: Group, scheme: SchemeId| -> Vec<f64> {
        pick(group, scheme).iter().map(|o| o.min_rate).collect()
    };
    let errors: Vec<&String> = outcomes.iter().filter_map(|o| o.error.as_ref()).collect();
    for e in &errors {
        println!("  run error: {e}");
    }

    let proposed = pick(Group::Base, SchemeId::ProposedDnppso);
    let monotone = proposed.iter().filter(|o| o.gbest_monotone).count();
    let feasible = proposed.iter().filter(|o| o.apv_feasible).count();
    report.record(
        "criterion 4",
        monotone == n && feasible == n,
        format!("gbest non-decreasing in {monotone}/{n} runs, final APV feasible in {feasible}/{n}"),
    );

    let pso = swarm(0);
    let classic_budget = pso.particles * pso.iterations + pso.particles;
    let dnppso_evals = mean(
        &proposed.iter().map(|o| o.evaluations as f64).collect::<Vec<_>>(),
    );
    let reduction = 1.0 - dnppso_evals / classic_budget as f64;
    let classic = pick(Group::Base, SchemeId::ClassicPso);
    let classic_evals_ok = classic.iter().all(|o| o.evaluations == classic_budget);
    let (m_prop, m_classic) = (
        mean(&rates(Group::Base, SchemeId::ProposedDnppso)),
        mean(&rates(Group::Base, SchemeId::ClassicPso)),
    );
    report.record(
        "criterion 5",
        reduction >= 0.4 && classic_evals_ok && m_prop >= 0.9 * m_classic,
        format!(
            "P = {}, I = {}: evaluations {dnppso_evals:.0} vs {classic_budget} ({:.1}% fewer), mean min-rate {m_prop:.3} vs classic {m_classic:.3} ({:+.1}%)",
            pso.particles,
            pso.iterations,
            100.0 * reduction,
            100.0 * (m_prop / m_classic - 1.0)
        ),
    );

    let pairs = [
        (SchemeId::ProposedDnppso, SchemeId::Fpa2Rsma),
        (SchemeId::ProposedDnppso, SchemeId::Ma1Rsma),
        (SchemeId::Ma1Rsma, SchemeId::Fpa1Rsma),
        (SchemeId::ProposedDnppso, SchemeId::MaSdma),
    ];
    let mut all = true;
    let mut detail = Vec::new();
    for (a, b) in pairs {
        let (ra, rb) = (rates(Group::Base, a), rates(Group::Base, b));
        let (wins, losses, p) = sign_test(&ra, &rb);
        let ok = mean(&ra) >= mean(&rb) && p <= 0.05;
        all &= ok;
        detail.push(format!(
            "{a} {:.3} vs {b} {:.3} ({wins}-{losses}, p = {p:.3}{})",
            mean(&ra),
            mean(&rb),
            if ok { "" } else { ", not met" }
        ));
    }
    report.record("criterion 6", all, detail.join("; "));

    let p = SchemeId::ProposedDnppso;
    let (power_ok, power) = trend(&[
        rates(Group::Power(20.0), p),
        rates(Group::Power(25.0), p),
        rates(Group::Base, p),
    ]);
    let (antenna_ok, antennas) = trend(&[
        rates(Group::Antennas(3), p),
        rates(Group::Base, p),
        rates(Group::Antennas(5), p),
    ]);
    report.record(
        "criterion 7",
        power_ok && antenna_ok,
        format!("P_max 20/25/30 dBm: {power}; N_T 3/4/5: {antennas}"),
    );

    let violating = outcomes.iter().filter(|o| o.violations > 0).count();
    report.record(
        "criterion 8",
        violating == 0 && errors.is_empty(),
        format!(
            "{} solutions checked, {violating} with violations, {} failed runs",
            outcomes.len(),
            errors.len()
        ),
    );
}

fn sweep_csv(dir: &std::path::Path, name: &str, workers: &str) -> Vec<u8> {
    let out = dir.join(name);
    let status = Command::new(env!("CARGO_BIN_EXE_marsma"))
        .args([
            "sweep",
            "--seed",
            "77",
            "--workers",
            workers,
            "--out",
            out.to_str().unwrap(),
            "--set",
            "n_antennas=3",
            "--set",
            "sweep_axis=n_users",
            "--set",
            "sweep_values=[2, 3]",
            "--set",
            "particles=4",
            "--set",
            "iterations=3",
            "--set",
            "restarts=1",
            "--set",
            "sca_max_iterations=8",
            "--set",
            "realizations=3",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    std::fs::read(out).unwrap()
}

fn criterion_9(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let a = sweep_csv(dir.path(), "a.csv", "1");
    let b = sweep_csv(dir.path(), "b.csv", "1");
    let c = sweep_csv(dir.path(), "c.csv", "4");
    let lines = a.iter().filter(|&&x| x == b'\n').count();
    report.record(
        "criterion 9",
        a == b && a == c,
        format!("{lines}-line CSV; repeat identical {}, 1 vs 4 workers identical {}", a == b, a == c),
    );
}

fn main() {
    let start = Instant::now();
    let n = realizations();
    let mut report = Report { lines: Vec::new() };
    criterion_1(&mut report);
    let runs = criteria_2_3(&mut report);
    swarm_criteria(&mut report, n);
    criterion_9(&mut report);
    layer_nesting(&mut report, &runs);

    let criteria: Vec<_> = report.lines.iter().filter(|l| l.0.starts_with("criterion")).collect();
    let passed = criteria.iter().filter(|l| l.1).count();
    println!(
        "acceptance: {passed}/{} criteria passed ({n} realizations, {:.0} s)",
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
}
