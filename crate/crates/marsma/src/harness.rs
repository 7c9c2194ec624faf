//! Monte-Carlo sweeps over one configuration axis.
//!
//! Every (sweep value, realization) pair draws one scenario that all
//! schemes share, and every task seed is derived from the master seed and
//! task indices, so results do not depend on scheduling or worker count.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use marsma_core::channel::Scenario;
use marsma_core::config::{dbm_to_watts, GlobalConfig, ScaSettings};
use marsma_core::exec::{BatchExecutor, Sequential};
use marsma_core::schemes::{run_scheme, SchemeId};
use marsma_core::seed::{derive_seed, rng};
use marsma_core::subproblem::ConvexSolver;
use marsma_core::swarm::{PsoConfig, TraceRow};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 8] = [
    "sweep_axis",
    "sweep_value",
    "scheme",
    "mean_minrate",
    "std_minrate",
    "n",
    "evals_mean",
    "wall_ms",
];

const SCENARIO_STREAM: u64 = 1;
const SWARM_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NUsers,
    PMaxDbm,
    NAntennas,
    MaxDistance,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::NUsers,
        SweepAxis::PMaxDbm,
        SweepAxis::NAntennas,
        SweepAxis::MaxDistance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::NUsers => "n_users",
            SweepAxis::PMaxDbm => "p_max_dbm",
            SweepAxis::NAntennas => "n_antennas",
            SweepAxis::MaxDistance => "max_distance",
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &GlobalConfig, value: f64) -> Result<GlobalConfig> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!(
                    "{} must be a positive integer, got {value}",
                    self.as_str()
                )))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::NUsers => cfg.n_users = count()?,
            SweepAxis::NAntennas => cfg.n_antennas = count()?,
            SweepAxis::PMaxDbm => cfg.p_max = dbm_to_watts(value),
            SweepAxis::MaxDistance => cfg.distance_range.1 = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub config: GlobalConfig,
    pub pso: PsoConfig,
    pub sca: ScaSettings,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub schemes: Vec<SchemeId>,
    pub realizations: usize,
    pub seed: u64,
    /// Write measured wall times to the CSV. Off by default so that the
    /// file is a pure function of the spec.
    pub record_wall_time: bool,
}

impl ExperimentSpec {
    /// Desk-scale defaults: reference channel, 20 x 20 swarm, 20
    /// realizations, all schemes at the reference power.
    pub fn desk(seed: u64) -> Self {
        Self {
            config: GlobalConfig::reference(4, 6),
            pso: PsoConfig::desk(),
            sca: ScaSettings::default(),
            axis: SweepAxis::PMaxDbm,
            values: vec![30.0],
            schemes: SchemeId::ALL.to_vec(),
            realizations: 20,
            seed,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.values.is_empty() {
            return Err(Error::Config("sweep needs at least one value".into()));
        }
        if self.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("sweep values must be strictly increasing".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("scheme list is empty".into()));
        }
        self.pso.validate()?;
        self.sca.validate()?;
        for &v in &self.values {
            self.axis.apply(&self.config, v)?;
        }
        Ok(())
    }

    /// Scenario shared by all schemes at (value index, realization).
    pub fn scenario(&self, value_index: usize, realization: usize) -> Result<Scenario> {
        let cfg = self.axis.apply(&self.config, self.values[value_index])?;
        let seed = derive_seed(
            self.seed,
            &[SCENARIO_STREAM, value_index as u64, realization as u64],
        );
        Ok(Scenario::sample(&cfg, &mut rng(seed))?)
    }

    /// Swarm settings at (value index, realization); every scheme in a
    /// realization starts from the same swarm seed.
    pub fn swarm(&self, value_index: usize, realization: usize) -> PsoConfig {
        PsoConfig {
            seed: derive_seed(
                self.seed,
                &[SWARM_STREAM, value_index as u64, realization as u64],
            ),
            ..self.pso.clone()
        }
    }
}

/// One scheme on one realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub value_index: usize,
    pub sweep_value: f64,
    pub realization: usize,
    pub scheme: SchemeId,
    /// `None` when the run failed.
    pub min_rate: Option<f64>,
    pub evaluations: usize,
    /// Violations reported by the full feasibility check.
    pub violations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

/// Aggregate over the realizations of one (sweep value, scheme) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub axis: SweepAxis,
    pub sweep_value: f64,
    pub scheme: SchemeId,
    pub mean_minrate: f64,
    /// Sample standard deviation (`n - 1` denominator); 0 for `n < 2`.
    pub std_minrate: f64,
    /// Successful realizations.
    pub n: usize,
    pub evals_mean: f64,
    pub wall_ms: f64,
    /// Failed realizations; not part of the CSV.
    #[serde(default)]
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub raw: Vec<RawRecord>,
}

struct Task<'a> {
    value_index: usize,
    realization: usize,
    scheme: SchemeId,
    scenario: &'a Scenario,
}

/// Runs every scheme on every realization of every sweep value. Failed
/// runs are recorded and skipped in the aggregates.
pub fn run_experiment<S, X>(spec: &ExperimentSpec, solver: &S, exec: &X) -> Result<ExperimentResult>
where
    S: ConvexSolver + Sync + ?Sized,
    X: BatchExecutor,
{
    spec.validate()?;
    let mut scenarios = Vec::new();
    for vi in 0..spec.values.len() {
        for r in 0..spec.realizations {
            scenarios.push(spec.scenario(vi, r)?);
        }
    }
    let mut tasks = Vec::new();
    for vi in 0..spec.values.len() {
        for r in 0..spec.realizations {
            for &scheme in &spec.schemes {
                tasks.push(Task {
                    value_index: vi,
                    realization: r,
                    scheme,
                    scenario: &scenarios[vi * spec.realizations + r],
                });
            }
        }
    }

    let raw = exec.map(&tasks, |t| run_task(spec, t, solver));
    let mut rows = Vec::new();
    for (vi, &value) in spec.values.iter().enumerate() {
        for &scheme in &spec.schemes {
            let group: Vec<&RawRecord> = raw
                .iter()
                .filter(|r| r.value_index == vi && r.scheme == scheme)
                .collect();
            rows.push(aggregate(spec.axis, value, scheme, &group));
        }
    }
    Ok(ExperimentResult { rows, raw })
}

fn run_task<S: ConvexSolver + Sync + ?Sized>(
    spec: &ExperimentSpec,
    task: &Task<'_>,
    solver: &S,
) -> RawRecord {
    let start = Instant::now();
    let pso = spec.swarm(task.value_index, task.realization);
    let outcome = run_scheme(
        task.scheme,
        task.scenario,
        &spec.sca,
        &pso,
        solver,
        &Sequential,
    );
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let mut record = RawRecord {
        value_index: task.value_index,
        sweep_value: spec.values[task.value_index],
        realization: task.realization,
        scheme: task.scheme,
        min_rate: None,
        evaluations: 0,
        violations: 0,
        wall_ms,
        error: None,
    };
    match outcome {
        Ok(out) => {
            let violations = task
                .scenario
                .channels(&out.positions)
                .map(|h| {
                    marsma_core::rates::check_full_feasibility(
                        &out.positions,
                        &out.inner.beamformers,
                        &out.inner.allocation,
                        &out.inner.clustering,
                        &h,
                        &task.scenario.config,
                    )
                    .len()
                })
                .unwrap_or(1);
            record.min_rate = Some(out.inner.min_rate);
            record.evaluations = out.evaluations;
            record.violations = violations;
        }
        Err(e) => {
            log::warn!(
                "{} failed at value {} realization {}: {e}",
                task.scheme,
                record.sweep_value,
                task.realization
            );
            record.error = Some(e.to_string());
        }
    }
    record
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn aggregate(axis: SweepAxis, value: f64, scheme: SchemeId, group: &[&RawRecord]) -> ResultRow {
    let ok: Vec<&RawRecord> = group.iter().copied().filter(|r| r.min_rate.is_some()).collect();
    let rates: Vec<f64> = ok.iter().filter_map(|r| r.min_rate).collect();
    let (mean, std) = mean_std(&rates);
    let evals: Vec<f64> = ok.iter().map(|r| r.evaluations as f64).collect();
    let walls: Vec<f64> = group.iter().map(|r| r.wall_ms).collect();
    ResultRow {
        axis,
        sweep_value: value,
        scheme,
        mean_minrate: mean,
        std_minrate: std,
        n: ok.len(),
        evals_mean: mean_std(&evals).0,
        wall_ms: mean_std(&walls).0,
        failures: group.len() - ok.len(),
    }
}

/// Formats `x` in positional notation with 6 significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".to_string();
    }
    // round first so that 9.999996 is treated as 10.0000
    let rounded: f64 = format!("{x:.5e}").parse().unwrap_or(x);
    let exp = rounded.abs().log10().floor() as i32;
    let decimals = (5 - exp).max(0) as usize;
    format!("{rounded:.decimals$}")
}

/// Writes the aggregate CSV. Wall times are written as 0 unless
/// `wall_time` is set.
pub fn emit_csv<W: Write>(rows: &[ResultRow], out: W, wall_time: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let n = r.n.to_string();
        w.write_record([
            r.axis.as_str(),
            &sig6(r.sweep_value),
            r.scheme.as_str(),
            &sig6(r.mean_minrate),
            &sig6(r.std_minrate),
            &n,
            &sig6(r.evals_mean),
            &sig6(if wall_time { r.wall_ms } else { 0.0 }),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads a CSV written by [`emit_csv`]. Failure counts are not stored and
/// come back as 0.
pub fn parse_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected CSV header {header:?}")));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse()
            .map_err(|_| Error::Config(format!("bad number `{s}` in CSV")))
    };
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(ResultRow {
            axis: rec[0].parse()?,
            sweep_value: num(&rec[1])?,
            scheme: rec[2].parse()?,
            mean_minrate: num(&rec[3])?,
            std_minrate: num(&rec[4])?,
            n: rec[5]
                .parse()
                .map_err(|_| Error::Config(format!("bad count `{}`", &rec[5])))?,
            evals_mean: num(&rec[6])?,
            wall_ms: num(&rec[7])?,
            failures: 0,
        });
    }
    Ok(rows)
}

/// Per-realization values, one line per (value, realization, scheme).
pub fn emit_raw_csv<W: Write>(raw: &[RawRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "sweep_value",
        "realization",
        "scheme",
        "min_rate",
        "evaluations",
        "violations",
        "error",
    ])?;
    for r in raw {
        w.write_record([
            format!("{}", r.sweep_value),
            r.realization.to_string(),
            r.scheme.to_string(),
            r.min_rate.map_or(String::new(), |x| format!("{x:e}")),
            r.evaluations.to_string(),
            r.violations.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Convergence trace of one outer-loop run.
pub fn emit_trace_csv<W: Write>(trace: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["restart", "iteration", "gbest_fitness", "active", "evaluations"])?;
    for t in trace {
        w.write_record([
            t.restart.to_string(),
            t.iteration.to_string(),
            format!("{:e}", t.gbest_fitness),
            t.active.to_string(),
            t.evaluations.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(4.490921234), "4.49092");
        assert_eq!(sig6(30.0), "30.0000");
        assert_eq!(sig6(0.000123456789), "0.000123457");
        assert_eq!(sig6(9.9999996), "10.0000");
        assert_eq!(sig6(1234567.0), "1234570");
        assert_eq!(sig6(-2.5), "-2.50000");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn empty_rows_give_header_only() {
        let mut buf = Vec::new();
        emit_csv(&[], &mut buf, false).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "sweep_axis,sweep_value,scheme,mean_minrate,std_minrate,n,evals_mean,wall_ms\n"
        );
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            ResultRow {
                axis: SweepAxis::PMaxDbm,
                sweep_value: 25.0,
                scheme: SchemeId::Fpa1Rsma,
                mean_minrate: 3.25,
                std_minrate: 0.125,
                n: 20,
                evals_mean: 1.0,
                wall_ms: 17.5,
                failures: 0,
            },
            ResultRow {
                axis: SweepAxis::PMaxDbm,
                sweep_value: 30.0,
                scheme: SchemeId::ProposedDnppso,
                mean_minrate: 4.5,
                std_minrate: 0.0,
                n: 1,
                evals_mean: 231.0,
                wall_ms: 0.0,
                failures: 0,
            },
        ];
        let mut buf = Vec::new();
        emit_csv(&rows, &mut buf, true).unwrap();
        assert_eq!(parse_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn axis_application() {
        let base = GlobalConfig::reference(4, 6);
        assert_eq!(SweepAxis::NUsers.apply(&base, 8.0).unwrap().n_users, 8);
        assert!((SweepAxis::PMaxDbm.apply(&base, 20.0).unwrap().p_max - 0.1).abs() < 1e-15);
        assert_eq!(
            SweepAxis::MaxDistance.apply(&base, 100.0).unwrap().distance_range,
            (20.0, 100.0)
        );
        assert!(SweepAxis::NAntennas.apply(&base, 2.5).is_err());
        assert!(SweepAxis::NAntennas.apply(&base, 22.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let mut spec = ExperimentSpec::desk(1);
        assert!(spec.validate().is_ok());
        spec.values = vec![30.0, 30.0];
        assert!(spec.validate().is_err());
        spec.values = vec![30.0];
        spec.realizations = 0;
        assert!(spec.validate().is_err());
    }
}
