//! Flat key-value configuration.
//!
//! Keys mirror the field names of `GlobalConfig`, `PsoConfig` and
//! `ExperimentSpec`. Decibel-valued keys carry a `_dbm` or `_db` suffix;
//! ranges are split into `_min` / `_max` keys. A document starts from the
//! desk profile unless `profile = "paper"` is given.
//!
//! ```toml
//! profile = "desk"
//! n_antennas = 4
//! p_max_dbm = 30
//! sweep_axis = "p_max_dbm"
//! sweep_values = [20, 25, 30]
//! schemes = ["proposed_dnppso", "fpa_2rsma"]
//! realizations = 5
//! ```

use marsma_core::config::{db_to_linear, dbm_to_watts};
use marsma_core::schemes::SchemeId;
use marsma_core::swarm::PsoConfig;
use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::harness::ExperimentSpec;

/// Every accepted key, in documentation order.
pub const KEYS: &[&str] = &[
    "profile",
    "n_antennas",
    "n_users",
    "n_paths",
    "wavelength",
    "t_min",
    "t_max",
    "min_spacing",
    "p_max",
    "p_max_dbm",
    "noise_power",
    "noise_power_dbm",
    "path_loss_ref",
    "path_loss_ref_db",
    "path_loss_exp",
    "distance_min",
    "distance_max",
    "angle_min",
    "angle_max",
    "particles",
    "iterations",
    "c1",
    "c2",
    "inertia_min",
    "inertia_max",
    "penalty",
    "final_fraction",
    "velocity_clamp",
    "restarts",
    "pruning",
    "sca_accuracy",
    "sca_max_iterations",
    "sweep_axis",
    "sweep_values",
    "schemes",
    "realizations",
    "seed",
    "record_wall_time",
];

fn bad(key: &str, want: &str, v: &Value) -> Error {
    Error::Config(format!("`{key}` must be {want}, got {v}"))
}

fn float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(x) => Ok(*x),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(bad(key, "a number", v)),
    }
}

fn count(key: &str, v: &Value) -> Result<usize> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(bad(key, "a non-negative integer", v)),
    }
}

fn flag(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| bad(key, "a boolean", v))
}

fn text<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| bad(key, "a string", v))
}

fn list<'a>(key: &str, v: &'a Value) -> Result<&'a [Value]> {
    v.as_array()
        .map(Vec::as_slice)
        .ok_or_else(|| bad(key, "an array", v))
}

/// Applies one key to `spec`.
pub fn set_key(spec: &mut ExperimentSpec, key: &str, v: &Value) -> Result<()> {
    let cfg = &mut spec.config;
    let pso = &mut spec.pso;
    match key {
        "profile" => {
            *pso = match text(key, v)? {
                "desk" => PsoConfig::desk(),
                "paper" => PsoConfig::reference(),
                other => return Err(Error::Config(format!("unknown profile `{other}`"))),
            };
            spec.realizations = if text(key, v)? == "paper" { 500 } else { 20 };
        }
        "n_antennas" => cfg.n_antennas = count(key, v)?,
        "n_users" => cfg.n_users = count(key, v)?,
        "n_paths" => cfg.n_paths = count(key, v)?,
        "wavelength" => cfg.wavelength = float(key, v)?,
        "t_min" => cfg.t_min = float(key, v)?,
        "t_max" => cfg.t_max = float(key, v)?,
        "min_spacing" => cfg.min_spacing = float(key, v)?,
        "p_max" => cfg.p_max = float(key, v)?,
        "p_max_dbm" => cfg.p_max = dbm_to_watts(float(key, v)?),
        "noise_power" => cfg.noise_power = float(key, v)?,
        "noise_power_dbm" => cfg.noise_power = dbm_to_watts(float(key, v)?),
        "path_loss_ref" => cfg.path_loss_ref = float(key, v)?,
        "path_loss_ref_db" => cfg.path_loss_ref = db_to_linear(float(key, v)?),
        "path_loss_exp" => cfg.path_loss_exp = float(key, v)?,
        "distance_min" => cfg.distance_range.0 = float(key, v)?,
        "distance_max" => cfg.distance_range.1 = float(key, v)?,
        "angle_min" => cfg.angle_range.0 = float(key, v)?,
        "angle_max" => cfg.angle_range.1 = float(key, v)?,
        "particles" => pso.particles = count(key, v)?,
        "iterations" => pso.iterations = count(key, v)?,
        "c1" => pso.c1 = float(key, v)?,
        "c2" => pso.c2 = float(key, v)?,
        "inertia_min" => pso.inertia_min = float(key, v)?,
        "inertia_max" => pso.inertia_max = float(key, v)?,
        "penalty" => pso.penalty = float(key, v)?,
        "final_fraction" => pso.final_fraction = float(key, v)?,
        "velocity_clamp" => pso.velocity_clamp = Some(float(key, v)?),
        "restarts" => pso.restarts = count(key, v)?,
        "pruning" => pso.pruning = flag(key, v)?,
        "sca_accuracy" => spec.sca.accuracy = float(key, v)?,
        "sca_max_iterations" => spec.sca.max_iterations = count(key, v)?,
        "sweep_axis" => spec.axis = text(key, v)?.parse()?,
        "sweep_values" => {
            spec.values = list(key, v)?
                .iter()
                .map(|x| float(key, x))
                .collect::<Result<_>>()?
        }
        "schemes" => {
            spec.schemes = list(key, v)?
                .iter()
                .map(|x| Ok(text(key, x)?.parse::<SchemeId>()?))
                .collect::<Result<_>>()?
        }
        "realizations" => spec.realizations = count(key, v)?,
        "seed" => match v {
            Value::Integer(i) if *i >= 0 => spec.seed = *i as u64,
            _ => return Err(bad(key, "a non-negative integer", v)),
        },
        "record_wall_time" => spec.record_wall_time = flag(key, v)?,
        _ => return Err(Error::Config(format!("unknown key `{key}`"))),
    }
    Ok(())
}

/// Parses the right-hand side of a `key=value` override. Anything that is
/// not a TOML value is taken as a bare string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, Value)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), parse_value(v.trim())))
}

/// Builds a spec from an optional document and overrides applied in
/// order. `profile` is applied before any other key.
pub fn load_spec(document: Option<&str>, overrides: &[(String, Value)]) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::desk(0);
    let table = match document {
        Some(text) => text
            .parse::<Table>()
            .map_err(|e| Error::Config(e.to_string()))?,
        None => Table::new(),
    };
    let profile = table
        .get("profile")
        .or_else(|| overrides.iter().rev().find(|(k, _)| k == "profile").map(|(_, v)| v));
    if let Some(p) = profile {
        set_key(&mut spec, "profile", p)?;
    }
    for (k, v) in &table {
        if k != "profile" {
            set_key(&mut spec, k, v)?;
        }
    }
    for (k, v) in overrides {
        if k != "profile" {
            set_key(&mut spec, k, v)?;
        }
    }
    Ok(spec)
}
