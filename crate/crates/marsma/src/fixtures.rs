//! JSON fixtures: scenarios and solution triples (positions, beamformers,
//! rate allocation) together with the scenario they were computed for.

use std::fs;
use std::path::Path;

use marsma_core::channel::{AntennaPositions, Scenario};
use marsma_core::rates::{
    check_full_feasibility, BeamformerSet, Clustering, RateAllocation, RateReport, Violation,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Everything needed to re-check a design from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFixture {
    pub scenario: Scenario,
    pub positions: AntennaPositions,
    pub clustering: Clustering,
    pub beamformers: BeamformerSet,
    pub allocation: RateAllocation,
}

impl SolutionFixture {
    /// Constraint violations of the stored design; empty when feasible.
    pub fn violations(&self) -> Result<Vec<Violation>> {
        let channels = self.scenario.channels(&self.positions)?;
        Ok(check_full_feasibility(
            &self.positions,
            &self.beamformers,
            &self.allocation,
            &self.clustering,
            &channels,
            &self.scenario.config,
        ))
    }

    pub fn report(&self) -> Result<RateReport> {
        let channels = self.scenario.channels(&self.positions)?;
        Ok(RateReport::evaluate(
            &channels,
            &self.beamformers,
            &self.clustering,
            &self.allocation,
            self.scenario.config.noise_power,
        )?)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
