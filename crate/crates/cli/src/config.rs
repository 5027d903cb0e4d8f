use partwave_core::nld::{CubicSpec, NldConfig, PotentialSpec};
use partwave_core::verify::{DiracStudyGrid, EnsembleSpec, WavePotentialGrid, WaveStudyGrid};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything a run can be configured with. Unset keys fall back to the
/// per-study defaults; unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    /// Spatial dimension for the scalar wave studies.
    pub n: Option<usize>,
    pub kmax: Option<usize>,
    pub t_end: Option<f64>,
    /// Angular regularity of the Dirac norms.
    pub s: Option<f64>,
    /// Size of the nonlinear initial data.
    pub eps: Option<f64>,
    /// Strength of the study potential.
    pub delta: Option<f64>,
    pub count: Option<usize>,
    pub radii: Option<Vec<f64>>,
    pub ensemble: Option<EnsembleSpec>,
    pub wave_grid: Option<WaveStudyGrid>,
    pub dirac_grid: Option<DiracStudyGrid>,
    pub wave_potential_grid: Option<WavePotentialGrid>,
    pub nld: Option<NldConfig>,
    pub nld_check: Option<NldConfig>,
    pub potential: Option<PotentialSpec>,
    pub cubic: Option<CubicSpec>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("malformed config {}: {e}", path.display()))
    }
}
