use std::path::Path;

use pstclock_core::sweep::SweepFits;
use pstclock_core::{
    ChainSpec, FitResult, Horizon, OptimizationResult, PrtBounds, QuenchSweep, SweepRecord,
    TickStatistics,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    pub tick_pdf: Vec<f64>,
    /// End-to-end transfer fidelity of the same couplings without the sink.
    pub fidelity: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FidelityPeak {
    pub t_pst: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedFormCheck {
    pub supported: bool,
    /// Largest pointwise difference from the direct tick density on the series grid.
    pub max_abs_diff: Option<f64>,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeReport {
    pub spec: ChainSpec,
    pub horizon: Horizon,
    pub statistics: Option<TickStatistics>,
    pub statistics_error: Option<String>,
    pub prt: Option<PrtBounds>,
    pub inside_prt: Option<bool>,
    /// Fidelity at `π/(2J₀)` for pure PST profiles.
    pub fidelity_peak: Option<FidelityPeak>,
    pub paired_form: PairedFormCheck,
    pub series: Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub result: OptimizationResult,
    pub record: SweepRecord,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchReport {
    pub sweeps: Vec<QuenchSweep>,
    /// `onset/μ` against `N`.
    pub onset_fit: Option<FitResult>,
    pub onset_fit_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitsReport {
    pub cutoff: usize,
    pub fits: SweepFits,
    /// Best-per-N records whose precision falls outside the trade-off region.
    pub outside_prt: Vec<usize>,
}

/// Writes pretty JSON through a temporary file so readers never see a partial report.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> pstclock_core::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, serde_json::to_vec_pretty(value)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
