//! Dissipative spin-chain clocks: an XX chain in the single-excitation
//! sector with an absorbing sink on the last site. A tick is the absorption
//! event; its statistics give the clock's resolution and precision.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod chain;
pub mod de;
pub mod error;
pub mod fit;
pub mod metrics;
pub mod propagate;
pub mod quench;
pub mod spectral;
pub mod sweep;

pub use chain::{
    build_effective_matrix, build_xx_matrix, expand_profile, pst_couplings, quench_decouple_first,
    ChainSpec, CouplingProfile, Tridiagonal,
};
pub use de::{optimize, Candidate, Checkpoint, DEConfig, OptimizationResult, Optimizer};
pub use error::{Error, Result};
pub use fit::{fit_power_law, FitResult};
pub use metrics::{
    moment, prt_bounds, survival_moments, tick_statistics, tick_statistics_with, Horizon,
    PrtBounds, SurvivalMoments, TickStatistics,
};
pub use propagate::{linspace, logspace, propagate_timeseries, Propagator, State, TimeSeries};
pub use quench::{
    effective_precision, piecewise_survival, sweep_quench, QuenchOptions, QuenchSweep,
};
pub use spectral::{
    decompose_effective, decompose_hermitian, fidelity, fidelity_direct, pair_modes, survival,
    tick_pdf, tick_pdf_paired, EffectiveSpectrum, HermitianSpectrum, PairedTickForm,
};
pub use sweep::{for_each_ordered, run_sweep, sweep_fits, SweepRecord, SweepStore};
