//! Sudden decoupling of the first site at time `t_dc`.
//!
//! After the quench the population left on site 1 is trapped, so the tick
//! statistics are conditioned on a tick happening within the observation
//! horizon, exactly as for the unquenched chain.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{build_effective_matrix, quench_decouple_first, ChainSpec};
use crate::error::{Error, Result};
use crate::metrics::{
    resolve_horizon, statistics_from_moments, tick_statistics_with, Horizon, SurvivalMoments,
    TickStatistics, DEFAULT_TICK_FLOOR,
};
use crate::propagate::{
    check_grid, integrate_survival, logspace, Propagator, QuadratureOptions, State, TimeSeries,
};
use crate::spectral::decompose_effective;

/// Fraction of the plateau value that marks its onset.
pub const PLATEAU_FRACTION: f64 = 0.99;

/// Survival probability on `grid` with the first bond cut at `t_dc`.
pub fn piecewise_survival(spec: &ChainSpec, t_dc: f64, grid: &[f64]) -> Result<TimeSeries> {
    check_grid(grid)?;
    if !(t_dc >= 0.0 && t_dc.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "decoupling time must be non-negative, got {t_dc}"
        )));
    }
    if t_dc > *grid.last().expect("grid checked non-empty") {
        return Err(Error::InvalidInput(format!(
            "time grid ends before the decoupling time {t_dc}"
        )));
    }
    let full = Propagator::new(&build_effective_matrix(spec))?;
    let cut = Propagator::new(&build_effective_matrix(&quench_decouple_first(spec)))?;
    let mut psi = State::site(full.dim(), 0);
    let mut work = full.workspace();
    let mut now = 0.0;
    let mut values = Vec::with_capacity(grid.len());
    for &t in grid {
        if now < t_dc && t > t_dc {
            full.step(&full.stepper(t_dc - now), &mut psi, &mut work);
            now = t_dc;
        }
        if t > now {
            let prop = if now < t_dc { &full } else { &cut };
            prop.step(&prop.stepper(t - now), &mut psi, &mut work);
            now = t;
        }
        values.push(psi.norm_sqr());
    }
    Ok(TimeSeries {
        times: grid.to_vec(),
        values,
    })
}

/// Trapezoidal `∫S` and `∫tS` over a series starting at `t = 0`.
fn trapezoid_moments(series: &TimeSeries) -> Result<SurvivalMoments> {
    if series.len() < 2 || series.times[0] != 0.0 {
        return Err(Error::InvalidInput(
            "survival series must start at t = 0 and hold at least two points".into(),
        ));
    }
    let (mut int_s, mut int_ts) = (0.0, 0.0);
    for i in 1..series.len() {
        let (t0, t1) = (series.times[i - 1], series.times[i]);
        let (s0, s1) = (series.values[i - 1], series.values[i]);
        int_s += 0.5 * (t1 - t0) * (s0 + s1);
        int_ts += 0.5 * (t1 - t0) * (t0 * s0 + t1 * s1);
    }
    Ok(SurvivalMoments {
        horizon: Some(*series.times.last().unwrap()),
        int_s,
        int_ts,
        s_end: *series.values.last().unwrap(),
    })
}

/// Conditional tick statistics of a survival series, observed up to its last time.
pub fn effective_statistics(series: &TimeSeries, tick_floor: f64) -> Result<TickStatistics> {
    statistics_from_moments(&trapezoid_moments(series)?, tick_floor)
}

/// `𝒩^eff` of a survival series with the default tick floor.
pub fn effective_precision(series: &TimeSeries) -> Result<f64> {
    Ok(effective_statistics(series, DEFAULT_TICK_FLOOR)?.precision)
}

/// Conditional statistics over `[0, horizon]` for a quench at `t_dc`, by
/// adaptive quadrature of the piecewise trajectory.
pub fn quench_statistics(
    spec: &ChainSpec,
    t_dc: f64,
    horizon: f64,
    tick_floor: f64,
) -> Result<TickStatistics> {
    if !(t_dc >= 0.0) || !(horizon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need t_dc >= 0 and a positive horizon, got {t_dc} and {horizon}"
        )));
    }
    let opts = QuadratureOptions::default();
    let full = Propagator::new(&build_effective_matrix(spec))?;
    let first = integrate_survival(
        &full,
        State::site(full.dim(), 0),
        0.0,
        Some(t_dc.min(horizon)),
        &opts,
    )?;
    let moments = if t_dc >= horizon {
        SurvivalMoments {
            horizon: Some(horizon),
            int_s: first.int_s,
            int_ts: first.int_ts,
            s_end: first.s_end,
        }
    } else {
        let cut = Propagator::new(&build_effective_matrix(&quench_decouple_first(spec)))?;
        let second = integrate_survival(&cut, first.state_end, t_dc, Some(horizon), &opts)?;
        SurvivalMoments {
            horizon: Some(horizon),
            int_s: first.int_s + second.int_s,
            int_ts: first.int_ts + second.int_ts,
            s_end: second.s_end,
        }
    };
    statistics_from_moments(&moments, tick_floor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchOptions {
    pub horizon: Horizon,
    pub tick_floor: f64,
}

impl Default for QuenchOptions {
    fn default() -> Self {
        QuenchOptions {
            horizon: Horizon::default(),
            tick_floor: DEFAULT_TICK_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchSweep {
    pub n_sites: usize,
    pub tdc_grid: Vec<f64>,
    /// `None` where no tick happens within the horizon.
    pub n_eff: Vec<Option<f64>>,
    /// Precision of the unquenched chain.
    pub baseline: f64,
    /// Mean tick time of the unquenched chain.
    pub mu: f64,
    pub horizon: f64,
    /// `𝒩^eff` at the largest decoupling time.
    pub plateau: Option<f64>,
    /// Smallest decoupling time from which `𝒩^eff` stays above 99% of the plateau.
    pub plateau_onset: Option<f64>,
}

/// Default decoupling grid: 60 log-spaced times in `[10⁻², μ]`.
pub fn default_tdc_grid(mu: f64) -> Vec<f64> {
    logspace(1e-2, mu.max(2e-2), 60)
}

/// Onset of the plateau: the start of the trailing run of points at or above
/// `PLATEAU_FRACTION · plateau`, interpolated in `log t` against the last point below.
pub fn plateau_onset(tdc: &[f64], n_eff: &[Option<f64>], plateau: f64) -> Option<f64> {
    let threshold = PLATEAU_FRACTION * plateau;
    let above = |v: &Option<f64>| v.is_some_and(|x| x >= threshold);
    let mut start = tdc.len();
    while start > 0 && above(&n_eff[start - 1]) {
        start -= 1;
    }
    if start == tdc.len() {
        return None;
    }
    if start == 0 {
        return Some(tdc[0]);
    }
    let (t1, t2) = (tdc[start - 1], tdc[start]);
    let y2 = n_eff[start].expect("trailing run holds values");
    match n_eff[start - 1] {
        Some(y1) if y2 > y1 && t1 > 0.0 => {
            let frac = (threshold - y1) / (y2 - y1);
            Some((t1.ln() + frac * (t2.ln() - t1.ln())).exp())
        }
        _ => Some(t2),
    }
}

pub fn sweep_quench(
    spec: &ChainSpec,
    tdc_grid: &[f64],
    options: &QuenchOptions,
) -> Result<QuenchSweep> {
    if tdc_grid.windows(2).any(|w| w[1] <= w[0]) || tdc_grid.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidInput(
            "decoupling times must be non-negative and strictly increasing".into(),
        ));
    }
    let spectrum = decompose_effective(&build_effective_matrix(spec))?;
    let horizon = resolve_horizon(&spectrum, options.horizon)?
        .ok_or_else(|| Error::InvalidInput("quench sweeps need a finite horizon".into()))?;
    let base = tick_statistics_with(&spectrum, Horizon::Fixed(horizon))?;
    let results: Vec<Result<Option<f64>>> = tdc_grid
        .par_iter()
        .map(
            |&t| match quench_statistics(spec, t, horizon, options.tick_floor) {
                Ok(st) => Ok(Some(st.precision)),
                Err(Error::NoTick { .. }) | Err(Error::ImproperTick(_)) => Ok(None),
                Err(e) => Err(e),
            },
        )
        .collect();
    let n_eff = results.into_iter().collect::<Result<Vec<_>>>()?;
    let plateau = n_eff.last().copied().flatten();
    let plateau_onset = plateau.and_then(|p| plateau_onset(tdc_grid, &n_eff, p));
    Ok(QuenchSweep {
        n_sites: spec.n_sites(),
        tdc_grid: tdc_grid.to_vec(),
        n_eff,
        baseline: base.precision,
        mu: base.mu,
        horizon,
        plateau,
        plateau_onset,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{expand_profile, CouplingProfile};
    use crate::propagate::linspace;

    #[test]
    fn immediate_quench_traps_everything() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 5, 1.0).unwrap();
        let grid = linspace(0.0, 20.0, 201);
        let s = piecewise_survival(&spec, 0.0, &grid).unwrap();
        assert!(s.values.iter().all(|v| (v - 1.0).abs() < 1e-13));
        assert!(matches!(effective_precision(&s), Err(Error::NoTick { .. })));
        assert!(matches!(
            quench_statistics(&spec, 0.0, 20.0, 1e-3),
            Err(Error::NoTick { .. })
        ));
    }

    #[test]
    fn late_quench_equals_unquenched() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 5, 1.0).unwrap();
        let grid = linspace(0.0, 60.0, 601);
        let q = piecewise_survival(&spec, 60.0, &grid).unwrap();
        let (s, _) =
            crate::propagate::propagate_timeseries(&build_effective_matrix(&spec), 0, &grid)
                .unwrap();
        for (a, b) in q.values.iter().zip(&s.values) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn survival_is_continuous_at_the_quench() {
        let spec = expand_profile(&CouplingProfile::Pst { j0: 0.3 }, 8, 1.0).unwrap();
        let t_dc = 1.7;
        let grid = vec![0.0, t_dc - 1e-9, t_dc, t_dc + 1e-9, 5.0];
        let s = piecewise_survival(&spec, t_dc, &grid).unwrap();
        assert!((s.values[1] - s.values[2]).abs() < 1e-8);
        assert!((s.values[2] - s.values[3]).abs() < 1e-8);
    }

    #[test]
    fn quench_must_lie_on_the_grid() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 3, 1.0).unwrap();
        assert!(piecewise_survival(&spec, 5.0, &[0.0, 1.0, 2.0]).is_err());
        assert!(piecewise_survival(&spec, -1.0, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn trapped_population_bounds_late_survival() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 6, 1.0).unwrap();
        let t_dc = 0.8;
        let full = Propagator::new(&build_effective_matrix(&spec)).unwrap();
        let mut psi = State::site(6, 0);
        full.evolve(&mut psi, t_dc);
        let trapped = psi.norm_sqr_at(0);
        let grid = linspace(0.0, 400.0, 4001);
        let s = piecewise_survival(&spec, t_dc, &grid).unwrap();
        assert!(*s.values.last().unwrap() >= trapped - 1e-12);
        assert!((s.values.last().unwrap() - trapped).abs() < 1e-6);
    }

    #[test]
    fn onset_interpolates_in_log_time() {
        let tdc = vec![1.0, 10.0, 100.0];
        let n = vec![Some(0.0), Some(99.0), Some(100.0)];
        assert!((plateau_onset(&tdc, &n, 100.0).unwrap() - 10.0).abs() < 1e-12);
        let n = vec![Some(89.0), Some(109.0), Some(100.0)];
        let onset = plateau_onset(&tdc, &n, 100.0).unwrap();
        assert!((onset - 10f64.powf(0.5)).abs() < 1e-12);
        let n = vec![Some(100.0), Some(100.0), Some(100.0)];
        assert_eq!(plateau_onset(&tdc, &n, 100.0), Some(1.0));
        let n = vec![Some(100.0), None, Some(100.0)];
        assert_eq!(plateau_onset(&tdc, &n, 100.0), Some(100.0));
    }
}
