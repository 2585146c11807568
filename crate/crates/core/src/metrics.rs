//! Tick-time moments, precision and resolution.
//!
//! Statistics are conditioned on the tick happening within an observation
//! horizon `H`. With `S_H = S(H)` and `P = 1 − S_H`, integration by parts gives
//!
//! ```text
//! E[t]  = (∫₀ᴴ S dt − H S_H) / P
//! E[t²] = (2∫₀ᴴ t S dt − H² S_H) / P
//! ```
//!
//! and for `H → ∞` these reduce to `μ = ∫S` and `t₂ = 2∫tS`. Both integrals
//! have closed forms in the biorthogonal eigenbasis. A finite horizon matters
//! for engineered chains whose edge modes decay on time scales far beyond
//! anything observable: their weight is negligible but they dominate the
//! infinite-horizon second moment. The default window is twice the
//! conditional mean over that same window.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::chain::Tridiagonal;
use crate::error::{Error, Result};
use crate::propagate::{integrate_survival, Propagator, QuadratureOptions, State};
use crate::spectral::EffectiveSpectrum;

const RESIDUE_TOL: f64 = 1e-10;
/// Smallest tick probability within the horizon that still defines statistics.
pub const DEFAULT_TICK_FLOOR: f64 = 1e-3;
/// Modes decaying slower than this are treated as non-absorbing.
const TRAPPED_RATE: f64 = 1e-12;
/// Initial-state weight on non-absorbing modes that makes the tick improper.
const TRAPPED_WEIGHT: f64 = 1e-9;

/// Observation window over which tick statistics are conditioned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Horizon {
    Infinite,
    Fixed(f64),
    /// A multiple of the unconditioned mean tick time.
    MeanMultiple(f64),
    /// `H = c·μ_H`: a multiple of the mean tick time conditioned on the same
    /// window. Unlike `MeanMultiple` it is insensitive to modes that carry
    /// negligible weight but decay arbitrarily slowly.
    SelfConsistent(f64),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::SelfConsistent(2.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TickStatistics {
    pub mu: f64,
    pub t2: f64,
    pub variance: f64,
    pub precision: f64,
    pub resolution: f64,
    /// `None` for the infinite horizon.
    pub horizon: Option<f64>,
    /// Probability that the tick happens within the horizon.
    pub tick_probability: f64,
}

/// `∫₀ᴴ S dt`, `∫₀ᴴ t S dt` and `S(H)`; for the infinite horizon `s_end = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalMoments {
    pub horizon: Option<f64>,
    pub int_s: f64,
    pub int_ts: f64,
    pub s_end: f64,
}

fn check_real(z: Complex64) -> Result<f64> {
    if z.im.abs() > RESIDUE_TOL * z.re.abs().max(1.0) {
        return Err(Error::NonRealMoment {
            value: z.re,
            residue: z.im,
        });
    }
    Ok(z.re)
}

/// `D_{kk'} = (ε_k^I + ε_{k'}^I) + i(ε_k^R − ε_{k'}^R)`.
fn exponent(spectrum: &EffectiveSpectrum, k: usize, kp: usize) -> Complex64 {
    let (a, b) = (spectrum.eigenvalues[k], spectrum.eigenvalues[kp]);
    Complex64::new(a.im + b.im, a.re - b.re)
}

fn is_trapped(spectrum: &EffectiveSpectrum, k: usize) -> bool {
    let scale = spectrum.gamma().abs().max(1.0);
    -spectrum.eigenvalues[k].im <= TRAPPED_RATE * scale
}

/// Initial-state weight carried by modes that never decay.
pub fn trapped_weight(spectrum: &EffectiveSpectrum) -> f64 {
    (0..spectrum.dim())
        .filter(|&k| is_trapped(spectrum, k))
        .map(|k| spectrum.kernel()[(k, k)].re)
        .sum()
}

fn ensure_absorbing(spectrum: &EffectiveSpectrum) -> Result<()> {
    let w = trapped_weight(spectrum);
    if w > TRAPPED_WEIGHT {
        return Err(Error::ImproperTick(format!(
            "a fraction {w:e} of the initial state never reaches the sink"
        )));
    }
    Ok(())
}

/// n-th moment of the tick time over the infinite horizon,
/// `(−1)ⁿ n! Σ_{kk'} C_{kk'} / D_{kk'}ⁿ`.
///
/// Modes whose decay rate is not resolvable in double precision are left
/// out of the sum; `ensure_absorbing` has already bounded their weight, but
/// their contribution `weight/rate` would be pure rounding noise. A
/// degenerate spectrum falls back to quadrature of the propagated survival
/// probability, which covers `n ≤ 2`.
pub fn moment(spectrum: &EffectiveSpectrum, n: u32) -> Result<f64> {
    check_real(moment_complex(spectrum, n)?)
}

/// The spectral sum behind [`moment`] before its imaginary residue is checked.
pub fn moment_complex(spectrum: &EffectiveSpectrum, n: u32) -> Result<Complex64> {
    if n == 0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    ensure_absorbing(spectrum)?;
    if spectrum.degenerate {
        let m = survival_moments_quadrature(spectrum.matrix(), None)?;
        return match n {
            1 => Ok(Complex64::new(m.int_s, 0.0)),
            2 => Ok(Complex64::new(2.0 * m.int_ts, 0.0)),
            _ => Err(Error::Degenerate {
                gap: spectrum.min_gap,
            }),
        };
    }
    let modes: Vec<usize> = (0..spectrum.dim())
        .filter(|&k| !is_trapped(spectrum, k))
        .collect();
    let kernel = spectrum.kernel();
    let mut total = Complex64::new(0.0, 0.0);
    for &k in &modes {
        for &kp in &modes {
            total += kernel[(k, kp)] / exponent(spectrum, k, kp).powu(n);
        }
    }
    let factorial: f64 = (1..=n).map(f64::from).product();
    let sign = if n.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(total * sign * factorial)
}

/// `(e^x − 1)/x` and `(e^x(x − 1) + 1)/x²`, with `e^x` supplied.
fn phi12(x: Complex64, ex: Complex64) -> (Complex64, Complex64) {
    if x.norm() < 0.5 {
        let mut p1 = Complex64::new(0.0, 0.0);
        let mut p2 = Complex64::new(0.0, 0.0);
        let mut xm_over_fact = Complex64::new(1.0, 0.0);
        for m in 0..30u32 {
            p1 += xm_over_fact / f64::from(m + 1);
            p2 += xm_over_fact / f64::from(m + 2);
            xm_over_fact *= x / f64::from(m + 1);
        }
        (p1, p2)
    } else {
        ((ex - 1.0) / x, (ex * (x - 1.0) + 1.0) / (x * x))
    }
}

/// Closed-form survival integrals over `[0, horizon]` (`None` for `[0, ∞)`).
pub fn survival_moments(
    spectrum: &EffectiveSpectrum,
    horizon: Option<f64>,
) -> Result<SurvivalMoments> {
    if let Some(h) = horizon {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {h}"
            )));
        }
    }
    if spectrum.degenerate {
        if horizon.is_none() {
            ensure_absorbing(spectrum)?;
        }
        return survival_moments_quadrature(spectrum.matrix(), horizon);
    }
    let Some(h) = horizon else {
        let mu = moment(spectrum, 1)?;
        let t2 = moment(spectrum, 2)?;
        return Ok(SurvivalMoments {
            horizon: None,
            int_s: mu,
            int_ts: 0.5 * t2,
            s_end: 0.0,
        });
    };
    let dim = spectrum.dim();
    let kernel = spectrum.kernel();
    let phase: Vec<Complex64> = spectrum
        .eigenvalues
        .iter()
        .map(|e| (Complex64::new(0.0, -h) * e).exp())
        .collect();
    let mut a1 = Complex64::new(0.0, 0.0);
    let mut a2 = Complex64::new(0.0, 0.0);
    let mut s_h = Complex64::new(0.0, 0.0);
    for k in 0..dim {
        for kp in 0..dim {
            let c = kernel[(k, kp)];
            let x = exponent(spectrum, k, kp) * h;
            let ex = phase[k].conj() * phase[kp];
            let (p1, p2) = phi12(x, ex);
            a1 += c * p1;
            a2 += c * p2;
            s_h += c * ex;
        }
    }
    Ok(SurvivalMoments {
        horizon: Some(h),
        int_s: check_real(a1 * h)?,
        int_ts: check_real(a2 * h * h)?,
        s_end: check_real(s_h)?,
    })
}

/// Survival integrals by adaptive quadrature of the directly propagated state.
pub fn survival_moments_quadrature(
    matrix: &Tridiagonal<Complex64>,
    horizon: Option<f64>,
) -> Result<SurvivalMoments> {
    survival_moments_quadrature_with(matrix, horizon, &QuadratureOptions::default())
}

pub fn survival_moments_quadrature_with(
    matrix: &Tridiagonal<Complex64>,
    horizon: Option<f64>,
    opts: &QuadratureOptions,
) -> Result<SurvivalMoments> {
    let prop = Propagator::new(matrix)?;
    let r = integrate_survival(&prop, State::site(prop.dim(), 0), 0.0, horizon, opts)?;
    Ok(SurvivalMoments {
        horizon,
        int_s: r.int_s,
        int_ts: r.int_ts,
        s_end: if horizon.is_some() { r.s_end } else { 0.0 },
    })
}

/// Conditional tick statistics from survival integrals.
pub fn statistics_from_moments(m: &SurvivalMoments, tick_floor: f64) -> Result<TickStatistics> {
    let (mu, t2, p) = match m.horizon {
        None => (m.int_s, 2.0 * m.int_ts, 1.0),
        Some(h) => {
            let p = 1.0 - m.s_end;
            if !(p > tick_floor) {
                return Err(Error::NoTick {
                    absorbed: p,
                    floor: tick_floor,
                });
            }
            (
                (m.int_s - h * m.s_end) / p,
                (2.0 * m.int_ts - h * h * m.s_end) / p,
                p,
            )
        }
    };
    let variance = t2 - mu * mu;
    if !(mu > 0.0) || !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::ImproperTick(format!(
            "μ = {mu:e}, σ² = {variance:e}"
        )));
    }
    Ok(TickStatistics {
        mu,
        t2,
        variance,
        precision: mu * mu / variance,
        resolution: 1.0 / mu,
        horizon: m.horizon,
        tick_probability: p,
    })
}

/// Resolves a horizon to an absolute time; `None` means infinite.
pub fn resolve_horizon(spectrum: &EffectiveSpectrum, horizon: Horizon) -> Result<Option<f64>> {
    match horizon {
        Horizon::Infinite => Ok(None),
        Horizon::Fixed(h) => Ok(Some(h)),
        Horizon::MeanMultiple(c) => {
            if !(c > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "horizon multiple must be positive, got {c}"
                )));
            }
            Ok(Some(c * moment(spectrum, 1)?))
        }
        Horizon::SelfConsistent(c) => self_consistent_horizon(spectrum, c).map(Some),
    }
}

const HORIZON_REL_TOL: f64 = 1e-12;
const HORIZON_MAX_ITER: usize = 200;

/// Conditional mean over `[0, h]`, or `None` if no proper tick happens by `h`.
fn conditional_mean(spectrum: &EffectiveSpectrum, h: f64) -> Result<Option<f64>> {
    match survival_moments(spectrum, Some(h))
        .and_then(|m| statistics_from_moments(&m, DEFAULT_TICK_FLOOR))
    {
        Ok(st) => Ok(Some(st.mu)),
        Err(Error::NoTick { .. } | Error::ImproperTick(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Root of `c·μ_H − H`. Near zero the conditional mean approaches `H`, so the
/// function is positive there for `c > 1`; it turns negative once `H` passes
/// the bulk of the tick distribution. Fixed-point steps are kept inside the
/// bracket and replaced by bisection when they leave it.
fn self_consistent_horizon(spectrum: &EffectiveSpectrum, c: f64) -> Result<f64> {
    if !(c > 1.0 && c.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "self-consistent horizon multiple must exceed 1, got {c}"
        )));
    }
    let mut lo = 0.0;
    // The unconditioned mean is only a starting guess; for a degenerate
    // spectrum it would need a long propagation, so skip it there.
    let mu_inf = if spectrum.degenerate {
        None
    } else {
        moment(spectrum, 1).ok()
    };
    let mut hi = match mu_inf {
        Some(mu) if mu.is_finite() && mu > 0.0 => c * mu,
        _ => c * spectrum.dim() as f64 / spectrum.gamma().max(1e-3),
    };
    let mut bracketed = false;
    for _ in 0..64 {
        match conditional_mean(spectrum, hi)? {
            Some(mu) if c * mu < hi => {
                bracketed = true;
                break;
            }
            _ => {
                lo = hi;
                hi *= 2.0;
            }
        }
    }
    if !bracketed {
        let absorbed = 1.0 - survival_moments(spectrum, Some(hi))?.s_end;
        return Err(Error::NoTick {
            absorbed,
            floor: DEFAULT_TICK_FLOOR,
        });
    }
    let mut h = hi;
    for _ in 0..HORIZON_MAX_ITER {
        let next = match conditional_mean(spectrum, h)? {
            Some(mu) => c * mu,
            None => f64::INFINITY,
        };
        if next > h {
            lo = h;
        } else {
            hi = h;
        }
        if (next - h).abs() <= HORIZON_REL_TOL * h {
            return Ok(next);
        }
        h = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= HORIZON_REL_TOL * hi {
            return Ok(h);
        }
    }
    Err(Error::NoConvergence)
}

/// Tick statistics over the default window, twice the conditional mean tick time.
pub fn tick_statistics(spectrum: &EffectiveSpectrum) -> Result<TickStatistics> {
    tick_statistics_with(spectrum, Horizon::default())
}

pub fn tick_statistics_with(
    spectrum: &EffectiveSpectrum,
    horizon: Horizon,
) -> Result<TickStatistics> {
    let h = resolve_horizon(spectrum, horizon)?;
    let m = survival_moments(spectrum, h)?;
    statistics_from_moments(&m, DEFAULT_TICK_FLOOR)
}

/// Precision–resolution trade-off region `Γ/ν ≤ 𝒩 ≤ Γ²/ν²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrtBounds {
    pub lower: f64,
    pub upper: f64,
}

impl PrtBounds {
    pub fn contains(&self, precision: f64) -> bool {
        self.lower <= precision && precision <= self.upper
    }
}

pub fn prt_bounds(gamma: f64, resolution: f64) -> PrtBounds {
    let r = gamma / resolution;
    PrtBounds {
        lower: r,
        upper: r * r,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{build_effective_matrix, expand_profile, ChainSpec, CouplingProfile};
    use crate::spectral::decompose_effective;
    use approx::assert_relative_eq;

    fn spectrum(spec: &ChainSpec) -> EffectiveSpectrum {
        decompose_effective(&build_effective_matrix(spec)).unwrap()
    }

    #[test]
    fn single_site_is_poissonian() {
        for gamma in [0.5, 1.0, 3.0] {
            let m = Tridiagonal {
                diag: vec![Complex64::new(0.0, -gamma / 2.0)],
                sub: vec![],
                sup: vec![],
            };
            let s = decompose_effective(&m).unwrap();
            let st = tick_statistics_with(&s, Horizon::Infinite).unwrap();
            assert_relative_eq!(st.mu, 1.0 / gamma, max_relative = 1e-12);
            assert_relative_eq!(st.variance, 1.0 / (gamma * gamma), max_relative = 1e-12);
            assert_relative_eq!(st.precision, 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn two_site_moments_match_hand_values() {
        // Survival of the 2-site chain integrates to μ = 2/Γ + Γ/(2J²) ... checked against quadrature.
        let spec = ChainSpec::new(vec![0.7], 1.3).unwrap();
        let s = spectrum(&spec);
        let closed = survival_moments(&s, None).unwrap();
        let quad = survival_moments_quadrature(&build_effective_matrix(&spec), None).unwrap();
        assert_relative_eq!(closed.int_s, quad.int_s, max_relative = 1e-9);
        assert_relative_eq!(closed.int_ts, quad.int_ts, max_relative = 1e-9);
        // Exact mean absorption time for two sites: 1/J²·Γ/4 + 2/Γ.
        let (j, g) = (0.7f64, 1.3f64);
        assert_relative_eq!(
            closed.int_s,
            g / (4.0 * j * j) + 2.0 / g,
            max_relative = 1e-12
        );
    }

    #[test]
    fn finite_horizon_matches_quadrature() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 0.8 }, 10, 1.0).unwrap();
        let s = spectrum(&spec);
        for h in [0.3, 5.0, 40.0] {
            let closed = survival_moments(&s, Some(h)).unwrap();
            let quad =
                survival_moments_quadrature(&build_effective_matrix(&spec), Some(h)).unwrap();
            assert_relative_eq!(closed.int_s, quad.int_s, max_relative = 1e-10);
            assert_relative_eq!(closed.int_ts, quad.int_ts, max_relative = 1e-10);
            assert_relative_eq!(closed.s_end, quad.s_end, max_relative = 1e-10);
        }
    }

    #[test]
    fn long_horizon_approaches_infinite() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 6, 1.0).unwrap();
        let s = spectrum(&spec);
        let inf = tick_statistics_with(&s, Horizon::Infinite).unwrap();
        let fin = tick_statistics_with(&s, Horizon::Fixed(2000.0)).unwrap();
        assert_relative_eq!(inf.mu, fin.mu, max_relative = 1e-9);
        assert_relative_eq!(inf.precision, fin.precision, max_relative = 1e-8);
    }

    #[test]
    fn statistics_invariants() {
        let spec = expand_profile(&CouplingProfile::Pst { j0: 0.2 }, 12, 1.0).unwrap();
        let st = tick_statistics(&spectrum(&spec)).unwrap();
        assert_relative_eq!(st.variance, st.t2 - st.mu * st.mu, max_relative = 1e-12);
        assert_relative_eq!(
            st.precision * st.variance,
            st.mu * st.mu,
            max_relative = 1e-12
        );
        assert_relative_eq!(st.resolution * st.mu, 1.0, max_relative = 1e-15);
        assert!(
            st.tick_probability > 0.5 && st.tick_probability <= 1.0,
            "{}",
            st.tick_probability
        );
    }

    #[test]
    fn closed_chain_is_improper() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 6, 0.0).unwrap();
        assert!(matches!(
            tick_statistics_with(&spectrum(&spec), Horizon::Infinite),
            Err(Error::ImproperTick(_))
        ));
        assert!(matches!(
            tick_statistics(&spectrum(&spec)),
            Err(Error::NoTick { .. })
        ));
    }

    #[test]
    fn quenched_chain_is_improper() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 6, 1.0).unwrap();
        let q = crate::chain::quench_decouple_first(&spec);
        assert!(matches!(
            moment(&spectrum(&q), 1),
            Err(Error::ImproperTick(_))
        ));
    }

    #[test]
    fn no_tick_within_tiny_horizon() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 0.1 }, 10, 1.0).unwrap();
        assert!(matches!(
            tick_statistics_with(&spectrum(&spec), Horizon::Fixed(0.01)),
            Err(Error::NoTick { .. })
        ));
    }

    #[test]
    fn prt_bound_values() {
        let b = prt_bounds(1.0, 1.22e-2);
        assert_relative_eq!(b.upper, 1.0 / (1.22e-2 * 1.22e-2), max_relative = 1e-14);
        assert_relative_eq!(b.upper, 6718.9, max_relative = 1e-4);
        assert_relative_eq!(b.lower, 81.967, max_relative = 1e-4);
        assert!(b.contains(361.62));
        let unit = prt_bounds(1.0, 1.0);
        assert_eq!(unit.lower, 1.0);
        assert_eq!(unit.upper, 1.0);
    }

    #[test]
    fn phi_series_and_direct_agree_at_switch() {
        for &x in &[
            Complex64::new(-0.49, 0.1),
            Complex64::new(0.0, 0.499),
            Complex64::new(-0.3, -0.35),
        ] {
            let ex = x.exp();
            let (s1, s2) = phi12(x, ex);
            let d1 = (ex - 1.0) / x;
            let d2 = (ex * (x - 1.0) + 1.0) / (x * x);
            assert!((s1 - d1).norm() < 1e-14);
            assert!((s2 - d2).norm() < 1e-12);
        }
    }
}
