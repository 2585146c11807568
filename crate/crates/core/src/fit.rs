//! Power-law fits `y = a·x^b` by least squares on `(ln x, ln y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedPoint {
    pub x: f64,
    pub y: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points_used: Vec<(f64, f64)>,
    pub excluded: Vec<ExcludedPoint>,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if let Some((x, y)) = points
        .iter()
        .find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite()))
    {
        return Err(Error::Fit(format!(
            "power-law fit needs positive values, got ({x}, {y})"
        )));
    }
    if points.len() < 3 {
        return Err(Error::Fit(format!(
            "power-law fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("all x values coincide".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - a - b * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(FitResult {
        exponent: b,
        prefactor: a.exp(),
        r_squared,
        points_used: points.to_vec(),
        excluded: Vec::new(),
    })
}

/// Fit over the labelled points with `label > min_label`; the rest are
/// recorded as excluded.
pub fn fit_power_law_above(points: &[(usize, f64, f64)], min_label: usize) -> Result<FitResult> {
    let (kept, dropped): (Vec<_>, Vec<_>) =
        points.iter().copied().partition(|(n, _, _)| *n > min_label);
    let used: Vec<(f64, f64)> = kept.iter().map(|&(_, x, y)| (x, y)).collect();
    let mut fit = fit_power_law(&used)?;
    fit.excluded = dropped
        .into_iter()
        .map(|(n, x, y)| ExcludedPoint {
            x,
            y,
            reason: format!("N = {n} is not above the cutoff {min_label}"),
        })
        .collect();
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionStep {
    /// Points with `N` at or below this value are dropped.
    pub cutoff: usize,
    pub points: usize,
    pub exponent: f64,
    pub r_squared: f64,
}

/// Exponent as the smallest chain lengths are removed one at a time, down to three points.
pub fn exclusion_trace(points: &[(usize, f64, f64)]) -> Vec<ExclusionStep> {
    let mut labels: Vec<usize> = points.iter().map(|p| p.0).collect();
    labels.sort_unstable();
    labels.dedup();
    let mut cutoffs = vec![0];
    cutoffs.extend(labels);
    cutoffs
        .into_iter()
        .filter_map(|cutoff| {
            let fit = fit_power_law_above(points, cutoff).ok()?;
            Some(ExclusionStep {
                cutoff,
                points: fit.points_used.len(),
                exponent: fit.exponent,
                r_squared: fit.r_squared,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(f64, f64)> = (1..=10)
            .map(|i| (i as f64, 3.0 * (i as f64).powi(-2)))
            .collect();
        let f = fit_power_law(&pts).unwrap();
        assert!((f.exponent + 2.0).abs() < 1e-12);
        assert!((f.prefactor - 3.0).abs() < 1e-11);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_power_law(&[(1.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, -2.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(0.0, 1.0), (2.0, 2.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(2.0, 1.0), (2.0, 2.0), (2.0, 1.0)]).is_err());
    }

    #[test]
    fn noisy_power_law_recovers_exponent() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let pts: Vec<(f64, f64)> = (0..12)
                .map(|i| {
                    let x = 1e-3 * 10f64.powf(i as f64 / 6.0);
                    let noise = 1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0);
                    (x, 0.8 * x.powi(-2) * noise)
                })
                .collect();
            let f = fit_power_law(&pts).unwrap();
            assert!((f.exponent + 2.0).abs() < 0.1, "{}", f.exponent);
        }
    }

    #[test]
    fn cutoff_excludes_small_labels() {
        let pts: Vec<(usize, f64, f64)> = [5usize, 10, 20, 40, 80]
            .iter()
            .map(|&n| (n, n as f64, (n as f64).powf(1.5)))
            .collect();
        let f = fit_power_law_above(&pts, 10).unwrap();
        assert_eq!(f.points_used.len(), 3);
        assert_eq!(f.excluded.len(), 2);
        let trace = exclusion_trace(&pts);
        assert_eq!(
            trace.iter().map(|s| s.points).collect::<Vec<_>>(),
            vec![5, 4, 3]
        );
        assert!(trace.iter().all(|s| (s.exponent - 1.5).abs() < 1e-12));
    }
}
