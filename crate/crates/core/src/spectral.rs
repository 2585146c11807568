//! Spectral decompositions of the closed XX matrix and of the complex symmetric
//! effective matrix, and the observables built on them.
//!
//! For the effective matrix `H = Hᵀ` the left eigenvectors are transposes of the
//! right ones, so every right eigenvector `r_k` is normalized with the
//! non-conjugating product `Σ_j r_{k,j}² = 1`. With this convention the
//! propagator is `e^{−iHt} = Σ_k e^{−iε_k t} r_k r_kᵀ`.

use nalgebra::{DMatrix, Schur, SymmetricEigen};
use num_complex::Complex64;

use crate::chain::Tridiagonal;
use crate::error::{Error, Result};
use crate::propagate::{check_grid, propagate_timeseries, Propagator, State, TimeSeries};

const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue gap below which the spectrum is treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-8;
/// Relative tolerance for matching `ε ↦ −ε*` partners.
pub const PAIRING_TOL: f64 = 1e-8;
const REAL_RESIDUE_TOL: f64 = 1e-10;

/// Eigen-decomposition of a real symmetric tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct HermitianSpectrum {
    /// Ascending eigenvalues `ω_k`.
    pub frequencies: Vec<f64>,
    /// Orthonormal eigenvectors as columns, `eigenvectors[(j, k)] = v_{k,j}`.
    pub eigenvectors: DMatrix<f64>,
}

pub fn decompose_hermitian(matrix: &Tridiagonal<f64>) -> Result<HermitianSpectrum> {
    let scale = matrix
        .sub
        .iter()
        .chain(&matrix.diag)
        .fold(1.0f64, |m, x| m.max(x.abs()));
    let asym = matrix.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let eig = SymmetricEigen::new(matrix.to_dense());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let n = order.len();
    let frequencies = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |j, k| eig.eigenvectors[(j, order[k])]);
    Ok(HermitianSpectrum {
        frequencies,
        eigenvectors,
    })
}

impl HermitianSpectrum {
    pub fn dim(&self) -> usize {
        self.frequencies.len()
    }

    /// `⟨N|e^{−iHt}|1⟩` from the spectral sum.
    pub fn transfer_amplitude(&self, t: f64) -> Complex64 {
        let n = self.dim();
        (0..n)
            .map(|k| {
                let w = self.eigenvectors[(n - 1, k)] * self.eigenvectors[(0, k)];
                Complex64::from_polar(w, -self.frequencies[k] * t)
            })
            .sum()
    }
}

/// End-to-end transfer fidelity `|⟨N|e^{−iHt}|1⟩|²`.
pub fn fidelity(spectrum: &HermitianSpectrum, t: f64) -> f64 {
    spectrum.transfer_amplitude(t).norm_sqr()
}

/// Fidelity by direct time propagation of `|1⟩`, independent of any eigensolver.
pub fn fidelity_direct(matrix: &Tridiagonal<f64>, t: f64) -> Result<f64> {
    let complex = Tridiagonal {
        diag: matrix
            .diag
            .iter()
            .map(|&d| Complex64::new(d, 0.0))
            .collect(),
        sub: matrix.sub.iter().map(|&d| Complex64::new(d, 0.0)).collect(),
        sup: matrix.sup.iter().map(|&d| Complex64::new(d, 0.0)).collect(),
    };
    let prop = Propagator::new(&complex)?;
    let mut psi = State::site(prop.dim(), 0);
    prop.evolve(&mut psi, t);
    Ok(psi.norm_sqr_at(prop.dim() - 1))
}

/// Biorthogonal eigen-decomposition of the effective matrix.
#[derive(Debug, Clone)]
pub struct EffectiveSpectrum {
    /// `ε_k`, sorted by real part then imaginary part.
    pub eigenvalues: Vec<Complex64>,
    /// Right eigenvectors as columns, `right_vectors[(j, k)] = r_{k,j}`, with `Σ_j r_{k,j}² = 1`.
    pub right_vectors: DMatrix<Complex64>,
    pub degenerate: bool,
    /// Smallest pairwise eigenvalue distance.
    pub min_gap: f64,
    /// `C_{kk'} = r_{k,1}* ⟨r_k|r_{k'}⟩ r_{k',1}`, the survival-probability kernel.
    kernel: DMatrix<Complex64>,
    matrix: Tridiagonal<Complex64>,
}

pub fn decompose_effective(matrix: &Tridiagonal<Complex64>) -> Result<EffectiveSpectrum> {
    let n = matrix.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    let scale = matrix
        .sub
        .iter()
        .chain(&matrix.diag)
        .fold(0.0f64, |m, x| m.max(x.norm()))
        .max(f64::MIN_POSITIVE);
    let asym = matrix.asymmetry();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }

    let dense = matrix.to_dense();
    let schur =
        Schur::try_new(dense, f64::EPSILON, 10_000 * n.max(1)).ok_or(Error::NoConvergence)?;
    let (q, t) = schur.unpack();

    let mut pairs: Vec<(Complex64, Vec<Complex64>)> = Vec::with_capacity(n);
    for k in 0..n {
        let lambda = t[(k, k)];
        let y = triangular_eigenvector(&t, k, scale);
        let mut x: Vec<Complex64> = (0..n)
            .map(|j| (0..=k).map(|l| q[(j, l)] * y[l]).sum())
            .collect();
        normalize_unit(&mut x);
        refine_eigenpair(matrix, lambda, &mut x, scale);
        let refined = rayleigh_quotient(matrix, &x);
        pairs.push((refined, x));
    }
    if pairs
        .iter()
        .any(|(e, v)| !e.is_finite() || v.iter().any(|z| !z.is_finite()))
    {
        return Err(Error::NoConvergence);
    }

    pairs.sort_by(|a, b| {
        a.0.re
            .total_cmp(&b.0.re)
            .then_with(|| a.0.im.total_cmp(&b.0.im))
    });

    let mut degenerate = false;
    let mut right_vectors = DMatrix::zeros(n, n);
    let mut eigenvalues = Vec::with_capacity(n);
    for (k, (eps, mut v)) in pairs.into_iter().enumerate() {
        let self_overlap: Complex64 = v.iter().map(|z| z * z).sum();
        // Self-orthogonal vectors only occur at exceptional points.
        if self_overlap.norm() < DEGENERACY_TOL {
            degenerate = true;
        }
        let mut s = self_overlap.sqrt();
        let pivot = branch_pivot(&v);
        if (v[pivot] / s).re < 0.0 || ((v[pivot] / s).re == 0.0 && (v[pivot] / s).im < 0.0) {
            s = -s;
        }
        for z in v.iter_mut() {
            *z /= s;
        }
        for (j, z) in v.into_iter().enumerate() {
            right_vectors[(j, k)] = z;
        }
        eigenvalues.push(eps);
    }

    let max_abs = eigenvalues.iter().fold(0.0f64, |m, e| m.max(e.norm()));
    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            min_gap = min_gap.min((eigenvalues[a] - eigenvalues[b]).norm());
        }
    }
    if n > 1 && min_gap < DEGENERACY_TOL * max_abs.max(f64::MIN_POSITIVE) {
        degenerate = true;
    }

    let weighted = DMatrix::from_fn(n, n, |j, k| right_vectors[(j, k)] * right_vectors[(0, k)]);
    let kernel = weighted.adjoint() * &weighted;

    Ok(EffectiveSpectrum {
        eigenvalues,
        right_vectors,
        degenerate,
        min_gap,
        kernel,
        matrix: matrix.clone(),
    })
}

/// Index used to fix the sign branch of the normalization: site 1 unless its
/// component is negligible, then the largest-modulus component.
fn branch_pivot(v: &[Complex64]) -> usize {
    let (imax, vmax) = v.iter().enumerate().fold((0, 0.0f64), |(i, m), (j, z)| {
        if z.norm() > m {
            (j, z.norm())
        } else {
            (i, m)
        }
    });
    if v[0].norm() > 1e-10 * vmax {
        0
    } else {
        imax
    }
}

fn normalize_unit(v: &mut [Complex64]) {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        for z in v.iter_mut() {
            *z /= norm;
        }
    }
}

/// Eigenvector of the upper-triangular Schur factor for the `k`-th diagonal entry.
fn triangular_eigenvector(t: &DMatrix<Complex64>, k: usize, scale: f64) -> Vec<Complex64> {
    let lambda = t[(k, k)];
    let floor = f64::EPSILON * scale.max(1e-300);
    let mut y = vec![Complex64::new(0.0, 0.0); k + 1];
    y[k] = Complex64::new(1.0, 0.0);
    for j in (0..k).rev() {
        let s: Complex64 = ((j + 1)..=k).map(|l| t[(j, l)] * y[l]).sum();
        let mut d = t[(j, j)] - lambda;
        if d.norm() < floor {
            d = Complex64::new(floor, 0.0);
        }
        y[j] = -s / d;
        let big = y[j].norm();
        if big > 1e100 {
            for z in y.iter_mut() {
                *z /= big;
            }
        }
    }
    y
}

/// One step of shifted inverse iteration on the tridiagonal matrix.
fn refine_eigenpair(
    m: &Tridiagonal<Complex64>,
    lambda: Complex64,
    x: &mut Vec<Complex64>,
    scale: f64,
) {
    let n = m.dim();
    if n < 2 {
        return;
    }
    let shift = lambda + Complex64::new(1.0, 1.0) * (64.0 * f64::EPSILON * scale);
    let diag: Vec<Complex64> = m.diag.iter().map(|d| d - shift).collect();
    if let Some(mut z) = solve_tridiagonal(&m.sub, &diag, &m.sup, x) {
        if z.iter().all(|c| c.is_finite()) {
            normalize_unit(&mut z);
            // Keep the phase of the incoming vector so the refinement is a pure polish.
            let overlap: Complex64 = z.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
            if overlap.norm() > 0.0 {
                let phase = overlap / overlap.norm();
                for c in z.iter_mut() {
                    *c *= phase;
                }
            }
            *x = z;
        }
    }
}

/// `xᵀHx / xᵀx`, second-order accurate for complex symmetric `H`.
fn rayleigh_quotient(m: &Tridiagonal<Complex64>, x: &[Complex64]) -> Complex64 {
    let hx = tridiagonal_mul(m, x);
    let num: Complex64 = x.iter().zip(&hx).map(|(a, b)| a * b).sum();
    let den: Complex64 = x.iter().map(|a| a * a).sum();
    if den.norm() == 0.0 {
        // Self-orthogonal: fall back to the conjugating quotient.
        let num: Complex64 = x.iter().zip(&hx).map(|(a, b)| a.conj() * b).sum();
        let den: f64 = x.iter().map(|a| a.norm_sqr()).sum();
        return num / den;
    }
    num / den
}

pub(crate) fn tridiagonal_mul(m: &Tridiagonal<Complex64>, x: &[Complex64]) -> Vec<Complex64> {
    let n = m.dim();
    (0..n)
        .map(|i| {
            let mut acc = m.diag[i] * x[i];
            if i > 0 {
                acc += m.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += m.sup[i] * x[i + 1];
            }
            acc
        })
        .collect()
}

/// Gaussian elimination with partial pivoting for a tridiagonal system.
fn solve_tridiagonal(
    sub: &[Complex64],
    diag: &[Complex64],
    sup: &[Complex64],
    rhs: &[Complex64],
) -> Option<Vec<Complex64>> {
    let n = diag.len();
    let zero = Complex64::new(0.0, 0.0);
    // Row i holds (d[i], u1[i], u2[i]) at columns i, i+1, i+2 after elimination.
    let mut d = diag.to_vec();
    let mut u1: Vec<Complex64> = (0..n)
        .map(|i| if i + 1 < n { sup[i] } else { zero })
        .collect();
    let mut u2 = vec![zero; n];
    let mut b = rhs.to_vec();
    let mut l = sub.to_vec();
    for i in 0..n.saturating_sub(1) {
        if l[i].norm() > d[i].norm() {
            // Swap rows i and i+1.
            let (di, u1i, u2i, bi) = (d[i], u1[i], u2[i], b[i]);
            d[i] = l[i];
            u1[i] = d[i + 1];
            u2[i] = if i + 2 < n { sup[i + 1] } else { zero };
            b[i] = b[i + 1];
            // Old row i becomes the row to eliminate at position i+1.
            let factor = di / d[i];
            d[i + 1] = u1i - factor * u1[i];
            u1[i + 1] = u2i - factor * u2[i];
            b[i + 1] = bi - factor * b[i];
            l[i] = factor;
        } else {
            if d[i].norm() == 0.0 {
                return None;
            }
            let factor = l[i] / d[i];
            d[i + 1] -= factor * u1[i];
            if i + 1 < n - 1 {
                u1[i + 1] -= factor * u2[i];
            }
            b[i + 1] = b[i + 1] - factor * b[i];
        }
    }
    if d[n - 1].norm() == 0.0 {
        return None;
    }
    let mut x = vec![zero; n];
    for i in (0..n).rev() {
        let mut acc = b[i];
        if i + 1 < n {
            acc -= u1[i] * x[i + 1];
        }
        if i + 2 < n {
            acc -= u2[i] * x[i + 2];
        }
        x[i] = acc / d[i];
    }
    Some(x)
}

impl EffectiveSpectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn matrix(&self) -> &Tridiagonal<Complex64> {
        &self.matrix
    }

    /// Sink rate read back from the `(N, N)` entry.
    pub fn gamma(&self) -> f64 {
        -2.0 * self.matrix.diag[self.dim() - 1].im
    }

    /// `C_{kk'} = ⟨1|l_k⟩⟨r_k|r_{k'}⟩⟨l_{k'}|1⟩`.
    pub fn kernel(&self) -> &DMatrix<Complex64> {
        &self.kernel
    }

    /// `⟨l_k|1⟩ = r_{k,1}`.
    pub fn initial_overlap(&self, k: usize) -> Complex64 {
        self.right_vectors[(0, k)]
    }

    /// `A_k = r_{k,N} r_{k,1}`.
    pub fn end_product(&self, k: usize) -> Complex64 {
        self.right_vectors[(self.dim() - 1, k)] * self.right_vectors[(0, k)]
    }

    /// Largest `|Σ_j r_{k,j} r_{k',j} − δ_{kk'}|`.
    pub fn biorthogonality_error(&self) -> f64 {
        let gram = self.right_vectors.transpose() * &self.right_vectors;
        let n = self.dim();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((gram[(a, b)] - target).norm());
            }
        }
        worst
    }

    /// Largest `‖H r_k − ε_k r_k‖ / ‖r_k‖`.
    pub fn residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            let col: Vec<Complex64> = self.right_vectors.column(k).iter().copied().collect();
            let hx = tridiagonal_mul(&self.matrix, &col);
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let res = hx
                .iter()
                .zip(&col)
                .map(|(h, x)| (h - self.eigenvalues[k] * x).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(res / norm);
        }
        worst
    }

    /// Survival amplitude vector `ψ(t) = Σ_k e^{−iε_k t} r_{k,1} r_k`.
    pub fn state_at(&self, t: f64) -> Vec<Complex64> {
        let n = self.dim();
        let coeff: Vec<Complex64> = (0..n)
            .map(|k| {
                (Complex64::new(0.0, -t) * self.eigenvalues[k]).exp() * self.right_vectors[(0, k)]
            })
            .collect();
        (0..n)
            .map(|j| (0..n).map(|k| self.right_vectors[(j, k)] * coeff[k]).sum())
            .collect()
    }

    fn survival_spectral(&self, t: f64) -> Result<f64> {
        let n = self.dim();
        let phase: Vec<Complex64> = self
            .eigenvalues
            .iter()
            .map(|e| (Complex64::new(0.0, -t) * e).exp())
            .collect();
        let mut total = Complex64::new(0.0, 0.0);
        for kp in 0..n {
            let mut col = Complex64::new(0.0, 0.0);
            for k in 0..n {
                col += phase[k].conj() * self.kernel[(k, kp)];
            }
            total += col * phase[kp];
        }
        if total.im.abs() > REAL_RESIDUE_TOL * total.re.abs().max(1.0) {
            return Err(Error::NonRealMoment {
                value: total.re,
                residue: total.im,
            });
        }
        Ok(total.re)
    }

    fn tick_amplitude(&self, t: f64) -> Complex64 {
        (0..self.dim())
            .map(|k| (Complex64::new(0.0, -t) * self.eigenvalues[k]).exp() * self.end_product(k))
            .sum()
    }
}

/// Survival probability `S(t)` of the excitation started on site 1.
///
/// Uses the double spectral sum; a degenerate spectrum falls back to direct propagation.
pub fn survival(spectrum: &EffectiveSpectrum, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("negative time {t}")));
    }
    if spectrum.degenerate {
        let prop = Propagator::new(&spectrum.matrix)?;
        let mut psi = State::site(prop.dim(), 0);
        prop.evolve(&mut psi, t);
        return Ok(psi.norm_sqr());
    }
    spectrum.survival_spectral(t)
}

/// Tick density `Γ|Σ_k e^{−iε_k t} r_{k,N} r_{k,1}|²`.
pub fn tick_pdf(spectrum: &EffectiveSpectrum, t: f64, gamma: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("negative time {t}")));
    }
    if spectrum.degenerate {
        let prop = Propagator::new(&spectrum.matrix)?;
        let mut psi = State::site(prop.dim(), 0);
        prop.evolve(&mut psi, t);
        return Ok(gamma * psi.norm_sqr_at(prop.dim() - 1));
    }
    Ok(gamma * spectrum.tick_amplitude(t).norm_sqr())
}

/// Partner index of every mode under `ε ↦ −ε*`.
///
/// Greedy nearest-candidate matching; fails if any partner is farther than
/// `PAIRING_TOL` relative to the spectral radius.
pub fn pair_modes(spectrum: &EffectiveSpectrum) -> Result<Vec<usize>> {
    let n = spectrum.dim();
    let radius = spectrum
        .eigenvalues
        .iter()
        .fold(0.0f64, |m, e| m.max(e.norm()))
        .max(1.0);
    let mut partner = vec![usize::MAX; n];
    for k in 0..n {
        if partner[k] != usize::MAX {
            continue;
        }
        let target = -spectrum.eigenvalues[k].conj();
        let best = (0..n)
            .filter(|&j| partner[j] == usize::MAX)
            .min_by(|&a, &b| {
                (spectrum.eigenvalues[a] - target)
                    .norm()
                    .total_cmp(&(spectrum.eigenvalues[b] - target).norm())
            })
            .expect("mode k itself is unmatched");
        let dist = (spectrum.eigenvalues[best] - target).norm();
        if dist > PAIRING_TOL * radius {
            return Err(Error::PairedFormUnsupported(format!(
                "mode {k} has no partner under ε ↦ −ε* (nearest at distance {dist:e})"
            )));
        }
        partner[k] = best;
        partner[best] = k;
    }
    Ok(partner)
}

/// Per-pair check of `r_{j,−k} = s_k (−1)^j r_{j,k}*`.
#[derive(Debug, Clone, Copy)]
pub struct EigenvectorPairing {
    pub mode: usize,
    pub partner: usize,
    /// Fitted sign `s_k`, exactly ±1.
    pub sign: f64,
    /// Largest componentwise deviation from the relation with the fitted sign.
    pub deviation: f64,
}

pub fn eigenvector_pairing(spectrum: &EffectiveSpectrum) -> Result<Vec<EigenvectorPairing>> {
    let partner = pair_modes(spectrum)?;
    let n = spectrum.dim();
    let r = &spectrum.right_vectors;
    let mut out = Vec::new();
    for k in 0..n {
        let p = partner[k];
        if p < k {
            continue;
        }
        let mirrored = |j: usize| {
            let parity = if j.is_multiple_of(2) { 1.0 } else { -1.0 };
            r[(j, k)].conj() * parity
        };
        let deviation_for = |s: f64| {
            (0..n)
                .map(|j| (r[(j, p)] - mirrored(j) * s).norm())
                .fold(0.0f64, f64::max)
        };
        let (plus, minus) = (deviation_for(1.0), deviation_for(-1.0));
        let (sign, deviation) = if plus <= minus {
            (1.0, plus)
        } else {
            (-1.0, minus)
        };
        out.push(EigenvectorPairing {
            mode: k,
            partner: p,
            sign,
            deviation,
        });
    }
    Ok(out)
}

/// Symmetry-reduced form of the tick density, summing over `N/2` mode pairs.
#[derive(Debug, Clone)]
pub struct PairedTickForm {
    /// `(ε_k^R, ε_k^I, |A_k|, Arg A_k)` for the member of each pair with `ε^R > 0`.
    terms: Vec<(f64, f64, f64, f64)>,
    gamma: f64,
}

impl PairedTickForm {
    pub fn new(spectrum: &EffectiveSpectrum, gamma: f64) -> Result<Self> {
        let n = spectrum.dim();
        if !n.is_multiple_of(2) {
            return Err(Error::PairedFormUnsupported(format!(
                "chain length {n} is odd; only the direct form applies"
            )));
        }
        if spectrum.degenerate {
            return Err(Error::PairedFormUnsupported(
                "spectrum is degenerate".into(),
            ));
        }
        let partner = pair_modes(spectrum)?;
        let mut terms = Vec::with_capacity(n / 2);
        for k in 0..n {
            let p = partner[k];
            if p == k {
                return Err(Error::PairedFormUnsupported(format!(
                    "mode {k} is its own partner (purely imaginary eigenvalue)"
                )));
            }
            let eps = spectrum.eigenvalues[k];
            let take = eps.re > spectrum.eigenvalues[p].re
                || (eps.re == spectrum.eigenvalues[p].re && k < p);
            if take {
                let a = spectrum.end_product(k);
                terms.push((eps.re, eps.im, a.norm(), a.arg()));
            }
        }
        Ok(PairedTickForm { terms, gamma })
    }

    pub fn tick_pdf(&self, t: f64) -> f64 {
        let sum: f64 = self
            .terms
            .iter()
            .map(|&(re, im, mag, arg)| (im * t).exp() * mag * (re * t - arg).sin())
            .sum();
        4.0 * self.gamma * sum * sum
    }
}

/// `4Γ|Σ_{k=1}^{N/2} e^{ε_k^I t}|A_k| sin(ε_k^R t − Arg A_k)|²`.
pub fn tick_pdf_paired(spectrum: &EffectiveSpectrum, t: f64, gamma: f64) -> Result<f64> {
    Ok(PairedTickForm::new(spectrum, gamma)?.tick_pdf(t))
}

/// Survival and tick-density series on `grid` from the spectral sums.
pub fn spectral_series(
    spectrum: &EffectiveSpectrum,
    grid: &[f64],
) -> Result<(TimeSeries, TimeSeries)> {
    if spectrum.degenerate {
        return propagate_timeseries(&spectrum.matrix, 0, grid);
    }
    check_grid(grid)?;
    let gamma = spectrum.gamma();
    let mut s = Vec::with_capacity(grid.len());
    let mut p = Vec::with_capacity(grid.len());
    for &t in grid {
        s.push(spectrum.survival_spectral(t)?);
        p.push(gamma * spectrum.tick_amplitude(t).norm_sqr());
    }
    Ok((
        TimeSeries {
            times: grid.to_vec(),
            values: s,
        },
        TimeSeries {
            times: grid.to_vec(),
            values: p,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{
        build_effective_matrix, build_xx_matrix, expand_profile, ChainSpec, CouplingProfile,
    };
    use approx::assert_relative_eq;

    fn engineered_spec() -> ChainSpec {
        expand_profile(
            &CouplingProfile::PstWithTailOverrides {
                j0: 0.0172,
                tail_overrides: vec![0.245, 0.243, 0.255, 0.367],
                o: None,
            },
            50,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn hermitian_two_site() {
        let spec = ChainSpec::new(vec![1.0], 1.0).unwrap();
        let h = decompose_hermitian(&build_xx_matrix(&spec)).unwrap();
        assert_relative_eq!(h.frequencies[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(h.frequencies[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn hermitian_rejects_asymmetric() {
        let m = Tridiagonal {
            diag: vec![0.0; 3],
            sub: vec![1.0, 1.0],
            sup: vec![1.0, 2.0],
        };
        assert!(matches!(
            decompose_hermitian(&m),
            Err(Error::NotSymmetric(_))
        ));
    }

    #[test]
    fn hermitian_invariants() {
        let spec = expand_profile(&CouplingProfile::Pst { j0: 0.3 }, 9, 1.0).unwrap();
        let m = build_xx_matrix(&spec);
        let h = decompose_hermitian(&m).unwrap();
        let v = &h.eigenvectors;
        let id = v.transpose() * v;
        assert!((id - DMatrix::identity(9, 9)).abs().max() < 1e-10);
        let dense = m.to_dense();
        for k in 0..9 {
            let res = &dense * v.column(k) - v.column(k) * h.frequencies[k];
            assert!(res.norm() < 1e-10);
            // mirror symmetry of the couplings makes end components equal in magnitude
            assert_relative_eq!(v[(0, k)].abs(), v[(8, k)].abs(), epsilon = 1e-10);
        }
    }

    #[test]
    fn fidelity_two_site_rabi() {
        let spec = ChainSpec::new(vec![1.0], 0.0).unwrap();
        let m = build_xx_matrix(&spec);
        let h = decompose_hermitian(&m).unwrap();
        for &t in &[0.0f64, 0.3, 1.0, 2.7, 10.0] {
            let expect = t.sin().powi(2);
            assert_relative_eq!(fidelity(&h, t), expect, epsilon = 1e-12);
            assert_relative_eq!(fidelity_direct(&m, t).unwrap(), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn fidelity_spectral_matches_direct() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 0.8 }, 12, 0.0).unwrap();
        let m = build_xx_matrix(&spec);
        let h = decompose_hermitian(&m).unwrap();
        for i in 0..40 {
            let t = 0.37 * i as f64;
            assert!((fidelity(&h, t) - fidelity_direct(&m, t).unwrap()).abs() < 1e-10);
        }
        assert!(fidelity(&h, 0.0).abs() < 1e-15);
    }

    #[test]
    fn effective_two_site_eigenvalues() {
        let spec = ChainSpec::new(vec![1.0], 1.0).unwrap();
        let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
        let root = 15f64.sqrt() / 4.0;
        assert_relative_eq!(s.eigenvalues[0].re, -root, epsilon = 1e-13);
        assert_relative_eq!(s.eigenvalues[1].re, root, epsilon = 1e-13);
        for e in &s.eigenvalues {
            assert_relative_eq!(e.im, -0.25, epsilon = 1e-13);
        }
        assert!(s.biorthogonality_error() < 1e-12);
        assert!(!s.degenerate);
    }

    #[test]
    fn effective_closed_chain_matches_hermitian() {
        let spec = expand_profile(&CouplingProfile::Pst { j0: 1.0 }, 4, 0.0).unwrap();
        let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
        let expect = [-3.0, -1.0, 1.0, 3.0];
        for (e, x) in s.eigenvalues.iter().zip(expect) {
            assert_relative_eq!(e.re, x, epsilon = 1e-12);
            assert!(e.im.abs() < 1e-12);
        }
    }

    #[test]
    fn engineered_spectrum_invariants() {
        let s = decompose_effective(&build_effective_matrix(&engineered_spec())).unwrap();
        assert!(!s.degenerate);
        assert!(s.residual() < 1e-8);
        assert!(s.biorthogonality_error() < 1e-8);
        assert!(s.eigenvalues.iter().all(|e| e.im <= 0.0));
        let partner = pair_modes(&s).unwrap();
        for k in 0..s.dim() {
            let d = (s.eigenvalues[partner[k]] + s.eigenvalues[k].conj()).norm();
            assert!(d < 1e-8, "pair {k}: {d}");
        }
        for pair in eigenvector_pairing(&s).unwrap() {
            assert!(pair.deviation < 1e-7, "{pair:?}");
        }
    }

    #[test]
    fn survival_basics() {
        let s = decompose_effective(&build_effective_matrix(&engineered_spec())).unwrap();
        assert_relative_eq!(survival(&s, 0.0).unwrap(), 1.0, epsilon = 1e-12);
        assert!(tick_pdf(&s, 0.0, 1.0).unwrap() < 1e-20);

        let closed = expand_profile(&CouplingProfile::Uniform { j: 0.5 }, 7, 0.0).unwrap();
        let s0 = decompose_effective(&build_effective_matrix(&closed)).unwrap();
        for i in 0..10 {
            assert_relative_eq!(survival(&s0, i as f64 * 3.1).unwrap(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn tick_pdf_is_minus_survival_derivative() {
        let s = decompose_effective(&build_effective_matrix(&engineered_spec())).unwrap();
        let h = 1e-3;
        for &t in &[20.0, 60.0, 80.0, 95.0, 130.0] {
            let fd = -(survival(&s, t + h).unwrap() - survival(&s, t - h).unwrap()) / (2.0 * h);
            let p = tick_pdf(&s, t, 1.0).unwrap();
            assert!((fd - p).abs() < 1e-7, "t={t}: fd={fd} p={p}");
        }
    }

    #[test]
    fn paired_form_matches_direct_form() {
        for spec in [
            engineered_spec(),
            expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 10, 1.0).unwrap(),
        ] {
            let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
            let paired = PairedTickForm::new(&s, 1.0).unwrap();
            for i in 0..300 {
                let t = i as f64 * 0.5;
                let d = tick_pdf(&s, t, 1.0).unwrap();
                assert!((paired.tick_pdf(t) - d).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn paired_form_rejects_odd_chains() {
        let spec = expand_profile(&CouplingProfile::Uniform { j: 1.0 }, 9, 1.0).unwrap();
        let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
        assert!(matches!(
            tick_pdf_paired(&s, 1.0, 1.0),
            Err(Error::PairedFormUnsupported(_))
        ));
        assert!(tick_pdf(&s, 1.0, 1.0).is_ok());
    }

    #[test]
    fn paired_form_closed_chain_reduces_to_fidelity() {
        // With Γ = 0 the paired amplitude equals the transfer amplitude of the XX chain.
        let spec = expand_profile(&CouplingProfile::Pst { j0: 0.2 }, 8, 0.0).unwrap();
        let s = decompose_effective(&build_effective_matrix(&spec)).unwrap();
        let h = decompose_hermitian(&build_xx_matrix(&spec)).unwrap();
        let paired = PairedTickForm::new(&s, 1.0).unwrap();
        for i in 0..50 {
            let t = 0.4 * i as f64;
            assert!((paired.tick_pdf(t) - fidelity(&h, t)).abs() < 1e-10);
        }
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let sub = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(3.0, 0.1),
            Complex64::new(0.2, 0.0),
        ];
        let diag = vec![
            Complex64::new(0.1, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, -0.5),
        ];
        let sup = vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.3, 0.0),
            Complex64::new(1.5, 0.0),
        ];
        let rhs: Vec<Complex64> = (0..4).map(|i| Complex64::new(i as f64, 1.0)).collect();
        let x = solve_tridiagonal(&sub, &diag, &sup, &rhs).unwrap();
        let m = Tridiagonal { diag, sub, sup };
        let back = tridiagonal_mul(&m, &x);
        for (a, b) in back.iter().zip(&rhs) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
