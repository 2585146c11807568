//! Chain specifications, coupling profiles and the single-excitation matrices.
//!
//! Bonds are indexed 1-based throughout the public API: bond `i` (for
//! `i = 1..=N-1`) couples sites `i` and `i + 1`, and `couplings()[i - 1]`
//! holds `J_i`. Energies are in units of the sink rate `Γ`, times in `Γ⁻¹`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nearest-neighbour XX chain with a sink of rate `gamma` on the last site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChainSpec", into = "RawChainSpec")]
pub struct ChainSpec {
    couplings: Vec<f64>,
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChainSpec {
    couplings: Vec<f64>,
    #[serde(default = "default_gamma")]
    gamma: f64,
}

fn default_gamma() -> f64 {
    1.0
}

impl TryFrom<RawChainSpec> for ChainSpec {
    type Error = Error;

    fn try_from(raw: RawChainSpec) -> Result<Self> {
        // A stored spec may legitimately be a quenched one.
        ChainSpec::with_options(raw.couplings, raw.gamma, true)
    }
}

impl From<ChainSpec> for RawChainSpec {
    fn from(spec: ChainSpec) -> Self {
        RawChainSpec {
            couplings: spec.couplings,
            gamma: spec.gamma,
        }
    }
}

impl ChainSpec {
    /// Builds a spec with strictly positive couplings.
    pub fn new(couplings: Vec<f64>, gamma: f64) -> Result<Self> {
        Self::with_options(couplings, gamma, false)
    }

    /// Builds a spec; `allow_quenched` additionally admits `J_1 = 0`.
    pub fn with_options(couplings: Vec<f64>, gamma: f64, allow_quenched: bool) -> Result<Self> {
        let spec = ChainSpec { couplings, gamma };
        spec.validate(allow_quenched)?;
        Ok(spec)
    }

    pub fn validate(&self, allow_quenched: bool) -> Result<()> {
        if self.couplings.is_empty() {
            return Err(Error::InvalidChain(
                "a chain needs at least two sites".into(),
            ));
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return Err(Error::InvalidChain(format!(
                "sink rate must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        for (idx, &j) in self.couplings.iter().enumerate() {
            let bond = idx + 1;
            let ok = if bond == 1 && allow_quenched {
                j.is_finite() && j >= 0.0
            } else {
                j.is_finite() && j > 0.0
            };
            if !ok {
                return Err(Error::InvalidChain(format!(
                    "coupling J_{bond} = {j} must be strictly positive"
                )));
            }
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.couplings.len() + 1
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    /// `J_bond` with 1-based bond index.
    pub fn coupling(&self, bond: usize) -> f64 {
        self.couplings[bond - 1]
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let spec = ChainSpec {
            couplings: self.couplings.clone(),
            gamma,
        };
        spec.validate(self.is_quenched())?;
        Ok(spec)
    }

    pub fn is_quenched(&self) -> bool {
        self.couplings[0] == 0.0
    }

    pub fn max_coupling(&self) -> f64 {
        self.couplings.iter().copied().fold(0.0, f64::max)
    }
}

/// How a coupling vector is generated for a given chain length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingProfile {
    /// `J_i = j0·√(i(N−i))`.
    Pst {
        j0: f64,
    },
    /// PST bulk with the last `o` couplings `J_{N−o}..J_{N−1}` replaced in order.
    PstWithTailOverrides {
        j0: f64,
        tail_overrides: Vec<f64>,
        /// Declared override count; must match `tail_overrides.len()` when present.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        o: Option<usize>,
    },
    Uniform {
        j: f64,
    },
    Explicit {
        couplings: Vec<f64>,
    },
}

/// PST coupling vector `[j0·√(i(N−i))]` for `i = 1..N−1`.
pub fn pst_couplings(n_sites: usize, j0: f64) -> Result<Vec<f64>> {
    if n_sites < 2 {
        return Err(Error::InvalidInput(format!(
            "PST profile needs N >= 2, got {n_sites}"
        )));
    }
    if !(j0.is_finite() && j0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "PST scale j0 must be positive, got {j0}"
        )));
    }
    let n = n_sites as f64;
    Ok((1..n_sites)
        .map(|i| {
            let i = i as f64;
            j0 * (i * (n - i)).sqrt()
        })
        .collect())
}

/// Expands a profile into a validated spec of `n_sites` sites.
pub fn expand_profile(profile: &CouplingProfile, n_sites: usize, gamma: f64) -> Result<ChainSpec> {
    let couplings = match profile {
        CouplingProfile::Pst { j0 } => pst_couplings(n_sites, *j0)?,
        CouplingProfile::PstWithTailOverrides {
            j0,
            tail_overrides,
            o,
        } => {
            if let Some(o) = o {
                if *o != tail_overrides.len() {
                    return Err(Error::InvalidInput(format!(
                        "declared o = {o} but {} tail overrides given",
                        tail_overrides.len()
                    )));
                }
            }
            let o = tail_overrides.len();
            if o >= n_sites {
                return Err(Error::InvalidInput(format!(
                    "{o} tail overrides do not fit a chain of {n_sites} sites"
                )));
            }
            let mut couplings = pst_couplings(n_sites, *j0)?;
            let start = couplings.len() - o;
            couplings[start..].copy_from_slice(tail_overrides);
            couplings
        }
        CouplingProfile::Uniform { j } => {
            if n_sites < 2 {
                return Err(Error::InvalidInput(format!(
                    "chain needs N >= 2, got {n_sites}"
                )));
            }
            vec![*j; n_sites - 1]
        }
        CouplingProfile::Explicit { couplings } => {
            if couplings.len() + 1 != n_sites {
                return Err(Error::InvalidInput(format!(
                    "explicit profile has {} couplings, expected {}",
                    couplings.len(),
                    n_sites.saturating_sub(1)
                )));
            }
            couplings.clone()
        }
    };
    ChainSpec::new(couplings, gamma)
}

/// Square tridiagonal matrix stored by its three diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal<T> {
    pub diag: Vec<T>,
    /// `sub[i]` is entry `(i + 1, i)`.
    pub sub: Vec<T>,
    /// `sup[i]` is entry `(i, i + 1)`.
    pub sup: Vec<T>,
}

impl<T: nalgebra::Scalar + Zero + Copy> Tridiagonal<T> {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::from_element(n, n, T::zero());
        for i in 0..n {
            m[(i, i)] = self.diag[i];
        }
        for i in 0..n.saturating_sub(1) {
            m[(i + 1, i)] = self.sub[i];
            m[(i, i + 1)] = self.sup[i];
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Tridiagonal {
            diag: self.diag.clone(),
            sub: self.sup.clone(),
            sup: self.sub.clone(),
        }
    }
}

impl Tridiagonal<f64> {
    /// Largest `|sub[i] - sup[i]|`.
    pub fn asymmetry(&self) -> f64 {
        self.sub
            .iter()
            .zip(&self.sup)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Extracts the tridiagonal part of a dense real matrix, rejecting anything else.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        from_dense_generic(m, |z| z.abs())
    }
}

impl Tridiagonal<Complex64> {
    /// Largest `|sub[i] - sup[i]|` (complex symmetry, no conjugation).
    pub fn asymmetry(&self) -> f64 {
        self.sub
            .iter()
            .zip(&self.sup)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Result<Self> {
        from_dense_generic(m, |z| z.norm())
    }
}

fn from_dense_generic<T>(m: &DMatrix<T>, abs: impl Fn(T) -> f64) -> Result<Tridiagonal<T>>
where
    T: nalgebra::Scalar + Copy,
{
    if !m.is_square() {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let n = m.nrows();
    for c in 0..n {
        for r in 0..n {
            if r.abs_diff(c) > 1 && abs(m[(r, c)]) != 0.0 {
                return Err(Error::InvalidInput(format!(
                    "matrix is not tridiagonal: entry ({r}, {c}) is nonzero"
                )));
            }
        }
    }
    Ok(Tridiagonal {
        diag: (0..n).map(|i| m[(i, i)]).collect(),
        sub: (0..n.saturating_sub(1)).map(|i| m[(i + 1, i)]).collect(),
        sup: (0..n.saturating_sub(1)).map(|i| m[(i, i + 1)]).collect(),
    })
}

/// Single-excitation XX hopping matrix: `J_i` on the off-diagonals, zero diagonal.
pub fn build_xx_matrix(spec: &ChainSpec) -> Tridiagonal<f64> {
    Tridiagonal {
        diag: vec![0.0; spec.n_sites()],
        sub: spec.couplings.clone(),
        sup: spec.couplings.clone(),
    }
}

/// Effective non-Hermitian matrix: the XX matrix plus `−iΓ/2` at site `N`.
pub fn build_effective_matrix(spec: &ChainSpec) -> Tridiagonal<Complex64> {
    let n = spec.n_sites();
    let mut diag = vec![Complex64::new(0.0, 0.0); n];
    diag[n - 1] = Complex64::new(0.0, -0.5 * spec.gamma);
    let off: Vec<Complex64> = spec
        .couplings
        .iter()
        .map(|&j| Complex64::new(j, 0.0))
        .collect();
    Tridiagonal {
        diag,
        sub: off.clone(),
        sup: off,
    }
}

/// Sets `J_1 = 0`, isolating the first site.
pub fn quench_decouple_first(spec: &ChainSpec) -> ChainSpec {
    let mut couplings = spec.couplings.clone();
    couplings[0] = 0.0;
    ChainSpec {
        couplings,
        gamma: spec.gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pst_small_chains() {
        let j = pst_couplings(4, 1.0).unwrap();
        assert_relative_eq!(j[0], 3f64.sqrt(), epsilon = 1e-15);
        assert_relative_eq!(j[1], 2.0, epsilon = 1e-15);
        assert_relative_eq!(j[2], 3f64.sqrt(), epsilon = 1e-15);
        assert_eq!(pst_couplings(2, 2.0).unwrap(), vec![2.0]);
    }

    #[test]
    fn pst_center_bond_of_fifty_site_chain() {
        let j = pst_couplings(50, 0.0172).unwrap();
        let max = j.iter().copied().fold(0.0, f64::max);
        assert_relative_eq!(max, 0.0172 * 25.0, epsilon = 1e-15);
        assert_relative_eq!(j[24], 0.43, epsilon = 1e-12);
    }

    #[test]
    fn pst_rejects_bad_input() {
        assert!(pst_couplings(1, 1.0).is_err());
        assert!(pst_couplings(5, 0.0).is_err());
        assert!(pst_couplings(5, -1.0).is_err());
    }

    #[test]
    fn pst_is_mirror_symmetric() {
        for n in 2..40 {
            let j = pst_couplings(n, 0.37).unwrap();
            for i in 0..j.len() {
                assert_eq!(j[i], j[j.len() - 1 - i]);
            }
        }
    }

    #[test]
    fn expand_pst_six_sites() {
        let spec = expand_profile(&CouplingProfile::Pst { j0: 1.0 }, 6, 1.0).unwrap();
        let expect = [5f64.sqrt(), 8f64.sqrt(), 3.0, 8f64.sqrt(), 5f64.sqrt()];
        for (a, b) in spec.couplings().iter().zip(expect) {
            assert_relative_eq!(*a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn expand_tail_overrides() {
        let tail = vec![0.245, 0.243, 0.255, 0.367];
        let profile = CouplingProfile::PstWithTailOverrides {
            j0: 0.0172,
            tail_overrides: tail.clone(),
            o: Some(4),
        };
        let spec = expand_profile(&profile, 50, 1.0).unwrap();
        let pst = pst_couplings(50, 0.0172).unwrap();
        assert_eq!(&spec.couplings()[..45], &pst[..45]);
        assert_eq!(&spec.couplings()[45..], tail.as_slice());
        assert_eq!(spec.coupling(49), 0.367);
    }

    #[test]
    fn expand_rejects_mismatched_declared_count() {
        let profile = CouplingProfile::PstWithTailOverrides {
            j0: 0.1,
            tail_overrides: vec![0.2, 0.3],
            o: Some(3),
        };
        assert!(expand_profile(&profile, 10, 1.0).is_err());
        let too_many = CouplingProfile::PstWithTailOverrides {
            j0: 0.1,
            tail_overrides: vec![0.2; 4],
            o: None,
        };
        assert!(expand_profile(&too_many, 4, 1.0).is_err());
    }

    #[test]
    fn expand_explicit_passthrough() {
        let spec = expand_profile(
            &CouplingProfile::Explicit {
                couplings: vec![1.0, 1.0],
            },
            3,
            1.0,
        )
        .unwrap();
        assert_eq!(spec.couplings(), &[1.0, 1.0]);
    }

    #[test]
    fn zero_coupling_only_allowed_when_quenched() {
        assert!(ChainSpec::new(vec![0.0, 1.0], 1.0).is_err());
        assert!(ChainSpec::with_options(vec![0.0, 1.0], 1.0, true).is_ok());
        assert!(ChainSpec::with_options(vec![1.0, 0.0], 1.0, true).is_err());
        assert!(ChainSpec::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn xx_matrix_two_and_three_sites() {
        let m = build_xx_matrix(&ChainSpec::new(vec![1.0], 1.0).unwrap()).to_dense();
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        let m = build_xx_matrix(&ChainSpec::new(vec![0.3, 0.7], 1.0).unwrap()).to_dense();
        assert_eq!(m[(0, 1)], 0.3);
        assert_eq!(m[(1, 2)], 0.7);
        assert_eq!(m[(2, 1)], 0.7);
        assert_eq!(m[(0, 2)], 0.0);
        assert!(m.diagonal().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn effective_matrix_two_sites() {
        let m = build_effective_matrix(&ChainSpec::new(vec![1.0], 1.0).unwrap()).to_dense();
        assert_eq!(m[(0, 0)], Complex64::new(0.0, 0.0));
        assert_eq!(m[(0, 1)], Complex64::new(1.0, 0.0));
        assert_eq!(m[(1, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(m[(1, 1)], Complex64::new(0.0, -0.5));
    }

    #[test]
    fn effective_matrix_structure() {
        let profile = CouplingProfile::PstWithTailOverrides {
            j0: 0.0172,
            tail_overrides: vec![0.245, 0.243, 0.255, 0.367],
            o: None,
        };
        let spec = expand_profile(&profile, 50, 1.0).unwrap();
        let heff = build_effective_matrix(&spec).to_dense();
        assert_eq!(heff, heff.transpose());
        assert_eq!(heff.trace(), Complex64::new(0.0, -0.5));

        let hxx = build_xx_matrix(&spec)
            .to_dense()
            .map(|x| Complex64::new(x, 0.0));
        let diff = &heff - &hxx;
        let nonzero: Vec<_> = diff
            .iter()
            .enumerate()
            .filter(|(_, z)| z.norm() != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(diff[(49, 49)], Complex64::new(0.0, -0.5));

        let closed = spec.with_gamma(0.0).unwrap();
        let heff0 = build_effective_matrix(&closed).to_dense();
        let hxx0 = build_xx_matrix(&closed)
            .to_dense()
            .map(|x| Complex64::new(x, 0.0));
        assert_eq!(heff0, hxx0);
    }

    #[test]
    fn quench_zeroes_first_bond() {
        let spec = ChainSpec::new(vec![1.0, 1.0], 1.0).unwrap();
        let q = quench_decouple_first(&spec);
        assert_eq!(q.couplings(), &[0.0, 1.0]);
        assert!(q.is_quenched());
        assert!(q.validate(true).is_ok());
        assert!(q.validate(false).is_err());
    }

    #[test]
    fn tridiagonal_from_dense_rejects_full_matrix() {
        let m = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0, 2.0, 1.0, 0.0]);
        assert!(Tridiagonal::<f64>::from_dense(&m).is_err());
    }

    #[test]
    fn spec_serde_validates() {
        let ok: ChainSpec = serde_json::from_str(r#"{"couplings":[0.5,0.5]}"#).unwrap();
        assert_eq!(ok.gamma(), 1.0);
        assert!(serde_json::from_str::<ChainSpec>(r#"{"couplings":[0.5,-0.5]}"#).is_err());
        assert!(serde_json::from_str::<ChainSpec>(r#"{"couplings":[0.5],"extra":1}"#).is_err());
    }
}
