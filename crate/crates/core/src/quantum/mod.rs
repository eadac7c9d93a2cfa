//! State and observable types for an N-level system measured in the
//! computational basis.

pub mod linalg;

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use linalg::{eig_hermitian, trace_distance, BasisTransform, CMatrix, Spectrum};

/// Numerical tolerances shared across the crate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Algebraic identities: Hermiticity, unit trace, unitarity.
    pub algebraic: f64,
    /// Negative eigenvalues above `-positivity` are treated as integrator drift.
    pub positivity: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            algebraic: 1e-12,
            positivity: 1e-9,
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        Err(Error::InvalidDimension(n))
    } else {
        Ok(())
    }
}

/// Hermitian, unit-trace, positive semidefinite N x N matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    pub fn new(entries: CMatrix) -> Result<Self> {
        Self::with_tolerances(entries, &ToleranceConfig::default())
    }

    pub fn with_tolerances(entries: CMatrix, tol: &ToleranceConfig) -> Result<Self> {
        let n = entries.nrows();
        check_dim(n)?;
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: entries.ncols(),
            });
        }
        let asym = linalg::hermitian_asymmetry(&entries);
        if asym > tol.algebraic {
            return Err(Error::NotHermitian(asym));
        }
        let tr = entries.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > tol.algebraic {
            return Err(Error::Consistency(format!("trace {tr} is not 1")));
        }
        if !linalg::is_positive_definite(&entries) {
            let min = eig_hermitian(&entries)?.min_eigenvalue();
            if min < -tol.positivity {
                return Err(Error::Consistency(format!(
                    "negative eigenvalue {min:.3e} in density matrix"
                )));
            }
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_matrix_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    /// I/N.
    pub fn maximally_mixed(n: usize) -> Result<Self> {
        check_dim(n)?;
        Ok(Self {
            entries: CMatrix::identity(n, n) * Complex64::new(1.0 / n as f64, 0.0),
        })
    }

    /// Diagonal state in the measurement basis.
    pub fn from_diagonal(probabilities: &[f64]) -> Result<Self> {
        let diag: Vec<Complex64> = probabilities
            .iter()
            .map(|&p| Complex64::new(p, 0.0))
            .collect();
        Self::new(CMatrix::from_diagonal(&DVector::from_vec(diag)))
    }

    /// |ψ⟩⟨ψ| for a (not necessarily normalized) vector.
    pub fn pure(amplitudes: &[Complex64]) -> Result<Self> {
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidArgument("zero state vector".into()));
        }
        let psi = DVector::from_iterator(amplitudes.len(), amplitudes.iter().map(|a| a / norm));
        Self::new(&psi * psi.adjoint())
    }

    /// Eigenprojector of the canonical observable onto level `index`.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        check_dim(n)?;
        if index >= n {
            return Err(Error::InvalidArgument(format!("level {index} out of range for N = {n}")));
        }
        let mut p = vec![0.0; n];
        p[index] = 1.0;
        Self::from_diagonal(&p)
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        eig_hermitian(&self.entries)
    }

    /// U ρ U†.
    pub fn conjugated(&self, u: &BasisTransform) -> Result<Self> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.dim(),
            });
        }
        let mut m = u.conjugate(&self.entries);
        linalg::hermitize(&mut m);
        Ok(Self { entries: m })
    }

    pub fn purity(&self) -> f64 {
        // ρ Hermitian: Tr ρ² = Σ |ρ_ij|².
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Measured observable, diagonal in the computational basis.
///
/// The canonical instance from [`build_observable`] is X = J_z/N: traceless,
/// non-degenerate, with eigenvalues spaced by exactly 1/N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    spectrum: Vec<f64>,
}

impl Observable {
    pub fn dim(&self) -> usize {
        self.spectrum.len()
    }

    /// Eigenvalues in basis order (ascending for the canonical observable).
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn matrix(&self) -> CMatrix {
        let diag: Vec<Complex64> = self.spectrum.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        CMatrix::from_diagonal(&DVector::from_vec(diag))
    }

    pub fn trace(&self) -> f64 {
        self.spectrum.iter().sum()
    }

    /// Tr[X²].
    pub fn trace_sq(&self) -> f64 {
        self.spectrum.iter().map(|x| x * x).sum()
    }

    /// X + αI. The measurement dynamics do not depend on α, but the result is
    /// no longer traceless.
    pub fn shifted(&self, alpha: f64) -> Self {
        Self {
            spectrum: self.spectrum.iter().map(|x| x + alpha).collect(),
        }
    }

    /// X expressed in `basis`: B† X B.
    pub fn in_basis(&self, basis: &BasisTransform) -> Result<CMatrix> {
        if basis.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: basis.dim(),
            });
        }
        let mut m = basis.express(&self.matrix());
        linalg::hermitize(&mut m);
        Ok(m)
    }
}

/// X = J_z/N with eigenvalues n/N, n = -(N-1)/2, ..., (N-1)/2.
pub fn build_observable(n: usize) -> Result<Observable> {
    check_dim(n)?;
    let nf = n as f64;
    // (2i - (N-1)) / (2N) keeps the spectrum exactly antisymmetric.
    let spectrum = (0..n)
        .map(|i| (2.0 * i as f64 - (nf - 1.0)) / (2.0 * nf))
        .collect();
    Ok(Observable { spectrum })
}

/// Discrete Fourier transform F[k][l] = exp(2πi·kl/N)/√N.
pub fn unbiased_basis(n: usize) -> Result<BasisTransform> {
    check_dim(n)?;
    let scale = 1.0 / (n as f64).sqrt();
    let m = CMatrix::from_fn(n, n, |k, l| {
        let phase = 2.0 * PI * ((k * l) % n) as f64 / n as f64;
        Complex64::from_polar(scale, phase)
    });
    Ok(BasisTransform::from_matrix_unchecked(m))
}

/// True iff every overlap |⟨f_i|e_j⟩|² between the columns of `basis` and the
/// eigenvectors of `x` equals 1/N within `tol`.
pub fn is_unbiased(x: &Observable, basis: &BasisTransform, tol: f64) -> Result<bool> {
    let n = x.dim();
    if basis.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: basis.dim(),
        });
    }
    let target = 1.0 / n as f64;
    // X is diagonal, so its eigenvectors are the unit vectors e_j.
    Ok(basis
        .matrix()
        .iter()
        .all(|z| (z.norm_sqr() - target).abs() <= tol))
}

/// L = 1 - Tr[ρ²].
pub fn impurity(rho: &DensityMatrix) -> f64 {
    1.0 - rho.purity()
}

/// Imaginary part allowed in Tr[Xρ] before it is reported as an error.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-9;

/// ⟨X⟩ = Tr[Xρ].
pub fn expectation(x: &Observable, rho: &DensityMatrix) -> Result<f64> {
    if x.dim() != rho.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: rho.dim(),
        });
    }
    let m = rho.matrix();
    let value: Complex64 = x
        .spectrum()
        .iter()
        .enumerate()
        .map(|(i, &xi)| m[(i, i)] * xi)
        .sum();
    if value.im.abs() > EXPECTATION_IMAG_TOL {
        return Err(Error::Consistency(format!(
            "Tr[X rho] has imaginary part {:.3e}",
            value.im
        )));
    }
    Ok(value.re)
}
