//! Small dense complex linear algebra: unitary transforms and a Hermitian
//! eigensolver with deterministic ordering and phase conventions.
//!
//! The decomposition itself is delegated to `nalgebra`; this module only pins
//! down the conventions so that repeated runs produce bit-identical frames.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest |M_ij - conj(M_ji)| over all entries.
pub fn hermitian_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Replace `m` by `(m + m†) / 2`.
pub fn hermitize(m: &mut CMatrix) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::new(m[(i, i)].re, 0.0);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Cheap positive-definiteness test for a Hermitian matrix via an in-place
/// Cholesky factorisation. A `false` result does not imply negative
/// eigenvalues, only that some pivot was not strictly positive.
pub fn is_positive_definite(m: &CMatrix) -> bool {
    // nalgebra's complex Cholesky takes complex square roots of negative
    // pivots, so it cannot be used as a definiteness test.
    let n = m.nrows();
    let mut l = m.clone();
    for j in 0..n {
        let mut pivot = l[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return false;
        }
        let d = pivot.sqrt();
        l[(j, j)] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut v = l[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = v / d;
        }
    }
    true
}

/// N x N unitary change of basis. Column k is the k-th basis vector
/// expressed in the measurement (computational) basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisTransform {
    entries: CMatrix,
}

impl BasisTransform {
    pub fn new(entries: CMatrix, tol: f64) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        let t = Self { entries };
        let dev = t.unitarity_defect();
        if dev > tol {
            return Err(Error::Consistency(format!(
                "basis transform not unitary: |U'U - I| = {dev:.3e}"
            )));
        }
        Ok(t)
    }

    pub(crate) fn from_matrix_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            entries: CMatrix::identity(n, n),
        }
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

    pub fn adjoint(&self) -> Self {
        Self {
            entries: self.entries.adjoint(),
        }
    }

    /// Frobenius norm of U†U - I.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        let prod = self.entries.adjoint() * &self.entries;
        frobenius_norm(&(prod - CMatrix::identity(n, n)))
    }

    /// U M U†.
    pub fn conjugate(&self, m: &CMatrix) -> CMatrix {
        &self.entries * m * self.entries.adjoint()
    }

    /// U† M U, i.e. `m` expressed in this basis.
    pub fn express(&self, m: &CMatrix) -> CMatrix {
        self.entries.adjoint() * m * &self.entries
    }
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are sorted descending; ties keep the solver's column order.
/// Each eigenvector is rotated so that its largest-modulus component (first
/// such index on ties) is real and positive.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: BasisTransform,
}

impl Spectrum {
    /// V Λ V†.
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.eigenvalues.len();
        let v = self.eigenvectors.matrix();
        let mut scaled = v.clone();
        for k in 0..n {
            for i in 0..n {
                scaled[(i, k)] *= self.eigenvalues[k];
            }
        }
        scaled * v.adjoint()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }
}

/// Input asymmetry allowed by [`eig_hermitian`].
pub const HERMITIAN_INPUT_TOL: f64 = 1e-10;

pub fn eig_hermitian(m: &CMatrix) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.ncols(),
        });
    }
    let scale = frobenius_norm(m).max(1.0);
    let asym = hermitian_asymmetry(m);
    if asym > HERMITIAN_INPUT_TOL * scale {
        return Err(Error::NotHermitian(asym));
    }
    let mut sym = m.clone();
    hermitize(&mut sym);

    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 0)
        .ok_or_else(|| Error::Consistency("Hermitian eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    // Stable sort keeps original column order among equal eigenvalues.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let mut pivot = 0;
        let mut best = -1.0;
        for i in 0..n {
            let a = col[i].norm();
            if a > best * (1.0 + 1e-12) + 1e-300 {
                best = a;
                pivot = i;
            }
        }
        let phase = if col[pivot].norm() > 0.0 {
            col[pivot].conj() / col[pivot].norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for i in 0..n {
            vectors[(i, dst)] = col[i] * phase;
        }
    }

    Ok(Spectrum {
        eigenvalues: values,
        eigenvectors: BasisTransform::from_matrix_unchecked(vectors),
    })
}

/// Trace distance ½ Σ|eig(a - b)|.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let diff = a - b;
    // Diagonal differences need no eigensolve.
    let n = diff.nrows();
    let off: f64 = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| diff[(i, j)].norm())
        .fold(0.0, f64::max);
    if off == 0.0 {
        return Ok(0.5 * (0..n).map(|i| diff[(i, i)].re.abs()).sum::<f64>());
    }
    let spec = eig_hermitian(&diff)?;
    Ok(0.5 * spec.eigenvalues.iter().map(|v| v.abs()).sum::<f64>())
}
