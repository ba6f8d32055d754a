//! Small dense symmetric linear algebra: spectra, eigen-decompositions with a
//! reproducible ordering, and subspace angles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::ops::Deref;

/// Eigenvalues of a symmetric matrix, ascending.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    values: Vec<f64>,
}

impl Spectrum {
    /// Sorts `values` ascending.
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Spectrum { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// True when every eigenvalue is at least `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.values.iter().all(|&v| v >= -tol)
    }
}

impl Deref for Spectrum {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// A symmetric matrix together with its eigen-decomposition
/// `W = Q diag(λ) Qᵀ`, eigenvalues ascending.
///
/// Ties between eigenvectors are resolved by sign only: each column of `Q`
/// has its first component of magnitude above `1e-12` positive.
#[derive(Clone, Debug)]
pub struct SpectralMatrix {
    entries: DMatrix<f64>,
    spectrum: Spectrum,
    vectors: DMatrix<f64>,
}

impl SpectralMatrix {
    /// Decomposes `w`. The input is symmetrized as `(w + wᵀ)/2` first.
    pub fn new(w: DMatrix<f64>) -> Self {
        assert!(w.is_square(), "SpectralMatrix needs a square matrix");
        let n = w.nrows();
        let sym = (&w + w.transpose()) * 0.5;
        if n == 0 {
            return SpectralMatrix {
                entries: sym,
                spectrum: Spectrum::new(vec![]),
                vectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = SymmetricEigen::new(sym.clone());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let mut vectors = DMatrix::zeros(n, n);
        let mut values = Vec::with_capacity(n);
        for (col, &src) in order.iter().enumerate() {
            values.push(eig.eigenvalues[src]);
            let mut v = eig.eigenvectors.column(src).clone_owned();
            if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
                if *first < 0.0 {
                    v.neg_mut();
                }
            }
            vectors.set_column(col, &v);
        }
        SpectralMatrix {
            entries: sym,
            spectrum: Spectrum { values },
            vectors,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Self {
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    pub fn eigenvalues(&self) -> &[f64] {
        self.spectrum.values()
    }

    /// Orthonormal eigenvectors as columns, matching [`Self::eigenvalues`].
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    /// Diagonal of the stored matrix, in its own index order.
    pub fn diag(&self) -> Vec<f64> {
        self.entries.diagonal().iter().copied().collect()
    }

    /// Largest eigenvalue magnitude.
    pub fn spectral_norm(&self) -> f64 {
        self.spectrum.min().abs().max(self.spectrum.max().abs())
    }

    /// Frobenius norm of the off-diagonal part relative to `1 + ‖W‖_F`.
    pub fn off_diagonal_mass(&self) -> f64 {
        let n = self.n();
        let mut off = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    off += self.entries[(i, j)].powi(2);
                }
            }
        }
        off.sqrt() / (1.0 + self.entries.norm())
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.off_diagonal_mass() <= tol
    }

    /// `Q diag(d) Qᵀ` for a vector `d` indexed like the sorted eigenvalues.
    pub fn rotate_diag(&self, d: &[f64]) -> DMatrix<f64> {
        let q = &self.vectors;
        let dm = DMatrix::from_diagonal(&DVector::from_row_slice(d));
        q * dm * q.transpose()
    }

    /// `‖W − Q diag(λ) Qᵀ‖_∞` (max entry).
    pub fn reconstruction_error(&self) -> f64 {
        (self.rotate_diag(self.eigenvalues()) - &self.entries).amax()
    }
}

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns. Subspaces of different dimension are
/// reported as orthogonal (π/2).
pub fn max_principal_angle(u: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    if u.ncols() != v.ncols() {
        return std::f64::consts::FRAC_PI_2;
    }
    if u.ncols() == 0 {
        return 0.0;
    }
    // sin θ_max = ‖(I − UUᵀ)V‖₂
    let resid = v - u * (u.transpose() * v);
    let s = resid.singular_values().max().clamp(0.0, 1.0);
    s.asin()
}

/// Symmetric part of a square matrix.
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius inner product.
pub fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.component_mul(b).sum()
}
