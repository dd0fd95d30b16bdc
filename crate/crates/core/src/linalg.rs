//! Dense complex matrix helpers and the Hermitian eigendecomposition every
//! propagator in the crate is built from.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;

#[inline]
pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn frobenius(m: &CMat) -> f64 {
    m.norm()
}

pub fn trace(m: &CMat) -> Complex64 {
    m.diagonal().iter().sum()
}

/// Tr(A·B) without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// ‖M − M†‖_F.
pub fn hermiticity_defect(m: &CMat) -> f64 {
    (m - m.adjoint()).norm()
}

/// Hermitian within `rel_tol`·‖M‖_F (absolute floor for the zero matrix).
pub fn is_hermitian(m: &CMat, rel_tol: f64) -> bool {
    let scale = m.norm().max(f64::MIN_POSITIVE);
    hermiticity_defect(m) <= rel_tol * scale
}

/// ‖U·U† − 1‖_F.
pub fn unitarity_defect(u: &CMat) -> f64 {
    let n = u.nrows();
    (u * u.adjoint() - CMat::identity(n, n)).norm()
}

/// Eigendecomposition H = V·diag(λ)·V† of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectral {
    values: Vec<f64>,
    vectors: CMat,
}

impl Spectral {
    /// The input is symmetrized as ½(H + H†) first; callers check Hermiticity.
    pub fn new(h: &CMat) -> Self {
        let sym = (h + h.adjoint()) * re(0.5);
        let eig = SymmetricEigen::new(sym);
        Spectral {
            values: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    /// Eigenvalues in ascending order.
    pub fn sorted_values(&self) -> Vec<f64> {
        let mut v = self.values.clone();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// exp(−i·H·t).
    pub fn propagator(&self, t: f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let phase = Complex64::from_polar(1.0, -lambda * t);
            for v in scaled.column_mut(j).iter_mut() {
                *v *= phase;
            }
        }
        &scaled * self.vectors.adjoint()
    }

    /// V†·M·V.
    pub fn to_eigenbasis(&self, m: &CMat) -> CMat {
        self.vectors.adjoint() * m * &self.vectors
    }

    /// V·M·V†.
    pub fn from_eigenbasis(&self, m: &CMat) -> CMat {
        &self.vectors * m * self.vectors.adjoint()
    }
}

/// Kronecker product of a list of 2×2 factors, site 0 leftmost (most significant).
pub fn kron_chain(factors: &[CMat]) -> CMat {
    let mut out = CMat::from_element(1, 1, re(1.0));
    for f in factors {
        out = out.kronecker(f);
    }
    out
}
