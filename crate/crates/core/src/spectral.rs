//! Spectral calculus for Hermitian matrices.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{domain, Result};
use crate::model::{ensure_hermitian, CMatrix, C64};

/// Default absolute gap below which eigenvalues are treated as one level.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-9;

/// `H = Σ_m E_m Π_m` with distinct ascending levels `E_m`.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    projectors: Vec<CMatrix>,
    /// Orthonormal basis of each eigenspace, one column per state.
    bases: Vec<CMatrix>,
    degeneracy_tol: f64,
}

impl SpectralDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[CMatrix] {
        &self.projectors
    }

    pub fn bases(&self) -> &[CMatrix] {
        &self.bases
    }

    pub fn degeneracy_tol(&self) -> f64 {
        self.degeneracy_tol
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.bases.iter().map(|b| b.ncols())
    }

    pub fn dimension(&self) -> usize {
        self.ranks().sum()
    }

    /// `Σ_m f(E_m) Π_m`.
    pub fn apply(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        let n = self.dimension();
        let mut out = CMatrix::zeros(n, n);
        for (e, p) in self.eigenvalues.iter().zip(&self.projectors) {
            out += p * f(*e);
        }
        out
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.apply(C64::from)
    }
}

/// Diagonalize `h`, grouping eigenvalues whose consecutive gaps are at most
/// `degeneracy_tol` into one level (the level energy is the group mean).
pub fn spectral_decompose(h: &CMatrix, degeneracy_tol: f64) -> Result<SpectralDecomposition> {
    if !(degeneracy_tol.is_finite() && degeneracy_tol >= 0.0) {
        return domain(format!("degeneracy_tol must be a non-negative number, got {degeneracy_tol}"));
    }
    ensure_hermitian(h)?;
    let (values, vectors) = eigh(h);
    let n = values.len();

    let mut eigenvalues = Vec::new();
    let mut bases = Vec::new();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] <= degeneracy_tol {
            end += 1;
        }
        let mean = values[start..end].iter().sum::<f64>() / (end - start) as f64;
        eigenvalues.push(mean);
        bases.push(vectors.columns(start, end - start).into_owned());
        start = end;
    }
    let projectors = bases.iter().map(|b| b * b.adjoint()).collect();
    Ok(SpectralDecomposition { eigenvalues, projectors, bases, degeneracy_tol })
}

/// Ascending eigenvalues and the matching orthonormal eigenvectors (columns).
pub(crate) fn eigh(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    // Symmetrize to remove round-off asymmetry before the solver sees it.
    let sym = (h + h.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let n = h.nrows();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// `exp(−i H t / ħ)` through the eigendecomposition of `H`.
pub(crate) fn unitary_step(h: &CMatrix, dt_over_hbar: f64) -> CMatrix {
    let (values, vectors) = eigh(h);
    let phases: Vec<C64> = values.iter().map(|e| C64::from_polar(1.0, -e * dt_over_hbar)).collect();
    let mut scaled = vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    scaled * vectors.adjoint()
}

/// Largest entry modulus.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Spectral (operator 2-) norm.
pub fn spectral_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

/// `‖U†U − 𝕀‖₂`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.nrows();
    spectral_norm(&(u.adjoint() * u - CMatrix::identity(n, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complexify, QuantumModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn diag(v: &[f64]) -> CMatrix {
        complexify(&DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v)))
    }

    fn assert_projector_invariants(h: &CMatrix, d: &SpectralDecomposition) {
        let n = h.nrows();
        let mut sum = CMatrix::zeros(n, n);
        for (i, pi) in d.projectors().iter().enumerate() {
            sum += pi;
            assert!(max_abs(&(pi - pi.adjoint())) < 1e-10);
            for (j, pj) in d.projectors().iter().enumerate() {
                let expected = if i == j { pi.clone() } else { CMatrix::zeros(n, n) };
                assert!(max_abs(&(pi * pj - expected)) < 1e-10);
            }
        }
        assert!(max_abs(&(sum - CMatrix::identity(n, n))) < 1e-10);
        assert!(max_abs(&(d.reconstruct() - h)) < 1e-10);
        for w in d.eigenvalues().windows(2) {
            assert!(w[1] - w[0] > d.degeneracy_tol());
        }
    }

    #[test]
    fn degenerate_diagonal() {
        let h = diag(&[1.0, 1.0, 2.0]);
        let d = spectral_decompose(&h, 1e-8).unwrap();
        assert_eq!(d.eigenvalues().len(), 2);
        assert!((d.eigenvalues()[0] - 1.0).abs() < 1e-15);
        assert!((d.eigenvalues()[1] - 2.0).abs() < 1e-15);
        assert_eq!(d.ranks().collect::<Vec<_>>(), vec![2, 1]);
        assert_projector_invariants(&h, &d);
    }

    #[test]
    fn pauli_z_projectors() {
        let h = diag(&[1.0, -1.0]);
        let d = spectral_decompose(&h, 1e-9).unwrap();
        assert_eq!(d.eigenvalues(), &[-1.0, 1.0]);
        assert!(max_abs(&(&d.projectors()[0] - diag(&[0.0, 1.0]))) < 1e-15);
        assert!(max_abs(&(&d.projectors()[1] - diag(&[1.0, 0.0]))) < 1e-15);
    }

    #[test]
    fn driven_qubit_levels() {
        let m = QuantumModel::sigma_z_sigma_x();
        let d = spectral_decompose(&m.hamiltonian(1.0), 1e-9).unwrap();
        let r2 = 2f64.sqrt();
        assert!((d.eigenvalues()[0] + r2).abs() < 1e-14);
        assert!((d.eigenvalues()[1] - r2).abs() < 1e-14);
    }

    #[test]
    fn non_hermitian_is_rejected() {
        let mut h = diag(&[1.0, 2.0]);
        h[(0, 1)] = C64::new(0.0, 1.0);
        assert!(spectral_decompose(&h, 1e-9).is_err());
    }

    #[test]
    fn random_matrices_up_to_sixteen() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for trial in 0..100 {
            let n = 2 + trial % 15;
            let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let mut h = &a + a.adjoint();
            // Plant an exact degeneracy in every fourth matrix.
            if trial % 4 == 0 {
                let d = spectral_decompose(&h, 1e-9).unwrap();
                let e0 = d.eigenvalues()[0];
                h = d.apply(|e| C64::from(if e == d.eigenvalues()[1] { e0 } else { e }));
                h = (&h + h.adjoint()) * C64::from(0.5);
            }
            let d = spectral_decompose(&h, 1e-9).unwrap();
            assert_projector_invariants(&h, &d);
        }
    }

    #[test]
    fn unitary_step_is_exponential() {
        let h = QuantumModel::sigma_z_sigma_x().hamiltonian(0.3);
        let u = unitary_step(&h, 0.7);
        let reference = (h * C64::new(0.0, -0.7)).exp();
        assert!(max_abs(&(u.clone() - reference)) < 1e-13);
        assert!(unitarity_defect(&u) < 1e-14);
    }

    proptest! {
        #[test]
        fn spectral_norm_bounds_entries(entries in proptest::collection::vec(-5.0..5.0f64, 9)) {
            let a = complexify(&DMatrix::from_row_slice(3, 3, &entries));
            let norm = spectral_norm(&a);
            prop_assert!(norm + 1e-12 >= max_abs(&a));
            prop_assert!(norm <= a.norm() + 1e-12);
        }
    }
}
