//! Complex Hermitian primitives used by the pricing game and the per-BS solver.
//!
//! Matrices are kept exactly Hermitian: every constructor writes the upper
//! triangle and mirrors its conjugate, so `A[(i, j)] == A[(j, i)].conj()` holds
//! bit-for-bit rather than up to rounding.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type ComplexVec = DVector<C64>;

/// Absolute tolerance on eigenvalues when checking positive semidefiniteness.
pub const EPS_PSD: f64 = 1e-9;

/// Default relative threshold below which eigenvalues are treated as zero.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMat(DMatrix<C64>);

impl HermitianMat {
    pub fn zeros(dim: usize) -> Self {
        HermitianMat(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianMat(DMatrix::identity(dim, dim))
    }

    /// `h h^H`.
    pub fn outer(h: &ComplexVec) -> Self {
        let mut m = Self::zeros(h.len());
        m.add_outer(1.0, h);
        m
    }

    /// Wraps a general matrix after checking it is Hermitian to `tol` (absolute,
    /// scaled by the largest entry). The stored matrix is symmetrised exactly.
    pub fn from_matrix(m: DMatrix<C64>, tol: f64) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        let asym = max_asymmetry(&m);
        let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
        if asym > tol * scale {
            return Err(Error::NotHermitian { asymmetry: asym });
        }
        let n = m.nrows();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = C64::new(m[(i, i)].re, 0.0);
            for j in (i + 1)..n {
                let v = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
                out[(i, j)] = v;
                out[(j, i)] = v.conj();
            }
        }
        Ok(HermitianMat(out))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    /// `self += weight * h h^H`.
    pub fn add_outer(&mut self, weight: f64, h: &ComplexVec) {
        let n = self.dim();
        debug_assert_eq!(h.len(), n);
        for i in 0..n {
            let hi = h[i];
            self.0[(i, i)].re += weight * hi.norm_sqr();
            for j in (i + 1)..n {
                let v = hi * h[j].conj() * weight;
                self.0[(i, j)] += v;
                self.0[(j, i)] = self.0[(i, j)].conj();
            }
        }
    }

    pub fn add_assign(&mut self, other: &HermitianMat) {
        self.0 += &other.0;
    }

    /// `self + s I`.
    pub fn shifted(&self, s: f64) -> HermitianMat {
        let mut out = self.clone();
        for i in 0..out.dim() {
            out.0[(i, i)].re += s;
        }
        out
    }

    pub fn scaled(&self, s: f64) -> HermitianMat {
        HermitianMat(self.0.map(|z| z * s))
    }

    pub fn mul_vec(&self, v: &ComplexVec) -> ComplexVec {
        &self.0 * v
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn max_asymmetry(&self) -> f64 {
        max_asymmetry(&self.0)
    }

    pub fn eigen(&self) -> Result<HermitianEigen> {
        if !self.is_finite() {
            return Err(Error::NonFinite);
        }
        let eig = SymmetricEigen::new(self.0.clone());
        Ok(HermitianEigen {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
        })
    }
}

fn max_asymmetry(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition `A = V diag(values) V^H` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<C64>,
}

impl HermitianEigen {
    pub fn max_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute eigenvalue, i.e. the spectral norm.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn inverted_values(&self, shift: f64, rank_tol: f64) -> Vec<f64> {
        let top = self.values.iter().map(|v| v + shift).fold(0.0, f64::max);
        let cut = rank_tol * top;
        self.values
            .iter()
            .map(|v| {
                let s = v + shift;
                if top > 0.0 && s > cut {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `(A + shift I)^+ v` without materialising the pseudo-inverse.
    pub fn apply_shifted_pinv(&self, v: &ComplexVec, shift: f64, rank_tol: f64) -> ComplexVec {
        let inv = self.inverted_values(shift, rank_tol);
        let mut coeffs = self.vectors.ad_mul(v);
        for (c, s) in coeffs.iter_mut().zip(&inv) {
            *c *= *s;
        }
        &self.vectors * coeffs
    }

    /// Component of `v` outside the numerical range of `A`.
    pub fn range_residual(&self, v: &ComplexVec, rank_tol: f64) -> f64 {
        let top = self.max_eigenvalue().max(0.0);
        let coeffs = self.vectors.ad_mul(v);
        coeffs
            .iter()
            .zip(self.values.iter())
            .filter(|(_, &val)| !(top > 0.0 && val > rank_tol * top))
            .map(|(c, _)| c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn pseudo_inverse(&self, rank_tol: f64) -> HermitianMat {
        let inv = self.inverted_values(0.0, rank_tol);
        let n = self.vectors.nrows();
        let mut out = HermitianMat::zeros(n);
        for (idx, &s) in inv.iter().enumerate() {
            if s != 0.0 {
                let col: ComplexVec = self.vectors.column(idx).into_owned();
                out.add_outer(s, &col);
            }
        }
        out
    }
}

pub fn outer(h: &ComplexVec) -> HermitianMat {
    HermitianMat::outer(h)
}

/// Real part of `w^H A w`.
pub fn quad_form(w: &ComplexVec, a: &HermitianMat) -> Result<f64> {
    if w.len() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: w.len(),
        });
    }
    Ok(w.dotc(&a.mul_vec(w)).re)
}

/// Moore-Penrose pseudo-inverse of a positive-semidefinite Hermitian matrix.
///
/// Eigenvalues at or below `rank_tol * lambda_max` are zeroed.
pub fn psd_pseudo_inverse(a: &HermitianMat, rank_tol: f64) -> Result<HermitianMat> {
    if !a.is_finite() {
        return Err(Error::NonFinite);
    }
    let asym = a.max_asymmetry();
    if asym > 0.0 {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    let eig = a.eigen()?;
    let min = eig.min_eigenvalue();
    if min < -EPS_PSD {
        return Err(Error::NotPsd {
            min_eigenvalue: min,
        });
    }
    Ok(eig.pseudo_inverse(rank_tol))
}

/// `h^H w`.
pub fn inner(h: &ComplexVec, w: &ComplexVec) -> C64 {
    h.dotc(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> ComplexVec {
        DVector::from_fn(n, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> HermitianMat {
        let mut a = HermitianMat::zeros(n);
        for _ in 0..rank {
            let v = random_vec(rng, n);
            a.add_outer(rng.random::<f64>() + 0.1, &v);
        }
        a
    }

    fn max_abs(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn outer_of_basis_vectors() {
        let a = outer(&DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert_eq!(a.get(0, 0), c(1.0, 0.0));
        assert_eq!(a.get(0, 1), c(0.0, 0.0));
        assert_eq!(a.get(1, 1), c(0.0, 0.0));

        let b = outer(&DVector::from_vec(vec![c(0.0, 0.0), c(0.0, 1.0)]));
        assert_eq!(b.get(1, 1), c(1.0, 0.0));
        assert_eq!(b.get(0, 0), c(0.0, 0.0));
        assert_eq!(b.get(1, 0), c(0.0, 0.0));
    }

    #[test]
    fn outer_matches_elementwise_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = random_vec(&mut rng, 4);
        let a = outer(&h);
        for i in 0..4 {
            for j in 0..4 {
                let expect = h[i] * h[j].conj();
                assert!((a.get(i, j) - expect).norm() < 1e-15);
            }
        }
        assert_eq!(a.max_asymmetry(), 0.0);
    }

    #[test]
    fn quad_form_trivial_cases() {
        let w = DVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(quad_form(&w, &HermitianMat::identity(2)).unwrap(), 1.0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = DVector::from_vec(vec![c(s, 0.0), c(s, 0.0)]);
        assert_eq!(quad_form(&w, &HermitianMat::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn quad_form_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_psd(&mut rng, 4, 3);
        let w = random_vec(&mut rng, 4);
        let mut direct = c(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                direct += w[i].conj() * a.get(i, j) * w[j];
            }
        }
        let q = quad_form(&w, &a).unwrap();
        assert!((q - direct.re).abs() < 1e-13);
        assert!(direct.im.abs() < 1e-13);
        assert!(q >= 0.0);
    }

    #[test]
    fn quad_form_dimension_mismatch() {
        let w = DVector::from_vec(vec![c(1.0, 0.0)]);
        assert!(matches!(
            quad_form(&w, &HermitianMat::identity(2)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn pinv_of_identity_and_rank_deficient_diagonal() {
        let p = psd_pseudo_inverse(&HermitianMat::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert!(max_abs(&(p.as_matrix() - DMatrix::<C64>::identity(3, 3))) < 1e-14);

        let d = HermitianMat::from_matrix(
            DMatrix::from_row_slice(2, 2, &[c(2.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
            0.0,
        )
        .unwrap();
        let p = psd_pseudo_inverse(&d, DEFAULT_RANK_TOL).unwrap();
        assert!((p.get(0, 0) - c(0.5, 0.0)).norm() < 1e-14);
        assert!(p.get(1, 1).norm() < 1e-14);
        assert!(p.get(0, 1).norm() < 1e-14);
    }

    #[test]
    fn pinv_penrose_identities_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let a = random_psd(&mut rng, 4, 2);
        let p = psd_pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        let am = a.as_matrix();
        let pm = p.as_matrix();
        let scale_a = max_abs(am);
        let scale_p = max_abs(pm);
        assert!(max_abs(&(am * pm * am - am)) <= 1e-8 * scale_a);
        assert!(max_abs(&(pm * am * pm - pm)) <= 1e-8 * scale_p);
        let ap = am * pm;
        let pa = pm * am;
        assert!(max_abs(&(ap.adjoint() - &ap)) <= 1e-8);
        assert!(max_abs(&(pa.adjoint() - &pa)) <= 1e-8);
        assert_eq!(p.max_asymmetry(), 0.0);
    }

    #[test]
    fn pinv_is_inverse_for_positive_definite() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_psd(&mut rng, 5, 8).shifted(0.05);
        let p = psd_pseudo_inverse(&a, DEFAULT_RANK_TOL).unwrap();
        let prod = a.as_matrix() * p.as_matrix();
        assert!(max_abs(&(prod - DMatrix::<C64>::identity(5, 5))) <= 1e-8);
    }

    #[test]
    fn pinv_rejects_bad_input() {
        let mut bad = DMatrix::<C64>::identity(2, 2);
        bad[(0, 1)] = c(1.0, 0.0);
        assert!(matches!(
            HermitianMat::from_matrix(bad, 1e-12),
            Err(Error::NotHermitian { .. })
        ));
        let mut nan = DMatrix::<C64>::identity(2, 2);
        nan[(1, 1)] = c(f64::NAN, 0.0);
        assert!(matches!(
            HermitianMat::from_matrix(nan, 1e-12),
            Err(Error::NonFinite)
        ));
        let h = DVector::from_vec(vec![c(f64::INFINITY, 0.0), c(1.0, 0.0)]);
        assert!(matches!(
            psd_pseudo_inverse(&outer(&h), DEFAULT_RANK_TOL),
            Err(Error::NonFinite)
        ));
        let neg = HermitianMat::identity(2).scaled(-1.0);
        assert!(matches!(
            psd_pseudo_inverse(&neg, DEFAULT_RANK_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn shifted_pinv_application_matches_explicit_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_psd(&mut rng, 4, 2);
        let v = random_vec(&mut rng, 4);
        let eig = a.eigen().unwrap();
        let fast = eig.apply_shifted_pinv(&v, 0.3, DEFAULT_RANK_TOL);
        let slow = psd_pseudo_inverse(&a.shifted(0.3), DEFAULT_RANK_TOL)
            .unwrap()
            .mul_vec(&v);
        assert!((fast - slow).norm() < 1e-12);
    }
}
