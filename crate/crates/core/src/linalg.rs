//! Small dense helpers shared by the filter, the smoother and the M-step.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::Scalar;

/// Eigenvalues below this fraction of the spectral norm are treated as zero.
pub const PINV_RELATIVE_CUT: f64 = 1e-12;

/// `(M + M*) / 2`, in place.
pub fn symmetrize<T: Scalar>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = T::lit(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn symmetrized<T: Scalar>(mut m: DMatrix<T>) -> DMatrix<T> {
    symmetrize(&mut m);
    m
}

/// Inverse of a symmetric positive semi-definite matrix.
///
/// Uses a Cholesky factorisation when the matrix is well conditioned and a
/// Moore–Penrose pseudo-inverse built from the eigendecomposition otherwise.
#[derive(Clone, Debug)]
pub enum PsdInverse<T: Scalar> {
    Cholesky(Cholesky<T, Dyn>),
    Pseudo {
        pinv: DMatrix<T>,
        /// Product of the retained eigenvalues.
        log_pdet: T,
        rank: usize,
    },
}

impl<T: Scalar> PsdInverse<T> {
    pub fn new(h: &DMatrix<T>) -> Self {
        let n = h.nrows();
        debug_assert_eq!(n, h.ncols());
        if n == 1 {
            let v = h[(0, 0)];
            if v > T::zero() {
                if let Some(c) = Cholesky::new(h.clone()) {
                    return PsdInverse::Cholesky(c);
                }
            }
            return PsdInverse::Pseudo {
                pinv: DMatrix::zeros(1, 1),
                log_pdet: T::zero(),
                rank: 0,
            };
        }
        let eig = h.clone().symmetric_eigen();
        let norm = eig
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, &l| acc.max(l.abs()));
        let cut = norm * T::lit(PINV_RELATIVE_CUT);
        let min = eig
            .eigenvalues
            .iter()
            .fold(T::max_value().unwrap(), |acc, &l| acc.min(l));
        if min > cut && min > T::zero() {
            if let Some(c) = Cholesky::new(h.clone()) {
                return PsdInverse::Cholesky(c);
            }
        }
        let mut pinv = DMatrix::zeros(n, n);
        let mut log_pdet = T::zero();
        let mut rank = 0;
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > cut && l > T::zero() {
                let v = eig.eigenvectors.column(i);
                pinv += v * v.transpose() * (T::one() / l);
                log_pdet += l.ln();
                rank += 1;
            }
        }
        PsdInverse::Pseudo {
            pinv,
            log_pdet,
            rank,
        }
    }

    pub fn is_pseudo(&self) -> bool {
        matches!(self, PsdInverse::Pseudo { .. })
    }

    /// `H^{-1} B` (or `H^+ B`).
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        match self {
            PsdInverse::Cholesky(c) => c.solve(b),
            PsdInverse::Pseudo { pinv, .. } => pinv * b,
        }
    }

    pub fn inverse(&self) -> DMatrix<T> {
        match self {
            PsdInverse::Cholesky(c) => c.inverse(),
            PsdInverse::Pseudo { pinv, .. } => pinv.clone(),
        }
    }

    /// `ln |H|`; `None` when the matrix was rank deficient.
    pub fn log_det(&self) -> Option<T> {
        match self {
            PsdInverse::Cholesky(c) => {
                let l = c.l_dirty();
                let mut s = T::zero();
                for i in 0..l.nrows() {
                    s += l[(i, i)].ln();
                }
                Some(s + s)
            }
            PsdInverse::Pseudo { .. } => None,
        }
    }
}

/// Right division `B H^{-1}` for symmetric `H`, i.e. `(H^{-1} B*)*`.
pub fn right_solve<T: Scalar>(b: &DMatrix<T>, h: &PsdInverse<T>) -> DMatrix<T> {
    h.solve(&b.transpose()).transpose()
}

/// Raises every eigenvalue of a symmetric matrix to at least `floor`.
pub fn floor_eigenvalues<T: Scalar>(m: &DMatrix<T>, floor: T) -> DMatrix<T> {
    let n = m.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, m[(0, 0)].max(floor));
    }
    let eig = symmetrized(m.clone()).symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return symmetrized(m.clone());
    }
    let mut out = DMatrix::zeros(n, n);
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        out += v * v.transpose() * l.max(floor);
    }
    symmetrized(out)
}

/// Largest absolute eigenvalue of a symmetric matrix.
pub fn spectral_norm_sym<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    symmetrized(m.clone())
        .symmetric_eigenvalues()
        .iter()
        .fold(T::zero(), |acc, &l| acc.max(l.abs()))
}

pub fn min_eigenvalue_sym<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 1 {
        return m[(0, 0)];
    }
    symmetrized(m.clone())
        .symmetric_eigenvalues()
        .iter()
        .fold(T::max_value().unwrap(), |acc, &l| acc.min(l))
}

/// Symmetric to `rel_tol` (relative to the largest entry) with no eigenvalue
/// below `-rel_tol * ||M||`.
pub fn is_symmetric_psd<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(T::one(), |acc, &v| acc.max(v.abs()));
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    let norm = spectral_norm_sym(m);
    min_eigenvalue_sym(m) >= -rel_tol * norm.max(T::one())
        && m.iter().all(|v| v.is_finite())
}
