//! Dense matrix primitives shared by the rest of the crate.
//!
//! Matrices are plain [`nalgebra::DMatrix<f64>`] values. The helpers here add
//! the pieces the stability machinery needs on top of that: validated
//! constructors that refuse non-finite entries, the Kronecker product, a
//! symmetric wrapper type, ascending symmetric eigenvalues and SPD solves.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense real matrix.
pub type Mat = DMatrix<f64>;

/// Absolute tolerance used when a caller hands us a matrix that should be
/// symmetric. Anything beyond this is treated as a modelling error.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Builds a matrix from row-major entries, rejecting NaN/Inf and size mismatches.
pub fn mat_from_row_major(rows: usize, cols: usize, entries: &[f64]) -> Result<Mat> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!("empty matrix {rows}x{cols}")));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Dimension(format!("{rows}x{cols} overflows usize")))?;
    if entries.len() != len {
        return Err(Error::Dimension(format!(
            "expected {len} entries for a {rows}x{cols} matrix, got {}",
            entries.len()
        )));
    }
    ensure_finite_slice(entries)?;
    Ok(DMatrix::from_row_slice(rows, cols, entries))
}

/// Builds a matrix from a list of rows.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Dimension("ragged rows".into()));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    mat_from_row_major(rows.len(), cols, &flat)
}

/// Returns the rows of `m` as nested vectors (row-major order).
pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn ensure_finite(m: &Mat) -> Result<()> {
    ensure_finite_slice(m.as_slice())
}

fn ensure_finite_slice(entries: &[f64]) -> Result<()> {
    match entries.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("entry {i} is {}", entries[i]))),
        None => Ok(()),
    }
}

/// Kronecker product: block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Result<Mat> {
    let rows = a.nrows().checked_mul(b.nrows());
    let cols = a.ncols().checked_mul(b.ncols());
    let (Some(rows), Some(cols)) = (rows, cols) else {
        return Err(Error::Dimension("kronecker dimensions overflow usize".into()));
    };
    rows.checked_mul(cols)
        .ok_or_else(|| Error::Dimension("kronecker size overflows usize".into()))?;
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(rows, cols);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut blk = out.view_mut((i * br, j * bc), (br, bc));
            blk.zip_apply(b, |o, v| *o = s * v);
        }
    }
    Ok(out)
}

/// `m + mᵀ`, the symmetrisation convention used throughout the crate.
pub fn sym(m: &Mat) -> Mat {
    m + m.transpose()
}

/// `(m + mᵀ) / 2`.
pub fn sym_part(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Square matrix whose entries are exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(Mat);

impl SymMat {
    /// Accepts `m` if it is square and symmetric within [`SYMMETRY_TOL`]
    /// (relative to its largest entry); the stored value is the exact
    /// symmetric part.
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        ensure_finite(&m)?;
        let scale = m.amax().max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self(sym_part(&m)))
    }

    /// Symmetrises any square matrix.
    pub fn symmetrize(m: &Mat) -> Result<Self> {
        if !m.is_square() || m.nrows() == 0 {
            return Err(Error::Dimension("symmetrize needs a square matrix".into()));
        }
        ensure_finite(m)?;
        Ok(Self(sym_part(m)))
    }

    pub fn identity(dim: usize) -> Self {
        Self(Mat::identity(dim, dim))
    }

    pub fn from_diagonal(d: &[f64]) -> Result<Self> {
        ensure_finite_slice(d)?;
        Ok(Self(Mat::from_diagonal(&nalgebra::DVector::from_column_slice(d))))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }
}

/// Upper bound on QR sweeps handed to the eigen solver before giving up.
const EIG_MAX_ITER: usize = 10_000;

/// Eigenvalues of a symmetric matrix in ascending order.
///
/// Backed by nalgebra's Householder tridiagonalisation followed by implicit
/// symmetric QR sweeps.
pub fn eig_sym(s: &SymMat) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::try_new(s.0.clone(), f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence("symmetric eigenvalue iteration"))?;
    let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::NoConvergence("symmetric eigenvalues not finite"));
    }
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eig(m: &Mat) -> Result<f64> {
    let s = SymMat::symmetrize(m)?;
    Ok(eig_sym(&s)?[0])
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_eig(m: &Mat) -> Result<f64> {
    let s = SymMat::symmetrize(m)?;
    Ok(*eig_sym(&s)?.last().expect("nonempty"))
}

/// Solves `s · X = rhs` for symmetric positive definite `s` via Cholesky.
pub fn solve_spd(s: &SymMat, rhs: &Mat) -> Result<Mat> {
    if rhs.nrows() != s.dim() {
        return Err(Error::Dimension(format!(
            "rhs has {} rows, matrix is {}x{}",
            rhs.nrows(),
            s.dim(),
            s.dim()
        )));
    }
    let chol = Cholesky::new(s.0.clone()).ok_or(Error::NotPositiveDefinite)?;
    let x = chol.solve(rhs);
    ensure_finite(&x)?;
    Ok(x)
}

/// Inverse of an SPD matrix.
pub fn inv_spd(s: &SymMat) -> Result<SymMat> {
    let inv = solve_spd(s, &Mat::identity(s.dim(), s.dim()))?;
    SymMat::symmetrize(&inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn a1() -> Mat {
        mat_from_rows(&[vec![0.0, 1.0], vec![-2.0, -1.0]]).unwrap()
    }

    #[test]
    fn kron_identity_factor() {
        let b = mat_from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        assert_eq!(kron(&Mat::identity(1, 1), &b).unwrap(), b);
    }

    #[test]
    fn kron_identity_is_block_diagonal() {
        let k = kron(&Mat::identity(2, 2), &a1()).unwrap();
        assert_eq!(k.shape(), (4, 4));
        assert_eq!(k.view((0, 0), (2, 2)), a1());
        assert_eq!(k.view((2, 2), (2, 2)), a1());
        assert_eq!(k.view((0, 2), (2, 2)).amax(), 0.0);
        assert_eq!(k.view((2, 0), (2, 2)).amax(), 0.0);
    }

    #[test]
    fn kron_jacobian_vertex_by_identity() {
        let j2 = mat_from_rows(&[vec![0.5, 0.0], vec![-0.5, 0.0]]).unwrap();
        let k = kron(&j2, &Mat::identity(2, 2)).unwrap();
        #[rustfmt::skip]
        let expected = mat_from_row_major(4, 4, &[
            0.5, 0.0, 0.0, 0.0,
            0.0, 0.5, 0.0, 0.0,
            -0.5, 0.0, 0.0, 0.0,
            0.0, -0.5, 0.0, 0.0,
        ]).unwrap();
        assert_eq!(k, expected);
    }

    #[test]
    fn constructors_reject_non_finite() {
        assert!(matches!(
            mat_from_row_major(1, 2, &[1.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(mat_from_row_major(2, 2, &[1.0; 3]).is_err());
        assert!(SymMat::new(a1()).is_err());
    }

    #[test]
    fn eig_examples() {
        assert_eq!(eig_sym(&SymMat::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
        let d = SymMat::from_diagonal(&[2.0, -3.0]).unwrap();
        assert_eq!(eig_sym(&d).unwrap(), vec![-3.0, 2.0]);
        let s = SymMat::symmetrize(&a1()).unwrap();
        let e = eig_sym(&s).unwrap();
        let r2 = 2f64.sqrt();
        assert_relative_eq!(e[0], (-1.0 - r2) / 2.0, max_relative = 1e-12);
        assert_relative_eq!(e[1], (-1.0 + r2) / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn solve_spd_examples() {
        let b = mat_from_row_major(2, 1, &[3.0, -7.0]).unwrap();
        assert_eq!(solve_spd(&SymMat::identity(2), &b).unwrap(), b);
        let d = SymMat::from_diagonal(&[2.0, 4.0]).unwrap();
        let x = solve_spd(&d, &mat_from_row_major(2, 1, &[1.0, 1.0]).unwrap()).unwrap();
        assert_relative_eq!(x[0], 0.5);
        assert_relative_eq!(x[1], 0.25);
        let indefinite = SymMat::from_diagonal(&[1.0, -1.0]).unwrap();
        assert!(matches!(solve_spd(&indefinite, &b), Err(Error::NotPositiveDefinite)));
    }

    fn mat_strategy(r: usize, c: usize) -> impl Strategy<Value = Mat> {
        proptest::collection::vec(-3.0..3.0f64, r * c).prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    }

    fn random_orthogonal(seed: &[f64], n: usize) -> Mat {
        DMatrix::from_row_slice(n, n, seed).qr().q()
    }

    proptest! {
        #[test]
        fn kron_mixed_product(a in mat_strategy(2, 3), b in mat_strategy(3, 2),
                              c in mat_strategy(3, 2), d in mat_strategy(2, 4)) {
            let lhs = kron(&a, &b).unwrap() * kron(&c, &d).unwrap();
            let rhs = kron(&(&a * &c), &(&b * &d)).unwrap();
            prop_assert!((lhs - &rhs).amax() <= 1e-10 * rhs.amax().max(1.0));
        }

        #[test]
        fn eig_sum_is_trace(m in mat_strategy(5, 5)) {
            let s = SymMat::symmetrize(&m).unwrap();
            let tr = s.as_mat().trace();
            let sum: f64 = eig_sym(&s).unwrap().iter().sum();
            prop_assert!((sum - tr).abs() <= 1e-9 * tr.abs().max(1.0));
        }

        #[test]
        fn eig_recovers_spectrum(seed in proptest::collection::vec(-1.0..1.0f64, 16),
                                 diag in proptest::collection::vec(-10.0..10.0f64, 4)) {
            let q = random_orthogonal(&seed, 4);
            let d = Mat::from_diagonal(&nalgebra::DVector::from_column_slice(&diag));
            let s = SymMat::symmetrize(&(&q * d * q.transpose())).unwrap();
            let mut want = diag.clone();
            want.sort_by(f64::total_cmp);
            let got = eig_sym(&s).unwrap();
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-8);
            }
        }

        #[test]
        fn solve_spd_residual(m in mat_strategy(4, 4)) {
            let p = SymMat::symmetrize(&(&m * m.transpose() + Mat::identity(4, 4))).unwrap();
            let rhs = Mat::identity(4, 1);
            let x = solve_spd(&p, &rhs).unwrap();
            let resid = (p.as_mat() * &x - &rhs).norm();
            prop_assert!(resid <= 1e-10 * rhs.norm());
        }
    }
}
