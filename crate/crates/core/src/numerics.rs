//! Dense numerical kernels: thin SVD, SPD factorization, general solves and
//! 2-norm condition numbers.
//!
//! Everything in the solver stack is dense; subdomain operators top out in the
//! low thousands of rows, so no sparse machinery is used anywhere. SVD and LU
//! are delegated to nalgebra. The Cholesky factorization is implemented here
//! because failure diagnostics need the index of the offending pivot, which is
//! how trace-incompatible multiplier spaces are detected downstream.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check before SPD factorization.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Absolute floor under which a singular value makes `cond2` report infinity.
pub const SINGULAR_FLOOR: f64 = 1e-300;

/// Relative threshold below which singular values count as zero for rank
/// decisions.
pub const RANK_TOL: f64 = 1e-12;

/// Thin singular value decomposition `A = U diag(sigma) V^T` with singular
/// values sorted in descending order.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left singular vectors, `m x k` with `k = min(m, n)`.
    pub u: DMatrix<f64>,
    /// Singular values, descending, length `k`.
    pub sigma: DVector<f64>,
    /// Right singular vectors, `n x k`.
    pub v: DMatrix<f64>,
}

impl SvdResult {
    /// Reconstructs `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.sigma[j];
        }
        &us * self.v.transpose()
    }

    /// Number of singular values above `RANK_TOL * sigma_max`.
    pub fn rank(&self) -> usize {
        if self.sigma.is_empty() {
            return 0;
        }
        let cut = RANK_TOL * self.sigma[0];
        self.sigma.iter().filter(|&&s| s > cut).count()
    }
}

/// Computes the thin SVD of `a` with singular values sorted descending.
pub fn svd_thin(a: &DMatrix<f64>) -> Result<SvdResult> {
    let svd = a
        .clone()
        .try_svd(true, true, f64::EPSILON, 0)
        .ok_or(Error::SvdFailed)?;
    let u = svd.u.ok_or(Error::SvdFailed)?;
    let v_t = svd.v_t.ok_or(Error::SvdFailed)?;
    let sigma = svd.singular_values;

    // nalgebra does not guarantee ordering; sort defensively.
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());

    let k = sigma.len();
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut v_sorted = DMatrix::zeros(v_t.ncols(), k);
    let mut s_sorted = DVector::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        v_sorted.set_column(dst, &v_t.row(src).transpose());
        s_sorted[dst] = sigma[src];
    }
    Ok(SvdResult {
        u: u_sorted,
        sigma: s_sorted,
        v: v_sorted,
    })
}

/// Lower-triangular Cholesky factorization of a symmetric positive definite
/// matrix, `A = L L^T`.
///
/// The input is symmetrized as `(A + A^T)/2` before factoring; asymmetry
/// beyond [`SYMMETRY_TOL`] (relative to the largest entry) is rejected.
#[derive(Debug, Clone)]
pub struct SpdFactorization {
    l: DMatrix<f64>,
}

impl SpdFactorization {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "SPD factorization needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let scale = a.amax().max(f64::MIN_POSITIVE);
        let mut asym = 0.0f64;
        for j in 0..n {
            for i in (j + 1)..n {
                asym = asym.max((a[(i, j)] - a[(j, i)]).abs());
            }
        }
        if asym > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric {
                asym: asym / scale,
                tol: SYMMETRY_TOL,
            });
        }

        let mut l = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                l[(i, j)] = 0.5 * (a[(i, j)] + a[(j, i)]);
            }
        }
        // Right-looking factorization; the inner updates walk columns so the
        // access pattern stays contiguous in nalgebra's column-major storage.
        for j in 0..n {
            let d = l[(j, j)];
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotSpd { index: j, value: d });
            }
            let inv = 1.0 / d.sqrt();
            l[(j, j)] = d.sqrt();
            for i in (j + 1)..n {
                l[(i, j)] *= inv;
            }
            for k in (j + 1)..n {
                let s = l[(k, j)];
                if s != 0.0 {
                    let (col_j, col_k) = col_pair(&mut l, j, k);
                    for i in (k - j)..(n - j) {
                        col_k[i - (k - j)] -= s * col_j[i];
                    }
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                l[(i, j)] = 0.0;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Solves `A x = b` by forward and back substitution.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let mut v = DVector::from_column_slice(col.as_slice());
            self.solve_in_place(&mut v);
            col.copy_from(&v);
        }
        x
    }

    fn solve_in_place(&self, x: &mut DVector<f64>) {
        let n = self.dim();
        let l = &self.l;
        for j in 0..n {
            x[j] /= l[(j, j)];
            let xj = x[j];
            for i in (j + 1)..n {
                x[i] -= l[(i, j)] * xj;
            }
        }
        for j in (0..n).rev() {
            let mut s = x[j];
            for i in (j + 1)..n {
                s -= l[(i, j)] * x[i];
            }
            x[j] = s / l[(j, j)];
        }
    }
}

/// Splits out two disjoint column tails of `m`: `(&m[(j..), j], &mut m[(k..), k])`
/// with `j < k`, for the rank-1 update in the factorization loop.
fn col_pair(m: &mut DMatrix<f64>, j: usize, k: usize) -> (&[f64], &mut [f64]) {
    let n = m.nrows();
    let (left, right) = m.as_mut_slice().split_at_mut(k * n);
    (&left[j * n + j..(j + 1) * n], &mut right[k..n])
}

/// Solves `A x = b` with partial-pivoted LU; `A` need not be symmetric.
pub fn solve_general(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    a.clone().lu().solve(b).ok_or_else(|| Error::SingularSystem {
        cond: cond2(a),
    })
}

/// 2-norm condition number `sigma_max / sigma_min`.
///
/// Returns `+inf` when the smallest singular value drops below
/// [`SINGULAR_FLOOR`], so numerically singular systems are flagged rather
/// than reported with a meaningless huge ratio.
pub fn cond2(a: &DMatrix<f64>) -> f64 {
    let svd = match svd_thin(a) {
        Ok(s) => s,
        Err(_) => return f64::INFINITY,
    };
    if svd.sigma.is_empty() {
        return f64::INFINITY;
    }
    let smax = svd.sigma[0];
    let smin = svd.sigma[svd.sigma.len() - 1];
    if smin < SINGULAR_FLOOR {
        f64::INFINITY
    } else {
        smax / smin
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    fn frob(a: &DMatrix<f64>) -> f64 {
        a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        // Small deterministic LCG; plenty for test fixtures.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        DMatrix::from_fn(rows, cols, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn svd_of_diagonal_is_sorted() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 3.0, 0.0]);
        let svd = svd_thin(&a).unwrap();
        assert!((svd.sigma[0] - 3.0).abs() < TOL);
        assert!((svd.sigma[1] - 2.0).abs() < TOL);
        assert!(frob(&(svd.reconstruct() - &a)) < TOL);
    }

    #[test]
    fn svd_reconstructs_random_matrix() {
        let a = seeded_matrix(10, 4, 7);
        let svd = svd_thin(&a).unwrap();
        assert_eq!(svd.u.shape(), (10, 4));
        assert_eq!(svd.v.shape(), (4, 4));
        let rel = frob(&(svd.reconstruct() - &a)) / frob(&a);
        assert!(rel < TOL, "relative reconstruction error {rel:.3e}");
        let utu = svd.u.transpose() * &svd.u;
        let vtv = svd.v.transpose() * &svd.v;
        assert!(frob(&(utu - DMatrix::identity(4, 4))) < TOL);
        assert!(frob(&(vtv - DMatrix::identity(4, 4))) < TOL);
    }

    #[test]
    fn spd_solve_matches_hand_solution() {
        // A = [[4,2],[2,3]], b = [8,7]  =>  x = [1.25, 1.5]
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let f = SpdFactorization::new(&a).unwrap();
        let x = f.solve(&DVector::from_column_slice(&[8.0, 7.0]));
        assert!((x[0] - 1.25).abs() < TOL);
        assert!((x[1] - 1.5).abs() < TOL);
    }

    #[test]
    fn cholesky_factor_is_lower_with_positive_diagonal() {
        let b = seeded_matrix(8, 8, 3);
        let a = &b * b.transpose() + DMatrix::identity(8, 8) * 8.0 * f64::EPSILON.sqrt();
        let f = SpdFactorization::new(&a).unwrap();
        let l = f.l();
        for j in 0..8 {
            assert!(l[(j, j)] > 0.0);
            for i in 0..j {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
        let rel = frob(&(l * l.transpose() - &a)) / frob(&a);
        assert!(rel < 1e-13, "LL^T mismatch {rel:.3e}");
    }

    #[test]
    fn indefinite_matrix_reports_pivot_index() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match SpdFactorization::new(&a) {
            Err(Error::NotSpd { index, value }) => {
                assert_eq!(index, 1);
                assert!((value - (-3.0)).abs() < TOL);
            }
            other => panic!("expected NotSpd, got {other:?}"),
        }
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        match SpdFactorization::new(&z) {
            Err(Error::NotSpd { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected NotSpd, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_matrix_is_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1e-3, 0.0, 1.0]);
        assert!(matches!(
            SpdFactorization::new(&a),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn cond2_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 2, &[10.0, 0.0, 0.0, 1.0]);
        assert!((cond2(&a) - 10.0).abs() < 1e-10);
    }

    #[test]
    fn cond2_flags_exactly_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(cond2(&a), f64::INFINITY);
    }

    #[test]
    fn cond2_invariant_under_permutation() {
        let a = seeded_matrix(5, 5, 11);
        let mut p = DMatrix::zeros(5, 5);
        for (i, &j) in [2usize, 0, 4, 1, 3].iter().enumerate() {
            p[(i, j)] = 1.0;
        }
        let c0 = cond2(&a);
        let c1 = cond2(&(&p * &a));
        assert!((c0 - c1).abs() < 1e-8 * c0);
    }

    #[test]
    fn solve_general_reports_singularity_with_cond() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_column_slice(&[1.0, 2.0]);
        match solve_general(&a, &b) {
            Err(Error::SingularSystem { cond }) => assert!(cond > 1e12),
            other => panic!("expected SingularSystem, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn svd_invariants_hold(rows in 1usize..12, cols in 1usize..12, seed in 0u64..500) {
            let a = seeded_matrix(rows, cols, seed);
            let svd = svd_thin(&a).unwrap();
            let k = rows.min(cols);
            prop_assert_eq!(svd.u.shape(), (rows, k));
            prop_assert_eq!(svd.v.shape(), (cols, k));
            for i in 1..k {
                prop_assert!(svd.sigma[i] <= svd.sigma[i - 1] + TOL);
            }
            // nalgebra's bidiagonal iteration can stall near 1e-10 relative
            // accuracy when singular values cluster, so the reconstruction
            // bound is looser than machine precision.
            let scale = frob(&a).max(1.0);
            prop_assert!(frob(&(svd.reconstruct() - &a)) < 1e-8 * scale);
        }

        #[test]
        fn spd_solve_inverts_multiplication(n in 1usize..10, seed in 0u64..500) {
            let b = seeded_matrix(n, n, seed);
            let a = &b * b.transpose() + DMatrix::identity(n, n) * (n as f64);
            let f = SpdFactorization::new(&a).unwrap();
            let x = seeded_matrix(n, 1, seed ^ 0xabcd).column(0).into_owned();
            let r = f.solve(&(&a * &x)) - &x;
            prop_assert!(r.amax() < 200.0 * f64::EPSILON * (1.0 + x.amax()) * cond2(&a));
        }
    }
}
