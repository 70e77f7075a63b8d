//! Compressed sparse row matrices and a conjugate-gradient solver for the
//! symmetric positive-definite systems produced by the Poisson discretization.
//!
//! The transposed product has its own scatter-based code path so adjoint
//! solves do not depend on symmetry of the stored matrix; `transpose()`
//! exists as an independent oracle for it.

use crate::{Error, Result};
#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Relative residual tolerance used by the forward and derivative solves.
/// Tight enough that finite-difference gradient checks at 1e-5 are not
/// limited by the linear solver.
pub const DEFAULT_REL_TOL: f64 = 1e-12;

/// Euclidean inner product.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Euclidean norm.
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Sparse matrix in compressed sparse row format.
///
/// Within each row, column indices are strictly increasing and duplicate
/// entries have been summed.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        entries: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in entries {
            if r >= n_rows {
                return Err(Error::IndexOutOfRange {
                    what: "row",
                    index: r,
                    size: n_rows,
                });
            }
            if c >= n_cols {
                return Err(Error::IndexOutOfRange {
                    what: "column",
                    index: c,
                    size: n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = entries.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut row_ptr = vec![0usize; n_rows + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        Ok(CsrMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx: merged.iter().map(|&(_, c, _)| c).collect(),
            values: merged.iter().map(|&(_, _, v)| v).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate stored entries of one row as (column, value).
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn row_dot(&self, r: usize, x: &[f64]) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&c, &v)| v * x[c])
            .sum()
    }

    fn check_matvec_dims(&self, x_len: usize, transposed: bool) -> Result<()> {
        let expected = if transposed { self.n_rows } else { self.n_cols };
        if x_len != expected {
            return Err(Error::DimensionMismatch(format!(
                "matvec{}: vector length {} does not match {} of {}x{} matrix",
                if transposed { "_transpose" } else { "" },
                x_len,
                if transposed { "row count" } else { "column count" },
                self.n_rows,
                self.n_cols,
            )));
        }
        Ok(())
    }

    /// `A x`. Dispatches to the parallel path when the `parallel` feature is
    /// enabled; both paths are bit-identical (each row is reduced in index
    /// order).
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_matvec_dims(x.len(), false)?;
        #[cfg(feature = "parallel")]
        {
            Ok(self.matvec_par_unchecked(x))
        }
        #[cfg(not(feature = "parallel"))]
        {
            Ok(self.matvec_seq_unchecked(x))
        }
    }

    /// Sequential `A x`, always available (bench baseline).
    pub fn matvec_seq(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_matvec_dims(x.len(), false)?;
        Ok(self.matvec_seq_unchecked(x))
    }

    fn matvec_seq_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row_dot(r, x)).collect()
    }

    /// Row-parallel `A x`.
    #[cfg(feature = "parallel")]
    pub fn matvec_par(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_matvec_dims(x.len(), false)?;
        Ok(self.matvec_par_unchecked(x))
    }

    #[cfg(feature = "parallel")]
    fn matvec_par_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .into_par_iter()
            .map(|r| self.row_dot(r, x))
            .collect()
    }

    /// `A^T x` via a scatter over stored entries. Kept sequential: the output
    /// accumulation order is then fixed, and the adjoint solve stays
    /// bit-reproducible.
    pub fn matvec_transpose(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_matvec_dims(x.len(), true)?;
        let mut y = vec![0.0; self.n_cols];
        for r in 0..self.n_rows {
            let xr = x[r];
            for (c, v) in self.row(r) {
                y[c] += v * xr;
            }
        }
        Ok(y)
    }

    /// Explicit transpose. Independent oracle for `matvec_transpose`.
    pub fn transpose(&self) -> CsrMatrix {
        let mut entries = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                entries.push((c, r, v));
            }
        }
        CsrMatrix::from_triplets(self.n_cols, self.n_rows, &entries)
            .expect("transpose indices are in range by construction")
    }

    /// Maximum absolute deviation from symmetry, `max |A - A^T|`.
    pub fn asymmetry(&self) -> f64 {
        let t = self.transpose();
        let mut worst = 0.0f64;
        for r in 0..self.n_rows {
            let mut it_a = self.row(r);
            let mut it_t = t.row(r);
            loop {
                match (it_a.next(), it_t.next()) {
                    (None, None) => break,
                    (Some((ca, va)), Some((ct, vt))) if ca == ct => {
                        worst = worst.max((va - vt).abs());
                    }
                    (a, t) => {
                        // structural mismatch: treat the missing side as zero
                        if let Some((_, v)) = a {
                            worst = worst.max(v.abs());
                        }
                        if let Some((_, v)) = t {
                            worst = worst.max(v.abs());
                        }
                    }
                }
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Solve `A x = b` for symmetric positive-definite `A` by conjugate
/// gradients, to `||A x - b|| <= rel_tol * ||b||`.
///
/// SPD is the caller's responsibility; symmetry is checked in debug builds.
/// `b = 0` returns the zero vector immediately.
pub fn cg_solve(a: &CsrMatrix, b: &[f64], rel_tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    debug_assert!(
        a.n_rows() == a.n_cols() && a.asymmetry() <= 1e-10 * (1.0 + a.max_abs()),
        "cg_solve expects a symmetric matrix"
    );
    if b.len() != a.n_rows() {
        return Err(Error::DimensionMismatch(format!(
            "cg_solve: rhs length {} does not match matrix size {}",
            b.len(),
            a.n_rows()
        )));
    }
    cg_driver(|p| a.matvec(p).expect("dimensions checked"), b, rel_tol, max_iter)
}

/// Solve `A^T x = b` with the same conjugate-gradient routine, applying the
/// operator through the transposed product. For the symmetric Jacobians here
/// this is mathematically the same system, but the code path exercises the
/// transpose so the adjoint layer stays correct for general operators.
pub fn cg_solve_transpose(
    a: &CsrMatrix,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    debug_assert!(
        a.n_rows() == a.n_cols() && a.asymmetry() <= 1e-10 * (1.0 + a.max_abs()),
        "cg_solve_transpose expects a symmetric matrix"
    );
    if b.len() != a.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "cg_solve_transpose: rhs length {} does not match matrix size {}",
            b.len(),
            a.n_cols()
        )));
    }
    cg_driver(
        |p| a.matvec_transpose(p).expect("dimensions checked"),
        b,
        rel_tol,
        max_iter,
    )
}

fn cg_driver(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let threshold = rel_tol * b_norm;

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rs = dot(&r, &r);

    for iter in 0..max_iter {
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 || !pap.is_finite() {
            return Err(Error::CgNoConvergence {
                iterations: iter,
                residual: rs.sqrt() / b_norm,
            });
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = dot(&r, &r);
        if rs_new.sqrt() <= threshold {
            // Guard against recurrence drift with one explicit residual.
            let ax = apply(&x);
            let true_res: f64 = (0..n).map(|i| (b[i] - ax[i]).powi(2)).sum::<f64>().sqrt();
            if true_res <= threshold {
                return Ok(x);
            }
            for i in 0..n {
                r[i] = b[i] - ax[i];
            }
            let rs_restart = dot(&r, &r);
            p.copy_from_slice(&r);
            rs = rs_restart;
            continue;
        }
        let beta = rs_new / rs;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rs = rs_new;
    }
    Err(Error::CgNoConvergence {
        iterations: max_iter,
        residual: rs.sqrt() / b_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_from_triplets() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        let x = vec![3.0, -4.0];
        assert_eq!(a.matvec(&x).unwrap(), x);
    }

    #[test]
    fn duplicate_entries_summed() {
        let a = CsrMatrix::from_triplets(1, 1, &[(0, 0, 1.0), (0, 0, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.matvec(&[1.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn empty_matrix_matvec_is_zero() {
        let a = CsrMatrix::from_triplets(3, 3, &[]).unwrap();
        assert_eq!(a.matvec(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn out_of_range_triplet_rejected() {
        assert!(CsrMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
        assert!(CsrMatrix::from_triplets(2, 2, &[(0, 2, 1.0)]).is_err());
    }

    #[test]
    fn hand_product_and_transpose() {
        // A = [[0,1],[0,0]], x = (1,0)
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(a.matvec(&[1.0, 0.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(a.matvec_transpose(&[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn matvec_dimension_mismatch() {
        let a = CsrMatrix::from_triplets(2, 3, &[(0, 0, 1.0)]).unwrap();
        assert!(a.matvec(&[1.0, 2.0]).is_err());
        assert!(a.matvec_transpose(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn cg_identity_single_iteration() {
        let a = CsrMatrix::from_triplets(3, 3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]).unwrap();
        let b = vec![1.0, -2.0, 0.5];
        let x = cg_solve(&a, &b, 1e-12, 10).unwrap();
        for i in 0..3 {
            assert!((x[i] - b[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn cg_two_by_two_closed_form() {
        // [[4,1],[1,3]] x = (1,2) has the exact solution (1/11, 7/11).
        let a = CsrMatrix::from_triplets(
            2,
            2,
            &[(0, 0, 4.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)],
        )
        .unwrap();
        let x = cg_solve(&a, &[1.0, 2.0], 1e-14, 50).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() <= 1e-12);
        assert!((x[1] - 7.0 / 11.0).abs() <= 1e-12);
    }

    #[test]
    fn cg_zero_rhs_returns_zero() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 2.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(cg_solve(&a, &[0.0, 0.0], 1e-12, 1).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1e6)]).unwrap();
        let err = cg_solve(&a, &[1.0, 1.0], 1e-14, 1).unwrap_err();
        match err {
            Error::CgNoConvergence { residual, .. } => assert!(residual > 0.0),
            other => panic!("unexpected error: {other}"),
        }
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n_rows: usize, n_cols: usize) -> CsrMatrix {
        let mut entries = Vec::new();
        for r in 0..n_rows {
            for c in 0..n_cols {
                if rng.gen_bool(0.4) {
                    entries.push((r, c, rng.gen_range(-2.0..2.0)));
                }
            }
        }
        CsrMatrix::from_triplets(n_rows, n_cols, &entries).unwrap()
    }

    #[test]
    fn seq_and_par_matvec_agree_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 40, 40);
        let x: Vec<f64> = (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let seq = a.matvec_seq(&x).unwrap();
        let auto = a.matvec(&x).unwrap();
        assert_eq!(seq, auto);
        #[cfg(feature = "parallel")]
        assert_eq!(seq, a.matvec_par(&x).unwrap());
    }

    proptest! {
        #[test]
        fn transpose_adjoint_identity(seed in 0u64..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_rows = rng.gen_range(1..12);
            let n_cols = rng.gen_range(1..12);
            let a = random_matrix(&mut rng, n_rows, n_cols);
            let x: Vec<f64> = (0..n_cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n_rows).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = dot(&a.matvec(&x).unwrap(), &y);
            let rhs = dot(&x, &a.matvec_transpose(&y).unwrap());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            // scatter path matches the explicit transpose
            let explicit = a.transpose().matvec(&y).unwrap();
            let scattered = a.matvec_transpose(&y).unwrap();
            for i in 0..n_cols {
                prop_assert!((explicit[i] - scattered[i]).abs() <= 1e-14);
            }
        }

        #[test]
        fn cg_residual_contract_on_random_spd(seed in 0u64..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(2..10);
            let b_mat = random_matrix(&mut rng, n, n);
            // SPD as B^T B + I
            let mut entries = Vec::new();
            for r in 0..n {
                for c in 0..n {
                    let col_r: Vec<f64> = (0..n).map(|k| {
                        b_mat.row(k).find(|&(cc, _)| cc == r).map_or(0.0, |(_, v)| v)
                    }).collect();
                    let col_c: Vec<f64> = (0..n).map(|k| {
                        b_mat.row(k).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
                    }).collect();
                    let mut v = dot(&col_r, &col_c);
                    if r == c {
                        v += 1.0;
                    }
                    entries.push((r, c, v));
                }
            }
            let a = CsrMatrix::from_triplets(n, n, &entries).unwrap();
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rel_tol = 1e-11;
            let x = cg_solve(&a, &b, rel_tol, 20 * n).unwrap();
            let ax = a.matvec(&x).unwrap();
            let res: f64 = (0..n).map(|i| (ax[i] - b[i]).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= rel_tol * norm2(&b) * (1.0 + 1e-3));
        }
    }
}
