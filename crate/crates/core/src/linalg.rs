//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
pub fn sym_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Singular values in descending order.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn rank_from_singular_values(s: &[f64], rel_tol: f64) -> usize {
    match s.first() {
        Some(&top) if top > 0.0 => s.iter().filter(|&&v| v > rel_tol * top).count(),
        _ => 0,
    }
}

/// Thin SVD with singular triplets sorted by decreasing singular value.
pub struct SortedSvd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd_sorted(a: &DMatrix<f64>) -> SortedSvd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return SortedSvd { u: DMatrix::zeros(m, 0), s: Vec::new(), v: DMatrix::zeros(n, 0) };
    }
    let svd = a.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut us = DMatrix::zeros(m, k);
    let mut vs = DMatrix::zeros(n, k);
    let mut s = Vec::with_capacity(k);
    for (c, &i) in order.iter().enumerate() {
        us.set_column(c, &u.column(i));
        vs.set_column(c, &vt.row(i).transpose());
        s.push(svd.singular_values[i]);
    }
    SortedSvd { u: us, s, v: vs }
}

/// Orthonormal basis of the right kernel of `a`, using a relative rank threshold.
pub fn null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = svd_sorted(a);
    let rank = rank_from_singular_values(&svd.s, rel_tol);
    if rank == n {
        return DMatrix::zeros(n, 0);
    }
    let row_space = svd.v.columns(0, rank).into_owned();
    // eigenvalues of the complementary projector are exactly 0 or 1
    let projector = DMatrix::identity(n, n) - &row_space * row_space.transpose();
    let (vals, vecs) = sym_eigen(&projector);
    let dim = vals.iter().filter(|&&v| v > 0.5).count();
    vecs.columns(0, dim).into_owned()
}

/// Minimum-norm least-squares solution of `a x = b` (column-wise for matrix `b`).
pub fn lstsq(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = svd_sorted(a);
    let rank = rank_from_singular_values(&svd.s, rel_tol);
    let mut x = DMatrix::zeros(a.ncols(), b.ncols());
    for k in 0..rank {
        let coeff = svd.u.column(k).transpose() * b / svd.s[k];
        x += svd.v.column(k) * coeff;
    }
    x
}

/// Moore-Penrose pseudo-inverse with a relative singular value cutoff.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    lstsq(a, &DMatrix::identity(a.nrows(), a.nrows()), rel_tol)
}

pub fn lstsq_vec(a: &DMatrix<f64>, b: &DVector<f64>, rel_tol: f64) -> DVector<f64> {
    let bm = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = lstsq(a, &bm, rel_tol);
    DVector::from_column_slice(x.as_slice())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    symmetrize(a).symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_abs_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    symmetrize(a).symmetric_eigenvalues().iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Trace inner product `<A, B> = tr(A^T B)`.
pub fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Rows chosen greedily by column-pivoted Gram-Schmidt among `candidates`,
/// returning the indices of `count` well-conditioned rows of `a`.
pub fn pivoted_rows(a: &DMatrix<f64>, candidates: &[usize], count: usize) -> Vec<usize> {
    let mut rows: Vec<DVector<f64>> =
        candidates.iter().map(|&i| a.row(i).transpose().into_owned()).collect();
    let mut chosen = Vec::with_capacity(count);
    let mut used = vec![false; rows.len()];
    for _ in 0..count.min(rows.len()) {
        let (best, _) = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, r)| (i, r.norm()))
            .fold((usize::MAX, -1.0), |acc, (i, nrm)| if nrm > acc.1 { (i, nrm) } else { acc });
        if best == usize::MAX {
            break;
        }
        used[best] = true;
        chosen.push(candidates[best]);
        let q = rows[best].normalize();
        for (i, r) in rows.iter_mut().enumerate() {
            if !used[i] {
                let proj = q.dot(r);
                r.axpy(-proj, &q, 1.0);
            }
        }
    }
    chosen
}

/// Largest step `alpha` with `x + alpha * dx` positive semidefinite, for `x` positive definite.
/// Returns `f64::INFINITY` when the direction never leaves the cone.
pub fn max_psd_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let Some(chol) = x.clone().cholesky() else {
        return 0.0;
    };
    let l = chol.l();
    // W = L^{-1} dX L^{-T}
    let Some(linv_dx) = l.solve_lower_triangular(dx) else {
        return 0.0;
    };
    let Some(w) = l.solve_lower_triangular(&linv_dx.transpose()) else {
        return 0.0;
    };
    let lmin = min_eigenvalue(&w);
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

/// Row-major nested vectors.
pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// `serialize_with` helpers writing matrices as arrays of rows.
pub mod as_rows {
    use nalgebra::DMatrix;
    use serde::{Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, ser: S) -> Result<S::Ok, S::Error> {
        super::rows_of(m).serialize(ser)
    }

    pub fn option<S: Serializer>(m: &Option<DMatrix<f64>>, ser: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(super::rows_of).serialize(ser)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let k = null_space(&a, 1e-12);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).norm() < 1e-14);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn lstsq_min_norm() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DMatrix::from_row_slice(1, 1, &[2.0]);
        let x = lstsq(&a, &b, 1e-12);
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14 && (x[(1, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn psd_step() {
        let x = DMatrix::identity(2, 2);
        let dx = DMatrix::from_diagonal(&DVector::from_vec(vec![-2.0, 1.0]));
        assert!((max_psd_step(&x, &dx) - 0.5).abs() < 1e-14);
        assert!(max_psd_step(&x, &DMatrix::identity(2, 2)).is_infinite());
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let (v, _) = sym_eigen(&a);
        assert_eq!(v, vec![3.0, 1.0]);
    }
}
