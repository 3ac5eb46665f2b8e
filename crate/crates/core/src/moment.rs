//! Moment and Vandermonde matrices, flat extensions, kernel bases and point
//! extraction.
//!
//! Moment matrices of points with large coordinates have entries spanning
//! many orders of magnitude. Rank decisions and point extraction therefore run
//! on the normalized matrix of the points divided by a power of two
//! ([`MomentMatrix::normalized`]), which is an exact diagonal congruence.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GramianError, Result};
use crate::linalg;
use crate::monomial::{MonomialBasis, MultiIndex};
use crate::poly::{moments_from_decomposition, Decomposition, MomentSequence};

/// Default relative threshold for kernel and rank computations on exact data.
pub const DEFAULT_KERNEL_TOL: f64 = 1e-9;

/// Symmetric matrix `[m_{b + b'}]` indexed by all monomials of degree at most `degree`.
#[derive(Clone, Debug)]
pub struct MomentMatrix {
    degree: u32,
    basis: MonomialBasis,
    matrix: DMatrix<f64>,
    moments: MomentSequence,
}

impl MomentMatrix {
    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn moments(&self) -> &MomentSequence {
        &self.moments
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    /// Reads a moment matrix off a symmetric matrix by averaging each class of
    /// entries sharing the same exponent sum. Returns the matrix rebuilt from
    /// the averaged moments and the largest relative deviation
    /// `|x - mean| / (1 + |mean|)` found inside a class.
    pub fn from_matrix(x: &DMatrix<f64>, n: usize, degree: u32) -> Result<(MomentMatrix, f64)> {
        let basis = MonomialBasis::new(n, degree);
        if x.nrows() != basis.len() || x.ncols() != basis.len() {
            return Err(GramianError::DimensionMismatch(format!(
                "matrix is {}x{}, basis has {} monomials",
                x.nrows(),
                x.ncols(),
                basis.len()
            )));
        }
        let mbasis = MonomialBasis::new(n, 2 * degree);
        let mut sums = vec![0.0; mbasis.len()];
        let mut counts = vec![0usize; mbasis.len()];
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let k = mbasis.position(&basis.get(i).add(basis.get(j))).expect("in range");
                sums[k] += x[(i, j)];
                counts[k] += 1;
            }
        }
        let values: Vec<f64> = sums.iter().zip(&counts).map(|(s, c)| s / *c as f64).collect();
        let mut spread = 0.0f64;
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let k = mbasis.position(&basis.get(i).add(basis.get(j))).expect("in range");
                spread = spread.max((x[(i, j)] - values[k]).abs() / (1.0 + values[k].abs()));
            }
        }
        let moments = MomentSequence::new(mbasis, values)?;
        Ok((build_moment_matrix(&moments, degree)?, spread))
    }

    /// The moment matrix of the points divided by `s`, with `s` the natural
    /// power-of-two scale of the moments. Returns `(normalized, s)`.
    pub fn normalized(&self) -> (MomentMatrix, f64) {
        let s = self.moments.natural_scale();
        (self.rescaled(1.0 / s), s)
    }

    /// Moment matrix of the points multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> MomentMatrix {
        build_moment_matrix(&self.moments.scaled(factor), self.degree).expect("same degree")
    }

    /// Leading principal block indexed by monomials of degree at most `degree`.
    pub fn truncated(&self, degree: u32) -> MomentMatrix {
        build_moment_matrix(&self.moments.truncated(2 * degree), degree.min(self.degree))
            .expect("moments available")
    }
}

/// Assembles `[m_{b + b'}]_{|b|, |b'| <= degree}`.
pub fn build_moment_matrix(m: &MomentSequence, degree: u32) -> Result<MomentMatrix> {
    if m.max_degree() < 2 * degree {
        return Err(GramianError::MissingMoment(2 * degree));
    }
    let basis = MonomialBasis::new(m.nvars(), degree);
    let len = basis.len();
    let mut matrix = DMatrix::zeros(len, len);
    for i in 0..len {
        for j in i..len {
            let v = m.get(&basis.get(i).add(basis.get(j))).expect("degree checked");
            matrix[(i, j)] = v;
            matrix[(j, i)] = v;
        }
    }
    Ok(MomentMatrix { degree, basis, matrix, moments: m.truncated(2 * degree) })
}

/// Rows are points, columns are monomials: entry `(t, b) = z_t^b`.
#[derive(Clone, Debug)]
pub struct VandermondeMatrix {
    basis: MonomialBasis,
    matrix: DMatrix<f64>,
}

impl VandermondeMatrix {
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn degree(&self) -> u32 {
        self.basis.max_degree()
    }

    pub fn npoints(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_vandermonde(points: &[Vec<f64>], degree: u32) -> Result<VandermondeMatrix> {
    let n = points.first().map(Vec::len).ok_or_else(|| {
        GramianError::InvalidArgument("Vandermonde matrix needs at least one point".into())
    })?;
    if n == 0 || points.iter().any(|p| p.len() != n) {
        return Err(GramianError::DimensionMismatch("points differ in dimension".into()));
    }
    let basis = MonomialBasis::new(n, degree);
    let matrix = DMatrix::from_fn(points.len(), basis.len(), |t, b| basis.get(b).eval(&points[t]));
    Ok(VandermondeMatrix { basis, matrix })
}

/// `V^T diag(w) V` for a decomposition.
pub fn vandermonde_moment_matrix(dec: &Decomposition, degree: u32) -> Result<DMatrix<f64>> {
    let v = build_vandermonde(dec.points(), degree)?;
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(dec.weights()));
    Ok(v.matrix.transpose() * w * &v.matrix)
}

/// Moment matrix of degree `degree` of a decomposition.
pub fn moment_matrix_of(dec: &Decomposition, degree: u32) -> MomentMatrix {
    build_moment_matrix(&moments_from_decomposition(dec, 2 * degree), degree)
        .expect("moments computed to 2*degree")
}

/// Numerical rank: the number of singular values above `rel_tol * sigma_1`.
/// Also returns all singular values in descending order.
pub fn numerical_rank(a: &DMatrix<f64>, rel_tol: f64) -> (usize, Vec<f64>) {
    let s = linalg::singular_values(a);
    (linalg::rank_from_singular_values(&s, rel_tol), s)
}

/// Outcome of the flat-extension test.
#[derive(Clone, Debug, PartialEq)]
pub enum FlatExtension {
    Flat { rank: usize },
    NotFlat { rank_low: usize, rank_high: usize, psd: bool },
}

impl FlatExtension {
    pub fn is_flat(&self) -> bool {
        matches!(self, FlatExtension::Flat { .. })
    }
}

/// Tests `rank(M_D) = rank(M_{D+1})` with `M_{D+1}` positive semidefinite.
///
/// Both matrices are compared on a common normalized scale; `rel_tol` governs
/// the rank threshold, the PSD test `lambda_min >= -rel_tol * lambda_max` and
/// the agreement of the shared block.
pub fn check_flat_extension(
    low: &MomentMatrix,
    high: &MomentMatrix,
    rel_tol: f64,
) -> Result<FlatExtension> {
    if low.basis.nvars() != high.basis.nvars() || high.degree < low.degree {
        return Err(GramianError::DimensionMismatch(format!(
            "cannot extend degree {} to degree {}",
            low.degree, high.degree
        )));
    }
    let s = high.moments.natural_scale();
    let low_n = low.rescaled(1.0 / s);
    let high_n = high.rescaled(1.0 / s);
    let k = low_n.size();
    let shared = high_n.matrix.view((0, 0), (k, k));
    let scale = high_n.matrix.amax().max(f64::MIN_POSITIVE);
    let deviation = (shared - &low_n.matrix).amax() / scale;
    if deviation > rel_tol.max(1e-12) {
        return Err(GramianError::ExtensionMismatch(deviation));
    }
    let (rank_low, _) = numerical_rank(&low_n.matrix, rel_tol);
    let (rank_high, _) = numerical_rank(&high_n.matrix, rel_tol);
    let (eig, _) = linalg::sym_eigen(&high_n.matrix);
    let top = eig.first().copied().unwrap_or(0.0).max(0.0);
    let psd = eig.last().copied().unwrap_or(0.0) >= -rel_tol * top;
    if rank_low == rank_high && psd {
        Ok(FlatExtension::Flat { rank: rank_high })
    } else {
        Ok(FlatExtension::NotFlat { rank_low, rank_high, psd })
    }
}

/// Kernel description of the Vandermonde matrices of `r` points at degrees
/// `d` and `d + 1`.
///
/// `k_next = [[k_d, -f], [0, I]]`; its columns span the kernel of `V_{d+1}`.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    /// `dim R_d x t`, orthonormal columns spanning `Ker(V_d)`.
    pub k_d: DMatrix<f64>,
    /// `dim R_d x s`, minimum-norm solution of `V_d F = W`.
    pub f: DMatrix<f64>,
    /// `N x (N - r)`.
    pub k_next: DMatrix<f64>,
    pub r: usize,
    pub t: usize,
    pub s: usize,
    /// `|V_d K_d| / |V_d|`.
    pub residual_d: f64,
    /// `|V_{d+1} K_{d+1}| / (|V_{d+1}| |K_{d+1}|)`.
    pub residual_next: f64,
}

pub fn kernel_extension(
    v_d: &VandermondeMatrix,
    v_next: &VandermondeMatrix,
    rel_tol: f64,
) -> Result<KernelBasis> {
    let r = v_d.npoints();
    if v_next.npoints() != r || v_next.degree() != v_d.degree() + 1 {
        return Err(GramianError::DimensionMismatch(
            "Vandermonde matrices must share points and differ by one degree".into(),
        ));
    }
    let dim_d = v_d.basis.len();
    let n_next = v_next.basis.len();
    let s = n_next - dim_d;
    if (v_next.matrix.columns(0, dim_d) - &v_d.matrix).amax() > 0.0 {
        return Err(GramianError::DimensionMismatch("lower-degree columns differ".into()));
    }
    let (rank_d, _) = numerical_rank(&v_d.matrix, rel_tol);
    if rank_d < r {
        return Err(GramianError::RankDeficient { rank: rank_d, expected: r });
    }
    let (rank_next, _) = numerical_rank(&v_next.matrix, rel_tol);
    if rank_next > rank_d {
        return Err(GramianError::RankGrowth { low: rank_d, high: rank_next });
    }
    let k_d = linalg::null_space(&v_d.matrix, rel_tol);
    let t = k_d.ncols();
    let w = v_next.matrix.columns(dim_d, s).into_owned();
    let f = linalg::lstsq(&v_d.matrix, &w, rel_tol);

    let mut k_next = DMatrix::zeros(n_next, t + s);
    k_next.view_mut((0, 0), (dim_d, t)).copy_from(&k_d);
    k_next.view_mut((0, t), (dim_d, s)).copy_from(&(-&f));
    k_next.view_mut((dim_d, t), (s, s)).fill_with_identity();

    let residual_d = if t == 0 { 0.0 } else { (&v_d.matrix * &k_d).norm() / v_d.matrix.norm() };
    let residual_next =
        (&v_next.matrix * &k_next).norm() / (v_next.matrix.norm() * k_next.norm().max(1.0));
    Ok(KernelBasis { k_d, f, k_next, r, t, s, residual_d, residual_next })
}

/// Kernel basis of a decomposition's Vandermonde matrices at degrees `d`, `d + 1`.
pub fn kernel_of(dec: &Decomposition, d: u32, rel_tol: f64) -> Result<KernelBasis> {
    let v_d = build_vandermonde(dec.points(), d)?;
    let v_next = build_vandermonde(dec.points(), d + 1)?;
    kernel_extension(&v_d, &v_next, rel_tol)
}

/// Recovers `r` weighted points from a flat positive semidefinite moment matrix.
///
/// Works on the normalized matrix: factors it as `P P^T` with `r` columns,
/// selects `r` well-conditioned rows of degree below the top degree, forms one
/// multiplication matrix per variable and diagonalizes a seeded random
/// combination of them. Weights come from a least-squares fit of the first
/// column of the matrix.
pub fn extract_points(
    m: &MomentMatrix,
    r: usize,
    rel_tol: f64,
    seed: u64,
) -> Result<Decomposition> {
    if m.degree == 0 {
        return Err(GramianError::InvalidArgument("degree-0 matrix has no multiplication structure".into()));
    }
    let (mn, scale) = m.normalized();
    let n = mn.basis.nvars();
    let (eig, vecs) = linalg::sym_eigen(&mn.matrix);
    if r == 0 || r > mn.size() || eig[r - 1] <= rel_tol * eig[0] {
        return Err(GramianError::RankDeficient {
            rank: linalg::rank_from_singular_values(&eig, rel_tol),
            expected: r,
        });
    }
    let mut p = vecs.columns(0, r).into_owned();
    for (k, lam) in eig.iter().take(r).enumerate() {
        p.column_mut(k).scale_mut(lam.sqrt());
    }

    let low_rows: Vec<usize> = (0..mn.basis.prefix_len(m.degree - 1)).collect();
    let chosen = linalg::pivoted_rows(&p, &low_rows, r);
    if chosen.len() < r {
        return Err(GramianError::Extraction("not enough independent low-degree rows".into()));
    }
    let p_b = DMatrix::from_fn(r, r, |i, j| p[(chosen[i], j)]);
    let lu = p_b.clone().lu();
    let mult: Vec<DMatrix<f64>> = (0..n)
        .map(|var| {
            let shift = MultiIndex::unit(n, var);
            let rows = DMatrix::from_fn(r, r, |i, j| {
                let row = mn.basis.position(&mn.basis.get(chosen[i]).add(&shift)).expect("degree <= top");
                p[(row, j)]
            });
            lu.solve(&rows)
                .ok_or_else(|| GramianError::Extraction("singular pivot block".into()))
        })
        .collect::<Result<_>>()?;

    for a in 0..n {
        for b in 0..a {
            let comm = (&mult[a] * &mult[b] - &mult[b] * &mult[a]).norm();
            let size = mult[a].norm() * mult[b].norm();
            if comm > rel_tol.sqrt().max(1e-6) * size.max(f64::MIN_POSITIVE) {
                return Err(GramianError::Extraction(format!(
                    "multiplication matrices do not commute (relative commutator {:.2e})",
                    comm / size
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights_c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 }).collect();
    let combo = mult
        .iter()
        .zip(&weights_c)
        .fold(DMatrix::zeros(r, r), |acc, (mi, c)| acc + mi * *c);
    let complex = combo.complex_eigenvalues();
    let spread = complex.iter().fold(0.0f64, |acc, z| acc.max(z.norm())).max(f64::MIN_POSITIVE);
    if let Some(z) = complex.iter().find(|z| z.im.abs() > 1e-6 * spread) {
        return Err(GramianError::Extraction(format!("complex eigenvalue {z}")));
    }
    let (vals, q) = linalg::sym_eigen(&combo);
    let min_gap = vals.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    if r > 1 && min_gap < 1e-9 * spread {
        return Err(GramianError::Extraction("repeated eigenvalue: defective eigenstructure".into()));
    }

    let points_n: Vec<Vec<f64>> = (0..r)
        .map(|k| {
            let qk = q.column(k);
            mult.iter().map(|mi| (qk.transpose() * mi * qk)[(0, 0)]).collect()
        })
        .collect();

    let v = build_vandermonde(&points_n, m.degree)?;
    let rhs = mn.matrix.column(0).into_owned();
    let lam = linalg::lstsq_vec(&v.matrix.transpose(), &rhs, 1e-13);
    let total: f64 = lam.iter().map(|v| v.abs()).sum();
    if let Some(w) = lam.iter().find(|w| **w <= 1e-12 * total) {
        return Err(GramianError::NegativeWeight(*w));
    }
    let dec_n = Decomposition::new(points_n, lam.iter().copied().collect())
        .map_err(|e| GramianError::Extraction(e.to_string()))?;

    let rebuilt = vandermonde_moment_matrix(&dec_n, m.degree)?;
    let resid = (&rebuilt - &mn.matrix).norm() / mn.matrix.norm();
    let allowed = rel_tol.sqrt().max(1e-6);
    if resid > allowed {
        return Err(GramianError::Extraction(format!(
            "recovered points reproduce the matrix only to {resid:.2e}"
        )));
    }
    Ok(dec_n.scaled(scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(n: usize, vals: &[f64]) -> MomentSequence {
        let deg = (0..).find(|&k| MonomialBasis::new(n, k).len() == vals.len()).unwrap();
        MomentSequence::new(MonomialBasis::new(n, deg), vals.to_vec()).unwrap()
    }

    #[test]
    fn small_moment_matrices() {
        let m = build_moment_matrix(&seq(1, &[1.0, 1.0, 1.0]), 1).unwrap();
        assert_eq!(m.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        let m = build_moment_matrix(&seq(1, &[2.0, 3.0, 5.0]), 1).unwrap();
        assert_eq!(m.matrix(), &DMatrix::from_row_slice(2, 2, &[2.0, 3.0, 3.0, 5.0]));
        let mut corner = vec![0.0; 15];
        corner[0] = 1.0;
        let m = build_moment_matrix(&seq(2, &corner), 2).unwrap();
        assert_eq!(m.matrix().sum(), 1.0);
        assert_eq!(m.matrix()[(0, 0)], 1.0);
        assert!(matches!(
            build_moment_matrix(&seq(1, &[1.0, 1.0, 1.0]), 2),
            Err(GramianError::MissingMoment(4))
        ));
    }

    #[test]
    fn vandermonde_powers() {
        let v = build_vandermonde(&[vec![1.0], vec![2.0]], 1).unwrap();
        assert_eq!(v.matrix(), &DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
        let v = build_vandermonde(&[vec![3.0, -1.0], vec![0.5, 7.0]], 3).unwrap();
        assert!(v.matrix().column(0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn ranks() {
        assert_eq!(numerical_rank(&DMatrix::identity(5, 5), 1e-3).0, 5);
        assert_eq!(numerical_rank(&DMatrix::from_element(2, 2, 1.0), 1e-9).0, 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(3, 3), 1e-9).0, 0);
    }

    #[test]
    fn flat_extension_cases() {
        let m0 = build_moment_matrix(&seq(1, &[2.0]), 0).unwrap();
        let m1 = build_moment_matrix(&seq(1, &[2.0, 3.0, 5.0]), 1).unwrap();
        assert_eq!(
            check_flat_extension(&m0, &m1, 1e-9).unwrap(),
            FlatExtension::NotFlat { rank_low: 1, rank_high: 2, psd: true }
        );
        let one = Decomposition::new(vec![vec![1.0]], vec![1.0]).unwrap();
        let m1 = moment_matrix_of(&one, 1);
        let m2 = moment_matrix_of(&one, 2);
        assert_eq!(check_flat_extension(&m1, &m2, 1e-9).unwrap(), FlatExtension::Flat { rank: 1 });
        let bad = build_moment_matrix(&seq(1, &[1.0, 0.0, 1.0]), 1).unwrap();
        assert!(matches!(
            check_flat_extension(&bad, &m2, 1e-9),
            Err(GramianError::ExtensionMismatch(_))
        ));
    }

    #[test]
    fn kernel_of_two_points() {
        let dec = Decomposition::new(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        let k = kernel_of(&dec, 1, 1e-12).unwrap();
        assert_eq!(k.t, 0);
        assert_eq!(k.k_next.ncols(), 1);
        // x^2 = 3x - 2 on {1, 2}
        assert!((k.f[(0, 0)] + 2.0).abs() < 1e-12);
        assert!((k.f[(1, 0)] - 3.0).abs() < 1e-12);
        assert!(k.residual_next < 1e-14);
    }

    #[test]
    fn kernel_rejects_too_many_points() {
        let dec = Decomposition::with_unit_weights(vec![vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        assert!(matches!(kernel_of(&dec, 1, 1e-12), Err(GramianError::RankDeficient { rank: 2, expected: 3 })));
    }

    #[test]
    fn extracts_one_and_two_points() {
        let one = Decomposition::new(vec![vec![2.0]], vec![1.0]).unwrap();
        let got = extract_points(&moment_matrix_of(&one, 2), 1, 1e-9, 7).unwrap();
        assert!((got.points()[0][0] - 2.0).abs() < 1e-10);
        assert!((got.weights()[0] - 1.0).abs() < 1e-10);

        let two = Decomposition::new(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        let got = extract_points(&moment_matrix_of(&two, 2), 2, 1e-9, 7).unwrap();
        let mut xs: Vec<f64> = got.points().iter().map(|p| p[0]).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] + 1.0).abs() < 1e-10 && (xs[1] - 1.0).abs() < 1e-10);
        assert!(got.weights().iter().all(|w| (w - 1.0).abs() < 1e-10));
    }
}
