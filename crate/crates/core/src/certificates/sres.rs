//! Homogeneous forms, subresultant matrices and the kernel-parametrized
//! certificate `S = L L^T` with `L = [K_d g - F; I]`.

use nalgebra::DMatrix;

use super::{finalize, prepare, CertifyOptions, Certificate, CertificateMethod, Representation};
use crate::error::{GramianError, Result};
use crate::linalg;
use crate::monomial::{homogeneous_monomials, MonomialBasis, MultiIndex};
use crate::moment::KernelBasis;
use crate::poly::{Decomposition, Polynomial};

/// Form of degree `degree` in `n` variables; coefficients follow
/// [`homogeneous_monomials`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousForm {
    n: usize,
    degree: u32,
    coeffs: Vec<f64>,
}

impl HomogeneousForm {
    pub fn new(n: usize, degree: u32, coeffs: Vec<f64>) -> Result<Self> {
        let want = homogeneous_monomials(n, degree).len();
        if coeffs.len() != want {
            return Err(GramianError::DimensionMismatch(format!(
                "{} coefficients for {want} monomials of degree {degree}",
                coeffs.len()
            )));
        }
        Ok(HomogeneousForm { n, degree, coeffs })
    }

    /// `c * x^e` summed over the given terms.
    pub fn from_terms(n: usize, degree: u32, terms: &[(MultiIndex, f64)]) -> Result<Self> {
        let monos = homogeneous_monomials(n, degree);
        let mut coeffs = vec![0.0; monos.len()];
        for (e, c) in terms {
            let i = monos.iter().position(|m| m == e).ok_or_else(|| {
                GramianError::InvalidArgument(format!("{e:?} is not of degree {degree}"))
            })?;
            coeffs[i] += c;
        }
        Ok(HomogeneousForm { n, degree, coeffs })
    }

    /// `(sum_i c_i x_i)^degree`.
    pub fn linear_power(c: &[f64], degree: u32) -> Self {
        let n = c.len();
        let lin_coeffs = std::iter::once(0.0).chain(c.iter().copied()).collect();
        let linear = Polynomial::from_coeffs(MonomialBasis::new(n, 1), lin_coeffs).expect("sizes match");
        let mut power = Polynomial::constant(n, 0, 1.0);
        for _ in 0..degree {
            power = power.mul(&linear);
        }
        HomogeneousForm { n, degree, coeffs: power.homogeneous_part(degree).to_vec() }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        homogeneous_monomials(self.n, self.degree).into_iter().zip(self.coeffs.iter().copied())
    }
}

/// Degree-`d` slices of the kernel columns `K_d`.
pub fn top_degree_forms(kernel: &KernelBasis, n: usize, d: u32) -> Result<Vec<HomogeneousForm>> {
    if kernel.t == 0 {
        return Err(GramianError::InvalidArgument(
            "kernel of V_d is trivial, so there are no forms".into(),
        ));
    }
    let basis = MonomialBasis::new(n, d);
    if kernel.k_d.nrows() != basis.len() {
        return Err(GramianError::DimensionMismatch("kernel rows do not match the basis".into()));
    }
    let range = basis.degree_range(d);
    Ok((0..kernel.t)
        .map(|i| HomogeneousForm {
            n,
            degree: d,
            coeffs: range.clone().map(|row| kernel.k_d[(row, i)]).collect(),
        })
        .collect())
}

/// Matrix of the map `(p_1, ..., p_t) -> sum_i p_i h_i` from forms of degree
/// `delta - d` to forms of degree `delta`.
#[derive(Clone, Debug)]
pub struct SresMatrix {
    pub n: usize,
    pub d: u32,
    pub delta: u32,
    /// Rows: degree-`delta` monomials. Columns: `(i, gamma)`, form-major.
    pub matrix: DMatrix<f64>,
}

impl SresMatrix {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        linalg::rank_from_singular_values(&linalg::singular_values(&self.matrix), rel_tol)
    }

    pub fn has_full_row_rank(&self, rel_tol: f64) -> bool {
        self.rank(rel_tol) == self.rows()
    }
}

/// Builds the subresultant matrix by shifting the coefficients of each `h_i`
/// by every monomial of degree `delta - d`.
pub fn build_subresultant(forms: &[HomogeneousForm], delta: u32) -> Result<SresMatrix> {
    let first = forms
        .first()
        .ok_or_else(|| GramianError::InvalidArgument("no forms given".into()))?;
    let (n, d) = (first.n, first.degree);
    if forms.iter().any(|h| h.n != n || h.degree != d) {
        return Err(GramianError::InvalidArgument("forms differ in degree or variables".into()));
    }
    if delta < d {
        return Err(GramianError::DegreeTooLarge { degree: d, bound: delta });
    }
    let rows = homogeneous_monomials(n, delta);
    let row_of: std::collections::HashMap<&MultiIndex, usize> =
        rows.iter().enumerate().map(|(i, m)| (m, i)).collect();
    let shifts = homogeneous_monomials(n, delta - d);
    let mut matrix = DMatrix::zeros(rows.len(), forms.len() * shifts.len());
    for (i, h) in forms.iter().enumerate() {
        for (j, gamma) in shifts.iter().enumerate() {
            for (mono, c) in h.terms() {
                matrix[(row_of[&mono.add(gamma)], i * shifts.len() + j)] += c;
            }
        }
    }
    Ok(SresMatrix { n, d, delta, matrix })
}

/// Linear system `E vec(g) = rhs` whose solutions make the degree-`(2d+1)`
/// coefficients of `sum_j q_j^2` vanish, where
/// `q_j = x^{a_j} + sum_b (K_d g - F)_{b j} x^b` and `a_j` runs over the
/// degree-`(d+1)` monomials. `vec(g)` is kernel-column-major.
///
/// Built by multiplying polynomials; see [`build_subresultant`] for the
/// structured construction of the same matrix.
pub fn kernel_linear_system(kernel: &KernelBasis, n: usize, d: u32) -> (DMatrix<f64>, Vec<f64>) {
    let low = MonomialBasis::new(n, d);
    let tops = homogeneous_monomials(n, d + 1);
    let column_poly = |m: &DMatrix<f64>, c: usize| {
        Polynomial::from_coeffs(low.clone(), m.column(c).iter().copied().collect()).expect("sizes match")
    };
    let monomial = |a: &MultiIndex| Polynomial::from_terms(n, d + 1, &[(a.clone(), 1.0)]).expect("in basis");
    let rows = homogeneous_monomials(n, 2 * d + 1).len();
    let mut e = DMatrix::zeros(rows, kernel.t * tops.len());
    for i in 0..kernel.t {
        let k_i = column_poly(&kernel.k_d, i);
        for (j, a) in tops.iter().enumerate() {
            let prod = monomial(a).mul(&k_i);
            for (row, v) in prod.homogeneous_part(2 * d + 1).iter().enumerate() {
                e[(row, i * tops.len() + j)] = *v;
            }
        }
    }
    let mut rhs = vec![0.0; rows];
    for (j, a) in tops.iter().enumerate() {
        let prod = monomial(a).mul(&column_poly(&kernel.f, j));
        for (acc, v) in rhs.iter_mut().zip(prod.homogeneous_part(2 * d + 1)) {
            *acc += v;
        }
    }
    (e, rhs)
}

/// Looks for a certificate of the assumed form, which exists whenever the
/// degree-`(2d+1)` subresultant of the kernel forms has full row rank.
pub fn certify_sres(dec: &Decomposition, d: u32, opts: &CertifyOptions) -> Result<Certificate> {
    let prep = prepare(dec, d, opts)?;
    let n = dec.nvars();
    let k = &prep.kernel;
    let s_dim = k.s;
    let mut diagnostics = Vec::new();

    let g = if k.t == 0 {
        diagnostics.push("V_d is square: the candidate is fixed with no unknowns".into());
        DMatrix::zeros(0, s_dim)
    } else {
        let forms = top_degree_forms(k, n, d)?;
        let sres = build_subresultant(&forms, 2 * d + 1)?;
        let rank = sres.rank(opts.kernel_tol);
        diagnostics.push(format!(
            "subresultant of degree {} is {}x{} with rank {rank}",
            2 * d + 1,
            sres.rows(),
            sres.cols()
        ));
        let (e, rhs) = kernel_linear_system(k, n, d);
        let mismatch = (&e - &sres.matrix).amax();
        if mismatch > 1e-12 * e.amax().max(1.0) {
            return Err(GramianError::Solver(format!(
                "linear system and subresultant disagree by {mismatch:e}"
            )));
        }
        let rhs = nalgebra::DVector::from_vec(rhs);
        let sol = linalg::lstsq_vec(&e, &rhs, opts.kernel_tol);
        let residual = (&e * &sol - &rhs).norm();
        if rank < sres.rows() || residual > 1e-8 * (1.0 + rhs.norm()) {
            if rank < sres.rows() {
                diagnostics.push("subresultant is rank deficient".into());
            }
            diagnostics.push(format!("linear system residual {residual:.3e}"));
            return Ok(Certificate::not_found(&prep, CertificateMethod::Subresultant, diagnostics));
        }
        DMatrix::from_fn(k.t, s_dim, |i, j| sol[i * s_dim + j])
    };

    let mut stacked = DMatrix::zeros(k.t + s_dim, s_dim);
    stacked.view_mut((0, 0), (k.t, s_dim)).copy_from(&g);
    stacked.view_mut((k.t, 0), (s_dim, s_dim)).fill_with_identity();
    let l = &k.k_next * stacked;
    let mut s_norm = linalg::symmetrize(&(&l * l.transpose()));
    // K_d K_d^T changes no coefficient of x^T S x and keeps M S = 0
    let completed = opts.assume_unique && k.t > 0;
    if completed {
        let kd = k.k_next.columns(0, k.t);
        s_norm += kd * kd.transpose();
    }
    Ok(finalize(
        &prep,
        s_norm,
        Representation::AssumedG { g, completed },
        CertificateMethod::Subresultant,
        diagnostics,
        opts,
        None,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moment::kernel_of;

    fn form(n: usize, d: u32, terms: &[(&[u32], f64)]) -> HomogeneousForm {
        let t: Vec<_> = terms.iter().map(|(e, c)| (MultiIndex::new(e.to_vec()), *c)).collect();
        HomogeneousForm::from_terms(n, d, &t).unwrap()
    }

    #[test]
    fn linear_forms_span_cubics() {
        let s = build_subresultant(&[form(2, 1, &[(&[1, 0], 1.0)]), form(2, 1, &[(&[0, 1], 1.0)])], 3).unwrap();
        assert_eq!((s.rows(), s.cols()), (4, 6));
        assert!(s.has_full_row_rank(1e-12));
    }

    #[test]
    fn squares_span_quintics() {
        let s = build_subresultant(&[form(2, 2, &[(&[2, 0], 1.0)]), form(2, 2, &[(&[0, 2], 1.0)])], 5).unwrap();
        assert_eq!((s.rows(), s.cols()), (6, 8));
        assert!(s.has_full_row_rank(1e-12));
    }

    #[test]
    fn single_form_never_spans() {
        let h = HomogeneousForm::linear_power(&[1.0, 2.0], 3);
        let s = build_subresultant(&[h], 7).unwrap();
        assert!(s.rows() > s.cols());
        assert!(!s.has_full_row_rank(1e-12));
    }

    #[test]
    fn mismatched_degrees_rejected() {
        let a = form(2, 1, &[(&[1, 0], 1.0)]);
        let b = form(2, 2, &[(&[0, 2], 1.0)]);
        assert!(build_subresultant(&[a, b], 4).is_err());
    }

    #[test]
    fn kernel_form_of_two_points() {
        let dec = Decomposition::with_unit_weights(vec![vec![1.0], vec![2.0]]).unwrap();
        let k = kernel_of(&dec, 2, 1e-12).unwrap();
        let h = top_degree_forms(&k, 1, 2).unwrap();
        assert_eq!(h.len(), 1);
        // spanned by (x - 1)(x - 2) = x^2 - 3x + 2, normalized
        let col = k.k_d.column(0);
        let ratio = col[2] / col[0];
        assert!((ratio - 0.5).abs() < 1e-12);
        assert!((h[0].coeffs()[0] - col[2]).abs() < 1e-15);
    }

    #[test]
    fn line_kernel_form() {
        let dec = Decomposition::with_unit_weights(vec![vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let k = kernel_of(&dec, 1, 1e-12).unwrap();
        let h = top_degree_forms(&k, 2, 1).unwrap();
        assert_eq!(h.len(), 1);
        assert!(h[0].coeffs()[0].abs() < 1e-12);
        assert!((h[0].coeffs()[1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_forms_without_kernel() {
        let dec = Decomposition::with_unit_weights(vec![vec![1.0], vec![2.0]]).unwrap();
        let k = kernel_of(&dec, 1, 1e-12).unwrap();
        assert!(top_degree_forms(&k, 1, 1).is_err());
    }

    #[test]
    fn linear_system_matches_subresultant() {
        let pts = vec![vec![3.0, -1.0], vec![0.5, 2.0], vec![-2.0, -1.5], vec![1.0, 1.0]];
        let dec = Decomposition::with_unit_weights(pts).unwrap();
        let k = kernel_of(&dec, 2, 1e-12).unwrap();
        let (e, _) = kernel_linear_system(&k, 2, 2);
        let s = build_subresultant(&top_degree_forms(&k, 2, 2).unwrap(), 5).unwrap();
        assert!((e - s.matrix).amax() < 1e-12);
    }
}
