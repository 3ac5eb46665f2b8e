//! Polynomials, symmetric tensors, weighted point decompositions and their
//! moment sequences.
//!
//! A symmetric tensor `A` of order `D` and dimension `n + 1` corresponds to the
//! polynomial obtained by contracting it with `[1, x_1, ..., x_n]` in every
//! direction. The coefficient of `x^b` is `multinomial(D, b) * A_b`, where `A_b`
//! is the entry at any index tuple containing `k` exactly `b_k` times.

use crate::error::{GramianError, Result};
use crate::monomial::{multinomial, MonomialBasis, MultiIndex};

/// Dense polynomial in `n` variables with total degree at most `degree_bound`.
#[derive(Clone, Debug)]
pub struct Polynomial {
    basis: MonomialBasis,
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn zeros(n: usize, degree_bound: u32) -> Self {
        let basis = MonomialBasis::new(n, degree_bound);
        let coeffs = vec![0.0; basis.len()];
        Polynomial { basis, coeffs }
    }

    pub fn constant(n: usize, degree_bound: u32, c: f64) -> Self {
        let mut p = Self::zeros(n, degree_bound);
        p.coeffs[0] = c;
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` terms. Repeated
    /// exponents accumulate.
    pub fn from_terms(n: usize, degree_bound: u32, terms: &[(MultiIndex, f64)]) -> Result<Self> {
        let mut p = Self::zeros(n, degree_bound);
        for (m, c) in terms {
            if m.nvars() != n {
                return Err(GramianError::DimensionMismatch(format!(
                    "term {m:?} has {} variables, expected {n}",
                    m.nvars()
                )));
            }
            let i = p.basis.position(m).ok_or(GramianError::DegreeTooLarge {
                degree: m.degree(),
                bound: degree_bound,
            })?;
            p.coeffs[i] += c;
        }
        Ok(p)
    }

    pub fn from_coeffs(basis: MonomialBasis, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(GramianError::DimensionMismatch(format!(
                "{} coefficients for a basis of size {}",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Polynomial { basis, coeffs })
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn degree_bound(&self) -> u32 {
        self.basis.max_degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, m: &MultiIndex) -> f64 {
        self.basis.position(m).map_or(0.0, |i| self.coeffs[i])
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, f64)> {
        self.basis.iter().zip(self.coeffs.iter().copied())
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms().map(|(m, c)| c * m.eval(x)).sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Actual total degree (highest degree with a non-zero coefficient).
    pub fn degree(&self) -> Option<u32> {
        self.terms().filter(|(_, c)| *c != 0.0).map(|(m, _)| m.degree()).max()
    }

    /// Product of two polynomials; the bound of the result is the sum of bounds.
    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        assert_eq!(self.nvars(), other.nvars());
        let mut out = Polynomial::zeros(self.nvars(), self.degree_bound() + other.degree_bound());
        for (a, ca) in self.terms().filter(|(_, c)| *c != 0.0) {
            for (b, cb) in other.terms().filter(|(_, c)| *c != 0.0) {
                let i = out.basis.position(&a.add(b)).expect("degree within bound");
                out.coeffs[i] += ca * cb;
            }
        }
        out
    }

    /// `p(c x)`: the coefficient of `x^b` is multiplied by `c^|b|`.
    pub fn rescale_variables(&self, c: f64) -> Polynomial {
        let coeffs = self
            .terms()
            .map(|(m, v)| v * c.powi(m.degree() as i32))
            .collect();
        Polynomial { basis: self.basis.clone(), coeffs }
    }

    /// Coefficients of the degree-exactly-`k` part, in basis order.
    pub fn homogeneous_part(&self, k: u32) -> &[f64] {
        &self.coeffs[self.basis.degree_range(k)]
    }
}

/// Symmetric tensor of order `D` on `(n + 1)`-dimensional space, stored once per
/// multiset of indices.
#[derive(Clone, Debug)]
pub struct SymmetricTensor {
    order: u32,
    basis: MonomialBasis,
    values: Vec<f64>,
}

impl SymmetricTensor {
    /// Exponent of `x` associated with an index tuple: the count of each `k >= 1`.
    fn tuple_exponent(n: usize, tuple: &[usize]) -> MultiIndex {
        let mut e = vec![0u32; n];
        for &i in tuple.iter().filter(|&&i| i > 0) {
            e[i - 1] += 1;
        }
        MultiIndex::new(e)
    }

    fn tuple_at(n: usize, order: u32, mut flat: usize) -> Vec<usize> {
        let mut t = vec![0; order as usize];
        for slot in t.iter_mut().rev() {
            *slot = flat % (n + 1);
            flat /= n + 1;
        }
        t
    }

    /// Builds the tensor from its full row-major array of `(n + 1)^order`
    /// entries, rejecting arrays that are not permutation invariant to `tol`
    /// (relative to the largest entry).
    pub fn from_full(n: usize, order: u32, data: &[f64], tol: f64) -> Result<Self> {
        let len = (n + 1).pow(order);
        if data.len() != len {
            return Err(GramianError::DimensionMismatch(format!(
                "expected {len} entries for order {order} on dimension {}",
                n + 1
            )));
        }
        let basis = MonomialBasis::new(n, order);
        let mut values = vec![f64::NAN; basis.len()];
        let mut first_seen: Vec<Option<usize>> = vec![None; basis.len()];
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for (flat, &v) in data.iter().enumerate() {
            let tuple = Self::tuple_at(n, order, flat);
            let i = basis.position(&Self::tuple_exponent(n, &tuple)).expect("in basis");
            match first_seen[i] {
                None => {
                    first_seen[i] = Some(flat);
                    values[i] = v;
                }
                Some(prev) => {
                    if (values[i] - v).abs() > tol * scale {
                        return Err(GramianError::NotSymmetric {
                            first: Self::tuple_at(n, order, prev),
                            second: tuple,
                        });
                    }
                }
            }
        }
        Ok(SymmetricTensor { order, basis, values })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// The `n` of the associated polynomial ring (tensor dimension minus one).
    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn entry(&self, tuple: &[usize]) -> f64 {
        assert_eq!(tuple.len(), self.order as usize);
        let e = Self::tuple_exponent(self.nvars(), tuple);
        self.values[self.basis.position(&e).expect("in basis")]
    }

    /// Entry indexed by the exponent of the monomial it multiplies.
    pub fn entry_by_exponent(&self, m: &MultiIndex) -> f64 {
        self.basis.position(m).map_or(0.0, |i| self.values[i])
    }

    pub fn to_full(&self) -> Vec<f64> {
        let n = self.nvars();
        (0..(n + 1).pow(self.order))
            .map(|flat| self.entry(&Self::tuple_at(n, self.order, flat)))
            .collect()
    }
}

/// Contracts `A` with `[1, x]` in every direction.
pub fn tensor_to_poly(a: &SymmetricTensor) -> Polynomial {
    let coeffs = a
        .basis
        .iter()
        .zip(&a.values)
        .map(|(m, v)| multinomial(a.order, m).expect("within order") as f64 * v)
        .collect();
    Polynomial { basis: a.basis.clone(), coeffs }
}

/// Inverse of [`tensor_to_poly`]; the tensor order is the polynomial's degree bound.
pub fn poly_to_tensor(p: &Polynomial) -> SymmetricTensor {
    let order = p.degree_bound();
    let values = p
        .terms()
        .map(|(m, c)| c / multinomial(order, m).expect("within order") as f64)
        .collect();
    SymmetricTensor { order, basis: p.basis.clone(), values }
}

/// Weighted real points `z_t` with positive weights, i.e. the linear forms
/// `1 + z_t . x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Decomposition {
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(GramianError::InvalidArgument("decomposition has no points".into()));
        }
        if points.len() != weights.len() {
            return Err(GramianError::DimensionMismatch(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let n = points[0].len();
        if n == 0 || points.iter().any(|p| p.len() != n) {
            return Err(GramianError::DimensionMismatch(
                "points must share a positive dimension".into(),
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(GramianError::InvalidArgument("non-finite coordinate".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(GramianError::InvalidArgument(format!("weight {w} is not positive")));
        }
        for i in 0..points.len() {
            for j in 0..i {
                if points[i] == points[j] {
                    return Err(GramianError::InvalidArgument(format!(
                        "points {j} and {i} coincide"
                    )));
                }
            }
        }
        Ok(Decomposition { points, weights })
    }

    pub fn with_unit_weights(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn rank(&self) -> usize {
        self.points.len()
    }

    pub fn nvars(&self) -> usize {
        self.points[0].len()
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Decomposition {
        Decomposition {
            points: self.points.iter().map(|p| p.iter().map(|v| v * factor).collect()).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn max_abs_coordinate(&self) -> f64 {
        self.points.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Smallest power of two bounding every coordinate, at least 1.
    pub fn natural_scale(&self) -> f64 {
        power_of_two_at_least(self.max_abs_coordinate().max(1.0))
    }

    fn integral_data(&self) -> Option<(Vec<Vec<i128>>, Vec<i128>)> {
        let as_int = |v: f64| (v.fract() == 0.0 && v.abs() < 1e15).then_some(v as i128);
        let pts = self
            .points
            .iter()
            .map(|p| p.iter().map(|&v| as_int(v)).collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()?;
        let w = self.weights.iter().map(|&v| as_int(v)).collect::<Option<Vec<_>>>()?;
        Some((pts, w))
    }
}

/// Smallest power of two `>= x`, or 1 for `x <= 0`.
pub fn power_of_two_at_least(x: f64) -> f64 {
    if !x.is_finite() || x <= 0.0 {
        return 1.0;
    }
    2f64.powi(x.log2().ceil() as i32)
}

/// Expands `sum_t w_t (1 + z_t . x)^(2d)` by repeated polynomial multiplication.
pub fn poly_from_decomposition(dec: &Decomposition, d: u32) -> Polynomial {
    let n = dec.nvars();
    let mut total = Polynomial::zeros(n, 2 * d);
    for (z, w) in dec.points.iter().zip(&dec.weights) {
        let mut linear = Polynomial::zeros(n, 1);
        linear.coeffs[0] = 1.0;
        linear.coeffs[1..].copy_from_slice(z);
        let mut power = Polynomial::constant(n, 0, 1.0);
        for _ in 0..2 * d {
            power = power.mul(&linear);
        }
        for (acc, c) in total.coeffs.iter_mut().zip(&power.coeffs) {
            *acc += w * c;
        }
    }
    total
}

/// Values `m_a` for every `|a| <= max_degree`, indexed by a [`MonomialBasis`].
#[derive(Clone, Debug)]
pub struct MomentSequence {
    basis: MonomialBasis,
    values: Vec<f64>,
}

impl MomentSequence {
    pub fn new(basis: MonomialBasis, values: Vec<f64>) -> Result<Self> {
        if basis.len() != values.len() {
            return Err(GramianError::DimensionMismatch(format!(
                "{} moments for a basis of size {}",
                values.len(),
                basis.len()
            )));
        }
        Ok(MomentSequence { basis, values })
    }

    pub fn nvars(&self) -> usize {
        self.basis.nvars()
    }

    pub fn max_degree(&self) -> u32 {
        self.basis.max_degree()
    }

    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, m: &MultiIndex) -> Option<f64> {
        self.basis.position(m).map(|i| self.values[i])
    }

    pub fn truncated(&self, max_degree: u32) -> MomentSequence {
        let basis = MonomialBasis::new(self.nvars(), max_degree.min(self.max_degree()));
        let values = self.values[..basis.len()].to_vec();
        MomentSequence { basis, values }
    }

    /// Moments of the points multiplied by `factor`: `m_a * factor^|a|`.
    pub fn scaled(&self, factor: f64) -> MomentSequence {
        let values = self
            .basis
            .iter()
            .zip(&self.values)
            .map(|(m, v)| v * factor.powi(m.degree() as i32))
            .collect();
        MomentSequence { basis: self.basis.clone(), values }
    }

    /// Power of two comparable to the coordinates of the underlying points,
    /// from `max (|m_a| / |m_0|)^(1/|a|)`, at least 1 so that tiny moments
    /// are never amplified.
    pub fn natural_scale(&self) -> f64 {
        let m0 = self.values[0].abs();
        if m0 == 0.0 {
            return 1.0;
        }
        let est = self
            .basis
            .iter()
            .zip(&self.values)
            .filter(|(m, _)| m.degree() > 0)
            .map(|(m, v)| (v.abs() / m0).powf(1.0 / m.degree() as f64))
            .fold(0.0, f64::max);
        power_of_two_at_least(est.max(1.0))
    }
}

/// `m_a = p_a / multinomial(2d, a)` for `|a| <= 2d`.
pub fn moments_from_poly(p: &Polynomial, d: u32) -> Result<MomentSequence> {
    if p.degree_bound() > 2 * d {
        if let Some(deg) = p.degree().filter(|&k| k > 2 * d) {
            return Err(GramianError::DegreeTooLarge { degree: deg, bound: 2 * d });
        }
    }
    let basis = MonomialBasis::new(p.nvars(), 2 * d);
    let values = basis
        .iter()
        .map(|m| p.coeff(m) / multinomial(2 * d, m).expect("within 2d") as f64)
        .collect();
    Ok(MomentSequence { basis, values })
}

/// `m_a = sum_t w_t z_t^a` for `|a| <= max_degree`.
///
/// Integral data is summed exactly in 128-bit arithmetic and rounded once.
pub fn moments_from_decomposition(dec: &Decomposition, max_degree: u32) -> MomentSequence {
    let basis = MonomialBasis::new(dec.nvars(), max_degree);
    let exact = dec.integral_data().and_then(|(pts, w)| {
        basis
            .iter()
            .map(|m| {
                pts.iter().zip(&w).try_fold(0i128, |acc, (z, wt)| {
                    acc.checked_add(m.eval_i128(z)?.checked_mul(*wt)?)
                })
            })
            .map(|v| v.map(|x| x as f64))
            .collect::<Option<Vec<f64>>>()
    });
    let values = exact.unwrap_or_else(|| {
        basis
            .iter()
            .map(|m| dec.points.iter().zip(&dec.weights).map(|(z, w)| w * m.eval(z)).sum())
            .collect()
    });
    MomentSequence { basis, values }
}

/// Compares `p` with the expansion of `dec`; true iff the largest coefficient
/// deviation is at most `tol * (1 + max |coeff(p)|)`. Returns the deviation.
pub fn verify_decomposition(p: &Polynomial, dec: &Decomposition, tol: f64) -> Result<(bool, f64)> {
    if p.nvars() != dec.nvars() {
        return Err(GramianError::DimensionMismatch(format!(
            "polynomial in {} variables, points in {}",
            p.nvars(),
            dec.nvars()
        )));
    }
    if !p.degree_bound().is_multiple_of(2) {
        return Err(GramianError::InvalidArgument("degree bound must be even".into()));
    }
    let q = poly_from_decomposition(dec, p.degree_bound() / 2);
    let residual = p
        .coeffs
        .iter()
        .zip(&q.coeffs)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok((residual <= tol * (1.0 + p.max_abs_coeff()), residual))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uni(coeffs: &[f64]) -> Polynomial {
        let basis = MonomialBasis::new(1, coeffs.len() as u32 - 1);
        Polynomial::from_coeffs(basis, coeffs.to_vec()).unwrap()
    }

    #[test]
    fn two_by_two_tensor() {
        let a = SymmetricTensor::from_full(1, 2, &[1.0, 1.0, 1.0, 1.0], 0.0).unwrap();
        assert_eq!(tensor_to_poly(&a).coeffs(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn corner_tensor_is_constant() {
        let mut data = vec![0.0; 27];
        data[0] = 1.0;
        let a = SymmetricTensor::from_full(2, 3, &data, 0.0).unwrap();
        let p = tensor_to_poly(&a);
        assert_eq!(p.constant_term(), 1.0);
        assert_eq!(p.max_abs_coeff(), 1.0);
    }

    #[test]
    fn rejects_asymmetric_tensor() {
        let err = SymmetricTensor::from_full(1, 2, &[1.0, 2.0, 3.0, 1.0], 1e-12).unwrap_err();
        assert!(matches!(err, GramianError::NotSymmetric { .. }));
    }

    #[test]
    fn decomposition_expansions() {
        let origin = Decomposition::new(vec![vec![0.0]], vec![1.0]).unwrap();
        assert_eq!(poly_from_decomposition(&origin, 1).coeffs(), &[1.0, 0.0, 0.0]);
        let one = Decomposition::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert_eq!(poly_from_decomposition(&one, 1).coeffs(), &[1.0, 2.0, 1.0]);
        let pm = Decomposition::new(vec![vec![1.0], vec![-1.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(poly_from_decomposition(&pm, 1).coeffs(), &[2.0, 0.0, 2.0]);
    }

    #[test]
    fn moments_of_square() {
        let m = moments_from_poly(&uni(&[1.0, 2.0, 1.0]), 1).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0, 1.0]);
        let p = Polynomial::constant(2, 2, 1.0);
        let m = moments_from_poly(&p, 1).unwrap();
        assert_eq!(m.values()[0], 1.0);
        assert!(m.values()[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moments_of_points() {
        let dec = Decomposition::new(vec![vec![2.0]], vec![1.0]).unwrap();
        assert_eq!(moments_from_decomposition(&dec, 3).values(), &[1.0, 2.0, 4.0, 8.0]);
        let dec = Decomposition::new(vec![vec![1.0], vec![2.0]], vec![1.0, 1.0]).unwrap();
        assert_eq!(moments_from_decomposition(&dec, 2).values(), &[2.0, 3.0, 5.0]);
        let dec = Decomposition::new(vec![vec![0.5, 1.5], vec![-2.0, 0.25]], vec![0.3, 2.0]).unwrap();
        assert!((moments_from_decomposition(&dec, 4).values()[0] - 2.3).abs() < 1e-15);
    }

    #[test]
    fn verify_exact_and_perturbed() {
        let p = uni(&[1.0, 2.0, 1.0]);
        let exact = Decomposition::new(vec![vec![1.0]], vec![1.0]).unwrap();
        assert!(verify_decomposition(&p, &exact, 1e-12).unwrap().0);
        let off = Decomposition::new(vec![vec![0.999]], vec![1.0]).unwrap();
        assert!(!verify_decomposition(&p, &off, 1e-12).unwrap().0);
        let wrong_dim = Decomposition::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
        assert!(verify_decomposition(&p, &wrong_dim, 1e-12).is_err());
    }

    #[test]
    fn decomposition_validation() {
        assert!(Decomposition::new(vec![vec![1.0], vec![1.0]], vec![1.0, 1.0]).is_err());
        assert!(Decomposition::new(vec![vec![1.0]], vec![0.0]).is_err());
        assert!(Decomposition::new(vec![vec![1.0], vec![2.0, 0.0]], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn natural_scales() {
        assert_eq!(power_of_two_at_least(99.0), 128.0);
        assert_eq!(power_of_two_at_least(64.0), 64.0);
        assert_eq!(power_of_two_at_least(0.0), 1.0);
        assert_eq!(power_of_two_at_least(0.3), 0.5);
    }
}
