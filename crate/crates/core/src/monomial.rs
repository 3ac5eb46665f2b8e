//! Multi-indices and the graded lexicographic monomial basis.
//!
//! Every matrix in this crate is indexed by a [`MonomialBasis`]: all exponent
//! vectors of total degree at most `max_degree`, listed degree by degree and,
//! within one degree, in descending lexicographic order (`x1^2, x1 x2, x2^2`).

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;

use crate::error::{GramianError, Result};

/// Exponent vector of a monomial in `n` variables.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MultiIndex(Vec<u32>);

impl MultiIndex {
    pub fn new(exponents: Vec<u32>) -> Self {
        MultiIndex(exponents)
    }

    pub fn zero(n: usize) -> Self {
        MultiIndex(vec![0; n])
    }

    /// The `i`-th unit exponent `e_i`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        MultiIndex(e)
    }

    pub fn nvars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn add(&self, other: &MultiIndex) -> MultiIndex {
        debug_assert_eq!(self.nvars(), other.nvars());
        MultiIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    /// `self - other`, or `None` when `other` does not divide `self`.
    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }

    pub fn divides(&self, other: &MultiIndex) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// True when every exponent is even, i.e. the monomial is a square.
    pub fn is_square(&self) -> bool {
        self.0.iter().all(|e| e % 2 == 0)
    }

    /// Evaluates `z^self`.
    pub fn eval(&self, z: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(z)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// Exact integer evaluation, `None` on overflow.
    pub fn eval_i128(&self, z: &[i128]) -> Option<i128> {
        let mut acc: i128 = 1;
        for (&e, &x) in self.0.iter().zip(z) {
            acc = acc.checked_mul(x.checked_pow(e)?)?;
        }
        Some(acc)
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<Vec<u32>> for MultiIndex {
    fn from(v: Vec<u32>) -> Self {
        MultiIndex(v)
    }
}

/// Binomial coefficient `C(n, k)` in exact arithmetic (0 when `k > n`).
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) after the multiplication
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// `dim R_deg` in `n` variables, `C(n + deg, n)`.
pub fn dim_polys(n: usize, deg: u32) -> usize {
    binomial(n as u64 + deg as u64, n as u64) as usize
}

/// Number of monomials of degree exactly `deg` in `n` variables.
pub fn dim_forms(n: usize, deg: u32) -> usize {
    if n == 0 {
        return usize::from(deg == 0);
    }
    binomial(n as u64 - 1 + deg as u64, n as u64 - 1) as usize
}

/// Multinomial coefficient `D! / ((D - |a|)! a_1! ... a_n!)`.
pub fn multinomial(total: u32, alpha: &MultiIndex) -> Result<u128> {
    let deg = alpha.degree();
    if deg > total {
        return Err(GramianError::DegreeTooLarge { degree: deg, bound: total });
    }
    let mut remaining = total as u64;
    let mut acc: u128 = 1;
    for &a in alpha.exponents() {
        acc *= binomial(remaining, a as u64);
        remaining -= a as u64;
    }
    Ok(acc)
}

/// All exponent vectors of degree exactly `deg`, descending lexicographic.
pub fn homogeneous_monomials(n: usize, deg: u32) -> Vec<MultiIndex> {
    fn rec(prefix: &mut Vec<u32>, remaining: u32, left: usize, out: &mut Vec<MultiIndex>) {
        if left == 1 {
            prefix.push(remaining);
            out.push(MultiIndex(prefix.clone()));
            prefix.pop();
            return;
        }
        for e in (0..=remaining).rev() {
            prefix.push(e);
            rec(prefix, remaining - e, left - 1, out);
            prefix.pop();
        }
    }
    let mut out = Vec::with_capacity(dim_forms(n, deg));
    if n == 0 {
        if deg == 0 {
            out.push(MultiIndex(Vec::new()));
        }
        return out;
    }
    rec(&mut Vec::with_capacity(n), deg, n, &mut out);
    out
}

/// Graded lexicographic list of all monomials up to `max_degree`.
#[derive(Clone, Debug)]
pub struct MonomialBasis {
    n: usize,
    max_degree: u32,
    monomials: Vec<MultiIndex>,
    /// `offsets[k]` is the position of the first monomial of degree `k`.
    offsets: Vec<usize>,
    position: HashMap<MultiIndex, usize>,
}

impl MonomialBasis {
    pub fn new(n: usize, max_degree: u32) -> Self {
        assert!(n >= 1, "monomial basis needs at least one variable");
        let mut monomials = Vec::with_capacity(dim_polys(n, max_degree));
        let mut offsets = Vec::with_capacity(max_degree as usize + 2);
        for k in 0..=max_degree {
            offsets.push(monomials.len());
            monomials.extend(homogeneous_monomials(n, k));
        }
        offsets.push(monomials.len());
        let position = monomials
            .iter()
            .enumerate()
            .map(|(i, m)| (m.clone(), i))
            .collect();
        MonomialBasis { n, max_degree, monomials, offsets, position }
    }

    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[MultiIndex] {
        &self.monomials
    }

    pub fn get(&self, i: usize) -> &MultiIndex {
        &self.monomials[i]
    }

    pub fn position(&self, m: &MultiIndex) -> Option<usize> {
        self.position.get(m).copied()
    }

    /// Index range of the monomials of degree exactly `k`.
    pub fn degree_range(&self, k: u32) -> Range<usize> {
        if k > self.max_degree {
            return self.len()..self.len();
        }
        self.offsets[k as usize]..self.offsets[k as usize + 1]
    }

    /// Number of monomials of degree at most `k` (a prefix of the list).
    pub fn prefix_len(&self, k: u32) -> usize {
        self.offsets[(k.min(self.max_degree) + 1) as usize]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MultiIndex> {
        self.monomials.iter()
    }
}

/// Free-function form of [`MonomialBasis::new`].
pub fn enumerate_basis(n: usize, deg: u32) -> MonomialBasis {
    MonomialBasis::new(n, deg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(k: u32) -> u128 {
        (1..=k as u128).product()
    }

    #[test]
    fn univariate_degree_two() {
        let b = enumerate_basis(1, 2);
        let got: Vec<_> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(got, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn sizes() {
        assert_eq!(enumerate_basis(2, 3).len(), 10);
        assert_eq!(enumerate_basis(2, 4).len(), 15);
        assert_eq!(enumerate_basis(3, 4).len(), 35);
    }

    #[test]
    fn graded_lex_order_bivariate() {
        let b = enumerate_basis(2, 2);
        let got: Vec<_> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(b.degree_range(2), 3..6);
        assert_eq!(b.prefix_len(1), 3);
    }

    #[test]
    fn multinomial_values() {
        assert_eq!(multinomial(2, &MultiIndex::new(vec![1])).unwrap(), 2);
        let want = factorial(6) / (factorial(3) * factorial(2) * factorial(1));
        assert_eq!(want, 60);
        assert_eq!(multinomial(6, &MultiIndex::new(vec![2, 1])).unwrap(), want);
        assert_eq!(multinomial(4, &MultiIndex::new(vec![0, 0])).unwrap(), 1);
        assert!(multinomial(2, &MultiIndex::new(vec![2, 1])).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(9, 8), 9);
        assert_eq!(binomial(3, 4), 0);
        assert_eq!(dim_forms(2, 7), 8);
        assert_eq!(dim_forms(3, 4), 15);
    }

    #[test]
    fn position_inverts_indexing() {
        let b = enumerate_basis(3, 4);
        for (i, m) in b.iter().enumerate() {
            assert_eq!(b.position(m), Some(i));
        }
        assert_eq!(b.position(&MultiIndex::new(vec![5, 0, 0])), None);
    }

    #[test]
    fn multinomial_factorial_identity() {
        for total in 0..9u32 {
            for alpha in enumerate_basis(3, total).iter() {
                let lhs = multinomial(total, alpha).unwrap()
                    * factorial(total - alpha.degree())
                    * alpha.exponents().iter().map(|&a| factorial(a)).product::<u128>();
                assert_eq!(lhs, factorial(total));
            }
        }
    }
}
