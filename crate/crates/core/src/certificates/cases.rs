use serde::Serialize;

use crate::monomial::{binomial, dim_polys};

/// Non-negative fraction in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Rational {
    pub num: i128,
    pub den: i128,
}

impl Rational {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()) as i128;
        let sign = if den < 0 { -1 } else { 1 };
        Rational { num: sign * num / g.max(1), den: sign * den / g.max(1) }
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `r > self`, exactly.
    pub fn exceeded_by(self, r: usize) -> bool {
        r as i128 * self.den > self.num
    }
}

impl std::fmt::Display for Rational {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CaseVerdict {
    pub n: usize,
    pub d: u32,
    pub r: usize,
    /// `dim R_d - r`.
    pub t: usize,
    pub guaranteed_by_fullrank: bool,
    pub overconstrained: bool,
    pub uniqueness_regime: bool,
    pub uncertain: bool,
    pub threshold: Rational,
}

/// Rank above which the certificate equations outnumber the unknowns:
/// `[C(n+d+1,d+1) C(n+d,d+1) - C(n+d,d+1)(C(n+d,d+1)-1)/2 - C(n+2d,2d+1) - C(n+2d+1,2d+2)] / C(n+d,d+1)`.
pub fn overconstraint_threshold(n: usize, d: u32) -> Rational {
    let (n, d) = (n as u64, d as u64);
    let s = binomial(n + d, d + 1) as i128;
    let num = binomial(n + d + 1, d + 1) as i128 * s
        - s * (s - 1) / 2
        - binomial(n + 2 * d, 2 * d + 1) as i128
        - binomial(n + 2 * d + 1, 2 * d + 2) as i128;
    Rational::new(num, s)
}

/// Whether generic kernel forms are known to satisfy the subresultant
/// condition for `t` forms of degree `d` in `n` variables.
///
/// `t = n`: `n = 2`; `n = 3, d <= 3`; `n = 4, d <= 2`; `n >= 5, d = 1`.
/// `t >= n + 1`: `n = 2, 3`; `n = 4, d <= 6`; `n = 5, d <= 3`;
/// `n = 6, 7, 8, d <= 2`; `n >= 9, d = 1`.
/// `t >= 2^(n-1)`: any `d`, since those forms already span degree `2d`.
pub fn guaranteed_by_fullrank(n: usize, d: u32, t: usize) -> bool {
    if t == 0 || n == 0 {
        return false;
    }
    let powers = n <= 64 && (t as u128) >= 1u128 << (n - 1);
    (n >= 2 && t == n && list_t_n(n, d)) || (n >= 2 && t > n && list_t_n1(n, d)) || powers
}

fn list_t_n(n: usize, d: u32) -> bool {
    match n {
        2 => true,
        3 => d <= 3,
        4 => d <= 2,
        _ => d == 1,
    }
}

fn list_t_n1(n: usize, d: u32) -> bool {
    match n {
        2 | 3 => true,
        4 => d <= 6,
        5 => d <= 3,
        6..=8 => d <= 2,
        _ => d == 1,
    }
}

/// Number of `x^g` with `|g| = nu` and every `g_i < d`.
pub fn hilbert_count(n: usize, d: u32, nu: u32) -> usize {
    // coefficient of t^nu in (1 + t + ... + t^(d-1))^n
    let nu = nu as usize;
    let mut counts = vec![0usize; nu + 1];
    counts[0] = 1;
    for _ in 0..n {
        let mut next = vec![0usize; nu + 1];
        for (deg, &c) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
            for e in 0..(d as usize).min(nu + 1 - deg) {
                next[deg + e] += c;
            }
        }
        counts = next;
    }
    counts[nu]
}

pub fn case_verdict(n: usize, d: u32, r: usize) -> CaseVerdict {
    let dim = dim_polys(n, d);
    let t = dim.saturating_sub(r);
    let threshold = overconstraint_threshold(n, d);
    let guaranteed = guaranteed_by_fullrank(n, d, t);
    let overconstrained = !guaranteed && threshold.exceeded_by(r);
    let uniqueness_regime = d >= 2 && r + n <= dim + 1;
    CaseVerdict {
        n,
        d,
        r,
        t,
        guaranteed_by_fullrank: guaranteed,
        overconstrained,
        uniqueness_regime,
        uncertain: !guaranteed && !overconstrained,
        threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Conditions the guarantee lists are derived from: x_i^d generate
    // degree 2d+1 iff 2d+1 > n(d-1); adding (x_1+...+x_n)^d suffices when
    // the count of degree-(2d+1) monomials with all exponents below d is at
    // most the count in degree d+1.
    fn derived_t_n(n: usize, d: u32) -> bool {
        2 * d + 1 > n as u32 * (d - 1)
    }

    fn derived_t_n1(n: usize, d: u32) -> bool {
        hilbert_count(n, d, 2 * d + 1) <= hilbert_count(n, d, d + 1)
    }

    #[test]
    fn lists_match_derivation() {
        for n in 2..=12 {
            for d in 1..=9 {
                assert_eq!(list_t_n(n, d), derived_t_n(n, d), "t=n, n={n}, d={d}");
                assert_eq!(list_t_n1(n, d), derived_t_n1(n, d), "t=n+1, n={n}, d={d}");
            }
        }
    }

    #[test]
    fn threshold_for_plane_cubics() {
        assert_eq!(overconstraint_threshold(2, 3), Rational::new(48, 5));
        assert_eq!(overconstraint_threshold(2, 3).to_string(), "48/5");
    }

    #[test]
    fn plane_cubic_cases() {
        let v = case_verdict(2, 3, 10);
        assert!(v.overconstrained && !v.guaranteed_by_fullrank && v.t == 0);
        let v = case_verdict(2, 3, 8);
        assert!(v.guaranteed_by_fullrank && !v.overconstrained && v.t == 2);
        let v = case_verdict(2, 3, 9);
        assert!(v.uncertain && !v.guaranteed_by_fullrank && !v.overconstrained);
        assert!(case_verdict(2, 3, 9).uniqueness_regime);
        assert!(!case_verdict(2, 3, 10).uniqueness_regime);
    }

    #[test]
    fn hilbert_counts() {
        // n = 2, d = 3: exponents in {0,1,2}, so degrees 0..=4 with counts 1,2,3,2,1
        let counts: Vec<_> = (0..=5).map(|nu| hilbert_count(2, 3, nu)).collect();
        assert_eq!(counts, vec![1, 2, 3, 2, 1, 0]);
        for (n, d) in [(3, 2), (4, 3), (5, 4)] {
            for nu in 0..=12 {
                let brute = crate::monomial::homogeneous_monomials(n, nu)
                    .iter()
                    .filter(|g| g.exponents().iter().all(|&e| e < d))
                    .count();
                assert_eq!(hilbert_count(n, d, nu), brute, "n={n} d={d} nu={nu}");
            }
        }
    }

    #[test]
    fn reduced_fractions() {
        assert_eq!(Rational::new(10, 4), Rational { num: 5, den: 2 });
        assert_eq!(Rational::new(3, -6), Rational { num: -1, den: 2 });
        assert!(Rational::new(48, 5).exceeded_by(10));
        assert!(!Rational::new(48, 5).exceeded_by(9));
    }
}
