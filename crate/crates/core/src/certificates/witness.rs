use nalgebra::DMatrix;
use serde::Serialize;

use super::sres::{build_subresultant, HomogeneousForm};
use crate::error::{GramianError, Result};
use crate::monomial::MultiIndex;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessKind {
    /// `x_1^d, ..., x_n^d`, checked in degree `2d+1`.
    StarN,
    /// The star system plus `(x_1 + ... + x_n)^d`, checked in degree `2d+1`.
    StarNPlus1,
    /// `(x_1 + sum_{i in I} x_i - sum_{j not in I} x_j)^d` for all
    /// `I` in `{2..n}`, checked in degree `2d`.
    Powers2Pow,
}

impl std::str::FromStr for WitnessKind {
    type Err = GramianError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "star_n" => Ok(WitnessKind::StarN),
            "star_n_plus_1" => Ok(WitnessKind::StarNPlus1),
            "powers_2_pow" => Ok(WitnessKind::Powers2Pow),
            other => Err(GramianError::InvalidArgument(format!("unknown witness kind {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessSystem {
    pub kind: WitnessKind,
    pub n: usize,
    pub d: u32,
    #[serde(skip)]
    pub forms: Vec<HomogeneousForm>,
    pub delta: u32,
    pub rows: usize,
    pub cols: usize,
    pub numerical_rank: usize,
    /// Rank modulo `2^61 - 1`; a lower bound for the rank over the rationals.
    pub exact_rank: Option<usize>,
    pub full_row_rank: bool,
}

const MAX_EXPONENTIAL_N: usize = 6;

pub fn witness_systems(n: usize, d: u32, kind: WitnessKind) -> Result<WitnessSystem> {
    if n == 0 || d == 0 {
        return Err(GramianError::InvalidArgument("n and d must be positive".into()));
    }
    let star = |i: usize| {
        let mut e = vec![0; n];
        e[i] = d;
        HomogeneousForm::from_terms(n, d, &[(MultiIndex::new(e), 1.0)]).expect("degree d")
    };
    let (forms, delta) = match kind {
        WitnessKind::StarN => ((0..n).map(star).collect::<Vec<_>>(), 2 * d + 1),
        WitnessKind::StarNPlus1 => {
            let mut f: Vec<_> = (0..n).map(star).collect();
            f.push(HomogeneousForm::linear_power(&vec![1.0; n], d));
            (f, 2 * d + 1)
        }
        WitnessKind::Powers2Pow => {
            if n > MAX_EXPONENTIAL_N {
                return Err(GramianError::Unsupported(format!(
                    "{} forms for n = {n}; at most n = {MAX_EXPONENTIAL_N} is supported",
                    1u64 << (n - 1)
                )));
            }
            let f = (0..1usize << (n - 1))
                .map(|mask| {
                    let c: Vec<f64> = (0..n)
                        .map(|i| if i == 0 || mask >> (i - 1) & 1 == 1 { 1.0 } else { -1.0 })
                        .collect();
                    HomogeneousForm::linear_power(&c, d)
                })
                .collect();
            (f, 2 * d)
        }
    };
    let sres = build_subresultant(&forms, delta)?;
    let numerical_rank = sres.rank(1e-10);
    let exact_rank = rank_mod_p(&sres.matrix);
    let full_row_rank = exact_rank.unwrap_or(numerical_rank) == sres.rows();
    Ok(WitnessSystem {
        kind,
        n,
        d,
        forms,
        delta,
        rows: sres.rows(),
        cols: sres.cols(),
        numerical_rank,
        exact_rank,
        full_row_rank,
    })
}

const P: u64 = (1 << 61) - 1;

fn mul_mod(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % P as u128) as u64
}

fn inv_mod(a: u64) -> u64 {
    let (mut base, mut exp, mut acc) = (a, P - 2, 1u64);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

/// Rank of an integer matrix modulo the prime `2^61 - 1`, or `None` when
/// some entry is not an exactly representable integer.
pub fn rank_mod_p(a: &DMatrix<f64>) -> Option<usize> {
    let (rows, cols) = a.shape();
    let mut m = vec![vec![0u64; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            let v = a[(i, j)];
            if v.fract() != 0.0 || v.abs() >= 9.007_199_254_740_992e15 {
                return None;
            }
            let r = (v.abs() as u64) % P;
            m[i][j] = if v < 0.0 && r != 0 { P - r } else { r };
        }
    }
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&i| m[i][col] != 0) else { continue };
        m.swap(rank, pivot);
        let inv = inv_mod(m[rank][col]);
        for i in 0..rows {
            if i != rank && m[i][col] != 0 {
                let f = mul_mod(m[i][col], inv);
                let pivot_row = m[rank].clone();
                for (v, &pv) in m[i][col..].iter_mut().zip(&pivot_row[col..]) {
                    *v = (*v + P - mul_mod(f, pv)) % P;
                }
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    Some(rank)
}
