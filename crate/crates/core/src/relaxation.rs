//! Trace-minimizing relaxation over moment matrices of degree `d + 1`.
//!
//! Symmetric matrices indexed by `MonomialBasis(n, d + 1)` split into support
//! classes, one per exponent `a` with `|a| <= 2d + 2`: the entries `(b, b')`
//! with `b + b' = a`. Each class contributes the pattern matrix `Y_a` and an
//! orthonormal basis `Z_{a,i}` of the class matrices orthogonal to it.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{GramianError, Result};
use crate::linalg;
use crate::moment::{
    check_flat_extension, extract_points, moment_matrix_of, numerical_rank, FlatExtension,
    MomentMatrix,
};
use crate::monomial::{MonomialBasis, MultiIndex};
use crate::poly::{
    moments_from_decomposition, moments_from_poly, verify_decomposition, Decomposition,
    MomentSequence, Polynomial,
};
use crate::sdp::{solve_sdp, SdpOptions, SdpProblem, SdpStatus};

/// Entries of one support class and its orthonormal basis.
#[derive(Clone, Debug)]
pub struct SupportClass {
    pub alpha: MultiIndex,
    /// Unordered positions `(i, j)`, `i <= j`.
    pub positions: Vec<(usize, usize)>,
    /// Number of ordered pairs in the class.
    pub multiplicity: usize,
    pub y: DMatrix<f64>,
    pub z: Vec<DMatrix<f64>>,
}

#[derive(Clone, Debug)]
pub struct OrthBasis {
    n: usize,
    d: u32,
    basis: MonomialBasis,
    classes: Vec<SupportClass>,
}

impl OrthBasis {
    pub fn nvars(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> u32 {
        self.d
    }

    /// Row and column index of the matrices, `MonomialBasis(n, d + 1)`.
    pub fn basis(&self) -> &MonomialBasis {
        &self.basis
    }

    /// Classes in graded lexicographic order of `alpha`.
    pub fn classes(&self) -> &[SupportClass] {
        &self.classes
    }

    pub fn class(&self, alpha: &MultiIndex) -> Option<&SupportClass> {
        MonomialBasis::new(self.n, 2 * self.d + 2)
            .position(alpha)
            .map(|i| &self.classes[i])
    }

    pub fn num_y(&self) -> usize {
        self.classes.len()
    }

    pub fn num_z(&self) -> usize {
        self.classes.iter().map(|c| c.z.len()).sum()
    }

    /// Orthogonal projection onto the span of every `Y_a` and `Z_{a,i}`.
    pub fn project(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let size = self.basis.len();
        let mut out = DMatrix::zeros(size, size);
        for cls in &self.classes {
            let cy = linalg::inner(&cls.y, a) / cls.multiplicity as f64;
            out += &cls.y * cy;
            for z in &cls.z {
                out += z * linalg::inner(z, a);
            }
        }
        out
    }
}

/// Builds the class decomposition over `MonomialBasis(n, d + 1)`.
///
/// Within a class, coordinates are taken on the orthonormal basis of
/// symmetric matrices (diagonal units and off-diagonal pairs scaled by
/// `1/sqrt 2`), where `Y_a` has coordinates `w = (1 or sqrt 2)`. The `Z`
/// matrices are columns `2..k` of the negated Householder reflector mapping
/// `e_1` to `w / |w|`.
pub fn build_orth_basis(n: usize, d: u32) -> Result<OrthBasis> {
    if n < 1 || d < 1 {
        return Err(GramianError::InvalidArgument(format!("need n >= 1 and d >= 1, got n={n}, d={d}")));
    }
    let basis = MonomialBasis::new(n, d + 1);
    let size = basis.len();
    let sums = MonomialBasis::new(n, 2 * d + 2);
    let mut positions: Vec<Vec<(usize, usize)>> = vec![Vec::new(); sums.len()];
    for i in 0..size {
        for j in i..size {
            let k = sums.position(&basis.get(i).add(basis.get(j))).expect("degree bound");
            positions[k].push((i, j));
        }
    }
    let unit = |i: usize, j: usize| {
        let mut m = DMatrix::zeros(size, size);
        if i == j {
            m[(i, i)] = 1.0;
        } else {
            m[(i, j)] = std::f64::consts::FRAC_1_SQRT_2;
            m[(j, i)] = std::f64::consts::FRAC_1_SQRT_2;
        }
        m
    };
    let classes = positions
        .into_iter()
        .enumerate()
        .map(|(k, pos)| {
            let w: Vec<f64> =
                pos.iter().map(|&(i, j)| if i == j { 1.0 } else { std::f64::consts::SQRT_2 }).collect();
            let multiplicity = pos.iter().map(|&(i, j)| if i == j { 1 } else { 2 }).sum();
            let mut y = DMatrix::zeros(size, size);
            for &(i, j) in &pos {
                y[(i, j)] = 1.0;
                y[(j, i)] = 1.0;
            }
            let len = pos.len();
            let norm = (multiplicity as f64).sqrt();
            let mut v: Vec<f64> = w.iter().map(|x| x / norm).collect();
            v[0] -= 1.0;
            let vv: f64 = v.iter().map(|x| x * x).sum();
            let z = (1..len)
                .map(|col| {
                    let mut m = DMatrix::zeros(size, size);
                    for (row, &(i, j)) in pos.iter().enumerate() {
                        let h = f64::from(u8::from(row == col)) - 2.0 * v[row] * v[col] / vv;
                        m += unit(i, j) * (-h);
                    }
                    m
                })
                .collect();
            SupportClass { alpha: sums.get(k).clone(), positions: pos, multiplicity, y, z }
        })
        .collect();
    Ok(OrthBasis { n, d, basis, classes })
}

/// `min <I, X>` subject to `<Y_a, X> = c_a m_a` for `|a| <= 2d` and
/// `<Z_{a,i}, X> = 0` for every class. Y rows come first, in class order,
/// followed by all Z rows.
pub fn assemble_relaxation(m: &MomentSequence, basis: &OrthBasis) -> Result<SdpProblem> {
    let d = basis.d;
    if m.nvars() != basis.n {
        return Err(GramianError::DimensionMismatch(format!(
            "moments in {} variables, basis in {}",
            m.nvars(),
            basis.n
        )));
    }
    if m.max_degree() < 2 * d {
        return Err(GramianError::MissingMoment(2 * d));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for cls in basis.classes.iter().filter(|c| c.alpha.degree() <= 2 * d) {
        a.push(cls.y.clone());
        b.push(cls.multiplicity as f64 * m.get(&cls.alpha).expect("degree checked"));
    }
    for cls in &basis.classes {
        for z in &cls.z {
            a.push(z.clone());
            b.push(0.0);
        }
    }
    let size = basis.basis.len();
    SdpProblem::new(DMatrix::identity(size, size), a, b)
}

#[derive(Clone, Debug)]
pub struct RelaxationOptions {
    pub sdp: SdpOptions,
    /// Relative singular-value threshold for the rank of the optimum.
    pub rank_tol: f64,
    /// Coefficient tolerance when checking a recovered decomposition.
    pub verify_tol: f64,
    pub seed: u64,
    /// Refine recovered points by Gauss-Newton on the input moments.
    pub polish: bool,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            sdp: SdpOptions::default(),
            rank_tol: 1e-6,
            verify_tol: 1e-6,
            seed: 0,
            polish: true,
        }
    }
}

/// Dual variables in the original coordinates: `S = I - sum y_a Y_a - sum z Z`.
#[derive(Clone, Debug)]
pub struct DualSolution {
    /// One value per class with `|a| <= 2d`, in class order.
    pub y: Vec<f64>,
    /// One value per `Z` matrix, in class order.
    pub z: Vec<f64>,
    pub s: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceComparison {
    pub reference_trace: f64,
    /// `(reference - optimum) / reference`.
    pub relative_gap: f64,
}

#[derive(Clone, Debug)]
pub struct RelaxationReport {
    pub n: usize,
    pub d: u32,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Optimal matrix in the original coordinates.
    pub x: DMatrix<f64>,
    pub trace: f64,
    /// Power of two the points were divided by before solving.
    pub scale: f64,
    /// Eigenvalues of the normalized optimum divided by the largest.
    pub relative_eigenvalues: Vec<f64>,
    pub rank: usize,
    pub rank_tol: f64,
    pub flatness: FlatExtension,
    pub decomposition: Option<Decomposition>,
    pub extraction_error: Option<String>,
    /// `(passed, max coefficient deviation)` of the recovered decomposition.
    pub verification: Option<(bool, f64)>,
    pub reference: Option<ReferenceComparison>,
    /// Largest relative spread inside a support class of the normalized optimum.
    pub class_spread: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// `<X, S>` in normalized coordinates.
    pub normalized_gap: f64,
    pub dual: DualSolution,
}

/// `X_{b b'} = X'_{b b'} * s^(|b| + |b'|)`.
fn unscale_primal(xn: &DMatrix<f64>, basis: &MonomialBasis, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(xn.nrows(), xn.ncols(), |i, j| {
        xn[(i, j)] * s.powi((basis.get(i).degree() + basis.get(j).degree()) as i32)
    })
}

/// `S_{b b'} = S'_{b b'} * s^(2d + 2 - |b| - |b'|)`.
pub(crate) fn unscale_dual(sn: &DMatrix<f64>, basis: &MonomialBasis, s: f64) -> DMatrix<f64> {
    let top = 2 * basis.max_degree() as i32;
    DMatrix::from_fn(sn.nrows(), sn.ncols(), |i, j| {
        sn[(i, j)] * s.powi(top - (basis.get(i).degree() + basis.get(j).degree()) as i32)
    })
}

/// Recovers `(y, z)` from a dual slack: `y_a = <Y_a, I - S> / c_a`, `z = <Z, I - S>`.
pub fn dual_from_slack(s: &DMatrix<f64>, basis: &OrthBasis) -> DualSolution {
    let size = basis.basis.len();
    let r = DMatrix::identity(size, size) - s;
    let y = basis
        .classes
        .iter()
        .filter(|c| c.alpha.degree() <= 2 * basis.d)
        .map(|c| linalg::inner(&c.y, &r) / c.multiplicity as f64)
        .collect();
    let z = basis.classes.iter().flat_map(|c| c.z.iter().map(|z| linalg::inner(z, &r))).collect();
    DualSolution { y, z, s: s.clone() }
}

/// Solves the relaxation for `p` of degree bound `2d` and interprets the optimum.
pub fn solve_relaxation(
    p: &Polynomial,
    opts: &RelaxationOptions,
    reference: Option<&Decomposition>,
) -> Result<RelaxationReport> {
    let n = p.nvars();
    if !p.degree_bound().is_multiple_of(2) || p.degree_bound() < 2 {
        return Err(GramianError::InvalidArgument(format!(
            "degree bound {} is not a positive even number",
            p.degree_bound()
        )));
    }
    if p.constant_term() == 0.0 {
        return Err(GramianError::ZeroConstantTerm);
    }
    let d = p.degree_bound() / 2;
    let moments = moments_from_poly(p, d)?;
    let scale = moments.natural_scale();
    let normalized = moments.scaled(1.0 / scale);

    let basis = build_orth_basis(n, d)?;
    let problem = assemble_relaxation(&normalized, &basis)?;
    let sol = solve_sdp(&problem, &opts.sdp);
    match sol.status {
        SdpStatus::PrimalInfeasible => {
            return Err(GramianError::Solver(format!(
                "relaxation is infeasible: no positive semidefinite moment matrix matches the coefficients (primal residual {:.3e})",
                sol.primal_residual
            )))
        }
        SdpStatus::NumericalFailure
            if sol.primal_residual > 1e-4
                || sol.dual_residual > 1e-4
                || (sol.primal_objective - sol.dual_objective).abs()
                    > 1e-4 * (1.0 + sol.primal_objective.abs() + sol.dual_objective.abs()) =>
        {
            return Err(GramianError::Solver(format!(
                "no convergence after {} iterations (primal residual {:.3e}, dual residual {:.3e}, gap {:.3e})",
                sol.iterations, sol.primal_residual, sol.dual_residual, sol.gap
            )))
        }
        _ => {}
    }

    let (eig, _) = linalg::sym_eigen(&sol.x);
    let top = eig.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let relative_eigenvalues = eig.iter().map(|v| v / top).collect();
    let (rank, _) = numerical_rank(&sol.x, opts.rank_tol);

    let (mm, class_spread) = MomentMatrix::from_matrix(&sol.x, n, d + 1)?;
    let flatness = check_flat_extension(&mm.truncated(d), &mm, opts.rank_tol)?;

    let mut decomposition = None;
    let mut extraction_error = None;
    let mut verification = None;
    if let FlatExtension::Flat { rank: r } = flatness {
        match extract_points(&mm, r, opts.rank_tol, opts.seed) {
            Ok(dec_n) => {
                let dec_n = if opts.polish { polish(&dec_n, &normalized) } else { dec_n };
                let dec = dec_n.scaled(scale);
                verification = Some(verify_decomposition(p, &dec, opts.verify_tol)?);
                decomposition = Some(dec);
            }
            Err(e) => extraction_error = Some(e.to_string()),
        }
    }

    let x = unscale_primal(&sol.x, &basis.basis, scale);
    let trace = x.trace();
    let reference = reference.map(|dec| {
        let reference_trace = moment_matrix_of(dec, d + 1).trace();
        ReferenceComparison {
            reference_trace,
            relative_gap: (reference_trace - trace) / reference_trace.abs().max(f64::MIN_POSITIVE),
        }
    });
    let dual = dual_from_slack(&unscale_dual(&sol.s, &basis.basis, scale), &basis);

    Ok(RelaxationReport {
        n,
        d,
        status: sol.status,
        iterations: sol.iterations,
        x,
        trace,
        scale,
        relative_eigenvalues,
        rank,
        rank_tol: opts.rank_tol,
        flatness,
        decomposition,
        extraction_error,
        verification,
        reference,
        class_spread,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        normalized_gap: sol.gap,
        dual,
    })
}

/// Gauss-Newton refinement of weights and coordinates against the moments
/// `m_a`, `|a| <= max_degree`. Returns the input when no step improves it.
pub fn polish(dec: &Decomposition, m: &MomentSequence) -> Decomposition {
    let n = dec.nvars();
    let r = dec.rank();
    let basis = m.basis();
    let target = nalgebra::DVector::from_column_slice(m.values());
    let residual = |pts: &[Vec<f64>], w: &[f64]| {
        nalgebra::DVector::from_iterator(
            basis.len(),
            basis.iter().map(|a| pts.iter().zip(w).map(|(z, wt)| wt * a.eval(z)).sum::<f64>()),
        ) - &target
    };
    let mut pts = dec.points().to_vec();
    let mut w = dec.weights().to_vec();
    let mut res = residual(&pts, &w);
    for _ in 0..30 {
        let mut jac = DMatrix::zeros(basis.len(), r * (n + 1));
        for (row, a) in basis.iter().enumerate() {
            for t in 0..r {
                jac[(row, t * (n + 1))] = a.eval(&pts[t]);
                for i in 0..n {
                    if let Some(lower) = a.checked_sub(&MultiIndex::unit(n, i)) {
                        jac[(row, t * (n + 1) + 1 + i)] =
                            w[t] * a.exponents()[i] as f64 * lower.eval(&pts[t]);
                    }
                }
            }
        }
        let step = linalg::lstsq_vec(&jac, &res, 1e-12);
        let new_pts: Vec<Vec<f64>> = (0..r)
            .map(|t| (0..n).map(|i| pts[t][i] - step[t * (n + 1) + 1 + i]).collect())
            .collect();
        let new_w: Vec<f64> = (0..r).map(|t| w[t] - step[t * (n + 1)]).collect();
        let new_res = residual(&new_pts, &new_w);
        if new_res.norm().is_nan() || new_res.norm() >= res.norm() || new_w.iter().any(|v| *v <= 0.0) {
            break;
        }
        let done = new_res.norm() > 0.5 * res.norm();
        pts = new_pts;
        w = new_w;
        res = new_res;
        if done {
            break;
        }
    }
    Decomposition::new(pts, w).unwrap_or_else(|_| dec.clone())
}

/// Trace of `M_{d+1}` of a decomposition, from exact moments when integral.
pub fn reference_trace(dec: &Decomposition, d: u32) -> f64 {
    let m = moments_from_decomposition(dec, 2 * d + 2);
    MonomialBasis::new(dec.nvars(), d + 1)
        .iter()
        .map(|b| m.get(&b.add(b)).expect("degree bound"))
        .sum()
}
