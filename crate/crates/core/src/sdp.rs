//! Dense primal-dual interior-point solver for standard-form semidefinite programs
//!
//! ```text
//! (P)  min <C, X>  s.t. <A_i, X> = b_i,  X psd
//! (D)  max b^T y   s.t. C - sum_i y_i A_i = S,  S psd
//! ```
//!
//! Infeasible path-following with the HKM direction and a Mehrotra
//! predictor-corrector. Constraints are orthonormalized up front, which also
//! removes linearly dependent rows after checking that they are consistent.
//! Once feasibility and the gap tests pass, up to five centring steps toward
//! `X S = mu I` are taken and the iterate with the smallest `|X S|` is kept.
//! Primal infeasibility is reported from an approximate Farkas certificate once
//! the dual objective has diverged past a bound; this is a heuristic.

use nalgebra::{DMatrix, DVector};

use crate::error::{GramianError, Result};
use crate::linalg;

#[derive(Clone, Debug)]
pub struct SdpProblem {
    size: usize,
    c: DMatrix<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<f64>,
}

impl SdpProblem {
    pub fn new(c: DMatrix<f64>, a: Vec<DMatrix<f64>>, b: Vec<f64>) -> Result<Self> {
        let size = c.nrows();
        if c.ncols() != size {
            return Err(GramianError::DimensionMismatch("cost matrix is not square".into()));
        }
        if a.is_empty() {
            return Err(GramianError::InvalidArgument("at least one constraint is required".into()));
        }
        if a.len() != b.len() {
            return Err(GramianError::DimensionMismatch(format!(
                "{} constraint matrices but {} right-hand sides",
                a.len(),
                b.len()
            )));
        }
        let asym = |m: &DMatrix<f64>| (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0);
        if asym(&c) {
            return Err(GramianError::InvalidArgument("cost matrix is not symmetric".into()));
        }
        for (i, ai) in a.iter().enumerate() {
            if ai.shape() != (size, size) {
                return Err(GramianError::DimensionMismatch(format!("constraint {i} has the wrong size")));
            }
            if asym(ai) {
                return Err(GramianError::InvalidArgument(format!("constraint {i} is not symmetric")));
            }
        }
        Ok(SdpProblem { size, c, a, b })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn num_constraints(&self) -> usize {
        self.a.len()
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn constraints(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn rhs(&self) -> &[f64] {
        &self.b
    }

    /// `(<A_i, X>)_i`.
    pub fn apply(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.a.len(), self.a.iter().map(|ai| linalg::inner(ai, x)))
    }

    /// `sum_i y_i A_i`.
    pub fn adjoint(&self, y: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.size, self.size);
        for (ai, yi) in self.a.iter().zip(y) {
            out.zip_apply(ai, |o, a| *o += yi * a);
        }
        out
    }

    /// Same problem with the constraints listed in another order.
    pub fn permuted(&self, order: &[usize]) -> SdpProblem {
        SdpProblem {
            size: self.size,
            c: self.c.clone(),
            a: order.iter().map(|&i| self.a[i].clone()).collect(),
            b: order.iter().map(|&i| self.b[i]).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SdpOptions {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Starting point `X = S = initial_scale * I`; defaults to `1 + max |b_i|`
    /// over the orthonormalized constraints.
    pub initial_scale: Option<f64>,
    /// Dual objective beyond which a Farkas certificate is tested.
    pub infeasibility_bound: f64,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            gap_tol: 1e-8,
            feas_tol: 1e-8,
            max_iter: 200,
            initial_scale: None,
            infeasibility_bound: 1e8,
            step_fraction: 0.9,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    NumericalFailure,
}

/// Objectives and residuals of one iterate, for diagnostics.
#[derive(Clone, Debug)]
pub struct IterateRecord {
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `<X, S>`.
    pub complementarity: f64,
    /// `|<C - A^T y - S, X>| + |y^T (b - A(X))|`, the slack in weak duality
    /// caused by infeasibility of the iterate.
    pub infeasibility_slack: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub s: DMatrix<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `<X, S>`.
    pub gap: f64,
    pub iterations: usize,
    /// `max_i |<A_i, X> - b_i| / (1 + |b_i|)`.
    pub primal_residual: f64,
    /// `|C - A^T y - S| / max(1, |C|)`.
    pub dual_residual: f64,
    pub history: Vec<IterateRecord>,
    /// Indices of constraints dropped as linearly dependent.
    pub dropped: Vec<usize>,
}

/// Orthonormalized constraint system: `q_k = sum_j t[k][j] a_j`.
struct Reduced {
    q: Vec<DMatrix<f64>>,
    t: Vec<DVector<f64>>,
    b: DVector<f64>,
    dropped: Vec<usize>,
}

fn orthonormalize(p: &SdpProblem, feas_tol: f64) -> std::result::Result<Reduced, usize> {
    let m = p.a.len();
    let mut q: Vec<DMatrix<f64>> = Vec::new();
    let mut t: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    let b_full = DVector::from_column_slice(&p.b);
    for i in 0..m {
        let norm_i = p.a[i].norm();
        let mut v = p.a[i].clone();
        let mut coef = DVector::zeros(m);
        coef[i] = 1.0;
        for _ in 0..2 {
            for (qk, tk) in q.iter().zip(&t) {
                let proj = linalg::inner(qk, &v);
                v.zip_apply(qk, |o, a| *o -= proj * a);
                coef.axpy(-proj, tk, 1.0);
            }
        }
        let nv = v.norm();
        if norm_i == 0.0 || nv <= 1e-10 * norm_i {
            // sum_j coef_j a_j vanishes, so the same combination of b must
            let combo = coef.dot(&b_full);
            let scale = 1.0 + coef.iter().zip(&p.b).map(|(c, b)| (c * b).abs()).sum::<f64>();
            if combo.abs() > feas_tol.max(1e-10) * scale {
                return Err(i);
            }
            dropped.push(i);
            continue;
        }
        q.push(v / nv);
        t.push(coef / nv);
    }
    let b = DVector::from_iterator(t.len(), t.iter().map(|tk| tk.dot(&b_full)));
    Ok(Reduced { q, t, b, dropped })
}

struct Workspace<'a> {
    c: &'a DMatrix<f64>,
    q: &'a [DMatrix<f64>],
}

impl Workspace<'_> {
    fn apply(&self, x: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(self.q.len(), self.q.iter().map(|qk| linalg::inner(qk, x)))
    }

    fn adjoint(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let n = self.c.nrows();
        let mut out = DMatrix::zeros(n, n);
        for (qk, yk) in self.q.iter().zip(y.iter()) {
            out.zip_apply(qk, |o, a| *o += yk * a);
        }
        out
    }

    /// Solves the HKM system for right-hand sides `(rp, rd, rc)`, with two
    /// rounds of refinement on `A(dX) = rp` and a final projection onto it.
    fn direction(
        &self,
        x: &DMatrix<f64>,
        s_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        schur: &SchurFactor,
        rp: &DVector<f64>,
        rd: &DMatrix<f64>,
        rc: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
        // W S^-1 = (S^-1 W^T)^T
        let right_solve = |w: &DMatrix<f64>| s_chol.solve(&w.transpose()).transpose();
        let dx_of = |ds: &DMatrix<f64>| linalg::symmetrize(&right_solve(&(rc - x * ds)));
        let base = linalg::symmetrize(&right_solve(&(rc - x * rd)));
        let mut dy = schur.solve(&(rp - self.apply(&base)));
        let mut ds = rd - self.adjoint(&dy);
        let mut dx = dx_of(&ds);
        for _ in 0..2 {
            let err = rp - self.apply(&dx);
            dy += schur.solve(&err);
            ds = rd - self.adjoint(&dy);
            dx = dx_of(&ds);
        }
        // the constraints are orthonormal, so this is the projection onto A(dX) = rp
        let err = rp - self.apply(&dx);
        dx += self.adjoint(&err);
        (dx, dy, ds)
    }
}

/// Factor `R` of the Schur matrix `M_ij = tr(A_i X A_j S^-1) = R^T R`.
///
/// With `X = L_x L_x^T` and `S = L_s L_s^T`, `M` is the Gram matrix of
/// `G_i = L_x^T A_i L_s^-T`; `R` comes from a QR factorization of the stacked
/// `vec(G_i)`, which avoids squaring the condition number.
struct SchurFactor {
    r: DMatrix<f64>,
}

impl SchurFactor {
    fn new(q: &[DMatrix<f64>], lx: &DMatrix<f64>, ls: &DMatrix<f64>) -> Option<Self> {
        let n = lx.nrows();
        let mut g = DMatrix::zeros(n * n, q.len());
        for (i, qi) in q.iter().enumerate() {
            // (L_x^T A_i) L_s^-T = (L_s^-1 (A_i L_x))^T
            let t = ls.solve_lower_triangular(&(qi * lx))?;
            g.column_mut(i).copy_from_slice(t.transpose().as_slice());
        }
        let r = g.qr().r();
        if r.diagonal().iter().any(|v| *v == 0.0 || !v.is_finite()) {
            return None;
        }
        Some(SchurFactor { r })
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let u = self.r.tr_solve_upper_triangular(rhs).expect("nonzero diagonal");
        self.r.solve_upper_triangular(&u).expect("nonzero diagonal")
    }
}

/// Solves `p`; never panics on hard instances, reporting `NumericalFailure`
/// with the last iterate instead.
const MAX_CENTRING_STEPS: usize = 5;

type Iterate = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

pub fn solve_sdp(p: &SdpProblem, opts: &SdpOptions) -> SdpSolution {
    let n = p.size;
    let m = p.a.len();
    let reduced = match orthonormalize(p, opts.feas_tol) {
        Ok(r) => r,
        Err(_) => {
            let x = DMatrix::zeros(n, n);
            return finish(p, SdpStatus::PrimalInfeasible, x, vec![0.0; m], DMatrix::zeros(n, n), 0, Vec::new(), Vec::new());
        }
    };
    // right-hand sides after orthonormalization, where nearly dependent
    // constraints show up as large values
    let init = opts
        .initial_scale
        .unwrap_or_else(|| 1.0 + reduced.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs())));
    let ws = Workspace { c: &p.c, q: &reduced.q };
    let k = reduced.q.len();
    let c_norm = p.c.norm().max(1.0);

    let mut x = DMatrix::identity(n, n) * init;
    let mut s = DMatrix::identity(n, n) * init;
    let mut y = DVector::zeros(k);
    let mut history = Vec::new();
    let mut status = SdpStatus::NumericalFailure;
    let mut iterations = 0;
    let mut stalls = 0;
    // (merit, iterate) of the best point seen, returned when convergence fails
    let mut best: Option<(f64, usize, Iterate)> = None;
    // (|XS| merit, iterate) of the best converged point
    let mut converged: Option<(f64, Iterate)> = None;
    let mut centring_steps = 0;

    let to_original = |yk: &DVector<f64>| -> Vec<f64> {
        let mut out = DVector::zeros(m);
        for (tk, v) in reduced.t.iter().zip(yk.iter()) {
            out.axpy(*v, tk, 1.0);
        }
        out.iter().copied().collect()
    };

    for it in 0..=opts.max_iter {
        iterations = it;
        let rp = &reduced.b - ws.apply(&x);
        let rd = &p.c - ws.adjoint(&y) - &s;
        let pobj = linalg::inner(&p.c, &x);
        let dobj = reduced.b.dot(&y);
        let xs = linalg::inner(&x, &s);
        history.push(IterateRecord {
            primal_objective: pobj,
            dual_objective: dobj,
            complementarity: xs,
            infeasibility_slack: linalg::inner(&rd, &x).abs() + y.dot(&rp).abs(),
        });

        let orig_rp = p.apply(&x) - DVector::from_column_slice(&p.b);
        let prim_res = orig_rp
            .iter()
            .zip(&p.b)
            .fold(0.0f64, |acc, (r, b)| acc.max(r.abs() / (1.0 + b.abs())));
        let dual_res = rd.norm() / c_norm;
        let core_merit = (prim_res / opts.feas_tol)
            .max(dual_res / opts.feas_tol)
            .max(xs / (opts.gap_tol * (1.0 + pobj.abs())))
            .max((pobj - dobj).abs() / (opts.gap_tol * (1.0 + pobj.abs() + dobj.abs())));
        let merit = core_merit;
        if merit <= 1.0 {
            status = SdpStatus::Optimal;
            best = None;
            // converged: spend a few centring steps on |XS| and keep the best iterate
            let centred = (&x * &s).norm() / (opts.gap_tol * (1.0 + x.norm() * s.norm()));
            if converged.as_ref().is_none_or(|c| centred < c.0) {
                converged = Some((centred, (x.clone(), y.clone(), s.clone())));
            }
            centring_steps += 1;
            if centred <= 1.0 || centring_steps > MAX_CENTRING_STEPS || it == opts.max_iter {
                break;
            }
        } else if converged.is_some() {
            if it == opts.max_iter {
                break;
            }
        } else {
            match &best {
            Some((b, ..)) if *b <= merit => {
                if it >= best.as_ref().map_or(0, |b| b.1) + 10 {
                    break;
                }
            }
            _ => best = Some((merit, it, (x.clone(), y.clone(), s.clone()))),
            }
        }
        if dobj > opts.infeasibility_bound * (1.0 + c_norm) && farkas(&ws, &y, dobj, opts.feas_tol) {
            status = SdpStatus::PrimalInfeasible;
            break;
        }
        if it == opts.max_iter || stalls >= 5 {
            break;
        }

        let Some(s_chol) = s.clone().cholesky() else { break };
        let Some(x_chol) = x.clone().cholesky() else { break };
        let Some(schur_chol) = SchurFactor::new(&reduced.q, &x_chol.l(), &s_chol.l()) else { break };

        let mu = xs / n as f64;
        let rc = if converged.is_some() {
            // recentre at the largest mu both gap tests allow, where X S = mu I is best conditioned
            let nf = n as f64;
            let target = 0.5 * opts.gap_tol * ((1.0 + pobj.abs()) / nf).min((1.0 + x.norm() * s.norm()) / nf.sqrt());
            DMatrix::identity(n, n) * target - &x * &s
        } else {
            let rc_aff = -(&x * &s);
            let (dxa, _, dsa) = ws.direction(&x, &s_chol, &schur_chol, &rp, &rd, &rc_aff);
            let ap = (opts.step_fraction * linalg::max_psd_step(&x, &dxa)).min(1.0);
            let ad = (opts.step_fraction * linalg::max_psd_step(&s, &dsa)).min(1.0);
            let mu_aff = linalg::inner(&(&x + &dxa * ap), &(&s + &dsa * ad)) / n as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);
            DMatrix::identity(n, n) * (sigma * mu) - &x * &s - &dxa * &dsa
        };
        let (dx, dy, ds) = ws.direction(&x, &s_chol, &schur_chol, &rp, &rd, &rc);
        let ap = (opts.step_fraction * linalg::max_psd_step(&x, &dx)).min(1.0);
        let ad = (opts.step_fraction * linalg::max_psd_step(&s, &ds)).min(1.0);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        x = linalg::symmetrize(&(&x + dx * ap));
        y += dy * ad;
        s = linalg::symmetrize(&(&s + ds * ad));
    }

    if let Some((_, (cx, cy, cs))) = converged {
        status = SdpStatus::Optimal;
        x = cx;
        y = cy;
        s = cs;
    } else if status == SdpStatus::NumericalFailure {
        if let Some((_, _, (bx, by, bs))) = best {
            x = bx;
            y = by;
            s = bs;
        }
    }
    let y_orig = to_original(&y);
    finish(p, status, x, y_orig, s, iterations, history, reduced.dropped)
}

/// `b^T y > 0` and `-A^T y / b^T y` is positive semidefinite up to `tol`.
fn farkas(ws: &Workspace<'_>, y: &DVector<f64>, dobj: f64, tol: f64) -> bool {
    if dobj <= 0.0 {
        return false;
    }
    let cert = ws.adjoint(y) * (-1.0 / dobj);
    let scale = cert.norm().max(f64::MIN_POSITIVE);
    linalg::min_eigenvalue(&cert) >= -tol.sqrt() * scale
}

#[allow(clippy::too_many_arguments)]
fn finish(
    p: &SdpProblem,
    status: SdpStatus,
    x: DMatrix<f64>,
    y: Vec<f64>,
    s: DMatrix<f64>,
    iterations: usize,
    history: Vec<IterateRecord>,
    dropped: Vec<usize>,
) -> SdpSolution {
    let rp = p.apply(&x) - DVector::from_column_slice(&p.b);
    let primal_residual =
        rp.iter().zip(&p.b).fold(0.0f64, |acc, (r, b)| acc.max(r.abs() / (1.0 + b.abs())));
    let dual_residual = (&p.c - p.adjoint(&y) - &s).norm() / p.c.norm().max(1.0);
    SdpSolution {
        status,
        primal_objective: linalg::inner(&p.c, &x),
        dual_objective: p.b.iter().zip(&y).map(|(b, v)| b * v).sum(),
        gap: linalg::inner(&x, &s),
        iterations,
        primal_residual,
        dual_residual,
        x,
        y,
        s,
        history,
        dropped,
    }
}

/// Residual diagnostics of a candidate primal-dual pair.
#[derive(Clone, Debug)]
pub struct OptimalityReport {
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
    /// `|X S|` (Frobenius).
    pub product_norm: f64,
    pub min_eig_x: f64,
    pub min_eig_s: f64,
    pub optimal_pair: bool,
}

/// Checks feasibility of `x` and `(y, s)` and complementarity `<X, S>`.
pub fn check_optimality_pair(
    x: &DMatrix<f64>,
    y: &[f64],
    s: &DMatrix<f64>,
    p: &SdpProblem,
    tol: f64,
) -> Result<OptimalityReport> {
    if x.shape() != (p.size, p.size) || s.shape() != (p.size, p.size) || y.len() != p.a.len() {
        return Err(GramianError::DimensionMismatch("pair does not match the problem".into()));
    }
    let rp = p.apply(x) - DVector::from_column_slice(&p.b);
    let primal_residual =
        rp.iter().zip(&p.b).fold(0.0f64, |acc, (r, b)| acc.max(r.abs() / (1.0 + b.abs())));
    let dual_residual = (&p.c - p.adjoint(y) - s).norm() / p.c.norm().max(1.0);
    let complementarity = linalg::inner(x, s);
    let min_eig_x = linalg::min_eigenvalue(x);
    let min_eig_s = linalg::min_eigenvalue(s);
    let psd_ok = min_eig_x >= -tol * x.norm().max(1.0) && min_eig_s >= -tol * s.norm().max(1.0);
    let optimal_pair = primal_residual <= tol
        && dual_residual <= tol
        && psd_ok
        && complementarity.abs() <= tol * (1.0 + x.trace());
    Ok(OptimalityReport {
        primal_residual,
        dual_residual,
        complementarity,
        product_norm: (x * s).norm(),
        min_eig_x,
        min_eig_s,
        optimal_pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e11() -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])
    }

    #[test]
    fn forced_diagonal() {
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![e11()], vec![1.0]).unwrap();
        let sol = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 1.0).abs() < 1e-7);
        assert!((&sol.x - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-6);
    }

    #[test]
    fn off_diagonal_constraint() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![a], vec![2.0]).unwrap();
        let sol = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.primal_objective - 2.0).abs() < 1e-7);
        assert!((&sol.x - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-6);
    }

    #[test]
    fn negative_trace_is_infeasible() {
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2)], vec![-1.0]).unwrap();
        assert_eq!(solve_sdp(&p, &SdpOptions::default()).status, SdpStatus::PrimalInfeasible);
    }

    #[test]
    fn inconsistent_duplicates_are_infeasible() {
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![e11(), e11()], vec![1.0, 2.0]).unwrap();
        assert_eq!(solve_sdp(&p, &SdpOptions::default()).status, SdpStatus::PrimalInfeasible);
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![e11(), e11() * 2.0], vec![1.0, 2.0]).unwrap();
        let sol = solve_sdp(&p, &SdpOptions::default());
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert_eq!(sol.dropped, vec![1]);
    }

    #[test]
    fn optimality_pair_checks() {
        let p = SdpProblem::new(DMatrix::identity(2, 2), vec![e11()], vec![1.0]).unwrap();
        let x = e11();
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(check_optimality_pair(&x, &[1.0], &s, &p, 1e-10).unwrap().optimal_pair);
        let i = DMatrix::identity(2, 2);
        let rep = check_optimality_pair(&i, &[0.0], &i, &p, 1e-10).unwrap();
        assert!(!rep.optimal_pair);
        assert!((rep.complementarity - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_problems() {
        assert!(SdpProblem::new(DMatrix::identity(2, 2), vec![], vec![]).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(SdpProblem::new(DMatrix::identity(2, 2), vec![asym], vec![1.0]).is_err());
    }
}
