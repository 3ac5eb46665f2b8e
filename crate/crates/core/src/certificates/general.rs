//! Search over the full block parametrization
//! `G = [[A, g], [g^T, I - sum z Z]]`.

use nalgebra::{DMatrix, DVector};

use super::{finalize, prepare, CertifyOptions, Certificate, CertificateMethod, Corroboration, Prepared, Representation, Verdict};
use crate::error::Result;
use crate::linalg;
use crate::monomial::MonomialBasis;
use crate::poly::{poly_from_decomposition, Decomposition};
use crate::relaxation::{build_orth_basis, solve_relaxation, OrthBasis};
use crate::sdp::{solve_sdp, SdpProblem, SdpStatus};

/// `K^T Y_b K` for every `|b| = 2d+1` (target 0) and `|b| = 2d+2`
/// (target 1 for even `b`, else 0).
fn coefficient_constraints(prep: &Prepared, orth: &OrthBasis) -> Vec<(DMatrix<f64>, f64, bool)> {
    let k = &prep.kernel.k_next;
    orth.classes()
        .iter()
        .filter(|c| c.alpha.degree() > 2 * prep.d)
        .map(|c| {
            let top = c.alpha.degree() == 2 * prep.d + 2;
            let target = if top && c.alpha.is_square() { 1.0 } else { 0.0 };
            (linalg::symmetrize(&(k.transpose() * &c.y * k)), target, top)
        })
        .collect()
}

/// Top-degree `Z` matrices restricted to the degree-`(d+1)` block.
fn top_block_z(orth: &OrthBasis, basis: &MonomialBasis, d: u32) -> Vec<DMatrix<f64>> {
    let start = basis.prefix_len(d);
    let s = basis.len() - start;
    orth.classes()
        .iter()
        .filter(|c| c.alpha.degree() == 2 * d + 2)
        .flat_map(|c| c.z.iter().map(|z| z.view((start, start), (s, s)).into_owned()))
        .collect()
}

fn assemble_g(a: &DMatrix<f64>, g: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (t, s) = g.shape();
    let mut out = DMatrix::zeros(t + s, t + s);
    out.view_mut((0, 0), (t, t)).copy_from(a);
    out.view_mut((0, t), (t, s)).copy_from(g);
    out.view_mut((t, 0), (s, t)).copy_from(&g.transpose());
    out.view_mut((t, t), (s, s)).copy_from(b);
    out
}

/// `A = g B^{-1} g^T + I` when `B` is positive definite, which makes `G`
/// positive definite without touching any coefficient of `x^T S x`.
fn complete_a(g: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = b.clone().cholesky()?;
    let t = g.nrows();
    Some(linalg::symmetrize(&(g * chol.solve(&g.transpose()))) + DMatrix::identity(t, t))
}

struct FastPath {
    g: DMatrix<f64>,
    z: Vec<f64>,
    residual: f64,
}

/// Minimum-norm `z` over all `g` solving the odd-degree constraints with
/// `B = I - sum z Z`.
fn fast_path(
    constraints: &[(DMatrix<f64>, f64, bool)],
    zs: &[DMatrix<f64>],
    t: usize,
    s: usize,
    tol: f64,
) -> FastPath {
    let odd: Vec<_> = constraints.iter().filter(|c| !c.2).collect();
    let rows = odd.len();
    let mut eg = DMatrix::zeros(rows, t * s);
    let mut ez = DMatrix::zeros(rows, zs.len());
    let mut rhs = DVector::zeros(rows);
    for (row, (c, target, _)) in odd.iter().enumerate() {
        for a in 0..t {
            for j in 0..s {
                eg[(row, a * s + j)] = 2.0 * c[(a, t + j)];
            }
        }
        let cb = c.view((t, t), (s, s));
        for (k, z) in zs.iter().enumerate() {
            ez[(row, k)] = -linalg::inner(&cb.into_owned(), z);
        }
        rhs[row] = target - cb.trace();
    }
    let svd = linalg::svd_sorted(&eg);
    let rank = linalg::rank_from_singular_values(&svd.s, tol);
    let range = svd.u.columns(0, rank).into_owned();
    let project = |m: &DMatrix<f64>| m - &range * (range.transpose() * m);
    let rhs_m = DMatrix::from_column_slice(rows, 1, rhs.as_slice());
    let z = linalg::lstsq(&project(&ez), &project(&rhs_m), tol);
    let rest = &rhs_m - &ez * &z;
    let g = linalg::lstsq(&eg, &rest, tol);
    let residual = (&eg * &g - &rest).norm();
    let g = DMatrix::from_fn(t, s, |a, j| g[(a * s + j, 0)]);
    FastPath { g, z: z.column(0).iter().copied().collect(), residual: residual / (1.0 + rhs.norm()) }
}

/// Looks for any certificate `S = K_{d+1} G K_{d+1}^T` with `G` positive
/// semidefinite.
///
/// Tries the closed-form slice first: if the minimum-norm `z` has `|z| < 1`
/// then `I - sum z Z` is positive definite. Otherwise solves a feasibility
/// SDP in `G`, minimizing the trace of the free `A` block so that the dual
/// has an interior. Primal infeasibility yields
/// [`Verdict::InfeasibleHeuristic`], never a proof of non-existence.
pub fn certify_general(dec: &Decomposition, d: u32, opts: &CertifyOptions) -> Result<Certificate> {
    let prep = prepare(dec, d, opts)?;
    let (t, s) = (prep.kernel.t, prep.kernel.s);
    let orth = build_orth_basis(prep.n, d)?;
    let constraints = coefficient_constraints(&prep, &orth);
    let zs = top_block_z(&orth, &prep.basis, d);
    let mut diagnostics = Vec::new();

    let fast = fast_path(&constraints, &zs, t, s, opts.kernel_tol);
    let z_norm = fast.z.iter().map(|v| v * v).sum::<f64>().sqrt();
    diagnostics.push(format!("slice solution: |z| = {z_norm:.6}, residual {:.3e}", fast.residual));
    if fast.residual <= 1e-8 && z_norm < 1.0 {
        let b = DMatrix::identity(s, s)
            - zs.iter().zip(&fast.z).fold(DMatrix::zeros(s, s), |acc, (z, c)| acc + z * *c);
        if let Some(a) = complete_a(&fast.g, &b) {
            let g_full = assemble_g(&a, &fast.g, &b);
            let s_norm = linalg::symmetrize(&(&prep.kernel.k_next * g_full * prep.kernel.k_next.transpose()));
            let cert = finalize(
                &prep,
                s_norm,
                Representation::GeneralG { a, g: fast.g, z: fast.z },
                CertificateMethod::General,
                diagnostics.clone(),
                opts,
                None,
            );
            if cert.verdict.is_certified() {
                return Ok(cert);
            }
            diagnostics.push("slice candidate failed verification".into());
        }
    }

    let size = t + s;
    let (mats, rhs): (Vec<_>, Vec<_>) = constraints.iter().map(|(m, b, _)| (m.clone(), *b)).unzip();
    let mut cost = DMatrix::zeros(size, size);
    cost.view_mut((0, 0), (t, t)).fill_with_identity();
    let mut sol = solve_sdp(&SdpProblem::new(cost, mats.clone(), rhs.clone())?, &opts.sdp);
    diagnostics.push(format!(
        "feasibility SDP: {:?} after {} iterations, primal residual {:.3e}",
        sol.status, sol.iterations, sol.primal_residual
    ));
    if sol.status == SdpStatus::NumericalFailure && sol.primal_residual > opts.tol {
        sol = solve_sdp(&SdpProblem::new(DMatrix::identity(size, size), mats, rhs)?, &opts.sdp);
        diagnostics.push(format!(
            "trace objective: {:?} after {} iterations, primal residual {:.3e}",
            sol.status, sol.iterations, sol.primal_residual
        ));
    }

    match sol.status {
        SdpStatus::PrimalInfeasible => {
            let corroboration = if opts.corroborate { corroborate(dec, d, opts, &mut diagnostics) } else { None };
            let mut cert = Certificate::not_found(&prep, CertificateMethod::General, diagnostics);
            cert.verdict = Verdict::InfeasibleHeuristic;
            cert.corroboration = corroboration;
            Ok(cert)
        }
        SdpStatus::NumericalFailure if sol.primal_residual > opts.tol => {
            Ok(Certificate::not_found(&prep, CertificateMethod::General, diagnostics))
        }
        _ => {
            let g_sdp = linalg::symmetrize(&sol.x);
            let g = g_sdp.view((0, t), (t, s)).into_owned();
            let b = g_sdp.view((t, t), (s, s)).into_owned();
            let spectral = linalg::max_abs_eigenvalue(&b).max(f64::MIN_POSITIVE);
            let a = match complete_a(&g, &b) {
                Some(a) if linalg::min_eigenvalue(&b) > 1e-8 * spectral => a,
                _ => g_sdp.view((0, 0), (t, t)).into_owned(),
            };
            let residual_b = DMatrix::identity(s, s) - &b;
            let z = zs.iter().map(|zk| linalg::inner(zk, &residual_b)).collect();
            let g_full = assemble_g(&a, &g, &b);
            let s_norm = linalg::symmetrize(&(&prep.kernel.k_next * g_full * prep.kernel.k_next.transpose()));
            Ok(finalize(
                &prep,
                s_norm,
                Representation::GeneralG { a, g, z },
                CertificateMethod::General,
                diagnostics,
                opts,
                None,
            ))
        }
    }
}

fn corroborate(
    dec: &Decomposition,
    d: u32,
    opts: &CertifyOptions,
    diagnostics: &mut Vec<String>,
) -> Option<Corroboration> {
    let p = poly_from_decomposition(dec, d);
    match solve_relaxation(&p, &opts.relaxation, Some(dec)) {
        Ok(report) => {
            let reference = report.reference.expect("reference supplied");
            let threshold = 10.0 * opts.relaxation.sdp.gap_tol;
            Some(Corroboration {
                relaxation_trace: report.trace,
                reference_trace: reference.reference_trace,
                relative_gap: reference.relative_gap,
                threshold,
                corroborated: reference.relative_gap > threshold,
            })
        }
        Err(e) => {
            diagnostics.push(format!("relaxation cross-check failed: {e}"));
            None
        }
    }
}
