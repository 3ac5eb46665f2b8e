//! Optimality certificates for the moment matrix `M_{d+1}` of a decomposition.
//!
//! A certificate is a positive semidefinite `S` with `M_{d+1} S = 0` whose
//! quadratic form `x^T S x` has vanishing degree-`(2d+1)` coefficients and
//! degree-`(2d+2)` coefficients equal to `1` on even exponents and `0`
//! elsewhere.
//!
//! All searches run on points divided by [`Decomposition::natural_scale`];
//! the certificate is mapped back with `S_{b b'} = S'_{b b'} s^(2d+2-|b|-|b'|)`,
//! which preserves every condition above.

mod cases;
mod general;
mod sres;
mod witness;

use nalgebra::DMatrix;
use serde::Serialize;

pub use cases::{case_verdict, guaranteed_by_fullrank, hilbert_count, overconstraint_threshold, CaseVerdict, Rational};
pub use general::certify_general;
pub use sres::{build_subresultant, certify_sres, kernel_linear_system, top_degree_forms, HomogeneousForm, SresMatrix};
pub use witness::{rank_mod_p, witness_systems, WitnessKind, WitnessSystem};

use crate::error::{GramianError, Result};
use crate::linalg;
use crate::monomial::{binomial, dim_polys, homogeneous_monomials, MonomialBasis};
use crate::moment::{kernel_of, moment_matrix_of, numerical_rank, KernelBasis, DEFAULT_KERNEL_TOL};
use crate::poly::Decomposition;
use crate::relaxation::{unscale_dual, RelaxationOptions};
use crate::sdp::SdpOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Certified,
    CertifiedUnique,
    NotFound,
    InfeasibleHeuristic,
}

impl Verdict {
    pub fn is_certified(self) -> bool {
        matches!(self, Verdict::Certified | Verdict::CertifiedUnique)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Certified => "certified",
            Verdict::CertifiedUnique => "certified_unique",
            Verdict::NotFound => "not_found",
            Verdict::InfeasibleHeuristic => "infeasible_heuristic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertificateMethod {
    Subresultant,
    General,
}

/// How `S = K_{d+1} G K_{d+1}^T` was parametrized (normalized frame).
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// `G = [g^T I]^T [g I]`, plus `I` in the top-left block when
    /// `completed` (full rank `N - r`).
    AssumedG {
        #[serde(with = "linalg::as_rows")]
        g: DMatrix<f64>,
        completed: bool,
    },
    /// `G = [[A, g], [g^T, I - sum z Z]]`.
    GeneralG {
        #[serde(with = "linalg::as_rows")]
        a: DMatrix<f64>,
        #[serde(with = "linalg::as_rows")]
        g: DMatrix<f64>,
        z: Vec<f64>,
    },
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CertificateResiduals {
    /// `|M S| / (|M| |S|)`, Frobenius norms.
    pub ms_relative: f64,
    /// Largest `|coeff(x^T S x, x^b)|`, `|b| = 2d+1`.
    pub odd_coeff: f64,
    /// Largest `|coeff(x^T S x, x^b) - [b even]|`, `|b| = 2d+2`.
    pub even_coeff: f64,
    /// `min eig(S) / |S|_2`.
    pub min_eig_relative: f64,
    /// Largest entry of `|S|`, used to scale the coefficient tolerances.
    pub scale: f64,
    pub tol: f64,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SchurReduction {
    /// Original frame.
    #[serde(serialize_with = "linalg::as_rows::serialize")]
    pub s_bar: DMatrix<f64>,
    pub rank: usize,
    /// Rank bound `C(n+d, d+1)`.
    pub bound: usize,
    pub residuals: CertificateResiduals,
}

/// Relaxation cross-check attached to an infeasibility verdict.
#[derive(Clone, Debug, Serialize)]
pub struct Corroboration {
    pub relaxation_trace: f64,
    pub reference_trace: f64,
    pub relative_gap: f64,
    pub threshold: f64,
    pub corroborated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub n: usize,
    pub d: u32,
    pub r: usize,
    pub method: CertificateMethod,
    pub verdict: Verdict,
    pub scale: f64,
    pub representation: Option<Representation>,
    /// Original frame.
    #[serde(serialize_with = "linalg::as_rows::option")]
    pub s: Option<DMatrix<f64>>,
    #[serde(serialize_with = "linalg::as_rows::option")]
    pub s_normalized: Option<DMatrix<f64>>,
    pub rank: Option<usize>,
    /// `N - r`, the rank that together with uniqueness of the decomposition
    /// makes `M_{d+1}` the only optimum.
    pub unique_rank: usize,
    /// Normalized frame; decides the verdict.
    pub residuals: Option<CertificateResiduals>,
    /// The same checks on the original-frame matrices.
    pub literal_residuals: Option<CertificateResiduals>,
    pub schur: Option<SchurReduction>,
    pub corroboration: Option<Corroboration>,
    pub diagnostics: Vec<String>,
}

impl Certificate {
    fn not_found(prep: &Prepared, method: CertificateMethod, diagnostics: Vec<String>) -> Self {
        Certificate {
            n: prep.n,
            d: prep.d,
            r: prep.kernel.r,
            method,
            verdict: Verdict::NotFound,
            scale: prep.scale,
            representation: None,
            s: None,
            s_normalized: None,
            rank: None,
            unique_rank: prep.kernel.t + prep.kernel.s,
            residuals: None,
            literal_residuals: None,
            schur: None,
            corroboration: None,
            diagnostics,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    /// Tolerance for the certificate conditions.
    pub tol: f64,
    /// Relative tolerance for kernels and subresultant ranks.
    pub kernel_tol: f64,
    /// Relative tolerance for the rank of `S`.
    pub rank_tol: f64,
    /// Caller asserts the decomposition is the unique one of its rank.
    pub assume_unique: bool,
    pub sdp: SdpOptions,
    /// Run the relaxation when the certificate search is infeasible.
    pub corroborate: bool,
    pub relaxation: RelaxationOptions,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions {
            tol: 1e-6,
            kernel_tol: DEFAULT_KERNEL_TOL,
            rank_tol: 1e-8,
            assume_unique: false,
            sdp: SdpOptions::default(),
            corroborate: true,
            relaxation: RelaxationOptions::default(),
        }
    }
}

struct Prepared {
    n: usize,
    d: u32,
    scale: f64,
    kernel: KernelBasis,
    basis: MonomialBasis,
    /// Normalized frame.
    m: DMatrix<f64>,
    /// Original frame.
    m_original: DMatrix<f64>,
}

fn prepare(dec: &Decomposition, d: u32, opts: &CertifyOptions) -> Result<Prepared> {
    if d == 0 {
        return Err(GramianError::InvalidArgument("d must be at least 1".into()));
    }
    let n = dec.nvars();
    if dec.rank() > dim_polys(n, d) {
        return Err(GramianError::InvalidArgument(format!(
            "rank {} exceeds dim R_d = {}",
            dec.rank(),
            dim_polys(n, d)
        )));
    }
    let scale = dec.natural_scale();
    let normalized = dec.scaled(1.0 / scale);
    let kernel = kernel_of(&normalized, d, opts.kernel_tol)?;
    Ok(Prepared {
        n,
        d,
        scale,
        kernel,
        basis: MonomialBasis::new(n, d + 1),
        m: moment_matrix_of(&normalized, d + 1).matrix().clone(),
        m_original: moment_matrix_of(dec, d + 1).matrix().clone(),
    })
}

/// Coefficients of `x^T S x` at every monomial of degree `k`, in
/// [`homogeneous_monomials`] order.
pub fn quadratic_form_coeffs(s: &DMatrix<f64>, basis: &MonomialBasis, k: u32) -> Vec<f64> {
    let monos = homogeneous_monomials(basis.nvars(), k);
    let index: std::collections::HashMap<_, _> = monos.iter().enumerate().map(|(i, m)| (m.clone(), i)).collect();
    let mut out = vec![0.0; monos.len()];
    for i in 0..basis.len() {
        for j in 0..basis.len() {
            let sum = basis.get(i).add(basis.get(j));
            if let Some(&pos) = index.get(&sum) {
                out[pos] += s[(i, j)];
            }
        }
    }
    out
}

/// Checks the certificate conditions for `S` against `M = M_{d+1}`.
pub fn verify_certificate(s: &DMatrix<f64>, m: &DMatrix<f64>, basis: &MonomialBasis, tol: f64) -> CertificateResiduals {
    let top = basis.max_degree();
    let s_norm = s.norm();
    let ms_relative = if s_norm == 0.0 { 0.0 } else { (m * s).norm() / (m.norm() * s_norm) };
    let odd_coeff = quadratic_form_coeffs(s, basis, 2 * top - 1).iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let even_coeff = homogeneous_monomials(basis.nvars(), 2 * top)
        .iter()
        .zip(quadratic_form_coeffs(s, basis, 2 * top))
        .fold(0.0_f64, |a, (mono, v)| a.max((v - if mono.is_square() { 1.0 } else { 0.0 }).abs()));
    let spectral = linalg::max_abs_eigenvalue(s);
    let min_eig_relative = if spectral == 0.0 { 0.0 } else { linalg::min_eigenvalue(s) / spectral };
    let scale = s.amax().max(1.0);
    let passes = ms_relative <= tol
        && odd_coeff <= tol * scale
        && even_coeff <= tol * scale
        && min_eig_relative >= -tol;
    CertificateResiduals { ms_relative, odd_coeff, even_coeff, min_eig_relative, scale, tol, passes }
}

/// `S_bar = [S12; S22] S22^+ [S21 S22]`, splitting at degree `d`.
pub fn schur_reduce(s: &DMatrix<f64>, basis: &MonomialBasis) -> DMatrix<f64> {
    let k = basis.prefix_len(basis.max_degree() - 1);
    let m = s.nrows() - k;
    let s22 = s.view((k, k), (m, m)).into_owned();
    let right = s.columns(k, m).into_owned();
    let pinv = linalg::pseudo_inverse(&s22, 1e-12);
    linalg::symmetrize(&(&right * pinv * right.transpose()))
}

fn finalize(
    prep: &Prepared,
    s_norm: DMatrix<f64>,
    representation: Representation,
    method: CertificateMethod,
    mut diagnostics: Vec<String>,
    opts: &CertifyOptions,
    corroboration: Option<Corroboration>,
) -> Certificate {
    let residuals = verify_certificate(&s_norm, &prep.m, &prep.basis, opts.tol);
    let s = unscale_dual(&s_norm, &prep.basis, prep.scale);
    let literal_residuals = verify_certificate(&s, &prep.m_original, &prep.basis, opts.tol);
    let (rank, _) = numerical_rank(&s_norm, opts.rank_tol);
    let unique_rank = prep.kernel.t + prep.kernel.s;

    let s_bar_norm = schur_reduce(&s_norm, &prep.basis);
    let bound = binomial((prep.n as u32 + prep.d) as u64, (prep.d + 1) as u64) as usize;
    let schur = SchurReduction {
        s_bar: unscale_dual(&s_bar_norm, &prep.basis, prep.scale),
        rank: numerical_rank(&s_bar_norm, opts.rank_tol).0,
        bound,
        residuals: verify_certificate(&s_bar_norm, &prep.m, &prep.basis, opts.tol),
    };

    let verdict = if !residuals.passes {
        diagnostics.push(format!(
            "candidate fails: |MS| {:.3e}, odd {:.3e}, even {:.3e}, min eig {:.3e}",
            residuals.ms_relative, residuals.odd_coeff, residuals.even_coeff, residuals.min_eig_relative
        ));
        Verdict::NotFound
    } else if opts.assume_unique && rank == unique_rank {
        Verdict::CertifiedUnique
    } else {
        if opts.assume_unique {
            diagnostics.push(format!("rank of S is {rank}, uniqueness needs {unique_rank}"));
        }
        Verdict::Certified
    };

    Certificate {
        n: prep.n,
        d: prep.d,
        r: prep.kernel.r,
        method,
        verdict,
        scale: prep.scale,
        representation: Some(representation),
        s: Some(s),
        s_normalized: Some(s_norm),
        rank: Some(rank),
        unique_rank,
        residuals: Some(residuals),
        literal_residuals: Some(literal_residuals),
        schur: Some(schur),
        corroboration,
        diagnostics,
    }
}

/// Tries [`certify_sres`] first and falls back to [`certify_general`].
pub fn certify(dec: &Decomposition, d: u32, opts: &CertifyOptions) -> Result<Certificate> {
    let first = certify_sres(dec, d, opts)?;
    if first.verdict.is_certified() {
        return Ok(first);
    }
    let mut second = certify_general(dec, d, opts)?;
    let mut diagnostics = first.diagnostics;
    diagnostics.append(&mut second.diagnostics);
    second.diagnostics = diagnostics;
    Ok(second)
}
