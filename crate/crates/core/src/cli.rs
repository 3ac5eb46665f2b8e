//! Command-line jobs: argument parsing, the JSON input schema, report
//! assembly and output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certificates::{case_verdict, certify, CaseVerdict, Certificate, CertificateResiduals, CertifyOptions};
use crate::error::GramianError;
use crate::linalg::rows_of;
use crate::moment::FlatExtension;
use crate::monomial::{dim_polys, MultiIndex};
use crate::poly::{poly_from_decomposition, Decomposition, Polynomial};
use crate::relaxation::{build_orth_basis, solve_relaxation, RelaxationOptions, RelaxationReport};
use crate::sdp::SdpOptions;

pub const THREADS_ENV: &str = "GRAMIAN_SDP_THREADS";

#[derive(Parser, Debug)]
#[command(name = "gramian", version, about = "Decompose even-degree polynomials into weighted powers and certify the result")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
    #[command(flatten)]
    pub options: OptionArgs,
}

#[derive(Args, Debug, Clone)]
pub struct OptionArgs {
    /// Relative singular value threshold for numerical ranks.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol_rank: f64,
    /// Duality gap tolerance of the SDP solver.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_gap: f64,
    /// Feasibility tolerance of the SDP solver.
    #[arg(long, global = true, default_value_t = 1e-8)]
    pub tol_feas: f64,
    /// Tolerance on the certificate conditions.
    #[arg(long, global = true, default_value_t = 1e-6)]
    pub tol_cert: f64,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Assert the input decomposition is the unique one of its rank.
    #[arg(long, global = true)]
    pub assume_unique: bool,
    /// Add wall-clock timings (reports are then no longer byte-stable).
    #[arg(long, global = true)]
    pub timings: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
}

#[derive(Args, Debug, Clone)]
pub struct InputArgs {
    /// Input JSON file, or `-` for stdin.
    pub path: Option<PathBuf>,
    /// Inline JSON payload.
    #[arg(long, conflicts_with = "path")]
    pub json: Option<String>,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Solve the relaxation for a polynomial and recover its decomposition.
    Decompose(InputArgs),
    /// Search for a certificate that a decomposition's moment matrix is optimal.
    Certify(InputArgs),
    /// Classify (n, d, r) by the full-rank guarantees and the counting bound.
    Case {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        r: usize,
    },
    /// Certify random integer decompositions over a grid of (n, d, r).
    Sweep {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        d: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        r: Vec<usize>,
        /// Instances per cell.
        #[arg(long, default_value_t = 20)]
        instances: usize,
        /// Also write one CSV row per instance.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Skip the relaxation (trace, rank and gap columns stay empty).
        #[arg(long)]
        no_relax: bool,
    },
    /// Run the built-in worked examples against stored expectations.
    Reproduce,
}

/// One term of the `polynomial` array.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionDoc {
    pub points: Vec<Vec<f64>>,
    /// Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

/// Input document: exactly one of `polynomial` and `decomposition`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InputDoc {
    pub n: usize,
    pub d: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polynomial: Option<Vec<TermDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionDoc>,
}

impl InputDoc {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let doc: InputDoc = serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn from_decomposition(dec: &Decomposition, d: u32) -> Self {
        InputDoc {
            n: dec.nvars(),
            d,
            polynomial: None,
            decomposition: Some(DecompositionDoc {
                points: dec.points().to_vec(),
                weights: Some(dec.weights().to_vec()),
            }),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let schema = |msg: String| Err(CliError::Schema(msg));
        if self.n == 0 || self.d == 0 {
            return schema("n and d must be positive".into());
        }
        match (&self.polynomial, &self.decomposition) {
            (Some(_), Some(_)) | (None, None) => {
                schema("exactly one of \"polynomial\" and \"decomposition\" is required".into())
            }
            (Some(terms), None) => {
                let mut seen = std::collections::HashSet::new();
                for t in terms {
                    if t.exponents.len() != self.n {
                        return schema(format!("exponents {:?} do not have length n = {}", t.exponents, self.n));
                    }
                    if t.exponents.iter().sum::<u32>() > 2 * self.d {
                        return schema(format!("exponents {:?} exceed degree 2d = {}", t.exponents, 2 * self.d));
                    }
                    if !t.coeff.is_finite() {
                        return schema(format!("coefficient of {:?} is not finite", t.exponents));
                    }
                    if !seen.insert(t.exponents.clone()) {
                        return schema(format!("exponents {:?} appear twice", t.exponents));
                    }
                }
                Ok(())
            }
            (None, Some(dec)) => {
                if dec.points.is_empty() {
                    return schema("decomposition has no points".into());
                }
                if let Some(p) = dec.points.iter().find(|p| p.len() != self.n) {
                    return schema(format!("point {p:?} does not have length n = {}", self.n));
                }
                if let Some(w) = &dec.weights {
                    if w.len() != dec.points.len() {
                        return schema(format!("{} weights for {} points", w.len(), dec.points.len()));
                    }
                }
                self.decomposition().map(|_| ())
            }
        }
    }

    pub fn decomposition(&self) -> Result<Option<Decomposition>, CliError> {
        let Some(doc) = &self.decomposition else { return Ok(None) };
        let weights = doc.weights.clone().unwrap_or_else(|| vec![1.0; doc.points.len()]);
        Decomposition::new(doc.points.clone(), weights).map(Some).map_err(|e| CliError::Schema(e.to_string()))
    }

    /// The polynomial as given, or the one induced by the decomposition.
    pub fn polynomial(&self) -> Result<Polynomial, CliError> {
        match (&self.polynomial, self.decomposition()?) {
            (Some(terms), _) => {
                let terms: Vec<_> = terms.iter().map(|t| (MultiIndex::new(t.exponents.clone()), t.coeff)).collect();
                Polynomial::from_terms(self.n, 2 * self.d, &terms).map_err(|e| CliError::Schema(e.to_string()))
            }
            (None, Some(dec)) => Ok(poly_from_decomposition(&dec, self.d)),
            (None, None) => Err(CliError::Schema("no input".into())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SweepSpec {
    pub ns: Vec<usize>,
    pub ds: Vec<u32>,
    pub rs: Vec<usize>,
    pub instances: usize,
    pub csv: Option<PathBuf>,
    pub relax: bool,
}

#[derive(Clone, Debug)]
pub enum Job {
    Decompose(InputDoc),
    Certify(InputDoc),
    Case { n: usize, d: u32, r: usize },
    Sweep(SweepSpec),
    Reproduce,
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Decompose(_) => "decompose",
            Job::Certify(_) => "certify",
            Job::Case { .. } => "case",
            Job::Sweep(_) => "sweep",
            Job::Reproduce => "reproduce",
        }
    }
}

#[derive(Clone, Debug)]
pub struct JobOptions {
    pub tol_rank: f64,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub tol_cert: f64,
    pub seed: u64,
    pub assume_unique: bool,
    pub timings: bool,
}

impl Default for JobOptions {
    fn default() -> Self {
        JobOptions {
            tol_rank: 1e-6,
            tol_gap: 1e-8,
            tol_feas: 1e-8,
            tol_cert: 1e-6,
            seed: 0,
            assume_unique: false,
            timings: false,
        }
    }
}

impl JobOptions {
    fn sdp(&self) -> SdpOptions {
        SdpOptions { gap_tol: self.tol_gap, feas_tol: self.tol_feas, ..Default::default() }
    }

    pub fn relaxation(&self) -> RelaxationOptions {
        RelaxationOptions { sdp: self.sdp(), rank_tol: self.tol_rank, seed: self.seed, ..Default::default() }
    }

    pub fn certify(&self) -> CertifyOptions {
        CertifyOptions {
            tol: self.tol_cert,
            assume_unique: self.assume_unique,
            sdp: self.sdp(),
            relaxation: self.relaxation(),
            ..Default::default()
        }
    }

    fn echo(&self) -> Value {
        json!({
            "tol_rank": self.tol_rank,
            "tol_gap": self.tol_gap,
            "tol_feas": self.tol_feas,
            "tol_cert": self.tol_cert,
            "seed": self.seed,
            "assume_unique": self.assume_unique,
        })
    }
}

#[derive(Clone, Debug)]
pub struct JobSpec {
    pub job: Job,
    pub options: JobOptions,
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Schema(String),
    #[error("{0}")]
    Io(String),
    #[error("numerical failure: {message}")]
    Numerical { message: String, partial: Box<Value> },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }
}

fn read_input(args: &InputArgs) -> Result<InputDoc, CliError> {
    let text = match (&args.json, &args.path) {
        (Some(inline), _) => inline.clone(),
        (None, Some(p)) if p == Path::new("-") => {
            let mut s = String::new();
            std::io::Read::read_to_string(&mut std::io::stdin(), &mut s).map_err(|e| CliError::Io(e.to_string()))?;
            s
        }
        (None, Some(p)) => {
            std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?
        }
        (None, None) => return Err(CliError::Schema("an input path or --json payload is required".into())),
    };
    InputDoc::parse(&text)
}

impl JobSpec {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let o = cli.options;
        let job = match cli.command {
            CommandArgs::Decompose(input) => Job::Decompose(read_input(&input)?),
            CommandArgs::Certify(input) => Job::Certify(read_input(&input)?),
            CommandArgs::Case { n, d, r } => Job::Case { n, d, r },
            CommandArgs::Sweep { n, d, r, instances, csv, no_relax } => {
                Job::Sweep(SweepSpec { ns: n, ds: d, rs: r, instances, csv, relax: !no_relax })
            }
            CommandArgs::Reproduce => Job::Reproduce,
        };
        Ok(JobSpec {
            job,
            options: JobOptions {
                tol_rank: o.tol_rank,
                tol_gap: o.tol_gap,
                tol_feas: o.tol_feas,
                tol_cert: o.tol_cert,
                seed: o.seed,
                assume_unique: o.assume_unique,
                timings: o.timings,
            },
            out: o.out,
        })
    }
}

/// Report document and the process exit code it implies.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Value,
    pub exit_code: i32,
}

pub fn execute(spec: &JobSpec) -> Result<Outcome, CliError> {
    let start = Instant::now();
    let o = &spec.options;
    let (input, result, exit_code) = match &spec.job {
        Job::Decompose(doc) => {
            let (result, code) = decompose_job(doc, o)?;
            (serde_json::to_value(doc).expect("serializable"), result, code)
        }
        Job::Certify(doc) => (serde_json::to_value(doc).expect("serializable"), certify_job(doc, o)?, 0),
        Job::Case { n, d, r } => (json!({"n": n, "d": d, "r": r}), case_json(&case_job(*n, *d, *r)?), 0),
        Job::Sweep(s) => (
            json!({"n": s.ns, "d": s.ds, "r": s.rs, "instances": s.instances, "relax": s.relax}),
            sweep_job(s, o)?,
            0,
        ),
        Job::Reproduce => {
            let checks = reproduce(o);
            let all = checks.iter().all(|c| c.pass);
            let result = json!({ "all_pass": all, "checks": checks });
            (Value::Null, result, if all { 0 } else { 1 })
        }
    };
    let mut report = json!({
        "tool": {"name": env!("CARGO_PKG_NAME"), "version": env!("CARGO_PKG_VERSION")},
        "command": spec.job.name(),
        "seed": o.seed,
        "options": o.echo(),
        "input": input,
        "result": result,
    });
    if o.timings {
        report["timings"] = json!({"total_seconds": start.elapsed().as_secs_f64()});
    }
    Ok(Outcome { report, exit_code })
}

fn case_job(n: usize, d: u32, r: usize) -> Result<CaseVerdict, CliError> {
    if n == 0 || d == 0 || r == 0 || r > dim_polys(n, d) {
        return Err(CliError::Schema(format!("need 1 <= r <= dim R_d = {}", dim_polys(n.max(1), d))));
    }
    Ok(case_verdict(n, d, r))
}

fn case_json(v: &CaseVerdict) -> Value {
    let mut out = serde_json::to_value(v).expect("serializable");
    out["threshold"] = json!({
        "fraction": v.threshold.to_string(),
        "value": v.threshold.to_f64(),
    });
    out["summary"] = json!(if v.guaranteed_by_fullrank {
        "guaranteed"
    } else if v.overconstrained {
        "overconstrained"
    } else {
        "uncertain"
    });
    out
}

fn flatness_json(f: &FlatExtension) -> Value {
    match f {
        FlatExtension::Flat { rank } => json!({"flat": true, "rank": rank}),
        FlatExtension::NotFlat { rank_low, rank_high, psd } => {
            json!({"flat": false, "rank_low": rank_low, "rank_high": rank_high, "psd": psd})
        }
    }
}

pub fn decomposition_json(dec: &Decomposition) -> Value {
    json!({"points": dec.points(), "weights": dec.weights()})
}

pub fn relaxation_json(rep: &RelaxationReport) -> Value {
    json!({
        "status": rep.status,
        "iterations": rep.iterations,
        "trace": rep.trace,
        "scale": rep.scale,
        "rank": rep.rank,
        "rank_tol": rep.rank_tol,
        "relative_eigenvalues": rep.relative_eigenvalues,
        "flatness": flatness_json(&rep.flatness),
        "decomposition": rep.decomposition.as_ref().map(decomposition_json),
        "extraction_error": rep.extraction_error,
        "verification": rep.verification.map(|(ok, residual)| json!({"passes": ok, "max_coeff_error": residual})),
        "reference": rep.reference,
        "residuals": {
            "primal": rep.primal_residual,
            "dual": rep.dual_residual,
            "normalized_gap": rep.normalized_gap,
            "class_spread": rep.class_spread,
        },
        "moment_matrix": rows_of(&rep.x),
        "dual": {"y": rep.dual.y, "z": rep.dual.z, "s": rows_of(&rep.dual.s)},
    })
}

fn decompose_job(doc: &InputDoc, o: &JobOptions) -> Result<(Value, i32), CliError> {
    let p = doc.polynomial()?;
    let reference = doc.decomposition()?;
    match solve_relaxation(&p, &o.relaxation(), reference.as_ref()) {
        Ok(rep) => Ok((relaxation_json(&rep), 0)),
        Err(GramianError::ZeroConstantTerm) => Err(CliError::Schema(GramianError::ZeroConstantTerm.to_string())),
        Err(e) => Err(CliError::Numerical {
            message: e.to_string(),
            partial: Box::new(json!({"error": e.to_string(), "input": doc})),
        }),
    }
}

fn residuals_json(r: &Option<CertificateResiduals>) -> Value {
    serde_json::to_value(r).expect("serializable")
}

pub fn certificate_json(c: &Certificate) -> Value {
    json!({
        "verdict": c.verdict,
        "method": c.method,
        "n": c.n,
        "d": c.d,
        "r": c.r,
        "scale": c.scale,
        "rank": c.rank,
        "unique_rank": c.unique_rank,
        "residuals": residuals_json(&c.residuals),
        "literal_residuals": residuals_json(&c.literal_residuals),
        "schur": c.schur.as_ref().map(|s| json!({
            "rank": s.rank,
            "bound": s.bound,
            "residuals": s.residuals,
            "s_bar": rows_of(&s.s_bar),
        })),
        "corroboration": c.corroboration,
        "representation": c.representation,
        "s": c.s.as_ref().map(rows_of),
        "diagnostics": c.diagnostics,
    })
}

fn certify_job(doc: &InputDoc, o: &JobOptions) -> Result<Value, CliError> {
    let dec = doc
        .decomposition()?
        .ok_or_else(|| CliError::Schema("certify needs a \"decomposition\"".into()))?;
    let case = case_json(&case_verdict(doc.n, doc.d, dec.rank()));
    match certify(&dec, doc.d, &o.certify()) {
        Ok(c) => {
            let mut out = certificate_json(&c);
            out["case"] = case;
            Ok(out)
        }
        Err(e @ (GramianError::RankDeficient { .. } | GramianError::RankGrowth { .. } | GramianError::InvalidArgument(_))) => {
            Err(CliError::Schema(e.to_string()))
        }
        Err(e) => Err(CliError::Numerical {
            message: e.to_string(),
            partial: Box::new(json!({"error": e.to_string(), "case": case})),
        }),
    }
}

/// Seed of instance `i` in cell `(n, d, r)`, derived from the base seed.
pub fn instance_seed(base: u64, n: usize, d: u32, r: usize, i: usize) -> u64 {
    let mut h = base ^ 0x9e37_79b9_7f4a_7c15;
    for v in [n as u64, d as u64, r as u64, i as u64] {
        h = (h ^ v).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h ^= h >> 31;
    }
    h
}

/// `r` distinct points with integer coordinates in `[-99, 99]` and unit weights.
pub fn random_integer_decomposition(n: usize, r: usize, seed: u64) -> Decomposition {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points: Vec<Vec<f64>> = Vec::with_capacity(r);
    while points.len() < r {
        let p: Vec<f64> = (0..n).map(|_| rng.gen_range(-99..=99) as f64).collect();
        if !points.contains(&p) {
            points.push(p);
        }
    }
    Decomposition::with_unit_weights(points).expect("valid points")
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: u32,
    pub r: usize,
    pub seed: u64,
    pub verdict: String,
    pub rank: Option<usize>,
    pub trace: Option<f64>,
    pub gap: Option<f64>,
}

fn sweep_instance(n: usize, d: u32, r: usize, seed: u64, relax: bool, o: &JobOptions) -> SweepRow {
    let dec = random_integer_decomposition(n, r, seed);
    let verdict = match certify(&dec, d, &CertifyOptions { corroborate: false, ..o.certify() }) {
        Ok(c) => c.verdict.as_str().to_string(),
        Err(e) => format!("error: {e}"),
    };
    let (mut rank, mut trace, mut gap) = (None, None, None);
    if relax {
        if let Ok(rep) = solve_relaxation(&poly_from_decomposition(&dec, d), &o.relaxation(), Some(&dec)) {
            rank = Some(rep.rank);
            trace = Some(rep.trace);
            gap = rep.reference.map(|c| c.relative_gap);
        }
    }
    SweepRow { n, d, r, seed, verdict, rank, trace, gap }
}

fn thread_count() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()).filter(|&v: &usize| v > 0)
}

pub fn sweep_rows(s: &SweepSpec, o: &JobOptions) -> Result<Vec<SweepRow>, CliError> {
    let mut tasks = Vec::new();
    for &n in &s.ns {
        for &d in &s.ds {
            for &r in &s.rs {
                if n == 0 || d == 0 || r == 0 || r > dim_polys(n, d) {
                    return Err(CliError::Schema(format!("cell n={n} d={d} r={r} needs 1 <= r <= dim R_d")));
                }
                for i in 0..s.instances {
                    tasks.push((n, d, r, instance_seed(o.seed, n, d, r, i)));
                }
            }
        }
    }
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count() {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| CliError::Io(e.to_string()))?;
    Ok(pool.install(|| {
        tasks.par_iter().map(|&(n, d, r, seed)| sweep_instance(n, d, r, seed, s.relax, o)).collect()
    }))
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

fn sweep_job(s: &SweepSpec, o: &JobOptions) -> Result<Value, CliError> {
    let rows = sweep_rows(s, o)?;
    if let Some(path) = &s.csv {
        write_sweep_csv(&rows, path)?;
    }
    let cells: Vec<Value> = rows
        .chunks(s.instances.max(1))
        .filter(|c| !c.is_empty())
        .map(|cell| {
            let (n, d, r) = (cell[0].n, cell[0].d, cell[0].r);
            let certified = cell.iter().filter(|row| row.verdict.starts_with("certified")).count();
            json!({
                "n": n,
                "d": d,
                "r": r,
                "instances": cell.len(),
                "certified": certified,
                "rate": certified as f64 / cell.len() as f64,
                "case": case_json(&case_verdict(n, d, r)),
            })
        })
        .collect();
    Ok(json!({"cells": cells, "rows": rows}))
}

/// Points of the first worked example (optimal moment matrix).
pub const EXAMPLE_ONE: [[i32; 2]; 9] =
    [[78, 87], [-45, 78], [-38, 32], [91, -76], [-18, 94], [-22, -22], [27, 99], [52, -16], [-58, -87]];

/// Points of the second worked example (moment matrix not optimal).
pub const EXAMPLE_TWO: [[i32; 2]; 9] =
    [[-43, -34], [-18, -10], [-19, 23], [52, 72], [-66, -76], [48, -15], [35, 45], [-83, -72], [51, 22]];

pub fn example_decomposition(points: &[[i32; 2]]) -> Decomposition {
    Decomposition::with_unit_weights(points.iter().map(|p| vec![p[0] as f64, p[1] as f64]).collect())
        .expect("valid points")
}

/// Largest coordinatewise relative error after matching every true point to
/// its nearest recovered point; `None` when the counts differ.
pub fn max_point_error(truth: &Decomposition, found: &Decomposition) -> Option<f64> {
    if truth.rank() != found.rank() {
        return None;
    }
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    let mut worst = 0.0_f64;
    for z in truth.points() {
        let best = found.points().iter().min_by(|a, b| dist(z, a).total_cmp(&dist(z, b)))?;
        for (x, y) in z.iter().zip(best) {
            worst = worst.max((x - y).abs() / x.abs().max(1.0));
        }
    }
    Some(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

fn check(name: &str, expected: impl Into<String>, observed: impl Into<String>, pass: bool) -> Check {
    Check { name: name.into(), expected: expected.into(), observed: observed.into(), pass }
}

/// Stored expectations for the worked examples and the univariate basis.
pub fn reproduce(o: &JobOptions) -> Vec<Check> {
    let mut out = Vec::new();
    let copts = CertifyOptions { assume_unique: false, ..o.certify() };

    let ex1 = example_decomposition(&EXAMPLE_ONE);
    match certify(&ex1, 3, &copts) {
        Ok(c) => out.push(check("example_one.certify", "certified", c.verdict.as_str(), c.verdict.is_certified())),
        Err(e) => out.push(check("example_one.certify", "certified", e.to_string(), false)),
    }
    match solve_relaxation(&poly_from_decomposition(&ex1, 3), &o.relaxation(), Some(&ex1)) {
        Ok(rep) => {
            let gap = rep.reference.as_ref().map_or(f64::NAN, |c| c.relative_gap);
            out.push(check("example_one.trace", "|gap| <= 1e-6", format!("{gap:e}"), gap.abs() <= 1e-6));
            out.push(check("example_one.rank", "9", rep.rank.to_string(), rep.rank == 9));
            let err = rep.decomposition.as_ref().and_then(|d| max_point_error(&ex1, d));
            out.push(check(
                "example_one.points",
                "relative error <= 1e-5",
                err.map_or("not recovered".into(), |e| format!("{e:e}")),
                err.is_some_and(|e| e <= 1e-5),
            ));
        }
        Err(e) => out.push(check("example_one.decompose", "solved", e.to_string(), false)),
    }

    let ex2 = example_decomposition(&EXAMPLE_TWO);
    match solve_relaxation(&poly_from_decomposition(&ex2, 3), &o.relaxation(), Some(&ex2)) {
        Ok(rep) => {
            out.push(check("example_two.rank", "11", rep.rank.to_string(), rep.rank == 11));
            let gap = rep.reference.as_ref().map_or(f64::NAN, |c| c.relative_gap);
            out.push(check("example_two.trace", "gap > 1e-4", format!("{gap:e}"), gap > 1e-4));
        }
        Err(e) => out.push(check("example_two.decompose", "solved", e.to_string(), false)),
    }
    match certify(&ex2, 3, &copts) {
        Ok(c) => out.push(check(
            "example_two.certify",
            "infeasible_heuristic",
            c.verdict.as_str(),
            c.verdict == crate::certificates::Verdict::InfeasibleHeuristic,
        )),
        Err(e) => out.push(check("example_two.certify", "infeasible_heuristic", e.to_string(), false)),
    }

    match build_orth_basis(1, 1) {
        Ok(basis) => {
            let z = basis.class(&MultiIndex::new(vec![2])).map(|c| c.z.clone()).unwrap_or_default();
            let want = [0.0, 0.0, -1.0, 0.0, 2.0, 0.0, -1.0, 0.0, 0.0].map(|v| v / 6f64.sqrt());
            let err = z.first().map_or(f64::INFINITY, |m| {
                m.iter().zip(want.iter()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
            });
            out.push(check(
                "univariate.z2",
                "[[0,0,-1],[0,2,0],[-1,0,0]]/sqrt(6)",
                format!("{} matrices, max deviation {err:e}", z.len()),
                z.len() == 1 && err <= 1e-12,
            ));
            out.push(check(
                "univariate.counts",
                "5 Y, 1 Z",
                format!("{} Y, {} Z", basis.num_y(), basis.num_z()),
                basis.num_y() == 5 && basis.num_z() == 1,
            ));
        }
        Err(e) => out.push(check("univariate.basis", "built", e.to_string(), false)),
    }
    out
}

/// Pretty JSON with every float written to 17 significant digits.
struct SigFigFormatter(serde_json::ser::PrettyFormatter<'static>);

impl serde_json::ser::Formatter for SigFigFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> std::io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> std::io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> std::io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_string(v: &Value) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigFigFormatter(serde_json::ser::PrettyFormatter::new()));
    v.serialize(&mut ser).expect("writing to memory");
    buf.push(b'\n');
    String::from_utf8(buf).expect("JSON is UTF-8")
}

fn emit(report: &Value, out: Option<&Path>) -> Result<(), CliError> {
    let text = to_json_string(report);
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}

/// Parses arguments, runs the job, writes the report and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let out = cli.options.out.clone();
    let result = JobSpec::from_cli(cli).and_then(|spec| execute(&spec));
    match result {
        Ok(outcome) => match emit(&outcome.report, out.as_deref()) {
            Ok(()) => outcome.exit_code,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Numerical { partial, .. } = &e {
                let _ = emit(partial, out.as_deref());
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schema_requires_exactly_one_payload() {
        assert!(InputDoc::parse(r#"{"n": 1, "d": 1}"#).is_err());
        let both = r#"{"n": 1, "d": 1, "polynomial": [], "decomposition": {"points": [[1]]}}"#;
        assert!(InputDoc::parse(both).is_err());
        assert!(InputDoc::parse(r#"{"n": 1, "d": 1, "polynomial": [{"exponents": [0], "coeff": 1}]}"#).is_ok());
    }

    #[test]
    fn schema_rejects_bad_terms() {
        let long = r#"{"n": 1, "d": 1, "polynomial": [{"exponents": [0, 1], "coeff": 1}]}"#;
        assert_eq!(InputDoc::parse(long).unwrap_err().exit_code(), 2);
        let high = r#"{"n": 1, "d": 1, "polynomial": [{"exponents": [3], "coeff": 1}]}"#;
        assert!(InputDoc::parse(high).is_err());
        let twice = r#"{"n": 1, "d": 1, "polynomial": [{"exponents": [1], "coeff": 1}, {"exponents": [1], "coeff": 2}]}"#;
        assert!(InputDoc::parse(twice).is_err());
        let unknown = r#"{"n": 1, "d": 1, "polynomial": [], "extra": 0}"#;
        assert!(InputDoc::parse(unknown).is_err());
        let weights = r#"{"n": 1, "d": 1, "decomposition": {"points": [[1]], "weights": [-1]}}"#;
        assert!(InputDoc::parse(weights).is_err());
    }

    #[test]
    fn floats_have_seventeen_digits() {
        let s = to_json_string(&json!({"x": 0.1, "k": 3}));
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("\"k\": 3"));
    }

    #[test]
    fn constant_polynomial_gives_origin() {
        let doc = InputDoc::parse(r#"{"n": 2, "d": 1, "polynomial": [{"exponents": [0, 0], "coeff": 1}]}"#).unwrap();
        let spec = JobSpec { job: Job::Decompose(doc), options: JobOptions::default(), out: None };
        let out = execute(&spec).unwrap();
        let dec = &out.report["result"]["decomposition"];
        assert_eq!(out.report["result"]["rank"], 1);
        assert_eq!(dec["weights"][0].as_f64().unwrap(), 1.0);
        for v in dec["points"][0].as_array().unwrap() {
            assert!(v.as_f64().unwrap().abs() < 1e-9);
        }
    }

    #[test]
    fn case_report_summary() {
        let spec = JobSpec { job: Job::Case { n: 2, d: 3, r: 10 }, options: JobOptions::default(), out: None };
        let out = execute(&spec).unwrap();
        assert_eq!(out.report["result"]["summary"], "overconstrained");
        assert_eq!(out.report["result"]["threshold"]["fraction"], "48/5");
        let bad = JobSpec { job: Job::Case { n: 2, d: 3, r: 11 }, options: JobOptions::default(), out: None };
        assert_eq!(execute(&bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        let a = instance_seed(0, 2, 3, 8, 0);
        assert_eq!(a, instance_seed(0, 2, 3, 8, 0));
        assert_ne!(a, instance_seed(0, 2, 3, 8, 1));
        assert_ne!(a, instance_seed(1, 2, 3, 8, 0));
        let dec = random_integer_decomposition(2, 8, a);
        assert_eq!(dec.rank(), 8);
        assert!(dec.max_abs_coordinate() <= 99.0);
    }

    #[test]
    fn point_matching() {
        let a = Decomposition::with_unit_weights(vec![vec![1.0, 2.0], vec![-3.0, 4.0]]).unwrap();
        let b = Decomposition::with_unit_weights(vec![vec![-3.0, 4.0], vec![1.0, 2.0 + 1e-7]]).unwrap();
        assert!(max_point_error(&a, &b).unwrap() < 1e-7);
        let c = Decomposition::with_unit_weights(vec![vec![1.0, 2.0]]).unwrap();
        assert!(max_point_error(&a, &c).is_none());
    }

    #[test]
    fn parses_arguments() {
        let cli = Cli::try_parse_from(["gramian", "case", "--n", "2", "--d", "3", "--r", "9", "--seed", "4"]).unwrap();
        let spec = JobSpec::from_cli(cli).unwrap();
        assert_eq!(spec.options.seed, 4);
        assert!(matches!(spec.job, Job::Case { n: 2, d: 3, r: 9 }));
        let cli = Cli::try_parse_from(["gramian", "sweep", "--n", "2", "--d", "2,3", "--r", "3"]).unwrap();
        match JobSpec::from_cli(cli).unwrap().job {
            Job::Sweep(s) => assert_eq!(s.ds, vec![2, 3]),
            other => panic!("{other:?}"),
        }
    }
}
