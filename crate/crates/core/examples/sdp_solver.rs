//! The dense primal-dual solver on small problems.

use gramian::sdp::{check_optimality_pair, solve_sdp, SdpOptions, SdpProblem};
use nalgebra::DMatrix;

fn main() -> gramian::Result<()> {
    // min tr X  s.t.  X_12 + X_21 = 2
    let off = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    let p = SdpProblem::new(DMatrix::identity(2, 2), vec![off], vec![2.0])?;
    let sol = solve_sdp(&p, &SdpOptions::default());
    println!("{:?} in {} iterations, objective {:.10}", sol.status, sol.iterations, sol.primal_objective);
    println!("X = {:.6}", sol.x);
    let report = check_optimality_pair(&sol.x, &sol.y, &sol.s, &p, 1e-6)?;
    println!("optimal pair: {} (complementarity {:e})", report.optimal_pair, report.complementarity);

    // tr X = -1 has no positive semidefinite solution
    let p = SdpProblem::new(DMatrix::identity(2, 2), vec![DMatrix::identity(2, 2)], vec![-1.0])?;
    println!("negative trace: {:?}", solve_sdp(&p, &SdpOptions::default()).status);
    Ok(())
}
