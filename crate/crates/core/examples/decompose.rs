//! Recovers a rank-9 decomposition of a plane sextic from its coefficients.

use gramian::cli::{example_decomposition, max_point_error, EXAMPLE_ONE};
use gramian::poly::poly_from_decomposition;
use gramian::relaxation::{solve_relaxation, RelaxationOptions};

fn main() -> gramian::Result<()> {
    let dec = example_decomposition(&EXAMPLE_ONE);
    let p = poly_from_decomposition(&dec, 3);
    let rep = solve_relaxation(&p, &RelaxationOptions::default(), Some(&dec))?;
    println!("status {:?} after {} iterations", rep.status, rep.iterations);
    println!("trace {:.6e}, rank {}, {:?}", rep.trace, rep.rank, rep.flatness);
    if let Some(c) = &rep.reference {
        println!("relative gap to the input moment matrix: {:e}", c.relative_gap);
    }
    if let Some(found) = &rep.decomposition {
        for z in found.points() {
            println!("  ({:9.4}, {:9.4})", z[0], z[1]);
        }
        println!("max relative point error {:e}", max_point_error(&dec, found).unwrap_or(f64::NAN));
    }
    Ok(())
}
