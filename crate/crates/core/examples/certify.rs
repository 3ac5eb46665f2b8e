//! Optimality certificates for the two rank-9 worked examples.

use gramian::certificates::{certify, CertifyOptions};
use gramian::cli::{example_decomposition, EXAMPLE_ONE, EXAMPLE_TWO};

fn main() -> gramian::Result<()> {
    for (name, pts) in [("first", EXAMPLE_ONE), ("second", EXAMPLE_TWO)] {
        let dec = example_decomposition(&pts);
        let c = certify(&dec, 3, &CertifyOptions::default())?;
        println!("{name} example: {} via {:?}", c.verdict.as_str(), c.method);
        if let Some(r) = &c.residuals {
            println!("  |MS| {:.2e}, odd {:.2e}, even {:.2e}, min eig {:.2e}", r.ms_relative, r.odd_coeff, r.even_coeff, r.min_eig_relative);
        }
        if let Some(s) = &c.schur {
            println!("  Schur-reduced rank {} (bound {})", s.rank, s.bound);
        }
        if let Some(cor) = &c.corroboration {
            println!("  relaxation trace is {:.3e} below the input's (corroborated: {})", cor.relative_gap, cor.corroborated);
        }
    }
    Ok(())
}
