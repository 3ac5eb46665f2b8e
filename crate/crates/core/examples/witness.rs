//! Explicit form systems whose subresultants have full row rank.

use gramian::certificates::{witness_systems, WitnessKind};

fn main() -> gramian::Result<()> {
    for kind in [WitnessKind::StarN, WitnessKind::StarNPlus1] {
        for (n, d) in [(2, 3), (3, 3), (3, 4), (4, 2), (4, 3), (5, 2)] {
            let w = witness_systems(n, d, kind)?;
            println!(
                "{kind:?} n={n} d={d}: {}x{} rank {} (mod p {:?}) full={}",
                w.rows, w.cols, w.numerical_rank, w.exact_rank, w.full_row_rank
            );
        }
    }
    for n in 2..=4 {
        let w = witness_systems(n, 2, WitnessKind::Powers2Pow)?;
        println!("{} squares of linear forms in {n} variables span degree 4: {}", w.forms.len(), w.full_row_rank);
    }
    Ok(())
}
