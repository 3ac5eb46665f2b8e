//! Moment matrices of a decomposition, flat extensions and point recovery.

use gramian::moment::{build_vandermonde, check_flat_extension, extract_points, kernel_of, moment_matrix_of, numerical_rank};
use gramian::Decomposition;

fn main() -> gramian::Result<()> {
    let dec = Decomposition::new(
        vec![vec![0.5, -1.0], vec![2.0, 1.5], vec![-1.0, 0.25], vec![1.0, 1.0]],
        vec![1.0, 0.5, 2.0, 1.5],
    )?;
    let d = 2;
    let m_next = moment_matrix_of(&dec, d + 1);
    let m_d = m_next.truncated(d);
    println!("M_{} is {}x{}, M_{} is {}x{}", d, m_d.size(), m_d.size(), d + 1, m_next.size(), m_next.size());

    let v = build_vandermonde(dec.points(), d + 1)?;
    let vtv = v.matrix().transpose() * nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(dec.weights())) * v.matrix();
    println!("|V^T W V - M| = {:e}", (vtv - m_next.matrix()).amax());

    let (rank, _) = numerical_rank(m_next.matrix(), 1e-9);
    println!("numerical rank {rank}, flat: {:?}", check_flat_extension(&m_d, &m_next, 1e-9)?);

    let k = kernel_of(&dec, d, 1e-9)?;
    println!("kernel: t = {}, s = {}, residuals {:e} {:e}", k.t, k.s, k.residual_d, k.residual_next);

    let found = extract_points(&m_next, rank, 1e-9, 0)?;
    for (z, w) in found.points().iter().zip(found.weights()) {
        println!("  point ({:.6}, {:.6}) weight {:.6}", z[0], z[1], w);
    }
    Ok(())
}
