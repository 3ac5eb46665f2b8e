//! Symmetric tensors, polynomials and moment sequences.

use gramian::poly::{moments_from_decomposition, moments_from_poly, poly_from_decomposition, poly_to_tensor, tensor_to_poly};
use gramian::{Decomposition, MultiIndex};

fn main() -> gramian::Result<()> {
    let dec = Decomposition::new(vec![vec![1.0, -2.0], vec![3.0, 0.5]], vec![2.0, 1.0])?;
    let p = poly_from_decomposition(&dec, 2);
    println!("p = sum w (1 + z.x)^4 has {} coefficients", p.coeffs().len());
    for (mono, c) in p.terms().filter(|(_, c)| c.abs() > 0.0).take(6) {
        println!("  {:?}: {c}", mono.exponents());
    }

    let tensor = poly_to_tensor(&p);
    let back = tensor_to_poly(&tensor);
    let worst = p.coeffs().iter().zip(back.coeffs()).fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()));
    println!("order-{} tensor on dimension {}: round trip error {worst:e}", tensor.order(), tensor.nvars() + 1);

    let from_poly = moments_from_poly(&p, 2)?;
    let direct = moments_from_decomposition(&dec, 4);
    let a = MultiIndex::new(vec![2, 1]);
    println!("m_{:?} from coefficients {} and from points {}", a.exponents(), from_poly.get(&a).unwrap(), direct.get(&a).unwrap());
    Ok(())
}
