//! Which ranks are guaranteed, overconstrained or open for small (n, d).

use gramian::certificates::case_verdict;
use gramian::monomial::dim_polys;

fn main() {
    for (n, d) in [(2, 2), (2, 3), (3, 2), (3, 3), (4, 2)] {
        let dim = dim_polys(n, d);
        let threshold = case_verdict(n, d, 1).threshold;
        println!("n={n} d={d}: dim R_d = {dim}, overconstrained above {threshold} = {:.3}", threshold.to_f64());
        let row: Vec<String> = (1..=dim)
            .map(|r| {
                let v = case_verdict(n, d, r);
                let tag = if v.guaranteed_by_fullrank { "G" } else if v.overconstrained { "X" } else { "?" };
                format!("{r}{tag}")
            })
            .collect();
        println!("  {}", row.join(" "));
    }
}
