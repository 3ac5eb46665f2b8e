//! Certification rates of random integer decompositions.

use gramian::cli::{sweep_rows, JobOptions, SweepSpec};

fn main() {
    let spec = SweepSpec { ns: vec![2], ds: vec![3], rs: vec![4, 6, 8], instances: 5, csv: None, relax: false };
    let rows = match sweep_rows(&spec, &JobOptions::default()) {
        Ok(rows) => rows,
        Err(e) => {
            eprintln!("{e}");
            return;
        }
    };
    for cell in rows.chunks(spec.instances) {
        let ok = cell.iter().filter(|r| r.verdict.starts_with("certified")).count();
        println!("n={} d={} r={}: {ok}/{} certified", cell[0].n, cell[0].d, cell[0].r, cell.len());
    }
}
