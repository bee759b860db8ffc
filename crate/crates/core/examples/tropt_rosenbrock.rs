//! The trust-region barrier solver on Rosenbrock's function restricted to
//! the disk `x² + y² ≤ 2`, whose minimizer `(1, 1)` lies on the boundary.
//!
//! `cargo run --release --example tropt_rosenbrock [trace.csv]`

use nalgebra::DMatrix;
use pdeforge::tropt::{minimize, FnProblem, TroptSettings};

fn main() -> pdeforge::Result<()> {
    let problem = FnProblem::new(
        2,
        1,
        |x| {
            let (a, b) = (1.0 - x[0], x[1] - x[0] * x[0]);
            (a * a + 100.0 * b * b, vec![-2.0 * a - 400.0 * x[0] * b, 200.0 * b])
        },
        |x| (vec![x[0] * x[0] + x[1] * x[1] - 2.0], DMatrix::from_row_slice(1, 2, &[2.0 * x[0], 2.0 * x[1]])),
    );
    let settings = TroptSettings { max_iters: 3000, ..TroptSettings::default() };
    let sol = minimize(&problem, &[-1.0, 0.5], &settings)?;
    let r = &sol.report;
    println!("x = ({:.8}, {:.8})", sol.x[0], sol.x[1]);
    println!(
        "{} after {} iterations: objective {:.3e}, violation {:.1e}, KKT {:.1e}",
        r.status.as_str(),
        r.iters,
        r.objective,
        r.max_violation,
        r.kkt_norm
    );
    if let Some(path) = std::env::args().nth(1) {
        sol.write_trace(path.as_ref())?;
        println!("trace written to {path}");
    }
    Ok(())
}
