//! The constrained subgradient solver on a hand-written convex program:
//! minimize |w0 - 1| + |w1 - 1| subject to w0 + w1 <= 1 in the unit disk.

use pacf::solver::{project_ball, solve_constrained, FnProgram, SolverConfig};

fn main() -> pacf::Result<()> {
    let program = FnProgram {
        dim: 2,
        radius: 1.0,
        objective: Box::new(|w: &[f64]| {
            ((w[0] - 1.0).abs() + (w[1] - 1.0).abs(), vec![(w[0] - 1.0).signum(), (w[1] - 1.0).signum()])
        }),
        constraint: Box::new(|w: &[f64]| (w[0] + w[1] - 1.0, vec![1.0, 1.0])),
        project: Box::new(|w: &mut [f64]| project_ball(w, 1.0)),
    };
    let (w, report) = solve_constrained(&program, &SolverConfig::default(), &[0.0, 0.0])?;
    println!("w = [{:.4}, {:.4}]", w[0], w[1]);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
