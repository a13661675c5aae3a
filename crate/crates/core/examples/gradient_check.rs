//! Central finite differences against the analytic gradients of every layer
//! type and every composite objective.
//!
//! cargo run --release --example gradient_check -- [seed]

use std::time::Instant;

use mga::diagnostics::{layer_cases, objective_cases};
use mga::nn::GradCheckOptions;

fn main() -> mga::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let options = GradCheckOptions::default();
    let start = Instant::now();
    let mut cases = layer_cases(seed, options)?;
    cases.extend(objective_cases(seed, options)?);
    println!("{:<24} {:>6} {:>12}  worst coordinate", "case", "coords", "max rel err");
    for c in &cases {
        let worst = c.report.worst().expect("at least one coordinate");
        println!(
            "{:<24} {:>6} {:>12.3e}  {}[{}] analytic {:.6e} numeric {:.6e}",
            c.name,
            c.report.checked.len(),
            c.report.max_rel_error,
            worst.name,
            worst.index,
            worst.analytic,
            worst.numeric
        );
    }
    println!("{:.2}s", start.elapsed().as_secs_f64());
    Ok(())
}
