//! Fuses three expert gender outputs with an age-group gate, for a few
//! hand-picked gates and for a batch.
//!
//! cargo run --example fuse_experts

use mga::models::{fuse, fuse_experts};
use mga::nn::Tensor;

fn main() -> mga::Result<()> {
    // Male/female probabilities from the young, adult and elder experts.
    let experts = [[0.7, 0.3], [0.2, 0.8], [0.55, 0.45]];
    for gate in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.1, 0.6, 0.3], [1.0 / 3.0; 3]] {
        let f = fuse(&gate, &experts)?;
        println!("gate {gate:.2?} -> male {:.3} female {:.3}", f[0], f[1]);
    }

    let gate = Tensor::new(&[2, 3], vec![0.9, 0.1, 0.0, 0.0, 0.2, 0.8])?;
    let e = experts.map(|p| Tensor::new(&[2, 2], [p, p].concat()).expect("2x2"));
    let fused = fuse_experts(&gate, &e)?;
    for i in 0..2 {
        println!("batch row {i}: {:.3?}", fused.row(i));
    }

    match fuse(&[0.5, 0.6, 0.0], &experts) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!("gate does not sum to one"),
    }
    Ok(())
}
