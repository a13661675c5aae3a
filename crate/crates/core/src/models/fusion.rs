//! Age-group gated fusion of expert gender outputs:
//! `F_c = sum_k p_k * f_{k,c}`.

use crate::error::{ensure, Result};
use crate::nn::Tensor;

/// Tolerance used to decide that a probability vector sums to one.
pub const NORMALIZATION_TOL: f64 = 1e-6;

fn check_distribution(what: &str, p: &[f64]) -> Result<()> {
    let sum: f64 = p.iter().sum();
    ensure!(
        p.iter().all(|v| v.is_finite() && *v >= 0.0) && (sum - 1.0).abs() <= NORMALIZATION_TOL,
        Contract,
        "{what} is not a probability vector: {p:?} sums to {sum}"
    );
    Ok(())
}

/// Fuses one sample: a gate over the three groups and one gender pair per expert.
pub fn fuse(gate: &[f64; 3], experts: &[[f64; 2]; 3]) -> Result<[f64; 2]> {
    check_distribution("group probabilities", gate)?;
    for (k, e) in experts.iter().enumerate() {
        check_distribution(&format!("expert {k} output"), e)?;
    }
    let mut out = [0.0; 2];
    for (g, e) in gate.iter().zip(experts) {
        out[0] += g * e[0];
        out[1] += g * e[1];
    }
    Ok(out)
}

/// Batched fusion. `gate` is `[N, 3]`, each expert `[N, C]`.
pub fn fuse_experts(gate: &Tensor, experts: &[Tensor; 3]) -> Result<Tensor> {
    let n = gate.rows();
    ensure!(
        gate.shape() == [n, 3],
        Dimension,
        "gate must be [N, 3], got {:?}",
        gate.shape()
    );
    let classes = experts[0].row_len();
    for e in experts {
        ensure!(
            e.shape() == [n, classes],
            Dimension,
            "expert outputs must all be [{n}, {classes}], got {:?}",
            e.shape()
        );
    }
    let mut out = Tensor::zeros(&[n, classes]);
    for i in 0..n {
        let g = gate.row(i);
        check_distribution("group probabilities", g)?;
        let row = out.row_mut(i);
        for (k, e) in experts.iter().enumerate() {
            let er = e.row(i);
            check_distribution(&format!("expert {k} output"), er)?;
            for (o, v) in row.iter_mut().zip(er) {
                *o += g[k] * v;
            }
        }
    }
    Ok(out)
}

/// Gradients of the fused output with respect to the gate and each expert.
pub fn fuse_experts_backward(gate: &Tensor, experts: &[Tensor; 3], d_fused: &Tensor) -> Result<(Tensor, [Tensor; 3])> {
    let n = gate.rows();
    ensure!(
        d_fused.shape() == experts[0].shape(),
        Dimension,
        "fused gradient {:?} does not match expert shape {:?}",
        d_fused.shape(),
        experts[0].shape()
    );
    let mut d_gate = Tensor::zeros(&[n, 3]);
    let mut d_experts = [
        Tensor::zeros(experts[0].shape()),
        Tensor::zeros(experts[0].shape()),
        Tensor::zeros(experts[0].shape()),
    ];
    for i in 0..n {
        let d = d_fused.row(i);
        for k in 0..3 {
            let dot: f64 = d.iter().zip(experts[k].row(i)).map(|(a, b)| a * b).sum();
            d_gate.row_mut(i)[k] = dot;
            let gk = gate.row(i)[k];
            for (o, v) in d_experts[k].row_mut(i).iter_mut().zip(d) {
                *o = gk * v;
            }
        }
    }
    Ok((d_gate, d_experts))
}
