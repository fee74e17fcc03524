//! Reverse-mode gradients on the tape, checked by finite differences.

use mdfg::tensor::{grad_check, Tape, Tensor};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tape = Tape::new();
    let w = tape.leaf(Tensor::new(&[2, 2], vec![1.0, -2.0, 0.5, 3.0])?);
    let x = tape.constant(Tensor::new(&[1, 2], vec![0.3, -0.7])?);
    // loss = sum(relu(x·W)²)
    let h = x.matmul(w)?.relu();
    let loss = h.mul(h)?.sum();
    let grads = tape.backward(loss)?;
    println!("loss {:.6}", loss.item()?);
    println!("dloss/dW {:?}", grads.get(w).unwrap().data());

    let params = [
        Tensor::new(&[3, 4], (0..12).map(|i| (i as f64 * 0.37).sin()).collect())?,
        Tensor::new(&[4, 2], (0..8).map(|i| (i as f64 * 0.91).cos()).collect())?,
    ];
    let err = grad_check(
        |_, p| Ok(p[0].matmul(p[1])?.l2_normalize(1)?.exp().logsumexp(1)?.sum()),
        &params,
        1e-6,
    )?;
    println!("max relative error against central differences: {err:.2e}");
    Ok(())
}
