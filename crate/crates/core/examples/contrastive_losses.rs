//! Supervised contrastive and alignment losses on a hand-made batch.

use mdfg::losses::{align_loss, cross_entropy, sup_con_loss, total_loss, Denominator};
use mdfg::tensor::Tensor;

fn unit_rows(rows: &[[f64; 2]]) -> Tensor {
    let data = rows
        .iter()
        .flat_map(|r| {
            let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
            [r[0] / n, r[1] / n]
        })
        .collect();
    Tensor::new(&[rows.len(), 2], data).unwrap()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = [0, 0, 1, 1];
    let tight = unit_rows(&[[1.0, 0.05], [1.0, -0.05], [-1.0, 0.05], [-1.0, -0.05]]);
    let mixed = unit_rows(&[[1.0, 0.05], [-1.0, -0.05], [-1.0, 0.05], [1.0, -0.05]]);
    for t in [0.07, 0.5] {
        println!(
            "t={t}: clustered {:.4}, mixed {:.4}",
            sup_con_loss(&tight, &labels, t, Denominator::All)?,
            sup_con_loss(&mixed, &labels, t, Denominator::All)?
        );
    }
    let l_align = align_loss(&tight, &tight)?;
    let l_sup = sup_con_loss(&tight, &labels, 0.07, Denominator::All)?;
    println!("align loss of a batch with itself: {l_align:.4}");
    println!("total at alpha 0.1: {:?}", total_loss(l_sup, l_align, 0.1));

    let logits = Tensor::new(&[2, 2], vec![2.0, -1.0, 0.0, 0.0])?;
    println!("cross entropy: {:.6}", cross_entropy(&logits, &[0, 1])?);
    Ok(())
}
