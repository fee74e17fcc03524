//! Supervised contrastive loss, bidirectional shallow/deep matching loss,
//! their weighted total, and the fine-tuning cross-entropy.
//!
//! Each loss exists twice: a plain evaluation over [`Tensor`]s and a graph
//! version recorded on a [`Tape`] for training. Tests pin the two together
//! and against direct-summation oracles.

use serde::{Deserialize, Serialize};

use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("no anchor in the batch has a positive partner")]
    DegenerateBatch,
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: String, got: String },
    #[error("row {row} of {which} has norm {norm}, expected 1")]
    NotUnitRow { which: &'static str, row: usize, norm: f64 },
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which samples enter the contrastive softmax denominator of an anchor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Every sample except the anchor.
    #[default]
    All,
    /// Only samples of the other class; anchors lacking either positives or
    /// negatives then contribute 0.
    NegativesOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Sum,
    /// Sum divided by the number of contributing anchors.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_sup: f64,
    pub l_align: f64,
    pub alpha: f64,
    pub l_total: f64,
}

pub fn total_loss(l_sup: f64, l_align: f64, alpha: f64) -> LossReport {
    LossReport {
        l_sup,
        l_align,
        alpha,
        l_total: l_sup + alpha * l_align,
    }
}

fn logsumexp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let (m, tail) = logsumexp_parts(xs);
    m + tail
}

/// `ln Σ exp` split as `(m, ln_1p(Σ_{j≠argmax} exp(x_j − m)))` so callers
/// can subtract against `m` before adding a tiny tail.
fn logsumexp_parts(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (arg, m) = xs
        .clone()
        .enumerate()
        .fold((usize::MAX, f64::NEG_INFINITY), |(ai, am), (i, x)| if x > am { (i, x) } else { (ai, am) });
    if m == f64::NEG_INFINITY {
        return (m, 0.0);
    }
    let rest: f64 = xs.enumerate().filter(|&(i, _)| i != arg).map(|(_, x)| (x - m).exp()).sum();
    (m, rest.ln_1p())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit_rows(z: &Tensor) -> Vec<Vec<f64>> {
    (0..z.rows())
        .map(|r| {
            let row = z.row(r);
            let n = (dot(row, row) + 1e-24).sqrt();
            row.iter().map(|v| v / n).collect()
        })
        .collect()
}

/// Per-anchor positive weights `1/|P_i|` and the denominator mask.
struct AnchorPlan {
    pos_weight: Vec<Vec<f64>>,
    in_denominator: Vec<Vec<bool>>,
    active: Vec<bool>,
}

fn plan(labels: &[usize], denom: Denominator) -> AnchorPlan {
    let b = labels.len();
    let mut plan = AnchorPlan {
        pos_weight: vec![vec![0.0; b]; b],
        in_denominator: vec![vec![false; b]; b],
        active: vec![false; b],
    };
    for i in 0..b {
        let pos: Vec<usize> = (0..b).filter(|&p| p != i && labels[p] == labels[i]).collect();
        for a in 0..b {
            plan.in_denominator[i][a] = a != i && (denom == Denominator::All || labels[a] != labels[i]);
        }
        let has_denominator = plan.in_denominator[i].iter().any(|&x| x);
        if pos.is_empty() || !has_denominator {
            continue;
        }
        plan.active[i] = true;
        for &p in &pos {
            plan.pos_weight[i][p] = 1.0 / pos.len() as f64;
        }
    }
    plan
}

fn check_batch(z_rows: usize, labels: &[usize], t: f64) -> Result<(), LossError> {
    if z_rows != labels.len() {
        return Err(LossError::Shape {
            what: "labels",
            expected: z_rows.to_string(),
            got: labels.len().to_string(),
        });
    }
    if !(t > 0.0) {
        return Err(LossError::InvalidTemperature(t));
    }
    Ok(())
}

/// Supervised contrastive loss over the L2-normalized rows of `z`, summed
/// over anchors.
pub fn sup_con_loss(z: &Tensor, labels: &[usize], t: f64, denom: Denominator) -> Result<f64, LossError> {
    check_batch(z.rows(), labels, t)?;
    let p = plan(labels, denom);
    if !p.active.iter().any(|&a| a) {
        return Err(LossError::DegenerateBatch);
    }
    let zn = unit_rows(z);
    let b = labels.len();
    let mut loss = 0.0;
    for i in 0..b {
        if !p.active[i] {
            continue;
        }
        let sims: Vec<f64> = (0..b).map(|a| dot(&zn[i], &zn[a]) / t).collect();
        let lse = logsumexp((0..b).filter(|&a| p.in_denominator[i][a]).map(|a| sims[a]));
        let inner: f64 = (0..b)
            .filter(|&q| p.pos_weight[i][q] > 0.0)
            .map(|q| p.pos_weight[i][q] * (sims[q] - lse))
            .sum();
        loss -= inner;
    }
    Ok(loss)
}

/// Bidirectional matching loss between paired unit rows of `s` and `d`.
pub fn align_loss(s: &Tensor, d: &Tensor) -> Result<f64, LossError> {
    if s.shape() != d.shape() || s.rank() != 2 || s.rows() == 0 {
        return Err(LossError::Shape {
            what: "align batch",
            expected: format!("{:?}", s.shape()),
            got: format!("{:?}", d.shape()),
        });
    }
    for (which, m) in [("S", s), ("D", d)] {
        for r in 0..m.rows() {
            let norm = dot(m.row(r), m.row(r)).sqrt();
            if (norm - 1.0).abs() > 1e-9 {
                return Err(LossError::NotUnitRow { which, row: r, norm });
            }
        }
    }
    let n = s.rows();
    let c: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dot(s.row(i), d.row(j))).collect()).collect();
    let trace: f64 = (0..n).map(|i| c[i][i]).sum();
    let rows: f64 = (0..n).map(|i| logsumexp((0..n).map(|j| c[i][j]))).sum();
    let cols: f64 = (0..n).map(|j| logsumexp((0..n).map(|i| c[i][j]))).sum();
    Ok(-(2.0 * trace - (rows + cols)) / (2 * n) as f64)
}

/// Mean negative log-softmax of the labelled logit.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64, LossError> {
    check_logits(logits, labels)?;
    let b = logits.rows();
    let total: f64 = (0..b)
        .map(|r| {
            let row = logits.row(r);
            let (m, tail) = logsumexp_parts(row.iter().copied());
            (m - row[labels[r]]) + tail
        })
        .sum();
    Ok(total / b as f64)
}

fn check_logits(logits: &Tensor, labels: &[usize]) -> Result<(), LossError> {
    if logits.rank() != 2 || logits.rows() != labels.len() || logits.rows() == 0 {
        return Err(LossError::Shape {
            what: "logits",
            expected: format!("[{}, classes]", labels.len()),
            got: format!("{:?}", logits.shape()),
        });
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= logits.cols()) {
        return Err(LossError::Shape {
            what: "label",
            expected: format!("< {}", logits.cols()),
            got: l.to_string(),
        });
    }
    Ok(())
}

// ---- graph versions ----

fn matrix(rows: Vec<Vec<f64>>) -> Tensor {
    Tensor::from_rows(&rows).expect("rectangular")
}

/// Graph form of [`sup_con_loss`].
pub fn sup_con_loss_var<'t>(
    z: Var<'t>,
    labels: &[usize],
    t: f64,
    denom: Denominator,
    reduction: Reduction,
) -> Result<Var<'t>, LossError> {
    let shape = z.shape();
    if shape.len() != 2 {
        return Err(LossError::Shape {
            what: "embeddings",
            expected: "rank 2".into(),
            got: format!("{shape:?}"),
        });
    }
    check_batch(shape[0], labels, t)?;
    let p = plan(labels, denom);
    let active = p.active.iter().filter(|&&a| a).count();
    if active == 0 {
        return Err(LossError::DegenerateBatch);
    }
    let tape: &'t Tape = z.tape();
    let zn = z.l2_normalize(1)?;
    let sims = zn.matmul(zn.transpose()?)?.scale(1.0 / t);
    let mask = tape.constant(matrix(
        p.in_denominator
            .iter()
            .map(|row| row.iter().map(|&keep| if keep { 0.0 } else { f64::NEG_INFINITY }).collect())
            .collect(),
    ));
    let lse = sims.add(mask)?.logsumexp(1)?;
    // inactive anchors may have an all −inf row; zero them by selection
    let active_rows: Vec<usize> = (0..labels.len()).filter(|&i| p.active[i]).collect();
    let lse_sum = lse.reshape(&[labels.len(), 1])?.gather_rows(&active_rows)?.sum();
    let pos = sims.mul(tape.constant(matrix(p.pos_weight)))?.sum();
    let loss = lse_sum.sub(pos)?;
    Ok(match reduction {
        Reduction::Sum => loss,
        Reduction::Mean => loss.scale(1.0 / active as f64),
    })
}

/// Graph form of [`align_loss`]; rows are assumed already unit length.
pub fn align_loss_var<'t>(s: Var<'t>, d: Var<'t>) -> Result<Var<'t>, LossError> {
    let (ss, ds) = (s.shape(), d.shape());
    if ss != ds || ss.len() != 2 || ss[0] == 0 {
        return Err(LossError::Shape {
            what: "align batch",
            expected: format!("{ss:?}"),
            got: format!("{ds:?}"),
        });
    }
    let n = ss[0];
    let c = s.matmul(d.transpose()?)?;
    let trace = c.mul(s.tape().constant(Tensor::identity(n)))?.sum();
    let rows = c.logsumexp(1)?.sum();
    let cols = c.logsumexp(0)?.sum();
    Ok(rows.add(cols)?.sub(trace.scale(2.0))?.scale(1.0 / (2 * n) as f64))
}

/// Graph form of [`cross_entropy`].
pub fn cross_entropy_var<'t>(logits: Var<'t>, labels: &[usize]) -> Result<Var<'t>, LossError> {
    let value = logits.value();
    check_logits(&value, labels)?;
    let (b, k) = (value.rows(), value.cols());
    let onehot = matrix(
        labels
            .iter()
            .map(|&l| (0..k).map(|c| if c == l { 1.0 } else { 0.0 }).collect())
            .collect(),
    );
    let picked = logits.mul(logits.tape().constant(onehot))?.sum();
    Ok(logits.logsumexp(1)?.sum().sub(picked)?.scale(1.0 / b as f64))
}
