//! Composite graph ops built from the primitives on [`Graph`].

use super::graph::{Graph, Var};
use super::tensor::{argmax, Tensor};
use crate::error::{Error, Result};

/// Differentiable Gumbel-Softmax over each row of `probs` with frozen `noise`.
///
/// The noise is a constant, so gradients flow only through `log probs`.
/// In hard mode the forward value is the one-hot argmax of the relaxed
/// sample and the backward pass is that of the relaxed sample.
pub fn gumbel_softmax(g: &mut Graph, probs: Var, noise: &Tensor, temperature: f64, hard: bool) -> Result<Var> {
    if g.value(probs).data().iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Argument(
            "gumbel-softmax needs strictly positive probabilities".into(),
        ));
    }
    let logp = g.log(probs);
    let perturbed = g.add_const(logp, noise)?;
    let soft = g.softmax(perturbed, temperature)?;
    if !hard {
        return Ok(soft);
    }
    let value = g.value(soft);
    let (rows, cols) = (value.rows(), value.cols());
    let mut one_hot = Tensor::zeros(&[rows, cols]);
    for r in 0..rows {
        let k = argmax(value.row(r));
        one_hot.row_mut(r)[k] = 1.0;
    }
    g.straight_through(soft, one_hot)
}

/// `−log softmax(logits)[gold]` for a single row of logits.
pub fn nll_of_index(g: &mut Graph, logits: Var, gold: usize, temperature: f64) -> Result<Var> {
    let logp = g.log_softmax(logits, temperature)?;
    let picked = g.pick(logp, 0, gold)?;
    Ok(g.scale(picked, -1.0))
}

/// `−Σ target_i · log_softmax(logits / temperature)_i` with a constant target.
pub fn soft_cross_entropy(g: &mut Graph, logits: Var, target: &[f64], temperature: f64) -> Result<Var> {
    let logp = g.log_softmax(logits, temperature)?;
    let s = g.weighted_sum(logp, target)?;
    Ok(g.scale(s, -1.0))
}

/// Mean of a list of scalar nodes.
pub fn mean_of(g: &mut Graph, terms: &[Var]) -> Result<Var> {
    if terms.is_empty() {
        return Err(Error::Argument("mean of an empty list".into()));
    }
    let stacked = g.stack_rows(terms)?;
    Ok(g.mean_all(stacked))
}
