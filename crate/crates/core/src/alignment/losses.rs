use crate::error::{Error, Result};
use crate::models::PosteriorDistribution;
use crate::numcore::{kl_divergence, Graph, Var};

fn uniform(k: usize) -> Vec<f64> {
    vec![1.0 / k as f64; k]
}

/// Batch prior regularization: `KL(q′ ‖ uniform)` where `q′` is the batch-mean posterior.
pub fn bpr_loss(posteriors: &[PosteriorDistribution]) -> Result<f64> {
    let first = posteriors
        .first()
        .ok_or_else(|| Error::Argument("bpr_loss needs at least one posterior".into()))?;
    let k = first.probs.len();
    let mut mean = vec![0.0; k];
    for p in posteriors {
        if p.probs.len() != k {
            return Err(Error::Contract(format!(
                "mixed latent sizes in one batch ({k} and {})",
                p.probs.len()
            )));
        }
        for (m, v) in mean.iter_mut().zip(p.probs.data()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= posteriors.len() as f64);
    kl_divergence(&mean, &uniform(k))
}

/// Mean `−log p(label)` over the batch.
pub fn label_ce_loss(posteriors: &[PosteriorDistribution], labels: &[usize]) -> Result<f64> {
    if posteriors.is_empty() || posteriors.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} posteriors vs {} labels",
            posteriors.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (p, &l) in posteriors.iter().zip(labels) {
        if l >= p.probs.len() {
            return Err(Error::Contract(format!(
                "label {l} out of range for K = {}",
                p.probs.len()
            )));
        }
        total -= p.probs.data()[l].ln();
    }
    Ok(total / labels.len() as f64)
}

/// Graph form of [`bpr_loss`] over an `N×K` posterior matrix.
pub fn bpr_loss_graph(g: &mut Graph, posteriors: Var) -> Result<Var> {
    let k = g.value(posteriors).cols();
    let mean = g.mean_rows(posteriors);
    g.kl_to_const(mean, &uniform(k))
}

/// Graph form of [`label_ce_loss`] over the labelled rows; `None` when no row is labelled.
pub fn label_ce_loss_graph(g: &mut Graph, posteriors: Var, labels: &[Option<usize>]) -> Result<Option<Var>> {
    let (n, k) = (g.value(posteriors).rows(), g.value(posteriors).cols());
    if labels.len() != n {
        return Err(Error::Contract(format!("{n} posteriors vs {} labels", labels.len())));
    }
    let mut terms = Vec::new();
    for (i, l) in labels.iter().enumerate() {
        let Some(l) = *l else { continue };
        if l >= k {
            return Err(Error::Contract(format!("label {l} out of range for K = {k}")));
        }
        let p = g.pick(posteriors, i, l)?;
        let lp = g.log(p);
        terms.push(g.scale(lp, -1.0));
    }
    if terms.is_empty() {
        return Ok(None);
    }
    Ok(Some(crate::numcore::mean_of(g, &terms)?))
}
