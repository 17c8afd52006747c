//! Value-level versions of the dense ops, for evaluation paths and tests.

use rand::Rng;
use rand_distr::{Distribution, Gumbel};

use super::tensor::{argmax, log_softmax_row, matmul_into, softmax_row, Tensor};
use crate::error::{Error, Result};

const PROB_TOL: f64 = 1e-9;

/// Matrix product `input[n×a] · weight[a×b]`.
pub fn affine(input: &Tensor, weight: &Tensor) -> Result<Tensor> {
    let (n, a) = (input.rows(), input.cols());
    let (a2, b) = (weight.rows(), weight.cols());
    if a != a2 || weight.shape().len() != 2 {
        return Err(Error::dim(input.shape(), weight.shape(), "affine inner dimensions"));
    }
    let mut out = vec![0.0; n * b];
    matmul_into(input.data(), weight.data(), &mut out, n, a, b);
    Tensor::matrix(n, b, out)
}

/// Row-wise `softmax(logits / temperature)`, max-subtracted.
pub fn softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Argument(format!("temperature must be > 0, got {temperature}")));
    }
    let mut out = logits.clone();
    for i in 0..logits.rows() {
        softmax_row(logits.row(i), temperature, out.row_mut(i));
    }
    Ok(out)
}

pub fn log_softmax(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Argument(format!("temperature must be > 0, got {temperature}")));
    }
    let mut out = logits.clone();
    for i in 0..logits.rows() {
        log_softmax_row(logits.row(i), temperature, out.row_mut(i));
    }
    Ok(out)
}

fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Argument(format!("{what} has negative or non-finite entries")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > PROB_TOL {
        return Err(Error::Argument(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// `−Σ target_i · log_probs_i`.
pub fn cross_entropy(target: &[f64], log_probs: &[f64]) -> Result<f64> {
    if target.len() != log_probs.len() {
        return Err(Error::dim(&[target.len()], &[log_probs.len()], "cross_entropy"));
    }
    check_distribution(target, "cross-entropy target")?;
    Ok(-target
        .iter()
        .zip(log_probs)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lp)| t * lp)
        .sum::<f64>())
}

/// `KL(q ‖ p) = Σ q_i log(q_i / p_i)` with `0 · log 0 := 0`.
pub fn kl_divergence(q: &[f64], p: &[f64]) -> Result<f64> {
    if q.len() != p.len() {
        return Err(Error::dim(&[q.len()], &[p.len()], "kl_divergence"));
    }
    let mut total = 0.0;
    for (i, (&qi, &pi)) in q.iter().zip(p).enumerate() {
        if qi <= 0.0 {
            continue;
        }
        if pi <= 0.0 {
            return Err(Error::Divergence(format!(
                "p[{i}] = {pi} where q[{i}] = {qi} is positive"
            )));
        }
        total += qi * (qi / pi).ln();
    }
    // Rounding can leave a tiny negative residue when q == p.
    Ok(total.max(0.0))
}

/// Standard Gumbel(0, 1) noise of length `k`.
pub fn gumbel_noise<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let dist = Gumbel::new(0.0, 1.0).expect("unit Gumbel parameters are valid");
    (0..k).map(|_| dist.sample(rng)).collect()
}

/// Relaxed sample `softmax((log probs + noise) / temperature)` and, when
/// `hard`, the one-hot of its argmax.
pub fn gumbel_softmax_with_noise(probs: &[f64], noise: &[f64], temperature: f64, hard: bool) -> Result<Tensor> {
    if probs.len() != noise.len() {
        return Err(Error::dim(&[probs.len()], &[noise.len()], "gumbel noise"));
    }
    if let Some(i) = probs.iter().position(|&p| !(p > 0.0)) {
        return Err(Error::Argument(format!(
            "gumbel-softmax needs strictly positive probabilities (entry {i} is {})",
            probs[i]
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be > 0, got {temperature}")));
    }
    let perturbed: Vec<f64> = probs.iter().zip(noise).map(|(p, g)| p.ln() + g).collect();
    let mut soft = vec![0.0; probs.len()];
    softmax_row(&perturbed, temperature, &mut soft);
    if hard {
        Tensor::one_hot(soft.len(), argmax(&soft))
    } else {
        Ok(Tensor::vector(soft))
    }
}

/// Draw a Gumbel-Softmax sample from a strictly positive probability vector.
pub fn gumbel_softmax_sample<R: Rng + ?Sized>(
    probs: &Tensor,
    temperature: f64,
    rng: &mut R,
    hard: bool,
) -> Result<Tensor> {
    let noise = gumbel_noise(probs.len(), rng);
    gumbel_softmax_with_noise(probs.data(), &noise, temperature, hard)
}
