//! Compact pre-norm self-attention encoder with first-token pooling.

use serde::{Deserialize, Serialize};

use super::text::{Role, MAX_CONTEXT_TOKENS};
use super::vocab::CLS_ID;
use crate::error::{Error, Result};
use crate::numcore::{Graph, ParamBuilder, ParamSet, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    /// Width `d` of every pooled vector.
    pub dim: usize,
    /// Number of attention blocks.
    pub depth: usize,
    pub ff_hidden: usize,
    /// Positional table size; `[CLS]` plus the longest context.
    pub max_len: usize,
    pub bias: bool,
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            depth: 1,
            ff_hidden: 64,
            max_len: MAX_CONTEXT_TOKENS + 1,
            bias: false,
            init_std: 0.02,
        }
    }
}

/// Pooled output of the encoder for one text.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedText {
    pub vector: Tensor,
    pub source_role: Role,
}

fn name(prefix: &str, part: &str) -> String {
    format!("{prefix}.{part}")
}

/// Register the encoder's parameters under `prefix`.
pub fn init_encoder(b: &mut ParamBuilder, prefix: &str, vocab_size: usize, cfg: &EncoderConfig) -> Result<()> {
    if cfg.dim == 0 || cfg.ff_hidden == 0 || cfg.max_len == 0 {
        return Err(Error::Config("encoder dims must be positive".into()));
    }
    let (d, f, s) = (cfg.dim, cfg.ff_hidden, cfg.init_std);
    b.normal(&name(prefix, "tok"), &[vocab_size, d], s)?;
    b.normal(&name(prefix, "pos"), &[cfg.max_len, d], s)?;
    for l in 0..cfg.depth {
        for w in ["wq", "wk", "wv", "wo"] {
            b.normal(&name(prefix, &format!("l{l}.{w}")), &[d, d], s)?;
        }
        b.normal(&name(prefix, &format!("l{l}.ff1")), &[d, f], s)?;
        b.normal(&name(prefix, &format!("l{l}.ff2")), &[f, d], s)?;
        if cfg.bias {
            for bias in ["bq", "bk", "bv", "bo", "ff2_b"] {
                b.zeros(&name(prefix, &format!("l{l}.{bias}")), &[1, d])?;
            }
            b.zeros(&name(prefix, &format!("l{l}.ff1_b")), &[1, f])?;
        }
    }
    Ok(())
}

fn project(g: &mut Graph, params: &ParamSet, x: Var, weight: &str, bias: Option<&str>) -> Result<Var> {
    let w = g.param(params, weight)?;
    let y = g.matmul(x, w)?;
    match bias {
        Some(b) => {
            let b = g.param(params, b)?;
            g.add_row(y, b)
        }
        None => Ok(y),
    }
}

/// Encode `ids` (which must start with `[CLS]`) and return the `1×d` output at position 0.
///
/// The last block only computes the query and feed-forward for position 0;
/// every other position's output there would be discarded by the pooling.
pub fn encode(g: &mut Graph, params: &ParamSet, prefix: &str, cfg: &EncoderConfig, ids: &[u32]) -> Result<Var> {
    if ids.first() != Some(&CLS_ID) {
        return Err(Error::Contract(
            "encoder input must be non-empty and start with [CLS]".into(),
        ));
    }
    if ids.len() > cfg.max_len {
        return Err(Error::Contract(format!(
            "sequence of {} ids exceeds the positional table ({})",
            ids.len(),
            cfg.max_len
        )));
    }
    let n = ids.len();
    let tok = g.param(params, &name(prefix, "tok"))?;
    let pos = g.param(params, &name(prefix, "pos"))?;
    let idx: Vec<usize> = ids.iter().map(|&i| i as usize).collect();
    let emb = g.gather(tok, &idx)?;
    let pos_rows = g.rows(pos, 0, n)?;
    let mut x = g.add(emb, pos_rows)?;
    let scale = 1.0 / (cfg.dim as f64).sqrt();

    for l in 0..cfg.depth {
        let last = l + 1 == cfg.depth;
        let p = |part: &str| name(prefix, &format!("l{l}.{part}"));
        let bias = |part: &str| cfg.bias.then(|| p(part));

        let h = g.layer_norm(x, LN_EPS);
        let q_src = if last { g.rows(h, 0, 1)? } else { h };
        let q = project(g, params, q_src, &p("wq"), bias("bq").as_deref())?;
        let k = project(g, params, h, &p("wk"), bias("bk").as_deref())?;
        let v = project(g, params, h, &p("wv"), bias("bv").as_deref())?;
        let scores = g.matmul_nt(q, k)?;
        let scores = g.scale(scores, scale);
        let attn = g.softmax(scores, 1.0)?;
        let mixed = g.matmul(attn, v)?;
        let out = project(g, params, mixed, &p("wo"), bias("bo").as_deref())?;
        let residual = if last { g.rows(x, 0, 1)? } else { x };
        x = g.add(residual, out)?;

        let h2 = g.layer_norm(x, LN_EPS);
        let f = project(g, params, h2, &p("ff1"), bias("ff1_b").as_deref())?;
        let f = g.tanh(f);
        let f = project(g, params, f, &p("ff2"), bias("ff2_b").as_deref())?;
        x = g.add(x, f)?;
    }
    if cfg.depth == 0 {
        x = g.rows(x, 0, 1)?;
    }
    Ok(x)
}

/// Value-level encoding without keeping the tape.
pub fn encode_text(
    params: &ParamSet,
    prefix: &str,
    cfg: &EncoderConfig,
    ids: &[u32],
    role: Role,
) -> Result<EncodedText> {
    let mut g = Graph::new();
    let v = encode(&mut g, params, prefix, cfg, ids)?;
    let vector = g.value(v).clone().reshape(vec![cfg.dim])?;
    Ok(EncodedText {
        vector,
        source_role: role,
    })
}
