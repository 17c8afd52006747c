use serde::{Deserialize, Serialize};

use super::vocab::{Vocabulary, CLS_ID, SEP};
use crate::error::{Error, Result};

pub const MAX_CONTEXT_TOKENS: usize = 128;
pub const MAX_ACTION_TOKENS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Context,
    Action,
}

impl Role {
    pub fn max_tokens(self) -> usize {
        match self {
            Role::Context => MAX_CONTEXT_TOKENS,
            Role::Action => MAX_ACTION_TOKENS,
        }
    }
}

/// Lowercased alphanumeric words; the literal `[SEP]` survives as one token.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (i, piece) in text.split(SEP).enumerate() {
        if i > 0 {
            out.push(SEP.to_string());
        }
        let mut cur = String::new();
        for ch in piece.chars() {
            if ch.is_alphanumeric() {
                cur.extend(ch.to_lowercase());
            } else if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

/// `[CLS]` followed by at most `role.max_tokens()` word ids.
pub fn tokenize(text: &str, role: Role, vocab: &Vocabulary) -> Vec<u32> {
    tokenize_with_limit(text, role.max_tokens(), vocab)
}

pub fn tokenize_with_limit(text: &str, max_tokens: usize, vocab: &Vocabulary) -> Vec<u32> {
    std::iter::once(CLS_ID)
        .chain(words(text).iter().take(max_tokens).map(|w| vocab.id(w)))
        .collect()
}

/// Context string for step `t`: `o_{t-1} [SEP] x_{t-1} [SEP] o_t`, or just
/// `o_0` at the first step.
pub fn build_context<O, A>(observations: &[O], actions: &[A], t: usize) -> Result<String>
where
    O: AsRef<str>,
    A: AsRef<str>,
{
    if observations.is_empty() {
        return Err(Error::Argument("empty trajectory".into()));
    }
    if t >= observations.len() {
        return Err(Error::Argument(format!(
            "step {t} out of range for a trajectory of {} observations",
            observations.len()
        )));
    }
    if t == 0 {
        return Ok(observations[0].as_ref().to_string());
    }
    let prev_action = actions
        .get(t - 1)
        .ok_or_else(|| Error::Argument(format!("missing action {} for context at step {t}", t - 1)))?;
    Ok(format!(
        "{} {SEP} {} {SEP} {}",
        observations[t - 1].as_ref(),
        prev_action.as_ref(),
        observations[t].as_ref()
    ))
}
