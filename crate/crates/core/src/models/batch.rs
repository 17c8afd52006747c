use std::collections::HashMap;

use crate::data::{Candidates, Sample};
use crate::encoder::{tokenize, Role, Vocabulary};
use crate::error::{Error, Result};

/// Token ids for one training step. Each distinct action string is encoded
/// once; `candidates[i]` indexes into `pool` and `gold[i]` indexes into
/// `candidates[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoringBatch {
    pub contexts: Vec<Vec<u32>>,
    pub pool: Vec<Vec<u32>>,
    pub pool_text: Vec<String>,
    pub candidates: Vec<Vec<usize>>,
    pub gold: Vec<usize>,
}

impl ScoringBatch {
    pub fn new(samples: &[Sample], candidates: &[Candidates], vocab: &Vocabulary) -> Result<Self> {
        if samples.is_empty() || samples.len() != candidates.len() {
            return Err(Error::Contract(format!(
                "{} samples vs {} candidate lists",
                samples.len(),
                candidates.len()
            )));
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut pool_text: Vec<String> = Vec::new();
        let mut cand_idx = Vec::with_capacity(samples.len());
        let mut gold = Vec::with_capacity(samples.len());
        for (i, (s, c)) in samples.iter().zip(candidates).enumerate() {
            if c.actions.get(c.gold) != Some(&s.gold_action) {
                return Err(Error::Contract(format!(
                    "sample {i}: gold `{}` is not among its candidates",
                    s.gold_action
                )));
            }
            let mut row = Vec::with_capacity(c.actions.len());
            for a in &c.actions {
                let next = pool_text.len();
                let id = *index.entry(a.as_str()).or_insert(next);
                if id == next {
                    pool_text.push(a.clone());
                }
                row.push(id);
            }
            cand_idx.push(row);
            gold.push(c.gold);
        }
        Ok(Self {
            contexts: samples
                .iter()
                .map(|s| tokenize(&s.context, Role::Context, vocab))
                .collect(),
            pool: pool_text.iter().map(|a| tokenize(a, Role::Action, vocab)).collect(),
            pool_text,
            candidates: cand_idx,
            gold,
        })
    }

    pub fn len(&self) -> usize {
        self.contexts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contexts.is_empty()
    }

    /// Pool row of sample `i`'s gold action.
    pub fn gold_pool_index(&self, i: usize) -> usize {
        self.candidates[i][self.gold[i]]
    }
}
