use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativePolicy {
    /// Other golds of the same batch.
    InBatch,
    /// The sample's own valid-action set.
    ValidActions,
}

/// Scored candidates for one sample and the position of its gold action.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidates {
    pub actions: Vec<String>,
    pub gold: usize,
}

fn dedup_keep_first(items: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|a| seen.insert(a.clone())).collect()
}

pub fn sample_negatives(batch: &[Sample], policy: NegativePolicy) -> Result<Vec<Candidates>> {
    match policy {
        NegativePolicy::InBatch => {
            if batch.len() < 2 {
                return Err(Error::Contract(format!(
                    "in-batch negatives need at least 2 samples, got {}",
                    batch.len()
                )));
            }
            let pool = dedup_keep_first(batch.iter().map(|s| s.gold_action.clone()));
            Ok(batch
                .iter()
                .map(|s| Candidates {
                    gold: pool
                        .iter()
                        .position(|a| *a == s.gold_action)
                        .expect("pool holds every gold"),
                    actions: pool.clone(),
                })
                .collect())
        }
        NegativePolicy::ValidActions => batch
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let valid = s
                    .valid_actions
                    .as_ref()
                    .ok_or_else(|| Error::Contract(format!("sample {i} has no valid actions")))?;
                let actions = dedup_keep_first(valid.iter().cloned());
                let gold = actions.iter().position(|a| *a == s.gold_action).ok_or_else(|| {
                    Error::Contract(format!(
                        "sample {i}: gold `{}` missing from valid actions",
                        s.gold_action
                    ))
                })?;
                Ok(Candidates { actions, gold })
            })
            .collect(),
    }
}
