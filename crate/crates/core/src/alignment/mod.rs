//! Losses that tie the discrete latent to a meaning: batch prior
//! regularization, speaker (persona) labels, and rule-based intents.

mod intent;
mod losses;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use intent::{classify_intent, IntentLabel, PosLexicon};
pub use losses::{bpr_loss, bpr_loss_graph, label_ce_loss, label_ce_loss_graph};

use crate::data::Sample;
use crate::error::{Error, Result};

pub const DEFAULT_LATENT_K: usize = 8;
pub const INTENT_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentMode {
    Latent,
    Persona,
    Intent,
}

impl LatentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LatentMode::Latent => "latent",
            LatentMode::Persona => "persona",
            LatentMode::Intent => "intent",
        }
    }
}

impl fmt::Display for LatentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LatentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "latent" => Ok(LatentMode::Latent),
            "persona" => Ok(LatentMode::Persona),
            "intent" => Ok(LatentMode::Intent),
            _ => Err(Error::Argument(format!("unknown latent mode `{s}`"))),
        }
    }
}

/// Which training phase a loss is evaluated in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Pretrain,
    Finetune,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentConfig {
    pub mode: LatentMode,
    /// Number of latent classes. For persona mode this is fixed from the
    /// training speakers when the teacher is built.
    pub k: usize,
}

impl Default for LatentConfig {
    fn default() -> Self {
        Self::latent(DEFAULT_LATENT_K)
    }
}

impl LatentConfig {
    pub fn latent(k: usize) -> Self {
        Self {
            mode: LatentMode::Latent,
            k,
        }
    }

    pub fn intent() -> Self {
        Self {
            mode: LatentMode::Intent,
            k: INTENT_K,
        }
    }

    pub fn persona(speakers: usize) -> Self {
        Self {
            mode: LatentMode::Persona,
            k: speakers,
        }
    }

    pub fn for_mode(mode: LatentMode) -> Self {
        match mode {
            LatentMode::Latent => Self::latent(DEFAULT_LATENT_K),
            LatentMode::Intent => Self::intent(),
            LatentMode::Persona => Self::persona(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("latent K must be positive".into()));
        }
        if self.mode == LatentMode::Intent && self.k != INTENT_K {
            return Err(Error::Config(format!(
                "intent mode needs K = {INTENT_K}, got {}",
                self.k
            )));
        }
        Ok(())
    }

    /// Whether the alignment loss is applied in `phase`. Speaker labels have
    /// no counterpart in fine-tuning data, so persona alignment is pre-training only.
    pub fn rec_active(&self, phase: Phase) -> bool {
        !(self.mode == LatentMode::Persona && phase == Phase::Finetune)
    }
}

/// Distinct speaker ids in order of first appearance.
pub fn speaker_index(samples: &[Sample]) -> Result<Vec<String>> {
    let mut seen = Vec::new();
    let mut known = HashMap::new();
    for (i, s) in samples.iter().enumerate() {
        let id = s
            .speaker_id
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("sample {i} has no speaker id (persona mode)")))?;
        if !known.contains_key(id) {
            known.insert(id.clone(), seen.len());
            seen.push(id.clone());
        }
    }
    Ok(seen)
}

/// Per-sample latent labels for the alignment loss.
///
/// Latent mode has no labels. Intent labels come from the gold action.
/// Persona labels index `speakers` during pre-training and are absent in fine-tuning.
pub fn assign_labels_with_speakers(
    samples: &[Sample],
    config: &LatentConfig,
    lexicon: &PosLexicon,
    phase: Phase,
    speakers: &[String],
) -> Result<Vec<Option<usize>>> {
    match config.mode {
        LatentMode::Latent => Ok(vec![None; samples.len()]),
        LatentMode::Intent => Ok(samples
            .iter()
            .map(|s| Some(classify_intent(&s.gold_action, lexicon).index()))
            .collect()),
        LatentMode::Persona if phase == Phase::Finetune => Ok(vec![None; samples.len()]),
        LatentMode::Persona => {
            if speakers.len() > config.k {
                return Err(Error::Contract(format!(
                    "{} speakers do not fit in K = {}",
                    speakers.len(),
                    config.k
                )));
            }
            let index: HashMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
            samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let id = s
                        .speaker_id
                        .as_deref()
                        .ok_or_else(|| Error::Contract(format!("sample {i} has no speaker id (persona mode)")))?;
                    index
                        .get(id)
                        .copied()
                        .map(Some)
                        .ok_or_else(|| Error::Contract(format!("speaker `{id}` is not mapped to a latent class")))
                })
                .collect()
        }
    }
}

/// [`assign_labels_with_speakers`] with speakers indexed by first appearance in `samples`.
pub fn assign_labels(
    samples: &[Sample],
    config: &LatentConfig,
    lexicon: &PosLexicon,
    phase: Phase,
) -> Result<Vec<Option<usize>>> {
    let speakers = if config.mode == LatentMode::Persona && phase == Phase::Pretrain {
        speaker_index(samples)?
    } else {
        Vec::new()
    };
    assign_labels_with_speakers(samples, config, lexicon, phase, &speakers)
}
