//! Corpus records, line-delimited loaders, windowed samples, splits and
//! negatives, plus a synthetic grid-world corpus generator.
//!
//! Transcript records (one JSON object per line):
//!
//! ```text
//! {"game_id": str, "speaker_id": str, "jericho": bool,
//!  "steps": [{"observation": str, "action": str, "score": int?}, ...]}
//! ```
//!
//! Walkthrough records:
//!
//! ```text
//! {"game_id": str, "difficulty": "possible" | "difficult", "max_score": int?,
//!  "steps": [{"observation": str, "action": str, "valid_actions": [str, ...]}, ...]}
//! ```
//!
//! Contexts join the previous observation, previous action and current
//! observation with the literal token `[SEP]`.

mod negatives;
mod scores;
pub mod synth;

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use negatives::{sample_negatives, Candidates, NegativePolicy};
pub use scores::{extract_scores, fill_scores, normalize_score, steps_per_reward, ScorePatterns};
pub use synth::{generate_synthetic, BehaviorMode, SynthCorpus, SynthGameSpec};

use crate::encoder::build_context;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub observation: String,
    pub action: String,
    /// Cumulative score after the action, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub game_id: String,
    pub speaker_id: String,
    #[serde(default)]
    pub jericho: bool,
    pub steps: Vec<Step>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_score: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_score: Option<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Possible,
    Difficult,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Possible => "possible",
            Difficulty::Difficult => "difficult",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "possible" => Ok(Difficulty::Possible),
            "difficult" => Ok(Difficulty::Difficult),
            _ => Err(Error::Argument(format!("unknown difficulty `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkthroughStep {
    pub observation: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_actions: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Walkthrough {
    pub game_id: String,
    pub difficulty: Difficulty,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_score: Option<i64>,
    pub steps: Vec<WalkthroughStep>,
}

/// One prediction unit: the windowed context and the action taken there.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub context: String,
    pub gold_action: String,
    pub valid_actions: Option<Vec<String>>,
    pub speaker_id: Option<String>,
    pub game_id: String,
    pub difficulty: Option<Difficulty>,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, record));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut f, r).map_err(|e| Error::Format(e.to_string()))?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

/// Load transcripts, dropping records flagged `jericho`.
pub fn load_transcripts(path: &Path) -> Result<Vec<Transcript>> {
    let mut out = Vec::new();
    for (line, t) in read_jsonl::<Transcript>(path)? {
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if t.steps.is_empty() {
            return Err(bad(format!("transcript `{}` has no steps", t.game_id)));
        }
        if let (Some(f), Some(m)) = (t.final_score, t.max_score) {
            if f > m {
                return Err(bad(format!("final score {f} exceeds max score {m}")));
            }
        }
        if !t.jericho {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn save_transcripts(path: &Path, transcripts: &[Transcript]) -> Result<()> {
    write_jsonl(path, transcripts)
}

pub fn load_walkthroughs(path: &Path) -> Result<Vec<Walkthrough>> {
    let mut out = Vec::new();
    for (line, w) in read_jsonl::<Walkthrough>(path)? {
        if w.steps.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("walkthrough `{}` has no steps", w.game_id),
            });
        }
        out.push(w);
    }
    Ok(out)
}

pub fn save_walkthroughs(path: &Path, walkthroughs: &[Walkthrough]) -> Result<()> {
    write_jsonl(path, walkthroughs)
}

/// One sample per transcript step.
pub fn transcript_samples(transcripts: &[Transcript]) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for tr in transcripts {
        let obs: Vec<&str> = tr.steps.iter().map(|s| s.observation.as_str()).collect();
        let acts: Vec<&str> = tr.steps.iter().map(|s| s.action.as_str()).collect();
        for (t, step) in tr.steps.iter().enumerate() {
            if step.action.trim().is_empty() {
                return Err(Error::Schema(format!(
                    "transcript `{}` step {t} has an empty action",
                    tr.game_id
                )));
            }
            out.push(Sample {
                context: build_context(&obs, &acts, t)?,
                gold_action: step.action.clone(),
                valid_actions: None,
                speaker_id: Some(tr.speaker_id.clone()),
                game_id: tr.game_id.clone(),
                difficulty: None,
            });
        }
    }
    Ok(out)
}

/// One sample per walkthrough step, each carrying its valid-action set.
pub fn walkthrough_samples(walkthroughs: &[Walkthrough]) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for w in walkthroughs {
        let obs: Vec<&str> = w.steps.iter().map(|s| s.observation.as_str()).collect();
        let acts: Vec<&str> = w.steps.iter().map(|s| s.action.as_str()).collect();
        for (t, step) in w.steps.iter().enumerate() {
            let valid = step
                .valid_actions
                .clone()
                .ok_or_else(|| Error::Schema(format!("walkthrough `{}` step {t} has no valid_actions", w.game_id)))?;
            if !valid.contains(&step.action) {
                return Err(Error::Schema(format!(
                    "walkthrough `{}` step {t}: gold `{}` is not a valid action",
                    w.game_id, step.action
                )));
            }
            out.push(Sample {
                context: build_context(&obs, &acts, t)?,
                gold_action: step.action.clone(),
                valid_actions: Some(valid),
                speaker_id: None,
                game_id: w.game_id.clone(),
                difficulty: Some(w.difficulty),
            });
        }
    }
    Ok(out)
}

/// Either corpus kind, for [`make_samples`].
pub enum Corpus<'a> {
    Transcripts(&'a [Transcript]),
    Walkthroughs(&'a [Walkthrough]),
}

pub fn make_samples(corpus: Corpus<'_>) -> Result<Vec<Sample>> {
    match corpus {
        Corpus::Transcripts(t) => transcript_samples(t),
        Corpus::Walkthroughs(w) => walkthrough_samples(w),
    }
}

/// Seeded shuffle, then the first `⌈fraction·n⌉` items go to validation.
/// Both halves keep the input order.
pub fn split_by_transcript<T: Clone>(items: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::Argument("cannot split an empty corpus".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "split fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let n = items.len();
    let n_val = ((fraction * n as f64) - 1e-9).ceil() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_val = vec![false; n];
    for &i in &order[..n_val] {
        is_val[i] = true;
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (item, v) in items.iter().zip(is_val) {
        if v {
            val.push(item.clone());
        } else {
            train.push(item.clone());
        }
    }
    Ok((train, val))
}
