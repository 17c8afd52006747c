use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{fill_scores, normalize_score, steps_per_reward, ScorePatterns, Step, Transcript, Walkthrough};
use crate::encoder::words;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub games: usize,
    pub transcripts: usize,
    pub samples: usize,
    pub vocab_size: usize,
    pub mean_vocab_per_game: f64,
    /// Mean over transcripts with at least one reward.
    pub mean_steps_per_reward: f64,
    pub transcripts_with_reward: usize,
    /// `(rank_fraction, normalized_score)`, ascending.
    pub score_cdf: Vec<(f64, f64)>,
}

/// Counts, vocabulary, reward density and final-score distribution. Missing
/// per-step and final scores are read from score messages.
pub fn corpus_stats(transcripts: &[Transcript], patterns: &ScorePatterns) -> CorpusStats {
    if transcripts.is_empty() {
        return CorpusStats::default();
    }
    let mut global: HashSet<String> = HashSet::new();
    let mut per_game: std::collections::BTreeMap<String, HashSet<String>> = Default::default();
    let mut rewards = Vec::new();
    let mut scores = Vec::new();
    for t in transcripts {
        let mut t = t.clone();
        fill_scores(&mut t, patterns);
        let game = per_game.entry(t.game_id.clone()).or_default();
        for s in &t.steps {
            for w in words(&s.observation).into_iter().chain(words(&s.action)) {
                game.insert(w.clone());
                global.insert(w);
            }
        }
        rewards.extend(steps_per_reward(&t));
        if let Some(v) = t
            .final_score
            .zip(t.max_score)
            .and_then(|(f, m)| normalize_score(f, m).ok())
        {
            scores.push(v);
        }
    }
    CorpusStats {
        games: per_game.len(),
        transcripts: transcripts.len(),
        samples: transcripts.iter().map(|t| t.steps.len()).sum(),
        vocab_size: global.len(),
        mean_vocab_per_game: per_game.values().map(|v| v.len()).sum::<usize>() as f64 / per_game.len() as f64,
        mean_steps_per_reward: if rewards.is_empty() {
            0.0
        } else {
            rewards.iter().sum::<f64>() / rewards.len() as f64
        },
        transcripts_with_reward: rewards.len(),
        score_cdf: score_cdf(&scores),
    }
}

/// Empirical CDF rows `(i / n, score_i)` over sorted scores.
pub fn score_cdf(scores: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, s)| ((i + 1) as f64 / n, s))
        .collect()
}

pub fn cdf_csv(rows: &[(f64, f64)]) -> String {
    let mut out = String::from("rank_fraction,normalized_score\n");
    for (r, s) in rows {
        writeln!(out, "{r},{s}").unwrap();
    }
    out
}

/// A walkthrough as a transcript, with per-step scores read from the
/// following observation.
pub fn walkthrough_transcript(w: &Walkthrough, patterns: &ScorePatterns) -> Transcript {
    let mut t = Transcript {
        game_id: w.game_id.clone(),
        speaker_id: "walkthrough".into(),
        jericho: false,
        steps: w
            .steps
            .iter()
            .map(|s| Step {
                observation: s.observation.clone(),
                action: s.action.clone(),
                score: None,
            })
            .collect(),
        final_score: None,
        max_score: w.max_score,
    };
    crate::data::fill_scores(&mut t, patterns);
    t
}
