use std::path::Path;

use regex::Regex;

use super::Transcript;
use crate::error::{Error, Result};

/// Default score patterns; each has two capture groups, `(score, max)`.
pub const DEFAULT_SCORE_PATTERNS: [&str; 3] = [
    r"(?i)score is (\d+) out of (\d+)",
    r"(?i)(\d+) out of a possible (\d+)",
    r"(?i)score:\s*(\d+)\s*/\s*(\d+)",
];

#[derive(Clone, Debug)]
pub struct ScorePatterns {
    patterns: Vec<Regex>,
}

impl Default for ScorePatterns {
    fn default() -> Self {
        Self::new(DEFAULT_SCORE_PATTERNS).expect("default patterns compile")
    }
}

impl ScorePatterns {
    pub fn new<I, S>(patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out = Vec::new();
        for p in patterns {
            let re = Regex::new(p.as_ref()).map_err(|e| Error::Config(e.to_string()))?;
            if re.captures_len() != 3 {
                return Err(Error::Config(format!(
                    "score pattern `{}` needs exactly two capture groups",
                    p.as_ref()
                )));
            }
            out.push(re);
        }
        Ok(Self { patterns: out })
    }

    /// Defaults plus one pattern per non-empty, non-`#` line of `path`.
    pub fn with_extra_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let extra = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        Self::new(DEFAULT_SCORE_PATTERNS.iter().copied().chain(extra))
    }

    /// Last `(score, max)` match in `text`, with its byte offset.
    fn last_in(&self, text: &str) -> Option<(usize, i64, i64)> {
        let mut best: Option<(usize, i64, i64)> = None;
        for re in &self.patterns {
            for c in re.captures_iter(text) {
                let start = c.get(0).expect("group 0").start();
                let (Ok(a), Ok(b)) = (c[1].parse(), c[2].parse()) else {
                    continue;
                };
                if best.is_none_or(|(s, _, _)| start >= s) {
                    best = Some((start, a, b));
                }
            }
        }
        best
    }

    pub fn last_score(&self, text: &str) -> Option<(i64, i64)> {
        self.last_in(text).map(|(_, a, b)| (a, b))
    }
}

/// Latest `(final, max)` score mentioned in any observation.
pub fn extract_scores(transcript: &Transcript, patterns: &ScorePatterns) -> Option<(i64, i64)> {
    transcript
        .steps
        .iter()
        .rev()
        .find_map(|s| patterns.last_score(&s.observation))
}

/// Fill missing per-step scores from score messages. A message in
/// observation `t` reports the score after action `t − 1`.
pub fn fill_scores(transcript: &mut Transcript, patterns: &ScorePatterns) {
    let n = transcript.steps.len();
    for t in 1..n {
        if transcript.steps[t - 1].score.is_none() {
            if let Some((s, _)) = patterns.last_score(&transcript.steps[t].observation) {
                transcript.steps[t - 1].score = Some(s);
            }
        }
    }
    if let Some((f, m)) = extract_scores(transcript, patterns) {
        transcript.final_score.get_or_insert(f);
        transcript.max_score.get_or_insert(m);
    }
}

pub fn normalize_score(final_score: i64, max_score: i64) -> Result<f64> {
    if max_score <= 0 {
        return Err(Error::Argument(format!("max score must be positive, got {max_score}")));
    }
    Ok((final_score as f64 / max_score as f64).clamp(0.0, 1.0))
}

/// Steps per score increase; `None` when the score never goes up.
/// Steps with an unknown score carry the previous value (initially 0).
pub fn steps_per_reward(transcript: &Transcript) -> Option<f64> {
    let mut prev = 0;
    let mut events = 0usize;
    for s in &transcript.steps {
        if let Some(v) = s.score {
            if v > prev {
                events += 1;
            }
            prev = v;
        }
    }
    (events > 0).then(|| transcript.steps.len() as f64 / events as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Step;

    fn with_obs(obs: &[&str]) -> Transcript {
        Transcript {
            game_id: "g".into(),
            speaker_id: "s".into(),
            jericho: false,
            steps: obs
                .iter()
                .map(|o| Step {
                    observation: o.to_string(),
                    action: "wait".into(),
                    score: None,
                })
                .collect(),
            final_score: None,
            max_score: None,
        }
    }

    #[test]
    fn extraction_examples() {
        let p = ScorePatterns::default();
        let t = with_obs(&["Hello.", "Your score is 45 out of a possible 100."]);
        assert_eq!(extract_scores(&t, &p), Some((45, 100)));
        assert_eq!(extract_scores(&with_obs(&["nothing here"]), &p), None);
        let t = with_obs(&["Score: 3/10", "You have won. Your score is 7 out of 10"]);
        assert_eq!(extract_scores(&t, &p), Some((7, 10)));
        let t = with_obs(&["score is 1 out of 5, later Score: 2/5"]);
        assert_eq!(extract_scores(&t, &p), Some((2, 5)));
    }

    #[test]
    fn extra_patterns_need_two_groups() {
        assert!(ScorePatterns::new([r"(\d+)"]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("p.txt");
        std::fs::write(&f, "# comment\n(\\d+) points of (\\d+)\n").unwrap();
        let p = ScorePatterns::with_extra_file(&f).unwrap();
        assert_eq!(p.last_score("you have 4 points of 9"), Some((4, 9)));
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_score(45, 100).unwrap(), 0.45);
        assert_eq!(normalize_score(100, 100).unwrap(), 1.0);
        assert_eq!(normalize_score(0, 350).unwrap(), 0.0);
        assert_eq!(normalize_score(120, 100).unwrap(), 1.0);
        assert!(normalize_score(1, 0).is_err());
    }

    #[test]
    fn reward_rate() {
        let mut t = with_obs(&["o"; 20]);
        for (i, s) in t.steps.iter_mut().enumerate() {
            s.score = Some(if i >= 14 {
                2
            } else if i >= 4 {
                1
            } else {
                0
            });
        }
        assert_eq!(steps_per_reward(&t), Some(10.0));
        assert_eq!(steps_per_reward(&with_obs(&["o"; 5])), None);
    }

    #[test]
    fn fill_from_messages() {
        let mut t = with_obs(&["start", "You put it. Your score is 1 out of a possible 2.", "x"]);
        fill_scores(&mut t, &ScorePatterns::default());
        assert_eq!(t.steps[0].score, Some(1));
        assert_eq!((t.final_score, t.max_score), (Some(1), Some(2)));
        assert_eq!(steps_per_reward(&t), Some(3.0));
    }
}
