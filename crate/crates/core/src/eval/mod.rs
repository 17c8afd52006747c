//! Recall@1 protocols, significance tests and corpus statistics.

mod corpus;
mod recall;
mod stats;

use std::fmt::Write as _;

pub use corpus::{cdf_csv, corpus_stats, score_cdf, walkthrough_transcript, CorpusStats};
pub use recall::{
    eval_recall_at_1, eval_validation_9neg, select, validation_candidates, ActionScorer, ConstantScorer, EvalResult,
    GameRecall, OracleScorer, PosteriorTeacherScorer, RandomScorer, StudentScorer, VALIDATION_DISTRACTORS,
};
pub use stats::{paired_t_test, t_test, welch, SignificanceReport};

pub const EVAL_CSV_HEADER: &str = "game_id,difficulty,n_samples,mean_valid_actions,recall_at_1";

/// One line per game plus a final `overall` line.
pub fn eval_csv(result: &EvalResult) -> String {
    let mut out = format!("{EVAL_CSV_HEADER}\n");
    for g in &result.games {
        let diff = g.difficulty.map(|d| d.as_str()).unwrap_or("");
        writeln!(
            out,
            "{},{},{},{:.4},{:.6}",
            g.game_id, diff, g.n_samples, g.mean_valid_actions, g.recall_at_1
        )
        .unwrap();
    }
    writeln!(
        out,
        "overall,,{},{:.4},{:.6}",
        result.correct.len(),
        result.mean_candidates,
        result.overall
    )
    .unwrap();
    out
}
