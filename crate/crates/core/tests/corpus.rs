use std::path::Path;

use latentkd::data::{load_transcripts, steps_per_reward, ScorePatterns};
use latentkd::eval::{cdf_csv, corpus_stats};

fn fixture() -> Vec<latentkd::data::Transcript> {
    load_transcripts(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus_5.jsonl")).unwrap()
}

#[test]
fn five_transcript_fixture_matches_hand_counts() {
    let transcripts = fixture();
    assert_eq!(transcripts.len(), 5);

    // Only explicit per-step scores count before score messages are read.
    let raw: Vec<Option<f64>> = transcripts.iter().map(steps_per_reward).collect();
    assert_eq!(raw, vec![Some(3.0), None, None, None, Some(4.0)]);

    let stats = corpus_stats(&transcripts, &ScorePatterns::default());
    assert_eq!(stats.games, 3);
    assert_eq!(stats.transcripts, 5);
    assert_eq!(stats.samples, 26);
    // alpha 3.0, bob 2.0, dee 3.0, eve 4.0; cy never scores.
    assert_eq!(stats.transcripts_with_reward, 4);
    assert_eq!(stats.mean_steps_per_reward, 3.0);
    assert_eq!(
        stats.score_cdf,
        vec![(0.2, 0.0), (0.4, 0.25), (0.6, 0.5), (0.8, 0.8), (1.0, 1.0)]
    );
    assert_eq!(
        cdf_csv(&stats.score_cdf),
        "rank_fraction,normalized_score\n0.2,0\n0.4,0.25\n0.6,0.5\n0.8,0.8\n1,1\n"
    );
}
