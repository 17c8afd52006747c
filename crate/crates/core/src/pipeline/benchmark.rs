use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::stages::{run_pipeline, StageReport};
use crate::data::{generate_synthetic, make_samples, split_by_transcript, Corpus, Sample, SynthGameSpec};
use crate::error::Result;
use crate::eval::{eval_recall_at_1, eval_validation_9neg, PosteriorTeacherScorer, StudentScorer};

/// Fraction of transcripts held out for next-action validation.
pub const TRANSCRIPT_VALIDATION_FRACTION: f64 = 0.1;
/// Walkthrough games held out for testing (10 of 50).
pub const HELD_OUT_GAME_FRACTION: f64 = 0.2;

/// The standard synthetic benchmark for one seed.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub transcripts: Vec<Sample>,
    pub transcript_validation: Vec<Sample>,
    pub walkthroughs: Vec<Sample>,
    pub held_out: Vec<Sample>,
}

pub fn standard_spec(seed: u64) -> SynthGameSpec {
    SynthGameSpec {
        seed,
        ..SynthGameSpec::default()
    }
}

pub fn build_benchmark(spec: &SynthGameSpec) -> Result<Benchmark> {
    let corpus = generate_synthetic(spec)?;
    let (tr, tv) = split_by_transcript(&corpus.transcripts, TRANSCRIPT_VALIDATION_FRACTION, spec.seed)?;
    let (wt, wh) = split_by_transcript(&corpus.walkthroughs, HELD_OUT_GAME_FRACTION, spec.seed)?;
    Ok(Benchmark {
        transcripts: make_samples(Corpus::Transcripts(&tr))?,
        transcript_validation: make_samples(Corpus::Transcripts(&tv))?,
        walkthroughs: make_samples(Corpus::Walkthroughs(&wt))?,
        held_out: make_samples(Corpus::Walkthroughs(&wh))?,
    })
}

/// Measurements of one full pipeline run on the benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Held-out recall@1 of the stage-1 student.
    pub pretrained_recall: f64,
    /// Held-out recall@1 of the distilled student.
    pub distilled_recall: f64,
    /// Held-out recall@1 of the hard-label fine-tuned student.
    pub hard_label_recall: f64,
    /// Held-out recall@1 of the fine-tuned teacher with posterior access.
    pub teacher_recall: f64,
    /// 9-negative transcript validation, stage-1 student.
    pub student_validation: f64,
    /// 9-negative transcript validation, stage-2 teacher with posterior access.
    pub teacher_validation: f64,
    pub reports: Vec<StageReport>,
}

/// Generate the benchmark for `seed`, train everything with `cfg` (its
/// seed replaced by `seed`) and evaluate.
pub fn run_benchmark_seed(cfg: &TrainConfig, spec: &SynthGameSpec) -> Result<SeedOutcome> {
    let bench = build_benchmark(spec)?;
    let cfg = TrainConfig {
        seed: spec.seed,
        ..cfg.clone()
    };
    let run = run_pipeline(&cfg, &bench.transcripts, &bench.walkthroughs, true)?;
    let recall = |s| -> Result<f64> { Ok(eval_recall_at_1(&mut StudentScorer::new(s), &bench.held_out)?.overall) };
    let hard = run.hard_label_student.as_ref().expect("ablation requested");
    Ok(SeedOutcome {
        seed: spec.seed,
        pretrained_recall: recall(&run.pretrained_student)?,
        distilled_recall: recall(&run.student)?,
        hard_label_recall: recall(hard)?,
        teacher_recall: eval_recall_at_1(&mut PosteriorTeacherScorer::new(&run.teacher), &bench.held_out)?.overall,
        student_validation: eval_validation_9neg(
            &mut StudentScorer::new(&run.pretrained_student),
            &bench.transcript_validation,
            spec.seed,
        )?,
        teacher_validation: eval_validation_9neg(
            &mut PosteriorTeacherScorer::new(&run.pretrained_teacher),
            &bench.transcript_validation,
            spec.seed,
        )?,
        reports: run.reports,
    })
}
