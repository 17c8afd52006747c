//! Four-stage training: student pre-training, teacher pre-training,
//! teacher fine-tuning and distillation of the teacher into the student.

mod benchmark;
mod config;
mod gradients;
mod kd;
mod stages;

pub use benchmark::{
    build_benchmark, run_benchmark_seed, standard_spec, Benchmark, SeedOutcome, HELD_OUT_GAME_FRACTION,
    TRANSCRIPT_VALIDATION_FRACTION,
};
pub use config::TrainConfig;
pub use gradients::check_gradients;
pub use kd::{kd_loss, kd_loss_graph, kd_loss_with_target};
pub use stages::{
    append_report, build_vocabulary, distillation_targets, epoch_batches, run_pipeline, run_stage1_student_pretrain,
    run_stage2_teacher_pretrain, run_stage3_teacher_finetune, run_stage4_distill, run_student_finetune,
    steps_per_epoch, PipelineRun, Stage, StageReport,
};
