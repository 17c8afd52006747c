use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::kd::kd_loss_graph;
use crate::alignment::{assign_labels_with_speakers, speaker_index, LatentConfig, LatentMode, Phase, PosLexicon};
use crate::data::{sample_negatives, NegativePolicy, Sample};
use crate::encoder::{Role, Vocabulary};
use crate::error::{Error, Result};
use crate::models::{
    student_logits_graph, student_loss, teacher_loss, EncodingCache, ScoringBatch, Student, Teacher, TeacherObjective,
};
use crate::numcore::{gumbel_noise, gumbel_softmax_sample, mean_of, softmax, AdamState, Graph, ParamSet, Tensor, Var};

// Fixed rng streams, one per stage-level use.
const STREAM_STUDENT_PRETRAIN: u64 = 1;
const STREAM_TEACHER_PRETRAIN: u64 = 2;
const STREAM_TEACHER_FINETUNE: u64 = 3;
const STREAM_STUDENT_FINETUNE: u64 = 4;
const STREAM_DISTILL_TARGETS: u64 = 14;
const NOISE_OFFSET: u64 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    StudentPretrain,
    TeacherPretrain,
    TeacherFinetune,
    Distill,
    /// Hard-label student fine-tuning, the no-teacher ablation of stage 4.
    StudentFinetune,
}

impl Stage {
    pub fn number(self) -> Option<u8> {
        match self {
            Stage::StudentPretrain => Some(1),
            Stage::TeacherPretrain => Some(2),
            Stage::TeacherFinetune => Some(3),
            Stage::Distill => Some(4),
            Stage::StudentFinetune => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: Stage,
    pub epochs: usize,
    pub steps: usize,
    /// Mean batch loss of the untrained model over the first epoch.
    pub initial_loss: f64,
    /// Mean batch loss over the last epoch.
    pub final_loss: f64,
    pub wall_time_secs: f64,
    pub checkpoint: Option<PathBuf>,
}

/// Append `report` as one JSON line.
pub fn append_report(path: &Path, report: &StageReport) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(report).map_err(|e| Error::Format(e.to_string()))?;
    writeln!(f, "{line}")?;
    Ok(())
}

/// Vocabulary over every context, gold action and valid action.
pub fn build_vocabulary(samples: &[Sample], min_freq: usize) -> Vocabulary {
    let texts = samples.iter().flat_map(|s| {
        std::iter::once(s.context.as_str())
            .chain(std::iter::once(s.gold_action.as_str()))
            .chain(s.valid_actions.iter().flatten().map(String::as_str))
    });
    Vocabulary::build(texts, min_freq)
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Shuffled batches for one epoch. The last partial batch is kept; with
/// in-batch negatives a lone trailing sample joins the previous batch.
pub fn epoch_batches(n: usize, batch_size: usize, policy: NegativePolicy, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect();
    if policy == NegativePolicy::InBatch && batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let lone = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(lone);
    }
    batches
}

/// Number of optimizer steps [`epoch_batches`] yields per epoch.
pub fn steps_per_epoch(n: usize, batch_size: usize, policy: NegativePolicy) -> usize {
    let steps = n.div_ceil(batch_size.max(1));
    if policy == NegativePolicy::InBatch && steps > 1 && n % batch_size == 1 {
        steps - 1
    } else {
        steps
    }
}

struct Trace {
    steps: usize,
    initial: f64,
    last_epoch: f64,
}

/// Generic Adam loop. `loss_of` builds the batch loss on a fresh graph; its
/// last argument is set for the untrained-loss pass, which takes no step.
fn train<F>(
    params: &mut ParamSet,
    cfg: &TrainConfig,
    n: usize,
    epochs: usize,
    policy: NegativePolicy,
    shuffle: &mut ChaCha8Rng,
    mut loss_of: F,
) -> Result<Trace>
where
    F: FnMut(&mut Graph, &ParamSet, &[usize], bool) -> Result<Var>,
{
    if policy == NegativePolicy::InBatch && n < 2 {
        return Err(Error::Argument(format!(
            "in-batch training needs at least 2 samples, got {n}"
        )));
    }
    let mut adam = AdamState::new(cfg.adam(), params);
    let mut trace = Trace {
        steps: 0,
        initial: f64::NAN,
        last_epoch: f64::NAN,
    };
    for epoch in 0..epochs {
        let mut total = 0.0;
        let batches = epoch_batches(n, cfg.batch_size, policy, shuffle);
        if epoch == 0 {
            let mut sum = 0.0;
            for idx in &batches {
                let mut g = Graph::new();
                let loss = loss_of(&mut g, params, idx, true)?;
                sum += g.scalar(loss);
            }
            trace.initial = sum / batches.len() as f64;
        }
        for idx in &batches {
            let mut g = Graph::new();
            let loss = loss_of(&mut g, params, idx, false)?;
            let value = g.scalar(loss);
            if !value.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss {value} at step {}",
                    trace.steps
                )));
            }
            let grads = g.backward(loss)?;
            adam.step(params, &grads)?;
            total += value;
            trace.steps += 1;
        }
        trace.last_epoch = total / batches.len() as f64;
    }
    Ok(trace)
}

fn pick(samples: &[Sample], idx: &[usize]) -> Vec<Sample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn batch_for(samples: &[Sample], idx: &[usize], policy: NegativePolicy, vocab: &Vocabulary) -> Result<ScoringBatch> {
    let chosen = pick(samples, idx);
    let cands = sample_negatives(&chosen, policy)?;
    ScoringBatch::new(&chosen, &cands, vocab)
}

fn report(stage: Stage, epochs: usize, trace: Trace, started: Instant) -> StageReport {
    StageReport {
        stage,
        epochs,
        steps: trace.steps,
        initial_loss: trace.initial,
        final_loss: trace.last_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint: None,
    }
}

fn require_samples(samples: &[Sample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::Argument("no training samples".into()));
    }
    Ok(())
}

fn require_valid_actions(samples: &[Sample]) -> Result<()> {
    if let Some(i) = samples.iter().position(|s| s.valid_actions.is_none()) {
        return Err(Error::Contract(format!(
            "sample {i} ({}) has no valid actions",
            samples[i].game_id
        )));
    }
    Ok(())
}

fn train_student(
    cfg: &TrainConfig,
    mut student: Student,
    samples: &[Sample],
    stage: Stage,
    epochs: usize,
    policy: NegativePolicy,
    shuffle_stream: u64,
) -> Result<(Student, StageReport)> {
    let started = Instant::now();
    let mut shuffle = stream(cfg.seed, shuffle_stream);
    let (vocab, config) = (student.vocab.clone(), student.config.clone());
    let trace = train(
        &mut student.params,
        cfg,
        samples.len(),
        epochs,
        policy,
        &mut shuffle,
        |g, p, idx, _| {
            let b = batch_for(samples, idx, policy, &vocab)?;
            student_loss(g, p, &config, &b)
        },
    )?;
    Ok((student, report(stage, epochs, trace, started)))
}

/// Stage 1: student on transcripts with in-batch negatives.
pub fn run_stage1_student_pretrain(cfg: &TrainConfig, samples: &[Sample]) -> Result<(Student, StageReport)> {
    cfg.validate()?;
    require_samples(samples)?;
    let vocab = build_vocabulary(samples, cfg.min_token_freq);
    let student = Student::new(vocab, cfg.model.clone(), cfg.seed)?;
    train_student(
        cfg,
        student,
        samples,
        Stage::StudentPretrain,
        cfg.pretrain_epochs,
        NegativePolicy::InBatch,
        STREAM_STUDENT_PRETRAIN,
    )
}

/// Hard-label fine-tuning of a pre-trained student on valid-action
/// candidates, with the same epochs and batch order as stage 4.
pub fn run_student_finetune(cfg: &TrainConfig, samples: &[Sample], student: Student) -> Result<(Student, StageReport)> {
    cfg.validate()?;
    require_samples(samples)?;
    require_valid_actions(samples)?;
    train_student(
        cfg,
        student,
        samples,
        Stage::StudentFinetune,
        cfg.finetune_epochs,
        NegativePolicy::ValidActions,
        STREAM_STUDENT_FINETUNE,
    )
}

fn train_teacher(
    cfg: &TrainConfig,
    mut teacher: Teacher,
    samples: &[Sample],
    phase: Phase,
    stage: Stage,
    shuffle_stream: u64,
) -> Result<(Teacher, StageReport)> {
    let started = Instant::now();
    let (policy, epochs) = match phase {
        Phase::Pretrain => (NegativePolicy::InBatch, cfg.pretrain_epochs),
        Phase::Finetune => (NegativePolicy::ValidActions, cfg.finetune_epochs),
    };
    let labels = assign_labels_with_speakers(
        samples,
        &teacher.latent,
        &PosLexicon::bundled(),
        phase,
        &teacher.speakers,
    )?;
    let objective = TeacherObjective {
        latent: teacher.latent,
        phase,
        rec_weight: cfg.rec_weight,
        gumbel: cfg.gumbel,
    };
    let k = teacher.k();
    let mut shuffle = stream(cfg.seed, shuffle_stream);
    let mut noise_rng = stream(cfg.seed, shuffle_stream + NOISE_OFFSET);
    // The untrained-loss pass draws its own noise so training sees the same
    // draws with or without it.
    let mut probe_rng = noise_rng.clone();
    let (vocab, config) = (teacher.vocab.clone(), teacher.config.clone());
    let trace = train(
        &mut teacher.params,
        cfg,
        samples.len(),
        epochs,
        policy,
        &mut shuffle,
        |g, p, idx, probe| {
            let b = batch_for(samples, idx, policy, &vocab)?;
            let lab: Vec<Option<usize>> = idx.iter().map(|&i| labels[i]).collect();
            let rng = if probe { &mut probe_rng } else { &mut noise_rng };
            let noise = Tensor::matrix(idx.len(), k, gumbel_noise(idx.len() * k, rng))?;
            Ok(teacher_loss(g, p, &config, &objective, &b, &lab, &noise)?.total)
        },
    )?;
    Ok((teacher, report(stage, epochs, trace, started)))
}

/// Latent settings for a new teacher; persona mode takes K from the speakers.
fn teacher_latent(cfg: &TrainConfig, samples: &[Sample]) -> Result<(LatentConfig, Vec<String>)> {
    match cfg.latent.mode {
        LatentMode::Persona => {
            let speakers = speaker_index(samples)?;
            Ok((LatentConfig::persona(speakers.len()), speakers))
        }
        _ => Ok((cfg.latent, Vec::new())),
    }
}

/// Stage 2: teacher on transcripts with in-batch negatives and the
/// alignment loss of its latent mode.
pub fn run_stage2_teacher_pretrain(cfg: &TrainConfig, samples: &[Sample]) -> Result<(Teacher, StageReport)> {
    cfg.validate()?;
    require_samples(samples)?;
    let (latent, speakers) = teacher_latent(cfg, samples)?;
    let vocab = build_vocabulary(samples, cfg.min_token_freq);
    let teacher = Teacher::new(vocab, cfg.model.clone(), latent, speakers, cfg.seed)?;
    train_teacher(
        cfg,
        teacher,
        samples,
        Phase::Pretrain,
        Stage::TeacherPretrain,
        STREAM_TEACHER_PRETRAIN,
    )
}

/// Stage 3: teacher on walkthroughs with valid-action negatives.
pub fn run_stage3_teacher_finetune(
    cfg: &TrainConfig,
    samples: &[Sample],
    teacher: Teacher,
) -> Result<(Teacher, StageReport)> {
    cfg.validate()?;
    require_samples(samples)?;
    require_valid_actions(samples)?;
    train_teacher(
        cfg,
        teacher,
        samples,
        Phase::Finetune,
        Stage::TeacherFinetune,
        STREAM_TEACHER_FINETUNE,
    )
}

/// Teacher soft targets over each sample's valid actions, at temperature
/// `cfg.kd_temperature`.
pub fn distillation_targets(cfg: &TrainConfig, teacher: &Teacher, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut rng = stream(cfg.seed, STREAM_DISTILL_TARGETS);
    let mut cache = EncodingCache::teacher(teacher);
    let cands = sample_negatives(samples, NegativePolicy::ValidActions)?;
    let mut out = Vec::with_capacity(samples.len());
    for (s, c) in samples.iter().zip(&cands) {
        let ctx = cache.encode(&s.context, Role::Context)?;
        let acts = cache.encode_all(&c.actions, Role::Action)?;
        let post = teacher.posterior(&ctx, &acts[c.gold])?;
        let target = if cfg.kd_marginalize {
            let mut mix = vec![0.0; c.actions.len()];
            for (z, &w) in post.probs.data().iter().enumerate() {
                let scores = teacher.scores(&ctx, &Tensor::one_hot(post.k(), z)?, &acts)?;
                for (m, p) in mix.iter_mut().zip(softmax(&scores, cfg.kd_temperature)?.data()) {
                    *m += w * p;
                }
            }
            mix
        } else {
            let z = gumbel_softmax_sample(&post.probs, cfg.gumbel.temperature, &mut rng, true)?;
            softmax(&teacher.scores(&ctx, &z, &acts)?, cfg.kd_temperature)?.into_data()
        };
        out.push(target);
    }
    Ok(out)
}

/// Stage 4: distil the frozen teacher into the pre-trained student.
pub fn run_stage4_distill(
    cfg: &TrainConfig,
    samples: &[Sample],
    teacher: &Teacher,
    mut student: Student,
) -> Result<(Student, StageReport)> {
    cfg.validate()?;
    require_samples(samples)?;
    require_valid_actions(samples)?;
    let started = Instant::now();
    let targets = distillation_targets(cfg, teacher, samples)?;
    let mut shuffle = stream(cfg.seed, STREAM_STUDENT_FINETUNE);
    let (vocab, config) = (student.vocab.clone(), student.config.clone());
    let epochs = cfg.finetune_epochs;
    let policy = NegativePolicy::ValidActions;
    let trace = train(
        &mut student.params,
        cfg,
        samples.len(),
        epochs,
        policy,
        &mut shuffle,
        |g, p, idx, _| {
            let b = batch_for(samples, idx, policy, &vocab)?;
            let logits = student_logits_graph(g, p, &config, &b)?;
            let terms = idx
                .iter()
                .zip(&logits)
                .enumerate()
                .map(|(j, (&i, &l))| {
                    kd_loss_graph(
                        g,
                        l,
                        &targets[i],
                        b.gold[j],
                        cfg.kd_temperature,
                        cfg.beta,
                        cfg.kd_t2_scaling,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            mean_of(g, &terms)
        },
    )?;
    Ok((student, report(Stage::Distill, epochs, trace, started)))
}

/// Every model the four stages produce, plus the hard-label ablation.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub pretrained_student: Student,
    pub pretrained_teacher: Teacher,
    pub teacher: Teacher,
    pub student: Student,
    pub hard_label_student: Option<Student>,
    pub reports: Vec<StageReport>,
}

/// Run stages 1 to 4, and the hard-label ablation when `with_ablation`.
pub fn run_pipeline(
    cfg: &TrainConfig,
    transcripts: &[Sample],
    walkthroughs: &[Sample],
    with_ablation: bool,
) -> Result<PipelineRun> {
    let (pretrained_student, r1) = run_stage1_student_pretrain(cfg, transcripts)?;
    let (pretrained_teacher, r2) = run_stage2_teacher_pretrain(cfg, transcripts)?;
    let (teacher, r3) = run_stage3_teacher_finetune(cfg, walkthroughs, pretrained_teacher.clone())?;
    let (student, r4) = run_stage4_distill(cfg, walkthroughs, &teacher, pretrained_student.clone())?;
    let mut reports = vec![r1, r2, r3, r4];
    let hard_label_student = if with_ablation {
        let (s, r) = run_student_finetune(cfg, walkthroughs, pretrained_student.clone())?;
        reports.push(r);
        Some(s)
    } else {
        None
    };
    Ok(PipelineRun {
        pretrained_student,
        pretrained_teacher,
        teacher,
        student,
        hard_label_student,
        reports,
    })
}
