use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kd::kd_loss_graph;
use crate::alignment::{assign_labels, LatentConfig, Phase, PosLexicon};
use crate::data::{sample_negatives, NegativePolicy, Sample};
use crate::encoder::{EncoderConfig, Vocabulary};
use crate::error::Result;
use crate::models::{
    student_logits_graph, student_loss, teacher_loss, GumbelConfig, ModelConfig, ScoringBatch, Student, Teacher,
    TeacherObjective,
};
use crate::numcore::{grad_check, gumbel_noise, mean_of, softmax, GradCheckReport, Tensor};

const PROBE_DIM: usize = 8;
const PROBE_K: usize = 8;

fn probe_samples() -> Vec<Sample> {
    let s = |ctx: &str, gold: &str, speaker: &str| Sample {
        context: ctx.into(),
        gold_action: gold.into(),
        valid_actions: None,
        speaker_id: Some(speaker.into()),
        game_id: "probe".into(),
        difficulty: None,
    };
    vec![
        s("Kitchen. Exits: north east. Here: coal.", "take coal", "p0"),
        s("Hall. Exits: south. A glow to the south.", "south", "p1"),
        s("Cellar. The chest is closed. Carrying: coal.", "open chest", "p0"),
        s("Study. Here: lamp.", "examine lamp", "p2"),
    ]
}

/// Central-difference checks of every training objective on a four-sample
/// batch with `d = 8`, `K = 8` and `ε = 1e-5`.
pub fn check_gradients(seed: u64) -> Result<Vec<(String, GradCheckReport)>> {
    let samples = probe_samples();
    let vocab = Vocabulary::build(
        samples.iter().flat_map(|s| [s.context.clone(), s.gold_action.clone()]),
        1,
    );
    let cands = sample_negatives(&samples, NegativePolicy::InBatch)?;
    let batch = ScoringBatch::new(&samples, &cands, &vocab)?;
    let config = ModelConfig {
        encoder: EncoderConfig {
            dim: PROBE_DIM,
            ff_hidden: 2 * PROBE_DIM,
            max_len: 40,
            init_std: 0.1,
            ..EncoderConfig::default()
        },
        ..ModelConfig::default()
    };
    let mut out = Vec::new();

    let student = Student::new(vocab.clone(), config.clone(), seed)?;
    let r = grad_check(
        |g, p| student_loss(g, p, &student.config, &batch),
        &student.params,
        1e-5,
    )?;
    out.push(("student".to_string(), r));

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for latent in [
        LatentConfig::latent(PROBE_K),
        LatentConfig::intent(),
        LatentConfig::persona(3),
    ] {
        let teacher = Teacher::new(vocab.clone(), config.clone(), latent, vec![], seed)?;
        let labels = assign_labels(&samples, &latent, &PosLexicon::bundled(), Phase::Pretrain)?;
        let objective = TeacherObjective {
            latent,
            phase: Phase::Pretrain,
            rec_weight: 1.0,
            gumbel: GumbelConfig {
                temperature: 1.0,
                hard: false,
            },
        };
        let noise = Tensor::matrix(batch.len(), latent.k, gumbel_noise(batch.len() * latent.k, &mut rng))?;
        let r = grad_check(
            |g, p| Ok(teacher_loss(g, p, &teacher.config, &objective, &batch, &labels, &noise)?.total),
            &teacher.params,
            1e-5,
        )?;
        out.push((format!("teacher-{}", latent.mode.as_str()), r));
    }

    let targets = batch
        .candidates
        .iter()
        .map(|c| {
            let logits: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            Ok(softmax(&Tensor::vector(logits), 1.0)?.into_data())
        })
        .collect::<Result<Vec<_>>>()?;
    for t2 in [false, true] {
        let r = grad_check(
            |g, p| {
                let logits = student_logits_graph(g, p, &student.config, &batch)?;
                let terms = logits
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| kd_loss_graph(g, l, &targets[i], batch.gold[i], 4.0, 1.0, t2))
                    .collect::<Result<Vec<_>>>()?;
                mean_of(g, &terms)
            },
            &student.params,
            1e-5,
        )?;
        out.push((if t2 { "distill-t2" } else { "distill" }.to_string(), r));
    }
    Ok(out)
}
