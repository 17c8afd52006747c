use super::*;
use crate::alignment::PosLexicon;
use crate::data::{sample_negatives, NegativePolicy, Sample};
use crate::encoder::CLS_ID;
use crate::numcore::grad_check;

fn enc(v: &[f64]) -> EncodedText {
    EncodedText {
        vector: Tensor::vector(v.to_vec()),
        source_role: Role::Action,
    }
}

fn small_config(d: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            dim: d,
            depth: 1,
            ff_hidden: 2 * d,
            max_len: 40,
            bias: false,
            init_std: 0.5,
        },
        ..ModelConfig::default()
    }
}

fn sample(ctx: &str, gold: &str, speaker: &str) -> Sample {
    Sample {
        context: ctx.into(),
        gold_action: gold.into(),
        valid_actions: None,
        speaker_id: Some(speaker.into()),
        game_id: "g".into(),
        difficulty: None,
    }
}

fn toy_samples() -> Vec<Sample> {
    vec![
        sample("Kitchen. Exits: north east. Here: coal.", "take coal", "a"),
        sample("Hall. Exits: south. A glow to the south.", "south", "b"),
        sample("Cellar. The chest is closed. Carrying: coal.", "open chest", "a"),
        sample("Study. Here: lamp.", "examine lamp", "c"),
    ]
}

fn toy_vocab() -> Vocabulary {
    let texts: Vec<String> = toy_samples()
        .iter()
        .flat_map(|s| [s.context.clone(), s.gold_action.clone()])
        .collect();
    Vocabulary::build(texts, 1)
}

fn batch_of(samples: &[Sample], vocab: &Vocabulary) -> ScoringBatch {
    let c = sample_negatives(samples, NegativePolicy::InBatch).unwrap();
    ScoringBatch::new(samples, &c, vocab).unwrap()
}

#[test]
fn student_score_examples() {
    let c = enc(&[1.0, 0.0, 0.0]);
    let s = student_scores(&c, &[enc(&[0.0, 2.0, 0.0]), enc(&[0.0, 0.0, -1.0])]).unwrap();
    assert_eq!(s.data(), &[0.0, 0.0]);
    let p = softmax(&s, 1.0).unwrap();
    assert_eq!(p.data(), &[0.5, 0.5]);

    let h = [0.3, -1.2, 2.0];
    let s = student_scores(&enc(&h), &[enc(&h), enc(&[-0.3, 1.2, -2.0])]).unwrap();
    let n2: f64 = h.iter().map(|v| v * v).sum();
    assert_eq!(s.data(), &[n2, -n2]);
    assert_eq!(s.argmax(), 0);
    assert!(student_scores(&c, &[]).is_err());
}

#[test]
fn student_scores_match_loop_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
    let mut draw = |n: usize| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let h = draw(8);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| draw(8)).collect();
    let cands: Vec<EncodedText> = xs.iter().map(|x| enc(x)).collect();
    let got = student_scores(&enc(&h), &cands).unwrap();
    for (i, x) in xs.iter().enumerate() {
        let mut want = 0.0;
        for j in 0..8 {
            want += h[j] * x[j];
        }
        assert!((got.data()[i] - want).abs() < 1e-12);
    }
}

fn head_params(d: usize, k: usize, inner: Vec<f64>, outer: Vec<f64>, pred: Vec<f64>) -> ParamSet {
    let mut p = ParamSet::new(0);
    p.insert(REC_INNER, Tensor::matrix(2 * d, d, inner).unwrap()).unwrap();
    p.insert(REC_OUTER, Tensor::matrix(d, k, outer).unwrap()).unwrap();
    p.insert(PRED, Tensor::matrix(d + k, d, pred).unwrap()).unwrap();
    p
}

#[test]
fn recognition_examples() {
    let cfg = small_config(2);
    let zeros = head_params(2, 4, vec![0.0; 8], vec![0.0; 8], vec![0.0; 12]);
    let post = recognition_posterior(&enc(&[1.0, 2.0]), &enc(&[3.0, -1.0]), &zeros, &cfg).unwrap();
    assert_eq!(post.probs.data(), &[0.25; 4]);

    let one = head_params(2, 1, vec![0.3; 8], vec![0.7, -0.2], vec![0.1; 6]);
    let post = recognition_posterior(&enc(&[1.0, 2.0]), &enc(&[3.0, -1.0]), &one, &cfg).unwrap();
    assert_eq!(post.probs.data(), &[1.0]);

    // Hand evaluation: joint = [h_x; h_c] = [0.5, -1, 2, 0.25].
    let inner = vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8];
    let outer = vec![1.0, 0.0, -1.0, 0.5, 2.0, 0.0];
    let p = head_params(2, 3, inner, outer, vec![0.0; 10]);
    let post = recognition_posterior(&enc(&[2.0, 0.25]), &enc(&[0.5, -1.0]), &p, &cfg).unwrap();
    // hidden = [0.05 + 0.3 + 1.0 + 0.175, 0.1 - 0.4 - 1.2 + 0.2] = [1.525, -1.3]
    // logits = [1.525 - 0.65, -2.6, -1.525]
    let logits = [0.875f64, -2.6, -1.525];
    let z: f64 = logits.iter().map(|l| l.exp()).sum();
    for (got, l) in post.probs.data().iter().zip(logits) {
        assert!((got - l.exp() / z).abs() < 1e-10);
    }
    assert_eq!(post.sample.data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn teacher_scoring_examples() {
    let (d, k) = (3, 4);
    let cfg = small_config(d);
    let mut pred = vec![0.0; (d + k) * d];
    for i in 0..d {
        pred[i * d + i] = 1.0;
    }
    let p = head_params(d, k, vec![0.0; 2 * d * d], vec![0.0; d * k], pred);
    let h = enc(&[0.4, -0.1, 0.9]);
    let cands = [enc(&[1.0, 2.0, 3.0]), enc(&[-0.5, 0.0, 0.25])];
    for z in 0..k {
        let s = teacher_scores(&h, &Tensor::one_hot(k, z).unwrap(), &cands, &p, &cfg).unwrap();
        assert_eq!(s, student_scores(&h, &cands).unwrap());
    }

    let t = Teacher::new(
        Vocabulary::build(["a"], 1),
        small_config(8),
        LatentConfig::latent(5),
        vec![],
        3,
    )
    .unwrap();
    let mut params = t.params.clone();
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for v in params.get_mut(PRED).unwrap().data_mut() {
        *v = rng.random_range(-1.0..1.0);
    }
    let h = enc(&(0..8).map(|i| (i as f64).cos()).collect::<Vec<_>>());
    let cands: Vec<EncodedText> = (0..4)
        .map(|j| enc(&(0..8).map(|i| ((i * j) as f64).sin()).collect::<Vec<_>>()))
        .collect();
    let a = teacher_scores(&h, &Tensor::one_hot(5, 0).unwrap(), &cands, &params, &t.config).unwrap();
    let b = teacher_scores(&h, &Tensor::one_hot(5, 3).unwrap(), &cands, &params, &t.config).unwrap();
    let gap = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(gap > 1e-6);

    let single = teacher_scores(&h, &Tensor::one_hot(5, 1).unwrap(), &cands[..1], &params, &t.config).unwrap();
    assert_eq!(softmax(&single, 1.0).unwrap().data(), &[1.0]);
}

#[test]
fn nll_examples() {
    let mut g = Graph::new();
    let l = g.constant(Tensor::matrix(1, 2, vec![10.0, -10.0]).unwrap());
    let v = nll_of_index(&mut g, l, 0, 1.0).unwrap();
    assert!((g.scalar(v) - 2.061153622438558e-9).abs() < 1e-15);
    let l = g.constant(Tensor::matrix(1, 6, vec![0.7; 6]).unwrap());
    let v = nll_of_index(&mut g, l, 4, 1.0).unwrap();
    assert!((g.scalar(v) - 6f64.ln()).abs() < 1e-12);
}

#[test]
fn student_loss_mean_invariance() {
    let vocab = toy_vocab();
    let s = Student::new(vocab.clone(), small_config(8), 4).unwrap();
    let two = vec![toy_samples()[0].clone(), toy_samples()[1].clone()];
    let b = batch_of(&two, &vocab);
    let mut g = Graph::new();
    let base = student_loss(&mut g, &s.params, &s.config, &b).unwrap();
    let base = g.scalar(base);

    // Duplicating every sample (and so every candidate) leaves the mean unchanged.
    let mut doubled = b.clone();
    doubled.contexts.extend(b.contexts.clone());
    doubled.candidates.extend(b.candidates.clone());
    doubled.gold.extend(b.gold.clone());
    let mut g = Graph::new();
    let v = student_loss(&mut g, &s.params, &s.config, &doubled).unwrap();
    assert!((g.scalar(v) - base).abs() < 1e-12);
}

#[test]
fn student_loss_gradient() {
    let vocab = toy_vocab();
    let s = Student::new(vocab.clone(), small_config(8), 4).unwrap();
    let b = batch_of(&toy_samples()[..2], &vocab);
    let r = grad_check(|g, p| student_loss(g, p, &s.config, &b), &s.params, 1e-5).unwrap();
    assert!(r.max_relative_error < 1e-4, "{r:?}");
}

fn noise(rows: usize, k: usize, seed: u64) -> Tensor {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(rows, k, crate::numcore::gumbel_noise(rows * k, &mut rng)).unwrap()
}

fn objective(latent: LatentConfig, rec_weight: f64, hard: bool) -> TeacherObjective {
    TeacherObjective {
        latent,
        phase: Phase::Pretrain,
        rec_weight,
        gumbel: GumbelConfig { temperature: 1.0, hard },
    }
}

#[test]
fn teacher_loss_gradients_all_modes() {
    let vocab = toy_vocab();
    let samples = toy_samples();
    let lex = PosLexicon::bundled();
    for (latent, hard) in [
        (LatentConfig::latent(4), false),
        (LatentConfig::intent(), false),
        (LatentConfig::persona(3), false),
    ] {
        let t = Teacher::new(vocab.clone(), small_config(8), latent, vec![], 9).unwrap();
        let b = batch_of(&samples, &vocab);
        let labels = crate::alignment::assign_labels(&samples, &latent, &lex, Phase::Pretrain).unwrap();
        let obj = objective(latent, 0.7, hard);
        let n = noise(samples.len(), latent.k, 2);
        let r = grad_check(
            |g, p| Ok(teacher_loss(g, p, &t.config, &obj, &b, &labels, &n)?.total),
            &t.params,
            1e-5,
        )
        .unwrap();
        assert!(r.max_relative_error < 1e-4, "{:?} hard={hard}: {r:?}", latent.mode);
    }
}

#[test]
fn teacher_loss_reductions() {
    let vocab = toy_vocab();
    let samples = toy_samples();
    let latent = LatentConfig::latent(3);
    let mut t = Teacher::new(vocab.clone(), small_config(8), latent, vec![], 9).unwrap();
    let b = batch_of(&samples, &vocab);
    let labels = vec![None; samples.len()];
    let n = noise(samples.len(), 3, 5);

    let mut g = Graph::new();
    let parts = teacher_loss(
        &mut g,
        &t.params,
        &t.config,
        &objective(latent, 0.0, true),
        &b,
        &labels,
        &n,
    )
    .unwrap();
    assert_eq!(g.scalar(parts.total), g.scalar(parts.prediction));

    // Zero outer weights give uniform posteriors, so BPR contributes nothing.
    t.params.get_mut(REC_OUTER).unwrap().data_mut().fill(0.0);
    let mut g = Graph::new();
    let parts = teacher_loss(
        &mut g,
        &t.params,
        &t.config,
        &objective(latent, 1.0, true),
        &b,
        &labels,
        &n,
    )
    .unwrap();
    assert!(g.scalar(parts.alignment.unwrap()).abs() < 1e-15);

    let persona = LatentConfig::persona(3);
    let pt = Teacher::new(vocab.clone(), small_config(8), persona, vec![], 9).unwrap();
    let obj = TeacherObjective {
        phase: Phase::Finetune,
        ..objective(persona, 1.0, true)
    };
    let mut g = Graph::new();
    let parts = teacher_loss(&mut g, &pt.params, &pt.config, &obj, &b, &[Some(0); 4], &n).unwrap();
    assert!(parts.alignment.is_none());
    assert_eq!(g.scalar(parts.total), g.scalar(parts.prediction));
}

/// Straight-line evaluation of the teacher objective from encoder outputs.
fn teacher_loss_oracle(t: &Teacher, samples: &[Sample], noise: &Tensor, rec_weight: f64) -> f64 {
    let (d, k) = (t.config.dim(), t.k());
    let w = |n: &str| t.params.get(n).unwrap().data().to_vec();
    let (inner, outer, pred) = (w(REC_INNER), w(REC_OUTER), w(PRED));
    let golds: Vec<&str> = samples.iter().map(|s| s.gold_action.as_str()).collect();
    let mut pool: Vec<&str> = Vec::new();
    for g in &golds {
        if !pool.contains(g) {
            pool.push(g);
        }
    }
    let hx: Vec<Vec<f64>> = pool
        .iter()
        .map(|a| t.encode(a, Role::Action).unwrap().vector.into_data())
        .collect();
    let mut mean_q = vec![0.0; k];
    let mut pred_loss = 0.0;
    for (i, s) in samples.iter().enumerate() {
        let hc = t.encode(&s.context, Role::Context).unwrap().vector.into_data();
        let gold = pool.iter().position(|a| *a == s.gold_action).unwrap();
        let joint: Vec<f64> = hx[gold].iter().chain(&hc).copied().collect();
        let hidden: Vec<f64> = (0..d)
            .map(|c| (0..2 * d).map(|r| joint[r] * inner[r * d + c]).sum())
            .collect();
        let logits: Vec<f64> = (0..k)
            .map(|c| (0..d).map(|r| hidden[r] * outer[r * k + c]).sum())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let q: Vec<f64> = e.iter().map(|v| v / e.iter().sum::<f64>()).collect();
        for (a, b) in mean_q.iter_mut().zip(&q) {
            *a += b / samples.len() as f64;
        }
        let perturbed: Vec<f64> = (0..k).map(|j| q[j].ln() + noise.row(i)[j]).collect();
        let best = crate::numcore::argmax(&perturbed);
        let z: Vec<f64> = (0..k).map(|j| if j == best { 1.0 } else { 0.0 }).collect();
        let cz: Vec<f64> = hc.iter().chain(&z).copied().collect();
        let hcz: Vec<f64> = (0..d)
            .map(|c| (0..d + k).map(|r| cz[r] * pred[r * d + c]).sum())
            .collect();
        let scores: Vec<f64> = hx
            .iter()
            .map(|x| x.iter().zip(&hcz).map(|(a, b)| a * b).sum())
            .collect();
        let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln();
        pred_loss += (lse - scores[gold]) / samples.len() as f64;
    }
    let bpr: f64 = mean_q.iter().map(|&q| q * (q * k as f64).ln()).sum();
    pred_loss + rec_weight * bpr
}

#[test]
fn teacher_loss_matches_straight_line_oracle() {
    let vocab = toy_vocab();
    let samples = &toy_samples()[..2];
    let latent = LatentConfig::latent(3);
    let t = Teacher::new(vocab.clone(), small_config(4), latent, vec![], 21).unwrap();
    let b = batch_of(samples, &vocab);
    let n = noise(2, 3, 17);
    let mut g = Graph::new();
    let parts = teacher_loss(
        &mut g,
        &t.params,
        &t.config,
        &objective(latent, 0.6, true),
        &b,
        &[None, None],
        &n,
    )
    .unwrap();
    let want = teacher_loss_oracle(&t, samples, &n, 0.6);
    assert!(
        (g.scalar(parts.total) - want).abs() < 1e-10,
        "{} vs {want}",
        g.scalar(parts.total)
    );
}

#[test]
fn untrained_teacher_scores_like_student() {
    let vocab = toy_vocab();
    let mut cfg = small_config(8);
    cfg.encoder.init_std = 0.02;
    let t = Teacher::new(vocab, cfg, LatentConfig::latent(4), vec![], 2).unwrap();
    let pred = t.params.get(PRED).unwrap();
    for r in 0..12 {
        for c in 0..8 {
            let id = if r == c { 1.0 } else { 0.0 };
            assert!((pred.row(r)[c] - id).abs() < 0.1);
        }
    }
}

#[test]
fn checkpoints_round_trip() {
    let vocab = toy_vocab();
    let dir = tempfile::tempdir().unwrap();
    let s = Student::new(vocab.clone(), small_config(8), 1).unwrap();
    s.save(&dir.path().join("s.lkdp")).unwrap();
    assert_eq!(Student::load(&dir.path().join("s.lkdp")).unwrap(), s);

    let cfg = ModelConfig {
        share_encoder: false,
        bias: true,
        ..small_config(8)
    };
    let t = Teacher::new(vocab, cfg, LatentConfig::persona(2), vec!["a".into(), "b".into()], 1).unwrap();
    assert!(t.params.contains("ctx_enc.tok") && t.params.contains("act_enc.tok"));
    t.save(&dir.path().join("t.lkdp")).unwrap();
    let back = Teacher::load(&dir.path().join("t.lkdp")).unwrap();
    assert_eq!(back, t);
    assert_eq!(t.to_checkpoint().unwrap().meta("latent_mode"), Some("persona"));
    assert!(Student::load(&dir.path().join("t.lkdp")).is_err());
}

#[test]
fn encoder_rejects_out_of_vocabulary_ids() {
    let s = Student::new(toy_vocab(), small_config(8), 1).unwrap();
    let mut g = Graph::new();
    let bad = [CLS_ID, 10_000];
    assert!(encode(&mut g, &s.params, SHARED_ENCODER, &s.config.encoder, &bad).is_err());
}
