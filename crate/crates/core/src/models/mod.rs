//! Bi-encoder student and discrete-latent teacher.
//!
//! Student: `logit_i = h_c · h_{x_i}`.
//!
//! Teacher: the recognition head maps `[h_x; h_c]` through an inner
//! `2d → d` layer and an outer `d → K` layer to a posterior over `z`; the
//! prediction head maps `[h_c; z]` (`d + K → d`) to `h_{c,z}`, which scores
//! candidates by dot product like the student.

mod batch;
mod cache;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use batch::ScoringBatch;
pub use cache::EncodingCache;

use crate::alignment::{bpr_loss_graph, label_ce_loss_graph, LatentConfig, LatentMode, Phase};
use crate::encoder::{encode, encode_text, init_encoder, tokenize, EncodedText, EncoderConfig, Role, Vocabulary};
use crate::error::{Error, Result};
use crate::numcore::{
    affine, gumbel_softmax, mean_of, nll_of_index, softmax, Graph, ParamBuilder, ParamSet, Tensor, Var,
};

pub const SHARED_ENCODER: &str = "enc";
pub const CONTEXT_ENCODER: &str = "ctx_enc";
pub const ACTION_ENCODER: &str = "act_enc";
pub const REC_INNER: &str = "rec.inner";
pub const REC_OUTER: &str = "rec.outer";
pub const PRED: &str = "pred";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Student,
    Teacher,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Student => "student",
            ModelKind::Teacher => "teacher",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// One encoder for contexts and actions.
    pub share_encoder: bool,
    /// `tanh` between the two recognition layers.
    pub rec_activation: bool,
    /// Bias terms on the teacher heads.
    pub bias: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderConfig::default(),
            share_encoder: true,
            rec_activation: false,
            bias: false,
        }
    }
}

impl ModelConfig {
    pub fn dim(&self) -> usize {
        self.encoder.dim
    }

    pub fn prefix(&self, role: Role) -> &'static str {
        match (self.share_encoder, role) {
            (true, _) => SHARED_ENCODER,
            (false, Role::Context) => CONTEXT_ENCODER,
            (false, Role::Action) => ACTION_ENCODER,
        }
    }

    fn init_encoders(&self, b: &mut ParamBuilder, vocab_size: usize) -> Result<()> {
        if self.share_encoder {
            init_encoder(b, SHARED_ENCODER, vocab_size, &self.encoder)
        } else {
            init_encoder(b, CONTEXT_ENCODER, vocab_size, &self.encoder)?;
            init_encoder(b, ACTION_ENCODER, vocab_size, &self.encoder)
        }
    }
}

/// Gumbel-Softmax settings for the teacher's latent sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GumbelConfig {
    pub temperature: f64,
    pub hard: bool,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            hard: true,
        }
    }
}

/// `p(z | c, x)` and a draw from it.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorDistribution {
    pub probs: Tensor,
    pub sample: Tensor,
}

impl PosteriorDistribution {
    pub fn k(&self) -> usize {
        self.probs.len()
    }

    pub fn argmax(&self) -> usize {
        self.probs.argmax()
    }
}

fn check_candidates(context: &EncodedText, candidates: &[EncodedText]) -> Result<()> {
    if candidates.is_empty() {
        return Err(Error::Argument("no candidates to score".into()));
    }
    let d = context.vector.len();
    for c in candidates {
        if c.vector.len() != d {
            return Err(Error::dim(&[d], c.vector.shape(), "candidate width"));
        }
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `h_c · h_{x_i}` for every candidate.
pub fn student_scores(context: &EncodedText, candidates: &[EncodedText]) -> Result<Tensor> {
    check_candidates(context, candidates)?;
    Ok(Tensor::vector(
        candidates
            .iter()
            .map(|c| dot(context.vector.data(), c.vector.data()))
            .collect(),
    ))
}

fn row(v: &Tensor) -> Result<Tensor> {
    v.clone().reshape(vec![1, v.len()])
}

fn maybe_bias(params: &ParamSet, cfg: &ModelConfig, x: Tensor, name: &str) -> Result<Tensor> {
    if !cfg.bias {
        return Ok(x);
    }
    let b = params
        .get(&format!("{name}_b"))
        .ok_or_else(|| Error::Contract(format!("missing bias `{name}_b`")))?;
    let data = x.data().iter().zip(b.data()).map(|(a, c)| a + c).collect();
    Tensor::matrix(1, x.len(), data)
}

fn weight<'a>(params: &'a ParamSet, name: &str) -> Result<&'a Tensor> {
    params
        .get(name)
        .ok_or_else(|| Error::Contract(format!("unknown parameter `{name}`")))
}

/// Recognition posterior; `sample` is the one-hot of the posterior mode.
pub fn recognition_posterior(
    context: &EncodedText,
    action: &EncodedText,
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<PosteriorDistribution> {
    let mut joint = action.vector.data().to_vec();
    joint.extend_from_slice(context.vector.data());
    let hidden = affine(&Tensor::matrix(1, joint.len(), joint)?, weight(params, REC_INNER)?)?;
    let mut hidden = maybe_bias(params, cfg, hidden, REC_INNER)?;
    if cfg.rec_activation {
        hidden = hidden.map(f64::tanh);
    }
    let logits = affine(&hidden, weight(params, REC_OUTER)?)?;
    let logits = maybe_bias(params, cfg, logits, REC_OUTER)?;
    let probs = softmax(&logits, 1.0)?;
    let k = probs.len();
    let sample = Tensor::one_hot(k, probs.argmax())?;
    Ok(PosteriorDistribution {
        probs: probs.reshape(vec![k])?,
        sample,
    })
}

/// `h_{c,z} = [h_c; z] · pred`.
pub fn latent_context(context: &EncodedText, z: &Tensor, params: &ParamSet, cfg: &ModelConfig) -> Result<EncodedText> {
    let pred = weight(params, PRED)?;
    let d = context.vector.len();
    if pred.rows() != d + z.len() {
        return Err(Error::dim(pred.shape(), &[d + z.len(), d], "prediction head input"));
    }
    let mut joint = context.vector.data().to_vec();
    joint.extend_from_slice(z.data());
    let h = affine(&row(&Tensor::vector(joint))?, pred)?;
    let h = maybe_bias(params, cfg, h, PRED)?;
    Ok(EncodedText {
        vector: h.reshape(vec![d])?,
        source_role: Role::Context,
    })
}

/// `h_{c,z} · h_{x_i}` for every candidate.
pub fn teacher_scores(
    context: &EncodedText,
    z: &Tensor,
    candidates: &[EncodedText],
    params: &ParamSet,
    cfg: &ModelConfig,
) -> Result<Tensor> {
    check_candidates(context, candidates)?;
    let hcz = latent_context(context, z, params, cfg)?;
    student_scores(&hcz, candidates)
}

fn encode_batch(g: &mut Graph, params: &ParamSet, cfg: &ModelConfig, batch: &ScoringBatch) -> Result<(Var, Var)> {
    let ctx: Vec<Var> = batch
        .contexts
        .iter()
        .map(|ids| encode(g, params, cfg.prefix(Role::Context), &cfg.encoder, ids))
        .collect::<Result<_>>()?;
    let pool: Vec<Var> = batch
        .pool
        .iter()
        .map(|ids| encode(g, params, cfg.prefix(Role::Action), &cfg.encoder, ids))
        .collect::<Result<_>>()?;
    Ok((g.stack_rows(&ctx)?, g.stack_rows(&pool)?))
}

/// Row-wise logits of `queries[i]` against its candidates, one `1×m_i` node each.
fn candidate_logits(g: &mut Graph, queries: Var, pool: Var, batch: &ScoringBatch) -> Result<Vec<Var>> {
    let mut out = Vec::with_capacity(batch.len());
    for (i, cands) in batch.candidates.iter().enumerate() {
        let q = g.rows(queries, i, 1)?;
        let x = g.gather(pool, cands)?;
        out.push(g.matmul_nt(q, x)?);
    }
    Ok(out)
}

fn mean_nll(g: &mut Graph, logits: &[Var], batch: &ScoringBatch) -> Result<Var> {
    let terms: Vec<Var> = logits
        .iter()
        .zip(&batch.gold)
        .map(|(&l, &gold)| nll_of_index(g, l, gold, 1.0))
        .collect::<Result<_>>()?;
    mean_of(g, &terms)
}

/// Student logits for every sample of the batch.
pub fn student_logits_graph(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    batch: &ScoringBatch,
) -> Result<Vec<Var>> {
    let (ctx, pool) = encode_batch(g, params, cfg, batch)?;
    candidate_logits(g, ctx, pool, batch)
}

/// Mean cross-entropy of the gold candidate under the student.
pub fn student_loss(g: &mut Graph, params: &ParamSet, cfg: &ModelConfig, batch: &ScoringBatch) -> Result<Var> {
    let logits = student_logits_graph(g, params, cfg, batch)?;
    mean_nll(g, &logits, batch)
}

/// What the teacher objective needs besides the batch.
#[derive(Clone, Debug)]
pub struct TeacherObjective {
    pub latent: LatentConfig,
    pub phase: Phase,
    pub rec_weight: f64,
    pub gumbel: GumbelConfig,
}

/// Nodes of one teacher loss evaluation.
#[derive(Clone, Copy, Debug)]
pub struct TeacherLoss {
    pub total: Var,
    pub prediction: Var,
    pub alignment: Option<Var>,
    /// `B×K` recognition posteriors.
    pub posteriors: Var,
}

fn head(g: &mut Graph, params: &ParamSet, cfg: &ModelConfig, x: Var, name: &str) -> Result<Var> {
    let w = g.param(params, name)?;
    let y = g.matmul(x, w)?;
    if cfg.bias {
        let b = g.param(params, &format!("{name}_b"))?;
        g.add_row(y, b)
    } else {
        Ok(y)
    }
}

/// `L_pred + rec_weight · L_rec` with `z′` drawn from each gold pair's posterior
/// using the frozen Gumbel `noise` (`B×K`).
pub fn teacher_loss(
    g: &mut Graph,
    params: &ParamSet,
    cfg: &ModelConfig,
    objective: &TeacherObjective,
    batch: &ScoringBatch,
    labels: &[Option<usize>],
    noise: &Tensor,
) -> Result<TeacherLoss> {
    let k = objective.latent.k;
    if noise.shape() != [batch.len(), k] {
        return Err(Error::dim(noise.shape(), &[batch.len(), k], "gumbel noise"));
    }
    let (ctx, pool) = encode_batch(g, params, cfg, batch)?;
    let gold_rows: Vec<usize> = (0..batch.len()).map(|i| batch.gold_pool_index(i)).collect();
    let gold = g.gather(pool, &gold_rows)?;

    let joint = g.concat_cols(gold, ctx)?;
    let mut hidden = head(g, params, cfg, joint, REC_INNER)?;
    if cfg.rec_activation {
        hidden = g.tanh(hidden);
    }
    let logits = head(g, params, cfg, hidden, REC_OUTER)?;
    let posteriors = g.softmax(logits, 1.0)?;
    let z = gumbel_softmax(
        g,
        posteriors,
        noise,
        objective.gumbel.temperature,
        objective.gumbel.hard,
    )?;

    let ctx_z = g.concat_cols(ctx, z)?;
    let hcz = head(g, params, cfg, ctx_z, PRED)?;
    let scores = candidate_logits(g, hcz, pool, batch)?;
    let prediction = mean_nll(g, &scores, batch)?;

    let alignment = if !objective.latent.rec_active(objective.phase) {
        None
    } else {
        match objective.latent.mode {
            LatentMode::Latent => Some(bpr_loss_graph(g, posteriors)?),
            LatentMode::Persona | LatentMode::Intent => label_ce_loss_graph(g, posteriors, labels)?,
        }
    };
    let total = match alignment {
        Some(a) if objective.rec_weight != 0.0 => {
            let weighted = g.scale(a, objective.rec_weight);
            g.add(prediction, weighted)?
        }
        _ => prediction,
    };
    Ok(TeacherLoss {
        total,
        prediction,
        alignment,
        posteriors,
    })
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Format(e.to_string()))
}

fn vocab_meta(p: &mut ParamSet, kind: ModelKind, vocab: &Vocabulary, cfg: &ModelConfig) -> Result<()> {
    p.set_meta("kind", kind.as_str());
    p.set_meta("vocab", vocab.to_text());
    p.set_meta("model_config", to_json(cfg)?);
    Ok(())
}

fn read_meta<T: for<'de> Deserialize<'de>>(p: &ParamSet, key: &str) -> Result<T> {
    let raw = p
        .meta(key)
        .ok_or_else(|| Error::Format(format!("checkpoint has no `{key}` entry")))?;
    serde_json::from_str(raw).map_err(|e| Error::Format(format!("`{key}`: {e}")))
}

fn check_kind(p: &ParamSet, kind: ModelKind) -> Result<()> {
    match p.meta("kind") {
        Some(k) if k == kind.as_str() => Ok(()),
        other => Err(Error::Format(format!(
            "expected a {} checkpoint, found {other:?}",
            kind.as_str()
        ))),
    }
}

/// Encode with `model`'s vocabulary, parameters and config.
fn encode_with(
    params: &ParamSet,
    vocab: &Vocabulary,
    cfg: &ModelConfig,
    text: &str,
    role: Role,
) -> Result<EncodedText> {
    let ids = tokenize(text, role, vocab);
    encode_text(params, cfg.prefix(role), &cfg.encoder, &ids, role)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Student {
    pub params: ParamSet,
    pub vocab: Vocabulary,
    pub config: ModelConfig,
}

impl Student {
    pub fn new(vocab: Vocabulary, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut b = ParamBuilder::new(seed);
        config.init_encoders(&mut b, vocab.len())?;
        Ok(Self {
            params: b.build(),
            vocab,
            config,
        })
    }

    pub fn encode(&self, text: &str, role: Role) -> Result<EncodedText> {
        encode_with(&self.params, &self.vocab, &self.config, text, role)
    }

    pub fn score(&self, context: &str, candidates: &[String]) -> Result<Vec<f64>> {
        let c = self.encode(context, Role::Context)?;
        let xs = candidates
            .iter()
            .map(|a| self.encode(a, Role::Action))
            .collect::<Result<Vec<_>>>()?;
        Ok(student_scores(&c, &xs)?.into_data())
    }

    pub fn to_checkpoint(&self) -> Result<ParamSet> {
        let mut p = self.params.clone();
        vocab_meta(&mut p, ModelKind::Student, &self.vocab, &self.config)?;
        Ok(p)
    }

    pub fn from_checkpoint(mut p: ParamSet) -> Result<Self> {
        check_kind(&p, ModelKind::Student)?;
        let vocab = Vocabulary::from_text(p.meta("vocab").unwrap_or_default())?;
        let config = read_meta(&p, "model_config")?;
        strip_meta(&mut p);
        Ok(Self {
            params: p,
            vocab,
            config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(ParamSet::load(path)?)
    }
}

fn strip_meta(p: &mut ParamSet) {
    let mut clean = ParamSet::new(p.rng_seed());
    for (n, t) in p.iter() {
        clean.insert(n.clone(), t.clone()).expect("names are unique");
    }
    *p = clean;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    pub params: ParamSet,
    pub vocab: Vocabulary,
    pub config: ModelConfig,
    pub latent: LatentConfig,
    /// Speaker ids by latent class (persona mode only).
    pub speakers: Vec<String>,
}

impl Teacher {
    /// Encoders as for the student; recognition layers drawn with standard
    /// deviation `1/√fan_in`; the prediction head starts as the identity on
    /// the context block plus encoder-scale noise, so an untrained teacher
    /// scores like an untrained student.
    pub fn new(
        vocab: Vocabulary,
        config: ModelConfig,
        latent: LatentConfig,
        speakers: Vec<String>,
        seed: u64,
    ) -> Result<Self> {
        latent.validate()?;
        if latent.mode == LatentMode::Persona && speakers.len() > latent.k {
            return Err(Error::Config(format!(
                "{} speakers for K = {}",
                speakers.len(),
                latent.k
            )));
        }
        let (d, k) = (config.dim(), latent.k);
        let mut b = ParamBuilder::new(seed);
        config.init_encoders(&mut b, vocab.len())?;
        b.normal(REC_INNER, &[2 * d, d], 1.0 / ((2 * d) as f64).sqrt())?;
        b.normal(REC_OUTER, &[d, k], 1.0 / (d as f64).sqrt())?;
        b.normal(PRED, &[d + k, d], config.encoder.init_std)?;
        if config.bias {
            b.zeros(&format!("{REC_INNER}_b"), &[1, d])?;
            b.zeros(&format!("{REC_OUTER}_b"), &[1, k])?;
            b.zeros(&format!("{PRED}_b"), &[1, d])?;
        }
        let mut params = b.build();
        let pred = params.get_mut(PRED).expect("just built");
        for i in 0..d {
            pred.row_mut(i)[i] += 1.0;
        }
        Ok(Self {
            params,
            vocab,
            config,
            latent,
            speakers,
        })
    }

    pub fn k(&self) -> usize {
        self.latent.k
    }

    pub fn encode(&self, text: &str, role: Role) -> Result<EncodedText> {
        encode_with(&self.params, &self.vocab, &self.config, text, role)
    }

    pub fn posterior(&self, context: &EncodedText, action: &EncodedText) -> Result<PosteriorDistribution> {
        recognition_posterior(context, action, &self.params, &self.config)
    }

    pub fn scores(&self, context: &EncodedText, z: &Tensor, candidates: &[EncodedText]) -> Result<Tensor> {
        teacher_scores(context, z, candidates, &self.params, &self.config)
    }

    pub fn to_checkpoint(&self) -> Result<ParamSet> {
        let mut p = self.params.clone();
        vocab_meta(&mut p, ModelKind::Teacher, &self.vocab, &self.config)?;
        p.set_meta("latent", to_json(&self.latent)?);
        p.set_meta("latent_mode", self.latent.mode.as_str());
        p.set_meta("speakers", to_json(&self.speakers)?);
        Ok(p)
    }

    pub fn from_checkpoint(mut p: ParamSet) -> Result<Self> {
        check_kind(&p, ModelKind::Teacher)?;
        let vocab = Vocabulary::from_text(p.meta("vocab").unwrap_or_default())?;
        let config = read_meta(&p, "model_config")?;
        let latent: LatentConfig = read_meta(&p, "latent")?;
        let speakers = read_meta(&p, "speakers")?;
        latent.validate()?;
        strip_meta(&mut p);
        Ok(Self {
            params: p,
            vocab,
            config,
            latent,
            speakers,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(ParamSet::load(path)?)
    }
}

/// Read the model kind tag of a checkpoint.
pub fn checkpoint_kind(p: &ParamSet) -> Result<ModelKind> {
    match p.meta("kind") {
        Some("student") => Ok(ModelKind::Student),
        Some("teacher") => Ok(ModelKind::Teacher),
        other => Err(Error::Format(format!("unknown model kind {other:?}"))),
    }
}

#[cfg(test)]
mod tests;
