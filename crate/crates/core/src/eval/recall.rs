use std::collections::{BTreeMap, HashSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Difficulty, Sample};
use crate::encoder::Role;
use crate::error::{Error, Result};
use crate::models::{EncodingCache, Student, Teacher};
use crate::numcore::{argmax, Tensor};

/// Anything that ranks candidate actions for a sample.
///
/// `sample.gold_action` is always among `candidates`. Scorers other than
/// the posterior teacher and the oracle must not look at it.
pub trait ActionScorer {
    fn score(&mut self, sample: &Sample, candidates: &[String]) -> Result<Vec<f64>>;
}

/// Dot-product scores of a student model.
pub struct StudentScorer<'m> {
    cache: EncodingCache<'m>,
}

impl<'m> StudentScorer<'m> {
    pub fn new(student: &'m Student) -> Self {
        Self {
            cache: EncodingCache::student(student),
        }
    }
}

impl ActionScorer for StudentScorer<'_> {
    fn score(&mut self, sample: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        let ctx = self.cache.encode(&sample.context, Role::Context)?;
        let acts = self.cache.encode_all(candidates, Role::Action)?;
        Ok(crate::models::student_scores(&ctx, &acts)?.into_data())
    }
}

/// Teacher scores with `z` set to the argmax of the posterior of the
/// context and its gold action.
pub struct PosteriorTeacherScorer<'m> {
    teacher: &'m Teacher,
    cache: EncodingCache<'m>,
}

impl<'m> PosteriorTeacherScorer<'m> {
    pub fn new(teacher: &'m Teacher) -> Self {
        Self {
            teacher,
            cache: EncodingCache::teacher(teacher),
        }
    }
}

impl ActionScorer for PosteriorTeacherScorer<'_> {
    fn score(&mut self, sample: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        let ctx = self.cache.encode(&sample.context, Role::Context)?;
        let gold = self.cache.encode(&sample.gold_action, Role::Action)?;
        let acts = self.cache.encode_all(candidates, Role::Action)?;
        let post = self.teacher.posterior(&ctx, &gold)?;
        let z = Tensor::one_hot(post.k(), post.argmax())?;
        Ok(self.teacher.scores(&ctx, &z, &acts)?.into_data())
    }
}

/// 1 for the gold action, 0 elsewhere.
pub struct OracleScorer;

impl ActionScorer for OracleScorer {
    fn score(&mut self, sample: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        Ok(candidates
            .iter()
            .map(|c| if *c == sample.gold_action { 1.0 } else { 0.0 })
            .collect())
    }
}

/// The same score for every candidate.
pub struct ConstantScorer;

impl ActionScorer for ConstantScorer {
    fn score(&mut self, _: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        Ok(vec![0.0; candidates.len()])
    }
}

/// Independent uniform scores.
pub struct RandomScorer {
    rng: ChaCha8Rng,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ActionScorer for RandomScorer {
    fn score(&mut self, _: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        Ok(candidates.iter().map(|_| self.rng.random::<f64>()).collect())
    }
}

impl<F> ActionScorer for F
where
    F: FnMut(&Sample, &[String]) -> Result<Vec<f64>>,
{
    fn score(&mut self, sample: &Sample, candidates: &[String]) -> Result<Vec<f64>> {
        self(sample, candidates)
    }
}

/// One row of the per-game evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameRecall {
    pub game_id: String,
    pub difficulty: Option<Difficulty>,
    pub n_samples: usize,
    pub mean_valid_actions: f64,
    pub recall_at_1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Sorted by game id.
    pub games: Vec<GameRecall>,
    pub overall: f64,
    pub correct: Vec<bool>,
    pub mean_candidates: f64,
}

impl EvalResult {
    pub fn per_game(&self) -> BTreeMap<&str, f64> {
        self.games.iter().map(|g| (g.game_id.as_str(), g.recall_at_1)).collect()
    }

    fn from_outcomes(samples: &[Sample], correct: Vec<bool>, counts: &[usize]) -> Self {
        #[derive(Default)]
        struct Acc {
            difficulty: Option<Difficulty>,
            n: usize,
            hits: usize,
            cands: usize,
        }
        let mut by_game: BTreeMap<&str, Acc> = BTreeMap::new();
        for ((s, &ok), &m) in samples.iter().zip(&correct).zip(counts) {
            let a = by_game.entry(s.game_id.as_str()).or_default();
            a.difficulty = a.difficulty.or(s.difficulty);
            a.n += 1;
            a.hits += ok as usize;
            a.cands += m;
        }
        let games = by_game
            .into_iter()
            .map(|(id, a)| GameRecall {
                game_id: id.to_string(),
                difficulty: a.difficulty,
                n_samples: a.n,
                mean_valid_actions: a.cands as f64 / a.n as f64,
                recall_at_1: a.hits as f64 / a.n as f64,
            })
            .collect();
        let n = correct.len();
        Self {
            games,
            overall: correct.iter().filter(|&&c| c).count() as f64 / n as f64,
            mean_candidates: counts.iter().sum::<usize>() as f64 / n as f64,
            correct,
        }
    }
}

/// Index of the best score; the lowest index wins ties.
pub fn select(scores: &[f64]) -> Result<usize> {
    if scores.is_empty() {
        return Err(Error::Evaluation("no candidate scores".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Evaluation("NaN candidate score".into()));
    }
    Ok(argmax(scores))
}

fn judge(scorer: &mut dyn ActionScorer, sample: &Sample, candidates: &[String], gold: usize) -> Result<bool> {
    let scores = scorer.score(sample, candidates)?;
    if scores.len() != candidates.len() {
        return Err(Error::Evaluation(format!(
            "{} scores for {} candidates",
            scores.len(),
            candidates.len()
        )));
    }
    Ok(select(&scores)? == gold)
}

/// Recall@1 over each sample's valid actions.
pub fn eval_recall_at_1(scorer: &mut dyn ActionScorer, samples: &[Sample]) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::Argument("no evaluation samples".into()));
    }
    let cands = crate::data::sample_negatives(samples, crate::data::NegativePolicy::ValidActions)?;
    let mut correct = Vec::with_capacity(samples.len());
    for (s, c) in samples.iter().zip(&cands) {
        correct.push(judge(scorer, s, &c.actions, c.gold)?);
    }
    let counts: Vec<usize> = cands.iter().map(|c| c.actions.len()).collect();
    Ok(EvalResult::from_outcomes(samples, correct, &counts))
}

pub const VALIDATION_DISTRACTORS: usize = 9;

/// Candidate lists of the gold plus 9 distinct distractors drawn from the
/// other golds of `samples`; the gold sits at a random position.
pub fn validation_candidates(samples: &[Sample], seed: u64) -> Result<Vec<(Vec<String>, usize)>> {
    let mut seen = HashSet::new();
    let pool: Vec<&str> = samples
        .iter()
        .map(|s| s.gold_action.as_str())
        .filter(|a| seen.insert(*a))
        .collect();
    if pool.len() < VALIDATION_DISTRACTORS + 1 {
        return Err(Error::Argument(format!(
            "need at least {} distinct actions, found {}",
            VALIDATION_DISTRACTORS + 1,
            pool.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let others: Vec<&str> = pool.iter().copied().filter(|a| *a != s.gold_action).collect();
        let mut cands: Vec<String> = others
            .choose_multiple(&mut rng, VALIDATION_DISTRACTORS)
            .map(|a| a.to_string())
            .collect();
        cands.shuffle(&mut rng);
        let gold = rng.random_range(0..=cands.len());
        cands.insert(gold, s.gold_action.clone());
        out.push((cands, gold));
    }
    Ok(out)
}

/// Recall@1 of the gold against 9 random distractors.
pub fn eval_validation_9neg(scorer: &mut dyn ActionScorer, samples: &[Sample], seed: u64) -> Result<f64> {
    let cands = validation_candidates(samples, seed)?;
    let mut hits = 0usize;
    for (s, (c, gold)) in samples.iter().zip(&cands) {
        hits += judge(scorer, s, c, *gold)? as usize;
    }
    Ok(hits as f64 / samples.len() as f64)
}
