//! Knowledge tracing with a biased matrix-factorization model.
//!
//! The model predicts `p = clamp(mu + b_user + b_question + u . v, 0, 1)` for
//! each (user, question) pair and is fitted by SGD on the latest-attempt
//! matrix. Predictions are projected through the tag-weight matrix to get a
//! per-topic knowledge state.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{tag_weights, KnowledgeUnit, KuId, Question, Timestamp};
use crate::event_log::LatestAttemptMatrix;

/// Neutral state for topics no question is tagged with.
pub const NEUTRAL_STATE: f64 = 0.5;

const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KnowledgeError {
    #[error("cannot fit a model to an empty matrix")]
    EmptyMatrix,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(&'static str),
    #[error("index ({user}, {question}) out of range")]
    IndexOutOfRange { user: usize, question: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("state {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("cohort is empty")]
    EmptyCohort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Latent dimension.
    pub k: usize,
    pub learning_rate: f64,
    pub reg: f64,
    pub epochs: usize,
    pub rng_seed: u64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self { k: 4, learning_rate: 0.01, reg: 0.05, epochs: 200, rng_seed: 0 }
    }
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(KnowledgeError::InvalidHyperparameters("learning_rate must be > 0"));
        }
        if !(self.reg.is_finite() && self.reg >= 0.0) {
            return Err(KnowledgeError::InvalidHyperparameters("reg must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(KnowledgeError::InvalidHyperparameters("epochs must be >= 1"));
        }
        Ok(())
    }
}

/// Observed targets in `[0, 1]` on a users x questions grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub n_users: usize,
    pub n_questions: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl From<&LatestAttemptMatrix> for Observations {
    fn from(m: &LatestAttemptMatrix) -> Self {
        Self {
            n_users: m.users.len(),
            n_questions: m.questions.len(),
            entries: m.entries.iter().map(|(&(u, q), a)| (u, q, if a.correct { 1.0 } else { 0.0 })).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub question_bias: Vec<f64>,
    /// Row-major `n_users x k`.
    pub user_factors: Vec<f64>,
    /// Row-major `n_questions x k`.
    pub question_factors: Vec<f64>,
    pub hyper: Hyperparameters,
    /// Accepted training loss after each epoch; non-increasing.
    pub training_loss: Vec<f64>,
}

/// Gradient of the training loss, laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub user_bias: Vec<f64>,
    pub question_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub question_factors: Vec<f64>,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        self.user_bias
            .iter()
            .chain(&self.question_bias)
            .chain(&self.user_factors)
            .chain(&self.question_factors)
            .copied()
            .collect()
    }
}

impl FactorModel {
    /// A model with every bias and factor at zero.
    pub fn zeros(n_users: usize, n_questions: usize, global_mean: f64, hyper: Hyperparameters) -> Self {
        Self {
            global_mean,
            user_bias: vec![0.0; n_users],
            question_bias: vec![0.0; n_questions],
            user_factors: vec![0.0; n_users * hyper.k],
            question_factors: vec![0.0; n_questions * hyper.k],
            hyper,
            training_loss: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_questions(&self) -> usize {
        self.question_bias.len()
    }

    pub fn k(&self) -> usize {
        self.hyper.k
    }

    fn user_row(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k()..(u + 1) * self.k()]
    }

    fn question_row(&self, q: usize) -> &[f64] {
        &self.question_factors[q * self.k()..(q + 1) * self.k()]
    }

    /// Unclamped score `mu + b_u + b_q + u . v`.
    pub fn raw_score(&self, u: usize, q: usize) -> f64 {
        let dot: f64 = self.user_row(u).iter().zip(self.question_row(q)).map(|(a, b)| a * b).sum();
        self.global_mean + self.user_bias[u] + self.question_bias[q] + dot
    }

    /// Predicted probability of a correct answer.
    pub fn predict(&self, u: usize, q: usize) -> Result<f64, KnowledgeError> {
        if u >= self.n_users() || q >= self.n_questions() {
            return Err(KnowledgeError::IndexOutOfRange { user: u, question: q });
        }
        Ok(self.raw_score(u, q).clamp(0.0, 1.0))
    }

    fn check_shape(&self, obs: &Observations) -> Result<(), KnowledgeError> {
        if obs.n_users != self.n_users() || obs.n_questions != self.n_questions() {
            return Err(KnowledgeError::DimensionMismatch(format!(
                "model is {}x{}, observations are {}x{}",
                self.n_users(),
                self.n_questions(),
                obs.n_users,
                obs.n_questions
            )));
        }
        if let Some(&(u, q, _)) = obs.entries.iter().find(|(u, q, _)| *u >= obs.n_users || *q >= obs.n_questions) {
            return Err(KnowledgeError::IndexOutOfRange { user: u, question: q });
        }
        Ok(())
    }

    /// `sum over observed (u, q) of (a - p)^2 + reg * (b_u^2 + b_q^2 + |u|^2 + |v|^2)`.
    pub fn loss(&self, obs: &Observations) -> Result<f64, KnowledgeError> {
        self.check_shape(obs)?;
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        Ok(obs
            .entries
            .iter()
            .map(|&(u, q, a)| {
                let e = a - self.raw_score(u, q).clamp(0.0, 1.0);
                let reg = self.user_bias[u].powi(2)
                    + self.question_bias[q].powi(2)
                    + sq(self.user_row(u))
                    + sq(self.question_row(q));
                e * e + self.hyper.reg * reg
            })
            .sum())
    }

    /// Analytic gradient of [`loss`](Self::loss), the sum of the per-sample
    /// SGD gradients.
    pub fn gradient(&self, obs: &Observations) -> Result<Gradient, KnowledgeError> {
        self.check_shape(obs)?;
        let k = self.k();
        let mut g = Gradient {
            user_bias: vec![0.0; self.n_users()],
            question_bias: vec![0.0; self.n_questions()],
            user_factors: vec![0.0; self.user_factors.len()],
            question_factors: vec![0.0; self.question_factors.len()],
        };
        let mut step = SampleGradient::new(k);
        for &(u, q, a) in &obs.entries {
            step.compute(self, u, q, a);
            g.user_bias[u] += step.user_bias;
            g.question_bias[q] += step.question_bias;
            for f in 0..k {
                g.user_factors[u * k + f] += step.user_factors[f];
                g.question_factors[q * k + f] += step.question_factors[f];
            }
        }
        Ok(g)
    }
}

struct Counts {
    users: Vec<usize>,
    questions: Vec<usize>,
}

impl Counts {
    fn new(obs: &Observations) -> Self {
        let mut users = vec![0; obs.n_users];
        let mut questions = vec![0; obs.n_questions];
        for &(u, q, _) in &obs.entries {
            users[u] += 1;
            questions[q] += 1;
        }
        Self { users, questions }
    }
}

/// Gradient of one sample's term of the loss.
struct SampleGradient {
    user_bias: f64,
    question_bias: f64,
    user_factors: Vec<f64>,
    question_factors: Vec<f64>,
}

impl SampleGradient {
    fn new(k: usize) -> Self {
        Self { user_bias: 0.0, question_bias: 0.0, user_factors: vec![0.0; k], question_factors: vec![0.0; k] }
    }

    fn compute(&mut self, m: &FactorModel, u: usize, q: usize, target: f64) {
        let raw = m.raw_score(u, q);
        // d clamp / d raw: 1 inside [0, 1], 0 where the clamp is active.
        let slope = if (0.0..=1.0).contains(&raw) { 1.0 } else { 0.0 };
        let d = -2.0 * (target - raw.clamp(0.0, 1.0)) * slope;
        let r = 2.0 * m.hyper.reg;
        self.user_bias = d + r * m.user_bias[u];
        self.question_bias = d + r * m.question_bias[q];
        let (pu, qv) = (m.user_row(u), m.question_row(q));
        for f in 0..m.k() {
            self.user_factors[f] = d * qv[f] + r * pu[f];
            self.question_factors[f] = d * pu[f] + r * qv[f];
        }
    }
}

/// Fits the model to a latest-attempt matrix.
pub fn fit(matrix: &LatestAttemptMatrix, hyper: &Hyperparameters) -> Result<FactorModel, KnowledgeError> {
    fit_observations(&Observations::from(matrix), hyper)
}

/// SGD over shuffled samples. After each epoch the full loss is measured; an
/// epoch that increases it is rolled back and the step size halved.
pub fn fit_observations(obs: &Observations, hyper: &Hyperparameters) -> Result<FactorModel, KnowledgeError> {
    hyper.validate()?;
    if obs.entries.is_empty() {
        return Err(KnowledgeError::EmptyMatrix);
    }
    let mean = obs.entries.iter().map(|e| e.2).sum::<f64>() / obs.entries.len() as f64;
    let mut model = FactorModel::zeros(obs.n_users, obs.n_questions, mean, *hyper);
    model.check_shape(obs)?;
    let counts = Counts::new(obs);
    let k = hyper.k;

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.rng_seed);
    let normal = Normal::new(0.0, INIT_STD).expect("valid std");
    // Parameters without observations do not enter the loss; they stay zero.
    for u in (0..obs.n_users).filter(|&u| counts.users[u] > 0) {
        for f in 0..k {
            model.user_factors[u * k + f] = normal.sample(&mut rng);
        }
    }
    for q in (0..obs.n_questions).filter(|&q| counts.questions[q] > 0) {
        for f in 0..k {
            model.question_factors[q * k + f] = normal.sample(&mut rng);
        }
    }

    let mut order: Vec<usize> = (0..obs.entries.len()).collect();
    let mut lr = hyper.learning_rate;
    let mut loss = model.loss(obs)?;
    let mut step = SampleGradient::new(k);
    let mut losses = Vec::with_capacity(hyper.epochs);
    for _ in 0..hyper.epochs {
        let saved = (
            model.user_bias.clone(),
            model.question_bias.clone(),
            model.user_factors.clone(),
            model.question_factors.clone(),
        );
        order.shuffle(&mut rng);
        for &i in &order {
            let (u, q, a) = obs.entries[i];
            step.compute(&model, u, q, a);
            model.user_bias[u] -= lr * step.user_bias;
            model.question_bias[q] -= lr * step.question_bias;
            for f in 0..k {
                model.user_factors[u * k + f] -= lr * step.user_factors[f];
                model.question_factors[q * k + f] -= lr * step.question_factors[f];
            }
        }
        let new_loss = model.loss(obs)?;
        if new_loss > loss || !new_loss.is_finite() {
            (model.user_bias, model.question_bias, model.user_factors, model.question_factors) = saved;
            lr *= 0.5;
        } else {
            loss = new_loss;
        }
        losses.push(loss);
    }
    model.training_loss = losses;
    Ok(model)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    Red,
    Yellow,
    Blue,
}

/// Lower bounds of the Yellow and Blue bands; each boundary belongs to the upper band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandThresholds {
    pub yellow: f64,
    pub blue: f64,
}

impl Default for BandThresholds {
    fn default() -> Self {
        Self { yellow: 0.5, blue: 0.75 }
    }
}

pub fn mastery_band(state: f64, thresholds: &BandThresholds) -> Result<Band, KnowledgeError> {
    if !(0.0..=1.0).contains(&state) {
        return Err(KnowledgeError::OutOfRange(state));
    }
    Ok(if state >= thresholds.blue {
        Band::Blue
    } else if state >= thresholds.yellow {
        Band::Yellow
    } else {
        Band::Red
    })
}

/// Tag-weight matrix, one row per question (in model order), one column per topic.
#[derive(Clone, Debug, PartialEq)]
pub struct TagMatrix {
    pub kus: Vec<KuId>,
    pub rows: Vec<Vec<f64>>,
}

impl TagMatrix {
    pub fn build<'a, I>(questions: I, space: &[KnowledgeUnit]) -> Result<Self, crate::domain::UnknownTag>
    where
        I: IntoIterator<Item = &'a Question>,
    {
        let rows = questions.into_iter().map(|q| tag_weights(q, space)).collect::<Result<_, _>>()?;
        Ok(Self { kus: space.iter().map(|k| k.ku_id).collect(), rows })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStateSnapshot {
    pub at: Timestamp,
    pub kus: Vec<KuId>,
    /// `states[user][ku]` in `[0, 1]`.
    pub states: Vec<Vec<f64>>,
    pub bands: Vec<Vec<Band>>,
}

impl KnowledgeStateSnapshot {
    /// Every user at the neutral state, for courses without a fitted model.
    pub fn neutral(n_users: usize, kus: Vec<KuId>, at: Timestamp, thresholds: &BandThresholds) -> Self {
        let band = mastery_band(NEUTRAL_STATE, thresholds).expect("neutral state in range");
        Self {
            at,
            states: vec![vec![NEUTRAL_STATE; kus.len()]; n_users],
            bands: vec![vec![band; kus.len()]; n_users],
            kus,
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            at: self.at,
            kus: self.kus.clone(),
            states: rows.iter().map(|&r| self.states[r].clone()).collect(),
            bands: rows.iter().map(|&r| self.bands[r].clone()).collect(),
        }
    }

    pub fn ku_index(&self, ku: KuId) -> Option<usize> {
        self.kus.iter().position(|k| *k == ku)
    }
}

/// Weighted mean of predictions over the questions tagged with each topic.
pub fn knowledge_state(
    model: &FactorModel,
    omega: &TagMatrix,
    at: Timestamp,
    thresholds: &BandThresholds,
) -> Result<KnowledgeStateSnapshot, KnowledgeError> {
    if omega.rows.len() != model.n_questions() {
        return Err(KnowledgeError::DimensionMismatch(format!(
            "tag matrix has {} rows, model has {} questions",
            omega.rows.len(),
            model.n_questions()
        )));
    }
    let l = omega.kus.len();
    if let Some(bad) = omega.rows.iter().position(|r| r.len() != l) {
        return Err(KnowledgeError::DimensionMismatch(format!("tag matrix row {bad} has wrong width")));
    }
    let mut states = Vec::with_capacity(model.n_users());
    let mut bands = Vec::with_capacity(model.n_users());
    for u in 0..model.n_users() {
        let mut num = vec![0.0; l];
        let mut den = vec![0.0; l];
        for (q, row) in omega.rows.iter().enumerate() {
            let p = model.predict(u, q)?;
            for (ku, &w) in row.iter().enumerate() {
                if w > 0.0 {
                    num[ku] += w * p;
                    den[ku] += w;
                }
            }
        }
        let row: Vec<f64> =
            num.iter().zip(&den).map(|(n, d)| if *d > 0.0 { (n / d).clamp(0.0, 1.0) } else { NEUTRAL_STATE }).collect();
        bands.push(row.iter().map(|s| mastery_band(*s, thresholds)).collect::<Result<Vec<_>, _>>()?);
        states.push(row);
    }
    Ok(KnowledgeStateSnapshot { at, kus: omega.kus.clone(), states, bands })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum CohortSelector {
    AllPeers,
    /// Keep the best `ceil(p * N)` users per topic, `0 < p <= 1`.
    TopFraction(f64),
}

impl std::str::FromStr for CohortSelector {
    type Err = String;

    /// `all` or `topNN` (percent), e.g. `top20`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("all") || s.eq_ignore_ascii_case("peers") {
            return Ok(CohortSelector::AllPeers);
        }
        let pct: f64 = s
            .strip_prefix("top")
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| format!("unknown cohort selector {s:?}"))?;
        if !(pct > 0.0 && pct <= 100.0) {
            return Err(format!("cohort fraction {pct}% outside (0, 100]"));
        }
        Ok(CohortSelector::TopFraction(pct / 100.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub ku: KuId,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of ascending data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn cohort_distribution(
    snapshot: &KnowledgeStateSnapshot,
    selector: CohortSelector,
) -> Result<Vec<CohortSummary>, KnowledgeError> {
    let n = snapshot.states.len();
    if n == 0 {
        return Err(KnowledgeError::EmptyCohort);
    }
    let keep = match selector {
        CohortSelector::AllPeers => n,
        CohortSelector::TopFraction(p) => {
            if !(p > 0.0 && p <= 1.0) {
                return Err(KnowledgeError::OutOfRange(p));
            }
            // Guard against p * n landing a hair above an integer.
            (((p * n as f64) - 1e-9).ceil() as usize).clamp(1, n)
        }
    };
    Ok(snapshot
        .kus
        .iter()
        .enumerate()
        .map(|(l, &ku)| {
            let mut col: Vec<f64> = snapshot.states.iter().map(|row| row[l]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            col.truncate(keep);
            col.reverse();
            CohortSummary {
                ku,
                min: col[0],
                q1: quantile(&col, 0.25),
                median: quantile(&col, 0.5),
                q3: quantile(&col, 0.75),
                max: col[col.len() - 1],
                mean: col.iter().sum::<f64>() / col.len() as f64,
            }
        })
        .collect())
}
