//! The binary hypothesis test: log-likelihood ratios under the three
//! imposter scenarios, threshold management, and accept/reject decisions.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::corpus::{AudioClip, ModelKey, StyleLabel, UtteranceMeta};
use crate::error::{Error, Result};
use crate::frontend::{extract_observations, FrontendConfig, ObservationSequence};
use crate::hmm::{log_forward, log_mean_exp, HmmModel};
use crate::prosody::{ClipProsody, ProsodyConfig};
use crate::sphmm::{sphmm_log_likelihood, sphmm_log_likelihood_cached, SphmmModel};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ClaimIdentity {
    pub speaker_id: String,
    pub sentence_id: u8,
    pub style: StyleLabel,
}

impl ClaimIdentity {
    pub fn new(speaker_id: String, sentence_id: u8, style: StyleLabel) -> Result<ClaimIdentity> {
        if style.is_open_set() {
            return Err(Error::Config(
                "cannot claim the sad style: no sad models exist".into(),
            ));
        }
        Ok(ClaimIdentity {
            speaker_id,
            sentence_id,
            style,
        })
    }

    pub fn model_key(&self) -> ModelKey {
        ModelKey {
            speaker_id: self.speaker_id.clone(),
            sentence_id: self.sentence_id,
            style: self.style,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Imposter reference pooled from the individual imposter scores
    /// (log-mean-exp).
    Pooled,
    /// Claimant score minus the maximum individual imposter score.
    MaxImposter,
    /// Claimant score alone; no imposter term.
    ScoreOnly,
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub imposter_keys: Vec<ModelKey>,
}

impl ScenarioConfig {
    pub fn score_only() -> ScenarioConfig {
        ScenarioConfig {
            kind: ScenarioKind::ScoreOnly,
            imposter_keys: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind != ScenarioKind::ScoreOnly && self.imposter_keys.is_empty() {
            return Err(Error::Config(
                "pooled and max-imposter scenarios need at least one imposter key".into(),
            ));
        }
        Ok(())
    }
}

/// Pure combination rule applied to already-computed log scores.
pub fn combine_llr(claimant: f64, imposters: &[f64], kind: ScenarioKind) -> f64 {
    match kind {
        ScenarioKind::ScoreOnly => claimant,
        ScenarioKind::MaxImposter => {
            let max = imposters.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            claimant - max
        }
        ScenarioKind::Pooled => claimant - log_mean_exp(imposters),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Accept => write!(f, "accept"),
            Decision::Reject => write!(f, "reject"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hypothesis {
    H0,
    H1,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::H0 => write!(f, "H0"),
            Hypothesis::H1 => write!(f, "H1"),
        }
    }
}

/// Accept iff lambda >= theta. -inf lambda always rejects.
pub fn decide(lambda: f64, theta: f64) -> Decision {
    if lambda >= theta {
        Decision::Accept
    } else {
        Decision::Reject
    }
}

/// Adaptive threshold: a loose initial value, then the mean of the most
/// recent trial scores (bounded FIFO of capacity W) minus an optional
/// margin.
#[derive(Debug, Clone)]
pub struct ThresholdState {
    pub theta: f64,
    pub initial_theta: f64,
    pub margin: f64,
    capacity: usize,
    recent_scores: VecDeque<f64>,
}

impl ThresholdState {
    pub fn new(initial_theta: f64, capacity: usize, margin: f64) -> ThresholdState {
        ThresholdState {
            theta: initial_theta,
            initial_theta,
            margin,
            capacity,
            recent_scores: VecDeque::new(),
        }
    }

    pub fn push(&mut self, new_score: f64) {
        if self.recent_scores.len() == self.capacity {
            self.recent_scores.pop_front();
        }
        self.recent_scores.push_back(new_score);
        let mean: f64 =
            self.recent_scores.iter().sum::<f64>() / self.recent_scores.len() as f64;
        self.theta = mean - self.margin;
    }

    pub fn len(&self) -> usize {
        self.recent_scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recent_scores.is_empty()
    }
}

/// Loose initial threshold from the claimant's scores on its own training
/// utterances: mean minus two standard deviations.
pub fn initial_threshold(train_scores: &[f64]) -> f64 {
    let n = train_scores.len() as f64;
    let mean = train_scores.iter().sum::<f64>() / n;
    let var = train_scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    mean - 2.0 * var.sqrt()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum EngineModel {
    Hmm(HmmModel),
    Sphmm(SphmmModel),
}

impl EngineModel {
    pub fn score(
        &self,
        clip: &AudioClip,
        obs: &ObservationSequence,
        frontend: &FrontendConfig,
        prosody: &ProsodyConfig,
    ) -> Result<f64> {
        match self {
            EngineModel::Hmm(m) => log_forward(m, &obs.vectors),
            EngineModel::Sphmm(m) => {
                Ok(sphmm_log_likelihood(m, clip, obs, frontend, prosody)?.total)
            }
        }
    }

    /// Scores over precomputed frame prosody, avoiding per-model F0
    /// recomputation when one clip is checked against several models.
    pub fn score_with_cache(&self, obs: &ObservationSequence, cache: &ClipProsody) -> Result<f64> {
        match self {
            EngineModel::Hmm(m) => log_forward(m, &obs.vectors),
            EngineModel::Sphmm(m) => Ok(sphmm_log_likelihood_cached(m, obs, cache)?.total),
        }
    }

    /// True when scoring consults the prosodic layer at all.
    pub fn needs_prosody(&self) -> bool {
        matches!(self, EngineModel::Sphmm(m) if m.alpha != 0.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegisteredModel {
    pub engine: EngineModel,
    pub initial_theta: f64,
}

/// On-disk model record: the engine parameters plus the identity it was
/// trained for and its loose initial threshold. Stored as JSON, which
/// round-trips every f64 exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoredModel {
    pub format_version: u32,
    pub key: ModelKey,
    #[serde(flatten)]
    pub model: RegisteredModel,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    pub models: BTreeMap<ModelKey, RegisteredModel>,
}

impl ModelRegistry {
    pub fn get(&self, key: &ModelKey) -> Result<&RegisteredModel> {
        self.models
            .get(key)
            .ok_or_else(|| Error::UnknownClaim(key.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct VerificationTrial {
    pub claim: ClaimIdentity,
    pub true_meta: UtteranceMeta,
    pub lambda: f64,
    pub theta: f64,
    pub decision: Decision,
    pub hypothesis: Hypothesis,
}

impl VerificationTrial {
    pub const CSV_HEADER: &'static str =
        "claim_speaker,claim_sentence,claim_style,true_speaker,true_style,lambda,theta,decision,hypothesis";

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.claim.speaker_id,
            self.claim.sentence_id,
            self.claim.style,
            self.true_meta.speaker_id,
            self.true_meta.style,
            self.lambda,
            self.theta,
            self.decision,
            self.hypothesis
        )
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    /// Feed only accepted-trial scores into threshold adaptation.
    pub adapt_on_accept: bool,
    /// Adapt the threshold at all; frozen thresholds keep the initial value.
    pub adapt_threshold: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            adapt_on_accept: true,
            adapt_threshold: false,
        }
    }
}

/// One comparison against the claimed model: extract features, score,
/// combine per scenario, decide against the current threshold, optionally
/// adapt it.
#[allow(clippy::too_many_arguments)]
pub fn verify(
    clip: &AudioClip,
    claim: &ClaimIdentity,
    true_meta: &UtteranceMeta,
    registry: &ModelRegistry,
    scenario: &ScenarioConfig,
    threshold: &mut ThresholdState,
    options: &VerifyOptions,
    frontend: &FrontendConfig,
    prosody: &ProsodyConfig,
) -> Result<VerificationTrial> {
    scenario.validate()?;
    let claimant = registry.get(&claim.model_key())?;
    let obs = extract_observations(clip, frontend)?;
    let claimant_score = claimant.engine.score(clip, &obs, frontend, prosody)?;
    let mut imposter_scores = Vec::with_capacity(scenario.imposter_keys.len());
    for key in &scenario.imposter_keys {
        let model = self_or_missing(registry, key)?;
        imposter_scores.push(model.engine.score(clip, &obs, frontend, prosody)?);
    }
    let lambda = combine_llr(claimant_score, &imposter_scores, scenario.kind);
    let theta = threshold.theta;
    let decision = decide(lambda, theta);
    let hypothesis = if true_meta.speaker_id == claim.speaker_id
        && true_meta.sentence_id == claim.sentence_id
        && true_meta.style == claim.style
    {
        Hypothesis::H0
    } else {
        Hypothesis::H1
    };
    if options.adapt_threshold && (!options.adapt_on_accept || decision == Decision::Accept) {
        threshold.push(lambda);
    }
    Ok(VerificationTrial {
        claim: claim.clone(),
        true_meta: true_meta.clone(),
        lambda,
        theta,
        decision,
        hypothesis,
    })
}

fn self_or_missing<'a>(registry: &'a ModelRegistry, key: &ModelKey) -> Result<&'a RegisteredModel> {
    registry
        .models
        .get(key)
        .ok_or_else(|| Error::MissingImposter(key.to_string()))
}
