//! Evaluation harness: trains one model per (speaker, sentence, style),
//! runs H0/H1 verification trials and identification-mode confusion
//! counting, and assembles performance tables, confusion matrices, and
//! aggregate metrics.

use std::collections::BTreeMap;

use crate::auth::{
    combine_llr, decide, initial_threshold, ClaimIdentity, Decision, EngineModel, Hypothesis,
    ModelRegistry, RegisteredModel, ScenarioKind, ThresholdState, VerificationTrial,
};
use crate::config::{EngineKind, ExperimentConfig};
use crate::corpus::{
    multi_speaker_plan, single_speaker_plan, split_train_test, splitmix64, AudioClip, ClipSource,
    CorpusManifest, Gender, ModelKey, StyleLabel, TrainingPlan, UttKey, MODEL_STYLES,
};
use crate::error::{Error, Result};
use crate::frontend::{extract_observations, FrontendConfig, ObservationSequence};
use crate::hmm::{train_left_to_right, TrainConfig};
use crate::prosody::{clip_prosody, ProsodyConfig};
use crate::sphmm::{train_sphmm, SphmmConfig};

// ---------------------------------------------------------------------------
// Tables and metrics
// ---------------------------------------------------------------------------

/// One style row: acceptance percentages under H0/H1 per gender plus their
/// average, all integer-rounded like the published tables.
#[derive(Debug, Clone)]
pub struct StyleRow {
    pub style: StyleLabel,
    pub male_h0: Option<u32>,
    pub male_h1: Option<u32>,
    pub female_h0: Option<u32>,
    pub female_h1: Option<u32>,
    pub avg_h0: u32,
    pub avg_h1: u32,
}

#[derive(Debug, Clone)]
pub struct PerformanceTable {
    pub rows: Vec<StyleRow>,
}

/// Integer average of a male/female cell pair, the tables' averaging rule.
pub fn average_pair(male: u32, female: u32) -> u32 {
    ((male + female) as f64 / 2.0).round() as u32
}

fn average_cells(male: Option<u32>, female: Option<u32>) -> u32 {
    match (male, female) {
        (Some(m), Some(f)) => average_pair(m, f),
        (Some(m), None) => m,
        (None, Some(f)) => f,
        (None, None) => 0,
    }
}

/// Unweighted mean rounded to one decimal.
pub fn mean_one_decimal(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (mean * 10.0).round() / 10.0
}

impl PerformanceTable {
    /// Unweighted mean of the nine average-H0 cells, one decimal.
    pub fn aggregate_average(&self) -> Result<f64> {
        if self.rows.len() != MODEL_STYLES.len() {
            return Err(Error::Config(format!(
                "performance table has {} rows, expected {}",
                self.rows.len(),
                MODEL_STYLES.len()
            )));
        }
        Ok(mean_one_decimal(
            &self.rows.iter().map(|r| r.avg_h0 as f64).collect::<Vec<_>>(),
        ))
    }

    pub fn row(&self, style: StyleLabel) -> Option<&StyleRow> {
        self.rows.iter().find(|r| r.style == style)
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>8} {:>8} {:>10} {:>10} {:>7} {:>7}\n",
            "Style", "Male H0", "Male H1", "Female H0", "Female H1", "Avg H0", "Avg H1"
        ));
        let cell = |c: Option<u32>| match c {
            Some(v) => format!("{v}%"),
            None => "-".to_string(),
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{:<10} {:>8} {:>8} {:>10} {:>10} {:>6}% {:>6}%\n",
                r.style.to_string(),
                cell(r.male_h0),
                cell(r.male_h1),
                cell(r.female_h0),
                cell(r.female_h1),
                r.avg_h0,
                r.avg_h1
            ));
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("style,male_h0,male_h1,female_h0,female_h1,avg_h0,avg_h1\n");
        let cell = |c: Option<u32>| match c {
            Some(v) => v.to_string(),
            None => String::new(),
        };
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.style,
                cell(r.male_h0),
                cell(r.male_h1),
                cell(r.female_h0),
                cell(r.female_h1),
                r.avg_h0,
                r.avg_h1
            ));
        }
        out
    }
}

/// 100 * (new - old) / old, one decimal.
pub fn improvement_rate(new: f64, old: f64) -> Result<f64> {
    if old <= 0.0 {
        return Err(Error::Config(format!(
            "improvement rate needs a positive baseline, got {old}"
        )));
    }
    Ok((100.0 * (new - old) / old * 10.0).round() / 10.0)
}

/// Identification-mode confusion: `cells[model][test]` is the percentage of
/// test utterances of the column style whose best-scoring model is the row
/// style. Columns sum to exactly 100 (largest-remainder rounding).
#[derive(Debug, Clone)]
pub struct ConfusionMatrix {
    pub styles: [StyleLabel; 9],
    pub cells: Vec<Vec<u32>>,
}

/// Integer percentages summing to exactly 100 via largest remainder.
pub fn integer_percents(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let exact: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect();
    let mut cells: Vec<u32> = exact.iter().map(|&e| e.floor() as u32).collect();
    let mut deficit = 100 - cells.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if deficit == 0 {
            break;
        }
        cells[i] += 1;
        deficit -= 1;
    }
    cells
}

impl ConfusionMatrix {
    pub fn column_sum(&self, test: usize) -> u32 {
        self.cells.iter().map(|row| row[test]).sum()
    }

    pub fn cell(&self, model: StyleLabel, test: StyleLabel) -> u32 {
        let mi = self.styles.iter().position(|&s| s == model).unwrap();
        let ti = self.styles.iter().position(|&s| s == test).unwrap();
        self.cells[mi][ti]
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("{:<10}", "Model");
        for s in &self.styles {
            out.push_str(&format!(" {:>8}", s.to_string()));
        }
        out.push('\n');
        for (mi, s) in self.styles.iter().enumerate() {
            out.push_str(&format!("{:<10}", s.to_string()));
            for ti in 0..9 {
                out.push_str(&format!(" {:>7}%", self.cells[mi][ti]));
            }
            out.push('\n');
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("model");
        for s in &self.styles {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
        for (mi, s) in self.styles.iter().enumerate() {
            out.push_str(&s.to_string());
            for ti in 0..9 {
                out.push_str(&format!(",{}", self.cells[mi][ti]));
            }
            out.push('\n');
        }
        out
    }
}

pub fn trials_csv(trials: &[VerificationTrial]) -> String {
    let mut out = String::from(VerificationTrial::CSV_HEADER);
    out.push('\n');
    for t in trials {
        out.push_str(&t.csv_line());
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct ExperimentOutput {
    pub table: PerformanceTable,
    pub confusion: ConfusionMatrix,
    pub trials: Vec<VerificationTrial>,
    pub registry: ModelRegistry,
}

fn model_seed(master: u64, key: &ModelKey) -> u64 {
    let mut h = splitmix64(master ^ 0x5eed_c0de);
    for b in key.to_string().bytes() {
        h = splitmix64(h ^ b as u64);
    }
    h
}

fn load_training_data(
    source: &dyn ClipSource,
    keys: &[UttKey],
    frontend: &FrontendConfig,
) -> Result<Vec<(AudioClip, ObservationSequence)>> {
    keys.iter()
        .map(|k| {
            let clip = source.load(k)?;
            let obs = extract_observations(&clip, frontend)?;
            Ok((clip, obs))
        })
        .collect()
}

fn train_one_model(
    key: &ModelKey,
    train_keys: &[UttKey],
    config: &ExperimentConfig,
    source: &dyn ClipSource,
    frontend: &FrontendConfig,
    prosody: &ProsodyConfig,
) -> Result<RegisteredModel> {
    let data = load_training_data(source, train_keys, frontend)?;
    let obs_set: Vec<Vec<Vec<f64>>> = data.iter().map(|(_, o)| o.vectors.clone()).collect();
    let seed = model_seed(config.seed, key);
    let report = train_left_to_right(
        &obs_set,
        config.n_states,
        config.n_mix,
        seed,
        &TrainConfig::default(),
    )?;
    let engine = match config.engine {
        EngineKind::Hmm => EngineModel::Hmm(report.model),
        EngineKind::Sphmm => {
            let sphmm = train_sphmm(
                report.model,
                &data,
                frontend,
                prosody,
                &SphmmConfig {
                    grouping: None,
                    n_mix: config.supra_mix,
                    alpha: config.alpha,
                    seed,
                },
            )?;
            EngineModel::Sphmm(sphmm)
        }
    };
    let train_scores: Vec<f64> = data
        .iter()
        .map(|(clip, obs)| {
            if engine.needs_prosody() {
                let cache = clip_prosody(clip, &obs.frame_times, frontend, prosody);
                engine.score_with_cache(obs, &cache)
            } else {
                engine.score(clip, obs, frontend, prosody)
            }
        })
        .collect::<Result<_>>()?;
    Ok(RegisteredModel {
        engine,
        initial_theta: initial_threshold(&train_scores),
    })
}

/// Trains every model in the plan. `jobs > 1` parallelizes across models;
/// results are merged in key order so the registry is identical either way.
pub fn train_registry(
    plan: &TrainingPlan,
    config: &ExperimentConfig,
    source: &dyn ClipSource,
    frontend: &FrontendConfig,
    prosody: &ProsodyConfig,
) -> Result<ModelRegistry> {
    let entries: Vec<(&ModelKey, &Vec<UttKey>)> = plan.per_model.iter().collect();
    let jobs = config.jobs.max(1).min(entries.len().max(1));
    let mut registry = ModelRegistry::default();
    if jobs <= 1 {
        for (key, train_keys) in entries {
            let model = train_one_model(key, train_keys, config, source, frontend, prosody)?;
            registry.models.insert(key.clone(), model);
        }
        return Ok(registry);
    }
    let chunk_size = entries.len().div_ceil(jobs);
    let results: Vec<Result<Vec<(ModelKey, RegisteredModel)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = entries
            .chunks(chunk_size)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|(key, train_keys)| {
                            train_one_model(key, train_keys, config, source, frontend, prosody)
                                .map(|m| ((*key).clone(), m))
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for chunk in results {
        for (key, model) in chunk? {
            registry.models.insert(key, model);
        }
    }
    Ok(registry)
}

/// Full protocol: split, train, score every test utterance against the nine
/// style models of its (speaker, sentence), emit trials, the performance
/// table, and the confusion matrix.
pub fn run_experiment(
    config: &ExperimentConfig,
    manifest: &CorpusManifest,
    source: &dyn ClipSource,
) -> Result<ExperimentOutput> {
    config.validate()?;
    let frontend = FrontendConfig::default();
    let prosody = ProsodyConfig::default();
    let split = split_train_test(manifest)?;
    let plan = if config.multi_speaker {
        multi_speaker_plan(&split, manifest)
    } else {
        single_speaker_plan(&split)
    };
    let registry = train_registry(&plan, config, source, &frontend, &prosody)?;

    // Group test utterances by (speaker, sentence).
    let mut groups: BTreeMap<(String, u8), Vec<UttKey>> = BTreeMap::new();
    for key in &split.test {
        groups
            .entry((key.speaker_id.clone(), key.sentence_id))
            .or_default()
            .push(key.clone());
    }

    let mut thresholds: BTreeMap<ModelKey, ThresholdState> = registry
        .models
        .iter()
        .map(|(k, m)| {
            (
                k.clone(),
                ThresholdState::new(m.initial_theta, config.window_w, config.margin),
            )
        })
        .collect();

    let mut trials: Vec<VerificationTrial> = Vec::new();
    let mut confusion_counts = vec![vec![0usize; 9]; 9];
    let gender_of: BTreeMap<String, Gender> = manifest
        .speakers()
        .into_iter()
        .collect();

    for ((speaker_id, sentence_id), utts) in &groups {
        let mut utts = utts.clone();
        utts.sort();
        // Score cache: per utterance, its log score under each style model.
        let mut scores: BTreeMap<(UttKey, StyleLabel), f64> = BTreeMap::new();
        for utt in &utts {
            let clip = source.load(utt)?;
            let obs = extract_observations(&clip, &frontend)?;
            let cache = if config.engine == EngineKind::Sphmm && config.alpha != 0.0 {
                Some(clip_prosody(&clip, &obs.frame_times, &frontend, &prosody))
            } else {
                None
            };
            for style in MODEL_STYLES {
                let model_key = ModelKey {
                    speaker_id: speaker_id.clone(),
                    sentence_id: *sentence_id,
                    style,
                };
                let model = registry.get(&model_key)?;
                let score = match &cache {
                    Some(c) => model.engine.score_with_cache(&obs, c)?,
                    None => model.engine.score(&clip, &obs, &frontend, &prosody)?,
                };
                scores.insert((utt.clone(), style), score);
            }
            // Identification mode: argmax style model, sad excluded as both
            // model and column.
            if !utt.style.is_open_set() {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0usize;
                for (si, style) in MODEL_STYLES.iter().enumerate() {
                    let s = scores[&(utt.clone(), *style)];
                    if s > best {
                        best = s;
                        arg = si;
                    }
                }
                let ti = MODEL_STYLES.iter().position(|&s| s == utt.style).unwrap();
                confusion_counts[arg][ti] += 1;
            }
        }
        // Authentication mode: every test utterance claims every style model
        // of its (speaker, sentence); the matching claim is the H0 trial.
        for claim_style in MODEL_STYLES {
            let model_key = ModelKey {
                speaker_id: speaker_id.clone(),
                sentence_id: *sentence_id,
                style: claim_style,
            };
            let threshold = thresholds.get_mut(&model_key).expect("model trained");
            for utt in &utts {
                let claimant_score = scores[&(utt.clone(), claim_style)];
                let imposter_scores: Vec<f64> = match config.scenario {
                    ScenarioKind::ScoreOnly => Vec::new(),
                    _ => MODEL_STYLES
                        .iter()
                        .filter(|&&s| s != claim_style)
                        .map(|&s| scores[&(utt.clone(), s)])
                        .collect(),
                };
                let lambda = combine_llr(claimant_score, &imposter_scores, config.scenario);
                let theta = threshold.theta;
                let decision = decide(lambda, theta);
                let hypothesis = if utt.style == claim_style {
                    Hypothesis::H0
                } else {
                    Hypothesis::H1
                };
                if config.adapt_threshold && decision == Decision::Accept {
                    threshold.push(lambda);
                }
                let gender = gender_of[&utt.speaker_id];
                trials.push(VerificationTrial {
                    claim: ClaimIdentity {
                        speaker_id: speaker_id.clone(),
                        sentence_id: *sentence_id,
                        style: claim_style,
                    },
                    true_meta: crate::corpus::UtteranceMeta {
                        speaker_id: utt.speaker_id.clone(),
                        gender,
                        sentence_id: utt.sentence_id,
                        style: utt.style,
                        token_index: utt.token_index,
                    },
                    lambda,
                    theta,
                    decision,
                    hypothesis,
                });
            }
        }
    }

    let table = assemble_table(&trials);
    let confusion = ConfusionMatrix {
        styles: MODEL_STYLES,
        cells: (0..9)
            .map(|mi| {
                let col: Vec<u32> = (0..9)
                    .map(|ti| {
                        let counts: Vec<usize> =
                            (0..9).map(|m| confusion_counts[m][ti]).collect();
                        integer_percents(&counts)[mi]
                    })
                    .collect();
                col
            })
            .collect(),
    };
    Ok(ExperimentOutput {
        table,
        confusion,
        trials,
        registry,
    })
}

/// Every table cell is recomputable from the trial log alone.
pub fn assemble_table(trials: &[VerificationTrial]) -> PerformanceTable {
    let mut rows = Vec::with_capacity(9);
    for style in MODEL_STYLES {
        let cell = |gender: Gender, hypothesis: Hypothesis| -> Option<u32> {
            let relevant: Vec<&VerificationTrial> = trials
                .iter()
                .filter(|t| {
                    t.claim.style == style
                        && t.true_meta.gender == gender
                        && t.hypothesis == hypothesis
                })
                .collect();
            if relevant.is_empty() {
                return None;
            }
            let accepted = relevant
                .iter()
                .filter(|t| t.decision == Decision::Accept)
                .count();
            Some((100.0 * accepted as f64 / relevant.len() as f64).round() as u32)
        };
        let male_h0 = cell(Gender::Male, Hypothesis::H0);
        let male_h1 = cell(Gender::Male, Hypothesis::H1);
        let female_h0 = cell(Gender::Female, Hypothesis::H0);
        let female_h1 = cell(Gender::Female, Hypothesis::H1);
        rows.push(StyleRow {
            style,
            male_h0,
            male_h1,
            female_h0,
            female_h1,
            avg_h0: average_cells(male_h0, female_h0),
            avg_h1: average_cells(male_h1, female_h1),
        });
    }
    PerformanceTable { rows }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_one_average_column() {
        // Published male/female H0 cells reproduce the Average column under
        // integer-cell rounding.
        let pairs = [
            (99, 99, 99),
            (36, 38, 37),
            (84, 86, 85),
            (60, 60, 60),
            (60, 62, 61),
            (60, 58, 59),
            (40, 42, 41),
            (60, 62, 61),
            (56, 58, 57),
        ];
        for (m, f, avg) in pairs {
            assert_eq!(average_pair(m, f), avg);
        }
    }

    #[test]
    fn multi_speaker_table_average_column() {
        let pairs = [
            (99, 99, 99),
            (38, 40, 39),
            (85, 85, 85),
            (63, 61, 62),
            (59, 61, 60),
            (59, 61, 60),
            (44, 40, 42),
            (61, 63, 62),
            (57, 57, 57),
        ];
        for (m, f, avg) in pairs {
            assert_eq!(average_pair(m, f), avg);
        }
    }

    #[test]
    fn aggregate_average_reproduces_published_values() {
        let sphmm = [99.0, 37.0, 85.0, 60.0, 61.0, 59.0, 41.0, 61.0, 57.0];
        assert_eq!(mean_one_decimal(&sphmm), 62.2);
        let hmm = [99.0, 32.0, 80.0, 55.0, 57.0, 53.0, 37.0, 55.0, 51.0];
        assert_eq!(mean_one_decimal(&hmm), 57.7);
        let same = [40.0; 9];
        assert_eq!(mean_one_decimal(&same), 40.0);
    }

    #[test]
    fn improvement_rates() {
        assert_eq!(improvement_rate(62.2, 57.7).unwrap(), 7.8);
        assert_eq!(improvement_rate(37.0, 32.0).unwrap(), 15.6);
        assert_eq!(improvement_rate(50.0, 50.0).unwrap(), 0.0);
        assert!(improvement_rate(10.0, 0.0).is_err());
    }

    #[test]
    fn integer_percents_sum_to_100() {
        assert_eq!(integer_percents(&[1, 1, 1]).iter().sum::<u32>(), 100);
        assert_eq!(integer_percents(&[7, 11, 3, 0, 29]).iter().sum::<u32>(), 100);
        assert_eq!(integer_percents(&[5, 0, 0]), vec![100, 0, 0]);
        assert_eq!(integer_percents(&[0, 0]), vec![0, 0]);
    }
}
