//! Evaluation harness: runs the answering pipeline over generated or
//! supplied question sets, scores exact matches, and aggregates per-family
//! accuracy with allocentric/egocentric averages.
//!
//! Reports are reproducible: identical config, seed, and bundles produce
//! identical bytes, independent of the parallelism level (the reduce is
//! ordered by question index and nothing time-dependent is recorded).

use serde::{Deserialize, Serialize};

use crate::pipeline::{
    answer_question, sha256_hex, AnswerOptions, Experts, PipelineConfig, PipelineError,
};
use crate::synth::{
    generate_questions, GeneratedQuestion, QuestionFamily, SceneBundle, SynthError, SyntheticScene,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("scene {0} has no ground truth; cannot generate questions")]
    NoGroundTruth(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Bundle(#[from] crate::synth::BundleError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// One evaluation input: a named scene bundle with its question set.
pub struct EvalScene {
    pub name: String,
    pub bundle: SceneBundle,
    pub questions: Vec<GeneratedQuestion>,
}

/// A question set serialized to disk (`--questions` / `--dump-questions`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionsFile {
    pub questions: Vec<SceneQuestion>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneQuestion {
    pub scene: String,
    #[serde(flatten)]
    pub question: GeneratedQuestion,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub scene: String,
    pub id: String,
    pub family: String,
    pub question: String,
    pub route: Option<String>,
    pub answer: Option<String>,
    pub gold: String,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Hash of the full pipeline trace; the trace itself stays off the
    /// report to keep bytes stable and small.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_sha256: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyStats {
    pub family: String,
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub seed: u64,
    pub per_family: Vec<FamilyStats>,
    /// Unweighted mean accuracy over the allocentric families present.
    pub allocentric_avg: Option<f64>,
    /// Unweighted mean accuracy over the egocentric families present.
    pub egocentric_avg: Option<f64>,
    pub records: Vec<QuestionRecord>,
}

impl EvalReport {
    pub fn overall_accuracy(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.correct).count() as f64 / self.records.len() as f64
    }
}

/// Distributes `total` questions over `scenes` as evenly as possible.
pub fn questions_per_scene(total: usize, scenes: usize) -> Vec<usize> {
    assert!(scenes > 0);
    let base = total / scenes;
    let extra = total % scenes;
    (0..scenes).map(|i| base + usize::from(i < extra)).collect()
}

/// Generates each scene's questions from its ground truth, seeds derived
/// deterministically from the master seed and the scene index.
pub fn generate_for_scenes(
    scenes: &mut [(String, SceneBundle)],
    total: usize,
    seed: u64,
    families: &[QuestionFamily],
) -> Result<Vec<EvalScene>, EvalError> {
    let counts = questions_per_scene(total, scenes.len());
    let mut out = Vec::with_capacity(scenes.len());
    for (i, (name, bundle)) in scenes.iter_mut().enumerate() {
        let gt = bundle
            .ground_truth
            .as_ref()
            .ok_or_else(|| EvalError::NoGroundTruth(name.clone()))?;
        let scene = SyntheticScene::from_ground_truth(seed, gt)?;
        let scene_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1));
        let questions = generate_questions(&scene, scene_seed, counts[i], families)?;
        out.push(EvalScene {
            name: name.clone(),
            bundle: std::mem::replace(
                bundle,
                SceneBundle {
                    views: Vec::new(),
                    object_names: Vec::new(),
                    masks: Vec::new(),
                    ground_truth: None,
                },
            ),
            questions,
        });
    }
    Ok(out)
}

/// Runs every question and assembles the report. `parallel` > 1 answers up
/// to that many questions concurrently; the aggregation is an ordered reduce
/// so the report is identical at any parallelism level.
pub fn run_eval(
    scenes: &[EvalScene],
    config: &PipelineConfig,
    experts: &Experts,
    opts: &AnswerOptions,
    parallel: usize,
) -> EvalReport {
    let jobs: Vec<(usize, &EvalScene, &GeneratedQuestion)> = scenes
        .iter()
        .flat_map(|scene| scene.questions.iter().map(move |q| (scene, q)))
        .enumerate()
        .map(|(i, (scene, q))| (i, scene, q))
        .collect();

    let answer_one = |(_, scene, question): &(usize, &EvalScene, &GeneratedQuestion)| -> QuestionRecord {
        let gold = question.gold_text().to_string();
        match answer_question(&scene.bundle, &question.text, config, experts, opts) {
            Ok(outcome) => {
                let trace_json =
                    serde_json::to_string(&outcome.trace).expect("trace serializes");
                QuestionRecord {
                    scene: scene.name.clone(),
                    id: question.id.clone(),
                    family: question.family.as_str().to_string(),
                    question: question.text.clone(),
                    route: Some(outcome.route.as_str().to_string()),
                    answer: Some(outcome.answer.clone()),
                    correct: outcome.answer == gold,
                    gold,
                    error: None,
                    trace_sha256: Some(sha256_hex(&trace_json)),
                }
            }
            Err(e) => QuestionRecord {
                scene: scene.name.clone(),
                id: question.id.clone(),
                family: question.family.as_str().to_string(),
                question: question.text.clone(),
                route: None,
                answer: None,
                correct: false,
                gold,
                error: Some(e.to_string()),
                trace_sha256: None,
            },
        }
    };

    let records: Vec<QuestionRecord> = if parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel)
            .build()
            .expect("thread pool");
        pool.install(|| {
            use rayon::prelude::*;
            jobs.par_iter().map(answer_one).collect()
        })
    } else {
        jobs.iter().map(answer_one).collect()
    };

    let mut per_family: Vec<FamilyStats> = Vec::new();
    for family in QuestionFamily::ALL {
        let name = family.as_str();
        let of_family: Vec<&QuestionRecord> =
            records.iter().filter(|r| r.family == name).collect();
        if of_family.is_empty() {
            continue;
        }
        let correct = of_family.iter().filter(|r| r.correct).count();
        per_family.push(FamilyStats {
            family: name.to_string(),
            n: of_family.len(),
            correct,
            accuracy: correct as f64 / of_family.len() as f64,
        });
    }

    let group_avg = |allocentric: bool| -> Option<f64> {
        let stats: Vec<&FamilyStats> = per_family
            .iter()
            .filter(|s| {
                QuestionFamily::parse(&s.family)
                    .map(|f| f.is_allocentric() == allocentric)
                    .unwrap_or(false)
            })
            .collect();
        if stats.is_empty() {
            None
        } else {
            Some(stats.iter().map(|s| s.accuracy).sum::<f64>() / stats.len() as f64)
        }
    };

    EvalReport {
        schema_version: 1,
        seed: config.seed,
        allocentric_avg: group_avg(true),
        egocentric_avg: group_avg(false),
        per_family,
        records,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn question_distribution_is_even() {
        assert_eq!(questions_per_scene(500, 20), vec![25; 20]);
        assert_eq!(questions_per_scene(7, 3), vec![3, 2, 2]);
        assert_eq!(questions_per_scene(2, 5), vec![1, 1, 0, 0, 0]);
    }
}
