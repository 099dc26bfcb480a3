//! End-to-end orchestration: route a question, ground and lift the key
//! objects, instantiate the query-conditioned frame, render the geometry
//! context, and reason to an answer — with a machine-readable trace of every
//! stage.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::consensus::{lift_object, ConsensusError, ConsensusParams, ObjectState, ViewObservation};
use crate::experts::http::HttpExperts;
use crate::experts::mock::{MockExperts, MockScript};
use crate::experts::rule_based::rule_based_reason;
use crate::experts::{
    Detector, ExpertEndpointConfig, ExpertError, ImageCrop, ImageRef, ItmScorer, OrientationJudge,
    QueryRouter, Reasoner, Simplifier, Strategy, Verifier,
};
use crate::geometry::{
    build_frame_with_hints, camera_frame, forward_from_constraint, GeometryError, ReferenceFrame,
    Vec3,
};
use crate::grounding::{
    estimate_front_world, ground_object, orientation_to_camera_vector, vote_orientation,
    GroundingError, GroundingExperts, Orientation8, RelaxationTrace,
};
use crate::prompting::{
    build_geometry_context, build_key_object_extraction_prompt, parse_key_objects, render_context,
    render_final_query, route_query_rules, FrameSpec, FrontSource, PromptError, RouteLabel,
};
use crate::question::{parse_attribute_target, parse_relation_question, parse_spatial_dependency};
use crate::synth::{BundleError, SceneBundle};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("grounding failed in stage {stage}: {source}")]
    Grounding {
        stage: &'static str,
        #[source]
        source: GroundingError,
    },
    #[error("expert failure in stage {stage}: {source}")]
    Expert {
        stage: &'static str,
        #[source]
        source: ExpertError,
    },
    #[error("degenerate frame in stage {stage}: {source}")]
    DegenerateFrame {
        stage: &'static str,
        #[source]
        source: GeometryError,
    },
    #[error("extraction failed in stage {stage}: {detail}")]
    Extraction { stage: &'static str, detail: String },
    #[error("consensus failure in stage {stage}: {source}")]
    Consensus {
        stage: &'static str,
        #[source]
        source: ConsensusError,
    },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("{0}")]
    Io(String),
}

impl PipelineError {
    /// Stable CLI exit-code contract: 0 ok, 2 usage, 3 grounding, 4 expert
    /// transport/protocol, 5 degenerate frame, 6 extraction, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) => 2,
            PipelineError::Grounding { .. } => 3,
            PipelineError::Expert { source, .. } => match source {
                ExpertError::Usage(_) => 2,
                _ => 4,
            },
            PipelineError::DegenerateFrame { .. } => 5,
            PipelineError::Extraction { .. } => 6,
            PipelineError::Consensus { .. } => 3,
            PipelineError::Bundle(_) | PipelineError::Io(_) => 1,
        }
    }
}

fn expert_err(stage: &'static str) -> impl FnOnce(ExpertError) -> PipelineError {
    move |source| PipelineError::Expert { stage, source }
}

/// Which backend serves each expert kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ExpertsConfig {
    /// Scripted mocks loaded from a JSON file.
    Mock { script_path: PathBuf },
    /// HTTP endpoints, one per expert kind, with a shared default.
    Http {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        default: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detect: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        itm: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        simplify: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        orient: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reason: Option<ExpertEndpointConfig>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        route: Option<ExpertEndpointConfig>,
    },
    /// No external experts: ground-truth masks plus the geometric reasoner.
    RuleBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouterConfig {
    Rules,
    Llm,
}

/// Everything a run needs, loadable from JSON (`--config` or the
/// `ALLOFRAME_CONFIG` environment variable).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub experts: ExpertsConfig,
    #[serde(default)]
    pub consensus: ConsensusParams,
    #[serde(default = "default_router")]
    pub router: RouterConfig,
    #[serde(default = "default_precision")]
    pub precision: usize,
    #[serde(default = "default_tie_margin")]
    pub tie_margin: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_router() -> RouterConfig {
    RouterConfig::Rules
}

fn default_precision() -> usize {
    2
}

fn default_tie_margin() -> f64 {
    crate::experts::rule_based::DEFAULT_TIE_MARGIN
}

fn default_seed() -> u64 {
    42
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            experts: ExpertsConfig::RuleBased,
            consensus: ConsensusParams::default(),
            router: RouterConfig::Rules,
            precision: default_precision(),
            tie_margin: default_tie_margin(),
            seed: default_seed(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {path:?}: {e}")))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Usage(format!("malformed config {path:?}: {e}")))
    }
}

/// Resolved expert handles, shareable across concurrent queries.
#[derive(Clone, Default)]
pub struct Experts {
    pub detector: Option<Arc<dyn Detector>>,
    pub itm: Option<Arc<dyn ItmScorer>>,
    pub simplifier: Option<Arc<dyn Simplifier>>,
    pub orientation: Option<Arc<dyn OrientationJudge>>,
    pub reasoner: Option<Arc<dyn Reasoner>>,
    pub router: Option<Arc<dyn QueryRouter>>,
    pub verifier: Option<Arc<dyn Verifier>>,
}

impl Experts {
    pub fn from_config(config: &ExpertsConfig) -> Result<Self, PipelineError> {
        match config {
            ExpertsConfig::RuleBased => Ok(Experts::default()),
            ExpertsConfig::Mock { script_path } => {
                let script = MockScript::load(script_path).map_err(expert_err("config"))?;
                let mock = Arc::new(MockExperts::new(script));
                Ok(Experts {
                    detector: Some(mock.clone()),
                    itm: Some(mock.clone()),
                    simplifier: Some(mock.clone()),
                    orientation: Some(mock.clone()),
                    reasoner: Some(mock.clone()),
                    router: Some(mock.clone()),
                    verifier: None,
                })
            }
            ExpertsConfig::Http {
                default,
                detect,
                itm,
                simplify,
                orient,
                reason,
                route,
            } => {
                let resolve = |specific: &Option<ExpertEndpointConfig>| -> Result<Option<Arc<HttpExperts>>, PipelineError> {
                    match specific.as_ref().or(default.as_ref()) {
                        Some(cfg) => Ok(Some(Arc::new(
                            HttpExperts::new(cfg.clone()).map_err(expert_err("config"))?,
                        ))),
                        None => Ok(None),
                    }
                };
                Ok(Experts {
                    detector: resolve(detect)?.map(|c| c as Arc<dyn Detector>),
                    itm: resolve(itm)?.map(|c| c as Arc<dyn ItmScorer>),
                    simplifier: resolve(simplify)?.map(|c| c as Arc<dyn Simplifier>),
                    orientation: resolve(orient)?.map(|c| c as Arc<dyn OrientationJudge>),
                    reasoner: resolve(reason)?.map(|c| c as Arc<dyn Reasoner>),
                    router: resolve(route)?.map(|c| c as Arc<dyn QueryRouter>),
                    verifier: None,
                })
            }
        }
    }
}

/// Per-invocation switches orthogonal to the config file.
#[derive(Debug, Clone, Default)]
pub struct AnswerOptions {
    /// Take masks from the bundle instead of grounding.
    pub use_gt_masks: bool,
    /// Take facing directions from the bundle's ground truth instead of the
    /// orientation expert.
    pub use_gt_orientation: bool,
    /// Camera view for the egocentric stream; defaults to the first view.
    pub view: Option<String>,
    /// Bypass key-object extraction with an explicit list.
    pub objects_override: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub input_sha256: String,
    pub output: serde_json::Value,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question: String,
    pub stages: Vec<StageRecord>,
}

impl PipelineTrace {
    fn new(question: &str) -> Self {
        Self {
            question: question.to_string(),
            stages: Vec::new(),
        }
    }

    fn record(&mut self, stage: &str, input: &str, output: serde_json::Value) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            input_sha256: sha256_hex(input),
            output,
        });
    }
}

pub fn sha256_hex(input: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(input.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// A lifted object plus per-view bookkeeping needed downstream.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LiftedObject {
    pub state: ObjectState,
    /// Mask pixel area per view, for reference-view (largest-mask) selection.
    pub mask_areas: BTreeMap<String, usize>,
    /// Per-view bounding boxes of the selected masks.
    pub bboxes: BTreeMap<String, (f64, f64, f64, f64)>,
    /// Relaxation traces per view when grounding ran (absent with gt masks).
    pub traces: BTreeMap<String, RelaxationTrace>,
}

impl LiftedObject {
    /// The view where this object's mask is largest.
    pub fn best_view(&self) -> Option<&str> {
        self.mask_areas
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(view, _)| view.as_str())
    }
}

pub fn answer_outcome_json(outcome: &AnswerOutcome) -> serde_json::Value {
    serde_json::json!({
        "answer": outcome.answer,
        "route": outcome.route.as_str(),
        "trace": outcome.trace,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub answer: String,
    pub route: RouteLabel,
    pub trace: PipelineTrace,
}

/// Grounds (or reads) one object's masks across every view and runs the
/// consensus lift.
pub fn lift_one_object(
    bundle: &SceneBundle,
    name: &str,
    config: &PipelineConfig,
    experts: &Experts,
    opts: &AnswerOptions,
) -> Result<LiftedObject, PipelineError> {
    let mut observations: Vec<(String, ViewObservation)> = Vec::new();
    let mut mask_areas = BTreeMap::new();
    let mut bboxes = BTreeMap::new();
    let mut traces = BTreeMap::new();
    let mut last_grounding_failure: Option<GroundingError> = None;

    for view in &bundle.views {
        if opts.use_gt_masks {
            let Some(mask) = bundle.mask(&view.view_id, name) else {
                continue;
            };
            let Some((x0, y0, x1, y1)) = mask.bounding_box() else {
                continue;
            };
            let bbox = (x0 as f64, y0 as f64, x1 as f64, y1 as f64);
            mask_areas.insert(view.view_id.clone(), mask.pixel_count());
            bboxes.insert(view.view_id.clone(), bbox);
            observations.push((
                view.view_id.clone(),
                ViewObservation { mask: mask.clone(), bbox, itm_score: 1.0 },
            ));
        } else {
            let grounding = GroundingExperts {
                detector: required(&experts.detector, "lift", "detector")?,
                simplifier: required(&experts.simplifier, "lift", "simplifier")?,
                itm: required(&experts.itm, "lift", "itm scorer")?,
                verifier: experts.verifier.as_deref(),
            };
            let image = ImageRef::key(&view.view_id);
            match ground_object(&grounding, &image, name) {
                Ok(grounded) => {
                    mask_areas.insert(view.view_id.clone(), grounded.mask.pixel_count());
                    bboxes.insert(view.view_id.clone(), grounded.bbox);
                    traces.insert(view.view_id.clone(), grounded.trace.clone());
                    observations.push((
                        view.view_id.clone(),
                        ViewObservation {
                            mask: grounded.mask,
                            bbox: grounded.bbox,
                            itm_score: grounded.itm_score,
                        },
                    ));
                }
                Err(e @ (GroundingError::NoCandidates { .. } | GroundingError::AllRejected { .. })) => {
                    // Per-view failures are skipped; the object fails only
                    // when no view grounds at all.
                    last_grounding_failure = Some(e);
                }
                Err(e) => {
                    return Err(match e {
                        GroundingError::Expert(source) => PipelineError::Expert { stage: "lift", source },
                        other => PipelineError::Grounding { stage: "lift", source: other },
                    })
                }
            }
        }
    }

    if observations.is_empty() {
        return Err(match last_grounding_failure {
            Some(source) => PipelineError::Grounding { stage: "lift", source },
            None => PipelineError::Grounding {
                stage: "lift",
                source: GroundingError::NoCandidates {
                    description: name.to_string(),
                    trace: RelaxationTrace {
                        steps: Vec::new(),
                        terminal_reason: crate::grounding::TerminalReason::CannotSimplify,
                    },
                },
            },
        });
    }

    let state = lift_object(name, &bundle.views, &observations, &config.consensus)
        .map_err(|source| PipelineError::Consensus { stage: "lift", source })?;
    Ok(LiftedObject { state, mask_areas, bboxes, traces })
}

fn required<'a, T: ?Sized>(
    handle: &'a Option<Arc<T>>,
    stage: &'static str,
    what: &str,
) -> Result<&'a T, PipelineError> {
    handle.as_deref().ok_or_else(|| PipelineError::Usage(format!(
        "stage {stage} needs a {what} expert, but the config provides none"
    )))
}

/// Key objects for a question: the explicit override, the extraction prompt
/// through a reasoner when one is configured, or a deterministic scan of the
/// bundle's object names in question order.
pub fn extract_key_objects(
    bundle: &SceneBundle,
    question: &str,
    experts: &Experts,
    opts: &AnswerOptions,
) -> Result<Vec<String>, PipelineError> {
    if let Some(objects) = &opts.objects_override {
        if objects.is_empty() {
            return Err(PipelineError::Extraction {
                stage: "extract_objects",
                detail: "empty --objects override".to_string(),
            });
        }
        return Ok(objects.clone());
    }
    if let Some(reasoner) = &experts.reasoner {
        let prompt = build_key_object_extraction_prompt(question);
        match reasoner.complete("", &prompt) {
            Ok(reply) => {
                return parse_key_objects(&reply).map_err(|e| PipelineError::Extraction {
                    stage: "extract_objects",
                    detail: e.to_string(),
                })
            }
            // An unscripted mock falls through to the name scan.
            Err(ExpertError::NotScripted { .. }) => {}
            Err(source) => return Err(PipelineError::Expert { stage: "extract_objects", source }),
        }
    }
    let lowered = question.to_ascii_lowercase();
    let mut found: Vec<(usize, String)> = bundle
        .object_names
        .iter()
        .filter_map(|name| {
            lowered
                .find(&name.to_ascii_lowercase())
                .map(|pos| (pos, name.clone()))
        })
        .collect();
    found.sort();
    let objects: Vec<String> = found.into_iter().map(|(_, name)| name).collect();
    if objects.is_empty() {
        return Err(PipelineError::Extraction {
            stage: "extract_objects",
            detail: format!("no known object named in {question:?}"),
        });
    }
    Ok(objects)
}

/// Resolves a parsed object phrase against the lifted names: exact match
/// first, then containment either way.
fn resolve_name<'a>(phrase: &str, names: impl Iterator<Item = &'a str>) -> Option<String> {
    let phrase_lower = phrase.to_ascii_lowercase();
    let names: Vec<&str> = names.collect();
    if let Some(name) = names.iter().find(|n| n.eq_ignore_ascii_case(phrase)) {
        return Some(name.to_string());
    }
    names
        .iter()
        .find(|n| {
            let n_lower = n.to_ascii_lowercase();
            phrase_lower.contains(&n_lower) || n_lower.contains(&phrase_lower)
        })
        .map(|n| n.to_string())
}

fn gt_front_dir(bundle: &SceneBundle, name: &str) -> Result<Vec3, PipelineError> {
    bundle
        .ground_truth
        .as_ref()
        .and_then(|gt| gt.object(name))
        .map(|o| o.front_dir)
        .ok_or_else(|| PipelineError::Usage(format!(
            "--use-gt-orientation needs ground truth with object {name:?}"
        )))
}

/// Ensemble orientation estimate for `name` in its best view.
fn expert_orientation(
    lift: &LiftedObject,
    name: &str,
    experts: &Experts,
) -> Result<(String, Orientation8), PipelineError> {
    let judge = required(&experts.orientation, "frame", "orientation judge")?;
    let view_id = lift
        .best_view()
        .ok_or_else(|| PipelineError::Usage(format!("object {name:?} has no visible view")))?
        .to_string();
    let bbox = lift.bboxes.get(&view_id).copied().unwrap_or((0.0, 0.0, 0.0, 0.0));
    let crop = ImageCrop::new(ImageRef::key(&view_id), bbox);
    let mut responses = Vec::new();
    for strategy in [Strategy::A, Strategy::BThreeRound, Strategy::C] {
        let label = judge
            .orient(&crop, name, strategy)
            .map_err(expert_err("frame"))?;
        responses.push((strategy, label));
    }
    Ok((view_id, vote_orientation(&responses).winner))
}

/// Builds the allocentric frame for an EGO_3D question.
fn build_ego_frame(
    bundle: &SceneBundle,
    question: &str,
    key_objects: &[String],
    lifts: &BTreeMap<String, LiftedObject>,
    experts: &Experts,
    opts: &AnswerOptions,
) -> Result<(ReferenceFrame, FrameSpec), PipelineError> {
    let dependency = parse_spatial_dependency(question);
    let ref_name = dependency
        .ref_object
        .as_deref()
        .and_then(|phrase| resolve_name(phrase, lifts.keys().map(String::as_str)))
        .unwrap_or_else(|| key_objects[0].clone());
    let ref_lift = lifts.get(&ref_name).ok_or_else(|| PipelineError::Usage(format!(
        "reference object {ref_name:?} was not lifted"
    )))?;
    let origin = ref_lift.state.centroid;

    let (front, front_source, hint_view) = match dependency
        .aux_object
        .as_deref()
        .and_then(|phrase| resolve_name(phrase, lifts.keys().map(String::as_str)))
    {
        Some(aux_name) if aux_name != ref_name => {
            let aux_lift = lifts.get(&aux_name).ok_or_else(|| PipelineError::Usage(format!(
                "auxiliary object {aux_name:?} was not lifted"
            )))?;
            let front = forward_from_constraint(origin, aux_lift.state.centroid)
                .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;
            let view = bundle.views[0].view_id.clone();
            (front, FrontSource::Constraint { aux_object: aux_name }, view)
        }
        _ => {
            if opts.use_gt_orientation {
                let front = gt_front_dir(bundle, &ref_name)?;
                let view = ref_lift
                    .best_view()
                    .unwrap_or(&bundle.views[0].view_id)
                    .to_string();
                (front, FrontSource::Intrinsic { view_id: view.clone() }, view)
            } else {
                let (view_id, label) = expert_orientation(ref_lift, &ref_name, experts)?;
                let view = bundle
                    .view(&view_id)
                    .ok_or_else(|| PipelineError::Usage(format!("unknown view {view_id:?}")))?;
                let front = estimate_front_world(view, label);
                (front, FrontSource::Intrinsic { view_id: view_id.clone() }, view_id)
            }
        }
    };

    let hint_view = bundle
        .view(&hint_view)
        .ok_or_else(|| PipelineError::Usage(format!("unknown view {hint_view:?}")))?;
    let hints = [
        hint_view.axis_in_world(Vec3::Y),
        hint_view.axis_in_world(Vec3::Z),
    ];
    let frame = build_frame_with_hints(origin, front, &hints)
        .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;
    Ok((frame, FrameSpec::ego(ref_name, front_source)))
}

/// Answers one free-text question against a bundle.
pub fn answer_question(
    bundle: &SceneBundle,
    question: &str,
    config: &PipelineConfig,
    experts: &Experts,
    opts: &AnswerOptions,
) -> Result<AnswerOutcome, PipelineError> {
    if question.trim().is_empty() {
        return Err(PipelineError::Usage("empty question".to_string()));
    }
    let mut trace = PipelineTrace::new(question);

    // Route.
    let route = match (config.router, &experts.router) {
        (RouterConfig::Rules, _) => route_query_rules(question),
        (RouterConfig::Llm, Some(router)) => {
            router.route(question).map_err(expert_err("route"))?
        }
        (RouterConfig::Llm, None) => {
            return Err(PipelineError::Usage(
                "router=llm needs a route expert in the config".to_string(),
            ))
        }
    };
    trace.record("route", question, serde_json::json!(route.as_str()));

    // Key objects.
    let key_objects = extract_key_objects(bundle, question, experts, opts)?;
    trace.record("extract_objects", question, serde_json::json!(key_objects));

    // ATTR questions answer from the orientation path; no geometry context.
    if route == RouteLabel::Attr {
        let target = parse_attribute_target(question)
            .and_then(|phrase| resolve_name(phrase.as_str(), key_objects.iter().map(String::as_str)))
            .unwrap_or_else(|| key_objects[0].clone());
        let lift = lift_one_object(bundle, &target, config, experts, opts)?;
        let label = if opts.use_gt_orientation {
            let front = gt_front_dir(bundle, &target)?;
            let view_id = lift.best_view().unwrap_or(&bundle.views[0].view_id).to_string();
            let view = bundle.view(&view_id).expect("best view exists");
            snap_to_label(view, front)
        } else {
            expert_orientation(&lift, &target, experts)?.1
        };
        let answer = label.label().to_string();
        trace.record("attr_orientation", &target, serde_json::json!(answer));
        return Ok(AnswerOutcome { answer, route, trace });
    }

    // Lift every key object.
    let mut lifts: BTreeMap<String, LiftedObject> = BTreeMap::new();
    for name in &key_objects {
        let lift = lift_one_object(bundle, name, config, experts, opts)?;
        lifts.insert(name.clone(), lift);
    }
    let lift_summary: serde_json::Value = key_objects
        .iter()
        .map(|name| {
            let lift = &lifts[name];
            serde_json::json!({
                "name": name,
                "centroid": lift.state.centroid.to_array(),
                "extent": lift.state.extent.to_array(),
                "views": lift.state.source_views,
            })
        })
        .collect();
    trace.record("lift", &key_objects.join(","), lift_summary);

    // Frame.
    let (frame, spec) = match route {
        RouteLabel::Ego3d => {
            build_ego_frame(bundle, question, &key_objects, &lifts, experts, opts)?
        }
        RouteLabel::Camera3d | RouteLabel::Attr => {
            let view_id = opts
                .view
                .clone()
                .unwrap_or_else(|| bundle.views[0].view_id.clone());
            let view = bundle.view(&view_id).ok_or_else(|| {
                PipelineError::Usage(format!("unknown view {view_id:?}"))
            })?;
            (camera_frame(view), FrameSpec::camera())
        }
    };
    frame
        .validate()
        .map_err(|source| PipelineError::DegenerateFrame { stage: "frame", source })?;
    trace.record(
        "frame",
        &format!("{spec:?}"),
        serde_json::json!({
            "origin": frame.origin.to_array(),
            "right": frame.right().to_array(),
            "down": frame.down().to_array(),
            "front": frame.front().to_array(),
        }),
    );

    // Context.
    let states: Vec<&ObjectState> = key_objects.iter().map(|n| &lifts[n].state).collect();
    let context = build_geometry_context(&states, &frame, &spec).map_err(|e| match e {
        PromptError::EmptyContext => PipelineError::Extraction {
            stage: "context",
            detail: "no non-reference objects to describe".to_string(),
        },
        other => PipelineError::Usage(other.to_string()),
    })?;
    let context_text = render_context(&context, config.precision)
        .map_err(|e| PipelineError::Usage(e.to_string()))?;
    trace.record("context", &context_text, serde_json::json!(context_text.len()));

    // Reason.
    let answer = match &experts.reasoner {
        Some(reasoner) if !matches!(config.experts, ExpertsConfig::RuleBased) => {
            let prompt = render_final_query(spec.kind, &context_text, question);
            let reply = reasoner
                .reason(&prompt.system_text, &prompt.composite_text())
                .map_err(|source| match source {
                    ExpertError::Protocol(ref m) if m.contains("no boxed span") => {
                        PipelineError::Extraction { stage: "reason", detail: m.clone() }
                    }
                    other => PipelineError::Expert { stage: "reason", source: other },
                })?;
            reply.extracted
        }
        _ => {
            let relation = parse_relation_question(question).map_err(|e| {
                PipelineError::Extraction { stage: "reason", detail: e.to_string() }
            })?;
            rule_based_reason(&context, &relation, config.tie_margin)
                .map_err(|source| PipelineError::Expert { stage: "reason", source })?
                .extracted
        }
    };
    trace.record("reason", &context_text, serde_json::json!(answer));

    Ok(AnswerOutcome { answer, route, trace })
}

/// Quantizes a world facing direction to the nearest 8-way label as seen
/// from `view`.
pub fn snap_to_label(view: &crate::geometry::CameraView, front_world: Vec3) -> Orientation8 {
    let v_cam = view.pose.rotation.mul_vec(front_world);
    let flat = Vec3::new(v_cam.x, 0.0, v_cam.z);
    *Orientation8::ALL
        .iter()
        .max_by(|a, b| {
            orientation_to_camera_vector(**a)
                .dot(flat)
                .total_cmp(&orientation_to_camera_vector(**b).dot(flat))
        })
        .expect("label set non-empty")
}
