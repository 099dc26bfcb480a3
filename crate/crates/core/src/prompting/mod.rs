//! Query routing, geometry-context construction, and prompt rendering.
//!
//! The rendered context and prompt texts are frozen: the templates live
//! verbatim under `templates/v1/` and the golden-file tests enforce byte
//! equality, so any wording change is a deliberate, visible diff.
//!
//! Routing is a deterministic cascade: perspective-adoption phrasings route
//! to `EGO_3D`, attribute phrasings to `ATTR`, and everything else defaults
//! to the camera stream, matching the convention that an unspecified
//! perspective means the camera's.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::{robust_extent, ObjectState};
use crate::geometry::{transform_point, transform_points, ReferenceFrame, Vec3};

pub const TEMPLATE_VERSION: &str = "v1";

const CONTEXT_EGO_HEADER: &str = include_str!("../../templates/v1/context_ego_header.txt");
const CONTEXT_CAMERA_HEADER: &str = include_str!("../../templates/v1/context_camera_header.txt");
const SYSTEM_EGO: &str = include_str!("../../templates/v1/system_ego.txt");
const SYSTEM_CAMERA: &str = include_str!("../../templates/v1/system_camera.txt");
const REASONING_PROMPT: &str = include_str!("../../templates/v1/reasoning_prompt.txt");
const KEY_OBJECT_EXTRACTION: &str = include_str!("../../templates/v1/key_object_extraction.txt");
const ROUTER_SYSTEM: &str = include_str!("../../templates/v1/router_system.txt");
const ROUTER_FEWSHOT: &str = include_str!("../../templates/v1/router_fewshot.txt");
const ROUTER_QUERY: &str = include_str!("../../templates/v1/router_query.txt");
const ORIENT_A: &str = include_str!("../../templates/v1/orient_a.txt");
const ORIENT_B_ROUND1: &str = include_str!("../../templates/v1/orient_b_round1.txt");
const ORIENT_B_ROUND2: &str = include_str!("../../templates/v1/orient_b_round2.txt");
const ORIENT_B_ROUND3: &str = include_str!("../../templates/v1/orient_b_round3.txt");
const ORIENT_C_RULES: &str = include_str!("../../templates/v1/orient_c_rules.txt");
const ORIENT_C_QUESTION: &str = include_str!("../../templates/v1/orient_c_question.txt");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("ego context needs at least one non-reference object")]
    EmptyContext,
    #[error("frame spec invalid: {0}")]
    InvalidFrameSpec(String),
    #[error("key-object extraction returned nothing")]
    EmptyExtraction,
}

/// Which pipeline stream answers a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteLabel {
    #[serde(rename = "ATTR")]
    Attr,
    #[serde(rename = "CAMERA_3D")]
    Camera3d,
    #[serde(rename = "EGO_3D")]
    Ego3d,
}

impl RouteLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RouteLabel::Attr => "ATTR",
            RouteLabel::Camera3d => "CAMERA_3D",
            RouteLabel::Ego3d => "EGO_3D",
        }
    }

    pub fn parse(text: &str) -> Option<RouteLabel> {
        match text.trim().to_ascii_uppercase().as_str() {
            "ATTR" => Some(RouteLabel::Attr),
            "CAMERA_3D" => Some(RouteLabel::Camera3d),
            "EGO_3D" => Some(RouteLabel::Ego3d),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameKind {
    Ego,
    Camera,
}

/// Where a frame's forward axis comes from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontSource {
    /// The reference object's own facing, judged in the named view.
    Intrinsic { view_id: String },
    /// The direction toward an auxiliary object.
    Constraint { aux_object: String },
}

/// Query-conditioned frame description carried through the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSpec {
    pub kind: FrameKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_object: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub front_source: Option<FrontSource>,
}

impl FrameSpec {
    pub fn camera() -> Self {
        Self {
            kind: FrameKind::Camera,
            ref_object: None,
            front_source: None,
        }
    }

    pub fn ego(ref_object: impl Into<String>, front_source: FrontSource) -> Self {
        Self {
            kind: FrameKind::Ego,
            ref_object: Some(ref_object.into()),
            front_source: Some(front_source),
        }
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.kind == FrameKind::Ego && (self.ref_object.is_none() || self.front_source.is_none())
        {
            return Err(PromptError::InvalidFrameSpec(
                "ego frames need a reference object and a front source".to_string(),
            ));
        }
        Ok(())
    }
}

/// One object's frame-local summary, ready for text rendering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub name: String,
    pub coords: Vec3,
    pub distance: f64,
    pub sizes: Vec3,
}

/// Frame-local coordinates, distances, and sizes for the relevant objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryContext {
    pub frame: FrameSpec,
    pub entries: Vec<ContextEntry>,
}

/// Transforms object states into `frame` and assembles the context.
///
/// Entry order follows the input order (the question's key-object order).
/// Ego contexts exclude the reference object; camera contexts include every
/// object. Distances are re-derived from the transformed coordinates, and
/// sizes are extents of the full cloud measured along the frame axes.
pub fn build_geometry_context(
    states: &[&ObjectState],
    frame: &ReferenceFrame,
    spec: &FrameSpec,
) -> Result<GeometryContext, PromptError> {
    spec.validate()?;
    let mut entries = Vec::new();
    for state in states {
        if spec.kind == FrameKind::Ego && Some(&state.name) == spec.ref_object.as_ref() {
            continue;
        }
        let coords = transform_point(frame, state.centroid);
        let local_cloud = transform_points(frame, &state.points);
        entries.push(ContextEntry {
            name: state.name.clone(),
            coords,
            distance: coords.norm(),
            sizes: robust_extent(&local_cloud),
        });
    }
    if spec.kind == FrameKind::Ego && entries.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    Ok(GeometryContext {
        frame: spec.clone(),
        entries,
    })
}

/// Fixed-point formatting with round-half-away-from-zero, the convention for
/// every real in rendered contexts. Negative zero normalizes to zero.
pub fn format_fixed(value: f64, precision: usize) -> String {
    let scale = 10f64.powi(precision as i32);
    let magnitude = (value.abs() * scale + 0.5).floor() / scale;
    let signed = if value < 0.0 && magnitude != 0.0 {
        -magnitude
    } else {
        magnitude
    };
    format!("{signed:.precision$}")
}

fn render_entries(entries: &[ContextEntry], precision: usize) -> String {
    let mut out = String::new();
    for (i, entry) in entries.iter().enumerate() {
        let c = entry.coords;
        let s = entry.sizes;
        out.push_str(&format!(
            "Object {n}: {name} | coordinates = (x={x}, y={y}, z={z}) | distance={d} | sizes=(dX={sx}, dY={sy}, dZ={sz})\n",
            n = i + 1,
            name = entry.name,
            x = format_fixed(c.x, precision),
            y = format_fixed(c.y, precision),
            z = format_fixed(c.z, precision),
            d = format_fixed(entry.distance, precision),
            sx = format_fixed(s.x, precision),
            sy = format_fixed(s.y, precision),
            sz = format_fixed(s.z, precision),
        ));
    }
    out
}

/// Renders the ego-frame context block. The reference object's name fills
/// the header; one line per non-ego object follows.
pub fn render_context_ego(ctx: &GeometryContext, precision: usize) -> Result<String, PromptError> {
    if ctx.frame.kind != FrameKind::Ego {
        return Err(PromptError::InvalidFrameSpec(
            "ego renderer needs an ego context".to_string(),
        ));
    }
    let ref_name = ctx
        .frame
        .ref_object
        .as_deref()
        .ok_or_else(|| PromptError::InvalidFrameSpec("missing reference object".to_string()))?;
    if ctx.entries.is_empty() {
        return Err(PromptError::EmptyContext);
    }
    let header = CONTEXT_EGO_HEADER.replace("{ref}", ref_name);
    Ok(format!("{header}{}", render_entries(&ctx.entries, precision)))
}

/// Renders the camera/viewer-frame context block; every object is listed.
pub fn render_context_camera(
    ctx: &GeometryContext,
    precision: usize,
) -> Result<String, PromptError> {
    if ctx.frame.kind != FrameKind::Camera {
        return Err(PromptError::InvalidFrameSpec(
            "camera renderer needs a camera context".to_string(),
        ));
    }
    Ok(format!(
        "{CONTEXT_CAMERA_HEADER}{}",
        render_entries(&ctx.entries, precision)
    ))
}

/// Renders whichever template matches the context's frame kind.
pub fn render_context(ctx: &GeometryContext, precision: usize) -> Result<String, PromptError> {
    match ctx.frame.kind {
        FrameKind::Ego => render_context_ego(ctx, precision),
        FrameKind::Camera => render_context_camera(ctx, precision),
    }
}

/// The composite prompt: system instruction, geometry context, question, and
/// the chain-of-thought reasoning instruction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub system_text: String,
    pub context_text: String,
    pub question_text: String,
    pub reasoning_text: String,
}

impl RenderedPrompt {
    /// The body handed to the reasoner: `[S_geo, Q, Q_rea]` in order.
    pub fn composite_text(&self) -> String {
        format!(
            "{context}QUESTION:\n{question}\nReasoning Prompt:\n{reasoning}",
            context = self.context_text,
            question = self.question_text,
            reasoning = self.reasoning_text,
        )
    }
}

/// Assembles the final query for a rendered context. The system instruction
/// follows the frame kind; the question passes through unmodified.
pub fn render_final_query(kind: FrameKind, context_text: &str, question: &str) -> RenderedPrompt {
    let system_text = match kind {
        FrameKind::Ego => SYSTEM_EGO,
        FrameKind::Camera => SYSTEM_CAMERA,
    };
    RenderedPrompt {
        system_text: system_text.to_string(),
        context_text: context_text.to_string(),
        question_text: question.to_string(),
        reasoning_text: REASONING_PROMPT.to_string(),
    }
}

/// The key-object extraction prompt with the question substituted.
pub fn build_key_object_extraction_prompt(question: &str) -> String {
    KEY_OBJECT_EXTRACTION.replace("{Q}", question)
}

/// Splits a comma-separated extraction reply, trimming and dropping empty
/// segments, preserving order.
pub fn parse_key_objects(response: &str) -> Result<Vec<String>, PromptError> {
    let objects: Vec<String> = response
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();
    if objects.is_empty() {
        return Err(PromptError::EmptyExtraction);
    }
    Ok(objects)
}

/// The full router prompt: system, few-shot block, and the final query.
pub fn build_router_prompt(question: &str) -> String {
    format!(
        "{ROUTER_SYSTEM}\n{ROUTER_FEWSHOT}\n{}",
        ROUTER_QUERY.replace("{question}", question)
    )
}

pub fn orientation_prompt_a(keyword: &str) -> String {
    ORIENT_A.replace("{object_keyword}", keyword)
}

pub fn orientation_prompt_b_round(round: u32, keyword: &str, options: &[&str]) -> String {
    match round {
        1 => ORIENT_B_ROUND1.replace("{object_keyword}", keyword),
        2 => ORIENT_B_ROUND2.replace("{object_keyword}", keyword),
        3 => ORIENT_B_ROUND3
            .replace("{object_keyword}", keyword)
            .replace("{options_str}", &options.join(", ")),
        other => panic!("three-round protocol has no round {other}"),
    }
}

pub fn orientation_prompt_c(keyword: &str) -> String {
    format!(
        "{ORIENT_C_RULES}\n{}",
        ORIENT_C_QUESTION.replace("{object_keyword}", keyword)
    )
}

struct RouterPatterns {
    ego: Vec<Regex>,
    attr: Vec<Regex>,
}

fn router_patterns() -> &'static RouterPatterns {
    static PATTERNS: OnceLock<RouterPatterns> = OnceLock::new();
    PATTERNS.get_or_init(|| RouterPatterns {
        ego: vec![
            Regex::new(r"(?i)from the perspective of").unwrap(),
            Regex::new(r"(?i)from\s+(?:the\s+)?\S[^,?]*['\u{2019}]s\s+perspective").unwrap(),
            Regex::new(r"(?i)if\s+i\s+stand\s+at").unwrap(),
            Regex::new(r"(?i)standing\s+at\s+the").unwrap(),
            Regex::new(r"(?i)facing where it is facing").unwrap(),
            Regex::new(r"(?i)relative to the\s+[^,?]*['\u{2019}]s\b").unwrap(),
        ],
        attr: vec![
            Regex::new(r"(?i)what direction is .* facing").unwrap(),
            Regex::new(r"(?i)what color").unwrap(),
            Regex::new(r"(?i)what material").unwrap(),
            Regex::new(r"(?i)is there a\b").unwrap(),
        ],
    })
}

/// Deterministic rule cascade: perspective-adoption phrasings win, attribute
/// phrasings come second, and the camera stream is the default.
pub fn route_query_rules(question: &str) -> RouteLabel {
    let patterns = router_patterns();
    if patterns.ego.iter().any(|p| p.is_match(question)) {
        return RouteLabel::Ego3d;
    }
    if patterns.attr.iter().any(|p| p.is_match(question)) {
        return RouteLabel::Attr;
    }
    RouteLabel::Camera3d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(name: &str, center: Vec3) -> ObjectState {
        ObjectState {
            name: name.to_string(),
            points: vec![center],
            centroid: center,
            extent: Vec3::ZERO,
            source_views: vec!["view0".to_string()],
        }
    }

    #[test]
    fn router_matches_fewshot_labels() {
        assert_eq!(
            route_query_rules("What direction is the girl facing in the image?"),
            RouteLabel::Attr
        );
        assert_eq!(
            route_query_rules(
                "How are the clothes positioned with respect to the cabinet from the camera perspective?"
            ),
            RouteLabel::Camera3d
        );
        assert_eq!(
            route_query_rules("If you're looking at the counter, where would you find the table?"),
            RouteLabel::Camera3d
        );
        assert_eq!(
            route_query_rules(
                "If I stand at the fridge's position facing where it is facing, is the potted plant to my left or right?"
            ),
            RouteLabel::Ego3d
        );
        assert_eq!(
            route_query_rules("From the perspective of the boy, where is the dog located?"),
            RouteLabel::Ego3d
        );
    }

    #[test]
    fn router_possessive_and_relative_patterns() {
        assert_eq!(
            route_query_rules("From the chair's perspective, where is the ball?"),
            RouteLabel::Ego3d
        );
        assert_eq!(
            route_query_rules("Where is the mug relative to the monitor's left side?"),
            RouteLabel::Ego3d
        );
        assert_eq!(route_query_rules("Is there a lamp on the desk?"), RouteLabel::Attr);
        assert_eq!(route_query_rules("Which object is closer?"), RouteLabel::Camera3d);
    }

    #[test]
    fn ego_context_excludes_reference_and_orders_entries() {
        let frame = crate::geometry::build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        let states = [
            state("chair", Vec3::ZERO),
            state("bag", Vec3::new(1.0, 0.0, 0.0)),
            state("lamp", Vec3::new(0.0, 0.0, 2.0)),
        ];
        let refs: Vec<&ObjectState> = states.iter().collect();
        let spec = FrameSpec::ego("chair", FrontSource::Intrinsic { view_id: "view0".into() });
        let ctx = build_geometry_context(&refs, &frame, &spec).unwrap();
        assert_eq!(ctx.entries.len(), 2);
        assert_eq!(ctx.entries[0].name, "bag");
        // Reference facing +z world, bag at world (1, 0, 0): to the RIGHT.
        assert!((ctx.entries[0].coords.x - 1.0).abs() < 1e-12);
        assert_eq!(ctx.entries[1].name, "lamp");
        assert!((ctx.entries[1].coords.z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn distance_is_rederived_from_coords() {
        let frame = crate::geometry::build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        let states = [state("obj", Vec3::new(0.0, 0.0, 3.0))];
        let refs: Vec<&ObjectState> = states.iter().collect();
        let ctx = build_geometry_context(&refs, &frame, &FrameSpec::camera()).unwrap();
        assert!((ctx.entries[0].distance - ctx.entries[0].coords.norm()).abs() < 1e-15);
        assert!((ctx.entries[0].distance - 3.0).abs() < 1e-12);
    }

    #[test]
    fn ego_context_with_only_reference_errors() {
        let frame = crate::geometry::build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        let states = [state("chair", Vec3::ZERO)];
        let refs: Vec<&ObjectState> = states.iter().collect();
        let spec = FrameSpec::ego("chair", FrontSource::Intrinsic { view_id: "view0".into() });
        assert!(matches!(
            build_geometry_context(&refs, &frame, &spec),
            Err(PromptError::EmptyContext)
        ));
    }

    #[test]
    fn fixed_point_formatting_rounds_half_away_from_zero() {
        assert_eq!(format_fixed(1.23456, 2), "1.23");
        assert_eq!(format_fixed(1.235, 2), "1.24");
        assert_eq!(format_fixed(-1.235, 2), "-1.24");
        assert_eq!(format_fixed(0.005, 2), "0.01");
        assert_eq!(format_fixed(-0.001, 2), "0.00");
        assert_eq!(format_fixed(2.0, 2), "2.00");
    }

    #[test]
    fn context_headers_start_rendered_blocks() {
        let frame = crate::geometry::build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        let states = [state("chair", Vec3::ZERO), state("bag", Vec3::X)];
        let refs: Vec<&ObjectState> = states.iter().collect();
        let ego = build_geometry_context(
            &refs,
            &frame,
            &FrameSpec::ego("chair", FrontSource::Intrinsic { view_id: "view0".into() }),
        )
        .unwrap();
        let text = render_context_ego(&ego, 2).unwrap();
        assert!(text.starts_with("EGO-CENTRIC 3D GEOMETRY CONTEXT\n"));
        assert!(text.contains("x > 0: obj is to the RIGHT"));
        assert!(text.contains("(ego object = chair)"));

        let cam = build_geometry_context(&refs, &frame, &FrameSpec::camera()).unwrap();
        let text = render_context_camera(&cam, 2).unwrap();
        assert!(text.starts_with("Camera/Viewer-CENTRIC 3D GEOMETRY CONTEXT\n"));
        assert_eq!(cam.entries.len(), 2, "camera context keeps every object");
    }

    #[test]
    fn rendering_is_idempotent() {
        let frame = crate::geometry::build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        let states = [state("a", Vec3::X), state("b", Vec3::Z)];
        let refs: Vec<&ObjectState> = states.iter().collect();
        let ctx = build_geometry_context(&refs, &frame, &FrameSpec::camera()).unwrap();
        assert_eq!(
            render_context_camera(&ctx, 2).unwrap(),
            render_context_camera(&ctx, 2).unwrap()
        );
    }

    #[test]
    fn final_query_concatenation_order() {
        let prompt = render_final_query(FrameKind::Ego, "CTX\n", "Where is it?");
        let text = prompt.composite_text();
        let ctx_pos = text.find("CTX").unwrap();
        let q_pos = text.find("QUESTION:\nWhere is it?").unwrap();
        let r_pos = text.find("Reasoning Prompt:\n").unwrap();
        assert!(ctx_pos < q_pos && q_pos < r_pos);
        assert!(prompt.system_text.starts_with("You are a precise 3D spatial reasoning assistant."));
        assert!(prompt.reasoning_text.contains("\\boxed{}"));
    }

    #[test]
    fn key_object_parsing() {
        assert_eq!(
            parse_key_objects("person with white trousers, person in blue").unwrap(),
            vec!["person with white trousers", "person in blue"]
        );
        assert_eq!(parse_key_objects("a, , b").unwrap(), vec!["a", "b"]);
        assert!(matches!(parse_key_objects(""), Err(PromptError::EmptyExtraction)));
        let prompt = build_key_object_extraction_prompt("Where is the dog?");
        assert!(prompt.contains("Question: Where is the dog?"));
    }

    #[test]
    fn route_label_parsing() {
        assert_eq!(RouteLabel::parse("  EGO_3D \n"), Some(RouteLabel::Ego3d));
        assert_eq!(RouteLabel::parse("attr"), Some(RouteLabel::Attr));
        assert_eq!(RouteLabel::parse("garbage"), None);
    }
}
