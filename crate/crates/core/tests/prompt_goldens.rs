//! Byte-exact golden checks for rendered contexts, the composite prompt,
//! and the wire-protocol JSON schema.

use alloframe::consensus::ObjectState;
use alloframe::experts::wire::{
    DetectRequest, DetectResponse, ErrorResponse, ItmRequest, ItmResponse, OrientRequest,
    OrientResponse, ReasonRequest, ReasonResponse, RouteRequest, RouteResponse, SimplifyRequest,
    SimplifyResponse,
};
use alloframe::geometry::{build_frame, Vec3};
use alloframe::prompting::{
    build_geometry_context, render_context_camera, render_context_ego, render_final_query,
    FrameKind, FrameSpec, FrontSource,
};

fn golden(name: &str) -> String {
    let path = format!("{}/tests/goldens/{name}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("missing golden {path}: {e}"))
}

fn state(name: &str, centroid: Vec3, half: Vec3) -> ObjectState {
    ObjectState {
        name: name.to_string(),
        points: vec![centroid.sub(half), centroid.add(half)],
        centroid,
        extent: half.scale(2.0),
        source_views: vec!["view0".to_string()],
    }
}

fn fixture_states() -> Vec<ObjectState> {
    vec![
        state("chair", Vec3::ZERO, Vec3::ZERO),
        state("bag", Vec3::new(1.0, 0.0, 3.0), Vec3::new(0.2, 0.15, 0.1)),
        state("lamp", Vec3::new(-0.5, -1.25, 2.0), Vec3::new(0.05, 0.4, 0.05)),
    ]
}

#[test]
fn ego_context_matches_golden_bytes() {
    let frame = build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
    let states = fixture_states();
    let refs: Vec<&ObjectState> = states.iter().collect();
    let ctx = build_geometry_context(
        &refs,
        &frame,
        &FrameSpec::ego("chair", FrontSource::Intrinsic { view_id: "view0".into() }),
    )
    .unwrap();
    let rendered = render_context_ego(&ctx, 2).unwrap();
    assert_eq!(rendered, golden("context_ego.golden.txt"));
}

#[test]
fn camera_context_matches_golden_bytes() {
    let frame = build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
    let states = fixture_states();
    let refs: Vec<&ObjectState> = states.iter().collect();
    let ctx = build_geometry_context(&refs, &frame, &FrameSpec::camera()).unwrap();
    let rendered = render_context_camera(&ctx, 2).unwrap();
    assert_eq!(rendered, golden("context_camera.golden.txt"));
}

#[test]
fn composite_prompt_matches_golden_bytes() {
    let context = golden("context_ego.golden.txt");
    let prompt = render_final_query(
        FrameKind::Ego,
        &context,
        "From the perspective of the chair, is the bag on the left or the right?",
    );
    assert_eq!(prompt.composite_text(), golden("final_prompt_ego.golden.txt"));
    assert!(prompt
        .system_text
        .contains("You will be given an ego-centric 3D geometry context."));
}

/// Serialize → golden bytes, and golden bytes → value, for every wire type.
macro_rules! wire_round_trip {
    ($name:ident, $ty:ty, $file:expr) => {
        #[test]
        fn $name() {
            let text = golden($file);
            let value: $ty = serde_json::from_str(&text).expect("golden parses");
            let re = serde_json::to_string(&value).expect("serializes");
            assert_eq!(re, text.trim_end(), "wire bytes drifted for {}", $file);
            let again: $ty = serde_json::from_str(&re).unwrap();
            assert_eq!(again, value);
        }
    };
}

wire_round_trip!(wire_detect_request, DetectRequest, "detect_request.golden.json");
wire_round_trip!(wire_detect_response, DetectResponse, "detect_response.golden.json");
wire_round_trip!(wire_itm_request, ItmRequest, "itm_request.golden.json");
wire_round_trip!(wire_itm_response, ItmResponse, "itm_response.golden.json");
wire_round_trip!(wire_simplify_request, SimplifyRequest, "simplify_request.golden.json");
wire_round_trip!(wire_simplify_response, SimplifyResponse, "simplify_response.golden.json");
wire_round_trip!(wire_orient_request, OrientRequest, "orient_request.golden.json");
wire_round_trip!(wire_orient_response, OrientResponse, "orient_response.golden.json");
wire_round_trip!(wire_reason_request, ReasonRequest, "reason_request.golden.json");
wire_round_trip!(wire_reason_response, ReasonResponse, "reason_response.golden.json");
wire_round_trip!(wire_route_request, RouteRequest, "route_request.golden.json");
wire_round_trip!(wire_route_response, RouteResponse, "route_response.golden.json");
wire_round_trip!(wire_error_response, ErrorResponse, "error_response.golden.json");
