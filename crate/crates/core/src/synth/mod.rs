//! Synthetic scenes: deterministic generation, analytic rendering, a
//! ground-truth relation oracle, and multiple-choice question generation.
//!
//! Scenes place small primitives inside a compact cluster watched by a ring
//! of level telephoto cameras. Level cameras share an exact world-down
//! y-axis, so reference frames built by the oracle and by the pipeline use
//! identical down hints and differ only through lifted-centroid error.

pub mod bundle;
pub mod render;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    build_frame_with_hints, forward_from_constraint, project_point, transform_point,
    CameraIntrinsics, CameraView, Mat3, Pose, ReferenceFrame, Vec3,
};
use crate::prompting::{FrameKind, FrameSpec, FrontSource};
use crate::question::{
    evaluate_relation, QuestionError, RelationKind, RelationQuestion, RelationVerdict,
};

pub use bundle::{read_bundle, write_bundle, BundleError, BundleMask, GroundTruth, SceneBundle};
pub use render::{add_depth_noise, render_views};

/// Name pool for generated objects; names are unique within a scene.
const VOCABULARY: [&str; 16] = [
    "chair", "table", "lamp", "ball", "crate", "plant", "bottle", "mug", "book", "monitor",
    "bag", "shoe", "vase", "clock", "kettle", "stool",
];

const RING_RADIUS: f64 = 10.0;
const IMAGE_SIZE: u32 = 640;
const FOCAL: f64 = 1400.0;
const MIN_SEPARATION: f64 = 0.5;
const PLACEMENT_ATTEMPTS: usize = 10_000;
const QUESTION_ATTEMPTS: usize = 1_000;

/// Tie margin shared by the oracle and the rule-based reasoner, so excluded
/// questions and refused answers line up.
pub const ORACLE_TIE_MARGIN: f64 = 0.02;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("placement failed after {attempts} attempts (n_objects={n_objects})")]
    Placement { attempts: usize, n_objects: usize },
    #[error("tie-free question sampling failed {attempts} consecutive times")]
    QuestionSampling { attempts: usize },
    #[error("scene has no object named {0:?}")]
    UnknownObject(String),
    #[error("scene needs between 2 and 12 objects, got {0}")]
    BadObjectCount(usize),
    #[error("frame spec unusable for the oracle: {0}")]
    BadFrameSpec(String),
    #[error(transparent)]
    Question(#[from] QuestionError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Box { half_sizes: Vec3 },
    Sphere { radius: f64 },
}

impl Shape {
    /// Conservative bounding half-extents.
    pub fn half_extents(&self) -> Vec3 {
        match self {
            Shape::Box { half_sizes } => *half_sizes,
            Shape::Sphere { radius } => Vec3::new(*radius, *radius, *radius),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub name: String,
    pub shape: Shape,
    pub center: Vec3,
    /// Unit facing direction in world space, horizontal by construction.
    pub front_dir: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn center(&self) -> Vec3 {
        self.min.add(self.max).scale(0.5)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneCamera {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub seed: u64,
    pub objects: Vec<SyntheticObject>,
    pub cameras: Vec<SceneCamera>,
    pub bounds: Aabb,
}

impl SyntheticScene {
    pub fn object(&self, name: &str) -> Result<&SyntheticObject, SynthError> {
        self.objects
            .iter()
            .find(|o| o.name == name)
            .ok_or_else(|| SynthError::UnknownObject(name.to_string()))
    }

    /// Rebuilds the scene description from a bundle's ground truth, e.g. to
    /// generate questions for an on-disk bundle.
    pub fn from_ground_truth(seed: u64, gt: &GroundTruth) -> Result<Self, BundleError> {
        let cameras = gt
            .cameras
            .iter()
            .map(|mv| {
                Ok(SceneCamera {
                    view_id: mv.id.clone(),
                    width: mv.width,
                    height: mv.height,
                    intrinsics: mv.intrinsics(),
                    pose: mv.pose()?,
                })
            })
            .collect::<Result<Vec<_>, BundleError>>()?;
        let mut min = Vec3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Vec3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for o in &gt.objects {
            min = Vec3::new(min.x.min(o.center.x), min.y.min(o.center.y), min.z.min(o.center.z));
            max = Vec3::new(max.x.max(o.center.x), max.y.max(o.center.y), max.z.max(o.center.z));
        }
        Ok(SyntheticScene {
            seed,
            objects: gt.objects.clone(),
            cameras,
            bounds: Aabb { min, max },
        })
    }
}

/// Default placement region: a compact cluster so the surrounding ring sees
/// every object at near-equal range.
pub fn default_bounds() -> Aabb {
    Aabb {
        min: Vec3::new(-1.8, -0.6, -1.8),
        max: Vec3::new(1.8, 0.6, 1.8),
    }
}

fn object_aabb(center: Vec3, shape: &Shape) -> Aabb {
    let h = shape.half_extents();
    Aabb { min: center.sub(h), max: center.add(h) }
}

fn aabb_separation(a: &Aabb, b: &Aabb) -> f64 {
    let gap = |amin: f64, amax: f64, bmin: f64, bmax: f64| (bmin - amax).max(amin - bmax).max(0.0);
    let gx = gap(a.min.x, a.max.x, b.min.x, b.max.x);
    let gy = gap(a.min.y, a.max.y, b.min.y, b.max.y);
    let gz = gap(a.min.z, a.max.z, b.min.z, b.max.z);
    (gx * gx + gy * gy + gz * gz).sqrt()
}

/// Deterministically places `n_objects` primitives inside `bounds` and
/// `n_views` level cameras on a surrounding ring looking at the bounds
/// center. Placement rejection-samples until objects are pairwise separated
/// and every object is visible in at least one camera.
pub fn generate_scene(
    seed: u64,
    n_objects: usize,
    n_views: usize,
    bounds: Aabb,
) -> Result<SyntheticScene, SynthError> {
    if !(2..=12).contains(&n_objects) {
        return Err(SynthError::BadObjectCount(n_objects));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let center = bounds.center();
    let phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let cameras: Vec<SceneCamera> = (0..n_views.max(1))
        .map(|j| {
            let theta = phase + std::f64::consts::TAU * j as f64 / n_views.max(1) as f64;
            let position = center.add(Vec3::new(
                RING_RADIUS * theta.cos(),
                0.0,
                RING_RADIUS * theta.sin(),
            ));
            // Level look-at: forward is horizontal, down is exactly world +y.
            let forward = center.sub(position).normalized().expect("ring radius > 0");
            let down = Vec3::Y;
            let right = down.cross(forward);
            let rotation = Mat3::from_rows(right, down, forward);
            let translation = rotation.mul_vec(position).scale(-1.0);
            SceneCamera {
                view_id: format!("view{j}"),
                width: IMAGE_SIZE,
                height: IMAGE_SIZE,
                intrinsics: CameraIntrinsics::new(
                    FOCAL,
                    FOCAL,
                    IMAGE_SIZE as f64 / 2.0,
                    IMAGE_SIZE as f64 / 2.0,
                ),
                pose: Pose::new(rotation, translation),
            }
        })
        .collect();

    let mut names: Vec<&str> = VOCABULARY.to_vec();
    names.shuffle(&mut rng);

    let mut objects: Vec<SyntheticObject> = Vec::with_capacity(n_objects);
    let mut attempts = 0usize;
    while objects.len() < n_objects {
        attempts += 1;
        if attempts > PLACEMENT_ATTEMPTS {
            return Err(SynthError::Placement { attempts, n_objects });
        }
        let shape = if rng.gen_bool(0.5) {
            Shape::Box {
                half_sizes: Vec3::new(
                    rng.gen_range(0.06..0.13),
                    rng.gen_range(0.06..0.13),
                    rng.gen_range(0.06..0.13),
                ),
            }
        } else {
            Shape::Sphere { radius: rng.gen_range(0.07..0.13) }
        };
        let h = shape.half_extents();
        let center_pos = Vec3::new(
            rng.gen_range(bounds.min.x + h.x..bounds.max.x - h.x),
            rng.gen_range(bounds.min.y + h.y..bounds.max.y - h.y),
            rng.gen_range(bounds.min.z + h.z..bounds.max.z - h.z),
        );
        let candidate_aabb = object_aabb(center_pos, &shape);
        let overlapping = objects.iter().any(|o| {
            aabb_separation(&candidate_aabb, &object_aabb(o.center, &o.shape)) < MIN_SEPARATION
        });
        if overlapping {
            continue;
        }
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let object = SyntheticObject {
            name: names[objects.len()].to_string(),
            shape,
            center: center_pos,
            front_dir: Vec3::new(phi.cos(), 0.0, phi.sin()),
        };
        if !visible_in_any_camera(&object, &cameras) {
            continue;
        }
        objects.push(object);
    }

    Ok(SyntheticScene { seed, objects, cameras, bounds })
}

/// Center-projection visibility with the object's radius as margin.
fn visible_in_any_camera(object: &SyntheticObject, cameras: &[SceneCamera]) -> bool {
    let radius = {
        let h = object.shape.half_extents();
        h.norm()
    };
    cameras.iter().any(|c| {
        let view = CameraView {
            view_id: c.view_id.clone(),
            width: c.width,
            height: c.height,
            intrinsics: c.intrinsics,
            pose: c.pose,
            depth: Vec::new(),
        };
        match project_point(&view, object.center) {
            Ok((u, v, z)) => {
                let margin = radius * c.intrinsics.fx / z + 2.0;
                u >= margin
                    && v >= margin
                    && u <= c.width as f64 - margin
                    && v <= c.height as f64 - margin
            }
            Err(_) => false,
        }
    })
}

/// Builds the exact reference frame from ground truth: true centroids, the
/// stored facing direction (intrinsic) or the true center difference
/// (constraint), and the first camera's down axis as the hint chain.
pub fn oracle_frame(scene: &SyntheticScene, spec: &FrameSpec) -> Result<ReferenceFrame, SynthError> {
    match spec.kind {
        FrameKind::Camera => {
            let camera = &scene.cameras[0];
            Ok(ReferenceFrame {
                origin: camera.pose.camera_center(),
                rotation: camera.pose.rotation.transpose(),
            })
        }
        FrameKind::Ego => {
            let ref_name = spec
                .ref_object
                .as_deref()
                .ok_or_else(|| SynthError::BadFrameSpec("ego frame without reference".into()))?;
            let reference = scene.object(ref_name)?;
            let front = match spec.front_source.as_ref() {
                Some(FrontSource::Intrinsic { .. }) | None => reference.front_dir,
                Some(FrontSource::Constraint { aux_object }) => {
                    let aux = scene.object(aux_object)?;
                    forward_from_constraint(reference.center, aux.center)
                        .map_err(|e| SynthError::BadFrameSpec(e.to_string()))?
                }
            };
            let down_hint = scene.cameras[0].pose.rotation.row(1);
            let fallback = scene.cameras[0].pose.rotation.row(2);
            build_frame_with_hints(reference.center, front, &[down_hint, fallback])
                .map_err(|e| SynthError::BadFrameSpec(e.to_string()))
        }
    }
}

/// Answers a relation question from ground truth alone, bypassing the
/// pipeline. `Err(AmbiguousTie)` surfaces ties for the generator to resample.
pub fn oracle_relation(
    scene: &SyntheticScene,
    spec: &FrameSpec,
    question: &RelationQuestion,
    tie_margin: f64,
) -> Result<RelationVerdict, SynthError> {
    let frame = oracle_frame(scene, spec)?;
    let local = |name: &str| -> Result<Vec3, SynthError> {
        Ok(transform_point(&frame, scene.object(name)?.center))
    };
    let target = local(&question.target)?;
    let base = match question.relative_to.as_deref() {
        Some(name) => Some(local(name)?),
        None => None,
    };
    let second = match question.second_target.as_deref() {
        Some(name) => Some(local(name)?),
        None => None,
    };
    Ok(evaluate_relation(&question.kind, target, base, second, tie_margin)?)
}

/// Task families mirroring the benchmark taxonomy. All but `CamRelDir` are
/// allocentric (they adopt an object's frame).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionFamily {
    PsnRelDir,
    CamRelDir,
    OrientFront,
    OrientLeft,
    OrientTwd,
    LocCloser,
}

impl QuestionFamily {
    pub const ALL: [QuestionFamily; 6] = [
        QuestionFamily::PsnRelDir,
        QuestionFamily::CamRelDir,
        QuestionFamily::OrientFront,
        QuestionFamily::OrientLeft,
        QuestionFamily::OrientTwd,
        QuestionFamily::LocCloser,
    ];

    pub const ALLOCENTRIC: [QuestionFamily; 5] = [
        QuestionFamily::PsnRelDir,
        QuestionFamily::OrientFront,
        QuestionFamily::OrientLeft,
        QuestionFamily::OrientTwd,
        QuestionFamily::LocCloser,
    ];

    pub fn is_allocentric(&self) -> bool {
        !matches!(self, QuestionFamily::CamRelDir)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionFamily::PsnRelDir => "psn_rel_dir",
            QuestionFamily::CamRelDir => "cam_rel_dir",
            QuestionFamily::OrientFront => "orient_front",
            QuestionFamily::OrientLeft => "orient_left",
            QuestionFamily::OrientTwd => "orient_twd",
            QuestionFamily::LocCloser => "loc_closer",
        }
    }

    pub fn parse(text: &str) -> Option<QuestionFamily> {
        Self::ALL.iter().copied().find(|f| f.as_str() == text)
    }
}

/// One generated multiple-choice question with its gold answer and the frame
/// it implies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedQuestion {
    pub id: String,
    pub text: String,
    pub family: QuestionFamily,
    pub options: Vec<String>,
    pub gold: usize,
    pub frame_spec: FrameSpec,
}

impl GeneratedQuestion {
    pub fn gold_text(&self) -> &str {
        &self.options[self.gold]
    }
}

/// Samples `n` questions over the scene, resampling configurations whose
/// oracle answer is a tie. Gold answers satisfy the oracle by construction
/// and are asserted anyway.
pub fn generate_questions(
    scene: &SyntheticScene,
    seed: u64,
    n: usize,
    families: &[QuestionFamily],
) -> Result<Vec<GeneratedQuestion>, SynthError> {
    assert!(!families.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut questions = Vec::with_capacity(n);
    let mut consecutive_failures = 0usize;
    while questions.len() < n {
        if consecutive_failures >= QUESTION_ATTEMPTS {
            return Err(SynthError::QuestionSampling { attempts: consecutive_failures });
        }
        let family = families[rng.gen_range(0..families.len())];
        match sample_question(scene, family, questions.len(), &mut rng)? {
            Some(q) => {
                debug_assert_eq!(
                    verdict_text(
                        &oracle_relation(
                            scene,
                            &q.frame_spec,
                            &parse_for_oracle(&q),
                            ORACLE_TIE_MARGIN
                        )
                        .expect("gold questions are tie-free"),
                        &parse_for_oracle(&q),
                    ),
                    q.gold_text()
                );
                questions.push(q);
                consecutive_failures = 0;
            }
            None => consecutive_failures += 1,
        }
    }
    Ok(questions)
}

/// The relation a generated question encodes, reconstructed for the oracle.
fn parse_for_oracle(q: &GeneratedQuestion) -> RelationQuestion {
    crate::question::parse_relation_question(&q.text)
        .expect("generated templates always parse")
}

fn verdict_text(verdict: &RelationVerdict, question: &RelationQuestion) -> String {
    match verdict {
        RelationVerdict::First => question.target.clone(),
        RelationVerdict::Second => question
            .second_target
            .clone()
            .expect("closer verdicts carry a second object"),
        other => other.label().to_string(),
    }
}

fn sample_question(
    scene: &SyntheticScene,
    family: QuestionFamily,
    index: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Option<GeneratedQuestion>, SynthError> {
    let n = scene.objects.len();
    let pick = |rng: &mut ChaCha8Rng, exclude: &[usize]| loop {
        let i = rng.gen_range(0..n);
        if !exclude.contains(&i) {
            return i;
        }
    };

    let ref_idx = pick(rng, &[]);
    let target_idx = pick(rng, &[ref_idx]);
    let ref_name = scene.objects[ref_idx].name.clone();
    let target = scene.objects[target_idx].name.clone();
    let first_view = scene.cameras[0].view_id.clone();

    let (text, frame_spec, relation, answers): (String, FrameSpec, RelationQuestion, Vec<String>) =
        match family {
            QuestionFamily::PsnRelDir => {
                // Half the questions anchor the frame on an auxiliary
                // object (external constraint) when a third object exists.
                let use_constraint = n >= 3 && rng.gen_bool(0.5);
                if use_constraint {
                    let aux_idx = pick(rng, &[ref_idx, target_idx]);
                    let aux = scene.objects[aux_idx].name.clone();
                    (
                        format!(
                            "If I stand at the {ref_name} facing the {aux}, is the {target} on my left or my right?"
                        ),
                        FrameSpec::ego(&ref_name, FrontSource::Constraint { aux_object: aux }),
                        RelationQuestion {
                            kind: RelationKind::LeftRight,
                            target: target.clone(),
                            relative_to: None,
                            second_target: None,
                        },
                        vec!["left".to_string(), "right".to_string()],
                    )
                } else {
                    (
                        format!(
                            "From the perspective of the {ref_name}, is the {target} on the left or the right?"
                        ),
                        FrameSpec::ego(&ref_name, FrontSource::Intrinsic { view_id: first_view }),
                        RelationQuestion {
                            kind: RelationKind::LeftRight,
                            target: target.clone(),
                            relative_to: None,
                            second_target: None,
                        },
                        vec!["left".to_string(), "right".to_string()],
                    )
                }
            }
            QuestionFamily::CamRelDir => (
                format!(
                    "From the camera perspective, is the {target} to the left or the right of the {ref_name}?"
                ),
                FrameSpec::camera(),
                RelationQuestion {
                    kind: RelationKind::LeftRight,
                    target: target.clone(),
                    relative_to: Some(ref_name.clone()),
                    second_target: None,
                },
                vec!["left".to_string(), "right".to_string()],
            ),
            QuestionFamily::OrientFront => (
                format!(
                    "From the {ref_name}'s perspective, is the {target} in front of it or behind it?"
                ),
                FrameSpec::ego(&ref_name, FrontSource::Intrinsic { view_id: first_view }),
                RelationQuestion {
                    kind: RelationKind::FrontBehind,
                    target: target.clone(),
                    relative_to: None,
                    second_target: None,
                },
                vec!["in front".to_string(), "behind".to_string()],
            ),
            QuestionFamily::OrientLeft => (
                format!(
                    "If I stand at the {ref_name}'s position facing where it is facing, is the {target} on my left or my right?"
                ),
                FrameSpec::ego(&ref_name, FrontSource::Intrinsic { view_id: first_view }),
                RelationQuestion {
                    kind: RelationKind::LeftRight,
                    target: target.clone(),
                    relative_to: None,
                    second_target: None,
                },
                vec!["left".to_string(), "right".to_string()],
            ),
            QuestionFamily::OrientTwd => (
                format!(
                    "From the perspective of the {ref_name}, is it facing toward the {target}?"
                ),
                FrameSpec::ego(&ref_name, FrontSource::Intrinsic { view_id: first_view }),
                RelationQuestion {
                    kind: RelationKind::FacingToward,
                    target: target.clone(),
                    relative_to: None,
                    second_target: None,
                },
                vec!["yes".to_string(), "no".to_string()],
            ),
            QuestionFamily::LocCloser => {
                if n < 3 {
                    return Ok(None);
                }
                let second_idx = pick(rng, &[ref_idx, target_idx]);
                let second = scene.objects[second_idx].name.clone();
                (
                    format!(
                        "From the perspective of the {ref_name}, which is closer to it: the {target} or the {second}?"
                    ),
                    FrameSpec::ego(&ref_name, FrontSource::Intrinsic { view_id: first_view }),
                    RelationQuestion {
                        kind: RelationKind::Closer,
                        target: target.clone(),
                        relative_to: None,
                        second_target: Some(second.clone()),
                    },
                    vec![target.clone(), second],
                )
            }
        };

    let verdict = match oracle_relation(scene, &frame_spec, &relation, ORACLE_TIE_MARGIN) {
        Ok(v) => v,
        Err(SynthError::Question(QuestionError::AmbiguousTie { .. })) => return Ok(None),
        Err(e) => return Err(e),
    };
    let answer = verdict_text(&verdict, &relation);

    let mut options = answers;
    options.shuffle(rng);
    let gold = options
        .iter()
        .position(|o| *o == answer)
        .expect("gold answer among options");
    Ok(Some(GeneratedQuestion {
        id: format!("q{index:04}"),
        text,
        family,
        options,
        gold,
        frame_spec,
    }))
}
