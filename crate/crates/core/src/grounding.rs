//! Iterative coarse-to-fine semantic grounding with safety backtracking, and
//! orientation estimation for intrinsic reference frames.
//!
//! Grounding peels modifiers off a description one layer at a time until the
//! detector returns more than one candidate or the description cannot be
//! simplified further. If a simplification step ever *reduces* the detection
//! count, the previous (better) pool is adopted instead. The final pool is
//! re-ranked by ITM score against the original detailed description.
//!
//! Orientation estimation maps 8-way facing labels to camera-frame unit
//! vectors, resolves disagreements between prompt strategies by majority or
//! circular mean, and lifts the winner into world space through the view's
//! rotation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::consensus::Mask;
use crate::experts::{
    Detection, Detector, ExpertError, ImageCrop, ImageRef, ItmScorer, Simplifier, Strategy,
    Verifier,
};
use crate::geometry::{rotate_direction_to_world, CameraView, GeometryError, Pose, Vec3};

/// Hard cap on relaxation iterations, guarding against simplifiers that
/// cycle without reaching a fixed point.
const MAX_RELAXATIONS: usize = 64;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("no candidates at any relaxation level for {description:?}")]
    NoCandidates {
        description: String,
        trace: RelaxationTrace,
    },
    #[error("verifier rejected every candidate for {description:?}")]
    AllRejected {
        description: String,
        trace: RelaxationTrace,
    },
    #[error("empty object description")]
    EmptyDescription,
    #[error(transparent)]
    Expert(#[from] ExpertError),
}

/// Why the relaxation loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalReason {
    FoundCandidates,
    CannotSimplify,
    Backtracked,
}

/// Detection history of one grounding run, for debugging and tests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationTrace {
    /// `(prompt_text, detection_count)` per loop iteration.
    pub steps: Vec<(String, usize)>,
    pub terminal_reason: TerminalReason,
}

/// A grounded object: the winning candidate plus its score and trace.
#[derive(Debug, Clone)]
pub struct Grounded {
    pub mask: Mask,
    pub bbox: (f64, f64, f64, f64),
    pub itm_score: f64,
    pub trace: RelaxationTrace,
}

/// The expert handles grounding needs. The verifier is optional and off by
/// default.
pub struct GroundingExperts<'a> {
    pub detector: &'a dyn Detector,
    pub simplifier: &'a dyn Simplifier,
    pub itm: &'a dyn ItmScorer,
    pub verifier: Option<&'a dyn Verifier>,
}

/// Runs the full relaxation loop and fine-grained selection for one object
/// in one image.
///
/// A detector or simplifier answering "not scripted" is treated as zero
/// detections / an unsimplifiable description, so unscripted objects fail
/// with a grounding error (carrying the trace) rather than an expert error.
/// Transport and protocol failures propagate.
pub fn ground_object(
    experts: &GroundingExperts<'_>,
    image: &ImageRef,
    description: &str,
) -> Result<Grounded, GroundingError> {
    if description.trim().is_empty() {
        return Err(GroundingError::EmptyDescription);
    }

    // Phase 1: iterative semantic relaxation.
    let mut d_curr = description.to_string();
    let mut history: Vec<Vec<Detection>> = Vec::new();
    let mut steps: Vec<(String, usize)> = Vec::new();
    let (pool, terminal_reason) = loop {
        let detections = match experts.detector.detect(image, &d_curr) {
            Ok(d) => d,
            Err(ExpertError::NotScripted { .. }) => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        steps.push((d_curr.clone(), detections.len()));
        history.push(detections);

        // Safety backtracking: revert if simplification hurt recall.
        let n = history.len();
        if n > 1 && history[n - 1].len() < history[n - 2].len() {
            break (history[n - 2].clone(), TerminalReason::Backtracked);
        }

        let d_next = match experts.simplifier.simplify(&d_curr) {
            Ok(t) => t,
            Err(ExpertError::NotScripted { .. }) => d_curr.clone(),
            Err(e) => return Err(e.into()),
        };
        if history[n - 1].len() > 1 {
            break (history[n - 1].clone(), TerminalReason::FoundCandidates);
        }
        if d_next == d_curr || steps.len() >= MAX_RELAXATIONS {
            break (history[n - 1].clone(), TerminalReason::CannotSimplify);
        }
        d_curr = d_next;
    };

    let trace = RelaxationTrace { steps, terminal_reason };
    if pool.is_empty() {
        return Err(GroundingError::NoCandidates {
            description: description.to_string(),
            trace,
        });
    }

    // Phase 2: fine-grained selection against the ORIGINAL description.
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(pool.len());
    for (idx, candidate) in pool.iter().enumerate() {
        let crop = ImageCrop::new(image.clone(), candidate.bbox);
        let score = experts.itm.itm_score(&crop, description)?;
        scored.push((idx, score));
    }
    // Descending score; ties keep the lower candidate index first.
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    for &(idx, score) in &scored {
        let candidate = &pool[idx];
        if let Some(verifier) = experts.verifier {
            let crop = ImageCrop::new(image.clone(), candidate.bbox);
            if !verifier.verify(&crop, description)? {
                continue;
            }
        }
        return Ok(Grounded {
            mask: candidate.mask.clone(),
            bbox: candidate.bbox,
            itm_score: score,
            trace,
        });
    }
    Err(GroundingError::AllRejected {
        description: description.to_string(),
        trace,
    })
}

/// The eight facing labels, defined relative to the camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation8 {
    Front,
    FrontRight,
    Right,
    BackRight,
    Back,
    BackLeft,
    Left,
    FrontLeft,
}

impl Orientation8 {
    pub const ALL: [Orientation8; 8] = [
        Orientation8::Front,
        Orientation8::FrontRight,
        Orientation8::Right,
        Orientation8::BackRight,
        Orientation8::Back,
        Orientation8::BackLeft,
        Orientation8::Left,
        Orientation8::FrontLeft,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Orientation8::Front => "front",
            Orientation8::FrontRight => "front-right",
            Orientation8::Right => "right",
            Orientation8::BackRight => "back-right",
            Orientation8::Back => "back",
            Orientation8::BackLeft => "back-left",
            Orientation8::Left => "left",
            Orientation8::FrontLeft => "front-left",
        }
    }

    /// Case-insensitive parse accepting both axis orders ("left-front" and
    /// "front-left" are synonyms), ignoring surrounding whitespace.
    pub fn parse(text: &str) -> Option<Orientation8> {
        match text.trim().to_ascii_lowercase().as_str() {
            "front" => Some(Orientation8::Front),
            "front-right" | "right-front" => Some(Orientation8::FrontRight),
            "right" => Some(Orientation8::Right),
            "back-right" | "right-back" => Some(Orientation8::BackRight),
            "back" => Some(Orientation8::Back),
            "back-left" | "left-back" => Some(Orientation8::BackLeft),
            "left" => Some(Orientation8::Left),
            "front-left" | "left-front" => Some(Orientation8::FrontLeft),
            _ => None,
        }
    }
}

/// Maps a label to the unit direction the object's face points, in the
/// camera frame (x right, y down, z away from the camera). "front" means the
/// face points toward the camera, so its vector is (0, 0, -1); lateral
/// labels follow image left/right; the y component is always zero.
pub fn orientation_to_camera_vector(label: Orientation8) -> Vec3 {
    let d = std::f64::consts::FRAC_1_SQRT_2;
    match label {
        Orientation8::Front => Vec3::new(0.0, 0.0, -1.0),
        Orientation8::FrontRight => Vec3::new(d, 0.0, -d),
        Orientation8::Right => Vec3::new(1.0, 0.0, 0.0),
        Orientation8::BackRight => Vec3::new(d, 0.0, d),
        Orientation8::Back => Vec3::new(0.0, 0.0, 1.0),
        Orientation8::BackLeft => Vec3::new(-d, 0.0, d),
        Orientation8::Left => Vec3::new(-1.0, 0.0, 0.0),
        Orientation8::FrontLeft => Vec3::new(-d, 0.0, -d),
    }
}

/// An ensemble of per-strategy answers and the resolved winner.
#[derive(Debug, Clone)]
pub struct OrientationVote {
    pub responses: Vec<(Strategy, Orientation8)>,
    pub winner: Orientation8,
}

/// Resolves an ensemble: strict majority wins; otherwise the circular mean
/// of the response vectors snaps to the nearest label; an exactly zero mean
/// falls back to strategy priority C > B > A.
pub fn vote_orientation(responses: &[(Strategy, Orientation8)]) -> OrientationVote {
    assert!(!responses.is_empty());
    let mut counts: Vec<(Orientation8, usize)> = Vec::new();
    for &(_, label) in responses {
        match counts.iter_mut().find(|(l, _)| *l == label) {
            Some((_, c)) => *c += 1,
            None => counts.push((label, 1)),
        }
    }
    if let Some(&(label, count)) = counts.iter().max_by_key(|&&(_, c)| c) {
        if count * 2 > responses.len() {
            return OrientationVote {
                responses: responses.to_vec(),
                winner: label,
            };
        }
    }

    // Accumulate per label in canonical order so the mean is bit-identical
    // under any permutation of the responses.
    let mean = Orientation8::ALL.iter().fold(Vec3::ZERO, |acc, &label| {
        let count = counts
            .iter()
            .find(|(l, _)| *l == label)
            .map_or(0, |(_, c)| *c);
        acc.add(orientation_to_camera_vector(label).scale(count as f64))
    });
    let winner = if mean.norm() > 1e-9 {
        *Orientation8::ALL
            .iter()
            .max_by(|a, b| {
                orientation_to_camera_vector(**a)
                    .dot(mean)
                    .total_cmp(&orientation_to_camera_vector(**b).dot(mean))
            })
            .expect("non-empty label set")
    } else {
        responses
            .iter()
            .max_by_key(|(s, _)| s.priority())
            .map(|&(_, l)| l)
            .expect("non-empty responses")
    };
    OrientationVote {
        responses: responses.to_vec(),
        winner,
    }
}

/// Lifts an 8-way facing label observed in `view` into a world-frame unit
/// vector via the view's rotation.
pub fn estimate_front_world(view: &CameraView, label: Orientation8) -> Vec3 {
    rotate_direction_to_world(&view.pose, orientation_to_camera_vector(label))
        .expect("label vectors are unit length")
}

/// Unquantized variant for gaze-style estimators that deliver a camera-frame
/// direction directly, bypassing the 8-way labels.
pub fn estimate_front_world_from_gaze(
    pose: &Pose,
    gaze_cam: Vec3,
) -> Result<Vec3, GeometryError> {
    rotate_direction_to_world(pose, gaze_cam)
}
