//! Camera models, rigid transforms, and reference-frame construction.
//!
//! Everything here is plain `f64` math over a fixed set of conventions:
//!
//! * World and camera frames follow OpenCV's right-hand rule: `+x` right,
//!   `+y` down, `+z` forward.
//! * A [`Pose`] is always **world-to-camera**: `p_cam = R * p_world + t`.
//!   The camera center in world coordinates is therefore `-Rᵀ t`.
//! * A [`ReferenceFrame`] stores its rotation with columns
//!   `[v_right, v_down, v_front]`; transforming a world point into the frame
//!   is `Rᵀ (p - origin)`, so `x > 0` means "right of the reference",
//!   `y > 0` "below", `z > 0` "in front".
//!
//! All functions are pure and safe to call concurrently.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Cosine of 1 degree; hints closer to the front axis than this are
/// considered parallel and trigger the fallback chain.
const PARALLEL_HINT_COS: f64 = 0.999_847_695_156_391_3;

/// Minimum centroid separation for a constraint-derived forward axis.
pub const EPSILON_DEGENERATE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside {width}x{height} view")]
    OutOfBounds { u: i64, v: i64, width: u32, height: u32 },
    #[error("invalid depth {depth} at pixel ({u}, {v})")]
    InvalidDepth { u: u32, v: u32, depth: f64 },
    #[error("point behind camera (z_cam = {z_cam})")]
    BehindCamera { z_cam: f64 },
    #[error("zero-length direction")]
    ZeroDirection,
    #[error("degenerate frame: {reason}")]
    DegenerateFrame { reason: String },
}

/// A 3-vector in meters, or a unitless direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3::new(0.0, 0.0, 0.0);
    pub const X: Vec3 = Vec3::new(1.0, 0.0, 0.0);
    pub const Y: Vec3 = Vec3::new(0.0, 1.0, 0.0);
    pub const Z: Vec3 = Vec3::new(0.0, 0.0, 1.0);

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }

    pub fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    pub fn dot(self, rhs: Vec3) -> f64 {
        self.x * rhs.x + self.y * rhs.y + self.z * rhs.z
    }

    pub fn cross(self, rhs: Vec3) -> Vec3 {
        Vec3::new(
            self.y * rhs.z - self.z * rhs.y,
            self.z * rhs.x - self.x * rhs.z,
            self.x * rhs.y - self.y * rhs.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn normalized(self) -> Result<Vec3, GeometryError> {
        let n = self.norm();
        if n <= 0.0 || !n.is_finite() {
            return Err(GeometryError::ZeroDirection);
        }
        Ok(self.scale(1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Vec3 {
        Vec3::new(a[0], a[1], a[2])
    }
}

/// A 3x3 matrix stored as three column vectors.
///
/// When used as a rotation the columns are orthonormal basis vectors and the
/// determinant is +1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat3 {
    pub cols: [Vec3; 3],
}

impl Mat3 {
    pub const IDENTITY: Mat3 = Mat3 {
        cols: [Vec3::X, Vec3::Y, Vec3::Z],
    };

    pub fn from_cols(c0: Vec3, c1: Vec3, c2: Vec3) -> Self {
        Self { cols: [c0, c1, c2] }
    }

    pub fn from_rows(r0: Vec3, r1: Vec3, r2: Vec3) -> Self {
        Self {
            cols: [
                Vec3::new(r0.x, r1.x, r2.x),
                Vec3::new(r0.y, r1.y, r2.y),
                Vec3::new(r0.z, r1.z, r2.z),
            ],
        }
    }

    pub fn col(&self, i: usize) -> Vec3 {
        self.cols[i]
    }

    pub fn row(&self, i: usize) -> Vec3 {
        match i {
            0 => Vec3::new(self.cols[0].x, self.cols[1].x, self.cols[2].x),
            1 => Vec3::new(self.cols[0].y, self.cols[1].y, self.cols[2].y),
            2 => Vec3::new(self.cols[0].z, self.cols[1].z, self.cols[2].z),
            _ => panic!("row index {i} out of range"),
        }
    }

    pub fn transpose(&self) -> Mat3 {
        Mat3::from_cols(self.row(0), self.row(1), self.row(2))
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        self.cols[0]
            .scale(v.x)
            .add(self.cols[1].scale(v.y))
            .add(self.cols[2].scale(v.z))
    }

    /// `Rᵀ v` without materializing the transpose.
    pub fn tr_mul_vec(&self, v: Vec3) -> Vec3 {
        Vec3::new(self.cols[0].dot(v), self.cols[1].dot(v), self.cols[2].dot(v))
    }

    pub fn mul_mat(&self, rhs: &Mat3) -> Mat3 {
        Mat3::from_cols(
            self.mul_vec(rhs.cols[0]),
            self.mul_vec(rhs.cols[1]),
            self.mul_vec(rhs.cols[2]),
        )
    }

    pub fn determinant(&self) -> f64 {
        self.cols[0].dot(self.cols[1].cross(self.cols[2]))
    }

    /// Max absolute entry of `RᵀR - I`; zero for a perfect rotation.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let g = self.cols[i].dot(self.cols[j]) - if i == j { 1.0 } else { 0.0 };
                worst = worst.max(g.abs());
            }
        }
        worst
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let r0 = self.row(0);
        let r1 = self.row(1);
        let r2 = self.row(2);
        [r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z]
    }

    pub fn from_row_major(m: [f64; 9]) -> Mat3 {
        Mat3::from_rows(
            Vec3::new(m[0], m[1], m[2]),
            Vec3::new(m[3], m[4], m[5]),
            Vec3::new(m[6], m[7], m[8]),
        )
    }
}

/// World-to-camera rigid transform: `p_cam = R * p_world + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Pose {
    pub const IDENTITY: Pose = Pose {
        rotation: Mat3::IDENTITY,
        translation: Vec3::ZERO,
    };

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn apply(&self, p_world: Vec3) -> Vec3 {
        self.rotation.mul_vec(p_world).add(self.translation)
    }

    pub fn apply_inverse(&self, p_cam: Vec3) -> Vec3 {
        self.rotation.tr_mul_vec(p_cam.sub(self.translation))
    }

    /// Camera center in world coordinates: `-Rᵀ t`.
    pub fn camera_center(&self) -> Vec3 {
        self.rotation.tr_mul_vec(self.translation).scale(-1.0)
    }

    /// Flattened 4x4 row-major homogeneous matrix, as stored in manifests.
    pub fn to_matrix4_row_major(&self) -> [f64; 16] {
        let m = self.rotation.to_row_major();
        [
            m[0], m[1], m[2], self.translation.x,
            m[3], m[4], m[5], self.translation.y,
            m[6], m[7], m[8], self.translation.z,
            0.0, 0.0, 0.0, 1.0,
        ]
    }

    pub fn from_matrix4_row_major(m: &[f64; 16]) -> Pose {
        Pose {
            rotation: Mat3::from_row_major([m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]]),
            translation: Vec3::new(m[3], m[7], m[11]),
        }
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Self {
        debug_assert!(fx > 0.0 && fy > 0.0);
        Self { fx, fy, cx, cy }
    }
}

/// One calibrated observation: intrinsics, world-to-camera pose, and a dense
/// metric depth map. Depth 0 marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub view_id: String,
    pub width: u32,
    pub height: u32,
    pub intrinsics: CameraIntrinsics,
    pub pose: Pose,
    /// Row-major `height * width` meters.
    pub depth: Vec<f32>,
}

impl CameraView {
    pub fn depth_at(&self, u: u32, v: u32) -> f64 {
        self.depth[v as usize * self.width as usize + u as usize] as f64
    }

    /// Camera axes expressed in world coordinates.
    pub fn axis_in_world(&self, axis_cam: Vec3) -> Vec3 {
        self.pose.rotation.tr_mul_vec(axis_cam)
    }
}

/// Origin plus orthonormal basis columns `[v_right, v_down, v_front]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    pub origin: Vec3,
    pub rotation: Mat3,
}

impl ReferenceFrame {
    pub fn right(&self) -> Vec3 {
        self.rotation.col(0)
    }

    pub fn down(&self) -> Vec3 {
        self.rotation.col(1)
    }

    pub fn front(&self) -> Vec3 {
        self.rotation.col(2)
    }

    /// Checks the rotation invariants at the stated tolerances.
    pub fn validate(&self) -> Result<(), GeometryError> {
        let defect = self.rotation.orthonormality_defect();
        if defect >= 1e-9 {
            return Err(GeometryError::DegenerateFrame {
                reason: format!("orthonormality defect {defect:.3e}"),
            });
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() >= 1e-9 {
            return Err(GeometryError::DegenerateFrame {
                reason: format!("determinant {det}"),
            });
        }
        let handed = self.down().cross(self.front()).sub(self.right()).norm();
        if handed >= 1e-9 {
            return Err(GeometryError::DegenerateFrame {
                reason: format!("handedness defect {handed:.3e}"),
            });
        }
        Ok(())
    }
}

/// Lifts pixel `(u, v)` with its stored depth into world coordinates:
/// `p_cam = z * K⁻¹ [u, v, 1]ᵀ`, then `p_world = Rᵀ (p_cam - t)`.
pub fn backproject_pixel(view: &CameraView, u: u32, v: u32) -> Result<Vec3, GeometryError> {
    if u >= view.width || v >= view.height {
        return Err(GeometryError::OutOfBounds {
            u: u as i64,
            v: v as i64,
            width: view.width,
            height: view.height,
        });
    }
    let z = view.depth_at(u, v);
    if z <= 0.0 || !z.is_finite() {
        return Err(GeometryError::InvalidDepth { u, v, depth: z });
    }
    let k = &view.intrinsics;
    let p_cam = Vec3::new(
        z * (u as f64 - k.cx) / k.fx,
        z * (v as f64 - k.cy) / k.fy,
        z,
    );
    Ok(view.pose.apply_inverse(p_cam))
}

/// Projects a world point to `(u, v, z_cam)`. Exact inverse of
/// [`backproject_pixel`] whenever the depth map holds `z_cam` at `(u, v)`.
pub fn project_point(view: &CameraView, p_world: Vec3) -> Result<(f64, f64, f64), GeometryError> {
    let p_cam = view.pose.apply(p_world);
    if p_cam.z <= 0.0 {
        return Err(GeometryError::BehindCamera { z_cam: p_cam.z });
    }
    let k = &view.intrinsics;
    let u = k.fx * p_cam.x / p_cam.z + k.cx;
    let v = k.fy * p_cam.y / p_cam.z + k.cy;
    Ok((u, v, p_cam.z))
}

/// Lifts a camera-frame direction into world space using the rotation part
/// only; translation never applies to directions. Returns a unit vector.
pub fn rotate_direction_to_world(pose: &Pose, v_cam: Vec3) -> Result<Vec3, GeometryError> {
    pose.rotation.tr_mul_vec(v_cam).normalized()
}

/// Forward axis from an external constraint: `normalize(c_aux - c_ref)`.
pub fn forward_from_constraint(c_ref: Vec3, c_aux: Vec3) -> Result<Vec3, GeometryError> {
    let d = c_aux.sub(c_ref);
    let n = d.norm();
    if !n.is_finite() || n <= EPSILON_DEGENERATE {
        return Err(GeometryError::DegenerateFrame {
            reason: format!("centroids coincide (separation {n:.3e} m)"),
        });
    }
    Ok(d.scale(1.0 / n))
}

/// Builds a frame from a forward axis and a down hint.
///
/// `v_front` is normalized and kept exact; `v_down` is the hint
/// Gram-Schmidt-orthogonalized against it, and `v_right = v_down x v_front`.
/// A hint within 1 degree of the front axis falls back to the world z-axis,
/// then the world y-axis (the camera axes under the canonical identity pose).
pub fn build_frame(
    origin: Vec3,
    v_front: Vec3,
    v_down_hint: Vec3,
) -> Result<ReferenceFrame, GeometryError> {
    build_frame_with_hints(origin, v_front, &[v_down_hint, Vec3::Z, Vec3::Y])
}

/// [`build_frame`] with an explicit fallback chain of down hints, tried in
/// order. Errors only when every hint is parallel to the front axis.
pub fn build_frame_with_hints(
    origin: Vec3,
    v_front: Vec3,
    hints: &[Vec3],
) -> Result<ReferenceFrame, GeometryError> {
    if !origin.is_finite() || !v_front.is_finite() {
        return Err(GeometryError::DegenerateFrame {
            reason: "non-finite frame input".to_string(),
        });
    }
    let front = v_front.normalized()?;
    for hint in hints {
        let Ok(hint) = hint.normalized() else { continue };
        if hint.dot(front).abs() > PARALLEL_HINT_COS {
            continue;
        }
        let down = hint
            .sub(front.scale(hint.dot(front)))
            .normalized()
            .expect("non-parallel hint has a nonzero rejection");
        let right = down.cross(front);
        let frame = ReferenceFrame {
            origin,
            rotation: Mat3::from_cols(right, down, front),
        };
        frame.validate()?;
        return Ok(frame);
    }
    Err(GeometryError::DegenerateFrame {
        reason: "all down hints parallel to the front axis".to_string(),
    })
}

/// Transforms world points into the frame: `Rᵀ (p - origin)` each.
pub fn transform_points(frame: &ReferenceFrame, points: &[Vec3]) -> Vec<Vec3> {
    points
        .iter()
        .map(|p| frame.rotation.tr_mul_vec(p.sub(frame.origin)))
        .collect()
}

pub fn transform_point(frame: &ReferenceFrame, point: Vec3) -> Vec3 {
    frame.rotation.tr_mul_vec(point.sub(frame.origin))
}

/// The canonical camera frame of a view: origin at the camera center, columns
/// the camera's x/y/z axes in world coordinates. Transforming through this
/// frame reproduces camera coordinates.
pub fn camera_frame(view: &CameraView) -> ReferenceFrame {
    ReferenceFrame {
        origin: view.pose.camera_center(),
        rotation: view.pose.rotation.transpose(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn view_with_depth(
        intrinsics: CameraIntrinsics,
        pose: Pose,
        width: u32,
        height: u32,
        fill: f32,
    ) -> CameraView {
        CameraView {
            view_id: "v".to_string(),
            width,
            height,
            intrinsics,
            pose,
            depth: vec![fill; (width * height) as usize],
        }
    }

    fn assert_vec_close(a: Vec3, b: Vec3, tol: f64) {
        assert!(
            a.sub(b).norm() < tol,
            "expected {b:?}, got {a:?} (|diff| = {})",
            a.sub(b).norm()
        );
    }

    /// Rotation mapping world +x onto camera +z (90 degrees about world y,
    /// with y fixed). Rows are the camera axes in world coordinates.
    fn pose_x_to_z() -> Pose {
        Pose::new(
            Mat3::from_rows(Vec3::new(0.0, 0.0, -1.0), Vec3::Y, Vec3::X),
            Vec3::ZERO,
        )
    }

    #[test]
    fn backproject_principal_ray_identity_pose() {
        let view = view_with_depth(
            CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0),
            Pose::IDENTITY,
            4,
            4,
            2.0,
        );
        let p = backproject_pixel(&view, 0, 0).unwrap();
        assert_vec_close(p, Vec3::new(0.0, 0.0, 2.0), 1e-12);
    }

    #[test]
    fn backproject_principal_point_maps_to_optical_axis() {
        let view = view_with_depth(
            CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            Pose::IDENTITY,
            640,
            480,
            1.5,
        );
        let p = backproject_pixel(&view, 320, 240).unwrap();
        assert_vec_close(p, Vec3::new(0.0, 0.0, 1.5), 1e-12);
    }

    #[test]
    fn backproject_translated_pose() {
        // Oracle: p_cam = (2*(820-320)/500, 0, 2) = (2, 0, 2);
        // p_world = Rt(p_cam - t) = (2, 0, 2) - (0, 0, -1) = (2, 0, 3).
        let pose = Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, -1.0));
        let view = view_with_depth(
            CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            pose,
            1000,
            480,
            2.0,
        );
        let p = backproject_pixel(&view, 820, 240).unwrap();
        assert_vec_close(p, Vec3::new(2.0, 0.0, 3.0), 1e-12);
        // Cross-check with the forward projection.
        let (u, v, z) = project_point(&view, p).unwrap();
        assert!((u - 820.0).abs() < 1e-9 && (v - 240.0).abs() < 1e-9 && (z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn backproject_rejects_invalid_depth_and_out_of_bounds() {
        let mut view = view_with_depth(
            CameraIntrinsics::new(100.0, 100.0, 2.0, 2.0),
            Pose::IDENTITY,
            4,
            4,
            1.0,
        );
        view.depth[5] = 0.0;
        assert!(matches!(
            backproject_pixel(&view, 1, 1),
            Err(GeometryError::InvalidDepth { .. })
        ));
        assert!(matches!(
            backproject_pixel(&view, 4, 0),
            Err(GeometryError::OutOfBounds { .. })
        ));
    }

    #[test]
    fn project_optical_axis_hits_principal_point() {
        let view = view_with_depth(
            CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            Pose::IDENTITY,
            640,
            480,
            0.0,
        );
        let (u, v, z) = project_point(&view, Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert!((u - 320.0).abs() < 1e-12 && (v - 240.0).abs() < 1e-12 && (z - 2.0).abs() < 1e-12);
    }

    #[test]
    fn project_behind_camera_errors() {
        let view = view_with_depth(
            CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0),
            Pose::IDENTITY,
            640,
            480,
            0.0,
        );
        assert!(matches!(
            project_point(&view, Vec3::new(0.0, 0.0, -1.0)),
            Err(GeometryError::BehindCamera { .. })
        ));
    }

    #[test]
    fn rotate_direction_identity() {
        let d = rotate_direction_to_world(&Pose::IDENTITY, Vec3::new(0.0, 0.0, -1.0)).unwrap();
        assert_vec_close(d, Vec3::new(0.0, 0.0, -1.0), 1e-12);
    }

    #[test]
    fn rotate_direction_through_quarter_turn() {
        // Oracle: hand-multiplied 90-degree rotation; camera +z lifts to world +x.
        let d = rotate_direction_to_world(&pose_x_to_z(), Vec3::Z).unwrap();
        assert_vec_close(d, Vec3::X, 1e-12);
    }

    #[test]
    fn rotate_direction_rejects_zero() {
        assert!(matches!(
            rotate_direction_to_world(&Pose::IDENTITY, Vec3::ZERO),
            Err(GeometryError::ZeroDirection)
        ));
    }

    #[test]
    fn forward_from_constraint_normalizes() {
        let f = forward_from_constraint(Vec3::ZERO, Vec3::new(0.0, 0.0, 5.0)).unwrap();
        assert_vec_close(f, Vec3::Z, 1e-12);
        let f = forward_from_constraint(Vec3::ZERO, Vec3::new(3.0, 0.0, 4.0)).unwrap();
        assert_vec_close(f, Vec3::new(0.6, 0.0, 0.8), 1e-12);
    }

    #[test]
    fn forward_from_constraint_rejects_coincident() {
        let c = Vec3::new(1.0, 2.0, 3.0);
        assert!(matches!(
            forward_from_constraint(c, c),
            Err(GeometryError::DegenerateFrame { .. })
        ));
    }

    #[test]
    fn build_frame_canonical_axes_is_identity() {
        let f = build_frame(Vec3::ZERO, Vec3::Z, Vec3::Y).unwrap();
        assert!(f.rotation.orthonormality_defect() < 1e-15);
        assert_vec_close(f.right(), Vec3::X, 1e-15);
        assert_vec_close(f.down(), Vec3::Y, 1e-15);
        assert_vec_close(f.front(), Vec3::Z, 1e-15);
    }

    #[test]
    fn build_frame_quarter_turn() {
        // Oracle: right = down x front = (0,1,0) x (1,0,0) = (0,0,-1).
        let f = build_frame(Vec3::ZERO, Vec3::X, Vec3::Y).unwrap();
        assert_vec_close(f.right(), Vec3::new(0.0, 0.0, -1.0), 1e-12);
        assert_vec_close(f.down(), Vec3::Y, 1e-12);
        assert_vec_close(f.front(), Vec3::X, 1e-12);
        let local = transform_point(&f, Vec3::new(2.0, 0.0, 0.0));
        assert_vec_close(local, Vec3::new(0.0, 0.0, 2.0), 1e-12);
        assert!(f.rotation.orthonormality_defect() < 1e-12);
    }

    #[test]
    fn build_frame_parallel_hint_engages_fallback() {
        let f = build_frame(Vec3::ZERO, Vec3::Y, Vec3::Y).unwrap();
        assert!(f.rotation.to_row_major().iter().all(|x| x.is_finite()));
        assert_vec_close(f.front(), Vec3::Y, 1e-15);
        f.validate().unwrap();
    }

    #[test]
    fn build_frame_keeps_front_exact() {
        let front = Vec3::new(0.3, -0.2, 0.93).normalized().unwrap();
        let f = build_frame(Vec3::ZERO, front.scale(4.2), Vec3::Y).unwrap();
        assert!(f.front().dot(front) > 1.0 - 1e-12);
    }

    #[test]
    fn transform_points_origin_and_front() {
        let f = ReferenceFrame {
            origin: Vec3::new(1.0, 1.0, 1.0),
            rotation: Mat3::IDENTITY,
        };
        assert_vec_close(transform_point(&f, Vec3::new(1.0, 1.0, 1.0)), Vec3::ZERO, 1e-15);
        let f = ReferenceFrame {
            origin: Vec3::ZERO,
            rotation: Mat3::IDENTITY,
        };
        assert_vec_close(
            transform_point(&f, Vec3::new(0.0, 0.0, 3.0)),
            Vec3::new(0.0, 0.0, 3.0),
            1e-15,
        );
    }

    #[test]
    fn camera_frame_identity_and_translation() {
        let view = view_with_depth(
            CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0),
            Pose::IDENTITY,
            2,
            2,
            1.0,
        );
        let f = camera_frame(&view);
        assert_vec_close(f.origin, Vec3::ZERO, 1e-15);
        assert_vec_close(f.right(), Vec3::X, 1e-15);

        // Oracle: numerically inverted 4x4 of a pure translation.
        let view = view_with_depth(
            CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0),
            Pose::new(Mat3::IDENTITY, Vec3::new(0.0, 0.0, -2.0)),
            2,
            2,
            1.0,
        );
        assert_vec_close(camera_frame(&view).origin, Vec3::new(0.0, 0.0, 2.0), 1e-15);
    }

    #[test]
    fn camera_frame_reproduces_camera_coordinates() {
        // Brute-force equality for a rotated + translated pose.
        let pose = Pose::new(pose_x_to_z().rotation, Vec3::new(0.4, -0.7, 2.0));
        let view = view_with_depth(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0), pose, 2, 2, 1.0);
        let frame = camera_frame(&view);
        for p in [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 2.0, 3.0),
            Vec3::new(-4.0, 0.5, -6.0),
        ] {
            assert_vec_close(transform_point(&frame, p), pose.apply(p), 1e-12);
        }
    }

    #[test]
    fn pose_matrix_round_trip() {
        let pose = Pose::new(pose_x_to_z().rotation, Vec3::new(0.1, 0.2, 0.3));
        let m = pose.to_matrix4_row_major();
        let back = Pose::from_matrix4_row_major(&m);
        assert_eq!(pose, back);
    }
}
