//! Shared test helpers: a quaternion-parameterized frame oracle independent
//! of the matrix implementation, plus deterministic random generators.

#![allow(dead_code)]

use alloframe::geometry::{Mat3, Pose, Vec3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Unit quaternion (w, x, y, z).
#[derive(Debug, Clone, Copy)]
pub struct Quat {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quat {
    pub const IDENTITY: Quat = Quat { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quat {
        let n = axis.norm();
        if n < 1e-300 {
            return Quat::IDENTITY;
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let u = axis.scale(1.0 / n);
        Quat { w: c, x: s * u.x, y: s * u.y, z: s * u.z }
    }

    pub fn conjugate(self) -> Quat {
        Quat { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn mul(self, r: Quat) -> Quat {
        Quat {
            w: self.w * r.w - self.x * r.x - self.y * r.y - self.z * r.z,
            x: self.w * r.x + self.x * r.w + self.y * r.z - self.z * r.y,
            y: self.w * r.y - self.x * r.z + self.y * r.w + self.z * r.x,
            z: self.w * r.z + self.x * r.y - self.y * r.x + self.z * r.w,
        }
    }

    /// Rotates a vector: `q v q*`.
    pub fn rotate(self, v: Vec3) -> Vec3 {
        let qv = Quat { w: 0.0, x: v.x, y: v.y, z: v.z };
        let r = self.mul(qv).mul(self.conjugate());
        Vec3::new(r.x, r.y, r.z)
    }

    pub fn normalized(self) -> Quat {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Quat { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }
}

/// Quaternion aligning the canonical +z axis onto `front` (unit).
fn align_z_to(front: Vec3) -> Quat {
    let z = Vec3::Z;
    let dot = z.dot(front).clamp(-1.0, 1.0);
    if dot > 1.0 - 1e-15 {
        return Quat::IDENTITY;
    }
    if dot < -1.0 + 1e-15 {
        // 180 degrees about any axis orthogonal to z.
        return Quat::from_axis_angle(Vec3::X, std::f64::consts::PI);
    }
    Quat::from_axis_angle(z.cross(front), dot.acos())
}

/// Transforms `point` into the frame defined by `origin`, `front`, and a
/// down hint, using only quaternion algebra: align +z to the front axis,
/// then roll about the front axis until +y matches the Gram-Schmidt down.
/// This is the independent oracle for the matrix-based frame construction.
pub fn quat_frame_transform(origin: Vec3, front: Vec3, down_hint: Vec3, point: Vec3) -> Vec3 {
    let front = front.scale(1.0 / front.norm());
    let q1 = align_z_to(front).normalized();
    let y_aligned = q1.rotate(Vec3::Y);
    let down = {
        let rej = down_hint.sub(front.scale(down_hint.dot(front)));
        rej.scale(1.0 / rej.norm())
    };
    let cos_roll = y_aligned.dot(down).clamp(-1.0, 1.0);
    let sin_roll = front.dot(y_aligned.cross(down));
    let roll = sin_roll.atan2(cos_roll);
    let q = Quat::from_axis_angle(front, roll).mul(q1).normalized();
    // Frame columns are q applied to the canonical axes, so the local
    // coordinates of a world point are the inverse rotation.
    q.conjugate().rotate(point.sub(origin))
}

pub fn random_unit_vec(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v.scale(1.0 / n);
        }
    }
}

pub fn random_rotation(rng: &mut ChaCha8Rng) -> Mat3 {
    let q = Quat {
        w: rng.gen_range(-1.0..1.0),
        x: rng.gen_range(-1.0..1.0),
        y: rng.gen_range(-1.0..1.0),
        z: rng.gen_range(-1.0..1.0),
    }
    .normalized();
    Mat3::from_cols(q.rotate(Vec3::X), q.rotate(Vec3::Y), q.rotate(Vec3::Z))
}

pub fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    Pose::new(
        random_rotation(rng),
        Vec3::new(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        ),
    )
}
