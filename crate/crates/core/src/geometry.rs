//! Pinhole cameras, the canonical stereo frame, and Plücker ray embeddings.
//!
//! Poses are camera-to-world: `rotation` maps camera axes into the world and
//! `translation` is the camera center. Pixel `(row, col)` is sampled at its
//! center `(col + 0.5, row + 0.5)` with +x right, +y down, +z into the scene.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
const RECTIFIED_ANGLE_TOL: f64 = 1e-6;
const RECTIFIED_OFFSET_TOL: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be non-zero".into()));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(Error::InvalidCamera(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidCamera(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Unnormalized camera-frame direction through the center of `(row, col)`.
    fn camera_direction(&self, row: usize, col: usize) -> Vector3<f64> {
        Vector3::new(
            (col as f64 + 0.5 - self.cx) / self.fx,
            (row as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        )
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidPose {
    pub rotation: Matrix3<f64>,
    /// Camera center in world coordinates, meters.
    pub translation: Vector3<f64>,
}

impl RigidPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let pose = Self {
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_center(center: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: center,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.rotation.iter().chain(self.translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Matrix3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!(
                "rotation not orthonormal (max |RᵀR − I| = {dev:e})"
            )));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidPose(format!("det(R) = {det}, expected +1")));
        }
        Ok(())
    }

    pub fn center(&self) -> Vector3<f64> {
        self.translation
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub pose: RigidPose,
}

impl Camera {
    pub fn new(intrinsics: CameraIntrinsics, pose: RigidPose) -> Result<Self> {
        intrinsics.validate()?;
        pose.validate()?;
        Ok(Self { intrinsics, pose })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StereoRig {
    pub baseline_m: f64,
    pub left: Camera,
    pub right: Camera,
}

/// Re-express a rectified pair in the canonical frame: rig center at the
/// origin, left camera at `(-B/2, 0, 0)`, right at `(+B/2, 0, 0)`, both
/// rotations identity.
///
/// The input poses may live in an arbitrary (possibly non-metric) world frame;
/// only their relative rotation and the direction of their relative
/// translation are checked. `baseline_m` fixes the metric scale.
pub fn canonicalize_rig(left: &Camera, right: &Camera, baseline_m: f64) -> Result<StereoRig> {
    if !(baseline_m > 0.0 && baseline_m.is_finite()) {
        return Err(Error::BadBaseline(baseline_m));
    }
    left.intrinsics.validate()?;
    right.intrinsics.validate()?;
    left.pose.validate()?;
    right.pose.validate()?;

    let rel_rot = left.pose.rotation.transpose() * right.pose.rotation;
    let cos_angle = ((rel_rot.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    // acos loses precision near 1; recover the angle from the skew part instead.
    let skew = Vector3::new(
        rel_rot[(2, 1)] - rel_rot[(1, 2)],
        rel_rot[(0, 2)] - rel_rot[(2, 0)],
        rel_rot[(1, 0)] - rel_rot[(0, 1)],
    );
    let angle = (skew.norm() / 2.0).atan2(cos_angle);
    if angle >= RECTIFIED_ANGLE_TOL {
        return Err(Error::NotRectified(format!(
            "relative rotation of {angle:e} rad"
        )));
    }

    let offset = left.pose.rotation.transpose() * (right.pose.center() - left.pose.center());
    let separation = offset.norm();
    if !(separation > 0.0) || offset.x <= 0.0 {
        return Err(Error::NotRectified(
            "right camera does not lie on the +x axis of the left camera".into(),
        ));
    }
    let off_axis = offset.y.hypot(offset.z);
    if off_axis >= RECTIFIED_OFFSET_TOL * separation {
        return Err(Error::NotRectified(format!(
            "off-axis offset {off_axis:e} for separation {separation}"
        )));
    }

    let half = baseline_m / 2.0;
    Ok(StereoRig {
        baseline_m,
        left: Camera {
            intrinsics: left.intrinsics,
            pose: RigidPose::from_center(Vector3::new(-half, 0.0, 0.0)),
        },
        right: Camera {
            intrinsics: right.intrinsics,
            pose: RigidPose::from_center(Vector3::new(half, 0.0, 0.0)),
        },
    })
}

/// A line in Plücker coordinates with unit direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PluckerRay {
    pub direction: Vector3<f64>,
    pub moment: Vector3<f64>,
}

impl PluckerRay {
    /// Ray through `point` along `direction` (normalized here).
    pub fn through(point: Vector3<f64>, direction: Vector3<f64>) -> Self {
        let d = direction.normalize();
        Self {
            direction: d,
            moment: point.cross(&d),
        }
    }
}

pub fn pixel_ray(intr: &CameraIntrinsics, pose: &RigidPose, row: usize, col: usize) -> Result<PluckerRay> {
    if row >= intr.height || col >= intr.width {
        return Err(Error::OutOfBounds {
            row,
            col,
            height: intr.height,
            width: intr.width,
        });
    }
    Ok(ray_unchecked(intr, pose, row, col))
}

fn ray_unchecked(intr: &CameraIntrinsics, pose: &RigidPose, row: usize, col: usize) -> PluckerRay {
    let d = (pose.rotation * intr.camera_direction(row, col)).normalize();
    PluckerRay {
        direction: d,
        moment: pose.center().cross(&d),
    }
}

/// Dense per-pixel ray field, channel-major `(dx, dy, dz, mx, my, mz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PluckerMap {
    pub height: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl PluckerMap {
    pub const CHANNELS: usize = 6;

    pub fn ray(&self, row: usize, col: usize) -> PluckerRay {
        let plane = self.height * self.width;
        let idx = row * self.width + col;
        let c = |k: usize| self.data[k * plane + idx];
        PluckerRay {
            direction: Vector3::new(c(0), c(1), c(2)),
            moment: Vector3::new(c(3), c(4), c(5)),
        }
    }

    /// `(6, H, W)` channel-major values.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn shape(&self) -> [usize; 3] {
        [Self::CHANNELS, self.height, self.width]
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

pub fn plucker_map(intr: &CameraIntrinsics, pose: &RigidPose) -> Result<PluckerMap> {
    intr.validate()?;
    pose.validate()?;
    let (h, w) = (intr.height, intr.width);
    let rows: Vec<Vec<PluckerRay>> = (0..h)
        .into_par_iter()
        .map(|row| (0..w).map(|col| ray_unchecked(intr, pose, row, col)).collect())
        .collect();
    let plane = h * w;
    let mut data = vec![0.0; PluckerMap::CHANNELS * plane];
    for (row, rays) in rows.iter().enumerate() {
        for (col, ray) in rays.iter().enumerate() {
            let idx = row * w + col;
            for k in 0..3 {
                data[k * plane + idx] = ray.direction[k];
                data[(k + 3) * plane + idx] = ray.moment[k];
            }
        }
    }
    Ok(PluckerMap {
        height: h,
        width: w,
        data,
    })
}

/// `d₁·m₂ + d₂·m₁`; zero iff the lines are coplanar.
pub fn reciprocal_product(a: &PluckerRay, b: &PluckerRay) -> f64 {
    a.direction.dot(&b.moment) + b.direction.dot(&a.moment)
}

/// Shortest distance between two non-parallel lines.
pub fn line_distance(a: &PluckerRay, b: &PluckerRay) -> Result<f64> {
    let cross = a.direction.cross(&b.direction).norm();
    if cross <= PARALLEL_TOL {
        return Err(Error::ParallelRays(cross));
    }
    Ok(reciprocal_product(a, b).abs() / cross)
}

/// Parse the key=value camera format. Returns the camera and the optional
/// `baseline_m` entry.
///
/// Keys: `fx fy cx cy width height`, rotation `r00 .. r22` (row-major),
/// translation `tx ty tz`, and optionally `baseline_m`. Blank lines and
/// lines starting with `#` are ignored. Rotation defaults to identity and
/// translation to zero when absent.
pub fn parse_camera(text: &str) -> Result<(Camera, Option<f64>)> {
    let mut kv: HashMap<&str, f64> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", lineno + 1)))?;
        let value: f64 = value.trim().parse().map_err(|_| {
            Error::Format(format!("line {}: bad number {:?}", lineno + 1, value.trim()))
        })?;
        kv.insert(key.trim(), value);
    }
    let get = |k: &str| {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::Format(format!("missing key {k}")))
    };
    let size = |k: &str| -> Result<usize> {
        let v = get(k)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Format(format!("{k} must be a non-negative integer")));
        }
        Ok(v as usize)
    };
    let intr = CameraIntrinsics::new(
        get("fx")?,
        get("fy")?,
        get("cx")?,
        get("cy")?,
        size("width")?,
        size("height")?,
    )?;
    let mut rotation = Matrix3::identity();
    for r in 0..3 {
        for c in 0..3 {
            if let Some(v) = kv.get(format!("r{r}{c}").as_str()) {
                rotation[(r, c)] = *v;
            }
        }
    }
    let t = |k: &str| kv.get(k).copied().unwrap_or(0.0);
    let pose = RigidPose::new(rotation, Vector3::new(t("tx"), t("ty"), t("tz")))?;
    Ok((Camera::new(intr, pose)?, kv.get("baseline_m").copied()))
}

pub fn format_camera(camera: &Camera, baseline_m: Option<f64>) -> String {
    let i = &camera.intrinsics;
    let mut out = String::new();
    let _ = writeln!(out, "fx={}\nfy={}\ncx={}\ncy={}", i.fx, i.fy, i.cx, i.cy);
    let _ = writeln!(out, "width={}\nheight={}", i.width, i.height);
    for r in 0..3 {
        for c in 0..3 {
            let _ = writeln!(out, "r{r}{c}={}", camera.pose.rotation[(r, c)]);
        }
    }
    let t = camera.pose.translation;
    let _ = writeln!(out, "tx={}\nty={}\ntz={}", t.x, t.y, t.z);
    if let Some(b) = baseline_m {
        let _ = writeln!(out, "baseline_m={b}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;

    fn intr(w: usize, h: usize) -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, w as f64 / 2.0 - 0.5, h as f64 / 2.0 - 0.5, w, h).unwrap()
    }

    #[test]
    fn intrinsics_reject_bad_values() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, -0.1, 4, 4).is_err());
    }

    #[test]
    fn pose_rejects_reflection() {
        let mut r = Matrix3::identity();
        r[(2, 2)] = -1.0;
        assert!(matches!(
            RigidPose::new(r, Vector3::zeros()),
            Err(Error::InvalidPose(_))
        ));
    }

    #[test]
    fn canonical_input_is_unchanged() {
        let i = intr(8, 6);
        let l = Camera::new(i, RigidPose::from_center(Vector3::new(-0.1, 0.0, 0.0))).unwrap();
        let r = Camera::new(i, RigidPose::from_center(Vector3::new(0.1, 0.0, 0.0))).unwrap();
        let rig = canonicalize_rig(&l, &r, 0.2).unwrap();
        assert_eq!(rig.left, l);
        assert_eq!(rig.right, r);
    }

    #[test]
    fn canonicalize_arbitrary_world_pose() {
        let i = intr(8, 6);
        let rot = Rotation3::from_euler_angles(0.3, -1.1, 2.0).into_inner();
        let c_left = Vector3::new(3.0, -2.0, 5.0);
        let c_right = c_left + rot * Vector3::new(0.2, 0.0, 0.0);
        let l = Camera::new(i, RigidPose::new(rot, c_left).unwrap()).unwrap();
        let r = Camera::new(i, RigidPose::new(rot, c_right).unwrap()).unwrap();
        let rig = canonicalize_rig(&l, &r, 0.2).unwrap();
        assert_eq!(rig.left.pose.center(), Vector3::new(-0.1, 0.0, 0.0));
        assert_eq!(rig.right.pose.center(), Vector3::new(0.1, 0.0, 0.0));
        assert_eq!(rig.left.pose.rotation, Matrix3::identity());
        let dist = (rig.right.pose.center() - rig.left.pose.center()).norm();
        assert!((dist - 0.2).abs() < 1e-9);

        let again = canonicalize_rig(&rig.left, &rig.right, rig.baseline_m).unwrap();
        assert_eq!(again, rig);
    }

    #[test]
    fn canonicalize_rejects_rotated_pair() {
        let i = intr(8, 6);
        let rot = Rotation3::from_euler_angles(0.0, 5f64.to_radians(), 0.0).into_inner();
        let l = Camera::new(i, RigidPose::identity()).unwrap();
        let r = Camera::new(i, RigidPose::new(rot, Vector3::new(0.2, 0.0, 0.0)).unwrap()).unwrap();
        assert!(matches!(canonicalize_rig(&l, &r, 0.2), Err(Error::NotRectified(_))));
    }

    #[test]
    fn canonicalize_rejects_vertical_offset_and_bad_baseline() {
        let i = intr(8, 6);
        let l = Camera::new(i, RigidPose::identity()).unwrap();
        let r = Camera::new(i, RigidPose::from_center(Vector3::new(0.2, 1e-6, 0.0))).unwrap();
        assert!(matches!(canonicalize_rig(&l, &r, 0.2), Err(Error::NotRectified(_))));
        let r = Camera::new(i, RigidPose::from_center(Vector3::new(0.2, 0.0, 0.0))).unwrap();
        assert!(matches!(canonicalize_rig(&l, &r, 0.0), Err(Error::BadBaseline(_))));
        // swapped roles: right camera sits on -x
        assert!(canonicalize_rig(&r, &l, 0.2).is_err());
    }

    #[test]
    fn principal_point_ray_at_origin() {
        let i = intr(8, 6);
        let ray = pixel_ray(&i, &RigidPose::identity(), 2, 3).unwrap();
        // cx = 3.5, cy = 2.5 so pixel (2, 3) sits on the principal point
        assert_eq!(ray.direction, Vector3::new(0.0, 0.0, 1.0));
        assert_eq!(ray.moment, Vector3::zeros());
    }

    #[test]
    fn offset_center_moment() {
        let i = intr(8, 6);
        let ray = pixel_ray(&i, &RigidPose::from_center(Vector3::new(0.1, 0.0, 0.0)), 2, 3).unwrap();
        assert!((ray.moment - Vector3::new(0.0, -0.1, 0.0)).norm() < 1e-15);
        assert!(ray.direction.dot(&ray.moment).abs() < 1e-12);
    }

    #[test]
    fn pixel_ray_out_of_bounds() {
        let i = intr(8, 6);
        assert!(matches!(
            pixel_ray(&i, &RigidPose::identity(), 6, 0),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn map_shape_and_identity_moments() {
        let i = intr(8, 6);
        let map = plucker_map(&i, &RigidPose::identity()).unwrap();
        assert_eq!(map.shape(), [6, 6, 8]);
        assert!(map.as_slice()[3 * 48..].iter().all(|&m| m == 0.0));
        assert_eq!(map.ray(4, 5), pixel_ray(&i, &RigidPose::identity(), 4, 5).unwrap());
    }

    #[test]
    fn canonical_right_camera_center_moment() {
        let i = intr(8, 6);
        let l = Camera::new(i, RigidPose::from_center(Vector3::new(-0.1, 0.0, 0.0))).unwrap();
        let r = Camera::new(i, RigidPose::from_center(Vector3::new(0.1, 0.0, 0.0))).unwrap();
        let rig = canonicalize_rig(&l, &r, 0.2).unwrap();
        let map = plucker_map(&rig.right.intrinsics, &rig.right.pose).unwrap();
        let m = map.ray(2, 3).moment;
        assert!((m - Vector3::new(0.0, -0.1, 0.0)).norm() < 1e-15);
    }

    /// Signed coplanarity via the scalar triple product of the anchor offset
    /// and both directions, computed from points rather than moments.
    fn triple_product(p1: Vector3<f64>, d1: Vector3<f64>, p2: Vector3<f64>, d2: Vector3<f64>) -> f64 {
        (p1 - p2).dot(&d1.cross(&d2))
    }

    #[test]
    fn reciprocal_product_cases() {
        let o = Vector3::zeros();
        let z = Vector3::z();
        let y = Vector3::y();
        let p = Vector3::new(1.0, 0.0, 0.0);
        let a = PluckerRay::through(o, z);
        let b = PluckerRay::through(p, y);
        let rp = reciprocal_product(&a, &b);
        assert_eq!(rp, triple_product(o, z, p, y));
        assert_eq!(rp, 1.0);

        let target = Vector3::new(0.3, -0.2, 2.0);
        let c1 = Vector3::new(-0.1, 0.0, 0.0);
        let c2 = Vector3::new(0.1, 0.05, 0.0);
        let r1 = PluckerRay::through(c1, target - c1);
        let r2 = PluckerRay::through(c2, target - c2);
        assert!(reciprocal_product(&r1, &r2).abs() < 1e-9);

        let par1 = PluckerRay::through(c1, z);
        let par2 = PluckerRay::through(c2, z);
        assert!(reciprocal_product(&par1, &par2).abs() < 1e-9);
    }

    #[test]
    fn line_distance_cases() {
        let a = PluckerRay::through(Vector3::zeros(), Vector3::z());
        let b = PluckerRay::through(Vector3::new(1.0, 0.0, 0.0), Vector3::y());
        assert!((line_distance(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(line_distance(&a, &b).unwrap(), line_distance(&b, &a).unwrap());

        let c = PluckerRay::through(Vector3::new(0.0, 0.0, 3.0), Vector3::new(1.0, 1.0, 0.0));
        assert!(line_distance(&a, &c).unwrap() < 1e-12);

        let d = PluckerRay::through(Vector3::new(2.0, 0.0, 0.0), Vector3::z());
        assert!(matches!(line_distance(&a, &d), Err(Error::ParallelRays(_))));
    }

    #[test]
    fn camera_file_roundtrip() {
        let rot = Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner();
        let cam = Camera::new(intr(640, 480), RigidPose::new(rot, Vector3::new(0.5, -1.0, 2.0)).unwrap()).unwrap();
        let text = format_camera(&cam, Some(0.12));
        let (back, b) = parse_camera(&text).unwrap();
        assert_eq!(back, cam);
        assert_eq!(b, Some(0.12));
    }

    #[test]
    fn camera_file_errors() {
        assert!(matches!(parse_camera("fx=1\nfy"), Err(Error::Format(_))));
        assert!(matches!(parse_camera("fx=1"), Err(Error::Format(_))));
        let text = "fx=10\nfy=10\ncx=2\ncy=2\nwidth=4\nheight=4\nr00=2\n";
        assert!(matches!(parse_camera(text), Err(Error::InvalidPose(_))));
    }
}
