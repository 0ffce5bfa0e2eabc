//! Scene domain types and the pinhole projection kernel.
//!
//! Poses are world-to-camera (`p_c = R * p_w + t`) with the rotation stored
//! as a scalar-first unit quaternion. The camera looks down `+z`, `x` points
//! right and `y` points down in the image. No distortion model is applied.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CameraId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u64);

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("duplicate camera id {0}")]
    DuplicateCamera(CameraId),
    #[error("duplicate point id {0}")]
    DuplicatePoint(PointId),
    #[error("point {point} references unknown camera id {camera}")]
    UnknownCamera { point: PointId, camera: CameraId },
    #[error("sampled point {0} must have an empty track")]
    SampledWithTrack(PointId),
    #[error("scene has no cameras")]
    NoCameras,
}

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub(crate) fn mat_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub(crate) fn mat_t_vec<T: Real>(m: &Mat3<T>, v: &Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
pub(crate) fn distance<T: Real>(a: &Vec3<T>, b: &Vec3<T>) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Pinhole intrinsics in pixels. Image bounds are half-open.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidIntrinsics(msg));
        if width == 0 || height == 0 {
            return bad(format!("image size {width}x{height} must be positive"));
        }
        if !(fx > T::zero() && fy > T::zero()) {
            return bad(format!("focal lengths must be positive, got fx={fx} fy={fy}"));
        }
        let w = T::from_u32(width).unwrap();
        let h = T::from_u32(height).unwrap();
        if !(cx >= T::zero() && cx < w && cy >= T::zero() && cy < h) {
            return bad(format!("principal point ({cx}, {cy}) outside {width}x{height}"));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}

/// World-to-camera rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose<T> {
    quaternion: [T; 4],
    translation: Vec3<T>,
    matrix: Mat3<T>,
}

impl<T: Real> CameraPose<T> {
    /// `quaternion` is `(w, x, y, z)`. Its norm must be one within
    /// [`Real::unit_tolerance`]; the stored matrix is built from the
    /// normalized quaternion so it is orthonormal to machine precision.
    pub fn new(quaternion: [T; 4], translation: Vec3<T>) -> Result<Self, ModelError> {
        let norm = quaternion.iter().fold(T::zero(), |acc, &q| acc + q * q).sqrt();
        if !norm.is_finite() || (norm - T::one()).abs() > T::unit_tolerance() {
            return Err(ModelError::InvalidPose(format!("quaternion norm {norm} is not 1")));
        }
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::InvalidPose("non-finite translation".into()));
        }
        let [w, x, y, z] = quaternion.map(|q| q / norm);
        let two = T::lit(2.0);
        let one = T::one();
        let matrix = [
            [one - two * (y * y + z * z), two * (x * y - w * z), two * (x * z + w * y)],
            [two * (x * y + w * z), one - two * (x * x + z * z), two * (y * z - w * x)],
            [two * (x * z - w * y), two * (y * z + w * x), one - two * (x * x + y * y)],
        ];
        Ok(Self { quaternion, translation, matrix })
    }

    pub fn identity() -> Self {
        Self::new([T::one(), T::zero(), T::zero(), T::zero()], [T::zero(); 3]).unwrap()
    }

    /// Builds a pose from a world-to-camera rotation matrix and the camera
    /// center in world coordinates.
    pub fn from_matrix_and_center(matrix: &Mat3<T>, center: &Vec3<T>) -> Result<Self, ModelError> {
        let q = quaternion_from_matrix(matrix);
        let r = Self::new(q, [T::zero(); 3])?;
        let rc = mat_vec(&r.matrix, center);
        Self::new(q, [-rc[0], -rc[1], -rc[2]])
    }

    pub fn quaternion(&self) -> [T; 4] {
        self.quaternion
    }

    pub fn translation(&self) -> Vec3<T> {
        self.translation
    }

    pub fn rotation_matrix(&self) -> &Mat3<T> {
        &self.matrix
    }

    /// Camera center in world coordinates, `-R^T t`.
    pub fn center(&self) -> Vec3<T> {
        let c = mat_t_vec(&self.matrix, &self.translation);
        [-c[0], -c[1], -c[2]]
    }

    #[inline]
    pub fn to_camera(&self, p_world: &Vec3<T>) -> Vec3<T> {
        let r = mat_vec(&self.matrix, p_world);
        [r[0] + self.translation[0], r[1] + self.translation[1], r[2] + self.translation[2]]
    }

    pub fn to_world(&self, p_cam: &Vec3<T>) -> Vec3<T> {
        let d = [
            p_cam[0] - self.translation[0],
            p_cam[1] - self.translation[1],
            p_cam[2] - self.translation[2],
        ];
        mat_t_vec(&self.matrix, &d)
    }

    /// Optical axis direction in world coordinates.
    pub fn forward(&self) -> Vec3<T> {
        self.matrix[2]
    }
}

/// Shepperd's method; returns a scalar-first quaternion with `w >= 0`.
pub fn quaternion_from_matrix<T: Real>(m: &Mat3<T>) -> [T; 4] {
    let one = T::one();
    let quarter = T::lit(0.25);
    let trace = m[0][0] + m[1][1] + m[2][2];
    let q = if trace > T::zero() {
        let s = (trace + one).sqrt() * T::lit(2.0);
        [
            quarter * s,
            (m[2][1] - m[1][2]) / s,
            (m[0][2] - m[2][0]) / s,
            (m[1][0] - m[0][1]) / s,
        ]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [
            (m[2][1] - m[1][2]) / s,
            quarter * s,
            (m[0][1] + m[1][0]) / s,
            (m[0][2] + m[2][0]) / s,
        ]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [
            (m[0][2] - m[2][0]) / s,
            (m[0][1] + m[1][0]) / s,
            quarter * s,
            (m[1][2] + m[2][1]) / s,
        ]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [
            (m[1][0] - m[0][1]) / s,
            (m[0][2] + m[2][0]) / s,
            (m[1][2] + m[2][1]) / s,
            quarter * s,
        ]
    };
    let norm = q.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
    let sign = if q[0] < T::zero() { -one } else { one };
    q.map(|v| sign * v / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera<T> {
    pub id: CameraId,
    pub intrinsics: CameraIntrinsics<T>,
    pub pose: CameraPose<T>,
    /// Rig sensor this image came from.
    pub sensor_index: u32,
    /// Provenance only; never used by clustering.
    pub timestamp: T,
}

impl<T: Real> Camera<T> {
    pub fn new(id: CameraId, intrinsics: CameraIntrinsics<T>, pose: CameraPose<T>) -> Self {
        Self { id, intrinsics, pose, sensor_index: 0, timestamp: T::zero() }
    }

    pub fn center(&self) -> Vec3<T> {
        self.pose.center()
    }

    /// Inverse of [`project_point`] for a pixel at a given depth.
    pub fn back_project(&self, u: T, v: T, depth: T) -> Vec3<T> {
        let k = &self.intrinsics;
        let pc = [(u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth];
        self.pose.to_world(&pc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection<T> {
    pub u: T,
    pub v: T,
    pub depth: T,
}

/// Projects a world point into `camera`.
///
/// Returns `None` when the point is behind the camera (depth <= 0) or falls
/// outside `[0, width) x [0, height)`. Occlusion is not modelled.
#[inline]
pub fn project_point<T: Real>(camera: &Camera<T>, point_w: &Vec3<T>) -> Option<Projection<T>> {
    let pc = camera.pose.to_camera(point_w);
    let depth = pc[2];
    if !(depth > T::zero()) {
        return None;
    }
    let k = &camera.intrinsics;
    let u = k.fx * pc[0] / depth + k.cx;
    let v = k.fy * pc[1] / depth + k.cy;
    let w = T::from_u32(k.width).unwrap();
    let h = T::from_u32(k.height).unwrap();
    if u >= T::zero() && u < w && v >= T::zero() && v < h {
        Some(Projection { u, v, depth })
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PointOrigin {
    Keypoint,
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point3<T> {
    pub id: PointId,
    pub position: Vec3<T>,
    /// Observing cameras, sorted and duplicate-free. Empty for sampled points.
    pub track: Vec<CameraId>,
    pub origin: PointOrigin,
}

impl<T: Real> Point3<T> {
    pub fn keypoint(id: PointId, position: Vec3<T>, mut track: Vec<CameraId>) -> Self {
        track.sort_unstable();
        track.dedup();
        Self { id, position, track, origin: PointOrigin::Keypoint }
    }

    pub fn sampled(id: PointId, position: Vec3<T>) -> Self {
        Self { id, position, track: Vec::new(), origin: PointOrigin::Sampled }
    }
}

/// SFM output: posed cameras and sparse keypoints with tracks.
#[derive(Debug, Clone)]
pub struct Scene<T> {
    cameras: Vec<Camera<T>>,
    points: Vec<Point3<T>>,
    camera_index: HashMap<CameraId, usize>,
    point_index: HashMap<PointId, usize>,
}

impl<T: PartialEq> PartialEq for Scene<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cameras == other.cameras && self.points == other.points
    }
}

impl<T: Real> Scene<T> {
    pub fn new(cameras: Vec<Camera<T>>, points: Vec<Point3<T>>) -> Result<Self, ModelError> {
        if cameras.is_empty() {
            return Err(ModelError::NoCameras);
        }
        let mut camera_index = HashMap::with_capacity(cameras.len());
        for (i, cam) in cameras.iter().enumerate() {
            if camera_index.insert(cam.id, i).is_some() {
                return Err(ModelError::DuplicateCamera(cam.id));
            }
        }
        let mut point_index = HashMap::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if point_index.insert(p.id, i).is_some() {
                return Err(ModelError::DuplicatePoint(p.id));
            }
            if p.origin == PointOrigin::Sampled && !p.track.is_empty() {
                return Err(ModelError::SampledWithTrack(p.id));
            }
            if let Some(&camera) = p.track.iter().find(|c| !camera_index.contains_key(c)) {
                return Err(ModelError::UnknownCamera { point: p.id, camera });
            }
        }
        Ok(Self { cameras, points, camera_index, point_index })
    }

    pub fn cameras(&self) -> &[Camera<T>] {
        &self.cameras
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn camera(&self, id: CameraId) -> Option<&Camera<T>> {
        self.camera_index.get(&id).map(|&i| &self.cameras[i])
    }

    pub fn point(&self, id: PointId) -> Option<&Point3<T>> {
        self.point_index.get(&id).map(|&i| &self.points[i])
    }

    pub fn camera_position(&self, id: CameraId) -> Option<usize> {
        self.camera_index.get(&id).copied()
    }

    pub fn keypoints(&self) -> impl Iterator<Item = &Point3<T>> {
        self.points.iter().filter(|p| p.origin == PointOrigin::Keypoint)
    }

    pub fn max_point_id(&self) -> Option<PointId> {
        self.points.iter().map(|p| p.id).max()
    }

    pub fn into_parts(self) -> (Vec<Camera<T>>, Vec<Point3<T>>) {
        (self.cameras, self.points)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_camera(pose: CameraPose<f64>) -> Camera<f64> {
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).unwrap();
        Camera::new(CameraId(0), k, pose)
    }

    #[test]
    fn principal_axis_maps_to_principal_point() {
        let cam = test_camera(CameraPose::identity());
        let p = project_point(&cam, &[0.0, 0.0, 10.0]).unwrap();
        assert_eq!((p.u, p.v, p.depth), (960.0, 540.0, 10.0));
    }

    #[test]
    fn behind_camera_is_invisible() {
        let cam = test_camera(CameraPose::identity());
        assert!(project_point(&cam, &[0.0, 0.0, -5.0]).is_none());
        assert!(project_point(&cam, &[0.0, 0.0, 0.0]).is_none());
    }

    #[test]
    fn lateral_offset() {
        let cam = test_camera(CameraPose::identity());
        let p = project_point(&cam, &[1.0, 0.0, 10.0]).unwrap();
        assert_eq!((p.u, p.v, p.depth), (1060.0, 540.0, 10.0));
    }

    #[test]
    fn pixel_bounds_are_half_open() {
        let cam = test_camera(CameraPose::identity());
        // u = 1000 * x / 10 + 960 == 1920 exactly at x = 9.6
        assert!(project_point(&cam, &[9.6, 0.0, 10.0]).is_none());
        assert!(project_point(&cam, &[-9.6, 0.0, 10.0]).is_some());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 1.0, 10, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, 1.0, 0, 10).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 10, 10).is_ok());
    }

    #[test]
    fn pose_rejects_non_unit_quaternion() {
        assert!(CameraPose::new([2.0f64, 0.0, 0.0, 0.0], [0.0; 3]).is_err());
        assert!(CameraPose::new([1.0f64 + 1e-9, 0.0, 0.0, 0.0], [0.0; 3]).is_ok());
    }

    #[test]
    fn rotation_matrix_is_orthonormal() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let pose = CameraPose::new([h, 0.0, h, 0.0], [1.0, 2.0, 3.0]).unwrap();
        let m = pose.rotation_matrix();
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| m[i][k] * m[j][k]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn center_matches_minus_rt_t() {
        let m = [[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]];
        let pose = CameraPose::from_matrix_and_center(&m, &[4.0, -2.0, 1.5]).unwrap();
        let c = pose.center();
        assert!(distance(&c, &[4.0, -2.0, 1.5]) < 1e-12);
    }

    #[test]
    fn scene_rejects_structural_errors() {
        let cam = test_camera(CameraPose::identity());
        assert_eq!(Scene::<f64>::new(vec![], vec![]).unwrap_err(), ModelError::NoCameras);
        let dup = Scene::new(vec![cam.clone(), cam.clone()], vec![]);
        assert_eq!(dup.unwrap_err(), ModelError::DuplicateCamera(CameraId(0)));
        let dangling = Point3::keypoint(PointId(3), [0.0; 3], vec![CameraId(99)]);
        let err = Scene::new(vec![cam], vec![dangling]).unwrap_err();
        assert_eq!(err, ModelError::UnknownCamera { point: PointId(3), camera: CameraId(99) });
    }

    #[test]
    fn f32_projection_agrees() {
        let k = CameraIntrinsics::new(1000.0f32, 1000.0, 960.0, 540.0, 1920, 1080).unwrap();
        let cam = Camera::new(CameraId(1), k, CameraPose::identity());
        let p = project_point(&cam, &[1.0f32, 0.0, 10.0]).unwrap();
        assert!((p.u - 1060.0).abs() < 1e-3);
    }
}
