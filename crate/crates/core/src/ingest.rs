//! Line-oriented scene file reader and writer.
//!
//! ```text
//! # comment
//! CAM <id> <fx> <fy> <cx> <cy> <width> <height> <qw> <qx> <qy> <qz> <tx> <ty> <tz> [sensor] [timestamp]
//! PT <id> <x> <y> <z> <cam_id>*
//! ```
//!
//! Poses are world-to-camera with a scalar-first quaternion. Floats are
//! written with nine significant digits.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::model::{
    Camera, CameraId, CameraIntrinsics, CameraPose, ModelError, Point3, PointId, PointOrigin,
    Scene,
};
use crate::num::{format_sig9, Real};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("structural error: {0}")]
    Structural(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneFileReport {
    pub camera_count: usize,
    pub keypoint_count: usize,
    pub dangling_track_refs: usize,
    pub warnings: Vec<String>,
}

fn field<V: FromStr>(tokens: &[&str], idx: usize, name: &str, line: usize) -> Result<V, IngestError> {
    let tok = tokens.get(idx).ok_or_else(|| IngestError::Parse {
        line,
        message: format!("missing field `{name}`"),
    })?;
    tok.parse().map_err(|_| IngestError::Parse {
        line,
        message: format!("cannot parse `{name}` from {tok:?}"),
    })
}

/// Parses a scene. Line numbers in errors are 1-based.
pub fn parse_scene<T: Real, R: BufRead>(input: R) -> Result<Scene<T>, IngestError> {
    let mut cameras = Vec::new();
    let mut points = Vec::new();
    let mut camera_ids = HashSet::new();
    for (idx, line) in input.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let content = line.split('#').next().unwrap_or("");
        let tokens: Vec<&str> = content.split_whitespace().collect();
        let Some(&kind) = tokens.first() else { continue };
        match kind {
            "CAM" => {
                if tokens.len() > 17 {
                    return Err(IngestError::Parse {
                        line: line_no,
                        message: format!("CAM line has {} fields, expected 15 to 17", tokens.len()),
                    });
                }
                let id = CameraId(field(&tokens, 1, "id", line_no)?);
                let f = |i: usize, name: &str| field::<T>(&tokens, i, name, line_no);
                let intrinsics = CameraIntrinsics::new(
                    f(2, "fx")?,
                    f(3, "fy")?,
                    f(4, "cx")?,
                    f(5, "cy")?,
                    field(&tokens, 6, "width", line_no)?,
                    field(&tokens, 7, "height", line_no)?,
                )
                .map_err(|e| IngestError::Parse { line: line_no, message: e.to_string() })?;
                let q = [f(8, "qw")?, f(9, "qx")?, f(10, "qy")?, f(11, "qz")?];
                let t = [f(12, "tx")?, f(13, "ty")?, f(14, "tz")?];
                let pose = CameraPose::new(q, t)
                    .map_err(|e| IngestError::Parse { line: line_no, message: e.to_string() })?;
                let sensor_index =
                    if tokens.len() > 15 { field(&tokens, 15, "sensor", line_no)? } else { 0 };
                let timestamp =
                    if tokens.len() > 16 { f(16, "timestamp")? } else { T::zero() };
                if !camera_ids.insert(id) {
                    return Err(ModelError::DuplicateCamera(id).into());
                }
                cameras.push(Camera { id, intrinsics, pose, sensor_index, timestamp });
            }
            "PT" => {
                let id = PointId(field(&tokens, 1, "id", line_no)?);
                let f = |i: usize, name: &str| field::<T>(&tokens, i, name, line_no);
                let position = [f(2, "x")?, f(3, "y")?, f(4, "z")?];
                let track = (5..tokens.len())
                    .map(|i| field(&tokens, i, "cam_id", line_no).map(CameraId))
                    .collect::<Result<Vec<_>, _>>()?;
                points.push(Point3::keypoint(id, position, track));
            }
            other => {
                return Err(IngestError::Parse {
                    line: line_no,
                    message: format!("unknown record type {other:?}"),
                })
            }
        }
    }
    Ok(Scene::new(cameras, points)?)
}

pub fn parse_scene_str<T: Real>(text: &str) -> Result<Scene<T>, IngestError> {
    parse_scene(text.as_bytes())
}

pub fn read_scene_file<T: Real>(path: &std::path::Path) -> Result<Scene<T>, IngestError> {
    let file = std::fs::File::open(path)?;
    parse_scene(std::io::BufReader::new(file))
}

/// Writes `scene` in the text format. Sampled points are skipped.
pub fn write_scene<T: Real, W: Write>(scene: &Scene<T>, mut out: W) -> std::io::Result<()> {
    writeln!(out, "# CAM id fx fy cx cy width height qw qx qy qz tx ty tz sensor timestamp")?;
    writeln!(out, "# PT id x y z cam_id*")?;
    for cam in scene.cameras() {
        let k = &cam.intrinsics;
        let q = cam.pose.quaternion();
        let t = cam.pose.translation();
        writeln!(
            out,
            "CAM {} {} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            cam.id,
            format_sig9(k.fx),
            format_sig9(k.fy),
            format_sig9(k.cx),
            format_sig9(k.cy),
            k.width,
            k.height,
            format_sig9(q[0]),
            format_sig9(q[1]),
            format_sig9(q[2]),
            format_sig9(q[3]),
            format_sig9(t[0]),
            format_sig9(t[1]),
            format_sig9(t[2]),
            cam.sensor_index,
            format_sig9(cam.timestamp),
        )?;
    }
    for p in scene.points().iter().filter(|p| p.origin == PointOrigin::Keypoint) {
        write!(
            out,
            "PT {} {} {} {}",
            p.id,
            format_sig9(p.position[0]),
            format_sig9(p.position[1]),
            format_sig9(p.position[2])
        )?;
        for c in &p.track {
            write!(out, " {c}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn scene_to_string<T: Real>(scene: &Scene<T>) -> String {
    let mut buf = Vec::new();
    write_scene(scene, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("ascii output")
}

const MAX_LISTED_IDS: usize = 20;

fn list_ids<I: std::fmt::Display>(ids: &[I]) -> String {
    let mut s: Vec<String> = ids.iter().take(MAX_LISTED_IDS).map(|i| i.to_string()).collect();
    if ids.len() > MAX_LISTED_IDS {
        s.push(format!("... ({} more)", ids.len() - MAX_LISTED_IDS));
    }
    s.join(", ")
}

pub fn validate_scene<T: Real>(scene: &Scene<T>) -> SceneFileReport {
    let mut observed: HashSet<CameraId> = HashSet::new();
    let mut dangling = 0;
    let mut untracked = Vec::new();
    let mut keypoint_count = 0;
    for p in scene.keypoints() {
        keypoint_count += 1;
        if p.track.is_empty() {
            untracked.push(p.id);
        }
        for &c in &p.track {
            if scene.camera(c).is_some() {
                observed.insert(c);
            } else {
                dangling += 1;
            }
        }
    }
    let mut warnings = Vec::new();
    let unobserving: Vec<CameraId> =
        scene.cameras().iter().map(|c| c.id).filter(|id| !observed.contains(id)).collect();
    if !unobserving.is_empty() {
        warnings.push(format!("cameras with no keypoint observations: {}", list_ids(&unobserving)));
    }
    if !untracked.is_empty() {
        warnings.push(format!("keypoints with empty tracks: {}", list_ids(&untracked)));
    }
    SceneFileReport {
        camera_count: scene.cameras().len(),
        keypoint_count,
        dangling_track_refs: dangling,
        warnings,
    }
}
