use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::grid::{Cluster, Rect};
use crate::model::{Camera, CameraId, CameraIntrinsics, CameraPose, ModelError, Scene};
use crate::num::Real;
use crate::select::{Solution, SolveStatus};

pub const SCHEMA_VERSION: u32 = 1;

/// Camera in the same convention as the scene file: world-to-camera
/// rotation as a scalar-first quaternion plus translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub id: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub quaternion: [f64; 4],
    pub translation: [f64; 3],
    pub sensor: u32,
    pub timestamp: f64,
}

impl CameraRecord {
    pub fn from_camera<T: Real>(c: &Camera<T>) -> Self {
        let k = &c.intrinsics;
        Self {
            id: c.id.0,
            fx: k.fx.as_f64(),
            fy: k.fy.as_f64(),
            cx: k.cx.as_f64(),
            cy: k.cy.as_f64(),
            width: k.width,
            height: k.height,
            quaternion: c.pose.quaternion().map(|v| v.as_f64()),
            translation: c.pose.translation().map(|v| v.as_f64()),
            sensor: c.sensor_index,
            timestamp: c.timestamp.as_f64(),
        }
    }

    pub fn to_camera<T: Real>(&self) -> Result<Camera<T>, ModelError> {
        let l = |v: f64| T::lit(v);
        let k = CameraIntrinsics::new(l(self.fx), l(self.fy), l(self.cx), l(self.cy), self.width, self.height)?;
        let pose = CameraPose::new(self.quaternion.map(l), self.translation.map(l))?;
        let mut cam = Camera::new(CameraId(self.id), k, pose);
        cam.sensor_index = self.sensor;
        cam.timestamp = l(self.timestamp);
        Ok(cam)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub index: [u32; 2],
    /// `[min_x, min_y, max_x, max_y]`
    pub core: [f64; 4],
    pub expanded: [f64; 4],
}

fn rect<T: Real>(r: &Rect<T>) -> [f64; 4] {
    [r.min[0].as_f64(), r.min[1].as_f64(), r.max[0].as_f64(), r.max[1].as_f64()]
}

/// Per-cluster hand-off to a dense reconstruction tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterManifest {
    pub schema_version: u32,
    pub cluster_id: usize,
    pub core_bounds: [f64; 4],
    pub expanded_bounds: [f64; 4],
    pub blocks: Vec<BlockRecord>,
    pub n_associated_cameras: usize,
    pub cameras: Vec<CameraRecord>,
    pub keypoints: Vec<u64>,
    pub status: SolveStatus,
    pub objective: usize,
    pub lower_bound: usize,
}

impl ClusterManifest {
    pub fn new<T: Real>(cluster: &Cluster<T>, scene: &Scene<T>, solution: &Solution) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            cluster_id: cluster.id,
            core_bounds: rect(&cluster.core_bounds()),
            expanded_bounds: rect(&cluster.expanded_bounds()),
            blocks: cluster
                .blocks
                .iter()
                .map(|b| BlockRecord {
                    index: [b.index.0, b.index.1],
                    core: rect(&b.core_bounds),
                    expanded: rect(&b.expanded_bounds),
                })
                .collect(),
            n_associated_cameras: cluster.cameras.len(),
            cameras: solution
                .selected
                .iter()
                .filter_map(|id| scene.camera(*id))
                .map(CameraRecord::from_camera)
                .collect(),
            keypoints: cluster.keypoints.iter().map(|p| p.0).collect(),
            status: solution.status,
            objective: solution.objective,
            lower_bound: solution.lower_bound,
        }
    }

    pub fn file_name(&self) -> String {
        format!("cluster_{}.json", self.cluster_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub cluster_id: usize,
    pub file: String,
    pub n_selected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestIndex {
    pub schema_version: u32,
    pub clusters: Vec<IndexEntry>,
}

/// Writes to a temporary sibling, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io { path: path.to_path_buf(), source };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

pub(crate) fn to_json<V: Serialize>(value: &V) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("manifest types always serialize");
    v.push(b'\n');
    v
}

/// One `cluster_<id>.json` per manifest plus `index.json`.
pub fn export_manifests(manifests: &[ClusterManifest], dir: &Path) -> Result<ManifestIndex, PipelineError> {
    fs::create_dir_all(dir).map_err(|source| PipelineError::Io { path: dir.to_path_buf(), source })?;
    let mut entries = Vec::with_capacity(manifests.len());
    for m in manifests {
        let file = m.file_name();
        write_atomic(&dir.join(&file), &to_json(m))?;
        entries.push(IndexEntry { cluster_id: m.cluster_id, file, n_selected: m.cameras.len() });
    }
    let index = ManifestIndex { schema_version: SCHEMA_VERSION, clusters: entries };
    write_atomic(&dir.join("index.json"), &to_json(&index))?;
    Ok(index)
}

pub fn read_manifest(path: &Path) -> Result<ClusterManifest, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format { path: PathBuf::from(path), message: e.to_string() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(id: usize) -> ClusterManifest {
        let cam = CameraRecord {
            id: 3,
            fx: 100.0,
            fy: 100.0,
            cx: 50.0,
            cy: 40.0,
            width: 100,
            height: 80,
            quaternion: [1.0, 0.0, 0.0, 0.0],
            translation: [0.5, -1.0, 2.0],
            sensor: 2,
            timestamp: 0.25,
        };
        ClusterManifest {
            schema_version: SCHEMA_VERSION,
            cluster_id: id,
            core_bounds: [0.0, 0.0, 20.0, 20.0],
            expanded_bounds: [-2.0, -2.0, 22.0, 22.0],
            blocks: vec![],
            n_associated_cameras: 4,
            cameras: vec![cam],
            keypoints: vec![1, 2],
            status: SolveStatus::ProvenOptimal,
            objective: 1,
            lower_bound: 1,
        }
    }

    #[test]
    fn three_clusters_give_three_files_and_an_index() {
        let dir = tempfile::tempdir().unwrap();
        let ms: Vec<_> = (0..3).map(manifest).collect();
        let index = export_manifests(&ms, dir.path()).unwrap();
        assert_eq!(index.clusters.len(), 3);
        let mut names: Vec<String> =
            fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
        names.sort();
        assert_eq!(names, vec!["cluster_0.json", "cluster_1.json", "cluster_2.json", "index.json"]);
        assert_eq!(read_manifest(&dir.path().join("cluster_1.json")).unwrap(), ms[1]);
    }

    #[test]
    fn re_export_overwrites() {
        let dir = tempfile::tempdir().unwrap();
        export_manifests(&[manifest(0)], dir.path()).unwrap();
        let mut m = manifest(0);
        m.objective = 7;
        export_manifests(&[m.clone()], dir.path()).unwrap();
        assert_eq!(read_manifest(&dir.path().join("cluster_0.json")).unwrap().objective, 7);
        assert!(fs::read_dir(dir.path()).unwrap().all(|e| !e.unwrap().file_name().to_string_lossy().ends_with(".tmp")));
    }

    #[test]
    fn camera_record_round_trip() {
        let rec = manifest(0).cameras[0].clone();
        let cam: Camera<f64> = rec.to_camera().unwrap();
        assert_eq!(CameraRecord::from_camera(&cam), rec);
    }

    #[test]
    fn unwritable_directory_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = export_manifests(&[manifest(0)], &blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"));
    }
}
