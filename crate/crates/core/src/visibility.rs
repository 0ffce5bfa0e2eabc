//! Per-cluster binary visibility (point x camera) and camera similarity
//! matrices.

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use thiserror::Error;

use crate::associate::{sees, Aabb, AssociationConfig};
use crate::grid::Cluster;
use crate::model::{CameraId, PointId, Scene, Vec3};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VisibilityError {
    #[error("cluster {0} has no associated cameras")]
    NoCameras(usize),
    #[error("camera {0} is not part of the scene")]
    UnknownCamera(CameraId),
    #[error("rows have inconsistent lengths")]
    Ragged,
}

/// `b[j][i] = 1` iff point `j` projects inside camera `i` within the depth
/// cutoff. Stored both row-wise (per point) and column-wise (per camera).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMatrix {
    point_ids: Vec<PointId>,
    camera_ids: Vec<CameraId>,
    rows: Vec<FixedBitSet>,
    cols: Vec<FixedBitSet>,
}

impl VisibilityMatrix {
    /// Builds a matrix from explicit rows (one per point, one bit per camera).
    pub fn from_rows(
        point_ids: Vec<PointId>,
        camera_ids: Vec<CameraId>,
        bits: &[Vec<bool>],
    ) -> Result<Self, VisibilityError> {
        let n = camera_ids.len();
        if bits.len() != point_ids.len() || bits.iter().any(|r| r.len() != n) {
            return Err(VisibilityError::Ragged);
        }
        let rows = bits
            .iter()
            .map(|r| {
                let mut b = FixedBitSet::with_capacity(n);
                r.iter().enumerate().filter(|(_, &v)| v).for_each(|(i, _)| b.insert(i));
                b
            })
            .collect::<Vec<_>>();
        let cols = transpose(&rows, n);
        Ok(Self { point_ids, camera_ids, rows, cols })
    }

    fn from_columns(point_ids: Vec<PointId>, camera_ids: Vec<CameraId>, cols: Vec<FixedBitSet>) -> Self {
        let rows = transpose(&cols, point_ids.len());
        Self { point_ids, camera_ids, rows, cols }
    }

    pub fn n_points(&self) -> usize {
        self.point_ids.len()
    }

    pub fn n_cameras(&self) -> usize {
        self.camera_ids.len()
    }

    pub fn point_ids(&self) -> &[PointId] {
        &self.point_ids
    }

    pub fn camera_ids(&self) -> &[CameraId] {
        &self.camera_ids
    }

    pub fn get(&self, point: usize, camera: usize) -> bool {
        self.rows[point].contains(camera)
    }

    /// Cameras seeing point `j`.
    pub fn row(&self, point: usize) -> &FixedBitSet {
        &self.rows[point]
    }

    pub fn rows(&self) -> &[FixedBitSet] {
        &self.rows
    }

    /// Points seen by camera `i`.
    pub fn column(&self, camera: usize) -> &FixedBitSet {
        &self.cols[camera]
    }

    pub fn visible_count(&self, camera: usize) -> usize {
        self.cols[camera].count_ones(..)
    }

    /// One line per point, one `0`/`1` character per camera.
    pub fn to_ascii(&self) -> String {
        bitmap_ascii(&self.rows, self.n_cameras())
    }
}

fn transpose(rows: &[FixedBitSet], n_cols: usize) -> Vec<FixedBitSet> {
    let mut cols = vec![FixedBitSet::with_capacity(rows.len()); n_cols];
    for (r, bits) in rows.iter().enumerate() {
        for c in bits.ones() {
            cols[c].insert(r);
        }
    }
    cols
}

fn bitmap_ascii(rows: &[FixedBitSet], width: usize) -> String {
    let mut s = String::with_capacity(rows.len() * (width + 1));
    for r in rows {
        for c in 0..width {
            s.push(if r.contains(c) { '1' } else { '0' });
        }
        s.push('\n');
    }
    s
}

const CULL_CHUNK: usize = 128;

/// Projects every cluster point (keypoints first, then sampled points) into
/// every associated camera.
pub fn build_visibility_matrix<T: Real>(
    cluster: &Cluster<T>,
    scene: &Scene<T>,
    cfg: &AssociationConfig<T>,
) -> Result<VisibilityMatrix, VisibilityError> {
    if cluster.cameras.is_empty() {
        return Err(VisibilityError::NoCameras(cluster.id));
    }
    let mut point_ids = Vec::with_capacity(cluster.point_count());
    let mut positions: Vec<Vec3<T>> = Vec::with_capacity(cluster.point_count());
    for id in &cluster.keypoints {
        if let Some(p) = scene.point(*id) {
            point_ids.push(p.id);
            positions.push(p.position);
        }
    }
    for p in &cluster.sampled {
        point_ids.push(p.id);
        positions.push(p.position);
    }
    let cameras = cluster
        .cameras
        .iter()
        .map(|&id| scene.camera(id).ok_or(VisibilityError::UnknownCamera(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let chunks: Vec<(usize, Aabb<T>)> = positions
        .chunks(CULL_CHUNK)
        .enumerate()
        .filter_map(|(k, c)| Aabb::around(c.iter()).map(|b| (k * CULL_CHUNK, b)))
        .collect();
    let cols: Vec<FixedBitSet> = cameras
        .par_iter()
        .map(|cam| {
            let mut col = FixedBitSet::with_capacity(positions.len());
            for (start, bbox) in &chunks {
                if bbox.outside_frustum(cam, cfg.max_depth) {
                    continue;
                }
                let end = (start + CULL_CHUNK).min(positions.len());
                for (j, p) in positions[*start..end].iter().enumerate() {
                    if sees(cam, p, cfg.max_depth) {
                        col.insert(start + j);
                    }
                }
            }
            col
        })
        .collect();
    Ok(VisibilityMatrix::from_columns(point_ids, cluster.cameras.clone(), cols))
}

/// Co-visibility counts between cameras of one cluster and their
/// binarization at a match threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimilarityMatrix {
    n: usize,
    counts: Vec<u32>,
    bits: Vec<FixedBitSet>,
    match_threshold: u32,
}

impl SimilarityMatrix {
    /// Binary matrix given directly (raw counts set equal to the bits).
    /// Symmetry is enforced by OR-ing with the transpose; the diagonal is
    /// cleared.
    pub fn from_binary(adjacency: &[Vec<bool>]) -> Self {
        let n = adjacency.len();
        let mut bits = vec![FixedBitSet::with_capacity(n); n];
        let mut counts = vec![0u32; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j && (adjacency[i][j] || adjacency[j][i]) {
                    bits[i].insert(j);
                    counts[i * n + j] = 1;
                }
            }
        }
        Self { n, counts, bits, match_threshold: 1 }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Number of points co-visible in cameras `i` and `j`.
    pub fn count(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.n + j]
    }

    pub fn matchable(&self, i: usize, j: usize) -> bool {
        self.bits[i].contains(j)
    }

    /// Matchable partners of camera `i`.
    pub fn partners(&self, i: usize) -> &FixedBitSet {
        &self.bits[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bits[i].count_ones(..)
    }

    pub fn match_threshold(&self) -> u32 {
        self.match_threshold
    }

    pub fn to_ascii(&self) -> String {
        bitmap_ascii(&self.bits, self.n)
    }
}

/// `s_ij = |col_i ∩ col_j|`; matchable iff `s_ij >= match_threshold` and
/// `i != j`.
pub fn build_similarity(vis: &VisibilityMatrix, match_threshold: u32) -> SimilarityMatrix {
    assert!(match_threshold >= 1, "match threshold must be at least 1");
    let n = vis.n_cameras();
    let rows: Vec<Vec<u32>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let ci = vis.column(i);
            (0..n).map(|j| if j < i { 0 } else { ci.intersection_count(vis.column(j)) as u32 }).collect()
        })
        .collect();
    let mut counts = vec![0u32; n * n];
    for i in 0..n {
        for j in i..n {
            counts[i * n + j] = rows[i][j];
            counts[j * n + i] = rows[i][j];
        }
    }
    let mut bits = vec![FixedBitSet::with_capacity(n); n];
    for i in 0..n {
        for j in 0..n {
            if i != j && counts[i * n + j] >= match_threshold {
                bits[i].insert(j);
            }
        }
    }
    SimilarityMatrix { n, counts, bits, match_threshold }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Block, Rect};
    use crate::model::{project_point, Camera, CameraIntrinsics, CameraPose, Point3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam(id: u32, center: [f64; 3], yaw: f64) -> Camera<f64> {
        let f = [yaw.cos(), yaw.sin(), 0.0];
        let m = [[f[1], -f[0], 0.0], [0.0, 0.0, -1.0], f];
        let k = CameraIntrinsics::new(800.0, 800.0, 640.0, 360.0, 1280, 720).unwrap();
        Camera::new(CameraId(id), k, CameraPose::from_matrix_and_center(&m, &center).unwrap())
    }

    fn cluster_of(cams: &[u32], kp: &[u64], sampled: Vec<Point3<f64>>) -> Cluster<f64> {
        let core = Rect { min: [0.0, 0.0], max: [20.0, 20.0] };
        Cluster {
            id: 0,
            blocks: vec![Block { index: (0, 0), core_bounds: core, expanded_bounds: core.grow(2.0) }],
            keypoints: kp.iter().map(|&k| PointId(k)).collect(),
            sampled,
            cameras: cams.iter().map(|&c| CameraId(c)).collect(),
            centroid: [10.0, 10.0, 0.0],
            sample_id_base: 0,
        }
    }

    #[test]
    fn single_point_on_axis() {
        let scene = Scene::new(vec![cam(0, [0.0, 0.0, 0.0], 0.0)], vec![]).unwrap();
        let c = cluster_of(&[0], &[], vec![Point3::sampled(PointId(9), [10.0, 0.0, 0.0])]);
        let vis = build_visibility_matrix(&c, &scene, &AssociationConfig::default()).unwrap();
        assert_eq!(vis.to_ascii(), "1\n");
    }

    #[test]
    fn back_to_back_cameras() {
        let scene = Scene::new(
            vec![cam(0, [0.0, 0.0, 0.0], 0.0), cam(1, [0.0, 0.0, 0.0], std::f64::consts::PI)],
            vec![],
        )
        .unwrap();
        let c = cluster_of(&[0, 1], &[], vec![Point3::sampled(PointId(9), [10.0, 1.0, 0.5])]);
        let vis = build_visibility_matrix(&c, &scene, &AssociationConfig::default()).unwrap();
        assert_eq!(vis.row(0).count_ones(..), 1);
        assert!(vis.get(0, 0));
    }

    #[test]
    fn no_cameras_is_error() {
        let scene = Scene::new(vec![cam(0, [0.0; 3], 0.0)], vec![]).unwrap();
        let c = cluster_of(&[], &[], vec![]);
        assert_eq!(
            build_visibility_matrix(&c, &scene, &AssociationConfig::default()).unwrap_err(),
            VisibilityError::NoCameras(0)
        );
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cams: Vec<Camera<f64>> = (0..20)
            .map(|i| {
                let c = [rng.random_range(-30.0..50.0), rng.random_range(-30.0..50.0), 1.5];
                cam(i, c, rng.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let kps: Vec<Point3<f64>> = (0..50u64)
            .map(|i| Point3::keypoint(PointId(i), [rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(0.0..8.0)], vec![CameraId(0)]))
            .collect();
        let sampled: Vec<Point3<f64>> = (0..150u64)
            .map(|i| Point3::sampled(PointId(1000 + i), [rng.random_range(-2.0..22.0), rng.random_range(-2.0..22.0), rng.random_range(0.0..8.0)]))
            .collect();
        let scene = Scene::new(cams.clone(), kps.clone()).unwrap();
        let c = cluster_of(&(0..20).collect::<Vec<_>>(), &(0..50).collect::<Vec<_>>(), sampled.clone());
        let cfg = AssociationConfig::default();
        let vis = build_visibility_matrix(&c, &scene, &cfg).unwrap();
        let all: Vec<&Point3<f64>> = kps.iter().chain(sampled.iter()).collect();
        for (j, p) in all.iter().enumerate() {
            for (i, cm) in cams.iter().enumerate() {
                let want = match project_point(cm, &p.position) {
                    Some(pr) => pr.depth <= 50.0,
                    None => false,
                };
                assert_eq!(vis.get(j, i), want, "point {j} camera {i}");
            }
        }
    }

    #[test]
    fn similarity_of_identical_and_disjoint_columns() {
        let mut bits = vec![vec![false; 3]; 10];
        for r in bits.iter_mut().take(7) {
            r[0] = true;
            r[1] = true;
        }
        bits[9][2] = true;
        let vis = VisibilityMatrix::from_rows(
            (0..10).map(PointId).collect(),
            (0..3).map(CameraId).collect(),
            &bits,
        )
        .unwrap();
        let s = build_similarity(&vis, 5);
        assert_eq!(s.count(0, 1), 7);
        assert!(s.matchable(0, 1) && s.matchable(1, 0));
        assert_eq!(s.count(0, 2), 0);
        assert!(!s.matchable(0, 2));
        assert_eq!(s.count(0, 0), 7);
        assert!(!s.matchable(0, 0));
        assert_eq!(s.to_ascii(), "010\n100\n000\n");
    }

    #[test]
    fn similarity_equals_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let bits: Vec<Vec<bool>> =
            (0..80).map(|_| (0..10).map(|_| rng.random_bool(0.4)).collect()).collect();
        let vis = VisibilityMatrix::from_rows(
            (0..80).map(PointId).collect(),
            (0..10).map(CameraId).collect(),
            &bits,
        )
        .unwrap();
        for thr in [1u32, 5, 12, 30] {
            let s = build_similarity(&vis, thr);
            for i in 0..10 {
                for j in 0..10 {
                    let mut naive = 0u32;
                    for row in &bits {
                        naive += (row[i] && row[j]) as u32;
                    }
                    assert_eq!(s.count(i, j), naive);
                    assert_eq!(s.matchable(i, j), i != j && naive >= thr);
                }
            }
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let r = VisibilityMatrix::from_rows(vec![PointId(0)], vec![CameraId(0)], &[vec![true, false]]);
        assert_eq!(r.unwrap_err(), VisibilityError::Ragged);
    }

    proptest::proptest! {
        #[test]
        fn similarity_invariants(seed in 0u64..500, thr in 1u32..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(1..12usize);
            let p = rng.random_range(1..40usize);
            let bits: Vec<Vec<bool>> = (0..p).map(|_| (0..n).map(|_| rng.random_bool(0.5)).collect()).collect();
            let vis = VisibilityMatrix::from_rows(
                (0..p as u64).map(PointId).collect(), (0..n as u32).map(CameraId).collect(), &bits).unwrap();
            let s = build_similarity(&vis, thr);
            let looser = build_similarity(&vis, thr + 1);
            for i in 0..n {
                proptest::prop_assert_eq!(s.count(i, i) as usize, vis.visible_count(i));
                proptest::prop_assert!(!s.matchable(i, i));
                for j in 0..n {
                    proptest::prop_assert_eq!(s.count(i, j), s.count(j, i));
                    proptest::prop_assert_eq!(s.matchable(i, j), s.matchable(j, i));
                    proptest::prop_assert!(s.count(i, j) as usize <= vis.visible_count(i).min(vis.visible_count(j)));
                    // raising the threshold only removes edges
                    if looser.matchable(i, j) {
                        proptest::prop_assert!(s.matchable(i, j));
                    }
                }
            }
        }
    }
}
