//! Camera-to-cluster association and merging of undersized clusters.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::grid::Cluster;
use crate::model::{distance, project_point, Camera, CameraId, Scene, Vec3};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationConfig<T> {
    /// Candidate gate: camera center to cluster centroid, meters.
    pub max_centroid_distance: T,
    /// Points farther than this along the optical axis do not count as seen.
    pub max_depth: T,
    /// Clusters with fewer associated cameras get merged into a neighbor.
    pub min_cluster_cameras: usize,
}

impl<T: Real> Default for AssociationConfig<T> {
    fn default() -> Self {
        Self { max_centroid_distance: T::lit(40.0), max_depth: T::lit(50.0), min_cluster_cameras: 10 }
    }
}

impl<T: Real> AssociationConfig<T> {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_centroid_distance > T::zero()) {
            return Err(format!("max_centroid_distance {} must be positive", self.max_centroid_distance));
        }
        if !(self.max_depth > T::zero()) {
            return Err(format!("max_depth {} must be positive", self.max_depth));
        }
        if self.min_cluster_cameras == 0 {
            return Err("min_cluster_cameras must be at least 1".into());
        }
        Ok(())
    }
}

/// Visibility test shared by association, matrix construction and synthesis.
#[inline]
pub fn sees<T: Real>(camera: &Camera<T>, point: &Vec3<T>, max_depth: T) -> bool {
    matches!(project_point(camera, point), Some(p) if p.depth <= max_depth)
}

/// Hash grid over camera centers in the (x, y) plane.
pub(crate) struct CameraBuckets {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
}

impl CameraBuckets {
    pub(crate) fn new<T: Real>(cameras: &[Camera<T>], cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, cam) in cameras.iter().enumerate() {
            let c = cam.center();
            buckets.entry(Self::key(c[0].as_f64(), c[1].as_f64(), cell)).or_default().push(i);
        }
        Self { cell, buckets }
    }

    fn key(x: f64, y: f64, cell: f64) -> (i64, i64) {
        ((x / cell).floor() as i64, (y / cell).floor() as i64)
    }

    /// Camera positions whose bucket lies within `radius` of `(x, y)`; a
    /// superset of the cameras within `radius`, ascending.
    pub(crate) fn near(&self, x: f64, y: f64, radius: f64) -> Vec<usize> {
        let (lo_i, lo_j) = Self::key(x - radius, y - radius, self.cell);
        let (hi_i, hi_j) = Self::key(x + radius, y + radius, self.cell);
        let mut out = Vec::new();
        for i in lo_i..=hi_i {
            for j in lo_j..=hi_j {
                if let Some(v) = self.buckets.get(&(i, j)) {
                    out.extend_from_slice(v);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Axis-aligned 3D box used to cull cameras that cannot see any point of a
/// cluster.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Aabb<T> {
    min: Vec3<T>,
    max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    pub(crate) fn around<'a>(pts: impl Iterator<Item = &'a Vec3<T>>) -> Option<Self> {
        let mut min = [T::infinity(); 3];
        let mut max = [T::neg_infinity(); 3];
        let mut any = false;
        for p in pts {
            any = true;
            for a in 0..3 {
                min[a] = min[a].min(p[a]);
                max[a] = max[a].max(p[a]);
            }
        }
        any.then_some(Self { min, max })
    }

    /// True when every point of the box fails the same frustum half-space
    /// (behind, beyond the depth cutoff or outside one image edge).
    pub(crate) fn outside_frustum(&self, camera: &Camera<T>, max_depth: T) -> bool {
        let k = &camera.intrinsics;
        let w = T::from_u32(k.width).unwrap();
        let h = T::from_u32(k.height).unwrap();
        // half-spaces g(p_c) >= 0 that every visible point satisfies
        let planes = |p: &Vec3<T>| -> [T; 6] {
            [
                p[2],
                max_depth - p[2],
                k.fx * p[0] + k.cx * p[2],
                (w - k.cx) * p[2] - k.fx * p[0],
                k.fy * p[1] + k.cy * p[2],
                (h - k.cy) * p[2] - k.fy * p[1],
            ]
        };
        let mut all_out = [true; 6];
        for c in 0..8 {
            let corner = [
                if c & 1 == 0 { self.min[0] } else { self.max[0] },
                if c & 2 == 0 { self.min[1] } else { self.max[1] },
                if c & 4 == 0 { self.min[2] } else { self.max[2] },
            ];
            let g = planes(&camera.pose.to_camera(&corner));
            for (flag, v) in all_out.iter_mut().zip(g) {
                *flag &= v < T::zero();
            }
        }
        all_out.iter().any(|&f| f)
    }
}

fn cluster_positions<'a, T: Real>(
    cluster: &'a Cluster<T>,
    scene: &'a Scene<T>,
) -> impl Iterator<Item = &'a Vec3<T>> + 'a {
    cluster
        .keypoints
        .iter()
        .filter_map(|id| scene.point(*id).map(|p| &p.position))
        .chain(cluster.sampled.iter().map(|p| &p.position))
}

/// Associates to each cluster every nearby camera that sees at least one
/// of its points, and drops clusters left without cameras.
pub fn associate_cameras<T: Real>(
    clusters: Vec<Cluster<T>>,
    scene: &Scene<T>,
    cfg: &AssociationConfig<T>,
) -> Vec<Cluster<T>> {
    let gate = cfg.max_centroid_distance.as_f64();
    let buckets = CameraBuckets::new(scene.cameras(), gate);
    let cams = scene.cameras();
    clusters
        .into_par_iter()
        .filter_map(|mut cluster| {
            cluster.centroid = crate::grid::mean_position(cluster_positions(&cluster, scene));
            let c = cluster.centroid;
            let pts: Vec<Vec3<T>> = cluster_positions(&cluster, scene).copied().collect();
            let bbox = Aabb::around(pts.iter())?;
            let mut cameras: Vec<CameraId> = buckets
                .near(c[0].as_f64(), c[1].as_f64(), gate)
                .into_iter()
                .map(|i| &cams[i])
                .filter(|cam| distance(&cam.center(), &c) <= cfg.max_centroid_distance)
                .filter(|cam| !bbox.outside_frustum(cam, cfg.max_depth))
                .filter(|cam| pts.iter().any(|p| sees(cam, p, cfg.max_depth)))
                .map(|cam| cam.id)
                .collect();
            if cameras.is_empty() {
                return None;
            }
            cameras.sort_unstable();
            cameras.dedup();
            cluster.cameras = cameras;
            Some(cluster)
        })
        .collect()
}

fn adjacent<T>(a: &Cluster<T>, b: &Cluster<T>) -> bool {
    a.blocks.iter().any(|x| {
        b.blocks
            .iter()
            .any(|y| x.index.0.abs_diff(y.index.0) <= 1 && x.index.1.abs_diff(y.index.1) <= 1)
    })
}

fn intersection_len(a: &[CameraId], b: &[CameraId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn sorted_union<V: Ord + Copy>(a: &[V], b: &[V]) -> Vec<V> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v.sort_unstable();
    v.dedup();
    v
}

/// Absorbs `small` into `target`. The merged cluster keeps the target id.
fn absorb<T: Real>(target: &mut Cluster<T>, small: Cluster<T>) {
    let nt = T::from_usize(target.point_count()).unwrap();
    let ns = T::from_usize(small.point_count()).unwrap();
    let total = nt + ns;
    if total > T::zero() {
        for a in 0..3 {
            target.centroid[a] = (target.centroid[a] * nt + small.centroid[a] * ns) / total;
        }
    }
    target.blocks.extend(small.blocks);
    target.keypoints = sorted_union(&target.keypoints, &small.keypoints);
    target.cameras = sorted_union(&target.cameras, &small.cameras);
    let mut seen: std::collections::HashSet<u64> = target.sampled.iter().map(|p| p.id.0).collect();
    target.sampled.extend(small.sampled.into_iter().filter(|p| seen.insert(p.id.0)));
}

/// Repeatedly merges the smallest under-threshold cluster into its best
/// neighbor until every cluster reaches `min_cluster_cameras` or only one
/// cluster is left.
///
/// The partner is the 8-adjacent cluster sharing the most cameras, ties
/// broken by centroid distance and then by id. Isolated clusters merge into
/// the nearest cluster by centroid.
pub fn merge_small_clusters<T: Real>(mut clusters: Vec<Cluster<T>>, cfg: &AssociationConfig<T>) -> Vec<Cluster<T>> {
    clusters.sort_by_key(|c| c.id);
    loop {
        if clusters.len() <= 1 {
            if let Some(c) = clusters.first() {
                if c.cameras.len() < cfg.min_cluster_cameras {
                    log::warn!(
                        "cluster {} has {} cameras, below the minimum {}, and cannot be merged further",
                        c.id,
                        c.cameras.len(),
                        cfg.min_cluster_cameras
                    );
                }
            }
            return clusters;
        }
        let Some(small_pos) = clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cameras.len() < cfg.min_cluster_cameras)
            .min_by_key(|(_, c)| (c.cameras.len(), c.id))
            .map(|(i, _)| i)
        else {
            return clusters;
        };
        let small = &clusters[small_pos];
        let dist = |c: &Cluster<T>| distance(&c.centroid, &small.centroid).as_f64();
        let neighbours: Vec<usize> = (0..clusters.len())
            .filter(|&i| i != small_pos && adjacent(small, &clusters[i]))
            .collect();
        let partner = if neighbours.is_empty() {
            (0..clusters.len()).filter(|&i| i != small_pos).min_by(|&a, &b| {
                dist(&clusters[a])
                    .total_cmp(&dist(&clusters[b]))
                    .then(clusters[a].id.cmp(&clusters[b].id))
            })
        } else {
            neighbours.into_iter().min_by(|&a, &b| {
                let ia = intersection_len(&small.cameras, &clusters[a].cameras);
                let ib = intersection_len(&small.cameras, &clusters[b].cameras);
                ib.cmp(&ia)
                    .then(dist(&clusters[a]).total_cmp(&dist(&clusters[b])))
                    .then(clusters[a].id.cmp(&clusters[b].id))
            })
        }
        .expect("at least two clusters");
        let small = clusters.remove(small_pos);
        let partner = if partner > small_pos { partner - 1 } else { partner };
        absorb(&mut clusters[partner], small);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Block, Rect};
    use crate::model::{CameraIntrinsics, CameraPose, Point3, PointId};

    fn cam_at(id: u32, center: [f64; 3], forward: [f64; 3]) -> Camera<f64> {
        // forward is horizontal; camera y axis points down
        let f = forward;
        let right = [f[1], -f[0], 0.0];
        let down = [0.0, 0.0, -1.0];
        let m = [right, down, f];
        let k = CameraIntrinsics::new(1000.0, 1000.0, 960.0, 540.0, 1920, 1080).unwrap();
        let pose = CameraPose::from_matrix_and_center(&m, &center).unwrap();
        Camera::new(CameraId(id), k, pose)
    }

    fn block(i: u32, j: u32) -> Block<f64> {
        let core = Rect { min: [i as f64 * 20.0, j as f64 * 20.0], max: [i as f64 * 20.0 + 20.0, j as f64 * 20.0 + 20.0] };
        Block { index: (i, j), core_bounds: core, expanded_bounds: core.grow(2.0) }
    }

    fn cluster(id: usize, b: Block<f64>, cams: &[u32], sampled: Vec<Point3<f64>>) -> Cluster<f64> {
        let c = b.core_bounds.center();
        Cluster {
            id,
            blocks: vec![b],
            keypoints: vec![],
            sampled,
            cameras: cams.iter().map(|&c| CameraId(c)).collect(),
            centroid: [c[0], c[1], 0.0],
            sample_id_base: 0,
        }
    }

    #[test]
    fn camera_rotation_helper_is_right_handed() {
        let cam = cam_at(0, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]);
        let p = project_point(&cam, &[10.0, 0.0, 0.0]).unwrap();
        assert!((p.u - 960.0).abs() < 1e-9 && (p.v - 540.0).abs() < 1e-9);
        // a point above the horizon appears in the upper half of the image
        let up = project_point(&cam, &[10.0, 0.0, 1.0]).unwrap();
        assert!(up.v < 540.0);
        // a point to the right appears on the right side
        let right = project_point(&cam, &[10.0, -1.0, 0.0]).unwrap();
        assert!(right.u > 960.0);
    }

    fn scene_with(cams: Vec<Camera<f64>>) -> Scene<f64> {
        Scene::new(cams, vec![]).unwrap()
    }

    #[test]
    fn gates_by_distance_and_visibility() {
        // single lattice point at (10, 10, 0)
        let pts = vec![Point3::sampled(PointId(1000), [10.0, 10.0, 0.0])];
        let c = cluster(0, block(0, 0), &[], pts);
        let cams = vec![
            cam_at(1, [-20.0, 10.0, 0.0], [1.0, 0.0, 0.0]),  // 30 m, looking at it
            cam_at(2, [-90.0, 10.0, 0.0], [1.0, 0.0, 0.0]),  // 100 m, outside gate
            cam_at(3, [-20.0, 10.0, 0.0], [-1.0, 0.0, 0.0]), // facing away
        ];
        let scene = scene_with(cams);
        let out = associate_cameras(vec![c], &scene, &AssociationConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cameras, vec![CameraId(1)]);
    }

    #[test]
    fn cluster_without_cameras_is_dropped() {
        let pts = vec![Point3::sampled(PointId(1000), [10.0, 10.0, 0.0])];
        let c = cluster(0, block(0, 0), &[], pts);
        let scene = scene_with(vec![cam_at(3, [-20.0, 10.0, 0.0], [-1.0, 0.0, 0.0])]);
        assert!(associate_cameras(vec![c], &scene, &AssociationConfig::default()).is_empty());
    }

    #[test]
    fn depth_cutoff_applies() {
        let pts = vec![Point3::sampled(PointId(1000), [10.0, 10.0, 0.0])];
        let c = cluster(0, block(0, 0), &[], pts);
        let scene = scene_with(vec![cam_at(1, [-20.0, 10.0, 0.0], [1.0, 0.0, 0.0])]);
        let cfg = AssociationConfig { max_depth: 25.0, ..AssociationConfig::default() };
        assert!(associate_cameras(vec![c], &scene, &cfg).is_empty());
    }

    #[test]
    fn frustum_cull_agrees_with_point_tests() {
        let cam = cam_at(1, [0.0, 0.0, 1.5], [0.6, 0.8, 0.0]);
        let mut rng = 12345u64;
        let mut next = || {
            rng ^= rng << 13;
            rng ^= rng >> 7;
            rng ^= rng << 17;
            (rng % 10_000) as f64 / 100.0 - 50.0
        };
        for _ in 0..300 {
            let (x, y, z) = (next(), next(), next() / 5.0);
            let pts: Vec<Vec3<f64>> = (0..27)
                .map(|k| [x + (k % 3) as f64, y + ((k / 3) % 3) as f64, z + (k / 9) as f64])
                .collect();
            let bbox = Aabb::around(pts.iter()).unwrap();
            if bbox.outside_frustum(&cam, 50.0) {
                assert!(pts.iter().all(|p| !sees(&cam, p, 50.0)));
            }
        }
    }

    #[test]
    fn small_cluster_merges_into_larger_neighbour() {
        let a = cluster(0, block(0, 0), &[1, 2, 3], vec![]);
        let b = cluster(1, block(1, 0), &(3..15).collect::<Vec<_>>(), vec![]);
        let out = merge_small_clusters(vec![a, b], &AssociationConfig::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, 1);
        assert_eq!(out[0].cameras.len(), 14);
        assert_eq!(out[0].blocks.len(), 2);
    }

    #[test]
    fn no_merge_when_all_large_enough() {
        let a = cluster(0, block(0, 0), &(0..10).collect::<Vec<_>>(), vec![]);
        let b = cluster(1, block(1, 0), &(5..20).collect::<Vec<_>>(), vec![]);
        let input = vec![a, b];
        assert_eq!(merge_small_clusters(input.clone(), &AssociationConfig::default()), input);
    }

    /// Straight-line re-statement of the merge rule used as an oracle.
    fn merge_oracle(mut sizes: Vec<(usize, Vec<u32>, Vec<(u32, u32)>)>, min: usize) -> Vec<(usize, Vec<u32>)> {
        loop {
            if sizes.len() <= 1 {
                break;
            }
            let Some(s) = (0..sizes.len())
                .filter(|&i| sizes[i].1.len() < min)
                .min_by_key(|&i| (sizes[i].1.len(), sizes[i].0))
            else {
                break;
            };
            let small = sizes.remove(s);
            let mut best: Option<(usize, usize)> = None;
            for (i, c) in sizes.iter().enumerate() {
                let adj = c.2.iter().any(|a| small.2.iter().any(|b| a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1));
                if !adj {
                    continue;
                }
                let inter = c.1.iter().filter(|x| small.1.contains(x)).count();
                if best.map_or(true, |(_, bi)| inter > bi) {
                    best = Some((i, inter));
                }
            }
            let (t, _) = best.expect("chain scenario always has a neighbour");
            sizes[t].1.extend(small.1);
            sizes[t].1.sort();
            sizes[t].1.dedup();
            sizes[t].2.extend(small.2);
        }
        sizes.into_iter().map(|(id, c, _)| (id, c)).collect()
    }

    #[test]
    fn chain_of_three_small_clusters() {
        let a = cluster(0, block(0, 0), &[0, 1, 2, 3], vec![]);
        let b = cluster(1, block(1, 0), &[4, 5, 6, 7], vec![]);
        let c = cluster(2, block(2, 0), &[8, 9, 10, 11], vec![]);
        let out = merge_small_clusters(vec![a, b, c], &AssociationConfig::default());
        let oracle = merge_oracle(
            vec![
                (0, vec![0, 1, 2, 3], vec![(0, 0)]),
                (1, vec![4, 5, 6, 7], vec![(1, 0)]),
                (2, vec![8, 9, 10, 11], vec![(2, 0)]),
            ],
            10,
        );
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].cameras.len(), 12);
        assert_eq!(oracle.len(), 1);
        assert_eq!(out[0].id, oracle[0].0);
        assert_eq!(out[0].cameras.iter().map(|c| c.0).collect::<Vec<_>>(), oracle[0].1);
    }

    #[test]
    fn isolated_cluster_merges_with_nearest() {
        let a = cluster(0, block(0, 0), &[1], vec![]);
        let b = cluster(1, block(5, 0), &(10..25).collect::<Vec<_>>(), vec![]);
        let c = cluster(2, block(9, 0), &(30..45).collect::<Vec<_>>(), vec![]);
        let out = merge_small_clusters(vec![a, b, c], &AssociationConfig::default());
        assert_eq!(out.len(), 2);
        assert!(out[0].cameras.contains(&CameraId(1)));
        assert_eq!(out[0].id, 1);
    }

    #[test]
    fn lone_small_cluster_is_kept() {
        let a = cluster(0, block(0, 0), &[1, 2], vec![]);
        let out = merge_small_clusters(vec![a.clone()], &AssociationConfig::default());
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn merging_preserves_union_of_cameras_and_points() {
        let mk = |id: usize, i: u32, cams: &[u32], kp: &[u64]| {
            let mut c = cluster(id, block(i, 0), cams, vec![Point3::sampled(PointId(1000 + id as u64), [0.0; 3])]);
            c.keypoints = kp.iter().map(|&k| PointId(k)).collect();
            c
        };
        let input = vec![
            mk(0, 0, &[1, 2], &[1, 2]),
            mk(1, 1, &[2, 3, 4], &[2, 3]),
            mk(2, 2, &(5..20).collect::<Vec<_>>(), &[4]),
            mk(3, 3, &[19, 20], &[5, 6]),
        ];
        let before_c: std::collections::BTreeSet<_> = input.iter().flat_map(|c| c.cameras.clone()).collect();
        let before_k: std::collections::BTreeSet<_> = input.iter().flat_map(|c| c.keypoints.clone()).collect();
        let out = merge_small_clusters(input, &AssociationConfig::default());
        let after_c: std::collections::BTreeSet<_> = out.iter().flat_map(|c| c.cameras.clone()).collect();
        let after_k: std::collections::BTreeSet<_> = out.iter().flat_map(|c| c.keypoints.clone()).collect();
        assert_eq!(before_c, after_c);
        assert_eq!(before_k, after_k);
        assert!(out.iter().all(|c| c.cameras.len() >= 10) || out.len() == 1);
        assert_eq!(out.iter().map(|c| c.sampled.len()).sum::<usize>(), 4);
    }
}
