//! Overlapping 2D grid on the ground plane, keypoint binning and uniform
//! point sampling inside each block.

use std::collections::HashMap;

use thiserror::Error;

use crate::model::{CameraId, Point3, PointId, Scene, Vec3};
use crate::num::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid grid config: {0}")]
    InvalidConfig(String),
    #[error("scene has no keypoints")]
    NoKeypoints,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridConfig<T> {
    pub block_x: T,
    pub block_y: T,
    pub overlap: T,
    pub sample_resolution: T,
}

impl<T: Real> Default for GridConfig<T> {
    fn default() -> Self {
        Self {
            block_x: T::lit(20.0),
            block_y: T::lit(20.0),
            overlap: T::lit(2.0),
            sample_resolution: T::lit(1.0),
        }
    }
}

impl<T: Real> GridConfig<T> {
    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |m: String| Err(GridError::InvalidConfig(m));
        if !(self.block_x > T::zero() && self.block_y > T::zero()) {
            return bad(format!("block size {}x{} must be positive", self.block_x, self.block_y));
        }
        let half = self.block_x.min(self.block_y) / T::lit(2.0);
        if !(self.overlap >= T::zero() && self.overlap < half) {
            return bad(format!("overlap {} must lie in [0, {half})", self.overlap));
        }
        if !(self.sample_resolution > T::zero()) {
            return bad(format!("sample resolution {} must be positive", self.sample_resolution));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle on the (x, y) plane, `[min, max)` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub min: [T; 2],
    pub max: [T; 2],
}

impl<T: Real> Rect<T> {
    #[inline]
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.min[0] && x < self.max[0] && y >= self.min[1] && y < self.max[1]
    }

    #[inline]
    pub fn contains_closed(&self, x: T, y: T) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }

    pub fn grow(&self, d: T) -> Self {
        Self { min: [self.min[0] - d, self.min[1] - d], max: [self.max[0] + d, self.max[1] + d] }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn width(&self) -> T {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> T {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [T; 2] {
        let two = T::lit(2.0);
        [(self.min[0] + self.max[0]) / two, (self.min[1] + self.max[1]) / two]
    }
}

pub type BlockIndex = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Block<T> {
    pub index: BlockIndex,
    pub core_bounds: Rect<T>,
    pub expanded_bounds: Rect<T>,
}

/// A spatial cluster: one or more grid blocks, their points and cameras.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T> {
    pub id: usize,
    /// Member blocks. A single block until small clusters are merged.
    pub blocks: Vec<Block<T>>,
    /// Keypoints whose (x, y) falls in an expanded block bound, ascending.
    pub keypoints: Vec<PointId>,
    pub sampled: Vec<Point3<T>>,
    /// Associated cameras, ascending and duplicate-free.
    pub cameras: Vec<CameraId>,
    /// Centroid of the cluster's point set.
    pub centroid: Vec3<T>,
    /// First id handed out to sampled points of this cluster.
    pub sample_id_base: u64,
}

impl<T: Real> Cluster<T> {
    pub fn core_bounds(&self) -> Rect<T> {
        self.blocks[1..].iter().fold(self.blocks[0].core_bounds, |r, b| r.union(&b.core_bounds))
    }

    pub fn expanded_bounds(&self) -> Rect<T> {
        self.blocks[1..]
            .iter()
            .fold(self.blocks[0].expanded_bounds, |r, b| r.union(&b.expanded_bounds))
    }

    pub fn point_count(&self) -> usize {
        self.keypoints.len() + self.sampled.len()
    }
}

/// Grid origin and stride. The origin is the grid cell corner (multiple of
/// the block size) containing the minimum keypoint coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridLayout<T> {
    pub origin: [T; 2],
    pub stride: [T; 2],
    pub overlap: T,
    pub dims: (u32, u32),
}

impl<T: Real> GridLayout<T> {
    pub fn new<'a, I>(positions: I, cfg: &GridConfig<T>) -> Result<Self, GridError>
    where
        I: IntoIterator<Item = &'a Vec3<T>>,
    {
        cfg.validate()?;
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        let mut any = false;
        for p in positions {
            any = true;
            for a in 0..2 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        if !any {
            return Err(GridError::NoKeypoints);
        }
        let stride = [cfg.block_x, cfg.block_y];
        let origin = [(lo[0] / stride[0]).floor() * stride[0], (lo[1] / stride[1]).floor() * stride[1]];
        let mut dims = [0u32; 2];
        for a in 0..2 {
            let mut n = ((hi[a] - origin[a]) / stride[a]).floor().to_u32().unwrap_or(0) + 1;
            // guard floating error at cell edges
            while origin[a] + T::from_u32(n).unwrap() * stride[a] <= hi[a] {
                n += 1;
            }
            while n > 1 && origin[a] + T::from_u32(n - 1).unwrap() * stride[a] > hi[a] {
                n -= 1;
            }
            dims[a] = n;
        }
        Ok(Self { origin, stride, overlap: cfg.overlap, dims: (dims[0], dims[1]) })
    }

    pub fn block(&self, index: BlockIndex) -> Block<T> {
        let i = T::from_u32(index.0).unwrap();
        let j = T::from_u32(index.1).unwrap();
        let one = T::one();
        let core = Rect {
            min: [self.origin[0] + i * self.stride[0], self.origin[1] + j * self.stride[1]],
            max: [self.origin[0] + (i + one) * self.stride[0], self.origin[1] + (j + one) * self.stride[1]],
        };
        Block { index, core_bounds: core, expanded_bounds: core.grow(self.overlap) }
    }

    /// All blocks of the grid in row-major order of `(i, j)`.
    pub fn all_blocks(&self) -> Vec<Block<T>> {
        let mut out = Vec::with_capacity(self.dims.0 as usize * self.dims.1 as usize);
        for i in 0..self.dims.0 {
            for j in 0..self.dims.1 {
                out.push(self.block((i, j)));
            }
        }
        out
    }

    /// Index ranges of blocks whose expanded bounds may contain `(x, y)`,
    /// padded by one on each side. Callers confirm with [`Rect::contains`].
    fn candidate_range(&self, x: T, y: T) -> (std::ops::RangeInclusive<u32>, std::ops::RangeInclusive<u32>) {
        let axis = |v: T, a: usize, n: u32| {
            let lo = ((v - self.origin[a] - self.overlap) / self.stride[a]).floor() - T::one();
            let hi = ((v - self.origin[a] + self.overlap) / self.stride[a]).floor() + T::one();
            let clamp = |t: T| t.max(T::zero()).min(T::from_u32(n - 1).unwrap()).to_u32().unwrap();
            clamp(lo)..=clamp(hi)
        };
        (axis(x, 0, self.dims.0), axis(y, 1, self.dims.1))
    }
}

/// Infers the layout back from a block list produced by [`build_grid`].
fn layout_from_blocks<T: Real>(blocks: &[Block<T>]) -> GridLayout<T> {
    let b = &blocks[0];
    let stride = [b.core_bounds.width(), b.core_bounds.height()];
    let overlap = b.core_bounds.min[0] - b.expanded_bounds.min[0];
    let origin = [
        b.core_bounds.min[0] - T::from_u32(b.index.0).unwrap() * stride[0],
        b.core_bounds.min[1] - T::from_u32(b.index.1).unwrap() * stride[1],
    ];
    let max_i = blocks.iter().map(|b| b.index.0).max().unwrap();
    let max_j = blocks.iter().map(|b| b.index.1).max().unwrap();
    GridLayout { origin, stride, overlap, dims: (max_i + 1, max_j + 1) }
}

fn for_each_containing_block<T: Real>(
    layout: &GridLayout<T>,
    lookup: &HashMap<BlockIndex, usize>,
    blocks: &[Block<T>],
    x: T,
    y: T,
    mut f: impl FnMut(usize),
) {
    let (ri, rj) = layout.candidate_range(x, y);
    for i in ri {
        for j in rj.clone() {
            if let Some(&pos) = lookup.get(&(i, j)) {
                if blocks[pos].expanded_bounds.contains(x, y) {
                    f(pos);
                }
            }
        }
    }
}

/// Builds the grid over the keypoint bounding rectangle and keeps only the
/// blocks whose expanded bounds contain at least one keypoint.
pub fn build_grid<T: Real>(scene: &Scene<T>, cfg: &GridConfig<T>) -> Result<Vec<Block<T>>, GridError> {
    let layout = GridLayout::new(scene.keypoints().map(|p| &p.position), cfg)?;
    let all = layout.all_blocks();
    let lookup: HashMap<BlockIndex, usize> =
        all.iter().enumerate().map(|(pos, b)| (b.index, pos)).collect();
    let mut occupied = vec![false; all.len()];
    for p in scene.keypoints() {
        for_each_containing_block(&layout, &lookup, &all, p.position[0], p.position[1], |pos| {
            occupied[pos] = true
        });
    }
    Ok(all.into_iter().zip(occupied).filter_map(|(b, occ)| occ.then_some(b)).collect())
}

/// Bins every keypoint into each block whose expanded bounds contain it and
/// drops empty blocks. Cluster ids follow block order.
pub fn assign_keypoints<T: Real>(blocks: &[Block<T>], scene: &Scene<T>) -> Vec<Cluster<T>> {
    if blocks.is_empty() {
        return Vec::new();
    }
    let layout = layout_from_blocks(blocks);
    let lookup: HashMap<BlockIndex, usize> =
        blocks.iter().enumerate().map(|(pos, b)| (b.index, pos)).collect();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); blocks.len()];
    for (pi, p) in scene.points().iter().enumerate() {
        if p.origin != crate::model::PointOrigin::Keypoint {
            continue;
        }
        for_each_containing_block(&layout, &lookup, blocks, p.position[0], p.position[1], |pos| {
            members[pos].push(pi)
        });
    }
    let id_floor = scene.max_point_id().map_or(0, |m| m.0 + 1);
    let mut clusters = Vec::new();
    for (block, idx) in blocks.iter().zip(members) {
        if idx.is_empty() {
            continue;
        }
        let id = clusters.len();
        let pts = scene.points();
        let mut keypoints: Vec<PointId> = idx.iter().map(|&i| pts[i].id).collect();
        keypoints.sort_unstable();
        let centroid = mean_position(idx.iter().map(|&i| &pts[i].position));
        clusters.push(Cluster {
            id,
            blocks: vec![*block],
            keypoints,
            sampled: Vec::new(),
            cameras: Vec::new(),
            centroid,
            sample_id_base: id_floor + ((id as u64) << 32),
        });
    }
    clusters
}

pub(crate) fn mean_position<'a, T: Real>(it: impl Iterator<Item = &'a Vec3<T>>) -> Vec3<T> {
    let mut sum = [T::zero(); 3];
    let mut n = 0usize;
    for p in it {
        for a in 0..3 {
            sum[a] = sum[a] + p[a];
        }
        n += 1;
    }
    if n == 0 {
        return sum;
    }
    let n = T::from_usize(n).unwrap();
    sum.map(|s| s / n)
}

fn lattice_count<T: Real>(span: T, r: T) -> usize {
    if !(span > T::zero()) {
        return 1;
    }
    (span / r + T::lit(1e-9)).floor().to_usize().unwrap_or(0) + 1
}

/// Regular lattice with spacing `r` anchored at the minimum corner of the
/// cluster's expanded bounds, endpoints inclusive.
pub fn sample_uniform_points<T: Real>(
    cluster: &Cluster<T>,
    cfg: &GridConfig<T>,
    z_range: (T, T),
) -> Vec<Point3<T>> {
    let bounds = cluster.expanded_bounds();
    let r = cfg.sample_resolution;
    let nx = lattice_count(bounds.width(), r);
    let ny = lattice_count(bounds.height(), r);
    let nz = lattice_count(z_range.1 - z_range.0, r);
    let mut out = Vec::with_capacity(nx * ny * nz);
    let mut next = cluster.sample_id_base;
    for ix in 0..nx {
        let x = bounds.min[0] + T::from_usize(ix).unwrap() * r;
        for iy in 0..ny {
            let y = bounds.min[1] + T::from_usize(iy).unwrap() * r;
            for iz in 0..nz {
                let z = z_range.0 + T::from_usize(iz).unwrap() * r;
                out.push(Point3::sampled(PointId(next), [x, y, z]));
                next += 1;
            }
        }
    }
    out
}

/// Linear-interpolated percentile of an unsorted sample, `q` in `[0, 1]`.
pub fn percentile<T: Real>(values: &mut [T], q: f64) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let rank = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = T::lit(rank - lo as f64);
    Some(values[lo] + (values[hi] - values[lo]) * frac)
}

pub const MIN_KEYPOINTS_FOR_LOCAL_Z: usize = 20;

/// Vertical sampling extent: the 2nd to 98th percentile of keypoint heights
/// in the cluster, or of the whole scene when the cluster has fewer than
/// [`MIN_KEYPOINTS_FOR_LOCAL_Z`] keypoints.
pub fn default_z_range<T: Real>(cluster: &Cluster<T>, scene: &Scene<T>, scene_range: (T, T)) -> (T, T) {
    if cluster.keypoints.len() < MIN_KEYPOINTS_FOR_LOCAL_Z {
        return scene_range;
    }
    let mut zs: Vec<T> =
        cluster.keypoints.iter().filter_map(|id| scene.point(*id)).map(|p| p.position[2]).collect();
    z_percentile_range(&mut zs).unwrap_or(scene_range)
}

pub fn scene_z_range<T: Real>(scene: &Scene<T>) -> (T, T) {
    let mut zs: Vec<T> = scene.keypoints().map(|p| p.position[2]).collect();
    z_percentile_range(&mut zs).unwrap_or((T::zero(), T::zero()))
}

fn z_percentile_range<T: Real>(zs: &mut [T]) -> Option<(T, T)> {
    let lo = percentile(zs, 0.02)?;
    let hi = percentile(zs, 0.98)?;
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Camera, CameraIntrinsics, CameraPose};
    use proptest::prelude::*;

    fn scene_with(points: &[[f64; 3]]) -> Scene<f64> {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let cam = Camera::new(CameraId(0), k, CameraPose::identity());
        let pts = points
            .iter()
            .enumerate()
            .map(|(i, p)| Point3::keypoint(PointId(i as u64), *p, vec![CameraId(0)]))
            .collect();
        Scene::new(vec![cam], pts).unwrap()
    }

    /// Scan of every grid rectangle, independent of the index arithmetic.
    fn brute_force_membership(all: &[Block<f64>], x: f64, y: f64) -> Vec<BlockIndex> {
        let mut v: Vec<BlockIndex> = all
            .iter()
            .filter(|b| {
                let r = &b.expanded_bounds;
                r.min[0] <= x && x < r.max[0] && r.min[1] <= y && y < r.max[1]
            })
            .map(|b| b.index)
            .collect();
        v.sort();
        v
    }

    #[test]
    fn single_keypoint_single_block() {
        let scene = scene_with(&[[5.0, 5.0, 0.0]]);
        let blocks = build_grid(&scene, &GridConfig::default()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].index, (0, 0));
        assert_eq!(blocks[0].core_bounds, Rect { min: [0.0, 0.0], max: [20.0, 20.0] });
        assert_eq!(blocks[0].expanded_bounds, Rect { min: [-2.0, -2.0], max: [22.0, 22.0] });
    }

    #[test]
    fn two_separated_keypoints() {
        let scene = scene_with(&[[5.0, 5.0, 0.0], [25.0, 5.0, 0.0]]);
        let blocks = build_grid(&scene, &GridConfig::default()).unwrap();
        let idx: Vec<_> = blocks.iter().map(|b| b.index).collect();
        assert_eq!(idx, vec![(0, 0), (1, 0)]);
        let clusters = assign_keypoints(&blocks, &scene);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].keypoints, vec![PointId(0)]);
        assert_eq!(clusters[1].keypoints, vec![PointId(1)]);
    }

    #[test]
    fn overlap_zone_double_membership() {
        let scene = scene_with(&[[5.0, 5.0, 0.0], [19.5, 5.0, 0.0], [25.0, 5.0, 0.0]]);
        let blocks = build_grid(&scene, &GridConfig::default()).unwrap();
        assert_eq!(blocks[1].expanded_bounds.min[0], 18.0);
        let clusters = assign_keypoints(&blocks, &scene);
        let holders: Vec<_> = clusters
            .iter()
            .filter(|c| c.keypoints.contains(&PointId(1)))
            .map(|c| c.blocks[0].index)
            .collect();
        assert_eq!(holders, vec![(0, 0), (1, 0)]);
        let layout = GridLayout::new(scene.keypoints().map(|p| &p.position), &GridConfig::default())
            .unwrap();
        assert_eq!(brute_force_membership(&layout.all_blocks(), 19.5, 5.0), vec![(0, 0), (1, 0)]);
    }

    #[test]
    fn corner_zone_quadruple_membership() {
        let mut pts = vec![];
        for i in 0..3 {
            for j in 0..3 {
                pts.push([i as f64 * 20.0 + 10.0, j as f64 * 20.0 + 10.0, 0.0]);
            }
        }
        pts.push([20.5, 39.5, 0.0]);
        let scene = scene_with(&pts);
        let clusters = assign_keypoints(&build_grid(&scene, &GridConfig::default()).unwrap(), &scene);
        let corner = PointId(9);
        let n = clusters.iter().filter(|c| c.keypoints.contains(&corner)).count();
        assert_eq!(n, 4);
    }

    #[test]
    fn all_points_in_one_block() {
        let scene = scene_with(&[[1.0, 1.0, 0.0], [3.0, 4.0, 0.0], [7.0, 9.0, 1.0]]);
        let clusters = assign_keypoints(&build_grid(&scene, &GridConfig::default()).unwrap(), &scene);
        assert_eq!(clusters.len(), 1);
        assert_eq!(clusters[0].keypoints.len(), 3);
    }

    #[test]
    fn no_keypoints_is_an_error() {
        let scene = scene_with(&[]);
        assert_eq!(build_grid(&scene, &GridConfig::default()).unwrap_err(), GridError::NoKeypoints);
    }

    #[test]
    fn config_validation() {
        let mut cfg = GridConfig::<f64>::default();
        cfg.overlap = 10.0;
        assert!(cfg.validate().is_err());
        cfg.overlap = -1.0;
        assert!(cfg.validate().is_err());
        let cfg = GridConfig { sample_resolution: 0.0, ..GridConfig::<f64>::default() };
        assert!(cfg.validate().is_err());
    }

    fn one_cluster(expanded: Rect<f64>) -> Cluster<f64> {
        let core = expanded.grow(-2.0);
        Cluster {
            id: 0,
            blocks: vec![Block { index: (0, 0), core_bounds: core, expanded_bounds: expanded }],
            keypoints: vec![],
            sampled: vec![],
            cameras: vec![],
            centroid: [0.0; 3],
            sample_id_base: 100,
        }
    }

    #[test]
    fn lattice_count_24m_at_1m() {
        let c = one_cluster(Rect { min: [-2.0, -2.0], max: [22.0, 22.0] });
        let pts = sample_uniform_points(&c, &GridConfig::default(), (0.0, 0.0));
        // independent count: enumerate candidate lattice coordinates and keep in-bound ones
        let mut count = 0;
        for i in 0..100 {
            for j in 0..100 {
                let (x, y) = (-2.0 + i as f64, -2.0 + j as f64);
                if x <= 22.0 && y <= 22.0 {
                    count += 1;
                }
            }
        }
        assert_eq!(count, 625);
        assert_eq!(pts.len(), 625);
        assert!(pts.iter().all(|p| c.expanded_bounds().contains_closed(p.position[0], p.position[1])));
        assert!(pts.iter().all(|p| p.track.is_empty()));
        assert_eq!(pts[0].id, PointId(100));
        assert_eq!(pts[0].position, [-2.0, -2.0, 0.0]);
    }

    #[test]
    fn coarse_resolution_gives_single_point() {
        let c = one_cluster(Rect { min: [0.0, 0.0], max: [5.0, 5.0] });
        let cfg = GridConfig { sample_resolution: 50.0, ..GridConfig::default() };
        let pts = sample_uniform_points(&c, &cfg, (1.0, 3.0));
        assert_eq!(pts.len(), 1);
        assert_eq!(pts[0].position, [0.0, 0.0, 1.0]);
    }

    #[test]
    fn default_parameters() {
        let cfg = GridConfig::<f64>::default();
        assert_eq!((cfg.block_x, cfg.block_y, cfg.overlap, cfg.sample_resolution), (20.0, 20.0, 2.0, 1.0));
    }

    #[test]
    fn percentile_interpolates() {
        let mut v: Vec<f64> = vec![4.0, 0.0, 2.0, 1.0, 3.0];
        assert_eq!(percentile(&mut v, 0.5), Some(2.0));
        assert_eq!(percentile(&mut v, 0.0), Some(0.0));
        assert_eq!(percentile(&mut v, 1.0), Some(4.0));
        assert!((percentile(&mut v, 0.1).unwrap() - 0.4).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn membership_matches_rectangle_scan(
            pts in proptest::collection::vec((-80.0f64..80.0, -50.0f64..50.0), 1..60),
            overlap in 0.0f64..9.0,
        ) {
            let pts: Vec<[f64; 3]> = pts.into_iter().map(|(x, y)| [x, y, 0.0]).collect();
            let scene = scene_with(&pts);
            let cfg = GridConfig { overlap, ..GridConfig::default() };
            let layout = GridLayout::new(scene.keypoints().map(|p| &p.position), &cfg).unwrap();
            let all = layout.all_blocks();
            let clusters = assign_keypoints(&build_grid(&scene, &cfg).unwrap(), &scene);
            for (i, p) in pts.iter().enumerate() {
                let mut got: Vec<BlockIndex> = clusters.iter()
                    .filter(|c| c.keypoints.contains(&PointId(i as u64)))
                    .map(|c| c.blocks[0].index).collect();
                got.sort();
                let want = brute_force_membership(&all, p[0], p[1]);
                prop_assert!(!got.is_empty());
                prop_assert!(got.len() <= 4);
                prop_assert_eq!(got, want);
            }
        }

        #[test]
        fn cores_tile_and_expanded_overlap(
            pts in proptest::collection::vec((-60.0f64..60.0, -60.0f64..60.0), 1..30),
            bx in 5.0f64..30.0, by in 5.0f64..30.0,
        ) {
            let pts: Vec<[f64; 3]> = pts.into_iter().map(|(x, y)| [x, y, 0.0]).collect();
            let scene = scene_with(&pts);
            let cfg = GridConfig { block_x: bx, block_y: by, overlap: 1.5, sample_resolution: 1.0 };
            let layout = GridLayout::new(scene.keypoints().map(|p| &p.position), &cfg).unwrap();
            let all = layout.all_blocks();
            // every keypoint in exactly one core
            for p in &pts {
                let n = all.iter().filter(|b| b.core_bounds.contains(p[0], p[1])).count();
                prop_assert_eq!(n, 1);
            }
            // horizontal neighbours share an edge and overlap by 2 * d
            for b in &all {
                if b.index.0 + 1 < layout.dims.0 {
                    let n = layout.block((b.index.0 + 1, b.index.1));
                    prop_assert_eq!(b.core_bounds.max[0], n.core_bounds.min[0]);
                    let ov = b.expanded_bounds.max[0] - n.expanded_bounds.min[0];
                    prop_assert!((ov - 3.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn lattice_spacing(r in 0.3f64..5.0, w in 1.0f64..20.0) {
            let c = one_cluster(Rect { min: [0.0, 0.0], max: [w, w] });
            let cfg = GridConfig { sample_resolution: r, ..GridConfig::default() };
            let pts = sample_uniform_points(&c, &cfg, (0.0, w / 2.0));
            let n = (w / r + 1e-9).floor() as usize + 1;
            let nz = (w / 2.0 / r + 1e-9).floor() as usize + 1;
            prop_assert_eq!(pts.len(), n * n * nz);
            let mut xs: Vec<f64> = pts.iter().map(|p| p.position[0]).collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs.dedup();
            for pair in xs.windows(2) {
                prop_assert!(pair[1] - pair[0] >= r - 1e-9);
            }
        }
    }
}
