//! Cost baselines and the scaling harness: the global pairwise similarity
//! computation, maximal-clique enumeration, and timed pipeline runs over
//! growing synthetic scenes.

use std::fmt::Write as _;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Scene;
use crate::num::Real;
use crate::pipeline::{operation_counts, run_pipeline, PipelineConfig, PipelineError};
use crate::synth::{generate_scene, generate_trajectory, RigConfig, SynthError, TrajectorySpec, WorldSpec};

pub const MAX_BASELINE_VIEWS: usize = 20_000;
pub const MAX_CLIQUE_VERTICES: usize = 60;
pub const CSV_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(
        "refusing full similarity on {n} views (limit {MAX_BASELINE_VIEWS}): projected {ops} pair comparisons"
    )]
    TooManyViews { n: usize, ops: u128 },
    #[error("refusing clique enumeration on {0} vertices (limit {MAX_CLIQUE_VERTICES})")]
    TooManyVertices(usize),
    #[error("adjacency matrix must be square, symmetric and zero on the diagonal")]
    InvalidGraph,
    #[error("benchmark sizes must be positive and ascending")]
    InvalidSizes,
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// Summary of the global co-visibility matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityBaseline {
    pub n_views: usize,
    /// Camera pairs compared: `N^2`.
    pub ops: u128,
    /// Ordered pairs `(i, j)`, `i != j`, sharing at least one point.
    pub overlapping_pairs: u64,
    pub max_count: u32,
    pub mean_offdiagonal_count: f64,
    pub seconds: f64,
}

fn observation_lists<T: Real>(scene: &Scene<T>) -> Vec<Vec<u64>> {
    let mut lists = vec![Vec::new(); scene.cameras().len()];
    for p in scene.keypoints() {
        for c in &p.track {
            if let Some(i) = scene.camera_position(*c) {
                lists[i].push(p.id.0);
            }
        }
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

fn merge_count(a: &[u64], b: &[u64]) -> u32 {
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

/// Compares every ordered camera pair of the whole scene by merging their
/// observation lists.
pub fn full_similarity_baseline<T: Real>(scene: &Scene<T>) -> Result<SimilarityBaseline, BenchError> {
    let n = scene.cameras().len();
    let ops = (n as u128) * (n as u128);
    if n > MAX_BASELINE_VIEWS {
        return Err(BenchError::TooManyViews { n, ops });
    }
    let start = Instant::now();
    let lists = observation_lists(scene);
    let (mut overlapping, mut max_count, mut sum) = (0u64, 0u32, 0u64);
    for i in 0..n {
        for j in 0..n {
            let s = merge_count(&lists[i], &lists[j]);
            if i != j {
                if s > 0 {
                    overlapping += 1;
                }
                max_count = max_count.max(s);
                sum += s as u64;
            }
        }
    }
    let off = (n * n.saturating_sub(1)).max(1);
    Ok(SimilarityBaseline {
        n_views: n,
        ops,
        overlapping_pairs: overlapping,
        max_count,
        mean_offdiagonal_count: sum as f64 / off as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Dense co-visibility counts for small scenes, in camera order.
pub fn covisibility_matrix<T: Real>(scene: &Scene<T>) -> Vec<Vec<u32>> {
    let lists = observation_lists(scene);
    lists.iter().map(|a| lists.iter().map(|b| merge_count(a, b)).collect()).collect()
}

fn to_masks(adj: &[Vec<bool>]) -> Result<Vec<u64>, BenchError> {
    let n = adj.len();
    if n > MAX_CLIQUE_VERTICES {
        return Err(BenchError::TooManyVertices(n));
    }
    let mut masks = vec![0u64; n];
    for i in 0..n {
        if adj[i].len() != n || adj[i][i] {
            return Err(BenchError::InvalidGraph);
        }
        for j in 0..n {
            if adj[i][j] != adj[j][i] {
                return Err(BenchError::InvalidGraph);
            }
            if adj[i][j] {
                masks[i] |= 1 << j;
            }
        }
    }
    Ok(masks)
}

fn bits(mut m: u64) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let i = m.trailing_zeros() as usize;
        m &= m - 1;
        Some(i)
    })
}

fn expand(adj: &[u64], r: u64, mut p: u64, mut x: u64, out: &mut Vec<u64>) {
    if p == 0 {
        if x == 0 {
            out.push(r);
        }
        return;
    }
    let pivot = bits(p | x).max_by_key(|&u| (adj[u] & p).count_ones()).unwrap();
    for v in bits(p & !adj[pivot]) {
        let vb = 1u64 << v;
        expand(adj, r | vb, p & adj[v], x & adj[v], out);
        p &= !vb;
        x |= vb;
    }
}

/// All maximal cliques (Bron-Kerbosch with pivoting), each ascending, the
/// list sorted lexicographically.
pub fn bron_kerbosch(adj: &[Vec<bool>]) -> Result<Vec<Vec<usize>>, BenchError> {
    let masks = to_masks(adj)?;
    let n = adj.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut found = Vec::new();
    expand(&masks, 0, all, 0, &mut found);
    let mut cliques: Vec<Vec<usize>> = found.into_iter().map(|m| bits(m).collect()).collect();
    cliques.sort();
    Ok(cliques)
}

/// Complete multipartite graph with parts of three vertices, which has the
/// maximum possible number of maximal cliques, `3^(n/3)`.
pub fn moon_moser_graph(n: usize) -> Vec<Vec<bool>> {
    (0..n).map(|i| (0..n).map(|j| i / 3 != j / 3).collect()).collect()
}

/// Worst-case node visits of clique enumeration on `n` vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CliqueCostEstimate {
    pub n: usize,
    pub node_visits: f64,
    pub impractical: bool,
}

impl CliqueCostEstimate {
    /// Anything beyond this many visits per keypoint is reported as impractical.
    pub const PRACTICAL_LIMIT: f64 = 1e9;

    pub fn new(n: usize) -> Self {
        let node_visits = 3f64.powf(n as f64 / 3.0);
        Self { n, node_visits, impractical: node_visits > Self::PRACTICAL_LIMIT }
    }
}

/// Least-squares polynomial fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    /// Constant term first.
    pub coeffs: Vec<f64>,
    pub r2: f64,
}

impl Fit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

/// Fits a polynomial of the given degree by solving the normal equations.
/// Returns `None` when the system is singular.
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<Fit> {
    let m = degree + 1;
    if xs.len() != ys.len() || xs.len() < m {
        return None;
    }
    // scale x for conditioning
    let scale = xs.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
    let mut a = vec![vec![0.0; m + 1]; m];
    for (x, y) in xs.iter().zip(ys) {
        let xs_ = x / scale;
        let pw: Vec<f64> = (0..2 * m).map(|k| xs_.powi(k as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] += pw[r + c];
            }
            a[r][m] += pw[r] * y;
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let coeffs: Vec<f64> = (0..m).map(|i| a[i][m] / a[i][i] / scale.powi(i as i32)).collect();
    let fit = Fit { coeffs, r2: 0.0 };
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(ys).map(|(x, y)| (y - fit.predict(*x)).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(Fit { r2, ..fit })
}

#[derive(Debug, Clone)]
pub struct ScalingSpec {
    pub rig: RigConfig,
    /// Template; the duration is derived from each size.
    pub trajectory: TrajectorySpec,
    pub world: WorldSpec,
    pub pipeline: PipelineConfig<f64>,
    /// Sizes at which the full pairwise baseline is also timed.
    pub baseline_sizes: Vec<usize>,
    /// Repetitions per timing; the fastest is kept.
    pub repeats: usize,
}

impl Default for ScalingSpec {
    fn default() -> Self {
        Self {
            rig: RigConfig::default(),
            trajectory: TrajectorySpec::default(),
            world: WorldSpec::default(),
            pipeline: PipelineConfig::default(),
            baseline_sizes: Vec::new(),
            repeats: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub requested_views: usize,
    pub n_views: usize,
    pub n_keypoints: usize,
    pub c_clusters: usize,
    pub k_after_clustering: f64,
    pub ops_full: u128,
    pub ops_clustered: u128,
    pub t_pipeline: f64,
    pub t_baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub parallelism: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
    pub linear: Option<Fit>,
    pub quadratic: Option<Fit>,
    /// Quadratic term of the degree-2 fit over its prediction at the
    /// largest size.
    pub quadratic_share: Option<f64>,
    pub views_per_minute: f64,
    pub clique_estimate: CliqueCostEstimate,
}

fn timed<R>(repeats: usize, mut f: impl FnMut() -> Result<R, BenchError>) -> Result<(R, f64), BenchError> {
    let mut best = f64::INFINITY;
    let mut out = None;
    for _ in 0..repeats.max(1) {
        let t = Instant::now();
        let r = f()?;
        best = best.min(t.elapsed().as_secs_f64());
        out = Some(r);
    }
    Ok((out.expect("at least one repeat"), best))
}

/// Generates a straight-line scene per size, runs the pipeline and the
/// requested baselines, and fits time against size.
pub fn run_scaling_benchmark(sizes: &[usize], spec: &ScalingSpec, seed: u64) -> Result<BenchReport, BenchError> {
    if sizes.is_empty() || sizes.contains(&0) || sizes.windows(2).any(|w| w[0] > w[1]) {
        return Err(BenchError::InvalidSizes);
    }
    let mut rows = Vec::with_capacity(sizes.len());
    let mut parallelism = spec.pipeline.parallelism;
    for &size in sizes {
        let frames = size.div_ceil(spec.rig.n_cams as usize);
        let traj_spec = TrajectorySpec {
            duration: (frames as f64 + 0.5) / spec.rig.framerate,
            seed,
            ..spec.trajectory.clone()
        };
        let traj = generate_trajectory(&traj_spec, &spec.rig)?;
        let world = WorldSpec { seed, ..spec.world.clone() };
        let scene = generate_scene(&traj, &world, &spec.rig)?;
        let (out, t_pipeline) = timed(spec.repeats, || Ok(run_pipeline(&scene, &spec.pipeline)?))?;
        parallelism = out.record.parallelism;
        let sizes_c: Vec<usize> = out.record.clusters.iter().map(|c| c.n_cameras).collect();
        let (ops_clustered, ops_full) = operation_counts(&sizes_c, scene.cameras().len());
        let t_baseline = if spec.baseline_sizes.contains(&size) {
            Some(timed(spec.repeats, || full_similarity_baseline(&scene))?.1)
        } else {
            None
        };
        log::info!("bench size {size}: pipeline {t_pipeline:.3}s");
        rows.push(BenchRow {
            requested_views: size,
            n_views: scene.cameras().len(),
            n_keypoints: out.stats.n_keypoints,
            c_clusters: out.stats.n_clusters,
            k_after_clustering: out.stats.k_after_clustering,
            ops_full,
            ops_clustered,
            t_pipeline,
            t_baseline,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n_views as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.t_pipeline).collect();
    let linear = polyfit(&xs, &ys, 1);
    let quadratic = polyfit(&xs, &ys, 2);
    let quadratic_share = quadratic.as_ref().map(|q| {
        let x = *xs.last().unwrap();
        (q.coeffs[2] * x * x).abs() / q.predict(x).abs().max(f64::MIN_POSITIVE)
    });
    let total_views: f64 = xs.iter().sum();
    let total_time: f64 = ys.iter().sum();
    Ok(BenchReport {
        parallelism,
        seed,
        rows,
        linear,
        quadratic,
        quadratic_share,
        views_per_minute: if total_time > 0.0 { 60.0 * total_views / total_time } else { 0.0 },
        clique_estimate: CliqueCostEstimate::new(100),
    })
}

impl BenchReport {
    /// One row per size; fits and the clique estimate as trailing comments.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# viewsel bench csv v{CSV_VERSION}\n");
        s.push_str("requested_views,n_views,n_keypoints,c_clusters,k_after_clustering,ops_full,ops_clustered,t_pipeline_s,t_baseline_s\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{:.4},{},{},{:.6},{}",
                r.requested_views,
                r.n_views,
                r.n_keypoints,
                r.c_clusters,
                r.k_after_clustering,
                r.ops_full,
                r.ops_clustered,
                r.t_pipeline,
                r.t_baseline.map(|t| format!("{t:.6}")).unwrap_or_default()
            );
        }
        if let Some(f) = &self.linear {
            let _ = writeln!(s, "# linear fit r2 {:.4} coeffs {:?}", f.r2, f.coeffs);
        }
        if let (Some(f), Some(q)) = (&self.quadratic, self.quadratic_share) {
            let _ = writeln!(s, "# quadratic fit r2 {:.4} quadratic share {:.4}", f.r2, q);
        }
        let _ = writeln!(s, "# throughput {:.0} views/min at parallelism {}", self.views_per_minute, self.parallelism);
        let e = &self.clique_estimate;
        let _ = writeln!(
            s,
            "# clique enumeration per keypoint at n = {}: {:.2e} node visits ({})",
            e.n,
            e.node_visits,
            if e.impractical { "impractical" } else { "practical" }
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Camera, CameraId, CameraIntrinsics, CameraPose, Point3, PointId};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn graph(edges: &[(usize, usize)], n: usize) -> Vec<Vec<bool>> {
        let mut a = vec![vec![false; n]; n];
        for &(i, j) in edges {
            a[i][j] = true;
            a[j][i] = true;
        }
        a
    }

    /// Every vertex subset that is a clique and cannot be extended.
    fn naive_cliques(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
        let n = adj.len();
        let is_clique = |m: u32| (0..n).all(|i| (0..n).all(|j| i == j || m >> i & 1 == 0 || m >> j & 1 == 0 || adj[i][j]));
        let mut out: Vec<Vec<usize>> = (1u32..1 << n)
            .filter(|&m| is_clique(m) && (0..n).all(|v| m >> v & 1 == 1 || !is_clique(m | 1 << v)))
            .map(|m| (0..n).filter(|&i| m >> i & 1 == 1).collect())
            .collect();
        out.sort();
        out
    }

    #[test]
    fn clique_examples() {
        assert_eq!(bron_kerbosch(&graph(&[(0, 1), (1, 2), (0, 2)], 3)).unwrap(), vec![vec![0, 1, 2]]);
        assert_eq!(
            bron_kerbosch(&graph(&[(0, 1), (1, 2), (2, 3)], 4)).unwrap(),
            vec![vec![0, 1], vec![1, 2], vec![2, 3]]
        );
        assert_eq!(bron_kerbosch(&graph(&[], 2)).unwrap(), vec![vec![0], vec![1]]);
        assert!(bron_kerbosch(&[]).unwrap().is_empty());
    }

    #[test]
    fn moon_moser_counts() {
        for n in [3, 6, 9, 12] {
            let g = moon_moser_graph(n);
            let c = bron_kerbosch(&g).unwrap();
            assert_eq!(c.len(), 3usize.pow(n as u32 / 3));
            assert_eq!(c, naive_cliques(&g));
        }
    }

    #[test]
    fn matches_naive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let n = rng.random_range(1..=10);
            let p = rng.random_range(0.1..0.9);
            let mut a = vec![vec![false; n]; n];
            for i in 0..n {
                for j in i + 1..n {
                    let e = rng.random_bool(p);
                    a[i][j] = e;
                    a[j][i] = e;
                }
            }
            assert_eq!(bron_kerbosch(&a).unwrap(), naive_cliques(&a));
        }
    }

    #[test]
    fn clique_guards() {
        assert!(matches!(bron_kerbosch(&moon_moser_graph(63)), Err(BenchError::TooManyVertices(63))));
        let mut a = graph(&[(0, 1)], 2);
        a[0][1] = false;
        assert!(matches!(bron_kerbosch(&a), Err(BenchError::InvalidGraph)));
        let mut d = graph(&[], 2);
        d[1][1] = true;
        assert!(matches!(bron_kerbosch(&d), Err(BenchError::InvalidGraph)));
    }

    #[test]
    fn clique_cost_at_cluster_scale() {
        let e = CliqueCostEstimate::new(100);
        assert!((e.node_visits.log10() - 15.9).abs() < 0.1);
        assert!(e.impractical);
        assert!(!CliqueCostEstimate::new(15).impractical);
    }

    fn tiny_scene() -> Scene<f64> {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let cams = (0..3).map(|i| Camera::new(CameraId(i), k, CameraPose::identity())).collect();
        let pts = vec![
            Point3::keypoint(PointId(0), [0.0, 0.0, 5.0], vec![CameraId(0), CameraId(1)]),
            Point3::keypoint(PointId(1), [0.1, 0.0, 5.0], vec![CameraId(2)]),
        ];
        Scene::new(cams, pts).unwrap()
    }

    #[test]
    fn baseline_on_three_cameras() {
        let scene = tiny_scene();
        let b = full_similarity_baseline(&scene).unwrap();
        assert_eq!(b.ops, 9);
        assert_eq!(b.overlapping_pairs, 2);
        let m = covisibility_matrix(&scene);
        assert!(m[0][1] >= 1);
        assert_eq!(m[0][1], m[1][0]);
        assert_eq!(m[0][2], 0);
        assert_eq!(m[2][2], 1);
    }

    #[test]
    fn baseline_refuses_huge_scenes() {
        let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        let cams = (0..20_001).map(|i| Camera::new(CameraId(i), k, CameraPose::identity())).collect();
        let scene = Scene::new(cams, vec![]).unwrap();
        let err = full_similarity_baseline(&scene).unwrap_err();
        assert!(err.to_string().contains("projected 400040001 pair comparisons"));
    }

    #[test]
    fn polyfit_recovers_exact_polynomials() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x).collect();
        let f = polyfit(&xs, &ys, 1).unwrap();
        assert!((f.coeffs[0] - 2.0).abs() < 1e-9 && (f.coeffs[1] - 3.0).abs() < 1e-9);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        let ys2: Vec<f64> = xs.iter().map(|x| 1.0 - x + 0.5 * x * x).collect();
        let q = polyfit(&xs, &ys2, 2).unwrap();
        assert!((q.coeffs[2] - 0.5).abs() < 1e-9);
        assert!(polyfit(&[1.0], &[1.0], 1).is_none());
    }

    #[test]
    fn small_scaling_run() {
        let spec = ScalingSpec { baseline_sizes: vec![70], ..ScalingSpec::default() };
        let r = run_scaling_benchmark(&[70, 140], &spec, 4).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].n_views, 70);
        assert!(r.rows[0].t_baseline.is_some() && r.rows[1].t_baseline.is_none());
        let csv = r.to_csv();
        assert!(csv.starts_with("# viewsel bench csv v1\nrequested_views,"));
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
        assert!(run_scaling_benchmark(&[10, 5], &spec, 1).is_err());
    }
}
