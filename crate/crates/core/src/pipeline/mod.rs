//! End-to-end orchestration: grid, sampling, association, merging, then
//! per-cluster visibility, similarity and camera selection.

mod manifest;
mod stats;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::associate::{associate_cameras, merge_small_clusters, AssociationConfig};
use crate::grid::{
    assign_keypoints, build_grid, default_z_range, sample_uniform_points, scene_z_range, Cluster, GridConfig,
    GridError,
};
use crate::model::{CameraId, Scene};
use crate::num::Real;
use crate::select::{
    build_ilp, check_assignment, greedy_warm_start, BranchAndBound, SelectError, SelectionConfig, SelectionSolver,
    SolveStatus,
};
use crate::visibility::{build_similarity, build_visibility_matrix, VisibilityError};

pub use manifest::{export_manifests, read_manifest, CameraRecord, ClusterManifest, ManifestIndex, SCHEMA_VERSION};
pub use stats::{check_efficiency, compute_stats, operation_counts, ClusterRecord, RunRecord, StatsTable};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("cluster {cluster}: {source}")]
    Visibility { cluster: usize, source: VisibilityError },
    #[error("cluster {cluster}: {source}")]
    Select { cluster: usize, source: SelectError },
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: std::path::PathBuf, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig<T> {
    pub grid: GridConfig<T>,
    pub assoc: AssociationConfig<T>,
    pub select: SelectionConfig,
    /// Minimum co-visible point count for two cameras to be matchable.
    pub match_threshold: u32,
    /// Worker threads; 0 picks the number of available cores.
    pub parallelism: usize,
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            assoc: AssociationConfig::default(),
            select: SelectionConfig::default(),
            match_threshold: 5,
            parallelism: 0,
        }
    }
}

impl<T: Real> PipelineConfig<T> {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.grid.validate()?;
        self.assoc.validate().map_err(PipelineError::Config)?;
        self.select.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.match_threshold < 1 {
            return Err(PipelineError::Config("match threshold must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    /// Sorted by cluster id.
    pub manifests: Vec<ClusterManifest>,
    pub record: RunRecord,
    pub stats: StatsTable,
}

/// Clusters after grid binning, sampling, association and merging.
pub fn cluster_scene<T: Real>(scene: &Scene<T>, cfg: &PipelineConfig<T>) -> Result<Vec<Cluster<T>>, PipelineError> {
    let blocks = build_grid(scene, &cfg.grid)?;
    let z_scene = scene_z_range(scene);
    let clusters: Vec<Cluster<T>> = assign_keypoints(&blocks, scene)
        .into_par_iter()
        .map(|mut c| {
            let z = default_z_range(&c, scene, z_scene);
            c.sampled = sample_uniform_points(&c, &cfg.grid, z);
            c
        })
        .collect();
    let clusters = associate_cameras(clusters, scene, &cfg.assoc);
    let mut clusters = merge_small_clusters(clusters, &cfg.assoc);
    clusters.sort_by_key(|c| c.id);
    Ok(clusters)
}

struct ClusterResult {
    manifest: ClusterManifest,
    record: ClusterRecord,
    warnings: Vec<String>,
}

fn select_cluster<T: Real>(
    cluster: &Cluster<T>,
    scene: &Scene<T>,
    cfg: &PipelineConfig<T>,
    solver: &dyn SelectionSolver,
) -> Result<ClusterResult, PipelineError> {
    let start = Instant::now();
    let vis = build_visibility_matrix(cluster, scene, &cfg.assoc)
        .map_err(|source| PipelineError::Visibility { cluster: cluster.id, source })?;
    let sim = build_similarity(&vis, cfg.match_threshold);
    let problem =
        build_ilp(&vis, &sim, &cfg.select).map_err(|source| PipelineError::Select { cluster: cluster.id, source })?;
    let warm = greedy_warm_start(&problem);
    let solution = solver.solve(&problem, &warm, &cfg.select);

    let x = problem.selection_from_ids(&solution.selected).unwrap_or_default();
    let checked = if solution.status == SolveStatus::InfeasibleRelaxed {
        let (relaxed, _) = problem.restricted(&problem.unmatchable());
        check_assignment(&relaxed, &x)
    } else {
        check_assignment(&problem, &x)
    };
    let warnings: Vec<String> = solution.warnings.iter().map(|w| format!("cluster {}: {}", cluster.id, w)).collect();
    for w in &warnings {
        log::warn!("{w}");
    }
    let record = ClusterRecord {
        id: cluster.id,
        n_cameras: cluster.cameras.len(),
        n_selected: solution.selected.len(),
        n_keypoints: cluster.keypoints.len(),
        n_sampled: cluster.sampled.len(),
        n_visibility_rows: problem.visibility_rows().len(),
        n_min: problem.n_min(),
        status: solution.status,
        objective: solution.objective,
        lower_bound: solution.lower_bound,
        gap: solution.gap,
        nodes: solution.nodes,
        feasible: checked.is_ok(),
        solve_time: start.elapsed().as_secs_f64(),
    };
    let manifest = ClusterManifest::new(cluster, scene, &solution);
    Ok(ClusterResult { manifest, record, warnings })
}

pub fn run_pipeline<T: Real>(scene: &Scene<T>, cfg: &PipelineConfig<T>) -> Result<PipelineOutput, PipelineError> {
    run_pipeline_with(scene, cfg, &BranchAndBound)
}

/// Runs every stage with the given solver inside a pool of
/// `cfg.parallelism` workers. Output is identical at any worker count.
pub fn run_pipeline_with<T: Real>(
    scene: &Scene<T>,
    cfg: &PipelineConfig<T>,
    solver: &dyn SelectionSolver,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;
    let threads = pool.current_num_threads();
    pool.install(|| {
        let t0 = Instant::now();
        let clusters = cluster_scene(scene, cfg)?;
        let t_clustering = t0.elapsed().as_secs_f64();

        let t1 = Instant::now();
        let results: Vec<ClusterResult> = clusters
            .par_iter()
            .map(|c| select_cluster(c, scene, cfg, solver))
            .collect::<Result<_, _>>()?;
        let t_selection = t1.elapsed().as_secs_f64();

        let mut associated: Vec<CameraId> = clusters.iter().flat_map(|c| c.cameras.iter().copied()).collect();
        associated.sort_unstable();
        associated.dedup();

        let mut manifests = Vec::with_capacity(results.len());
        let mut records = Vec::with_capacity(results.len());
        let mut warnings = Vec::new();
        for r in results {
            manifests.push(r.manifest);
            records.push(r.record);
            warnings.extend(r.warnings);
        }
        let record = RunRecord {
            schema_version: SCHEMA_VERSION,
            n_input_views: scene.cameras().len(),
            n_keypoints: scene.keypoints().count(),
            n_views: associated.len(),
            parallelism: threads,
            clusters: records,
            t_clustering,
            t_selection,
            t_total: t_clustering + t_selection,
            warnings,
        };
        let stats = compute_stats(&record);
        Ok(PipelineOutput { manifests, record, stats })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyReport {
    pub k: f64,
    pub c: usize,
    pub sqrt_c: f64,
    pub holds: bool,
    pub ops_clustered: u128,
    pub ops_full: u128,
}

impl EfficiencyReport {
    /// Efficiency of the clustering stage of a run.
    pub fn after_clustering(record: &RunRecord) -> Self {
        let stats = compute_stats(record);
        let sizes: Vec<usize> = record.clusters.iter().map(|c| c.n_cameras).collect();
        let (ops_clustered, ops_full) = operation_counts(&sizes, record.n_views);
        let c = record.clusters.len();
        Self {
            k: stats.k_after_clustering,
            c,
            sqrt_c: (c as f64).sqrt(),
            holds: c >= 1 && check_efficiency(stats.k_after_clustering, c),
            ops_clustered,
            ops_full,
        }
    }
}
