use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::select::SolveStatus;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: usize,
    pub n_cameras: usize,
    pub n_selected: usize,
    pub n_keypoints: usize,
    pub n_sampled: usize,
    pub n_visibility_rows: usize,
    pub n_min: usize,
    pub status: SolveStatus,
    pub objective: usize,
    pub lower_bound: usize,
    pub gap: usize,
    pub nodes: u64,
    /// Outcome of the independent constraint check on the selection.
    pub feasible: bool,
    pub solve_time: f64,
}

/// Everything measured during one run; saved as JSON by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub n_input_views: usize,
    pub n_keypoints: usize,
    /// Distinct cameras associated to at least one cluster.
    pub n_views: usize,
    pub parallelism: usize,
    pub clusters: Vec<ClusterRecord>,
    pub t_clustering: f64,
    pub t_selection: f64,
    pub t_total: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub n_views: usize,
    pub n_keypoints: usize,
    pub n_clusters: usize,
    pub n_after_clustering: usize,
    pub k_after_clustering: f64,
    pub avg_nc_after_clustering: f64,
    pub t_clustering: f64,
    pub n_after_selection: usize,
    pub k_after_selection: f64,
    pub avg_nc_after_selection: f64,
    pub t_selection: f64,
    pub t_total: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn compute_stats(record: &RunRecord) -> StatsTable {
    let c = record.clusters.len();
    let after_clustering: usize = record.clusters.iter().map(|r| r.n_cameras).sum();
    let after_selection: usize = record.clusters.iter().map(|r| r.n_selected).sum();
    StatsTable {
        n_views: record.n_views,
        n_keypoints: record.n_keypoints,
        n_clusters: c,
        n_after_clustering: after_clustering,
        k_after_clustering: ratio(after_clustering, record.n_views),
        avg_nc_after_clustering: ratio(after_clustering, c),
        t_clustering: record.t_clustering,
        n_after_selection: after_selection,
        k_after_selection: ratio(after_selection, record.n_views),
        avg_nc_after_selection: ratio(after_selection, c),
        t_selection: record.t_selection,
        t_total: record.t_total,
    }
}

/// Clustering pays off when each camera lands in fewer than `sqrt(c)`
/// clusters on average.
pub fn check_efficiency(k: f64, c: usize) -> bool {
    k < (c as f64).sqrt()
}

/// Pairwise camera comparisons with and without clustering:
/// `(sum N_c^2, N^2)`.
pub fn operation_counts(cluster_sizes: &[usize], n: usize) -> (u128, u128) {
    let clustered = cluster_sizes.iter().map(|&s| (s as u128) * (s as u128)).sum();
    (clustered, (n as u128) * (n as u128))
}

impl StatsTable {
    fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            ("n_views", self.n_views.to_string()),
            ("n_keypoints", self.n_keypoints.to_string()),
            ("n_clusters", self.n_clusters.to_string()),
            ("n_after_clustering", self.n_after_clustering.to_string()),
            ("k_after_clustering", format!("{:.2}", self.k_after_clustering)),
            ("avg_nc_after_clustering", format!("{:.1}", self.avg_nc_after_clustering)),
            ("t_clustering", format!("{:.3}", self.t_clustering)),
            ("n_after_selection", self.n_after_selection.to_string()),
            ("k_after_selection", format!("{:.2}", self.k_after_selection)),
            ("avg_nc_after_selection", format!("{:.1}", self.avg_nc_after_selection)),
            ("t_selection", format!("{:.3}", self.t_selection)),
            ("t_total", format!("{:.3}", self.t_total)),
        ]
    }

    pub fn to_text(&self) -> String {
        let rows = self.rows();
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut s = String::new();
        for (k, v) in rows {
            let _ = writeln!(s, "{k:<width$}  {v:>12}");
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let rows = self.rows();
        let header: Vec<&str> = rows.iter().map(|(k, _)| *k).collect();
        let values: Vec<String> = rows.into_iter().map(|(_, v)| v).collect();
        format!("{}\n{}\n", header.join(","), values.join(","))
    }
}
