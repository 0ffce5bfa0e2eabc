//! Minimum camera subset selection as a binary integer program.
//!
//! For a cluster with `n` cameras (binary variables `x_i`) the program is
//!
//! ```text
//! min  sum_i x_i
//! s.t. sum_i x_i      >= n_min
//!      A_i . x        >= 0        for every camera i,   A = S~ - n_match * I
//!      B_j . x        >= rhs_j    for every distinct visibility pattern j
//! ```
//!
//! `S~` is the binarized similarity matrix and `B_j` the set of cameras
//! seeing a point. Identical visibility rows are collapsed and every
//! right-hand side is clamped to the number of cameras in its row.

mod bnb;
mod lp;
mod oracle;
mod warm;

use std::collections::HashMap;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CameraId;
use crate::visibility::{SimilarityMatrix, VisibilityMatrix};

pub use bnb::{solve_bnb, BranchAndBound};
pub use lp::write_lp;
pub use oracle::{brute_force_oracle, MAX_ORACLE_VARS};
pub use warm::{greedy_warm_start, WarmStart};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectError {
    #[error("exhaustive search refused: {0} variables exceed the limit of {MAX_ORACLE_VARS}")]
    TooManyVariables(usize),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("visibility ({vis}) and similarity ({sim}) sizes disagree")]
    DimensionMismatch { vis: usize, sim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WarmStartMode {
    /// Seed the incumbent only.
    Hint,
    /// Additionally fix the top `n_min` cameras by visibility to 1.
    HardFix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionConfig {
    pub n_vis: u32,
    pub n_match: u32,
    pub n_low: usize,
    pub n_high: usize,
    /// Fraction of the cluster size used before clamping `n_min`.
    pub n_min_fraction: f64,
    /// Wall-clock safety limit per cluster, seconds.
    pub time_budget: f64,
    /// Deterministic search limit in bitset word operations per cluster.
    pub work_budget: u64,
    pub warm_start_mode: WarmStartMode,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            n_vis: 2,
            n_match: 2,
            n_low: 10,
            n_high: 30,
            n_min_fraction: 0.15,
            time_budget: 60.0,
            work_budget: 50_000_000,
            warm_start_mode: WarmStartMode::Hint,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        let bad = |m: String| Err(SelectError::InvalidConfig(m));
        if self.n_low < 1 || self.n_low > self.n_high {
            return bad(format!("need 1 <= n_low ({}) <= n_high ({})", self.n_low, self.n_high));
        }
        if self.n_vis < 1 {
            return bad("n_vis must be at least 1".into());
        }
        if !(self.n_min_fraction > 0.0 && self.n_min_fraction <= 1.0) {
            return bad(format!("n_min_fraction {} must lie in (0, 1]", self.n_min_fraction));
        }
        if !(self.time_budget > 0.0) {
            return bad(format!("time budget {} must be positive", self.time_budget));
        }
        Ok(())
    }
}

/// `min(n_c, clamp(ceil(fraction * n_c), n_low, n_high))`.
pub fn adaptive_nmin(n_c: usize, cfg: &SelectionConfig) -> usize {
    let scaled = (cfg.n_min_fraction * n_c as f64 - 1e-9).ceil().max(0.0) as usize;
    scaled.clamp(cfg.n_low, cfg.n_high).min(n_c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    ProvenOptimal,
    FeasibleBudgetExceeded,
    /// The program as built had no feasible point; solved after excluding
    /// unmatchable cameras and lowering the affected bounds.
    InfeasibleRelaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    /// Selected cameras, ascending.
    pub selected: Vec<CameraId>,
    pub objective: usize,
    pub status: SolveStatus,
    /// `objective - lower_bound`; zero when optimality is proven.
    pub gap: usize,
    pub lower_bound: usize,
    pub nodes: u64,
    pub solve_time: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionProblem {
    camera_ids: Vec<CameraId>,
    n_match: u32,
    partners: Vec<FixedBitSet>,
    vis_rows: Vec<FixedBitSet>,
    rhs: Vec<u32>,
    n_min: usize,
    visible_counts: Vec<usize>,
    fixed_zero: FixedBitSet,
    source_points: usize,
}

/// Builds the program for one cluster. Variables follow the column order of
/// `vis` (ascending camera id).
pub fn build_ilp(
    vis: &VisibilityMatrix,
    sim: &SimilarityMatrix,
    cfg: &SelectionConfig,
) -> Result<SelectionProblem, SelectError> {
    let n = vis.n_cameras();
    if sim.len() != n {
        return Err(SelectError::DimensionMismatch { vis: n, sim: sim.len() });
    }
    let mut seen: HashMap<&FixedBitSet, ()> = HashMap::new();
    let mut vis_rows = Vec::new();
    let mut rhs = Vec::new();
    for row in vis.rows() {
        let pop = row.count_ones(..);
        if pop == 0 || seen.insert(row, ()).is_some() {
            continue;
        }
        vis_rows.push(row.clone());
        rhs.push(cfg.n_vis.min(pop as u32));
    }
    Ok(SelectionProblem {
        camera_ids: vis.camera_ids().to_vec(),
        n_match: cfg.n_match,
        partners: (0..n).map(|i| sim.partners(i).clone()).collect(),
        vis_rows,
        rhs,
        n_min: adaptive_nmin(n, cfg),
        visible_counts: (0..n).map(|i| vis.visible_count(i)).collect(),
        fixed_zero: FixedBitSet::with_capacity(n),
        source_points: vis.n_points(),
    })
}

impl SelectionProblem {
    pub fn n_vars(&self) -> usize {
        self.camera_ids.len()
    }

    pub fn camera_ids(&self) -> &[CameraId] {
        &self.camera_ids
    }

    pub fn n_match(&self) -> u32 {
        self.n_match
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn with_n_min(mut self, n_min: usize) -> Self {
        self.n_min = n_min.min(self.n_vars());
        self
    }

    pub fn visibility_rows(&self) -> &[FixedBitSet] {
        &self.vis_rows
    }

    pub fn rhs(&self) -> &[u32] {
        &self.rhs
    }

    pub fn partners(&self, i: usize) -> &FixedBitSet {
        &self.partners[i]
    }

    pub fn visible_count(&self, i: usize) -> usize {
        self.visible_counts[i]
    }

    /// Variables forced to zero.
    pub fn fixed_zero(&self) -> &FixedBitSet {
        &self.fixed_zero
    }

    /// Number of cluster points the visibility rows were built from.
    pub fn source_points(&self) -> usize {
        self.source_points
    }

    /// `A = S~ - n_match * I` as a dense integer matrix.
    pub fn matchability_matrix(&self) -> Vec<Vec<i64>> {
        let n = self.n_vars();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let s = self.partners[i].contains(j) as i64;
                        if i == j {
                            s - self.n_match as i64
                        } else {
                            s
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Cameras that can never have `n_match` selected partners: everything
    /// outside the `n_match`-core of the matchability graph. Any feasible
    /// selection lies inside the core.
    pub fn unmatchable(&self) -> FixedBitSet {
        let n = self.n_vars();
        let mut out = self.fixed_zero.clone();
        let need = self.n_match as usize;
        if need == 0 {
            return out;
        }
        loop {
            let mut changed = false;
            for i in 0..n {
                if out.contains(i) {
                    continue;
                }
                let deg = self.partners[i].ones().filter(|&j| !out.contains(j)).count();
                if deg < need {
                    out.insert(i);
                    changed = true;
                }
            }
            if !changed {
                return out;
            }
        }
    }

    /// Fixes `excluded` variables to zero and re-clamps every bound so the
    /// remaining program is feasible. Returns whether any bound changed.
    pub fn restricted(&self, excluded: &FixedBitSet) -> (SelectionProblem, bool) {
        let mut p = self.clone();
        p.fixed_zero.union_with(excluded);
        let allowed_count = self.n_vars() - p.fixed_zero.count_ones(..);
        let mut relaxed = false;
        let mut rows = Vec::with_capacity(p.vis_rows.len());
        let mut rhs: Vec<u32> = Vec::with_capacity(p.vis_rows.len());
        let mut seen: HashMap<FixedBitSet, usize> = HashMap::new();
        for (row, &r) in self.vis_rows.iter().zip(&self.rhs) {
            let mut reduced = row.clone();
            reduced.difference_with(&p.fixed_zero);
            let avail = reduced.count_ones(..) as u32;
            let r2 = r.min(avail);
            if r2 < r {
                relaxed = true;
            }
            if r2 == 0 {
                continue;
            }
            match seen.get(&reduced) {
                Some(&k) => rhs[k] = rhs[k].max(r2),
                None => {
                    seen.insert(reduced.clone(), rows.len());
                    rows.push(reduced);
                    rhs.push(r2);
                }
            }
        }
        p.vis_rows = rows;
        p.rhs = rhs;
        if p.n_min > allowed_count {
            p.n_min = allowed_count;
            relaxed = true;
        }
        (p, relaxed)
    }

    pub(crate) fn var_index(&self) -> HashMap<CameraId, usize> {
        self.camera_ids.iter().enumerate().map(|(i, &c)| (c, i)).collect()
    }

    pub fn selection_from_ids(&self, ids: &[CameraId]) -> Option<FixedBitSet> {
        let idx = self.var_index();
        let mut x = FixedBitSet::with_capacity(self.n_vars());
        for id in ids {
            x.insert(*idx.get(id)?);
        }
        Some(x)
    }

    pub fn ids_of(&self, x: &FixedBitSet) -> Vec<CameraId> {
        x.ones().map(|i| self.camera_ids[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FixedZeroSelected(CameraId),
    TooFew { selected: usize, n_min: usize },
    Matchability { camera: CameraId, value: i64 },
    Visibility { row: usize, covered: u32, rhs: u32 },
}

/// Evaluates every constraint of the program directly on `x`.
pub fn check_assignment(problem: &SelectionProblem, x: &FixedBitSet) -> Result<(), Violation> {
    let n = problem.n_vars();
    let xi = |i: usize| x.contains(i) as i64;
    for i in 0..n {
        if x.contains(i) && problem.fixed_zero.contains(i) {
            return Err(Violation::FixedZeroSelected(problem.camera_ids[i]));
        }
    }
    let selected = (0..n).filter(|&i| x.contains(i)).count();
    if selected < problem.n_min {
        return Err(Violation::TooFew { selected, n_min: problem.n_min });
    }
    let a = problem.matchability_matrix();
    for (i, row) in a.iter().enumerate() {
        let value: i64 = row.iter().enumerate().map(|(j, &c)| c * xi(j)).sum();
        if value < 0 {
            return Err(Violation::Matchability { camera: problem.camera_ids[i], value });
        }
    }
    for (r, (row, &rhs)) in problem.vis_rows.iter().zip(&problem.rhs).enumerate() {
        let covered = (0..n).filter(|&j| row.contains(j) && x.contains(j)).count() as u32;
        if covered < rhs {
            return Err(Violation::Visibility { row: r, covered, rhs });
        }
    }
    Ok(())
}

/// Pluggable solver interface.
pub trait SelectionSolver: Sync {
    fn solve(&self, problem: &SelectionProblem, warm: &WarmStart, cfg: &SelectionConfig) -> Solution;
}
