use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;

use super::warm::{violation, WarmStart};
use super::{
    check_assignment, SelectionConfig, SelectionProblem, SelectionSolver, Solution, SolveStatus, WarmStartMode,
};

/// Best-first branch and bound with unit propagation and a disjoint-row
/// packing bound.
#[derive(Debug, Clone, Copy, Default)]
pub struct BranchAndBound;

impl SelectionSolver for BranchAndBound {
    fn solve(&self, problem: &SelectionProblem, warm: &WarmStart, cfg: &SelectionConfig) -> Solution {
        solve_bnb(problem, warm, cfg)
    }
}

struct Node {
    lb: usize,
    depth: u32,
    seq: u64,
    ones: FixedBitSet,
    zeros: FixedBitSet,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then deepest, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.lb.cmp(&self.lb).then(self.depth.cmp(&other.depth)).then(other.seq.cmp(&self.seq))
    }
}

enum Eval {
    Infeasible,
    Feasible,
    Open { lb: usize, branch: usize },
}

struct Search<'a> {
    p: &'a SelectionProblem,
    n: usize,
    words: u64,
    work: u64,
}

impl<'a> Search<'a> {
    fn free_set(&self, ones: &FixedBitSet, zeros: &FixedBitSet) -> FixedBitSet {
        let mut free = FixedBitSet::with_capacity(self.n);
        free.insert_range(..);
        free.difference_with(ones);
        free.difference_with(zeros);
        free
    }

    /// Fixes forced variables in place. Returns false on a contradiction.
    fn propagate(&mut self, ones: &mut FixedBitSet, zeros: &mut FixedBitSet) -> bool {
        let p = self.p;
        let need = p.n_match as usize;
        loop {
            let mut changed = false;
            let mut free = self.free_set(ones, zeros);
            if need > 0 {
                let candidates: Vec<usize> = free.ones().collect();
                for j in candidates {
                    self.work += self.words;
                    let reach = p.partners[j].count_ones(..) - p.partners[j].intersection_count(zeros);
                    if reach < need {
                        zeros.insert(j);
                        free.set(j, false);
                        changed = true;
                    }
                }
            }
            for (row, &r) in p.vis_rows.iter().zip(&p.rhs) {
                self.work += 2 * self.words;
                let sel = row.intersection_count(ones);
                if sel >= r as usize {
                    continue;
                }
                let deficit = r as usize - sel;
                let avail = row.intersection_count(&free);
                if deficit > avail {
                    return false;
                }
                if deficit == avail {
                    let mut forced = row.clone();
                    forced.intersect_with(&free);
                    ones.union_with(&forced);
                    free.difference_with(&forced);
                    changed = true;
                }
            }
            let selected: Vec<usize> = ones.ones().collect();
            for i in selected {
                self.work += 2 * self.words;
                let sel = p.partners[i].intersection_count(ones);
                if sel >= need {
                    continue;
                }
                let deficit = need - sel;
                let avail = p.partners[i].intersection_count(&free);
                if deficit > avail {
                    return false;
                }
                if deficit == avail {
                    let mut forced = p.partners[i].clone();
                    forced.intersect_with(&free);
                    ones.union_with(&forced);
                    free.difference_with(&forced);
                    changed = true;
                }
            }
            let count = ones.count_ones(..);
            if count < p.n_min {
                let avail = free.count_ones(..);
                if p.n_min - count > avail {
                    return false;
                }
                if p.n_min - count == avail && avail > 0 {
                    ones.union_with(&free);
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
        }
    }

    fn evaluate(&mut self, ones: &mut FixedBitSet, zeros: &mut FixedBitSet) -> Eval {
        if !self.propagate(ones, zeros) {
            return Eval::Infeasible;
        }
        let p = self.p;
        let free = self.free_set(ones, zeros);
        // violated covering constraints restricted to free variables
        let mut open: Vec<(usize, FixedBitSet)> = Vec::new();
        for (row, &r) in p.vis_rows.iter().zip(&p.rhs) {
            self.work += self.words;
            let sel = row.intersection_count(ones);
            if sel < r as usize {
                let mut f = row.clone();
                f.intersect_with(&free);
                open.push((r as usize - sel, f));
            }
        }
        for i in ones.ones() {
            self.work += self.words;
            let sel = p.partners[i].intersection_count(ones);
            if sel < p.n_match as usize {
                let mut f = p.partners[i].clone();
                f.intersect_with(&free);
                open.push((p.n_match as usize - sel, f));
            }
        }
        let count = ones.count_ones(..);
        let nmin_deficit = p.n_min.saturating_sub(count);
        if open.is_empty() && nmin_deficit == 0 {
            return Eval::Feasible;
        }

        open.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.count_ones(..).cmp(&b.1.count_ones(..))));
        let mut used = FixedBitSet::with_capacity(self.n);
        let mut packing = 0;
        for (d, f) in &open {
            self.work += self.words;
            if f.is_disjoint(&used) {
                packing += d;
                used.union_with(f);
            }
        }
        let lb = count + packing.max(nmin_deficit);

        let branch = if open.is_empty() {
            free.ones()
                .max_by(|&a, &b| p.visible_counts[a].cmp(&p.visible_counts[b]).then(b.cmp(&a)))
                .expect("n_min deficit implies free variables")
        } else {
            let mut score = vec![0u32; self.n];
            for (_, f) in &open {
                self.work += self.words;
                for j in f.ones() {
                    score[j] += 1;
                }
            }
            let mut best = usize::MAX;
            for j in free.ones() {
                if best == usize::MAX || score[j] > score[best] {
                    best = j;
                }
            }
            best
        };
        Eval::Open { lb, branch }
    }
}

/// Removes selected cameras one by one, least visible first, while the
/// selection stays feasible. `keep` is never removed.
fn prune_redundant(p: &SelectionProblem, x: &mut FixedBitSet, keep: &FixedBitSet) {
    let mut order: Vec<usize> = x.ones().filter(|&i| !keep.contains(i)).collect();
    order.sort_by(|&a, &b| p.visible_counts[a].cmp(&p.visible_counts[b]).then(b.cmp(&a)));
    for i in order {
        if x.count_ones(..) <= p.n_min {
            break;
        }
        x.set(i, false);
        if violation(p, x) > 0 {
            x.insert(i);
        }
    }
}

/// Solves the program to proven optimality or until a budget runs out.
///
/// Cameras that can never be matched are fixed to zero first. If that
/// leaves the original program infeasible, the bounds are lowered to what
/// remains and the result is reported as [`SolveStatus::InfeasibleRelaxed`].
/// A warm start that is infeasible for the resulting program is ignored.
pub fn solve_bnb(problem: &SelectionProblem, warm: &WarmStart, cfg: &SelectionConfig) -> Solution {
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(cfg.time_budget.max(0.0));
    let n = problem.n_vars();
    let mut excluded = problem.unmatchable();
    excluded.union_with(&warm.excluded);
    let (p, relaxed) = problem.restricted(&excluded);

    let mut warnings = Vec::new();
    let dropped = problem.ids_of(&excluded);
    if !dropped.is_empty() {
        let shown: Vec<String> = dropped.iter().take(20).map(|c| c.to_string()).collect();
        warnings.push(format!(
            "{} camera(s) cannot reach {} matchable partners and were excluded: {}{}",
            dropped.len(),
            p.n_match,
            shown.join(" "),
            if dropped.len() > 20 { " ..." } else { "" }
        ));
    }
    if relaxed {
        warnings.push(format!(
            "constraints infeasible as built; relaxed to n_min = {} with clamped visibility bounds",
            p.n_min
        ));
    }

    let mut root_ones = FixedBitSet::with_capacity(n);
    if cfg.warm_start_mode == WarmStartMode::HardFix {
        let mut order: Vec<usize> = (0..n).filter(|&i| !p.fixed_zero.contains(i)).collect();
        order.sort_by(|&a, &b| p.visible_counts[b].cmp(&p.visible_counts[a]).then(a.cmp(&b)));
        for &i in order.iter().take(p.n_min) {
            root_ones.insert(i);
        }
    }

    let mut incumbent = if check_assignment(&p, &warm.selected).is_ok() && root_ones.is_subset(&warm.selected) {
        warm.selected.clone()
    } else {
        let mut all = FixedBitSet::with_capacity(n);
        all.insert_range(..);
        all.difference_with(&p.fixed_zero);
        all
    };
    prune_redundant(&p, &mut incumbent, &root_ones);
    let mut best = incumbent.count_ones(..);

    let mut search = Search { p: &p, n, words: n.div_ceil(32).max(1) as u64, work: 0 };
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let mut nodes = 0u64;
    let mut lower_bound = best;
    let mut proven = true;

    let mut ones = root_ones;
    let mut zeros = p.fixed_zero.clone();
    nodes += 1;
    match search.evaluate(&mut ones, &mut zeros) {
        Eval::Infeasible => {}
        Eval::Feasible => {
            if ones.count_ones(..) < best {
                best = ones.count_ones(..);
                incumbent = ones;
            }
        }
        Eval::Open { lb, branch } => {
            if lb < best {
                heap.push((Node { lb, depth: 0, seq, ones, zeros }, branch));
            }
        }
    }

    while let Some((node, branch)) = heap.pop() {
        if node.lb >= best {
            break;
        }
        if search.work > cfg.work_budget || start.elapsed() > deadline {
            proven = false;
            lower_bound = node.lb;
            break;
        }
        for value in [true, false] {
            let mut ones = node.ones.clone();
            let mut zeros = node.zeros.clone();
            if value {
                ones.insert(branch);
            } else {
                zeros.insert(branch);
            }
            nodes += 1;
            seq += 1;
            match search.evaluate(&mut ones, &mut zeros) {
                Eval::Infeasible => {}
                Eval::Feasible => {
                    let size = ones.count_ones(..);
                    if size < best {
                        best = size;
                        incumbent = ones;
                    }
                }
                Eval::Open { lb, branch } => {
                    if lb < best {
                        heap.push((Node { lb, depth: node.depth + 1, seq, ones, zeros }, branch));
                    }
                }
            }
        }
    }
    if proven {
        lower_bound = best;
    }
    debug_assert!(check_assignment(&p, &incumbent).is_ok());

    let status = if relaxed {
        SolveStatus::InfeasibleRelaxed
    } else if proven {
        SolveStatus::ProvenOptimal
    } else {
        SolveStatus::FeasibleBudgetExceeded
    };
    if !proven {
        warnings.push(format!("search budget exhausted after {} nodes; gap {}", nodes, best - lower_bound));
    }
    Solution {
        selected: problem.ids_of(&incumbent),
        objective: best,
        status,
        gap: best - lower_bound,
        lower_bound,
        nodes,
        solve_time: start.elapsed().as_secs_f64(),
        warnings,
    }
}
