use fixedbitset::FixedBitSet;

use super::SelectionProblem;

/// Greedy initial selection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarmStart {
    pub selected: FixedBitSet,
    /// Variables fixed to zero because no selection can give them
    /// `n_match` partners.
    pub excluded: FixedBitSet,
}

impl WarmStart {
    pub fn empty(n: usize) -> Self {
        Self { selected: FixedBitSet::with_capacity(n), excluded: FixedBitSet::with_capacity(n) }
    }

    pub fn size(&self) -> usize {
        self.selected.count_ones(..)
    }
}

/// Total constraint shortfall of `x`.
pub(crate) fn violation(p: &SelectionProblem, x: &FixedBitSet) -> u64 {
    let mut v = 0u64;
    for (row, &r) in p.vis_rows.iter().zip(&p.rhs) {
        v += (r as u64).saturating_sub(row.intersection_count(x) as u64);
    }
    for i in x.ones() {
        v += (p.n_match as u64).saturating_sub(p.partners[i].intersection_count(x) as u64);
    }
    v + (p.n_min as u64).saturating_sub(x.count_ones(..) as u64)
}

/// Change in [`violation`] from adding `c` to `x`. Positive is better.
fn gain(p: &SelectionProblem, x: &FixedBitSet, row_deficit: &[u32], c: usize) -> i64 {
    let mut g = 0i64;
    for (row, &d) in p.vis_rows.iter().zip(row_deficit) {
        if d > 0 && row.contains(c) {
            g += 1;
        }
    }
    for i in p.partners[c].ones() {
        if x.contains(i) && (p.partners[i].intersection_count(x) as u32) < p.n_match {
            g += 1;
        }
    }
    g -= (p.n_match as i64 - p.partners[c].intersection_count(x) as i64).max(0);
    if x.count_ones(..) < p.n_min {
        g += 1;
    }
    g
}

/// Selects the `n_min` most-seeing cameras, then adds the camera that most
/// reduces the total shortfall until the selection is feasible. Ties go to
/// the lowest camera id.
///
/// Unmatchable cameras are excluded up front, so the returned selection is
/// feasible for `problem.restricted(&warm.excluded)`.
pub fn greedy_warm_start(problem: &SelectionProblem) -> WarmStart {
    let n = problem.n_vars();
    let excluded = problem.unmatchable();
    let (p, _) = problem.restricted(&excluded);
    let mut order: Vec<usize> = (0..n).filter(|&i| !excluded.contains(i)).collect();
    order.sort_by(|&a, &b| p.visible_counts[b].cmp(&p.visible_counts[a]).then(a.cmp(&b)));

    let mut x = FixedBitSet::with_capacity(n);
    for &i in order.iter().take(p.n_min) {
        x.insert(i);
    }
    order.sort_unstable();
    while violation(&p, &x) > 0 {
        let deficits: Vec<u32> =
            p.vis_rows.iter().zip(&p.rhs).map(|(row, &r)| r.saturating_sub(row.intersection_count(&x) as u32)).collect();
        let best = order
            .iter()
            .copied()
            .filter(|&c| !x.contains(c))
            .map(|c| (gain(&p, &x, &deficits, c), c))
            .max_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
        match best {
            Some((_, c)) => x.insert(c),
            None => break,
        }
    }
    WarmStart { selected: x, excluded }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::random_problem;
    use super::super::{build_ilp, check_assignment, SelectionConfig};
    use super::*;
    use crate::model::{CameraId, PointId};
    use crate::visibility::{SimilarityMatrix, VisibilityMatrix};

    #[test]
    fn warm_start_is_feasible_for_the_restricted_program() {
        for seed in 0..300 {
            let n = 3 + (seed as usize % 12);
            let p = random_problem(seed, n, 0.5, 6, 2, 2);
            let w = greedy_warm_start(&p);
            let (r, _) = p.restricted(&w.excluded);
            assert_eq!(check_assignment(&r, &w.selected), Ok(()), "seed {seed}");
            assert_eq!(violation(&r, &w.selected), 0);
        }
    }

    #[test]
    fn seed_takes_most_visible_cameras() {
        let rows = vec![
            vec![false, true, true, false],
            vec![false, true, true, false],
            vec![true, false, true, true],
        ];
        let vis = VisibilityMatrix::from_rows(
            (0..3).map(PointId).collect(),
            (0..4).map(CameraId).collect(),
            &rows,
        )
        .unwrap();
        let sim = SimilarityMatrix::from_binary(&vec![vec![true; 4]; 4]);
        let cfg = SelectionConfig { n_match: 1, n_low: 1, ..SelectionConfig::default() };
        let p = build_ilp(&vis, &sim, &cfg).unwrap().with_n_min(1);
        let w = greedy_warm_start(&p);
        // camera 2 sees everything; the rows still want a second camera each
        assert!(w.selected.contains(2));
        assert_eq!(check_assignment(&p, &w.selected), Ok(()));
    }
}
