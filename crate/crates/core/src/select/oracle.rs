use std::time::Instant;

use fixedbitset::FixedBitSet;

use super::{check_assignment, SelectError, SelectionProblem, Solution, SolveStatus};

pub const MAX_ORACLE_VARS: usize = 20;

/// Exhaustive search over all subsets, by increasing size and then
/// lexicographically. Returns the smallest feasible selection with the
/// lexicographically smallest camera ids, or `None` if none exists.
pub fn brute_force_oracle(problem: &SelectionProblem) -> Result<Option<Solution>, SelectError> {
    let n = problem.n_vars();
    if n > MAX_ORACLE_VARS {
        return Err(SelectError::TooManyVariables(n));
    }
    let start = Instant::now();
    let mut nodes = 0u64;
    for k in 0..=n {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            nodes += 1;
            let mut x = FixedBitSet::with_capacity(n);
            for &i in &combo {
                x.insert(i);
            }
            if check_assignment(problem, &x).is_ok() {
                return Ok(Some(Solution {
                    selected: problem.ids_of(&x),
                    objective: k,
                    status: SolveStatus::ProvenOptimal,
                    gap: 0,
                    lower_bound: k,
                    nodes,
                    solve_time: start.elapsed().as_secs_f64(),
                    warnings: Vec::new(),
                }));
            }
            if !next_combination(&mut combo, n) {
                break;
            }
        }
    }
    Ok(None)
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}
