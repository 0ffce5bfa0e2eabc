use std::io::{self, Write};

use super::SelectionProblem;

/// Writes the program in CPLEX LP format. Variables are named `c<camera id>`.
pub fn write_lp<W: Write>(problem: &SelectionProblem, mut out: W) -> io::Result<()> {
    let name = |i: usize| format!("c{}", problem.camera_ids[i].0);
    let n = problem.n_vars();
    let all: Vec<String> = (0..n).map(name).collect();

    writeln!(out, "\\ camera selection, {} variables", n)?;
    writeln!(out, "Minimize")?;
    writeln!(out, " obj: {}", all.join(" + "))?;
    writeln!(out, "Subject To")?;
    writeln!(out, " nmin: {} >= {}", all.join(" + "), problem.n_min)?;
    for i in 0..n {
        let mut terms = vec![format!("-{} {}", problem.n_match, name(i))];
        terms.extend(problem.partners[i].ones().map(name));
        writeln!(out, " match_{}: {} >= 0", name(i), terms.join(" + "))?;
    }
    for (r, (row, rhs)) in problem.vis_rows.iter().zip(&problem.rhs).enumerate() {
        let terms: Vec<String> = row.ones().map(name).collect();
        writeln!(out, " vis_{}: {} >= {}", r, terms.join(" + "), rhs)?;
    }
    if problem.fixed_zero.count_ones(..) > 0 {
        writeln!(out, "Bounds")?;
        for i in problem.fixed_zero.ones() {
            writeln!(out, " {} = 0", name(i))?;
        }
    }
    writeln!(out, "Binary")?;
    writeln!(out, " {}", all.join(" "))?;
    writeln!(out, "End")
}
