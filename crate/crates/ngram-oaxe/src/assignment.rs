//! Exact minimum-cost perfect matching on square cost matrices.
//!
//! The solver is an O(n^3) augmenting-path (Jonker-Volgenant style) Hungarian
//! variant over f64 costs. Among cost-equal optima it returns the
//! lexicographically smallest permutation, found by re-matching over the
//! tight edges of the final dual solution. A factorial brute-force solver is
//! kept alongside as an independent verification oracle.

use crate::error::{Error, Result};

/// Costs above this are clamped at construction so dual updates stay
/// well-conditioned.
pub const COST_CAP: f64 = 1e4;

/// Largest side length accepted by [`brute_force_solve`] (9! ~= 3.6e5).
pub const BRUTE_FORCE_MAX: usize = 9;

/// A dense square matrix of nonnegative finite assignment costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Vec<f64>,
    n: usize,
}

impl CostMatrix {
    /// Row-major construction. Rejects non-finite or negative entries and
    /// clamps entries above [`COST_CAP`].
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if entries.len() != n * n {
            return Err(Error::NotSquare { rows: n, cols: entries.len() / n.max(1), row: 0 });
        }
        let mut clamped = entries;
        for (idx, e) in clamped.iter_mut().enumerate() {
            let (row, col) = (idx / n, idx % n);
            if !e.is_finite() {
                return Err(Error::NonFiniteCost { row, col });
            }
            if *e < 0.0 {
                return Err(Error::NegativeCost { row, col, value: *e });
            }
            // min() also folds -0.0 into +0.0 via the comparison below.
            *e = if *e > COST_CAP { COST_CAP } else { *e + 0.0 };
        }
        Ok(Self { entries: clamped, n })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::NotSquare { rows: n, cols: r.len(), row: i });
            }
        }
        Self::new(n, rows.into_iter().flatten().collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.n + col]
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

/// A permutation assigning each row (position window) to a column (ngram),
/// with the summed cost of the selected entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub perm: Vec<usize>,
    pub total_cost: f64,
}

fn perm_cost(c: &CostMatrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum()
}

/// Sum of `c[i][perm[i]]` after validating that `perm` is a bijection.
pub fn assignment_cost(c: &CostMatrix, perm: &[usize]) -> Result<f64> {
    let n = c.n();
    if perm.len() != n {
        return Err(Error::InvalidPermutation(format!("length {} for n = {n}", perm.len())));
    }
    let mut seen = vec![false; n];
    for &j in perm {
        if j >= n {
            return Err(Error::InvalidPermutation(format!("index {j} out of range for n = {n}")));
        }
        if seen[j] {
            return Err(Error::InvalidPermutation(format!("column {j} assigned twice")));
        }
        seen[j] = true;
    }
    Ok(perm_cost(c, perm))
}

/// Exact minimum-cost assignment in O(n^3).
///
/// Deterministic: among cost-equal optima the lexicographically smallest
/// permutation is returned.
pub fn hungarian_solve(c: &CostMatrix) -> Assignment {
    let (perm_jv, u, v) = jv_match(c);

    let perm = lexicographic_optimum(c, &perm_jv, &u, &v).unwrap_or(perm_jv);
    let total_cost = perm_cost(c, &perm);
    Assignment { perm, total_cost }
}

/// Augmenting-path Hungarian with dual potentials (1-indexed internals).
/// Returns the matching together with the final row/column duals.
fn jv_match(c: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = c.n();
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j] = row matched to column j, 0 = free
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.fill(inf);
        used.fill(false);

        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;

            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }

            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }

            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }

        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut perm = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            perm[p[j] - 1] = j - 1;
        }
    }
    (perm, u, v)
}

/// Every optimal assignment lies on edges whose reduced cost is zero under
/// optimal duals, and every perfect matching over those edges is optimal.
/// Walk rows in order, greedily taking the smallest tight column that still
/// leaves the remaining rows matchable. Returns None when floating-point
/// noise leaves no tight perfect matching, or when the re-matched cost
/// drifts from the solver's optimum.
fn lexicographic_optimum(
    c: &CostMatrix,
    perm_jv: &[usize],
    u: &[f64],
    v: &[f64],
) -> Option<Vec<usize>> {
    let n = c.n();
    let tol = 1e-9 * (1.0 + c.max_entry());

    // Flat adjacency of tight edges: columns for row i live at
    // edges[offsets[i]..offsets[i + 1]].
    let mut offsets = Vec::with_capacity(n + 1);
    let mut edges = Vec::with_capacity(2 * n);
    offsets.push(0);
    for i in 0..n {
        for j in 0..n {
            if (c.get(i, j) - u[i + 1] - v[j + 1]).abs() <= tol {
                edges.push(j);
            }
        }
        offsets.push(edges.len());
    }
    let tight = TightGraph { offsets, edges };

    let mut perm = vec![usize::MAX; n];
    let mut col_used = vec![false; n];
    let mut col_match: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    for i in 0..n {
        let mut chosen = None;
        for &j in tight.row(i) {
            if col_used[j] {
                continue;
            }
            col_used[j] = true;
            if rows_matchable(i + 1, n, &tight, &col_used, &mut col_match, &mut visited) {
                chosen = Some(j);
                break;
            }
            col_used[j] = false;
        }
        perm[i] = chosen?;
    }

    let jv_cost = perm_cost(c, perm_jv);
    let lex_cost = perm_cost(c, &perm);
    if (lex_cost - jv_cost).abs() <= tol * n as f64 {
        Some(perm)
    } else {
        None
    }
}

struct TightGraph {
    offsets: Vec<usize>,
    edges: Vec<usize>,
}

impl TightGraph {
    #[inline]
    fn row(&self, i: usize) -> &[usize] {
        &self.edges[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Kuhn's algorithm: can rows `start..n` be perfectly matched to the unused
/// columns of the tight graph?
fn rows_matchable(
    start: usize,
    n: usize,
    tight: &TightGraph,
    col_used: &[bool],
    col_match: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    col_match.fill(None);
    for r in start..n {
        visited.fill(false);
        if !augment(r, tight, col_used, col_match, visited) {
            return false;
        }
    }
    true
}

fn augment(
    r: usize,
    tight: &TightGraph,
    col_used: &[bool],
    col_match: &mut [Option<usize>],
    visited: &mut [bool],
) -> bool {
    for &j in tight.row(r) {
        if col_used[j] || visited[j] {
            continue;
        }
        visited[j] = true;
        let free = match col_match[j] {
            None => true,
            Some(r2) => augment(r2, tight, col_used, col_match, visited),
        };
        if free {
            col_match[j] = Some(r);
            return true;
        }
    }
    false
}

/// Exhaustive minimum over all n! permutations, enumerated in lexicographic
/// order with strict improvement, so ties resolve to the smallest
/// permutation. Limited to n <= [`BRUTE_FORCE_MAX`].
pub fn brute_force_solve(c: &CostMatrix) -> Result<Assignment> {
    let n = c.n();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::BruteForceTooLarge { n, max: BRUTE_FORCE_MAX });
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best_perm = perm.clone();
    let mut best_cost = perm_cost(c, &perm);
    while next_permutation(&mut perm) {
        let cost = perm_cost(c, &perm);
        if cost < best_cost {
            best_cost = cost;
            best_perm = perm.clone();
        }
    }
    Ok(Assignment { perm: best_perm, total_cost: best_cost })
}

/// Advances to the next permutation in lexicographic order; false once the
/// sequence wraps.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}
