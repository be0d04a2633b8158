//! Bijective matching between two equal-size point clouds.
//!
//! The matching minimizes the sum of *unsquared* Euclidean distances between
//! paired points. [`optimal_assignment`] solves the linear assignment problem
//! exactly with shortest augmenting paths (Jonker-Volgenant family, O(n³)),
//! [`greedy_assignment`] is a fast approximation and
//! [`brute_force_assignment`] enumerates all permutations for small `n`.
//!
//! Optimal matchings are not unique when costs tie; the exact solver returns
//! whichever optimum its pivoting order reaches. Only the brute-force oracle
//! canonicalizes ties (lexicographically smallest permutation).

use std::fmt;
use std::str::FromStr;

use crate::pointcloud::PointCloud;
use crate::{Error, Result};

/// Largest `n` accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX: usize = 10;

/// `perm[i]` is the index in the second cloud matched to point `i` of the
/// first; `cost` is the total matched distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    perm: Vec<usize>,
    cost: f64,
}

impl Assignment {
    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn len(&self) -> usize {
        self.perm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    /// The matching seen from the second cloud. Its cost is recomputed in
    /// the new summation order.
    pub fn inverse(&self, a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
        let mut inv = vec![0; self.perm.len()];
        for (i, &j) in self.perm.iter().enumerate() {
            inv[j] = i;
        }
        let cost = assignment_cost(b, a, &inv)?;
        Ok(Assignment { perm: inv, cost })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AssignmentMode {
    #[default]
    Exact,
    Greedy,
}

impl FromStr for AssignmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(AssignmentMode::Exact),
            "greedy" => Ok(AssignmentMode::Greedy),
            _ => Err(Error::invalid(format!("unknown assignment mode {s:?}"))),
        }
    }
}

impl fmt::Display for AssignmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssignmentMode::Exact => "exact",
            AssignmentMode::Greedy => "greedy",
        })
    }
}

pub fn assign(a: &PointCloud, b: &PointCloud, mode: AssignmentMode) -> Result<Assignment> {
    match mode {
        AssignmentMode::Exact => optimal_assignment(a, b),
        AssignmentMode::Greedy => greedy_assignment(a, b),
    }
}

fn check_sizes(a: &PointCloud, b: &PointCloud) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "assignment needs equal cardinality, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &j in perm {
        if j >= perm.len() || seen[j] {
            return false;
        }
        seen[j] = true;
    }
    true
}

/// `Σ_i ‖a_i − b_perm[i]‖`, summed in index order.
pub fn assignment_cost(a: &PointCloud, b: &PointCloud, perm: &[usize]) -> Result<f64> {
    check_sizes(a, b)?;
    if perm.len() != a.len() || !is_permutation(perm) {
        return Err(Error::invalid("perm is not a bijection on the cloud indices"));
    }
    Ok(a
        .points()
        .iter()
        .zip(perm)
        .map(|(p, &j)| p.distance(&b.points()[j]))
        .sum())
}

fn distance_matrix(a: &PointCloud, b: &PointCloud) -> Vec<f64> {
    let n = a.len();
    let mut cost = Vec::with_capacity(n * n);
    for p in a.points() {
        cost.extend(b.points().iter().map(|q| p.distance(q)));
    }
    cost
}

/// Exact minimum-cost bijection.
pub fn optimal_assignment(a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
    check_sizes(a, b)?;
    let perm = solve_dense_lap(&distance_matrix(a, b), a.len());
    let cost = assignment_cost(a, b, &perm)?;
    Ok(Assignment { perm, cost })
}

const UNASSIGNED: usize = usize::MAX;

/// Solves a dense square assignment problem (`cost` is row-major `n × n`,
/// all entries finite) and returns the column assigned to each row.
///
/// Each row is inserted by a Dijkstra search for the shortest augmenting path
/// over reduced costs `c[i][j] − u[i] − v[j]`; the dual potentials are then
/// updated so reduced costs stay non-negative.
pub fn solve_dense_lap(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    let mut col_for_row = vec![UNASSIGNED; n];
    let mut row_for_col = vec![UNASSIGNED; n];

    // column reduction: v[j] is the column minimum, and a free minimizing
    // row (lowest index first) takes the column outright
    for j in 0..n {
        let mut best_row = 0;
        for i in 1..n {
            let c = cost[i * n + j];
            let b = cost[best_row * n + j];
            if c < b || (c == b && col_for_row[best_row] != UNASSIGNED && col_for_row[i] == UNASSIGNED) {
                best_row = i;
            }
        }
        v[j] = cost[best_row * n + j];
        if col_for_row[best_row] == UNASSIGNED {
            col_for_row[best_row] = j;
            row_for_col[j] = best_row;
        }
    }

    augmenting_row_reduction(cost, n, &mut v, &mut col_for_row, &mut row_for_col);
    for i in 0..n {
        let j = col_for_row[i];
        if j != UNASSIGNED {
            u[i] = cost[i * n + j] - v[j];
        }
    }

    let mut dist = vec![f64::INFINITY; n];
    let mut pred = vec![0usize; n];
    let mut row_seen = vec![false; n];
    let mut col_done = vec![false; n];
    // columns still in the search, with their tentative distances alongside
    let mut rem_cols: Vec<usize> = Vec::with_capacity(n);
    let mut rem_dist: Vec<f64> = Vec::with_capacity(n);

    for start in 0..n {
        if col_for_row[start] != UNASSIGNED {
            continue;
        }
        row_seen.fill(false);
        col_done.fill(false);
        rem_cols.clear();
        rem_cols.extend(0..n);
        rem_dist.clear();
        rem_dist.resize(n, f64::INFINITY);

        let mut row = start;
        let mut min_val = 0.0;
        let sink = loop {
            row_seen[row] = true;
            let row_cost = &cost[row * n..(row + 1) * n];
            let offset = min_val - u[row];
            let mut best = UNASSIGNED;
            let mut lowest = f64::INFINITY;
            for (slot, (&j, d)) in rem_cols.iter().zip(rem_dist.iter_mut()).enumerate() {
                let reduced = offset + row_cost[j] - v[j];
                if reduced < *d {
                    pred[j] = row;
                    *d = reduced;
                }
                if *d < lowest || (*d == lowest && row_for_col[j] == UNASSIGNED) {
                    lowest = *d;
                    best = slot;
                }
            }
            debug_assert!(best != UNASSIGNED && lowest.is_finite());
            min_val = lowest;
            let j = rem_cols.swap_remove(best);
            rem_dist.swap_remove(best);
            dist[j] = lowest;
            col_done[j] = true;
            if row_for_col[j] == UNASSIGNED {
                break j;
            }
            row = row_for_col[j];
        };

        u[start] += min_val;
        for i in 0..n {
            if row_seen[i] && i != start {
                u[i] += min_val - dist[col_for_row[i]];
            }
        }
        for j in 0..n {
            if col_done[j] {
                v[j] -= min_val - dist[j];
            }
        }

        // flip the alternating path back to the start row
        let mut j = sink;
        loop {
            let i = pred[j];
            row_for_col[j] = i;
            std::mem::swap(&mut col_for_row[i], &mut j);
            if i == start {
                break;
            }
        }
    }
    col_for_row
}

/// Two passes of augmenting row reduction. Each free row takes the column
/// minimizing `c[i][j] − v[j]`, lowering that column's price to the row's
/// second-best value; a displaced row is processed again. Every assigned row
/// stays on a minimizer of its reduced row, so duals remain feasible.
fn augmenting_row_reduction(
    cost: &[f64],
    n: usize,
    v: &mut [f64],
    col_for_row: &mut [usize],
    row_for_col: &mut [usize],
) {
    if n < 2 {
        return;
    }
    let mut free: Vec<usize> = (0..n).filter(|&i| col_for_row[i] == UNASSIGNED).collect();
    for _ in 0..2 {
        let pending = std::mem::take(&mut free);
        let mut queue = pending.into_iter().rev().collect::<Vec<_>>();
        let mut steps = 0usize;
        while let Some(i) = queue.pop() {
            steps += 1;
            if steps > 2 * n {
                free.push(i);
                free.extend(queue.drain(..).rev());
                break;
            }
            let row_cost = &cost[i * n..(i + 1) * n];
            let (mut j1, mut j2) = (0usize, UNASSIGNED);
            let mut best = row_cost[0] - v[0];
            let mut second = f64::INFINITY;
            for j in 1..n {
                let h = row_cost[j] - v[j];
                if h < second {
                    if h >= best {
                        second = h;
                        j2 = j;
                    } else {
                        second = best;
                        j2 = j1;
                        best = h;
                        j1 = j;
                    }
                }
            }
            let strict = best < second;
            let mut target = j1;
            if strict {
                v[j1] -= second - best;
            } else if row_for_col[j1] != UNASSIGNED && j2 != UNASSIGNED {
                target = j2;
            }
            let displaced = row_for_col[target];
            row_for_col[target] = i;
            col_for_row[i] = target;
            if displaced != UNASSIGNED {
                col_for_row[displaced] = UNASSIGNED;
                if strict {
                    queue.push(displaced);
                } else {
                    free.push(displaced);
                }
            }
        }
    }
}

/// Repeatedly matches the globally closest unmatched pair. Ties in distance
/// break toward the smaller `(i, j)`.
pub fn greedy_assignment(a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
    check_sizes(a, b)?;
    let n = a.len();
    let cost = distance_matrix(a, b);
    let mut order: Vec<u32> = (0..(n * n) as u32).collect();
    order.sort_unstable_by(|&x, &y| cost[x as usize].total_cmp(&cost[y as usize]).then(x.cmp(&y)));

    let mut perm = vec![UNASSIGNED; n];
    let mut col_used = vec![false; n];
    let mut matched = 0;
    for idx in order {
        let (i, j) = (idx as usize / n, idx as usize % n);
        if perm[i] == UNASSIGNED && !col_used[j] {
            perm[i] = j;
            col_used[j] = true;
            matched += 1;
            if matched == n {
                break;
            }
        }
    }
    let cost = assignment_cost(a, b, &perm)?;
    Ok(Assignment { perm, cost })
}

/// Exhaustive minimum over all `n!` permutations, `n ≤ 10`. Among equal-cost
/// minimizers the lexicographically smallest permutation wins.
pub fn brute_force_assignment(a: &PointCloud, b: &PointCloud) -> Result<Assignment> {
    check_sizes(a, b)?;
    let n = a.len();
    if n > BRUTE_FORCE_MAX {
        return Err(Error::invalid(format!(
            "brute force refuses n = {n} (limit {BRUTE_FORCE_MAX})"
        )));
    }
    let cost = distance_matrix(a, b);
    let mut search = BruteForce {
        n,
        cost: &cost,
        current: Vec::with_capacity(n),
        used: vec![false; n],
        best: Vec::new(),
        best_cost: f64::INFINITY,
    };
    search.descend(0.0);
    let perm = search.best;
    let cost = assignment_cost(a, b, &perm)?;
    Ok(Assignment { perm, cost })
}

struct BruteForce<'a> {
    n: usize,
    cost: &'a [f64],
    current: Vec<usize>,
    used: Vec<bool>,
    best: Vec<usize>,
    best_cost: f64,
}

impl BruteForce<'_> {
    // Visits permutations in lexicographic order and accumulates the cost in
    // the same order as `assignment_cost`, so only strict improvements replace
    // the incumbent. Partial sums never decrease, which justifies the pruning.
    fn descend(&mut self, partial: f64) {
        let row = self.current.len();
        if row == self.n {
            if partial < self.best_cost {
                self.best_cost = partial;
                self.best = self.current.clone();
            }
            return;
        }
        for j in 0..self.n {
            if self.used[j] {
                continue;
            }
            let next = partial + self.cost[row * self.n + j];
            if next >= self.best_cost {
                continue;
            }
            self.used[j] = true;
            self.current.push(j);
            self.descend(next);
            self.current.pop();
            self.used[j] = false;
        }
    }
}
