//! Tracklet/detection assignment.
//!
//! `solve_assignment` runs a shortest-augmenting-path Hungarian solver
//! (O(n^2 m) with row/column potentials) on the full matrix and then dissolves
//! any pair whose cost exceeds its gate. `brute_force_assignment` enumerates
//! every injection and exists to cross-check the solver.

use serde::Deserialize;
use thiserror::Error;

use crate::geometry::{center_distance, iou, GlobalBox};

/// Largest `min(rows, cols)` the brute-force oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum AssignmentError {
    #[error("brute force assignment limited to min side {BRUTE_FORCE_LIMIT}, got {0}")]
    TooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostMetric {
    /// `1 - IoU`.
    Iou,
    /// Center distance in pixels.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Matcher {
    #[default]
    Hungarian,
    Greedy,
}

/// Dense row-major cost matrix; rows are tracklets, columns are detections.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "cost matrix shape mismatch");
        assert!(data.iter().all(|c| c.is_finite() && *c >= 0.0), "costs must be finite and nonnegative");
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged cost matrix");
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }
}

/// Maximum admissible cost, uniform or per tracklet row.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Uniform(f64),
    PerRow(Vec<f64>),
}

impl Gate {
    pub fn none() -> Self {
        Gate::Uniform(f64::INFINITY)
    }

    fn limit(&self, row: usize) -> f64 {
        match self {
            Gate::Uniform(g) => *g,
            Gate::PerRow(v) => v[row],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl Assignment {
    fn from_pairs(rows: usize, cols: usize, mut matches: Vec<(usize, usize)>) -> Self {
        matches.sort_unstable();
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c) in &matches {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            matches,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }

    /// Sum of matched costs, accumulated in row order.
    pub fn total_cost(&self, costs: &CostMatrix) -> f64 {
        self.matches.iter().map(|&(r, c)| costs.get(r, c)).sum()
    }
}

pub fn build_cost_matrix(apriori: &[GlobalBox], dets: &[GlobalBox], metric: CostMetric) -> CostMatrix {
    let mut data = Vec::with_capacity(apriori.len() * dets.len());
    for a in apriori {
        for d in dets {
            data.push(match metric {
                CostMetric::Iou => 1.0 - iou(a, d),
                CostMetric::Euclidean => center_distance(a, d),
            });
        }
    }
    CostMatrix::new(apriori.len(), dets.len(), data)
}

/// Minimum-cost matching of `min(rows, cols)` pairs followed by gating.
pub fn solve_assignment(costs: &CostMatrix, gate: &Gate) -> Assignment {
    let pairs = hungarian(costs);
    gated(costs, gate, pairs)
}

/// Greedy ascending-cost matching, for ablations.
pub fn solve_greedy(costs: &CostMatrix, gate: &Gate) -> Assignment {
    let mut all: Vec<(f64, usize, usize)> = (0..costs.rows)
        .flat_map(|r| (0..costs.cols).map(move |c| (r, c)))
        .map(|(r, c)| (costs.get(r, c), r, c))
        .filter(|&(cost, r, _)| cost <= gate.limit(r))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let mut row_used = vec![false; costs.rows];
    let mut col_used = vec![false; costs.cols];
    let mut pairs = Vec::new();
    for (_, r, c) in all {
        if !row_used[r] && !col_used[c] {
            row_used[r] = true;
            col_used[c] = true;
            pairs.push((r, c));
        }
    }
    Assignment::from_pairs(costs.rows, costs.cols, pairs)
}

pub fn solve_with(matcher: Matcher, costs: &CostMatrix, gate: &Gate) -> Assignment {
    match matcher {
        Matcher::Hungarian => solve_assignment(costs, gate),
        Matcher::Greedy => solve_greedy(costs, gate),
    }
}

fn gated(costs: &CostMatrix, gate: &Gate, pairs: Vec<(usize, usize)>) -> Assignment {
    let kept = pairs.into_iter().filter(|&(r, c)| costs.get(r, c) <= gate.limit(r)).collect();
    Assignment::from_pairs(costs.rows, costs.cols, kept)
}

/// Exhaustive minimum over all injections of the smaller side.
pub fn brute_force_assignment(costs: &CostMatrix) -> Result<Assignment, AssignmentError> {
    let n = costs.rows.min(costs.cols);
    if n > BRUTE_FORCE_LIMIT {
        return Err(AssignmentError::TooLarge(n));
    }
    if n == 0 {
        return Ok(Assignment::from_pairs(costs.rows, costs.cols, Vec::new()));
    }
    let transposed = costs.rows > costs.cols;
    let (small, large) = if transposed { (costs.cols, costs.rows) } else { (costs.rows, costs.cols) };
    let cost = |i: usize, j: usize| if transposed { costs.get(j, i) } else { costs.get(i, j) };

    let mut used = vec![false; large];
    let mut current = Vec::with_capacity(small);
    let mut best: Option<(f64, Vec<usize>)> = None;

    fn recurse(
        i: usize,
        small: usize,
        large: usize,
        cost: &dyn Fn(usize, usize) -> f64,
        used: &mut [bool],
        current: &mut Vec<usize>,
        best: &mut Option<(f64, Vec<usize>)>,
    ) {
        if i == small {
            let total: f64 = current.iter().enumerate().map(|(a, &b)| cost(a, b)).sum();
            if best.as_ref().is_none_or(|(t, _)| total < *t) {
                *best = Some((total, current.clone()));
            }
            return;
        }
        for j in 0..large {
            if !used[j] {
                used[j] = true;
                current.push(j);
                recurse(i + 1, small, large, cost, used, current, best);
                current.pop();
                used[j] = false;
            }
        }
    }

    recurse(0, small, large, &cost, &mut used, &mut current, &mut best);
    let (_, perm) = best.expect("at least one injection exists");
    let pairs = perm
        .into_iter()
        .enumerate()
        .map(|(i, j)| if transposed { (j, i) } else { (i, j) })
        .collect();
    Ok(Assignment::from_pairs(costs.rows, costs.cols, pairs))
}

/// Rectangular Hungarian algorithm with potentials; returns min(rows, cols)
/// pairs. Rows are inserted in index order and the first minimal column wins,
/// so results are deterministic.
fn hungarian(costs: &CostMatrix) -> Vec<(usize, usize)> {
    if costs.is_empty() {
        return Vec::new();
    }
    let transposed = costs.rows > costs.cols;
    let (n, m) = if transposed { (costs.cols, costs.rows) } else { (costs.rows, costs.cols) };
    let a = |i: usize, j: usize| if transposed { costs.get(j, i) } else { costs.get(i, j) };

    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
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

    (1..=m)
        .filter(|&j| p[j] != 0)
        .map(|j| {
            let (i, j) = (p[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect()
}
