//! Minimum-cost bipartite assignment (Hungarian method with potentials).
//!
//! Rectangular inputs are padded to a square matrix with zero-cost dummy
//! rows or columns. Among co-optimal assignments the result is the
//! lexicographically smallest list of sorted `(row, col)` pairs: after
//! solving, rows are fixed in order to their smallest admissible column on
//! the tight-edge graph of the optimal duals, re-routing the remaining
//! matching along alternating paths.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{contract, Result};

/// Dense row-major cost matrix with finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(contract!("cost matrix has {} entries, expected {rows}x{cols}", data.len()));
        }
        if let Some(i) = data.iter().position(|c| !c.is_finite()) {
            return Err(contract!("cost ({}, {}) is not finite", i / cols.max(1), i % cols.max(1)));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(contract!("cost matrix rows have unequal lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row; `min(rows, cols)` entries.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

pub fn hungarian_match(cost: &CostMatrix) -> Assignment {
    let (q, m) = (cost.rows, cost.cols);
    if q == 0 || m == 0 {
        return Assignment { pairs: Vec::new(), total: 0.0 };
    }
    let n = q.max(m);
    let at = |i: usize, j: usize| if i < q && j < m { cost.get(i, j) } else { 0.0 };

    // 1-indexed potentials; p[j] = row matched to column j
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = at(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
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

    let mut col_to_row = vec![0usize; n];
    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        col_to_row[j - 1] = p[j] - 1;
        row_to_col[p[j] - 1] = j - 1;
    }

    let scale = 1.0 + cost.data.iter().fold(0.0f64, |a, c| a.max(libm::fabs(*c)));
    let tol = 8.0 * n as f64 * f64::EPSILON * scale;
    let mut tight = vec![false; n * n];
    for i in 0..n {
        for j in 0..n {
            tight[i * n + j] = at(i, j) - u[i + 1] - v[j + 1] <= tol;
        }
        tight[i * n + row_to_col[i]] = true;
    }

    let mut fixed_col = vec![false; n];
    let mut visited = vec![false; n];
    for row in 0..q {
        for col in 0..n {
            if !tight[row * n + col] || fixed_col[col] {
                continue;
            }
            if row_to_col[row] == col {
                fixed_col[col] = true;
                break;
            }
            // free the row's current column, then let the displaced row
            // reach it along an alternating path
            let target = row_to_col[row];
            let displaced = col_to_row[col];
            visited.fill(false);
            visited[col] = true;
            let reroute = Reroute { n, tight: &tight, fixed_col: &fixed_col, target };
            if reroute.augment(displaced, &mut visited, &mut row_to_col, &mut col_to_row) {
                row_to_col[row] = col;
                col_to_row[col] = row;
                fixed_col[col] = true;
                break;
            }
        }
    }

    let pairs: Vec<(usize, usize)> = (0..q).map(|r| (r, row_to_col[r])).filter(|&(_, c)| c < m).collect();
    let total = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Assignment { pairs, total }
}

struct Reroute<'a> {
    n: usize,
    tight: &'a [bool],
    fixed_col: &'a [bool],
    target: usize,
}

impl Reroute<'_> {
    fn augment(&self, row: usize, visited: &mut [bool], row_to_col: &mut [usize], col_to_row: &mut [usize]) -> bool {
        for col in 0..self.n {
            if visited[col] || self.fixed_col[col] || !self.tight[row * self.n + col] {
                continue;
            }
            visited[col] = true;
            if col == self.target || self.augment(col_to_row[col], visited, row_to_col, col_to_row) {
                row_to_col[row] = col;
                col_to_row[col] = row;
                return true;
            }
        }
        false
    }
}
