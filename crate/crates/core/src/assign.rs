//! Rectangular linear sum assignment with forbidden pairs.
//!
//! Forbidden pairs are marked with `f64::INFINITY`. Among all pairings that
//! use as many allowed pairs as possible, the one with minimum total cost is
//! returned. Internally the matrix is padded to a square one, forbidden
//! entries are replaced by a penalty larger than any achievable difference
//! in allowed cost, and the shortest-augmenting-path Hungarian method with
//! dual potentials solves it in `O(n^3)`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Column paired with each row, if any.
    pub row_to_col: Vec<Option<usize>>,
    /// Sum of the paired costs, accumulated in row order.
    pub total: f64,
}

impl Assignment {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.row_to_col
            .iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
    }

    pub fn col_to_row(&self, n_cols: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n_cols];
        for (r, c) in self.pairs() {
            out[c] = Some(r);
        }
        out
    }
}

fn check(cost: &[Vec<f64>]) -> Result<usize> {
    let m = cost.first().map_or(0, Vec::len);
    for (i, row) in cost.iter().enumerate() {
        if row.len() != m {
            return Err(Error::InvalidInput(format!(
                "cost row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
            return Err(Error::InvalidInput(format!(
                "cost[{i}][{j}] is not a finite cost or +inf"
            )));
        }
    }
    Ok(m)
}

/// Minimum-cost maximal pairing of rows and columns.
pub fn solve_assignment(cost: &[Vec<f64>]) -> Result<Assignment> {
    let m = check(cost)?;
    let n = cost.len();
    if n == 0 || m == 0 {
        return Ok(Assignment {
            row_to_col: vec![None; n],
            total: 0.0,
        });
    }
    let size = n.max(m);
    let finite_sum: f64 = cost
        .iter()
        .flatten()
        .filter(|c| c.is_finite())
        .map(|c| c.abs())
        .sum();
    let forbidden = 2.0 * finite_sum + 1.0;
    let square: Vec<Vec<f64>> = (0..size)
        .map(|i| {
            (0..size)
                .map(|j| match cost.get(i).and_then(|r| r.get(j)) {
                    Some(c) if c.is_finite() => *c,
                    Some(_) => forbidden,
                    None => 0.0,
                })
                .collect()
        })
        .collect();
    let perm = hungarian(&square);
    let mut row_to_col = vec![None; n];
    let mut total = 0.0;
    for (i, slot) in row_to_col.iter_mut().enumerate() {
        let j = perm[i];
        if j < m && cost[i][j].is_finite() {
            *slot = Some(j);
            total += cost[i][j];
        }
    }
    Ok(Assignment { row_to_col, total })
}

/// Like [`solve_assignment`] but every row must receive an allowed column.
pub fn solve_assignment_full(cost: &[Vec<f64>]) -> Result<Assignment> {
    let m = check(cost)?;
    if cost.len() > m {
        return Err(Error::Infeasible(format!(
            "{} rows cannot all be matched to {m} columns",
            cost.len()
        )));
    }
    if let Some(i) = cost.iter().position(|r| r.iter().all(|c| c.is_infinite())) {
        return Err(Error::Infeasible(format!("row {i} has only forbidden entries")));
    }
    let a = solve_assignment(cost)?;
    if let Some(i) = a.row_to_col.iter().position(Option::is_none) {
        return Err(Error::Infeasible(format!(
            "row {i} cannot be matched without a forbidden pair"
        )));
    }
    Ok(a)
}

/// Square Hungarian method; returns the column of each row.
fn hungarian(a: &[Vec<f64>]) -> Vec<usize> {
    let n = a.len();
    // 1-based potentials and matching; column 0 is a virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}
