//! Dense cost matrices and an O(n³) Kuhn–Munkres solver.
//!
//! The solver works on rectangular matrices by assigning every row of the
//! smaller side. Callers that need "unmatched" as an option either gate
//! entries ([`solve_gated`]) or give the forbidden entries the same cost as
//! leaving the pair unmatched ([`min_cost_assignment`] plus a filter).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Row-major dense matrix of non-negative association costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> CostMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_f64_rows(rows: &[&[f64]]) -> Result<Self> {
        let converted: Vec<Vec<T>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| T::lit(v)).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.cols + col] = value;
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> Option<(T, T)> {
        let mut it = self.data.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Sum of the entries selected by `pairs`.
    pub fn total(&self, pairs: &[(usize, usize)]) -> T {
        pairs.iter().map(|&(i, j)| self.get(i, j)).sum()
    }
}

/// Assigns every row of the smaller side to a distinct column (or vice
/// versa) minimising the total cost. Pairs are returned sorted by row.
pub fn min_cost_assignment<T: Real>(cost: &CostMatrix<T>) -> Vec<(usize, usize)> {
    if cost.rows == 0 || cost.cols == 0 {
        return Vec::new();
    }
    if cost.rows > cost.cols {
        let mut pairs: Vec<(usize, usize)> = hungarian(&cost.transpose())
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        return pairs;
    }
    hungarian(cost)
}

/// Shortest-augmenting-path Hungarian method for `rows <= cols`.
fn hungarian<T: Real>(cost: &CostMatrix<T>) -> Vec<(usize, usize)> {
    let n = cost.rows;
    let m = cost.cols;
    debug_assert!(n <= m);
    let inf = T::infinity();
    // 1-based potentials; column 0 is the virtual source.
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for row in 1..=n {
        owner[0] = row;
        let mut j0 = 0usize;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] = u[owner[j]] + delta;
                    v[j] = v[j] - delta;
                } else {
                    minv[j] = minv[j] - delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut pairs: Vec<(usize, usize)> = (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Optimal matching restricted to pairs accepted by `allowed`.
///
/// Among all matchings built from allowed pairs, returns one with the most
/// pairs and, among those, the smallest total cost.
pub fn solve_gated<T: Real>(
    cost: &CostMatrix<T>,
    allowed: impl Fn(usize, usize) -> bool,
) -> Vec<(usize, usize)> {
    if cost.is_empty() {
        return Vec::new();
    }
    let max_allowed = cost
        .values()
        .iter()
        .enumerate()
        .filter(|(k, _)| allowed(k / cost.cols, k % cost.cols))
        .map(|(_, &v)| v)
        .fold(T::zero(), T::max);
    let n = cost.rows.min(cost.cols);
    // Any matching with one more allowed pair is strictly cheaper.
    let forbidden = (max_allowed + T::one()) * T::from_count(n + 1);
    let padded = CostMatrix::from_fn(cost.rows, cost.cols, |i, j| {
        if allowed(i, j) {
            cost.get(i, j)
        } else {
            forbidden
        }
    });
    min_cost_assignment(&padded)
        .into_iter()
        .filter(|&(i, j)| allowed(i, j))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(cost: &CostMatrix<f64>) -> f64 {
        fn rec(cost: &CostMatrix<f64>, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if row == cost.rows() {
                *best = best.min(acc);
                return;
            }
            for j in 0..cost.cols() {
                if !used[j] {
                    used[j] = true;
                    rec(cost, row + 1, used, acc + cost.get(row, j), best);
                    used[j] = false;
                }
            }
        }
        let c = if cost.rows() > cost.cols() {
            cost.transpose()
        } else {
            cost.clone()
        };
        let mut best = f64::INFINITY;
        rec(&c, 0, &mut vec![false; c.cols()], 0.0, &mut best);
        best
    }

    #[test]
    fn square_example() {
        let c = CostMatrix::<f64>::from_f64_rows(&[
            &[4.0, 1.0, 3.0],
            &[2.0, 0.0, 5.0],
            &[3.0, 2.0, 2.0],
        ])
        .unwrap();
        let pairs = min_cost_assignment(&c);
        assert_eq!(pairs, vec![(0, 1), (1, 0), (2, 2)]);
        assert_eq!(c.total(&pairs), 5.0);
    }

    #[test]
    fn rectangular_both_orientations() {
        let wide = CostMatrix::<f64>::from_f64_rows(&[&[9.0, 1.0, 8.0], &[1.0, 9.0, 9.0]]).unwrap();
        assert_eq!(min_cost_assignment(&wide), vec![(0, 1), (1, 0)]);
        let tall = wide.transpose();
        assert_eq!(min_cost_assignment(&tall), vec![(0, 1), (1, 0)]);
        assert_eq!(brute_force(&tall), 2.0);
    }

    #[test]
    fn empty_shapes() {
        assert!(min_cost_assignment(&CostMatrix::<f64>::zeros(2, 0)).is_empty());
        assert!(min_cost_assignment(&CostMatrix::<f64>::zeros(0, 3)).is_empty());
    }

    #[test]
    fn gating_prefers_cardinality() {
        let c = CostMatrix::<f64>::from_f64_rows(&[&[0.1, 0.2], &[0.3, 0.9]]).unwrap();
        let pairs = solve_gated(&c, |_, _| true);
        assert_eq!(pairs, vec![(0, 1), (1, 0)]);
        let gated = solve_gated(&c, |i, j| c.get(i, j) <= 0.5);
        assert_eq!(gated, vec![(0, 1), (1, 0)]);
        let gated = solve_gated(&c, |i, j| c.get(i, j) <= 0.15);
        assert_eq!(gated, vec![(0, 0)]);
    }

    #[test]
    fn works_in_f32() {
        let c = CostMatrix::<f32>::from_f64_rows(&[&[1.0, 2.0], &[2.0, 1.0]]).unwrap();
        assert_eq!(min_cost_assignment(&c), vec![(0, 0), (1, 1)]);
    }
}
