//! Maximum-weight bipartite assignment between textual and visual sub-events.
//!
//! The core is the shortest-augmenting-path form of the Hungarian method with
//! row/column potentials, run on negated scores. Among equally good
//! assignments the lexicographically smallest pair list wins, which is found by
//! fixing pairs in order and re-solving the remainder.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AssignmentError {
    #[error("score matrix must have at least one row and one column")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    Ragged { row: usize, len: usize, expected: usize },
    #[error("entry ({row}, {col}) is not finite")]
    NonFiniteEntry { row: usize, col: usize },
}

/// A dense `rows x cols` matrix of finite pairwise scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, AssignmentError> {
        let expected = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || expected == 0 {
            return Err(AssignmentError::Empty);
        }
        let mut data = Vec::with_capacity(rows.len() * expected);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != expected {
                return Err(AssignmentError::Ragged {
                    row: r,
                    len: row.len(),
                    expected,
                });
            }
            for (c, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(AssignmentError::NonFiniteEntry { row: r, col: c });
                }
                data.push(v);
            }
        }
        Ok(Self {
            rows: rows.len(),
            cols: expected,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// `(row, col)` pairs sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

/// Solve the rectangular maximum-weight assignment, matching `min(rows, cols)` pairs.
///
/// Runs `O(k * rows * cols)` restricted Hungarian solves for the tie-break,
/// where `k = min(rows, cols)`; intended for the small matrices that arise
/// from sub-event matching.
pub fn solve_max_assignment(m: &ScoreMatrix) -> Assignment {
    let all_rows: Vec<usize> = (0..m.rows).collect();
    let all_cols: Vec<usize> = (0..m.cols).collect();
    let best = solve_restricted(m, &all_rows, &all_cols);
    let optimum = pair_sum(m, &best);
    let k = m.rows.min(m.cols);
    let tol = 1e-10 * (1.0 + m.max_abs()) * k as f64;

    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(k);
    let mut fixed_value = 0.0;
    let mut col_used = vec![false; m.cols];
    let mut next_row = 0;
    while fixed.len() < k {
        let need = k - fixed.len() - 1;
        let mut chosen = None;
        'search: for r in next_row..m.rows {
            let rest_rows: Vec<usize> = (r + 1..m.rows).collect();
            for c in 0..m.cols {
                if col_used[c] {
                    continue;
                }
                let rest_cols: Vec<usize> = (0..m.cols).filter(|&j| j != c && !col_used[j]).collect();
                if rest_rows.len().min(rest_cols.len()) != need {
                    continue;
                }
                let rest_value = if need == 0 {
                    0.0
                } else {
                    pair_sum(m, &solve_restricted(m, &rest_rows, &rest_cols))
                };
                if fixed_value + m.get(r, c) + rest_value >= optimum - tol {
                    chosen = Some((r, c));
                    break 'search;
                }
            }
        }
        let Some((r, c)) = chosen else {
            // Unreachable for finite inputs: the optimal solution itself is a candidate path.
            return finish(m, best);
        };
        fixed.push((r, c));
        fixed_value += m.get(r, c);
        col_used[c] = true;
        next_row = r + 1;
    }
    finish(m, fixed)
}

fn finish(m: &ScoreMatrix, mut pairs: Vec<(usize, usize)>) -> Assignment {
    pairs.sort_unstable();
    let total = pair_sum(m, &pairs);
    Assignment { pairs, total }
}

/// Sum in row order, so equal pair sets always produce bit-identical totals.
fn pair_sum(m: &ScoreMatrix, pairs: &[(usize, usize)]) -> f64 {
    let mut sorted = pairs.to_vec();
    sorted.sort_unstable();
    sorted.iter().map(|&(r, c)| m.get(r, c)).sum()
}

/// Maximum-weight matching of the submatrix on `rows x cols`, in original indices.
fn solve_restricted(m: &ScoreMatrix, rows: &[usize], cols: &[usize]) -> Vec<(usize, usize)> {
    if rows.is_empty() || cols.is_empty() {
        return Vec::new();
    }
    let transpose = rows.len() > cols.len();
    let (left, right) = if transpose { (cols, rows) } else { (rows, cols) };
    let cost: Vec<Vec<f64>> = left
        .iter()
        .map(|&a| {
            right
                .iter()
                .map(|&b| {
                    let s = if transpose { m.get(b, a) } else { m.get(a, b) };
                    -s
                })
                .collect()
        })
        .collect();
    hungarian_min(&cost)
        .into_iter()
        .enumerate()
        .map(|(i, j)| {
            if transpose {
                (right[j], left[i])
            } else {
                (left[i], right[j])
            }
        })
        .collect()
}

/// Minimum-cost assignment for `n <= m`; returns the column of each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based with a virtual column 0, as in the classic potential formulation
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
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
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
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive search over all injections of the smaller side into the larger.
    /// Enumeration is lexicographic and only a strictly larger sum replaces the
    /// incumbent, so ties resolve to the lexicographically smallest pair list.
    pub(crate) fn brute_force(m: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
        let rows = m.len();
        let cols = m[0].len();
        let k = rows.min(cols);
        let mut best: Option<(Vec<(usize, usize)>, f64)> = None;
        let mut current = Vec::new();
        let mut used = vec![false; cols];
        fn rec(
            m: &[Vec<f64>],
            row: usize,
            k: usize,
            current: &mut Vec<(usize, usize)>,
            used: &mut Vec<bool>,
            best: &mut Option<(Vec<(usize, usize)>, f64)>,
        ) {
            if current.len() == k {
                let total: f64 = current.iter().map(|&(r, c)| m[r][c]).sum();
                if best.as_ref().is_none_or(|(_, b)| total > *b) {
                    *best = Some((current.clone(), total));
                }
                return;
            }
            if row == m.len() || m.len() - row < k - current.len() {
                return;
            }
            for c in 0..m[0].len() {
                if !used[c] {
                    used[c] = true;
                    current.push((row, c));
                    rec(m, row + 1, k, current, used, best);
                    current.pop();
                    used[c] = false;
                }
            }
            // leave this row unmatched
            rec(m, row + 1, k, current, used, best);
        }
        rec(m, 0, k, &mut current, &mut used, &mut best);
        best.unwrap()
    }

    fn solve(rows: Vec<Vec<f64>>) -> Assignment {
        solve_max_assignment(&ScoreMatrix::new(rows).unwrap())
    }

    #[test]
    fn examples() {
        let a = solve(vec![vec![0.7]]);
        assert_eq!((a.pairs, a.total), (vec![(0, 0)], 0.7));

        let a = solve(vec![vec![0.9, 0.1], vec![0.2, 0.8]]);
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert!((a.total - 1.7).abs() < 1e-12);

        let a = solve(vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
        assert_eq!((a.pairs, a.total), (vec![(0, 0), (1, 1)], 1.0));

        let a = solve(vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]);
        assert_eq!((a.pairs, a.total), (vec![(0, 2), (1, 0)], 2.0));
    }

    #[test]
    fn brute_force_agrees_on_examples() {
        assert_eq!(brute_force(&[vec![0.9, 0.1], vec![0.2, 0.8]]).0, vec![(0, 0), (1, 1)]);
        assert_eq!(
            brute_force(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]),
            (vec![(0, 2), (1, 0)], 2.0)
        );
    }

    #[test]
    fn tall_matrix_matches_columns() {
        let a = solve(vec![vec![0.1, 0.2], vec![0.9, 0.3], vec![0.4, 0.8]]);
        assert_eq!(a.pairs, vec![(1, 0), (2, 1)]);
        assert_eq!(a.pairs.len(), 2);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert_eq!(ScoreMatrix::new(vec![]), Err(AssignmentError::Empty));
        assert_eq!(ScoreMatrix::new(vec![vec![]]), Err(AssignmentError::Empty));
        assert_eq!(
            ScoreMatrix::new(vec![vec![1.0], vec![f64::NAN]]),
            Err(AssignmentError::NonFiniteEntry { row: 1, col: 0 })
        );
        assert!(matches!(
            ScoreMatrix::new(vec![vec![1.0, 2.0], vec![1.0]]),
            Err(AssignmentError::Ragged { .. })
        ));
    }

    fn random_matrix(rng: &mut ChaCha8Rng, max_dim: usize, grid: bool) -> Vec<Vec<f64>> {
        let rows = rng.random_range(1..=max_dim);
        let cols = rng.random_range(1..=max_dim);
        (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| {
                        if grid {
                            // coarse values make exact ties common
                            f64::from(rng.random_range(0..4u8)) * 0.25
                        } else {
                            rng.random_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..400 {
            let m = random_matrix(&mut rng, 6, case % 2 == 0);
            let (pairs, total) = brute_force(&m);
            let a = solve(m.clone());
            assert_eq!(a.total, total, "case {case}: {m:?}");
            assert_eq!(a.pairs, pairs, "case {case}: {m:?}");
        }
    }

    #[test]
    fn constant_shift_moves_total_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let m = random_matrix(&mut rng, 6, false);
            let c = rng.random_range(-2.0..2.0);
            let shifted: Vec<Vec<f64>> = m.iter().map(|r| r.iter().map(|v| v + c).collect()).collect();
            let a = solve(m.clone());
            let b = solve(shifted);
            let k = m.len().min(m[0].len()) as f64;
            assert_eq!(a.pairs, b.pairs);
            assert!((b.total - a.total - c * k).abs() < 1e-9);
        }
    }

    #[test]
    fn row_permutation_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let m = random_matrix(&mut rng, 6, false);
            let mut perm: Vec<usize> = (0..m.len()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            // row i of the permuted matrix is row perm[i] of the original
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&p| m[p].clone()).collect();
            let a = solve(m.clone());
            let b = solve(permuted);
            let mut mapped: Vec<(usize, usize)> = b.pairs.iter().map(|&(r, c)| (perm[r], c)).collect();
            mapped.sort_unstable();
            assert_eq!(mapped, a.pairs);
            assert!((a.total - b.total).abs() < 1e-12);
        }
    }
}
