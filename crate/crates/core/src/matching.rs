//! Exact matching primitives.
//!
//! [`min_cost_assignment`] is the O(n²m) shortest-augmenting-path form of the
//! Hungarian method with row/column potentials. Rows and columns are always
//! scanned in ascending order with strict comparisons, so a given matrix
//! always yields the same assignment.

use crate::error::{Error, Result};

/// Cost of a dummy row/column entry after padding.
pub const DUMMY_COST: f64 = 0.0;

/// Dense row-major cost matrix. After [`pad_square`] the trailing rows or
/// columns beyond `real_rows`/`real_cols` are dummies.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    real_rows: usize,
    real_cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::EmptyMatrix);
        }
        assert_eq!(data.len(), rows * cols, "cost matrix data has wrong length");
        if let Some(k) = data.iter().position(|c| c.is_nan()) {
            return Err(Error::NanCost {
                row: k / cols,
                col: k % cols,
            });
        }
        Ok(Self {
            rows,
            cols,
            real_rows: rows,
            real_cols: cols,
            data,
        })
    }

    /// # Panics
    /// If the rows are ragged.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
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

    pub fn real_rows(&self) -> usize {
        self.real_rows
    }

    pub fn real_cols(&self) -> usize {
        self.real_cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn is_dummy_row(&self, i: usize) -> bool {
        i >= self.real_rows
    }

    pub fn is_dummy_col(&self, j: usize) -> bool {
        j >= self.real_cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Pads an r×n matrix to m×m, m = max(r, n), with [`DUMMY_COST`] entries.
/// Real indices are unchanged.
pub fn pad_square(matrix: CostMatrix) -> CostMatrix {
    if matrix.is_square() {
        return matrix;
    }
    let m = matrix.rows.max(matrix.cols);
    let mut data = vec![DUMMY_COST; m * m];
    for i in 0..matrix.rows {
        data[i * m..i * m + matrix.cols].copy_from_slice(&matrix.data[i * matrix.cols..(i + 1) * matrix.cols]);
    }
    CostMatrix {
        rows: m,
        cols: m,
        real_rows: matrix.real_rows,
        real_cols: matrix.real_cols,
        data,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `(row, col)` for every row of the padded matrix, ascending by row.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Assignment {
    /// Pairs with neither side a dummy.
    pub fn real_pairs<'a>(&'a self, matrix: &'a CostMatrix) -> impl Iterator<Item = (usize, usize)> + 'a {
        self.pairs
            .iter()
            .copied()
            .filter(|&(i, j)| !matrix.is_dummy_row(i) && !matrix.is_dummy_col(j))
    }
}

/// Minimum-cost perfect matching on the (padded) square matrix, by the
/// O(m³) Hungarian method. A rectangular matrix is padded first.
pub fn min_cost_assignment(matrix: &CostMatrix) -> Result<Assignment> {
    let padded;
    let matrix = if matrix.is_square() {
        matrix
    } else {
        padded = pad_square(matrix.clone());
        &padded
    };
    let m = matrix.rows;
    let cols = hungarian(m, m, |i, j| matrix.get(i, j));
    let pairs: Vec<(usize, usize)> = cols.into_iter().enumerate().collect();
    let total_cost = pairs.iter().map(|&(i, j)| matrix.get(i, j)).sum();
    Ok(Assignment { pairs, total_cost })
}

/// Hungarian method for `rows <= cols`; returns the column of every row.
fn hungarian(rows: usize, cols: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<usize> {
    debug_assert!(rows <= cols);
    // 1-based with a virtual column 0
    let mut u = vec![0.0f64; rows + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    let mut minv = vec![0.0f64; cols + 1];
    let mut used = vec![false; cols + 1];

    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if reduced < minv[j] {
                    minv[j] = reduced;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
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

    let mut row_col = vec![0; rows];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_col[owner[j] - 1] = j - 1;
        }
    }
    row_col
}

/// Maximum-cardinality bipartite matching (Kuhn's augmenting paths).
///
/// `adjacency[i][j]` is an edge from left vertex `i` to right vertex `j`.
/// Returns `(left, right)` pairs ascending by left vertex.
pub fn max_bipartite_matching(adjacency: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n_left = adjacency.len();
    let n_right = adjacency.iter().map(Vec::len).max().unwrap_or(0);
    let neighbours: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, &e)| e).map(|(j, _)| j).collect())
        .collect();
    let mut match_right: Vec<Option<usize>> = vec![None; n_right];
    let mut visited = vec![false; n_right];

    fn augment(u: usize, neighbours: &[Vec<usize>], match_right: &mut [Option<usize>], visited: &mut [bool]) -> bool {
        for &v in &neighbours[u] {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            if match_right[v].is_none_or(|w| augment(w, neighbours, match_right, visited)) {
                match_right[v] = Some(u);
                return true;
            }
        }
        false
    }

    for u in 0..n_left {
        visited.fill(false);
        augment(u, &neighbours, &mut match_right, &mut visited);
    }
    let mut pairs: Vec<_> = match_right
        .iter()
        .enumerate()
        .filter_map(|(v, m)| m.map(|u| (u, v)))
        .collect();
    pairs.sort_unstable();
    pairs
}

/// Among all maximum-cardinality matchings of a square bipartite graph,
/// one of minimum total edge cost. `cost[i][j]` is only read where
/// `adjacency[i][j]` holds and must be finite and non-negative.
pub fn min_cost_max_matching(adjacency: &[Vec<bool>], cost: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let n = adjacency.len();
    if n == 0 {
        return Vec::new();
    }
    let mut max_edge: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if adjacency[i][j] {
                debug_assert!(cost[i][j].is_finite() && cost[i][j] >= 0.0);
                max_edge = max_edge.max(cost[i][j]);
            }
        }
    }
    // Leaving one more pair on a non-edge must cost more than any edge set.
    let non_edge = (max_edge + 1.0) * (n as f64 + 1.0);
    let data = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| if adjacency[i][j] { cost[i][j] } else { non_edge })
        .collect();
    let matrix = CostMatrix::new(n, n, data).expect("non-empty finite matrix");
    let assignment = min_cost_assignment(&matrix).expect("valid matrix");
    assignment.pairs.into_iter().filter(|&(i, j)| adjacency[i][j]).collect()
}
