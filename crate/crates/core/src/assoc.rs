//! Minimum-cost linear assignment and IoU-gated detection association.

use crate::error::AssignError;
use crate::geometry::{iou, BoundingBox};

/// Default IoU gate below which a matched pair is split.
pub const DEFAULT_IOU_MIN: f64 = 0.3;

/// Relative tolerance used when comparing assignment totals for ties.
const TIE_EPS: f64 = 1e-9;

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, AssignError> {
        if data.len() != rows * cols {
            return Err(AssignError::Ragged);
        }
        if let Some(i) = data.iter().position(|c| !c.is_finite()) {
            return Err(AssignError::InvalidMatrix {
                row: i / cols.max(1),
                col: i % cols.max(1),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, AssignError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(AssignError::Ragged);
        }
        Self::new(rows.len(), n_cols, rows.concat())
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, AssignError> {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Sum of the costs of `pairs`.
    pub fn total(&self, pairs: &[(usize, usize)]) -> f64 {
        pairs.iter().map(|&(r, c)| self.get(r, c)).sum()
    }
}

/// Minimum total cost assignment of `min(rows, cols)` pairs, sorted by row.
///
/// Among optimal assignments the lexicographically smallest `(row, col)`
/// sequence is returned.
pub fn hungarian(cost: &CostMatrix) -> Vec<(usize, usize)> {
    if cost.rows == 0 || cost.cols == 0 {
        return Vec::new();
    }
    let all_rows: Vec<usize> = (0..cost.rows).collect();
    let all_cols: Vec<usize> = (0..cost.cols).collect();
    let (best, mut current) = solve_subset(cost, &all_rows, &all_cols);
    let tol = TIE_EPS * best.abs().max(1.0);
    let target = cost.rows.min(cost.cols);

    // Lexicographic refinement: walk rows in order and give each the
    // smallest column (or, when rows outnumber columns, "unassigned" as the
    // last resort) that still admits an optimal completion.
    let mut fixed: Vec<(usize, usize)> = Vec::with_capacity(target);
    let mut fixed_cost = 0.0;
    let mut used_cols = vec![false; cost.cols];
    for row in 0..cost.rows {
        if fixed.len() == target {
            break;
        }
        let current_col = current.iter().find(|p| p.0 == row).map(|p| p.1);
        let later_rows: Vec<usize> = (row + 1..cost.rows).collect();
        let upper = current_col.unwrap_or(cost.cols);
        let mut chosen = current_col;
        for col in (0..upper).filter(|&c| !used_cols[c]) {
            let still_needed = target - fixed.len() - 1;
            let free_cols: Vec<usize> = (0..cost.cols)
                .filter(|&c| c != col && !used_cols[c])
                .collect();
            if later_rows.len().min(free_cols.len()) < still_needed {
                continue;
            }
            let (rest, rest_pairs) = solve_subset(cost, &later_rows, &free_cols);
            if fixed_cost + cost.get(row, col) + rest <= best + tol {
                chosen = Some(col);
                current = fixed
                    .iter()
                    .copied()
                    .chain(std::iter::once((row, col)))
                    .chain(rest_pairs)
                    .collect();
                break;
            }
        }
        if let Some(col) = chosen {
            fixed.push((row, col));
            fixed_cost += cost.get(row, col);
            used_cols[col] = true;
        }
    }
    fixed
}

/// Optimal assignment restricted to the given rows and columns, returning the
/// total and pairs in original indices.
fn solve_subset(cost: &CostMatrix, rows: &[usize], cols: &[usize]) -> (f64, Vec<(usize, usize)>) {
    if rows.is_empty() || cols.is_empty() {
        return (0.0, Vec::new());
    }
    let pairs = if rows.len() <= cols.len() {
        shortest_augmenting_path(rows.len(), cols.len(), |i, j| cost.get(rows[i], cols[j]))
            .into_iter()
            .map(|(i, j)| (rows[i], cols[j]))
            .collect::<Vec<_>>()
    } else {
        shortest_augmenting_path(cols.len(), rows.len(), |i, j| cost.get(rows[j], cols[i]))
            .into_iter()
            .map(|(i, j)| (rows[j], cols[i]))
            .collect::<Vec<_>>()
    };
    let mut pairs = pairs;
    pairs.sort_unstable();
    (cost.total(&pairs), pairs)
}

/// Kuhn-Munkres with potentials for an `n × m` matrix, `n ≤ m`. Every row is
/// assigned. Returns `(row, col)` pairs.
fn shortest_augmenting_path(
    n: usize,
    m: usize,
    cost: impl Fn(usize, usize) -> f64,
) -> Vec<(usize, usize)> {
    debug_assert!(n <= m);
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut owner = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
    (1..=m)
        .filter(|&j| owner[j] != 0)
        .map(|j| (owner[j] - 1, j - 1))
        .collect()
}

/// Outcome of matching predicted boxes (tracks) to detections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssignmentResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_tracks: Vec<usize>,
    pub unmatched_detections: Vec<usize>,
}

/// Match predictions to detections on `1 - IoU` cost, splitting any pair whose
/// IoU is below `iou_min`.
pub fn associate(
    predicted: &[BoundingBox],
    detected: &[BoundingBox],
    iou_min: f64,
) -> AssignmentResult {
    let ious: Vec<Vec<f64>> = predicted
        .iter()
        .map(|p| detected.iter().map(|d| iou(p, d)).collect())
        .collect();
    let cost = CostMatrix::from_fn(predicted.len(), detected.len(), |i, j| 1.0 - ious[i][j])
        .expect("iou is always finite");
    let mut track_used = vec![false; predicted.len()];
    let mut det_used = vec![false; detected.len()];
    let mut matches = Vec::new();
    for (t, d) in hungarian(&cost) {
        if ious[t][d] >= iou_min && ious[t][d] > 0.0 {
            track_used[t] = true;
            det_used[d] = true;
            matches.push((t, d));
        }
    }
    AssignmentResult {
        matches,
        unmatched_tracks: (0..predicted.len()).filter(|&i| !track_used[i]).collect(),
        unmatched_detections: (0..detected.len()).filter(|&j| !det_used[j]).collect(),
    }
}
