//! Sparse matrices and LU factorization for the Newton and KKT systems.
//!
//! Left-looking (Gilbert-Peierls) sparse LU with partial pivoting, plus
//! a dense path used below a size threshold where the sparse machinery
//! is not worth its bookkeeping.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is singular at column {0}")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Triplet accumulator for building sparse matrices. Duplicate entries
/// are summed.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub rows: usize,
    pub cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(rows: usize, cols: usize) -> Self {
        Triplets { rows, cols, entries: Vec::new() }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.rows && col < self.cols);
        self.entries.push((row, col, value));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(usize, usize, f64)> {
        self.entries.iter()
    }

    pub fn to_csc(&self) -> CscMatrix {
        CscMatrix::from_triplets(self)
    }
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub rows: usize,
    pub cols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn from_triplets(t: &Triplets) -> Self {
        let mut count = vec![0usize; t.cols];
        for &(_, c, _) in &t.entries {
            count[c] += 1;
        }
        let mut col_ptr = vec![0usize; t.cols + 1];
        for c in 0..t.cols {
            col_ptr[c + 1] = col_ptr[c] + count[c];
        }
        let mut row_idx = vec![0usize; t.entries.len()];
        let mut values = vec![0.0f64; t.entries.len()];
        let mut next = col_ptr.clone();
        for &(r, c, v) in &t.entries {
            let k = next[c];
            row_idx[k] = r;
            values[k] = v;
            next[c] += 1;
        }
        // sort rows within each column and merge duplicates
        let mut out = CscMatrix { rows: t.rows, cols: t.cols, col_ptr, row_idx, values };
        out.sort_and_dedup();
        out
    }

    fn sort_and_dedup(&mut self) {
        let mut new_ptr = vec![0usize; self.cols + 1];
        let mut new_rows = Vec::with_capacity(self.row_idx.len());
        let mut new_vals = Vec::with_capacity(self.values.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for c in 0..self.cols {
            scratch.clear();
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                scratch.push((self.row_idx[k], self.values[k]));
            }
            scratch.sort_unstable_by_key(|e| e.0);
            let mut i = 0;
            while i < scratch.len() {
                let row = scratch[i].0;
                let mut v = scratch[i].1;
                let mut j = i + 1;
                while j < scratch.len() && scratch[j].0 == row {
                    v += scratch[j].1;
                    j += 1;
                }
                new_rows.push(row);
                new_vals.push(v);
                i = j;
            }
            new_ptr[c + 1] = new_rows.len();
        }
        self.col_ptr = new_ptr;
        self.row_idx = new_rows;
        self.values = new_vals;
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        for c in 0..self.cols {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                y[self.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// y = A^T x
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.cols];
        for c in 0..self.cols {
            let mut acc = 0.0;
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                acc += self.values[k] * x[self.row_idx[k]];
            }
            y[c] = acc;
        }
        y
    }
}

/// Sparse LU factors P A = L U with partial pivoting.
pub struct LuFactors {
    n: usize,
    // L is unit lower triangular; diagonal implicit.
    l_col_ptr: Vec<usize>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    u_col_ptr: Vec<usize>,
    u_row_idx: Vec<usize>,
    u_values: Vec<f64>,
    u_diag: Vec<f64>,
    /// perm[new_row] = original_row
    perm: Vec<usize>,
}

/// Factor a square CSC matrix with the left-looking algorithm.
pub fn lu_factor(a: &CscMatrix) -> Result<LuFactors, LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::Dimension(format!("{}x{} is not square", a.rows, a.cols)));
    }
    let n = a.rows;
    let mut f = LuFactors {
        n,
        l_col_ptr: vec![0; n + 1],
        l_row_idx: Vec::new(),
        l_values: Vec::new(),
        u_col_ptr: vec![0; n + 1],
        u_row_idx: Vec::new(),
        u_values: Vec::new(),
        u_diag: vec![0.0; n],
        perm: (0..n).collect(),
    };
    // pinv[original_row] = pivot position, or usize::MAX if unassigned
    let mut pinv = vec![usize::MAX; n];
    let mut work = vec![0.0f64; n]; // dense accumulator for one column
    let mut pattern: Vec<usize> = Vec::with_capacity(n); // nonzero rows (original indices)
    let mut visited = vec![false; n];
    let mut stack: Vec<(usize, usize)> = Vec::new();

    for col in 0..n {
        // symbolic: rows reachable from A(:, col) through finished L columns
        pattern.clear();
        for k in a.col_ptr[col]..a.col_ptr[col + 1] {
            let r = a.row_idx[k];
            if !visited[r] {
                // DFS over the L graph: edge (pivot row p) -> rows of L(:, pinv[p])
                stack.push((r, 0));
                visited[r] = true;
                loop {
                    let Some(&(node, next)) = stack.last() else { break };
                    let pcol = pinv[node];
                    let mut child_to_push = None;
                    if pcol != usize::MAX {
                        let lo = f.l_col_ptr[pcol];
                        let hi = f.l_col_ptr[pcol + 1];
                        let mut step = next;
                        while lo + step < hi {
                            let cand = f.l_row_idx[lo + step];
                            step += 1;
                            if !visited[cand] {
                                child_to_push = Some(cand);
                                break;
                            }
                        }
                        stack.last_mut().unwrap().1 = step;
                    }
                    match child_to_push {
                        Some(c) => {
                            visited[c] = true;
                            stack.push((c, 0));
                        }
                        None => {
                            // postorder; reversed below for topological order
                            pattern.push(node);
                            stack.pop();
                        }
                    }
                }
            }
        }
        // numeric: sparse triangular solve in topological order
        for k in a.col_ptr[col]..a.col_ptr[col + 1] {
            work[a.row_idx[k]] = a.values[k];
        }
        for &node in pattern.iter().rev() {
            let pcol = pinv[node];
            if pcol == usize::MAX {
                continue;
            }
            let xj = work[node];
            if xj != 0.0 {
                for k in f.l_col_ptr[pcol]..f.l_col_ptr[pcol + 1] {
                    work[f.l_row_idx[k]] -= f.l_values[k] * xj;
                }
            }
        }
        // partial pivot among unassigned rows
        let mut pivot_row = usize::MAX;
        let mut pivot_abs = 0.0f64;
        for &r in &pattern {
            if pinv[r] == usize::MAX && work[r].abs() > pivot_abs {
                pivot_abs = work[r].abs();
                pivot_row = r;
            }
        }
        if pivot_row == usize::MAX || pivot_abs == 0.0 || !pivot_abs.is_finite() {
            return Err(LinalgError::Singular(col));
        }
        let pivot = work[pivot_row];
        pinv[pivot_row] = col;
        f.perm[col] = pivot_row;
        f.u_diag[col] = pivot;
        // split pattern into U (assigned rows) and L (unassigned)
        for &r in &pattern {
            let v = work[r];
            visited[r] = false;
            work[r] = 0.0;
            if r == pivot_row {
                continue;
            }
            let p = pinv[r];
            if p != usize::MAX && p < col {
                if v != 0.0 {
                    f.u_row_idx.push(p);
                    f.u_values.push(v);
                }
            } else if r != pivot_row && pinv[r] == usize::MAX {
                if v != 0.0 {
                    f.l_row_idx.push(r);
                    f.l_values.push(v / pivot);
                }
            }
        }
        f.u_col_ptr[col + 1] = f.u_row_idx.len();
        f.l_col_ptr[col + 1] = f.l_row_idx.len();
    }
    Ok(f)
}

impl LuFactors {
    /// Solve A x = b in place.
    pub fn solve(&self, b: &mut [f64]) -> Result<(), LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::Dimension(format!(
                "rhs length {} for {}x{} system",
                b.len(),
                self.n,
                self.n
            )));
        }
        // forward: L y = P b. L's row indices are original row ids; each
        // becomes the pivot of a later column, so updates accumulate in b
        // and are read back through perm.
        let mut y = vec![0.0f64; self.n];
        for col in 0..self.n {
            let v = b[self.perm[col]];
            y[col] = v;
            if v != 0.0 {
                for k in self.l_col_ptr[col]..self.l_col_ptr[col + 1] {
                    b[self.l_row_idx[k]] -= self.l_values[k] * v;
                }
            }
        }
        // backward: U x = y
        let mut x = y;
        for col in (0..self.n).rev() {
            let v = x[col] / self.u_diag[col];
            x[col] = v;
            if v != 0.0 {
                for k in self.u_col_ptr[col]..self.u_col_ptr[col + 1] {
                    x[self.u_row_idx[k]] -= self.u_values[k] * v;
                }
            }
        }
        b.copy_from_slice(&x);
        Ok(())
    }
}

/// Solve a sparse square system, choosing dense LU below `dense_cutoff`
/// unknowns.
pub fn solve_sparse(a: &CscMatrix, b: &[f64], dense_cutoff: usize) -> Result<Vec<f64>, LinalgError> {
    if a.rows != a.cols || a.rows != b.len() {
        return Err(LinalgError::Dimension(format!(
            "A is {}x{}, b has {}",
            a.rows, a.cols,
            b.len()
        )));
    }
    if a.rows < dense_cutoff {
        return solve_dense(a, b);
    }
    let mut x = b.to_vec();
    lu_factor(a)?.solve(&mut x)?;
    Ok(x)
}

/// Dense LU with partial pivoting (nalgebra).
pub fn solve_dense(a: &CscMatrix, b: &[f64]) -> Result<Vec<f64>, LinalgError> {
    let n = a.rows;
    let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
    for c in 0..a.cols {
        for k in a.col_ptr[c]..a.col_ptr[c + 1] {
            dense[(a.row_idx[k], c)] = a.values[k];
        }
    }
    let rhs = nalgebra::DVector::from_column_slice(b);
    let lu = dense.lu();
    match lu.solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x.as_slice().to_vec()),
        _ => Err(LinalgError::Singular(0)),
    }
}
