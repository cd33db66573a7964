use super::Matrix;

/// Row-compressed sparse matrix used for neighbourhood aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    cols: usize,
}

impl SparseRows {
    pub fn new(rows: Vec<Vec<(usize, f64)>>, cols: usize) -> Self {
        debug_assert!(rows.iter().flatten().all(|&(c, _)| c < cols));
        Self { rows, cols }
    }

    /// Mean over each node's neighbours in the undirected view of `pairs`;
    /// a node with no neighbours aggregates itself.
    pub fn mean_neighbors(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in pairs {
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        let rows = adj
            .into_iter()
            .enumerate()
            .map(|(i, mut nb)| {
                nb.sort_unstable();
                nb.dedup();
                if nb.is_empty() {
                    vec![(i, 1.0)]
                } else {
                    let w = 1.0 / nb.len() as f64;
                    nb.into_iter().map(|j| (j, w)).collect()
                }
            })
            .collect();
        Self { rows, cols: n }
    }

    /// `D̃^{-1/2}(A+I)D̃^{-1/2}` for the undirected view of `pairs`.
    pub fn gcn_normalized(n: usize, pairs: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in pairs {
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for (i, nb) in adj.iter_mut().enumerate() {
            nb.push(i);
            nb.sort_unstable();
            nb.dedup();
        }
        let deg: Vec<f64> = adj.iter().map(|nb| nb.len() as f64).collect();
        let rows = adj
            .iter()
            .enumerate()
            .map(|(i, nb)| nb.iter().map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt())).collect())
            .collect();
        Self { rows, cols: n }
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[(usize, f64)] {
        &self.rows[r]
    }

    /// `self · m`.
    pub fn apply(&self, m: &Matrix) -> Matrix {
        assert_eq!(self.cols, m.rows());
        let mut out = Matrix::zeros(self.rows.len(), m.cols());
        for (r, entries) in self.rows.iter().enumerate() {
            let o = out.row_mut(r);
            for &(c, w) in entries {
                for (a, &b) in o.iter_mut().zip(m.row(c)) {
                    *a += w * b;
                }
            }
        }
        out
    }

    /// `selfᵀ · g`.
    pub fn apply_transpose(&self, g: &Matrix) -> Matrix {
        assert_eq!(self.rows.len(), g.rows());
        let mut out = Matrix::zeros(self.cols, g.cols());
        for (r, entries) in self.rows.iter().enumerate() {
            for &(c, w) in entries {
                let src = g.row(r);
                for (a, &b) in out.row_mut(c).iter_mut().zip(src) {
                    *a += w * b;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transpose_matches_dense() {
        let s = SparseRows::gcn_normalized(3, &[(0, 1), (1, 2)]);
        let mut dense = Matrix::zeros(3, 3);
        for r in 0..3 {
            for &(c, w) in s.row(r) {
                dense.set(r, c, w);
            }
        }
        let g = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.0]]);
        assert_eq!(s.apply_transpose(&g), dense.transpose().matmul(&g).unwrap());
        assert_eq!(s.apply(&g), dense.matmul(&g).unwrap());
    }

    #[test]
    fn isolated_nodes_aggregate_themselves() {
        let s = SparseRows::mean_neighbors(3, &[(0, 1)]);
        assert_eq!(s.row(2), &[(2, 1.0)]);
        assert_eq!(s.row(0), &[(1, 1.0)]);
    }
}
