use rayon::prelude::*;

/// Per-path sequences stored path-major: row `i` holds path `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    n_paths: usize,
    len: usize,
    data: Vec<f64>,
}

impl PathEnsemble {
    pub fn zeros(n_paths: usize, len: usize) -> Self {
        PathEnsemble {
            n_paths,
            len,
            data: vec![0.0; n_paths * len],
        }
    }

    pub fn from_rows(n_paths: usize, len: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n_paths * len, "row data has wrong length");
        PathEnsemble { n_paths, len, data }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    /// Length of each row.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.n_paths == 0 || self.len == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.len..(i + 1) * self.len]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.len + j]
    }

    /// Column `j` across all paths.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.data[i * self.len + j]).collect()
    }

    pub fn column_into(&self, j: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.data[i * self.len + j];
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Per-time sequences stored time-major: column `k` holds all paths at node `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeEnsemble {
    n_paths: usize,
    nodes: usize,
    data: Vec<f64>,
}

impl TimeEnsemble {
    pub fn zeros(n_paths: usize, nodes: usize) -> Self {
        TimeEnsemble {
            n_paths,
            nodes,
            data: vec![0.0; n_paths * nodes],
        }
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.data[k * self.n_paths..(k + 1) * self.n_paths]
    }

    pub fn column_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.n_paths..(k + 1) * self.n_paths]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[k * self.n_paths + i]
    }

    pub fn path(&self, i: usize) -> Vec<f64> {
        (0..self.nodes).map(|k| self.get(i, k)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Transposes path-major rows into columns.
    pub fn from_paths(paths: &PathEnsemble) -> Self {
        let n = paths.n_paths();
        let mut out = TimeEnsemble::zeros(n, paths.len());
        if n > 0 {
            out.data
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(k, col)| paths.column_into(k, col));
        }
        out
    }
}
