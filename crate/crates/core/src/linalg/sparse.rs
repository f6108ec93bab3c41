use super::{CMat, C64};

/// Complex compressed-sparse-row matrix. Explicitly stored zeros are kept;
/// they are part of the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<C64>,
}

impl SparseMatrix {
    /// Builds from coordinate triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, C64)]) -> Self {
        let mut sorted: Vec<(usize, usize, C64)> = triplets.to_vec();
        sorted.sort_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<C64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(i < nrows && j < ncols, "triplet ({i},{j}) outside {nrows}x{ncols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            col_idx.push(j);
            values.push(v);
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn from_real_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let t: Vec<_> = triplets.iter().map(|&(i, j, v)| (i, j, C64::new(v, 0.0))).collect();
        Self::from_triplets(nrows, ncols, &t)
    }

    /// Pattern with unit values.
    pub fn from_pattern(nrows: usize, ncols: usize, pattern: &[(usize, usize)]) -> Self {
        let t: Vec<_> = pattern.iter().map(|&(i, j)| (i, j, C64::new(1.0, 0.0))).collect();
        Self::from_triplets(nrows, ncols, &t)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            nrows: n,
            ncols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![C64::new(1.0, 0.0); n],
        }
    }

    /// Keeps every entry of `a` whose modulus exceeds `drop_tol`.
    pub fn from_dense(a: &CMat, drop_tol: f64) -> Self {
        let mut t = Vec::new();
        for i in 0..a.nrows() {
            for j in 0..a.ncols() {
                if a[(i, j)].norm() > drop_tol {
                    t.push((i, j, a[(i, j)]));
                }
            }
        }
        Self::from_triplets(a.nrows(), a.ncols(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, C64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.col_idx[k], self.values[k]))
    }

    pub fn pattern(&self) -> Vec<(usize, usize)> {
        self.iter().map(|(i, j, _)| (i, j)).collect()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        let cols = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match cols.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn scaled(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c · other` on the union of both patterns.
    pub fn add_scaled(&self, other: &SparseMatrix, c: C64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let t: Vec<_> = self
            .iter()
            .chain(other.iter().map(|(i, j, v)| (i, j, c * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn transpose(&self) -> Self {
        let t: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &t)
    }

    pub fn mul_mat(&self, b: &CMat) -> CMat {
        assert_eq!(self.ncols, b.nrows(), "sparse * dense dimension mismatch");
        let mut out = CMat::zeros(self.nrows, b.ncols());
        for c in 0..b.ncols() {
            let bc = b.column(c);
            for i in 0..self.nrows {
                let mut acc = C64::new(0.0, 0.0);
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[k] * bc[self.col_idx[k]];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    pub fn to_dense(&self) -> CMat {
        let mut out = CMat::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            out[(i, j)] += v;
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Lower and upper bandwidth of the stored pattern.
    pub fn bandwidth(&self) -> (usize, usize) {
        self.iter().fold((0, 0), |(lo, hi), (i, j, _)| {
            if i > j {
                (lo.max(i - j), hi)
            } else {
                (lo, hi.max(j - i))
            }
        })
    }

    pub fn is_real(&self, tol: f64) -> bool {
        let scale = self.frobenius_norm();
        self.values.iter().all(|v| v.im.abs() <= tol * scale)
    }
}
