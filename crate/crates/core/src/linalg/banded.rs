use super::{CMat, CVec, SparseMatrix, C64};
use crate::error::{Error, Result};

/// LU factorization with partial pivoting of a banded matrix, stored in the
/// usual band layout with room for the `lo` extra superdiagonals that row
/// interchanges create.
#[derive(Debug, Clone)]
pub struct BandLu {
    n: usize,
    lo: usize,
    hi: usize,
    ld: usize,
    ab: Vec<C64>,
    ipiv: Vec<usize>,
}

impl BandLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        // row offset kv + i - j with kv = lo + hi
        (self.lo + self.hi + i - j) + j * self.ld
    }

    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(Error::Dimension(format!("band LU of {}x{}", n, a.ncols())));
        }
        let (lo, hi) = a.bandwidth();
        let ld = 2 * lo + hi + 1;
        let mut lu = BandLu {
            n,
            lo,
            hi,
            ld,
            ab: vec![C64::new(0.0, 0.0); ld * n],
            ipiv: vec![0; n],
        };
        for (i, j, v) in a.iter() {
            let k = lu.idx(i, j);
            lu.ab[k] += v;
        }
        for k in 0..n {
            let km = lo.min(n - 1 - k);
            let mut piv = k;
            let mut best = lu.ab[lu.idx(k, k)].norm();
            for i in (k + 1)..=(k + km) {
                let v = lu.ab[lu.idx(i, k)].norm();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            lu.ipiv[k] = piv;
            if best == 0.0 {
                return Err(Error::Singular(format!("band LU pivot {k}")));
            }
            let jmax = (n - 1).min(k + hi + lo);
            if piv != k {
                for j in k..=jmax {
                    let (a1, a2) = (lu.idx(k, j), lu.idx(piv, j));
                    lu.ab.swap(a1, a2);
                }
            }
            let pivot = lu.ab[lu.idx(k, k)];
            for i in (k + 1)..=(k + km) {
                let li = lu.idx(i, k);
                let l = lu.ab[li] / pivot;
                lu.ab[li] = l;
                if l == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in (k + 1)..=jmax {
                    let (dst, src) = (lu.idx(i, j), lu.idx(k, j));
                    let u = lu.ab[src];
                    lu.ab[dst] -= l * u;
                }
            }
        }
        Ok(lu)
    }

    pub fn solve_vec(&self, b: &CVec) -> CVec {
        let n = self.n;
        let mut x = b.clone();
        for k in 0..n {
            let p = self.ipiv[k];
            if p != k {
                x.swap_rows(k, p);
            }
            let km = self.lo.min(n - 1 - k);
            let xk = x[k];
            for i in (k + 1)..=(k + km) {
                x[i] -= self.ab[self.idx(i, k)] * xk;
            }
        }
        for k in (0..n).rev() {
            let jmax = (n - 1).min(k + self.hi + self.lo);
            let mut acc = x[k];
            for j in (k + 1)..=jmax {
                acc -= self.ab[self.idx(k, j)] * x[j];
            }
            x[k] = acc / self.ab[self.idx(k, k)];
        }
        x
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let mut out = b.clone();
        for c in 0..b.ncols() {
            let col = self.solve_vec(&b.column(c).into_owned());
            out.set_column(c, &col);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn band_lu_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n: usize = 40;
        let mut t = Vec::new();
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 2).min(n) {
                // small diagonal forces pivoting
                let scale = if i == j { 1e-3 } else { 1.0 };
                t.push((i, j, C64::new(scale * rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &t);
        let lu = BandLu::factor(&a).unwrap();
        let b = CVec::from_fn(n, |i, _| C64::new(i as f64, 1.0));
        let x = lu.solve_vec(&b);
        assert!((a.to_dense() * &x - &b).norm() <= 1e-10 * b.norm());
    }
}
