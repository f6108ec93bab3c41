//! Ambient-space (`ℝⁿˣⁿ`) vectors kept in factored form.

use std::sync::Arc;

use crate::linalg::RMat;

/// Fixed set of positions `𝒥` of an `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    /// Positions `t` with `rows[t] == cols[t]`.
    diag: Vec<usize>,
}

impl Pattern {
    pub fn new(n: usize, entries: &[(usize, usize)]) -> Self {
        let rows: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let cols: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let diag = (0..entries.len()).filter(|&t| rows[t] == cols[t]).collect();
        Pattern { n, rows, cols, diag }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().copied().zip(self.cols.iter().copied())
    }

    pub fn diag(&self) -> &[usize] {
        &self.diag
    }

    /// `(A Bᵀ)[a, b]` for every `(a, b) ∈ 𝒥`, in `O(q |𝒥|)`.
    pub fn sample_lowrank(&self, a: &RMat, b: &RMat, out: &mut [f64], scale: f64) {
        let q = a.ncols();
        for (t, o) in out.iter_mut().enumerate() {
            let (i, j) = (self.rows[t], self.cols[t]);
            let mut s = 0.0;
            for c in 0..q {
                s += a[(i, c)] * b[(j, c)];
            }
            *o += scale * s;
        }
    }

    /// `S X` for the sparse matrix with `values` on this pattern.
    pub fn mul(&self, values: &[f64], x: &RMat) -> RMat {
        let mut out = RMat::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            for (t, &v) in values.iter().enumerate() {
                out[(self.rows[t], c)] += v * x[(self.cols[t], c)];
            }
        }
        out
    }

    /// `Sᵀ X`.
    pub fn mul_t(&self, values: &[f64], x: &RMat) -> RMat {
        let mut out = RMat::zeros(self.n, x.ncols());
        for c in 0..x.ncols() {
            for (t, &v) in values.iter().enumerate() {
                out[(self.cols[t], c)] += v * x[(self.rows[t], c)];
            }
        }
        out
    }

    pub fn to_dense(&self, values: &[f64]) -> RMat {
        let mut out = RMat::zeros(self.n, self.n);
        for (t, &v) in values.iter().enumerate() {
            out[(self.rows[t], self.cols[t])] += v;
        }
        out
    }

    pub fn sample_dense(&self, d: &RMat, out: &mut [f64], scale: f64) {
        for (t, o) in out.iter_mut().enumerate() {
            *o += scale * d[(self.rows[t], self.cols[t])];
        }
    }
}

/// `Σ AᵢBᵢᵀ + Σ (sparse on 𝒥ₖ) + αI + D`.
#[derive(Debug, Clone)]
pub struct Ambient {
    pub n: usize,
    pub lowrank: Vec<(RMat, RMat)>,
    pub sparse: Vec<(Arc<Pattern>, Vec<f64>)>,
    pub ident: f64,
    pub dense: Option<RMat>,
}

impl Ambient {
    pub fn zero(n: usize) -> Self {
        Ambient {
            n,
            lowrank: Vec::new(),
            sparse: Vec::new(),
            ident: 0.0,
            dense: None,
        }
    }

    pub fn lowrank(a: RMat, b: RMat) -> Self {
        let mut z = Ambient::zero(a.nrows());
        z.lowrank.push((a, b));
        z
    }

    pub fn sparse(pattern: Arc<Pattern>, values: Vec<f64>) -> Self {
        let mut z = Ambient::zero(pattern.n());
        z.sparse.push((pattern, values));
        z
    }

    pub fn identity(n: usize, alpha: f64) -> Self {
        let mut z = Ambient::zero(n);
        z.ident = alpha;
        z
    }

    pub fn dense(d: RMat) -> Self {
        let mut z = Ambient::zero(d.nrows());
        z.dense = Some(d);
        z
    }

    pub fn scale(mut self, s: f64) -> Self {
        for (a, _) in &mut self.lowrank {
            *a *= s;
        }
        for (_, v) in &mut self.sparse {
            v.iter_mut().for_each(|x| *x *= s);
        }
        self.ident *= s;
        if let Some(d) = &mut self.dense {
            *d *= s;
        }
        self
    }

    /// `self + other`, concatenating the factored parts.
    pub fn add(mut self, other: Ambient) -> Self {
        self.lowrank.extend(other.lowrank);
        for (p, v) in other.sparse {
            match self.sparse.iter_mut().find(|(q, _)| Arc::ptr_eq(q, &p)) {
                Some((_, w)) => w.iter_mut().zip(&v).for_each(|(x, y)| *x += y),
                None => self.sparse.push((p, v)),
            }
        }
        self.ident += other.ident;
        self.dense = match (self.dense, other.dense) {
            (Some(a), Some(b)) => Some(a + b),
            (a, b) => a.or(b),
        };
        self
    }

    /// `Z X`.
    pub fn mul(&self, x: &RMat) -> RMat {
        let mut out = x * self.ident;
        for (a, b) in &self.lowrank {
            out += a * (b.transpose() * x);
        }
        for (p, v) in &self.sparse {
            out += p.mul(v, x);
        }
        if let Some(d) = &self.dense {
            out += d * x;
        }
        out
    }

    /// `Zᵀ X`.
    pub fn mul_t(&self, x: &RMat) -> RMat {
        let mut out = x * self.ident;
        for (a, b) in &self.lowrank {
            out += b * (a.transpose() * x);
        }
        for (p, v) in &self.sparse {
            out += p.mul_t(v, x);
        }
        if let Some(d) = &self.dense {
            out += d.transpose() * x;
        }
        out
    }

    /// Entries of `Z` on `pattern`.
    pub fn sample(&self, pattern: &Arc<Pattern>) -> Vec<f64> {
        let mut out = vec![0.0; pattern.len()];
        for (a, b) in &self.lowrank {
            pattern.sample_lowrank(a, b, &mut out, 1.0);
        }
        for (p, v) in &self.sparse {
            if Arc::ptr_eq(p, pattern) || **p == **pattern {
                out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
            } else {
                pattern.sample_dense(&p.to_dense(v), &mut out, 1.0);
            }
        }
        for &t in pattern.diag() {
            out[t] += self.ident;
        }
        if let Some(d) = &self.dense {
            pattern.sample_dense(d, &mut out, 1.0);
        }
        out
    }

    pub fn trace(&self) -> f64 {
        let mut t = self.ident * self.n as f64;
        for (a, b) in &self.lowrank {
            t += a.component_mul(b).sum();
        }
        for (p, v) in &self.sparse {
            t += p.diag().iter().map(|&i| v[i]).sum::<f64>();
        }
        if let Some(d) = &self.dense {
            t += d.trace();
        }
        t
    }

    pub fn to_dense(&self) -> RMat {
        let n = self.n;
        let mut out = RMat::identity(n, n) * self.ident;
        for (a, b) in &self.lowrank {
            out += a * b.transpose();
        }
        for (p, v) in &self.sparse {
            out += p.to_dense(v);
        }
        if let Some(d) = &self.dense {
            out += d;
        }
        out
    }
}
