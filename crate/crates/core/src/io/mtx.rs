//! Matrix Market files: coordinate and array formats, real or complex,
//! general, symmetric, skew-symmetric or Hermitian.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linalg::{CMat, SparseMatrix, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtxSymmetry {
    General,
    Symmetric,
    SkewSymmetric,
    Hermitian,
}

#[derive(Debug, Clone)]
pub enum MtxMatrix {
    Coordinate(SparseMatrix),
    Array(CMat),
}

impl MtxMatrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MtxMatrix::Coordinate(s) => (s.nrows(), s.ncols()),
            MtxMatrix::Array(a) => a.shape(),
        }
    }

    pub fn to_dense(&self) -> CMat {
        match self {
            MtxMatrix::Coordinate(s) => s.to_dense(),
            MtxMatrix::Array(a) => a.clone(),
        }
    }
}

pub fn read_mtx(path: &Path) -> Result<MtxMatrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_mtx(&text, path)
}

pub fn parse_mtx(text: &str, path: &Path) -> Result<MtxMatrix> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let h: Vec<String> = header.split_whitespace().map(|w| w.to_ascii_lowercase()).collect();
    if h.len() != 5 || h[0] != "%%matrixmarket" || h[1] != "matrix" {
        return Err(err(1, format!("bad header '{header}'")));
    }
    let coordinate = match h[2].as_str() {
        "coordinate" => true,
        "array" => false,
        f => return Err(err(1, format!("unsupported format '{f}'"))),
    };
    let complex = match h[3].as_str() {
        "real" | "integer" => false,
        "complex" => true,
        f => return Err(err(1, format!("unsupported field '{f}'"))),
    };
    let symmetry = match h[4].as_str() {
        "general" => MtxSymmetry::General,
        "symmetric" => MtxSymmetry::Symmetric,
        "skew-symmetric" => MtxSymmetry::SkewSymmetric,
        "hermitian" => MtxSymmetry::Hermitian,
        f => return Err(err(1, format!("unsupported symmetry '{f}'"))),
    };
    let mut data = lines.filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('%'));
    let (size_line, size) = data.next().ok_or_else(|| err(2, "missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|w| w.parse().map_err(|_| err(size_line, format!("bad size entry '{w}'"))))
        .collect::<Result<_>>()?;
    let num = |line: usize, w: Option<&str>| -> Result<f64> {
        let w = w.ok_or_else(|| err(line, "too few fields".into()))?;
        w.parse().map_err(|_| err(line, format!("bad number '{w}'")))
    };
    let value = |line: usize, it: &mut std::str::SplitWhitespace| -> Result<C64> {
        let re = num(line, it.next())?;
        let im = if complex { num(line, it.next())? } else { 0.0 };
        Ok(C64::new(re, im))
    };
    let mirror = |z: C64| match symmetry {
        MtxSymmetry::General | MtxSymmetry::Symmetric => z,
        MtxSymmetry::SkewSymmetric => -z,
        MtxSymmetry::Hermitian => z.conj(),
    };
    if coordinate {
        if dims.len() != 3 {
            return Err(err(size_line, "coordinate size line needs rows, cols, nnz".into()));
        }
        let (m, n, nnz) = (dims[0], dims[1], dims[2]);
        let mut trip = Vec::with_capacity(nnz);
        let mut seen = 0;
        for (line, l) in data {
            let mut it = l.split_whitespace();
            let i = num(line, it.next())? as usize;
            let j = num(line, it.next())? as usize;
            if i == 0 || j == 0 || i > m || j > n {
                return Err(err(line, format!("index ({i}, {j}) outside {m} x {n}")));
            }
            let z = value(line, &mut it)?;
            trip.push((i - 1, j - 1, z));
            if symmetry != MtxSymmetry::General && i != j {
                trip.push((j - 1, i - 1, mirror(z)));
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(err(size_line, format!("declared {nnz} entries, found {seen}")));
        }
        Ok(MtxMatrix::Coordinate(SparseMatrix::from_triplets(m, n, &trip)))
    } else {
        if dims.len() != 2 {
            return Err(err(size_line, "array size line needs rows, cols".into()));
        }
        let (m, n) = (dims[0], dims[1]);
        let mut a = CMat::zeros(m, n);
        // column-major, lower triangle only for the symmetric kinds
        let mut slots = (0..n).flat_map(|j| (0..m).map(move |i| (i, j)));
        let packed = symmetry != MtxSymmetry::General;
        let mut last = size_line;
        for (line, l) in data {
            last = line;
            let (i, j) = loop {
                match slots.next() {
                    Some((i, j)) if packed && (i < j || (i == j && symmetry == MtxSymmetry::SkewSymmetric)) => continue,
                    Some(s) => break s,
                    None => return Err(err(line, "more entries than the declared size".into())),
                }
            };
            let z = value(line, &mut l.split_whitespace())?;
            a[(i, j)] = z;
            if packed && i != j {
                a[(j, i)] = mirror(z);
            }
        }
        let rest = slots.any(|(i, j)| !packed || i > j || (i == j && symmetry != MtxSymmetry::SkewSymmetric));
        if rest {
            return Err(err(last, "fewer entries than the declared size".into()));
        }
        Ok(MtxMatrix::Array(a))
    }
}

fn is_real(values: impl IntoIterator<Item = C64>) -> bool {
    values.into_iter().all(|z| z.im == 0.0)
}

fn push_value(out: &mut String, z: C64, complex: bool) {
    if complex {
        let _ = write!(out, "{:.16e} {:.16e}", z.re, z.im);
    } else {
        let _ = write!(out, "{:.16e}", z.re);
    }
}

/// Coordinate format; real field when every entry is real. With
/// `symmetric`, only the lower triangle is written and the matrix must be
/// symmetric.
pub fn format_coordinate(s: &SparseMatrix, symmetric: bool) -> Result<String> {
    if symmetric && (s.nrows() != s.ncols() || s.iter().any(|(i, j, z)| s.get(j, i) != z)) {
        return Err(Error::NotSymmetric("matrix written as symmetric".into()));
    }
    let complex = !is_real(s.values().iter().copied());
    let entries: Vec<_> = s.iter().filter(|&(i, j, _)| !symmetric || i >= j).collect();
    let mut out = format!(
        "%%MatrixMarket matrix coordinate {} {}\n{} {} {}\n",
        if complex { "complex" } else { "real" },
        if symmetric { "symmetric" } else { "general" },
        s.nrows(),
        s.ncols(),
        entries.len()
    );
    for (i, j, z) in entries {
        let _ = write!(out, "{} {} ", i + 1, j + 1);
        push_value(&mut out, z, complex);
        out.push('\n');
    }
    Ok(out)
}

/// Array format, column-major, 17 significant digits.
pub fn format_array(a: &CMat) -> String {
    let complex = !is_real(a.iter().copied());
    let mut out = format!(
        "%%MatrixMarket matrix array {} general\n{} {}\n",
        if complex { "complex" } else { "real" },
        a.nrows(),
        a.ncols()
    );
    for z in a.iter() {
        push_value(&mut out, *z, complex);
        out.push('\n');
    }
    out
}

pub fn write_coordinate(path: &Path, s: &SparseMatrix, symmetric: bool) -> Result<()> {
    std::fs::write(path, format_coordinate(s, symmetric)?).map_err(|e| Error::io(path, e))
}

pub fn write_array(path: &Path, a: &CMat) -> Result<()> {
    std::fs::write(path, format_array(a)).map_err(|e| Error::io(path, e))
}
