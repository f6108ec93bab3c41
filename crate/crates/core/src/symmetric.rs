//! Backward error preserving real symmetry of every coefficient, and the
//! cheap bound that comes with it.
//!
//! With `V = Q₁T` and `T̃ⱼ = T fⱼ(Λ)`, every admissible `δFⱼ` is written in
//! the basis `[Q₁ Q₂]` as `[A₁₁ A₂₁ᵀ; A₂₁ 0]`. Only `Q₁` is formed: the
//! off-diagonal part enters through `Yⱼ = Q₂A₂₁⁽ʲ⁾`, which is
//! `−(I − Q₁Q₁ᵀ) R [T̃†]ⱼ`, so that
//! `δFⱼ = Q₁A₁₁Q₁ᵀ + YⱼQ₁ᵀ + Q₁Yⱼᵀ` has rank at most `2p`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{pinv_real, real_part, to_complex, CMat, RMat, DEFAULT_RANK_TOL};
use crate::nep::{hstack, Coefficient, EigenpairSet, SplitNep};
use crate::perturbation::{PerturbationForm, PerturbationSet};

const SYMMETRY_TOL: f64 = 1e-12;

/// Intermediate quantities of the symmetric construction.
#[derive(Debug, Clone)]
pub struct SymmetricParts {
    /// `n × p`, orthonormal columns spanning `range(V)`.
    pub q1: RMat,
    /// `T̃ = [T f₁(Λ); …; T f_k(Λ)]`, `kp × p`.
    pub ttilde: RMat,
    /// Symmetric `p × p` blocks `A₁₁⁽ʲ⁾`.
    pub a11: Vec<RMat>,
    /// `Yⱼ = Q₂ A₂₁⁽ʲ⁾`, `n × p`.
    pub y: Vec<RMat>,
    /// `‖B₂T̃†T̃ − B₂‖_F / ‖B₂‖_F`.
    pub consistency_21: f64,
    /// `‖M_S a − [vec B₁; 0]‖ / ‖B₁‖_F`.
    pub consistency_11: f64,
    pub r_norm: f64,
}

impl SymmetricParts {
    pub fn eta(&self) -> f64 {
        self.a11
            .iter()
            .zip(&self.y)
            .map(|(a, y)| a.norm_squared() + 2.0 * y.norm_squared())
            .sum::<f64>()
            .sqrt()
    }

    /// `δFⱼ` as a dense real matrix.
    pub fn dense(&self, j: usize) -> RMat {
        let q = &self.q1;
        q * &self.a11[j] * q.transpose() + &self.y[j] * q.transpose() + q * self.y[j].transpose()
    }

    /// `δFⱼ = [Q₁A₁₁ + Yⱼ, Q₁] [Q₁, Yⱼ]ᵀ`.
    pub fn factored(&self, j: usize) -> Coefficient {
        let q = to_complex(&self.q1);
        let y = to_complex(&self.y[j]);
        let left = hstack(&(&q * to_complex(&self.a11[j]) + &y), &q);
        let right = hstack(&q, &y);
        Coefficient::LowRank { left, right }
    }
}

/// `M_S = [T̃ᵀ ⊗ I_p ; blockdiag(Π_{p,p} − I_{p²})]`.
pub fn symmetric_system(ttilde: &RMat) -> RMat {
    let p = ttilde.ncols();
    let k = ttilde.nrows() / p;
    let pp = p * p;
    let mut ms = RMat::zeros(pp + k * pp, k * pp);
    // top block: vec(Σⱼ A⁽ʲ⁾ T̃ⱼ) = Σⱼ (T̃ⱼᵀ ⊗ I) vec(A⁽ʲ⁾)
    ms.view_mut((0, 0), (pp, k * pp))
        .copy_from(&ttilde.transpose().kronecker(&RMat::identity(p, p)));
    for j in 0..k {
        let (r0, c0) = (pp + j * pp, j * pp);
        for a in 0..p {
            for b in 0..p {
                // (Π − I) vec(X) = vec(Xᵀ − X)
                ms[(r0 + b + a * p, c0 + a + b * p)] += 1.0;
                ms[(r0 + a + b * p, c0 + a + b * p)] -= 1.0;
            }
        }
    }
    ms
}

fn rel(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn ttilde_of(t: &RMat, g: &RMat) -> RMat {
    let (p, k) = g.shape();
    let mut tt = RMat::zeros(k * p, p);
    for j in 0..k {
        let mut blk = t.clone();
        for (i, mut c) in blk.column_iter_mut().enumerate() {
            c *= g[(i, j)];
        }
        tt.view_mut((j * p, 0), (p, p)).copy_from(&blk);
    }
    tt
}

fn thin_qr(v: &RMat) -> Result<(RMat, RMat)> {
    let (n, p) = v.shape();
    if n < p {
        return Err(Error::Dimension(format!("symmetric backward error needs n >= p, got {n}x{p}")));
    }
    let qr = v.clone().qr();
    Ok((qr.q(), qr.r()))
}

/// Symmetric construction from the real residual `R`, eigenvectors `V` and
/// `G[i, j] = fⱼ(λᵢ)`. The coefficients themselves are not needed.
pub fn symmetric_from_residual(r: &RMat, v: &RMat, g: &RMat) -> Result<SymmetricParts> {
    let (n, p) = v.shape();
    if r.shape() != (n, p) || g.nrows() != p {
        return Err(Error::Dimension(format!(
            "R is {:?}, V is {:?}, G is {:?}",
            r.shape(),
            v.shape(),
            g.shape()
        )));
    }
    let k = g.ncols();
    let (q1, t) = thin_qr(v)?;
    let ttilde = ttilde_of(&t, g);
    let tpinv = pinv_real(&ttilde, DEFAULT_RANK_TOL);

    let b1 = -(q1.transpose() * r);
    // Q₂B₂ = −(I − Q₁Q₁ᵀ)R
    let z = -(r - &q1 * (q1.transpose() * r));
    let zy = &z * &tpinv;
    let y: Vec<RMat> = (0..k).map(|j| zy.columns(j * p, p).into_owned()).collect();
    let consistency_21 = rel((&zy * &ttilde - &z).norm(), z.norm());

    let ms = symmetric_system(&ttilde);
    let mut rhs = nalgebra::DVector::<f64>::zeros(ms.nrows());
    rhs.rows_mut(0, p * p).copy_from_slice(b1.as_slice());
    let a = pinv_real(&ms, DEFAULT_RANK_TOL) * &rhs;
    let consistency_11 = rel((&ms * &a - &rhs).norm(), b1.norm());
    let a11: Vec<RMat> = (0..k)
        .map(|j| RMat::from_column_slice(p, p, &a.as_slice()[j * p * p..(j + 1) * p * p]))
        .collect();

    Ok(SymmetricParts {
        q1,
        ttilde,
        a11,
        y,
        consistency_21,
        consistency_11,
        r_norm: r.norm(),
    })
}

/// Real residual data `(R, V, G)` after checking symmetry and realness.
pub fn real_symmetric_data(nep: &SplitNep, pairs: &EigenpairSet) -> Result<(RMat, RMat, RMat)> {
    for (j, c) in nep.coeffs().iter().enumerate() {
        let nrm = c.frobenius_norm();
        if !c.is_real(SYMMETRY_TOL) {
            return Err(Error::NotReal(format!("coefficient {j} is complex")));
        }
        if c.asymmetry_norm() > SYMMETRY_TOL * nrm {
            return Err(Error::NotSymmetric(format!("coefficient {j} is not symmetric")));
        }
    }
    if !pairs.is_real() {
        return Err(Error::NotReal(
            "eigenpairs must be real; supply complex conjugate pairs as a real invariant pair".into(),
        ));
    }
    let bundle = crate::nep::residual_bundle(nep, pairs)?;
    let scale = bundle.g.norm().max(f64::MIN_POSITIVE);
    if bundle.g.iter().any(|z| z.im.abs() > SYMMETRY_TOL * scale) {
        return Err(Error::NotReal("scalar functions are complex at the eigenvalues".into()));
    }
    Ok((real_part(&bundle.r), real_part(pairs.v()), real_part(&bundle.g)))
}

/// Minimal real symmetric perturbation making the real pairs exact.
pub fn symmetric_backward_error(nep: &SplitNep, pairs: &EigenpairSet) -> Result<PerturbationSet> {
    let (r, v, g) = real_symmetric_data(nep, pairs)?;
    let parts = symmetric_from_residual(&r, &v, &g)?;
    Ok(parts_to_set(&parts, &r, &v, &g))
}

pub(crate) fn parts_to_set(parts: &SymmetricParts, r: &RMat, v: &RMat, g: &RMat) -> PerturbationSet {
    let k = parts.a11.len();
    let mut res = r.clone();
    for j in 0..k {
        let mut wj = v.clone();
        for (i, mut c) in wj.column_iter_mut().enumerate() {
            c *= g[(i, j)];
        }
        let q = &parts.q1;
        let qw = q.transpose() * &wj;
        res += q * (&parts.a11[j] * &qw) + &parts.y[j] * &qw + q * (parts.y[j].transpose() * &wj);
    }
    PerturbationSet {
        form: PerturbationForm::Terms((0..k).map(|j| parts.factored(j)).collect()),
        eta: parts.eta(),
        residual_norm: res.norm(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetricBound {
    /// `√(‖M_S†‖_F² + 2‖T̃†‖_F²) ‖R‖_F`, the form the derivation supports.
    pub pinv_form: f64,
    /// `√(‖M_S†‖_F² + 2‖T̃‖_F²) ‖R‖_F`, the form printed with the figures.
    pub plain_form: f64,
    /// `‖R‖_F² (‖M_S†‖_F² + 2‖T̃‖_F²)`, the statement as printed (squared).
    pub squared_plain: f64,
    /// Larger of the two square-root forms.
    pub bound: f64,
    pub ms_pinv_norm: f64,
    pub ttilde_norm: f64,
    pub ttilde_pinv_norm: f64,
    pub r_norm: f64,
}

pub fn symmetric_bound_from_residual(r: &RMat, v: &RMat, g: &RMat) -> Result<SymmetricBound> {
    let (_, t) = thin_qr(v)?;
    let ttilde = ttilde_of(&t, g);
    let ms_pinv_norm = pinv_real(&symmetric_system(&ttilde), DEFAULT_RANK_TOL).norm();
    let ttilde_pinv_norm = pinv_real(&ttilde, DEFAULT_RANK_TOL).norm();
    let ttilde_norm = ttilde.norm();
    let rn = r.norm();
    let pinv_form = (ms_pinv_norm.powi(2) + 2.0 * ttilde_pinv_norm.powi(2)).sqrt() * rn;
    let plain_sq = ms_pinv_norm.powi(2) + 2.0 * ttilde_norm.powi(2);
    let plain_form = plain_sq.sqrt() * rn;
    Ok(SymmetricBound {
        pinv_form,
        plain_form,
        squared_plain: rn * rn * plain_sq,
        bound: pinv_form.max(plain_form),
        ms_pinv_norm,
        ttilde_norm,
        ttilde_pinv_norm,
        r_norm: rn,
    })
}

pub fn symmetric_bound(nep: &SplitNep, pairs: &EigenpairSet) -> Result<SymmetricBound> {
    let (r, v, g) = real_symmetric_data(nep, pairs)?;
    symmetric_bound_from_residual(&r, &v, &g)
}

/// Dense `δFⱼ` of a symmetric solution in complex storage.
pub fn dense_terms(parts: &SymmetricParts) -> Vec<CMat> {
    (0..parts.a11.len()).map(|j| to_complex(&parts.dense(j))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutation, economy_qr, C64};
    use crate::nep::ScalarFn;
    use crate::structured::{structured_backward_error, StructureSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sym(rng: &mut ChaCha8Rng, n: usize) -> CMat {
        let a = RMat::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        to_complex(&((&a + a.transpose()) / 2.0))
    }

    fn instance(rng: &mut ChaCha8Rng, n: usize, p: usize) -> (SplitNep, EigenpairSet) {
        let nep = SplitNep::new(
            (0..3).map(|_| Coefficient::Dense(sym(rng, n))).collect(),
            vec![ScalarFn::One, ScalarFn::Lambda, ScalarFn::ExpNeg],
        )
        .unwrap();
        let lambdas = (0..p).map(|_| C64::new(rng.random_range(-1.0..1.0), 0.0)).collect();
        let v = CMat::from_fn(n, p, |_, _| C64::new(rng.random_range(-1.0..1.0), 0.0));
        (nep, EigenpairSet::new(lambdas, v).unwrap())
    }

    #[test]
    fn system_matrix_encodes_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let p = 3;
        let tt = RMat::from_fn(2 * p, p, |_, _| rng.random_range(-1.0..1.0));
        let ms = symmetric_system(&tt);
        let pi = real_part(&commutation(p));
        let block = &pi - RMat::identity(p * p, p * p);
        assert_eq!(ms.view((p * p, 0), (p * p, p * p)).into_owned(), block);
        let s = RMat::from_fn(p, p, |i, j| (i + j) as f64);
        let x = RMat::from_fn(2 * p * p, 1, |i, _| if i < p * p { s.as_slice()[i] } else { 0.0 });
        let out = &ms * x;
        assert!(out.rows(p * p, 2 * p * p).norm() == 0.0);
    }

    #[test]
    fn exact_pairs_give_zero() {
        let n = 4;
        let d = CMat::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| C64::new(i as f64 + 1.0, 0.0)));
        let nep = SplitNep::new(
            vec![Coefficient::Dense(d), Coefficient::identity(n)],
            vec![ScalarFn::One, ScalarFn::Polynomial(vec![C64::new(0.0, 0.0), C64::new(-1.0, 0.0)])],
        )
        .unwrap();
        let v = CMat::from_fn(n, 2, |i, j| C64::new(if i == j + 2 { 1.0 } else { 0.0 }, 0.0));
        let pairs = EigenpairSet::new(vec![C64::new(3.0, 0.0), C64::new(4.0, 0.0)], v).unwrap();
        let d = symmetric_backward_error(&nep, &pairs).unwrap();
        assert_eq!(d.eta, 0.0);
        assert_eq!(symmetric_bound(&nep, &pairs).unwrap().bound, 0.0);
    }

    #[test]
    fn matches_linear_structured_solver() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        for p in 1..=3 {
            let (nep, pairs) = instance(&mut rng, 8, p);
            let s = symmetric_backward_error(&nep, &pairs).unwrap();
            let l = structured_backward_error(&nep, &pairs, &vec![StructureSpec::Symmetric; 3]).unwrap();
            assert!((s.eta - l.eta).abs() <= 1e-8 * l.eta, "p={p}: {} vs {}", s.eta, l.eta);
            for j in 0..3 {
                assert!((s.dense(j) - l.dense(j)).norm() <= 1e-8 * l.eta);
            }
        }
    }

    #[test]
    fn structural_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let (nep, pairs) = instance(&mut rng, 10, 3);
        let (r, v, g) = real_symmetric_data(&nep, &pairs).unwrap();
        let parts = symmetric_from_residual(&r, &v, &g).unwrap();
        assert!(parts.consistency_21 <= 1e-10 && parts.consistency_11 <= 1e-10);
        let (q, _) = economy_qr(pairs.v(), true).unwrap();
        let q = real_part(&q);
        for j in 0..3 {
            let d = parts.dense(j);
            assert!((&d - d.transpose()).norm() <= 1e-12 * d.norm());
            let inner = q.transpose() * &d * &q;
            assert!(inner.view((3, 3), (7, 7)).norm() <= 1e-12 * d.norm());
            let a11 = inner.view((0, 0), (3, 3)).norm_squared();
            let a21 = inner.view((3, 0), (7, 3)).norm_squared();
            assert!((inner.norm_squared() - (a11 + 2.0 * a21)).abs() <= 1e-10 * inner.norm_squared());
            assert!((a11.sqrt() - parts.a11[j].norm()).abs() <= 1e-10 * d.norm());
        }
        let set = parts_to_set(&parts, &r, &v, &g);
        assert!(set.residual_norm <= 1e-10 * (r.norm() + set.eta * v.norm()));
        let b = symmetric_bound_from_residual(&r, &v, &g).unwrap();
        assert!(set.eta <= b.pinv_form && b.pinv_form <= b.bound);
    }

    #[test]
    fn square_v_has_no_offdiagonal_part() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let (nep, pairs) = instance(&mut rng, 3, 3);
        let (r, v, g) = real_symmetric_data(&nep, &pairs).unwrap();
        let parts = symmetric_from_residual(&r, &v, &g).unwrap();
        assert!(parts.y.iter().all(|y| y.norm() <= 1e-12 * r.norm()));
        let set = parts_to_set(&parts, &r, &v, &g);
        assert!(set.residual_norm <= 1e-10 * r.norm());
    }

    #[test]
    fn rejects_bad_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        let (nep, pairs) = instance(&mut rng, 5, 2);
        let complex = EigenpairSet::new(vec![C64::new(0.1, 0.2), C64::new(0.3, 0.0)], pairs.v().clone()).unwrap();
        assert!(matches!(symmetric_backward_error(&nep, &complex), Err(Error::NotReal(_))));
        let mut c = nep.coeffs().to_vec();
        c[1] = Coefficient::Dense(CMat::from_fn(5, 5, |i, j| C64::new((i * 5 + j) as f64, 0.0)));
        let bad = nep.with_coeffs(c).unwrap();
        assert!(matches!(symmetric_backward_error(&bad, &pairs), Err(Error::NotSymmetric(_))));
    }
}
