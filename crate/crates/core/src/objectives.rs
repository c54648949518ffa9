//! Experiment objectives and toy weakly convex functions.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::point::{dot, matmul, DensePoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveId {
    LpLoss,
    PhaseRetrieval,
    KlInverse,
    LowRank,
    Nmf,
    ToyPiecewise,
    ToyLog1pSq,
    Quadratic,
}

impl fmt::Display for ObjectiveId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ObjectiveId::LpLoss => "lp_loss",
            ObjectiveId::PhaseRetrieval => "phase_retrieval",
            ObjectiveId::KlInverse => "kl_inverse",
            ObjectiveId::LowRank => "low_rank",
            ObjectiveId::Nmf => "nmf",
            ObjectiveId::ToyPiecewise => "toy_piecewise",
            ObjectiveId::ToyLog1pSq => "toy_log1p_sq",
            ObjectiveId::Quadratic => "quadratic",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyKind {
    Piecewise,
    Log1pSq,
}

/// Weak-convexity, error-bound and smoothness constants documented for a toy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConstants {
    pub rho: f64,
    pub mu: f64,
    pub l: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum Objective {
    /// `||Ax - b||_p^p`, `p > 1`.
    LpLoss { a: DensePoint, b: Vec<f64>, p: f64 },
    /// `1/4 sum_i (<a_i, x>^2 - b_i)^2`; the rows of `a` are the `a_i`.
    PhaseRetrieval { a: DensePoint, b: Vec<f64> },
    /// `sum_i (Ax)_i log((Ax)_i / b_i) + b_i - (Ax)_i` with `A >= 0`, `b > 0`.
    KlInverse { a: DensePoint, b: Vec<f64> },
    /// `1/2 ||X X^T - M||_F^2` over `n x r` matrices `X`.
    LowRank { m: DensePoint, r: usize },
    /// `1/2 ||W H - V||_F^2`. The variable is the flat vector `[vec(W); vec(H)]`
    /// with `W` of size `rows(V) x rank` and `H` of size `rank x cols(V)`, both row-major.
    Nmf { v: DensePoint, rank: usize },
    /// `-x^2 + 1` on `(-1, -0.5)`, `3 (x + 1)^2` elsewhere.
    ToyPiecewise,
    /// `log(1 + x^2)`
    ToyLog1pSq,
    /// `1/2 x^T Q x + c^T x + constant`, `Q` symmetric.
    Quadratic {
        q: DensePoint,
        c: Vec<f64>,
        constant: f64,
    },
}

pub fn make_toy(kind: ToyKind) -> Objective {
    match kind {
        ToyKind::Piecewise => Objective::ToyPiecewise,
        ToyKind::Log1pSq => Objective::ToyLog1pSq,
    }
}

impl Objective {
    pub fn lp_loss(a: DensePoint, b: Vec<f64>, p: f64) -> Result<Self> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::InvalidConstant(format!(
                "lp loss needs p > 1, got {p}"
            )));
        }
        check_rows(&a, &b)?;
        Ok(Objective::LpLoss { a, b, p })
    }

    pub fn phase_retrieval(a: DensePoint, b: Vec<f64>) -> Result<Self> {
        check_rows(&a, &b)?;
        Ok(Objective::PhaseRetrieval { a, b })
    }

    pub fn kl_inverse(a: DensePoint, b: Vec<f64>) -> Result<Self> {
        check_rows(&a, &b)?;
        if a.data().iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidConstant("KL inverse needs A >= 0".into()));
        }
        if b.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConstant("KL inverse needs b > 0".into()));
        }
        Ok(Objective::KlInverse { a, b })
    }

    pub fn low_rank(m: DensePoint, r: usize) -> Result<Self> {
        if m.shape().len() != 2 || m.rows() != m.cols() || r == 0 {
            return Err(Error::InvalidConstant(
                "low-rank objective needs a square M and r >= 1".into(),
            ));
        }
        Ok(Objective::LowRank { m, r })
    }

    pub fn nmf(v: DensePoint, rank: usize) -> Result<Self> {
        if v.shape().len() != 2 || rank == 0 {
            return Err(Error::InvalidConstant(
                "NMF needs a matrix V and rank >= 1".into(),
            ));
        }
        Ok(Objective::Nmf { v, rank })
    }

    pub fn quadratic(q: DensePoint, c: Vec<f64>, constant: f64) -> Result<Self> {
        if q.shape().len() != 2 || q.rows() != q.cols() || q.rows() != c.len() {
            return Err(Error::InvalidConstant(
                "quadratic needs a square Q matching c".into(),
            ));
        }
        Ok(Objective::Quadratic { q, c, constant })
    }

    pub fn id(&self) -> ObjectiveId {
        match self {
            Objective::LpLoss { .. } => ObjectiveId::LpLoss,
            Objective::PhaseRetrieval { .. } => ObjectiveId::PhaseRetrieval,
            Objective::KlInverse { .. } => ObjectiveId::KlInverse,
            Objective::LowRank { .. } => ObjectiveId::LowRank,
            Objective::Nmf { .. } => ObjectiveId::Nmf,
            Objective::ToyPiecewise => ObjectiveId::ToyPiecewise,
            Objective::ToyLog1pSq => ObjectiveId::ToyLog1pSq,
            Objective::Quadratic { .. } => ObjectiveId::Quadratic,
        }
    }

    /// Shape of the decision variable.
    pub fn input_shape(&self) -> Vec<usize> {
        match self {
            Objective::LpLoss { a, .. }
            | Objective::PhaseRetrieval { a, .. }
            | Objective::KlInverse { a, .. } => vec![a.cols()],
            Objective::LowRank { m, r } => vec![m.rows(), *r],
            Objective::Nmf { v, rank } => vec![rank * (v.rows() + v.cols())],
            Objective::ToyPiecewise | Objective::ToyLog1pSq => vec![1],
            Objective::Quadratic { c, .. } => vec![c.len()],
        }
    }

    fn check_input(&self, x: &DensePoint) -> Result<()> {
        let shape = self.input_shape();
        if x.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn value(&self, x: &DensePoint) -> Result<f64> {
        self.check_input(x)?;
        let xd = x.data();
        let v = match self {
            Objective::LpLoss { a, b, p } => a
                .matvec(xd)
                .iter()
                .zip(b)
                .map(|(ax, bi)| (ax - bi).abs().powf(*p))
                .sum(),
            Objective::PhaseRetrieval { a, b } => {
                0.25 * a
                    .matvec(xd)
                    .iter()
                    .zip(b)
                    .map(|(ax, bi)| (ax * ax - bi).powi(2))
                    .sum::<f64>()
            }
            Objective::KlInverse { a, b } => {
                let ax = a.matvec(xd);
                let mut s = 0.0;
                for (i, (&u, &bi)) in ax.iter().zip(b).enumerate() {
                    if u < 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "KL objective needs (Ax)_{i} >= 0, got {u}"
                        )));
                    }
                    s += bi - u;
                    if u > 0.0 {
                        s += u * (u / bi).ln();
                    }
                }
                s
            }
            Objective::LowRank { m, r } => {
                let res = low_rank_residual(m, xd, *r);
                0.5 * dot(&res, &res)
            }
            Objective::Nmf { v, rank } => {
                let res = nmf_residual(v, xd, *rank);
                0.5 * dot(&res, &res)
            }
            Objective::ToyPiecewise => {
                let t = xd[0];
                if t > -1.0 && t < -0.5 {
                    1.0 - t * t
                } else {
                    3.0 * (t + 1.0).powi(2)
                }
            }
            Objective::ToyLog1pSq => (xd[0] * xd[0]).ln_1p(),
            Objective::Quadratic { q, c, constant } => {
                0.5 * dot(xd, &q.matvec(xd)) + dot(c, xd) + constant
            }
        };
        Ok(v)
    }

    pub fn gradient(&self, x: &DensePoint) -> Result<DensePoint> {
        self.check_input(x)?;
        let xd = x.data();
        let shape = x.shape().to_vec();
        let g = match self {
            Objective::LpLoss { a, b, p } => {
                let w: Vec<f64> = a
                    .matvec(xd)
                    .iter()
                    .zip(b)
                    .map(|(ax, bi)| {
                        let r = ax - bi;
                        if r == 0.0 {
                            0.0
                        } else {
                            p * r.abs().powf(p - 1.0) * r.signum()
                        }
                    })
                    .collect();
                a.matvec_t(&w)
            }
            Objective::PhaseRetrieval { a, b } => {
                let w: Vec<f64> = a
                    .matvec(xd)
                    .iter()
                    .zip(b)
                    .map(|(ax, bi)| (ax * ax - bi) * ax)
                    .collect();
                a.matvec_t(&w)
            }
            Objective::KlInverse { a, b } => {
                let ax = a.matvec(xd);
                let mut w = Vec::with_capacity(ax.len());
                for (i, (&u, &bi)) in ax.iter().zip(b).enumerate() {
                    if u <= 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "KL gradient undefined at (Ax)_{i} = {u}"
                        )));
                    }
                    w.push((u / bi).ln());
                }
                a.matvec_t(&w)
            }
            Objective::LowRank { m, r } => {
                let n = m.rows();
                let res = low_rank_residual(m, xd, *r);
                // grad = (R + R^T) X = 2 R X for symmetric M.
                let rs: Vec<f64> = (0..n * n)
                    .map(|k| res[k] + res[(k % n) * n + k / n])
                    .collect();
                matmul(&rs, xd, n, n, *r)
            }
            Objective::Nmf { v, rank } => {
                let (m, n, k) = (v.rows(), v.cols(), *rank);
                let (w, h) = xd.split_at(m * k);
                let res = nmf_residual(v, xd, k);
                let mut g = vec![0.0; xd.len()];
                // grad_W = R H^T
                for i in 0..m {
                    for l in 0..k {
                        g[i * k + l] = dot(&res[i * n..(i + 1) * n], &h[l * n..(l + 1) * n]);
                    }
                }
                // grad_H = W^T R
                let gh = &mut g[m * k..];
                for i in 0..m {
                    for l in 0..k {
                        let wil = w[i * k + l];
                        if wil == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            gh[l * n + j] += wil * res[i * n + j];
                        }
                    }
                }
                g
            }
            Objective::ToyPiecewise => {
                let t = xd[0];
                if t > -1.0 && t < -0.5 {
                    vec![-2.0 * t]
                } else {
                    vec![6.0 * (t + 1.0)]
                }
            }
            Objective::ToyLog1pSq => vec![2.0 * xd[0] / (1.0 + xd[0] * xd[0])],
            Objective::Quadratic { q, c, .. } => {
                let mut g = q.matvec(xd);
                for (gi, ci) in g.iter_mut().zip(c) {
                    *gi += ci;
                }
                g
            }
        };
        Ok(DensePoint::from_parts(g, shape))
    }

    /// `D_f(x, y) = f(x) - f(y) - <grad f(y), x - y>`. Not clamped: negative for
    /// nonconvex `f` where the linearization overestimates.
    pub fn divergence(&self, x: &DensePoint, y: &DensePoint) -> Result<f64> {
        x.same_shape(y)?;
        if let Objective::Quadratic { q, .. } = self {
            self.check_input(x)?;
            let d = x.sub(y);
            return Ok(0.5 * dot(d.data(), &q.matvec(d.data())));
        }
        let gy = self.gradient(y)?;
        let d = x.sub(y);
        Ok(self.value(x)? - self.value(y)? - gy.dot(&d))
    }

    /// Published smoothness-relative-to-kernel constant and the kernel it pairs with.
    /// `None` means the constant must be found by adaptive search.
    pub fn smad_constant(&self) -> (Option<f64>, Kernel) {
        match self {
            Objective::LpLoss { .. } => {
                (Some(1.0), Kernel::ObjectiveAsKernel(Arc::new(self.clone())))
            }
            Objective::PhaseRetrieval { a, b } => {
                let l = (0..a.rows())
                    .map(|i| {
                        let n2 = dot(a.row(i), a.row(i));
                        3.0 * n2 * n2 + n2 * b[i].abs()
                    })
                    .sum();
                (Some(l), Kernel::Quartic)
            }
            Objective::KlInverse { a, .. } => {
                let sums = a.matvec_t(&vec![1.0; a.rows()]);
                let l = sums.iter().fold(0.0f64, |m, &s| m.max(s));
                (Some(l), Kernel::Entropy)
            }
            Objective::LowRank { .. } => (None, Kernel::Quartic),
            Objective::Nmf { v, .. } => (None, Kernel::QuarticScaled { c: v.norm() }),
            Objective::ToyPiecewise => (Some(6.0), Kernel::Euclidean),
            Objective::ToyLog1pSq => (Some(2.0), Kernel::Euclidean),
            Objective::Quadratic { q, .. } => {
                let eig = nalgebra::SymmetricEigen::new(q.to_nalgebra());
                let l = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                (Some(l), Kernel::Euclidean)
            }
        }
    }

    /// Documented constants of the toy functions.
    pub fn toy_constants(&self) -> Option<ToyConstants> {
        match self {
            Objective::ToyPiecewise => Some(ToyConstants {
                rho: 2.0,
                mu: 6.0,
                l: 6.0,
            }),
            Objective::ToyLog1pSq => Some(ToyConstants {
                rho: 0.25,
                mu: 1.0 / 3.0,
                l: 2.0,
            }),
            _ => None,
        }
    }
}

fn check_rows(a: &DensePoint, b: &[f64]) -> Result<()> {
    if a.shape().len() != 2 || a.rows() != b.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![b.len()],
            got: a.shape().to_vec(),
        });
    }
    Ok(())
}

fn low_rank_residual(m: &DensePoint, x: &[f64], r: usize) -> Vec<f64> {
    let n = m.rows();
    let mut res = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            res[i * n + j] = dot(&x[i * r..(i + 1) * r], &x[j * r..(j + 1) * r]) - m.get(i, j);
        }
    }
    res
}

fn nmf_residual(v: &DensePoint, x: &[f64], k: usize) -> Vec<f64> {
    let (m, n) = (v.rows(), v.cols());
    let (w, h) = x.split_at(m * k);
    let mut res = matmul(w, h, m, k, n);
    for (r, vi) in res.iter_mut().zip(v.data()) {
        *r -= vi;
    }
    res
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DensePoint {
        DensePoint::vector(x.to_vec())
    }

    fn half_norm_sq(n: usize) -> Objective {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        Objective::quadratic(DensePoint::matrix(n, n, q), vec![0.0; n], 0.0).unwrap()
    }

    fn fd_max_rel(f: &Objective, x: &DensePoint) -> f64 {
        let g = f.gradient(x).unwrap();
        let mut err: f64 = 0.0;
        for j in 0..x.len() {
            let h = 1e-5 * (1.0 + x.data()[j].abs());
            let mut xp = x.clone();
            xp.data_mut()[j] += h;
            let mut xm = x.clone();
            xm.data_mut()[j] -= h;
            let fd = (f.value(&xp).unwrap() - f.value(&xm).unwrap()) / (2.0 * h);
            err = err.max((fd - g.data()[j]).abs());
        }
        err / g.max_abs().max(1e-12)
    }

    #[test]
    fn quadratic_examples() {
        let f = half_norm_sq(2);
        let x = v(&[1.0, 0.0]);
        assert_eq!(f.value(&x).unwrap(), 0.5);
        assert_eq!(f.gradient(&x).unwrap(), x);
        assert_eq!(f.divergence(&v(&[0.0, 0.0]), &x).unwrap(), 0.5);
        assert_eq!(f.divergence(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn phase_retrieval_exact_fit() {
        let f = Objective::phase_retrieval(DensePoint::matrix(1, 1, vec![1.0]), vec![1.0]).unwrap();
        assert_eq!(f.value(&v(&[1.0])).unwrap(), 0.0);
        assert_eq!(f.gradient(&v(&[1.0])).unwrap(), v(&[0.0]));
        assert_eq!(f.smad_constant().0, Some(4.0));
    }

    #[test]
    fn lp_loss_examples() {
        let f = Objective::lp_loss(DensePoint::matrix(1, 1, vec![1.0]), vec![0.0], 1.1).unwrap();
        assert_eq!(f.value(&v(&[1.0])).unwrap(), 1.0);
        assert!((f.gradient(&v(&[1.0])).unwrap().data()[0] - 1.1).abs() < 1e-15);
        assert_eq!(f.gradient(&v(&[0.0])).unwrap().data()[0], 0.0);
        let (l, k) = f.smad_constant();
        assert_eq!(l, Some(1.0));
        assert_eq!(k.id(), crate::kernels::KernelId::ObjectiveAsKernel);
        assert!(Objective::lp_loss(DensePoint::matrix(1, 1, vec![1.0]), vec![0.0], 1.0).is_err());
    }

    #[test]
    fn kl_examples() {
        let f = Objective::kl_inverse(DensePoint::matrix(2, 1, vec![0.3, 0.7]), vec![0.3, 0.7])
            .unwrap();
        assert!((f.smad_constant().0.unwrap() - 1.0).abs() < 1e-15);
        assert!(f.value(&v(&[1.0])).unwrap().abs() < 1e-15);
        assert_eq!(f.value(&v(&[0.0])).unwrap(), 1.0);
        assert!(matches!(
            f.gradient(&v(&[0.0])),
            Err(Error::DomainViolation(_))
        ));
        assert!(matches!(
            f.value(&v(&[-1.0])),
            Err(Error::DomainViolation(_))
        ));
    }

    #[test]
    fn toys() {
        let p = make_toy(ToyKind::Piecewise);
        assert_eq!(p.value(&v(&[-1.0])).unwrap(), 0.0);
        assert_eq!(p.value(&v(&[-0.75])).unwrap(), 0.4375);
        let d = p.divergence(&v(&[-0.6]), &v(&[-0.9])).unwrap();
        assert!(d < 0.0);
        let l = make_toy(ToyKind::Log1pSq);
        assert_eq!(l.value(&v(&[0.0])).unwrap(), 0.0);
        assert_eq!(l.gradient(&v(&[0.0])).unwrap(), v(&[0.0]));
        assert_eq!(p.toy_constants().unwrap().mu, 6.0);
    }

    #[test]
    fn matrix_objective_gradients_match_fd() {
        let m = DensePoint::matrix(3, 3, vec![2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5]);
        let f = Objective::low_rank(m, 2).unwrap();
        let x = DensePoint::matrix(3, 2, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.7]);
        assert!(fd_max_rel(&f, &x) < 1e-6);

        let vmat = DensePoint::matrix(2, 3, vec![0.2, 0.1, 0.4, 0.3, 0.6, 0.2]);
        let f = Objective::nmf(vmat, 2).unwrap();
        let x = v(&[0.3, 0.2, 0.5, 0.1, 0.4, 0.7, 0.1, 0.2, 0.6, 0.3]);
        assert!(fd_max_rel(&f, &x) < 1e-6);
    }

    #[test]
    fn quadratic_smad_is_spectral_radius() {
        let q = DensePoint::matrix(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let f = Objective::quadratic(q, vec![0.0, 0.0], 0.0).unwrap();
        assert!((f.smad_constant().0.unwrap() - 3.0).abs() < 1e-12);
    }
}
