//! Kernel generating distances and their Bregman divergences.
//!
//! A kernel `phi` induces `D_phi(x, y) = phi(x) - phi(y) - <grad phi(y), x - y>`.
//! Euclidean, entropy, Burg and quartic kernels use algebraically equivalent
//! closed forms that avoid cancellation near `x = y`; the objective-as-kernel
//! variant uses the defining formula.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::objectives::Objective;
use crate::par::{self, Execution};
use crate::point::DensePoint;

/// Tiny negative divergences down to `-NEG_CLAMP * (1 + |phi(x)|)` are reported as zero.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelDomain {
    AllReals,
    NonnegativeOrthant,
    PositiveOrthant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    Euclidean,
    Entropy,
    Burg,
    Quartic,
    QuarticScaled,
    ObjectiveAsKernel,
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KernelId::Euclidean => "euclidean",
            KernelId::Entropy => "entropy",
            KernelId::Burg => "burg",
            KernelId::Quartic => "quartic",
            KernelId::QuarticScaled => "quartic_scaled",
            KernelId::ObjectiveAsKernel => "objective",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub enum Kernel {
    /// `1/2 ||x||^2`
    Euclidean,
    /// `sum x_j log x_j` with `0 log 0 = 0`
    Entropy,
    /// `-sum log x_j`
    Burg,
    /// `1/4 ||x||^4 + 1/2 ||x||^2`
    Quartic,
    /// `3/4 ||x||^4 + c/2 ||x||^2`, where `||x||^2` is the joint squared norm of
    /// all blocks (e.g. `||W||_F^2 + ||H||_F^2`).
    QuarticScaled { c: f64 },
    /// `phi := f`. Strict convexity of `f` is the caller's responsibility.
    ObjectiveAsKernel(Arc<Objective>),
}

impl Kernel {
    pub fn id(&self) -> KernelId {
        match self {
            Kernel::Euclidean => KernelId::Euclidean,
            Kernel::Entropy => KernelId::Entropy,
            Kernel::Burg => KernelId::Burg,
            Kernel::Quartic => KernelId::Quartic,
            Kernel::QuarticScaled { .. } => KernelId::QuarticScaled,
            Kernel::ObjectiveAsKernel(_) => KernelId::ObjectiveAsKernel,
        }
    }

    pub fn domain(&self) -> KernelDomain {
        match self {
            Kernel::Entropy => KernelDomain::NonnegativeOrthant,
            Kernel::Burg => KernelDomain::PositiveOrthant,
            _ => KernelDomain::AllReals,
        }
    }

    fn quartic_weights(&self) -> Option<(f64, f64)> {
        match self {
            Kernel::Quartic => Some((0.25, 1.0)),
            Kernel::QuarticScaled { c } => Some((0.75, *c)),
            _ => None,
        }
    }

    /// True when `grad phi(x)` exists, i.e. `x` lies in the interior of the domain.
    pub fn in_interior(&self, x: &DensePoint) -> bool {
        match self.domain() {
            KernelDomain::AllReals => true,
            _ => x.data().iter().all(|&v| v > 0.0),
        }
    }

    /// `phi(x)`. Returns `+inf` for points on the boundary where `phi` blows up
    /// (Burg at a zero coordinate).
    pub fn value(&self, x: &DensePoint) -> Result<f64> {
        match self {
            Kernel::Euclidean => Ok(0.5 * x.norm_sq()),
            Kernel::Entropy => {
                let mut s = 0.0;
                for (j, &v) in x.data().iter().enumerate() {
                    if v < 0.0 {
                        return Err(negative_coordinate("entropy", j, v));
                    }
                    if v > 0.0 {
                        s += v * v.ln();
                    }
                }
                Ok(s)
            }
            Kernel::Burg => {
                let mut s = 0.0;
                for (j, &v) in x.data().iter().enumerate() {
                    if v < 0.0 {
                        return Err(negative_coordinate("Burg", j, v));
                    }
                    if v == 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    s -= v.ln();
                }
                Ok(s)
            }
            Kernel::Quartic | Kernel::QuarticScaled { .. } => {
                let (a, b) = self.quartic_weights().unwrap();
                let s = x.norm_sq();
                Ok(a * s * s + 0.5 * b * s)
            }
            Kernel::ObjectiveAsKernel(f) => f.value(x),
        }
    }

    pub fn gradient(&self, x: &DensePoint) -> Result<DensePoint> {
        match self {
            Kernel::Euclidean => Ok(x.clone()),
            Kernel::Entropy => {
                let mut g = x.clone();
                for (j, v) in g.data_mut().iter_mut().enumerate() {
                    if *v <= 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "entropy gradient undefined at coordinate {j} = {v}"
                        )));
                    }
                    *v = v.ln() + 1.0;
                }
                Ok(g)
            }
            Kernel::Burg => {
                let mut g = x.clone();
                for (j, v) in g.data_mut().iter_mut().enumerate() {
                    if *v <= 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "Burg gradient undefined at coordinate {j} = {v}"
                        )));
                    }
                    *v = -1.0 / *v;
                }
                Ok(g)
            }
            Kernel::Quartic | Kernel::QuarticScaled { .. } => {
                let (a, b) = self.quartic_weights().unwrap();
                let s = x.norm_sq();
                Ok(x.scaled(4.0 * a * s + b))
            }
            Kernel::ObjectiveAsKernel(f) => f.gradient(x),
        }
    }

    /// Bregman divergence `D_phi(x, y)`; `y` must be interior.
    pub fn divergence(&self, x: &DensePoint, y: &DensePoint) -> Result<f64> {
        x.same_shape(y)?;
        let raw = match self {
            Kernel::Euclidean => 0.5 * x.sub(y).norm_sq(),
            Kernel::Entropy => {
                let mut s = 0.0;
                for (j, (&xi, &yi)) in x.data().iter().zip(y.data()).enumerate() {
                    if xi < 0.0 {
                        return Err(negative_coordinate("entropy", j, xi));
                    }
                    if yi <= 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "entropy divergence needs interior base point, coordinate {j} = {yi}"
                        )));
                    }
                    s += if xi > 0.0 {
                        xi * (xi / yi).ln() - xi + yi
                    } else {
                        yi
                    };
                }
                s
            }
            Kernel::Burg => {
                let mut s = 0.0;
                for (j, (&xi, &yi)) in x.data().iter().zip(y.data()).enumerate() {
                    if xi < 0.0 {
                        return Err(negative_coordinate("Burg", j, xi));
                    }
                    if yi <= 0.0 {
                        return Err(Error::DomainViolation(format!(
                            "Burg divergence needs interior base point, coordinate {j} = {yi}"
                        )));
                    }
                    if xi == 0.0 {
                        return Ok(f64::INFINITY);
                    }
                    let r = xi / yi;
                    s += r - r.ln() - 1.0;
                }
                s
            }
            Kernel::Quartic | Kernel::QuarticScaled { .. } => {
                // With d = x - y: ||x||^4 - ||y||^4 - 4||y||^2 <y, d>
                //   = 4 <y,d>^2 + ||d||^4 + 2 ||y||^2 ||d||^2 + 4 <y,d> ||d||^2
                let (a, b) = self.quartic_weights().unwrap();
                let d = x.sub(y);
                let sy = y.norm_sq();
                let p = y.dot(&d);
                let q = d.norm_sq();
                a * (4.0 * p * p + q * q + 2.0 * sy * q + 4.0 * p * q) + 0.5 * b * q
            }
            Kernel::ObjectiveAsKernel(f) => f.divergence(x, y)?,
        };
        if raw < 0.0 {
            let scale = 1.0 + self.value(x)?.abs();
            if raw >= -NEG_CLAMP * scale {
                return Ok(0.0);
            }
        }
        Ok(raw)
    }
}

fn negative_coordinate(name: &str, j: usize, v: f64) -> Error {
    Error::DomainViolation(format!(
        "{name} kernel undefined at negative coordinate {j} = {v}"
    ))
}

/// Descending grid `1.00, 0.95, ..., 0.05` searched by [`estimate_nu`].
pub fn nu_grid() -> Vec<f64> {
    (1..=20).rev().map(|k| k as f64 / 20.0).collect()
}

/// Additive slack in the scaling inequality check.
pub const NU_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Serialize)]
pub struct NuSample {
    pub x: DensePoint,
    pub y: DensePoint,
    pub gamma: f64,
    /// Largest exponent for which this sample satisfies the inequality (no slack).
    pub implied_nu: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NuEstimate {
    pub nu_hat: f64,
    /// The sample with the smallest implied exponent.
    pub worst: Option<NuSample>,
    pub pairs_checked: usize,
}

/// Sample-based estimate of the scaling exponent `nu` with
/// `D((1 - g) x + g y, x) <= g^(1 + nu) D(y, x)`.
///
/// The result is the largest grid value consistent with every sample. It is an
/// upper bound on the usable exponent, not a certificate.
pub fn estimate_nu(
    kernel: &Kernel,
    region: &Region,
    n_pairs: usize,
    gamma_grid: &[f64],
    seed: u64,
) -> Result<NuEstimate> {
    estimate_nu_with(
        kernel,
        region,
        n_pairs,
        gamma_grid,
        seed,
        Execution::default(),
    )
}

pub fn estimate_nu_with(
    kernel: &Kernel,
    region: &Region,
    n_pairs: usize,
    gamma_grid: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<NuEstimate> {
    if n_pairs == 0 {
        return Err(Error::InvalidConstant("n_pairs must be positive".into()));
    }
    if gamma_grid.is_empty() || gamma_grid.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
        return Err(Error::InvalidConstant(
            "gamma grid must be non-empty and inside (0, 1)".into(),
        ));
    }

    // Per pair: (x, y, base divergence, [(gamma, lhs)]).
    let samples = par::map_range(exec, n_pairs, |i| -> Result<_> {
        let mut rng = par::stream_rng(seed, i as u64);
        let x = region.sample_interior(&mut rng);
        let y = region.sample_interior(&mut rng);
        let base = kernel.divergence(&y, &x)?;
        let mut rows = Vec::with_capacity(gamma_grid.len());
        for &g in gamma_grid {
            let mid = x.toward(&y, g);
            rows.push((g, kernel.divergence(&mid, &x)?));
        }
        Ok((x, y, base, rows))
    });
    let samples = samples.into_iter().collect::<Result<Vec<_>>>()?;

    let mut worst: Option<NuSample> = None;
    for (x, y, base, rows) in &samples {
        if *base <= 0.0 {
            continue;
        }
        for &(g, lhs) in rows {
            let implied = if lhs <= 0.0 {
                f64::INFINITY
            } else {
                (lhs / base).ln() / g.ln() - 1.0
            };
            if worst.as_ref().is_none_or(|w| implied < w.implied_nu) {
                worst = Some(NuSample {
                    x: x.clone(),
                    y: y.clone(),
                    gamma: g,
                    implied_nu: implied,
                });
            }
        }
    }

    let grid = nu_grid();
    for &nu in &grid {
        let ok = samples.iter().all(|(_, _, base, rows)| {
            rows.iter()
                .all(|&(g, lhs)| lhs <= g.powf(1.0 + nu) * base + NU_SLACK)
        });
        if ok {
            return Ok(NuEstimate {
                nu_hat: nu,
                worst,
                pairs_checked: samples.len(),
            });
        }
    }
    Err(Error::NoValidNu(*grid.last().unwrap()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn v(x: &[f64]) -> DensePoint {
        DensePoint::vector(x.to_vec())
    }

    #[test]
    fn phi_values() {
        assert_eq!(Kernel::Euclidean.value(&v(&[3.0, 4.0])).unwrap(), 12.5);
        assert_eq!(Kernel::Entropy.value(&v(&[1.0, 0.0])).unwrap(), 0.0);
        assert_eq!(Kernel::Quartic.value(&v(&[1.0, 1.0])).unwrap(), 2.0);
        assert_eq!(Kernel::Burg.value(&v(&[0.0, 1.0])).unwrap(), f64::INFINITY);
        assert!(matches!(
            Kernel::Entropy.value(&v(&[-0.1])),
            Err(Error::DomainViolation(_))
        ));
        assert!(matches!(
            Kernel::Burg.value(&v(&[-0.1])),
            Err(Error::DomainViolation(_))
        ));
        // 3/4 * 4 + 2/2 * 2
        assert_eq!(
            Kernel::QuarticScaled { c: 2.0 }
                .value(&v(&[1.0, 1.0]))
                .unwrap(),
            5.0
        );
    }

    #[test]
    fn divergence_examples() {
        let d = Kernel::Euclidean
            .divergence(&v(&[1.0, 0.0]), &v(&[0.0, 0.0]))
            .unwrap();
        assert_eq!(d, 0.5);
        let d = Kernel::Entropy
            .divergence(&v(&[0.5, 0.5]), &v(&[0.5, 0.5]))
            .unwrap();
        assert_eq!(d, 0.0);
        let d = Kernel::Burg.divergence(&v(&[2.0]), &v(&[1.0])).unwrap();
        assert!((d - 0.306_852_819_440_054_7).abs() < 1e-15);
        assert!(Kernel::Entropy.divergence(&v(&[0.5]), &v(&[0.0])).is_err());
    }

    fn phi_definition(k: &Kernel, x: &DensePoint, y: &DensePoint) -> f64 {
        k.value(x).unwrap() - k.value(y).unwrap() - k.gradient(y).unwrap().dot(&x.sub(y))
    }

    #[test]
    fn closed_forms_match_definition() {
        let mut rng = par::stream_rng(3, 0);
        for k in [
            Kernel::Euclidean,
            Kernel::Entropy,
            Kernel::Burg,
            Kernel::Quartic,
            Kernel::QuarticScaled { c: 3.0 },
        ] {
            for _ in 0..200 {
                let x = v(&(0..4)
                    .map(|_| rng.random_range(0.05..2.0))
                    .collect::<Vec<_>>());
                let y = v(&(0..4)
                    .map(|_| rng.random_range(0.05..2.0))
                    .collect::<Vec<_>>());
                let a = k.divergence(&x, &y).unwrap();
                let b = phi_definition(&k, &x, &y);
                assert!(
                    (a - b).abs() <= 1e-10 * (1.0 + b.abs()),
                    "{k:?}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = par::stream_rng(4, 0);
        for k in [
            Kernel::Euclidean,
            Kernel::Entropy,
            Kernel::Burg,
            Kernel::Quartic,
            Kernel::QuarticScaled { c: 0.5 },
        ] {
            for _ in 0..100 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(0.1..3.0)).collect();
                let g = k.gradient(&v(&x)).unwrap();
                for j in 0..5 {
                    let h = 1e-5 * (1.0 + x[j].abs());
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let fd = (k.value(&v(&xp)).unwrap() - k.value(&v(&xm)).unwrap()) / (2.0 * h);
                    let gj = g.data()[j];
                    assert!(
                        (fd - gj).abs() <= 1e-6 * gj.abs().max(1.0),
                        "{k:?} {fd} {gj}"
                    );
                }
            }
        }
    }

    #[test]
    fn divergence_nonnegative_and_zero_only_on_diagonal() {
        let mut rng = par::stream_rng(5, 0);
        for k in [
            Kernel::Euclidean,
            Kernel::Entropy,
            Kernel::Burg,
            Kernel::Quartic,
        ] {
            for _ in 0..1000 {
                let x = v(&(0..3)
                    .map(|_| rng.random_range(0.01..2.0))
                    .collect::<Vec<_>>());
                let y = v(&(0..3)
                    .map(|_| rng.random_range(0.01..2.0))
                    .collect::<Vec<_>>());
                let d = k.divergence(&x, &y).unwrap();
                assert!(d >= 0.0);
                if d == 0.0 {
                    assert!(x.sub(&y).norm() <= 1e-12);
                }
                assert_eq!(k.divergence(&x, &x).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn euclidean_scaling_is_exact() {
        let mut rng = par::stream_rng(6, 0);
        for _ in 0..500 {
            let x = v(&(0..6)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect::<Vec<_>>());
            let y = v(&(0..6)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect::<Vec<_>>());
            let g: f64 = rng.random_range(0.01..0.99);
            let base = Kernel::Euclidean.divergence(&y, &x).unwrap();
            let lhs = Kernel::Euclidean.divergence(&x.toward(&y, g), &x).unwrap();
            assert!((lhs - g * g * base).abs() <= 1e-12 * base);
        }
    }

    #[test]
    fn strict_midpoint_convexity() {
        let mut rng = par::stream_rng(7, 0);
        for k in [
            Kernel::Euclidean,
            Kernel::Entropy,
            Kernel::Burg,
            Kernel::Quartic,
        ] {
            for _ in 0..500 {
                let x = v(&(0..3)
                    .map(|_| rng.random_range(0.05..2.0))
                    .collect::<Vec<_>>());
                let y = v(&(0..3)
                    .map(|_| rng.random_range(0.05..2.0))
                    .collect::<Vec<_>>());
                let lam: f64 = rng.random_range(0.01..0.99);
                let mid = y.toward(&x, lam);
                let lhs = k.value(&mid).unwrap();
                let rhs = lam * k.value(&x).unwrap() + (1.0 - lam) * k.value(&y).unwrap();
                assert!(lhs <= rhs + 1e-12);
                if x.sub(&y).norm() > 1e-3 {
                    assert!(lhs < rhs);
                }
            }
        }
    }

    #[test]
    fn nu_grid_shape() {
        let g = nu_grid();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[19], 0.05);
    }

    #[test]
    fn estimate_nu_rejects_bad_grid() {
        let r = Region::Box {
            lower: vec![0.0; 2],
            upper: vec![1.0; 2],
        };
        assert!(estimate_nu(&Kernel::Euclidean, &r, 10, &[0.0, 0.5], 1).is_err());
        assert!(estimate_nu(&Kernel::Euclidean, &r, 10, &[1.0], 1).is_err());
    }
}
