//! Empirical checks of smoothness inequalities, gradients, rates and bounds.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::kernels::Kernel;
use crate::objectives::Objective;
use crate::par::{self, Execution};
use crate::point::DensePoint;
use crate::problem::IterationRecord;
use crate::stepsize::{linesearch_budget_bound, AdaptiveParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DescentCheck {
    pub violations: usize,
    /// Largest `|D_f(x, y)| / D_phi(x, y)` seen: an empirical smoothness constant.
    pub worst_ratio: f64,
    pub pairs: usize,
}

/// Counts sampled interior pairs violating `|D_f(x, y)| <= L D_phi(x, y)` beyond
/// an additive slack of `1e-9 (1 + |f(x)|)`.
pub fn check_descent_lemma(
    objective: &Objective,
    kernel: &Kernel,
    l: f64,
    region: &Region,
    n_pairs: usize,
    seed: u64,
) -> Result<DescentCheck> {
    check_descent_lemma_with(
        objective,
        kernel,
        l,
        region,
        n_pairs,
        seed,
        Execution::default(),
    )
}

pub fn check_descent_lemma_with(
    objective: &Objective,
    kernel: &Kernel,
    l: f64,
    region: &Region,
    n_pairs: usize,
    seed: u64,
    exec: Execution,
) -> Result<DescentCheck> {
    if !(l > 0.0) {
        return Err(Error::InvalidConstant(format!(
            "L must be positive, got {l}"
        )));
    }
    let per_pair = par::map_range(exec, n_pairs, |i| -> Result<(bool, f64)> {
        let mut rng = par::stream_rng(seed, i as u64);
        let x = region.sample_interior(&mut rng);
        let y = region.sample_interior(&mut rng);
        let df = objective.divergence(&x, &y)?;
        let dphi = kernel.divergence(&x, &y)?;
        let slack = 1e-9 * (1.0 + objective.value(&x)?.abs());
        let ratio = if dphi > 0.0 { df.abs() / dphi } else { 0.0 };
        Ok((df.abs() > l * dphi + slack, ratio))
    });
    let mut out = DescentCheck {
        violations: 0,
        worst_ratio: 0.0,
        pairs: n_pairs,
    };
    for r in per_pair {
        let (bad, ratio) = r?;
        out.violations += bad as usize;
        out.worst_ratio = out.worst_ratio.max(ratio);
    }
    Ok(out)
}

/// Max over coordinates of `|central difference - grad_j|`, relative to
/// `max(||grad||_inf, 1e-12)`. Steps are `h_j = 1e-5 (1 + |x_j|)`.
pub fn gradient_fd_check(objective: &Objective, x: &DensePoint) -> Result<f64> {
    let g = objective.gradient(x)?;
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for j in 0..x.len() {
        let xj = x.data()[j];
        let h = 1e-5 * (1.0 + xj.abs());
        probe.data_mut()[j] = xj + h;
        let fp = objective.value(&probe)?;
        probe.data_mut()[j] = xj - h;
        let fm = objective.value(&probe)?;
        probe.data_mut()[j] = xj;
        worst = worst.max(((fp - fm) / (2.0 * h) - g.data()[j]).abs());
    }
    Ok(worst / g.max_abs().max(1e-12))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateModel {
    PowerLaw,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    /// Slope of `log gap` against `log t` (power law) or the per-iteration
    /// ratio `exp(slope)` of `log gap` against `t` (geometric).
    pub exponent_or_ratio: f64,
    pub r_squared: f64,
    pub window: (usize, usize),
}

/// Which record series to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapField {
    FwGap,
    Primal { f_star: f64 },
}

impl GapField {
    fn of(&self, r: &IterationRecord) -> f64 {
        match self {
            GapField::FwGap => r.fw_gap,
            GapField::Primal { f_star } => r.primal - f_star,
        }
    }
}

/// Least squares of `y` on `x`: `(slope, intercept, r^2)`. A constant `y` fits
/// perfectly.
fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if ss_tot <= f64::EPSILON * f64::EPSILON * n * (1.0 + my * my) {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Fits `(t, gap)` pairs with both models and returns the better one; ties go
/// to the power law. Points with `t = 0` are skipped.
pub fn fit_series(ts: &[usize], gaps: &[f64]) -> Result<RateFit> {
    let pts: Vec<(usize, f64)> = ts
        .iter()
        .copied()
        .zip(gaps.iter().copied())
        .filter(|p| p.0 >= 1)
        .collect();
    if pts.len() < 5 {
        return Err(Error::DegenerateSeries(format!(
            "need at least 5 points with t >= 1, got {}",
            pts.len()
        )));
    }
    if let Some(&(t, g)) = pts.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(Error::DegenerateSeries(format!(
            "gap {g} at t = {t} is not positive"
        )));
    }
    let t_lin: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let t_log: Vec<f64> = t_lin.iter().map(|t| t.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let (b_pow, _, r2_pow) = linear_fit(&t_log, &y);
    let (b_geo, _, r2_geo) = linear_fit(&t_lin, &y);
    let window = (pts[0].0, pts[pts.len() - 1].0);
    Ok(if r2_geo > r2_pow {
        RateFit {
            model: RateModel::Geometric,
            exponent_or_ratio: b_geo.exp(),
            r_squared: r2_geo,
            window,
        }
    } else {
        RateFit {
            model: RateModel::PowerLaw,
            exponent_or_ratio: b_pow,
            r_squared: r2_pow,
            window,
        }
    })
}

/// Rate fit over records with `t` in `window` (inclusive), by default the last
/// half of the recorded iterations.
pub fn fit_rate(
    records: &[IterationRecord],
    field: GapField,
    window: Option<(usize, usize)>,
) -> Result<RateFit> {
    let Some(last) = records.last() else {
        return Err(Error::DegenerateSeries("no records".into()));
    };
    let (lo, hi) = window.unwrap_or((last.t / 2, last.t));
    let sel: Vec<&IterationRecord> = records.iter().filter(|r| r.t >= lo && r.t <= hi).collect();
    let ts: Vec<usize> = sel.iter().map(|r| r.t).collect();
    let gaps: Vec<f64> = sel.iter().map(|r| field.of(r)).collect();
    fit_series(&ts, &gaps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `2^(1+nu) L D^2 / (t + 2)^nu`
    SublinearConvex,
    /// `2 max{h0, L D^2} / (T + 1)^(nu / (1 + nu))`
    NonconvexGlobal,
    /// `2^(1+nu) mu L D^2 / (rho (t + 2)^nu)`
    LocalSublinear,
}

impl FromStr for BoundKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sublinear_convex" => Ok(BoundKind::SublinearConvex),
            "nonconvex_global" => Ok(BoundKind::NonconvexGlobal),
            "local_sublinear" => Ok(BoundKind::LocalSublinear),
            other => Err(Error::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundParams {
    pub l: f64,
    pub d_sq: f64,
    pub nu: f64,
    /// Iteration `t`, or the horizon `T` for the nonconvex bound.
    pub t: usize,
    pub h0: f64,
    pub mu: f64,
    pub rho: f64,
}

pub fn theorem_bound(kind: BoundKind, p: &BoundParams) -> Result<f64> {
    let positive = |name: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidConstant(format!(
                "{name} must be positive, got {v}"
            )))
        }
    };
    positive("L", p.l)?;
    positive("D^2", p.d_sq)?;
    if !(p.nu > 0.0 && p.nu <= 1.0) {
        return Err(Error::InvalidConstant(format!(
            "nu must lie in (0, 1], got {}",
            p.nu
        )));
    }
    let ld2 = p.l * p.d_sq;
    let t = p.t as f64;
    Ok(match kind {
        BoundKind::SublinearConvex => 2f64.powf(1.0 + p.nu) * ld2 / (t + 2.0).powf(p.nu),
        BoundKind::NonconvexGlobal => {
            if !(p.h0 >= 0.0) {
                return Err(Error::InvalidConstant("h0 must be >= 0".into()));
            }
            2.0 * p.h0.max(ld2) / (t + 1.0).powf(p.nu / (1.0 + p.nu))
        }
        BoundKind::LocalSublinear => {
            positive("mu", p.mu)?;
            positive("rho", p.rho)?;
            2f64.powf(1.0 + p.nu) * p.mu * ld2 / (p.rho * (t + 2.0).powf(p.nu))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundVerdict {
    /// Violations against the bound evaluated with the sampled `D^2`.
    pub raw_violations: usize,
    /// Violations with `D^2` inflated by the safety factor 2.
    pub safe_violations: usize,
    pub checked: usize,
}

/// Checks `f(x_t) - f* <= 2^(1+nu) L D^2 / (t + 2)^nu` on every record.
pub fn check_sublinear_convex(
    records: &[IterationRecord],
    f_star: f64,
    l: f64,
    d_sq: f64,
    nu: f64,
) -> Result<BoundVerdict> {
    let mut v = BoundVerdict {
        raw_violations: 0,
        safe_violations: 0,
        checked: records.len(),
    };
    for r in records {
        let mut p = BoundParams {
            l,
            d_sq,
            nu,
            t: r.t,
            ..Default::default()
        };
        let h = r.primal - f_star;
        let raw = theorem_bound(BoundKind::SublinearConvex, &p)?;
        p.d_sq = 2.0 * d_sq;
        let safe = theorem_bound(BoundKind::SublinearConvex, &p)?;
        v.raw_violations += (h > raw + 1e-12) as usize;
        v.safe_violations += (h > safe + 1e-12) as usize;
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BudgetAudit {
    pub violations: usize,
    pub steps: usize,
    pub total_evals: usize,
    /// Evaluations per step over the whole run.
    pub average: f64,
    /// Largest `n_t / bound_t` seen.
    pub worst_fraction: f64,
}

/// Checks the cumulative evaluation count against
/// [`linesearch_budget_bound`] at every step, taking `L` as the current
/// estimate and `nu` as the current exponent estimate. Records must be
/// complete (`record_every = 1`).
pub fn audit_linesearch_budget(
    records: &[IterationRecord],
    params: &AdaptiveParams,
) -> BudgetAudit {
    let mut n = 0usize;
    let mut out = BudgetAudit {
        violations: 0,
        steps: 0,
        total_evals: 0,
        average: 0.0,
        worst_fraction: 0.0,
    };
    for (step, r) in records.iter().filter(|r| r.l_t.is_some()).enumerate() {
        n += r.inner_evals;
        let l = r.l_t.unwrap();
        let nu = r.nu_t.unwrap_or(1.0);
        let bound = linesearch_budget_bound(
            step,
            params.eta,
            params.tau,
            params.beta,
            nu,
            l,
            params.l_init,
        );
        let slack = 1e-9 * bound;
        if n as f64 > bound + slack {
            out.violations += 1;
        }
        out.worst_fraction = out.worst_fraction.max(n as f64 / bound);
        out.steps = step + 1;
    }
    out.total_evals = n;
    out.average = if out.steps > 0 {
        n as f64 / out.steps as f64
    } else {
        0.0
    };
    out
}

/// True when a run ended above `tol` and its late gaps are not clearly below
/// its mid-run gaps: the median over the last 10% of records is at least 0.9
/// times the median over the 45%-55% window.
pub fn flag_nonconvergence(records: &[IterationRecord], tol: f64) -> bool {
    let Some(last) = records.last() else {
        return false;
    };
    if last.fw_gap <= tol {
        return false;
    }
    let n = records.len();
    if n < 10 {
        return true;
    }
    let slice = |a: f64, b: f64| -> Vec<f64> {
        let lo = (a * n as f64).floor() as usize;
        let hi = ((b * n as f64).ceil() as usize).clamp(lo + 1, n);
        records[lo..hi].iter().map(|r| r.fw_gap).collect()
    };
    median(slice(0.9, 1.0)) >= 0.9 * median(slice(0.45, 0.55))
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Result of comparing the oracle with an independent answer on random directions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LmoAudit {
    pub region: String,
    /// `brute_force` over all vertices, or `closed_form` for balls.
    pub method: &'static str,
    pub directions: usize,
    /// Directions where `<a, lmo(a)>` differs from the reference value by more than `tol`.
    pub mismatches: usize,
    /// Oracle answers outside the region.
    pub infeasible: usize,
    pub worst_abs_diff: f64,
    pub tol: f64,
}

impl LmoAudit {
    pub fn passed(&self) -> bool {
        self.mismatches == 0 && self.infeasible == 0
    }
}

/// Checks the oracle against brute force over enumerated vertices, or against
/// `-sqrt(b) ||a||` (ball) and `-xi sigma_max(A)` (nuclear ball).
pub fn lmo_audit(region: &Region, n_dirs: usize, tol: f64, seed: u64) -> Result<LmoAudit> {
    region.validate()?;
    let shape = region.shape();
    let vertices = if region.is_polytope() {
        Some(region.enumerate_vertices()?)
    } else {
        None
    };
    let mut out = LmoAudit {
        region: region.kind_name().to_string(),
        method: if vertices.is_some() {
            "brute_force"
        } else {
            "closed_form"
        },
        directions: n_dirs,
        mismatches: 0,
        infeasible: 0,
        worst_abs_diff: 0.0,
        tol,
    };
    let mut rng = par::stream_rng(seed, 0x1e0);
    for _ in 0..n_dirs {
        let len: usize = shape.iter().product();
        let a = DensePoint::from_parts(
            (0..len)
                .map(|_| rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal))
                .collect(),
            shape.clone(),
        );
        let v = region.lmo(&a)?;
        let got = a.dot(&v);
        let reference = match (&vertices, region) {
            (Some(vs), _) => vs.iter().map(|u| a.dot(u)).fold(f64::INFINITY, f64::min),
            (None, Region::L2Ball { b_max, .. }) => -b_max.sqrt() * a.norm(),
            (None, Region::NuclearNormBall { xi, .. }) => {
                let s = a.to_nalgebra().singular_values();
                -xi * s.iter().fold(0.0f64, |m, &x| m.max(x))
            }
            _ => unreachable!("every non-polytope region has a closed form"),
        };
        let diff = (got - reference).abs();
        out.worst_abs_diff = out.worst_abs_diff.max(diff);
        out.mismatches += (diff > tol) as usize;
        out.infeasible += (!region.contains(&v, 1e-9)) as usize;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half_norm_sq(n: usize) -> Objective {
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            q[i * n + i] = 1.0;
        }
        Objective::quadratic(DensePoint::matrix(n, n, q), vec![0.0; n], 0.0).unwrap()
    }

    fn unit_box(n: usize) -> Region {
        Region::Box {
            lower: vec![-1.0; n],
            upper: vec![1.0; n],
        }
    }

    #[test]
    fn descent_lemma_examples() {
        let f = half_norm_sq(3);
        let ok = check_descent_lemma(&f, &Kernel::Euclidean, 1.0, &unit_box(3), 200, 1).unwrap();
        assert_eq!(ok.violations, 0);
        assert!(ok.worst_ratio <= 1.0 + 1e-12);
        let bad = check_descent_lemma(&f, &Kernel::Euclidean, 0.5, &unit_box(3), 200, 1).unwrap();
        assert!(bad.violations > 0);
    }

    #[test]
    fn fd_check_quadratic() {
        let f = half_norm_sq(4);
        let x = DensePoint::vector(vec![0.3, -0.7, 0.1, 0.9]);
        assert!(gradient_fd_check(&f, &x).unwrap() <= 1e-9);
    }

    #[test]
    fn synthetic_rates() {
        let ts: Vec<usize> = (1..200).collect();
        let inv: Vec<f64> = ts.iter().map(|&t| 3.0 / t as f64).collect();
        let fit = fit_series(&ts, &inv).unwrap();
        assert_eq!(fit.model, RateModel::PowerLaw);
        assert!((fit.exponent_or_ratio + 1.0).abs() < 0.01);

        let geo: Vec<f64> = ts.iter().map(|&t| 2.0 * 0.9f64.powi(t as i32)).collect();
        let fit = fit_series(&ts, &geo).unwrap();
        assert_eq!(fit.model, RateModel::Geometric);
        assert!((fit.exponent_or_ratio - 0.9).abs() < 0.005);

        let flat = vec![0.5; ts.len()];
        let fit = fit_series(&ts, &flat).unwrap();
        assert!(fit.exponent_or_ratio.abs() < 1e-12);

        assert!(matches!(
            fit_series(&[1, 2, 3], &[1.0, 1.0, 1.0]),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn bound_examples() {
        let p = BoundParams {
            l: 1.0,
            d_sq: 2.0,
            nu: 1.0,
            t: 2,
            ..Default::default()
        };
        assert_eq!(theorem_bound(BoundKind::SublinearConvex, &p).unwrap(), 2.0);
        let p = BoundParams {
            l: 1.0,
            d_sq: 1.0,
            nu: 1.0,
            t: 3,
            h0: 1.0,
            ..Default::default()
        };
        assert_eq!(theorem_bound(BoundKind::NonconvexGlobal, &p).unwrap(), 1.0);
        let p = BoundParams {
            l: 6.0,
            d_sq: 1.0,
            nu: 1.0,
            t: 0,
            mu: 6.0,
            rho: 2.0,
            ..Default::default()
        };
        assert_eq!(theorem_bound(BoundKind::LocalSublinear, &p).unwrap(), 36.0);
        assert!(matches!(
            "hyperbolic".parse::<BoundKind>(),
            Err(Error::UnknownKind(_))
        ));
        assert_eq!(
            "local_sublinear".parse::<BoundKind>().unwrap(),
            BoundKind::LocalSublinear
        );
    }

    #[test]
    fn median_values() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
