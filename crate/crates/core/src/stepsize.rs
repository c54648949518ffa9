//! Step-size rules.
//!
//! Every rule moves along a direction `d` as `x+ = x - gamma d`, with
//! `gap = <grad f(x), d>` and a reference vertex `v` whose divergence
//! `D_phi(v, x)` scales the model. Frank-Wolfe steps use `d = x - v`; away
//! steps use `d = v_away - x` with `v = v_away`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::objectives::Objective;
use crate::point::DensePoint;

/// Upper cap on `gamma_max` for away steps whose weight is close to one.
pub const GAMMA_MAX_CAP: f64 = 1e12;

/// Relative slack in the scaling check that decides whether `kappa` shrinks.
const SCALING_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveParams {
    pub beta: f64,
    pub eta: f64,
    pub tau: f64,
    /// Initial smoothness estimate `L_{-1}`.
    pub l_init: f64,
    pub kappa_min: f64,
    pub max_inner: usize,
    /// Shrink `kappa` on every rejection instead of only when the scaling
    /// inequality fails at the trial point.
    pub strict_alg2: bool,
}

impl Default for AdaptiveParams {
    fn default() -> Self {
        Self {
            beta: 0.9,
            eta: 0.9,
            tau: 2.0,
            l_init: 1.0,
            kappa_min: 0.05,
            max_inner: 200,
            strict_alg2: false,
        }
    }
}

impl AdaptiveParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConstant(m));
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return bad(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("eta must lie in (0, 1], got {}", self.eta));
        }
        if !(self.tau > 1.0 && self.tau.is_finite()) {
            return bad(format!("tau must exceed 1, got {}", self.tau));
        }
        if !(self.l_init > 0.0 && self.l_init.is_finite()) {
            return bad(format!("l_init must be positive, got {}", self.l_init));
        }
        if !(self.kappa_min > 0.0 && self.kappa_min <= 1.0) {
            return bad(format!(
                "kappa_min must lie in (0, 1], got {}",
                self.kappa_min
            ));
        }
        if self.max_inner == 0 {
            return bad("max_inner must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepRule {
    BregmanShort {
        l: f64,
        nu: f64,
    },
    AdaptiveBregman(AdaptiveParams),
    /// `2 / (t + 2)`
    OpenLoop,
    /// Constant `1 / (T + 1)^(1 / (1 + nu))`.
    FixedNonconvex {
        horizon: usize,
        nu: f64,
    },
    /// Adaptive search on the Euclidean model `M/2 gamma^2 ||d||^2`.
    EuclideanAdaptive(AdaptiveParams),
    /// `gap / (L ||d||^2)`
    EuclideanShort {
        l: f64,
    },
}

impl StepRule {
    pub fn adaptive() -> Self {
        StepRule::AdaptiveBregman(AdaptiveParams::default())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StepRule::BregmanShort { l, nu } => check_l_nu(*l, *nu),
            StepRule::EuclideanShort { l } => check_l_nu(*l, 1.0),
            StepRule::FixedNonconvex { nu, .. } => check_l_nu(1.0, *nu),
            StepRule::AdaptiveBregman(p) | StepRule::EuclideanAdaptive(p) => p.validate(),
            StepRule::OpenLoop => Ok(()),
        }
    }

    pub fn adaptive_params(&self) -> Option<&AdaptiveParams> {
        match self {
            StepRule::AdaptiveBregman(p) | StepRule::EuclideanAdaptive(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub gamma: f64,
    pub l_star: Option<f64>,
    pub nu_star: Option<f64>,
    pub inner_evals: usize,
    pub accepted: bool,
}

impl StepOutcome {
    fn fixed(gamma: f64) -> Self {
        Self {
            gamma,
            l_star: None,
            nu_star: None,
            inner_evals: 0,
            accepted: true,
        }
    }
}

/// Everything a rule may need about the current step.
#[derive(Debug, Clone, Copy)]
pub struct StepInput<'a> {
    pub objective: &'a Objective,
    pub kernel: &'a Kernel,
    pub x: &'a DensePoint,
    pub f_x: f64,
    pub grad: &'a DensePoint,
    pub d: &'a DensePoint,
    pub v: &'a DensePoint,
    pub gap: f64,
    pub gamma_max: f64,
    /// Iteration counter, used by open-loop schedules.
    pub t: usize,
}

fn check_l_nu(l: f64, nu: f64) -> Result<()> {
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidConstant(format!(
            "L must be positive, got {l}"
        )));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::InvalidConstant(format!(
            "nu must lie in (0, 1], got {nu}"
        )));
    }
    Ok(())
}

/// `(gap / (l (1 + nu) div))^(1 / nu)` clamped to `gamma_max`, for positive
/// `gap` and `div`. The `nu == 1` path is a single division.
fn model_gamma(l: f64, nu: f64, gap: f64, div: f64, gamma_max: f64) -> f64 {
    let g = if nu == 1.0 {
        gap / (l * (1.0 + nu) * div)
    } else if nu < 0.3 {
        ((gap.ln() - l.ln() - nu.ln_1p() - div.ln()) / nu).exp()
    } else {
        (gap / (l * (1.0 + nu) * div)).powf(1.0 / nu)
    };
    g.min(gamma_max)
}

/// Short step `min{(gap / (L (1 + nu) div))^(1/nu), gamma_max}`.
pub fn bregman_short_gamma(l: f64, nu: f64, gap: f64, div: f64, gamma_max: f64) -> Result<f64> {
    check_l_nu(l, nu)?;
    if !(gap > 0.0) {
        return Ok(0.0);
    }
    if div == 0.0 {
        return Ok(gamma_max);
    }
    Ok(model_gamma(l, nu, gap, div, gamma_max))
}

pub fn open_loop_gamma(t: usize) -> f64 {
    2.0 / (2.0 + t as f64)
}

pub fn fixed_nonconvex_gamma(horizon: usize, nu: f64) -> f64 {
    1.0 / ((horizon as f64 + 1.0).powf(1.0 / (1.0 + nu)))
}

/// `gamma^(1 + kappa)`, exact product for `kappa == 1`.
fn pow_one_plus(gamma: f64, kappa: f64) -> f64 {
    if kappa == 1.0 {
        gamma * gamma
    } else {
        gamma.powf(1.0 + kappa)
    }
}

/// `D_f(x+, x)` with `f(x)` and `grad f(x)` already known.
fn f_divergence(input: &StepInput<'_>, x_plus: &DensePoint) -> Result<f64> {
    match input.objective {
        Objective::Quadratic { .. } => input.objective.divergence(x_plus, input.x),
        f => {
            let diff = x_plus.sub(input.x);
            Ok(f.value(x_plus)? - input.f_x - input.grad.dot(&diff))
        }
    }
}

/// Adaptive Bregman step: backtracks on `M` (and, when the scaling inequality
/// fails, on the exponent `kappa`) until
/// `D_f(x+, x) <= M gamma^(1 + kappa) D_phi(v, x)`.
pub fn adaptive_bregman_step(
    input: &StepInput<'_>,
    l_prev: f64,
    params: &AdaptiveParams,
) -> Result<StepOutcome> {
    if !(input.gap > 0.0) {
        return Ok(StepOutcome {
            gamma: 0.0,
            l_star: Some(l_prev),
            nu_star: Some(1.0),
            inner_evals: 0,
            accepted: true,
        });
    }
    let div = input.kernel.divergence(input.v, input.x)?;
    let mut m = params.eta * l_prev;
    let mut kappa = 1.0;
    let mut floor_hits = 0usize;
    for evals in 1..=params.max_inner {
        let gamma = if div == 0.0 {
            input.gamma_max
        } else {
            model_gamma(m, kappa, input.gap, div, input.gamma_max)
        };
        let x_plus = input.x.step_along(input.d, gamma);
        let gk = pow_one_plus(gamma, kappa);
        let df = f_divergence(input, &x_plus)?;
        if df <= m * gk * div {
            if floor_hits > 1 {
                log::warn!(
                    "kappa held at its floor {} during {floor_hits} rejections",
                    params.kappa_min
                );
            }
            return Ok(StepOutcome {
                gamma,
                l_star: Some(m),
                nu_star: Some(kappa),
                inner_evals: evals,
                accepted: true,
            });
        }
        m *= params.tau;
        let shrink = params.strict_alg2 || {
            let dphi = input.kernel.divergence(&x_plus, input.x)?;
            dphi > gk * div * (1.0 + SCALING_SLACK)
        };
        if shrink {
            kappa = (params.beta * kappa).max(params.kappa_min);
            if kappa == params.kappa_min {
                floor_hits += 1;
            }
        }
    }
    Err(Error::LineSearchDiverged(params.max_inner))
}

/// Euclidean adaptive baseline: the same search with `D_phi(v, x)` replaced by
/// `1/2 ||d||^2` and the exponent fixed at one.
pub fn euclidean_adaptive_step(
    input: &StepInput<'_>,
    l_prev: f64,
    params: &AdaptiveParams,
) -> Result<StepOutcome> {
    if !(input.gap > 0.0) {
        return Ok(StepOutcome {
            gamma: 0.0,
            l_star: Some(l_prev),
            nu_star: Some(1.0),
            inner_evals: 0,
            accepted: true,
        });
    }
    let dd = input.d.norm_sq();
    let mut m = params.eta * l_prev;
    for evals in 1..=params.max_inner {
        let gamma = if dd == 0.0 {
            input.gamma_max
        } else {
            (input.gap / (m * dd)).min(input.gamma_max)
        };
        let x_plus = input.x.step_along(input.d, gamma);
        let df = f_divergence(input, &x_plus)?;
        if df <= m * (gamma * gamma) * (0.5 * dd) {
            return Ok(StepOutcome {
                gamma,
                l_star: Some(m),
                nu_star: Some(1.0),
                inner_evals: evals,
                accepted: true,
            });
        }
        m *= params.tau;
    }
    Err(Error::LineSearchDiverged(params.max_inner))
}

/// Step size for `rule`. `l_prev` is the warm-start estimate carried by the
/// solver for adaptive rules.
pub fn compute_step(
    rule: &StepRule,
    input: &StepInput<'_>,
    l_prev: Option<f64>,
) -> Result<StepOutcome> {
    match rule {
        StepRule::BregmanShort { l, nu } => {
            let div = input.kernel.divergence(input.v, input.x)?;
            let gamma = bregman_short_gamma(*l, *nu, input.gap, div, input.gamma_max)?;
            Ok(StepOutcome {
                gamma,
                l_star: Some(*l),
                nu_star: Some(*nu),
                inner_evals: 0,
                accepted: true,
            })
        }
        StepRule::EuclideanShort { l } => {
            let dd = input.d.norm_sq();
            let gamma = if !(input.gap > 0.0) {
                0.0
            } else if dd == 0.0 {
                input.gamma_max
            } else {
                (input.gap / (l * dd)).min(input.gamma_max)
            };
            Ok(StepOutcome {
                gamma,
                l_star: Some(*l),
                nu_star: Some(1.0),
                inner_evals: 0,
                accepted: true,
            })
        }
        StepRule::OpenLoop => Ok(StepOutcome::fixed(
            open_loop_gamma(input.t).min(input.gamma_max),
        )),
        StepRule::FixedNonconvex { horizon, nu } => Ok(StepOutcome::fixed(
            fixed_nonconvex_gamma(*horizon, *nu).min(input.gamma_max),
        )),
        StepRule::AdaptiveBregman(p) => adaptive_bregman_step(input, l_prev.unwrap_or(p.l_init), p),
        StepRule::EuclideanAdaptive(p) => {
            euclidean_adaptive_step(input, l_prev.unwrap_or(p.l_init), p)
        }
    }
}

/// Upper bound on the cumulative number of acceptance-test evaluations after
/// `t + 1` adaptive steps.
pub fn linesearch_budget_bound(
    t: usize,
    eta: f64,
    tau: f64,
    beta: f64,
    nu: f64,
    l: f64,
    l_init: f64,
) -> f64 {
    let steps = t as f64 + 1.0;
    let first = (1.0 - eta.ln() / tau.ln()) * steps + (tau * l / l_init).ln().max(0.0) / tau.ln();
    let second = (1.0 + nu.ln() / beta.ln()) * steps;
    first.max(second)
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

    #[test]
    fn short_step_examples() {
        assert_eq!(bregman_short_gamma(2.0, 1.0, 4.0, 2.0, 1.0).unwrap(), 0.5);
        assert_eq!(bregman_short_gamma(2.0, 1.0, 0.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(bregman_short_gamma(1.0, 1.0, 100.0, 1.0, 1.0).unwrap(), 1.0);
        assert_eq!(bregman_short_gamma(1.0, 1.0, 1.0, 0.0, 0.7).unwrap(), 0.7);
        assert!(bregman_short_gamma(0.0, 1.0, 1.0, 1.0, 1.0).is_err());
        assert!(bregman_short_gamma(1.0, 1.5, 1.0, 1.0, 1.0).is_err());
        // The log-domain path agrees with the direct power.
        let direct = (0.01f64 / (3.0 * 1.2 * 0.5)).powf(1.0 / 0.2);
        let got = bregman_short_gamma(3.0, 0.2, 0.01, 0.5, 1.0).unwrap();
        assert!((got - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn schedules() {
        assert_eq!(open_loop_gamma(0), 1.0);
        assert_eq!(open_loop_gamma(2), 0.5);
        assert!((open_loop_gamma(998) - 0.002).abs() < 1e-18);
        assert_eq!(fixed_nonconvex_gamma(0, 1.0), 1.0);
        assert_eq!(fixed_nonconvex_gamma(3, 1.0), 0.5);
        assert!((fixed_nonconvex_gamma(7, 1.0) - 0.353_553_390_593_273_8).abs() < 1e-15);
    }

    #[test]
    fn budget_examples() {
        let coef = 1.0 - 0.9f64.ln() / 2.0f64.ln();
        assert!(coef <= 1.16 && coef > 1.15);
        let b = linesearch_budget_bound(99, 0.9, 2.0, 0.9, 1.0, 1.0, 1.0);
        assert!((b - (coef * 100.0 + 1.0)).abs() < 1e-12);
        assert!((b - 116.2).abs() < 0.05);
        let second = linesearch_budget_bound(9, 1.0, 2.0, 0.9, 1.0, 1e-9, 1.0);
        assert_eq!(second, 10.0);
    }

    fn input<'a>(
        f: &'a Objective,
        k: &'a Kernel,
        x: &'a DensePoint,
        g: &'a DensePoint,
        d: &'a DensePoint,
        v: &'a DensePoint,
    ) -> StepInput<'a> {
        StepInput {
            objective: f,
            kernel: k,
            x,
            f_x: f.value(x).unwrap(),
            grad: g,
            d,
            v,
            gap: g.dot(d),
            gamma_max: 1.0,
            t: 0,
        }
    }

    #[test]
    fn adaptive_accepts_first_try() {
        let f = half_norm_sq(2);
        let k = Kernel::Euclidean;
        let x = DensePoint::vector(vec![1.0, 0.0]);
        let v = DensePoint::vector(vec![-1.0, 0.0]);
        let g = f.gradient(&x).unwrap();
        let d = x.sub(&v);
        let p = AdaptiveParams {
            eta: 1.0,
            ..Default::default()
        };
        let out = adaptive_bregman_step(&input(&f, &k, &x, &g, &d, &v), 1.0, &p).unwrap();
        assert_eq!(out.gamma, 0.5);
        assert_eq!(out.inner_evals, 1);
        assert_eq!(out.l_star, Some(1.0));
    }

    #[test]
    fn adaptive_backtracks_from_low_estimate() {
        let f = half_norm_sq(2);
        let k = Kernel::Euclidean;
        let x = DensePoint::vector(vec![1.0, 0.0]);
        let v = DensePoint::vector(vec![-1.0, 0.0]);
        let g = f.gradient(&x).unwrap();
        let d = x.sub(&v);
        let p = AdaptiveParams {
            eta: 1.0,
            ..Default::default()
        };
        let inp = input(&f, &k, &x, &g, &d, &v);
        let out = adaptive_bregman_step(&inp, 0.25, &p).unwrap();
        assert!(out.inner_evals >= 2);
        assert_eq!(out.nu_star, Some(1.0));
        let base = euclidean_adaptive_step(&inp, 0.25, &p).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn strict_variant_shrinks_kappa() {
        let f = half_norm_sq(2);
        let k = Kernel::Euclidean;
        let x = DensePoint::vector(vec![1.0, 0.0]);
        let v = DensePoint::vector(vec![-1.0, 0.0]);
        let g = f.gradient(&x).unwrap();
        let d = x.sub(&v);
        let p = AdaptiveParams {
            eta: 1.0,
            strict_alg2: true,
            ..Default::default()
        };
        let out = adaptive_bregman_step(&input(&f, &k, &x, &g, &d, &v), 0.25, &p).unwrap();
        assert!(out.nu_star.unwrap() < 1.0);
    }
}
