//! Compact convex feasible regions with exact linear minimization oracles.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::par::{self, Execution};
use crate::point::DensePoint;

/// Maximum vertex count accepted by [`Region::enumerate_vertices`].
pub const VERTEX_CAP: u128 = 1_000_000;

const POWER_ITER_TOL: f64 = 1e-10;
const POWER_ITER_CAP: usize = 5000;
const FULL_SVD_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Region {
    /// `{x >= 0, sum x <= 1}`
    SimplexLeqOne {
        n: usize,
    },
    /// `{||x||^2 <= b_max}`
    L2Ball {
        n: usize,
        b_max: f64,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `{||x||_1 <= k, ||x||_inf <= 1}`
    KSparse {
        n: usize,
        k: usize,
    },
    /// `{X : ||X||_* <= xi}` over `rows x cols` matrices.
    NuclearNormBall {
        rows: usize,
        cols: usize,
        xi: f64,
    },
    ExplicitPolytope {
        vertices: Vec<DensePoint>,
    },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConstant(m));
        match self {
            Region::SimplexLeqOne { n } | Region::KSparse { n, .. } | Region::L2Ball { n, .. }
                if *n == 0 =>
            {
                bad("region dimension must be positive".into())
            }
            Region::L2Ball { b_max, .. } if !(*b_max > 0.0 && b_max.is_finite()) => {
                bad(format!("b_max must be positive, got {b_max}"))
            }
            Region::Box { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box bounds must be non-empty and of equal length".into());
                }
                if let Some(j) = (0..lower.len()).find(|&j| {
                    !(lower[j] <= upper[j]) || !lower[j].is_finite() || !upper[j].is_finite()
                }) {
                    return bad(format!("box bound {j}: need finite lower <= upper"));
                }
                Ok(())
            }
            Region::KSparse { n, k } if *k == 0 || k > n => bad(format!(
                "k-sparse polytope needs 1 <= K <= n, got K = {k}, n = {n}"
            )),
            Region::NuclearNormBall { rows, cols, xi } => {
                if *rows == 0 || *cols == 0 || !(*xi > 0.0) {
                    return bad("nuclear ball needs positive dimensions and radius".into());
                }
                Ok(())
            }
            Region::ExplicitPolytope { vertices } => {
                let Some(first) = vertices.first() else {
                    return bad("explicit polytope needs at least one vertex".into());
                };
                for v in vertices {
                    first.same_shape(v)?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Region::SimplexLeqOne { n } | Region::L2Ball { n, .. } | Region::KSparse { n, .. } => {
                vec![*n]
            }
            Region::Box { lower, .. } => vec![lower.len()],
            Region::NuclearNormBall { rows, cols, .. } => vec![*rows, *cols],
            Region::ExplicitPolytope { vertices } => vertices[0].shape().to_vec(),
        }
    }

    pub fn is_polytope(&self) -> bool {
        !matches!(self, Region::L2Ball { .. } | Region::NuclearNormBall { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Region::SimplexLeqOne { .. } => "simplex",
            Region::L2Ball { .. } => "l2_ball",
            Region::Box { .. } => "box",
            Region::KSparse { .. } => "k_sparse",
            Region::NuclearNormBall { .. } => "nuclear_ball",
            Region::ExplicitPolytope { .. } => "explicit_polytope",
        }
    }

    /// Conventional starting point: `1/n` on the simplex, the box midpoint, the
    /// vertex mean of an explicit polytope, and the origin otherwise.
    pub fn default_start(&self) -> DensePoint {
        let shape = self.shape();
        match self {
            Region::SimplexLeqOne { n } => DensePoint::filled(&shape, 1.0 / *n as f64),
            Region::Box { lower, upper } => DensePoint::vector(
                lower
                    .iter()
                    .zip(upper)
                    .map(|(l, u)| 0.5 * (l + u))
                    .collect(),
            ),
            Region::ExplicitPolytope { vertices } => {
                let mut x = DensePoint::zeros(&shape);
                for v in vertices {
                    x.axpy(1.0, v);
                }
                x.scale(1.0 / vertices.len() as f64);
                x
            }
            _ => DensePoint::zeros(&shape),
        }
    }

    fn check_shape(&self, a: &DensePoint) -> Result<()> {
        let shape = self.shape();
        if a.shape() != shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: a.shape().to_vec(),
            });
        }
        Ok(())
    }

    /// Linear minimization oracle: a minimizer of `<a, v>` over the region.
    ///
    /// Polytope kinds return a vertex; ties go to the lowest coordinate index
    /// (lowest vertex index for explicit polytopes).
    pub fn lmo(&self, a: &DensePoint) -> Result<DensePoint> {
        self.check_shape(a)?;
        let shape = self.shape();
        let out = match self {
            Region::SimplexLeqOne { .. } => {
                let (j, min) = argmin(a.data());
                if min < 0.0 {
                    DensePoint::basis(&shape, j)
                } else {
                    DensePoint::zeros(&shape)
                }
            }
            Region::L2Ball { b_max, .. } => {
                let norm = a.norm();
                if norm == 0.0 {
                    DensePoint::zeros(&shape)
                } else {
                    a.scaled(-b_max.sqrt() / norm)
                }
            }
            Region::Box { lower, upper } => {
                let data = a
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, &aj)| if aj < 0.0 { upper[j] } else { lower[j] })
                    .collect();
                DensePoint::from_parts(data, shape)
            }
            Region::KSparse { n, k } => {
                let mut idx: Vec<usize> = (0..*n).collect();
                // Stable sort keeps lower indices first among equal magnitudes.
                idx.sort_by(|&i, &j| a.data()[j].abs().total_cmp(&a.data()[i].abs()));
                let mut v = vec![0.0; *n];
                for &i in &idx[..*k] {
                    v[i] = if a.data()[i] < 0.0 { 1.0 } else { -1.0 };
                }
                DensePoint::from_parts(v, shape)
            }
            Region::NuclearNormBall { rows, cols, xi } => {
                match top_singular_pair(a, *rows, *cols) {
                    None => DensePoint::zeros(&shape),
                    Some((u, _, v)) => {
                        let mut data = Vec::with_capacity(rows * cols);
                        for ui in &u {
                            for vj in &v {
                                data.push(-xi * ui * vj);
                            }
                        }
                        DensePoint::from_parts(data, shape)
                    }
                }
            }
            Region::ExplicitPolytope { vertices } => {
                let mut best = 0;
                let mut best_val = f64::INFINITY;
                for (i, v) in vertices.iter().enumerate() {
                    let val = a.dot(v);
                    if val < best_val {
                        best_val = val;
                        best = i;
                    }
                }
                vertices[best].clone()
            }
        };
        Ok(out)
    }

    /// Membership test with additive tolerance on every defining constraint.
    pub fn contains(&self, x: &DensePoint, tol: f64) -> bool {
        if self.check_shape(x).is_err() {
            return false;
        }
        let d = x.data();
        match self {
            Region::SimplexLeqOne { .. } => {
                d.iter().all(|&v| v >= -tol) && d.iter().sum::<f64>() <= 1.0 + tol
            }
            Region::L2Ball { b_max, .. } => x.norm_sq() <= b_max + tol,
            Region::Box { lower, upper } => d
                .iter()
                .enumerate()
                .all(|(j, &v)| v >= lower[j] - tol && v <= upper[j] + tol),
            Region::KSparse { k, .. } => {
                d.iter().all(|v| v.abs() <= 1.0 + tol)
                    && d.iter().map(|v| v.abs()).sum::<f64>() <= *k as f64 + tol
            }
            Region::NuclearNormBall { xi, .. } => nuclear_norm(x) <= xi + tol,
            Region::ExplicitPolytope { vertices } => hull_contains(vertices, x, tol),
        }
    }

    /// Number of vertices of an enumerable region, without enumerating them.
    pub fn vertex_count(&self) -> Result<u128> {
        match self {
            Region::SimplexLeqOne { n } => Ok(*n as u128 + 1),
            Region::Box { lower, upper } => {
                let mut c: u128 = 1;
                for j in 0..lower.len() {
                    if lower[j] != upper[j] {
                        c = c.saturating_mul(2);
                    }
                }
                Ok(c)
            }
            Region::KSparse { n, k } => {
                Ok(binomial(*n as u128, *k as u128).saturating_mul(1u128 << (*k).min(127)))
            }
            Region::ExplicitPolytope { vertices } => Ok(vertices.len() as u128),
            _ => Err(Error::Unsupported(format!(
                "{} has no finite vertex set",
                self.kind_name()
            ))),
        }
    }

    /// Exact vertex set (no duplicates) for small polytopes.
    pub fn enumerate_vertices(&self) -> Result<Vec<DensePoint>> {
        let count = self.vertex_count()?;
        if count > VERTEX_CAP {
            return Err(Error::TooLarge {
                count,
                cap: VERTEX_CAP,
            });
        }
        let shape = self.shape();
        let out = match self {
            Region::SimplexLeqOne { n } => {
                let mut vs = vec![DensePoint::zeros(&shape)];
                vs.extend((0..*n).map(|j| DensePoint::basis(&shape, j)));
                vs
            }
            Region::Box { lower, upper } => {
                let free: Vec<usize> = (0..lower.len()).filter(|&j| lower[j] != upper[j]).collect();
                (0..(1usize << free.len()))
                    .map(|mask| {
                        let mut v = lower.clone();
                        for (bit, &j) in free.iter().enumerate() {
                            if mask >> bit & 1 == 1 {
                                v[j] = upper[j];
                            }
                        }
                        DensePoint::from_parts(v, shape.clone())
                    })
                    .collect()
            }
            Region::KSparse { n, k } => {
                let mut vs = Vec::with_capacity(count as usize);
                for support in combinations(*n, *k) {
                    for signs in 0..(1usize << k) {
                        let mut v = vec![0.0; *n];
                        for (bit, &j) in support.iter().enumerate() {
                            v[j] = if signs >> bit & 1 == 1 { -1.0 } else { 1.0 };
                        }
                        vs.push(DensePoint::from_parts(v, shape.clone()));
                    }
                }
                vs
            }
            Region::ExplicitPolytope { vertices } => {
                let mut vs: Vec<DensePoint> = Vec::new();
                for v in vertices {
                    if !vs.iter().any(|u| u.bit_eq(v)) {
                        vs.push(v.clone());
                    }
                }
                vs
            }
            _ => unreachable!("vertex_count rejects non-polytopes"),
        };
        Ok(out)
    }

    /// A random extreme point: the oracle answer for a Gaussian direction.
    pub fn random_extreme_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DensePoint {
        let shape = self.shape();
        let len = shape.iter().product();
        let dir: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        self.lmo(&DensePoint::from_parts(dir, shape))
            .expect("direction has the region's shape")
    }

    /// A random point in the relative interior (almost surely strictly inside
    /// every inequality that is not tight for the whole region).
    pub fn sample_interior<R: Rng + ?Sized>(&self, rng: &mut R) -> DensePoint {
        let shape = self.shape();
        match self {
            Region::SimplexLeqOne { n } => {
                let e: Vec<f64> = (0..=*n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = e.iter().sum();
                DensePoint::from_parts(e[..*n].iter().map(|v| v / s).collect(), shape)
            }
            Region::L2Ball { n, b_max } => {
                let dir: Vec<f64> = (0..*n).map(|_| rng.sample(StandardNormal)).collect();
                let norm = dir
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
                    .max(f64::MIN_POSITIVE);
                let u: f64 = rng.random_range(0.0..1.0);
                let radius = b_max.sqrt() * u.powf(1.0 / *n as f64) * 0.999;
                DensePoint::from_parts(dir.iter().map(|v| v * radius / norm).collect(), shape)
            }
            Region::Box { lower, upper } => {
                let data = (0..lower.len())
                    .map(|j| {
                        if lower[j] == upper[j] {
                            lower[j]
                        } else {
                            let u: f64 = rng.random_range(0.0..1.0);
                            let u = 1e-9 + (1.0 - 2e-9) * u;
                            lower[j] + u * (upper[j] - lower[j])
                        }
                    })
                    .collect();
                DensePoint::from_parts(data, shape)
            }
            Region::KSparse { .. } | Region::ExplicitPolytope { .. } => {
                let m = 8;
                let w: Vec<f64> = (0..=m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = w.iter().sum();
                // The extra weight pulls toward the origin, which is interior for
                // k-sparse polytopes.
                let mut x = DensePoint::zeros(&shape);
                for wi in &w[..m] {
                    let v = match self {
                        Region::ExplicitPolytope { vertices } => {
                            vertices[rng.random_range(0..vertices.len())].clone()
                        }
                        _ => self.random_extreme_point(rng),
                    };
                    x.axpy(wi / s, &v);
                }
                if let Region::ExplicitPolytope { vertices } = self {
                    x.axpy(w[m] / s, &vertices[0]);
                }
                x
            }
            Region::NuclearNormBall { rows, cols, xi } => {
                let g: Vec<f64> = (0..rows * cols)
                    .map(|_| rng.sample(StandardNormal))
                    .collect();
                let g = DensePoint::from_parts(g, shape);
                let nn = nuclear_norm(&g).max(f64::MIN_POSITIVE);
                let u: f64 = rng.random_range(0.0..1.0);
                g.scaled(xi * u * 0.999 / nn)
            }
        }
    }

    /// Points on the relative boundary used for diameter estimates.
    pub fn boundary_samples<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> Vec<DensePoint> {
        let shape = self.shape();
        let mut out = Vec::new();
        if let Region::L2Ball { n, b_max } = self {
            let r = b_max.sqrt();
            for j in 0..(*n).min(8) {
                let mut e = DensePoint::basis(&shape, j);
                e.scale(r);
                out.push(e.scaled(-1.0));
                out.push(e);
            }
        }
        while out.len() < count {
            let p = self.random_extreme_point(rng);
            if !self.is_polytope() {
                out.push(p.scaled(-1.0));
            }
            out.push(p);
        }
        out
    }

    /// Euclidean projection. Supported for balls, boxes and the simplex.
    pub fn project(&self, y: &DensePoint) -> Result<DensePoint> {
        self.check_shape(y)?;
        match self {
            Region::L2Ball { b_max, .. } => {
                let ns = y.norm_sq();
                if ns <= *b_max {
                    Ok(y.clone())
                } else {
                    Ok(y.scaled(b_max.sqrt() / ns.sqrt()))
                }
            }
            Region::Box { lower, upper } => {
                let data = y
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(j, v)| v.clamp(lower[j], upper[j]))
                    .collect();
                Ok(DensePoint::from_parts(data, y.shape().to_vec()))
            }
            Region::SimplexLeqOne { .. } => Ok(project_simplex_leq_one(y)),
            _ => Err(Error::Unsupported(format!(
                "no Euclidean projection for {}",
                self.kind_name()
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiameterEstimate {
    /// Largest sampled `D_phi(x, y)`, an estimate of the squared diameter.
    pub value: f64,
    /// True when the sample provably attains the supremum (Euclidean kernel on a
    /// fully enumerated polytope or on a ball).
    pub exact: bool,
}

/// Sampled estimate of `sup_{x,y in P} D_phi(x, y)`.
///
/// The candidate set holds vertices (all of them for small polytopes, oracle
/// answers to random directions otherwise), boundary samples and
/// `n_samples` interior samples. Only candidates interior to the kernel
/// domain serve as the second argument. Unless flagged exact, the value is a
/// lower estimate.
pub fn bregman_diameter_sq(
    region: &Region,
    kernel: &Kernel,
    n_samples: usize,
    seed: u64,
) -> Result<DiameterEstimate> {
    let mut rng = par::stream_rng(seed, u64::MAX);
    let mut candidates = Vec::new();
    let mut enumerated = false;
    if region.is_polytope() {
        match region.enumerate_vertices() {
            Ok(vs) if vs.len() <= 256 => {
                candidates.extend(vs);
                enumerated = true;
            }
            _ => candidates.extend(region.boundary_samples(&mut rng, 64)),
        }
    } else {
        candidates.extend(region.boundary_samples(&mut rng, 32));
    }
    for _ in 0..n_samples {
        candidates.push(region.sample_interior(&mut rng));
    }

    let bases: Vec<&DensePoint> = candidates
        .iter()
        .filter(|c| kernel.in_interior(c))
        .collect();
    let rows = par::map_range(Execution::default(), candidates.len(), |i| -> Result<f64> {
        let mut best: f64 = 0.0;
        for y in &bases {
            best = best.max(kernel.divergence(&candidates[i], y)?);
        }
        Ok(best)
    });
    let mut value: f64 = 0.0;
    for r in rows {
        value = value.max(r?);
    }
    let euclid = matches!(kernel, Kernel::Euclidean);
    let exact = euclid && (enumerated || matches!(region, Region::L2Ball { .. }));
    Ok(DiameterEstimate { value, exact })
}

fn argmin(a: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (j, &v) in a.iter().enumerate() {
        if v < a[best] {
            best = j;
        }
    }
    (best, a[best])
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    if k > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - k {
                break;
            }
            if i == 0 && cur[0] == n - k {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..k {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

/// Projection onto `{x >= 0, sum x <= 1}` by clamping, then the sorted-threshold
/// method onto the unit simplex when the sum cap is violated.
pub(crate) fn project_simplex_leq_one(y: &DensePoint) -> DensePoint {
    let clamped: Vec<f64> = y.data().iter().map(|v| v.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 1.0 {
        return DensePoint::from_parts(clamped, y.shape().to_vec());
    }
    let mut u = y.data().to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    let data = y.data().iter().map(|v| (v - theta).max(0.0)).collect();
    DensePoint::from_parts(data, y.shape().to_vec())
}

/// Top singular triple `(u, sigma, v)` of a `rows x cols` matrix, or `None` for
/// the zero matrix.
pub(crate) fn top_singular_pair(
    a: &DensePoint,
    rows: usize,
    cols: usize,
) -> Option<(Vec<f64>, f64, Vec<f64>)> {
    if a.max_abs() == 0.0 {
        return None;
    }
    if rows.min(cols) <= FULL_SVD_MAX_DIM {
        let m = nalgebra::DMatrix::from_row_slice(rows, cols, a.data());
        let svd = m.svd(true, true);
        let (k, &sigma) = svd
            .singular_values
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(y.1).then(y.0.cmp(&x.0)))?;
        let u = svd.u.as_ref()?.column(k).iter().copied().collect();
        let v = svd.v_t.as_ref()?.row(k).iter().copied().collect();
        return Some((u, sigma, v));
    }
    // Power iteration on A^T A.
    let mut v: Vec<f64> = (0..cols).map(|j| 1.0 + 1e-3 * (j % 7) as f64).collect();
    normalize(&mut v);
    let mut sigma_prev = 0.0;
    for _ in 0..POWER_ITER_CAP {
        let av = a.matvec(&v);
        let mut w = a.matvec_t(&av);
        let norm = normalize(&mut w);
        let sigma = norm.sqrt();
        v = w;
        if (sigma - sigma_prev).abs() <= POWER_ITER_TOL * sigma.max(1.0) {
            break;
        }
        sigma_prev = sigma;
    }
    let mut u = a.matvec(&v);
    let sigma = normalize(&mut u);
    Some((u, sigma, v))
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
    n
}

/// Sum of singular values of a 2-D point.
pub fn nuclear_norm(x: &DensePoint) -> f64 {
    x.to_nalgebra().singular_values().iter().sum()
}

/// Convex-hull membership via away-step Frank-Wolfe with exact line search on
/// `1/2 ||y - x||^2` over the hull.
fn hull_contains(vertices: &[DensePoint], x: &DensePoint, tol: f64) -> bool {
    let mut weights = vec![0.0; vertices.len()];
    let start = {
        let g = x.scaled(-1.0);
        let mut best = 0;
        for (i, v) in vertices.iter().enumerate() {
            if g.dot(v) < g.dot(&vertices[best]) {
                best = i;
            }
        }
        best
    };
    weights[start] = 1.0;
    let mut y = vertices[start].clone();
    let half_tol_sq = 0.5 * tol * tol;
    for _ in 0..20_000 {
        let r = y.sub(x);
        let obj = 0.5 * r.norm_sq();
        if obj <= half_tol_sq {
            return true;
        }
        let scores: Vec<f64> = vertices.iter().map(|v| r.dot(v)).collect();
        let ry = r.dot(&y);
        let (fw, _) = argmin(&scores);
        let gap = ry - scores[fw];
        if obj - gap > half_tol_sq {
            return false;
        }
        let away = (0..vertices.len())
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&i, &j| scores[i].total_cmp(&scores[j]))
            .unwrap();
        let away_gap = scores[away] - ry;
        let (d, gmax, is_fw) = if gap >= away_gap {
            (y.sub(&vertices[fw]), 1.0, true)
        } else {
            let l = weights[away];
            (vertices[away].sub(&y), l / (1.0 - l), false)
        };
        let dd = d.norm_sq();
        if dd == 0.0 {
            break;
        }
        let gamma = (r.dot(&d) / dd).clamp(0.0, gmax);
        y = y.step_along(&d, gamma);
        if is_fw {
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            weights[fw] += gamma;
        } else {
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[away] -= gamma;
            if weights[away] <= 1e-15 {
                weights[away] = 0.0;
            }
        }
    }
    0.5 * y.sub(x).norm_sq() <= half_tol_sq
}
