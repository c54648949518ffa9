//! Seeded synthetic problem generators.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feasible::{nuclear_norm, Region};
use crate::kernels::Kernel;
use crate::objectives::Objective;
use crate::par::stream_rng;
use crate::point::{matmul, DensePoint};
use crate::problem::TheoryConstants;

/// Names accepted by [`generate_dataset`].
pub const RECIPES: &[&str] = &[
    "kl_inverse",
    "lp_loss",
    "phase_retrieval",
    "low_rank",
    "nmf",
    "quadratic",
    "toy_piecewise",
    "toy_log1p_sq",
];

/// Generator parameters; each recipe reads the subset it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RecipeParams {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub rank: Option<usize>,
    pub p: Option<f64>,
    pub noise_std: Option<f64>,
    pub normalize_sum: Option<bool>,
    pub k: Option<usize>,
    pub b_max: Option<f64>,
    pub condition: Option<f64>,
    pub interior: Option<bool>,
}

/// A generated problem with its default kernel, region and starting point.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub recipe: String,
    pub seed: u64,
    pub objective: Objective,
    pub region: Region,
    pub kernel: Kernel,
    pub constants: TheoryConstants,
    pub x0: DensePoint,
    /// The planted solution, when the generator has one.
    pub x_star: Option<DensePoint>,
}

impl Dataset {
    /// Replaces the region, keeping `f*` only if the planted solution stays feasible.
    pub fn with_region(mut self, region: Region) -> Result<Self> {
        region.validate()?;
        if region.shape() != self.region.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.region.shape(),
                got: region.shape(),
            });
        }
        let keep = self
            .x_star
            .as_ref()
            .is_some_and(|x| region.contains(x, 1e-12));
        if !keep {
            self.constants.f_star = None;
        }
        if !region.contains(&self.x0, 1e-12) {
            self.x0 = region.default_start();
        }
        self.region = region;
        Ok(self)
    }

    /// Replaces the kernel. The published smoothness constant only belongs to the
    /// default kernel, so it is dropped when the kernel changes.
    pub fn with_kernel(mut self, kernel: Kernel) -> Self {
        if kernel.id() != self.kernel.id() || kernel_param(&kernel) != kernel_param(&self.kernel) {
            self.constants.smad_l = None;
            self.constants.nu = None;
        }
        self.kernel = kernel;
        self
    }
}

fn kernel_param(k: &Kernel) -> Option<u64> {
    match k {
        Kernel::QuarticScaled { c } => Some(c.to_bits()),
        _ => None,
    }
}

fn need(name: &str, key: &str, v: Option<usize>) -> Result<usize> {
    match v {
        Some(x) if x > 0 => Ok(x),
        Some(_) => Err(Error::InvalidConstant(format!(
            "{name}: `{key}` must be positive"
        ))),
        None => Err(Error::InvalidConstant(format!("{name}: missing `{key}`"))),
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn finish(
    recipe: &str,
    seed: u64,
    objective: Objective,
    region: Region,
    x0: DensePoint,
    x_star: Option<DensePoint>,
) -> Result<Dataset> {
    let (l, kernel) = objective.smad_constant();
    let f_star = match &x_star {
        Some(x) if region.contains(x, 1e-12) => Some(objective.value(x)?),
        _ => None,
    };
    Ok(Dataset {
        recipe: recipe.to_string(),
        seed,
        objective,
        region,
        kernel,
        constants: TheoryConstants {
            smad_l: l,
            f_star,
            ..Default::default()
        },
        x0,
        x_star,
    })
}

/// Builds a dataset from a named recipe. Identical `(name, params, seed)`
/// always yield identical data.
pub fn generate_dataset(name: &str, params: &RecipeParams, seed: u64) -> Result<Dataset> {
    let mut rng = stream_rng(seed, 0x0da7a);
    match name {
        "kl_inverse" => {
            let m = need(name, "m", params.m)?;
            let n = need(name, "n", params.n)?;
            let mut a: Vec<f64> = (0..m * n).map(|_| normal(&mut rng).abs()).collect();
            for j in 0..n {
                let s: f64 = (0..m).map(|i| a[i * n + j]).sum();
                for i in 0..m {
                    a[i * n + j] /= s;
                }
            }
            let xt: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let s: f64 = xt.iter().sum();
            let x_star = DensePoint::vector(xt.iter().map(|v| 0.8 * v / s).collect());
            let a = DensePoint::matrix(m, n, a);
            let b = a.matvec(x_star.data());
            let region = Region::SimplexLeqOne { n };
            let x0 = region.default_start();
            finish(
                name,
                seed,
                Objective::kl_inverse(a, b)?,
                region,
                x0,
                Some(x_star),
            )
        }
        "lp_loss" => {
            let m = need(name, "m", params.m)?;
            let n = need(name, "n", params.n)?;
            let p = params.p.unwrap_or(1.1);
            let b_max = params.b_max.unwrap_or(1.0);
            let noise = params.noise_std.unwrap_or(0.0);
            let a = row_normalized_normal(&mut rng, m, n);
            let xt: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
            let nrm = xt.iter().map(|v| v * v).sum::<f64>().sqrt();
            let x_star =
                DensePoint::vector(xt.iter().map(|v| 0.8 * b_max.sqrt() * v / nrm).collect());
            let mut b = a.matvec(x_star.data());
            for bi in &mut b {
                *bi += noise * normal(&mut rng);
            }
            let region = Region::L2Ball { n, b_max };
            region.validate()?;
            let f = Objective::lp_loss(a, b, p)?;
            let x0 = region.lmo(&f.gradient(&region.default_start())?)?;
            let planted = (noise == 0.0).then_some(x_star);
            finish(name, seed, f, region, x0, planted)
        }
        "phase_retrieval" => {
            let m = need(name, "m", params.m)?;
            let n = need(name, "n", params.n)?;
            let k = need(name, "k", params.k.or(Some(n)))?;
            let a = row_normalized_normal(&mut rng, m, n);
            let mut xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            if params.normalize_sum.unwrap_or(true) {
                let s: f64 = xs.iter().sum();
                xs.iter_mut().for_each(|v| *v /= s);
            }
            let b: Vec<f64> = a.matvec(&xs).into_iter().map(|v| v * v).collect();
            let region = Region::KSparse { n, k };
            region.validate()?;
            let f = Objective::phase_retrieval(a, b)?;
            let x0 = region.lmo(&f.gradient(&region.default_start())?)?;
            finish(name, seed, f, region, x0, Some(DensePoint::vector(xs)))
        }
        "low_rank" => {
            let n = need(name, "n", params.n)?;
            let r = need(name, "rank", params.rank)?;
            let x_star = column_normalized_uniform(&mut rng, n, r);
            let mm = matmul(x_star.data(), x_star.transpose().data(), n, r, n);
            let m = DensePoint::matrix(n, n, mm);
            let lambda_max = nalgebra::SymmetricEigen::new(m.to_nalgebra())
                .eigenvalues
                .max();
            let xi = 10.0 * lambda_max;
            let region = Region::NuclearNormBall {
                rows: n,
                cols: r,
                xi,
            };
            let mut x0 =
                DensePoint::matrix(n, r, (0..n * r).map(|_| rng.random::<f64>()).collect());
            let nn = nuclear_norm(&x0);
            if nn > xi {
                x0.scale(0.5 * xi / nn);
            }
            finish(
                name,
                seed,
                Objective::low_rank(m, r)?,
                region,
                x0,
                Some(x_star),
            )
        }
        "nmf" => {
            let m = need(name, "m", params.m)?;
            let n = need(name, "n", params.n)?;
            let r = need(name, "rank", params.rank)?;
            let w = column_normalized_uniform(&mut rng, m, r);
            let mut h = vec![0.0; r * n];
            for j in 0..n {
                let col: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(Exp1)).collect();
                let s: f64 = col.iter().sum();
                for i in 0..r {
                    h[i * n + j] = col[i] / s;
                }
            }
            let v = DensePoint::matrix(m, n, matmul(w.data(), &h, m, r, n));
            let len = m * r + r * n;
            let mut upper = vec![3.0; m * r];
            upper.extend(std::iter::repeat_n(1.0, r * n));
            let region = Region::Box {
                lower: vec![0.0; len],
                upper,
            };
            let x0 = DensePoint::vector((0..len).map(|_| rng.random::<f64>()).collect());
            let mut star = w.data().to_vec();
            star.extend(h);
            finish(
                name,
                seed,
                Objective::nmf(v, r)?,
                region,
                x0,
                Some(DensePoint::vector(star)),
            )
        }
        "quadratic" => {
            let n = need(name, "n", params.n)?;
            let cond = params.condition.unwrap_or(10.0);
            if !(cond >= 1.0) {
                return Err(Error::InvalidConstant(
                    "quadratic: `condition` must be >= 1".into(),
                ));
            }
            let g = nalgebra::DMatrix::from_fn(n, n, |_, _| normal(&mut rng));
            let q_orth = g.qr().q();
            let lambdas: Vec<f64> = (0..n)
                .map(|i| {
                    if n == 1 {
                        1.0
                    } else {
                        1.0 + (cond - 1.0) * i as f64 / (n - 1) as f64
                    }
                })
                .collect();
            let d = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas));
            let mut q = &q_orth * d * q_orth.transpose();
            q = 0.5 * (&q + q.transpose());
            let q = DensePoint::from_nalgebra(&q);
            let interior = params.interior.unwrap_or(true);
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let u = rng.random::<f64>();
                    if interior {
                        0.2 + 0.6 * u
                    } else {
                        -0.5 + 2.0 * u
                    }
                })
                .collect();
            let qx = q.matvec(&xs);
            let c: Vec<f64> = qx.iter().map(|v| -v).collect();
            let constant = 0.5 * qx.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>();
            let region = Region::Box {
                lower: vec![0.0; n],
                upper: vec![1.0; n],
            };
            let x0 = region.default_start();
            let mut ds = finish(
                name,
                seed,
                Objective::quadratic(q, c, constant)?,
                region,
                x0,
                Some(DensePoint::vector(xs)),
            )?;
            ds.constants.heb_mu = Some(1.0);
            ds.constants.heb_q = Some(2.0);
            ds.constants.nu = Some(1.0);
            Ok(ds)
        }
        "toy_piecewise" | "toy_log1p_sq" => {
            let (f, lo, hi) = if name == "toy_piecewise" {
                (Objective::ToyPiecewise, -1.5, 0.5)
            } else {
                (Objective::ToyLog1pSq, -1.0, 2.0)
            };
            let region = Region::Box {
                lower: vec![lo],
                upper: vec![hi],
            };
            let x_star = if name == "toy_piecewise" { -1.0 } else { 0.0 };
            let toy = f.toy_constants().expect("toy objective");
            let mut ds = finish(
                name,
                seed,
                f,
                region,
                DensePoint::vector(vec![hi]),
                Some(DensePoint::vector(vec![x_star])),
            )?;
            ds.constants.weak_rho = Some(toy.rho);
            ds.constants.heb_mu = Some(toy.mu);
            ds.constants.nu = Some(1.0);
            Ok(ds)
        }
        other => Err(Error::UnknownRecipe(other.to_string())),
    }
}

fn row_normalized_normal<R: Rng>(rng: &mut R, m: usize, n: usize) -> DensePoint {
    let mut a: Vec<f64> = (0..m * n).map(|_| normal(rng)).collect();
    for row in a.chunks_mut(n) {
        let nrm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= nrm);
    }
    DensePoint::matrix(m, n, a)
}

fn column_normalized_uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DensePoint {
    let mut x: Vec<f64> = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    for j in 0..cols {
        let nrm = (0..rows)
            .map(|i| x[i * cols + j].powi(2))
            .sum::<f64>()
            .sqrt();
        for i in 0..rows {
            x[i * cols + j] /= nrm;
        }
    }
    DensePoint::matrix(rows, cols, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: usize, n: usize) -> RecipeParams {
        RecipeParams {
            m: Some(m),
            n: Some(n),
            ..Default::default()
        }
    }

    #[test]
    fn kl_columns_sum_to_one() {
        let ds = generate_dataset("kl_inverse", &params(5, 8), 7).unwrap();
        let Objective::KlInverse { a, .. } = &ds.objective else {
            panic!()
        };
        for s in a.matvec_t(&[1.0; 5]) {
            assert!((s - 1.0).abs() <= 1e-12);
        }
        assert_eq!(ds.constants.f_star, Some(0.0));
        assert!(ds.x_star.unwrap().sum() - 0.8 < 1e-12);
    }

    #[test]
    fn phase_rows_have_unit_norm() {
        let p = RecipeParams {
            k: Some(3),
            ..params(12, 6)
        };
        let ds = generate_dataset("phase_retrieval", &p, 3).unwrap();
        let Objective::PhaseRetrieval { a, .. } = &ds.objective else {
            panic!()
        };
        for i in 0..a.rows() {
            let n: f64 = a.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() <= 1e-12);
        }
        assert!(ds.region.contains(&ds.x0, 0.0));
    }

    #[test]
    fn lp_planted_point_at_fixed_fraction_of_radius() {
        let p = RecipeParams {
            b_max: Some(4.0),
            ..params(10, 4)
        };
        let ds = generate_dataset("lp_loss", &p, 11).unwrap();
        let x = ds.x_star.unwrap();
        assert!((x.norm() - 0.8 * 2.0).abs() <= 1e-12);
        assert_eq!(ds.constants.f_star, Some(0.0));
    }

    #[test]
    fn generators_are_deterministic() {
        for name in RECIPES {
            let p = RecipeParams {
                m: Some(6),
                n: Some(4),
                rank: Some(2),
                k: Some(2),
                ..Default::default()
            };
            let a = generate_dataset(name, &p, 5).unwrap();
            let b = generate_dataset(name, &p, 5).unwrap();
            assert_eq!(a.objective, b.objective, "{name}");
            assert!(a.x0.bit_eq(&b.x0));
            assert!(a.region.contains(&a.x0, 1e-12), "{name}");
        }
    }

    #[test]
    fn unknown_recipe() {
        assert_eq!(
            generate_dataset("mnist", &RecipeParams::default(), 0).unwrap_err(),
            Error::UnknownRecipe("mnist".into())
        );
    }

    #[test]
    fn nmf_planted_factors_are_feasible() {
        let p = RecipeParams {
            rank: Some(2),
            ..params(5, 4)
        };
        let ds = generate_dataset("nmf", &p, 1).unwrap();
        assert_eq!(ds.constants.f_star.map(|f| f.abs() < 1e-20), Some(true));
    }
}
