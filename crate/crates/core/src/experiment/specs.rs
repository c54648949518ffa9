//! Compact one-line descriptions of regions and kernels, e.g. `simplex:n=5`,
//! `box:n=3,lo=-1,hi=2`, `k_sparse:n=6,k=2`, `quartic_scaled:c=2`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::kernels::Kernel;

fn split_spec(spec: &str) -> Result<(String, BTreeMap<String, String>)> {
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let mut params = BTreeMap::new();
    for item in rest.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(vec![format!("`{item}` is not key=value")]))?;
        params.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok((kind.trim().to_ascii_lowercase(), params))
}

struct Params {
    spec: String,
    map: BTreeMap<String, String>,
}

impl Params {
    fn get<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.map.remove(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                Error::Config(vec![format!(
                    "`{}`: bad value `{v}` for `{key}`",
                    self.spec
                )])
            }),
        }
    }

    fn need<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| Error::Config(vec![format!("`{}`: missing `{key}`", self.spec)]))
    }

    fn done(self) -> Result<()> {
        match self.map.keys().next() {
            Some(k) => Err(Error::Config(vec![format!(
                "`{}`: unknown key `{k}`",
                self.spec
            )])),
            None => Ok(()),
        }
    }
}

/// Parses `kind:key=value,...` into a validated region.
///
/// Kinds: `simplex` (n), `box` (n, lo = 0, hi = 1), `ball` (n, b = 1),
/// `k_sparse` (n, k), `nuclear` (rows, cols, xi = 1).
pub fn parse_region_spec(spec: &str) -> Result<Region> {
    let (kind, map) = split_spec(spec)?;
    let mut p = Params {
        spec: spec.to_string(),
        map,
    };
    let region = match kind.as_str() {
        "simplex" | "simplex_leq_one" => Region::SimplexLeqOne { n: p.need("n")? },
        "box" => {
            let n: usize = p.need("n")?;
            let lo = p.get("lo")?.unwrap_or(0.0);
            let hi = p.get("hi")?.unwrap_or(1.0);
            Region::Box {
                lower: vec![lo; n],
                upper: vec![hi; n],
            }
        }
        "ball" | "l2_ball" => Region::L2Ball {
            n: p.need("n")?,
            b_max: p.get("b")?.unwrap_or(1.0),
        },
        "k_sparse" | "ksparse" => Region::KSparse {
            n: p.need("n")?,
            k: p.need("k")?,
        },
        "nuclear" | "nuclear_ball" => Region::NuclearNormBall {
            rows: p.need("rows")?,
            cols: p.need("cols")?,
            xi: p.get("xi")?.unwrap_or(1.0),
        },
        other => {
            return Err(Error::Config(vec![format!(
                "unknown region kind `{other}`"
            )]))
        }
    };
    p.done()?;
    region.validate()?;
    Ok(region)
}

/// Parses a kernel name; `quartic_scaled` takes `c` (default 1).
pub fn parse_kernel_spec(spec: &str) -> Result<Kernel> {
    let (kind, map) = split_spec(spec)?;
    let mut p = Params {
        spec: spec.to_string(),
        map,
    };
    let kernel = match kind.as_str() {
        "euclidean" => Kernel::Euclidean,
        "entropy" => Kernel::Entropy,
        "burg" => Kernel::Burg,
        "quartic" => Kernel::Quartic,
        "quartic_scaled" => Kernel::QuarticScaled {
            c: p.get("c")?.unwrap_or(1.0),
        },
        other => return Err(Error::Config(vec![format!("unknown kernel `{other}`")])),
    };
    p.done()?;
    Ok(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_specs() {
        assert_eq!(
            parse_region_spec("simplex:n=5").unwrap(),
            Region::SimplexLeqOne { n: 5 }
        );
        assert_eq!(
            parse_region_spec("box:n=2,lo=-1.5,hi=0.5").unwrap(),
            Region::Box {
                lower: vec![-1.5; 2],
                upper: vec![0.5; 2]
            }
        );
        assert!(parse_region_spec("k_sparse:n=3,k=4").is_err());
        assert!(parse_region_spec("simplex:n=3,q=1").is_err());
        assert!(parse_region_spec("torus:n=3").is_err());
        assert!(parse_region_spec("simplex").is_err());
    }

    #[test]
    fn kernel_specs() {
        assert!(matches!(parse_kernel_spec("entropy"), Ok(Kernel::Entropy)));
        assert!(matches!(
            parse_kernel_spec("quartic_scaled:c=2.5"),
            Ok(Kernel::QuarticScaled { c }) if c == 2.5
        ));
        assert!(parse_kernel_spec("cosine").is_err());
    }
}
