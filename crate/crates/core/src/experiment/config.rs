//! TOML experiment configuration.
//!
//! ```toml
//! name = "kl"
//! output_dir = "out/kl"
//! repetitions = 5
//! seed = 7
//! max_iters = 1000
//! tolerance = 1e-7
//! format = "csv"          # or "json"
//!
//! [problem]
//! recipe = "kl_inverse"
//! m = 20
//! n = 50
//!
//! [[solver]]
//! id = "BregFW"
//!
//! [[solver]]
//! id = "MD"
//! step = 1.0
//! ```
//!
//! Optional `[region]` and `[kernel]` tables override the recipe defaults.
//! `recipe = "file"` loads data from disk (paths relative to the config file)
//! and then requires `[region]`. Every problem is reported at once, each with
//! its line number.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use toml::de::{DeArray, DeTable, DeValue};
use toml::Spanned;

use super::recipes::{RecipeParams, RECIPES};
use crate::error::{Error, Result};
use crate::feasible::Region;
use crate::objectives::ObjectiveId;
use crate::point::DensePoint;
use crate::stepsize::AdaptiveParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SolverId {
    /// Frank-Wolfe with the adaptive Bregman step.
    BregFW,
    /// Away-step Frank-Wolfe with the adaptive Bregman step.
    BregAFW,
    /// Frank-Wolfe with the Bregman short step at fixed `L`.
    BregShortFW,
    BregShortAFW,
    /// Euclidean adaptive step.
    EucFW,
    EucAFW,
    /// Euclidean short step `min(gap / (L ||d||^2), 1)`.
    ShortFW,
    ShortAFW,
    /// `2 / (t + 2)`
    OpenFW,
    OpenAFW,
    /// Fixed nonconvex step for a horizon of `max_iters`.
    FixedFW,
    /// Entropic mirror descent.
    MD,
    /// Projected gradient.
    ProjGD,
}

impl SolverId {
    pub const ALL: [SolverId; 13] = [
        SolverId::BregFW,
        SolverId::BregAFW,
        SolverId::BregShortFW,
        SolverId::BregShortAFW,
        SolverId::EucFW,
        SolverId::EucAFW,
        SolverId::ShortFW,
        SolverId::ShortAFW,
        SolverId::OpenFW,
        SolverId::OpenAFW,
        SolverId::FixedFW,
        SolverId::MD,
        SolverId::ProjGD,
    ];

    pub fn is_away(self) -> bool {
        matches!(
            self,
            SolverId::BregAFW
                | SolverId::BregShortAFW
                | SolverId::EucAFW
                | SolverId::ShortAFW
                | SolverId::OpenAFW
        )
    }

    pub fn is_adaptive(self) -> bool {
        matches!(
            self,
            SolverId::BregFW | SolverId::BregAFW | SolverId::EucFW | SolverId::EucAFW
        )
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for SolverId {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        SolverId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<String> = SolverId::ALL.iter().map(|i| i.to_string()).collect();
                format!(
                    "unknown solver id `{s}` (expected one of {})",
                    names.join(", ")
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Constant,
    InvSqrt,
}

/// Kernel override. `Objective` uses the objective itself as the kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum KernelChoice {
    Euclidean,
    Entropy,
    Burg,
    Quartic,
    QuarticScaled { c: f64 },
    Objective,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub id: SolverId,
    /// Unique name used for trace files and summary rows.
    pub label: String,
    pub max_iters: Option<usize>,
    /// Smoothness constant for the short-step rules.
    pub l: Option<f64>,
    pub nu: Option<f64>,
    /// Step size for MD and ProjGD.
    pub step: Option<f64>,
    pub schedule: ScheduleKind,
    pub adaptive: AdaptiveParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ProblemSource {
    Recipe {
        name: String,
        params: RecipeParams,
        /// Data seed; defaults to the top-level `seed`.
        seed: Option<u64>,
    },
    File {
        objective: ObjectiveId,
        /// Data files by role: `a`, `b`, `m`, `v`, `q`, `c`.
        files: BTreeMap<String, PathBuf>,
        p: Option<f64>,
        rank: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub output_dir: PathBuf,
    pub repetitions: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    pub format: TraceFormat,
    pub f_star: Option<f64>,
    pub parallel: bool,
    pub record_every: usize,
    pub wall_clock_limit_seconds: Option<f64>,
    pub problem: ProblemSource,
    pub region: Option<Region>,
    pub kernel: Option<KernelChoice>,
    pub solvers: Vec<SolverSpec>,
}

/// Parses a configuration; relative paths are resolved against the working directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_in(text, Path::new("."))
}

/// Reads and parses a configuration file; relative paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    parse_config_in(&text, base)
}

/// Parses a configuration, resolving relative paths against `base`.
pub fn parse_config_in(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let (doc, syntax) = DeTable::parse_recoverable(text);
    let mut cx = Cx {
        text,
        errors: Vec::new(),
    };
    for e in syntax {
        let line = e.span().map(|s| cx.line(&s)).unwrap_or(0);
        cx.errors.push(format!("line {line}: {}", e.message()));
    }
    if !cx.errors.is_empty() {
        return Err(Error::Config(cx.errors));
    }
    let root_span = doc.span();
    let mut root = Section::new(doc.get_ref(), "", root_span);

    let name = root
        .string(&mut cx, "name")
        .unwrap_or_else(|| "experiment".into());
    let output_dir = root
        .string(&mut cx, "output_dir")
        .map(|p| base.join(p))
        .unwrap_or_else(|| base.join("results"));
    let repetitions = root.positive(&mut cx, "repetitions").unwrap_or(1);
    let seed = root.uint(&mut cx, "seed").unwrap_or(0);
    let max_iters = root.positive(&mut cx, "max_iters").unwrap_or(1000);
    let record_every = root.positive(&mut cx, "record_every").unwrap_or(1);
    let tolerance = root.float(&mut cx, "tolerance").unwrap_or(1e-7);
    if !(tolerance >= 0.0) {
        root.fail(&mut cx, "tolerance", "must be >= 0");
    }
    let f_star = root.float(&mut cx, "f_star");
    if f_star.is_some_and(|f| !f.is_finite()) {
        root.fail(&mut cx, "f_star", "must be finite");
    }
    let wall_clock_limit_seconds = root.float(&mut cx, "wall_clock_limit_seconds");
    if wall_clock_limit_seconds.is_some_and(|w| !(w > 0.0)) {
        root.fail(&mut cx, "wall_clock_limit_seconds", "must be positive");
    }
    let parallel = root.boolean(&mut cx, "parallel").unwrap_or(true);
    let format = match root.string(&mut cx, "format").as_deref() {
        None | Some("csv") => TraceFormat::Csv,
        Some("json") => TraceFormat::Json,
        Some(other) => {
            root.fail(
                &mut cx,
                "format",
                &format!("expected `csv` or `json`, got `{other}`"),
            );
            TraceFormat::Csv
        }
    };

    let problem = match root.table(&mut cx, "problem") {
        Some(mut sec) => {
            let p = parse_problem(&mut cx, &mut sec, base);
            sec.finish(&mut cx);
            p
        }
        None => {
            cx.errors.push("missing [problem] table".into());
            None
        }
    };
    let region = root.table(&mut cx, "region").and_then(|mut sec| {
        let r = parse_region(&mut cx, &mut sec, base);
        sec.finish(&mut cx);
        r
    });
    if matches!(problem, Some(ProblemSource::File { .. })) && !root.has("region") {
        cx.errors
            .push("a file-based problem needs a [region] table".into());
    }
    let kernel = root.table(&mut cx, "kernel").and_then(|mut sec| {
        let k = parse_kernel(&mut cx, &mut sec);
        sec.finish(&mut cx);
        k
    });

    let mut solvers = Vec::new();
    match root.tables(&mut cx, "solver") {
        Some(secs) if !secs.is_empty() => {
            for mut sec in secs {
                if let Some(s) = parse_solver(&mut cx, &mut sec) {
                    solvers.push(s);
                }
                sec.finish(&mut cx);
            }
        }
        Some(_) | None => cx
            .errors
            .push("at least one [[solver]] entry is required".into()),
    }
    let mut seen = BTreeSet::new();
    for s in &solvers {
        if !seen.insert(s.label.clone()) {
            cx.errors.push(format!(
                "duplicate solver label `{}`; set `label` to tell the entries apart",
                s.label
            ));
        }
    }
    root.finish(&mut cx);

    if !cx.errors.is_empty() {
        return Err(Error::Config(cx.errors));
    }
    Ok(ExperimentConfig {
        name,
        output_dir,
        repetitions,
        seed,
        max_iters,
        tolerance,
        format,
        f_star,
        parallel,
        record_every,
        wall_clock_limit_seconds,
        problem: problem.expect("checked above"),
        region,
        kernel,
        solvers,
    })
}

fn parse_problem(cx: &mut Cx, sec: &mut Section, base: &Path) -> Option<ProblemSource> {
    let Some(recipe) = sec.string(cx, "recipe") else {
        sec.missing(cx, "recipe");
        return None;
    };
    let seed = sec.uint(cx, "seed");
    if recipe == "file" {
        let objective = match sec.string(cx, "objective") {
            Some(s) => {
                match serde_json::from_value::<ObjectiveId>(serde_json::Value::String(s.clone())) {
                    Ok(id) => Some(id),
                    Err(_) => {
                        sec.fail(cx, "objective", &format!("unknown objective `{s}`"));
                        None
                    }
                }
            }
            None => {
                sec.missing(cx, "objective");
                None
            }
        };
        let p = sec.float(cx, "p");
        let rank = sec.positive(cx, "rank");
        let mut files = BTreeMap::new();
        for role in ["a", "b", "m", "v", "q", "c"] {
            if let Some(path) = sec.string(cx, role) {
                let full = base.join(&path);
                if !full.is_file() {
                    sec.fail(
                        cx,
                        role,
                        &format!("file `{}` does not exist", full.display()),
                    );
                }
                files.insert(role.to_string(), full);
            }
        }
        let objective = objective?;
        let required: &[&str] = match objective {
            ObjectiveId::LpLoss | ObjectiveId::PhaseRetrieval | ObjectiveId::KlInverse => {
                &["a", "b"]
            }
            ObjectiveId::LowRank => &["m"],
            ObjectiveId::Nmf => &["v"],
            ObjectiveId::Quadratic => &["q", "c"],
            ObjectiveId::ToyPiecewise | ObjectiveId::ToyLog1pSq => &[],
        };
        for role in required {
            if !files.contains_key(*role) {
                sec.missing(cx, role);
            }
        }
        if matches!(objective, ObjectiveId::LowRank | ObjectiveId::Nmf) && rank.is_none() {
            sec.missing(cx, "rank");
        }
        if objective == ObjectiveId::LpLoss && p.is_none() {
            sec.missing(cx, "p");
        }
        if seed.is_some() {
            sec.fail(cx, "seed", "only applies to generated data");
        }
        return Some(ProblemSource::File {
            objective,
            files,
            p,
            rank,
        });
    }

    let params = RecipeParams {
        m: sec.positive(cx, "m"),
        n: sec.positive(cx, "n"),
        rank: sec.positive(cx, "rank"),
        p: sec.float(cx, "p"),
        noise_std: sec.float(cx, "noise_std"),
        normalize_sum: sec.boolean(cx, "normalize_sum"),
        k: sec.positive(cx, "k"),
        b_max: sec.float(cx, "b_max"),
        condition: sec.float(cx, "condition"),
        interior: sec.boolean(cx, "interior"),
    };
    if !RECIPES.contains(&recipe.as_str()) {
        sec.fail(
            cx,
            "recipe",
            &format!(
                "unknown recipe `{recipe}` (expected `file` or one of {})",
                RECIPES.join(", ")
            ),
        );
        return None;
    }
    let dims: &[(&str, Option<usize>)] = match recipe.as_str() {
        "kl_inverse" | "lp_loss" | "phase_retrieval" => &[("m", params.m), ("n", params.n)],
        "low_rank" => &[("n", params.n), ("rank", params.rank)],
        "nmf" => &[("m", params.m), ("n", params.n), ("rank", params.rank)],
        "quadratic" => &[("n", params.n)],
        _ => &[],
    };
    for (key, v) in dims {
        if v.is_none() {
            sec.missing(cx, key);
        }
    }
    if recipe == "phase_retrieval" {
        if let (Some(k), Some(n)) = (params.k, params.n) {
            if k > n {
                sec.fail(cx, "k", &format!("K = {k} exceeds n = {n}"));
            }
        }
    }
    if let Some(p) = params.p {
        if !(p > 1.0) {
            sec.fail(cx, "p", "must be > 1");
        }
    }
    if let Some(b) = params.b_max {
        if !(b > 0.0) {
            sec.fail(cx, "b_max", "must be positive");
        }
    }
    if let Some(c) = params.condition {
        if !(c >= 1.0) {
            sec.fail(cx, "condition", "must be >= 1");
        }
    }
    if params.noise_std.is_some_and(|s| !(s >= 0.0)) {
        sec.fail(cx, "noise_std", "must be >= 0");
    }
    Some(ProblemSource::Recipe {
        name: recipe,
        params,
        seed,
    })
}

fn parse_region(cx: &mut Cx, sec: &mut Section, base: &Path) -> Option<Region> {
    let Some(kind) = sec.string(cx, "kind") else {
        sec.missing(cx, "kind");
        return None;
    };
    let before = cx.errors.len();
    let region = match kind.as_str() {
        "simplex" | "simplex_leq_one" => Region::SimplexLeqOne {
            n: sec.require_positive(cx, "n")?,
        },
        "box" => {
            let n = sec.positive(cx, "n");
            let lower = sec
                .float_or_array(cx, "lower", n)
                .unwrap_or_else(|| vec![0.0; n.unwrap_or(0)]);
            let upper = sec
                .float_or_array(cx, "upper", n)
                .unwrap_or_else(|| vec![1.0; n.unwrap_or(0)]);
            if n.is_none() && !sec.has("lower") && !sec.has("upper") {
                sec.missing(cx, "n");
            }
            Region::Box { lower, upper }
        }
        "l2_ball" | "ball" => Region::L2Ball {
            n: sec.require_positive(cx, "n")?,
            b_max: sec.float(cx, "b_max").unwrap_or(1.0),
        },
        "k_sparse" => {
            let n = sec.require_positive(cx, "n")?;
            let k = sec.require_positive(cx, "k")?;
            if k > n {
                sec.fail(cx, "k", &format!("K = {k} exceeds n = {n}"));
                return None;
            }
            Region::KSparse { n, k }
        }
        "nuclear_ball" | "nuclear_norm_ball" => Region::NuclearNormBall {
            rows: sec.require_positive(cx, "rows")?,
            cols: sec.require_positive(cx, "cols")?,
            xi: sec.float(cx, "xi").unwrap_or(1.0),
        },
        "explicit_polytope" => {
            let vertices = if let Some(path) = sec.string(cx, "vertices_file") {
                let full = base.join(&path);
                match crate::data_io::read_matrix(&full) {
                    Ok(m) => (0..m.rows())
                        .map(|i| DensePoint::vector(m.row(i).to_vec()))
                        .collect(),
                    Err(e) => {
                        sec.fail(cx, "vertices_file", &e.to_string());
                        return None;
                    }
                }
            } else {
                sec.matrix(cx, "vertices")?
                    .into_iter()
                    .map(DensePoint::vector)
                    .collect()
            };
            Region::ExplicitPolytope { vertices }
        }
        other => {
            sec.fail(cx, "kind", &format!("unknown region kind `{other}`"));
            return None;
        }
    };
    if cx.errors.len() > before {
        return None;
    }
    if let Err(e) = region.validate() {
        sec.fail(cx, "kind", &e.to_string());
        return None;
    }
    Some(region)
}

fn parse_kernel(cx: &mut Cx, sec: &mut Section) -> Option<KernelChoice> {
    let Some(id) = sec.string(cx, "id") else {
        sec.missing(cx, "id");
        return None;
    };
    let c = sec.float(cx, "c");
    let k = match id.as_str() {
        "euclidean" => KernelChoice::Euclidean,
        "entropy" => KernelChoice::Entropy,
        "burg" => KernelChoice::Burg,
        "quartic" => KernelChoice::Quartic,
        "quartic_scaled" => {
            let c = c.unwrap_or(1.0);
            if !(c >= 0.0) {
                sec.fail(cx, "c", "must be >= 0");
            }
            KernelChoice::QuarticScaled { c }
        }
        "objective" => KernelChoice::Objective,
        other => {
            sec.fail(cx, "id", &format!("unknown kernel `{other}`"));
            return None;
        }
    };
    if c.is_some() && !matches!(k, KernelChoice::QuarticScaled { .. }) {
        sec.fail(cx, "c", "only applies to `quartic_scaled`");
    }
    Some(k)
}

fn parse_solver(cx: &mut Cx, sec: &mut Section) -> Option<SolverSpec> {
    let id_text = sec.string(cx, "id");
    let id = match id_text.as_deref().map(SolverId::from_str) {
        Some(Ok(id)) => Some(id),
        Some(Err(msg)) => {
            sec.fail(cx, "id", &msg);
            None
        }
        None => {
            sec.missing(cx, "id");
            None
        }
    };
    let label = sec.string(cx, "label");
    let max_iters = sec.positive(cx, "max_iters");
    let l = sec.float(cx, "l");
    let nu = sec.float(cx, "nu");
    let step = sec.float(cx, "step");
    let schedule = match sec.string(cx, "schedule").as_deref() {
        Some("constant") => ScheduleKind::Constant,
        None | Some("inv_sqrt") => ScheduleKind::InvSqrt,
        Some(other) => {
            sec.fail(
                cx,
                "schedule",
                &format!("expected `constant` or `inv_sqrt`, got `{other}`"),
            );
            ScheduleKind::Constant
        }
    };
    let d = AdaptiveParams::default();
    let adaptive = AdaptiveParams {
        beta: sec.float(cx, "beta").unwrap_or(d.beta),
        eta: sec.float(cx, "eta").unwrap_or(d.eta),
        tau: sec.float(cx, "tau").unwrap_or(d.tau),
        l_init: sec.float(cx, "l_init").unwrap_or(d.l_init),
        kappa_min: sec.float(cx, "kappa_min").unwrap_or(d.kappa_min),
        max_inner: sec.positive(cx, "max_inner").unwrap_or(d.max_inner),
        strict_alg2: sec.boolean(cx, "strict").unwrap_or(d.strict_alg2),
    };
    if let Err(e) = adaptive.validate() {
        sec.fail(cx, "id", &e.to_string());
    }
    if l.is_some_and(|l| !(l > 0.0 && l.is_finite())) {
        sec.fail(cx, "l", "must be positive");
    }
    if nu.is_some_and(|v| !(v > 0.0 && v <= 1.0)) {
        sec.fail(cx, "nu", "must lie in (0, 1]");
    }
    if step.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
        sec.fail(cx, "step", "must be positive");
    }
    let id = id?;
    Some(SolverSpec {
        id,
        label: label.unwrap_or_else(|| id.to_string()),
        max_iters,
        l,
        nu,
        step,
        schedule,
        adaptive,
    })
}

struct Cx<'a> {
    text: &'a str,
    errors: Vec<String>,
}

impl Cx<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text[..end].matches('\n').count() + 1
    }
}

/// A TOML table being consumed; keys never read are reported as unknown.
struct Section<'t, 'i> {
    table: &'t DeTable<'i>,
    path: String,
    span: Range<usize>,
    used: BTreeSet<String>,
}

impl<'t, 'i> Section<'t, 'i> {
    fn new(table: &'t DeTable<'i>, path: &str, span: Range<usize>) -> Self {
        Self {
            table,
            path: path.to_string(),
            span,
            used: BTreeSet::new(),
        }
    }

    fn field(&self, key: &str) -> String {
        if self.path.is_empty() {
            format!("`{key}`")
        } else {
            format!("`{}.{key}`", self.path)
        }
    }

    fn has(&self, key: &str) -> bool {
        self.table.get(key).is_some()
    }

    fn take(&mut self, key: &str) -> Option<&'t Spanned<DeValue<'i>>> {
        self.used.insert(key.to_string());
        self.table.get(key)
    }

    fn fail(&self, cx: &mut Cx, key: &str, msg: &str) {
        let span = self
            .table
            .get(key)
            .map(|v| v.span())
            .unwrap_or(self.span.clone());
        cx.errors.push(format!(
            "line {}: {}: {msg}",
            cx.line(&span),
            self.field(key)
        ));
    }

    fn missing(&self, cx: &mut Cx, key: &str) {
        cx.errors.push(format!(
            "line {}: missing required field {}",
            cx.line(&self.span),
            self.field(key)
        ));
    }

    fn type_error(&self, cx: &mut Cx, key: &str, v: &Spanned<DeValue>, want: &str) {
        cx.errors.push(format!(
            "line {}: {}: expected {want}, found {}",
            cx.line(&v.span()),
            self.field(key),
            v.get_ref().type_str()
        ));
    }

    fn string(&mut self, cx: &mut Cx, key: &str) -> Option<String> {
        let v = self.take(key)?;
        match v.get_ref().as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.type_error(cx, key, v, "a string");
                None
            }
        }
    }

    fn boolean(&mut self, cx: &mut Cx, key: &str) -> Option<bool> {
        let v = self.take(key)?;
        match v.get_ref().as_bool() {
            Some(b) => Some(b),
            None => {
                self.type_error(cx, key, v, "a boolean");
                None
            }
        }
    }

    fn int(&mut self, cx: &mut Cx, key: &str) -> Option<i128> {
        let v = self.take(key)?;
        match v
            .get_ref()
            .as_integer()
            .and_then(|i| i128::from_str_radix(i.as_str(), i.radix()).ok())
        {
            Some(i) => Some(i),
            None => {
                self.type_error(cx, key, v, "an integer");
                None
            }
        }
    }

    fn uint(&mut self, cx: &mut Cx, key: &str) -> Option<u64> {
        let i = self.int(cx, key)?;
        match u64::try_from(i) {
            Ok(u) => Some(u),
            Err(_) => {
                self.fail(cx, key, "must be a non-negative integer");
                None
            }
        }
    }

    fn positive(&mut self, cx: &mut Cx, key: &str) -> Option<usize> {
        let i = self.int(cx, key)?;
        match usize::try_from(i) {
            Ok(u) if u > 0 => Some(u),
            _ => {
                self.fail(cx, key, "must be a positive integer");
                None
            }
        }
    }

    fn require_positive(&mut self, cx: &mut Cx, key: &str) -> Option<usize> {
        if !self.has(key) {
            self.missing(cx, key);
            return None;
        }
        self.positive(cx, key)
    }

    fn float(&mut self, cx: &mut Cx, key: &str) -> Option<f64> {
        let v = self.take(key)?;
        match number(v.get_ref()) {
            Some(x) => Some(x),
            None => {
                self.type_error(cx, key, v, "a number");
                None
            }
        }
    }

    /// A scalar (broadcast to `n` entries) or an explicit array.
    fn float_or_array(&mut self, cx: &mut Cx, key: &str, n: Option<usize>) -> Option<Vec<f64>> {
        let v = self.take(key)?;
        if let Some(x) = number(v.get_ref()) {
            return match n {
                Some(n) => Some(vec![x; n]),
                None => {
                    self.fail(cx, key, "a scalar bound needs `n`");
                    None
                }
            };
        }
        let Some(arr) = v.get_ref().as_array() else {
            self.type_error(cx, key, v, "a number or an array of numbers");
            return None;
        };
        let out = numbers(arr);
        if out.is_none() {
            self.type_error(cx, key, v, "an array of numbers");
        }
        if let (Some(o), Some(n)) = (&out, n) {
            if o.len() != n {
                self.fail(cx, key, &format!("has {} entries but n = {n}", o.len()));
                return None;
            }
        }
        out
    }

    fn matrix(&mut self, cx: &mut Cx, key: &str) -> Option<Vec<Vec<f64>>> {
        if !self.has(key) {
            self.missing(cx, key);
            return None;
        }
        let v = self.take(key)?;
        let rows = v.get_ref().as_array().and_then(|arr| {
            arr.iter()
                .map(|r| r.get_ref().as_array().and_then(numbers))
                .collect::<Option<Vec<_>>>()
        });
        if rows.is_none() {
            self.type_error(cx, key, v, "an array of numeric arrays");
        }
        rows
    }

    fn table(&mut self, cx: &mut Cx, key: &str) -> Option<Section<'t, 'i>> {
        let v = self.take(key)?;
        match v.get_ref().as_table() {
            Some(t) => Some(Section::new(t, key, v.span())),
            None => {
                self.type_error(cx, key, v, "a table");
                None
            }
        }
    }

    fn tables(&mut self, cx: &mut Cx, key: &str) -> Option<Vec<Section<'t, 'i>>> {
        let v = self.take(key)?;
        let Some(arr) = v.get_ref().as_array() else {
            self.type_error(cx, key, v, "an array of tables ([[solver]])");
            return None;
        };
        let mut out = Vec::new();
        for (i, item) in arr.iter().enumerate() {
            match item.get_ref().as_table() {
                Some(t) => out.push(Section::new(t, &format!("{key}[{i}]"), item.span())),
                None => self.type_error(cx, key, item, "a table"),
            }
        }
        Some(out)
    }

    fn finish(self, cx: &mut Cx) {
        for k in self.table.keys() {
            if !self.used.contains(k.get_ref().as_ref()) {
                cx.errors.push(format!(
                    "line {}: unknown field {}",
                    cx.line(&k.span()),
                    self.field(k.get_ref())
                ));
            }
        }
    }
}

fn number(v: &DeValue) -> Option<f64> {
    if let Some(f) = v.as_float() {
        return f.as_str().replace('_', "").parse().ok();
    }
    v.as_integer()
        .and_then(|i| i128::from_str_radix(i.as_str(), i.radix()).ok())
        .map(|i| i as f64)
}

fn numbers(arr: &DeArray) -> Option<Vec<f64>> {
    arr.iter().map(|x| number(x.get_ref())).collect()
}
