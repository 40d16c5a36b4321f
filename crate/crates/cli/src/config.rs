//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use otcal::cost::GridCost;
use otcal::transport::{gaussian_map_matrix, interpolate_1d, sinusoidal_map, solve_1d_monotone, tent_map};
use otcal::{BoxDomain, CostField, DensitySpec, TransportMap, TransportProblem};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Unreadable { path: PathBuf, reason: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing key `{0}`")]
    Missing(String),
    #[error("bad value for `{key}`: {reason}")]
    BadValue { key: String, reason: String },
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

fn bad(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

const KEYS: &[&str] = &[
    "run.seed",
    "run.out",
    "run.fd_step",
    "cost.id",
    "cost.file",
    "source.kind",
    "source.lo",
    "source.hi",
    "source.mean",
    "source.cov",
    "source.file",
    "target.kind",
    "target.lo",
    "target.hi",
    "target.mean",
    "target.cov",
    "target.file",
    "domain.lo",
    "domain.hi",
    "grid.cells",
    "map.source",
    "map.family",
    "map.matrix",
    "map.offset",
    "map.nodes",
    "map.file",
    "compare.competitors",
    "compare.cells",
    "checks.run",
    "comass.points",
    "comass.form",
    "comass.lo",
    "comass.hi",
    "curvature.points",
    "curvature.lo",
    "curvature.hi",
    "curvature.tol",
    "curvature.step",
    "suite.fd_scale",
    "suite.mutation",
];

/// Check names accepted under `checks.<name>` as tolerances.
pub const CHECK_NAMES: &[&str] = &[
    "twist",
    "nondegeneracy",
    "spacelike",
    "lagrangian",
    "pushforward",
    "calibration",
    "mean_curvature",
    "comass",
    "mass",
    "calibration_integral",
    "mtw",
    "conformal_identity",
];

/// Parsed `key = value` pairs. `#` starts a comment.
#[derive(Debug, Clone, Default)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |reason: &str| ConfigError::Syntax {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| syntax("expected `section.key = value`"))?;
            let k = k.trim();
            let parts: Vec<&str> = k.split('.').collect();
            if parts.len() != 2 || parts.iter().any(|p| p.is_empty()) {
                return Err(syntax("keys have exactly two levels, `section.key`"));
            }
            if !KEYS.contains(&k) && !(parts[0] == "checks" && CHECK_NAMES.contains(&parts[1])) {
                return Err(ConfigError::UnknownKey(k.to_string()));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(syntax("duplicate key"));
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key).map(|v| v.parse::<T>().map_err(|e| bad(key, e.to_string()))).transpose()
    }

    fn floats(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|e| bad(key, format!("{s}: {e}"))))
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DensityInput {
    Uniform { lo: Vec<f64>, hi: Vec<f64> },
    Gaussian { mean: Vec<f64>, cov: Vec<f64>, support: Option<(Vec<f64>, Vec<f64>)> },
    File(PathBuf),
}

/// A closed-form map family: `identity`, `rotation:<deg>`, `dilation:<k>`,
/// `affine` (uses `map.matrix`, `map.offset`), `tent`, `sinusoid:<amplitude>`.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    Identity,
    Rotation(f64),
    Dilation(f64),
    Affine { matrix: Vec<f64>, offset: Vec<f64> },
    Tent,
    Sinusoid(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapSource {
    /// `monotone` or `gaussian`.
    Solver(String),
    Analytic(Family),
    GridFile(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormKind {
    Calibration,
    /// `−dx¹∧…∧dxⁿ`, whose comass is unbounded below.
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    None,
    Exponent,
    Half,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cost: String,
    pub cost_file: Option<PathBuf>,
    pub source: Option<DensityInput>,
    pub target: Option<DensityInput>,
    pub domain: Option<(Vec<f64>, Vec<f64>)>,
    pub grid: usize,
    pub map: Option<MapSource>,
    pub nodes: usize,
    pub competitors: Vec<Family>,
    pub compare_cells: usize,
    /// Checks to run; `None` means all.
    pub checks: Option<Vec<String>>,
    pub tolerances: BTreeMap<String, f64>,
    pub fd_step: Option<f64>,
    pub comass_points: usize,
    pub comass_form: FormKind,
    pub comass_box: Option<(f64, f64)>,
    pub curvature_points: usize,
    pub curvature_box: Option<(f64, f64)>,
    pub curvature_tol: f64,
    pub curvature_step: Option<f64>,
    pub fd_scale: f64,
    pub mutation: Mutation,
    pub out: PathBuf,
    pub seed: u64,
}

fn parse_family(spec: &str, kv: &KeyValues, key: &str) -> Result<Family, ConfigError> {
    let (name, arg) = match spec.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (spec.trim(), None),
    };
    let num = |default: Option<f64>| -> Result<f64, ConfigError> {
        match (arg, default) {
            (Some(a), _) => a.parse::<f64>().map_err(|e| bad(key, format!("{a}: {e}"))),
            (None, Some(d)) => Ok(d),
            (None, None) => Err(bad(key, format!("`{name}` needs a parameter, `{name}:<value>`"))),
        }
    };
    Ok(match name {
        "identity" => Family::Identity,
        "rotation" => Family::Rotation(num(None)?),
        "dilation" => Family::Dilation(num(None)?),
        "tent" => Family::Tent,
        "sinusoid" => Family::Sinusoid(num(Some(0.1))?),
        "affine" => Family::Affine {
            matrix: kv.floats("map.matrix")?.ok_or_else(|| ConfigError::Missing("map.matrix".into()))?,
            offset: kv.floats("map.offset")?.unwrap_or_default(),
        },
        other => return Err(bad(key, format!("unknown map family `{other}`"))),
    })
}

fn interval(kv: &KeyValues, section: &str) -> Result<Option<(f64, f64)>, ConfigError> {
    let (lk, hk) = (format!("{section}.lo"), format!("{section}.hi"));
    match (kv.parsed::<f64>(&lk)?, kv.parsed::<f64>(&hk)?) {
        (Some(lo), Some(hi)) if lo < hi => Ok(Some((lo, hi))),
        (None, None) => Ok(None),
        _ => Err(bad(&lk, format!("`{lk}` and `{hk}` must both be set with lo < hi"))),
    }
}

impl RunConfig {
    /// Reads and validates a config file. Relative paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Unreadable {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_text(&text, base)
    }

    pub fn from_text(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let kv = KeyValues::parse(text)?;
        let file = |key: &str| -> Result<Option<PathBuf>, ConfigError> {
            let Some(v) = kv.get(key) else { return Ok(None) };
            let p = base.join(v);
            if !p.is_file() {
                return Err(ConfigError::MissingFile(p));
            }
            Ok(Some(p))
        };

        let density = |side: &str| -> Result<Option<DensityInput>, ConfigError> {
            let key = format!("{side}.kind");
            let Some(kind) = kv.get(&key) else { return Ok(None) };
            let f = |k: &str| kv.floats(&format!("{side}.{k}"));
            Ok(Some(match kind {
                "uniform" => {
                    let lo = f("lo")?.ok_or_else(|| ConfigError::Missing(format!("{side}.lo")))?;
                    let hi = f("hi")?.ok_or_else(|| ConfigError::Missing(format!("{side}.hi")))?;
                    DensityInput::Uniform { lo, hi }
                }
                "gaussian" => {
                    let mean = f("mean")?.ok_or_else(|| ConfigError::Missing(format!("{side}.mean")))?;
                    let n = mean.len();
                    let cov = f("cov")?.unwrap_or_else(|| DMatrix::<f64>::identity(n, n).as_slice().to_vec());
                    let support = match (f("lo")?, f("hi")?) {
                        (Some(lo), Some(hi)) => Some((lo, hi)),
                        (None, None) => None,
                        _ => return Err(bad(&key, "support needs both lo and hi")),
                    };
                    DensityInput::Gaussian { mean, cov, support }
                }
                "file" => DensityInput::File(
                    file(&format!("{side}.file"))?.ok_or_else(|| ConfigError::Missing(format!("{side}.file")))?,
                ),
                other => return Err(bad(&key, format!("unknown density kind `{other}`"))),
            }))
        };

        let map = match kv.get("map.source") {
            None => None,
            Some(s @ ("monotone" | "gaussian")) => Some(MapSource::Solver(s.to_string())),
            Some("analytic") => {
                let fam = kv.get("map.family").ok_or_else(|| ConfigError::Missing("map.family".into()))?;
                Some(MapSource::Analytic(parse_family(fam, &kv, "map.family")?))
            }
            Some("grid-file") => Some(MapSource::GridFile(
                file("map.file")?.ok_or_else(|| ConfigError::Missing("map.file".into()))?,
            )),
            Some(other) => return Err(bad("map.source", format!("unknown map source `{other}`"))),
        };

        let competitors = match kv.get("compare.competitors") {
            None => Vec::new(),
            Some(list) => list
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| parse_family(s, &kv, "compare.competitors"))
                .collect::<Result<_, _>>()?,
        };

        let mut tolerances = BTreeMap::new();
        for name in CHECK_NAMES {
            let key = format!("checks.{name}");
            if let Some(t) = kv.parsed::<f64>(&key)? {
                if !(t > 0.0 && t.is_finite()) {
                    return Err(bad(&key, "tolerances must be positive"));
                }
                tolerances.insert(name.to_string(), t);
            }
        }
        let checks = kv.get("checks.run").map(|v| {
            v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect::<Vec<_>>()
        });
        if let Some(list) = &checks {
            if let Some(u) = list.iter().find(|c| !CHECK_NAMES.contains(&c.as_str())) {
                return Err(bad("checks.run", format!("unknown check `{u}`")));
            }
        }

        let positive = |key: &str, v: Option<f64>| -> Result<Option<f64>, ConfigError> {
            match v {
                Some(x) if !(x > 0.0 && x.is_finite()) => Err(bad(key, "must be positive")),
                _ => Ok(v),
            }
        };
        let count = |key: &str, default: usize| -> Result<usize, ConfigError> {
            match kv.parsed::<usize>(key)? {
                Some(0) => Err(bad(key, "must be positive")),
                v => Ok(v.unwrap_or(default)),
            }
        };

        let domain = match (kv.floats("domain.lo")?, kv.floats("domain.hi")?) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(bad("domain.lo", "domain needs both lo and hi")),
        };

        let cfg = RunConfig {
            cost: kv.get("cost.id").unwrap_or("quadratic").to_string(),
            cost_file: file("cost.file")?,
            source: density("source")?,
            target: density("target")?,
            domain,
            grid: count("grid.cells", 64)?,
            map,
            nodes: count("map.nodes", 65)?,
            competitors,
            compare_cells: count("compare.cells", 64)?,
            checks,
            tolerances,
            fd_step: positive("run.fd_step", kv.parsed("run.fd_step")?)?,
            comass_points: count("comass.points", 20)?,
            comass_form: match kv.get("comass.form").unwrap_or("calibration") {
                "calibration" => FormKind::Calibration,
                "negative" => FormKind::Negative,
                other => return Err(bad("comass.form", format!("unknown form `{other}`"))),
            },
            comass_box: interval(&kv, "comass")?,
            curvature_points: count("curvature.points", 10)?,
            curvature_box: interval(&kv, "curvature")?,
            curvature_tol: positive("curvature.tol", kv.parsed("curvature.tol")?)?.unwrap_or(1e-8),
            curvature_step: positive("curvature.step", kv.parsed("curvature.step")?)?,
            fd_scale: positive("suite.fd_scale", kv.parsed("suite.fd_scale")?)?.unwrap_or(1.0),
            mutation: match kv.get("suite.mutation").unwrap_or("none") {
                "none" => Mutation::None,
                "exponent" => Mutation::Exponent,
                "half" => Mutation::Half,
                other => return Err(bad("suite.mutation", format!("unknown mutation `{other}`"))),
            },
            out: kv.get("run.out").map(|o| base.join(o)).unwrap_or_else(|| PathBuf::from("otcal-out")),
            seed: kv.parsed("run.seed")?.unwrap_or(0),
        };
        if cfg.cost == "custom-grid" && cfg.cost_file.is_none() {
            return Err(ConfigError::Missing("cost.file".into()));
        }
        Ok(cfg)
    }

    /// Tolerance for `check`, falling back to `default`.
    pub fn tolerance(&self, check: &str, default: f64) -> f64 {
        self.tolerances.get(check).copied().unwrap_or(default)
    }

    pub fn wants(&self, check: &str) -> bool {
        self.checks.as_ref().is_none_or(|c| c.iter().any(|s| s == check))
    }

    pub fn density(&self, side: &str) -> Result<DensitySpec, ConfigError> {
        let input = match side {
            "source" => &self.source,
            _ => &self.target,
        };
        let input = input.as_ref().ok_or_else(|| ConfigError::Missing(format!("{side}.kind")))?;
        let inv = |e: otcal::Error| ConfigError::Invalid(format!("{side} density: {e}"));
        match input {
            DensityInput::Uniform { lo, hi } => Ok(DensitySpec::uniform(BoxDomain::new(lo.clone(), hi.clone()).map_err(inv)?)),
            DensityInput::Gaussian { mean, cov, support } => {
                let n = mean.len();
                if cov.len() != n * n {
                    return Err(bad(&format!("{side}.cov"), format!("expected {} entries", n * n)));
                }
                let (m, c) = (DVector::from_column_slice(mean), DMatrix::from_row_slice(n, n, cov));
                match support {
                    Some((lo, hi)) => {
                        DensitySpec::gaussian_on(m, c, BoxDomain::new(lo.clone(), hi.clone()).map_err(inv)?).map_err(inv)
                    }
                    None => DensitySpec::gaussian(m, c).map_err(inv),
                }
            }
            DensityInput::File(p) => {
                let f = std::fs::File::open(p).map_err(|e| ConfigError::Unreadable {
                    path: p.clone(),
                    reason: e.to_string(),
                })?;
                DensitySpec::from_csv(f).map_err(inv)
            }
        }
    }

    pub fn cost_field(&self, n: usize) -> Result<CostField, ConfigError> {
        if self.cost == "custom-grid" {
            let p = self.cost_file.as_ref().ok_or_else(|| ConfigError::Missing("cost.file".into()))?;
            let f = std::fs::File::open(p).map_err(|e| ConfigError::Unreadable {
                path: p.clone(),
                reason: e.to_string(),
            })?;
            return GridCost::from_csv(f)
                .map(GridCost::into_cost)
                .map_err(|e| bad("cost.file", e.to_string()));
        }
        CostField::builtin(&self.cost, n).map_err(|e| bad("cost.id", e.to_string()))
    }

    pub fn problem(&self) -> Result<TransportProblem, ConfigError> {
        let (rho, rhobar) = (self.density("source")?, self.density("target")?);
        let cost = self.cost_field(rho.dim())?;
        TransportProblem::new(cost, rho, rhobar).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Box the graph is sampled on: `domain.*` if set, else the source support.
    pub fn source_box(&self, problem: &TransportProblem) -> Result<BoxDomain, ConfigError> {
        match &self.domain {
            Some((lo, hi)) => BoxDomain::new(lo.clone(), hi.clone()).map_err(|e| bad("domain.lo", e.to_string())),
            None => Ok(problem.source.support().clone()),
        }
    }

    pub fn family_map(&self, family: &Family, problem: &TransportProblem) -> Result<TransportMap, ConfigError> {
        let src = self.source_box(problem)?;
        let tgt = problem.target.support().clone();
        let n = src.dim();
        let inv = |e: otcal::Error| ConfigError::Invalid(e.to_string());
        Ok(match family {
            Family::Identity => TransportMap::linear("identity", DMatrix::identity(n, n), src, tgt),
            Family::Rotation(deg) => {
                if n != 2 {
                    return Err(ConfigError::Invalid("rotation maps need n = 2".into()));
                }
                TransportMap::rotation(deg.to_radians(), src.clone(), union(&rotated_hull(&src), &tgt))
                    .renamed(format!("rotation:{deg}"))
            }
            Family::Dilation(k) => {
                TransportMap::linear(format!("dilation:{k}"), DMatrix::identity(n, n) * *k, src, tgt)
            }
            Family::Affine { matrix, offset } => {
                if matrix.len() != n * n || !(offset.is_empty() || offset.len() == n) {
                    return Err(bad("map.matrix", format!("expected {} matrix and {n} offset entries", n * n)));
                }
                let b = if offset.is_empty() { DVector::zeros(n) } else { DVector::from_column_slice(offset) };
                TransportMap::affine("affine", DMatrix::from_row_slice(n, n, matrix), b, src, tgt)
            }
            Family::Tent => tent_map(src).map_err(inv)?,
            Family::Sinusoid(a) => sinusoidal_map(src, *a).map_err(inv)?.renamed(format!("sinusoid:{a}")),
        })
    }

    /// The map under test. Errors here are configuration errors.
    pub fn transport_map(&self, problem: &TransportProblem) -> Result<TransportMap, ConfigError> {
        let source = self.map.as_ref().ok_or_else(|| ConfigError::Missing("map.source".into()))?;
        let inv = |e: otcal::Error| ConfigError::Invalid(e.to_string());
        let map = match source {
            MapSource::Solver(s) if s == "monotone" => solve_1d_monotone(&problem.source, &problem.target, self.nodes).map_err(inv)?,
            MapSource::Solver(_) => gaussian_between(problem)?,
            MapSource::Analytic(f) => self.family_map(f, problem)?,
            MapSource::GridFile(p) => {
                let f = std::fs::File::open(p).map_err(|e| ConfigError::Unreadable {
                    path: p.clone(),
                    reason: e.to_string(),
                })?;
                let mut rdr = csv::Reader::from_reader(f);
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                for rec in rdr.records() {
                    let rec = rec.map_err(|e| bad("map.file", e.to_string()))?;
                    let v: Vec<f64> = rec
                        .iter()
                        .map(|s| s.trim().parse::<f64>().map_err(|e| bad("map.file", format!("{s}: {e}"))))
                        .collect::<Result<_, _>>()?;
                    if v.len() != 2 {
                        return Err(bad("map.file", "grid maps are 1-D: two columns `x,y`"));
                    }
                    xs.push(v[0]);
                    ys.push(v[1]);
                }
                let src = self.source_box(problem)?;
                interpolate_1d("grid-file", xs, ys, src, problem.target.support().clone()).map_err(inv)?
            }
        };
        Ok(match self.fd_step {
            Some(h) => map.with_fd_step(h),
            None => map,
        })
    }
}

/// `x ↦ m̄ + A(x − m)` between the two Gaussian densities of `problem`.
fn gaussian_between(problem: &TransportProblem) -> Result<TransportMap, ConfigError> {
    let (Some((m, s)), Some((mb, sb))) = (problem.source.gaussian_parameters(), problem.target.gaussian_parameters()) else {
        return Err(ConfigError::Invalid("solver `gaussian` needs Gaussian source and target".into()));
    };
    let a = gaussian_map_matrix(s, sb).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let b = mb - &a * m;
    Ok(TransportMap::affine(
        "gaussian",
        a,
        b,
        problem.source.support().clone(),
        problem.target.support().clone(),
    ))
}

/// Bounding box of all rotations of `b` about its centre.
fn rotated_hull(b: &BoxDomain) -> BoxDomain {
    let c = b.center();
    let r = b.diameter() / 2.0;
    BoxDomain::new(c.iter().map(|v| v - r).collect(), c.iter().map(|v| v + r).collect()).expect("nonempty box")
}

fn union(a: &BoxDomain, b: &BoxDomain) -> BoxDomain {
    let lo = a.lo().iter().zip(b.lo()).map(|(x, y)| x.min(*y)).collect();
    let hi = a.hi().iter().zip(b.hi()).map(|(x, y)| x.max(*y)).collect();
    BoxDomain::new(lo, hi).expect("union of boxes")
}
