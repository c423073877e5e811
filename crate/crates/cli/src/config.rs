//! Scenario files: a TOML tree with complex numbers written as `[re, im]`.
//!
//! ```toml
//! [system]
//! dim = 2
//! observable = [[1, 0], [0, 0], [0, 0], [-1, 0]]   # row major
//! pre_state = [[0.7071067811865476, 0], [0.7071067811865476, 0]]
//! post_state = [[0.7071067811865476, 0], [0, 0.7071067811865476]]
//!
//! [pointer.family]
//! kind = "chirped"
//! sigma = 1.0
//! c = 0.25
//!
//! [pointer.grid]
//! n = 4096
//! extent = 40.0
//!
//! [constants]
//! gamma = 0.1
//!
//! [run]
//! observables = ["q^2", { basis = "p", coefficients = [0, 1, 0.5] }]
//! gammas = [0.2, 0.1, 0.05, 0.025]
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use weakvar::hilbert::{SystemSpec, DEFAULT_OVERLAP_FLOOR};
use weakvar::perturb::ObservablePoly;
use weakvar::pointer::{build_pointer, Canonical, GridSpec, PointerState, StateFamily};
use weakvar::vonneumann::Potential;
use weakvar::C64;

use crate::error::{CliError, CliResult};

pub type Pair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub system: SystemConfig,
    pub pointer: PointerConfig,
    #[serde(default)]
    pub constants: Constants,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    pub observable: Vec<Pair>,
    pub pre_state: Vec<Pair>,
    pub post_state: Vec<Pair>,
    #[serde(default = "default_overlap_floor")]
    pub overlap_floor: f64,
}

fn default_overlap_floor() -> f64 {
    DEFAULT_OVERLAP_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointerConfig {
    pub family: FamilyConfig,
    #[serde(default)]
    pub grid: GridConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilyConfig {
    Gaussian {
        sigma: f64,
        #[serde(default)]
        q0: f64,
        #[serde(default)]
        p0: f64,
    },
    Chirped {
        sigma: f64,
        c: f64,
    },
    Cubic {
        sigma: f64,
        b: f64,
    },
    MomentumSkewed {
        s: f64,
        lambda: f64,
    },
    /// Whitespace separated `q re im` rows, one per grid point.
    Tabulated {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub extent: f64,
    pub center: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self { n: g.n_points, extent: g.extent, center: g.center }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(default = "one")]
    pub mass: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

fn default_gamma() -> f64 {
    0.1
}

impl Default for Constants {
    fn default() -> Self {
        Self { hbar: 1.0, mass: 1.0, gamma: default_gamma() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub gammas: Vec<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "free")]
    pub potential: Potential,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

fn default_dt() -> f64 {
    1e-3
}

fn free() -> Potential {
    Potential::Free
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            observables: Vec::new(),
            gammas: Vec::new(),
            epsilon: default_epsilon(),
            sweep: None,
            potential: Potential::Free,
            dt: default_dt(),
        }
    }
}

/// Sweep of one numeric key, given as a dotted path such as
/// `pointer.family.b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// `"q"`, `"p^3"`, or a coefficient table in ascending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObservableConfig {
    Monomial(String),
    Poly(PolyConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolyConfig {
    pub basis: Canonical,
    pub coefficients: Vec<f64>,
}

impl ObservableConfig {
    pub fn build(&self) -> Result<ObservablePoly, String> {
        match self {
            ObservableConfig::Monomial(text) => parse_monomial(text),
            ObservableConfig::Poly(p) => ObservablePoly::new(p.basis, p.coefficients.clone()).map_err(|e| e.to_string()),
        }
    }
}

fn parse_monomial(text: &str) -> Result<ObservablePoly, String> {
    let text = text.trim();
    let (base, power) = match text.split_once('^') {
        Some((b, n)) => (b.trim(), n.trim().parse::<usize>().map_err(|_| format!("bad power in {text:?}"))?),
        None => (text, 1),
    };
    let basis = match base {
        "q" => Canonical::Q,
        "p" => Canonical::P,
        _ => return Err(format!("unknown observable {text:?}, expected q^n or p^n")),
    };
    if power == 0 {
        return Err(format!("{text:?} is a constant"));
    }
    Ok(ObservablePoly::power(basis, power))
}

/// A validated scenario ready for the engine.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub label: String,
    pub config: ScenarioConfig,
    pub system: SystemSpec,
    pub pointer: PointerState,
    pub observables: Vec<ObservablePoly>,
}

impl Loaded {
    pub fn gamma(&self) -> f64 {
        self.config.constants.gamma
    }

    pub fn mass(&self) -> f64 {
        self.config.constants.mass
    }
}

/// Parsed but not yet validated scenario, kept as a value tree so
/// individual keys can be overridden.
#[derive(Debug, Clone)]
pub struct RawScenario {
    pub tree: toml::Table,
    pub label: String,
    /// Relative tabulated paths resolve against this directory.
    pub base_dir: PathBuf,
}

impl RawScenario {
    pub fn parse(text: &str, label: impl Into<String>, base_dir: impl Into<PathBuf>) -> CliResult<Self> {
        let tree: toml::Table = toml::from_str(text).map_err(|e| CliError::config(first_key(&e), e.to_string()))?;
        Ok(Self { tree, label: label.into(), base_dir: base_dir.into() })
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let label = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(&text, label, base)
    }

    /// Sets a numeric key given by a dotted path. The key must already
    /// exist unless its parent table does.
    pub fn set(&mut self, dotted: &str, x: f64) -> CliResult<()> {
        let parts: Vec<&str> = dotted.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields at least one part");
        let mut table = &mut self.tree;
        for (depth, key) in parents.iter().enumerate() {
            let here = parts[..=depth].join(".");
            let entry = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| CliError::config(&here, "is not a table"))?;
        }
        let integral = x.fract() == 0.0 && x.abs() < 2f64.powi(53);
        let value = match table.get(*last) {
            // f64 fields accept integers, so a new whole number can go in as one
            Some(toml::Value::Integer(_)) | None if integral => toml::Value::Integer(x as i64),
            Some(toml::Value::Integer(_)) => return Err(CliError::config(dotted, format!("expects an integer, got {x}"))),
            Some(toml::Value::Float(_)) | None => toml::Value::Float(x),
            Some(_) => return Err(CliError::config(dotted, "is not numeric")),
        };
        table.insert(last.to_string(), value);
        Ok(())
    }

    pub fn config(&self) -> CliResult<ScenarioConfig> {
        toml::Value::Table(self.tree.clone())
            .try_into()
            .map_err(|e: toml::de::Error| CliError::config(first_key(&e), e.to_string()))
    }

    pub fn load(&self) -> CliResult<Loaded> {
        let config = self.config()?;
        build(config, &self.label, &self.base_dir)
    }
}

/// Dotted key named by a toml error: the "in `a.b`" suffix, extended by
/// the field of an "unknown field `c`" or "missing field `c`" message.
fn first_key(err: &toml::de::Error) -> String {
    let msg = err.to_string();
    let quoted_after = |marker: &str| msg.split_once(marker).and_then(|(_, rest)| rest.split('`').next()).map(str::to_owned);
    let table = quoted_after("in `");
    let field = quoted_after("unknown field `").or_else(|| quoted_after("missing field `"));
    match (table, field) {
        (Some(t), Some(f)) => format!("{t}.{f}"),
        (None, Some(f)) => f,
        (Some(t), None) => t,
        (None, None) => "<document>".into(),
    }
}

pub fn build(config: ScenarioConfig, label: &str, base_dir: &Path) -> CliResult<Loaded> {
    let c = config.constants;
    for (key, v) in [("constants.hbar", c.hbar), ("constants.mass", c.mass)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(CliError::config(key, format!("must be positive, got {v}")));
        }
    }
    if !c.gamma.is_finite() {
        return Err(CliError::config("constants.gamma", "must be finite"));
    }
    if !(config.run.epsilon > 0.0) {
        return Err(CliError::config("run.epsilon", format!("must be positive, got {}", config.run.epsilon)));
    }
    if !(config.run.dt > 0.0 && config.run.dt.is_finite()) {
        return Err(CliError::config("run.dt", format!("must be positive, got {}", config.run.dt)));
    }

    let system = build_system(&config.system)?;
    let pointer = build_pointer_state(&config.pointer, c.hbar, base_dir)?;
    config.run.potential.sample(pointer.grid()).map_err(|e| CliError::from_core("run.potential", e))?;
    let observables = config
        .run
        .observables
        .iter()
        .enumerate()
        .map(|(i, o)| o.build().map_err(|m| CliError::config(format!("run.observables[{i}]"), m)))
        .collect::<CliResult<Vec<_>>>()?;
    let label = config.label.clone().unwrap_or_else(|| label.to_owned());
    Ok(Loaded { label, config, system, pointer, observables })
}

fn complex_vec(key: &str, pairs: &[Pair], len: usize) -> CliResult<DVector<C64>> {
    if pairs.len() != len {
        return Err(CliError::config(key, format!("has {} entries, expected {len}", pairs.len())));
    }
    Ok(DVector::from_iterator(len, pairs.iter().map(|[re, im]| C64::new(*re, *im))))
}

fn build_system(s: &SystemConfig) -> CliResult<SystemSpec> {
    if s.dim == 0 {
        return Err(CliError::config("system.dim", "must be at least 1"));
    }
    let d = s.dim;
    let flat = complex_vec("system.observable", &s.observable, d * d)?;
    let observable = DMatrix::from_row_iterator(d, d, flat.iter().copied());
    let pre = complex_vec("system.pre_state", &s.pre_state, d)?;
    let post = complex_vec("system.post_state", &s.post_state, d)?;
    SystemSpec::with_overlap_floor(observable, pre, post, s.overlap_floor).map_err(|e| {
        let key = match &e {
            weakvar::Error::NonHermitian { .. } => "system.observable",
            weakvar::Error::NonNormalized { which, .. } if which.starts_with("post") => "system.post_state",
            weakvar::Error::NonNormalized { .. } => "system.pre_state",
            weakvar::Error::InvalidArgument(_) => "system.overlap_floor",
            _ => "system",
        };
        CliError::from_core(key, e)
    })
}

fn build_pointer_state(p: &PointerConfig, hbar: f64, base_dir: &Path) -> CliResult<PointerState> {
    let grid = GridSpec { n_points: p.grid.n, center: p.grid.center, extent: p.grid.extent, hbar };
    grid.validate().map_err(|e| CliError::from_core("pointer.grid", e))?;
    let family = match &p.family {
        FamilyConfig::Gaussian { sigma, q0, p0 } => StateFamily::Gaussian { sigma: *sigma, q0: *q0, p0: *p0 },
        FamilyConfig::Chirped { sigma, c } => StateFamily::Chirped { sigma: *sigma, c: *c },
        FamilyConfig::Cubic { sigma, b } => StateFamily::Cubic { sigma: *sigma, b: *b },
        FamilyConfig::MomentumSkewed { s, lambda } => StateFamily::MomentumSkewed { s: *s, lambda: *lambda },
        FamilyConfig::Tabulated { path } => {
            StateFamily::Tabulated { samples: read_tabulated(&base_dir.join(path), &grid)? }
        }
    };
    build_pointer(&family, grid).map_err(|e| CliError::from_core("pointer.family", e))
}

const KEY_TABULATED: &str = "pointer.family.path";

/// Reads `q re im` rows; `#` starts a comment.
pub fn read_tabulated(path: &Path, grid: &GridSpec) -> CliResult<Vec<C64>> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
    let mut samples = Vec::with_capacity(grid.n_points);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::config(KEY_TABULATED, format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        let [q, re, im] = cols[..] else {
            return Err(CliError::config(
                KEY_TABULATED,
                format!("{}:{}: expected 3 columns, got {}", path.display(), lineno + 1, cols.len()),
            ));
        };
        let k = samples.len();
        if k < grid.n_points && (q - grid.q(k)).abs() > 1e-9 * grid.dq().max(1.0) {
            return Err(CliError::config(
                KEY_TABULATED,
                format!("{}:{}: q = {q} does not match grid point {}", path.display(), lineno + 1, grid.q(k)),
            ));
        }
        samples.push(C64::new(re, im));
    }
    if samples.len() != grid.n_points {
        return Err(CliError::config(
            KEY_TABULATED,
            format!("{} rows, grid has {} points", samples.len(), grid.n_points),
        ));
    }
    Ok(samples)
}

impl ScenarioConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario config is always representable as TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s_a() -> RawScenario {
        crate::registry::scenario("S-A").unwrap()
    }

    #[test]
    fn monomials() {
        assert_eq!(parse_monomial("q").unwrap(), ObservablePoly::q());
        assert_eq!(parse_monomial(" p ^ 3").unwrap(), ObservablePoly::power(Canonical::P, 3));
        assert!(parse_monomial("x^2").is_err());
        assert!(parse_monomial("q^0").is_err());
        assert!(parse_monomial("q^-1").is_err());
    }

    #[test]
    fn polynomial_table_observable() {
        let mut raw = s_a();
        let run = raw.tree.get_mut("run").unwrap().as_table_mut().unwrap();
        let obs: toml::Value = toml::from_str::<toml::Table>("o = [{ basis = \"p\", coefficients = [1, 0, 2] }]").unwrap()["o"].clone();
        run.insert("observables".into(), obs);
        let s = raw.load().unwrap();
        assert_eq!(s.observables, [ObservablePoly::new(Canonical::P, vec![1.0, 0.0, 2.0]).unwrap()]);
    }

    #[test]
    fn set_overrides_nested_keys() {
        let mut raw = s_a();
        raw.set("pointer.family.c", -0.5).unwrap();
        raw.set("pointer.grid.n", 2048.0).unwrap();
        let c = raw.config().unwrap();
        assert_eq!(c.pointer.family, FamilyConfig::Chirped { sigma: 1.0, c: -0.5 });
        assert_eq!(c.pointer.grid.n, 2048);
    }

    #[test]
    fn set_rejects_fractional_integer_and_non_numeric() {
        let mut raw = s_a();
        raw.set("pointer.grid.n", 2048.0).unwrap();
        assert!(matches!(raw.set("pointer.grid.n", 10.5), Err(CliError::Config { key, .. }) if key == "pointer.grid.n"));
        assert!(raw.set("pointer.family.kind", 1.0).is_err());
        assert!(raw.set("system.dim.x", 1.0).is_err());
    }

    #[test]
    fn unknown_family_parameter_names_key() {
        let text = crate::registry::source("S-A").unwrap().replace("c = 0.25", "c = 0.25\nb = 1.0");
        let err = RawScenario::parse(&text, "x", ".").unwrap().load().unwrap_err();
        assert!(err.to_string().contains('b'), "{err}");
        assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG);
    }

    #[test]
    fn missing_field_names_key() {
        let text = crate::registry::source("S-A").unwrap().replace("c = 0.25\n", "");
        let err = RawScenario::parse(&text, "x", ".").unwrap().load().unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "pointer.family.c"), "{err}");
    }

    #[test]
    fn dimension_mismatch_names_key() {
        let text = crate::registry::source("D1").unwrap().replace("pre_state = [[1, 0]]", "pre_state = [[1, 0], [0, 0]]");
        let err = RawScenario::parse(&text, "x", ".").unwrap().load().unwrap_err();
        assert!(matches!(err, CliError::Config { ref key, .. } if key == "system.pre_state"), "{err}");
    }

    #[test]
    fn bad_grid_and_constants_are_config_errors() {
        for (key, v) in [("pointer.grid.n", 1000.0), ("constants.mass", 0.0), ("constants.hbar", -1.0), ("run.epsilon", 0.0)] {
            let mut raw = s_a();
            raw.set(key, v).unwrap();
            let err = raw.load().unwrap_err();
            assert_eq!(err.exit_code(), crate::error::EXIT_CONFIG, "{key}");
            assert!(err.to_string().contains(key.rsplit_once('.').unwrap().0), "{key}: {err}");
        }
    }

    #[test]
    fn tabulated_rows_checked_against_grid() {
        let grid = GridSpec::new(64, 20.0);
        let dir = std::env::temp_dir().join(format!("weakvar-tab-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let short = dir.join("short.txt");
        fs::write(&short, "0 1 0\n").unwrap();
        assert!(read_tabulated(&short, &grid).is_err());
        let shifted = dir.join("shifted.txt");
        let rows: String = (0..64).map(|k| format!("{} 0 0\n", grid.q(k) + 0.01)).collect();
        fs::write(&shifted, rows).unwrap();
        assert!(read_tabulated(&shifted, &grid).unwrap_err().to_string().contains("does not match"));
        fs::remove_dir_all(dir).unwrap();
    }
}
