//! Run configuration: a TOML document, overridden key by key from the command line.

use std::path::{Path, PathBuf};

use metastable::evolution::EvolutionConfig;
use metastable::spectral::default_x_t;
use metastable::{Boundary, Grid, GridSpec, Potential, PotentialSpec};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Environment variable holding the root that relative output directories hang off.
pub const OUTPUT_ROOT_ENV: &str = "METASTABLE_OUTPUT_ROOT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: String,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Flux point; one unit past the barrier when absent.
    #[serde(default)]
    pub x_t: Option<f64>,
    pub potential: PotentialSpec,
    pub grid: GridSpec,
    pub evolution: EvolutionConfig,
    pub state: StateSpec,
    #[serde(default)]
    pub basis: BasisSpec,
    #[serde(default)]
    pub wkb: WkbSpec,
    #[serde(default)]
    pub current: CurrentSpec,
    #[serde(default)]
    pub saddle: SaddleSpec,
    #[serde(default)]
    pub compare: CompareSpec,
    #[serde(default)]
    pub reproduce: ReproduceSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    /// Poisson coefficients over the resonances.
    Coherent,
    /// Poisson magnitudes with seeded uniform phases.
    RandomPhase,
    /// Coefficients read from a CSV of `n, re, im`.
    File,
    /// The displaced harmonic ground state, projected on the resonances.
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    pub kind: StateKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub alpha_im: f64,
    /// Highest level kept; the cumulative-mass rule picks it when absent.
    #[serde(default)]
    pub n_max: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub file: Option<PathBuf>,
}

impl StateSpec {
    pub fn alpha(&self) -> Complex64 {
        Complex64::new(self.alpha, self.alpha_im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSpec {
    /// Largest number of resonances kept.
    pub max_count: usize,
}

impl Default for BasisSpec {
    fn default() -> Self {
        BasisSpec { max_count: 40 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WkbSpec {
    /// Also solve for the CAP resonances and tabulate their widths.
    pub with_cap: bool,
}

impl Default for WkbSpec {
    fn default() -> Self {
        WkbSpec { with_cap: true }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSource {
    Cap,
    Wkb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurrentSpec {
    pub source: LevelSource,
    /// End of the time grid; `evolution.T` when absent.
    pub t_end: Option<f64>,
    /// Time step; `evolution.dt · evolution.record_stride` when absent.
    pub dt: Option<f64>,
    /// Apply the low-level prefactor to the WKB widths.
    pub with_g: bool,
}

impl Default for CurrentSpec {
    fn default() -> Self {
        CurrentSpec { source: LevelSource::Cap, t_end: None, dt: None, with_g: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleSpec {
    pub exact_g: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareReference {
    /// CAP evolution against the resonance formula.
    Formula,
    /// CAP evolution against the hard-wall evolution.
    Hardwall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub reference: CompareReference,
    pub window: Option<[f64; 2]>,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec { reference: CompareReference::Formula, window: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceSpec {
    /// Step for the runs compared against the formula and the saddle burst.
    pub fine_dt: f64,
    /// Oscillation periods for those runs.
    pub periods: f64,
    /// Periods for the coherent versus random-phase runs.
    pub decay_periods: f64,
}

impl Default for ReproduceSpec {
    fn default() -> Self {
        ReproduceSpec { fine_dt: 2.5e-4 * std::f64::consts::TAU, periods: 5.0, decay_periods: 10.0 }
    }
}

/// A configuration that has passed every check, with the objects it defines.
pub struct Resolved {
    pub config: RunConfig,
    pub potential: Potential,
    pub grid: Grid,
    pub x_t: f64,
    /// SHA-256 of the canonical JSON form of `config`.
    pub hash: String,
}

impl Resolved {
    pub fn omega(&self) -> f64 {
        self.config.potential.omega
    }

    pub fn hbar(&self) -> f64 {
        self.config.potential.hbar
    }

    pub fn period(&self) -> f64 {
        std::f64::consts::TAU / self.omega()
    }

    /// `<root>/<output_dir>/<experiment>`, with the root from the environment.
    pub fn output_dir(&self) -> PathBuf {
        let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."));
        root.join(&self.config.output_dir).join(&self.config.experiment)
    }
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::ConfigInvalid { field: field.to_string(), message: message.into() }
}

/// Parses `text`, applies `overrides` (`dotted.key = TOML value`) and deserializes.
pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid("<document>", e.message()))?;
    for (key, value) in overrides {
        set_key(&mut doc, key, value)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(doc)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().message().to_string();
        // a missing field is reported at its parent; name the field itself
        let field = match inner.strip_prefix("missing field `").and_then(|s| s.strip_suffix('`')) {
            Some(name) if path == "." => name.to_string(),
            Some(name) => format!("{path}.{name}"),
            None => path,
        };
        invalid(&field, inner)
    })
}

fn set_key(doc: &mut toml::Table, key: &str, raw: &str) -> Result<(), CliError> {
    let value = parse_value(raw);
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| invalid(key, "empty key"))?;
    let mut table = doc;
    for p in parts {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| invalid(key, format!("`{p}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// A TOML literal when it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("<config>", format!("cannot read {}: {e}", path.display())))?;
    parse(&text, overrides)
}

fn is_safe_token(s: &str) -> bool {
    !s.is_empty() && s.len() <= 64 && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

/// Builds the potential and grid and checks everything that does not need a solve.
pub fn resolve(config: RunConfig) -> Result<Resolved, CliError> {
    if !is_safe_token(&config.experiment) {
        return Err(invalid("experiment", format!("`{}` is not a filesystem-safe token", config.experiment)));
    }
    let potential = Potential::new(config.potential.clone()).map_err(|e| invalid("potential", e.to_string()))?;
    let grid = config.grid.build().map_err(|e| invalid("grid", e.to_string()))?;
    grid.validate_for(&potential, Boundary::Cap).map_err(|e| invalid("grid", e.to_string()))?;
    config.evolution.validate(config.potential.omega).map_err(|e| invalid("evolution", e.to_string()))?;
    let x_t = config.x_t.unwrap_or_else(|| default_x_t(&potential));
    let s = potential.spec();
    if !(x_t > s.l + s.w && x_t < s.x_cap) {
        return Err(invalid("x_t", format!("{x_t} must lie between the barrier exit {} and x_cap {}", s.l + s.w, s.x_cap)));
    }
    grid.index_of(x_t).map_err(|e| invalid("x_t", e.to_string()))?;
    let st = &config.state;
    if !(st.alpha.is_finite() && st.alpha_im.is_finite()) {
        return Err(invalid("state.alpha", "must be finite"));
    }
    if st.kind == StateKind::File && st.file.is_none() {
        return Err(invalid("state.file", "required when state.kind = \"file\""));
    }
    let cur = &config.current;
    if cur.t_end.is_some_and(|t| !(t > 0.0)) {
        return Err(invalid("current.t_end", "must be positive"));
    }
    if cur.dt.is_some_and(|t| !(t > 0.0)) {
        return Err(invalid("current.dt", "must be positive"));
    }
    if let Some([a, b]) = config.compare.window {
        if !(b > a) {
            return Err(invalid("compare.window", "needs start < end"));
        }
    }
    let rp = &config.reproduce;
    if !(rp.fine_dt > 0.0 && rp.fine_dt <= config.evolution.dt) {
        return Err(invalid("reproduce.fine_dt", "must be positive and no larger than evolution.dt"));
    }
    if !(rp.periods >= 2.0 && rp.decay_periods >= 1.0) {
        return Err(invalid("reproduce.periods", "need at least two periods (and one for decay_periods)"));
    }
    if config.basis.max_count == 0 {
        return Err(invalid("basis.max_count", "must be at least 1"));
    }
    let hash = config_hash(&config);
    Ok(Resolved { config, potential, grid, x_t, hash })
}

pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}
