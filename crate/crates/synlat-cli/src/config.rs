//! Run configuration: the documented TOML schema, `--set` overrides, and
//! semantic validation with key-path error messages.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synlat::lattice::{C3Table, InteractionSpec, LatticeSpec};
use synlat::spam::SpamModel;

use crate::ConfigError;

/// One simulation run.
///
/// ```toml
/// [lattice]              # sites, links[{from,to,rabi_mhz,phase_rad}],
/// ...                    # detunings, boundary, drive{type,detuning_mhz}
/// [interaction]          # v_mhz | separation_um, optional c3_table_path
/// [initial]              # site = <label>  or  pair = [<label>, <label>]
/// [time]                 # t_final_us, samples (uniform grid from 0)
/// [solver]               # tol (adaptive stepper population tolerance)
/// [observables]          # trajectory, width, pair_sites, p00,
///                        # correlations_at_us = [...]
/// [[fits]]               # model + series
/// [spam]                 # mode = "forward" | "renormalize", contrast or p_u/p_l
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interaction: Option<InteractionConfig>,
    pub initial: InitialConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub observables: ObservablesConfig,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<FitConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spam: Option<SpamConfig>,
}

/// Pair interaction strength: either the nearest-neighbor scale directly or
/// an atom separation to derive it from the dipolar coefficient table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_mhz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation_um: Option<f64>,
    /// CSV with columns `i, j, c3_mhz_um3`; the built-in table when absent.
    /// Relative paths resolve against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c3_table_path: Option<String>,
}

impl InteractionConfig {
    pub fn build(&self, base_dir: &Path) -> Result<InteractionSpec, ConfigError> {
        let table = match &self.c3_table_path {
            Some(rel) => {
                let path = base_dir.join(rel);
                let text = fs::read_to_string(&path).map_err(|e| {
                    ConfigError::new(format!(
                        "config error at `interaction.c3_table_path`: cannot read {}: {e}",
                        path.display()
                    ))
                })?;
                C3Table::from_csv_str(&text).map_err(|e| {
                    ConfigError::new(format!("config error at `interaction.c3_table_path`: {e}"))
                })?
            }
            None => C3Table::builtin(),
        };
        match (self.v_mhz, self.separation_um) {
            (Some(v), None) => InteractionSpec::from_v(v, table),
            (None, Some(d)) => InteractionSpec::from_separation(d, table),
            _ => {
                return Err(ConfigError::new(
                    "config error at `interaction`: exactly one of `v_mhz` or `separation_um`",
                ))
            }
        }
        .map_err(|e| ConfigError::new(format!("config error at `interaction`: {e}")))
    }
}

/// Initial state: one site label (single-particle run) or a pair of labels
/// (two-atom run).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<[i32; 2]>,
}

/// Uniform output grid `0..=t_final_us` with `samples` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_final_us: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Population tolerance of the adaptive stepper (driven runs only).
    pub tol: f64,
    /// Substep cap for the adaptive stepper; exhausting it without reaching
    /// `tol` is a runtime error, not a silent degradation.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_substeps: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_substeps: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesConfig {
    /// Full basis-state probability table (`trajectory.csv` + provenance).
    pub trajectory: bool,
    /// Wavepacket width series λ(t); uses atom-averaged marginals on pair runs.
    pub width: bool,
    /// Atom-averaged site marginals (pair runs).
    pub pair_sites: bool,
    /// Joint population of the initial pair state (pair runs).
    pub p00: bool,
    /// Correlation matrices C_ij at these times (pair runs); times off the
    /// grid snap to the nearest output point and are flagged in the index.
    pub correlations_at_us: Vec<f64>,
}

impl Default for ObservablesConfig {
    fn default() -> Self {
        Self {
            trajectory: true,
            width: false,
            pair_sites: false,
            p00: false,
            correlations_at_us: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// λ(t) = A·(1 − cos 2πωt)
    BlochOscillation,
    /// P(t) = A·e^{−γt}·cos²(πωt) + c
    DampedSine,
    /// P(t) = a + b·e^{−βt²}
    GaussianDecay,
    /// P(t) = a + cos(ωt), fitted after rescaling the series to [−1, 1]
    Cosine,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::BlochOscillation => "bloch_oscillation",
            FitModel::DampedSine => "damped_sine",
            FitModel::GaussianDecay => "gaussian_decay",
            FitModel::Cosine => "cosine",
        }
    }
}

/// One requested fit: a model applied to a named series of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: FitModel,
    /// `lambda`, `p00`, or `site:<label>`.
    pub series: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpamMode {
    /// Degrade ideal populations into experiment-like values.
    Forward,
    /// Invert bare populations (unclamped; excursions outside [0,1] counted).
    Renormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContrastKind {
    Singles,
    Pair,
}

/// Measurement contrast applied column-wise to every population table the
/// run writes (`trajectory`, `pair_sites`, `p00`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpamConfig {
    pub mode: SpamMode,
    /// Named default contrast; when absent, pair runs use the pair contrast
    /// and single-particle runs the singles contrast.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contrast: Option<ContrastKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_l: Option<f64>,
}

impl SpamConfig {
    pub fn build(&self, is_pair: bool) -> Result<SpamModel, ConfigError> {
        match (self.p_u, self.p_l) {
            (Some(u), Some(l)) => SpamModel::new(u, l)
                .map_err(|e| ConfigError::new(format!("config error at `spam`: {e}"))),
            (None, None) => Ok(match self.contrast {
                Some(ContrastKind::Singles) => SpamModel::singles(),
                Some(ContrastKind::Pair) => SpamModel::pair(),
                None if is_pair => SpamModel::pair(),
                None => SpamModel::singles(),
            }),
            _ => Err(ConfigError::new(
                "config error at `spam`: `p_u` and `p_l` must be given together",
            )),
        }
    }
}

/// A parsed `fits[*].series` reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    Lambda,
    PairOrigin,
    Site(i32),
}

pub fn parse_series(s: &str) -> Result<Series, String> {
    match s {
        "lambda" => Ok(Series::Lambda),
        "p00" => Ok(Series::PairOrigin),
        _ => {
            if let Some(rest) = s.strip_prefix("site:") {
                rest.trim()
                    .parse::<i32>()
                    .map(Series::Site)
                    .map_err(|_| format!("bad site label in `{s}`"))
            } else {
                Err(format!("unknown series `{s}` (expected `lambda`, `p00`, or `site:<label>`)"))
            }
        }
    }
}

/// A config plus the directory its relative paths resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    /// For configs built in code rather than read from a file.
    pub fn inline(config: RunConfig) -> Self {
        Self { config, base_dir: PathBuf::from(".") }
    }
}

/// Parse `key.path=value`; the value is read as a TOML literal, falling back
/// to a string (so `--set lattice.boundary=open` works unquoted).
pub fn parse_set(s: &str) -> Result<(String, toml::Value), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ConfigError::new(format!("--set expects key.path=value, got `{s}`")))?;
    let key = k.trim();
    if key.is_empty() {
        return Err(ConfigError::new(format!("--set: empty key in `{s}`")));
    }
    let raw = v.trim();
    let val = toml::from_str::<toml::Table>(&format!("x = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("x"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    Ok((key.to_string(), val))
}

/// Write `val` at a dotted path inside a TOML document, creating intermediate
/// tables; numeric segments index into arrays.
pub fn apply_override(root: &mut toml::Value, path: &str, val: toml::Value) -> Result<(), ConfigError> {
    let segs: Vec<&str> = path.split('.').collect();
    if segs.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::new(format!("--set: malformed key path `{path}`")));
    }
    let mut cur = root;
    let mut pending = Some(val);
    for (i, seg) in segs.iter().enumerate() {
        let last = i + 1 == segs.len();
        let prefix = segs[..i].join(".");
        if let Ok(idx) = seg.parse::<usize>() {
            let arr = cur.as_array_mut().ok_or_else(|| {
                ConfigError::new(format!("--set: `{prefix}` is not an array"))
            })?;
            if idx >= arr.len() {
                return Err(ConfigError::new(format!(
                    "--set: index {idx} out of range for `{prefix}` (len {})",
                    arr.len()
                )));
            }
            if last {
                arr[idx] = pending.take().unwrap();
                return Ok(());
            }
            cur = &mut arr[idx];
        } else {
            let tab = cur.as_table_mut().ok_or_else(|| {
                ConfigError::new(format!("--set: `{prefix}` is not a table"))
            })?;
            if last {
                tab.insert(seg.to_string(), pending.take().unwrap());
                return Ok(());
            }
            cur = tab
                .entry(seg.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
    }
    Ok(())
}

/// Read a TOML document and apply `--set` overrides, without interpreting it.
pub fn document_from_file(path: &Path, sets: &[String]) -> Result<toml::Value, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut value: toml::Value = toml::from_str(&text)
        .map_err(|e| ConfigError::new(format!("config error in {}: {e}", path.display())))?;
    for s in sets {
        let (k, v) = parse_set(s)?;
        apply_override(&mut value, &k, v)?;
    }
    Ok(value)
}

/// Interpret a TOML document as a `RunConfig`: schema errors carry the key
/// path; an absent `detunings` list means all zeros.
pub fn config_from_value(value: toml::Value) -> Result<RunConfig, ConfigError> {
    let mut cfg: RunConfig = serde_path_to_error::deserialize(value)
        .map_err(|e| ConfigError::new(format!("config error at `{}`: {}", e.path(), e.inner())))?;
    if cfg.lattice.detunings.is_empty() {
        cfg.lattice.detunings = vec![0.0; cfg.lattice.sites.len()];
    }
    validate(&cfg)?;
    Ok(cfg)
}

pub fn load(path: &Path, sets: &[String]) -> Result<Loaded, ConfigError> {
    let value = document_from_file(path, sets)?;
    let config = config_from_value(value)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, base_dir })
}

pub fn validate(cfg: &RunConfig) -> Result<(), ConfigError> {
    cfg.lattice
        .validate()
        .map_err(|e| ConfigError::new(format!("config error at `lattice`: {e}")))?;
    let is_pair = match (cfg.initial.site, cfg.initial.pair) {
        (Some(_), None) => false,
        (None, Some(_)) => true,
        _ => {
            return Err(ConfigError::new(
                "config error at `initial`: exactly one of `site` or `pair` must be given",
            ))
        }
    };
    let known = |j: i32| cfg.lattice.site_index(j).is_some();
    if let Some(j) = cfg.initial.site {
        if !known(j) {
            return Err(ConfigError::new(format!(
                "config error at `initial.site`: label {j} not in lattice.sites"
            )));
        }
    }
    if let Some([a, b]) = cfg.initial.pair {
        for j in [a, b] {
            if !known(j) {
                return Err(ConfigError::new(format!(
                    "config error at `initial.pair`: label {j} not in lattice.sites"
                )));
            }
        }
    }
    if is_pair && cfg.interaction.is_none() {
        return Err(ConfigError::new(
            "config error at `interaction`: required when `initial.pair` is set",
        ));
    }
    if let Some(i) = &cfg.interaction {
        if !matches!((i.v_mhz, i.separation_um), (Some(_), None) | (None, Some(_))) {
            return Err(ConfigError::new(
                "config error at `interaction`: exactly one of `v_mhz` or `separation_um`",
            ));
        }
    }
    if cfg.time.samples < 2 {
        return Err(ConfigError::new("config error at `time.samples`: need at least 2"));
    }
    if !(cfg.time.t_final_us > 0.0) {
        return Err(ConfigError::new("config error at `time.t_final_us`: must be positive"));
    }
    if !(cfg.solver.tol > 0.0) {
        return Err(ConfigError::new("config error at `solver.tol`: must be positive"));
    }
    if cfg.solver.max_substeps == Some(0) {
        return Err(ConfigError::new("config error at `solver.max_substeps`: must be positive"));
    }
    if let Some(s) = &cfg.spam {
        s.build(is_pair)?;
    }
    if !is_pair {
        if cfg.observables.p00 {
            return Err(ConfigError::new(
                "config error at `observables.p00`: needs a pair run (`initial.pair`)",
            ));
        }
        if cfg.observables.pair_sites {
            return Err(ConfigError::new(
                "config error at `observables.pair_sites`: needs a pair run",
            ));
        }
        if !cfg.observables.correlations_at_us.is_empty() {
            return Err(ConfigError::new(
                "config error at `observables.correlations_at_us`: needs a pair run",
            ));
        }
    }
    for (k, f) in cfg.fits.iter().enumerate() {
        let series = parse_series(&f.series)
            .map_err(|m| ConfigError::new(format!("config error at `fits[{k}].series`: {m}")))?;
        match series {
            Series::Lambda => {}
            Series::PairOrigin => {
                if !is_pair {
                    return Err(ConfigError::new(format!(
                        "config error at `fits[{k}].series`: `p00` needs a pair run"
                    )));
                }
            }
            Series::Site(l) => {
                if !known(l) {
                    return Err(ConfigError::new(format!(
                        "config error at `fits[{k}].series`: label {l} not in lattice.sites"
                    )));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_LEVEL: &str = "\
        [lattice]\n\
        sites = [0, 1]\n\
        links = [{ from = 0, to = 1, rabi_mhz = 1.0 }]\n\
        boundary = \"open\"\n\
        [lattice.drive]\n\
        type = \"static\"\n\
        [initial]\n\
        site = 0\n\
        [time]\n\
        t_final_us = 1.0\n\
        samples = 41\n";

    #[test]
    fn set_values_parse_as_toml_literals() {
        assert_eq!(parse_set("a.b=1.5").unwrap().1, toml::Value::Float(1.5));
        assert_eq!(parse_set("a=3").unwrap().1, toml::Value::Integer(3));
        assert_eq!(parse_set("a=true").unwrap().1, toml::Value::Boolean(true));
        // unquoted bare words fall back to strings
        assert_eq!(
            parse_set("lattice.boundary=open").unwrap().1,
            toml::Value::String("open".into())
        );
        assert!(parse_set("no-equals-sign").is_err());
        assert!(parse_set("=3").is_err());
    }

    #[test]
    fn overrides_reach_nested_keys_and_array_elements() {
        let mut doc: toml::Value = toml::from_str(TWO_LEVEL).unwrap();
        apply_override(&mut doc, "lattice.links.0.rabi_mhz", toml::Value::Float(0.9)).unwrap();
        apply_override(&mut doc, "time.samples", toml::Value::Integer(11)).unwrap();
        apply_override(&mut doc, "solver.tol", toml::Value::Float(1e-6)).unwrap();
        assert_eq!(doc["lattice"]["links"][0]["rabi_mhz"].as_float(), Some(0.9));
        assert_eq!(doc["time"]["samples"].as_integer(), Some(11));
        assert_eq!(doc["solver"]["tol"].as_float(), Some(1e-6));
        let err = apply_override(&mut doc, "lattice.links.7.x", toml::Value::Float(1.0));
        assert!(err.unwrap_err().0.contains("out of range"));
    }

    #[test]
    fn empty_detunings_are_zero_filled() {
        let doc: toml::Value = toml::from_str(TWO_LEVEL).unwrap();
        let cfg = config_from_value(doc).unwrap();
        assert_eq!(cfg.lattice.detunings, vec![0.0, 0.0]);
    }

    #[test]
    fn schema_errors_carry_the_key_path() {
        let text = TWO_LEVEL.replace("samples = 41", "samples = \"many\"");
        let doc: toml::Value = toml::from_str(&text).unwrap();
        let err = config_from_value(doc).unwrap_err();
        assert!(err.0.contains("time.samples"), "got: {}", err.0);
    }

    #[test]
    fn semantic_errors_name_the_offending_key() {
        let both = TWO_LEVEL.replace("site = 0", "site = 0\npair = [0, 1]");
        let err = config_from_value(toml::from_str(&both).unwrap()).unwrap_err();
        assert!(err.0.contains("initial"), "got: {}", err.0);

        let pair_no_inter = TWO_LEVEL.replace("site = 0", "pair = [0, 1]");
        let err = config_from_value(toml::from_str(&pair_no_inter).unwrap()).unwrap_err();
        assert!(err.0.contains("interaction"), "got: {}", err.0);

        let bad_series = format!("{TWO_LEVEL}[[fits]]\nmodel = \"cosine\"\nseries = \"p00\"\n");
        let err = config_from_value(toml::from_str(&bad_series).unwrap()).unwrap_err();
        assert!(err.0.contains("fits[0].series"), "got: {}", err.0);
    }

    #[test]
    fn series_names_parse() {
        assert_eq!(parse_series("lambda").unwrap(), Series::Lambda);
        assert_eq!(parse_series("p00").unwrap(), Series::PairOrigin);
        assert_eq!(parse_series("site:-3").unwrap(), Series::Site(-3));
        assert!(parse_series("site:x").is_err());
        assert!(parse_series("width").is_err());
    }
}
