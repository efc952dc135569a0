//! Experiment configuration (TOML). Every table rejects unknown keys, and
//! `validate` runs before any computation.

use std::path::{Path, PathBuf};

use qstein::asymptotics::{FirstOrder, RateSource};
use qstein::models::{Caps, SymbolSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
#[error("{field}: {message}")]
pub struct ConfigError {
    /// Dotted path of the offending key, or `config` for whole-file problems.
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Divergences,
    Beta,
    Expansion,
    Bryc,
    Clt,
    FermionRates,
    AlphaCurve,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Divergences => "divergences",
            Stage::Beta => "beta",
            Stage::Expansion => "expansion",
            Stage::Bryc => "bryc",
            Stage::Clt => "clt",
            Stage::FermionRates => "fermion-rates",
            Stage::AlphaCurve => "alpha-curve",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// Stages executed by `run`; defaults to every stage the config supports.
    pub stages: Option<Vec<Stage>>,
    #[serde(default)]
    pub eps: Vec<f64>,
    #[serde(default)]
    pub n: NList,
    #[serde(default)]
    pub caps: CapsConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    pub bryc: Option<BrycConfig>,
    pub alpha_curve: Option<AlphaCurveConfig>,
    pub fermion_rates: Option<FermionRatesConfig>,
}

/// Either an explicit list or an inclusive range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NList {
    List(Vec<usize>),
    Range(NRange),
}

impl Default for NList {
    fn default() -> Self {
        NList::List(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NRange {
    pub from: usize,
    pub to: usize,
    #[serde(default = "one")]
    pub step: usize,
}

fn one() -> usize {
    1
}

impl NList {
    pub fn values(&self) -> Vec<usize> {
        match self {
            NList::List(v) => v.clone(),
            NList::Range(r) => (r.from..=r.to).step_by(r.step.max(1)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsConfig {
    #[serde(default = "default_max_dim")]
    pub max_dim: usize,
    #[serde(default = "default_max_fock")]
    pub max_fock: usize,
}

fn default_max_dim() -> usize {
    Caps::default().max_dim
}

fn default_max_fock() -> usize {
    Caps::default().max_fock
}

impl Default for CapsConfig {
    fn default() -> Self {
        Self { max_dim: default_max_dim(), max_fock: default_max_fock() }
    }
}

impl From<CapsConfig> for Caps {
    fn from(c: CapsConfig) -> Self {
        Caps { max_dim: c.max_dim, max_fock: c.max_fock }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Iid {
        /// Real parts of the matrix rows.
        rho: Option<Vec<Vec<f64>>>,
        rho_imag: Option<Vec<Vec<f64>>>,
        sigma: Option<Vec<Vec<f64>>>,
        sigma_imag: Option<Vec<Vec<f64>>>,
        /// Seeded random pair instead of explicit matrices.
        random: Option<RandomPair>,
    },
    Spin {
        beta1: f64,
        beta2: f64,
        #[serde(default = "two")]
        local_dim: usize,
        #[serde(default)]
        phi: Vec<TermConfig>,
        #[serde(default)]
        psi: Vec<TermConfig>,
        high_temp: Option<HighTempConfig>,
    },
    Fermion {
        #[serde(default = "one")]
        d: usize,
        q: SymbolSpec,
        r: SymbolSpec,
        delta: Option<f64>,
        quad_points: Option<usize>,
    },
}

fn two() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomPair {
    pub dim: usize,
    #[serde(default = "default_floor")]
    pub floor: f64,
    #[serde(default)]
    pub commuting: bool,
}

fn default_floor() -> f64 {
    0.05
}

/// One interaction term: a Pauli string, or an explicit real matrix on the
/// tensor product of the listed sites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermConfig {
    pub sites: Vec<i64>,
    pub pauli: Option<String>,
    #[serde(default = "unit")]
    pub coeff: f64,
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HighTempConfig {
    pub a: f64,
    pub delta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(default)]
    pub first_order: FirstOrder,
    #[serde(default)]
    pub rates: RateSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrycConfig {
    pub r: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaCurveConfig {
    pub n: usize,
    pub t2: T2Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum T2Grid {
    List(Vec<f64>),
    Range(T2Range),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct T2Range {
    pub from: f64,
    pub to: f64,
    pub steps: usize,
}

impl T2Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            T2Grid::List(v) => v.clone(),
            T2Grid::Range(r) if r.steps <= 1 => vec![r.from],
            T2Grid::Range(r) => {
                let h = (r.to - r.from) / (r.steps - 1) as f64;
                (0..r.steps).map(|k| r.from + k as f64 * h).collect()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FermionRatesConfig {
    #[serde(default = "default_s")]
    pub s: Vec<f64>,
    /// Largest Manhattan shell for the Fourier decay report.
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_s() -> Vec<f64> {
    vec![0.25, 0.5, 0.75]
}

fn default_k_max() -> usize {
    32
}

impl Default for FermionRatesConfig {
    fn default() -> Self {
        Self { s: default_s(), k_max: default_k_max() }
    }
}

/// Key path such as `model.q` out of a toml error, when it names one.
fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    for quote in ['`', '\''] {
        if let Some(start) = msg.find(quote) {
            if let Some(len) = msg[start + 1..].find(quote) {
                return msg[start + 1..start + 1 + len].to_string();
            }
        }
    }
    "config".into()
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let mut message = e.message().trim().to_string();
            if let Some(span) = e.span() {
                let line = text[..span.start.min(text.len())].lines().count().max(1);
                message = format!("{message} (line {line})");
            }
            ConfigError::new(toml_field(&e), message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn n_values(&self) -> Vec<usize> {
        self.n.values()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (i, &e) in self.eps.iter().enumerate() {
            if !(e > 0.0 && e < 1.0) {
                return Err(ConfigError::new(format!("eps[{i}]"), format!("{e} is outside (0, 1)")));
            }
        }
        if let NList::Range(r) = &self.n {
            if r.step == 0 {
                return Err(ConfigError::new("n.step", "must be positive"));
            }
            if r.from > r.to {
                return Err(ConfigError::new("n", format!("empty range {}..={}", r.from, r.to)));
            }
        }
        if let Some(i) = self.n_values().iter().position(|&n| n == 0) {
            return Err(ConfigError::new(format!("n[{i}]"), "n must be at least 1"));
        }
        if self.caps.max_dim < 1 {
            return Err(ConfigError::new("caps.max_dim", "must be positive"));
        }
        self.validate_model()?;
        if let Some(b) = &self.bryc {
            if !(b.r > 0.0 && b.r.is_finite()) {
                return Err(ConfigError::new("bryc.r", format!("{} is not a positive radius", b.r)));
            }
            if b.grid == 0 {
                return Err(ConfigError::new("bryc.grid", "must be positive"));
            }
        }
        if let Some(a) = &self.alpha_curve {
            if a.n == 0 {
                return Err(ConfigError::new("alpha_curve.n", "n must be at least 1"));
            }
            if let T2Grid::Range(r) = &a.t2 {
                if r.steps == 0 {
                    return Err(ConfigError::new("alpha_curve.t2.steps", "must be positive"));
                }
            }
            if a.t2.values().iter().any(|t| !t.is_finite()) {
                return Err(ConfigError::new("alpha_curve.t2", "values must be finite"));
            }
        }
        if let Some(f) = &self.fermion_rates {
            if !matches!(self.model, ModelConfig::Fermion { .. }) {
                return Err(ConfigError::new("fermion_rates", "only applies to fermion models"));
            }
            if let Some(i) = f.s.iter().position(|s| !(0.0..=1.0).contains(s)) {
                return Err(ConfigError::new(format!("fermion_rates.s[{i}]"), "s must lie in [0, 1]"));
            }
        }
        if let Some(stages) = &self.stages {
            for (i, &s) in stages.iter().enumerate() {
                self.supports(s).map_err(|m| ConfigError::new(format!("stages[{i}]"), m))?;
            }
        }
        Ok(())
    }

    fn validate_model(&self) -> Result<(), ConfigError> {
        let square = |field: &str, rows: &Option<Vec<Vec<f64>>>| -> Result<Option<usize>, ConfigError> {
            let Some(rows) = rows else { return Ok(None) };
            let d = rows.len();
            if d == 0 || rows.iter().any(|r| r.len() != d) {
                return Err(ConfigError::new(field, "must be a non-empty square matrix"));
            }
            if rows.iter().flatten().any(|x| !x.is_finite()) {
                return Err(ConfigError::new(field, "entries must be finite"));
            }
            Ok(Some(d))
        };
        match &self.model {
            ModelConfig::Iid { rho, rho_imag, sigma, sigma_imag, random } => {
                let dims = [
                    ("model.rho", square("model.rho", rho)?),
                    ("model.rho_imag", square("model.rho_imag", rho_imag)?),
                    ("model.sigma", square("model.sigma", sigma)?),
                    ("model.sigma_imag", square("model.sigma_imag", sigma_imag)?),
                ];
                match random {
                    Some(r) => {
                        if let Some((f, _)) = dims.iter().find(|(_, d)| d.is_some()) {
                            return Err(ConfigError::new(*f, "cannot be combined with model.random"));
                        }
                        if r.dim < 1 {
                            return Err(ConfigError::new("model.random.dim", "must be positive"));
                        }
                        if !(0.0..=1.0).contains(&r.floor) {
                            return Err(ConfigError::new("model.random.floor", "must lie in [0, 1]"));
                        }
                    }
                    None => {
                        let d = dims[0].1.ok_or_else(|| ConfigError::new("model.rho", "missing"))?;
                        for (f, dim) in &dims[1..] {
                            if f.ends_with("sigma") && dim.is_none() {
                                return Err(ConfigError::new(*f, "missing"));
                            }
                            if dim.is_some_and(|x| x != d) {
                                return Err(ConfigError::new(*f, format!("dimension differs from model.rho ({d})")));
                            }
                        }
                    }
                }
            }
            ModelConfig::Spin { beta1, beta2, local_dim, phi, psi, high_temp } => {
                for (f, b) in [("model.beta1", beta1), ("model.beta2", beta2)] {
                    if !(*b > 0.0 && b.is_finite()) {
                        return Err(ConfigError::new(f, format!("{b} is not a positive inverse temperature")));
                    }
                }
                if *local_dim < 2 {
                    return Err(ConfigError::new("model.local_dim", "must be at least 2"));
                }
                for (name, terms) in [("phi", phi), ("psi", psi)] {
                    for (i, t) in terms.iter().enumerate() {
                        let field = format!("model.{name}[{i}]");
                        if t.sites.is_empty() {
                            return Err(ConfigError::new(format!("{field}.sites"), "must not be empty"));
                        }
                        match (&t.pauli, &t.matrix) {
                            (Some(p), None) => {
                                if *local_dim != 2 {
                                    return Err(ConfigError::new(format!("{field}.pauli"), "needs local_dim = 2"));
                                }
                                if p.len() != t.sites.len() {
                                    return Err(ConfigError::new(format!("{field}.pauli"), "needs one label per site"));
                                }
                            }
                            (None, Some(_)) => {
                                square(&format!("{field}.matrix"), &t.matrix)?;
                            }
                            _ => {
                                return Err(ConfigError::new(field, "give exactly one of pauli, matrix"));
                            }
                        }
                    }
                }
                if let Some(h) = high_temp {
                    if h.a.is_nan() || h.a <= 0.0 {
                        return Err(ConfigError::new("model.high_temp.a", "must be positive"));
                    }
                    if h.delta.is_nan() || h.delta <= 0.0 {
                        return Err(ConfigError::new("model.high_temp.delta", "must be positive"));
                    }
                }
            }
            ModelConfig::Fermion { d, delta, quad_points, .. } => {
                if *d < 1 {
                    return Err(ConfigError::new("model.d", "must be at least 1"));
                }
                if let Some(x) = delta {
                    if !(*x > 0.0 && *x < 0.5) {
                        return Err(ConfigError::new("model.delta", format!("{x} is outside (0, 1/2)")));
                    }
                }
                if quad_points == &Some(0) {
                    return Err(ConfigError::new("model.quad_points", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Why `stage` cannot run on this config, if it cannot.
    pub fn supports(&self, stage: Stage) -> Result<(), String> {
        let needs_n = || if self.n_values().is_empty() { Err("needs a non-empty n list".to_string()) } else { Ok(()) };
        match stage {
            Stage::Divergences | Stage::Clt => needs_n(),
            Stage::Beta | Stage::Expansion => {
                needs_n()?;
                if self.eps.is_empty() {
                    return Err("needs a non-empty eps list".into());
                }
                Ok(())
            }
            Stage::Bryc => {
                needs_n()?;
                self.bryc.map(|_| ()).ok_or_else(|| "needs a [bryc] table".into())
            }
            Stage::FermionRates => match self.model {
                ModelConfig::Fermion { .. } => Ok(()),
                _ => Err("only applies to fermion models".into()),
            },
            Stage::AlphaCurve => {
                self.alpha_curve.as_ref().map(|_| ()).ok_or_else(|| "needs an [alpha_curve] table".into())
            }
        }
    }

    /// Stages for `run`: the explicit list, else everything supported.
    pub fn run_stages(&self) -> Vec<Stage> {
        match &self.stages {
            Some(s) => s.clone(),
            None => [
                Stage::Divergences,
                Stage::Beta,
                Stage::Expansion,
                Stage::Bryc,
                Stage::Clt,
                Stage::FermionRates,
                Stage::AlphaCurve,
            ]
            .into_iter()
            .filter(|&s| self.supports(s).is_ok())
            .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIAG: &str = r#"
eps = [0.25]
n = { from = 1, to = 8 }

[model]
kind = "iid"
rho = [[0.75, 0.0], [0.0, 0.25]]
sigma = [[0.5, 0.0], [0.0, 0.5]]
"#;

    #[test]
    fn parses_range_and_defaults() {
        let cfg = ExperimentConfig::parse(DIAG).unwrap();
        assert_eq!(cfg.n_values(), (1..=8).collect::<Vec<_>>());
        assert_eq!(cfg.caps, CapsConfig::default());
        assert_eq!(cfg.run_stages(), vec![Stage::Divergences, Stage::Beta, Stage::Expansion, Stage::Clt]);
    }

    #[test]
    fn bad_eps_names_the_field() {
        let err = ExperimentConfig::parse(&DIAG.replace("[0.25]", "[0.25, 1.5]")).unwrap_err();
        assert_eq!(err.field, "eps[1]");
        assert!(err.message.contains("1.5"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = ExperimentConfig::parse(&format!("{DIAG}\n[bryc]\nr = 0.5\nradius = 2\n")).unwrap_err();
        assert_eq!(err.field, "radius");
        let err = ExperimentConfig::parse(&DIAG.replace("kind = \"iid\"", "kind = \"iid\"\nrh0 = 1")).unwrap_err();
        assert!(err.to_string().contains("rh0"), "{err}");
    }

    #[test]
    fn model_shape_errors() {
        let err = ExperimentConfig::parse(&DIAG.replace("[0.0, 0.25]]", "[0.0]]")).unwrap_err();
        assert_eq!(err.field, "model.rho");
        let err = ExperimentConfig::parse(&DIAG.replace("sigma = [[0.5, 0.0], [0.0, 0.5]]", "")).unwrap_err();
        assert_eq!(err.field, "model.sigma");
        let spin = "n = [1]\n[model]\nkind = \"spin\"\nbeta1 = 0.1\nbeta2 = 0.0\n";
        assert_eq!(ExperimentConfig::parse(spin).unwrap_err().field, "model.beta2");
    }

    #[test]
    fn stages_must_be_supported() {
        let err = ExperimentConfig::parse(&format!("stages = [\"bryc\"]\n{DIAG}")).unwrap_err();
        assert_eq!(err.field, "stages[0]");
    }
}
