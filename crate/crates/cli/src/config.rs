//! Run configuration.
//!
//! A run is described by one JSON object. Unknown keys are rejected and
//! every key is optional. Lengths (`domain`, `init.center`, `init.sigma`,
//! map offsets and shifts) are in domain units; `horizon` and `t1` count
//! map applications; `epsilon` and `epsilons` are magnitudes of matrix
//! entries; `kappa` is in units of inverse cell index.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unimap_core::basis::{BasisKind, BasisSpec};
use unimap_core::evolution::{
    EchoMode, InitSpec, MeasurementConfig, DEFAULT_KAPPA, DEFAULT_SIGMA_CELLS, MIN_SIGMA_CELLS,
};
use unimap_core::map_model::{GradientDescentMap, Interval, MapSpec, PolynomialMap, DOUBLE_WELL_DOMAIN};
use unimap_core::propagator::{UnitarizationMethod, DEFAULT_QUAD_ORDER};

use crate::error::CliError;

pub const MAX_DIM: usize = 4096;
pub const MAX_HORIZON: usize = 10_000;
/// The echo search needs `t1 - 1`, `t1` and `t1 + 1`.
pub const MIN_ECHO_HORIZON: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Build,
    Evolve,
    EchoScan,
    Attractors,
    SparsitySweep,
    CascadeCompare,
    ReproducePaper,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Build,
        Command::Evolve,
        Command::EchoScan,
        Command::Attractors,
        Command::SparsitySweep,
        Command::CascadeCompare,
        Command::ReproducePaper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Build => "build",
            Command::Evolve => "evolve",
            Command::EchoScan => "echo-scan",
            Command::Attractors => "attractors",
            Command::SparsitySweep => "sparsity-sweep",
            Command::CascadeCompare => "cascade-compare",
            Command::ReproducePaper => "reproduce-paper",
        }
    }

    /// Whether the command evolves states, which needs the spatial basis.
    fn needs_spatial(self) -> bool {
        !matches!(self, Command::Build | Command::SparsitySweep)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::config("command", format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    /// `0.25123 x^2 + 0.60123 x - 0.10123`.
    SampleQuadratic,
    /// `a x^2 + b x + c`.
    Quadratic { a: f64, b: f64, c: f64 },
    /// `slope x + offset`.
    Linear { slope: f64, offset: f64 },
    /// `x + shift`.
    Shift { shift: f64 },
    Identity,
    /// `c0 + c1 x + c2 x^2 + ...`, ascending order.
    Polynomial { coefficients: Vec<f64> },
    /// One gradient-descent step of size `eta` on `(x^2 - 1/4)^2`.
    DoubleWell {
        #[serde(default = "default_eta")]
        eta: f64,
    },
}

fn default_eta() -> f64 {
    0.3
}

impl Default for MapConfig {
    fn default() -> Self {
        Self::SampleQuadratic
    }
}

impl MapConfig {
    fn default_domain(&self) -> Interval {
        match self {
            MapConfig::DoubleWell { .. } => DOUBLE_WELL_DOMAIN,
            _ => Interval::unit(),
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(CliError::config(format!("map.{key}"), "must be finite"))
            }
        };
        match self {
            MapConfig::SampleQuadratic | MapConfig::Identity => Ok(()),
            MapConfig::Quadratic { a, b, c } => {
                finite("a", *a)?;
                finite("b", *b)?;
                finite("c", *c)
            }
            MapConfig::Linear { slope, offset } => {
                finite("offset", *offset)?;
                finite("slope", *slope)?;
                if *slope == 0.0 {
                    return Err(CliError::config("map.slope", "must be nonzero"));
                }
                Ok(())
            }
            MapConfig::Shift { shift } => finite("shift", *shift),
            MapConfig::Polynomial { coefficients } => {
                if coefficients.is_empty() {
                    return Err(CliError::config("map.coefficients", "must not be empty"));
                }
                coefficients.iter().try_for_each(|c| finite("coefficients", *c))
            }
            MapConfig::DoubleWell { eta } => {
                if !(eta.is_finite() && *eta > 0.0) {
                    return Err(CliError::config("map.eta", "must be positive"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKindConfig {
    Spatial,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    pub kind: BasisKindConfig,
    /// Number of basis functions.
    pub n: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self { kind: BasisKindConfig::Spatial, n: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitarizationConfig {
    GlobalPolar,
    BlockPolar,
    Generator,
}

impl From<UnitarizationConfig> for UnitarizationMethod {
    fn from(u: UnitarizationConfig) -> Self {
        match u {
            UnitarizationConfig::GlobalPolar => UnitarizationMethod::GlobalPolar,
            UnitarizationConfig::BlockPolar => UnitarizationMethod::BlockPolar,
            UnitarizationConfig::Generator => UnitarizationMethod::Generator,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitConfig {
    /// Gaussian density; `sigma` defaults to five cells.
    Gaussian {
        #[serde(default = "default_center")]
        center: f64,
        #[serde(default)]
        sigma: Option<f64>,
    },
    Flat,
    /// All amplitude in the cell containing `center`.
    Delta {
        #[serde(default = "default_center")]
        center: f64,
    },
}

fn default_center() -> f64 {
    0.5
}

impl Default for InitConfig {
    fn default() -> Self {
        Self::Gaussian { center: default_center(), sigma: None }
    }
}

impl InitConfig {
    pub fn center(&self) -> Option<f64> {
        match *self {
            InitConfig::Gaussian { center, .. } | InitConfig::Delta { center } => Some(center),
            InitConfig::Flat => None,
        }
    }

    pub fn to_spec(&self, basis: &BasisSpec) -> InitSpec {
        match *self {
            InitConfig::Gaussian { center, sigma } => {
                InitSpec::Gaussian { center, sigma: sigma.unwrap_or(DEFAULT_SIGMA_CELLS * basis.dx()) }
            }
            InitConfig::Flat => InitSpec::Flat,
            InitConfig::Delta { center } => InitSpec::DeltaCell { center },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSettings {
    /// Simulated measurements per estimated quantity.
    pub samples: usize,
    pub seed: u64,
}

impl Default for MeasurementSettings {
    fn default() -> Self {
        let d = MeasurementConfig::default();
        Self { samples: d.samples, seed: d.seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoModeConfig {
    Exact,
    Sampled,
}

impl From<EchoModeConfig> for EchoMode {
    fn from(m: EchoModeConfig) -> Self {
        match m {
            EchoModeConfig::Exact => EchoMode::Exact,
            EchoModeConfig::Sampled => EchoMode::Sampled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Must agree with the command line when present.
    pub command: Option<Command>,
    pub map: MapConfig,
    /// `[lo, hi]`; defaults to `[-1, 1]`, or `[-0.55, 0.55]` for `double_well`.
    pub domain: Option<[f64; 2]>,
    pub basis: BasisConfig,
    pub epsilon: f64,
    pub unitarization: UnitarizationConfig,
    pub init: InitConfig,
    pub horizon: usize,
    pub kappa: f64,
    /// Phase parameters for `echo-scan`; defaults to `[kappa]`.
    pub kappas: Option<Vec<f64>>,
    /// Thresholds for `sparsity-sweep`.
    pub epsilons: Option<Vec<f64>>,
    /// Sampled estimates are produced only when present.
    pub measurement: Option<MeasurementSettings>,
    pub echo_mode: EchoModeConfig,
    /// First probed step of the echo search.
    pub t1: usize,
    /// Gauss-Legendre nodes per quadrature panel.
    pub quad_order: usize,
    /// Output directory; `--out` takes precedence.
    pub outputs: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            map: MapConfig::default(),
            domain: None,
            basis: BasisConfig::default(),
            epsilon: 0.1,
            unitarization: UnitarizationConfig::BlockPolar,
            init: InitConfig::default(),
            horizon: 12,
            kappa: DEFAULT_KAPPA,
            kappas: None,
            epsilons: None,
            measurement: None,
            echo_mode: EchoModeConfig::Exact,
            t1: 2,
            quad_order: DEFAULT_QUAD_ORDER,
            outputs: None,
        }
    }
}

pub const DEFAULT_SWEEP_EPSILONS: [f64; 5] = [0.0, 0.01, 0.05, 0.1, 0.2];

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let msg = inner.to_string();
            // the path stops at the unknown field for plain structs but at
            // the enclosing object for tagged enums and missing fields
            let named = ["unknown field `", "missing field `"]
                .iter()
                .find_map(|p| msg.strip_prefix(p))
                .and_then(|r| r.split('`').next());
            let key = match named {
                Some(field) if path == "." => field.to_string(),
                Some(field) if path.rsplit('.').next() != Some(field) => format!("{path}.{field}"),
                _ => path,
            };
            CliError::config(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn domain(&self) -> Interval {
        match self.domain {
            Some([lo, hi]) => Interval { lo, hi },
            None => self.map.default_domain(),
        }
    }

    pub fn map_spec(&self) -> unimap_core::Result<MapSpec> {
        let d = self.domain();
        Ok(match &self.map {
            MapConfig::SampleQuadratic => PolynomialMap::SAMPLE.to_map(d).with_name("sample_quadratic"),
            MapConfig::Quadratic { a, b, c } => PolynomialMap { a: *a, b: *b, c: *c }.to_map(d),
            MapConfig::Linear { slope, offset } => MapSpec::linear(*slope, *offset, d),
            MapConfig::Shift { shift } => MapSpec::shift(*shift, d),
            MapConfig::Identity => MapSpec::identity(d),
            MapConfig::Polynomial { coefficients } => MapSpec::polynomial(coefficients, d)?,
            MapConfig::DoubleWell { eta } => GradientDescentMap::double_well(*eta).to_map(format!("double_well({eta})"), d),
        })
    }

    pub fn basis_spec(&self, kind: BasisKind) -> unimap_core::Result<BasisSpec> {
        BasisSpec::new(kind, self.basis.n, self.domain())
    }

    pub fn basis_kind(&self) -> BasisKind {
        match self.basis.kind {
            BasisKindConfig::Spatial => BasisKind::Spatial,
            BasisKindConfig::Fourier => BasisKind::Fourier,
        }
    }

    pub fn measurement_config(&self, kappa: f64) -> MeasurementConfig {
        let m = self.measurement.unwrap_or_default();
        MeasurementConfig { samples: m.samples, seed: m.seed, kappa }
    }

    pub fn kappas(&self) -> Vec<f64> {
        self.kappas.clone().unwrap_or_else(|| vec![self.kappa])
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilons.clone().unwrap_or_else(|| DEFAULT_SWEEP_EPSILONS.to_vec())
    }

    /// Checks ranges for `cmd` and fills every default that depends on
    /// other keys, so the returned config fully determines the run.
    pub fn resolve(mut self, cmd: Command) -> Result<Self, CliError> {
        if let Some(c) = self.command {
            if c != cmd {
                return Err(CliError::config("command", format!("config is for `{c}`, invoked as `{cmd}`")));
            }
        }
        self.command = Some(cmd);
        self.validate(cmd)?;
        self.domain = Some([self.domain().lo, self.domain().hi]);
        if let InitConfig::Gaussian { center, sigma: None } = self.init {
            self.init = InitConfig::Gaussian { center, sigma: Some(DEFAULT_SIGMA_CELLS * self.domain().width() / self.basis.n as f64) };
        }
        match cmd {
            Command::EchoScan | Command::ReproducePaper => self.kappas = Some(self.kappas()),
            Command::SparsitySweep => self.epsilons = Some(self.epsilons()),
            _ => {}
        }
        self.outputs = None;
        Ok(self)
    }

    fn validate(&self, cmd: Command) -> Result<(), CliError> {
        self.map.validate()?;
        if let Some([lo, hi]) = self.domain {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(CliError::config("domain", "need finite lo < hi"));
            }
        }
        let n = self.basis.n;
        if !(2..=MAX_DIM).contains(&n) {
            return Err(CliError::config("basis.n", format!("must lie in 2..={MAX_DIM}")));
        }
        if cmd.needs_spatial() && self.basis.kind != BasisKindConfig::Spatial && cmd != Command::ReproducePaper {
            return Err(CliError::config("basis.kind", format!("`{cmd}` needs the spatial basis")));
        }
        check_epsilon("epsilon", self.epsilon)?;
        if let Some(eps) = &self.epsilons {
            if eps.is_empty() {
                return Err(CliError::config("epsilons", "must not be empty"));
            }
            eps.iter().try_for_each(|&e| check_epsilon("epsilons", e))?;
        }
        if !self.kappa.is_finite() {
            return Err(CliError::config("kappa", "must be finite"));
        }
        if let Some(ks) = &self.kappas {
            if ks.is_empty() || ks.iter().any(|k| !k.is_finite()) {
                return Err(CliError::config("kappas", "need a non-empty list of finite values"));
            }
        }
        let min_horizon = match cmd {
            Command::EchoScan | Command::Attractors | Command::ReproducePaper => MIN_ECHO_HORIZON.max(self.t1 + 1),
            _ => 1,
        };
        if !(min_horizon..=MAX_HORIZON).contains(&self.horizon) {
            return Err(CliError::config("horizon", format!("must lie in {min_horizon}..={MAX_HORIZON}")));
        }
        if self.t1 < 1 {
            return Err(CliError::config("t1", "must be at least 1"));
        }
        if let Some(m) = self.measurement {
            if m.samples == 0 {
                return Err(CliError::config("measurement.samples", "must be at least 1"));
            }
        }
        if !(2..=64).contains(&self.quad_order) {
            return Err(CliError::config("quad_order", "must lie in 2..=64"));
        }
        let d = self.domain();
        let dx = d.width() / n as f64;
        if let Some(center) = self.init.center() {
            if !(center.is_finite() && center >= d.lo && center <= d.hi) {
                return Err(CliError::config("init.center", format!("must lie in [{}, {}]", d.lo, d.hi)));
            }
        }
        if let InitConfig::Gaussian { sigma: Some(s), .. } = self.init {
            if !(s.is_finite() && s >= MIN_SIGMA_CELLS * dx) {
                return Err(CliError::config("init.sigma", format!("must be at least {MIN_SIGMA_CELLS} cells ({})", MIN_SIGMA_CELLS * dx)));
            }
        }
        Ok(())
    }
}

fn check_epsilon(key: &str, eps: f64) -> Result<(), CliError> {
    if eps.is_finite() && eps >= 0.0 {
        Ok(())
    } else {
        Err(CliError::config(key, "must be a finite value >= 0"))
    }
}
