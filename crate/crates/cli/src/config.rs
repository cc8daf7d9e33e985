//! Experiment configuration: TOML with one table per parameter block.

use fracpme_core::kernels::{KernelKind, KernelSpec};
use fracpme_core::nonlinearity::{NonlinearityKind, NonlinearitySpec};
use fracpme_core::solver::Scheme;
use fracpme_core::Grid;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::PathBuf;

pub const EXPERIMENTS: [(&str, &str); 7] = [
    ("solve", "integrate the regularized equation and record diagnostics and snapshots"),
    ("barenblatt", "compare against the self-similar profile (closed form for a = 2, relaxed otherwise)"),
    ("norms", "space-time Littlewood-Paley block norms and Besov sums"),
    ("verify-symbol", "sample the kernel symbol on seeded (x, xi) points and report ellipticity bounds"),
    ("scaling-check", "drift of the Slobodeckii functional across the time-fixed scaling family"),
    ("kinetic-check", "dissipation ledger n, m, q against the mu bound"),
    ("regularity-sweep", "Slobodeckii seminorms over sigma and resolutions with a divergence verdict"),
];

/// A configuration problem, anchored to a line of the source when one can be found.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub grid: GridConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub initial: DataConfig,
    #[serde(default)]
    pub source: SourceConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub barenblatt: Option<BarenblattConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verify_symbol: Option<SymbolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<ScalingConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<KineticConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub d: usize,
    pub n: usize,
    pub length: f64,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub a: f64,
    #[serde(flatten)]
    pub kind: KernelKind,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { a: 2.0, kind: KernelKind::Fractional }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    /// Exact multiplier `|xi|^a`; ignores the kernel kind.
    SpectralFractional,
    /// Multiplier read off the kernel symbol at `x = 0`.
    SpectralSymbol,
    /// Direct lattice quadrature of the kernel with inner cutoff `eps1`.
    KernelQuadrature,
    Laplacian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub mode: OperatorMode,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self { mode: OperatorMode::SpectralFractional }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityConfig {
    #[serde(flatten)]
    pub kind: NonlinearityKind,
}

impl Default for NonlinearityConfig {
    fn default() -> Self {
        Self { kind: NonlinearityKind::Power { m: 2.0 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub dt: f64,
    pub t_final: f64,
    pub scheme: Scheme,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub cfl_safety: f64,
    /// Steps between stored snapshots; 0 keeps only the first and last.
    pub snapshot_stride: usize,
    pub lp: Vec<f64>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 1.0,
            scheme: Scheme::ImexSpectral,
            eps1: 0.0,
            eps2: 0.0,
            eps3: 0.0,
            cfl_safety: 0.9,
            snapshot_stride: 0,
            lp: vec![2.0],
        }
    }
}

/// Initial data and source profiles, centred at `center` (one coordinate per dimension).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    #[default]
    Zero,
    /// `height (1 - |x-c|^2/r^2)^3_+`.
    Bump {
        #[serde(default)]
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "unit")]
        height: f64,
    },
    Gaussian {
        #[serde(default)]
        center: Vec<f64>,
        width: f64,
        #[serde(default = "unit")]
        height: f64,
    },
    Indicator {
        #[serde(default)]
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "unit")]
        height: f64,
    },
    /// Closed-form self-similar solution of the local problem at time `t0`.
    Zkb {
        #[serde(default = "unit")]
        mass: f64,
        #[serde(default = "unit")]
        t0: f64,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    #[serde(flatten)]
    pub profile: DataConfig,
    /// Active on `[start, end)`; both absent means steady.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self { profile: DataConfig::Zero, start: None, end: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BarenblattConfig {
    pub mass: f64,
    /// Relaxation horizon for the numerical profile.
    pub t_end: f64,
    pub bump_radius: f64,
    pub y_max: f64,
    pub samples: usize,
}

impl Default for BarenblattConfig {
    fn default() -> Self {
        Self { mass: 1.0, t_end: 16.0, bump_radius: 1.0, y_max: 4.0, samples: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormsData {
    /// Blocks of the solver trajectory on `[0, t_final)`.
    Trajectory,
    /// Space-time blocks of the self-similar solution, via its profile.
    SelfSimilar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormsConfig {
    pub data: NormsData,
    pub p: f64,
    /// Power of two; the trajectory is sampled uniformly on `[0, t_final)`.
    pub time_samples: usize,
    pub sigma_t: f64,
    pub sigma_x: f64,
    /// Besov summability; `inf` is accepted.
    pub q: f64,
    pub j_max: usize,
    pub fit: [usize; 2],
    /// Profile relaxation grid for `a < 2` (the `[grid]` table is the fine grid); relaxation
    /// parameters come from `[barenblatt]`.
    pub profile_n: usize,
    pub profile_length: f64,
}

impl Default for NormsConfig {
    fn default() -> Self {
        Self {
            data: NormsData::Trajectory,
            p: 2.0,
            time_samples: 16,
            sigma_t: 0.0,
            sigma_x: 0.0,
            q: 2.0,
            j_max: 8,
            fit: [3, 7],
            profile_n: 2048,
            profile_length: 256.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolConfig {
    pub samples: usize,
    pub log2_xi_min: f64,
    pub log2_xi_max: f64,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        Self { samples: 200, log2_xi_min: 0.0, log2_xi_max: 6.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub nu: f64,
    pub p: f64,
    pub mu_power: f64,
    /// Empty selects the neutral exponent and four neighbours 0.05 apart.
    pub sigmas: Vec<f64>,
    pub resample_tol: f64,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self { nu: 2.0, p: 1.5, mu_power: 1.0, sigmas: vec![], resample_tol: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KineticConfig {
    pub bins: usize,
    pub margin: f64,
    /// Extra velocity range above the initial maximum, for sources that raise the solution.
    pub headroom: f64,
    pub n_stride: usize,
    pub slack: f64,
}

impl Default for KineticConfig {
    fn default() -> Self {
        Self { bins: 48, margin: 0.1, headroom: 0.0, n_stride: 1, slack: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepData {
    /// Closed-form solution, snapshots log-spaced by sqrt 2 (requires `a = 2`).
    ClosedForm,
    /// Solver runs from `[initial]`, snapshots every `snapshot_stride` steps.
    Solver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub data: SweepData,
    pub levels: Vec<usize>,
    pub p: f64,
    pub mu_power: f64,
    /// Empty selects `a mu / m +- 0.4` in steps of 0.05, skipping integers.
    pub sigmas: Vec<f64>,
    pub fit: [usize; 2],
    pub mass: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            data: SweepData::ClosedForm,
            levels: vec![128, 256, 512],
            p: 2.0,
            mu_power: 1.0,
            sigmas: vec![],
            fit: [3, 6],
            mass: 1.0,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(src: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(src).map_err(|e| {
            let line = e.span().map(|s| src[..s.start].matches('\n').count() + 1);
            ConfigError { line, message: e.message().trim().to_string() }
        })?;
        cfg.validate().map_err(|(section, key, message)| ConfigError { line: locate(src, section, key), message })?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn validate(&self) -> Result<(), (&'static str, &'static str, String)> {
        if !EXPERIMENTS.iter().any(|(n, _)| *n == self.experiment) {
            let best = EXPERIMENTS
                .iter()
                .map(|(n, _)| (strsim::levenshtein(n, &self.experiment), *n))
                .min()
                .map(|x| x.1)
                .unwrap_or("solve");
            return Err(("", "experiment", format!("unknown experiment '{}'; did you mean '{best}'?", self.experiment)));
        }
        let grid = self.grid().map_err(|e| ("grid", "n", e.to_string()))?;
        let a = self.kernel.a;
        if !(a > 0.0 && a <= 2.0) {
            return Err(("kernel", "a", format!("order a = {a} outside (0, 2]")));
        }
        if a < 2.0 {
            self.kernel().map_err(|e| ("kernel", "a", e.to_string()))?;
        } else if matches!(self.operator.mode, OperatorMode::SpectralSymbol | OperatorMode::KernelQuadrature)
            || matches!(self.experiment.as_str(), "verify-symbol" | "kinetic-check")
        {
            return Err(("kernel", "a", "a = 2 is the local limit; this needs a jump kernel with a < 2".into()));
        }
        self.phi().map_err(|e| ("nonlinearity", "kind", e.to_string()))?;
        let s = &self.solver;
        if !(s.dt > 0.0 && s.t_final >= s.dt) {
            return Err(("solver", "dt", "dt must be positive and at most t_final".into()));
        }
        if ((s.t_final / s.dt).round() * s.dt - s.t_final).abs() > 1e-9 * s.t_final {
            return Err(("solver", "t_final", "t_final must be an integer multiple of dt".into()));
        }
        for d in [Some(&self.initial), Some(&self.source.profile)].into_iter().flatten() {
            if let Some(c) = d.center() {
                if !c.is_empty() && c.len() != grid.dim() {
                    return Err(("initial", "center", format!("center needs {} coordinates", grid.dim())));
                }
            }
        }
        if let (Some(a), Some(b)) = (self.source.start, self.source.end) {
            if !(b > a) {
                return Err(("source", "end", "source window needs end > start".into()));
            }
        }
        if self.source.start.is_some() != self.source.end.is_some() {
            return Err(("source", "start", "source window needs both start and end".into()));
        }
        let n = self.norms_section();
        if !n.time_samples.is_power_of_two() {
            return Err(("norms", "time_samples", "time_samples must be a power of two".into()));
        }
        if n.fit[1] <= n.fit[0] || self.sweep_section().fit[1] <= self.sweep_section().fit[0] {
            return Err(("norms", "fit", "fit window must be increasing".into()));
        }
        let sw = self.sweep_section();
        if sw.levels.is_empty() || sw.levels.iter().any(|l| !l.is_power_of_two()) {
            return Err(("sweep", "levels", "levels must be non-empty powers of two".into()));
        }
        if self.verify_symbol_section().samples == 0 {
            return Err(("verify_symbol", "samples", "need at least one sample".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> fracpme_core::Result<Grid> {
        Grid::new(self.grid.d, self.grid.n, self.grid.length)
    }

    pub fn kernel(&self) -> fracpme_core::Result<KernelSpec> {
        KernelSpec::new(self.grid.d, self.kernel.a, self.kernel.kind.clone())
    }

    pub fn phi(&self) -> fracpme_core::Result<NonlinearitySpec> {
        NonlinearitySpec::from_kind(self.nonlinearity.kind.clone())
    }

    pub fn barenblatt_section(&self) -> BarenblattConfig {
        self.barenblatt.clone().unwrap_or_default()
    }

    pub fn norms_section(&self) -> NormsConfig {
        self.norms.clone().unwrap_or_default()
    }

    pub fn verify_symbol_section(&self) -> SymbolConfig {
        self.verify_symbol.clone().unwrap_or_default()
    }

    pub fn scaling_section(&self) -> ScalingConfig {
        self.scaling.clone().unwrap_or_default()
    }

    pub fn kinetic_section(&self) -> KineticConfig {
        self.kinetic.clone().unwrap_or_default()
    }

    pub fn sweep_section(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_default()
    }
}

impl DataConfig {
    fn center(&self) -> Option<&Vec<f64>> {
        match self {
            DataConfig::Bump { center, .. } | DataConfig::Gaussian { center, .. } | DataConfig::Indicator { center, .. } => {
                Some(center)
            }
            _ => None,
        }
    }
}

/// Line of `key` inside `[section]` (the root table when `section` is empty).
fn locate(src: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}
