//! On-disk documents shared by the command-line front end: experiment
//! configuration, dataset and parameter files, and run reports.
//!
//! Every file carries `format_version`; readers reject other versions.

use serde::{Deserialize, Serialize};

use crate::calculus::TrainOptions;
use crate::construct::{ExactFitCertificate, FitOptions, DEFAULT_FIT_TOLERANCE};
use crate::error::{Error, Result};
use crate::linalg::DEFAULT_RANK_TOL;
use crate::manifold::{CorrectorOptions, SpectrumCounts, SpectrumReport, WalkOptions, ZERO_LOSS_GATE};
use crate::network::{Activation, Dataset, LabelGenerator, MlpSpec, ParamVector};

pub const FORMAT_VERSION: u32 = 1;

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::contract(format!("{what} has format_version {found}, expected {FORMAT_VERSION}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    #[serde(default = "one")]
    pub output_dim: usize,
    #[serde(default = "default_activation", with = "activation_string")]
    pub activation: Activation,
}

fn one() -> usize {
    1
}

fn default_activation() -> Activation {
    Activation::SmooLu
}

mod activation_string {
    use super::Activation;
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &Activation, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(a)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Activation, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(D::Error::custom)
    }
}

impl NetworkConfig {
    pub fn spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(self.input_dim, self.hidden_widths.clone(), self.output_dim, self.activation)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub points: usize,
    #[serde(default)]
    pub generator: LabelGenerator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest residual an exact fit may leave.
    pub fit: f64,
    /// Relative singular-value threshold for ranks and tangent spaces.
    pub rank: f64,
    /// Loss at or below which a point counts as on the zero set.
    pub zero_loss: f64,
    /// `‖H‖∞` target of the corrector.
    pub corrector: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fit: DEFAULT_FIT_TOLERANCE,
            rank: DEFAULT_RANK_TOL,
            zero_loss: ZERO_LOSS_GATE,
            corrector: CorrectorOptions::default().tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Radius of the label perturbation applied before fitting; 0 disables it.
    pub perturb_eps: f64,
    pub directions: usize,
    pub gaps: Vec<f64>,
}

impl Default for FitConfig {
    fn default() -> Self {
        let f = FitOptions::default();
        Self { perturb_eps: 0.0, directions: f.directions, gaps: f.gaps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub max_iters: usize,
    pub target_loss: f64,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-2, max_iters: 100_000, target_loss: 1e-8, init_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkConfig {
    pub steps: usize,
    pub step_size: f64,
    /// Inputs at which function drift along the path is measured. Empty
    /// means three fixed points per input coordinate.
    pub probes: Vec<Vec<f64>>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { steps: 100, step_size: 1e-2, probes: Vec::new() }
    }
}

/// Everything a command needs besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub network: NetworkConfig,
    pub data: DataConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub walk: WalkConfig,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.spec()?;
        if self.data.points == 0 {
            return Err(Error::contract("data.points must be >= 1"));
        }
        let t = &self.tolerances;
        for (name, v) in [("fit", t.fit), ("rank", t.rank), ("zero_loss", t.zero_loss), ("corrector", t.corrector)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::contract(format!("tolerances.{name} must be positive")));
            }
        }
        if !(self.fit.perturb_eps >= 0.0) || self.fit.directions == 0 || self.fit.gaps.is_empty() {
            return Err(Error::contract("fit needs perturb_eps >= 0, directions >= 1 and some gaps"));
        }
        if self.fit.gaps.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::contract("fit.gaps must be positive"));
        }
        if !(self.train.lr >= 0.0) || !(self.train.init_scale > 0.0) || !(self.train.target_loss >= 0.0) {
            return Err(Error::contract("train needs lr >= 0, init_scale > 0 and target_loss >= 0"));
        }
        if !(self.walk.step_size > 0.0) {
            return Err(Error::contract("walk.step_size must be positive"));
        }
        if self.walk.probes.iter().any(|p| p.len() != self.network.input_dim) {
            return Err(Error::contract("walk.probes must match network.input_dim"));
        }
        Ok(())
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            seed: self.seed,
            directions: self.fit.directions,
            gaps: self.fit.gaps.clone(),
            tolerance: self.tolerances.fit,
            ..FitOptions::default()
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions { lr: self.train.lr, max_iters: self.train.max_iters, target_loss: self.train.target_loss }
    }

    pub fn corrector_options(&self) -> CorrectorOptions {
        CorrectorOptions { tol: self.tolerances.corrector, ..CorrectorOptions::default() }
    }

    pub fn walk_options(&self) -> WalkOptions {
        WalkOptions {
            steps: self.walk.steps,
            step_size: self.walk.step_size,
            loss_tol: self.tolerances.zero_loss,
            rank_tol: self.tolerances.rank,
            corrector: self.corrector_options(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub format_version: u32,
    pub seed: u64,
    pub generator: LabelGenerator,
    pub dataset: Dataset,
}

impl DatasetFile {
    pub fn new(dataset: Dataset, seed: u64, generator: LabelGenerator) -> Self {
        Self { format_version: FORMAT_VERSION, seed, generator, dataset }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "dataset file")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub format_version: u32,
    pub seed: u64,
    pub spec: MlpSpec,
    pub params: ParamVector,
}

impl ParamsFile {
    pub fn new(spec: MlpSpec, params: ParamVector, seed: u64) -> Self {
        Self { format_version: FORMAT_VERSION, seed, spec, params }
    }

    /// Version check plus spec/length validation.
    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "parameter file")?;
        self.spec.validate()?;
        ParamVector::new(&self.spec, self.params.to_vec()).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl ToolInfo {
    pub fn current() -> Self {
        Self { name: env!("CARGO_PKG_NAME").to_string(), version: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPayload {
    pub n: usize,
    pub d: usize,
    pub outputs: usize,
    pub perturb_eps: f64,
    pub tolerance: f64,
    pub gap: f64,
    pub direction: Vec<f64>,
    pub max_residual: f64,
    pub min_diagonal: f64,
    pub max_entry: f64,
    pub residuals: Vec<f64>,
    pub diagonal: Vec<f64>,
}

impl FitPayload {
    pub fn from_certificate(cert: &ExactFitCertificate, perturb_eps: f64) -> Self {
        Self {
            n: cert.spec.param_count(),
            d: cert.residuals.len(),
            outputs: cert.spec.output_dim,
            perturb_eps,
            tolerance: cert.tolerance,
            gap: cert.projection.gap,
            direction: cert.projection.direction.clone(),
            max_residual: cert.max_residual,
            min_diagonal: cert.min_diagonal,
            max_entry: cert.max_entry,
            residuals: cert.residuals.clone(),
            diagonal: cert.diagonal.clone(),
        }
    }

    pub fn passed(&self) -> bool {
        self.max_residual <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPayload {
    pub n: usize,
    pub d: usize,
    pub outputs: usize,
    pub lr: f64,
    pub max_iters: usize,
    pub target_loss: f64,
    pub init_scale: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_loss: f64,
    /// Loss before every update, then the final loss.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzePayload {
    pub n: usize,
    pub d: usize,
    pub outputs: usize,
    pub loss: f64,
    pub zero_loss_gate: f64,
    pub rank_tol: f64,
    pub on_manifold: bool,
    pub jacobian_rank: usize,
    /// Omitted off the zero set, where it is meaningless.
    pub manifold_dimension: Option<usize>,
    pub expected: SpectrumCounts,
    pub spectrum: SpectrumReport,
}

impl AnalyzePayload {
    /// On the zero set, with both spectra and the dimension as predicted.
    pub fn passed(&self) -> bool {
        self.on_manifold
            && self.spectrum.finite_difference.counts == self.expected
            && self.spectrum.gauss_newton.counts == self.expected
            && self.manifold_dimension == Some(self.expected.zero)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkPayload {
    pub n: usize,
    pub d: usize,
    pub outputs: usize,
    pub steps: usize,
    pub step_size: f64,
    pub loss_tol: f64,
    pub rank_tol: f64,
    pub corrector_tol: f64,
    pub points: usize,
    pub arc_length: f64,
    pub displacement: f64,
    pub max_loss: f64,
    /// Largest change of the network output at the probe inputs between the
    /// first and last point.
    pub probe_drift: f64,
    pub step_lengths: Vec<f64>,
    pub corrector_iterations: Vec<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    FitExact(FitPayload),
    Train(TrainPayload),
    Analyze(AnalyzePayload),
    Walk(WalkPayload),
}

/// Result document written by every command except `gen-data`.
///
/// `payload` is a pure function of the configuration and input files;
/// `elapsed_seconds` is the only value that varies between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub format_version: u32,
    pub tool: ToolInfo,
    pub command: String,
    pub config: ExperimentConfig,
    pub elapsed_seconds: f64,
    pub payload: Option<Payload>,
    pub error: Option<ErrorRecord>,
}

impl Report {
    pub fn new(command: &str, config: ExperimentConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            tool: ToolInfo::current(),
            command: command.to_string(),
            config,
            elapsed_seconds: 0.0,
            payload: None,
            error: None,
        }
    }

    pub fn check(&self) -> Result<()> {
        check_version(self.format_version, "report")
    }

    pub fn passed(&self) -> bool {
        if self.error.is_some() {
            return false;
        }
        match &self.payload {
            None => false,
            Some(Payload::FitExact(p)) => p.passed(),
            Some(Payload::Train(p)) => p.converged,
            Some(Payload::Analyze(p)) => p.passed(),
            Some(Payload::Walk(p)) => p.failure.is_none() && p.max_loss <= p.loss_tol,
        }
    }

    pub fn summary(&self) -> SummaryRow {
        let n = self.config.network.spec().map(|s| s.param_count()).ok();
        let mut row = SummaryRow {
            command: self.command.clone(),
            n,
            d: Some(self.config.data.points),
            outputs: Some(self.config.network.output_dim),
            loss: None,
            counts: None,
            dimension: None,
            passed: self.passed(),
        };
        match &self.payload {
            Some(Payload::FitExact(p)) => {
                row.n = Some(p.n);
                row.d = Some(p.d);
                row.loss = Some(p.residuals.iter().map(|r| r * r).sum());
            }
            Some(Payload::Train(p)) => {
                row.n = Some(p.n);
                row.d = Some(p.d);
                row.loss = Some(p.final_loss);
            }
            Some(Payload::Analyze(p)) => {
                row.n = Some(p.n);
                row.d = Some(p.d);
                row.loss = Some(p.loss);
                row.counts = Some(p.spectrum.gauss_newton.counts);
                row.dimension = p.manifold_dimension;
            }
            Some(Payload::Walk(p)) => {
                row.n = Some(p.n);
                row.d = Some(p.d);
                row.loss = Some(p.max_loss);
            }
            None => {}
        }
        row
    }
}

/// One line of the aggregated table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub command: String,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub outputs: Option<usize>,
    pub loss: Option<f64>,
    /// Gauss–Newton spectrum counts, for analyses.
    pub counts: Option<SpectrumCounts>,
    pub dimension: Option<usize>,
    pub passed: bool,
}
