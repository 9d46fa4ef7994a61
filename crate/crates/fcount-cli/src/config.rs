//! Experiment configuration files.
//!
//! Configurations are JSON objects; unknown keys are rejected and missing
//! sections take their defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use fermion_counting::model::{rates_from_density, ModelParams};
use fermion_counting::theory::TheoryParams;
use fermion_counting::trajectory::{Backend, OffsetPolicy, RunConfig, DEFAULT_P_TARGET};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Lattice and dissipation parameters.
///
/// Rates are given either as `gamma` and `n` or as `gamma_plus` and
/// `gamma_minus`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub l: usize,
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_minus: Option<f64>,
    #[serde(default = "one")]
    pub eta: f64,
    /// Symmetry-class index used by the renormalized theory curves.
    #[serde(default = "half")]
    pub beta: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl ModelConfig {
    /// Gain and loss rates.
    pub fn rates(&self) -> Result<(f64, f64)> {
        match (self.gamma, self.n, self.gamma_plus, self.gamma_minus) {
            (Some(g), Some(n), None, None) => Ok(rates_from_density(g, n)?),
            (None, None, Some(gp), Some(gm)) => Ok((gp, gm)),
            _ => bail!("model needs either gamma and n, or gamma_plus and gamma_minus"),
        }
    }

    pub fn params(&self) -> Result<ModelParams> {
        let (gp, gm) = self.rates()?;
        if !(self.j > 0.0) {
            bail!("hopping j must be positive");
        }
        if self.l % 2 != 0 {
            bail!("the charge-density-wave start needs an even L, got {}", self.l);
        }
        Ok(ModelParams::from_rates(self.l, self.j, gp, gm, self.eta)?)
    }

    pub fn theory(&self) -> Result<TheoryParams<f64>> {
        let p = self.params()?;
        Ok(TheoryParams::new(p.n(), p.gamma(), p.j, p.delta_eta())?.with_beta(self.beta)?)
    }
}

/// Time stepping and ensemble size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    pub p_target: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_burn: Option<f64>,
    pub t_measure: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measure_stride: Option<u64>,
    pub n_traj: usize,
    pub seed: u64,
    pub backend: Backend,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            dt: None,
            p_target: DEFAULT_P_TARGET,
            t_burn: None,
            t_measure: 0.0,
            measure_stride: None,
            n_traj: 1,
            seed: 0,
            backend: Backend::Auto,
        }
    }
}

/// Which observables are recorded.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservablesSection {
    pub correlations: bool,
    pub entropy_sizes: Vec<usize>,
    pub offsets: OffsetPolicy,
    pub negativity_sizes: Vec<usize>,
}

impl Default for ObservablesSection {
    fn default() -> Self {
        Self { correlations: true, entropy_sizes: Vec::new(), offsets: OffsetPolicy::Default, negativity_sizes: Vec::new() }
    }
}

/// Analytic overlays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub enabled: bool,
    /// Largest length of the theory entropy and central-charge curves;
    /// `L / 2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_max: Option<usize>,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self { enabled: true, l_max: None }
    }
}

/// Window of the exponential real-space fit, in sites.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClWindowConfig {
    pub l_min: f64,
    pub l_max: f64,
    #[serde(default = "three")]
    pub noise_factor: f64,
}

fn three() -> f64 {
    3.0
}

/// Requested extractors and their windows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitsSection {
    /// Peak of `C_q / (g0 q~)`.
    pub q_c: bool,
    /// Tangent-deviation crossover of `|C_l|`.
    pub l_c: bool,
    pub l_c_threshold: f64,
    /// Peak of the measured effective central charge.
    pub l_m: bool,
    /// `l0 l^(3/2) |C_l| = p exp(-l / xi)`.
    pub cl_exponential: bool,
    /// Defaults to `[2 l0, L / 2]` with the 3-sigma exclusion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cl_window: Option<ClWindowConfig>,
    /// `C_q / (g0 / l0) = p1 sqrt((q~ l0)^2 + p2)`.
    pub cq_mass: bool,
    /// Largest `q~ l0` used by the mass fit.
    pub cq_mass_max_u: f64,
}

impl Default for FitsSection {
    fn default() -> Self {
        Self {
            q_c: false,
            l_c: false,
            l_c_threshold: 0.1,
            l_m: false,
            cl_exponential: false,
            cl_window: None,
            cq_mass: false,
            cq_mass_max_u: 0.5,
        }
    }
}

/// A complete experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub observables: ObservablesSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub fits: FitsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("malformed experiment configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let params = self.model.params()?;
        self.run_config().validate(&params)?;
        if !(self.fits.l_c_threshold > 0.0) {
            bail!("l_c_threshold must be positive");
        }
        if !(self.fits.cq_mass_max_u > 0.0) {
            bail!("cq_mass_max_u must be positive");
        }
        if let Some(w) = self.fits.cl_window {
            if !(w.l_min < w.l_max) {
                bail!("cl_window needs l_min < l_max");
            }
        }
        if self.fits.l_m && self.observables.entropy_sizes.len() < 3 {
            bail!("l_m needs at least three entropy sizes");
        }
        if (self.fits.q_c || self.fits.l_c || self.fits.cl_exponential || self.fits.cq_mass) && !self.observables.correlations {
            bail!("correlation fits need observables.correlations");
        }
        Ok(())
    }

    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            dt: self.run.dt,
            p_target: self.run.p_target,
            t_burn: self.run.t_burn,
            t_measure: self.run.t_measure,
            measure_stride: self.run.measure_stride,
            n_traj: self.run.n_traj,
            master_seed: self.run.seed,
            backend: self.run.backend,
            correlations: self.observables.correlations,
            entropy_sizes: self.observables.entropy_sizes.clone(),
            offsets: self.observables.offsets,
            negativity_sizes: self.observables.negativity_sizes.clone(),
        }
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("configuration serializes");
        Sha256::digest(compact.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reads and validates an experiment file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
}

/// Parameter varied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Gamma,
    DeltaEta,
    N,
    L,
}

/// A template experiment and a one-dimensional parameter grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: ExperimentConfig,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).context("malformed sweep configuration")?;
        cfg.points()?;
        Ok(cfg)
    }

    /// The experiment at every grid point.
    pub fn points(&self) -> Result<Vec<ExperimentConfig>> {
        if self.values.is_empty() {
            bail!("sweep grid is empty");
        }
        self.values
            .iter()
            .map(|&v| {
                let mut c = self.base.clone();
                let m = &mut c.model;
                match self.parameter {
                    SweepParameter::Gamma | SweepParameter::N if m.gamma.is_none() => {
                        bail!("gamma and n sweeps need a model given by gamma and n")
                    }
                    SweepParameter::Gamma => m.gamma = Some(v),
                    SweepParameter::N => m.n = Some(v),
                    SweepParameter::DeltaEta => m.eta = 1.0 - v,
                    SweepParameter::L => {
                        if v.fract() != 0.0 || v < 2.0 {
                            bail!("L grid values must be integers >= 2");
                        }
                        m.l = v as usize;
                    }
                }
                c.output = None;
                c.validate().with_context(|| format!("sweep point {v}"))?;
                Ok(c)
            })
            .collect()
    }
}

/// Reads a sweep file.
pub fn parse_sweep(path: &Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SweepConfig::from_json(&text).with_context(|| format!("in {}", path.display()))
}
