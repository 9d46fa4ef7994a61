//! Full time steps, run schedule and the parallel trajectory ensemble.
//!
//! A step is the conditional substep over `eta dt` followed by the exact
//! unconditional substep over `(1 - eta) dt`. Each trajectory starts from the
//! charge-density wave, burns in, then takes snapshots every
//! `measure_stride` steps. Observables are averaged within a trajectory and
//! the ensemble statistics are formed across trajectories only.
//!
//! Trajectory `i` draws from ChaCha8 seeded with `master_seed` on stream `i`,
//! so its output does not depend on `n_traj` or on the worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditional::{conditional_substep, JumpEvent, NoJumpPropagator};
use crate::error::{domain, Error, Result};
use crate::fast::FastTrajectory;
use crate::gaussian::CorrelationMatrix;
use crate::model::{build_hopping_hamiltonian, build_jump_channels, initial_cdw_state, JumpChannels, LatticeHamiltonian, ModelParams};
use crate::observables::{
    self, default_offsets, spaced_offsets, state_correlation, CorrelationProfile,
};
use crate::stats::{RunningStats, SeriesStats};
use crate::unconditional::{FixedLindblad, LindbladPropagator};
use crate::CMat;

/// Default per-site jump probability per step.
pub const DEFAULT_P_TARGET: f64 = 1.25e-4;
/// Purity tolerance for snapshots at perfect detection.
pub const PURITY_TOL: f64 = 1e-6;
/// Tolerance on occupations outside `[0, 1]`.
pub const OCCUPATION_TOL: f64 = 1e-8;

/// `dt = p_target / gamma`.
pub fn choose_dt(params: &ModelParams, p_target: f64) -> Result<f64> {
    let gamma = params.gamma();
    if !(p_target > 0.0 && p_target < 1.0) {
        return domain(format!("p_target must lie in (0, 1), got {p_target}"));
    }
    if !(gamma > 0.0) {
        return domain("time step policy needs a positive mean rate");
    }
    Ok(p_target / gamma)
}

/// `max(10 / gamma, L / (4 J))`.
pub fn default_burn_in(params: &ModelParams) -> f64 {
    (10.0 / params.gamma()).max(params.l as f64 / (4.0 * params.j))
}

/// Which simulation backend drives the trajectories.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Fast backend when the model allows it, dense otherwise.
    #[default]
    Auto,
    Dense,
    Fast,
}

/// Window offsets used for the subsystem entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetPolicy {
    /// Every site for `ell <= 64`, otherwise 64 spaced offsets.
    #[default]
    Default,
    /// Every site.
    All,
    /// This many evenly spaced offsets.
    Spaced(usize),
}

impl OffsetPolicy {
    pub fn offsets(self, system: usize, ell: usize) -> Vec<usize> {
        match self {
            Self::Default => default_offsets(system, ell),
            Self::All => (0..system).collect(),
            Self::Spaced(n) => spaced_offsets(system, n),
        }
    }
}

/// Run schedule and measurement settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Explicit time step; derived from `p_target` when absent.
    pub dt: Option<f64>,
    pub p_target: f64,
    /// Burn-in time; [`default_burn_in`] when absent.
    pub t_burn: Option<f64>,
    pub t_measure: f64,
    /// Steps between snapshots; about `1 / gamma` when absent.
    pub measure_stride: Option<u64>,
    pub n_traj: usize,
    pub master_seed: u64,
    pub backend: Backend,
    /// Record the density correlation.
    pub correlations: bool,
    /// Subsystem sizes for the entropy; empty disables it.
    pub entropy_sizes: Vec<usize>,
    pub offsets: OffsetPolicy,
    /// Cut sizes for the negativity; empty disables it.
    pub negativity_sizes: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dt: None,
            p_target: DEFAULT_P_TARGET,
            t_burn: None,
            t_measure: 0.0,
            measure_stride: None,
            n_traj: 1,
            master_seed: 0,
            backend: Backend::Auto,
            correlations: true,
            entropy_sizes: Vec::new(),
            offsets: OffsetPolicy::Default,
            negativity_sizes: Vec::new(),
        }
    }
}

/// Concrete schedule in steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub dt: f64,
    pub burn_steps: u64,
    pub measure_steps: u64,
    pub stride: u64,
}

impl Schedule {
    pub fn snapshots(&self) -> u64 {
        self.measure_steps / self.stride + 1
    }

    pub fn total_steps(&self) -> u64 {
        self.burn_steps + (self.snapshots() - 1) * self.stride
    }
}

impl RunConfig {
    pub fn validate(&self, params: &ModelParams) -> Result<()> {
        if self.n_traj == 0 {
            return domain("n_traj must be at least 1");
        }
        if !(self.t_measure >= 0.0 && self.t_measure.is_finite()) {
            return domain("t_measure must be finite and non-negative");
        }
        if let Some(t) = self.t_burn {
            if !(t >= 0.0 && t.is_finite()) {
                return domain("t_burn must be finite and non-negative");
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0 && dt.is_finite()) {
                return domain("dt must be positive");
            }
        }
        if self.measure_stride == Some(0) {
            return domain("measure_stride must be positive");
        }
        if let Some(&bad) = self.entropy_sizes.iter().find(|&&s| s == 0 || s > params.l) {
            return domain(format!("entropy size {bad} outside 1..={}", params.l));
        }
        if let Some(&bad) = self.negativity_sizes.iter().find(|&&s| s == 0 || s >= params.l) {
            return domain(format!("negativity cut {bad} outside 1..{}", params.l));
        }
        if let OffsetPolicy::Spaced(0) = self.offsets {
            return domain("at least one entropy offset is required");
        }
        Ok(())
    }

    pub fn schedule(&self, params: &ModelParams) -> Result<Schedule> {
        self.validate(params)?;
        let dt = match self.dt {
            Some(dt) => dt,
            None => choose_dt(params, self.p_target)?,
        };
        let t_burn = self.t_burn.unwrap_or_else(|| default_burn_in(params));
        let stride = match self.measure_stride {
            Some(s) => s,
            None if params.gamma() > 0.0 => ((1.0 / params.gamma()) / dt).round().max(1.0) as u64,
            None => 1,
        };
        Ok(Schedule {
            dt,
            burn_steps: (t_burn / dt).round() as u64,
            measure_steps: (self.t_measure / dt).round() as u64,
            stride,
        })
    }
}

/// Static model data shared by all trajectories.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: ModelParams,
    pub h: LatticeHamiltonian,
    pub channels: JumpChannels,
}

impl Model {
    /// Nearest-neighbour ring with local gain and loss.
    pub fn local(params: ModelParams) -> Result<Self> {
        let h = build_hopping_hamiltonian(params.l, params.j)?;
        let channels = build_jump_channels(&params, &h, None, None)?;
        Ok(Self { params, h, channels })
    }

    pub fn new(params: ModelParams, h: LatticeHamiltonian, channels: JumpChannels) -> Result<Self> {
        if h.size() != params.l || channels.size() != params.l {
            return Err(Error::Dimension("model parts differ in size".into()));
        }
        Ok(Self { params, h, channels })
    }

    /// Whether the fast backend applies.
    pub fn supports_fast(&self) -> bool {
        self.channels.local_rates().is_some() && self.h.circulant_dispersion().is_some()
    }
}

/// Propagators for one `(model, dt)` pair, shared read-only by all workers.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub model: Model,
    pub dt: f64,
    pub no_jump: Option<NoJumpPropagator>,
    pub lindblad: Option<FixedLindblad>,
    pub backend: Backend,
}

impl Stepper {
    pub fn new(model: Model, dt: f64, backend: Backend) -> Result<Self> {
        let eta = model.params.eta;
        let fast = match backend {
            Backend::Auto => model.supports_fast(),
            Backend::Fast if !model.supports_fast() => {
                return domain("fast backend needs a translation-invariant Hamiltonian and local channels")
            }
            Backend::Fast => true,
            Backend::Dense => false,
        };
        let (no_jump, lindblad) = if fast {
            (None, None)
        } else {
            let no_jump = (eta > 0.0).then(|| NoJumpPropagator::new(&model.h, &model.channels, eta * dt)).transpose()?;
            let lindblad = (eta < 1.0).then(|| LindbladPropagator::new(&model.channels).with_duration((1.0 - eta) * dt));
            (no_jump, lindblad)
        };
        let backend = if fast { Backend::Fast } else { Backend::Dense };
        Ok(Self { model, dt, no_jump, lindblad, backend })
    }

    /// Stepper with the time step of `config`.
    pub fn for_config(model: Model, config: &RunConfig) -> Result<Self> {
        let dt = config.schedule(&model.params)?.dt;
        Self::new(model, dt, config.backend)
    }

    /// Starts a trajectory on the chosen backend.
    pub fn start(&self, d0: &CorrelationMatrix) -> Result<TrajectoryState> {
        match self.backend {
            Backend::Fast => Ok(TrajectoryState::Fast(Box::new(FastTrajectory::new(
                &self.model.h,
                &self.model.channels,
                self.model.params.eta,
                self.dt,
                d0,
            )?))),
            _ => Ok(TrajectoryState::Dense(d0.clone())),
        }
    }
}

/// One dense full step: conditional substep, unconditional substep, hermitize.
pub fn step<R: Rng + ?Sized>(d: &mut CorrelationMatrix, stepper: &Stepper, rng: &mut R) -> Result<Vec<JumpEvent>> {
    let eta = stepper.model.params.eta;
    let log = match &stepper.no_jump {
        Some(nj) => conditional_substep(d, &stepper.model.channels, nj, eta, stepper.dt, rng)?,
        None if eta == 0.0 => Vec::new(),
        None => return Err(Error::Domain("stepper was built for the fast backend".into())),
    };
    if let Some(lb) = &stepper.lindblad {
        *d = lb.apply(d).hermitized();
    }
    Ok(log)
}

/// Mutable state of one trajectory.
#[derive(Clone, Debug)]
pub enum TrajectoryState {
    Dense(CorrelationMatrix),
    Fast(Box<FastTrajectory>),
}

impl TrajectoryState {
    pub fn step<R: Rng + ?Sized>(&mut self, stepper: &Stepper, rng: &mut R) -> Result<Vec<JumpEvent>> {
        match self {
            Self::Dense(d) => step(d, stepper, rng),
            Self::Fast(f) => f.step(rng),
        }
    }

    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        match self {
            Self::Dense(d) => Ok(d.clone()),
            Self::Fast(f) => f.correlation(),
        }
    }
}

/// Random stream of trajectory `index`.
pub fn trajectory_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Within-trajectory averages of all recorded observables.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub index: usize,
    pub snapshots: u64,
    pub jumps: u64,
    /// Per-state connected correlation `C_l`.
    pub c_l: Vec<f64>,
    /// Translation-averaged `D_ll D_{l+r,l+r}`.
    pub density_products: Vec<f64>,
    /// Site occupations.
    pub density: Vec<f64>,
    pub entropy: Vec<f64>,
    pub negativity: Vec<f64>,
    /// Largest `max |D^2 - D|` seen at a snapshot.
    pub max_purity_defect: f64,
    pub final_state: CorrelationMatrix,
}

fn validate_snapshot(d: &CorrelationMatrix, eta: f64) -> Result<f64> {
    let m = d.d();
    for l in 0..d.size() {
        let v = m[(l, l)];
        if !v.re.is_finite() || !v.im.is_finite() || v.re < -OCCUPATION_TOL || v.re > 1.0 + OCCUPATION_TOL {
            return Err(Error::State(format!("occupation {v} at site {l}")));
        }
    }
    let defect = d.purity_defect();
    if eta == 1.0 && defect > PURITY_TOL {
        return Err(Error::State(format!("purity defect {defect:e} at perfect detection")));
    }
    Ok(defect)
}

fn add_into(acc: &mut [f64], xs: &[f64]) {
    acc.iter_mut().zip(xs).for_each(|(a, x)| *a += x);
}

/// Runs trajectory `index` and returns its time-averaged observables.
pub fn run_trajectory(index: usize, config: &RunConfig, stepper: &Stepper) -> Result<TrajectorySample> {
    let params = &stepper.model.params;
    let schedule = config.schedule(params)?;
    if (schedule.dt - stepper.dt).abs() > 1e-12 * stepper.dt {
        return domain(format!("stepper built for dt = {} but the run uses dt = {}", stepper.dt, schedule.dt));
    }
    let l = params.l;
    let mut rng = trajectory_rng(config.master_seed, index as u64);
    let mut state = stepper.start(&initial_cdw_state(l)?)?;
    let mut jumps = 0u64;
    for _ in 0..schedule.burn_steps {
        jumps += state.step(stepper, &mut rng)?.len() as u64;
    }
    let corr_len = if config.correlations { l } else { 0 };
    let mut sample = TrajectorySample {
        index,
        snapshots: 0,
        jumps: 0,
        c_l: vec![0.0; corr_len],
        density_products: vec![0.0; corr_len],
        density: vec![0.0; corr_len],
        entropy: vec![0.0; config.entropy_sizes.len()],
        negativity: vec![0.0; config.negativity_sizes.len()],
        max_purity_defect: 0.0,
        final_state: CorrelationMatrix::new(CMat::zeros(0, 0)),
    };
    let snapshots = schedule.snapshots();
    for k in 0..snapshots {
        if k > 0 {
            for _ in 0..schedule.stride {
                jumps += state.step(stepper, &mut rng)?.len() as u64;
            }
        }
        let d = state.correlation()?;
        let defect = validate_snapshot(&d, params.eta)?;
        sample.max_purity_defect = sample.max_purity_defect.max(defect);
        if config.correlations {
            add_into(&mut sample.c_l, &state_correlation(&d));
            add_into(&mut sample.density_products, &observables::density_products(&d));
            let occ: Vec<f64> = (0..l).map(|s| d.occupation(s)).collect();
            add_into(&mut sample.density, &occ);
        }
        for (acc, &ell) in sample.entropy.iter_mut().zip(&config.entropy_sizes) {
            *acc += observables::subsystem_entropy(&d, ell, &config.offsets.offsets(l, ell))?;
        }
        if !config.negativity_sizes.is_empty() {
            let lambda = d.spectrum()?;
            for (acc, &ell) in sample.negativity.iter_mut().zip(&config.negativity_sizes) {
                *acc += observables::fermionic_negativity_with_spectrum(&d, ell, &lambda)?;
            }
        }
        if k + 1 == snapshots {
            sample.final_state = d;
        }
    }
    let inv = 1.0 / snapshots as f64;
    for v in [&mut sample.c_l, &mut sample.density_products, &mut sample.density, &mut sample.entropy, &mut sample.negativity] {
        v.iter_mut().for_each(|x| *x *= inv);
    }
    sample.snapshots = snapshots;
    sample.jumps = jumps;
    Ok(sample)
}

/// A trajectory that stopped on a validity or numerical failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortedTrajectory {
    pub index: usize,
    pub message: String,
}

/// Across-trajectory accumulators.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub c_l: SeriesStats,
    pub c_q: SeriesStats,
    pub density_products: SeriesStats,
    pub density: SeriesStats,
    pub entropy: SeriesStats,
    pub negativity: SeriesStats,
    pub jumps: RunningStats,
    pub max_purity_defect: f64,
    pub aborted: Vec<AbortedTrajectory>,
}

impl EnsembleStats {
    pub fn new(system: usize, config: &RunConfig) -> Self {
        let corr = if config.correlations { system } else { 0 };
        Self {
            c_l: SeriesStats::new(corr),
            c_q: SeriesStats::new(corr),
            density_products: SeriesStats::new(corr),
            density: SeriesStats::new(corr),
            entropy: SeriesStats::new(config.entropy_sizes.len()),
            negativity: SeriesStats::new(config.negativity_sizes.len()),
            ..Self::default()
        }
    }

    pub fn push(&mut self, sample: &TrajectorySample) -> Result<()> {
        if !sample.c_l.is_empty() {
            let c_q: Vec<f64> = observables::momentum_correlation(&sample.c_l)?.into_iter().map(|p| p.c_q).collect();
            self.c_l.push(&sample.c_l);
            self.c_q.push(&c_q);
            self.density_products.push(&sample.density_products);
            self.density.push(&sample.density);
        }
        self.entropy.push(&sample.entropy);
        self.negativity.push(&sample.negativity);
        self.jumps.push(sample.jumps as f64);
        self.max_purity_defect = self.max_purity_defect.max(sample.max_purity_defect);
        Ok(())
    }

    pub fn merge(&mut self, other: &EnsembleStats) {
        self.c_l.merge(&other.c_l);
        self.c_q.merge(&other.c_q);
        self.density_products.merge(&other.density_products);
        self.density.merge(&other.density);
        self.entropy.merge(&other.entropy);
        self.negativity.merge(&other.negativity);
        self.jumps.merge(&other.jumps);
        self.max_purity_defect = self.max_purity_defect.max(other.max_purity_defect);
        self.aborted.extend(other.aborted.iter().cloned());
        self.aborted.sort_by_key(|a| a.index);
    }

    /// Completed trajectories.
    pub fn trajectories(&self) -> u64 {
        self.jumps.count
    }

    /// Ensemble-averaged `C_l` with chord lengths.
    pub fn correlation_profile(&self) -> CorrelationProfile {
        CorrelationProfile::new(self.c_l.means())
    }

    /// `C_l` including the covariance of densities across trajectories.
    pub fn correlation_with_trajectory_covariance(&self) -> Vec<f64> {
        let base = self.c_l.means();
        let products = self.density_products.means();
        let n = self.density.means();
        let l = n.len();
        (0..l)
            .map(|r| {
                let outer = (0..l).map(|s| n[s] * n[(s + r) % l]).sum::<f64>() / l as f64;
                base[r] + products[r] - outer
            })
            .collect()
    }
}

/// Runs all trajectories in parallel and merges them in index order.
pub fn ensemble_run(config: &RunConfig, stepper: &Stepper) -> Result<EnsembleStats> {
    ensemble_run_with_progress(config, stepper, |_, _| {})
}

/// [`ensemble_run`] with a callback after each finished trajectory.
pub fn ensemble_run_with_progress<F>(config: &RunConfig, stepper: &Stepper, progress: F) -> Result<EnsembleStats>
where
    F: Fn(usize, &Result<TrajectorySample>) + Sync,
{
    config.validate(&stepper.model.params)?;
    let results: Vec<Result<TrajectorySample>> = (0..config.n_traj)
        .into_par_iter()
        .map(|i| {
            let r = run_trajectory(i, config, stepper);
            progress(i, &r);
            r
        })
        .collect();
    let mut stats = EnsembleStats::new(stepper.model.params.l, config);
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(sample) => stats.push(&sample)?,
            Err(e) => stats.aborted.push(AbortedTrajectory { index, message: e.to_string() }),
        }
    }
    if stats.trajectories() == 0 {
        return Err(Error::State(format!(
            "all {} trajectories aborted; first: {}",
            config.n_traj,
            stats.aborted.first().map(|a| a.message.as_str()).unwrap_or("")
        )));
    }
    Ok(stats)
}
