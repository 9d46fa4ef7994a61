//! Running experiments and sweeps and writing their artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use fermion_counting::fits::{self, ClFitWindow, FitResult, Peak};
use fermion_counting::observables::{chord_length, effective_central_charge, momentum_correlation, q_tilde};
use fermion_counting::theory::{self, CurveKind, SpectrumTable, TheoryParams};
use fermion_counting::trajectory::{ensemble_run_with_progress, EnsembleStats, Model, Schedule, Stepper};
use serde::Serialize;

use crate::config::{ExperimentConfig, SweepConfig};

/// Extracted scales and fit results.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FitsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_c: Option<Peak<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l_m: Option<Peak<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cl_exponential: Option<FitResult<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cq_mass: Option<FitResult<f64>>,
    /// `p1 sqrt(p2)`, the momentum-space intercept of the mass fit.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cq_intercept: Option<f64>,
    /// Extractors that failed, with the reason.
    pub failures: Vec<String>,
}

/// Ensemble averages in the layout of the output files.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Measurements {
    pub l: Vec<usize>,
    pub l_chord: Vec<f64>,
    pub c_mean: Vec<f64>,
    pub c_stderr: Vec<f64>,
    pub q: Vec<f64>,
    pub q_tilde: Vec<f64>,
    pub c_q: Vec<f64>,
    pub c_q_stderr: Vec<f64>,
    pub entropy: Vec<EntropyRow>,
}

/// One row of `entropy.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EntropyRow {
    pub ell: usize,
    pub ell_chord: f64,
    pub s: Option<(f64, f64)>,
    pub e: Option<(f64, f64)>,
    pub c_eff: Option<f64>,
}

/// Everything produced by one experiment.
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub schedule: Schedule,
    pub backend: String,
    pub stats: EnsembleStats,
    pub measurements: Measurements,
    pub fits: FitsReport,
    pub theory: TheoryParams<f64>,
}

/// Derived scales recorded in the metadata.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scales {
    pub l0: f64,
    pub g0: f64,
    pub xi: Option<f64>,
    pub l_star: f64,
    pub q_c: f64,
    pub velocity: f64,
    /// Momentum window `[1/l*, 1/l0]` of the renormalized curve.
    pub rg_window: (f64, f64),
}

impl Scales {
    pub fn of(p: &TheoryParams<f64>) -> Self {
        let xi = p.xi();
        Self {
            l0: p.l0(),
            g0: p.g0(),
            xi: xi.is_finite().then_some(xi),
            l_star: p.l_star(),
            q_c: p.q_c(),
            velocity: p.velocity(),
            rg_window: (1.0 / p.l_star(), 1.0 / p.l0()),
        }
    }
}

fn measurements(stats: &EnsembleStats, config: &ExperimentConfig) -> Result<Measurements> {
    let system = config.model.l;
    let c_mean = stats.c_l.means();
    let c_stderr = stats.c_l.stderrs();
    let (q, qt, c_q) = if c_mean.is_empty() {
        (Vec::new(), Vec::new(), Vec::new())
    } else {
        let pts = momentum_correlation(&c_mean)?;
        (pts.iter().map(|p| p.q).collect(), pts.iter().map(|p| p.q_tilde).collect(), pts.iter().map(|p| p.c_q).collect())
    };
    let obs = &config.observables;
    let mut sizes: Vec<usize> = obs.entropy_sizes.iter().chain(&obs.negativity_sizes).copied().collect();
    sizes.sort_unstable();
    sizes.dedup();
    let s_mean = stats.entropy.means();
    let s_err = stats.entropy.stderrs();
    let e_mean = stats.negativity.means();
    let e_err = stats.negativity.stderrs();
    // central charge on the chord grid of the entropy sizes, in ascending order
    let mut s_order: Vec<usize> = (0..obs.entropy_sizes.len()).collect();
    s_order.sort_by_key(|&i| obs.entropy_sizes[i]);
    let chords: Vec<f64> = s_order.iter().map(|&i| chord_length(obs.entropy_sizes[i] as f64, system)).collect();
    let s_sorted: Vec<f64> = s_order.iter().map(|&i| s_mean[i]).collect();
    let c_eff = if chords.len() >= 2 && chords.windows(2).all(|w| w[1] > w[0]) {
        Some(effective_central_charge(&chords, &s_sorted)?)
    } else {
        None
    };
    let entropy = sizes
        .iter()
        .map(|&ell| {
            let si = obs.entropy_sizes.iter().position(|&s| s == ell);
            let ei = obs.negativity_sizes.iter().position(|&s| s == ell);
            let ci = s_order.iter().position(|&i| Some(i) == si);
            EntropyRow {
                ell,
                ell_chord: chord_length(ell as f64, system),
                s: si.map(|i| (s_mean[i], s_err[i])),
                e: ei.map(|i| (e_mean[i], e_err[i])),
                c_eff: c_eff.as_ref().zip(ci).map(|(c, i)| c[i]),
            }
        })
        .collect();
    Ok(Measurements {
        l: (0..c_mean.len()).collect(),
        l_chord: (0..c_mean.len()).map(|l| chord_length(l as f64, system)).collect(),
        c_mean,
        c_stderr,
        q,
        q_tilde: qt,
        c_q,
        c_q_stderr: stats.c_q.stderrs(),
        entropy,
    })
}

fn run_fits(m: &Measurements, config: &ExperimentConfig, p: &TheoryParams<f64>) -> FitsReport {
    let f = &config.fits;
    let half = config.model.l / 2;
    let l0 = p.l0();
    let g0 = p.g0();
    let mut out = FitsReport::default();
    let mut failures = Vec::new();
    if f.q_c {
        let x: Vec<f64> = m.q_tilde[1..=half].to_vec();
        let ratio: Vec<f64> = (1..=half).map(|k| m.c_q[k] / (g0 * m.q_tilde[k])).collect();
        match fits::extract_qc(&x, &ratio) {
            Ok(pk) => out.q_c = Some(pk),
            Err(e) => failures.push(format!("q_c: {e}")),
        }
    }
    if f.l_c {
        match fits::extract_lc_with(&m.l_chord[1..=half], &m.c_mean[1..=half], l0, f.l_c_threshold) {
            Ok(v) => out.l_c = Some(v),
            Err(e) => failures.push(format!("l_c: {e}")),
        }
    }
    if f.l_m {
        let rows: Vec<&EntropyRow> = m.entropy.iter().filter(|r| r.c_eff.is_some()).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.ell_chord).collect();
        let y: Vec<f64> = rows.iter().filter_map(|r| r.c_eff).collect();
        match fits::extract_lm(&x, &y) {
            Ok(pk) => out.l_m = Some(pk),
            Err(e) => failures.push(format!("l_m: {e}")),
        }
    }
    if f.cl_exponential {
        let window = match f.cl_window {
            Some(w) => ClFitWindow { l_min: w.l_min, l_max: w.l_max, noise_factor: w.noise_factor },
            None => ClFitWindow::standard(l0, half as f64),
        };
        let l: Vec<f64> = (1..=half).map(|v| v as f64).collect();
        let err = &m.c_stderr[1..=half];
        let stderr = err.iter().all(|s| s.is_finite()).then_some(err);
        match fits::fit_cl_exponential(&l, &m.c_mean[1..=half], stderr, l0, window) {
            Ok(r) => out.cl_exponential = Some(r),
            Err(e) => failures.push(format!("cl_exponential: {e}")),
        }
    }
    if f.cq_mass {
        let idx: Vec<usize> = (0..=half).filter(|&k| m.q_tilde[k] * l0 <= f.cq_mass_max_u).collect();
        let x: Vec<f64> = idx.iter().map(|&k| m.q_tilde[k] * l0).collect();
        let y: Vec<f64> = idx.iter().map(|&k| m.c_q[k] / (g0 / l0)).collect();
        let w: Vec<f64> = idx.iter().map(|&k| (g0 / l0 / m.c_q_stderr[k]).powi(2)).collect();
        let w = w.iter().all(|v| v.is_finite() && *v > 0.0).then_some(w);
        match fits::fit_cq_mass(&x, &y, w.as_deref()) {
            Ok(r) => {
                out.cq_intercept = Some(r.params[0] * r.params[1].max(0.0).sqrt());
                out.cq_mass = Some(r);
            }
            Err(e) => failures.push(format!("cq_mass: {e}")),
        }
    }
    out.failures = failures;
    out
}

/// Runs the ensemble, evaluates observables and fits. Progress lines go to
/// standard error when `progress` is set.
pub fn run_experiment(config: &ExperimentConfig, progress: bool) -> Result<ExperimentOutcome> {
    config.validate()?;
    let params = config.model.params()?;
    let theory = config.model.theory()?;
    let run = config.run_config();
    let schedule = run.schedule(&params)?;
    let stepper = Stepper::for_config(Model::local(params)?, &run)?;
    let backend = format!("{:?}", stepper.backend).to_lowercase();
    if progress {
        eprintln!(
            "L={} gamma={} eta={} backend={backend}: {} trajectories x {} steps, {} snapshots each",
            params.l,
            params.gamma(),
            params.eta,
            run.n_traj,
            schedule.total_steps(),
            schedule.snapshots()
        );
    }
    let stats = ensemble_run_with_progress(&run, &stepper, |i, r| {
        if progress {
            match r {
                Ok(s) => eprintln!("trajectory {i}: {} jumps", s.jumps),
                Err(e) => eprintln!("trajectory {i} aborted: {e}"),
            }
        }
    })?;
    let measurements = measurements(&stats, config)?;
    let fits = run_fits(&measurements, config, &theory);
    Ok(ExperimentOutcome { config: config.clone(), schedule, backend, stats, measurements, fits, theory })
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).with_context(|| format!("writing {}", path.display()))
}

fn meta_json(config: &ExperimentConfig, extra: serde_json::Value) -> Result<String> {
    let theory = config.model.theory()?;
    let mut meta = serde_json::json!({
        "code_version": env!("CARGO_PKG_VERSION"),
        "config_hash": config.hash(),
        "seed": config.run.seed,
        "config": config,
        "scales": Scales::of(&theory),
    });
    if let (Some(m), serde_json::Value::Object(e)) = (meta.as_object_mut(), extra) {
        m.extend(e);
    }
    Ok(serde_json::to_string_pretty(&meta)? + "\n")
}

/// Writes `correlations.csv`, `momentum.csv`, `entropy.csv`, `fits.json`,
/// `meta.json` and, when enabled, the theory curves.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let m = &outcome.measurements;
    if !m.c_mean.is_empty() {
        let mut s = String::from("l,l_chord,C_mean,C_stderr\n");
        for i in 0..m.l.len() {
            writeln!(s, "{},{},{},{}", m.l[i], num(m.l_chord[i]), num(m.c_mean[i]), num(m.c_stderr[i]))?;
        }
        write_file(dir, "correlations.csv", &s)?;
        let mut s = String::from("k,q,q_tilde,Cq,Cq_stderr\n");
        for k in 0..m.q.len() {
            writeln!(s, "{k},{},{},{},{}", num(m.q[k]), num(m.q_tilde[k]), num(m.c_q[k]), num(m.c_q_stderr[k]))?;
        }
        write_file(dir, "momentum.csv", &s)?;
    }
    if !m.entropy.is_empty() {
        let mut s = String::from("ell,ell_chord,S_mean,S_stderr,E_mean,E_stderr,c_eff\n");
        let pair = |v: Option<(f64, f64)>| v.map(|(a, b)| format!("{},{}", num(a), num(b))).unwrap_or_else(|| ",".into());
        for r in &m.entropy {
            writeln!(s, "{},{},{},{},{}", r.ell, num(r.ell_chord), pair(r.s), pair(r.e), r.c_eff.map(num).unwrap_or_default())?;
        }
        write_file(dir, "entropy.csv", &s)?;
    }
    write_file(dir, "fits.json", &(serde_json::to_string_pretty(&outcome.fits)? + "\n"))?;
    if outcome.config.theory.enabled {
        write_theory(&outcome.config, dir)?;
    }
    let extra = serde_json::json!({
        "schedule": outcome.schedule,
        "backend": outcome.backend,
        "trajectories": outcome.stats.trajectories(),
        "aborted": outcome.stats.aborted,
        "mean_jumps": outcome.stats.jumps.mean,
        "max_purity_defect": outcome.stats.max_purity_defect,
    });
    write_file(dir, "meta.json", &meta_json(&outcome.config, extra)?)
}

/// Writes `theory_cq.csv`, `theory_cl.csv` and `theory_entropy.csv`.
pub fn write_theory(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = config.model.theory()?;
    let system = config.model.l;
    let half = system / 2;
    let (l0, g0) = (p.l0(), p.g0());

    let mut s = String::from("k,q,q_tilde,u,gaussian,gaussian_ratio,rg_ratio,rg_valid,rg_smooth\n");
    for k in 0..=half {
        let q = 2.0 * std::f64::consts::PI * k as f64 / system as f64;
        let qt = q_tilde(q);
        let gauss = theory::gaussian_cq(qt, &p)?;
        let rg = theory::rg_corrected_ratio(qt, &p);
        let ratio = if k == 0 { f64::NAN } else { gauss / (g0 * qt) };
        let rg_ratio = if k == 0 { f64::NAN } else { rg.value };
        writeln!(
            s,
            "{k},{},{},{},{},{},{},{},{}",
            num(q),
            num(qt),
            num(qt * l0),
            num(gauss),
            num(ratio),
            num(rg_ratio),
            u8::from(rg.valid && k > 0),
            num(theory::rg_smooth_cq(q, &p)?)
        )?;
    }
    write_file(dir, "theory_cq.csv", &s)?;

    let l_max = config.theory.l_max.unwrap_or(half).max(2);
    let gauss = SpectrumTable::build(&p, CurveKind::Gaussian, l_max)?;
    let mut s = String::from("l,l_chord,gaussian,asymptotic\n");
    let coeff = gauss.cosine_coefficients(half);
    for (l, c) in coeff.iter().enumerate().skip(1) {
        writeln!(s, "{l},{},{},{}", num(chord_length(l as f64, system)), num(*c), num(theory::asymptotic_cl(l as f64, &p)))?;
    }
    write_file(dir, "theory_cl.csv", &s)?;

    let renorm = SpectrumTable::build(&p, CurveKind::Renormalized, l_max)?;
    let cg = gauss.central_charge(l_max);
    let cr = renorm.central_charge(l_max);
    let mut s = String::from("ell,S_gaussian,c_gaussian,c_renormalized\n");
    for ((ell, a), (_, b)) in cg.iter().zip(&cr) {
        writeln!(s, "{ell},{},{},{}", num(gauss.entropy(*ell as f64)), num(*a), num(*b))?;
    }
    write_file(dir, "theory_entropy.csv", &s)
}

/// `theory` subcommand: curves and metadata without simulation.
pub fn run_theory(config: &ExperimentConfig, dir: &Path) -> Result<()> {
    config.validate()?;
    write_theory(config, dir)?;
    write_file(dir, "meta.json", &meta_json(config, serde_json::json!({}))?)
}

/// One row of `scaling.csv`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ScalingRow {
    pub value: f64,
    pub q_c: Option<f64>,
    pub l_c: Option<f64>,
    pub l_m: Option<f64>,
    pub xi_fit: Option<f64>,
    pub xi_stderr: Option<f64>,
    pub cq_intercept: Option<f64>,
    pub q_c_theory: f64,
    pub xi_theory: Option<f64>,
}

/// Power laws fitted across a sweep.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SweepSummary {
    pub rows: Vec<ScalingRow>,
    /// `(exponent, stderr)` of each column against the swept value.
    pub exponents: Vec<(String, f64, f64)>,
}

/// Runs every grid point into `dir/point_<i>` and writes `scaling.csv` and
/// `sweep.json`.
pub fn run_sweep(sweep: &SweepConfig, dir: &Path, progress: bool) -> Result<SweepSummary> {
    let points = sweep.points()?;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut rows = Vec::new();
    for (i, cfg) in points.iter().enumerate() {
        let outcome = run_experiment(cfg, progress)?;
        write_outputs(&outcome, &dir.join(format!("point_{i}")))?;
        let f = &outcome.fits;
        let xi = f.cl_exponential.as_ref();
        rows.push(ScalingRow {
            value: sweep.values[i],
            q_c: f.q_c.map(|p| p.x),
            l_c: f.l_c,
            l_m: f.l_m.map(|p| p.x),
            xi_fit: xi.map(|r| r.params[1]),
            xi_stderr: xi.map(|r| r.stderr[1]),
            cq_intercept: f.cq_intercept,
            q_c_theory: outcome.theory.q_c(),
            xi_theory: Some(outcome.theory.xi()).filter(|x| x.is_finite()),
        });
    }
    let mut exponents = Vec::new();
    let columns: [(&str, fn(&ScalingRow) -> Option<f64>); 5] = [
        ("q_c", |r| r.q_c),
        ("l_c", |r| r.l_c),
        ("l_m", |r| r.l_m),
        ("xi_fit", |r| r.xi_fit),
        ("cq_intercept", |r| r.cq_intercept),
    ];
    for (name, get) in columns {
        let (x, y): (Vec<f64>, Vec<f64>) =
            rows.iter().filter_map(|r| get(r).filter(|v| v.is_finite() && *v > 0.0).map(|v| (r.value, v))).unzip();
        if x.len() >= 2 {
            if let Ok((k, se)) = fits::power_law_exponent(&x, &y) {
                exponents.push((name.to_string(), k, se));
            }
        }
    }
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    let mut s = String::from("value,q_c,l_c,l_m,xi_fit,xi_stderr,cq_intercept,q_c_theory,xi_theory\n");
    for r in &rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            num(r.value),
            opt(r.q_c),
            opt(r.l_c),
            opt(r.l_m),
            opt(r.xi_fit),
            opt(r.xi_stderr),
            opt(r.cq_intercept),
            num(r.q_c_theory),
            opt(r.xi_theory)
        )?;
    }
    write_file(dir, "scaling.csv", &s)?;
    let summary = SweepSummary { rows, exponents };
    write_file(dir, "sweep.json", &(serde_json::to_string_pretty(&serde_json::json!({"sweep": sweep, "summary": summary}))? + "\n"))?;
    Ok(summary)
}

/// Output directory: explicit flag, then the config, then `out`.
pub fn output_dir(flag: Option<PathBuf>, config: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("out"))
}
