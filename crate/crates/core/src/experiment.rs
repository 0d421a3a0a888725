//! End-to-end experiments: sample a potential, certify non-resonance, build
//! normal forms for each amplitude, integrate, and summarize.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequencies::Frequencies;
use crate::lattice::Lattice;
use crate::nonlinearity::{expand, SeriesSpec};
use crate::nonres::{self, NonResReport, NrConstants, ScanOptions};
use crate::normal_form::{self, BuildOptions, DegreeDiagnostics};
use crate::potential::{derive_seed, Potential};
use crate::simulator::{simulate, ObservableConfig, SimulateOptions, StrangStepper, STRIP_SAMPLES};
use crate::state::State;

/// A nonlinearity given either as a preset string (`power:p=1,a=1`) or as a
/// full series table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NonlinearityConfig {
    Preset(String),
    Series(SeriesSpec),
}

impl NonlinearityConfig {
    pub fn resolve(&self) -> Result<SeriesSpec> {
        match self {
            NonlinearityConfig::Preset(s) => SeriesSpec::parse_preset(s),
            NonlinearityConfig::Series(s) => SeriesSpec::new(s.terms.clone(), Some(s.r0), Some(s.m)),
        }
    }
}

/// Non-resonance constants, or `"calibrate"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantsConfig {
    Calibrate(String),
    Fixed(NrConstants),
}

fn default_cadence() -> usize {
    1000
}
fn default_r_max() -> usize {
    4
}
fn default_gamma() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}
fn default_max_degree() -> usize {
    5
}
fn default_constants() -> ConstantsConfig {
    ConstantsConfig::Calibrate("calibrate".into())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub m: f64,
    #[serde(rename = "R")]
    pub r_scale: f64,
    pub seed: u64,
    pub beta: f64,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    pub rho: f64,
    pub nonlinearity: NonlinearityConfig,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub h: f64,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default = "default_constants")]
    pub constants: ConstantsConfig,
    /// `γ` used when calibrating.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_r_max")]
    pub r_max: usize,
    #[serde(default = "default_true")]
    pub zero_momentum_only: bool,
    /// Cap on the normal-form degree `r`.
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    /// Amplitudes for the conjugacy check; skipped when empty.
    #[serde(default)]
    pub amplitudes: Vec<f64>,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value.clone())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
            return Err(Error::param("epsilons", format!("{e} outside (0, 1)")));
        }
        if !(self.rho > 0.0) {
            return Err(Error::param("rho", "must be positive"));
        }
        if !(self.h > 0.0) || !(self.t_end >= 0.0) || self.cadence == 0 {
            return Err(Error::param("T/h/cadence", "need T >= 0, h > 0, cadence > 0"));
        }
        if let ConstantsConfig::Calibrate(s) = &self.constants {
            if s != "calibrate" {
                return Err(Error::param("constants", format!("expected \"calibrate\" or an object, got \"{s}\"")));
            }
        }
        self.nonlinearity.resolve()?;
        Ok(())
    }

    /// `σ_ρ = min(1/8, ρ/2)`.
    pub fn sigma(&self) -> f64 {
        (0.125f64).min(self.rho / 2.0)
    }
}

/// Real initial datum with `|u₀|_{2ρ} = ε`: `|ξ_a| ∝ e^{−(2ρ+1)|a|}` with
/// seeded amplitude jitter and phases.
pub fn initial_data(lattice: Arc<Lattice>, epsilon: f64, rho: f64, seed: u64) -> Result<State<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi: Vec<num_complex::Complex<f64>> = lattice
        .sites()
        .map(|s| {
            let amp = rng.random_range(0.5..1.0) * (-(2.0 * rho + 1.0) * lattice.modulus(s)).exp();
            num_complex::Complex::from_polar(amp, rng.random_range(0.0..std::f64::consts::TAU))
        })
        .collect();
    let z = State::from_xi_dense(lattice, &xi);
    let sup = z.strip_sup(2.0 * rho, STRIP_SAMPLES);
    Ok(z.scale(epsilon / sup))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    #[serde(rename = "N")]
    pub n: u64,
    pub r: usize,
    /// `r` after the configured degree cap.
    pub r_used: usize,
    pub nf_diagnostics: Vec<DegreeDiagnostics>,
    pub nf_is_normal_form: bool,
    pub conjugacy_slope: Option<f64>,
    pub conjugacy_passed: Option<bool>,
    pub max_drift: f64,
    /// `ε^{3/2}`.
    pub drift_bound: f64,
    pub drift_ok: bool,
    pub max_energy_error: f64,
    /// `max_t |u(t)|_{ρ/2} / ε`.
    pub strip_ratio: f64,
    pub trajectory: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub constants: NrConstants,
    pub calibrated: bool,
    pub nonres_checked: u64,
    pub nonres_violations: u64,
    pub nonres_complete: bool,
    #[serde(with = "crate::error::inf_as_null")]
    pub min_divisor: f64,
    pub runs: Vec<EpsilonRun>,
    /// Fitted exponent of max drift against `ε`, when at least two runs.
    pub drift_exponent: Option<f64>,
    pub criteria: Vec<Criterion>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.criteria.iter().all(|c| c.passed)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Schema { context: format!("stage {name}"), reason: e.to_string() })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes `pot.json`, `nonres.json`, `gaps.csv`,
/// `nf_eps{i}.json`, `traj_eps{i}.csv` and `summary.json` to the output
/// directory. Amplitude runs are independent and execute in parallel.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let lattice = Arc::new(Lattice::new(cfg.d, cfg.k)?);
    let spec = cfg.nonlinearity.resolve()?;

    let pot = stage("sample", Potential::sample(cfg.m, cfg.r_scale, Arc::clone(&lattice), cfg.seed))?;
    write_json(&out.join("pot.json"), &pot.to_json())?;
    let freqs: Frequencies<f64> = pot.frequencies();

    let scan = ScanOptions::new(cfg.r_max).zero_momentum(cfg.zero_momentum_only);
    let (constants, calibrated) = match &cfg.constants {
        ConstantsConfig::Fixed(c) => (*c, false),
        ConstantsConfig::Calibrate(_) => {
            let nu = nonres::default_nu(cfg.m, cfg.d);
            let cal = stage(
                "calibrate",
                nonres::calibrate_c0(&freqs, cfg.gamma, nu, &nonres::default_c0_grid(), &scan),
            )?;
            (cal.constants, true)
        }
    };
    let report: NonResReport = stage("certify", nonres::check_nonres(&freqs, constants, &scan))?;
    write_json(&out.join("nonres.json"), &serde_json::to_value(&report)?)?;
    let gaps_path = out.join("gaps.csv");
    let gaps = fs::File::create(&gaps_path).map_err(|e| Error::io(&gaps_path, e))?;
    report.write_gap_csv(gaps)?;
    let min_divisor = report.per_length.iter().map(|s| s.min_divisor).fold(f64::INFINITY, f64::min);

    let runs: Vec<EpsilonRun> = cfg
        .epsilons
        .par_iter()
        .enumerate()
        .map(|(i, &eps)| run_epsilon(cfg, &lattice, &freqs, &spec, i, eps))
        .collect::<Result<_>>()?;

    let drift_exponent = if runs.len() >= 2 {
        let x: Vec<f64> = runs.iter().map(|r| r.epsilon.ln()).collect();
        let y: Vec<f64> = runs.iter().map(|r| r.max_drift.max(f64::MIN_POSITIVE).ln()).collect();
        normal_form::fit_slope(&x, &y)
    } else {
        None
    };

    let mut criteria = vec![Criterion {
        name: "nonresonance".into(),
        passed: report.passed() && report.complete,
        detail: format!("{} violations in {} tuples", report.violation_count, report.checked_count),
    }];
    for r in &runs {
        criteria.push(Criterion {
            name: format!("drift eps={:e}", r.epsilon),
            passed: r.drift_ok,
            detail: format!("max drift {:e} vs eps^1.5 = {:e}", r.max_drift, r.drift_bound),
        });
        if let Some(ok) = r.conjugacy_passed {
            criteria.push(Criterion {
                name: format!("conjugacy eps={:e}", r.epsilon),
                passed: ok,
                detail: format!("slope {:?} vs r+1 = {}", r.conjugacy_slope, r.r_used + 1),
            });
        }
    }
    if let Some(k) = drift_exponent {
        criteria.push(Criterion {
            name: "drift exponent".into(),
            passed: k >= 1.3,
            detail: format!("fitted exponent {k:.4}, required >= 1.3"),
        });
    }

    let summary = Summary {
        config: cfg.clone(),
        constants,
        calibrated,
        nonres_checked: report.checked_count,
        nonres_violations: report.violation_count,
        nonres_complete: report.complete,
        min_divisor,
        runs,
        drift_exponent,
        criteria,
    };
    write_json(&out.join("summary.json"), &serde_json::to_value(&summary)?)?;
    Ok(summary)
}

fn run_epsilon(
    cfg: &ExperimentConfig,
    lattice: &Arc<Lattice>,
    freqs: &Frequencies<f64>,
    spec: &SeriesSpec,
    i: usize,
    eps: f64,
) -> Result<EpsilonRun> {
    let (n, r) = normal_form::choose_parameters(eps, cfg.beta)?;
    let r_used = r.min(cfg.max_degree).max(3);
    let p = stage("expand", expand::<f64>(spec, Arc::clone(lattice), r_used))?;
    let nf = stage("normal-form", normal_form::build(&p, freqs, n as f64, r_used, BuildOptions::default()))?;
    write_json(&cfg.output_dir.join(format!("nf_eps{i}.json")), &nf.to_json())?;
    let (conjugacy_slope, conjugacy_passed) = if cfg.amplitudes.len() >= 2 {
        let opts = normal_form::ConjugacyOptions { seed: derive_seed(cfg.seed, i as u64), ..Default::default() };
        let rep = stage("conjugacy", normal_form::verify_conjugacy(&p, &nf, freqs, &cfg.amplitudes, opts))?;
        (rep.slope, Some(rep.passed))
    } else {
        (None, None)
    };

    let z0 = initial_data(Arc::clone(lattice), eps, cfg.rho, derive_seed(cfg.seed, 1000 + i as u64))?;
    let mut stepper = StrangStepper::new(freqs, spec)?;
    let opts = SimulateOptions {
        t_end: cfg.t_end,
        h: cfg.h,
        cadence: cfg.cadence,
        observables: ObservableConfig { rho: cfg.rho, n: n as f64, strip_mu: Some(cfg.rho / 2.0) },
        lean: true,
    };
    let traj = stage("simulate", simulate(&mut stepper, &z0, &opts))?;
    let name = format!("traj_eps{i}.csv");
    let path = cfg.output_dir.join(&name);
    let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    traj.write_csv(std::io::BufWriter::new(file))?;
    let max_drift = traj.max_drift();
    let drift_bound = eps.powf(1.5);
    Ok(EpsilonRun {
        epsilon: eps,
        n,
        r,
        r_used,
        nf_is_normal_form: nf.is_normal_form(),
        nf_diagnostics: nf.diagnostics,
        conjugacy_slope,
        conjugacy_passed,
        max_drift,
        drift_bound,
        drift_ok: max_drift <= drift_bound,
        max_energy_error: traj.max_energy_error(),
        strip_ratio: traj.strip.iter().fold(0.0f64, |a, &b| a.max(b)) / eps,
        trajectory: name,
    })
}

/// One row of the merged report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub source: String,
    pub epsilon: f64,
    pub max_drift: f64,
    pub drift_bound: f64,
    pub drift_ok: bool,
    pub strip_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Drift-vs-ε exponent over all rows, when at least two distinct `ε`.
    pub drift_exponent: Option<f64>,
    pub all_passed: bool,
}

impl Report {
    /// `source,epsilon,max_drift,drift_bound,drift_ok,strip_ratio,drift_exponent`;
    /// the exponent repeats on every row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["source", "epsilon", "max_drift", "drift_bound", "drift_ok", "strip_ratio", "drift_exponent"])?;
        let k = self.drift_exponent.map_or(String::new(), |k| format!("{k}"));
        for r in &self.rows {
            out.write_record([
                r.source.clone(),
                format!("{:e}", r.epsilon),
                format!("{:e}", r.max_drift),
                format!("{:e}", r.drift_bound),
                r.drift_ok.to_string(),
                format!("{}", r.strip_ratio),
                k.clone(),
            ])?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Merges summaries written by [`run_pipeline`].
pub fn report(paths: &[PathBuf]) -> Result<Report> {
    let mut rows = Vec::new();
    let mut all_passed = true;
    for path in paths {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let summary: Summary = serde_json::from_str(&text)
            .map_err(|e| Error::Schema { context: path.display().to_string(), reason: e.to_string() })?;
        all_passed &= summary.all_passed();
        for r in summary.runs {
            rows.push(ReportRow {
                source: path.display().to_string(),
                epsilon: r.epsilon,
                max_drift: r.max_drift,
                drift_bound: r.drift_bound,
                drift_ok: r.drift_ok,
                strip_ratio: r.strip_ratio,
            });
        }
    }
    let mut distinct: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let drift_exponent = if distinct.len() >= 2 {
        let x: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.max_drift.max(f64::MIN_POSITIVE).ln()).collect();
        normal_form::fit_slope(&x, &y)
    } else {
        None
    };
    Ok(Report { rows, drift_exponent, all_passed })
}
