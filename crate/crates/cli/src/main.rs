use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nlsnf::experiment::{self, ExperimentConfig};
use nlsnf::nonlinearity::expand;
use nlsnf::nonres::{self, NrConstants, ScanOptions};
use nlsnf::normal_form::{self, BuildOptions, ConjugacyOptions, NormalFormResult};
use nlsnf::simulator::{self, ObservableConfig, SimulateOptions, StrangStepper};
use nlsnf::{Frequencies, Lattice, Potential, SeriesSpec};

#[derive(Parser)]
#[command(name = "nlsnf", version, about = "Birkhoff normal forms and stability experiments for NLS with a convolution potential")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a potential and write it as JSON.
    SamplePotential {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long = "K")]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the non-resonance bound on every tuple up to `--r-max`.
    CheckNonres {
        #[arg(long)]
        pot: PathBuf,
        #[command(flatten)]
        constants: ConstantArgs,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-length gap table.
        #[arg(long)]
        gaps: Option<PathBuf>,
    },
    /// Monte Carlo estimate of the fraction of potentials violating the bound.
    Measure {
        #[arg(long, default_value_t = 1)]
        d: usize,
        #[arg(long = "K")]
        k: usize,
        #[arg(long, default_value_t = 2.0)]
        m: f64,
        #[arg(long = "R", default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Potential used to calibrate `c₀` (at `γ = 1`) when constants are not given.
        #[arg(long)]
        calibration_pot: Option<PathBuf>,
        #[command(flatten)]
        constants: ConstantArgs,
        #[command(flatten)]
        scan: ScanArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the normal form up to degree `r`.
    BuildNf {
        #[arg(long)]
        pot: PathBuf,
        #[arg(long, default_value = "power:p=1,a=1")]
        nonlinearity: String,
        /// Cutoff `N`; with `--eps`, chosen from `ε` and `β`.
        #[arg(long = "N")]
        n: Option<f64>,
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        #[arg(long, default_value_t = 1_000_000)]
        composition_budget: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Measure the conjugacy residual scaling of a stored normal form.
    VerifyNf {
        #[arg(long)]
        pot: PathBuf,
        #[arg(long, default_value = "power:p=1,a=1")]
        nonlinearity: String,
        #[arg(long)]
        nf: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-2,5e-3,2.5e-3")]
        amplitudes: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate the truncated equation and write the observables.
    Simulate {
        #[arg(long)]
        pot: PathBuf,
        #[arg(long, default_value = "power:p=1,a=1")]
        nonlinearity: String,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long = "T")]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        h: f64,
        #[arg(long, default_value_t = 1000)]
        cadence: usize,
        /// Tail cutoff; defaults to `N(ε)` with `β = 0.5`.
        #[arg(long = "N")]
        n: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// End-to-end experiments.
    #[command(subcommand)]
    Experiment(ExperimentCommand),
    /// Merge summaries into a table.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Sample, certify, build normal forms, integrate for each `ε`, summarize.
    ActionDrift {
        /// JSON config; flags below override its fields.
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        eps_list: Option<Vec<f64>>,
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Drift table written alongside the summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConstantArgs {
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Defaults to `2(m + d + 3)`.
    #[arg(long)]
    nu: Option<f64>,
    /// Calibrated when absent.
    #[arg(long)]
    c0: Option<f64>,
}

#[derive(Args)]
struct ScanArgs {
    #[arg(long, default_value_t = 4)]
    r_max: usize,
    /// Scan every tuple, not only zero-momentum ones.
    #[arg(long)]
    all_tuples: bool,
    #[arg(long)]
    budget: Option<u64>,
}

impl ScanArgs {
    fn options(&self) -> ScanOptions {
        let opts = ScanOptions::new(self.r_max).zero_momentum(!self.all_tuples);
        match self.budget {
            Some(b) => opts.budget(b),
            None => opts,
        }
    }
}

/// Outcome of a command that checks something.
enum Verdict {
    Pass,
    Fail,
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn load_potential(path: &Path) -> Result<Potential> {
    Ok(Potential::from_json(&read_json(path)?).with_context(|| format!("loading potential {}", path.display()))?)
}

fn resolve_constants(args: &ConstantArgs, m: f64, d: usize, freqs: &Frequencies<f64>, scan: &ScanOptions) -> Result<NrConstants> {
    let nu = args.nu.unwrap_or_else(|| nonres::default_nu(m, d));
    Ok(match args.c0 {
        Some(c0) => NrConstants::new(args.gamma, nu, c0)?,
        None => nonres::calibrate_c0(freqs, args.gamma, nu, &nonres::default_c0_grid(), scan)?.constants,
    })
}

fn run(cli: Cli) -> Result<Verdict> {
    match cli.command {
        Command::SamplePotential { d, k, m, r, seed, out } => {
            let pot = Potential::sample(m, r, Arc::new(Lattice::new(d, k)?), seed)?;
            write_json(&out, &pot.to_json())?;
            Ok(Verdict::Pass)
        }
        Command::CheckNonres { pot, constants, scan, out, gaps } => {
            let pot = load_potential(&pot)?;
            let freqs = pot.frequencies();
            let opts = scan.options();
            let c = resolve_constants(&constants, pot.m, pot.lattice().dim(), &freqs, &opts)?;
            let report = nonres::check_nonres(&freqs, c, &opts)?;
            write_json(&out, &serde_json::to_value(&report)?)?;
            if let Some(path) = gaps {
                report.write_gap_csv(create(&path)?)?;
            }
            eprintln!(
                "checked {} tuples, {} violations{}",
                report.checked_count,
                report.violation_count,
                if report.complete { "" } else { " (budget exhausted)" }
            );
            Ok(if report.passed() && report.complete { Verdict::Pass } else { Verdict::Fail })
        }
        Command::Measure { d, k, m, r, trials, seed, calibration_pot, constants, scan, out } => {
            let lattice = Arc::new(Lattice::new(d, k)?);
            let opts = scan.options();
            let nu = constants.nu.unwrap_or_else(|| nonres::default_nu(m, d));
            let c = match constants.c0 {
                Some(c0) => NrConstants::new(constants.gamma, nu, c0)?,
                None => {
                    let reference = match calibration_pot {
                        Some(path) => load_potential(&path)?,
                        None => Potential::sample(m, r, Arc::clone(&lattice), nlsnf::potential::derive_seed(seed, u64::MAX))?,
                    };
                    let cal = nonres::calibrate_c0(&reference.frequencies(), 1.0, nu, &nonres::default_c0_grid(), &opts)?;
                    NrConstants { gamma: constants.gamma, ..cal.constants }
                }
            };
            let est = nonres::measure_estimate(m, r, lattice, c, &opts, trials, seed)?;
            write_json(&out, &serde_json::json!({ "constants": c, "estimate": est }))?;
            eprintln!(
                "violation fraction {:.4} (stderr {:.4}); 4g^(1/7) = {:.4}, 4g = {:.4e}",
                est.fail_fraction, est.stderr, est.bound_extended, est.bound_basic
            );
            Ok(if est.fail_fraction <= est.bound_extended + 3.0 * est.stderr { Verdict::Pass } else { Verdict::Fail })
        }
        Command::BuildNf { pot, nonlinearity, n, r, eps, beta, composition_budget, out } => {
            let pot = load_potential(&pot)?;
            let spec = SeriesSpec::parse_preset(&nonlinearity)?;
            let (n, r) = match (n, r, eps) {
                (Some(n), Some(r), None) => (n, r),
                (None, None, Some(e)) => {
                    let (n, r) = normal_form::choose_parameters(e, beta)?;
                    (n as f64, r)
                }
                _ => bail!("give either --N and --r, or --eps"),
            };
            let p = expand::<f64>(&spec, Arc::clone(pot.lattice()), r)?;
            let nf = normal_form::build(&p, &pot.frequencies(), n, r, BuildOptions { composition_budget })?;
            write_json(&out, &nf.to_json())?;
            for d in &nf.diagnostics {
                eprintln!("m={} |Q|={:.3e} |chi|={:.3e} |Z|={:.3e}", d.m, d.q_norm, d.chi_norm, d.z_norm);
            }
            Ok(Verdict::Pass)
        }
        Command::VerifyNf { pot, nonlinearity, nf, amplitudes, seed, out } => {
            let pot = load_potential(&pot)?;
            let spec = SeriesSpec::parse_preset(&nonlinearity)?;
            let nf = NormalFormResult::<f64>::from_json(&read_json(&nf)?)?;
            pot.lattice().check_same(&nf.lattice)?;
            let p = expand::<f64>(&spec, Arc::clone(pot.lattice()), nf.r)?;
            let opts = ConjugacyOptions { seed, ..Default::default() };
            let rep = normal_form::verify_conjugacy(&p, &nf, &pot.frequencies(), &amplitudes, opts)?;
            if let Some(path) = out {
                write_json(&path, &serde_json::to_value(&rep)?)?;
            }
            eprintln!("slope {:?}, expected {}", rep.slope, rep.expected);
            Ok(if rep.passed { Verdict::Pass } else { Verdict::Fail })
        }
        Command::Simulate { pot, nonlinearity, eps, rho, t_end, h, cadence, n, seed, out } => {
            let pot = load_potential(&pot)?;
            let spec = SeriesSpec::parse_preset(&nonlinearity)?;
            let n = match n {
                Some(n) => n,
                None => normal_form::choose_parameters(eps, 0.5)?.0 as f64,
            };
            let z0 = experiment::initial_data(Arc::clone(pot.lattice()), eps, rho, seed)?;
            let mut stepper = StrangStepper::new(&pot.frequencies(), &spec)?;
            let opts = SimulateOptions {
                t_end,
                h,
                cadence,
                observables: ObservableConfig { rho, n, strip_mu: None },
                lean: true,
            };
            let traj = simulator::simulate(&mut stepper, &z0, &opts)?;
            traj.write_csv(create(&out)?)?;
            eprintln!("max drift {:.3e}, max energy error {:.3e}", traj.max_drift(), traj.max_energy_error());
            Ok(Verdict::Pass)
        }
        Command::Experiment(ExperimentCommand::ActionDrift { config, eps_list, t_end, h, seed, output_dir, out }) => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(e) = eps_list {
                cfg.epsilons = e;
            }
            if let Some(t) = t_end {
                cfg.t_end = t;
            }
            if let Some(h) = h {
                cfg.h = h;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let summary = experiment::run_pipeline(&cfg)?;
            if let Some(path) = out {
                experiment::report(&[cfg.output_dir.join("summary.json")])?.write_csv(create(&path)?)?;
            }
            for c in &summary.criteria {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(if summary.all_passed() { Verdict::Pass } else { Verdict::Fail })
        }
        Command::Report { summaries, out } => {
            let rep = experiment::report(&summaries)?;
            match out {
                Some(path) => rep.write_csv(create(&path)?)?,
                None => rep.write_csv(std::io::stdout().lock())?,
            }
            Ok(if rep.all_passed { Verdict::Pass } else { Verdict::Fail })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("NLSNF_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: NLSNF_THREADS: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

