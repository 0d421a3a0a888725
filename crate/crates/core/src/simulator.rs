//! Time integration of the truncated NLS system and of polynomial
//! Hamiltonians, plus the stability observables.
//!
//! The NLS integrator is a Strang splitting on the collocation grid with
//! `2K+1` points per axis. That grid is in bijection with the lattice box, so
//! the nonlinear substep acts pointwise on `u(x)` and the discrete energy
//! `Σ ω_a |ξ_a|² + M^{-d} Σ_x g(u(x), ū(x))` is the Hamiltonian of the scheme.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequencies::Frequencies;
use crate::lattice::{Index, Lattice, Sign};
use crate::nonlinearity::SeriesSpec;
use crate::polynomial::{CompiledPoly, Polynomial};
use crate::scalar::{cast, Real};
use crate::spectral::GridTransform;
use crate::state::State;

type C64 = Complex<f64>;

/// Sample points per axis for strip sup norms.
pub const STRIP_SAMPLES: usize = 256;

/// Nonlinear substep used by [`StrangStepper`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact rotation `u ← u e^{−ihG′(|u|²)}` for `g = G(|u|²)`.
    StrangGauge,
    /// One pointwise RK4 step of `u̇ = −i ∂g/∂ū`.
    StrangRk4,
}

/// Split-step integrator for `ξ̇_a = −iω_a ξ_a − i ∂P/∂η_a`.
pub struct StrangStepper {
    lattice: Arc<Lattice>,
    omega: Vec<f64>,
    spec: SeriesSpec,
    scheme: Scheme,
    transform: GridTransform<f64>,
    grid: Vec<C64>,
    /// `(h, e^{−iω_a h/2})` for the last step size used.
    half_phase: Option<(f64, Vec<C64>)>,
}

impl StrangStepper {
    pub fn new(freqs: &Frequencies<f64>, spec: &SeriesSpec) -> Result<Self> {
        spec.validate()?;
        let lattice = Arc::clone(freqs.lattice());
        let transform = GridTransform::new(&lattice, lattice.side())?;
        let grid = vec![C64::default(); transform.len()];
        let scheme = if spec.is_gauge_invariant() { Scheme::StrangGauge } else { Scheme::StrangRk4 };
        Ok(Self {
            lattice,
            omega: freqs.values().to_vec(),
            spec: spec.clone(),
            scheme,
            transform,
            grid,
            half_phase: None,
        })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn linear_half(&mut self, xi: &mut [C64], h: f64) {
        if self.half_phase.as_ref().is_none_or(|(hh, _)| *hh != h) {
            let phases = self.omega.iter().map(|w| C64::from_polar(1.0, -w * h / 2.0)).collect();
            self.half_phase = Some((h, phases));
        }
        let (_, phases) = self.half_phase.as_ref().expect("just set");
        for (x, p) in xi.iter_mut().zip(phases) {
            *x *= p;
        }
    }

    fn to_grid(&mut self, xi: &[C64]) {
        self.grid.iter_mut().for_each(|g| *g = C64::default());
        for (s, &x) in xi.iter().enumerate() {
            self.grid[self.transform.bin(s as u32)] = x;
        }
        self.transform.inverse(&mut self.grid);
    }

    fn from_grid(&mut self, xi: &mut [C64]) {
        self.transform.forward(&mut self.grid);
        let norm = 1.0 / self.grid.len() as f64;
        for (s, x) in xi.iter_mut().enumerate() {
            *x = self.grid[self.transform.bin(s as u32)] * norm;
        }
    }

    fn nonlinear(&mut self, xi: &mut [C64], h: f64) {
        if self.spec.terms.is_empty() {
            return;
        }
        self.to_grid(xi);
        match self.scheme {
            Scheme::StrangGauge => {
                for u in self.grid.iter_mut() {
                    let g = self.spec.gauge_derivative(u.norm_sqr());
                    *u *= C64::from_polar(1.0, -h * g);
                }
            }
            Scheme::StrangRk4 => {
                let spec = &self.spec;
                let f = |u: C64| -> C64 { C64::new(0.0, -1.0) * spec.d_v2(u, u.conj()) };
                for u in self.grid.iter_mut() {
                    let k1 = f(*u);
                    let k2 = f(*u + k1 * (h / 2.0));
                    let k3 = f(*u + k2 * (h / 2.0));
                    let k4 = f(*u + k3 * h);
                    *u += (k1 + (k2 + k3) * 2.0 + k4) * (h / 6.0);
                }
            }
        }
        self.from_grid(xi);
    }

    /// One Strang step of size `h` (negative `h` runs backwards) on dense `ξ`.
    pub fn step_dense(&mut self, xi: &mut [C64], h: f64) {
        self.linear_half(xi, h);
        self.nonlinear(xi, h);
        self.linear_half(xi, h);
    }

    pub fn step(&mut self, z: &State<f64>, h: f64) -> Result<State<f64>> {
        self.lattice.check_same(z.lattice())?;
        let mut xi = z.xi_dense();
        self.step_dense(&mut xi, h);
        if xi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite("state after Strang step"));
        }
        Ok(State::from_xi_dense(Arc::clone(&self.lattice), &xi))
    }

    /// `Σ ω_a |ξ_a|² + M^{-d} Σ_x g(u, ū)`.
    pub fn energy(&mut self, xi: &[C64]) -> f64 {
        let quad: f64 = xi.iter().zip(&self.omega).map(|(x, w)| w * x.norm_sqr()).sum();
        if self.spec.terms.is_empty() {
            return quad;
        }
        self.to_grid(xi);
        let sum: f64 = self.grid.iter().map(|u| self.spec.eval(*u, u.conj()).re).sum();
        quad + sum / self.grid.len() as f64
    }
}

/// One observable record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRow {
    pub t: f64,
    #[serde(rename = "H")]
    pub h: f64,
    /// `Σ_a I_a`.
    pub sum_i: f64,
    /// `‖z‖_ρ` over both `ξ` and `η`.
    pub norm_rho: f64,
    /// `Σ_{|j| > N} e^{ρ|j|} |z_j|`.
    pub tail: f64,
    /// `Σ_k e^{ρ|k|} ||ξ_k(t)| − |ξ_k(0)||`.
    pub drift: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableConfig {
    pub rho: f64,
    /// Tail cutoff `N`.
    pub n: f64,
    /// Also record `sup_{|Im x| ≤ μ} |u|` when set.
    pub strip_mu: Option<f64>,
}

/// Observables of dense `ξ` relative to reference moduli `|ξ(0)|`.
pub fn observe_dense(lattice: &Lattice, xi: &[C64], xi0_abs: &[f64], cfg: &ObservableConfig, t: f64, energy: f64) -> ObservableRow {
    let mut sum_i = 0.0;
    let mut norm = 0.0;
    let mut tail = 0.0;
    let mut drift = 0.0;
    for (s, x) in xi.iter().enumerate() {
        let m = lattice.modulus(s as u32);
        let w = (cfg.rho * m).exp();
        let a = x.norm();
        sum_i += a * a;
        norm += 2.0 * w * a;
        if m > cfg.n {
            tail += 2.0 * w * a;
        }
        drift += w * (a - xi0_abs[s]).abs();
    }
    ObservableRow { t, h: energy, sum_i, norm_rho: norm, tail, drift }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub rows: Vec<ObservableRow>,
    /// Recorded states; empty in lean mode.
    pub snapshots: Vec<State<f64>>,
    /// Strip sup norms, when requested.
    pub strip: Vec<f64>,
    pub h: f64,
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn max_drift(&self) -> f64 {
        self.rows.iter().map(|r| r.drift).fold(0.0, f64::max)
    }

    /// Largest `|H(t) − H(0)|`.
    pub fn max_energy_error(&self) -> f64 {
        let h0 = self.rows.first().map_or(0.0, |r| r.h);
        self.rows.iter().map(|r| (r.h - h0).abs()).fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_observables_csv(w, &self.rows)
    }
}

/// CSV with columns `t,H,sum_I,norm_rho,tail,drift`.
pub fn write_observables_csv<W: std::io::Write>(w: W, rows: &[ObservableRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["t", "H", "sum_I", "norm_rho", "tail", "drift"])?;
    for r in rows {
        out.write_record([r.t, r.h, r.sum_i, r.norm_rho, r.tail, r.drift].map(|x| format!("{x:e}")))?;
    }
    out.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_observables_csv<R: std::io::Read>(r: R) -> Result<Vec<ObservableRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let expected = ["t", "H", "sum_I", "norm_rho", "tail", "drift"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::Schema {
            context: "trajectory csv".into(),
            reason: format!("expected columns {expected:?}, got {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let v = rec
            .iter()
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| Error::Schema { context: "trajectory csv".into(), reason: format!("{f}: {e}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ObservableRow { t: v[0], h: v[1], sum_i: v[2], norm_rho: v[3], tail: v[4], drift: v[5] });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulateOptions {
    pub t_end: f64,
    pub h: f64,
    /// Record every `cadence` steps (and at the final time).
    pub cadence: usize,
    pub observables: ObservableConfig,
    /// Keep only observables, not states.
    pub lean: bool,
}

/// Integrates with [`StrangStepper`] from `t = 0` to `t_end`. Aborts once
/// `‖z‖_ρ` exceeds ten times its initial value.
pub fn simulate(stepper: &mut StrangStepper, z0: &State<f64>, opts: &SimulateOptions) -> Result<Trajectory> {
    if !(opts.h > 0.0 && opts.h.is_finite()) {
        return Err(Error::param("h", "must be positive"));
    }
    if !(opts.t_end >= 0.0 && opts.t_end.is_finite()) {
        return Err(Error::param("T", "must be non-negative"));
    }
    if opts.cadence == 0 {
        return Err(Error::param("cadence", "must be positive"));
    }
    if !z0.is_real(1e-12) {
        return Err(Error::NotReal("initial state".into()));
    }
    let lattice = Arc::clone(stepper.lattice());
    lattice.check_same(z0.lattice())?;
    let steps = (opts.t_end / opts.h).round() as u64;
    let mut xi = z0.xi_dense();
    let xi0_abs: Vec<f64> = xi.iter().map(|c| c.norm()).collect();
    let cfg = opts.observables;
    let mut traj = Trajectory {
        times: Vec::new(),
        rows: Vec::new(),
        snapshots: Vec::new(),
        strip: Vec::new(),
        h: opts.h,
        scheme: stepper.scheme(),
    };
    let record = |stepper: &mut StrangStepper, xi: &[C64], t: f64, traj: &mut Trajectory| {
        let e = stepper.energy(xi);
        traj.times.push(t);
        traj.rows.push(observe_dense(&lattice, xi, &xi0_abs, &cfg, t, e));
        if !opts.lean || cfg.strip_mu.is_some() {
            let z = State::from_xi_dense(Arc::clone(&lattice), xi);
            if let Some(mu) = cfg.strip_mu {
                traj.strip.push(z.strip_sup(mu, STRIP_SAMPLES));
            }
            if !opts.lean {
                traj.snapshots.push(z);
            }
        }
    };
    record(stepper, &xi, 0.0, &mut traj);
    let start_norm = traj.rows[0].norm_rho;
    for n in 1..=steps {
        stepper.step_dense(&mut xi, opts.h);
        let at_record = n % opts.cadence as u64 == 0 || n == steps;
        if at_record {
            let t = n as f64 * opts.h;
            record(stepper, &xi, t, &mut traj);
            let now = traj.rows.last().expect("just recorded").norm_rho;
            if !now.is_finite() {
                return Err(Error::Divergence { time: t, reason: "non-finite state".into() });
            }
            if start_norm > 0.0 && now > 10.0 * start_norm {
                return Err(Error::Divergence { time: t, reason: "norm exceeded 10x its initial value".into() });
            }
        }
    }
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyTrajectory<S: Real> {
    pub times: Vec<S>,
    pub states: Vec<State<S>>,
}

/// RK4 trajectory of `ż = X_H(z)` with `H = H₀ + Σ terms` (`H₀` omitted when
/// `freqs` is `None`). Aborts once the ℓ¹ norm exceeds ten times its initial
/// value.
pub fn flow_poly_hamiltonian<S: Real>(
    freqs: Option<&Frequencies<S>>,
    terms: &[Polynomial<S>],
    z0: &State<S>,
    t_end: S,
    h: S,
    cadence: usize,
) -> Result<PolyTrajectory<S>> {
    if !(h > S::zero()) || cadence == 0 {
        return Err(Error::param("h", "step and cadence must be positive"));
    }
    let lattice = Arc::clone(z0.lattice());
    let compiled: Vec<CompiledPoly<S>> = terms.iter().filter(|p| !p.is_empty()).map(Polynomial::compile).collect();
    let field = |z: &[Complex<S>], out: &mut [Complex<S>]| {
        out.iter_mut().for_each(|o| *o = Complex::default());
        if let Some(f) = freqs {
            f.add_h0_field(z, S::one(), out);
        }
        for c in &compiled {
            c.add_vector_field(z, S::one(), out);
        }
    };
    let l1 = |z: &[Complex<S>]| z.iter().fold(S::zero(), |a, c| a + c.norm());
    let steps = (t_end / h).round().to_u64().unwrap_or(0);
    let mut z = z0.to_dense();
    let dim = z.len();
    let start = l1(&z);
    let mut k = [vec![Complex::default(); dim], vec![Complex::default(); dim], vec![Complex::default(); dim], vec![Complex::default(); dim]];
    let mut tmp = vec![Complex::default(); dim];
    let half = cast::<S>(0.5);
    let two = cast::<S>(2.0);
    let sixth = cast::<S>(1.0 / 6.0);
    let mut out = PolyTrajectory { times: vec![S::zero()], states: vec![z0.clone()] };
    for n in 1..=steps {
        field(&z, &mut k[0]);
        for i in 0..dim {
            tmp[i] = z[i] + k[0][i] * (h * half);
        }
        field(&tmp, &mut k[1]);
        for i in 0..dim {
            tmp[i] = z[i] + k[1][i] * (h * half);
        }
        field(&tmp, &mut k[2]);
        for i in 0..dim {
            tmp[i] = z[i] + k[2][i] * h;
        }
        field(&tmp, &mut k[3]);
        for i in 0..dim {
            z[i] = z[i] + (k[0][i] + (k[1][i] + k[2][i]) * two + k[3][i]) * (h * sixth);
        }
        let t = cast::<S>(n as f64) * h;
        let now = l1(&z);
        if !now.is_finite() || (start > S::zero() && now > start * cast::<S>(10.0)) {
            return Err(Error::Divergence { time: t.to_f64().unwrap_or(f64::NAN), reason: "polynomial flow blew up".into() });
        }
        if n % cadence as u64 == 0 || n == steps {
            out.times.push(t);
            out.states.push(State::from_dense(Arc::clone(&lattice), &z));
        }
    }
    Ok(out)
}

/// Margins of the two integral inequalities along one trajectory of
/// `H₀ + Z`, `Z` homogeneous of degree `k`:
///
/// `R(t) ≤ R(0) + 4k³‖Z‖ ∫₀ᵗ R² ‖z‖_ρ^{k−3}` and
/// `‖z(t)‖_ρ ≤ ‖z(0)‖_ρ + 4k³‖Z‖ ∫₀ᵗ R² ‖z‖_ρ^{k−3}`,
///
/// with `R = R^N_ρ` and the integral by the trapezoid rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcruxMargins {
    /// `max_t LHS / RHS` for the tail inequality.
    pub tail_ratio: f64,
    /// `max_t LHS / RHS` for the norm inequality.
    pub norm_ratio: f64,
    /// Largest absolute excess `LHS − RHS` for either inequality.
    pub worst_excess: f64,
}

impl PcruxMargins {
    /// Both inequalities hold with the right side inflated by `1 + slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.tail_ratio <= 1.0 + slack && self.norm_ratio <= 1.0 + slack
    }
}

pub fn pcrux_margins(traj: &PolyTrajectory<f64>, k: usize, z_norm: f64, rho: f64, n: f64) -> Result<PcruxMargins> {
    if k < 3 {
        return Err(Error::param("k", "degree must be at least 3"));
    }
    let tails = traj.states.iter().map(|s| s.tail_norm(rho, n)).collect::<Result<Vec<_>>>()?;
    let norms = traj.states.iter().map(|s| s.norm_rho(rho)).collect::<Result<Vec<_>>>()?;
    let c = 4.0 * (k as f64).powi(3) * z_norm;
    let integrand: Vec<f64> = tails.iter().zip(&norms).map(|(r, z)| r * r * z.powi(k as i32 - 3)).collect();
    let mut integral = 0.0;
    let mut m = PcruxMargins { tail_ratio: 0.0, norm_ratio: 0.0, worst_excess: f64::NEG_INFINITY };
    for i in 0..traj.states.len() {
        if i > 0 {
            integral += 0.5 * (traj.times[i] - traj.times[i - 1]) * (integrand[i] + integrand[i - 1]);
        }
        let rhs_tail = tails[0] + c * integral;
        let rhs_norm = norms[0] + c * integral;
        let ratio = |lhs: f64, rhs: f64| if rhs > 0.0 { lhs / rhs } else if lhs > 0.0 { f64::INFINITY } else { 0.0 };
        m.tail_ratio = m.tail_ratio.max(ratio(tails[i], rhs_tail));
        m.norm_ratio = m.norm_ratio.max(ratio(norms[i], rhs_norm));
        m.worst_excess = m.worst_excess.max(tails[i] - rhs_tail).max(norms[i] - rhs_norm);
    }
    Ok(m)
}

/// Actions `I_a = ξ_a η_a` in site order.
pub fn actions<S: Real>(z: &State<S>) -> Vec<S> {
    z.lattice()
        .sites()
        .map(|s| (z.get(Index::new(s, Sign::Plus)) * z.get(Index::new(s, Sign::Minus))).re)
        .collect()
}
