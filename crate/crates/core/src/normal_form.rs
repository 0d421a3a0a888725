//! Birkhoff normal form: homological equation, the recursive construction of
//! `χ_m` and `Z_m`, and the time-one Lie transform.
//!
//! Conventions: `{z_j, H₀} = −iΩ(j) z_j`, so the homological equation
//! `{χ, H₀} − Z = Q` is solved by `χ_j = iQ_j/Ω(j)` off the normal form and
//! `Z_j = −Q_j` on it. The Lie transform `Φ_χ¹` is the time-one map of
//! `ż = −X_χ(z)`, along which `d/dt (K∘Φ^t) = {χ, K}∘Φ^t`; with that
//! orientation the degree recursion for `Q_m` uses `ad_χ K = {χ, K}`.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex;
use num_rational::BigRational;
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bernoulli::bernoulli_table;
use crate::error::{Error, Result};
use crate::frequencies::Frequencies;
use crate::lattice::Lattice;
use crate::multi_index::MultiIndex;
use crate::nonres::NrConstants;
use crate::polynomial::{CompiledPoly, Polynomial, DEFAULT_DEGREE_CAP};
use crate::scalar::{cast, f64_to_rational, Real, Scalar};
use crate::state::State;

/// Linear frequencies in the coefficient type of the algebra.
pub trait Spectrum<S: Scalar> {
    fn lattice(&self) -> &Arc<Lattice>;

    fn omega(&self, site: u32) -> S;

    /// `Ω(j) = Σ_k δ_k ω_{a_k}`, zero for resonant `j`.
    fn divisor(&self, j: &MultiIndex) -> Result<S> {
        let n = self.lattice().n_sites();
        let mut acc = S::zero();
        for (site, count) in j.signed_counts() {
            if site as usize >= n {
                return Err(Error::param("multi-index", "site outside the lattice"));
            }
            if count != 0 {
                acc = acc + cast::<S>(count as f64) * self.omega(site);
            }
        }
        Ok(acc)
    }
}

impl<S: Real> Spectrum<S> for Frequencies<S> {
    fn lattice(&self) -> &Arc<Lattice> {
        Frequencies::lattice(self)
    }

    fn omega(&self, site: u32) -> S {
        Frequencies::omega(self, site)
    }

    fn divisor(&self, j: &MultiIndex) -> Result<S> {
        Frequencies::divisor(self, j)
    }
}

/// Frequencies as exact rationals.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactFrequencies {
    lattice: Arc<Lattice>,
    omega: Vec<BigRational>,
}

impl ExactFrequencies {
    pub fn new(lattice: Arc<Lattice>, omega: Vec<BigRational>) -> Result<Self> {
        if omega.len() != lattice.n_sites() {
            return Err(Error::param("omega", "one value per lattice site required"));
        }
        Ok(Self { lattice, omega })
    }

    /// Exact image of double-precision frequencies.
    pub fn from_f64(freqs: &Frequencies<f64>) -> Result<Self> {
        let omega = freqs
            .values()
            .iter()
            .map(|&w| f64_to_rational(w).ok_or(Error::NonFinite("frequency")))
            .collect::<Result<_>>()?;
        Self::new(Arc::clone(freqs.lattice()), omega)
    }
}

impl Spectrum<BigRational> for ExactFrequencies {
    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn omega(&self, site: u32) -> BigRational {
        self.omega[site as usize].clone()
    }
}

/// `H₀ = Σ ω_a ξ_a η_a` as a polynomial.
pub fn h0_polynomial<S: Scalar, F: Spectrum<S>>(freqs: &F) -> Polynomial<S> {
    let lattice = Arc::clone(freqs.lattice());
    let mut p = Polynomial::zero(Arc::clone(&lattice));
    for s in lattice.sites() {
        let j = MultiIndex::new([crate::Index::new(s, crate::Sign::Plus), crate::Index::new(s, crate::Sign::Minus)]);
        p.add_term(j, Complex::new(freqs.omega(s), S::zero())).expect("ξ_a η_a has zero momentum");
    }
    p.prune()
}

fn abs_lossy<S: Scalar>(c: &Complex<S>) -> f64 {
    c.re.to_f64_lossy().hypot(c.im.to_f64_lossy())
}

/// `sup_j |a_j|`, i.e. the norm of a homogeneous polynomial, as `f64`.
pub fn sup_norm<S: Scalar>(p: &Polynomial<S>) -> f64 {
    p.terms().map(|(_, c)| abs_lossy(c)).fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct Homological<S: Scalar> {
    pub chi: Polynomial<S>,
    pub z: Polynomial<S>,
    /// Smallest `|Ω(j)|` divided by; `∞` when `χ = 0`.
    pub min_divisor: f64,
}

/// Solves `{χ, H₀} − Z = Q` for homogeneous zero-momentum `Q`. Resonant
/// monomials and those with `μ(j) > N` go to `Z`, the rest to `χ`.
pub fn solve_homological<S: Scalar, F: Spectrum<S>>(q: &Polynomial<S>, freqs: &F, n: f64) -> Result<Homological<S>> {
    if !q.is_homogeneous() {
        return Err(Error::param("Q", "must be homogeneous"));
    }
    let lattice = Arc::clone(freqs.lattice());
    let cap = q.degree_cap();
    let mut chi = Polynomial::zero(Arc::clone(&lattice)).with_degree_cap(cap);
    let mut z = Polynomial::zero(Arc::clone(&lattice)).with_degree_cap(cap);
    let mut min_divisor = f64::INFINITY;
    for (j, c) in q.terms() {
        if c.re.is_zero() && c.im.is_zero() {
            continue;
        }
        if j.is_resonant() || j.mu(&lattice) > n {
            z.add_term(j.clone(), -c.clone())?;
            continue;
        }
        let omega = freqs.divisor(j)?;
        if omega.is_zero() {
            return Err(Error::VanishingDivisor { multi_index: j.display(&lattice), divisor: 0.0 });
        }
        min_divisor = min_divisor.min(omega.to_f64_lossy().abs());
        // i c / Ω
        let x = Complex::new(-c.im.clone() / omega.clone(), c.re.clone() / omega);
        chi.add_term(j.clone(), x)?;
    }
    Ok(Homological { chi, z, min_divisor })
}

/// `{χ, H₀} − Z − Q`, with `{χ, H₀}` taken monomial by monomial.
pub fn homological_residual<S: Scalar, F: Spectrum<S>>(
    chi: &Polynomial<S>,
    z: &Polynomial<S>,
    q: &Polynomial<S>,
    freqs: &F,
) -> Result<Polynomial<S>> {
    let mut bracket = Polynomial::zero(Arc::clone(freqs.lattice())).with_degree_cap(chi.degree_cap());
    for (j, c) in chi.terms() {
        let omega = freqs.divisor(j)?;
        // −iΩ c
        bracket.add_term(j.clone(), Complex::new(c.im.clone() * omega.clone(), -(c.re.clone() * omega)))?;
    }
    Ok(bracket.sub(z).sub(q))
}

/// Bounds `‖Z‖ ≤ ‖Q‖` and `‖χ‖ ≤ N^{νk} / (γ c₀^k) ‖Q‖` for degree `k`.
pub fn homological_bounds_hold(q_norm: f64, chi_norm: f64, z_norm: f64, k: usize, n: f64, c: &NrConstants) -> bool {
    let k = k as f64;
    let factor = n.max(1.0).powf(c.nu * k) / (c.gamma * c.c0.powf(k));
    z_norm <= q_norm && chi_norm <= factor * q_norm
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegreeDiagnostics {
    pub m: usize,
    pub q_norm: f64,
    pub chi_norm: f64,
    pub z_norm: f64,
    pub chi_terms: usize,
    pub z_terms: usize,
    #[serde(with = "crate::error::inf_as_null")]
    pub min_divisor: f64,
    /// Compositions `(ℓ₁, …, ℓ_{k+1})` visited for this degree.
    pub compositions: u64,
}

#[derive(Clone, Debug)]
pub struct NormalFormResult<S: Scalar> {
    pub lattice: Arc<Lattice>,
    pub n: f64,
    pub r: usize,
    /// `χ_m` at position `m − 3`.
    pub chi: Vec<Polynomial<S>>,
    /// `Z_m` at position `m − 3`.
    pub z: Vec<Polynomial<S>>,
    /// `Q_m` at position `m − 3`.
    pub q: Vec<Polynomial<S>>,
    pub diagnostics: Vec<DegreeDiagnostics>,
}

impl<S: Scalar> NormalFormResult<S> {
    pub fn chi_total(&self) -> Polynomial<S> {
        sum_all(&self.lattice, &self.chi, self.r)
    }

    pub fn z_total(&self) -> Polynomial<S> {
        sum_all(&self.lattice, &self.z, self.r)
    }

    pub fn chi_degree(&self, m: usize) -> Option<&Polynomial<S>> {
        m.checked_sub(3).and_then(|i| self.chi.get(i))
    }

    pub fn z_degree(&self, m: usize) -> Option<&Polynomial<S>> {
        m.checked_sub(3).and_then(|i| self.z.get(i))
    }

    /// Every `Z_m` is a fixed point of the `N`-normal-form split.
    pub fn is_normal_form(&self) -> bool {
        self.z.iter().all(|zm| zm.nform_split(self.n).1.is_empty())
    }

    /// Smallest `C` with `log(‖χ_m‖ + ‖Z_m‖) ≤ m² log(C m N^ν)` for all `m`.
    pub fn growth_constant(&self, nu: f64) -> f64 {
        self.diagnostics
            .iter()
            .filter(|d| d.chi_norm + d.z_norm > 0.0)
            .map(|d| {
                let m = d.m as f64;
                ((d.chi_norm + d.z_norm).ln() / (m * m)).exp() / (m * self.n.max(1.0).powf(nu))
            })
            .fold(0.0, f64::max)
    }
}

fn sum_all<S: Scalar>(lattice: &Arc<Lattice>, parts: &[Polynomial<S>], r: usize) -> Polynomial<S> {
    let init = Polynomial::zero(Arc::clone(lattice)).with_degree_cap(DEFAULT_DEGREE_CAP.max(r));
    parts.iter().fold(init, |acc, p| acc.add(p))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BuildOptions {
    /// Cap on the total number of compositions visited.
    pub composition_budget: u64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { composition_budget: 1_000_000 }
    }
}

/// Calls `f` on every `(ℓ₁, …, ℓ_parts)` with `ℓᵢ ≥ 3` and `Σℓᵢ = total`.
pub fn for_each_composition(total: usize, parts: usize, mut f: impl FnMut(&[usize])) {
    fn go(left: usize, parts: usize, buf: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
        if parts == 1 {
            if left >= 3 {
                buf.push(left);
                f(buf);
                buf.pop();
            }
            return;
        }
        let mut l = 3;
        while l + 3 * (parts - 1) <= left {
            buf.push(l);
            go(left - l, parts - 1, buf, f);
            buf.pop();
            l += 1;
        }
    }
    if parts > 0 {
        go(total, parts, &mut Vec::with_capacity(parts), &mut f);
    }
}

/// Runs the degree recursion for `m = 3, …, r`:
///
/// `Q_m = −P_m + Σ_{k=3}^{m−1} {P_{m+2−k}, χ_k}
///        + Σ_{k=1}^{m−3} (B_k/k!) Σ_{ℓ₁+⋯+ℓ_{k+1} = m+2k, ℓᵢ ≥ 3}
///          ad_{χ_{ℓ₁}} ⋯ ad_{χ_{ℓ_k}} (Z_{ℓ_{k+1}} − P_{ℓ_{k+1}})`,
///
/// then `{χ_m, H₀} − Z_m = Q_m`. `p_list[i]` is `P_{i+3}`; missing degrees
/// are zero.
pub fn build<S: Scalar, F: Spectrum<S>>(
    p_list: &[Polynomial<S>],
    freqs: &F,
    n: f64,
    r: usize,
    opts: BuildOptions,
) -> Result<NormalFormResult<S>> {
    if r < 3 {
        return Err(Error::param("r", "must be at least 3"));
    }
    if !(n >= 0.0) {
        return Err(Error::param("N", "must be non-negative"));
    }
    let lattice = Arc::clone(freqs.lattice());
    let cap = DEFAULT_DEGREE_CAP.max(r);
    let zero = || Polynomial::<S>::zero(Arc::clone(&lattice)).with_degree_cap(cap);
    let mut p: Vec<Polynomial<S>> = Vec::with_capacity(r - 2);
    for m in 3..=r {
        let pm = match p_list.get(m - 3) {
            Some(pm) => {
                lattice.check_same(pm.lattice())?;
                if pm.terms().any(|(j, _)| j.len() != m) {
                    return Err(Error::param("P", format!("entry for degree {m} is not homogeneous of that degree")));
                }
                let mut lifted = zero();
                for (j, c) in pm.terms() {
                    lifted.add_term(j.clone(), c.clone())?;
                }
                lifted
            }
            None => zero(),
        };
        p.push(pm);
    }
    if p_list.len() > r - 2 && p_list[r - 2..].iter().any(|x| !x.is_zero()) {
        return Err(Error::param("P", "terms above degree r are not used"));
    }

    let bernoulli = bernoulli_table(r.saturating_sub(3));
    let mut fact = BigRational::one();
    let mut b_over_fact: Vec<Complex<S>> = Vec::with_capacity(bernoulli.len());
    for (k, b) in bernoulli.iter().enumerate() {
        if k > 0 {
            fact *= BigRational::from_integer(k.into());
        }
        b_over_fact.push(Complex::new(S::from_rational(&(b / &fact)), S::zero()));
    }

    let mut chi: Vec<Polynomial<S>> = Vec::with_capacity(r - 2);
    let mut z: Vec<Polynomial<S>> = Vec::with_capacity(r - 2);
    let mut qs: Vec<Polynomial<S>> = Vec::with_capacity(r - 2);
    let mut diagnostics = Vec::with_capacity(r - 2);
    // ad-chains keyed by (ℓᵢ, …, ℓ_{k+1}); independent of m
    let mut chains: HashMap<Vec<usize>, Polynomial<S>> = HashMap::new();
    let mut visited = 0u64;

    for m in 3..=r {
        let mut q = p[m - 3].neg();
        for k in 3..m {
            q = q.add(&p[m + 2 - k - 3].poisson(&chi[k - 3])?);
        }
        let mut compositions = 0u64;
        for k in 1..=m.saturating_sub(3) {
            if k >= 3 && k % 2 == 1 {
                continue;
            }
            let mut tuples = Vec::new();
            for_each_composition(m + 2 * k, k + 1, |l| tuples.push(l.to_vec()));
            compositions += tuples.len() as u64;
            visited += tuples.len() as u64;
            if visited > opts.composition_budget {
                return Err(Error::Budget {
                    what: "compositions",
                    needed: visited as u128,
                    budget: opts.composition_budget as u128,
                });
            }
            let mut inner = zero();
            for l in tuples {
                let term = ad_chain(&l, &chi, &z, &p, &mut chains)?;
                inner = inner.add(&term);
            }
            q = q.add(&inner.scale(&b_over_fact[k]));
        }
        let q = q.prune();
        let sol = solve_homological(&q, freqs, n)?;
        diagnostics.push(DegreeDiagnostics {
            m,
            q_norm: sup_norm(&q),
            chi_norm: sup_norm(&sol.chi),
            z_norm: sup_norm(&sol.z),
            chi_terms: sol.chi.len(),
            z_terms: sol.z.len(),
            min_divisor: sol.min_divisor,
            compositions,
        });
        chi.push(sol.chi);
        z.push(sol.z);
        qs.push(q);
    }
    Ok(NormalFormResult { lattice, n, r, chi, z, q: qs, diagnostics })
}

/// `ad_{χ_{ℓ₁}} ⋯ ad_{χ_{ℓ_k}} (Z_{ℓ_{k+1}} − P_{ℓ_{k+1}})`, innermost first.
fn ad_chain<S: Scalar>(
    l: &[usize],
    chi: &[Polynomial<S>],
    z: &[Polynomial<S>],
    p: &[Polynomial<S>],
    memo: &mut HashMap<Vec<usize>, Polynomial<S>>,
) -> Result<Polynomial<S>> {
    if let Some(v) = memo.get(l) {
        return Ok(v.clone());
    }
    let value = if l.len() == 1 {
        z[l[0] - 3].sub(&p[l[0] - 3])
    } else {
        let inner = ad_chain(&l[1..], chi, z, p, memo)?;
        chi[l[0] - 3].poisson(&inner)?
    };
    memo.insert(l.to_vec(), value.clone());
    Ok(value)
}

/// `N = ⌈|ln ε|^{1+β}⌉`, `r = max(3, ⌊|ln ε|^β⌋)`.
pub fn choose_parameters(epsilon: f64, beta: f64) -> Result<(u64, usize)> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::param("epsilon", "must lie in (0, 1)"));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::param("beta", "must lie in (0, 1)"));
    }
    let l = epsilon.ln().abs();
    // guard against 10^{1.5} landing a hair above an integer
    let n = (l.powf(1.0 + beta) * (1.0 - 4.0 * f64::EPSILON)).ceil() as u64;
    let r = (l.powf(beta) * (1.0 + 4.0 * f64::EPSILON)).floor().max(3.0) as usize;
    Ok((n, r))
}

/// Time-one map of `ż = −X_χ(z)` by RK4 with `substeps` steps.
pub fn lie_transform<S: Real>(chi: &[Polynomial<S>], z0: &State<S>, substeps: usize) -> Result<State<S>> {
    let lattice = Arc::clone(z0.lattice());
    let compiled: Vec<CompiledPoly<S>> = chi.iter().filter(|c| !c.is_empty()).map(Polynomial::compile).collect();
    lie_transform_compiled(&compiled, z0, substeps, lattice)
}

pub fn lie_transform_compiled<S: Real>(
    chi: &[CompiledPoly<S>],
    z0: &State<S>,
    substeps: usize,
    lattice: Arc<Lattice>,
) -> Result<State<S>> {
    if substeps == 0 {
        return Err(Error::param("substeps", "must be positive"));
    }
    if chi.is_empty() {
        return Ok(z0.clone());
    }
    let h = cast::<S>(1.0 / substeps as f64);
    let field = |z: &[Complex<S>], out: &mut [Complex<S>]| {
        out.iter_mut().for_each(|o| *o = Complex::default());
        for c in chi {
            c.add_vector_field(z, -S::one(), out);
        }
    };
    let l1 = |z: &[Complex<S>]| z.iter().fold(S::zero(), |a, c| a + c.norm());
    let mut z = z0.to_dense();
    let start = l1(&z);
    let dim = z.len();
    let (mut k1, mut k2, mut k3, mut k4) =
        (vec![Complex::default(); dim], vec![Complex::default(); dim], vec![Complex::default(); dim], vec![Complex::default(); dim]);
    let mut tmp = vec![Complex::default(); dim];
    let half = cast::<S>(0.5);
    let sixth = cast::<S>(1.0 / 6.0);
    for step in 0..substeps {
        field(&z, &mut k1);
        for i in 0..dim {
            tmp[i] = z[i] + k1[i] * (h * half);
        }
        field(&tmp, &mut k2);
        for i in 0..dim {
            tmp[i] = z[i] + k2[i] * (h * half);
        }
        field(&tmp, &mut k3);
        for i in 0..dim {
            tmp[i] = z[i] + k3[i] * h;
        }
        field(&tmp, &mut k4);
        for i in 0..dim {
            z[i] = z[i] + (k1[i] + (k2[i] + k3[i]) * cast::<S>(2.0) + k4[i]) * (h * sixth);
        }
        let now = l1(&z);
        if !now.is_finite() || (start > S::zero() && now > start * cast::<S>(2.0)) {
            return Err(Error::Divergence {
                time: (step + 1) as f64 / substeps as f64,
                reason: "Lie transform norm more than doubled".into(),
            });
        }
    }
    Ok(State::from_dense(lattice, &z))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub r: usize,
    pub amplitudes: Vec<f64>,
    /// Mean `|(H₀+P)∘Φ_χ¹ − H₀ − Z|` over the sample directions.
    pub residuals: Vec<f64>,
    /// Rounding level of the residual evaluation at each amplitude.
    pub noise_floor: Vec<f64>,
    /// Least-squares slope of `log residual` vs `log amplitude`.
    pub slope: Option<f64>,
    pub expected: f64,
    pub tolerance: f64,
    pub indistinguishable_from_zero: bool,
    pub passed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConjugacyOptions {
    pub samples: usize,
    pub seed: u64,
    pub substeps: usize,
    pub tolerance: f64,
}

impl Default for ConjugacyOptions {
    fn default() -> Self {
        ConjugacyOptions { samples: 4, seed: 0, substeps: 32, tolerance: 0.2 }
    }
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Evaluates `(H₀+P)(Φ_χ¹(s ẑ)) − H₀(s ẑ) − Z(s ẑ)` on random real directions
/// `ẑ` with `‖ẑ‖₀ = 1` and fits the scaling exponent in `s`.
pub fn verify_conjugacy(
    p_list: &[Polynomial<f64>],
    result: &NormalFormResult<f64>,
    freqs: &Frequencies<f64>,
    amplitudes: &[f64],
    opts: ConjugacyOptions,
) -> Result<ConjugacyReport> {
    if amplitudes.len() < 2 {
        return Err(Error::param("amplitudes", "need at least two"));
    }
    if amplitudes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::param("amplitudes", "must be positive"));
    }
    let lattice = Arc::clone(&result.lattice);
    let p_total = p_list
        .iter()
        .fold(Polynomial::zero(Arc::clone(&lattice)).with_degree_cap(DEFAULT_DEGREE_CAP.max(result.r)), |a, b| a.add(b))
        .compile();
    let z_total = result.z_total().compile();
    let chi: Vec<CompiledPoly<f64>> = result.chi.iter().filter(|c| !c.is_empty()).map(Polynomial::compile).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let directions: Vec<State<f64>> = (0..opts.samples.max(1))
        .map(|_| State::random(Arc::clone(&lattice), 0.0, 1.0, &mut rng))
        .collect::<Result<_>>()?;
    let omega_max = freqs.values().iter().fold(0.0f64, |a, w| a.max(w.abs())).max(1.0);
    let mut residuals = Vec::with_capacity(amplitudes.len());
    let mut noise_floor = Vec::with_capacity(amplitudes.len());
    for &s in amplitudes {
        let mut total = 0.0;
        for dir in &directions {
            let z = dir.scale(s);
            let phi = lie_transform_compiled(&chi, &z, opts.substeps, Arc::clone(&lattice))?;
            let pd = phi.to_dense();
            let zd = z.to_dense();
            let lhs = freqs.h0(&phi) + p_total.eval(&pd);
            let rhs = freqs.h0(&z) + z_total.eval(&zd);
            total += (lhs - rhs).norm();
        }
        residuals.push(total / directions.len() as f64);
        noise_floor.push(64.0 * f64::EPSILON * omega_max * s * s);
    }
    let above: Vec<(f64, f64)> = amplitudes
        .iter()
        .zip(&residuals)
        .zip(&noise_floor)
        .filter(|((_, r), f)| **r > **f)
        .map(|((s, r), _)| (s.ln(), r.ln()))
        .collect();
    let expected = result.r as f64 + 1.0;
    let indistinguishable = above.len() < 2;
    let slope = if indistinguishable {
        None
    } else {
        let (x, y): (Vec<f64>, Vec<f64>) = above.into_iter().unzip();
        fit_slope(&x, &y)
    };
    let passed = indistinguishable || slope.is_some_and(|k| k >= expected - opts.tolerance);
    Ok(ConjugacyReport {
        r: result.r,
        amplitudes: amplitudes.to_vec(),
        residuals,
        noise_floor,
        slope,
        expected,
        tolerance: opts.tolerance,
        indistinguishable_from_zero: indistinguishable,
        passed,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldBoundRow {
    pub epsilon: f64,
    /// Largest `‖X_Z(z)‖_ρ + ‖X_χ(z)‖_ρ` over sampled `‖z‖_ρ = Mε`.
    pub max_field: f64,
    /// `2ε^{3/2}`.
    pub bound: f64,
    pub ok: bool,
}

/// Checks `‖X_Z(z)‖_ρ + ‖X_χ(z)‖_ρ ≤ 2ε^{3/2}` on random states with
/// `‖z‖_ρ = Mε`. Rows come back sorted by increasing `ε`.
pub fn field_bound_scan(
    result: &NormalFormResult<f64>,
    rho: f64,
    m_factor: f64,
    epsilons: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<FieldBoundRow>> {
    let lattice = Arc::clone(&result.lattice);
    let z_c = result.z_total().compile();
    let chi_c = result.chi_total().compile();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eps: Vec<f64> = epsilons.to_vec();
    eps.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(eps.len());
    for e in eps {
        let mut worst = 0.0f64;
        for _ in 0..samples.max(1) {
            let z = State::random(Arc::clone(&lattice), rho, m_factor * e, &mut rng)?.to_dense();
            let mut xz = vec![Complex::default(); z.len()];
            let mut xc = vec![Complex::default(); z.len()];
            z_c.add_vector_field(&z, 1.0, &mut xz);
            chi_c.add_vector_field(&z, 1.0, &mut xc);
            let nz = State::from_dense(Arc::clone(&lattice), &xz).norm_rho(rho)?;
            let nc = State::from_dense(Arc::clone(&lattice), &xc).norm_rho(rho)?;
            worst = worst.max(nz + nc);
        }
        let bound = 2.0 * e.powf(1.5);
        rows.push(FieldBoundRow { epsilon: e, max_field: worst, bound, ok: worst <= bound });
    }
    Ok(rows)
}

/// Largest tested `ε` such that it and every smaller tested value pass.
pub fn largest_passing_epsilon(rows: &[FieldBoundRow]) -> Option<f64> {
    rows.iter().take_while(|r| r.ok).last().map(|r| r.epsilon)
}

#[derive(Serialize, Deserialize)]
struct ResultDoc {
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "N")]
    n: f64,
    r: usize,
    chi: Vec<serde_json::Value>,
    #[serde(rename = "Z")]
    z: Vec<serde_json::Value>,
    diagnostics: Vec<DegreeDiagnostics>,
}

impl NormalFormResult<f64> {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ResultDoc {
            d: self.lattice.dim(),
            k: self.lattice.radius(),
            n: self.n,
            r: self.r,
            chi: self.chi.iter().map(Polynomial::to_json).collect(),
            z: self.z.iter().map(Polynomial::to_json).collect(),
            diagnostics: self.diagnostics.clone(),
        })
        .expect("normal form serializes")
    }

    /// `Q_m` is not stored; the loaded result carries empty `q`.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let doc: ResultDoc = serde_json::from_value(value.clone())?;
        let lattice = Arc::new(Lattice::new(doc.d, doc.k)?);
        if doc.chi.len() != doc.z.len() || doc.chi.len() + 2 != doc.r {
            return Err(Error::Schema {
                context: "normal form".into(),
                reason: format!("expected {} degrees, got chi {} / Z {}", doc.r.saturating_sub(2), doc.chi.len(), doc.z.len()),
            });
        }
        let load = |v: &serde_json::Value| -> Result<Polynomial<f64>> {
            Ok(Polynomial::from_json(v, Arc::clone(&lattice))?.with_degree_cap(DEFAULT_DEGREE_CAP.max(doc.r)))
        };
        Ok(NormalFormResult {
            lattice: Arc::clone(&lattice),
            n: doc.n,
            r: doc.r,
            chi: doc.chi.iter().map(load).collect::<Result<_>>()?,
            z: doc.z.iter().map(load).collect::<Result<_>>()?,
            q: Vec::new(),
            diagnostics: doc.diagnostics,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Index, Sign};
    use crate::potential::Potential;

    fn lat(d: usize, k: usize) -> Arc<Lattice> {
        Arc::new(Lattice::new(d, k).unwrap())
    }

    fn ix(l: &Lattice, a: i64, d: i64) -> Index {
        l.index(&[a], Sign::from_value(d).unwrap()).unwrap()
    }

    #[test]
    fn quartic_example_division() {
        let l = lat(1, 2);
        let f = Frequencies::<f64>::free(l.clone());
        let j = MultiIndex::new([ix(&l, 1, 1), ix(&l, -1, 1), ix(&l, 0, -1), ix(&l, 0, -1)]);
        let mut q = Polynomial::zero(l.clone());
        q.add_term(j.clone(), Complex::new(1.0, 0.0)).unwrap();
        let sol = solve_homological(&q, &f, 10.0).unwrap();
        assert_eq!(sol.chi.coeff(&j), Complex::new(0.0, 0.5));
        assert!(sol.z.is_empty());
        assert_eq!(sol.min_divisor, 2.0);
        assert!(homological_residual(&sol.chi, &sol.z, &q, &f).unwrap().prune().is_empty());
    }

    #[test]
    fn resonant_q_goes_to_z() {
        let l = lat(1, 2);
        let f = Frequencies::<f64>::free(l.clone());
        let mut q = Polynomial::zero(l.clone());
        q.add_term(MultiIndex::new([ix(&l, 1, 1), ix(&l, 1, -1), ix(&l, 2, 1), ix(&l, 2, -1)]), Complex::new(0.3, 0.0))
            .unwrap();
        let sol = solve_homological(&q, &f, 0.0).unwrap();
        assert!(sol.chi.is_empty());
        assert_eq!(sol.z, q.neg());
    }

    #[test]
    fn high_mu_goes_to_z() {
        let l = lat(1, 4);
        let f = Frequencies::<f64>::free(l.clone());
        let mut q = Polynomial::zero(l.clone());
        // μ = 2 > N = 1
        let j = MultiIndex::new([ix(&l, 2, 1), ix(&l, 2, 1), ix(&l, 4, -1)]);
        q.add_term(j.clone(), Complex::new(1.0, 0.0)).unwrap();
        let sol = solve_homological(&q, &f, 1.0).unwrap();
        assert_eq!(sol.z.coeff(&j), Complex::new(-1.0, 0.0));
        let sol = solve_homological(&q, &f, 2.0).unwrap();
        assert!(sol.z.is_empty());
    }

    #[test]
    fn vanishing_divisor_is_reported() {
        let l = lat(1, 2);
        let f = Frequencies::<f64>::free(l.clone());
        let mut q = Polynomial::zero(l.clone());
        // ω_0 + ω_1 − ω_1 = 0 without being resonant
        q.add_term(MultiIndex::new([ix(&l, 0, 1), ix(&l, 1, 1), ix(&l, 1, -1)]), Complex::new(1.0, 0.0)).unwrap();
        assert!(matches!(solve_homological(&q, &f, 5.0), Err(Error::VanishingDivisor { .. })));
    }

    #[test]
    fn diagonal_bracket_matches_generic_bracket() {
        let l = lat(1, 3);
        let v = Potential::sample(2.0, 1.0, l.clone(), 4).unwrap();
        let f = v.frequencies::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = Polynomial::random_real(l.clone(), 4, 10, &mut rng);
        let sol = solve_homological(&q, &f, 1.5).unwrap();
        let generic = sol.chi.poisson(&h0_polynomial(&f)).unwrap().sub(&sol.z).sub(&q);
        for (_, c) in generic.terms() {
            assert!(c.norm() < 1e-14);
        }
    }

    #[test]
    fn compositions() {
        let mut all = Vec::new();
        for_each_composition(6, 2, |l| all.push(l.to_vec()));
        assert_eq!(all, vec![vec![3, 3]]);
        let mut all = Vec::new();
        for_each_composition(10, 3, |l| all.push(l.to_vec()));
        assert_eq!(all, vec![vec![3, 3, 4], vec![3, 4, 3], vec![4, 3, 3]]);
        let mut n = 0;
        for_each_composition(5, 2, |_| n += 1);
        assert_eq!(n, 0);
    }

    #[test]
    fn third_degree_q_is_minus_p() {
        let l = lat(1, 3);
        let f = Potential::sample(2.0, 1.0, l.clone(), 2).unwrap().frequencies::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p3 = Polynomial::random_real(l.clone(), 3, 4, &mut rng);
        let nf = build(&[p3.clone()], &f, 2.0, 3, BuildOptions::default()).unwrap();
        assert_eq!(nf.q[0], p3.neg().prune());
        assert!(nf.is_normal_form());
    }

    #[test]
    fn zero_p_gives_zero_result() {
        let l = lat(1, 3);
        let f = Frequencies::<f64>::free(l.clone());
        let nf = build::<f64, _>(&[], &f, 3.0, 6, BuildOptions::default()).unwrap();
        assert!(nf.chi.iter().chain(&nf.z).all(Polynomial::is_empty));
        let z = State::from_xi(l.clone(), [(vec![1], Complex::new(0.1, 0.0))]).unwrap();
        assert_eq!(lie_transform(&nf.chi, &z, 8).unwrap(), z);
    }

    #[test]
    fn parameters() {
        assert_eq!(choose_parameters((-10.0f64).exp(), 0.5).unwrap(), (32, 3));
        assert!(choose_parameters(1.0, 0.5).is_err());
        assert!(choose_parameters(0.1, 1.0).is_err());
        let mut last = (0, 0);
        for k in 1..40 {
            let p = choose_parameters(10f64.powi(-k), 0.4).unwrap();
            assert!(p.0 >= last.0 && p.1 >= last.1);
            last = p;
        }
        assert_eq!(choose_parameters(1e-3, 0.01).unwrap().1, 3);
    }

    #[test]
    fn slope_fit() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 4.0, 7.0];
        assert!((fit_slope(&x, &y).unwrap() - 3.0).abs() < 1e-15);
        assert!(fit_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn json_roundtrip() {
        let l = lat(1, 2);
        let f = Potential::sample(2.0, 1.0, l.clone(), 6).unwrap().frequencies::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p3 = Polynomial::random_real(l.clone(), 3, 3, &mut rng);
        let nf = build(&[p3], &f, 1.0, 4, BuildOptions::default()).unwrap();
        let back = NormalFormResult::from_json(&nf.to_json()).unwrap();
        assert_eq!(back.chi, nf.chi);
        assert_eq!(back.z, nf.z);
        assert_eq!(back.diagnostics, nf.diagnostics);
    }

    #[test]
    fn exact_and_float_builds_agree() {
        let l = lat(1, 2);
        let f = Potential::sample(2.0, 1.0, l.clone(), 9).unwrap().frequencies::<f64>();
        let fx = ExactFrequencies::from_f64(&f).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p3 = Polynomial::random_real(l.clone(), 3, 3, &mut rng);
        let p3x = p3.map_coeffs(|c| crate::scalar::complex_to_rational(*c).unwrap());
        let a = build(&[p3], &f, 1.0, 5, BuildOptions::default()).unwrap();
        let b = build(&[p3x], &fx, 1.0, 5, BuildOptions::default()).unwrap();
        for (x, y) in a.z.iter().zip(&b.z) {
            let y = y.map_coeffs(|c| Complex::new(c.re.to_f64_lossy(), c.im.to_f64_lossy()));
            let diff = x.sub(&y);
            let scale = sup_norm(x).max(1.0);
            assert!(sup_norm(&diff) <= 1e-10 * scale);
        }
    }
}
