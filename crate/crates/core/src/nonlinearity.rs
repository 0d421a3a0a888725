//! Taylor-series nonlinearities `g(v₁, v₂) = Σ g_{k₁k₂} v₁^{k₁} v₂^{k₂}` and
//! their expansion into zero-momentum polynomials.
//!
//! With `u = Σ ξ_a e^{ia·x}` and `ū = Σ η_b e^{-ib·x}`, the space average of
//! `g(u, ū)` is `Σ_k P_k` where `P_k` collects the terms with `k₁ + k₂ = k`.
//! The ordered coefficient `p_{a,b}` equals `g_{k₁k₂}` when `Σa = Σb` and
//! vanishes otherwise; the stored coefficient of an unordered monomial is
//! `g_{k₁k₂}` times the number of orderings of its `ξ` and `η` parts.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Index, Lattice, Sign};
use crate::multi_index::MultiIndex;
use crate::polynomial::{Polynomial, DEFAULT_DEGREE_CAP};
use crate::scalar::{cast, Scalar};
use crate::spectral::GridTransform;
use crate::state::State;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesTerm {
    pub k1: usize,
    pub k2: usize,
    pub re: f64,
    pub im: f64,
}

impl SeriesTerm {
    pub fn coeff(&self) -> Complex<f64> {
        Complex::new(self.re, self.im)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSpec {
    pub terms: Vec<SeriesTerm>,
    #[serde(rename = "R0")]
    pub r0: f64,
    #[serde(rename = "M")]
    pub m: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

impl SeriesSpec {
    /// Validated spec. Repeated `(k₁, k₂)` entries are summed; `r0` and `m`
    /// default to `1` and `Σ |g_{k₁k₂}| k₁! k₂!`.
    pub fn new(terms: Vec<SeriesTerm>, r0: Option<f64>, m: Option<f64>) -> Result<SeriesSpec> {
        let mut merged: Vec<SeriesTerm> = Vec::new();
        for t in terms {
            match merged.iter_mut().find(|u| u.k1 == t.k1 && u.k2 == t.k2) {
                Some(u) => {
                    u.re += t.re;
                    u.im += t.im;
                }
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.re != 0.0 || t.im != 0.0);
        merged.sort_by_key(|t| (t.k1 + t.k2, t.k1));
        let mut spec = SeriesSpec { terms: merged, r0: 1.0, m: 0.0 };
        spec.m = spec.default_m();
        if let Some(r0) = r0 {
            spec.r0 = r0;
        }
        if let Some(m) = m {
            spec.m = m;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// `g = (a/(p+1)) |u|^{2p+2}`.
    pub fn preset_power(p: usize, a: f64) -> Result<SeriesSpec> {
        if p < 1 {
            return Err(Error::param("p", "power nonlinearity needs p >= 1"));
        }
        let t = SeriesTerm { k1: p + 1, k2: p + 1, re: a / (p as f64 + 1.0), im: 0.0 };
        SeriesSpec::new(vec![t], None, None)
    }

    /// Parses `power:p=1,a=1` (both keys optional, defaults `p=1`, `a=1`).
    pub fn parse_preset(text: &str) -> Result<SeriesSpec> {
        let (name, args) = text.split_once(':').unwrap_or((text, ""));
        if name != "power" {
            return Err(Error::param("nonlinearity", format!("unknown preset '{name}'")));
        }
        let (mut p, mut a) = (1usize, 1.0f64);
        for kv in args.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::param("nonlinearity", format!("expected key=value, got '{kv}'")))?;
            let bad = |_| Error::param("nonlinearity", format!("bad value in '{kv}'"));
            match k.trim() {
                "p" => p = v.trim().parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?,
                "a" => a = v.trim().parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
                other => return Err(Error::param("nonlinearity", format!("unknown key '{other}'"))),
            }
        }
        SeriesSpec::preset_power(p, a)
    }

    pub fn zero() -> SeriesSpec {
        SeriesSpec { terms: Vec::new(), r0: 1.0, m: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 > 0.0 && self.r0.is_finite()) {
            return Err(Error::param("R0", "must be positive"));
        }
        if !(self.m >= 0.0 && self.m.is_finite()) {
            return Err(Error::param("M", "must be non-negative"));
        }
        for t in &self.terms {
            if !(t.re.is_finite() && t.im.is_finite()) {
                return Err(Error::NonFinite("series coefficient"));
            }
            if t.k1 + t.k2 < 3 {
                return Err(Error::param(
                    "terms",
                    format!("g_({},{}) nonzero: g must vanish to order 3", t.k1, t.k2),
                ));
            }
            let mirror = self.coefficient(t.k2, t.k1);
            let c = t.coeff();
            if (mirror - c.conj()).norm() > 1e-12 * c.norm().max(1.0) {
                return Err(Error::NotReal(format!("g_({},{}) is not the conjugate of g_({},{})", t.k2, t.k1, t.k1, t.k2)));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self, k1: usize, k2: usize) -> Complex<f64> {
        self.terms
            .iter()
            .find(|t| t.k1 == k1 && t.k2 == k2)
            .map_or(Complex::new(0.0, 0.0), SeriesTerm::coeff)
    }

    /// `Σ |g_{k₁k₂}| k₁! k₂!`, the largest stored coefficient any `P_k` can carry.
    pub fn default_m(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff().norm() * factorial(t.k1) * factorial(t.k2)).sum()
    }

    pub fn kmax(&self) -> usize {
        self.terms.iter().map(|t| t.k1 + t.k2).max().unwrap_or(0)
    }

    /// Only `k₁ = k₂` terms, i.e. `g` depends on `|u|²` alone.
    pub fn is_gauge_invariant(&self) -> bool {
        self.terms.iter().all(|t| t.k1 == t.k2)
    }

    pub fn eval(&self, v1: Complex<f64>, v2: Complex<f64>) -> Complex<f64> {
        self.terms
            .iter()
            .map(|t| t.coeff() * v1.powu(t.k1 as u32) * v2.powu(t.k2 as u32))
            .sum()
    }

    /// `∂g/∂v₂`.
    pub fn d_v2(&self, v1: Complex<f64>, v2: Complex<f64>) -> Complex<f64> {
        self.terms
            .iter()
            .filter(|t| t.k2 > 0)
            .map(|t| t.coeff() * (t.k2 as f64) * v1.powu(t.k1 as u32) * v2.powu(t.k2 as u32 - 1))
            .sum()
    }

    /// For gauge-invariant `g = G(|u|²)`, returns `G′(s)`.
    pub fn gauge_derivative(&self, s: f64) -> f64 {
        self.terms
            .iter()
            .filter(|t| t.k1 > 0)
            .map(|t| t.re * t.k1 as f64 * s.powi(t.k1 as i32 - 1))
            .sum()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("series spec serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<SeriesSpec> {
        #[derive(Deserialize)]
        struct Doc {
            terms: Vec<SeriesTerm>,
            #[serde(rename = "R0")]
            r0: Option<f64>,
            #[serde(rename = "M")]
            m: Option<f64>,
        }
        let doc: Doc = serde_json::from_value(value.clone())?;
        SeriesSpec::new(doc.terms, doc.r0, doc.m)
    }
}

/// Calls `f(xi_sites, eta_sites)` for every pair of non-decreasing site
/// sequences of lengths `k1`, `k2` with `Σ xi = Σ eta`.
pub fn for_each_balanced(lattice: &Lattice, k1: usize, k2: usize, mut f: impl FnMut(&[u32], &[u32])) {
    if k1 + k2 == 0 {
        return;
    }
    let mut walk = Balanced {
        lattice,
        k1,
        k2,
        buf: Vec::with_capacity(k1 + k2),
        momentum: vec![0; lattice.dim()],
    };
    walk.step(&mut f);
}

struct Balanced<'a> {
    lattice: &'a Lattice,
    k1: usize,
    k2: usize,
    buf: Vec<u32>,
    momentum: Vec<i64>,
}

impl Balanced<'_> {
    fn sign_at(&self, pos: usize) -> i64 {
        if pos < self.k1 {
            1
        } else {
            -1
        }
    }

    /// First admissible site at `pos`: sequences are non-decreasing within
    /// each group.
    fn floor_at(&self, pos: usize) -> u32 {
        if pos == 0 || pos == self.k1 {
            0
        } else {
            self.buf[pos - 1]
        }
    }

    fn step(&mut self, f: &mut impl FnMut(&[u32], &[u32])) {
        let pos = self.buf.len();
        let n = self.k1 + self.k2;
        let left = (n - pos) as i64;
        let k = self.lattice.radius() as i64;
        if self.momentum.iter().any(|m| m.abs() > k * left) {
            return;
        }
        let sign = self.sign_at(pos);
        if pos + 1 == n {
            let a: Vec<i64> = self.momentum.iter().map(|m| -sign * m).collect();
            if let Some(site) = self.lattice.site_of(&a) {
                if site >= self.floor_at(pos) {
                    self.buf.push(site);
                    f(&self.buf[..self.k1], &self.buf[self.k1..]);
                    self.buf.pop();
                }
            }
            return;
        }
        for site in self.floor_at(pos)..self.lattice.n_sites() as u32 {
            self.shift(site, sign);
            self.buf.push(site);
            self.step(f);
            self.buf.pop();
            self.shift(site, -sign);
        }
    }

    fn shift(&mut self, site: u32, sign: i64) {
        let c = self.lattice.coords(site);
        for (m, a) in self.momentum.iter_mut().zip(c.iter()) {
            *m += sign * a;
        }
    }
}

/// `k! / Π m!` over runs of a sorted sequence.
fn orderings(sorted: &[u32]) -> f64 {
    let mut total = factorial(sorted.len());
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        total /= factorial(j - i);
        i = j;
    }
    total
}

/// Homogeneous pieces `P_3, …, P_kmax` (entry `i` has degree `i + 3`).
pub fn expand<S: Scalar>(spec: &SeriesSpec, lattice: Arc<Lattice>, kmax: usize) -> Result<Vec<Polynomial<S>>> {
    expand_with_cap(spec, lattice, kmax, DEFAULT_DEGREE_CAP.max(kmax))
}

pub fn expand_with_cap<S: Scalar>(
    spec: &SeriesSpec,
    lattice: Arc<Lattice>,
    kmax: usize,
    degree_cap: usize,
) -> Result<Vec<Polynomial<S>>> {
    spec.validate()?;
    if kmax < 3 {
        return Err(Error::param("kmax", "must be at least 3"));
    }
    if kmax > degree_cap {
        return Err(Error::DegreeOverflow { degree: kmax, cap: degree_cap });
    }
    let mut out = Vec::with_capacity(kmax - 2);
    for k in 3..=kmax {
        let mut p = Polynomial::<S>::zero(Arc::clone(&lattice)).with_degree_cap(degree_cap);
        for t in spec.terms.iter().filter(|t| t.k1 + t.k2 == k) {
            let g = t.coeff();
            let mut first_err = None;
            for_each_balanced(&lattice, t.k1, t.k2, |xi, eta| {
                let w = orderings(xi) * orderings(eta);
                let j = MultiIndex::new(
                    xi.iter()
                        .map(|&s| Index::new(s, Sign::Plus))
                        .chain(eta.iter().map(|&s| Index::new(s, Sign::Minus))),
                );
                let c = Complex::new(cast::<S>(g.re * w), cast::<S>(g.im * w));
                if let Err(e) = p.add_term(j, c) {
                    first_err.get_or_insert(e);
                }
            });
            if let Some(e) = first_err {
                return Err(e);
            }
        }
        out.push(p);
    }
    Ok(out)
}

/// Smallest grid on which every product of degree `kmax` averages exactly.
pub fn exact_grid_size(lattice: &Lattice, kmax: usize) -> usize {
    kmax.max(1) * lattice.radius() + 1
}

/// `(1/M^d) Σ_x g(u(x), ū(x))` on the uniform grid with `m` points per axis,
/// where `ū` is synthesized from the `η` coordinates.
pub fn grid_average(spec: &SeriesSpec, z: &State<f64>, m: usize) -> Result<Complex<f64>> {
    let lattice = z.lattice();
    let mut t = GridTransform::<f64>::new(lattice, m)?;
    let mut v1 = vec![Complex::new(0.0, 0.0); t.len()];
    let mut v2 = v1.clone();
    for (j, c) in z.iter() {
        match j.sign() {
            Sign::Plus => v1[t.bin(j.site())] = c,
            Sign::Minus => v2[t.bin(lattice.negate(j.site()))] = c,
        }
    }
    t.inverse(&mut v1);
    t.inverse(&mut v2);
    let sum: Complex<f64> = v1.iter().zip(&v2).map(|(a, b)| spec.eval(*a, *b)).sum();
    Ok(sum / t.len() as f64)
}
