//! Zero-momentum polynomial Hamiltonians `P(z) = Σ_j a_j z_j`.
//!
//! One coefficient is stored per canonical (sorted) multi-index; derivatives
//! carry the multiplicity of the differentiated variable. Terms are kept in a
//! `BTreeMap` ordered by `(degree, entries)`, so degree buckets are
//! contiguous and every traversal is deterministic.
//!
//! The Poisson bracket is
//! `{F, G} = i Σ_a (∂F/∂η_a ∂G/∂ξ_a − ∂F/∂ξ_a ∂G/∂η_a)`,
//! and the Hamiltonian vector field is `ξ̇_a = −i ∂H/∂η_a`,
//! `η̇_a = i ∂H/∂ξ_a`, so that `d/dt F(z(t)) = {F, H}(z(t))`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::lattice::{Index, Lattice, Sign};
use crate::multi_index::MultiIndex;
use crate::scalar::{cast, CompensatedSum, Real, Scalar};
use crate::state::State;

pub const DEFAULT_DEGREE_CAP: usize = 12;

/// Below this many left-hand terms the bracket runs on one thread.
const PARALLEL_BRACKET_TERMS: usize = 256;

#[derive(Clone, Debug)]
pub struct Polynomial<S: Scalar> {
    lattice: Arc<Lattice>,
    terms: BTreeMap<MultiIndex, Complex<S>>,
    degree_cap: usize,
}

impl<S: Scalar> PartialEq for Polynomial<S> {
    fn eq(&self, other: &Self) -> bool {
        self.lattice == other.lattice && self.terms == other.terms
    }
}

fn times_i<S: Scalar>(c: Complex<S>) -> Complex<S> {
    Complex::new(S::zero() - c.im, c.re)
}

fn small_int<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("small integer representable")
}

impl<S: Scalar> Polynomial<S> {
    pub fn zero(lattice: Arc<Lattice>) -> Self {
        Self { lattice, terms: BTreeMap::new(), degree_cap: DEFAULT_DEGREE_CAP }
    }

    pub fn with_degree_cap(mut self, cap: usize) -> Self {
        self.degree_cap = cap;
        self
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    /// Adds `c · z_j`, validating degree and momentum.
    pub fn add_term(&mut self, j: MultiIndex, c: Complex<S>) -> Result<()> {
        if j.len() < 2 {
            return Err(Error::param("multi-index", "degree must be at least 2"));
        }
        if j.len() > self.degree_cap {
            return Err(Error::DegreeOverflow { degree: j.len(), cap: self.degree_cap });
        }
        if !j.has_zero_momentum(&self.lattice) {
            return Err(Error::NonzeroMomentum(j.display(&self.lattice)));
        }
        self.add_unchecked(j, c);
        Ok(())
    }

    /// Adds `c · z_j` and its mirror `conj(c) · z_{j̄}` so the result stays real.
    /// For self-conjugate `j` only the real part of `c` is used.
    pub fn add_real_term(&mut self, j: MultiIndex, c: Complex<S>) -> Result<()> {
        let jc = j.conj();
        if jc == j {
            return self.add_term(j, Complex::new(c.re, S::zero()));
        }
        self.add_term(jc, c.conj())?;
        self.add_term(j, c)
    }

    pub(crate) fn add_unchecked(&mut self, j: MultiIndex, c: Complex<S>) {
        match self.terms.get_mut(&j) {
            Some(v) => *v = v.clone() + c,
            None => {
                self.terms.insert(j, c);
            }
        }
    }

    pub fn coeff(&self, j: &MultiIndex) -> Complex<S> {
        self.terms.get(j).cloned().unwrap_or_else(Complex::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MultiIndex, &Complex<S>)> {
        self.terms.iter()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// No stored terms. Explicit zero coefficients count as stored.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.values().all(|c| c.is_zero())
    }

    /// Drops exactly-zero coefficients.
    pub fn prune(mut self) -> Self {
        self.terms.retain(|_, c| !c.is_zero());
        self
    }

    pub fn max_degree(&self) -> usize {
        self.terms.keys().next_back().map_or(0, |j| j.len())
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self.terms.keys().map(|j| j.len()).collect();
        d.dedup();
        d
    }

    /// Degree-`deg` part.
    pub fn homogeneous(&self, deg: usize) -> Self {
        self.filter(|j, _| j.len() == deg)
    }

    pub fn is_homogeneous(&self) -> bool {
        self.degrees().len() <= 1
    }

    pub fn filter(&self, keep: impl Fn(&MultiIndex, &Complex<S>) -> bool) -> Self {
        Self {
            lattice: Arc::clone(&self.lattice),
            terms: self.terms.iter().filter(|(j, c)| keep(j, c)).map(|(j, c)| (j.clone(), c.clone())).collect(),
            degree_cap: self.degree_cap,
        }
    }

    pub fn map_coeffs<T: Scalar>(&self, f: impl Fn(&Complex<S>) -> Complex<T>) -> Polynomial<T> {
        Polynomial {
            lattice: Arc::clone(&self.lattice),
            terms: self.terms.iter().map(|(j, c)| (j.clone(), f(c))).collect(),
            degree_cap: self.degree_cap,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.degree_cap = self.degree_cap.max(other.degree_cap);
        for (j, c) in &other.terms {
            out.add_unchecked(j.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn neg(&self) -> Self {
        self.map_coeffs(|c| Complex::new(S::zero() - c.re.clone(), S::zero() - c.im.clone()))
            .with_degree_cap(self.degree_cap)
    }

    pub fn scale(&self, s: &Complex<S>) -> Self {
        self.map_coeffs(|c| c.clone() * s.clone()).with_degree_cap(self.degree_cap)
    }

    /// Exact reality test `a_{j̄} = conj(a_j)`.
    pub fn reality_defect(&self) -> Option<&MultiIndex> {
        self.terms.iter().find(|(j, c)| self.coeff(&j.conj()) != c.conj()).map(|(j, _)| j)
    }

    /// First stored multi-index with nonzero momentum, if any.
    pub fn momentum_defect(&self) -> Option<&MultiIndex> {
        self.terms.keys().find(|j| !j.has_zero_momentum(&self.lattice))
    }

    /// Poisson bracket `{self, other}`; degree `k + ℓ − 2` per pair of terms.
    pub fn poisson(&self, other: &Self) -> Result<Self> {
        self.lattice.check_same(&other.lattice)?;
        let cap = self.degree_cap.max(other.degree_cap);
        if !self.is_empty() && !other.is_empty() {
            let degree = self.max_degree() + other.max_degree() - 2;
            if degree > cap {
                return Err(Error::DegreeOverflow { degree, cap });
            }
        }

        // Right-hand terms grouped by the indices they contain.
        let mut containing: HashMap<Index, Vec<(&MultiIndex, &Complex<S>, usize, usize)>> = HashMap::new();
        for (qj, qc) in &other.terms {
            for (idx, pos, mult) in qj.runs() {
                containing.entry(idx).or_default().push((qj, qc, pos, mult));
            }
        }

        let left: Vec<(&MultiIndex, &Complex<S>)> = self.terms.iter().collect();
        let contract = |chunk: &[(&MultiIndex, &Complex<S>)]| {
            let mut acc: HashMap<MultiIndex, Complex<S>> = HashMap::new();
            for (pj, pc) in chunk {
                for (idx, ppos, pmult) in pj.runs() {
                    let Some(partners) = containing.get(&idx.conj()) else { continue };
                    // {z_i ⋯, z_ī ⋯}: −iδ_i per contracted pair
                    let sign = match idx.sign() {
                        Sign::Plus => Complex::new(S::zero(), S::zero() - S::one()),
                        Sign::Minus => Complex::new(S::zero(), S::one()),
                    };
                    for (qj, qc, qpos, qmult) in partners {
                        let key = MultiIndex::merge_skipping(pj.entries(), ppos, qj.entries(), *qpos);
                        let mult = small_int::<S>(pmult * qmult);
                        let c = (*pc).clone() * (*qc).clone() * sign.clone() * mult;
                        match acc.get_mut(&key) {
                            Some(v) => *v = v.clone() + c,
                            None => {
                                acc.insert(key, c);
                            }
                        }
                    }
                }
            }
            acc
        };

        let partials: Vec<HashMap<MultiIndex, Complex<S>>> = if left.len() >= PARALLEL_BRACKET_TERMS {
            let chunk = left.len().div_ceil(rayon::current_num_threads() * 4).max(16);
            left.par_chunks(chunk).map(contract).collect()
        } else {
            vec![contract(&left)]
        };

        let mut out = Polynomial::zero(Arc::clone(&self.lattice)).with_degree_cap(cap);
        for part in partials {
            let mut sorted: Vec<(MultiIndex, Complex<S>)> = part.into_iter().collect();
            sorted.sort_by(|a, b| a.0.cmp(&b.0));
            for (j, c) in sorted {
                out.add_unchecked(j, c);
            }
        }
        Ok(out)
    }

    /// Splits into the N-normal-form part (resonant monomials and monomials
    /// with `μ(j) > N`) and the rest.
    pub fn nform_split(&self, n: f64) -> (Self, Self) {
        let lattice = Arc::clone(&self.lattice);
        let in_normal_form = |j: &MultiIndex| j.is_resonant() || j.mu(&lattice) > n;
        (self.filter(|j, _| in_normal_form(j)), self.filter(|j, _| !in_normal_form(j)))
    }

    /// Number of orderings of `j`, i.e. the multinomial `ℓ! / Π m_i!`.
    pub fn orderings(j: &MultiIndex) -> S {
        let mut count = S::one();
        let mut denom = S::one();
        for i in 1..=j.len() {
            count = count * small_int::<S>(i);
        }
        for (_, _, m) in j.runs() {
            for i in 1..=m {
                denom = denom * small_int::<S>(i);
            }
        }
        count / denom
    }
}

impl<S: Real> Polynomial<S> {
    /// `‖P‖ = Σ_ℓ sup_{|j| = ℓ} |a_j|`.
    pub fn norm(&self) -> S {
        let mut per_degree: BTreeMap<usize, S> = BTreeMap::new();
        for (j, c) in &self.terms {
            let e = per_degree.entry(j.len()).or_insert(S::zero());
            *e = e.max(c.norm());
        }
        compensated_sum_s(per_degree.into_values())
    }

    pub fn is_real(&self, tol: S) -> bool {
        self.terms.iter().all(|(j, c)| (self.coeff(&j.conj()) - c.conj()).norm() <= tol * (S::one() + c.norm()))
    }

    pub fn all_finite(&self) -> bool {
        self.terms.values().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    pub fn compile(&self) -> CompiledPoly<S> {
        CompiledPoly::new(self)
    }

    /// `P(z)`.
    pub fn evaluate(&self, z: &State<S>) -> Result<Complex<S>> {
        self.lattice.check_same(z.lattice())?;
        Ok(self.compile().eval(&z.to_dense()))
    }

    /// Hamiltonian vector field `X_P(z)`: component `(a, δ)` is `−iδ ∂P/∂z_{(a,−δ)}`.
    pub fn vector_field(&self, z: &State<S>) -> Result<State<S>> {
        self.lattice.check_same(z.lattice())?;
        let mut out = vec![Complex::default(); self.lattice.n_indices()];
        self.compile().add_vector_field(&z.to_dense(), S::one(), &mut out);
        Ok(State::from_dense(Arc::clone(&self.lattice), &out))
    }

    /// Gradient `∂P/∂z_j` as a dense vector indexed by [`Index::slot`].
    pub fn gradient(&self, z: &State<S>) -> Result<Vec<Complex<S>>> {
        self.lattice.check_same(z.lattice())?;
        let mut out = vec![Complex::default(); self.lattice.n_indices()];
        self.compile().add_gradient(&z.to_dense(), &mut out);
        Ok(out)
    }

    /// Random real homogeneous polynomial of degree `degree` with up to
    /// `n_pairs` conjugate pairs of zero-momentum monomials and coefficients
    /// uniform in `[-1, 1]²`.
    pub fn random_real<R: Rng + ?Sized>(lattice: Arc<Lattice>, degree: usize, n_pairs: usize, rng: &mut R) -> Self {
        let mut p = Polynomial::zero(Arc::clone(&lattice)).with_degree_cap(DEFAULT_DEGREE_CAP.max(degree));
        let mut attempts = 0;
        while p.len() < 2 * n_pairs && attempts < 200 * n_pairs.max(1) {
            attempts += 1;
            let Some(j) = random_zero_momentum(&lattice, degree, rng) else { continue };
            if p.terms.contains_key(&j) {
                continue;
            }
            let c = Complex::new(cast::<S>(rng.random_range(-1.0..1.0)), cast::<S>(rng.random_range(-1.0..1.0)));
            p.add_real_term(j, c).expect("zero momentum by construction");
        }
        p
    }
}

fn compensated_sum_s<S: Real>(it: impl IntoIterator<Item = S>) -> S {
    it.into_iter().collect::<CompensatedSum<S>>().value()
}

/// Random zero-momentum multi-index of length `degree`, or `None` when the
/// balancing entry falls outside the box.
pub fn random_zero_momentum<R: Rng + ?Sized>(lattice: &Lattice, degree: usize, rng: &mut R) -> Option<MultiIndex> {
    assert!(degree >= 2);
    let n_idx = lattice.n_indices();
    let mut entries: SmallVec<[Index; 8]> = (0..degree - 1).map(|_| Index::from_slot(rng.random_range(0..n_idx))).collect();
    let partial = MultiIndex::new(entries.iter().copied()).momentum(lattice);
    let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
    // δ a = −M
    let a: Vec<i64> = partial.iter().map(|m| -m * sign.value()).collect();
    let site = lattice.site_of(&a)?;
    entries.push(Index::new(site, sign));
    Some(MultiIndex::new(entries))
}

/// Flattened polynomial for repeated evaluation on dense vectors.
#[derive(Clone, Debug)]
pub struct CompiledPoly<S: Real> {
    coeffs: Vec<Complex<S>>,
    /// Slots of each monomial's entries, sorted.
    slots: Vec<SmallVec<[u32; 8]>>,
    /// Per monomial: (slot, first position, multiplicity) of each distinct entry.
    runs: Vec<SmallVec<[(u32, u8, u8); 8]>>,
}

impl<S: Real> CompiledPoly<S> {
    pub fn new(p: &Polynomial<S>) -> Self {
        let mut coeffs = Vec::with_capacity(p.len());
        let mut slots = Vec::with_capacity(p.len());
        let mut runs = Vec::with_capacity(p.len());
        for (j, c) in p.terms() {
            coeffs.push(*c);
            slots.push(j.entries().iter().map(|e| e.slot() as u32).collect());
            runs.push(j.runs().map(|(e, pos, m)| (e.slot() as u32, pos as u8, m as u8)).collect());
        }
        Self { coeffs, slots, runs }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn eval(&self, z: &[Complex<S>]) -> Complex<S> {
        let mut re = CompensatedSum::new();
        let mut im = CompensatedSum::new();
        for (c, s) in self.coeffs.iter().zip(&self.slots) {
            let v = s.iter().fold(*c, |acc, &k| acc * z[k as usize]);
            re.add(v.re);
            im.add(v.im);
        }
        Complex::new(re.value(), im.value())
    }

    /// `out[slot] += ∂P/∂z_slot`.
    pub fn add_gradient(&self, z: &[Complex<S>], out: &mut [Complex<S>]) {
        let mut prefix: SmallVec<[Complex<S>; 16]> = SmallVec::new();
        for ((c, s), runs) in self.coeffs.iter().zip(&self.slots).zip(&self.runs) {
            // prefix[p] = Π_{q<p} z, suffix computed on the fly
            prefix.clear();
            let mut acc = Complex::new(S::one(), S::zero());
            for &k in s {
                prefix.push(acc);
                acc = acc * z[k as usize];
            }
            let mut suffix: SmallVec<[Complex<S>; 16]> = smallvec::smallvec![Complex::new(S::one(), S::zero()); s.len() + 1];
            for p in (0..s.len()).rev() {
                suffix[p] = suffix[p + 1] * z[s[p] as usize];
            }
            for &(slot, pos, mult) in runs {
                let pos = pos as usize;
                let others = prefix[pos] * suffix[pos + 1];
                out[slot as usize] = out[slot as usize] + *c * others * cast::<S>(mult as f64);
            }
        }
    }

    /// `out += scale · X_P(z)`.
    pub fn add_vector_field(&self, z: &[Complex<S>], scale: S, out: &mut [Complex<S>]) {
        let mut grad = vec![Complex::default(); z.len()];
        self.add_gradient(z, &mut grad);
        for (slot, o) in out.iter_mut().enumerate() {
            let j = Index::from_slot(slot);
            // −iδ ∂P/∂z_{j̄}
            let g = grad[j.conj().slot()] * scale;
            let v = times_i(g);
            *o = match j.sign() {
                Sign::Plus => *o - v,
                Sign::Minus => *o + v,
            };
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTerm {
    indices: Vec<Vec<i64>>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct JsonBucket {
    degree: usize,
    entries: Vec<JsonTerm>,
}

impl Polynomial<f64> {
    /// `[{degree, entries: [{indices: [[a…, δ]…], re, im}]}]`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut buckets: Vec<JsonBucket> = Vec::new();
        for (j, c) in &self.terms {
            if buckets.last().map(|b| b.degree) != Some(j.len()) {
                buckets.push(JsonBucket { degree: j.len(), entries: Vec::new() });
            }
            let indices = j.entries().iter().map(|&e| self.lattice.index_to_vec(e)).collect();
            buckets.last_mut().expect("bucket").entries.push(JsonTerm { indices, re: c.re, im: c.im });
        }
        serde_json::to_value(buckets).expect("polynomial serializes")
    }

    pub fn from_json(value: &serde_json::Value, lattice: Arc<Lattice>) -> Result<Self> {
        let buckets: Vec<JsonBucket> = serde_json::from_value(value.clone())?;
        let cap = buckets.iter().map(|b| b.degree).max().unwrap_or(0).max(DEFAULT_DEGREE_CAP);
        let mut p = Polynomial::zero(Arc::clone(&lattice)).with_degree_cap(cap);
        for b in buckets {
            for t in b.entries {
                if t.indices.len() != b.degree {
                    return Err(Error::Schema {
                        context: "polynomial".into(),
                        reason: format!("term with {} indices in degree-{} bucket", t.indices.len(), b.degree),
                    });
                }
                let j = MultiIndex::new(
                    t.indices.iter().map(|v| lattice.index_from_slice(v)).collect::<Result<Vec<_>>>()?,
                );
                p.add_term(j, Complex::new(t.re, t.im))?;
            }
        }
        Ok(p)
    }
}
