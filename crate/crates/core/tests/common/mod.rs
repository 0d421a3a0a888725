//! Test oracles written directly from the definitions, sharing nothing with
//! the library beyond the index types.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use nlsnf::scalar::f64_to_rational;
use nlsnf::{BigRational, Complex, ExactPoly, Index, Lattice, Poly64, Polynomial, Sign};
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Q = BigRational;
pub type CQ = Complex<Q>;

/// Polynomial as a map from sorted index lists to exact coefficients.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Symbolic(pub BTreeMap<Vec<Index>, CQ>);

impl Symbolic {
    pub fn from_poly(p: &ExactPoly) -> Self {
        let mut s = Symbolic::default();
        for (j, c) in p.terms() {
            s.add(j.entries().to_vec(), c.clone());
        }
        s
    }

    pub fn add(&mut self, mut mono: Vec<Index>, c: CQ) {
        mono.sort();
        let e = self.0.entry(mono.clone()).or_insert_with(CQ::zero);
        *e = e.clone() + c;
        if e.is_zero() {
            self.0.remove(&mono);
        }
    }

    /// `∂/∂z_j` of every monomial.
    pub fn derivative(&self, j: Index) -> Symbolic {
        let mut out = Symbolic::default();
        for (mono, c) in &self.0 {
            let count = mono.iter().filter(|&&i| i == j).count();
            if count == 0 {
                continue;
            }
            let mut rest = mono.clone();
            let pos = rest.iter().position(|&i| i == j).unwrap();
            rest.remove(pos);
            out.add(rest, c.clone() * CQ::new(Q::from_integer(count.into()), Q::zero()));
        }
        out
    }

    pub fn mul(&self, other: &Symbolic) -> Symbolic {
        let mut out = Symbolic::default();
        for (a, ca) in &self.0 {
            for (b, cb) in &other.0 {
                let mut m = a.clone();
                m.extend_from_slice(b);
                out.add(m, ca.clone() * cb.clone());
            }
        }
        out
    }

    pub fn scale(&self, c: &CQ) -> Symbolic {
        let mut out = Symbolic::default();
        for (m, v) in &self.0 {
            out.add(m.clone(), v.clone() * c.clone());
        }
        out
    }

    pub fn plus(&self, other: &Symbolic) -> Symbolic {
        let mut out = self.clone();
        for (m, v) in &other.0 {
            out.add(m.clone(), v.clone());
        }
        out
    }

    /// `{F, G} = −i Σ_a (∂_{ξ_a}F ∂_{η_a}G − ∂_{η_a}F ∂_{ξ_a}G)`.
    pub fn bracket(&self, other: &Symbolic, lattice: &Lattice) -> Symbolic {
        let minus_i = CQ::new(Q::zero(), -Q::one());
        let mut out = Symbolic::default();
        for a in lattice.sites() {
            let xi = Index::new(a, Sign::Plus);
            let eta = Index::new(a, Sign::Minus);
            let t1 = self.derivative(xi).mul(&other.derivative(eta));
            let t2 = self.derivative(eta).mul(&other.derivative(xi)).scale(&CQ::new(-Q::one(), Q::zero()));
            out = out.plus(&t1.plus(&t2).scale(&minus_i));
        }
        out
    }
}

pub fn exact(p: &Poly64) -> ExactPoly {
    p.map_coeffs(|c| CQ::new(f64_to_rational(c.re).unwrap(), f64_to_rational(c.im).unwrap()))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn lattice(d: usize, k: usize) -> Arc<Lattice> {
    Arc::new(Lattice::new(d, k).unwrap())
}

/// Random real homogeneous polynomial with coefficients on a dyadic grid, so
/// the exact and float versions coincide.
pub fn dyadic_poly(l: &Arc<Lattice>, degree: usize, pairs: usize, seed: u64) -> Poly64 {
    let p = Polynomial::<f64>::random_real(Arc::clone(l), degree, pairs, &mut rng(seed));
    p.map_coeffs(|c| Complex::new((c.re * 64.0).round() / 64.0, (c.im * 64.0).round() / 64.0)).prune()
}

/// `I_a = ξ_a η_a`.
pub fn action(l: &Lattice, a: &[i64]) -> Vec<Index> {
    vec![l.index(a, Sign::Plus).unwrap(), l.index(a, Sign::Minus).unwrap()]
}
