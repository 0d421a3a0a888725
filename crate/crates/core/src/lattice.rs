//! The truncated index set: lattice sites `a ∈ ℤ^d` with `max_i |a_i| <= K`,
//! and signed indices `(a, δ)` with `δ = ±1` addressing `ξ_a` (`δ = +1`) and
//! `η_a` (`δ = -1`).
//!
//! Sites are numbered in lexicographic order of their coordinates, so the
//! numbering is a pure function of `(d, K)`. An [`Index`] packs the site
//! number and the sign into one `u32`; its natural order is therefore
//! lexicographic on `a`, then `δ = +1` before `δ = -1`.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Coordinates of a lattice site.
pub type Site = SmallVec<[i64; 4]>;

/// Sign `δ` of an index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn from_value(v: i64) -> Result<Sign> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            _ => Err(Error::param("delta", format!("expected +1 or -1, got {v}"))),
        }
    }
}

/// A signed index `j = (a, δ)`, relative to a [`Lattice`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Index(u32);

impl Index {
    #[inline]
    pub fn new(site: u32, sign: Sign) -> Index {
        Index(site << 1 | u32::from(sign == Sign::Minus))
    }

    #[inline]
    pub fn site(self) -> u32 {
        self.0 >> 1
    }

    #[inline]
    pub fn sign(self) -> Sign {
        if self.0 & 1 == 0 {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }

    #[inline]
    pub fn delta(self) -> i64 {
        self.sign().value()
    }

    /// `j̄ = (a, -δ)`.
    #[inline]
    pub fn conj(self) -> Index {
        Index(self.0 ^ 1)
    }

    /// Position in a dense vector of length `2 * n_sites`.
    #[inline]
    pub fn slot(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn from_slot(slot: usize) -> Index {
        Index(slot as u32)
    }
}

impl fmt::Debug for Index {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = if self.sign() == Sign::Plus { '+' } else { '-' };
        write!(f, "#{}{}", self.site(), s)
    }
}

/// Box-truncated lattice `{a ∈ ℤ^d : max_i |a_i| <= K}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "LatticeSpec", into = "LatticeSpec")]
pub struct Lattice {
    d: usize,
    k: usize,
    n_sites: usize,
    #[serde(skip)]
    modulus: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct LatticeSpec {
    d: usize,
    #[serde(rename = "K")]
    k: usize,
}

impl TryFrom<LatticeSpec> for Lattice {
    type Error = Error;
    fn try_from(s: LatticeSpec) -> Result<Lattice> {
        Lattice::new(s.d, s.k)
    }
}

impl From<Lattice> for LatticeSpec {
    fn from(l: Lattice) -> LatticeSpec {
        LatticeSpec { d: l.d, k: l.k }
    }
}

impl PartialEq for Lattice {
    fn eq(&self, other: &Self) -> bool {
        self.d == other.d && self.k == other.k
    }
}

impl Eq for Lattice {}

const MAX_SITES: usize = 1 << 24;

impl Lattice {
    pub fn new(d: usize, k: usize) -> Result<Lattice> {
        if d == 0 {
            return Err(Error::param("d", "dimension must be at least 1"));
        }
        let side = 2 * k + 1;
        let n_sites = (0..d)
            .try_fold(1usize, |acc, _| acc.checked_mul(side))
            .filter(|&n| n <= MAX_SITES)
            .ok_or_else(|| Error::param("K", format!("(2K+1)^d exceeds {MAX_SITES} sites")))?;
        let mut lattice = Lattice { d, k, n_sites, modulus: Vec::new() };
        lattice.modulus = (0..n_sites as u32)
            .map(|s| (lattice.modulus_sq(s) as f64).sqrt())
            .collect();
        Ok(lattice)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Truncation radius `K` (max-norm).
    pub fn radius(&self) -> usize {
        self.k
    }

    pub fn side(&self) -> usize {
        2 * self.k + 1
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Number of signed indices, `2 * n_sites`.
    pub fn n_indices(&self) -> usize {
        2 * self.n_sites
    }

    pub fn sites(&self) -> std::ops::Range<u32> {
        0..self.n_sites as u32
    }

    /// All signed indices in their natural order.
    pub fn indices(&self) -> impl Iterator<Item = Index> {
        (0..self.n_indices()).map(Index::from_slot)
    }

    pub fn coords(&self, site: u32) -> Site {
        let side = self.side() as u64;
        let mut rest = site as u64;
        let mut a: Site = smallvec::smallvec![0; self.d];
        for slot in a.iter_mut().rev() {
            *slot = (rest % side) as i64 - self.k as i64;
            rest /= side;
        }
        a
    }

    /// Site number of `a`, or `None` when `a` is outside the box.
    pub fn site_of(&self, a: &[i64]) -> Option<u32> {
        if a.len() != self.d {
            return None;
        }
        let k = self.k as i64;
        let side = self.side() as u64;
        let mut id = 0u64;
        for &ai in a {
            if ai.abs() > k {
                return None;
            }
            id = id * side + (ai + k) as u64;
        }
        Some(id as u32)
    }

    pub fn require_site(&self, a: &[i64]) -> Result<u32> {
        self.site_of(a).ok_or_else(|| Error::OffLattice { site: a.to_vec(), d: self.d, k: self.k })
    }

    pub fn index(&self, a: &[i64], sign: Sign) -> Result<Index> {
        Ok(Index::new(self.require_site(a)?, sign))
    }

    /// `|a|²`, exact.
    pub fn modulus_sq(&self, site: u32) -> i64 {
        self.coords(site).iter().map(|x| x * x).sum()
    }

    /// Euclidean `|a|`.
    #[inline]
    pub fn modulus(&self, site: u32) -> f64 {
        self.modulus[site as usize]
    }

    /// Site of `-a`.
    pub fn negate(&self, site: u32) -> u32 {
        (self.n_sites as u32 - 1) - site
    }

    pub fn contains_index(&self, j: Index) -> bool {
        (j.site() as usize) < self.n_sites
    }

    pub fn check_same(&self, other: &Lattice) -> Result<()> {
        if self.d == other.d && self.k == other.k {
            Ok(())
        } else {
            Err(Error::LatticeMismatch {
                expected_d: self.d,
                expected_k: self.k,
                found_d: other.d,
                found_k: other.k,
            })
        }
    }

    /// `[a_1, …, a_d, δ]`, the serialized form of an index.
    pub fn index_to_vec(&self, j: Index) -> Vec<i64> {
        let mut v: Vec<i64> = self.coords(j.site()).into_vec();
        v.push(j.delta());
        v
    }

    pub fn index_from_slice(&self, v: &[i64]) -> Result<Index> {
        if v.len() != self.d + 1 {
            return Err(Error::Schema {
                context: "index".into(),
                reason: format!("expected {} integers, got {}", self.d + 1, v.len()),
            });
        }
        self.index(&v[..self.d], Sign::from_value(v[self.d])?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_is_lexicographic() {
        let l = Lattice::new(2, 1).unwrap();
        let all: Vec<Site> = l.sites().map(|s| l.coords(s)).collect();
        let mut sorted = all.clone();
        sorted.sort();
        assert_eq!(all, sorted);
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].as_slice(), &[-1, -1]);
        assert_eq!(l.site_of(&[0, 0]), Some(4));
    }

    #[test]
    fn site_roundtrip_and_negation() {
        let l = Lattice::new(3, 2).unwrap();
        for s in l.sites() {
            let a = l.coords(s);
            assert_eq!(l.site_of(&a), Some(s));
            let neg: Vec<i64> = a.iter().map(|x| -x).collect();
            assert_eq!(l.site_of(&neg), Some(l.negate(s)));
        }
        assert_eq!(l.site_of(&[3, 0, 0]), None);
    }

    #[test]
    fn conjugation_is_an_involution() {
        let l = Lattice::new(1, 3).unwrap();
        for j in l.indices() {
            assert_ne!(j.conj(), j);
            assert_eq!(j.conj().conj(), j);
            assert_eq!(j.conj().site(), j.site());
            assert_eq!(j.conj().delta(), -j.delta());
        }
    }

    #[test]
    fn modulus_is_euclidean() {
        let l = Lattice::new(2, 3).unwrap();
        let s = l.site_of(&[3, -2]).unwrap();
        assert_eq!(l.modulus_sq(s), 13);
        assert!((l.modulus(s) - 13f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_degenerate_lattices() {
        assert!(Lattice::new(0, 3).is_err());
        assert!(Lattice::new(8, 100).is_err());
    }

    #[test]
    fn index_order_puts_plus_first() {
        let l = Lattice::new(1, 1).unwrap();
        let p = l.index(&[0], Sign::Plus).unwrap();
        let m = l.index(&[0], Sign::Minus).unwrap();
        let q = l.index(&[1], Sign::Plus).unwrap();
        assert!(p < m && m < q);
    }
}
