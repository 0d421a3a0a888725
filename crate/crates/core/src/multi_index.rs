//! Canonical multi-indices `j = (j_1, …, j_ℓ)`.
//!
//! A monomial `z_{j_1}⋯z_{j_ℓ}` does not depend on the order of its factors,
//! so a multi-index is stored sorted. Multiplicities are explicit through
//! repetition.

use std::cmp::Ordering;
use std::fmt;

use smallvec::SmallVec;

use crate::lattice::{Index, Lattice, Sign};

pub(crate) type Entries = SmallVec<[Index; 8]>;

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Entries);

impl MultiIndex {
    pub fn new<I: IntoIterator<Item = Index>>(entries: I) -> MultiIndex {
        let mut v: Entries = entries.into_iter().collect();
        v.sort_unstable();
        MultiIndex(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn entries(&self) -> &[Index] {
        &self.0
    }

    /// Distinct entries with their multiplicities, in order.
    pub fn runs(&self) -> impl Iterator<Item = (Index, usize, usize)> + '_ {
        // (index, position of first occurrence, multiplicity)
        let v = &self.0;
        let mut pos = 0;
        std::iter::from_fn(move || {
            if pos >= v.len() {
                return None;
            }
            let start = pos;
            while pos < v.len() && v[pos] == v[start] {
                pos += 1;
            }
            Some((v[start], start, pos - start))
        })
    }

    pub fn multiplicity(&self, j: Index) -> usize {
        self.0.iter().filter(|&&e| e == j).count()
    }

    /// `j̄`: every entry conjugated.
    pub fn conj(&self) -> MultiIndex {
        MultiIndex::new(self.0.iter().map(|j| j.conj()))
    }

    /// Momentum `a_1 δ_1 + ⋯ + a_ℓ δ_ℓ`, exact.
    pub fn momentum(&self, lattice: &Lattice) -> Vec<i64> {
        let mut m = vec![0i64; lattice.dim()];
        for j in &self.0 {
            let delta = j.delta();
            for (mi, ai) in m.iter_mut().zip(lattice.coords(j.site())) {
                *mi += delta * ai;
            }
        }
        m
    }

    pub fn has_zero_momentum(&self, lattice: &Lattice) -> bool {
        self.momentum(lattice).iter().all(|&x| x == 0)
    }

    /// Net count `#{δ = +1} − #{δ = −1}` per site, in site order.
    pub fn signed_counts(&self) -> SmallVec<[(u32, i64); 8]> {
        let mut out: SmallVec<[(u32, i64); 8]> = SmallVec::new();
        for j in &self.0 {
            match out.last_mut() {
                Some((s, c)) if *s == j.site() => *c += j.delta(),
                _ => out.push((j.site(), j.delta())),
            }
        }
        out
    }

    /// Resonant: even length and the entries pair off into conjugate pairs.
    pub fn is_resonant(&self) -> bool {
        self.len() % 2 == 0 && self.signed_counts().iter().all(|&(_, c)| c == 0)
    }

    /// Third largest of `|j_1|, …, |j_ℓ|` counted with multiplicity; `0` for
    /// fewer than three entries.
    pub fn mu(&self, lattice: &Lattice) -> f64 {
        if self.len() < 3 {
            return 0.0;
        }
        let mut m: SmallVec<[f64; 8]> = self.0.iter().map(|j| lattice.modulus(j.site())).collect();
        m.sort_unstable_by(|a, b| b.total_cmp(a));
        m[2]
    }

    /// `N(j) = Π_k (1 + |j_k|)`.
    pub fn weight(&self, lattice: &Lattice) -> f64 {
        self.0.iter().map(|j| 1.0 + lattice.modulus(j.site())).product()
    }

    /// Removes one occurrence of `j`.
    pub fn without(&self, j: Index) -> Option<MultiIndex> {
        let pos = self.0.iter().position(|&e| e == j)?;
        let mut v = self.0.clone();
        v.remove(pos);
        Some(MultiIndex(v))
    }

    pub fn with(&self, j: Index) -> MultiIndex {
        let mut v = self.0.clone();
        let pos = v.partition_point(|&e| e <= j);
        v.insert(pos, j);
        MultiIndex(v)
    }

    /// Sorted union of two multi-indices, each with one position skipped.
    pub(crate) fn merge_skipping(a: &[Index], skip_a: usize, b: &[Index], skip_b: usize) -> MultiIndex {
        let mut out: Entries = SmallVec::with_capacity(a.len() + b.len() - 2);
        let (mut i, mut k) = (0, 0);
        loop {
            if i == skip_a {
                i += 1;
            }
            if k == skip_b {
                k += 1;
            }
            match (a.get(i), b.get(k)) {
                (Some(x), Some(y)) => {
                    if x <= y {
                        out.push(*x);
                        i += 1;
                    } else {
                        out.push(*y);
                        k += 1;
                    }
                }
                (Some(x), None) => {
                    out.push(*x);
                    i += 1;
                }
                (None, Some(y)) => {
                    out.push(*y);
                    k += 1;
                }
                (None, None) => break,
            }
        }
        MultiIndex(out)
    }

    /// Human-readable form such as `((1,+),(-1,+),(0,-),(0,-))`.
    pub fn display(&self, lattice: &Lattice) -> String {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|j| {
                let a = lattice.coords(j.site());
                let a: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                let s = if j.sign() == Sign::Plus { '+' } else { '-' };
                format!("({},{})", a.join(","), s)
            })
            .collect();
        format!("({})", parts.join(","))
    }
}

impl Ord for MultiIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len().cmp(&other.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for MultiIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ix(l: &Lattice, a: &[i64], d: i64) -> Index {
        l.index(a, Sign::from_value(d).unwrap()).unwrap()
    }

    #[test]
    fn canonicalization_is_order_insensitive() {
        let l = Lattice::new(1, 4).unwrap();
        let a = ix(&l, &[1], 1);
        let b = ix(&l, &[-2], -1);
        let c = ix(&l, &[3], 1);
        let m1 = MultiIndex::new([a, b, c]);
        let m2 = MultiIndex::new([c, a, b]);
        assert_eq!(m1, m2);
        assert_eq!(MultiIndex::new(m1.entries().iter().copied()), m1);
    }

    #[test]
    fn momentum_examples() {
        let l = Lattice::new(1, 4).unwrap();
        assert_eq!(MultiIndex::new([ix(&l, &[2], 1), ix(&l, &[2], -1)]).momentum(&l), vec![0]);
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[2], 1), ix(&l, &[3], -1)]);
        assert_eq!(j.momentum(&l), vec![0]);
        let l2 = Lattice::new(2, 2).unwrap();
        let j = MultiIndex::new([ix(&l2, &[1, 0], 1), ix(&l2, &[0, 1], 1)]);
        assert_eq!(j.momentum(&l2), vec![1, 1]);
    }

    #[test]
    fn mu_examples() {
        let l = Lattice::new(1, 8).unwrap();
        let j = MultiIndex::new([ix(&l, &[5], 1), ix(&l, &[-3], 1), ix(&l, &[2], -1), ix(&l, &[1], -1)]);
        assert_eq!(j.mu(&l), 2.0);
        let j = MultiIndex::new([ix(&l, &[7], 1), ix(&l, &[-7], 1), ix(&l, &[7], -1)]);
        assert_eq!(j.mu(&l), 7.0);
        let j = MultiIndex::new([ix(&l, &[7], 1), ix(&l, &[7], -1)]);
        assert_eq!(j.mu(&l), 0.0);
    }

    #[test]
    fn resonance_examples() {
        let l = Lattice::new(1, 4).unwrap();
        assert!(MultiIndex::new([ix(&l, &[2], 1), ix(&l, &[2], -1)]).is_resonant());
        assert!(!MultiIndex::new([ix(&l, &[0], 1), ix(&l, &[1], 1), ix(&l, &[1], -1)]).is_resonant());
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[2], 1), ix(&l, &[1], -1), ix(&l, &[3], -1)]);
        assert!(!j.is_resonant());
        // (a,+) paired with (-a,-) is not a conjugate pair
        assert!(!MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[-1], -1)]).is_resonant());
    }

    #[test]
    fn weight_is_product_of_one_plus_moduli() {
        let l = Lattice::new(1, 4).unwrap();
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[-2], 1), ix(&l, &[3], -1)]);
        assert_eq!(j.weight(&l), 24.0);
    }

    #[test]
    fn merge_skipping_matches_naive() {
        let l = Lattice::new(1, 3).unwrap();
        let a = MultiIndex::new([ix(&l, &[0], 1), ix(&l, &[1], -1), ix(&l, &[2], 1)]);
        let b = MultiIndex::new([ix(&l, &[-1], 1), ix(&l, &[1], 1), ix(&l, &[1], 1)]);
        let merged = MultiIndex::merge_skipping(a.entries(), 1, b.entries(), 2);
        let naive = MultiIndex::new(
            a.without(a.entries()[1]).unwrap().entries().iter().chain(b.without(b.entries()[2]).unwrap().entries()).copied(),
        );
        assert_eq!(merged, naive);
    }

    #[test]
    fn runs_report_multiplicity() {
        let l = Lattice::new(1, 3).unwrap();
        let p = ix(&l, &[1], 1);
        let q = ix(&l, &[2], -1);
        let j = MultiIndex::new([p, q, p, p]);
        let runs: Vec<_> = j.runs().collect();
        assert_eq!(runs, vec![(p, 0, 3), (q, 3, 1)]);
    }
}
