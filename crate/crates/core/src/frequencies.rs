//! Linear frequencies `ω_a = |a|² + v_a`, divisors `Ω(j)` and the quadratic
//! Hamiltonian `H₀ = Σ_a ω_a ξ_a η_a`.

use std::sync::Arc;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::lattice::{Index, Lattice, Sign};
use crate::multi_index::MultiIndex;
use crate::scalar::{cast, CompensatedSum, Real};
use crate::state::State;

#[derive(Clone, Debug, PartialEq)]
pub struct Frequencies<S: Real> {
    lattice: Arc<Lattice>,
    omega: Vec<S>,
}

impl<S: Real> Frequencies<S> {
    /// `ω_a = |a|² + v_a` from potential values in site order.
    pub fn from_potential(lattice: Arc<Lattice>, v: &[f64]) -> Result<Self> {
        if v.len() != lattice.n_sites() {
            return Err(Error::param("v", format!("expected {} values, got {}", lattice.n_sites(), v.len())));
        }
        let omega = lattice.sites().map(|s| cast::<S>(lattice.modulus_sq(s) as f64 + v[s as usize])).collect();
        Ok(Self { lattice, omega })
    }

    /// `V = 0`.
    pub fn free(lattice: Arc<Lattice>) -> Self {
        let v = vec![0.0; lattice.n_sites()];
        Self::from_potential(lattice, &v).expect("length matches")
    }

    pub fn from_values(lattice: Arc<Lattice>, omega: Vec<S>) -> Result<Self> {
        if omega.len() != lattice.n_sites() {
            return Err(Error::param("omega", "one frequency per lattice site required"));
        }
        Ok(Self { lattice, omega })
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    #[inline]
    pub fn omega(&self, site: u32) -> S {
        self.omega[site as usize]
    }

    pub fn values(&self) -> &[S] {
        &self.omega
    }

    /// `Ω(j) = Σ_k δ_k ω_{a_k}`. Accumulated per site with net signed counts,
    /// so a resonant `j` gives exactly zero.
    pub fn divisor(&self, j: &MultiIndex) -> Result<S> {
        let mut acc = CompensatedSum::new();
        for (site, count) in j.signed_counts() {
            if site as usize >= self.omega.len() {
                return Err(Error::OffLattice {
                    site: vec![site as i64],
                    d: self.lattice.dim(),
                    k: self.lattice.radius(),
                });
            }
            if count != 0 {
                acc.add(cast::<S>(count as f64) * self.omega[site as usize]);
            }
        }
        Ok(acc.value())
    }

    /// `H₀(z) = Σ_a ω_a ξ_a η_a`.
    pub fn h0(&self, z: &State<S>) -> Complex<S> {
        let mut re = CompensatedSum::new();
        let mut im = CompensatedSum::new();
        for s in self.lattice.sites() {
            let v = z.get(Index::new(s, Sign::Plus)) * z.get(Index::new(s, Sign::Minus)) * self.omega(s);
            re.add(v.re);
            im.add(v.im);
        }
        Complex::new(re.value(), im.value())
    }

    /// `out += scale · X_{H₀}(z)` on dense vectors: `ξ̇ = −iωξ`, `η̇ = iωη`.
    pub fn add_h0_field(&self, z: &[Complex<S>], scale: S, out: &mut [Complex<S>]) {
        for s in self.lattice.sites() {
            let w = self.omega(s) * scale;
            let p = Index::new(s, Sign::Plus).slot();
            let m = Index::new(s, Sign::Minus).slot();
            out[p] = out[p] + Complex::new(S::zero(), -w) * z[p];
            out[m] = out[m] + Complex::new(S::zero(), w) * z[m];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ix(l: &Lattice, a: &[i64], d: i64) -> Index {
        l.index(a, Sign::from_value(d).unwrap()).unwrap()
    }

    #[test]
    fn free_frequencies_are_squared_moduli() {
        let l = Arc::new(Lattice::new(2, 2).unwrap());
        let f = Frequencies::<f64>::free(Arc::clone(&l));
        assert_eq!(f.omega(l.site_of(&[1, 1]).unwrap()), 2.0);
        assert_eq!(f.omega(l.site_of(&[0, 0]).unwrap()), 0.0);
    }

    #[test]
    fn divisor_examples() {
        let l = Arc::new(Lattice::new(1, 3).unwrap());
        let f = Frequencies::<f64>::free(Arc::clone(&l));
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[-1], 1), ix(&l, &[0], -1), ix(&l, &[0], -1)]);
        assert_eq!(f.divisor(&j).unwrap(), 2.0);

        let v: Vec<f64> = l.sites().map(|s| 0.1 * (s as f64 + 1.0).sin()).collect();
        let f = Frequencies::<f64>::from_potential(Arc::clone(&l), &v).unwrap();
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[3], 1), ix(&l, &[1], -1), ix(&l, &[3], -1)]);
        assert!(j.is_resonant());
        assert_eq!(f.divisor(&j).unwrap(), 0.0);
        let j = MultiIndex::new([ix(&l, &[1], 1), ix(&l, &[2], 1), ix(&l, &[3], -1)]);
        assert_eq!(f.divisor(&j.conj()).unwrap(), -f.divisor(&j).unwrap());
        assert_eq!(f.omega(l.site_of(&[0]).unwrap()), v[l.site_of(&[0]).unwrap() as usize]);
    }
}
