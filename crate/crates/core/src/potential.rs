//! Random convolution potentials `V = Σ v_a e^{ia·x}` with
//! `v_a = R v'_a / (1 + |a|)^m`, `v'_a` i.i.d. uniform on `[-1/2, 1/2]`.
//!
//! Randomness comes from ChaCha8 keyed by the user seed. Site `a` draws its
//! single uniform from ChaCha stream number `site(a)`, so each `v'_a` depends
//! only on `(seed, site)` and never on enumeration order or thread layout.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frequencies::Frequencies;
use crate::lattice::Lattice;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    lattice: Arc<Lattice>,
    /// Decay exponent `m > d/2`.
    pub m: f64,
    /// Scale `R > 0`.
    pub r: f64,
    pub seed: u64,
    /// Normalized draws `v'_a ∈ [-1/2, 1/2]` in site order.
    v_prime: Vec<f64>,
    /// `v_a` in site order.
    v: Vec<f64>,
}

/// SplitMix64 step; derives independent seeds for trials and sweep jobs.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut x = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Potential {
    pub fn sample(m: f64, r: f64, lattice: Arc<Lattice>, seed: u64) -> Result<Potential> {
        let d = lattice.dim() as f64;
        if !(m > d / 2.0) {
            return Err(Error::param("m", format!("decay exponent must exceed d/2 = {}", d / 2.0)));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("R", "scale must be positive"));
        }
        let v_prime: Vec<f64> = lattice
            .sites()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::from(s));
                rng.random_range(-0.5..=0.5)
            })
            .collect();
        Self::from_normalized(m, r, lattice, seed, v_prime)
    }

    /// Potential from prescribed normalized values `v'_a`.
    pub fn from_normalized(m: f64, r: f64, lattice: Arc<Lattice>, seed: u64, v_prime: Vec<f64>) -> Result<Potential> {
        if v_prime.len() != lattice.n_sites() {
            return Err(Error::param("v_prime", "one value per lattice site required"));
        }
        if let Some(bad) = v_prime.iter().find(|x| !(x.abs() <= 0.5)) {
            return Err(Error::param("v_prime", format!("{bad} outside [-1/2, 1/2]")));
        }
        let v = lattice
            .sites()
            .map(|s| r * v_prime[s as usize] / (1.0 + lattice.modulus(s)).powf(m))
            .collect();
        Ok(Potential { lattice, m, r, seed, v_prime, v })
    }

    /// `V = 0` (all `v'_a = 0`).
    pub fn zero(lattice: Arc<Lattice>, m: f64, r: f64) -> Result<Potential> {
        let n = lattice.n_sites();
        Self::from_normalized(m, r, lattice, 0, vec![0.0; n])
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn normalized(&self) -> &[f64] {
        &self.v_prime
    }

    pub fn frequencies<S: Real>(&self) -> Frequencies<S> {
        Frequencies::from_potential(Arc::clone(&self.lattice), &self.v).expect("one value per site")
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(PotentialDoc {
            d: self.lattice.dim(),
            k: self.lattice.radius(),
            m: self.m,
            r: self.r,
            seed: self.seed,
            v_prime: self.v_prime.clone(),
            v: self.v.clone(),
        })
        .expect("potential serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Potential> {
        let doc: PotentialDoc = serde_json::from_value(value.clone())?;
        let lattice = Arc::new(Lattice::new(doc.d, doc.k)?);
        let p = Self::from_normalized(doc.m, doc.r, lattice, doc.seed, doc.v_prime)?;
        let drift = p.v.iter().zip(&doc.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if drift > 1e-12 {
            return Err(Error::Schema {
                context: "potential".into(),
                reason: "stored v disagrees with R v' / (1+|a|)^m".into(),
            });
        }
        Ok(p)
    }
}

#[derive(Serialize, Deserialize)]
struct PotentialDoc {
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    m: f64,
    #[serde(rename = "R")]
    r: f64,
    seed: u64,
    v_prime: Vec<f64>,
    v: Vec<f64>,
}
