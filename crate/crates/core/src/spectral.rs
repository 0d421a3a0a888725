//! Multi-dimensional FFTs on `M^d` periodic grids and the mapping between
//! lattice sites and grid bins.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::scalar::Real;

/// Cached forward/inverse plans for an `M^d` grid in row-major layout.
pub struct GridTransform<S: Real> {
    m: usize,
    d: usize,
    forward: Arc<dyn Fft<S>>,
    inverse: Arc<dyn Fft<S>>,
    line: Vec<Complex<S>>,
    scratch: Vec<Complex<S>>,
    /// Flat grid offset of every lattice site.
    bins: Vec<usize>,
}

impl<S: Real> GridTransform<S> {
    pub fn new(lattice: &Lattice, m: usize) -> Result<Self> {
        let needed = lattice.side();
        if m < needed {
            return Err(Error::Aliasing { grid: m, k: lattice.radius(), needed });
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(m);
        let inverse = planner.plan_fft_inverse(m);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let d = lattice.dim();
        let bins = lattice
            .sites()
            .map(|s| {
                lattice
                    .coords(s)
                    .iter()
                    .fold(0usize, |acc, &a| acc * m + a.rem_euclid(m as i64) as usize)
            })
            .collect();
        Ok(Self {
            m,
            d,
            forward,
            inverse,
            line: vec![Complex::default(); m],
            scratch: vec![Complex::default(); scratch_len],
            bins,
        })
    }

    pub fn points_per_axis(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.m.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid offset of lattice site `site`.
    #[inline]
    pub fn bin(&self, site: u32) -> usize {
        self.bins[site as usize]
    }

    /// Unnormalized `Σ_n f_n e^{-i k·x_n}` along every axis, in place.
    pub fn forward(&mut self, data: &mut [Complex<S>]) {
        let plan = Arc::clone(&self.forward);
        self.apply(&*plan, data);
    }

    /// Unnormalized `Σ_k f_k e^{+i k·x_n}` along every axis, in place.
    pub fn inverse(&mut self, data: &mut [Complex<S>]) {
        let plan = Arc::clone(&self.inverse);
        self.apply(&*plan, data);
    }

    fn apply(&mut self, plan: &dyn Fft<S>, data: &mut [Complex<S>]) {
        assert_eq!(data.len(), self.len(), "grid buffer has wrong length");
        let m = self.m;
        if self.d == 1 {
            plan.process_with_scratch(data, &mut self.scratch);
            return;
        }
        let total = data.len();
        for axis in 0..self.d {
            let stride = m.pow((self.d - 1 - axis) as u32);
            let block = stride * m;
            for start in (0..total).step_by(block) {
                for offset in 0..stride {
                    let base = start + offset;
                    for (i, v) in self.line.iter_mut().enumerate() {
                        *v = data[base + i * stride];
                    }
                    plan.process_with_scratch(&mut self.line, &mut self.scratch);
                    for (i, v) in self.line.iter().enumerate() {
                        data[base + i * stride] = *v;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dimensional_transform_matches_direct_sum() {
        let lattice = Lattice::new(2, 1).unwrap();
        let m = 4;
        let mut t = GridTransform::<f64>::new(&lattice, m).unwrap();
        let data: Vec<Complex<f64>> = (0..m * m)
            .map(|n| Complex::new((n as f64 * 0.37).sin(), (n as f64 * 0.11).cos()))
            .collect();
        let mut fast = data.clone();
        t.forward(&mut fast);
        let tau = std::f64::consts::TAU;
        for k0 in 0..m {
            for k1 in 0..m {
                let mut acc = Complex::new(0.0, 0.0);
                for n0 in 0..m {
                    for n1 in 0..m {
                        let phase = -tau * ((k0 * n0 + k1 * n1) as f64) / m as f64;
                        acc += data[n0 * m + n1] * Complex::from_polar(1.0, phase);
                    }
                }
                assert!((acc - fast[k0 * m + k1]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let lattice = Lattice::new(1, 4).unwrap();
        assert!(matches!(
            GridTransform::<f64>::new(&lattice, 8),
            Err(Error::Aliasing { needed: 9, .. })
        ));
    }
}
