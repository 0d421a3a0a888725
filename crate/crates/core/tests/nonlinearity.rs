mod common;

use std::sync::Arc;

use common::*;
use nlsnf::nonlinearity::{expand, grid_average, SeriesTerm};
use nlsnf::*;
use proptest::prelude::*;

fn generic() -> SeriesSpec {
    let t = |k1, k2, re, im| SeriesTerm { k1, k2, re, im };
    SeriesSpec::new(
        vec![t(2, 1, 0.5, 0.3), t(1, 2, 0.5, -0.3), t(2, 2, 1.0, 0.0), t(3, 1, 0.2, 0.4), t(1, 3, 0.2, -0.4), t(3, 3, -0.7, 0.0)],
        None,
        None,
    )
    .unwrap()
}

/// `(2π)^{-d} ∫ g(u, ū)` by the rectangle rule on `m` points per axis, with
/// `u` synthesized pointwise and `g` summed term by term.
fn quadrature(spec: &SeriesSpec, z: &State<f64>, m: usize) -> Complex<f64> {
    let d = z.lattice().dim();
    let h = std::f64::consts::TAU / m as f64;
    let n = m.pow(d as u32);
    let points: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .map(|mut i| {
            let mut x = vec![0.0; d];
            for c in (0..d).rev() {
                x[c] = (i % m) as f64 * h;
                i /= m;
            }
            (x, vec![0.0; d])
        })
        .collect();
    let u = z.to_function(&points);
    let total: Complex<f64> = u
        .iter()
        .map(|v| {
            spec.terms
                .iter()
                .map(|t| Complex::new(t.re, t.im) * v.powu(t.k1 as u32) * v.conj().powu(t.k2 as u32))
                .sum::<Complex<f64>>()
        })
        .sum();
    total / n as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn expansion_integrates_the_nonlinearity(seed in any::<u64>(), two_d in any::<bool>(), size in 0.05f64..0.6) {
        let l = if two_d { lattice(2, 1) } else { lattice(1, 3) };
        let spec = generic();
        let z = State::random(Arc::clone(&l), 0.0, size, &mut rng(seed)).unwrap();
        let p = expand::<f64>(&spec, Arc::clone(&l), spec.kmax()).unwrap();
        let series: Complex<f64> = p.iter().map(|pk| pk.evaluate(&z).unwrap()).sum();
        let m = spec.kmax() * l.radius() + 1;
        let quad = quadrature(&spec, &z, m);
        let scale = quad.norm().max(size.powi(3));
        prop_assert!((series - quad).norm() <= 1e-8 * scale, "series {} vs quadrature {}", series, quad);
        let library = grid_average(&spec, &z, m).unwrap();
        prop_assert!((library - quad).norm() <= 1e-8 * scale);
    }

    #[test]
    fn expansion_is_real_and_zero_momentum(p_exp in 1usize..3, a in -2.0f64..2.0) {
        prop_assume!(a.abs() > 1e-3);
        let l = lattice(1, 4);
        let spec = SeriesSpec::preset_power(p_exp, a).unwrap();
        for pk in expand::<f64>(&spec, Arc::clone(&l), 2 * p_exp + 2).unwrap() {
            prop_assert!(pk.is_real(1e-14));
            prop_assert!(pk.momentum_defect().is_none());
        }
    }
}

#[test]
fn power_preset_has_only_its_own_degree() {
    let l = lattice(1, 3);
    let spec = SeriesSpec::preset_power(2, 1.0).unwrap();
    let p = expand::<f64>(&spec, Arc::clone(&l), 7).unwrap();
    for (i, pk) in p.iter().enumerate() {
        assert_eq!(pk.is_empty(), i + 3 != 6, "degree {}", i + 3);
    }
}

#[test]
fn truncation_below_the_series_degree_drops_terms() {
    let l = lattice(1, 2);
    let p = expand::<f64>(&generic(), Arc::clone(&l), 4).unwrap();
    assert_eq!(p.len(), 2);
    assert!(!p[0].is_empty() && !p[1].is_empty());
}
