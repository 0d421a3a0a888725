mod common;

use std::sync::Arc;

use common::*;
use nlsnf::nonlinearity::{expand, SeriesTerm};
use nlsnf::normal_form::{self, h0_polynomial, BuildOptions, Spectrum};
use nlsnf::*;

fn generic() -> SeriesSpec {
    let t = |k1, k2, re, im| SeriesTerm { k1, k2, re, im };
    SeriesSpec::new(
        vec![t(2, 1, 0.5, 0.25), t(1, 2, 0.5, -0.25), t(2, 2, 1.0, 0.0), t(3, 2, 0.25, 0.125), t(2, 3, 0.25, -0.125)],
        None,
        None,
    )
    .unwrap()
}

fn truncate<S: Scalar>(p: &Polynomial<S>, r: usize) -> Polynomial<S> {
    p.filter(|j, _| j.len() <= r)
}

/// `Σ_n (1/n!) ad_χ^n H` up to degree `r`, with `ad_χ F = {χ, F}`, the Lie
/// series of the time-one flow of `ż = −X_χ`.
fn lie_series<S: Scalar>(chi: &[Polynomial<S>], h: &Polynomial<S>, r: usize) -> Polynomial<S> {
    let lattice = Arc::clone(h.lattice());
    let mut total = truncate(h, r);
    let mut term = total.clone();
    for n in 1..=r - 2 {
        let mut next = Polynomial::zero(Arc::clone(&lattice));
        for c in chi.iter().filter(|c| !c.is_empty()) {
            let a = c.max_degree();
            for b in term.degrees() {
                if a + b - 2 <= r {
                    next = next.add(&c.poisson(&term.homogeneous(b)).unwrap());
                }
            }
        }
        let inv = Complex::new(S::from_rational(&BigRational::new(1.into(), (n as i64).into())), S::zero());
        term = next.scale(&inv);
        total = total.add(&term);
    }
    total
}

fn check_against_lie_series<S: Scalar, F: Spectrum<S>>(
    p: &[Polynomial<S>],
    freqs: &F,
    n: f64,
    r: usize,
    close: impl Fn(&Polynomial<S>, &Polynomial<S>) -> bool,
) {
    let nf = normal_form::build(p, freqs, n, r, BuildOptions::default()).unwrap();
    let h0 = h0_polynomial(freqs);
    let h = p.iter().fold(h0.clone(), |acc, pk| acc.add(pk));
    let conj = lie_series(&nf.chi, &h, r);
    assert!(close(&conj.homogeneous(2), &h0), "quadratic part changed");
    for m in 3..=r {
        let expected = nf.z_degree(m).unwrap();
        assert!(close(&conj.homogeneous(m), expected), "degree {m}: Lie series disagrees with Z");
        assert!(expected.nform_split(n).1.is_empty());
    }
}

#[test]
fn exact_normal_form_conjugates_through_degree_five() {
    let l = lattice(1, 2);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 1).unwrap();
    let freqs = ExactFrequencies::from_f64(&pot.frequencies()).unwrap();
    let p = expand::<BigRational>(&generic(), Arc::clone(&l), 5).unwrap();
    check_against_lie_series(&p, &freqs, 100.0, 5, |a, b| a.sub(b).prune().is_empty());
}

#[test]
fn exact_normal_form_with_small_cutoff() {
    // With N = 1 monomials with μ > 1 stay in Z instead of being removed.
    let l = lattice(1, 2);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 2).unwrap();
    let freqs = ExactFrequencies::from_f64(&pot.frequencies()).unwrap();
    let p = expand::<BigRational>(&generic(), Arc::clone(&l), 5).unwrap();
    check_against_lie_series(&p, &freqs, 1.0, 5, |a, b| a.sub(b).prune().is_empty());
}

#[test]
fn float_normal_form_conjugates_through_degree_eight() {
    let l = lattice(1, 2);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 3).unwrap();
    let freqs: Frequencies<f64> = pot.frequencies();
    let p = expand::<f64>(&generic(), Arc::clone(&l), 8).unwrap();
    check_against_lie_series(&p, &freqs, 100.0, 8, |a, b| {
        let scale = a.norm().max(b.norm()).max(1.0);
        a.sub(b).norm() <= 1e-9 * scale
    });
}

#[test]
fn float_and_exact_builds_agree() {
    let l = lattice(1, 2);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 4).unwrap();
    let ff: Frequencies<f64> = pot.frequencies();
    let ef = ExactFrequencies::from_f64(&ff).unwrap();
    let spec = generic();
    let a = normal_form::build(&expand::<f64>(&spec, Arc::clone(&l), 5).unwrap(), &ff, 100.0, 5, BuildOptions::default()).unwrap();
    let b = normal_form::build(&expand::<BigRational>(&spec, Arc::clone(&l), 5).unwrap(), &ef, 100.0, 5, BuildOptions::default())
        .unwrap();
    for m in 3..=5 {
        let exact_as_float = b.z_degree(m).unwrap().map_coeffs(|c| Complex::new(c.re.to_f64_lossy(), c.im.to_f64_lossy()));
        let diff = a.z_degree(m).unwrap().sub(&exact_as_float).norm();
        assert!(diff <= 1e-10 * exact_as_float.norm().max(1.0), "degree {m}: {diff:e}");
    }
}

#[test]
fn stored_normal_form_reloads() {
    let l = lattice(1, 3);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 5).unwrap();
    let freqs: Frequencies<f64> = pot.frequencies();
    let nf = normal_form::build(&expand::<f64>(&generic(), Arc::clone(&l), 4).unwrap(), &freqs, 2.0, 4, BuildOptions::default())
        .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nf.json");
    std::fs::write(&path, serde_json::to_string(&nf.to_json()).unwrap()).unwrap();
    let back = NormalFormResult::<f64>::from_json(&serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap())
        .unwrap();
    assert_eq!(back.r, 4);
    for m in 3..=4 {
        assert_eq!(back.z_degree(m), nf.z_degree(m));
        assert_eq!(back.chi_degree(m), nf.chi_degree(m));
    }
}
