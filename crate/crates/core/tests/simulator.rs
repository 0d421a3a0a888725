mod common;

use std::sync::Arc;

use common::*;
use nlsnf::experiment::initial_data;
use nlsnf::nonlinearity::SeriesTerm;
use nlsnf::simulator::*;
use nlsnf::*;

fn options(t_end: f64, h: f64, cadence: usize) -> SimulateOptions {
    SimulateOptions { t_end, h, cadence, observables: ObservableConfig { rho: 0.5, n: 4.0, strip_mu: None }, lean: true }
}

#[test]
fn single_mode_mass_is_conserved_over_long_runs() {
    let l = lattice(1, 8);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 1).unwrap();
    let spec = SeriesSpec::parse_preset("power:p=1,a=1").unwrap();
    let z0 = State::from_xi(Arc::clone(&l), [(vec![1], Complex::new(0.1, 0.0))]).unwrap();
    let mut st = StrangStepper::new(&pot.frequencies(), &spec).unwrap();
    let traj = simulate(&mut st, &z0, &options(100.0, 1e-3, 1000)).unwrap();
    let m0 = traj.rows[0].sum_i;
    for r in &traj.rows {
        assert!((r.sum_i - m0).abs() <= 1e-10, "t = {}: {:e}", r.t, r.sum_i - m0);
    }
}

#[test]
fn generic_nonlinearity_energy_error_is_second_order() {
    let l = lattice(1, 6);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 2).unwrap();
    let t = |k1, k2, re, im| SeriesTerm { k1, k2, re, im };
    let spec = SeriesSpec::new(vec![t(2, 1, 0.5, 0.2), t(1, 2, 0.5, -0.2), t(2, 2, 1.0, 0.0)], None, None).unwrap();
    assert!(!spec.is_gauge_invariant());
    let z0 = initial_data(Arc::clone(&l), 0.2, 0.5, 3).unwrap();
    let err = |h: f64| {
        let mut st = StrangStepper::new(&pot.frequencies(), &spec).unwrap();
        assert_eq!(st.scheme(), Scheme::StrangRk4);
        simulate(&mut st, &z0, &options(5.0, h, 1)).unwrap().max_energy_error()
    };
    let ratio = err(0.01) / err(0.005);
    assert!((ratio - 4.0).abs() < 0.5, "ratio {ratio}");
}

#[test]
fn linear_flow_has_no_drift() {
    let l = lattice(2, 3);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 4).unwrap();
    let z0 = initial_data(Arc::clone(&l), 0.1, 0.5, 5).unwrap();
    let mut st = StrangStepper::new(&pot.frequencies(), &SeriesSpec::zero()).unwrap();
    let traj = simulate(&mut st, &z0, &options(10.0, 0.01, 10)).unwrap();
    assert_eq!(traj.rows[0].drift, 0.0);
    assert!(traj.max_drift() <= 1e-12);
}

#[test]
fn strang_is_second_order_and_close_to_the_polynomial_flow() {
    // The grid nonlinearity aliases for multi-mode data, so the splitting is
    // compared with itself for the order and with the Galerkin flow loosely.
    let l = lattice(1, 4);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 6).unwrap();
    let freqs: Frequencies<f64> = pot.frequencies();
    let spec = SeriesSpec::parse_preset("power:p=1,a=1").unwrap();
    let z0 = initial_data(Arc::clone(&l), 0.3, 0.5, 7).unwrap();
    let run = |h: f64| {
        let mut st = StrangStepper::new(&freqs, &spec).unwrap();
        let mut z = z0.clone();
        for _ in 0..(1.0 / h).round() as usize {
            z = st.step(&z, h).unwrap();
        }
        z
    };
    let fine = run(1e-4);
    let (e1, e2) = (run(0.02).sub(&fine).norm_rho(0.0).unwrap(), run(0.01).sub(&fine).norm_rho(0.0).unwrap());
    assert!((e1 / e2 - 4.0).abs() < 0.4, "{e1:e} {e2:e}");

    let p = nlsnf::nonlinearity::expand::<f64>(&spec, Arc::clone(&l), 4).unwrap();
    let galerkin = flow_poly_hamiltonian(Some(&freqs), &p, &z0, 1.0, 1e-3, 1000).unwrap();
    let gap = fine.sub(galerkin.states.last().unwrap()).norm_rho(0.0).unwrap();
    assert!(gap < 1e-3 * z0.norm_rho(0.0).unwrap(), "{gap:e}");
}

#[test]
fn non_real_initial_data_is_rejected() {
    let l = lattice(1, 2);
    let pot = Potential::sample(2.0, 1.0, Arc::clone(&l), 8).unwrap();
    let mut z = State::zero(Arc::clone(&l));
    z.set(Index::new(1, Sign::Plus), Complex::new(1.0, 0.0));
    let mut st = StrangStepper::new(&pot.frequencies(), &SeriesSpec::zero()).unwrap();
    assert!(matches!(simulate(&mut st, &z, &options(1.0, 0.1, 1)), Err(Error::NotReal(_))));
}
