mod common;

use bundle_qm::bundle::FibreDimension;
use bundle_qm::dsl::SymbolTable;
use bundle_qm::linalg::{self, c, CMatrix, C64};
use bundle_qm::paths::{make_path, reparametrize, restrict, PathDescriptor, Reparametrization};
use bundle_qm::transport::{
    compose, derivative_along_path, evolve_state, frame_factorize, metric_consistency_residual, solve_transport,
};
use bundle_qm::*;
use common::*;
use rand::Rng;

fn rest(domain: (f64, f64)) -> Path {
    make_path(
        "rest",
        &PathDescriptor::Rest {
            spatial: vec![0.0, 0.0, 0.0],
            domain,
        },
    )
    .unwrap()
}

fn field(n: usize, hbar: f64, terms: &[(&str, usize, usize)], mode: Mode) -> TransportCoefficients {
    let f = HamiltonianField::from_sources(n, hbar, &SymbolTable::new(4), terms).unwrap();
    TransportCoefficients::from_field(f, mode).unwrap()
}

fn rabi_closed_form(omega: f64, t: f64) -> CMatrix {
    linalg::identity(2) * c((omega * t / 2.0).cos(), 0.0) - pauli(1) * c(0.0, (omega * t / 2.0).sin())
}

#[test]
fn rabi_matches_closed_form_and_matrix_exponential() {
    let omega = 2.0;
    let coeffs = field(2, 1.0, &[("1", 1, 0)], Mode::Geometric);
    let path = rest((0.0, std::f64::consts::PI));
    let t = std::f64::consts::PI;
    let l = solve_transport(&coeffs, &path, 0.0, t, 1e-2, 1e-10).unwrap();
    assert!(linalg::distance(&l.matrix, &rabi_closed_form(omega, t)) < 1e-9);
    let h = pauli(1) * c(omega / 2.0, 0.0);
    let expm = (h * c(0.0, -t)).exp();
    assert!(linalg::distance(&l.matrix, &expm) < 1e-9);
}

#[test]
fn rabi_flip_state() {
    let coeffs = field(2, 1.0, &[("1", 1, 0)], Mode::Geometric);
    let path = rest((0.0, 4.0));
    let tr = Transport::new(coeffs, SolverSettings::default());
    let t = std::f64::consts::PI / 2.0;
    let l = tr.solve(&path, 0.0, t).unwrap();
    let psi = StateVector::from_slice(&[c(1.0, 0.0), c(0.0, 0.0)], path.point(0.0)).unwrap();
    let out = evolve_state(&l, &psi, &path).unwrap();
    assert!((out.coords()[1] - c(0.0, -1.0)).norm() < 1e-9);
    assert!(out.coords()[0].norm() < 1e-9);
    assert_eq!(out.anchor(), &path.point(t));
}

#[test]
fn commuting_time_dependent_generator() {
    let coeffs = field(2, 1.0, &[("cos(s)", 3, 0)], Mode::LabTime);
    let path = rest((0.0, 3.0));
    for t in [0.5, 1.7, 3.0] {
        let l = solve_transport(&coeffs, &path, 0.0, t, 1e-2, 1e-10).unwrap();
        let phase = t.sin();
        let mut want = linalg::zeros(2);
        want[(0, 0)] = C64::from_polar(1.0, -phase);
        want[(1, 1)] = C64::from_polar(1.0, phase);
        assert!(linalg::distance(&l.matrix, &want) < 1e-9, "t = {t}");
    }
}

#[test]
fn hbar_scales_the_generator() {
    let coeffs = field(2, 2.0, &[("0.8", 1, 0), ("0.3", 3, 0)], Mode::Geometric);
    let path = rest((0.0, 2.0));
    let l = solve_transport(&coeffs, &path, 0.0, 2.0, 1e-2, 1e-10).unwrap();
    let h = pauli(1) * c(0.8, 0.0) + pauli(3) * c(0.3, 0.0);
    let want = (h * c(0.0, -2.0 / 2.0)).exp();
    assert!(linalg::distance(&l.matrix, &want) < 1e-9);
}

#[test]
fn backward_solve_matches_inverse_exponential() {
    let coeffs = field(3, 1.0, &[("0.7", 1, 0), ("-0.4", 5, 0), ("0.2", 8, 0)], Mode::Geometric);
    let path = rest((0.0, 2.0));
    let tr = Transport::new(coeffs, SolverSettings::default());
    let fwd = tr.solve(&path, 0.5, 1.8).unwrap();
    let back = tr.invert(&fwd, &path).unwrap();
    assert_eq!((back.from, back.to), (1.8, 0.5));
    let inv = linalg::inverse(&fwd.matrix).unwrap();
    assert!(linalg::distance(&back.matrix, &inv) < 1e-9);
    let again = tr.invert(&back, &path).unwrap();
    assert!(linalg::distance(&again.matrix, &fwd.matrix) < 1e-8);
}

#[test]
fn identity_is_exact_and_needs_no_integration() {
    let mut r = rng(1);
    let inst = random_instance(&mut r, 3, 1.0);
    let l = inst.transport.solve(&inst.path, 0.7, 0.7).unwrap();
    assert_eq!(l.matrix, linalg::identity(3));
    assert_eq!(l.steps, 0);
    let ii = compose(&l, &l).unwrap();
    assert_eq!(ii.matrix, linalg::identity(3));
    let flat = Transport::new(TransportCoefficients::zero(2), SolverSettings::default());
    assert_eq!(
        flat.solve(&rest((0.0, 1.0)), 0.0, 1.0).unwrap().matrix,
        linalg::identity(2)
    );
}

#[test]
fn groupoid_inverse_and_unitarity_on_random_fields() {
    let mut r = rng(2024);
    for case in 0..20 {
        let n = [2, 3, 4][case % 3];
        let inst = random_instance(&mut r, n, 1.0);
        let (s, t, rr) = (
            r.random_range(0.0..2.0),
            r.random_range(0.0..2.0),
            r.random_range(0.0..2.0),
        );
        let tr = &inst.transport;
        let l_st = tr.solve(&inst.path, s, t).unwrap();
        let l_tr = tr.solve(&inst.path, t, rr).unwrap();
        let l_sr = tr.solve(&inst.path, s, rr).unwrap();
        let composed = compose(&l_tr, &l_st).unwrap();
        assert!(
            linalg::distance(&composed.matrix, &l_sr.matrix) < 1e-8,
            "groupoid case {case}"
        );
        let l_ts = tr.solve(&inst.path, t, s).unwrap();
        assert!(
            linalg::distance(&(&l_st.matrix * &l_ts.matrix), &linalg::identity(n)) < 1e-8,
            "inverse case {case}"
        );
        let unit = tr.solve(&inst.path, s.min(1.0), s.min(1.0) + 1.0).unwrap();
        let g = FibreMetric::identity(FibreDimension::new(n).unwrap());
        let drift = metric_consistency_residual(&unit, &g, &inst.path.point(0.0), &inst.path.point(1.0)).unwrap();
        assert!(drift < 1e-8, "unitarity case {case}: {drift:e}");
    }
}

#[test]
fn compose_checks_its_arguments() {
    let mut r = rng(3);
    let inst = random_instance(&mut r, 2, 1.0);
    let a = inst.transport.solve(&inst.path, 0.0, 0.5).unwrap();
    let b = inst.transport.solve(&inst.path, 0.6, 1.0).unwrap();
    assert!(matches!(compose(&b, &a), Err(Error::CompositionMismatch(_))));
    let other = inst.path.clone().with_id("other");
    let c2 = inst.transport.solve(&other, 0.5, 1.0).unwrap();
    assert!(matches!(compose(&c2, &a), Err(Error::CompositionMismatch(_))));
}

#[test]
fn linearity_of_state_evolution() {
    let mut r = rng(4);
    let inst = random_instance(&mut r, 3, 1.0);
    let l = inst.transport.solve(&inst.path, 0.0, 1.5).unwrap();
    let x = inst.path.point(0.0);
    for _ in 0..3 {
        let u = random_direction(&mut r, 3);
        let v = random_direction(&mut r, 3);
        let (alpha, beta) = (c(r.random_range(-2.0..2.0), 0.3), c(-0.5, r.random_range(-2.0..2.0)));
        let mix: Vec<C64> = u.iter().zip(&v).map(|(a, b)| alpha * a + beta * b).collect();
        let eu = evolve_state(&l, &StateVector::from_slice(&u, x.clone()).unwrap(), &inst.path).unwrap();
        let ev = evolve_state(&l, &StateVector::from_slice(&v, x.clone()).unwrap(), &inst.path).unwrap();
        let emix = evolve_state(&l, &StateVector::from_slice(&mix, x.clone()).unwrap(), &inst.path).unwrap();
        let expect = eu.coords() * alpha + ev.coords() * beta;
        assert!(linalg::vector_norm(&(emix.coords() - expect)) < 1e-12);
    }
}

#[test]
fn evolve_state_checks_anchor_and_dimension() {
    let mut r = rng(5);
    let inst = random_instance(&mut r, 2, 1.0);
    let l = inst.transport.solve(&inst.path, 0.0, 1.0).unwrap();
    let wrong_anchor = StateVector::from_slice(&[c(1.0, 0.0), c(0.0, 0.0)], inst.path.point(0.5)).unwrap();
    assert!(matches!(
        evolve_state(&l, &wrong_anchor, &inst.path),
        Err(Error::AnchorMismatch { .. })
    ));
    let wrong_dim = StateVector::from_slice(&[c(1.0, 0.0); 3], inst.path.point(0.0)).unwrap();
    assert!(matches!(
        evolve_state(&l, &wrong_dim, &inst.path),
        Err(Error::DimensionMismatch { .. })
    ));
}

#[test]
fn reparametrization_invariance_in_geometric_mode() {
    let mut r = rng(6);
    for n in [2, 3] {
        let inst = random_instance(&mut r, n, 1.0);
        let base = restrict(&inst.path, 0.0, 1.0).unwrap();
        let q = reparametrize(
            &base,
            &Reparametrization::power(2.0, (0.0, 1.0), (0.0, 1.0)),
            (0.0, 1.0),
        )
        .unwrap();
        for (s1, s2) in [(0.0, 1.0), (0.3, 0.8), (0.9, 0.2)] {
            let lq = inst.transport.solve(&q, s1, s2).unwrap();
            let lp = inst.transport.solve(&base, s1 * s1, s2 * s2).unwrap();
            assert!(linalg::distance(&lq.matrix, &lp.matrix) < 1e-8);
        }
    }
}

#[test]
fn lab_time_mode_is_not_reparametrization_invariant() {
    let coeffs = field(2, 1.0, &[("cos(x0)", 1, 0), ("0.5", 3, 0)], Mode::LabTime);
    let tr = Transport::new(coeffs, SolverSettings::default());
    let p = rest((0.0, 1.0));
    let q = reparametrize(&p, &Reparametrization::power(2.0, (0.0, 1.0), (0.0, 1.0)), (0.0, 1.0)).unwrap();
    let lq = tr.solve(&q, 0.0, 1.0).unwrap();
    let lp = tr.solve(&p, 0.0, 1.0).unwrap();
    assert!(linalg::distance(&lq.matrix, &lp.matrix) > 1e-3);
}

#[test]
fn rest_worldline_geometric_equals_lab_time_for_static_fields() {
    let geo = field(2, 1.0, &[("0.4*x0", 1, 0), ("0.9", 3, 0)], Mode::Geometric);
    let lab = field(2, 1.0, &[("0.4*x0", 1, 0), ("0.9", 3, 0)], Mode::LabTime);
    let p = rest((0.0, 2.0));
    let a = solve_transport(&geo, &p, 0.0, 2.0, 1e-2, 1e-10).unwrap();
    let b = solve_transport(&lab, &p, 0.0, 2.0, 1e-2, 1e-10).unwrap();
    assert_eq!(a.matrix, b.matrix);
}

#[test]
fn locality_under_restriction() {
    let mut r = rng(7);
    let inst = random_instance(&mut r, 3, 1.0);
    let sub = restrict(&inst.path, 0.4, 1.3).unwrap();
    let a = inst.transport.solve(&sub, 0.5, 1.2).unwrap();
    let b = inst.transport.solve(&inst.path, 0.5, 1.2).unwrap();
    assert!(linalg::distance(&a.matrix, &b.matrix) < 1e-10);
}

#[test]
fn frame_factorization() {
    let mut r = rng(8);
    let inst = random_instance(&mut r, 2, 1.0);
    let frame = frame_factorize(&inst.transport, &inst.path, 0.9).unwrap();
    assert_eq!(frame.at(0.9).unwrap(), linalg::identity(2));
    for (s, t) in [(0.1, 1.7), (1.9, 0.3)] {
        let direct = inst.transport.solve(&inst.path, s, t).unwrap();
        assert!(linalg::distance(&frame.transport(s, t).unwrap(), &direct.matrix) < 1e-8);
    }
    let flat = Transport::new(TransportCoefficients::zero(2), SolverSettings::default());
    let ff = frame_factorize(&flat, &inst.path, 0.0).unwrap();
    assert_eq!(ff.at(1.3).unwrap(), linalg::identity(2));
}

#[test]
fn transported_sections_are_parallel() {
    let mut r = rng(9);
    let inst = random_instance(&mut r, 2, 1.0);
    let psi0 = StateVector::from_slice(&[c(0.6, 0.0), c(0.0, 0.8)], inst.path.point(0.0)).unwrap();
    let tr = inst.transport.with_settings(SolverSettings::default().with_tol(1e-12));
    let section = |s: f64| -> Result<StateVector> { evolve_state(&tr.solve(&inst.path, 0.0, s)?, &psi0, &inst.path) };
    let d1 = derivative_along_path(section, tr.coefficients(), &inst.path, 1.0, 1e-2).unwrap();
    let d2 = derivative_along_path(section, tr.coefficients(), &inst.path, 1.0, 5e-3).unwrap();
    let (n1, n2) = (linalg::vector_norm(&d1), linalg::vector_norm(&d2));
    assert!(n1 < 1e-3);
    assert!((3.5..4.5).contains(&(n1 / n2)), "ratio {}", n1 / n2);
}

#[test]
fn plain_derivative_under_flat_transport() {
    let flat = TransportCoefficients::zero(2);
    let p = rest((0.0, 2.0));
    let ramp = |s: f64| StateVector::from_slice(&[c(s, 0.0), c(0.0, 0.0)], p.point(s));
    let d = derivative_along_path(ramp, &flat, &p, 1.0, 1e-3).unwrap();
    assert!((d[0] - c(1.0, 0.0)).norm() < 1e-12 && d[1].norm() < 1e-12);
    let constant = |s: f64| StateVector::from_slice(&[c(0.3, 0.1), c(0.2, 0.0)], p.point(s));
    let d = derivative_along_path(constant, &flat, &p, 1.0, 1e-3).unwrap();
    assert!(linalg::vector_norm(&d) < 1e-12);
    assert!(matches!(
        derivative_along_path(constant, &flat, &p, 1.0, 0.0),
        Err(Error::InvalidStep(_))
    ));
}

#[test]
fn non_hermitian_fixture_breaks_metric_consistency() {
    let gamma = pauli(1) * c(0.0, 1.0) + pauli(3) * c(0.1, 0.0);
    let coeffs = TransportCoefficients::custom(2, 1.0, move |_, _| gamma.clone());
    let p = rest((0.0, 2.0));
    let g = FibreMetric::identity(FibreDimension::new(2).unwrap());
    let tr = Transport::new(coeffs, SolverSettings::default());
    let mut previous = 0.0;
    for t in [0.25, 0.5, 1.0, 2.0] {
        let l = tr.solve(&p, 0.0, t).unwrap();
        let res = metric_consistency_residual(&l, &g, &p.point(0.0), &p.point(t)).unwrap();
        assert!(res > previous);
        previous = res;
        if t == 1.0 {
            assert!(res > 1e-4);
        }
    }
}

#[test]
fn metric_consistency_trivial_cases() {
    let g = FibreMetric::diagonal(&[2.0, 1.0]).unwrap();
    let p = rest((0.0, 1.0));
    let l = EvolutionOperator::identity(2, p.id(), 0.3);
    assert_eq!(
        metric_consistency_residual(&l, &g, &p.point(0.0), &p.point(1.0)).unwrap(),
        0.0
    );
}

#[test]
fn integration_failure_is_reported() {
    let coeffs = field(2, 1.0, &[("1", 1, 0)], Mode::Geometric);
    let settings = SolverSettings {
        step: 0.1,
        tol: 1e-12,
        step_floor: 0.05,
    };
    let tr = Transport::new(coeffs, settings);
    let p = rest((0.0, 1.0));
    assert!(matches!(tr.solve(&p, 0.0, 1.0), Err(Error::IntegrationFailure { .. })));
}

#[test]
fn parameters_outside_the_domain_are_rejected() {
    let mut r = rng(10);
    let inst = random_instance(&mut r, 2, 1.0);
    assert!(matches!(
        inst.transport.solve(&inst.path, 0.0, 2.5),
        Err(Error::OutOfDomain { .. })
    ));
}
