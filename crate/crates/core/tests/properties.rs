use proptest::prelude::*;
use rpimon::lattice::{short_time_kernel, LatticeSpec, Potential};
use rpimon::hilbert::max_abs;
use rpimon::nonselective::ensemble_average;
use rpimon::selective::propagate_conditioned;
use rpimon::{build_oscillator, CMatrix, MonitoringChannel, Operator, PhysicalConstants, ReadoutCurve, StateVector, C64};
use std::sync::Arc;

fn herm(d: usize) -> impl Strategy<Value = Operator> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d).prop_map(move |v| {
        let g = CMatrix::from_fn(d, d, |i, j| C64::new(v[i * d + j].0, v[i * d + j].1));
        Operator::hermitian((&g + g.adjoint()) * C64::new(0.5, 0.0)).unwrap()
    })
}

fn state(d: usize) -> impl Strategy<Value = StateVector> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d)
        .prop_filter("nonzero", |v| v.iter().any(|(a, b)| a.abs() + b.abs() > 1e-3))
        .prop_map(|v| StateVector::normalized(rpimon::CVector::from_iterator(v.len(), v.into_iter().map(|(a, b)| C64::new(a, b)))).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditioned_norms_never_increase(
        h in herm(3), a in herm(3), b in herm(3), psi0 in state(3),
        kappa in 0.0f64..3.0, lambda in -2.0f64..2.0,
        readout in prop::collection::vec(-3.0f64..3.0, 1..40),
    ) {
        let consts = PhysicalConstants::default();
        let ch = MonitoringChannel::minimal(a, kappa).unwrap().with_disturbance(lambda, b).unwrap();
        let r = ReadoutCurve::new(0.0, 0.02, readout).unwrap();
        let traj = propagate_conditioned(&psi0, &h, &ch, &r, consts).unwrap();
        for w in traj.states.windows(2) {
            prop_assert!(w[1].norm2() <= w[0].norm2() * (1.0 + 1e-9));
        }
        prop_assert_eq!(traj.final_probability_density, traj.final_state().norm2());
    }

    #[test]
    fn ensemble_average_is_a_density_matrix(
        psi0 in state(2), readouts in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..8),
    ) {
        let consts = PhysicalConstants::default();
        let ch = MonitoringChannel::minimal(rpimon::build_qubit("sx").unwrap(), 1.0).unwrap();
        let h = rpimon::build_qubit("sz").unwrap();
        let trajs: Vec<_> = readouts.into_iter()
            .map(|v| propagate_conditioned(&psi0, &h, &ch, &ReadoutCurve::new(0.0, 0.05, v).unwrap(), consts).unwrap())
            .collect();
        let avg = ensemble_average(&trajs).unwrap();
        prop_assert!((avg[0].trace() - 1.0).abs() < 1e-14);
        for rho in &avg {
            prop_assert!((rho.trace() - 1.0).abs() < 1e-12);
            prop_assert!(rho.min_eigenvalue() > -1e-12);
        }
    }

    #[test]
    fn lattice_kernel_is_symmetric_for_real_potentials(
        c1 in -1.0f64..1.0, c2 in 0.0f64..1.0, a in -2.0f64..2.0, kappa in 0.0f64..2.0, dt in 0.005f64..0.1,
    ) {
        let spec = LatticeSpec::new(31, 4.0, 1.0, Potential::Custom(Arc::new(move |q| c1 * q + c2 * q.powi(4)))).unwrap();
        let k = short_time_kernel(&spec, a, kappa, dt, PhysicalConstants::default()).unwrap();
        prop_assert!(max_abs(&(&k - k.transpose())) <= 1e-12 * max_abs(&k).max(1.0));
    }

    #[test]
    fn oscillator_operators_are_hermitian(d in 2usize..20, m in 0.1f64..5.0, w in 0.1f64..5.0) {
        let osc = build_oscillator(d, m, w, PhysicalConstants::default()).unwrap();
        for op in [&osc.q, &osc.p, &osc.h] {
            prop_assert!(rpimon::hilbert::hermiticity_defect(op.matrix()) == 0.0);
        }
    }
}
