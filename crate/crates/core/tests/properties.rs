use nalgebra::DVector;
use proptest::prelude::*;
use std::f64::consts::PI;

use vqa_poisson::cost::{cost_overlap_route, denominator};
use vqa_poisson::gradient::grad_cost_parameter_shift;
use vqa_poisson::operators::PoissonOperator;
use vqa_poisson::*;

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![
        Just(BoundaryCondition::Periodic),
        Just(BoundaryCondition::Dirichlet),
        Just(BoundaryCondition::Neumann),
    ]
}

/// `(n, layers, θ)` with θ drawn from `[0, 4π]`.
fn circuit_strategy(max_n: usize) -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
    (2..=max_n, 0usize..=3).prop_flat_map(|(n, l)| {
        (Just(n), Just(l), prop::collection::vec(0.0..4.0 * PI, n * (l + 1)))
    })
}

fn regularized_bound(n: usize, bc: BoundaryCondition) -> f64 {
    let a = build_matrix(n, bc, bc.default_epsilon()).unwrap();
    let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap().real_parts();
    let u = classical::solve(&a, &f).unwrap();
    -0.5 * u.u.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reassembly_matches_direct_construction(n in 1usize..=8, bc in bc_strategy(), eps in 0.0f64..1.0) {
        let got = decompose(n, bc, eps).unwrap().reassemble_dense().unwrap();
        let want = build_matrix(n, bc, eps).unwrap();
        prop_assert!((got - want).amax() < 1e-12);
    }

    #[test]
    fn term_denominator_equals_dense_quadratic_form(
        n in 1usize..=8,
        bc in bc_strategy(),
        amps in prop::collection::vec(-1.0f64..1.0, 256),
    ) {
        let dim = 1 << n;
        prop_assume!(amps[..dim].iter().any(|a| a.abs() > 1e-3));
        let psi = Statevector::from_real(&amps[..dim]).unwrap();
        let op = decompose(n, bc, bc.default_epsilon()).unwrap();
        let a = build_matrix(n, bc, bc.default_epsilon()).unwrap();
        let v = DVector::from_vec(psi.real_parts());
        let dense = v.dot(&(&a * &v));
        prop_assert!((denominator(&op, &psi).unwrap() - dense).abs() < 1e-10);
    }

    #[test]
    fn energy_respects_the_variational_bound((n, l, theta) in circuit_strategy(5), bc in bc_strategy()) {
        let op = decompose(n, bc, bc.default_epsilon()).unwrap();
        let c = AnsatzCircuit::new(n, l).unwrap();
        let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap();
        let r = cost(&op, &c, &theta, &f).unwrap();
        prop_assert!(r.energy >= regularized_bound(n, bc) - 1e-9);
        prop_assert!(r.energy <= 0.0);
    }

    #[test]
    fn optimal_scale_minimizes_the_parabola((n, l, theta) in circuit_strategy(4), r in -10.0f64..10.0) {
        let op = decompose(n, BoundaryCondition::Dirichlet, 0.0).unwrap();
        let c = AnsatzCircuit::new(n, l).unwrap();
        let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap();
        let report = cost(&op, &c, &theta, &f).unwrap();
        prop_assert!((report.energy_at_scale(report.r_opt) - report.energy).abs() < 1e-12);
        prop_assert!(report.energy_at_scale(r) >= report.energy - 1e-12);
    }

    #[test]
    fn hadamard_and_overlap_routes_agree((n, l, theta) in circuit_strategy(5), bc in bc_strategy()) {
        let op = decompose(n, bc, bc.default_epsilon()).unwrap();
        let c = AnsatzCircuit::new(n, l).unwrap();
        let u = SourceUnitary::StepFunction;
        let f = prepare_source_state(n, &u).unwrap();
        let a = cost(&op, &c, &theta, &f).unwrap();
        let b = cost_overlap_route(&op, &c, &theta, &u).unwrap();
        prop_assert!((a.energy - b.energy).abs() < 1e-12);
        prop_assert!((a.r_opt - b.r_opt).abs() < 1e-10);
    }

    #[test]
    fn analytic_and_shift_rule_gradients_agree((n, l, theta) in circuit_strategy(4), bc in bc_strategy()) {
        let op = decompose(n, bc, bc.default_epsilon()).unwrap();
        let c = AnsatzCircuit::new(n, l).unwrap();
        let f = prepare_source_state(n, &SourceUnitary::StepFunction).unwrap();
        let a = grad_cost(&op, &c, &theta, &f).unwrap();
        let b = grad_cost_parameter_shift(&op, &c, &theta, &f).unwrap();
        for (x, y) in a.grad.iter().zip(&b.grad) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn gates_preserve_the_norm((n, l, theta) in circuit_strategy(6)) {
        let psi = AnsatzCircuit::new(n, l).unwrap().prepare(&theta).unwrap();
        prop_assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
        prop_assert!(psi.max_imag() < 1e-12);
    }

    #[test]
    fn operator_json_round_trips(n in 1usize..=6, bc in bc_strategy(), eps in 0.0f64..1.0) {
        let op = decompose(n, bc, eps).unwrap();
        prop_assert_eq!(PoissonOperator::from_json(&op.to_json()).unwrap(), op);
    }
}
