use causalforge::conversion::{execute, majorizes, plan_deterministic, solve_lambda};
use causalforge::linalg::hopping_residual;
use causalforge::process::{cj_state, random_causal_process};
use causalforge::random::{random_hermitian, random_unitary, stream_rng};
use causalforge::switch::make_generalized_switch;
use causalforge::{
    is_compatible_order, is_valid_process, link_product, BinaryDistribution, CausalOrder, FactorLabel,
    GeneralizedSwitchSpec, LinearMap, Role,
};
use proptest::prelude::*;

fn labels(dims: &[usize]) -> Vec<FactorLabel> {
    dims.iter().enumerate().map(|(i, &d)| FactorLabel::ancilla(format!("x{i}"), d)).collect()
}

fn dist() -> impl Strategy<Value = BinaryDistribution> {
    (0.0f64..=1.0).prop_map(|p| BinaryDistribution::new(p, 1.0 - p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hopping_holds_for_any_traced_subset(seed: u64, d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4, mask in 1u8..8) {
        let mut rng = stream_rng(seed, 0);
        let f = labels(&[d0, d1, d2]);
        let w = random_hermitian(f.clone(), &mut rng).unwrap();
        let y = random_hermitian(f, &mut rng).unwrap();
        let names: Vec<&str> = ["x0", "x1", "x2"].into_iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, n)| n).collect();
        prop_assert!(hopping_residual(&w, &y, &names).unwrap() < 1e-10);
    }

    #[test]
    fn kronecker_is_associative_and_trace_multiplicative(seed: u64, d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..3) {
        let mut rng = stream_rng(seed, 0);
        let a = random_hermitian(labels(&[d0]), &mut rng).unwrap();
        let b = random_hermitian(vec![FactorLabel::ancilla("y", d1)], &mut rng).unwrap();
        let c = random_hermitian(vec![FactorLabel::ancilla("z", d2)], &mut rng).unwrap();
        let left = a.tensor(&b).unwrap().tensor(&c).unwrap();
        let right = a.tensor(&b.tensor(&c).unwrap()).unwrap();
        prop_assert!(left.max_abs_diff(&right).unwrap() < 1e-12);
        let t = a.trace() * b.trace() * c.trace();
        prop_assert!((left.trace() - t).norm() < 1e-9 * (1.0 + t.norm()));
    }

    #[test]
    fn partial_trace_commutes_with_permutation(seed: u64, d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4) {
        let mut rng = stream_rng(seed, 0);
        let w = random_hermitian(labels(&[d0, d1, d2]), &mut rng).unwrap();
        let a = w.partial_trace(&["x1"]).unwrap().permute_factors(&["x2", "x0"]).unwrap();
        let b = w.permute_factors(&["x2", "x1", "x0"]).unwrap().partial_trace(&["x1"]).unwrap();
        prop_assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn subindex_is_a_trace_preserving_projection(seed: u64, d0 in 1usize..4, d1 in 1usize..4) {
        let mut rng = stream_rng(seed, 0);
        let w = random_hermitian(labels(&[d0, d1]), &mut rng).unwrap();
        let once = w.subindex(&["x0"]).unwrap();
        let twice = once.subindex(&["x0"]).unwrap();
        prop_assert!(once.max_abs_diff(&twice).unwrap() < 1e-12);
        prop_assert!((once.trace() - w.trace()).norm() < 1e-10);
    }

    #[test]
    fn link_product_composes_channels(seed: u64, d in 2usize..4) {
        let mut rng = stream_rng(seed, 0);
        let (u, v) = (random_unitary(d, &mut rng), random_unitary(d, &mut rng));
        let x = FactorLabel::ancilla("x", d);
        let y = FactorLabel::ancilla("y", d);
        let z = FactorLabel::ancilla("z", d);
        let first = cj_state(&LinearMap::wire(x.clone(), y.clone(), u.clone()).unwrap(), 1e-10).unwrap();
        let second = cj_state(&LinearMap::wire(y, z.clone(), v.clone()).unwrap(), 1e-10).unwrap();
        let both = cj_state(&LinearMap::wire(x, z, &v * &u).unwrap(), 1e-10).unwrap();
        let linked = link_product(&second, &first).unwrap();
        prop_assert!(linked.max_abs_diff(&both).unwrap() < 1e-10);
    }

    #[test]
    fn random_causal_processes_are_valid_and_ordered(seed: u64, b_first: bool) {
        let mut rng = stream_rng(seed, 0);
        let order = if b_first { CausalOrder::BToA } else { CausalOrder::AToB };
        let w = random_causal_process(order, 2, &mut rng);
        prop_assert!(is_valid_process(&w, 1e-9).pass);
        prop_assert!(is_compatible_order(&w, order, 1e-9).0);
    }

    #[test]
    fn majorization_is_total_for_binary_distributions(p in dist(), q in dist()) {
        prop_assert!(majorizes(p, q) || majorizes(q, p));
    }

    #[test]
    fn lambda_reconstructs_the_source(p in dist(), q in dist()) {
        let (p, q) = if majorizes(q, p) { (p, q) } else { (q, p) };
        let (a, b) = solve_lambda(p, q).unwrap();
        prop_assert!(a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() < 1e-12);
        prop_assert!((a * q.p0 + b * q.p1 - p.p0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn deterministic_conversion_reaches_target(seed: u64, p in dist(), q in dist()) {
        let (p, q) = if majorizes(q, p) { (p, q) } else { (q, p) };
        let mut rng = stream_rng(seed, 0);
        let source = GeneralizedSwitchSpec::random_constrained(p, 2, &mut rng);
        let target = GeneralizedSwitchSpec::random_constrained(q, 2, &mut rng);
        let plan = plan_deterministic(&source, &target).unwrap();
        let out = execute(&plan, &make_generalized_switch(&source).unwrap()).unwrap();
        let want = make_generalized_switch(&target).unwrap().outer();
        prop_assert!(out.op().max_abs_diff(&want).unwrap() < 1e-9);
        prop_assert_eq!(out.dim_of(Role::Control), 2);
    }
}
