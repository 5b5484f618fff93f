//! Property tests for the structural invariants of each layer.

use proptest::prelude::*;

use quenchlab::config::PowerTerm;
use quenchlab::disorder::{draw_sample, CouplingDistribution, InteractionCatalog};
use quenchlab::gibbs::{GibbsState, ObservableMoments};
use quenchlab::model::{
    all_pairs, assumption2_norm, build_hamiltonian, build_order_operator, field_catalog, heisenberg_catalog,
    ising_catalog, OrderOperatorSpec, PerturbedModel,
};
use quenchlab::replica::{rsb_perturbation, OverlapSpec};
use quenchlab::selfcheck::random_hermitian;
use quenchlab::spin_algebra::{
    commutator, embed, operator_norm, spin_matrices, su2_rotate, Axis, SiteSet, SpinMagnitude,
};
use quenchlab::stats::VarianceDecomposition;

fn spin_strategy() -> impl Strategy<Value = SpinMagnitude> {
    (1u32..=4).prop_map(SpinMagnitude::from_two_s)
}

fn axis_strategy() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
}

fn unit_axis() -> impl Strategy<Value = [f64; 3]> {
    (0.0f64..std::f64::consts::PI, 0.0f64..std::f64::consts::TAU)
        .prop_map(|(theta, phi)| [theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()])
}

fn gaussian() -> CouplingDistribution {
    CouplingDistribution::Gaussian { mean: 0.0, std: 1.0 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embedding_is_multiplicative(spin in spin_strategy(), site in 0usize..3, a in axis_strategy(), b in axis_strategy()) {
        let sites = SiteSet::new(3);
        let sm = spin_matrices(spin);
        let (la, lb) = (sm.get(a).clone(), sm.get(b).clone());
        let product = la.matmul(&lb).unwrap();
        let lhs = embed(&[(site, product)], &sites).unwrap();
        let rhs = embed(&[(site, la)], &sites).unwrap().matmul(&embed(&[(site, lb)], &sites).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-12);
    }

    #[test]
    fn disjoint_sites_commute_exactly(spin in spin_strategy(), i in 0usize..3, j in 0usize..3, a in axis_strategy(), b in axis_strategy()) {
        prop_assume!(i != j);
        let sites = SiteSet::new(3);
        let sm = spin_matrices(spin);
        let x = embed(&[(i, sm.get(a).clone())], &sites).unwrap();
        let y = embed(&[(j, sm.get(b).clone())], &sites).unwrap();
        prop_assert_eq!(commutator(&x, &y).unwrap().max_abs_entry(), 0.0);
    }

    #[test]
    fn norm_is_submultiplicative_and_rotation_invariant(seed in any::<u64>(), axis in unit_axis(), angle in -6.0f64..6.0) {
        let a = random_hermitian(2, seed, 1.0).unwrap();
        let b = random_hermitian(2, seed.wrapping_add(1), 1.0).unwrap();
        let ab = a.matmul(&b).unwrap();
        prop_assert!(operator_norm(&ab) <= operator_norm(&a) * operator_norm(&b) * (1.0 + 1e-12));
        let rotated = su2_rotate(&a, axis, angle).unwrap();
        prop_assert!((operator_norm(&rotated) - operator_norm(&a)).abs() <= 1e-10 * operator_norm(&a).max(1.0));
    }

    #[test]
    fn hamiltonian_is_linear_in_the_couplings(seed in any::<u64>(), s in -2.0f64..2.0) {
        let sites = SiteSet::new(3);
        let cat = heisenberg_catalog(&sites.nearest_neighbor_bonds(true), &gaussian()).unwrap();
        let spin = SpinMagnitude::HALF;
        let x = draw_sample(&cat, seed, 0);
        let y = draw_sample(&cat, seed, 1);
        let mut combo = x.clone();
        combo.values = x.values.iter().zip(&y.values).map(|(a, b)| a + s * b).collect();
        let hx = build_hamiltonian(&cat, &x, &sites, spin).unwrap();
        let hy = build_hamiltonian(&cat, &y, &sites, spin).unwrap();
        let hc = build_hamiltonian(&cat, &combo, &sites, spin).unwrap();
        prop_assert!(hc.max_abs_diff(&hx.add_scaled(s, &hy).unwrap()).unwrap() <= 1e-12);
    }

    #[test]
    fn exchange_models_are_rotation_invariant(seed in any::<u64>(), spin in spin_strategy(), axis in unit_axis(), angle in -6.0f64..6.0) {
        let sites = SiteSet::new(3);
        let cat = heisenberg_catalog(&sites.nearest_neighbor_bonds(false), &gaussian()).unwrap();
        let h = build_hamiltonian(&cat, &draw_sample(&cat, seed, 0), &sites, spin).unwrap();
        prop_assert!(su2_rotate(&h, axis, angle).unwrap().max_abs_diff(&h).unwrap() <= 1e-10);
    }

    #[test]
    fn field_perturbation_respects_its_norm(seed in any::<u64>(), lambda in -3.0f64..3.0, n in 2usize..5, staggered in any::<bool>()) {
        let sites = SiteSet::new(n);
        let spin = SpinMagnitude::HALF;
        let cat = heisenberg_catalog(&sites.nearest_neighbor_bonds(false), &gaussian()).unwrap();
        let h0 = build_hamiltonian(&cat, &draw_sample(&cat, seed, 0), &sites, spin).unwrap();
        let spec = if staggered { OrderOperatorSpec::staggered(Axis::Z) } else { OrderOperatorSpec::uniform(Axis::X) };
        let order_op = build_order_operator(&spec, &sites, spin).unwrap();
        let c_o = operator_norm(&order_op);
        let model = PerturbedModel { h0: h0.clone(), order_op, n_sites: n, lambda };
        let h = model.perturb().unwrap();
        prop_assert!(h.is_hermitian());
        prop_assert!(operator_norm(&h.sub(&h0).unwrap()) <= n as f64 * lambda.abs() * c_o * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn diagonal_pairs_have_no_double_commutator(seed in any::<u64>(), n in 2usize..5) {
        let sites = SiteSet::new(n);
        let cat = ising_catalog(&all_pairs(n), &gaussian(), 1.0).unwrap();
        let h = build_hamiltonian(&cat, &draw_sample(&cat, seed, 0), &sites, SpinMagnitude::ONE).unwrap();
        let o = build_order_operator(&OrderOperatorSpec::staggered(Axis::Z), &sites, SpinMagnitude::ONE).unwrap();
        prop_assert_eq!(assumption2_norm(&h, &o).unwrap(), 0.0);
    }

    #[test]
    fn samples_regenerate_bit_for_bit(seed in any::<u64>(), index in any::<u64>(), n in 1usize..6) {
        let cat = field_catalog(n, Axis::Z, &CouplingDistribution::Uniform { lo: -1.0, hi: 2.0 }).unwrap();
        let a = draw_sample(&cat, seed, index);
        let b = draw_sample(&cat, seed, index);
        prop_assert_eq!(a.values.len(), n);
        prop_assert!(a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn catalogs_round_trip_through_toml(n in 2usize..6, periodic in any::<bool>()) {
        let sites = SiteSet::new(n);
        let mut terms = heisenberg_catalog(&sites.nearest_neighbor_bonds(periodic && n > 2), &gaussian()).unwrap().terms;
        terms.extend(field_catalog(n, Axis::Y, &CouplingDistribution::Constant { value: 0.5 }).unwrap().terms);
        let cat = InteractionCatalog::new(terms).unwrap();
        prop_assert_eq!(InteractionCatalog::from_toml(&cat.to_toml()).unwrap(), cat);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn pressure_is_convex_and_order_is_monotone_in_the_field(seed in any::<u64>(), beta in 0.2f64..3.0) {
        let sites = SiteSet::new(3);
        let spin = SpinMagnitude::HALF;
        let cat = heisenberg_catalog(&sites.nearest_neighbor_bonds(false), &gaussian()).unwrap();
        let h0 = build_hamiltonian(&cat, &draw_sample(&cat, seed, 0), &sites, spin).unwrap();
        let order_op = build_order_operator(&OrderOperatorSpec::uniform(Axis::Z), &sites, spin).unwrap();
        let grid: Vec<f64> = (-6..=6).map(|k| 0.1 * k as f64).collect();
        let mut psi = Vec::new();
        let mut order = Vec::new();
        for &lambda in &grid {
            let model = PerturbedModel { h0: h0.clone(), order_op: order_op.clone(), n_sites: 3, lambda };
            let state = GibbsState::from_hamiltonian(&model.perturb().unwrap(), beta).unwrap();
            psi.push(state.psi());
            order.push(state.expectation(&order_op).unwrap());
        }
        for w in psi.windows(3) {
            prop_assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-9);
        }
        for w in order.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-10);
        }
    }

    #[test]
    fn variance_terms_are_nonnegative_and_additive(pairs in prop::collection::vec((-1.0f64..1.0, 0.0f64..0.5), 3..60)) {
        let moments: Vec<ObservableMoments> = pairs
            .iter()
            .map(|&(m, v)| ObservableMoments { mean: m, second: m * m + v, duhamel: m * m + 0.5 * v })
            .collect();
        let d = VarianceDecomposition::from_moments(&moments);
        prop_assert!(d.gibbs.value >= 0.0 && d.sample.value >= 0.0 && d.total.value >= 0.0);
        prop_assert!(d.additive());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn overlap_polynomials_respect_their_norm_bound(spin in spin_strategy(), axis in axis_strategy(), c1 in -2.0f64..2.0, c2 in -2.0f64..2.0) {
        let sites = SiteSet::new(2);
        let mut spec = OverlapSpec::single_sites(2, axis);
        spec.terms = vec![PowerTerm { power: 1, coeff: c1 }, PowerTerm { power: 2, coeff: c2 }];
        let r = rsb_perturbation(&spec, &sites, 2, spin, 4096).unwrap();
        prop_assert!(r.is_hermitian());
        prop_assert!(operator_norm(&r) <= spec.rsb_bound(spin) * (1.0 + 1e-12));
    }
}
