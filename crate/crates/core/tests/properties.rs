//! Randomized invariants across modules.

use covbloch_core::bloch::{inversion_defect, unitarity_defect};
use covbloch_core::covering::{build_covering, CoveringFunction, DomainConfig};
use covbloch_core::group::{GroupElement, GroupSpec};
use covbloch_core::harmonic::{dual_grid, fourier, parseval_defect, DualField, GroupFunction};
use covbloch_core::operators::{assemble_invariant, assemble_twisted, heat_kernel, Potential};
use covbloch_core::schulman::{image_sum, image_sum_kernel};
use covbloch_core::{CMatrix, C64};
use proptest::prelude::*;
use std::sync::Arc;

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn spec_strategy() -> impl Strategy<Value = GroupSpec> {
    prop_oneof![
        (1u32..=9).prop_map(|n| GroupSpec::cyclic(n).unwrap()),
        prop::collection::vec(2u32..=4, 2..=3).prop_map(|o| GroupSpec::product(&o).unwrap()),
        (1usize..=3).prop_map(|d| GroupSpec::free_abelian(d).unwrap()),
        Just(GroupSpec::klein_bottle()),
    ]
}

fn element(spec: &GroupSpec, raw: &[i64]) -> GroupElement {
    let coords: Vec<i64> = match spec.finite_orders() {
        Some(ns) => ns.iter().zip(raw).map(|(&n, &c)| c.rem_euclid(n as i64)).collect(),
        None => raw[..spec.rank()].to_vec(),
    };
    spec.element(&coords).unwrap()
}

fn cvec(len: usize) -> impl Strategy<Value = Vec<C64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| C64::new(a, b)), len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn group_axioms(spec in spec_strategy(), raw in prop::collection::vec(-6i64..6, 9)) {
        let a = element(&spec, &raw[0..3]);
        let b = element(&spec, &raw[3..6]);
        let c = element(&spec, &raw[6..9]);
        let ab_c = spec.multiply(&spec.multiply(&a, &b).unwrap(), &c).unwrap();
        let a_bc = spec.multiply(&a, &spec.multiply(&b, &c).unwrap()).unwrap();
        prop_assert_eq!(ab_c, a_bc);
        let inv = spec.inverse(&a).unwrap();
        prop_assert_eq!(spec.multiply(&a, &inv).unwrap(), spec.identity());
        prop_assert_eq!(spec.multiply(&inv, &a).unwrap(), spec.identity());
        prop_assert_eq!(spec.norm(&inv), spec.norm(&a));
    }

    #[test]
    fn fourier_of_delta_is_evaluation(spec in spec_strategy(), raw in prop::collection::vec(-3i64..3, 3)) {
        let g = element(&spec, &raw);
        let grid = dual_grid(&spec, 6).unwrap();
        let f = fourier(&GroupFunction::delta(g.clone()), &grid).unwrap();
        let expect = DualField::of_element(&grid, &g).unwrap();
        prop_assert!(f.max_node_distance(&expect) < 1e-14);
    }

    #[test]
    fn parseval_on_finite_groups(n in 1u32..=12, seed in cvec(24)) {
        let spec = GroupSpec::cyclic(n).unwrap();
        let grid = dual_grid(&spec, 1).unwrap();
        let elems = spec.enumerate_ball(spec.diameter().unwrap());
        let f1 = GroupFunction::from_pairs(elems.iter().cloned().zip(seed[..12].iter().copied()));
        let f2 = GroupFunction::from_pairs(elems.iter().cloned().zip(seed[12..].iter().copied()));
        prop_assert!(parseval_defect(&f1, &f2, &grid).unwrap().value < 1e-12);
    }

    #[test]
    fn action_is_compatible_with_multiplication(
        n in 2u32..=6, m in 1usize..=4, raw in prop::collection::vec(0i64..6, 2), v in 0usize..24
    ) {
        let spec = GroupSpec::cyclic(n).unwrap();
        let g = build_covering(&spec, &DomainConfig::new(m, 1.0, 0)).unwrap();
        let v = v % g.vertex_count();
        let s = element(&spec, &raw[0..1]);
        let r = element(&spec, &raw[1..2]);
        let lhs = g.act(&s, g.act(&r, v).unwrap()).unwrap();
        let rhs = g.act(&spec.multiply(&s, &r).unwrap(), v).unwrap();
        prop_assert_eq!(lhs, rhs);
        prop_assert_eq!(g.project(lhs), g.project(v));
    }

    #[test]
    fn bloch_is_unitary_on_cyclic_covers(n in 1u32..=6, m in 1usize..=5, seed in cvec(30)) {
        let spec = GroupSpec::cyclic(n).unwrap();
        let g = build_covering(&spec, &DomainConfig::new(m, 1.0, 0)).unwrap();
        let vals: Vec<C64> = (0..g.vertex_count()).map(|i| seed[i % seed.len()] * (1.0 + i as f64)).collect();
        let f = CoveringFunction::from_values(&g, vals).unwrap();
        let grid = dual_grid(&spec, 1).unwrap();
        let scale = f.norm_sqr(&g);
        prop_assert!(unitarity_defect(&g, &f, &grid).unwrap().value <= 1e-12 * scale.max(1.0));
        prop_assert!(inversion_defect(&g, &f, &grid).unwrap().value <= 1e-12 * scale.sqrt().max(1.0));
    }

    #[test]
    fn heat_kernel_semigroup_and_positivity(
        n in 1u32..=4, m in 2usize..=4, v in prop::collection::vec(-1.0f64..1.0, 4), s in 0.01f64..0.5, t in 0.01f64..0.5
    ) {
        let spec = GroupSpec::cyclic(n).unwrap();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(m, 1.0, 0)).unwrap());
        let h = assemble_invariant(&g, &Potential::table(v[..m].to_vec()).unwrap()).unwrap();
        let ks = heat_kernel(&h, s).unwrap().operator_matrix().unwrap();
        let kt = heat_kernel(&h, t).unwrap().operator_matrix().unwrap();
        let kst = heat_kernel(&h, s + t).unwrap().operator_matrix().unwrap();
        prop_assert!(max_abs(&(&ks * &kt - &kst)) < 1e-11 * max_abs(&kst).max(1.0));
        let k = heat_kernel(&h, s).unwrap();
        prop_assert!(k.values().iter().all(|z| z.re > 0.0 && z.im.abs() < 1e-14 * z.re.max(1.0)));
        prop_assert!(k.symmetry_defect() < 1e-12 * max_abs(k.values()));
    }

    #[test]
    fn image_sums_fold_onto_twisted_kernels(
        n in 2u32..=6, m in 1usize..=4, k in 0u32..6, v in prop::collection::vec(-1.0f64..1.0, 4), tau in 0.02f64..1.5
    ) {
        let spec = GroupSpec::cyclic(n).unwrap();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(m, 1.0, 0)).unwrap());
        let pot = Potential::table(v[..m].to_vec()).unwrap();
        let kernel = heat_kernel(&assemble_invariant(&g, &pot).unwrap(), tau).unwrap();
        let grid = dual_grid(&spec, 1).unwrap();
        let node = &grid.nodes()[(k % n) as usize];
        let direct = heat_kernel(&assemble_twisted(&g, &pot, &node.irrep).unwrap(), tau).unwrap();
        let images = image_sum_kernel(&kernel, &node.irrep, spec.diameter().unwrap()).unwrap();
        prop_assert!(max_abs(&(images.kernel.blocks() - direct.blocks())) < 1e-10);
        prop_assert_eq!(images.tail, 0.0);
    }

    #[test]
    fn reported_tail_bounds_remainder_on_line(tau in 0.05f64..0.4, theta in 0.0f64..std::f64::consts::TAU, x in 0usize..6, y in 0usize..6) {
        let spec = GroupSpec::free_abelian(1).unwrap();
        let g = Arc::new(build_covering(&spec, &DomainConfig::new(6, 1.0, 9)).unwrap());
        let h = assemble_invariant(&g, &Potential::zero(6)).unwrap();
        let sources: Vec<usize> = (0..6).map(|b| g.rep(b)).collect();
        let k = h.kernel_columns(covbloch_core::operators::KernelTime::Heat(tau), &sources).unwrap();
        let lam = covbloch_core::harmonic::irrep_at(&spec, covbloch_core::harmonic::DualPoint::Torus(vec![theta])).unwrap();
        let full = image_sum(&k, &lam, x, y, 8).unwrap();
        // beyond the Gaussian radius the shells decay and the tail estimate is an upper bound
        let start = (4.0 * tau.sqrt()).ceil() as u64 + 1;
        let mut last = f64::INFINITY;
        for r in start..=5 {
            let part = image_sum(&k, &lam, x, y, r).unwrap();
            // below the rounding floor of the eigensolver the shells are noise
            let floor = 1e-13 * max_abs(&full.value);
            if part.last_shell < 10.0 * floor {
                break;
            }
            prop_assert!(part.last_shell <= last);
            last = part.last_shell;
            let remainder = max_abs(&(&full.value - &part.value));
            prop_assert!(part.tail + floor >= remainder, "r={} tail={} remainder={}", r, part.tail, remainder);
        }
    }
}
