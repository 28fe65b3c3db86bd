//! Property suites over seeded random chains.

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use metastab::chain::apply_generator;
use metastab::chain::{
    adjoint, dirichlet_form, dirichlet_form_quadratic, is_reversible, stationarity_residual,
    stationary, symmetric_part, Chain,
};
use metastab::io::{read_chain_spec, write_chain_spec};
use metastab::models::ZeroRange;
use metastab::pathsim::{occupation_time, simulate, time_change, Start};
use metastab::potential::{equilibrium_potential, sector_ratio, sector_value};
use metastab::random::{random_chain, random_disjoint_pair, random_partition, random_vector, rng};
use metastab::reduction::coarse_rates;
use metastab::transforms::{cycle_decompose, reflected_chain, trace_chain};
use metastab::uniformization::{poisson_weights, transient};

fn chain_from(seed: u64, n: usize, reversible: bool) -> Chain {
    let mut r = rng(seed, 0);
    let density = r.gen_range(0.05..0.6);
    random_chain(&mut r, n, density, reversible)
}

fn pi_of(c: &Chain) -> Vec<f64> {
    stationary(c).unwrap().into_inner()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn generator_rows_sum_to_zero(seed in any::<u64>(), n in 2usize..50) {
        let c = chain_from(seed, n, false);
        for i in 0..c.len() {
            let off: f64 = c.out_edges(i).iter().map(|e| e.1).sum();
            prop_assert_eq!(off - c.holding_rate(i), 0.0);
            prop_assert_eq!(c.generator_matrix()[(i, i)], -c.holding_rate(i));
        }
    }

    #[test]
    fn stationary_is_a_fixed_point(seed in any::<u64>(), n in 2usize..=50) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        prop_assert!(stationarity_residual(&c, &pi) <= 1e-12 * c.max_rate());
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn adjoint_preserves_stationary_law(seed in any::<u64>(), n in 2usize..=40) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let pa = pi_of(&adjoint(&c, &pi).unwrap());
        for (a, b) in pi.iter().zip(&pa) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn dirichlet_form_agrees_across_adjoint_and_symmetric_part(seed in any::<u64>(), n in 2usize..=40) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let f = random_vector(&mut rng(seed, 1), n);
        let d = dirichlet_form(&c, &pi, &f);
        let scale = d.abs().max(1e-300);
        prop_assert!((d - dirichlet_form(&adjoint(&c, &pi).unwrap(), &pi, &f)).abs() <= 1e-10 * scale.max(1.0));
        prop_assert!((d - dirichlet_form(&symmetric_part(&c, &pi).unwrap(), &pi, &f)).abs() <= 1e-10 * scale.max(1.0));
        prop_assert!((d - dirichlet_form_quadratic(&c, &pi, &f)).abs() <= 1e-10 * scale.max(1.0));
    }

    #[test]
    fn detailed_balance_iff_self_adjoint(seed in any::<u64>(), n in 2usize..=30, reversible in any::<bool>()) {
        let c = chain_from(seed, n, reversible);
        let pi = pi_of(&c);
        let a = adjoint(&c, &pi).unwrap();
        let same = c.edges().all(|(i, j, r)| (a.rate(i, j) - r).abs() <= 1e-12 * r)
            && a.edge_count() == c.edge_count();
        prop_assert_eq!(is_reversible(&c, &pi, 1e-12), same);
        if reversible {
            prop_assert!(same);
        }
    }

    #[test]
    fn equilibrium_potential_is_harmonic(seed in any::<u64>(), n in 3usize..=40) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let (a, b) = random_disjoint_pair(&mut rng(seed, 1), n);
        let s = equilibrium_potential(&c, &pi, &a, &b).unwrap();
        let lh = apply_generator(&c, &s.h);
        for i in 0..n {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s.h[i]));
            if a.contains(&i) {
                prop_assert_eq!(s.h[i], 1.0);
            } else if b.contains(&i) {
                prop_assert_eq!(s.h[i], 0.0);
            } else {
                prop_assert!(lh[i].abs() <= 1e-10 * c.max_rate());
            }
        }
    }

    #[test]
    fn sector_ratio_within_state_bound(seed in any::<u64>(), n in 2usize..=20) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let f = random_vector(&mut rng(seed, 2), n);
        prop_assert!((sector_value(&c, &pi, &f, &f) - 1.0).abs() <= 1e-9);
        let s = sector_ratio(&c, &pi, 20, seed);
        prop_assert!(s.ratio.is_finite() && s.ratio >= 0.0);
        prop_assert!(s.ratio <= s.bound);
    }

    #[test]
    fn reduced_identity_holds(seed in any::<u64>(), n in 4usize..=30, valleys in 2usize..=4) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let p = random_partition(&mut rng(seed, 1), n, valleys.min(n));
        let m = coarse_rates(&c, &pi, &p, None).unwrap();
        prop_assert!(m.identity_deviation <= 1e-9);
        prop_assert!(m.rates.iter().flatten().all(|r| *r >= 0.0));
    }

    #[test]
    fn reflection_keeps_conditioned_law_for_reversible_chains(seed in any::<u64>(), n in 4usize..=25) {
        let c = chain_from(seed, n, true);
        let pi = pi_of(&c);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng(seed, 1));
        let f = &order[..n / 2 + 1];
        if let Ok(r) = reflected_chain(&c, f) {
            let mut states: Vec<usize> = f.to_vec();
            states.sort_unstable();
            let mass: f64 = states.iter().map(|&i| pi[i]).sum();
            let local: Vec<f64> = states.iter().map(|&i| pi[i] / mass).collect();
            prop_assert!(stationarity_residual(&r, &local) <= 1e-10 * r.max_rate());
        }
    }

    #[test]
    fn cycles_rebuild_the_generator(seed in any::<u64>(), n in 2usize..=25) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let d = cycle_decompose(&c, &pi).unwrap();
        prop_assert!(d.residual <= 1e-12);
        for cyc in &d.cycles {
            for (k, &v) in cyc.vertices.iter().enumerate() {
                prop_assert!((pi[v] * cyc.rates[k] - cyc.conductance).abs() <= 1e-10 * cyc.conductance);
            }
        }
        let rebuilt = d.reconstruct();
        for (i, j, r) in c.edges() {
            prop_assert!((rebuilt[&(i, j)] - r).abs() <= 1e-12 * r.max(1.0));
        }
    }

    #[test]
    fn reversible_chains_decompose_into_two_cycles(seed in any::<u64>(), n in 2usize..=25) {
        let c = chain_from(seed, n, true);
        let d = cycle_decompose(&c, &pi_of(&c)).unwrap();
        prop_assert!(d.cycles.iter().all(|cyc| cyc.vertices.len() == 2));
        prop_assert!(d.residual <= 1e-12);
    }

    #[test]
    fn trace_keeps_conditioned_law(seed in any::<u64>(), n in 3usize..=30) {
        let c = chain_from(seed, n, false);
        let pi = pi_of(&c);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng(seed, 1));
        let (t, pf) = trace_chain(&c, &pi, &order[..2 + (n - 2) / 2]).unwrap();
        prop_assert!(stationarity_residual(&t, &pf) <= 1e-10 * t.max_rate());
    }

    #[test]
    fn chain_specs_round_trip(seed in any::<u64>(), n in 2usize..=30) {
        let c = chain_from(seed, n, false);
        let p = random_partition(&mut rng(seed, 1), n, 2.min(n));
        let (c2, p2) = read_chain_spec(&write_chain_spec(&c, Some(&p))).unwrap();
        prop_assert_eq!(c2, c);
        prop_assert_eq!(p2, Some(p));
    }

    #[test]
    fn occupation_splits_the_horizon(seed in any::<u64>(), n in 2usize..=12, horizon in 0.1f64..20.0) {
        let c = chain_from(seed, n, false);
        let path = simulate(&c, Start::State(0), horizon, seed).unwrap();
        let inside = |i: usize| i % 2 == 0;
        let a = occupation_time(&path, inside);
        let b = occupation_time(&path, |i| !inside(i));
        prop_assert_eq!(a + b, path.horizon);
        prop_assert_eq!(time_change(&path, inside).total, a);
    }

    #[test]
    fn transient_law_is_a_probability(seed in any::<u64>(), n in 2usize..=20, t in 0.0f64..5.0) {
        let c = chain_from(seed, n, false);
        let mut mu = vec![0.0; n];
        mu[0] = 1.0;
        let p = transient(&c, &mu, t).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn poisson_weights_normalized(mean in 0.0f64..5000.0) {
        let w = poisson_weights(mean);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn zero_range_ranks_are_bijective(sites in 3usize..=5, particles in 2usize..=9) {
        let z = ZeroRange::new(sites, particles, 2.0, 0.5, Some(0)).unwrap();
        for i in 0..z.state_count() {
            let c = z.unrank(i);
            prop_assert_eq!(c.iter().sum::<usize>(), particles);
            prop_assert_eq!(z.rank(&c), i);
        }
    }
}
