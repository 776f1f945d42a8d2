use firmsim::dynamics::step;
use firmsim::fields::{build_decay_kernel, potential_field, softmax, KernelSet};
use firmsim::metrics::{cluster_k, rank_size};
use firmsim::model::{census, new_simulation, DivisionType, PopulationGrid, SelectionMode, SimConfig};
use proptest::prelude::*;

fn grid_strategy(max_side: u32) -> impl Strategy<Value = PopulationGrid> {
    (1..=max_side, 1..=max_side).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (prop::collection::vec(0u32..20, n), prop::collection::vec(0u32..20, n)).prop_map(move |(old, new)| {
            let mut g = PopulationGrid::zeros(w, h);
            for i in 0..n {
                let c = g.cell(i);
                g.add(c, DivisionType::Old, old[i]);
                g.add(c, DivisionType::New, new[i]);
            }
            g
        })
    })
}

fn brute_k(g: &PopulationGrid, d: f64) -> f64 {
    let mut num = 0u64;
    for i in 0..g.n_cells() {
        for j in 0..g.n_cells() {
            if g.cell(i).distance(g.cell(j)) <= d {
                num += g.count_total[i] as u64 * g.count_total[j] as u64;
            }
        }
    }
    num as f64 / g.total() as f64
}

proptest! {
    #[test]
    fn softmax_is_a_distribution_and_shift_invariant(
        u in prop::collection::vec(-50.0f64..50.0, 1..40),
        shift in -500.0f64..500.0,
    ) {
        let p = softmax(&u).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let q = softmax(&u.iter().map(|x| x + shift).collect::<Vec<_>>()).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn field_is_monotone_in_counts(g in grid_strategy(8), alpha in 0.05f64..2.0, cell in 0usize..64, extra in 1u32..10) {
        let kernel = build_decay_kernel(g.width, g.height, alpha).unwrap();
        let before = potential_field(&g.count_total, &kernel).unwrap();
        let mut more = g.count_total.clone();
        let cell = cell % more.len();
        more[cell] += extra;
        let after = potential_field(&more, &kernel).unwrap();
        for (a, b) in before.values.iter().zip(&after.values) {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn field_scales_linearly(g in grid_strategy(8), alpha in 0.05f64..2.0, factor in 1u32..50) {
        let kernel = build_decay_kernel(g.width, g.height, alpha).unwrap();
        let base = potential_field(&g.count_total, &kernel).unwrap();
        let scaled: Vec<u32> = g.count_total.iter().map(|c| c * factor).collect();
        let field = potential_field(&scaled, &kernel).unwrap();
        for (a, b) in base.values.iter().zip(&field.values) {
            let expected = a * factor as f64;
            if factor.is_power_of_two() {
                prop_assert_eq!(*b, expected);
            } else {
                prop_assert!((b - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn cluster_k_matches_pair_counting(g in grid_strategy(10), d in 0.1f64..15.0) {
        prop_assume!(g.total() > 0);
        let k = cluster_k(&g, d).unwrap();
        prop_assert_eq!(k, brute_k(&g, d));
        prop_assert!(k >= 1.0);
    }

    #[test]
    fn rank_size_is_ordered_and_conserves_divisions(g in grid_strategy(10)) {
        let ranked = rank_size(&g);
        prop_assert_eq!(ranked.total(), g.total());
        prop_assert_eq!(ranked.len(), g.occupied_cells());
        for w in ranked.entries.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0.index(g.width) < w[1].0.index(g.width)));
        }
        prop_assert!(ranked.entries.iter().all(|e| e.1 > 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn census_tracks_divisions_through_steps(
        seed in any::<u64>(),
        side in 4u32..10,
        logit in any::<bool>(),
        beta_ap in -2.0f64..2.0,
        lambda2 in 0.0f64..0.5,
        lambda3 in 0.0f64..0.3,
    ) {
        let mut cfg = SimConfig {
            width: side,
            height: side,
            initial_divisions: side * side / 2,
            seed,
            selection_mode: if logit { SelectionMode::LogitSample } else { SelectionMode::ArgmaxImprove },
            ..SimConfig::default()
        }
        .with_relocation(lambda2, lambda3);
        cfg.params_old.delta_max = 6;
        cfg.params_new.delta_max = 3;
        cfg.params_old.beta_ap = beta_ap;
        cfg.params_new.beta_ap = beta_ap;
        let kernels = KernelSet::for_config(&cfg).unwrap();
        let mut state = new_simulation(cfg).unwrap();
        let mut previous = state.n_divisions() as u64;
        for _ in 0..12 {
            let report = step(&mut state, Some(&kernels)).unwrap();
            let grid = state.population();
            prop_assert_eq!(grid, &census(&state));
            prop_assert_eq!(grid.total(), state.n_divisions() as u64);
            prop_assert_eq!(report.n_total(), grid.total());
            prop_assert!(report.n_total() >= previous);
            previous = report.n_total();
            for (id, d) in state.divisions().iter(side).enumerate() {
                prop_assert_eq!(d.id, id as u64);
                prop_assert!(d.cell.x < side && d.cell.y < side);
            }
        }
    }
}
