use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sptoken_core::apow::{difficulty_to_bits, fragment, run_round, split_bound_holds, ApowRound, DataPoint, ExactMean, Norm};
use sptoken_core::harness::median_ci;
use sptoken_core::ledger::{Ledger, SiteDraft};
use sptoken_core::network::{contract_chains, generate_grid, merge_states, GridSpec, ShortestPathPolicy, TurnThresholds};
use sptoken_core::rl::{Learner, MdpModel, MubevLearner, RewardModel, RewardParams};

fn norm() -> impl Strategy<Value = Norm> {
    prop_oneof![Just(Norm::L1), Just(Norm::L2), Just(Norm::Linf)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ledger_batches_keep_invariants(seed in any::<u64>(), batches in prop::collection::vec(1usize..5, 1..40)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ledger = Ledger::new();
        let mut k = 0u64;
        for b in batches {
            let sites: Vec<_> = (0..b)
                .map(|_| {
                    k += 1;
                    let draft = SiteDraft {
                        issuer_id: k % 7,
                        token_id: Some(k % 3),
                        observer_id: None,
                        observer_set: [0; 32],
                        payload: k.to_be_bytes().to_vec(),
                        timestamp: k,
                        difficulty_bits: 2,
                    };
                    ledger.prepare(&draft, &mut rng).unwrap()
                })
                .collect();
            for s in sites {
                prop_assert!(s.parent_ids.len() == 1 || s.parent_ids.len() == 2);
                ledger.attach(s).unwrap();
            }
        }
        prop_assert!(ledger.check_invariants().is_ok());
        prop_assert_eq!(ledger.len() as u64, k + 1);
    }

    #[test]
    fn fragments_sum_to_point(seed in any::<u64>(), x in prop::collection::vec(-1_000_000_000i64..1_000_000_000, 1..5), n in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = DataPoint(x);
        let set = fragment("a", &p, n, &mut rng).unwrap();
        prop_assert_eq!(set.fragments.len(), n);
        prop_assert_eq!(set.sum(), p);
    }

    #[test]
    fn split_never_lowers_work(
        seed in any::<u64>(),
        pts in prop::collection::vec(prop::collection::vec(-80_000_000i64..80_000_000, 3), 1..8),
        norm in norm(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let participants: Vec<String> = (0..pts.len()).map(|i| format!("p{i}")).collect();
        let data = participants.iter().cloned().zip(pts.into_iter().map(DataPoint)).collect();
        let round = ApowRound { participants, data, d0: 4.0, alpha_pow: 0.3, norm };
        let result = run_round(&round, &mut rng).unwrap();
        let mean = ExactMean::of(round.data.values(), 3);
        for (name, party) in &result.parties {
            prop_assert_eq!(&party.mean, &mean);
            prop_assert!(split_bound_holds(&party.fragments, &round.data[name], &mean, norm));
            prop_assert!(party.total() >= party.single_step - 1e-9 * party.single_step.abs());
        }
    }

    #[test]
    fn bits_are_clamped(d in -1e3f64..1e3) {
        let b = difficulty_to_bits(d);
        prop_assert!((1..=32).contains(&b));
    }

    #[test]
    fn median_interval_is_ordered_and_shifts(xs in prop::collection::vec(-1e6f64..1e6, 1..60), c in -1e3f64..1e3) {
        let m = median_ci(&xs, 0.95).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(m.lo <= m.median && m.median <= m.hi);
        prop_assert!(lo <= m.median && m.median <= hi);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let s = median_ci(&shifted, 0.95).unwrap();
        prop_assert!((s.median - (m.median + c)).abs() < 1e-6);
        prop_assert!((s.lo - (m.lo + c)).abs() < 1e-6);
        prop_assert!((s.hi - (m.hi + c)).abs() < 1e-6);
    }

    #[test]
    fn chain_contraction_partitions_and_is_idempotent(succ in prop::collection::vec(prop::collection::vec(0usize..12, 0..3), 12)) {
        let succ: Vec<Vec<usize>> = succ.into_iter().map(|mut v| { v.sort_unstable(); v.dedup(); v }).collect();
        let chains = contract_chains(&succ);
        let mut seen: Vec<usize> = chains.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..12).collect::<Vec<_>>());
        // contracting the chain-level graph again changes nothing
        let mut owner = [0; 12];
        for (i, c) in chains.iter().enumerate() {
            for &x in c {
                owner[x] = i;
            }
        }
        let outer: Vec<Vec<usize>> =
            chains.iter().map(|c| succ[*c.last().unwrap()].iter().map(|&b| owner[b]).collect()).collect();
        prop_assert!(contract_chains(&outer).iter().all(|c| c.len() == 1));
    }

    #[test]
    fn merged_grids_are_maximal(rows in 2u32..6, cols in 2u32..6, segments in 1u32..4, seed in any::<u64>()) {
        let spec = GridSpec { rows, cols, segments, seed, ..GridSpec::default() };
        let (graph, report) = merge_states(&generate_grid(&spec), &TurnThresholds::default());
        prop_assert_eq!(report.states, graph.len());
        let chains = contract_chains(&graph.move_successors());
        prop_assert!(chains.iter().all(|c| c.len() == 1));
    }

    #[test]
    fn zero_data_plan_is_shortest_path(rows in 2u32..6, cols in 2u32..6, seed in any::<u64>(), h in 1usize..20, dest_pick in any::<prop::sample::Index>()) {
        let spec = GridSpec { rows, cols, seed, ..GridSpec::default() };
        let (graph, _) = merge_states(&generate_grid(&spec), &TurnThresholds::default());
        let dest = dest_pick.index(graph.len());
        let sp = ShortestPathPolicy::new(&graph, dest);
        let model = MdpModel::from_graph(&graph, h).unwrap();
        let mut l = MubevLearner::new(&model, 1.0, 1.0).unwrap();
        l.prepare(&model, sp.actions());
        for s in 0..graph.len() {
            for t in 0..h {
                prop_assert_eq!(l.policy().get(s, t), sp.action(s));
            }
        }
    }

    #[test]
    fn reward_bounds(tau in 0.0f64..500.0, seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let spec = GridSpec { rows: 4, cols: 4, seed, ..GridSpec::default() };
        let (graph, _) = merge_states(&generate_grid(&spec), &TurnThresholds::default());
        let dest = pick.index(graph.len());
        let sp = ShortestPathPolicy::new(&graph, dest);
        let model = RewardModel::new(&graph, &sp, RewardParams::default()).unwrap();
        for s in 0..graph.len() {
            for a in graph.actions(s) {
                let next = graph.successor(s, a).unwrap();
                let b = model.breakdown(s, next, tau);
                prop_assert!(b.r_d <= 1.0);
                prop_assert!(b.r_t <= 0.0);
                if next == s {
                    prop_assert_eq!(b.total, if s == dest { 1.0 } else { -20.0 });
                }
            }
        }
    }

    #[test]
    fn optimism_stays_clipped(seed in any::<u64>(), rewards in prop::collection::vec((any::<prop::sample::Index>(), -30.0f64..1.0), 0..200)) {
        let spec = GridSpec { rows: 3, cols: 3, seed, ..GridSpec::default() };
        let (graph, _) = merge_states(&generate_grid(&spec), &TurnThresholds::default());
        let sp = ShortestPathPolicy::new(&graph, 0);
        let model = MdpModel::from_graph(&graph, 8).unwrap();
        let mut l = MubevLearner::new(&model, 0.5, 1.0).unwrap();
        for (idx, r) in rewards {
            l.record(idx.index(model.n_pairs()), r);
        }
        l.plan(&model, sp.actions());
        for t in 0..model.horizon() {
            for sa in 0..model.n_pairs() {
                prop_assert!(l.q_value(sa, t) <= l.r_max() + l.v_max() + 1e-12);
            }
        }
    }
}
