//! Randomised invariants across the library.

mod common;

use clverify::active::{self, CandidatePool};
use clverify::mtl::{self, Formula};
use clverify::svm::{self, CostMatrix, SvmConfig, SvmModel};
use clverify::systems::{HistoryStack, System};
use clverify::verify::{self, Axis, GridSpec, GroundTruth};
use clverify::{build_grid, IntegratorConfig, Label};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 0.1;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn holds(f: &Formula, traj: &clverify::Trajectory) -> bool {
    mtl::evaluate(f, traj, 0.0).unwrap()
}

fn two_class_set(r: &mut ChaCha8Rng, n: usize) -> clverify::TrainingSet {
    loop {
        let data = common::random_set(r, n, 2, 3.0);
        if data.single_class().is_none() {
            return data;
        }
    }
}

fn small_grid(n: usize) -> clverify::Grid {
    let spec = GridSpec { axes: vec![Axis::new(-3.0, 3.0, n), Axis::new(-3.0, 3.0, n)] };
    build_grid(&spec, verify::DEFAULT_GRID_LIMIT).unwrap()
}

fn nondegenerate_model(r: &mut ChaCha8Rng) -> SvmModel {
    loop {
        let n = r.gen_range(2..8);
        let m = common::random_model(r, 2, n);
        if m.degenerate().is_none() {
            return m;
        }
    }
}

// ─── Monitor ─────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn always_is_dual_of_eventually(seed in any::<u64>()) {
        let mut r = rng(seed);
        let traj = common::random_signal(&mut r, 50, H);
        let phi = common::random_predicate(&mut r);
        let (a, b) = common::random_window(&mut r, 2.0, H);
        let lhs = Formula::not(Formula::always(a, b, phi.clone()));
        let rhs = Formula::eventually(a, b, Formula::not(phi));
        prop_assert_eq!(holds(&lhs, &traj), holds(&rhs, &traj));
    }

    #[test]
    fn eventually_is_true_until(seed in any::<u64>()) {
        let mut r = rng(seed);
        let traj = common::random_signal(&mut r, 50, H);
        let phi = common::random_predicate(&mut r);
        let (a, b) = common::random_window(&mut r, 2.0, H);
        let lhs = Formula::eventually(a, b, phi.clone());
        let rhs = Formula::until(a, b, Formula::True, phi);
        prop_assert_eq!(holds(&lhs, &traj), holds(&rhs, &traj));
    }

    #[test]
    fn narrower_windows_are_weaker_for_always(seed in any::<u64>()) {
        let mut r = rng(seed);
        let traj = common::random_signal(&mut r, 50, H);
        let phi = common::random_predicate(&mut r);
        let (a, b) = common::random_window(&mut r, 2.0, H);
        let (c, d) = common::sub_window(&mut r, a, b, H);
        if holds(&Formula::always(a, b, phi.clone()), &traj) {
            prop_assert!(holds(&Formula::always(c, d, phi.clone()), &traj));
        }
        if holds(&Formula::eventually(c, d, phi.clone()), &traj) {
            prop_assert!(holds(&Formula::eventually(a, b, phi), &traj));
        }
    }

    #[test]
    fn parsed_formulas_round_trip_through_display(seed in any::<u64>()) {
        let mut r = rng(seed);
        let phi = common::random_predicate(&mut r);
        let (a, b) = common::random_window(&mut r, 2.0, H);
        let f = Formula::until(a, b, phi.clone(), Formula::always(0.0, 1.0, phi));
        let back = mtl::parse(&f.to_string()).unwrap();
        let traj = common::random_signal(&mut r, 50, H);
        prop_assert_eq!(holds(&f, &traj), holds(&back, &traj));
    }
}

// ─── SVM ─────────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trained_models_satisfy_kkt(seed in any::<u64>(), n in 6usize..60) {
        let mut r = rng(seed);
        let data = two_class_set(&mut r, n);
        let cost = CostMatrix { c_fn: r.gen_range(0.3..5.0), c_fp: r.gen_range(0.3..5.0) };
        let cfg = SvmConfig { gamma: r.gen_range(0.5..2.0), cost, ..SvmConfig::default() };
        let out = svm::train_with(&data, &cfg, None).unwrap();
        prop_assert!(out.converged);
        prop_assert!(svm::kkt_violation(&data, &out.alphas, &out.model, out.implied_bias) <= cfg.tolerance);
        let y_alpha: f64 = out.alphas.iter().zip(data.labels()).map(|(a, l)| a * l.sign()).sum();
        prop_assert!(y_alpha.abs() < 1e-9);
        for (a, l) in out.alphas.iter().zip(data.labels()) {
            prop_assert!(*a >= 0.0 && *a <= cost.bound(*l));
        }
    }

    #[test]
    fn warm_start_reaches_the_cold_objective(seed in any::<u64>(), n in 10usize..50, extra in 1usize..10) {
        let mut r = rng(seed);
        let data = two_class_set(&mut r, n);
        let cfg = SvmConfig { tolerance: 1e-6, ..SvmConfig::default() };
        let first = svm::train_with(&data, &cfg, None).unwrap();
        let mut grown = data.clone();
        while grown.len() < n + extra {
            let p = vec![r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0)];
            let _ = grown.push(p, Label::from_bool(r.gen_bool(0.5)));
        }
        let mut warm_alphas = first.alphas.clone();
        warm_alphas.resize(grown.len(), 0.0);
        let warm = svm::train_with(&grown, &cfg, Some(&warm_alphas)).unwrap();
        let cold = svm::train_with(&grown, &cfg, None).unwrap();
        let ow = svm::dual_objective(&grown, &warm.alphas, cfg.gamma);
        let oc = svm::dual_objective(&grown, &cold.alphas, cfg.gamma);
        prop_assert!((ow - oc).abs() < 1e-4 * (1.0 + oc.abs()), "warm {ow} cold {oc}");
    }

    #[test]
    fn model_text_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..12);
        let model = common::random_model(&mut r, 3, n);
        let back = SvmModel::from_text(&model.to_text()).unwrap();
        for _ in 0..20 {
            let p: Vec<f64> = (0..3).map(|_| r.gen_range(-4.0..4.0)).collect();
            prop_assert_eq!(model.decision(&p).unwrap(), back.decision(&p).unwrap());
        }
        prop_assert_eq!(back.cost(), model.cost());
        prop_assert_eq!(back.gamma(), model.gamma());
    }

    #[test]
    fn swapping_classes_and_costs_mirrors_the_solution(seed in any::<u64>(), n in 6usize..40) {
        let mut r = rng(seed);
        let data = two_class_set(&mut r, n);
        let cost = CostMatrix { c_fn: r.gen_range(0.3..5.0), c_fp: r.gen_range(0.3..5.0) };
        let cfg = SvmConfig { cost, tolerance: 1e-6, ..SvmConfig::default() };
        let swapped = SvmConfig { cost: CostMatrix { c_fn: cost.c_fp, c_fp: cost.c_fn }, ..cfg };
        let a = svm::train_with(&data, &cfg, None).unwrap();
        let b = svm::train_with(&data.flipped(), &swapped, None).unwrap();
        let oa = svm::dual_objective(&data, &a.alphas, cfg.gamma);
        let ob = svm::dual_objective(&data.flipped(), &b.alphas, cfg.gamma);
        prop_assert!((oa - ob).abs() < 1e-4 * (1.0 + oa.abs()));
        for p in data.points() {
            let ha = a.model.decision(p).unwrap();
            let hb = b.model.decision(p).unwrap();
            prop_assert!((ha + hb).abs() < 1e-2, "{ha} vs {hb}");
        }
    }

    #[test]
    fn raising_a_class_cost_never_adds_its_training_errors(seed in any::<u64>(), n in 10usize..40) {
        let mut r = rng(seed);
        let data = two_class_set(&mut r, n);
        let misses = |c_fp: f64| {
            let cfg = SvmConfig { cost: CostMatrix { c_fn: 1.0, c_fp }, tolerance: 1e-6, ..SvmConfig::default() };
            let out = svm::train_with(&data, &cfg, None).unwrap();
            // Slack of the unsafe class in the bias-corrected problem.
            data.points().iter().zip(data.labels())
                .filter(|(_, l)| **l == Label::Unsafe)
                .map(|(p, _)| (1.0 + out.model.decision(p).unwrap() + out.implied_bias).max(0.0))
                .sum::<f64>()
        };
        prop_assert!(misses(20.0) <= misses(1.0) + 1e-3);
    }
}

// ─── Selection ───────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_and_margin_picks_share_a_margin(seed in any::<u64>()) {
        let mut r = rng(seed);
        let grid = small_grid(12);
        let model = nondegenerate_model(&mut r);
        let pool = CandidatePool::full(&grid);
        let a = active::expected_model_change_pick(&model, &pool, &mut r).unwrap();
        let b = active::expected_gradient_pick(&model, &pool).unwrap();
        let ha = model.decision(grid.point(a)).unwrap();
        let hb = model.decision(grid.point(b)).unwrap();
        // `1 − |H|` loses bits of `|H|` below machine epsilon, so only the
        // value is compared, not the index.
        prop_assert!((1.0 - ha.abs()) == (1.0 - hb.abs()) || a == b);
    }

    #[test]
    fn batches_are_distinct_and_leave_the_pool(seed in any::<u64>(), m in 1usize..12, lambda in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let grid = small_grid(10);
        let model = common::random_model(&mut r, 2, 5);
        let mut pool = CandidatePool::full(&grid);
        let batch = active::select_batch(&model, &mut pool, m, lambda, &mut r).unwrap();
        prop_assert_eq!(batch.len(), m);
        let mut sorted = batch.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), m);
        prop_assert_eq!(pool.len(), grid.len() - m);
        for i in &batch {
            prop_assert!(!pool.contains(*i));
        }
    }

    #[test]
    fn pure_margin_weight_starts_at_the_margin_pick(seed in any::<u64>()) {
        let mut r = rng(seed);
        let grid = small_grid(10);
        let model = nondegenerate_model(&mut r);
        let pool = CandidatePool::full(&grid);
        let single = active::expected_model_change_pick(&model, &pool, &mut r).unwrap();
        let mut pool = CandidatePool::full(&grid);
        let batch = active::select_batch(&model, &mut pool, 3, 1.0, &mut r).unwrap();
        prop_assert_eq!(batch[0], single);
    }

    #[test]
    fn loop_budget_is_accounted_exactly(seed in any::<u64>(), iterations in 1usize..5, m in 1usize..6) {
        let grid = small_grid(15);
        let oracle = |_: usize, t: &[f64]| Ok(Label::from_bool(t[0] * t[0] + t[1] * t[1] < 4.0));
        let counting = active::CountingOracle::new(&oracle);
        let initial = active::random_initial(grid.len(), 12, seed).unwrap();
        let out = active::run_batch(&grid, &initial, &counting, iterations, m, 0.7, &SvmConfig::default(), seed).unwrap();
        let budget = initial.len() + iterations * m;
        prop_assert_eq!(out.oracle_calls, budget);
        prop_assert_eq!(counting.calls(), budget);
        prop_assert_eq!(out.training.len(), budget);
        let mut labeled = out.labeled.clone();
        labeled.sort_unstable();
        labeled.dedup();
        prop_assert_eq!(labeled.len(), budget);
        prop_assert_eq!(out.retrains, iterations);
    }
}

// ─── Verification ────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn kfold_partition_covers_every_index_once(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(n >= k);
        let folds = verify::kfold_partition(n, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn error_rates_decompose(labels in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..300)) {
        let predicted: Vec<Label> = labels.iter().map(|(p, _)| Label::from_bool(*p)).collect();
        let truth: Vec<Label> = labels.iter().map(|(_, t)| Label::from_bool(*t)).collect();
        let report = verify::error_counts(&predicted, &truth);
        let wrong = labels.iter().filter(|(p, t)| p != t).count();
        let missed_unsafe = labels.iter().filter(|(p, t)| *p && !*t).count();
        prop_assert_eq!(report.unsafe_misses + report.safe_misses, wrong);
        prop_assert_eq!(report.unsafe_misses, missed_unsafe);
        prop_assert!((report.total() - (report.unsafe_rate() + report.safe_rate())).abs() < 1e-15);
        prop_assert!((report.total() - wrong as f64 / labels.len() as f64).abs() < 1e-15);
    }

    #[test]
    fn truth_text_round_trips(labels in proptest::collection::vec(any::<bool>(), 0..500), hash in "[0-9a-f]{64}") {
        let truth = GroundTruth::new(hash, labels.into_iter().map(Label::from_bool).collect());
        prop_assert_eq!(GroundTruth::from_text(&truth.to_text()).unwrap(), truth);
    }

    #[test]
    fn aggregate_matches_direct_moments(curves in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 5), 2..10)) {
        let agg = verify::aggregate(&curves).unwrap();
        prop_assert_eq!(&verify::aggregate(&curves).unwrap(), &agg);
        let n = curves.len() as f64;
        for i in 0..5 {
            let mean = curves.iter().map(|c| c[i]).sum::<f64>() / n;
            let ss: f64 = curves.iter().map(|c| (c[i] - mean).powi(2)).sum();
            prop_assert!((agg.mean[i] - mean).abs() < 1e-12);
            prop_assert!((agg.sigma[i] - (ss / (n - 1.0)).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn derived_seeds_are_distinct(master in any::<u64>()) {
        let mut seeds = verify::derive_seeds(master, 64);
        seeds.sort_unstable();
        seeds.dedup();
        prop_assert_eq!(seeds.len(), 64);
    }
}

// ─── Systems ─────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_stack_never_loses_excitation(seed in any::<u64>(), capacity in 2usize..8) {
        let mut r = rng(seed);
        let mut stack = HistoryStack::new(capacity, 0.01);
        let mut previous = 0.0;
        for _ in 0..60 {
            stack.update([r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0)]);
            prop_assert!(stack.len() <= capacity);
            if stack.is_full() {
                let s = stack.min_singular_value();
                prop_assert!(s >= previous - 1e-12);
                previous = s;
            }
        }
    }

    #[test]
    fn unbounded_hedged_loop_matches_the_plain_loop(t1 in -3.0f64..3.0, t2 in -3.0f64..3.0) {
        let cfg = IntegratorConfig::new(0.01, 8.0, 1e3).unwrap();
        let plain = System::by_name("clmrac").unwrap().simulate(&[t1, t2], &cfg).unwrap();
        let hedged = System::by_name("clmrac_pch").unwrap().simulate(&[t1, t2, 0.0, 1e12], &cfg).unwrap();
        for ch in ["x1", "x2", "e1", "theta_hat1"] {
            prop_assert_eq!(plain.series(ch).unwrap(), hedged.series(ch).unwrap());
        }
        prop_assert!(hedged.series("nu_h").unwrap().iter().all(|v| *v == 0.0));
    }
}
