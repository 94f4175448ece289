mod common;

use proptest::prelude::*;

use hubsched::heft::run_heft;
use hubsched::milp::{assignment_from_schedule, build_model, export_lp, parse_lp};
use hubsched::objective::Range;
use hubsched::transform::{duplication_reliability, etag_size_bounds, needs_duplication, task_reliability};
use hubsched::validator::check_schedule;
use hubsched::workload::{self, Config, GenSpec};
use hubsched::{ObjectiveWeights, Schedule};

use common::{problem, random_model};

fn weights() -> impl Strategy<Value = ObjectiveWeights> {
    (0u32..=6)
        .prop_flat_map(|a| (Just(a), 0..=6 - a))
        .prop_map(|(a, b)| ObjectiveWeights::new(a as f64 / 6.0, b as f64 / 6.0, (6 - a - b) as f64 / 6.0).unwrap())
}

proptest! {
    #[test]
    fn lp_text_round_trips(seed in any::<u64>()) {
        let m = random_model(seed);
        let back = parse_lp(&export_lp(&m)).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn duplication_never_hurts(
        l1 in 1e-7f64..1e-2, t1 in 1e-3f64..200.0,
        l2 in 1e-7f64..1e-2, t2 in 1e-3f64..200.0,
    ) {
        let (r1, r2) = (task_reliability(l1, t1), task_reliability(l2, t2));
        prop_assert!(r1 > 0.0 && r1 <= 1.0);
        let r = duplication_reliability(r1, r2);
        prop_assert!(r >= r1.max(r2) && r <= 1.0);
        prop_assert_eq!(needs_duplication(r1, r1), false);
    }

    #[test]
    fn log_sum_matches_product(rs in prop::collection::vec(0.9f64..1.0, 1..60)) {
        let product: f64 = rs.iter().product();
        let logs: f64 = rs.iter().map(|r| r.ln()).sum();
        prop_assert!((logs.exp() - product).abs() <= 1e-9);
    }

    #[test]
    fn normalization_maps_range_onto_unit(min in -1e3f64..1e3, width in 1e-6f64..1e3, f in 0.0f64..=1.0) {
        let r = Range { min, max: min + width };
        let v = r.normalize(min + f * width);
        prop_assert!((-1e-9..=1.0 + 1e-9).contains(&v), "{}", v);
        prop_assert_eq!(r.normalize(min), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// A heuristic schedule maps onto a feasible model assignment whose
    /// objective is the schedule's `g`.
    #[test]
    fn model_scores_schedules_like_the_validator(seed in 0u64..500, w in weights()) {
        let p = problem(workload::tiny_instance(seed)).with_weights(w);
        let m = build_model(&p);
        if let Some(s) = run_heft(&p).unwrap().outcome.schedule() {
            let v = assignment_from_schedule(&m, &p.etag, s).unwrap();
            let bad = m.violated(&v, 1e-7);
            prop_assert!(bad.is_empty(), "{:?}", bad);
            prop_assert!((m.evaluate(&v) - s.objectives.g).abs() <= 1e-9);
        }
    }

    #[test]
    fn heft_is_deterministic_and_greedy(tasks in 6usize..14, seed in any::<u64>(), w in weights()) {
        let p = problem(workload::generate(&GenSpec::new(tasks, seed, Config::C1)).unwrap()).with_weights(w);
        let a = run_heft(&p).unwrap();
        let b = run_heft(&p).unwrap();
        prop_assert_eq!(&a.outcome, &b.outcome);
        prop_assert_eq!(&a.trace, &b.trace);
        if let Some(s) = a.outcome.schedule() {
            prop_assert!(check_schedule(s, &p.etag, p.deadline).is_clean());
            let committed: Vec<_> = a.trace.iter().flat_map(|c| c.placements.iter().copied()).collect();
            prop_assert_eq!(committed.len(), s.placements.len());
            for c in &committed {
                prop_assert!(s.placements.contains(c));
            }
            let json = s.to_json();
            let back: Schedule = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back.to_json(), json);
        }
    }

    #[test]
    fn generated_graphs_respect_size_bounds(tasks in 6usize..40, seed in any::<u64>()) {
        let f = workload::generate(&GenSpec::new(tasks, seed, Config::C1)).unwrap();
        let inst = f.to_instance().unwrap();
        prop_assert!(inst.workflow.validate().is_empty());
        let p = problem(f);
        let (n, a) = etag_size_bounds(tasks, inst.workflow.arcs.len(), inst.system.core_count());
        prop_assert!(p.etag.nodes.len() <= n);
        prop_assert!(p.etag.arcs.len() <= a);
    }
}
