//! Property tests for the analytic invariants.

use proptest::prelude::*;

use faro_core::{
    constraint_residuals, effective_utility, integerize, is_feasible, mdc_latency,
    penalty_multiplier, relaxed_mdc_latency, rescale, sample_trajectories, utility_original,
    utility_relaxed, window_average, AllocationPlan, ClusterObjectiveSpec, JobLoad, JobSpec,
    ObjectiveEvaluator, ObjectiveForm, ObjectiveKind, PenaltySchedule, ProbabilisticForecast,
    QueueInput, RateSeries, RelaxationKnobs, ResourceLimits, Slo, UtilityParams,
};

fn slo(target: f64) -> Slo {
    Slo::new(target, 0.99).unwrap()
}

proptest! {
    #[test]
    fn relaxed_utility_bounds_and_agreement(
        latency in 0.0f64..20.0,
        target in 0.05f64..5.0,
        alpha in 1.0f64..32.0,
    ) {
        let s = slo(target);
        let params = UtilityParams::new(alpha).unwrap();
        let relaxed = utility_relaxed(latency, &s, &params);
        let step = utility_original(latency, &s);
        prop_assert!((0.0..=1.0).contains(&relaxed));
        prop_assert!(relaxed <= step + 1e-15 || latency > target);
        if latency <= target {
            prop_assert_eq!(relaxed, 1.0);
            prop_assert_eq!(step, 1.0);
        } else {
            prop_assert!(relaxed > 0.0 && relaxed < 1.0);
            prop_assert_eq!(step, 0.0);
        }
    }

    #[test]
    fn relaxed_utility_monotone_in_latency(
        l1 in 0.01f64..20.0,
        delta in 0.0f64..5.0,
        target in 0.05f64..5.0,
    ) {
        let s = slo(target);
        let params = UtilityParams::default();
        let u1 = utility_relaxed(l1, &s, &params);
        let u2 = utility_relaxed(l1 + delta, &s, &params);
        prop_assert!(u2 <= u1 + 1e-15);
    }

    #[test]
    fn effective_utility_dominated(
        u in 0.0f64..1.0,
        d in 0.0f64..1.0,
        relaxed in proptest::bool::ANY,
    ) {
        let sched = PenaltySchedule::credit_bands(relaxed);
        let eu = effective_utility(u, d, &sched);
        prop_assert!(eu <= u.min(penalty_multiplier(d, &sched)) + 1e-15);
    }

    #[test]
    fn penalty_step_monotone_relaxed_continuous(d in 0.0f64..0.999) {
        let step = PenaltySchedule::credit_bands(false);
        prop_assert!(penalty_multiplier(d + 0.001, &step) <= penalty_multiplier(d, &step) + 1e-15);
        let relaxed = PenaltySchedule::credit_bands(true);
        let lo = penalty_multiplier(d, &relaxed);
        let hi = penalty_multiplier(d + 1e-7, &relaxed);
        prop_assert!((lo - hi).abs() < 1e-5);
    }

    #[test]
    fn mdc_monotone(
        service_time in 0.05f64..0.5,
        lambda in 0.1f64..60.0,
        replicas in 1.0f64..40.0,
    ) {
        let mk = |n: f64, l: f64| QueueInput {
            service_time,
            arrival_rate: l,
            replicas: n,
            percentile: 0.99,
        };
        let base = mdc_latency(&mk(replicas, lambda));
        let more_replicas = mdc_latency(&mk(replicas + 1.0, lambda));
        let more_load = mdc_latency(&mk(replicas, lambda * 1.1));
        prop_assert!(more_replicas <= base + 1e-12 || base.is_infinite());
        prop_assert!(more_load + 1e-12 >= base || more_load.is_infinite());
    }

    #[test]
    fn relaxed_latency_finite_and_sloped(
        service_time in 0.05f64..0.5,
        lambda in 0.5f64..200.0,
        replicas in 1.0f64..20.0,
    ) {
        let knobs = RelaxationKnobs::default();
        let mk = |l: f64| QueueInput {
            service_time,
            arrival_rate: l,
            replicas,
            percentile: 0.99,
        };
        let here = relaxed_mdc_latency(&mk(lambda), &knobs);
        prop_assert!(here.is_finite());
        // No plateau anywhere the waiting quantile is positive (below
        // that, the estimate legitimately floors at the service time): a
        // 5% load bump must strictly increase the estimate, including deep
        // in the overloaded region where the plain model returns infinity.
        if here > service_time + 1e-12 {
            let bumped = relaxed_mdc_latency(&mk(lambda * 1.05), &knobs);
            let rho = service_time * lambda / replicas;
            prop_assert!(bumped > here, "rho={rho}: {bumped} !> {here}");
        }
    }

    #[test]
    fn rescale_preserves_structure(
        values in proptest::collection::vec(0.0f64..1000.0, 3..60),
        lo in 0.0f64..10.0,
        span in 0.1f64..2000.0,
    ) {
        let series = RateSeries::new(values.clone(), "prop");
        let out = rescale(&series, lo, lo + span);
        prop_assert_eq!(out.values.len(), values.len());
        for (a, b) in values.windows(2).zip(out.values.windows(2)) {
            // Monotone segments keep their direction (ties may flatten).
            if a[0] < a[1] {
                prop_assert!(b[0] <= b[1] + 1e-9);
            } else if a[0] > a[1] {
                prop_assert!(b[0] + 1e-9 >= b[1]);
            }
        }
    }

    #[test]
    fn window_average_preserves_mean(
        values in proptest::collection::vec(0.0f64..1000.0, 1..80),
        window in 1usize..10,
    ) {
        let series = RateSeries::new(values, "prop");
        let out = window_average(&series, window);
        if series.len() % window == 0 {
            prop_assert!((out.mean() - series.mean()).abs() < 1e-9);
        } else {
            // Partial trailing windows shift the mean only slightly.
            prop_assert!(out.mean() >= 0.0);
        }
    }

    #[test]
    fn trajectory_sampling_deterministic_nonnegative(
        mean in 0.0f64..500.0,
        std in 0.0f64..200.0,
        seed in proptest::num::u64::ANY,
    ) {
        let f = ProbabilisticForecast {
            means: vec![mean; 4],
            stds: vec![std; 4],
        };
        let a = sample_trajectories(&f, 8, seed);
        let b = sample_trajectories(&f, 8, seed);
        prop_assert_eq!(&a, &b);
        prop_assert!(a.iter().flatten().all(|&r| r >= 0.0));
    }

    #[test]
    fn integerize_feasible_and_no_worse_than_floor(
        xs in proptest::collection::vec(1.0f64..6.0, 2..5),
        cap_slack in 0.0f64..4.0,
    ) {
        let n = xs.len();
        let jobs: Vec<JobSpec> = (0..n)
            .map(|i| JobSpec {
                id: format!("j{i}"),
                service_time: 0.18,
                slo: slo(0.72),
                priority: 1.0,
                cpu_per_replica: 1.0,
                mem_per_replica: 1e9,
            })
            .collect();
        let loads: Vec<JobLoad> = (0..n)
            .map(|i| JobLoad::constant(4.0 + i as f64 * 3.0, 2))
            .collect();
        let spec = ClusterObjectiveSpec::new(ObjectiveKind::Sum, ObjectiveForm::Relaxed);
        let cap = xs.iter().map(|x| x.floor().max(1.0)).sum::<f64>() + cap_slack;
        let limits = ResourceLimits { max_cpu: cap, max_mem: cap * 1e9 };
        let continuous = AllocationPlan { replicas: xs, drop_rates: vec![0.0; n] };
        let ev = ObjectiveEvaluator::new(&jobs, &loads, &spec);
        let out = integerize(&continuous, &jobs, &limits, |p| ev.value(p));

        prop_assert!(is_feasible(&constraint_residuals(&out, &jobs, &limits), 1e-9));
        prop_assert!(out.replicas.iter().all(|x| x.fract() == 0.0 && *x >= 1.0));
        let floored = AllocationPlan {
            replicas: continuous.replicas.iter().map(|x| x.floor().max(1.0)).collect(),
            drop_rates: vec![0.0; n],
        };
        prop_assert!(ev.value(&out) + 1e-12 >= ev.value(&floored));
    }
}
