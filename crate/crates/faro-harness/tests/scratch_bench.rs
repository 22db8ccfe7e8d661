// temporary benchmarking scratch; removed before finalizing
use faro_harness::{prepare, run_policy_trials, ten_job_mix, PolicyName};

#[test]
#[ignore]
fn bench_one_trial() {
    let mut config = ten_job_mix("bench", 32, 1, 42);
    config.policies = vec![PolicyName::FaroFairsum];
    let prepared = prepare(&config).unwrap();
    let start = std::time::Instant::now();
    let reports = run_policy_trials(&config, &prepared, PolicyName::FaroFairsum, 1).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let r = &reports[0];
    println!(
        "trial wall {elapsed:.1}s  lost_utility {:.4} violation {:.4} degraded {} arrivals {}",
        r.mean_lost_utility,
        r.cluster_violation_rate,
        r.degraded_cycles,
        r.jobs.iter().map(|j| j.arrivals).sum::<u64>()
    );
}

#[test]
#[ignore]
fn bench_all_policies_short() {
    // 6-hour runs, 1 seed: quick ranking sanity.
    let mut config = ten_job_mix("rank", 32, 1, 42);
    config.duration_minutes = 1440;
    let prepared = prepare(&config).unwrap();
    for policy in PolicyName::all() {
        let start = std::time::Instant::now();
        let reports = run_policy_trials(&config, &prepared, policy, 1).unwrap();
        let r = &reports[0];
        println!(
            "{:<22} lost {:.4} viol {:.4} wall {:.1}s",
            policy.as_str(),
            r.mean_lost_utility,
            r.cluster_violation_rate,
            start.elapsed().as_secs_f64()
        );
    }
}
