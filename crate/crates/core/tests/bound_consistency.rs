//! Monte-Carlo estimates against the closed-form bounds on the standard
//! grid. A lower bound may not exceed the upper end of the estimate's 95%
//! interval, and an upper bound may not fall below its lower end.

use probft::analysis::{self, standard_grid, BoundResult};
use probft::montecarlo::{estimate_agreement_violation, estimate_prepare_quorum, estimate_termination, Mode};
use probft::ProtocolConfig;

const TRIALS: u64 = 2000;

fn check_lower(name: &str, cfg: &ProtocolConfig, bound: BoundResult, hi: f64, failures: &mut Vec<String>) {
    if bound.applicable && bound.value > hi {
        failures.push(format!("{name} n={} f={} o={}: bound {} > {}", cfg.n, cfg.f, cfg.o, bound.value, hi));
    }
}

#[test]
fn estimates_respect_bounds_on_standard_grid() {
    let mut failures = Vec::new();
    let mut checked = 0;
    for p in standard_grid() {
        let cfg = ProtocolConfig::new(p.n, p.f, p.l, p.o, 0).unwrap();
        let (n, f, o, q) = (cfg.n, cfg.f, cfg.o, cfg.q);
        let seed = (n * 1000 + f) as u64;

        let pq = estimate_prepare_quorum(&cfg, TRIALS, seed);
        check_lower("quorum_prob_lower", &cfg, analysis::quorum_prob_lower_bound(n, f, o, q), pq.target.hi, &mut failures);
        check_lower("epsilon_quorum", &cfg, analysis::epsilon_quorum_bound(n, f, o, p.l), pq.target.hi, &mut failures);

        let t = estimate_termination(&cfg, TRIALS, Mode::OrderFree, seed);
        check_lower(
            "per_replica_termination",
            &cfg,
            analysis::per_replica_termination_bound(n, f, o, q),
            t.per_replica.hi,
            &mut failures,
        );
        check_lower(
            "all_replicas_termination",
            &cfg,
            analysis::all_replicas_termination_bound(n, f, o, q),
            t.all_replicas.hi,
            &mut failures,
        );

        let v = estimate_agreement_violation(&cfg, TRIALS, Mode::OrderFree, seed);
        for bound in [
            analysis::agreement_violation_in_view_bound(n, f, o, q),
            analysis::agreement_violation_conservative_bound(n, f, o, q),
        ] {
            if bound.applicable && bound.value < v.lo {
                failures.push(format!("violation n={n} f={f} o={o}: bound {} < {}", bound.value, v.lo));
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 60);
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}
