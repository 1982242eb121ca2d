//! Byzantine senders get no scheduling advantage: the delays of their
//! messages follow the same distribution as those of correct senders.

use std::collections::{BTreeSet, HashMap};

use probft::adversary::{AdversarySpec, LeaderStrategy, ReplicaStrategy};
use probft::simnet::{run_simulation, NetConfig, SchedulerPolicy, SimOptions, TraceRecord};
use probft::{ProtocolConfig, ReplicaId};

fn parse_ids(list: &str) -> Vec<u32> {
    list.trim_matches(|c| c == '[' || c == ']').split(',').map(|x| x.trim().parse().unwrap()).collect()
}

fn sender_of(msg: &str) -> u32 {
    let from = msg.split("from=").nth(1).unwrap();
    from.trim_end_matches(')').split([',', ')']).next().unwrap().parse().unwrap()
}

/// Delays of point-to-point Prepare/Commit sends, split by sender
/// faultiness. Messages that were also forwarded are skipped, since their
/// receipts cannot be told apart.
fn delays(trace: &[TraceRecord], faulty: &BTreeSet<ReplicaId>) -> (Vec<u64>, Vec<u64>) {
    let mut sent: HashMap<(String, u32), u64> = HashMap::new();
    let mut forwarded = BTreeSet::new();
    for rec in trace {
        for a in &rec.actions {
            if let Some(rest) = a.strip_prefix("send ") {
                let (msg, to) = rest.split_once(" -> ").unwrap();
                if msg.starts_with("Prepare") || msg.starts_with("Commit") {
                    for r in parse_ids(to) {
                        sent.insert((msg.to_string(), r), rec.t);
                    }
                }
            } else if let Some(msg) = a.strip_prefix("broadcast ") {
                forwarded.insert(msg.to_string());
            }
        }
    }
    let (mut bad, mut good) = (Vec::new(), Vec::new());
    for rec in trace {
        let Some(msg) = rec.event.strip_prefix("recv ") else { continue };
        if forwarded.contains(msg) {
            continue;
        }
        if let Some(t0) = sent.remove(&(msg.to_string(), rec.replica)) {
            let d = rec.t - t0;
            if faulty.contains(&ReplicaId(sender_of(msg))) {
                bad.push(d);
            } else {
                good.push(d);
            }
        }
    }
    (bad, good)
}

fn ks_statistic(a: &mut [u64], b: &mut [u64]) -> f64 {
    a.sort_unstable();
    b.sort_unstable();
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] == x {
            i += 1;
        }
        while j < b.len() && b[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

#[test]
fn faulty_and_correct_delays_match() {
    let net = NetConfig { gst: 0, delta: 10, policy: SchedulerPolicy::UniformRandom, ..NetConfig::default() };
    let faulty: BTreeSet<ReplicaId> = (1..=5).map(ReplicaId).collect();
    let adv = AdversarySpec::new(faulty.clone(), LeaderStrategy::EquivOptimal, ReplicaStrategy::PartitionConsistent);
    let opts = SimOptions { trace: true, ..SimOptions::views(1) };
    let (mut bad, mut good) = (Vec::new(), Vec::new());
    for seed in 0..30 {
        let cfg = ProtocolConfig::new(25, 5, 2.0, 1.7, seed).unwrap();
        let report = run_simulation(&cfg, &net, &adv, &opts);
        let (b, g) = delays(report.trace.as_ref().unwrap(), &faulty);
        bad.extend(b);
        good.extend(g);
    }
    assert!(bad.len() > 500 && good.len() > 500, "{} faulty, {} correct", bad.len(), good.len());
    assert!(bad.iter().chain(&good).all(|d| (1..=10).contains(d)));
    let d = ks_statistic(&mut bad, &mut good);
    let (n, m) = (bad.len() as f64, good.len() as f64);
    // two-sample critical value at alpha = 0.001
    let critical = 1.949 * ((n + m) / (n * m)).sqrt();
    assert!(d < critical, "KS D = {d:.4} >= {critical:.4}");
}

#[test]
fn ks_statistic_detects_a_shift() {
    let mut a: Vec<u64> = (0..1000).map(|i| 1 + i % 10).collect();
    let mut b: Vec<u64> = (0..1000).map(|i| 3 + i % 10).collect();
    assert!((ks_statistic(&mut a, &mut b) - 0.2).abs() < 1e-12);
}
