//! Monte-Carlo estimators.
//!
//! Two modes are offered. [`Mode::OrderFree`] draws the VRF samples
//! directly and counts in-degrees, ignoring message order and blocking, in
//! the same way the closed-form analysis does. [`Mode::EventOrdered`] runs
//! the full simulator per trial.
//!
//! Every trial seeds its own generator from a ChaCha8 stream selected by
//! the trial index, and trial results are combined with integer sums, so
//! estimates do not depend on the number of worker threads.

use std::collections::BTreeSet;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversarySpec, LeaderStrategy, ReplicaStrategy};
use crate::simnet::{run_simulation, NetConfig, SimOptions};
use crate::types::{ProtocolConfig, ReplicaId, View};

const Z95: f64 = 1.959_963_984_540_054;

/// A proportion with its Wilson 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub trials: u64,
    pub p_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn new(successes: u64, trials: u64) -> Self {
        assert!(trials > 0 && successes <= trials);
        let (lo, hi) = wilson_interval(successes, trials, Z95);
        Estimate { successes, trials, p_hat: successes as f64 / trials as f64, lo, hi }
    }

    /// `3 / trials`, the 95% upper bound when nothing was observed.
    pub fn rule_of_three(&self) -> Option<f64> {
        (self.successes == 0).then(|| 3.0 / self.trials as f64)
    }

    /// Binomial standard error at `p_hat`.
    pub fn std_error(&self) -> f64 {
        (self.p_hat * (1.0 - self.p_hat) / self.trials as f64).sqrt()
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

/// Per-trial generator. Xoshiro is used for speed; its state comes from
/// ChaCha8, so streams of different trials are independent.
pub type TrialRng = Xoshiro256PlusPlus;

/// RNG for trial `index` of an experiment seeded with `base_seed`.
pub fn trial_rng(base_seed: u64, index: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    TrialRng::from_rng(&mut rng)
}

/// Floyd's algorithm for uniform `s`-subsets of `0..n`, reusing a marker
/// array between draws.
#[derive(Debug, Clone)]
pub struct SubsetSampler {
    mark: Vec<u32>,
    generation: u32,
}

impl SubsetSampler {
    pub fn new(n: usize) -> Self {
        SubsetSampler { mark: vec![0; n], generation: 0 }
    }

    /// Appends a uniform `s`-subset of `0..n` to `out` (unordered).
    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R, n: usize, s: usize, out: &mut Vec<u32>) {
        assert!(s <= n && n <= self.mark.len());
        if self.generation == u32::MAX {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.generation = 0;
        }
        self.generation += 1;
        let g = self.generation;
        let mark = &mut self.mark[..n];
        for j in (n - s) as u32..n as u32 {
            let t = rng.random_range(0..=j);
            let pick = if mark[t as usize] == g { j } else { t };
            mark[pick as usize] = g;
            out.push(pick);
        }
    }
}

/// How a replica takes part in an order-free trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Correct and voting for proposal `i`.
    Voter(usize),
    /// Correct but silent: blocked, unassigned, or a silent fault.
    Silent,
    /// Faulty, sending each recipient the value of its partition.
    Consistent,
}

/// One replica's prepare and commit samples for every sender.
pub struct Samples {
    s: usize,
    prepare: Vec<u32>,
    commit: Vec<u32>,
}

impl Samples {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, sampler: &mut SubsetSampler, n: usize, s: usize) -> Self {
        let mut prepare = Vec::with_capacity(n * s);
        let mut commit = Vec::with_capacity(n * s);
        for _ in 0..n {
            sampler.sample(rng, n, s, &mut prepare);
        }
        for _ in 0..n {
            sampler.sample(rng, n, s, &mut commit);
        }
        Samples { s, prepare, commit }
    }

    fn prepare_of(&self, u: usize) -> &[u32] {
        &self.prepare[u * self.s..(u + 1) * self.s]
    }

    fn commit_of(&self, u: usize) -> &[u32] {
        &self.commit[u * self.s..(u + 1) * self.s]
    }
}

/// Per-replica results of one order-free trial.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialOutcome {
    pub prepared: Vec<bool>,
    pub decided: Vec<bool>,
    /// Bitmask of proposal indices some correct replica decided.
    pub values_decided: u64,
}

impl TrialOutcome {
    pub fn violation(&self) -> bool {
        self.values_decided.count_ones() >= 2
    }
}

/// Supplies each sender's sample for a phase.
pub trait SampleSource {
    /// Appends sender `u`'s Prepare (or Commit) sample to `out`.
    fn fill(&mut self, commit: bool, u: usize, out: &mut Vec<u32>);
}

impl SampleSource for &Samples {
    fn fill(&mut self, commit: bool, u: usize, out: &mut Vec<u32>) {
        out.extend_from_slice(if commit { self.commit_of(u) } else { self.prepare_of(u) });
    }
}

/// Draws samples on demand, only for senders that actually send.
pub struct FreshSamples<'a, R: Rng + ?Sized> {
    pub rng: &'a mut R,
    pub sampler: &'a mut SubsetSampler,
    pub n: usize,
    pub s: usize,
}

impl<R: Rng + ?Sized> SampleSource for FreshSamples<'_, R> {
    fn fill(&mut self, _commit: bool, _u: usize, out: &mut Vec<u32>) {
        self.sampler.sample(self.rng, self.n, self.s, out);
    }
}

/// Counts, for every voter, matching Prepares and then matching Commits
/// from the replicas that prepared (plus the faulty ones).
pub fn order_free_trial(roles: &[Role], q: usize, samples: &Samples) -> TrialOutcome {
    order_free_trial_with(roles, q, &mut &*samples)
}

pub fn order_free_trial_with<S: SampleSource>(roles: &[Role], q: usize, source: &mut S) -> TrialOutcome {
    let n = roles.len();
    // voter i is coded i + 1, everybody else 0
    let code: Vec<u32> = roles.iter().map(|r| if let Role::Voter(i) = r { *i as u32 + 1 } else { 0 }).collect();
    let mut count = vec![0usize; n];
    let mut buf = Vec::new();
    let tally = |ru: Role, buf: &[u32], count: &mut [usize]| match ru {
        Role::Voter(i) => {
            let want = i as u32 + 1;
            for &t in buf {
                count[t as usize] += usize::from(code[t as usize] == want);
            }
        }
        Role::Consistent => {
            for &t in buf {
                count[t as usize] += usize::from(code[t as usize] != 0);
            }
        }
        Role::Silent => {}
    };
    for (u, &ru) in roles.iter().enumerate() {
        if ru == Role::Silent {
            continue;
        }
        buf.clear();
        source.fill(false, u, &mut buf);
        tally(ru, &buf, &mut count);
    }
    let prepared: Vec<bool> =
        (0..n).map(|t| matches!(roles[t], Role::Voter(_)) && count[t] >= q).collect();
    count.iter_mut().for_each(|c| *c = 0);
    for (u, &ru) in roles.iter().enumerate() {
        let commits = match ru {
            Role::Voter(_) => prepared[u],
            Role::Consistent => true,
            Role::Silent => false,
        };
        if !commits {
            continue;
        }
        buf.clear();
        source.fill(true, u, &mut buf);
        tally(ru, &buf, &mut count);
    }
    let decided: Vec<bool> = (0..n).map(|t| prepared[t] && count[t] >= q).collect();
    let mut values_decided = 0u64;
    for t in 0..n {
        if let (true, Role::Voter(i)) = (decided[t], roles[t]) {
            values_decided |= 1 << i;
        }
    }
    TrialOutcome { prepared, decided, values_decided }
}

/// Correct leader, `f` silent faults (the last `f` indices).
pub fn termination_roles(n: usize, f: usize) -> Vec<Role> {
    (0..n).map(|i| if i < n - f { Role::Voter(0) } else { Role::Silent }).collect()
}

/// Optimal split: correct replicas in two halves by index, the last `f`
/// indices faulty and partition-consistent.
pub fn optimal_split_roles(n: usize, f: usize) -> Vec<Role> {
    let half = (n - f) / 2;
    (0..n)
        .map(|i| {
            if i >= n - f {
                Role::Consistent
            } else if i < half {
                Role::Voter(0)
            } else {
                Role::Voter(1)
            }
        })
        .collect()
}

/// Roles for a leader sending proposal `i` to `sets[i]` (zero-based
/// indices of correct replicas). Correct replicas named in several sets
/// see the equivocation and stay silent, as do those in none.
pub fn general_roles(n: usize, f: usize, sets: &[Vec<usize>]) -> Vec<Role> {
    let mut roles = vec![Role::Silent; n];
    let mut hits = vec![0usize; n];
    for (i, set) in sets.iter().enumerate() {
        for &r in set {
            if r < n - f {
                hits[r] += 1;
                roles[r] = Role::Voter(i);
            }
        }
    }
    for r in 0..n - f {
        if hits[r] > 1 {
            roles[r] = Role::Silent;
        }
    }
    for role in roles.iter_mut().skip(n - f) {
        *role = Role::Consistent;
    }
    roles
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    OrderFree,
    EventOrdered,
}

/// Integer tallies summed across trials.
#[derive(Debug, Clone, Copy, Default)]
struct Tally([u64; 6]);

impl Tally {
    fn add(mut self, o: Tally) -> Tally {
        for i in 0..6 {
            self.0[i] += o.0[i];
        }
        self
    }
}

fn run_trials<F>(trials: u64, base_seed: u64, n: usize, trial: F) -> Tally
where
    F: Fn(&mut TrialRng, &mut SubsetSampler, u64) -> Tally + Sync,
{
    (0..trials)
        .into_par_iter()
        .map_init(
            || SubsetSampler::new(n),
            |sampler, i| {
                let mut rng = trial_rng(base_seed, i);
                trial(&mut rng, sampler, i)
            },
        )
        .reduce(Tally::default, Tally::add)
}

fn b(x: bool) -> u64 {
    u64::from(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareQuorumEstimate {
    /// A designated correct replica reaches `q` Prepares.
    pub target: Estimate,
    /// Every correct replica does.
    pub all_targets: Estimate,
}

/// `n - f` correct senders each send to a uniform `s`-subset; faults are
/// silent. Replica 0 is the designated target.
pub fn estimate_prepare_quorum(cfg: &ProtocolConfig, trials: u64, base_seed: u64) -> PrepareQuorumEstimate {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let t = run_trials(trials, base_seed, n, |rng, sampler, _| {
        let mut deg = vec![0usize; n];
        let mut buf = Vec::with_capacity(s);
        for _ in 0..n - f {
            buf.clear();
            sampler.sample(rng, n, s, &mut buf);
            for &x in &buf {
                deg[x as usize] += 1;
            }
        }
        let all = deg[..n - f].iter().all(|d| *d >= q);
        Tally([b(deg[0] >= q), b(all), 0, 0, 0, 0])
    });
    PrepareQuorumEstimate { target: Estimate::new(t.0[0], trials), all_targets: Estimate::new(t.0[1], trials) }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub i: usize,
    pub j: usize,
    pub trials: u64,
    pub cov: f64,
    pub std_error: f64,
    pub p_i: f64,
    pub p_j: f64,
}

/// Sample covariance of the indicators "replica `i` reaches `q` Prepares"
/// and "replica `j` does", with its standard error.
pub fn estimate_quorum_covariance(
    cfg: &ProtocolConfig,
    trials: u64,
    base_seed: u64,
    i: usize,
    j: usize,
) -> CovarianceEstimate {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let t = run_trials(trials, base_seed, n, |rng, sampler, _| {
        let mut deg = vec![0usize; n];
        let mut buf = Vec::with_capacity(s);
        for _ in 0..n - f {
            buf.clear();
            sampler.sample(rng, n, s, &mut buf);
            for &x in &buf {
                deg[x as usize] += 1;
            }
        }
        let (xi, xj) = (deg[i] >= q, deg[j] >= q);
        let mut tally = Tally::default();
        tally.0[usize::from(xi) * 2 + usize::from(xj)] = 1;
        tally
    });
    // joint counts of (x_i, x_j) = 00, 01, 10, 11
    let c = [t.0[0] as f64, t.0[1] as f64, t.0[2] as f64, t.0[3] as f64];
    let n_t = trials as f64;
    let p_i = (c[2] + c[3]) / n_t;
    let p_j = (c[1] + c[3]) / n_t;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for (k, count) in c.iter().enumerate() {
        let xi = (k / 2) as f64;
        let xj = (k % 2) as f64;
        let z = (xi - p_i) * (xj - p_j);
        sum += count * z;
        sum_sq += count * z * z;
    }
    let cov = sum / n_t;
    let var = (sum_sq / n_t - cov * cov).max(0.0);
    CovarianceEstimate { i, j, trials, cov, std_error: (var / n_t).sqrt(), p_i, p_j }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminationEstimate {
    /// A designated correct replica reaches `q` Prepares.
    pub prepare_marginal: Estimate,
    /// A designated correct replica decides.
    pub per_replica: Estimate,
    /// Decisions over all (trial, correct replica) pairs; not independent
    /// within a trial, so its interval is optimistic.
    pub per_replica_pooled: Estimate,
    /// Every correct replica decides.
    pub all_replicas: Estimate,
}

/// One view with a correct leader and silent faults.
pub fn estimate_termination(cfg: &ProtocolConfig, trials: u64, mode: Mode, base_seed: u64) -> TerminationEstimate {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let correct = (n - f) as u64;
    let t = match mode {
        Mode::OrderFree => {
            let roles = termination_roles(n, f);
            run_trials(trials, base_seed, n, |rng, sampler, _| {
                let out = order_free_trial_with(&roles, q, &mut FreshSamples { rng, sampler, n, s });
                let decided = out.decided.iter().filter(|d| **d).count() as u64;
                Tally([b(out.prepared[0]), b(out.decided[0]), decided, b(decided == correct), 0, 0])
            })
        }
        Mode::EventOrdered => {
            // replica 1 leads view 1; the last f replicas are silent
            let adv = AdversarySpec::new(
                (n - f + 1..=n).map(|i| ReplicaId(i as u32)),
                LeaderStrategy::Silent,
                ReplicaStrategy::Silent,
            );
            run_trials(trials, base_seed, n, |rng, _, _| {
                let run_cfg = cfg.with_seed(rng.next_u64());
                let rep = run_simulation(&run_cfg, &NetConfig::default(), &adv, &SimOptions::views(1));
                let m = &rep.metrics;
                // the designated replica is the first non-leader
                let target = if n > 1 { 1 } else { 0 };
                let prepared = m.decisions[target].is_some() || prepared_in_view_one(&rep.metrics, target, cfg);
                let decided = m.decided_count() as u64;
                Tally([b(prepared), b(m.decisions[target].is_some()), decided, b(decided == correct), 0, 0])
            })
        }
    };
    TerminationEstimate {
        prepare_marginal: Estimate::new(t.0[0], trials),
        per_replica: Estimate::new(t.0[1], trials),
        per_replica_pooled: Estimate::new(t.0[2], trials * correct),
        all_replicas: Estimate::new(t.0[3], trials),
    }
}

/// Whether replica `idx` formed a prepare quorum, from its in-degree.
/// Used only where the simulator did not record a decision.
fn prepared_in_view_one(m: &crate::simnet::RunMetrics, idx: usize, cfg: &ProtocolConfig) -> bool {
    m.prepare_in_degree[idx] >= cfg.q as u64
}

/// Optimal-split equivocation: the faulty leader sends two values to two
/// halves of the correct replicas; faults vote partition-consistently.
/// A violation is two correct replicas deciding different values.
pub fn estimate_agreement_violation(cfg: &ProtocolConfig, trials: u64, mode: Mode, base_seed: u64) -> Estimate {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let t = match mode {
        Mode::OrderFree => {
            let roles = optimal_split_roles(n, f);
            run_trials(trials, base_seed, n, |rng, sampler, _| {
                let out = order_free_trial_with(&roles, q, &mut FreshSamples { rng, sampler, n, s });
                Tally([b(out.violation()), 0, 0, 0, 0, 0])
            })
        }
        Mode::EventOrdered => {
            if f == 0 {
                return Estimate::new(0, trials);
            }
            // replica 1 leads view 1 and is faulty
            let adv = AdversarySpec::new(
                (1..=f).map(|i| ReplicaId(i as u32)),
                LeaderStrategy::EquivOptimal,
                ReplicaStrategy::PartitionConsistent,
            );
            run_trials(trials, base_seed, n, |rng, _, _| {
                let run_cfg = cfg.with_seed(rng.next_u64());
                let rep = run_simulation(&run_cfg, &NetConfig::default(), &adv, &SimOptions::views(1));
                Tally([b(rep.metrics.agreement_violated), 0, 0, 0, 0, 0])
            })
        }
    };
    Estimate::new(t.0[0], trials)
}

/// Order-free violation rate for an arbitrary proposal plan over the
/// correct replicas `0..n-f` (zero-based), faults partition-consistent.
pub fn estimate_general_violation(cfg: &ProtocolConfig, sets: &[Vec<usize>], trials: u64, base_seed: u64) -> Estimate {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let roles = general_roles(n, f, sets);
    let t = run_trials(trials, base_seed, n, |rng, sampler, _| {
        let out = order_free_trial_with(&roles, q, &mut FreshSamples { rng, sampler, n, s });
        Tally([b(out.violation()), 0, 0, 0, 0, 0])
    });
    Estimate::new(t.0[0], trials)
}

/// The correct replicas `0..n-f` cut into `m` contiguous sets of
/// near-equal size.
pub fn even_split(n: usize, f: usize, m: usize) -> Vec<Vec<usize>> {
    let c = n - f;
    (0..m).map(|i| (i * c / m..(i + 1) * c / m).collect()).collect()
}

/// Merges sets `a` and `b` of a plan into one.
pub fn merge_sets(sets: &[Vec<usize>], a: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut merged: Vec<usize> = sets[a].iter().chain(&sets[b]).copied().collect();
    merged.sort_unstable();
    merged.dedup();
    for (i, set) in sets.iter().enumerate() {
        if i == a {
            out.push(merged.clone());
        } else if i != b {
            out.push(set.clone());
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeComparison {
    /// Violation rate with the original sets.
    pub split: Estimate,
    /// Violation rate after merging two sets.
    pub merged: Estimate,
    /// Mean of `merged - split` per paired trial.
    pub diff_mean: f64,
    pub diff_std_error: f64,
    /// Lower end of the two-sided 95% interval of `diff_mean`.
    pub diff_lo: f64,
}

/// Paired comparison of a plan and the plan with two sets merged. Both
/// scenarios reuse every sender's samples within a trial.
pub fn compare_plans(
    cfg: &ProtocolConfig,
    split: &[Vec<usize>],
    merged: &[Vec<usize>],
    trials: u64,
    base_seed: u64,
) -> MergeComparison {
    let (n, f, q, s) = (cfg.n, cfg.f, cfg.q, cfg.s);
    let roles_split = general_roles(n, f, split);
    let roles_merged = general_roles(n, f, merged);
    let t = run_trials(trials, base_seed, n, |rng, sampler, _| {
        let samples = Samples::draw(rng, sampler, n, s);
        let a = order_free_trial(&roles_split, q, &samples).violation();
        let m = order_free_trial(&roles_merged, q, &samples).violation();
        // 0: split, 1: merged, 2: merged only, 3: split only
        Tally([b(a), b(m), b(m && !a), b(a && !m), 0, 0])
    });
    let tn = trials as f64;
    let diff_mean = (t.0[2] as f64 - t.0[3] as f64) / tn;
    let second = (t.0[2] + t.0[3]) as f64 / tn;
    let var = (second - diff_mean * diff_mean).max(0.0);
    let diff_std_error = (var / tn).sqrt();
    MergeComparison {
        split: Estimate::new(t.0[0], trials),
        merged: Estimate::new(t.0[1], trials),
        diff_mean,
        diff_std_error,
        diff_lo: diff_mean - Z95 * diff_std_error,
    }
}

/// `m + 1` even sets against the same plan with the first two merged.
pub fn compare_merge_strategies(cfg: &ProtocolConfig, m: usize, trials: u64, base_seed: u64) -> MergeComparison {
    let split = even_split(cfg.n, cfg.f, m + 1);
    let merged = merge_sets(&split, 0, 1);
    compare_plans(cfg, &split, &merged, trials, base_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewChangeEstimate {
    /// Among trials with a view-1 decision, those in which a correct
    /// replica accepted a different value in view 2.
    pub conditional: Estimate,
    pub decided_trials: u64,
    pub trials: u64,
}

/// Two views: an equivocating leader in view 1, then a leader of view 2
/// that is faulty (`faulty_second_leader`) or correct.
pub fn estimate_view_change_violation(
    cfg: &ProtocolConfig,
    trials: u64,
    faulty_second_leader: bool,
    base_seed: u64,
) -> ViewChangeEstimate {
    let (n, f) = (cfg.n, cfg.f);
    if f == 0 {
        return ViewChangeEstimate { conditional: Estimate::new(0, 1), decided_trials: 0, trials };
    }
    let faulty: BTreeSet<ReplicaId> = if faulty_second_leader || f == 1 {
        (1..=f).map(|i| ReplicaId(i as u32)).collect()
    } else {
        std::iter::once(1).chain(3..=f + 1).map(|i| ReplicaId(i as u32)).collect()
    };
    let adv = AdversarySpec::new(faulty, LeaderStrategy::EquivOptimal, ReplicaStrategy::PartitionConsistent);
    let opts = SimOptions { max_views: 2, trace: false, stop_when_decided: false };
    let t = run_trials(trials, base_seed, n, |rng, _, _| {
        let run_cfg = cfg.with_seed(rng.next_u64());
        let rep = run_simulation(&run_cfg, &NetConfig::default(), &adv, &opts);
        let m = &rep.metrics;
        let Some(decided) = m.decisions.iter().flatten().find(|d| d.view == View(1)) else {
            return Tally::default();
        };
        let bad = m.per_view.get(&2).is_some_and(|vm| vm.voted_values.iter().any(|x| *x != decided.value));
        Tally([1, b(bad), 0, 0, 0, 0])
    });
    let decided_trials = t.0[0];
    let conditional = if decided_trials == 0 { Estimate::new(0, 1) } else { Estimate::new(t.0[1], decided_trials) };
    ViewChangeEstimate { conditional, decided_trials, trials }
}

/// What an experiment measures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PrepareQuorum,
    Termination,
    AgreementOptimalSplit,
    /// Zero-based correct-replica sets, one per proposal.
    AgreementGeneral { sets: Vec<Vec<usize>> },
    /// `m + 1` even sets against the first two merged.
    MergeComparison { m: usize },
    ViewChange { faulty_second_leader: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub cfg: ProtocolConfig,
    pub trials: u64,
    pub mode: Mode,
    pub base_seed: u64,
}

/// One named estimate of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub metric: String,
    pub estimate: Estimate,
}

pub fn run_experiment(spec: &ExperimentSpec) -> Vec<MetricRow> {
    let row = |metric: &str, estimate: Estimate| MetricRow { metric: metric.to_string(), estimate };
    let (cfg, trials, seed) = (&spec.cfg, spec.trials, spec.base_seed);
    match &spec.kind {
        ExperimentKind::PrepareQuorum => {
            let e = estimate_prepare_quorum(cfg, trials, seed);
            vec![row("prepare_quorum_target", e.target), row("prepare_quorum_all", e.all_targets)]
        }
        ExperimentKind::Termination => {
            let e = estimate_termination(cfg, trials, spec.mode, seed);
            vec![
                row("prepare_marginal", e.prepare_marginal),
                row("termination_per_replica", e.per_replica),
                row("termination_per_replica_pooled", e.per_replica_pooled),
                row("termination_all_replicas", e.all_replicas),
            ]
        }
        ExperimentKind::AgreementOptimalSplit => {
            vec![row("agreement_violation", estimate_agreement_violation(cfg, trials, spec.mode, seed))]
        }
        ExperimentKind::AgreementGeneral { sets } => {
            vec![row("agreement_violation_general", estimate_general_violation(cfg, sets, trials, seed))]
        }
        ExperimentKind::MergeComparison { m } => {
            let c = compare_merge_strategies(cfg, *m, trials, seed);
            vec![row("violation_split", c.split), row("violation_merged", c.merged)]
        }
        ExperimentKind::ViewChange { faulty_second_leader } => {
            let e = estimate_view_change_violation(cfg, trials, *faulty_second_leader, seed);
            vec![row("view_change_violation", e.conditional)]
        }
    }
}
