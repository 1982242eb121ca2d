//! Deterministic discrete-event network.
//!
//! Time is measured in integer ticks. Correct replicas run the
//! [`engine`](crate::engine) state machine; faulty ones are driven by an
//! [`adversary::Coalition`](crate::adversary::Coalition). Delivery times
//! come from a scheduler that never sees who sent a message, and view
//! changes come from an oracle synchronizer.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::{AdversarySpec, Coalition};
use crate::crypto::{vrf_seed, SimCrypto, Verifier};
use crate::engine::{Notification, OutboundAction, Replica, ReplicaEvent};
use crate::message::{Message, MessageKind};
use crate::predicates::always_valid;
use crate::types::{ProtocolConfig, ReplicaId, Value, View};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerPolicy {
    UniformRandom,
    Fixed,
    /// Uniform delays, with same-tick deliveries shuffled.
    OrderRandomized,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    pub gst: u64,
    pub delta: u64,
    pub pre_gst_max_delay: u64,
    pub view_duration: u64,
    pub policy: SchedulerPolicy,
    /// Delay used by [`SchedulerPolicy::Fixed`].
    pub fixed_delay: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            gst: 0,
            delta: 10,
            pre_gst_max_delay: 100,
            view_duration: 100,
            policy: SchedulerPolicy::OrderRandomized,
            fixed_delay: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetConfigError {
    #[error("delta must be positive")]
    ZeroDelta,
    #[error("view_duration={view_duration} must be at least 5*delta={}", 5 * .delta)]
    ViewTooShort { view_duration: u64, delta: u64 },
    #[error("fixed_delay={fixed_delay} must be in 1..=delta={delta}")]
    BadFixedDelay { fixed_delay: u64, delta: u64 },
    #[error("pre_gst_max_delay must be positive")]
    ZeroPreGstDelay,
}

impl NetConfig {
    /// Synchronous from the start with every message taking `delay` ticks.
    pub fn fixed(delay: u64) -> Self {
        NetConfig {
            gst: 0,
            delta: delay,
            pre_gst_max_delay: delay,
            view_duration: 10 * delay,
            policy: SchedulerPolicy::Fixed,
            fixed_delay: delay,
        }
    }

    pub fn validate(&self) -> Result<(), NetConfigError> {
        if self.delta == 0 {
            return Err(NetConfigError::ZeroDelta);
        }
        if self.view_duration < 5 * self.delta {
            return Err(NetConfigError::ViewTooShort { view_duration: self.view_duration, delta: self.delta });
        }
        if self.fixed_delay == 0 || self.fixed_delay > self.delta {
            return Err(NetConfigError::BadFixedDelay { fixed_delay: self.fixed_delay, delta: self.delta });
        }
        if self.pre_gst_max_delay == 0 {
            return Err(NetConfigError::ZeroPreGstDelay);
        }
        Ok(())
    }

    /// Start of view `v` on the synchronizer's clock.
    pub fn view_start(&self, v: View) -> u64 {
        (v.0 - 1) * self.view_duration
    }

    /// First view that starts at or after GST.
    pub fn first_post_gst_view(&self) -> View {
        View(self.gst.div_ceil(self.view_duration) + 1)
    }
}

/// Delivery delay for a message sent at `now`. The signature deliberately
/// has no sender: the schedule cannot depend on who sent what.
pub fn delivery_delay<R: Rng + ?Sized>(net: &NetConfig, now: u64, rng: &mut R) -> u64 {
    let d = match net.policy {
        SchedulerPolicy::Fixed => net.fixed_delay,
        SchedulerPolicy::UniformRandom | SchedulerPolicy::OrderRandomized => {
            if now >= net.gst {
                rng.random_range(1..=net.delta)
            } else {
                rng.random_range(1..=net.pre_gst_max_delay)
            }
        }
    };
    // messages in flight at GST arrive by GST + delta
    if now < net.gst {
        d.min(net.gst + net.delta - now)
    } else {
        d
    }
}

/// Oracle synchronizer: view `v` nominally starts at `(v-1)*view_duration`.
/// Before GST each replica enters late by an independent skew of up to
/// `pre_gst_max_delay`; from GST on every replica enters on time.
pub struct Synchronizer {
    net: NetConfig,
    rng: ChaCha8Rng,
}

impl Synchronizer {
    pub fn new(net: NetConfig, rng: ChaCha8Rng) -> Self {
        Synchronizer { net, rng }
    }

    pub fn entry_times(&mut self, v: View, n: usize) -> Vec<(ReplicaId, u64)> {
        let start = self.net.view_start(v);
        (0..n)
            .map(|i| {
                let t = if start >= self.net.gst {
                    start
                } else {
                    let skew = self.rng.random_range(0..=self.net.pre_gst_max_delay);
                    (start + skew).min(self.net.gst.max(start))
                };
                (ReplicaId::from_index(i), t)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewMetrics {
    /// Point-to-point messages sent, by [`MessageKind::index`].
    pub messages: [u64; 4],
    pub blocks: u64,
    /// Quorums formed, by kind (Propose slot unused).
    pub quorums: [u64; 4],
    /// Proposals accepted by correct replicas.
    pub votes: u64,
    /// Distinct values correct replicas accepted.
    pub voted_values: BTreeSet<Value>,
}

impl ViewMetrics {
    pub fn total_messages(&self) -> u64 {
        self.messages.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub value: Value,
    pub view: View,
    pub time: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Every correct replica had decided by the end of `view`.
    AllDecided { view: View },
    /// `max_views` ran out first.
    NonQuiescent { views: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub per_view: BTreeMap<u64, ViewMetrics>,
    /// First decision of each replica, `None` for faulty or undecided ones.
    pub decisions: Vec<Option<Decision>>,
    /// Correct replicas decided different values (possibly across views).
    pub agreement_violated: bool,
    pub prepare_in_degree: Vec<u64>,
    pub commit_in_degree: Vec<u64>,
    /// Votes whose sample fails VRF verification or whose recipients fall
    /// outside the sample.
    pub vrf_violations: u64,
    pub faulty: Vec<ReplicaId>,
    pub first_post_gst_view: View,
    pub end_time: u64,
}

impl RunMetrics {
    pub fn total_messages(&self) -> u64 {
        self.per_view.values().map(|m| m.total_messages()).sum()
    }

    pub fn messages_of(&self, kind: MessageKind) -> u64 {
        self.per_view.values().map(|m| m.messages[kind.index()]).sum()
    }

    pub fn decided_count(&self) -> usize {
        self.decisions.iter().flatten().count()
    }

    /// Correct replicas whose first decision happened in view `v`.
    pub fn decided_in(&self, v: View) -> usize {
        self.decisions.iter().flatten().filter(|d| d.view == v).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: u64,
    /// 0 for the synchronizer's own events.
    pub replica: u32,
    pub event: String,
    pub actions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub outcome: Outcome,
    pub metrics: RunMetrics,
    pub trace: Option<Vec<TraceRecord>>,
}

impl RunReport {
    /// Trace as JSON lines.
    pub fn trace_jsonl(&self) -> String {
        let mut s = String::new();
        for r in self.trace.iter().flatten() {
            s.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimOptions {
    pub max_views: u64,
    pub trace: bool,
    /// Stop at the first view boundary where every correct replica has
    /// decided; otherwise always run `max_views` views.
    pub stop_when_decided: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { max_views: 20, trace: false, stop_when_decided: true }
    }
}

impl SimOptions {
    pub fn views(max_views: u64) -> Self {
        SimOptions { max_views, ..SimOptions::default() }
    }
}

/// Independent RNG streams derived from the run seed.
const STREAM_DELAY: u64 = 1;
const STREAM_SYNC: u64 = 2;
const STREAM_ORDER: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Same-tick ordering: deliveries, then view boundaries, then view entries.
const CLASS_DELIVER: u8 = 0;
const CLASS_BOUNDARY: u8 = 1;
const CLASS_NEW_VIEW: u8 = 2;

enum EventKind {
    Deliver { to: ReplicaId, msg: Arc<Message> },
    Boundary(View),
    NewView { replica: ReplicaId, view: View },
}

type EventKey = (u64, u8, u64, u64);

struct Sim {
    cfg: Arc<ProtocolConfig>,
    net: NetConfig,
    crypto: Arc<SimCrypto>,
    replicas: Vec<Option<Replica>>,
    coalition: Coalition,
    heap: BinaryHeap<Reverse<EventKey>>,
    events: BTreeMap<u64, EventKind>,
    seq: u64,
    delay_rng: ChaCha8Rng,
    order_rng: ChaCha8Rng,
    sync: Synchronizer,
    metrics: RunMetrics,
    trace: Option<Vec<TraceRecord>>,
}

impl Sim {
    fn push(&mut self, time: u64, class: u8, tiebreak: u64, kind: EventKind) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Reverse((time, class, tiebreak, seq)));
        self.events.insert(seq, kind);
    }

    fn schedule_view(&mut self, v: View) {
        for (r, t) in self.sync.entry_times(v, self.cfg.n) {
            self.push(t, CLASS_NEW_VIEW, 0, EventKind::NewView { replica: r, view: v });
        }
        let end = self.net.view_start(v) + self.net.view_duration;
        self.push(end, CLASS_BOUNDARY, 0, EventKind::Boundary(v));
    }

    fn enqueue(&mut self, now: u64, from: ReplicaId, to: &[ReplicaId], msg: &Arc<Message>, forwarded: bool) {
        let vm = self.view_metrics(msg.view());
        vm.messages[msg.kind().index()] += to.len() as u64;
        // forwarded equivocation evidence is not a vote of the forwarder
        if let (Message::Vote(vote), false) = (msg.as_ref(), forwarded) {
            let ok = vote.sender == from
                && self.crypto.vrf_verify_from(
                    from,
                    &vrf_seed(vote.pair.view, vote.phase),
                    self.cfg.s,
                    &vote.sample,
                    &vote.proof,
                )
                && to.iter().all(|r| vote.sample.binary_search(r).is_ok());
            if !ok {
                self.metrics.vrf_violations += 1;
            }
        }
        for r in to {
            let t = now + delivery_delay(&self.net, now, &mut self.delay_rng);
            let tiebreak = match self.net.policy {
                SchedulerPolicy::OrderRandomized => self.order_rng.random(),
                _ => 0,
            };
            self.push(t, CLASS_DELIVER, tiebreak, EventKind::Deliver { to: *r, msg: msg.clone() });
        }
    }

    fn apply(&mut self, now: u64, from: ReplicaId, actions: Vec<OutboundAction>, log: &mut Vec<String>) {
        for a in actions {
            match a {
                OutboundAction::Send { to, msg } => {
                    if self.trace.is_some() {
                        log.push(format!("send {msg} -> {}", fmt_ids(&to)));
                    }
                    self.enqueue(now, from, &to, &msg, false);
                }
                OutboundAction::Broadcast(msg) => {
                    let to: Vec<ReplicaId> = self.cfg.replicas().filter(|r| *r != from).collect();
                    if self.trace.is_some() {
                        log.push(format!("broadcast {msg}"));
                    }
                    self.enqueue(now, from, &to, &msg, true);
                }
                OutboundAction::Decide { view, value } => {
                    log.push(format!("decide v={view} x={value}"));
                    self.record_decision(from, view, value, now);
                }
                OutboundAction::Notify(n) => match n {
                    Notification::Blocked { view } => {
                        self.view_metrics(view).blocks += 1;
                        log.push(format!("block v={view}"));
                    }
                    Notification::QuorumFormed { kind, view, .. } => {
                        self.view_metrics(view).quorums[kind.index()] += 1;
                        log.push(format!("quorum {} v={view}", kind.name()));
                    }
                    Notification::Voted { view, value } => {
                        log.push(format!("vote v={view} x={value}"));
                        let vm = self.view_metrics(view);
                        vm.votes += 1;
                        vm.voted_values.insert(value);
                    }
                },
            }
        }
    }

    fn view_metrics(&mut self, v: View) -> &mut ViewMetrics {
        self.metrics.per_view.entry(v.0).or_default()
    }

    fn record_decision(&mut self, who: ReplicaId, view: View, value: Value, time: u64) {
        let conflicts = self
            .metrics
            .decisions
            .iter()
            .flatten()
            .any(|d| d.value != value);
        if conflicts {
            self.metrics.agreement_violated = true;
        }
        let slot = &mut self.metrics.decisions[who.index()];
        if slot.is_none() {
            *slot = Some(Decision { value, view, time });
        }
    }

    fn all_correct_decided(&self) -> bool {
        self.replicas
            .iter()
            .enumerate()
            .all(|(i, r)| r.is_none() || self.metrics.decisions[i].is_some())
    }

    fn run(&mut self, max_views: u64, stop_when_decided: bool) -> Outcome {
        self.schedule_view(View(1));
        while let Some(Reverse(key)) = self.heap.pop() {
            let (now, _, _, seq) = key;
            let kind = self.events.remove(&seq).expect("every key has an event");
            self.metrics.end_time = now;
            let mut log = Vec::new();
            let (who, event, actions): (ReplicaId, String, Vec<(ReplicaId, OutboundAction)>) = match kind {
                EventKind::Boundary(v) => {
                    let done = self.all_correct_decided();
                    if done && (stop_when_decided || v.0 >= max_views) {
                        self.record(now, 0, format!("end of view {v}"), vec!["all decided".into()]);
                        return Outcome::AllDecided { view: v };
                    }
                    if v.0 >= max_views {
                        self.record(now, 0, format!("end of view {v}"), vec!["view budget exhausted".into()]);
                        return Outcome::NonQuiescent { views: v.0 };
                    }
                    self.schedule_view(v.next());
                    continue;
                }
                EventKind::NewView { replica, view } => {
                    let ev = format!("new view {view}");
                    let acts = match &mut self.replicas[replica.index()] {
                        Some(r) => tag(replica, r.handle(ReplicaEvent::NewView(view))),
                        None => self.coalition.on_new_view(replica, view),
                    };
                    (replica, ev, acts)
                }
                EventKind::Deliver { to, msg } => {
                    match msg.kind() {
                        MessageKind::Prepare => self.metrics.prepare_in_degree[to.index()] += 1,
                        MessageKind::Commit => self.metrics.commit_in_degree[to.index()] += 1,
                        _ => {}
                    }
                    let ev = if self.trace.is_some() { format!("recv {msg}") } else { String::new() };
                    let acts = match &mut self.replicas[to.index()] {
                        Some(r) => tag(to, r.handle(ReplicaEvent::Inbound(msg))),
                        None => self.coalition.on_deliver(to, &msg),
                    };
                    (to, ev, acts)
                }
            };
            for (from, a) in actions {
                self.apply(now, from, vec![a], &mut log);
            }
            if self.trace.is_some() {
                log.extend(self.coalition.take_notes());
                self.record(now, who.0, event, log);
            }
        }
        unreachable!("the boundary event of the last view is always queued")
    }

    fn record(&mut self, t: u64, replica: u32, event: String, actions: Vec<String>) {
        if let Some(trace) = &mut self.trace {
            trace.push(TraceRecord { t, replica, event, actions });
        }
    }
}

fn tag(who: ReplicaId, actions: Vec<OutboundAction>) -> Vec<(ReplicaId, OutboundAction)> {
    actions.into_iter().map(|a| (who, a)).collect()
}

fn fmt_ids(ids: &[ReplicaId]) -> String {
    let parts: Vec<String> = ids.iter().map(|r| r.to_string()).collect();
    format!("[{}]", parts.join(","))
}

/// The value a correct replica proposes when it leads.
pub fn default_value(id: ReplicaId) -> Value {
    Value::new(format!("value-{id}"))
}

/// Runs one execution. Deterministic in `(cfg, net, adversary, opts)`.
pub fn run_simulation(
    cfg: &ProtocolConfig,
    net: &NetConfig,
    adversary: &AdversarySpec,
    opts: &SimOptions,
) -> RunReport {
    let cfg = Arc::new(cfg.clone());
    let (crypto, keys) = SimCrypto::generate(cfg.n, cfg.rng_seed);
    let crypto = Arc::new(crypto);
    let verifier: Arc<dyn Verifier> = crypto.clone();
    let app_valid: Arc<crate::predicates::AppValid> = Arc::new(always_valid);
    let replicas = keys
        .iter()
        .map(|k| {
            (!adversary.is_faulty(k.owner)).then(|| {
                Replica::new(cfg.clone(), k.clone(), verifier.clone(), app_valid.clone(), default_value(k.owner))
            })
        })
        .collect();
    let coalition = Coalition::new(cfg.clone(), adversary.clone(), &keys, verifier);
    let metrics = RunMetrics {
        per_view: BTreeMap::new(),
        decisions: vec![None; cfg.n],
        agreement_violated: false,
        prepare_in_degree: vec![0; cfg.n],
        commit_in_degree: vec![0; cfg.n],
        vrf_violations: 0,
        faulty: adversary.faulty.iter().copied().collect(),
        first_post_gst_view: net.first_post_gst_view(),
        end_time: 0,
    };
    let seed = cfg.rng_seed;
    let mut sim = Sim {
        cfg,
        net: net.clone(),
        crypto,
        replicas,
        coalition,
        heap: BinaryHeap::new(),
        events: BTreeMap::new(),
        seq: 0,
        delay_rng: stream(seed, STREAM_DELAY),
        order_rng: stream(seed, STREAM_ORDER),
        sync: Synchronizer::new(net.clone(), stream(seed, STREAM_SYNC)),
        metrics,
        trace: opts.trace.then(Vec::new),
    };
    let outcome = sim.run(opts.max_views.max(1), opts.stop_when_decided);
    RunReport { outcome, metrics: sim.metrics, trace: sim.trace }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{LeaderStrategy, ReplicaStrategy};

    #[test]
    fn net_config_validation() {
        assert!(NetConfig::default().validate().is_ok());
        let mut net = NetConfig::default();
        net.view_duration = 4 * net.delta;
        assert!(matches!(net.validate(), Err(NetConfigError::ViewTooShort { .. })));
        let mut net = NetConfig::default();
        net.fixed_delay = net.delta + 1;
        assert!(matches!(net.validate(), Err(NetConfigError::BadFixedDelay { .. })));
    }

    #[test]
    fn fixed_policy_is_constant() {
        let net = NetConfig::fixed(3);
        let mut rng = stream(1, 1);
        for now in 0..100 {
            assert_eq!(delivery_delay(&net, now, &mut rng), 3);
        }
    }

    #[test]
    fn post_gst_delays_are_bounded_by_delta() {
        let net = NetConfig { gst: 500, pre_gst_max_delay: 10_000, ..NetConfig::default() };
        let mut rng = stream(2, 1);
        for now in 0..2000 {
            let d = delivery_delay(&net, now, &mut rng);
            assert!(d >= 1);
            assert!(now + d <= now.max(net.gst) + net.delta, "now={now} d={d}");
        }
    }

    #[test]
    fn synchronizer_aligns_after_gst() {
        let net = NetConfig { gst: 250, pre_gst_max_delay: 80, ..NetConfig::default() };
        let mut sync = Synchronizer::new(net.clone(), stream(3, 2));
        let v1 = sync.entry_times(View(1), 10);
        assert!(v1.iter().any(|(_, t)| *t > 0), "pre-GST entries are skewed");
        assert!(v1.iter().all(|(_, t)| *t <= 80));
        assert_eq!(net.first_post_gst_view(), View(4));
        let v4 = sync.entry_times(View(4), 10);
        assert!(v4.iter().all(|(_, t)| *t == 300));
    }

    #[test]
    fn gst_zero_enters_view_one_together() {
        let mut sync = Synchronizer::new(NetConfig::default(), stream(4, 2));
        assert!(sync.entry_times(View(1), 7).iter().all(|(_, t)| *t == 0));
    }

    fn small(n: usize, f: usize) -> ProtocolConfig {
        ProtocolConfig::new(n, f, 1.0, 2.0, 11).unwrap()
    }

    #[test]
    fn honest_run_message_counts_reconcile() {
        let cfg = ProtocolConfig::new(25, 0, 2.0, 1.7, 5).unwrap();
        let rep = run_simulation(&cfg, &NetConfig::default(), &AdversarySpec::none(), &SimOptions::default());
        let vm = &rep.metrics.per_view[&1];
        let d = vm.quorums[MessageKind::Prepare.index()];
        let (n, s) = (cfg.n as u64, cfg.s as u64);
        assert_eq!(vm.messages[MessageKind::Propose.index()], n - 1);
        assert_eq!(vm.messages[MessageKind::Prepare.index()], n * s);
        assert_eq!(vm.messages[MessageKind::Commit.index()], d * s);
        assert_eq!(vm.votes, n);
        assert_eq!(rep.metrics.vrf_violations, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let cfg = ProtocolConfig::new(16, 3, 1.0, 1.7, 21).unwrap();
        let adv = AdversarySpec::new(
            [ReplicaId(1), ReplicaId(7), ReplicaId(9)],
            LeaderStrategy::EquivOptimal,
            ReplicaStrategy::PartitionConsistent,
        );
        let net = NetConfig { gst: 150, ..NetConfig::default() };
        let opts = SimOptions { max_views: 8, trace: true, stop_when_decided: true };
        let a = run_simulation(&cfg, &net, &adv, &opts);
        let b = run_simulation(&cfg, &net, &adv, &opts);
        assert_eq!(a, b);
        assert_eq!(a.trace_jsonl(), b.trace_jsonl());
        let c = run_simulation(&cfg.with_seed(22), &net, &adv, &opts);
        assert_ne!(a.trace_jsonl(), c.trace_jsonl());
    }

    #[test]
    fn silent_faulty_replicas_do_not_prevent_termination() {
        let cfg = ProtocolConfig::new(20, 4, 1.0, 1.8, 8).unwrap();
        let adv = AdversarySpec::new((17..=20).map(ReplicaId), LeaderStrategy::Silent, ReplicaStrategy::Silent);
        let rep = run_simulation(&cfg, &NetConfig::default(), &adv, &SimOptions::views(30));
        assert!(matches!(rep.outcome, Outcome::AllDecided { .. }), "{:?}", rep.outcome);
        assert!(!rep.metrics.agreement_violated);
        assert_eq!(rep.metrics.decided_count(), 16);
    }

    #[test]
    fn equivocation_with_partition_votes_keeps_vrf_binding() {
        let cfg = small(10, 3);
        let adv = AdversarySpec::new(
            [ReplicaId(1), ReplicaId(2), ReplicaId(3)],
            LeaderStrategy::EquivOptimal,
            ReplicaStrategy::PartitionConsistent,
        );
        let rep = run_simulation(&cfg, &NetConfig::default(), &adv, &SimOptions::views(12));
        assert_eq!(rep.metrics.vrf_violations, 0);
        assert!(rep.metrics.per_view[&1].blocks > 0);
        assert!(matches!(rep.outcome, Outcome::AllDecided { .. }), "{:?}", rep.outcome);
    }

    #[test]
    fn pre_gst_run_still_terminates_after_gst() {
        let cfg = ProtocolConfig::new(13, 4, 1.0, 1.8, 3).unwrap();
        let net = NetConfig { gst: 1000, pre_gst_max_delay: 400, ..NetConfig::default() };
        let adv = AdversarySpec::new((1..=4).map(ReplicaId), LeaderStrategy::EquivOptimal, ReplicaStrategy::Silent);
        let rep = run_simulation(&cfg, &net, &adv, &SimOptions::views(40));
        assert!(matches!(rep.outcome, Outcome::AllDecided { .. }), "{:?}", rep.outcome);
        assert!(rep.metrics.end_time >= 1000);
    }
}
