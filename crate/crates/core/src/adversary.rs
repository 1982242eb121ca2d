//! Byzantine behaviours.
//!
//! All faulty replicas are driven by a single [`Coalition`], which holds
//! their keys and reacts to the events the network hands it. It signs
//! whatever it likes with those keys but can only produce VRF samples the
//! honest prover would, so every vote it emits verifies.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crypto::{vrf_seed, KeyPair, Phase, Verifier};
use crate::engine::OutboundAction;
use crate::message::{LeaderPair, Message, NewLeader, Propose, Vote};
use crate::predicates::{mode_of_max_view, select_proposal, valid_new_leader};
use crate::types::{ProtocolConfig, ReplicaId, Value, View};

/// Exhaustive justification search is used up to this many replicas.
pub const EXHAUSTIVE_SEARCH_MAX_N: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderStrategy {
    /// Follows the protocol.
    Honest,
    Silent,
    /// One proposal per subset; subsets may overlap.
    EquivGeneral(Vec<Vec<ReplicaId>>),
    /// Two proposals to two halves of all replicas.
    EquivSuboptimal,
    /// Two proposals to two halves of the correct replicas, both to the faulty.
    EquivOptimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicaStrategy {
    Silent,
    /// Votes for the value of each recipient's partition.
    PartitionConsistent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub faulty: BTreeSet<ReplicaId>,
    pub leader_strategy: LeaderStrategy,
    pub replica_strategy: ReplicaStrategy,
}

impl AdversarySpec {
    /// No faulty replicas.
    pub fn none() -> Self {
        AdversarySpec {
            faulty: BTreeSet::new(),
            leader_strategy: LeaderStrategy::Honest,
            replica_strategy: ReplicaStrategy::Silent,
        }
    }

    pub fn new(
        faulty: impl IntoIterator<Item = ReplicaId>,
        leader_strategy: LeaderStrategy,
        replica_strategy: ReplicaStrategy,
    ) -> Self {
        AdversarySpec { faulty: faulty.into_iter().collect(), leader_strategy, replica_strategy }
    }

    pub fn is_faulty(&self, id: ReplicaId) -> bool {
        self.faulty.contains(&id)
    }

    pub fn correct(&self, n: usize) -> Vec<ReplicaId> {
        (1..=n as u32).map(ReplicaId).filter(|r| !self.is_faulty(*r)).collect()
    }
}

/// Uniformly random faulty set of size `f` out of `1..=n`.
pub fn random_faulty_set<R: Rng + ?Sized>(n: usize, f: usize, rng: &mut R) -> BTreeSet<ReplicaId> {
    rand::seq::index::sample(rng, n, f).into_iter().map(ReplicaId::from_index).collect()
}

/// Which proposals a faulty leader sends to whom.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub proposals: Vec<Value>,
    /// Proposal indices per replica; replicas missing here get nothing.
    pub assignment: BTreeMap<ReplicaId, Vec<usize>>,
}

fn plan_value(i: usize) -> Value {
    Value::new(format!("val-{}", i + 1))
}

impl PartitionPlan {
    /// The plan for a leader strategy, or `None` for silence. `Honest`
    /// yields a single proposal for everybody.
    pub fn build(strategy: &LeaderStrategy, n: usize, faulty: &BTreeSet<ReplicaId>) -> Option<Self> {
        let all: Vec<ReplicaId> = (1..=n as u32).map(ReplicaId).collect();
        let mut assignment: BTreeMap<ReplicaId, Vec<usize>> = BTreeMap::new();
        let m = match strategy {
            LeaderStrategy::Silent => return None,
            LeaderStrategy::Honest => {
                for r in &all {
                    assignment.insert(*r, vec![0]);
                }
                1
            }
            LeaderStrategy::EquivGeneral(subsets) => {
                for (i, set) in subsets.iter().enumerate() {
                    for r in set {
                        assignment.entry(*r).or_default().push(i);
                    }
                }
                for idx in assignment.values_mut() {
                    idx.sort_unstable();
                    idx.dedup();
                }
                subsets.len()
            }
            LeaderStrategy::EquivSuboptimal => {
                let half = n / 2;
                for (i, r) in all.iter().enumerate() {
                    assignment.insert(*r, vec![usize::from(i >= half)]);
                }
                2
            }
            LeaderStrategy::EquivOptimal => {
                let correct: Vec<ReplicaId> = all.iter().copied().filter(|r| !faulty.contains(r)).collect();
                let half = correct.len() / 2;
                for (i, r) in correct.iter().enumerate() {
                    assignment.insert(*r, vec![usize::from(i >= half)]);
                }
                for r in faulty {
                    assignment.insert(*r, vec![0, 1]);
                }
                2
            }
        };
        Some(PartitionPlan { proposals: (0..m).map(plan_value).collect(), assignment })
    }

    /// Replicas assigned proposal `idx`.
    pub fn recipients(&self, idx: usize) -> Vec<ReplicaId> {
        self.assignment.iter().filter(|(_, v)| v.contains(&idx)).map(|(r, _)| *r).collect()
    }

    /// Replicas that receive no proposal.
    pub fn unassigned(&self, n: usize) -> Vec<ReplicaId> {
        (1..=n as u32)
            .map(ReplicaId)
            .filter(|r| self.assignment.get(r).is_none_or(|v| v.is_empty()))
            .collect()
    }
}

/// Finds a set of `dq` NewLeader messages whose mode rule permits `value`.
/// Exhaustive over subsets for small `n`, greedy otherwise.
pub fn find_justification(
    pool: &[NewLeader],
    value: &Value,
    dq: usize,
    n: usize,
) -> Option<Vec<NewLeader>> {
    if pool.len() < dq {
        return None;
    }
    let permits = |set: &[NewLeader]| mode_of_max_view(set).is_none_or(|m| m == *value);
    if n <= EXHAUSTIVE_SEARCH_MAX_N {
        return pool
            .iter()
            .combinations(dq)
            .map(|c| c.into_iter().cloned().collect::<Vec<_>>())
            .find(|c| permits(c));
    }
    // Unprepared first, then support for `value` from the highest view,
    // then everything else from the lowest view.
    let rank = |m: &NewLeader| -> (u8, i64) {
        if m.prepared_view.is_none() {
            (0, 0)
        } else if m.prepared_val.as_ref() == Some(value) {
            (1, -(m.prepared_view.0 as i64))
        } else {
            (2, m.prepared_view.0 as i64)
        }
    };
    let mut sorted: Vec<&NewLeader> = pool.iter().collect();
    sorted.sort_by_key(|m| (rank(m), m.sender));
    let pick: Vec<NewLeader> = sorted.into_iter().take(dq).cloned().collect();
    permits(&pick).then_some(pick)
}

/// An outbound action attributed to the faulty replica that takes it.
pub type Emission = (ReplicaId, OutboundAction);

#[derive(Debug, Default)]
struct LeaderView {
    entered: bool,
    acted: bool,
    received: BTreeMap<ReplicaId, NewLeader>,
}

pub struct Coalition {
    cfg: Arc<ProtocolConfig>,
    spec: AdversarySpec,
    keys: BTreeMap<ReplicaId, KeyPair>,
    crypto: Arc<dyn Verifier>,
    views: BTreeMap<View, LeaderView>,
    notes: Vec<String>,
}

impl Coalition {
    /// `keys` may hold every replica's keys; only the faulty ones are kept.
    pub fn new(
        cfg: Arc<ProtocolConfig>,
        spec: AdversarySpec,
        keys: &[KeyPair],
        crypto: Arc<dyn Verifier>,
    ) -> Self {
        let keys = keys.iter().filter(|k| spec.is_faulty(k.owner)).map(|k| (k.owner, k.clone())).collect();
        Coalition { cfg, spec, keys, crypto, views: BTreeMap::new(), notes: Vec::new() }
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    /// Audit notes (chosen plans) produced since the last call.
    pub fn take_notes(&mut self) -> Vec<String> {
        std::mem::take(&mut self.notes)
    }

    fn leader_is_faulty(&self, v: View) -> bool {
        self.spec.is_faulty(self.cfg.leader(v))
    }

    fn partition_consistent(&self) -> bool {
        self.spec.replica_strategy == ReplicaStrategy::PartitionConsistent
    }

    pub fn on_new_view(&mut self, replica: ReplicaId, v: View) -> Vec<Emission> {
        let mut out = Vec::new();
        let leader = self.cfg.leader(v);
        if !self.leader_is_faulty(v) {
            if v.0 > 1 && self.partition_consistent() {
                let nl = NewLeader::new(&self.keys[&replica], v, View::NONE, None, None);
                out.push((
                    replica,
                    OutboundAction::Send { to: vec![leader], msg: Arc::new(Message::NewLeader(nl)) },
                ));
            }
            return out;
        }
        if replica != leader {
            return out;
        }
        self.views.entry(v).or_default().entered = true;
        self.maybe_act(v, &mut out);
        out
    }

    pub fn on_deliver(&mut self, to: ReplicaId, msg: &Message) -> Vec<Emission> {
        let mut out = Vec::new();
        let Message::NewLeader(nl) = msg else { return out };
        let v = nl.view;
        if v.0 < 2 || to != self.cfg.leader(v) || self.spec.is_faulty(nl.sender) {
            return out;
        }
        if !valid_new_leader(nl, &self.cfg, self.crypto.as_ref()) {
            return out;
        }
        self.views.entry(v).or_default().received.entry(nl.sender).or_insert_with(|| nl.clone());
        self.maybe_act(v, &mut out);
        out
    }

    /// A faulty leader acts once it has entered the view and, past view 1,
    /// heard from every correct replica.
    fn maybe_act(&mut self, v: View, out: &mut Vec<Emission>) {
        let needed = self.cfg.n - self.spec.faulty.len();
        let lv = self.views.entry(v).or_default();
        if !lv.entered || lv.acted || (v.0 > 1 && lv.received.len() < needed) {
            return;
        }
        lv.acted = true;
        let mut pool: Vec<NewLeader> = lv.received.values().cloned().collect();
        if self.partition_consistent() {
            for k in self.keys.values() {
                pool.push(NewLeader::new(k, v, View::NONE, None, None));
            }
            pool.sort_by_key(|m| m.sender);
        }
        self.lead(v, &pool, out);
    }

    fn lead(&mut self, v: View, pool: &[NewLeader], out: &mut Vec<Emission>) {
        let leader = self.cfg.leader(v);
        let Some(mut plan) = PartitionPlan::build(&self.spec.leader_strategy, self.cfg.n, &self.spec.faulty)
        else {
            self.notes.push(format!("plan v={v} silent"));
            return;
        };
        let lk = self.keys[&leader].clone();
        let dq = self.cfg.det_quorum;

        let mut justifications: Vec<Option<Vec<NewLeader>>> = Vec::new();
        if self.spec.leader_strategy == LeaderStrategy::Honest {
            if v.0 == 1 {
                plan.proposals[0] = Value::new(format!("value-{leader}"));
                justifications.push(Some(Vec::new()));
            } else {
                let quorum: Vec<NewLeader> = pool.iter().take(dq).cloned().collect();
                plan.proposals[0] = select_proposal(&quorum, &Value::new(format!("value-{leader}")));
                justifications.push((quorum.len() == dq).then_some(quorum));
            }
        } else {
            for val in &plan.proposals {
                let j = if v.0 == 1 {
                    Some(Vec::new())
                } else {
                    find_justification(pool, val, dq, self.cfg.n)
                };
                justifications.push(j);
            }
        }

        let mut pairs: Vec<Option<LeaderPair>> = Vec::new();
        for (i, val) in plan.proposals.iter().enumerate() {
            let Some(just) = justifications[i].clone() else {
                pairs.push(None);
                continue;
            };
            let pair = LeaderPair::sign(&lk, v, val.clone());
            let to: Vec<ReplicaId> = plan.recipients(i).into_iter().filter(|r| *r != leader).collect();
            if !to.is_empty() {
                let p = Propose::new(&lk, pair.clone(), just);
                out.push((leader, OutboundAction::Send { to, msg: Arc::new(Message::Propose(p)) }));
            }
            pairs.push(Some(pair));
        }
        let live: Vec<String> = plan
            .proposals
            .iter()
            .enumerate()
            .map(|(i, val)| match pairs[i] {
                Some(_) => format!("{val}:{}", plan.recipients(i).len()),
                None => format!("{val}:dropped"),
            })
            .collect();
        self.notes.push(format!("plan v={v} [{}]", live.join(",")));

        if self.partition_consistent() {
            for k in self.keys.values() {
                if k.owner != leader {
                    self.partition_votes(k, v, &plan, &pairs, out);
                }
            }
        }
    }

    /// Prepare and Commit from one faulty replica: each sample member gets
    /// the value of its partition; faulty members get the first live value.
    fn partition_votes(
        &self,
        k: &KeyPair,
        v: View,
        plan: &PartitionPlan,
        pairs: &[Option<LeaderPair>],
        out: &mut Vec<Emission>,
    ) {
        let first_live = pairs.iter().position(|p| p.is_some());
        for phase in [Phase::Prepare, Phase::Commit] {
            let (sample, proof) = k
                .vrf_prove(&vrf_seed(v, phase), self.cfg.s, self.cfg.n)
                .expect("config guarantees 1 <= s <= n");
            let mut groups: BTreeMap<usize, Vec<ReplicaId>> = BTreeMap::new();
            for r in &sample {
                let idx = if self.spec.is_faulty(*r) {
                    first_live
                } else {
                    plan.assignment
                        .get(r)
                        .and_then(|ix| ix.iter().copied().find(|i| pairs[*i].is_some()))
                };
                if let Some(i) = idx {
                    groups.entry(i).or_default().push(*r);
                }
            }
            for (i, to) in groups {
                let pair = pairs[i].clone().expect("group index is live");
                let vote = Vote::new(k, phase, pair, sample.clone(), proof.clone());
                out.push((k.owner, OutboundAction::Send { to, msg: Arc::new(Message::Vote(vote)) }));
            }
        }
    }
}
