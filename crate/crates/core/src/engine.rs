//! Per-replica state machine.
//!
//! A [`Replica`] consumes [`ReplicaEvent`]s one at a time and returns the
//! [`OutboundAction`]s they trigger. Quorum-based handlers are realised by
//! buffering valid messages per `(view, kind, value, sender)` and firing when
//! the threshold is reached.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::crypto::{vrf_seed, KeyPair, Phase, Verifier};
use crate::message::{LeaderPair, Message, MessageKind, NewLeader, PreparedCertificate, Propose, Vote};
use crate::predicates::{
    message_signature_valid, pair_valid, safe_proposal, select_proposal, valid_new_leader,
    vote_valid_for, AppValid,
};
use crate::types::{ProtocolConfig, ReplicaId, Value, View};

#[derive(Debug, Clone)]
pub enum ReplicaEvent {
    /// Synchronizer notification to enter a view.
    NewView(View),
    Inbound(Arc<Message>),
}

/// Side-band notes for metrics and traces; they carry no protocol meaning.
#[derive(Debug, Clone, PartialEq)]
pub enum Notification {
    QuorumFormed { kind: MessageKind, view: View, value: Option<Value> },
    Voted { view: View, value: Value },
    Blocked { view: View },
}

#[derive(Debug, Clone)]
pub enum OutboundAction {
    Send { to: Vec<ReplicaId>, msg: Arc<Message> },
    /// To every replica except the sender.
    Broadcast(Arc<Message>),
    Decide { view: View, value: Value },
    Notify(Notification),
}

#[derive(Debug, Clone, Default)]
pub struct ReplicaState {
    pub cur_view: View,
    pub cur_val: Option<Value>,
    pub voted: bool,
    pub block_view: bool,
    pub proposal: Option<Propose>,
    pub prepared_val: Option<Value>,
    pub prepared_view: View,
    pub cert: Option<PreparedCertificate>,
    pub decided: Option<Value>,
}

/// Per-view accumulation buffers.
#[derive(Debug, Default)]
struct ViewBuffers {
    new_leaders: BTreeMap<ReplicaId, NewLeader>,
    proposed: bool,
    prepares: BTreeMap<Value, BTreeMap<ReplicaId, Vote>>,
    commits: BTreeMap<Value, BTreeMap<ReplicaId, Vote>>,
    prepared_here: bool,
    decided_here: bool,
}

pub struct Replica {
    id: ReplicaId,
    cfg: Arc<ProtocolConfig>,
    keys: KeyPair,
    crypto: Arc<dyn Verifier>,
    app_valid: Arc<AppValid>,
    my_value: Value,
    state: ReplicaState,
    buffers: ViewBuffers,
    /// Messages for `cur_view + 1`, replayed on entering that view.
    future: Vec<Arc<Message>>,
}

impl Replica {
    pub fn new(
        cfg: Arc<ProtocolConfig>,
        keys: KeyPair,
        crypto: Arc<dyn Verifier>,
        app_valid: Arc<AppValid>,
        my_value: Value,
    ) -> Self {
        Replica {
            id: keys.owner,
            cfg,
            keys,
            crypto,
            app_valid,
            my_value,
            state: ReplicaState::default(),
            buffers: ViewBuffers::default(),
            future: Vec::new(),
        }
    }

    pub fn id(&self) -> ReplicaId {
        self.id
    }

    pub fn state(&self) -> &ReplicaState {
        &self.state
    }

    pub fn my_value(&self) -> &Value {
        &self.my_value
    }

    pub fn handle(&mut self, event: ReplicaEvent) -> Vec<OutboundAction> {
        let mut out = Vec::new();
        match event {
            ReplicaEvent::NewView(v) => self.on_new_view(v, &mut out),
            ReplicaEvent::Inbound(msg) => {
                if message_signature_valid(&msg, self.crypto.as_ref()) {
                    self.on_message(msg, &mut out);
                }
            }
        }
        out
    }

    fn on_new_view(&mut self, v: View, out: &mut Vec<OutboundAction>) {
        if v <= self.state.cur_view {
            return;
        }
        self.state.cur_view = v;
        self.state.cur_val = None;
        self.state.voted = false;
        self.state.block_view = false;
        self.state.proposal = None;
        self.buffers = ViewBuffers::default();

        if v.0 == 1 && self.id == self.cfg.leader(v) {
            let pair = LeaderPair::sign(&self.keys, v, self.my_value.clone());
            self.broadcast_proposal(Propose::new(&self.keys, pair, Vec::new()), out);
        } else if v.0 > 1 {
            let nl = NewLeader::new(
                &self.keys,
                v,
                self.state.prepared_view,
                self.state.prepared_val.clone(),
                self.state.cert.clone(),
            );
            out.push(OutboundAction::Send {
                to: vec![self.cfg.leader(v)],
                msg: Arc::new(Message::NewLeader(nl)),
            });
        }

        let buffered = std::mem::take(&mut self.future);
        for msg in buffered {
            if msg.view() == v {
                self.on_message(msg, out);
            }
        }
    }

    fn on_message(&mut self, msg: Arc<Message>, out: &mut Vec<OutboundAction>) {
        let view = msg.view();
        if view > self.state.cur_view {
            if view == self.state.cur_view.next() {
                self.future.push(msg);
            }
            return;
        }
        if view < self.state.cur_view {
            return;
        }
        self.check_equivocation(&msg, out);
        match msg.as_ref() {
            Message::Propose(p) => self.on_propose(p, out),
            Message::NewLeader(m) => self.on_new_leader(m, out),
            Message::Vote(vote) => self.on_vote(vote, out),
        }
    }

    /// Any message carrying a leader-signed pair that conflicts with the
    /// value this replica voted for blocks the view.
    fn check_equivocation(&mut self, msg: &Arc<Message>, out: &mut Vec<OutboundAction>) {
        let Some(pair) = msg.leader_pair() else { return };
        let st = &self.state;
        if st.block_view || !st.voted || pair.view != st.cur_view {
            return;
        }
        if st.cur_val.as_ref() == Some(&pair.value) {
            return;
        }
        if !pair_valid(pair, &self.cfg, self.crypto.as_ref()) {
            return;
        }
        self.state.block_view = true;
        out.push(OutboundAction::Broadcast(msg.clone()));
        if let Some(p) = &self.state.proposal {
            out.push(OutboundAction::Broadcast(Arc::new(Message::Propose(p.clone()))));
        }
        out.push(OutboundAction::Notify(Notification::Blocked { view: self.state.cur_view }));
    }

    fn on_new_leader(&mut self, m: &NewLeader, out: &mut Vec<OutboundAction>) {
        let v = self.state.cur_view;
        if self.id != self.cfg.leader(v) || self.buffers.proposed || m.view != v {
            return;
        }
        if self.buffers.new_leaders.contains_key(&m.sender)
            || !valid_new_leader(m, &self.cfg, self.crypto.as_ref())
        {
            return;
        }
        self.buffers.new_leaders.insert(m.sender, m.clone());
        if self.buffers.new_leaders.len() >= self.cfg.det_quorum {
            self.on_new_leader_quorum(out);
        }
    }

    fn on_new_leader_quorum(&mut self, out: &mut Vec<OutboundAction>) {
        let v = self.state.cur_view;
        let quorum: Vec<NewLeader> =
            self.buffers.new_leaders.values().take(self.cfg.det_quorum).cloned().collect();
        let value = select_proposal(&quorum, &self.my_value);
        out.push(OutboundAction::Notify(Notification::QuorumFormed {
            kind: MessageKind::NewLeader,
            view: v,
            value: None,
        }));
        let pair = LeaderPair::sign(&self.keys, v, value);
        self.broadcast_proposal(Propose::new(&self.keys, pair, quorum), out);
    }

    /// Sends the proposal to everybody else and processes it locally.
    fn broadcast_proposal(&mut self, p: Propose, out: &mut Vec<OutboundAction>) {
        self.buffers.proposed = true;
        out.push(OutboundAction::Broadcast(Arc::new(Message::Propose(p.clone()))));
        self.on_propose(&p, out);
    }

    fn on_propose(&mut self, p: &Propose, out: &mut Vec<OutboundAction>) {
        let st = &self.state;
        if st.block_view || st.voted || p.pair.view != st.cur_view {
            return;
        }
        if !safe_proposal(p, &self.cfg, self.crypto.as_ref(), self.app_valid.as_ref()) {
            return;
        }
        let v = p.pair.view;
        let x = p.pair.value.clone();
        self.state.cur_val = Some(x.clone());
        self.state.voted = true;
        self.state.proposal = Some(p.clone());
        out.push(OutboundAction::Notify(Notification::Voted { view: v, value: x }));
        self.send_vote(Phase::Prepare, p.pair.clone(), out);
        self.try_prepare_quorum(out);
    }

    fn send_vote(&self, phase: Phase, pair: LeaderPair, out: &mut Vec<OutboundAction>) {
        let seed = vrf_seed(pair.view, phase);
        let (sample, proof) = self
            .keys
            .vrf_prove(&seed, self.cfg.s, self.cfg.n)
            .expect("config guarantees 1 <= s <= n");
        let vote = Vote::new(&self.keys, phase, pair, sample.clone(), proof);
        out.push(OutboundAction::Send { to: sample, msg: Arc::new(Message::Vote(vote)) });
    }

    fn on_vote(&mut self, vote: &Vote, out: &mut Vec<OutboundAction>) {
        if !vote_valid_for(vote, self.id, &self.cfg, self.crypto.as_ref()) {
            return;
        }
        let bucket = match vote.phase {
            Phase::Prepare => &mut self.buffers.prepares,
            Phase::Commit => &mut self.buffers.commits,
        };
        let per_value = bucket.entry(vote.pair.value.clone()).or_default();
        if per_value.contains_key(&vote.sender) {
            return;
        }
        per_value.insert(vote.sender, vote.clone());
        match vote.phase {
            Phase::Prepare => self.try_prepare_quorum(out),
            Phase::Commit => self.try_commit_quorum(out),
        }
    }

    fn try_prepare_quorum(&mut self, out: &mut Vec<OutboundAction>) {
        let st = &self.state;
        if st.block_view || !st.voted || self.buffers.prepared_here {
            return;
        }
        let Some(x) = st.cur_val.clone() else { return };
        let Some(votes) = self.buffers.prepares.get(&x) else { return };
        if votes.len() < self.cfg.q {
            return;
        }
        let prepares: Vec<Vote> = votes.values().take(self.cfg.q).cloned().collect();
        let v = st.cur_view;
        let pair = prepares[0].pair.clone();
        self.buffers.prepared_here = true;
        self.state.prepared_val = Some(x.clone());
        self.state.prepared_view = v;
        self.state.cert = Some(PreparedCertificate { view: v, value: x.clone(), holder: self.id, prepares });
        out.push(OutboundAction::Notify(Notification::QuorumFormed {
            kind: MessageKind::Prepare,
            view: v,
            value: Some(x),
        }));
        self.send_vote(Phase::Commit, pair, out);
        self.try_commit_quorum(out);
    }

    fn try_commit_quorum(&mut self, out: &mut Vec<OutboundAction>) {
        let st = &self.state;
        if st.block_view || self.buffers.decided_here || st.prepared_view != st.cur_view {
            return;
        }
        let Some(x) = st.prepared_val.clone() else { return };
        let Some(votes) = self.buffers.commits.get(&x) else { return };
        if votes.len() < self.cfg.q {
            return;
        }
        let v = st.cur_view;
        self.buffers.decided_here = true;
        if self.state.decided.is_none() {
            self.state.decided = Some(x.clone());
        }
        out.push(OutboundAction::Notify(Notification::QuorumFormed {
            kind: MessageKind::Commit,
            view: v,
            value: Some(x.clone()),
        }));
        out.push(OutboundAction::Decide { view: v, value: x });
    }

    /// Commits counted toward the decision in the current view, if any.
    pub fn commit_votes(&self, value: &Value) -> Vec<Vote> {
        self.buffers
            .commits
            .get(value)
            .map(|m| m.values().cloned().collect())
            .unwrap_or_default()
    }
}
