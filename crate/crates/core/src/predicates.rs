//! The protocol's validity predicates: `prepared`, `validNewLeader`,
//! `safeProposal`, and the proposal-selection rule they share.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{vrf_seed, Phase, Verifier};
use crate::message::{LeaderPair, Message, NewLeader, PreparedCertificate, Propose, Vote};
use crate::types::{ProtocolConfig, ReplicaId, Value, View};

/// Application-level `valid(x)` predicate.
pub type AppValid = dyn Fn(&Value) -> bool + Send + Sync;

/// Value rejected by [`reject_sentinel`].
pub const INVALID_SENTINEL: &[u8] = b"INVALID";

pub fn always_valid(_: &Value) -> bool {
    true
}

pub fn reject_sentinel(v: &Value) -> bool {
    v.as_bytes() != INVALID_SENTINEL
}

/// The pair is signed by `leader(view)` and the signature verifies.
pub fn pair_valid(pair: &LeaderPair, cfg: &ProtocolConfig, crypto: &dyn Verifier) -> bool {
    pair.view.0 >= 1
        && pair.signer == cfg.leader(pair.view)
        && crypto.verify_from(
            pair.signer,
            &LeaderPair::signing_payload(pair.view, &pair.value),
            &pair.signature,
        )
}

pub fn message_signature_valid(msg: &Message, crypto: &dyn Verifier) -> bool {
    crypto.verify_from(msg.sender(), &msg.signing_payload(), msg.signature())
}

/// Checks one Prepare/Commit as seen by `recipient`: signed by its sender,
/// carrying a valid leader pair, and a VRF sample for `(view, phase)` that
/// contains `recipient`.
pub fn vote_valid_for(
    vote: &Vote,
    recipient: ReplicaId,
    cfg: &ProtocolConfig,
    crypto: &dyn Verifier,
) -> bool {
    let view = vote.pair.view;
    vote.sample.binary_search(&recipient).is_ok()
        && pair_valid(&vote.pair, cfg, crypto)
        && crypto.vrf_verify_from(
            vote.sender,
            &vrf_seed(view, vote.phase),
            cfg.s,
            &vote.sample,
            &vote.proof,
        )
        && crypto.verify_from(vote.sender, &vote.unsigned_bytes(), &vote.signature)
}

/// `prepared(C, v, x, j)`: exactly `q` Prepares from distinct senders, all
/// for `<v, x>` signed by `leader(v)`, all naming `j` in a valid sample.
pub fn prepared_predicate(
    prepares: &[Vote],
    view: View,
    value: &Value,
    holder: ReplicaId,
    cfg: &ProtocolConfig,
    crypto: &dyn Verifier,
) -> bool {
    if prepares.len() != cfg.q {
        return false;
    }
    let senders: BTreeSet<ReplicaId> = prepares.iter().map(|p| p.sender).collect();
    if senders.len() != cfg.q {
        return false;
    }
    prepares.iter().all(|p| {
        p.phase == Phase::Prepare
            && p.pair.view == view
            && p.pair.value == *value
            && vote_valid_for(p, holder, cfg, crypto)
    })
}

pub fn certificate_valid(
    cert: &PreparedCertificate,
    cfg: &ProtocolConfig,
    crypto: &dyn Verifier,
) -> bool {
    prepared_predicate(&cert.prepares, cert.view, &cert.value, cert.holder, cfg, crypto)
}

/// `validNewLeader(m)`: the claimed prepared view precedes `m.view`, and a
/// non-zero claim is backed by a prepared certificate held by the sender.
pub fn valid_new_leader(m: &NewLeader, cfg: &ProtocolConfig, crypto: &dyn Verifier) -> bool {
    if m.view.0 < 1 || m.prepared_view >= m.view {
        return false;
    }
    if !crypto.verify_from(m.sender, &m.unsigned_bytes(), &m.signature) {
        return false;
    }
    if m.prepared_view.is_none() {
        return true;
    }
    match (&m.cert, &m.prepared_val) {
        (Some(cert), Some(val)) => {
            cert.view == m.prepared_view
                && cert.value == *val
                && cert.holder == m.sender
                && prepared_predicate(&cert.prepares, m.prepared_view, val, m.sender, cfg, crypto)
        }
        _ => false,
    }
}

/// Most frequent value among the messages prepared in the highest view,
/// one vote per distinct sender, ties to the smallest value.
/// `None` when nobody in `msgs` ever prepared.
pub fn mode_of_max_view<'a, I>(msgs: I) -> Option<Value>
where
    I: IntoIterator<Item = &'a NewLeader>,
{
    let mut per_sender: BTreeMap<ReplicaId, (View, Option<&Value>)> = BTreeMap::new();
    for m in msgs {
        per_sender.entry(m.sender).or_insert((m.prepared_view, m.prepared_val.as_ref()));
    }
    let v_max = per_sender.values().map(|(v, _)| *v).max()?;
    if v_max.is_none() {
        return None;
    }
    let mut counts: BTreeMap<&Value, usize> = BTreeMap::new();
    for (v, val) in per_sender.values() {
        if *v == v_max {
            if let Some(val) = val {
                *counts.entry(val).or_default() += 1;
            }
        }
    }
    // BTreeMap iterates in ascending value order; keep the first maximum.
    let mut best: Option<(&Value, usize)> = None;
    for (val, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((val, c));
        }
    }
    best.map(|(v, _)| v.clone())
}

/// The leader's choice for a view > 1 given its NewLeader quorum.
pub fn select_proposal(msgs: &[NewLeader], my_value: &Value) -> Value {
    mode_of_max_view(msgs).unwrap_or_else(|| my_value.clone())
}

/// `safeProposal(m)`.
pub fn safe_proposal(
    p: &Propose,
    cfg: &ProtocolConfig,
    crypto: &dyn Verifier,
    app_valid: &AppValid,
) -> bool {
    let view = p.pair.view;
    if view.0 < 1 || p.sender != cfg.leader(view) || !pair_valid(&p.pair, cfg, crypto) {
        return false;
    }
    if !app_valid(&p.pair.value) {
        return false;
    }
    if view.0 == 1 {
        return true;
    }
    let m = &p.justification;
    let senders: BTreeSet<ReplicaId> = m.iter().map(|nl| nl.sender).collect();
    if senders.len() != m.len() || m.len() < cfg.det_quorum {
        return false;
    }
    if !m.iter().all(|nl| nl.view == view && valid_new_leader(nl, cfg, crypto)) {
        return false;
    }
    match mode_of_max_view(m) {
        None => true,
        Some(mode) => mode == p.pair.value,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{KeyPair, SimCrypto};
    use proptest::prelude::*;

    struct Fixture {
        cfg: ProtocolConfig,
        crypto: SimCrypto,
        keys: Vec<KeyPair>,
    }

    fn fixture(n: usize, f: usize) -> Fixture {
        let cfg = ProtocolConfig::new(n, f, 1.0, 1.5, 5).unwrap();
        let (crypto, keys) = SimCrypto::generate(n, cfg.rng_seed);
        Fixture { cfg, crypto, keys }
    }

    impl Fixture {
        fn key(&self, id: u32) -> &KeyPair {
            &self.keys[id as usize - 1]
        }

        fn prepare(&self, from: u32, view: View, value: &str) -> Vote {
            let pair = LeaderPair::sign(self.key(self.cfg.leader(view).0), view, Value::from(value));
            let seed = vrf_seed(view, Phase::Prepare);
            let (sample, proof) = self.key(from).vrf_prove(&seed, self.cfg.s, self.cfg.n).unwrap();
            Vote::new(self.key(from), Phase::Prepare, pair, sample, proof)
        }

        /// Prepares from the first `q` senders whose sample contains `holder`.
        fn cert_for(&self, holder: u32, view: View, value: &str) -> Option<Vec<Vote>> {
            let votes: Vec<Vote> = (1..=self.cfg.n as u32)
                .map(|i| self.prepare(i, view, value))
                .filter(|v| v.sample.contains(&ReplicaId(holder)))
                .take(self.cfg.q)
                .collect();
            (votes.len() == self.cfg.q).then_some(votes)
        }

        fn new_leader(&self, from: u32, view: View, prepared: Option<(View, &str)>) -> NewLeader {
            match prepared {
                None => NewLeader::new(self.key(from), view, View::NONE, None, None),
                Some((pv, val)) => {
                    let prepares = self.cert_for(from, pv, val).expect("certificate available");
                    let cert = PreparedCertificate {
                        view: pv,
                        value: Value::from(val),
                        holder: ReplicaId(from),
                        prepares,
                    };
                    NewLeader::new(self.key(from), view, pv, Some(Value::from(val)), Some(cert))
                }
            }
        }

        /// Unchecked NewLeader carrying a claim without a real certificate,
        /// for selection-rule tests.
        fn raw_claim(&self, from: u32, view: View, pv: u64, val: &str) -> NewLeader {
            NewLeader::new(self.key(from), view, View(pv), Some(Value::from(val)), None)
        }
    }

    #[test]
    fn prepared_predicate_cases() {
        let fx = fixture(10, 3);
        let view = View(1);
        let holder = 4;
        let cert = fx.cert_for(holder, view, "A").unwrap();
        let h = ReplicaId(holder);
        let x = Value::from("A");
        assert!(prepared_predicate(&cert, view, &x, h, &fx.cfg, &fx.crypto));
        // q-1 messages
        assert!(!prepared_predicate(&cert[1..], view, &x, h, &fx.cfg, &fx.crypto));
        // wrong value or view
        assert!(!prepared_predicate(&cert, view, &Value::from("B"), h, &fx.cfg, &fx.crypto));
        assert!(!prepared_predicate(&cert, View(2), &x, h, &fx.cfg, &fx.crypto));
        // duplicate sender
        let mut dup = cert.clone();
        dup[1] = dup[0].clone();
        assert!(!prepared_predicate(&dup, view, &x, h, &fx.cfg, &fx.crypto));
        // one sample that omits the holder
        let outsider = (1..=10u32)
            .map(|i| fx.prepare(i, view, "A"))
            .find(|v| !v.sample.contains(&h))
            .unwrap();
        let mut omit = cert.clone();
        if !omit.iter().any(|v| v.sender == outsider.sender) {
            omit[0] = outsider;
            assert!(!prepared_predicate(&omit, view, &x, h, &fx.cfg, &fx.crypto));
        }
        // forged sample: claim the holder is in a sample that does not contain it
        let mut forged = cert.clone();
        let victim = &mut forged[0];
        let pos = victim.sample.iter().position(|r| *r != h).unwrap();
        victim.sample.remove(pos);
        victim.sample.push(ReplicaId(99));
        victim.sample.sort();
        assert!(!prepared_predicate(&forged, view, &x, h, &fx.cfg, &fx.crypto));
    }

    #[test]
    fn prepared_rejects_pair_not_signed_by_leader() {
        let fx = fixture(10, 3);
        let view = View(1);
        let mut cert = fx.cert_for(3, view, "A").unwrap();
        let pair = LeaderPair::sign(fx.key(2), view, Value::from("A"));
        let seed = vrf_seed(view, Phase::Prepare);
        let sender = cert[0].sender;
        let (sample, proof) = fx.key(sender.0).vrf_prove(&seed, fx.cfg.s, fx.cfg.n).unwrap();
        cert[0] = Vote::new(fx.key(sender.0), Phase::Prepare, pair, sample, proof);
        assert!(!prepared_predicate(&cert, view, &Value::from("A"), ReplicaId(3), &fx.cfg, &fx.crypto));
    }

    #[test]
    fn valid_new_leader_cases() {
        let fx = fixture(10, 3);
        let unprepared = fx.new_leader(5, View(2), None);
        assert!(valid_new_leader(&unprepared, &fx.cfg, &fx.crypto));

        let prepared = fx.new_leader(5, View(3), Some((View(1), "A")));
        assert!(valid_new_leader(&prepared, &fx.cfg, &fx.crypto));

        // prepared view not below the message view
        let mut late = prepared.clone();
        late.view = View(1);
        late.signature = fx.key(5).sign(&late.unsigned_bytes());
        assert!(!valid_new_leader(&late, &fx.cfg, &fx.crypto));

        // claim without certificate
        let bare = fx.raw_claim(5, View(3), 1, "A");
        assert!(!valid_new_leader(&bare, &fx.cfg, &fx.crypto));

        // certificate held by someone else
        let mut stolen = fx.new_leader(6, View(3), Some((View(1), "A")));
        stolen.sender = ReplicaId(5);
        stolen.signature = fx.key(5).sign(&stolen.unsigned_bytes());
        assert!(!valid_new_leader(&stolen, &fx.cfg, &fx.crypto));

        // bad outer signature
        let mut unsigned = unprepared.clone();
        unsigned.signature.0[0] ^= 1;
        assert!(!valid_new_leader(&unsigned, &fx.cfg, &fx.crypto));
    }

    #[test]
    fn select_proposal_examples() {
        let fx = fixture(10, 3);
        let me = Value::from("mine");
        let v = View(4);
        let none: Vec<NewLeader> = (1..=7).map(|i| fx.new_leader(i, v, None)).collect();
        assert_eq!(select_proposal(&none, &me), me);

        let m = vec![fx.raw_claim(1, v, 3, "A"), fx.raw_claim(2, v, 3, "A"), fx.raw_claim(3, v, 2, "B")];
        assert_eq!(select_proposal(&m, &me), Value::from("A"));

        let tie = vec![fx.raw_claim(1, v, 3, "B"), fx.raw_claim(2, v, 3, "A")];
        assert_eq!(select_proposal(&tie, &me), Value::from("A"));

        // a higher view wins over a more popular lower one
        let m = vec![
            fx.raw_claim(1, v, 1, "A"),
            fx.raw_claim(2, v, 1, "A"),
            fx.raw_claim(3, v, 2, "B"),
            fx.new_leader(4, v, None),
        ];
        assert_eq!(select_proposal(&m, &me), Value::from("B"));

        // one vote per distinct sender
        let m = vec![
            fx.raw_claim(1, v, 3, "B"),
            fx.raw_claim(1, v, 3, "B"),
            fx.raw_claim(2, v, 3, "A"),
        ];
        assert_eq!(select_proposal(&m, &me), Value::from("A"));
    }

    /// Brute-force mode: count by linear scan over all values, pick the
    /// smallest with maximal count.
    fn oracle_mode(claims: &[(u64, u8)]) -> Option<u8> {
        let vmax = claims.iter().map(|c| c.0).max()?;
        if vmax == 0 {
            return None;
        }
        let mut best: Option<(u8, usize)> = None;
        for cand in 0..=u8::MAX {
            let c = claims.iter().filter(|(v, x)| *v == vmax && *x == cand).count();
            if c > 0 && best.is_none_or(|(_, bc)| c > bc) {
                best = Some((cand, c));
            }
        }
        best.map(|b| b.0)
    }

    proptest! {
        #[test]
        fn select_matches_oracle_and_ignores_order(
            claims in proptest::collection::vec((0u64..4, 0u8..4), 1..10),
            rot in 0usize..10,
        ) {
            let fx = fixture(10, 3);
            let v = View(5);
            let msgs: Vec<NewLeader> = claims.iter().enumerate().map(|(i, (pv, x))| {
                if *pv == 0 {
                    fx.new_leader(i as u32 + 1, v, None)
                } else {
                    NewLeader::new(fx.key(i as u32 + 1), v, View(*pv), Some(Value::new(vec![*x])), None)
                }
            }).collect();
            let me = Value::from("mine");
            let expected = oracle_mode(&claims.iter().map(|(pv, x)| (*pv, *x)).collect::<Vec<_>>())
                .map(|x| Value::new(vec![x]))
                .unwrap_or(me.clone());
            prop_assert_eq!(select_proposal(&msgs, &me), expected.clone());
            let mut rotated = msgs.clone();
            let k = rot % rotated.len();
            rotated.rotate_left(k);
            rotated.reverse();
            prop_assert_eq!(select_proposal(&rotated, &me), expected);
        }

        #[test]
        fn leader_is_periodic(v in 1u64..10_000, n in 1usize..500) {
            prop_assert_eq!(crate::types::leader(View(v), n), crate::types::leader(View(v + n as u64), n));
        }

        #[test]
        fn removing_a_prepare_breaks_the_certificate(drop_idx in 0usize..4) {
            let fx = fixture(16, 5);
            let cert = fx.cert_for(2, View(1), "A").unwrap();
            let idx = drop_idx % cert.len();
            let mut smaller = cert.clone();
            smaller.remove(idx);
            prop_assert!(!prepared_predicate(&smaller, View(1), &Value::from("A"), ReplicaId(2), &fx.cfg, &fx.crypto));
            // every subset of a failing set fails too
            for k in 0..smaller.len() {
                prop_assert!(!prepared_predicate(&smaller[..k], View(1), &Value::from("A"), ReplicaId(2), &fx.cfg, &fx.crypto));
            }
        }
    }

    #[test]
    fn certificate_survives_serialization() {
        let fx = fixture(16, 5);
        let prepares = fx.cert_for(7, View(2), "A").unwrap();
        let cert = PreparedCertificate { view: View(2), value: Value::from("A"), holder: ReplicaId(7), prepares };
        assert!(certificate_valid(&cert, &fx.cfg, &fx.crypto));
        let back = PreparedCertificate::decode(&cert.encode()).unwrap();
        assert_eq!(back, cert);
        assert!(certificate_valid(&back, &fx.cfg, &fx.crypto));
    }

    fn propose(fx: &Fixture, view: View, value: &str, justification: Vec<NewLeader>) -> Propose {
        let leader = fx.key(fx.cfg.leader(view).0);
        Propose::new(leader, LeaderPair::sign(leader, view, Value::from(value)), justification)
    }

    #[test]
    fn safe_proposal_cases() {
        let fx = fixture(10, 3);
        let dq = fx.cfg.det_quorum as u32;
        assert!(safe_proposal(&propose(&fx, View(1), "x", vec![]), &fx.cfg, &fx.crypto, &always_valid));
        assert!(!safe_proposal(&propose(&fx, View(1), "INVALID", vec![]), &fx.cfg, &fx.crypto, &reject_sentinel));

        // view 2, all unprepared: leader's own value is safe
        let v2 = View(2);
        let m: Vec<NewLeader> = (1..=dq).map(|i| fx.new_leader(i, v2, None)).collect();
        assert!(safe_proposal(&propose(&fx, v2, "own", m.clone()), &fx.cfg, &fx.crypto, &always_valid));
        // too few NewLeaders
        assert!(!safe_proposal(&propose(&fx, v2, "own", m[1..].to_vec()), &fx.cfg, &fx.crypto, &always_valid));
        // duplicate sender padding
        let mut padded = m[1..].to_vec();
        padded.push(m[1].clone());
        assert!(!safe_proposal(&propose(&fx, v2, "own", padded), &fx.cfg, &fx.crypto, &always_valid));
        // NewLeader for a different view
        let mut wrong_view = m.clone();
        wrong_view[0] = fx.new_leader(1, View(3), None);
        assert!(!safe_proposal(&propose(&fx, v2, "own", wrong_view), &fx.cfg, &fx.crypto, &always_valid));

        // view 3 with one replica prepared A in view 1: must propose A
        let v3 = View(3);
        let mut m: Vec<NewLeader> = (2..=dq).map(|i| fx.new_leader(i, v3, None)).collect();
        m.push(fx.new_leader(1, v3, Some((View(1), "A"))));
        assert!(safe_proposal(&propose(&fx, v3, "A", m.clone()), &fx.cfg, &fx.crypto, &always_valid));
        assert!(!safe_proposal(&propose(&fx, v3, "B", m.clone()), &fx.cfg, &fx.crypto, &always_valid));

        // wrong sender for the view
        let not_leader = fx.key(5);
        let p = Propose::new(not_leader, LeaderPair::sign(not_leader, v3, Value::from("A")), m);
        assert!(!safe_proposal(&p, &fx.cfg, &fx.crypto, &always_valid));
    }

    #[test]
    fn safe_proposal_value_equals_selection() {
        let fx = fixture(10, 3);
        let v = View(4);
        let dq = fx.cfg.det_quorum as u32;
        let mut m: Vec<NewLeader> = (3..=dq + 1).map(|i| fx.new_leader(i, v, None)).collect();
        m.push(fx.new_leader(1, v, Some((View(2), "B"))));
        let chosen = select_proposal(&m, &Value::from("own"));
        assert_eq!(chosen, Value::from("B"));
        let p = propose(&fx, v, "B", m);
        assert!(safe_proposal(&p, &fx.cfg, &fx.crypto, &always_valid));
        assert_eq!(select_proposal(&p.justification, &Value::from("zzz")), p.pair.value);
    }
}
