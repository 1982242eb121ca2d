//! Protocol messages and their canonical byte encoding.
//!
//! Every integer is fixed-width big-endian, every variable-length field is
//! prefixed with a `u32` length or count, and every signature covers the
//! encoding of all fields that precede it. The encoding is what gets signed,
//! so it must stay bit-stable.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{KeyPair, Phase, Signature, VrfProof};
use crate::types::{ReplicaId, Value, View};

const TAG_PROPOSE: u8 = 0x01;
const TAG_NEW_LEADER: u8 = 0x02;
const TAG_PREPARE: u8 = 0x03;
const TAG_COMMIT: u8 = 0x04;
const TAG_PAIR: u8 = 0x10;
const TAG_CERT: u8 = 0x11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MessageKind {
    Propose,
    NewLeader,
    Prepare,
    Commit,
}

impl MessageKind {
    pub const ALL: [MessageKind; 4] =
        [MessageKind::Propose, MessageKind::NewLeader, MessageKind::Prepare, MessageKind::Commit];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageKind::Propose => "Propose",
            MessageKind::NewLeader => "NewLeader",
            MessageKind::Prepare => "Prepare",
            MessageKind::Commit => "Commit",
        }
    }
}

/// `<v, x>_j`: a view/value pair signed by the view's leader.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LeaderPair {
    pub view: View,
    pub value: Value,
    pub signer: ReplicaId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Propose {
    pub pair: LeaderPair,
    /// NewLeader messages justifying the value; empty in view 1.
    pub justification: Vec<NewLeader>,
    pub sender: ReplicaId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NewLeader {
    pub view: View,
    /// `View::NONE` when the sender never prepared.
    pub prepared_view: View,
    pub prepared_val: Option<Value>,
    pub cert: Option<PreparedCertificate>,
    pub sender: ReplicaId,
    pub signature: Signature,
}

/// A Prepare or Commit message.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vote {
    pub phase: Phase,
    pub pair: LeaderPair,
    pub sample: Vec<ReplicaId>,
    pub proof: VrfProof,
    pub sender: ReplicaId,
    pub signature: Signature,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreparedCertificate {
    pub view: View,
    pub value: Value,
    pub holder: ReplicaId,
    pub prepares: Vec<Vote>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Message {
    Propose(Propose),
    NewLeader(NewLeader),
    Vote(Vote),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Propose(_) => MessageKind::Propose,
            Message::NewLeader(_) => MessageKind::NewLeader,
            Message::Vote(v) => match v.phase {
                Phase::Prepare => MessageKind::Prepare,
                Phase::Commit => MessageKind::Commit,
            },
        }
    }

    pub fn view(&self) -> View {
        match self {
            Message::Propose(p) => p.pair.view,
            Message::NewLeader(m) => m.view,
            Message::Vote(v) => v.pair.view,
        }
    }

    pub fn sender(&self) -> ReplicaId {
        match self {
            Message::Propose(p) => p.sender,
            Message::NewLeader(m) => m.sender,
            Message::Vote(v) => v.sender,
        }
    }

    pub fn signature(&self) -> &Signature {
        match self {
            Message::Propose(p) => &p.signature,
            Message::NewLeader(m) => &m.signature,
            Message::Vote(v) => &v.signature,
        }
    }

    /// The leader-signed pair, if this kind carries one.
    pub fn leader_pair(&self) -> Option<&LeaderPair> {
        match self {
            Message::Propose(p) => Some(&p.pair),
            Message::NewLeader(_) => None,
            Message::Vote(v) => Some(&v.pair),
        }
    }

    /// Bytes covered by the sender's signature.
    pub fn signing_payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Message::Propose(p) => p.encode_unsigned(&mut out),
            Message::NewLeader(m) => m.encode_unsigned(&mut out),
            Message::Vote(v) => v.encode_unsigned(&mut out),
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_to(&mut out);
        out
    }

    pub fn encode_to(&self, out: &mut Vec<u8>) {
        match self {
            Message::Propose(p) => p.encode_to(out),
            Message::NewLeader(m) => m.encode_to(out),
            Message::Vote(v) => v.encode_to(out),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
        let mut r = Reader::new(bytes);
        let msg = r.message()?;
        r.finish()?;
        Ok(msg)
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Propose(p) => write!(
                f,
                "Propose(v={},x={},from={},M={})",
                p.pair.view,
                p.pair.value,
                p.sender,
                p.justification.len()
            ),
            Message::NewLeader(m) => {
                write!(f, "NewLeader(v={},pv={},from={}", m.view, m.prepared_view, m.sender)?;
                if let Some(val) = &m.prepared_val {
                    write!(f, ",pval={val}")?;
                }
                f.write_str(")")
            }
            Message::Vote(v) => write!(
                f,
                "{}(v={},x={},from={})",
                if v.phase == Phase::Prepare { "Prepare" } else { "Commit" },
                v.pair.view,
                v.pair.value,
                v.sender
            ),
        }
    }
}

impl LeaderPair {
    pub fn signing_payload(view: View, value: &Value) -> Vec<u8> {
        let mut out = vec![TAG_PAIR];
        put_u64(&mut out, view.0);
        put_bytes(&mut out, value.as_bytes());
        out
    }

    pub fn sign(keys: &KeyPair, view: View, value: Value) -> LeaderPair {
        let signature = keys.sign(&Self::signing_payload(view, &value));
        LeaderPair { view, value, signer: keys.owner, signature }
    }

    fn encode_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&Self::signing_payload(self.view, &self.value));
        put_u32(out, self.signer.0);
        out.extend_from_slice(&self.signature.0);
    }
}

impl Propose {
    pub fn new(keys: &KeyPair, pair: LeaderPair, justification: Vec<NewLeader>) -> Propose {
        let mut p = Propose { pair, justification, sender: keys.owner, signature: Signature([0; 32]) };
        let mut payload = Vec::new();
        p.encode_unsigned(&mut payload);
        p.signature = keys.sign(&payload);
        p
    }

    fn encode_unsigned(&self, out: &mut Vec<u8>) {
        out.push(TAG_PROPOSE);
        self.pair.encode_to(out);
        put_u32(out, self.justification.len() as u32);
        for m in &self.justification {
            m.encode_to(out);
        }
        put_u32(out, self.sender.0);
    }

    fn encode_to(&self, out: &mut Vec<u8>) {
        self.encode_unsigned(out);
        out.extend_from_slice(&self.signature.0);
    }
}

impl NewLeader {
    pub fn new(
        keys: &KeyPair,
        view: View,
        prepared_view: View,
        prepared_val: Option<Value>,
        cert: Option<PreparedCertificate>,
    ) -> NewLeader {
        let mut m = NewLeader {
            view,
            prepared_view,
            prepared_val,
            cert,
            sender: keys.owner,
            signature: Signature([0; 32]),
        };
        m.signature = keys.sign(&m.unsigned_bytes());
        m
    }

    pub fn unsigned_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_unsigned(&mut out);
        out
    }

    fn encode_unsigned(&self, out: &mut Vec<u8>) {
        out.push(TAG_NEW_LEADER);
        put_u64(out, self.view.0);
        put_u64(out, self.prepared_view.0);
        match &self.prepared_val {
            Some(v) => {
                out.push(1);
                put_bytes(out, v.as_bytes());
            }
            None => out.push(0),
        }
        match &self.cert {
            Some(c) => {
                out.push(1);
                c.encode_to(out);
            }
            None => out.push(0),
        }
        put_u32(out, self.sender.0);
    }

    fn encode_to(&self, out: &mut Vec<u8>) {
        self.encode_unsigned(out);
        out.extend_from_slice(&self.signature.0);
    }
}

impl Vote {
    pub fn new(
        keys: &KeyPair,
        phase: Phase,
        pair: LeaderPair,
        sample: Vec<ReplicaId>,
        proof: VrfProof,
    ) -> Vote {
        let mut v =
            Vote { phase, pair, sample, proof, sender: keys.owner, signature: Signature([0; 32]) };
        v.signature = keys.sign(&v.unsigned_bytes());
        v
    }

    pub fn unsigned_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_unsigned(&mut out);
        out
    }

    fn encode_unsigned(&self, out: &mut Vec<u8>) {
        out.push(match self.phase {
            Phase::Prepare => TAG_PREPARE,
            Phase::Commit => TAG_COMMIT,
        });
        self.pair.encode_to(out);
        put_u32(out, self.sample.len() as u32);
        for r in &self.sample {
            put_u32(out, r.0);
        }
        out.extend_from_slice(&self.proof.output);
        put_u32(out, self.proof.owner.0);
        put_bytes(out, &self.proof.seed);
        put_u32(out, self.proof.s);
        put_u32(out, self.sender.0);
    }

    fn encode_to(&self, out: &mut Vec<u8>) {
        self.encode_unsigned(out);
        out.extend_from_slice(&self.signature.0);
    }
}

impl PreparedCertificate {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_to(&mut out);
        out
    }

    fn encode_to(&self, out: &mut Vec<u8>) {
        out.push(TAG_CERT);
        put_u64(out, self.view.0);
        put_bytes(out, self.value.as_bytes());
        put_u32(out, self.holder.0);
        put_u32(out, self.prepares.len() as u32);
        for v in &self.prepares {
            v.encode_to(out);
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<PreparedCertificate, DecodeError> {
        let mut r = Reader::new(bytes);
        let c = r.cert()?;
        r.finish()?;
        Ok(c)
    }
}

fn put_u32(out: &mut Vec<u8>, x: u32) {
    out.extend_from_slice(&x.to_be_bytes());
}

fn put_u64(out: &mut Vec<u8>, x: u64) {
    out.extend_from_slice(&x.to_be_bytes());
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, b.len() as u32);
    out.extend_from_slice(b);
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("unknown tag 0x{tag:02x} at offset {offset}")]
    BadTag { tag: u8, offset: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn finish(&self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            k => Err(DecodeError::Trailing(k)),
        }
    }

    fn take(&mut self, k: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < k {
            return Err(DecodeError::Truncated(self.pos));
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn arr32(&mut self) -> Result<[u8; 32], DecodeError> {
        Ok(self.take(32)?.try_into().unwrap())
    }

    fn bytes(&mut self) -> Result<Vec<u8>, DecodeError> {
        let len = self.u32()? as usize;
        Ok(self.take(len)?.to_vec())
    }

    fn expect_tag(&mut self, want: u8) -> Result<(), DecodeError> {
        let offset = self.pos;
        let tag = self.u8()?;
        if tag != want {
            return Err(DecodeError::BadTag { tag, offset });
        }
        Ok(())
    }

    fn pair(&mut self) -> Result<LeaderPair, DecodeError> {
        self.expect_tag(TAG_PAIR)?;
        let view = View(self.u64()?);
        let value = Value(self.bytes()?);
        let signer = ReplicaId(self.u32()?);
        let signature = Signature(self.arr32()?);
        Ok(LeaderPair { view, value, signer, signature })
    }

    fn flag(&mut self) -> Result<bool, DecodeError> {
        let offset = self.pos;
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(DecodeError::BadTag { tag, offset }),
        }
    }

    fn message(&mut self) -> Result<Message, DecodeError> {
        let offset = self.pos;
        match self.buf.get(self.pos).copied() {
            Some(TAG_PROPOSE) => self.propose().map(Message::Propose),
            Some(TAG_NEW_LEADER) => self.new_leader().map(Message::NewLeader),
            Some(TAG_PREPARE) | Some(TAG_COMMIT) => self.vote().map(Message::Vote),
            Some(tag) => Err(DecodeError::BadTag { tag, offset }),
            None => Err(DecodeError::Truncated(offset)),
        }
    }

    fn propose(&mut self) -> Result<Propose, DecodeError> {
        self.expect_tag(TAG_PROPOSE)?;
        let pair = self.pair()?;
        let count = self.u32()? as usize;
        let mut justification = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            justification.push(self.new_leader()?);
        }
        let sender = ReplicaId(self.u32()?);
        let signature = Signature(self.arr32()?);
        Ok(Propose { pair, justification, sender, signature })
    }

    fn new_leader(&mut self) -> Result<NewLeader, DecodeError> {
        self.expect_tag(TAG_NEW_LEADER)?;
        let view = View(self.u64()?);
        let prepared_view = View(self.u64()?);
        let prepared_val = if self.flag()? { Some(Value(self.bytes()?)) } else { None };
        let cert = if self.flag()? { Some(self.cert()?) } else { None };
        let sender = ReplicaId(self.u32()?);
        let signature = Signature(self.arr32()?);
        Ok(NewLeader { view, prepared_view, prepared_val, cert, sender, signature })
    }

    fn vote(&mut self) -> Result<Vote, DecodeError> {
        let offset = self.pos;
        let phase = match self.u8()? {
            TAG_PREPARE => Phase::Prepare,
            TAG_COMMIT => Phase::Commit,
            tag => return Err(DecodeError::BadTag { tag, offset }),
        };
        let pair = self.pair()?;
        let count = self.u32()? as usize;
        let mut sample = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            sample.push(ReplicaId(self.u32()?));
        }
        let output = self.arr32()?;
        let owner = ReplicaId(self.u32()?);
        let seed = self.bytes()?;
        let s = self.u32()?;
        let sender = ReplicaId(self.u32()?);
        let signature = Signature(self.arr32()?);
        Ok(Vote { phase, pair, sample, proof: VrfProof { output, owner, seed, s }, sender, signature })
    }

    fn cert(&mut self) -> Result<PreparedCertificate, DecodeError> {
        self.expect_tag(TAG_CERT)?;
        let view = View(self.u64()?);
        let value = Value(self.bytes()?);
        let holder = ReplicaId(self.u32()?);
        let count = self.u32()? as usize;
        let mut prepares = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            prepares.push(self.vote()?);
        }
        Ok(PreparedCertificate { view, value, holder, prepares })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{vrf_seed, SimCrypto};

    #[test]
    fn pair_encoding_layout() {
        let (_, keys) = SimCrypto::generate(4, 1);
        let pair = LeaderPair::sign(&keys[0], View(2), Value::from("ab"));
        let mut out = Vec::new();
        pair.encode_to(&mut out);
        assert_eq!(&out[..15], &[0x10, 0, 0, 0, 0, 0, 0, 0, 2, 0, 0, 0, 2, b'a', b'b']);
        assert_eq!(&out[15..19], &[0, 0, 0, 1]);
        assert_eq!(out.len(), 19 + 32);
    }

    #[test]
    fn vote_roundtrip_and_truncation() {
        let (_, keys) = SimCrypto::generate(5, 1);
        let pair = LeaderPair::sign(&keys[0], View(1), Value::from("x"));
        let seed = vrf_seed(View(1), Phase::Prepare);
        let (sample, proof) = keys[2].vrf_prove(&seed, 3, 5).unwrap();
        let msg = Message::Vote(Vote::new(&keys[2], Phase::Prepare, pair, sample, proof));
        let bytes = msg.encode();
        assert_eq!(Message::decode(&bytes).unwrap(), msg);
        assert!(matches!(Message::decode(&bytes[..bytes.len() - 1]), Err(DecodeError::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(Message::decode(&extra), Err(DecodeError::Trailing(1)));
        assert!(matches!(Message::decode(&[0x99]), Err(DecodeError::BadTag { tag: 0x99, .. })));
    }

    #[test]
    fn signing_payload_is_prefix_of_encoding() {
        let (_, keys) = SimCrypto::generate(4, 1);
        let nl = NewLeader::new(&keys[1], View(2), View::NONE, None, None);
        let msg = Message::NewLeader(nl);
        let enc = msg.encode();
        let payload = msg.signing_payload();
        assert_eq!(&enc[..payload.len()], payload.as_slice());
        assert_eq!(enc.len(), payload.len() + 32);
    }
}
