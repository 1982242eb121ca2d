//! Simulated signatures and VRF sampling.
//!
//! The adversary model never breaks primitives, so keyed SHA-256 stands in
//! for both schemes. Verification goes through a per-run [`SimCrypto`]
//! registry that can recompute any replica's output; callers only ever see
//! public keys and the [`Verifier`] trait.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::types::{ReplicaId, View};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SecretKey([u8; 32]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; 32]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Signature(pub [u8; 32]);

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SecretKey(..)")
    }
}

/// Proof accompanying a VRF sample. Binds the output to `(owner, seed, s)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VrfProof {
    pub output: [u8; 32],
    pub owner: ReplicaId,
    pub seed: Vec<u8>,
    pub s: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Prepare,
    Commit,
}

impl Phase {
    pub fn tag(self) -> u8 {
        match self {
            Phase::Prepare => 0x01,
            Phase::Commit => 0x02,
        }
    }
}

/// VRF seed: 8-byte big-endian view followed by the phase tag byte.
pub fn vrf_seed(view: View, phase: Phase) -> Vec<u8> {
    let mut seed = Vec::with_capacity(9);
    seed.extend_from_slice(&view.0.to_be_bytes());
    seed.push(phase.tag());
    seed
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CryptoError {
    #[error("sample size s={s} must be in 1..={n}")]
    BadSampleSize { s: usize, n: usize },
}

/// A replica's key material, derived from `(rng_seed, owner)`.
#[derive(Debug, Clone)]
pub struct KeyPair {
    secret: SecretKey,
    pub public: PublicKey,
    pub owner: ReplicaId,
}

fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

impl KeyPair {
    pub fn derive(rng_seed: u64, owner: ReplicaId) -> Self {
        let secret = SecretKey(sha256(&[
            b"probft/secret",
            &rng_seed.to_be_bytes(),
            &owner.0.to_be_bytes(),
        ]));
        let public = PublicKey(sha256(&[b"probft/public", &secret.0]));
        KeyPair { secret, public, owner }
    }

    pub fn sign(&self, payload: &[u8]) -> Signature {
        sign(&self.secret, payload)
    }

    pub fn vrf_prove(
        &self,
        seed: &[u8],
        s: usize,
        n: usize,
    ) -> Result<(Vec<ReplicaId>, VrfProof), CryptoError> {
        vrf_prove(&self.secret, self.owner, seed, s, n)
    }
}

pub fn sign(secret: &SecretKey, payload: &[u8]) -> Signature {
    Signature(sha256(&[b"probft/sig", &secret.0, payload]))
}

/// Uniform integer in `0..bound` by rejection, so the mapping from the
/// ChaCha stream to samples is fully specified.
fn uniform_below(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    let limit = u64::MAX - (u64::MAX % bound);
    loop {
        let x = rng.next_u64();
        if x < limit {
            return x % bound;
        }
    }
}

/// Draws `s` distinct IDs from `1..=n` with a partial Fisher-Yates shuffle
/// driven by `output`. Returned sorted.
fn sample_from_output(output: &[u8; 32], s: usize, n: usize) -> Vec<ReplicaId> {
    let mut rng = ChaCha20Rng::from_seed(*output);
    let mut ids: Vec<u32> = (1..=n as u32).collect();
    for i in 0..s {
        let j = i + uniform_below(&mut rng, (n - i) as u64) as usize;
        ids.swap(i, j);
    }
    let mut sample: Vec<ReplicaId> = ids[..s].iter().map(|&i| ReplicaId(i)).collect();
    sample.sort_unstable();
    sample
}

fn vrf_output(secret: &SecretKey, seed: &[u8], s: usize, n: usize) -> [u8; 32] {
    sha256(&[
        b"probft/vrf",
        &secret.0,
        &(seed.len() as u32).to_be_bytes(),
        seed,
        &(s as u32).to_be_bytes(),
        &(n as u32).to_be_bytes(),
    ])
}

pub fn vrf_prove(
    secret: &SecretKey,
    owner: ReplicaId,
    seed: &[u8],
    s: usize,
    n: usize,
) -> Result<(Vec<ReplicaId>, VrfProof), CryptoError> {
    if s == 0 || s > n {
        return Err(CryptoError::BadSampleSize { s, n });
    }
    let output = vrf_output(secret, seed, s, n);
    let sample = sample_from_output(&output, s, n);
    Ok((sample, VrfProof { output, owner, seed: seed.to_vec(), s: s as u32 }))
}

/// Verification side of the crypto interface.
pub trait Verifier: Send + Sync {
    fn public_key(&self, id: ReplicaId) -> Option<PublicKey>;
    fn verify(&self, public: &PublicKey, payload: &[u8], sig: &Signature) -> bool;
    fn vrf_verify(
        &self,
        public: &PublicKey,
        seed: &[u8],
        s: usize,
        sample: &[ReplicaId],
        proof: &VrfProof,
    ) -> bool;

    /// Convenience: verify a signature claimed to be from replica `id`.
    fn verify_from(&self, id: ReplicaId, payload: &[u8], sig: &Signature) -> bool {
        match self.public_key(id) {
            Some(pk) => self.verify(&pk, payload, sig),
            None => false,
        }
    }

    fn vrf_verify_from(
        &self,
        id: ReplicaId,
        seed: &[u8],
        s: usize,
        sample: &[ReplicaId],
        proof: &VrfProof,
    ) -> bool {
        match self.public_key(id) {
            Some(pk) => self.vrf_verify(&pk, seed, s, sample, proof),
            None => false,
        }
    }
}

type VrfCacheKey = (ReplicaId, Vec<u8>, u32);

/// Per-run key registry. Holds every replica's key so it can recompute
/// signatures and VRF outputs; it never hands a secret back out.
pub struct SimCrypto {
    n: usize,
    by_public: HashMap<PublicKey, (ReplicaId, SecretKey)>,
    publics: Vec<PublicKey>,
    vrf_cache: Mutex<HashMap<VrfCacheKey, (Vec<ReplicaId>, [u8; 32])>>,
}

impl SimCrypto {
    /// Generates key pairs for replicas `1..=n` and the matching registry.
    pub fn generate(n: usize, rng_seed: u64) -> (SimCrypto, Vec<KeyPair>) {
        let keys: Vec<KeyPair> =
            (1..=n as u32).map(|i| KeyPair::derive(rng_seed, ReplicaId(i))).collect();
        let by_public = keys.iter().map(|k| (k.public, (k.owner, k.secret))).collect();
        let publics = keys.iter().map(|k| k.public).collect();
        let crypto = SimCrypto { n, by_public, publics, vrf_cache: Mutex::new(HashMap::new()) };
        (crypto, keys)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl Verifier for SimCrypto {
    fn public_key(&self, id: ReplicaId) -> Option<PublicKey> {
        if id.0 == 0 {
            return None;
        }
        self.publics.get(id.index()).copied()
    }

    fn verify(&self, public: &PublicKey, payload: &[u8], sig: &Signature) -> bool {
        match self.by_public.get(public) {
            Some((_, secret)) => sign(secret, payload) == *sig,
            None => false,
        }
    }

    fn vrf_verify(
        &self,
        public: &PublicKey,
        seed: &[u8],
        s: usize,
        sample: &[ReplicaId],
        proof: &VrfProof,
    ) -> bool {
        let Some((owner, secret)) = self.by_public.get(public) else {
            return false;
        };
        if proof.owner != *owner || proof.seed != seed || proof.s as usize != s {
            return false;
        }
        if s == 0 || s > self.n || sample.len() != s {
            return false;
        }
        let key = (*owner, seed.to_vec(), s as u32);
        let mut cache = self.vrf_cache.lock().expect("vrf cache poisoned");
        let (expected, output) = cache.entry(key).or_insert_with(|| {
            let output = vrf_output(secret, seed, s, self.n);
            (sample_from_output(&output, s, self.n), output)
        });
        *output == proof.output && expected.as_slice() == sample
    }
}
