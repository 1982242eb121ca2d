use probft::crypto::{vrf_seed, PublicKey};
use probft::{Phase, ReplicaId, SimCrypto, Verifier, View};
use proptest::prelude::*;

// Pins the key derivation, the VRF output and the sample mapping.
#[test]
fn golden_vrf_output() {
    let (_, keys) = SimCrypto::generate(20, 42);
    let k = &keys[2];
    assert_eq!(k.owner, ReplicaId(3));
    let (sample, proof) = k.vrf_prove(&vrf_seed(View(7), Phase::Prepare), 5, 20).unwrap();
    assert_eq!(sample, [7, 8, 10, 11, 14].map(ReplicaId));
    let hex: String = proof.output.iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(hex, "d2eb20924cb633b71ee0f3f115d0a6220bb78eeb8c23dec2ba46954d644d70e4");
    let (sample, _) = k.vrf_prove(&vrf_seed(View(7), Phase::Commit), 5, 20).unwrap();
    assert_eq!(sample, [2, 8, 12, 15, 18].map(ReplicaId));
}

#[test]
fn seed_encoding() {
    assert_eq!(vrf_seed(View(258), Phase::Commit), vec![0, 0, 0, 0, 0, 0, 1, 2, 2]);
    assert_eq!(vrf_seed(View(1), Phase::Prepare), vec![0, 0, 0, 0, 0, 0, 0, 1, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn any_single_byte_tamper_fails(
        view in 1u64..1000,
        owner in 0usize..16,
        byte in 0usize..32,
        flip in 1u8..=255,
        which in 0usize..6,
    ) {
        let n = 16;
        let s = 7;
        let (crypto, keys) = SimCrypto::generate(n, 5);
        let seed = vrf_seed(View(view), Phase::Prepare);
        let (sample, proof) = keys[owner].vrf_prove(&seed, s, n).unwrap();
        let pk = keys[owner].public;
        prop_assert!(crypto.vrf_verify(&pk, &seed, s, &sample, &proof));
        let ok = match which {
            0 => {
                let mut bad = sample.clone();
                let i = byte % s;
                bad[i] = ReplicaId((bad[i].0 % n as u32) + 1);
                bad.sort();
                bad != sample && crypto.vrf_verify(&pk, &seed, s, &bad, &proof)
            }
            1 => {
                let mut bad = proof.clone();
                bad.output[byte] ^= flip;
                crypto.vrf_verify(&pk, &seed, s, &sample, &bad)
            }
            2 => {
                let mut bad = seed.clone();
                let i = byte % bad.len();
                bad[i] ^= flip;
                crypto.vrf_verify(&pk, &bad, s, &sample, &proof)
            }
            3 => {
                let mut bad = pk.0;
                bad[byte] ^= flip;
                crypto.vrf_verify(&PublicKey(bad), &seed, s, &sample, &proof)
            }
            4 => {
                let other = keys[(owner + 1) % n].public;
                crypto.vrf_verify(&other, &seed, s, &sample, &proof)
            }
            _ => {
                let mut bad = proof.clone();
                let i = byte % bad.seed.len();
                bad.seed[i] ^= flip;
                crypto.vrf_verify(&pk, &seed, s, &sample, &bad)
            }
        };
        prop_assert!(!ok);
    }
}
