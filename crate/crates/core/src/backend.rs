//! Concrete deterministic algorithms behind the hybrid wrappers.

use std::fmt;

use hmac::{KeyInit, Mac};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::codec::ConcreteBytes;

pub const MAC_LEN: usize = 20;

type HmacSha1 = hmac::Hmac<sha1::Sha1>;

pub fn hmac_sha1(key: &[u8], msg: &[u8]) -> [u8; MAC_LEN] {
    let mut mac = HmacSha1::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(msg);
    mac.finalize().into_bytes().into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("ciphertext failed authentication")]
pub struct AuthError;

fn keystream_xor(key: &[u8], data: &mut [u8]) {
    for (i, chunk) in data.chunks_mut(MAC_LEN).enumerate() {
        let block = hmac_sha1(key, &(i as u64).to_be_bytes());
        for (d, k) in chunk.iter_mut().zip(block) {
            *d ^= k;
        }
    }
}

/// Deterministic encrypt-then-MAC: `body = plaintext XOR keystream(key)`,
/// output `body || hmac_sha1(key, body)`. Keystream block `i` is
/// `hmac_sha1(key, i as u64 big-endian)`.
pub fn senc(key: &[u8], plaintext: &[u8]) -> Vec<u8> {
    let mut out = plaintext.to_vec();
    keystream_xor(key, &mut out);
    let tag = hmac_sha1(key, &out);
    out.extend_from_slice(&tag);
    out
}

pub fn sdec(key: &[u8], ciphertext: &[u8]) -> Result<Vec<u8>, AuthError> {
    let body_len = ciphertext.len().checked_sub(MAC_LEN).ok_or(AuthError)?;
    let (body, tag) = ciphertext.split_at(body_len);
    let mut mac = HmacSha1::new_from_slice(key).expect("HMAC accepts keys of any length");
    mac.update(body);
    mac.verify_slice(tag).map_err(|_| AuthError)?;
    let mut out = body.to_vec();
    keystream_xor(key, &mut out);
    Ok(out)
}

/// The MAC algorithm used by the HMAC wrappers. Swappable so that tests can
/// force digest collisions.
pub trait MacBackend: Send + Sync + fmt::Debug {
    fn mac(&self, key: &[u8], msg: &[u8]) -> Vec<u8>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha1Hmac;

impl MacBackend for Sha1Hmac {
    fn mac(&self, key: &[u8], msg: &[u8]) -> Vec<u8> {
        hmac_sha1(key, msg).to_vec()
    }
}

/// Source of fresh key and nonce bytes.
pub trait RandomSource: Send {
    fn fill(&mut self, buf: &mut [u8]);
}

/// Replayable ChaCha8 stream keyed by a 64-bit seed.
#[derive(Debug, Clone)]
pub struct SeededSource {
    seed: u64,
    draws: u64,
    rng: ChaCha8Rng,
}

impl SeededSource {
    pub fn new(seed: u64) -> SeededSource {
        SeededSource {
            seed,
            draws: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl RandomSource for SeededSource {
    fn fill(&mut self, buf: &mut [u8]) {
        self.draws += 1;
        self.rng.fill_bytes(buf);
    }
}

/// Draws `n` bytes. `n` must be at least 1.
pub fn random_bytes(src: &mut dyn RandomSource, n: usize) -> ConcreteBytes {
    assert!(n >= 1, "random_bytes needs n >= 1");
    let mut buf = vec![0u8; n];
    src.fill(&mut buf);
    ConcreteBytes::new(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn hmac_sha1_first_rfc2202_vector() {
        let d = hmac_sha1(&[0x0b; 20], b"Hi There");
        assert_eq!(
            crate::term::to_hex(&d),
            "b617318655057264e28bc0b6fb378c8ef146be00"
        );
        assert_eq!(hmac_sha1(b"k", b"m"), hmac_sha1(b"k", b"m"));
        assert_eq!(Sha1Hmac.mac(b"", b"").len(), MAC_LEN);
    }

    #[test]
    fn senc_roundtrip_and_determinism() {
        let p = b"a plaintext longer than a single keystream block".to_vec();
        let c = senc(b"key", &p);
        assert_eq!(c.len(), p.len() + MAC_LEN);
        assert_eq!(c, senc(b"key", &p));
        assert_eq!(sdec(b"key", &c).unwrap(), p);
        assert_eq!(sdec(b"key", &senc(b"key", b"")).unwrap(), b"");
    }

    #[test]
    fn sdec_rejects_wrong_key_and_tampering() {
        let c = senc(b"key", b"payload");
        assert_eq!(sdec(b"other", &c), Err(AuthError));
        let mut t = c.clone();
        t[0] ^= 1;
        assert_eq!(sdec(b"key", &t), Err(AuthError));
        assert_eq!(sdec(b"key", &c[..MAC_LEN - 1]), Err(AuthError));
    }

    #[test]
    fn seeded_source_replays() {
        let mut a = SeededSource::new(7);
        let mut b = SeededSource::new(7);
        let xs: Vec<_> = (0..5).map(|_| random_bytes(&mut a, 16)).collect();
        let ys: Vec<_> = (0..5).map(|_| random_bytes(&mut b, 16)).collect();
        assert_eq!(xs, ys);
        assert_eq!(a.draws(), 5);
        assert_eq!(random_bytes(&mut a, 16).len(), 16);
    }

    #[test]
    fn successive_draws_differ() {
        let mut src = SeededSource::new(1);
        let draws: HashSet<_> = (0..10_000).map(|_| random_bytes(&mut src, 16)).collect();
        assert_eq!(draws.len(), 10_000);
    }
}
