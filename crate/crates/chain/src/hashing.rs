//! SHA-256 digests, canonical byte encoding and hash-derived permutations.
//!
//! Canonical encoding: integers as 8-byte little endian, floats as the
//! little-endian bytes of their IEEE-754 bit pattern, byte strings and
//! sequences prefixed by their length as a u64, fields in declaration order.

use std::fmt;

use bspow_core::binning::{BinnedDistribution, BinnedKind};
use bspow_core::{OccupationVector, Permutation};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Digest(bytes.try_into().ok()?))
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_hex())
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Digest::from_hex(&s).ok_or_else(|| serde::de::Error::custom(format!("bad digest {s:?}")))
    }
}

pub fn sha256(bytes: &[u8]) -> Digest {
    Digest(Sha256::digest(bytes).into())
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_le_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn bool(&mut self, v: bool) -> &mut Self {
        self.u64(u64::from(v))
    }

    pub fn bytes(&mut self, v: &[u8]) -> &mut Self {
        self.u64(v.len() as u64);
        self.buf.extend_from_slice(v);
        self
    }

    pub fn str(&mut self, v: &str) -> &mut Self {
        self.bytes(v.as_bytes())
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.buf.extend_from_slice(&d.0);
        self
    }

    pub fn u64s(&mut self, v: impl ExactSizeIterator<Item = u64>) -> &mut Self {
        self.u64(v.len() as u64);
        for x in v {
            self.u64(x);
        }
        self
    }

    pub fn f64s(&mut self, v: &[f64]) -> &mut Self {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
        self
    }

    pub fn put<T: Canonical + ?Sized>(&mut self, v: &T) -> &mut Self {
        v.encode(self);
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }

    pub fn digest_of(self) -> Digest {
        sha256(&self.buf)
    }
}

pub trait Canonical {
    fn encode(&self, enc: &mut Encoder);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        self.encode(&mut e);
        e.finish()
    }

    fn canonical_hash(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }
}

impl Canonical for Permutation {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64s(self.as_slice().iter().map(|&x| x as u64));
    }
}

impl Canonical for OccupationVector {
    fn encode(&self, enc: &mut Encoder) {
        enc.u64s(self.counts().iter().map(|&x| u64::from(x)));
    }
}

impl Canonical for BinnedDistribution {
    fn encode(&self, enc: &mut Encoder) {
        enc.str(match self.kind {
            BinnedKind::Mode => "mode",
            BinnedKind::ModeFraction => "mode_fraction",
            BinnedKind::State => "state",
        });
        enc.u64(self.labels.len() as u64);
        for l in &self.labels {
            enc.u64s(l.iter().map(|&x| u64::from(x)));
        }
        enc.f64s(&self.probs).f64(self.clamped_mass);
    }
}

/// Counter-mode SHA-256 byte stream over `digest ‖ tag ‖ counter`.
struct HashStream {
    seed: Vec<u8>,
    counter: u64,
    block: [u8; 32],
    used: usize,
}

impl HashStream {
    fn new(digest: &Digest, tag: &str) -> Self {
        let mut e = Encoder::new();
        e.digest(digest).str(tag);
        HashStream { seed: e.finish(), counter: 0, block: [0; 32], used: 32 }
    }

    fn next_u64(&mut self) -> u64 {
        if self.used == 32 {
            let mut h = Sha256::new();
            h.update(&self.seed);
            h.update(self.counter.to_le_bytes());
            self.block = h.finalize().into();
            self.counter += 1;
            self.used = 0;
        }
        let v = u64::from_le_bytes(self.block[self.used..self.used + 8].try_into().expect("8 bytes"));
        self.used += 8;
        v
    }

    /// Uniform integer in `[0, bound)` by rejection.
    fn below(&mut self, bound: u64) -> u64 {
        let zone = u64::MAX - (u64::MAX % bound + 1) % bound;
        loop {
            let x = self.next_u64();
            if x <= zone {
                return x % bound;
            }
        }
    }
}

/// Domain tags for the three hash-to-permutation maps.
pub mod tags {
    /// Header hash to input-mode permutation.
    pub const INPUT: &str = "A";
    /// Beacon to mode-binning permutation.
    pub const MODE_BINS: &str = "G";
    /// Beacon to state-binning permutation.
    pub const STATE_BINS: &str = "F";
}

/// Fisher–Yates shuffle of `0..n` driven by the hash stream of
/// `digest ‖ domain_tag`.
pub fn hash_to_permutation(digest: &Digest, n: usize, domain_tag: &str) -> Permutation {
    let mut stream = HashStream::new(digest, domain_tag);
    let mut v: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = stream.below(i as u64 + 1) as usize;
        v.swap(i, j);
    }
    Permutation::new(v).expect("shuffle of 0..n")
}
