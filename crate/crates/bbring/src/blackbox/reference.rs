//! The reference oracle: encrypts M2(F_q) behind opaque strings.
//!
//! A plaintext matrix m is conjugated by a hidden invertible matrix g,
//! serialized, extended by a fresh 8-byte nonce, and passed through a keyed
//! 4-round balanced Feistel network. The nonce makes encodings non-unique;
//! the Feistel layer makes the string bytes unrelated to the plaintext
//! layout; conjugation hides the coordinate system. Every operation decodes,
//! computes on plaintexts, and re-encodes with a fresh nonce.
//!
//! All session randomness (random elements, nonces, the hidden conjugator
//! and key) derives from the construction seed through a counter-based
//! generator, so a `(params, seed)` pair reproduces a session bit-exactly.

use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

use crate::field::{FieldParams, Mat2};

use super::{Cryptoelement, OracleError, QueryCounters, RingOracle, SessionId};

const NONCE_LEN: usize = 8;
const FEISTEL_ROUNDS: u8 = 4;

/// Hidden per-session state. Unreachable through [`RingOracle`].
struct Secret {
    conjugator: Mat2,
    conjugator_inv: Mat2,
    key: [u8; 32],
}

pub struct ReferenceOracle {
    params: FieldParams,
    session: SessionId,
    secret: Secret,
    rng: RefCell<ChaCha12Rng>,
    counters: RefCell<QueryCounters>,
}

impl ReferenceOracle {
    pub fn new(params: FieldParams, seed: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let conjugator = loop {
            let g = params.random_matrix(&mut rng);
            if params.mat_is_invertible(&g) {
                break g;
            }
        };
        let conjugator_inv = params
            .mat_inverse(&conjugator)
            .expect("conjugator is invertible");
        let mut key = [0u8; 32];
        rng.fill(&mut key);
        ReferenceOracle {
            params,
            session: SessionId::fresh(),
            secret: Secret {
                conjugator,
                conjugator_inv,
                key,
            },
            rng: RefCell::new(rng),
            counters: RefCell::new(QueryCounters::default()),
        }
    }

    pub fn params(&self) -> &FieldParams {
        &self.params
    }

    fn payload_len(&self) -> usize {
        4 * self.params.element_width()
    }

    fn encode(&self, plaintext: &Mat2) -> Cryptoelement {
        let hidden = self.params.mat_mul(
            &self
                .params
                .mat_mul(&self.secret.conjugator_inv, plaintext),
            &self.secret.conjugator,
        );
        let mut bytes = Vec::with_capacity(self.string_len());
        for entry in hidden.entries() {
            self.params.serialize_element(entry, &mut bytes);
        }
        let mut nonce = [0u8; NONCE_LEN];
        self.rng.borrow_mut().fill(&mut nonce);
        bytes.extend_from_slice(&nonce);
        feistel(&self.secret.key, &mut bytes, false);
        Cryptoelement::from_parts(self.session, bytes.into_boxed_slice())
    }

    fn decode_checked(&self, x: &Cryptoelement) -> Result<Mat2, OracleError> {
        if x.session() != self.session {
            return Err(OracleError::CrossSession {
                expected: self.session,
                found: x.session(),
            });
        }
        if x.bytes().len() != self.string_len() {
            return Err(OracleError::WrongLength {
                expected: self.string_len(),
                got: x.bytes().len(),
            });
        }
        let mut bytes = x.bytes().to_vec();
        feistel(&self.secret.key, &mut bytes, true);
        let w = self.params.element_width();
        let mut entries = Vec::with_capacity(4);
        for i in 0..4 {
            entries.push(
                self.params
                    .deserialize_element(&bytes[i * w..(i + 1) * w])
                    .ok_or(OracleError::Malformed)?,
            );
        }
        let hidden = Mat2::new([
            entries[0].clone(),
            entries[1].clone(),
            entries[2].clone(),
            entries[3].clone(),
        ]);
        Ok(self.params.mat_mul(
            &self.params.mat_mul(&self.secret.conjugator, &hidden),
            &self.secret.conjugator_inv,
        ))
    }

    /// Harness-side ground truth: read the plaintext behind a string.
    /// Does not count as an oracle query; the recovery side never calls it.
    pub fn decode_plaintext(&self, x: &Cryptoelement) -> Result<Mat2, OracleError> {
        self.decode_checked(x)
    }

    /// Harness-side: plant a chosen plaintext. Does not count as a query.
    pub fn encode_plaintext(&self, plaintext: &Mat2) -> Cryptoelement {
        self.encode(plaintext)
    }
}

impl RingOracle for ReferenceOracle {
    fn session(&self) -> SessionId {
        self.session
    }

    fn string_len(&self) -> usize {
        self.payload_len() + NONCE_LEN
    }

    fn random(&self) -> Cryptoelement {
        self.counters.borrow_mut().random += 1;
        let m = {
            let mut rng = self.rng.borrow_mut();
            self.params.random_matrix(&mut *rng)
        };
        self.encode(&m)
    }

    fn add(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.counters.borrow_mut().add += 1;
        let (a, b) = (self.decode_checked(x)?, self.decode_checked(y)?);
        Ok(self.encode(&self.params.mat_add(&a, &b)))
    }

    fn neg(&self, x: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.counters.borrow_mut().neg += 1;
        let a = self.decode_checked(x)?;
        Ok(self.encode(&self.params.mat_neg(&a)))
    }

    fn mul(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.counters.borrow_mut().mul += 1;
        let (a, b) = (self.decode_checked(x)?, self.decode_checked(y)?);
        Ok(self.encode(&self.params.mat_mul(&a, &b)))
    }

    fn eq(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<bool, OracleError> {
        self.counters.borrow_mut().eq += 1;
        Ok(self.decode_checked(x)? == self.decode_checked(y)?)
    }

    fn counters(&self) -> QueryCounters {
        *self.counters.borrow()
    }
}

/// Keyed balanced Feistel network over an even-length byte string.
/// The round function is SHA-256 over (key, round tag, half).
fn feistel(key: &[u8; 32], data: &mut [u8], decrypt: bool) {
    let half = data.len() / 2;
    debug_assert_eq!(half * 2, data.len());
    let rounds: Vec<u8> = if decrypt {
        (0..FEISTEL_ROUNDS).rev().collect()
    } else {
        (0..FEISTEL_ROUNDS).collect()
    };
    for round in rounds {
        // One round: L ^= F(R) with the halves swapping roles by parity, so
        // running rounds in reverse order inverts the permutation.
        let (l, r) = data.split_at_mut(half);
        let (target, source) = if round % 2 == 0 { (l, r) } else { (r, l) };
        let mut hasher = Sha256::new();
        hasher.update(key);
        hasher.update([round]);
        hasher.update(&source);
        let digest = hasher.finalize();
        for (i, byte) in target.iter_mut().enumerate() {
            *byte ^= digest[i % digest.len()];
        }
    }
}
