//! The black box ring abstraction: opaque fixed-length strings, the five
//! axiom operations (random, add, neg, mul, eq), and derived operations
//! built from nothing but those axioms.
//!
//! [`RingOracle`] is the whole interface the recovery side is allowed to
//! see. The reference implementation lives in [`reference`]; its hidden
//! state (the conjugating matrix and the string-transform key) is reachable
//! only through harness-side methods on the concrete type, never through
//! the trait.

pub mod reference;

use std::cell::OnceCell;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;

/// Identifies one oracle session. Cryptoelements are bound to the session
/// that produced them; mixing sessions is a usage error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SessionId(u64);

static NEXT_SESSION: AtomicU64 = AtomicU64::new(1);

impl SessionId {
    /// Allocate a process-unique session id. Oracle implementations call
    /// this once at construction.
    pub fn fresh() -> Self {
        SessionId(NEXT_SESSION.fetch_add(1, Ordering::Relaxed))
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// An opaque string handle emitted or computed by a black box ring. Many
/// distinct strings may encrypt the same ring element; only the session's
/// equality operation can tell.
#[derive(Debug, Clone)]
pub struct Cryptoelement {
    session: SessionId,
    bytes: Box<[u8]>,
}

impl Cryptoelement {
    pub fn from_parts(session: SessionId, bytes: Box<[u8]>) -> Self {
        Cryptoelement { session, bytes }
    }

    pub fn session(&self) -> SessionId {
        self.session
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Per-session tallies of axiom invocations. Every oracle call increments
/// exactly one field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QueryCounters {
    pub random: u64,
    pub add: u64,
    pub neg: u64,
    pub mul: u64,
    pub eq: u64,
}

impl QueryCounters {
    pub fn total(&self) -> u64 {
        self.random + self.add + self.neg + self.mul + self.eq
    }

    /// Componentwise difference `self - earlier`; counters are monotone so
    /// this is the query cost of the span between two snapshots.
    pub fn since(&self, earlier: &QueryCounters) -> QueryCounters {
        QueryCounters {
            random: self.random - earlier.random,
            add: self.add - earlier.add,
            neg: self.neg - earlier.neg,
            mul: self.mul - earlier.mul,
            eq: self.eq - earlier.eq,
        }
    }

    pub fn accumulate(&mut self, other: &QueryCounters) {
        self.random += other.random;
        self.add += other.add;
        self.neg += other.neg;
        self.mul += other.mul;
        self.eq += other.eq;
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("cryptoelement from session {found} used with session {expected}")]
    CrossSession { expected: SessionId, found: SessionId },
    #[error("cryptoelement has {got} bytes, session strings have {expected}")]
    WrongLength { expected: usize, got: usize },
    #[error("cryptoelement bytes do not decode to a ring element")]
    Malformed,
}

/// The axiom interface of a black box ring session.
///
/// A session is one logical stream: callers serialize operations on it.
/// Implementations use interior mutability for counters and randomness, so
/// all methods take `&self`; distinct sessions are fully independent.
pub trait RingOracle {
    fn session(&self) -> SessionId;

    /// Length in bytes of every string this session emits.
    fn string_len(&self) -> usize;

    /// A fresh cryptoelement encrypting an independent, uniformly
    /// distributed ring element.
    fn random(&self) -> Cryptoelement;

    fn add(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError>;

    fn neg(&self, x: &Cryptoelement) -> Result<Cryptoelement, OracleError>;

    fn mul(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError>;

    /// Exact: true iff the two strings encrypt the same ring element.
    fn eq(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<bool, OracleError>;

    fn counters(&self) -> QueryCounters;
}

#[derive(Debug, Error)]
pub enum BlackboxError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("multiplicative identity has not been constructed yet")]
    IdentityUnavailable,
    #[error("no invertible element found after {attempts} random draws")]
    IdentitySearchExhausted { attempts: u32 },
}

/// A black box ring session plus the derived operations every algorithm
/// needs: cached zero and identity, powers, commutator squares, and the
/// exponent-based invertibility test.
pub struct BbRing<O: RingOracle> {
    oracle: O,
    zero: OnceCell<Cryptoelement>,
    identity: OnceCell<Cryptoelement>,
}

impl<O: RingOracle> BbRing<O> {
    pub fn new(oracle: O) -> Self {
        BbRing {
            oracle,
            zero: OnceCell::new(),
            identity: OnceCell::new(),
        }
    }

    pub fn oracle(&self) -> &O {
        &self.oracle
    }

    pub fn counters(&self) -> QueryCounters {
        self.oracle.counters()
    }

    pub fn random(&self) -> Cryptoelement {
        self.oracle.random()
    }

    pub fn add(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.oracle.add(x, y)
    }

    pub fn neg(&self, x: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.oracle.neg(x)
    }

    pub fn sub(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        let ny = self.oracle.neg(y)?;
        self.oracle.add(x, &ny)
    }

    pub fn mul(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<Cryptoelement, OracleError> {
        self.oracle.mul(x, y)
    }

    pub fn eq(&self, x: &Cryptoelement, y: &Cryptoelement) -> Result<bool, OracleError> {
        self.oracle.eq(x, y)
    }

    /// The ring zero, computed once as r - r for a random r.
    pub fn zero(&self) -> Result<&Cryptoelement, OracleError> {
        if let Some(z) = self.zero.get() {
            return Ok(z);
        }
        let r = self.oracle.random();
        let z = self.sub(&r, &r)?;
        Ok(self.zero.get_or_init(|| z))
    }

    /// The multiplicative identity, if it has been constructed.
    pub fn identity(&self) -> Result<&Cryptoelement, BlackboxError> {
        self.identity.get().ok_or(BlackboxError::IdentityUnavailable)
    }

    pub fn has_identity(&self) -> bool {
        self.identity.get().is_some()
    }

    /// Construct and cache the identity: draw random r until r^E passes
    /// `probes` two-sided identity probes against fresh random elements.
    /// E must be the exponent q(q^2 - 1) of the session's hidden GL_2.
    ///
    /// Returns the number of draws that were rejected before success.
    pub fn build_identity(
        &self,
        exponent: u128,
        probes: u32,
        budget: u32,
    ) -> Result<u32, BlackboxError> {
        if self.identity.get().is_some() {
            return Ok(0);
        }
        let mut rejected = 0u32;
        for _ in 0..budget.max(1) {
            let r = self.oracle.random();
            let candidate = self.pow_raw(&r, exponent)?;
            let mut ok = true;
            for _ in 0..probes.max(1) {
                let s = self.oracle.random();
                if !self.eq(&self.mul(&candidate, &s)?, &s)?
                    || !self.eq(&self.mul(&s, &candidate)?, &s)?
                {
                    ok = false;
                    break;
                }
            }
            if ok {
                self.identity.get_or_init(|| candidate);
                return Ok(rejected);
            }
            rejected += 1;
        }
        Err(BlackboxError::IdentitySearchExhausted { attempts: rejected })
    }

    /// x^n by square-and-multiply; n = 0 requires the identity to have been
    /// constructed already.
    pub fn pow(&self, x: &Cryptoelement, n: u128) -> Result<Cryptoelement, BlackboxError> {
        if n == 0 {
            return Ok(self.identity()?.clone());
        }
        self.pow_raw(x, n)
    }

    fn pow_raw(&self, x: &Cryptoelement, mut n: u128) -> Result<Cryptoelement, BlackboxError> {
        debug_assert!(n > 0);
        let mut base = x.clone();
        let mut acc: Option<Cryptoelement> = None;
        while n > 0 {
            if n & 1 == 1 {
                acc = Some(match acc {
                    Some(r) => self.mul(&r, &base)?,
                    None => base.clone(),
                });
            }
            n >>= 1;
            if n > 0 {
                base = self.mul(&base, &base)?;
            }
        }
        Ok(acc.expect("n > 0"))
    }

    /// (xy - yx)^2 — always encrypts a scalar matrix.
    pub fn commutator_square(
        &self,
        x: &Cryptoelement,
        y: &Cryptoelement,
    ) -> Result<Cryptoelement, OracleError> {
        let c = self.sub(&self.mul(x, y)?, &self.mul(y, x)?)?;
        self.mul(&c, &c)
    }

    /// True iff x^E encrypts the identity; exact because powers of singular
    /// matrices stay singular.
    pub fn is_invertible(
        &self,
        x: &Cryptoelement,
        exponent: u128,
    ) -> Result<bool, BlackboxError> {
        let e = self.identity()?;
        Ok(self.eq(&self.pow_raw(x, exponent)?, e)?)
    }
}
