//! Group-theoretic toolkit over the invertible cryptoelements of a black
//! box ring session: exact element orders, involutions, Monte Carlo
//! centrality testing, the central-quotient equality that turns the group
//! into its projective image, and Bray's involution-centralizer sampler.
//!
//! Everything here speaks only through [`BbRing`]; no oracle internals.

use std::cell::RefCell;

use rand::Rng;
use thiserror::Error;

use crate::blackbox::{BbRing, BlackboxError, Cryptoelement, OracleError, RingOracle};

#[derive(Debug, Error)]
pub enum GroupError {
    #[error(transparent)]
    Blackbox(#[from] BlackboxError),
    #[error("no invertible element found in {attempts} random draws")]
    InvertibleSearchExhausted { attempts: u32 },
    #[error("no non-commuting pair of odd-order witnesses found in {attempts} draws")]
    WitnessSearchExhausted { attempts: u32 },
    #[error("centralizer sampling budget of {attempts} draws exhausted")]
    SampleBudgetExhausted { attempts: u32 },
}

impl From<OracleError> for GroupError {
    fn from(e: OracleError) -> Self {
        GroupError::Blackbox(e.into())
    }
}

/// E = q(q^2 - 1) together with its prime factorization; the element-order
/// machinery strips primes from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactoredExponent {
    value: u128,
    factors: Vec<(u64, u32)>,
}

impl FactoredExponent {
    /// Factor q(q - 1)(q + 1). Each of the three cofactors is at most
    /// 2^20 + 1, so plain trial division is instant.
    pub fn for_gl2(q: u64) -> Self {
        let mut factors = std::collections::BTreeMap::new();
        for n in [q, q - 1, q + 1] {
            factor_into(n, &mut factors);
        }
        let value = q as u128 * (q as u128 - 1) * (q as u128 + 1);
        FactoredExponent {
            value,
            factors: factors.into_iter().collect(),
        }
    }

    pub fn value(&self) -> u128 {
        self.value
    }

    pub fn factors(&self) -> &[(u64, u32)] {
        &self.factors
    }

    /// Multiplicity of 2 in E.
    pub fn two_multiplicity(&self) -> u32 {
        self.factors
            .iter()
            .find(|(p, _)| *p == 2)
            .map(|(_, m)| *m)
            .unwrap_or(0)
    }
}

fn factor_into(mut n: u64, into: &mut std::collections::BTreeMap<u64, u32>) {
    let mut d = 2u64;
    while d * d <= n {
        while n % d == 0 {
            *into.entry(d).or_insert(0) += 1;
            n /= d;
        }
        d += 1;
    }
    if n > 1 {
        *into.entry(n).or_insert(0) += 1;
    }
}

/// A cryptoelement known to be invertible, i.e. a member of the black box
/// group of units.
#[derive(Debug, Clone)]
pub struct GroupElement {
    handle: Cryptoelement,
}

impl GroupElement {
    /// Wrap a handle the caller has already established to be invertible
    /// (a power or product of invertibles, a verified involution, ...).
    pub fn assume_invertible(handle: Cryptoelement) -> Self {
        GroupElement { handle }
    }

    pub fn handle(&self) -> &Cryptoelement {
        &self.handle
    }

    pub fn into_handle(self) -> Cryptoelement {
        self.handle
    }
}

/// Draw random cryptoelements until one passes the exponent-based
/// invertibility test.
pub fn random_invertible<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    budget: u32,
) -> Result<GroupElement, GroupError> {
    for _ in 0..budget.max(1) {
        let x = ring.random();
        if ring.is_invertible(&x, fe.value())? {
            return Ok(GroupElement::assume_invertible(x));
        }
    }
    Err(GroupError::InvertibleSearchExhausted { attempts: budget })
}

/// x^{-1} = x^{E-1} for invertible x.
pub fn invert<O: RingOracle>(
    ring: &BbRing<O>,
    x: &Cryptoelement,
    fe: &FactoredExponent,
) -> Result<Cryptoelement, GroupError> {
    Ok(ring.pow(x, fe.value() - 1)?)
}

/// Monte Carlo centrality test: x is declared central iff it commutes with
/// `trials` independent random ring elements. One-sided — central elements
/// always pass; a non-central element commutes with only a q^2-element
/// subalgebra of the q^4-element ring, so it slips through one witness with
/// probability at most 1/q^2.
pub fn is_central<O: RingOracle>(
    ring: &BbRing<O>,
    x: &Cryptoelement,
    trials: u32,
) -> Result<bool, GroupError> {
    for _ in 0..trials.max(1) {
        let w = ring.random();
        if !ring.eq(&ring.mul(x, &w)?, &ring.mul(&w, x)?)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Equality notion for group computations: either exact string-oracle
/// equality or equality modulo the center.
pub trait GroupEquality<O: RingOracle> {
    fn eq(
        &self,
        ring: &BbRing<O>,
        x: &Cryptoelement,
        y: &Cryptoelement,
    ) -> Result<bool, GroupError>;

    fn is_identity(&self, ring: &BbRing<O>, x: &Cryptoelement) -> Result<bool, GroupError>;
}

/// Plain oracle equality.
pub struct ExactEquality;

impl<O: RingOracle> GroupEquality<O> for ExactEquality {
    fn eq(
        &self,
        ring: &BbRing<O>,
        x: &Cryptoelement,
        y: &Cryptoelement,
    ) -> Result<bool, GroupError> {
        Ok(ring.eq(x, y)?)
    }

    fn is_identity(&self, ring: &BbRing<O>, x: &Cryptoelement) -> Result<bool, GroupError> {
        Ok(ring.eq(x, ring.identity()?)?)
    }
}

/// Shared state for equality modulo the center.
///
/// The test needs a pair of odd-order witnesses r, s with [r, s] != 1: a
/// non-scalar 2x2 matrix has a commutative centralizer, so any element
/// commuting with both members of a non-commuting pair must be scalar.
/// The pair is searched for once and reused for every subsequent test,
/// which makes the equality exact rather than merely Monte Carlo.
pub struct QuotientContext {
    centrality_trials: u32,
    witnesses: RefCell<Option<(Cryptoelement, Cryptoelement)>>,
}

/// Hard cap on witness-pair draws. Odd-order elements are scarce at q = 3
/// (about a third of the group), so the cap is generous.
const WITNESS_SEARCH_BUDGET: u32 = 1024;

impl QuotientContext {
    pub fn new(centrality_trials: u32) -> Self {
        QuotientContext {
            centrality_trials: centrality_trials.max(8),
            witnesses: RefCell::new(None),
        }
    }

    pub fn centrality_trials(&self) -> u32 {
        self.centrality_trials
    }

    fn witnesses<O: RingOracle>(
        &self,
        ring: &BbRing<O>,
        fe: &FactoredExponent,
    ) -> Result<(Cryptoelement, Cryptoelement), GroupError> {
        if let Some(pair) = self.witnesses.borrow().clone() {
            return Ok(pair);
        }
        let odd_part_power = 1u128 << fe.two_multiplicity();
        for attempt in 0..WITNESS_SEARCH_BUDGET {
            let g = random_invertible(ring, fe, 64)?;
            let h = random_invertible(ring, fe, 64)?;
            let r = ring.pow(g.handle(), odd_part_power)?;
            let s = ring.pow(h.handle(), odd_part_power)?;
            if !ring.eq(&ring.mul(&r, &s)?, &ring.mul(&s, &r)?)? {
                let pair = (r, s);
                *self.witnesses.borrow_mut() = Some(pair.clone());
                return Ok(pair);
            }
            let _ = attempt;
        }
        Err(GroupError::WitnessSearchExhausted {
            attempts: WITNESS_SEARCH_BUDGET,
        })
    }
}

/// Equality in the central quotient: x = y iff x^{-1} y is scalar.
pub struct CentralQuotient<'a> {
    ctx: &'a QuotientContext,
    fe: &'a FactoredExponent,
}

impl<'a> CentralQuotient<'a> {
    pub fn new(ctx: &'a QuotientContext, fe: &'a FactoredExponent) -> Self {
        CentralQuotient { ctx, fe }
    }
}

impl<O: RingOracle> GroupEquality<O> for CentralQuotient<'_> {
    fn eq(
        &self,
        ring: &BbRing<O>,
        x: &Cryptoelement,
        y: &Cryptoelement,
    ) -> Result<bool, GroupError> {
        let x_inv = invert(ring, x, self.fe)?;
        let d = ring.mul(&x_inv, y)?;
        self.is_identity(ring, &d)
    }

    fn is_identity(&self, ring: &BbRing<O>, x: &Cryptoelement) -> Result<bool, GroupError> {
        let (r, s) = self.ctx.witnesses(ring, self.fe)?;
        Ok(ring.eq(&ring.mul(x, &r)?, &ring.mul(&r, x)?)?
            && ring.eq(&ring.mul(x, &s)?, &ring.mul(&s, x)?)?)
    }
}

/// Equality in the black box projective group: true iff x and y differ by
/// a scalar.
pub fn quotient_eq<O: RingOracle>(
    ring: &BbRing<O>,
    ctx: &QuotientContext,
    fe: &FactoredExponent,
    x: &Cryptoelement,
    y: &Cryptoelement,
) -> Result<bool, GroupError> {
    CentralQuotient::new(ctx, fe).eq(ring, x, y)
}

/// Exact multiplicative order of an invertible element under the given
/// equality: start from E and strip primes while the power stays trivial.
pub fn element_order_with<O: RingOracle, Eq: GroupEquality<O>>(
    ring: &BbRing<O>,
    x: &Cryptoelement,
    fe: &FactoredExponent,
    eq: &Eq,
) -> Result<u128, GroupError> {
    let mut order = fe.value();
    for &(p, mult) in fe.factors() {
        let p = p as u128;
        for _ in 0..mult {
            if order % p != 0 {
                break;
            }
            let candidate = order / p;
            let y = ring.pow(x, candidate)?;
            if eq.is_identity(ring, &y)? {
                order = candidate;
            } else {
                break;
            }
        }
    }
    Ok(order)
}

/// Exact multiplicative order in the group of units.
pub fn element_order<O: RingOracle>(
    ring: &BbRing<O>,
    g: &GroupElement,
    fe: &FactoredExponent,
) -> Result<u128, GroupError> {
    element_order_with(ring, g.handle(), fe, &ExactEquality)
}

/// g^{ord(g)/2} when ord(g) is even — an involution; absent for odd order.
pub fn involution_from<O: RingOracle>(
    ring: &BbRing<O>,
    g: &GroupElement,
    fe: &FactoredExponent,
) -> Result<Option<GroupElement>, GroupError> {
    let order = element_order(ring, g, fe)?;
    if order % 2 != 0 {
        return Ok(None);
    }
    let t = ring.pow(g.handle(), order / 2)?;
    Ok(Some(GroupElement::assume_invertible(t)))
}

/// One draw of Bray's centralizer construction.
#[derive(Debug, Clone)]
pub enum BraySample {
    /// Odd-order commutator branch: g [t,g]^k, uniformly distributed over
    /// the centralizer of t when g is uniform over the group.
    Centralizing(GroupElement),
    /// Even-order branch: [t,g]^k, an involution commuting with t.
    Involution(GroupElement),
}

impl BraySample {
    pub fn element(&self) -> &GroupElement {
        match self {
            BraySample::Centralizing(g) | BraySample::Involution(g) => g,
        }
    }
}

/// Bray's trick: draw random g, form c = [t, g] = t g^{-1} t g, read off its
/// order 2k+1 or 2k under `eq`, and return g c^k (odd case, uniform in the
/// centralizer) or c^k (even case, an involution in the centralizer).
///
/// `t` must be an exact involution: t^2 = e under plain oracle equality.
pub fn bray_centralizer_sample<O: RingOracle, Eq: GroupEquality<O>>(
    ring: &BbRing<O>,
    t: &Cryptoelement,
    fe: &FactoredExponent,
    eq: &Eq,
) -> Result<BraySample, GroupError> {
    let g = random_invertible(ring, fe, 64)?;
    let g_inv = invert(ring, g.handle(), fe)?;
    // c = t g^{-1} t g, using t^{-1} = t.
    let left = ring.mul(t, &g_inv)?;
    let right = ring.mul(t, g.handle())?;
    let c = ring.mul(&left, &right)?;
    let order = element_order_with(ring, &c, fe, eq)?;
    if order == 1 {
        return Ok(BraySample::Centralizing(g));
    }
    let k = order / 2;
    if order % 2 == 1 {
        let correction = ring.pow(&c, k)?;
        let sample = ring.mul(g.handle(), &correction)?;
        Ok(BraySample::Centralizing(GroupElement::assume_invertible(
            sample,
        )))
    } else {
        Ok(BraySample::Involution(GroupElement::assume_invertible(
            ring.pow(&c, k)?,
        )))
    }
}

/// Draw `count` near-uniform elements of the centralizer of t.
///
/// Each output is a fresh odd-branch Bray sample, optionally multiplied by
/// a short word over earlier outputs. A product containing one fresh
/// uniform factor stays uniform and independent of the reused factors, so
/// the mixing can only flatten the distribution.
pub fn random_in_centralizer<O: RingOracle, Eq: GroupEquality<O>, R: Rng>(
    ring: &BbRing<O>,
    t: &Cryptoelement,
    fe: &FactoredExponent,
    eq: &Eq,
    count: usize,
    rng: &mut R,
) -> Result<Vec<GroupElement>, GroupError> {
    let budget = 64 + 16 * count as u32;
    let mut out: Vec<GroupElement> = Vec::with_capacity(count);
    let mut attempts = 0u32;
    while out.len() < count {
        if attempts >= budget {
            return Err(GroupError::SampleBudgetExhausted { attempts });
        }
        attempts += 1;
        let fresh = match bray_centralizer_sample(ring, t, fe, eq)? {
            BraySample::Centralizing(g) => g,
            BraySample::Involution(_) => continue,
        };
        let mut word = fresh.into_handle();
        if !out.is_empty() {
            for _ in 0..rng.gen_range(0..=3usize) {
                let pick = rng.gen_range(0..out.len());
                word = ring.mul(&word, out[pick].handle())?;
            }
        }
        out.push(GroupElement::assume_invertible(word));
    }
    Ok(out)
}
