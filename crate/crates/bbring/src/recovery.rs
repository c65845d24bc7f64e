//! Structure recovery for a black box ring encrypting M2(F_q).
//!
//! Given nothing but the oracle interface and the field order q, the
//! pipeline rebuilds, with opaque handles only:
//!
//! 1. zero and the multiplicative identity (via the exponent E = q(q^2-1)),
//! 2. a generator of random scalars (commutator squares) and with it a
//!    black box view of the field of scalars,
//! 3. a labeled Klein four-group {e, -e, e1, e2} of diagonal sign matrices,
//! 4. an element w of the torus normalizer outside the torus,
//! 5. generators of the Sylow 2-subgroup S of the torus (q - 1 = 2^k l),
//! 6. a chain of dihedral order-8 quotients descending from w^l to an exact
//!    involution that swaps e1 and e2 — the monomial matrix [[0,1],[1,0]],
//! 7. the four matrix units, and finally
//! 8. coordinatization maps both ways between the ring and 2x2 matrices
//!    over the recovered scalar field.
//!
//! All arithmetic goes through [`BbRing`]; parametricity over [`RingOracle`]
//! is what keeps the hidden oracle state out of reach.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::bbgroup::{
    bray_centralizer_sample, involution_from, is_central, random_in_centralizer,
    random_invertible, BraySample, CentralQuotient, ExactEquality, FactoredExponent, GroupError,
    QuotientContext,
};
use crate::blackbox::{BbRing, BlackboxError, Cryptoelement, OracleError, QueryCounters, RingOracle};

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error(transparent)]
    Blackbox(#[from] BlackboxError),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error("retry budget exhausted")]
    RetriesExhausted,
    #[error("no dihedral reflection found at descent level {level}")]
    DescentStuck { level: u32 },
    #[error("structural relation failed: {0}")]
    RelationFailure(&'static str),
    #[error("field order must be odd and at least 3, got {0}")]
    BadOrder(u64),
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
    #[error("scalar argument is not central")]
    NonCentralScalar,
    #[error("scalar argument encrypts zero")]
    ScalarZeroInverse,
}

impl From<OracleError> for RecoveryError {
    fn from(e: OracleError) -> Self {
        RecoveryError::Blackbox(e.into())
    }
}

/// A recovery failure annotated with the pipeline step that caused it and
/// the accounting of everything that ran before the failure.
#[derive(Debug, Error)]
#[error("step '{step}' failed: {error}")]
pub struct RecoveryFailure {
    pub step: &'static str,
    #[source]
    pub error: RecoveryError,
    pub steps: Vec<StepRecord>,
}

/// Tuning knobs for the pipeline. Defaults match the desk-scale failure
/// bounds: 64 retries per step and 40 Sylow generator trials (per-trial
/// success 3/8, so the miss probability is (5/8)^40 < 1e-8).
#[derive(Debug, Clone)]
pub struct RecoveryConfig {
    pub seed: u64,
    pub max_retries_per_step: u32,
    pub centrality_trials: u32,
    pub generator_trials: u32,
    pub homomorphism_sample_size: u32,
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        RecoveryConfig {
            seed: 0,
            max_retries_per_step: 64,
            centrality_trials: 16,
            generator_trials: 40,
            homomorphism_sample_size: 1000,
        }
    }
}

impl RecoveryConfig {
    pub fn validate(&self) -> Result<(), RecoveryError> {
        if self.max_retries_per_step == 0
            || self.centrality_trials == 0
            || self.homomorphism_sample_size == 0
        {
            return Err(RecoveryError::BadConfig("all budgets must be positive"));
        }
        if self.generator_trials < 20 {
            return Err(RecoveryError::BadConfig("generator_trials must be at least 20"));
        }
        Ok(())
    }
}

/// q - 1 = 2^k * l with l odd; the shape of the torus Sylow 2-subgroup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SylowData {
    pub k: u32,
    pub l: u64,
}

impl SylowData {
    pub fn from_order(q: u64) -> Result<Self, RecoveryError> {
        if q < 3 || q % 2 == 0 {
            return Err(RecoveryError::BadOrder(q));
        }
        let mut l = q - 1;
        let mut k = 0u32;
        while l % 2 == 0 {
            l /= 2;
            k += 1;
        }
        Ok(SylowData { k, l })
    }

    /// The descent runs through k dihedral levels.
    pub fn chain_depth(&self) -> u32 {
        self.k
    }
}

/// The labeled Klein four-group of diagonal sign matrices.
#[derive(Debug, Clone)]
pub struct FourGroup {
    pub identity: Cryptoelement,
    pub minus_identity: Cryptoelement,
    pub e1: Cryptoelement,
    pub e2: Cryptoelement,
}

/// The recovered matrix units.
#[derive(Debug, Clone)]
pub struct MatrixUnits {
    pub e11: Cryptoelement,
    pub e12: Cryptoelement,
    pub e21: Cryptoelement,
    pub e22: Cryptoelement,
}

/// Black box view of the field of scalars: its zero and one are the ring's,
/// random elements are commutator squares, inversion is Fermat powering.
#[derive(Debug, Clone)]
pub struct FieldView {
    zero: Cryptoelement,
    one: Cryptoelement,
    q: u64,
}

/// Commutator squares land in the scalars with a near-uniform distribution;
/// this is the random generator of the recovered field.
pub fn scalar_random<O: RingOracle>(ring: &BbRing<O>) -> Result<Cryptoelement, OracleError> {
    let x = ring.random();
    let y = ring.random();
    ring.commutator_square(&x, &y)
}

impl FieldView {
    pub fn q(&self) -> u64 {
        self.q
    }

    pub fn zero(&self) -> &Cryptoelement {
        &self.zero
    }

    pub fn one(&self) -> &Cryptoelement {
        &self.one
    }

    /// Characteristic: the smallest (only) prime dividing q.
    pub fn characteristic(&self) -> u64 {
        let mut p = 3;
        while p * p <= self.q {
            if self.q % p == 0 {
                return p;
            }
            p += 2;
        }
        self.q
    }

    pub fn random<O: RingOracle>(&self, ring: &BbRing<O>) -> Result<Cryptoelement, OracleError> {
        scalar_random(ring)
    }

    /// A random nonzero scalar; zero shows up with probability about 1/q,
    /// so 64 rejections are ample.
    pub fn random_unit<O: RingOracle>(
        &self,
        ring: &BbRing<O>,
    ) -> Result<Cryptoelement, RecoveryError> {
        for _ in 0..64 {
            let z = scalar_random(ring)?;
            if !ring.eq(&z, &self.zero)? {
                return Ok(z);
            }
        }
        Err(RecoveryError::RetriesExhausted)
    }

    /// z^{q-2}, the Fermat inverse; rejects zero.
    pub fn inv<O: RingOracle>(
        &self,
        ring: &BbRing<O>,
        z: &Cryptoelement,
    ) -> Result<Cryptoelement, RecoveryError> {
        if ring.eq(z, &self.zero)? {
            return Err(RecoveryError::ScalarZeroInverse);
        }
        Ok(ring.pow(z, self.q as u128 - 2)?)
    }

    /// n * one by double-and-add.
    pub fn from_integer<O: RingOracle>(
        &self,
        ring: &BbRing<O>,
        n: u64,
    ) -> Result<Cryptoelement, RecoveryError> {
        let mut n = n % self.characteristic_multiple();
        if n == 0 {
            return Ok(self.zero.clone());
        }
        let mut base = self.one.clone();
        let mut acc: Option<Cryptoelement> = None;
        while n > 0 {
            if n & 1 == 1 {
                acc = Some(match acc {
                    Some(r) => ring.add(&r, &base)?,
                    None => base.clone(),
                });
            }
            n >>= 1;
            if n > 0 {
                base = ring.add(&base, &base)?;
            }
        }
        Ok(acc.expect("n > 0"))
    }

    fn characteristic_multiple(&self) -> u64 {
        self.characteristic()
    }
}

/// Assemble the black box scalar field once the identity exists.
pub fn build_black_box_field<O: RingOracle>(
    ring: &BbRing<O>,
    q: u64,
) -> Result<FieldView, RecoveryError> {
    Ok(FieldView {
        zero: ring.zero()?.clone(),
        one: ring.identity()?.clone(),
        q,
    })
}

/// Entries of a coordinatized ring element: four scalar handles, row-major.
#[derive(Debug, Clone)]
pub struct ScalarMatrix {
    pub entries: [Cryptoelement; 4],
}

/// Everything the recovery produces: the structural proxy giving the
/// two-way identification of the ring with 2x2 matrices over the black box
/// scalar field.
#[derive(Debug, Clone)]
pub struct StructuralProxy {
    pub four_group: FourGroup,
    /// The swap involution: conjugation by it exchanges e1 and e2; it plays
    /// the matrix [[0,1],[1,0]].
    pub swap: Cryptoelement,
    pub units: MatrixUnits,
    pub sylow: SylowData,
    pub field: FieldView,
    pub exponent: FactoredExponent,
}

// ---- pipeline steps ---------------------------------------------------------

/// Draw random invertibles and power them down to involutions until a
/// non-central one appears. All non-central involutions are conjugate, so
/// the result may be labeled diag(-1, 1) without loss of generality.
pub fn find_noncentral_involution<O: RingOracle>(
    ring: &BbRing<O>,
    fe: &FactoredExponent,
    cfg: &RecoveryConfig,
) -> Result<(Cryptoelement, u32), RecoveryError> {
    let mut retries = 0;
    for _ in 0..cfg.max_retries_per_step {
        let g = random_invertible(ring, fe, 64)?;
        if let Some(t) = involution_from(ring, &g, fe)? {
            if !is_central(ring, t.handle(), cfg.centrality_trials)? {
                return Ok((t.into_handle(), retries));
            }
        }
        retries += 1;
    }
    Err(RecoveryError::RetriesExhausted)
}

/// Find a second involution in the centralizer of e1 and close up: the
/// centralizer is the diagonal torus, whose involutions are exactly
/// {-e, e1, e2}, so one new involution determines the whole four-group.
pub fn build_four_group<O: RingOracle>(
    ring: &BbRing<O>,
    e1: &Cryptoelement,
    fe: &FactoredExponent,
    cfg: &RecoveryConfig,
) -> Result<(FourGroup, u32), RecoveryError> {
    let identity = ring.identity()?.clone();
    let mut retries = 0;
    for _ in 0..cfg.max_retries_per_step {
        let candidate = match bray_centralizer_sample(ring, e1, fe, &ExactEquality)? {
            BraySample::Involution(t) => Some(t),
            BraySample::Centralizing(g) => involution_from(ring, &g, fe)?,
        };
        let Some(j) = candidate else {
            retries += 1;
            continue;
        };
        let j = j.into_handle();
        if ring.eq(&j, &identity)? || ring.eq(&j, e1)? {
            retries += 1;
            continue;
        }
        // j is -e or e2; the central one of {j, e1 j} is -e either way.
        let minus_identity = if is_central(ring, &j, cfg.centrality_trials)? {
            j
        } else {
            ring.mul(e1, &j)?
        };
        let e2 = ring.mul(&minus_identity, e1)?;

        let four = FourGroup {
            identity: identity.clone(),
            minus_identity,
            e1: e1.clone(),
            e2,
        };
        if four_group_relations_hold(ring, &four)?
            && is_central(ring, &four.minus_identity, cfg.centrality_trials)?
            && !is_central(ring, &four.e2, cfg.centrality_trials)?
        {
            return Ok((four, retries));
        }
        retries += 1;
    }
    Err(RecoveryError::RetriesExhausted)
}

fn four_group_relations_hold<O: RingOracle>(
    ring: &BbRing<O>,
    four: &FourGroup,
) -> Result<bool, RecoveryError> {
    let e = &four.identity;
    let sq = |x: &Cryptoelement| -> Result<Cryptoelement, OracleError> { ring.mul(x, x) };
    Ok(ring.eq(&sq(&four.minus_identity)?, e)?
        && ring.eq(&sq(&four.e1)?, e)?
        && ring.eq(&sq(&four.e2)?, e)?
        && !ring.eq(&four.e2, e)?
        && !ring.eq(&four.e2, &four.e1)?
        && !ring.eq(&four.minus_identity, e)?
        && ring.eq(&ring.mul(&four.e1, &four.e2)?, &four.minus_identity)?
        && ring.eq(&ring.mul(&four.e2, &four.e1)?, &four.minus_identity)?
        && ring.eq(&ring.mul(&four.minus_identity, &four.e2)?, &four.e1)?)
}

/// Sample the centralizer of the image of e1 in the central quotient and
/// keep the first sample that conjugates e1 to e2 (rather than fixing it):
/// such an element lies in the torus normalizer but outside the torus.
///
/// Any member w of the quotient centralizer satisfies w^{-1} e1 w = ±e1
/// exactly, so the classification is an exact dichotomy.
pub fn find_torus_normalizer_element<O: RingOracle>(
    ring: &BbRing<O>,
    four: &FourGroup,
    fe: &FactoredExponent,
    ctx: &QuotientContext,
    cfg: &RecoveryConfig,
) -> Result<(Cryptoelement, u32), RecoveryError> {
    let quotient = CentralQuotient::new(ctx, fe);
    let mut retries = 0;
    for _ in 0..cfg.max_retries_per_step {
        let sample = bray_centralizer_sample(ring, &four.e1, fe, &quotient)?;
        let w = sample.element().handle().clone();
        match classify_normalizer_sample(ring, four, fe, &w)? {
            NormalizerSide::Swapping => return Ok((w, retries)),
            NormalizerSide::Torus | NormalizerSide::Neither => retries += 1,
        }
    }
    Err(RecoveryError::RetriesExhausted)
}

pub(crate) enum NormalizerSide {
    /// w^{-1} e1 w = e2: normalizer coset outside the torus.
    Swapping,
    /// w^{-1} e1 w = e1: inside the torus.
    Torus,
    /// Sample was not in the quotient centralizer at all.
    Neither,
}

pub(crate) fn classify_normalizer_sample<O: RingOracle>(
    ring: &BbRing<O>,
    four: &FourGroup,
    fe: &FactoredExponent,
    w: &Cryptoelement,
) -> Result<NormalizerSide, RecoveryError> {
    let w_inv = crate::bbgroup::invert(ring, w, fe)?;
    let conj = ring.mul(&ring.mul(&w_inv, &four.e1)?, w)?;
    if ring.eq(&conj, &four.e2)? {
        Ok(NormalizerSide::Swapping)
    } else if ring.eq(&conj, &four.e1)? {
        Ok(NormalizerSide::Torus)
    } else {
        Ok(NormalizerSide::Neither)
    }
}

/// Draw torus elements t1, t2 and project them to the Sylow 2-subgroup by
/// powering with the odd cofactor l. The pair generates the whole Sylow
/// subgroup exactly when u = s1^{2^{k-1}} and v = s2^{2^{k-1}} are distinct
/// non-identity involutions, which happens with probability 3/8 per trial.
pub fn sylow2_generators<O: RingOracle, R: Rng>(
    ring: &BbRing<O>,
    e1: &Cryptoelement,
    sylow: &SylowData,
    fe: &FactoredExponent,
    cfg: &RecoveryConfig,
    rng: &mut R,
) -> Result<(Cryptoelement, Cryptoelement, u32), RecoveryError> {
    let identity = ring.identity()?.clone();
    let half_exp = 1u128 << (sylow.k - 1);
    for trial in 0..cfg.generator_trials {
        let torus = random_in_centralizer(ring, e1, fe, &ExactEquality, 2, rng)?;
        let s1 = ring.pow(torus[0].handle(), sylow.l as u128)?;
        let s2 = ring.pow(torus[1].handle(), sylow.l as u128)?;
        let u = ring.pow(&s1, half_exp)?;
        let v = ring.pow(&s2, half_exp)?;
        if !ring.eq(&u, &identity)? && !ring.eq(&v, &identity)? && !ring.eq(&u, &v)? {
            return Ok((s1, s2, trial));
        }
    }
    Err(RecoveryError::RetriesExhausted)
}

/// Membership in the i-th layer of the Sylow chain: s is in S_i iff
/// s^{2^i} = e. Valid for any s in the Sylow 2-subgroup.
pub fn sylow_membership<O: RingOracle>(
    ring: &BbRing<O>,
    s: &Cryptoelement,
    i: u32,
) -> Result<bool, RecoveryError> {
    let power = ring.pow(s, 1u128 << i)?;
    Ok(ring.eq(&power, ring.identity()?)?)
}

/// Descend through the dihedral order-8 quotients D_i = S_{i+1}<r_{i+1}>/S_i,
/// level k-1 down to 0, picking at each level a reflection of the quotient:
/// a coset candidate x with x^2 in S_i that moreover acts non-trivially on
/// S_{i+1}/S_i. The final element squares to e exactly and conjugates
/// e1 to e2.
pub fn dihedral_descent<O: RingOracle>(
    ring: &BbRing<O>,
    four: &FourGroup,
    s1: &Cryptoelement,
    s2: &Cryptoelement,
    w: &Cryptoelement,
    sylow: &SylowData,
) -> Result<Cryptoelement, RecoveryError> {
    let k = sylow.k;
    // Everything in S<r> has order dividing 2^{k+1}.
    let two_power_inverse = |x: &Cryptoelement| -> Result<Cryptoelement, RecoveryError> {
        Ok(ring.pow(x, (1u128 << (k + 1)) - 1)?)
    };
    let commutes_mod_level =
        |gen: &Cryptoelement, x: &Cryptoelement, x_inv: &Cryptoelement, i: u32| -> Result<bool, RecoveryError> {
            // [gen, x] = gen^{-1} x^{-1} gen x, tested against S_i.
            let gen_inv = two_power_inverse(gen)?;
            let c = ring.mul(&ring.mul(&gen_inv, x_inv)?, &ring.mul(gen, x)?)?;
            sylow_membership(ring, &c, i)
        };

    let mut r = ring.pow(w, sylow.l as u128)?;
    for i in (0..k).rev() {
        let shift = 1u128 << (k - i - 1);
        let u = ring.pow(s1, shift)?;
        let v = ring.pow(s2, shift)?;
        let uv = ring.mul(&u, &v)?;
        let candidates = [
            r.clone(),
            ring.mul(&u, &r)?,
            ring.mul(&v, &r)?,
            ring.mul(&uv, &r)?,
        ];
        let mut chosen = None;
        for x in candidates {
            let x_sq = ring.mul(&x, &x)?;
            if !sylow_membership(ring, &x_sq, i)? {
                continue;
            }
            // Reflections must act: at least one of the level generators
            // fails to commute with x modulo S_i. Generation of the Sylow
            // subgroup guarantees one of them always witnesses this.
            let x_inv = two_power_inverse(&x)?;
            if !commutes_mod_level(&u, &x, &x_inv, i)?
                || !commutes_mod_level(&v, &x, &x_inv, i)?
            {
                chosen = Some(x);
                break;
            }
        }
        r = chosen.ok_or(RecoveryError::DescentStuck { level: i })?;
    }

    // The selected element is an exact involution in the normalizer coset.
    let identity = ring.identity()?;
    if !ring.eq(&ring.mul(&r, &r)?, identity)? {
        return Err(RecoveryError::RelationFailure("swap involution squares to e"));
    }
    let conj = ring.mul(&ring.mul(&r, &four.e1)?, &r)?;
    if !ring.eq(&conj, &four.e2)? {
        return Err(RecoveryError::RelationFailure("swap involution exchanges e1 and e2"));
    }
    Ok(r)
}

/// Matrix units from the four-group and the swap involution:
/// e11 = (e + e2)/2, e22 = (e + e1)/2, e21 = r e11, e12 = r e22, with 1/2
/// obtained by Fermat inversion of e + e inside the ring. If the full
/// relation set fails, the e1/e2 labeling is swapped once and rebuilt.
pub fn matrix_units<O: RingOracle>(
    ring: &BbRing<O>,
    four: &FourGroup,
    swap: &Cryptoelement,
    q: u64,
) -> Result<(MatrixUnits, FourGroup), RecoveryError> {
    let e = &four.identity;
    let two = ring.add(e, e)?;
    let half = ring.pow(&two, q as u128 - 2)?;

    let mut labels = four.clone();
    for attempt in 0..2 {
        let e11 = ring.mul(&half, &ring.add(e, &labels.e2)?)?;
        let e22 = ring.mul(&half, &ring.add(e, &labels.e1)?)?;
        let e21 = ring.mul(swap, &e11)?;
        let e12 = ring.mul(swap, &e22)?;
        let units = MatrixUnits { e11, e12, e21, e22 };
        if matrix_unit_relations_hold(ring, &units, e)? {
            return Ok((units, labels));
        }
        if attempt == 0 {
            std::mem::swap(&mut labels.e1, &mut labels.e2);
        }
    }
    Err(RecoveryError::RelationFailure("matrix unit relations"))
}

/// All sixteen products e_ab e_cd = delta_bc e_ad, plus e11 + e22 = e.
pub fn matrix_unit_relations_hold<O: RingOracle>(
    ring: &BbRing<O>,
    units: &MatrixUnits,
    identity: &Cryptoelement,
) -> Result<bool, RecoveryError> {
    let zero = ring.zero()?.clone();
    // (row, col, handle) for each unit.
    let labeled = [
        (0usize, 0usize, &units.e11),
        (0, 1, &units.e12),
        (1, 0, &units.e21),
        (1, 1, &units.e22),
    ];
    for &(a, b, x) in &labeled {
        for &(c, d, y) in &labeled {
            let product = ring.mul(x, y)?;
            let expected = if b == c {
                labeled
                    .iter()
                    .find(|&&(r, s, _)| r == a && s == d)
                    .map(|&(_, _, h)| h.clone())
                    .expect("all four units present")
            } else {
                zero.clone()
            };
            if !ring.eq(&product, &expected)? {
                return Ok(false);
            }
        }
    }
    Ok(ring.eq(&ring.add(&units.e11, &units.e22)?, identity)?)
}

/// Number of random witnesses in the cheap centrality spot check used by
/// [`synthesize`].
const SPOT_CENTRALITY_TRIALS: u32 = 2;

/// Express x in coordinates: x_ij = e_ii x e_jj, then fold each corner into
/// a scalar with the swap involution. The result satisfies
/// x = sum z_ij e_ij exactly.
pub fn coordinatize<O: RingOracle>(
    ring: &BbRing<O>,
    proxy: &StructuralProxy,
    x: &Cryptoelement,
) -> Result<ScalarMatrix, RecoveryError> {
    let u = &proxy.units;
    let r = &proxy.swap;
    let corner = |left: &Cryptoelement, right: &Cryptoelement| -> Result<Cryptoelement, OracleError> {
        ring.mul(&ring.mul(left, x)?, right)
    };
    let x11 = corner(&u.e11, &u.e11)?;
    let x22 = corner(&u.e22, &u.e22)?;
    let x12 = corner(&u.e11, &u.e22)?;
    let x21 = corner(&u.e22, &u.e11)?;

    // Diagonal corners: z = x_ii + r x_ii r; off-diagonal: z = r x_ij + x_ij r.
    let z11 = ring.add(&x11, &ring.mul(&ring.mul(r, &x11)?, r)?)?;
    let z22 = ring.add(&x22, &ring.mul(&ring.mul(r, &x22)?, r)?)?;
    let z12 = ring.add(&ring.mul(r, &x12)?, &ring.mul(&x12, r)?)?;
    let z21 = ring.add(&ring.mul(r, &x21)?, &ring.mul(&x21, r)?)?;

    Ok(ScalarMatrix {
        entries: [z11, z12, z21, z22],
    })
}

/// Rebuild a ring element from scalar coordinates: sum z_ij e_ij. Inputs
/// get a spot centrality check; non-scalar arguments are a usage error.
pub fn synthesize<O: RingOracle>(
    ring: &BbRing<O>,
    proxy: &StructuralProxy,
    z: &ScalarMatrix,
) -> Result<Cryptoelement, RecoveryError> {
    for entry in &z.entries {
        if !is_central(ring, entry, SPOT_CENTRALITY_TRIALS)? {
            return Err(RecoveryError::NonCentralScalar);
        }
    }
    let u = &proxy.units;
    let units = [&u.e11, &u.e12, &u.e21, &u.e22];
    let mut acc: Option<Cryptoelement> = None;
    for (entry, unit) in z.entries.iter().zip(units) {
        let term = ring.mul(entry, unit)?;
        acc = Some(match acc {
            Some(total) => ring.add(&total, &term)?,
            None => term,
        });
    }
    Ok(acc.expect("four terms"))
}

// ---- orchestration ----------------------------------------------------------

/// Per-step accounting: retries, exact query counts, wall time.
#[derive(Debug, Clone)]
pub struct StepRecord {
    pub name: &'static str,
    pub retries: u32,
    pub queries: QueryCounters,
    pub millis: u64,
}

struct StepTracker {
    records: Vec<StepRecord>,
}

impl StepTracker {
    fn new() -> Self {
        StepTracker { records: Vec::new() }
    }

    fn run<O: RingOracle, T>(
        &mut self,
        ring: &BbRing<O>,
        name: &'static str,
        f: impl FnOnce() -> Result<(T, u32), RecoveryError>,
    ) -> Result<T, RecoveryFailure> {
        let before = ring.counters();
        let start = std::time::Instant::now();
        let outcome = f();
        let queries = ring.counters().since(&before);
        let millis = start.elapsed().as_millis() as u64;
        match outcome {
            Ok((value, retries)) => {
                self.record(name, retries, queries, millis);
                Ok(value)
            }
            Err(error) => {
                self.record(name, 0, queries, millis);
                Err(RecoveryFailure {
                    step: name,
                    error,
                    steps: self.records.clone(),
                })
            }
        }
    }

    fn record(&mut self, name: &'static str, retries: u32, queries: QueryCounters, millis: u64) {
        if let Some(existing) = self.records.iter_mut().find(|r| r.name == name) {
            existing.retries += retries;
            existing.queries.accumulate(&queries);
            existing.millis += millis;
        } else {
            self.records.push(StepRecord {
                name,
                retries,
                queries,
                millis,
            });
        }
    }
}

/// Run the whole pipeline over one session.
///
/// Deterministic for a fixed oracle stream and configuration: all
/// algorithmic randomness comes from the oracle's random generator and a
/// generator seeded from the configuration.
pub fn recover<O: RingOracle>(
    ring: &BbRing<O>,
    q: u64,
    cfg: &RecoveryConfig,
) -> Result<(StructuralProxy, Vec<StepRecord>), RecoveryFailure> {
    let fail = |step: &'static str, error: RecoveryError| RecoveryFailure {
        step,
        error,
        steps: Vec::new(),
    };

    cfg.validate().map_err(|e| fail("config", e))?;
    if q < 3 || q % 2 == 0 {
        return Err(fail("config", RecoveryError::BadOrder(q)));
    }
    let sylow = SylowData::from_order(q).map_err(|e| fail("config", e))?;
    let fe = FactoredExponent::for_gl2(q);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let mut tracker = StepTracker::new();

    tracker.run(ring, "zero", || Ok((ring.zero()?.clone(), 0)))?;
    tracker.run(ring, "identity", || {
        let retries = ring.build_identity(fe.value(), 3, cfg.max_retries_per_step)?;
        Ok(((), retries))
    })?;
    let field = tracker.run(ring, "scalar_field", || {
        Ok((build_black_box_field(ring, q)?, 0))
    })?;
    let e1 = tracker.run(ring, "involution", || {
        find_noncentral_involution(ring, &fe, cfg)
    })?;
    let four = tracker.run(ring, "four_group", || build_four_group(ring, &e1, &fe, cfg))?;
    let ctx = QuotientContext::new(cfg.centrality_trials);

    // Descent failures restart from fresh w and Sylow generators; the
    // budget is shared across restarts.
    let mut last_failure: Option<RecoveryFailure> = None;
    for _ in 0..cfg.max_retries_per_step {
        let w = match tracker.run(ring, "normalizer", || {
            find_torus_normalizer_element(ring, &four, &fe, &ctx, cfg)
        }) {
            Ok(w) => w,
            Err(f) => return Err(f),
        };
        let (s1, s2) = match tracker.run(ring, "sylow_generators", || {
            sylow2_generators(ring, &four.e1, &sylow, &fe, cfg, &mut rng)
                .map(|(s1, s2, retries)| ((s1, s2), retries))
        }) {
            Ok(pair) => pair,
            Err(f) => return Err(f),
        };
        let swap = match tracker.run(ring, "dihedral_descent", || {
            dihedral_descent(ring, &four, &s1, &s2, &w, &sylow).map(|r| (r, 0))
        }) {
            Ok(r) => r,
            Err(f @ RecoveryFailure { error: RecoveryError::DescentStuck { .. }, .. }) => {
                last_failure = Some(f);
                continue;
            }
            Err(f) => return Err(f),
        };
        let (units, four) = tracker.run(ring, "matrix_units", || {
            matrix_units(ring, &four, &swap, q).map(|v| (v, 0))
        })?;

        let proxy = StructuralProxy {
            four_group: four,
            swap,
            units,
            sylow,
            field,
            exponent: fe,
        };
        return Ok((proxy, tracker.records));
    }
    Err(last_failure.unwrap_or(RecoveryFailure {
        step: "dihedral_descent",
        error: RecoveryError::RetriesExhausted,
        steps: tracker.records,
    }))
}

// ---- verification suite ------------------------------------------------------

/// One named verification outcome.
#[derive(Debug, Clone)]
pub struct CheckRecord {
    pub name: &'static str,
    pub pass: bool,
}

/// Run the full invariant suite against a recovered proxy: the four-group
/// table, all matrix-unit relations, the swap conjugation action, both
/// round trips, additive and multiplicative homomorphism of the
/// coordinatization, and the field axioms of the scalar view. All checks
/// are exact oracle-equality tests; sampled ones use fresh oracle randoms.
pub fn verify_proxy<O: RingOracle>(
    ring: &BbRing<O>,
    proxy: &StructuralProxy,
    cfg: &RecoveryConfig,
) -> Result<Vec<CheckRecord>, RecoveryError> {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, pass: bool| checks.push(CheckRecord { name, pass });

    push("four_group", four_group_relations_hold(ring, &proxy.four_group)?
        && is_central(ring, &proxy.four_group.minus_identity, cfg.centrality_trials)?
        && !is_central(ring, &proxy.four_group.e1, cfg.centrality_trials)?
        && !is_central(ring, &proxy.four_group.e2, cfg.centrality_trials)?);

    push(
        "matrix_units",
        matrix_unit_relations_hold(ring, &proxy.units, &proxy.four_group.identity)?,
    );

    // Swap action: r^2 = e, r e1 r = e2, r e11 r = e22, r e12 r = e21.
    let swap_ok = {
        let r = &proxy.swap;
        let e = &proxy.four_group.identity;
        let conj = |x: &Cryptoelement| -> Result<Cryptoelement, OracleError> {
            ring.mul(&ring.mul(r, x)?, r)
        };
        ring.eq(&ring.mul(r, r)?, e)?
            && ring.eq(&conj(&proxy.four_group.e1)?, &proxy.four_group.e2)?
            && ring.eq(&conj(&proxy.units.e11)?, &proxy.units.e22)?
            && ring.eq(&conj(&proxy.units.e12)?, &proxy.units.e21)?
    };
    push("swap_conjugation", swap_ok);

    // Two-way isomorphism on random pairs.
    let n = cfg.homomorphism_sample_size as usize;
    let mut round_trip = true;
    let mut additive = true;
    let mut multiplicative = true;
    let mut scalar_centrality = true;
    for i in 0..n {
        let x = ring.random();
        let y = ring.random();
        let cx = coordinatize(ring, proxy, &x)?;
        let cy = coordinatize(ring, proxy, &y)?;

        if i < 32 {
            for entry in cx.entries.iter() {
                scalar_centrality &= is_central(ring, entry, cfg.centrality_trials)?;
            }
        }

        round_trip &= ring.eq(&synthesize(ring, proxy, &cx)?, &x)?;

        let sum = ring.add(&x, &y)?;
        let csum = coordinatize(ring, proxy, &sum)?;
        for j in 0..4 {
            let expect = ring.add(&cx.entries[j], &cy.entries[j])?;
            additive &= ring.eq(&csum.entries[j], &expect)?;
        }

        let product = ring.mul(&x, &y)?;
        let cproduct = coordinatize(ring, proxy, &product)?;
        // 2x2 matrix product over the scalar view.
        for (row, col, idx) in [(0, 0, 0usize), (0, 1, 1), (1, 0, 2), (1, 1, 3)] {
            let a = ring.mul(&cx.entries[2 * row], &cy.entries[col])?;
            let b = ring.mul(&cx.entries[2 * row + 1], &cy.entries[2 + col])?;
            let expect = ring.add(&a, &b)?;
            multiplicative &= ring.eq(&cproduct.entries[idx], &expect)?;
        }
    }
    push("round_trip", round_trip);
    push("additive_homomorphism", additive);
    push("multiplicative_homomorphism", multiplicative);
    push("scalar_centrality", scalar_centrality);

    // Reverse round trip: synthesize then coordinatize on random scalars.
    let mut reverse = true;
    for _ in 0..(n / 5).clamp(32, 200) {
        let z = ScalarMatrix {
            entries: [
                proxy.field.random(ring)?,
                proxy.field.random(ring)?,
                proxy.field.random(ring)?,
                proxy.field.random(ring)?,
            ],
        };
        let x = synthesize(ring, proxy, &z)?;
        let back = coordinatize(ring, proxy, &x)?;
        for j in 0..4 {
            reverse &= ring.eq(&back.entries[j], &z.entries[j])?;
        }
    }
    push("reverse_round_trip", reverse);

    // Scalar field: commutativity, Fermat inversion, Frobenius fixed field.
    let view = &proxy.field;
    let mut commutative = true;
    for _ in 0..500 {
        let a = view.random(ring)?;
        let b = view.random(ring)?;
        commutative &= ring.eq(&ring.mul(&a, &b)?, &ring.mul(&b, &a)?)?;
    }
    push("field_commutativity", commutative);

    let mut inversion = true;
    for _ in 0..200 {
        let z = view.random_unit(ring)?;
        let inv = view.inv(ring, &z)?;
        inversion &= ring.eq(&ring.mul(&z, &inv)?, view.one())?;
    }
    inversion &= ring.eq(&view.inv(ring, view.one())?, view.one())?;
    push("field_inversion", inversion);

    let mut frobenius = true;
    for _ in 0..200 {
        let z = view.random(ring)?;
        frobenius &= ring.eq(&ring.pow(&z, view.q() as u128)?, &z)?;
    }
    push("field_frobenius", frobenius);

    // Prime subfield has exactly p elements: 1 != 0 and p * 1 = 0 pin the
    // additive order of one to p; small p also gets the literal pairwise
    // distinctness of {n * one}.
    let p = view.characteristic();
    let mut subfield = !ring.eq(view.one(), view.zero())?;
    let p_times_one = {
        // double-and-add without the modular reduction of from_integer
        let mut ncopy = p;
        let mut base = view.one().clone();
        let mut acc: Option<Cryptoelement> = None;
        while ncopy > 0 {
            if ncopy & 1 == 1 {
                acc = Some(match acc {
                    Some(r) => ring.add(&r, &base)?,
                    None => base.clone(),
                });
            }
            ncopy >>= 1;
            if ncopy > 0 {
                base = ring.add(&base, &base)?;
            }
        }
        acc.expect("p > 0")
    };
    subfield &= ring.eq(&p_times_one, view.zero())?;
    if p <= 64 {
        let mut reps = Vec::with_capacity(p as usize);
        let mut current = view.zero().clone();
        for _ in 0..p {
            reps.push(current.clone());
            current = ring.add(&current, view.one())?;
        }
        for i in 0..reps.len() {
            for j in (i + 1)..reps.len() {
                subfield &= !ring.eq(&reps[i], &reps[j])?;
            }
        }
    }
    push("prime_subfield", subfield);

    Ok(checks)
}
