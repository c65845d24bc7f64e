//! Brute-force matching of the explicit field F_q onto the recovered black
//! box scalar field, feasible for small q only.
//!
//! The prime subfield maps as n -> n * one. For extension fields the match
//! finds a multiplicative generator of the scalar view by order testing,
//! then locates the exponent that makes the explicit primitive element's
//! minimal polynomial vanish; that pins down a field isomorphism, which is
//! verified on random pairs before being returned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::blackbox::{BbRing, Cryptoelement, OracleError, RingOracle};
use crate::field::{FieldParams, FqElement};
use crate::recovery::{FieldView, RecoveryError};

/// The matcher enumerates the whole field; orders past this are out of its
/// desk-scale scope.
pub const MATCH_MAX_ORDER: u64 = 1 << 10;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("explicit field matching is brute force and limited to q <= {bound}, got {q}")]
    Unsupported { q: u64, bound: u64 },
    #[error("no multiplicative generator found among {attempts} scalar samples")]
    GeneratorSearchExhausted { attempts: u32 },
    #[error("no exponent matched the minimal polynomial of the primitive element")]
    NoEmbedding,
    #[error("candidate map failed the isomorphism spot check")]
    VerificationFailed,
    #[error(transparent)]
    Recovery(#[from] RecoveryError),
}

impl From<OracleError> for MatchError {
    fn from(e: OracleError) -> Self {
        MatchError::Recovery(e.into())
    }
}

impl From<crate::blackbox::BlackboxError> for MatchError {
    fn from(e: crate::blackbox::BlackboxError) -> Self {
        MatchError::Recovery(e.into())
    }
}

/// An isomorphism F_q -> Z, tabulated over the canonical enumeration of
/// the explicit field.
pub struct FieldMatch {
    images: Vec<Cryptoelement>,
}

impl FieldMatch {
    /// Image of the element with the given canonical index.
    pub fn image_by_index(&self, index: u64) -> &Cryptoelement {
        &self.images[index as usize]
    }

    pub fn image(&self, params: &FieldParams, a: &FqElement) -> &Cryptoelement {
        self.image_by_index(params.element_index(a))
    }

    pub fn images(&self) -> &[Cryptoelement] {
        &self.images
    }
}

pub fn explicit_field_match<O: RingOracle>(
    ring: &BbRing<O>,
    view: &FieldView,
    params: &FieldParams,
    seed: u64,
) -> Result<FieldMatch, MatchError> {
    let q = params.q();
    if q > MATCH_MAX_ORDER {
        return Err(MatchError::Unsupported {
            q,
            bound: MATCH_MAX_ORDER,
        });
    }

    let images = if params.m() == 1 {
        let mut images = Vec::with_capacity(q as usize);
        for n in 0..q {
            images.push(view.from_integer(ring, n)?);
        }
        images
    } else {
        extension_match(ring, view, params)?
    };

    let matched = FieldMatch { images };
    verify_match(ring, params, &matched, seed)?;
    Ok(matched)
}

fn extension_match<O: RingOracle>(
    ring: &BbRing<O>,
    view: &FieldView,
    params: &FieldParams,
) -> Result<Vec<Cryptoelement>, MatchError> {
    let q = params.q();
    let group_order = q - 1;
    let prime_divisors = distinct_primes(group_order);

    // A multiplicative generator of the scalar view, by order testing.
    const GENERATOR_BUDGET: u32 = 256;
    let mut generator = None;
    for _ in 0..GENERATOR_BUDGET {
        let z = view.random_unit(ring)?;
        let mut full_order = true;
        for &r in &prime_divisors {
            let power = ring.pow(&z, (group_order / r) as u128)?;
            if ring.eq(&power, view.one())? {
                full_order = false;
                break;
            }
        }
        if full_order {
            generator = Some(z);
            break;
        }
    }
    let zeta = generator.ok_or(MatchError::GeneratorSearchExhausted {
        attempts: GENERATOR_BUDGET,
    })?;

    // All powers of the generator, zeta^0 .. zeta^{q-2}.
    let mut powers = Vec::with_capacity(group_order as usize);
    powers.push(view.one().clone());
    for t in 1..group_order {
        let prev = &powers[t as usize - 1];
        powers.push(ring.mul(prev, &zeta)?);
    }

    // Explicit primitive element and its powers.
    let gamma = explicit_primitive_element(params);
    let mut gamma_powers = Vec::with_capacity(group_order as usize);
    gamma_powers.push(params.one());
    for t in 1..group_order {
        let prev = &gamma_powers[t as usize - 1];
        gamma_powers.push(params.mul(prev, &gamma));
    }

    let minpoly = minimal_polynomial(params, &gamma);

    // gamma -> zeta^j extends to a field map iff minpoly(zeta^j) = 0.
    let zero = view.zero().clone();
    let mut exponent = None;
    'search: for j in 1..group_order {
        if gcd(j, group_order) != 1 {
            continue;
        }
        let mut value = zero.clone();
        for (i, &coeff) in minpoly.iter().enumerate() {
            if coeff == 0 {
                continue;
            }
            let basis = &powers[(j as usize * i) % group_order as usize];
            let term = scalar_multiple(ring, basis, coeff)?;
            value = ring.add(&value, &term)?;
        }
        if ring.eq(&value, &zero)? {
            exponent = Some(j);
            break 'search;
        }
    }
    let j = exponent.ok_or(MatchError::NoEmbedding)?;

    let mut images = vec![zero; q as usize];
    for t in 0..group_order {
        let idx = params.element_index(&gamma_powers[t as usize]) as usize;
        images[idx] = powers[(j as usize * t as usize) % group_order as usize].clone();
    }
    Ok(images)
}

/// n * x through repeated oracle addition (double-and-add), n >= 1.
fn scalar_multiple<O: RingOracle>(
    ring: &BbRing<O>,
    x: &Cryptoelement,
    mut n: u64,
) -> Result<Cryptoelement, OracleError> {
    debug_assert!(n >= 1);
    let mut base = x.clone();
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
    Ok(acc.expect("n >= 1"))
}

fn verify_match<O: RingOracle>(
    ring: &BbRing<O>,
    params: &FieldParams,
    matched: &FieldMatch,
    seed: u64,
) -> Result<(), MatchError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let q = params.q();
    for _ in 0..100 {
        let a = params.element_from_index(rng.gen_range(0..q));
        let b = params.element_from_index(rng.gen_range(0..q));
        let ia = matched.image(params, &a);
        let ib = matched.image(params, &b);
        let sum_image = matched.image(params, &params.add(&a, &b));
        if !ring.eq(&ring.add(ia, ib)?, sum_image)? {
            return Err(MatchError::VerificationFailed);
        }
        let product_image = matched.image(params, &params.mul(&a, &b));
        if !ring.eq(&ring.mul(ia, ib)?, product_image)? {
            return Err(MatchError::VerificationFailed);
        }
    }
    Ok(())
}

/// Smallest explicit element of full multiplicative order.
fn explicit_primitive_element(params: &FieldParams) -> FqElement {
    let q = params.q();
    for idx in 1..q {
        let candidate = params.element_from_index(idx);
        let mut power = candidate.clone();
        let mut order = 1u64;
        while power != params.one() {
            power = params.mul(&power, &candidate);
            order += 1;
        }
        if order == q - 1 {
            return candidate;
        }
    }
    unreachable!("every finite field has a primitive element")
}

/// Monic minimal polynomial of a over F_p, constant-first including the
/// leading 1. For a primitive element of F_{p^m} the degree is m.
fn minimal_polynomial(params: &FieldParams, a: &FqElement) -> Vec<u64> {
    let m = params.m() as usize;
    let p = params.p();
    // Solve a^m = sum_{i<m} c_i a^i coefficientwise over F_p.
    let mut matrix = vec![vec![0u64; m + 1]; m];
    let mut power = params.one();
    for col in 0..=m {
        for (row, item) in matrix.iter_mut().enumerate() {
            item[col] = power.coeffs()[row];
        }
        if col < m {
            power = params.mul(&power, a);
        }
    }
    let solution = solve_mod_p(p, &mut matrix).expect("powers of a primitive element span");
    let mut coeffs = Vec::with_capacity(m + 1);
    for c in solution {
        coeffs.push((p - c % p) % p); // x^m - sum c_i x^i
    }
    coeffs.push(1);
    coeffs
}

/// Gaussian elimination over F_p on an augmented m x (m+1) system.
fn solve_mod_p(p: u64, matrix: &mut [Vec<u64>]) -> Option<Vec<u64>> {
    let m = matrix.len();
    let modinv = |a: u64| -> u64 {
        // p is prime; Fermat inverse.
        let mut result = 1u64;
        let mut base = a % p;
        let mut e = p - 2;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base % p;
            }
            base = base * base % p;
            e >>= 1;
        }
        result
    };
    for col in 0..m {
        let pivot = (col..m).find(|&r| matrix[r][col] != 0)?;
        matrix.swap(col, pivot);
        let inv = modinv(matrix[col][col]);
        for entry in matrix[col].iter_mut() {
            *entry = *entry * inv % p;
        }
        for row in 0..m {
            if row == col || matrix[row][col] == 0 {
                continue;
            }
            let factor = matrix[row][col];
            for c in 0..=m {
                let sub = factor * matrix[col][c] % p;
                matrix[row][c] = (matrix[row][c] + p - sub) % p;
            }
        }
    }
    Some((0..m).map(|r| matrix[r][m]).collect())
}

fn distinct_primes(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbgroup::FactoredExponent;
    use crate::blackbox::reference::ReferenceOracle;
    use crate::recovery::build_black_box_field;

    fn matched_view(q: u64, seed: u64) -> (FieldParams, BbRing<ReferenceOracle>, FieldMatch) {
        let params = FieldParams::from_order(q).unwrap();
        let ring = BbRing::new(ReferenceOracle::new(params.clone(), seed));
        let fe = FactoredExponent::for_gl2(q);
        ring.build_identity(fe.value(), 3, 64).unwrap();
        let view = build_black_box_field(&ring, q).unwrap();
        let matched = explicit_field_match(&ring, &view, &params, seed).unwrap();
        (params, ring, matched)
    }

    #[test]
    fn prime_subfield_images_are_distinct() {
        let (_, ring, matched) = matched_view(5, 7);
        for i in 0..5 {
            for j in (i + 1)..5 {
                assert!(!ring
                    .eq(matched.image_by_index(i), matched.image_by_index(j))
                    .unwrap());
            }
        }
    }

    #[test]
    fn extension_match_satisfies_defining_relation() {
        // In F_9 with modulus x^2 + 1, the basis element's image must have
        // square -1.
        let (params, ring, matched) = matched_view(9, 13);
        let x = params.from_coeffs(&[0, 1]);
        let image = matched.image(&params, &x);
        let square = ring.mul(image, image).unwrap();
        let one = matched.image(&params, &params.one());
        let minus_one = ring.neg(one).unwrap();
        assert!(ring.eq(&square, &minus_one).unwrap());
    }

    #[test]
    fn match_is_a_field_isomorphism_on_random_pairs() {
        use rand::{Rng, SeedableRng};
        for q in [5u64, 9, 27] {
            let (params, ring, matched) = matched_view(q, q + 1);
            let mut rng = ChaCha12Rng::seed_from_u64(2024);
            for _ in 0..100 {
                let a = params.element_from_index(rng.gen_range(0..q));
                let b = params.element_from_index(rng.gen_range(0..q));
                let lhs = ring
                    .mul(matched.image(&params, &a), matched.image(&params, &b))
                    .unwrap();
                assert!(ring
                    .eq(&lhs, matched.image(&params, &params.mul(&a, &b)))
                    .unwrap());
            }
        }
    }

    #[test]
    fn match_refuses_large_orders() {
        let params = FieldParams::from_order(65519).unwrap();
        let ring = BbRing::new(ReferenceOracle::new(params.clone(), 1));
        let fe = FactoredExponent::for_gl2(65519);
        ring.build_identity(fe.value(), 3, 64).unwrap();
        let view = build_black_box_field(&ring, 65519).unwrap();
        assert!(matches!(
            explicit_field_match(&ring, &view, &params, 1),
            Err(MatchError::Unsupported { .. })
        ));
    }
}
